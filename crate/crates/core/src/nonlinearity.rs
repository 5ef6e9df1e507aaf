//! The flux `g`, its primitive `g*`, growth metadata, and the truncation `g_h`.

use std::fmt;
use std::sync::{Arc, LazyLock};

use crate::basis::{derivative, Field, SpectralField, Transform};
use crate::error::{Result, ZkError};
use crate::quadrature::{gauss_legendre, integrate_adaptive};
use crate::weights::Cutoff;

/// Relative discarded content above which a flux evaluation is flagged.
pub const ALIASING_THRESHOLD: f64 = 1e-6;

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A user-supplied flux with its derivative.
#[derive(Clone)]
pub struct CustomFlux {
    pub name: String,
    pub g: ScalarFn,
    pub dg: ScalarFn,
    /// growth exponent `b` in `|g'(u)| ≤ c(1 + |u|^b)`
    pub b: f64,
}

#[derive(Clone)]
pub enum Flux {
    /// `Σ c_k u^k`, degree at most 2
    Polynomial(Vec<f64>),
    /// `a sin u`
    Sine(f64),
    Custom(CustomFlux),
}

impl fmt::Debug for Flux {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Flux::Polynomial(c) => write!(f, "Polynomial({c:?})"),
            Flux::Sine(a) => write!(f, "Sine({a})"),
            Flux::Custom(c) => write!(f, "Custom({})", c.name),
        }
    }
}

impl Flux {
    /// `u²/2`
    pub fn zk() -> Self {
        Flux::Polynomial(vec![0.0, 0.0, 0.5])
    }

    /// `u²/2 + c u`
    pub fn zk_with_drift(c: f64) -> Self {
        Flux::Polynomial(vec![0.0, c, 0.5])
    }

    pub fn linear(c: f64) -> Self {
        Flux::Polynomial(vec![0.0, c])
    }

    pub fn zero() -> Self {
        Flux::Polynomial(Vec::new())
    }

    pub fn name(&self) -> String {
        match self {
            Flux::Polynomial(c) => {
                let terms: Vec<String> = c
                    .iter()
                    .enumerate()
                    .filter(|(_, &v)| v != 0.0)
                    .map(|(k, v)| match k {
                        0 => format!("{v}"),
                        1 => format!("{v}*u"),
                        _ => format!("{v}*u^{k}"),
                    })
                    .collect();
                if terms.is_empty() {
                    "0".into()
                } else {
                    terms.join(" + ")
                }
            }
            Flux::Sine(a) => format!("{a}*sin(u)"),
            Flux::Custom(c) => c.name.clone(),
        }
    }

    pub fn g(&self, u: f64) -> f64 {
        match self {
            // Horner; for `[0, 0, 0.5]` this is exactly `0.5 * u * u`
            Flux::Polynomial(c) => c.iter().rev().fold(0.0, |acc, &ck| acc * u + ck),
            Flux::Sine(a) => a * u.sin(),
            Flux::Custom(c) => (c.g)(u),
        }
    }

    pub fn dg(&self, u: f64) -> f64 {
        match self {
            Flux::Polynomial(c) => c
                .iter()
                .enumerate()
                .skip(1)
                .rev()
                .fold(0.0, |acc, (k, &ck)| acc * u + k as f64 * ck),
            Flux::Sine(a) => a * u.cos(),
            Flux::Custom(c) => (c.dg)(u),
        }
    }

    /// `g''` where it is available in closed form.
    pub fn d2g(&self, u: f64) -> Option<f64> {
        match self {
            Flux::Polynomial(c) => Some(
                c.iter()
                    .enumerate()
                    .skip(2)
                    .rev()
                    .fold(0.0, |acc, (k, &ck)| acc * u + (k * (k - 1)) as f64 * ck),
            ),
            Flux::Sine(a) => Some(-a * u.sin()),
            Flux::Custom(_) => None,
        }
    }

    /// `g*(u) = ∫₀ᵘ g`
    pub fn g_star(&self, u: f64) -> f64 {
        match self {
            Flux::Polynomial(c) => {
                u * c
                    .iter()
                    .enumerate()
                    .rev()
                    .fold(0.0, |acc, (k, &ck)| acc * u + ck / (k + 1) as f64)
            }
            Flux::Sine(a) => a * (1.0 - u.cos()),
            Flux::Custom(c) => integrate_adaptive(&|s| (c.g)(s), 0.0, u, 1e-12),
        }
    }

    pub fn is_polynomial(&self) -> bool {
        matches!(self, Flux::Polynomial(_))
    }

    /// `g(u) = c₀ + c₁u`, so `(g(u) - g'(0)u)_x` vanishes.
    pub fn is_affine(&self) -> bool {
        matches!(self, Flux::Polynomial(c) if c.iter().skip(2).all(|&v| v == 0.0))
    }

    /// `g₁(u) = g(u) - g'(0)u`, the flux seen in a frame moving with speed `g'(0)`.
    pub fn without_drift(&self) -> Flux {
        match self {
            Flux::Polynomial(c) => {
                let mut c = c.clone();
                if c.len() > 1 {
                    c[1] = 0.0;
                }
                Flux::Polynomial(c)
            }
            other => {
                let c0 = other.dg(0.0);
                let (g, dg) = (other.clone(), other.clone());
                Flux::Custom(CustomFlux {
                    name: format!("{} - {c0}*u", other.name()),
                    g: Arc::new(move |u| g.g(u) - c0 * u),
                    dg: Arc::new(move |u| dg.dg(u) - c0),
                    b: other.growth_exponent(),
                })
            }
        }
    }

    fn growth_exponent(&self) -> f64 {
        match self {
            Flux::Polynomial(_) | Flux::Sine(_) => 1.0,
            Flux::Custom(c) => c.b,
        }
    }
}

/// A flux together with its measured growth constants.
#[derive(Clone, Debug)]
pub struct Nonlinearity {
    pub flux: Flux,
    /// growth exponent, in `[1, 2)`
    pub b: f64,
    /// `sup |g'(u)| / (1 + |u|^b)` over the sampled range
    pub c: f64,
    /// sampled range `[-U, U]`
    pub range: f64,
}

impl Nonlinearity {
    pub fn new(flux: Flux) -> Result<Self> {
        Self::with_range(flux, 100.0)
    }

    pub fn with_range(flux: Flux, range: f64) -> Result<Self> {
        if let Flux::Polynomial(c) = &flux {
            if c.len() > 3 && c[3..].iter().any(|&v| v != 0.0) {
                return Err(ZkError::Config(format!(
                    "polynomial flux {} grows faster than the admissible |u|^b, b < 2",
                    flux.name()
                )));
            }
            if c.iter().any(|v| !v.is_finite()) {
                return Err(ZkError::Config("flux coefficients must be finite".into()));
            }
        }
        let b = flux.growth_exponent();
        if !(1.0..2.0).contains(&b) {
            return Err(ZkError::Config(format!("growth exponent {b} outside [1, 2)")));
        }
        let mut nl = Nonlinearity { flux, b, c: 0.0, range };
        let (c1, _) = nl.growth_ratios(range, 4001);
        nl.c = c1;
        Ok(nl)
    }

    pub fn name(&self) -> String {
        self.flux.name()
    }

    /// Sampled `sup |g'|/(1+|u|^b)` and `sup |g''|/(1+|u|^{b-1})` on `[-U, U]`;
    /// the second is `NaN` without a closed-form `g''`.
    pub fn growth_ratios(&self, range: f64, n: usize) -> (f64, f64) {
        let mut r1 = 0.0f64;
        let mut r2 = 0.0f64;
        for i in 0..n {
            let u = -range + 2.0 * range * i as f64 / (n - 1) as f64;
            r1 = r1.max(self.flux.dg(u).abs() / (1.0 + u.abs().powf(self.b)));
            match self.flux.d2g(u) {
                Some(d) => r2 = r2.max(d.abs() / (1.0 + u.abs().powf(self.b - 1.0))),
                None => r2 = f64::NAN,
            }
        }
        (r1, r2)
    }

    /// `g'(0)`, the speed removed by the Galilean shift.
    pub fn drift(&self) -> f64 {
        self.flux.dg(0.0)
    }
}

const G_H_PANELS: usize = 64;

static G_H_RULE: LazyLock<(Vec<f64>, Vec<f64>)> = LazyLock::new(|| gauss_legendre(16));

/// `g_h`: equal to `g` on `|u| ≤ 1/h`, affine with slope `g'(±2/h)` beyond `2/h`.
#[derive(Clone, Debug)]
pub struct TruncatedNonlinearity {
    pub base: Nonlinearity,
    /// `None` leaves the flux untruncated.
    pub h: Option<f64>,
    /// cumulative integrals of `g_h'` over the transition panels, for `u > 0` and `u < 0`
    prefix: [Vec<f64>; 2],
}

impl TruncatedNonlinearity {
    pub fn new(base: Nonlinearity, h: Option<f64>) -> Result<Self> {
        if let Some(h) = h {
            if !(h > 0.0 && h <= 1.0) {
                return Err(ZkError::Config(format!("truncation h must lie in (0, 1], got {h}")));
            }
        }
        let mut t = TruncatedNonlinearity {
            base,
            h,
            prefix: [Vec::new(), Vec::new()],
        };
        if let Some(h) = h {
            for (s, sign) in [1.0, -1.0].into_iter().enumerate() {
                let width = 1.0 / (h * G_H_PANELS as f64);
                let mut acc = 0.0;
                let mut row = vec![0.0];
                for p in 0..G_H_PANELS {
                    let a = 1.0 / h + p as f64 * width;
                    acc += t.transition_integral(sign, a, a + width);
                    row.push(acc);
                }
                t.prefix[s] = row;
            }
        }
        Ok(t)
    }

    pub fn untruncated(base: Nonlinearity) -> Self {
        TruncatedNonlinearity {
            base,
            h: None,
            prefix: [Vec::new(), Vec::new()],
        }
    }

    /// `g_h'(θ)` for `θ = sign·r`, `r ≥ 0`.
    fn slope(&self, h: f64, sign: f64, r: f64) -> f64 {
        let flux = &self.base.flux;
        flux.dg(sign * r) * Cutoff.value(2.0 - h * r) + flux.dg(sign * 2.0 / h) * Cutoff.value(h * r - 1.0)
    }

    /// `∫_a^b g_h'(sign·r) dr` by one Gauss panel.
    fn transition_integral(&self, sign: f64, a: f64, b: f64) -> f64 {
        let h = self.h.expect("transition integral needs a truncation");
        let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
        G_H_RULE
            .0
            .iter()
            .zip(&G_H_RULE.1)
            .map(|(x, w)| w * self.slope(h, sign, mid + half * x))
            .sum::<f64>()
            * half
    }

    /// `g_h(sign·r) - g(sign/h)` for `r ∈ [1/h, 2/h]`, as a magnitude along `r`.
    fn transition_value(&self, h: f64, s: usize, sign: f64, r: f64) -> f64 {
        let width = 1.0 / (h * G_H_PANELS as f64);
        let p = (((r - 1.0 / h) / width).floor().max(0.0) as usize).min(G_H_PANELS - 1);
        let a = 1.0 / h + p as f64 * width;
        self.prefix[s][p] + self.transition_integral(sign, a, r)
    }

    /// `(g_h(u), g_h'(u))`.
    pub fn eval(&self, u: f64) -> (f64, f64) {
        let flux = &self.base.flux;
        let Some(h) = self.h else {
            return (flux.g(u), flux.dg(u));
        };
        let r = u.abs();
        if r <= 1.0 / h {
            return (flux.g(u), flux.dg(u));
        }
        let (s, sign) = if u > 0.0 { (0, 1.0) } else { (1, -1.0) };
        // d/dr g_h(sign r) = sign g_h'(sign r)
        let start = flux.g(sign / h);
        if r >= 2.0 / h {
            let edge = start + sign * self.prefix[s][G_H_PANELS];
            let slope = flux.dg(sign * 2.0 / h);
            return (edge + slope * (u - sign * 2.0 / h), slope);
        }
        let value = start + sign * self.transition_value(h, s, sign, r);
        (value, self.slope(h, sign, r))
    }

    pub fn value(&self, u: f64) -> f64 {
        self.eval(u).0
    }

    pub fn derivative(&self, u: f64) -> f64 {
        self.eval(u).1
    }

    /// `sup |g_h'(u)|`: finite whenever a truncation is set.
    pub fn slope_bound(&self) -> f64 {
        match self.h {
            None => f64::INFINITY,
            Some(h) => {
                let n = 2001;
                (0..n)
                    .map(|i| -2.0 / h + 4.0 / h * i as f64 / (n - 1) as f64)
                    .map(|u| self.derivative(u).abs())
                    .fold(0.0, f64::max)
            }
        }
    }
}

/// `sup_{h, |u| ≤ U} |g_h'(u)| / (1 + |u|^b)` over a list of truncations.
pub fn uniform_growth_ratio(base: &Nonlinearity, hs: &[f64], range: f64, n: usize) -> Result<f64> {
    let mut worst = 0.0f64;
    for &h in hs {
        let t = TruncatedNonlinearity::new(base.clone(), Some(h))?;
        for i in 0..n {
            let u = -range + 2.0 * range * i as f64 / (n - 1) as f64;
            worst = worst.max(t.derivative(u).abs() / (1.0 + u.abs().powf(base.b)));
        }
    }
    Ok(worst)
}

/// Spectral `x`-derivative of `g_h(u) - drift·u`, with diagnostics.
#[derive(Clone, Debug)]
pub struct FluxTerm {
    pub spectral: SpectralField,
    /// relative size of the discarded padded content
    pub aliasing: f64,
    pub aliasing_warning: bool,
    /// largest `|u|` seen on the padded grid
    pub max_abs: f64,
}

/// `(g_h(u) - drift·u)_x` evaluated pointwise on the 3/2-padded `x` grid.
pub fn flux_x_spectral(
    t: &Transform,
    sf: &SpectralField,
    tnl: &TruncatedNonlinearity,
    drift: f64,
) -> Result<FluxTerm> {
    let mut values = t.to_padded(sf)?;
    let mut max_abs = 0.0f64;
    for v in values.iter_mut() {
        let u = *v;
        if !u.is_finite() {
            return Err(ZkError::NonFinite("field entering the flux".into()));
        }
        max_abs = max_abs.max(u.abs());
        *v = tnl.value(u) - drift * u;
        if !v.is_finite() {
            return Err(ZkError::NonFinite(format!("g_h({u})")));
        }
    }
    let (g_hat, aliasing) = t.from_padded(&values)?;
    Ok(FluxTerm {
        spectral: derivative(&g_hat, &t.basis, 1, false),
        aliasing,
        aliasing_warning: aliasing > ALIASING_THRESHOLD,
        max_abs,
    })
}

/// `(g_h(u))_x` as a field, plus the aliasing flag.
pub fn flux_x(t: &Transform, field: &Field, tnl: &TruncatedNonlinearity) -> Result<(Field, FluxTerm)> {
    let term = flux_x_spectral(t, &t.to_spectral(field)?, tnl, 0.0)?;
    Ok((t.from_spectral(&term.spectral)?, term))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{BoundaryCase, Grid};
    use std::f64::consts::PI;

    fn zk() -> Nonlinearity {
        Nonlinearity::new(Flux::zk()).unwrap()
    }

    #[test]
    fn primitives_in_closed_form() {
        let f = Flux::zk();
        assert_eq!(f.g_star(0.0), 0.0);
        assert!((f.g_star(3.0) - 4.5).abs() < 1e-14);
        assert!((Flux::Sine(1.0).g_star(PI) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn custom_flux_primitive_uses_quadrature() {
        let custom = Flux::Custom(CustomFlux {
            name: "atan".into(),
            g: Arc::new(f64::atan),
            dg: Arc::new(|u| 1.0 / (1.0 + u * u)),
            b: 1.0,
        });
        // ∫₀ᵘ atan = u atan u - ln(1+u²)/2
        let u: f64 = 2.5;
        let exact = u * u.atan() - 0.5 * (1.0 + u * u).ln();
        assert!((custom.g_star(u) - exact).abs() <= 1e-12 * exact);
    }

    #[test]
    fn primitive_derivative_matches_flux() {
        for flux in [Flux::zk(), Flux::Sine(0.7), Flux::zk_with_drift(-1.5)] {
            for i in 0..50 {
                let u = -5.0 + 0.2 * i as f64;
                let e = 1e-5;
                let fd = (flux.g_star(u + e) - flux.g_star(u - e)) / (2.0 * e);
                assert!((fd - flux.g(u)).abs() <= 1e-8 * (1.0 + flux.g(u).abs()), "{flux:?} {u}");
            }
        }
    }

    #[test]
    fn cubic_flux_is_rejected() {
        assert!(Nonlinearity::new(Flux::Polynomial(vec![0.0, 0.0, 0.0, 1.0])).is_err());
        assert!(TruncatedNonlinearity::new(zk(), Some(0.0)).is_err());
        assert!(TruncatedNonlinearity::new(zk(), Some(1.5)).is_err());
    }

    #[test]
    fn truncation_examples() {
        let t = TruncatedNonlinearity::new(zk(), Some(0.5)).unwrap();
        assert_eq!(t.eval(0.0), (0.0, 0.0));
        assert_eq!(t.derivative(10.0), 4.0);
        assert_eq!(t.derivative(-10.0), -4.0);
        for u in [-2.0, -1.3, 0.1, 1.9, 2.0] {
            assert_eq!(t.eval(u), (0.5 * u * u, u));
        }
    }

    #[test]
    fn truncation_is_continuous_at_the_seams() {
        for flux in [Flux::zk(), Flux::Sine(1.0), Flux::zk_with_drift(0.8)] {
            for h in [1.0, 0.5, 0.125] {
                let t = TruncatedNonlinearity::new(Nonlinearity::new(flux.clone()).unwrap(), Some(h)).unwrap();
                for seam in [1.0 / h, 2.0 / h, -1.0 / h, -2.0 / h] {
                    let e = 1e-13 * seam.abs();
                    let (l, r) = (t.eval(seam - e), t.eval(seam + e));
                    assert!((l.0 - r.0).abs() < 1e-10 * (1.0 + l.0.abs()), "{flux:?} h={h} at {seam}");
                    assert!((l.1 - r.1).abs() < 1e-10 * (1.0 + l.1.abs()), "{flux:?} h={h} at {seam}");
                }
                // value is the integral of the slope
                let u = 1.6 / h;
                let q = integrate_adaptive(&|s| t.derivative(s), 1.0 / h, u, 1e-13);
                assert!((t.value(u) - t.value(1.0 / h) - q).abs() < 1e-11 * (1.0 + q.abs()));
            }
        }
    }

    #[test]
    fn growth_is_uniform_in_h() {
        let hs: Vec<f64> = (0..6).map(|k| 0.5f64.powi(k)).collect();
        let r = uniform_growth_ratio(&zk(), &hs, 200.0, 4001).unwrap();
        assert!(r <= 2.0 * zk().c, "ratio {r}");
        let t = TruncatedNonlinearity::new(zk(), Some(0.25)).unwrap();
        assert!((t.slope_bound() - 8.0).abs() < 1e-12);
    }

    #[test]
    fn zk_flux_of_a_sine() {
        let g = Grid::new(BoundaryCase::Neumann, PI, 32, 1.0, 4).unwrap();
        let t = Transform::new(&g).unwrap();
        let tnl = TruncatedNonlinearity::untruncated(zk());
        let k = 3.0;
        let u = Field::from_fn(g.clone(), |x, _| (k * x).sin());
        let (fx, term) = flux_x(&t, &u, &tnl).unwrap();
        let expected = Field::from_fn(g.clone(), |x, _| 0.5 * k * (2.0 * k * x).sin());
        assert!(fx.sub(&expected).max_abs() < 1e-12);
        assert!(!term.aliasing_warning);

        let c = Field::from_fn(g.clone(), |_, _| 1.7);
        assert!(flux_x(&t, &c, &tnl).unwrap().0.max_abs() < 1e-12);
        assert_eq!(flux_x(&t, &Field::zeros(g), &tnl).unwrap().0.max_abs(), 0.0);
    }
}
