//! Cut-off function, the weight family `ρ_{α,β}`, and weighted Sobolev norms.

use serde::Serialize;

use crate::basis::{derivative, Field, SpectralField, Transform};
use crate::error::{Result, ZkError};
use crate::jet::Jet;
use crate::quadrature::gauss_legendre;
use std::sync::LazyLock;

/// Smooth step: `η = 0` on `x ≤ 0`, `η = 1` on `x ≥ 1`, `η(x) + η(1 - x) = 1`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Cutoff;

impl Cutoff {
    /// `η = σ(1/(1-x) - 1/x)` with the logistic `σ`; algebraically equal to
    /// `φ(x) / (φ(x) + φ(1-x))`, `φ(t) = e^{-1/t}`, and manifestly monotone.
    pub fn jet(&self, x: Jet) -> Jet {
        let t = x.value();
        if t <= 0.0 {
            return Jet::constant(0.0);
        }
        if t >= 1.0 {
            return Jet::constant(1.0);
        }
        let w = (-x + 1.0).recip() - x.recip();
        let s = logistic(w.value());
        let s1 = s * (1.0 - s);
        w.compose([
            s,
            s1,
            s1 * (1.0 - 2.0 * s),
            s1 * (1.0 - 6.0 * s + 6.0 * s * s),
        ])
    }

    pub fn value(&self, x: f64) -> f64 {
        if x <= 0.0 {
            0.0
        } else if x >= 1.0 {
            1.0
        } else {
            logistic(1.0 / (1.0 - x) - 1.0 / x)
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        self.jet(Jet::var(x)).d(1)
    }
}

fn logistic(w: f64) -> f64 {
    if w >= 0.0 {
        1.0 / (1.0 + (-w).exp())
    } else {
        let e = w.exp();
        e / (1.0 + e)
    }
}

/// `ρ_{α,β}`: `e^{βx}` for `x ≤ -1`, `(1+x)^α` (or `2 - (1+x)^{-1/2}` when
/// `α = 0`) for `x ≥ 0`.
///
/// On `(-1, 0)` the derivative is a partition of unity over three positive
/// pieces: `βe^{βx}` near `-1`, a constant in the middle, and the right-hand
/// formula's derivative near `0`. The constant is fixed so the integral of
/// `ρ'` over the bridge closes the gap `1 - e^{-β}`, which makes `ρ` match
/// both tails to all orders and keeps `ρ' > 0` everywhere.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WeightFn {
    pub alpha: f64,
    pub beta: f64,
    #[serde(skip)]
    bridge: Bridge,
}

#[derive(Clone, Debug, PartialEq, Default)]
struct Bridge {
    /// width of the two tail-matching zones
    eps: f64,
    /// value of `ρ'` in the middle zone
    level: f64,
    /// `∫_{-1}^{-1 + p/PANELS} ρ'`
    cumulative: Vec<f64>,
}

const BRIDGE_PANELS: usize = 64;

/// 24-point Gauss rule on `[-1, 1]`; the bridge integrands are smooth, so a
/// fixed composite rule is exact to roundoff on 64 panels.
static PANEL_RULE: LazyLock<(Vec<f64>, Vec<f64>)> = LazyLock::new(|| gauss_legendre(24));

fn panel_integral(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
    PANEL_RULE.0.iter().zip(&PANEL_RULE.1).map(|(x, w)| w * f(mid + half * x)).sum::<f64>() * half
}

fn bridge_integral(f: impl Fn(f64) -> f64) -> f64 {
    let h = 1.0 / BRIDGE_PANELS as f64;
    (0..BRIDGE_PANELS)
        .map(|p| {
            let a = -1.0 + p as f64 * h;
            panel_integral(&f, a, a + h)
        })
        .sum()
}

pub fn make_rho(alpha: f64, beta: f64) -> Result<WeightFn> {
    if !(0.0..=8.0).contains(&alpha) || !alpha.is_finite() {
        return Err(ZkError::Config(format!("weight exponent {alpha} outside [0, 8]")));
    }
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(ZkError::Config(format!("weight rate must be positive, got {beta}")));
    }
    let gap = 1.0 - (-beta).exp();
    let mut eps = 0.5;
    while eps >= 1.0 / 32.0 {
        let mut w = WeightFn {
            alpha,
            beta,
            bridge: Bridge {
                eps,
                level: 0.0,
                cumulative: Vec::new(),
            },
        };
        let tails = bridge_integral(|x| w.bridge_derivative(Jet::var(x)).value());
        let middle = bridge_integral(|x| w.middle_weight(Jet::var(x)).value());
        let level = (gap - tails) / middle;
        if level >= 0.1 * gap {
            w.bridge.level = level;
            w.bridge.cumulative = w.tabulate();
            return Ok(w);
        }
        eps *= 0.5;
    }
    Err(ZkError::Config(format!(
        "no monotone bridge found for rho_{{{alpha},{beta}}}"
    )))
}

impl WeightFn {
    fn right(&self, x: Jet) -> Jet {
        if self.alpha > 0.0 {
            (x + 1.0).powf(self.alpha)
        } else {
            -(x + 1.0).powf(-0.5) + 2.0
        }
    }

    fn left_weight(&self, x: Jet) -> Jet {
        -Cutoff.jet((x + 1.0) * (1.0 / self.bridge.eps)) + 1.0
    }

    fn right_weight(&self, x: Jet) -> Jet {
        Cutoff.jet(x * (1.0 / self.bridge.eps) + 1.0)
    }

    fn middle_weight(&self, x: Jet) -> Jet {
        -(self.left_weight(x) + self.right_weight(x)) + 1.0
    }

    /// Tail contributions to `ρ'` on the bridge (without the middle constant).
    fn bridge_derivative(&self, x: Jet) -> Jet {
        let left = self.left_weight(x) * (x * self.beta).exp() * self.beta;
        if x.value() <= -self.bridge.eps {
            return left;
        }
        let r = self.right_weight(x);
        let dr = if self.alpha > 0.0 {
            (x + 1.0).powf(self.alpha - 1.0) * self.alpha
        } else {
            (x + 1.0).powf(-1.5) * 0.5
        };
        left + r * dr
    }

    /// `ρ'` on `(-1, 0)`.
    fn bridge_slope(&self, x: Jet) -> Jet {
        self.bridge_derivative(x) + self.middle_weight(x) * self.bridge.level
    }

    fn tabulate(&self) -> Vec<f64> {
        let h = 1.0 / BRIDGE_PANELS as f64;
        let mut acc = 0.0;
        let mut out = vec![0.0];
        for p in 0..BRIDGE_PANELS {
            let a = -1.0 + p as f64 * h;
            acc += panel_integral(|x| self.bridge_slope(Jet::var(x)).value(), a, a + h);
            out.push(acc);
        }
        out
    }

    fn bridge_value(&self, x: f64) -> f64 {
        let h = 1.0 / BRIDGE_PANELS as f64;
        let p = (((x + 1.0) / h).floor() as usize).min(BRIDGE_PANELS - 1);
        let a = -1.0 + p as f64 * h;
        let partial = panel_integral(|s| self.bridge_slope(Jet::var(s)).value(), a, x);
        (-self.beta).exp() + self.bridge.cumulative[p] + partial
    }

    /// Value and first three derivatives at `x`.
    fn jet_at(&self, x: f64) -> Jet {
        let xv = Jet::var(x);
        if x <= -1.0 {
            (xv * self.beta).exp()
        } else if x >= 0.0 {
            self.right(xv)
        } else {
            let slope = self.bridge_slope(xv);
            Jet([self.bridge_value(x), slope.d(0), slope.d(1), slope.d(2)])
        }
    }

    pub fn jet(&self, x: Jet) -> Jet {
        x.compose(self.jet_at(x.value()).0)
    }

    pub fn value(&self, x: f64) -> f64 {
        self.jet_at(x).value()
    }

    /// `ρ^{(order)}(x)` for `order ≤ 3`.
    pub fn d(&self, x: f64, order: usize) -> f64 {
        self.jet_at(x).d(order)
    }
}

/// A weight `ρ(x)` as used by the estimates: unit, `ρ_{α,β}`, or `1 + ρ_{α,β}(x - x₀)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum Weight {
    Unit,
    Rho(WeightFn),
    OnePlusShifted { rho: WeightFn, x0: f64 },
}

impl Weight {
    pub fn jet(&self, x: f64) -> Jet {
        match self {
            Weight::Unit => Jet::constant(1.0),
            Weight::Rho(r) => r.jet(Jet::var(x)),
            Weight::OnePlusShifted { rho, x0 } => rho.jet(Jet::var(x - *x0)) + 1.0,
        }
    }

    pub fn value(&self, x: f64) -> f64 {
        self.jet(x).value()
    }

    /// Interval where the weight leaves its closed forms.
    pub fn bridge(&self) -> Option<(f64, f64)> {
        match self {
            Weight::Unit => None,
            Weight::Rho(_) => Some((-1.0, 0.0)),
            Weight::OnePlusShifted { x0, .. } => Some((x0 - 1.0, *x0)),
        }
    }
}

/// Measured admissibility constants `sup |ρ^{(j)}| / ρ`, `j = 1, 2, 3`,
/// on `n` uniform samples of `[lo, hi]`.
pub fn admissibility_constants(weight: &Weight, lo: f64, hi: f64, n: usize) -> [f64; 3] {
    let mut c = [0.0f64; 3];
    for i in 0..=n {
        let x = lo + (hi - lo) * i as f64 / n as f64;
        let j = weight.jet(x);
        for (order, slot) in c.iter_mut().enumerate() {
            *slot = slot.max(j.d(order + 1).abs() / j.value());
        }
    }
    c
}

/// `(1 + x₊)^{α}`
pub fn poly_weight(x: f64, alpha: f64) -> f64 {
    (1.0 + x.max(0.0)).powf(alpha)
}

/// Per-`x`-node integrals over `(0, L)` of a field and its derivatives.
#[derive(Clone, Debug, PartialEq)]
pub struct Densities {
    /// `∫ u² dy`
    pub u2: Vec<f64>,
    /// `∫ u_x² dy`
    pub ux2: Vec<f64>,
    /// `∫ u_y² dy`
    pub uy2: Vec<f64>,
    /// `∫ (u_xx² + u_xy² + u_yy²) dy`
    pub d2: Vec<f64>,
}

impl Densities {
    pub fn grad(&self, i: usize) -> f64 {
        self.ux2[i] + self.uy2[i]
    }

    /// `∫ |D^order u|² dy` at node `i`.
    pub fn level(&self, i: usize, order: usize) -> f64 {
        match order {
            0 => self.u2[i],
            1 => self.grad(i),
            2 => self.d2[i],
            _ => panic!("derivative level {order} not tracked"),
        }
    }
}

/// Column integrals computed exactly in the eigenbasis (orthonormality and
/// `∫ ψ_l'ψ_m' = λ_l δ_lm`).
pub fn densities(t: &Transform, sf: &SpectralField) -> Result<Densities> {
    let c0 = t.x_inverse(sf)?.data;
    let c1 = t.x_inverse(&derivative(sf, &t.basis, 1, false))?.data;
    let c2 = t.x_inverse(&derivative(sf, &t.basis, 2, false))?.data;
    Ok(column_densities(&t.lambdas(), &c0, &c1, &c2))
}

fn column_densities(lam: &[f64], c0: &[f64], c1: &[f64], c2: &[f64]) -> Densities {
    let nm = lam.len();
    let n = c0.len() / nm;
    let mut d = Densities {
        u2: vec![0.0; n],
        ux2: vec![0.0; n],
        uy2: vec![0.0; n],
        d2: vec![0.0; n],
    };
    for i in 0..n {
        let (r0, r1, r2) = (&c0[i * nm..(i + 1) * nm], &c1[i * nm..(i + 1) * nm], &c2[i * nm..(i + 1) * nm]);
        for (l, &lm) in lam.iter().enumerate() {
            d.u2[i] += r0[l] * r0[l];
            d.ux2[i] += r1[l] * r1[l];
            d.uy2[i] += lm * r0[l] * r0[l];
            d.d2[i] += r2[l] * r2[l] + lm * r1[l] * r1[l] + lm * lm * r0[l] * r0[l];
        }
    }
    d
}

/// Column densities at the nodes of an `x` quadrature rule.
#[derive(Clone, Debug, PartialEq)]
pub struct FineDensities {
    pub xs: Vec<f64>,
    /// quadrature weight of each node
    pub wq: Vec<f64>,
    pub d: Densities,
}

impl FineDensities {
    /// Trigonometric interpolant on `factor · nx` uniform nodes.
    pub fn new(t: &Transform, sf: &SpectralField, factor: usize) -> Result<Self> {
        let n = factor.max(1) * t.grid.nx;
        let c0 = t.x_inverse_on(sf, n)?;
        let c1 = t.x_inverse_on(&derivative(sf, &t.basis, 1, false), n)?;
        let c2 = t.x_inverse_on(&derivative(sf, &t.basis, 2, false), n)?;
        let x_half = t.grid.x_half_width;
        let dx = 2.0 * x_half / n as f64;
        Ok(FineDensities {
            xs: (0..n).map(|i| -x_half + i as f64 * dx).collect(),
            wq: vec![dx; n],
            d: column_densities(&t.lambdas(), &c0, &c1, &c2),
        })
    }

    pub fn on_rule(t: &Transform, sf: &SpectralField, rule: &XRule) -> Result<Self> {
        let c0 = rule.rows(t, sf)?;
        let c1 = rule.rows(t, &derivative(sf, &t.basis, 1, false))?;
        let c2 = rule.rows(t, &derivative(sf, &t.basis, 2, false))?;
        Ok(FineDensities {
            xs: rule.xs.clone(),
            wq: rule.w.clone(),
            d: column_densities(&t.lambdas(), &c0, &c1, &c2),
        })
    }

    /// `Σ_i q_i · w_i · density_i` with precomputed weight samples.
    pub fn integrate(&self, density: impl Fn(&Densities, usize) -> f64, w: &[f64]) -> f64 {
        (0..self.xs.len()).map(|i| self.wq[i] * w[i] * density(&self.d, i)).sum()
    }
}

const STENCIL: usize = 16;
const RULE_OVERSAMPLE: usize = 8;
const RULE_NODES: usize = 12;
/// panels per unit length inside refined intervals
const REFINED_PANELS: usize = 32;

/// Composite Gauss-Legendre rule on `(-X, X)`: one panel per grid cell, and
/// `1/32`-wide panels on the refined intervals (the bridges of the weights,
/// whose higher derivatives are steep but smooth). Field values at the nodes
/// come from local 16-point interpolation on an 8x oversampled grid.
#[derive(Clone, Debug)]
pub struct XRule {
    pub xs: Vec<f64>,
    pub w: Vec<f64>,
    n_fine: usize,
    /// first fine index of the stencil and its interpolation coefficients
    stencil: Vec<(i64, [f64; STENCIL])>,
}

impl XRule {
    pub fn new(t: &Transform, refine: &[(f64, f64)]) -> Self {
        let x_half = t.grid.x_half_width;
        let nx = t.grid.nx;
        let mut edges: Vec<f64> = (0..=nx).map(|k| -x_half + 2.0 * x_half * k as f64 / nx as f64).collect();
        for &(a, b) in refine {
            let m = ((b - a) * REFINED_PANELS as f64).ceil().max(1.0) as usize;
            edges.extend((0..=m).map(|k| a + (b - a) * k as f64 / m as f64));
        }
        edges.retain(|e| e.abs() <= x_half);
        edges.sort_by(f64::total_cmp);
        edges.dedup_by(|a, b| (*a - *b).abs() < 1e-12);

        let (gx, gw) = gauss_legendre(RULE_NODES);
        let n_fine = RULE_OVERSAMPLE * nx;
        let h = 2.0 * x_half / n_fine as f64;
        let mut rule = XRule {
            xs: Vec::new(),
            w: Vec::new(),
            n_fine,
            stencil: Vec::new(),
        };
        for e in edges.windows(2) {
            let (mid, half) = (0.5 * (e[0] + e[1]), 0.5 * (e[1] - e[0]));
            for (x, w) in gx.iter().zip(&gw) {
                let x = mid + half * x;
                rule.xs.push(x);
                rule.w.push(w * half);
                let s = (x + x_half) / h;
                let first = s.floor() as i64 - (STENCIL as i64 / 2 - 1);
                let mut c = [0.0; STENCIL];
                for (k, ck) in c.iter_mut().enumerate() {
                    *ck = (0..STENCIL)
                        .filter(|&m| m != k)
                        .map(|m| (s - (first + m as i64) as f64) / (k as f64 - m as f64))
                        .product();
                }
                rule.stencil.push((first, c));
            }
        }
        rule
    }

    /// Refined where any of the weights has its bridge.
    pub fn for_weights(t: &Transform, weights: &[&Weight]) -> Self {
        let refine: Vec<(f64, f64)> = weights.iter().filter_map(|w| w.bridge()).collect();
        Self::new(t, &refine)
    }

    /// Coefficient rows `Σ_l`-ready at the nodes, `nm` per node.
    pub fn rows(&self, t: &Transform, sf: &SpectralField) -> Result<Vec<f64>> {
        let nm = t.basis.len();
        let fine = t.x_inverse_on(sf, self.n_fine)?;
        let n = self.n_fine as i64;
        let mut out = vec![0.0; self.xs.len() * nm];
        for (q, (first, c)) in self.stencil.iter().enumerate() {
            let row = &mut out[q * nm..(q + 1) * nm];
            for (k, ck) in c.iter().enumerate() {
                let i = (first + k as i64).rem_euclid(n) as usize;
                for (r, v) in row.iter_mut().zip(&fine[i * nm..(i + 1) * nm]) {
                    *r += ck * v;
                }
            }
        }
        Ok(out)
    }
}

/// `Σ_i Δx · w(x_i) · density_i`
pub fn weighted_sum(t: &Transform, density: impl Fn(usize) -> f64, w: impl Fn(f64) -> f64) -> f64 {
    let dx = t.grid.dx();
    t.grid
        .x_nodes
        .iter()
        .enumerate()
        .map(|(i, &x)| dx * w(x) * density(i))
        .sum()
}

/// `‖(1 + x₊)^α u‖_{L₂}`
pub fn weighted_l2(t: &Transform, field: &Field, alpha: f64) -> Result<f64> {
    let yc = t.y_coeffs(field)?;
    let nm = t.basis.len();
    let s = weighted_sum(
        t,
        |i| yc.data[i * nm..(i + 1) * nm].iter().map(|c| c * c).sum(),
        |x| poly_weight(x, 2.0 * alpha),
    );
    Ok(s.sqrt())
}

/// `‖u‖_{H^{k,α}}` for `k ∈ {0, 1}`: root-sum-of-squares of the weighted
/// `L₂` norms of `|D^j u|`, `j ≤ k`.
pub fn hk_alpha_norm(t: &Transform, field: &Field, k: usize, alpha: f64) -> Result<f64> {
    hk_alpha_norm_spectral(t, &t.to_spectral(field)?, k, alpha)
}

pub fn hk_alpha_norm_spectral(t: &Transform, sf: &SpectralField, k: usize, alpha: f64) -> Result<f64> {
    if k > 2 {
        return Err(ZkError::Config(format!("H^k norm supports k <= 2, got {k}")));
    }
    let d = densities(t, sf)?;
    let s = weighted_sum(
        t,
        |i| (0..=k).map(|j| d.level(i, j)).sum(),
        |x| poly_weight(x, 2.0 * alpha),
    );
    Ok(s.sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct XSeminorms {
    /// `sup_t ‖u(t)‖_{H^{k,α}}`
    pub sup_norm: f64,
    /// `sup_{x₀} ∫₀ᵀ ∫_{x₀}^{x₀+1} ∫ |D^{k+1}u|²`
    pub window: f64,
    /// `∫₀ᵀ ∫_{x>0} (1+x)^{2α-1} |D^{k+1}u|²` (zero when `α = 0`)
    pub weighted: f64,
}

/// Discretized `X^{k,α}(Π_T)` components of a trajectory.
pub fn xk_alpha_seminorms(
    t: &Transform,
    traj: &crate::solver::Trajectory,
    k: usize,
    alpha: f64,
) -> Result<XSeminorms> {
    if traj.snapshots.is_empty() {
        return Err(ZkError::Config("empty trajectory".into()));
    }
    if k > 1 {
        return Err(ZkError::Config(format!("X^k seminorms support k <= 1, got {k}")));
    }
    let mut sup_norm = 0.0f64;
    for s in &traj.snapshots {
        sup_norm = sup_norm.max(hk_alpha_norm(t, s, k, alpha)?);
    }
    let nx = t.grid.nx;
    let mut column = vec![0.0; nx];
    for node in &traj.quadrature {
        let d = densities(t, &node.state)?;
        for (i, c) in column.iter_mut().enumerate() {
            *c += node.weight * d.level(i, k + 1);
        }
    }
    let dx = t.grid.dx();
    let xs = &t.grid.x_nodes;
    let mut window = 0.0f64;
    for &x0 in xs {
        let s: f64 = xs
            .iter()
            .zip(&column)
            .filter(|(&x, _)| x >= x0 && x < x0 + 1.0)
            .map(|(_, c)| dx * c)
            .sum();
        window = window.max(s);
    }
    let weighted = if alpha > 0.0 {
        xs.iter()
            .zip(&column)
            .filter(|(&x, _)| x > 0.0)
            .map(|(&x, c)| dx * (1.0 + x).powf(2.0 * alpha - 1.0) * c)
            .sum()
    } else {
        0.0
    };
    Ok(XSeminorms {
        sup_norm,
        window,
        weighted,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{BoundaryCase, Grid};
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn bridge_rule_integrates_steep_weight_derivatives() {
        let g = Grid::new(BoundaryCase::Periodic, 12.0, 96, 2.0 * PI, 4).unwrap();
        let t = Transform::new(&g).unwrap();
        let u = Field::from_fn(g.clone(), |x, _| (-(x - 0.5) * (x - 0.5)).exp());
        let sf = t.to_spectral(&u).unwrap();
        let w = Weight::Rho(make_rho(1.0, 1.0).unwrap());
        let rule = XRule::for_weights(&t, &[&w]);
        let d3: Vec<f64> = rule.xs.iter().map(|&x| w.jet(x).d(3)).collect();
        let got = FineDensities::on_rule(&t, &sf, &rule).unwrap().integrate(|d, i| d.u2[i], &d3);
        // the column integral is L u(x)²; reference from a very fine rule on the closed form
        let (gx, gw) = gauss_legendre(16);
        let panels = 24_000;
        let h = 24.0 / panels as f64;
        let mut want = 0.0;
        for p in 0..panels {
            let mid = -12.0 + (p as f64 + 0.5) * h;
            for (x, wq) in gx.iter().zip(&gw) {
                let x = mid + 0.5 * h * x;
                want += 0.5 * h * wq * 2.0 * PI * (-2.0 * (x - 0.5) * (x - 0.5)).exp() * w.jet(x).d(3);
            }
        }
        assert!((got - want).abs() <= 1e-11 * want.abs().max(1.0), "{got} {want}");
    }

    #[test]
    fn cutoff_identities_on_fine_grid() {
        let n = 10_000;
        for i in 0..=n {
            let x = -0.5 + 2.0 * i as f64 / n as f64;
            let e = Cutoff.value(x);
            assert!((e + Cutoff.value(1.0 - x) - 1.0).abs() <= 1e-12, "x = {x}");
            assert!(Cutoff.derivative(x) >= 0.0);
            if x <= 0.0 {
                assert_eq!(e, 0.0);
            }
            if x >= 1.0 {
                assert_eq!(e, 1.0);
            }
        }
        let mut prev = 0.0;
        for i in 0..=n {
            let e = Cutoff.value(i as f64 / n as f64);
            assert!(e >= prev);
            prev = e;
        }
    }

    #[test]
    fn rho_reference_values() {
        assert_relative_eq!(make_rho(0.0, 1.0).unwrap().value(0.0), 1.0, epsilon = 1e-15);
        assert_relative_eq!(make_rho(2.0, 1.0).unwrap().value(3.0), 16.0, epsilon = 1e-13);
        assert_relative_eq!(make_rho(1.0, 2.0).unwrap().value(-2.0), (-4.0f64).exp(), epsilon = 1e-15);
    }

    #[test]
    fn rho_rejects_invalid_parameters() {
        assert!(make_rho(-1.0, 1.0).is_err());
        assert!(make_rho(1.0, 0.0).is_err());
        assert!(make_rho(1.0, f64::NAN).is_err());
    }

    #[test]
    fn rho_seams_are_c1_and_monotone() {
        for (a, b) in [(0.0, 1.0), (0.5, 1.0), (1.0, 1.0), (2.0, 2.0), (1.5, 0.5)] {
            let w = make_rho(a, b).unwrap();
            for seam in [-1.0, 0.0] {
                for order in 0..=1 {
                    let l = w.d(seam - 1e-12, order);
                    let r = w.d(seam + 1e-12, order);
                    assert!((l - r).abs() < 1e-10, "({a},{b}) seam {seam} order {order}");
                }
            }
            let mut prev = w.value(-6.0);
            for i in 1..=2000 {
                let x = -6.0 + 12.0 * i as f64 / 2000.0;
                let v = w.value(x);
                assert!(v > prev, "({a},{b}) at {x}");
                prev = v;
            }
        }
    }

    #[test]
    fn admissibility_constants_are_stable_under_refinement() {
        for w in [make_rho(1.0, 1.0).unwrap(), make_rho(0.0, 1.0).unwrap(), make_rho(2.0, 2.0).unwrap()] {
            let coarse = admissibility_constants(&Weight::Rho(w.clone()), -20.0, 20.0, 4_000);
            let fine = admissibility_constants(&Weight::Rho(w.clone()), -20.0, 20.0, 16_000);
            for j in 0..3 {
                assert!(coarse[j].is_finite() && coarse[j] > 0.0);
                assert!((coarse[j] - fine[j]).abs() <= 0.05 * fine[j], "{w:?} c({})", j + 1);
            }
        }
    }

    fn setup(nx: usize) -> (std::sync::Arc<Grid>, Transform) {
        let g = Grid::new(BoundaryCase::Dirichlet, 10.0, nx, PI, 8).unwrap();
        let t = Transform::new(&g).unwrap();
        (g, t)
    }

    #[test]
    fn weighted_norms_of_simple_fields() {
        let (g, t) = setup(64);
        let zero = Field::zeros(g.clone());
        assert_eq!(weighted_l2(&t, &zero, 1.0).unwrap(), 0.0);
        assert_eq!(hk_alpha_norm(&t, &zero, 1, 1.0).unwrap(), 0.0);

        // Single mode: A cos(ξ x) ψ_l(y) → ‖·‖²_{H¹} = A² X (1 + ξ² + λ)
        let amp = 1.7;
        let xi = g.wavenumber(3);
        let p = t.basis.pairs[2];
        let f = Field::from_fn(g.clone(), |x, y| amp * (xi * x).cos() * p.value(y));
        let expected = (amp * amp * g.x_half_width * (1.0 + xi * xi + p.lambda)).sqrt();
        assert_relative_eq!(hk_alpha_norm(&t, &f, 1, 0.0).unwrap(), expected, max_relative = 1e-12);
        assert_relative_eq!(
            hk_alpha_norm(&t, &f, 0, 0.0).unwrap(),
            weighted_l2(&t, &f, 0.0).unwrap(),
            max_relative = 1e-14
        );
    }

    #[test]
    fn weight_is_inactive_on_the_left_half() {
        let (g, t) = setup(128);
        let p = t.basis.pairs[0];
        let f = Field::from_fn(g.clone(), |x, y| (-(x + 5.0) * (x + 5.0)).exp() * p.value(y));
        let plain = weighted_l2(&t, &f, 0.0).unwrap();
        // ∫ e^{-2(x+5)^2} dx = sqrt(π/2)
        assert_relative_eq!(plain, (PI / 2.0).sqrt().sqrt(), max_relative = 1e-10);
        for alpha in [0.5, 1.0, 3.0] {
            assert_relative_eq!(weighted_l2(&t, &f, alpha).unwrap(), plain, max_relative = 1e-10);
        }
    }
}
