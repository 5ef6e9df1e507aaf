//! Exact modal solution of the linear regularized equation
//! `u_t + u_xxx + u_xyy - δ(u_xx + u_yy) = f` and its Duhamel integral.
//!
//! A mode `e^{iξx} ψ_l(y)` evolves as `exp(r t)` with
//! `r = i(ξ³ + ξλ_l) - δ(ξ² + λ_l)`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::basis::{Grid, SpectralField};
use crate::error::{Result, ZkError};
use crate::quadrature::composite_gauss;

/// Largest admissible real part of `rate · t` before `exp` overflows.
const MAX_GROWTH_EXPONENT: f64 = 700.0;

pub fn symbol(xi: f64, lambda: f64, delta: f64) -> Complex64 {
    Complex64::new(-delta * (xi * xi + lambda), xi * xi * xi + xi * lambda)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DispersionParams {
    pub delta: f64,
    pub t: f64,
}

impl DispersionParams {
    pub fn new(delta: f64, t: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&delta) {
            return Err(ZkError::Config(format!("delta must lie in [0, 1], got {delta}")));
        }
        if !t.is_finite() {
            return Err(ZkError::Config("time must be finite".into()));
        }
        Ok(DispersionParams { delta, t })
    }
}

/// Linear operator with an optional constant advection `c u_x` folded in.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearOperator {
    pub delta: f64,
    pub drift: f64,
}

impl LinearOperator {
    pub fn new(delta: f64) -> Self {
        LinearOperator { delta, drift: 0.0 }
    }

    pub fn with_drift(delta: f64, drift: f64) -> Self {
        LinearOperator { delta, drift }
    }

    /// Growth rate of FFT slot `j` and eigenvalue `lambda`. The Nyquist slot
    /// carries no dispersive (odd) part so real fields stay real.
    pub fn rate(&self, grid: &Grid, j: usize, lambda: f64) -> Complex64 {
        let xi = grid.wavenumber(j);
        let xo = grid.odd_wavenumber(j);
        Complex64::new(
            -self.delta * (xi * xi + lambda),
            xo * xo * xo + xo * lambda - self.drift * xo,
        )
    }

    /// Multiply every mode by `exp(rate · t)`.
    pub fn propagate(&self, sf: &SpectralField, lambdas: &[f64], t: f64) -> Result<SpectralField> {
        let grid = &sf.grid;
        let nm = grid.n_modes();
        let mut out = sf.clone();
        if t == 0.0 {
            return Ok(out);
        }
        for j in 0..grid.nx {
            for (l, &lam) in lambdas.iter().enumerate().take(nm) {
                let r = self.rate(grid, j, lam);
                let growth = r.re * t;
                if growth > MAX_GROWTH_EXPONENT {
                    return Err(ZkError::Overflow { rate: r.re, time: t });
                }
                out.coeffs[j * nm + l] *= (r * t).exp();
            }
        }
        Ok(out)
    }
}

/// Homogeneous evolution over `params.t`. With `δ = 0` any real `t` is allowed.
pub fn propagate(sf: &SpectralField, lambdas: &[f64], params: DispersionParams) -> Result<SpectralField> {
    if params.delta > 0.0 && params.t < 0.0 {
        // Backward parabolic evolution is only representable for short times.
        let worst = lambdas.iter().fold(0.0f64, |m, &l| m.max(l));
        let xi = std::f64::consts::PI * (sf.grid.nx / 2) as f64 / sf.grid.x_half_width;
        let growth = -params.t * params.delta * (xi * xi + worst);
        if growth > MAX_GROWTH_EXPONENT {
            return Err(ZkError::Overflow {
                rate: params.delta * (xi * xi + worst),
                time: params.t,
            });
        }
    }
    LinearOperator::new(params.delta).propagate(sf, lambdas, params.t)
}

/// Composite Gauss–Legendre rule for the Duhamel integral.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DuhamelQuadrature {
    pub nodes: usize,
    pub panels: usize,
}

/// `E(t) u₀ + ∫₀ᵗ E(t - τ) f(τ) dτ`, the integral by composite Gauss–Legendre.
pub fn duhamel<F>(
    u0: &SpectralField,
    forcing: F,
    lambdas: &[f64],
    params: DispersionParams,
    quad: DuhamelQuadrature,
) -> Result<SpectralField>
where
    F: Fn(f64) -> Result<SpectralField>,
{
    if quad.nodes < 2 || quad.panels < 1 {
        return Err(ZkError::Config("Duhamel quadrature needs >= 2 nodes and >= 1 panel".into()));
    }
    let op = LinearOperator::new(params.delta);
    let mut out = op.propagate(u0, lambdas, params.t)?;
    if params.t == 0.0 {
        return Ok(out);
    }
    for (tau, w) in composite_gauss(0.0, params.t, quad.nodes, quad.panels) {
        let f = forcing(tau)?;
        if !f.grid.compatible(&u0.grid) {
            return Err(ZkError::GridMismatch("forcing grid differs from initial data".into()));
        }
        let contribution = op.propagate(&f, lambdas, params.t - tau)?;
        out.axpy(w, &contribution);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{BoundaryCase, EigenBasis};
    use std::sync::Arc;

    fn grid() -> (Arc<Grid>, Vec<f64>) {
        // X = π gives ξ_j = j.
        let g = Grid::new(BoundaryCase::Dirichlet, std::f64::consts::PI, 16, std::f64::consts::PI, 6)
            .unwrap();
        let lam = EigenBasis::for_grid(&g).unwrap().lambdas();
        (g, lam)
    }

    #[test]
    fn symbol_examples() {
        assert_eq!(symbol(0.0, 0.0, 0.0), Complex64::new(0.0, 0.0));
        assert_eq!(symbol(1.0, 1.0, 1.0), Complex64::new(-2.0, 2.0));
        for (xi, lam) in [(0.3, 4.0), (-2.5, 9.0), (7.0, 0.0)] {
            assert_eq!(symbol(xi, lam, 0.0).re, 0.0);
        }
    }

    #[test]
    fn propagation_examples() {
        let (g, lam) = grid();
        let mut sf = SpectralField::zeros(g.clone());
        sf.set(1, 0, Complex64::new(0.3, 0.4));
        sf.set(-1, 0, Complex64::new(0.3, -0.4));
        sf.set(3, 2, Complex64::new(-1.0, 0.1));
        sf.set(-3, 2, Complex64::new(-1.0, -0.1));
        assert_eq!(propagate(&sf, &lam, DispersionParams::new(0.0, 0.0).unwrap()).unwrap(), sf);

        let out = propagate(&sf, &lam, DispersionParams::new(0.0, 1.0).unwrap()).unwrap();
        for (a, b) in out.coeffs.iter().zip(&sf.coeffs) {
            assert!((a.norm() - b.norm()).abs() <= 1e-14);
        }
        // mode ξ = 1, λ = 1 (l = 0 in case a with L = π), δ = 1: decay e^{-2}
        let out = propagate(&sf, &lam, DispersionParams::new(1.0, 1.0).unwrap()).unwrap();
        let ratio = out.get(1, 0).norm() / sf.get(1, 0).norm();
        assert!((ratio - (-2.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn backward_parabolic_overflow_is_guarded() {
        let (g, lam) = grid();
        let sf = SpectralField::zeros(g);
        let r = propagate(&sf, &lam, DispersionParams::new(1.0, -100.0).unwrap());
        assert!(matches!(r, Err(ZkError::Overflow { .. })));
    }

    #[test]
    fn duhamel_closed_forms() {
        let (g, lam) = grid();
        let params = DispersionParams::new(0.5, 0.8).unwrap();
        let quad = DuhamelQuadrature { nodes: 8, panels: 1 };
        let mut u0 = SpectralField::zeros(g.clone());
        u0.set(2, 1, Complex64::new(1.0, 0.0));
        u0.set(-2, 1, Complex64::new(1.0, 0.0));
        let zero = SpectralField::zeros(g.clone());
        let h = duhamel(&u0, |_| Ok(zero.clone()), &lam, params, quad).unwrap();
        assert_eq!(h, propagate(&u0, &lam, params).unwrap());

        let mut f = SpectralField::zeros(g.clone());
        let fhat = Complex64::new(0.7, -0.2);
        f.set(1, 0, fhat);
        f.set(-1, 0, fhat.conj());
        // (ξ, λ) = (0, λ_0) with δ = 0 gives r = 0 → f̂ t
        f.set(0, 1, Complex64::new(0.25, 0.0));
        let out = duhamel(&zero, |_| Ok(f.clone()), &lam, params, quad).unwrap();
        let r = symbol(1.0, lam[0], params.delta);
        let expected = fhat * ((r * params.t).exp() - 1.0) / r;
        assert!((out.get(1, 0) - expected).norm() < 1e-12);

        let p0 = DispersionParams::new(0.0, 0.8).unwrap();
        let out = duhamel(&zero, |_| Ok(f.clone()), &lam, p0, quad).unwrap();
        let r0 = symbol(0.0, lam[1], 0.0);
        assert_eq!(r0.im, 0.0);
        assert!((out.get(0, 1).re - 0.25 * 0.8).abs() < 1e-14);
    }
}
