//! Browser bindings: eigenfunction profiles, the `ρ` weight family and a small
//! stepping simulation drawn as a heat map by `www/index.html`.

use std::f64::consts::PI;
use std::sync::Arc;

use wasm_bindgen::prelude::*;

use zkstrip::basis::{BoundaryCase, Grid, SpectralField, Transform};
use zkstrip::diagnostics::{energy_spectral, mass_spectral};
use zkstrip::io::gaussian_field;
use zkstrip::nonlinearity::{Flux, Nonlinearity};
use zkstrip::solver::{NoForcing, RunConfig, Solver};
use zkstrip::weights::make_rho;

fn js(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

fn case(tag: &str) -> Result<BoundaryCase, JsError> {
    BoundaryCase::from_tag(tag).map_err(js)
}

/// `count` eigenfunctions of `-d²/dy²` sampled at `samples` points of `[0, L]`,
/// row by row. The first `count` entries of the result are the eigenvalues.
#[wasm_bindgen]
pub fn eigen_profiles(tag: &str, width: f64, count: usize, samples: usize) -> Result<Vec<f64>, JsError> {
    let basis = zkstrip::basis::eigen_pairs(case(tag)?, width, count).map_err(js)?;
    let pairs = &basis.pairs;
    let mut out: Vec<f64> = pairs.iter().map(|p| p.lambda).collect();
    for p in pairs {
        out.extend((0..samples).map(|k| p.value(width * k as f64 / (samples - 1).max(1) as f64)));
    }
    Ok(out)
}

/// `ρ_{α,β}` and its first derivative on `[lo, hi]`, interleaved.
#[wasm_bindgen]
pub fn rho_curve(alpha: f64, beta: f64, lo: f64, hi: f64, samples: usize) -> Result<Vec<f64>, JsError> {
    let rho = make_rho(alpha, beta).map_err(js)?;
    let mut out = Vec::with_capacity(2 * samples);
    for k in 0..samples {
        let x = lo + (hi - lo) * k as f64 / (samples - 1).max(1) as f64;
        out.push(rho.value(x));
        out.push(rho.d(x, 1));
    }
    Ok(out)
}

#[wasm_bindgen]
pub struct Strip {
    transform: Arc<Transform>,
    solver: Solver,
    flux: Flux,
    state: SpectralField,
    time: f64,
    mass0: f64,
}

#[wasm_bindgen]
impl Strip {
    /// ZK flow `g = u²/2` from a Gaussian bump on a `nx × ny` grid of the
    /// window `(-x_half, x_half) × (0, 2π)`.
    #[wasm_bindgen(constructor)]
    pub fn new(tag: &str, x_half: f64, nx: usize, ny: usize, amplitude: f64, delta: f64) -> Result<Strip, JsError> {
        let grid = Grid::new(case(tag)?, x_half, nx, 2.0 * PI, ny).map_err(js)?;
        let transform = Arc::new(Transform::new(&grid).map_err(js)?);
        let flux = Flux::zk();
        let config = RunConfig {
            delta,
            t0: 0.02,
            record_quadrature: false,
            ..RunConfig::default()
        };
        let solver = Solver::new(transform.clone(), Nonlinearity::new(flux.clone()).map_err(js)?, config).map_err(js)?;
        let u0 = gaussian_field(&transform, amplitude, -x_half / 3.0, 2.0, &[1.0, 0.5]).map_err(js)?;
        let state = transform.to_spectral(&u0).map_err(js)?;
        let mass0 = mass_spectral(&state);
        Ok(Strip {
            transform,
            solver,
            flux,
            state,
            time: 0.0,
            mass0,
        })
    }

    /// Advance by `slabs` slabs of length 0.02.
    pub fn step(&mut self, slabs: usize) -> Result<(), JsError> {
        for _ in 0..slabs {
            let out = self.solver.solve_slab(&self.state, &NoForcing, self.time, 0.02).map_err(js)?;
            self.state = out.end;
            self.time += 0.02;
        }
        Ok(())
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    /// `∬u²` relative to its initial value.
    pub fn mass_ratio(&self) -> f64 {
        mass_spectral(&self.state) / self.mass0
    }

    pub fn energy(&self) -> Result<f64, JsError> {
        Ok(energy_spectral(&self.transform, &self.state, &self.flux).map_err(js)?.conserved)
    }

    pub fn nx(&self) -> usize {
        self.transform.grid.nx
    }

    pub fn ny(&self) -> usize {
        self.transform.grid.ny
    }

    /// Nodal values, `x` index outer.
    pub fn values(&self) -> Result<Vec<f64>, JsError> {
        Ok(self.transform.from_spectral(&self.state).map_err(js)?.values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profiles_start_with_eigenvalues() {
        let v = eigen_profiles("a", PI, 3, 5).unwrap();
        assert_eq!(v.len(), 3 + 15);
        assert!((v[0] - 1.0).abs() < 1e-12);
        // sine profile vanishes at both walls
        assert!(v[3].abs() < 1e-12 && v[7].abs() < 1e-12);
    }

    #[test]
    fn strip_conserves_mass() {
        let mut s = Strip::new("d", 15.0, 32, 8, 0.5, 0.0).unwrap();
        s.step(5).unwrap();
        assert!((s.mass_ratio() - 1.0).abs() < 1e-12);
        assert_eq!(s.values().unwrap().len(), 32 * 8);
    }
}
