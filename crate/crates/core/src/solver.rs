//! Slab-wise fixed-point integration of
//! `u_t + u_xxx + u_xyy - δΔu + (g_h(u))_x = f`.
//!
//! Each slab is one step of Gauss collocation applied to the Duhamel form
//! (integrating-factor variables), so the linear part is exact and the
//! nonlinear source is integrated with `m` Gauss nodes. The collocation
//! equations are solved by Picard iteration of the map
//! `v ↦ E(t)u_start + ∫ E(t - τ)(f - (g_h(v))_x)(τ) dτ`, whose Lipschitz
//! constant shrinks with the slab length; non-convergence halves the slab.

use std::sync::{Arc, Mutex};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::basis::{Field, SpectralField, Transform};
use crate::error::{Result, ZkError};
use crate::nonlinearity::{flux_x_spectral, Nonlinearity, TruncatedNonlinearity};
use crate::propagator::LinearOperator;
use crate::quadrature::{collocation_matrix, gauss_legendre_unit};
use crate::weights::{hk_alpha_norm_spectral, poly_weight, weighted_sum, xk_alpha_seminorms, XSeminorms};

/// Mass fraction allowed in the outer tenth of the window before a run is flagged.
pub const LEAKAGE_LIMIT: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// parabolic regularization `δ ∈ [0, 1]`
    pub delta: f64,
    /// truncation parameter of the flux; `None` uses `g` itself
    pub h: Option<f64>,
    pub t_final: f64,
    /// slab length `t₀`
    pub t0: f64,
    /// relative fixed-point tolerance
    pub tol: f64,
    pub max_iter: usize,
    /// Gauss nodes per slab
    pub nodes: usize,
    /// snapshot every this many slabs
    pub snapshot_every: usize,
    pub max_halvings: u32,
    /// keep the collocation states for space-time quadrature
    pub record_quadrature: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            delta: 0.0,
            h: None,
            t_final: 1.0,
            t0: 0.01,
            tol: 1e-12,
            max_iter: 60,
            nodes: 2,
            snapshot_every: 10,
            max_halvings: 6,
            record_quadrature: true,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(ZkError::Config(m));
        if !(0.0..=1.0).contains(&self.delta) {
            return fail(format!("delta must lie in [0, 1], got {}", self.delta));
        }
        if !(self.t_final > 0.0 && self.t_final.is_finite()) {
            return fail(format!("final time must be positive, got {}", self.t_final));
        }
        if !(self.t0 > 0.0 && self.t0 <= self.t_final) {
            return fail(format!("slab length must lie in (0, T], got {}", self.t0));
        }
        if !(self.tol > 0.0 && self.tol <= 1e-2) {
            return fail(format!("tolerance must lie in (0, 1e-2], got {}", self.tol));
        }
        if self.max_iter < 2 {
            return fail("max_iter must be at least 2".into());
        }
        if !(1..=8).contains(&self.nodes) {
            return fail(format!("nodes per slab must lie in 1..=8, got {}", self.nodes));
        }
        if self.snapshot_every == 0 {
            return fail("snapshot stride must be positive".into());
        }
        if let Some(h) = self.h {
            if !(h > 0.0 && h <= 1.0) {
                return fail(format!("truncation h must lie in (0, 1], got {h}"));
            }
        }
        Ok(())
    }

    /// Number of slabs and the slab length actually used (`T` split evenly).
    pub fn slabs(&self) -> (usize, f64) {
        let n = ((self.t_final / self.t0) - 1e-9).ceil().max(1.0) as usize;
        (n, self.t_final / n as f64)
    }
}

/// Right-hand side `f(t)` in spectral form; `None` means zero.
pub trait Forcing: Sync {
    fn at(&self, t: f64, tr: &Transform) -> Result<Option<SpectralField>>;
}

pub struct NoForcing;

impl Forcing for NoForcing {
    fn at(&self, _t: f64, _tr: &Transform) -> Result<Option<SpectralField>> {
        Ok(None)
    }
}

/// Forcing sampled from a function `f(t, x, y)` at the grid nodes.
pub struct FnForcing<F: Fn(f64, f64, f64) -> f64 + Sync>(pub F);

impl<F: Fn(f64, f64, f64) -> f64 + Sync> Forcing for FnForcing<F> {
    fn at(&self, t: f64, tr: &Transform) -> Result<Option<SpectralField>> {
        let f = Field::from_fn(tr.grid.clone(), |x, y| (self.0)(t, x, y));
        Ok(Some(tr.to_spectral(&f)?))
    }
}

/// `θ(t) · profile`.
pub struct SeparableForcing<T: Fn(f64) -> f64 + Sync> {
    pub profile: SpectralField,
    pub time: T,
}

impl<T: Fn(f64) -> f64 + Sync> Forcing for SeparableForcing<T> {
    fn at(&self, t: f64, _tr: &Transform) -> Result<Option<SpectralField>> {
        Ok(Some(self.profile.scale((self.time)(t))))
    }
}

/// A space-time quadrature node: `∫₀ᵀ F(u(t)) dt ≈ Σ weight · F(state)`.
#[derive(Clone, Debug)]
pub struct QuadNode {
    pub t: f64,
    pub weight: f64,
    pub state: SpectralField,
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub config: RunConfig,
    pub times: Vec<f64>,
    pub snapshots: Vec<Field>,
    pub states: Vec<SpectralField>,
    /// Picard iterations of each slab (largest over its sub-slabs)
    pub slab_iterations: Vec<usize>,
    pub slab_halvings: Vec<u32>,
    /// mass fraction in `|x| > 0.9 X`, per snapshot
    pub leakage: Vec<f64>,
    pub quadrature: Vec<QuadNode>,
    pub warnings: Vec<String>,
    pub flagged: bool,
    /// largest `|u|` met by the flux evaluation
    pub max_abs: f64,
    pub max_aliasing: f64,
}

impl Trajectory {
    pub fn final_state(&self) -> &SpectralField {
        self.states.last().expect("trajectory has at least the initial state")
    }

    pub fn max_iterations(&self) -> usize {
        self.slab_iterations.iter().copied().max().unwrap_or(0)
    }
}

/// Result of applying the map once to a guess of the stage values.
#[derive(Clone, Debug)]
pub struct SlabImage {
    pub stages: Vec<SpectralField>,
    pub end: SpectralField,
}

/// Outcome of one (possibly subdivided) slab.
#[derive(Clone, Debug)]
pub struct SlabOutcome {
    pub end: SpectralField,
    pub iterations: usize,
    pub halvings: u32,
    pub nodes: Vec<QuadNode>,
    pub max_abs: f64,
    pub max_aliasing: f64,
}

/// Per-step exponential factors, indexed by mode.
struct StepTables {
    h: f64,
    /// `E(c_i h)`
    start: Vec<Vec<Complex64>>,
    /// `E((c_i - c_j) h)`, index `i * m + j`
    cross: Vec<Vec<Complex64>>,
    /// `E(h)`
    full: Vec<Complex64>,
    /// `E((1 - c_j) h)`
    finish: Vec<Vec<Complex64>>,
}

pub struct Solver {
    pub transform: Arc<Transform>,
    pub nonlinearity: TruncatedNonlinearity,
    pub config: RunConfig,
    pub op: LinearOperator,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    a: Vec<Vec<f64>>,
    lambdas: Vec<f64>,
    /// `g_h(u) - g'(0)u` vanishes identically
    linear_flux: bool,
    tables: Mutex<Vec<Arc<StepTables>>>,
}

impl Solver {
    pub fn new(transform: Arc<Transform>, base: Nonlinearity, config: RunConfig) -> Result<Self> {
        config.validate()?;
        let linear_flux = base.flux.is_affine();
        let drift = base.drift();
        let nonlinearity = TruncatedNonlinearity::new(base, config.h)?;
        let (nodes, weights) = gauss_legendre_unit(config.nodes);
        let a = collocation_matrix(&nodes);
        let lambdas = transform.lambdas();
        Ok(Solver {
            op: LinearOperator::with_drift(config.delta, drift),
            transform,
            nonlinearity,
            config,
            nodes,
            weights,
            a,
            lambdas,
            linear_flux,
            tables: Mutex::new(Vec::new()),
        })
    }

    fn factors(&self, t: f64) -> Result<Vec<Complex64>> {
        let grid = &self.transform.grid;
        let nm = grid.n_modes();
        let mut out = Vec::with_capacity(grid.spectral_len());
        for j in 0..grid.nx {
            for &lam in self.lambdas.iter().take(nm) {
                let r = self.op.rate(grid, j, lam) * t;
                if r.re > 700.0 {
                    return Err(ZkError::Overflow { rate: r.re / t, time: t });
                }
                out.push(r.exp());
            }
        }
        Ok(out)
    }

    fn tables(&self, h: f64) -> Result<Arc<StepTables>> {
        let mut cache = self.tables.lock().expect("table cache poisoned");
        if let Some(t) = cache.iter().find(|t| t.h == h) {
            return Ok(t.clone());
        }
        let c = &self.nodes;
        let m = c.len();
        let mut cross = Vec::with_capacity(m * m);
        for i in 0..m {
            for j in 0..m {
                cross.push(self.factors((c[i] - c[j]) * h)?);
            }
        }
        let t = Arc::new(StepTables {
            h,
            start: c.iter().map(|ci| self.factors(ci * h)).collect::<Result<_>>()?,
            cross,
            full: self.factors(h)?,
            finish: c.iter().map(|cj| self.factors((1.0 - cj) * h)).collect::<Result<_>>()?,
        });
        if cache.len() >= 16 {
            cache.remove(0);
        }
        cache.push(t.clone());
        Ok(t)
    }

    fn scaled(factor: &[Complex64], sf: &SpectralField) -> SpectralField {
        SpectralField {
            grid: sf.grid.clone(),
            coeffs: factor.iter().zip(&sf.coeffs).map(|(e, c)| e * c).collect(),
        }
    }

    /// `f - (g_h(v) - g'(0)v)_x` at each stage, with the largest `|v|` and aliasing ratio.
    fn sources(
        &self,
        stages: &[SpectralField],
        forcing: &[Option<SpectralField>],
    ) -> Result<(Vec<SpectralField>, f64, f64)> {
        let grid = &self.transform.grid;
        let eval = |(v, f): (&SpectralField, &Option<SpectralField>)| -> Result<(SpectralField, f64, f64)> {
            let mut n = match f {
                Some(f) => f.clone(),
                None => SpectralField::zeros(grid.clone()),
            };
            if self.linear_flux {
                return Ok((n, 0.0, 0.0));
            }
            let term = flux_x_spectral(&self.transform, v, &self.nonlinearity, self.op.drift)?;
            n.axpy(-1.0, &term.spectral);
            Ok((n, term.max_abs, term.aliasing))
        };
        #[cfg(feature = "parallel")]
        let parts: Vec<Result<(SpectralField, f64, f64)>> = {
            use rayon::prelude::*;
            stages.par_iter().zip(forcing.par_iter()).map(eval).collect()
        };
        #[cfg(not(feature = "parallel"))]
        let parts: Vec<Result<(SpectralField, f64, f64)>> = stages.iter().zip(forcing.iter()).map(eval).collect();
        let mut out = Vec::with_capacity(stages.len());
        let (mut max_abs, mut alias) = (0.0f64, 0.0f64);
        for p in parts {
            let (n, a, r) = p?;
            out.push(n);
            max_abs = max_abs.max(a);
            alias = alias.max(r);
        }
        Ok((out, max_abs, alias))
    }

    fn forcing_at_stages(&self, forcing: &dyn Forcing, t_start: f64, h: f64) -> Result<Vec<Option<SpectralField>>> {
        self.nodes.iter().map(|c| forcing.at(t_start + c * h, &self.transform)).collect()
    }

    fn image(
        &self,
        tables: &StepTables,
        u_start: &SpectralField,
        sources: &[SpectralField],
    ) -> (Vec<SpectralField>, SpectralField) {
        let m = self.nodes.len();
        let h = tables.h;
        let stages = (0..m)
            .map(|i| {
                let mut s = Self::scaled(&tables.start[i], u_start);
                for (j, n) in sources.iter().enumerate() {
                    let w = h * self.a[i][j];
                    let e = &tables.cross[i * m + j];
                    for ((acc, ek), nk) in s.coeffs.iter_mut().zip(e).zip(&n.coeffs) {
                        *acc += ek * nk * w;
                    }
                }
                s
            })
            .collect();
        let mut end = Self::scaled(&tables.full, u_start);
        for (j, n) in sources.iter().enumerate() {
            let w = h * self.weights[j];
            for ((acc, ek), nk) in end.coeffs.iter_mut().zip(&tables.finish[j]).zip(&n.coeffs) {
                *acc += ek * nk * w;
            }
        }
        (stages, end)
    }

    /// One application of the contraction map to stage guesses `guess` on
    /// `[t_start, t_start + h]`.
    pub fn lambda_map(
        &self,
        u_start: &SpectralField,
        forcing: &dyn Forcing,
        t_start: f64,
        h: f64,
        guess: &[SpectralField],
    ) -> Result<SlabImage> {
        if guess.len() != self.nodes.len() {
            return Err(ZkError::Shape {
                expected: self.nodes.len(),
                got: guess.len(),
            });
        }
        let tables = self.tables(h)?;
        let f = self.forcing_at_stages(forcing, t_start, h)?;
        let (sources, _, _) = self.sources(guess, &f)?;
        let (stages, end) = self.image(&tables, u_start, &sources);
        Ok(SlabImage { stages, end })
    }

    /// A single collocation step of length `h`; `Err` carries the change history.
    fn step(
        &self,
        u_start: &SpectralField,
        forcing: &dyn Forcing,
        t_start: f64,
        h: f64,
    ) -> Result<std::result::Result<SlabOutcome, Vec<f64>>> {
        let tables = self.tables(h)?;
        let f = self.forcing_at_stages(forcing, t_start, h)?;
        let mut stages = vec![u_start.clone(); self.nodes.len()];
        let mut history = Vec::new();
        let (mut max_abs, mut max_alias) = (0.0f64, 0.0f64);
        for iter in 1..=self.config.max_iter {
            let (sources, a, r) = match self.sources(&stages, &f) {
                Ok(s) => s,
                Err(ZkError::NonFinite(_)) => return Ok(Err(history)),
                Err(e) => return Err(e),
            };
            max_abs = max_abs.max(a);
            max_alias = max_alias.max(r);
            let (next, _) = self.image(&tables, u_start, &sources);
            let mut change = 0.0f64;
            for (new, old) in next.iter().zip(&stages) {
                let d = new.sub(old).l2_norm();
                let n = new.l2_norm();
                let rel = if d == 0.0 { 0.0 } else if n > 0.0 { d / n } else { f64::INFINITY };
                change = change.max(rel);
            }
            history.push(change);
            stages = next;
            if !change.is_finite() || (iter > 3 && change > 1e3) {
                return Ok(Err(history));
            }
            if change <= self.config.tol {
                // sources of the converged stages close the step
                let (sources, a, r) = match self.sources(&stages, &f) {
                    Ok(s) => s,
                    Err(ZkError::NonFinite(_)) => return Ok(Err(history)),
                    Err(e) => return Err(e),
                };
                let (_, end) = self.image(&tables, u_start, &sources);
                if end.coeffs.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
                    return Ok(Err(history));
                }
                let nodes = if self.config.record_quadrature {
                    stages
                        .into_iter()
                        .zip(self.nodes.iter().zip(&self.weights))
                        .map(|(state, (c, w))| QuadNode {
                            t: t_start + c * h,
                            weight: h * w,
                            state,
                        })
                        .collect()
                } else {
                    Vec::new()
                };
                return Ok(Ok(SlabOutcome {
                    end,
                    iterations: iter,
                    halvings: 0,
                    nodes,
                    max_abs: max_abs.max(a),
                    max_aliasing: max_alias.max(r),
                }));
            }
        }
        Ok(Err(history))
    }

    /// Advance one slab of length `t0`, halving it (up to `max_halvings`
    /// times) until every sub-slab's iteration converges.
    pub fn solve_slab(
        &self,
        u_start: &SpectralField,
        forcing: &dyn Forcing,
        t_start: f64,
        t0: f64,
    ) -> Result<SlabOutcome> {
        let mut history = Vec::new();
        'attempt: for k in 0..=self.config.max_halvings {
            let pieces = 1usize << k;
            let h = t0 / pieces as f64;
            let mut u = u_start.clone();
            let mut total = SlabOutcome {
                end: u_start.clone(),
                iterations: 0,
                halvings: k,
                nodes: Vec::new(),
                max_abs: 0.0,
                max_aliasing: 0.0,
            };
            for p in 0..pieces {
                let step = match self.step(&u, forcing, t_start + p as f64 * h, h) {
                    Ok(s) => s,
                    Err(ZkError::Overflow { .. }) => {
                        history.push(f64::INFINITY);
                        continue 'attempt;
                    }
                    Err(e) => return Err(e),
                };
                match step {
                    Ok(s) => {
                        total.iterations = total.iterations.max(s.iterations);
                        total.nodes.extend(s.nodes);
                        total.max_abs = total.max_abs.max(s.max_abs);
                        total.max_aliasing = total.max_aliasing.max(s.max_aliasing);
                        u = s.end;
                    }
                    Err(h) => {
                        history.push(h.last().copied().unwrap_or(f64::NAN));
                        continue 'attempt;
                    }
                }
            }
            total.end = u;
            return Ok(total);
        }
        Err(ZkError::SlabFailure {
            start: t_start,
            halvings: self.config.max_halvings,
            history,
        })
    }

    /// Chain slabs over `[0, T]`.
    pub fn run(&self, u0: &Field, forcing: &dyn Forcing) -> Result<Trajectory> {
        let tr = &self.transform;
        if !u0.grid.compatible(&tr.grid) {
            return Err(ZkError::GridMismatch("initial data grid differs from the solver grid".into()));
        }
        let mut warnings = Vec::new();
        let decay = edge_fraction(u0);
        if decay > 1e-10 {
            warnings.push(format!(
                "initial data reaches {decay:.2e} of its maximum in the outer tenth of the window"
            ));
        }
        let (n_slabs, t0) = self.config.slabs();
        let mut state = tr.to_spectral(u0)?;
        let mut traj = Trajectory {
            config: self.config.clone(),
            times: vec![0.0],
            snapshots: vec![u0.clone()],
            states: vec![state.clone()],
            slab_iterations: Vec::with_capacity(n_slabs),
            slab_halvings: Vec::with_capacity(n_slabs),
            leakage: vec![leakage(tr, &state)?],
            quadrature: Vec::new(),
            warnings,
            flagged: false,
            max_abs: 0.0,
            max_aliasing: 0.0,
        };
        for s in 0..n_slabs {
            let t_start = s as f64 * t0;
            let out = self.solve_slab(&state, forcing, t_start, t0)?;
            traj.slab_iterations.push(out.iterations);
            traj.slab_halvings.push(out.halvings);
            traj.quadrature.extend(out.nodes);
            traj.max_abs = traj.max_abs.max(out.max_abs);
            traj.max_aliasing = traj.max_aliasing.max(out.max_aliasing);
            state = out.end;
            if (s + 1) % self.config.snapshot_every == 0 || s + 1 == n_slabs {
                traj.times.push(if s + 1 == n_slabs { self.config.t_final } else { (s + 1) as f64 * t0 });
                traj.snapshots.push(tr.from_spectral(&state)?);
                traj.leakage.push(leakage(tr, &state)?);
                traj.states.push(state.clone());
            }
        }
        let worst = traj.leakage.iter().fold(0.0f64, |m, &v| m.max(v));
        if worst > LEAKAGE_LIMIT {
            traj.flagged = true;
            traj.warnings
                .push(format!("mass fraction {worst:.2e} reached the outer tenth of the window"));
        }
        if traj.max_aliasing > crate::nonlinearity::ALIASING_THRESHOLD {
            traj.warnings.push(format!(
                "flux content beyond the resolved band reached {:.2e}",
                traj.max_aliasing
            ));
        }
        let halved = traj.slab_halvings.iter().filter(|&&h| h > 0).count();
        if halved > 0 {
            traj.warnings.push(format!("{halved} slabs needed halving"));
        }
        Ok(traj)
    }
}

/// Largest `|u|` on `|x| > 0.9 X` relative to the overall maximum.
pub fn edge_fraction(field: &Field) -> f64 {
    let g = &field.grid;
    let max = field.max_abs();
    if max == 0.0 {
        return 0.0;
    }
    let mut edge = 0.0f64;
    for (i, &x) in g.x_nodes.iter().enumerate() {
        if x.abs() > 0.9 * g.x_half_width {
            for k in 0..g.ny {
                edge = edge.max(field.at(i, k).abs());
            }
        }
    }
    edge / max
}

/// Fraction of `∬u²` carried by `|x| > 0.9 X`.
pub fn leakage(tr: &Transform, sf: &SpectralField) -> Result<f64> {
    let yc = tr.x_inverse(sf)?;
    let nm = tr.basis.len();
    let x_half = tr.grid.x_half_width;
    let col = |i: usize| yc.data[i * nm..(i + 1) * nm].iter().map(|c| c * c).sum::<f64>();
    let total = weighted_sum(tr, col, |_| 1.0);
    if total == 0.0 {
        return Ok(0.0);
    }
    let outer = weighted_sum(tr, col, |x| if x.abs() > 0.9 * x_half { 1.0 } else { 0.0 });
    Ok(outer / total)
}

/// `v(x + s)`: multiply by `e^{iξs}` (Nyquist slot left untouched, as in the
/// drift term of the linear operator).
pub fn shift_x(sf: &SpectralField, s: f64) -> SpectralField {
    let grid = &sf.grid;
    let nm = grid.n_modes();
    let mut out = sf.clone();
    for j in 0..grid.nx {
        let phase = Complex64::from_polar(1.0, grid.odd_wavenumber(j) * s);
        for c in &mut out.coeffs[j * nm..(j + 1) * nm] {
            *c *= phase;
        }
    }
    out
}

/// One row of a regularization sweep.
#[derive(Clone, Debug, Serialize)]
pub struct SweepRow {
    pub h: f64,
    pub delta: f64,
    pub error: Option<String>,
    pub max_abs: f64,
    pub max_iterations: usize,
    /// components of the `X^{0,α}` norm of `u_h`
    pub x_alpha: Option<XSeminorms>,
    /// `h^{1/2} ‖u_h‖_{L₂(0,T; H^{1,α})}`
    pub h_weighted_h1: f64,
    /// `sup_t ‖u_h - u_{h_next}‖_{L₂}`, absent on the last row
    pub distance_l2: Option<f64>,
    /// `sup_t ‖(u_h - u_{h_next})(1+x₊)^α‖_{L₂}`
    pub distance_weighted: Option<f64>,
}

/// Runs for each `h` (strictly decreasing) and the distances between neighbours.
/// With `delta_follows_h` the regularization is set to `δ = h`.
pub fn regularization_sweep(
    transform: &Arc<Transform>,
    base: &Nonlinearity,
    config: &RunConfig,
    u0: &Field,
    forcing: &dyn Forcing,
    hs: &[f64],
    alpha: f64,
    delta_follows_h: bool,
) -> Result<Vec<SweepRow>> {
    if hs.is_empty() {
        return Err(ZkError::Config("empty sweep list".into()));
    }
    if hs.windows(2).any(|w| w[1] >= w[0]) {
        return Err(ZkError::Config("sweep values of h must be strictly decreasing".into()));
    }
    let run_one = |h: f64| -> (f64, Result<Trajectory>) {
        let mut cfg = config.clone();
        cfg.h = Some(h);
        if delta_follows_h {
            cfg.delta = h;
        }
        let delta = cfg.delta;
        (delta, Solver::new(transform.clone(), base.clone(), cfg).and_then(|s| s.run(u0, forcing)))
    };
    #[cfg(feature = "parallel")]
    let runs: Vec<(f64, Result<Trajectory>)> = {
        use rayon::prelude::*;
        hs.par_iter().map(|&h| run_one(h)).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let runs: Vec<(f64, Result<Trajectory>)> = hs.iter().map(|&h| run_one(h)).collect();

    let tr = transform.as_ref();
    let mut rows = Vec::with_capacity(hs.len());
    for (idx, (&h, (delta, run))) in hs.iter().zip(&runs).enumerate() {
        let mut row = SweepRow {
            h,
            delta: *delta,
            error: None,
            max_abs: 0.0,
            max_iterations: 0,
            x_alpha: None,
            h_weighted_h1: 0.0,
            distance_l2: None,
            distance_weighted: None,
        };
        match run {
            Err(e) => row.error = Some(e.to_string()),
            Ok(traj) => {
                row.max_abs = traj.snapshots.iter().map(Field::max_abs).fold(0.0, f64::max);
                row.max_iterations = traj.max_iterations();
                row.x_alpha = Some(xk_alpha_seminorms(tr, traj, 0, alpha)?);
                let mut acc = 0.0;
                for node in &traj.quadrature {
                    acc += node.weight * hk_alpha_norm_spectral(tr, &node.state, 1, alpha)?.powi(2);
                }
                row.h_weighted_h1 = (h * acc).sqrt();
                if let Some((_, Ok(next))) = runs.get(idx + 1) {
                    let (mut d, mut dw) = (0.0f64, 0.0f64);
                    for (a, b) in traj.states.iter().zip(&next.states) {
                        let diff = a.sub(b);
                        d = d.max(diff.l2_norm());
                        let yc = tr.x_inverse(&diff)?;
                        let nm = tr.basis.len();
                        let w = weighted_sum(
                            tr,
                            |i| yc.data[i * nm..(i + 1) * nm].iter().map(|c| c * c).sum(),
                            |x| poly_weight(x, 2.0 * alpha),
                        );
                        dw = dw.max(w.sqrt());
                    }
                    row.distance_l2 = Some(d);
                    row.distance_weighted = Some(dw);
                }
            }
        }
        rows.push(row);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{BoundaryCase, Grid};
    use crate::nonlinearity::Flux;
    use std::f64::consts::PI;

    fn setup(case: BoundaryCase, nx: usize, ny: usize) -> Arc<Transform> {
        let g = Grid::new(case, 10.0, nx, 2.0 * PI, ny).unwrap();
        Arc::new(Transform::new(&g).unwrap())
    }

    fn bump(tr: &Transform, amp: f64) -> Field {
        let basis = tr.basis.clone();
        Field::from_fn(tr.grid.clone(), move |x, y| {
            amp * (-(x * x)).exp() * (basis.pairs[0].value(y) + 0.3 * basis.pairs[1].value(y))
        })
    }

    #[test]
    fn config_validation() {
        assert!(RunConfig::default().validate().is_ok());
        let bad = [
            RunConfig { t0: 2.0, ..RunConfig::default() },
            RunConfig { tol: 0.1, ..RunConfig::default() },
            RunConfig { max_iter: 1, ..RunConfig::default() },
            RunConfig { delta: 1.5, ..RunConfig::default() },
            RunConfig { h: Some(0.0), ..RunConfig::default() },
        ];
        for c in bad {
            assert!(c.validate().is_err(), "{c:?}");
        }
        let c = RunConfig { t_final: 1.0, t0: 0.3, ..RunConfig::default() };
        let (n, t0) = c.slabs();
        assert_eq!(n, 4);
        assert!((t0 - 0.25).abs() < 1e-15);
    }

    #[test]
    fn zero_data_takes_one_iteration() {
        let tr = setup(BoundaryCase::Periodic, 32, 8);
        let s = Solver::new(tr.clone(), Nonlinearity::new(Flux::zk()).unwrap(), RunConfig::default()).unwrap();
        let z = SpectralField::zeros(tr.grid.clone());
        let out = s.solve_slab(&z, &NoForcing, 0.0, 0.1).unwrap();
        assert_eq!(out.iterations, 1);
        assert_eq!(out.end.l2_norm(), 0.0);
    }

    #[test]
    fn linear_problem_takes_two_iterations() {
        let tr = setup(BoundaryCase::Dirichlet, 32, 8);
        let s = Solver::new(tr.clone(), Nonlinearity::new(Flux::linear(0.7)).unwrap(), RunConfig::default()).unwrap();
        let u = tr.to_spectral(&bump(&tr, 1.0)).unwrap();
        let out = s.solve_slab(&u, &NoForcing, 0.0, 0.1).unwrap();
        assert_eq!(out.iterations, 2);
        // exact: the linear flux is pure advection folded into the propagator
        let exact = LinearOperator::with_drift(0.0, 0.7).propagate(&u, &tr.lambdas(), 0.1).unwrap();
        assert!(out.end.sub(&exact).l2_norm() < 1e-13 * exact.l2_norm());
    }

    #[test]
    fn converged_stages_are_a_fixed_point() {
        let tr = setup(BoundaryCase::Neumann, 64, 8);
        let s = Solver::new(tr.clone(), Nonlinearity::new(Flux::zk()).unwrap(), RunConfig::default()).unwrap();
        let u = tr.to_spectral(&bump(&tr, 1.0)).unwrap();
        let out = s.solve_slab(&u, &NoForcing, 0.0, 0.05).unwrap();
        let stages: Vec<SpectralField> = out.nodes.iter().map(|n| n.state.clone()).collect();
        let again = s.lambda_map(&u, &NoForcing, 0.0, 0.05, &stages).unwrap();
        for (a, b) in again.stages.iter().zip(&stages) {
            assert!(a.sub(b).l2_norm() <= 10.0 * s.config.tol * b.l2_norm());
        }
        assert!(again.end.sub(&out.end).l2_norm() <= 10.0 * s.config.tol * out.end.l2_norm());
    }

    #[test]
    fn oversized_slab_is_halved() {
        let tr = setup(BoundaryCase::Periodic, 64, 8);
        let cfg = RunConfig { t0: 1.0, t_final: 1.0, ..RunConfig::default() };
        let s = Solver::new(tr.clone(), Nonlinearity::new(Flux::zk()).unwrap(), cfg).unwrap();
        let u = tr.to_spectral(&bump(&tr, 3.0)).unwrap();
        let out = s.solve_slab(&u, &NoForcing, 0.0, 1.0).unwrap();
        assert!(out.halvings > 0);
    }

    #[test]
    fn single_mode_linear_run_is_analytic() {
        let tr = setup(BoundaryCase::Periodic, 32, 8);
        let cfg = RunConfig { t0: 0.25, ..RunConfig::default() };
        let s = Solver::new(tr.clone(), Nonlinearity::new(Flux::zero()).unwrap(), cfg).unwrap();
        let p = tr.basis.pairs[1];
        let xi = tr.grid.wavenumber(2);
        let u0 = Field::from_fn(tr.grid.clone(), |x, y| (xi * x).cos() * p.value(y));
        let traj = s.run(&u0, &NoForcing).unwrap();
        let w = xi * xi * xi + xi * p.lambda;
        let exact = Field::from_fn(tr.grid.clone(), |x, y| (xi * x + w * 1.0).cos() * p.value(y));
        assert!(traj.snapshots.last().unwrap().sub(&exact).max_abs() < 1e-10);
        assert!(traj.warnings.iter().any(|w| w.contains("outer tenth")));
    }

    #[test]
    fn zero_data_gives_zero_trajectory() {
        let tr = setup(BoundaryCase::Mixed, 32, 8);
        let s = Solver::new(tr.clone(), Nonlinearity::new(Flux::zk()).unwrap(), RunConfig::default()).unwrap();
        let traj = s.run(&Field::zeros(tr.grid.clone()), &NoForcing).unwrap();
        assert!(traj.snapshots.iter().all(|f| f.max_abs() == 0.0));
        assert_eq!(traj.times[0], 0.0);
        assert_eq!(*traj.times.last().unwrap(), 1.0);
    }

    #[test]
    fn shift_matches_translation() {
        let tr = setup(BoundaryCase::Periodic, 64, 8);
        let f = bump(&tr, 1.0);
        let s = shift_x(&tr.to_spectral(&f).unwrap(), 1.3);
        let basis = tr.basis.clone();
        let expected = Field::from_fn(tr.grid.clone(), move |x, y| {
            (-((x + 1.3) * (x + 1.3))).exp() * (basis.pairs[0].value(y) + 0.3 * basis.pairs[1].value(y))
        });
        assert!(tr.from_spectral(&s).unwrap().sub(&expected).max_abs() < 1e-12);
    }

    #[test]
    fn sweep_rejects_bad_lists() {
        let tr = setup(BoundaryCase::Periodic, 32, 8);
        let nl = Nonlinearity::new(Flux::zk()).unwrap();
        let z = Field::zeros(tr.grid.clone());
        let cfg = RunConfig::default();
        assert!(regularization_sweep(&tr, &nl, &cfg, &z, &NoForcing, &[], 0.0, false).is_err());
        assert!(regularization_sweep(&tr, &nl, &cfg, &z, &NoForcing, &[0.5, 1.0], 0.0, false).is_err());
        let rows = regularization_sweep(&tr, &nl, &cfg, &z, &NoForcing, &[1.0], 0.0, false).unwrap();
        assert_eq!(rows.len(), 1);
        assert!(rows[0].distance_l2.is_none());
    }
}
