//! The `run`, `check`, `sweep` and `info` verbs, independent of argument parsing.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Serialize;

use crate::basis::{Field, Grid, SpectralField, Transform};
use crate::diagnostics::{
    dependence_sweep_report, dependence_terms, digest, interpolation_family_check, invariants, local_smoothing,
    perturb, standard_tests, weak_residual, weighted_estimate, BumpParams, CheckReport,
    DependenceLevel, InterpolationOrder,
};
use crate::error::{Result, ZkError};
use crate::io::{
    plot_script, write_csv, write_json, write_snapshot, ConfigFile, InvariantRow, SnapshotHeader, SweepSpec,
};
use crate::nonlinearity::{Nonlinearity, TruncatedNonlinearity};
use crate::propagator::symbol;
use crate::solver::{regularization_sweep, Forcing, NoForcing, RunConfig, Solver, Trajectory};
use crate::weights::{hk_alpha_norm_spectral, make_rho, Weight};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;

pub const CHECKS: [&str; 6] = [
    "conservation",
    "interpolation",
    "weak-residual",
    "energy-identity",
    "dependence",
    "smoothing",
];

/// Exit status for an error escaping a verb.
pub fn exit_code(e: &ZkError) -> i32 {
    match e {
        ZkError::SlabFailure { .. } | ZkError::Overflow { .. } | ZkError::NonFinite(..) | ZkError::NonRealSynthesis { .. } => {
            EXIT_SOLVER
        }
        _ => EXIT_USAGE,
    }
}

#[derive(Clone, Debug, Default)]
pub struct Options {
    pub config: PathBuf,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
}

/// Everything a verb needs, built from a config file.
pub struct Setup {
    pub config: ConfigFile,
    /// directory relative paths in the config are resolved against
    pub base_dir: PathBuf,
    pub out_dir: PathBuf,
    pub transform: Arc<Transform>,
    pub nl: Nonlinearity,
    pub u0: Field,
    pub forcing: Box<dyn Forcing>,
}

impl Setup {
    pub fn load(opts: &Options) -> Result<Self> {
        let mut config = ConfigFile::load(&opts.config)?;
        if let Some(s) = opts.seed {
            config.seed = s;
        }
        let base_dir = opts.config.parent().map(Path::to_path_buf).unwrap_or_default();
        let out_dir = config.resolve_out_dir(opts.out.as_deref());
        Self::build(config, base_dir, out_dir)
    }

    pub fn build(config: ConfigFile, base_dir: PathBuf, out_dir: PathBuf) -> Result<Self> {
        let grid = config.grid.build()?;
        let transform = Arc::new(Transform::new(&grid)?);
        let nl = config.flux.build()?;
        let u0 = config.initial.build(&transform, &base_dir)?;
        let forcing = config.forcing.build(&transform, &base_dir)?;
        Ok(Setup {
            config,
            base_dir,
            out_dir,
            transform,
            nl,
            u0,
            forcing,
        })
    }

    /// The same problem on another grid resolution.
    pub fn regrid(&self, nx: usize, ny: usize) -> Result<Self> {
        let mut config = self.config.clone();
        config.grid.nx = nx;
        config.grid.ny = ny;
        Self::build(config, self.base_dir.clone(), self.out_dir.clone())
    }

    pub fn solve(&self, run: &RunConfig) -> Result<Trajectory> {
        Solver::new(self.transform.clone(), self.nl.clone(), run.clone())?.run(&self.u0, self.forcing.as_ref())
    }

    fn solve_from(&self, run: &RunConfig, u0: &Field) -> Result<Trajectory> {
        Solver::new(self.transform.clone(), self.nl.clone(), run.clone())?.run(u0, self.forcing.as_ref())
    }

    fn grid(&self) -> &Arc<Grid> {
        &self.transform.grid
    }

    fn ensure_out_dir(&self) -> Result<()> {
        fs::create_dir_all(&self.out_dir)?;
        Ok(())
    }
}

#[cfg(feature = "parallel")]
fn map_runs<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync + Send) -> Vec<R> {
    use rayon::prelude::*;
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn map_runs<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync + Send) -> Vec<R> {
    items.iter().map(f).collect()
}

// ---------------------------------------------------------------------------
// run

#[derive(Clone, Debug, Serialize)]
pub struct RunSummary {
    pub flux: String,
    pub case: String,
    pub nx: usize,
    pub ny: usize,
    pub x_half_width: f64,
    pub width: f64,
    pub delta: f64,
    pub h: Option<f64>,
    pub t_final: f64,
    pub t0: f64,
    pub seed: u64,
    pub snapshots: usize,
    pub mass_initial: f64,
    pub mass_final: f64,
    pub mass_drift: f64,
    pub energy_initial: f64,
    pub energy_final: f64,
    pub energy_drift: f64,
    pub max_iterations: usize,
    pub halvings: u32,
    pub max_abs: f64,
    pub max_aliasing: f64,
    pub max_leakage: f64,
    pub flagged: bool,
    pub warnings: Vec<String>,
    pub final_digest: String,
    pub files: Vec<String>,
}

/// Largest slab iteration count since the previous snapshot.
fn iterations_per_snapshot(traj: &Trajectory) -> Vec<usize> {
    let (n, h) = traj.config.slabs();
    let mut out = vec![0];
    let mut slab = 0;
    for w in traj.times.windows(2) {
        let mut m = 0;
        while slab < n && (slab as f64 + 1.0) * h <= w[1] + 1e-9 * h {
            m = m.max(traj.slab_iterations.get(slab).copied().unwrap_or(0));
            slab += 1;
        }
        out.push(m);
    }
    out
}

pub fn run(opts: &Options) -> Result<RunSummary> {
    let setup = Setup::load(opts)?;
    run_setup(&setup)
}

pub fn run_setup(setup: &Setup) -> Result<RunSummary> {
    let cfg = &setup.config;
    let t = setup.transform.as_ref();
    let traj = setup.solve(&cfg.run)?;
    setup.ensure_out_dir()?;
    let out = &setup.out_dir;
    let mut files = Vec::new();

    let flux = &setup.nl.flux;
    let series = invariants(t, &traj, flux)?;
    if cfg.diagnostics.snapshots {
        fs::create_dir_all(out.join("snapshots"))?;
        for (k, (time, snap)) in traj.times.iter().zip(&traj.snapshots).enumerate() {
            let name = format!("snapshots/snap_{k:05}.bin");
            let header = SnapshotHeader::new(t.grid.as_ref(), *time, &setup.nl.name(), cfg.run.delta, cfg.run.h);
            write_snapshot(&out.join(&name), &header, &snap.values)?;
            files.push(name);
        }
    }
    if cfg.diagnostics.invariants {
        let iters = iterations_per_snapshot(&traj);
        let mut rows = Vec::with_capacity(traj.times.len());
        for (k, state) in traj.states.iter().enumerate() {
            rows.push(InvariantRow {
                time: traj.times[k],
                mass: series.mass[k],
                energy: series.energy[k].conserved,
                energy_printed: series.energy[k].printed,
                h1_alpha: hk_alpha_norm_spectral(t, state, 1, cfg.diagnostics.alpha)?,
                leakage: traj.leakage.get(k).copied().unwrap_or(0.0),
                slab_iterations: iters.get(k).copied().unwrap_or(0),
            });
        }
        write_csv(&out.join("invariants.csv"), &rows)?;
        files.push("invariants.csv".into());
    }
    if cfg.diagnostics.plot_script {
        fs::write(out.join("plot.py"), plot_script())?;
        files.push("plot.py".into());
    }
    fs::write(out.join("config.toml"), cfg.to_toml()?)?;
    files.push("config.toml".into());
    files.push("summary.json".into());

    let n = series.mass.len() - 1;
    let summary = RunSummary {
        flux: setup.nl.name(),
        case: t.grid.case.tag().to_string(),
        nx: t.grid.nx,
        ny: t.grid.ny,
        x_half_width: t.grid.x_half_width,
        width: t.grid.width,
        delta: cfg.run.delta,
        h: cfg.run.h,
        t_final: cfg.run.t_final,
        t0: cfg.run.t0,
        seed: cfg.seed,
        snapshots: traj.times.len(),
        mass_initial: series.mass[0],
        mass_final: series.mass[n],
        mass_drift: series.mass_drift(),
        energy_initial: series.energy[0].conserved,
        energy_final: series.energy[n].conserved,
        energy_drift: series.energy_drift(),
        max_iterations: traj.max_iterations(),
        halvings: traj.slab_halvings.iter().sum(),
        max_abs: traj.max_abs,
        max_aliasing: traj.max_aliasing,
        max_leakage: traj.leakage.iter().copied().fold(0.0, f64::max),
        flagged: traj.flagged,
        warnings: traj.warnings.clone(),
        final_digest: digest(&[traj.final_state()], &[cfg.run.t_final]),
        files,
    };
    write_json(&out.join("summary.json"), &summary)?;
    Ok(summary)
}

// ---------------------------------------------------------------------------
// check

pub fn check(opts: &Options, name: &str) -> Result<CheckReport> {
    if !CHECKS.contains(&name) {
        return Err(ZkError::Config(format!(
            "unknown check '{name}' (expected one of {})",
            CHECKS.join(", ")
        )));
    }
    let setup = Setup::load(opts)?;
    check_setup(&setup, name)
}

pub fn check_setup(setup: &Setup, name: &str) -> Result<CheckReport> {
    let report = match name {
        "conservation" => check_conservation(setup)?,
        "interpolation" => check_interpolation(setup)?,
        "weak-residual" => check_weak_residual(setup)?,
        "energy-identity" => check_energy_identity(setup)?,
        "dependence" => check_dependence(setup)?,
        "smoothing" => check_smoothing(setup)?,
        other => return Err(ZkError::Config(format!("unknown check '{other}'"))),
    };
    setup.ensure_out_dir()?;
    fs::write(setup.out_dir.join(format!("check_{name}.txt")), report.render())?;
    write_json(&setup.out_dir.join(format!("check_{name}.json")), &report)?;
    Ok(report)
}

fn halved(run: &RunConfig, times: u32) -> RunConfig {
    let mut r = run.clone();
    r.t0 = run.t0 / f64::from(1u32 << times);
    r.snapshot_every = run.snapshot_every << times;
    r
}

/// `fine ≤ floor`, or the drift shrank at least fourfold.
fn shrinks(coarse: f64, fine: f64, floor: f64) -> bool {
    fine <= floor || coarse >= 4.0 * fine
}

fn check_conservation(setup: &Setup) -> Result<CheckReport> {
    let cfg = &setup.config;
    if cfg.run.delta != 0.0 || !cfg.forcing.is_zero() {
        return Err(ZkError::Rejected("conservation needs delta = 0 and zero forcing".into()));
    }
    let t = setup.transform.as_ref();
    let runs = map_runs(&[0u32, 1], |&k| setup.solve(&halved(&cfg.run, k)));
    let mut drifts = Vec::new();
    for run in runs {
        let s = invariants(t, &run?, &setup.nl.flux)?;
        drifts.push((s.mass_drift(), s.energy_drift()));
    }
    let c = &cfg.check;
    let mass_tol = if setup.nl.flux.is_affine() { c.linear_mass_tol } else { c.mass_tol };
    let (m0, e0) = drifts[0];
    let (m1, e1) = drifts[1];
    let mut r = CheckReport::new("conservation");
    r.digest = digest(&[&t.to_spectral(&setup.u0)?], &[cfg.run.t_final, cfg.run.t0]);
    r.measure("mass_drift", m0)
        .measure("mass_drift_halved", m1)
        .measure("energy_drift", e0)
        .measure("energy_drift_halved", e1)
        .measure("mass_tolerance", mass_tol)
        .measure("energy_tolerance", c.energy_tol);
    r.trend = vec![e0, e1];
    let mass_ok = m0 <= mass_tol && shrinks(m0, m1, c.roundoff_floor);
    let energy_ok = e0 <= c.energy_tol && shrinks(e0, e1, c.roundoff_floor);
    if m1 <= c.roundoff_floor {
        r.note("mass drift is at the roundoff floor");
    }
    r.pass = mass_ok && energy_ok;
    Ok(r)
}

fn check_interpolation(setup: &Setup) -> Result<CheckReport> {
    let s = &setup.config.check.interpolation;
    let order = InterpolationOrder {
        k: s.k,
        m: s.m,
        q: s.q,
    };
    order.exponent()?;
    let rho = Weight::Rho(make_rho(s.alpha, s.beta)?);
    let g = setup.grid();
    let fine = setup.regrid(2 * g.nx, g.ny)?;
    let transforms = [setup.transform.clone(), fine.transform.clone()];
    interpolation_family_check(&transforms, &rho, &rho, order, s.members, setup.config.seed)
}

fn check_weak_residual(setup: &Setup) -> Result<CheckReport> {
    let cfg = &setup.config;
    let t = setup.transform.as_ref();
    let tests = standard_tests(t, cfg.run.t_final);
    let tnl = TruncatedNonlinearity::new(setup.nl.clone(), cfg.run.h)?;
    let runs = map_runs(&[0u32, 1], |&k| setup.solve(&halved(&cfg.run, k)));
    let mut r = CheckReport::new("weak-residual");
    r.digest = digest(&[&t.to_spectral(&setup.u0)?], &[cfg.run.t_final, cfg.run.delta]);
    let mut worst = Vec::new();
    for (k, run) in runs.into_iter().enumerate() {
        let res = weak_residual(t, &run?, &tests, &tnl, setup.forcing.as_ref())?;
        if k == 0 {
            for (i, v) in res.iter().enumerate() {
                r.measure(&format!("residual_{i}"), *v);
            }
        }
        worst.push(res.iter().copied().fold(0.0, f64::max));
    }
    r.measure("max_residual", worst[0])
        .measure("max_residual_halved", worst[1])
        .measure("tolerance", cfg.check.weak_tol);
    r.trend = worst.clone();
    r.pass = worst[0] <= cfg.check.weak_tol && worst[1] <= worst[0];
    Ok(r)
}

fn identity_weight(setup: &Setup) -> Result<Weight> {
    let s = &setup.config.check.identity;
    match s.weight.as_str() {
        "unit" => Ok(Weight::Unit),
        "rho" => Ok(Weight::Rho(make_rho(s.alpha, s.beta)?)),
        "shifted" => Ok(Weight::OnePlusShifted {
            rho: make_rho(s.alpha, s.beta)?,
            x0: s.x0,
        }),
        other => Err(ZkError::Config(format!("unknown identity weight '{other}'"))),
    }
}

fn check_energy_identity(setup: &Setup) -> Result<CheckReport> {
    let cfg = &setup.config;
    if !setup.nl.flux.is_affine() || setup.nl.flux.g(1.0) != 0.0 {
        return Err(ZkError::Rejected("the weighted identity is checked on the linear equation (flux zero)".into()));
    }
    let t = setup.transform.as_ref();
    let weight = identity_weight(setup)?;
    let runs: Vec<Trajectory> = map_runs(&[0u32, 1, 2], |&k| setup.solve(&halved(&cfg.run, k)))
        .into_iter()
        .collect::<Result<_>>()?;
    let refs: Vec<&Trajectory> = runs.iter().collect();
    let f0 = setup.forcing.as_ref();
    let mut r = crate::diagnostics::energy_identity_residual(t, &refs, &weight, f0, &NoForcing, cfg.check.identity_tol)?;
    let est = weighted_estimate(t, &runs[2], &weight, f0, &NoForcing)?;
    r.fit("needed_c", est.needed_c).measure("analytic_c", est.analytic_c);
    let covered = est.needed_c <= est.analytic_c.max(0.0) * (1.0 + r.slack) + 1e-12;
    if !covered {
        r.note("the estimate needs a larger constant than sup (rho''' + delta rho'')/rho");
    }
    r.pass = r.pass && covered;
    Ok(r)
}

fn check_dependence(setup: &Setup) -> Result<CheckReport> {
    let cfg = &setup.config;
    let d = &cfg.check.dependence;
    if d.eps.is_empty() {
        return Err(ZkError::Config("dependence needs at least one eps".into()));
    }
    let t = setup.transform.as_ref();
    let bump = BumpParams {
        center: d.center,
        width: d.width,
        y_coeffs: d.y_coeffs.clone(),
    };
    let base = setup.solve(&cfg.run)?;
    let other = match d.other_nx {
        Some(nx) => Some(setup.regrid(nx, setup.grid().ny)?),
        None => None,
    };
    let target = other.as_ref().unwrap_or(setup);
    let u0 = target.transform.to_spectral(&target.u0)?;
    let perturbed: Vec<Trajectory> = map_runs(&d.eps, |&eps| {
        let v0 = perturb(&target.transform, &u0, eps, &bump)?;
        target.solve_from(&cfg.run, &target.transform.from_spectral(&v0)?)
    })
    .into_iter()
    .collect::<Result<_>>()?;

    let drift = setup.nl.drift();
    let f = setup.forcing.as_ref();
    let levels = [
        ("l2", DependenceLevel::L2),
        ("gradient", DependenceLevel::Gradient { shift: true }),
        ("gradient-unshifted", DependenceLevel::Gradient { shift: false }),
    ];
    let mut r = CheckReport::new("dependence");
    r.digest = digest(&[&t.to_spectral(&setup.u0)?], &d.eps);
    let mut verdicts = Vec::new();
    for (label, level) in levels {
        let mut terms = Vec::new();
        for v in &perturbed {
            terms.push(dependence_terms(t, &base, v, f, f, d.alpha, d.beta, level, drift)?);
        }
        let sub = dependence_sweep_report(label, &d.eps, &terms, 2.0);
        for (k, v) in &sub.measured {
            r.measure(&format!("{label}.{k}"), *v);
        }
        if label == "l2" {
            r.trend = terms.iter().filter_map(|x| x.ratio).collect();
        }
        verdicts.push(sub.pass);
    }
    if verdicts[1] != verdicts[2] {
        r.note("shifted and unshifted gradient checks disagree");
    }
    r.pass = verdicts.iter().all(|&p| p) && verdicts[1] == verdicts[2];
    Ok(r)
}

fn check_smoothing(setup: &Setup) -> Result<CheckReport> {
    let cfg = &setup.config;
    let s = &cfg.check.smoothing;
    let g = setup.grid();
    let fine = setup.regrid(2 * g.nx, 2 * g.ny)?;
    let pair = [setup, &fine];
    let values: Vec<f64> = map_runs(&pair, |st| {
        let traj = st.solve(&cfg.run)?;
        local_smoothing(&st.transform, &traj, s.r)
    })
    .into_iter()
    .collect::<Result<_>>()?;
    let change = (values[1] - values[0]).abs() / values[1].abs().max(f64::MIN_POSITIVE);
    let mut r = CheckReport::new("smoothing");
    r.digest = digest(&[&setup.transform.to_spectral(&setup.u0)?], &[s.r, cfg.run.t_final]);
    r.measure("window_integral", values[0])
        .measure("window_integral_refined", values[1])
        .measure("relative_change", change)
        .measure("stability", s.stability);
    r.trend = values.clone();
    r.pass = values.iter().all(|v| v.is_finite()) && change <= s.stability;
    Ok(r)
}

// ---------------------------------------------------------------------------
// sweep

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepTableRow {
    pub parameter: String,
    pub value: f64,
    /// `ok`, or the reason the run failed
    pub status: String,
    pub max_iterations: usize,
    pub max_abs: f64,
    /// `sup_t ‖u(t)‖_{H^{0,α}}`
    pub sup_norm: f64,
    /// distance to the next row (sup over time for `h` and `delta`, final time otherwise)
    pub distance: Option<f64>,
    pub distance_weighted: Option<f64>,
    pub h_weighted_h1: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepOutcome {
    pub parameter: String,
    pub rows: Vec<SweepTableRow>,
    pub failed: usize,
}

/// `parameter` overrides the one in the config's `[sweep]` table.
pub fn sweep(opts: &Options, parameter: Option<&str>) -> Result<SweepOutcome> {
    let setup = Setup::load(opts)?;
    sweep_setup(&setup, parameter)
}

pub fn sweep_setup(setup: &Setup, parameter: Option<&str>) -> Result<SweepOutcome> {
    let Some(spec) = setup.config.sweep.clone() else {
        return Err(ZkError::Config("config has no [sweep] table".into()));
    };
    let spec = SweepSpec {
        parameter: parameter.map(str::to_string).unwrap_or(spec.parameter),
        ..spec
    };
    if spec.values.is_empty() {
        return Err(ZkError::Config("sweep value list is empty".into()));
    }
    let rows = match spec.parameter.as_str() {
        "h" => sweep_h(setup, &spec)?,
        "delta" | "t0" | "grid" => sweep_generic(setup, &spec)?,
        other => return Err(ZkError::Config(format!("cannot sweep over '{other}' (h, delta, t0 or grid)"))),
    };
    let failed = rows.iter().filter(|r| r.status != "ok").count();
    setup.ensure_out_dir()?;
    write_csv(&setup.out_dir.join(format!("sweep_{}.csv", spec.parameter)), &rows)?;
    Ok(SweepOutcome {
        parameter: spec.parameter,
        rows,
        failed,
    })
}

fn sweep_h(setup: &Setup, spec: &SweepSpec) -> Result<Vec<SweepTableRow>> {
    let rows = regularization_sweep(
        &setup.transform,
        &setup.nl,
        &setup.config.run,
        &setup.u0,
        setup.forcing.as_ref(),
        &spec.values,
        spec.alpha,
        spec.delta_follows_h,
    )?;
    Ok(rows
        .into_iter()
        .map(|r| SweepTableRow {
            parameter: "h".into(),
            value: r.h,
            status: r.error.unwrap_or_else(|| "ok".into()),
            max_iterations: r.max_iterations,
            max_abs: r.max_abs,
            sup_norm: r.x_alpha.map(|x| x.sup_norm).unwrap_or(f64::NAN),
            distance: r.distance_l2,
            distance_weighted: r.distance_weighted,
            h_weighted_h1: Some(r.h_weighted_h1),
        })
        .collect())
}

fn sweep_generic(setup: &Setup, spec: &SweepSpec) -> Result<Vec<SweepTableRow>> {
    let param = spec.parameter.as_str();
    let mut setups = Vec::new();
    let mut runs = Vec::new();
    for &v in &spec.values {
        let mut run = setup.config.run.clone();
        let st = match param {
            "delta" => {
                run.delta = v;
                None
            }
            "t0" => {
                run.t0 = v;
                None
            }
            _ => {
                if v.fract() != 0.0 || v < 4.0 {
                    return Err(ZkError::Config(format!("grid sweep values are nx, got {v}")));
                }
                Some(setup.regrid(v as usize, setup.grid().ny)?)
            }
        };
        run.validate()?;
        runs.push(run);
        setups.push(st);
    }
    let idx: Vec<usize> = (0..runs.len()).collect();
    let trajs = map_runs(&idx, |&i| setups[i].as_ref().unwrap_or(setup).solve(&runs[i]));

    let mut rows = Vec::new();
    for (i, traj) in trajs.iter().enumerate() {
        let mut row = SweepTableRow {
            parameter: param.into(),
            value: spec.values[i],
            status: "ok".into(),
            max_iterations: 0,
            max_abs: 0.0,
            sup_norm: f64::NAN,
            distance: None,
            distance_weighted: None,
            h_weighted_h1: None,
        };
        match traj {
            Err(e) => row.status = e.to_string(),
            Ok(tr) => {
                row.max_iterations = tr.max_iterations();
                row.max_abs = tr.max_abs;
                let t = setups[i].as_ref().unwrap_or(setup).transform.as_ref();
                let mut sup = 0.0f64;
                for st in &tr.states {
                    sup = sup.max(hk_alpha_norm_spectral(t, st, 0, spec.alpha)?);
                }
                row.sup_norm = sup;
                if let Some(Ok(next)) = trajs.get(i + 1) {
                    row.distance = Some(if param == "delta" {
                        sup_distance(tr, next)?
                    } else {
                        final_distance(tr.final_state(), next.final_state())?
                    });
                }
            }
        }
        rows.push(row);
    }
    Ok(rows)
}

fn sup_distance(a: &Trajectory, b: &Trajectory) -> Result<f64> {
    let mut d = 0.0f64;
    for (x, y) in a.states.iter().zip(&b.states) {
        d = d.max(final_distance(x, y)?);
    }
    Ok(d)
}

/// `‖a - b‖_{L₂}`, comparing on the coarser of the two grids.
fn final_distance(a: &SpectralField, b: &SpectralField) -> Result<f64> {
    if a.grid.compatible(&b.grid) {
        return Ok(a.sub(b).l2_norm());
    }
    let (coarse, fine) = if a.grid.nx <= b.grid.nx { (a, b) } else { (b, a) };
    Ok(fine.resample(&coarse.grid)?.sub(coarse).l2_norm())
}

// ---------------------------------------------------------------------------
// info

/// Grid, eigenvalues and a table of the linear symbol.
pub fn info(opts: &Options) -> Result<String> {
    let setup = Setup::load(opts)?;
    Ok(info_setup(&setup))
}

pub fn info_setup(setup: &Setup) -> String {
    let t = setup.transform.as_ref();
    let g = t.grid.as_ref();
    let delta = setup.config.run.delta;
    let mut s = format!(
        "case {} on (-{}, {}) x (0, {}), nx = {}, ny = {}, modes = {}\nflux: {} (growth b = {:.3}, c = {:.3})\ndelta = {delta}\n\n",
        g.case.tag(),
        g.x_half_width,
        g.x_half_width,
        g.width,
        g.nx,
        g.ny,
        t.basis.len(),
        setup.nl.name(),
        setup.nl.b,
        setup.nl.c,
    );
    s += "eigenvalues\n   l        lambda_l\n";
    for (l, lam) in t.lambdas().iter().enumerate() {
        s += &format!("{l:>4} {lam:>15.6}\n");
    }
    s += "\ndispersion r = i(xi^3 + xi lambda) - delta(xi^2 + lambda)\n";
    s += "   j          xi     l      Re r             Im r\n";
    let lambdas = t.lambdas();
    let mut js: Vec<usize> = vec![0, 1, 2];
    let mut j = 4;
    while j < g.nx / 2 {
        js.push(j);
        j *= 2;
    }
    js.push(g.nx / 2 - 1);
    js.dedup();
    for &j in &js {
        let xi = g.wavenumber(j);
        for l in [0, 1, lambdas.len() - 1] {
            let r = symbol(xi, lambdas[l], delta);
            s += &format!("{j:>4} {xi:>11.5} {l:>5} {:>12.5e} {:>16.8e}\n", r.re, r.im);
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_split_usage_from_solver_failures() {
        assert_eq!(exit_code(&ZkError::Config("x".into())), EXIT_USAGE);
        assert_eq!(exit_code(&ZkError::Rejected("x".into())), EXIT_USAGE);
        assert_eq!(exit_code(&ZkError::GridMismatch("x".into())), EXIT_USAGE);
        let e = ZkError::SlabFailure {
            start: 0.0,
            halvings: 6,
            history: vec![],
        };
        assert_eq!(exit_code(&e), EXIT_SOLVER);
    }

    #[test]
    fn shrink_rule_accepts_roundoff() {
        assert!(shrinks(1e-6, 2e-7, 1e-13));
        assert!(!shrinks(1e-6, 5e-7, 1e-13));
        assert!(shrinks(3e-16, 5e-16, 1e-13));
    }
}
