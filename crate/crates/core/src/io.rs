//! Run configuration, snapshot files, invariant tables and plot scripts.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::basis::{BoundaryCase, Field, Grid, SpectralField, Transform};
use crate::error::{Result, ZkError};
use crate::nonlinearity::{Flux, Nonlinearity};
use crate::solver::{Forcing, RunConfig};

pub const SNAPSHOT_FORMAT: &str = "zkstrip-snapshot";
pub const SNAPSHOT_VERSION: u32 = 1;

/// Environment variable overriding the output directory of a config file.
pub const OUT_ENV: &str = "ZKSTRIP_OUT";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    pub grid: GridSpec,
    #[serde(default)]
    pub run: RunConfig,
    #[serde(default)]
    pub flux: FluxSpec,
    #[serde(default)]
    pub initial: InitialSpec,
    #[serde(default)]
    pub forcing: ForcingSpec,
    #[serde(default)]
    pub diagnostics: DiagnosticsSpec,
    #[serde(default)]
    pub check: CheckSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    /// boundary family tag `a`, `b`, `c` or `d`
    pub case: String,
    pub x_half_width: f64,
    pub nx: usize,
    pub width: f64,
    pub ny: usize,
}

impl GridSpec {
    pub fn build(&self) -> Result<Arc<Grid>> {
        Grid::new(BoundaryCase::from_tag(&self.case)?, self.x_half_width, self.nx, self.width, self.ny)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum FluxSpec {
    /// `u²/2 + drift · u`
    Zk {
        #[serde(default)]
        drift: f64,
    },
    Polynomial {
        coeffs: Vec<f64>,
    },
    /// `amplitude · sin u`
    Sine {
        amplitude: f64,
    },
    Zero,
}

impl Default for FluxSpec {
    fn default() -> Self {
        FluxSpec::Zk { drift: 0.0 }
    }
}

impl FluxSpec {
    pub fn build(&self) -> Result<Nonlinearity> {
        let flux = match self {
            FluxSpec::Zk { drift } => Flux::zk_with_drift(*drift),
            FluxSpec::Polynomial { coeffs } => Flux::Polynomial(coeffs.clone()),
            FluxSpec::Sine { amplitude } => Flux::Sine(*amplitude),
            FluxSpec::Zero => Flux::zero(),
        };
        Nonlinearity::new(flux)
    }
}

fn default_amplitude() -> f64 {
    1.0
}

fn default_width() -> f64 {
    2.0
}

fn default_y_coeffs() -> Vec<f64> {
    vec![1.0]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "profile", rename_all = "lowercase", deny_unknown_fields)]
pub enum InitialSpec {
    /// `A exp(-((x - c)/w)²) Σ a_l ψ_l(y)`
    Gaussian {
        #[serde(default = "default_amplitude")]
        amplitude: f64,
        #[serde(default)]
        center: f64,
        #[serde(default = "default_width")]
        width: f64,
        #[serde(default = "default_y_coeffs")]
        y_coeffs: Vec<f64>,
    },
    /// `A cos(ξ_j x) ψ_l(y)`
    Mode {
        #[serde(default = "default_amplitude")]
        amplitude: f64,
        j: i64,
        l: usize,
    },
    Zero,
    Snapshot {
        path: PathBuf,
    },
}

impl Default for InitialSpec {
    fn default() -> Self {
        InitialSpec::Gaussian {
            amplitude: 1.0,
            center: 0.0,
            width: 2.0,
            y_coeffs: vec![1.0],
        }
    }
}

/// `A exp(-((x - c)/w)²) Σ a_l ψ_l(y)` sampled on the grid.
pub fn gaussian_field(t: &Transform, amplitude: f64, center: f64, width: f64, y_coeffs: &[f64]) -> Result<Field> {
    if y_coeffs.len() > t.basis.len() {
        return Err(ZkError::Config(format!(
            "{} y coefficients given but the basis has {} modes",
            y_coeffs.len(),
            t.basis.len()
        )));
    }
    if !(width > 0.0) {
        return Err(ZkError::Config(format!("profile width must be positive, got {width}")));
    }
    let pairs = &t.basis.pairs;
    Ok(Field::from_fn(t.grid.clone(), |x, y| {
        let gy: f64 = y_coeffs.iter().zip(pairs).map(|(a, p)| a * p.value(y)).sum();
        amplitude * (-((x - center) / width).powi(2)).exp() * gy
    }))
}

impl InitialSpec {
    pub fn build(&self, t: &Transform, base: &Path) -> Result<Field> {
        match self {
            InitialSpec::Gaussian {
                amplitude,
                center,
                width,
                y_coeffs,
            } => gaussian_field(t, *amplitude, *center, *width, y_coeffs),
            InitialSpec::Mode { amplitude, j, l } => {
                let Some(p) = t.basis.pairs.get(*l).copied() else {
                    return Err(ZkError::Config(format!("mode index {l} exceeds the basis")));
                };
                if j.unsigned_abs() as usize >= t.grid.nx / 2 {
                    return Err(ZkError::Config(format!("wavenumber index {j} is not resolved")));
                }
                let xi = std::f64::consts::PI * *j as f64 / t.grid.x_half_width;
                Ok(Field::from_fn(t.grid.clone(), |x, y| amplitude * (xi * x).cos() * p.value(y)))
            }
            InitialSpec::Zero => Ok(Field::zeros(t.grid.clone())),
            InitialSpec::Snapshot { path } => {
                let (h, values) = read_snapshot(&base.join(path))?;
                let grid = h.grid()?;
                if !grid.compatible(&t.grid) {
                    return Err(ZkError::GridMismatch(format!(
                        "snapshot {} was written on a different grid",
                        path.display()
                    )));
                }
                Field::new(t.grid.clone(), values)
            }
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ForcingSpec {
    #[default]
    Zero,
    /// `A cos(ω t) exp(-((x - c)/w)²) Σ a_l ψ_l(y)`
    Gaussian {
        #[serde(default = "default_amplitude")]
        amplitude: f64,
        #[serde(default)]
        center: f64,
        #[serde(default = "default_width")]
        width: f64,
        #[serde(default = "default_y_coeffs")]
        y_coeffs: Vec<f64>,
        #[serde(default)]
        omega: f64,
    },
    /// Piecewise-linear in time through snapshot files, constant outside.
    Snapshots {
        paths: Vec<PathBuf>,
        times: Vec<f64>,
    },
}

/// `θ(t) · profile`
pub struct ProfileForcing {
    pub profile: SpectralField,
    pub amplitude: f64,
    pub omega: f64,
}

impl Forcing for ProfileForcing {
    fn at(&self, t: f64, _tr: &Transform) -> Result<Option<SpectralField>> {
        Ok(Some(self.profile.scale(self.amplitude * (self.omega * t).cos())))
    }
}

/// Linear interpolation between spectral samples at increasing times.
pub struct SeriesForcing {
    pub times: Vec<f64>,
    pub states: Vec<SpectralField>,
}

impl Forcing for SeriesForcing {
    fn at(&self, t: f64, _tr: &Transform) -> Result<Option<SpectralField>> {
        let n = self.times.len();
        if t <= self.times[0] {
            return Ok(Some(self.states[0].clone()));
        }
        if t >= self.times[n - 1] {
            return Ok(Some(self.states[n - 1].clone()));
        }
        let k = self.times.partition_point(|&s| s <= t) - 1;
        let w = (t - self.times[k]) / (self.times[k + 1] - self.times[k]);
        let mut out = self.states[k].scale(1.0 - w);
        out.axpy(w, &self.states[k + 1]);
        Ok(Some(out))
    }
}

impl ForcingSpec {
    pub fn is_zero(&self) -> bool {
        matches!(self, ForcingSpec::Zero)
    }

    pub fn build(&self, t: &Transform, base: &Path) -> Result<Box<dyn Forcing>> {
        match self {
            ForcingSpec::Zero => Ok(Box::new(crate::solver::NoForcing)),
            ForcingSpec::Gaussian {
                amplitude,
                center,
                width,
                y_coeffs,
                omega,
            } => {
                let profile = t.to_spectral(&gaussian_field(t, 1.0, *center, *width, y_coeffs)?)?;
                Ok(Box::new(ProfileForcing {
                    profile,
                    amplitude: *amplitude,
                    omega: *omega,
                }))
            }
            ForcingSpec::Snapshots { paths, times } => {
                if paths.is_empty() || paths.len() != times.len() {
                    return Err(ZkError::Config("forcing series needs one time per snapshot".into()));
                }
                if times.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(ZkError::Config("forcing series times must increase".into()));
                }
                let mut states = Vec::with_capacity(paths.len());
                for p in paths {
                    let (h, values) = read_snapshot(&base.join(p))?;
                    if !h.grid()?.compatible(&t.grid) {
                        return Err(ZkError::GridMismatch(format!("forcing snapshot {} uses another grid", p.display())));
                    }
                    states.push(t.to_spectral(&Field::new(t.grid.clone(), values)?)?);
                }
                Ok(Box::new(SeriesForcing {
                    times: times.clone(),
                    states,
                }))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnosticsSpec {
    /// weight exponent of the `H^{1,α}` column
    pub alpha: f64,
    pub snapshots: bool,
    pub invariants: bool,
    pub plot_script: bool,
}

impl Default for DiagnosticsSpec {
    fn default() -> Self {
        DiagnosticsSpec {
            alpha: 0.0,
            snapshots: true,
            invariants: true,
            plot_script: false,
        }
    }
}

/// Tolerances and parameters of the `check` verb.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CheckSpec {
    pub mass_tol: f64,
    pub energy_tol: f64,
    pub linear_mass_tol: f64,
    /// drifts below this (relative) count as roundoff in the refinement trend
    pub roundoff_floor: f64,
    pub weak_tol: f64,
    pub identity_tol: f64,
    pub interpolation: InterpolationSpec,
    pub identity: IdentitySpec,
    pub dependence: DependenceSpec,
    pub smoothing: SmoothingSpec,
}

impl Default for CheckSpec {
    fn default() -> Self {
        CheckSpec {
            mass_tol: 1e-8,
            energy_tol: 1e-6,
            linear_mass_tol: 1e-12,
            roundoff_floor: 1e-13,
            weak_tol: 1e-5,
            identity_tol: 1e-8,
            interpolation: InterpolationSpec::default(),
            identity: IdentitySpec::default(),
            dependence: DependenceSpec::default(),
            smoothing: SmoothingSpec::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InterpolationSpec {
    pub k: u32,
    pub m: u32,
    /// `inf` is a valid value
    pub q: f64,
    pub members: usize,
    pub alpha: f64,
    pub beta: f64,
}

impl Default for InterpolationSpec {
    fn default() -> Self {
        InterpolationSpec {
            k: 1,
            m: 0,
            q: 4.0,
            members: 100,
            alpha: 1.0,
            beta: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IdentitySpec {
    /// `unit`, `rho` (`ρ_{α,β}`) or `shifted` (`1 + ρ_{α,β}(x - x₀)`)
    pub weight: String,
    pub alpha: f64,
    pub beta: f64,
    pub x0: f64,
}

impl Default for IdentitySpec {
    fn default() -> Self {
        IdentitySpec {
            weight: "rho".into(),
            alpha: 1.0,
            beta: 1.0,
            x0: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DependenceSpec {
    pub eps: Vec<f64>,
    pub alpha: f64,
    pub beta: f64,
    /// perturbation `ε · A exp(-((x - c)/w)²) Σ a_l ψ_l`
    pub center: f64,
    pub width: f64,
    pub y_coeffs: Vec<f64>,
    /// run the perturbed problem on another `nx` (a grid mismatch, rejected)
    #[serde(skip_serializing_if = "Option::is_none")]
    pub other_nx: Option<usize>,
}

impl Default for DependenceSpec {
    fn default() -> Self {
        DependenceSpec {
            eps: vec![1e-1, 1e-2, 1e-3],
            alpha: 1.0,
            beta: 1.0,
            center: 1.0,
            width: 1.5,
            y_coeffs: vec![1.0],
            other_nx: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SmoothingSpec {
    pub r: f64,
    /// allowed relative change under grid refinement
    pub stability: f64,
}

impl Default for SmoothingSpec {
    fn default() -> Self {
        SmoothingSpec { r: 5.0, stability: 0.02 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    /// `h`, `delta`, `t0` or `grid` (values are `nx`)
    pub parameter: String,
    pub values: Vec<f64>,
    #[serde(default)]
    pub alpha: f64,
    /// in `h` sweeps, also set `δ = h`
    #[serde(default)]
    pub delta_follows_h: bool,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: ConfigFile = toml::from_str(text).map_err(|e| ZkError::Config(e.to_string()))?;
        cfg.run.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| ZkError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| ZkError::Config(e.to_string()))
    }

    /// `--out` beats the environment, which beats the config file.
    pub fn resolve_out_dir(&self, flag: Option<&Path>) -> PathBuf {
        if let Some(p) = flag {
            return p.to_path_buf();
        }
        if let Some(p) = std::env::var_os(OUT_ENV).filter(|v| !v.is_empty()) {
            return PathBuf::from(p);
        }
        self.out_dir.clone().unwrap_or_else(|| PathBuf::from("zkstrip-out"))
    }
}

// ---------------------------------------------------------------------------
// snapshots

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SnapshotHeader {
    pub format: String,
    pub version: u32,
    pub case: String,
    pub x_half_width: f64,
    pub nx: usize,
    pub width: f64,
    pub ny: usize,
    pub time: f64,
    pub flux: String,
    pub delta: f64,
    pub h: Option<f64>,
    /// payload layout: little-endian `f64`, `x` index outer, `y` inner
    pub layout: String,
}

impl SnapshotHeader {
    pub fn new(grid: &Grid, time: f64, flux: &str, delta: f64, h: Option<f64>) -> Self {
        SnapshotHeader {
            format: SNAPSHOT_FORMAT.into(),
            version: SNAPSHOT_VERSION,
            case: grid.case.tag().to_string(),
            x_half_width: grid.x_half_width,
            nx: grid.nx,
            width: grid.width,
            ny: grid.ny,
            time,
            flux: flux.into(),
            delta,
            h,
            layout: "f64-le x-major".into(),
        }
    }

    pub fn grid(&self) -> Result<Arc<Grid>> {
        Grid::new(BoundaryCase::from_tag(&self.case)?, self.x_half_width, self.nx, self.width, self.ny)
    }
}

/// One JSON header line, then the raw payload.
pub fn write_snapshot(path: &Path, header: &SnapshotHeader, values: &[f64]) -> Result<()> {
    if values.len() != header.nx * header.ny {
        return Err(ZkError::Shape {
            expected: header.nx * header.ny,
            got: values.len(),
        });
    }
    let mut out = std::io::BufWriter::new(fs::File::create(path)?);
    let line = serde_json::to_string(header).map_err(|e| ZkError::Format(e.to_string()))?;
    out.write_all(line.as_bytes())?;
    out.write_all(b"\n")?;
    for v in values {
        out.write_all(&v.to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_snapshot(path: &Path) -> Result<(SnapshotHeader, Vec<f64>)> {
    let mut r = BufReader::new(fs::File::open(path)?);
    let mut line = String::new();
    r.read_line(&mut line)?;
    let header: SnapshotHeader =
        serde_json::from_str(line.trim_end()).map_err(|e| ZkError::Format(format!("bad header: {e}")))?;
    if header.format != SNAPSHOT_FORMAT {
        return Err(ZkError::Format(format!("not a snapshot file (format '{}')", header.format)));
    }
    if header.version != SNAPSHOT_VERSION {
        return Err(ZkError::Format(format!(
            "snapshot version {} unsupported (expected {SNAPSHOT_VERSION})",
            header.version
        )));
    }
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let n = header.nx * header.ny;
    if bytes.len() != 8 * n {
        return Err(ZkError::Format(format!("payload holds {} bytes, expected {}", bytes.len(), 8 * n)));
    }
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    Ok((header, values))
}

// ---------------------------------------------------------------------------
// tables

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvariantRow {
    pub time: f64,
    pub mass: f64,
    pub energy: f64,
    pub energy_printed: f64,
    pub h1_alpha: f64,
    pub leakage: f64,
    pub slab_iterations: usize,
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| ZkError::Format(e.to_string()))?;
    for r in rows {
        w.serialize(r).map_err(|e| ZkError::Format(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_invariants(path: &Path) -> Result<Vec<InvariantRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| ZkError::Format(e.to_string()))?;
    r.deserialize()
        .map(|row| row.map_err(|e| ZkError::Format(e.to_string())))
        .collect()
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| ZkError::Format(e.to_string()))?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Matplotlib script plotting the invariants table next to it.
pub fn plot_script() -> &'static str {
    r#"#!/usr/bin/env python3
import csv
import sys
from pathlib import Path

import matplotlib.pyplot as plt

here = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(__file__).parent
rows = list(csv.DictReader(open(here / "invariants.csv")))
t = [float(r["time"]) for r in rows]

fig, axes = plt.subplots(2, 2, figsize=(10, 7), sharex=True)
for ax, key in zip(axes.flat, ["mass", "energy", "h1_alpha", "leakage"]):
    v = [float(r[key]) for r in rows]
    ax.plot(t, [x - v[0] for x in v] if key in ("mass", "energy") else v, marker=".")
    ax.set_title(key + (" - initial" if key in ("mass", "energy") else ""))
    ax.set_xlabel("t")
fig.tight_layout()
fig.savefig(here / "invariants.png", dpi=120)
"#
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[grid]
case = "d"
x_half_width = 10.0
nx = 32
width = 6.283185307179586
ny = 8
"#;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = ConfigFile::parse(MINIMAL).unwrap();
        assert_eq!(c.run, RunConfig::default());
        assert_eq!(c.flux, FluxSpec::Zk { drift: 0.0 });
        assert!(c.forcing.is_zero());
        assert!(c.sweep.is_none());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        for extra in ["colour = 3\n", "[run]\nslab = 0.1\n", "[flux]\nkind = \"zk\"\npower = 3\n"] {
            let text = format!("{MINIMAL}{extra}");
            assert!(ConfigFile::parse(&text).is_err(), "{extra}");
        }
    }

    #[test]
    fn config_round_trip_and_infinite_exponent() {
        let text = format!(
            "{MINIMAL}\n[check.interpolation]\nk = 2\nm = 0\nq = inf\n\n[sweep]\nparameter = \"h\"\nvalues = [1.0, 0.5]\n"
        );
        let c = ConfigFile::parse(&text).unwrap();
        assert!(c.check.interpolation.q.is_infinite());
        let again = ConfigFile::parse(&c.to_toml().unwrap()).unwrap();
        assert_eq!(again, c);
    }

    #[test]
    fn snapshot_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let g = Grid::new(BoundaryCase::Mixed, 3.0, 8, 1.0, 4).unwrap();
        let values: Vec<f64> = (0..32).map(|i| (i as f64 * 0.37).sin() / 3.0).collect();
        let h = SnapshotHeader::new(&g, 0.25, "u^2/2", 0.0, Some(0.5));
        let p = dir.path().join("s.bin");
        write_snapshot(&p, &h, &values).unwrap();
        let (h2, v2) = read_snapshot(&p).unwrap();
        assert_eq!(h2, h);
        assert!(values.iter().zip(&v2).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn snapshot_version_is_checked() {
        let dir = tempfile::tempdir().unwrap();
        let g = Grid::new(BoundaryCase::Periodic, 3.0, 8, 1.0, 4).unwrap();
        let mut h = SnapshotHeader::new(&g, 0.0, "0", 0.0, None);
        h.version = 99;
        let p = dir.path().join("s.bin");
        write_snapshot(&p, &h, &[0.0; 32]).unwrap();
        assert!(matches!(read_snapshot(&p), Err(ZkError::Format(_))));
    }
}
