//! Strip geometry, the Sturm–Liouville eigenbasis in `y` and the
//! Fourier-in-`x` × eigenbasis-in-`y` transform pair.
//!
//! Fields are stored x-major: value `(i, k)` lives at `i * ny + k`, where `i`
//! indexes the uniform `x` nodes on `[-X, X)` and `k` the `y` quadrature nodes.
//! Spectral coefficients are stored as `j * n_modes + l` with `j` in FFT order.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Result, ZkError};

/// The four `y`-boundary families on `[0, L]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BoundaryCase {
    /// `u(0) = u(L) = 0`
    #[serde(rename = "a")]
    Dirichlet,
    /// `u_y(0) = u_y(L) = 0`
    #[serde(rename = "b")]
    Neumann,
    /// `u(0) = u_y(L) = 0`
    #[serde(rename = "c")]
    Mixed,
    /// `L`-periodic in `y`
    #[serde(rename = "d")]
    Periodic,
}

impl BoundaryCase {
    pub const ALL: [BoundaryCase; 4] = [
        BoundaryCase::Dirichlet,
        BoundaryCase::Neumann,
        BoundaryCase::Mixed,
        BoundaryCase::Periodic,
    ];

    pub fn tag(self) -> char {
        match self {
            BoundaryCase::Dirichlet => 'a',
            BoundaryCase::Neumann => 'b',
            BoundaryCase::Mixed => 'c',
            BoundaryCase::Periodic => 'd',
        }
    }

    pub fn from_tag(tag: &str) -> Result<Self> {
        match tag {
            "a" => Ok(BoundaryCase::Dirichlet),
            "b" => Ok(BoundaryCase::Neumann),
            "c" => Ok(BoundaryCase::Mixed),
            "d" => Ok(BoundaryCase::Periodic),
            other => Err(ZkError::Config(format!("unknown boundary case '{other}'"))),
        }
    }

    /// Largest number of eigenmodes resolved exactly by `ny` quadrature nodes.
    pub fn representable_modes(self, ny: usize) -> usize {
        match self {
            BoundaryCase::Periodic if ny % 2 == 0 => ny - 1,
            _ => ny,
        }
    }
}

impl fmt::Display for BoundaryCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.tag())
    }
}

/// Truncated periodic `x`-window times `y`-quadrature nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    pub case: BoundaryCase,
    pub x_half_width: f64,
    pub nx: usize,
    pub width: f64,
    pub ny: usize,
    pub x_nodes: Vec<f64>,
    pub y_nodes: Vec<f64>,
    pub y_weights: Vec<f64>,
}

impl Grid {
    pub fn new(
        case: BoundaryCase,
        x_half_width: f64,
        nx: usize,
        width: f64,
        ny: usize,
    ) -> Result<Arc<Grid>> {
        if nx < 8 || nx % 2 != 0 {
            return Err(ZkError::Config(format!("nx must be even and >= 8, got {nx}")));
        }
        if ny < 4 {
            return Err(ZkError::Config(format!("ny must be >= 4, got {ny}")));
        }
        if !(x_half_width > 0.0 && x_half_width.is_finite()) {
            return Err(ZkError::Config("x half-width must be positive".into()));
        }
        if !(width > 0.0 && width.is_finite()) {
            return Err(ZkError::Config("strip width must be positive".into()));
        }
        let dx = 2.0 * x_half_width / nx as f64;
        let x_nodes = (0..nx).map(|i| -x_half_width + i as f64 * dx).collect();
        let (y_nodes, y_weights) = y_quadrature(case, width, ny);
        Ok(Arc::new(Grid {
            case,
            x_half_width,
            nx,
            width,
            ny,
            x_nodes,
            y_nodes,
            y_weights,
        }))
    }

    pub fn dx(&self) -> f64 {
        2.0 * self.x_half_width / self.nx as f64
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n_modes(&self) -> usize {
        self.case.representable_modes(self.ny)
    }

    pub fn spectral_len(&self) -> usize {
        self.nx * self.n_modes()
    }

    /// Signed wavenumber index of FFT slot `j`.
    pub fn signed_index(&self, j: usize) -> i64 {
        if j < self.nx / 2 {
            j as i64
        } else {
            j as i64 - self.nx as i64
        }
    }

    /// `ξ_j = π j / X`.
    pub fn wavenumber(&self, j: usize) -> f64 {
        PI * self.signed_index(j) as f64 / self.x_half_width
    }

    pub fn is_nyquist(&self, j: usize) -> bool {
        j == self.nx / 2
    }

    /// Wavenumber used by odd-order `x` operators; zero on the Nyquist slot.
    pub fn odd_wavenumber(&self, j: usize) -> f64 {
        if self.is_nyquist(j) {
            0.0
        } else {
            self.wavenumber(j)
        }
    }

    /// Same geometry and resolution.
    pub fn compatible(&self, other: &Grid) -> bool {
        self.case == other.case
            && self.nx == other.nx
            && self.ny == other.ny
            && self.x_half_width == other.x_half_width
            && self.width == other.width
    }

    /// Same geometry, possibly different resolution.
    pub fn same_domain(&self, other: &Grid) -> bool {
        self.case == other.case
            && self.x_half_width == other.x_half_width
            && self.width == other.width
    }
}

fn y_quadrature(case: BoundaryCase, width: f64, ny: usize) -> (Vec<f64>, Vec<f64>) {
    match case {
        BoundaryCase::Dirichlet => {
            let h = width / (ny as f64 + 1.0);
            ((1..=ny).map(|k| k as f64 * h).collect(), vec![h; ny])
        }
        BoundaryCase::Neumann | BoundaryCase::Mixed => {
            let h = width / ny as f64;
            ((0..ny).map(|k| (k as f64 + 0.5) * h).collect(), vec![h; ny])
        }
        BoundaryCase::Periodic => {
            let h = width / ny as f64;
            ((0..ny).map(|k| k as f64 * h).collect(), vec![h; ny])
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ModeShape {
    Constant,
    Sin(f64),
    Cos(f64),
}

/// One normalized eigenfunction `ψ` of `-d²/dy²` and its eigenvalue.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EigenPair {
    pub lambda: f64,
    pub shape: ModeShape,
    pub amplitude: f64,
}

impl EigenPair {
    pub fn value(&self, y: f64) -> f64 {
        match self.shape {
            ModeShape::Constant => self.amplitude,
            ModeShape::Sin(k) => self.amplitude * (k * y).sin(),
            ModeShape::Cos(k) => self.amplitude * (k * y).cos(),
        }
    }

    pub fn d1(&self, y: f64) -> f64 {
        match self.shape {
            ModeShape::Constant => 0.0,
            ModeShape::Sin(k) => self.amplitude * k * (k * y).cos(),
            ModeShape::Cos(k) => -self.amplitude * k * (k * y).sin(),
        }
    }

    pub fn d2(&self, y: f64) -> f64 {
        match self.shape {
            ModeShape::Constant => 0.0,
            ModeShape::Sin(k) | ModeShape::Cos(k) => -k * k * self.value(y),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EigenBasis {
    pub case: BoundaryCase,
    pub width: f64,
    pub pairs: Vec<EigenPair>,
}

/// First `n` orthonormal eigenpairs of `-ψ'' = λψ` on `[0, width]`.
///
/// Ordering is by nondecreasing eigenvalue; in the periodic case the constant
/// comes first, followed by `(cos, sin)` pairs of increasing frequency.
pub fn eigen_pairs(case: BoundaryCase, width: f64, n: usize) -> Result<EigenBasis> {
    if !(width > 0.0) {
        return Err(ZkError::Config("strip width must be positive".into()));
    }
    if n == 0 {
        return Err(ZkError::Config("need at least one eigenmode".into()));
    }
    let a = (2.0 / width).sqrt();
    let constant = EigenPair {
        lambda: 0.0,
        shape: ModeShape::Constant,
        amplitude: 1.0 / width.sqrt(),
    };
    let pairs = (1..=n)
        .map(|l| {
            let lf = l as f64;
            let sine = |k: f64| EigenPair {
                lambda: k * k,
                shape: ModeShape::Sin(k),
                amplitude: a,
            };
            let cosine = |k: f64| EigenPair {
                lambda: k * k,
                shape: ModeShape::Cos(k),
                amplitude: a,
            };
            match case {
                BoundaryCase::Dirichlet => sine(lf * PI / width),
                BoundaryCase::Neumann if l == 1 => constant,
                BoundaryCase::Neumann => cosine((lf - 1.0) * PI / width),
                BoundaryCase::Mixed => sine((lf - 0.5) * PI / width),
                BoundaryCase::Periodic if l == 1 => constant,
                BoundaryCase::Periodic => {
                    let k = 2.0 * PI * (l / 2) as f64 / width;
                    if l % 2 == 0 {
                        cosine(k)
                    } else {
                        sine(k)
                    }
                }
            }
        })
        .collect();
    Ok(EigenBasis { case, width, pairs })
}

impl EigenBasis {
    pub fn for_grid(grid: &Grid) -> Result<Self> {
        eigen_pairs(grid.case, grid.width, grid.n_modes())
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn lambdas(&self) -> Vec<f64> {
        self.pairs.iter().map(|p| p.lambda).collect()
    }

    /// Discrete Gram matrix under the grid's `y` quadrature.
    pub fn gram(&self, grid: &Grid) -> Vec<Vec<f64>> {
        self.pairs
            .iter()
            .map(|p| {
                self.pairs
                    .iter()
                    .map(|q| {
                        grid.y_nodes
                            .iter()
                            .zip(&grid.y_weights)
                            .map(|(&y, &w)| w * p.value(y) * q.value(y))
                            .sum()
                    })
                    .collect()
            })
            .collect()
    }

    /// Boundary-condition defect of every mode (max absolute violation).
    pub fn boundary_defect(&self) -> f64 {
        let l = self.width;
        self.pairs
            .iter()
            .map(|p| match self.case {
                BoundaryCase::Dirichlet => p.value(0.0).abs().max(p.value(l).abs()),
                BoundaryCase::Neumann => p.d1(0.0).abs().max(p.d1(l).abs()),
                BoundaryCase::Mixed => p.value(0.0).abs().max(p.d1(l).abs()),
                BoundaryCase::Periodic => (p.value(0.0) - p.value(l))
                    .abs()
                    .max((p.d1(0.0) - p.d1(l)).abs()),
            })
            .fold(0.0, f64::max)
    }
}

/// Real samples of a function on the grid nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    pub grid: Arc<Grid>,
    pub values: Vec<f64>,
}

impl Field {
    pub fn new(grid: Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(ZkError::Shape {
                expected: grid.len(),
                got: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(ZkError::NonFinite("field values".into()));
        }
        Ok(Field { grid, values })
    }

    pub fn zeros(grid: Arc<Grid>) -> Self {
        let values = vec![0.0; grid.len()];
        Field { grid, values }
    }

    pub fn from_fn(grid: Arc<Grid>, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.len());
        for &x in &grid.x_nodes {
            for &y in &grid.y_nodes {
                values.push(f(x, y));
            }
        }
        Field { grid, values }
    }

    pub fn at(&self, i: usize, k: usize) -> f64 {
        self.values[i * self.grid.ny + k]
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn scaled(&self, c: f64) -> Field {
        Field {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| v * c).collect(),
        }
    }

    pub fn add(&self, other: &Field) -> Field {
        Field {
            grid: self.grid.clone(),
            values: self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn sub(&self, other: &Field) -> Field {
        self.add(&other.scaled(-1.0))
    }
}

/// Coefficients `û(ξ_j, l)` of a field: `u(x, y) = Σ_j Σ_l û e^{iξ_j x} ψ_l(y)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralField {
    pub grid: Arc<Grid>,
    pub coeffs: Vec<Complex64>,
}

impl SpectralField {
    pub fn zeros(grid: Arc<Grid>) -> Self {
        let coeffs = vec![Complex64::new(0.0, 0.0); grid.spectral_len()];
        SpectralField { grid, coeffs }
    }

    pub fn n_modes(&self) -> usize {
        self.grid.n_modes()
    }

    pub fn index(&self, j: usize, l: usize) -> usize {
        j * self.grid.n_modes() + l
    }

    /// FFT slot of signed index `j`.
    pub fn slot(&self, j: i64) -> usize {
        j.rem_euclid(self.grid.nx as i64) as usize
    }

    pub fn get(&self, j: i64, l: usize) -> Complex64 {
        self.coeffs[self.index(self.slot(j), l)]
    }

    pub fn set(&mut self, j: i64, l: usize, c: Complex64) {
        let idx = self.index(self.slot(j), l);
        self.coeffs[idx] = c;
    }

    /// `(j, l, ξ_j, λ_l)` for every slot.
    pub fn modes<'a>(
        &'a self,
        lambdas: &'a [f64],
    ) -> impl Iterator<Item = (usize, usize, f64, f64)> + 'a {
        let nm = self.n_modes();
        (0..self.grid.nx)
            .flat_map(move |j| (0..nm).map(move |l| (j, l, self.grid.wavenumber(j), lambdas[l])))
    }

    pub fn scale(&self, c: f64) -> SpectralField {
        SpectralField {
            grid: self.grid.clone(),
            coeffs: self.coeffs.iter().map(|v| v * c).collect(),
        }
    }

    pub fn add(&self, other: &SpectralField) -> SpectralField {
        SpectralField {
            grid: self.grid.clone(),
            coeffs: self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn sub(&self, other: &SpectralField) -> SpectralField {
        SpectralField {
            grid: self.grid.clone(),
            coeffs: self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a - b).collect(),
        }
    }

    /// `self += c * other`
    pub fn axpy(&mut self, c: f64, other: &SpectralField) {
        for (a, b) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *a += b * c;
        }
    }

    /// `∬ |u|²` over the window (Parseval).
    pub fn l2_norm_sq(&self) -> f64 {
        2.0 * self.grid.x_half_width * self.coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>()
    }

    pub fn l2_norm(&self) -> f64 {
        self.l2_norm_sq().sqrt()
    }

    /// Largest violation of `û(-ξ) = conj(û(ξ))`, relative to the largest coefficient.
    pub fn symmetry_defect(&self) -> f64 {
        let nx = self.grid.nx;
        let nm = self.n_modes();
        let scale = self.coeffs.iter().fold(0.0f64, |m, c| m.max(c.norm()));
        if scale == 0.0 {
            return 0.0;
        }
        let mut defect = 0.0f64;
        for j in 0..nx {
            let jm = (nx - j) % nx;
            for l in 0..nm {
                let a = self.coeffs[j * nm + l];
                let b = self.coeffs[jm * nm + l];
                defect = defect.max((a - b.conj()).norm());
            }
        }
        defect / scale
    }

    /// Copy onto another resolution of the same domain, matching `(ξ, l)`.
    pub fn resample(&self, target: &Arc<Grid>) -> Result<SpectralField> {
        if !self.grid.same_domain(target) {
            return Err(ZkError::GridMismatch(
                "resampling requires the same case, window and width".into(),
            ));
        }
        let mut out = SpectralField::zeros(target.clone());
        let half = (self.grid.nx.min(target.nx) / 2) as i64;
        let nm = self.n_modes().min(target.n_modes());
        for j in (1 - half)..half {
            for l in 0..nm {
                out.set(j, l, self.get(j, l));
            }
        }
        Ok(out)
    }
}

/// Spectral differentiation: multiply by `(iξ)^order_x` and, if `apply_yy`, by `-λ_l`.
///
/// Odd and even orders alike annihilate the Nyquist `x` slot, so that repeated
/// application composes exactly.
pub fn derivative(sf: &SpectralField, basis: &EigenBasis, order_x: u32, apply_yy: bool) -> SpectralField {
    let grid = &sf.grid;
    let nm = grid.n_modes();
    let mut out = sf.clone();
    if order_x == 0 && !apply_yy {
        return out;
    }
    let i = Complex64::new(0.0, 1.0);
    for j in 0..grid.nx {
        let xfac = if order_x == 0 {
            Complex64::new(1.0, 0.0)
        } else if grid.is_nyquist(j) {
            Complex64::new(0.0, 0.0)
        } else {
            (i * grid.wavenumber(j)).powu(order_x)
        };
        for l in 0..nm {
            let yfac = if apply_yy { -basis.pairs[l].lambda } else { 1.0 };
            out.coeffs[j * nm + l] *= xfac * yfac;
        }
    }
    out
}

/// Field expressed as `y`-coefficients at every `x` node: `c_l(x_i)` at `i * n_modes + l`.
#[derive(Clone, Debug, PartialEq)]
pub struct YCoeffs {
    pub grid: Arc<Grid>,
    pub data: Vec<f64>,
}

impl YCoeffs {
    pub fn row(&self, i: usize) -> &[f64] {
        let nm = self.grid.n_modes();
        &self.data[i * nm..(i + 1) * nm]
    }
}

/// Transform pair for one grid: dense `y` projection on exact quadrature
/// nodes, FFT in `x`, and a 3/2-padded `x` grid for pointwise products.
pub struct Transform {
    pub grid: Arc<Grid>,
    pub basis: EigenBasis,
    /// `ψ_l(y_k)` at `k * n_modes + l`
    synth: Vec<f64>,
    /// `w_k ψ_l(y_k)` at `l * ny + k`
    analysis: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
    ifft: Arc<dyn Fft<f64>>,
    pad_fft: Arc<dyn Fft<f64>>,
    pad_ifft: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for Transform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Transform")
            .field("grid", &self.grid)
            .field("modes", &self.basis.len())
            .finish()
    }
}

impl Transform {
    pub fn new(grid: &Arc<Grid>) -> Result<Self> {
        let basis = EigenBasis::for_grid(grid)?;
        Self::with_basis(grid, basis)
    }

    pub fn with_basis(grid: &Arc<Grid>, basis: EigenBasis) -> Result<Self> {
        if basis.case != grid.case || basis.width != grid.width {
            return Err(ZkError::GridMismatch("basis does not belong to this grid".into()));
        }
        if basis.len() != grid.n_modes() {
            return Err(ZkError::Config(format!(
                "{} modes requested but {} nodes resolve {} in case {}",
                basis.len(),
                grid.ny,
                grid.n_modes(),
                grid.case
            )));
        }
        let ny = grid.ny;
        let nm = basis.len();
        let mut synth = vec![0.0; ny * nm];
        let mut analysis = vec![0.0; nm * ny];
        for (k, (&y, &w)) in grid.y_nodes.iter().zip(&grid.y_weights).enumerate() {
            for (l, p) in basis.pairs.iter().enumerate() {
                let v = p.value(y);
                synth[k * nm + l] = v;
                analysis[l * ny + k] = w * v;
            }
        }
        let mut planner = FftPlanner::new();
        let padded = pad_len(grid.nx);
        Ok(Transform {
            grid: grid.clone(),
            fft: planner.plan_fft_forward(grid.nx),
            ifft: planner.plan_fft_inverse(grid.nx),
            pad_fft: planner.plan_fft_forward(padded),
            pad_ifft: planner.plan_fft_inverse(padded),
            basis,
            synth,
            analysis,
        })
    }

    pub fn lambdas(&self) -> Vec<f64> {
        self.basis.lambdas()
    }

    fn check_grid(&self, grid: &Grid) -> Result<()> {
        if self.grid.compatible(grid) {
            Ok(())
        } else {
            Err(ZkError::GridMismatch("field grid differs from transform grid".into()))
        }
    }

    /// Project every `x`-row onto the eigenbasis.
    pub fn y_coeffs(&self, field: &Field) -> Result<YCoeffs> {
        self.check_grid(&field.grid)?;
        let (nx, ny, nm) = (self.grid.nx, self.grid.ny, self.basis.len());
        let mut data = vec![0.0; nx * nm];
        for i in 0..nx {
            let row = &field.values[i * ny..(i + 1) * ny];
            for l in 0..nm {
                let a = &self.analysis[l * ny..(l + 1) * ny];
                data[i * nm + l] = a.iter().zip(row).map(|(a, u)| a * u).sum();
            }
        }
        Ok(YCoeffs {
            grid: self.grid.clone(),
            data,
        })
    }

    fn y_synthesize(&self, yc: &YCoeffs) -> Field {
        let (nx, ny, nm) = (self.grid.nx, self.grid.ny, self.basis.len());
        let mut values = vec![0.0; nx * ny];
        for i in 0..nx {
            let c = yc.row(i);
            for k in 0..ny {
                let s = &self.synth[k * nm..(k + 1) * nm];
                values[i * ny + k] = s.iter().zip(c).map(|(s, c)| s * c).sum();
            }
        }
        Field {
            grid: self.grid.clone(),
            values,
        }
    }

    /// Forward `x` transform of `y`-coefficient rows.
    pub fn x_forward(&self, yc: &YCoeffs) -> SpectralField {
        let (nx, nm) = (self.grid.nx, self.basis.len());
        let mut out = SpectralField::zeros(self.grid.clone());
        let mut buf = vec![Complex64::new(0.0, 0.0); nx];
        let norm = 1.0 / nx as f64;
        for l in 0..nm {
            for (i, b) in buf.iter_mut().enumerate() {
                *b = Complex64::new(yc.data[i * nm + l], 0.0);
            }
            self.fft.process(&mut buf);
            for (j, b) in buf.iter().enumerate() {
                out.coeffs[j * nm + l] = b * (norm * parity(self.grid.signed_index(j)));
            }
        }
        out
    }

    /// Inverse `x` transform to `y`-coefficient rows; rejects non-real results.
    pub fn x_inverse(&self, sf: &SpectralField) -> Result<YCoeffs> {
        self.check_grid(&sf.grid)?;
        let (nx, nm) = (self.grid.nx, self.basis.len());
        let mut data = vec![0.0; nx * nm];
        let mut buf = vec![Complex64::new(0.0, 0.0); nx];
        let mut max_imag = 0.0f64;
        let mut max_abs = 0.0f64;
        for l in 0..nm {
            for (j, b) in buf.iter_mut().enumerate() {
                *b = sf.coeffs[j * nm + l] * parity(self.grid.signed_index(j));
            }
            self.ifft.process(&mut buf);
            for (i, b) in buf.iter().enumerate() {
                max_imag = max_imag.max(b.im.abs());
                max_abs = max_abs.max(b.norm());
                data[i * nm + l] = b.re;
            }
        }
        if max_imag > 1e-10 * max_abs.max(f64::MIN_POSITIVE) {
            return Err(ZkError::NonRealSynthesis {
                imag: max_imag,
                scale: max_abs,
            });
        }
        Ok(YCoeffs {
            grid: self.grid.clone(),
            data,
        })
    }

    pub fn to_spectral(&self, field: &Field) -> Result<SpectralField> {
        Ok(self.x_forward(&self.y_coeffs(field)?))
    }

    pub fn from_spectral(&self, sf: &SpectralField) -> Result<Field> {
        Ok(self.y_synthesize(&self.x_inverse(sf)?))
    }

    /// Values at the padded `x` nodes (3/2 rule) and the `y` quadrature nodes,
    /// `i * ny + k` with `i < 3 nx / 2`. The Nyquist slot is dropped.
    pub fn to_padded(&self, sf: &SpectralField) -> Result<Vec<f64>> {
        self.check_grid(&sf.grid)?;
        let (nx, ny, nm) = (self.grid.nx, self.grid.ny, self.basis.len());
        let np = pad_len(nx);
        let mut out = vec![0.0; np * ny];
        let mut buf = vec![Complex64::new(0.0, 0.0); np];
        for k in 0..ny {
            let s = &self.synth[k * nm..(k + 1) * nm];
            buf.iter_mut().for_each(|b| *b = Complex64::new(0.0, 0.0));
            for j in 0..nx {
                if self.grid.is_nyquist(j) {
                    continue;
                }
                let sj = self.grid.signed_index(j);
                let row = &sf.coeffs[j * nm..(j + 1) * nm];
                let v: Complex64 = row.iter().zip(s).map(|(c, s)| c * s).sum();
                buf[sj.rem_euclid(np as i64) as usize] = v * parity(sj);
            }
            self.pad_ifft.process(&mut buf);
            for (i, b) in buf.iter().enumerate() {
                out[i * ny + k] = b.re;
            }
        }
        Ok(out)
    }

    /// Inverse of [`Transform::to_padded`] followed by truncation to the grid's modes.
    /// Also returns the relative magnitude of the discarded `x` content.
    pub fn from_padded(&self, values: &[f64]) -> Result<(SpectralField, f64)> {
        let (nx, ny, nm) = (self.grid.nx, self.grid.ny, self.basis.len());
        let np = pad_len(nx);
        if values.len() != np * ny {
            return Err(ZkError::Shape {
                expected: np * ny,
                got: values.len(),
            });
        }
        let mut hybrid = vec![Complex64::new(0.0, 0.0); nx * ny];
        let mut buf = vec![Complex64::new(0.0, 0.0); np];
        let norm = 1.0 / np as f64;
        let (mut kept, mut dropped) = (0.0, 0.0);
        for k in 0..ny {
            for (i, b) in buf.iter_mut().enumerate() {
                *b = Complex64::new(values[i * ny + k], 0.0);
            }
            self.pad_fft.process(&mut buf);
            for (p, b) in buf.iter().enumerate() {
                let sp = if p < np / 2 { p as i64 } else { p as i64 - np as i64 };
                if sp.unsigned_abs() < (nx / 2) as u64 {
                    let j = sp.rem_euclid(nx as i64) as usize;
                    hybrid[j * ny + k] = b * (norm * parity(sp));
                    kept += b.norm_sqr();
                } else {
                    dropped += b.norm_sqr();
                }
            }
        }
        let mut out = SpectralField::zeros(self.grid.clone());
        for j in 0..nx {
            let h = &hybrid[j * ny..(j + 1) * ny];
            for l in 0..nm {
                let a = &self.analysis[l * ny..(l + 1) * ny];
                out.coeffs[j * nm + l] = a.iter().zip(h).map(|(a, h)| h * *a).sum();
            }
        }
        let total = kept + dropped;
        let ratio = if total > 0.0 { (dropped / total).sqrt() } else { 0.0 };
        Ok((out, ratio))
    }

    /// `y`-coefficient rows on the 3/2-padded `x` grid (`i * n_modes + l`,
    /// `i < 3 nx / 2`, nodes `-X + i · 2X / (3nx/2)`), Nyquist slot dropped.
    pub fn x_inverse_padded(&self, sf: &SpectralField) -> Result<Vec<f64>> {
        self.x_inverse_on(sf, pad_len(self.grid.nx))
    }

    /// `y`-coefficient rows of the trigonometric interpolant on `n ≥ nx`
    /// uniform nodes `-X + i · 2X / n`, Nyquist slot dropped.
    pub fn x_inverse_on(&self, sf: &SpectralField, n: usize) -> Result<Vec<f64>> {
        self.check_grid(&sf.grid)?;
        let (nx, nm) = (self.grid.nx, self.basis.len());
        if n < nx {
            return Err(ZkError::Config(format!("oversampled grid of {n} nodes is coarser than {nx}")));
        }
        let plan = if n == pad_len(nx) {
            self.pad_ifft.clone()
        } else {
            FftPlanner::new().plan_fft_inverse(n)
        };
        let mut data = vec![0.0; n * nm];
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        for l in 0..nm {
            buf.iter_mut().for_each(|b| *b = Complex64::new(0.0, 0.0));
            for j in 0..nx {
                if self.grid.is_nyquist(j) {
                    continue;
                }
                let sj = self.grid.signed_index(j);
                buf[sj.rem_euclid(n as i64) as usize] = sf.coeffs[j * nm + l] * parity(sj);
            }
            plan.process(&mut buf);
            for (i, b) in buf.iter().enumerate() {
                data[i * nm + l] = b.re;
            }
        }
        Ok(data)
    }

    /// `Σ_l rows[i][l] · ψ_l^{(order)}(y)` for every row and every `y` in `ys`,
    /// at `i * ys.len() + k`; `order ∈ {0, 1}`.
    pub fn eval_rows(&self, rows: &[f64], ys: &[f64], order: u32) -> Vec<f64> {
        let nm = self.basis.len();
        let table: Vec<Vec<f64>> = ys
            .iter()
            .map(|&y| {
                self.basis
                    .pairs
                    .iter()
                    .map(|p| if order == 0 { p.value(y) } else { p.d1(y) })
                    .collect()
            })
            .collect();
        let n_rows = rows.len() / nm;
        let mut out = vec![0.0; n_rows * ys.len()];
        for i in 0..n_rows {
            let c = &rows[i * nm..(i + 1) * nm];
            for (k, t) in table.iter().enumerate() {
                out[i * ys.len() + k] = t.iter().zip(c).map(|(a, b)| a * b).sum();
            }
        }
        out
    }

    /// Evaluate the spectral field and its `y`-derivative at arbitrary `y`
    /// values on every `x` node: returns `(u, u_y)` at `i * ys.len() + k`.
    pub fn sample_rows(&self, yc: &YCoeffs, ys: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let nx = self.grid.nx;
        let mut u = vec![0.0; nx * ys.len()];
        let mut uy = vec![0.0; nx * ys.len()];
        let table: Vec<(Vec<f64>, Vec<f64>)> = ys
            .iter()
            .map(|&y| {
                (
                    self.basis.pairs.iter().map(|p| p.value(y)).collect(),
                    self.basis.pairs.iter().map(|p| p.d1(y)).collect(),
                )
            })
            .collect();
        for i in 0..nx {
            let c = yc.row(i);
            for (k, (v, d)) in table.iter().enumerate() {
                u[i * ys.len() + k] = v.iter().zip(c).map(|(a, b)| a * b).sum();
                uy[i * ys.len() + k] = d.iter().zip(c).map(|(a, b)| a * b).sum();
            }
        }
        (u, uy)
    }
}

pub fn pad_len(nx: usize) -> usize {
    3 * nx / 2
}

fn parity(j: i64) -> f64 {
    if j.rem_euclid(2) == 0 {
        1.0
    } else {
        -1.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn grid(case: BoundaryCase, nx: usize, ny: usize) -> Arc<Grid> {
        Grid::new(case, 10.0, nx, 3.0, ny).unwrap()
    }

    #[test]
    fn first_pairs_match_closed_forms() {
        let a = eigen_pairs(BoundaryCase::Dirichlet, PI, 1).unwrap();
        assert_relative_eq!(a.pairs[0].lambda, 1.0, epsilon = 1e-15);
        assert_relative_eq!(a.pairs[0].value(0.3), (2.0 / PI).sqrt() * 0.3f64.sin(), epsilon = 1e-15);

        let b = eigen_pairs(BoundaryCase::Neumann, 1.0, 1).unwrap();
        assert_eq!(b.pairs[0].lambda, 0.0);
        assert_eq!(b.pairs[0].value(0.42), 1.0);

        let c = eigen_pairs(BoundaryCase::Mixed, PI, 1).unwrap();
        assert_relative_eq!(c.pairs[0].lambda, 0.25, epsilon = 1e-15);
        assert_relative_eq!(c.pairs[0].value(1.1), (2.0 / PI).sqrt() * 0.55f64.sin(), epsilon = 1e-15);
    }

    #[test]
    fn periodic_ordering() {
        let d = eigen_pairs(BoundaryCase::Periodic, 2.0 * PI, 5).unwrap();
        let shapes: Vec<_> = d.pairs.iter().map(|p| p.shape).collect();
        assert_eq!(
            shapes,
            vec![
                ModeShape::Constant,
                ModeShape::Cos(1.0),
                ModeShape::Sin(1.0),
                ModeShape::Cos(2.0),
                ModeShape::Sin(2.0)
            ]
        );
        assert!(d.pairs.windows(2).all(|w| w[0].lambda <= w[1].lambda));
    }

    #[test]
    fn too_many_modes_is_a_configuration_error() {
        let g = grid(BoundaryCase::Periodic, 16, 8);
        assert_eq!(g.n_modes(), 7);
        let basis = eigen_pairs(BoundaryCase::Periodic, 3.0, 8).unwrap();
        assert!(matches!(Transform::with_basis(&g, basis), Err(ZkError::Config(_))));
    }

    #[test]
    fn invalid_grids_are_rejected() {
        assert!(Grid::new(BoundaryCase::Dirichlet, 1.0, 7, 1.0, 8).is_err());
        assert!(Grid::new(BoundaryCase::Dirichlet, 1.0, 8, 1.0, 3).is_err());
        assert!(Grid::new(BoundaryCase::Dirichlet, 0.0, 8, 1.0, 8).is_err());
        assert!(Grid::new(BoundaryCase::Dirichlet, 1.0, 8, -1.0, 8).is_err());
    }

    #[test]
    fn gram_is_identity_for_every_case() {
        for case in BoundaryCase::ALL {
            for ny in [4, 7, 16, 33] {
                let g = grid(case, 8, ny);
                let b = EigenBasis::for_grid(&g).unwrap();
                let gram = b.gram(&g);
                for (i, row) in gram.iter().enumerate() {
                    for (j, v) in row.iter().enumerate() {
                        let e = if i == j { 1.0 } else { 0.0 };
                        assert!((v - e).abs() < 1e-12, "case {case} ny {ny} ({i},{j}) = {v}");
                    }
                }
                assert!(b.boundary_defect() < 1e-12, "case {case}");
            }
        }
    }

    #[test]
    fn zero_and_x_constant_fields() {
        let g = grid(BoundaryCase::Mixed, 16, 8);
        let t = Transform::new(&g).unwrap();
        let z = t.to_spectral(&Field::zeros(g.clone())).unwrap();
        assert!(z.coeffs.iter().all(|c| c.norm() == 0.0));

        let p = t.basis.pairs[0];
        let f = Field::from_fn(g.clone(), |_, y| p.value(y));
        let sf = t.to_spectral(&f).unwrap();
        for (idx, c) in sf.coeffs.iter().enumerate() {
            let expect = if idx == 0 { 1.0 } else { 0.0 };
            assert!((c - Complex64::new(expect, 0.0)).norm() < 1e-13, "slot {idx}");
        }
    }

    #[test]
    fn cosine_mode_lands_on_plus_minus_one() {
        let g = grid(BoundaryCase::Dirichlet, 32, 8);
        let t = Transform::new(&g).unwrap();
        let p = t.basis.pairs[1];
        let x_len = g.x_half_width;
        let f = Field::from_fn(g.clone(), |x, y| (PI * x / x_len).cos() * p.value(y));
        let sf = t.to_spectral(&f).unwrap();
        assert_relative_eq!(sf.get(1, 1).re, 0.5, epsilon = 1e-13);
        assert_relative_eq!(sf.get(-1, 1).re, 0.5, epsilon = 1e-13);
        let mut rest = sf.clone();
        rest.set(1, 1, Complex64::new(0.0, 0.0));
        rest.set(-1, 1, Complex64::new(0.0, 0.0));
        assert!(rest.coeffs.iter().all(|c| c.norm() <= 1e-12));
    }

    #[test]
    fn single_periodic_mode_synthesizes_travelling_profile() {
        let g = grid(BoundaryCase::Periodic, 16, 9);
        let t = Transform::new(&g).unwrap();
        let mut sf = SpectralField::zeros(g.clone());
        // û(±1, l=1) = 1/2 → cos(ξ_1 x) · ψ_1(y), ψ_1 = cos(2πy/L)·√(2/L)
        sf.set(1, 1, Complex64::new(0.5, 0.0));
        sf.set(-1, 1, Complex64::new(0.5, 0.0));
        let f = t.from_spectral(&sf).unwrap();
        let xi = g.wavenumber(1);
        let p = t.basis.pairs[1];
        for (i, &x) in g.x_nodes.iter().enumerate() {
            for (k, &y) in g.y_nodes.iter().enumerate() {
                assert!((f.at(i, k) - (xi * x).cos() * p.value(y)).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn asymmetric_coefficients_are_not_real() {
        let g = grid(BoundaryCase::Neumann, 16, 4);
        let t = Transform::new(&g).unwrap();
        let mut sf = SpectralField::zeros(g.clone());
        sf.set(1, 0, Complex64::new(1.0, 0.0));
        assert!(matches!(t.from_spectral(&sf), Err(ZkError::NonRealSynthesis { .. })));
        assert!(t.from_spectral(&SpectralField::zeros(g)).unwrap().max_abs() == 0.0);
    }

    #[test]
    fn derivative_rules() {
        let g = grid(BoundaryCase::Periodic, 32, 5);
        let t = Transform::new(&g).unwrap();
        let k = g.wavenumber(2);
        let f = Field::from_fn(g.clone(), |x, _| (k * x).sin());
        let sf = t.to_spectral(&f).unwrap();
        assert_eq!(derivative(&sf, &t.basis, 0, false), sf);
        let dx = t.from_spectral(&derivative(&sf, &t.basis, 1, false)).unwrap();
        for (i, &x) in g.x_nodes.iter().enumerate() {
            assert!((dx.at(i, 3) - k * (k * x).cos()).abs() < 1e-12);
        }
        let mut m = SpectralField::zeros(g.clone());
        m.set(0, 3, Complex64::new(1.0, 0.0));
        let yy = derivative(&m, &t.basis, 0, true);
        assert_relative_eq!(yy.get(0, 3).re, -t.basis.pairs[3].lambda);
    }

    #[test]
    fn padded_round_trip_is_exact_for_band_limited_fields() {
        let g = grid(BoundaryCase::Neumann, 16, 6);
        let t = Transform::new(&g).unwrap();
        let f = Field::from_fn(g.clone(), |x, y| (0.3 * PI * x).cos() * (y * PI / 3.0).cos() + 0.2);
        let mut sf = t.to_spectral(&f).unwrap();
        sf.set(8, 0, Complex64::new(0.0, 0.0));
        let pad = t.to_padded(&sf).unwrap();
        let (back, ratio) = t.from_padded(&pad).unwrap();
        assert!(ratio < 1e-14);
        for (a, b) in back.coeffs.iter().zip(&sf.coeffs) {
            assert!((a - b).norm() < 1e-14);
        }
    }

    fn random_coeffs(g: &Arc<Grid>, seed: &[f64]) -> SpectralField {
        // Build a real field from a conjugate-symmetric coefficient set.
        let mut sf = SpectralField::zeros(g.clone());
        let nm = g.n_modes();
        let half = (g.nx / 2) as i64;
        let mut it = seed.iter().cycle();
        for l in 0..nm {
            for j in 0..half {
                let re = *it.next().unwrap();
                let im = if j == 0 { 0.0 } else { *it.next().unwrap() };
                let damp = (-(j as f64) * 0.3 - l as f64 * 0.2).exp();
                let c = Complex64::new(re, im) * damp;
                sf.set(j, l, c);
                sf.set(-j, l, c.conj());
            }
        }
        sf
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn spectral_round_trips(case_ix in 0usize..4, seed in prop::collection::vec(-1.0f64..1.0, 16)) {
            let case = BoundaryCase::ALL[case_ix];
            let g = grid(case, 32, 8);
            let t = Transform::new(&g).unwrap();
            let sf = random_coeffs(&g, &seed);
            let f = t.from_spectral(&sf).unwrap();
            let back = t.to_spectral(&f).unwrap();
            let scale = sf.coeffs.iter().fold(0.0f64, |m, c| m.max(c.norm())).max(1e-300);
            for (a, b) in back.coeffs.iter().zip(&sf.coeffs) {
                prop_assert!((a - b).norm() <= 1e-12 * scale);
            }
            let f2 = t.from_spectral(&back).unwrap();
            let fs = f.max_abs().max(1e-300);
            for (a, b) in f2.values.iter().zip(&f.values) {
                prop_assert!((a - b).abs() <= 1e-12 * fs);
            }
            // d/dx twice equals d²/dx² once
            let d11 = derivative(&derivative(&sf, &t.basis, 1, false), &t.basis, 1, false);
            let d2 = derivative(&sf, &t.basis, 2, false);
            let s2 = d2.coeffs.iter().fold(0.0f64, |m, c| m.max(c.norm())).max(1e-300);
            for (a, b) in d11.coeffs.iter().zip(&d2.coeffs) {
                prop_assert!((a - b).norm() <= 1e-12 * s2);
            }
        }
    }
}
