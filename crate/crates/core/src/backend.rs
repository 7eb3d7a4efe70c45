//! Numerical execution of gate sequences.
//!
//! [`GridState`] holds a wavefunction sampled on a uniform tensor grid and
//! applies every gate either as a pointwise phase or through a per-fiber FFT
//! along one axis. [`GaussianState`] tracks mean and covariance exactly and
//! accepts Gaussian gates and quadratic KvN Hamiltonians.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};
use std::fmt;
use std::io::{self, Write};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use ndarray::{ArrayD, Axis, Dimension, IxDyn, Zip};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rustfft::{Fft, FftPlanner};
use rayon::prelude::*;
use thiserror::Error;

use crate::kvn::{KvnHamiltonian, KvnTerm};
use crate::poly::{rational_to_f64, CompiledPolynomial};
use crate::synth::{Gate, GateSequence, SynthError};

pub const DEFAULT_MEMORY_CAP_BYTES: usize = 2 << 30;
pub const DEFAULT_POINTS_PER_MODE: usize = 128;
pub const DEFAULT_HALF_EXTENT: f64 = 8.0;
pub const MAX_GRID_MODES: usize = 4;
/// Captured probability below `1 - COVERAGE_TOLERANCE` rejects a Gaussian.
pub const COVERAGE_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BackendError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("grid needs {bytes} bytes, above the memory cap of {cap} bytes")]
    MemoryCap { bytes: u128, cap: usize },
    #[error("expected {expected} modes, got {got}")]
    ModeMismatch { expected: usize, got: usize },
    #[error("Fourier gate needs a self-dual grid (dx^2 = 2π/N); half_extent {half_extent} with {points} points is not")]
    NotSelfDual { points: usize, half_extent: f64 },
    #[error("invalid covariance: {0}")]
    InvalidCovariance(String),
    #[error("grid captures only {captured} of the initial probability")]
    Coverage { captured: f64 },
    #[error(transparent)]
    Gate(#[from] SynthError),
    #[error("Gaussian backend cannot apply `{0}`")]
    NonGaussian(String),
    #[error("number of samples must be positive")]
    NoSamples,
    #[error("state became non-finite")]
    NonFinite,
    #[error("density tables live on different grids")]
    GridMismatch,
}

/// Uniform grid over `[-L, L)^M` with `N` points per mode.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec {
    num_modes: usize,
    points_per_mode: usize,
    half_extent: f64,
}

impl GridSpec {
    pub fn new(num_modes: usize, points_per_mode: usize, half_extent: f64) -> Result<Self, BackendError> {
        Self::with_memory_cap(num_modes, points_per_mode, half_extent, DEFAULT_MEMORY_CAP_BYTES)
    }

    pub fn with_memory_cap(
        num_modes: usize,
        points_per_mode: usize,
        half_extent: f64,
        memory_cap: usize,
    ) -> Result<Self, BackendError> {
        if num_modes == 0 || num_modes > MAX_GRID_MODES {
            return Err(BackendError::InvalidGrid(format!(
                "num_modes must be in 1..={MAX_GRID_MODES}, got {num_modes}"
            )));
        }
        if points_per_mode < 16 || !points_per_mode.is_power_of_two() {
            return Err(BackendError::InvalidGrid(format!(
                "points_per_mode must be a power of two >= 16, got {points_per_mode}"
            )));
        }
        if !(half_extent.is_finite() && half_extent > 0.0) {
            return Err(BackendError::InvalidGrid(format!(
                "half_extent must be positive and finite, got {half_extent}"
            )));
        }
        let bytes = (points_per_mode as u128).pow(num_modes as u32) * std::mem::size_of::<Complex64>() as u128;
        if bytes > memory_cap as u128 {
            return Err(BackendError::MemoryCap { bytes, cap: memory_cap });
        }
        Ok(GridSpec {
            num_modes,
            points_per_mode,
            half_extent,
        })
    }

    /// Grid with `dx = sqrt(2π/N)`, on which the discrete Fourier transform
    /// maps the position grid onto itself.
    pub fn self_dual(num_modes: usize, points_per_mode: usize) -> Result<Self, BackendError> {
        Self::new(num_modes, points_per_mode, self_dual_half_extent(points_per_mode))
    }

    pub fn num_modes(&self) -> usize {
        self.num_modes
    }

    pub fn points_per_mode(&self) -> usize {
        self.points_per_mode
    }

    pub fn half_extent(&self) -> f64 {
        self.half_extent
    }

    pub fn dx(&self) -> f64 {
        2.0 * self.half_extent / self.points_per_mode as f64
    }

    pub fn dp(&self) -> f64 {
        2.0 * PI / (self.points_per_mode as f64 * self.dx())
    }

    pub fn cell_volume(&self) -> f64 {
        self.dx().powi(self.num_modes as i32)
    }

    pub fn total_points(&self) -> usize {
        self.points_per_mode.pow(self.num_modes as u32)
    }

    pub fn shape(&self) -> Vec<usize> {
        vec![self.points_per_mode; self.num_modes]
    }

    pub fn coordinate(&self, index: usize) -> f64 {
        (index as f64 - (self.points_per_mode / 2) as f64) * self.dx()
    }

    pub fn coordinates(&self) -> Vec<f64> {
        (0..self.points_per_mode).map(|i| self.coordinate(i)).collect()
    }

    /// Angular wavenumbers in FFT output order.
    pub fn momenta(&self) -> Vec<f64> {
        let n = self.points_per_mode as i64;
        (0..n)
            .map(|k| if k < n / 2 { k } else { k - n } as f64 * self.dp())
            .collect()
    }

    /// Index along `mode` of the flat row-major position `flat`.
    pub fn mode_index(&self, flat: usize, mode: usize) -> usize {
        let stride = self.points_per_mode.pow((self.num_modes - 1 - mode) as u32);
        (flat / stride) % self.points_per_mode
    }

    /// Coordinates of the flat row-major position `flat`.
    pub fn point(&self, flat: usize) -> Vec<f64> {
        (0..self.num_modes)
            .map(|j| self.coordinate(self.mode_index(flat, j)))
            .collect()
    }

    pub fn is_self_dual(&self) -> bool {
        let target = 2.0 * PI;
        (self.dx().powi(2) * self.points_per_mode as f64 - target).abs() <= 1e-9 * target
    }
}

pub fn self_dual_half_extent(points_per_mode: usize) -> f64 {
    (PI * points_per_mode as f64 / 2.0).sqrt()
}

#[derive(Clone)]
struct FftPair {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl FftPair {
    fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        FftPair {
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }
    }
}

/// Wavefunction sampled on a [`GridSpec`], stored in standard layout with
/// axis `j` holding mode `j`.
#[derive(Clone)]
pub struct GridState {
    spec: GridSpec,
    amplitudes: ArrayD<Complex64>,
    fft: FftPair,
}

impl fmt::Debug for GridState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GridState")
            .field("spec", &self.spec)
            .field("norm", &self.norm_sqr())
            .finish()
    }
}

impl GridState {
    pub fn from_amplitudes(spec: GridSpec, amplitudes: ArrayD<Complex64>) -> Result<Self, BackendError> {
        if amplitudes.shape() != spec.shape().as_slice() {
            return Err(BackendError::InvalidGrid(format!(
                "amplitude shape {:?} does not match grid shape {:?}",
                amplitudes.shape(),
                spec.shape()
            )));
        }
        let amplitudes = amplitudes.as_standard_layout().into_owned();
        Ok(GridState {
            spec,
            fft: FftPair::new(spec.points_per_mode),
            amplitudes,
        })
    }

    /// Samples `f` at every grid point.
    pub fn from_fn<F>(spec: GridSpec, f: F) -> Self
    where
        F: Fn(&[f64]) -> Complex64 + Sync,
    {
        let mut data = vec![Complex64::default(); spec.total_points()];
        data.par_iter_mut().enumerate().for_each(|(i, a)| *a = f(&spec.point(i)));
        let amplitudes = ArrayD::from_shape_vec(IxDyn(&spec.shape()), data).expect("shape matches length");
        GridState {
            spec,
            fft: FftPair::new(spec.points_per_mode),
            amplitudes,
        }
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn amplitudes(&self) -> &ArrayD<Complex64> {
        &self.amplitudes
    }

    /// `sum |psi|^2 dx^M`.
    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>() * self.spec.cell_volume()
    }

    pub fn normalize(&mut self) -> Result<(), BackendError> {
        let norm = self.norm_sqr().sqrt();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(BackendError::NonFinite);
        }
        self.amplitudes.mapv_inplace(|a| a / norm);
        Ok(())
    }

    /// `<self|other>` with the grid measure.
    pub fn inner(&self, other: &GridState) -> Result<Complex64, BackendError> {
        if self.spec != other.spec {
            return Err(BackendError::GridMismatch);
        }
        let s: Complex64 = self
            .amplitudes
            .iter()
            .zip(other.amplitudes.iter())
            .map(|(a, b)| a.conj() * b)
            .sum();
        Ok(s * self.spec.cell_volume())
    }

    /// `||self - reference|| / ||reference||`.
    pub fn relative_distance(&self, reference: &GridState) -> Result<f64, BackendError> {
        if self.spec != reference.spec {
            return Err(BackendError::GridMismatch);
        }
        let diff: f64 = self
            .amplitudes
            .iter()
            .zip(reference.amplitudes.iter())
            .map(|(a, b)| (a - b).norm_sqr())
            .sum();
        let base: f64 = reference.amplitudes.iter().map(|b| b.norm_sqr()).sum();
        Ok((diff / base).sqrt())
    }

    pub fn is_finite(&self) -> bool {
        self.amplitudes.iter().all(|a| a.re.is_finite() && a.im.is_finite())
    }

    pub fn scale_phase(&mut self, theta: f64) {
        let phase = Complex64::from_polar(1.0, theta);
        self.amplitudes.mapv_inplace(|a| a * phase);
    }

    fn flat_mut(&mut self) -> &mut [Complex64] {
        self.amplitudes.as_slice_mut().expect("standard layout")
    }

    fn check_mode(&self, mode: usize) -> Result<(), BackendError> {
        if mode >= self.spec.num_modes {
            return Err(BackendError::Gate(SynthError::InvalidGate {
                gate: format!("mode {}", mode + 1),
                reason: format!("grid has {} modes", self.spec.num_modes),
            }));
        }
        Ok(())
    }

    /// Multiplies by `exp(i phase(x_mode))`.
    fn phase_one(&mut self, mode: usize, phase: impl Fn(f64) -> f64) {
        let table: Vec<Complex64> = self
            .spec
            .coordinates()
            .into_iter()
            .map(|x| Complex64::from_polar(1.0, phase(x)))
            .collect();
        let spec = self.spec;
        self.flat_mut()
            .par_iter_mut()
            .enumerate()
            .for_each(|(i, a)| *a *= table[spec.mode_index(i, mode)]);
    }

    /// Multiplies by `exp(i s x_a x_b)`.
    fn phase_two(&mut self, a: usize, b: usize, s: f64) {
        let spec = self.spec;
        let coords = spec.coordinates();
        self.flat_mut().par_iter_mut().enumerate().for_each(|(i, amp)| {
            let (xa, xb) = (coords[spec.mode_index(i, a)], coords[spec.mode_index(i, b)]);
            *amp *= Complex64::from_polar(1.0, s * xa * xb);
        });
    }

    /// Runs `f(lane coordinates, lane)` on every 1-D fiber along `axis`.
    /// The coordinate slice has the fiber's own entry set to zero.
    fn map_lanes<F>(&mut self, axis: usize, f: F)
    where
        F: Fn(&[f64], &mut [Complex64]) + Sync,
    {
        let spec = self.spec;
        let n = spec.points_per_mode;
        let inner = n.pow((spec.num_modes - 1 - axis) as u32);
        let outer = spec.total_points() / (n * inner);
        let mut view = self
            .amplitudes
            .view_mut()
            .into_shape_with_order((outer, n, inner))
            .expect("standard layout");
        Zip::indexed(view.lanes_mut(Axis(1))).par_for_each(|(o, i), mut lane| {
            // flat index of the lane's first element, whose axis coordinate is index 0
            let mut x = spec.point(o * n * inner + i);
            x[axis] = 0.0;
            let mut buf: Vec<Complex64> = lane.iter().copied().collect();
            f(&x, &mut buf);
            lane.iter_mut().zip(buf).for_each(|(a, b)| *a = b);
        });
    }

    /// FFT along `axis`, multiply by `multiplier(lane coords, momentum)`, inverse FFT.
    fn spectral<F>(&mut self, axis: usize, multiplier: F)
    where
        F: Fn(&[f64], f64) -> Complex64 + Sync,
    {
        let momenta = self.spec.momenta();
        let fft = self.fft.clone();
        let scale = 1.0 / self.spec.points_per_mode as f64;
        self.map_lanes(axis, |x, buf| {
            fft.forward.process(buf);
            for (v, &p) in buf.iter_mut().zip(&momenta) {
                *v *= multiplier(x, p) * scale;
            }
            fft.inverse.process(buf);
        });
    }

    /// Translates mode `axis` by `shift(x_rest)` for every fiber.
    fn translate<F>(&mut self, axis: usize, shift: F)
    where
        F: Fn(&[f64]) -> f64 + Sync,
    {
        let momenta = self.spec.momenta();
        let fft = self.fft.clone();
        let scale = 1.0 / self.spec.points_per_mode as f64;
        self.map_lanes(axis, |x, buf| {
            let a = shift(x);
            fft.forward.process(buf);
            for (v, &p) in buf.iter_mut().zip(&momenta) {
                *v *= Complex64::from_polar(scale, -a * p);
            }
            fft.inverse.process(buf);
        });
    }

    /// Centered unitary DFT with kernel `exp(+i x p)`; the adjoint when `inverse`.
    fn fourier(&mut self, axis: usize, inverse: bool) -> Result<(), BackendError> {
        if !self.spec.is_self_dual() {
            return Err(BackendError::NotSelfDual {
                points: self.spec.points_per_mode,
                half_extent: self.spec.half_extent,
            });
        }
        let fft = self.fft.clone();
        let scale = 1.0 / (self.spec.points_per_mode as f64).sqrt();
        // x_m = (m - N/2) dx with N a multiple of 4 turns the centered kernel
        // into (-1)^m (-1)^k exp(2πi mk/N).
        self.map_lanes(axis, |_, buf| {
            buf.iter_mut().skip(1).step_by(2).for_each(|v| *v = -*v);
            if inverse {
                fft.forward.process(buf);
            } else {
                fft.inverse.process(buf);
            }
            for (k, v) in buf.iter_mut().enumerate() {
                *v *= if k % 2 == 0 { scale } else { -scale };
            }
        });
        Ok(())
    }

    fn rotation(&mut self, mode: usize, s: f64) -> Result<(), BackendError> {
        // R(s + 2πk) = (-1)^k R(s)
        let mut k = ((s + PI) / (2.0 * PI)).floor();
        let mut theta = s - 2.0 * PI * k;
        if theta <= -PI {
            theta += 2.0 * PI;
            k -= 1.0;
        }
        let flip = k.rem_euclid(2.0) == 1.0;
        if self.spec.is_self_dual() && (theta.abs() - FRAC_PI_2).abs() < 1e-15 {
            // R(±π/2) = exp(±iπ/4) F^{±1}
            self.fourier(mode, theta < 0.0)?;
            self.scale_phase(FRAC_PI_4.copysign(theta));
        } else if theta.abs() > FRAC_PI_2 {
            self.rotation(mode, theta / 2.0)?;
            self.rotation(mode, theta / 2.0)?;
        } else if theta != 0.0 {
            let a = (theta / 2.0).tan();
            let b = theta.sin();
            self.phase_one(mode, |x| a * x * x / 2.0);
            self.spectral(mode, |_, p| Complex64::from_polar(1.0, b * p * p / 2.0));
            self.phase_one(mode, |x| a * x * x / 2.0);
        }
        if flip {
            self.amplitudes.mapv_inplace(|a| -a);
        }
        Ok(())
    }

    pub fn apply_gate(&mut self, gate: &Gate) -> Result<(), BackendError> {
        gate.validate(self.spec.num_modes)?;
        match *gate {
            Gate::Displacement { mode, s } => self.phase_one(mode, |x| s * x),
            Gate::QuadraticPhase { mode, s } => self.phase_one(mode, |x| s * x * x / 2.0),
            Gate::CubicPhase { mode, s } => self.phase_one(mode, |x| s * x * x * x / 3.0),
            Gate::QuarticPhase { mode, s } => self.phase_one(mode, |x| s * x.powi(4)),
            Gate::Rotation { mode, s } => self.rotation(mode, s)?,
            Gate::ControlledZ { a, b, s } => self.phase_two(a, b, s),
            Gate::ControlledX { control, target, s } => self.translate(target, |x| s * x[control]),
            Gate::Fourier { mode } => self.fourier(mode, false)?,
            Gate::FourierInverse { mode } => self.fourier(mode, true)?,
        }
        Ok(())
    }

    pub fn apply_sequence(&mut self, seq: &GateSequence) -> Result<(), BackendError> {
        if seq.num_modes() != self.spec.num_modes {
            return Err(BackendError::ModeMismatch {
                expected: self.spec.num_modes,
                got: seq.num_modes(),
            });
        }
        for g in seq.gates() {
            self.apply_gate(g)?;
        }
        Ok(())
    }

    /// `exp(-i s g(X) P_k)` applied directly as a translation of mode `k`
    /// by `s g(x_rest)` on every fiber.
    pub fn apply_exact_shift(&mut self, term: &KvnTerm, s: f64) -> Result<(), BackendError> {
        if term.num_modes() != self.spec.num_modes {
            return Err(BackendError::ModeMismatch {
                expected: self.spec.num_modes,
                got: term.num_modes(),
            });
        }
        if !s.is_finite() {
            return Err(SynthError::NonFinite(s).into());
        }
        let g = CompiledPolynomial::new(&term.signed_factor());
        self.translate(term.mode(), |x| s * g.eval(x));
        Ok(())
    }

    /// `<P_mode>` from the spectral density along `mode`.
    pub fn momentum_mean(&self, mode: usize) -> Result<f64, BackendError> {
        self.check_mode(mode)?;
        let momenta = self.spec.momenta();
        let fft = self.fft.clone();
        let mut num = 0.0;
        let mut den = 0.0;
        for lane in self.amplitudes.lanes(Axis(mode)) {
            let mut buf: Vec<Complex64> = lane.iter().copied().collect();
            fft.forward.process(&mut buf);
            for (v, p) in buf.iter().zip(&momenta) {
                num += p * v.norm_sqr();
                den += v.norm_sqr();
            }
        }
        Ok(num / den)
    }

    /// Probability in cells whose coordinate along some mode satisfies
    /// `|x| >= (1 - fraction) L`.
    pub fn boundary_mass(&self, fraction: f64) -> f64 {
        born_density(self).boundary_mass(fraction)
    }
}

/// Real Gaussian wavefunction `exp(-(x-μ)ᵀ Σ⁻¹ (x-μ)/4)`, normalized on the grid.
pub fn prepare_gaussian(spec: GridSpec, mean: &[f64], cov: &DMatrix<f64>) -> Result<GridState, BackendError> {
    let m = spec.num_modes;
    if mean.len() != m || cov.nrows() != m || cov.ncols() != m {
        return Err(BackendError::ModeMismatch {
            expected: m,
            got: mean.len().max(cov.nrows()),
        });
    }
    let precision = precision_matrix(cov)?;
    let det = cov.determinant();
    let state = GridState::from_fn(spec, |x| {
        let mut q = 0.0;
        for i in 0..m {
            for j in 0..m {
                q += (x[i] - mean[i]) * precision[(i, j)] * (x[j] - mean[j]);
            }
        }
        Complex64::new((-q / 4.0).exp(), 0.0)
    });
    let captured = state.norm_sqr() / ((2.0 * PI).powi(m as i32) * det).sqrt();
    if !(captured.is_finite() && (captured - 1.0).abs() <= COVERAGE_TOLERANCE) {
        return Err(BackendError::Coverage { captured });
    }
    let mut state = state;
    state.normalize()?;
    Ok(state)
}

/// Smallest number of marginal standard deviations between the mean and the
/// grid edge over all modes. Below 5 the initial state is poorly covered.
pub fn coverage_sigmas(spec: &GridSpec, mean: &[f64], cov: &DMatrix<f64>) -> f64 {
    let l = spec.half_extent;
    mean.iter()
        .enumerate()
        .map(|(i, &mu)| (l - mu.abs()) / cov[(i, i)].sqrt())
        .fold(f64::INFINITY, f64::min)
}

fn precision_matrix(cov: &DMatrix<f64>) -> Result<DMatrix<f64>, BackendError> {
    if !cov.iter().all(|v| v.is_finite()) {
        return Err(BackendError::InvalidCovariance("non-finite entry".into()));
    }
    let asym = (cov - cov.transpose()).abs().max();
    if asym > 1e-12 * cov.abs().max().max(1.0) {
        return Err(BackendError::InvalidCovariance("matrix is not symmetric".into()));
    }
    let chol = cov
        .clone()
        .cholesky()
        .ok_or_else(|| BackendError::InvalidCovariance("matrix is not positive definite".into()))?;
    Ok(chol.inverse())
}

pub fn apply_gate(mut state: GridState, gate: &Gate) -> Result<GridState, BackendError> {
    state.apply_gate(gate)?;
    Ok(state)
}

pub fn apply_sequence(mut state: GridState, seq: &GateSequence) -> Result<GridState, BackendError> {
    state.apply_sequence(seq)?;
    Ok(state)
}

pub fn exact_controlled_shift(mut state: GridState, term: &KvnTerm, s: f64) -> Result<GridState, BackendError> {
    state.apply_exact_shift(term, s)?;
    Ok(state)
}

/// Nonnegative grid function with the measure `dx^M`.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityTable {
    spec: GridSpec,
    values: ArrayD<f64>,
}

/// First moments and second moments of a density over the grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Moments {
    pub mean: Vec<f64>,
    /// Raw second moments `E[x_i x_j]`.
    pub second: DMatrix<f64>,
}

impl Moments {
    pub fn covariance(&self) -> DMatrix<f64> {
        let mu = DVector::from_column_slice(&self.mean);
        &self.second - &mu * mu.transpose()
    }

    /// `moment,i,j,value` rows for the mean vector and the covariance matrix,
    /// 1-based indices; mean rows leave `j` empty.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "moment,i,j,value")?;
        for (i, m) in self.mean.iter().enumerate() {
            writeln!(w, "mean,{},,{m}", i + 1)?;
        }
        let cov = self.covariance();
        for i in 0..cov.nrows() {
            for j in 0..cov.ncols() {
                writeln!(w, "cov,{},{},{}", i + 1, j + 1, cov[(i, j)])?;
            }
        }
        Ok(())
    }
}

impl DensityTable {
    pub fn new(spec: GridSpec, values: ArrayD<f64>) -> Result<Self, BackendError> {
        if values.shape() != spec.shape().as_slice() {
            return Err(BackendError::GridMismatch);
        }
        Ok(DensityTable {
            spec,
            values: values.as_standard_layout().into_owned(),
        })
    }

    /// Evaluates `f` at every grid point.
    pub fn from_fn<F>(spec: GridSpec, f: F) -> Self
    where
        F: Fn(&[f64]) -> f64 + Sync,
    {
        let mut data = vec![0.0; spec.total_points()];
        data.par_iter_mut().enumerate().for_each(|(i, v)| *v = f(&spec.point(i)));
        let values = ArrayD::from_shape_vec(IxDyn(&spec.shape()), data).expect("shape matches length");
        DensityTable { spec, values }
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn values(&self) -> &ArrayD<f64> {
        &self.values
    }

    pub fn total_mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.spec.cell_volume()
    }

    pub fn argmax(&self) -> Vec<usize> {
        let mut best = (f64::NEG_INFINITY, IxDyn(&[]));
        for (idx, &v) in self.values.indexed_iter() {
            if v > best.0 {
                best = (v, idx);
            }
        }
        best.1.slice().to_vec()
    }

    pub fn moments(&self) -> Moments {
        let m = self.spec.num_modes;
        let coords = self.spec.coordinates();
        let dv = self.spec.cell_volume();
        let mut mean = vec![0.0; m];
        let mut second = DMatrix::zeros(m, m);
        for (idx, &v) in self.values.indexed_iter() {
            let x: Vec<f64> = idx.slice().iter().map(|&i| coords[i]).collect();
            for i in 0..m {
                mean[i] += x[i] * v * dv;
                for j in 0..=i {
                    second[(i, j)] += x[i] * x[j] * v * dv;
                }
            }
        }
        for i in 0..m {
            for j in 0..i {
                second[(j, i)] = second[(i, j)];
            }
        }
        Moments { mean, second }
    }

    pub fn boundary_mass(&self, fraction: f64) -> f64 {
        let coords = self.spec.coordinates();
        let edge = (1.0 - fraction) * self.spec.half_extent;
        let outside: f64 = self
            .values
            .indexed_iter()
            .filter(|(idx, _)| idx.slice().iter().any(|&i| coords[i].abs() >= edge))
            .map(|(_, v)| v)
            .sum();
        outside * self.spec.cell_volume()
    }

    /// `x1,...,xM,density`, one row per cell in row-major order.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let header: Vec<String> = (1..=self.spec.num_modes).map(|i| format!("x{i}")).collect();
        writeln!(w, "{},density", header.join(","))?;
        let coords = self.spec.coordinates();
        for (idx, v) in self.values.indexed_iter() {
            for &i in idx.slice() {
                write!(w, "{},", coords[i])?;
            }
            writeln!(w, "{v}")?;
        }
        Ok(())
    }
}

/// `|psi|^2` on the grid.
pub fn born_density(state: &GridState) -> DensityTable {
    DensityTable {
        spec: state.spec,
        values: state.amplitudes.mapv(|a| a.norm_sqr()),
    }
}

/// Position samples stored row-major, one row of `num_modes` coordinates per sample.
#[derive(Clone, Debug, PartialEq)]
pub struct Samples {
    num_modes: usize,
    data: Vec<f64>,
}

impl Samples {
    /// Rows must share one positive length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, BackendError> {
        let num_modes = rows.first().map_or(0, Vec::len);
        if num_modes == 0 {
            return Err(BackendError::NoSamples);
        }
        if let Some(r) = rows.iter().find(|r| r.len() != num_modes) {
            return Err(BackendError::ModeMismatch {
                expected: num_modes,
                got: r.len(),
            });
        }
        Ok(Samples {
            num_modes,
            data: rows.concat(),
        })
    }

    pub fn num_modes(&self) -> usize {
        self.num_modes
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.num_modes
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, i: usize) -> &[f64] {
        &self.data[i * self.num_modes..(i + 1) * self.num_modes]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.num_modes)
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.num_modes];
        for row in self.iter() {
            for (m, x) in mean.iter_mut().zip(row) {
                *m += x;
            }
        }
        mean.iter().map(|m| m / self.len() as f64).collect()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let header: Vec<String> = (1..=self.num_modes).map(|i| format!("x{i}")).collect();
        writeln!(w, "{}", header.join(","))?;
        for row in self.iter() {
            let cells: Vec<String> = row.iter().map(|x| x.to_string()).collect();
            writeln!(w, "{}", cells.join(","))?;
        }
        Ok(())
    }
}

/// Draws grid points i.i.d. from the Born density by inverse CDF.
pub fn measure_positions(state: &GridState, num_samples: usize, seed: u64) -> Result<Samples, BackendError> {
    if num_samples == 0 {
        return Err(BackendError::NoSamples);
    }
    let density = born_density(state);
    let flat: Vec<f64> = density.values.iter().copied().collect();
    let mut cdf = Vec::with_capacity(flat.len());
    let mut acc = 0.0;
    for v in &flat {
        acc += v;
        cdf.push(acc);
    }
    if !(acc.is_finite() && acc > 0.0) {
        return Err(BackendError::NonFinite);
    }
    let spec = state.spec;
    let n = spec.points_per_mode;
    let m = spec.num_modes;
    let coords = spec.coordinates();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(num_samples * m);
    for _ in 0..num_samples {
        let u = rng.random::<f64>() * acc;
        let mut cell = cdf.partition_point(|&c| c <= u).min(flat.len() - 1);
        // skip zero-probability cells that share the cumulative value
        while flat[cell] == 0.0 && cell + 1 < flat.len() {
            cell += 1;
        }
        let mut digits = vec![0usize; m];
        for d in digits.iter_mut().rev() {
            *d = cell % n;
            cell /= n;
        }
        data.extend(digits.iter().map(|&i| coords[i]));
    }
    Ok(Samples { num_modes: m, data })
}

/// Mean and covariance of the quadratures `(X_1..X_M, P_1..P_M)`.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianState {
    mean: DVector<f64>,
    covariance: DMatrix<f64>,
}

impl GaussianState {
    pub fn vacuum(num_modes: usize) -> Self {
        GaussianState {
            mean: DVector::zeros(2 * num_modes),
            covariance: DMatrix::identity(2 * num_modes, 2 * num_modes) * 0.5,
        }
    }

    pub fn new(mean: DVector<f64>, covariance: DMatrix<f64>) -> Result<Self, BackendError> {
        let d = mean.len();
        if d == 0 || !d.is_multiple_of(2) || covariance.shape() != (d, d) {
            return Err(BackendError::InvalidCovariance(format!(
                "mean of length {d} and covariance {:?} do not describe whole modes",
                covariance.shape()
            )));
        }
        precision_matrix(&covariance)?;
        Ok(GaussianState { mean, covariance })
    }

    /// State whose position density is `N(mean, cov)` with a real wavefunction,
    /// so momentum mean zero and momentum covariance `cov⁻¹/4`.
    pub fn from_position_density(mean: &[f64], cov: &DMatrix<f64>) -> Result<Self, BackendError> {
        let m = mean.len();
        if cov.shape() != (m, m) {
            return Err(BackendError::ModeMismatch {
                expected: m,
                got: cov.nrows(),
            });
        }
        let precision = precision_matrix(cov)?;
        let mut full = DMatrix::zeros(2 * m, 2 * m);
        full.view_mut((0, 0), (m, m)).copy_from(cov);
        full.view_mut((m, m), (m, m)).copy_from(&(precision * 0.25));
        let mut mu = DVector::zeros(2 * m);
        mu.rows_mut(0, m).copy_from_slice(mean);
        Ok(GaussianState {
            mean: mu,
            covariance: full,
        })
    }

    pub fn num_modes(&self) -> usize {
        self.mean.len() / 2
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    pub fn position_mean(&self) -> Vec<f64> {
        self.mean.rows(0, self.num_modes()).iter().copied().collect()
    }

    pub fn position_covariance(&self) -> DMatrix<f64> {
        let m = self.num_modes();
        self.covariance.view((0, 0), (m, m)).into_owned()
    }

    /// Position moments in the same form as [`DensityTable::moments`].
    pub fn position_moments(&self) -> Moments {
        let mean = self.position_mean();
        let mu = DVector::from_column_slice(&mean);
        Moments {
            second: self.position_covariance() + &mu * mu.transpose(),
            mean,
        }
    }

    /// Mean update `r -> S r + d`, covariance `S Σ Sᵀ`.
    fn transform(&mut self, s: &DMatrix<f64>, d: &DVector<f64>) {
        self.mean = s * &self.mean + d;
        let c = s * &self.covariance * s.transpose();
        self.covariance = (&c + c.transpose()) * 0.5;
    }

    pub fn apply_gate(&mut self, gate: &Gate) -> Result<(), BackendError> {
        let m = self.num_modes();
        gate.validate(m)?;
        let mut s = DMatrix::identity(2 * m, 2 * m);
        let mut d = DVector::zeros(2 * m);
        let (x, p) = (|j: usize| j, |j: usize| m + j);
        match *gate {
            Gate::Displacement { mode, s: v } => d[p(mode)] = v,
            Gate::QuadraticPhase { mode, s: v } => s[(p(mode), x(mode))] = v,
            Gate::Rotation { mode, s: v } => {
                let (sn, cs) = v.sin_cos();
                s[(x(mode), x(mode))] = cs;
                s[(x(mode), p(mode))] = -sn;
                s[(p(mode), x(mode))] = sn;
                s[(p(mode), p(mode))] = cs;
            }
            Gate::Fourier { mode } => {
                s[(x(mode), x(mode))] = 0.0;
                s[(p(mode), p(mode))] = 0.0;
                s[(x(mode), p(mode))] = -1.0;
                s[(p(mode), x(mode))] = 1.0;
            }
            Gate::FourierInverse { mode } => {
                s[(x(mode), x(mode))] = 0.0;
                s[(p(mode), p(mode))] = 0.0;
                s[(x(mode), p(mode))] = 1.0;
                s[(p(mode), x(mode))] = -1.0;
            }
            Gate::ControlledZ { a, b, s: v } => {
                s[(p(a), x(b))] = v;
                s[(p(b), x(a))] = v;
            }
            Gate::ControlledX { control, target, s: v } => {
                s[(x(target), x(control))] = v;
                s[(p(control), p(target))] = -v;
            }
            Gate::CubicPhase { .. } | Gate::QuarticPhase { .. } => {
                return Err(BackendError::NonGaussian(gate.to_string()))
            }
        }
        self.transform(&s, &d);
        Ok(())
    }

    pub fn apply_sequence(&mut self, seq: &GateSequence) -> Result<(), BackendError> {
        if seq.num_modes() != self.num_modes() {
            return Err(BackendError::ModeMismatch {
                expected: self.num_modes(),
                got: seq.num_modes(),
            });
        }
        seq.gates().iter().try_for_each(|g| self.apply_gate(g))
    }
}

/// Exact evolution under a KvN Hamiltonian whose terms have degree at most 2.
///
/// The generator `sum_k g_k(X) P_k` with affine `g(x) = A x + b` moves
/// positions along `dx/dt = A x + b` and momenta along `dp/dt = -Aᵀ p`.
pub fn evolve_gaussian(state: &GaussianState, h: &KvnHamiltonian, t: f64) -> Result<GaussianState, BackendError> {
    let m = state.num_modes();
    if h.num_modes() != m {
        return Err(BackendError::ModeMismatch {
            expected: m,
            got: h.num_modes(),
        });
    }
    if !t.is_finite() {
        return Err(SynthError::NonFinite(t).into());
    }
    // augmented [[A, b], [0, 0]] so that exp gives the affine flow
    let mut aug = DMatrix::<f64>::zeros(m + 1, m + 1);
    for term in h.terms() {
        if term.degree() > 2 {
            return Err(BackendError::NonGaussian(term.to_string()));
        }
        let k = term.mode();
        for (mono, c) in term.signed_factor().terms() {
            let c = rational_to_f64(c);
            match mono.support().next() {
                None => aug[(k, m)] += c,
                Some(j) => aug[(k, j)] += c,
            }
        }
    }
    let a = aug.view((0, 0), (m, m)).into_owned();
    let flow = (aug * t).exp();
    let mut s = DMatrix::zeros(2 * m, 2 * m);
    s.view_mut((0, 0), (m, m)).copy_from(&flow.view((0, 0), (m, m)));
    s.view_mut((m, m), (m, m)).copy_from(&(a.transpose() * -t).exp());
    let mut d = DVector::zeros(2 * m);
    d.rows_mut(0, m).copy_from(&flow.view((0, m), (m, 1)));
    let mut out = state.clone();
    out.transform(&s, &d);
    if !out.mean.iter().chain(out.covariance.iter()).all(|v| v.is_finite()) {
        return Err(BackendError::NonFinite);
    }
    Ok(out)
}
