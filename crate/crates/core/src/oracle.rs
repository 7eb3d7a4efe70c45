//! Classical reference dynamics for checking the quantum emulation.
//!
//! Densities are transported by the method of characteristics,
//! `ρ(x, t) = ρ₀(Φ₋ₜ(x))`, which is exact because Hamiltonian flows preserve
//! phase-space volume.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use thiserror::Error;

use crate::backend::{DensityTable, GridSpec, Moments};
use crate::kvn::ClassicalHamiltonian;
use crate::poly::CompiledPolynomial;

pub const DEFAULT_DT: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("time step must be positive and finite, got {0}")]
    InvalidStep(f64),
    #[error("point has {got} coordinates, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite input")]
    NonFinite,
    #[error("trajectory blew up at t = {time}")]
    BlowUp { time: f64 },
    #[error("ensemble sample {index} blew up at t = {time}")]
    SampleBlowUp { index: usize, time: f64 },
    #[error("ensemble must contain at least one finite sample")]
    EmptyEnsemble,
    #[error("density tables live on different grids")]
    GridMismatch,
    #[error("invalid Gaussian: {0}")]
    InvalidGaussian(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Integrator {
    /// Kick-drift-kick Störmer-Verlet, symplectic for `H = V(q) + T(p)`.
    Leapfrog,
    /// Classical fourth-order Runge-Kutta on `dx/dt = J ∇H`.
    Rk4,
}

/// Numerical Hamiltonian flow of a separable Hamiltonian.
#[derive(Clone, Debug)]
pub struct FlowMap {
    h: ClassicalHamiltonian,
    integrator: Integrator,
    dt: f64,
    /// `∂V/∂q_j`
    grad_v: Vec<CompiledPolynomial>,
    /// `∂T/∂p_j`
    grad_t: Vec<CompiledPolynomial>,
    energy: CompiledPolynomial,
}

impl FlowMap {
    pub fn new(h: ClassicalHamiltonian, integrator: Integrator, dt: f64) -> Result<Self, OracleError> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(OracleError::InvalidStep(dt));
        }
        let n = h.n();
        let grad = |p: &crate::poly::PhasePolynomial, var: usize| {
            CompiledPolynomial::new(&p.partial_derivative(var).expect("variable in range"))
        };
        let grad_v = (0..n).map(|j| grad(h.potential(), j)).collect();
        let grad_t = (0..n).map(|j| grad(h.kinetic(), n + j)).collect();
        let energy = CompiledPolynomial::new(&h.total());
        Ok(FlowMap {
            h,
            integrator,
            dt,
            grad_v,
            grad_t,
            energy,
        })
    }

    pub fn leapfrog(h: ClassicalHamiltonian) -> Result<Self, OracleError> {
        Self::new(h, Integrator::Leapfrog, DEFAULT_DT)
    }

    pub fn hamiltonian(&self) -> &ClassicalHamiltonian {
        &self.h
    }

    pub fn integrator(&self) -> Integrator {
        self.integrator
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn dim(&self) -> usize {
        2 * self.h.n()
    }

    pub fn energy(&self, x: &[f64]) -> f64 {
        self.energy.eval(x)
    }

    /// `J ∇H(x) = (∂T/∂p, -∂V/∂q)`.
    pub fn vector_field(&self, x: &[f64]) -> Vec<f64> {
        let n = self.h.n();
        let mut out = vec![0.0; 2 * n];
        for j in 0..n {
            out[j] = self.grad_t[j].eval(x);
            out[n + j] = -self.grad_v[j].eval(x);
        }
        out
    }

    fn kick(&self, x: &mut [f64], h: f64) {
        let n = self.h.n();
        let force: Vec<f64> = self.grad_v.iter().map(|g| g.eval(x)).collect();
        for (p, f) in x[n..].iter_mut().zip(force) {
            *p -= h * f;
        }
    }

    fn drift(&self, x: &mut [f64], h: f64) {
        let n = self.h.n();
        let velocity: Vec<f64> = self.grad_t.iter().map(|g| g.eval(x)).collect();
        for (q, v) in x[..n].iter_mut().zip(velocity) {
            *q += h * v;
        }
    }

    fn rk4_step(&self, x: &mut [f64], h: f64) {
        let shifted = |base: &[f64], k: &[f64], a: f64| -> Vec<f64> {
            base.iter().zip(k).map(|(b, k)| b + a * k).collect()
        };
        let k1 = self.vector_field(x);
        let k2 = self.vector_field(&shifted(x, &k1, h / 2.0));
        let k3 = self.vector_field(&shifted(x, &k2, h / 2.0));
        let k4 = self.vector_field(&shifted(x, &k3, h));
        for i in 0..x.len() {
            x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }

    /// One step of length `h` (negative steps integrate backward).
    pub fn step(&self, x: &mut [f64], h: f64) {
        match self.integrator {
            Integrator::Leapfrog => {
                self.kick(x, h / 2.0);
                self.drift(x, h);
                self.kick(x, h / 2.0);
            }
            Integrator::Rk4 => self.rk4_step(x, h),
        }
    }

    /// State at time `t`, using `ceil(|t| / dt)` equal steps.
    pub fn flow(&self, x0: &[f64], t: f64) -> Result<Vec<f64>, OracleError> {
        if x0.len() != self.dim() {
            return Err(OracleError::DimensionMismatch {
                expected: self.dim(),
                got: x0.len(),
            });
        }
        if !t.is_finite() || !x0.iter().all(|v| v.is_finite()) {
            return Err(OracleError::NonFinite);
        }
        let mut x = x0.to_vec();
        if t == 0.0 {
            return Ok(x);
        }
        let steps = (t.abs() / self.dt).ceil().max(1.0) as usize;
        let h = t / steps as f64;
        for i in 0..steps {
            self.step(&mut x, h);
            if !x.iter().all(|v| v.is_finite()) {
                return Err(OracleError::BlowUp {
                    time: h * (i + 1) as f64,
                });
            }
        }
        Ok(x)
    }
}

pub fn flow(map: &FlowMap, x0: &[f64], t: f64) -> Result<Vec<f64>, OracleError> {
    map.flow(x0, t)
}

/// `ρ(x, t) = ρ₀(Φ₋ₜ(x))`.
pub fn liouville_density<F>(map: &FlowMap, rho0: F, t: f64, x: &[f64]) -> Result<f64, OracleError>
where
    F: Fn(&[f64]) -> f64,
{
    Ok(rho0(&map.flow(x, -t)?))
}

/// [`liouville_density`] at every point of `spec`; the grid axes are the
/// phase-space coordinates `(q_1..q_n, p_1..p_n)`.
pub fn tabulate_liouville<F>(map: &FlowMap, rho0: F, t: f64, spec: GridSpec) -> Result<DensityTable, OracleError>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    if spec.num_modes() != map.dim() {
        return Err(OracleError::DimensionMismatch {
            expected: map.dim(),
            got: spec.num_modes(),
        });
    }
    let values: Result<Vec<f64>, OracleError> = (0..spec.total_points())
        .into_par_iter()
        .map(|i| liouville_density(map, &rho0, t, &spec.point(i)))
        .collect();
    let values = ndarray::ArrayD::from_shape_vec(ndarray::IxDyn(&spec.shape()), values?)
        .expect("shape matches length");
    Ok(DensityTable::new(spec, values).expect("same grid"))
}

/// Normal density `N(mean, cov)`.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianDensity {
    mean: DVector<f64>,
    covariance: DMatrix<f64>,
    precision: DMatrix<f64>,
    norm: f64,
}

impl GaussianDensity {
    pub fn new(mean: &[f64], cov: &DMatrix<f64>) -> Result<Self, OracleError> {
        let d = mean.len();
        if d == 0 || cov.shape() != (d, d) {
            return Err(OracleError::InvalidGaussian(format!(
                "mean of length {d} with covariance {:?}",
                cov.shape()
            )));
        }
        let chol = cov
            .clone()
            .cholesky()
            .ok_or_else(|| OracleError::InvalidGaussian("covariance is not positive definite".into()))?;
        let det = chol.l().diagonal().iter().map(|v| v * v).product::<f64>();
        Ok(GaussianDensity {
            mean: DVector::from_column_slice(mean),
            covariance: cov.clone(),
            precision: chol.inverse(),
            norm: 1.0 / ((2.0 * PI).powi(d as i32) * det).sqrt(),
        })
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let d = DVector::from_column_slice(x) - &self.mean;
        self.norm * (-0.5 * d.dot(&(&self.precision * &d))).exp()
    }

    /// `count` seeded draws.
    pub fn sample(&self, count: usize, seed: u64) -> Result<ClassicalEnsemble, OracleError> {
        let l = self.covariance.clone().cholesky().expect("validated").l();
        let d = self.mean.len();
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let samples = (0..count)
            .map(|_| {
                let z = DVector::from_iterator(d, (0..d).map(|_| StandardNormal.sample(&mut rng)));
                (&self.mean + &l * z).iter().copied().collect()
            })
            .collect();
        ClassicalEnsemble::new(samples)
    }
}

/// Equally weighted phase-space points.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassicalEnsemble {
    samples: Vec<Vec<f64>>,
}

impl ClassicalEnsemble {
    pub fn new(samples: Vec<Vec<f64>>) -> Result<Self, OracleError> {
        let Some(first) = samples.first() else {
            return Err(OracleError::EmptyEnsemble);
        };
        let d = first.len();
        if d == 0 {
            return Err(OracleError::EmptyEnsemble);
        }
        for s in &samples {
            if s.len() != d {
                return Err(OracleError::DimensionMismatch { expected: d, got: s.len() });
            }
            if !s.iter().all(|v| v.is_finite()) {
                return Err(OracleError::NonFinite);
            }
        }
        Ok(ClassicalEnsemble { samples })
    }

    pub fn samples(&self) -> &[Vec<f64>] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.samples[0].len()
    }

    /// Sample mean and raw second moments, accumulated in sample order.
    pub fn moments(&self) -> Moments {
        let d = self.dim();
        let count = self.len() as f64;
        let mut mean = vec![0.0; d];
        let mut second = DMatrix::zeros(d, d);
        for s in &self.samples {
            for i in 0..d {
                mean[i] += s[i] / count;
                for j in 0..d {
                    second[(i, j)] += s[i] * s[j] / count;
                }
            }
        }
        Moments { mean, second }
    }
}

/// Transports every sample by the flow; the first failing sample is reported.
pub fn ensemble_evolve(map: &FlowMap, e: &ClassicalEnsemble, t: f64) -> Result<ClassicalEnsemble, OracleError> {
    let samples: Result<Vec<Vec<f64>>, OracleError> = e
        .samples
        .par_iter()
        .enumerate()
        .map(|(index, x)| {
            map.flow(x, t).map_err(|err| match err {
                OracleError::BlowUp { time } => OracleError::SampleBlowUp { index, time },
                other => other,
            })
        })
        .collect();
    Ok(ClassicalEnsemble { samples: samples? })
}

/// Differences between two sets of moments, `a - b`.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentErrors {
    pub first: Vec<f64>,
    /// Frobenius norm of the raw second-moment difference.
    pub second: f64,
}

impl MomentErrors {
    pub fn between(a: &Moments, b: &Moments) -> Self {
        MomentErrors {
            first: a.mean.iter().zip(&b.mean).map(|(x, y)| x - y).collect(),
            second: (&a.second - &b.second).norm(),
        }
    }

    pub fn first_norm(&self) -> f64 {
        self.first.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DensityMetrics {
    /// `½ Σ |a − b| Δx^d`
    pub total_variation: f64,
    pub moments: MomentErrors,
}

pub fn compare_densities(a: &DensityTable, b: &DensityTable) -> Result<DensityMetrics, OracleError> {
    if a.spec() != b.spec() {
        return Err(OracleError::GridMismatch);
    }
    let l1: f64 = a
        .values()
        .iter()
        .zip(b.values().iter())
        .map(|(x, y)| (x - y).abs())
        .sum();
    Ok(DensityMetrics {
        total_variation: 0.5 * l1 * a.spec().cell_volume(),
        moments: MomentErrors::between(&a.moments(), &b.moments()),
    })
}
