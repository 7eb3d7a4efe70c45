//! Versioned JSON experiment configuration.

use std::path::{Path, PathBuf};

use cvkvn::backend::{self_dual_half_extent, GridSpec, DEFAULT_HALF_EXTENT, DEFAULT_POINTS_PER_MODE};
use cvkvn::kvn::{build_kvn, validate_separation, ClassicalHamiltonian, KvnError, KvnHamiltonian};
use cvkvn::synth::TrotterOrder;
use cvkvn::PhasePolynomial;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub hamiltonian: HamiltonianConfig,
    pub initial_density: InitialDensity,
    #[serde(default)]
    pub grid: GridConfig,
    pub evolution: Evolution,
    #[serde(default)]
    pub backend: BackendKind,
    #[serde(default)]
    pub sampling: Sampling,
    #[serde(default)]
    pub verify: VerifyConfig,
    /// Output directory.
    #[serde(default)]
    pub outputs: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HamiltonianConfig {
    /// Degrees of freedom; variables `x1..xn` are positions, `x(n+1)..x(2n)` momenta.
    pub n: usize,
    pub polynomial: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialDensity {
    pub mean: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum HalfExtent {
    Value(f64),
    Named(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub points_per_mode: usize,
    /// A positive number, or `"self_dual"` for `sqrt(π N / 2)`.
    pub half_extent: HalfExtent,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            points_per_mode: DEFAULT_POINTS_PER_MODE,
            half_extent: HalfExtent::Value(DEFAULT_HALF_EXTENT),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Evolution {
    pub t: f64,
    pub n_steps: usize,
    #[serde(default = "default_order")]
    pub order: u32,
}

fn default_order() -> u32 {
    2
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    #[default]
    Grid,
    Gaussian,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sampling {
    pub num_samples: usize,
    pub seed: u64,
}

impl Default for Sampling {
    fn default() -> Self {
        Sampling {
            num_samples: 1000,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reference {
    /// Characteristics solution tabulated on the same grid.
    #[default]
    Liouville,
    /// Moments of an evolved Monte Carlo ensemble.
    Ensemble,
    /// The evolved density against itself.
    #[serde(rename = "self")]
    SelfCheck,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyConfig {
    pub reference: Reference,
    pub max_total_variation: f64,
    /// Bound on the norm of the first-moment error vector.
    pub max_first_moment_error: f64,
    /// Bound on the relative first- and second-moment errors against an ensemble.
    pub max_relative_moment_error: f64,
    pub ensemble_size: usize,
    pub ensemble_seed: u64,
    /// Integrator step of the classical reference.
    pub dt: f64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            reference: Reference::Liouville,
            max_total_variation: 0.05,
            max_first_moment_error: 1e-2,
            max_relative_moment_error: 0.05,
            ensemble_size: 100_000,
            ensemble_seed: 1,
            dt: 1e-3,
        }
    }
}

/// A configuration that passed every check, with its derived objects.
#[derive(Clone, Debug)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub classical: ClassicalHamiltonian,
    pub kvn: KvnHamiltonian,
    pub mean: Vec<f64>,
    pub covariance: DMatrix<f64>,
    pub order: TrotterOrder,
}

fn invalid(field: &str, message: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{field}: {message}"))
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("invalid config JSON: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn half_extent(&self) -> Result<f64, CliError> {
        match &self.grid.half_extent {
            HalfExtent::Value(v) if v.is_finite() && *v > 0.0 => Ok(*v),
            HalfExtent::Named(s) if s == "self_dual" => Ok(self_dual_half_extent(self.grid.points_per_mode)),
            other => Err(invalid(
                "grid.half_extent",
                format!("expected a positive number or \"self_dual\", got {other:?}"),
            )),
        }
    }

    pub fn grid_spec(&self) -> Result<GridSpec, CliError> {
        GridSpec::new(2 * self.hamiltonian.n, self.grid.points_per_mode, self.half_extent()?)
            .map_err(|e| invalid("grid", e))
    }

    /// Checks every field and builds the Hamiltonian objects.
    pub fn validate(self) -> Result<Experiment, CliError> {
        if self.version != SCHEMA_VERSION {
            return Err(invalid(
                "version",
                format!("unsupported schema version {}, expected {SCHEMA_VERSION}", self.version),
            ));
        }
        let n = self.hamiltonian.n;
        if n == 0 {
            return Err(invalid("hamiltonian.n", "must be at least 1"));
        }
        let poly = PhasePolynomial::parse(&self.hamiltonian.polynomial, 2 * n)
            .map_err(|e| invalid("hamiltonian.polynomial", e))?;
        let classical = validate_separation(&poly, n).map_err(|e| {
            let why = match &e {
                KvnError::CrossTerm { monomial } => format!(
                    "term `{monomial}` couples positions and momenta; the Hamiltonian must separate as \
                     H = V(x1..x{n}) + T(x{}..x{})",
                    n + 1,
                    2 * n
                ),
                KvnError::DegreeTooHigh { part, degree } => format!(
                    "{part} has degree {degree}; the gate set covers KvN generators up to quartic, \
                     so V and T may have degree at most 4"
                ),
                other => other.to_string(),
            };
            invalid("hamiltonian.polynomial", why)
        })?;
        let kvn = build_kvn(&classical).map_err(|e| invalid("hamiltonian.polynomial", e))?;

        let dim = 2 * n;
        let mean = self.initial_density.mean.clone();
        if mean.len() != dim || !mean.iter().all(|v| v.is_finite()) {
            return Err(invalid(
                "initial_density.mean",
                format!("expected {dim} finite values (positions then momenta), got {:?}", mean),
            ));
        }
        let rows = &self.initial_density.covariance;
        if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
            return Err(invalid("initial_density.covariance", format!("expected a {dim}x{dim} matrix")));
        }
        let covariance = DMatrix::from_fn(dim, dim, |i, j| rows[i][j]);
        if !covariance.iter().all(|v| v.is_finite()) || covariance != covariance.transpose() {
            return Err(invalid("initial_density.covariance", "must be finite and symmetric"));
        }
        if covariance.clone().cholesky().is_none() {
            return Err(invalid("initial_density.covariance", "must be positive definite"));
        }

        let ev = &self.evolution;
        if !ev.t.is_finite() {
            return Err(invalid("evolution.t", "must be finite"));
        }
        if ev.n_steps == 0 {
            return Err(invalid("evolution.n_steps", "must be at least 1"));
        }
        let order = TrotterOrder::try_from(ev.order).map_err(|e| invalid("evolution.order", e))?;

        match self.backend {
            BackendKind::Grid => {
                self.grid_spec()?;
            }
            BackendKind::Gaussian => {
                if let Some(t) = kvn.terms().iter().find(|t| t.degree() > 2) {
                    return Err(invalid(
                        "backend",
                        format!(
                            "the gaussian backend needs quadratic KvN generators (V and T of degree at most 2); \
                             term `{t}` has degree {}",
                            t.degree()
                        ),
                    ));
                }
                self.half_extent()?;
            }
        }
        if self.sampling.num_samples == 0 {
            return Err(invalid("sampling.num_samples", "must be at least 1"));
        }
        let v = &self.verify;
        for (field, value) in [
            ("verify.max_total_variation", v.max_total_variation),
            ("verify.max_first_moment_error", v.max_first_moment_error),
            ("verify.max_relative_moment_error", v.max_relative_moment_error),
        ] {
            if !(value.is_finite() && value >= 0.0) {
                return Err(invalid(field, "must be a finite non-negative number"));
            }
        }
        if !(v.dt.is_finite() && v.dt > 0.0) {
            return Err(invalid("verify.dt", "must be positive"));
        }
        if v.reference == Reference::Ensemble && v.ensemble_size == 0 {
            return Err(invalid("verify.ensemble_size", "must be at least 1"));
        }
        Ok(Experiment {
            config: self,
            classical,
            kvn,
            mean,
            covariance,
            order,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const HARMONIC: &str = include_str!("../../../configs/harmonic.json");
    const QUARTIC: &str = include_str!("../../../configs/quartic.json");

    fn with(base: &str, edit: impl FnOnce(&mut serde_json::Value)) -> Result<Experiment, CliError> {
        let mut v: serde_json::Value = serde_json::from_str(base).unwrap();
        edit(&mut v);
        ExperimentConfig::from_json(&v.to_string())?.validate()
    }

    fn message(r: Result<Experiment, CliError>) -> String {
        match r {
            Err(CliError::Config(m)) => m,
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn bundled_configs_validate() {
        let h = ExperimentConfig::from_json(HARMONIC).unwrap().validate().unwrap();
        assert!(h.kvn.is_quadratic());
        let q = ExperimentConfig::from_json(QUARTIC).unwrap().validate().unwrap();
        assert!(!q.kvn.is_quadratic());
        assert!(q.config.grid_spec().unwrap().is_self_dual());
    }

    #[test]
    fn round_trips_through_json() {
        let c = ExperimentConfig::from_json(QUARTIC).unwrap();
        let back = ExperimentConfig::from_json(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn rejections_name_the_field() {
        let m = message(with(HARMONIC, |v| v["hamiltonian"]["polynomial"] = "x1*x2 + x1^2".into()));
        assert!(m.starts_with("hamiltonian.polynomial") && m.contains("separate"), "{m}");
        let m = message(with(HARMONIC, |v| v["hamiltonian"]["polynomial"] = "x1^6 + x2^2".into()));
        assert!(m.contains("degree 6") && m.contains("quartic"), "{m}");
        let m = message(with(HARMONIC, |v| v["hamiltonian"]["polynomial"] = "x1^^2".into()));
        assert!(m.starts_with("hamiltonian.polynomial"), "{m}");
        let m = message(with(HARMONIC, |v| v["version"] = 7.into()));
        assert!(m.starts_with("version"));
        let m = message(with(HARMONIC, |v| v["initial_density"]["mean"] = serde_json::json!([1.0])));
        assert!(m.starts_with("initial_density.mean"));
        let m = message(with(HARMONIC, |v| {
            v["initial_density"]["covariance"] = serde_json::json!([[1.0, 2.0], [2.0, 1.0]])
        }));
        assert!(m.contains("positive definite"));
        let m = message(with(HARMONIC, |v| v["evolution"]["order"] = 4.into()));
        assert!(m.starts_with("evolution.order"));
        let m = message(with(HARMONIC, |v| v["evolution"]["n_steps"] = 0.into()));
        assert!(m.starts_with("evolution.n_steps"));
        let m = message(with(HARMONIC, |v| v["grid"]["points_per_mode"] = 100.into()));
        assert!(m.starts_with("grid"));
        let m = message(with(HARMONIC, |v| v["grid"]["half_extent"] = "wide".into()));
        assert!(m.starts_with("grid.half_extent"));
        let m = message(with(QUARTIC, |v| v["backend"] = "gaussian".into()));
        assert!(m.starts_with("backend") && m.contains("quadratic"), "{m}");
        let m = message(with(HARMONIC, |v| v["sampling"]["num_samples"] = 0.into()));
        assert!(m.starts_with("sampling.num_samples"));
        let m = message(with(HARMONIC, |v| v["unexpected"] = 1.into()));
        assert!(m.contains("unknown field"), "{m}");
    }

    #[test]
    fn defaults_fill_optional_sections() {
        let c = ExperimentConfig::from_json(
            r#"{"version": 1,
                "hamiltonian": {"n": 1, "polynomial": "x1^2 + x2^2"},
                "initial_density": {"mean": [0, 0], "covariance": [[0.5, 0], [0, 0.5]]},
                "evolution": {"t": 1.0, "n_steps": 10}}"#,
        )
        .unwrap();
        assert_eq!(c.grid, GridConfig::default());
        assert_eq!(c.backend, BackendKind::Grid);
        assert_eq!(c.evolution.order, 2);
        assert_eq!(c.verify, VerifyConfig::default());
        assert!(c.validate().is_ok());
    }
}
