use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::Path;

use cvkvn::backend::{
    born_density, coverage_sigmas, evolve_gaussian, measure_positions, prepare_gaussian, BackendError, DensityTable,
    GaussianState, Moments, Samples,
};
use cvkvn::oracle::{
    compare_densities, ensemble_evolve, tabulate_liouville, FlowMap, GaussianDensity, Integrator, MomentErrors,
    OracleError,
};
use cvkvn::synth::{admissible_exponents, trotter_circuit, trotter_step, GateKind, GateSequence};
use cvkvn::weyl::{verify_key_decomposition, verify_liouvillian_product_rule};
use cvkvn::PhasePolynomial;

use crate::config::{BackendKind, Experiment, Reference};
use crate::CliError;

/// Probability closer than this fraction of the half extent to the grid edge
/// is reported as boundary mass.
pub const BOUNDARY_FRACTION: f64 = 0.05;
/// Boundary mass above this triggers a warning.
pub const BOUNDARY_WARNING: f64 = 1e-6;

fn backend_error(e: BackendError) -> CliError {
    match e {
        BackendError::NonFinite => CliError::BlowUp(e.to_string()),
        other => CliError::Config(other.to_string()),
    }
}

fn oracle_error(e: OracleError) -> CliError {
    match e {
        OracleError::BlowUp { .. } | OracleError::SampleBlowUp { .. } => CliError::BlowUp(e.to_string()),
        other => CliError::Config(other.to_string()),
    }
}

fn dump_kvn(exp: &Experiment, out: &mut dyn Write) -> Result<(), CliError> {
    for line in exp.kvn.to_string().lines() {
        writeln!(out, "# {line}")?;
    }
    Ok(())
}

fn output_dir(exp: &Experiment) -> Result<Option<&Path>, CliError> {
    match exp.config.outputs.as_deref() {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))?;
            Ok(Some(dir))
        }
        None => Ok(None),
    }
}

fn write_file(dir: &Path, name: &str, write: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> Result<(), CliError> {
    let mut buf = Vec::new();
    write(&mut buf)?;
    let path = dir.join(name);
    fs::write(&path, buf).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}

fn product_rule_battery() -> Vec<(PhasePolynomial, PhasePolynomial, PhasePolynomial)> {
    let hamiltonians = [
        ("1/2*x1^2 + 1/2*x2^2", 2),
        ("1/2*x1^2 + 1/40*x1^4 + 1/2*x2^2", 2),
        ("x1^3 - 2*x1*x2 + 3/7*x2^4", 2),
        ("1/2*x1^2 + 1/2*x2^2 + x1*x2^2 + 1/2*x3^2 + 1/2*x4^2", 4),
    ];
    let factors = ["x1", "x2^2 - 1/3", "x1*x2 + 5", "x1^3 - x2", "2*x1^2*x2 + 1/9*x2^3"];
    let mut out = Vec::new();
    for (h, vars) in hamiltonians {
        let h = PhasePolynomial::parse(h, vars).expect("battery polynomial");
        for (i, f) in factors.iter().enumerate() {
            for g in &factors[i + 1..] {
                let f = PhasePolynomial::parse(f, vars).expect("battery polynomial");
                let g = PhasePolynomial::parse(g, vars).expect("battery polynomial");
                out.push((h.clone(), f, g));
            }
        }
    }
    out
}

pub fn cmd_identities(out: &mut dyn Write) -> Result<(), CliError> {
    let triples = admissible_exponents();
    let mut passed = 0;
    for [a2, a3, a4] in &triples {
        let report = verify_key_decomposition(*a2, *a3, *a4).map_err(|e| CliError::Threshold(e.to_string()))?;
        writeln!(out, "{report}")?;
        passed += report.passed() as usize;
    }
    let battery = product_rule_battery();
    let mut rule_passed = 0;
    for (h, f, g) in &battery {
        rule_passed += verify_liouvillian_product_rule(h, f, g).map_err(|e| CliError::Threshold(e.to_string()))?
            as usize;
    }
    writeln!(out, "decomposition identities: {passed}/{} PASS", triples.len())?;
    writeln!(out, "product rule: {rule_passed}/{} PASS", battery.len())?;
    if passed != triples.len() || rule_passed != battery.len() {
        return Err(CliError::Threshold(format!(
            "{} decomposition and {} product-rule identities failed",
            triples.len() - passed,
            battery.len() - rule_passed
        )));
    }
    Ok(())
}

fn circuits(exp: &Experiment) -> Result<(GateSequence, GateSequence), CliError> {
    let ev = &exp.config.evolution;
    let dt = ev.t / ev.n_steps as f64;
    let to_cfg = |e: cvkvn::synth::SynthError| CliError::Config(format!("evolution: {e}"));
    let step = trotter_step(&exp.kvn, dt, exp.order).map_err(to_cfg)?;
    let circuit = trotter_circuit(&exp.kvn, ev.t, ev.n_steps, exp.order).map_err(to_cfg)?;
    Ok((step, circuit))
}

pub fn cmd_synth(exp: &Experiment, dump: bool, out: &mut dyn Write) -> Result<(), CliError> {
    let (step, circuit) = circuits(exp)?;
    if dump {
        dump_kvn(exp, out)?;
    }
    writeln!(out, "# one product-formula step: {} gates", step.len())?;
    writeln!(
        out,
        "# full circuit: {} steps, {} gates",
        exp.config.evolution.n_steps,
        circuit.len()
    )?;
    write!(out, "{circuit}")?;
    if let Some(dir) = output_dir(exp)? {
        write_file(dir, "kvn.txt", |w| write!(w, "{}", exp.kvn))?;
        write_file(dir, "step.gates", |w| write!(w, "{step}"))?;
        write_file(dir, "circuit.gates", |w| write!(w, "{circuit}"))?;
    }
    Ok(())
}

/// Everything `evolve` produces.
#[derive(Clone, Debug)]
pub struct EvolveOutput {
    pub density: DensityTable,
    pub moments: Moments,
    pub samples: Samples,
    pub boundary_mass: f64,
    pub gates: usize,
}

fn evolve_grid(exp: &Experiment) -> Result<EvolveOutput, CliError> {
    let spec = exp.config.grid_spec()?;
    let sigmas = coverage_sigmas(&spec, &exp.mean, &exp.covariance);
    if sigmas < 5.0 {
        eprintln!("warning: grid covers the initial density only to {sigmas:.2} standard deviations");
    }
    let (_, circuit) = circuits(exp)?;
    if circuit.count_kind(GateKind::Fourier) > 0 && !spec.is_self_dual() {
        return Err(CliError::Config(
            "grid.half_extent: the circuit contains Fourier gates, which need \"self_dual\"".into(),
        ));
    }
    let mut state = prepare_gaussian(spec, &exp.mean, &exp.covariance).map_err(backend_error)?;
    state.apply_sequence(&circuit).map_err(backend_error)?;
    if !state.is_finite() {
        return Err(CliError::BlowUp("grid state became non-finite".into()));
    }
    let density = born_density(&state);
    let boundary_mass = density.boundary_mass(BOUNDARY_FRACTION);
    let samples = measure_positions(&state, exp.config.sampling.num_samples, exp.config.sampling.seed)
        .map_err(backend_error)?;
    Ok(EvolveOutput {
        moments: density.moments(),
        density,
        samples,
        boundary_mass,
        gates: circuit.len(),
    })
}

fn evolve_gaussian_backend(exp: &Experiment) -> Result<EvolveOutput, CliError> {
    let initial = GaussianState::from_position_density(&exp.mean, &exp.covariance).map_err(backend_error)?;
    let state = evolve_gaussian(&initial, &exp.kvn, exp.config.evolution.t).map_err(backend_error)?;
    let moments = state.position_moments();
    let gaussian = GaussianDensity::new(&moments.mean, &state.position_covariance()).map_err(oracle_error)?;
    let spec = exp.config.grid_spec()?;
    let density = DensityTable::from_fn(spec, |x| gaussian.eval(x));
    let rows = gaussian
        .sample(exp.config.sampling.num_samples, exp.config.sampling.seed)
        .map_err(oracle_error)?;
    let samples = Samples::from_rows(rows.samples()).map_err(backend_error)?;
    Ok(EvolveOutput {
        boundary_mass: density.boundary_mass(BOUNDARY_FRACTION),
        density,
        moments,
        samples,
        gates: 0,
    })
}

pub fn cmd_evolve(exp: &Experiment, dump: bool, out: &mut dyn Write) -> Result<EvolveOutput, CliError> {
    if dump {
        dump_kvn(exp, out)?;
    }
    let result = match exp.config.backend {
        BackendKind::Grid => evolve_grid(exp)?,
        BackendKind::Gaussian => evolve_gaussian_backend(exp)?,
    };
    if result.boundary_mass > BOUNDARY_WARNING {
        eprintln!(
            "warning: probability {:.3e} lies near the grid boundary; enlarge half_extent",
            result.boundary_mass
        );
    }
    let summary = summary(exp, &result);
    write!(out, "{summary}")?;
    if let Some(dir) = output_dir(exp)? {
        write_file(dir, "density.csv", |w| result.density.write_csv(w))?;
        write_file(dir, "moments.csv", |w| result.moments.write_csv(w))?;
        write_file(dir, "samples.csv", |w| result.samples.write_csv(w))?;
        write_file(dir, "summary.txt", |w| w.write_all(summary.as_bytes()))?;
    }
    Ok(result)
}

fn summary(exp: &Experiment, r: &EvolveOutput) -> String {
    let mut s = String::new();
    let backend = match exp.config.backend {
        BackendKind::Grid => "grid",
        BackendKind::Gaussian => "gaussian",
    };
    let _ = writeln!(s, "backend = {backend}");
    let _ = writeln!(s, "t = {}", exp.config.evolution.t);
    let _ = writeln!(s, "gates = {}", r.gates);
    for (i, m) in r.moments.mean.iter().enumerate() {
        let _ = writeln!(s, "mean.x{} = {m}", i + 1);
    }
    let _ = writeln!(s, "total_mass = {}", r.density.total_mass());
    let _ = writeln!(s, "boundary_mass = {}", r.boundary_mass);
    s
}

fn relative_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn cmd_verify(exp: &Experiment, dump: bool, out: &mut dyn Write) -> Result<(), CliError> {
    let result = cmd_evolve(exp, dump, out)?;
    let v = &exp.config.verify;
    let t = exp.config.evolution.t;
    let mut report = String::new();
    let mut breaches = Vec::new();
    let mut check = |name: &str, value: f64, limit: f64, report: &mut String| {
        let ok = value <= limit;
        let _ = writeln!(report, "{name} = {value:e} (limit {limit:e}) {}", if ok { "PASS" } else { "FAIL" });
        if !ok {
            breaches.push(format!("{name} = {value:e} > {limit:e}"));
        }
    };
    match v.reference {
        Reference::Liouville => {
            let map = FlowMap::new(exp.classical.clone(), Integrator::Leapfrog, v.dt).map_err(oracle_error)?;
            let rho0 = GaussianDensity::new(&exp.mean, &exp.covariance).map_err(oracle_error)?;
            let reference = tabulate_liouville(&map, |x| rho0.eval(x), t, *result.density.spec())
                .map_err(oracle_error)?;
            let m = compare_densities(&result.density, &reference).map_err(oracle_error)?;
            let _ = writeln!(report, "reference = liouville");
            check("total_variation", m.total_variation, v.max_total_variation, &mut report);
            check(
                "first_moment_error",
                m.moments.first_norm(),
                v.max_first_moment_error,
                &mut report,
            );
            let _ = writeln!(report, "second_moment_error = {:e}", m.moments.second);
        }
        Reference::Ensemble => {
            let map = FlowMap::new(exp.classical.clone(), Integrator::Leapfrog, v.dt).map_err(oracle_error)?;
            let rho0 = GaussianDensity::new(&exp.mean, &exp.covariance).map_err(oracle_error)?;
            let ensemble = rho0.sample(v.ensemble_size, v.ensemble_seed).map_err(oracle_error)?;
            let reference = ensemble_evolve(&map, &ensemble, t).map_err(oracle_error)?.moments();
            let errs = MomentErrors::between(&result.moments, &reference);
            let _ = writeln!(report, "reference = ensemble ({} samples)", v.ensemble_size);
            check(
                "relative_first_moment_error",
                errs.first_norm() / relative_norm(&reference.mean),
                v.max_relative_moment_error,
                &mut report,
            );
            check(
                "relative_second_moment_error",
                errs.second / reference.second.norm(),
                v.max_relative_moment_error,
                &mut report,
            );
        }
        Reference::SelfCheck => {
            let m = compare_densities(&result.density, &result.density).map_err(oracle_error)?;
            let _ = writeln!(report, "reference = self");
            check("total_variation", m.total_variation, v.max_total_variation, &mut report);
        }
    }
    write!(out, "{report}")?;
    if let Some(dir) = output_dir(exp)? {
        write_file(dir, "report.txt", |w| w.write_all(report.as_bytes()))?;
    }
    if breaches.is_empty() {
        Ok(())
    } else {
        Err(CliError::Threshold(breaches.join("; ")))
    }
}
