//! Oracle cross-checks between the density-matrix engine, the noise-pattern
//! decomposition and Monte Carlo sampling.

use std::f64::consts::TAU;

use qaoa_noise::closedform::haar_cost;
use qaoa_noise::decomposition::{assemble_density_matrix, mlevel_curves, reconstruct_cost, reconstruct_fidelity};
use qaoa_noise::engine::{
    monte_carlo, noisy_state, plus_state, qaoa_state, AngleSchedule, DensityMatrix, NoiseModel,
};
use qaoa_noise::seed::stream;
use qaoa_noise::{Ensemble, IsingInstance};
use rand::Rng;
use serde::Serialize;

use crate::commands::{prepare_dir, write_json};
use crate::{Failure, Fault, Level, VerifyArgs};

#[derive(Debug, Serialize)]
struct Check {
    name: &'static str,
    tolerance: f64,
    max_error: f64,
    cases: usize,
    passed: bool,
}

impl Check {
    fn new(name: &'static str, tolerance: f64) -> Self {
        Self {
            name,
            tolerance,
            max_error: 0.0,
            cases: 0,
            passed: true,
        }
    }

    fn record(&mut self, error: f64) {
        self.cases += 1;
        let error = if error.is_nan() { f64::INFINITY } else { error };
        self.max_error = self.max_error.max(error);
        self.passed = self.max_error <= self.tolerance;
    }
}

#[derive(Debug, Serialize)]
struct Report {
    level: Level,
    seed: u64,
    fault: Option<Fault>,
    passed: bool,
    failed: Vec<&'static str>,
    checks: Vec<Check>,
}

/// The engine path under test; `fault` swaps in a deliberately broken
/// channel so the checks can be shown to fire.
fn evolve(
    instance: &IsingInstance,
    angles: &AngleSchedule,
    noise: &NoiseModel,
    fault: Option<Fault>,
) -> qaoa_noise::Result<DensityMatrix> {
    let Some(Fault::ChannelSign) = fault else {
        return noisy_state(instance, angles, noise);
    };
    let diag = instance.diagonal()?;
    let mut rho = DensityMatrix::from_pure(&plus_state(instance.n_qubits())?);
    for (g, b) in angles.rounds() {
        rho.apply_cost_phase(&diag, g)?;
        rho.apply_mixer(b);
        for q in 0..instance.n_qubits() {
            let mut mapped = rho.clone();
            mapped.apply_channel(noise, q)?;
            // (1-p)ρ - (p/M)ΣKρK† instead of (1-p)ρ + (p/M)ΣKρK†
            rho.scaled_add(2.0 * (1.0 - noise.p()), -1.0, &mapped)?;
        }
    }
    Ok(rho)
}

struct Case {
    instance: IsingInstance,
    angles: AngleSchedule,
}

fn cases(level: Level, seed: u64) -> qaoa_noise::Result<Vec<Case>> {
    let mut shapes = vec![(1, 1), (2, 1), (2, 2), (3, 1), (3, 2), (4, 1), (4, 2)];
    if level == Level::Full {
        shapes.extend([(5, 1), (5, 2), (6, 1), (6, 2), (8, 1), (8, 2)]);
    }
    let ensembles = [Ensemble::Pm1, Ensemble::Uniform, Ensemble::Ring];
    shapes
        .into_iter()
        .enumerate()
        .map(|(i, (n, d))| {
            let mut rng = stream(seed, &[0x7665, i as u64]);
            let instance = IsingInstance::random(n, ensembles[i % 3], rng.random())?;
            let flat: Vec<f64> = (0..2 * d).map(|_| rng.random_range(0.0..TAU)).collect();
            Ok(Case {
                instance,
                angles: AngleSchedule::from_flat(&flat)?,
            })
        })
        .collect()
}

/// Slots times Kraus count small enough to assemble the density matrix
/// from every pattern quickly.
fn assemblable(case: &Case) -> bool {
    case.instance.n_qubits() * case.angles.depth() <= 8 && case.instance.n_qubits() <= 5
}

fn run_checks(level: Level, seed: u64, fault: Option<Fault>) -> qaoa_noise::Result<Vec<Check>> {
    let mut trace = Check::new("trace_preservation", 1e-10);
    let mut hermitian = Check::new("hermiticity", 1e-10);
    let mut positive = Check::new("positivity", 1e-8);
    let mut assembled = Check::new("engine_vs_decomposition", 1e-10);
    let mut reconstructed = Check::new("reconstruction_vs_engine", 1e-10);
    let mut single = Check::new("single_qubit_laws", 1e-12);
    let mut mixed = Check::new("fully_mixed_limit", 1e-10);
    let mut sampled = Check::new("engine_vs_monte_carlo", 5.0);

    let ps = [0.1, 0.5, 0.9];
    for (i, case) in cases(level, seed)?.iter().enumerate() {
        let n = case.instance.n_qubits();
        let diag = case.instance.diagonal()?;
        let ideal = qaoa_state(&case.instance, &case.angles)?;
        let clean_cost = DensityMatrix::from_pure(&ideal).expected_cost(&diag)?;
        for kind in [NoiseModel::depolarizing(0.0)?, NoiseModel::dephasing(0.0)?] {
            for &p in &ps {
                let noise = kind.with_p(p)?;
                let rho = evolve(&case.instance, &case.angles, &noise, fault)?;
                trace.record((rho.trace().re - 1.0).abs().max(rho.trace().im.abs()));
                hermitian.record(rho.hermiticity_error());
                let lowest = rho.eigenvalues().first().copied().unwrap_or(0.0);
                positive.record((-lowest).max(0.0));
                if assemblable(case) {
                    let other = assemble_density_matrix(&case.instance, &case.angles, &noise, u128::MAX)?;
                    assembled.record(rho.trace_distance(&other)?);
                }
                if n == 1 && kind.kind() == qaoa_noise::engine::NoiseKind::Depolarizing {
                    single.record((rho.fidelity(&ideal)? - (1.0 - p / 2.0)).abs());
                    single.record((rho.expected_cost(&diag)? - (1.0 - p) * clean_cost).abs());
                }
            }
            if level == Level::Full && n * case.angles.depth() <= 10 && n >= 5 {
                let curves = mlevel_curves(&case.instance, &case.angles, &kind, u64::MAX, seed)?;
                for &p in &ps {
                    let rho = evolve(&case.instance, &case.angles, &kind.with_p(p)?, fault)?;
                    reconstructed.record((reconstruct_fidelity(&curves.fidelity, p)? - rho.fidelity(&ideal)?).abs());
                    reconstructed.record((reconstruct_cost(&curves.cost, p)? - rho.expected_cost(&diag)?).abs());
                }
            }
        }
        let full = NoiseModel::depolarizing(1.0)?;
        let rho = evolve(&case.instance, &case.angles, &full, fault)?;
        mixed.record((rho.expected_cost(&diag)? - haar_cost(&diag)).abs());
        mixed.record((rho.fidelity(&ideal)? - 0.5f64.powi(n as i32)).abs());

        if i % 2 == 0 || n >= 8 {
            let noise = NoiseModel::depolarizing(0.1)?;
            let rho = evolve(&case.instance, &case.angles, &noise, fault)?;
            let est = monte_carlo(&case.instance, &case.angles, &noise, 4000, seed ^ i as u64)?;
            let z = |mean: f64, exact: f64, se: f64| {
                let gap = (mean - exact).abs();
                if se > 0.0 { gap / se } else if gap < 1e-10 { 0.0 } else { f64::INFINITY }
            };
            sampled.record(z(est.cost_mean, rho.expected_cost(&diag)?, est.cost_stderr));
            sampled.record(z(est.fidelity_mean, rho.fidelity(&ideal)?, est.fidelity_stderr));
        }
    }
    let mut checks = vec![trace, hermitian, positive, assembled, single, mixed, sampled];
    if level == Level::Full {
        checks.push(reconstructed);
    }
    Ok(checks)
}

pub fn run(args: &VerifyArgs) -> Result<(), Failure> {
    let checks = run_checks(args.level, args.seed, args.inject_fault)?;
    let failed: Vec<&'static str> = checks.iter().filter(|c| !c.passed).map(|c| c.name).collect();
    for c in &checks {
        println!(
            "{} {}: max error {:.3e} (tolerance {:.0e}, {} cases)",
            if c.passed { "ok  " } else { "FAIL" },
            c.name,
            c.max_error,
            c.tolerance,
            c.cases
        );
    }
    let report = Report {
        level: args.level,
        seed: args.seed,
        fault: args.inject_fault,
        passed: failed.is_empty(),
        failed: failed.clone(),
        checks,
    };
    match &args.out {
        Some(dir) => {
            prepare_dir(dir)?;
            write_json(&dir.join("verify.json"), &report)?;
            write_json(&dir.join("manifest.json"), &serde_json::json!({
                "tool": "qaoa-noise",
                "version": env!("CARGO_PKG_VERSION"),
                "command": "verify",
                "args": args,
                "outputs": ["verify.json"],
            }))?;
        }
        None => println!("{}", serde_json::to_string_pretty(&report).map_err(qaoa_noise::Error::from)?),
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Verification(failed.iter().map(|s| s.to_string()).collect()))
    }
}
