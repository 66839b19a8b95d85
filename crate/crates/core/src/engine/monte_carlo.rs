use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::noise::NoiseModel;
use super::state::{qaoa_state_from_diag, AngleSchedule};
use crate::error::{Error, Result};
use crate::ising::IsingInstance;

const TRIAL_STREAM: u64 = 0x6d63;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloEstimate {
    pub cost_mean: f64,
    pub fidelity_mean: f64,
    /// Standard error of the mean; NaN for a single trial.
    pub cost_stderr: f64,
    pub fidelity_stderr: f64,
    pub trials: usize,
}

/// Trajectory estimate of the noisy cost and fidelity.
///
/// After every round, each qubit independently receives nothing with
/// probability `1-p` or `K_j` with probability `p/M`. Trial `t` draws from its
/// own stream derived from `(seed, t)`, so the result is independent of thread
/// count.
pub fn monte_carlo(
    instance: &IsingInstance,
    angles: &AngleSchedule,
    noise: &NoiseModel,
    trials: usize,
    seed: u64,
) -> Result<MonteCarloEstimate> {
    if trials == 0 {
        return Err(Error::validation("monte carlo needs at least one trial"));
    }
    noise.require_unitary()?;
    let n = instance.n_qubits();
    let diag = instance.diagonal()?;
    let ideal = qaoa_state_from_diag(n, &diag, angles)?;
    let initial = super::state::plus_state(n)?;
    let p = noise.p();
    let kraus = noise.kraus();

    let samples: Vec<(f64, f64)> = (0..trials)
        .into_par_iter()
        .map(|t| -> Result<(f64, f64)> {
            let mut rng = crate::seed::stream(seed, &[TRIAL_STREAM, t as u64]);
            let mut state = initial.clone();
            for (g, b) in angles.rounds() {
                state.apply_round(&diag, g, b)?;
                for q in 0..n {
                    if rng.random::<f64>() < p {
                        let j = rng.random_range(0..kraus.len());
                        state.apply_single_qubit_unchecked(&kraus[j], q);
                    }
                }
            }
            Ok((state.expected_cost(&diag)?, ideal.overlap(&state)?))
        })
        .collect::<Result<_>>()?;

    let (cost_mean, cost_stderr) = mean_and_stderr(samples.iter().map(|s| s.0), trials);
    let (fidelity_mean, fidelity_stderr) = mean_and_stderr(samples.iter().map(|s| s.1), trials);
    Ok(MonteCarloEstimate {
        cost_mean,
        fidelity_mean,
        cost_stderr,
        fidelity_stderr,
        trials,
    })
}

pub(crate) fn mean_and_stderr(values: impl Iterator<Item = f64> + Clone, n: usize) -> (f64, f64) {
    let mean = values.clone().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, f64::NAN);
    }
    let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::density::noisy_state;
    use crate::engine::noise::Mat2;
    use crate::engine::state::qaoa_state;
    use crate::ising::Ensemble;
    use num_complex::Complex64;

    #[test]
    fn noiseless_trials_have_zero_variance() {
        let inst = IsingInstance::random(4, Ensemble::Pm1, 3).unwrap();
        let angles = AngleSchedule::new(vec![0.4, 0.7], vec![0.9, 0.2]).unwrap();
        let est = monte_carlo(&inst, &angles, &NoiseModel::depolarizing(0.0).unwrap(), 50, 1).unwrap();
        let ideal = qaoa_state(&inst, &angles).unwrap();
        let c = ideal.expected_cost(&inst.diagonal().unwrap()).unwrap();
        assert!((est.cost_mean - c).abs() < 1e-12);
        assert!((est.fidelity_mean - 1.0).abs() < 1e-12);
        assert!(est.cost_stderr < 1e-12);
        assert!(est.fidelity_stderr < 1e-12);
    }

    #[test]
    fn agrees_with_density_matrix_engine() {
        let inst = IsingInstance::random(4, Ensemble::Pm1, 8).unwrap();
        let angles = AngleSchedule::new(vec![0.4, 0.7], vec![0.9, 0.2]).unwrap();
        for noise in [NoiseModel::depolarizing(0.15).unwrap(), NoiseModel::dephasing(0.3).unwrap()] {
            let est = monte_carlo(&inst, &angles, &noise, 10_000, 5).unwrap();
            let rho = noisy_state(&inst, &angles, &noise).unwrap();
            let exact_cost = rho.expected_cost(&inst.diagonal().unwrap()).unwrap();
            let exact_fid = rho.fidelity(&qaoa_state(&inst, &angles).unwrap()).unwrap();
            assert!((est.cost_mean - exact_cost).abs() < 4.0 * est.cost_stderr);
            assert!((est.fidelity_mean - exact_fid).abs() < 4.0 * est.fidelity_stderr);
        }
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let inst = IsingInstance::random(3, Ensemble::Uniform, 2).unwrap();
        let angles = AngleSchedule::new(vec![0.4], vec![0.9]).unwrap();
        let noise = NoiseModel::depolarizing(0.3).unwrap();
        let a = monte_carlo(&inst, &angles, &noise, 777, 42).unwrap();
        let b = monte_carlo(&inst, &angles, &noise, 777, 42).unwrap();
        assert_eq!(a, b);
        let c = monte_carlo(&inst, &angles, &noise, 777, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn rejects_non_unitary_and_zero_trials() {
        let s = 2f64.sqrt();
        let z = Complex64::new(0.0, 0.0);
        let k0: Mat2 = [[Complex64::new(s, 0.0), z], [z, Complex64::new(1.0, 0.0)]];
        let k1: Mat2 = [[z, Complex64::new(1.0, 0.0)], [z, z]];
        let noise = NoiseModel::custom(0.1, vec![k0, k1]).unwrap();
        let inst = IsingInstance::random(2, Ensemble::Pm1, 0).unwrap();
        let angles = AngleSchedule::zeros(1).unwrap();
        assert!(matches!(
            monte_carlo(&inst, &angles, &noise, 10, 0),
            Err(Error::UnsupportedModel(_))
        ));
        let dep = NoiseModel::depolarizing(0.1).unwrap();
        assert!(monte_carlo(&inst, &angles, &dep, 0, 0).is_err());
    }
}
