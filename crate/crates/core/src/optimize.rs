//! Multi-restart quasi-Newton search for QAOA angles.
//!
//! All `2d` angles are optimised jointly. Each restart draws its starting
//! point uniformly from `[0, 2π)^{2d}` using a stream derived from the master
//! seed and the restart index, then runs BFGS with central finite-difference
//! gradients. Minimisation throughout.

use std::cell::Cell;
use std::f64::consts::TAU;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::{noisy_state_from_diag, qaoa_state_from_diag, AngleSchedule, Limits, NoiseModel};
use crate::error::{Error, Result};
use crate::ising::IsingInstance;

const RESTART_STREAM: u64 = 0x6f70;

/// Expected cost as a function of the angles, using the pure-state engine
/// without noise and the density-matrix engine with it.
#[derive(Debug, Clone)]
pub struct Objective {
    n_qubits: usize,
    diag: Vec<f64>,
    noise: Option<NoiseModel>,
    depth: usize,
}

impl Objective {
    pub fn new(instance: &IsingInstance, noise: Option<&NoiseModel>, depth: usize) -> Result<Self> {
        if depth == 0 {
            return Err(Error::validation("depth must be at least 1"));
        }
        let limits = Limits::default();
        if noise.is_some() {
            limits.check_density(instance.n_qubits())?;
        } else {
            limits.check_pure(instance.n_qubits())?;
        }
        Ok(Self {
            n_qubits: instance.n_qubits(),
            diag: instance.diagonal()?,
            noise: noise.cloned(),
            depth,
        })
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.diag
    }

    pub fn evaluate(&self, angles: &AngleSchedule) -> Result<f64> {
        if angles.depth() != self.depth {
            return Err(Error::validation(format!(
                "objective expects depth {}, got {}",
                self.depth,
                angles.depth()
            )));
        }
        match &self.noise {
            None => {
                let state = qaoa_state_from_diag(self.n_qubits, &self.diag, angles)?;
                state.expected_cost(&self.diag)
            }
            Some(noise) => {
                let rho = noisy_state_from_diag(self.n_qubits, &self.diag, angles, noise)?;
                rho.expected_cost(&self.diag)
            }
        }
    }

    /// Evaluates a flat `[γ_1..γ_d, β_1..β_d]` vector.
    pub fn evaluate_flat(&self, flat: &[f64]) -> Result<f64> {
        self.evaluate(&AngleSchedule::from_flat(flat)?)
    }

    /// Whether shifting any `γ_k` by `2π` leaves the circuit unchanged, i.e.
    /// all energy gaps are integers.
    pub fn gamma_has_period_two_pi(&self) -> bool {
        let e0 = self.diag[0];
        self.diag
            .iter()
            .all(|e| ((e - e0) - (e - e0).round()).abs() < 1e-12)
    }
}

/// Builds the objective for the given noise setting and depth.
pub fn objective(
    instance: &IsingInstance,
    noise: Option<&NoiseModel>,
    depth: usize,
) -> Result<impl Fn(&AngleSchedule) -> Result<f64>> {
    let obj = Objective::new(instance, noise, depth)?;
    Ok(move |angles: &AngleSchedule| obj.evaluate(angles))
}

/// Central-difference gradient with the given step.
pub fn finite_difference_gradient(
    f: impl Fn(&[f64]) -> f64,
    x: &[f64],
    step: f64,
) -> Result<Vec<f64>> {
    if step.is_nan() || step <= 0.0 {
        return Err(Error::validation("finite-difference step must be positive"));
    }
    let mut probe = x.to_vec();
    Ok((0..x.len())
        .map(|i| {
            probe[i] = x[i] + step;
            let up = f(&probe);
            probe[i] = x[i] - step;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * step)
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizeOptions {
    pub restarts: usize,
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
    pub fd_step: f64,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        Self {
            restarts: 20,
            max_iterations: 500,
            gradient_tolerance: 1e-8,
            fd_step: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestartOutcome {
    pub initial: AngleSchedule,
    pub angles: AngleSchedule,
    pub cost: f64,
    pub iterations: usize,
    pub evaluations: usize,
    /// Gradient norm fell below tolerance.
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationReport {
    pub best_angles: AngleSchedule,
    pub best_cost: f64,
    pub best_restart: usize,
    pub restart_costs: Vec<f64>,
    pub evaluations: usize,
    pub restarts: Vec<RestartOutcome>,
}

struct BfgsResult {
    x: Vec<f64>,
    f: f64,
    iterations: usize,
    converged: bool,
}

fn bfgs(f: &dyn Fn(&[f64]) -> f64, x0: &[f64], opts: &OptimizeOptions) -> Result<BfgsResult> {
    let n = x0.len();
    let grad = |x: &[f64]| -> Result<DVector<f64>> {
        Ok(DVector::from_vec(finite_difference_gradient(f, x, opts.fd_step)?))
    };
    let mut x = DVector::from_column_slice(x0);
    let mut fx = f(x.as_slice());
    let mut g = grad(x.as_slice())?;
    let mut h = DMatrix::<f64>::identity(n, n);
    let mut fresh = true;
    for iteration in 0..opts.max_iterations {
        if g.norm() < opts.gradient_tolerance {
            return Ok(BfgsResult { x: x.as_slice().to_vec(), f: fx, iterations: iteration, converged: true });
        }
        let mut dir = -(&h * &g);
        let mut slope = g.dot(&dir);
        if slope >= 0.0 {
            h = DMatrix::identity(n, n);
            fresh = true;
            dir = -g.clone();
            slope = g.dot(&dir);
        }
        // Armijo backtracking
        let mut t = 1.0;
        let mut accepted = None;
        while t > 1e-14 {
            let trial = &x + &dir * t;
            let ft = f(trial.as_slice());
            if ft.is_finite() && ft <= fx + 1e-4 * t * slope {
                accepted = Some((trial, ft));
                break;
            }
            t *= 0.5;
        }
        let Some((xn, fxn)) = accepted else {
            if fresh {
                return Ok(BfgsResult { x: x.as_slice().to_vec(), f: fx, iterations: iteration, converged: false });
            }
            h = DMatrix::identity(n, n);
            fresh = true;
            continue;
        };
        let gn = grad(xn.as_slice())?;
        let s = &xn - &x;
        let y = &gn - &g;
        let sy = s.dot(&y);
        if sy > 1e-14 {
            let rho = 1.0 / sy;
            let eye = DMatrix::<f64>::identity(n, n);
            let left = &eye - (&s * y.transpose()) * rho;
            let right = &eye - (&y * s.transpose()) * rho;
            h = &left * &h * &right + (&s * s.transpose()) * rho;
            fresh = false;
        }
        x = xn;
        fx = fxn;
        g = gn;
    }
    let converged = g.norm() < opts.gradient_tolerance;
    Ok(BfgsResult { x: x.as_slice().to_vec(), f: fx, iterations: opts.max_iterations, converged })
}

/// Multi-restart angle optimisation with default settings and the given
/// restart count.
pub fn optimize_angles(
    instance: &IsingInstance,
    depth: usize,
    noise: Option<&NoiseModel>,
    restarts: usize,
    seed: u64,
) -> Result<OptimizationReport> {
    let opts = OptimizeOptions {
        restarts,
        ..OptimizeOptions::default()
    };
    optimize_angles_with(instance, depth, noise, seed, &opts)
}

/// Reported angles are reduced into `[0, 2π)`. The γ angles are only reduced
/// when the spectrum makes `2π` a period of the objective; the reported cost
/// is always evaluated at the reported angles.
pub fn optimize_angles_with(
    instance: &IsingInstance,
    depth: usize,
    noise: Option<&NoiseModel>,
    seed: u64,
    opts: &OptimizeOptions,
) -> Result<OptimizationReport> {
    if opts.restarts == 0 {
        return Err(Error::validation("at least one restart is required"));
    }
    let obj = Objective::new(instance, noise, depth)?;
    let wrap_gamma = obj.gamma_has_period_two_pi();

    let restarts: Vec<RestartOutcome> = (0..opts.restarts)
        .into_par_iter()
        .map(|r| -> Result<RestartOutcome> {
            let mut rng = crate::seed::stream(seed, &[RESTART_STREAM, r as u64]);
            let x0: Vec<f64> = (0..2 * depth).map(|_| rng.random_range(0.0..TAU)).collect();
            let evaluations = Cell::new(0usize);
            let f = |x: &[f64]| {
                evaluations.set(evaluations.get() + 1);
                obj.evaluate_flat(x).unwrap_or(f64::NAN)
            };
            let result = bfgs(&f, &x0, opts)?;
            let found = AngleSchedule::from_flat(&result.x)?;
            let wrapped = found.wrapped();
            let angles = if wrap_gamma {
                wrapped
            } else {
                AngleSchedule::new(found.gammas().to_vec(), wrapped.betas().to_vec())?
            };
            let cost = obj.evaluate(&angles)?;
            debug_assert!((cost - result.f).abs() < 1e-8);
            Ok(RestartOutcome {
                initial: AngleSchedule::from_flat(&x0)?,
                angles,
                cost,
                iterations: result.iterations,
                evaluations: evaluations.get() + 1,
                converged: result.converged,
            })
        })
        .collect::<Result<_>>()?;

    let (best_restart, best) = restarts
        .iter()
        .enumerate()
        .fold(None::<(usize, &RestartOutcome)>, |acc, (i, r)| match acc {
            Some((_, b)) if b.cost <= r.cost => acc,
            _ => Some((i, r)),
        })
        .expect("at least one restart");
    Ok(OptimizationReport {
        best_angles: best.angles.clone(),
        best_cost: best.cost,
        best_restart,
        restart_costs: restarts.iter().map(|r| r.cost).collect(),
        evaluations: restarts.iter().map(|r| r.evaluations).sum(),
        restarts,
    })
}
