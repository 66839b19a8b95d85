use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::noise::Mat2;
use super::Limits;
use crate::error::{Error, Result};
use crate::ising::IsingInstance;

/// A normalised state vector over `n_qubits` qubits.
#[derive(Debug, Clone, PartialEq)]
pub struct PureState {
    n_qubits: usize,
    amplitudes: Vec<Complex64>,
}

impl PureState {
    /// Checks the length and that the squared norm is 1 within 1e-9.
    pub fn new(n_qubits: usize, amplitudes: Vec<Complex64>) -> Result<Self> {
        if n_qubits == 0 {
            return Err(Error::validation("state needs at least one qubit"));
        }
        let dim = 1usize << n_qubits;
        if amplitudes.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: amplitudes.len(),
            });
        }
        let norm: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum();
        if (norm - 1.0).abs() > 1e-9 {
            return Err(Error::validation(format!(
                "state squared norm {norm} differs from 1"
            )));
        }
        Ok(Self {
            n_qubits,
            amplitudes,
        })
    }

    pub fn basis(n_qubits: usize, index: usize) -> Result<Self> {
        let dim = 1usize << n_qubits;
        if index >= dim {
            return Err(Error::validation(format!("basis index {index} out of range")));
        }
        let mut amplitudes = vec![Complex64::new(0.0, 0.0); dim];
        amplitudes[index] = Complex64::new(1.0, 0.0);
        Self::new(n_qubits, amplitudes)
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn into_amplitudes(self) -> Vec<Complex64> {
        self.amplitudes
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &PureState) -> Result<Complex64> {
        self.check_dim(other.dim())?;
        Ok(self
            .amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum())
    }

    /// `|⟨self|other⟩|²`.
    pub fn overlap(&self, other: &PureState) -> Result<f64> {
        Ok(self.inner(other)?.norm_sqr())
    }

    pub(crate) fn check_dim(&self, len: usize) -> Result<()> {
        if len != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: len,
            });
        }
        Ok(())
    }

    pub(crate) fn check_qubit(&self, qubit: usize) -> Result<()> {
        if qubit >= self.n_qubits {
            return Err(Error::validation(format!(
                "qubit {qubit} out of range for {} qubits",
                self.n_qubits
            )));
        }
        Ok(())
    }

    /// Multiplies amplitude `z` by `exp(-i γ diag[z])`.
    pub fn apply_cost_phase(&mut self, diag: &[f64], gamma: f64) -> Result<()> {
        self.check_dim(diag.len())?;
        for (a, &e) in self.amplitudes.iter_mut().zip(diag) {
            *a *= Complex64::from_polar(1.0, -gamma * e);
        }
        Ok(())
    }

    /// Applies `e^{-iβX}` to every qubit.
    pub fn apply_mixer(&mut self, beta: f64) {
        let (s, c) = beta.sin_cos();
        let rx: Mat2 = [
            [Complex64::new(c, 0.0), Complex64::new(0.0, -s)],
            [Complex64::new(0.0, -s), Complex64::new(c, 0.0)],
        ];
        for q in 0..self.n_qubits {
            self.apply_single_qubit_unchecked(&rx, q);
        }
    }

    /// Applies a 2×2 operator to one qubit. No renormalisation.
    pub fn apply_single_qubit(&mut self, op: &Mat2, qubit: usize) -> Result<()> {
        self.check_qubit(qubit)?;
        self.apply_single_qubit_unchecked(op, qubit);
        Ok(())
    }

    pub(crate) fn apply_single_qubit_unchecked(&mut self, op: &Mat2, qubit: usize) {
        let bit = 1usize << qubit;
        let dim = self.amplitudes.len();
        let mut base = 0;
        while base < dim {
            for z0 in base..base + bit {
                let z1 = z0 | bit;
                let a0 = self.amplitudes[z0];
                let a1 = self.amplitudes[z1];
                self.amplitudes[z0] = op[0][0] * a0 + op[0][1] * a1;
                self.amplitudes[z1] = op[1][0] * a0 + op[1][1] * a1;
            }
            base += bit << 1;
        }
    }

    /// One ideal QAOA round: cost phase then mixer.
    pub(crate) fn apply_round(&mut self, diag: &[f64], gamma: f64, beta: f64) -> Result<()> {
        self.apply_cost_phase(diag, gamma)?;
        self.apply_mixer(beta);
        Ok(())
    }

    /// `Σ_z |a_z|² diag[z]`.
    pub fn expected_cost(&self, diag: &[f64]) -> Result<f64> {
        self.check_dim(diag.len())?;
        Ok(self
            .amplitudes
            .iter()
            .zip(diag)
            .map(|(a, e)| a.norm_sqr() * e)
            .sum())
    }
}

/// QAOA angles `(γ⃗, β⃗)`, one pair per round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSchedule")]
pub struct AngleSchedule {
    gammas: Vec<f64>,
    betas: Vec<f64>,
}

#[derive(Deserialize)]
struct RawSchedule {
    gammas: Vec<f64>,
    betas: Vec<f64>,
}

impl TryFrom<RawSchedule> for AngleSchedule {
    type Error = Error;

    fn try_from(raw: RawSchedule) -> Result<Self> {
        AngleSchedule::new(raw.gammas, raw.betas)
    }
}

impl AngleSchedule {
    pub fn new(gammas: Vec<f64>, betas: Vec<f64>) -> Result<Self> {
        if gammas.is_empty() || gammas.len() != betas.len() {
            return Err(Error::validation(format!(
                "angle schedule needs equal, non-zero numbers of gammas and betas (got {} and {})",
                gammas.len(),
                betas.len()
            )));
        }
        if gammas.iter().chain(&betas).any(|a| !a.is_finite()) {
            return Err(Error::validation("angles must be finite"));
        }
        Ok(Self { gammas, betas })
    }

    /// All-zero schedule of the given depth.
    pub fn zeros(depth: usize) -> Result<Self> {
        Self::new(vec![0.0; depth], vec![0.0; depth])
    }

    /// Inverse of [`AngleSchedule::to_flat`]: `[γ_1..γ_d, β_1..β_d]`.
    pub fn from_flat(flat: &[f64]) -> Result<Self> {
        if !flat.len().is_multiple_of(2) {
            return Err(Error::validation("flat angle vector must have even length"));
        }
        let d = flat.len() / 2;
        Self::new(flat[..d].to_vec(), flat[d..].to_vec())
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.gammas.iter().chain(&self.betas).copied().collect()
    }

    pub fn depth(&self) -> usize {
        self.gammas.len()
    }

    pub fn gammas(&self) -> &[f64] {
        &self.gammas
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn rounds(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.gammas.iter().copied().zip(self.betas.iter().copied())
    }

    /// Every angle reduced into `[0, 2π)`.
    pub fn wrapped(&self) -> Self {
        let tau = std::f64::consts::TAU;
        let wrap = |a: &f64| {
            let w = a.rem_euclid(tau);
            if w >= tau {
                0.0
            } else {
                w
            }
        };
        Self {
            gammas: self.gammas.iter().map(wrap).collect(),
            betas: self.betas.iter().map(wrap).collect(),
        }
    }
}

/// `|+⟩^{⊗n}`.
pub fn plus_state(n: usize) -> Result<PureState> {
    Limits::default().check_pure(n)?;
    if n == 0 {
        return Err(Error::validation("state needs at least one qubit"));
    }
    let dim = 1usize << n;
    let amp = Complex64::new((dim as f64).sqrt().recip(), 0.0);
    Ok(PureState {
        n_qubits: n,
        amplitudes: vec![amp; dim],
    })
}

pub fn apply_cost_layer(state: &PureState, diag: &[f64], gamma: f64) -> Result<PureState> {
    let mut out = state.clone();
    out.apply_cost_phase(diag, gamma)?;
    Ok(out)
}

pub fn apply_mixer_layer(state: &PureState, beta: f64) -> PureState {
    let mut out = state.clone();
    out.apply_mixer(beta);
    out
}

/// Ideal output `|ψ_d⟩ = U(γ⃗, β⃗)|+⟩^{⊗N}`.
pub fn qaoa_state(instance: &IsingInstance, angles: &AngleSchedule) -> Result<PureState> {
    let diag = instance.diagonal()?;
    qaoa_state_from_diag(instance.n_qubits(), &diag, angles)
}

pub(crate) fn qaoa_state_from_diag(
    n: usize,
    diag: &[f64],
    angles: &AngleSchedule,
) -> Result<PureState> {
    let mut state = plus_state(n)?;
    for (g, b) in angles.rounds() {
        state.apply_round(diag, g, b)?;
    }
    Ok(state)
}

pub fn expected_cost_pure(state: &PureState, diag: &[f64]) -> Result<f64> {
    state.expected_cost(diag)
}
