//! Exact state-level simulation of noisy QAOA.
//!
//! A round is the cost phase `e^{-iγH_c}` followed by the mixer `e^{-iβH_x}`;
//! in the noisy circuit every round is followed by one application of the
//! local channel on each qubit, in qubit order.

mod density;
mod monte_carlo;
mod noise;
mod state;

pub use density::{
    apply_local_channel, expected_cost_dm, fidelity, noisy_state, noisy_state_with_limits,
    trace_distance, DensityMatrix,
};
pub use monte_carlo::{monte_carlo, MonteCarloEstimate};
pub use noise::{Mat2, NoiseKind, NoiseModel};
pub use state::{
    apply_cost_layer, apply_mixer_layer, expected_cost_pure, plus_state, qaoa_state,
    AngleSchedule, PureState,
};
pub(crate) use density::noisy_state_from_diag;
pub(crate) use state::qaoa_state_from_diag;

/// Qubit caps for the two dense engines.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Limits {
    pub max_pure_qubits: usize,
    pub max_density_qubits: usize,
}

impl Default for Limits {
    fn default() -> Self {
        Self {
            max_pure_qubits: 24,
            max_density_qubits: 12,
        }
    }
}

impl Limits {
    pub(crate) fn check_pure(&self, n: usize) -> crate::Result<()> {
        if n > self.max_pure_qubits {
            return Err(crate::Error::Resource(format!(
                "pure-state engine limited to {} qubits, got {n}",
                self.max_pure_qubits
            )));
        }
        Ok(())
    }

    pub(crate) fn check_density(&self, n: usize) -> crate::Result<()> {
        if n > self.max_density_qubits {
            return Err(crate::Error::Resource(format!(
                "density-matrix engine limited to {} qubits, got {n}",
                self.max_density_qubits
            )));
        }
        Ok(())
    }
}
