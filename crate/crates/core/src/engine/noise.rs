use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Single-qubit operator, row-major.
pub type Mat2 = [[Complex64; 2]; 2];

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

pub const IDENTITY: Mat2 = [[ONE, ZERO], [ZERO, ONE]];
pub const PAULI_X: Mat2 = [[ZERO, ONE], [ONE, ZERO]];
pub const PAULI_Y: Mat2 = [[ZERO, Complex64::new(0.0, -1.0)], [I, ZERO]];
pub const PAULI_Z: Mat2 = [[ONE, ZERO], [ZERO, Complex64::new(-1.0, 0.0)]];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    Depolarizing,
    Dephasing,
    Custom,
}

impl std::str::FromStr for NoiseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "depolarizing" => Ok(NoiseKind::Depolarizing),
            "dephasing" => Ok(NoiseKind::Dephasing),
            "custom" => Ok(NoiseKind::Custom),
            other => Err(Error::validation(format!("unknown noise kind '{other}'"))),
        }
    }
}

/// Local channel `ρ ↦ (1-p)ρ + (p/M) Σ_j K_j ρ K_j†` with `Σ_j K_j†K_j = M·I`.
///
/// The identity is kept inside the Kraus set of the built-in channels, so
/// depolarizing noise has `M = 4` (`I, X, Y, Z`) and dephasing `M = 2` (`I, Z`).
/// Kraus index 0 is the identity for both.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseModel {
    kind: NoiseKind,
    p: f64,
    kraus: Vec<Mat2>,
}

fn check_probability(p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::validation(format!("noise strength p = {p} outside [0, 1]")))
    }
}

fn dagger(a: &Mat2) -> Mat2 {
    [[a[0][0].conj(), a[1][0].conj()], [a[0][1].conj(), a[1][1].conj()]]
}

fn matmul(a: &Mat2, b: &Mat2) -> Mat2 {
    let mut out = [[ZERO; 2]; 2];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, e) in row.iter_mut().enumerate() {
            *e = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

fn max_dev_from_scaled_identity(a: &Mat2, scale: f64) -> f64 {
    let mut dev: f64 = 0.0;
    for (i, row) in a.iter().enumerate() {
        for (j, e) in row.iter().enumerate() {
            let target = if i == j { scale } else { 0.0 };
            dev = dev.max((e - Complex64::new(target, 0.0)).norm());
        }
    }
    dev
}

impl NoiseModel {
    pub fn depolarizing(p: f64) -> Result<Self> {
        check_probability(p)?;
        Ok(Self {
            kind: NoiseKind::Depolarizing,
            p,
            kraus: vec![IDENTITY, PAULI_X, PAULI_Y, PAULI_Z],
        })
    }

    pub fn dephasing(p: f64) -> Result<Self> {
        check_probability(p)?;
        Ok(Self {
            kind: NoiseKind::Dephasing,
            p,
            kraus: vec![IDENTITY, PAULI_Z],
        })
    }

    /// Arbitrary Kraus set; must satisfy `Σ K†K = M·I` within 1e-9.
    pub fn custom(p: f64, kraus: Vec<Mat2>) -> Result<Self> {
        check_probability(p)?;
        if kraus.is_empty() {
            return Err(Error::validation("custom noise needs at least one Kraus operator"));
        }
        let mut sum = [[ZERO; 2]; 2];
        for k in &kraus {
            let kk = matmul(&dagger(k), k);
            for i in 0..2 {
                for j in 0..2 {
                    sum[i][j] += kk[i][j];
                }
            }
        }
        let dev = max_dev_from_scaled_identity(&sum, kraus.len() as f64);
        if dev > 1e-9 {
            return Err(Error::validation(format!(
                "Kraus set is not trace preserving (|Σ K†K - M·I| = {dev:e})"
            )));
        }
        Ok(Self {
            kind: NoiseKind::Custom,
            p,
            kraus,
        })
    }

    /// Built-in channel of the given kind.
    pub fn of_kind(kind: NoiseKind, p: f64) -> Result<Self> {
        match kind {
            NoiseKind::Depolarizing => Self::depolarizing(p),
            NoiseKind::Dephasing => Self::dephasing(p),
            NoiseKind::Custom => Err(Error::validation(
                "custom noise must be built from an explicit Kraus set",
            )),
        }
    }

    /// Same Kraus set at a different strength.
    pub fn with_p(&self, p: f64) -> Result<Self> {
        check_probability(p)?;
        Ok(Self {
            p,
            ..self.clone()
        })
    }

    pub fn kind(&self) -> NoiseKind {
        self.kind
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn kraus(&self) -> &[Mat2] {
        &self.kraus
    }

    /// Number of Kraus operators `M`.
    pub fn m(&self) -> usize {
        self.kraus.len()
    }

    pub fn is_unitary(&self) -> bool {
        self.kraus
            .iter()
            .all(|k| max_dev_from_scaled_identity(&matmul(&dagger(k), k), 1.0) <= 1e-9)
    }

    pub(crate) fn require_unitary(&self) -> Result<()> {
        if self.is_unitary() {
            Ok(())
        } else {
            Err(Error::UnsupportedModel(
                "pure-state trajectories require unitary Kraus operators".into(),
            ))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_are_unitary_and_trace_preserving() {
        for noise in [NoiseModel::depolarizing(0.3).unwrap(), NoiseModel::dephasing(0.3).unwrap()] {
            assert!(noise.is_unitary());
            assert!(NoiseModel::custom(noise.p(), noise.kraus().to_vec()).is_ok());
        }
        assert_eq!(NoiseModel::depolarizing(0.1).unwrap().m(), 4);
        assert_eq!(NoiseModel::dephasing(0.1).unwrap().m(), 2);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(NoiseModel::depolarizing(1.5).is_err());
        assert!(NoiseModel::dephasing(-0.1).is_err());
        assert!(NoiseModel::custom(0.1, vec![PAULI_X, PAULI_Z, PAULI_Z]).is_ok());
        let half = Complex64::new(0.5, 0.0);
        assert!(NoiseModel::custom(0.1, vec![[[half, ZERO], [ZERO, ONE]]]).is_err());
    }

    #[test]
    fn amplitude_damping_like_set_is_not_unitary() {
        // M = 2 rescaling of the amplitude-damping pair, γ = 0.5
        let g: f64 = 0.5;
        let s = 2f64.sqrt();
        let k0 = [[Complex64::new(s, 0.0), ZERO], [ZERO, Complex64::new(s * (1.0 - g).sqrt(), 0.0)]];
        let k1 = [[ZERO, Complex64::new(s * g.sqrt(), 0.0)], [ZERO, ZERO]];
        let noise = NoiseModel::custom(0.2, vec![k0, k1]).unwrap();
        assert!(!noise.is_unitary());
        assert!(matches!(noise.require_unitary(), Err(Error::UnsupportedModel(_))));
    }
}
