//! Diagonal cost Hamiltonians built from fields, pair couplings and
//! higher-order Z-products.
//!
//! Conventions: bit `i` of a basis index `z` is qubit `i` (bit 0 is the least
//! significant), and `s_i(z) = +1` when that bit is 0, `-1` when it is 1, so
//! that `σ^z|0⟩ = +|0⟩`.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest qubit count for which a dense diagonal is materialised.
pub const MAX_DIAGONAL_QUBITS: usize = 24;

/// A diagonal cost Hamiltonian.
///
/// Serialises to the instance file format
/// `{"n": .., "fields": [[i, h]], "couplings": [[i, j, J]], "higher_order": [[[i1, .., ik], c]]}`.
/// Deserialisation re-runs validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawInstance")]
pub struct IsingInstance {
    #[serde(rename = "n")]
    n_qubits: usize,
    fields: Vec<(usize, f64)>,
    couplings: Vec<(usize, usize, f64)>,
    higher_order: Vec<(Vec<usize>, f64)>,
}

#[derive(Deserialize)]
struct RawInstance {
    n: usize,
    #[serde(default)]
    fields: Vec<(usize, f64)>,
    #[serde(default)]
    couplings: Vec<(usize, usize, f64)>,
    #[serde(default)]
    higher_order: Vec<(Vec<usize>, f64)>,
}

impl TryFrom<RawInstance> for IsingInstance {
    type Error = Error;

    fn try_from(raw: RawInstance) -> Result<Self> {
        IsingInstance::new(raw.n, raw.fields, raw.couplings, raw.higher_order)
    }
}

impl IsingInstance {
    pub fn new(
        n_qubits: usize,
        fields: Vec<(usize, f64)>,
        couplings: Vec<(usize, usize, f64)>,
        higher_order: Vec<(Vec<usize>, f64)>,
    ) -> Result<Self> {
        if n_qubits == 0 {
            return Err(Error::validation("instance needs at least one qubit"));
        }
        let in_range = |q: usize| -> Result<()> {
            if q < n_qubits {
                Ok(())
            } else {
                Err(Error::validation(format!(
                    "qubit index {q} out of range for n = {n_qubits}"
                )))
            }
        };
        let finite = |c: f64| -> Result<()> {
            if c.is_finite() {
                Ok(())
            } else {
                Err(Error::validation("coefficients must be finite"))
            }
        };

        let mut seen = BTreeSet::new();
        for &(i, h) in &fields {
            in_range(i)?;
            finite(h)?;
            if !seen.insert(i) {
                return Err(Error::validation(format!("duplicate field on qubit {i}")));
            }
        }

        let mut seen = BTreeSet::new();
        for &(i, j, c) in &couplings {
            in_range(i)?;
            in_range(j)?;
            finite(c)?;
            if i >= j {
                return Err(Error::validation(format!(
                    "coupling ({i}, {j}) must satisfy i < j"
                )));
            }
            if !seen.insert((i, j)) {
                return Err(Error::validation(format!("duplicate coupling ({i}, {j})")));
            }
        }

        let mut seen = BTreeSet::new();
        for (set, c) in &higher_order {
            finite(*c)?;
            if set.len() < 3 {
                return Err(Error::validation(
                    "higher-order terms need at least three qubits",
                ));
            }
            for &q in set {
                in_range(q)?;
            }
            if set.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::validation(format!(
                    "higher-order index set {set:?} must be strictly increasing"
                )));
            }
            if !seen.insert(set.clone()) {
                return Err(Error::validation(format!(
                    "duplicate higher-order term {set:?}"
                )));
            }
        }

        Ok(Self {
            n_qubits,
            fields,
            couplings,
            higher_order,
        })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn fields(&self) -> &[(usize, f64)] {
        &self.fields
    }

    pub fn couplings(&self) -> &[(usize, usize, f64)] {
        &self.couplings
    }

    pub fn higher_order(&self) -> &[(Vec<usize>, f64)] {
        &self.higher_order
    }

    /// Each term as (bitmask of participating qubits, coefficient).
    fn masked_terms(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        let fields = self.fields.iter().map(|&(i, h)| (1usize << i, h));
        let pairs = self
            .couplings
            .iter()
            .map(|&(i, j, c)| ((1usize << i) | (1usize << j), c));
        let higher = self
            .higher_order
            .iter()
            .map(|(set, c)| (set.iter().fold(0usize, |m, &q| m | (1 << q)), *c));
        fields.chain(pairs).chain(higher)
    }

    /// Dense diagonal of the Hamiltonian in the computational basis.
    ///
    /// The product of spins over a term's qubits is `(-1)^popcount(z & mask)`.
    pub fn diagonal(&self) -> Result<Vec<f64>> {
        if self.n_qubits > MAX_DIAGONAL_QUBITS {
            return Err(Error::Resource(format!(
                "dense diagonal limited to {MAX_DIAGONAL_QUBITS} qubits, instance has {}",
                self.n_qubits
            )));
        }
        let dim = 1usize << self.n_qubits;
        let mut diag = vec![0.0; dim];
        for (mask, c) in self.masked_terms() {
            for (z, e) in diag.iter_mut().enumerate() {
                if (z & mask).count_ones() % 2 == 0 {
                    *e += c;
                } else {
                    *e -= c;
                }
            }
        }
        Ok(diag)
    }

    /// Minimum energy and the lowest-index basis state attaining it.
    pub fn ground_energy(&self) -> Result<(f64, Bitstring)> {
        let diag = self.diagonal()?;
        let (index, energy) = diag
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::INFINITY), |best, (z, e)| {
                if e < best.1 {
                    (z, e)
                } else {
                    best
                }
            });
        Ok((
            energy,
            Bitstring {
                index,
                n_qubits: self.n_qubits,
            },
        ))
    }

    /// Seeded random instance from one of the built-in ensembles.
    pub fn random(n: usize, ensemble: Ensemble, seed: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::validation("instance needs at least one qubit"));
        }
        let mut rng = crate::seed::stream(seed, &[0x15_1a6, n as u64, ensemble as u64]);
        let sign = |rng: &mut rand_chacha::ChaCha8Rng| if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let (fields, couplings) = match ensemble {
            Ensemble::Pm1 => {
                let mut couplings = Vec::with_capacity(n * (n - 1) / 2);
                for i in 0..n {
                    for j in i + 1..n {
                        couplings.push((i, j, sign(&mut rng)));
                    }
                }
                (Vec::new(), couplings)
            }
            Ensemble::Uniform => {
                let fields = (0..n)
                    .map(|i| (i, rng.random_range(-1.0..=1.0)))
                    .collect();
                let mut couplings = Vec::with_capacity(n * (n - 1) / 2);
                for i in 0..n {
                    for j in i + 1..n {
                        couplings.push((i, j, rng.random_range(-1.0..=1.0)));
                    }
                }
                (fields, couplings)
            }
            Ensemble::Ring => {
                let mut edges: Vec<(usize, usize)> = (0..n)
                    .map(|i| {
                        let j = (i + 1) % n;
                        (i.min(j), i.max(j))
                    })
                    .filter(|(i, j)| i != j)
                    .collect();
                edges.sort_unstable();
                edges.dedup();
                let couplings = edges
                    .into_iter()
                    .map(|(i, j)| (i, j, sign(&mut rng)))
                    .collect();
                (Vec::new(), couplings)
            }
        };
        Self::new(n, fields, couplings, Vec::new())
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json_string()? + "\n").map_err(|e| Error::io(path, e))
    }
}

/// Built-in random instance families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Ensemble {
    /// All pairs coupled with `J = ±1`, no fields.
    Pm1,
    /// All pairs and all fields uniform in `[-1, 1]`.
    Uniform,
    /// Nearest-neighbour cycle with `J = ±1`.
    Ring,
}

impl Ensemble {
    pub fn name(self) -> &'static str {
        match self {
            Ensemble::Pm1 => "pm1",
            Ensemble::Uniform => "uniform",
            Ensemble::Ring => "ring",
        }
    }
}

impl FromStr for Ensemble {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pm1" => Ok(Ensemble::Pm1),
            "uniform" => Ok(Ensemble::Uniform),
            "ring" => Ok(Ensemble::Ring),
            other => Err(Error::validation(format!(
                "unknown ensemble '{other}' (expected pm1, uniform or ring)"
            ))),
        }
    }
}

impl fmt::Display for Ensemble {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A computational basis state. Displays most-significant qubit first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Bitstring {
    pub index: usize,
    pub n_qubits: usize,
}

impl Bitstring {
    pub fn bit(&self, qubit: usize) -> bool {
        (self.index >> qubit) & 1 == 1
    }
}

impl fmt::Display for Bitstring {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for q in (0..self.n_qubits).rev() {
            f.write_str(if self.bit(q) { "1" } else { "0" })?;
        }
        Ok(())
    }
}
