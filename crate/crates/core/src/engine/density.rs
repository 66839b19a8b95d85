use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use super::noise::{Mat2, NoiseModel};
use super::state::{plus_state, AngleSchedule, PureState};
use super::Limits;
use crate::error::{Error, Result};
use crate::ising::IsingInstance;

/// Dense `2^N × 2^N` density operator, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    n_qubits: usize,
    data: Vec<Complex64>,
}

impl DensityMatrix {
    /// Validates Hermiticity and unit trace within 1e-9 and a minimum
    /// eigenvalue no lower than -1e-8.
    pub fn new(n_qubits: usize, data: Vec<Complex64>) -> Result<Self> {
        let rho = Self::from_raw(n_qubits, data)?;
        rho.validate()?;
        Ok(rho)
    }

    pub(crate) fn from_raw(n_qubits: usize, data: Vec<Complex64>) -> Result<Self> {
        if n_qubits == 0 {
            return Err(Error::validation("density matrix needs at least one qubit"));
        }
        let dim = 1usize << n_qubits;
        if data.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                actual: data.len(),
            });
        }
        Ok(Self { n_qubits, data })
    }

    pub(crate) fn zeros(n_qubits: usize) -> Self {
        let dim = 1usize << n_qubits;
        Self {
            n_qubits,
            data: vec![Complex64::new(0.0, 0.0); dim * dim],
        }
    }

    /// `|ψ⟩⟨ψ|`.
    pub fn from_pure(state: &PureState) -> Self {
        let mut rho = Self::zeros(state.n_qubits());
        rho.add_outer(state.amplitudes(), 1.0);
        rho
    }

    /// `I / 2^N`.
    pub fn maximally_mixed(n_qubits: usize) -> Result<Self> {
        Limits::default().check_density(n_qubits)?;
        if n_qubits == 0 {
            return Err(Error::validation("density matrix needs at least one qubit"));
        }
        let mut rho = Self::zeros(n_qubits);
        let dim = rho.dim();
        for i in 0..dim {
            rho.data[i * dim + i] = Complex64::new(1.0 / dim as f64, 0.0);
        }
        Ok(rho)
    }

    /// `self += weight · |v⟩⟨v|`.
    pub(crate) fn add_outer(&mut self, v: &[Complex64], weight: f64) {
        let dim = self.dim();
        for (i, vi) in v.iter().enumerate() {
            let row = &mut self.data[i * dim..(i + 1) * dim];
            let wi = vi * weight;
            for (e, vj) in row.iter_mut().zip(v) {
                *e += wi * vj.conj();
            }
        }
    }

    /// `self = a·self + b·other`.
    pub fn scaled_add(&mut self, a: f64, b: f64, other: &DensityMatrix) -> Result<()> {
        if other.data.len() != self.data.len() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: other.dim(),
            });
        }
        for (x, y) in self.data.iter_mut().zip(&other.data) {
            *x = *x * a + y * b;
        }
        Ok(())
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        1usize << self.n_qubits
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.data[row * self.dim() + col]
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn trace(&self) -> Complex64 {
        let dim = self.dim();
        (0..dim).map(|i| self.data[i * dim + i]).sum()
    }

    pub fn hermiticity_error(&self) -> f64 {
        let dim = self.dim();
        let mut worst: f64 = 0.0;
        for i in 0..dim {
            for j in i..dim {
                worst = worst.max((self.get(i, j) - self.get(j, i).conj()).norm());
            }
        }
        worst
    }

    pub fn to_nalgebra(&self) -> DMatrix<Complex64> {
        let dim = self.dim();
        DMatrix::from_row_slice(dim, dim, &self.data)
    }

    /// Eigenvalues of the Hermitian part, ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let m = self.to_nalgebra();
        let herm = (&m + m.adjoint()) * Complex64::new(0.5, 0.0);
        let mut ev: Vec<f64> = SymmetricEigen::new(herm).eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    pub fn validate(&self) -> Result<()> {
        let herm = self.hermiticity_error();
        if herm > 1e-9 {
            return Err(Error::validation(format!("matrix not Hermitian (error {herm:e})")));
        }
        let tr = self.trace();
        if (tr - Complex64::new(1.0, 0.0)).norm() > 1e-9 {
            return Err(Error::validation(format!("trace {tr} differs from 1")));
        }
        let min = self.eigenvalues()[0];
        if min < -1e-8 {
            return Err(Error::validation(format!("negative eigenvalue {min:e}")));
        }
        Ok(())
    }

    fn check_qubit(&self, qubit: usize) -> Result<()> {
        if qubit >= self.n_qubits {
            return Err(Error::validation(format!(
                "qubit {qubit} out of range for {} qubits",
                self.n_qubits
            )));
        }
        Ok(())
    }

    /// Rewrites every 2×2 block `ρ[{r0,r1},{c0,c1}]` along `qubit` in place.
    fn map_blocks(&mut self, qubit: usize, f: impl Fn(&Mat2) -> Mat2) {
        let dim = self.dim();
        let bit = 1usize << qubit;
        for r0 in (0..dim).filter(|r| r & bit == 0) {
            let r1 = r0 | bit;
            for c0 in (0..dim).filter(|c| c & bit == 0) {
                let c1 = c0 | bit;
                let block = [
                    [self.data[r0 * dim + c0], self.data[r0 * dim + c1]],
                    [self.data[r1 * dim + c0], self.data[r1 * dim + c1]],
                ];
                let out = f(&block);
                self.data[r0 * dim + c0] = out[0][0];
                self.data[r0 * dim + c1] = out[0][1];
                self.data[r1 * dim + c0] = out[1][0];
                self.data[r1 * dim + c1] = out[1][1];
            }
        }
    }

    /// `ρ ↦ UρU†` with `U` acting on one qubit.
    pub fn conjugate_single_qubit(&mut self, op: &Mat2, qubit: usize) -> Result<()> {
        self.check_qubit(qubit)?;
        self.map_blocks(qubit, |b| conjugate(op, b));
        Ok(())
    }

    /// `ρ_{ab} ↦ ρ_{ab} e^{-iγ(D_a - D_b)}`.
    pub fn apply_cost_phase(&mut self, diag: &[f64], gamma: f64) -> Result<()> {
        let dim = self.dim();
        if diag.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: diag.len(),
            });
        }
        let phases: Vec<Complex64> = diag
            .iter()
            .map(|&e| Complex64::from_polar(1.0, -gamma * e))
            .collect();
        for (a, row) in self.data.chunks_exact_mut(dim).enumerate() {
            for (x, pb) in row.iter_mut().zip(&phases) {
                *x *= phases[a] * pb.conj();
            }
        }
        Ok(())
    }

    pub fn apply_mixer(&mut self, beta: f64) {
        let (s, c) = beta.sin_cos();
        let rx: Mat2 = [
            [Complex64::new(c, 0.0), Complex64::new(0.0, -s)],
            [Complex64::new(0.0, -s), Complex64::new(c, 0.0)],
        ];
        for q in 0..self.n_qubits {
            self.map_blocks(q, |b| conjugate(&rx, b));
        }
    }

    /// Applies the local channel to one qubit in place.
    pub fn apply_channel(&mut self, noise: &NoiseModel, qubit: usize) -> Result<()> {
        self.check_qubit(qubit)?;
        let p = noise.p();
        if p == 0.0 {
            return Ok(());
        }
        let keep = 1.0 - p;
        let w = p / noise.m() as f64;
        let kraus = noise.kraus();
        self.map_blocks(qubit, |b| {
            let mut out = [[b[0][0] * keep, b[0][1] * keep], [b[1][0] * keep, b[1][1] * keep]];
            for k in kraus {
                let kb = conjugate(k, b);
                for i in 0..2 {
                    for j in 0..2 {
                        out[i][j] += kb[i][j] * w;
                    }
                }
            }
            out
        });
        Ok(())
    }

    /// `⟨ψ|ρ|ψ⟩`.
    pub fn fidelity(&self, pure: &PureState) -> Result<f64> {
        let dim = self.dim();
        if pure.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: pure.dim(),
            });
        }
        let psi = pure.amplitudes();
        let mut acc = Complex64::new(0.0, 0.0);
        for (a, row) in self.data.chunks_exact(dim).enumerate() {
            let row_dot: Complex64 = row.iter().zip(psi).map(|(r, b)| r * b).sum();
            acc += psi[a].conj() * row_dot;
        }
        Ok(acc.re)
    }

    /// `Tr[H_c ρ]` for diagonal `H_c`.
    pub fn expected_cost(&self, diag: &[f64]) -> Result<f64> {
        let dim = self.dim();
        if diag.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: diag.len(),
            });
        }
        Ok(diag
            .iter()
            .enumerate()
            .map(|(z, e)| e * self.data[z * dim + z].re)
            .sum())
    }

    /// Half the trace norm of `self - other`.
    pub fn trace_distance(&self, other: &DensityMatrix) -> Result<f64> {
        if other.n_qubits != self.n_qubits {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: other.dim(),
            });
        }
        let diff = self.to_nalgebra() - other.to_nalgebra();
        let herm = (&diff + diff.adjoint()) * Complex64::new(0.5, 0.0);
        let ev = SymmetricEigen::new(herm).eigenvalues;
        Ok(0.5 * ev.iter().map(|e| e.abs()).sum::<f64>())
    }
}

fn conjugate(op: &Mat2, b: &Mat2) -> Mat2 {
    // op · b · op†
    let mut ob = [[Complex64::new(0.0, 0.0); 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            ob[i][j] = op[i][0] * b[0][j] + op[i][1] * b[1][j];
        }
    }
    let mut out = [[Complex64::new(0.0, 0.0); 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = ob[i][0] * op[j][0].conj() + ob[i][1] * op[j][1].conj();
        }
    }
    out
}

pub fn apply_local_channel(
    rho: &DensityMatrix,
    noise: &NoiseModel,
    qubit: usize,
) -> Result<DensityMatrix> {
    let mut out = rho.clone();
    out.apply_channel(noise, qubit)?;
    Ok(out)
}

/// Noisy output `ρ_d`: each round's unitaries followed by the channel on every
/// qubit in index order.
pub fn noisy_state(
    instance: &IsingInstance,
    angles: &AngleSchedule,
    noise: &NoiseModel,
) -> Result<DensityMatrix> {
    noisy_state_with_limits(instance, angles, noise, &Limits::default())
}

pub fn noisy_state_with_limits(
    instance: &IsingInstance,
    angles: &AngleSchedule,
    noise: &NoiseModel,
    limits: &Limits,
) -> Result<DensityMatrix> {
    let n = instance.n_qubits();
    limits.check_density(n)?;
    let diag = instance.diagonal()?;
    noisy_state_from_diag(n, &diag, angles, noise)
}

pub(crate) fn noisy_state_from_diag(
    n: usize,
    diag: &[f64],
    angles: &AngleSchedule,
    noise: &NoiseModel,
) -> Result<DensityMatrix> {
    let mut rho = DensityMatrix::from_pure(&plus_state(n)?);
    for (g, b) in angles.rounds() {
        rho.apply_cost_phase(diag, g)?;
        rho.apply_mixer(b);
        for q in 0..n {
            rho.apply_channel(noise, q)?;
        }
    }
    Ok(rho)
}

pub fn fidelity(rho: &DensityMatrix, pure: &PureState) -> Result<f64> {
    rho.fidelity(pure)
}

pub fn expected_cost_dm(rho: &DensityMatrix, diag: &[f64]) -> Result<f64> {
    rho.expected_cost(diag)
}

pub fn trace_distance(a: &DensityMatrix, b: &DensityMatrix) -> Result<f64> {
    a.trace_distance(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::noise::{PAULI_X, PAULI_Y, PAULI_Z};
    use crate::engine::state::qaoa_state;
    use crate::ising::Ensemble;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn random_mixed(n: usize, rank: usize, seed: u64) -> DensityMatrix {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let dim = 1usize << n;
        let mut rho = DensityMatrix::zeros(n);
        let weights: Vec<f64> = (0..rank).map(|_| rng.random_range(0.1..1.0)).collect();
        let total: f64 = weights.iter().sum();
        for w in weights {
            let mut v: Vec<Complex64> = (0..dim)
                .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                .collect();
            let norm = v.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
            v.iter_mut().for_each(|a| *a /= norm);
            rho.add_outer(&v, w / total);
        }
        rho
    }

    fn max_abs_diff(a: &DensityMatrix, b: &DensityMatrix) -> f64 {
        a.as_slice()
            .iter()
            .zip(b.as_slice())
            .map(|(x, y)| (x - y).norm())
            .fold(0.0, f64::max)
    }

    #[test]
    fn channel_examples() {
        let rho = random_mixed(2, 3, 1);
        let same = apply_local_channel(&rho, &NoiseModel::depolarizing(0.0).unwrap(), 1).unwrap();
        assert_eq!(same, rho);

        let one = random_mixed(1, 2, 2);
        let full = apply_local_channel(&one, &NoiseModel::depolarizing(1.0).unwrap(), 0).unwrap();
        assert!(max_abs_diff(&full, &DensityMatrix::maximally_mixed(1).unwrap()) < 1e-15);

        let plus = DensityMatrix::from_pure(&plus_state(1).unwrap());
        let deph = apply_local_channel(&plus, &NoiseModel::dephasing(1.0).unwrap(), 0).unwrap();
        assert!((deph.get(0, 0).re - 0.5).abs() < 1e-15);
        assert!((deph.get(1, 1).re - 0.5).abs() < 1e-15);
        assert!(deph.get(0, 1).norm() < 1e-15);

        assert!(apply_local_channel(&rho, &NoiseModel::dephasing(0.2).unwrap(), 2).is_err());
    }

    #[test]
    fn channel_matches_explicit_kraus_sum() {
        // full-register Kraus operators built as dense Kronecker products
        let n = 3;
        let dim = 8;
        let p = 0.37;
        let rho = random_mixed(n, 4, 3);
        let noise = NoiseModel::depolarizing(p).unwrap();
        for qubit in 0..n {
            let out = apply_local_channel(&rho, &noise, qubit).unwrap();
            let r = rho.to_nalgebra();
            let mut oracle = r.clone() * Complex64::new(1.0 - p, 0.0);
            for k in noise.kraus() {
                let mut full = DMatrix::<Complex64>::zeros(dim, dim);
                for a in 0..dim {
                    for b in 0..dim {
                        if a & !(1 << qubit) == b & !(1 << qubit) {
                            full[(a, b)] = k[(a >> qubit) & 1][(b >> qubit) & 1];
                        }
                    }
                }
                oracle += &full * &r * full.adjoint() * Complex64::new(p / 4.0, 0.0);
            }
            let got = out.to_nalgebra();
            assert!((got - oracle).iter().all(|e| e.norm() < 1e-14));
        }
    }

    #[test]
    fn noisy_state_limits() {
        let inst = IsingInstance::random(3, Ensemble::Pm1, 4).unwrap();
        let angles = AngleSchedule::new(vec![0.4, 1.2], vec![0.8, 0.3]).unwrap();
        let clean = noisy_state(&inst, &angles, &NoiseModel::depolarizing(0.0).unwrap()).unwrap();
        let pure = DensityMatrix::from_pure(&qaoa_state(&inst, &angles).unwrap());
        assert!(max_abs_diff(&clean, &pure) < 1e-13);

        let mixed = noisy_state(&inst, &angles, &NoiseModel::depolarizing(1.0).unwrap()).unwrap();
        assert!(max_abs_diff(&mixed, &DensityMatrix::maximally_mixed(3).unwrap()) < 1e-15);

        let big = IsingInstance::random(13, Ensemble::Ring, 0).unwrap();
        assert!(matches!(
            noisy_state(&big, &angles, &NoiseModel::depolarizing(0.1).unwrap()),
            Err(Error::Resource(_))
        ));
    }

    #[test]
    fn fidelity_examples() {
        let s = qaoa_state(
            &IsingInstance::random(3, Ensemble::Uniform, 3).unwrap(),
            &AngleSchedule::new(vec![0.5], vec![0.2]).unwrap(),
        )
        .unwrap();
        let rho = DensityMatrix::from_pure(&s);
        assert!((fidelity(&rho, &s).unwrap() - 1.0).abs() < 1e-14);
        let mm = DensityMatrix::maximally_mixed(3).unwrap();
        assert!((fidelity(&mm, &s).unwrap() - 0.125).abs() < 1e-15);

        let r = random_mixed(3, 3, 8);
        let m = r.to_nalgebra();
        let v = nalgebra::DVector::from_column_slice(s.amplitudes());
        let oracle = (v.adjoint() * m * &v)[(0, 0)].re;
        assert!((fidelity(&r, &s).unwrap() - oracle).abs() < 1e-14);
        assert!(fidelity(&r, &plus_state(2).unwrap()).is_err());
    }

    #[test]
    fn expected_cost_examples() {
        let inst = IsingInstance::random(3, Ensemble::Pm1, 2).unwrap();
        let diag = inst.diagonal().unwrap();
        let mm = DensityMatrix::maximally_mixed(3).unwrap();
        assert!(expected_cost_dm(&mm, &diag).unwrap().abs() < 1e-15);

        let pair = IsingInstance::new(2, vec![], vec![(0, 1, 1.0)], vec![]).unwrap();
        let rho = DensityMatrix::from_pure(&PureState::basis(2, 1).unwrap());
        assert_eq!(expected_cost_dm(&rho, &pair.diagonal().unwrap()).unwrap(), -1.0);

        let z = IsingInstance::new(1, vec![(0, 1.0)], vec![], vec![]).unwrap();
        let angles = AngleSchedule::new(vec![0.3], vec![0.5]).unwrap();
        let ideal = qaoa_state(&z, &angles).unwrap().expected_cost(&[1.0, -1.0]).unwrap();
        for p in [0.0, 0.25, 0.6, 1.0] {
            let rho = noisy_state(&z, &angles, &NoiseModel::depolarizing(p).unwrap()).unwrap();
            let c = expected_cost_dm(&rho, &[1.0, -1.0]).unwrap();
            assert!((c - (1.0 - p) * ideal).abs() < 1e-12);
        }
    }

    #[test]
    fn single_qubit_fidelity_law() {
        let z = IsingInstance::new(1, vec![(0, 1.0)], vec![], vec![]).unwrap();
        let angles = AngleSchedule::new(vec![0.0], vec![0.0]).unwrap();
        let psi = qaoa_state(&z, &angles).unwrap();
        for i in 0..=10 {
            let p = i as f64 / 10.0;
            let rho = noisy_state(&z, &angles, &NoiseModel::depolarizing(p).unwrap()).unwrap();
            assert!((rho.fidelity(&psi).unwrap() - (1.0 - p / 2.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn trace_distance_basics() {
        let a = DensityMatrix::from_pure(&PureState::basis(1, 0).unwrap());
        let b = DensityMatrix::from_pure(&PureState::basis(1, 1).unwrap());
        assert!((a.trace_distance(&b).unwrap() - 1.0).abs() < 1e-14);
        assert!(a.trace_distance(&a).unwrap() < 1e-15);
        let mm = DensityMatrix::maximally_mixed(1).unwrap();
        assert!((a.trace_distance(&mm).unwrap() - 0.5).abs() < 1e-14);
    }

    #[test]
    fn validation_rejects_bad_matrices() {
        let c = |x: f64| Complex64::new(x, 0.0);
        assert!(DensityMatrix::new(1, vec![c(0.5), c(0.0), c(0.0), c(0.5)]).is_ok());
        assert!(DensityMatrix::new(1, vec![c(0.6), c(0.0), c(0.0), c(0.5)]).is_err());
        assert!(DensityMatrix::new(1, vec![c(0.5), c(0.2), c(0.0), c(0.5)]).is_err());
        assert!(DensityMatrix::new(1, vec![c(1.5), c(0.0), c(0.0), c(-0.5)]).is_err());
        assert!(DensityMatrix::new(1, vec![c(1.0)]).is_err());
    }

    #[test]
    fn channel_order_does_not_matter() {
        let rho = random_mixed(3, 3, 9);
        let noise = NoiseModel::depolarizing(0.4).unwrap();
        let mut fwd = rho.clone();
        let mut rev = rho.clone();
        for q in 0..3 {
            fwd.apply_channel(&noise, q).unwrap();
            rev.apply_channel(&noise, 2 - q).unwrap();
        }
        assert!(max_abs_diff(&fwd, &rev) < 1e-12);
    }

    #[test]
    fn conjugation_by_paulis_keeps_trace() {
        let mut rho = random_mixed(2, 2, 10);
        for (q, op) in [(0, PAULI_X), (1, PAULI_Y), (0, PAULI_Z)] {
            rho.conjugate_single_qubit(&op, q).unwrap();
        }
        assert!((rho.trace().re - 1.0).abs() < 1e-13);
        rho.validate().unwrap();
    }

    proptest! {
        #[test]
        fn channel_preserves_trace_hermiticity_positivity(
            seed in 0u64..300, p in 0.0f64..=1.0, q in 0usize..3, dephase in proptest::bool::ANY
        ) {
            let rho = random_mixed(3, 3, seed);
            let noise = if dephase {
                NoiseModel::dephasing(p).unwrap()
            } else {
                NoiseModel::depolarizing(p).unwrap()
            };
            let out = apply_local_channel(&rho, &noise, q).unwrap();
            prop_assert!((out.trace() - rho.trace()).norm() < 1e-12);
            prop_assert!(out.hermiticity_error() < 1e-12);
            prop_assert!(out.eigenvalues()[0] >= -1e-8);
        }

        #[test]
        fn maximally_mixed_is_fixed_point(p in 0.0f64..=1.0, q in 0usize..4) {
            let mm = DensityMatrix::maximally_mixed(4).unwrap();
            let out = apply_local_channel(&mm, &NoiseModel::depolarizing(p).unwrap(), q).unwrap();
            prop_assert!(max_abs_diff(&out, &mm) < 1e-15);
        }
    }
}
