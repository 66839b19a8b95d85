//! Noise-pattern expansion of the noisy QAOA output.
//!
//! With unitary Kraus operators the output of `d` noisy rounds on `N` qubits is
//!
//! ```text
//! ρ_d = Σ_m (1-p)^{Nd-m} (p/M)^m Σ_{patterns of size m} |ψ_pattern⟩⟨ψ_pattern|
//! ```
//!
//! where a pattern picks `m` distinct (layer, qubit) slots out of the `N·d`
//! available and a Kraus index for each. Grouping by `m` gives the m-level
//! averages `f_m` (squared overlap with the ideal output) and `c_m` (cost),
//! from which the exact fidelity and cost follow as binomial sums.
//!
//! Layers, qubits and Kraus indices are 0-based here; Kraus index 0 is the
//! identity for the built-in channels.

use std::io::Write;
use std::path::Path;

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::{AngleSchedule, DensityMatrix, Limits, Mat2, NoiseModel, PureState};
use crate::error::{Error, Result};
use crate::ising::IsingInstance;

/// Default number of patterns evaluated per m-level.
pub const DEFAULT_BUDGET_PER_M: u64 = 2000;

const CHUNK: u64 = 2048;
const SAMPLE_STREAM: u64 = 0x7061;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PatternEntry {
    pub layer: usize,
    pub qubit: usize,
    pub kraus: usize,
}

/// A set of Kraus insertions, canonically sorted by (layer, qubit).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct NoisePattern {
    entries: Vec<PatternEntry>,
}

impl NoisePattern {
    pub fn empty() -> Self {
        Self { entries: Vec::new() }
    }

    /// Sorts the entries and rejects repeated (layer, qubit) slots.
    pub fn new(mut entries: Vec<PatternEntry>) -> Result<Self> {
        entries.sort();
        if entries
            .windows(2)
            .any(|w| (w[0].layer, w[0].qubit) == (w[1].layer, w[1].qubit))
        {
            return Err(Error::validation(
                "noise pattern repeats a (layer, qubit) slot",
            ));
        }
        Ok(Self { entries })
    }

    pub fn m(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &[PatternEntry] {
        &self.entries
    }

    fn check_against(&self, n: usize, depth: usize, m_kraus: usize) -> Result<()> {
        for e in &self.entries {
            if e.layer >= depth || e.qubit >= n || e.kraus >= m_kraus {
                return Err(Error::validation(format!(
                    "pattern entry {e:?} out of range (d = {depth}, N = {n}, M = {m_kraus})"
                )));
            }
        }
        Ok(())
    }
}

fn binomial_u128(n: u64, k: u64) -> Option<u128> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        // exact at every step: acc * (n - i) is divisible by (i + 1)
        acc = acc.checked_mul((n - i) as u128)? / (i as u128 + 1);
    }
    Some(acc)
}

/// `M^m · C(N·d, m)`, or `None` if it does not fit in 128 bits.
pub fn pattern_count(n: usize, depth: usize, m: usize, m_kraus: usize) -> Result<Option<u128>> {
    let slots = n * depth;
    if m > slots {
        return Err(Error::validation(format!(
            "m = {m} exceeds the {slots} available noise slots"
        )));
    }
    let Some(comb) = binomial_u128(slots as u64, m as u64) else {
        return Ok(None);
    };
    let mut pow: u128 = 1;
    for _ in 0..m {
        match pow.checked_mul(m_kraus as u128) {
            Some(v) => pow = v,
            None => return Ok(None),
        }
    }
    Ok(comb.checked_mul(pow))
}

/// Binomial coefficient as a float, for weights.
fn binomial_f64(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Writes the `rank`-th m-subset of `0..slots` in lexicographic order into `out`.
fn unrank_combination(slots: usize, m: usize, mut rank: u128, out: &mut Vec<usize>) {
    out.clear();
    let mut next = 0;
    for remaining in (1..=m).rev() {
        let mut s = next;
        loop {
            // subsets whose smallest remaining element is s
            let count = binomial_u128((slots - s - 1) as u64, (remaining - 1) as u64).unwrap();
            if rank < count {
                break;
            }
            rank -= count;
            s += 1;
        }
        out.push(s);
        next = s + 1;
    }
}

/// Shared data for evaluating many trajectories of one circuit.
pub struct TrajectoryContext<'a> {
    n: usize,
    diag: Vec<f64>,
    angles: &'a AngleSchedule,
    kraus: &'a [Mat2],
    /// `prefix[k]` is the ideal state after `k` rounds.
    prefix: Vec<PureState>,
}

impl<'a> TrajectoryContext<'a> {
    pub fn new(
        instance: &IsingInstance,
        angles: &'a AngleSchedule,
        noise: &'a NoiseModel,
    ) -> Result<Self> {
        noise.require_unitary()?;
        let n = instance.n_qubits();
        Limits::default().check_pure(n)?;
        let diag = instance.diagonal()?;
        let mut prefix = Vec::with_capacity(angles.depth() + 1);
        let mut state = crate::engine::plus_state(n)?;
        prefix.push(state.clone());
        for (g, b) in angles.rounds() {
            state.apply_cost_phase(&diag, g)?;
            state.apply_mixer(b);
            prefix.push(state.clone());
        }
        Ok(Self {
            n,
            diag,
            angles,
            kraus: noise.kraus(),
            prefix,
        })
    }

    pub fn n_slots(&self) -> usize {
        self.n * self.angles.depth()
    }

    pub fn m_kraus(&self) -> usize {
        self.kraus.len()
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.diag
    }

    pub fn ideal(&self) -> &PureState {
        self.prefix.last().expect("prefix always holds the final state")
    }

    pub fn trajectory(&self, pattern: &NoisePattern) -> Result<PureState> {
        pattern.check_against(self.n, self.angles.depth(), self.kraus.len())?;
        let slots: Vec<(usize, usize)> = pattern
            .entries
            .iter()
            .map(|e| (e.layer * self.n + e.qubit, e.kraus))
            .collect();
        Ok(self.trajectory_from_slots(&slots))
    }

    /// `slots` holds (layer·N + qubit, kraus) pairs in increasing slot order.
    fn trajectory_from_slots(&self, slots: &[(usize, usize)]) -> PureState {
        let Some(&(first, _)) = slots.first() else {
            return self.ideal().clone();
        };
        let start_layer = first / self.n;
        let mut state = self.prefix[start_layer + 1].clone();
        let mut cursor = 0;
        for layer in start_layer..self.angles.depth() {
            if layer > start_layer {
                let g = self.angles.gammas()[layer];
                let b = self.angles.betas()[layer];
                state
                    .apply_cost_phase(&self.diag, g)
                    .expect("diagonal matches state dimension");
                state.apply_mixer(b);
            }
            while cursor < slots.len() && slots[cursor].0 / self.n == layer {
                let (slot, j) = slots[cursor];
                state.apply_single_qubit_unchecked(&self.kraus[j], slot % self.n);
                cursor += 1;
            }
        }
        state
    }

    /// Decodes global pattern index `t` at level `m`: combination rank then
    /// base-M Kraus digits.
    fn decode(&self, m: usize, t: u128, kraus_pow: u128, buf: &mut Vec<usize>) -> Vec<(usize, usize)> {
        let slots = self.n_slots();
        unrank_combination(slots, m, t / kraus_pow, buf);
        let mut digits = t % kraus_pow;
        let mk = self.kraus.len() as u128;
        buf.iter()
            .map(|&s| {
                let j = (digits % mk) as usize;
                digits /= mk;
                (s, j)
            })
            .collect()
    }

    fn sample(&self, m: usize, rng: &mut impl Rng) -> Vec<(usize, usize)> {
        let mut chosen = index::sample(rng, self.n_slots(), m).into_vec();
        chosen.sort_unstable();
        chosen
            .into_iter()
            .map(|s| (s, rng.random_range(0..self.kraus.len())))
            .collect()
    }
}

/// Trajectory state for one noise pattern.
pub fn trajectory_state(
    instance: &IsingInstance,
    angles: &AngleSchedule,
    noise: &NoiseModel,
    pattern: &NoisePattern,
) -> Result<PureState> {
    TrajectoryContext::new(instance, angles, noise)?.trajectory(pattern)
}

/// Rebuilds `ρ_d` from every noise pattern. Fails if more than `max_terms`
/// patterns would be needed.
pub fn assemble_density_matrix(
    instance: &IsingInstance,
    angles: &AngleSchedule,
    noise: &NoiseModel,
    max_terms: u128,
) -> Result<DensityMatrix> {
    let ctx = TrajectoryContext::new(instance, angles, noise)?;
    Limits::default().check_density(ctx.n)?;
    let slots = ctx.n_slots();
    let mk = ctx.m_kraus();
    let mut total: u128 = 0;
    for m in 0..=slots {
        let c = pattern_count(ctx.n, angles.depth(), m, mk)?
            .ok_or_else(|| Error::Resource("pattern count overflows".into()))?;
        total = total.saturating_add(c);
    }
    if total > max_terms {
        return Err(Error::Resource(format!(
            "{total} noise patterns exceed the budget of {max_terms}"
        )));
    }

    let p = noise.p();
    let mut rho = DensityMatrix::zeros(ctx.n);
    for m in 0..=slots {
        let weight = (1.0 - p).powi((slots - m) as i32) * (p / mk as f64).powi(m as i32);
        if weight == 0.0 {
            continue;
        }
        let count = pattern_count(ctx.n, angles.depth(), m, mk)?.unwrap();
        let kraus_pow = (mk as u128).pow(m as u32);
        let n_chunks = count.div_ceil(CHUNK as u128) as u64;
        // bounded batches of per-chunk partial sums, reduced in chunk order
        let batch = 64u64;
        let mut start = 0u64;
        while start < n_chunks {
            let end = (start + batch).min(n_chunks);
            let partials: Vec<DensityMatrix> = (start..end)
                .into_par_iter()
                .map(|chunk| {
                    let mut part = DensityMatrix::zeros(ctx.n);
                    let lo = chunk as u128 * CHUNK as u128;
                    let hi = (lo + CHUNK as u128).min(count);
                    let mut buf = Vec::with_capacity(m);
                    for t in lo..hi {
                        let pattern = ctx.decode(m, t, kraus_pow, &mut buf);
                        let psi = ctx.trajectory_from_slots(&pattern);
                        part.add_outer(psi.amplitudes(), 1.0);
                    }
                    part
                })
                .collect();
            for part in &partials {
                rho.scaled_add(1.0, weight, part)?;
            }
            start = end;
        }
    }
    Ok(rho)
}

/// One m-level of an [`MLevelCurve`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MLevelPoint {
    pub m: usize,
    pub mean: f64,
    pub samples: u64,
    /// `true` when every pattern at this level was evaluated.
    pub exact: bool,
    /// Standard error of a sampled mean; 0 when exact.
    pub stderr: f64,
}

/// `f_m` or `c_m` as a function of the number of insertions `m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MLevelCurve {
    pub n_slots: usize,
    pub points: Vec<MLevelPoint>,
}

impl MLevelCurve {
    pub fn is_exact(&self) -> bool {
        self.points.iter().all(|p| p.exact)
    }

    pub fn means(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.mean).collect()
    }

    pub fn write_csv(&self, writer: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["m", "mean", "samples", "exact"])?;
        for p in &self.points {
            w.write_record([
                p.m.to_string(),
                p.mean.to_string(),
                p.samples.to_string(),
                p.exact.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn write_csv_file(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    fn exact_levels(&self) -> Result<()> {
        if self.points.len() != self.n_slots + 1
            || self.points.iter().enumerate().any(|(i, p)| p.m != i)
        {
            return Err(Error::validation("curve must hold every m in 0..=n_slots"));
        }
        if !self.is_exact() {
            return Err(Error::validation(
                "binomial reconstruction needs an exactly enumerated curve",
            ));
        }
        Ok(())
    }
}

/// Overlap and cost curves computed from the same trajectories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MLevelCurves {
    pub fidelity: MLevelCurve,
    pub cost: MLevelCurve,
}

#[derive(Clone, Copy, Default)]
struct Moments {
    n: u64,
    f: f64,
    f2: f64,
    c: f64,
    c2: f64,
}

impl Moments {
    fn push(&mut self, f: f64, c: f64) {
        self.n += 1;
        self.f += f;
        self.f2 += f * f;
        self.c += c;
        self.c2 += c * c;
    }

    fn merge(self, o: Moments) -> Moments {
        Moments {
            n: self.n + o.n,
            f: self.f + o.f,
            f2: self.f2 + o.f2,
            c: self.c + o.c,
            c2: self.c2 + o.c2,
        }
    }

    fn point(n: u64, sum: f64, sum2: f64, m: usize, exact: bool) -> MLevelPoint {
        let mean = sum / n as f64;
        let stderr = if exact || n < 2 {
            0.0
        } else {
            let var = ((sum2 - n as f64 * mean * mean) / (n - 1) as f64).max(0.0);
            (var / n as f64).sqrt()
        };
        MLevelPoint {
            m,
            mean,
            samples: n,
            exact,
            stderr,
        }
    }
}

/// Computes `f_m` and `c_m` for every `m`.
///
/// Levels with at most `budget_per_m` patterns are enumerated exactly; larger
/// levels average `budget_per_m` patterns drawn uniformly (uniform slot subset,
/// uniform Kraus indices). Sampling streams derive from `(seed, m, chunk)`.
pub fn mlevel_curves(
    instance: &IsingInstance,
    angles: &AngleSchedule,
    noise: &NoiseModel,
    budget_per_m: u64,
    seed: u64,
) -> Result<MLevelCurves> {
    if budget_per_m == 0 {
        return Err(Error::validation("budget per m must be positive"));
    }
    let ctx = TrajectoryContext::new(instance, angles, noise)?;
    let slots = ctx.n_slots();
    let mk = ctx.m_kraus();
    let ideal = ctx.ideal();
    let eval = |pattern: &[(usize, usize)], acc: &mut Moments| {
        let psi = ctx.trajectory_from_slots(pattern);
        // the empty pattern is the ideal state itself: f_0 = 1 by definition
        let f = if pattern.is_empty() {
            1.0
        } else {
            ideal.overlap(&psi).expect("same dimension")
        };
        let c = psi.expected_cost(&ctx.diag).expect("same dimension");
        acc.push(f, c);
    };

    let mut fidelity = Vec::with_capacity(slots + 1);
    let mut cost = Vec::with_capacity(slots + 1);
    for m in 0..=slots {
        let count = pattern_count(ctx.n, angles.depth(), m, mk)?;
        let exact = matches!(count, Some(c) if c <= budget_per_m as u128);
        let moments = if exact {
            let count = count.unwrap();
            let kraus_pow = (mk as u128).pow(m as u32);
            let n_chunks = count.div_ceil(CHUNK as u128) as u64;
            let parts: Vec<Moments> = (0..n_chunks)
                .into_par_iter()
                .map(|chunk| {
                    let mut acc = Moments::default();
                    let lo = chunk as u128 * CHUNK as u128;
                    let hi = (lo + CHUNK as u128).min(count);
                    let mut buf = Vec::with_capacity(m);
                    for t in lo..hi {
                        eval(&ctx.decode(m, t, kraus_pow, &mut buf), &mut acc);
                    }
                    acc
                })
                .collect();
            parts.into_iter().fold(Moments::default(), Moments::merge)
        } else {
            let n_chunks = budget_per_m.div_ceil(CHUNK);
            let parts: Vec<Moments> = (0..n_chunks)
                .into_par_iter()
                .map(|chunk| {
                    let mut rng = crate::seed::stream(seed, &[SAMPLE_STREAM, m as u64, chunk]);
                    let mut acc = Moments::default();
                    let lo = chunk * CHUNK;
                    let hi = (lo + CHUNK).min(budget_per_m);
                    for _ in lo..hi {
                        eval(&ctx.sample(m, &mut rng), &mut acc);
                    }
                    acc
                })
                .collect();
            parts.into_iter().fold(Moments::default(), Moments::merge)
        };
        fidelity.push(Moments::point(moments.n, moments.f, moments.f2, m, exact));
        cost.push(Moments::point(moments.n, moments.c, moments.c2, m, exact));
    }
    Ok(MLevelCurves {
        fidelity: MLevelCurve {
            n_slots: slots,
            points: fidelity,
        },
        cost: MLevelCurve {
            n_slots: slots,
            points: cost,
        },
    })
}

/// Mean squared overlap `f_m` with the ideal output.
pub fn f_curve(
    instance: &IsingInstance,
    angles: &AngleSchedule,
    noise: &NoiseModel,
    budget_per_m: u64,
    seed: u64,
) -> Result<MLevelCurve> {
    Ok(mlevel_curves(instance, angles, noise, budget_per_m, seed)?.fidelity)
}

/// Mean cost `c_m`.
pub fn c_curve(
    instance: &IsingInstance,
    angles: &AngleSchedule,
    noise: &NoiseModel,
    budget_per_m: u64,
    seed: u64,
) -> Result<MLevelCurve> {
    Ok(mlevel_curves(instance, angles, noise, budget_per_m, seed)?.cost)
}

fn binomial_sum(curve: &MLevelCurve, p: f64) -> Result<f64> {
    curve.exact_levels()?;
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::validation(format!("p = {p} outside [0, 1]")));
    }
    let s = curve.n_slots;
    Ok(curve
        .points
        .iter()
        .map(|pt| {
            binomial_f64(s, pt.m) * (1.0 - p).powi((s - pt.m) as i32) * p.powi(pt.m as i32) * pt.mean
        })
        .sum())
}

/// `F = Σ_m C(S, m) (1-p)^{S-m} p^m f_m` over an exact curve.
pub fn reconstruct_fidelity(curve: &MLevelCurve, p: f64) -> Result<f64> {
    binomial_sum(curve, p)
}

/// `C = Σ_m C(S, m) (1-p)^{S-m} p^m c_m` over an exact curve.
pub fn reconstruct_cost(curve: &MLevelCurve, p: f64) -> Result<f64> {
    binomial_sum(curve, p)
}
