//! Cost and fidelity as functions of the noise rate for several depths,
//! crossings between depth curves, and depth recommendation from fitted
//! models.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::closedform::{model_cost_with_ideal, model_fidelity, CostFit, FidelityFit};
use crate::engine::{noisy_state_from_diag, qaoa_state_from_diag, AngleSchedule, Limits, NoiseModel};
use crate::error::{Error, Result};
use crate::ising::IsingInstance;
use crate::optimize::{optimize_angles, Objective};

/// Differences at or below this magnitude count as zero when looking for
/// sign changes.
pub const ZERO_TOLERANCE: f64 = 1e-9;

/// `{0, 0.02, …, 1}` merged with `{0, 0.005, …, 0.05}`.
pub fn default_p_grid() -> Vec<f64> {
    let coarse = (0..=50).map(|i| i as f64 / 50.0);
    let fine = (0..=10).map(|i| i as f64 * 0.005);
    normalise_grid(coarse.chain(fine).collect())
}

fn normalise_grid(mut grid: Vec<f64>) -> Vec<f64> {
    grid.sort_by(f64::total_cmp);
    grid.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    grid
}

/// Fitted models for one depth. `c_ideal` overrides the fit's own `α + α̃`
/// when present.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DepthFits {
    pub cost: Option<CostFit>,
    pub c_ideal: Option<f64>,
    pub fidelity: Option<FidelityFit>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AngleSource {
    /// One schedule per depth, reused for every `p`.
    Fixed,
    /// Re-optimised under noise at each `p`.
    Reoptimized,
}

impl AngleSource {
    pub fn as_str(self) -> &'static str {
        match self {
            AngleSource::Fixed => "fixed",
            AngleSource::Reoptimized => "reoptimized",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub d: usize,
    pub p: f64,
    pub cost_exact: f64,
    pub fidelity_exact: f64,
    pub cost_model: Option<f64>,
    pub fidelity_model: Option<f64>,
    pub angle_source: AngleSource,
}

/// Per-depth summary over the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthSummary {
    pub d: usize,
    pub max_cost_deviation: Option<f64>,
    pub max_fidelity_deviation: Option<f64>,
    /// `|cost_exact|` never increases along the grid.
    pub cost_magnitude_monotone: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub n_qubits: usize,
    pub rows: Vec<SweepRow>,
    pub summaries: Vec<DepthSummary>,
}

impl SweepTable {
    /// Builds a table from rows, sorting by `(d, p)` and rejecting duplicates.
    pub fn from_rows(n_qubits: usize, mut rows: Vec<SweepRow>) -> Result<Self> {
        rows.sort_by(|a, b| a.d.cmp(&b.d).then(a.p.total_cmp(&b.p)));
        if rows.windows(2).any(|w| w[0].d == w[1].d && w[0].p == w[1].p) {
            return Err(Error::validation("sweep rows must be unique in (d, p)"));
        }
        for row in &rows {
            if !row.cost_exact.is_finite() || !row.p.is_finite() {
                return Err(Error::validation("sweep rows must be finite"));
            }
        }
        let summaries = summarise(&rows);
        Ok(Self {
            n_qubits,
            rows,
            summaries,
        })
    }

    pub fn depths(&self) -> Vec<usize> {
        let mut d: Vec<usize> = self.rows.iter().map(|r| r.d).collect();
        d.dedup();
        d
    }

    pub fn rows_for(&self, d: usize) -> impl Iterator<Item = &SweepRow> {
        self.rows.iter().filter(move |r| r.d == d)
    }

    pub fn summary(&self, d: usize) -> Option<&DepthSummary> {
        self.summaries.iter().find(|s| s.d == d)
    }

    /// CSV with header `d,p,cost_exact,fidelity_exact,cost_model,fidelity_model,angle_source`;
    /// absent model values are empty fields.
    pub fn write_csv(&self, writer: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "d",
            "p",
            "cost_exact",
            "fidelity_exact",
            "cost_model",
            "fidelity_model",
            "angle_source",
        ])?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.rows {
            w.write_record([
                r.d.to_string(),
                r.p.to_string(),
                r.cost_exact.to_string(),
                r.fidelity_exact.to_string(),
                opt(r.cost_model),
                opt(r.fidelity_model),
                r.angle_source.as_str().to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn write_csv_file(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(file)
    }
}

fn summarise(rows: &[SweepRow]) -> Vec<DepthSummary> {
    let mut by_depth: BTreeMap<usize, Vec<&SweepRow>> = BTreeMap::new();
    for r in rows {
        by_depth.entry(r.d).or_default().push(r);
    }
    by_depth
        .into_iter()
        .map(|(d, rs)| {
            let max_dev = |f: &dyn Fn(&SweepRow) -> Option<f64>| {
                rs.iter()
                    .filter_map(|r| f(r))
                    .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.max(v))))
            };
            DepthSummary {
                d,
                max_cost_deviation: max_dev(&|r| r.cost_model.map(|m| (m - r.cost_exact).abs())),
                max_fidelity_deviation: max_dev(&|r| {
                    r.fidelity_model.map(|m| (m - r.fidelity_exact).abs())
                }),
                cost_magnitude_monotone: rs
                    .windows(2)
                    .all(|w| w[1].cost_exact.abs() <= w[0].cost_exact.abs() + 1e-12),
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReoptimizeSettings {
    pub restarts: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SweepOptions {
    /// Re-optimise the angles under noise at every grid point, using the
    /// supplied schedule only to fix the depth set.
    pub reoptimize: Option<ReoptimizeSettings>,
}

/// Evaluates every `(d, p)` pair with the density-matrix engine. `noise`
/// fixes the channel; its own `p` is ignored.
pub fn sweep(
    instance: &IsingInstance,
    depths: &[usize],
    p_grid: &[f64],
    noise: &NoiseModel,
    angles: &BTreeMap<usize, AngleSchedule>,
    fits: &BTreeMap<usize, DepthFits>,
) -> Result<SweepTable> {
    sweep_with(instance, depths, p_grid, noise, angles, fits, &SweepOptions::default())
}

pub fn sweep_with(
    instance: &IsingInstance,
    depths: &[usize],
    p_grid: &[f64],
    noise: &NoiseModel,
    angles: &BTreeMap<usize, AngleSchedule>,
    fits: &BTreeMap<usize, DepthFits>,
    options: &SweepOptions,
) -> Result<SweepTable> {
    let n = instance.n_qubits();
    Limits::default().check_density(n)?;
    if depths.is_empty() {
        return Err(Error::validation("at least one depth is required"));
    }
    if p_grid.is_empty() || p_grid.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::validation("p grid must be non-empty and within [0, 1]"));
    }
    let mut depths = depths.to_vec();
    depths.sort_unstable();
    depths.dedup();
    for &d in &depths {
        match angles.get(&d) {
            None => return Err(Error::validation(format!("no angle schedule for depth {d}"))),
            Some(a) if a.depth() != d => {
                return Err(Error::validation(format!(
                    "schedule for depth {d} has {} rounds",
                    a.depth()
                )))
            }
            _ => {}
        }
    }
    let grid = normalise_grid(p_grid.to_vec());
    let diag = instance.diagonal()?;
    let jobs: Vec<(usize, f64)> = depths
        .iter()
        .flat_map(|&d| grid.iter().map(move |&p| (d, p)))
        .collect();

    let rows = jobs
        .par_iter()
        .map(|&(d, p)| -> Result<SweepRow> {
            let channel = noise.with_p(p)?;
            let (schedule, source) = match options.reoptimize {
                None => (angles[&d].clone(), AngleSource::Fixed),
                Some(settings) => {
                    let seed = crate::seed::derive(settings.seed, &[d as u64, p.to_bits()]);
                    let report = optimize_angles(instance, d, Some(&channel), settings.restarts, seed)?;
                    (report.best_angles, AngleSource::Reoptimized)
                }
            };
            let ideal = qaoa_state_from_diag(n, &diag, &schedule)?;
            let rho = noisy_state_from_diag(n, &diag, &schedule, &channel)?;
            let cost_exact = rho.expected_cost(&diag)?;
            let fidelity_exact = rho.fidelity(&ideal)?;
            let slots = n * d;
            let model = fits.get(&d);
            let cost_model = model.and_then(|f| {
                f.cost.map(|c| model_cost_with_ideal(&c, f.c_ideal.unwrap_or(c.c_ideal()), slots, p))
            });
            let fidelity_model = model.and_then(|f| f.fidelity.map(|fit| model_fidelity(&fit, slots, p)));
            Ok(SweepRow {
                d,
                p,
                cost_exact,
                fidelity_exact,
                cost_model,
                fidelity_model,
                angle_source: source,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    SweepTable::from_rows(n, rows)
}

/// Convenience: optimise noiseless angles for each depth.
pub fn noiseless_angles(
    instance: &IsingInstance,
    depths: &[usize],
    restarts: usize,
    seed: u64,
) -> Result<BTreeMap<usize, AngleSchedule>> {
    depths
        .iter()
        .map(|&d| {
            let report = optimize_angles(instance, d, None, restarts, crate::seed::derive(seed, &[d as u64]))?;
            Ok((d, report.best_angles))
        })
        .collect()
}

/// A sign change of `cost(d_a) - cost(d_b)`, bracketed by grid points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Crossing {
    pub d_a: usize,
    pub d_b: usize,
    pub p_star: f64,
    pub p_lo: f64,
    pub p_hi: f64,
}

fn common_diffs(table: &SweepTable, d_a: usize, d_b: usize) -> Result<Vec<(f64, f64)>> {
    let b: Vec<&SweepRow> = table.rows_for(d_b).collect();
    let diffs: Vec<(f64, f64)> = table
        .rows_for(d_a)
        .filter_map(|ra| {
            b.iter()
                .find(|rb| rb.p == ra.p)
                .map(|rb| (ra.p, ra.cost_exact - rb.cost_exact))
        })
        .collect();
    if diffs.len() < 2 {
        return Err(Error::validation(format!(
            "depths {d_a} and {d_b} share fewer than two grid points"
        )));
    }
    Ok(diffs)
}

fn sign(v: f64) -> i8 {
    if v.abs() <= ZERO_TOLERANCE {
        0
    } else if v > 0.0 {
        1
    } else {
        -1
    }
}

fn crossings_of(diffs: &[(f64, f64)], d_a: usize, d_b: usize) -> Vec<Crossing> {
    let mut out = Vec::new();
    let mut last: Option<usize> = None;
    for (i, &(p, v)) in diffs.iter().enumerate() {
        let s = sign(v);
        if s == 0 {
            continue;
        }
        if let Some(j) = last {
            let (pj, vj) = diffs[j];
            if sign(vj) != s {
                let p_star = if i == j + 1 {
                    pj + (p - pj) * vj / (vj - v)
                } else {
                    // zero run between the two signs
                    let zeros = &diffs[j + 1..i];
                    zeros.iter().map(|z| z.0).sum::<f64>() / zeros.len() as f64
                };
                out.push(Crossing {
                    d_a,
                    d_b,
                    p_star,
                    p_lo: pj,
                    p_hi: p,
                });
            }
        }
        last = Some(i);
    }
    out
}

/// Noise rates where `cost_exact(d_a) - cost_exact(d_b)` changes sign,
/// located by linear interpolation between adjacent grid points.
pub fn find_crossings(table: &SweepTable, d_a: usize, d_b: usize) -> Result<Vec<f64>> {
    Ok(find_crossing_brackets(table, d_a, d_b)?
        .into_iter()
        .map(|c| c.p_star)
        .collect())
}

pub fn find_crossing_brackets(table: &SweepTable, d_a: usize, d_b: usize) -> Result<Vec<Crossing>> {
    let diffs = common_diffs(table, d_a, d_b)?;
    Ok(crossings_of(&diffs, d_a, d_b))
}

/// One bisection pass on crossings that lie within two grid steps of a
/// neighbouring crossing. `diff(p)` must return `cost(d_a) - cost(d_b)`.
pub fn refine_crossings(
    crossings: &[Crossing],
    diff: impl Fn(f64) -> Result<f64>,
) -> Result<Vec<Crossing>> {
    let crowded = |i: usize| {
        let c = &crossings[i];
        let step = c.p_hi - c.p_lo;
        let near = |o: &Crossing| (o.p_star - c.p_star).abs() < 2.0 * step;
        (i > 0 && near(&crossings[i - 1])) || crossings.get(i + 1).is_some_and(near)
    };
    (0..crossings.len())
        .map(|i| {
            let c = crossings[i];
            if !crowded(i) {
                return Ok(c);
            }
            let (lo, hi) = (c.p_lo, c.p_hi);
            let mid = 0.5 * (lo + hi);
            let pts = [(lo, diff(lo)?), (mid, diff(mid)?), (hi, diff(hi)?)];
            Ok(crossings_of(&pts, c.d_a, c.d_b).into_iter().next().unwrap_or(c))
        })
        .collect()
}

/// Refines crossings by re-running the density-matrix engine.
pub fn refine_crossings_with_engine(
    instance: &IsingInstance,
    noise: &NoiseModel,
    angles: &BTreeMap<usize, AngleSchedule>,
    crossings: &[Crossing],
) -> Result<Vec<Crossing>> {
    let cost = |d: usize, p: f64| -> Result<f64> {
        let a = angles
            .get(&d)
            .ok_or_else(|| Error::validation(format!("no angle schedule for depth {d}")))?;
        Objective::new(instance, Some(&noise.with_p(p)?), d)?.evaluate(a)
    };
    let mut out = Vec::with_capacity(crossings.len());
    for group in crossings.chunk_by(|a, b| a.d_a == b.d_a && a.d_b == b.d_b) {
        let (da, db) = (group[0].d_a, group[0].d_b);
        out.extend(refine_crossings(group, |p| Ok(cost(da, p)? - cost(db, p)?))?);
    }
    Ok(out)
}

/// CSV with header `d_a,d_b,p_star`.
pub fn write_crossings_csv(crossings: &[Crossing], writer: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["d_a", "d_b", "p_star"])?;
    for c in crossings {
        w.write_record([c.d_a.to_string(), c.d_b.to_string(), c.p_star.to_string()])?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

/// A fitted cost model for one depth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthModel {
    pub depth: usize,
    pub fit: CostFit,
    pub c_ideal: f64,
}

/// Depth with the lowest modelled cost at `p`; ties go to the smaller depth.
pub fn optimal_depth(models: &[DepthModel], n_qubits: usize, p: f64) -> Result<usize> {
    let mut sorted = models.to_vec();
    sorted.sort_by_key(|m| m.depth);
    let mut best: Option<(usize, f64)> = None;
    for m in &sorted {
        let c = model_cost_with_ideal(&m.fit, m.c_ideal, n_qubits * m.depth, p);
        match best {
            Some((_, b)) if c >= b - 1e-12 * b.abs().max(1.0) => {}
            _ => best = Some((m.depth, c)),
        }
    }
    best.map(|b| b.0)
        .ok_or_else(|| Error::validation("at least one depth model is required"))
}
