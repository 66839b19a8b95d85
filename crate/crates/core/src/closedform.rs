//! Parametric models for the m-level curves and the closed-form fidelity and
//! cost laws they imply.
//!
//! * overlap: `f_m ≈ 1 + α(κ^{-m} - 1)`, giving
//!   `F(p) ≈ 1 + α([1 - p(κ-1)/κ]^S - 1)`
//! * cost: `c_m ≈ α + α̃ χ^{-m}`, giving
//!   `C(p) ≈ α + (C_ideal - α)[1 - p(χ-1)/χ]^S`
//!
//! with `S = N·d` noise slots. Fits use a damped Gauss–Newton
//! (Levenberg–Marquardt) iteration from several deterministic starting points.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::decomposition::MLevelCurve;
use crate::error::{Error, Result};

/// Fitted overlap model `f_m = 1 + α(κ^{-m} - 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FidelityFit {
    pub alpha: f64,
    pub kappa: f64,
    /// Sum of squared log-residuals.
    pub residual: f64,
}

impl FidelityFit {
    pub fn predict(&self, m: f64) -> f64 {
        1.0 + self.alpha * (self.kappa.powf(-m) - 1.0)
    }
}

/// Fitted cost model `c_m = α + α̃ χ^{-m}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostFit {
    pub alpha: f64,
    pub alpha_tilde: f64,
    pub chi: f64,
    /// Sum of squared residuals.
    pub residual: f64,
}

impl CostFit {
    pub fn predict(&self, m: f64) -> f64 {
        self.alpha + self.alpha_tilde * self.chi.powf(-m)
    }

    /// `α + α̃`, the model's noiseless cost.
    pub fn c_ideal(&self) -> f64 {
        self.alpha + self.alpha_tilde
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Weighting {
    #[default]
    Uniform,
    /// Weight each point by the inverse variance of its sampled mean; exact
    /// points get the largest weight present.
    InverseVariance,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub max_iterations: usize,
    pub step_tolerance: f64,
    pub weighting: Weighting,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            step_tolerance: 1e-10,
            weighting: Weighting::Uniform,
        }
    }
}

const START_RATES: [f64; 4] = [1.5, 2.0, 3.0, 5.0];

struct LmOutcome {
    x: Vec<f64>,
    cost: f64,
    iterations: usize,
    converged: bool,
}

/// Residuals and Jacobian at a point, or `None` where the model is undefined.
type ResidualModel<'a> = &'a dyn Fn(&[f64]) -> Option<(Vec<f64>, DMatrix<f64>)>;

/// Minimises `Σ r_i(x)²`. `model` returns residuals and Jacobian rows, or
/// `None` where the model is undefined.
fn levenberg_marquardt(
    model: ResidualModel<'_>,
    x0: &[f64],
    opts: &FitOptions,
) -> Option<LmOutcome> {
    let mut x = x0.to_vec();
    let (mut r, mut jac) = model(&x)?;
    let mut cost: f64 = r.iter().map(|v| v * v).sum();
    let mut lambda = 1e-3;
    let n = x.len();
    for iteration in 1..=opts.max_iterations {
        if cost < 1e-30 {
            return Some(LmOutcome { x, cost, iterations: iteration, converged: true });
        }
        let jt = jac.transpose();
        let a = &jt * &jac;
        let g = &jt * DVector::from_vec(r.clone());
        let mut stepped = false;
        while lambda < 1e16 {
            let mut damped = a.clone();
            for i in 0..n {
                damped[(i, i)] += lambda * a[(i, i)].max(1e-12);
            }
            let Some(delta) = damped.lu().solve(&(-&g)) else {
                lambda *= 4.0;
                continue;
            };
            let trial: Vec<f64> = x.iter().zip(delta.iter()).map(|(a, b)| a + b).collect();
            let step = delta.amax();
            if let Some((tr, tj)) = model(&trial) {
                let tc: f64 = tr.iter().map(|v| v * v).sum();
                if tc.is_finite() && tc <= cost {
                    x = trial;
                    r = tr;
                    jac = tj;
                    cost = tc;
                    lambda = (lambda / 3.0).max(1e-15);
                    stepped = true;
                    if step < opts.step_tolerance {
                        return Some(LmOutcome { x, cost, iterations: iteration, converged: true });
                    }
                    break;
                }
            }
            if step < opts.step_tolerance {
                // no descent possible at this resolution: stationary point
                return Some(LmOutcome { x, cost, iterations: iteration, converged: true });
            }
            lambda *= 4.0;
        }
        if !stepped {
            return Some(LmOutcome { x, cost, iterations: iteration, converged: true });
        }
    }
    Some(LmOutcome {
        x,
        cost,
        iterations: opts.max_iterations,
        converged: false,
    })
}

/// Runs every start and keeps the lowest residual, first start winning ties.
fn best_of(
    model: ResidualModel<'_>,
    starts: &[Vec<f64>],
    opts: &FitOptions,
) -> Result<LmOutcome> {
    let mut best: Option<LmOutcome> = None;
    for s in starts {
        if let Some(out) = levenberg_marquardt(model, s, opts) {
            if best.as_ref().is_none_or(|b| out.cost < b.cost) {
                best = Some(out);
            }
        }
    }
    let best = best.ok_or_else(|| Error::validation("model undefined at every starting point"))?;
    if !best.converged {
        return Err(Error::FitNotConverged {
            iterations: best.iterations,
            params: best.x.clone(),
            residual: best.cost,
        });
    }
    Ok(best)
}

/// Rate parameter constrained above 1: `rate = 1 + e^u`.
fn rate(u: f64) -> f64 {
    1.0 + u.exp()
}

fn rate_param(r: f64) -> f64 {
    (r - 1.0).ln()
}

fn point_weights(sigmas: Option<&[f64]>, n: usize, weighting: Weighting) -> Vec<f64> {
    match (weighting, sigmas) {
        (Weighting::InverseVariance, Some(s)) => {
            let floor = s
                .iter()
                .copied()
                .filter(|v| *v > 0.0 && v.is_finite())
                .fold(f64::INFINITY, f64::min);
            let floor = if floor.is_finite() { floor } else { 1.0 };
            s.iter().map(|&v| 1.0 / v.max(floor)).collect()
        }
        _ => vec![1.0; n],
    }
}

/// Fits `f_m = 1 + α(κ^{-m} - 1)` to the log of the data.
///
/// `sigmas`, when given, are standard errors of the values and are used only
/// with inverse-variance weighting.
pub fn fit_fidelity_points(
    ms: &[f64],
    values: &[f64],
    sigmas: Option<&[f64]>,
    opts: &FitOptions,
) -> Result<FidelityFit> {
    if ms.len() != values.len() || sigmas.is_some_and(|s| s.len() != ms.len()) {
        return Err(Error::validation("fit inputs have mismatched lengths"));
    }
    let keep: Vec<usize> = (0..ms.len()).filter(|&i| values[i] > 0.0 && values[i].is_finite()).collect();
    let mut distinct: Vec<f64> = keep.iter().map(|&i| ms[i]).collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(Error::validation(
            "fidelity fit needs at least three distinct m with positive values",
        ));
    }
    let ms: Vec<f64> = keep.iter().map(|&i| ms[i]).collect();
    let logs: Vec<f64> = keep.iter().map(|&i| values[i].ln()).collect();
    // log-space standard error ≈ σ / f
    let log_sigmas: Option<Vec<f64>> =
        sigmas.map(|s| keep.iter().map(|&i| s[i] / values[i]).collect());
    let w = point_weights(log_sigmas.as_deref(), ms.len(), opts.weighting);

    let model = |x: &[f64]| -> Option<(Vec<f64>, DMatrix<f64>)> {
        let (alpha, kappa) = (x[0], rate(x[1]));
        let mut r = Vec::with_capacity(ms.len());
        let mut jac = DMatrix::zeros(ms.len(), 2);
        for (i, &m) in ms.iter().enumerate() {
            let km = kappa.powf(-m);
            let f = 1.0 + alpha * (km - 1.0);
            if f.is_nan() || f <= 0.0 {
                return None;
            }
            r.push(w[i] * (f.ln() - logs[i]));
            jac[(i, 0)] = w[i] * (km - 1.0) / f;
            // ∂f/∂κ · ∂κ/∂u with ∂κ/∂u = κ - 1
            jac[(i, 1)] = w[i] * (-alpha * m * km / kappa) * (kappa - 1.0) / f;
        }
        Some((r, jac))
    };

    let mut starts = Vec::new();
    let m_max = ms.iter().copied().fold(0.0, f64::max);
    for &k0 in &START_RATES {
        let (mut num, mut den) = (0.0, 0.0);
        for (&m, &l) in ms.iter().zip(&logs) {
            let basis = k0.powf(-m) - 1.0;
            num += (l.exp() - 1.0) * basis;
            den += basis * basis;
        }
        let mut a0 = if den > 0.0 { (num / den).abs() } else { 0.5 };
        if a0 == 0.0 {
            a0 = 0.5;
        }
        // keep the starting model positive on the data range
        a0 = a0.min(0.99 / (1.0 - k0.powf(-m_max)));
        for a in [a0, -a0] {
            starts.push(vec![a, rate_param(k0)]);
        }
    }
    let best = best_of(&model, &starts, opts)?;
    let (r, _) = model(&best.x).expect("best iterate is feasible");
    let residual = r
        .iter()
        .zip(&w)
        .map(|(ri, wi)| (ri / wi).powi(2))
        .sum();
    Ok(FidelityFit {
        alpha: best.x[0],
        kappa: rate(best.x[1]),
        residual,
    })
}

/// Shared fitter for `y = α + α̃ g(χ, x)` with linear residuals.
fn fit_offset_decay(
    xs: &[f64],
    ys: &[f64],
    w: &[f64],
    basis: &dyn Fn(f64, f64) -> (f64, f64),
    anchor: f64,
    opts: &FitOptions,
) -> Result<CostFit> {
    let model = |x: &[f64]| -> Option<(Vec<f64>, DMatrix<f64>)> {
        let (alpha, alpha_tilde, chi) = (x[0], x[1], rate(x[2]));
        let mut r = Vec::with_capacity(xs.len());
        let mut jac = DMatrix::zeros(xs.len(), 3);
        for (i, &t) in xs.iter().enumerate() {
            let (g, dg) = basis(chi, t);
            let y = alpha + alpha_tilde * g;
            if !y.is_finite() {
                return None;
            }
            r.push(w[i] * (y - ys[i]));
            jac[(i, 0)] = w[i];
            jac[(i, 1)] = w[i] * g;
            jac[(i, 2)] = w[i] * alpha_tilde * dg * (chi - 1.0);
        }
        Some((r, jac))
    };

    let mut starts = Vec::new();
    for &c0 in &START_RATES {
        // linear least squares for (α, α̃) at fixed χ
        let (mut s1, mut sg, mut sgg, mut sy, mut sgy) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (&t, &y) in xs.iter().zip(ys) {
            let g = basis(c0, t).0;
            s1 += 1.0;
            sg += g;
            sgg += g * g;
            sy += y;
            sgy += g * y;
        }
        let det = s1 * sgg - sg * sg;
        let (a, at) = if det.abs() > 1e-14 {
            ((sgg * sy - sg * sgy) / det, (s1 * sgy - sg * sy) / det)
        } else {
            (0.0, anchor)
        };
        starts.push(vec![a, at, rate_param(c0)]);
        starts.push(vec![-a, at + 2.0 * a, rate_param(c0)]);
    }
    let best = best_of(&model, &starts, opts)?;
    let (r, _) = model(&best.x).expect("best iterate is feasible");
    let residual = r.iter().zip(w).map(|(ri, wi)| (ri / wi).powi(2)).sum();
    Ok(CostFit {
        alpha: best.x[0],
        alpha_tilde: best.x[1],
        chi: rate(best.x[2]),
        residual,
    })
}

/// Fits `c_m = α + α̃ χ^{-m}` with linear residuals.
pub fn fit_cost_points(
    ms: &[f64],
    values: &[f64],
    sigmas: Option<&[f64]>,
    opts: &FitOptions,
) -> Result<CostFit> {
    if ms.len() != values.len() || sigmas.is_some_and(|s| s.len() != ms.len()) {
        return Err(Error::validation("fit inputs have mismatched lengths"));
    }
    let mut distinct = ms.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 4 {
        return Err(Error::validation("cost fit needs at least four distinct m values"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::validation("cost values must be finite"));
    }
    let w = point_weights(sigmas, ms.len(), opts.weighting);
    let anchor = ms
        .iter()
        .zip(values)
        .find(|(m, _)| **m == 0.0)
        .map_or(values[0], |(_, v)| *v);
    let basis = |chi: f64, m: f64| {
        let g = chi.powf(-m);
        (g, -m * g / chi)
    };
    fit_offset_decay(ms, values, &w, &basis, anchor, opts)
}

/// Fits the closed-form cost law directly to `(p, C(p))` data:
/// `C(p) = α + α̃ [1 - p(χ-1)/χ]^S`.
pub fn fit_cost_vs_p(
    ps: &[f64],
    costs: &[f64],
    n_slots: usize,
    opts: &FitOptions,
) -> Result<CostFit> {
    if ps.len() != costs.len() {
        return Err(Error::validation("fit inputs have mismatched lengths"));
    }
    if ps.len() < 4 {
        return Err(Error::validation("cost fit needs at least four points"));
    }
    if ps.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::validation("p values must lie in [0, 1]"));
    }
    let w = vec![1.0; ps.len()];
    let s = n_slots as i32;
    let basis = move |chi: f64, p: f64| {
        let q = 1.0 - p * (chi - 1.0) / chi;
        let g = q.powi(s);
        let dg = if s == 0 { 0.0 } else { s as f64 * q.powi(s - 1) * (-p / (chi * chi)) };
        (g, dg)
    };
    let anchor = ps
        .iter()
        .zip(costs)
        .find(|(p, _)| **p == 0.0)
        .map_or(costs[0], |(_, c)| *c);
    fit_offset_decay(ps, costs, &w, &basis, anchor, opts)
}

fn curve_columns(curve: &MLevelCurve) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    (
        curve.points.iter().map(|p| p.m as f64).collect(),
        curve.points.iter().map(|p| p.mean).collect(),
        curve.points.iter().map(|p| p.stderr).collect(),
    )
}

pub fn fit_fidelity(curve: &MLevelCurve) -> Result<FidelityFit> {
    fit_fidelity_with(curve, &FitOptions::default())
}

pub fn fit_fidelity_with(curve: &MLevelCurve, opts: &FitOptions) -> Result<FidelityFit> {
    let (ms, vs, ss) = curve_columns(curve);
    fit_fidelity_points(&ms, &vs, Some(&ss), opts)
}

pub fn fit_cost(curve: &MLevelCurve) -> Result<CostFit> {
    fit_cost_with(curve, &FitOptions::default())
}

pub fn fit_cost_with(curve: &MLevelCurve, opts: &FitOptions) -> Result<CostFit> {
    let (ms, vs, ss) = curve_columns(curve);
    fit_cost_points(&ms, &vs, Some(&ss), opts)
}

fn decay_base(p: f64, rate: f64) -> f64 {
    1.0 - p * (rate - 1.0) / rate
}

/// `F(p) ≈ 1 + α([1 - p(κ-1)/κ]^S - 1)`.
pub fn model_fidelity(fit: &FidelityFit, n_slots: usize, p: f64) -> f64 {
    1.0 + fit.alpha * (decay_base(p, fit.kappa).powi(n_slots as i32) - 1.0)
}

/// `C(p) ≈ α + (C_ideal - α)[1 - p(χ-1)/χ]^S` with `C_ideal = α + α̃`.
pub fn model_cost(fit: &CostFit, n_slots: usize, p: f64) -> f64 {
    model_cost_with_ideal(fit, fit.c_ideal(), n_slots, p)
}

/// As [`model_cost`] but with an externally supplied noiseless cost.
pub fn model_cost_with_ideal(fit: &CostFit, c_ideal: f64, n_slots: usize, p: f64) -> f64 {
    fit.alpha + (c_ideal - fit.alpha) * decay_base(p, fit.chi).powi(n_slots as i32)
}

/// Small-noise exponent `δ = α(κ-1)/κ` of `F ≈ (1-p)^{δS}`.
pub fn delta_exponent(fit: &FidelityFit) -> f64 {
    fit.alpha * (fit.kappa - 1.0) / fit.kappa
}

/// Small-noise exponent `η = ((C_ideal - α)/C_ideal)(χ-1)/χ` of
/// `C ≈ (1-p)^{ηS} C_ideal`.
pub fn eta_exponent(fit: &CostFit) -> Result<f64> {
    let c_ideal = fit.c_ideal();
    if c_ideal == 0.0 {
        return Err(Error::Undefined(
            "η is undefined when the noiseless cost α + α̃ is zero".into(),
        ));
    }
    Ok((c_ideal - fit.alpha) / c_ideal * (fit.chi - 1.0) / fit.chi)
}

/// Fully randomised cost `Tr[H_c]/2^N`.
pub fn haar_cost(diag: &[f64]) -> f64 {
    if diag.is_empty() {
        return 0.0;
    }
    diag.iter().sum::<f64>() / diag.len() as f64
}

/// JSON export of a fidelity fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FidelityFitReport {
    pub alpha: f64,
    pub kappa: f64,
    pub residual: f64,
    pub delta: f64,
}

impl From<&FidelityFit> for FidelityFitReport {
    fn from(fit: &FidelityFit) -> Self {
        Self {
            alpha: fit.alpha,
            kappa: fit.kappa,
            residual: fit.residual,
            delta: delta_exponent(fit),
        }
    }
}

/// JSON export of a cost fit; `eta` is null when undefined.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostFitReport {
    pub alpha: f64,
    pub alpha_tilde: f64,
    pub chi: f64,
    pub residual: f64,
    pub eta: Option<f64>,
}

impl From<&CostFit> for CostFitReport {
    fn from(fit: &CostFit) -> Self {
        Self {
            alpha: fit.alpha,
            alpha_tilde: fit.alpha_tilde,
            chi: fit.chi,
            residual: fit.residual,
            eta: eta_exponent(fit).ok(),
        }
    }
}
