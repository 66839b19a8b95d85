//! Python bindings for `qaoa-noise`.
//!
//! Errors map to `ValueError` for invalid input and `RuntimeError` for
//! resource caps and fit failures.

use std::collections::BTreeMap;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use qaoa_noise::closedform::{self, CostFit, FidelityFit, FitOptions};
use qaoa_noise::decomposition::{self, MLevelCurve};
use qaoa_noise::engine::{self, DensityMatrix};
use qaoa_noise::{optimize, tradeoff, Error};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Validation(_) | Error::DimensionMismatch { .. } | Error::UnsupportedModel(_) | Error::Undefined(_) => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

trait IntoPy<T> {
    fn py_err(self) -> PyResult<T>;
}

impl<T> IntoPy<T> for qaoa_noise::Result<T> {
    fn py_err(self) -> PyResult<T> {
        self.map_err(to_py)
    }
}

/// Diagonal Ising cost Hamiltonian.
#[pyclass(name = "IsingInstance", module = "qaoa_noise_py", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyIsingInstance(qaoa_noise::IsingInstance);

#[pymethods]
impl PyIsingInstance {
    #[new]
    #[pyo3(signature = (n_qubits, fields=vec![], couplings=vec![], higher_order=vec![]))]
    fn new(
        n_qubits: usize,
        fields: Vec<(usize, f64)>,
        couplings: Vec<(usize, usize, f64)>,
        higher_order: Vec<(Vec<usize>, f64)>,
    ) -> PyResult<Self> {
        qaoa_noise::IsingInstance::new(n_qubits, fields, couplings, higher_order)
            .py_err()
            .map(Self)
    }

    /// Random instance from the `pm1`, `uniform` or `ring` ensemble.
    #[staticmethod]
    fn random(n_qubits: usize, ensemble: &str, seed: u64) -> PyResult<Self> {
        let ensemble = ensemble.parse().py_err()?;
        qaoa_noise::IsingInstance::random(n_qubits, ensemble, seed)
            .py_err()
            .map(Self)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        qaoa_noise::IsingInstance::from_json_str(text).py_err().map(Self)
    }

    fn to_json(&self) -> PyResult<String> {
        self.0.to_json_string().py_err()
    }

    #[getter]
    fn n_qubits(&self) -> usize {
        self.0.n_qubits()
    }

    #[getter]
    fn fields(&self) -> Vec<(usize, f64)> {
        self.0.fields().to_vec()
    }

    #[getter]
    fn couplings(&self) -> Vec<(usize, usize, f64)> {
        self.0.couplings().to_vec()
    }

    /// Energy of every basis state, indexed with qubit 0 as the lowest bit.
    fn diagonal(&self) -> PyResult<Vec<f64>> {
        self.0.diagonal().py_err()
    }

    /// `(energy, bitstring)` with the bitstring written highest qubit first.
    fn ground_energy(&self) -> PyResult<(f64, String)> {
        let (e, b) = self.0.ground_energy().py_err()?;
        Ok((e, b.to_string()))
    }

    fn __repr__(&self) -> String {
        format!(
            "IsingInstance(n_qubits={}, fields={}, couplings={})",
            self.0.n_qubits(),
            self.0.fields().len(),
            self.0.couplings().len()
        )
    }
}

/// Local noise channel applied to every qubit after each round.
#[pyclass(name = "NoiseModel", module = "qaoa_noise_py", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyNoiseModel(engine::NoiseModel);

#[pymethods]
impl PyNoiseModel {
    #[staticmethod]
    fn depolarizing(p: f64) -> PyResult<Self> {
        engine::NoiseModel::depolarizing(p).py_err().map(Self)
    }

    #[staticmethod]
    fn dephasing(p: f64) -> PyResult<Self> {
        engine::NoiseModel::dephasing(p).py_err().map(Self)
    }

    fn with_p(&self, p: f64) -> PyResult<Self> {
        self.0.with_p(p).py_err().map(Self)
    }

    #[getter]
    fn p(&self) -> f64 {
        self.0.p()
    }

    #[getter]
    fn kind(&self) -> &'static str {
        match self.0.kind() {
            engine::NoiseKind::Depolarizing => "depolarizing",
            engine::NoiseKind::Dephasing => "dephasing",
            engine::NoiseKind::Custom => "custom",
        }
    }

    fn __repr__(&self) -> String {
        format!("NoiseModel.{}({})", self.kind(), self.0.p())
    }
}

/// QAOA angles `γ_1..γ_d`, `β_1..β_d`.
#[pyclass(name = "AngleSchedule", module = "qaoa_noise_py", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyAngleSchedule(engine::AngleSchedule);

#[pymethods]
impl PyAngleSchedule {
    #[new]
    fn new(gammas: Vec<f64>, betas: Vec<f64>) -> PyResult<Self> {
        engine::AngleSchedule::new(gammas, betas).py_err().map(Self)
    }

    /// From `[γ_1..γ_d, β_1..β_d]`.
    #[staticmethod]
    fn from_flat(flat: Vec<f64>) -> PyResult<Self> {
        engine::AngleSchedule::from_flat(&flat).py_err().map(Self)
    }

    fn to_flat(&self) -> Vec<f64> {
        self.0.to_flat()
    }

    #[getter]
    fn depth(&self) -> usize {
        self.0.depth()
    }

    #[getter]
    fn gammas(&self) -> Vec<f64> {
        self.0.gammas().to_vec()
    }

    #[getter]
    fn betas(&self) -> Vec<f64> {
        self.0.betas().to_vec()
    }

    fn __repr__(&self) -> String {
        format!("AngleSchedule(gammas={:?}, betas={:?})", self.0.gammas(), self.0.betas())
    }
}

fn noisy(instance: &PyIsingInstance, angles: &PyAngleSchedule, noise: &PyNoiseModel) -> PyResult<DensityMatrix> {
    engine::noisy_state(&instance.0, &angles.0, &noise.0).py_err()
}

/// Noiseless expected cost.
#[pyfunction]
fn expected_cost(instance: &PyIsingInstance, angles: &PyAngleSchedule) -> PyResult<f64> {
    let state = engine::qaoa_state(&instance.0, &angles.0).py_err()?;
    state.expected_cost(&instance.0.diagonal().py_err()?).py_err()
}

/// `(cost, fidelity)` of the noisy output from the density-matrix engine.
#[pyfunction]
fn noisy_cost_fidelity(
    instance: &PyIsingInstance,
    angles: &PyAngleSchedule,
    noise: &PyNoiseModel,
) -> PyResult<(f64, f64)> {
    let rho = noisy(instance, angles, noise)?;
    let ideal = engine::qaoa_state(&instance.0, &angles.0).py_err()?;
    Ok((
        rho.expected_cost(&instance.0.diagonal().py_err()?).py_err()?,
        rho.fidelity(&ideal).py_err()?,
    ))
}

/// Trace distance between the engine's noisy state and the one assembled
/// from every noise pattern.
#[pyfunction]
#[pyo3(signature = (instance, angles, noise, max_terms=10_000_000))]
fn decomposition_trace_distance(
    instance: &PyIsingInstance,
    angles: &PyAngleSchedule,
    noise: &PyNoiseModel,
    max_terms: u64,
) -> PyResult<f64> {
    let rho = noisy(instance, angles, noise)?;
    let assembled =
        decomposition::assemble_density_matrix(&instance.0, &angles.0, &noise.0, max_terms as u128).py_err()?;
    rho.trace_distance(&assembled).py_err()
}

/// Trajectory estimates as a dict with means, standard errors and the
/// trial count.
#[pyfunction]
#[pyo3(signature = (instance, angles, noise, trials, seed=0))]
fn monte_carlo<'py>(
    py: Python<'py>,
    instance: &PyIsingInstance,
    angles: &PyAngleSchedule,
    noise: &PyNoiseModel,
    trials: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let est = engine::monte_carlo(&instance.0, &angles.0, &noise.0, trials, seed).py_err()?;
    let d = PyDict::new(py);
    d.set_item("cost_mean", est.cost_mean)?;
    d.set_item("cost_stderr", est.cost_stderr)?;
    d.set_item("fidelity_mean", est.fidelity_mean)?;
    d.set_item("fidelity_stderr", est.fidelity_stderr)?;
    d.set_item("trials", est.trials)?;
    Ok(d)
}

/// `f_m` and `c_m` curves with their fits and reconstruction support.
#[pyclass(name = "MLevelCurves", module = "qaoa_noise_py", frozen)]
struct PyMLevelCurves(decomposition::MLevelCurves);

fn points(curve: &MLevelCurve) -> Vec<(usize, f64, u64, bool)> {
    curve.points.iter().map(|p| (p.m, p.mean, p.samples, p.exact)).collect()
}

#[pymethods]
impl PyMLevelCurves {
    #[getter]
    fn n_slots(&self) -> usize {
        self.0.fidelity.n_slots
    }

    #[getter]
    fn exact(&self) -> bool {
        self.0.fidelity.is_exact() && self.0.cost.is_exact()
    }

    /// `(m, f_m, samples, exact)` tuples.
    #[getter]
    fn fidelity(&self) -> Vec<(usize, f64, u64, bool)> {
        points(&self.0.fidelity)
    }

    /// `(m, c_m, samples, exact)` tuples.
    #[getter]
    fn cost(&self) -> Vec<(usize, f64, u64, bool)> {
        points(&self.0.cost)
    }

    fn reconstruct_fidelity(&self, p: f64) -> PyResult<f64> {
        decomposition::reconstruct_fidelity(&self.0.fidelity, p).py_err()
    }

    fn reconstruct_cost(&self, p: f64) -> PyResult<f64> {
        decomposition::reconstruct_cost(&self.0.cost, p).py_err()
    }

    /// `(alpha, kappa, residual)`.
    fn fit_fidelity(&self) -> PyResult<(f64, f64, f64)> {
        let f = closedform::fit_fidelity(&self.0.fidelity).py_err()?;
        Ok((f.alpha, f.kappa, f.residual))
    }

    /// `(alpha, alpha_tilde, chi, residual)`.
    fn fit_cost(&self) -> PyResult<(f64, f64, f64, f64)> {
        let f = closedform::fit_cost(&self.0.cost).py_err()?;
        Ok((f.alpha, f.alpha_tilde, f.chi, f.residual))
    }
}

#[pyfunction]
#[pyo3(signature = (instance, angles, noise, budget_per_m=2000, seed=0))]
fn mlevel_curves(
    instance: &PyIsingInstance,
    angles: &PyAngleSchedule,
    noise: &PyNoiseModel,
    budget_per_m: u64,
    seed: u64,
) -> PyResult<PyMLevelCurves> {
    decomposition::mlevel_curves(&instance.0, &angles.0, &noise.0, budget_per_m, seed)
        .py_err()
        .map(PyMLevelCurves)
}

/// Fits `f_m = 1 + α(κ^{-m} - 1)`; returns `(alpha, kappa, residual)`.
#[pyfunction]
fn fit_fidelity_points(ms: Vec<f64>, values: Vec<f64>) -> PyResult<(f64, f64, f64)> {
    let f = closedform::fit_fidelity_points(&ms, &values, None, &FitOptions::default()).py_err()?;
    Ok((f.alpha, f.kappa, f.residual))
}

/// Fits `c_m = α + α̃ χ^{-m}`; returns `(alpha, alpha_tilde, chi, residual)`.
#[pyfunction]
fn fit_cost_points(ms: Vec<f64>, values: Vec<f64>) -> PyResult<(f64, f64, f64, f64)> {
    let f = closedform::fit_cost_points(&ms, &values, None, &FitOptions::default()).py_err()?;
    Ok((f.alpha, f.alpha_tilde, f.chi, f.residual))
}

fn fidelity_fit(alpha: f64, kappa: f64) -> FidelityFit {
    FidelityFit { alpha, kappa, residual: 0.0 }
}

fn cost_fit(alpha: f64, alpha_tilde: f64, chi: f64) -> CostFit {
    CostFit { alpha, alpha_tilde, chi, residual: 0.0 }
}

#[pyfunction]
fn model_fidelity(alpha: f64, kappa: f64, n_slots: usize, p: f64) -> f64 {
    closedform::model_fidelity(&fidelity_fit(alpha, kappa), n_slots, p)
}

#[pyfunction]
fn model_cost(alpha: f64, alpha_tilde: f64, chi: f64, n_slots: usize, p: f64) -> f64 {
    closedform::model_cost(&cost_fit(alpha, alpha_tilde, chi), n_slots, p)
}

#[pyfunction]
fn delta_exponent(alpha: f64, kappa: f64) -> f64 {
    closedform::delta_exponent(&fidelity_fit(alpha, kappa))
}

#[pyfunction]
fn eta_exponent(alpha: f64, alpha_tilde: f64, chi: f64) -> PyResult<f64> {
    closedform::eta_exponent(&cost_fit(alpha, alpha_tilde, chi)).py_err()
}

/// Multi-restart optimisation; returns `(angles, best_cost, restart_costs)`.
#[pyfunction]
#[pyo3(signature = (instance, depth, noise=None, restarts=20, seed=0))]
fn optimize_angles(
    py: Python<'_>,
    instance: &PyIsingInstance,
    depth: usize,
    noise: Option<&PyNoiseModel>,
    restarts: usize,
    seed: u64,
) -> PyResult<(PyAngleSchedule, f64, Vec<f64>)> {
    let noise = noise.map(|n| n.0.clone());
    let inst = instance.0.clone();
    let report = py
        .detach(move || optimize::optimize_angles(&inst, depth, noise.as_ref(), restarts, seed))
        .py_err()?;
    Ok((PyAngleSchedule(report.best_angles), report.best_cost, report.restart_costs))
}

/// Cost/fidelity table over depths and noise rates.
#[pyclass(name = "SweepTable", module = "qaoa_noise_py", frozen)]
struct PySweepTable(tradeoff::SweepTable);

#[pymethods]
impl PySweepTable {
    /// `(d, p, cost_exact, fidelity_exact)` tuples sorted by `(d, p)`.
    fn rows(&self) -> Vec<(usize, f64, f64, f64)> {
        self.0
            .rows
            .iter()
            .map(|r| (r.d, r.p, r.cost_exact, r.fidelity_exact))
            .collect()
    }

    /// Noise rates where the cost curves of two depths cross.
    fn crossings(&self, d_a: usize, d_b: usize) -> PyResult<Vec<f64>> {
        tradeoff::find_crossings(&self.0, d_a, d_b).py_err()
    }

    fn to_csv(&self) -> PyResult<String> {
        let mut buf = Vec::new();
        self.0.write_csv(&mut buf).py_err()?;
        String::from_utf8(buf).map_err(|e| PyRuntimeError::new_err(e.to_string()))
    }
}

#[pyfunction]
fn sweep(
    py: Python<'_>,
    instance: &PyIsingInstance,
    p_grid: Vec<f64>,
    noise: &PyNoiseModel,
    angles: BTreeMap<usize, PyRef<'_, PyAngleSchedule>>,
) -> PyResult<PySweepTable> {
    let depths: Vec<usize> = angles.keys().copied().collect();
    let angles: BTreeMap<usize, engine::AngleSchedule> = angles.iter().map(|(d, a)| (*d, a.0.clone())).collect();
    let (inst, noise) = (instance.0.clone(), noise.0.clone());
    py.detach(move || tradeoff::sweep(&inst, &depths, &p_grid, &noise, &angles, &BTreeMap::new()))
        .py_err()
        .map(PySweepTable)
}

#[pymodule]
fn qaoa_noise_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyIsingInstance>()?;
    m.add_class::<PyNoiseModel>()?;
    m.add_class::<PyAngleSchedule>()?;
    m.add_class::<PyMLevelCurves>()?;
    m.add_class::<PySweepTable>()?;
    m.add_function(wrap_pyfunction!(expected_cost, m)?)?;
    m.add_function(wrap_pyfunction!(noisy_cost_fidelity, m)?)?;
    m.add_function(wrap_pyfunction!(decomposition_trace_distance, m)?)?;
    m.add_function(wrap_pyfunction!(monte_carlo, m)?)?;
    m.add_function(wrap_pyfunction!(mlevel_curves, m)?)?;
    m.add_function(wrap_pyfunction!(fit_fidelity_points, m)?)?;
    m.add_function(wrap_pyfunction!(fit_cost_points, m)?)?;
    m.add_function(wrap_pyfunction!(model_fidelity, m)?)?;
    m.add_function(wrap_pyfunction!(model_cost, m)?)?;
    m.add_function(wrap_pyfunction!(delta_exponent, m)?)?;
    m.add_function(wrap_pyfunction!(eta_exponent, m)?)?;
    m.add_function(wrap_pyfunction!(optimize_angles, m)?)?;
    m.add_function(wrap_pyfunction!(sweep, m)?)?;
    Ok(())
}
