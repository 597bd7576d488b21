//! Python bindings: operators, joint spectral radius bounds, exponent
//! estimates for symbol-indexed cocycles, and the config-driven pipeline.

use cocycle_lab::base::{BaseSystem, ShiftSpace};
use cocycle_lab::cocycle::CocycleGenerator;
use cocycle_lab::exponents::{estimate_exponents, MeasureSampler};
use cocycle_lab::harness::{run_plan, ExperimentConfig, Plan};
use cocycle_lab::linalg::{invert, op_norm, spectral_radius, NormKind};
use cocycle_lab::spectral::{branch_and_bound_with, exhaustive_bounds_with, RadiusBounds, DEFAULT_PRODUCT_BUDGET};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse_norm(name: &str) -> PyResult<NormKind> {
    match name {
        "l2" | "l2_induced" => Ok(NormKind::L2Induced),
        "l1" | "l1_induced" => Ok(NormKind::L1Induced),
        "linf" | "linf_induced" => Ok(NormKind::LinfInduced),
        _ => Err(PyValueError::new_err(format!("unknown norm {name:?}; expected l2, l1 or linf"))),
    }
}

/// JSON text → Python object via the stdlib parser.
fn json_to_py<'py>(py: Python<'py>, text: &str) -> PyResult<Bound<'py, PyAny>> {
    py.import("json")?.call_method1("loads", (text,))
}

/// A square real matrix.
#[pyclass(name = "Operator", module = "cocycle_lab_py", frozen)]
struct PyOperator {
    inner: cocycle_lab::linalg::Operator,
}

#[pymethods]
impl PyOperator {
    #[new]
    fn new(rows: Vec<Vec<f64>>) -> PyResult<Self> {
        let inner = cocycle_lab::linalg::Operator::from_rows(&rows).map_err(value_err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn identity(dim: usize) -> Self {
        Self {
            inner: cocycle_lab::linalg::Operator::identity(dim),
        }
    }

    #[staticmethod]
    fn diag(values: Vec<f64>) -> PyResult<Self> {
        if values.is_empty() {
            return Err(PyValueError::new_err("diag needs at least one value"));
        }
        Ok(Self {
            inner: cocycle_lab::linalg::Operator::diag(&values),
        })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn rows(&self) -> Vec<Vec<f64>> {
        self.inner.rows()
    }

    fn matmul(&self, other: PyRef<'_, PyOperator>) -> PyResult<Self> {
        if other.inner.dim() != self.inner.dim() {
            return Err(PyValueError::new_err("dimension mismatch"));
        }
        Ok(Self {
            inner: self.inner.matmul(&other.inner),
        })
    }

    fn __matmul__(&self, other: PyRef<'_, PyOperator>) -> PyResult<Self> {
        self.matmul(other)
    }

    fn apply(&self, v: Vec<f64>) -> PyResult<Vec<f64>> {
        if v.len() != self.inner.dim() {
            return Err(PyValueError::new_err("vector length does not match dimension"));
        }
        Ok(self.inner.apply(&v))
    }

    #[pyo3(signature = (kind = "l2"))]
    fn norm(&self, kind: &str) -> PyResult<f64> {
        Ok(op_norm(&self.inner, parse_norm(kind)?))
    }

    fn spectral_radius(&self) -> f64 {
        spectral_radius(&self.inner)
    }

    fn inverse(&self) -> PyResult<Self> {
        Ok(Self {
            inner: invert(&self.inner).map_err(value_err)?,
        })
    }

    fn __repr__(&self) -> String {
        format!("Operator({:?})", self.inner.rows())
    }
}

fn unwrap_ops(ops: &[PyRef<'_, PyOperator>]) -> Vec<cocycle_lab::linalg::Operator> {
    ops.iter().map(|o| o.inner.clone()).collect()
}

fn bounds_to_py<'py>(py: Python<'py>, b: &RadiusBounds) -> PyResult<Bound<'py, PyAny>> {
    json_to_py(py, &serde_json::to_string(b).map_err(value_err)?)
}

/// Bounds on the joint spectral radius from every product up to `depth`.
#[pyfunction]
#[pyo3(signature = (ops, depth, norm = "l2", budget = DEFAULT_PRODUCT_BUDGET))]
fn jsr_exhaustive<'py>(
    py: Python<'py>,
    ops: Vec<PyRef<'py, PyOperator>>,
    depth: usize,
    norm: &str,
    budget: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let ops = unwrap_ops(&ops);
    let norm = parse_norm(norm)?;
    let b = py
        .detach(|| exhaustive_bounds_with(&ops, depth, norm, budget))
        .map_err(value_err)?;
    bounds_to_py(py, &b)
}

/// Joint spectral radius bounds, refined until `upper − lower ≤ target_gap`.
#[pyfunction]
#[pyo3(signature = (ops, target_gap = 1e-3, max_depth = 30, norm = "l2", frontier_budget = DEFAULT_PRODUCT_BUDGET))]
fn jsr_branch_and_bound<'py>(
    py: Python<'py>,
    ops: Vec<PyRef<'py, PyOperator>>,
    target_gap: f64,
    max_depth: usize,
    norm: &str,
    frontier_budget: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let ops = unwrap_ops(&ops);
    let norm = parse_norm(norm)?;
    let b = py
        .detach(|| branch_and_bound_with(&ops, target_gap, max_depth, norm, frontier_budget))
        .map_err(value_err)?;
    bounds_to_py(py, &b)
}

/// `(λ̂, χ̂)` with standard errors for the cocycle `x ↦ ops[x₀]` over the
/// Bernoulli shift with the given symbol probabilities.
#[pyfunction]
#[pyo3(signature = (ops, probabilities, n, replicas, seed = 0))]
fn estimate_symbolic<'py>(
    py: Python<'py>,
    ops: Vec<PyRef<'py, PyOperator>>,
    probabilities: Vec<f64>,
    n: usize,
    replicas: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let ops = unwrap_ops(&ops);
    if probabilities.len() != ops.len() {
        return Err(PyValueError::new_err("need one probability per operator"));
    }
    let report = py
        .detach(|| {
            let shift = ShiftSpace::full(ops.len())?;
            let gen = CocycleGenerator::from_symbol_ops(&shift, &ops)?;
            let sampler = MeasureSampler::bernoulli(probabilities, seed)?;
            estimate_exponents(&gen, &BaseSystem::Shift(shift), &sampler, n, replicas)
        })
        .map_err(value_err)?;
    let out = PyDict::new(py);
    out.set_item("lambda_hat", report.upper.value)?;
    out.set_item("lambda_stderr", report.upper.stderr)?;
    out.set_item("chi_hat", report.lower.value)?;
    out.set_item("chi_stderr", report.lower.stderr)?;
    Ok(out.into_any())
}

fn parse_config(text: &str) -> PyResult<ExperimentConfig> {
    let cfg = ExperimentConfig::from_json(text).map_err(value_err)?;
    cfg.validate().map_err(value_err)?;
    Ok(cfg)
}

/// Parse and validate a JSON experiment config; raises `ValueError`.
#[pyfunction]
fn validate_config(text: &str) -> PyResult<()> {
    parse_config(text).map(|_| ())
}

/// Run the pipeline on a JSON config, writing artifacts to its output
/// directory (or `output_dir`), and return the result bundle.
#[pyfunction]
#[pyo3(signature = (text, plan = "full", output_dir = None))]
fn run_config<'py>(
    py: Python<'py>,
    text: &str,
    plan: &str,
    output_dir: Option<std::path::PathBuf>,
) -> PyResult<Bound<'py, PyAny>> {
    let mut cfg = parse_config(text)?;
    if let Some(dir) = output_dir {
        cfg.output_dir = dir;
    }
    let plan = match plan {
        "full" | "run" => Plan::Full,
        "estimate" => Plan::Estimate,
        "periodic" => Plan::Periodic,
        "jsr" => Plan::Jsr,
        "lyapnorm" => Plan::LyapNorm,
        _ => return Err(PyValueError::new_err(format!("unknown plan {plan:?}"))),
    };
    let bundle = py.detach(|| run_plan(&cfg, plan)).map_err(|e| match e.exit_code() {
        1 => value_err(e),
        _ => PyRuntimeError::new_err(e.to_string()),
    })?;
    json_to_py(py, &serde_json::to_string(&bundle).map_err(value_err)?)
}

#[pymodule]
fn cocycle_lab_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyOperator>()?;
    m.add_function(wrap_pyfunction!(jsr_exhaustive, m)?)?;
    m.add_function(wrap_pyfunction!(jsr_branch_and_bound, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_symbolic, m)?)?;
    m.add_function(wrap_pyfunction!(validate_config, m)?)?;
    m.add_function(wrap_pyfunction!(run_config, m)?)?;
    Ok(())
}
