//! Python bindings: config derivation, the dynamic spanner, trace
//! generators and the oracle suite.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use dynspanner::harness::{dump_state, replay, RunOptions};
use dynspanner::oracle::{exact_stretch, verify_spanner};
use dynspanner::spanner::OpOutcome;
use dynspanner::workload::{gen_churn, gen_clustered, gen_uniform, parse_trace, render_trace, Placement};
use dynspanner::{ConfigFile, Mode, Overrides, PointId};

fn py_err(e: dynspanner::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn json_to_py<'py>(py: Python<'py>, text: &str) -> PyResult<Bound<'py, PyAny>> {
    py.import("json")?.call_method1("loads", (text,))
}

#[pyclass(name = "Config", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyConfig(dynspanner::Config);

#[pymethods]
impl PyConfig {
    #[new]
    #[pyo3(signature = (dim, eps, r=2.0, mode="practical", c=None, k=None, lambda_=None, c_phi=None, eps_prime=None))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        dim: usize,
        eps: f64,
        r: f64,
        mode: &str,
        c: Option<f64>,
        k: Option<usize>,
        lambda_: Option<f64>,
        c_phi: Option<f64>,
        eps_prime: Option<f64>,
    ) -> PyResult<Self> {
        let mode = match mode {
            "practical" => Mode::Practical,
            "theory" => Mode::Theory,
            other => return Err(PyValueError::new_err(format!("unknown mode {other:?}"))),
        };
        let overrides = Overrides {
            c,
            k,
            lambda: lambda_,
            c_phi,
            eps_prime,
        };
        dynspanner::derive_config(dim, eps, r, mode, &overrides)
            .map(PyConfig)
            .map_err(py_err)
    }

    /// The small-instance practical configuration.
    #[staticmethod]
    fn desk(dim: usize) -> Self {
        PyConfig(dynspanner::Config::desk_default(dim))
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        ConfigFile::from_json(text)
            .and_then(|f| f.derive())
            .map(PyConfig)
            .map_err(py_err)
    }

    fn to_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        json_to_py(py, &serde_json::to_string(&self.0).expect("config serializes"))
    }

    #[getter]
    fn dim(&self) -> usize {
        self.0.dim
    }

    #[getter]
    fn eps(&self) -> f64 {
        self.0.eps
    }

    #[getter]
    fn eps_target(&self) -> f64 {
        self.0.eps_target
    }

    #[getter]
    fn eps_prime(&self) -> f64 {
        self.0.eps_prime
    }

    #[getter]
    fn k(&self) -> usize {
        self.0.k
    }

    #[getter]
    fn d_max(&self) -> f64 {
        self.0.d_max
    }

    fn __repr__(&self) -> String {
        format!(
            "Config(dim={}, eps_target={}, eps={:.6}, k={}, lambda={})",
            self.0.dim, self.0.eps_target, self.0.eps, self.0.k, self.0.lambda
        )
    }
}

fn outcome_dict<'py>(py: Python<'py>, o: &OpOutcome) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("kind", o.kind.to_string())?;
    d.set_item("point", o.point.0)?;
    d.set_item("cluster_changes", o.cluster_changes)?;
    d.set_item("sparse_edge_events", o.sparse_edge_events)?;
    d.set_item("light_edge_events", o.light_edge_events)?;
    d.set_item("light_membership_ops", o.light_membership_ops)?;
    d.set_item("maintenance_iterations", o.maintenance_iterations)?;
    d.set_item("converged", o.converged)?;
    Ok(d)
}

#[pyclass(name = "DynamicSpanner")]
struct PySpanner(dynspanner::DynamicSpanner);

#[pymethods]
impl PySpanner {
    #[new]
    fn new(config: &PyConfig) -> Self {
        PySpanner(dynspanner::DynamicSpanner::new(config.0.clone()))
    }

    /// Replays a trace in the text format and returns the final spanner.
    #[staticmethod]
    fn from_trace(text: &str, config: &PyConfig) -> PyResult<Self> {
        let trace = parse_trace(text).map_err(py_err)?;
        let opts = RunOptions {
            verify_every: 0,
            verify_final: false,
            track_aspect_ratio: false,
            ..RunOptions::default()
        };
        replay(&trace, &config.0, opts)
            .map(|o| PySpanner(o.spanner))
            .map_err(py_err)
    }

    fn insert<'py>(&mut self, py: Python<'py>, coords: Vec<f64>) -> PyResult<Bound<'py, PyDict>> {
        let o = self.0.insert(coords).map_err(py_err)?;
        outcome_dict(py, &o)
    }

    fn delete<'py>(&mut self, py: Python<'py>, point: u64) -> PyResult<Bound<'py, PyDict>> {
        let o = self.0.delete(PointId(point)).map_err(py_err)?;
        outcome_dict(py, &o)
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn points(&self) -> Vec<(u64, Vec<f64>)> {
        let pts = self.0.points();
        pts.alive().map(|p| (p.0, pts.coords(p).to_vec())).collect()
    }

    fn light_edges(&self) -> Vec<(u64, u64)> {
        self.0.light_edges().into_iter().map(|k| (k.0 .0, k.1 .0)).collect()
    }

    fn s1_edges(&self) -> Vec<(u64, u64)> {
        self.0.s1_edges().into_iter().map(|k| (k.0 .0, k.1 .0)).collect()
    }

    fn light_weight(&self) -> f64 {
        self.0.light().weight()
    }

    fn max_stretch(&self) -> f64 {
        exact_stretch(self.0.points(), &self.0.light_edges()).max
    }

    /// Full oracle suite; returns the report as a dict.
    fn verify<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let report = verify_spanner(&self.0, 0);
        json_to_py(py, &serde_json::to_string(&report).expect("report serializes"))
    }

    fn is_clean(&self) -> bool {
        verify_spanner(&self.0, 0).is_clean(self.0.config())
    }

    fn dump_state(&self) -> String {
        dump_state(&self.0)
    }
}

#[pyfunction]
#[pyo3(signature = (n, dim=2, seed=1, lo=0.0, hi=100.0))]
fn uniform_trace(n: usize, dim: usize, seed: u64, lo: f64, hi: f64) -> String {
    render_trace(&gen_uniform(n, dim, seed, lo, hi))
}

#[pyfunction]
#[pyo3(signature = (n, dim=2, seed=1, clusters=4, spread=1.0))]
fn clustered_trace(n: usize, dim: usize, seed: u64, clusters: usize, spread: f64) -> String {
    render_trace(&gen_clustered(n, dim, seed, clusters, spread))
}

#[pyfunction]
#[pyo3(signature = (n_base, n_ops, dim=2, seed=1, delete_fraction=0.3, placement="uniform", log2_span=16.0, clusters=8))]
#[allow(clippy::too_many_arguments)]
fn churn_trace(
    n_base: usize,
    n_ops: usize,
    dim: usize,
    seed: u64,
    delete_fraction: f64,
    placement: &str,
    log2_span: f64,
    clusters: usize,
) -> PyResult<String> {
    let placement = match placement {
        "uniform" => Placement::Uniform { lo: 0.0, hi: 100.0 },
        "clustered" => Placement::Clustered { clusters, spread: 1.0 },
        "multiscale" => Placement::Multiscale { log2_span },
        "expclusters" => Placement::ExpClusters { clusters, log2_span },
        other => return Err(PyValueError::new_err(format!("unknown placement {other:?}"))),
    };
    gen_churn(n_base, n_ops, dim, seed, delete_fraction, placement)
        .map(|t| render_trace(&t))
        .map_err(py_err)
}

#[pymodule]
fn dynspanner_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyConfig>()?;
    m.add_class::<PySpanner>()?;
    m.add_function(wrap_pyfunction!(uniform_trace, m)?)?;
    m.add_function(wrap_pyfunction!(clustered_trace, m)?)?;
    m.add_function(wrap_pyfunction!(churn_trace, m)?)?;
    Ok(())
}
