use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use tokenflow::fairness::FairnessReport;
use tokenflow::graph::{circulant_clique, cycle, hypercube, random_regular, torus};
use tokenflow::harness::{self, ExperimentConfig, GraphSpec, ReproId, Series};
use tokenflow::{
    augment, eigen_gap, transition_matrix, BalancerKind, Error, LoadVector, RegularGraph,
};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyOSError::new_err(e.to_string()),
        Error::InvalidParameter(_)
        | Error::Config(_)
        | Error::Usage(_)
        | Error::Parse { .. }
        | Error::Range { .. }
        | Error::Precondition(_)
        | Error::InfeasibleBalancer(_) => PyValueError::new_err(e.to_string()),
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

/// A connected simple d-regular graph.
#[pyclass(name = "Graph", module = "tokenflow_py", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyGraph {
    inner: RegularGraph,
}

#[pymethods]
impl PyGraph {
    /// Builds a graph from a spec such as `cycle:16` or `random:64:4:1`.
    #[new]
    fn new(spec: &str) -> PyResult<Self> {
        let spec: GraphSpec = spec.parse().map_err(to_py)?;
        let (inner, _) = spec.build().map_err(to_py)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn cycle(n: usize) -> PyResult<Self> {
        cycle(n).map(|inner| Self { inner }).map_err(to_py)
    }

    #[staticmethod]
    fn torus(side: usize, dim: usize) -> PyResult<Self> {
        torus(side, dim).map(|inner| Self { inner }).map_err(to_py)
    }

    #[staticmethod]
    fn hypercube(dim: usize) -> PyResult<Self> {
        hypercube(dim).map(|inner| Self { inner }).map_err(to_py)
    }

    #[staticmethod]
    fn random_regular(n: usize, d: usize, seed: u64) -> PyResult<Self> {
        random_regular(n, d, seed)
            .map(|inner| Self { inner })
            .map_err(to_py)
    }

    #[staticmethod]
    fn circulant_clique(n: usize, d: usize) -> PyResult<Self> {
        circulant_clique(n, d)
            .map(|inner| Self { inner })
            .map_err(to_py)
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn d(&self) -> usize {
        self.inner.d()
    }

    fn neighbors(&self, u: usize) -> PyResult<Vec<usize>> {
        if u >= self.inner.n() {
            return Err(PyValueError::new_err(format!("node {u} out of range")));
        }
        Ok(self.inner.neighbors(u).to_vec())
    }

    fn edges(&self) -> Vec<(usize, usize)> {
        self.inner.edges().collect()
    }

    fn diameter(&self) -> PyResult<usize> {
        self.inner.diameter().map_err(to_py)
    }

    fn odd_girth(&self) -> Option<usize> {
        self.inner.odd_girth()
    }

    fn is_bipartite(&self) -> bool {
        self.inner.is_bipartite()
    }

    #[pyo3(signature = (d_loops = 0))]
    fn to_text(&self, d_loops: usize) -> String {
        self.inner.to_text(d_loops)
    }

    fn __repr__(&self) -> String {
        format!("Graph(n={}, d={})", self.inner.n(), self.inner.d())
    }
}

#[pyclass(name = "Spectral", module = "tokenflow_py", frozen, get_all)]
struct PySpectral {
    n: usize,
    d: usize,
    d_loops: usize,
    lambda2: f64,
    mu: f64,
    t_mu: f64,
}

#[pymethods]
impl PySpectral {
    /// `⌈16 ln(n·K)/μ⌉` for initial discrepancy `k`.
    fn balancing_steps(&self, k: u64) -> PyResult<usize> {
        let s = tokenflow::SpectralSummary {
            n: self.n,
            d: self.d,
            d_loops: self.d_loops,
            lambda2: self.lambda2,
            mu: self.mu,
            t_mu: self.t_mu,
        };
        s.balancing_steps(k).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!(
            "Spectral(lambda2={}, mu={}, t_mu={})",
            self.lambda2, self.mu, self.t_mu
        )
    }
}

/// Eigen-gap of the walk on `graph` with `d_loops` self-loops per node.
#[pyfunction]
fn spectral(graph: &PyGraph, d_loops: usize) -> PyResult<PySpectral> {
    let s = eigen_gap(&transition_matrix(&augment(graph.inner.clone(), d_loops))).map_err(to_py)?;
    Ok(PySpectral {
        n: s.n,
        d: s.d,
        d_loops: s.d_loops,
        lambda2: s.lambda2,
        mu: s.mu,
        t_mu: s.t_mu,
    })
}

#[pyclass(name = "FairnessReport", module = "tokenflow_py", frozen, get_all)]
struct PyFairness {
    delta_observed: u128,
    round_fair: bool,
    good_s: usize,
    floor_ok: bool,
    violations: usize,
    steps: usize,
}

impl From<FairnessReport> for PyFairness {
    fn from(r: FairnessReport) -> Self {
        Self {
            delta_observed: r.delta_observed,
            round_fair: r.round_fair,
            good_s: r.good_s,
            floor_ok: r.floor_ok,
            violations: r.violation_count,
            steps: r.steps,
        }
    }
}

#[pymethods]
impl PyFairness {
    fn __repr__(&self) -> String {
        format!(
            "FairnessReport(delta_observed={}, round_fair={}, good_s={}, violations={})",
            self.delta_observed, self.round_fair, self.good_s, self.violations
        )
    }
}

/// A discrete balancer stepping a load vector on a balancing graph.
#[pyclass(name = "Simulation", module = "tokenflow_py")]
struct PySimulation {
    inner: harness::Simulation,
}

#[pymethods]
impl PySimulation {
    #[new]
    fn new(graph: &PyGraph, d_loops: usize, balancer: &str, load: Vec<u64>) -> PyResult<Self> {
        let kind: BalancerKind = balancer.parse().map_err(to_py)?;
        let rule = kind.rule().ok_or_else(|| {
            PyValueError::new_err(format!("{balancer} is not a stepwise discrete balancer"))
        })?;
        let g = augment(graph.inner.clone(), d_loops);
        let inner = harness::Simulation::new(g, rule, LoadVector(load)).map_err(to_py)?;
        Ok(Self { inner })
    }

    /// Performs one step and returns the per-port flows of every node.
    fn step(&mut self) -> PyResult<Vec<Vec<u64>>> {
        let flows = self.inner.step().map_err(to_py)?;
        Ok((0..flows.n()).map(|u| flows.row(u).to_vec()).collect())
    }

    /// Runs `steps` steps and returns the discrepancy after each.
    fn run(&mut self, steps: usize) -> PyResult<Vec<u64>> {
        let mut out = Vec::with_capacity(steps);
        self.inner
            .run(steps, |_, x| out.push(x.discrepancy()))
            .map_err(to_py)?;
        Ok(out)
    }

    #[getter]
    fn t(&self) -> usize {
        self.inner.t()
    }

    #[getter]
    fn load(&self) -> Vec<u64> {
        self.inner.load().0.clone()
    }

    fn discrepancy(&self) -> u64 {
        self.inner.load().discrepancy()
    }

    fn fairness(&self) -> PyFairness {
        self.inner.ledger().report().into()
    }
}

/// Runs a JSON experiment configuration and returns `(csv_text, summary)`.
#[pyfunction]
fn run_config(py: Python<'_>, config_json: &str) -> PyResult<(String, Py<PyAny>)> {
    let cfg = ExperimentConfig::from_json(config_json).map_err(to_py)?;
    let result = py.detach(|| harness::run(&cfg)).map_err(to_py)?;
    let mut buf = Vec::new();
    result.series.write_csv(&mut buf).map_err(to_py)?;
    let summary = pyo3::types::PyDict::new(py);
    summary.set_item("n", result.n)?;
    summary.set_item("d", result.d)?;
    summary.set_item("d_loops", result.d_loops)?;
    summary.set_item("steps", result.steps)?;
    summary.set_item("final_load", result.final_load.map(|x| x.0))?;
    summary.set_item("final_real", result.final_real)?;
    summary.set_item("fairness", result.fairness.map(PyFairness::from))?;
    summary.set_item("lambda2", result.spectral.map(|s| s.lambda2))?;
    summary.set_item("continuous", matches!(result.series, Series::Continuous(_)))?;
    Ok((
        String::from_utf8(buf).expect("csv is utf-8"),
        summary.into_any().unbind(),
    ))
}

/// Runs a canned experiment battery; returns `(passed, verdict_csv)`.
#[pyfunction]
fn reproduce(py: Python<'_>, id: &str) -> PyResult<(bool, String)> {
    let id: ReproId = id.parse().map_err(to_py)?;
    let verdict = py.detach(|| harness::reproduce(id)).map_err(to_py)?;
    let mut buf = Vec::new();
    verdict.write_csv(&mut buf).map_err(to_py)?;
    Ok((
        verdict.passed(),
        String::from_utf8(buf).expect("csv is utf-8"),
    ))
}

#[pymodule]
fn tokenflow_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGraph>()?;
    m.add_class::<PySpectral>()?;
    m.add_class::<PyFairness>()?;
    m.add_class::<PySimulation>()?;
    m.add_function(wrap_pyfunction!(spectral, m)?)?;
    m.add_function(wrap_pyfunction!(run_config, m)?)?;
    m.add_function(wrap_pyfunction!(reproduce, m)?)?;
    m.add(
        "BALANCERS",
        BalancerKind::ALL
            .iter()
            .map(|k| k.name())
            .collect::<Vec<_>>(),
    )?;
    Ok(())
}
