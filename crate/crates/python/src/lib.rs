//! Python module `ginit_py`. Reports cross the boundary as JSON and arrive
//! as plain dicts and lists.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use ginit::experiments::{self, RunConfig};
use ginit::graph::{self, normalize, Graph, Normalization};
use ginit::init::{self, InitScheme};
use ginit::linalg::{DenseMatrix, RngStream};
use ginit::model::{self, Masks, Metric, ModelConfig, ModelState};
use ginit::probes;

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn scheme(name: &str) -> PyResult<InitScheme> {
    name.parse().map_err(err)
}

fn matrix(rows: Vec<Vec<f64>>) -> PyResult<DenseMatrix> {
    DenseMatrix::from_rows(&rows).map_err(err)
}

fn to_python<'py>(py: Python<'py>, value: &impl serde::Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(err)?;
    py.import("json")?.call_method1("loads", (text,))
}

fn normalization(name: &str) -> PyResult<Normalization> {
    match name {
        "symmetric" => Ok(Normalization::Symmetric),
        "row" => Ok(Normalization::Row),
        other => Err(err(format!("unknown normalization {other:?}; use symmetric or row"))),
    }
}

/// Entry standard deviation of `scheme` for fan-in `fan`.
#[pyfunction]
fn target_std(scheme_name: &str, fan: usize) -> PyResult<f64> {
    init::target_std(scheme(scheme_name)?, fan).map_err(err)
}

/// A `rows x cols` weight drawn from stream `(seed, stream)`.
#[pyfunction]
#[pyo3(signature = (scheme_name, rows, cols, seed, stream = 0))]
fn sample_weight(scheme_name: &str, rows: usize, cols: usize, seed: u64, stream: u64) -> PyResult<Vec<Vec<f64>>> {
    let w = init::sample_weight(&mut RngStream::new(seed, stream), scheme(scheme_name)?, rows, cols).map_err(err)?;
    Ok(w.to_rows())
}

#[pyfunction]
#[pyo3(signature = (scheme_name, fan, samples = 1_000_000, seed = 0, tolerance = 0.02))]
fn init_stats<'py>(
    py: Python<'py>,
    scheme_name: &str,
    fan: usize,
    samples: usize,
    seed: u64,
    tolerance: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let r = experiments::init_stats(scheme(scheme_name)?, fan, samples, seed, tolerance).map_err(err)?;
    to_python(py, &r)
}

#[pyfunction]
#[pyo3(signature = (scheme_name, n, seed = 0))]
fn circular_law_check<'py>(py: Python<'py>, scheme_name: &str, n: usize, seed: u64) -> PyResult<Bound<'py, PyAny>> {
    let r = probes::circular_law_check(scheme(scheme_name)?, n, &mut RngStream::new(seed, experiments::STREAM_INIT))
        .map_err(err)?;
    to_python(py, &r)
}

/// Runs one experiment pipeline on a JSON run configuration.
///
/// `command` is one of probe, sweep-depth, coldstart, graphcls, spectrum.
#[pyfunction]
fn run_experiment<'py>(py: Python<'py>, command: &str, config_json: &str) -> PyResult<Bound<'py, PyAny>> {
    let cfg = RunConfig::from_json(config_json).map_err(err)?;
    match command {
        "probe" => to_python(py, &experiments::run_probe(&cfg).map_err(err)?),
        "sweep-depth" => to_python(py, &experiments::run_sweep_depth(&cfg).map_err(err)?),
        "coldstart" => to_python(py, &experiments::run_coldstart(&cfg).map_err(err)?),
        "graphcls" => to_python(py, &experiments::run_graphcls(&cfg).map_err(err)?),
        "spectrum" => to_python(py, &experiments::run_spectrum(&cfg).map_err(err)?),
        other => Err(err(format!("unknown command {other:?}"))),
    }
}

#[pyclass(name = "Graph", frozen)]
struct PyGraph {
    inner: Graph,
}

#[pymethods]
impl PyGraph {
    /// Undirected graph from `(u, v, weight)` triples.
    #[new]
    fn new(n: usize, edges: Vec<(usize, usize, f64)>) -> PyResult<Self> {
        Ok(Self {
            inner: graph::build_graph(n, &edges).map_err(err)?,
        })
    }

    /// Stochastic block model; returns `(graph, features, labels)`.
    #[staticmethod]
    #[pyo3(signature = (communities, nodes_per_community, p_in, p_out, feature_dim, feature_noise, seed = 0))]
    fn sbm(
        communities: usize,
        nodes_per_community: usize,
        p_in: f64,
        p_out: f64,
        feature_dim: usize,
        feature_noise: f64,
        seed: u64,
    ) -> PyResult<(Self, Vec<Vec<f64>>, Vec<i64>)> {
        let mut rng = RngStream::new(seed, experiments::STREAM_DATA);
        let (g, x, labels) =
            graph::sbm_generate(&mut rng, communities, nodes_per_community, p_in, p_out, feature_dim, feature_noise)
                .map_err(err)?;
        Ok((Self { inner: g }, x.to_rows(), labels))
    }

    #[staticmethod]
    fn circular_ladder(k: usize) -> PyResult<Self> {
        Ok(Self {
            inner: graph::circular_ladder(k).map_err(err)?,
        })
    }

    #[getter]
    fn num_nodes(&self) -> usize {
        self.inner.num_nodes()
    }

    #[getter]
    fn num_edges(&self) -> usize {
        self.inner.num_edges()
    }

    fn edges(&self) -> Vec<(usize, usize, f64)> {
        self.inner.edges().to_vec()
    }

    #[pyo3(signature = (variant = "symmetric"))]
    fn normalized_adjacency(&self, variant: &str) -> PyResult<Vec<Vec<f64>>> {
        let na = normalize(&self.inner, normalization(variant)?).map_err(err)?;
        Ok(na.matrix.to_dense().to_rows())
    }

    /// Smallest nonzero eigenvalue of `I - A_hat`.
    fn spectral_gap(&self) -> PyResult<f64> {
        let na = normalize(&self.inner, Normalization::Symmetric).map_err(err)?;
        graph::spectral_gap(&na).map_err(err)
    }

    fn oversmoothing_distance(&self, h: Vec<Vec<f64>>) -> PyResult<f64> {
        probes::oversmoothing_distance(&matrix(h)?, &self.inner).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!("Graph(nodes={}, edges={})", self.inner.num_nodes(), self.inner.num_edges())
    }
}

#[pyclass(name = "Model")]
struct PyModel {
    config: ModelConfig,
    state: ModelState,
    seed: u64,
}

#[pymethods]
impl PyModel {
    /// Plain GCN stack initialized from stream `(seed, STREAM_INIT)`.
    #[staticmethod]
    #[pyo3(signature = (in_dim, hidden, classes, depth, scheme_name = "g-init", seed = 0))]
    fn gcn(in_dim: usize, hidden: usize, classes: usize, depth: usize, scheme_name: &str, seed: u64) -> PyResult<Self> {
        Self::build(ModelConfig::gcn(in_dim, hidden, classes, depth, scheme(scheme_name)?), seed)
    }

    /// Model from a JSON `ModelConfig` document.
    #[staticmethod]
    #[pyo3(signature = (config_json, seed = 0))]
    fn from_json(config_json: &str, seed: u64) -> PyResult<Self> {
        Self::build(serde_json::from_str(config_json).map_err(err)?, seed)
    }

    fn config_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.config).map_err(err)
    }

    #[getter]
    fn depth(&self) -> usize {
        self.config.depth()
    }

    fn weight(&self, layer: usize) -> PyResult<Vec<Vec<f64>>> {
        let w = self.state.weights.get(layer).ok_or_else(|| err(format!("no layer {layer}")))?;
        Ok(w.to_rows())
    }

    fn forward(&mut self, graph: &PyGraph, x: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        let na = normalize(&graph.inner, Normalization::Symmetric).map_err(err)?;
        let y = self.state.forward(&self.config, &na, &matrix(x)?, None).map_err(err)?;
        Ok(y.to_rows())
    }

    /// `d_M` of every activation of the last forward pass.
    fn oversmoothing_profile(&self, graph: &PyGraph) -> PyResult<Vec<f64>> {
        probes::oversmoothing_profile(&self.state, &graph.inner).map_err(err)
    }

    /// Largest singular value of each weight.
    fn sigma_max(&self) -> PyResult<Vec<f64>> {
        Ok(probes::weight_spectrum(&self.state, 1.0)
            .map_err(err)?
            .into_iter()
            .map(|r| r.sigma_max)
            .collect())
    }

    /// Trains from a fresh initialization and keeps the final parameters.
    #[pyo3(signature = (graph, x, labels, train_mask, val_mask, test_mask, epochs = None))]
    #[allow(clippy::too_many_arguments)]
    fn train<'py>(
        &mut self,
        py: Python<'py>,
        graph: &PyGraph,
        x: Vec<Vec<f64>>,
        labels: Vec<i64>,
        train_mask: Vec<bool>,
        val_mask: Vec<bool>,
        test_mask: Vec<bool>,
        epochs: Option<usize>,
    ) -> PyResult<Bound<'py, PyAny>> {
        if let Some(e) = epochs {
            self.config.epochs = e;
        }
        let na = normalize(&graph.inner, Normalization::Symmetric).map_err(err)?;
        let masks = Masks {
            train: train_mask,
            val: val_mask,
            test: test_mask,
        };
        let rng = RngStream::new(self.seed, experiments::STREAM_INIT);
        let (report, state) =
            model::train(&self.config, &na, &matrix(x)?, None, &labels, &masks, Metric::Accuracy, &rng).map_err(err)?;
        self.state = state;
        to_python(py, &report)
    }

    fn __repr__(&self) -> String {
        format!("Model(depth={}, init={})", self.config.depth(), self.config.init)
    }
}

impl PyModel {
    fn build(config: ModelConfig, seed: u64) -> PyResult<Self> {
        config.validate().map_err(err)?;
        let state = ModelState::new(&config, &RngStream::new(seed, experiments::STREAM_INIT)).map_err(err)?;
        Ok(Self { config, state, seed })
    }
}

#[pymodule]
fn ginit_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(target_std, m)?)?;
    m.add_function(wrap_pyfunction!(sample_weight, m)?)?;
    m.add_function(wrap_pyfunction!(init_stats, m)?)?;
    m.add_function(wrap_pyfunction!(circular_law_check, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_class::<PyGraph>()?;
    m.add_class::<PyModel>()?;
    Ok(())
}
