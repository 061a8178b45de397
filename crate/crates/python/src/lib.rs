//! Python bindings: datasets, training, inference and the analysis helpers.

use std::path::PathBuf;

use gammanet::analysis::{louvain, peak_regression, svd_analyze, WeightedGraph};
use gammanet::cli::RunConfig;
use gammanet::data::{
    load_dataset, split, synth_dataset, window_anchors, SplitName, SplitRanges, TrafficDataset,
};
use gammanet::model::{load_checkpoint, save_checkpoint, CheckpointMeta, ModelConfig};
use gammanet::train::{evaluate, metrics, train, EvalReport, Predictor, TrainConfig};
use gammanet::{Error, ParamStore};
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io(_) | Error::MissingFile(_) => PyIOError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn split_name(s: &str) -> PyResult<SplitName> {
    match s {
        "train" => Ok(SplitName::Train),
        "val" => Ok(SplitName::Val),
        "test" => Ok(SplitName::Test),
        _ => Err(PyValueError::new_err(format!("unknown split {s:?}, expected train|val|test"))),
    }
}

fn parse_json<T: serde::de::DeserializeOwned + Default>(s: Option<&str>) -> PyResult<T> {
    match s {
        None => Ok(T::default()),
        Some(js) => serde_json::from_str(js).map_err(|e| PyValueError::new_err(e.to_string())),
    }
}

/// Traffic readings `[steps × nodes]` with calendar indices and a road graph.
#[pyclass(name = "Dataset", unsendable)]
struct PyDataset {
    inner: TrafficDataset,
}

#[pymethods]
impl PyDataset {
    #[staticmethod]
    #[pyo3(signature = (nodes, days, seed = 0))]
    fn synth(nodes: usize, days: usize, seed: u64) -> PyResult<Self> {
        Ok(Self {
            inner: synth_dataset(nodes, days, seed).map_err(to_py)?,
        })
    }

    #[staticmethod]
    fn load(dir: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: load_dataset(&dir).map_err(to_py)?,
        })
    }

    fn save(&self, dir: PathBuf) -> PyResult<()> {
        self.inner.save(&dir).map_err(to_py)
    }

    #[getter]
    fn num_nodes(&self) -> usize {
        self.inner.num_nodes()
    }

    #[getter]
    fn num_steps(&self) -> usize {
        self.inner.num_steps
    }

    #[getter]
    fn steps_per_day(&self) -> usize {
        self.inner.steps_per_day()
    }

    /// Undirected road links `(u, v)` with `u < v`.
    fn links(&self) -> Vec<(usize, usize)> {
        self.inner.topology.links()
    }

    fn series(&self, node: usize) -> PyResult<Vec<f64>> {
        if node >= self.inner.num_nodes() {
            return Err(PyValueError::new_err(format!(
                "node {node} out of range for {} nodes",
                self.inner.num_nodes()
            )));
        }
        Ok(self.inner.series(node))
    }

    /// Anchors of every input/target window in a split.
    #[pyo3(signature = (split_name_, t_in = 12, t_out = 12, ratios = (0.7, 0.1, 0.2)))]
    fn windows(&self, split_name_: &str, t_in: usize, t_out: usize, ratios: (f64, f64, f64)) -> PyResult<Vec<usize>> {
        let s = split(self.inner.num_steps, ratios).map_err(to_py)?;
        window_anchors(&s.get(split_name(split_name_)?), t_in, t_out).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!(
            "Dataset(nodes={}, steps={}, interval={}min)",
            self.inner.num_nodes(),
            self.inner.num_steps,
            self.inner.interval_minutes
        )
    }
}

fn report_dict<'py>(py: Python<'py>, r: &EvalReport) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("split", &r.split)?;
    d.set_item("num_windows", r.num_windows)?;
    let hz = PyDict::new(py);
    for (k, m) in &r.horizons {
        hz.set_item(k.parse::<usize>().unwrap_or(0), (m.mae, m.rmse, m.mape))?;
    }
    d.set_item("horizons", hz)?;
    d.set_item("average", (r.average.mae, r.average.rmse, r.average.mape))?;
    Ok(d)
}

/// Trained weights plus everything needed to reuse them.
#[pyclass(name = "Model", unsendable)]
struct PyModel {
    store: ParamStore,
    meta: CheckpointMeta,
    ratios: [f64; 3],
    /// `(epoch, train_loss, val_mae)` per epoch; empty for loaded models.
    #[pyo3(get)]
    history: Vec<(usize, f64, f64)>,
}

impl PyModel {
    fn splits(&self, ds: &TrafficDataset) -> PyResult<SplitRanges> {
        let r = self.ratios;
        split(ds.num_steps, (r[0], r[1], r[2])).map_err(to_py)
    }

    fn check(&self, ds: &TrafficDataset) -> PyResult<()> {
        if ds.num_nodes() != self.meta.num_nodes {
            return Err(PyValueError::new_err(format!(
                "model expects {} nodes, dataset has {}",
                self.meta.num_nodes,
                ds.num_nodes()
            )));
        }
        Ok(())
    }
}

#[pymethods]
impl PyModel {
    /// Trains on `ds`; configs are JSON objects with any subset of fields.
    #[staticmethod]
    #[pyo3(signature = (ds, model_config = None, train_config = None, ratios = (0.7, 0.1, 0.2)))]
    fn train(
        ds: &PyDataset,
        model_config: Option<&str>,
        train_config: Option<&str>,
        ratios: (f64, f64, f64),
    ) -> PyResult<Self> {
        let mc: ModelConfig = parse_json(model_config)?;
        let tc: TrainConfig = parse_json(train_config)?;
        let splits = split(ds.inner.num_steps, ratios).map_err(to_py)?;
        let out = train(&ds.inner, &splits, &mc, &tc).map_err(to_py)?;
        Ok(Self {
            store: out.best,
            meta: out.meta,
            ratios: [ratios.0, ratios.1, ratios.2],
            history: out.history.iter().map(|r| (r.epoch, r.train_loss, r.val_mae)).collect(),
        })
    }

    #[staticmethod]
    fn load(dir: PathBuf) -> PyResult<Self> {
        let (store, meta) = load_checkpoint(&dir).map_err(to_py)?;
        let rc = dir.join(gammanet::cli::RUN_CONFIG_FILE);
        let ratios = if rc.exists() {
            RunConfig::from_file(&rc).map_err(to_py)?.data.split_ratios
        } else {
            RunConfig::default().data.split_ratios
        };
        Ok(Self {
            store,
            meta,
            ratios,
            history: Vec::new(),
        })
    }

    fn save(&self, dir: PathBuf) -> PyResult<()> {
        save_checkpoint(&dir, &self.store, &self.meta).map_err(to_py)?;
        let mut rc = RunConfig {
            model: self.meta.model.clone(),
            ..Default::default()
        };
        rc.data.split_ratios = self.ratios;
        rc.write(&dir.join(gammanet::cli::RUN_CONFIG_FILE)).map_err(to_py)
    }

    #[getter]
    fn config(&self) -> PyResult<String> {
        serde_json::to_string(&self.meta.model).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    #[getter]
    fn num_parameters(&self) -> usize {
        self.store.iter().map(|(_, t)| t.len()).sum()
    }

    /// Raw-scale forecasts indexed `[window][node][horizon]`.
    fn predict(&self, ds: &PyDataset, anchors: Vec<usize>) -> PyResult<Vec<Vec<Vec<f64>>>> {
        self.check(&ds.inner)?;
        let (t_in, t_out) = (self.meta.model.t_in, self.meta.model.t_out);
        if let Some(&a) = anchors.iter().find(|&&a| a + t_in + t_out > ds.inner.num_steps) {
            return Err(PyValueError::new_err(format!("window at {a} runs past the end of the data")));
        }
        let p = Predictor {
            store: &self.store,
            cfg: &self.meta.model,
            norm: self.meta.norm,
        };
        let flat = p.predict(&ds.inner, &anchors).map_err(to_py)?;
        let n = ds.inner.num_nodes();
        Ok(flat
            .chunks(n * t_out)
            .map(|w| w.chunks(t_out).map(<[f64]>::to_vec).collect())
            .collect())
    }

    /// Per-horizon `(mae, rmse, mape)` on one split.
    #[pyo3(signature = (ds, split = "test"))]
    fn evaluate<'py>(&self, py: Python<'py>, ds: &PyDataset, split: &str) -> PyResult<Bound<'py, PyDict>> {
        self.check(&ds.inner)?;
        let range = self.splits(&ds.inner)?.get(split_name(split)?);
        let r = evaluate(&self.store, &self.meta, &ds.inner, split, range).map_err(to_py)?;
        report_dict(py, &r)
    }
}

/// Masked `(mae, rmse, mape)`; zero targets are treated as missing.
#[pyfunction]
fn masked_metrics(y_hat: Vec<f64>, y: Vec<f64>) -> PyResult<(f64, f64, f64)> {
    if y_hat.len() != y.len() {
        return Err(PyValueError::new_err("length mismatch"));
    }
    let mask: Vec<bool> = y.iter().map(|v| *v != 0.0).collect();
    let m = metrics(&y_hat, &y, &mask).map_err(to_py)?;
    Ok((m.mae, m.rmse, m.mape))
}

/// Singular values (descending) and whether all are below 1.
#[pyfunction]
fn singular_values(matrix: Vec<Vec<f64>>) -> PyResult<(Vec<f64>, bool)> {
    let rows = matrix.len();
    let cols = matrix.first().map_or(0, Vec::len);
    if matrix.iter().any(|r| r.len() != cols) {
        return Err(PyValueError::new_err("ragged matrix"));
    }
    let flat: Vec<f64> = matrix.into_iter().flatten().collect();
    svd_analyze(&flat, rows, cols).map_err(to_py)
}

/// Louvain communities of a symmetric weighted adjacency matrix.
/// Returns `(community per node, modularity)`.
#[pyfunction]
#[pyo3(signature = (adjacency, threshold = 0.0))]
fn communities(adjacency: Vec<Vec<f64>>, threshold: f64) -> PyResult<(Vec<usize>, f64)> {
    let n = adjacency.len();
    let mut g = WeightedGraph::new(n);
    for (u, row) in adjacency.iter().enumerate() {
        if row.len() != n {
            return Err(PyValueError::new_err("adjacency must be square"));
        }
        for (v, &w) in row.iter().enumerate().skip(u + 1) {
            if w > threshold {
                g.add_edge(u, v, w);
            }
        }
    }
    let r = louvain(&g, threshold);
    Ok((r.community, r.modularity))
}

/// OLS of predicted on true block maxima: `(slope, intercept, r2, pairs)`.
#[pyfunction]
#[pyo3(signature = (truth, pred, window = 12))]
fn peak_fit(truth: Vec<f64>, pred: Vec<f64>, window: usize) -> PyResult<(f64, f64, f64, usize)> {
    let f = peak_regression(&truth, &pred, window).map_err(to_py)?;
    Ok((f.slope, f.intercept, f.r2, f.pairs.len()))
}

#[pymodule]
fn gammanet_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDataset>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(masked_metrics, m)?)?;
    m.add_function(wrap_pyfunction!(singular_values, m)?)?;
    m.add_function(wrap_pyfunction!(communities, m)?)?;
    m.add_function(wrap_pyfunction!(peak_fit, m)?)?;
    Ok(())
}
