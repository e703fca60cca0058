//! Python bindings: datasets, models, training, evaluation and the
//! numerical check suite.

use std::collections::HashMap;
use std::path::PathBuf;

use kge_core::config::TrainConfig;
use kge_core::data::{Dataset, FilterIndex, Fact};
use kge_core::evaluation::{evaluate_split, threshold_and_export, RankingReport};
use kge_core::models::{BatchExample, ModelKind, ModelParams, ParamGroup, Shape};
use kge_core::regularizers::{example_penalty, RegSpec};
use kge_core::{checkpoint, theory, training, KgeError};
use ndarray::Array2;
use pyo3::exceptions::{PyIOError, PyKeyError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn to_py(e: KgeError) -> PyErr {
    match e {
        KgeError::Io { .. } => PyIOError::new_err(e.to_string()),
        KgeError::Diverged { .. } | KgeError::Protocol(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

/// `(head, relation, tail, time)`.
type FactTuple = (u32, u32, u32, Option<u32>);

fn group(name: &str) -> PyResult<ParamGroup> {
    match name {
        "entity" => Ok(ParamGroup::Entity),
        "tail" => Ok(ParamGroup::Tail),
        "relation" => Ok(ParamGroup::Relation),
        "time" => Ok(ParamGroup::Time),
        _ => Err(PyKeyError::new_err(format!("unknown table '{name}'"))),
    }
}

fn report_dict<'py>(py: Python<'py>, r: &RankingReport) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("mrr", r.mrr)?;
    d.set_item("hits@1", r.hits1)?;
    d.set_item("hits@3", r.hits3)?;
    d.set_item("hits@10", r.hits10)?;
    d.set_item("queries", r.count)?;
    for (ty, sub) in &r.per_type {
        d.set_item(ty.name(), report_dict(py, sub)?)?;
    }
    Ok(d)
}

/// A loaded corpus with label vocabularies and train/valid/test splits.
#[pyclass(name = "Dataset", module = "dura_kge")]
struct PyDataset {
    inner: Dataset,
}

#[pymethods]
impl PyDataset {
    /// Loads `train.txt`, `valid.txt` and `test.txt` from `path`. Reciprocal
    /// facts are added to the training split unless `reciprocals` is false.
    #[staticmethod]
    #[pyo3(signature = (path, temporal = false, reciprocals = true))]
    fn load(path: PathBuf, temporal: bool, reciprocals: bool) -> PyResult<Self> {
        let mut ds = Dataset::load_dir(&path, temporal).map_err(to_py)?;
        if reciprocals {
            ds = ds.add_reciprocals().map_err(to_py)?;
        }
        Ok(Self { inner: ds })
    }

    #[getter]
    fn num_entities(&self) -> usize {
        self.inner.num_entities()
    }

    /// Relation count including reciprocal ids.
    #[getter]
    fn num_relations(&self) -> usize {
        self.inner.num_relations()
    }

    #[getter]
    fn num_timestamps(&self) -> usize {
        self.inner.num_timestamps()
    }

    #[getter]
    fn temporal(&self) -> bool {
        self.inner.temporal
    }

    fn entity_id(&self, label: &str) -> Option<u32> {
        self.inner.entities.id(label)
    }

    fn relation_id(&self, label: &str) -> Option<u32> {
        self.inner.relations.id(label)
    }

    /// Facts of one split as `(head, relation, tail, time)` tuples.
    fn facts(&self, split: &str) -> PyResult<Vec<FactTuple>> {
        Ok(split_of(&self.inner, split)?
            .iter()
            .map(|f| (f.head, f.relation, f.tail, f.time))
            .collect())
    }

    fn stats<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let s = self.inner.stats();
        let d = PyDict::new(py);
        d.set_item("entities", s.entities)?;
        d.set_item("relations", s.relations)?;
        d.set_item("timestamps", s.timestamps)?;
        d.set_item("train", s.train)?;
        d.set_item("valid", s.valid)?;
        d.set_item("test", s.test)?;
        Ok(d)
    }

    fn __repr__(&self) -> String {
        format!(
            "Dataset(entities={}, relations={}, train={})",
            self.inner.num_entities(),
            self.inner.num_relations(),
            self.inner.train.len()
        )
    }
}

fn split_of<'a>(ds: &'a Dataset, split: &str) -> PyResult<&'a [Fact]> {
    match split {
        "train" => Ok(&ds.train),
        "valid" => Ok(&ds.valid),
        "test" => Ok(&ds.test),
        _ => Err(PyValueError::new_err(format!("unknown split '{split}'"))),
    }
}

/// Embedding tables of one model.
#[pyclass(name = "Model", module = "dura_kge", skip_from_py_object)]
#[derive(Clone)]
struct PyModel {
    inner: ModelParams,
}

#[pymethods]
impl PyModel {
    /// Gaussian initialisation with standard deviation `scale`.
    #[new]
    #[pyo3(signature = (kind, dim, entities, relations, timestamps = 0, scale = 1e-3, seed = 0))]
    fn new(
        kind: &str,
        dim: usize,
        entities: usize,
        relations: usize,
        timestamps: usize,
        scale: f64,
        seed: u64,
    ) -> PyResult<Self> {
        let kind: ModelKind = kind.parse().map_err(to_py)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shape = Shape {
            entities,
            relations,
            timestamps,
        };
        let inner = ModelParams::init(kind, dim, shape, scale, &mut rng).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: checkpoint::load(&path).map_err(to_py)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        checkpoint::save(&self.inner, &path).map_err(to_py)
    }

    #[getter]
    fn kind(&self) -> &'static str {
        self.inner.kind.name()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim
    }

    /// Names of the tables this model stores.
    fn table_names(&self) -> Vec<&'static str> {
        self.inner.tables().iter().map(|(g, _)| g.name()).collect()
    }

    fn table(&self, name: &str) -> PyResult<Vec<Vec<f64>>> {
        let t = self
            .inner
            .table(group(name)?)
            .ok_or_else(|| PyKeyError::new_err(format!("model has no '{name}' table")))?;
        Ok(t.rows().into_iter().map(|r| r.to_vec()).collect())
    }

    fn set_table(&mut self, name: &str, rows: Vec<Vec<f64>>) -> PyResult<()> {
        let t = self
            .inner
            .table_mut(group(name)?)
            .ok_or_else(|| PyKeyError::new_err(format!("model has no '{name}' table")))?;
        let cols = rows.first().map_or(0, Vec::len);
        let flat: Vec<f64> = rows.into_iter().flatten().collect();
        let new = Array2::from_shape_vec((flat.len() / cols.max(1), cols), flat)
            .map_err(|e| PyValueError::new_err(e.to_string()))?;
        if new.dim() != t.dim() {
            return Err(PyValueError::new_err(format!(
                "expected shape {:?}, got {:?}",
                t.dim(),
                new.dim()
            )));
        }
        t.assign(&new);
        Ok(())
    }

    #[pyo3(signature = (head, relation, tail, time = None))]
    fn score(&self, head: u32, relation: u32, tail: u32, time: Option<u32>) -> PyResult<f64> {
        let ex = BatchExample {
            head,
            relation,
            tail,
            time,
            weight: 1.0,
        };
        self.inner.score(&ex).map_err(to_py)
    }

    /// Scores of every entity as the tail of `(head, relation, ?, time)`.
    #[pyo3(signature = (head, relation, time = None))]
    fn score_all(&self, head: u32, relation: u32, time: Option<u32>) -> PyResult<Vec<f64>> {
        self.inner.score_all_candidates(head, relation, time).map_err(to_py)
    }

    /// Penalty of one fact under regularizer `reg` with weights `lambda_`
    /// and `lambda1`..`lambda4`.
    #[pyo3(signature = (reg, head, relation, tail, time = None, lambda_ = 1.0, lambda1 = 1.0, lambda2 = 1.0, lambda3 = 1.0, lambda4 = 1.0))]
    #[allow(clippy::too_many_arguments)]
    fn penalty(
        &self,
        reg: &str,
        head: u32,
        relation: u32,
        tail: u32,
        time: Option<u32>,
        lambda_: f64,
        lambda1: f64,
        lambda2: f64,
        lambda3: f64,
        lambda4: f64,
    ) -> PyResult<f64> {
        let spec = RegSpec::new(reg.parse().map_err(to_py)?, lambda_).with_weights(lambda1, lambda2, lambda3, lambda4);
        let ex = BatchExample {
            head,
            relation,
            tail,
            time,
            weight: 1.0,
        };
        example_penalty(&spec, &self.inner, &ex, None, 0.0).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        let s = self.inner.shape();
        format!(
            "Model(kind='{}', dim={}, entities={}, relations={}, timestamps={})",
            self.inner.kind.name(),
            self.inner.dim,
            s.entities,
            s.relations,
            s.timestamps
        )
    }
}

/// Trains a model. Keyword arguments use the configuration-file keys
/// (`model`, `dim`, `batch`, `lr`, `epochs`, `reg`, `lambda`, ...).
/// Returns the best checkpoint and the per-epoch log.
#[pyfunction]
#[pyo3(signature = (dataset, **config))]
fn fit<'py>(
    py: Python<'py>,
    dataset: &PyDataset,
    config: Option<&Bound<'py, PyDict>>,
) -> PyResult<(PyModel, Bound<'py, PyList>)> {
    let mut cfg = TrainConfig::default();
    if let Some(kv) = config {
        for (k, v) in kv.iter() {
            let key: String = k.extract()?;
            let value = v.str()?.to_string();
            let value = match value.as_str() {
                "True" => "true".to_string(),
                "False" => "false".to_string(),
                _ => value,
            };
            cfg.set(&key, &value).map_err(to_py)?;
        }
    }
    let outcome = py
        .detach(|| training::fit(&dataset.inner, &cfg))
        .map_err(to_py)?;
    let log = PyList::empty(py);
    for entry in &outcome.log {
        let d = PyDict::new(py);
        d.set_item("epoch", entry.epoch)?;
        d.set_item("train_loss", entry.train_loss)?;
        if let Some(v) = &entry.valid {
            d.set_item("valid", report_dict(py, v)?)?;
        }
        log.append(d)?;
    }
    Ok((PyModel { inner: outcome.best }, log))
}

/// Filtered tail-ranking metrics of `model` on one split.
#[pyfunction]
#[pyo3(signature = (model, dataset, split = "test", by_type = false))]
fn evaluate<'py>(
    py: Python<'py>,
    model: &PyModel,
    dataset: &PyDataset,
    split: &str,
    by_type: bool,
) -> PyResult<Bound<'py, PyDict>> {
    let ds = &dataset.inner;
    let facts = split_of(ds, split)?;
    let report = py
        .detach(|| {
            let filter = FilterIndex::build(ds)?;
            let types = by_type.then(|| kge_core::data::classify_relations(&ds.train, ds.num_raw_relations()));
            evaluate_split(&model.inner, facts, &filter, types.as_ref())
        })
        .map_err(to_py)?;
    report_dict(py, &report)
}

/// Zeroes the smallest entity-table entries until `target` of them are
/// zero and reports test MRR before and after. CSR files are written to
/// `out` when given.
#[pyfunction]
#[pyo3(signature = (model, dataset, target, out = None))]
fn sparsify(
    py: Python<'_>,
    model: &PyModel,
    dataset: &PyDataset,
    target: f64,
    out: Option<PathBuf>,
) -> PyResult<(PyModel, HashMap<&'static str, f64>)> {
    let ds = &dataset.inner;
    let (report, sparse) = py
        .detach(|| {
            let filter = FilterIndex::build(ds)?;
            threshold_and_export(&model.inner, target, &ds.test, &filter, out.as_deref())
        })
        .map_err(to_py)?;
    let summary = HashMap::from([
        ("target", report.target),
        ("lambda", report.lambda),
        ("achieved", report.achieved),
        ("mrr_before", report.mrr_before),
        ("mrr_after", report.mrr_after),
        ("relative_mrr_drop", report.relative_mrr_drop()),
        ("storage_saving", report.storage_saving()),
    ]);
    Ok((PyModel { inner: sparse }, summary))
}

/// Runs the numerical check suite; returns `(name, max_deviation, passed)`.
#[pyfunction]
#[pyo3(signature = (seeds = 20))]
fn verify(py: Python<'_>, seeds: u64) -> PyResult<Vec<(&'static str, f64, bool)>> {
    let checks = py.detach(|| theory::run_suite(seeds)).map_err(to_py)?;
    Ok(checks.iter().map(|c| (c.name, c.max_deviation, c.passed)).collect())
}

/// Nuclear 2-norm of the rank-one tensor `u ⊗ r ⊗ v` (or `u ⊗ r ⊗ t ⊗ v`).
#[pyfunction]
#[pyo3(signature = (u, r, v, t = None))]
fn rank1_nuclear(u: Vec<f64>, r: Vec<f64>, v: Vec<f64>, t: Option<Vec<f64>>) -> f64 {
    theory::rank1_nuclear_oracle(&u, &r, &v, t.as_deref())
}

#[pymodule]
fn dura_kge(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDataset>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(sparsify, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    m.add_function(wrap_pyfunction!(rank1_nuclear, m)?)?;
    m.add("MODELS", ModelKind::ALL.iter().map(|k| k.name()).collect::<Vec<_>>())?;
    Ok(())
}
