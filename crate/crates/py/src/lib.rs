//! Python bindings. Records, scenes and reports cross the boundary as plain
//! dicts and lists with the same field names as the JSONL formats.

use std::collections::BTreeMap;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use serde::de::DeserializeOwned;
use serde::Serialize;

use sqa_forge_core::augment::{self, DirectionalLexicon};
use sqa_forge_core::filter::{self, ModelRun, PredictionFile, PredictionRecord, Variant};
use sqa_forge_core::geometry;
use sqa_forge_core::metrics::{self, MatchPolicy};
use sqa_forge_core::model::{ObserverPose, QARecord, Scene, Vec3};
use sqa_forge_core::pipeline::{self, fixtures, review, BlindPrior, GeometricOracle, MockAnswerer};
use sqa_forge_core::reweight::{self, toy, TokenLogProbs};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_py<T: Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(value_err)?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

fn from_py<T: DeserializeOwned>(obj: &Bound<'_, PyAny>) -> PyResult<T> {
    let text: String = obj.py().import("json")?.call_method1("dumps", (obj,))?.extract()?;
    serde_json::from_str(&text).map_err(value_err)
}

fn matcher(name: &str) -> PyResult<MatchPolicy> {
    MatchPolicy::parse(name).ok_or_else(|| value_err(format!("unknown matcher '{name}'")))
}

fn pose(x: f64, y: f64, heading: f64) -> PyResult<ObserverPose> {
    ObserverPose::new(Vec3::xyz(x, y, 0.0), heading).map_err(value_err)
}

fn scene_map(scenes: &Bound<'_, PyAny>) -> PyResult<BTreeMap<String, Scene>> {
    let list: Vec<Scene> = from_py(scenes)?;
    Ok(list.into_iter().map(|s| (s.scene_id.clone(), s)).collect())
}

/// Directional phrase table used to rewrite rotated text.
#[pyclass(name = "Lexicon", from_py_object)]
#[derive(Clone)]
struct PyLexicon(DirectionalLexicon);

#[pymethods]
impl PyLexicon {
    #[new]
    fn new() -> Self {
        PyLexicon(DirectionalLexicon::default())
    }

    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        DirectionalLexicon::from_toml(text).map(PyLexicon).map_err(value_err)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        DirectionalLexicon::from_json(text).map(PyLexicon).map_err(value_err)
    }

    /// Rewrites directional phrases for a counterclockwise turn of `deg` degrees.
    fn remap(&self, text: &str, deg: u32) -> PyResult<String> {
        augment::remap_directional_terms(text, deg, &self.0).map_err(value_err)
    }

    fn answer_word(&self, quadrant: &str) -> PyResult<String> {
        let q = sqa_forge_core::Quadrant::ALL
            .into_iter()
            .find(|q| q.as_str() == quadrant)
            .ok_or_else(|| value_err(format!("unknown quadrant '{quadrant}'")))?;
        Ok(self.0.answer_word(q).to_string())
    }
}

fn lexicon_or_default(lexicon: Option<PyLexicon>) -> DirectionalLexicon {
    lexicon.map(|l| l.0).unwrap_or_default()
}

#[pyclass(name = "ReweightConfig", from_py_object)]
#[derive(Clone)]
struct PyReweightConfig(reweight::ReweightConfig);

#[pymethods]
impl PyReweightConfig {
    #[new]
    #[pyo3(signature = (prob_clamp_eps=1e-6, w_min=0.1, w_max=10.0, detach_weights=true))]
    fn new(prob_clamp_eps: f64, w_min: f64, w_max: f64, detach_weights: bool) -> PyResult<Self> {
        let cfg = reweight::ReweightConfig {
            prob_clamp_eps,
            weight_cap: [w_min, w_max],
            detach_weights,
        };
        cfg.validate().map_err(value_err)?;
        Ok(Self(cfg))
    }

    #[staticmethod]
    fn uncapped() -> Self {
        Self(reweight::ReweightConfig::uncapped())
    }

    #[staticmethod]
    fn unit_weights() -> Self {
        Self(reweight::ReweightConfig::unit_weights())
    }

    #[getter]
    fn prob_clamp_eps(&self) -> f64 {
        self.0.prob_clamp_eps
    }

    #[getter]
    fn weight_cap(&self) -> (f64, f64) {
        (self.0.weight_cap[0], self.0.weight_cap[1])
    }

    #[getter]
    fn detach_weights(&self) -> bool {
        self.0.detach_weights
    }

    fn __repr__(&self) -> String {
        format!(
            "ReweightConfig(prob_clamp_eps={}, w_min={}, w_max={}, detach_weights={})",
            self.0.prob_clamp_eps, self.0.weight_cap[0], self.0.weight_cap[1], self.0.detach_weights
        )
    }
}

fn config_or_default(config: Option<PyReweightConfig>) -> reweight::ReweightConfig {
    config.map(|c| c.0).unwrap_or_default()
}

/// Review queue backed by an append-only decision log.
#[pyclass(name = "ReviewStore", unsendable)]
struct PyReviewStore(pipeline::ReviewStore);

#[pymethods]
impl PyReviewStore {
    #[new]
    #[pyo3(signature = (groups, scenes, log_path, required_reviews=1))]
    fn new(groups: &Bound<'_, PyAny>, scenes: &Bound<'_, PyAny>, log_path: &str, required_reviews: usize) -> PyResult<Self> {
        let groups: Vec<augment::AugmentedGroup> = from_py(groups)?;
        let queue = pipeline::ReviewQueue::new(&groups, &scene_map(scenes)?, required_reviews).map_err(value_err)?;
        pipeline::ReviewStore::open(queue, log_path).map(Self).map_err(value_err)
    }

    /// Applies a decision dict and returns the updated item.
    fn decide(&mut self, py: Python<'_>, request: &Bound<'_, PyAny>) -> PyResult<Py<PyAny>> {
        let req: pipeline::DecisionRequest = from_py(request)?;
        let item = self.0.decide(req, review::now_ms()).map_err(value_err)?;
        to_py(py, item)
    }

    #[pyo3(signature = (status="pending", page=1, per_page=50))]
    fn page(&self, py: Python<'_>, status: &str, page: usize, per_page: usize) -> PyResult<Py<PyAny>> {
        let filter = review::StatusFilter::parse(status).ok_or_else(|| value_err(format!("unknown status '{status}'")))?;
        to_py(py, &self.0.queue.page(filter, page, per_page))
    }

    fn agreement(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &self.0.queue.agreement())
    }

    fn export(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &self.0.queue.export())
    }

    fn status_counts(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &self.0.queue.status_counts())
    }
}

/// Signed bearing in radians from the facing direction to a ground point.
#[pyfunction]
fn relative_bearing(point: (f64, f64), position: (f64, f64), heading: f64) -> PyResult<Option<f64>> {
    Ok(geometry::relative_bearing(Vec3::xyz(point.0, point.1, 0.0), &pose(position.0, position.1, heading)?))
}

/// Quadrant name ("front", "left", "right", "back") of a ground point.
#[pyfunction]
fn classify_quadrant(point: (f64, f64), position: (f64, f64), heading: f64) -> PyResult<String> {
    let b = geometry::relative_bearing(Vec3::xyz(point.0, point.1, 0.0), &pose(position.0, position.1, heading)?)
        .ok_or_else(|| value_err("point coincides with the observer"))?;
    Ok(geometry::quadrant_of_bearing(b).as_str().to_string())
}

/// Heading after a counterclockwise turn of `deg` ∈ {0, 90, 180, 270}.
#[pyfunction]
fn rotate_heading(heading: f64, deg: u32) -> PyResult<f64> {
    augment::rotate_pose(&pose(0.0, 0.0, heading)?, deg)
        .map(|p| p.heading_rad)
        .map_err(value_err)
}

/// Seed plus its three rotated variants, each with a validity verdict.
#[pyfunction]
#[pyo3(signature = (seed, scene, lexicon=None))]
fn augment_group(py: Python<'_>, seed: &Bound<'_, PyAny>, scene: &Bound<'_, PyAny>, lexicon: Option<PyLexicon>) -> PyResult<Py<PyAny>> {
    let seed: QARecord = from_py(seed)?;
    let scene: Scene = from_py(scene)?;
    let group = augment::augment_group(&seed, &scene, &lexicon_or_default(lexicon)).map_err(value_err)?;
    to_py(py, &group)
}

#[pyfunction]
fn normalize_answer(text: &str) -> String {
    metrics::normalize_answer(text)
}

#[pyfunction]
#[pyo3(signature = (pred, gold, matcher="em_r"))]
fn answers_match(pred: &str, gold: &str, matcher: &str) -> PyResult<bool> {
    Ok(metrics::answers_match(pred, gold, &self::matcher(matcher)?))
}

/// Accuracy report for a {qid: answer} dict against gold records.
#[pyfunction]
#[pyo3(signature = (preds, gold, matcher="em_r"))]
fn score_accuracy(py: Python<'_>, preds: BTreeMap<String, String>, gold: &Bound<'_, PyAny>, matcher: &str) -> PyResult<Py<PyAny>> {
    let gold: Vec<QARecord> = from_py(gold)?;
    let r = metrics::score_accuracy(&preds, &gold, &self::matcher(matcher)?).map_err(value_err)?;
    to_py(py, &r)
}

/// Rotation-consistency result for a {qid: answer} dict against gold groups of four.
#[pyfunction]
#[pyo3(signature = (preds, gold, matcher="em_r"))]
fn vrs(py: Python<'_>, preds: BTreeMap<String, String>, gold: &Bound<'_, PyAny>, matcher: &str) -> PyResult<Py<PyAny>> {
    let gold: Vec<QARecord> = from_py(gold)?;
    let r = metrics::vrs(&preds, &gold, &self::matcher(matcher)?).map_err(value_err)?;
    to_py(py, &r)
}

/// VRS from per-group correct counts (0..=4).
#[pyfunction]
fn vrs_from_counts(py: Python<'_>, counts: Vec<u8>) -> PyResult<Py<PyAny>> {
    if counts.iter().any(|c| *c > 4) {
        return Err(value_err("group counts must be in 0..=4"));
    }
    to_py(py, &metrics::VrsResult::from_group_counts(&counts))
}

#[pyfunction]
fn cohens_kappa(py: Python<'_>, labels_a: Vec<String>, labels_b: Vec<String>) -> PyResult<Py<PyAny>> {
    to_py(py, &metrics::cohens_kappa(&labels_a, &labels_b).map_err(value_err)?)
}

fn prediction_file(obj: &Bound<'_, PyAny>, name: &str) -> PyResult<PredictionFile> {
    let records: Vec<PredictionRecord> = from_py(obj)?;
    PredictionFile::new(name, records).map_err(value_err)
}

/// Filters gold records. `runs` is a list of (full, blind) prediction lists in
/// cascade order; returns (kept records, report).
#[pyfunction]
#[pyo3(signature = (gold, runs, llm, matcher="em_r"))]
fn build_benchmark(
    py: Python<'_>,
    gold: &Bound<'_, PyAny>,
    runs: Vec<(Bound<'_, PyAny>, Bound<'_, PyAny>)>,
    llm: &Bound<'_, PyAny>,
    matcher: &str,
) -> PyResult<(Py<PyAny>, Py<PyAny>)> {
    let gold: Vec<QARecord> = from_py(gold)?;
    let runs = runs
        .iter()
        .enumerate()
        .map(|(i, (full, blind))| {
            ModelRun::new(prediction_file(full, &format!("run {i} full"))?, prediction_file(blind, &format!("run {i} blind"))?)
                .map_err(value_err)
        })
        .collect::<PyResult<Vec<_>>>()?;
    let build = filter::build_benchmark(&gold, &runs, &prediction_file(llm, "llm")?, &self::matcher(matcher)?)
        .map_err(value_err)?;
    Ok((to_py(py, &build.kept)?, to_py(py, &build.report)?))
}

/// Predictions from "oracle" or "blind_prior"; the prior trains on `train` (default: `records`).
#[pyfunction]
#[pyo3(signature = (kind, records, scenes, model_id=None, variant="full", train=None, seed=0))]
#[allow(clippy::too_many_arguments)]
fn run_mock(
    py: Python<'_>,
    kind: &str,
    records: &Bound<'_, PyAny>,
    scenes: &Bound<'_, PyAny>,
    model_id: Option<&str>,
    variant: &str,
    train: Option<&Bound<'_, PyAny>>,
    seed: u64,
) -> PyResult<Py<PyAny>> {
    let records: Vec<QARecord> = from_py(records)?;
    let scenes = scene_map(scenes)?;
    let answerer = match kind {
        "oracle" => MockAnswerer::GeometricOracle(GeometricOracle {
            lexicon: DirectionalLexicon::default(),
        }),
        "blind_prior" => {
            let train: Vec<QARecord> = match train {
                Some(t) => from_py(t)?,
                None => records.clone(),
            };
            MockAnswerer::BlindPrior(BlindPrior::fit(&train, seed))
        }
        other => return Err(value_err(format!("unknown answerer '{other}'"))),
    };
    let variant: Variant = serde_json::from_value(serde_json::Value::String(variant.into())).map_err(value_err)?;
    let model_id = model_id.unwrap_or(answerer.default_model_id());
    to_py(py, &pipeline::run_mock(&answerer, &records, &scenes, model_id, variant))
}

#[pyfunction]
#[pyo3(signature = (lp_blind, lp_text, config=None))]
fn surprise_weight(lp_blind: f64, lp_text: f64, config: Option<PyReweightConfig>) -> f64 {
    let cfg = config_or_default(config);
    let (b, _) = reweight::clamp_log_prob(lp_blind, &cfg);
    let (t, _) = reweight::clamp_log_prob(lp_text, &cfg);
    reweight::surprise_weight(b, t, &cfg)
}

/// Reweighted loss over a batch of {tokens, lp_blind, lp_text, lp_full} dicts.
#[pyfunction]
#[pyo3(signature = (batch, config=None))]
fn rft_loss(py: Python<'_>, batch: &Bound<'_, PyAny>, config: Option<PyReweightConfig>) -> PyResult<Py<PyAny>> {
    let batch: Vec<TokenLogProbs> = from_py(batch)?;
    to_py(py, &reweight::rft_loss(&batch, &config_or_default(config)).map_err(value_err)?)
}

#[pyfunction]
fn cross_entropy(batch: &Bound<'_, PyAny>) -> PyResult<f64> {
    let batch: Vec<TokenLogProbs> = from_py(batch)?;
    Ok(reweight::cross_entropy(&batch))
}

/// Batch-mean split of the reweighted loss into blind and gap terms.
#[pyfunction]
#[pyo3(signature = (batch, config=None))]
fn decomposition_check(py: Python<'_>, batch: &Bound<'_, PyAny>, config: Option<PyReweightConfig>) -> PyResult<Py<PyAny>> {
    let batch: Vec<TokenLogProbs> = from_py(batch)?;
    let cfg = config.map_or_else(reweight::ReweightConfig::uncapped, |c| c.0);
    to_py(py, &reweight::decomposition_check(&batch, &cfg).map_err(value_err)?)
}

/// Toy comparison of SFT and reweighted training on a partly guessable dataset.
#[pyfunction]
#[pyo3(signature = (guessable_frac=0.3, seeds=5, steps=None, lr=None))]
fn rft_demo(py: Python<'_>, guessable_frac: f64, seeds: u64, steps: Option<usize>, lr: Option<f64>) -> PyResult<Py<PyAny>> {
    let mut cfg = toy::DemoConfig::default();
    cfg.dataset.guessable_frac = guessable_frac;
    cfg.seeds = (0..seeds).collect();
    if let Some(s) = steps {
        cfg.train.steps = s;
    }
    if let Some(l) = lr {
        cfg.train.lr = l;
    }
    let report = py.detach(|| toy::rft_demo(&cfg)).map_err(value_err)?;
    to_py(py, &report)
}

/// (scenes, seed records) for the four-object cross room.
#[pyfunction]
fn cross_room(py: Python<'_>) -> PyResult<(Py<PyAny>, Py<PyAny>)> {
    Ok((to_py(py, &vec![fixtures::cross_room()])?, to_py(py, &fixtures::cross_room_seeds())?))
}

/// (scenes, seed records) from random rooms.
#[pyfunction]
fn synthetic_seeds(py: Python<'_>, n_groups: usize, seed: u64) -> PyResult<(Py<PyAny>, Py<PyAny>)> {
    let (scenes, seeds) = fixtures::synthetic_seeds(n_groups, seed, &DirectionalLexicon::default());
    let scenes: Vec<&Scene> = scenes.values().collect();
    Ok((to_py(py, &scenes)?, to_py(py, &seeds)?))
}

#[pymodule]
fn sqa_forge(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyLexicon>()?;
    m.add_class::<PyReweightConfig>()?;
    m.add_class::<PyReviewStore>()?;
    m.add_function(wrap_pyfunction!(relative_bearing, m)?)?;
    m.add_function(wrap_pyfunction!(classify_quadrant, m)?)?;
    m.add_function(wrap_pyfunction!(rotate_heading, m)?)?;
    m.add_function(wrap_pyfunction!(augment_group, m)?)?;
    m.add_function(wrap_pyfunction!(normalize_answer, m)?)?;
    m.add_function(wrap_pyfunction!(answers_match, m)?)?;
    m.add_function(wrap_pyfunction!(score_accuracy, m)?)?;
    m.add_function(wrap_pyfunction!(vrs, m)?)?;
    m.add_function(wrap_pyfunction!(vrs_from_counts, m)?)?;
    m.add_function(wrap_pyfunction!(cohens_kappa, m)?)?;
    m.add_function(wrap_pyfunction!(build_benchmark, m)?)?;
    m.add_function(wrap_pyfunction!(run_mock, m)?)?;
    m.add_function(wrap_pyfunction!(surprise_weight, m)?)?;
    m.add_function(wrap_pyfunction!(rft_loss, m)?)?;
    m.add_function(wrap_pyfunction!(cross_entropy, m)?)?;
    m.add_function(wrap_pyfunction!(decomposition_check, m)?)?;
    m.add_function(wrap_pyfunction!(rft_demo, m)?)?;
    m.add_function(wrap_pyfunction!(cross_room, m)?)?;
    m.add_function(wrap_pyfunction!(synthetic_seeds, m)?)?;
    Ok(())
}
