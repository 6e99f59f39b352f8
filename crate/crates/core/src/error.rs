use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("object {0} has a negative half extent")]
    NegativeExtent(String),
    #[error("empty field: {0}")]
    EmptyField(&'static str),
    #[error("scene {0} has no objects")]
    EmptyScene(String),
    #[error("duplicate object id {0}")]
    DuplicateObjectId(String),
    #[error("record {0} has an empty answer after normalization")]
    EmptyAnswer(String),
    #[error("record {0} has rotation {1}, expected 0/90/180/270")]
    BadRotation(String, u32),
    #[error("unknown {0} tag: {1:?}")]
    UnknownTag(&'static str, String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("object {0} sits on the observer position (ground distance < 1e-9 m)")]
    DegeneratePosition(String),
    #[error("no object matches the query")]
    NoMatch,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AugmentError {
    #[error("rotation angle must be 90, 180 or 270 degrees, got {0}")]
    InvalidAngle(u32),
    #[error("directional phrases without lexicon entries: {0:?}")]
    UncoveredPhrase(Vec<String>),
    #[error("augment expects a seed record, {0} has rotation {1}")]
    NotASeed(String, u32),
    #[error("record {qid} references scene {expected}, got scene {got}")]
    SceneMismatch { qid: String, expected: String, got: String },
    #[error("lexicon: {0}")]
    Lexicon(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("predictions missing for {} qids (first: {:?})", .0.len(), .0.first())]
    CoverageMismatch(Vec<String>),
    #[error("group {0} is malformed: {1}")]
    MalformedGroup(String, String),
    #[error("label sequences differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("empty input")]
    Empty,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("attention row does not sum to 1 (layer {layer}, head {head}, row {row}, sum {sum})")]
    NonStochasticRow { layer: usize, head: usize, row: usize, sum: f64 },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FilterError {
    #[error("prediction for {pred} scored against gold {gold}")]
    QidMismatch { pred: String, gold: String },
    #[error("{context}: predictions missing for {} qids (first: {:?})", .missing.len(), .missing.first())]
    CoverageMismatch { context: String, missing: Vec<String> },
    #[error("duplicate prediction for qid {qid}, model {model_id}, variant {variant}")]
    DuplicatePrediction { qid: String, model_id: String, variant: String },
    #[error("prediction file {0} mixes variants or models")]
    MixedFile(String),
    #[error("no model runs supplied")]
    NoRuns,
    #[error("model {0} appears in more than one run")]
    DuplicateModel(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReweightError {
    #[error("sequence {0}: log-prob arrays differ in length")]
    LengthMismatch(usize),
    #[error("sequence {0}: non-finite or positive log-prob")]
    BadLogProb(usize),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("clamping or weight caps fired; the decomposition identity does not apply")]
    CapFired,
    #[error("training diverged at step {0}")]
    DivergenceDetected(usize),
    #[error("dataset: {0}")]
    Dataset(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LlmError {
    #[error("LLM endpoint unavailable: {0}")]
    EndpointUnavailable(String),
    #[error("malformed LLM response: {0}")]
    MalformedResponse(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PipelineError {
    #[error("{file}:{line}: {message}")]
    Parse { file: String, line: usize, message: String },
    #[error("record {qid} references unknown scene {scene_id}")]
    DanglingSceneRef { qid: String, scene_id: String },
    #[error("invariant violated: {0}")]
    InvariantViolation(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("unsupported question {0}")]
    UnsupportedQuestion(String),
    #[error("report section {0} is missing")]
    MissingSection(String),
    #[error("report is inconsistent: {0}")]
    InconsistentReport(String),
}

impl PipelineError {
    pub fn io(path: impl AsRef<std::path::Path>, err: impl std::fmt::Display) -> Self {
        PipelineError::Io {
            path: path.as_ref().display().to_string(),
            message: err.to_string(),
        }
    }
}

/// Every problem found while loading a dataset.
#[derive(Debug, Error, Clone, PartialEq)]
#[error("{} ingest error(s); first: {}", .0.len(), .0[0])]
pub struct IngestErrors(pub Vec<PipelineError>);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReviewError {
    #[error("not found: {0}")]
    NotFound(String),
    #[error("conflict: {0}")]
    Conflict(String),
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error("decision log: {0}")]
    Log(String),
}
