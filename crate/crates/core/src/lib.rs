//! Situated 3D question-answering benchmark toolkit: scene geometry,
//! viewpoint-rotation augmentation, blind-model filtering, accuracy and
//! rotation-consistency metrics, and reweighted fine-tuning math.

pub mod augment;
pub mod error;
pub mod filter;
pub mod geometry;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod reweight;

pub use error::{
    AugmentError, FilterError, GeometryError, IngestErrors, LlmError, MetricsError, ModelError, PipelineError, ReviewError,
    ReweightError,
};
pub use model::{Category, ObserverPose, QARecord, Quadrant, Scene, SceneObject, Vec3, VrsType};
