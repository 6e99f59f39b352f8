//! Orchestration: ingestion, mock answerers, augmentation over a dataset,
//! the review queue and report consolidation.

pub mod fixtures;
pub mod ingest;
pub mod mock;
pub mod review;
pub mod stats;
pub mod topdown;

use std::collections::BTreeMap;

use crate::augment::{augment_group, AugmentedGroup, DirectionalLexicon};
use crate::error::AugmentError;
use crate::model::{QARecord, Scene};

pub use ingest::{ingest, ingest_paths, Dataset};
pub use mock::{run_mock, BlindPrior, GeometricOracle, MockAnswerer};
pub use review::{Decision, DecisionKind, DecisionLog, DecisionRequest, ReviewItem, ReviewQueue, ReviewStatus, ReviewStore};
pub use stats::{Section, StatsReport};

/// Augments every seed, in input order, spreading work over threads.
pub fn augment_all(
    seeds: &[QARecord],
    scenes: &BTreeMap<String, Scene>,
    lexicon: &DirectionalLexicon,
) -> Vec<Result<AugmentedGroup, (String, AugmentError)>> {
    let run = |seed: &QARecord| -> Result<AugmentedGroup, (String, AugmentError)> {
        let scene = scenes.get(&seed.scene_id).ok_or_else(|| {
            (
                seed.qid.clone(),
                AugmentError::SceneMismatch {
                    qid: seed.qid.clone(),
                    expected: seed.scene_id.clone(),
                    got: String::new(),
                },
            )
        })?;
        augment_group(seed, scene, lexicon).map_err(|e| (seed.qid.clone(), e))
    };
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(seeds.len().max(1));
    let chunk = seeds.len().div_ceil(workers).max(1);
    std::thread::scope(|s| {
        let handles: Vec<_> = seeds
            .chunks(chunk)
            .map(|part| s.spawn(move || part.iter().map(run).collect::<Vec<_>>()))
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("augment worker panicked"))
            .collect()
    })
}
