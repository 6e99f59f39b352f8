use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::augment::question::{answer_intent, parse_question};
use crate::augment::DirectionalLexicon;
use crate::error::PipelineError;
use crate::filter::{PredictionRecord, Variant};
use crate::metrics::normalize_answer;
use crate::model::{Category, QARecord, Scene};

/// Per-category answer frequencies learned from a training split. Never
/// looks at scenes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlindPrior {
    /// Normalized answer -> (count, first surface form seen), per category.
    pub table: BTreeMap<Category, BTreeMap<String, (usize, String)>>,
    pub seed: u64,
}

fn fnv1a(s: &str) -> u64 {
    s.bytes()
        .fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3))
}

impl BlindPrior {
    pub fn fit(train: &[QARecord], seed: u64) -> Self {
        let mut table: BTreeMap<Category, BTreeMap<String, (usize, String)>> = BTreeMap::new();
        for rec in train {
            let key = normalize_answer(&rec.answer);
            if key.is_empty() {
                continue;
            }
            let slot = table
                .entry(rec.category)
                .or_default()
                .entry(key)
                .or_insert_with(|| (0, rec.answer.clone()));
            slot.0 += 1;
        }
        Self { table, seed }
    }

    /// Most frequent answers for a category, in normalized order.
    pub fn top_answers(&self, category: Category) -> Vec<&str> {
        let Some(counts) = self.table.get(&category) else {
            return Vec::new();
        };
        let best = counts.values().map(|(n, _)| *n).max().unwrap_or(0);
        counts
            .values()
            .filter(|(n, _)| *n == best)
            .map(|(_, surface)| surface.as_str())
            .collect()
    }

    /// The category's most frequent answer; ties are broken by a draw keyed
    /// on (seed, qid), empty when the category was never seen.
    pub fn answer(&self, record: &QARecord) -> String {
        let top = self.top_answers(record.category);
        match top.len() {
            0 => String::new(),
            1 => top[0].to_string(),
            n => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ fnv1a(&record.qid));
                top[rng.random_range(0..n)].to_string()
            }
        }
    }
}

/// Answers geometry-checkable questions by recomputing them from the scene.
#[derive(Debug, Clone, PartialEq)]
pub struct GeometricOracle {
    pub lexicon: DirectionalLexicon,
}

impl GeometricOracle {
    pub fn answer(&self, record: &QARecord, scene: &Scene) -> Result<String, PipelineError> {
        let unsupported = |why: String| PipelineError::UnsupportedQuestion(format!("{}: {why}", record.qid));
        let vrs_type = record.vrs_type.ok_or_else(|| unsupported("no vrs_type".into()))?;
        let intent = parse_question(&record.question, vrs_type, &self.lexicon, scene).map_err(|e| unsupported(e.0))?;
        answer_intent(&intent, scene, &record.pose, &self.lexicon).map_err(|e| unsupported(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MockAnswerer {
    GeometricOracle(GeometricOracle),
    BlindPrior(BlindPrior),
}

impl MockAnswerer {
    pub fn default_model_id(&self) -> &'static str {
        match self {
            MockAnswerer::GeometricOracle(_) => "geometric-oracle",
            MockAnswerer::BlindPrior(_) => "blind-prior",
        }
    }

    /// Unsupported questions are answered with the empty string (abstain).
    pub fn answer(&self, record: &QARecord, scenes: &BTreeMap<String, Scene>) -> String {
        match self {
            MockAnswerer::GeometricOracle(o) => scenes
                .get(&record.scene_id)
                .and_then(|s| o.answer(record, s).ok())
                .unwrap_or_default(),
            MockAnswerer::BlindPrior(p) => p.answer(record),
        }
    }
}

/// One prediction per record, in record order.
pub fn run_mock(
    answerer: &MockAnswerer,
    records: &[QARecord],
    scenes: &BTreeMap<String, Scene>,
    model_id: &str,
    variant: Variant,
) -> Vec<PredictionRecord> {
    records
        .iter()
        .map(|r| PredictionRecord {
            qid: r.qid.clone(),
            model_id: model_id.to_string(),
            variant,
            predicted_answer: answerer.answer(r, scenes),
        })
        .collect()
}
