//! Independent reference implementations used as test oracles.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use sqa_forge_core::filter::{ModelRun, PredictionFile, PredictionRecord, Variant};
use sqa_forge_core::model::{Category, ObserverPose, QARecord, Quadrant, Scene, SceneObject, Vec3};
use sqa_forge_core::reweight::TokenLogProbs;

pub fn record(qid: &str, group: &str, rotation_deg: u32, answer: &str) -> QARecord {
    QARecord {
        qid: qid.to_string(),
        scene_id: "s".to_string(),
        pose: ObserverPose::new(Vec3::ZERO, 0.0).unwrap(),
        situation: "I am standing in the room.".to_string(),
        question: "What is it?".to_string(),
        answer: answer.to_string(),
        category: Category::Object,
        vrs_type: None,
        group_id: group.to_string(),
        rotation_deg,
    }
}

/// Quadrant by comparing observer-frame coordinates (u forward, v left)
/// instead of computing an angle.
pub fn quadrant_by_coordinates(point: Vec3, pose: &ObserverPose) -> Option<Quadrant> {
    let dx = point.x - pose.position.x;
    let dy = point.y - pose.position.y;
    let (s, c) = pose.heading_rad.sin_cos();
    let u = c * dx + s * dy;
    let v = -s * dx + c * dy;
    if u.hypot(v) < 1e-9 {
        return None;
    }
    // bearing intervals: Front (-45, 45], Left (45, 135], Right (-135, -45]
    Some(if u > 0.0 && -u < v && v <= u {
        Quadrant::Front
    } else if v > 0.0 && -v <= u && u < v {
        Quadrant::Left
    } else if v < 0.0 && v < u && u <= -v {
        Quadrant::Right
    } else {
        Quadrant::Back
    })
}

/// Nearest object by exhaustive scan, ties to the smallest id.
pub fn nearest_by_scan<'a>(
    scene: &'a Scene,
    pose: &ObserverPose,
    quadrant: Option<Quadrant>,
    label: Option<&str>,
) -> Option<&'a SceneObject> {
    let mut best: Option<(&SceneObject, f64)> = None;
    for o in &scene.objects {
        if label.is_some_and(|l| o.label != l) {
            continue;
        }
        let Some(q) = quadrant_by_coordinates(o.center, pose) else {
            continue;
        };
        if quadrant.is_some_and(|want| want != q) {
            continue;
        }
        let d = ((o.center.x - pose.position.x).powi(2) + (o.center.y - pose.position.y).powi(2)).sqrt();
        best = match best {
            None => Some((o, d)),
            Some((b, bd)) if d < bd || (d == bd && o.id < b.id) => Some((o, d)),
            keep => keep,
        };
    }
    best.map(|(o, _)| o)
}

/// Randomized correctness table for the filtering cascade.
#[derive(Debug, Clone)]
pub struct CorrectnessTable {
    pub gold: Vec<QARecord>,
    /// Per model: (full correct, blind correct) by question index.
    pub models: Vec<(String, Vec<bool>, Vec<bool>)>,
    pub llm: Vec<bool>,
}

impl CorrectnessTable {
    pub fn random(rng: &mut impl rand::Rng, n: usize, n_models: usize) -> Self {
        let gold = (0..n).map(|i| record(&format!("q{i}"), &format!("g{i}"), 0, &format!("a{i}"))).collect();
        let models = (0..n_models)
            .map(|m| {
                let p_full = rng.random_range(0.2..0.9);
                let p_blind = rng.random_range(0.1..0.7);
                (
                    format!("model{m}"),
                    (0..n).map(|_| rng.random_bool(p_full)).collect(),
                    (0..n).map(|_| rng.random_bool(p_blind)).collect(),
                )
            })
            .collect();
        let p_llm = rng.random_range(0.0..0.6);
        let llm = (0..n).map(|_| rng.random_bool(p_llm)).collect();
        Self { gold, models, llm }
    }

    fn preds(&self, model: &str, variant: Variant, correct: &[bool]) -> PredictionFile {
        let records = self
            .gold
            .iter()
            .zip(correct)
            .map(|(g, ok)| PredictionRecord {
                qid: g.qid.clone(),
                model_id: model.to_string(),
                variant,
                predicted_answer: if *ok { g.answer.clone() } else { "wrong".to_string() },
            })
            .collect();
        PredictionFile::new(model, records).unwrap()
    }

    pub fn run(&self, m: usize) -> ModelRun {
        let (id, full, blind) = &self.models[m];
        ModelRun::new(self.preds(id, Variant::Full, full), self.preds(id, Variant::Blind, blind)).unwrap()
    }

    pub fn runs(&self, order: &[usize]) -> Vec<ModelRun> {
        order.iter().map(|m| self.run(*m)).collect()
    }

    pub fn llm_file(&self) -> PredictionFile {
        self.preds("llm", Variant::TextOnlyLLM, &self.llm)
    }

    /// { q | no listed model has both variants correct, and the LLM is wrong }.
    pub fn kept_oracle(&self, models: &[usize]) -> BTreeSet<String> {
        (0..self.gold.len())
            .filter(|&i| !models.iter().any(|&m| self.models[m].1[i] && self.models[m].2[i]))
            .filter(|&i| !self.llm[i])
            .map(|i| self.gold[i].qid.clone())
            .collect()
    }
}

/// Reweighted loss by explicit double loop over sequences and tokens.
pub fn rft_loss_loop(batch: &[TokenLogProbs], eps: f64, w_min: f64, w_max: f64) -> f64 {
    let lo = eps.ln();
    let hi = (1.0 - eps).ln();
    let mut total = 0.0;
    for seq in batch {
        let mut s = 0.0;
        for j in 0..seq.tokens.len() {
            let b = seq.lp_blind[j].max(lo).min(hi);
            let t = seq.lp_text[j].max(lo).min(hi);
            let f = seq.lp_full[j].max(lo).min(hi);
            let w = (b / t).max(w_min).min(w_max);
            s += w * -f;
        }
        total += s;
    }
    total / batch.len() as f64
}

pub fn random_logprobs(rng: &mut impl rand::Rng, max_len: usize, min_prob: f64) -> TokenLogProbs {
    let t = rng.random_range(1..=max_len);
    let mut lp = || -> Vec<f64> { (0..t).map(|_| rng.random_range(min_prob..1.0f64).ln()).collect() };
    let lp_blind = lp();
    let lp_text = lp();
    let lp_full = lp();
    TokenLogProbs {
        qid: String::new(),
        tokens: (0..t as u32).collect(),
        lp_blind,
        lp_text,
        lp_full,
    }
}

/// Per-group number of correct answers, by exhaustive comparison.
pub fn group_correct_counts(correct: &BTreeMap<String, bool>, gold: &[QARecord]) -> BTreeMap<String, u8> {
    let mut out: BTreeMap<String, u8> = BTreeMap::new();
    for r in gold {
        *out.entry(r.group_id.clone()).or_default() += u8::from(correct[&r.qid]);
    }
    out
}
