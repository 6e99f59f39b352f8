//! Answer matching (EM / EM_R), accuracy tables, the Viewpoint Rotation
//! Score, Cohen's kappa and the 3D-token attention dependency score.

use std::collections::{BTreeMap, BTreeSet};
use std::hash::Hash;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::MetricsError;
use crate::model::{Category, QARecord, VrsType};

const ARTICLES: [&str; 3] = ["a", "an", "the"];

/// Which normalization steps run before comparing answers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Normalization {
    pub lowercase: bool,
    pub strip_punctuation: bool,
    pub strip_articles: bool,
    pub collapse_whitespace: bool,
}

impl Default for Normalization {
    fn default() -> Self {
        Self {
            lowercase: true,
            strip_punctuation: true,
            strip_articles: true,
            collapse_whitespace: true,
        }
    }
}

impl Normalization {
    pub fn apply(&self, s: &str) -> String {
        let mut text = if self.lowercase { s.to_lowercase() } else { s.to_string() };
        if self.strip_punctuation {
            text = text
                .chars()
                .map(|c| if c.is_alphanumeric() || c.is_whitespace() { c } else { ' ' })
                .collect();
        }
        if self.strip_articles || self.collapse_whitespace {
            // article removal re-tokenizes, which collapses whitespace as a side effect
            text = text
                .split_whitespace()
                .filter(|t| !(self.strip_articles && ARTICLES.contains(t)))
                .collect::<Vec<_>>()
                .join(" ");
        }
        text
    }
}

/// Normalizes with every step enabled.
pub fn normalize_answer(s: &str) -> String {
    Normalization::default().apply(s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MatchKind {
    #[serde(rename = "em")]
    Em,
    #[serde(rename = "em_r")]
    EmR,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchPolicy {
    pub kind: MatchKind,
    #[serde(default)]
    pub normalization: Normalization,
}

impl MatchPolicy {
    pub const EM: MatchPolicy = MatchPolicy {
        kind: MatchKind::Em,
        normalization: Normalization {
            lowercase: true,
            strip_punctuation: true,
            strip_articles: true,
            collapse_whitespace: true,
        },
    };
    pub const EM_R: MatchPolicy = MatchPolicy {
        kind: MatchKind::EmR,
        ..MatchPolicy::EM
    };

    pub fn parse(name: &str) -> Option<MatchPolicy> {
        match name.to_lowercase().as_str() {
            "em" => Some(MatchPolicy::EM),
            "em_r" | "emr" | "em-r" => Some(MatchPolicy::EM_R),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            MatchKind::Em => "em",
            MatchKind::EmR => "em_r",
        }
    }

    pub fn matches(&self, pred: &str, gold: &str) -> bool {
        answers_match(pred, gold, self)
    }
}

impl Default for MatchPolicy {
    fn default() -> Self {
        MatchPolicy::EM_R
    }
}

fn contains_token_run(haystack: &[&str], needle: &[&str]) -> bool {
    !needle.is_empty() && haystack.windows(needle.len()).any(|w| w == needle)
}

/// EM compares normalized strings. EM_R additionally accepts either side
/// appearing inside the other as a whole-token run, so "board" never credits
/// "whiteboard". An empty prediction is never correct.
pub fn answers_match(pred: &str, gold: &str, policy: &MatchPolicy) -> bool {
    let p = policy.normalization.apply(pred);
    let g = policy.normalization.apply(gold);
    if p.is_empty() || g.is_empty() {
        return false;
    }
    if p == g {
        return true;
    }
    match policy.kind {
        MatchKind::Em => false,
        MatchKind::EmR => {
            let pt: Vec<&str> = p.split(' ').collect();
            let gt: Vec<&str> = g.split(' ').collect();
            contains_token_run(&pt, &gt) || contains_token_run(&gt, &pt)
        }
    }
}

/// Round half away from zero at `decimals` places, as used in report tables.
pub fn round_half_up(x: f64, decimals: u32) -> f64 {
    let scale = 10f64.powi(decimals as i32);
    // nudge so that values like 46.9 (stored as 46.8999...) round as written
    let scaled = (x * scale).abs() + 1e-9;
    (scaled + 0.5).floor().copysign(x) / scale
}

fn percent(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64 * 100.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryScore {
    pub total: usize,
    pub correct: usize,
    /// Percentage; `None` when the category has no questions.
    pub accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub policy: String,
    pub total: usize,
    pub correct: usize,
    pub overall: f64,
    pub per_category: BTreeMap<Category, CategoryScore>,
}

fn check_coverage<'a>(
    preds: &BTreeMap<String, String>,
    gold: impl IntoIterator<Item = &'a QARecord>,
) -> Result<(), MetricsError> {
    let missing: Vec<String> = gold
        .into_iter()
        .filter(|r| !preds.contains_key(&r.qid))
        .map(|r| r.qid.clone())
        .collect();
    if missing.is_empty() {
        Ok(())
    } else {
        Err(MetricsError::CoverageMismatch(missing))
    }
}

/// Overall and per-category accuracy. `preds` maps qid to predicted answer.
pub fn score_accuracy(
    preds: &BTreeMap<String, String>,
    gold: &[QARecord],
    policy: &MatchPolicy,
) -> Result<AccuracyReport, MetricsError> {
    check_coverage(preds, gold)?;
    let mut per_category: BTreeMap<Category, CategoryScore> = Category::ALL
        .iter()
        .map(|c| (*c, CategoryScore { total: 0, correct: 0, accuracy: None }))
        .collect();
    let mut correct = 0;
    for rec in gold {
        let ok = policy.matches(&preds[&rec.qid], &rec.answer);
        let entry = per_category.get_mut(&rec.category).expect("all categories present");
        entry.total += 1;
        if ok {
            entry.correct += 1;
            correct += 1;
        }
    }
    for score in per_category.values_mut() {
        if score.total > 0 {
            score.accuracy = Some(percent(score.correct, score.total));
        }
    }
    Ok(AccuracyReport {
        policy: policy.name().to_string(),
        total: gold.len(),
        correct,
        overall: percent(correct, gold.len()),
        per_category,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VrsResult {
    #[serde(rename = "N_total")]
    pub n_total: usize,
    /// Groups with at least k correct answers, k = 1..4.
    #[serde(rename = "N_k")]
    pub n_k: [usize; 4],
    #[serde(rename = "P_k")]
    pub p_k: [f64; 4],
    pub vrs: f64,
    /// Single-question accuracy per question type.
    pub per_type: BTreeMap<VrsType, f64>,
}

impl VrsResult {
    /// Builds the result from per-group correct counts (each in 0..=4).
    pub fn from_group_counts(counts: &[u8]) -> VrsResult {
        let mut n_k = [0usize; 4];
        for &c in counts {
            for (k, slot) in n_k.iter_mut().enumerate() {
                if c as usize > k {
                    *slot += 1;
                }
            }
        }
        let n_total = counts.len();
        let p_k = n_k.map(|n| percent(n, n_total));
        let vrs = p_k.iter().sum::<f64>() / 4.0;
        VrsResult {
            n_total,
            n_k,
            p_k,
            vrs,
            per_type: BTreeMap::new(),
        }
    }

    /// Copy with every percentage rounded to one decimal for display.
    pub fn rounded(&self) -> VrsResult {
        VrsResult {
            p_k: self.p_k.map(|p| round_half_up(p, 1)),
            vrs: round_half_up(self.vrs, 1),
            per_type: self.per_type.iter().map(|(k, v)| (*k, round_half_up(*v, 1))).collect(),
            ..self.clone()
        }
    }
}

/// Groups records by `group_id`, checking each group is a full rotation set.
pub fn rotation_groups(gold: &[QARecord]) -> Result<BTreeMap<&str, [&QARecord; 4]>, MetricsError> {
    let mut by_group: BTreeMap<&str, Vec<&QARecord>> = BTreeMap::new();
    for rec in gold {
        by_group.entry(rec.group_id.as_str()).or_default().push(rec);
    }
    by_group
        .into_iter()
        .map(|(gid, mut recs)| {
            if recs.len() != 4 {
                return Err(MetricsError::MalformedGroup(
                    gid.to_string(),
                    format!("expected 4 records, found {}", recs.len()),
                ));
            }
            recs.sort_by_key(|r| r.rotation_deg);
            let rotations: Vec<u32> = recs.iter().map(|r| r.rotation_deg).collect();
            if rotations != [0, 90, 180, 270] {
                return Err(MetricsError::MalformedGroup(
                    gid.to_string(),
                    format!("rotations {rotations:?}, expected [0, 90, 180, 270]"),
                ));
            }
            Ok((gid, [recs[0], recs[1], recs[2], recs[3]]))
        })
        .collect()
}

pub fn vrs(
    preds: &BTreeMap<String, String>,
    gold: &[QARecord],
    policy: &MatchPolicy,
) -> Result<VrsResult, MetricsError> {
    let groups = rotation_groups(gold)?;
    check_coverage(preds, gold)?;
    let mut type_tally: BTreeMap<VrsType, (usize, usize)> = BTreeMap::new();
    let counts: Vec<u8> = groups
        .values()
        .map(|recs| {
            recs.iter()
                .filter(|r| {
                    let ok = policy.matches(&preds[&r.qid], &r.answer);
                    if let Some(t) = r.vrs_type {
                        let e = type_tally.entry(t).or_default();
                        e.0 += ok as usize;
                        e.1 += 1;
                    }
                    ok
                })
                .count() as u8
        })
        .collect();
    let mut result = VrsResult::from_group_counts(&counts);
    result.per_type = type_tally
        .into_iter()
        .map(|(t, (ok, n))| (t, percent(ok, n)))
        .collect();
    Ok(result)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementResult {
    pub n: usize,
    pub observed_agreement: f64,
    pub expected_agreement: f64,
    pub kappa: f64,
    /// Set when both raters used a single identical label (p_e = 1).
    pub degenerate: bool,
}

/// Two-rater Cohen's kappa over aligned label sequences. The same call gives
/// a rater's self-consistency when fed their first and second pass.
pub fn cohens_kappa<T: Eq + Hash + Ord>(labels_a: &[T], labels_b: &[T]) -> Result<AgreementResult, MetricsError> {
    if labels_a.len() != labels_b.len() {
        return Err(MetricsError::LengthMismatch(labels_a.len(), labels_b.len()));
    }
    let n = labels_a.len();
    if n == 0 {
        return Err(MetricsError::Empty);
    }
    let mut marg_a: BTreeMap<&T, usize> = BTreeMap::new();
    let mut marg_b: BTreeMap<&T, usize> = BTreeMap::new();
    let mut agree = 0usize;
    for (a, b) in labels_a.iter().zip(labels_b) {
        *marg_a.entry(a).or_default() += 1;
        *marg_b.entry(b).or_default() += 1;
        if a == b {
            agree += 1;
        }
    }
    let nf = n as f64;
    let p_o = agree as f64 / nf;
    let alphabet: BTreeSet<&T> = marg_a.keys().chain(marg_b.keys()).copied().collect();
    let p_e: f64 = alphabet
        .iter()
        .map(|l| {
            let a = *marg_a.get(l).unwrap_or(&0) as f64 / nf;
            let b = *marg_b.get(l).unwrap_or(&0) as f64 / nf;
            a * b
        })
        .sum();
    let degenerate = (1.0 - p_e).abs() < 1e-12;
    let kappa = if degenerate {
        if agree == n {
            1.0
        } else {
            0.0
        }
    } else {
        (p_o - p_e) / (1.0 - p_e)
    };
    Ok(AgreementResult {
        n,
        observed_agreement: p_o,
        expected_agreement: p_e,
        kappa,
        degenerate,
    })
}

/// Attention weights indexed `[layer][head][query][key]`.
pub type AttentionStack = [Vec<Vec<Vec<f64>>>];

const ROW_SUM_TOL: f64 = 1e-5;

/// Mean attention mass that answer-token queries place on 3D-token keys.
///
/// For each answer row the weights over `span_3d` are summed; the result is
/// averaged over answer rows, heads and layers, so uniform attention over L
/// keys with m of them in the 3D span gives m / L.
pub fn attention_dependency(
    attn: &AttentionStack,
    span_3d: Range<usize>,
    span_answer: Range<usize>,
) -> Result<f64, MetricsError> {
    if attn.is_empty() || span_3d.is_empty() || span_answer.is_empty() {
        return Err(MetricsError::ShapeMismatch("empty layers or spans".into()));
    }
    let mut total = 0.0;
    let mut rows_seen = 0usize;
    for (li, layer) in attn.iter().enumerate() {
        if layer.is_empty() {
            return Err(MetricsError::ShapeMismatch(format!("layer {li} has no heads")));
        }
        for (hi, head) in layer.iter().enumerate() {
            if span_answer.end > head.len() {
                return Err(MetricsError::ShapeMismatch(format!(
                    "layer {li} head {hi}: {} query rows, answer span ends at {}",
                    head.len(),
                    span_answer.end
                )));
            }
            for (ri, row) in head.iter().enumerate() {
                if span_3d.end > row.len() {
                    return Err(MetricsError::ShapeMismatch(format!(
                        "layer {li} head {hi} row {ri}: {} keys, 3D span ends at {}",
                        row.len(),
                        span_3d.end
                    )));
                }
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > ROW_SUM_TOL || row.iter().any(|w| *w < 0.0) {
                    return Err(MetricsError::NonStochasticRow { layer: li, head: hi, row: ri, sum });
                }
            }
            for row in &head[span_answer.clone()] {
                total += row[span_3d.clone()].iter().sum::<f64>();
                rows_seen += 1;
            }
        }
    }
    Ok((total / rows_seen as f64).clamp(0.0, 1.0))
}
