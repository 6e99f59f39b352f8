//! Removal of 3D-independent questions.
//!
//! A question is 3D-independent for a model when both the full model and its
//! blind (text-only) counterpart answer it correctly. The union of those sets
//! over all models is removed first; a text-only LLM pass then removes what it
//! can answer among the remaining questions.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::FilterError;
use crate::metrics::MatchPolicy;
use crate::model::QARecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "full")]
    Full,
    #[serde(rename = "blind")]
    Blind,
    #[serde(rename = "llm")]
    TextOnlyLLM,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Full => "full",
            Variant::Blind => "blind",
            Variant::TextOnlyLLM => "llm",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub qid: String,
    pub model_id: String,
    pub variant: Variant,
    pub predicted_answer: String,
}

/// Predictions from one model under one conditioning, indexed by qid.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionFile {
    model_id: String,
    variant: Variant,
    by_qid: BTreeMap<String, String>,
}

impl PredictionFile {
    /// Fails on duplicate qids and on files that mix models or variants.
    pub fn new(name: &str, records: Vec<PredictionRecord>) -> Result<Self, FilterError> {
        let first = records
            .first()
            .ok_or_else(|| FilterError::CoverageMismatch {
                context: format!("{name} is empty"),
                missing: Vec::new(),
            })?;
        let model_id = first.model_id.clone();
        let variant = first.variant;
        let mut by_qid = BTreeMap::new();
        for rec in records {
            if rec.model_id != model_id || rec.variant != variant {
                return Err(FilterError::MixedFile(name.to_string()));
            }
            if by_qid.contains_key(&rec.qid) {
                return Err(FilterError::DuplicatePrediction {
                    qid: rec.qid,
                    model_id: rec.model_id,
                    variant: rec.variant.to_string(),
                });
            }
            by_qid.insert(rec.qid, rec.predicted_answer);
        }
        Ok(Self { model_id, variant, by_qid })
    }

    pub fn model_id(&self) -> &str {
        &self.model_id
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn answers(&self) -> &BTreeMap<String, String> {
        &self.by_qid
    }

    pub fn get(&self, qid: &str) -> Option<&str> {
        self.by_qid.get(qid).map(String::as_str)
    }

    fn missing<'a>(&self, qids: impl IntoIterator<Item = &'a str>) -> Vec<String> {
        qids.into_iter()
            .filter(|q| !self.by_qid.contains_key(*q))
            .map(str::to_string)
            .collect()
    }
}

/// Full and blind prediction files for one model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelRun {
    pub full: PredictionFile,
    pub blind: PredictionFile,
}

impl ModelRun {
    pub fn new(full: PredictionFile, blind: PredictionFile) -> Result<Self, FilterError> {
        if full.variant != Variant::Full || blind.variant != Variant::Blind || full.model_id != blind.model_id {
            return Err(FilterError::MixedFile(format!(
                "{}:{} / {}:{}",
                full.model_id, full.variant, blind.model_id, blind.variant
            )));
        }
        Ok(Self { full, blind })
    }

    pub fn model_id(&self) -> &str {
        &self.full.model_id
    }
}

pub fn correctness(pred: &PredictionRecord, gold: &QARecord, matcher: &MatchPolicy) -> Result<bool, FilterError> {
    if pred.qid != gold.qid {
        return Err(FilterError::QidMismatch {
            pred: pred.qid.clone(),
            gold: gold.qid.clone(),
        });
    }
    Ok(matcher.matches(&pred.predicted_answer, &gold.answer))
}

/// Questions where both the full and the blind model are correct.
pub fn independent_set(run: &ModelRun, gold: &[QARecord], matcher: &MatchPolicy) -> Result<BTreeSet<String>, FilterError> {
    let qids = || gold.iter().map(|r| r.qid.as_str());
    let mut missing = run.full.missing(qids());
    missing.extend(run.blind.missing(qids()));
    if !missing.is_empty() {
        missing.sort();
        missing.dedup();
        return Err(FilterError::CoverageMismatch {
            context: format!("model {}", run.model_id()),
            missing,
        });
    }
    Ok(gold
        .iter()
        .filter(|r| {
            matcher.matches(&run.full.by_qid[&r.qid], &r.answer) && matcher.matches(&run.blind.by_qid[&r.qid], &r.answer)
        })
        .map(|r| r.qid.clone())
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterReport {
    pub matcher: String,
    pub original_count: usize,
    /// Model ids in the order their removals were counted.
    pub cascade_order: Vec<String>,
    /// Size of each model's independent set, before de-duplication.
    pub per_model_independent: BTreeMap<String, usize>,
    /// Questions first removed by each model, in cascade order.
    pub per_model_filtered: BTreeMap<String, usize>,
    pub model_union_filtered: usize,
    /// Questions removed by the text-only LLM pass (only counted among survivors of the model union).
    pub gpt_filtered: usize,
    pub final_count: usize,
    pub removed_qids: BTreeSet<String>,
    pub kept_qids: BTreeSet<String>,
    pub empty_benchmark: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkBuild {
    pub report: FilterReport,
    pub kept: Vec<QARecord>,
}

/// Runs the filtering cascade: model-comparison union first, LLM pass second.
pub fn build_benchmark(
    gold: &[QARecord],
    runs: &[ModelRun],
    llm_preds: &PredictionFile,
    matcher: &MatchPolicy,
) -> Result<BenchmarkBuild, FilterError> {
    if runs.is_empty() {
        return Err(FilterError::NoRuns);
    }
    let mut seen_models = BTreeSet::new();
    for run in runs {
        if !seen_models.insert(run.model_id()) {
            return Err(FilterError::DuplicateModel(run.model_id().to_string()));
        }
    }

    let mut union: BTreeSet<String> = BTreeSet::new();
    let mut cascade_order = Vec::with_capacity(runs.len());
    let mut per_model_independent = BTreeMap::new();
    let mut per_model_filtered = BTreeMap::new();
    for run in runs {
        let independent = independent_set(run, gold, matcher)?;
        let before = union.len();
        per_model_independent.insert(run.model_id().to_string(), independent.len());
        union.extend(independent);
        per_model_filtered.insert(run.model_id().to_string(), union.len() - before);
        cascade_order.push(run.model_id().to_string());
    }

    let remaining: Vec<&QARecord> = gold.iter().filter(|r| !union.contains(&r.qid)).collect();
    let missing = llm_preds.missing(remaining.iter().map(|r| r.qid.as_str()));
    if !missing.is_empty() {
        return Err(FilterError::CoverageMismatch {
            context: format!("llm predictions ({})", llm_preds.model_id),
            missing,
        });
    }
    let llm_solved: BTreeSet<String> = remaining
        .iter()
        .filter(|r| matcher.matches(&llm_preds.by_qid[&r.qid], &r.answer))
        .map(|r| r.qid.clone())
        .collect();

    let model_union_filtered = union.len();
    let gpt_filtered = llm_solved.len();
    let mut removed_qids = union;
    removed_qids.extend(llm_solved);
    let kept: Vec<QARecord> = gold.iter().filter(|r| !removed_qids.contains(&r.qid)).cloned().collect();
    let kept_qids: BTreeSet<String> = kept.iter().map(|r| r.qid.clone()).collect();

    let report = FilterReport {
        matcher: matcher.name().to_string(),
        original_count: gold.len(),
        cascade_order,
        per_model_independent,
        per_model_filtered,
        model_union_filtered,
        gpt_filtered,
        final_count: kept.len(),
        removed_qids,
        kept_qids,
        empty_benchmark: kept.is_empty(),
    };
    Ok(BenchmarkBuild { report, kept })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Category, ObserverPose, Vec3};

    fn gold(qid: &str, answer: &str) -> QARecord {
        QARecord {
            qid: qid.into(),
            scene_id: "s".into(),
            pose: ObserverPose::new(Vec3::ZERO, 0.0).unwrap(),
            situation: String::new(),
            question: "q".into(),
            answer: answer.into(),
            category: Category::Object,
            vrs_type: None,
            group_id: qid.into(),
            rotation_deg: 0,
        }
    }

    fn pred(qid: &str, model: &str, variant: Variant, ans: &str) -> PredictionRecord {
        PredictionRecord {
            qid: qid.into(),
            model_id: model.into(),
            variant,
            predicted_answer: ans.into(),
        }
    }

    fn file(model: &str, variant: Variant, answers: &[(&str, &str)]) -> PredictionFile {
        PredictionFile::new(
            model,
            answers.iter().map(|(q, a)| pred(q, model, variant, a)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn correctness_examples() {
        let g = gold("q1", "whiteboard");
        assert!(correctness(&pred("q1", "m", Variant::Full, "whiteboard"), &g, &MatchPolicy::EM).unwrap());
        assert!(correctness(&pred("q1", "m", Variant::Full, "the whiteboard"), &g, &MatchPolicy::EM_R).unwrap());
        assert!(!correctness(&pred("q1", "m", Variant::Full, "table"), &g, &MatchPolicy::EM_R).unwrap());
        assert!(matches!(
            correctness(&pred("q2", "m", Variant::Full, "x"), &g, &MatchPolicy::EM),
            Err(FilterError::QidMismatch { .. })
        ));
    }

    #[test]
    fn duplicate_prediction_is_hard_error() {
        let recs = vec![pred("q1", "m", Variant::Full, "a"), pred("q1", "m", Variant::Full, "b")];
        assert!(matches!(
            PredictionFile::new("f", recs),
            Err(FilterError::DuplicatePrediction { .. })
        ));
    }

    #[test]
    fn independent_requires_both_correct() {
        let g = vec![gold("q1", "chair"), gold("q2", "table")];
        let run = ModelRun::new(
            file("m", Variant::Full, &[("q1", "chair"), ("q2", "table")]),
            file("m", Variant::Blind, &[("q1", "chair"), ("q2", "sofa")]),
        )
        .unwrap();
        let set = independent_set(&run, &g, &MatchPolicy::EM).unwrap();
        assert_eq!(set, BTreeSet::from(["q1".to_string()]));
    }

    #[test]
    fn coverage_mismatch_lists_missing() {
        let g = vec![gold("q1", "chair"), gold("q2", "table")];
        let run = ModelRun::new(
            file("m", Variant::Full, &[("q1", "chair")]),
            file("m", Variant::Blind, &[("q1", "chair"), ("q2", "x")]),
        )
        .unwrap();
        match independent_set(&run, &g, &MatchPolicy::EM) {
            Err(FilterError::CoverageMismatch { missing, .. }) => assert_eq!(missing, vec!["q2".to_string()]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn ten_question_cascade() {
        // model marks q0..q3 independent; LLM solves q4, q5 of the remaining six
        let g: Vec<QARecord> = (0..10).map(|i| gold(&format!("q{i}"), "yes")).collect();
        let ans = |correct: &dyn Fn(usize) -> bool| -> Vec<(String, String)> {
            (0..10)
                .map(|i| (format!("q{i}"), if correct(i) { "yes" } else { "no" }.to_string()))
                .collect()
        };
        let to_file = |m: &str, v: Variant, a: Vec<(String, String)>| {
            PredictionFile::new(m, a.into_iter().map(|(q, x)| pred(&q, m, v, &x)).collect()).unwrap()
        };
        let run = ModelRun::new(
            to_file("leo", Variant::Full, ans(&|i| i < 6)),
            to_file("leo", Variant::Blind, ans(&|i| i < 4 || i == 8)),
        )
        .unwrap();
        let llm = to_file("gpt", Variant::TextOnlyLLM, ans(&|i| i == 4 || i == 5 || i == 0));
        let build = build_benchmark(&g, &[run], &llm, &MatchPolicy::EM_R).unwrap();
        assert_eq!(build.report.final_count, 4);
        assert_eq!(build.report.model_union_filtered, 4);
        // q0 was also LLM-solvable but is only counted by the model stage
        assert_eq!(build.report.gpt_filtered, 2);
        assert_eq!(
            build.report.kept_qids,
            ["q6", "q7", "q8", "q9"].iter().map(|s| s.to_string()).collect()
        );
    }

    #[test]
    fn nothing_filtered_keeps_gold() {
        let g = vec![gold("q1", "chair"), gold("q2", "table")];
        let run = ModelRun::new(
            file("m", Variant::Full, &[("q1", "x"), ("q2", "y")]),
            file("m", Variant::Blind, &[("q1", "x"), ("q2", "y")]),
        )
        .unwrap();
        let llm = file("gpt", Variant::TextOnlyLLM, &[("q1", "x"), ("q2", "y")]);
        let build = build_benchmark(&g, &[run], &llm, &MatchPolicy::EM_R).unwrap();
        assert_eq!(build.kept, g);
        assert!(build.report.removed_qids.is_empty());
    }

    #[test]
    fn llm_only_needs_to_cover_survivors() {
        let g = vec![gold("q1", "chair"), gold("q2", "table")];
        let run = ModelRun::new(
            file("m", Variant::Full, &[("q1", "chair"), ("q2", "y")]),
            file("m", Variant::Blind, &[("q1", "chair"), ("q2", "y")]),
        )
        .unwrap();
        let llm = file("gpt", Variant::TextOnlyLLM, &[("q2", "table")]);
        let build = build_benchmark(&g, std::slice::from_ref(&run), &llm, &MatchPolicy::EM_R).unwrap();
        assert!(build.report.empty_benchmark);
        assert_eq!(build.report.final_count, 0);

        let llm_short = file("gpt", Variant::TextOnlyLLM, &[("q1", "table")]);
        assert!(matches!(
            build_benchmark(&g, &[run], &llm_short, &MatchPolicy::EM_R),
            Err(FilterError::CoverageMismatch { .. })
        ));
    }
}
