//! Consolidated run report with consistency checks and table rendering.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::augment::VariantsReport;
use crate::error::PipelineError;
use crate::filter::FilterReport;
use crate::metrics::{round_half_up, AccuracyReport, AgreementResult, VrsResult};
use crate::model::Category;
use crate::reweight::toy::DemoReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Section {
    Filter,
    Variants,
    Accuracy,
    Vrs,
    Agreement,
    RftDemo,
}

impl Section {
    pub const ALL: [Section; 6] = [
        Section::Filter,
        Section::Variants,
        Section::Accuracy,
        Section::Vrs,
        Section::Agreement,
        Section::RftDemo,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Section::Filter => "filter",
            Section::Variants => "variants",
            Section::Accuracy => "accuracy",
            Section::Vrs => "vrs",
            Section::Agreement => "agreement",
            Section::RftDemo => "rft_demo",
        }
    }

    pub fn parse(s: &str) -> Option<Section> {
        Section::ALL.into_iter().find(|x| x.as_str() == s.replace('-', "_"))
    }
}

/// Component reports; metric maps are keyed by model id.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    #[serde(default)]
    pub filter: Option<FilterReport>,
    #[serde(default)]
    pub variants: Option<VariantsReport>,
    #[serde(default)]
    pub accuracy: BTreeMap<String, AccuracyReport>,
    #[serde(default)]
    pub vrs: BTreeMap<String, VrsResult>,
    #[serde(default)]
    pub agreement: Option<AgreementResult>,
    #[serde(default)]
    pub rft_demo: Option<DemoReport>,
}

fn inconsistent(msg: String) -> PipelineError {
    PipelineError::InconsistentReport(msg)
}

impl StatsReport {
    pub fn has(&self, section: Section) -> bool {
        match section {
            Section::Filter => self.filter.is_some(),
            Section::Variants => self.variants.is_some(),
            Section::Accuracy => !self.accuracy.is_empty(),
            Section::Vrs => !self.vrs.is_empty(),
            Section::Agreement => self.agreement.is_some(),
            Section::RftDemo => self.rft_demo.is_some(),
        }
    }

    pub fn sections(&self) -> Vec<Section> {
        Section::ALL.into_iter().filter(|s| self.has(*s)).collect()
    }

    pub fn require(&self, required: &[Section]) -> Result<(), PipelineError> {
        match required.iter().find(|s| !self.has(**s)) {
            Some(s) => Err(PipelineError::MissingSection(s.as_str().to_string())),
            None => Ok(()),
        }
    }

    /// Recomputes totals from each component's parts.
    pub fn verify(&self) -> Result<(), PipelineError> {
        if let Some(f) = &self.filter {
            let per_model: usize = f.per_model_filtered.values().sum();
            if per_model != f.model_union_filtered {
                return Err(inconsistent(format!(
                    "per-model removals sum to {per_model}, union is {}",
                    f.model_union_filtered
                )));
            }
            if f.model_union_filtered + f.gpt_filtered + f.final_count != f.original_count {
                return Err(inconsistent(format!(
                    "{} + {} + {} != original {}",
                    f.model_union_filtered, f.gpt_filtered, f.final_count, f.original_count
                )));
            }
            if f.removed_qids.len() != f.model_union_filtered + f.gpt_filtered || f.kept_qids.len() != f.final_count {
                return Err(inconsistent("filter qid lists disagree with counts".into()));
            }
        }
        if let Some(v) = &self.variants {
            if v.valid + v.answer_corrected + v.invalid != 3 * v.groups {
                return Err(inconsistent(format!("variant verdicts do not add up to 3 × {} groups", v.groups)));
            }
            if v.invalid_by_rotation.values().sum::<usize>() != v.invalid {
                return Err(inconsistent("invalid-by-rotation counts do not sum to invalid".into()));
            }
        }
        for (model, a) in &self.accuracy {
            let total: usize = a.per_category.values().map(|c| c.total).sum();
            let correct: usize = a.per_category.values().map(|c| c.correct).sum();
            if total != a.total || correct != a.correct {
                return Err(inconsistent(format!("{model}: category columns do not sum to the overall")));
            }
        }
        for (model, r) in &self.vrs {
            let monotone = r.n_k.windows(2).all(|w| w[0] >= w[1]);
            if !monotone || r.n_k[0] > r.n_total {
                return Err(inconsistent(format!("{model}: N_k is not non-increasing within N_total")));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable")
    }

    /// Filter statistics, then accuracy/VRS by model.
    pub fn to_markdown(&self) -> String {
        let mut out = String::new();
        if let Some(f) = &self.filter {
            out.push_str("## Filtered questions\n\n| Stage | Questions |\n|---|---:|\n");
            let _ = writeln!(out, "| Original | {} |", f.original_count);
            for model in &f.cascade_order {
                let _ = writeln!(out, "| Filtered by {model} | {} |", f.per_model_filtered.get(model).copied().unwrap_or(0));
            }
            let _ = writeln!(out, "| Filtered by text-only LLM | {} |", f.gpt_filtered);
            let _ = writeln!(out, "| Final | {} |\n", f.final_count);
        }
        if let Some(v) = &self.variants {
            out.push_str("## Rotated variants\n\n| Groups | Exportable | Valid | Answer corrected | Invalid | Needs review |\n|---:|---:|---:|---:|---:|---:|\n");
            let _ = writeln!(
                out,
                "| {} | {} | {} | {} | {} | {} |\n",
                v.groups, v.exportable_groups, v.valid, v.answer_corrected, v.invalid, v.needs_review
            );
        }
        let rows = self.table_rows();
        if rows.len() > 1 {
            out.push_str("## Accuracy and rotation consistency\n\n");
            let _ = writeln!(out, "| {} |", rows[0].join(" | "));
            let _ = writeln!(out, "|{}|", rows[0].iter().map(|_| "---").collect::<Vec<_>>().join("|"));
            for r in &rows[1..] {
                let _ = writeln!(out, "| {} |", r.join(" | "));
            }
            out.push('\n');
        }
        if let Some(a) = &self.agreement {
            let _ = writeln!(
                out,
                "## Reviewer agreement\n\nn = {}, observed = {:.3}, kappa = {:.3}{}\n",
                a.n,
                a.observed_agreement,
                a.kappa,
                if a.degenerate { " (degenerate)" } else { "" }
            );
        }
        if let Some(d) = &self.rft_demo {
            out.push_str("## Reweighting demo\n\n| Seed | Blind acc (guessable) | Blind acc (dependent) | mean δ SFT | mean δ RFT |\n|---:|---:|---:|---:|---:|\n");
            for s in &d.seeds {
                let _ = writeln!(
                    out,
                    "| {} | {:.1} | {:.1} | {:.3} | {:.3} |",
                    s.seed,
                    100.0 * s.blind_acc_guessable,
                    100.0 * s.blind_acc_dependent,
                    s.sft_delta_dependent,
                    s.rft_delta_dependent
                );
            }
            out.push('\n');
        }
        out
    }

    /// Header row plus one row per model: overall, categories present, P_1..P_4, VRS.
    pub fn table_rows(&self) -> Vec<Vec<String>> {
        let categories: Vec<Category> = Category::ALL
            .into_iter()
            .filter(|c| self.accuracy.values().any(|a| a.per_category.get(c).is_some_and(|s| s.total > 0)))
            .collect();
        let mut header = vec!["model".to_string(), "overall".to_string()];
        header.extend(categories.iter().map(|c| c.as_str().to_string()));
        header.extend(["P1", "P2", "P3", "P4", "VRS"].map(String::from));
        let fmt = |x: Option<f64>| x.map_or_else(String::new, |v| format!("{:.1}", round_half_up(v, 1)));
        let models: std::collections::BTreeSet<&String> = self.accuracy.keys().chain(self.vrs.keys()).collect();
        let mut rows = vec![header];
        for m in models {
            let acc = self.accuracy.get(m);
            let vrs = self.vrs.get(m);
            let mut row = vec![m.clone(), fmt(acc.map(|a| a.overall))];
            row.extend(
                categories
                    .iter()
                    .map(|c| fmt(acc.and_then(|a| a.per_category.get(c)).and_then(|s| s.accuracy))),
            );
            row.extend((0..4).map(|k| fmt(vrs.map(|v| v.p_k[k]))));
            row.push(fmt(vrs.map(|v| v.vrs)));
            rows.push(row);
        }
        rows
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        for row in self.table_rows() {
            w.write_record(&row).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn filter_report() -> FilterReport {
        FilterReport {
            matcher: "em_r".into(),
            original_count: 10,
            cascade_order: vec!["m1".into(), "m2".into()],
            per_model_independent: BTreeMap::from([("m1".into(), 3), ("m2".into(), 3)]),
            per_model_filtered: BTreeMap::from([("m1".into(), 3), ("m2".into(), 1)]),
            model_union_filtered: 4,
            gpt_filtered: 2,
            final_count: 4,
            removed_qids: (0..6).map(|i| format!("q{i}")).collect(),
            kept_qids: (6..10).map(|i| format!("q{i}")).collect::<BTreeSet<_>>(),
            empty_benchmark: false,
        }
    }

    #[test]
    fn filter_only_report_has_empty_metric_sections() {
        let r = StatsReport {
            filter: Some(filter_report()),
            ..StatsReport::default()
        };
        assert_eq!(r.sections(), vec![Section::Filter]);
        r.verify().unwrap();
        assert_eq!(
            r.require(&[Section::Filter, Section::Vrs]),
            Err(PipelineError::MissingSection("vrs".into()))
        );
        let json: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(json["vrs"], serde_json::json!({}));
        assert!(r.to_markdown().contains("| Final | 4 |"));
    }

    #[test]
    fn column_sums_are_rechecked() {
        let mut f = filter_report();
        f.gpt_filtered = 3;
        let r = StatsReport {
            filter: Some(f),
            ..StatsReport::default()
        };
        assert!(matches!(r.verify(), Err(PipelineError::InconsistentReport(_))));
    }

    #[test]
    fn csv_has_header_and_model_rows() {
        let mut r = StatsReport::default();
        r.vrs.insert("m,1".into(), VrsResult::from_group_counts(&[4, 3, 0]));
        let csv = r.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "model,overall,P1,P2,P3,P4,VRS");
        assert!(lines[1].starts_with("\"m,1\","));
    }
}
