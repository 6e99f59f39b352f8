//! Acceptance suite: one PASS/FAIL line per criterion. Exits non-zero if any fails.

mod common;

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{random_logprobs, record, CorrectnessTable};
use sqa_forge_core::augment::{augment_group, rotate_record, DirectionalLexicon, RotatedVariant, Validity};
use sqa_forge_core::filter::{build_benchmark, Variant};
use sqa_forge_core::metrics::{answers_match, cohens_kappa, round_half_up, vrs, MatchPolicy};
use sqa_forge_core::model::heading_distance;
use sqa_forge_core::pipeline::fixtures::{direction_groups, synthetic_seeds};
use sqa_forge_core::pipeline::{run_mock, BlindPrior, GeometricOracle, MockAnswerer};
use sqa_forge_core::reweight::toy::{
    gradient_check, rft_demo, DatasetConfig, DemoConfig, Objective, ObjectiveContext, ToyDataset, ToyModel,
};
use sqa_forge_core::reweight::{cross_entropy, decompose_sequences, rft_loss, ReweightConfig};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

/// Synthetic correctness table whose k-correct counts reproduce a P-vector over 1000 groups.
fn vrs_from_p_vector(p: [f64; 4]) -> f64 {
    let n_total = 1000usize;
    let n_k = p.map(|x| (x * n_total as f64 / 100.0).round() as usize);
    let mut exactly = [0usize; 5];
    exactly[4] = n_k[3];
    for k in (1..4).rev() {
        exactly[k] = n_k[k - 1] - n_k[k];
    }
    exactly[0] = n_total - n_k[0];
    let mut gold = Vec::new();
    let mut preds = BTreeMap::new();
    let mut g = 0;
    for (correct, &count) in exactly.iter().enumerate() {
        for _ in 0..count {
            for (slot, rot) in [0u32, 90, 180, 270].into_iter().enumerate() {
                let qid = format!("g{g}_r{rot}");
                gold.push(record(&qid, &format!("g{g}"), rot, "yes"));
                preds.insert(qid, if slot < correct { "yes" } else { "no" }.to_string());
            }
            g += 1;
        }
    }
    vrs(&preds, &gold, &MatchPolicy::EM_R).expect("well-formed groups").vrs
}

fn vrs_rows() -> Outcome {
    let rows = [([46.9, 8.1, 1.6, 0.4], 14.3), ([55.5, 14.3, 2.5, 0.5], 18.2)];
    let mut ok = true;
    let mut parts = Vec::new();
    for (p, expected) in rows {
        let got = round_half_up(vrs_from_p_vector(p), 1);
        ok &= (got - expected).abs() <= 0.05;
        parts.push(format!("{p:?} -> {got} (expected {expected})"));
    }
    outcome(ok, parts.join("; "))
}

fn decomposition() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let batch: Vec<_> = (0..1000).map(|_| random_logprobs(&mut rng, 32, 1e-8)).collect();
    let cfg = ReweightConfig::uncapped();
    let parts = match decompose_sequences(&batch, &cfg) {
        Ok(p) => p,
        Err(e) => return outcome(false, format!("decomposition refused: {e}")),
    };
    let max_residual = parts.iter().map(|d| d.residual.abs()).fold(0.0, f64::max);
    let weights = rft_loss(&batch, &cfg).expect("valid batch").per_token_w;
    let mut max_identity = 0.0f64;
    for (seq, w) in batch.iter().zip(&weights) {
        for ((w, lt), lb) in w.iter().zip(&seq.lp_text).zip(&seq.lp_blind) {
            max_identity = max_identity.max((w * lt - lb).abs());
        }
    }
    outcome(
        max_residual < 1e-9 && max_identity < 1e-12,
        format!("max |residual| = {max_residual:.2e} (< 1e-9), max |w·lp_text − lp_blind| = {max_identity:.2e} (< 1e-12)"),
    )
}

fn reduction() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let batch: Vec<_> = (0..200).map(|_| random_logprobs(&mut rng, 32, 1e-4)).collect();
    let report = rft_loss(&batch, &ReweightConfig::unit_weights()).expect("valid batch");
    let ce = cross_entropy(&batch);
    let all_unit = report.per_token_w.iter().flatten().all(|w| *w == 1.0);
    outcome(
        report.loss.to_bits() == ce.to_bits() && all_unit,
        format!("rft_loss = {:?}, cross-entropy = {ce:?}", report.loss),
    )
}

fn gradients() -> Outcome {
    let mut worst: BTreeMap<&str, f64> = BTreeMap::new();
    let mut checks = 0;
    for seed in 0..5u64 {
        let data = ToyDataset::generate(DatasetConfig {
            n_train: 48,
            n_eval: 0,
            seed,
            ..DatasetConfig::default()
        })
        .expect("valid dataset");
        let blind = ToyModel::random(data.vocab, data.text_dim, data.dim_3d, 0.5, 1000 + seed).expect("model");
        for point in 0..10u64 {
            let model = ToyModel::random(data.vocab, data.text_dim, data.dim_3d, 0.5, seed * 100 + point).expect("model");
            for obj in Objective::ALL {
                let ctx = ObjectiveContext::new(obj, Some(&blind), ReweightConfig::default());
                let err = gradient_check(&ctx, &model, &data.train, 1e-5).expect("gradient check runs");
                let w = worst.entry(obj.as_str()).or_insert(0.0);
                *w = w.max(err);
                checks += 1;
            }
        }
    }
    let ok = worst.values().all(|e| *e < 1e-4);
    let detail = worst
        .iter()
        .map(|(o, e)| format!("{o} max rel err {e:.2e}"))
        .collect::<Vec<_>>()
        .join(", ");
    outcome(ok, format!("{checks} checks; {detail} (< 1e-4)"))
}

fn shortcut_effect() -> Outcome {
    let cfg = DemoConfig::default();
    let report = match rft_demo(&cfg) {
        Ok(r) => r,
        Err(e) => return outcome(false, format!("demo failed: {e}")),
    };
    let detail = report
        .seeds
        .iter()
        .map(|s| {
            format!(
                "seed {}: blind {:.1}%/{:.1}% δ sft {:.3} < rft {:.3}",
                s.seed,
                100.0 * s.blind_acc_guessable,
                100.0 * s.blind_acc_dependent,
                s.sft_delta_dependent,
                s.rft_delta_dependent
            )
        })
        .collect::<Vec<_>>()
        .join("; ");
    outcome(
        report.guessable_frac == 0.3 && report.seeds.len() == 5 && report.all_shortcut_ok() && report.all_dependency_ok(),
        detail,
    )
}

fn filter_algebra() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let matcher = MatchPolicy::EM_R;
    let mut oracle_cases = 0;
    let mut property_cases = 0;
    for case in 0..200 {
        let n = rng.random_range(10..80);
        let table = CorrectnessTable::random(&mut rng, n, 4);
        let build = build_benchmark(&table.gold, &table.runs(&[0, 1, 2]), &table.llm_file(), &matcher).expect("build");
        if build.report.kept_qids != table.kept_oracle(&[0, 1, 2]) {
            return outcome(false, format!("case {case}: kept set differs from the set-comprehension oracle"));
        }
        let kept: Vec<&str> = build.kept.iter().map(|r| r.qid.as_str()).collect();
        if kept.len() != build.report.final_count || !kept.iter().all(|q| build.report.kept_qids.contains(*q)) {
            return outcome(false, format!("case {case}: kept records disagree with the report"));
        }
        oracle_cases += 1;
        for _ in 0..5 {
            let mut order = vec![0, 1, 2];
            order.shuffle(&mut rng);
            let permuted = build_benchmark(&table.gold, &table.runs(&order), &table.llm_file(), &matcher).expect("build");
            if permuted.report.kept_qids != build.report.kept_qids
                || permuted.report.model_union_filtered != build.report.model_union_filtered
            {
                return outcome(false, format!("case {case}: result depends on run order {order:?}"));
            }
            order.push(3);
            let grown = build_benchmark(&table.gold, &table.runs(&order), &table.llm_file(), &matcher).expect("build");
            if !grown.report.kept_qids.is_subset(&build.report.kept_qids) {
                return outcome(false, format!("case {case}: adding a run grew the kept set"));
            }
            property_cases += 2;
        }
    }
    outcome(
        true,
        format!("{oracle_cases} tables match the oracle; {property_cases} permutation/addition checks hold"),
    )
}

fn rotation_laws() -> Outcome {
    let lexicon = DirectionalLexicon::default();
    let (scenes, seeds) = synthetic_seeds(500, 4, &lexicon);
    let mut max_heading_err = 0.0f64;
    let mut composed = 0;
    let mut checkable_groups = Vec::new();
    for seed in &seeds {
        let scene = &scenes[&seed.scene_id];
        let half = rotate_record(seed, 90, scene, &lexicon).expect("rotate");
        let twice = rotate_record(&half.record, 90, scene, &lexicon).expect("rotate");
        let once = rotate_record(seed, 180, scene, &lexicon).expect("rotate");
        let (a, b) = (&twice.record, &once.record);
        let pose_ok = a.qid == b.qid
            && a.rotation_deg == b.rotation_deg
            && heading_distance(a.pose.heading_rad, b.pose.heading_rad) <= 1e-12;
        let invalid = |v: &RotatedVariant| v.validity == Validity::Invalid;
        let text_ok = if invalid(&half) || invalid(&twice) || invalid(&once) {
            invalid(&twice) == invalid(&once) || invalid(&half)
        } else {
            composed += 1;
            a.situation == b.situation && a.question == b.question && a.answer == b.answer
        };
        if !(pose_ok && text_ok) {
            return outcome(false, format!("{}: 90∘90 differs from 180", seed.qid));
        }
        let mut r = seed.clone();
        for _ in 0..4 {
            r = rotate_record(&r, 90, scene, &lexicon).expect("rotate").record;
        }
        max_heading_err = max_heading_err.max(heading_distance(r.pose.heading_rad, seed.pose.heading_rad));
        if r.situation != seed.situation || r.question != seed.question || r.answer != seed.answer || r.qid != seed.qid {
            return outcome(false, format!("{}: four quarter turns do not restore the seed", seed.qid));
        }
        let group = augment_group(seed, scene, &lexicon).expect("augment");
        if group.is_exportable() && group.members().all(|v| v.record.vrs_type.is_some()) {
            checkable_groups.push(group);
        }
    }
    let gold: Vec<_> = checkable_groups.iter().flat_map(|g| g.records()).collect();
    let oracle = MockAnswerer::GeometricOracle(GeometricOracle { lexicon });
    let preds: BTreeMap<String, String> = run_mock(&oracle, &gold, &scenes, "oracle", Variant::Full)
        .into_iter()
        .map(|p| (p.qid, p.predicted_answer))
        .collect();
    let result = vrs(&preds, &gold, &MatchPolicy::EM_R).expect("groups");
    let corrected = checkable_groups
        .iter()
        .flat_map(|g| g.members())
        .filter(|v| v.validity == Validity::AnswerCorrected)
        .count();
    outcome(
        max_heading_err <= 1e-12 && result.vrs == 100.0 && !checkable_groups.is_empty(),
        format!(
            "500 fixtures ({composed} with valid 90∘90 and 180 compared textually); max heading error {max_heading_err:.1e}; oracle VRS {} on {} checkable groups ({corrected} oracle-corrected variants)",
            result.vrs,
            checkable_groups.len()
        ),
    )
}

fn blind_prior_gap() -> Outcome {
    let lexicon = DirectionalLexicon::default();
    let (_, train_groups) = direction_groups(2000, 5, &lexicon);
    let (scenes, test_groups) = direction_groups(4000, 6, &lexicon);
    let train: Vec<_> = train_groups.iter().flat_map(|g| g.records()).collect();
    let test: Vec<_> = test_groups.iter().flat_map(|g| g.records()).collect();
    let prior = MockAnswerer::BlindPrior(BlindPrior::fit(&train, 11));
    let preds: BTreeMap<String, String> = run_mock(&prior, &test, &scenes, "blind-prior", Variant::Blind)
        .into_iter()
        .map(|p| (p.qid, p.predicted_answer))
        .collect();
    let result = vrs(&preds, &test, &MatchPolicy::EM_R).expect("groups");
    let rate = result.n_k[3] as f64 / result.n_total as f64;
    let expected = 0.25f64.powi(4);
    outcome(
        result.n_total >= 2000 && rate >= expected / 3.0 && rate <= expected * 3.0,
        format!(
            "four-of-four {}/{} = {:.3}% vs (1/4)^4 = {:.3}% (allowed ×3); single-question P1 {:.1}%",
            result.n_k[3],
            result.n_total,
            100.0 * rate,
            100.0 * expected,
            result.p_k[0]
        ),
    )
}

fn fuzz_answer(rng: &mut impl Rng) -> String {
    const WORDS: [&str; 10] = ["white", "board", "the", "a", "chair", "left", "two", "red", "an", "table"];
    const PUNCT: [&str; 6] = ["", ".", ",", "!", "-", "  "];
    let n = rng.random_range(0..5);
    (0..n)
        .map(|_| {
            let w = WORDS[rng.random_range(0..WORDS.len())];
            let w = if rng.random_bool(0.3) { w.to_uppercase() } else { w.to_string() };
            format!("{w}{}", PUNCT[rng.random_range(0..PUNCT.len())])
        })
        .collect::<Vec<_>>()
        .join(" ")
}

fn metric_properties() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut em_hits = 0;
    for _ in 0..10_000 {
        let gold = fuzz_answer(&mut rng);
        let pred = if rng.random_bool(0.3) { gold.to_lowercase() + "." } else { fuzz_answer(&mut rng) };
        let em = answers_match(&pred, &gold, &MatchPolicy::EM);
        if em {
            em_hits += 1;
            if !answers_match(&pred, &gold, &MatchPolicy::EM_R) {
                return outcome(false, format!("EM but not EM_R: {pred:?} vs {gold:?}"));
            }
        }
    }
    let labels: Vec<u8> = (0..1000).map(|_| rng.random_range(0..4)).collect();
    let same = cohens_kappa(&labels, &labels).expect("kappa");
    let a: Vec<u8> = (0..10_000).map(|_| rng.random_range(0..4)).collect();
    let b: Vec<u8> = (0..10_000).map(|_| rng.random_range(0..4)).collect();
    let indep = cohens_kappa(&a, &b).expect("kappa");
    outcome(
        same.kappa == 1.0 && indep.kappa.abs() < 0.05 && em_hits > 0,
        format!(
            "EM ⇒ EM_R on 10000 pairs ({em_hits} EM hits); kappa identical = {}; kappa independent (n=10000) = {:.4}",
            same.kappa, indep.kappa
        ),
    )
}

type Criterion = (&'static str, Duration, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 9] = [
        ("vrs-reference-rows", Duration::from_secs(1), vrs_rows),
        ("decomposition-identity", Duration::from_secs(5), decomposition),
        ("reduction-bitwise", Duration::from_secs(5), reduction),
        ("gradient-finite-differences", Duration::from_secs(30), gradients),
        ("shortcut-dependency-effect", Duration::from_secs(120), shortcut_effect),
        ("filter-set-algebra", Duration::from_secs(10), filter_algebra),
        ("rotation-group-laws", Duration::from_secs(10), rotation_laws),
        ("blind-prior-four-of-four", Duration::from_secs(20), blind_prior_gap),
        ("metric-properties", Duration::from_secs(5), metric_properties),
    ];
    let mut failed = 0;
    for (name, budget, check) in criteria {
        let start = Instant::now();
        let result = check();
        let elapsed = start.elapsed();
        let in_budget = elapsed <= budget;
        let pass = result.pass && in_budget;
        failed += usize::from(!pass);
        println!(
            "{} {name}: {} [{:.2}s of {}s budget{}]",
            if pass { "PASS" } else { "FAIL" },
            result.detail,
            elapsed.as_secs_f64(),
            budget.as_secs(),
            if in_budget { "" } else { ", over budget" }
        );
    }
    println!("{} of 9 criteria passed", 9 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
