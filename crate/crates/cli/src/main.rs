use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use sqa_forge_core::augment::llm::{rewrite_batch, validate_candidate, ChatClient, RewriteSource, DEFAULT_ROTATION_TEMPLATE};
use sqa_forge_core::augment::{AugmentedGroup, VariantsReport};
use sqa_forge_core::filter::{build_benchmark, FilterReport, ModelRun, PredictionFile, PredictionRecord, Variant};
use sqa_forge_core::metrics::{cohens_kappa, score_accuracy, vrs, AccuracyReport, AgreementResult, VrsResult};
use sqa_forge_core::pipeline::fixtures::{cross_room, cross_room_seeds, direction_groups, synthetic_seeds};
use sqa_forge_core::pipeline::ingest::{parse_scenes, read_jsonl, read_text, to_jsonl};
use sqa_forge_core::pipeline::review::{Decision, QualificationChecklist};
use sqa_forge_core::pipeline::{augment_all, ingest_paths, run_mock, BlindPrior, GeometricOracle, MockAnswerer};
use sqa_forge_core::pipeline::{ReviewQueue, ReviewStore, Section, StatsReport};
use sqa_forge_core::reweight::toy::{rft_demo, DemoConfig, DemoReport};
use sqa_forge_core::reweight::{cross_entropy, decomposition_check, rft_loss, ReweightConfig, TokenLogProbs};
use sqa_forge_core::{QARecord, Scene};

use sqa_forge_cli::config::Config;
use sqa_forge_cli::llm::{clean_answer, text_only_prompt, HttpChatClient};
use sqa_forge_cli::server::{self, AppState};

#[derive(Parser)]
#[command(name = "sqa-forge", version, about = "Build and evaluate situated 3D QA benchmarks")]
struct Cli {
    /// TOML or JSON config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write synthetic scenes and seed questions.
    Fixtures {
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, value_enum, default_value_t = FixtureKind::Synthetic)]
        kind: FixtureKind,
        #[arg(long, default_value_t = 200)]
        groups: usize,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Validate scenes and QA records against each other.
    Ingest {
        #[arg(long, num_args = 1..)]
        scenes: Vec<PathBuf>,
        #[arg(long)]
        qa: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rotate every seed by 90, 180 and 270 degrees and validate the variants.
    Augment {
        #[arg(long, num_args = 1..)]
        scenes: Vec<PathBuf>,
        #[arg(long)]
        qa: Option<PathBuf>,
        #[arg(long)]
        lexicon: Option<PathBuf>,
        /// Records of exportable groups (seed plus three variants).
        #[arg(long)]
        out: PathBuf,
        /// Every group with its machine verdicts, for review.
        #[arg(long)]
        groups: Option<PathBuf>,
        #[arg(long)]
        report: Option<PathBuf>,
        /// Ask the configured LLM for rewrites; candidates are still validated.
        #[arg(long)]
        llm: bool,
    },
    /// Remove questions answerable without 3D input.
    Filter {
        #[arg(long)]
        gold: PathBuf,
        /// `full.jsonl:blind.jsonl` per model, in cascade order.
        #[arg(long, num_args = 1.., required = true)]
        runs: Vec<String>,
        #[arg(long)]
        llm: PathBuf,
        #[arg(long)]
        matcher: Option<String>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Accuracy overall and per category.
    Score {
        #[arg(long)]
        gold: PathBuf,
        #[arg(long, num_args = 1.., required = true)]
        preds: Vec<PathBuf>,
        #[arg(long)]
        matcher: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rotation consistency over groups of four.
    Vrs {
        #[arg(long)]
        gold: PathBuf,
        #[arg(long, num_args = 1.., required = true)]
        preds: Vec<PathBuf>,
        #[arg(long)]
        matcher: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Cohen's kappa between two label files or the first two reviewers in a decision log.
    Kappa {
        #[arg(long, requires = "b", conflicts_with = "log")]
        a: Option<PathBuf>,
        #[arg(long, requires = "a")]
        b: Option<PathBuf>,
        #[arg(long)]
        log: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Token weights and the reweighted loss for a log-prob file.
    Reweight {
        #[arg(long)]
        logprobs: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long)]
        w_min: Option<f64>,
        #[arg(long)]
        w_max: Option<f64>,
        /// Disable caps and clamping so the loss decomposition is exact.
        #[arg(long)]
        uncapped: bool,
        /// Include per-token weights in the report.
        #[arg(long)]
        weights: bool,
    },
    /// Train SFT, blind and reweighted toy models and compare their use of 3D input.
    RftDemo {
        #[arg(long, default_value_t = 0.3)]
        guessable_frac: f64,
        #[arg(long, default_value_t = 5)]
        seeds: u64,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Predictions from a geometric oracle or a blind answer-frequency prior.
    MockRun {
        #[arg(long, value_enum)]
        answerer: AnswererKind,
        #[arg(long, num_args = 1..)]
        scenes: Vec<PathBuf>,
        #[arg(long)]
        qa: Option<PathBuf>,
        /// Training split for the blind prior (defaults to --qa).
        #[arg(long)]
        train: Option<PathBuf>,
        #[arg(long, value_enum)]
        variant: Option<VariantArg>,
        #[arg(long)]
        model_id: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Text-only predictions from the configured LLM, for the filter's last pass.
    LlmAnswer {
        #[arg(long)]
        qa: Option<PathBuf>,
        #[arg(long)]
        model_id: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve the review queue over HTTP.
    ReviewServe {
        #[arg(long, num_args = 1..)]
        scenes: Vec<PathBuf>,
        #[arg(long)]
        groups: PathBuf,
        #[arg(long)]
        log: Option<PathBuf>,
        #[arg(long)]
        host: Option<String>,
        #[arg(long)]
        port: Option<u16>,
        #[arg(long)]
        required_reviews: Option<usize>,
        #[arg(long)]
        qualification: Option<PathBuf>,
    },
    /// Replay a decision log and write the accepted and corrected groups.
    Export {
        #[arg(long, num_args = 1..)]
        scenes: Vec<PathBuf>,
        #[arg(long)]
        groups: PathBuf,
        #[arg(long)]
        log: Option<PathBuf>,
        #[arg(long)]
        required_reviews: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Merge component reports, re-check their sums and render tables.
    Stats {
        #[arg(long)]
        filter: Option<PathBuf>,
        #[arg(long)]
        variants: Option<PathBuf>,
        /// Output of `score`.
        #[arg(long)]
        accuracy: Option<PathBuf>,
        /// Output of `vrs`.
        #[arg(long)]
        vrs: Option<PathBuf>,
        /// Output of `kappa`.
        #[arg(long)]
        agreement: Option<PathBuf>,
        /// Output of `rft-demo`.
        #[arg(long)]
        rft_demo: Option<PathBuf>,
        /// Sections that must be present, e.g. `filter,vrs`.
        #[arg(long, value_delimiter = ',')]
        require: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        markdown: Option<PathBuf>,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum FixtureKind {
    Synthetic,
    CrossRoom,
    Direction,
}

#[derive(Clone, Copy, ValueEnum)]
enum AnswererKind {
    Oracle,
    BlindPrior,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Full,
    Blind,
    Llm,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Full => Variant::Full,
            VariantArg::Blind => Variant::Blind,
            VariantArg::Llm => Variant::TextOnlyLLM,
        }
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn write_records<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    write_text(path, &to_jsonl(items))
}

fn emit<T: Serialize>(out: Option<&Path>, value: &T) -> Result<()> {
    match out {
        Some(p) => write_json(p, value),
        None => {
            println!("{}", serde_json::to_string_pretty(value)?);
            Ok(())
        }
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = read_text(path)?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn scene_paths(flag: Vec<PathBuf>, cfg: &Config) -> Result<Vec<PathBuf>> {
    let paths = if flag.is_empty() { cfg.paths.scenes.clone() } else { flag };
    if paths.is_empty() {
        bail!("no scene files given (--scenes or paths.scenes)");
    }
    Ok(paths)
}

fn qa_path(flag: Option<PathBuf>, cfg: &Config) -> Result<PathBuf> {
    flag.or_else(|| cfg.paths.qa.clone())
        .ok_or_else(|| anyhow!("no QA file given (--qa or paths.qa)"))
}

fn log_path(flag: Option<PathBuf>, cfg: &Config) -> Result<PathBuf> {
    flag.or_else(|| cfg.paths.decision_log.clone())
        .ok_or_else(|| anyhow!("no decision log given (--log or paths.decision_log)"))
}

fn load_scenes(paths: &[PathBuf]) -> Result<BTreeMap<String, Scene>> {
    let mut scenes = BTreeMap::new();
    for p in paths {
        for s in parse_scenes(&p.display().to_string(), &read_text(p)?)? {
            if let Some(old) = scenes.insert(s.scene_id.clone(), s) {
                bail!("scene {} appears twice", old.scene_id);
            }
        }
    }
    Ok(scenes)
}

fn load_dataset(scenes: Vec<PathBuf>, qa: PathBuf) -> Result<sqa_forge_core::pipeline::Dataset> {
    ingest_paths(&scenes, &qa).map_err(|errs| {
        for e in &errs.0 {
            eprintln!("error: {e}");
        }
        anyhow!(errs)
    })
}

fn load_predictions(path: &Path) -> Result<PredictionFile> {
    let records: Vec<PredictionRecord> = read_jsonl(path)?;
    Ok(PredictionFile::new(&path.display().to_string(), records)?)
}

fn prediction_key(file: &PredictionFile) -> String {
    match file.variant() {
        Variant::Full => file.model_id().to_string(),
        v => format!("{}:{v}", file.model_id()),
    }
}

fn chat_client(cfg: &Config) -> Result<HttpChatClient> {
    HttpChatClient::from_settings(&cfg.llm)
}

fn prompt_template(cfg: &Config) -> Result<String> {
    match &cfg.llm.template {
        Some(p) => Ok(read_text(p)?),
        None => Ok(DEFAULT_ROTATION_TEMPLATE.to_string()),
    }
}

/// Replaces deterministic rewrites with validated LLM candidates.
fn apply_llm_rewrites(
    groups: &mut [AugmentedGroup],
    scenes: &BTreeMap<String, Scene>,
    lexicon: &sqa_forge_core::augment::DirectionalLexicon,
    client: &dyn ChatClient,
    template: &str,
    max_in_flight: usize,
) -> Result<usize> {
    let seeds: Vec<QARecord> = groups.iter().map(|g| g.seed.record.clone()).collect();
    let jobs: Vec<(&QARecord, u32, &Scene)> = seeds
        .iter()
        .flat_map(|s| [90, 180, 270].map(|d| (s, d, &scenes[&s.scene_id])))
        .collect();
    let outcomes = rewrite_batch(&jobs, lexicon, Some(client), template, max_in_flight);
    let mut used = 0;
    for (i, outcome) in outcomes.into_iter().enumerate() {
        let outcome = outcome?;
        if let Some(e) = &outcome.error {
            eprintln!("warning: {} +{}°: {e}; using deterministic rewrite", jobs[i].0.qid, jobs[i].1);
        }
        if outcome.source != RewriteSource::Llm {
            continue;
        }
        let (seed, deg, scene) = jobs[i];
        groups[i / 3].variants[i % 3] = validate_candidate(seed, deg, &outcome.text, scene, lexicon)?;
        used += 1;
    }
    Ok(used)
}

fn open_store(scenes: Vec<PathBuf>, groups: &Path, log: &Path, required_reviews: usize) -> Result<ReviewStore> {
    let scenes = load_scenes(&scenes)?;
    let groups: Vec<AugmentedGroup> = read_jsonl(groups)?;
    let queue = ReviewQueue::new(&groups, &scenes, required_reviews)?;
    Ok(ReviewStore::open(queue, log)?)
}

/// Labels of the first two distinct reviewers per group.
fn log_label_pairs(decisions: &[Decision]) -> (Vec<String>, Vec<String>) {
    let mut by_group: BTreeMap<&str, Vec<&Decision>> = BTreeMap::new();
    for d in decisions {
        let seen = by_group.entry(&d.group_id).or_default();
        if !seen.iter().any(|x| x.reviewer_id == d.reviewer_id) {
            seen.push(d);
        }
    }
    by_group
        .values()
        .filter(|v| v.len() >= 2)
        .map(|v| (v[0].status.as_str().to_string(), v[1].status.as_str().to_string()))
        .unzip()
}

fn read_labels(path: &Path) -> Result<Vec<String>> {
    Ok(read_text(path)?
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(String::from)
        .collect())
}

#[derive(Serialize)]
struct ReweightReport {
    config: ReweightConfig,
    sequences: usize,
    tokens: usize,
    loss: f64,
    cross_entropy: f64,
    clamped: usize,
    capped: usize,
    /// True when no clamp or cap fired, so the decomposition is exact.
    exact: bool,
    decomposition: Option<sqa_forge_core::reweight::Decomposition>,
    sequence_losses: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    per_token_w: Option<Vec<Vec<f64>>>,
}

fn run(cli: Cli) -> Result<()> {
    let cfg = Config::load(cli.config.as_deref())?;
    match cli.command {
        Command::Fixtures {
            out_dir,
            kind,
            groups,
            seed,
        } => {
            let lexicon = cfg.lexicon(None)?;
            let seed = seed.unwrap_or(cfg.seed);
            let (scenes, seeds): (Vec<Scene>, Vec<QARecord>) = match kind {
                FixtureKind::Synthetic => {
                    let (s, q) = synthetic_seeds(groups, seed, &lexicon);
                    (s.into_values().collect(), q)
                }
                FixtureKind::CrossRoom => (vec![cross_room()], cross_room_seeds()),
                FixtureKind::Direction => {
                    let (s, g) = direction_groups(groups, seed, &lexicon);
                    (s.into_values().collect(), g.into_iter().map(|g| g.seed.record).collect())
                }
            };
            write_records(&out_dir.join("scenes.jsonl"), &scenes)?;
            write_records(&out_dir.join("qa.jsonl"), &seeds)?;
            eprintln!("wrote {} scenes and {} seeds to {}", scenes.len(), seeds.len(), out_dir.display());
        }
        Command::Ingest { scenes, qa, out } => {
            let dataset = load_dataset(scene_paths(scenes, &cfg)?, qa_path(qa, &cfg)?)?;
            emit(out.as_deref(), &dataset.counts())?;
        }
        Command::Augment {
            scenes,
            qa,
            lexicon,
            out,
            groups: groups_out,
            report,
            llm,
        } => {
            let lexicon = cfg.lexicon(lexicon.as_deref())?;
            let dataset = load_dataset(scene_paths(scenes, &cfg)?, qa_path(qa, &cfg)?)?;
            let seeds: Vec<QARecord> = dataset.seeds().cloned().collect();
            let mut groups = Vec::with_capacity(seeds.len());
            for r in augment_all(&seeds, &dataset.scenes, &lexicon) {
                let g = r.map_err(|(qid, e)| anyhow!("{qid}: {e}"))?;
                groups.push(g);
            }
            if llm || cfg.llm.enabled {
                let client = chat_client(&cfg)?;
                let template = prompt_template(&cfg)?;
                let used =
                    apply_llm_rewrites(&mut groups, &dataset.scenes, &lexicon, &client, &template, cfg.llm.max_in_flight)?;
                eprintln!("{used} LLM rewrites validated");
            }
            let records: Vec<QARecord> = groups.iter().filter(|g| g.is_exportable()).flat_map(|g| g.records()).collect();
            write_records(&out, &records)?;
            if let Some(p) = groups_out {
                write_records(&p, &groups)?;
            }
            let summary = VariantsReport::from_groups(&groups);
            emit(report.as_deref(), &summary)?;
        }
        Command::Filter {
            gold,
            runs,
            llm,
            matcher,
            out,
            report,
        } => {
            let matcher = cfg.matcher(matcher.as_deref())?;
            let gold: Vec<QARecord> = read_jsonl(&gold)?;
            let runs = runs
                .iter()
                .map(|spec| {
                    let (full, blind) = spec
                        .split_once(':')
                        .ok_or_else(|| anyhow!("--runs expects full.jsonl:blind.jsonl, got '{spec}'"))?;
                    Ok(ModelRun::new(load_predictions(Path::new(full))?, load_predictions(Path::new(blind))?)?)
                })
                .collect::<Result<Vec<_>>>()?;
            let build = build_benchmark(&gold, &runs, &load_predictions(&llm)?, &matcher)?;
            write_records(&out, &build.kept)?;
            if build.report.empty_benchmark {
                eprintln!("warning: every question was filtered out");
            }
            emit(report.as_deref(), &build.report)?;
        }
        Command::Score {
            gold,
            preds,
            matcher,
            out,
        } => {
            let matcher = cfg.matcher(matcher.as_deref())?;
            let gold: Vec<QARecord> = read_jsonl(&gold)?;
            let mut reports: BTreeMap<String, AccuracyReport> = BTreeMap::new();
            for p in &preds {
                let file = load_predictions(p)?;
                let r = score_accuracy(file.answers(), &gold, &matcher).with_context(|| p.display().to_string())?;
                reports.insert(prediction_key(&file), r);
            }
            emit(out.as_deref(), &reports)?;
        }
        Command::Vrs {
            gold,
            preds,
            matcher,
            out,
            csv,
        } => {
            let matcher = cfg.matcher(matcher.as_deref())?;
            let gold: Vec<QARecord> = read_jsonl(&gold)?;
            let mut results: BTreeMap<String, VrsResult> = BTreeMap::new();
            for p in &preds {
                let file = load_predictions(p)?;
                let r = vrs(file.answers(), &gold, &matcher).with_context(|| p.display().to_string())?;
                results.insert(prediction_key(&file), r);
            }
            if let Some(path) = csv {
                let table = StatsReport {
                    vrs: results.clone(),
                    ..StatsReport::default()
                };
                write_text(&path, &table.to_csv())?;
            }
            emit(out.as_deref(), &results)?;
        }
        Command::Kappa { a, b, log, out } => {
            let (la, lb) = match (a, b, log.or_else(|| cfg.paths.decision_log.clone())) {
                (Some(a), Some(b), _) => (read_labels(&a)?, read_labels(&b)?),
                (_, _, Some(log)) => log_label_pairs(&read_jsonl::<Decision>(&log)?),
                _ => bail!("give --a and --b, or --log"),
            };
            let result: AgreementResult = cohens_kappa(&la, &lb)?;
            emit(out.as_deref(), &result)?;
        }
        Command::Reweight {
            logprobs,
            report,
            eps,
            w_min,
            w_max,
            uncapped,
            weights,
        } => {
            let mut rc = if uncapped { ReweightConfig::uncapped() } else { cfg.reweight };
            if let Some(e) = eps {
                rc.prob_clamp_eps = e;
            }
            if let Some(w) = w_min {
                rc.weight_cap[0] = w;
            }
            if let Some(w) = w_max {
                rc.weight_cap[1] = w;
            }
            rc.validate()?;
            let batch: Vec<TokenLogProbs> = read_jsonl(&logprobs)?;
            let loss = rft_loss(&batch, &rc)?;
            let exact = loss.clamped == 0 && loss.capped == 0;
            let out = ReweightReport {
                config: rc,
                sequences: batch.len(),
                tokens: batch.iter().map(|s| s.tokens.len()).sum(),
                loss: loss.loss,
                cross_entropy: cross_entropy(&batch),
                clamped: loss.clamped,
                capped: loss.capped,
                exact,
                decomposition: decomposition_check(&batch, &rc).ok(),
                sequence_losses: loss.sequence_losses,
                per_token_w: weights.then_some(loss.per_token_w),
            };
            emit(report.as_deref(), &out)?;
        }
        Command::RftDemo {
            guessable_frac,
            seeds,
            steps,
            lr,
            out,
        } => {
            let mut demo = DemoConfig::default();
            demo.dataset.guessable_frac = guessable_frac;
            demo.seeds = (0..seeds).collect();
            demo.train.cfg = cfg.reweight;
            if let Some(s) = steps {
                demo.train.steps = s;
            }
            if let Some(l) = lr {
                demo.train.lr = l;
            }
            let report: DemoReport = rft_demo(&demo)?;
            let table = StatsReport {
                rft_demo: Some(report.clone()),
                ..StatsReport::default()
            };
            eprint!("{}", table.to_markdown());
            eprintln!(
                "shortcut learned in every seed: {}; 3D dependency higher under reweighting in every seed: {}",
                report.all_shortcut_ok(),
                report.all_dependency_ok()
            );
            emit(out.as_deref(), &report)?;
        }
        Command::MockRun {
            answerer,
            scenes,
            qa,
            train,
            variant,
            model_id,
            seed,
            out,
        } => {
            let dataset = load_dataset(scene_paths(scenes, &cfg)?, qa_path(qa, &cfg)?)?;
            let answerer = match answerer {
                AnswererKind::Oracle => MockAnswerer::GeometricOracle(GeometricOracle {
                    lexicon: cfg.lexicon(None)?,
                }),
                AnswererKind::BlindPrior => {
                    let train: Vec<QARecord> = match train {
                        Some(p) => read_jsonl(&p)?,
                        None => dataset.records.clone(),
                    };
                    MockAnswerer::BlindPrior(BlindPrior::fit(&train, seed.unwrap_or(cfg.seed)))
                }
            };
            let variant = variant.map(Variant::from).unwrap_or(match answerer {
                MockAnswerer::GeometricOracle(_) => Variant::Full,
                MockAnswerer::BlindPrior(_) => Variant::Blind,
            });
            let model_id = model_id.unwrap_or_else(|| answerer.default_model_id().to_string());
            let preds = run_mock(&answerer, &dataset.records, &dataset.scenes, &model_id, variant);
            let abstained = preds.iter().filter(|p| p.predicted_answer.is_empty()).count();
            write_records(&out, &preds)?;
            eprintln!("{} predictions ({abstained} abstentions)", preds.len());
        }
        Command::LlmAnswer { qa, model_id, out } => {
            let records: Vec<QARecord> = read_jsonl(&qa_path(qa, &cfg)?)?;
            let client = chat_client(&cfg)?;
            let model_id = model_id.unwrap_or_else(|| cfg.llm.model.clone());
            let next = AtomicUsize::new(0);
            let workers = cfg.llm.max_in_flight.clamp(1, records.len().max(1));
            let mut answers: Vec<(usize, String)> = std::thread::scope(|s| {
                let handles: Vec<_> = (0..workers)
                    .map(|_| {
                        s.spawn(|| {
                            let mut done = Vec::new();
                            while let Some(r) = records.get(next.fetch_add(1, Ordering::Relaxed)) {
                                let answer = match client.complete(&text_only_prompt(r)) {
                                    Ok(reply) => clean_answer(&reply),
                                    Err(e) => {
                                        eprintln!("warning: {}: {e}; recording an abstention", r.qid);
                                        String::new()
                                    }
                                };
                                done.push((r.qid.clone(), answer));
                            }
                            done
                        })
                    })
                    .collect();
                let index: BTreeMap<&str, usize> = records.iter().enumerate().map(|(i, r)| (r.qid.as_str(), i)).collect();
                handles
                    .into_iter()
                    .flat_map(|h| h.join().expect("worker panicked"))
                    .map(|(qid, a)| (index[qid.as_str()], a))
                    .collect()
            });
            answers.sort_by_key(|(i, _)| *i);
            let preds: Vec<PredictionRecord> = answers
                .into_iter()
                .map(|(i, a)| PredictionRecord {
                    qid: records[i].qid.clone(),
                    model_id: model_id.clone(),
                    variant: Variant::TextOnlyLLM,
                    predicted_answer: a,
                })
                .collect();
            write_records(&out, &preds)?;
        }
        Command::ReviewServe {
            scenes,
            groups,
            log,
            host,
            port,
            required_reviews,
            qualification,
        } => {
            let store = open_store(
                scene_paths(scenes, &cfg)?,
                &groups,
                &log_path(log, &cfg)?,
                required_reviews.unwrap_or(cfg.review.required_reviews),
            )?;
            let checklist: QualificationChecklist = match qualification.or_else(|| cfg.paths.qualification.clone()) {
                Some(p) => read_json(&p)?,
                None => QualificationChecklist::default(),
            };
            let host = host.unwrap_or_else(|| cfg.review.host.clone());
            let addr: SocketAddr = format!("{host}:{}", port.unwrap_or(cfg.review.port))
                .parse()
                .context("parsing listen address")?;
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(server::serve(AppState::new(store, checklist), addr))?;
        }
        Command::Export {
            scenes,
            groups,
            log,
            required_reviews,
            out,
        } => {
            let store = open_store(
                scene_paths(scenes, &cfg)?,
                &groups,
                &log_path(log, &cfg)?,
                required_reviews.unwrap_or(cfg.review.required_reviews),
            )?;
            let records = store.queue.export();
            write_text(&out, &to_jsonl(&records))?;
            eprintln!("exported {} records in {} groups", records.len(), records.len() / 4);
        }
        Command::Stats {
            filter,
            variants,
            accuracy,
            vrs,
            agreement,
            rft_demo,
            require,
            out,
            markdown,
            csv,
        } => {
            let report = StatsReport {
                filter: filter.map(|p| read_json::<FilterReport>(&p)).transpose()?,
                variants: variants.map(|p| read_json::<VariantsReport>(&p)).transpose()?,
                accuracy: accuracy.map(|p| read_json(&p)).transpose()?.unwrap_or_default(),
                vrs: vrs.map(|p| read_json(&p)).transpose()?.unwrap_or_default(),
                agreement: agreement.map(|p| read_json::<AgreementResult>(&p)).transpose()?,
                rft_demo: rft_demo.map(|p| read_json::<DemoReport>(&p)).transpose()?,
            };
            let required = require
                .iter()
                .map(|s| Section::parse(s).ok_or_else(|| anyhow!("unknown section '{s}'")))
                .collect::<Result<Vec<_>>>()?;
            report.require(&required)?;
            report.verify()?;
            if let Some(p) = markdown {
                write_text(&p, &report.to_markdown())?;
            }
            if let Some(p) = csv {
                write_text(&p, &report.to_csv())?;
            }
            emit(out.as_deref(), &report)?;
        }
    }
    Ok(())
}

fn main() {
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
