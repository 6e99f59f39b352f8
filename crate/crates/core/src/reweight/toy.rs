//! Desk-scale differentiable stand-in for a 3D-LLM: a linear softmax over
//! text features concatenated with 3D features, trained by full-batch
//! gradient descent under three objectives.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{clamp_log_prob, surprise_weight_parts, ReweightConfig};
use crate::error::ReweightError;

pub const MAX_VOCAB: usize = 64;
pub const MAX_FEATURES: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Objective {
    #[serde(rename = "sft")]
    Sft,
    #[serde(rename = "blind")]
    Blind,
    #[serde(rename = "rft")]
    Rft,
}

impl Objective {
    pub const ALL: [Objective; 3] = [Objective::Sft, Objective::Blind, Objective::Rft];

    pub fn as_str(self) -> &'static str {
        match self {
            Objective::Sft => "sft",
            Objective::Blind => "blind",
            Objective::Rft => "rft",
        }
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Objective {
    type Err = ReweightError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "sft" => Ok(Objective::Sft),
            "blind" => Ok(Objective::Blind),
            "rft" => Ok(Objective::Rft),
            other => Err(ReweightError::Config(format!("unknown objective {other:?}"))),
        }
    }
}

/// Which inputs the model sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Conditioning {
    Text,
    Full,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyExample {
    pub x_text: Vec<f64>,
    pub x_3d: Vec<f64>,
    pub answer: usize,
    /// Answer is recoverable from the text features alone.
    pub guessable: bool,
}

/// Linear softmax: logits = W·[x_text ⊕ x_3d] + b. Text-only conditioning
/// zeroes the 3D block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyModel {
    pub vocab: usize,
    pub text_dim: usize,
    pub dim_3d: usize,
    /// Row-major vocab × (text_dim + dim_3d), followed by vocab biases.
    pub params: Vec<f64>,
}

impl ToyModel {
    pub fn zeros(vocab: usize, text_dim: usize, dim_3d: usize) -> Result<Self, ReweightError> {
        if !(2..=MAX_VOCAB).contains(&vocab) {
            return Err(ReweightError::Config(format!("vocab {vocab} outside [2, {MAX_VOCAB}]")));
        }
        if text_dim + dim_3d == 0 || text_dim + dim_3d > MAX_FEATURES {
            return Err(ReweightError::Config(format!(
                "feature dims {text_dim} + {dim_3d} outside [1, {MAX_FEATURES}]"
            )));
        }
        Ok(Self {
            vocab,
            text_dim,
            dim_3d,
            params: vec![0.0; vocab * (text_dim + dim_3d + 1)],
        })
    }

    pub fn random(vocab: usize, text_dim: usize, dim_3d: usize, scale: f64, seed: u64) -> Result<Self, ReweightError> {
        let mut model = Self::zeros(vocab, text_dim, dim_3d)?;
        if scale > 0.0 {
            let normal = Normal::new(0.0, scale).map_err(|e| ReweightError::Config(e.to_string()))?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            model.params.iter_mut().for_each(|p| *p = normal.sample(&mut rng));
        }
        Ok(model)
    }

    pub fn feature_dim(&self) -> usize {
        self.text_dim + self.dim_3d
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    fn check_example(&self, ex: &ToyExample) -> Result<(), ReweightError> {
        if ex.x_text.len() != self.text_dim || ex.x_3d.len() != self.dim_3d || ex.answer >= self.vocab {
            return Err(ReweightError::Dataset(format!(
                "example shape ({}, {}, answer {}) does not fit model ({}, {}, vocab {})",
                ex.x_text.len(),
                ex.x_3d.len(),
                ex.answer,
                self.text_dim,
                self.dim_3d,
                self.vocab
            )));
        }
        Ok(())
    }

    fn input<'a>(&self, ex: &'a ToyExample, cond: Conditioning) -> impl Iterator<Item = f64> + 'a {
        let keep_3d = cond == Conditioning::Full;
        ex.x_text
            .iter()
            .copied()
            .chain(ex.x_3d.iter().map(move |v| if keep_3d { *v } else { 0.0 }))
    }

    pub fn logits(&self, ex: &ToyExample, cond: Conditioning) -> Vec<f64> {
        let d = self.feature_dim();
        let bias = &self.params[self.vocab * d..];
        (0..self.vocab)
            .map(|k| {
                let row = &self.params[k * d..(k + 1) * d];
                row.iter().zip(self.input(ex, cond)).map(|(w, x)| w * x).sum::<f64>() + bias[k]
            })
            .collect()
    }

    pub fn log_probs(&self, ex: &ToyExample, cond: Conditioning) -> Vec<f64> {
        log_softmax(&self.logits(ex, cond))
    }

    pub fn probs(&self, ex: &ToyExample, cond: Conditioning) -> Vec<f64> {
        self.log_probs(ex, cond).into_iter().map(f64::exp).collect()
    }

    pub fn answer_log_prob(&self, ex: &ToyExample, cond: Conditioning) -> f64 {
        self.log_probs(ex, cond)[ex.answer]
    }

    pub fn predict(&self, ex: &ToyExample, cond: Conditioning) -> usize {
        argmax(&self.logits(ex, cond))
    }

    /// Adds scale·(e_y − p)·xᵀ for one example to `grad`, i.e. scale times
    /// the gradient of log p(y).
    fn accumulate_log_prob_grad(&self, ex: &ToyExample, cond: Conditioning, scale: f64, grad: &mut [f64]) {
        let d = self.feature_dim();
        let p = self.probs(ex, cond);
        let x: Vec<f64> = self.input(ex, cond).collect();
        for k in 0..self.vocab {
            let r = scale * (f64::from(k == ex.answer) - p[k]);
            if r == 0.0 {
                continue;
            }
            grad[k * d..(k + 1) * d].iter_mut().zip(&x).for_each(|(g, xi)| *g += r * xi);
            grad[self.vocab * d + k] += r;
        }
    }
}

fn log_softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    z.iter().map(|v| v - lse).collect()
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// Per-example RFT weight: surprise ratio of the frozen blind model to the
/// current text-only model.
#[derive(Debug, Clone, Copy, PartialEq)]
struct RftTerm {
    w: f64,
    lp_full: f64,
    lp_text: f64,
    lp_blind: f64,
    full_clamped: bool,
    /// Weight varies with θ here (no clamp, no cap).
    w_live: bool,
}

fn rft_term(model: &ToyModel, blind: &ToyModel, ex: &ToyExample, cfg: &ReweightConfig) -> RftTerm {
    let (lp_blind, _) = clamp_log_prob(blind.answer_log_prob(ex, Conditioning::Text), cfg);
    let (lp_text, text_clamped) = clamp_log_prob(model.answer_log_prob(ex, Conditioning::Text), cfg);
    let (lp_full, full_clamped) = clamp_log_prob(model.answer_log_prob(ex, Conditioning::Full), cfg);
    let (raw, w) = surprise_weight_parts(lp_blind, lp_text, cfg);
    RftTerm {
        w,
        lp_full,
        lp_text,
        lp_blind,
        full_clamped,
        w_live: !text_clamped && raw == w,
    }
}

/// Everything an objective needs besides the trained model.
#[derive(Debug, Clone, Copy)]
pub struct ObjectiveContext<'a> {
    pub objective: Objective,
    /// Frozen blind reference; required for RFT.
    pub blind: Option<&'a ToyModel>,
    pub cfg: ReweightConfig,
}

impl<'a> ObjectiveContext<'a> {
    pub fn new(objective: Objective, blind: Option<&'a ToyModel>, cfg: ReweightConfig) -> Self {
        Self { objective, blind, cfg }
    }

    fn blind_model(&self) -> Result<&'a ToyModel, ReweightError> {
        self.blind
            .ok_or_else(|| ReweightError::Config("RFT needs a frozen blind model".into()))
    }

    fn check(&self, model: &ToyModel, data: &[ToyExample]) -> Result<(), ReweightError> {
        self.cfg.validate()?;
        if data.is_empty() {
            return Err(ReweightError::Dataset("no examples".into()));
        }
        data.iter().try_for_each(|ex| model.check_example(ex))?;
        if self.objective == Objective::Rft {
            let blind = self.blind_model()?;
            data.iter().try_for_each(|ex| blind.check_example(ex))?;
        }
        Ok(())
    }

    /// Per-example weights at `model`, or None for unweighted objectives.
    pub fn weights(&self, model: &ToyModel, data: &[ToyExample]) -> Result<Option<Vec<f64>>, ReweightError> {
        if self.objective != Objective::Rft {
            return Ok(None);
        }
        self.check(model, data)?;
        let blind = self.blind_model()?;
        Ok(Some(data.iter().map(|ex| rft_term(model, blind, ex, &self.cfg).w).collect()))
    }

    /// Mean objective value over `data`.
    pub fn loss(&self, model: &ToyModel, data: &[ToyExample]) -> Result<f64, ReweightError> {
        self.check(model, data)?;
        let total: f64 = match self.objective {
            Objective::Sft => data.iter().map(|ex| -model.answer_log_prob(ex, Conditioning::Full)).sum(),
            Objective::Blind => data.iter().map(|ex| -model.answer_log_prob(ex, Conditioning::Text)).sum(),
            Objective::Rft => {
                let blind = self.blind_model()?;
                data.iter()
                    .map(|ex| {
                        let t = rft_term(model, blind, ex, &self.cfg);
                        -(t.w * t.lp_full)
                    })
                    .sum()
            }
        };
        Ok(total / data.len() as f64)
    }

    /// RFT loss with the weights held at `frozen`; the function whose
    /// gradient the detached update follows.
    pub fn loss_with_weights(&self, model: &ToyModel, data: &[ToyExample], frozen: &[f64]) -> Result<f64, ReweightError> {
        self.check(model, data)?;
        if frozen.len() != data.len() {
            return Err(ReweightError::LengthMismatch(frozen.len()));
        }
        let total: f64 = data
            .iter()
            .zip(frozen)
            .map(|(ex, w)| {
                let (lp, _) = clamp_log_prob(model.answer_log_prob(ex, Conditioning::Full), &self.cfg);
                -(w * lp)
            })
            .sum();
        Ok(total / data.len() as f64)
    }

    /// Analytic gradient of the mean objective with respect to `model.params`.
    pub fn gradient(&self, model: &ToyModel, data: &[ToyExample]) -> Result<Vec<f64>, ReweightError> {
        self.check(model, data)?;
        let mut grad = vec![0.0; model.n_params()];
        let n = data.len() as f64;
        match self.objective {
            Objective::Sft => data
                .iter()
                .for_each(|ex| model.accumulate_log_prob_grad(ex, Conditioning::Full, -1.0 / n, &mut grad)),
            Objective::Blind => data
                .iter()
                .for_each(|ex| model.accumulate_log_prob_grad(ex, Conditioning::Text, -1.0 / n, &mut grad)),
            Objective::Rft => {
                let blind = self.blind_model()?;
                for ex in data {
                    let t = rft_term(model, blind, ex, &self.cfg);
                    if !t.full_clamped {
                        model.accumulate_log_prob_grad(ex, Conditioning::Full, -t.w / n, &mut grad);
                    }
                    if !self.cfg.detach_weights && t.w_live {
                        // d w / d lp_text = −lp_blind / lp_text²
                        let dw = -t.lp_blind / (t.lp_text * t.lp_text);
                        model.accumulate_log_prob_grad(ex, Conditioning::Text, -t.lp_full * dw / n, &mut grad);
                    }
                }
            }
        }
        Ok(grad)
    }
}

/// Central finite-difference gradient of `f` at `model.params`.
pub fn finite_difference<F>(model: &ToyModel, h: f64, mut f: F) -> Result<Vec<f64>, ReweightError>
where
    F: FnMut(&ToyModel) -> Result<f64, ReweightError>,
{
    let mut probe = model.clone();
    (0..model.n_params())
        .map(|i| {
            let x = model.params[i];
            probe.params[i] = x + h;
            let up = f(&probe)?;
            probe.params[i] = x - h;
            let down = f(&probe)?;
            probe.params[i] = x;
            Ok((up - down) / (2.0 * h))
        })
        .collect()
}

/// ‖a − b‖ / max(‖a‖, ‖b‖), or 0 when both vanish.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &mut dyn Iterator<Item = f64>| v.map(|x| x * x).sum::<f64>().sqrt();
    let diff = norm(&mut a.iter().zip(b).map(|(x, y)| x - y));
    let scale = norm(&mut a.iter().copied()).max(norm(&mut b.iter().copied()));
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

/// Relative error between the analytic gradient and central differences of
/// the objective (with weights frozen at `model` when detached).
pub fn gradient_check(ctx: &ObjectiveContext, model: &ToyModel, data: &[ToyExample], h: f64) -> Result<f64, ReweightError> {
    let analytic = ctx.gradient(model, data)?;
    let numeric = match ctx.weights(model, data)? {
        Some(w) if ctx.cfg.detach_weights => finite_difference(model, h, |m| ctx.loss_with_weights(m, data, &w))?,
        _ => finite_difference(model, h, |m| ctx.loss(m, data))?,
    };
    Ok(relative_error(&analytic, &numeric))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub n_train: usize,
    pub n_eval: usize,
    /// Fraction of items whose answer is fixed by the question template.
    pub guessable_frac: f64,
    /// Number of answers a 3D-dependent item can take.
    pub dependent_answers: usize,
    /// Number of guessable question templates, each with its own answer.
    pub guessable_templates: usize,
    /// Number of 3D-dependent question templates.
    pub dependent_templates: usize,
    /// Std-dev of Gaussian noise on the 3D features.
    pub noise: f64,
    pub seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            n_train: 400,
            n_eval: 400,
            guessable_frac: 0.3,
            dependent_answers: 4,
            guessable_templates: 4,
            dependent_templates: 4,
            noise: 0.5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyDataset {
    pub config: DatasetConfig,
    pub vocab: usize,
    pub text_dim: usize,
    pub dim_3d: usize,
    pub train: Vec<ToyExample>,
    pub eval: Vec<ToyExample>,
}

impl ToyDataset {
    /// Text features are a one-hot question template. Guessable templates map
    /// to a fixed answer outside the dependent range; dependent templates draw
    /// the answer uniformly and expose it only through the noisy one-hot 3D
    /// features. Guessable items still carry 3D features of an unrelated scene.
    pub fn generate(config: DatasetConfig) -> Result<Self, ReweightError> {
        let k = config.dependent_answers;
        let g = config.guessable_templates;
        let dt = g + config.dependent_templates;
        if !(0.0..=1.0).contains(&config.guessable_frac) {
            return Err(ReweightError::Dataset(format!("guessable_frac {} outside [0, 1]", config.guessable_frac)));
        }
        if k < 2 || config.dependent_templates == 0 || (g == 0 && config.guessable_frac > 0.0) {
            return Err(ReweightError::Dataset("need ≥ 2 dependent answers and templates for every item kind".into()));
        }
        if k + g > MAX_VOCAB || dt + k > MAX_FEATURES {
            return Err(ReweightError::Dataset(format!("vocab {} or features {} too large", k + g, dt + k)));
        }
        if !(config.noise >= 0.0 && config.noise.is_finite()) {
            return Err(ReweightError::Dataset(format!("noise {} must be finite and ≥ 0", config.noise)));
        }
        let noise = Normal::new(0.0, config.noise).map_err(|e| ReweightError::Dataset(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut draw = |n: usize| -> Vec<ToyExample> {
            let n_guess = (n as f64 * config.guessable_frac).round() as usize;
            (0..n)
                .map(|i| {
                    let guessable = i < n_guess;
                    let template = if guessable {
                        rng.random_range(0..g)
                    } else {
                        g + rng.random_range(0..config.dependent_templates)
                    };
                    let scene_answer = rng.random_range(0..k);
                    let answer = if guessable { k + template } else { scene_answer };
                    let mut x_text = vec![0.0; dt];
                    x_text[template] = 1.0;
                    let x_3d = (0..k)
                        .map(|j| f64::from(j == scene_answer) + noise.sample(&mut rng))
                        .collect();
                    ToyExample {
                        x_text,
                        x_3d,
                        answer,
                        guessable,
                    }
                })
                .collect()
        };
        let train = draw(config.n_train);
        let eval = draw(config.n_eval);
        Ok(Self {
            config,
            vocab: k + g,
            text_dim: dt,
            dim_3d: k,
            train,
            eval,
        })
    }

    pub fn chance(&self) -> f64 {
        1.0 / self.config.dependent_answers as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToyEval {
    /// Accuracy on guessable items under the objective's own conditioning.
    pub acc_guessable: f64,
    pub acc_dependent: f64,
    /// Mean δ over 3D-dependent items.
    pub mean_delta_dependent: f64,
    pub mean_delta_guessable: f64,
}

pub fn evaluate(model: &ToyModel, data: &[ToyExample], cond: Conditioning) -> ToyEval {
    let mut acc = [(0usize, 0usize); 2];
    let mut delta = [(0.0, 0usize); 2];
    for ex in data {
        let slot = usize::from(ex.guessable);
        acc[slot].1 += 1;
        acc[slot].0 += usize::from(model.predict(ex, cond) == ex.answer);
        let lp_full = model.answer_log_prob(ex, Conditioning::Full);
        let lp_text = model.answer_log_prob(ex, Conditioning::Text);
        delta[slot].0 += super::independence_gap(lp_full, lp_text);
        delta[slot].1 += 1;
    }
    let ratio = |(a, n): (usize, usize)| if n == 0 { 0.0 } else { a as f64 / n as f64 };
    let avg = |(s, n): (f64, usize)| if n == 0 { 0.0 } else { s / n as f64 };
    ToyEval {
        acc_guessable: ratio(acc[1]),
        acc_dependent: ratio(acc[0]),
        mean_delta_dependent: avg(delta[0]),
        mean_delta_guessable: avg(delta[1]),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub steps: usize,
    pub lr: f64,
    pub seed: u64,
    pub init_scale: f64,
    pub cfg: ReweightConfig,
    /// Record a trace point every this many steps (and at the end).
    pub log_every: usize,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            steps: 300,
            lr: 1.0,
            seed: 0,
            init_scale: 0.01,
            cfg: ReweightConfig::default(),
            log_every: 50,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub step: usize,
    pub loss: f64,
    pub eval_mean_delta_dependent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainResult {
    pub objective: Objective,
    pub model: ToyModel,
    pub trace: Vec<TracePoint>,
    pub train_eval: ToyEval,
    pub eval: ToyEval,
}

fn conditioning_of(objective: Objective) -> Conditioning {
    match objective {
        Objective::Blind => Conditioning::Text,
        _ => Conditioning::Full,
    }
}

/// Full-batch gradient descent from a seeded initialization. RFT uses
/// `blind` as the frozen reference; pass None to pre-train one with the same
/// options.
pub fn toy_train(
    data: &ToyDataset,
    objective: Objective,
    opts: &TrainOptions,
    blind: Option<&ToyModel>,
) -> Result<TrainResult, ReweightError> {
    if !(opts.lr >= 0.0 && opts.lr.is_finite()) {
        return Err(ReweightError::Config(format!("lr {} must be finite and ≥ 0", opts.lr)));
    }
    let pretrained;
    let blind = match (objective, blind) {
        (Objective::Rft, None) => {
            pretrained = toy_train(data, Objective::Blind, opts, None)?.model;
            Some(&pretrained)
        }
        (_, b) => b,
    };
    let ctx = ObjectiveContext::new(objective, blind, opts.cfg);
    let mut model = ToyModel::random(data.vocab, data.text_dim, data.dim_3d, opts.init_scale, opts.seed)?;
    let log_every = opts.log_every.max(1);
    let mut trace = Vec::new();
    for step in 0..=opts.steps {
        let loss = ctx.loss(&model, &data.train)?;
        if !loss.is_finite() {
            return Err(ReweightError::DivergenceDetected(step));
        }
        if step % log_every == 0 || step == opts.steps {
            trace.push(TracePoint {
                step,
                loss,
                eval_mean_delta_dependent: evaluate(&model, &data.eval, Conditioning::Full).mean_delta_dependent,
            });
        }
        if step == opts.steps {
            break;
        }
        let grad = ctx.gradient(&model, &data.train)?;
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(ReweightError::DivergenceDetected(step));
        }
        model.params.iter_mut().zip(&grad).for_each(|(p, g)| *p -= opts.lr * g);
    }
    let cond = conditioning_of(objective);
    Ok(TrainResult {
        objective,
        train_eval: evaluate(&model, &data.train, cond),
        eval: evaluate(&model, &data.eval, cond),
        model,
        trace,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoConfig {
    pub dataset: DatasetConfig,
    pub train: TrainOptions,
    pub seeds: Vec<u64>,
}

impl Default for DemoConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetConfig::default(),
            train: TrainOptions::default(),
            seeds: (0..5).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedOutcome {
    pub seed: u64,
    pub chance: f64,
    pub blind_acc_guessable: f64,
    pub blind_acc_dependent: f64,
    pub sft_delta_dependent: f64,
    pub rft_delta_dependent: f64,
    pub sft_acc_dependent: f64,
    pub rft_acc_dependent: f64,
}

impl SeedOutcome {
    pub fn shortcut_ok(&self) -> bool {
        self.blind_acc_guessable >= 0.95 && self.blind_acc_dependent <= self.chance + 0.10
    }

    pub fn dependency_ok(&self) -> bool {
        self.rft_delta_dependent > self.sft_delta_dependent
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoReport {
    pub guessable_frac: f64,
    pub seeds: Vec<SeedOutcome>,
}

impl DemoReport {
    pub fn all_shortcut_ok(&self) -> bool {
        self.seeds.iter().all(SeedOutcome::shortcut_ok)
    }

    pub fn all_dependency_ok(&self) -> bool {
        self.seeds.iter().all(SeedOutcome::dependency_ok)
    }
}

fn run_seed(cfg: &DemoConfig, seed: u64) -> Result<SeedOutcome, ReweightError> {
    let data = ToyDataset::generate(DatasetConfig { seed, ..cfg.dataset })?;
    let opts = TrainOptions {
        seed,
        ..cfg.train.clone()
    };
    let blind = toy_train(&data, Objective::Blind, &opts, None)?;
    let sft = toy_train(&data, Objective::Sft, &opts, None)?;
    let rft = toy_train(&data, Objective::Rft, &opts, Some(&blind.model))?;
    Ok(SeedOutcome {
        seed,
        chance: data.chance(),
        blind_acc_guessable: blind.train_eval.acc_guessable,
        blind_acc_dependent: blind.eval.acc_dependent,
        sft_delta_dependent: sft.eval.mean_delta_dependent,
        rft_delta_dependent: rft.eval.mean_delta_dependent,
        sft_acc_dependent: sft.eval.acc_dependent,
        rft_acc_dependent: rft.eval.acc_dependent,
    })
}

/// Blind, SFT and RFT on one synthetic dataset per seed; seeds run on
/// separate threads.
pub fn rft_demo(cfg: &DemoConfig) -> Result<DemoReport, ReweightError> {
    let seeds = std::thread::scope(|s| {
        let handles: Vec<_> = cfg.seeds.iter().map(|&seed| s.spawn(move || run_seed(cfg, seed))).collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("rft-demo worker panicked"))
            .collect::<Result<Vec<_>, _>>()
    })?;
    Ok(DemoReport {
        guessable_frac: cfg.dataset.guessable_frac,
        seeds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ToyDataset {
        ToyDataset::generate(DatasetConfig {
            n_train: 40,
            n_eval: 40,
            ..DatasetConfig::default()
        })
        .unwrap()
    }

    #[test]
    fn rows_are_distributions() {
        let data = small();
        let m = ToyModel::random(data.vocab, data.text_dim, data.dim_3d, 1.0, 3).unwrap();
        for ex in &data.train {
            for cond in [Conditioning::Text, Conditioning::Full] {
                let p = m.probs(ex, cond);
                assert!(p.iter().all(|v| *v >= 0.0));
                assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn limits_are_enforced() {
        assert!(ToyModel::zeros(65, 4, 4).is_err());
        assert!(ToyModel::zeros(8, 10, 7).is_err());
        assert!(ToyModel::zeros(64, 8, 8).is_ok());
    }

    #[test]
    fn zero_lr_leaves_params_unchanged() {
        let data = small();
        let opts = TrainOptions {
            lr: 0.0,
            steps: 5,
            ..TrainOptions::default()
        };
        let init = ToyModel::random(data.vocab, data.text_dim, data.dim_3d, opts.init_scale, opts.seed).unwrap();
        for obj in Objective::ALL {
            assert_eq!(toy_train(&data, obj, &opts, None).unwrap().model, init);
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let data = small();
        let blind = ToyModel::random(data.vocab, data.text_dim, data.dim_3d, 0.5, 11).unwrap();
        let model = ToyModel::random(data.vocab, data.text_dim, data.dim_3d, 0.5, 12).unwrap();
        for detach in [true, false] {
            let cfg = ReweightConfig {
                detach_weights: detach,
                weight_cap: [1e-3, 1e3],
                ..ReweightConfig::default()
            };
            for obj in Objective::ALL {
                let ctx = ObjectiveContext::new(obj, Some(&blind), cfg);
                let err = gradient_check(&ctx, &model, &data.train, 1e-5).unwrap();
                assert!(err < 1e-4, "{obj} detach={detach}: {err}");
            }
        }
    }

    #[test]
    fn rft_without_blind_reference_is_a_config_error() {
        let data = small();
        let m = ToyModel::zeros(data.vocab, data.text_dim, data.dim_3d).unwrap();
        let ctx = ObjectiveContext::new(Objective::Rft, None, ReweightConfig::default());
        assert!(matches!(ctx.loss(&m, &data.train), Err(ReweightError::Config(_))));
    }

    #[test]
    fn divergence_is_detected() {
        let data = small();
        let opts = TrainOptions {
            lr: 1e308,
            steps: 3,
            ..TrainOptions::default()
        };
        assert!(matches!(
            toy_train(&data, Objective::Sft, &opts, None),
            Err(ReweightError::DivergenceDetected(_))
        ));
    }

    #[test]
    fn training_is_deterministic() {
        let data = small();
        let opts = TrainOptions {
            steps: 20,
            ..TrainOptions::default()
        };
        let a = toy_train(&data, Objective::Rft, &opts, None).unwrap();
        let b = toy_train(&data, Objective::Rft, &opts, None).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn objective_names_round_trip() {
        for obj in Objective::ALL {
            assert_eq!(obj.as_str().parse::<Objective>().unwrap(), obj);
            let json = serde_json::to_string(&obj).unwrap();
            assert_eq!(json, format!("\"{}\"", obj.as_str()));
        }
    }
}
