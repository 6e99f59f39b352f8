//! 3D-reweighted fine-tuning math.
//!
//! Each ground-truth token j carries three log-probabilities: under the frozen
//! blind model (text only), under the current model with text only, and under
//! the current model with text and 3D input. The token weight is the ratio of
//! the first two; the loss is the weighted negative log-likelihood of the third.
//!
//! Uncapped, the loss splits exactly into the blind model's negative
//! log-likelihood (independent of the trained parameters) plus a weighted
//! conditional-independence gap term; [`decomposition_check`] verifies that
//! numerically.

pub mod toy;

use serde::{Deserialize, Serialize};

use crate::error::ReweightError;

/// Per-token log-probabilities of one ground-truth answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenLogProbs {
    #[serde(default)]
    pub qid: String,
    pub tokens: Vec<u32>,
    pub lp_blind: Vec<f64>,
    pub lp_text: Vec<f64>,
    pub lp_full: Vec<f64>,
}

impl TokenLogProbs {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    fn validate(&self, index: usize) -> Result<(), ReweightError> {
        let t = self.tokens.len();
        if self.lp_blind.len() != t || self.lp_text.len() != t || self.lp_full.len() != t {
            return Err(ReweightError::LengthMismatch(index));
        }
        let bad = |v: &f64| v.is_nan() || *v > 0.0 || *v == f64::INFINITY;
        if self.lp_blind.iter().chain(&self.lp_text).chain(&self.lp_full).any(bad) {
            return Err(ReweightError::BadLogProb(index));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReweightConfig {
    /// Probabilities are clamped to [eps, 1 − eps] before use.
    pub prob_clamp_eps: f64,
    /// [w_min, w_max]
    pub weight_cap: [f64; 2],
    /// Treat weights as constants when differentiating.
    pub detach_weights: bool,
}

impl Default for ReweightConfig {
    fn default() -> Self {
        Self {
            prob_clamp_eps: 1e-6,
            weight_cap: [0.1, 10.0],
            detach_weights: true,
        }
    }
}

impl ReweightConfig {
    /// Caps wide open and clamping only at the edge of double precision, so
    /// the loss identity holds exactly.
    pub fn uncapped() -> Self {
        Self {
            prob_clamp_eps: 1e-15,
            weight_cap: [f64::MIN_POSITIVE, f64::INFINITY],
            detach_weights: true,
        }
    }

    /// Every weight pinned to 1, which reduces the loss to cross-entropy.
    pub fn unit_weights() -> Self {
        Self {
            weight_cap: [1.0, 1.0],
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), ReweightError> {
        let eps = self.prob_clamp_eps;
        if !(eps > 0.0 && eps < 0.5) {
            return Err(ReweightError::Config(format!("prob_clamp_eps {eps} outside (0, 0.5)")));
        }
        let [lo, hi] = self.weight_cap;
        if !(lo > 0.0 && lo <= 1.0 && hi >= 1.0) {
            return Err(ReweightError::Config(format!("weight_cap [{lo}, {hi}] must satisfy 0 < w_min <= 1 <= w_max")));
        }
        Ok(())
    }

    pub fn log_bounds(&self) -> (f64, f64) {
        (self.prob_clamp_eps.ln(), (-self.prob_clamp_eps).ln_1p())
    }
}

/// Clamps a log-probability into the config's range, reporting whether it moved.
pub fn clamp_log_prob(lp: f64, cfg: &ReweightConfig) -> (f64, bool) {
    let (lo, hi) = cfg.log_bounds();
    let c = lp.clamp(lo, hi);
    (c, c != lp)
}

/// Raw ratio and capped weight for one token. Inputs are clamped log-probs.
pub fn surprise_weight_parts(lp_blind: f64, lp_text: f64, cfg: &ReweightConfig) -> (f64, f64) {
    let raw = lp_blind / lp_text;
    (raw, raw.clamp(cfg.weight_cap[0], cfg.weight_cap[1]))
}

/// Ratio of blind to current text-only log-probability, clipped to the weight cap.
pub fn surprise_weight(lp_blind: f64, lp_text: f64, cfg: &ReweightConfig) -> f64 {
    surprise_weight_parts(lp_blind, lp_text, cfg).1
}

/// Relative change in the ground-truth token's probability when 3D input is added.
pub fn independence_gap(lp_full: f64, lp_text: f64) -> f64 {
    (lp_full - lp_text).exp_m1()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub loss: f64,
    /// Per-sequence loss before batch averaging.
    pub sequence_losses: Vec<f64>,
    pub per_token_w: Vec<Vec<f64>>,
    /// Number of log-probs that hit the clamp.
    pub clamped: usize,
    /// Number of weights clipped by the cap.
    pub capped: usize,
}

struct Prepared {
    blind: Vec<f64>,
    text: Vec<f64>,
    full: Vec<f64>,
    w: Vec<f64>,
    clamped: usize,
    capped: usize,
}

fn prepare(seq: &TokenLogProbs, cfg: &ReweightConfig) -> Prepared {
    let mut clamped = 0;
    let mut clamp_all = |v: &[f64]| -> Vec<f64> {
        v.iter()
            .map(|lp| {
                let (c, moved) = clamp_log_prob(*lp, cfg);
                clamped += moved as usize;
                c
            })
            .collect()
    };
    let blind = clamp_all(&seq.lp_blind);
    let text = clamp_all(&seq.lp_text);
    let full = clamp_all(&seq.lp_full);
    let mut capped = 0;
    let w = blind
        .iter()
        .zip(&text)
        .map(|(b, t)| {
            let (raw, w) = surprise_weight_parts(*b, *t, cfg);
            capped += (raw != w) as usize;
            w
        })
        .collect();
    Prepared {
        blind,
        text,
        full,
        w,
        clamped,
        capped,
    }
}

fn validate_batch(batch: &[TokenLogProbs], cfg: &ReweightConfig) -> Result<(), ReweightError> {
    cfg.validate()?;
    batch.iter().enumerate().try_for_each(|(i, s)| s.validate(i))
}

fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        0.0
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

/// Token-summed, batch-averaged reweighted negative log-likelihood of `lp_full`.
pub fn rft_loss(batch: &[TokenLogProbs], cfg: &ReweightConfig) -> Result<LossReport, ReweightError> {
    validate_batch(batch, cfg)?;
    let mut sequence_losses = Vec::with_capacity(batch.len());
    let mut per_token_w = Vec::with_capacity(batch.len());
    let (mut clamped, mut capped) = (0, 0);
    for seq in batch {
        let p = prepare(seq, cfg);
        let loss = p.w.iter().zip(&p.full).fold(0.0, |acc, (w, lp)| acc + -(w * lp));
        sequence_losses.push(loss);
        per_token_w.push(p.w);
        clamped += p.clamped;
        capped += p.capped;
    }
    Ok(LossReport {
        loss: mean(&sequence_losses),
        sequence_losses,
        per_token_w,
        clamped,
        capped,
    })
}

/// Plain token cross-entropy over `lp_full`, with the same reduction as [`rft_loss`].
pub fn cross_entropy(batch: &[TokenLogProbs]) -> f64 {
    let losses: Vec<f64> = batch
        .iter()
        .map(|s| s.lp_full.iter().fold(0.0, |acc, lp| acc + -lp))
        .collect();
    mean(&losses)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    /// The reweighted loss.
    pub lhs: f64,
    /// Blind model's negative log-likelihood; no dependence on the trained model.
    pub term_blind: f64,
    /// Weighted conditional-independence gap term.
    pub term_gap: f64,
    pub residual: f64,
}

fn decompose_prepared(p: &Prepared) -> Decomposition {
    let lhs = p.w.iter().zip(&p.full).fold(0.0, |acc, (w, lp)| acc + -(w * lp));
    let term_blind = p.blind.iter().fold(0.0, |acc, lp| acc + -lp);
    let term_gap = p
        .w
        .iter()
        .zip(p.full.iter().zip(&p.text))
        .fold(0.0, |acc, (w, (f, t))| acc + -(w * independence_gap(*f, *t).ln_1p()));
    Decomposition {
        lhs,
        term_blind,
        term_gap,
        residual: lhs - term_blind - term_gap,
    }
}

/// Per-sequence decomposition of the reweighted loss.
pub fn decompose_sequences(batch: &[TokenLogProbs], cfg: &ReweightConfig) -> Result<Vec<Decomposition>, ReweightError> {
    validate_batch(batch, cfg)?;
    batch
        .iter()
        .map(|seq| {
            let p = prepare(seq, cfg);
            if p.clamped > 0 || p.capped > 0 {
                return Err(ReweightError::CapFired);
            }
            Ok(decompose_prepared(&p))
        })
        .collect()
}

/// Batch-averaged decomposition: lhs = term_blind + term_gap + residual.
/// Fails with `CapFired` when any clamp or cap changed a value.
pub fn decomposition_check(batch: &[TokenLogProbs], cfg: &ReweightConfig) -> Result<Decomposition, ReweightError> {
    let parts = decompose_sequences(batch, cfg)?;
    let avg = |f: fn(&Decomposition) -> f64| mean(&parts.iter().map(f).collect::<Vec<_>>());
    let lhs = avg(|d| d.lhs);
    let term_blind = avg(|d| d.term_blind);
    let term_gap = avg(|d| d.term_gap);
    Ok(Decomposition {
        lhs,
        term_blind,
        term_gap,
        residual: lhs - term_blind - term_gap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(blind: &[f64], text: &[f64], full: &[f64]) -> TokenLogProbs {
        TokenLogProbs {
            qid: String::new(),
            tokens: (0..blind.len() as u32).collect(),
            lp_blind: blind.to_vec(),
            lp_text: text.to_vec(),
            lp_full: full.to_vec(),
        }
    }

    #[test]
    fn equal_surprise_gives_unit_weight() {
        let cfg = ReweightConfig::default();
        assert_eq!(surprise_weight(-1.3, -1.3, &cfg), 1.0);
        assert_eq!(surprise_weight(-2.0, -1.0, &cfg), 2.0);
    }

    #[test]
    fn near_certain_text_model_hits_the_cap() {
        let cfg = ReweightConfig::default();
        let lp_text_raw = (-1e-12f64).ln_1p();
        let lp_blind = -1.0;
        // uncapped ratio would be ~1e12 before clamping, ~1e6 after
        assert!(lp_blind / lp_text_raw > 1e11);
        let (t, moved) = clamp_log_prob(lp_text_raw, &cfg);
        assert!(moved);
        let (raw, w) = surprise_weight_parts(lp_blind, t, &cfg);
        assert!((raw - 1e6).abs() / 1e6 < 1e-3);
        assert_eq!(w, 10.0);
    }

    #[test]
    fn single_token_hand_arithmetic() {
        let r = rft_loss(&[seq(&[-2.0], &[-1.0], &[-0.5])], &ReweightConfig::default()).unwrap();
        assert_eq!(r.per_token_w, vec![vec![2.0]]);
        assert!((r.loss - 1.0).abs() < 1e-15);
    }

    #[test]
    fn gap_examples() {
        assert_eq!(independence_gap(-0.7, -0.7), 0.0);
        assert!((independence_gap(0.8f64.ln(), 0.4f64.ln()) - 1.0).abs() < 1e-12);
        assert!((independence_gap(0.2f64.ln(), 0.4f64.ln()) + 0.5).abs() < 1e-12);
    }

    #[test]
    fn unit_weights_equal_cross_entropy_bitwise() {
        let batch = vec![seq(&[-0.3, -2.0], &[-0.5, -0.1], &[-0.25, -1.75]), seq(&[-4.0], &[-3.0], &[-0.01])];
        let r = rft_loss(&batch, &ReweightConfig::unit_weights()).unwrap();
        assert_eq!(r.loss.to_bits(), cross_entropy(&batch).to_bits());
    }

    #[test]
    fn zero_gap_collapses_to_blind_term() {
        let batch = vec![seq(&[-0.3, -2.0], &[-0.5, -0.1], &[-0.5, -0.1])];
        let d = decomposition_check(&batch, &ReweightConfig::uncapped()).unwrap();
        assert_eq!(d.term_gap, 0.0);
        assert!((d.lhs - d.term_blind).abs() < 1e-12);
    }

    #[test]
    fn caps_firing_blocks_the_identity() {
        let batch = vec![seq(&[-5.0], &[-0.01], &[-0.5])];
        assert_eq!(
            decomposition_check(&batch, &ReweightConfig::default()),
            Err(ReweightError::CapFired)
        );
    }

    #[test]
    fn bad_inputs_are_rejected() {
        let cfg = ReweightConfig::default();
        assert_eq!(rft_loss(&[seq(&[-1.0], &[-1.0, -2.0], &[-1.0])], &cfg), Err(ReweightError::LengthMismatch(0)));
        assert_eq!(rft_loss(&[seq(&[0.5], &[-1.0], &[-1.0])], &cfg), Err(ReweightError::BadLogProb(0)));
        let bad_cfg = ReweightConfig {
            weight_cap: [2.0, 10.0],
            ..cfg
        };
        assert!(matches!(rft_loss(&[], &bad_cfg), Err(ReweightError::Config(_))));
    }

    #[test]
    fn clamp_flags_are_reported() {
        let r = rft_loss(&[seq(&[f64::NEG_INFINITY], &[-1.0], &[-1.0])], &ReweightConfig::default()).unwrap();
        assert_eq!(r.clamped, 1);
        assert!(r.loss.is_finite());
    }
}
