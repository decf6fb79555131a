//! Adaptation objectives: entropy-family losses over frame posteriors and
//! the composite objective that adds correction feedback through a CTC term.

use serde::{Deserialize, Serialize};

use crate::ctc::{ctc_forward_backward, LogitMatrix, Transcription};
use crate::error::{Error, Result};
use crate::util::softmax;
use crate::vocab::BLANK;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TtaLossKind {
    ShannonEm,
    RenyiEm,
}

/// Configuration of the self-supervised loss. File keys are the short
/// names used in the `[objective]` config section.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct TtaLossConfig {
    pub kind: TtaLossKind,
    pub temperature: f64,
    #[serde(rename = "gamma")]
    pub renyi_gamma: f64,
    #[serde(rename = "blank_threshold")]
    pub blank_suppression_threshold: f64,
}

impl Default for TtaLossConfig {
    fn default() -> Self {
        TtaLossConfig {
            kind: TtaLossKind::RenyiEm,
            temperature: 2.5,
            renyi_gamma: 0.8,
            blank_suppression_threshold: 0.95,
        }
    }
}

impl TtaLossConfig {
    pub fn validate(&self) -> Result<()> {
        if self.temperature.is_nan() || self.temperature <= 0.0 {
            return Err(Error::InvalidArgument("temperature must be > 0".into()));
        }
        if self.renyi_gamma.is_nan() || self.renyi_gamma <= 0.0 {
            return Err(Error::InvalidArgument("gamma must be > 0".into()));
        }
        if !(0.0..=1.0).contains(&self.blank_suppression_threshold) {
            return Err(Error::InvalidArgument(
                "blank_threshold must be in [0, 1]".into(),
            ));
        }
        Ok(())
    }
}

/// The composite objective of one adaptation step.
#[derive(Debug, Clone)]
pub struct CompositeLoss {
    pub l_tta: f64,
    /// CTC loss against the correction; `None` when the term was dropped
    /// (empty correction or infeasible alignment).
    pub l_ctc: Option<f64>,
    pub lambda_li: f64,
    pub total: f64,
    pub grad: Vec<Vec<f64>>,
}

/// Frames kept by blank suppression: a frame is excluded when the model's
/// own (untempered) posterior puts more than `threshold` on the blank.
fn retained_frames(logits: &LogitMatrix, threshold: f64) -> Vec<usize> {
    let mut probs = Vec::new();
    let mut keep = Vec::new();
    for t in 0..logits.len() {
        softmax(logits.row(t), &mut probs);
        if probs[BLANK] <= threshold {
            keep.push(t);
        }
    }
    keep
}

fn zero_grad(logits: &LogitMatrix) -> Vec<Vec<f64>> {
    vec![vec![0.0; logits.class_count()]; logits.len()]
}

fn xlnx(p: f64) -> f64 {
    if p > 0.0 {
        p * p.ln()
    } else {
        0.0
    }
}

/// Mean Shannon entropy of the tempered frame posteriors over retained
/// frames, with its exact logit gradient. All frames suppressed gives a
/// zero loss and a zero gradient.
pub fn shannon_entropy_loss(logits: &LogitMatrix, cfg: &TtaLossConfig) -> (f64, Vec<Vec<f64>>) {
    let keep = retained_frames(logits, cfg.blank_suppression_threshold);
    let mut grad = zero_grad(logits);
    if keep.is_empty() {
        return (0.0, grad);
    }
    let t_inv = 1.0 / cfg.temperature;
    let scale = 1.0 / keep.len() as f64;
    let mut loss = 0.0;
    let mut probs = Vec::new();
    let mut tempered = Vec::new();
    for &t in &keep {
        tempered.clear();
        tempered.extend(logits.row(t).iter().map(|x| x * t_inv));
        softmax(&tempered, &mut probs);
        let entropy: f64 = -probs.iter().map(|&p| xlnx(p)).sum::<f64>();
        loss += entropy;
        for (k, &p) in probs.iter().enumerate() {
            // dH/dz_j = -p_j (ln p_j + H); chain through z = x / T
            let ln_p = if p > 0.0 { p.ln() } else { 0.0 };
            grad[t][k] = -(p * (ln_p + entropy)) * t_inv * scale;
        }
    }
    (loss * scale, grad)
}

/// Mean Rényi entropy of order gamma over retained frames, with its exact
/// logit gradient. Rejects gamma = 1 (use the Shannon loss instead).
pub fn renyi_entropy_loss(
    logits: &LogitMatrix,
    cfg: &TtaLossConfig,
) -> Result<(f64, Vec<Vec<f64>>)> {
    let gamma = cfg.renyi_gamma;
    if gamma.is_nan() || gamma <= 0.0 {
        return Err(Error::InvalidArgument("gamma must be > 0".into()));
    }
    if gamma == 1.0 {
        return Err(Error::InvalidArgument(
            "gamma = 1 is the Shannon entropy; use kind = shannon_em".into(),
        ));
    }
    let keep = retained_frames(logits, cfg.blank_suppression_threshold);
    let mut grad = zero_grad(logits);
    if keep.is_empty() {
        return Ok((0.0, grad));
    }
    let t_inv = 1.0 / cfg.temperature;
    let scale = 1.0 / keep.len() as f64;
    let mut loss = 0.0;
    let mut probs = Vec::new();
    let mut tempered = Vec::new();
    for &t in &keep {
        tempered.clear();
        tempered.extend(logits.row(t).iter().map(|x| x * t_inv));
        softmax(&tempered, &mut probs);
        let s: f64 = probs.iter().map(|&p| p.powf(gamma)).sum();
        loss += s.ln() / (1.0 - gamma);
        let coef = gamma / ((1.0 - gamma) * s);
        for (k, &p) in probs.iter().enumerate() {
            // dH/dz_j = gamma/(1-gamma) * (p_j^gamma / S - p_j)
            grad[t][k] = coef * (p.powf(gamma) - p * s) * t_inv * scale;
        }
    }
    Ok((loss * scale, grad))
}

/// Evaluates the configured entropy loss.
pub fn tta_loss(logits: &LogitMatrix, cfg: &TtaLossConfig) -> Result<(f64, Vec<Vec<f64>>)> {
    match cfg.kind {
        TtaLossKind::ShannonEm => Ok(shannon_entropy_loss(logits, cfg)),
        TtaLossKind::RenyiEm => renyi_entropy_loss(logits, cfg),
    }
}

/// The adaptive correction weight `l_tta / (l_tta + l_ctc)`, defined as 0
/// when both losses vanish.
pub fn adaptive_lambda(l_tta: f64, l_ctc: f64) -> Result<f64> {
    if !l_tta.is_finite() || !l_ctc.is_finite() || l_tta < 0.0 || l_ctc < 0.0 {
        return Err(Error::InvalidArgument(
            "adaptive lambda needs finite nonnegative losses".into(),
        ));
    }
    if l_tta == 0.0 && l_ctc == 0.0 {
        return Ok(0.0);
    }
    Ok(l_tta / (l_tta + l_ctc))
}

/// Combines the entropy loss with the correction CTC term. The weight is
/// treated as a constant in the gradient. An empty correction or an
/// infeasible alignment drops the CTC term entirely.
pub fn composite_loss(
    logits: &LogitMatrix,
    correction: &Transcription,
    cfg: &TtaLossConfig,
) -> Result<CompositeLoss> {
    cfg.validate()?;
    let (l_tta, grad_tta) = tta_loss(logits, cfg)?;
    if correction.is_empty() {
        return Ok(CompositeLoss {
            l_tta,
            l_ctc: None,
            lambda_li: 0.0,
            total: l_tta,
            grad: grad_tta,
        });
    }
    let ctc = ctc_forward_backward(logits, correction)?;
    if !ctc.loss.is_finite() {
        return Ok(CompositeLoss {
            l_tta,
            l_ctc: None,
            lambda_li: 0.0,
            total: l_tta,
            grad: grad_tta,
        });
    }
    let lambda_li = adaptive_lambda(l_tta, ctc.loss)?;
    let mut grad = grad_tta;
    for (row, ctc_row) in grad.iter_mut().zip(&ctc.grad) {
        for (g, &gc) in row.iter_mut().zip(ctc_row) {
            *g += lambda_li * gc;
        }
    }
    Ok(CompositeLoss {
        l_tta,
        l_ctc: Some(ctc.loss),
        lambda_li,
        total: l_tta + lambda_li * ctc.loss,
        grad,
    })
}
