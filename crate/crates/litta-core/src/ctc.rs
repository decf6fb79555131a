//! Connectionist temporal classification: path collapse, log-space
//! forward-backward loss with its analytic logit gradient, greedy decoding,
//! and a path-enumeration oracle for small instances.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util::{log_softmax, log_sum_exp2, softmax};
use crate::vocab::{Vocab, BLANK};

/// Largest number of paths `brute_force_ctc` will enumerate.
const BRUTE_FORCE_PATH_LIMIT: f64 = 1e6;

/// A label sequence over the text vocabulary (never contains the blank).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default)]
#[serde(transparent)]
pub struct Transcription(String);

impl Transcription {
    pub fn new(text: impl Into<String>, vocab: &Vocab) -> Result<Self> {
        let text = text.into();
        vocab.validate_text(&text, "transcription")?;
        Ok(Transcription(text))
    }

    pub fn empty() -> Self {
        Transcription(String::new())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn char_len(&self) -> usize {
        self.0.chars().count()
    }
}

impl std::fmt::Display for Transcription {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

/// An L x C matrix of unnormalized class scores over vocabulary-plus-blank.
#[derive(Debug, Clone)]
pub struct LogitMatrix {
    rows: Vec<Vec<f64>>,
    vocab: Vocab,
}

impl LogitMatrix {
    pub fn new(rows: Vec<Vec<f64>>, vocab: Vocab) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InvalidArgument("logit matrix has no frames".into()));
        }
        let c = vocab.size();
        for (t, row) in rows.iter().enumerate() {
            if row.len() != c {
                return Err(Error::InvalidArgument(format!(
                    "logit row {t} has width {} but vocabulary size is {c}",
                    row.len()
                )));
            }
            if row.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite(format!("logit row {t}")));
            }
        }
        Ok(LogitMatrix { rows, vocab })
    }

    /// Number of frames L.
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Number of classes C including the blank.
    pub fn class_count(&self) -> usize {
        self.vocab.size()
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.rows[t]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    /// Per-frame softmax probabilities.
    pub fn frame_probs(&self) -> Vec<Vec<f64>> {
        let mut out = Vec::with_capacity(self.rows.len());
        let mut buf = Vec::new();
        for row in &self.rows {
            softmax(row, &mut buf);
            out.push(buf.clone());
        }
        out
    }

    /// Per-frame log-softmax.
    pub fn frame_log_probs(&self) -> Vec<Vec<f64>> {
        let mut out = Vec::with_capacity(self.rows.len());
        let mut buf = Vec::new();
        for row in &self.rows {
            log_softmax(row, &mut buf);
            out.push(buf.clone());
        }
        out
    }
}

/// Loss and exact logit gradient of one CTC evaluation.
#[derive(Debug, Clone)]
pub struct CtcResult {
    /// -log p(target | logits); `f64::INFINITY` when no alignment exists.
    pub loss: f64,
    /// d(loss)/d(logit), L x C; all zeros when the loss is infinite.
    pub grad: Vec<Vec<f64>>,
}

/// Merges adjacent duplicate classes, then removes blanks.
pub fn collapse(path: &[usize], vocab: &Vocab) -> Transcription {
    let mut text = String::new();
    let mut prev: Option<usize> = None;
    for &class in path {
        assert!(class < vocab.size(), "class index {class} out of range");
        if prev != Some(class) {
            if let Some(c) = vocab.char_of(class) {
                text.push(c);
            }
        }
        prev = Some(class);
    }
    Transcription(text)
}

/// Target classes with blanks interleaved: `[blank, y1, blank, ..., yn, blank]`.
fn extended_target(target: &Transcription, vocab: &Vocab) -> Result<Vec<usize>> {
    let mut ext = vec![BLANK];
    for ch in target.as_str().chars() {
        let class = vocab.class_of(ch).ok_or(Error::OutOfVocab {
            ch,
            context: "ctc target".into(),
        })?;
        ext.push(class);
        ext.push(BLANK);
    }
    Ok(ext)
}

/// Whether the forward lattice allows a skip transition into slot `s`.
fn allows_skip(ext: &[usize], s: usize) -> bool {
    s >= 2 && ext[s] != BLANK && ext[s] != ext[s - 2]
}

/// Exact CTC loss and gradient via the log-space forward-backward recursion
/// over the extended target. Infeasible targets yield an infinite loss and a
/// zero gradient rather than an error, so adaptation loops can drop the term.
pub fn ctc_forward_backward(logits: &LogitMatrix, target: &Transcription) -> Result<CtcResult> {
    let ext = extended_target(target, logits.vocab())?;
    let l = logits.len();
    let s_len = ext.len();
    let zero_grad = || vec![vec![0.0; logits.class_count()]; l];

    // Minimum frames: every label plus a mandatory blank between repeats.
    let n = target.char_len();
    let repeats = ext
        .iter()
        .skip(1)
        .step_by(2)
        .zip(ext.iter().skip(3).step_by(2))
        .filter(|(a, b)| a == b)
        .count();
    if n + repeats > l {
        return Ok(CtcResult {
            loss: f64::INFINITY,
            grad: zero_grad(),
        });
    }

    let lp = logits.frame_log_probs();
    let ninf = f64::NEG_INFINITY;

    // Forward: alpha[t][s] includes the emission at frame t.
    let mut alpha = vec![vec![ninf; s_len]; l];
    alpha[0][0] = lp[0][ext[0]];
    if s_len > 1 {
        alpha[0][1] = lp[0][ext[1]];
    }
    for t in 1..l {
        for s in 0..s_len {
            let mut acc = alpha[t - 1][s];
            if s >= 1 {
                acc = log_sum_exp2(acc, alpha[t - 1][s - 1]);
            }
            if allows_skip(&ext, s) {
                acc = log_sum_exp2(acc, alpha[t - 1][s - 2]);
            }
            alpha[t][s] = if acc == ninf { ninf } else { acc + lp[t][ext[s]] };
        }
    }

    let log_p = if s_len > 1 {
        log_sum_exp2(alpha[l - 1][s_len - 1], alpha[l - 1][s_len - 2])
    } else {
        alpha[l - 1][s_len - 1]
    };
    if log_p == ninf {
        return Ok(CtcResult {
            loss: f64::INFINITY,
            grad: zero_grad(),
        });
    }

    // Backward: beta[t][s] also includes the emission at frame t.
    let mut beta = vec![vec![ninf; s_len]; l];
    beta[l - 1][s_len - 1] = lp[l - 1][ext[s_len - 1]];
    if s_len > 1 {
        beta[l - 1][s_len - 2] = lp[l - 1][ext[s_len - 2]];
    }
    for t in (0..l.saturating_sub(1)).rev() {
        for s in 0..s_len {
            let mut acc = beta[t + 1][s];
            if s + 1 < s_len {
                acc = log_sum_exp2(acc, beta[t + 1][s + 1]);
            }
            if s + 2 < s_len && allows_skip(&ext, s + 2) {
                acc = log_sum_exp2(acc, beta[t + 1][s + 2]);
            }
            beta[t][s] = if acc == ninf { ninf } else { acc + lp[t][ext[s]] };
        }
    }

    // Gradient: softmax minus the normalized occupancy posterior.
    let mut grad = Vec::with_capacity(l);
    let mut probs = Vec::new();
    for t in 0..l {
        softmax(logits.row(t), &mut probs);
        let mut row = probs.clone();
        for s in 0..s_len {
            // alpha and beta both include the frame-t emission; divide one out.
            let occ = alpha[t][s] + beta[t][s] - lp[t][ext[s]] - log_p;
            if occ != ninf {
                row[ext[s]] -= occ.exp();
            }
        }
        grad.push(row);
    }

    Ok(CtcResult { loss: -log_p, grad })
}

/// Sums softmax path probabilities over every alignment that collapses to
/// `target`. Exponential in L; the verification oracle for the DP above.
pub fn brute_force_ctc(logits: &LogitMatrix, target: &Transcription) -> Result<f64> {
    logits
        .vocab()
        .validate_text(target.as_str(), "ctc target")?;
    let l = logits.len();
    let c = logits.class_count();
    let paths = (c as f64).powi(l as i32);
    if paths > BRUTE_FORCE_PATH_LIMIT {
        return Err(Error::InstanceTooLarge {
            paths,
            limit: BRUTE_FORCE_PATH_LIMIT,
        });
    }
    let probs = logits.frame_probs();
    let mut total = 0.0;
    let mut path = vec![0usize; l];
    loop {
        if collapse(&path, logits.vocab()).as_str() == target.as_str() {
            let p: f64 = path.iter().zip(&probs).map(|(&k, row)| row[k]).product();
            total += p;
        }
        // advance the odometer
        let mut i = 0;
        loop {
            if i == l {
                return Ok(total);
            }
            path[i] += 1;
            if path[i] < c {
                break;
            }
            path[i] = 0;
            i += 1;
        }
    }
}

/// Per-frame argmax (ties to the lowest class index) followed by collapse.
pub fn greedy_decode(logits: &LogitMatrix) -> Transcription {
    let path: Vec<usize> = logits
        .rows()
        .iter()
        .map(|row| {
            let mut best = 0usize;
            for (k, &x) in row.iter().enumerate() {
                if x > row[best] {
                    best = k;
                }
            }
            best
        })
        .collect();
    collapse(&path, logits.vocab())
}
