//! Per-utterance adaptation episodes: the step loop over entropy and
//! correction objectives, and the order-stable batch driver. Episodes are
//! strictly episodic; the base head is never mutated.

mod optim;

pub use optim::{adamw_step, cosine_lr, AdamWConfig, AdamWState};

use serde::{Deserialize, Serialize};

use crate::corrector::{Corrector, CorrectorSpec};
use crate::ctc::{greedy_decode, Transcription};
use crate::data::{DatasetManifest, Utterance};
use crate::error::{Error, Result};
use crate::eval::wer;
use crate::head::AdaptableHead;
use crate::ngram::NGramLM;
use crate::objectives::{composite_loss, tta_loss, TtaLossConfig, TtaLossKind};
use crate::util::derive_seed;

/// Adaptation method. `em` and `sgem` are entropy-only baselines; `litta`
/// adds the corrector's CTC feedback. `none` records the unadapted decode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    None,
    Em,
    Sgem,
    Litta,
}

impl Method {
    pub fn label(&self) -> &'static str {
        match self {
            Method::None => "none",
            Method::Em => "em",
            Method::Sgem => "sgem",
            Method::Litta => "litta",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Method::None),
            "em" => Ok(Method::Em),
            "sgem" => Ok(Method::Sgem),
            "litta" => Ok(Method::Litta),
            other => Err(Error::InvalidArgument(format!("unknown method {other:?}"))),
        }
    }
}

/// Episode configuration. Defaults follow the reference hyperparameters:
/// ten steps with the learning rate annealed from 4e-5 to 2e-5.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct AdaptConfig {
    pub method: Method,
    pub steps: usize,
    pub lr_max: f64,
    pub lr_min: f64,
    pub adamw: AdamWConfig,
    pub objective: TtaLossConfig,
    pub corrector: CorrectorSpec,
    /// Invoke the corrector on steps where `step % correct_every == 0`;
    /// other steps reuse the latest correction.
    pub correct_every: usize,
    pub seed: u64,
}

impl Default for AdaptConfig {
    fn default() -> Self {
        AdaptConfig {
            method: Method::Litta,
            steps: 10,
            lr_max: 4e-5,
            lr_min: 2e-5,
            adamw: AdamWConfig::default(),
            objective: TtaLossConfig::default(),
            corrector: CorrectorSpec::identity(),
            correct_every: 1,
            seed: 0,
        }
    }
}

impl AdaptConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lr_min > self.lr_max {
            return Err(Error::InvalidArgument("lr_min must be <= lr_max".into()));
        }
        if self.correct_every < 1 {
            return Err(Error::InvalidArgument("correct_every must be >= 1".into()));
        }
        self.objective.validate()?;
        Ok(())
    }

    /// The objective actually optimized: `em` forces the Shannon loss,
    /// `sgem` the Rényi loss; `litta` and `none` use the configured kind.
    fn effective_objective(&self) -> TtaLossConfig {
        let mut objective = self.objective;
        match self.method {
            Method::Em => objective.kind = TtaLossKind::ShannonEm,
            Method::Sgem => objective.kind = TtaLossKind::RenyiEm,
            Method::Litta | Method::None => {}
        }
        objective
    }
}

/// One row of an adaptation trace.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub lr: f64,
    pub l_tta: f64,
    /// CTC loss against the correction; absent when the term was dropped
    /// or the method has no correction channel.
    pub l_ctc: Option<f64>,
    pub lambda_li: f64,
    pub total: f64,
    pub decoded_text: String,
    pub correction_text: Option<String>,
    pub wer_vs_ref: Option<f64>,
    pub ppl: f64,
}

/// The full record of one episode. Row `k` describes the model state after
/// `k` updates; row 0 is the pre-adaptation snapshot.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdaptationTrace {
    pub id: String,
    pub steps: Vec<StepRecord>,
    pub final_text: String,
    pub final_wer: Option<f64>,
    pub final_ppl: Option<f64>,
    #[serde(rename = "ref")]
    pub reference: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub aborted: Option<String>,
    #[serde(skip)]
    pub final_head: Option<AdaptableHead>,
}

/// Runs one episode on a private copy of `head`. The input head is never
/// mutated. Builds the corrector from the config; batch callers should use
/// `adapt_utterance_with` to share one corrector across episodes.
pub fn adapt_utterance(
    head: &AdaptableHead,
    utt: &Utterance,
    cfg: &AdaptConfig,
    lm_for_ppl: &NGramLM,
) -> Result<AdaptationTrace> {
    let corrector = build_method_corrector(cfg, &head.vocab)?;
    adapt_utterance_with(head, utt, cfg, lm_for_ppl, &corrector)
}

/// Only the corrector-informed method has a correction channel; the other
/// methods never consult (or validate) the corrector configuration.
fn build_method_corrector(cfg: &AdaptConfig, vocab: &crate::vocab::Vocab) -> Result<Corrector> {
    match cfg.method {
        Method::Litta => Corrector::build(&cfg.corrector, vocab),
        _ => Ok(Corrector::Identity),
    }
}

/// Episode body with an externally constructed corrector.
pub fn adapt_utterance_with(
    head: &AdaptableHead,
    utt: &Utterance,
    cfg: &AdaptConfig,
    lm_for_ppl: &NGramLM,
    corrector: &Corrector,
) -> Result<AdaptationTrace> {
    cfg.validate()?;
    if utt.feature_dim() != head.feature_dim() {
        return Err(Error::InvalidArgument(format!(
            "utterance {:?} has dimension {} but the head expects {}",
            utt.id,
            utt.feature_dim(),
            head.feature_dim()
        )));
    }
    let objective = cfg.effective_objective();
    let steps = if cfg.method == Method::None { 0 } else { cfg.steps };
    let reference = utt.reference.as_ref().map(|r| r.as_str().to_string());

    let mut working = head.clone();
    let mut params = working.flatten();
    let mut state = AdamWState::new(params.len());
    let mut rows: Vec<StepRecord> = Vec::with_capacity(steps + 1);
    let mut last_correction: Option<Transcription> = None;

    for step in 0..=steps {
        let lr = if cfg.steps >= 1 {
            cosine_lr(step.min(cfg.steps), cfg.steps, cfg.lr_max, cfg.lr_min)?
        } else {
            cfg.lr_max
        };
        // a diverged update can push the logits out of the finite range;
        // past step 0 that is an episode abort, not a caller error
        let logits = match working.logits(&utt.frames) {
            Ok(logits) => logits,
            Err(e) if step > 0 => {
                return Ok(aborted_trace(utt, head, rows, reference, e.to_string()))
            }
            Err(e) => return Err(e),
        };
        let decoded = greedy_decode(&logits);
        let ppl = lm_for_ppl.perplexity(decoded.as_str())?;
        let wer_vs_ref = match &reference {
            Some(r) => Some(wer(r, decoded.as_str())?),
            None => None,
        };

        // losses and gradient at the current state
        let (l_tta, l_ctc, lambda_li, total, grad) = match cfg.method {
            Method::Litta => {
                if step % cfg.correct_every == 0 || last_correction.is_none() {
                    let outcome = corrector.correct(&decoded);
                    last_correction = Some(outcome.corrected);
                }
                let correction = last_correction.clone().expect("correction present");
                let out = composite_loss(&logits, &correction, &objective)?;
                (out.l_tta, out.l_ctc, out.lambda_li, out.total, out.grad)
            }
            _ => {
                let (l_tta, grad) = tta_loss(&logits, &objective)?;
                (l_tta, None, 0.0, l_tta, grad)
            }
        };

        rows.push(StepRecord {
            step,
            lr,
            l_tta,
            l_ctc,
            lambda_li,
            total,
            decoded_text: decoded.as_str().to_string(),
            correction_text: last_correction.as_ref().map(|c| c.as_str().to_string()),
            wer_vs_ref,
            ppl,
        });

        if step == steps {
            break;
        }

        if !total.is_finite() {
            return Ok(aborted_trace(
                utt,
                head,
                rows,
                reference,
                format!("non-finite loss at step {step}"),
            ));
        }

        // chain rule to the affine head: dL/dW = sum_t g_t x_t', dL/db = sum_t g_t
        let c = head.class_count();
        let d = head.feature_dim();
        let mut grads = vec![0.0; params.len()];
        for (frame, g_row) in utt.frames.iter().zip(&grad) {
            for class in 0..c {
                let g = g_row[class];
                if g == 0.0 {
                    continue;
                }
                let row_base = class * d;
                for (i, &x) in frame.iter().enumerate() {
                    grads[row_base + i] += g * x;
                }
                grads[c * d + class] += g;
            }
        }
        if let Err(e) = adamw_step(&mut params, &grads, &mut state, lr, &cfg.adamw) {
            return Ok(aborted_trace(utt, head, rows, reference, e.to_string()));
        }
        working.unflatten_into(&params);
    }

    let last = rows.last().expect("at least the snapshot row");
    Ok(AdaptationTrace {
        id: utt.id.clone(),
        final_text: last.decoded_text.clone(),
        final_wer: last.wer_vs_ref,
        final_ppl: Some(last.ppl),
        reference,
        aborted: None,
        final_head: Some(working),
        steps: rows,
    })
}

/// Abort outcome: the head reverts to the pre-episode snapshot and the
/// finals report the unadapted (step 0) state.
fn aborted_trace(
    utt: &Utterance,
    base_head: &AdaptableHead,
    rows: Vec<StepRecord>,
    reference: Option<String>,
    diagnostic: String,
) -> AdaptationTrace {
    let first = rows.first();
    AdaptationTrace {
        id: utt.id.clone(),
        final_text: first.map(|r| r.decoded_text.clone()).unwrap_or_default(),
        final_wer: first.and_then(|r| r.wer_vs_ref),
        final_ppl: first.map(|r| r.ppl),
        reference,
        aborted: Some(diagnostic),
        final_head: Some(base_head.clone()),
        steps: rows,
    }
}

/// Adapts every utterance independently from the same base head. Results
/// follow manifest order. Per-utterance seeds derive from the config seed
/// and the utterance id, so parallel and serial runs are bit-identical.
pub fn adapt_manifest(
    head: &AdaptableHead,
    manifest: &DatasetManifest,
    cfg: &AdaptConfig,
    lm_for_ppl: &NGramLM,
) -> Result<Vec<AdaptationTrace>> {
    let threads = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1);
    adapt_manifest_with_threads(head, manifest, cfg, lm_for_ppl, threads)
}

/// `adapt_manifest` with an explicit worker count (1 = serial).
pub fn adapt_manifest_with_threads(
    head: &AdaptableHead,
    manifest: &DatasetManifest,
    cfg: &AdaptConfig,
    lm_for_ppl: &NGramLM,
    threads: usize,
) -> Result<Vec<AdaptationTrace>> {
    let corrector = build_method_corrector(cfg, &head.vocab)?;
    adapt_manifest_with_corrector(head, manifest, cfg, lm_for_ppl, &corrector, threads)
}

/// Batch driver with an externally constructed corrector shared across
/// episodes (and its cache across threads).
pub fn adapt_manifest_with_corrector(
    head: &AdaptableHead,
    manifest: &DatasetManifest,
    cfg: &AdaptConfig,
    lm_for_ppl: &NGramLM,
    corrector: &Corrector,
    threads: usize,
) -> Result<Vec<AdaptationTrace>> {
    cfg.validate()?;
    let threads = threads.max(1).min(manifest.len().max(1));
    let mut slots: Vec<Option<AdaptationTrace>> = Vec::new();
    slots.resize_with(manifest.len(), || None);

    let run_one = |utt: &Utterance| -> AdaptationTrace {
        let mut episode_cfg = cfg.clone();
        episode_cfg.seed = derive_seed(cfg.seed, &utt.id);
        match adapt_utterance_with(head, utt, &episode_cfg, lm_for_ppl, corrector) {
            Ok(trace) => trace,
            // configuration-level failures become aborted traces so the
            // rest of the run proceeds
            Err(e) => AdaptationTrace {
                id: utt.id.clone(),
                steps: Vec::new(),
                final_text: String::new(),
                final_wer: None,
                final_ppl: None,
                reference: utt.reference.as_ref().map(|r| r.as_str().to_string()),
                aborted: Some(e.to_string()),
                final_head: None,
            },
        }
    };

    if threads <= 1 {
        for (slot, utt) in slots.iter_mut().zip(&manifest.utterances) {
            *slot = Some(run_one(utt));
        }
    } else {
        std::thread::scope(|scope| {
            let chunk = manifest.len().div_ceil(threads);
            for (slot_chunk, utt_chunk) in slots
                .chunks_mut(chunk)
                .zip(manifest.utterances.chunks(chunk))
            {
                scope.spawn(move || {
                    for (slot, utt) in slot_chunk.iter_mut().zip(utt_chunk) {
                        *slot = Some(run_one(utt));
                    }
                });
            }
        });
    }

    Ok(slots.into_iter().map(|s| s.expect("slot filled")).collect())
}

/// Serializes traces as JSON Lines, one utterance per line.
pub fn write_traces<W: std::io::Write>(traces: &[AdaptationTrace], mut writer: W) -> Result<()> {
    for trace in traces {
        serde_json::to_writer(&mut writer, trace)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads a JSON Lines trace file.
pub fn read_traces<R: std::io::Read>(reader: R) -> Result<Vec<AdaptationTrace>> {
    use std::io::BufRead;
    let mut traces = Vec::new();
    for line in std::io::BufReader::new(reader).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        traces.push(serde_json::from_str(&line)?);
    }
    Ok(traces)
}
