//! Language-informed test-time adaptation for CTC sequence recognizers.
//!
//! The crate covers the full desk-scale pipeline: synthetic benchmark
//! generation with controlled domain shifts, exact CTC machinery, n-gram
//! language modeling, LM-fused beam decoding, entropy-based adaptation
//! objectives with external-corrector feedback, per-utterance adaptation
//! episodes, and WER/perplexity evaluation.

pub mod adapt;
pub mod corpus;
pub mod corrector;
pub mod ctc;
pub mod data;
pub mod decoder;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod gradcheck;
pub mod head;
pub mod ngram;
pub mod objectives;
pub mod text;
pub mod util;
pub mod vocab;

pub use adapt::{adapt_manifest, adapt_utterance, AdaptConfig, AdaptationTrace, Method};
pub use corrector::{build_prompt, CorrectionOutcome, Corrector, CorrectorSpec};
pub use ctc::{
    brute_force_ctc, collapse, ctc_forward_backward, greedy_decode, CtcResult, LogitMatrix,
    Transcription,
};
pub use data::{
    apply_shift, filter_by_gt_ppl, fit_source_head, gen_benchmark, DatasetManifest, GenParams,
    ShiftConfig, ShiftKind, Utterance,
};
pub use decoder::{beam_search, decode_exhaustive, DecodeConfig, DecodeMode, Hypothesis};
pub use error::{Error, Result};
pub use eval::{build_report, cer, ppl_curve, wer, MetricReport};
pub use head::AdaptableHead;
pub use ngram::NGramLM;
pub use objectives::{
    adaptive_lambda, composite_loss, renyi_entropy_loss, shannon_entropy_loss, CompositeLoss,
    TtaLossConfig, TtaLossKind,
};
pub use vocab::{Vocab, BLANK};
