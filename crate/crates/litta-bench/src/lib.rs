//! Shared setup for the criterion benchmarks: a fitted head, a trained
//! scorer, and a shifted manifest at benchmark scale.

use litta_core::data::{apply_shift, fit_source_head, gen_benchmark, GenParams, ShiftConfig, ShiftKind};
use litta_core::head::AdaptableHead;
use litta_core::ngram::NGramLM;
use litta_core::vocab::Vocab;
use litta_core::{corpus, DatasetManifest};

pub struct BenchSetup {
    pub vocab: Vocab,
    pub head: AdaptableHead,
    pub lm: NGramLM,
    pub clean: DatasetManifest,
    pub noisy: DatasetManifest,
}

pub fn setup(utterances: usize) -> BenchSetup {
    let vocab = Vocab::default_char_vocab();
    let sentences = corpus::bundled_sentences();
    let parts = corpus::partition(&sentences);
    let params = GenParams {
        seed: 7,
        ..GenParams::default()
    };
    let head_data = gen_benchmark(&parts.head, &vocab, &params).unwrap();
    let head = fit_source_head(&head_data.manifest, &vocab, &head_data.alignments, 1e-3).unwrap();
    let lm = NGramLM::train(&parts.head, 4, 0.01, &vocab).unwrap();
    let bench: Vec<&str> = parts.benchmark.iter().copied().take(utterances).collect();
    let clean = gen_benchmark(&bench, &vocab, &params).unwrap().manifest;
    let noisy = apply_shift(
        &clean,
        &ShiftConfig {
            kind: ShiftKind::AdditiveNoise { snr_db: 5.0 },
            seed: 3,
        },
    )
    .unwrap();
    BenchSetup {
        vocab,
        head,
        lm,
        clean,
        noisy,
    }
}
