//! Deterministic synthetic utterance generation: each character of a
//! sentence becomes a run of frames around a fixed per-character prototype
//! embedding, plus Gaussian emission noise.

use serde::{Deserialize, Serialize};

use crate::ctc::Transcription;
use crate::error::{Error, Result};
use crate::util::{derive_seed, rng_from_seed, stable_hash, uniform_usize, GaussianSource};
use crate::vocab::{Vocab, BLANK};

use super::{DatasetManifest, Utterance};

/// Generator parameters. `emission_sigma = 0` yields exact prototypes.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct GenParams {
    /// Feature dimension D.
    pub embed_dim: usize,
    /// Inclusive per-character duration bounds, in frames.
    pub min_duration: usize,
    pub max_duration: usize,
    /// Standard deviation of the per-entry emission noise.
    pub emission_sigma: f64,
    pub seed: u64,
}

impl Default for GenParams {
    fn default() -> Self {
        GenParams {
            embed_dim: 16,
            min_duration: 2,
            max_duration: 5,
            emission_sigma: 0.1,
            seed: 0,
        }
    }
}

impl GenParams {
    pub fn validate(&self) -> Result<()> {
        if self.embed_dim < 2 {
            return Err(Error::InvalidArgument("embed_dim must be >= 2".into()));
        }
        if self.min_duration < 1 || self.min_duration > self.max_duration {
            return Err(Error::InvalidArgument(
                "need 1 <= min_duration <= max_duration".into(),
            ));
        }
        if self.emission_sigma.is_nan() || self.emission_sigma < 0.0 {
            return Err(Error::InvalidArgument("emission_sigma must be >= 0".into()));
        }
        Ok(())
    }
}

/// A generated manifest together with its forced per-frame class labels.
#[derive(Debug, Clone)]
pub struct GeneratedDataset {
    pub manifest: DatasetManifest,
    /// One label sequence per utterance, aligned with `manifest.utterances`.
    pub alignments: Vec<Vec<usize>>,
}

/// The fixed unit-norm prototype embedding of a class. Prototypes depend
/// only on (symbol, dimension), never on the generation seed, so heads
/// fitted on one manifest transfer to any other with the same vocabulary.
pub fn prototype(vocab: &Vocab, class: usize, dim: usize) -> Vec<f64> {
    let symbol = match vocab.char_of(class) {
        Some(c) => c as u32,
        None => 0,
    };
    let seed = stable_hash(&[
        b"litta.prototype.v1",
        &symbol.to_le_bytes(),
        &(dim as u64).to_le_bytes(),
    ]);
    let mut gauss = GaussianSource::from_seed(seed);
    let mut v: Vec<f64> = (0..dim).map(|_| gauss.sample()).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    for x in v.iter_mut() {
        *x /= norm;
    }
    v
}

/// Expands a sentence into per-frame class labels. A blank segment is
/// inserted between adjacent repeated characters so that CTC collapse of
/// the alignment recovers the sentence exactly.
fn label_plan(sentence: &str, vocab: &Vocab, id: &str) -> Result<Vec<usize>> {
    let mut classes = Vec::new();
    let mut prev: Option<char> = None;
    for ch in sentence.chars() {
        let class = vocab.class_of(ch).ok_or_else(|| Error::OutOfVocab {
            ch,
            context: format!("sentence {id:?}"),
        })?;
        if prev == Some(ch) {
            classes.push(BLANK);
        }
        classes.push(class);
        prev = Some(ch);
    }
    Ok(classes)
}

/// Generates one utterance per corpus sentence. Deterministic given the
/// seed: every utterance draws from its own stream keyed by (seed, id).
pub fn gen_benchmark(
    corpus: &[impl AsRef<str>],
    vocab: &Vocab,
    params: &GenParams,
) -> Result<GeneratedDataset> {
    params.validate()?;
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let protos: Vec<Vec<f64>> = (0..vocab.size())
        .map(|class| prototype(vocab, class, params.embed_dim))
        .collect();

    let mut utterances = Vec::with_capacity(corpus.len());
    let mut alignments = Vec::with_capacity(corpus.len());
    for (i, sentence) in corpus.iter().enumerate() {
        let id = format!("u{i:04}");
        let sentence = sentence.as_ref().to_lowercase();
        let segments = label_plan(&sentence, vocab, &id)?;

        let mut rng = rng_from_seed(derive_seed(params.seed, &id));
        let mut labels = Vec::new();
        for &class in &segments {
            let duration = uniform_usize(&mut rng, params.min_duration, params.max_duration);
            labels.extend(std::iter::repeat_n(class, duration));
        }
        let mut gauss = GaussianSource::from_rng(rng);
        let frames: Vec<Vec<f64>> = labels
            .iter()
            .map(|&class| {
                protos[class]
                    .iter()
                    .map(|&p| p + params.emission_sigma * gauss.sample())
                    .collect()
            })
            .collect();

        utterances.push(Utterance {
            id,
            frames,
            reference: Some(Transcription::new(sentence, vocab)?),
        });
        alignments.push(labels);
    }

    Ok(GeneratedDataset {
        manifest: DatasetManifest::new("generated", utterances, None)?,
        alignments,
    })
}

#[derive(Serialize, Deserialize)]
struct AlignmentRecord {
    id: String,
    labels: Vec<usize>,
}

/// Writes alignments as JSON Lines: `{"id", "labels"}` per utterance.
pub fn write_alignments<W: std::io::Write>(
    dataset: &GeneratedDataset,
    mut writer: W,
) -> Result<()> {
    for (utt, labels) in dataset.manifest.utterances.iter().zip(&dataset.alignments) {
        let record = AlignmentRecord {
            id: utt.id.clone(),
            labels: labels.clone(),
        };
        serde_json::to_writer(&mut writer, &record)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads alignments back in manifest order.
pub fn read_alignments<R: std::io::Read>(
    reader: R,
    manifest: &DatasetManifest,
) -> Result<Vec<Vec<usize>>> {
    use std::collections::BTreeMap;
    use std::io::BufRead;
    let mut by_id: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for line in std::io::BufReader::new(reader).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: AlignmentRecord = serde_json::from_str(&line)?;
        by_id.insert(record.id, record.labels);
    }
    manifest
        .utterances
        .iter()
        .map(|utt| {
            by_id.remove(&utt.id).ok_or_else(|| {
                Error::format("alignment", format!("no labels for utterance {:?}", utt.id))
            })
        })
        .collect()
}
