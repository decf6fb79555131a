//! Synthetic benchmark data: utterance containers, manifest files,
//! deterministic generation, controlled domain shifts, source-head fitting,
//! and the ground-truth perplexity filter.

mod gen;
mod head_fit;
mod shift;

pub use gen::{
    gen_benchmark, prototype, read_alignments, write_alignments, GenParams, GeneratedDataset,
};
pub use head_fit::fit_source_head;
pub use shift::{apply_shift, confusable_partner};

use std::io::{BufRead, BufReader, Read, Write};

use serde::{Deserialize, Serialize};

use crate::ctc::Transcription;
use crate::error::{Error, Result};
use crate::ngram::NGramLM;
use crate::vocab::Vocab;

/// One utterance: an id, an L x D feature matrix, and an optional reference.
#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub id: String,
    pub frames: Vec<Vec<f64>>,
    pub reference: Option<Transcription>,
}

impl Utterance {
    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.frames.first().map(|f| f.len()).unwrap_or(0)
    }

    /// Mean squared feature value over all entries.
    pub fn power(&self) -> f64 {
        let total: f64 = self.frames.iter().flatten().map(|x| x * x).sum();
        let n = (self.frame_count() * self.feature_dim()) as f64;
        total / n
    }

    fn validate(&self) -> Result<()> {
        if self.frames.is_empty() {
            return Err(Error::format(
                "utterance",
                format!("{:?} has no frames", self.id),
            ));
        }
        let d = self.feature_dim();
        if d == 0 {
            return Err(Error::format(
                "utterance",
                format!("{:?} has zero-dimensional frames", self.id),
            ));
        }
        for (t, frame) in self.frames.iter().enumerate() {
            if frame.len() != d {
                return Err(Error::format(
                    "utterance",
                    format!("{:?} frame {t} has dimension {} != {d}", self.id, frame.len()),
                ));
            }
            if frame.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite(format!("utterance {:?} frame {t}", self.id)));
            }
        }
        Ok(())
    }
}

/// The supported synthetic domain shifts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ShiftKind {
    /// Gaussian feature noise scaled so the realized feature-space SNR is
    /// exactly `snr_db`.
    AdditiveNoise { snr_db: f64 },
    /// Every feature multiplied by `scale`.
    ChannelScale { scale: f64 },
    /// Frames near a confusable character's prototype move `drift_fraction`
    /// of the way toward the partner prototype.
    ConfusionDrift { drift_fraction: f64 },
}

/// A shift plus the seed that makes it reproducible.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShiftConfig {
    #[serde(flatten)]
    pub kind: ShiftKind,
    pub seed: u64,
}

impl ShiftConfig {
    pub fn validate(&self) -> Result<()> {
        match self.kind {
            ShiftKind::AdditiveNoise { snr_db } => {
                if snr_db.is_nan() {
                    return Err(Error::InvalidArgument("snr_db must not be NaN".into()));
                }
            }
            ShiftKind::ChannelScale { scale } => {
                if !scale.is_finite() {
                    return Err(Error::InvalidArgument("scale must be finite".into()));
                }
            }
            ShiftKind::ConfusionDrift { drift_fraction } => {
                if !(0.0..=1.0).contains(&drift_fraction) {
                    return Err(Error::InvalidArgument(
                        "drift_fraction must be in [0, 1]".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// A named collection of utterances, optionally tagged with the shift that
/// produced it. Utterance ids are unique.
#[derive(Debug, Clone)]
pub struct DatasetManifest {
    pub name: String,
    pub utterances: Vec<Utterance>,
    pub shift: Option<ShiftConfig>,
}

impl DatasetManifest {
    pub fn new(
        name: impl Into<String>,
        utterances: Vec<Utterance>,
        shift: Option<ShiftConfig>,
    ) -> Result<Self> {
        let manifest = DatasetManifest {
            name: name.into(),
            utterances,
            shift,
        };
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn len(&self) -> usize {
        self.utterances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.utterances.first().map(|u| u.feature_dim()).unwrap_or(0)
    }

    fn validate(&self) -> Result<()> {
        let mut seen = std::collections::BTreeSet::new();
        for utt in &self.utterances {
            utt.validate()?;
            if !seen.insert(utt.id.as_str()) {
                return Err(Error::format(
                    "manifest",
                    format!("duplicate utterance id {:?}", utt.id),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct ManifestRecord {
    id: String,
    frames: Vec<Vec<f64>>,
    #[serde(rename = "ref")]
    reference: Option<String>,
}

/// Writes a manifest as JSON Lines: `{"id", "frames", "ref"}` per utterance.
pub fn write_manifest<W: Write>(manifest: &DatasetManifest, mut writer: W) -> Result<()> {
    for utt in &manifest.utterances {
        let record = ManifestRecord {
            id: utt.id.clone(),
            frames: utt.frames.clone(),
            reference: utt.reference.as_ref().map(|r| r.as_str().to_string()),
        };
        serde_json::to_writer(&mut writer, &record)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads a JSON Lines manifest. References are validated against `vocab`.
pub fn read_manifest<R: Read>(
    name: impl Into<String>,
    reader: R,
    vocab: &Vocab,
) -> Result<DatasetManifest> {
    let mut utterances = Vec::new();
    for (lineno, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: ManifestRecord = serde_json::from_str(&line).map_err(|e| {
            Error::format("manifest", format!("line {}: {e}", lineno + 1))
        })?;
        let reference = match record.reference {
            Some(text) => Some(Transcription::new(text, vocab)?),
            None => None,
        };
        utterances.push(Utterance {
            id: record.id,
            frames: record.frames,
            reference,
        });
    }
    DatasetManifest::new(name, utterances, None)
}

/// Keeps exactly the utterances whose reference perplexity under `lm` is
/// strictly below `threshold`. Order is preserved.
pub fn filter_by_gt_ppl(
    manifest: &DatasetManifest,
    lm: &NGramLM,
    threshold: f64,
) -> Result<DatasetManifest> {
    let mut kept = Vec::new();
    for utt in &manifest.utterances {
        let reference = utt.reference.as_ref().ok_or_else(|| Error::MissingReference {
            id: utt.id.clone(),
        })?;
        if lm.perplexity(reference.as_str())? < threshold {
            kept.push(utt.clone());
        }
    }
    DatasetManifest::new(manifest.name.clone(), kept, manifest.shift)
}
