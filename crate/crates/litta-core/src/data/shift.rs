//! Synthetic domain shifts applied to generated manifests. All shifts
//! preserve shapes, ids, and references, and are pure given the seed.

use crate::error::Result;
use crate::util::{derive_seed, GaussianSource};
use crate::vocab::Vocab;

use super::gen::prototype;
use super::{DatasetManifest, ShiftConfig, ShiftKind, Utterance};

/// Fixed list of phonetically confusable letter pairs (both directions).
const CONFUSABLE_PAIRS: [(char, char); 10] = [
    ('m', 'n'),
    ('b', 'p'),
    ('d', 't'),
    ('g', 'k'),
    ('v', 'f'),
    ('s', 'z'),
    ('a', 'e'),
    ('o', 'u'),
    ('l', 'r'),
    ('i', 'y'),
];

/// The confusable partner of a letter, if it has one.
pub fn confusable_partner(c: char) -> Option<char> {
    for &(a, b) in &CONFUSABLE_PAIRS {
        if c == a {
            return Some(b);
        }
        if c == b {
            return Some(a);
        }
    }
    None
}

/// Applies a shift to every utterance. Deterministic given `shift.seed`;
/// per-utterance randomness is keyed by (seed, id) so the outcome does not
/// depend on manifest order.
pub fn apply_shift(manifest: &DatasetManifest, shift: &ShiftConfig) -> Result<DatasetManifest> {
    shift.validate()?;
    let utterances = manifest
        .utterances
        .iter()
        .map(|utt| shift_utterance(utt, shift))
        .collect::<Result<Vec<_>>>()?;
    let name = format!("{}+{}", manifest.name, shift_label(&shift.kind));
    DatasetManifest::new(name, utterances, Some(*shift))
}

fn shift_label(kind: &ShiftKind) -> String {
    match kind {
        ShiftKind::AdditiveNoise { snr_db } => format!("noise{snr_db}db"),
        ShiftKind::ChannelScale { scale } => format!("scale{scale}"),
        ShiftKind::ConfusionDrift { drift_fraction } => format!("drift{drift_fraction}"),
    }
}

fn shift_utterance(utt: &Utterance, shift: &ShiftConfig) -> Result<Utterance> {
    let frames = match shift.kind {
        ShiftKind::AdditiveNoise { snr_db } => add_noise_at_snr(utt, snr_db, shift.seed),
        ShiftKind::ChannelScale { scale } => utt
            .frames
            .iter()
            .map(|f| f.iter().map(|x| x * scale).collect())
            .collect(),
        ShiftKind::ConfusionDrift { drift_fraction } => drift_frames(utt, drift_fraction),
    };
    Ok(Utterance {
        id: utt.id.clone(),
        frames,
        reference: utt.reference.clone(),
    })
}

/// Adds Gaussian noise rescaled so the realized per-utterance SNR equals
/// `snr_db` exactly (up to float rounding). Infinite SNR or zero signal
/// power leaves the frames untouched.
fn add_noise_at_snr(utt: &Utterance, snr_db: f64, seed: u64) -> Vec<Vec<f64>> {
    let signal_power = utt.power();
    let target_noise_power = if snr_db == f64::INFINITY {
        0.0
    } else {
        signal_power * 10f64.powf(-snr_db / 10.0)
    };
    if target_noise_power <= 0.0 || signal_power <= 0.0 {
        return utt.frames.clone();
    }
    let mut gauss = GaussianSource::from_seed(derive_seed(seed, &utt.id));
    let noise: Vec<Vec<f64>> = utt
        .frames
        .iter()
        .map(|f| f.iter().map(|_| gauss.sample()).collect())
        .collect();
    let raw_power = {
        let total: f64 = noise.iter().flatten().map(|x| x * x).sum();
        total / (utt.frame_count() * utt.feature_dim()) as f64
    };
    if raw_power == 0.0 {
        return utt.frames.clone();
    }
    let scale = (target_noise_power / raw_power).sqrt();
    utt.frames
        .iter()
        .zip(&noise)
        .map(|(frame, nrow)| {
            frame
                .iter()
                .zip(nrow)
                .map(|(&x, &n)| x + scale * n)
                .collect()
        })
        .collect()
}

/// Moves each frame toward the prototype of its nearest class's confusable
/// partner. Frames whose nearest class has no partner are unchanged.
fn drift_frames(utt: &Utterance, fraction: f64) -> Vec<Vec<f64>> {
    let vocab = Vocab::default_char_vocab();
    let dim = utt.feature_dim();
    let protos: Vec<Vec<f64>> = (0..vocab.size())
        .map(|class| prototype(&vocab, class, dim))
        .collect();
    utt.frames
        .iter()
        .map(|frame| {
            let nearest = nearest_class(frame, &protos);
            let partner = vocab
                .char_of(nearest)
                .and_then(confusable_partner)
                .and_then(|p| vocab.class_of(p));
            match partner {
                Some(partner_class) => frame
                    .iter()
                    .zip(&protos[nearest])
                    .zip(&protos[partner_class])
                    .map(|((&x, &own), &other)| x + fraction * (other - own))
                    .collect(),
                None => frame.clone(),
            }
        })
        .collect()
}

fn nearest_class(frame: &[f64], protos: &[Vec<f64>]) -> usize {
    let mut best = 0usize;
    let mut best_d = f64::INFINITY;
    for (class, proto) in protos.iter().enumerate() {
        let d: f64 = frame
            .iter()
            .zip(proto)
            .map(|(&x, &p)| (x - p) * (x - p))
            .sum();
        if d < best_d {
            best_d = d;
            best = class;
        }
    }
    best
}
