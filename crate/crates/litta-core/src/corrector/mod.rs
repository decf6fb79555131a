//! The external correction channel: a uniform contract with identity,
//! lexicon-based, and HTTP chat-completion implementations. A corrector
//! never fails mid-episode; the worst case is returning the input.

mod http;

pub use http::HttpCorrector;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::ctc::Transcription;
use crate::error::{Error, Result};
use crate::eval::edit_distance;
use crate::vocab::Vocab;

/// Instruction template. The transcript is inserted between the `<< >>`
/// markers; every other byte is fixed.
const PROMPT_PREFIX: &str = "Please generate a correction of the <<";
const PROMPT_SUFFIX: &str = ">> considering the pronunciation and overall context";

/// Wraps a transcript in the correction instruction.
pub fn build_prompt(transcript: &str) -> String {
    format!("{PROMPT_PREFIX}{transcript}{PROMPT_SUFFIX}")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrectorKind {
    Identity,
    Lexicon,
    Http,
}

/// Declarative corrector configuration (the `[corrector]` config section).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorrectorSpec {
    pub kind: CorrectorKind,
    pub lexicon_path: Option<PathBuf>,
    pub max_edit_distance: usize,
    pub endpoint_url: Option<String>,
    pub model_name: Option<String>,
    pub api_key: Option<String>,
    pub timeout_ms: u64,
    pub max_retries: u32,
    pub cache_enabled: bool,
    /// Maximum concurrent HTTP requests.
    pub in_flight_cap: usize,
}

impl Default for CorrectorSpec {
    fn default() -> Self {
        CorrectorSpec {
            kind: CorrectorKind::Identity,
            lexicon_path: None,
            max_edit_distance: 2,
            endpoint_url: None,
            model_name: None,
            api_key: None,
            timeout_ms: 10_000,
            max_retries: 2,
            cache_enabled: true,
            in_flight_cap: 4,
        }
    }
}

impl CorrectorSpec {
    pub fn identity() -> Self {
        CorrectorSpec::default()
    }

    pub fn lexicon(path: impl Into<PathBuf>, max_edit_distance: usize) -> Self {
        CorrectorSpec {
            kind: CorrectorKind::Lexicon,
            lexicon_path: Some(path.into()),
            max_edit_distance,
            ..CorrectorSpec::default()
        }
    }

    /// HTTP corrector configured from `LITTA_LLM_ENDPOINT`,
    /// `LITTA_LLM_API_KEY`, and `LITTA_LLM_MODEL`.
    pub fn http_from_env() -> Result<Self> {
        let endpoint = std::env::var("LITTA_LLM_ENDPOINT").map_err(|_| {
            Error::InvalidArgument("LITTA_LLM_ENDPOINT is not set".into())
        })?;
        Ok(CorrectorSpec {
            kind: CorrectorKind::Http,
            endpoint_url: Some(endpoint),
            model_name: std::env::var("LITTA_LLM_MODEL").ok(),
            api_key: std::env::var("LITTA_LLM_API_KEY").ok(),
            ..CorrectorSpec::default()
        })
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            CorrectorKind::Http => {
                if self.endpoint_url.is_none() {
                    return Err(Error::InvalidArgument(
                        "http corrector needs endpoint_url".into(),
                    ));
                }
            }
            CorrectorKind::Lexicon => {
                if self.lexicon_path.is_none() {
                    return Err(Error::InvalidArgument(
                        "lexicon corrector needs lexicon_path".into(),
                    ));
                }
            }
            CorrectorKind::Identity => {}
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrectionSource {
    Identity,
    Lexicon,
    Http,
    FallbackIdentity,
}

/// The result of one correction call.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrectionOutcome {
    pub corrected: Transcription,
    pub changed: bool,
    pub source: CorrectionSource,
    pub latency_ms: u64,
}

impl CorrectionOutcome {
    fn new(input: &Transcription, corrected: Transcription, source: CorrectionSource, latency_ms: u64) -> Self {
        CorrectionOutcome {
            changed: corrected != *input,
            corrected,
            source,
            latency_ms,
        }
    }
}

/// A built corrector. Construction validates everything that can fail;
/// `correct` itself is infallible.
pub enum Corrector {
    Identity,
    Lexicon(LexiconCorrector),
    Http(HttpCorrector),
}

impl Corrector {
    pub fn build(spec: &CorrectorSpec, vocab: &Vocab) -> Result<Self> {
        spec.validate()?;
        match spec.kind {
            CorrectorKind::Identity => Ok(Corrector::Identity),
            CorrectorKind::Lexicon => {
                let path = spec.lexicon_path.as_ref().expect("validated");
                Ok(Corrector::Lexicon(LexiconCorrector::from_path(
                    path,
                    spec.max_edit_distance,
                    spec.cache_enabled,
                    vocab,
                )?))
            }
            CorrectorKind::Http => Ok(Corrector::Http(HttpCorrector::new(spec, vocab)?)),
        }
    }

    pub fn correct(&self, transcript: &Transcription) -> CorrectionOutcome {
        match self {
            Corrector::Identity => CorrectionOutcome::new(
                transcript,
                transcript.clone(),
                CorrectionSource::Identity,
                0,
            ),
            Corrector::Lexicon(lexicon) => lexicon.correct(transcript),
            Corrector::Http(http) => http.correct(transcript),
        }
    }
}

/// Replaces each whitespace-separated word with its nearest lexicon word
/// within the edit-distance budget. Ties prefer the higher corpus
/// frequency, then the lexicographically smaller word.
pub struct LexiconCorrector {
    /// (word, frequency), sorted by word for deterministic scans.
    entries: Vec<(String, u64)>,
    max_edit_distance: usize,
    cache_enabled: bool,
    cache: Mutex<BTreeMap<String, String>>,
    vocab: Vocab,
}

impl LexiconCorrector {
    pub fn from_path(
        path: &PathBuf,
        max_edit_distance: usize,
        cache_enabled: bool,
        vocab: &Vocab,
    ) -> Result<Self> {
        let raw = std::fs::read_to_string(path).map_err(|e| Error::Lexicon {
            path: path.clone(),
            detail: e.to_string(),
        })?;
        let mut words = Vec::new();
        for (lineno, line) in raw.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let mut parts = line.splitn(2, '\t');
            let word = parts.next().unwrap().trim().to_lowercase();
            let freq: u64 = match parts.next() {
                Some(f) => f.trim().parse().map_err(|_| Error::Lexicon {
                    path: path.clone(),
                    detail: format!("line {}: bad frequency {f:?}", lineno + 1),
                })?,
                None => 1,
            };
            words.push((word, freq));
        }
        Self::from_words(words, max_edit_distance, cache_enabled, vocab).map_err(|e| {
            match e {
                Error::Lexicon { detail, .. } => Error::Lexicon {
                    path: path.clone(),
                    detail,
                },
                other => other,
            }
        })
    }

    /// Builds directly from (word, frequency) pairs; duplicate words sum
    /// their frequencies.
    pub fn from_words(
        words: impl IntoIterator<Item = (String, u64)>,
        max_edit_distance: usize,
        cache_enabled: bool,
        vocab: &Vocab,
    ) -> Result<Self> {
        let mut merged: BTreeMap<String, u64> = BTreeMap::new();
        for (word, freq) in words {
            let word = word.to_lowercase();
            if word.is_empty() || word.contains(' ') {
                return Err(Error::Lexicon {
                    path: PathBuf::new(),
                    detail: format!("invalid lexicon word {word:?}"),
                });
            }
            vocab.validate_text(&word, "lexicon word")?;
            *merged.entry(word).or_insert(0) += freq;
        }
        Ok(LexiconCorrector {
            entries: merged.into_iter().collect(),
            max_edit_distance,
            cache_enabled,
            cache: Mutex::new(BTreeMap::new()),
            vocab: vocab.clone(),
        })
    }

    /// Word frequencies over whitespace-tokenized sentences.
    pub fn from_sentences<'a>(
        sentences: impl IntoIterator<Item = &'a str>,
        max_edit_distance: usize,
        vocab: &Vocab,
    ) -> Result<Self> {
        let mut freqs: BTreeMap<String, u64> = BTreeMap::new();
        for sentence in sentences {
            for word in sentence.split_whitespace() {
                *freqs.entry(word.to_lowercase()).or_insert(0) += 1;
            }
        }
        Self::from_words(freqs, max_edit_distance, true, vocab)
    }

    fn correct_word<'a>(&'a self, word: &'a str) -> &'a str {
        let chars: Vec<char> = word.chars().collect();
        let mut best: Option<(usize, u64, &str)> = None;
        for (candidate, freq) in &self.entries {
            // cheap lower bound: length difference
            let cand_len = candidate.chars().count();
            let lower = cand_len.abs_diff(chars.len());
            if lower > self.max_edit_distance {
                continue;
            }
            let cand_chars: Vec<char> = candidate.chars().collect();
            let d = edit_distance(&chars, &cand_chars);
            if d > self.max_edit_distance {
                continue;
            }
            let better = match &best {
                None => true,
                Some((bd, bf, bw)) => {
                    d < *bd || (d == *bd && (freq > bf || (freq == bf && candidate.as_str() < *bw)))
                }
            };
            if better {
                best = Some((d, *freq, candidate));
            }
        }
        best.map(|(_, _, w)| w).unwrap_or(word)
    }

    pub fn correct(&self, transcript: &Transcription) -> CorrectionOutcome {
        let input = transcript.as_str();
        if self.cache_enabled {
            if let Some(hit) = self.cache.lock().unwrap().get(input) {
                let corrected = Transcription::new(hit.clone(), &self.vocab)
                    .unwrap_or_else(|_| transcript.clone());
                return CorrectionOutcome::new(transcript, corrected, CorrectionSource::Lexicon, 0);
            }
        }
        let corrected_text: String = input
            .split_whitespace()
            .map(|w| self.correct_word(w))
            .collect::<Vec<_>>()
            .join(" ");
        if self.cache_enabled {
            self.cache
                .lock()
                .unwrap()
                .insert(input.to_string(), corrected_text.clone());
        }
        let corrected = Transcription::new(corrected_text, &self.vocab)
            .unwrap_or_else(|_| transcript.clone());
        CorrectionOutcome::new(transcript, corrected, CorrectionSource::Lexicon, 0)
    }
}
