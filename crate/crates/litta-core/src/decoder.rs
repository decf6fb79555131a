//! CTC prefix beam search with shallow language-model fusion, and an
//! exhaustive-enumeration oracle for small instances.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::ctc::{collapse, LogitMatrix, Transcription};
use crate::error::{Error, Result};
use crate::ngram::NGramLM;
use crate::util::log_sum_exp2;
use crate::vocab::BLANK;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecodeMode {
    Greedy,
    Beam,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecodeConfig {
    pub beam_width: usize,
    /// Shallow-fusion weight on the language-model log probability.
    pub lambda: f64,
    pub mode: DecodeMode,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        DecodeConfig {
            beam_width: 8,
            lambda: 0.3,
            mode: DecodeMode::Beam,
        }
    }
}

impl DecodeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.beam_width < 1 {
            return Err(Error::InvalidArgument("beam_width must be >= 1".into()));
        }
        if self.lambda.is_nan() || self.lambda < 0.0 {
            return Err(Error::InvalidArgument("lambda must be >= 0".into()));
        }
        Ok(())
    }
}

/// A ranked decode candidate. `fused_score = am_logprob + lambda * lm_logprob`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Hypothesis {
    pub text: Transcription,
    pub am_logprob: f64,
    pub lm_logprob: f64,
    pub fused_score: f64,
}

/// Per-prefix state: probability mass ending in blank / non-blank, plus the
/// accumulated per-character LM score of the prefix itself.
#[derive(Debug, Clone, Copy)]
struct PrefixMass {
    blank: f64,
    non_blank: f64,
    lm: f64,
}

impl PrefixMass {
    fn total(&self) -> f64 {
        log_sum_exp2(self.blank, self.non_blank)
    }

    fn interior_score(&self, lambda: f64) -> f64 {
        self.total() + lambda * self.lm
    }
}

fn add_blank(entry: &mut PrefixMass, lp: f64) {
    entry.blank = log_sum_exp2(entry.blank, lp);
}

fn add_non_blank(entry: &mut PrefixMass, lp: f64) {
    entry.non_blank = log_sum_exp2(entry.non_blank, lp);
}

/// Character-synchronous prefix beam search. The LM contribution for each
/// emitted character is added when the prefix is extended, so a finished
/// hypothesis carries exactly `lm.emission_log_prob(text)` as its LM
/// component. No end-of-sentence term enters the fused score: fusion sums
/// per-emission LM terms only, which keeps an all-blank instance decoding
/// to the empty string at every fusion weight.
pub fn beam_search(
    logits: &LogitMatrix,
    lm: &NGramLM,
    cfg: &DecodeConfig,
) -> Result<Vec<Hypothesis>> {
    cfg.validate()?;
    if cfg.mode != DecodeMode::Beam {
        return Err(Error::InvalidArgument(
            "beam_search requires mode = beam".into(),
        ));
    }
    for &c in lm.vocab().symbols() {
        if logits.vocab().class_of(c).is_none() {
            return Err(Error::OutOfVocab {
                ch: c,
                context: "lm vocabulary not covered by acoustic vocabulary".into(),
            });
        }
    }

    let ninf = f64::NEG_INFINITY;
    let lp = logits.frame_log_probs();
    let vocab = logits.vocab();

    let mut beam: BTreeMap<String, PrefixMass> = BTreeMap::new();
    beam.insert(
        String::new(),
        PrefixMass {
            blank: 0.0,
            non_blank: ninf,
            lm: 0.0,
        },
    );

    for row in &lp {
        let mut next: BTreeMap<String, PrefixMass> = BTreeMap::new();
        for (prefix, mass) in &beam {
            let total = mass.total();
            let last_char = prefix.chars().last();

            // stay on the same prefix via a blank frame
            {
                let entry = next.entry(prefix.clone()).or_insert(PrefixMass {
                    blank: ninf,
                    non_blank: ninf,
                    lm: mass.lm,
                });
                add_blank(entry, row[BLANK] + total);
            }

            for class in 1..vocab.size() {
                let ch = vocab.char_of(class).expect("non-blank class");
                let emit_lp = row[class];
                if last_char == Some(ch) {
                    // repeat frame extends the same emission
                    let entry = next.entry(prefix.clone()).or_insert(PrefixMass {
                        blank: ninf,
                        non_blank: ninf,
                        lm: mass.lm,
                    });
                    add_non_blank(entry, emit_lp + mass.non_blank);
                    // a new emission of the same character needs a blank gap
                    if mass.blank != ninf {
                        let mut extended = prefix.clone();
                        extended.push(ch);
                        let lm_step = char_lm_score(lm, prefix, ch)?;
                        let entry = next.entry(extended).or_insert(PrefixMass {
                            blank: ninf,
                            non_blank: ninf,
                            lm: mass.lm + lm_step,
                        });
                        add_non_blank(entry, emit_lp + mass.blank);
                    }
                } else {
                    let mut extended = prefix.clone();
                    extended.push(ch);
                    let lm_step = char_lm_score(lm, prefix, ch)?;
                    let entry = next.entry(extended).or_insert(PrefixMass {
                        blank: ninf,
                        non_blank: ninf,
                        lm: mass.lm + lm_step,
                    });
                    add_non_blank(entry, emit_lp + total);
                }
            }
        }

        // prune to the beam width by interior fused score, ties lexicographic
        if next.len() > cfg.beam_width {
            let mut scored: Vec<(String, PrefixMass)> = next.into_iter().collect();
            scored.sort_by(|(ta, ma), (tb, mb)| {
                mb.interior_score(cfg.lambda)
                    .partial_cmp(&ma.interior_score(cfg.lambda))
                    .unwrap()
                    .then_with(|| ta.cmp(tb))
            });
            scored.truncate(cfg.beam_width);
            next = scored.into_iter().collect();
        }
        beam = next;
    }

    let mut hyps: Vec<Hypothesis> = beam
        .into_iter()
        .filter(|(_, mass)| mass.total() != ninf)
        .map(|(text, mass)| {
            let am_logprob = mass.total();
            Hypothesis {
                text: Transcription::new(text, logits.vocab()).expect("beam text is vocab-closed"),
                am_logprob,
                lm_logprob: mass.lm,
                fused_score: am_logprob + cfg.lambda * mass.lm,
            }
        })
        .collect();
    sort_hypotheses(&mut hyps);
    hyps.truncate(cfg.beam_width);
    Ok(hyps)
}

fn char_lm_score(lm: &NGramLM, prefix: &str, ch: char) -> Result<f64> {
    let chars: Vec<char> = prefix.chars().collect();
    lm.next_char_log_prob(&chars, ch)
}

fn sort_hypotheses(hyps: &mut [Hypothesis]) {
    hyps.sort_by(|a, b| {
        b.fused_score
            .partial_cmp(&a.fused_score)
            .unwrap()
            .then_with(|| a.text.as_str().cmp(b.text.as_str()))
    });
}

/// Scores every reachable collapsed sequence by enumerating all paths, then
/// ranks by `log p_AM + lambda * log p_LM`. The oracle for `beam_search`.
pub fn decode_exhaustive(
    logits: &LogitMatrix,
    lm: &NGramLM,
    lambda: f64,
) -> Result<Vec<Hypothesis>> {
    let l = logits.len();
    let c = logits.class_count();
    let paths = (c as f64).powi(l as i32);
    if paths > 1e6 {
        return Err(Error::InstanceTooLarge { paths, limit: 1e6 });
    }
    let probs = logits.frame_probs();
    let mut by_text: BTreeMap<String, f64> = BTreeMap::new();
    let mut path = vec![0usize; l];
    'outer: loop {
        let text = collapse(&path, logits.vocab());
        let p: f64 = path.iter().zip(&probs).map(|(&k, row)| row[k]).product();
        *by_text.entry(text.as_str().to_string()).or_insert(0.0) += p;
        let mut i = 0;
        loop {
            if i == l {
                break 'outer;
            }
            path[i] += 1;
            if path[i] < c {
                break;
            }
            path[i] = 0;
            i += 1;
        }
    }

    let mut hyps = Vec::with_capacity(by_text.len());
    for (text, p) in by_text {
        if p <= 0.0 {
            continue;
        }
        let am_logprob = p.ln();
        let lm_logprob = lm.emission_log_prob(&text)?;
        hyps.push(Hypothesis {
            text: Transcription::new(text, logits.vocab())?,
            am_logprob,
            lm_logprob,
            fused_score: am_logprob + lambda * lm_logprob,
        });
    }
    sort_hypotheses(&mut hyps);
    Ok(hyps)
}
