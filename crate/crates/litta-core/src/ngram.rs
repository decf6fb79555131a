//! Character-level n-gram language model with add-k smoothing. Serves both
//! as the fusion model for beam decoding and as the perplexity scorer.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util::uniform_f64;
use crate::vocab::Vocab;
use rand_chacha::ChaCha8Rng;

/// Reserved sentence-boundary markers. Both are outside every vocabulary,
/// so they can never collide with text symbols.
pub const BOS: char = '^';
pub const EOS: char = '$';

#[derive(Debug, Serialize, Deserialize)]
struct ModelFile {
    n: usize,
    add_k: f64,
    counts: BTreeMap<String, BTreeMap<String, u64>>,
}

/// An order-n model over the text vocabulary plus the end-of-sentence mark.
#[derive(Debug, Clone)]
pub struct NGramLM {
    n: usize,
    add_k: f64,
    counts: BTreeMap<String, BTreeMap<String, u64>>,
    totals: BTreeMap<String, u64>,
    vocab: Vocab,
}

impl NGramLM {
    /// Counts n-grams over lowercased sentences padded with n-1 `BOS`
    /// markers and one `EOS`.
    pub fn train<S: AsRef<str>>(corpus: &[S], n: usize, add_k: f64, vocab: &Vocab) -> Result<Self> {
        if corpus.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        if n < 1 {
            return Err(Error::InvalidArgument("n-gram order must be >= 1".into()));
        }
        if add_k.is_nan() || add_k <= 0.0 {
            return Err(Error::InvalidArgument("add_k must be > 0".into()));
        }
        let mut counts: BTreeMap<String, BTreeMap<String, u64>> = BTreeMap::new();
        for sentence in corpus {
            let lowered = sentence.as_ref().to_lowercase();
            vocab.validate_text(&lowered, "lm training corpus")?;
            let mut seq: Vec<char> = std::iter::repeat_n(BOS, n - 1).collect();
            seq.extend(lowered.chars());
            seq.push(EOS);
            for i in (n - 1)..seq.len() {
                let ctx: String = seq[i + 1 - n..i].iter().collect();
                let sym = seq[i].to_string();
                *counts.entry(ctx).or_default().entry(sym).or_insert(0) += 1;
            }
        }
        Ok(Self::from_counts(n, add_k, counts, vocab.clone()))
    }

    fn from_counts(
        n: usize,
        add_k: f64,
        counts: BTreeMap<String, BTreeMap<String, u64>>,
        vocab: Vocab,
    ) -> Self {
        let totals = counts
            .iter()
            .map(|(ctx, syms)| (ctx.clone(), syms.values().sum()))
            .collect();
        NGramLM {
            n,
            add_k,
            counts,
            totals,
            vocab,
        }
    }

    pub fn order(&self) -> usize {
        self.n
    }

    pub fn add_k(&self) -> f64 {
        self.add_k
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    /// Outcome count: every text symbol plus `EOS`.
    pub fn outcome_count(&self) -> usize {
        self.vocab.text_size() + 1
    }

    fn cond_log_prob(&self, ctx: &str, sym: char) -> f64 {
        let v = self.outcome_count() as f64;
        let (count, total) = match self.counts.get(ctx) {
            Some(syms) => (
                syms.get(sym.to_string().as_str()).copied().unwrap_or(0),
                self.totals[ctx],
            ),
            None => (0, 0),
        };
        ((count as f64 + self.add_k) / (total as f64 + self.add_k * v)).ln()
    }

    /// The n-1 context characters preceding position `len(prefix)` of a
    /// BOS-padded sentence.
    fn context_of(&self, prefix: &[char]) -> String {
        let need = self.n - 1;
        let have = prefix.len().min(need);
        let mut ctx: String = std::iter::repeat_n(BOS, need - have).collect();
        ctx.extend(prefix[prefix.len() - have..].iter());
        ctx
    }

    /// log p(next_char | prefix); the per-emission fusion summand.
    pub fn next_char_log_prob(&self, prefix: &[char], next: char) -> Result<f64> {
        if !self.vocab.contains(next) {
            return Err(Error::OutOfVocab {
                ch: next,
                context: "lm scoring".into(),
            });
        }
        Ok(self.cond_log_prob(&self.context_of(prefix), next))
    }

    /// log p(EOS | prefix); closes a sequence score.
    pub fn eos_log_prob(&self, prefix: &[char]) -> f64 {
        self.cond_log_prob(&self.context_of(prefix), EOS)
    }

    /// Sequence log probability including the end-of-sentence event.
    pub fn log_prob(&self, text: &str) -> Result<f64> {
        let chars: Vec<char> = text.chars().collect();
        Ok(self.emission_log_prob(text)? + self.eos_log_prob(&chars))
    }

    /// Sum of per-character conditional log probabilities without the
    /// end-of-sentence event; the quantity shallow fusion accumulates.
    pub fn emission_log_prob(&self, text: &str) -> Result<f64> {
        self.vocab.validate_text(text, "lm scoring")?;
        let chars: Vec<char> = text.chars().collect();
        let mut lp = 0.0;
        for i in 0..chars.len() {
            lp += self.cond_log_prob(&self.context_of(&chars[..i]), chars[i]);
        }
        Ok(lp)
    }

    /// exp(-log_prob / N) with N = character count + 1 for the EOS event.
    pub fn perplexity(&self, text: &str) -> Result<f64> {
        let lp = self.log_prob(text)?;
        let n = text.chars().count() as f64 + 1.0;
        Ok((-lp / n).exp())
    }

    /// Draws a sentence from the smoothed model (used by diagnostics and
    /// the scorer's own sanity tests).
    pub fn sample(&self, rng: &mut ChaCha8Rng, max_len: usize) -> String {
        let mut chars: Vec<char> = Vec::new();
        while chars.len() < max_len {
            let ctx = self.context_of(&chars);
            let u = uniform_f64(rng);
            let v = self.outcome_count() as f64;
            let total = self.totals.get(&ctx).copied().unwrap_or(0) as f64;
            let denom = total + self.add_k * v;
            let empty = BTreeMap::new();
            let ctx_counts = self.counts.get(&ctx).unwrap_or(&empty);
            let mut acc = 0.0;
            let mut drawn: Option<char> = None;
            let mut outcomes: Vec<char> = self.vocab.symbols().to_vec();
            outcomes.push(EOS);
            for sym in outcomes {
                let count = ctx_counts
                    .get(sym.to_string().as_str())
                    .copied()
                    .unwrap_or(0) as f64;
                acc += (count + self.add_k) / denom;
                if u < acc {
                    drawn = Some(sym);
                    break;
                }
            }
            match drawn.unwrap_or(EOS) {
                c if c == EOS => break,
                c => chars.push(c),
            }
        }
        chars.into_iter().collect()
    }

    /// Writes the model as `{"n": .., "add_k": .., "counts": {ctx: {sym: count}}}`.
    pub fn save<W: Write>(&self, writer: W) -> Result<()> {
        let file = ModelFile {
            n: self.n,
            add_k: self.add_k,
            counts: self.counts.clone(),
        };
        serde_json::to_writer(writer, &file)?;
        Ok(())
    }

    /// Loads a model file; symbols are validated against `vocab` plus the
    /// boundary markers.
    pub fn load<R: Read>(reader: R, vocab: &Vocab) -> Result<Self> {
        let file: ModelFile = serde_json::from_reader(reader)?;
        if file.n < 1 {
            return Err(Error::format("lm model", "order must be >= 1"));
        }
        if file.add_k.is_nan() || file.add_k <= 0.0 {
            return Err(Error::format("lm model", "add_k must be > 0"));
        }
        for (ctx, syms) in &file.counts {
            if ctx.chars().count() != file.n - 1 {
                return Err(Error::format(
                    "lm model",
                    format!("context {ctx:?} has wrong length for order {}", file.n),
                ));
            }
            for ch in ctx.chars() {
                if ch != BOS && !vocab.contains(ch) {
                    return Err(Error::format("lm model", format!("unknown context char {ch:?}")));
                }
            }
            for sym in syms.keys() {
                let mut it = sym.chars();
                match (it.next(), it.next()) {
                    (Some(c), None) if c == EOS || vocab.contains(c) => {}
                    _ => {
                        return Err(Error::format(
                            "lm model",
                            format!("unknown symbol {sym:?}"),
                        ))
                    }
                }
            }
        }
        Ok(Self::from_counts(file.n, file.add_k, file.counts, vocab.clone()))
    }
}
