//! The bundled sentence corpus and its fixed three-way split.

/// Raw bundled corpus, one lowercase sentence per line.
pub const BUNDLED: &str = include_str!("../assets/corpus.txt");

/// Disjoint corpus partitions. `lm` trains the fusion language model,
/// `head` trains the source head and the held-out perplexity scorer,
/// `benchmark` provides the evaluation utterances.
#[derive(Debug, Clone)]
pub struct CorpusPartitions<'a> {
    pub lm: Vec<&'a str>,
    pub head: Vec<&'a str>,
    pub benchmark: Vec<&'a str>,
}

/// Sentences of the bundled corpus.
pub fn bundled_sentences() -> Vec<&'static str> {
    BUNDLED
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .collect()
}

/// Splits sentences round-robin by index: of every 13 consecutive lines,
/// 5 go to `lm`, 3 to `head`, 5 to `benchmark`. The interleaving keeps the
/// three partitions stylistically comparable.
pub fn partition<'a>(sentences: &[&'a str]) -> CorpusPartitions<'a> {
    let mut parts = CorpusPartitions {
        lm: Vec::new(),
        head: Vec::new(),
        benchmark: Vec::new(),
    };
    for (i, &s) in sentences.iter().enumerate() {
        match i % 13 {
            0..=4 => parts.lm.push(s),
            5..=7 => parts.head.push(s),
            _ => parts.benchmark.push(s),
        }
    }
    parts
}
