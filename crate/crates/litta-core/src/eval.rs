//! Metrics: word/character error rates via edit distance, per-step
//! perplexity curves, and table-shaped experiment reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::adapt::AdaptationTrace;
use crate::error::{Error, Result};
use crate::text::normalize_to_vocab;
use crate::vocab::Vocab;

/// Levenshtein distance with unit costs.
pub fn edit_distance<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut curr = vec![0usize; b.len() + 1];
    for (i, xa) in a.iter().enumerate() {
        curr[0] = i + 1;
        for (j, xb) in b.iter().enumerate() {
            let cost = usize::from(xa != xb);
            curr[j + 1] = (prev[j + 1] + 1).min(curr[j] + 1).min(prev[j] + cost);
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    prev[b.len()]
}

fn normalize(text: &str) -> String {
    normalize_to_vocab(text, &Vocab::default_char_vocab())
}

/// Word-level error rate: edit distance over reference word count. Texts
/// are normalized (lowercase, vocabulary-closed, squeezed) before scoring.
/// Can exceed 1 when the hypothesis is much longer than the reference.
pub fn wer(reference: &str, hypothesis: &str) -> Result<f64> {
    let r = normalize(reference);
    let h = normalize(hypothesis);
    let r_tok: Vec<&str> = r.split_whitespace().collect();
    if r_tok.is_empty() {
        return Err(Error::InvalidArgument(
            "wer reference is empty after normalization".into(),
        ));
    }
    let h_tok: Vec<&str> = h.split_whitespace().collect();
    Ok(edit_distance(&r_tok, &h_tok) as f64 / r_tok.len() as f64)
}

/// Raw word-level edit counts for corpus-level pooling.
pub fn wer_counts(reference: &str, hypothesis: &str) -> Result<(usize, usize)> {
    let r = normalize(reference);
    let h = normalize(hypothesis);
    let r_tok: Vec<&str> = r.split_whitespace().collect();
    if r_tok.is_empty() {
        return Err(Error::InvalidArgument(
            "wer reference is empty after normalization".into(),
        ));
    }
    let h_tok: Vec<&str> = h.split_whitespace().collect();
    Ok((edit_distance(&r_tok, &h_tok), r_tok.len()))
}

/// Character-level error rate with the same normalization as `wer`.
pub fn cer(reference: &str, hypothesis: &str) -> Result<f64> {
    let r: Vec<char> = normalize(reference).chars().collect();
    if r.is_empty() {
        return Err(Error::InvalidArgument(
            "cer reference is empty after normalization".into(),
        ));
    }
    let h: Vec<char> = normalize(hypothesis).chars().collect();
    Ok(edit_distance(&r, &h) as f64 / r.len() as f64)
}

/// One point of a perplexity-versus-step curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PplCurvePoint {
    pub step: usize,
    pub mean_ppl: f64,
    pub stderr: f64,
}

/// Mean perplexity per adaptation step across traces. Aborted traces are
/// skipped; the remainder must share a step count.
pub fn ppl_curve(traces: &[AdaptationTrace]) -> Result<Vec<PplCurvePoint>> {
    let usable: Vec<&AdaptationTrace> = traces.iter().filter(|t| t.aborted.is_none()).collect();
    if usable.is_empty() {
        return Err(Error::InvalidArgument("no usable traces".into()));
    }
    let steps = usable[0].steps.len();
    if usable.iter().any(|t| t.steps.len() != steps) {
        return Err(Error::InvalidArgument(
            "traces disagree on the number of steps".into(),
        ));
    }
    let n = usable.len() as f64;
    let mut curve = Vec::with_capacity(steps);
    for s in 0..steps {
        let values: Vec<f64> = usable.iter().map(|t| t.steps[s].ppl).collect();
        let mean = values.iter().sum::<f64>() / n;
        let stderr = if usable.len() > 1 {
            let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
            (var / n).sqrt()
        } else {
            0.0
        };
        curve.push(PplCurvePoint {
            step: usable[0].steps[s].step,
            mean_ppl: mean,
            stderr,
        });
    }
    Ok(curve)
}

/// Serializes a curve as `step,mean_ppl,stderr` CSV.
pub fn ppl_curve_csv(curve: &[PplCurvePoint]) -> String {
    let mut out = String::from("step,mean_ppl,stderr\n");
    for p in curve {
        let _ = writeln!(out, "{},{},{}", p.step, p.mean_ppl, p.stderr);
    }
    out
}

/// One (condition, method) cell of a report.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub condition: String,
    pub method: String,
    /// Corpus-level WER percent: pooled edits over pooled reference words.
    pub wer_percent: f64,
    /// Mean of per-utterance WERs, percent.
    pub wer_mean_percent: f64,
    pub ppl_mean: f64,
    pub n_utts: usize,
}

/// Per-condition rows plus one average row per method.
#[derive(Debug, Clone)]
pub struct MetricReport {
    pub rows: Vec<ReportRow>,
    pub averages: Vec<ReportRow>,
}

/// Builds the report from final-step metrics. WER pools corpus-level
/// (total edit distance over total reference words); PPL averages over
/// utterances; the averages row is the arithmetic mean over conditions.
pub fn build_report(
    trace_sets: &BTreeMap<String, BTreeMap<String, Vec<AdaptationTrace>>>,
) -> Result<MetricReport> {
    let mut rows = Vec::new();
    let mut per_method: BTreeMap<String, Vec<&ReportRow>> = BTreeMap::new();
    for (condition, methods) in trace_sets {
        for (method, traces) in methods {
            if traces.is_empty() {
                return Err(Error::InvalidArgument(format!(
                    "no traces for condition {condition:?} method {method:?}"
                )));
            }
            let mut edits = 0usize;
            let mut words = 0usize;
            let mut wer_sum = 0.0;
            let mut ppl_sum = 0.0;
            let mut n = 0usize;
            for trace in traces {
                if trace.aborted.is_some() {
                    continue;
                }
                let reference = trace.reference.as_deref().ok_or_else(|| {
                    Error::MissingReference {
                        id: trace.id.clone(),
                    }
                })?;
                let (e, w) = wer_counts(reference, &trace.final_text)?;
                edits += e;
                words += w;
                wer_sum += e as f64 / w as f64;
                ppl_sum += trace.final_ppl.ok_or_else(|| {
                    Error::InvalidArgument(format!("trace {:?} has no final ppl", trace.id))
                })?;
                n += 1;
            }
            if n == 0 {
                return Err(Error::InvalidArgument(format!(
                    "all traces aborted for condition {condition:?} method {method:?}"
                )));
            }
            rows.push(ReportRow {
                condition: condition.clone(),
                method: method.clone(),
                wer_percent: 100.0 * edits as f64 / words as f64,
                wer_mean_percent: 100.0 * wer_sum / n as f64,
                ppl_mean: ppl_sum / n as f64,
                n_utts: n,
            });
        }
    }
    for row in &rows {
        per_method.entry(row.method.clone()).or_default().push(row);
    }
    let averages = per_method
        .into_iter()
        .map(|(method, cells)| {
            let k = cells.len() as f64;
            ReportRow {
                condition: "average".into(),
                method,
                wer_percent: cells.iter().map(|r| r.wer_percent).sum::<f64>() / k,
                wer_mean_percent: cells.iter().map(|r| r.wer_mean_percent).sum::<f64>() / k,
                ppl_mean: cells.iter().map(|r| r.ppl_mean).sum::<f64>() / k,
                n_utts: cells.iter().map(|r| r.n_utts).sum(),
            }
        })
        .collect();
    Ok(MetricReport { rows, averages })
}

impl MetricReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("condition,method,wer_percent,wer_mean_percent,ppl_mean,n_utts\n");
        for row in self.rows.iter().chain(&self.averages) {
            let _ = writeln!(
                out,
                "{},{},{:.4},{:.4},{:.4},{}",
                row.condition, row.method, row.wer_percent, row.wer_mean_percent, row.ppl_mean, row.n_utts
            );
        }
        out
    }

    /// Human-readable aligned table.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<24} {:<12} {:>12} {:>16} {:>12} {:>8}",
            "condition", "method", "wer%", "wer_mean%", "ppl_mean", "n"
        );
        for row in self.rows.iter().chain(&self.averages) {
            let _ = writeln!(
                out,
                "{:<24} {:<12} {:>12.2} {:>16.2} {:>12.2} {:>8}",
                row.condition, row.method, row.wer_percent, row.wer_mean_percent, row.ppl_mean, row.n_utts
            );
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adapt::StepRecord;

    fn trace(id: &str, reference: &str, final_text: &str, ppls: &[f64]) -> AdaptationTrace {
        AdaptationTrace {
            id: id.to_string(),
            steps: ppls
                .iter()
                .enumerate()
                .map(|(i, &ppl)| StepRecord {
                    step: i,
                    lr: 0.0,
                    l_tta: 0.0,
                    l_ctc: None,
                    lambda_li: 0.0,
                    total: 0.0,
                    decoded_text: final_text.to_string(),
                    correction_text: None,
                    wer_vs_ref: None,
                    ppl,
                })
                .collect(),
            final_text: final_text.to_string(),
            final_wer: None,
            final_ppl: Some(*ppls.last().unwrap()),
            reference: Some(reference.to_string()),
            aborted: None,
            final_head: None,
        }
    }

    #[test]
    fn wer_identity_and_substitution() {
        assert_eq!(wer("the cat sat", "the cat sat").unwrap(), 0.0);
        let w = wer("the cat sat", "the cat").unwrap();
        assert!((w - 1.0 / 3.0).abs() < 1e-12);
        assert!(wer("", "x").is_err());
    }

    #[test]
    fn wer_can_exceed_one() {
        let w = wer("hi", "a b c d e f").unwrap();
        assert!(w > 1.0);
    }

    #[test]
    fn wer_normalizes_before_scoring() {
        assert_eq!(wer("The  CAT!", "the cat").unwrap(), 0.0);
    }

    #[test]
    fn cer_cases() {
        assert_eq!(cer("ab", "ab").unwrap(), 0.0);
        assert_eq!(cer("ab", "ac").unwrap(), 0.5);
    }

    #[test]
    fn edit_distance_metric_properties() {
        let words = ["the cat sat", "the cat", "a cat sat", "sat cat the"];
        let toks: Vec<Vec<&str>> = words
            .iter()
            .map(|s| s.split_whitespace().collect())
            .collect();
        for a in &toks {
            assert_eq!(edit_distance(a, a), 0);
            for b in &toks {
                assert_eq!(edit_distance(a, b), edit_distance(b, a));
                if a != b {
                    assert!(edit_distance(a, b) > 0);
                }
                for c in &toks {
                    assert!(
                        edit_distance(a, c) <= edit_distance(a, b) + edit_distance(b, c),
                        "triangle inequality"
                    );
                }
            }
        }
    }

    #[test]
    fn cer_matches_a_quadratic_reference_dp() {
        // independent full-matrix implementation
        fn full_dp(a: &[char], b: &[char]) -> usize {
            let mut dp = vec![vec![0usize; b.len() + 1]; a.len() + 1];
            for i in 0..=a.len() {
                dp[i][0] = i;
            }
            for j in 0..=b.len() {
                dp[0][j] = j;
            }
            for i in 1..=a.len() {
                for j in 1..=b.len() {
                    let cost = usize::from(a[i - 1] != b[j - 1]);
                    dp[i][j] = (dp[i - 1][j] + 1)
                        .min(dp[i][j - 1] + 1)
                        .min(dp[i - 1][j - 1] + cost);
                }
            }
            dp[a.len()][b.len()]
        }
        let mut rng = crate::util::rng_from_seed(77);
        for _ in 0..100 {
            let len_a = crate::util::uniform_usize(&mut rng, 0, 8);
            let len_b = crate::util::uniform_usize(&mut rng, 0, 8);
            let a: Vec<char> = (0..len_a)
                .map(|_| (b'a' + crate::util::uniform_usize(&mut rng, 0, 2) as u8) as char)
                .collect();
            let b: Vec<char> = (0..len_b)
                .map(|_| (b'a' + crate::util::uniform_usize(&mut rng, 0, 2) as u8) as char)
                .collect();
            assert_eq!(edit_distance(&a, &b), full_dp(&a, &b));
        }
    }

    #[test]
    fn curve_of_single_trace_equals_its_ppl_column() {
        let t = trace("u0", "the cat", "the cat", &[30.0, 20.0, 10.0]);
        let curve = ppl_curve(std::slice::from_ref(&t)).unwrap();
        assert_eq!(curve.len(), 3);
        assert_eq!(curve[0].mean_ppl, 30.0);
        assert_eq!(curve[2].mean_ppl, 10.0);
        assert!(curve.iter().all(|p| p.stderr == 0.0));
    }

    #[test]
    fn constant_traces_give_a_flat_curve() {
        let traces = vec![
            trace("u0", "a b", "a b", &[12.0, 12.0]),
            trace("u1", "c d", "c d", &[12.0, 12.0]),
        ];
        let curve = ppl_curve(&traces).unwrap();
        assert!(curve.iter().all(|p| p.mean_ppl == 12.0 && p.stderr == 0.0));
    }

    #[test]
    fn curve_rejects_mismatched_step_counts() {
        let traces = vec![
            trace("u0", "a b", "a b", &[1.0, 2.0]),
            trace("u1", "c d", "c d", &[1.0]),
        ];
        assert!(ppl_curve(&traces).is_err());
        assert!(ppl_curve(&[]).is_err());
    }

    #[test]
    fn single_cell_report_equals_direct_metrics() {
        let mut sets = BTreeMap::new();
        sets.entry("noise".to_string())
            .or_insert_with(BTreeMap::new)
            .insert(
                "em".to_string(),
                vec![trace("u0", "the cat sat", "the cat", &[9.0, 5.0])],
            );
        let report = build_report(&sets).unwrap();
        assert_eq!(report.rows.len(), 1);
        let row = &report.rows[0];
        assert!((row.wer_percent - 100.0 / 3.0).abs() < 1e-9);
        assert_eq!(row.ppl_mean, 5.0);
        assert_eq!(report.averages.len(), 1);
        assert_eq!(report.averages[0].wer_percent, row.wer_percent);
    }

    #[test]
    fn averages_are_arithmetic_means_over_conditions() {
        let mut sets: BTreeMap<String, BTreeMap<String, Vec<AdaptationTrace>>> = BTreeMap::new();
        // condition A: 1 edit over 10 words -> 10%, condition B: 2 edits over 10 -> 20%
        sets.entry("a".into()).or_default().insert(
            "em".into(),
            vec![trace(
                "u0",
                "w w w w w w w w w w",
                "w w w w w w w w w x",
                &[4.0],
            )],
        );
        sets.entry("b".into()).or_default().insert(
            "em".into(),
            vec![trace(
                "u0",
                "w w w w w w w w w w",
                "w w w w w w w w x x",
                &[8.0],
            )],
        );
        let report = build_report(&sets).unwrap();
        let avg = &report.averages[0];
        assert!((avg.wer_percent - 15.0).abs() < 1e-9);
        assert!((avg.ppl_mean - 6.0).abs() < 1e-9);
    }

    #[test]
    fn corpus_wer_pools_rather_than_averages() {
        // u0: 0 of 1 word wrong, u1: 3 of 3 wrong.
        // pooled = 3/4 = 75%; mean of per-utterance = (0 + 1)/2 = 50%.
        let mut sets: BTreeMap<String, BTreeMap<String, Vec<AdaptationTrace>>> = BTreeMap::new();
        sets.entry("c".into()).or_default().insert(
            "em".into(),
            vec![
                trace("u0", "yes", "yes", &[1.0]),
                trace("u1", "a b c", "x y z", &[1.0]),
            ],
        );
        let report = build_report(&sets).unwrap();
        let row = &report.rows[0];
        assert!((row.wer_percent - 75.0).abs() < 1e-9);
        assert!((row.wer_mean_percent - 50.0).abs() < 1e-9);
    }

    #[test]
    fn report_requires_references() {
        let mut t = trace("u0", "the cat", "the cat", &[2.0]);
        t.reference = None;
        let mut sets: BTreeMap<String, BTreeMap<String, Vec<AdaptationTrace>>> = BTreeMap::new();
        sets.entry("c".into()).or_default().insert("em".into(), vec![t]);
        assert!(matches!(
            build_report(&sets),
            Err(Error::MissingReference { .. })
        ));
    }
}
