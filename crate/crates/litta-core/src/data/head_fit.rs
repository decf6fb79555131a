//! Closed-form ridge regression from frames to one-hot class targets; the
//! stand-in for a pretrained source-domain model.

use crate::error::{Error, Result};
use crate::head::AdaptableHead;
use crate::vocab::Vocab;

use super::DatasetManifest;

/// Fits `logits = W x + b` by class-balanced ridge regression on the
/// generator's forced alignment: every class contributes equal total
/// weight regardless of how often it occurs, so rare characters (and the
/// blank) keep usable readouts. The ridge penalty applies to all
/// coefficients including the bias. Singular normal equations (possible
/// only at ridge 0) are rejected.
pub fn fit_source_head(
    manifest: &DatasetManifest,
    vocab: &Vocab,
    alignments: &[Vec<usize>],
    ridge_coefficient: f64,
) -> Result<AdaptableHead> {
    if ridge_coefficient.is_nan() || ridge_coefficient < 0.0 {
        return Err(Error::InvalidArgument(
            "ridge_coefficient must be >= 0".into(),
        ));
    }
    if alignments.len() != manifest.len() {
        return Err(Error::InvalidArgument(format!(
            "{} alignments for {} utterances",
            alignments.len(),
            manifest.len()
        )));
    }
    let d = manifest.feature_dim();
    if d == 0 {
        return Err(Error::InvalidArgument("manifest is empty".into()));
    }
    let c = vocab.size();
    let z = d + 1; // augmented with a constant-one column for the bias

    let mut class_counts = vec![0u64; c];
    for (utt, labels) in manifest.utterances.iter().zip(alignments) {
        if labels.len() != utt.frame_count() {
            return Err(Error::InvalidArgument(format!(
                "alignment for {:?} has {} labels for {} frames",
                utt.id,
                labels.len(),
                utt.frame_count()
            )));
        }
        for &label in labels {
            if label >= c {
                return Err(Error::InvalidArgument(format!(
                    "alignment label {label} out of range for {c} classes"
                )));
            }
            class_counts[label] += 1;
        }
    }
    let weight_of = |label: usize| 1.0 / class_counts[label] as f64;

    // weighted normal equations: G = Z'WZ (z x z), rhs = Z'WY (z x c)
    let mut gram = vec![vec![0.0f64; z]; z];
    let mut rhs = vec![vec![0.0f64; c]; z];
    for (utt, labels) in manifest.utterances.iter().zip(alignments) {
        for (frame, &label) in utt.frames.iter().zip(labels) {
            let w = weight_of(label);
            for i in 0..d {
                let wf = w * frame[i];
                for j in i..d {
                    gram[i][j] += wf * frame[j];
                }
                gram[i][d] += wf;
                rhs[i][label] += wf;
            }
            gram[d][d] += w;
            rhs[d][label] += w;
        }
    }
    for i in 0..z {
        for j in 0..i {
            gram[i][j] = gram[j][i];
        }
        gram[i][i] += ridge_coefficient;
    }

    let solution = solve_multi(gram, rhs)?;

    let mut weights = vec![vec![0.0; d]; c];
    let mut bias = vec![0.0; c];
    for class in 0..c {
        for i in 0..d {
            weights[class][i] = solution[i][class];
        }
        bias[class] = solution[d][class];
    }
    AdaptableHead::new(weights, bias, vocab.clone())
}

/// Solves `A X = B` for multiple right-hand sides by Gaussian elimination
/// with partial pivoting. A vanishing pivot means singular normal equations.
fn solve_multi(mut a: Vec<Vec<f64>>, mut b: Vec<Vec<f64>>) -> Result<Vec<Vec<f64>>> {
    let n = a.len();
    let m = b[0].len();
    let scale = a
        .iter()
        .flatten()
        .fold(0.0f64, |acc, &x| acc.max(x.abs()))
        .max(1.0);
    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())
            .unwrap();
        if a[pivot_row][col].abs() < 1e-12 * scale {
            return Err(Error::SingularNormalEquations);
        }
        a.swap(col, pivot_row);
        b.swap(col, pivot_row);
        let pivot = a[col][col];
        for row in (col + 1)..n {
            let factor = a[row][col] / pivot;
            if factor == 0.0 {
                continue;
            }
            for k in col..n {
                a[row][k] -= factor * a[col][k];
            }
            for k in 0..m {
                b[row][k] -= factor * b[col][k];
            }
        }
    }
    let mut x = vec![vec![0.0; m]; n];
    for row in (0..n).rev() {
        for k in 0..m {
            let mut acc = b[row][k];
            for col in (row + 1)..n {
                acc -= a[row][col] * x[col][k];
            }
            x[row][k] = acc / a[row][row];
        }
    }
    Ok(x)
}
