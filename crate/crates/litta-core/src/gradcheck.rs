//! Central-finite-difference verification of analytic logit gradients.
//! Deliberately independent of every loss implementation it checks.

use crate::ctc::LogitMatrix;

/// Numeric gradient of `f` with respect to each logit entry.
pub fn central_diff_grad<F>(logits: &LogitMatrix, f: F, step: f64) -> Vec<Vec<f64>>
where
    F: Fn(&LogitMatrix) -> f64,
{
    let mut out = Vec::with_capacity(logits.len());
    for t in 0..logits.len() {
        let mut row = Vec::with_capacity(logits.class_count());
        for k in 0..logits.class_count() {
            let mut plus = logits.rows().to_vec();
            plus[t][k] += step;
            let mut minus = logits.rows().to_vec();
            minus[t][k] -= step;
            let fp = f(&LogitMatrix::new(plus, logits.vocab().clone()).unwrap());
            let fm = f(&LogitMatrix::new(minus, logits.vocab().clone()).unwrap());
            row.push((fp - fm) / (2.0 * step));
        }
        out.push(row);
    }
    out
}

/// Worst relative discrepancy between an analytic and a numeric gradient.
/// Entries where the analytic value is below 1e-6 are compared absolutely
/// against 1e-7 and contribute zero when inside that band.
pub fn max_rel_error(analytic: &[Vec<f64>], numeric: &[Vec<f64>]) -> f64 {
    let mut worst = 0.0f64;
    for (ra, rn) in analytic.iter().zip(numeric) {
        for (&a, &n) in ra.iter().zip(rn) {
            let diff = (a - n).abs();
            let rel = if a.abs() < 1e-6 {
                if diff <= 1e-7 {
                    0.0
                } else {
                    diff / 1e-6
                }
            } else {
                diff / a.abs()
            };
            worst = worst.max(rel);
        }
    }
    worst
}

/// Panics when the analytic gradient strays from central differences.
pub fn assert_grad_close<F>(
    logits: &LogitMatrix,
    analytic: &[Vec<f64>],
    f: F,
    step: f64,
    tol: f64,
) where
    F: Fn(&LogitMatrix) -> f64,
{
    let numeric = central_diff_grad(logits, f, step);
    let err = max_rel_error(analytic, &numeric);
    assert!(err <= tol, "gradient mismatch: max relative error {err}");
}
