//! Free-run evaluation on the held-out test sequence.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::certifier;
use crate::datasets::{Ranges, TestSequence};
use crate::error::{Error, Result};
use crate::linalg::norm2;
use crate::model::{DeepLstmModel, ModelState};

fn check_pair(y_pred: &[Vec<f64>], y_true: &[Vec<f64>], tau_w: usize) -> Result<usize> {
    if y_pred.len() != y_true.len() {
        return Err(Error::Evaluation(format!(
            "prediction has {} samples, reference has {}",
            y_pred.len(),
            y_true.len()
        )));
    }
    if y_true.len() <= tau_w {
        return Err(Error::Evaluation(format!(
            "sequence of {} samples leaves nothing after a washout of {tau_w}",
            y_true.len()
        )));
    }
    let n_y = y_true[0].len();
    for (k, (p, t)) in y_pred.iter().zip(y_true).enumerate() {
        if p.len() != n_y || t.len() != n_y {
            return Err(Error::Dimension {
                operand: format!("output at step {k}"),
                expected: n_y,
                found: if p.len() != n_y { p.len() } else { t.len() },
            });
        }
    }
    Ok(n_y)
}

/// Temporal mean of every channel over the whole reference sequence.
fn channel_mean(y: &[Vec<f64>]) -> Vec<f64> {
    let mut m = vec![0.0; y[0].len()];
    for row in y {
        for (a, v) in m.iter_mut().zip(row) {
            *a += v;
        }
    }
    m.iter_mut().for_each(|a| *a /= y.len() as f64);
    m
}

fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// FIT index in percent over `k > τ_w`:
///
/// ```text
/// FIT = 100 · (1 − Σ_k ‖y_k − y_k^te‖₂ / Σ_k ‖y_k^te − ȳ^te‖₂)
/// ```
///
/// `ȳ^te` is the per-channel mean of the whole reference. 100 means exact
/// prediction; predicting the mean scores 0.
pub fn fit_index(y_pred: &[Vec<f64>], y_true: &[Vec<f64>], tau_w: usize) -> Result<f64> {
    check_pair(y_pred, y_true, tau_w)?;
    let mean = channel_mean(y_true);
    let (mut num, mut den) = (0.0, 0.0);
    for k in (tau_w + 1)..y_true.len() {
        num += norm2(&diff(&y_pred[k], &y_true[k]));
        den += norm2(&diff(&y_true[k], &mean));
    }
    if !(den > 0.0) {
        return Err(Error::Evaluation("reference output is constant; FIT undefined".into()));
    }
    Ok(100.0 * (1.0 - num / den))
}

/// FIT with the ratio taken per step and summed,
/// `100 · (1 − Σ_k ‖y_k − y_k^te‖₂ / ‖y_k^te − ȳ^te‖₂)`.
///
/// The sum grows with the sequence length, so this is only meaningful for
/// short sequences; [`fit_index`] is the length-independent variant.
pub fn fit_index_per_step_sum(y_pred: &[Vec<f64>], y_true: &[Vec<f64>], tau_w: usize) -> Result<f64> {
    check_pair(y_pred, y_true, tau_w)?;
    let mean = channel_mean(y_true);
    let mut sum = 0.0;
    for k in (tau_w + 1)..y_true.len() {
        let den = norm2(&diff(&y_true[k], &mean));
        if !(den > 0.0) {
            return Err(Error::Evaluation(format!(
                "reference equals its mean at step {k}; per-step ratio undefined"
            )));
        }
        sum += norm2(&diff(&y_pred[k], &y_true[k])) / den;
    }
    Ok(100.0 * (1.0 - sum))
}

/// Single-channel FIT, `100 · (1 − Σ|e_k| / Σ|y_k − ȳ|)`.
pub fn channel_fit(y_pred: &[Vec<f64>], y_true: &[Vec<f64>], tau_w: usize, channel: usize) -> Result<f64> {
    let pick = |y: &[Vec<f64>]| -> Vec<Vec<f64>> { y.iter().map(|r| vec![r[channel]]).collect() };
    let n_y = check_pair(y_pred, y_true, tau_w)?;
    if channel >= n_y {
        return Err(Error::Evaluation(format!("channel {channel} out of range (n_y = {n_y})")));
    }
    fit_index(&pick(y_pred), &pick(y_true), tau_w)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub fit_percent: f64,
    pub per_channel_fit: Vec<f64>,
    /// Mean over `k > τ_w` of `‖ŷ_k − y_k‖₂²` (normalized units).
    pub test_mse: f64,
    pub washout: usize,
    /// Whether the evaluated model satisfies the stability certificate.
    pub certified: bool,
    pub margin: f64,
    #[serde(skip)]
    pub t: Vec<f64>,
    #[serde(skip)]
    pub y_pred: Vec<Vec<f64>>,
    #[serde(skip)]
    pub y_true: Vec<Vec<f64>>,
}

/// Simulates `model` from the zero state over the whole test input and
/// scores it after the washout.
pub fn evaluate(model: &DeepLstmModel, test: &TestSequence, tau_w: usize) -> Result<EvalResult> {
    evaluate_from(model, test, tau_w, &ModelState::zeros(model))
}

/// As [`evaluate`], but free-running from `x0`, e.g. a seeded sample from the
/// invariant box to probe how much the washout absorbs.
pub fn evaluate_from(model: &DeepLstmModel, test: &TestSequence, tau_w: usize, x0: &ModelState) -> Result<EvalResult> {
    if test.u.first().is_some_and(|u| u.len() != model.n_u()) {
        return Err(Error::Dimension {
            operand: "test input".into(),
            expected: model.n_u(),
            found: test.u[0].len(),
        });
    }
    if test.y.first().is_some_and(|y| y.len() != model.n_y()) {
        return Err(Error::Dimension {
            operand: "test output".into(),
            expected: model.n_y(),
            found: test.y[0].len(),
        });
    }
    let y_pred = model.simulate_outputs(x0, &test.u)?;
    let fit_percent = fit_index(&y_pred, &test.y, tau_w)?;
    let per_channel_fit = (0..model.n_y())
        .map(|c| channel_fit(&y_pred, &test.y, tau_w, c))
        .collect::<Result<Vec<_>>>()?;
    let n = test.y.len() - tau_w - 1;
    let test_mse = ((tau_w + 1)..test.y.len())
        .map(|k| {
            let e = norm2(&diff(&y_pred[k], &test.y[k]));
            e * e
        })
        .sum::<f64>()
        / n as f64;
    let cert = certifier::certify(model);
    Ok(EvalResult {
        fit_percent,
        per_channel_fit,
        test_mse,
        washout: tau_w,
        certified: cert.satisfied,
        margin: cert.margin,
        t: test.t.clone(),
        y_pred,
        y_true: test.y.clone(),
    })
}

/// Writes `t,y1_true,y1_pred,…` in physical units.
pub fn write_traces(path: impl AsRef<Path>, result: &EvalResult, ranges: &Ranges) -> Result<()> {
    let path = path.as_ref();
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let n_y = ranges.y.len();
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    let mut header = vec!["t".to_string()];
    for c in 1..=n_y {
        header.push(format!("y{c}_true"));
        header.push(format!("y{c}_pred"));
    }
    w.write_record(&header).map_err(csv_err)?;
    let mut row = Vec::with_capacity(header.len());
    for k in 0..result.y_true.len() {
        row.clear();
        row.push(result.t[k].to_string());
        for (c, r) in ranges.y.iter().enumerate() {
            row.push(r.denormalize(result.y_true[k][c]).to_string());
            row.push(r.denormalize(result.y_pred[k][c]).to_string());
        }
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col(v: &[(f64, f64)]) -> Vec<Vec<f64>> {
        v.iter().map(|&(a, b)| vec![a, b]).collect()
    }

    #[test]
    fn exact_prediction_scores_100() {
        let y = col(&[(0.0, 1.0), (2.0, -1.0), (1.0, 0.5), (3.0, 0.0)]);
        assert_eq!(fit_index(&y, &y, 0).unwrap(), 100.0);
        assert_eq!(fit_index_per_step_sum(&y, &y, 1).unwrap(), 100.0);
    }

    #[test]
    fn mean_prediction_scores_zero() {
        let y = col(&[(0.0, 1.0), (2.0, -1.0), (1.0, 0.5), (3.0, 0.0), (-1.0, 2.0)]);
        let m = channel_mean(&y);
        let pred = vec![m; y.len()];
        assert!(fit_index(&pred, &y, 1).unwrap().abs() < 1e-12);
    }

    #[test]
    fn per_step_sum_on_three_samples() {
        // y = (0, 3, 3): mean 2, deviations 1 at the scored steps 1 and 2
        let y_true = vec![vec![0.0], vec![3.0], vec![3.0]];
        let y_pred = vec![vec![0.0], vec![2.5], vec![4.0]];
        // ratios 0.5/1 + 1/1 = 1.5 → 100·(1 − 1.5) = −50
        assert!((fit_index_per_step_sum(&y_pred, &y_true, 0).unwrap() + 50.0).abs() < 1e-12);
        // sum form: (0.5 + 1) / (1 + 1) → 25
        assert!((fit_index(&y_pred, &y_true, 0).unwrap() - 25.0).abs() < 1e-12);
        // predicting the mean gives ratio 1 at every step
        let mean = vec![vec![2.0]; 3];
        assert!((fit_index_per_step_sum(&mean, &y_true, 0).unwrap() + 100.0).abs() < 1e-12);
    }

    #[test]
    fn constant_reference_is_an_error() {
        let y = vec![vec![1.0, 1.0]; 5];
        assert!(fit_index(&y, &y, 0).is_err());
    }

    #[test]
    fn washout_too_long_is_an_error() {
        let y = col(&[(0.0, 1.0), (2.0, -1.0)]);
        assert!(fit_index(&y, &y, 2).is_err());
    }

    #[test]
    fn channel_order_does_not_matter() {
        let y = col(&[(0.0, 1.0), (2.0, -1.0), (1.0, 0.5), (3.0, 0.0)]);
        let p = col(&[(0.1, 0.9), (1.7, -1.2), (1.0, 0.4), (2.5, 0.3)]);
        let swap = |v: &[Vec<f64>]| v.iter().map(|r| vec![r[1], r[0]]).collect::<Vec<_>>();
        let a = fit_index(&p, &y, 0).unwrap();
        let b = fit_index(&swap(&p), &swap(&y), 0).unwrap();
        assert_eq!(a, b);
    }
}
