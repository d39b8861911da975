//! Error metrics over exact-year test samples, bootstrap uncertainty, and
//! quality-score analysis.
//!
//! Range-labelled (century or dynasty) test samples are excluded from every
//! metric here: an interval has no single true year to measure against.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::dataset::{Dataset, LabelKind};
use crate::error::{Error, Result};

/// Mean absolute error in years over the truth set's exact-year samples.
/// Every exact-year sample must have a prediction; extra predictions are
/// ignored.
pub fn mae(predictions: &[(String, f64)], truth: &Dataset) -> Result<f64> {
    let errors = absolute_errors(predictions, truth)?;
    if errors.is_empty() {
        return Err(Error::EmptyInput("no exact-year samples to evaluate".into()));
    }
    Ok(errors.iter().map(|(_, e)| e).sum::<f64>() / errors.len() as f64)
}

/// MAE plus a bootstrap standard deviation: the test indices are resampled
/// with replacement `resamples` times and the MAE recomputed on each
/// resample. The point estimate is exactly [`mae`]; only the spread comes
/// from resampling.
pub fn bootstrap_mae(
    predictions: &[(String, f64)],
    truth: &Dataset,
    resamples: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if resamples < 1 {
        return Err(Error::InvalidArgument("resamples must be at least 1".into()));
    }
    let errors = absolute_errors(predictions, truth)?;
    let n = errors.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "bootstrap needs at least 2 exact-year samples, got {n}"
        )));
    }
    let point = errors.iter().map(|(_, e)| e).sum::<f64>() / n as f64;

    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut means = Vec::with_capacity(resamples);
    for _ in 0..resamples {
        let mut sum = 0.0;
        for _ in 0..n {
            sum += errors[rng.random_range(0..n)].1;
        }
        means.push(sum / n as f64);
    }
    let grand = means.iter().sum::<f64>() / resamples as f64;
    let var = means.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / resamples as f64;
    Ok((point, var.sqrt()))
}

/// Pearson product-moment correlation coefficient.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::DimensionMismatch {
            expected: xs.len(),
            got: ys.len(),
        });
    }
    if xs.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "correlation needs at least 2 points, got {}",
            xs.len()
        )));
    }
    let n = xs.len() as f64;
    let mean_x = xs.iter().sum::<f64>() / n;
    let mean_y = ys.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var_x = 0.0;
    let mut var_y = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        cov += (x - mean_x) * (y - mean_y);
        var_x += (x - mean_x) * (x - mean_x);
        var_y += (y - mean_y) * (y - mean_y);
    }
    if var_x == 0.0 || var_y == 0.0 {
        return Err(Error::InvalidArgument(
            "correlation is undefined for a constant input".into(),
        ));
    }
    Ok(cov / (var_x.sqrt() * var_y.sqrt()))
}

/// One row of the quality/error table: scores in [`lo`, `hi`) (the last bin
/// is closed), the MAE of the samples falling there, and how many there are.
/// Empty bins report a zero MAE alongside their zero count.
#[derive(Debug, Clone, PartialEq)]
pub struct QualityBin {
    pub lo: f64,
    pub hi: f64,
    pub mae: f64,
    pub count: usize,
}

/// Splits the observed quality-score range into `bins` equal-width bins and
/// reports the per-bin MAE over exact-year samples carrying a score.
pub fn error_by_quality(
    predictions: &[(String, f64)],
    truth: &Dataset,
    bins: usize,
) -> Result<Vec<QualityBin>> {
    if bins == 0 {
        return Err(Error::InvalidArgument("bins must be at least 1".into()));
    }
    let errors = absolute_errors(predictions, truth)?;
    let scored: Vec<(f64, f64)> = errors
        .iter()
        .filter_map(|&(idx, e)| truth.get(idx).quality.map(|q| (q, e)))
        .collect();
    if scored.is_empty() {
        return Err(Error::EmptyInput(
            "no exact-year samples carry a quality score".into(),
        ));
    }
    let min = scored.iter().map(|&(q, _)| q).fold(f64::INFINITY, f64::min);
    let max = scored.iter().map(|&(q, _)| q).fold(f64::NEG_INFINITY, f64::max);
    let width = (max - min) / bins as f64;

    let mut sums = vec![0.0; bins];
    let mut counts = vec![0usize; bins];
    for &(q, e) in &scored {
        let idx = if width == 0.0 {
            0
        } else {
            (((q - min) / width) as usize).min(bins - 1)
        };
        sums[idx] += e;
        counts[idx] += 1;
    }
    Ok((0..bins)
        .map(|i| QualityBin {
            lo: min + width * i as f64,
            hi: min + width * (i + 1) as f64,
            mae: if counts[i] > 0 { sums[i] / counts[i] as f64 } else { 0.0 },
            count: counts[i],
        })
        .collect())
}

/// (truth index, |prediction − μ|) for every exact-year truth sample, in
/// dataset order. Errors if any of them is missing a prediction.
fn absolute_errors(predictions: &[(String, f64)], truth: &Dataset) -> Result<Vec<(usize, f64)>> {
    let by_id: HashMap<&str, f64> = predictions
        .iter()
        .map(|(id, year)| (id.as_str(), *year))
        .collect();
    truth
        .indices_of_kind(LabelKind::Year)
        .into_iter()
        .map(|idx| {
            let sample = truth.get(idx);
            match by_id.get(sample.id.as_str()) {
                Some(&pred) => {
                    Ok((idx, (pred - sample.label.as_ref().unwrap().gaussian.mu).abs()))
                }
                None => Err(Error::InvalidArgument(format!(
                    "no prediction for exact-year sample {}",
                    sample.id
                ))),
            }
        })
        .collect()
}
