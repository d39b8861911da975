//! Nearest-neighbour baseline: no learning, just cosine similarity against
//! the labelled training embeddings, answering with the best match's label
//! mean (the midpoint year for century and dynasty ranges).

use crate::dataset::Dataset;
use crate::error::{Error, Result};

/// Predicts the label μ of the labelled training sample whose embedding has
/// the highest cosine similarity to `query_features`. Ties go to the
/// smallest sample id.
pub fn nearest_neighbor_predict(train: &Dataset, query_features: &[f64]) -> Result<f64> {
    if query_features.len() != train.dim() {
        return Err(Error::DimensionMismatch {
            expected: train.dim(),
            got: query_features.len(),
        });
    }
    let query_norm = norm(query_features);
    if query_norm == 0.0 {
        return Err(Error::InvalidArgument("query vector has zero norm".into()));
    }

    let mut best: Option<(f64, &str, f64)> = None; // (similarity, id, mu)
    for idx in train.labelled_indices() {
        let sample = train.get(idx);
        let sample_norm = norm(&sample.features);
        if sample_norm == 0.0 {
            return Err(Error::InvalidArgument(format!(
                "training sample {} has zero-norm features",
                sample.id
            )));
        }
        let dot: f64 = sample
            .features
            .iter()
            .zip(query_features)
            .map(|(&a, &b)| a * b)
            .sum();
        let similarity = dot / (sample_norm * query_norm);
        let mu = sample.label.as_ref().unwrap().gaussian.mu;
        let better = match best {
            None => true,
            Some((s, id, _)) => {
                similarity > s || (similarity == s && sample.id.as_str() < id)
            }
        };
        if better {
            best = Some((similarity, &sample.id, mu));
        }
    }
    match best {
        Some((_, _, mu)) => Ok(mu),
        None => Err(Error::EmptyInput("no labelled samples to match against".into())),
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|&x| x * x).sum::<f64>().sqrt()
}
