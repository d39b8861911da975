//! Mini-batch Adam training of the adapter + head model.
//!
//! Each optimizer step draws a chunk of labelled samples (without
//! replacement within an epoch) and a slice of unlabelled samples (drawn
//! cyclically, reshuffling whenever the pool is exhausted), then combines:
//!
//! * E — mean squared error over the chunk's exact-year members, against
//!   standardized label means; skipped (contributes 0) when the chunk has
//!   no exact-year member,
//! * C — pairwise KL between label and prediction geometry, normalized
//!   within the chunk; skipped when the chunk has fewer than two members,
//! * R — mean RBF weight between the chunk's and the unlabelled slice's
//!   adapter outputs; skipped when either side is empty.
//!
//! Label means and predictions are standardized; label sigmas stay in
//! years, which keeps the pairwise kernels soft enough that the three loss
//! terms carry similar weight. Because p and q share each row's sigma, the
//! KL term still vanishes exactly when predictions equal the standardized
//! label means.
//!
//! Everything is driven by one seeded RNG — model initialization first,
//! then epoch shuffles and unlabelled refills — so a seed pins the entire
//! parameter trajectory.

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::dataset::{Dataset, LabelKind};
use crate::error::{Error, Result};
use crate::label::GaussianLabel;
use crate::loss::{kl_alignment_loss, mse_loss, regularizer, LossConfig};
use crate::model::{fit_standardization, AdapterKind, Model, ModelConfig, StandardizationParams};

/// Everything the training loop needs besides the data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub loss: LossConfig,
    pub adapter: AdapterKind,
    pub learning_rate: f64,
    pub batch_labelled: usize,
    pub batch_unlabelled: usize,
    pub epochs: usize,
    pub seed: u64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            loss: LossConfig::default(),
            adapter: AdapterKind::Mlp { hidden: 64, out: 64 },
            learning_rate: 0.003,
            batch_labelled: 64,
            batch_unlabelled: 64,
            epochs: 200,
            seed: 0,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.loss.validate()?;
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.batch_labelled == 0 {
            return Err(Error::InvalidArgument("batch_labelled must be at least 1".into()));
        }
        if self.loss.beta > 0.0 && self.batch_labelled < 2 {
            return Err(Error::InvalidArgument(
                "batch_labelled must be at least 2 when beta > 0 (pairwise terms need pairs)".into(),
            ));
        }
        if self.loss.gamma > 0.0 && self.batch_unlabelled == 0 {
            return Err(Error::InvalidArgument(
                "batch_unlabelled must be at least 1 when gamma > 0".into(),
            ));
        }
        for (name, b) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::InvalidArgument(format!("{name} must lie in [0, 1), got {b}")));
            }
        }
        if !(self.adam_epsilon.is_finite() && self.adam_epsilon > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "adam_epsilon must be positive, got {}",
                self.adam_epsilon
            )));
        }
        Ok(())
    }
}

/// Per-epoch averages of the loss terms, plus validation MAE when a holdout
/// was supplied. Loss values are in standardized units; `val_mae` is in
/// years.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub e: f64,
    pub c: f64,
    pub r: f64,
    pub total: f64,
    pub val_mae: Option<f64>,
}

/// One record per completed epoch.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
}

impl TrainReport {
    /// CSV rendering, `epoch,E,C,R,total,val_mae`; the last field is empty
    /// when no holdout was supplied.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,E,C,R,total,val_mae\n");
        for rec in &self.epochs {
            let val = rec.val_mae.map(|v| v.to_string()).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                rec.epoch, rec.e, rec.c, rec.r, rec.total, val
            ));
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        file.write_all(self.to_csv().as_bytes())
            .map_err(|e| Error::io(path, e))
    }
}

/// Draws indices in shuffled order, reshuffling whenever the pool runs out.
struct CyclicSampler {
    indices: Vec<usize>,
    pos: usize,
}

impl CyclicSampler {
    fn new(indices: Vec<usize>) -> Self {
        let pos = indices.len();
        CyclicSampler { indices, pos }
    }

    fn draw(&mut self, count: usize, rng: &mut ChaCha20Rng) -> Vec<usize> {
        let mut out = Vec::with_capacity(count);
        for _ in 0..count {
            if self.pos == self.indices.len() {
                self.indices.shuffle(rng);
                self.pos = 0;
            }
            out.push(self.indices[self.pos]);
            self.pos += 1;
        }
        out
    }
}

/// Trains a fresh model on `train_set`. When `validation` is given, each
/// epoch record carries the MAE over its exact-year samples, in years.
pub fn train(
    train_set: &Dataset,
    validation: Option<&Dataset>,
    cfg: &TrainConfig,
) -> Result<(Model, StandardizationParams, TrainReport)> {
    cfg.validate()?;
    let labelled = train_set.labelled_indices();
    let unlabelled = train_set.unlabelled_indices();
    let exact = train_set.indices_of_kind(LabelKind::Year);
    if cfg.loss.alpha > 0.0 && exact.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "alpha > 0 needs at least 2 exact-year samples, got {}",
            exact.len()
        )));
    }
    if cfg.loss.beta > 0.0 && labelled.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "beta > 0 needs at least 2 labelled samples, got {}",
            labelled.len()
        )));
    }
    if cfg.loss.gamma > 0.0 && (labelled.is_empty() || unlabelled.is_empty()) {
        return Err(Error::InvalidArgument(
            "gamma > 0 needs at least 1 labelled and 1 unlabelled sample".into(),
        ));
    }

    let gaussians: Vec<GaussianLabel> = labelled
        .iter()
        .map(|&i| train_set.get(i).label.as_ref().unwrap().gaussian)
        .collect();
    let std = fit_standardization(&gaussians)?;

    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let model_config = ModelConfig::new(train_set.dim(), cfg.adapter)?;
    let mut model = Model::init(model_config, &mut rng);
    let m = model_config.feature_dim();

    let use_regularizer =
        cfg.loss.gamma > 0.0 && cfg.batch_unlabelled > 0 && !unlabelled.is_empty();
    let mut unlabelled_sampler = CyclicSampler::new(unlabelled);
    let mut adam = Adam::new(model.params().len(), cfg);
    let mut report = TrainReport::default();
    let mut labelled_order = labelled.clone();

    for epoch in 1..=cfg.epochs {
        labelled_order.shuffle(&mut rng);
        let mut sums = (0.0, 0.0, 0.0, 0.0);
        let mut steps = 0usize;

        for chunk in labelled_order.chunks(cfg.batch_labelled) {
            let unlabelled_batch = if use_regularizer {
                unlabelled_sampler.draw(cfg.batch_unlabelled, &mut rng)
            } else {
                Vec::new()
            };
            let batch: Vec<&[f64]> = chunk
                .iter()
                .chain(&unlabelled_batch)
                .map(|&i| train_set.get(i).features.as_slice())
                .collect();
            let cache = model.forward_batch(&batch)?;
            let predictions = &cache.predictions()[..chunk.len()];
            let labels: Vec<GaussianLabel> = chunk
                .iter()
                .map(|&i| std.standardize_label(train_set.get(i).label.as_ref().unwrap().gaussian))
                .collect();

            let mut grad_predictions = vec![0.0; batch.len()];
            let mut grad_adapter = vec![vec![0.0; m]; batch.len()];
            let mut e_term = 0.0;
            let mut c_term = 0.0;
            let mut r_term = 0.0;

            if cfg.loss.alpha > 0.0 {
                let exact_positions: Vec<usize> = chunk
                    .iter()
                    .enumerate()
                    .filter(|(_, &i)| train_set.get(i).label_kind() == Some(LabelKind::Year))
                    .map(|(pos, _)| pos)
                    .collect();
                if !exact_positions.is_empty() {
                    let preds: Vec<f64> = exact_positions.iter().map(|&p| predictions[p]).collect();
                    let targets: Vec<f64> = exact_positions.iter().map(|&p| labels[p].mu).collect();
                    let (e, grad) = mse_loss(&preds, &targets)?;
                    e_term = e;
                    for (&pos, g) in exact_positions.iter().zip(grad) {
                        grad_predictions[pos] += cfg.loss.alpha * g;
                    }
                }
            }

            if cfg.loss.beta > 0.0 && chunk.len() >= 2 {
                let (c, grad) = kl_alignment_loss(&labels, predictions)?;
                c_term = c;
                for (pos, g) in grad.into_iter().enumerate() {
                    grad_predictions[pos] += cfg.loss.beta * g;
                }
            }

            if use_regularizer {
                let outputs = cache.adapter_outputs();
                let lab: Vec<&[f64]> = outputs[..chunk.len()].iter().map(|v| v.as_slice()).collect();
                let unl: Vec<&[f64]> = outputs[chunk.len()..].iter().map(|v| v.as_slice()).collect();
                let (r, grad_l, grad_u) = regularizer(&lab, &unl, cfg.loss.length_scale)?;
                r_term = r;
                for (pos, g) in grad_l.into_iter().enumerate() {
                    for (k, gv) in g.into_iter().enumerate() {
                        grad_adapter[pos][k] += cfg.loss.gamma * gv;
                    }
                }
                for (pos, g) in grad_u.into_iter().enumerate() {
                    for (k, gv) in g.into_iter().enumerate() {
                        grad_adapter[chunk.len() + pos][k] += cfg.loss.gamma * gv;
                    }
                }
            }

            let grad = model.backward(&cache, &grad_predictions, &grad_adapter)?;
            adam.step(model.params_mut(), &grad);

            let total = cfg.loss.alpha * e_term + cfg.loss.beta * c_term + cfg.loss.gamma * r_term;
            sums.0 += e_term;
            sums.1 += c_term;
            sums.2 += r_term;
            sums.3 += total;
            steps += 1;
        }

        let n = steps.max(1) as f64;
        let val_mae = match validation {
            Some(holdout) => validation_mae(&model, &std, holdout)?,
            None => None,
        };
        report.epochs.push(EpochRecord {
            epoch,
            e: sums.0 / n,
            c: sums.1 / n,
            r: sums.2 / n,
            total: sums.3 / n,
            val_mae,
        });
    }

    Ok((model, std, report))
}

/// Destandardized predictions for every sample, in dataset order.
pub fn predict(
    model: &Model,
    std: &StandardizationParams,
    samples: &Dataset,
) -> Result<Vec<(String, f64)>> {
    samples
        .samples()
        .iter()
        .map(|s| {
            let (pred, _) = model.forward(&s.features)?;
            Ok((s.id.clone(), std.destandardize(pred)))
        })
        .collect()
}

/// Mean absolute error over a holdout's exact-year samples, in years;
/// `None` when the holdout has no exact-year sample.
fn validation_mae(
    model: &Model,
    std: &StandardizationParams,
    holdout: &Dataset,
) -> Result<Option<f64>> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for idx in holdout.indices_of_kind(LabelKind::Year) {
        let sample = holdout.get(idx);
        let (pred, _) = model.forward(&sample.features)?;
        let year = std.destandardize(pred);
        sum += (year - sample.label.as_ref().unwrap().gaussian.mu).abs();
        count += 1;
    }
    Ok((count > 0).then(|| sum / count as f64))
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    learning_rate: f64,
}

impl Adam {
    fn new(dim: usize, cfg: &TrainConfig) -> Adam {
        Adam {
            m: vec![0.0; dim],
            v: vec![0.0; dim],
            t: 0,
            beta1: cfg.adam_beta1,
            beta2: cfg.adam_beta2,
            epsilon: cfg.adam_epsilon,
            learning_rate: cfg.learning_rate,
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let bias1 = 1.0 - self.beta1.powi(self.t as i32);
        let bias2 = 1.0 - self.beta2.powi(self.t as i32);
        for ((p, &g), (m, v)) in params
            .iter_mut()
            .zip(grad)
            .zip(self.m.iter_mut().zip(&mut self.v))
        {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / bias1;
            let v_hat = *v / bias2;
            *p -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
        }
    }
}
