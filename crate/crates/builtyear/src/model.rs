//! Adapter + regression head over frozen embeddings.
//!
//! The model is a composition f = h ∘ g: a trainable adapter g maps a
//! d-dimensional embedding to an m-dimensional feature vector, and an affine
//! head h maps that to a single standardized-year prediction. The adapter is
//! what the manifold regularizer acts on, so its output is returned from
//! every forward pass.
//!
//! Parameters live in one flat `Vec<f64>` in a canonical order (documented
//! on [`Model::params`]), which keeps the optimizer and the checkpoint
//! format trivial.

use std::fmt;
use std::io::{BufRead, BufReader};
use std::ops::Range;
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::label::GaussianLabel;

/// Shape of the trainable adapter g.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdapterKind {
    /// g(x) = x; the model degenerates to linear regression over raw
    /// embeddings (no trainable adapter parameters).
    Identity,
    /// Single affine map to `out` features.
    Affine { out: usize },
    /// One hidden tanh layer of width `hidden`, then an affine map to `out`.
    Mlp { hidden: usize, out: usize },
}

impl fmt::Display for AdapterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AdapterKind::Identity => write!(f, "identity"),
            AdapterKind::Affine { .. } => write!(f, "affine"),
            AdapterKind::Mlp { .. } => write!(f, "mlp"),
        }
    }
}

/// Input dimension plus adapter shape; fully determines the parameter count.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelConfig {
    pub input_dim: usize,
    pub adapter: AdapterKind,
}

impl ModelConfig {
    pub fn new(input_dim: usize, adapter: AdapterKind) -> Result<Self> {
        if input_dim == 0 {
            return Err(Error::InvalidArgument("input_dim must be at least 1".into()));
        }
        match adapter {
            AdapterKind::Identity => {}
            AdapterKind::Affine { out: 0 } => {
                return Err(Error::InvalidArgument("adapter output width must be at least 1".into()));
            }
            AdapterKind::Mlp { hidden, out } if hidden == 0 || out == 0 => {
                return Err(Error::InvalidArgument("adapter layer widths must be at least 1".into()));
            }
            _ => {}
        }
        Ok(ModelConfig { input_dim, adapter })
    }

    /// Dimension m of the adapter output.
    pub fn feature_dim(&self) -> usize {
        match self.adapter {
            AdapterKind::Identity => self.input_dim,
            AdapterKind::Affine { out } => out,
            AdapterKind::Mlp { out, .. } => out,
        }
    }

    pub fn param_count(&self) -> usize {
        Layout::of(self).total
    }
}

/// Offsets of the individual weight blocks inside the flat parameter vector.
/// Canonical order: adapter first layer (weights row-major, then biases),
/// adapter second layer for the MLP, head weights, head bias.
struct Layout {
    first_w: Range<usize>,
    first_b: Range<usize>,
    second_w: Range<usize>,
    second_b: Range<usize>,
    head_w: Range<usize>,
    head_b: usize,
    total: usize,
}

impl Layout {
    fn of(cfg: &ModelConfig) -> Layout {
        let d = cfg.input_dim;
        let m = cfg.feature_dim();
        let (fw, fb, sw, sb) = match cfg.adapter {
            AdapterKind::Identity => (0, 0, 0, 0),
            AdapterKind::Affine { out } => (out * d, out, 0, 0),
            AdapterKind::Mlp { hidden, out } => (hidden * d, hidden, out * hidden, out),
        };
        let first_w = 0..fw;
        let first_b = first_w.end..first_w.end + fb;
        let second_w = first_b.end..first_b.end + sw;
        let second_b = second_w.end..second_w.end + sb;
        let head_w = second_b.end..second_b.end + m;
        let head_b = head_w.end;
        Layout {
            first_w,
            first_b,
            second_w,
            second_b,
            head_w,
            head_b,
            total: head_b + 1,
        }
    }
}

/// Year standardization fitted on training label means.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StandardizationParams {
    pub mean: f64,
    pub scale: f64,
}

impl StandardizationParams {
    pub fn standardize(&self, year: f64) -> f64 {
        (year - self.mean) / self.scale
    }

    pub fn destandardize(&self, value: f64) -> f64 {
        value * self.scale + self.mean
    }

    /// Maps a label mean into standardized units while keeping sigma in
    /// years. The kernel widths of the pairwise loss are calibrated against
    /// standardized means, matching the weighting the combined loss was
    /// tuned for; rescaling sigma alongside mu would sharpen the kernels by
    /// the year scale and let the pairwise term drown out the MSE term.
    pub fn standardize_label(&self, label: GaussianLabel) -> GaussianLabel {
        GaussianLabel {
            mu: self.standardize(label.mu),
            sigma: label.sigma,
        }
    }
}

/// Mean and population standard deviation of the label means.
pub fn fit_standardization(labels: &[GaussianLabel]) -> Result<StandardizationParams> {
    if labels.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "standardization needs at least 2 labels, got {}",
            labels.len()
        )));
    }
    let n = labels.len() as f64;
    let mean = labels.iter().map(|l| l.mu).sum::<f64>() / n;
    let var = labels.iter().map(|l| (l.mu - mean).powi(2)).sum::<f64>() / n;
    let scale = var.sqrt();
    if scale <= 0.0 {
        return Err(Error::InvalidArgument(
            "all label means are identical; standardization scale would be zero".into(),
        ));
    }
    Ok(StandardizationParams { mean, scale })
}

/// Activations recorded by [`Model::forward_batch`] for a later backward
/// pass. Tied to the parameter version that produced it.
#[derive(Debug, Clone)]
pub struct BatchCache {
    version: u64,
    inputs: Vec<Vec<f64>>,
    hidden: Vec<Vec<f64>>,
    adapter_outputs: Vec<Vec<f64>>,
    predictions: Vec<f64>,
}

impl BatchCache {
    pub fn len(&self) -> usize {
        self.predictions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.predictions.is_empty()
    }

    pub fn predictions(&self) -> &[f64] {
        &self.predictions
    }

    pub fn adapter_outputs(&self) -> &[Vec<f64>] {
        &self.adapter_outputs
    }
}

/// The trainable regressor: flat parameters plus a version counter that
/// invalidates outstanding [`BatchCache`]s whenever parameters change.
#[derive(Debug, Clone)]
pub struct Model {
    config: ModelConfig,
    params: Vec<f64>,
    version: u64,
}

impl Model {
    /// Glorot-uniform weights (±√(6/(fan_in+fan_out))), zero biases, drawn
    /// from `rng` in canonical parameter order.
    pub fn init(config: ModelConfig, rng: &mut impl Rng) -> Model {
        let layout = Layout::of(&config);
        let mut params = vec![0.0; layout.total];
        let d = config.input_dim;
        let m = config.feature_dim();
        match config.adapter {
            AdapterKind::Identity => {}
            AdapterKind::Affine { out } => {
                fill_glorot(&mut params[layout.first_w.clone()], d, out, rng);
            }
            AdapterKind::Mlp { hidden, out } => {
                fill_glorot(&mut params[layout.first_w.clone()], d, hidden, rng);
                fill_glorot(&mut params[layout.second_w.clone()], hidden, out, rng);
            }
        }
        fill_glorot(&mut params[layout.head_w.clone()], m, 1, rng);
        Model {
            config,
            params,
            version: 0,
        }
    }

    /// Builds a model from explicit parameters in canonical order.
    pub fn from_params(config: ModelConfig, params: Vec<f64>) -> Result<Model> {
        let expected = config.param_count();
        if params.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                got: params.len(),
            });
        }
        Ok(Model {
            config,
            params,
            version: 0,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// Flat parameters in canonical order: adapter first-layer weights
    /// (row-major, one row per output unit), first-layer biases, second-layer
    /// weights and biases for the MLP, head weights, head bias.
    pub fn params(&self) -> &[f64] {
        &self.params
    }

    /// Mutable access for the optimizer. Bumps the parameter version, so any
    /// cache recorded before this call becomes stale.
    pub fn params_mut(&mut self) -> &mut [f64] {
        self.version += 1;
        &mut self.params
    }

    /// Single-sample forward pass: (standardized prediction, adapter output).
    pub fn forward(&self, features: &[f64]) -> Result<(f64, Vec<f64>)> {
        if features.len() != self.config.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.config.input_dim,
                got: features.len(),
            });
        }
        let (v, _) = self.adapter_forward(features);
        let prediction = self.head_forward(&v);
        Ok((prediction, v))
    }

    /// Forward pass over a batch, recording the activations needed by
    /// [`Model::backward`].
    pub fn forward_batch(&self, batch: &[&[f64]]) -> Result<BatchCache> {
        let mut cache = BatchCache {
            version: self.version,
            inputs: Vec::with_capacity(batch.len()),
            hidden: Vec::with_capacity(batch.len()),
            adapter_outputs: Vec::with_capacity(batch.len()),
            predictions: Vec::with_capacity(batch.len()),
        };
        for &features in batch {
            if features.len() != self.config.input_dim {
                return Err(Error::DimensionMismatch {
                    expected: self.config.input_dim,
                    got: features.len(),
                });
            }
            let (v, hidden) = self.adapter_forward(features);
            cache.predictions.push(self.head_forward(&v));
            cache.inputs.push(features.to_vec());
            cache.hidden.push(hidden);
            cache.adapter_outputs.push(v);
        }
        Ok(cache)
    }

    /// Accumulates d ℓ/d params from per-sample upstream gradients:
    /// `grad_predictions[s]` is d ℓ/d prediction_s and `grad_adapter[s]` is
    /// d ℓ/d adapter_output_s (the regularizer path). Fails with
    /// [`Error::StaleCache`] if the parameters changed since the cache was
    /// recorded.
    pub fn backward(
        &self,
        cache: &BatchCache,
        grad_predictions: &[f64],
        grad_adapter: &[Vec<f64>],
    ) -> Result<Vec<f64>> {
        if cache.version != self.version {
            return Err(Error::StaleCache);
        }
        let n = cache.len();
        if grad_predictions.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: grad_predictions.len(),
            });
        }
        if grad_adapter.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: grad_adapter.len(),
            });
        }
        let m = self.config.feature_dim();
        let d = self.config.input_dim;
        let layout = Layout::of(&self.config);
        let mut grad = vec![0.0; layout.total];
        let head_w = &self.params[layout.head_w.clone()];

        for s in 0..n {
            if grad_adapter[s].len() != m {
                return Err(Error::DimensionMismatch {
                    expected: m,
                    got: grad_adapter[s].len(),
                });
            }
            let g_pred = grad_predictions[s];
            let v = &cache.adapter_outputs[s];
            let x = &cache.inputs[s];

            for k in 0..m {
                grad[layout.head_w.start + k] += g_pred * v[k];
            }
            grad[layout.head_b] += g_pred;

            // Adapter output receives the head path plus the direct
            // (regularizer) path.
            let g_v: Vec<f64> = (0..m)
                .map(|k| g_pred * head_w[k] + grad_adapter[s][k])
                .collect();

            match self.config.adapter {
                AdapterKind::Identity => {}
                AdapterKind::Affine { out } => {
                    for k in 0..out {
                        for j in 0..d {
                            grad[layout.first_w.start + k * d + j] += g_v[k] * x[j];
                        }
                        grad[layout.first_b.start + k] += g_v[k];
                    }
                }
                AdapterKind::Mlp { hidden, out } => {
                    let a1 = &cache.hidden[s];
                    let w2 = &self.params[layout.second_w.clone()];
                    let mut g_z1 = vec![0.0; hidden];
                    for k in 0..out {
                        for h in 0..hidden {
                            grad[layout.second_w.start + k * hidden + h] += g_v[k] * a1[h];
                            g_z1[h] += g_v[k] * w2[k * hidden + h];
                        }
                        grad[layout.second_b.start + k] += g_v[k];
                    }
                    for h in 0..hidden {
                        g_z1[h] *= 1.0 - a1[h] * a1[h];
                        for j in 0..d {
                            grad[layout.first_w.start + h * d + j] += g_z1[h] * x[j];
                        }
                        grad[layout.first_b.start + h] += g_z1[h];
                    }
                }
            }
        }
        Ok(grad)
    }

    /// Returns (adapter output, hidden activations — empty unless MLP).
    fn adapter_forward(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let layout = Layout::of(&self.config);
        let d = self.config.input_dim;
        match self.config.adapter {
            AdapterKind::Identity => (x.to_vec(), Vec::new()),
            AdapterKind::Affine { out } => {
                let w = &self.params[layout.first_w.clone()];
                let b = &self.params[layout.first_b.clone()];
                let v = (0..out)
                    .map(|k| b[k] + dot(&w[k * d..(k + 1) * d], x))
                    .collect();
                (v, Vec::new())
            }
            AdapterKind::Mlp { hidden, out } => {
                let w1 = &self.params[layout.first_w.clone()];
                let b1 = &self.params[layout.first_b.clone()];
                let a1: Vec<f64> = (0..hidden)
                    .map(|h| (b1[h] + dot(&w1[h * d..(h + 1) * d], x)).tanh())
                    .collect();
                let w2 = &self.params[layout.second_w.clone()];
                let b2 = &self.params[layout.second_b.clone()];
                let v = (0..out)
                    .map(|k| b2[k] + dot(&w2[k * hidden..(k + 1) * hidden], &a1))
                    .collect();
                (v, a1)
            }
        }
    }

    fn head_forward(&self, v: &[f64]) -> f64 {
        let layout = Layout::of(&self.config);
        self.params[layout.head_b] + dot(&self.params[layout.head_w], v)
    }

    /// Writes the model and its standardization to a flat text checkpoint.
    /// Floats use shortest round-trip formatting, so a reload recovers the
    /// exact bit pattern of every parameter.
    pub fn save(&self, std: &StandardizationParams, path: &Path) -> Result<()> {
        let mut out = String::new();
        out.push_str("builtyear-model v1\n");
        out.push_str(&format!("adapter {}\n", self.config.adapter));
        out.push_str(&format!("input_dim {}\n", self.config.input_dim));
        if let AdapterKind::Mlp { hidden, .. } = self.config.adapter {
            out.push_str(&format!("hidden_dim {hidden}\n"));
        }
        out.push_str(&format!("feature_dim {}\n", self.config.feature_dim()));
        out.push_str(&format!("standardization {} {}\n", std.mean, std.scale));
        out.push_str(&format!("params {}\n", self.params.len()));
        for p in &self.params {
            out.push_str(&format!("{p}\n"));
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    /// Loads a checkpoint written by [`Model::save`].
    pub fn load(path: &Path) -> Result<(Model, StandardizationParams)> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut lines = BufReader::new(file).lines().enumerate();
        let mut next = |what: &str| -> Result<(usize, String)> {
            match lines.next() {
                Some((idx, Ok(line))) => Ok((idx + 1, line)),
                Some((idx, Err(e))) => Err(Error::parse(path, idx + 1, format!("{e}"))),
                None => Err(Error::parse(path, 0, format!("unexpected end of file, expected {what}"))),
            }
        };

        let (line_no, header) = next("header")?;
        if header != "builtyear-model v1" {
            return Err(Error::parse(path, line_no, format!("unrecognized header {header:?}")));
        }
        let mut field = |key: &str| -> Result<(usize, String)> {
            let (line_no, line) = next(key)?;
            match line.strip_prefix(key).and_then(|rest| rest.strip_prefix(' ')) {
                Some(rest) => Ok((line_no, rest.to_string())),
                None => Err(Error::parse(path, line_no, format!("expected `{key} ...`, got {line:?}"))),
            }
        };

        let (adapter_line, adapter_name) = field("adapter")?;
        let (dim_line, input_dim) = field("input_dim")?;
        let input_dim: usize = input_dim
            .parse()
            .map_err(|_| Error::parse(path, dim_line, format!("invalid input_dim {input_dim:?}")))?;
        let hidden = if adapter_name == "mlp" {
            let (hid_line, hidden) = field("hidden_dim")?;
            Some(hidden.parse::<usize>().map_err(|_| {
                Error::parse(path, hid_line, format!("invalid hidden_dim {hidden:?}"))
            })?)
        } else {
            None
        };
        let (feat_line, feature_dim) = field("feature_dim")?;
        let feature_dim: usize = feature_dim.parse().map_err(|_| {
            Error::parse(path, feat_line, format!("invalid feature_dim {feature_dim:?}"))
        })?;
        let adapter = match adapter_name.as_str() {
            "identity" => AdapterKind::Identity,
            "affine" => AdapterKind::Affine { out: feature_dim },
            "mlp" => AdapterKind::Mlp {
                hidden: hidden.unwrap(),
                out: feature_dim,
            },
            other => {
                return Err(Error::parse(path, adapter_line, format!("unknown adapter kind {other:?}")));
            }
        };
        let config = ModelConfig::new(input_dim, adapter)
            .map_err(|e| Error::parse(path, adapter_line, e.to_string()))?;
        if config.feature_dim() != feature_dim {
            return Err(Error::parse(
                path,
                feat_line,
                format!("feature_dim {feature_dim} does not match adapter shape"),
            ));
        }

        let (std_line, std_fields) = field("standardization")?;
        let parts: Vec<&str> = std_fields.split(' ').collect();
        if parts.len() != 2 {
            return Err(Error::parse(path, std_line, "expected `standardization <mean> <scale>`"));
        }
        let mean: f64 = parts[0]
            .parse()
            .map_err(|_| Error::parse(path, std_line, format!("invalid mean {:?}", parts[0])))?;
        let scale: f64 = parts[1]
            .parse()
            .map_err(|_| Error::parse(path, std_line, format!("invalid scale {:?}", parts[1])))?;
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::parse(path, std_line, format!("scale must be positive, got {scale}")));
        }

        let (count_line, count) = field("params")?;
        let count: usize = count
            .parse()
            .map_err(|_| Error::parse(path, count_line, format!("invalid parameter count {count:?}")))?;
        if count != config.param_count() {
            return Err(Error::parse(
                path,
                count_line,
                format!("parameter count {count} does not match configuration ({} expected)", config.param_count()),
            ));
        }
        let mut params = Vec::with_capacity(count);
        for _ in 0..count {
            let (p_line, text) = next("parameter")?;
            let value: f64 = text
                .parse()
                .map_err(|_| Error::parse(path, p_line, format!("invalid parameter {text:?}")))?;
            params.push(value);
        }
        Ok((Model::from_params(config, params)?, StandardizationParams { mean, scale }))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

fn fill_glorot(slot: &mut [f64], fan_in: usize, fan_out: usize, rng: &mut impl Rng) {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    for w in slot {
        *w = rng.random_range(-limit..=limit);
    }
}
