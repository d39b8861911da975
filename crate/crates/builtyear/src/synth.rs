//! Synthetic corpus generator with known ground truth.
//!
//! True years are affine in the features (plus optional Gaussian noise), so
//! a closed-form least-squares oracle exists for any model evaluation. The
//! generator fabricates a contiguous dynasty table over [600, 1900], then
//! labels a configurable mix of samples with exact years, century ordinals,
//! or dynasty names; the rest stay unlabelled. The hidden (weights, bias,
//! per-sample true year) mapping is returned — and written as `truth.csv` —
//! for oracle checks only, never fed to training.

use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::dataset::{Dataset, DynastyTable, LabelValue, Sample, SampleLabel};
use crate::error::{Error, Result};
use crate::label::{encode_century, encode_dynasty, encode_year, GaussianLabel, YEAR_SIGMA};

/// Years are clipped to this span, matching the range the labels can express.
const YEAR_MIN: f64 = 600.0;
const YEAR_MAX: f64 = 1900.0;

/// Dynasty durations, in years.
const SPAN_MIN: i64 = 40;
const SPAN_MAX: i64 = 700;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthConfig {
    pub dim: usize,
    pub n_labelled: usize,
    pub n_unlabelled: usize,
    /// Fractions of labelled samples receiving (year, century, dynasty)
    /// labels; nonnegative, summing to 1.
    pub mix: (f64, f64, f64),
    /// Standard deviation of the noise added to the true year, in years.
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            dim: 32,
            n_labelled: 500,
            n_unlabelled: 500,
            mix: (0.6, 0.2, 0.2),
            noise_sigma: 5.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    fn validate(&self) -> Result<()> {
        if self.dim < 2 {
            return Err(Error::InvalidArgument(format!(
                "dim must be at least 2, got {}",
                self.dim
            )));
        }
        if self.n_labelled + self.n_unlabelled == 0 {
            return Err(Error::InvalidArgument("corpus would be empty".into()));
        }
        let (y, c, d) = self.mix;
        if !(y >= 0.0 && c >= 0.0 && d >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "label mix fractions must be nonnegative, got ({y}, {c}, {d})"
            )));
        }
        if ((y + c + d) - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "label mix fractions must sum to 1, got {}",
                y + c + d
            )));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "noise_sigma must be nonnegative, got {}",
                self.noise_sigma
            )));
        }
        Ok(())
    }
}

/// The generator's hidden mapping: true year = weights·features + bias
/// (+ noise, then clipped), recorded per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthTruth {
    pub weights: Vec<f64>,
    pub bias: f64,
    /// (id, true year) for every sample, in dataset order.
    pub years: Vec<(String, f64)>,
}

impl SynthTruth {
    /// Writes `id,true_year` rows (with that header).
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::from("id,true_year\n");
        for (id, year) in &self.years {
            out.push_str(&format!("{id},{year}\n"));
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

/// Reads a `truth.csv` back as an evaluation dataset: every row becomes an
/// exact-year sample (with placeholder features) whose label mean is the
/// exact true year from the file.
pub fn load_truth(path: &Path) -> Result<Dataset> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines().enumerate();
    match lines.next() {
        Some((_, Ok(header))) if header == "id,true_year" => {}
        Some((_, Ok(header))) => {
            return Err(Error::parse(path, 1, format!("expected header `id,true_year`, got {header:?}")));
        }
        Some((_, Err(e))) => return Err(Error::io(path, e)),
        None => return Err(Error::parse(path, 1, "empty truth file")),
    }
    let mut samples = Vec::new();
    for (idx, line) in lines {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line_no = idx + 1;
        let mut fields = line.split(',');
        let (id, year) = match (fields.next(), fields.next(), fields.next()) {
            (Some(id), Some(year), None) if !id.is_empty() => (id, year),
            _ => {
                return Err(Error::parse(path, line_no, format!("expected `id,true_year`, got {line:?}")));
            }
        };
        let year: f64 = year.parse().map_err(|_| {
            Error::parse(path, line_no, format!("invalid true year {year:?}"))
        })?;
        if !year.is_finite() {
            return Err(Error::parse(path, line_no, format!("true year must be finite, got {year}")));
        }
        samples.push(Sample {
            id: id.to_string(),
            features: vec![0.0],
            label: Some(SampleLabel {
                value: LabelValue::Year(year.round() as i64),
                gaussian: GaussianLabel { mu: year, sigma: YEAR_SIGMA },
            }),
            quality: None,
        });
    }
    Dataset::new(samples)
}

/// Generates the corpus, its hidden truth, and the dynasty table it was
/// labelled against. Fully deterministic given the seed.
pub fn generate(cfg: &SynthConfig) -> Result<(Dataset, SynthTruth, DynastyTable)> {
    cfg.validate()?;
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);

    let dynasties = generate_dynasties(&mut rng)?;

    // Hidden affine map: a random direction scaled so that unit-normal
    // features spread predictions over a few centuries, and an intercept
    // placed mid-range.
    let direction: Vec<f64> = (0..cfg.dim).map(|_| rng.sample(StandardNormal)).collect();
    let norm = direction.iter().map(|w| w * w).sum::<f64>().sqrt();
    let weights: Vec<f64> = direction.iter().map(|w| 180.0 * w / norm).collect();
    let bias = rng.random_range(1150.0..1350.0);

    let total = cfg.n_labelled + cfg.n_unlabelled;
    let mut features = Vec::with_capacity(total);
    let mut years = Vec::with_capacity(total);
    for i in 0..total {
        let x: Vec<f64> = (0..cfg.dim).map(|_| rng.sample(StandardNormal)).collect();
        let noise: f64 = rng.sample::<f64, _>(StandardNormal) * cfg.noise_sigma;
        let year = (dot(&weights, &x) + bias + noise).clamp(YEAR_MIN, YEAR_MAX);
        years.push((format!("s{i:05}"), year));
        features.push(x);
    }

    let mut kinds = apportion_kinds(cfg.n_labelled, cfg.mix);
    kinds.shuffle_with(&mut rng);

    let mut samples = Vec::with_capacity(total);
    for i in 0..total {
        let (id, year) = &years[i];
        let label = if i < cfg.n_labelled {
            Some(make_label(kinds.kinds[i], *year, &dynasties)?)
        } else {
            None
        };
        samples.push(Sample {
            id: id.clone(),
            features: features[i].clone(),
            label,
            quality: None,
        });
    }

    let truth = SynthTruth { weights, bias, years };
    Ok((Dataset::new(samples)?, truth, dynasties))
}

/// Contiguous spans covering [600, 1900], each 40–700 years long.
fn generate_dynasties(rng: &mut ChaCha20Rng) -> Result<DynastyTable> {
    let mut entries = Vec::new();
    let mut start = YEAR_MIN as i64;
    let end = YEAR_MAX as i64;
    while start < end {
        let remaining = end - start;
        // Closing out directly (or capping the draw) keeps the remainder
        // at least SPAN_MIN, so every span stays within bounds.
        let span = if remaining <= SPAN_MAX {
            remaining
        } else {
            rng.random_range(SPAN_MIN..=SPAN_MAX.min(remaining - SPAN_MIN))
        };
        entries.push((format!("era{:02}", entries.len() + 1), start, start + span));
        start += span;
    }
    DynastyTable::new(entries)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Year,
    Century,
    Dynasty,
}

struct KindAssignment {
    kinds: Vec<Kind>,
}

impl KindAssignment {
    fn shuffle_with(&mut self, rng: &mut ChaCha20Rng) {
        use rand::seq::SliceRandom;
        self.kinds.shuffle(rng);
    }
}

/// Largest-remainder apportionment of `n` labels across the three kinds, so
/// the counts are exact rather than expected values.
fn apportion_kinds(n: usize, mix: (f64, f64, f64)) -> KindAssignment {
    let quotas = [mix.0 * n as f64, mix.1 * n as f64, mix.2 * n as f64];
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for k in 0..n - assigned {
        counts[order[k % 3]] += 1;
    }
    let mut kinds = Vec::with_capacity(n);
    for (kind, &count) in [Kind::Year, Kind::Century, Kind::Dynasty].iter().zip(&counts) {
        kinds.extend(std::iter::repeat_n(*kind, count));
    }
    KindAssignment { kinds }
}

fn make_label(kind: Kind, year: f64, dynasties: &DynastyTable) -> Result<SampleLabel> {
    match kind {
        Kind::Year => {
            let rounded = year.round() as i64;
            Ok(SampleLabel {
                value: LabelValue::Year(rounded),
                gaussian: encode_year(rounded),
            })
        }
        Kind::Century => {
            // Century n covers years 100(n−1)+1 ..= 100n, so the ordinal of
            // a (positive) year is its hundred rounded up.
            let ordinal = (year / 100.0).ceil() as i64;
            Ok(SampleLabel {
                value: LabelValue::Century(ordinal),
                gaussian: encode_century(ordinal)?,
            })
        }
        Kind::Dynasty => {
            let (name, start, end) = dynasties
                .entries()
                .iter()
                .find(|(_, start, end)| (*start as f64) <= year && year <= (*end as f64))
                .map(|(name, start, end)| (name.clone(), *start, *end))
                .ok_or_else(|| {
                    Error::InvalidArgument(format!("no dynasty contains year {year}"))
                })?;
            Ok(SampleLabel {
                value: LabelValue::Dynasty(name),
                gaussian: encode_dynasty(start, end)?,
            })
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::LabelKind;

    fn small_config() -> SynthConfig {
        SynthConfig {
            dim: 4,
            n_labelled: 60,
            n_unlabelled: 20,
            mix: (0.6, 0.2, 0.2),
            noise_sigma: 5.0,
            seed: 17,
        }
    }

    #[test]
    fn pure_year_mix_with_zero_noise_labels_the_rounded_truth() {
        let cfg = SynthConfig {
            mix: (1.0, 0.0, 0.0),
            noise_sigma: 0.0,
            ..small_config()
        };
        let (ds, truth, _) = generate(&cfg).unwrap();
        for (i, sample) in ds.samples().iter().enumerate().take(cfg.n_labelled) {
            let label = sample.label.as_ref().expect("labelled half");
            assert_eq!(sample.label_kind(), Some(LabelKind::Year));
            let true_year = truth.years[i].1;
            match label.value {
                LabelValue::Year(y) => assert_eq!(y, true_year.round() as i64),
                _ => unreachable!(),
            }
            assert!((label.gaussian.mu - true_year).abs() <= 0.5);
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = small_config();
        let (ds_a, truth_a, dyn_a) = generate(&cfg).unwrap();
        let (ds_b, truth_b, dyn_b) = generate(&cfg).unwrap();
        assert_eq!(ds_a.samples(), ds_b.samples());
        assert_eq!(truth_a, truth_b);
        assert_eq!(dyn_a.entries(), dyn_b.entries());

        let other = generate(&SynthConfig { seed: 18, ..cfg }).unwrap();
        assert_ne!(truth_a.years, other.1.years);
    }

    #[test]
    fn label_mix_counts_follow_largest_remainder_apportionment() {
        let cfg = SynthConfig {
            n_labelled: 500,
            n_unlabelled: 0,
            ..small_config()
        };
        let (ds, _, _) = generate(&cfg).unwrap();
        let count = |kind| ds.indices_of_kind(kind).len();
        assert_eq!(count(LabelKind::Year), 300);
        assert_eq!(count(LabelKind::Century), 100);
        assert_eq!(count(LabelKind::Dynasty), 100);

        // A mix that does not divide evenly still assigns every label.
        let cfg = SynthConfig {
            n_labelled: 7,
            mix: (1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0),
            ..cfg
        };
        let (ds, _, _) = generate(&cfg).unwrap();
        let counts = [
            count_in(&ds, LabelKind::Year),
            count_in(&ds, LabelKind::Century),
            count_in(&ds, LabelKind::Dynasty),
        ];
        assert_eq!(counts.iter().sum::<usize>(), 7);
        assert!(counts.iter().all(|&c| c == 2 || c == 3));
    }

    fn count_in(ds: &Dataset, kind: LabelKind) -> usize {
        ds.indices_of_kind(kind).len()
    }

    #[test]
    fn rejects_invalid_configurations() {
        assert!(generate(&SynthConfig { dim: 1, ..small_config() }).is_err());
        assert!(generate(&SynthConfig { mix: (0.5, 0.2, 0.2), ..small_config() }).is_err());
        assert!(generate(&SynthConfig { mix: (1.2, -0.1, -0.1), ..small_config() }).is_err());
        assert!(generate(&SynthConfig { noise_sigma: -1.0, ..small_config() }).is_err());
        assert!(generate(&SynthConfig {
            n_labelled: 0,
            n_unlabelled: 0,
            ..small_config()
        })
        .is_err());
    }

    #[test]
    fn range_labels_contain_the_hidden_true_year() {
        let cfg = SynthConfig {
            n_labelled: 300,
            mix: (0.0, 0.5, 0.5),
            noise_sigma: 30.0,
            seed: 23,
            ..small_config()
        };
        let (ds, truth, dynasties) = generate(&cfg).unwrap();
        for (i, sample) in ds.samples().iter().enumerate().take(cfg.n_labelled) {
            let true_year = truth.years[i].1;
            match &sample.label.as_ref().unwrap().value {
                LabelValue::Century(n) => {
                    let hi = 100.0 * *n as f64;
                    assert!(
                        hi - 100.0 <= true_year && true_year <= hi,
                        "century {n} does not contain {true_year}"
                    );
                }
                LabelValue::Dynasty(name) => {
                    let (start, end) = dynasties.get(name).unwrap();
                    assert!(
                        start as f64 <= true_year && true_year <= end as f64,
                        "dynasty {name} ({start}, {end}) does not contain {true_year}"
                    );
                }
                LabelValue::Year(_) => unreachable!("mix has no exact-year fraction"),
            }
        }
    }

    #[test]
    fn dynasty_spans_partition_the_year_range() {
        for seed in 0..20 {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let table = generate_dynasties(&mut rng).unwrap();
            let entries = table.entries();
            assert_eq!(entries.first().unwrap().1, 600);
            assert_eq!(entries.last().unwrap().2, 1900);
            for pair in entries.windows(2) {
                assert_eq!(pair[0].2, pair[1].1, "gap or overlap between dynasties");
            }
            for (name, start, end) in entries {
                let span = end - start;
                assert!((SPAN_MIN..=SPAN_MAX).contains(&span), "{name} spans {span} years");
            }
        }
    }

    #[test]
    fn unlabelled_samples_carry_no_label_and_years_stay_in_range() {
        let cfg = SynthConfig { noise_sigma: 400.0, ..small_config() };
        let (ds, truth, _) = generate(&cfg).unwrap();
        for sample in &ds.samples()[cfg.n_labelled..] {
            assert!(sample.label.is_none());
        }
        for (_, year) in &truth.years {
            assert!((YEAR_MIN..=YEAR_MAX).contains(year));
        }
        assert_eq!(ds.len(), cfg.n_labelled + cfg.n_unlabelled);
    }

    #[test]
    fn truth_file_round_trips_exactly() {
        let cfg = small_config();
        let (_, truth, _) = generate(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("truth.csv");
        truth.save(&path).unwrap();
        let loaded = load_truth(&path).unwrap();
        assert_eq!(loaded.len(), truth.years.len());
        for (sample, (id, year)) in loaded.samples().iter().zip(&truth.years) {
            assert_eq!(&sample.id, id);
            assert_eq!(sample.label.as_ref().unwrap().gaussian.mu, *year);
        }

        std::fs::write(&path, "wrong,header\n").unwrap();
        assert!(load_truth(&path).is_err());
    }
}
