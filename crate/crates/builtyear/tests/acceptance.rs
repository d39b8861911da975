//! End-to-end acceptance checks, one test per criterion. Each test prints a
//! single `[PASS]`/`[FAIL]` line (run with `--nocapture` to see them all):
//!
//! 1. label-encoding golden values
//! 2. pairwise-matrix properties on random instances
//! 3. KL divergence properties
//! 4. full-loss analytic gradients vs. central finite differences
//! 5. synthetic end-to-end training with the full loss and its ablations
//! 6. nearest-neighbour baseline sanity
//! 7. statistics ops and byte-identical CLI reruns

use std::process::Command;
use std::time::{Duration, Instant};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use builtyear::dataset::LabelKind;
use builtyear::label::GaussianLabel;
use builtyear::loss::{
    conditional_p, conditional_q, kl_alignment_loss, kl_loss, mse_loss, regularizer,
};
use builtyear::model::{fit_standardization, AdapterKind, Model, ModelConfig};
use builtyear::synth::{generate, SynthConfig};
use builtyear::trainer::{predict, train, TrainConfig};
use builtyear::{encode_century, encode_dynasty, encode_year, LossConfig};

/// Prints the verdict line for a criterion, then fails the test if needed.
fn verdict(criterion: &str, ok: bool, detail: &str) {
    let tag = if ok { "[PASS]" } else { "[FAIL]" };
    println!("{tag} {criterion}: {detail}");
    assert!(ok, "{criterion}: {detail}");
}

fn within_budget(start: Instant, budget: Duration) -> (bool, f64) {
    let elapsed = start.elapsed();
    (elapsed <= budget, elapsed.as_secs_f64())
}

#[test]
fn criterion_1_label_encoding_goldens() {
    let start = Instant::now();
    let kamakura = encode_dynasty(1185, 1333).unwrap();
    let tenth = encode_century(10).unwrap();
    let fifteenth = encode_century(15).unwrap();
    let year = encode_year(1091);

    let mut ok = true;
    ok &= kamakura.mu == 1259.0 && kamakura.sigma == 37.0;
    ok &= tenth.mu == 950.0 && tenth.sigma == 25.0;
    ok &= fifteenth.mu == 1450.0;
    ok &= year.mu == 1091.0 && year.sigma == 2.5;
    let (in_time, secs) = within_budget(start, Duration::from_secs(1));
    ok &= in_time;

    verdict(
        "criterion 1 (label-encoding goldens)",
        ok,
        &format!(
            "Kamakura -> ({}, {}), 10th century -> ({}, {}), 15th century mu = {}, \
             year sigma = {}, {secs:.3}s",
            kamakura.mu, kamakura.sigma, tenth.mu, tenth.sigma, fifteenth.mu, year.sigma
        ),
    );
}

/// Random labels, sigmas and predictions for the property sweeps.
fn random_instance(rng: &mut ChaCha20Rng) -> (Vec<GaussianLabel>, Vec<f64>, Vec<f64>) {
    let n = rng.random_range(2..=32);
    let labels: Vec<GaussianLabel> = (0..n)
        .map(|_| GaussianLabel {
            mu: rng.random_range(600.0..1900.0),
            sigma: rng.random_range(0.5..50.0),
        })
        .collect();
    let sigmas: Vec<f64> = labels.iter().map(|l| l.sigma).collect();
    let predictions: Vec<f64> = (0..n).map(|_| rng.random_range(600.0..1900.0)).collect();
    (labels, sigmas, predictions)
}

#[test]
fn criterion_2_pairwise_matrix_properties() {
    let start = Instant::now();
    let mut rng = ChaCha20Rng::seed_from_u64(2022);
    let mut ok = true;
    let mut checked = 0usize;

    for _ in 0..200 {
        let (labels, sigmas, predictions) = random_instance(&mut rng);
        let n = labels.len();
        for matrix in [
            conditional_p(&labels).unwrap(),
            conditional_q(&predictions, &sigmas).unwrap(),
        ] {
            for i in 0..n {
                let row = matrix.row(i);
                let sum: f64 = row.iter().sum();
                ok &= (sum - 1.0).abs() <= 1e-9;
                ok &= row[i] == 0.0;
                ok &= row.iter().all(|&v| (0.0..=1.0).contains(&v));
            }
            checked += 1;
        }
    }
    let (in_time, secs) = within_budget(start, Duration::from_secs(5));
    ok &= in_time;

    verdict(
        "criterion 2 (pairwise-matrix properties)",
        ok,
        &format!("{checked} matrices over 200 instances: rows sum to 1 +- 1e-9, zero diagonals, entries in [0,1], {secs:.3}s"),
    );
}

#[test]
fn criterion_3_kl_properties() {
    let start = Instant::now();
    let mut rng = ChaCha20Rng::seed_from_u64(3033);
    let mut ok = true;
    let mut worst_self = 0.0f64;
    let mut worst_floor = 0.0f64;

    for _ in 0..200 {
        let (labels, sigmas, predictions) = random_instance(&mut rng);
        let p = conditional_p(&labels).unwrap();
        let q = conditional_q(&predictions, &sigmas).unwrap();

        let (self_div, _) = kl_loss(&p, &p).unwrap();
        ok &= self_div.abs() < 1e-9;
        worst_self = worst_self.max(self_div.abs());

        let (div, _) = kl_loss(&p, &q).unwrap();
        ok &= div >= -1e-9;
        worst_floor = worst_floor.min(div);

        // Predictions sitting exactly on the label means reproduce p.
        let mus: Vec<f64> = labels.iter().map(|l| l.mu).collect();
        let q_at_mu = conditional_q(&mus, &sigmas).unwrap();
        let (at_mu, _) = kl_loss(&p, &q_at_mu).unwrap();
        ok &= at_mu.abs() < 1e-9;
        let (fused_at_mu, _) = kl_alignment_loss(&labels, &mus).unwrap();
        ok &= fused_at_mu.abs() < 1e-9;
    }
    let (in_time, secs) = within_budget(start, Duration::from_secs(5));
    ok &= in_time;

    verdict(
        "criterion 3 (KL properties)",
        ok,
        &format!("200 instances: |C(p,p)| <= {worst_self:.2e}, min C = {worst_floor:.2e} >= -1e-9, C < 1e-9 at predictions = label means, {secs:.3}s"),
    );
}

/// The combined loss and its analytic parameter gradient for a fixed batch,
/// assembled the same way the trainer does it.
fn full_loss_and_grad(
    model: &Model,
    features: &[Vec<f64>],
    labels_std: &[GaussianLabel],
    exact_positions: &[usize],
    targets_std: &[f64],
    n_labelled: usize,
    cfg: &LossConfig,
    want_grad: bool,
) -> (f64, Vec<f64>) {
    let refs: Vec<&[f64]> = features.iter().map(Vec::as_slice).collect();
    let cache = model.forward_batch(&refs).unwrap();
    let predictions = cache.predictions();
    let n = features.len();

    let exact_preds: Vec<f64> = exact_positions.iter().map(|&p| predictions[p]).collect();
    let (e, e_grad) = mse_loss(&exact_preds, targets_std).unwrap();
    let labelled_preds: Vec<f64> = predictions[..n_labelled].to_vec();
    let (c, c_grad) = kl_alignment_loss(labels_std, &labelled_preds).unwrap();
    let adapter = cache.adapter_outputs();
    let lab_feats: Vec<&[f64]> = adapter[..n_labelled].iter().map(Vec::as_slice).collect();
    let unl_feats: Vec<&[f64]> = adapter[n_labelled..].iter().map(Vec::as_slice).collect();
    let (r, r_lab, r_unl) = regularizer(&lab_feats, &unl_feats, cfg.length_scale).unwrap();

    let total = cfg.alpha * e + cfg.beta * c + cfg.gamma * r;
    if !want_grad {
        return (total, Vec::new());
    }

    let mut grad_pred = vec![0.0; n];
    for (k, &pos) in exact_positions.iter().enumerate() {
        grad_pred[pos] += cfg.alpha * e_grad[k];
    }
    for (pos, g) in c_grad.into_iter().enumerate() {
        grad_pred[pos] += cfg.beta * g;
    }
    let m = adapter[0].len();
    let mut grad_adapter = vec![vec![0.0; m]; n];
    for (pos, g) in r_lab.into_iter().enumerate() {
        for (k, v) in g.into_iter().enumerate() {
            grad_adapter[pos][k] += cfg.gamma * v;
        }
    }
    for (pos, g) in r_unl.into_iter().enumerate() {
        for (k, v) in g.into_iter().enumerate() {
            grad_adapter[n_labelled + pos][k] += cfg.gamma * v;
        }
    }
    let grad = model.backward(&cache, &grad_pred, &grad_adapter).unwrap();
    (total, grad)
}

#[test]
fn criterion_4_full_loss_gradient_oracle() {
    let start = Instant::now();
    let dim = 16;
    let mut rng = ChaCha20Rng::seed_from_u64(4044);

    // 8 labelled samples of mixed kinds plus 8 unlabelled ones.
    let labels = vec![
        encode_year(700),
        encode_year(1099),
        encode_year(1500),
        encode_year(1867),
        encode_century(9).unwrap(),
        encode_century(13).unwrap(),
        encode_dynasty(1185, 1333).unwrap(),
        encode_dynasty(600, 800).unwrap(),
    ];
    let exact_positions = [0usize, 1, 2, 3];
    let features: Vec<Vec<f64>> = (0..16)
        .map(|_| (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect())
        .collect();

    let std = fit_standardization(&labels).unwrap();
    let labels_std: Vec<GaussianLabel> = labels.iter().map(|&l| std.standardize_label(l)).collect();
    let targets_std: Vec<f64> = exact_positions.iter().map(|&i| labels_std[i].mu).collect();

    let config = ModelConfig::new(dim, AdapterKind::Mlp { hidden: 8, out: 8 }).unwrap();
    let mut model = Model::init(config, &mut rng);
    let cfg = LossConfig::default();

    let (_, analytic) = full_loss_and_grad(
        &model, &features, &labels_std, &exact_positions, &targets_std, 8, &cfg, true,
    );

    let step = 1e-5;
    let mut ok = true;
    let mut worst = 0.0f64;
    for k in 0..analytic.len() {
        let original = model.params()[k];
        model.params_mut()[k] = original + step;
        let (plus, _) = full_loss_and_grad(
            &model, &features, &labels_std, &exact_positions, &targets_std, 8, &cfg, false,
        );
        model.params_mut()[k] = original - step;
        let (minus, _) = full_loss_and_grad(
            &model, &features, &labels_std, &exact_positions, &targets_std, 8, &cfg, false,
        );
        model.params_mut()[k] = original;

        let numeric = (plus - minus) / (2.0 * step);
        // Relative error with an absolute guard for near-zero components,
        // where a quotient of round-off noise would be meaningless.
        let rel = (analytic[k] - numeric).abs() / analytic[k].abs().max(numeric.abs()).max(1e-6);
        worst = worst.max(rel);
        ok &= rel < 1e-4;
    }
    let (in_time, secs) = within_budget(start, Duration::from_secs(10));
    ok &= in_time;

    verdict(
        "criterion 4 (full-loss gradient oracle)",
        ok,
        &format!(
            "{} parameters, worst relative error {worst:.2e} vs central differences (step 1e-5), {secs:.3}s",
            analytic.len()
        ),
    );
}

/// MAE of destandardized model predictions against the generator's hidden
/// truth, over every sample in the corpus.
fn truth_mae(predictions: &[(String, f64)], truth: &[(String, f64)]) -> f64 {
    assert_eq!(predictions.len(), truth.len());
    let mut sum = 0.0;
    for ((pid, pred), (tid, year)) in predictions.iter().zip(truth) {
        assert_eq!(pid, tid);
        sum += (pred - year).abs();
    }
    sum / truth.len() as f64
}

#[test]
fn criterion_5_synthetic_end_to_end() {
    let start = Instant::now();
    let (dataset, truth, _) = generate(&SynthConfig {
        dim: 32,
        n_labelled: 500,
        n_unlabelled: 500,
        mix: (0.6, 0.2, 0.2),
        noise_sigma: 5.0,
        seed: 42,
    })
    .unwrap();

    let base = TrainConfig {
        adapter: AdapterKind::Affine { out: 32 },
        epochs: 500,
        seed: 7,
        ..TrainConfig::default()
    };
    let mse_only = TrainConfig {
        loss: LossConfig { beta: 0.0, gamma: 0.0, ..LossConfig::default() },
        ..base
    };
    let kl_reg_only = TrainConfig {
        loss: LossConfig { alpha: 0.0, ..LossConfig::default() },
        ..base
    };

    let (full_model, full_std, full_report) = train(&dataset, None, &base).unwrap();
    let full_mae = truth_mae(&predict(&full_model, &full_std, &dataset).unwrap(), &truth.years);

    let (mse_model, mse_std, _) = train(&dataset, None, &mse_only).unwrap();
    let mse_mae = truth_mae(&predict(&mse_model, &mse_std, &dataset).unwrap(), &truth.years);

    let (kl_model, kl_std, _) = train(&dataset, None, &kl_reg_only).unwrap();
    let kl_mae = truth_mae(&predict(&kl_model, &kl_std, &dataset).unwrap(), &truth.years);

    let mut ok = true;
    ok &= full_mae <= 15.0;
    ok &= mse_mae <= 20.0;
    ok &= kl_mae >= 3.0 * full_mae;

    // Stochastic batches forbid per-epoch monotonicity, but the tail of
    // training must still sit below the first epoch's average loss.
    let first_total = full_report.epochs[0].total;
    let tail = &full_report.epochs[full_report.epochs.len() - 50..];
    let tail_avg = tail.iter().map(|r| r.total).sum::<f64>() / tail.len() as f64;
    ok &= tail_avg < first_total;

    let (in_time, secs) = within_budget(start, Duration::from_secs(300));
    ok &= in_time;

    verdict(
        "criterion 5 (synthetic end-to-end)",
        ok,
        &format!(
            "full {full_mae:.2}y <= 15y, MSE-only {mse_mae:.2}y <= 20y, KL+Reg-only {kl_mae:.2}y >= 3x full ({:.2}y); final-epoch-decile loss {tail_avg:.4} < first epoch {first_total:.4}; {secs:.1}s",
            3.0 * full_mae
        ),
    );
}

#[test]
fn criterion_6_baseline_sanity() {
    let start = Instant::now();
    let (dataset, _, _) = generate(&SynthConfig {
        dim: 16,
        n_labelled: 80,
        n_unlabelled: 0,
        mix: (0.5, 0.25, 0.25),
        noise_sigma: 0.0,
        seed: 11,
    })
    .unwrap();

    let mut ok = true;
    let mut total_error = 0.0;
    let mut queried = 0usize;
    for &i in &dataset.indices_of_kind(LabelKind::Year) {
        let sample = dataset.get(i);
        let mu = sample.label.as_ref().unwrap().gaussian.mu;

        let hit = builtyear::baseline::nearest_neighbor_predict(&dataset, &sample.features).unwrap();
        total_error += (hit - mu).abs();

        // Cosine similarity ignores magnitude, so a scaled copy of the
        // embedding must resolve to the same neighbour.
        let scaled: Vec<f64> = sample.features.iter().map(|v| v * 7.0).collect();
        let scaled_hit =
            builtyear::baseline::nearest_neighbor_predict(&dataset, &scaled).unwrap();
        ok &= hit == scaled_hit;
        queried += 1;
    }
    let mae = total_error / queried as f64;
    ok &= mae == 0.0;
    let (in_time, secs) = within_budget(start, Duration::from_secs(5));
    ok &= in_time;

    verdict(
        "criterion 6 (nearest-neighbour baseline)",
        ok,
        &format!("{queried} duplicated exact-year queries: MAE {mae}, x7-scaled queries identical, {secs:.3}s"),
    );
}

/// Runs the CLI binary, panicking on failure; returns nothing of interest
/// because the probes compare the files it writes.
fn run_cli(args: &[&str]) {
    let status = Command::new(env!("CARGO_BIN_EXE_builtyear"))
        .args(args)
        .status()
        .expect("failed to spawn CLI");
    assert!(status.success(), "CLI run failed: {args:?}");
}

fn read(path: &std::path::Path) -> Vec<u8> {
    std::fs::read(path).unwrap_or_else(|e| panic!("reading {}: {e}", path.display()))
}

#[test]
fn criterion_7_statistics_and_cli_determinism() {
    let start = Instant::now();
    let mut ok = true;

    // Pearson hits +-1 exactly (within round-off) on affine data.
    let xs: Vec<f64> = (0..40).map(|i| 3.0 + 0.7 * i as f64).collect();
    let up: Vec<f64> = xs.iter().map(|x| 3.0 * x - 7.0).collect();
    let down: Vec<f64> = xs.iter().map(|x| -2.0 * x + 4.0).collect();
    let r_up = builtyear::eval::pearson(&xs, &up).unwrap();
    let r_down = builtyear::eval::pearson(&xs, &down).unwrap();
    ok &= (r_up - 1.0).abs() < 1e-12;
    ok &= (r_down + 1.0).abs() < 1e-12;

    // The bootstrap's point estimate is the plain MAE, bit for bit.
    let (truth_ds, truth, _) = generate(&SynthConfig {
        dim: 4,
        n_labelled: 30,
        n_unlabelled: 0,
        mix: (1.0, 0.0, 0.0),
        noise_sigma: 1.0,
        seed: 99,
    })
    .unwrap();
    let predictions: Vec<(String, f64)> = truth
        .years
        .iter()
        .map(|(id, y)| (id.clone(), y + 4.5))
        .collect();
    let plain = builtyear::eval::mae(&predictions, &truth_ds).unwrap();
    let (point, spread) = builtyear::eval::bootstrap_mae(&predictions, &truth_ds, 500, 7).unwrap();
    ok &= point.to_bits() == plain.to_bits();
    ok &= spread.is_finite() && spread >= 0.0;

    // Byte-identical CLI reruns: every artifact written twice with the same
    // seeds must match exactly.
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let mut mismatches = Vec::new();
    for run in ["a", "b"] {
        let d = root.join(run);
        std::fs::create_dir(&d).unwrap();
        let dir_arg = d.to_string_lossy().into_owned();
        let p = |name: &str| d.join(name).to_string_lossy().into_owned();
        run_cli(&[
            "synth", "--dim", "4", "--labelled", "40", "--unlabelled", "10",
            "--noise", "2.0", "--seed", "5", "--out-dir", &dir_arg,
        ]);
        run_cli(&[
            "train",
            "--embeddings", &p("embeddings.csv"),
            "--labels", &p("labels.csv"),
            "--dynasties", &p("dynasties.csv"),
            "--adapter", "affine", "--features", "4",
            "--batch-labelled", "8", "--batch-unlabelled", "4",
            "--epochs", "10", "--seed", "3",
            "--out", &p("model.ckpt"),
            "--report", &p("report.csv"),
        ]);
        run_cli(&[
            "predict",
            "--checkpoint", &p("model.ckpt"),
            "--embeddings", &p("embeddings.csv"),
            "--out", &p("pred.csv"),
        ]);
        run_cli(&[
            "evaluate",
            "--predictions", &p("pred.csv"),
            "--truth", &p("truth.csv"),
            "--seed", "17",
            "--out", &p("metrics.csv"),
        ]);
    }
    for name in [
        "embeddings.csv", "labels.csv", "dynasties.csv", "truth.csv",
        "model.ckpt", "report.csv", "pred.csv", "metrics.csv",
    ] {
        if read(&root.join("a").join(name)) != read(&root.join("b").join(name)) {
            mismatches.push(name);
        }
    }
    ok &= mismatches.is_empty();
    let (in_time, secs) = within_budget(start, Duration::from_secs(60));
    ok &= in_time;

    verdict(
        "criterion 7 (statistics + CLI determinism)",
        ok,
        &format!(
            "pearson +-1 within 1e-12, bootstrap point == mae bitwise, rerun mismatches: {mismatches:?}, {secs:.1}s"
        ),
    );
}
