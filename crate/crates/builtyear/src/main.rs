//! Command-line front door: generate synthetic corpora, encode labels,
//! train, predict, and evaluate — each step reading and writing plain CSV
//! so runs are scriptable and reproducible.

use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use builtyear::dataset::{
    attach_labels, attach_quality, load_embeddings, parse_label_row, save_embeddings, save_labels,
    Dataset, DynastyTable,
};
use builtyear::eval::{bootstrap_mae, error_by_quality, pearson};
use builtyear::loss::LossConfig;
use builtyear::model::{AdapterKind, Model};
use builtyear::synth::{generate, load_truth, SynthConfig};
use builtyear::trainer::{predict, train, TrainConfig};
use builtyear::{baseline, dataset::LabelKind};

#[derive(Parser)]
#[command(name = "builtyear", version, about = "Estimate construction years from image embeddings")]
struct Cli {
    /// Key=value file supplying defaults for any long flag of the chosen
    /// subcommand; explicit flags win.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus with known ground truth.
    Synth(SynthArgs),
    /// Print the Gaussian encoding (id,mu,sigma) of every label row.
    Encode(EncodeArgs),
    /// Train a model; writes a checkpoint and a per-epoch report.
    Train(TrainArgs),
    /// Predict years for an embeddings file using a checkpoint.
    Predict(PredictArgs),
    /// Score predictions against ground truth.
    Evaluate(EvaluateArgs),
    /// Nearest-neighbour baseline predictions.
    Knn(KnnArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Embedding dimension.
    #[arg(long, default_value_t = 32)]
    dim: usize,
    #[arg(long, default_value_t = 500)]
    labelled: usize,
    #[arg(long, default_value_t = 500)]
    unlabelled: usize,
    /// Fraction of labelled samples with exact-year labels.
    #[arg(long, default_value_t = 0.6)]
    mix_year: f64,
    /// Fraction with century labels.
    #[arg(long, default_value_t = 0.2)]
    mix_century: f64,
    /// Fraction with dynasty labels.
    #[arg(long, default_value_t = 0.2)]
    mix_dynasty: f64,
    /// Noise added to the true year, in years (standard deviation).
    #[arg(long, default_value_t = 5.0)]
    noise: f64,
    #[arg(long)]
    seed: u64,
    /// Directory receiving embeddings.csv, labels.csv, dynasties.csv and
    /// truth.csv.
    #[arg(long, value_name = "DIR")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct EncodeArgs {
    /// Label CSV (`id,kind,value`).
    #[arg(long, value_name = "FILE")]
    labels: PathBuf,
    /// Dynasty table CSV (`name,start_year,end_year`).
    #[arg(long, value_name = "FILE")]
    dynasties: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, value_name = "FILE")]
    embeddings: PathBuf,
    #[arg(long, value_name = "FILE")]
    labels: PathBuf,
    #[arg(long, value_name = "FILE")]
    dynasties: PathBuf,
    /// Where to write the model checkpoint.
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    /// Where to write the per-epoch CSV report.
    #[arg(long, value_name = "FILE")]
    report: Option<PathBuf>,
    /// Fraction of samples held out for per-epoch validation MAE.
    #[arg(long, default_value_t = 0.0)]
    val_fraction: f64,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long, default_value_t = 15.0)]
    beta: f64,
    #[arg(long, default_value_t = 0.1)]
    gamma: f64,
    #[arg(long, default_value_t = 0.75)]
    length_scale: f64,
    #[arg(long, default_value_t = 0.003)]
    lr: f64,
    #[arg(long, default_value_t = 64)]
    batch_labelled: usize,
    #[arg(long, default_value_t = 64)]
    batch_unlabelled: usize,
    #[arg(long, default_value_t = 200)]
    epochs: usize,
    /// Adapter shape: identity, affine, or mlp.
    #[arg(long, default_value = "mlp")]
    adapter: String,
    /// Hidden width of the mlp adapter.
    #[arg(long, default_value_t = 64)]
    hidden: usize,
    /// Adapter output width (affine and mlp adapters).
    #[arg(long, default_value_t = 64)]
    features: usize,
    #[arg(long)]
    seed: u64,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long, value_name = "FILE")]
    checkpoint: PathBuf,
    #[arg(long, value_name = "FILE")]
    embeddings: PathBuf,
    /// Output CSV (`id,predicted_year`).
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Predictions CSV (`id,predicted_year`).
    #[arg(long, value_name = "FILE")]
    predictions: PathBuf,
    /// Ground truth as a truth.csv from `synth` …
    #[arg(long, value_name = "FILE")]
    truth: Option<PathBuf>,
    /// … or as embeddings + labels (+ dynasties) of a labelled test set.
    #[arg(long, value_name = "FILE", requires = "labels")]
    embeddings: Option<PathBuf>,
    #[arg(long, value_name = "FILE", requires = "embeddings")]
    labels: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    dynasties: Option<PathBuf>,
    /// Optional quality scores (`id,score`) for the error/quality table.
    #[arg(long, value_name = "FILE")]
    quality: Option<PathBuf>,
    /// Bins of the error/quality table.
    #[arg(long, default_value_t = 5)]
    bins: usize,
    #[arg(long, default_value_t = 1000)]
    resamples: usize,
    #[arg(long)]
    seed: u64,
    /// Metrics CSV output; printed to stdout when omitted.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct KnnArgs {
    /// Labelled training set.
    #[arg(long, value_name = "FILE")]
    embeddings: PathBuf,
    #[arg(long, value_name = "FILE")]
    labels: PathBuf,
    #[arg(long, value_name = "FILE")]
    dynasties: PathBuf,
    /// Embeddings to predict for.
    #[arg(long, value_name = "FILE")]
    queries: PathBuf,
    /// Output CSV (`id,predicted_year`).
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

fn main() {
    let argv = match apply_config_file(std::env::args().collect()) {
        Ok(argv) => argv,
        Err(err) => {
            eprintln!("error: {err:#}");
            std::process::exit(1);
        }
    };
    let cli = Cli::parse_from(argv);
    let result = match cli.command {
        Command::Synth(args) => run_synth(args),
        Command::Encode(args) => run_encode(args),
        Command::Train(args) => run_train(args),
        Command::Predict(args) => run_predict(args),
        Command::Evaluate(args) => run_evaluate(args),
        Command::Knn(args) => run_knn(args),
    };
    if let Err(err) = result {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}

/// Splices `--key value` pairs from a `--config` file into the argument
/// list, after the original arguments so explicit flags take precedence for
/// clap's last-wins… clap actually rejects duplicates, so config pairs are
/// only added for flags not already present.
fn apply_config_file(argv: Vec<String>) -> anyhow::Result<Vec<String>> {
    let Some(pos) = argv.iter().position(|a| a == "--config") else {
        return Ok(argv);
    };
    let path = argv
        .get(pos + 1)
        .filter(|v| !v.starts_with("--"))
        .with_context(|| "--config requires a file argument")?
        .clone();
    let text = std::fs::read_to_string(&path)
        .with_context(|| format!("cannot read config file {path}"))?;
    let mut argv = argv;
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            bail!("{path}:{}: expected key=value, got {line:?}", i + 1);
        };
        let flag = format!("--{}", key.trim().trim_start_matches("--"));
        if !argv.contains(&flag) {
            argv.push(flag);
            argv.push(value.trim().to_string());
        }
    }
    Ok(argv)
}

fn run_synth(args: SynthArgs) -> anyhow::Result<()> {
    let cfg = SynthConfig {
        dim: args.dim,
        n_labelled: args.labelled,
        n_unlabelled: args.unlabelled,
        mix: (args.mix_year, args.mix_century, args.mix_dynasty),
        noise_sigma: args.noise,
        seed: args.seed,
    };
    let (dataset, truth, dynasties) = generate(&cfg)?;
    std::fs::create_dir_all(&args.out_dir)
        .with_context(|| format!("cannot create {}", args.out_dir.display()))?;
    save_embeddings(&dataset, &args.out_dir.join("embeddings.csv"))?;
    save_labels(&dataset, &args.out_dir.join("labels.csv"))?;
    dynasties.save(&args.out_dir.join("dynasties.csv"))?;
    truth.save(&args.out_dir.join("truth.csv"))?;
    println!(
        "wrote {} samples ({} labelled) to {}",
        dataset.len(),
        args.labelled,
        args.out_dir.display()
    );
    Ok(())
}

fn run_encode(args: EncodeArgs) -> anyhow::Result<()> {
    let dynasties = DynastyTable::load(&args.dynasties)?;
    let path_str = args.labels.display().to_string();
    let file = std::fs::File::open(&args.labels)
        .with_context(|| format!("cannot open {path_str}"))?;
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        let (id, label) = parse_label_row(&line, &dynasties, &path_str, i + 1)?;
        writeln!(out, "{},{},{}", id, label.gaussian.mu, label.gaussian.sigma)?;
    }
    Ok(())
}

fn parse_adapter(args: &TrainArgs) -> anyhow::Result<AdapterKind> {
    match args.adapter.as_str() {
        "identity" => Ok(AdapterKind::Identity),
        "affine" => Ok(AdapterKind::Affine { out: args.features }),
        "mlp" => Ok(AdapterKind::Mlp { hidden: args.hidden, out: args.features }),
        other => bail!("unknown adapter {other:?} (expected identity, affine, or mlp)"),
    }
}

fn load_labelled_dataset(
    embeddings: &Path,
    labels: &Path,
    dynasties: &Path,
) -> anyhow::Result<(Dataset, DynastyTable)> {
    let table = DynastyTable::load(dynasties)?;
    let ds = load_embeddings(embeddings)?;
    let ds = attach_labels(ds, labels, &table)?;
    Ok((ds, table))
}

fn run_train(args: TrainArgs) -> anyhow::Result<()> {
    let (ds, _) = load_labelled_dataset(&args.embeddings, &args.labels, &args.dynasties)?;
    let cfg = TrainConfig {
        loss: LossConfig {
            alpha: args.alpha,
            beta: args.beta,
            gamma: args.gamma,
            length_scale: args.length_scale,
        },
        adapter: parse_adapter(&args)?,
        learning_rate: args.lr,
        batch_labelled: args.batch_labelled,
        batch_unlabelled: args.batch_unlabelled,
        epochs: args.epochs,
        seed: args.seed,
        ..TrainConfig::default()
    };
    let (train_set, holdout);
    let validation = if args.val_fraction > 0.0 {
        (train_set, holdout) = ds.split(1.0 - args.val_fraction, args.seed)?;
        Some(&holdout)
    } else {
        train_set = ds;
        None
    };
    let (model, std, report) = train(&train_set, validation, &cfg)?;
    model.save(&std, &args.out)?;
    if let Some(report_path) = &args.report {
        report.write_csv(report_path)?;
    }
    match report.epochs.last() {
        Some(last) => println!(
            "trained {} epochs; final loss {:.6}{}",
            report.epochs.len(),
            last.total,
            last.val_mae
                .map(|v| format!(", validation MAE {v:.2} years"))
                .unwrap_or_default()
        ),
        None => println!("trained 0 epochs; checkpoint holds the initialization"),
    }
    Ok(())
}

fn write_predictions(path: &Path, predictions: &[(String, f64)]) -> anyhow::Result<()> {
    let mut out = String::from("id,predicted_year\n");
    for (id, year) in predictions {
        out.push_str(&format!("{id},{year}\n"));
    }
    std::fs::write(path, out).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

fn read_predictions(path: &Path) -> anyhow::Result<Vec<(String, f64)>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read {}", path.display()))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, "id,predicted_year")) => {}
        _ => bail!("{}: expected header `id,predicted_year`", path.display()),
    }
    let mut predictions = Vec::new();
    for (i, line) in lines {
        let Some((id, year)) = line.split_once(',') else {
            bail!("{}:{}: expected `id,predicted_year`", path.display(), i + 1);
        };
        let year: f64 = year
            .parse()
            .with_context(|| format!("{}:{}: invalid year {year:?}", path.display(), i + 1))?;
        predictions.push((id.to_string(), year));
    }
    Ok(predictions)
}

fn run_predict(args: PredictArgs) -> anyhow::Result<()> {
    let (model, std) = Model::load(&args.checkpoint)?;
    let ds = load_embeddings(&args.embeddings)?;
    let predictions = predict(&model, &std, &ds)?;
    write_predictions(&args.out, &predictions)?;
    println!("wrote {} predictions to {}", predictions.len(), args.out.display());
    Ok(())
}

fn run_knn(args: KnnArgs) -> anyhow::Result<()> {
    let (train_set, _) = load_labelled_dataset(&args.embeddings, &args.labels, &args.dynasties)?;
    let queries = load_embeddings(&args.queries)?;
    let predictions: Vec<(String, f64)> = queries
        .samples()
        .iter()
        .map(|s| {
            baseline::nearest_neighbor_predict(&train_set, &s.features)
                .map(|year| (s.id.clone(), year))
        })
        .collect::<Result<_, _>>()?;
    write_predictions(&args.out, &predictions)?;
    println!("wrote {} predictions to {}", predictions.len(), args.out.display());
    Ok(())
}

fn run_evaluate(args: EvaluateArgs) -> anyhow::Result<()> {
    let predictions = read_predictions(&args.predictions)?;
    let truth = match (&args.truth, &args.embeddings, &args.labels) {
        (Some(path), None, None) => load_truth(path)?,
        (None, Some(embeddings), Some(labels)) => {
            let dynasties = match &args.dynasties {
                Some(path) => DynastyTable::load(path)?,
                None => DynastyTable::new(Vec::new())?,
            };
            attach_labels(load_embeddings(embeddings)?, labels, &dynasties)?
        }
        _ => bail!("supply either --truth, or --embeddings with --labels"),
    };
    let truth = match &args.quality {
        Some(path) => attach_quality(truth, path)?,
        None => truth,
    };

    let n = truth.indices_of_kind(LabelKind::Year).len();
    let (point, spread) = bootstrap_mae(&predictions, &truth, args.resamples, args.seed)?;
    let mut metrics = String::from("metric,value\n");
    metrics.push_str(&format!("mae,{point}\n"));
    metrics.push_str(&format!("bootstrap_std,{spread}\n"));
    metrics.push_str(&format!("samples,{n}\n"));

    if args.quality.is_some() {
        let table = error_by_quality(&predictions, &truth, args.bins)?;
        let mut scores = Vec::new();
        let mut years = Vec::new();
        for idx in truth.indices_of_kind(LabelKind::Year) {
            let sample = truth.get(idx);
            if let Some(q) = sample.quality {
                scores.push(q);
                years.push(sample.label.as_ref().unwrap().gaussian.mu);
            }
        }
        metrics.push_str(&format!("pearson_quality_year,{}\n", pearson(&scores, &years)?));
        for (i, bin) in table.iter().enumerate() {
            metrics.push_str(&format!("quality_bin{i}_lo,{}\n", bin.lo));
            metrics.push_str(&format!("quality_bin{i}_hi,{}\n", bin.hi));
            metrics.push_str(&format!("quality_bin{i}_mae,{}\n", bin.mae));
            metrics.push_str(&format!("quality_bin{i}_count,{}\n", bin.count));
        }
    }

    match &args.out {
        Some(path) => std::fs::write(path, &metrics)
            .with_context(|| format!("cannot write {}", path.display()))?,
        None => print!("{metrics}"),
    }
    println!("MAE {point:.4} ± {spread:.4} years over {n} exact-year samples");
    Ok(())
}
