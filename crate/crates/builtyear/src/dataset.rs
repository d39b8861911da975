//! Samples, datasets, dynasty tables, and the CSV files they live in.
//!
//! File formats (UTF-8, `.` decimal separator, newline-delimited):
//!
//! * embeddings: header `id,f0,...,f{d-1}`, then one row per sample;
//! * labels: `id,kind,value` with no header, kind in {year, century,
//!   dynasty}, value an integer year, a century ordinal >= 1, or a dynasty
//!   name from the dynasty table;
//! * dynasty table: `name,start_year,end_year`, no header;
//! * quality scores: `id,score`, no header, score in [0, 100].
//!
//! A dataset is immutable once constructed and safe to share across threads.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};
use crate::label::{encode_century, encode_dynasty, encode_year, GaussianLabel};

/// Which of the three built-time label kinds a sample carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LabelKind {
    Year,
    Century,
    Dynasty,
}

impl fmt::Display for LabelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LabelKind::Year => write!(f, "year"),
            LabelKind::Century => write!(f, "century"),
            LabelKind::Dynasty => write!(f, "dynasty"),
        }
    }
}

/// The raw label value as it appears in a label file.
#[derive(Debug, Clone, PartialEq)]
pub enum LabelValue {
    Year(i64),
    Century(i64),
    Dynasty(String),
}

impl LabelValue {
    pub fn kind(&self) -> LabelKind {
        match self {
            LabelValue::Year(_) => LabelKind::Year,
            LabelValue::Century(_) => LabelKind::Century,
            LabelValue::Dynasty(_) => LabelKind::Dynasty,
        }
    }
}

/// A built-time label: the raw file value plus its Gaussian encoding.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleLabel {
    pub value: LabelValue,
    pub gaussian: GaussianLabel,
}

impl SampleLabel {
    pub fn kind(&self) -> LabelKind {
        self.value.kind()
    }
}

/// One face image, represented by its precomputed embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub features: Vec<f64>,
    pub label: Option<SampleLabel>,
    /// BRISQUE-style quality score in [0, 100]; lower is better.
    pub quality: Option<f64>,
}

impl Sample {
    pub fn label_kind(&self) -> Option<LabelKind> {
        self.label.as_ref().map(SampleLabel::kind)
    }
}

/// An ordered, immutable collection of samples sharing one embedding dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    samples: Vec<Sample>,
    dim: usize,
}

impl Dataset {
    /// Validates dimensions, finiteness, id uniqueness and quality ranges.
    pub fn new(samples: Vec<Sample>) -> Result<Self> {
        let dim = match samples.first() {
            Some(s) => s.features.len(),
            None => {
                return Err(Error::EmptyInput("dataset has no samples".into()));
            }
        };
        Self::with_dim(samples, dim)
    }

    /// Like [`Dataset::new`] but with an explicit dimension, so an empty
    /// dataset (e.g. a header-only embeddings file) is representable.
    pub fn with_dim(samples: Vec<Sample>, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument(
                "embedding dimension must be positive".into(),
            ));
        }
        let mut seen = HashSet::with_capacity(samples.len());
        for s in &samples {
            if s.features.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: s.features.len(),
                });
            }
            if s.features.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "sample {}: non-finite feature value",
                    s.id
                )));
            }
            if let Some(q) = s.quality {
                if !(0.0..=100.0).contains(&q) {
                    return Err(Error::InvalidArgument(format!(
                        "sample {}: quality score {q} outside [0, 100]",
                        s.id
                    )));
                }
            }
            if !seen.insert(s.id.as_str()) {
                return Err(Error::InvalidArgument(format!("duplicate sample id {}", s.id)));
            }
        }
        Ok(Dataset { samples, dim })
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn get(&self, index: usize) -> &Sample {
        &self.samples[index]
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.samples.iter().position(|s| s.id == id)
    }

    /// Indices of labelled samples, in dataset order.
    pub fn labelled_indices(&self) -> Vec<usize> {
        self.indices_where(|s| s.label.is_some())
    }

    /// Indices of unlabelled samples, in dataset order.
    pub fn unlabelled_indices(&self) -> Vec<usize> {
        self.indices_where(|s| s.label.is_none())
    }

    /// Indices of labelled samples of one kind, in dataset order.
    pub fn indices_of_kind(&self, kind: LabelKind) -> Vec<usize> {
        self.indices_where(|s| s.label_kind() == Some(kind))
    }

    fn indices_where(&self, pred: impl Fn(&Sample) -> bool) -> Vec<usize> {
        self.samples
            .iter()
            .enumerate()
            .filter(|(_, s)| pred(s))
            .map(|(i, _)| i)
            .collect()
    }

    /// Deterministic random split into (train, test). `train_fraction` must
    /// lie strictly inside (0, 1); the train size is `round(fraction * n)`.
    /// Each half keeps the original sample order.
    pub fn split(&self, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
        if self.is_empty() {
            return Err(Error::EmptyInput("cannot split an empty dataset".into()));
        }
        if !(train_fraction > 0.0 && train_fraction < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "train fraction must be in (0, 1), got {train_fraction}"
            )));
        }
        let mut indices: Vec<usize> = (0..self.len()).collect();
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        indices.shuffle(&mut rng);
        let n_train = (train_fraction * self.len() as f64).round() as usize;
        let (mut train_idx, mut test_idx): (Vec<usize>, Vec<usize>) = (
            indices[..n_train].to_vec(),
            indices[n_train..].to_vec(),
        );
        train_idx.sort_unstable();
        test_idx.sort_unstable();
        let pick = |idx: &[usize]| -> Vec<Sample> {
            idx.iter().map(|&i| self.samples[i].clone()).collect()
        };
        Ok((
            Dataset {
                samples: pick(&train_idx),
                dim: self.dim,
            },
            Dataset {
                samples: pick(&test_idx),
                dim: self.dim,
            },
        ))
    }
}

/// Dynasty name -> (start_year, end_year), insertion-ordered.
#[derive(Debug, Clone, PartialEq)]
pub struct DynastyTable {
    entries: Vec<(String, i64, i64)>,
    index: HashMap<String, usize>,
}

impl DynastyTable {
    pub fn new(entries: Vec<(String, i64, i64)>) -> Result<Self> {
        let mut index = HashMap::with_capacity(entries.len());
        for (i, (name, start, end)) in entries.iter().enumerate() {
            if start >= end {
                return Err(Error::InvalidArgument(format!(
                    "dynasty {name}: start_year {start} must be before end_year {end}"
                )));
            }
            if index.insert(name.clone(), i).is_some() {
                return Err(Error::InvalidArgument(format!("duplicate dynasty name {name}")));
            }
        }
        Ok(DynastyTable { entries, index })
    }

    /// Case-sensitive lookup.
    pub fn get(&self, name: &str) -> Option<(i64, i64)> {
        self.index.get(name).map(|&i| {
            let (_, s, e) = self.entries[i];
            (s, e)
        })
    }

    pub fn entries(&self) -> &[(String, i64, i64)] {
        &self.entries
    }

    pub fn load(path: &Path) -> Result<Self> {
        let path_str = path.display().to_string();
        let reader = open(path)?;
        let mut entries = Vec::new();
        for (lineno, line) in reader.lines().enumerate() {
            let lineno = lineno + 1;
            let line = line.map_err(|e| Error::io(&path_str, e))?;
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 3 {
                return Err(Error::parse(
                    &path_str,
                    lineno,
                    format!("expected 3 fields `name,start_year,end_year`, got {}", fields.len()),
                ));
            }
            let start = parse_int(fields[1], &path_str, lineno, "start_year")?;
            let end = parse_int(fields[2], &path_str, lineno, "end_year")?;
            entries.push((fields[0].to_string(), start, end));
        }
        if entries.is_empty() {
            return Err(Error::parse(&path_str, 1, "empty dynasty table"));
        }
        DynastyTable::new(entries)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let path_str = path.display().to_string();
        let mut w = create(path)?;
        for (name, start, end) in &self.entries {
            writeln!(w, "{name},{start},{end}").map_err(|e| Error::io(&path_str, e))?;
        }
        w.flush().map_err(|e| Error::io(&path_str, e))
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    let path_str = path.display().to_string();
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::io(&path_str, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let path_str = path.display().to_string();
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(&path_str, e))
}

fn parse_int(field: &str, path: &str, line: usize, what: &str) -> Result<i64> {
    field
        .trim()
        .parse::<i64>()
        .map_err(|_| Error::parse(path, line, format!("{what}: `{field}` is not an integer")))
}

fn parse_float(field: &str, path: &str, line: usize) -> Result<f64> {
    let v = field
        .trim()
        .parse::<f64>()
        .map_err(|_| Error::parse(path, line, format!("`{field}` is not a number")))?;
    if !v.is_finite() {
        return Err(Error::parse(path, line, format!("`{field}` is not finite")));
    }
    Ok(v)
}

/// Loads an embeddings CSV (header `id,f0,...,f{d-1}`) into an unlabelled
/// dataset, one sample per row in file order.
pub fn load_embeddings(path: &Path) -> Result<Dataset> {
    let path_str = path.display().to_string();
    let reader = open(path)?;
    let mut lines = reader.lines();
    let header = match lines.next() {
        Some(h) => h.map_err(|e| Error::io(&path_str, e))?,
        None => return Err(Error::parse(&path_str, 1, "empty file")),
    };
    let cols: Vec<&str> = header.split(',').collect();
    if cols.len() < 2 || cols[0] != "id" {
        return Err(Error::parse(
            &path_str,
            1,
            "header must be `id,f0,...,f{d-1}`",
        ));
    }
    for (i, col) in cols[1..].iter().enumerate() {
        if *col != format!("f{i}") {
            return Err(Error::parse(
                &path_str,
                1,
                format!("feature column {} named `{col}`, expected `f{i}`", i + 1),
            ));
        }
    }
    let dim = cols.len() - 1;

    let mut samples = Vec::new();
    let mut seen: HashSet<String> = HashSet::new();
    for (i, line) in lines.enumerate() {
        let lineno = i + 2;
        let line = line.map_err(|e| Error::io(&path_str, e))?;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != dim + 1 {
            return Err(Error::parse(
                &path_str,
                lineno,
                format!("expected {} fields, got {}", dim + 1, fields.len()),
            ));
        }
        let id = fields[0].to_string();
        if !seen.insert(id.clone()) {
            return Err(Error::parse(&path_str, lineno, format!("duplicate id {id}")));
        }
        let mut features = Vec::with_capacity(dim);
        for field in &fields[1..] {
            features.push(parse_float(field, &path_str, lineno)?);
        }
        samples.push(Sample {
            id,
            features,
            label: None,
            quality: None,
        });
    }
    Dataset::with_dim(samples, dim)
}

/// Writes a dataset's embeddings back out in the exact load format. Floats
/// use shortest round-trip decimal formatting, so load/save is lossless.
pub fn save_embeddings(ds: &Dataset, path: &Path) -> Result<()> {
    let path_str = path.display().to_string();
    let mut w = create(path)?;
    let header: Vec<String> = std::iter::once("id".to_string())
        .chain((0..ds.dim()).map(|i| format!("f{i}")))
        .collect();
    writeln!(w, "{}", header.join(",")).map_err(|e| Error::io(&path_str, e))?;
    for s in ds.samples() {
        write!(w, "{}", s.id).map_err(|e| Error::io(&path_str, e))?;
        for v in &s.features {
            write!(w, ",{v}").map_err(|e| Error::io(&path_str, e))?;
        }
        writeln!(w).map_err(|e| Error::io(&path_str, e))?;
    }
    w.flush().map_err(|e| Error::io(&path_str, e))
}

/// Parses one `id,kind,value` label row, resolving dynasty names against
/// `dynasties`. `line_no` is 1-based and only used for diagnostics.
pub fn parse_label_row(
    line: &str,
    dynasties: &DynastyTable,
    path: &str,
    line_no: usize,
) -> Result<(String, SampleLabel)> {
    let fields: Vec<&str> = line.split(',').collect();
    if fields.len() != 3 {
        return Err(Error::parse(
            path,
            line_no,
            format!("expected 3 fields `id,kind,value`, got {}", fields.len()),
        ));
    }
    let (id, kind, value) = (fields[0], fields[1].trim(), fields[2]);
    if id.is_empty() {
        return Err(Error::parse(path, line_no, "empty sample id"));
    }
    let label = match kind {
        "year" => {
            let year = parse_int(value, path, line_no, "year")?;
            SampleLabel {
                value: LabelValue::Year(year),
                gaussian: encode_year(year),
            }
        }
        "century" => {
            let ord = parse_int(value, path, line_no, "century")?;
            let gaussian =
                encode_century(ord).map_err(|e| Error::parse(path, line_no, e.to_string()))?;
            SampleLabel {
                value: LabelValue::Century(ord),
                gaussian,
            }
        }
        "dynasty" => {
            let name = value.trim();
            let (start, end) = dynasties
                .get(name)
                .ok_or_else(|| Error::parse(path, line_no, format!("unknown dynasty {name}")))?;
            let gaussian = encode_dynasty(start, end)
                .map_err(|e| Error::parse(path, line_no, e.to_string()))?;
            SampleLabel {
                value: LabelValue::Dynasty(name.to_string()),
                gaussian,
            }
        }
        other => {
            return Err(Error::parse(
                path,
                line_no,
                format!("unknown label kind `{other}`"),
            ));
        }
    };
    Ok((id.to_string(), label))
}

/// Attaches built-time labels from a `id,kind,value` CSV. Each sample may be
/// referenced at most once; label files are expected to carry pre-resolved
/// labels (one row per labelled sample).
pub fn attach_labels(ds: Dataset, path: &Path, dynasties: &DynastyTable) -> Result<Dataset> {
    let path_str = path.display().to_string();
    let reader = open(path)?;
    let mut ds = ds;
    let mut labelled: HashSet<usize> = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::io(&path_str, e))?;
        let (id, label) = parse_label_row(&line, dynasties, &path_str, lineno)?;
        let idx = ds
            .index_of(&id)
            .ok_or_else(|| Error::parse(&path_str, lineno, format!("unknown id {id}")))?;
        if !labelled.insert(idx) {
            return Err(Error::parse(
                &path_str,
                lineno,
                format!("sample {id} referenced twice"),
            ));
        }
        ds.samples[idx].label = Some(label);
    }
    Ok(ds)
}

/// Writes the labels of a dataset as `id,kind,value` rows, labelled samples
/// only, in dataset order.
pub fn save_labels(ds: &Dataset, path: &Path) -> Result<()> {
    let path_str = path.display().to_string();
    let mut w = create(path)?;
    for s in ds.samples() {
        if let Some(label) = &s.label {
            match &label.value {
                LabelValue::Year(y) => writeln!(w, "{},year,{y}", s.id),
                LabelValue::Century(c) => writeln!(w, "{},century,{c}", s.id),
                LabelValue::Dynasty(name) => writeln!(w, "{},dynasty,{name}", s.id),
            }
            .map_err(|e| Error::io(&path_str, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(&path_str, e))
}

/// Attaches quality scores from a `id,score` CSV. Rows whose id is not in
/// the dataset are ignored (score files may cover a larger corpus); rows
/// repeating an id found in the dataset are an error.
pub fn attach_quality(ds: Dataset, path: &Path) -> Result<Dataset> {
    let path_str = path.display().to_string();
    let reader = open(path)?;
    let mut ds = ds;
    let mut scored: HashSet<usize> = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::io(&path_str, e))?;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 2 {
            return Err(Error::parse(
                &path_str,
                lineno,
                format!("expected 2 fields `id,score`, got {}", fields.len()),
            ));
        }
        let idx = match ds.index_of(fields[0]) {
            Some(idx) => idx,
            None => continue,
        };
        if !scored.insert(idx) {
            return Err(Error::parse(
                &path_str,
                lineno,
                format!("sample {} scored twice", fields[0]),
            ));
        }
        let score = parse_float(fields[1], &path_str, lineno)?;
        if !(0.0..=100.0).contains(&score) {
            return Err(Error::parse(
                &path_str,
                lineno,
                format!("quality score {score} outside [0, 100]"),
            ));
        }
        ds.samples[idx].quality = Some(score);
    }
    Ok(ds)
}

/// Writes quality scores as `id,score` rows, scored samples only.
pub fn save_quality(ds: &Dataset, path: &Path) -> Result<()> {
    let path_str = path.display().to_string();
    let mut w = create(path)?;
    for s in ds.samples() {
        if let Some(q) = s.quality {
            writeln!(w, "{},{q}", s.id).map_err(|e| Error::io(&path_str, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(&path_str, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;
    use tempfile::TempDir;

    fn write(dir: &TempDir, name: &str, contents: &str) -> std::path::PathBuf {
        let path = dir.path().join(name);
        fs::write(&path, contents).unwrap();
        path
    }

    fn kamakura_table() -> DynastyTable {
        DynastyTable::new(vec![("Kamakura".to_string(), 1185, 1333)]).unwrap()
    }

    #[test]
    fn load_embeddings_minimal() {
        let dir = TempDir::new().unwrap();
        let p = write(&dir, "e.csv", "id,f0,f1\na,1.0,2.0\n");
        let ds = load_embeddings(&p).unwrap();
        assert_eq!(ds.len(), 1);
        assert_eq!(ds.dim(), 2);
        assert_eq!(ds.get(0).features, vec![1.0, 2.0]);
    }

    #[test]
    fn load_embeddings_rejects_bad_rows() {
        let dir = TempDir::new().unwrap();

        let p = write(&dir, "nonnum.csv", "id,f0,f1\na,1.0,abc\n");
        let err = load_embeddings(&p).unwrap_err().to_string();
        assert!(err.contains(":2:"), "error should name line 2: {err}");

        let p = write(&dir, "ragged.csv", "id,f0,f1\na,1.0\n");
        assert!(load_embeddings(&p).is_err());

        let p = write(&dir, "dup.csv", "id,f0\na,1.0\na,2.0\n");
        let err = load_embeddings(&p).unwrap_err().to_string();
        assert!(err.contains("duplicate id"), "{err}");

        let p = write(&dir, "empty.csv", "");
        assert!(load_embeddings(&p).is_err());

        let p = write(&dir, "badheader.csv", "id,g0\na,1.0\n");
        assert!(load_embeddings(&p).is_err());
    }

    #[test]
    fn attach_labels_encodes_all_kinds() {
        let dir = TempDir::new().unwrap();
        let e = write(&dir, "e.csv", "id,f0\na,1.0\nb,2.0\nc,3.0\n");
        let l = write(&dir, "l.csv", "a,year,1259\nb,dynasty,Kamakura\nc,century,15\n");
        let ds = attach_labels(load_embeddings(&e).unwrap(), &l, &kamakura_table()).unwrap();
        let a = ds.get(0).label.as_ref().unwrap();
        assert_eq!(a.kind(), LabelKind::Year);
        assert_eq!(a.gaussian.mu, 1259.0);
        let b = ds.get(1).label.as_ref().unwrap();
        assert_eq!(b.gaussian, GaussianLabel { mu: 1259.0, sigma: 37.0 });
        let c = ds.get(2).label.as_ref().unwrap();
        assert_eq!(c.gaussian.mu, 1450.0);
    }

    #[test]
    fn attach_labels_error_paths() {
        let dir = TempDir::new().unwrap();
        let e = write(&dir, "e.csv", "id,f0\na,1.0\n");
        let table = kamakura_table();

        let l = write(&dir, "unknown_id.csv", "z,year,1259\n");
        assert!(attach_labels(load_embeddings(&e).unwrap(), &l, &table).is_err());

        let l = write(&dir, "unknown_dyn.csv", "a,dynasty,Unknown\n");
        let err = attach_labels(load_embeddings(&e).unwrap(), &l, &table)
            .unwrap_err()
            .to_string();
        assert!(err.contains("unknown dynasty"), "{err}");

        let l = write(&dir, "bad_century.csv", "a,century,0\n");
        assert!(attach_labels(load_embeddings(&e).unwrap(), &l, &table).is_err());

        let l = write(&dir, "twice.csv", "a,year,1259\na,year,1260\n");
        let err = attach_labels(load_embeddings(&e).unwrap(), &l, &table)
            .unwrap_err()
            .to_string();
        assert!(err.contains("referenced twice"), "{err}");

        let l = write(&dir, "bad_kind.csv", "a,decade,1250\n");
        assert!(attach_labels(load_embeddings(&e).unwrap(), &l, &table).is_err());
    }

    #[test]
    fn quality_rows_for_unknown_ids_are_ignored() {
        let dir = TempDir::new().unwrap();
        let e = write(&dir, "e.csv", "id,f0\na,1.0\n");
        let q = write(&dir, "q.csv", "a,33.5\nz,12.0\n");
        let ds = attach_quality(load_embeddings(&e).unwrap(), &q).unwrap();
        assert_eq!(ds.get(0).quality, Some(33.5));
    }

    #[test]
    fn quality_out_of_range_is_rejected() {
        let dir = TempDir::new().unwrap();
        let e = write(&dir, "e.csv", "id,f0\na,1.0\n");
        let q = write(&dir, "q.csv", "a,101.0\n");
        assert!(attach_quality(load_embeddings(&e).unwrap(), &q).is_err());
    }

    #[test]
    fn split_sizes_and_determinism() {
        let samples: Vec<Sample> = (0..10)
            .map(|i| Sample {
                id: format!("s{i}"),
                features: vec![i as f64],
                label: None,
                quality: None,
            })
            .collect();
        let ds = Dataset::new(samples).unwrap();
        let (train, test) = ds.split(0.7, 1).unwrap();
        assert_eq!(train.len(), 7);
        assert_eq!(test.len(), 3);

        let (train2, test2) = ds.split(0.7, 1).unwrap();
        assert_eq!(train, train2);
        assert_eq!(test, test2);

        assert!(ds.split(1.5, 1).is_err());
        assert!(ds.split(0.0, 1).is_err());
    }

    #[test]
    fn split_is_a_partition_for_many_seeds() {
        let samples: Vec<Sample> = (0..23)
            .map(|i| Sample {
                id: format!("s{i}"),
                features: vec![i as f64, -(i as f64)],
                label: None,
                quality: None,
            })
            .collect();
        let ds = Dataset::new(samples).unwrap();
        for seed in 0..20u64 {
            let (train, test) = ds.split(0.7, seed).unwrap();
            let mut ids: Vec<&str> = train
                .samples()
                .iter()
                .chain(test.samples())
                .map(|s| s.id.as_str())
                .collect();
            ids.sort_unstable();
            let mut expected: Vec<String> = (0..23).map(|i| format!("s{i}")).collect();
            expected.sort();
            assert_eq!(ids, expected.iter().map(String::as_str).collect::<Vec<_>>());
            assert_eq!(train.len() + test.len(), ds.len());
        }
    }

    #[test]
    fn views_partition_the_dataset() {
        let dir = TempDir::new().unwrap();
        let e = write(&dir, "e.csv", "id,f0\na,1.0\nb,2.0\nc,3.0\nd,4.0\n");
        let l = write(&dir, "l.csv", "a,year,1259\nb,dynasty,Kamakura\nc,century,15\n");
        let ds = attach_labels(load_embeddings(&e).unwrap(), &l, &kamakura_table()).unwrap();

        let labelled = ds.labelled_indices();
        let unlabelled = ds.unlabelled_indices();
        assert_eq!(labelled, vec![0, 1, 2]);
        assert_eq!(unlabelled, vec![3]);

        let mut union: Vec<usize> = ds
            .indices_of_kind(LabelKind::Year)
            .into_iter()
            .chain(ds.indices_of_kind(LabelKind::Dynasty))
            .chain(ds.indices_of_kind(LabelKind::Century))
            .collect();
        union.sort_unstable();
        assert_eq!(union, labelled);

        let mut all: Vec<usize> = labelled.into_iter().chain(unlabelled).collect();
        all.sort_unstable();
        assert_eq!(all, (0..ds.len()).collect::<Vec<_>>());
    }

    #[test]
    fn round_trip_reproduces_samples_field_for_field() {
        let dir = TempDir::new().unwrap();
        let e = write(
            &dir,
            "e.csv",
            "id,f0,f1\na,0.1234567890123456,-7.25\nb,2.0,3.5e-3\nc,-0.0,1e10\n",
        );
        let l = write(&dir, "l.csv", "a,year,1259\nc,dynasty,Kamakura\n");
        let q = write(&dir, "q.csv", "b,54.75\n");
        let table = kamakura_table();
        let ds = attach_quality(
            attach_labels(load_embeddings(&e).unwrap(), &l, &table).unwrap(),
            &q,
        )
        .unwrap();

        let e2 = dir.path().join("e2.csv");
        let l2 = dir.path().join("l2.csv");
        let q2 = dir.path().join("q2.csv");
        save_embeddings(&ds, &e2).unwrap();
        save_labels(&ds, &l2).unwrap();
        save_quality(&ds, &q2).unwrap();

        let ds2 = attach_quality(
            attach_labels(load_embeddings(&e2).unwrap(), &l2, &table).unwrap(),
            &q2,
        )
        .unwrap();
        assert_eq!(ds, ds2);
    }

    #[test]
    fn dynasty_table_invariants() {
        assert!(DynastyTable::new(vec![("A".into(), 100, 100)]).is_err());
        assert!(DynastyTable::new(vec![
            ("A".into(), 100, 200),
            ("A".into(), 200, 300)
        ])
        .is_err());
        // Names are case-sensitive.
        let t = DynastyTable::new(vec![("Kamakura".into(), 1185, 1333)]).unwrap();
        assert!(t.get("kamakura").is_none());
        assert_eq!(t.get("Kamakura"), Some((1185, 1333)));
    }
}
