//! Dataset generation and ingestion for desk-scale experiments: seeded
//! Gaussian blobs, numeric CSV loading, and deterministic minibatch
//! schedules.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::ParamVec;

/// Where a dataset came from, in enough detail to regenerate or verify it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase")]
pub enum Provenance {
    Generated { seed: u64, n: usize, classes: usize, dim: usize, spread: f64 },
    File { path: String, sha256: String },
}

/// An in-memory classification dataset with disjoint train/val/test splits.
///
/// Features are standardized by construction: per-column mean 0 and unit
/// variance, with the statistics computed on the train split only.
/// Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<ParamVec>,
    labels: Vec<usize>,
    num_classes: usize,
    train: Vec<usize>,
    val: Vec<usize>,
    test: Vec<usize>,
    provenance: Provenance,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    /// Feature dimension.
    pub fn dim(&self) -> usize {
        self.features.first().map_or(0, Vec::len)
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn features(&self) -> &[ParamVec] {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn train_indices(&self) -> &[usize] {
        &self.train
    }

    pub fn val_indices(&self) -> &[usize] {
        &self.val
    }

    pub fn test_indices(&self) -> &[usize] {
        &self.test
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    fn finish(
        features: Vec<ParamVec>,
        labels: Vec<usize>,
        num_classes: usize,
        provenance: Provenance,
    ) -> Result<Dataset> {
        for row in &features {
            if row.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite { context: "dataset feature".into() });
            }
        }
        let (train, val, test) = stratified_split(&labels, num_classes);
        let mut ds = Dataset { features, labels, num_classes, train, val, test, provenance };
        ds.standardize();
        Ok(ds)
    }

    /// Shift and scale every column to train-split mean 0 and variance 1.
    /// Columns that are constant on the train split are centered only.
    fn standardize(&mut self) {
        let p = self.dim();
        if p == 0 || self.train.is_empty() {
            return;
        }
        let nt = self.train.len() as f64;
        for col in 0..p {
            let mean =
                self.train.iter().map(|&i| self.features[i][col]).sum::<f64>() / nt;
            let var = self
                .train
                .iter()
                .map(|&i| {
                    let d = self.features[i][col] - mean;
                    d * d
                })
                .sum::<f64>()
                / nt;
            let scale = if var > 1e-24 { var.sqrt() } else { 1.0 };
            for row in &mut self.features {
                row[col] = (row[col] - mean) / scale;
            }
        }
    }
}

/// Per-class 80/10/10 split in index order: each class contributes
/// `ceil(0.8 n_c)` train and then `ceil(0.1 n_c)` val rows (capped by
/// what remains), with the tail going to test.
fn stratified_split(labels: &[usize], num_classes: usize) -> (Vec<usize>, Vec<usize>, Vec<usize>) {
    let mut train = Vec::new();
    let mut val = Vec::new();
    let mut test = Vec::new();
    for class in 0..num_classes {
        let members: Vec<usize> =
            (0..labels.len()).filter(|&i| labels[i] == class).collect();
        let nc = members.len();
        let n_train = (0.8 * nc as f64).ceil() as usize;
        let n_val = ((0.1 * nc as f64).ceil() as usize).min(nc.saturating_sub(n_train));
        train.extend(&members[..n_train]);
        val.extend(&members[n_train..n_train + n_val]);
        test.extend(&members[n_train + n_val..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    test.sort_unstable();
    (train, val, test)
}

/// One standard normal draw (Box-Muller, polar-free form).
fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    // 1 - U keeps the argument of ln strictly positive.
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen::<f64>();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Generate `n` points in `dim` dimensions around `classes` Gaussian
/// cluster centers (class of point `i` is `i % classes`). Centers sit on
/// the radius-3 sphere in seeded random directions; `spread` is the
/// within-cluster standard deviation. Deterministic per seed.
pub fn gen_blobs(seed: u64, n: usize, classes: usize, dim: usize, spread: f64) -> Result<Dataset> {
    if classes < 2 || n < classes {
        return Err(Error::InvalidData(format!(
            "need n >= classes >= 2, got n = {n}, classes = {classes}"
        )));
    }
    if dim == 0 {
        return Err(Error::InvalidData("feature dimension must be >= 1".into()));
    }
    if !(spread.is_finite() && spread >= 0.0) {
        return Err(Error::InvalidData(format!("spread must be finite and >= 0, got {spread}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = Vec::with_capacity(classes);
    for _ in 0..classes {
        let mut dir: ParamVec = (0..dim).map(|_| gaussian(&mut rng)).collect();
        let norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
        for x in &mut dir {
            *x *= 3.0 / norm;
        }
        centers.push(dir);
    }
    let mut features = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let class = i % classes;
        let point: ParamVec =
            centers[class].iter().map(|&c| c + spread * gaussian(&mut rng)).collect();
        features.push(point);
        labels.push(class);
    }
    Dataset::finish(
        features,
        labels,
        classes,
        Provenance::Generated { seed, n, classes, dim, spread },
    )
}

/// Load a numeric CSV with a header row. The named column holds integer
/// class labels; every other column is a feature. CRLF and LF files parse
/// identically; the provenance records a SHA-256 of the raw bytes.
pub fn load_csv(path: &Path, label_column: &str) -> Result<Dataset> {
    let bytes = std::fs::read(path)?;
    let sha256 = hex_digest(&bytes);
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(bytes.as_slice());
    let headers = reader
        .headers()
        .map_err(|e| Error::CsvRow { line: 1, message: e.to_string() })?
        .clone();
    let label_idx = headers
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| Error::MissingLabelColumn(label_column.to_string()))?;

    let mut features = Vec::new();
    let mut labels = Vec::new();
    for result in reader.records() {
        let record = result.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            Error::CsvRow { line, message: e.to_string() }
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != headers.len() {
            return Err(Error::CsvRow {
                line,
                message: format!("expected {} fields, got {}", headers.len(), record.len()),
            });
        }
        let mut row = Vec::with_capacity(headers.len() - 1);
        let mut label = None;
        for (col, field) in record.iter().enumerate() {
            let name = &headers[col];
            if col == label_idx {
                let value: f64 = field.trim().parse().map_err(|_| Error::CsvField {
                    column: name.to_string(),
                    line,
                })?;
                if !(value.is_finite() && value >= 0.0 && value.fract() == 0.0) {
                    return Err(Error::InvalidData(format!(
                        "label {value} at line {line} is not a class index"
                    )));
                }
                label = Some(value as usize);
            } else {
                let value: f64 = field.trim().parse().map_err(|_| Error::CsvField {
                    column: name.to_string(),
                    line,
                })?;
                if !value.is_finite() {
                    return Err(Error::NonFinite {
                        context: format!("feature {name} at line {line}"),
                    });
                }
                row.push(value);
            }
        }
        features.push(row);
        labels.push(label.expect("label column present in every complete record"));
    }
    if features.is_empty() {
        return Err(Error::InvalidData("CSV has a header but no data rows".into()));
    }
    let num_classes = labels.iter().max().copied().unwrap_or(0) + 1;
    Dataset::finish(
        features,
        labels,
        num_classes,
        Provenance::File { path: path.display().to_string(), sha256 },
    )
}

fn hex_digest(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for byte in digest {
        out.push_str(&format!("{byte:02x}"));
    }
    out
}

/// Deterministic minibatch schedule over positions `0..n`: a seeded
/// permutation per `(seed, epoch)` pair, chunked into batches with the
/// last one possibly short.
pub fn batch_positions(
    n: usize,
    batch_size: usize,
    seed: u64,
    epoch: u64,
) -> Result<Vec<Vec<usize>>> {
    if batch_size == 0 {
        return Err(Error::InvalidArgument("batch_size must be >= 1".into()));
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ epoch.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    // Fisher-Yates via the rand shuffle.
    use rand::seq::SliceRandom;
    order.shuffle(&mut rng);
    Ok(order.chunks(batch_size).map(<[usize]>::to_vec).collect())
}

/// Minibatch schedule over a dataset's train split (dataset row indices).
pub fn batches(
    dataset: &Dataset,
    batch_size: usize,
    seed: u64,
    epoch: u64,
) -> Result<Vec<Vec<usize>>> {
    let positions = batch_positions(dataset.train_indices().len(), batch_size, seed, epoch)?;
    Ok(positions
        .into_iter()
        .map(|batch| batch.into_iter().map(|p| dataset.train_indices()[p]).collect())
        .collect())
}
