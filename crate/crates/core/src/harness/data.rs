//! Dataset ingestion (label-last CSV, no header) and the synthetic blob generator.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{config, Error, Result};
use crate::hdc::{FeatureScaler, LabeledDataset};
use crate::seed;

/// Shapes of the public benchmark datasets, by lowercase name:
/// `(features, classes, train rows, test rows)`.
pub const KNOWN_DATASETS: [(&str, usize, usize, usize, usize); 4] = [
    ("isolet", 617, 26, 6238, 1559),
    ("ucihar", 261, 12, 6213, 1554),
    ("pamap2", 75, 5, 611_142, 101_582),
    ("page", 10, 5, 4925, 548),
];

pub fn known_shape(name: &str) -> Option<(usize, usize)> {
    let lower = name.to_ascii_lowercase();
    KNOWN_DATASETS
        .iter()
        .find(|d| d.0 == lower)
        .map(|d| (d.1, d.2))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub name: String,
    pub train: PathBuf,
    pub test: PathBuf,
    /// Expected feature count; defaults to the known shape for named datasets.
    #[serde(default)]
    pub features: Option<usize>,
    #[serde(default)]
    pub classes: Option<usize>,
}

/// Train/test pair after label remapping and min-max scaling.
#[derive(Debug, Clone)]
pub struct DatasetSplit {
    pub name: String,
    pub train: LabeledDataset,
    pub test: LabeledDataset,
    pub scaler: FeatureScaler,
    /// Original label value of each class index, ascending.
    pub label_values: Vec<i64>,
}

struct RawRows {
    features: Vec<Vec<f64>>,
    labels: Vec<i64>,
}

fn ingestion(path: &Path, row: usize, message: impl Into<String>) -> Error {
    Error::Ingestion {
        file: path.display().to_string(),
        row,
        message: message.into(),
    }
}

fn parse_label(field: &str) -> Option<i64> {
    let t = field.trim();
    t.parse::<i64>().ok().or_else(|| {
        let v: f64 = t.parse().ok()?;
        (v.is_finite() && v.fract() == 0.0 && v.abs() < 9.0e15).then_some(v as i64)
    })
}

fn read_rows(path: &Path) -> Result<RawRows> {
    let file = File::open(path).map_err(|e| ingestion(path, 0, format!("cannot open: {e}")))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let mut width = None;
    let mut rows = RawRows {
        features: Vec::new(),
        labels: Vec::new(),
    };
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| ingestion(path, row, e.to_string()))?;
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        if record.len() < 2 {
            return Err(ingestion(path, row, "need at least one feature and a label"));
        }
        match width {
            None => width = Some(record.len()),
            Some(w) if w != record.len() => {
                return Err(ingestion(
                    path,
                    row,
                    format!("ragged row: {} fields, expected {w}", record.len()),
                ))
            }
            _ => {}
        }
        let n = record.len() - 1;
        let mut feats = Vec::with_capacity(n);
        for (j, field) in record.iter().take(n).enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| ingestion(path, row, format!("column {j}: '{field}' is not a number")))?;
            if !v.is_finite() {
                return Err(ingestion(path, row, format!("column {j}: non-finite value '{field}'")));
            }
            feats.push(v);
        }
        let label = parse_label(&record[n])
            .ok_or_else(|| ingestion(path, row, format!("label '{}' is not an integer", &record[n])))?;
        rows.features.push(feats);
        rows.labels.push(label);
    }
    if rows.labels.is_empty() {
        return Err(ingestion(path, 0, "no data rows"));
    }
    Ok(rows)
}

/// Reads both splits, maps labels to `0..C` in ascending original order, and
/// scales features by the training split's min/max.
pub fn load_dataset(spec: &DatasetSpec) -> Result<DatasetSplit> {
    let train_raw = read_rows(&spec.train)?;
    let test_raw = read_rows(&spec.test)?;

    let label_map: BTreeMap<i64, usize> = {
        let mut values: Vec<i64> = train_raw.labels.clone();
        values.sort_unstable();
        values.dedup();
        values.into_iter().enumerate().map(|(i, v)| (v, i)).collect()
    };
    let label_values: Vec<i64> = label_map.keys().copied().collect();
    let classes = label_values.len();
    let width = train_raw.features[0].len();

    let known = known_shape(&spec.name);
    if let Some(expected) = spec.features.or(known.map(|k| k.0)) {
        if expected != width {
            return Err(ingestion(
                &spec.train,
                1,
                format!("{} features, dataset '{}' expects {expected}", width, spec.name),
            ));
        }
    }
    if let Some(expected) = spec.classes.or(known.map(|k| k.1)) {
        if expected != classes {
            return Err(ingestion(
                &spec.train,
                0,
                format!("{classes} classes, dataset '{}' expects {expected}", spec.name),
            ));
        }
    }
    if let Some(w) = test_raw.features.first().map(Vec::len) {
        if w != width {
            return Err(ingestion(&spec.test, 1, format!("{w} features, train split has {width}")));
        }
    }

    let map_labels = |raw: &RawRows, path: &Path| -> Result<Vec<usize>> {
        raw.labels
            .iter()
            .enumerate()
            .map(|(i, l)| {
                label_map
                    .get(l)
                    .copied()
                    .ok_or_else(|| ingestion(path, i + 1, format!("label {l} does not occur in the training split")))
            })
            .collect()
    };
    let train_labels = map_labels(&train_raw, &spec.train)?;
    let test_labels = map_labels(&test_raw, &spec.test)?;

    let train = LabeledDataset::new(train_raw.features, train_labels, classes)?;
    let test = LabeledDataset::new(test_raw.features, test_labels, classes)?;
    let scaler = FeatureScaler::fit(&train);
    Ok(DatasetSplit {
        name: spec.name.clone(),
        train: scaler.transform(&train),
        test: scaler.transform(&test),
        scaler,
        label_values,
    })
}

/// Reads one CSV file against an existing label mapping and scaler, e.g. to
/// score a saved model on fresh data.
pub fn load_labeled(
    path: &Path,
    label_values: &[i64],
    scaler: Option<&FeatureScaler>,
) -> Result<LabeledDataset> {
    let raw = read_rows(path)?;
    let labels = raw
        .labels
        .iter()
        .enumerate()
        .map(|(i, l)| {
            label_values
                .binary_search(l)
                .map_err(|_| ingestion(path, i + 1, format!("label {l} is unknown to the model")))
        })
        .collect::<Result<Vec<_>>>()?;
    let data = LabeledDataset::new(raw.features, labels, label_values.len())?;
    Ok(match scaler {
        Some(s) => s.transform(&data),
        None => data,
    })
}

/// Isotropic Gaussian clusters with uniformly placed centers in `[0,1]^F`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlobSpec {
    pub classes: usize,
    pub features: usize,
    pub train_per_class: usize,
    pub test_per_class: usize,
    /// Per-feature standard deviation around each center.
    pub spread: f64,
    #[serde(default)]
    pub seed: u64,
}

impl Default for BlobSpec {
    fn default() -> Self {
        Self {
            classes: 16,
            features: 16,
            train_per_class: 40,
            test_per_class: 25,
            spread: 0.12,
            seed: 0,
        }
    }
}

impl BlobSpec {
    fn validate(&self) -> Result<()> {
        if self.classes == 0 || self.features == 0 || self.train_per_class == 0 {
            return Err(config("blobs need classes, features and train_per_class >= 1"));
        }
        if !(self.spread >= 0.0 && self.spread.is_finite()) {
            return Err(config(format!("invalid blob spread {}", self.spread)));
        }
        Ok(())
    }

    pub fn name(&self) -> String {
        format!("blobs-c{}-f{}-s{}", self.classes, self.features, self.seed)
    }
}

/// Raw (unscaled) blob splits; samples cycle through the classes.
pub fn generate_blobs(spec: &BlobSpec) -> Result<(LabeledDataset, LabeledDataset)> {
    spec.validate()?;
    let mut rng = seed::rng(spec.seed);
    let centers: Vec<Vec<f64>> = (0..spec.classes)
        .map(|_| (0..spec.features).map(|_| rng.random::<f64>()).collect())
        .collect();
    let noise = Normal::new(0.0, spec.spread).map_err(|e| config(e.to_string()))?;
    let mut draw = |per_class: usize| {
        let mut features = Vec::with_capacity(per_class * spec.classes);
        let mut labels = Vec::with_capacity(per_class * spec.classes);
        for _ in 0..per_class {
            for (c, center) in centers.iter().enumerate() {
                features.push(center.iter().map(|m| m + noise.sample(&mut rng)).collect());
                labels.push(c);
            }
        }
        LabeledDataset::new(features, labels, spec.classes)
    };
    let train = draw(spec.train_per_class)?;
    let test = draw(spec.test_per_class)?;
    Ok((train, test))
}

/// Generated blobs scaled exactly as CSV-loaded data would be.
pub fn blob_split(spec: &BlobSpec) -> Result<DatasetSplit> {
    let (train, test) = generate_blobs(spec)?;
    let scaler = FeatureScaler::fit(&train);
    Ok(DatasetSplit {
        name: spec.name(),
        train: scaler.transform(&train),
        test: scaler.transform(&test),
        scaler,
        label_values: (0..spec.classes as i64).collect(),
    })
}

/// Writes features then the integer label, comma-separated, no header.
pub fn write_dataset_csv(path: &Path, data: &LabeledDataset) -> Result<()> {
    let mut out = std::io::BufWriter::new(File::create(path)?);
    for (row, y) in data.features().iter().zip(data.labels()) {
        for v in row {
            write!(out, "{v},")?;
        }
        writeln!(out, "{y}")?;
    }
    out.flush()?;
    Ok(())
}
