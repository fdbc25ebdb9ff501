//! Encoding, similarity, and the one-prototype-per-class baseline.

use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

/// Dense real hypervector.
#[derive(Debug, Clone, PartialEq)]
pub struct Hypervector(Vec<f64>);

impl Hypervector {
    /// Wraps coordinates, rejecting empty or non-finite input.
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::Input("hypervector must have at least one coordinate".into()));
        }
        if let Some(i) = coords.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("non-finite hypervector coordinate at {i}")));
        }
        Ok(Self(coords))
    }

    pub(crate) fn from_raw(coords: Vec<f64>) -> Self {
        Self(coords)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }

    /// Scales to unit length in place; a zero vector is a domain error.
    pub fn normalize(&mut self) -> Result<()> {
        let n = self.norm();
        if n == 0.0 {
            return Err(Error::Domain("cannot normalize a zero vector".into()));
        }
        self.0.iter_mut().for_each(|v| *v /= n);
        Ok(())
    }

    pub fn is_normalized(&self, tol: f64) -> bool {
        (self.norm() - 1.0).abs() <= tol
    }
}

pub fn dot(u: &[f64], v: &[f64]) -> f64 {
    debug_assert_eq!(u.len(), v.len());
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

pub fn norm(u: &[f64]) -> f64 {
    dot(u, u).sqrt()
}

/// Cosine similarity. Zero vectors and length mismatches are errors.
pub fn cosine(u: &Hypervector, v: &Hypervector) -> Result<f64> {
    if u.dim() != v.dim() {
        return Err(Error::Input(format!(
            "dimension mismatch: {} vs {}",
            u.dim(),
            v.dim()
        )));
    }
    let (nu, nv) = (u.norm(), v.norm());
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::Domain("cosine of a zero vector".into()));
    }
    Ok((dot(u.as_slice(), v.as_slice()) / (nu * nv)).clamp(-1.0, 1.0))
}

/// Cosine similarity for inference over stored (possibly corrupted) state.
/// A zero-norm stored vector carries no evidence and scores 0.
pub fn similarity(u: &[f64], v: &[f64]) -> f64 {
    let denom = norm(u) * norm(v);
    if denom == 0.0 {
        0.0
    } else {
        (dot(u, v) / denom).clamp(-1.0, 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Nonlinearity {
    #[default]
    Cosine,
    Sign,
    None,
}

impl Nonlinearity {
    fn apply(self, z: f64) -> f64 {
        match self {
            Nonlinearity::Cosine => z.cos(),
            Nonlinearity::Sign => {
                if z >= 0.0 {
                    1.0
                } else {
                    -1.0
                }
            }
            Nonlinearity::None => z,
        }
    }

    pub fn code(self) -> u8 {
        match self {
            Nonlinearity::Cosine => 0,
            Nonlinearity::Sign => 1,
            Nonlinearity::None => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Nonlinearity::Cosine),
            1 => Some(Nonlinearity::Sign),
            2 => Some(Nonlinearity::None),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderSpec {
    pub input_dim: usize,
    pub hyper_dim: usize,
    pub seed: u64,
    #[serde(default)]
    pub nonlinearity: Nonlinearity,
}

impl EncoderSpec {
    pub fn new(input_dim: usize, hyper_dim: usize, seed: u64) -> Self {
        Self {
            input_dim,
            hyper_dim,
            seed,
            nonlinearity: Nonlinearity::Cosine,
        }
    }

    pub fn with_nonlinearity(mut self, nonlinearity: Nonlinearity) -> Self {
        self.nonlinearity = nonlinearity;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.hyper_dim == 0 {
            return Err(Error::Config(format!(
                "encoder dimensions must be positive (input_dim={}, hyper_dim={})",
                self.input_dim, self.hyper_dim
            )));
        }
        Ok(())
    }
}

/// Random-projection encoder: `h_j = f(<w_j, x> + b_j)`, then unit-normalized.
///
/// `w_j` has i.i.d. standard-normal entries and `b_j ~ U[0, 2pi)`, all drawn
/// from a ChaCha8 stream seeded by the spec, so the same spec always yields
/// the same projection.
#[derive(Debug, Clone)]
pub struct Encoder {
    spec: EncoderSpec,
    /// `hyper_dim x input_dim`, row-major.
    projection: Vec<f64>,
    phase: Vec<f64>,
}

impl Encoder {
    pub fn new(spec: EncoderSpec) -> Result<Self> {
        spec.validate()?;
        let mut rng = seed::rng(spec.seed);
        let projection: Vec<f64> = (0..spec.hyper_dim * spec.input_dim)
            .map(|_| rng.sample(StandardNormal))
            .collect();
        let phase: Vec<f64> = (0..spec.hyper_dim)
            .map(|_| rng.random::<f64>() * std::f64::consts::TAU)
            .collect();
        Ok(Self {
            spec,
            projection,
            phase,
        })
    }

    pub fn spec(&self) -> &EncoderSpec {
        &self.spec
    }

    pub fn encode(&self, x: &[f64]) -> Result<Hypervector> {
        if x.len() != self.spec.input_dim {
            return Err(Error::Input(format!(
                "feature vector has length {}, encoder expects {}",
                x.len(),
                self.spec.input_dim
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("feature vector contains non-finite values".into()));
        }
        let f = self.spec.nonlinearity;
        let coords = self
            .projection
            .chunks_exact(self.spec.input_dim)
            .zip(&self.phase)
            .map(|(row, b)| f.apply(dot(row, x) + b))
            .collect();
        let mut h = Hypervector::from_raw(coords);
        h.normalize()?;
        Ok(h)
    }

    /// Encodes every row in parallel; output order matches input order.
    pub fn encode_all(&self, xs: &[Vec<f64>]) -> Result<Vec<Hypervector>> {
        xs.par_iter().map(|x| self.encode(x)).collect()
    }
}

/// One-shot encode; builds the projection each call. Prefer [`Encoder`] in loops.
pub fn encode(spec: &EncoderSpec, x: &[f64]) -> Result<Hypervector> {
    Encoder::new(*spec)?.encode(x)
}

/// Feature rows with labels in `0..class_count`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    features: Vec<Vec<f64>>,
    labels: Vec<usize>,
    class_count: usize,
}

impl LabeledDataset {
    pub fn new(features: Vec<Vec<f64>>, labels: Vec<usize>, class_count: usize) -> Result<Self> {
        if features.len() != labels.len() {
            return Err(Error::Input(format!(
                "{} feature rows but {} labels",
                features.len(),
                labels.len()
            )));
        }
        if class_count == 0 {
            return Err(Error::Input("class count must be positive".into()));
        }
        if let Some(first) = features.first() {
            let width = first.len();
            if width == 0 {
                return Err(Error::Input("feature rows must be non-empty".into()));
            }
            if let Some(i) = features.iter().position(|r| r.len() != width) {
                return Err(Error::Input(format!(
                    "row {i} has {} features, expected {width}",
                    features[i].len()
                )));
            }
        }
        if let Some(i) = labels.iter().position(|&y| y >= class_count) {
            return Err(Error::Input(format!(
                "label {} at row {i} out of range 0..{class_count}",
                labels[i]
            )));
        }
        Ok(Self {
            features,
            labels,
            class_count,
        })
    }

    pub fn features(&self) -> &[Vec<f64>] {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn feature_count(&self) -> usize {
        self.features.first().map_or(0, Vec::len)
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.class_count];
        for &y in &self.labels {
            counts[y] += 1;
        }
        counts
    }

    /// Error naming the first class with no samples, if any.
    pub fn require_all_classes(&self) -> Result<()> {
        match self.class_counts().iter().position(|&n| n == 0) {
            Some(c) => Err(Error::Training(format!("class {c} has no training samples"))),
            None => Ok(()),
        }
    }

    pub fn map_features(&self, f: impl Fn(&[f64]) -> Vec<f64>) -> Self {
        Self {
            features: self.features.iter().map(|r| f(r)).collect(),
            labels: self.labels.clone(),
            class_count: self.class_count,
        }
    }
}

/// Encoded samples with their labels; the shared input to every model.
#[derive(Debug, Clone)]
pub struct EncodedSet {
    pub vectors: Vec<Hypervector>,
    pub labels: Vec<usize>,
    pub class_count: usize,
}

impl EncodedSet {
    pub fn encode(encoder: &Encoder, data: &LabeledDataset) -> Result<Self> {
        Ok(Self {
            vectors: encoder.encode_all(data.features())?,
            labels: data.labels().to_vec(),
            class_count: data.class_count(),
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Per-feature min-max scaling to `[0, 1]`, fit on a training split.
/// Constant features map to 0. Values outside the fitted range are not clipped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureScaler {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl FeatureScaler {
    pub fn fit(data: &LabeledDataset) -> Self {
        let width = data.feature_count();
        let mut min = vec![f64::INFINITY; width];
        let mut max = vec![f64::NEG_INFINITY; width];
        for row in data.features() {
            for (i, &v) in row.iter().enumerate() {
                min[i] = min[i].min(v);
                max[i] = max[i].max(v);
            }
        }
        Self { min, max }
    }

    pub fn transform_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.min.iter().zip(&self.max))
            .map(|(&v, (&lo, &hi))| {
                let span = hi - lo;
                if span > 0.0 {
                    (v - lo) / span
                } else {
                    0.0
                }
            })
            .collect()
    }

    pub fn transform(&self, data: &LabeledDataset) -> LabeledDataset {
        data.map_features(|r| self.transform_row(r))
    }
}

/// Conventional HDC: one normalized prototype per class.
#[derive(Debug, Clone)]
pub struct PrototypeModel {
    prototypes: Vec<Hypervector>,
    encoder: Arc<Encoder>,
}

impl PrototypeModel {
    /// Wraps stored prototypes without re-normalizing them (e.g. after dequantization).
    pub fn from_parts(prototypes: Vec<Hypervector>, encoder: Arc<Encoder>) -> Result<Self> {
        if prototypes.is_empty() {
            return Err(Error::Input("model needs at least one prototype".into()));
        }
        let d = encoder.spec().hyper_dim;
        if let Some(c) = prototypes.iter().position(|p| p.dim() != d) {
            return Err(Error::Input(format!(
                "prototype {c} has dimension {}, encoder produces {d}",
                prototypes[c].dim()
            )));
        }
        Ok(Self {
            prototypes,
            encoder,
        })
    }

    /// `H_c = normalize(sum of encodings labelled c)`, accumulated in sample order.
    pub fn from_encoded(encoder: Arc<Encoder>, set: &EncodedSet) -> Result<Self> {
        let d = encoder.spec().hyper_dim;
        let mut sums = vec![vec![0.0; d]; set.class_count];
        let mut counts = vec![0usize; set.class_count];
        for (h, &y) in set.vectors.iter().zip(&set.labels) {
            counts[y] += 1;
            sums[y]
                .iter_mut()
                .zip(h.as_slice())
                .for_each(|(s, v)| *s += v);
        }
        if let Some(c) = counts.iter().position(|&n| n == 0) {
            return Err(Error::Training(format!("class {c} has no training samples")));
        }
        let prototypes = sums
            .into_iter()
            .enumerate()
            .map(|(c, s)| {
                let mut h = Hypervector::from_raw(s);
                h.normalize().map_err(|_| {
                    Error::Training(format!("prototype sum for class {c} is exactly zero"))
                })?;
                Ok(h)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            prototypes,
            encoder,
        })
    }

    pub fn prototypes(&self) -> &[Hypervector] {
        &self.prototypes
    }

    pub fn class_count(&self) -> usize {
        self.prototypes.len()
    }

    pub fn encoder(&self) -> &Arc<Encoder> {
        &self.encoder
    }

    pub fn hyper_dim(&self) -> usize {
        self.encoder.spec().hyper_dim
    }

    /// Argmax of cosine similarity; ties resolve to the lowest class index.
    pub fn predict_encoded(&self, h: &Hypervector) -> usize {
        argmax(
            self.prototypes
                .iter()
                .map(|p| similarity(h.as_slice(), p.as_slice())),
        )
    }

    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        Ok(self.predict_encoded(&self.encoder.encode(x)?))
    }

    pub(crate) fn with_prototypes(&self, prototypes: Vec<Hypervector>) -> Self {
        Self {
            prototypes,
            encoder: Arc::clone(&self.encoder),
        }
    }
}

pub fn train_prototypes(data: &LabeledDataset, spec: &EncoderSpec) -> Result<PrototypeModel> {
    data.require_all_classes()?;
    let encoder = Arc::new(Encoder::new(*spec)?);
    let set = EncodedSet::encode(&encoder, data)?;
    PrototypeModel::from_encoded(encoder, &set)
}

pub fn predict_conventional(model: &PrototypeModel, x: &[f64]) -> Result<usize> {
    model.predict(x)
}

/// Index of the first maximum.
pub(crate) fn argmax(scores: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, s) in scores.enumerate() {
        if s > best.1 {
            best = (i, s);
        }
    }
    best.0
}

/// Index of the first minimum.
pub(crate) fn argmin(scores: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::INFINITY);
    for (i, s) in scores.enumerate() {
        if s < best.1 {
            best = (i, s);
        }
    }
    best.0
}
