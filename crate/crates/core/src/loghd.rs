//! Class-axis compressed classifier.
//!
//! `C` class prototypes are folded into `n` bundle hypervectors according to a
//! [`Codebook`]. A query is described by its `n` cosine activations against the
//! bundles and labelled with the class whose mean training activation (its
//! profile) is nearest in squared Euclidean distance.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codebook::Codebook;
use crate::error::{Error, Result};
use crate::hdc::{argmin, similarity, EncodedSet, Encoder, Hypervector, LabeledDataset, PrototypeModel};
use crate::seed;

pub const DEFAULT_EPOCHS: usize = 100;
pub const DEFAULT_LEARNING_RATE: f64 = 3e-4;

/// `n` cosine similarities of an encoded query against the bundles.
pub type ActivationVector = Vec<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefinementSpec {
    pub epochs: usize,
    pub learning_rate: f64,
    #[serde(default)]
    pub seed: u64,
    /// Re-estimate profiles against the refined bundles once all epochs finish.
    /// `false` keeps the profiles computed before refinement.
    #[serde(default = "yes")]
    pub refresh_profiles: bool,
}

fn yes() -> bool {
    true
}

impl Default for RefinementSpec {
    fn default() -> Self {
        Self {
            epochs: DEFAULT_EPOCHS,
            learning_rate: DEFAULT_LEARNING_RATE,
            seed: 0,
            refresh_profiles: true,
        }
    }
}

impl RefinementSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

/// Query-time operation counts.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct OpCounts {
    /// `D`-dimensional similarity evaluations.
    pub similarities: u64,
    /// `n`-dimensional profile distance evaluations.
    pub distances: u64,
}

#[derive(Debug, Clone)]
pub struct LogHdModel {
    bundles: Vec<Hypervector>,
    profiles: Vec<Vec<f64>>,
    codebook: Codebook,
    encoder: Arc<Encoder>,
}

/// `M_j = normalize(sum_c g(B[c][j]) H_c)`.
pub fn build_bundles(protos: &PrototypeModel, cb: &Codebook) -> Result<Vec<Hypervector>> {
    if protos.class_count() != cb.class_count() {
        return Err(Error::Input(format!(
            "{} prototypes but codebook has {} classes",
            protos.class_count(),
            cb.class_count()
        )));
    }
    let d = protos.hyper_dim();
    (0..cb.code_length())
        .map(|j| {
            let mut acc = vec![0.0; d];
            for (c, h) in protos.prototypes().iter().enumerate() {
                let w = cb.weight(c, j);
                if w != 0.0 {
                    acc.iter_mut().zip(h.as_slice()).for_each(|(a, v)| *a += w * v);
                }
            }
            let mut m = Hypervector::from_raw(acc);
            m.normalize()
                .map_err(|_| Error::Training(format!("bundle {j} is a zero vector")))?;
            Ok(m)
        })
        .collect()
}

fn activations_of(bundles: &[Hypervector], h: &Hypervector) -> ActivationVector {
    bundles
        .iter()
        .map(|m| similarity(m.as_slice(), h.as_slice()))
        .collect()
}

/// `P_c = mean of A(x)` over the samples of class `c`.
pub fn estimate_profiles_encoded(bundles: &[Hypervector], set: &EncodedSet) -> Result<Vec<Vec<f64>>> {
    let acts: Vec<ActivationVector> = set
        .vectors
        .par_iter()
        .map(|h| activations_of(bundles, h))
        .collect();
    let n = bundles.len();
    let mut sums = vec![vec![0.0; n]; set.class_count];
    let mut counts = vec![0usize; set.class_count];
    for (a, &y) in acts.iter().zip(&set.labels) {
        counts[y] += 1;
        sums[y].iter_mut().zip(a).for_each(|(s, v)| *s += v);
    }
    if let Some(c) = counts.iter().position(|&k| k == 0) {
        return Err(Error::Training(format!("class {c} has no samples for its profile")));
    }
    for (s, &k) in sums.iter_mut().zip(&counts) {
        s.iter_mut().for_each(|v| *v /= k as f64);
    }
    Ok(sums)
}

pub fn estimate_profiles(
    bundles: &[Hypervector],
    data: &LabeledDataset,
    encoder: &Encoder,
) -> Result<Vec<Vec<f64>>> {
    estimate_profiles_encoded(bundles, &EncodedSet::encode(encoder, data)?)
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

impl LogHdModel {
    /// Bundles from the prototypes, then profiles from the training set.
    pub fn build(protos: &PrototypeModel, codebook: Codebook, train: &EncodedSet) -> Result<Self> {
        let bundles = build_bundles(protos, &codebook)?;
        let profiles = estimate_profiles_encoded(&bundles, train)?;
        Self::from_parts(bundles, profiles, codebook, Arc::clone(protos.encoder()))
    }

    /// Assembles a model from stored state. Bundles are not re-normalized.
    pub fn from_parts(
        bundles: Vec<Hypervector>,
        profiles: Vec<Vec<f64>>,
        codebook: Codebook,
        encoder: Arc<Encoder>,
    ) -> Result<Self> {
        let (c, n, d) = (codebook.class_count(), codebook.code_length(), encoder.spec().hyper_dim);
        if bundles.len() != n {
            return Err(Error::Input(format!("{} bundles for code length {n}", bundles.len())));
        }
        if profiles.len() != c {
            return Err(Error::Input(format!("{} profiles for {c} classes", profiles.len())));
        }
        if bundles.iter().any(|m| m.dim() != d) {
            return Err(Error::Input(format!("bundle dimension differs from encoder D={d}")));
        }
        if profiles.iter().any(|p| p.len() != n || p.iter().any(|v| !v.is_finite())) {
            return Err(Error::Input(format!("profiles must be finite vectors of length {n}")));
        }
        Ok(Self {
            bundles,
            profiles,
            codebook,
            encoder,
        })
    }

    pub fn bundles(&self) -> &[Hypervector] {
        &self.bundles
    }

    pub fn profiles(&self) -> &[Vec<f64>] {
        &self.profiles
    }

    pub fn codebook(&self) -> &Codebook {
        &self.codebook
    }

    pub fn encoder(&self) -> &Arc<Encoder> {
        &self.encoder
    }

    pub fn class_count(&self) -> usize {
        self.codebook.class_count()
    }

    pub fn bundle_count(&self) -> usize {
        self.bundles.len()
    }

    pub fn hyper_dim(&self) -> usize {
        self.encoder.spec().hyper_dim
    }

    pub fn activation(&self, x: &[f64]) -> Result<ActivationVector> {
        Ok(self.activation_encoded(&self.encoder.encode(x)?))
    }

    pub fn activation_encoded(&self, h: &Hypervector) -> ActivationVector {
        activations_of(&self.bundles, h)
    }

    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        Ok(self.predict_encoded(&self.encoder.encode(x)?))
    }

    pub fn predict_encoded(&self, h: &Hypervector) -> usize {
        self.predict_counted(h, &mut OpCounts::default())
    }

    /// Nearest profile; ties resolve to the lowest class index.
    pub fn predict_counted(&self, h: &Hypervector, ops: &mut OpCounts) -> usize {
        let a = self.activation_encoded(h);
        ops.similarities += self.bundles.len() as u64;
        ops.distances += self.profiles.len() as u64;
        argmin(self.profiles.iter().map(|p| squared_distance(&a, p)))
    }

    pub fn with_profiles(mut self, profiles: Vec<Vec<f64>>) -> Result<Self> {
        if profiles.len() != self.profiles.len() {
            return Err(Error::Input("profile count changed".into()));
        }
        self.profiles = profiles;
        Ok(self)
    }

    pub(crate) fn with_bundles(&self, bundles: Vec<Hypervector>) -> Self {
        Self {
            bundles,
            profiles: self.profiles.clone(),
            codebook: self.codebook.clone(),
            encoder: Arc::clone(&self.encoder),
        }
    }

    pub fn refine(&self, data: &LabeledDataset, spec: &RefinementSpec) -> Result<Self> {
        self.refine_encoded(&EncodedSet::encode(&self.encoder, data)?, spec)
    }

    /// Perceptron-style refinement toward code-implied targets.
    ///
    /// Each epoch visits the samples in a fresh seeded permutation; for every
    /// bundle `M_j += lr * (t_j - A_j) * h`, followed by renormalization.
    pub fn refine_encoded(&self, set: &EncodedSet, spec: &RefinementSpec) -> Result<Self> {
        spec.validate()?;
        if spec.epochs == 0 {
            return Ok(self.clone());
        }
        if set.class_count != self.class_count() {
            return Err(Error::Input(format!(
                "training set has {} classes, model has {}",
                set.class_count,
                self.class_count()
            )));
        }
        let mut bundles = self.bundles.clone();
        let mut order: Vec<usize> = (0..set.len()).collect();
        let mut rng = seed::rng(spec.seed);
        for _ in 0..spec.epochs {
            order.shuffle(&mut rng);
            for &i in &order {
                refine_step(&mut bundles, &self.codebook, &set.vectors[i], set.labels[i], spec.learning_rate)?;
            }
        }
        let profiles = if spec.refresh_profiles {
            estimate_profiles_encoded(&bundles, set)?
        } else {
            self.profiles.clone()
        };
        Ok(Self {
            bundles,
            profiles,
            codebook: self.codebook.clone(),
            encoder: Arc::clone(&self.encoder),
        })
    }
}

/// One sample's update across all bundles.
pub fn refine_step(
    bundles: &mut [Hypervector],
    codebook: &Codebook,
    h: &Hypervector,
    label: usize,
    learning_rate: f64,
) -> Result<()> {
    let hs = h.as_slice();
    for (j, m) in bundles.iter_mut().enumerate() {
        let a = similarity(m.as_slice(), hs);
        let step = learning_rate * (codebook.target(label, j) - a);
        m.as_mut_slice()
            .iter_mut()
            .zip(hs)
            .for_each(|(v, x)| *v += step * x);
        m.normalize()
            .map_err(|_| Error::Training(format!("bundle {j} collapsed to zero during refinement")))?;
    }
    Ok(())
}

/// Storage accounting for a class-axis model versus the `C x D` baseline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MemoryFootprint {
    pub classes: usize,
    pub vectors: usize,
    pub hyper_dim: usize,
    pub vector_coords: usize,
    pub baseline_coords: usize,
    pub profile_coords: usize,
}

impl MemoryFootprint {
    pub fn new(classes: usize, vectors: usize, hyper_dim: usize, with_profiles: bool) -> Self {
        Self {
            classes,
            vectors,
            hyper_dim,
            vector_coords: vectors * hyper_dim,
            baseline_coords: classes * hyper_dim,
            profile_coords: if with_profiles { classes * vectors } else { 0 },
        }
    }

    /// Stored class-axis vectors as a fraction of the baseline (`n / C`).
    pub fn budget_fraction(&self) -> f64 {
        self.vector_coords as f64 / self.baseline_coords as f64
    }

    /// How many times fewer vectors than one-per-class (`C / n`).
    pub fn reduction_factor(&self) -> f64 {
        self.classes as f64 / self.vectors as f64
    }

    pub fn vector_bytes(&self, bits: u32) -> usize {
        (self.vector_coords * bits as usize).div_ceil(8)
    }

    pub fn profile_bytes(&self, bits: u32) -> usize {
        (self.profile_coords * bits as usize).div_ceil(8)
    }
}

pub fn model_memory(model: &LogHdModel) -> MemoryFootprint {
    MemoryFootprint::new(model.class_count(), model.bundle_count(), model.hyper_dim(), true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codebook::CodebookSpec;
    use crate::hdc::{EncoderSpec, LabeledDataset};

    fn encoder(input: usize, d: usize) -> Arc<Encoder> {
        Arc::new(Encoder::new(EncoderSpec::new(input, d, 21)).unwrap())
    }

    fn two_class_set(enc: &Encoder) -> EncodedSet {
        let data = LabeledDataset::new(
            vec![vec![0.1, 0.2], vec![0.9, 0.8], vec![0.15, 0.1], vec![0.8, 0.95]],
            vec![0, 1, 0, 1],
            2,
        )
        .unwrap();
        EncodedSet::encode(enc, &data).unwrap()
    }

    #[test]
    fn single_class_bundle_is_prototype() {
        let enc = encoder(2, 64);
        let data = LabeledDataset::new(vec![vec![0.3, 0.6]], vec![0], 1).unwrap();
        let set = EncodedSet::encode(&enc, &data).unwrap();
        let protos = PrototypeModel::from_encoded(Arc::clone(&enc), &set).unwrap();
        let cb = Codebook::from_rows(&[vec![1]], CodebookSpec::new(1, 2, 1)).unwrap();
        let bundles = build_bundles(&protos, &cb).unwrap();
        for (a, b) in bundles[0].as_slice().iter().zip(protos.prototypes()[0].as_slice()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_column_is_construction_error() {
        let enc = encoder(2, 64);
        let set = two_class_set(&enc);
        let protos = PrototypeModel::from_encoded(Arc::clone(&enc), &set).unwrap();
        let cb = Codebook::from_rows(&[vec![0, 0], vec![0, 1]], CodebookSpec::new(2, 2, 2)).unwrap();
        let err = build_bundles(&protos, &cb).unwrap_err();
        assert!(err.to_string().contains("bundle 0"), "{err}");
    }

    #[test]
    fn activation_of_a_bundle_is_one() {
        let enc = encoder(2, 128);
        let set = two_class_set(&enc);
        let protos = PrototypeModel::from_encoded(Arc::clone(&enc), &set).unwrap();
        let model = LogHdModel::build(&protos, Codebook::one_hot(2).unwrap(), &set).unwrap();
        let a = model.activation_encoded(&model.bundles()[0].clone());
        assert!((a[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn orthogonal_bundles_activation() {
        let enc = encoder(1, 2);
        let cb = Codebook::one_hot(2).unwrap();
        let bundles = vec![
            Hypervector::new(vec![1.0, 0.0]).unwrap(),
            Hypervector::new(vec![0.0, 1.0]).unwrap(),
        ];
        let model = LogHdModel::from_parts(bundles, vec![vec![1.0, 0.0], vec![0.0, 1.0]], cb, enc).unwrap();
        let a = model.activation_encoded(&Hypervector::new(vec![0.0, 1.0]).unwrap());
        assert_eq!(a, vec![0.0, 1.0]);
    }

    #[test]
    fn one_sample_per_class_profile_is_its_activation() {
        let enc = encoder(2, 128);
        let data = LabeledDataset::new(vec![vec![0.1, 0.2], vec![0.9, 0.8]], vec![0, 1], 2).unwrap();
        let set = EncodedSet::encode(&enc, &data).unwrap();
        let protos = PrototypeModel::from_encoded(Arc::clone(&enc), &set).unwrap();
        let model = LogHdModel::build(&protos, Codebook::one_hot(2).unwrap(), &set).unwrap();
        for c in 0..2 {
            assert_eq!(model.profiles()[c], model.activation_encoded(&set.vectors[c]));
        }
    }

    #[test]
    fn duplicated_samples_leave_profiles_unchanged() {
        let enc = encoder(2, 128);
        let set = two_class_set(&enc);
        let protos = PrototypeModel::from_encoded(Arc::clone(&enc), &set).unwrap();
        let bundles = build_bundles(&protos, &Codebook::one_hot(2).unwrap()).unwrap();
        let mut doubled = set.clone();
        doubled.vectors.extend(set.vectors.iter().cloned());
        doubled.labels.extend(set.labels.iter().copied());
        let a = estimate_profiles_encoded(&bundles, &set).unwrap();
        let b = estimate_profiles_encoded(&bundles, &doubled).unwrap();
        for (pa, pb) in a.iter().zip(&b) {
            for (x, y) in pa.iter().zip(pb) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn profile_of_empty_class_fails() {
        let enc = encoder(2, 32);
        let data = LabeledDataset::new(vec![vec![0.1, 0.2]], vec![0], 2).unwrap();
        let set = EncodedSet::encode(&enc, &data).unwrap();
        let bundles = vec![enc.encode(&[0.5, 0.5]).unwrap()];
        assert!(matches!(estimate_profiles_encoded(&bundles, &set), Err(Error::Training(_))));
    }

    #[test]
    fn exact_profile_match_wins_and_ties_go_low() {
        let enc = encoder(1, 2);
        let bundles = vec![
            Hypervector::new(vec![1.0, 0.0]).unwrap(),
            Hypervector::new(vec![0.0, 1.0]).unwrap(),
        ];
        let cb = Codebook::from_rows(&[vec![0, 1], vec![1, 0], vec![1, 1]], CodebookSpec::new(3, 2, 2)).unwrap();
        let q = Hypervector::new(vec![0.6, 0.8]).unwrap();
        let model = LogHdModel::from_parts(
            bundles.clone(),
            vec![vec![0.0, 1.0], vec![0.6, 0.8], vec![1.0, 0.0]],
            cb.clone(),
            Arc::clone(&enc),
        )
        .unwrap();
        assert_eq!(model.predict_encoded(&q), 1);
        let tied = LogHdModel::from_parts(
            bundles,
            vec![vec![0.0, 0.0], vec![0.5, 0.5], vec![0.5, 0.5]],
            cb,
            enc,
        )
        .unwrap();
        assert_eq!(tied.predict_encoded(&q), 1);
    }

    #[test]
    fn zero_epochs_is_identity() {
        let enc = encoder(2, 64);
        let set = two_class_set(&enc);
        let protos = PrototypeModel::from_encoded(Arc::clone(&enc), &set).unwrap();
        let model = LogHdModel::build(&protos, Codebook::one_hot(2).unwrap(), &set).unwrap();
        let spec = RefinementSpec {
            epochs: 0,
            ..RefinementSpec::default()
        };
        let refined = model.refine_encoded(&set, &spec).unwrap();
        assert_eq!(refined.bundles(), model.bundles());
        assert_eq!(refined.profiles(), model.profiles());
    }

    #[test]
    fn on_target_sample_leaves_bundles_unchanged() {
        // Bundle equals the sample, code symbol k-1 gives target 1 = activation.
        let h = Hypervector::new(vec![0.5, 0.5, 0.5, 0.5]).unwrap();
        let cb = Codebook::from_rows(&[vec![1]], CodebookSpec::new(1, 2, 1)).unwrap();
        let mut bundles = vec![h.clone()];
        refine_step(&mut bundles, &cb, &h, 0, 0.1).unwrap();
        assert_eq!(bundles[0], h);
    }

    #[test]
    fn refinement_keeps_bundles_normalized_and_is_deterministic() {
        let enc = encoder(2, 256);
        let set = two_class_set(&enc);
        let protos = PrototypeModel::from_encoded(Arc::clone(&enc), &set).unwrap();
        let model = LogHdModel::build(&protos, Codebook::one_hot(2).unwrap(), &set).unwrap();
        let spec = RefinementSpec {
            epochs: 5,
            learning_rate: 0.05,
            seed: 9,
            refresh_profiles: true,
        };
        let a = model.refine_encoded(&set, &spec).unwrap();
        let b = model.refine_encoded(&set, &spec).unwrap();
        assert_eq!(a.bundles(), b.bundles());
        for m in a.bundles() {
            assert!(m.is_normalized(1e-6));
        }
        let stale = model
            .refine_encoded(&set, &RefinementSpec { refresh_profiles: false, ..spec })
            .unwrap();
        assert_eq!(stale.profiles(), model.profiles());
        assert_eq!(stale.bundles(), a.bundles());
    }

    #[test]
    fn counters_report_n_similarities_and_c_distances() {
        let enc = encoder(2, 64);
        let set = two_class_set(&enc);
        let protos = PrototypeModel::from_encoded(Arc::clone(&enc), &set).unwrap();
        let model = LogHdModel::build(&protos, Codebook::one_hot(2).unwrap(), &set).unwrap();
        let mut ops = OpCounts::default();
        for h in &set.vectors {
            model.predict_counted(h, &mut ops);
        }
        assert_eq!(ops, OpCounts { similarities: 8, distances: 8 });
    }

    #[test]
    fn memory_accounting() {
        let m = MemoryFootprint::new(26, 3, 10_000, true);
        assert!((m.reduction_factor() - 26.0 / 3.0).abs() < 1e-12);
        assert_eq!(format!("{:.1}", m.reduction_factor()), "8.7");
        assert_eq!(m.vector_coords, 30_000);
        assert_eq!(m.baseline_coords, 260_000);
        assert_eq!(m.profile_coords, 78);
        assert_eq!(m.vector_bytes(1), 3750);
        let five = MemoryFootprint::new(5, 2, 100, true);
        assert_eq!(five.budget_fraction(), 0.4);
        assert_eq!(MemoryFootprint::new(7, 7, 64, true).budget_fraction(), 1.0);
    }
}
