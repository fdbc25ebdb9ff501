//! Feature-axis sparsification, post-training quantization, and the hybrid
//! class+feature composition.

use serde::{Deserialize, Serialize};

use crate::error::{config, Error, Result};
use crate::hdc::{EncodedSet, Hypervector, PrototypeModel};
use crate::loghd::{estimate_profiles_encoded, LogHdModel};

/// Dimension-wise pruning mask shared by every stored vector of a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparsityMask {
    retained: Vec<bool>,
    sparsity: f64,
}

impl SparsityMask {
    pub fn full(dim: usize) -> Self {
        Self {
            retained: vec![true; dim],
            sparsity: 0.0,
        }
    }

    pub fn from_retained(retained: Vec<bool>, sparsity: f64) -> Self {
        Self { retained, sparsity }
    }

    /// Prunes the `D - round((1-S) D)` lowest-scoring dimensions.
    /// Equal scores prune the lower index first.
    pub fn from_scores(scores: &[f64], sparsity: f64) -> Result<Self> {
        let d = scores.len();
        let keep = retained_count(d, sparsity)?;
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
        let mut retained = vec![true; d];
        for &i in &order[..d - keep] {
            retained[i] = false;
        }
        Ok(Self { retained, sparsity })
    }

    pub fn dim(&self) -> usize {
        self.retained.len()
    }

    pub fn sparsity(&self) -> f64 {
        self.sparsity
    }

    pub fn retained(&self) -> &[bool] {
        &self.retained
    }

    pub fn retained_count(&self) -> usize {
        self.retained.iter().filter(|&&r| r).count()
    }

    pub fn is_full(&self) -> bool {
        self.retained.iter().all(|&r| r)
    }

    pub fn pruned(&self) -> impl Iterator<Item = usize> + '_ {
        self.retained.iter().enumerate().filter(|(_, &r)| !r).map(|(i, _)| i)
    }

    /// Zeroes pruned coordinates.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        v.iter()
            .zip(&self.retained)
            .map(|(&x, &r)| if r { x } else { 0.0 })
            .collect()
    }

    pub fn apply_to_set(&self, set: &EncodedSet) -> EncodedSet {
        if self.is_full() {
            return set.clone();
        }
        EncodedSet {
            vectors: set
                .vectors
                .iter()
                .map(|h| Hypervector::from_raw(self.apply(h.as_slice())))
                .collect(),
            labels: set.labels.clone(),
            class_count: set.class_count,
        }
    }
}

/// `round((1-S) D)`, rejecting `S` outside `[0,1)` and empty results.
pub fn retained_count(dim: usize, sparsity: f64) -> Result<usize> {
    if !(0.0..1.0).contains(&sparsity) {
        return Err(config(format!("sparsity {sparsity} outside [0, 1)")));
    }
    let keep = ((1.0 - sparsity) * dim as f64).round() as usize;
    if keep == 0 {
        return Err(config(format!(
            "sparsity {sparsity} leaves no retained dimensions out of {dim}"
        )));
    }
    Ok(keep.min(dim))
}

/// Per-dimension variance across the stored class vectors.
///
/// With a single vector there is no spread to measure; its squared magnitude
/// is used instead.
pub fn saliency(vectors: &[Hypervector]) -> Vec<f64> {
    let d = vectors.first().map_or(0, Hypervector::dim);
    let count = vectors.len() as f64;
    (0..d)
        .map(|i| {
            if vectors.len() == 1 {
                let v = vectors[0].as_slice()[i];
                return v * v;
            }
            let mean = vectors.iter().map(|v| v.as_slice()[i]).sum::<f64>() / count;
            vectors
                .iter()
                .map(|v| {
                    let e = v.as_slice()[i] - mean;
                    e * e
                })
                .sum::<f64>()
                / count
        })
        .collect()
}

fn prune_vectors(vectors: &[Hypervector], mask: &SparsityMask) -> Result<Vec<Hypervector>> {
    vectors
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let mut out = Hypervector::from_raw(mask.apply(v.as_slice()));
            out.normalize()
                .map_err(|_| config(format!("vector {i} is zero after pruning")))?;
            Ok(out)
        })
        .collect()
}

/// Dimension-wise sparsification of a model's stored class-axis vectors.
pub trait Sparsify: Sized {
    fn sparsify(&self, sparsity: f64) -> Result<(Self, SparsityMask)>;
}

impl Sparsify for PrototypeModel {
    fn sparsify(&self, sparsity: f64) -> Result<(Self, SparsityMask)> {
        let mask = SparsityMask::from_scores(&saliency(self.prototypes()), sparsity)?;
        if mask.is_full() {
            return Ok((self.clone(), mask));
        }
        Ok((self.with_prototypes(prune_vectors(self.prototypes(), &mask)?), mask))
    }
}

/// Prunes bundles only; profiles are left as they were.
impl Sparsify for LogHdModel {
    fn sparsify(&self, sparsity: f64) -> Result<(Self, SparsityMask)> {
        let mask = SparsityMask::from_scores(&saliency(self.bundles()), sparsity)?;
        if mask.is_full() {
            return Ok((self.clone(), mask));
        }
        Ok((self.with_bundles(prune_vectors(self.bundles(), &mask)?), mask))
    }
}

/// Sparsifies the bundles, then re-estimates profiles from masked training encodings.
pub fn hybridize(
    model: &LogHdModel,
    sparsity: f64,
    train: &EncodedSet,
) -> Result<(LogHdModel, SparsityMask)> {
    let (pruned, mask) = model.sparsify(sparsity)?;
    if mask.is_full() {
        return Ok((pruned, mask));
    }
    let profiles = estimate_profiles_encoded(pruned.bundles(), &mask.apply_to_set(train))?;
    Ok((pruned.with_profiles(profiles)?, mask))
}

/// Bits per stored coordinate for raw IEEE-754 storage (lossless, not a quantization level).
pub const FLOAT_BITS: u8 = 64;

/// Symmetric uniform per-tensor quantization at 1, 2, 4 or 8 bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuantSpec {
    pub bits: u8,
}

impl QuantSpec {
    pub const ALLOWED_BITS: [u8; 4] = [1, 2, 4, 8];

    pub fn new(bits: u8) -> Result<Self> {
        if !Self::ALLOWED_BITS.contains(&bits) {
            return Err(config(format!("unsupported precision {bits} bits (allowed: 1, 2, 4, 8)")));
        }
        Ok(Self { bits })
    }

    /// Raw 64-bit float storage, used for lossless model files.
    pub fn lossless() -> Self {
        Self { bits: FLOAT_BITS }
    }

    pub fn is_lossless(&self) -> bool {
        self.bits == FLOAT_BITS
    }

    fn validate(&self) -> Result<()> {
        if self.is_lossless() {
            Ok(())
        } else {
            Self::new(self.bits).map(|_| ())
        }
    }
}

/// A set of equally sized vectors quantized with one scale and one mask.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub vectors: Vec<Vec<f64>>,
    pub mask: SparsityMask,
}

impl Tensor {
    pub fn dense(vectors: Vec<Vec<f64>>) -> Self {
        let dim = vectors.first().map_or(0, Vec::len);
        Self {
            vectors,
            mask: SparsityMask::full(dim),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensorHeader {
    pub vector_count: usize,
    pub dim: usize,
    pub scale: f64,
    pub retained: Vec<bool>,
}

impl TensorHeader {
    pub fn retained_count(&self) -> usize {
        self.retained.iter().filter(|&&r| r).count()
    }

    pub fn stored_coords(&self) -> usize {
        self.vector_count * self.retained_count()
    }
}

/// Bit-packed image of all stored model coordinates.
///
/// Codes are laid out tensor by tensor, vector by vector, retained coordinate
/// by coordinate, each code little-endian (LSB first) in a little-endian bit
/// stream. Pruned coordinates occupy no bits.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedState {
    bits: u8,
    tensors: Vec<TensorHeader>,
    payload: Vec<u8>,
    bit_len: u64,
}

fn tensor_scale(t: &Tensor, bits: u8) -> Result<f64> {
    let retained = t.vectors.iter().flat_map(|v| {
        v.iter()
            .zip(t.mask.retained())
            .filter(|(_, &r)| r)
            .map(|(&x, _)| x)
    });
    let scale = match bits {
        FLOAT_BITS => return Ok(1.0),
        1 => {
            let (sum, count) = retained.fold((0.0, 0usize), |(s, c), x| (s + x.abs(), c + 1));
            if count == 0 {
                0.0
            } else {
                sum / count as f64
            }
        }
        b => retained.fold(0.0f64, |m, x| m.max(x.abs())) / max_level(b) as f64,
    };
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::Domain("cannot quantize an all-zero tensor (scale is zero)".into()));
    }
    Ok(scale)
}

fn max_level(bits: u8) -> i64 {
    (1i64 << (bits - 1)) - 1
}

fn encode_coord(x: f64, scale: f64, bits: u8) -> u64 {
    match bits {
        FLOAT_BITS => x.to_bits(),
        1 => u64::from(x >= 0.0),
        b => {
            let q = max_level(b);
            let level = ((x / scale).round() as i64).clamp(-q, q);
            (level as u64) & ((1u64 << b) - 1)
        }
    }
}

fn decode_coord(code: u64, scale: f64, bits: u8) -> f64 {
    match bits {
        FLOAT_BITS => f64::from_bits(code),
        1 => {
            if code & 1 == 1 {
                scale
            } else {
                -scale
            }
        }
        b => {
            // sign-extend the b-bit two's complement code
            let shift = 64 - b as u32;
            let level = ((code << shift) as i64) >> shift;
            level as f64 * scale
        }
    }
}

struct BitWriter {
    bytes: Vec<u8>,
    len: u64,
}

impl BitWriter {
    fn push(&mut self, code: u64, bits: u8) {
        for b in 0..bits {
            let pos = self.len;
            if pos.is_multiple_of(8) {
                self.bytes.push(0);
            }
            if (code >> b) & 1 == 1 {
                self.bytes[(pos / 8) as usize] |= 1 << (pos % 8);
            }
            self.len += 1;
        }
    }
}

fn read_code(bytes: &[u8], start: u64, bits: u8) -> u64 {
    (0..bits as u64).fold(0u64, |acc, b| {
        let pos = start + b;
        let bit = (bytes[(pos / 8) as usize] >> (pos % 8)) & 1;
        acc | ((bit as u64) << b)
    })
}

pub fn quantize(tensors: &[Tensor], spec: &QuantSpec) -> Result<QuantizedState> {
    spec.validate()?;
    let bits = spec.bits;
    let mut writer = BitWriter {
        bytes: Vec::new(),
        len: 0,
    };
    let mut headers = Vec::with_capacity(tensors.len());
    for (ti, t) in tensors.iter().enumerate() {
        let dim = t.mask.dim();
        if let Some(v) = t.vectors.iter().find(|v| v.len() != dim) {
            return Err(Error::Input(format!(
                "tensor {ti}: vector of length {} under a mask of length {dim}",
                v.len()
            )));
        }
        if t.vectors.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::Domain(format!("tensor {ti} has non-finite coordinates")));
        }
        let scale = tensor_scale(t, bits).map_err(|e| Error::Domain(format!("tensor {ti}: {e}")))?;
        for v in &t.vectors {
            for (&x, _) in v.iter().zip(t.mask.retained()).filter(|(_, &r)| r) {
                writer.push(encode_coord(x, scale, bits), bits);
            }
        }
        headers.push(TensorHeader {
            vector_count: t.vectors.len(),
            dim,
            scale,
            retained: t.mask.retained().to_vec(),
        });
    }
    Ok(QuantizedState {
        bits,
        tensors: headers,
        payload: writer.bytes,
        bit_len: writer.len,
    })
}

/// Inverse of [`quantize`]; pruned coordinates come back as exact zeros.
pub fn dequantize(state: &QuantizedState) -> Vec<Vec<Vec<f64>>> {
    let bits = state.bits;
    let mut pos = 0u64;
    state
        .tensors
        .iter()
        .map(|t| {
            (0..t.vector_count)
                .map(|_| {
                    t.retained
                        .iter()
                        .map(|&r| {
                            if !r {
                                return 0.0;
                            }
                            let x = decode_coord(read_code(&state.payload, pos, bits), t.scale, bits);
                            pos += bits as u64;
                            x
                        })
                        .collect()
                })
                .collect()
        })
        .collect()
}

impl QuantizedState {
    /// Reassembles a state read from storage, checking that the payload
    /// length agrees with the tensor layout.
    pub fn from_parts(bits: u8, tensors: Vec<TensorHeader>, payload: Vec<u8>) -> Result<Self> {
        QuantSpec { bits }
            .validate()
            .map_err(|e| Error::Format(e.to_string()))?;
        for (i, t) in tensors.iter().enumerate() {
            if t.retained.len() != t.dim {
                return Err(Error::Format(format!("tensor {i}: mask length differs from dim")));
            }
            if !(t.scale > 0.0 && t.scale.is_finite()) {
                return Err(Error::Format(format!("tensor {i}: invalid scale {}", t.scale)));
            }
        }
        let bit_len: u64 = tensors
            .iter()
            .map(|t| (t.stored_coords() * bits as usize) as u64)
            .sum();
        if payload.len() as u64 != bit_len.div_ceil(8) {
            return Err(Error::Format(format!(
                "payload has {} bytes, layout needs {}",
                payload.len(),
                bit_len.div_ceil(8)
            )));
        }
        Ok(Self {
            bits,
            tensors,
            payload,
            bit_len,
        })
    }

    pub fn bits(&self) -> u8 {
        self.bits
    }

    pub fn tensors(&self) -> &[TensorHeader] {
        &self.tensors
    }

    pub fn payload(&self) -> &[u8] {
        &self.payload
    }

    /// Number of meaningful bits in the payload (the final byte may be padded).
    pub fn bit_len(&self) -> u64 {
        self.bit_len
    }

    pub fn stored_coords(&self) -> usize {
        self.tensors.iter().map(TensorHeader::stored_coords).sum()
    }

    pub fn bit(&self, i: u64) -> bool {
        (self.payload[(i / 8) as usize] >> (i % 8)) & 1 == 1
    }

    pub(crate) fn flip(&mut self, i: u64) {
        self.payload[(i / 8) as usize] ^= 1 << (i % 8);
    }

    pub fn dequantize(&self) -> Vec<Vec<Vec<f64>>> {
        dequantize(self)
    }
}
