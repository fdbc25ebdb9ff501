//! A trained model as it is stored: method tag, class-axis state, and the
//! dimension mask applied to it.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codebook::Codebook;
use crate::compression::{hybridize, Sparsify, SparsityMask, Tensor};
use crate::error::{Error, Result};
use crate::hdc::{EncodedSet, Hypervector, PrototypeModel};
use crate::loghd::{LogHdModel, MemoryFootprint};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Conventional,
    #[serde(rename = "loghd")]
    LogHd,
    #[serde(rename = "sparsehd")]
    SparseHd,
    Hybrid,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::Conventional,
        Method::LogHd,
        Method::SparseHd,
        Method::Hybrid,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Conventional => "conventional",
            Method::LogHd => "loghd",
            Method::SparseHd => "sparsehd",
            Method::Hybrid => "hybrid",
        }
    }

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }

    pub fn is_class_axis(self) -> bool {
        matches!(self, Method::LogHd | Method::Hybrid)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown method '{s}'")))
    }
}

#[derive(Debug, Clone)]
pub enum ModelState {
    Prototypes(PrototypeModel),
    LogHd(LogHdModel),
}

#[derive(Debug, Clone)]
pub struct StoredModel {
    method: Method,
    state: ModelState,
    mask: SparsityMask,
}

impl StoredModel {
    pub fn conventional(model: PrototypeModel) -> Self {
        let d = model.hyper_dim();
        Self {
            method: Method::Conventional,
            state: ModelState::Prototypes(model),
            mask: SparsityMask::full(d),
        }
    }

    pub fn sparsehd(model: &PrototypeModel, sparsity: f64) -> Result<Self> {
        let (pruned, mask) = model.sparsify(sparsity)?;
        Ok(Self {
            method: Method::SparseHd,
            state: ModelState::Prototypes(pruned),
            mask,
        })
    }

    pub fn loghd(model: LogHdModel) -> Self {
        let d = model.hyper_dim();
        Self {
            method: Method::LogHd,
            state: ModelState::LogHd(model),
            mask: SparsityMask::full(d),
        }
    }

    pub fn hybrid(model: &LogHdModel, sparsity: f64, train: &EncodedSet) -> Result<Self> {
        let (pruned, mask) = hybridize(model, sparsity, train)?;
        Ok(Self {
            method: Method::Hybrid,
            state: ModelState::LogHd(pruned),
            mask,
        })
    }

    pub fn from_parts(method: Method, state: ModelState, mask: SparsityMask) -> Result<Self> {
        let consistent = matches!(
            (&state, method.is_class_axis()),
            (ModelState::LogHd(_), true) | (ModelState::Prototypes(_), false)
        );
        if !consistent {
            return Err(Error::Input(format!("{method} does not match the stored model kind")));
        }
        let d = match &state {
            ModelState::Prototypes(p) => p.hyper_dim(),
            ModelState::LogHd(m) => m.hyper_dim(),
        };
        if mask.dim() != d {
            return Err(Error::Input(format!("mask length {} differs from D={d}", mask.dim())));
        }
        Ok(Self { method, state, mask })
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn state(&self) -> &ModelState {
        &self.state
    }

    pub fn mask(&self) -> &SparsityMask {
        &self.mask
    }

    pub fn sparsity(&self) -> f64 {
        self.mask.sparsity()
    }

    pub fn class_count(&self) -> usize {
        match &self.state {
            ModelState::Prototypes(p) => p.class_count(),
            ModelState::LogHd(m) => m.class_count(),
        }
    }

    pub fn hyper_dim(&self) -> usize {
        self.mask.dim()
    }

    pub fn codebook(&self) -> Option<&Codebook> {
        match &self.state {
            ModelState::LogHd(m) => Some(m.codebook()),
            ModelState::Prototypes(_) => None,
        }
    }

    pub fn as_loghd(&self) -> Option<&LogHdModel> {
        match &self.state {
            ModelState::LogHd(m) => Some(m),
            ModelState::Prototypes(_) => None,
        }
    }

    pub fn as_prototypes(&self) -> Option<&PrototypeModel> {
        match &self.state {
            ModelState::Prototypes(p) => Some(p),
            ModelState::LogHd(_) => None,
        }
    }

    /// Number of stored class-axis vectors (`C` or `n`).
    pub fn vector_count(&self) -> usize {
        match &self.state {
            ModelState::Prototypes(p) => p.class_count(),
            ModelState::LogHd(m) => m.bundle_count(),
        }
    }

    pub fn footprint(&self) -> MemoryFootprint {
        let mut f = MemoryFootprint::new(
            self.class_count(),
            self.vector_count(),
            self.hyper_dim(),
            self.method.is_class_axis(),
        );
        f.vector_coords = self.vector_count() * self.mask.retained_count();
        f
    }

    /// Stored tensors: class-axis vectors under the mask, then (LogHD) profiles.
    pub fn tensors(&self) -> Vec<Tensor> {
        let to_rows = |vs: &[Hypervector]| vs.iter().map(|v| v.as_slice().to_vec()).collect();
        match &self.state {
            ModelState::Prototypes(p) => vec![Tensor {
                vectors: to_rows(p.prototypes()),
                mask: self.mask.clone(),
            }],
            ModelState::LogHd(m) => vec![
                Tensor {
                    vectors: to_rows(m.bundles()),
                    mask: self.mask.clone(),
                },
                Tensor::dense(m.profiles().to_vec()),
            ],
        }
    }

    /// Rebuilds the model around (dequantized) stored tensors.
    pub fn restore(&self, mut tensors: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        let expected = if self.method.is_class_axis() { 2 } else { 1 };
        if tensors.len() != expected {
            return Err(Error::Format(format!(
                "{} stores {expected} tensors, got {}",
                self.method,
                tensors.len()
            )));
        }
        let vectors = tensors
            .remove(0)
            .into_iter()
            .map(Hypervector::new)
            .collect::<Result<Vec<_>>>()?;
        let state = match &self.state {
            ModelState::Prototypes(p) => {
                ModelState::Prototypes(PrototypeModel::from_parts(vectors, p.encoder().clone())?)
            }
            ModelState::LogHd(m) => ModelState::LogHd(LogHdModel::from_parts(
                vectors,
                tensors.remove(0),
                m.codebook().clone(),
                m.encoder().clone(),
            )?),
        };
        Ok(Self {
            method: self.method,
            state,
            mask: self.mask.clone(),
        })
    }

    /// Restricts encodings to retained dimensions.
    pub fn prepare(&self, set: &EncodedSet) -> EncodedSet {
        self.mask.apply_to_set(set)
    }

    /// Prediction for an encoding already restricted by [`StoredModel::prepare`].
    pub fn predict_prepared(&self, h: &Hypervector) -> usize {
        match &self.state {
            ModelState::Prototypes(p) => p.predict_encoded(h),
            ModelState::LogHd(m) => m.predict_encoded(h),
        }
    }

    pub fn predict_encoded(&self, h: &Hypervector) -> usize {
        if self.mask.is_full() {
            self.predict_prepared(h)
        } else {
            self.predict_prepared(&Hypervector::from_raw(self.mask.apply(h.as_slice())))
        }
    }

    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        let encoder = match &self.state {
            ModelState::Prototypes(p) => p.encoder(),
            ModelState::LogHd(m) => m.encoder(),
        };
        Ok(self.predict_encoded(&encoder.encode(x)?))
    }

    pub fn accuracy_prepared(&self, prepared: &EncodedSet) -> f64 {
        if prepared.is_empty() {
            return 0.0;
        }
        let correct = prepared
            .vectors
            .par_iter()
            .zip(prepared.labels.par_iter())
            .filter(|(h, &y)| self.predict_prepared(h) == y)
            .count();
        correct as f64 / prepared.len() as f64
    }

    pub fn accuracy(&self, set: &EncodedSet) -> f64 {
        self.accuracy_prepared(&self.prepare(set))
    }
}
