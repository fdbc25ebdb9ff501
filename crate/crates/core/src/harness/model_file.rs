//! Binary model file.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! magic      "LOGHD1"
//! version    u16
//! method     u8        0 conventional, 1 loghd, 2 sparsehd, 3 hybrid
//! classes    u32
//! dim        u32       hypervector dimension D
//! bundles    u32       n (0 for prototype methods)
//! alphabet   u32       k (0 for prototype methods)
//! bits       u8        1, 2, 4, 8, or 64 for raw f64 storage
//! sparsity   f64
//! encoder    u32 input_dim, u64 seed, u8 nonlinearity
//! labels     u32 count, count x i64 original label values
//! scaler     u8 present, [u32 count, count x (f64 min, f64 max)]
//! codebook   (class-axis only) f64 alpha, f64 tie_epsilon, u32 pool_cap,
//!            u64 seed, classes*bundles u8 symbols
//! tensors    u32 count, per tensor: u32 vectors, u32 dim, f64 scale,
//!            ceil(dim/8) bytes retained-dimension bitmap
//! payload    u64 byte length, bytes (bit-packed codes, vector-major)
//! checksum   u32 CRC-32 of the payload bytes
//! ```

use std::path::Path;
use std::sync::Arc;

use crate::codebook::{Codebook, CodebookSpec};
use crate::compression::{quantize, QuantSpec, QuantizedState, SparsityMask, TensorHeader};
use crate::error::{Error, Result};
use crate::hdc::{Encoder, EncoderSpec, FeatureScaler, Hypervector, Nonlinearity, PrototypeModel};
use crate::loghd::LogHdModel;
use crate::stored::{Method, ModelState, StoredModel};

pub const MAGIC: &[u8; 6] = b"LOGHD1";
pub const VERSION: u16 = 1;

/// A quantized model plus what is needed to classify raw feature rows.
#[derive(Debug, Clone)]
pub struct ModelFile {
    /// The model as reconstructed from `state` (what inference sees).
    pub model: StoredModel,
    pub state: QuantizedState,
    pub scaler: Option<FeatureScaler>,
    pub label_values: Vec<i64>,
}

impl ModelFile {
    /// Quantizes `model`; the stored model is replaced by its dequantized form.
    pub fn new(
        model: &StoredModel,
        quant: &QuantSpec,
        scaler: Option<FeatureScaler>,
        label_values: Vec<i64>,
    ) -> Result<Self> {
        if label_values.len() != model.class_count() {
            return Err(Error::Input(format!(
                "{} label values for {} classes",
                label_values.len(),
                model.class_count()
            )));
        }
        let state = quantize(&model.tensors(), quant)?;
        let model = model.restore(state.dequantize())?;
        Ok(Self {
            model,
            state,
            scaler,
            label_values,
        })
    }

    /// Predicts the original label of an unscaled feature row.
    pub fn predict_raw(&self, x: &[f64]) -> Result<i64> {
        let class = match &self.scaler {
            Some(s) => self.model.predict(&s.transform_row(x))?,
            None => self.model.predict(x)?,
        };
        Ok(self.label_values[class])
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let m = &self.model;
        let mut w = Vec::new();
        w.extend_from_slice(MAGIC);
        w.extend_from_slice(&VERSION.to_le_bytes());
        w.push(m.method().code());
        put_u32(&mut w, m.class_count());
        put_u32(&mut w, m.hyper_dim());
        let cb = m.codebook();
        put_u32(&mut w, cb.map_or(0, Codebook::code_length));
        put_u32(&mut w, cb.map_or(0, |c| c.alphabet_size() as usize));
        w.push(self.state.bits());
        w.extend_from_slice(&m.sparsity().to_le_bytes());

        let enc = encoder_of(m).spec();
        put_u32(&mut w, enc.input_dim);
        w.extend_from_slice(&enc.seed.to_le_bytes());
        w.push(enc.nonlinearity.code());

        put_u32(&mut w, self.label_values.len());
        for v in &self.label_values {
            w.extend_from_slice(&v.to_le_bytes());
        }

        match &self.scaler {
            Some(s) => {
                w.push(1);
                put_u32(&mut w, s.min.len());
                for (lo, hi) in s.min.iter().zip(&s.max) {
                    w.extend_from_slice(&lo.to_le_bytes());
                    w.extend_from_slice(&hi.to_le_bytes());
                }
            }
            None => w.push(0),
        }

        if let Some(cb) = cb {
            let spec = cb.spec();
            w.extend_from_slice(&spec.alpha.to_le_bytes());
            w.extend_from_slice(&spec.tie_epsilon.to_le_bytes());
            put_u32(&mut w, spec.candidate_pool_cap);
            w.extend_from_slice(&spec.seed.to_le_bytes());
            for row in cb.rows() {
                w.extend_from_slice(row);
            }
        }

        put_u32(&mut w, self.state.tensors().len());
        for t in self.state.tensors() {
            put_u32(&mut w, t.vector_count);
            put_u32(&mut w, t.dim);
            w.extend_from_slice(&t.scale.to_le_bytes());
            let mut bitmap = vec![0u8; t.dim.div_ceil(8)];
            for (i, _) in t.retained.iter().enumerate().filter(|(_, &r)| r) {
                bitmap[i / 8] |= 1 << (i % 8);
            }
            w.extend_from_slice(&bitmap);
        }

        let payload = self.state.payload();
        w.extend_from_slice(&(payload.len() as u64).to_le_bytes());
        w.extend_from_slice(payload);
        w.extend_from_slice(&crc32fast::hash(payload).to_le_bytes());
        w
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(MAGIC.len())? != MAGIC {
            return Err(Error::Format("not a model file (bad magic)".into()));
        }
        let version = r.u16()?;
        if version != VERSION {
            return Err(Error::Format(format!(
                "unsupported model file version {version} (expected {VERSION})"
            )));
        }
        let method = Method::from_code(r.u8()?)
            .ok_or_else(|| Error::Format("unknown method code".into()))?;
        let classes = r.len32()?;
        let dim = r.len32()?;
        let bundles = r.len32()?;
        let alphabet = r.len32()?;
        let bits = r.u8()?;
        let sparsity = r.f64()?;

        let input_dim = r.len32()?;
        let seed = r.u64()?;
        let nonlinearity = Nonlinearity::from_code(r.u8()?)
            .ok_or_else(|| Error::Format("unknown nonlinearity code".into()))?;

        let label_count = r.len32()?;
        if label_count != classes {
            return Err(Error::Format(format!("{label_count} labels for {classes} classes")));
        }
        let label_values = (0..label_count).map(|_| r.i64()).collect::<Result<Vec<_>>>()?;

        let scaler = match r.u8()? {
            0 => None,
            1 => {
                let n = r.len32()?;
                let mut min = Vec::with_capacity(n);
                let mut max = Vec::with_capacity(n);
                for _ in 0..n {
                    min.push(r.f64()?);
                    max.push(r.f64()?);
                }
                Some(FeatureScaler { min, max })
            }
            other => return Err(Error::Format(format!("bad scaler flag {other}"))),
        };

        let codebook = if method.is_class_axis() {
            let alpha = r.f64()?;
            let tie_epsilon = r.f64()?;
            let cap = r.len32()?;
            let cb_seed = r.u64()?;
            let symbols = r.take(classes.checked_mul(bundles).ok_or_else(|| Error::Format("codebook size overflow".into()))?)?;
            let spec = CodebookSpec {
                class_count: classes,
                alphabet_size: alphabet as u32,
                code_length: bundles,
                alpha,
                tie_epsilon,
                candidate_pool_cap: cap,
                seed: cb_seed,
            };
            let rows: Vec<Vec<u8>> = symbols.chunks(bundles.max(1)).map(<[u8]>::to_vec).collect();
            Some(Codebook::from_rows(&rows, spec).map_err(|e| Error::Format(format!("codebook: {e}")))?)
        } else {
            None
        };

        let tensor_count = r.len32()?;
        let expected_tensors = if method.is_class_axis() { 2 } else { 1 };
        if tensor_count != expected_tensors {
            return Err(Error::Format(format!("{method} needs {expected_tensors} tensors, file has {tensor_count}")));
        }
        let mut headers = Vec::with_capacity(tensor_count);
        for _ in 0..tensor_count {
            let vector_count = r.len32()?;
            let tdim = r.len32()?;
            let scale = r.f64()?;
            let bitmap = r.take(tdim.div_ceil(8))?;
            let retained = (0..tdim).map(|i| (bitmap[i / 8] >> (i % 8)) & 1 == 1).collect();
            headers.push(TensorHeader {
                vector_count,
                dim: tdim,
                scale,
                retained,
            });
        }

        let payload_len = usize::try_from(r.u64()?).map_err(|_| Error::Format("payload too large".into()))?;
        let payload = r.take(payload_len)?.to_vec();
        let checksum = r.u32()?;
        if checksum != crc32fast::hash(&payload) {
            return Err(Error::Format("payload checksum mismatch".into()));
        }
        if r.pos != bytes.len() {
            return Err(Error::Format(format!("{} trailing bytes", bytes.len() - r.pos)));
        }

        let state = QuantizedState::from_parts(bits, headers, payload)?;
        let encoder = Arc::new(
            Encoder::new(EncoderSpec::new(input_dim, dim, seed).with_nonlinearity(nonlinearity))
                .map_err(|e| Error::Format(format!("encoder: {e}")))?,
        );
        let tensors = state.dequantize();
        let head = &state.tensors()[0];
        if head.dim != dim {
            return Err(Error::Format(format!("tensor dimension {} differs from D={dim}", head.dim)));
        }
        let mask = SparsityMask::from_retained(head.retained.clone(), sparsity);
        let format_err = |e: Error| Error::Format(e.to_string());
        let mut tensors = tensors.into_iter();
        let vectors = tensors
            .next()
            .unwrap_or_default()
            .into_iter()
            .map(Hypervector::new)
            .collect::<Result<Vec<_>>>()
            .map_err(format_err)?;
        let model_state = match codebook {
            None => ModelState::Prototypes(PrototypeModel::from_parts(vectors, encoder).map_err(format_err)?),
            Some(cb) => ModelState::LogHd(
                LogHdModel::from_parts(vectors, tensors.next().unwrap_or_default(), cb, encoder)
                    .map_err(format_err)?,
            ),
        };
        let model = StoredModel::from_parts(method, model_state, mask).map_err(format_err)?;
        if model.class_count() != classes {
            return Err(Error::Format("class count differs from header".into()));
        }
        Ok(Self {
            model,
            state,
            scaler,
            label_values,
        })
    }
}

fn encoder_of(m: &StoredModel) -> &Arc<Encoder> {
    match m.state() {
        ModelState::Prototypes(p) => p.encoder(),
        ModelState::LogHd(l) => l.encoder(),
    }
}

fn put_u32(w: &mut Vec<u8>, v: usize) {
    w.extend_from_slice(&(v as u32).to_le_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Format(format!("truncated file (need {n} bytes at offset {})", self.pos)))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.array()?))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    fn len32(&mut self) -> Result<usize> {
        Ok(self.u32()? as usize)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    fn i64(&mut self) -> Result<i64> {
        Ok(i64::from_le_bytes(self.array()?))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.array()?))
    }
}

pub fn save_model(path: &Path, file: &ModelFile) -> Result<()> {
    std::fs::write(path, file.to_bytes())?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<ModelFile> {
    ModelFile::from_bytes(&std::fs::read(path)?)
}
