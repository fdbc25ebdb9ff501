//! Bit-flip injection into stored model state, and matched-budget accounting.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codebook::min_code_length;
use crate::compression::{quantize, QuantSpec, QuantizedState};
use crate::error::{config, Result};
use crate::hdc::EncodedSet;
use crate::seed;
use crate::stored::StoredModel;

pub const DEFAULT_TRIALS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FaultSpec {
    pub flip_probability: f64,
    pub seed: u64,
    pub trials: usize,
}

impl FaultSpec {
    pub fn new(flip_probability: f64, seed: u64, trials: usize) -> Result<Self> {
        let spec = Self {
            flip_probability,
            seed,
            trials,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.flip_probability) {
            return Err(config(format!(
                "flip probability {} outside [0, 1]",
                self.flip_probability
            )));
        }
        if self.trials == 0 {
            return Err(config("at least one trial is required"));
        }
        Ok(())
    }

    /// Seed of trial `t`; trials use consecutive sub-seeds.
    pub fn trial_seed(&self, trial: usize) -> u64 {
        self.seed.wrapping_add(trial as u64)
    }
}

/// Flips every stored payload bit independently with probability `p`.
///
/// Scales, masks and other metadata are never touched, and pruned coordinates
/// have no bits to flip. The input is left unmodified.
pub fn inject(state: &QuantizedState, flip_probability: f64, seed: u64) -> QuantizedState {
    let mut out = state.clone();
    if flip_probability <= 0.0 {
        return out;
    }
    if flip_probability >= 1.0 {
        (0..out.bit_len()).for_each(|i| out.flip(i));
        return out;
    }
    let mut rng = seed::rng(seed);
    for i in 0..out.bit_len() {
        if rng.random::<f64>() < flip_probability {
            out.flip(i);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct FaultEvaluation {
    /// Accuracy of the quantized model with no flips.
    pub clean_accuracy: f64,
    /// One accuracy per trial, in trial order.
    pub accuracies: Vec<f64>,
    pub ledger: BudgetLedger,
}

impl FaultEvaluation {
    pub fn mean(&self) -> f64 {
        self.accuracies.iter().sum::<f64>() / self.accuracies.len() as f64
    }

    /// Sample standard deviation (0 for a single trial).
    pub fn std_dev(&self) -> f64 {
        let n = self.accuracies.len();
        if n < 2 {
            return 0.0;
        }
        let m = self.mean();
        (self.accuracies.iter().map(|a| (a - m) * (a - m)).sum::<f64>() / (n - 1) as f64).sqrt()
    }
}

/// Quantizes the model once, then per trial: inject, dequantize, classify the
/// whole test split. Test encodings are never perturbed.
pub fn evaluate_under_faults(
    model: &StoredModel,
    test: &EncodedSet,
    faults: &FaultSpec,
    quant: &QuantSpec,
) -> Result<FaultEvaluation> {
    faults.validate()?;
    if quant.is_lossless() && faults.flip_probability > 0.0 {
        return Err(config("bit flips require a quantized precision (1, 2, 4 or 8 bits)"));
    }
    let state = quantize(&model.tensors(), quant)?;
    evaluate_state(model, &state, test, faults)
}

/// Like [`evaluate_under_faults`] for an already quantized state.
pub fn evaluate_state(
    model: &StoredModel,
    state: &QuantizedState,
    test: &EncodedSet,
    faults: &FaultSpec,
) -> Result<FaultEvaluation> {
    faults.validate()?;
    let prepared = model.prepare(test);
    let clean_accuracy = model.restore(state.dequantize())?.accuracy_prepared(&prepared);
    let accuracies = (0..faults.trials)
        .into_par_iter()
        .map(|t| {
            if faults.flip_probability == 0.0 {
                return Ok(clean_accuracy);
            }
            let faulty = inject(state, faults.flip_probability, faults.trial_seed(t));
            Ok(model.restore(faulty.dequantize())?.accuracy_prepared(&prepared))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FaultEvaluation {
        clean_accuracy,
        accuracies,
        ledger: BudgetLedger::from_state(state, model.class_count(), model.hyper_dim()),
    })
}

/// Storage of a quantized model relative to the conventional `C x D` footprint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BudgetLedger {
    pub baseline_coords: usize,
    /// Stored class-axis coordinates (prototypes or bundles, retained only).
    pub model_coords: usize,
    /// Stored activation-profile coordinates, itemized separately.
    pub profile_coords: usize,
    pub bits: u8,
    pub model_bits: u64,
    pub profile_bits: u64,
    pub total_bytes: usize,
}

impl BudgetLedger {
    pub fn from_state(state: &QuantizedState, classes: usize, dim: usize) -> Self {
        let tensors = state.tensors();
        let model_coords = tensors.first().map_or(0, |t| t.stored_coords());
        let profile_coords: usize = tensors.iter().skip(1).map(|t| t.stored_coords()).sum();
        let bits = state.bits();
        Self {
            baseline_coords: classes * dim,
            model_coords,
            profile_coords,
            bits,
            model_bits: model_coords as u64 * bits as u64,
            profile_bits: profile_coords as u64 * bits as u64,
            total_bytes: state.bit_len().div_ceil(8) as usize,
        }
    }

    pub fn fraction(&self) -> f64 {
        self.model_coords as f64 / self.baseline_coords as f64
    }

    pub fn total_bits(&self) -> u64 {
        self.model_bits + self.profile_bits
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SparseConfig {
    pub sparsity: f64,
    pub retained: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HybridConfig {
    pub bundles: usize,
    pub sparsity: f64,
    pub retained: usize,
}

/// Configurations fitting a budget of `x` times the `C x D` footprint.
/// `None` marks an infeasible method.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatchedBudget {
    pub target: f64,
    pub conventional: bool,
    pub loghd: Option<usize>,
    /// Smallest feasible `n`, i.e. `ceil(log_k C)`.
    pub min_bundles: usize,
    pub sparsehd: Option<SparseConfig>,
    pub hybrid: Vec<HybridConfig>,
}

impl MatchedBudget {
    /// Lowest budget any LogHD model can meet: `ceil(log_k C) / C`.
    pub fn min_loghd_fraction(&self, classes: usize) -> f64 {
        self.min_bundles as f64 / classes as f64
    }
}

// slack for products like 0.4 * 5 landing a hair under an integer
const BUDGET_EPS: f64 = 1e-9;

pub fn matched_budget_configs(classes: usize, dim: usize, k: u32, target: f64) -> Result<MatchedBudget> {
    if !(target > 0.0 && target <= 1.0) {
        return Err(config(format!("budget fraction {target} outside (0, 1]")));
    }
    if classes == 0 || dim == 0 || k < 2 {
        return Err(config("budget needs C >= 1, D >= 1, k >= 2"));
    }
    let min_bundles = min_code_length(classes, k).max(1);
    let max_n = ((target * classes as f64 + BUDGET_EPS).floor() as usize).min(classes);
    let loghd = (max_n >= min_bundles).then_some(max_n);

    let budget_coords = target * (classes * dim) as f64;
    let retained_for = |vectors: usize| {
        ((budget_coords / vectors as f64 + BUDGET_EPS).floor() as usize).min(dim)
    };
    let sparse_retained = retained_for(classes);
    let sparsehd = (sparse_retained >= 1).then(|| SparseConfig {
        sparsity: 1.0 - sparse_retained as f64 / dim as f64,
        retained: sparse_retained,
    });
    let hybrid = (min_bundles.max(max_n + 1)..=classes)
        .filter_map(|n| {
            let retained = retained_for(n);
            (retained >= 1 && retained < dim).then(|| HybridConfig {
                bundles: n,
                sparsity: 1.0 - retained as f64 / dim as f64,
                retained,
            })
        })
        .collect();

    Ok(MatchedBudget {
        target,
        conventional: target + BUDGET_EPS >= 1.0,
        loghd,
        min_bundles,
        sparsehd,
        hybrid,
    })
}
