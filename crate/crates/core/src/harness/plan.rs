//! Experiment plans and the sweep runner.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::data::{blob_split, load_dataset, BlobSpec, DatasetSpec, DatasetSplit};
use super::results::{RowStatus, SweepResult, SweepRow};
use crate::codebook::{build_codebook, min_code_length, CodebookSpec};
use crate::compression::{quantize, QuantSpec};
use crate::error::{Error, Result};
use crate::faults::{evaluate_state, matched_budget_configs, BudgetLedger, FaultSpec, DEFAULT_TRIALS};
use crate::hdc::{EncodedSet, Encoder, EncoderSpec, Nonlinearity, PrototypeModel};
use crate::loghd::{LogHdModel, RefinementSpec, DEFAULT_EPOCHS, DEFAULT_LEARNING_RATE};
use crate::seed;
use crate::stored::{Method, StoredModel};

pub const DEFAULT_HYPER_DIM: usize = 4096;
pub const FULL_HYPER_DIM: usize = 10_000;
pub const DEFAULT_P_GRID: [f64; 6] = [0.0, 0.1, 0.2, 0.4, 0.6, 0.8];

// stream tags for seed derivation
const TAG_ENCODER: u64 = 1;
const TAG_CODEBOOK: u64 = 2;
const TAG_REFINE: u64 = 3;
const TAG_FAULTS: u64 = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetSource {
    Blobs(BlobSpec),
    Csv(DatasetSpec),
}

impl DatasetSource {
    pub fn load(&self) -> Result<DatasetSplit> {
        match self {
            DatasetSource::Blobs(spec) => blob_split(spec),
            DatasetSource::Csv(spec) => load_dataset(spec),
        }
    }
}

/// How many bundles the class-axis methods use.
///
/// `Budget` takes the largest `n` that fits each budget. `Fixed` and
/// `Redundant` pin `n` (the latter as `ceil(log_k C) + r`); a pinned
/// configuration that overshoots the budget is reported infeasible.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum BundleChoice {
    #[default]
    Budget,
    Fixed(usize),
    Redundant(usize),
}

fn default_methods() -> Vec<Method> {
    vec![Method::LogHd, Method::SparseHd]
}
fn default_dim() -> usize {
    DEFAULT_HYPER_DIM
}
fn default_alphabets() -> Vec<u32> {
    vec![2, 3]
}
fn default_hybrid_sparsities() -> Vec<f64> {
    vec![0.0, 0.2, 0.4, 0.6, 0.8]
}
fn default_precisions() -> Vec<u8> {
    vec![8]
}
fn default_p_grid() -> Vec<f64> {
    DEFAULT_P_GRID.to_vec()
}
fn default_budgets() -> Vec<f64> {
    vec![0.25]
}
fn default_trials() -> usize {
    DEFAULT_TRIALS
}
fn default_epochs() -> usize {
    DEFAULT_EPOCHS
}
fn default_lr() -> f64 {
    DEFAULT_LEARNING_RATE
}
fn default_alpha() -> f64 {
    1.0
}
fn default_eps() -> f64 {
    1e-9
}
fn default_cap() -> usize {
    4096
}
fn yes() -> bool {
    true
}

/// Everything a sweep depends on. Serialized as the JSON plan file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentPlan {
    pub dataset: DatasetSource,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default = "default_dim")]
    pub hyper_dim: usize,
    #[serde(default)]
    pub nonlinearity: Nonlinearity,
    #[serde(default = "default_alphabets")]
    pub alphabet_sizes: Vec<u32>,
    #[serde(default)]
    pub bundles: BundleChoice,
    /// Sparsity grid for the hybrid method when `bundles` pins `n`. With
    /// budget-driven bundles, hybrid uses one extra bundle sparsified to fit.
    #[serde(default = "default_hybrid_sparsities")]
    pub hybrid_sparsities: Vec<f64>,
    #[serde(default = "default_precisions")]
    pub precisions: Vec<u8>,
    #[serde(default = "default_p_grid")]
    pub flip_probabilities: Vec<f64>,
    #[serde(default = "default_budgets")]
    pub budgets: Vec<f64>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "yes")]
    pub refresh_profiles: bool,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_eps")]
    pub tie_epsilon: f64,
    #[serde(default = "default_cap")]
    pub candidate_pool_cap: usize,
}

impl ExperimentPlan {
    /// A plan with every default filled in.
    pub fn new(dataset: DatasetSource) -> Self {
        Self {
            dataset,
            methods: default_methods(),
            hyper_dim: default_dim(),
            nonlinearity: Nonlinearity::default(),
            alphabet_sizes: default_alphabets(),
            bundles: BundleChoice::default(),
            hybrid_sparsities: default_hybrid_sparsities(),
            precisions: default_precisions(),
            flip_probabilities: default_p_grid(),
            budgets: default_budgets(),
            trials: default_trials(),
            seed: 0,
            epochs: default_epochs(),
            learning_rate: default_lr(),
            refresh_profiles: true,
            alpha: default_alpha(),
            tie_epsilon: default_eps(),
            candidate_pool_cap: default_cap(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let plan: Self =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid plan: {e}")))?;
        plan.validate()?;
        Ok(plan)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read plan {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plan serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.methods.is_empty() {
            return bad("plan lists no methods".into());
        }
        if self.hyper_dim == 0 {
            return bad("hyper_dim must be positive".into());
        }
        if self.methods.iter().any(|m| m.is_class_axis()) && self.alphabet_sizes.is_empty() {
            return bad("class-axis methods need at least one alphabet size".into());
        }
        if let Some(k) = self.alphabet_sizes.iter().find(|&&k| !(2..=256).contains(&k)) {
            return bad(format!("alphabet size {k} outside 2..=256"));
        }
        if let BundleChoice::Fixed(0) = self.bundles {
            return bad("fixed bundle count must be at least 1".into());
        }
        if let Some(s) = self.hybrid_sparsities.iter().find(|s| !(0.0..1.0).contains(*s)) {
            return bad(format!("sparsity {s} outside [0, 1)"));
        }
        if self.precisions.is_empty() {
            return bad("plan lists no precisions".into());
        }
        for &b in &self.precisions {
            QuantSpec::new(b)?;
        }
        if self.flip_probabilities.is_empty() {
            return bad("plan lists no flip probabilities".into());
        }
        if let Some(p) = self.flip_probabilities.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return bad(format!("flip probability {p} outside [0, 1]"));
        }
        if self.budgets.is_empty() {
            return bad("plan lists no budgets".into());
        }
        if let Some(x) = self.budgets.iter().find(|&&x| !(x > 0.0 && x <= 1.0)) {
            return bad(format!("budget {x} outside (0, 1]"));
        }
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        self.refinement(0).validate()?;
        if !(self.alpha > 0.0 && self.alpha.is_finite()) || self.tie_epsilon.is_nan() || self.tie_epsilon < 0.0 {
            return bad("alpha must be positive and tie_epsilon non-negative".into());
        }
        if self.candidate_pool_cap == 0 {
            return bad("candidate_pool_cap must be positive".into());
        }
        Ok(())
    }

    fn refinement(&self, seed: u64) -> RefinementSpec {
        RefinementSpec {
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            seed,
            refresh_profiles: self.refresh_profiles,
        }
    }

    pub fn encoder_spec(&self, input_dim: usize) -> EncoderSpec {
        EncoderSpec::new(input_dim, self.hyper_dim, seed::derive(self.seed, &[TAG_ENCODER]))
            .with_nonlinearity(self.nonlinearity)
    }

    pub fn codebook_spec(&self, classes: usize, k: u32, n: usize) -> CodebookSpec {
        CodebookSpec::new(classes, k, n)
            .with_alpha(self.alpha)
            .with_tie_epsilon(self.tie_epsilon)
            .with_pool_cap(self.candidate_pool_cap)
            .with_seed(seed::derive(self.seed, &[TAG_CODEBOOK, k as u64, n as u64]))
    }
}

/// Data, encoder, encodings and prototypes shared by every method of a plan.
pub struct PlanContext {
    pub plan: ExperimentPlan,
    pub split: DatasetSplit,
    pub encoder: Arc<Encoder>,
    pub train: EncodedSet,
    pub test: EncodedSet,
    pub prototypes: PrototypeModel,
    loghd_cache: BTreeMap<(u32, usize), LogHdModel>,
}

impl PlanContext {
    pub fn new(plan: ExperimentPlan) -> Result<Self> {
        plan.validate()?;
        let split = plan.dataset.load()?;
        Self::with_split(plan, split)
    }

    pub fn with_split(plan: ExperimentPlan, split: DatasetSplit) -> Result<Self> {
        let encoder = Arc::new(Encoder::new(plan.encoder_spec(split.train.feature_count()))?);
        let train = EncodedSet::encode(&encoder, &split.train)?;
        let test = EncodedSet::encode(&encoder, &split.test)?;
        let prototypes = PrototypeModel::from_encoded(Arc::clone(&encoder), &train)?;
        Ok(Self {
            plan,
            split,
            encoder,
            train,
            test,
            prototypes,
            loghd_cache: BTreeMap::new(),
        })
    }

    pub fn class_count(&self) -> usize {
        self.train.class_count
    }

    /// Built from the shared prototypes, refined, and cached per `(k, n)`.
    pub fn loghd(&mut self, k: u32, n: usize) -> Result<&LogHdModel> {
        if !self.loghd_cache.contains_key(&(k, n)) {
            let cb = build_codebook(&self.plan.codebook_spec(self.class_count(), k, n))?;
            let built = LogHdModel::build(&self.prototypes, cb, &self.train)?;
            let refine = self
                .plan
                .refinement(seed::derive(self.plan.seed, &[TAG_REFINE, k as u64, n as u64]));
            let model = built.refine_encoded(&self.train, &refine)?;
            self.loghd_cache.insert((k, n), model);
        }
        Ok(&self.loghd_cache[&(k, n)])
    }

    pub fn build(&mut self, cell: &Cell) -> Result<StoredModel> {
        match cell.method {
            Method::Conventional => Ok(StoredModel::conventional(self.prototypes.clone())),
            Method::SparseHd => StoredModel::sparsehd(&self.prototypes, cell.sparsity),
            Method::LogHd => Ok(StoredModel::loghd(self.loghd(cell.k, cell.n)?.clone())),
            Method::Hybrid => {
                let base = self.loghd(cell.k, cell.n)?.clone();
                StoredModel::hybrid(&base, cell.sparsity, &self.train)
            }
        }
    }
}

/// One model configuration of a sweep. `k` and `n` are 0 for prototype methods.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub method: Method,
    pub budget: f64,
    pub k: u32,
    pub n: usize,
    pub sparsity: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Planned {
    Run(Cell),
    Infeasible { method: Method, budget: f64, k: Option<u32> },
}

// coordinates a configuration stores along the class axis, against the budget
fn fits(budget: f64, classes: usize, dim: usize, vectors: usize, retained: usize) -> bool {
    (vectors * retained) as f64 <= budget * (classes * dim) as f64 + 1e-9
}

fn plan_cells(plan: &ExperimentPlan, classes: usize) -> Result<Vec<Planned>> {
    let dim = plan.hyper_dim;
    let mut out = Vec::new();
    for &budget in &plan.budgets {
        for &method in &plan.methods {
            match method {
                Method::Conventional => {
                    let m = matched_budget_configs(classes, dim, 2, budget)?;
                    out.push(if m.conventional {
                        Planned::Run(Cell { method, budget, k: 0, n: 0, sparsity: 0.0 })
                    } else {
                        Planned::Infeasible { method, budget, k: None }
                    });
                }
                Method::SparseHd => {
                    let m = matched_budget_configs(classes, dim, 2, budget)?;
                    out.push(match m.sparsehd {
                        Some(s) => Planned::Run(Cell { method, budget, k: 0, n: 0, sparsity: s.sparsity }),
                        None => Planned::Infeasible { method, budget, k: None },
                    });
                }
                Method::LogHd | Method::Hybrid => {
                    for &k in &plan.alphabet_sizes {
                        class_axis_cells(plan, classes, method, budget, k, &mut out)?;
                    }
                }
            }
        }
    }
    Ok(out)
}

fn class_axis_cells(
    plan: &ExperimentPlan,
    classes: usize,
    method: Method,
    budget: f64,
    k: u32,
    out: &mut Vec<Planned>,
) -> Result<()> {
    let dim = plan.hyper_dim;
    let infeasible = Planned::Infeasible { method, budget, k: Some(k) };
    let min_n = min_code_length(classes, k).max(1);
    let pinned = match plan.bundles {
        BundleChoice::Budget => None,
        BundleChoice::Fixed(n) => Some(n),
        BundleChoice::Redundant(r) => Some(min_n + r),
    };
    match (method, pinned) {
        (Method::LogHd, None) => {
            let m = matched_budget_configs(classes, dim, k, budget)?;
            out.push(match m.loghd {
                Some(n) => Planned::Run(Cell { method, budget, k, n, sparsity: 0.0 }),
                None => infeasible,
            });
        }
        (Method::LogHd, Some(n)) => {
            out.push(if n >= min_n && fits(budget, classes, dim, n, dim) {
                Planned::Run(Cell { method, budget, k, n, sparsity: 0.0 })
            } else {
                infeasible
            });
        }
        (_, None) => {
            // the least-pruned hybrid: fewest bundles beyond what LogHD alone affords
            let m = matched_budget_configs(classes, dim, k, budget)?;
            out.push(match m.hybrid.first() {
                Some(h) => Planned::Run(Cell { method, budget, k, n: h.bundles, sparsity: h.sparsity }),
                None => infeasible,
            });
        }
        (_, Some(n)) => {
            for &s in &plan.hybrid_sparsities {
                let retained = crate::compression::retained_count(dim, s)?;
                out.push(if n >= min_n && fits(budget, classes, dim, n, retained) {
                    Planned::Run(Cell { method, budget, k, n, sparsity: s })
                } else {
                    infeasible
                });
            }
        }
    }
    Ok(())
}

fn fault_seed(master: u64, cell: &Cell, bits: u8, p: f64) -> u64 {
    seed::derive(
        master,
        &[
            TAG_FAULTS,
            cell.method.code() as u64,
            cell.k as u64,
            cell.n as u64,
            cell.sparsity.to_bits(),
            bits as u64,
            p.to_bits(),
        ],
    )
}

/// Runs every configuration of the plan. Infeasible configurations become
/// rows with status `infeasible`; the result is a pure function of the plan.
pub fn run_plan(plan: &ExperimentPlan) -> Result<SweepResult> {
    let mut ctx = PlanContext::new(plan.clone())?;
    run_with_context(&mut ctx)
}

pub fn run_with_context(ctx: &mut PlanContext) -> Result<SweepResult> {
    let plan = ctx.plan.clone();
    let classes = ctx.class_count();
    let dataset = ctx.split.name.clone();
    let mut rows = Vec::new();
    for planned in plan_cells(&plan, classes)? {
        let cell = match planned {
            Planned::Infeasible { method, budget, k } => {
                rows.push(infeasible_row(&dataset, method, budget, k));
                continue;
            }
            Planned::Run(cell) => cell,
        };
        let model = match ctx.build(&cell) {
            Ok(m) => m,
            // a codebook column without any nonzero symbol leaves a zero bundle
            Err(Error::Training(_)) if cell.method.is_class_axis() => {
                let mut row = infeasible_row(&dataset, cell.method, cell.budget, Some(cell.k));
                row.n = Some(cell.n);
                row.sparsity = Some(cell.sparsity);
                rows.push(row);
                continue;
            }
            Err(e) => return Err(e),
        };
        for &bits in &plan.precisions {
            let state = quantize(&model.tensors(), &QuantSpec::new(bits)?)?;
            let ledger = BudgetLedger::from_state(&state, classes, model.hyper_dim());
            for &p in &plan.flip_probabilities {
                let faults = FaultSpec::new(p, fault_seed(plan.seed, &cell, bits, p), plan.trials)?;
                let eval = evaluate_state(&model, &state, &ctx.test, &faults)?;
                for (trial, &accuracy) in eval.accuracies.iter().enumerate() {
                    rows.push(SweepRow {
                        dataset: dataset.clone(),
                        method: cell.method,
                        budget: cell.budget,
                        k: cell.method.is_class_axis().then_some(cell.k),
                        n: cell.method.is_class_axis().then_some(cell.n),
                        sparsity: Some(cell.sparsity),
                        bits: Some(bits),
                        p: Some(p),
                        fraction: Some(ledger.fraction()),
                        trial: Some(trial),
                        accuracy: Some(accuracy),
                        clean_accuracy: Some(eval.clean_accuracy),
                        seed: Some(faults.trial_seed(trial)),
                        status: RowStatus::Ok,
                    });
                }
            }
        }
    }
    Ok(SweepResult { rows })
}

fn infeasible_row(dataset: &str, method: Method, budget: f64, k: Option<u32>) -> SweepRow {
    SweepRow {
        dataset: dataset.to_string(),
        method,
        budget,
        k,
        n: None,
        sparsity: None,
        bits: None,
        p: None,
        fraction: None,
        trial: None,
        accuracy: None,
        clean_accuracy: None,
        seed: None,
        status: RowStatus::Infeasible,
    }
}
