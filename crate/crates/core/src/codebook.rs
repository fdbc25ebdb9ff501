//! Unique k-ary class codes chosen by a minimax-load greedy selector.
//!
//! Each class gets a length-`n` code over `{0..k-1}`. Symbol `s` contributes
//! `U(g(s)) = (s / (k-1))^alpha` to the load of its bundle, and every new code
//! is the candidate that minimizes the largest load after adding it.
//!
//! Candidates whose largest load is within `tie_epsilon` of the best are tied.
//! Ties go to the code adding the least total load, then to the smallest
//! seeded `U[0,1]` draw. Without the middle rule a random tie-break can spend
//! a heavy code early (e.g. `11` before `01`) and end up at twice the optimal
//! worst-case load.

use std::collections::HashSet;
use std::fmt::Write as _;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{config, Error, Result};
use crate::seed;

pub const DEFAULT_TIE_EPSILON: f64 = 1e-9;
pub const DEFAULT_POOL_CAP: usize = 4096;

/// Weight `s / (k-1)` of symbol `s` in an alphabet of size `k`.
pub fn symbol_weight(s: u32, k: u32) -> Result<f64> {
    if k < 2 {
        return Err(Error::Domain(format!("alphabet size {k} < 2")));
    }
    if s >= k {
        return Err(Error::Domain(format!("symbol {s} outside 0..{k}")));
    }
    Ok(s as f64 / (k - 1) as f64)
}

/// Capacity surrogate `w^alpha`.
pub fn capacity(w: f64, alpha: f64) -> f64 {
    w.powf(alpha)
}

/// Smallest `n` with `k^n >= classes`.
pub fn min_code_length(classes: usize, k: u32) -> usize {
    let mut n = 0;
    let mut reach: u128 = 1;
    while reach < classes as u128 {
        reach *= k as u128;
        n += 1;
    }
    n
}

fn code_space(k: u32, n: usize) -> Option<u64> {
    (k as u64).checked_pow(u32::try_from(n).ok()?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CodebookSpec {
    pub class_count: usize,
    pub alphabet_size: u32,
    pub code_length: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_eps")]
    pub tie_epsilon: f64,
    #[serde(default = "default_cap")]
    pub candidate_pool_cap: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_alpha() -> f64 {
    1.0
}
fn default_eps() -> f64 {
    DEFAULT_TIE_EPSILON
}
fn default_cap() -> usize {
    DEFAULT_POOL_CAP
}

impl CodebookSpec {
    pub fn new(class_count: usize, alphabet_size: u32, code_length: usize) -> Self {
        Self {
            class_count,
            alphabet_size,
            code_length,
            alpha: 1.0,
            tie_epsilon: DEFAULT_TIE_EPSILON,
            candidate_pool_cap: DEFAULT_POOL_CAP,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn with_tie_epsilon(mut self, eps: f64) -> Self {
        self.tie_epsilon = eps;
        self
    }

    pub fn with_pool_cap(mut self, cap: usize) -> Self {
        self.candidate_pool_cap = cap;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let (c, k, n) = (self.class_count, self.alphabet_size, self.code_length);
        if c == 0 {
            return Err(config("codebook needs at least one class"));
        }
        if !(2..=256).contains(&k) {
            return Err(config(format!("alphabet size {k} outside 2..=256")));
        }
        if n == 0 {
            return Err(config("code length must be at least 1"));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(config(format!("alpha must be positive, got {}", self.alpha)));
        }
        if !(self.tie_epsilon > 0.0 && self.tie_epsilon.is_finite()) {
            return Err(config(format!(
                "tie epsilon must be positive, got {}",
                self.tie_epsilon
            )));
        }
        if self.candidate_pool_cap == 0 {
            return Err(config("candidate pool cap must be positive"));
        }
        let min_n = min_code_length(c, k);
        if n < min_n {
            return Err(config(format!(
                "infeasible codebook: {c} classes need n >= {min_n} for k={k}, got n={n}"
            )));
        }
        Ok(())
    }

    fn symbol_load(&self, s: u8) -> f64 {
        capacity(s as f64 / (self.alphabet_size - 1) as f64, self.alpha)
    }
}

/// `C x n` symbol matrix with unique rows and the per-bundle loads it induces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Codebook {
    spec: CodebookSpec,
    symbols: Vec<u8>,
    loads: Vec<f64>,
}

impl Codebook {
    /// Builds a codebook from explicit rows (e.g. one-hot or a loaded file).
    pub fn from_rows(rows: &[Vec<u8>], spec: CodebookSpec) -> Result<Self> {
        spec.validate()?;
        if rows.len() != spec.class_count {
            return Err(config(format!(
                "{} rows for {} classes",
                rows.len(),
                spec.class_count
            )));
        }
        let mut seen = HashSet::new();
        for (c, row) in rows.iter().enumerate() {
            if row.len() != spec.code_length {
                return Err(config(format!(
                    "row {c} has length {}, expected {}",
                    row.len(),
                    spec.code_length
                )));
            }
            if let Some(&s) = row.iter().find(|&&s| s as u32 >= spec.alphabet_size) {
                return Err(Error::Domain(format!(
                    "row {c} has symbol {s} outside 0..{}",
                    spec.alphabet_size
                )));
            }
            if !seen.insert(row.as_slice()) {
                return Err(config(format!("row {c} duplicates an earlier code")));
            }
        }
        let symbols: Vec<u8> = rows.iter().flatten().copied().collect();
        let loads = compute_loads(&symbols, &spec);
        Ok(Self {
            spec,
            symbols,
            loads,
        })
    }

    /// `C x C` one-hot codebook over a binary alphabet.
    pub fn one_hot(classes: usize) -> Result<Self> {
        let rows: Vec<Vec<u8>> = (0..classes)
            .map(|c| (0..classes).map(|j| u8::from(j == c)).collect())
            .collect();
        Codebook::from_rows(&rows, CodebookSpec::new(classes, 2, classes))
    }

    pub fn spec(&self) -> &CodebookSpec {
        &self.spec
    }

    pub fn class_count(&self) -> usize {
        self.spec.class_count
    }

    pub fn code_length(&self) -> usize {
        self.spec.code_length
    }

    pub fn alphabet_size(&self) -> u32 {
        self.spec.alphabet_size
    }

    pub fn row(&self, class: usize) -> &[u8] {
        let n = self.spec.code_length;
        &self.symbols[class * n..(class + 1) * n]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[u8]> {
        self.symbols.chunks_exact(self.spec.code_length)
    }

    pub fn symbol(&self, class: usize, bundle: usize) -> u8 {
        self.symbols[class * self.spec.code_length + bundle]
    }

    /// `g(B[c][j])`.
    pub fn weight(&self, class: usize, bundle: usize) -> f64 {
        self.symbol(class, bundle) as f64 / (self.spec.alphabet_size - 1) as f64
    }

    /// Refinement target `2 B[c][j] / (k-1) - 1`, in `[-1, 1]`.
    pub fn target(&self, class: usize, bundle: usize) -> f64 {
        2.0 * self.weight(class, bundle) - 1.0
    }

    /// Loads accumulated during construction.
    pub fn loads(&self) -> &[f64] {
        &self.loads
    }

    pub fn max_load(&self) -> f64 {
        self.loads.iter().copied().fold(0.0, f64::max)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("class");
        for j in 0..self.spec.code_length {
            let _ = write!(out, ",b{j}");
        }
        out.push('\n');
        for (c, row) in self.rows().enumerate() {
            let _ = write!(out, "{c}");
            for s in row {
                let _ = write!(out, ",{s}");
            }
            out.push('\n');
        }
        out
    }
}

fn compute_loads(symbols: &[u8], spec: &CodebookSpec) -> Vec<f64> {
    let mut loads = vec![0.0; spec.code_length];
    for row in symbols.chunks_exact(spec.code_length) {
        for (l, &s) in loads.iter_mut().zip(row) {
            *l += spec.symbol_load(s);
        }
    }
    loads
}

/// Recomputes the per-bundle loads from the rows.
pub fn load_profile(cb: &Codebook) -> Vec<f64> {
    compute_loads(&cb.symbols, &cb.spec)
}

fn decode_index(mut idx: u64, k: u32, out: &mut [u8]) {
    for slot in out.iter_mut().rev() {
        *slot = (idx % k as u64) as u8;
        idx /= k as u64;
    }
}

enum Pool {
    /// Every code not yet assigned, in lexicographic order.
    Full(Vec<u64>),
    /// Fresh random sample each iteration.
    Sampled { total: Option<u64> },
}

/// Greedy minimax-load codebook construction.
pub fn build_codebook(spec: &CodebookSpec) -> Result<Codebook> {
    spec.validate()?;
    let (classes, k, n) = (spec.class_count, spec.alphabet_size, spec.code_length);
    let total = code_space(k, n);
    let mut pool = match total {
        Some(t) if t <= spec.candidate_pool_cap as u64 => Pool::Full((0..t).collect()),
        _ => Pool::Sampled { total },
    };

    let mut rng = seed::rng(spec.seed);
    let mut loads = vec![0.0; n];
    let mut symbols = Vec::with_capacity(classes * n);
    let mut assigned: HashSet<Vec<u8>> = HashSet::with_capacity(classes);
    let mut code = vec![0u8; n];

    for class in 0..classes {
        let chosen = match &mut pool {
            Pool::Full(remaining) => {
                let scored: Vec<Candidate> = remaining
                    .iter()
                    .map(|&idx| {
                        decode_index(idx, k, &mut code);
                        Candidate::score(&loads, &code, spec, &mut rng)
                    })
                    .collect();
                let pos = select(&scored, spec.tie_epsilon).ok_or_else(|| {
                    Error::Internal(format!("candidate pool exhausted at class {class}"))
                })?;
                decode_index(remaining.remove(pos), k, &mut code);
                code.clone()
            }
            Pool::Sampled { total } => {
                let candidates = sample_pool(&mut rng, spec, *total, &assigned, class)?;
                let scored: Vec<Candidate> = candidates
                    .iter()
                    .map(|c| Candidate::score(&loads, c, spec, &mut rng))
                    .collect();
                let pos = select(&scored, spec.tie_epsilon).ok_or_else(|| {
                    Error::Internal(format!("candidate pool exhausted at class {class}"))
                })?;
                candidates[pos].clone()
            }
        };
        for (l, &s) in loads.iter_mut().zip(&chosen) {
            *l += spec.symbol_load(s);
        }
        symbols.extend_from_slice(&chosen);
        assigned.insert(chosen);
    }

    Ok(Codebook {
        spec: *spec,
        symbols,
        loads,
    })
}

struct Candidate {
    /// Largest bundle load after adding the code.
    worst: f64,
    /// Total load the code itself adds.
    added: f64,
    jitter: f64,
}

impl Candidate {
    fn score(loads: &[f64], code: &[u8], spec: &CodebookSpec, rng: &mut ChaCha8Rng) -> Self {
        let mut worst = f64::NEG_INFINITY;
        let mut added = 0.0;
        for (l, &s) in loads.iter().zip(code) {
            let u = spec.symbol_load(s);
            worst = worst.max(l + u);
            added += u;
        }
        Self {
            worst,
            added,
            jitter: rng.random::<f64>(),
        }
    }
}

fn select(scored: &[Candidate], eps: f64) -> Option<usize> {
    let best = scored.iter().map(|c| c.worst).fold(f64::INFINITY, f64::min);
    scored
        .iter()
        .enumerate()
        .filter(|(_, c)| c.worst <= best + eps)
        .min_by(|(_, a), (_, b)| a.added.total_cmp(&b.added).then(a.jitter.total_cmp(&b.jitter)))
        .map(|(i, _)| i)
}

/// Draws up to `candidate_pool_cap` distinct unassigned codes.
fn sample_pool(
    rng: &mut ChaCha8Rng,
    spec: &CodebookSpec,
    total: Option<u64>,
    assigned: &HashSet<Vec<u8>>,
    class: usize,
) -> Result<Vec<Vec<u8>>> {
    let available = total.map_or(u64::MAX, |t| t - assigned.len() as u64);
    let want = (spec.candidate_pool_cap as u64).min(available) as usize;
    if want == 0 {
        return Err(Error::Internal(format!(
            "candidate pool exhausted at class {class}"
        )));
    }
    let mut seen: HashSet<Vec<u8>> = HashSet::with_capacity(want);
    let mut out = Vec::with_capacity(want);
    while out.len() < want {
        let cand: Vec<u8> = (0..spec.code_length)
            .map(|_| rng.random_range(0..spec.alphabet_size) as u8)
            .collect();
        if assigned.contains(&cand) || !seen.insert(cand.clone()) {
            continue;
        }
        out.push(cand);
    }
    Ok(out)
}
