//! Independent scalar-loop reference implementations used as test oracles.
#![allow(dead_code)]

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use loghd::{EncodedSet, Encoder, EncoderSpec, Hypervector};

pub fn naive_norm(v: &[f64]) -> f64 {
    let mut s = 0.0;
    for x in v {
        s += x * x;
    }
    s.sqrt()
}

pub fn naive_normalize(v: &[f64]) -> Vec<f64> {
    let n = naive_norm(v);
    let mut out = vec![0.0; v.len()];
    for i in 0..v.len() {
        out[i] = v[i] / n;
    }
    out
}

pub fn naive_cos(a: &[f64], b: &[f64]) -> f64 {
    let mut dot = 0.0;
    for i in 0..a.len() {
        dot += a[i] * b[i];
    }
    dot / (naive_norm(a) * naive_norm(b))
}

/// H_c = normalize(sum of class members).
pub fn naive_prototypes(encs: &[Vec<f64>], labels: &[usize], classes: usize) -> Vec<Vec<f64>> {
    let d = encs[0].len();
    let mut sums = vec![vec![0.0; d]; classes];
    for (e, &y) in encs.iter().zip(labels) {
        for i in 0..d {
            sums[y][i] += e[i];
        }
    }
    sums.iter().map(|s| naive_normalize(s)).collect()
}

/// M_j = normalize(sum_c B_cj/(k-1) * H_c).
pub fn naive_bundles(protos: &[Vec<f64>], rows: &[Vec<u8>], k: u32) -> Vec<Vec<f64>> {
    let n = rows[0].len();
    let d = protos[0].len();
    let mut out = Vec::new();
    for j in 0..n {
        let mut m = vec![0.0; d];
        for c in 0..protos.len() {
            let w = rows[c][j] as f64 / (k - 1) as f64;
            for i in 0..d {
                m[i] += w * protos[c][i];
            }
        }
        out.push(naive_normalize(&m));
    }
    out
}

pub fn naive_activation(bundles: &[Vec<f64>], h: &[f64]) -> Vec<f64> {
    bundles.iter().map(|m| naive_cos(m, h)).collect()
}

pub fn naive_profiles(bundles: &[Vec<f64>], encs: &[Vec<f64>], labels: &[usize], classes: usize) -> Vec<Vec<f64>> {
    let n = bundles.len();
    let mut sums = vec![vec![0.0; n]; classes];
    let mut counts = vec![0usize; classes];
    for (h, &y) in encs.iter().zip(labels) {
        let a = naive_activation(bundles, h);
        for j in 0..n {
            sums[y][j] += a[j];
        }
        counts[y] += 1;
    }
    for c in 0..classes {
        for j in 0..n {
            sums[c][j] /= counts[c] as f64;
        }
    }
    sums
}

pub fn naive_predict(bundles: &[Vec<f64>], profiles: &[Vec<f64>], h: &[f64]) -> usize {
    let a = naive_activation(bundles, h);
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (c, p) in profiles.iter().enumerate() {
        let mut d = 0.0;
        for j in 0..a.len() {
            d += (a[j] - p[j]) * (a[j] - p[j]);
        }
        if d < best_d {
            best_d = d;
            best = c;
        }
    }
    best
}

/// One perceptron-style correction of every bundle toward its target.
pub fn naive_refine_step(bundles: &[Vec<f64>], row: &[u8], k: u32, h: &[f64], lr: f64) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    for (j, m) in bundles.iter().enumerate() {
        let a = naive_cos(m, h);
        let tau = 2.0 * row[j] as f64 / (k - 1) as f64 - 1.0;
        let mut next = m.clone();
        for i in 0..h.len() {
            next[i] += lr * (tau - a) * h[i];
        }
        out.push(naive_normalize(&next));
    }
    out
}

/// Random unit vectors with labels cycling through every class.
pub fn random_encodings(seed: u64, count: usize, dim: usize, classes: usize) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let encs = (0..count)
        .map(|_| naive_normalize(&(0..dim).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<f64>>()))
        .collect();
    let labels = (0..count).map(|i| i % classes).collect();
    (encs, labels)
}

pub fn encoded_set(encs: &[Vec<f64>], labels: &[usize], classes: usize) -> EncodedSet {
    EncodedSet {
        vectors: encs.iter().map(|v| Hypervector::new(v.clone()).unwrap()).collect(),
        labels: labels.to_vec(),
        class_count: classes,
    }
}

/// An encoder of the right output dimension for models built from raw encodings.
pub fn dummy_encoder(dim: usize) -> Arc<Encoder> {
    Arc::new(Encoder::new(EncoderSpec::new(1, dim, 0)).unwrap())
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Per-column load contribution `(s/(k-1))^alpha` of every code in `0..k^n`,
/// codes enumerated lexicographically (first symbol most significant).
pub fn code_loads(k: u32, n: usize, alpha: f64) -> Vec<Vec<f64>> {
    let total = (k as usize).pow(n as u32);
    (0..total)
        .map(|mut idx| {
            let mut row = vec![0.0; n];
            for j in (0..n).rev() {
                let s = (idx % k as usize) as f64;
                row[j] = (s / (k - 1) as f64).powf(alpha);
                idx /= k as usize;
            }
            row
        })
        .collect()
}

/// Minimum over all size-`classes` subsets of codes of the maximum column load.
/// Exhaustive subset enumeration with branch-and-bound pruning.
pub fn brute_force_min_max_load(classes: usize, k: u32, n: usize, alpha: f64, upper: f64) -> f64 {
    let mut codes = code_loads(k, n, alpha);
    // cheapest codes first so the sum bound below is tight
    codes.sort_by(|a, b| a.iter().sum::<f64>().partial_cmp(&b.iter().sum::<f64>()).unwrap());
    let sums: Vec<f64> = codes.iter().map(|c| c.iter().sum()).collect();
    let mut best = upper + 1e-9;
    let mut loads = vec![0.0; n];
    search(&codes, &sums, classes, 0, &mut loads, &mut best);
    best
}

fn search(codes: &[Vec<f64>], sums: &[f64], left: usize, start: usize, loads: &mut [f64], best: &mut f64) {
    let current = loads.iter().cloned().fold(0.0, f64::max);
    if current >= *best {
        return;
    }
    if left == 0 {
        *best = current;
        return;
    }
    let n = loads.len() as f64;
    for i in start..=codes.len() - left {
        // any completion adds at least the next `left` code sums, spread over n columns
        let floor: f64 = sums[i..i + left].iter().sum::<f64>() + loads.iter().sum::<f64>();
        if floor / n >= *best {
            break;
        }
        for (l, c) in loads.iter_mut().zip(&codes[i]) {
            *l += c;
        }
        search(codes, sums, left - 1, i + 1, loads, best);
        for (l, c) in loads.iter_mut().zip(&codes[i]) {
            *l -= c;
        }
    }
}

/// Proptest config without on-disk regression files.
pub fn cases(n: u32) -> proptest::test_runner::Config {
    proptest::test_runner::Config {
        cases: n,
        failure_persistence: None,
        ..proptest::test_runner::Config::default()
    }
}
