//! Exact finite-size expectations of the power moments
//! `(1/N) tr W^k`, `W = (1/n) Σ Σ*`, for Gaussian columns.
//!
//! Wick's formula for circularly symmetric Gaussians gives
//!
//! ```text
//! E tr (Σ Σ*)^k = Σ_{σ ∈ S_k} Σ_{g : cycles(σ) → profiles} Π_{cycles of σ} n_g
//!                 · Π_{cycles C of σ∘γ} tr Π_{x ∈ C} R_{g(γ x)}
//! ```
//!
//! where `γ` is the shift `x ↦ x + 1 (mod k)`, `n_g` the number of columns
//! with profile `R_g`, and the products along each cycle are taken in cycle
//! order. The sums run over `k!` permutations, so only small `k` are used.

use std::collections::HashMap;

use crate::linalg::{self, CMatrix};
use crate::model::CorrelationEnsemble;
use crate::{Error, Result};

/// Upper limit on `k! · G^k` terms.
const TERM_BUDGET: f64 = 2e6;
pub const MAX_DEGREE: usize = 8;

/// Largest degree whose expansion fits the term budget for `groups` profiles.
pub fn max_degree(groups: usize) -> usize {
    let mut k = 0;
    let mut cost = 1.0;
    while k < MAX_DEGREE {
        let next = cost * (k + 1) as f64 * groups as f64;
        if next > TERM_BUDGET {
            break;
        }
        cost = next;
        k += 1;
    }
    k
}

fn next_permutation(p: &mut [usize]) -> bool {
    let n = p.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && p[i - 1] >= p[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while p[j] <= p[i - 1] {
        j -= 1;
    }
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

/// Cycle id of every point, and the number of cycles.
fn cycle_labels(p: &[usize]) -> (Vec<usize>, usize) {
    let mut label = vec![usize::MAX; p.len()];
    let mut count = 0;
    for start in 0..p.len() {
        if label[start] != usize::MAX {
            continue;
        }
        let mut x = start;
        while label[x] == usize::MAX {
            label[x] = count;
            x = p[x];
        }
        count += 1;
    }
    (label, count)
}

/// Cycles as ordered point lists.
fn cycles(p: &[usize]) -> Vec<Vec<usize>> {
    let mut seen = vec![false; p.len()];
    let mut out = Vec::new();
    for start in 0..p.len() {
        if seen[start] {
            continue;
        }
        let mut cyc = Vec::new();
        let mut x = start;
        while !seen[x] {
            seen[x] = true;
            cyc.push(x);
            x = p[x];
        }
        out.push(cyc);
    }
    out
}

/// Smallest rotation, so cyclically equal words share a cache entry.
fn canonical(word: &[u8]) -> Vec<u8> {
    (0..word.len())
        .map(|r| {
            let mut w = word[r..].to_vec();
            w.extend_from_slice(&word[..r]);
            w
        })
        .min()
        .unwrap_or_default()
}

struct WordTraces<'a> {
    profiles: &'a [CMatrix],
    cache: HashMap<Vec<u8>, f64>,
}

impl WordTraces<'_> {
    fn trace(&mut self, word: &[u8]) -> f64 {
        let key = canonical(word);
        if let Some(v) = self.cache.get(&key) {
            return *v;
        }
        let mut prod = self.profiles[key[0] as usize].clone();
        for &g in &key[1..] {
            prod = linalg::complex_matmul(&prod, &self.profiles[g as usize]);
        }
        // single words can have complex traces, the full sum is real
        let v = linalg::trace(&prod).re;
        self.cache.insert(key, v);
        v
    }
}

/// `E (1/N) tr W^k` for `k = 1..=degree`.
pub fn expected_power_moments(ensemble: &CorrelationEnsemble, degree: usize) -> Result<Vec<f64>> {
    let groups = ensemble.profiles().len();
    if degree > max_degree(groups) {
        return Err(Error::Precondition(format!(
            "degree {degree} exceeds the exact-moment budget {} for {groups} profiles",
            max_degree(groups)
        )));
    }
    if groups > u8::MAX as usize {
        return Err(Error::Precondition(
            "too many distinct profiles for exact moments".into(),
        ));
    }
    let counts: Vec<f64> = ensemble
        .profile_counts()
        .iter()
        .map(|&c| c as f64)
        .collect();
    let n = ensemble.columns() as f64;
    let dim = ensemble.dim() as f64;
    let mut traces = WordTraces {
        profiles: ensemble.profiles(),
        cache: HashMap::new(),
    };
    let mut out = Vec::with_capacity(degree);
    for k in 1..=degree {
        let mut sigma: Vec<usize> = (0..k).collect();
        let mut total = 0.0;
        loop {
            let (label, ncyc) = cycle_labels(&sigma);
            let tau: Vec<usize> = (0..k).map(|x| sigma[(x + 1) % k]).collect();
            let tau_cycles = cycles(&tau);
            let mut assign = vec![0usize; ncyc];
            loop {
                let mut term: f64 = assign.iter().map(|&g| counts[g]).product();
                for cyc in &tau_cycles {
                    let word: Vec<u8> = cyc
                        .iter()
                        .map(|&x| assign[label[(x + 1) % k]] as u8)
                        .collect();
                    term *= traces.trace(&word);
                }
                total += term;
                // odometer over profile assignments
                let mut pos = 0;
                while pos < ncyc {
                    assign[pos] += 1;
                    if assign[pos] < groups {
                        break;
                    }
                    assign[pos] = 0;
                    pos += 1;
                }
                if pos == ncyc {
                    break;
                }
            }
            if !next_permutation(&mut sigma) {
                break;
            }
        }
        out.push(total / (dim * n.powi(k as i32)));
    }
    Ok(out)
}

/// `(1/N) Σ λ^k` for `k = 1..=degree`.
pub fn empirical_power_moments(eigenvalues: &[f64], degree: usize) -> Vec<f64> {
    let dim = eigenvalues.len() as f64;
    let mut sums = vec![0.0; degree];
    for &l in eigenvalues {
        let mut p = 1.0;
        for s in sums.iter_mut() {
            p *= l;
            *s += p;
        }
    }
    sums.iter().map(|s| s / dim).collect()
}
