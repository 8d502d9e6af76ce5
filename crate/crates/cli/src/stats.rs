//! Two-sided Mann-Whitney U test with midrank ties.

use itertools::Itertools;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::{CliError, Result};

/// Combined sample size up to which p is computed by enumeration.
pub const EXACT_LIMIT: usize = 12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PMethod {
    Exact,
    Normal,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MannWhitney {
    /// U statistic of the first sample.
    pub u: f64,
    pub p: f64,
    pub method: PMethod,
    pub n_a: usize,
    pub n_b: usize,
}

/// Ranks (1-based) of `values`, tied values sharing their mean rank.
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        // positions i..j hold ranks i+1..=j
        let rank = (i + j + 1) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = rank;
        }
        i = j;
    }
    ranks
}

fn check(a: &[f64], b: &[f64]) -> Result<()> {
    if a.is_empty() || b.is_empty() {
        return Err(CliError::Contract("Mann-Whitney needs two non-empty samples".into()));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(CliError::Contract("Mann-Whitney samples must be finite".into()));
    }
    Ok(())
}

fn u_from_ranks(rank_sum: f64, n_a: usize) -> f64 {
    rank_sum - (n_a * (n_a + 1)) as f64 / 2.0
}

fn pooled_ranks(a: &[f64], b: &[f64]) -> Vec<f64> {
    let all: Vec<f64> = a.iter().chain(b).copied().collect();
    midranks(&all)
}

/// U statistic of `a` against `b`.
pub fn u_statistic(a: &[f64], b: &[f64]) -> Result<f64> {
    check(a, b)?;
    let ranks = pooled_ranks(a, b);
    Ok(u_from_ranks(ranks[..a.len()].iter().sum(), a.len()))
}

/// Exact two-sided p by enumerating every split of the pooled midranks.
pub fn exact_p(a: &[f64], b: &[f64]) -> Result<f64> {
    check(a, b)?;
    let ranks = pooled_ranks(a, b);
    let n_a = a.len();
    let mean = (n_a * b.len()) as f64 / 2.0;
    let observed = (u_from_ranks(ranks[..n_a].iter().sum(), n_a) - mean).abs();
    // midranks are multiples of 0.5, so this only absorbs summation rounding
    let tol = 1e-9 * (1.0 + observed);
    let (mut extreme, mut total) = (0u64, 0u64);
    for split in (0..ranks.len()).combinations(n_a) {
        let u = u_from_ranks(split.iter().map(|&i| ranks[i]).sum(), n_a);
        if (u - mean).abs() >= observed - tol {
            extreme += 1;
        }
        total += 1;
    }
    Ok(extreme as f64 / total as f64)
}

/// Normal approximation with tie-corrected variance and continuity correction.
pub fn normal_p(a: &[f64], b: &[f64]) -> Result<f64> {
    check(a, b)?;
    let (n_a, n_b) = (a.len() as f64, b.len() as f64);
    let n = n_a + n_b;
    let all: Vec<f64> = a.iter().chain(b).copied().collect();
    let ranks = midranks(&all);
    let u = u_from_ranks(ranks[..a.len()].iter().sum(), a.len());
    let mut sorted = all.clone();
    sorted.sort_by(f64::total_cmp);
    let ties: f64 = sorted.chunk_by(|x, y| x == y).map(|g| (g.len() as f64).powi(3) - g.len() as f64).sum();
    let variance = if n > 1.0 { n_a * n_b / 12.0 * ((n + 1.0) - ties / (n * (n - 1.0))) } else { 0.0 };
    if variance <= 0.0 {
        return Ok(1.0);
    }
    let z = ((u - n_a * n_b / 2.0).abs() - 0.5).max(0.0) / variance.sqrt();
    let normal = Normal::standard();
    Ok((2.0 * normal.sf(z)).min(1.0))
}

/// U of `a` and the two-sided p, exact up to a combined size of [`EXACT_LIMIT`].
pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> Result<MannWhitney> {
    let u = u_statistic(a, b)?;
    let (p, method) = if a.len() + b.len() <= EXACT_LIMIT {
        (exact_p(a, b)?, PMethod::Exact)
    } else {
        (normal_p(a, b)?, PMethod::Normal)
    };
    Ok(MannWhitney { u, p, method, n_a: a.len(), n_b: b.len() })
}
