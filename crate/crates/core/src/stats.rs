//! Correlation between two pair series: Pearson r, a parametric two-sided
//! t-test p-value, and a Mantel permutation p-value.
//!
//! Pair series are not independent samples (each site appears in `n - 1`
//! pairs), so the t-test p-value is naive. The Mantel test permutes site
//! labels of one similarity matrix instead, which keeps the dependence
//! structure intact.
//!
//! # Permutation stream
//!
//! Replicate `b` (0-based) of a run with seed `s` draws from xoshiro256++
//! whose 256-bit state is filled by SplitMix64 seeded with
//! `s ^ (b + 1) * 0x9E37_79B9_7F4A_7C15` (wrapping). The permutation is a
//! Fisher–Yates shuffle of `0..n` running `i` from `n - 1` down to `1` and
//! swapping `i` with `j = bounded(i + 1)`, where `bounded(m)` is Lemire's
//! multiply-shift with rejection on the full 64-bit output. Each replicate
//! therefore depends only on `(s, b)`.
//!
//! Test vectors for `n = 10`, seed 42:
//!
//! ```text
//! b = 0  [0, 5, 6, 3, 2, 8, 1, 7, 4, 9]
//! b = 1  [8, 9, 0, 2, 7, 5, 1, 6, 4, 3]
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use rayon::prelude::*;
use statrs::function::beta::beta_reg;

use crate::error::{Error, Result};
use crate::manifest::Manifest;
use crate::similarity::PairVector;

pub const ALL_SCOPE: &str = "ALL";
pub const DEFAULT_PERMUTATIONS: usize = 9999;
pub const MIN_PERMUTATIONS: usize = 99;

/// Either the whole site set or one city's sites. `All` sorts first.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Scope {
    All,
    City(String),
}

impl Scope {
    pub fn label(&self) -> &str {
        match self {
            Scope::All => ALL_SCOPE,
            Scope::City(c) => c,
        }
    }
}

impl fmt::Display for Scope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

fn check_same_index(x: &PairVector, y: &PairVector) -> Result<()> {
    if x.index != y.index {
        return Err(Error::Argument(format!(
            "{} and {} are laid out over different pair indices",
            x.comparison_id, y.comparison_id
        )));
    }
    Ok(())
}

/// Sample Pearson correlation of two aligned pair series.
pub fn pearson_r(x: &PairVector, y: &PairVector) -> Result<f64> {
    check_same_index(x, y)?;
    pearson_slices(&x.values, &y.values).map_err(|e| match e {
        Error::DegenerateSeries(m) => {
            Error::DegenerateSeries(format!("{} ~ {}: {m}", x.comparison_id, y.comparison_id))
        }
        other => other,
    })
}

pub(crate) fn pearson_slices(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Argument(format!(
            "length mismatch {} vs {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 3 {
        return Err(Error::Argument(format!(
            "need at least 3 pairs, got {}",
            x.len()
        )));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::DegenerateSeries("series has zero variance".into()));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Two-sided p-value of the t-test for a correlation coefficient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PValue {
    pub value: f64,
    pub t: f64,
    pub df: f64,
    /// The true p is below the smallest positive normal f64; `value` holds
    /// that minimum.
    pub saturated: bool,
}

/// `t = r·√((n−2)/(1−r²))` with `n − 2` degrees of freedom; the two-sided
/// tail is the regularized incomplete beta `I_{1−r²}((n−2)/2, 1/2)`.
pub fn p_value_t(r: f64, n_pairs: usize) -> Result<PValue> {
    if !(-1.0..=1.0).contains(&r) {
        return Err(Error::Argument(format!("correlation {r} outside [-1, 1]")));
    }
    if n_pairs < 3 {
        return Err(Error::Argument(format!(
            "need at least 3 pairs for a t-test, got {n_pairs}"
        )));
    }
    let df = (n_pairs - 2) as f64;
    let one_minus_r2 = (1.0 - r) * (1.0 + r);
    if one_minus_r2 <= 0.0 {
        return Ok(PValue {
            value: f64::MIN_POSITIVE,
            t: r.signum() * f64::INFINITY,
            df,
            saturated: true,
        });
    }
    let t = r * (df / one_minus_r2).sqrt();
    let p = beta_reg(df / 2.0, 0.5, one_minus_r2).min(1.0);
    if p < f64::MIN_POSITIVE {
        return Ok(PValue {
            value: f64::MIN_POSITIVE,
            t,
            df,
            saturated: true,
        });
    }
    Ok(PValue {
        value: p,
        t,
        df,
        saturated: false,
    })
}

/// SplitMix64 seed for replicate `b`.
pub fn replicate_seed(seed: u64, replicate: u64) -> u64 {
    seed ^ replicate
        .wrapping_add(1)
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Uniform integer in `0..range` (Lemire's multiply-shift with rejection).
pub fn bounded_u64<R: RngCore>(rng: &mut R, range: u64) -> u64 {
    debug_assert!(range > 0);
    let mut m = u128::from(rng.next_u64()) * u128::from(range);
    let mut low = m as u64;
    if low < range {
        let threshold = range.wrapping_neg() % range;
        while low < threshold {
            m = u128::from(rng.next_u64()) * u128::from(range);
            low = m as u64;
        }
    }
    (m >> 64) as u64
}

/// The permutation of `0..n` used by replicate `b` of a run seeded `seed`.
pub fn replicate_permutation(seed: u64, replicate: u64, n: usize) -> Vec<usize> {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(replicate_seed(seed, replicate));
    let mut perm: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = bounded_u64(&mut rng, i as u64 + 1) as usize;
        perm.swap(i, j);
    }
    perm
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MantelResult {
    pub p: f64,
    pub r_observed: f64,
    pub permutations: usize,
    pub seed: u64,
    /// Replicates with `|r_b| >= |r_obs|`.
    pub exceedances: usize,
}

/// Mantel permutation test of `x` against `y`.
///
/// Both series must cover every pair of a common site set. The sites of
/// `y`'s similarity matrix are relabelled `permutations` times and
/// `p = (1 + #{|r_b| ≥ |r_obs|}) / (permutations + 1)`.
pub fn mantel_permutation_test(
    x: &PairVector,
    y: &PairVector,
    permutations: usize,
    seed: u64,
) -> Result<MantelResult> {
    check_same_index(x, y)?;
    if permutations < MIN_PERMUTATIONS {
        return Err(Error::Argument(format!(
            "at least {MIN_PERMUTATIONS} permutations are required, got {permutations}"
        )));
    }
    let (sites, positions) = x.index.as_complete_matrix().ok_or_else(|| {
        Error::Argument(format!(
            "{} does not cover every pair of its sites; cannot rebuild a site matrix",
            x.comparison_id
        ))
    })?;
    let n = sites.len();
    let len = positions.len() as f64;
    if positions.len() < 3 {
        return Err(Error::Argument(format!(
            "need at least 3 pairs, got {}",
            positions.len()
        )));
    }

    let mx = x.values.iter().sum::<f64>() / len;
    let my = y.values.iter().sum::<f64>() / len;
    let xc: Vec<f64> = x.values.iter().map(|v| v - mx).collect();
    let mut ym = vec![0.0; n * n];
    for (&(i, j), v) in positions.iter().zip(&y.values) {
        ym[i * n + j] = v - my;
        ym[j * n + i] = v - my;
    }
    let sxx: f64 = xc.iter().map(|v| v * v).sum();
    let syy: f64 = y.values.iter().map(|v| (v - my) * (v - my)).sum();
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::DegenerateSeries(format!(
            "{} ~ {}: series has zero variance",
            x.comparison_id, y.comparison_id
        )));
    }
    let denom = (sxx * syy).sqrt();
    let statistic = |perm: &[usize]| -> f64 {
        let s: f64 = positions
            .iter()
            .zip(&xc)
            .map(|(&(i, j), a)| a * ym[perm[i] * n + perm[j]])
            .sum();
        s / denom
    };

    let identity: Vec<usize> = (0..n).collect();
    let r_observed = statistic(&identity);
    // Count numerical ties as ties.
    let threshold = r_observed.abs() * (1.0 - 1e-12);
    let exceedances = (0..permutations as u64)
        .into_par_iter()
        .filter(|&b| statistic(&replicate_permutation(seed, b, n)).abs() >= threshold)
        .count();

    Ok(MantelResult {
        p: (1 + exceedances) as f64 / (permutations + 1) as f64,
        r_observed,
        permutations,
        seed,
        exceedances,
    })
}

/// Splits a pair series by city. `Scope::All` keeps every pair; each city
/// keeps only the pairs whose two sites both belong to it.
pub fn stratify_by_city(
    pairs: &PairVector,
    manifest: &Manifest,
) -> Result<BTreeMap<Scope, PairVector>> {
    let cities = manifest.city_map();
    let mut seen: BTreeSet<&str> = BTreeSet::new();
    for site in pairs.index.sites() {
        let city = cities.get(site.as_str()).ok_or_else(|| {
            Error::Argument(format!(
                "{}: site {site:?} is not in the manifest",
                pairs.comparison_id
            ))
        })?;
        seen.insert(city);
    }
    let mut out = BTreeMap::new();
    out.insert(Scope::All, pairs.clone());
    for city in seen {
        let stratum = pairs.restrict(|s| cities.get(s) == Some(&city));
        out.insert(Scope::City(city.to_string()), stratum);
    }
    Ok(out)
}

/// One (scope, comparison) row of the report.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationResult {
    pub comparison_id: String,
    pub scope: Scope,
    pub r: f64,
    pub p_t: f64,
    pub p_t_saturated: bool,
    pub p_perm: f64,
    pub n_sites: usize,
    pub n_pairs: usize,
    pub permutations: usize,
    pub seed: u64,
}

/// Pearson r with both p-values for a visual series `x` and a sound series `y`.
pub fn correlate(
    comparison_id: &str,
    scope: Scope,
    x: &PairVector,
    y: &PairVector,
    permutations: usize,
    seed: u64,
) -> Result<CorrelationResult> {
    let r = pearson_r(x, y)?;
    let p_t = p_value_t(r, x.len())?;
    let mantel = mantel_permutation_test(x, y, permutations, seed)?;
    Ok(CorrelationResult {
        comparison_id: comparison_id.to_string(),
        scope,
        r,
        p_t: p_t.value,
        p_t_saturated: p_t.saturated,
        p_perm: mantel.p,
        n_sites: x.index.sites().len(),
        n_pairs: x.len(),
        permutations,
        seed,
    })
}
