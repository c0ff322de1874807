//! Cosine similarity and per-pair similarity series over a site set.
//!
//! Every series is laid out over a [`PairIndex`]: sites sorted by id, pairs
//! `(i, j)` with `i < j`, in row-major upper-triangle order. Two series can
//! only be correlated when their indices are identical.

use std::collections::BTreeMap;
use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;

use crate::bga::{BgaCategory, BgaVector};
use crate::error::{Error, Result};
use crate::numfmt::sig17;

/// Sorted sites and the `(i, j)` positions of each pair among them.
pub type SiteMatrix = (Vec<String>, Vec<(usize, usize)>);

/// Canonical ordered list of site pairs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairIndex {
    pairs: Arc<Vec<(String, String)>>,
}

impl PairIndex {
    /// All `n(n-1)/2` pairs over the given sites (sorted, deduplicated).
    pub fn complete<I, S>(sites: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut ids: Vec<String> = sites.into_iter().map(Into::into).collect();
        ids.sort();
        ids.dedup();
        let mut pairs = Vec::with_capacity(ids.len() * ids.len().saturating_sub(1) / 2);
        for (i, a) in ids.iter().enumerate() {
            for b in &ids[i + 1..] {
                pairs.push((a.clone(), b.clone()));
            }
        }
        PairIndex {
            pairs: Arc::new(pairs),
        }
    }

    /// An index over an explicit pair list. Pairs must be strictly increasing
    /// in the canonical order, with no self-pairs.
    pub fn from_pairs(pairs: Vec<(String, String)>) -> Result<Self> {
        for (a, b) in &pairs {
            if a >= b {
                return Err(Error::Argument(format!(
                    "pair ({a}, {b}) is not in canonical order"
                )));
            }
        }
        if let Some(w) = pairs.windows(2).find(|w| w[0] >= w[1]) {
            return Err(Error::Argument(format!(
                "pairs {:?} and {:?} are duplicated or out of order",
                w[0], w[1]
            )));
        }
        Ok(PairIndex {
            pairs: Arc::new(pairs),
        })
    }

    pub fn pairs(&self) -> &[(String, String)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Distinct sites mentioned by any pair, sorted.
    pub fn sites(&self) -> Vec<String> {
        let mut ids: Vec<String> = self
            .pairs
            .iter()
            .flat_map(|(a, b)| [a.clone(), b.clone()])
            .collect();
        ids.sort();
        ids.dedup();
        ids
    }

    /// When this index is the complete pair set over its sites, returns the
    /// `(i, j)` positions of each pair in the sorted site list.
    pub fn as_complete_matrix(&self) -> Option<SiteMatrix> {
        let sites = self.sites();
        let n = sites.len();
        if self.len() != n * n.saturating_sub(1) / 2 {
            return None;
        }
        let mut positions = Vec::with_capacity(self.len());
        let mut it = self.pairs.iter();
        for i in 0..n {
            for j in i + 1..n {
                let (a, b) = it.next()?;
                if *a != sites[i] || *b != sites[j] {
                    return None;
                }
                positions.push((i, j));
            }
        }
        Some((sites, positions))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairVector {
    pub index: PairIndex,
    pub values: Vec<f64>,
    pub comparison_id: String,
}

impl PairVector {
    pub fn new(
        index: PairIndex,
        values: Vec<f64>,
        comparison_id: impl Into<String>,
    ) -> Result<Self> {
        if index.len() != values.len() {
            return Err(Error::Argument(format!(
                "{} values for {} pairs",
                values.len(),
                index.len()
            )));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            let (a, b) = &index.pairs()[k];
            return Err(Error::Argument(format!(
                "non-finite value for pair ({a}, {b})"
            )));
        }
        Ok(PairVector {
            index,
            values,
            comparison_id: comparison_id.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&(String, String), f64)> {
        self.index.pairs().iter().zip(self.values.iter().copied())
    }

    /// The sub-series of pairs whose both sites satisfy `keep`.
    pub fn restrict(&self, keep: impl Fn(&str) -> bool) -> PairVector {
        let (pairs, values) = self
            .iter()
            .filter(|((a, b), _)| keep(a) && keep(b))
            .map(|(p, v)| (p.clone(), v))
            .unzip();
        PairVector {
            index: PairIndex {
                pairs: Arc::new(pairs),
            },
            values,
            comparison_id: self.comparison_id.clone(),
        }
    }

    /// `site_i,site_j,value` rows in canonical order.
    pub fn write_csv<W: Write>(&self, sink: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(sink);
        let to_err = |e: csv::Error| Error::Internal(format!("writing pair CSV: {e}"));
        w.write_record(["site_i", "site_j", "value"])
            .map_err(to_err)?;
        for ((a, b), v) in self.iter() {
            w.write_record([a.as_str(), b.as_str(), &sig17(v)])
                .map_err(to_err)?;
        }
        w.flush().map_err(|e| Error::io("<pair csv>", e))
    }
}

fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

fn checked_norm(v: &[f64]) -> Result<f64> {
    let n = dot(v, v).sqrt();
    if n.is_finite() && n > 0.0 {
        Ok(n)
    } else {
        Err(Error::DegenerateVector(format!("vector norm is {n}")))
    }
}

/// `u·v / (‖u‖‖v‖)`, clamped to `[-1, 1]`.
pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::Argument(format!(
            "dimension mismatch: {} vs {}",
            u.len(),
            v.len()
        )));
    }
    let nu = checked_norm(u)?;
    let nv = checked_norm(v)?;
    Ok((dot(u, v) / (nu * nv)).clamp(-1.0, 1.0))
}

/// Cosine similarity for every canonical pair of `items`.
pub fn pairwise_similarity(
    items: &BTreeMap<String, Vec<f64>>,
    comparison_id: &str,
) -> Result<PairVector> {
    if items.len() < 2 {
        return Err(Error::Argument(format!(
            "{comparison_id}: need at least 2 sites, got {}",
            items.len()
        )));
    }
    let entries: Vec<(&String, &Vec<f64>)> = items.iter().collect();
    let dim = entries[0].1.len();
    let mut norms = Vec::with_capacity(entries.len());
    for (id, v) in &entries {
        if v.len() != dim {
            return Err(Error::Argument(format!(
                "{comparison_id}: site {id:?} has dim {} but expected {dim}",
                v.len()
            )));
        }
        let n = checked_norm(v)
            .map_err(|e| Error::DegenerateVector(format!("{comparison_id}: site {id:?}: {e}")))?;
        norms.push(n);
    }

    let index = PairIndex::complete(items.keys().cloned());
    let n = entries.len();
    let positions: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .collect();
    let values = positions
        .par_iter()
        .map(|&(i, j)| (dot(entries[i].1, entries[j].1) / (norms[i] * norms[j])).clamp(-1.0, 1.0))
        .collect();
    PairVector::new(index, values, comparison_id)
}

/// Per-category agreement `1 - |b_k(i) - b_k(j)|` for every canonical pair.
pub fn bga_category_pair_similarity(
    vectors: &BTreeMap<String, BgaVector>,
    category: BgaCategory,
    comparison_id: &str,
) -> Result<PairVector> {
    if vectors.len() < 2 {
        return Err(Error::Argument(format!(
            "{comparison_id}: need at least 2 sites, got {}",
            vectors.len()
        )));
    }
    for (id, v) in vectors {
        let x = v.component(category);
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::Argument(format!(
                "{comparison_id}: site {id:?} has {category} component {x} outside [0, 1]"
            )));
        }
    }
    let comps: Vec<f64> = vectors.values().map(|v| v.component(category)).collect();
    let n = comps.len();
    let values = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .map(|(i, j)| 1.0 - (comps[i] - comps[j]).abs())
        .collect();
    PairVector::new(
        PairIndex::complete(vectors.keys().cloned()),
        values,
        comparison_id,
    )
}
