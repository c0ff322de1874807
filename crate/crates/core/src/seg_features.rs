//! Scene-level class distributions from label rasters.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::feature_store::LabelRaster;

/// Pixel share per class name. Legend classes absent from the raster are
/// present with proportion 0.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassDistribution {
    pub proportions: BTreeMap<String, f64>,
    pub total_pixels: usize,
}

impl ClassDistribution {
    pub fn get(&self, class: &str) -> f64 {
        self.proportions.get(class).copied().unwrap_or(0.0)
    }

    /// Dense vector over `vocabulary`; classes outside it are ignored.
    pub fn to_vector(&self, vocabulary: &[String]) -> Vec<f64> {
        vocabulary.iter().map(|c| self.get(c)).collect()
    }
}

pub fn class_distribution(r: &LabelRaster) -> Result<ClassDistribution> {
    if r.width == 0 || r.height == 0 {
        return Err(Error::Argument(format!(
            "cannot take the class distribution of an empty {}x{} raster",
            r.width, r.height
        )));
    }
    r.check()?;

    let mut counts: BTreeMap<u32, usize> = r.legend.keys().map(|&id| (id, 0)).collect();
    for id in &r.cells {
        *counts.get_mut(id).expect("checked against legend") += 1;
    }
    let total = r.cells.len();
    let mut proportions: BTreeMap<String, f64> = BTreeMap::new();
    // Legend ids sharing a name pool their pixels.
    let mut pooled: BTreeMap<&str, usize> = BTreeMap::new();
    for (id, n) in counts {
        *pooled.entry(r.legend[&id].as_str()).or_default() += n;
    }
    for (name, n) in pooled {
        proportions.insert(name.to_string(), n as f64 / total as f64);
    }
    Ok(ClassDistribution {
        proportions,
        total_pixels: total,
    })
}
