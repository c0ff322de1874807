//! Biophony / Geophony / Anthrophony weights per visual class, and the
//! projection of class distributions onto those three categories.
//!
//! The built-in aerial and street tables give each class an expected
//! contribution in `[0, 1]` to each category. A scene's BGA vector is the
//! pixel-share weighted sum of its classes' rows, left unnormalized.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feature_store::LabelProbabilities;
use crate::seg_features::ClassDistribution;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BgaView {
    Aerial,
    Street,
    AudioCustom,
}

impl BgaView {
    pub fn as_str(self) -> &'static str {
        match self {
            BgaView::Aerial => "aerial",
            BgaView::Street => "street",
            BgaView::AudioCustom => "audio_custom",
        }
    }
}

impl fmt::Display for BgaView {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BgaView {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "aerial" => Ok(BgaView::Aerial),
            "street" => Ok(BgaView::Street),
            "audio_custom" => Ok(BgaView::AudioCustom),
            other => Err(Error::Argument(format!("unknown BGA view {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BgaCategory {
    Bio,
    Geo,
    Anthro,
}

impl BgaCategory {
    pub const ALL: [BgaCategory; 3] = [BgaCategory::Bio, BgaCategory::Geo, BgaCategory::Anthro];

    pub fn as_str(self) -> &'static str {
        match self {
            BgaCategory::Bio => "bio",
            BgaCategory::Geo => "geo",
            BgaCategory::Anthro => "anthro",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for BgaCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BgaVector {
    pub bio: f64,
    pub geo: f64,
    pub anthro: f64,
}

impl BgaVector {
    pub fn new(bio: f64, geo: f64, anthro: f64) -> Self {
        BgaVector { bio, geo, anthro }
    }

    pub fn component(&self, c: BgaCategory) -> f64 {
        self.to_array()[c.index()]
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.bio, self.geo, self.anthro]
    }

    fn from_array([bio, geo, anthro]: [f64; 3]) -> Self {
        BgaVector { bio, geo, anthro }
    }
}

/// Street-view vehicle classes that all resolve to the grouped vehicle row.
pub const STREET_VEHICLE_ALIASES: [&str; 6] =
    ["Car", "Truck", "Bus", "Motorcycle", "Train", "Bicycle"];
pub const STREET_VEHICLE_ROW: &str = "Car, Truck, Bus, etc";

const AERIAL_TABLE: [(&str, [f64; 3]); 9] = [
    ("Grassland", [1.0, 0.3, 0.0]),
    ("Forest/Vegetation", [1.0, 0.3, 0.0]),
    ("Wetlands", [1.0, 0.3, 0.0]),
    ("Waterbody", [0.3, 1.0, 0.0]),
    ("Bare Land", [0.1, 0.1, 1.0]),
    ("Road/Sidewalk", [0.1, 0.0, 1.0]),
    ("Building", [0.1, 0.0, 1.0]),
    ("Vehicles", [0.0, 0.0, 1.0]),
    ("Cropland", [1.0, 0.0, 0.3]),
];

const STREET_TABLE: [(&str, [f64; 3]); 7] = [
    ("Road", [0.0, 0.0, 1.0]),
    ("Sidewalk", [0.3, 0.0, 1.0]),
    ("Building", [0.3, 0.0, 1.0]),
    ("Vegetation", [1.0, 0.3, 0.0]),
    ("Waterbody", [1.0, 1.0, 0.0]),
    ("Person", [0.0, 0.0, 1.0]),
    (STREET_VEHICLE_ROW, [0.0, 0.0, 1.0]),
];

/// Class → (bio, geo, anthro) weights for one view.
///
/// Lookups are ASCII case-insensitive and go through an alias table first.
#[derive(Debug, Clone, PartialEq)]
pub struct BgaMatrix {
    pub view: BgaView,
    weights: BTreeMap<String, [f64; 3]>,
    aliases: BTreeMap<String, String>,
}

impl BgaMatrix {
    pub fn new(view: BgaView, weights: BTreeMap<String, [f64; 3]>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Config(format!("BGA table for view {view} is empty")));
        }
        for (class, w) in &weights {
            if w.iter().any(|x| !(0.0..=1.0).contains(x)) {
                return Err(Error::Config(format!(
                    "BGA weights for {class:?} must lie in [0, 1], got {w:?}"
                )));
            }
        }
        Ok(BgaMatrix {
            view,
            weights,
            aliases: BTreeMap::new(),
        })
    }

    /// Adds `alias` as another name for the existing row `class`.
    pub fn with_alias(mut self, alias: &str, class: &str) -> Result<Self> {
        if !self.weights.contains_key(class) {
            return Err(Error::Config(format!(
                "alias target {class:?} is not a row"
            )));
        }
        self.aliases
            .insert(alias.to_ascii_lowercase(), class.to_string());
        Ok(self)
    }

    pub fn rows(&self) -> impl Iterator<Item = (&str, [f64; 3])> {
        self.weights.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn max_weight(&self) -> f64 {
        self.weights.values().flatten().copied().fold(0.0, f64::max)
    }

    /// Resolves a class or label name to its weight row.
    pub fn lookup(&self, name: &str) -> Option<[f64; 3]> {
        let lower = name.to_ascii_lowercase();
        let target = self.aliases.get(&lower).map(String::as_str);
        let key = target.unwrap_or(name);
        self.weights.get(key).copied().or_else(|| {
            self.weights
                .iter()
                .find(|(k, _)| k.eq_ignore_ascii_case(key))
                .map(|(_, v)| *v)
        })
    }

    /// Reads `{"view":"audio_custom","weights":{"bird":[1.0,0.0,0.0],…}}`.
    pub fn read_json<R: Read>(source: R) -> Result<Self> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Doc {
            view: BgaView,
            weights: BTreeMap<String, [f64; 3]>,
        }
        let doc: Doc = serde_json::from_reader(source)
            .map_err(|e| Error::Config(format!("BGA table: {e}")))?;
        BgaMatrix::new(doc.view, doc.weights)
    }

    pub fn read_json_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_json(file)
    }
}

/// The built-in aerial or street table.
pub fn bga_matrix_for_view(view: BgaView) -> Result<BgaMatrix> {
    let table: &[(&str, [f64; 3])] = match view {
        BgaView::Aerial => &AERIAL_TABLE,
        BgaView::Street => &STREET_TABLE,
        BgaView::AudioCustom => {
            return Err(Error::Argument(
                "audio_custom has no built-in table; load one from JSON".into(),
            ))
        }
    };
    let weights = table.iter().map(|(k, v)| (k.to_string(), *v)).collect();
    let mut m = BgaMatrix::new(view, weights)?;
    if view == BgaView::Street {
        for alias in STREET_VEHICLE_ALIASES {
            m = m.with_alias(alias, STREET_VEHICLE_ROW)?;
        }
    }
    Ok(m)
}

/// Parses a view name and returns its built-in table.
pub fn bga_matrix_for_view_name(view: &str) -> Result<BgaMatrix> {
    bga_matrix_for_view(view.parse()?)
}

/// A projected vector and the classes (or labels) the table did not know.
#[derive(Debug, Clone, PartialEq)]
pub struct BgaProjection {
    pub vector: BgaVector,
    pub unmapped: Vec<String>,
}

fn project<'a>(entries: impl Iterator<Item = (&'a String, f64)>, m: &BgaMatrix) -> BgaProjection {
    let mut acc = [0.0; 3];
    let mut unmapped = Vec::new();
    for (name, share) in entries {
        match m.lookup(name) {
            Some(w) => {
                for (a, wk) in acc.iter_mut().zip(w) {
                    *a += share * wk;
                }
            }
            None if share > 0.0 => unmapped.push(name.clone()),
            None => {}
        }
    }
    BgaProjection {
        vector: BgaVector::from_array(acc),
        unmapped,
    }
}

/// `b_k = Σ_c p(c) · M(c)_k`. Classes missing from `m` contribute nothing and
/// are listed in [`BgaProjection::unmapped`].
pub fn bga_vector(p: &ClassDistribution, m: &BgaMatrix) -> Result<BgaProjection> {
    if p.proportions.is_empty() {
        return Err(Error::Argument("class distribution is empty".into()));
    }
    if let Some((c, v)) = p
        .proportions
        .iter()
        .find(|(_, v)| !(v.is_finite() && **v >= 0.0))
    {
        return Err(Error::Argument(format!(
            "proportion {v} for {c:?} is invalid"
        )));
    }
    if p.proportions.values().all(|&v| v == 0.0) {
        return Err(Error::Argument("class distribution is all zero".into()));
    }
    Ok(project(p.proportions.iter().map(|(k, v)| (k, *v)), m))
}

/// Same weighted sum over audio tag probabilities with a user table.
pub fn audio_bga_vector(lp: &LabelProbabilities, m: &BgaMatrix) -> Result<BgaProjection> {
    if m.is_empty() {
        return Err(Error::Config("audio BGA table is empty".into()));
    }
    if lp.labels.is_empty() {
        return Err(Error::Argument(format!(
            "site {:?} has no labels",
            lp.site_id
        )));
    }
    Ok(project(lp.labels.iter().map(|(k, v)| (k, *v)), m))
}
