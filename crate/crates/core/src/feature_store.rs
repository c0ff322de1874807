//! File contracts for externally produced features, and the vector
//! operations applied to embeddings before comparison.
//!
//! Three formats live here:
//!
//! * embedding store, JSON Lines:
//!   `{"site_id":…, "modality":…, "model_id":…, "dim":N, "vector":[…]}`
//! * label raster, one JSON document:
//!   `{"width":W, "height":H, "legend":{"0":"Road", …}, "rows":[[…]…]}`
//! * label probabilities, JSON Lines: `{"site_id":…, "labels":{"name":p, …}}`
//!
//! Reals are written with 17 significant digits so every finite binary64
//! value reads back bit-identical.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numfmt::Sig17;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Sound,
    Street,
    Aerial,
    Combined,
}

impl Modality {
    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Sound => "sound",
            Modality::Street => "street",
            Modality::Aerial => "aerial",
            Modality::Combined => "combined",
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Modality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sound" => Ok(Modality::Sound),
            "street" => Ok(Modality::Street),
            "aerial" => Ok(Modality::Aerial),
            "combined" => Ok(Modality::Combined),
            other => Err(Error::Argument(format!("unknown modality {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRecord {
    pub site_id: String,
    pub modality: Modality,
    pub model_id: String,
    pub dim: usize,
    pub vector: Vec<f64>,
}

impl EmbeddingRecord {
    pub fn new(
        site_id: impl Into<String>,
        modality: Modality,
        model_id: impl Into<String>,
        vector: Vec<f64>,
    ) -> Self {
        EmbeddingRecord {
            site_id: site_id.into(),
            modality,
            model_id: model_id.into(),
            dim: vector.len(),
            vector,
        }
    }

    fn check(&self) -> std::result::Result<(), String> {
        if self.dim == 0 {
            return Err("dim must be positive".into());
        }
        if self.vector.len() != self.dim {
            return Err(format!(
                "declares dim={} but holds {} values",
                self.dim,
                self.vector.len()
            ));
        }
        if let Some(i) = self.vector.iter().position(|v| !v.is_finite()) {
            return Err(format!("non-finite value at index {i}"));
        }
        Ok(())
    }
}

#[derive(Serialize)]
struct EmbeddingLineOut<'a> {
    site_id: &'a str,
    modality: Modality,
    model_id: &'a str,
    dim: usize,
    vector: Vec<Sig17>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EmbeddingLineIn {
    site_id: String,
    modality: Modality,
    model_id: String,
    dim: usize,
    vector: Vec<f64>,
}

/// How strictly a store file is checked on read.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StoreKind {
    /// One record per (site_id, modality).
    Site,
    /// Per-clip records; a site may repeat.
    Clips,
}

pub fn write_embeddings<W: Write>(
    records: &[EmbeddingRecord],
    kind: StoreKind,
    mut sink: W,
) -> Result<()> {
    check_store(records, kind)?;
    for r in records {
        let line = EmbeddingLineOut {
            site_id: &r.site_id,
            modality: r.modality,
            model_id: &r.model_id,
            dim: r.dim,
            vector: r.vector.iter().copied().map(Sig17).collect(),
        };
        serde_json::to_writer(&mut sink, &line)
            .map_err(|e| Error::Internal(format!("serializing embedding: {e}")))?;
        sink.write_all(b"\n")
            .map_err(|e| Error::io("<embedding store>", e))?;
    }
    Ok(())
}

pub fn read_embeddings<R: Read>(source: R, kind: StoreKind) -> Result<Vec<EmbeddingRecord>> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(source).lines().enumerate() {
        let line = line.map_err(|e| Error::io("<embedding store>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: EmbeddingLineIn = serde_json::from_str(&line)
            .map_err(|e| Error::Format(format!("embedding store line {}: {e}", i + 1)))?;
        let record = EmbeddingRecord {
            site_id: parsed.site_id,
            modality: parsed.modality,
            model_id: parsed.model_id,
            dim: parsed.dim,
            vector: parsed.vector,
        };
        record
            .check()
            .map_err(|m| Error::Format(format!("embedding store line {}: {m}", i + 1)))?;
        out.push(record);
    }
    check_store(&out, kind)?;
    Ok(out)
}

pub fn read_embeddings_path(
    path: impl AsRef<Path>,
    kind: StoreKind,
) -> Result<Vec<EmbeddingRecord>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_embeddings(file, kind).map_err(|e| match e {
        Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        other => other,
    })
}

fn check_store(records: &[EmbeddingRecord], kind: StoreKind) -> Result<()> {
    let mut keys = HashSet::new();
    let mut dims: HashMap<(Modality, &str), usize> = HashMap::new();
    for r in records {
        r.check()
            .map_err(|m| Error::Format(format!("record {}/{}: {m}", r.site_id, r.modality)))?;
        if kind == StoreKind::Site && !keys.insert((r.site_id.as_str(), r.modality)) {
            return Err(Error::Format(format!(
                "duplicate record for site {:?} modality {}",
                r.site_id, r.modality
            )));
        }
        let expected = *dims
            .entry((r.modality, r.model_id.as_str()))
            .or_insert(r.dim);
        if expected != r.dim {
            return Err(Error::Format(format!(
                "site {:?}: {}/{} has dim {} but earlier records have dim {expected}",
                r.site_id, r.modality, r.model_id, r.dim
            )));
        }
    }
    Ok(())
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Scales `v` to unit Euclidean length.
pub fn l2_normalize(v: &[f64]) -> Result<Vec<f64>> {
    let n = norm(v);
    if !(n.is_finite() && n > 0.0) {
        return Err(Error::DegenerateVector(format!(
            "cannot normalize a vector with norm {n}"
        )));
    }
    Ok(v.iter().map(|x| x / n).collect())
}

/// Site-level sound embedding: mean of the clip embeddings, normalized.
pub fn aggregate_clip_embeddings(clips: &[Vec<f64>]) -> Result<Vec<f64>> {
    let first = clips
        .first()
        .ok_or_else(|| Error::Argument("no clip embeddings to aggregate".into()))?;
    let dim = first.len();
    let mut mean = vec![0.0; dim];
    for (i, c) in clips.iter().enumerate() {
        if c.len() != dim {
            return Err(Error::Argument(format!(
                "clip {i} has dim {} but clip 0 has dim {dim}",
                c.len()
            )));
        }
        for (m, x) in mean.iter_mut().zip(c) {
            *m += x;
        }
    }
    let n = clips.len() as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    l2_normalize(&mean)
        .map_err(|_| Error::DegenerateVector("mean clip embedding has zero norm".into()))
}

/// Concatenates the unit street and aerial vectors and renormalizes. The
/// cosine between two combined vectors is the mean of the per-view cosines.
pub fn combine_views(street: &[f64], aerial: &[f64]) -> Result<Vec<f64>> {
    if street.len() != aerial.len() {
        return Err(Error::Argument(format!(
            "street dim {} differs from aerial dim {}",
            street.len(),
            aerial.len()
        )));
    }
    let mut out = l2_normalize(street)?;
    out.extend(l2_normalize(aerial)?);
    l2_normalize(&out)
}

/// A total per-pixel labeling of one scene.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelRaster {
    pub width: usize,
    pub height: usize,
    pub legend: BTreeMap<u32, String>,
    /// Row-major class ids, `height * width` of them.
    pub cells: Vec<u32>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RasterDoc {
    width: usize,
    height: usize,
    legend: BTreeMap<String, String>,
    rows: Vec<Vec<u32>>,
}

impl LabelRaster {
    pub fn new(
        width: usize,
        height: usize,
        legend: BTreeMap<u32, String>,
        cells: Vec<u32>,
    ) -> Result<Self> {
        let r = LabelRaster {
            width,
            height,
            legend,
            cells,
        };
        r.check()?;
        Ok(r)
    }

    pub fn check(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::Argument(format!(
                "raster is empty ({}x{})",
                self.width, self.height
            )));
        }
        if self.cells.len() != self.width * self.height {
            return Err(Error::Format(format!(
                "raster declares {}x{} but holds {} cells",
                self.width,
                self.height,
                self.cells.len()
            )));
        }
        if let Some(id) = self.cells.iter().find(|id| !self.legend.contains_key(id)) {
            return Err(Error::Format(format!(
                "class id {id} is missing from the legend"
            )));
        }
        Ok(())
    }

    pub fn read<R: Read>(source: R) -> Result<Self> {
        let doc: RasterDoc = serde_json::from_reader(source)
            .map_err(|e| Error::Format(format!("label raster: {e}")))?;
        if doc.rows.len() != doc.height {
            return Err(Error::Format(format!(
                "label raster declares height {} but has {} rows",
                doc.height,
                doc.rows.len()
            )));
        }
        if let Some((i, row)) = doc
            .rows
            .iter()
            .enumerate()
            .find(|(_, r)| r.len() != doc.width)
        {
            return Err(Error::Format(format!(
                "label raster row {i} has {} cells, expected width {}",
                row.len(),
                doc.width
            )));
        }
        let legend = doc
            .legend
            .into_iter()
            .map(|(k, v)| {
                k.parse::<u32>()
                    .map(|id| (id, v))
                    .map_err(|_| Error::Format(format!("legend key {k:?} is not a class id")))
            })
            .collect::<Result<_>>()?;
        let raster = LabelRaster {
            width: doc.width,
            height: doc.height,
            legend,
            cells: doc.rows.into_iter().flatten().collect(),
        };
        raster.check().map_err(|e| match e {
            Error::Argument(m) => Error::Format(m),
            other => other,
        })?;
        Ok(raster)
    }

    pub fn read_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read(BufReader::new(file)).map_err(|e| match e {
            Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn write<W: Write>(&self, sink: W) -> Result<()> {
        self.check()?;
        let doc = RasterDoc {
            width: self.width,
            height: self.height,
            legend: self
                .legend
                .iter()
                .map(|(k, v)| (k.to_string(), v.clone()))
                .collect(),
            rows: self.cells.chunks(self.width).map(<[u32]>::to_vec).collect(),
        };
        serde_json::to_writer(sink, &doc)
            .map_err(|e| Error::Internal(format!("serializing raster: {e}")))
    }
}

/// Per-site audio tag probabilities in some classifier's label space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelProbabilities {
    pub site_id: String,
    pub labels: BTreeMap<String, f64>,
}

impl LabelProbabilities {
    pub fn check(&self) -> Result<()> {
        if self.labels.is_empty() {
            return Err(Error::Format(format!("site {:?}: no labels", self.site_id)));
        }
        if let Some((l, p)) = self.labels.iter().find(|(_, p)| !(0.0..=1.0).contains(*p)) {
            return Err(Error::Format(format!(
                "site {:?}: probability {p} for {l:?} is outside [0, 1]",
                self.site_id
            )));
        }
        Ok(())
    }
}

pub fn read_label_probabilities<R: Read>(source: R) -> Result<Vec<LabelProbabilities>> {
    let mut out: Vec<LabelProbabilities> = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in BufReader::new(source).lines().enumerate() {
        let line = line.map_err(|e| Error::io("<label probabilities>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let lp: LabelProbabilities = serde_json::from_str(&line)
            .map_err(|e| Error::Format(format!("label probabilities line {}: {e}", i + 1)))?;
        lp.check()?;
        if !seen.insert(lp.site_id.clone()) {
            return Err(Error::Format(format!(
                "duplicate label probabilities for site {:?}",
                lp.site_id
            )));
        }
        out.push(lp);
    }
    Ok(out)
}

pub fn write_label_probabilities<W: Write>(
    records: &[LabelProbabilities],
    mut sink: W,
) -> Result<()> {
    #[derive(Serialize)]
    struct Line<'a> {
        site_id: &'a str,
        labels: BTreeMap<&'a str, Sig17>,
    }
    for r in records {
        r.check()?;
        let line = Line {
            site_id: &r.site_id,
            labels: r
                .labels
                .iter()
                .map(|(k, v)| (k.as_str(), Sig17(*v)))
                .collect(),
        };
        serde_json::to_writer(&mut sink, &line)
            .map_err(|e| Error::Internal(format!("serializing label probabilities: {e}")))?;
        sink.write_all(b"\n")
            .map_err(|e| Error::io("<label probabilities>", e))?;
    }
    Ok(())
}
