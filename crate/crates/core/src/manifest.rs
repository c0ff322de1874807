//! Site manifest: the CSV table that ties every recording and image to a
//! site and a coordinate, plus the curation flags used to exclude sites.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};

pub const MANIFEST_HEADER: [&str; 8] = [
    "site_id",
    "city",
    "lat",
    "lon",
    "audio_path",
    "street_image_path",
    "aerial_image_path",
    "flags",
];

/// Curation flags. The set is closed; unknown names fail to parse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ExclusionFlag {
    SpeechDominated,
    Indoor,
    TransientEvent,
    AdverseConditions,
}

impl ExclusionFlag {
    pub const ALL: [ExclusionFlag; 4] = [
        ExclusionFlag::SpeechDominated,
        ExclusionFlag::Indoor,
        ExclusionFlag::TransientEvent,
        ExclusionFlag::AdverseConditions,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ExclusionFlag::SpeechDominated => "speech_dominated",
            ExclusionFlag::Indoor => "indoor",
            ExclusionFlag::TransientEvent => "transient_event",
            ExclusionFlag::AdverseConditions => "adverse_conditions",
        }
    }

    /// The curation policy applied when none is given: every flag excludes.
    pub fn default_policy() -> BTreeSet<ExclusionFlag> {
        Self::ALL.into_iter().collect()
    }

    /// Parses a semicolon-separated flag list; blank input is the empty set.
    pub fn parse_list(text: &str) -> std::result::Result<BTreeSet<ExclusionFlag>, String> {
        text.split(';')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.parse())
            .collect()
    }

    pub fn format_list(flags: &BTreeSet<ExclusionFlag>) -> String {
        flags
            .iter()
            .map(|f| f.as_str())
            .collect::<Vec<_>>()
            .join(";")
    }
}

impl fmt::Display for ExclusionFlag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExclusionFlag {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| format!("unknown exclusion flag {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SiteRecord {
    pub site_id: String,
    pub city: String,
    pub lat: f64,
    pub lon: f64,
    pub audio_path: Option<String>,
    pub street_image_path: Option<String>,
    pub aerial_image_path: Option<String>,
    pub flags: BTreeSet<ExclusionFlag>,
}

impl SiteRecord {
    fn modality_paths(&self) -> impl Iterator<Item = (&'static str, &str)> {
        [
            ("audio_path", self.audio_path.as_deref()),
            ("street_image_path", self.street_image_path.as_deref()),
            ("aerial_image_path", self.aerial_image_path.as_deref()),
        ]
        .into_iter()
        .filter_map(|(name, p)| p.map(|p| (name, p)))
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Manifest {
    pub sites: Vec<SiteRecord>,
    pub source_path: String,
}

impl Manifest {
    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn get(&self, site_id: &str) -> Option<&SiteRecord> {
        self.sites.iter().find(|s| s.site_id == site_id)
    }

    /// Site id → city lookup table.
    pub fn city_map(&self) -> HashMap<&str, &str> {
        self.sites
            .iter()
            .map(|s| (s.site_id.as_str(), s.city.as_str()))
            .collect()
    }

    /// Distinct cities in first-seen order.
    pub fn cities(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for s in &self.sites {
            if !out.contains(&s.city) {
                out.push(s.city.clone());
            }
        }
        out
    }
}

/// Reads a manifest from a file on disk.
pub fn load_manifest_path(path: impl AsRef<Path>) -> Result<Manifest> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    load_manifest(file, path.display().to_string())
}

/// Parses a manifest from a CSV byte stream. The header must match
/// [`MANIFEST_HEADER`] exactly; data rows keep their input order.
pub fn load_manifest<R: Read>(source: R, source_path: impl Into<String>) -> Result<Manifest> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::Fields)
        .from_reader(source);

    let header = reader.headers().map_err(|e| Error::Manifest {
        row: 1,
        message: format!("malformed header: {e}"),
    })?;
    for expected in MANIFEST_HEADER {
        if !header.iter().any(|h| h == expected) {
            return Err(Error::Manifest {
                row: 1,
                message: format!("missing required column {expected:?}"),
            });
        }
    }
    if header.len() != MANIFEST_HEADER.len() || header.iter().ne(MANIFEST_HEADER) {
        return Err(Error::Manifest {
            row: 1,
            message: format!("header must be exactly `{}`", MANIFEST_HEADER.join(",")),
        });
    }

    let mut sites = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 2;
        let record = record.map_err(|e| Error::Manifest {
            row,
            message: format!("malformed CSV: {e}"),
        })?;
        sites.push(parse_row(&record, row)?);
    }
    Ok(Manifest {
        sites,
        source_path: source_path.into(),
    })
}

fn parse_row(record: &csv::StringRecord, row: usize) -> Result<SiteRecord> {
    let field = |i: usize| record.get(i).unwrap_or("");
    let err = |message: String| Error::Manifest { row, message };
    let coord = |i: usize, name: &str| -> Result<f64> {
        let text = field(i);
        text.parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| err(format!("unparseable {name} {text:?}")))
    };
    let optional = |i: usize| {
        let v = field(i);
        (!v.is_empty()).then(|| v.to_string())
    };

    let lat = coord(2, "latitude")?;
    if !(-90.0..=90.0).contains(&lat) {
        return Err(err("latitude out of range".into()));
    }
    let lon = coord(3, "longitude")?;
    if !(-180.0..=180.0).contains(&lon) {
        return Err(err("longitude out of range".into()));
    }
    let flags = ExclusionFlag::parse_list(field(7)).map_err(err)?;

    Ok(SiteRecord {
        site_id: field(0).to_string(),
        city: field(1).to_string(),
        lat,
        lon,
        audio_path: optional(4),
        street_image_path: optional(5),
        aerial_image_path: optional(6),
        flags,
    })
}

/// Writes the manifest back out in the same CSV layout `load_manifest` reads.
pub fn write_manifest<W: Write>(m: &Manifest, sink: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    let to_err = |e: csv::Error| Error::Format(format!("writing manifest: {e}"));
    w.write_record(MANIFEST_HEADER).map_err(to_err)?;
    for s in &m.sites {
        // `{:?}` on f64 is the shortest round-tripping representation.
        w.write_record([
            s.site_id.as_str(),
            s.city.as_str(),
            &format!("{:?}", s.lat),
            &format!("{:?}", s.lon),
            s.audio_path.as_deref().unwrap_or(""),
            s.street_image_path.as_deref().unwrap_or(""),
            s.aerial_image_path.as_deref().unwrap_or(""),
            &ExclusionFlag::format_list(&s.flags),
        ])
        .map_err(to_err)?;
    }
    w.flush().map_err(|e| Error::io(&m.source_path, e))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub site_id: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "site {:?}: {}", self.site_id, self.message)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ValidateOptions {
    /// Require every referenced modality file to exist.
    pub strict_files: bool,
}

/// Checks every site invariant and returns the violations found.
///
/// Relative paths are resolved against the manifest's directory when
/// `strict_files` is on.
pub fn validate_manifest(m: &Manifest, opts: ValidateOptions) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut seen: HashMap<&str, usize> = HashMap::new();
    let base: PathBuf = Path::new(&m.source_path)
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_default();

    for s in &m.sites {
        let mut push = |message: String| {
            out.push(Violation {
                site_id: s.site_id.clone(),
                message,
            })
        };
        if s.site_id.is_empty() {
            push("empty site_id".into());
        }
        let count = seen.entry(s.site_id.as_str()).or_default();
        *count += 1;
        if *count == 2 {
            push(format!("duplicate site_id {:?}", s.site_id));
        }
        if s.city == crate::stats::ALL_SCOPE {
            push(format!("city name {:?} is reserved", s.city));
        }
        if !(-90.0..=90.0).contains(&s.lat) {
            push(format!("latitude {} out of range", s.lat));
        }
        if !(-180.0..=180.0).contains(&s.lon) {
            push(format!("longitude {} out of range", s.lon));
        }
        if s.modality_paths().next().is_none() {
            push("no modality path present".into());
        }
        if opts.strict_files {
            for (name, p) in s.modality_paths() {
                let full = base.join(p);
                if !full.is_file() {
                    push(format!("{name} {} does not exist", full.display()));
                }
            }
        }
    }
    out
}

/// Keeps the sites whose flags are disjoint from `policy`, in input order.
pub fn filter_sites(m: &Manifest, policy: &BTreeSet<ExclusionFlag>) -> Manifest {
    Manifest {
        sites: m
            .sites
            .iter()
            .filter(|s| s.flags.is_disjoint(policy))
            .cloned()
            .collect(),
        source_path: m.source_path.clone(),
    }
}
