//! End-to-end run: manifest → features → pair series → correlation report.
//!
//! Feature directory layout:
//!
//! ```text
//! <features>/embeddings.jsonl            site-level embeddings (required)
//! <features>/sound_clips.jsonl           per-clip sound embeddings (optional)
//! <features>/rasters/<site>.street.json  street label raster (optional)
//! <features>/rasters/<site>.aerial.json  aerial label raster (optional)
//! <features>/label_probabilities.jsonl   audio tag probabilities (optional)
//! <features>/audio_bga.json              audio tag → BGA table (required with the above)
//! ```
//!
//! Output directory layout:
//!
//! ```text
//! <out>/report.csv, report.json
//! <out>/figures/*.csv                    report subsets, one per chart
//! <out>/pairs/<comparison>/<side>.csv    the two ALL-scope series of each comparison
//! <out>/features/*                       distributions, BGA vectors, site embeddings
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::bga::{self, audio_bga_vector, bga_vector, BgaCategory, BgaMatrix, BgaVector, BgaView};
use crate::error::{Error, Result};
use crate::feature_store::{
    aggregate_clip_embeddings, combine_views, read_embeddings, read_label_probabilities,
    write_embeddings, EmbeddingRecord, LabelRaster, Modality, StoreKind,
};
use crate::manifest::{
    filter_sites, load_manifest, validate_manifest, ExclusionFlag, Manifest, ValidateOptions,
};
use crate::numfmt::{sig17, sig6, Sig17};
use crate::seg_features::{class_distribution, ClassDistribution};
use crate::similarity::{bga_category_pair_similarity, cosine, pairwise_similarity, PairVector};
use crate::stats::{self, correlate, stratify_by_city, CorrelationResult, Scope};

pub const REPORT_COLUMNS: [&str; 7] = [
    "scope",
    "comparison_id",
    "r",
    "p_t",
    "p_perm",
    "n_sites",
    "n_pairs",
];
pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub manifest_path: PathBuf,
    pub features_dir: PathBuf,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub permutations: usize,
    pub exclude: BTreeSet<ExclusionFlag>,
    /// Empty means every city.
    pub cities: Vec<String>,
    pub strict_files: bool,
}

impl RunConfig {
    pub fn new(
        manifest_path: impl Into<PathBuf>,
        features_dir: impl Into<PathBuf>,
        out_dir: impl Into<PathBuf>,
    ) -> Self {
        RunConfig {
            manifest_path: manifest_path.into(),
            features_dir: features_dir.into(),
            out_dir: out_dir.into(),
            seed: DEFAULT_SEED,
            permutations: stats::DEFAULT_PERMUTATIONS,
            exclude: ExclusionFlag::default_policy(),
            cities: Vec::new(),
            strict_files: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.permutations < stats::MIN_PERMUTATIONS {
            return Err(Error::Argument(format!(
                "--permutations must be at least {}, got {}",
                stats::MIN_PERMUTATIONS,
                self.permutations
            )));
        }
        if !self.manifest_path.is_file() {
            return Err(Error::Argument(format!(
                "manifest {} does not exist",
                self.manifest_path.display()
            )));
        }
        if !self.features_dir.is_dir() {
            return Err(Error::Argument(format!(
                "features directory {} does not exist",
                self.features_dir.display()
            )));
        }
        Ok(())
    }
}

/// Reads input files and remembers their SHA-256 digests.
#[derive(Debug, Default)]
struct InputLog {
    digests: BTreeMap<String, String>,
}

impl InputLog {
    fn read(&mut self, path: &Path, key: String) -> Result<Vec<u8>> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        self.digests
            .insert(key, hex::encode(Sha256::digest(&bytes)));
        Ok(bytes)
    }
}

fn with_path(path: &Path, e: Error) -> Error {
    match e {
        Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
        other => other,
    }
}

/// Everything the correlation stage needs, keyed by site id.
#[derive(Debug, Default)]
pub struct FeatureSet {
    pub manifest: Manifest,
    /// Site-level embeddings; sound is aggregated from clips when a clip
    /// store exists and combined is built from street + aerial.
    pub embeddings: BTreeMap<Modality, BTreeMap<String, Vec<f64>>>,
    pub model_ids: BTreeMap<Modality, BTreeSet<String>>,
    pub distributions: BTreeMap<BgaView, BTreeMap<String, ClassDistribution>>,
    pub bga: BTreeMap<BgaView, BTreeMap<String, BgaVector>>,
    /// Audio tag probabilities projected through the user's audio table.
    pub audio_bga: Option<BTreeMap<String, BgaVector>>,
    /// Per view, class name → number of sites where it carried no BGA weight.
    pub unmapped: BTreeMap<String, BTreeMap<String, usize>>,
    pub notes: Vec<String>,
    input_digests: BTreeMap<String, String>,
    manifest_total: usize,
}

impl FeatureSet {
    pub fn site_ids(&self) -> Vec<String> {
        self.manifest
            .sites
            .iter()
            .map(|s| s.site_id.clone())
            .collect()
    }
}

/// Loads, validates and filters the manifest, then reads every feature file
/// for the remaining sites.
pub fn load_features(cfg: &RunConfig) -> Result<FeatureSet> {
    cfg.validate()?;
    let mut log = InputLog::default();
    let bytes = log.read(&cfg.manifest_path, "manifest".into())?;
    let full = load_manifest(bytes.as_slice(), cfg.manifest_path.display().to_string())?;
    let violations = validate_manifest(
        &full,
        ValidateOptions {
            strict_files: cfg.strict_files,
        },
    );
    if !violations.is_empty() {
        let lines: Vec<String> = violations.iter().map(ToString::to_string).collect();
        return Err(Error::Argument(format!(
            "manifest {} is invalid:\n  {}",
            cfg.manifest_path.display(),
            lines.join("\n  ")
        )));
    }
    let mut manifest = filter_sites(&full, &cfg.exclude);
    if !cfg.cities.is_empty() {
        for c in &cfg.cities {
            if !full.sites.iter().any(|s| &s.city == c) {
                return Err(Error::Argument(format!(
                    "city {c:?} does not appear in the manifest"
                )));
            }
        }
        manifest.sites.retain(|s| cfg.cities.contains(&s.city));
    }
    let wanted: BTreeSet<String> = manifest.sites.iter().map(|s| s.site_id.clone()).collect();

    let mut fs_ = FeatureSet {
        manifest_total: full.len(),
        ..Default::default()
    };

    // Embeddings.
    let store = cfg.features_dir.join("embeddings.jsonl");
    let bytes = log.read(&store, "embeddings.jsonl".into())?;
    let records =
        read_embeddings(bytes.as_slice(), StoreKind::Site).map_err(|e| with_path(&store, e))?;
    let mut ignored_combined = 0;
    for r in records.into_iter().filter(|r| wanted.contains(&r.site_id)) {
        if r.modality == Modality::Combined {
            ignored_combined += 1;
            continue;
        }
        fs_.model_ids
            .entry(r.modality)
            .or_default()
            .insert(r.model_id);
        fs_.embeddings
            .entry(r.modality)
            .or_default()
            .insert(r.site_id, r.vector);
    }
    if ignored_combined > 0 {
        fs_.notes.push(format!(
            "{ignored_combined} stored combined embeddings ignored; combined views are rebuilt from street and aerial"
        ));
    }

    let clips_path = cfg.features_dir.join("sound_clips.jsonl");
    if clips_path.is_file() {
        let bytes = log.read(&clips_path, "sound_clips.jsonl".into())?;
        let clips = read_embeddings(bytes.as_slice(), StoreKind::Clips)
            .map_err(|e| with_path(&clips_path, e))?;
        let mut by_site: BTreeMap<String, Vec<Vec<f64>>> = BTreeMap::new();
        for r in clips.into_iter().filter(|r| wanted.contains(&r.site_id)) {
            if r.modality != Modality::Sound {
                return Err(Error::Format(format!(
                    "{}: clip store holds a {} record for site {:?}; only sound is allowed",
                    clips_path.display(),
                    r.modality,
                    r.site_id
                )));
            }
            fs_.model_ids
                .entry(Modality::Sound)
                .or_default()
                .insert(r.model_id);
            by_site.entry(r.site_id).or_default().push(r.vector);
        }
        let sound = fs_.embeddings.entry(Modality::Sound).or_default();
        for (site, vectors) in by_site {
            if sound.contains_key(&site) {
                return Err(Error::Format(format!(
                    "site {site:?} has both a site-level sound embedding and clip embeddings"
                )));
            }
            let v = aggregate_clip_embeddings(&vectors)
                .map_err(|e| Error::Format(format!("site {site:?}: {e}")))?;
            sound.insert(site, v);
        }
    }

    // Combined view for every site holding both visual embeddings.
    let mut combined = BTreeMap::new();
    if let (Some(street), Some(aerial)) = (
        fs_.embeddings.get(&Modality::Street),
        fs_.embeddings.get(&Modality::Aerial),
    ) {
        for (site, s) in street {
            if let Some(a) = aerial.get(site) {
                let c = combine_views(s, a)
                    .map_err(|e| Error::Format(format!("site {site:?}: {e}")))?;
                combined.insert(site.clone(), c);
            }
        }
    }
    if !combined.is_empty() {
        fs_.embeddings.insert(Modality::Combined, combined);
    }

    // Segmentation rasters → distributions → BGA vectors.
    for view in [BgaView::Street, BgaView::Aerial] {
        let matrix = bga::bga_matrix_for_view(view)?;
        let mut dists = BTreeMap::new();
        let mut vectors = BTreeMap::new();
        for site in &wanted {
            let rel = format!("rasters/{site}.{view}.json");
            let path = cfg.features_dir.join(&rel);
            if !path.is_file() {
                continue;
            }
            let bytes = log.read(&path, rel)?;
            let raster = LabelRaster::read(bytes.as_slice()).map_err(|e| with_path(&path, e))?;
            let dist = class_distribution(&raster)?;
            let projection = bga_vector(&dist, &matrix)?;
            for class in projection.unmapped {
                *fs_.unmapped
                    .entry(view.to_string())
                    .or_default()
                    .entry(class)
                    .or_default() += 1;
            }
            vectors.insert(site.clone(), projection.vector);
            dists.insert(site.clone(), dist);
        }
        fs_.distributions.insert(view, dists);
        fs_.bga.insert(view, vectors);
    }

    // Optional audio tag path.
    let lp_path = cfg.features_dir.join("label_probabilities.jsonl");
    if lp_path.is_file() {
        let table_path = cfg.features_dir.join("audio_bga.json");
        if !table_path.is_file() {
            return Err(Error::Config(format!(
                "{} exists but no audio BGA table {} was supplied",
                lp_path.display(),
                table_path.display()
            )));
        }
        let bytes = log.read(&table_path, "audio_bga.json".into())?;
        let table =
            BgaMatrix::read_json(bytes.as_slice()).map_err(|e| with_path(&table_path, e))?;
        if table.view != BgaView::AudioCustom {
            return Err(Error::Config(format!(
                "{}: view must be audio_custom, got {}",
                table_path.display(),
                table.view
            )));
        }
        let bytes = log.read(&lp_path, "label_probabilities.jsonl".into())?;
        let lps = read_label_probabilities(bytes.as_slice()).map_err(|e| with_path(&lp_path, e))?;
        let mut vectors = BTreeMap::new();
        for lp in lps.iter().filter(|lp| wanted.contains(&lp.site_id)) {
            let projection = audio_bga_vector(lp, &table)?;
            for label in projection.unmapped {
                *fs_.unmapped
                    .entry(BgaView::AudioCustom.to_string())
                    .or_default()
                    .entry(label)
                    .or_default() += 1;
            }
            vectors.insert(lp.site_id.clone(), projection.vector);
        }
        fs_.audio_bga = Some(vectors);
        fs_.notes.push(
            "audio BGA vectors come from a user-supplied tag table, not a published mapping".into(),
        );
    }

    fs_.manifest = manifest;
    fs_.input_digests = log.digests;
    Ok(fs_)
}

/// What one side of a comparison measures per site pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Series {
    Embedding(Modality),
    ClassDistribution(BgaView),
    BgaCosine(BgaView),
    BgaCategory(BgaView, BgaCategory),
    AudioBga,
}

#[derive(Debug, Clone)]
struct Comparison {
    id: String,
    x: Series,
    y: Series,
}

impl Comparison {
    fn new(id: impl Into<String>, x: Series, y: Series) -> Self {
        Comparison {
            id: id.into(),
            x,
            y,
        }
    }

    /// Labels for the two sides, taken from `kind:left~right`.
    fn sides(&self) -> (&str, &str) {
        let body = self.id.split_once(':').map_or(self.id.as_str(), |(_, b)| b);
        body.split_once('~').unwrap_or((body, "reference"))
    }

    fn slug(&self) -> String {
        self.id.replace(':', "_")
    }
}

fn comparisons(with_audio_bga: bool) -> Vec<Comparison> {
    use Series::*;
    let sound = Embedding(Modality::Sound);
    let mut out = vec![
        Comparison::new("embed:street~sound", Embedding(Modality::Street), sound),
        Comparison::new("embed:aerial~sound", Embedding(Modality::Aerial), sound),
        Comparison::new("embed:combined~sound", Embedding(Modality::Combined), sound),
        Comparison::new(
            "embed:aerial~street",
            Embedding(Modality::Aerial),
            Embedding(Modality::Street),
        ),
    ];
    for view in [BgaView::Street, BgaView::Aerial] {
        out.push(Comparison::new(
            format!("seg:{view}~sound"),
            ClassDistribution(view),
            sound,
        ));
        out.push(Comparison::new(
            format!("bga:{view}~sound"),
            BgaCosine(view),
            sound,
        ));
        for cat in crate::bga::BgaCategory::ALL {
            out.push(Comparison::new(
                format!("bga-{cat}:{view}~sound"),
                BgaCategory(view, cat),
                sound,
            ));
        }
        if with_audio_bga {
            out.push(Comparison::new(
                format!("bga:{view}~audio"),
                BgaCosine(view),
                AudioBga,
            ));
        }
    }
    out
}

fn bga_as_vec(v: &BgaVector) -> Vec<f64> {
    v.to_array().to_vec()
}

impl FeatureSet {
    /// Sites that carry this series, with a reason for each site dropped
    /// despite having data.
    fn sites_for(&self, s: Series) -> (BTreeSet<String>, Vec<String>) {
        let mut dropped = Vec::new();
        let sites = match s {
            Series::Embedding(m) => self.embeddings.get(&m).map(|e| e.keys().cloned().collect()),
            Series::ClassDistribution(v) => self
                .distributions
                .get(&v)
                .map(|d| d.keys().cloned().collect()),
            Series::BgaCategory(v, _) => self.bga.get(&v).map(|b| b.keys().cloned().collect()),
            Series::BgaCosine(v) => self
                .bga
                .get(&v)
                .map(|b| nonzero(b, &format!("{v} BGA"), &mut dropped)),
            Series::AudioBga => self
                .audio_bga
                .as_ref()
                .map(|b| nonzero(b, "audio BGA", &mut dropped)),
        };
        (sites.unwrap_or_default(), dropped)
    }

    fn pair_series(&self, s: Series, sites: &BTreeSet<String>, id: &str) -> Result<PairVector> {
        let pick = |m: &BTreeMap<String, Vec<f64>>| -> BTreeMap<String, Vec<f64>> {
            sites.iter().map(|k| (k.clone(), m[k].clone())).collect()
        };
        let pick_bga = |m: &BTreeMap<String, BgaVector>| -> BTreeMap<String, BgaVector> {
            sites.iter().map(|k| (k.clone(), m[k])).collect()
        };
        match s {
            Series::Embedding(m) => pairwise_similarity(&pick(&self.embeddings[&m]), id),
            Series::ClassDistribution(v) => {
                let dists = &self.distributions[&v];
                let vocabulary: Vec<String> = dists
                    .values()
                    .flat_map(|d| d.proportions.keys().cloned())
                    .collect::<BTreeSet<_>>()
                    .into_iter()
                    .collect();
                let vectors = sites
                    .iter()
                    .map(|k| (k.clone(), dists[k].to_vector(&vocabulary)))
                    .collect();
                pairwise_similarity(&vectors, id)
            }
            Series::BgaCosine(v) => {
                let vectors = pick_bga(&self.bga[&v])
                    .iter()
                    .map(|(k, b)| (k.clone(), bga_as_vec(b)))
                    .collect();
                pairwise_similarity(&vectors, id)
            }
            Series::BgaCategory(v, cat) => {
                bga_category_pair_similarity(&pick_bga(&self.bga[&v]), cat, id)
            }
            Series::AudioBga => {
                let audio = self
                    .audio_bga
                    .as_ref()
                    .expect("audio comparisons need audio BGA vectors");
                let vectors = pick_bga(audio)
                    .iter()
                    .map(|(k, b)| (k.clone(), bga_as_vec(b)))
                    .collect();
                pairwise_similarity(&vectors, id)
            }
        }
    }
}

fn nonzero(
    m: &BTreeMap<String, BgaVector>,
    what: &str,
    dropped: &mut Vec<String>,
) -> BTreeSet<String> {
    m.iter()
        .filter_map(|(k, v)| {
            if v.to_array().iter().any(|&x| x != 0.0) {
                Some(k.clone())
            } else {
                dropped.push(format!("site {k:?} has an all-zero {what} vector"));
                None
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Skipped {
    pub scope: String,
    pub comparison_id: String,
    pub reason: String,
}

/// The two ALL-scope series behind one comparison.
#[derive(Debug, Clone)]
pub struct ComparisonSeries {
    pub comparison_id: String,
    pub x_label: String,
    pub y_label: String,
    pub dir_name: String,
    pub x: PairVector,
    pub y: PairVector,
}

#[derive(Debug, Clone)]
pub struct Report {
    pub rows: Vec<CorrelationResult>,
    pub skipped: Vec<Skipped>,
    pub notes: Vec<String>,
    pub series: Vec<ComparisonSeries>,
    pub metadata: RunMetadata,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunMetadata {
    pub tool: String,
    pub version: String,
    pub config: ConfigEcho,
    pub inputs: BTreeMap<String, String>,
    pub sites_in_manifest: usize,
    pub sites_analyzed: usize,
    pub model_ids: BTreeMap<String, Vec<String>>,
    pub unmapped_classes: BTreeMap<String, BTreeMap<String, usize>>,
    pub p_t_label: String,
    pub p_perm_label: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConfigEcho {
    pub manifest: String,
    pub features: String,
    pub seed: u64,
    pub permutations: usize,
    pub exclude: Vec<String>,
    pub cities: Vec<String>,
    pub strict_files: bool,
}

/// Pair series for every comparison that has at least two sites, plus the
/// comparisons that could not be built.
#[derive(Debug, Clone, Default)]
pub struct SeriesSet {
    pub series: Vec<ComparisonSeries>,
    pub skipped: Vec<Skipped>,
    pub notes: Vec<String>,
}

pub fn build_series(features: &FeatureSet) -> Result<SeriesSet> {
    let mut out = SeriesSet {
        notes: features.notes.clone(),
        ..Default::default()
    };
    for cmp in comparisons(features.audio_bga.is_some()) {
        let (xs, xdrop) = features.sites_for(cmp.x);
        let (ys, ydrop) = features.sites_for(cmp.y);
        for d in xdrop.into_iter().chain(ydrop) {
            out.notes.push(format!("{}: {d}; excluded", cmp.id));
        }
        let sites: BTreeSet<String> = xs.intersection(&ys).cloned().collect();
        if sites.len() < 2 {
            out.skipped.push(Skipped {
                scope: Scope::All.label().to_string(),
                comparison_id: cmp.id.clone(),
                reason: format!("only {} site(s) have both modalities", sites.len()),
            });
            continue;
        }
        let (xl, yl) = cmp.sides();
        let x = features.pair_series(cmp.x, &sites, &format!("{}#{xl}", cmp.id))?;
        let y = features.pair_series(cmp.y, &sites, &format!("{}#{yl}", cmp.id))?;
        out.series.push(ComparisonSeries {
            comparison_id: cmp.id.clone(),
            x_label: xl.to_string(),
            y_label: yl.to_string(),
            dir_name: cmp.slug(),
            x,
            y,
        });
    }
    Ok(out)
}

/// Correlates every comparison's pair series, overall and per city.
pub fn correlate_features(cfg: &RunConfig, features: &FeatureSet) -> Result<Report> {
    let SeriesSet {
        series,
        mut skipped,
        notes,
    } = build_series(features)?;
    let mut rows = Vec::new();
    for s in &series {
        let xs = stratify_by_city(&s.x, &features.manifest)?;
        let ys = stratify_by_city(&s.y, &features.manifest)?;
        for (scope, xv) in &xs {
            let yv = &ys[scope];
            if xv.len() < 3 {
                skipped.push(Skipped {
                    scope: scope.label().to_string(),
                    comparison_id: s.comparison_id.clone(),
                    reason: format!("{} pair(s); at least 3 are needed", xv.len()),
                });
                continue;
            }
            match correlate(
                &s.comparison_id,
                scope.clone(),
                xv,
                yv,
                cfg.permutations,
                cfg.seed,
            ) {
                Ok(row) => rows.push(row),
                Err(Error::DegenerateSeries(m)) => skipped.push(Skipped {
                    scope: scope.label().to_string(),
                    comparison_id: s.comparison_id.clone(),
                    reason: m,
                }),
                Err(e) => return Err(e),
            }
        }
    }

    rows.sort_by(|a, b| (&a.scope, &a.comparison_id).cmp(&(&b.scope, &b.comparison_id)));
    skipped.sort_by(|a, b| (&a.comparison_id, &a.scope).cmp(&(&b.comparison_id, &b.scope)));

    let metadata = RunMetadata {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config: ConfigEcho {
            manifest: cfg.manifest_path.display().to_string(),
            features: cfg.features_dir.display().to_string(),
            seed: cfg.seed,
            permutations: cfg.permutations,
            exclude: cfg.exclude.iter().map(|f| f.to_string()).collect(),
            cities: cfg.cities.clone(),
            strict_files: cfg.strict_files,
        },
        inputs: features.input_digests.clone(),
        sites_in_manifest: features.manifest_total,
        sites_analyzed: features.manifest.len(),
        model_ids: features
            .model_ids
            .iter()
            .map(|(m, ids)| (m.to_string(), ids.iter().cloned().collect()))
            .collect(),
        unmapped_classes: features.unmapped.clone(),
        p_t_label: "naive: t-test treating pairs as independent".into(),
        p_perm_label: "Mantel: site-label permutations".into(),
    };
    Ok(Report {
        rows,
        skipped,
        notes,
        series,
        metadata,
    })
}

/// Runs every stage and writes all outputs under `cfg.out_dir`.
pub fn run_pipeline(cfg: &RunConfig) -> Result<Report> {
    let features = load_features(cfg)?;
    write_feature_outputs(&features, &cfg.out_dir)?;
    let report = correlate_features(cfg, &features)?;
    write_pair_series(&report.series, &cfg.out_dir)?;
    emit_report(&report, &cfg.out_dir)?;
    Ok(report)
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn csv_bytes<I, R>(header: &[&str], rows: I) -> Result<Vec<u8>>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator,
    R::Item: AsRef<[u8]>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    let to_err = |e: csv::Error| Error::Internal(format!("writing CSV: {e}"));
    w.write_record(header).map_err(to_err)?;
    for r in rows {
        w.write_record(r).map_err(to_err)?;
    }
    w.into_inner()
        .map_err(|e| Error::Internal(format!("writing CSV: {e}")))
}

/// Class distributions, BGA vectors and the site-level embeddings used.
pub fn write_feature_outputs(features: &FeatureSet, out_dir: &Path) -> Result<()> {
    let dir = out_dir.join("features");
    create_dir(&dir)?;

    let mut dist_rows = Vec::new();
    for (view, dists) in &features.distributions {
        for (site, d) in dists {
            for (class, p) in &d.proportions {
                dist_rows.push(vec![
                    site.clone(),
                    view.to_string(),
                    class.clone(),
                    sig17(*p),
                ]);
            }
        }
    }
    write_file(
        &dir.join("class_distributions.csv"),
        &csv_bytes(&["site_id", "view", "class", "proportion"], dist_rows)?,
    )?;

    let mut bga_rows = Vec::new();
    for (view, vectors) in &features.bga {
        for (site, v) in vectors {
            bga_rows.push(vec![
                site.clone(),
                view.to_string(),
                sig17(v.bio),
                sig17(v.geo),
                sig17(v.anthro),
            ]);
        }
    }
    if let Some(audio) = &features.audio_bga {
        for (site, v) in audio {
            bga_rows.push(vec![
                site.clone(),
                "audio".into(),
                sig17(v.bio),
                sig17(v.geo),
                sig17(v.anthro),
            ]);
        }
    }
    write_file(
        &dir.join("bga_vectors.csv"),
        &csv_bytes(&["site_id", "view", "bio", "geo", "anthro"], bga_rows)?,
    )?;

    // Per-site cosine between the audio and visual BGA vectors.
    if let Some(audio) = &features.audio_bga {
        let mut rows = Vec::new();
        for (view, vectors) in &features.bga {
            for (site, v) in vectors {
                if let Some(a) = audio.get(site) {
                    if let Ok(c) = cosine(&bga_as_vec(a), &bga_as_vec(v)) {
                        rows.push(vec![site.clone(), view.to_string(), sig17(c)]);
                    }
                }
            }
        }
        write_file(
            &dir.join("audio_visual_bga_cosine.csv"),
            &csv_bytes(&["site_id", "view", "cosine"], rows)?,
        )?;
    }

    let mut records = Vec::new();
    for (modality, vectors) in &features.embeddings {
        let model = features
            .model_ids
            .get(modality)
            .map(|ids| ids.iter().cloned().collect::<Vec<_>>().join("+"))
            .unwrap_or_else(|| "street+aerial".into());
        for (site, v) in vectors {
            records.push(EmbeddingRecord::new(
                site.clone(),
                *modality,
                model.clone(),
                v.clone(),
            ));
        }
    }
    let mut buf = Vec::new();
    write_embeddings(&records, StoreKind::Site, &mut buf)?;
    write_file(&dir.join("site_embeddings.jsonl"), &buf)
}

/// The ALL-scope pair series of each comparison.
pub fn write_pair_series(series: &[ComparisonSeries], out_dir: &Path) -> Result<()> {
    for s in series {
        let dir = out_dir.join("pairs").join(&s.dir_name);
        create_dir(&dir)?;
        for (label, pv) in [(&s.x_label, &s.x), (&s.y_label, &s.y)] {
            let mut buf = Vec::new();
            pv.write_csv(&mut buf)?;
            write_file(&dir.join(format!("{label}.csv")), &buf)?;
        }
    }
    Ok(())
}

fn report_csv(rows: &[&CorrelationResult]) -> Result<Vec<u8>> {
    csv_bytes(
        &REPORT_COLUMNS,
        rows.iter().map(|r| {
            vec![
                r.scope.label().to_string(),
                r.comparison_id.clone(),
                sig6(r.r),
                sig6(r.p_t),
                sig6(r.p_perm),
                r.n_sites.to_string(),
                r.n_pairs.to_string(),
            ]
        }),
    )
}

#[derive(Serialize)]
struct JsonRow<'a> {
    scope: &'a str,
    comparison_id: &'a str,
    r: Sig17,
    p_t: Sig17,
    p_t_saturated: bool,
    p_perm: Sig17,
    n_sites: usize,
    n_pairs: usize,
    permutations: usize,
    seed: u64,
}

#[derive(Serialize)]
struct JsonReport<'a> {
    metadata: &'a RunMetadata,
    rows: Vec<JsonRow<'a>>,
    skipped: &'a [Skipped],
    notes: &'a [String],
}

pub fn report_json(report: &Report) -> Result<Vec<u8>> {
    let doc = JsonReport {
        metadata: &report.metadata,
        rows: report
            .rows
            .iter()
            .map(|r| JsonRow {
                scope: r.scope.label(),
                comparison_id: &r.comparison_id,
                r: Sig17(r.r),
                p_t: Sig17(r.p_t),
                p_t_saturated: r.p_t_saturated,
                p_perm: Sig17(r.p_perm),
                n_sites: r.n_sites,
                n_pairs: r.n_pairs,
                permutations: r.permutations,
                seed: r.seed,
            })
            .collect(),
        skipped: &report.skipped,
        notes: &report.notes,
    };
    let mut buf = serde_json::to_vec_pretty(&doc)
        .map_err(|e| Error::Internal(format!("serializing report: {e}")))?;
    buf.push(b'\n');
    Ok(buf)
}

/// Chart-ready subsets of the report.
fn figure_tables(report: &Report) -> Vec<(&'static str, Vec<&CorrelationResult>)> {
    let pick = |pred: &dyn Fn(&CorrelationResult) -> bool| -> Vec<&CorrelationResult> {
        report.rows.iter().filter(|r| pred(r)).collect()
    };
    let all = |r: &CorrelationResult| r.scope == Scope::All;
    let category = |r: &CorrelationResult| {
        BgaCategory::ALL
            .iter()
            .any(|c| r.comparison_id.starts_with(&format!("bga-{c}:")))
    };
    vec![
        (
            "embedding_all",
            pick(&|r| all(r) && r.comparison_id.starts_with("embed:")),
        ),
        (
            "embedding_by_city",
            pick(&|r| !all(r) && r.comparison_id.starts_with("embed:")),
        ),
        (
            "segmentation_all",
            pick(&|r| all(r) && r.comparison_id.starts_with("seg:")),
        ),
        (
            "segmentation_by_city",
            pick(&|r| !all(r) && r.comparison_id.starts_with("seg:")),
        ),
        (
            "bga_all",
            pick(&|r| all(r) && (category(r) || r.comparison_id.starts_with("bga:"))),
        ),
        (
            "bga_aerial_by_city",
            pick(&|r| !all(r) && category(r) && r.comparison_id.contains(":aerial~")),
        ),
        (
            "bga_street_by_city",
            pick(&|r| !all(r) && category(r) && r.comparison_id.contains(":street~")),
        ),
    ]
}

/// Writes `report.csv`, `report.json` and the figure tables.
pub fn emit_report(report: &Report, out_dir: &Path) -> Result<()> {
    create_dir(out_dir)?;
    let rows: Vec<&CorrelationResult> = report.rows.iter().collect();
    write_file(&out_dir.join("report.csv"), &report_csv(&rows)?)?;
    write_file(&out_dir.join("report.json"), &report_json(report)?)?;
    let fig_dir = out_dir.join("figures");
    create_dir(&fig_dir)?;
    for (name, rows) in figure_tables(report) {
        write_file(&fig_dir.join(format!("{name}.csv")), &report_csv(&rows)?)?;
    }
    Ok(())
}
