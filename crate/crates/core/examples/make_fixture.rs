//! Regenerates the synthetic golden fixture under `tests/fixtures/golden`.
//!
//! Every modality is driven by one latent vector per site. Sound and street
//! embeddings share it closely, aerial only weakly, so the street~sound
//! correlation exceeds the aerial~sound one by construction.
//!
//! ```text
//! cargo run --example make_fixture            # rewrite inputs and expected/
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use rand_xoshiro::Xoshiro256PlusPlus;

use soundscape_align::feature_store::{
    write_embeddings, write_label_probabilities, EmbeddingRecord, LabelProbabilities, LabelRaster,
    Modality, StoreKind,
};
use soundscape_align::manifest::{write_manifest, ExclusionFlag, Manifest, SiteRecord};
use soundscape_align::pipeline::{run_pipeline, RunConfig};

const DIM: usize = 32;
const RASTER_W: usize = 12;
const RASTER_H: usize = 8;

const CITIES: [(&str, char, f64, f64); 3] = [
    ("London", 'L', 51.5072, -0.1276),
    ("New York", 'N', 40.7128, -74.006),
    ("Tokyo", 'T', 35.6762, 139.6503),
];

const STREET_LEGEND: [&str; 9] = [
    "Road",
    "Sidewalk",
    "Building",
    "Vegetation",
    "Waterbody",
    "Person",
    "Car",
    "Bus",
    "Sky",
];
const AERIAL_LEGEND: [&str; 10] = [
    "Grassland",
    "Forest/Vegetation",
    "Wetlands",
    "Waterbody",
    "Bare Land",
    "Road/Sidewalk",
    "Building",
    "Vehicles",
    "Cropland",
    "Clouds",
];
const AUDIO_LABELS: [&str; 8] = [
    "Bird", "Insect", "Wind", "Water", "Traffic", "Siren", "Speech", "Music",
];
const AUDIO_TABLE: &str = r#"{
  "view": "audio_custom",
  "weights": {
    "bird": [1.0, 0.0, 0.0],
    "insect": [1.0, 0.0, 0.0],
    "wind": [0.0, 1.0, 0.0],
    "water": [0.3, 1.0, 0.0],
    "traffic": [0.0, 0.0, 1.0],
    "siren": [0.0, 0.0, 1.0],
    "speech": [0.0, 0.0, 1.0]
  }
}
"#;

fn round4(x: f64) -> f64 {
    (x * 1e4).round() / 1e4
}

fn gauss(rng: &mut Xoshiro256PlusPlus) -> f64 {
    rng.sample(StandardNormal)
}

fn noisy(base: &[f64], scale: f64, noise: f64, rng: &mut Xoshiro256PlusPlus) -> Vec<f64> {
    base.iter()
        .map(|&b| scale * b + noise * gauss(rng))
        .collect()
}

/// A total labeling whose class counts follow `softmax(logits)`.
fn raster(logits: &[f64], legend: &[&str], rng: &mut Xoshiro256PlusPlus) -> LabelRaster {
    let n = RASTER_W * RASTER_H;
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = w.iter().sum();
    let exact: Vec<f64> = w.iter().map(|x| x / total * n as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|x| x.floor() as usize).collect();
    let mut order: Vec<usize> = (0..counts.len()).collect();
    order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())));
    let short = n - counts.iter().sum::<usize>();
    for &k in order.iter().take(short) {
        counts[k] += 1;
    }
    let mut cells: Vec<u32> = counts
        .iter()
        .enumerate()
        .flat_map(|(k, &c)| std::iter::repeat_n(k as u32, c))
        .collect();
    cells.shuffle(rng);
    let legend = legend
        .iter()
        .enumerate()
        .map(|(k, s)| (k as u32, s.to_string()))
        .collect();
    LabelRaster::new(RASTER_W, RASTER_H, legend, cells).expect("valid raster")
}

fn main() {
    let root: PathBuf = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/golden");
    let features = root.join("features");
    let _ = fs::remove_dir_all(&root);
    fs::create_dir_all(features.join("rasters")).unwrap();

    let mut rng = Xoshiro256PlusPlus::seed_from_u64(20240611);
    let city_means: Vec<Vec<f64>> = CITIES
        .iter()
        .map(|_| noisy(&[0.0; DIM], 0.0, 0.7, &mut rng))
        .collect();

    let mut sites = Vec::new();
    let mut site_embeddings = Vec::new();
    let mut clip_embeddings = Vec::new();
    let mut label_probs = Vec::new();

    for (c, (city, prefix, lat, lon)) in CITIES.iter().enumerate() {
        for k in 1..=4 {
            let id = format!("{prefix}{k:02}");
            let has_aerial = id != "N04";
            let z: Vec<f64> = city_means[c].iter().map(|m| m + gauss(&mut rng)).collect();

            let sound = noisy(&z, 1.0, 0.3, &mut rng);
            let street = noisy(&z, 1.0, 0.5, &mut rng);
            let aerial = noisy(&z, 0.4, 1.0, &mut rng);

            // Two sites carry a site-level sound vector; the rest ship clips.
            if k == 1 && c < 2 {
                site_embeddings.push(EmbeddingRecord::new(
                    &id,
                    Modality::Sound,
                    "stub-sound-v1",
                    sound.clone(),
                ));
            } else {
                for _ in 0..3 {
                    let clip = noisy(&sound, 1.0, 0.2, &mut rng);
                    clip_embeddings.push(EmbeddingRecord::new(
                        &id,
                        Modality::Sound,
                        "stub-sound-v1",
                        clip,
                    ));
                }
            }
            site_embeddings.push(EmbeddingRecord::new(
                &id,
                Modality::Street,
                "stub-street-v1",
                street,
            ));

            // Street classes follow the latent; T04's photo is all sky, which
            // carries no BGA weight.
            let street_logits: Vec<f64> = if id == "T04" {
                (0..STREET_LEGEND.len())
                    .map(|i| if i == 8 { 10.0 } else { -40.0 })
                    .collect()
            } else {
                (0..STREET_LEGEND.len())
                    .map(|i| 0.8 * z[i] + 0.2 * gauss(&mut rng))
                    .collect()
            };
            let r = raster(&street_logits, &STREET_LEGEND, &mut rng);
            r.write(File::create(features.join(format!("rasters/{id}.street.json"))).unwrap())
                .unwrap();

            if has_aerial {
                site_embeddings.push(EmbeddingRecord::new(
                    &id,
                    Modality::Aerial,
                    "stub-aerial-v1",
                    aerial,
                ));
                let aerial_logits: Vec<f64> = (0..AERIAL_LEGEND.len())
                    .map(|i| 0.8 * (0.4 * z[i] + gauss(&mut rng)))
                    .collect();
                let r = raster(&aerial_logits, &AERIAL_LEGEND, &mut rng);
                r.write(File::create(features.join(format!("rasters/{id}.aerial.json"))).unwrap())
                    .unwrap();
            }

            let labels: BTreeMap<String, f64> = AUDIO_LABELS
                .iter()
                .enumerate()
                .map(|(i, l)| {
                    let p = 1.0 / (1.0 + (-(z[10 + i] + 0.3 * gauss(&mut rng))).exp());
                    (l.to_string(), (p * 1e6).round() / 1e6)
                })
                .collect();
            label_probs.push(LabelProbabilities {
                site_id: id.clone(),
                labels,
            });

            sites.push(SiteRecord {
                site_id: id.clone(),
                city: city.to_string(),
                lat: round4(lat + 0.01 * k as f64),
                lon: round4(lon - 0.01 * k as f64),
                audio_path: Some(format!("media/{id}.wav")),
                street_image_path: Some(format!("media/{id}.street.jpg")),
                aerial_image_path: has_aerial.then(|| format!("media/{id}.aerial.png")),
                flags: BTreeSet::new(),
            });
        }
    }

    // A flagged site with embeddings that the default policy drops.
    sites.push(SiteRecord {
        site_id: "L05".into(),
        city: "London".into(),
        lat: 51.55,
        lon: -0.2,
        audio_path: Some("media/L05.wav".into()),
        street_image_path: Some("media/L05.street.jpg".into()),
        aerial_image_path: None,
        flags: [ExclusionFlag::SpeechDominated, ExclusionFlag::Indoor]
            .into_iter()
            .collect(),
    });
    let v = noisy(&[0.0; DIM], 0.0, 1.0, &mut rng);
    site_embeddings.push(EmbeddingRecord::new(
        "L05",
        Modality::Sound,
        "stub-sound-v1",
        v.clone(),
    ));
    site_embeddings.push(EmbeddingRecord::new(
        "L05",
        Modality::Street,
        "stub-street-v1",
        v,
    ));

    let manifest = Manifest {
        sites,
        source_path: String::new(),
    };
    write_manifest(&manifest, File::create(root.join("manifest.csv")).unwrap()).unwrap();
    write_embeddings(
        &site_embeddings,
        StoreKind::Site,
        File::create(features.join("embeddings.jsonl")).unwrap(),
    )
    .unwrap();
    write_embeddings(
        &clip_embeddings,
        StoreKind::Clips,
        File::create(features.join("sound_clips.jsonl")).unwrap(),
    )
    .unwrap();
    write_label_probabilities(
        &label_probs,
        File::create(features.join("label_probabilities.jsonl")).unwrap(),
    )
    .unwrap();
    fs::write(features.join("audio_bga.json"), AUDIO_TABLE).unwrap();

    std::env::set_current_dir(&root).unwrap();
    let mut cfg = RunConfig::new("manifest.csv", "features", "expected");
    cfg.permutations = 999;
    let report = run_pipeline(&cfg).expect("pipeline on fresh fixture");
    println!(
        "wrote {} with {} report rows",
        root.display(),
        report.rows.len()
    );
}
