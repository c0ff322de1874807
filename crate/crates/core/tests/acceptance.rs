//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails. Every reference value here is computed by code in
//! this file, independently of the library.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments)]

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;

use soundscape_align::audio_dsp::{log_mel_spectrogram, SpectrogramConfig, Waveform};
use soundscape_align::bga::{bga_matrix_for_view, BgaView};
use soundscape_align::feature_store::combine_views;
use soundscape_align::manifest::{Manifest, SiteRecord};
use soundscape_align::pipeline::{run_pipeline, RunConfig};
use soundscape_align::similarity::{pairwise_similarity, PairIndex, PairVector};
use soundscape_align::stats::{
    mantel_permutation_test, p_value_t, pearson_r, stratify_by_city, Scope,
};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome, Duration);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn gauss(rng: &mut StdRng) -> f64 {
    rng.sample(StandardNormal)
}

// Table 1, transcribed row by row. "–" is 0.0.
const AERIAL: [(&str, [f64; 3]); 9] = [
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
const STREET: [(&str, [f64; 3]); 7] = [
    ("Road", [0.0, 0.0, 1.0]),
    ("Sidewalk", [0.3, 0.0, 1.0]),
    ("Building", [0.3, 0.0, 1.0]),
    ("Vegetation", [1.0, 0.3, 0.0]),
    ("Waterbody", [1.0, 1.0, 0.0]),
    ("Person", [0.0, 0.0, 1.0]),
    ("Car, Truck, Bus, etc", [0.0, 0.0, 1.0]),
];

fn table_fidelity() -> Outcome {
    let mut checked = 0;
    for (view, table) in [
        (BgaView::Aerial, &AERIAL[..]),
        (BgaView::Street, &STREET[..]),
    ] {
        let m = bga_matrix_for_view(view).map_err(|e| e.to_string())?;
        ensure!(
            m.len() == table.len(),
            "{view}: {} rows, expected {}",
            m.len(),
            table.len()
        );
        for (class, want) in table {
            let got = m
                .lookup(class)
                .ok_or_else(|| format!("{view}: class {class:?} missing"))?;
            for k in 0..3 {
                ensure!(
                    got[k] == want[k],
                    "{view} {class:?}[{k}] = {} != {}",
                    got[k],
                    want[k]
                );
                checked += 1;
            }
        }
    }
    ensure!(checked == 48, "checked {checked} constants");
    Ok("48/48 constants exact".into())
}

// ---- DSP oracle -------------------------------------------------------------

fn htk_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn htk_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Mel energies of one frame by an O(n²) DFT and a directly summed filter.
fn reference_mel_energies(
    frame: &[f64],
    cfg: &SpectrogramConfig,
    cos: &[f64],
    sin: &[f64],
) -> Vec<f64> {
    let n = frame.len();
    let windowed: Vec<f64> = frame
        .iter()
        .enumerate()
        .map(|(i, x)| x * (0.5 - 0.5 * (TAU * i as f64 / n as f64).cos()))
        .collect();
    let power: Vec<f64> = (0..=n / 2)
        .map(|k| {
            let (mut re, mut im) = (0.0, 0.0);
            for (i, x) in windowed.iter().enumerate() {
                let idx = (k * i) % n;
                re += x * cos[idx];
                im -= x * sin[idx];
            }
            re * re + im * im
        })
        .collect();
    let lo = htk_mel(cfg.fmin_hz);
    let hi = htk_mel(cfg.fmax_hz);
    (0..cfg.n_mels)
        .map(|m| {
            let edge = |j: usize| htk_hz(lo + (hi - lo) * j as f64 / (cfg.n_mels + 1) as f64);
            let (a, b, c) = (edge(m), edge(m + 1), edge(m + 2));
            power
                .iter()
                .enumerate()
                .map(|(k, p)| {
                    let f = k as f64 * cfg.sample_rate_hz as f64 / n as f64;
                    let w = if f > a && f <= b {
                        (f - a) / (b - a)
                    } else if f > b && f < c {
                        (c - f) / (c - b)
                    } else {
                        0.0
                    };
                    w * p
                })
                .sum()
        })
        .collect()
}

fn dsp_oracle() -> Outcome {
    let mut rng = StdRng::seed_from_u64(7001);
    let mut worst: f64 = 0.0;
    let mut entries = 0usize;
    for case in 0..20 {
        let sr = [8000u32, 16000, 22050, 44100][rng.random_range(0..4)];
        let n_fft = rng.random_range(16..=1024usize);
        let hop = rng.random_range(1..=n_fft);
        let nyquist = sr as f64 / 2.0;
        let fmin = rng.random_range(0.0..nyquist / 8.0);
        let fmax = rng.random_range(nyquist / 2.0..=nyquist);
        let cfg = SpectrogramConfig {
            sample_rate_hz: sr,
            n_fft,
            hop,
            n_mels: rng.random_range(2..=64),
            fmin_hz: fmin,
            fmax_hz: fmax,
            log_floor: 1e-10,
        };
        let frames = rng.random_range(1..=5);
        let len = n_fft + hop * (frames - 1) + rng.random_range(0..hop);
        let tones: Vec<(f64, f64, f64)> = (0..3)
            .map(|_| {
                (
                    rng.random_range(0.05..1.0),
                    rng.random_range(0.0..nyquist),
                    rng.random_range(0.0..TAU),
                )
            })
            .collect();
        let samples: Vec<f64> = (0..len)
            .map(|i| {
                let t = i as f64 / sr as f64;
                let s: f64 = tones
                    .iter()
                    .map(|(a, f, ph)| a * (TAU * f * t + ph).sin())
                    .sum();
                s + 0.1 * gauss(&mut rng)
            })
            .collect();
        let got = log_mel_spectrogram(&Waveform::new(samples.clone(), sr).unwrap(), &cfg)
            .map_err(|e| format!("case {case}: {e}"))?;
        ensure!(
            got.n_frames == 1 + (len - n_fft) / hop,
            "case {case}: {} frames, expected {}",
            got.n_frames,
            1 + (len - n_fft) / hop
        );
        let cos: Vec<f64> = (0..n_fft)
            .map(|i| (TAU * i as f64 / n_fft as f64).cos())
            .collect();
        let sin: Vec<f64> = (0..n_fft)
            .map(|i| (TAU * i as f64 / n_fft as f64).sin())
            .collect();
        for t in 0..got.n_frames {
            let e = reference_mel_energies(&samples[t * hop..t * hop + n_fft], &cfg, &cos, &sin);
            for (m, &e) in e.iter().enumerate() {
                // Relative error of the Mel energy, floor applied to both.
                let want = e.max(cfg.log_floor);
                let rel = (got.get(m, t).exp() / want - 1.0).abs();
                worst = worst.max(rel);
                entries += 1;
            }
        }
    }
    ensure!(worst <= 1e-6, "max relative error {worst:e} > 1e-6");
    Ok(format!("{entries} entries, max relative error {worst:.2e}"))
}

fn scaling_identity() -> Outcome {
    let mut rng = StdRng::seed_from_u64(7002);
    let cfg = SpectrogramConfig::default();
    let x: Vec<f64> = (0..16_000).map(|_| 0.05 * gauss(&mut rng)).collect();
    let base = log_mel_spectrogram(&Waveform::new(x.clone(), 16_000).unwrap(), &cfg)
        .map_err(|e| e.to_string())?;
    let floor = cfg.log_floor.ln();
    let mut worst: f64 = 0.0;
    let mut entries = 0;
    for alpha in [2.0f64, 10.0] {
        let scaled: Vec<f64> = x.iter().map(|v| alpha * v).collect();
        let s = log_mel_spectrogram(&Waveform::new(scaled, 16_000).unwrap(), &cfg)
            .map_err(|e| e.to_string())?;
        for (a, b) in s.values.iter().zip(&base.values) {
            if *b > floor {
                worst = worst.max((a - b - 2.0 * alpha.ln()).abs());
                entries += 1;
            }
        }
    }
    ensure!(entries > 0, "no entries above the floor");
    ensure!(worst <= 1e-9, "max deviation {worst:e} > 1e-9");
    Ok(format!("{entries} entries, max deviation {worst:.2e}"))
}

fn unit(rng: &mut StdRng, dim: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..dim).map(|_| gauss(rng)).collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

fn combined_identity() -> Outcome {
    let mut rng = StdRng::seed_from_u64(7003);
    let mut worst: f64 = 0.0;
    for trial in 0..100 {
        let dim = rng.random_range(2..=64);
        let (si, sj, ai, aj) = (
            unit(&mut rng, dim),
            unit(&mut rng, dim),
            unit(&mut rng, dim),
            unit(&mut rng, dim),
        );
        let map = |a: &[f64], b: &[f64]| {
            BTreeMap::from([("i".to_string(), a.to_vec()), ("j".to_string(), b.to_vec())])
        };
        let ci = combine_views(&si, &ai).map_err(|e| e.to_string())?;
        let cj = combine_views(&sj, &aj).map_err(|e| e.to_string())?;
        let pc = pairwise_similarity(&map(&ci, &cj), "c").map_err(|e| e.to_string())?;
        let ps = pairwise_similarity(&map(&si, &sj), "s").map_err(|e| e.to_string())?;
        let pa = pairwise_similarity(&map(&ai, &aj), "a").map_err(|e| e.to_string())?;
        let dev = (pc.values[0] - 0.5 * (ps.values[0] + pa.values[0])).abs();
        ensure!(dev <= 1e-9, "trial {trial}: deviation {dev:e}");
        worst = worst.max(dev);
    }
    Ok(format!("100 pairs, max deviation {worst:.2e}"))
}

// ---- statistics oracles -----------------------------------------------------

fn series(values: Vec<f64>, sites: usize) -> PairVector {
    let ids: Vec<String> = (0..sites).map(|i| format!("s{i:02}")).collect();
    PairVector::new(PairIndex::complete(ids), values, "x").unwrap()
}

fn pearson_closed_form() -> Outcome {
    let mut rng = StdRng::seed_from_u64(7004);
    let mut worst: f64 = 0.0;
    for trial in 0..50 {
        let sites = rng.random_range(3..=20);
        let n = sites * (sites - 1) / 2;
        let (sx, sy) = (rng.random_range(0.1..3.0), rng.random_range(0.1..3.0));
        let xs: Vec<f64> = (0..n).map(|_| sx * gauss(&mut rng) + 0.5).collect();
        let ys: Vec<f64> = xs
            .iter()
            .map(|x| 0.4 * x + sy * gauss(&mut rng) - 0.2)
            .collect();
        let nf = n as f64;
        let (sum_x, sum_y) = (xs.iter().sum::<f64>(), ys.iter().sum::<f64>());
        let sum_xy: f64 = xs.iter().zip(&ys).map(|(a, b)| a * b).sum();
        let sum_xx: f64 = xs.iter().map(|a| a * a).sum();
        let sum_yy: f64 = ys.iter().map(|b| b * b).sum();
        let want = (nf * sum_xy - sum_x * sum_y)
            / ((nf * sum_xx - sum_x * sum_x) * (nf * sum_yy - sum_y * sum_y)).sqrt();
        let got = pearson_r(&series(xs, sites), &series(ys, sites)).map_err(|e| e.to_string())?;
        let dev = (got - want).abs();
        ensure!(dev <= 1e-12, "trial {trial}: |{got} - {want}| = {dev:e}");
        worst = worst.max(dev);
    }
    Ok(format!("50 series, max deviation {worst:.2e}"))
}

fn simpson(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
        + simpson(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
}

fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, rel: f64) -> f64 {
    let (fa, fm, fb) = (f(a), f(0.5 * (a + b)), f(b));
    let rough = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    // A coarse pass sets the absolute tolerance for the refined one.
    let coarse = simpson(
        f,
        a,
        b,
        fa,
        fm,
        fb,
        rough,
        (rough.abs() * 1e-3).max(1e-300),
        20,
    );
    simpson(
        f,
        a,
        b,
        fa,
        fm,
        fb,
        rough,
        (coarse.abs() * rel).max(1e-300),
        50,
    )
}

/// Two-sided Student-t tail. With `t = √ν·tan θ` the density becomes
/// `∝ cos^(ν−1) θ` on `(−π/2, π/2)`, normalized here by integration.
fn t_tail_quadrature(t: f64, nu: f64) -> f64 {
    let kernel = |th: f64| th.cos().powf(nu - 1.0);
    let theta0 = (t.abs() / nu.sqrt()).atan();
    let total = integrate(&kernel, 0.0, FRAC_PI_2, 1e-12);
    let tail = integrate(&kernel, theta0, FRAC_PI_2, 1e-12);
    tail / total
}

fn p_value_quadrature() -> Outcome {
    let mut rng = StdRng::seed_from_u64(7005);
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    while cases < 60 {
        let n = rng.random_range(3..=300usize);
        let r: f64 = rng.random_range(-0.95..0.95);
        let got = p_value_t(r, n).map_err(|e| e.to_string())?;
        let nu = (n - 2) as f64;
        let t = r * (nu / (1.0 - r * r)).sqrt();
        let want = t_tail_quadrature(t, nu);
        if want < 1e-250 {
            continue;
        }
        let rel = (got.value / want - 1.0).abs();
        ensure!(
            rel <= 1e-6,
            "r={r} n={n}: p={} oracle={want} rel={rel:e}",
            got.value
        );
        worst = worst.max(rel);
        cases += 1;
    }
    // Exact case: one degree of freedom gives p = 1 − 2θ/π.
    for r in [0.1, 0.5, 0.9] {
        let want = 1.0 - 2.0 * (r / (1.0f64 - r * r).sqrt()).atan() / PI;
        let got = p_value_t(r, 3).unwrap().value;
        ensure!(
            (got / want - 1.0).abs() <= 1e-12,
            "df=1 r={r}: {got} vs {want}"
        );
    }
    Ok(format!("{cases} cases, max relative error {worst:.2e}"))
}

/// Asymptotic Kolmogorov p-value with Stephens' small-sample correction.
fn ks_uniform_p(mut sample: Vec<f64>) -> (f64, f64) {
    sample.sort_by(f64::total_cmp);
    let n = sample.len() as f64;
    let d = sample
        .iter()
        .enumerate()
        .map(|(i, &p)| ((i + 1) as f64 / n - p).max(p - i as f64 / n))
        .fold(0.0, f64::max);
    let lambda = (n.sqrt() + 0.12 + 0.11 / n.sqrt()) * d;
    let q: f64 = (1..=100)
        .map(|k| {
            let k = k as f64;
            let sign = if k as u64 % 2 == 1 { 1.0 } else { -1.0 };
            2.0 * sign * (-2.0 * k * k * lambda * lambda).exp()
        })
        .sum();
    (d, q.clamp(0.0, 1.0))
}

fn random_similarity(rng: &mut StdRng, sites: usize) -> PairVector {
    let items: BTreeMap<String, Vec<f64>> = (0..sites)
        .map(|i| (format!("s{i:02}"), (0..5).map(|_| gauss(rng)).collect()))
        .collect();
    pairwise_similarity(&items, "x").unwrap()
}

fn mantel_uniformity() -> Outcome {
    let mut rng = StdRng::seed_from_u64(7006);
    let mut ps = Vec::with_capacity(200);
    for trial in 0..200u64 {
        let x = random_similarity(&mut rng, 20);
        let y = random_similarity(&mut rng, 20);
        let m = mantel_permutation_test(&x, &y, 999, trial).map_err(|e| e.to_string())?;
        ensure!(
            m.p >= 1.0 / 1000.0 && m.p <= 1.0,
            "p = {} out of range",
            m.p
        );
        ps.push(m.p);
    }
    let (d, q) = ks_uniform_p(ps);
    ensure!(q > 0.01, "KS D = {d:.4}, p = {q:.4} <= 0.01");
    Ok(format!("200 trials, KS D = {d:.4}, p = {q:.3}"))
}

fn statistics_oracles() -> Outcome {
    let a = pearson_closed_form()?;
    let b = p_value_quadrature()?;
    let c = mantel_uniformity()?;
    Ok(format!("pearson: {a}; p_t: {b}; mantel: {c}"))
}

// ---- pair enumeration -------------------------------------------------------

fn pair_enumeration() -> Outcome {
    let mut rng = StdRng::seed_from_u64(7007);
    let mut checked = 0;
    for n in 2..=6usize {
        for _ in 0..40 {
            let mut ids: Vec<String> = Vec::new();
            while ids.len() < n {
                let id = format!("site-{}", rng.random_range(0..50));
                if !ids.contains(&id) {
                    ids.push(id);
                }
            }
            let cities: Vec<String> = ids
                .iter()
                .map(|_| ["Oslo", "Lima", "Pune"][rng.random_range(0..3)].to_string())
                .collect();
            let vectors: Vec<Vec<f64>> = ids
                .iter()
                .map(|_| (0..3).map(|_| gauss(&mut rng)).collect())
                .collect();

            // Oracle: every unordered pair, smaller id first, in id order.
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| ids[a].cmp(&ids[b]));
            let mut want = Vec::new();
            for (p, &i) in order.iter().enumerate() {
                for &j in &order[p + 1..] {
                    let (u, v) = (&vectors[i], &vectors[j]);
                    let dot =
                        |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
                    let c = (dot(u, v) / (dot(u, u).sqrt() * dot(v, v).sqrt())).clamp(-1.0, 1.0);
                    want.push((i, j, c));
                }
            }
            let items: BTreeMap<String, Vec<f64>> =
                ids.iter().cloned().zip(vectors.iter().cloned()).collect();
            let got = pairwise_similarity(&items, "x").map_err(|e| e.to_string())?;
            ensure!(got.len() == n * (n - 1) / 2, "n={n}: {} pairs", got.len());
            for (((a, b), v), &(i, j, c)) in got.iter().zip(&want) {
                ensure!(
                    a == &ids[i] && b == &ids[j] && v == c,
                    "n={n}: ({a},{b},{v}) != ({},{},{c})",
                    ids[i],
                    ids[j]
                );
            }

            let manifest = Manifest {
                sites: ids
                    .iter()
                    .zip(&cities)
                    .map(|(id, city)| SiteRecord {
                        site_id: id.clone(),
                        city: city.clone(),
                        lat: 0.0,
                        lon: 0.0,
                        audio_path: Some("a.wav".into()),
                        street_image_path: None,
                        aerial_image_path: None,
                        flags: BTreeSet::new(),
                    })
                    .collect(),
                source_path: String::new(),
            };
            let strata = stratify_by_city(&got, &manifest).map_err(|e| e.to_string())?;
            let city_set: BTreeSet<&String> = cities.iter().collect();
            ensure!(
                strata.len() == 1 + city_set.len(),
                "n={n}: {} strata",
                strata.len()
            );
            ensure!(strata[&Scope::All] == got, "ALL stratum differs");
            for city in city_set {
                let expect: Vec<(&String, &String, f64)> = want
                    .iter()
                    .filter(|(i, j, _)| &cities[*i] == city && &cities[*j] == city)
                    .map(|(i, j, c)| (&ids[*i], &ids[*j], *c))
                    .collect();
                let s = &strata[&Scope::City(city.clone())];
                let have: Vec<(&String, &String, f64)> =
                    s.iter().map(|((a, b), v)| (a, b, v)).collect();
                ensure!(have == expect, "n={n} city {city}: {have:?} != {expect:?}");
            }
            checked += 1;
        }
    }
    Ok(format!("{checked} site sets, n = 2..6"))
}

// ---- golden fixture ---------------------------------------------------------

fn files_under(root: &Path) -> BTreeSet<PathBuf> {
    fn walk(dir: &Path, root: &Path, out: &mut BTreeSet<PathBuf>) {
        for entry in fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(&path, root, out);
            } else {
                out.insert(path.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    let mut out = BTreeSet::new();
    walk(root, root, &mut out);
    out
}

fn report_r(csv_text: &str, id: &str) -> Option<f64> {
    csv_text
        .lines()
        .find(|l| l.starts_with(&format!("ALL,{id},")))
        .and_then(|l| l.split(',').nth(2))
        .and_then(|v| v.parse().ok())
}

fn golden_fixture() -> Outcome {
    let fixture = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/golden");
    let expected = fixture.join("expected");
    let out = tempfile::tempdir().map_err(|e| e.to_string())?;
    let previous = std::env::current_dir().unwrap();
    std::env::set_current_dir(&fixture).unwrap();
    let mut cfg = RunConfig::new("manifest.csv", "features", out.path());
    cfg.seed = 42;
    cfg.permutations = 999;
    let run = run_pipeline(&cfg);
    std::env::set_current_dir(previous).unwrap();
    run.map_err(|e| e.to_string())?;

    let want = files_under(&expected);
    let got = files_under(out.path());
    ensure!(
        want == got,
        "file sets differ: {:?}",
        want.symmetric_difference(&got).collect::<Vec<_>>()
    );
    for rel in &want {
        let a = fs::read(expected.join(rel)).unwrap();
        let b = fs::read(out.path().join(rel)).unwrap();
        ensure!(a == b, "{} differs from the golden copy", rel.display());
    }
    let report = fs::read_to_string(expected.join("report.csv")).unwrap();
    let street = report_r(&report, "embed:street~sound").ok_or("no street~sound row")?;
    let aerial = report_r(&report, "embed:aerial~sound").ok_or("no aerial~sound row")?;
    ensure!(street > aerial, "street r {street} <= aerial r {aerial}");
    Ok(format!(
        "{} files byte-identical; street r {street} > aerial r {aerial}",
        want.len()
    ))
}

fn main() {
    let criteria: [Criterion; 7] = [
        ("bga table fidelity", table_fidelity, Duration::from_secs(1)),
        ("dsp oracle", dsp_oracle, Duration::from_secs(30)),
        (
            "log-mel scaling identity",
            scaling_identity,
            Duration::from_secs(30),
        ),
        (
            "combined-view identity",
            combined_identity,
            Duration::from_secs(30),
        ),
        (
            "statistics oracles",
            statistics_oracles,
            Duration::from_secs(120),
        ),
        (
            "brute-force pair equivalence",
            pair_enumeration,
            Duration::from_secs(30),
        ),
        ("golden fixture", golden_fixture, Duration::from_secs(60)),
    ];
    let mut failed = 0;
    for (name, check, limit) in criteria {
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            Err(format!(
                "panicked: {:?}",
                e.downcast_ref::<String>()
                    .map(String::as_str)
                    .or(e.downcast_ref::<&str>().copied())
            ))
        });
        let elapsed = start.elapsed();
        let outcome = match outcome {
            Ok(_) if elapsed > limit => Err(format!("took {elapsed:.1?}, limit {limit:?}")),
            other => other,
        };
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail} ({elapsed:.2?})"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name}: {why} ({elapsed:.2?})");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}
