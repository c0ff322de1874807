use std::collections::BTreeSet;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use soundscape_align::audio_dsp::{
    log_mel_spectrogram, read_wav, segment_waveform, SpectrogramConfig,
};
use soundscape_align::manifest::{
    load_manifest_path, validate_manifest, ExclusionFlag, ValidateOptions,
};
use soundscape_align::pipeline::{self, RunConfig};
use soundscape_align::{stats, Error, Result};

#[derive(Parser)]
#[command(
    name = "soundscape-align",
    version,
    about = "Correlate street, aerial and sound views of urban sites"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a site manifest and list every problem found.
    Validate {
        #[arg(long)]
        manifest: PathBuf,
        /// Also require every referenced media file to exist.
        #[arg(long)]
        strict_files: bool,
    },
    /// Write log-Mel spectrograms of a WAV file as JSON, one per clip.
    Spectrogram(SpectrogramArgs),
    /// Derive class distributions, BGA vectors and site embeddings.
    Features(RunArgs),
    /// Write the pairwise similarity series of every comparison.
    Similarity(RunArgs),
    /// Correlate the similarity series and write the report.
    Correlate(RunArgs),
    /// Run features, similarity and correlate in one go.
    Pipeline(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = pipeline::DEFAULT_SEED)]
    seed: u64,
    #[arg(long, default_value_t = stats::DEFAULT_PERMUTATIONS)]
    permutations: usize,
    /// Semicolon- or comma-separated exclusion flags; "none" keeps every site.
    #[arg(
        long,
        default_value = "speech_dominated;indoor;transient_event;adverse_conditions"
    )]
    exclude: String,
    /// Restrict the run to one city; repeat for several.
    #[arg(long = "city")]
    cities: Vec<String>,
    #[arg(long)]
    strict_files: bool,
}

impl RunArgs {
    fn config(&self) -> Result<RunConfig> {
        let exclude = if self.exclude.trim() == "none" {
            BTreeSet::new()
        } else {
            ExclusionFlag::parse_list(&self.exclude.replace(',', ";")).map_err(Error::Argument)?
        };
        Ok(RunConfig {
            manifest_path: self.manifest.clone(),
            features_dir: self.features.clone(),
            out_dir: self.out.clone(),
            seed: self.seed,
            permutations: self.permutations,
            exclude,
            cities: self.cities.clone(),
            strict_files: self.strict_files,
        })
    }
}

#[derive(Args)]
struct SpectrogramArgs {
    #[arg(long)]
    input: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 16_000)]
    sample_rate: u32,
    #[arg(long, default_value_t = 400)]
    n_fft: usize,
    #[arg(long, default_value_t = 160)]
    hop: usize,
    #[arg(long, default_value_t = 128)]
    n_mels: usize,
    #[arg(long, default_value_t = 0.0)]
    fmin: f64,
    #[arg(long, default_value_t = 8_000.0)]
    fmax: f64,
    #[arg(long, default_value_t = 1e-10)]
    log_floor: f64,
    #[arg(long, default_value_t = 10.0)]
    clip_seconds: f64,
    /// Process the whole file as one spectrogram instead of clips.
    #[arg(long)]
    whole: bool,
}

fn spectrogram(args: &SpectrogramArgs) -> Result<()> {
    let cfg = SpectrogramConfig {
        sample_rate_hz: args.sample_rate,
        n_fft: args.n_fft,
        hop: args.hop,
        n_mels: args.n_mels,
        fmin_hz: args.fmin,
        fmax_hz: args.fmax,
        log_floor: args.log_floor,
    };
    cfg.validate()?;
    let wave = read_wav(&args.input)?;
    let clips = if args.whole {
        vec![wave]
    } else {
        segment_waveform(&wave, args.clip_seconds, 0.5)?
    };
    if clips.is_empty() {
        return Err(Error::Argument(format!(
            "{} is shorter than half a {}-second clip",
            args.input.display(),
            args.clip_seconds
        )));
    }
    fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    let stem = args
        .input
        .file_stem()
        .map_or_else(|| "audio".into(), |s| s.to_string_lossy().into_owned());
    for (i, clip) in clips.iter().enumerate() {
        let s = log_mel_spectrogram(clip, &cfg)?;
        let path = args.out.join(format!("{stem}.clip{i:03}.json"));
        let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        s.write_json(BufWriter::new(file))?;
        println!(
            "{}: {} mel x {} frames",
            path.display(),
            s.n_mels,
            s.n_frames
        );
    }
    Ok(())
}

fn validate(manifest: &Path, strict_files: bool) -> Result<()> {
    let m = load_manifest_path(manifest)?;
    let violations = validate_manifest(&m, ValidateOptions { strict_files });
    if violations.is_empty() {
        println!("{}: {} sites, OK", manifest.display(), m.len());
        return Ok(());
    }
    for v in &violations {
        eprintln!("{v}");
    }
    Err(Error::Argument(format!(
        "{}: {} problem(s)",
        manifest.display(),
        violations.len()
    )))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Validate {
            manifest,
            strict_files,
        } => validate(&manifest, strict_files),
        Command::Spectrogram(args) => spectrogram(&args),
        Command::Features(args) => {
            let cfg = args.config()?;
            let features = pipeline::load_features(&cfg)?;
            pipeline::write_feature_outputs(&features, &cfg.out_dir)
        }
        Command::Similarity(args) => {
            let cfg = args.config()?;
            let features = pipeline::load_features(&cfg)?;
            let set = pipeline::build_series(&features)?;
            for s in &set.skipped {
                eprintln!("skipped {}: {}", s.comparison_id, s.reason);
            }
            pipeline::write_pair_series(&set.series, &cfg.out_dir)
        }
        Command::Correlate(args) => {
            let cfg = args.config()?;
            let features = pipeline::load_features(&cfg)?;
            let report = pipeline::correlate_features(&cfg, &features)?;
            pipeline::emit_report(&report, &cfg.out_dir)
        }
        Command::Pipeline(args) => {
            let cfg = args.config()?;
            let report = pipeline::run_pipeline(&cfg)?;
            println!(
                "{} rows, {} skipped; report in {}",
                report.rows.len(),
                report.skipped.len(),
                cfg.out_dir.join("report.csv").display()
            );
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
