//! Waveform handling and the log-Mel front end.
//!
//! The spectrogram is `S = ln(max(M · |STFT(x)|², floor))` with a periodic
//! Hann window, no centering or padding, a power spectrum, and triangular
//! HTK-scale Mel filters. Frames are `1 + (T - n_fft) / hop`.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::numfmt::Sig17;

#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate_hz: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate_hz: u32) -> Result<Self> {
        let w = Waveform {
            samples,
            sample_rate_hz,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples.is_empty() {
            return Err(Error::Argument("waveform has no samples".into()));
        }
        if self.sample_rate_hz == 0 {
            return Err(Error::Argument("sample rate must be positive".into()));
        }
        if let Some(i) = self.samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::Argument(format!("non-finite sample at index {i}")));
        }
        Ok(())
    }

    pub fn duration_seconds(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz as f64
    }
}

/// Reads a PCM (16/24/32-bit integer) or 32-bit float WAV file. Multi-channel
/// audio is averaged down to mono.
pub fn read_wav(path: impl AsRef<Path>) -> Result<Waveform> {
    let reader = hound::WavReader::open(path.as_ref())?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    let interleaved: Vec<f64> = match spec.sample_format {
        hound::SampleFormat::Float => {
            if spec.bits_per_sample != 32 {
                return Err(Error::Format(format!(
                    "unsupported float WAV with {} bits",
                    spec.bits_per_sample
                )));
            }
            reader
                .into_samples::<f32>()
                .map(|s| s.map(f64::from))
                .collect::<std::result::Result<_, _>>()?
        }
        hound::SampleFormat::Int => {
            if ![16, 24, 32].contains(&spec.bits_per_sample) {
                return Err(Error::Format(format!(
                    "unsupported PCM WAV with {} bits",
                    spec.bits_per_sample
                )));
            }
            let scale = 1.0 / f64::from(1u32 << (spec.bits_per_sample - 1));
            reader
                .into_samples::<i32>()
                .map(|s| s.map(|v| f64::from(v) * scale))
                .collect::<std::result::Result<_, _>>()?
        }
    };
    let samples = interleaved
        .chunks_exact(channels)
        .map(|frame| frame.iter().sum::<f64>() / channels as f64)
        .collect();
    Waveform::new(samples, spec.sample_rate)
}

/// Splits a waveform into consecutive non-overlapping clips of
/// `clip_seconds`. A trailing partial clip is zero-padded to full length when
/// it holds at least `min_tail_fraction` of a clip of real samples and is
/// dropped otherwise.
pub fn segment_waveform(
    w: &Waveform,
    clip_seconds: f64,
    min_tail_fraction: f64,
) -> Result<Vec<Waveform>> {
    w.validate()?;
    if !(clip_seconds.is_finite() && clip_seconds > 0.0) {
        return Err(Error::Argument(format!(
            "clip length must be positive, got {clip_seconds} s"
        )));
    }
    if !(0.0..=1.0).contains(&min_tail_fraction) {
        return Err(Error::Argument(format!(
            "min_tail_fraction must lie in [0, 1], got {min_tail_fraction}"
        )));
    }
    let clip_len = (clip_seconds * w.sample_rate_hz as f64).round() as usize;
    if clip_len == 0 {
        return Err(Error::Argument(format!(
            "clip of {clip_seconds} s is shorter than one sample"
        )));
    }

    let mut clips: Vec<Waveform> = w
        .samples
        .chunks_exact(clip_len)
        .map(|c| Waveform {
            samples: c.to_vec(),
            sample_rate_hz: w.sample_rate_hz,
        })
        .collect();
    let tail = &w.samples[clips.len() * clip_len..];
    if !tail.is_empty() && tail.len() as f64 >= min_tail_fraction * clip_len as f64 {
        let mut samples = tail.to_vec();
        samples.resize(clip_len, 0.0);
        clips.push(Waveform {
            samples,
            sample_rate_hz: w.sample_rate_hz,
        });
    }
    Ok(clips)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpectrogramConfig {
    pub sample_rate_hz: u32,
    pub n_fft: usize,
    pub hop: usize,
    pub n_mels: usize,
    pub fmin_hz: f64,
    pub fmax_hz: f64,
    pub log_floor: f64,
}

impl Default for SpectrogramConfig {
    /// 16 kHz mono, 25 ms window, 10 ms hop, 128 Mel bands over 0–8 kHz.
    fn default() -> Self {
        SpectrogramConfig {
            sample_rate_hz: 16_000,
            n_fft: 400,
            hop: 160,
            n_mels: 128,
            fmin_hz: 0.0,
            fmax_hz: 8_000.0,
            log_floor: 1e-10,
        }
    }
}

impl SpectrogramConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Argument(m));
        if self.sample_rate_hz == 0 {
            return bad("sample rate must be positive".into());
        }
        if self.n_fft < 2 {
            return bad(format!("n_fft must be at least 2, got {}", self.n_fft));
        }
        if self.hop == 0 || self.hop > self.n_fft {
            return bad(format!(
                "hop must satisfy 0 < hop <= n_fft, got hop={} n_fft={}",
                self.hop, self.n_fft
            ));
        }
        if self.n_mels < 2 {
            return bad(format!("n_mels must be at least 2, got {}", self.n_mels));
        }
        let nyquist = self.sample_rate_hz as f64 / 2.0;
        if !(self.fmin_hz >= 0.0 && self.fmin_hz < self.fmax_hz) {
            return bad(format!(
                "need 0 <= fmin < fmax, got fmin={} fmax={}",
                self.fmin_hz, self.fmax_hz
            ));
        }
        if self.fmax_hz > nyquist {
            return bad(format!(
                "fmax {} Hz is above the Nyquist frequency {nyquist} Hz",
                self.fmax_hz
            ));
        }
        if !(self.log_floor > 0.0 && self.log_floor.is_finite()) {
            return bad(format!(
                "log_floor must be positive, got {}",
                self.log_floor
            ));
        }
        Ok(())
    }

    pub fn n_bins(&self) -> usize {
        self.n_fft / 2 + 1
    }

    /// Frame count for a waveform of `len` samples, or `None` if shorter than
    /// one window.
    pub fn n_frames(&self, len: usize) -> Option<usize> {
        (len >= self.n_fft).then(|| 1 + (len - self.n_fft) / self.hop)
    }
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Row-major `n_mels × (n_fft/2 + 1)` triangular filter weights.
#[derive(Debug, Clone, PartialEq)]
pub struct MelFilterbank {
    pub n_mels: usize,
    pub n_bins: usize,
    weights: Vec<f64>,
    /// Half-open column range of nonzero weights per row.
    support: Vec<(usize, usize)>,
}

impl MelFilterbank {
    pub fn row(&self, m: usize) -> &[f64] {
        &self.weights[m * self.n_bins..(m + 1) * self.n_bins]
    }

    pub fn get(&self, m: usize, bin: usize) -> f64 {
        self.weights[m * self.n_bins + bin]
    }

    /// Nonzero column range of row `m`; empty when the band falls between
    /// two FFT bins.
    pub fn support(&self, m: usize) -> std::ops::Range<usize> {
        let (a, b) = self.support[m];
        a..b
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n_mels, self.n_bins)
    }
}

/// Builds triangular filters whose corner frequencies are equally spaced on
/// the HTK Mel scale between `fmin_hz` and `fmax_hz`. Peaks are 1.
pub fn mel_filterbank(cfg: &SpectrogramConfig) -> Result<MelFilterbank> {
    cfg.validate()?;
    let n_bins = cfg.n_bins();
    let mel_lo = hz_to_mel(cfg.fmin_hz);
    let mel_hi = hz_to_mel(cfg.fmax_hz);
    let step = (mel_hi - mel_lo) / (cfg.n_mels + 1) as f64;
    let corners: Vec<f64> = (0..cfg.n_mels + 2)
        .map(|i| mel_to_hz(mel_lo + step * i as f64))
        .collect();
    let bin_hz = cfg.sample_rate_hz as f64 / cfg.n_fft as f64;

    let mut weights = vec![0.0; cfg.n_mels * n_bins];
    let mut support = Vec::with_capacity(cfg.n_mels);
    for m in 0..cfg.n_mels {
        let (left, centre, right) = (corners[m], corners[m + 1], corners[m + 2]);
        let row = &mut weights[m * n_bins..(m + 1) * n_bins];
        let mut first = None;
        let mut last = 0;
        for (k, w) in row.iter_mut().enumerate() {
            let f = k as f64 * bin_hz;
            let rising = (f - left) / (centre - left);
            let falling = (right - f) / (right - centre);
            let v = rising.min(falling).max(0.0);
            if v > 0.0 {
                *w = v;
                first.get_or_insert(k);
                last = k + 1;
            }
        }
        support.push(first.map_or((0, 0), |f| (f, last)));
    }
    Ok(MelFilterbank {
        n_mels: cfg.n_mels,
        n_bins,
        weights,
        support,
    })
}

/// Periodic Hann window of length `n`.
pub fn hann_periodic(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (std::f64::consts::TAU * i as f64 / n as f64).cos())
        .collect()
}

/// Power spectrum `|X_k|²`, `k = 0..=n/2`, of one windowed frame.
pub fn frame_power_spectrum(frame: &[f64], window: &[f64]) -> Vec<f64> {
    let n = frame.len();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n);
    let mut buf: Vec<Complex<f64>> = frame
        .iter()
        .zip(window)
        .map(|(x, w)| Complex::new(x * w, 0.0))
        .collect();
    fft.process(&mut buf);
    buf[..n / 2 + 1].iter().map(|c| c.norm_sqr()).collect()
}

/// `F × T'` grid of log-Mel energies, stored row-major by Mel band.
#[derive(Debug, Clone, PartialEq)]
pub struct LogMelSpectrogram {
    pub values: Vec<f64>,
    pub n_mels: usize,
    pub n_frames: usize,
    pub config: SpectrogramConfig,
}

impl LogMelSpectrogram {
    pub fn get(&self, mel: usize, frame: usize) -> f64 {
        self.values[mel * self.n_frames + frame]
    }

    pub fn row(&self, mel: usize) -> &[f64] {
        &self.values[mel * self.n_frames..(mel + 1) * self.n_frames]
    }

    pub fn floor_value(&self) -> f64 {
        self.config.log_floor.ln()
    }

    /// Debug export: `{"config":…, "height":F, "width":T', "rows":[[…]…]}`.
    pub fn write_json<W: Write>(&self, mut sink: W) -> Result<()> {
        #[derive(Serialize)]
        struct Doc<'a> {
            config: &'a SpectrogramConfig,
            height: usize,
            width: usize,
            rows: Vec<Vec<Sig17>>,
        }
        let doc = Doc {
            config: &self.config,
            height: self.n_mels,
            width: self.n_frames,
            rows: (0..self.n_mels)
                .map(|m| self.row(m).iter().copied().map(Sig17).collect())
                .collect(),
        };
        serde_json::to_writer(&mut sink, &doc)
            .map_err(|e| Error::Internal(format!("serializing spectrogram: {e}")))?;
        sink.write_all(b"\n")
            .map_err(|e| Error::io("<spectrogram>", e))
    }
}

/// Computes the log-Mel spectrogram of `w`.
pub fn log_mel_spectrogram(w: &Waveform, cfg: &SpectrogramConfig) -> Result<LogMelSpectrogram> {
    w.validate()?;
    let bank = mel_filterbank(cfg)?;
    if w.sample_rate_hz != cfg.sample_rate_hz {
        return Err(Error::Argument(format!(
            "waveform sample rate {} Hz differs from configured {} Hz; resample first",
            w.sample_rate_hz, cfg.sample_rate_hz
        )));
    }
    let n_frames = cfg.n_frames(w.samples.len()).ok_or_else(|| {
        Error::Argument(format!(
            "waveform of {} samples is shorter than one {}-sample frame",
            w.samples.len(),
            cfg.n_fft
        ))
    })?;

    let window = hann_periodic(cfg.n_fft);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(cfg.n_fft);
    let floor = cfg.log_floor;

    // Frame-major while computing, transposed to band-major at the end.
    let frames: Vec<Vec<f64>> = (0..n_frames)
        .into_par_iter()
        .map_init(
            || {
                (
                    vec![Complex::new(0.0, 0.0); cfg.n_fft],
                    vec![Complex::new(0.0, 0.0); fft.get_inplace_scratch_len()],
                )
            },
            |(buf, scratch), t| {
                let start = t * cfg.hop;
                let frame = &w.samples[start..start + cfg.n_fft];
                for ((b, x), win) in buf.iter_mut().zip(frame).zip(&window) {
                    *b = Complex::new(x * win, 0.0);
                }
                fft.process_with_scratch(buf, scratch);
                let power: Vec<f64> = buf[..bank.n_bins].iter().map(|c| c.norm_sqr()).collect();
                (0..bank.n_mels)
                    .map(|m| {
                        let energy: f64 = bank.support(m).map(|k| bank.get(m, k) * power[k]).sum();
                        energy.max(floor).ln()
                    })
                    .collect()
            },
        )
        .collect();

    let mut values = vec![0.0; cfg.n_mels * n_frames];
    for (t, col) in frames.iter().enumerate() {
        for (m, v) in col.iter().enumerate() {
            values[m * n_frames + t] = *v;
        }
    }
    Ok(LogMelSpectrogram {
        values,
        n_mels: cfg.n_mels,
        n_frames,
        config: *cfg,
    })
}

/// Non-overlapping `patch_h × patch_w` tiles of a spectrogram, ordered
/// row-major over the tile grid, each flattened row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchGrid {
    pub patches: Vec<Vec<f64>>,
    pub patch_h: usize,
    pub patch_w: usize,
    pub grid_rows: usize,
    pub grid_cols: usize,
}

impl PatchGrid {
    pub fn len(&self) -> usize {
        self.patches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patches.is_empty()
    }

    /// Maps a spectrogram cell to its (patch index, offset within patch).
    pub fn locate(&self, mel: usize, frame: usize) -> (usize, usize) {
        let patch = (mel / self.patch_h) * self.grid_cols + frame / self.patch_w;
        let offset = (mel % self.patch_h) * self.patch_w + frame % self.patch_w;
        (patch, offset)
    }
}

pub fn patchify(s: &LogMelSpectrogram, patch_h: usize, patch_w: usize) -> Result<PatchGrid> {
    if patch_h == 0 || patch_w == 0 {
        return Err(Error::Argument("patch dimensions must be positive".into()));
    }
    if !s.n_mels.is_multiple_of(patch_h) || !s.n_frames.is_multiple_of(patch_w) {
        return Err(Error::Argument(format!(
            "{}x{} grid is not divisible into {patch_h}x{patch_w} patches",
            s.n_mels, s.n_frames
        )));
    }
    let grid_rows = s.n_mels / patch_h;
    let grid_cols = s.n_frames / patch_w;
    let mut patches = Vec::with_capacity(grid_rows * grid_cols);
    for pr in 0..grid_rows {
        for pc in 0..grid_cols {
            let mut p = Vec::with_capacity(patch_h * patch_w);
            for r in pr * patch_h..(pr + 1) * patch_h {
                let row = s.row(r);
                p.extend_from_slice(&row[pc * patch_w..(pc + 1) * patch_w]);
            }
            patches.push(p);
        }
    }
    Ok(PatchGrid {
        patches,
        patch_h,
        patch_w,
        grid_rows,
        grid_cols,
    })
}
