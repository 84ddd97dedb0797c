//! Source-filter vowel synthesis with exactly known formants.
//!
//! An impulse train at `f0` drives a cascade of two-pole resonators (one per
//! formant). Because the resonator poles are placed directly at
//! `r = e^(−π·b/fs)`, `θ = 2π·f/fs`, the formant frequencies of the output are
//! known exactly, which makes these vowels the ground truth for the LPC and
//! MFCC stages.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Normal};
use rand_xoshiro::SplitMix64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio_io::{self, AudioError, AudioSignal};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("formant at {freq} Hz is at or above Nyquist ({nyquist} Hz)")]
    AboveNyquist { freq: f64, nyquist: f64 },
    #[error("invalid vowel spec: {0}")]
    Invalid(String),
    #[error("cannot write to {path}: {source}")]
    Output {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VowelSpec {
    /// `(frequency, bandwidth)` pairs in Hz.
    pub formants: Vec<(f64, f64)>,
    pub f0: f64,
    pub duration: f64,
    pub sample_rate: u32,
    pub amplitude: f64,
}

impl VowelSpec {
    fn validate(&self) -> Result<(), SynthError> {
        let nyquist = self.sample_rate as f64 / 2.0;
        if self.sample_rate == 0 {
            return Err(SynthError::Invalid("sample rate must be positive".into()));
        }
        if !(self.f0 > 0.0) {
            return Err(SynthError::Invalid(format!("f0 must be positive, got {}", self.f0)));
        }
        if !(self.duration >= 0.0) || !(self.amplitude >= 0.0) {
            return Err(SynthError::Invalid("duration and amplitude must be non-negative".into()));
        }
        for &(freq, bw) in &self.formants {
            if freq >= nyquist {
                return Err(SynthError::AboveNyquist { freq, nyquist });
            }
            if !(freq > 0.0) || !(bw > 0.0) {
                return Err(SynthError::Invalid(format!("formant ({freq}, {bw})")));
            }
        }
        Ok(())
    }
}

/// Unity-DC-gain two-pole resonator run in place.
fn resonate(x: &mut [f64], freq: f64, bw: f64, fs: f64) {
    let r = (-PI * bw / fs).exp();
    let c1 = 2.0 * r * (2.0 * PI * freq / fs).cos();
    let c2 = -r * r;
    let g = 1.0 - c1 - c2;
    let (mut y1, mut y2) = (0.0, 0.0);
    for v in x.iter_mut() {
        let y = g * *v + c1 * y1 + c2 * y2;
        y2 = y1;
        y1 = y;
        *v = y;
    }
}

/// Impulse train at `f0` through one resonator per formant, peak-scaled to
/// `amplitude`.
pub fn synth_vowel(spec: &VowelSpec) -> Result<AudioSignal, SynthError> {
    spec.validate()?;
    let fs = spec.sample_rate as f64;
    let len = (spec.duration * fs).round() as usize;
    let period = fs / spec.f0;
    let mut x = vec![0.0; len];
    let mut k = 0usize;
    loop {
        let pos = (k as f64 * period).round() as usize;
        if pos >= len {
            break;
        }
        x[pos] = 1.0;
        k += 1;
    }
    for &(freq, bw) in &spec.formants {
        resonate(&mut x, freq, bw, fs);
    }
    let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let scale = if peak > 0.0 { spec.amplitude / peak } else { 0.0 };
    x.iter_mut().for_each(|v| *v *= scale);
    Ok(AudioSignal::new(x, spec.sample_rate)?)
}

/// Phoneme → (F1, F2) centre table.
pub type FormantTable = Vec<(String, (f64, f64))>;

/// Mean F1/F2 per phoneme as measured on the recorded vowel corpus
/// (ASCII corpus names: ax = /ə/, ae = /æ/, aa = /ɑː/, ah = /ʌ/).
pub fn default_table() -> FormantTable {
    vec![
        ("ax".to_string(), (631.0, 1049.0)),
        ("ae".to_string(), (720.0, 1644.0)),
        ("aa".to_string(), (573.0, 1311.0)),
        ("ah".to_string(), (693.0, 1182.0)),
    ]
}

pub fn preset(name: &str) -> Option<FormantTable> {
    match name {
        "default" | "table2" => Some(default_table()),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusConfig {
    pub n_per_label: usize,
    pub jitter_hz: f64,
    pub seed: u64,
    pub sample_rate: u32,
    pub duration: f64,
    pub bandwidths: (f64, f64),
    pub f0_range: (f64, f64),
    /// Silence added before and after each vowel, seconds.
    pub padding: f64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            n_per_label: 150,
            jitter_hz: 40.0,
            seed: 42,
            sample_rate: 16000,
            duration: 1.0,
            bandwidths: (80.0, 100.0),
            f0_range: (90.0, 220.0),
            padding: 0.1,
        }
    }
}

/// One synthesized file, as listed in the manifest.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SynthRecord {
    pub path: String,
    pub phoneme: String,
    pub f1: f64,
    pub f2: f64,
    pub f0: f64,
}

const AMPLITUDE_CLASSES: [(&str, f64); 3] = [("quiet", 0.2), ("normal", 0.5), ("loud", 0.9)];

/// Write `n_per_label` jittered vowels per table row into `out_dir` plus a
/// `manifest.csv` and a `truth.csv` holding the synthesis parameters.
pub fn synth_corpus(
    table: &FormantTable,
    out_dir: impl AsRef<Path>,
    config: &CorpusConfig,
) -> Result<(PathBuf, Vec<SynthRecord>), SynthError> {
    let out_dir = out_dir.as_ref();
    if !(config.jitter_hz >= 0.0) {
        return Err(SynthError::Invalid(format!("jitter {} < 0", config.jitter_hz)));
    }
    fs::create_dir_all(out_dir).map_err(|source| SynthError::Output {
        path: out_dir.to_path_buf(),
        source,
    })?;
    let mut rng = SplitMix64::seed_from_u64(config.seed);
    let jitter = Normal::new(0.0, config.jitter_hz)
        .map_err(|e| SynthError::Invalid(e.to_string()))?;
    let pad = vec![0.0; (config.padding * config.sample_rate as f64).round() as usize];

    let mut records = Vec::new();
    let mut classes = Vec::new();
    for (label, (f1, f2)) in table {
        let (f1, f2) = (*f1, *f2);
        for i in 0..config.n_per_label {
            let j1 = f1 + jitter.sample(&mut rng);
            let j2 = f2 + jitter.sample(&mut rng);
            let f0 = rng.gen_range(config.f0_range.0..=config.f0_range.1);
            let (amp_class, amplitude) = AMPLITUDE_CLASSES[i % AMPLITUDE_CLASSES.len()];
            let spec = VowelSpec {
                formants: vec![(j1, config.bandwidths.0), (j2, config.bandwidths.1)],
                f0,
                duration: config.duration,
                sample_rate: config.sample_rate,
                amplitude,
            };
            let vowel = synth_vowel(&spec)?;
            let mut samples = pad.clone();
            samples.extend_from_slice(vowel.samples());
            samples.extend_from_slice(&pad);
            let name = format!("{label}_{i:04}.wav");
            audio_io::write_wav(&AudioSignal::new(samples, config.sample_rate)?, out_dir.join(&name))?;
            records.push(SynthRecord {
                path: name,
                phoneme: label.clone(),
                f1: j1,
                f2: j2,
                f0,
            });
            classes.push(amp_class);
        }
    }

    let manifest = out_dir.join("manifest.csv");
    let mut w = csv::Writer::from_path(&manifest)?;
    w.write_record(["path", "phoneme", "duration", "amplitude", "intonation"])?;
    let duration_class = if config.duration >= 1.5 { "long" } else { "short" };
    for (rec, class) in records.iter().zip(&classes) {
        w.write_record([rec.path.as_str(), &rec.phoneme, duration_class, class, "level"])?;
    }
    w.flush().map_err(|source| SynthError::Output {
        path: manifest.clone(),
        source,
    })?;

    let mut t = csv::Writer::from_path(out_dir.join("truth.csv"))?;
    for rec in &records {
        t.serialize(rec)?;
    }
    t.flush().map_err(|source| SynthError::Output {
        path: out_dir.join("truth.csv"),
        source,
    })?;
    Ok((manifest, records))
}
