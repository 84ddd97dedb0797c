//! Corpus manifest, per-phoneme outlier filter and seeded stratified split.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_xoshiro::SplitMix64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("empty manifest")]
    EmptyManifest,
    #[error("manifest is missing column(s): {0}")]
    MissingColumns(String),
    #[error("line {line}: unknown phoneme label {label:?}")]
    UnknownPhoneme { line: usize, label: String },
    #[error("line {line}: invalid {field} value {value:?}")]
    InvalidValue {
        line: usize,
        field: &'static str,
        value: String,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("label {label:?} has {have} sample(s); at least {need} required")]
    TooFewSamples {
        label: String,
        have: usize,
        need: usize,
    },
    #[error("train fraction must lie in (0, 1), got {0}")]
    BadFraction(f64),
    #[error("inconsistent feature dimension: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("feature cache line {line}: {source}")]
    Cache {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
}

/// ASCII corpus phoneme names and their IPA symbols.
pub const PHONEMES: [(&str, &str); 7] = [
    ("ax", "ə"),
    ("ae", "æ"),
    ("aa", "ɑː"),
    ("ah", "ʌ"),
    ("ee", "e"),
    ("uu", "u"),
    ("oo", "o"),
];

pub fn ipa(label: &str) -> Option<&'static str> {
    PHONEMES.iter().find(|(a, _)| *a == label).map(|(_, i)| *i)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DurationClass {
    Short,
    Long,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AmplitudeClass {
    Quiet,
    Normal,
    Loud,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IntonationClass {
    Level,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusEntry {
    pub path: PathBuf,
    pub phoneme: String,
    pub duration_class: DurationClass,
    pub amplitude_class: AmplitudeClass,
    pub intonation_class: IntonationClass,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub entries: Vec<CorpusEntry>,
    /// Rows that parsed but fall outside the recording selection.
    pub excluded: usize,
    pub rows: usize,
}

enum Selection<T> {
    Keep(T),
    Exclude,
}

fn parse_duration(v: &str) -> Option<Selection<DurationClass>> {
    match v {
        "short" => Some(Selection::Keep(DurationClass::Short)),
        "long" => Some(Selection::Keep(DurationClass::Long)),
        "nudge" => Some(Selection::Exclude),
        _ => None,
    }
}

fn parse_amplitude(v: &str) -> Option<Selection<AmplitudeClass>> {
    match v {
        "quiet" => Some(Selection::Keep(AmplitudeClass::Quiet)),
        "normal" => Some(Selection::Keep(AmplitudeClass::Normal)),
        "loud" => Some(Selection::Keep(AmplitudeClass::Loud)),
        "quiet-to-loud" | "loud-to-quiet" | "quiet_to_loud" | "loud_to_quiet" => {
            Some(Selection::Exclude)
        }
        _ => None,
    }
}

fn parse_intonation(v: &str) -> Option<Selection<IntonationClass>> {
    match v {
        "level" => Some(Selection::Keep(IntonationClass::Level)),
        "rising" | "falling" => Some(Selection::Exclude),
        _ => None,
    }
}

const COLUMNS: [&str; 5] = ["path", "phoneme", "duration", "amplitude", "intonation"];

/// Parse a manifest CSV. Relative paths resolve against the manifest's
/// directory; rows outside the selection (nudge, amplitude sweeps, non-level
/// intonation) are counted in `excluded`.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<Manifest, DatasetError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    if text.trim().is_empty() {
        return Err(DatasetError::EmptyManifest);
    }
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    let index: Vec<Option<usize>> = COLUMNS
        .iter()
        .map(|c| headers.iter().position(|h| h.eq_ignore_ascii_case(c)))
        .collect();
    let missing: Vec<&str> = COLUMNS
        .iter()
        .zip(&index)
        .filter(|(_, i)| i.is_none())
        .map(|(c, _)| *c)
        .collect();
    if !missing.is_empty() {
        return Err(DatasetError::MissingColumns(missing.join(", ")));
    }
    let idx: Vec<usize> = index.into_iter().flatten().collect();

    let mut entries = Vec::new();
    let mut excluded = 0;
    let mut rows = 0;
    for (n, record) in reader.records().enumerate() {
        let record = record?;
        let line = n + 2;
        rows += 1;
        let field = |i: usize| record.get(idx[i]).unwrap_or("").to_ascii_lowercase();
        let phoneme = field(1);
        if ipa(&phoneme).is_none() {
            return Err(DatasetError::UnknownPhoneme {
                line,
                label: phoneme,
            });
        }
        let invalid = |field: &'static str, value: String| DatasetError::InvalidValue {
            line,
            field,
            value,
        };
        let dur = parse_duration(&field(2)).ok_or_else(|| invalid("duration", field(2)))?;
        let amp = parse_amplitude(&field(3)).ok_or_else(|| invalid("amplitude", field(3)))?;
        let into = parse_intonation(&field(4)).ok_or_else(|| invalid("intonation", field(4)))?;
        match (dur, amp, into) {
            (Selection::Keep(d), Selection::Keep(a), Selection::Keep(i)) => {
                let raw = PathBuf::from(record.get(idx[0]).unwrap_or(""));
                entries.push(CorpusEntry {
                    path: if raw.is_absolute() { raw } else { base.join(raw) },
                    phoneme,
                    duration_class: d,
                    amplitude_class: a,
                    intonation_class: i,
                });
            }
            _ => excluded += 1,
        }
    }
    if rows == 0 {
        return Err(DatasetError::EmptyManifest);
    }
    if excluded > 0 {
        log::info!("{}: excluded {excluded} of {rows} rows by selection", path.display());
    }
    Ok(Manifest {
        entries,
        excluded,
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledFeature {
    pub features: Vec<f64>,
    pub label: String,
}

impl LabeledFeature {
    pub fn new(features: Vec<f64>, label: impl Into<String>) -> Self {
        Self {
            features,
            label: label.into(),
        }
    }
}

/// Per-label mean and population standard deviation of each feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelStats {
    pub n: usize,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

pub fn label_stats<'a, I>(data: I) -> BTreeMap<String, LabelStats>
where
    I: IntoIterator<Item = &'a LabeledFeature>,
{
    let mut groups: BTreeMap<String, Vec<&[f64]>> = BTreeMap::new();
    for d in data {
        groups.entry(d.label.clone()).or_default().push(&d.features);
    }
    groups
        .into_iter()
        .map(|(label, rows)| {
            let n = rows.len();
            let dim = rows[0].len();
            let mean: Vec<f64> = (0..dim)
                .map(|i| rows.iter().map(|r| r[i]).sum::<f64>() / n as f64)
                .collect();
            let std = (0..dim)
                .map(|i| {
                    (rows.iter().map(|r| (r[i] - mean[i]).powi(2)).sum::<f64>() / n as f64).sqrt()
                })
                .collect();
            (label, LabelStats { n, mean, std })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutlierSplit {
    /// Indices into the input, ascending.
    pub kept: Vec<usize>,
    pub discarded: Vec<usize>,
    /// Statistics of the unfiltered input that the criterion used.
    pub stats: BTreeMap<String, LabelStats>,
}

/// Keep a sample iff `|x_i − μ_i| < 1.5·σ_i` for every feature `i`, with μ
/// and σ (population) taken per label over the whole input in one pass.
pub fn filter_outliers(data: &[LabeledFeature]) -> Result<OutlierSplit, DatasetError> {
    filter_outliers_k(data, 1.5)
}

pub fn filter_outliers_k(data: &[LabeledFeature], k: f64) -> Result<OutlierSplit, DatasetError> {
    check_dims(data)?;
    let stats = label_stats(data);
    for (label, s) in &stats {
        if s.n < 2 {
            return Err(DatasetError::TooFewSamples {
                label: label.clone(),
                have: s.n,
                need: 2,
            });
        }
        if s.std.iter().any(|&v| v == 0.0) {
            log::warn!("label {label}: zero variance; only samples at the mean survive");
        }
    }
    let (mut kept, mut discarded) = (Vec::new(), Vec::new());
    for (i, d) in data.iter().enumerate() {
        let s = &stats[&d.label];
        let inside = d.features.iter().enumerate().all(|(j, &x)| {
            let dev = (x - s.mean[j]).abs();
            if s.std[j] == 0.0 {
                dev == 0.0
            } else {
                dev < k * s.std[j]
            }
        });
        if inside {
            kept.push(i);
        } else {
            discarded.push(i);
        }
    }
    Ok(OutlierSplit {
        kept,
        discarded,
        stats,
    })
}

fn check_dims(data: &[LabeledFeature]) -> Result<usize, DatasetError> {
    let dim = data.first().map_or(0, |d| d.features.len());
    for d in data {
        if d.features.len() != dim {
            return Err(DatasetError::Dimension {
                expected: dim,
                got: d.features.len(),
            });
        }
    }
    Ok(dim)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
    pub stratified: bool,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_fraction: 2.0 / 3.0,
            seed: 42,
            stratified: true,
        }
    }
}

fn train_count(n: usize, fraction: f64) -> usize {
    // The epsilon keeps exact products like 3·(2/3) from flooring to 1.
    ((n as f64 * fraction) + 1e-9).floor() as usize
}

/// Seeded train/test partition; returns ascending index lists.
///
/// Stratified mode shuffles each label's indices (labels in sorted order,
/// one SplitMix64 stream, Fisher-Yates) and sends the first
/// `⌊n·train_fraction⌋` to training.
pub fn split(
    data: &[LabeledFeature],
    spec: &SplitSpec,
) -> Result<(Vec<usize>, Vec<usize>), DatasetError> {
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(DatasetError::BadFraction(spec.train_fraction));
    }
    let mut rng = SplitMix64::seed_from_u64(spec.seed);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    if spec.stratified {
        let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (i, d) in data.iter().enumerate() {
            groups.entry(&d.label).or_default().push(i);
        }
        for (label, mut idx) in groups {
            let n_train = train_count(idx.len(), spec.train_fraction);
            if idx.len() < 3 || n_train == 0 || n_train == idx.len() {
                return Err(DatasetError::TooFewSamples {
                    label: label.to_string(),
                    have: idx.len(),
                    need: 3,
                });
            }
            idx.shuffle(&mut rng);
            train.extend_from_slice(&idx[..n_train]);
            test.extend_from_slice(&idx[n_train..]);
        }
    } else {
        let mut idx: Vec<usize> = (0..data.len()).collect();
        let n_train = train_count(idx.len(), spec.train_fraction);
        if n_train == 0 || n_train == idx.len() {
            return Err(DatasetError::TooFewSamples {
                label: "*".into(),
                have: idx.len(),
                need: 2,
            });
        }
        idx.shuffle(&mut rng);
        train.extend_from_slice(&idx[..n_train]);
        test.extend_from_slice(&idx[n_train..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// One line of the feature cache.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRecord {
    pub path: String,
    pub label: String,
    pub kind: FeatureKind,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Formants,
    Mfcc,
}

pub fn write_feature_cache(path: impl AsRef<Path>, records: &[FeatureRecord]) -> Result<(), DatasetError> {
    let path = path.as_ref();
    let io = |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    for r in records {
        let line = serde_json::to_string(r).expect("feature record serializes");
        writeln!(w, "{line}").map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_feature_cache(path: impl AsRef<Path>) -> Result<Vec<FeatureRecord>, DatasetError> {
    let path = path.as_ref();
    let io = |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    };
    let reader = BufReader::new(File::open(path).map_err(io)?);
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line).map_err(|source| DatasetError::Cache { line: n + 1, source })?,
        );
    }
    Ok(out)
}

/// Distinct labels, sorted.
pub fn labels_of(data: &[LabeledFeature]) -> Vec<String> {
    data.iter()
        .map(|d| d.label.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}
