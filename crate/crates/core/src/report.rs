//! End-to-end experiment: corpus → features → outlier filter → split →
//! decision tree → report (canonical JSON, Markdown, SVG).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::audio_io::{self, AudioError};
use crate::config::{ConfigError, PipelineConfig};
use crate::dataset::{self, DatasetError, FeatureKind, FeatureRecord, LabeledFeature};
use crate::lpc::{self, FormantEstimate};
use crate::mfcc;
use crate::pca::{self, PcaModel};
use crate::plot::ScatterPlot;
use crate::preprocess;
use crate::tree::{self, DecisionTree, EvalResult};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("no usable files: all {0} selected file(s) failed feature extraction")]
    NoUsableFiles(usize),
    #[error("{stage}: {message}")]
    File { stage: Stage, message: String },
    #[error("numeric failure in {context}: {message}")]
    Numeric { context: String, message: String },
    #[error("cannot write {path}: {source}")]
    Output {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("report: {0}")]
    Report(String),
}

impl PipelineError {
    /// Process exit code: 2 for data problems, 3 for numeric failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Numeric { .. } => 3,
            PipelineError::Config(_) => 1,
            _ => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Decode,
    Prepare,
    Formants,
    Mfcc,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Stage::Decode => "decode",
            Stage::Prepare => "prepare",
            Stage::Formants => "formants",
            Stage::Mfcc => "mfcc",
        })
    }
}

/// Features of one file at the analysis rate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FileAnalysis {
    pub formants: FormantEstimate,
    pub lpc_order: usize,
    pub mfcc: Vec<f64>,
    pub sample_rate: u32,
}

fn file_err(stage: Stage, e: impl std::fmt::Display) -> PipelineError {
    PipelineError::File {
        stage,
        message: e.to_string(),
    }
}

fn load_at_rate(path: &Path, cfg: &PipelineConfig) -> Result<audio_io::AudioSignal, PipelineError> {
    let sig = audio_io::read_wav(path).map_err(|e| file_err(Stage::Decode, e))?;
    audio_io::resample(&sig, cfg.analysis_rate_hz).map_err(|e: AudioError| file_err(Stage::Decode, e))
}

/// LPC formants of one file.
pub fn analyze_formants(path: &Path, cfg: &PipelineConfig) -> Result<(FormantEstimate, usize), PipelineError> {
    let sig = load_at_rate(path, cfg)?;
    let frame = preprocess::prepare(&sig, &cfg.prep()).map_err(|e| file_err(Stage::Prepare, e))?;
    let (model, est) = lpc::estimate_formants(&frame, &cfg.formant()).map_err(|e| file_err(Stage::Formants, e))?;
    Ok((est, model.order))
}

/// MFCCs of one file's prepared frame.
pub fn analyze_mfcc(path: &Path, cfg: &PipelineConfig) -> Result<Vec<f64>, PipelineError> {
    let sig = load_at_rate(path, cfg)?;
    let frame = preprocess::prepare(&sig, &cfg.prep()).map_err(|e| file_err(Stage::Prepare, e))?;
    Ok(mfcc::mfcc(&frame, &cfg.mfcc()).map_err(|e| file_err(Stage::Mfcc, e))?.coeffs)
}

/// Decode, prepare once, then both feature kinds from the same frame.
pub fn analyze_file(path: &Path, cfg: &PipelineConfig) -> Result<FileAnalysis, PipelineError> {
    let sig = load_at_rate(path, cfg)?;
    let frame = preprocess::prepare(&sig, &cfg.prep()).map_err(|e| file_err(Stage::Prepare, e))?;
    let (model, formants) =
        lpc::estimate_formants(&frame, &cfg.formant()).map_err(|e| file_err(Stage::Formants, e))?;
    let m = mfcc::mfcc(&frame, &cfg.mfcc()).map_err(|e| file_err(Stage::Mfcc, e))?;
    Ok(FileAnalysis {
        formants,
        lpc_order: model.order,
        mfcc: m.coeffs,
        sample_rate: frame.sample_rate,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Feature {
    Formants,
    Mfcc,
}

/// One row of the hard-coded comparison roster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub name: String,
    pub feature: Feature,
    pub labels: Vec<String>,
}

pub fn roster() -> Vec<ExperimentSpec> {
    let e = |name: &str, feature, labels: &[&str]| ExperimentSpec {
        name: name.into(),
        feature,
        labels: labels.iter().map(|s| s.to_string()).collect(),
    };
    vec![
        e("formants_ax_ae_aa_ah", Feature::Formants, &["ax", "ae", "aa", "ah"]),
        e("mfcc_ax_ae_aa_ah", Feature::Mfcc, &["ax", "ae", "aa", "ah"]),
        e("mfcc_ax_ae_ah", Feature::Mfcc, &["ax", "ae", "ah"]),
        e("mfcc_ah_ee_uu_oo", Feature::Mfcc, &["ah", "ee", "uu", "oo"]),
        e("mfcc_ah_ee_uu", Feature::Mfcc, &["ah", "ee", "uu"]),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Counts {
    /// Manifest data rows.
    pub loaded: usize,
    pub excluded_by_selection: usize,
    pub failed_extraction: usize,
    /// `excluded_by_selection + failed_extraction`.
    pub excluded: usize,
    pub outlier_discarded: usize,
    pub kept: usize,
}

impl Counts {
    pub fn reconciles(&self) -> bool {
        self.loaded == self.kept + self.excluded + self.outlier_discarded
            && self.excluded == self.excluded_by_selection + self.failed_extraction
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileFailure {
    pub path: String,
    pub stage: Stage,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FormantStat {
    pub n: usize,
    pub f1_mean: f64,
    pub f1_std: f64,
    pub f2_mean: f64,
    pub f2_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Ok,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub spec: ExperimentSpec,
    pub status: Status,
    pub skip_reason: Option<String>,
    pub n_available: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub eval: Option<EvalResult>,
    pub tree_depth: Option<usize>,
    pub tree_leaves: Option<usize>,
    pub pca: Option<PcaModel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub manifest: String,
    pub config: PipelineConfig,
    pub seed: u64,
    pub counts: Counts,
    pub failures: Vec<FileFailure>,
    /// Per phoneme over every file with features, before the outlier filter.
    pub formant_stats: BTreeMap<String, FormantStat>,
    pub formant_stats_kept: BTreeMap<String, FormantStat>,
    pub outliers_by_label: BTreeMap<String, usize>,
    pub experiments: Vec<ExperimentResult>,
    pub plots: BTreeMap<String, ScatterPlot>,
}

impl ExperimentReport {
    pub fn experiment(&self, name: &str) -> Option<&ExperimentResult> {
        self.experiments.iter().find(|e| e.spec.name == name)
    }

    /// Sorted-key, pretty JSON; byte-stable for equal reports.
    pub fn canonical_json(&self) -> String {
        let v = serde_json::to_value(self).expect("report serializes");
        let mut s = serde_json::to_string_pretty(&sort_keys(v)).expect("value serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, PipelineError> {
        serde_json::from_str(text).map_err(|e| PipelineError::Report(e.to_string()))
    }

    pub fn to_markdown(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# Vowel classification report\n");
        let _ = writeln!(s, "Manifest: `{}`  \nSeed: {}\n", self.manifest, self.seed);
        let c = &self.counts;
        let _ = writeln!(s, "## Files\n");
        let _ = writeln!(s, "| loaded | excluded (selection) | failed | outliers discarded | kept |");
        let _ = writeln!(s, "|---:|---:|---:|---:|---:|");
        let _ = writeln!(
            s,
            "| {} | {} | {} | {} | {} |\n",
            c.loaded, c.excluded_by_selection, c.failed_extraction, c.outlier_discarded, c.kept
        );
        let _ = writeln!(s, "## Formants (Hz), before outlier filter\n");
        let _ = writeln!(s, "| phoneme | n | F1 mean | F1 std | F2 mean | F2 std | discarded |");
        let _ = writeln!(s, "|---|---:|---:|---:|---:|---:|---:|");
        for (l, st) in &self.formant_stats {
            let ipa = dataset::ipa(l).unwrap_or("?");
            let _ = writeln!(
                s,
                "| {l} /{ipa}/ | {} | {:.0} | {:.0} | {:.0} | {:.0} | {} |",
                st.n,
                st.f1_mean,
                st.f1_std,
                st.f2_mean,
                st.f2_std,
                self.outliers_by_label.get(l).copied().unwrap_or(0)
            );
        }
        let _ = writeln!(s, "\n## Accuracy\n");
        let _ = writeln!(s, "| experiment | feature | labels | train | test | accuracy (%) |");
        let _ = writeln!(s, "|---|---|---|---:|---:|---:|");
        for e in &self.experiments {
            let acc = match (&e.status, &e.eval) {
                (Status::Ok, Some(ev)) => format!("{:.1}", ev.accuracy),
                _ => format!("skipped: {}", e.skip_reason.as_deref().unwrap_or("")),
            };
            let _ = writeln!(
                s,
                "| {} | {:?} | {} | {} | {} | {} |",
                e.spec.name,
                e.spec.feature,
                e.spec.labels.join(" "),
                e.n_train,
                e.n_test,
                acc
            );
        }
        for e in &self.experiments {
            let Some(ev) = &e.eval else { continue };
            let _ = writeln!(s, "\n### {} confusion (rows: truth, columns: predicted)\n", e.spec.name);
            let _ = writeln!(s, "| | {} |", ev.labels.join(" | "));
            let _ = writeln!(s, "|---|{}", "---:|".repeat(ev.labels.len()));
            for (l, row) in ev.labels.iter().zip(&ev.confusion) {
                let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
                let _ = writeln!(s, "| {l} | {} |", cells.join(" | "));
            }
        }
        if !self.failures.is_empty() {
            let _ = writeln!(s, "\n## Failed files\n");
            for f in &self.failures {
                let _ = writeln!(s, "- `{}` ({}): {}", f.path, f.stage, f.error);
            }
        }
        s
    }
}

fn sort_keys(v: Value) -> Value {
    // serde_json's default Map is ordered; rebuilding also normalizes any
    // nested maps produced by custom serializers.
    match v {
        Value::Object(m) => {
            let sorted: BTreeMap<String, Value> = m.into_iter().map(|(k, v)| (k, sort_keys(v))).collect();
            Value::Object(sorted.into_iter().collect())
        }
        Value::Array(a) => Value::Array(a.into_iter().map(sort_keys).collect()),
        other => other,
    }
}

fn formant_stats<'a>(rows: impl IntoIterator<Item = &'a LabeledFeature>) -> BTreeMap<String, FormantStat> {
    dataset::label_stats(rows)
        .into_iter()
        .map(|(l, s)| {
            (
                l,
                FormantStat {
                    n: s.n,
                    f1_mean: s.mean[0],
                    f1_std: s.std[0],
                    f2_mean: s.mean[1],
                    f2_std: s.std[1],
                },
            )
        })
        .collect()
}

/// Per-file features in manifest order (cache rows for successful files).
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub report: ExperimentReport,
    pub features: Vec<FeatureRecord>,
    pub trees: BTreeMap<String, DecisionTree>,
}

fn display_path(p: &Path, base: &Path) -> String {
    p.strip_prefix(base).unwrap_or(p).to_string_lossy().into_owned()
}

fn numeric(context: &str, e: impl std::fmt::Display) -> PipelineError {
    PipelineError::Numeric {
        context: context.into(),
        message: e.to_string(),
    }
}

/// Run every experiment of the roster over the manifest.
pub fn run_pipeline(manifest_path: &Path, cfg: &PipelineConfig) -> Result<RunArtifacts, PipelineError> {
    cfg.validate()?;
    let manifest = dataset::load_manifest(manifest_path)?;
    let base = manifest_path.parent().unwrap_or_else(|| Path::new(""));

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.parallelism)
        .build()
        .map_err(|e| numeric("worker pool", e))?;
    // par_iter + collect keeps manifest order.
    let results: Vec<Result<FileAnalysis, PipelineError>> =
        pool.install(|| manifest.entries.par_iter().map(|e| analyze_file(&e.path, cfg)).collect());

    let mut failures = Vec::new();
    let mut usable: Vec<(String, String, FileAnalysis)> = Vec::new();
    for (entry, res) in manifest.entries.iter().zip(results) {
        let path = display_path(&entry.path, base);
        match res {
            Ok(a) => usable.push((path, entry.phoneme.clone(), a)),
            Err(PipelineError::File { stage, message }) => {
                log::warn!("{path}: {stage}: {message}");
                failures.push(FileFailure {
                    path,
                    stage,
                    error: message,
                });
            }
            Err(e) => return Err(e),
        }
    }
    if usable.is_empty() {
        return Err(PipelineError::NoUsableFiles(manifest.entries.len()));
    }

    let formant_rows: Vec<LabeledFeature> = usable
        .iter()
        .map(|(_, l, a)| LabeledFeature::new(vec![a.formants.f1, a.formants.f2], l.clone()))
        .collect();
    let mfcc_rows: Vec<LabeledFeature> =
        usable.iter().map(|(_, l, a)| LabeledFeature::new(a.mfcc.clone(), l.clone())).collect();

    // Outlier filter once, on formants, over everything; the kept set
    // feeds every experiment.
    let filtered = dataset::filter_outliers_k(&formant_rows, cfg.outlier_k)?;
    let mut outliers_by_label = BTreeMap::new();
    for &i in &filtered.discarded {
        *outliers_by_label.entry(formant_rows[i].label.clone()).or_insert(0) += 1;
    }
    let kept = &filtered.kept;

    let counts = Counts {
        loaded: manifest.rows,
        excluded_by_selection: manifest.excluded,
        failed_extraction: failures.len(),
        excluded: manifest.excluded + failures.len(),
        outlier_discarded: filtered.discarded.len(),
        kept: kept.len(),
    };
    debug_assert!(counts.reconciles());

    let mut experiments = Vec::new();
    let mut trees = BTreeMap::new();
    let mut plots = BTreeMap::new();
    plots.insert(
        "formants".to_string(),
        ScatterPlot {
            title: "First two formants (kept files)".into(),
            x_label: "F1 (Hz)".into(),
            y_label: "F2 (Hz)".into(),
            points: kept
                .iter()
                .map(|&i| (formant_rows[i].features[0], formant_rows[i].features[1], formant_rows[i].label.clone()))
                .collect(),
        },
    );

    for spec in roster() {
        let rows = match spec.feature {
            Feature::Formants => &formant_rows,
            Feature::Mfcc => &mfcc_rows,
        };
        let subset: Vec<LabeledFeature> = kept
            .iter()
            .filter(|&&i| spec.labels.contains(&rows[i].label))
            .map(|&i| rows[i].clone())
            .collect();
        let mut result = ExperimentResult {
            spec: spec.clone(),
            status: Status::Skipped,
            skip_reason: None,
            n_available: subset.len(),
            n_train: 0,
            n_test: 0,
            eval: None,
            tree_depth: None,
            tree_leaves: None,
            pca: None,
        };
        let present = dataset::labels_of(&subset);
        let missing: Vec<&str> = spec
            .labels
            .iter()
            .filter(|l| !present.contains(l))
            .map(String::as_str)
            .collect();
        if !missing.is_empty() {
            result.skip_reason = Some(format!("no kept files for {}", missing.join(", ")));
            experiments.push(result);
            continue;
        }
        let (tr, te) = match dataset::split(&subset, &cfg.split()) {
            Ok(s) => s,
            Err(e) => {
                result.skip_reason = Some(e.to_string());
                experiments.push(result);
                continue;
            }
        };
        let train: Vec<LabeledFeature> = tr.iter().map(|&i| subset[i].clone()).collect();
        let test: Vec<LabeledFeature> = te.iter().map(|&i| subset[i].clone()).collect();
        let t = DecisionTree::fit(&train, cfg.tree()).map_err(|e| numeric(&spec.name, e))?;
        let ev = tree::evaluate(&t, &test).map_err(|e| numeric(&spec.name, e))?;
        log::info!("{}: {:.1}% on {} test files", spec.name, ev.accuracy, ev.n_test);
        result.status = Status::Ok;
        result.n_train = train.len();
        result.n_test = test.len();
        result.tree_depth = Some(t.depth());
        result.tree_leaves = Some(t.n_leaves());
        result.eval = Some(ev);

        if spec.feature == Feature::Mfcc {
            // Refit per plotted subset.
            let data: Vec<Vec<f64>> = subset.iter().map(|d| d.features.clone()).collect();
            let model = pca::pca_fit(&data, 2).map_err(|e| numeric(&spec.name, e))?;
            let mut points = Vec::with_capacity(subset.len());
            for d in &subset {
                let p = model.project(&d.features).map_err(|e| numeric(&spec.name, e))?;
                points.push((p[0], p[1], d.label.clone()));
            }
            plots.insert(
                format!("pca_{}", spec.name),
                ScatterPlot {
                    title: format!("PCA of MFCC: {}", spec.labels.join(" ")),
                    x_label: "PC1".into(),
                    y_label: "PC2".into(),
                    points,
                },
            );
            result.pca = Some(model);
        }
        trees.insert(spec.name.clone(), t);
        experiments.push(result);
    }

    let mut features = Vec::with_capacity(usable.len() * 2);
    for (path, label, a) in &usable {
        features.push(FeatureRecord {
            path: path.clone(),
            label: label.clone(),
            kind: FeatureKind::Formants,
            values: vec![a.formants.f1, a.formants.f2],
        });
        features.push(FeatureRecord {
            path: path.clone(),
            label: label.clone(),
            kind: FeatureKind::Mfcc,
            values: a.mfcc.clone(),
        });
    }

    let report = ExperimentReport {
        manifest: manifest_path.to_string_lossy().into_owned(),
        config: cfg.clone(),
        seed: cfg.seed,
        counts,
        failures,
        formant_stats: formant_stats(&formant_rows),
        formant_stats_kept: formant_stats(kept.iter().map(|&i| &formant_rows[i])),
        outliers_by_label,
        experiments,
        plots,
    };
    Ok(RunArtifacts {
        report,
        features,
        trees,
    })
}

/// Kinds accepted by [`write_plots`].
pub const PLOT_KINDS: [&str; 2] = ["formants", "pca"];

/// Write the report's scatter plots of one kind; returns the files written.
pub fn write_plots(report: &ExperimentReport, kind: &str, out_dir: &Path) -> Result<Vec<PathBuf>, PipelineError> {
    if !PLOT_KINDS.contains(&kind) {
        return Err(PipelineError::Report(format!(
            "unknown plot kind {kind:?} (expected one of {})",
            PLOT_KINDS.join(", ")
        )));
    }
    let mut written = Vec::new();
    for (name, plot) in &report.plots {
        let matches = if kind == "pca" { name.starts_with("pca_") } else { name == kind };
        if !matches {
            continue;
        }
        let path = out_dir.join(format!("{name}.svg"));
        plot.write(&path).map_err(|source| PipelineError::Output {
            path: path.clone(),
            source,
        })?;
        written.push(path);
    }
    if written.is_empty() {
        return Err(PipelineError::Report(format!("report holds no {kind} data")));
    }
    Ok(written)
}

/// Emit report.json, report.md, run_meta.json, features.jsonl, trees and
/// plots into `out_dir`.
pub fn write_outputs(run: &RunArtifacts, out_dir: &Path, elapsed_s: f64) -> Result<(), PipelineError> {
    let io = |path: PathBuf| move |source| PipelineError::Output { path, source };
    std::fs::create_dir_all(out_dir).map_err(io(out_dir.to_path_buf()))?;
    let p = out_dir.join("report.json");
    std::fs::write(&p, run.report.canonical_json()).map_err(io(p.clone()))?;
    let p = out_dir.join("report.md");
    std::fs::write(&p, run.report.to_markdown()).map_err(io(p.clone()))?;
    let meta = serde_json::json!({
        "version": env!("CARGO_PKG_VERSION"),
        "finished_unix_s": std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        "elapsed_s": elapsed_s,
    });
    let p = out_dir.join("run_meta.json");
    std::fs::write(&p, format!("{meta:#}\n")).map_err(io(p.clone()))?;
    dataset::write_feature_cache(out_dir.join("features.jsonl"), &run.features)?;
    let trees = out_dir.join("trees");
    std::fs::create_dir_all(&trees).map_err(io(trees.clone()))?;
    for (name, t) in &run.trees {
        let p = trees.join(format!("{name}.jsonl"));
        let f = std::fs::File::create(&p).map_err(io(p.clone()))?;
        t.write_jsonl(std::io::BufWriter::new(f))
            .map_err(|e| PipelineError::Report(e.to_string()))?;
    }
    if run.report.config.plots {
        for kind in PLOT_KINDS {
            match write_plots(&run.report, kind, out_dir) {
                Ok(_) | Err(PipelineError::Report(_)) => {}
                Err(e) => return Err(e),
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roster_covers_five_comparisons() {
        let r = roster();
        assert_eq!(r.len(), 5);
        assert_eq!(r.iter().filter(|e| e.feature == Feature::Formants).count(), 1);
        for e in &r {
            assert!(e.labels.iter().all(|l| dataset::ipa(l).is_some()));
        }
    }

    #[test]
    fn counts_reconcile_check() {
        let c = Counts {
            loaded: 10,
            excluded_by_selection: 2,
            failed_extraction: 1,
            excluded: 3,
            outlier_discarded: 2,
            kept: 5,
        };
        assert!(c.reconciles());
        assert!(!Counts { kept: 4, ..c }.reconciles());
    }

    #[test]
    fn sort_keys_orders_nested_objects() {
        let v = serde_json::json!({"b": {"z": 1, "a": 2}, "a": [{"y": 1, "x": 2}]});
        let s = serde_json::to_string(&sort_keys(v)).unwrap();
        assert_eq!(s, r#"{"a":[{"x":2,"y":1}],"b":{"a":2,"z":1}}"#);
    }
}
