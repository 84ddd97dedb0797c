//! `vowelkit` command line: pipeline, per-file features, synthesis, plots.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use vowelkit::config::PipelineConfig;
use vowelkit::report::{self, ExperimentReport, PipelineError, Status};
use vowelkit::synth::{self, CorpusConfig};

#[derive(Parser)]
#[command(name = "vowelkit", version, about = "Vowel formant / MFCC features and decision-tree classification")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run every experiment over a corpus manifest and write a report.
    Pipeline {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Non-stratified split.
        #[arg(long)]
        no_stratify: bool,
        /// Worker threads (0 = all CPUs).
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Print F1 and F2 of one WAV file.
    Formants {
        file: PathBuf,
        #[arg(long)]
        json: bool,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Print the MFCC vector of one WAV file.
    Mfcc {
        file: PathBuf,
        #[arg(long)]
        json: bool,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Generate a synthetic vowel corpus with a manifest.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 150)]
        n: usize,
        #[arg(long, default_value_t = 40.0)]
        jitter: f64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value = "default")]
        preset: String,
        #[arg(long, default_value_t = 16000)]
        rate: u32,
        #[arg(long, default_value_t = 1.0)]
        duration: f64,
    },
    /// Re-emit scatter plots from a report.json.
    Plot {
        #[arg(long)]
        report: PathBuf,
        /// formants | pca
        #[arg(long)]
        kind: String,
        /// Defaults to the report's directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

struct Failure {
    code: u8,
    message: String,
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        Failure {
            code: e.exit_code() as u8,
            message: e.to_string(),
        }
    }
}

fn data_err(message: impl std::fmt::Display) -> Failure {
    Failure {
        code: 2,
        message: message.to_string(),
    }
}

fn load_config(path: Option<&Path>) -> Result<PipelineConfig, Failure> {
    match path {
        Some(p) => PipelineConfig::load(p).map_err(|e| Failure {
            code: 1,
            message: e.to_string(),
        }),
        None => Ok(PipelineConfig::default()),
    }
}

fn json_line(v: &serde_json::Value) {
    println!("{v}");
}

fn run(cmd: Cmd) -> Result<(), Failure> {
    match cmd {
        Cmd::Pipeline {
            manifest,
            out,
            seed,
            config,
            no_stratify,
            jobs,
        } => {
            let mut cfg = load_config(config.as_deref())?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if no_stratify {
                cfg.stratified = false;
            }
            if let Some(j) = jobs {
                cfg.parallelism = j;
            }
            let t0 = Instant::now();
            let run = report::run_pipeline(&manifest, &cfg)?;
            report::write_outputs(&run, &out, t0.elapsed().as_secs_f64())?;
            let r = &run.report;
            println!(
                "files: loaded {} excluded {} outliers {} kept {} (seed {})",
                r.counts.loaded, r.counts.excluded, r.counts.outlier_discarded, r.counts.kept, r.seed
            );
            for e in &r.experiments {
                match (&e.status, &e.eval) {
                    (Status::Ok, Some(ev)) => println!(
                        "{:<24} {:>6.1}%  (train {}, test {})",
                        e.spec.name, ev.accuracy, e.n_train, e.n_test
                    ),
                    _ => println!(
                        "{:<24} skipped: {}",
                        e.spec.name,
                        e.skip_reason.as_deref().unwrap_or("")
                    ),
                }
            }
            println!("report: {}", out.join("report.json").display());
        }
        Cmd::Formants { file, json, config } => {
            let cfg = load_config(config.as_deref())?;
            let (est, order) = report::analyze_formants(&file, &cfg)?;
            if json {
                json_line(&serde_json::json!({
                    "file": file.to_string_lossy(),
                    "f1_hz": est.f1,
                    "f2_hz": est.f2,
                    "bandwidths_hz": est.bandwidths,
                    "lpc_order": order,
                    "sample_rate": cfg.analysis_rate_hz,
                }));
            } else {
                println!("F1 {:.1} Hz  F2 {:.1} Hz  (LPC order {order})", est.f1, est.f2);
            }
        }
        Cmd::Mfcc { file, json, config } => {
            let cfg = load_config(config.as_deref())?;
            let coeffs = report::analyze_mfcc(&file, &cfg)?;
            if json {
                json_line(&serde_json::json!({
                    "file": file.to_string_lossy(),
                    "mfcc": coeffs,
                }));
            } else {
                let cells: Vec<String> = coeffs.iter().map(|c| format!("{c:.4}")).collect();
                println!("{}", cells.join(" "));
            }
        }
        Cmd::Synth {
            out,
            n,
            jitter,
            seed,
            preset,
            rate,
            duration,
        } => {
            let table = synth::preset(&preset).ok_or_else(|| Failure {
                code: 1,
                message: format!("unknown preset {preset:?}"),
            })?;
            let cfg = CorpusConfig {
                n_per_label: n,
                jitter_hz: jitter,
                seed,
                sample_rate: rate,
                duration,
                ..Default::default()
            };
            let (manifest, records) = synth::synth_corpus(&table, &out, &cfg).map_err(data_err)?;
            println!("{} files; manifest {}", records.len(), manifest.display());
        }
        Cmd::Plot { report: path, kind, out } => {
            let text = std::fs::read_to_string(&path).map_err(|e| data_err(format!("{}: {e}", path.display())))?;
            let r = ExperimentReport::from_json(&text)?;
            let dir = out.unwrap_or_else(|| path.parent().map(Path::to_path_buf).unwrap_or_default());
            let written = report::write_plots(&r, &kind, &dir).map_err(|e| match e {
                PipelineError::Report(m) if !report::PLOT_KINDS.contains(&kind.as_str()) => Failure { code: 1, message: m },
                other => other.into(),
            })?;
            for w in written {
                println!("{}", w.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
