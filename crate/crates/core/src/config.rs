//! Flat pipeline configuration, loadable from `key=value` lines or JSON.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::dataset::SplitSpec;
use crate::lpc::FormantConfig;
use crate::mfcc::MfccConfig;
use crate::preprocess::PrepConfig;
use crate::tree::TreeParams;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config line {line}: expected key=value")]
    Syntax { line: usize },
    #[error("config: {0}")]
    Invalid(String),
}

/// Every tunable of the pipeline under one flat key space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub analysis_rate_hz: u32,
    pub frame_duration_s: f64,
    pub silence_rel_threshold: f64,
    pub silence_chunk_ms: f64,
    pub lpc_order: Option<usize>,
    pub formant_min_hz: f64,
    pub formant_max_hz: f64,
    pub formant_max_bw_hz: f64,
    pub n_filters: usize,
    pub n_cep: usize,
    pub preemph: f64,
    pub low_hz: f64,
    pub high_hz: Option<f64>,
    pub log_floor: f64,
    pub outlier_k: f64,
    pub train_fraction: f64,
    pub seed: u64,
    pub stratified: bool,
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    /// Worker threads for feature extraction; 0 = available CPUs.
    pub parallelism: usize,
    pub plots: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let (p, f, m, s, t) = (
            PrepConfig::default(),
            FormantConfig::default(),
            MfccConfig::default(),
            SplitSpec::default(),
            TreeParams::default(),
        );
        Self {
            analysis_rate_hz: 10_000,
            frame_duration_s: p.frame_duration_s,
            silence_rel_threshold: p.silence_rel_threshold,
            silence_chunk_ms: p.silence_chunk_ms,
            lpc_order: f.lpc_order,
            formant_min_hz: f.formant_min_hz,
            formant_max_hz: f.formant_max_hz,
            formant_max_bw_hz: f.formant_max_bw_hz,
            n_filters: m.n_filters,
            n_cep: m.n_cep,
            preemph: m.preemph,
            low_hz: m.low_hz,
            high_hz: m.high_hz,
            log_floor: m.log_floor,
            outlier_k: 1.5,
            train_fraction: s.train_fraction,
            seed: s.seed,
            stratified: s.stratified,
            max_depth: t.max_depth,
            min_samples_split: t.min_samples_split,
            parallelism: 0,
            plots: true,
        }
    }
}

impl PipelineConfig {
    pub fn prep(&self) -> PrepConfig {
        PrepConfig {
            frame_duration_s: self.frame_duration_s,
            silence_rel_threshold: self.silence_rel_threshold,
            silence_chunk_ms: self.silence_chunk_ms,
        }
    }

    pub fn formant(&self) -> FormantConfig {
        FormantConfig {
            lpc_order: self.lpc_order,
            formant_min_hz: self.formant_min_hz,
            formant_max_hz: self.formant_max_hz,
            formant_max_bw_hz: self.formant_max_bw_hz,
        }
    }

    pub fn mfcc(&self) -> MfccConfig {
        MfccConfig {
            n_filters: self.n_filters,
            n_cep: self.n_cep,
            preemph: self.preemph,
            low_hz: self.low_hz,
            high_hz: self.high_hz,
            log_floor: self.log_floor,
        }
    }

    pub fn split(&self) -> SplitSpec {
        SplitSpec {
            train_fraction: self.train_fraction,
            seed: self.seed,
            stratified: self.stratified,
        }
    }

    pub fn tree(&self) -> TreeParams {
        TreeParams {
            max_depth: self.max_depth,
            min_samples_split: self.min_samples_split,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        if self.analysis_rate_hz == 0 {
            return bad("analysis_rate_hz must be > 0");
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return bad("train_fraction must lie in (0, 1)");
        }
        if !(self.outlier_k > 0.0) {
            return bad("outlier_k must be > 0");
        }
        if !(self.frame_duration_s > 0.0) {
            return bad("frame_duration_s must be > 0");
        }
        if self.n_cep == 0 || self.n_cep >= self.n_filters {
            return bad("n_cep must lie in 1..n_filters (index 0 is dropped)");
        }
        Ok(())
    }

    /// Parse either a JSON object or `key = value` lines (`#` comments).
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let map = if text.trim_start().starts_with('{') {
            match serde_json::from_str::<Value>(text) {
                Ok(Value::Object(m)) => m,
                Ok(_) => return Err(ConfigError::Invalid("expected a JSON object".into())),
                Err(e) => return Err(ConfigError::Invalid(e.to_string())),
            }
        } else {
            parse_key_values(text)?
        };
        let map: Map<String, Value> = map.into_iter().map(|(k, v)| (k.clone(), normalize(&k, v))).collect();
        let cfg: Self =
            serde_json::from_value(Value::Object(map)).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }
}

fn parse_key_values(text: &str) -> Result<Map<String, Value>, ConfigError> {
    let mut map = Map::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or(ConfigError::Syntax { line: n + 1 })?;
        let v = v.trim();
        // Numbers, booleans and null parse as JSON; anything else is a string.
        let value = serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.to_string()));
        map.insert(k.trim().to_string(), value);
    }
    Ok(map)
}

/// `auto` / `none` spellings for the optional keys.
fn normalize(key: &str, v: Value) -> Value {
    let optional = matches!(key, "lpc_order" | "high_hz" | "max_depth");
    match &v {
        Value::String(s) if optional && matches!(s.as_str(), "auto" | "none" | "nyquist") => Value::Null,
        _ => v,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn key_value_and_json_agree() {
        let kv = PipelineConfig::parse("# comment\nseed = 7\nlpc_order = auto\nstratified=false\nmax_depth = 5\n").unwrap();
        let js = PipelineConfig::parse(r#"{"seed": 7, "lpc_order": null, "stratified": false, "max_depth": 5}"#).unwrap();
        assert_eq!(kv, js);
        assert_eq!(kv.seed, 7);
        assert_eq!(kv.tree().max_depth, Some(5));
        assert_eq!(kv.analysis_rate_hz, 10_000);
    }

    #[test]
    fn defaults_mirror_module_defaults() {
        let c = PipelineConfig::default();
        assert_eq!(c.prep(), PrepConfig::default());
        assert_eq!(c.formant(), FormantConfig::default());
        assert_eq!(c.mfcc(), MfccConfig::default());
        assert_eq!(c.split(), SplitSpec::default());
        assert_eq!(c.tree(), TreeParams::default());
        assert_eq!(PipelineConfig::parse("").unwrap(), c);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(PipelineConfig::parse("seed"), Err(ConfigError::Syntax { line: 1 })));
        assert!(matches!(PipelineConfig::parse("no_such_key = 1"), Err(ConfigError::Invalid(_))));
        assert!(matches!(PipelineConfig::parse("train_fraction = 1.0"), Err(ConfigError::Invalid(_))));
        assert!(matches!(PipelineConfig::parse("[1, 2]"), Err(ConfigError::Syntax { .. })));
        assert!(matches!(PipelineConfig::parse("n_cep = 12").map(|c| c.n_cep), Ok(12)));
    }
}
