//! Run configuration: a TOML file mirroring the training and evaluation
//! configs plus paths. Any field can be overridden with `--set key=value`
//! using dotted paths, e.g. `--set train.model.dim=64`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tat_core::{EvalConfig, TrainConfig};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Dataset directory holding `manifest.csv`, `tracks/` and `features/`.
    pub data_dir: PathBuf,
    pub checkpoint: PathBuf,
    /// JSONL training log.
    pub log: PathBuf,
    /// Evaluation result JSON.
    pub result: PathBuf,
    /// Output directory of ablation sweeps.
    pub ablation_dir: PathBuf,
    pub train: TrainConfig,
    pub eval: EvalConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data_dir: "data".into(),
            checkpoint: "model.tatc".into(),
            log: "train.jsonl".into(),
            result: "eval.json".into(),
            ablation_dir: "ablation".into(),
            train: TrainConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

fn parse_scalar(raw: &str) -> toml::Value {
    // anything TOML can read as a value, otherwise a bare string
    match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

fn set_path(root: &mut toml::Table, assignment: &str) -> Result<(), CliError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("--set expects key=value, got '{assignment}'")))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    let (last, parents) = parts.split_last().expect("split yields one part");
    let mut table = root;
    for p in parents {
        let entry = table
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Usage(format!("--set {key}: '{p}' is not a table")))?;
    }
    table.insert(last.to_string(), parse_scalar(raw.trim()));
    Ok(())
}

/// Loads `path` (or defaults), applies `--set` overrides and resolves
/// relative paths against the config file's directory.
pub fn load(path: Option<&Path>, sets: &[String]) -> Result<RunConfig, CliError> {
    let (mut table, base) = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|_| CliError::Usage(format!("config not found: {}", p.display())))?;
            let table: toml::Table = text
                .parse()
                .map_err(|e| CliError::Usage(format!("invalid config {}: {e}", p.display())))?;
            (table, p.parent().map(Path::to_path_buf).unwrap_or_default())
        }
        None => (toml::Table::new(), PathBuf::new()),
    };
    for s in sets {
        set_path(&mut table, s)?;
    }
    let mut cfg: RunConfig = RunConfig::deserialize(toml::Value::Table(table))
        .map_err(|e| CliError::Usage(format!("invalid config: {e}")))?;
    for p in [
        &mut cfg.data_dir,
        &mut cfg.checkpoint,
        &mut cfg.log,
        &mut cfg.result,
        &mut cfg.ablation_dir,
    ] {
        if p.is_relative() {
            *p = base.join(&*p);
        }
    }
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dotted_overrides() {
        let cfg = load(None, &["train.model.dim=48".into(), "train.pipeline.no_points=true".into(), "data_dir=/x".into()]).unwrap();
        assert_eq!(cfg.train.model.dim, 48);
        assert!(cfg.train.pipeline.no_points);
        assert_eq!(cfg.data_dir, PathBuf::from("/x"));
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(load(None, &["train.bogus=1".into()]).is_err());
        assert!(load(None, &["nonsense".into()]).is_err());
    }

    #[test]
    fn round_trips_through_toml() {
        let text = toml::to_string(&RunConfig::default()).unwrap();
        let parsed: RunConfig = toml::from_str(&text).unwrap();
        assert_eq!(parsed, RunConfig::default());
    }
}
