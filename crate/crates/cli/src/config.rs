//! TOML configuration with dotted sections and `key=value` overrides.
//!
//! ```toml
//! include_drifted = false
//!
//! [synth]
//! seed = 7
//! noise.miss_rate = 0.2
//!
//! [tracking]
//! min_match_ratio = 0.5
//! ```
//!
//! Sections: `synth`, `fusion`, `tracking`, `scoring`, `prune`, `localize`,
//! `eval`. Unknown keys are rejected.

use std::fs;
use std::path::Path;

use actube_core::eval::EvalConfig;
use actube_core::pipeline::{FusionConfig, LocalizeConfig, PipelineConfig, PruneConfig, ScoringConfig, TrackingConfig};
use actube_core::synth::ScenarioConfig;
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub synth: ScenarioConfig,
    pub fusion: FusionConfig,
    pub tracking: TrackingConfig,
    pub scoring: ScoringConfig,
    pub prune: PruneConfig,
    pub localize: LocalizeConfig,
    pub eval: EvalConfig,
    pub include_drifted: bool,
}

impl Config {
    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            fusion: self.fusion,
            tracking: self.tracking,
            scoring: self.scoring,
            prune: self.prune,
            localize: self.localize,
            eval: self.eval.clone(),
            include_drifted: self.include_drifted,
        }
    }

    pub fn validate(&self) -> CliResult<()> {
        let err = |e: actube_core::Error| CliError::Config(e.to_string());
        self.synth.validate().map_err(err)?;
        self.pipeline().validate().map_err(err)
    }

    /// Reads `path` (defaults when absent), then applies the overrides in
    /// order.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> CliResult<Self> {
        let mut table = match path {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
                text.parse::<Table>()
                    .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
            }
            None => Table::new(),
        };
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg = Config::deserialize(Value::Table(table)).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Sets a dotted key. The value is parsed as TOML and taken as a bare string
/// when that fails.
pub fn apply_override(table: &mut Table, assignment: &str) -> CliResult<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override {assignment:?} is not key=value")))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Config(format!("override key {key:?} is malformed")));
    }
    let value = format!("v = {}", raw.trim())
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.trim().to_string()));
    let (last, path) = parts.split_last().expect("split yields at least one part");
    let mut cur = table;
    for p in path {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| Value::Table(Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("override {key:?}: {p} is not a section")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}
