//! `manifest.json`: what produced the contents of an output directory.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonRecord {
    pub name: String,
    pub nominal: f64,
    pub steps: usize,
    pub effective: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Manifest {
    /// SHA-256 of the effective configuration text below.
    pub config_sha256: String,
    pub config: String,
    pub seeds: BTreeMap<String, u64>,
    pub horizons: Vec<HorizonRecord>,
    /// Commands run against this directory, oldest first.
    pub commands: Vec<String>,
    /// SHA-256 of every other file in the directory.
    pub artifacts: BTreeMap<String, String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl Manifest {
    pub fn load(dir: &Path) -> Result<Option<Self>> {
        let path = dir.join(MANIFEST_FILE);
        if !path.exists() {
            return Ok(None);
        }
        let text = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
        let manifest = serde_json::from_str(&text).map_err(pricer_core::Error::from)?;
        Ok(Some(manifest))
    }

    /// Records `command`, refreshes the configuration fields and rehashes
    /// the directory.
    pub fn update(dir: &Path, config: &ExperimentConfig, command: &str) -> Result<Self> {
        let mut manifest = Self::load(dir)?.unwrap_or_default();
        let text = config.to_toml();
        manifest.config_sha256 = sha256_hex(text.as_bytes());
        manifest.config = text;
        manifest.seeds = seeds(config);
        manifest.horizons = horizons(config);
        manifest.commands.push(command.to_string());
        manifest.artifacts = hash_dir(dir)?;
        let path = dir.join(MANIFEST_FILE);
        let json = serde_json::to_string_pretty(&manifest).map_err(pricer_core::Error::from)?;
        fs::write(&path, json + "\n").map_err(|e| CliError::io(&path, e))?;
        Ok(manifest)
    }
}

fn seeds(config: &ExperimentConfig) -> BTreeMap<String, u64> {
    let mut out = BTreeMap::new();
    out.insert("data.seed".into(), config.data.seed);
    out.insert("kernel.training.seed".into(), config.kernel.training.seed);
    out.insert(
        "kernel.validation_seed".into(),
        config.kernel.validation_seed,
    );
    for o in &config.options {
        out.insert(format!("options.{}.training.seed", o.name), o.training.seed);
        if let Some(s) = &o.surface {
            out.insert(format!("options.{}.surface.seed", o.name), s.seed);
        }
    }
    out.insert("benchmark.mc_seed".into(), config.benchmark.mc_seed);
    out.insert("benchmark.oracle_seed".into(), config.benchmark.oracle_seed);
    out
}

fn horizons(config: &ExperimentConfig) -> Vec<HorizonRecord> {
    let mut out = Vec::new();
    let mut push = |name: String, nominal: f64| {
        if let Ok(h) = crate::config::Horizon::new(nominal, config.data.dt) {
            out.push(HorizonRecord {
                name,
                nominal,
                steps: h.steps,
                effective: h.effective,
            });
        }
    };
    push("kernel".into(), config.kernel.horizon);
    for o in &config.options {
        push(o.name.clone(), o.maturity);
    }
    out
}

fn hash_dir(dir: &Path) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    let entries = fs::read_dir(dir).map_err(|e| CliError::io(dir, e))?;
    for entry in entries {
        let entry = entry.map_err(|e| CliError::io(dir, e))?;
        let path = entry.path();
        let name = entry.file_name().to_string_lossy().into_owned();
        if name == MANIFEST_FILE || !path.is_file() {
            continue;
        }
        let bytes = fs::read(&path).map_err(|e| CliError::io(&path, e))?;
        out.insert(name, sha256_hex(&bytes));
    }
    Ok(out)
}
