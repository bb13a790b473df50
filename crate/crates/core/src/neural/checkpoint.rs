use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::mlp::{MlpModel, MlpSpec};
use crate::error::{Error, Result};
use crate::market_data::OptionSpec;

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Policy,
    ValueV0,
    ValueSurface,
}

impl std::fmt::Display for Role {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Role::Policy => "policy",
            Role::ValueV0 => "value_v0",
            Role::ValueSurface => "value_surface",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainingMetadata {
    pub episodes: usize,
    pub final_loss: Option<f64>,
    pub seed: u64,
    #[serde(default)]
    pub batch_size: Option<usize>,
    #[serde(default)]
    pub rate: Option<f64>,
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default)]
    pub n_steps: Option<usize>,
}

/// Versioned on-disk form of a trained network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub role: Role,
    pub spec: MlpSpec,
    pub params: Vec<f64>,
    pub metadata: TrainingMetadata,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub option: Option<OptionSpec>,
}

impl Checkpoint {
    pub fn new(role: Role, model: &MlpModel, metadata: TrainingMetadata) -> Self {
        Self {
            format_version: CHECKPOINT_FORMAT_VERSION,
            role,
            spec: model.spec().clone(),
            params: model.params().to_vec(),
            metadata,
            option: None,
        }
    }

    pub fn with_option(mut self, option: OptionSpec) -> Self {
        self.option = Some(option);
        self
    }

    pub fn model(&self) -> Result<MlpModel> {
        MlpModel::from_params(self.spec.clone(), self.params.clone())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_str(text)?;
        if ck.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint format version {}",
                ck.format_version
            )));
        }
        ck.model()?;
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    /// Loads and checks the role tag.
    pub fn load_role(path: &Path, role: Role) -> Result<Self> {
        let ck = Self::load(path)?;
        if ck.role != role {
            return Err(Error::Checkpoint(format!(
                "{} holds a {} checkpoint, expected {role}",
                path.display(),
                ck.role
            )));
        }
        Ok(ck)
    }
}
