//! Experiment configuration: a TOML document with one section per stage.

use std::fmt;
use std::path::{Path, PathBuf};

use pricer_core::benchmark::PdeGrid;
use pricer_core::kernel_learner::TrainConfig;
use pricer_core::market_data::{steps_for_maturity, ImpliedVolFn};
use pricer_core::neural::{Activation, MlpSpec, OptimizerConfig, OptimizerKind, Schedule};
use pricer_core::{OptionKind, OptionSpec, SdeModel};
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Output directory, relative to the working directory.
    pub output: PathBuf,
    pub model: ModelSection,
    pub data: DataSection,
    pub market: MarketSection,
    pub kernel: KernelSection,
    pub options: Vec<OptionSection>,
    #[serde(default)]
    pub benchmark: BenchmarkSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSection {
    Cir {
        a: f64,
        b: f64,
        sigma0: f64,
    },
    Glv {
        a: f64,
        b: f64,
        /// Quadratic smile coefficients `(c2, c1, c0)`.
        quad: [f64; 3],
        /// Knees `(k_lo, k_hi)` of the smile.
        knees: [f64; 2],
        /// Flat levels below and above the knees.
        flat: [f64; 2],
        t_star: f64,
        r_star: f64,
    },
    Gbm {
        mu: f64,
        sigma: f64,
    },
}

impl ModelSection {
    pub fn build(&self) -> pricer_core::Result<SdeModel> {
        match *self {
            ModelSection::Cir { a, b, sigma0 } => SdeModel::cir(a, b, sigma0),
            ModelSection::Glv {
                a,
                b,
                quad,
                knees,
                flat,
                t_star,
                r_star,
            } => {
                let iv = ImpliedVolFn::new(
                    (quad[0], quad[1], quad[2]),
                    knees[0],
                    knees[1],
                    flat[0],
                    flat[1],
                )?;
                SdeModel::glv(a, b, iv, t_star, r_star)
            }
            ModelSection::Gbm { mu, sigma } => SdeModel::gbm(mu, sigma),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub s0: f64,
    pub dt: f64,
    /// Number of simulated increments.
    pub steps: usize,
    /// Offset between the starts of consecutive windows.
    pub stride: usize,
    pub seed: u64,
    /// Read this price file instead of simulating.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prices: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketSection {
    /// Riskless rate per year.
    pub rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActivationName {
    Relu,
    LeakyRelu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerName {
    Adam,
    Sgd,
}

/// Network and optimizer settings of one training phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingSection {
    pub layers: usize,
    pub width: usize,
    pub activation: ActivationName,
    #[serde(default)]
    pub residual: bool,
    pub episodes: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub optimizer: OptimizerName,
    pub learning_rate: f64,
    #[serde(default)]
    pub schedule: Schedule,
    #[serde(default = "yes")]
    pub standardize_inputs: bool,
}

fn yes() -> bool {
    true
}

impl TrainingSection {
    pub fn train_config(
        &self,
        input_dim: usize,
        rate: f64,
        validate_every: usize,
    ) -> pricer_core::Result<TrainConfig> {
        let activation = match self.activation {
            ActivationName::Relu => Activation::Relu,
            ActivationName::LeakyRelu => Activation::leaky(),
        };
        let kind = match self.optimizer {
            OptimizerName::Adam => OptimizerKind::default(),
            OptimizerName::Sgd => OptimizerKind::Sgd,
        };
        let cfg = TrainConfig {
            network: MlpSpec::uniform(
                input_dim,
                self.layers,
                self.width,
                activation,
                self.residual,
            )?,
            episodes: self.episodes,
            batch_size: self.batch_size,
            riskless_rate: rate,
            seed: self.seed,
            optimizer: OptimizerConfig {
                kind,
                learning_rate: self.learning_rate,
                schedule: self.schedule,
            },
            validate_every,
            standardize_inputs: self.standardize_inputs,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSection {
    /// Window length in years; rounded to a whole number of steps.
    pub horizon: f64,
    /// Independent paths from `data.s0` used for the validation loss curve.
    pub validation_paths: usize,
    pub validation_seed: u64,
    pub validate_every: usize,
    pub training: TrainingSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptionSection {
    /// Artifact name, e.g. `call` gives `value_call.json`.
    pub name: String,
    pub kind: OptionKind,
    pub strike: f64,
    pub maturity: f64,
    /// Train only on windows whose head is within this distance of the strike.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub head_band: Option<f64>,
    pub training: TrainingSection,
    /// Also learn the surface `V(t, s)` with these settings.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub surface: Option<TrainingSection>,
}

impl OptionSection {
    pub fn spec(&self) -> pricer_core::Result<OptionSpec> {
        OptionSpec::new(self.kind, self.strike, self.maturity)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkSection {
    #[serde(default)]
    pub grid: PdeGrid,
    /// Moneyness range of the call implied-vol curve.
    pub call_range: [f64; 2],
    /// Moneyness range of the put implied-vol curve.
    pub put_range: [f64; 2],
    pub points: usize,
    pub mc_paths: usize,
    pub mc_seed: u64,
    /// Paths of the theoretical log-utility value.
    pub oracle_paths: usize,
    pub oracle_seed: u64,
}

impl Default for BenchmarkSection {
    fn default() -> Self {
        Self {
            grid: PdeGrid::default(),
            call_range: [0.85, 1.0],
            put_range: [1.0, 1.15],
            points: 31,
            mc_paths: 100_000,
            mc_seed: 5,
            oracle_paths: 25_600,
            oracle_seed: 99,
        }
    }
}

/// One configuration problem, located by its dotted key path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Finding {
    pub path: String,
    pub message: String,
}

impl Finding {
    fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

/// Whole number of steps for a nominal maturity and the horizon it implies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Horizon {
    pub nominal: f64,
    pub steps: usize,
    pub effective: f64,
}

impl Horizon {
    pub fn new(nominal: f64, dt: f64) -> pricer_core::Result<Self> {
        let steps = steps_for_maturity(nominal, dt)?;
        Ok(Self {
            nominal,
            steps,
            effective: steps as f64 * dt,
        })
    }

    pub fn is_rounded(&self) -> bool {
        (self.effective - self.nominal).abs() > 1e-12 * self.nominal.abs().max(1.0)
    }
}

impl fmt::Display for Horizon {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "T = {} uses {} steps, so T_eff = {}",
            self.nominal, self.steps, self.effective
        )
    }
}

impl ExperimentConfig {
    /// Reads a config file and applies `key=value` overrides.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text, overrides)
    }

    pub fn parse(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: Table = text
            .parse()
            .map_err(|e: toml::de::Error| CliError::validation("config", e.message()))?;
        let mut findings = Vec::new();
        for item in overrides {
            if let Err(f) = apply_override(&mut table, item) {
                findings.push(f);
            }
        }
        if !findings.is_empty() {
            return Err(CliError::Validation(findings));
        }
        Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::validation("config", e.message()))
    }

    /// Canonical text of the effective configuration.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is representable as TOML")
    }

    pub fn kernel_horizon(&self) -> pricer_core::Result<Horizon> {
        Horizon::new(self.kernel.horizon, self.data.dt)
    }

    /// Every violation in the configuration; empty when it is usable.
    pub fn findings(&self, base: &Path) -> Vec<Finding> {
        let mut out = Vec::new();
        if let Err(e) = self.model.build() {
            let path = match (&self.model, e.to_string().contains("Feller")) {
                (ModelSection::Cir { .. }, true) => "model.sigma0",
                _ => "model",
            };
            out.push(Finding::new(path, e.to_string()));
        }

        let d = &self.data;
        if !(d.s0 > 0.0 && d.s0.is_finite()) {
            out.push(Finding::new(
                "data.s0",
                format!("must be positive, got {}", d.s0),
            ));
        }
        if !(d.dt > 0.0 && d.dt.is_finite()) {
            out.push(Finding::new(
                "data.dt",
                format!("must be positive, got {}", d.dt),
            ));
        }
        if d.steps == 0 && d.prices.is_none() {
            out.push(Finding::new("data.steps", "must be at least 1"));
        }
        if d.stride == 0 {
            out.push(Finding::new("data.stride", "must be at least 1"));
        }
        if let Some(p) = &d.prices {
            if !base.join(p).is_file() {
                out.push(Finding::new(
                    "data.prices",
                    format!("file {} does not exist", base.join(p).display()),
                ));
            }
        }
        if !self.market.rate.is_finite() {
            out.push(Finding::new("market.rate", "must be finite"));
        }

        let k = &self.kernel;
        if d.dt > 0.0 {
            if let Err(e) = Horizon::new(k.horizon, d.dt) {
                out.push(Finding::new("kernel.horizon", e.to_string()));
            }
        }
        if k.validation_paths == 0 {
            out.push(Finding::new(
                "kernel.validation_paths",
                "must be at least 1",
            ));
        }
        training_findings(
            "kernel.training",
            &k.training,
            1,
            self.market.rate,
            &mut out,
        );

        if self.options.is_empty() {
            out.push(Finding::new("options", "at least one option is required"));
        }
        for (i, o) in self.options.iter().enumerate() {
            let at = |key: &str| format!("options.{i}.{key}");
            if o.name.is_empty()
                || !o
                    .name
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
            {
                out.push(Finding::new(
                    at("name"),
                    format!("must be a non-empty file-name stem, got {:?}", o.name),
                ));
            }
            if self.options[..i].iter().any(|p| p.name == o.name) {
                out.push(Finding::new(
                    at("name"),
                    format!("duplicate option name {:?}", o.name),
                ));
            }
            if !(o.strike > 0.0 && o.strike.is_finite()) {
                out.push(Finding::new(
                    at("strike"),
                    format!("must be positive, got {}", o.strike),
                ));
            }
            if !(o.maturity > 0.0 && o.maturity.is_finite()) {
                out.push(Finding::new(
                    at("maturity"),
                    format!("must be positive, got {}", o.maturity),
                ));
            } else if d.dt > 0.0 {
                if let Err(e) = Horizon::new(o.maturity, d.dt) {
                    out.push(Finding::new(at("maturity"), e.to_string()));
                }
            }
            if let Some(band) = o.head_band {
                if !(band > 0.0) {
                    out.push(Finding::new(
                        at("head_band"),
                        format!("must be positive, got {band}"),
                    ));
                }
            }
            training_findings(&at("training"), &o.training, 1, self.market.rate, &mut out);
            if let Some(s) = &o.surface {
                training_findings(&at("surface"), s, 2, self.market.rate, &mut out);
            }
        }

        let b = &self.benchmark;
        if let Some(o) = self.options.first() {
            if o.strike > 0.0 {
                if let Err(e) = b.grid.validate(o.strike) {
                    out.push(Finding::new("benchmark.grid", e.to_string()));
                }
            }
        }
        for (key, r) in [
            ("benchmark.call_range", b.call_range),
            ("benchmark.put_range", b.put_range),
        ] {
            if !(r[0] > 0.0 && r[0] < r[1] && r[1].is_finite()) {
                out.push(Finding::new(key, format!("needs 0 < lo < hi, got {r:?}")));
            }
        }
        if b.points < 2 {
            out.push(Finding::new("benchmark.points", "must be at least 2"));
        }
        if b.mc_paths < 2 {
            out.push(Finding::new("benchmark.mc_paths", "must be at least 2"));
        }
        if b.oracle_paths < 2 {
            out.push(Finding::new("benchmark.oracle_paths", "must be at least 2"));
        }
        out
    }

    /// Nominal horizons that do not fall on the time grid.
    pub fn rounding_notes(&self) -> Vec<String> {
        let mut notes = Vec::new();
        if let Ok(h) = self.kernel_horizon() {
            if h.is_rounded() {
                notes.push(format!("kernel.horizon: {h}"));
            }
        }
        for (i, o) in self.options.iter().enumerate() {
            if let Ok(h) = Horizon::new(o.maturity, self.data.dt) {
                if h.is_rounded() {
                    notes.push(format!("options.{i}.maturity: {h}"));
                }
            }
        }
        notes
    }

    pub fn option(&self, name: &str) -> Option<&OptionSection> {
        self.options.iter().find(|o| o.name == name)
    }
}

fn training_findings(
    path: &str,
    t: &TrainingSection,
    input_dim: usize,
    rate: f64,
    out: &mut Vec<Finding>,
) {
    if t.episodes == 0 {
        out.push(Finding::new(
            format!("{path}.episodes"),
            "must be at least 1",
        ));
    }
    if let Err(e) = t.train_config(input_dim, rate, 0) {
        out.push(Finding::new(path.to_string(), e.to_string()));
    }
}

/// Sets a dotted key (`options.0.strike`) to a TOML value; bare words that do
/// not parse as TOML are taken as strings.
fn apply_override(table: &mut Table, item: &str) -> std::result::Result<(), Finding> {
    let Some((key, raw)) = item.split_once('=') else {
        return Err(Finding::new(item, "override must look like key=value"));
    };
    let key = key.trim();
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Finding::new(key, "empty key segment"));
    }
    set_in_table(table, &parts, parse_value(raw.trim()), key)
}

fn set_in_table(
    table: &mut Table,
    parts: &[&str],
    value: Value,
    key: &str,
) -> std::result::Result<(), Finding> {
    let (head, rest) = parts.split_first().expect("at least one segment");
    if rest.is_empty() {
        table.insert(head.to_string(), value);
        return Ok(());
    }
    let node = table
        .entry(head.to_string())
        .or_insert_with(|| Value::Table(Table::new()));
    set_in_value(node, rest, value, key)
}

fn set_in_value(
    node: &mut Value,
    parts: &[&str],
    value: Value,
    key: &str,
) -> std::result::Result<(), Finding> {
    match node {
        Value::Table(t) => set_in_table(t, parts, value, key),
        Value::Array(items) => {
            let idx: usize = parts[0]
                .parse()
                .map_err(|_| Finding::new(key, format!("{:?} is not a list index", parts[0])))?;
            let len = items.len();
            let slot = items.get_mut(idx).ok_or_else(|| {
                Finding::new(
                    key,
                    format!("index {idx} is out of range for a list of {len}"),
                )
            })?;
            if parts.len() == 1 {
                *slot = value;
                Ok(())
            } else {
                set_in_value(slot, &parts[1..], value, key)
            }
        }
        _ => Err(Finding::new(key, "a parent of this key is not a section")),
    }
}

fn parse_value(raw: &str) -> Value {
    let doc = format!("v = {raw}");
    match doc.parse::<Table>() {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => Value::String(raw.to_string()),
    }
}
