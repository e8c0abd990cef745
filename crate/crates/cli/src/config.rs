use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rcmdp::envs::build_inventory_mdp;
use rcmdp::{build_chain_mdp, BudgetRule, InventorySpec, Mdp, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Where the experiment's MDP comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Environment {
    Inventory(InventorySpec),
    Chain {
        n_states: usize,
        slip: f64,
        discount: f64,
    },
    /// An MDP document; relative paths are resolved against the config file.
    File { path: PathBuf },
}

impl Default for Environment {
    fn default() -> Self {
        Environment::Inventory(InventorySpec::default())
    }
}

impl Environment {
    pub fn build(&self) -> Result<Mdp, CliError> {
        match self {
            Environment::Inventory(spec) => Ok(build_inventory_mdp(spec)?),
            Environment::Chain { n_states, slip, discount } => Ok(build_chain_mdp(*n_states, *slip, *discount)?),
            Environment::File { path } => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::Usage(format!("cannot read MDP file {}: {e}", path.display())))?;
                Mdp::from_json(&text).map_err(|e| CliError::Usage(format!("bad MDP file {}: {e}", path.display())))
            }
        }
    }

    /// Budget rule of the environment, if it carries one.
    fn budget(&self) -> Option<BudgetRule> {
        match self {
            Environment::Inventory(spec) => Some(spec.budget),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub n_per_pair: u64,
    pub delta: f64,
    /// Laplace pseudo-count added to every next-state count.
    pub smoothing: f64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self { n_per_pair: 100, delta: 0.9, smoothing: 0.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    /// Monte-Carlo rollouts per model and seed.
    pub rollouts: usize,
    /// Rollout length; falls back to the training horizon.
    pub horizon: Option<usize>,
    /// Relative slack on `d0` when flagging constraint satisfaction.
    pub tolerance: f64,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self { rollouts: 1000, horizon: None, tolerance: 0.05 }
    }
}

/// The three trained variants.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Nonrobust,
    Robust,
    RobustConstrained,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Nonrobust, Variant::Robust, Variant::RobustConstrained];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Nonrobust => "nonrobust",
            Variant::Robust => "robust",
            Variant::RobustConstrained => "robust-constrained",
        }
    }

    pub fn mode(self) -> rcmdp::Mode {
        match self {
            Variant::Nonrobust => rcmdp::Mode::NonRobustUnconstrained,
            Variant::Robust => rcmdp::Mode::RobustUnconstrained,
            Variant::RobustConstrained => rcmdp::Mode::RobustConstrained,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| format!("unknown variant `{s}`"))
    }
}

/// Per-variant patches merged field by field over `train`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VariantOverrides {
    pub nonrobust: serde_json::Map<String, serde_json::Value>,
    pub robust: serde_json::Map<String, serde_json::Value>,
    #[serde(rename = "robust-constrained")]
    pub robust_constrained: serde_json::Map<String, serde_json::Value>,
}

impl VariantOverrides {
    fn get(&self, variant: Variant) -> &serde_json::Map<String, serde_json::Value> {
        match variant {
            Variant::Nonrobust => &self.nonrobust,
            Variant::Robust => &self.robust,
            Variant::RobustConstrained => &self.robust_constrained,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub environment: Environment,
    #[serde(default)]
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub overrides: VariantOverrides,
    /// Overrides the environment's own budget rule. Without either, `train.d0` is used.
    #[serde(default)]
    pub budget: Option<BudgetRule>,
    #[serde(default)]
    pub evaluation: EvaluationConfig,
    pub seeds: Vec<u64>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("results")
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let config: RunConfig =
            serde_json::from_str(text).map_err(|e| CliError::Usage(format!("invalid config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    /// Reads a config file; relative MDP file paths become relative to it.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let mut config = Self::from_json(&text)?;
        if let Environment::File { path: mdp_path } = &mut config.environment {
            if mdp_path.is_relative() {
                if let Some(dir) = path.parent() {
                    *mdp_path = dir.join(&*mdp_path);
                }
            }
        }
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let usage = |m: String| Err(CliError::Usage(m));
        if self.seeds.is_empty() {
            return usage("at least one seed is required".into());
        }
        let delta = self.dataset.delta;
        if !(delta > 0.0 && delta < 1.0) {
            return usage(format!("dataset.delta must lie in (0,1), got {delta}"));
        }
        if self.dataset.n_per_pair == 0 {
            return usage("dataset.n_per_pair must be positive".into());
        }
        if !(self.dataset.smoothing >= 0.0) || !self.dataset.smoothing.is_finite() {
            return usage("dataset.smoothing must be finite and nonnegative".into());
        }
        if self.evaluation.rollouts == 0 {
            return usage("evaluation.rollouts must be positive".into());
        }
        if !(self.evaluation.tolerance >= 0.0) {
            return usage("evaluation.tolerance must be nonnegative".into());
        }
        for variant in Variant::ALL {
            self.train_config(variant, 0.0)?;
        }
        Ok(())
    }

    pub fn budget_rule(&self) -> BudgetRule {
        self.budget
            .or_else(|| self.environment.budget())
            .unwrap_or(BudgetRule::Fixed { d0: self.train.d0 })
    }

    pub fn evaluation_horizon(&self, variant: Variant) -> Result<usize, CliError> {
        Ok(match self.evaluation.horizon {
            Some(h) => h,
            None => self.train_config(variant, 0.0)?.horizon,
        })
    }

    /// Training config for one variant with its overrides, mode and `d0` applied.
    pub fn train_config(&self, variant: Variant, d0: f64) -> Result<TrainConfig, CliError> {
        let mut value = serde_json::to_value(&self.train).map_err(|e| CliError::Usage(e.to_string()))?;
        if let serde_json::Value::Object(base) = &mut value {
            for (k, v) in self.overrides.get(variant) {
                base.insert(k.clone(), v.clone());
            }
        }
        let mut config: TrainConfig = serde_json::from_value(value)
            .map_err(|e| CliError::Usage(format!("invalid {variant} overrides: {e}")))?;
        config.mode = variant.mode();
        config.d0 = d0;
        config.validate().map_err(|e| CliError::Usage(format!("{variant}: {e}")))?;
        Ok(config)
    }
}
