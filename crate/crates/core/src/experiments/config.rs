use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{param_err, validation_err, Result};
use crate::mdp::{CounterexampleParams, GarnetParams};
use crate::training::{OptimizerKind, TrainingConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    GarnetSweep,
    Counterexample,
    OpeTrace,
    Diagnose,
}

/// Representation learners compared by the sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Algorithm {
    Krope,
    Fqe,
    FqeKrope,
    FqeDr3,
    FqeBeer,
    Bcrl,
    BcrlExp,
    /// Factorised exact kernel fixed point, truncated to rank `d`.
    ExactKrope,
}

impl Algorithm {
    pub const ALL: [Algorithm; 8] = [
        Algorithm::Krope,
        Algorithm::Fqe,
        Algorithm::FqeKrope,
        Algorithm::FqeDr3,
        Algorithm::FqeBeer,
        Algorithm::Bcrl,
        Algorithm::BcrlExp,
        Algorithm::ExactKrope,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Algorithm::Krope => "krope",
            Algorithm::Fqe => "fqe",
            Algorithm::FqeKrope => "fqe+krope",
            Algorithm::FqeDr3 => "fqe+dr3",
            Algorithm::FqeBeer => "fqe+beer",
            Algorithm::Bcrl => "bcrl",
            Algorithm::BcrlExp => "bcrl-exp",
            Algorithm::ExactKrope => "exact_krope",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| param_err(format!("unknown algorithm '{s}'")))
    }
}

impl Serialize for Algorithm {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Algorithm {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Dataset sizes and MRP parameters for the divergence study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CounterexampleSettings {
    pub mrp: CounterexampleParams,
    /// On-policy transitions shared by every dataset.
    pub on_policy_size: usize,
    /// Extra transitions concentrated on a single state.
    pub concentrated_size: usize,
}

impl Default for CounterexampleSettings {
    fn default() -> Self {
        Self { mrp: CounterexampleParams::default(), on_policy_size: 2000, concentrated_size: 5000 }
    }
}

/// Learning rate x dimension x auxiliary weight grid for FQE+KROPE.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensitivityGrid {
    pub learning_rates: Vec<f64>,
    pub dims: Vec<usize>,
    pub alphas: Vec<f64>,
}

impl Default for SensitivityGrid {
    fn default() -> Self {
        Self { learning_rates: vec![1e-4, 1e-3, 1e-2], dims: vec![10, 20, 30], alphas: vec![0.1, 0.5, 0.9] }
    }
}

/// Files read by the `diagnose` experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnoseInputs {
    /// Encoder weights over one-hot inputs, `d x |X|` or `d x (|X| + 1)`.
    pub encoder: String,
    /// MDP JSON document.
    pub mdp: String,
    /// Optional `|S| x |A|` target policy CSV; defaults to the softmax of
    /// the optimal q at `target_temperature` (uniform when gamma = 1).
    #[serde(default)]
    pub policy: Option<String>,
}

/// One JSON document describing a batch run.
///
/// `training` holds overrides on top of the kind's default training
/// configuration, so partial objects are allowed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub garnet: GarnetParams,
    pub counterexample: CounterexampleSettings,
    pub algorithms: Vec<Algorithm>,
    pub dims: Vec<usize>,
    pub trials: usize,
    pub base_seed: u64,
    pub dataset_size: usize,
    pub target_temperature: f64,
    pub training: Value,
    pub lspe_max_iters: usize,
    pub lspe_tol: f64,
    /// Epochs between LSPE checkpoints in OPE traces.
    pub eval_every: usize,
    pub sensitivity: Option<SensitivityGrid>,
    pub diagnose: Option<DiagnoseInputs>,
    pub output: Option<String>,
}

/// Seeds voted over in the counterexample study.
pub const COUNTEREXAMPLE_TRIALS: usize = 20;

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            kind: ExperimentKind::GarnetSweep,
            garnet: GarnetParams::default(),
            counterexample: CounterexampleSettings::default(),
            algorithms: Algorithm::ALL.to_vec(),
            dims: vec![10, 20, 30, 40, 50],
            trials: 30,
            base_seed: 0,
            dataset_size: 2000,
            target_temperature: 0.25,
            training: Value::Object(Default::default()),
            lspe_max_iters: 10_000,
            lspe_tol: crate::lspe::DEFAULT_LSPE_TOL,
            eval_every: 10,
            sensitivity: None,
            diagnose: None,
            output: None,
        }
    }
}

impl ExperimentConfig {
    /// Defaults for `kind`; the counterexample votes over 20 seeds.
    pub fn for_kind(kind: ExperimentKind) -> Self {
        let trials = match kind {
            ExperimentKind::Counterexample => COUNTEREXAMPLE_TRIALS,
            _ => Self::default().trials,
        };
        Self { kind, trials, ..Self::default() }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parses `text` as a config of `kind`, overriding any `kind` key and
    /// filling absent keys from [`Self::for_kind`].
    pub fn from_json_for_kind(text: &str, kind: ExperimentKind) -> Result<Self> {
        let mut value: Value = serde_json::from_str(text)?;
        let obj = value.as_object_mut().ok_or_else(|| validation_err("config must be a JSON object"))?;
        obj.insert("kind".into(), serde_json::to_value(kind)?);
        obj.entry("trials").or_insert_with(|| Self::for_kind(kind).trials.into());
        let cfg: Self = serde_json::from_value(value)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    /// Default training settings for this kind before overrides.
    pub fn base_training(&self) -> TrainingConfig {
        match self.kind {
            ExperimentKind::Counterexample => TrainingConfig {
                latent_dim: 3,
                learning_rate: 3e-4,
                optimizer: OptimizerKind::Sgd,
                aux_weight: 0.8,
                encoder_bias: false,
                head_bias: false,
                ..TrainingConfig::default()
            },
            _ => TrainingConfig::default(),
        }
    }

    /// Kind defaults with the `training` overrides applied.
    pub fn training_config(&self) -> Result<TrainingConfig> {
        let mut base = serde_json::to_value(self.base_training())?;
        match &self.training {
            Value::Object(over) => {
                let obj = base.as_object_mut().expect("training config serialises to an object");
                for (k, v) in over {
                    obj.insert(k.clone(), v.clone());
                }
            }
            Value::Null => {}
            _ => return Err(validation_err("training must be a JSON object")),
        }
        let cfg: TrainingConfig = serde_json::from_value(base)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(param_err("trials must be at least 1"));
        }
        if self.dims.is_empty() || self.dims.contains(&0) {
            return Err(param_err("dims must be a non-empty list of positive sizes"));
        }
        if self.algorithms.is_empty() {
            return Err(param_err("algorithms must not be empty"));
        }
        if self.dataset_size == 0 {
            return Err(param_err("dataset_size must be positive"));
        }
        if !(self.target_temperature > 0.0) {
            return Err(param_err("target_temperature must be positive"));
        }
        if self.eval_every == 0 || self.lspe_max_iters == 0 {
            return Err(param_err("eval_every and lspe_max_iters must be positive"));
        }
        let c = &self.counterexample;
        if c.on_policy_size == 0 || c.concentrated_size == 0 {
            return Err(param_err("counterexample dataset sizes must be positive"));
        }
        if let Some(g) = &self.sensitivity {
            if g.learning_rates.is_empty() || g.dims.is_empty() || g.alphas.is_empty() {
                return Err(param_err("sensitivity grid axes must be non-empty"));
            }
            if g.learning_rates.iter().any(|v| !(*v > 0.0)) || g.alphas.iter().any(|a| !(0.0..=1.0).contains(a)) {
                return Err(param_err("sensitivity grid has an invalid learning rate or alpha"));
            }
        }
        if self.kind == ExperimentKind::Diagnose && self.diagnose.is_none() {
            return Err(param_err("diagnose runs need a 'diagnose' section with encoder and mdp paths"));
        }
        self.training_config()?;
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON form; stamped on every output row.
    /// SHA-256 of the canonical JSON with the output path cleared, so the
    /// same experiment written to two directories shares one hash.
    pub fn hash(&self) -> Result<String> {
        let canonical = Self { output: None, ..self.clone() };
        let digest = Sha256::digest(canonical.to_json()?.as_bytes());
        Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
    }

    /// Seed of trial `t`.
    pub fn trial_seed(&self, t: usize) -> u64 {
        self.base_seed.wrapping_add(t as u64)
    }
}
