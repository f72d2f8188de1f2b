use std::path::{Path, PathBuf};

use keyed_nlfsr::attacks::{CpaTarget, CrpMode};
use keyed_nlfsr::leakage::{Alignment, LeakageModel};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::CliError;

/// Prefix of environment overrides. Nested fields use a double underscore,
/// e.g. `KNL_SCA__TRACES=2000`.
pub const ENV_PREFIX: &str = "KNL_";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub threads: Option<usize>,
    pub out: PathBuf,
    /// Device-state file; a reference device is built from `device_seed`
    /// when absent.
    pub device: Option<PathBuf>,
    pub device_seed: u64,
    /// Countermeasure label; the device's own flags when absent.
    pub countermeasures: Option<String>,
    pub search: SearchConfig,
    pub avalanche: AvalancheConfig,
    pub sca: ScaConfig,
    pub crps: CrpsConfig,
    pub ml: MlConfig,
    pub eval: EvalConfig,
    pub enroll: EnrollConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            threads: None,
            out: PathBuf::from("."),
            device: None,
            device_seed: 1,
            countermeasures: None,
            search: SearchConfig::default(),
            avalanche: AvalancheConfig::default(),
            sca: ScaConfig::default(),
            crps: CrpsConfig::default(),
            ml: MlConfig::default(),
            eval: EvalConfig::default(),
            enroll: EnrollConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchConfig {
    pub width: u32,
    pub trials: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            width: 27,
            trials: 1000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AvalancheConfig {
    pub challenges: usize,
    pub warmup: u32,
    pub flush: u32,
    /// `"none"` or `"lfsr"`.
    pub control: String,
    pub band: [f64; 2],
}

impl Default for AvalancheConfig {
    fn default() -> Self {
        Self {
            challenges: 10_000,
            warmup: 112,
            flush: 56,
            control: "none".into(),
            band: [0.48, 0.52],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScaConfig {
    pub countermeasures: Vec<String>,
    pub traces: usize,
    pub noise: f64,
    pub chunk_bits: u32,
    pub samples_per_cycle: usize,
    pub model: LeakageModel,
    pub align: Alignment,
    pub target: CpaTarget,
    pub save_traces: bool,
}

impl Default for ScaConfig {
    fn default() -> Self {
        Self {
            countermeasures: ["none", "clkrnd", "masked", "masked+clkrnd"]
                .map(String::from)
                .to_vec(),
            traces: 10_000,
            noise: 0.5,
            chunk_bits: 8,
            samples_per_cycle: 1,
            model: LeakageModel::HammingDistance,
            align: Alignment::ReferenceClock,
            target: CpaTarget::FullTrace,
            save_traces: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CrpsConfig {
    pub mode: CrpMode,
    pub n: usize,
    /// Evaluate a noiseless copy of the APUF.
    pub noiseless: bool,
    pub output: Option<PathBuf>,
}

impl Default for CrpsConfig {
    fn default() -> Self {
        Self {
            mode: CrpMode::Raw,
            n: 100_000,
            noiseless: false,
            output: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlConfig {
    /// CRP CSV to attack; collected from the device when absent.
    pub input: Option<PathBuf>,
    pub mode: CrpMode,
    pub n: usize,
    pub noiseless: bool,
    pub test: usize,
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    /// Exit with status 1 when test accuracy falls below this.
    pub min_accuracy: Option<f64>,
    /// Exit with status 1 when test accuracy exceeds the majority baseline
    /// by more than this.
    pub max_over_bias: Option<f64>,
}

impl Default for MlConfig {
    fn default() -> Self {
        let o = keyed_nlfsr::attacks::MlOptions::default();
        Self {
            input: None,
            mode: CrpMode::Raw,
            n: 110_000,
            noiseless: true,
            test: 10_000,
            hidden: o.hidden,
            epochs: o.epochs,
            learning_rate: o.learning_rate,
            momentum: o.momentum,
            batch_size: o.batch_size,
            min_accuracy: None,
            max_over_bias: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// 56-bit challenge in hex.
    pub challenge: String,
    pub n_bits: usize,
    /// `"bits"` or `"hex"`.
    pub format: String,
    pub noiseless: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            challenge: String::new(),
            n_bits: 8,
            format: "bits".into(),
            noiseless: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnrollConfig {
    pub trials: u64,
    pub evals_per_trial: usize,
    pub uniformity_samples: usize,
    pub output: Option<PathBuf>,
}

impl Default for EnrollConfig {
    fn default() -> Self {
        let o = keyed_nlfsr::protocol::EnrollOptions::default();
        Self {
            trials: o.trials,
            evals_per_trial: o.evals_per_trial,
            uniformity_samples: o.uniformity_samples,
            output: None,
        }
    }
}

/// Merges `overlay` into `base`, objects recursively.
fn merge(base: &mut Value, overlay: Value) {
    match (base, overlay) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Parses an override value against the type of the field it replaces:
/// string fields keep the raw text, everything else is read as JSON first.
fn override_value(current: Option<&Value>, raw: &str) -> Value {
    match current {
        Some(Value::String(_)) => Value::String(raw.to_owned()),
        _ => serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_owned())),
    }
}

fn set_path(root: &mut Value, path: &[String], raw: &str) {
    let mut node = root;
    for key in &path[..path.len() - 1] {
        if !node.get(key).is_some_and(Value::is_object) {
            node[key.as_str()] = Value::Object(Default::default());
        }
        node = node.get_mut(key).expect("just inserted");
    }
    let last = path.last().expect("non-empty path");
    let v = override_value(node.get(last), raw);
    node[last.as_str()] = v;
}

/// Resolves defaults, then the config file, then `KNL_*` variables.
pub fn resolve(
    file: Option<&Path>,
    env: impl IntoIterator<Item = (String, String)>,
) -> Result<ExperimentConfig, CliError> {
    let mut value = serde_json::to_value(ExperimentConfig::default()).expect("serializable");
    if let Some(path) = file {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        let overlay: Value = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        merge(&mut value, overlay);
    }
    let mut vars: Vec<(String, String)> = env
        .into_iter()
        .filter(|(k, _)| k.starts_with(ENV_PREFIX))
        .collect();
    vars.sort();
    for (key, raw) in vars {
        let path: Vec<String> = key[ENV_PREFIX.len()..]
            .split("__")
            .map(str::to_ascii_lowercase)
            .collect();
        if path.iter().any(String::is_empty) {
            return Err(CliError::Config(format!("malformed override variable {key}")));
        }
        set_path(&mut value, &path, &raw);
    }
    serde_path_to_error::deserialize(value).map_err(|e| {
        CliError::Config(format!("field `{}`: {}", e.path(), e.inner()))
    })
}
