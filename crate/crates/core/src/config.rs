//! Experiment configuration: the JSON tree, shipped presets, and dotted-key
//! overrides.
//!
//! A configuration resolves in layers, later layers winning: preset, config
//! file, then `key.path=value` overrides. Override values are parsed as JSON
//! when possible (`hyper.eta=0.2`, `hyper.budget=null`,
//! `algorithms=["qdklms"]`) and taken as strings otherwise
//! (`stream.task=spiral`).

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::datasets::{pilot_inputs, StreamSpec};
use crate::error::{Error, Result};
use crate::filters::{Algorithm, FilterHyperparams};
use crate::kernel::{silverman_bandwidth, KernelParams};
use crate::network::{CombinationRule, TopologyKind};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperConfig {
    pub eta: f64,
    pub epsilon: f64,
    pub zeta: f64,
    #[serde(default)]
    pub budget: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelConfig {
    /// Fixed kernel width. When absent, Silverman's rule is applied to
    /// `pilot_samples` inputs drawn from the task.
    #[serde(default)]
    pub sigma: Option<f64>,
    #[serde(default = "default_pilot_samples")]
    pub pilot_samples: usize,
}

fn default_pilot_samples() -> usize {
    500
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self {
            sigma: None,
            pilot_samples: default_pilot_samples(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub topology: TopologyKind,
    #[serde(default)]
    pub radius: Option<f64>,
    pub rule_a: CombinationRule,
    pub rule_c: CombinationRule,
    /// Seed for random topologies. One topology is drawn per experiment.
    pub seed: u64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            topology: TopologyKind::RandomGeometric,
            radius: Some(0.6),
            rule_a: CombinationRule::Uniform,
            rule_c: CombinationRule::Uniform,
            seed: 7,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: String,
    pub stream: StreamSpec,
    pub hyper: HyperConfig,
    #[serde(default)]
    pub kernel: KernelConfig,
    /// Network algorithms, run on every node of the stream.
    pub algorithms: Vec<Algorithm>,
    /// Single-node reference algorithms, run on node 0's stream only.
    #[serde(default)]
    pub baselines: Vec<Algorithm>,
    #[serde(default)]
    pub network: NetworkConfig,
    #[serde(default = "default_runs")]
    pub monte_carlo_runs: usize,
    /// Trailing fraction of rounds averaged into the MSE floor.
    #[serde(default = "default_floor_window")]
    pub floor_window: f64,
    /// Output directory used when none is given on the command line.
    #[serde(default)]
    pub output: Option<String>,
}

fn default_runs() -> usize {
    200
}

fn default_floor_window() -> f64 {
    0.1
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.stream.validate()?;
        if self.monte_carlo_runs == 0 {
            return Err(Error::invalid("monte_carlo_runs", "must be >= 1"));
        }
        if !(self.floor_window > 0.0 && self.floor_window <= 1.0) {
            return Err(Error::invalid("floor_window", "must lie in (0, 1]"));
        }
        if self.algorithms.is_empty() && self.baselines.is_empty() {
            return Err(Error::invalid(
                "algorithms",
                "at least one algorithm is required",
            ));
        }
        let n = self.stream.node_count;
        for a in &self.algorithms {
            if a.single_node() && n != 1 {
                return Err(Error::invalid(
                    "algorithms",
                    format!(
                        "{a} is single-node but stream.node_count = {n}; list it under baselines"
                    ),
                ));
            }
        }
        if let Some(a) = self.baselines.iter().find(|a| !a.single_node()) {
            return Err(Error::invalid(
                "baselines",
                format!("{a} is not a single-node algorithm"),
            ));
        }
        let mut names: Vec<_> = self.all_algorithms().map(Algorithm::name).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid(
                "algorithms",
                "each algorithm may appear only once",
            ));
        }
        if self.all_algorithms().any(Algorithm::budgeted) && self.hyper.budget.is_none() {
            return Err(Error::invalid("hyper.budget", "fbqdklms requires a budget"));
        }
        if let Some(s) = self.kernel.sigma {
            KernelParams::new(s)
                .map_err(|_| Error::invalid("kernel.sigma", "must be finite and > 0"))?;
        } else if self.kernel.pilot_samples < 2 {
            return Err(Error::invalid("kernel.pilot_samples", "must be >= 2"));
        }
        if self.network.topology == TopologyKind::RandomGeometric && self.network.radius.is_none() {
            return Err(Error::invalid(
                "network.radius",
                "required for random-geometric topology",
            ));
        }
        self.filter_hyperparams(KernelParams::new(1.0)?).validate()
    }

    pub fn all_algorithms(&self) -> impl Iterator<Item = Algorithm> + '_ {
        self.algorithms.iter().chain(&self.baselines).copied()
    }

    /// Kernel width: the configured value, or Silverman's rule on a pilot
    /// sample of the task.
    pub fn resolve_kernel(&self) -> Result<KernelParams> {
        match self.kernel.sigma {
            Some(s) => KernelParams::new(s),
            None => silverman_bandwidth(&pilot_inputs(&self.stream, self.kernel.pilot_samples)?),
        }
    }

    pub fn filter_hyperparams(&self, kernel: KernelParams) -> FilterHyperparams {
        FilterHyperparams {
            eta: self.hyper.eta,
            epsilon: self.hyper.epsilon,
            zeta: self.hyper.zeta,
            budget: self.hyper.budget,
            kernel,
        }
    }

    /// A copy with the kernel width pinned to its resolved value.
    pub fn resolved(&self) -> Result<Self> {
        let mut out = self.clone();
        out.kernel.sigma = Some(self.resolve_kernel()?.sigma());
        Ok(out)
    }

    pub fn from_json(value: Value) -> Result<Self> {
        // provenance sidecars wrap the config under "config"
        let value = match value {
            Value::Object(mut map) if map.contains_key("config") && !map.contains_key("stream") => {
                map.remove("config").unwrap_or(Value::Null)
            }
            other => other,
        };
        Ok(serde_json::from_value(value)?)
    }
}

pub const PRESET_NAMES: [&str; 6] = [
    "channel-fig3",
    "crescent-fig4",
    "spiral-fig5",
    "channel-fig6",
    "crescent-fig7",
    "spiral-fig8",
];

fn preset_source(name: &str) -> Option<&'static str> {
    Some(match name {
        "channel-fig3" => include_str!("../presets/channel-fig3.json"),
        "crescent-fig4" => include_str!("../presets/crescent-fig4.json"),
        "spiral-fig5" => include_str!("../presets/spiral-fig5.json"),
        "channel-fig6" => include_str!("../presets/channel-fig6.json"),
        "crescent-fig7" => include_str!("../presets/crescent-fig7.json"),
        "spiral-fig8" => include_str!("../presets/spiral-fig8.json"),
        _ => return None,
    })
}

/// The preset as a raw JSON tree, ready for overrides.
pub fn preset_value(name: &str) -> Result<Value> {
    let src = preset_source(name).ok_or_else(|| {
        Error::invalid(
            "preset",
            format!(
                "unknown preset `{name}` (known: {})",
                PRESET_NAMES.join(", ")
            ),
        )
    })?;
    Ok(serde_json::from_str(src)?)
}

pub fn preset(name: &str) -> Result<ExperimentConfig> {
    ExperimentConfig::from_json(preset_value(name)?)
}

pub fn read_config_file(path: &Path) -> Result<Value> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::invalid("config", format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| {
        Error::invalid(
            "config",
            format!("{} is not valid JSON: {e}", path.display()),
        )
    })
}

/// Recursively overlays `top` onto `base`; objects merge key by key, any
/// other value replaces.
pub fn merge_values(base: &mut Value, top: Value) {
    match (base, top) {
        (Value::Object(b), Value::Object(t)) => {
            for (k, v) in t {
                match b.get_mut(&k) {
                    Some(slot) => merge_values(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Applies one `dotted.key=value` override. Missing intermediate objects are
/// created; misspelled keys are rejected later, when the tree is
/// deserialized.
pub fn apply_override(tree: &mut Value, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::invalid(assignment, "override must have the form key=value"))?;
    let key = key.trim();
    if key.is_empty() {
        return Err(Error::invalid(assignment, "empty override key"));
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let parts: Vec<&str> = key.split('.').collect();
    let mut node = tree;
    for (i, part) in parts.iter().enumerate() {
        let last = i + 1 == parts.len();
        let Value::Object(map) = node else {
            return Err(Error::invalid(key, "path does not lead to an object"));
        };
        if last {
            map.insert((*part).to_string(), value);
            return Ok(());
        }
        node = map
            .entry((*part).to_string())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    unreachable!("split always yields at least one part")
}
