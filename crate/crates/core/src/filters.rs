//! The kernel LMS family, each run as synchronous rounds over a network.
//!
//! | algorithm  | nodes | quantization | budget |
//! |------------|-------|--------------|--------|
//! | `klms`     | 1     | no           | no     |
//! | `qklms`    | 1     | yes          | no     |
//! | `dklms`    | any   | no           | no     |
//! | `qdklms`   | any   | yes          | no     |
//! | `fbqdklms` | any   | yes          | yes    |
//!
//! A round has two phases. First every node fuses its neighbors' raw
//! observations through `C`, predicts at the fused point with its current
//! dictionary, and forms its error. Then every node combines its neighbors'
//! errors through `A` and updates its dictionary with that diffused error,
//! using its own raw observation as the candidate center.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dictionary::Dictionary;
use crate::error::{check_dim, Error, Result};
use crate::kernel::KernelParams;
use crate::network::{diffuse_error_at, fuse_observations, CombinationMatrices};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Klms,
    Qklms,
    Dklms,
    Qdklms,
    Fbqdklms,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [
        Algorithm::Klms,
        Algorithm::Qklms,
        Algorithm::Dklms,
        Algorithm::Qdklms,
        Algorithm::Fbqdklms,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Klms => "klms",
            Algorithm::Qklms => "qklms",
            Algorithm::Dklms => "dklms",
            Algorithm::Qdklms => "qdklms",
            Algorithm::Fbqdklms => "fbqdklms",
        }
    }

    pub fn single_node(self) -> bool {
        matches!(self, Algorithm::Klms | Algorithm::Qklms)
    }

    pub fn quantizes(self) -> bool {
        matches!(
            self,
            Algorithm::Qklms | Algorithm::Qdklms | Algorithm::Fbqdklms
        )
    }

    pub fn budgeted(self) -> bool {
        self == Algorithm::Fbqdklms
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::invalid("algorithms", format!("unknown algorithm `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterHyperparams {
    /// Step size.
    pub eta: f64,
    /// Quantization radius: observations within this distance of a center
    /// are merged into it.
    pub epsilon: f64,
    /// Forgetting factor of the significance recursions.
    pub zeta: f64,
    /// Dictionary cap for the fixed-budget variant.
    pub budget: Option<usize>,
    pub kernel: KernelParams,
}

impl FilterHyperparams {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta.is_finite() && self.eta >= 0.0) {
            return Err(Error::invalid("hyper.eta", "must be finite and >= 0"));
        }
        if self.epsilon.is_nan() || self.epsilon < 0.0 {
            return Err(Error::invalid("hyper.epsilon", "must be >= 0"));
        }
        if !(self.zeta > 0.0 && self.zeta <= 1.0) {
            return Err(Error::invalid("hyper.zeta", "must lie in (0, 1]"));
        }
        if self.budget == Some(0) {
            return Err(Error::invalid("hyper.budget", "must be >= 1 when present"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeState {
    pub dictionary: Dictionary,
    pub last_output: f64,
    pub last_error: f64,
    pub last_diffused_error: f64,
}

/// One dictionary mutation, with the significance and age vectors as they
/// stood right after it. Recorded only when event logging is enabled.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DictionaryEvent {
    pub round: usize,
    pub node: usize,
    pub kind: EventKind,
    pub significance: Vec<f64>,
    pub age: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum EventKind {
    Add {
        center: Vec<f64>,
        diffused_error: f64,
    },
    Merge {
        index: usize,
        diffused_error: f64,
    },
    Prune {
        index: usize,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct RoundOutput {
    pub outputs: Vec<f64>,
    pub errors: Vec<f64>,
}

/// Filter state for a whole network.
#[derive(Clone, Debug)]
pub struct NetworkFilter {
    algorithm: Algorithm,
    hyper: FilterHyperparams,
    matrices: CombinationMatrices,
    nodes: Vec<NodeState>,
    round: usize,
    events: Option<Vec<DictionaryEvent>>,
}

impl NetworkFilter {
    /// Seeds every node's dictionary with its first sample
    /// `(initial_inputs[q], initial_desired[q])`.
    pub fn new(
        algorithm: Algorithm,
        hyper: FilterHyperparams,
        matrices: CombinationMatrices,
        initial_inputs: &[Vec<f64>],
        initial_desired: &[f64],
    ) -> Result<Self> {
        hyper.validate()?;
        matrices.validate()?;
        let n = matrices.node_count();
        if algorithm.single_node() && n != 1 {
            return Err(Error::invalid(
                "algorithms",
                format!("{algorithm} runs on a single node, network has {n}"),
            ));
        }
        if algorithm.budgeted() && hyper.budget.is_none() {
            return Err(Error::invalid(
                "hyper.budget",
                format!("{algorithm} requires a budget"),
            ));
        }
        check_dim(n, initial_inputs.len())?;
        check_dim(n, initial_desired.len())?;
        let budget = if algorithm.budgeted() {
            hyper.budget
        } else {
            None
        };
        let nodes = initial_inputs
            .iter()
            .zip(initial_desired)
            .map(|(x0, &d0)| {
                Ok(NodeState {
                    dictionary: Dictionary::seeded(x0, hyper.eta, d0, budget)?,
                    last_output: 0.0,
                    last_error: 0.0,
                    last_diffused_error: 0.0,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            algorithm,
            hyper,
            matrices,
            nodes,
            round: 0,
            events: None,
        })
    }

    /// A one-node filter with identity combination matrices.
    pub fn single(
        algorithm: Algorithm,
        hyper: FilterHyperparams,
        x0: &[f64],
        d0: f64,
    ) -> Result<Self> {
        Self::new(
            algorithm,
            hyper,
            CombinationMatrices::single_node(),
            &[x0.to_vec()],
            &[d0],
        )
    }

    pub fn algorithm(&self) -> Algorithm {
        self.algorithm
    }

    pub fn hyper(&self) -> &FilterHyperparams {
        &self.hyper
    }

    pub fn matrices(&self) -> &CombinationMatrices {
        &self.matrices
    }

    pub fn nodes(&self) -> &[NodeState] {
        &self.nodes
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Rounds completed so far.
    pub fn rounds(&self) -> usize {
        self.round
    }

    pub fn dictionary_sizes(&self) -> impl Iterator<Item = usize> + '_ {
        self.nodes.iter().map(|n| n.dictionary.len())
    }

    pub fn set_event_logging(&mut self, enabled: bool) {
        self.events = enabled.then(Vec::new);
    }

    pub fn take_events(&mut self) -> Vec<DictionaryEvent> {
        self.events.as_mut().map(std::mem::take).unwrap_or_default()
    }

    /// One synchronous round: `observations[q]` and `desired[q]` are node
    /// `q`'s raw regressor and target. Returns the a-priori outputs and errors.
    pub fn network_round(
        &mut self,
        observations: &[Vec<f64>],
        desired: &[f64],
    ) -> Result<RoundOutput> {
        let n = self.nodes.len();
        check_dim(n, observations.len())?;
        check_dim(n, desired.len())?;

        let mut outputs = Vec::with_capacity(n);
        let mut errors = Vec::with_capacity(n);
        for (q, node) in self.nodes.iter().enumerate() {
            let fused = fuse_observations(&self.matrices.c, q, observations)?;
            let y = node.dictionary.predict(&fused, &self.hyper.kernel)?;
            outputs.push(y);
            errors.push(desired[q] - y);
        }

        let round = self.round;
        for q in 0..n {
            let diffused = diffuse_error_at(&self.matrices.a, q, &errors);
            let node = &mut self.nodes[q];
            node.last_output = outputs[q];
            node.last_error = errors[q];
            node.last_diffused_error = diffused;
            let log = &mut self.events;
            update_dictionary(
                self.algorithm,
                &self.hyper,
                &mut node.dictionary,
                &observations[q],
                diffused,
                |kind, dict| {
                    if let Some(log) = log.as_mut() {
                        log.push(DictionaryEvent {
                            round,
                            node: q,
                            kind,
                            significance: dict.entries().iter().map(|e| e.significance).collect(),
                            age: dict.entries().iter().map(|e| e.age_accum).collect(),
                        });
                    }
                },
            )?;
        }
        self.round += 1;
        Ok(RoundOutput { outputs, errors })
    }

    /// Single-node kernel LMS: every sample becomes a center.
    pub fn klms_step(&mut self, x: &[f64], d: f64) -> Result<(f64, f64)> {
        self.expect(Algorithm::Klms)?;
        self.single_step(x, d)
    }

    /// Single-node quantized kernel LMS.
    pub fn qklms_step(&mut self, x: &[f64], d: f64) -> Result<(f64, f64)> {
        self.expect(Algorithm::Qklms)?;
        self.single_step(x, d)
    }

    /// Diffusion kernel LMS with an unbounded dictionary.
    pub fn dklms_step(
        &mut self,
        observations: &[Vec<f64>],
        desired: &[f64],
    ) -> Result<RoundOutput> {
        self.expect(Algorithm::Dklms)?;
        self.network_round(observations, desired)
    }

    fn single_step(&mut self, x: &[f64], d: f64) -> Result<(f64, f64)> {
        let out = self.network_round(&[x.to_vec()], &[d])?;
        Ok((out.outputs[0], out.errors[0]))
    }

    fn expect(&self, algorithm: Algorithm) -> Result<()> {
        if self.algorithm != algorithm {
            return Err(Error::State(format!(
                "{algorithm} step called on a {} filter",
                self.algorithm
            )));
        }
        Ok(())
    }
}

/// Phase-two update of one node's dictionary. Each mutation is passed to
/// `record` together with the dictionary as it stands afterwards.
fn update_dictionary(
    algorithm: Algorithm,
    hyper: &FilterHyperparams,
    dict: &mut Dictionary,
    x: &[f64],
    diffused: f64,
    mut record: impl FnMut(EventKind, &Dictionary),
) -> Result<()> {
    let kernel = &hyper.kernel;
    let budgeted = algorithm.budgeted();

    let merge_into = if algorithm.quantizes() {
        let (j, dist) = dict.nearest_entry(x)?;
        (dist <= hyper.epsilon).then_some(j)
    } else {
        None
    };

    match merge_into {
        Some(j) => {
            if budgeted {
                dict.significance_on_merge(j, hyper.eta, diffused, hyper.zeta, kernel)?;
            }
            dict.merge_update(j, hyper.eta, diffused)?;
            record(
                EventKind::Merge {
                    index: j,
                    diffused_error: diffused,
                },
                dict,
            );
        }
        None => {
            if budgeted {
                dict.significance_on_add(diffused.abs(), hyper.zeta, x, kernel)?;
            }
            dict.add_entry(x, hyper.eta, diffused)?;
            record(
                EventKind::Add {
                    center: x.to_vec(),
                    diffused_error: diffused,
                },
                dict,
            );
        }
    }

    if budgeted {
        if let Some((index, _)) = dict.prune_min_significance(hyper.zeta, kernel)? {
            record(EventKind::Prune { index }, dict);
        }
    }
    Ok(())
}
