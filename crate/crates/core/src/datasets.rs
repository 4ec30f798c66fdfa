//! Seeded stream generators for the three benchmark tasks.
//!
//! * `channel`: binary symbols through a slowly drifting two-tap channel and a
//!   quadratic nonlinearity; the regressor is a window of received samples
//!   and the target is a delayed transmitted symbol.
//! * `crescent`: two interlocking half moons, labels +1 / -1.
//! * `spiral`: two-arm Archimedean spiral, labels +1 / -1.
//!
//! Every node sees one sample per round. In [`SourceMode::Shared`] all nodes
//! observe the same underlying draw (same symbols, same point) through their
//! own independent observation noise, the usual sensor-network setting. In
//! [`SourceMode::Independent`] each node draws its own samples.
//!
//! A stream holds `rounds + 1` steps: step 0 seeds the dictionaries, steps
//! `1..=rounds` are the adaptation rounds.

use std::f64::consts::PI;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Channel,
    Crescent,
    Spiral,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Channel => "channel",
            Task::Crescent => "crescent",
            Task::Spiral => "spiral",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "channel" => Ok(Task::Channel),
            "crescent" => Ok(Task::Crescent),
            "spiral" => Ok(Task::Spiral),
            other => Err(Error::invalid(
                "stream.task",
                format!("unknown task `{other}`"),
            )),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceMode {
    #[default]
    Shared,
    Independent,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelParams {
    /// Regressor window length.
    pub tap_length: usize,
    /// Decision delay: the target at step n is the symbol sent at n - delay.
    pub delay: usize,
    /// Period, in steps, of the sinusoidal tap drift.
    pub drift_period: f64,
}

impl Default for ChannelParams {
    fn default() -> Self {
        Self {
            tap_length: 3,
            delay: 1,
            drift_period: 1000.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StreamSpec {
    pub task: Task,
    pub node_count: usize,
    pub rounds: usize,
    pub seed: u64,
    /// Std of the additive Gaussian noise on each node's observation.
    pub noise_std: f64,
    #[serde(default)]
    pub source: SourceMode,
    /// Std of the Gaussian jitter around the crescent/spiral curves. `None`
    /// uses the task default (0.1 for crescent, 0.02 for spiral).
    #[serde(default)]
    pub jitter: Option<f64>,
    #[serde(default)]
    pub channel: ChannelParams,
}

impl StreamSpec {
    pub fn validate(&self) -> Result<()> {
        if self.node_count == 0 {
            return Err(Error::invalid("stream.node_count", "must be >= 1"));
        }
        if self.rounds == 0 {
            return Err(Error::invalid("stream.rounds", "must be >= 1"));
        }
        if !(self.noise_std.is_finite() && self.noise_std >= 0.0) {
            return Err(Error::invalid(
                "stream.noise_std",
                "must be finite and >= 0",
            ));
        }
        if let Some(j) = self.jitter {
            if !(j.is_finite() && j >= 0.0) {
                return Err(Error::invalid("stream.jitter", "must be finite and >= 0"));
            }
        }
        if self.channel.tap_length == 0 {
            return Err(Error::invalid("stream.channel.tap_length", "must be >= 1"));
        }
        if self.channel.drift_period.is_nan() || self.channel.drift_period <= 0.0 {
            return Err(Error::invalid("stream.channel.drift_period", "must be > 0"));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        match self.task {
            Task::Channel => self.channel.tap_length,
            Task::Crescent | Task::Spiral => 2,
        }
    }

    fn jitter(&self) -> f64 {
        self.jitter.unwrap_or(match self.task {
            Task::Crescent => 0.1,
            Task::Spiral => 0.02,
            Task::Channel => 0.0,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub input: Vec<f64>,
    pub desired: f64,
}

/// Samples indexed `[step][node]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Stream {
    steps: Vec<Vec<Sample>>,
}

impl Stream {
    /// Step 0: the samples that seed each node's dictionary.
    pub fn initial(&self) -> &[Sample] {
        &self.steps[0]
    }

    /// Adaptation round `r`, for `r` in `0..rounds()`.
    pub fn round(&self, r: usize) -> &[Sample] {
        &self.steps[r + 1]
    }

    pub fn rounds(&self) -> usize {
        self.steps.len() - 1
    }

    pub fn node_count(&self) -> usize {
        self.steps[0].len()
    }

    pub fn steps(&self) -> &[Vec<Sample>] {
        &self.steps
    }

    /// Inputs and targets of one step, split for [`crate::filters::NetworkFilter`].
    pub fn split(step: &[Sample]) -> (Vec<Vec<f64>>, Vec<f64>) {
        step.iter().map(|s| (s.input.clone(), s.desired)).unzip()
    }

    /// CSV with columns `node,round,x0,..,x{d-1},desired`; round 0 is the
    /// seeding step.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let dim = self.steps[0][0].input.len();
        write!(out, "node,round")?;
        for i in 0..dim {
            write!(out, ",x{i}")?;
        }
        writeln!(out, ",desired")?;
        for node in 0..self.node_count() {
            for (step, samples) in self.steps.iter().enumerate() {
                let s = &samples[node];
                write!(out, "{node},{step}")?;
                for v in &s.input {
                    write!(out, ",{v}")?;
                }
                writeln!(out, ",{}", s.desired)?;
            }
        }
        Ok(())
    }
}

/// Mixes a master seed with a stream tag and an index (SplitMix64 finalizer).
pub fn derive_seed(master: u64, tag: u64, index: u64) -> u64 {
    let mut z = master
        .wrapping_add(tag.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(index.wrapping_mul(0xD1B5_4A32_D192_ED03))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const TAG_LATENT: u64 = 1;
const TAG_NODE: u64 = 2;
const TAG_PILOT: u64 = 3;

fn rng_for(seed: u64, tag: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, tag, index))
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn label(rng: &mut ChaCha8Rng) -> f64 {
    if rng.random::<bool>() {
        1.0
    } else {
        -1.0
    }
}

/// Channel taps at step `n`.
pub fn channel_taps(n: f64, drift_period: f64) -> (f64, f64) {
    let phase = (2.0 * PI * n / drift_period).sin();
    (1.0 + 0.2 * phase, 0.5 - 0.2 * phase)
}

/// Noiseless channel output at step `n` for current and previous symbols:
/// `r = h1 s_n + h2 s_{n-1}`, then `z = r - 0.9 r^2`.
pub fn channel_response(n: f64, drift_period: f64, symbol: f64, previous: f64) -> f64 {
    let (h1, h2) = channel_taps(n, drift_period);
    let r = h1 * symbol + h2 * previous;
    r - 0.9 * r * r
}

/// Symbols and noiseless received samples for steps `-warmup..=rounds`.
struct ChannelTrace {
    warmup: usize,
    symbols: Vec<f64>,
    received: Vec<f64>,
}

impl ChannelTrace {
    fn generate(spec: &StreamSpec, rng: &mut ChaCha8Rng) -> Self {
        let ch = spec.channel;
        let warmup = ch.tap_length.max(ch.delay + 1);
        let len = warmup + spec.rounds + 1;
        // one extra symbol before the window so every sample has a predecessor
        let symbols: Vec<f64> = (0..=len).map(|_| label(rng)).collect();
        let received = (0..len)
            .map(|i| {
                let n = i as f64 - warmup as f64;
                channel_response(n, ch.drift_period, symbols[i + 1], symbols[i])
            })
            .collect();
        Self {
            warmup,
            symbols,
            received,
        }
    }

    fn sample(&self, spec: &StreamSpec, step: usize, noise: &[f64]) -> Sample {
        let ch = spec.channel;
        let i = step + self.warmup;
        let input = (0..ch.tap_length)
            .map(|k| self.received[i - k] + noise[i - k])
            .collect();
        Sample {
            input,
            desired: self.symbols[i + 1 - ch.delay],
        }
    }
}

fn crescent_point(rng: &mut ChaCha8Rng, jitter: f64) -> (Vec<f64>, f64) {
    let class = label(rng);
    let theta = rng.random_range(0.0..PI);
    let r = 1.0 + jitter * gaussian(rng);
    let point = if class > 0.0 {
        vec![r * theta.cos(), r * theta.sin()]
    } else {
        vec![1.0 - r * theta.cos(), 0.5 - r * theta.sin()]
    };
    (point, class)
}

/// Noiseless point of the +1 spiral arm at parameter `t` in `[0, 3 pi]`.
pub fn spiral_arm(t: f64) -> [f64; 2] {
    [t * t.cos() / (3.0 * PI), t * t.sin() / (3.0 * PI)]
}

fn spiral_point(rng: &mut ChaCha8Rng, jitter: f64) -> (Vec<f64>, f64) {
    let class = label(rng);
    let t = rng.random_range(0.0..=3.0 * PI);
    let [x, y] = spiral_arm(t);
    let point = vec![
        class * x + jitter * gaussian(rng),
        class * y + jitter * gaussian(rng),
    ];
    (point, class)
}

fn add_noise(rng: &mut ChaCha8Rng, point: &[f64], std: f64) -> Vec<f64> {
    point.iter().map(|v| v + std * gaussian(rng)).collect()
}

fn geometric_stream(
    spec: &StreamSpec,
    draw: fn(&mut ChaCha8Rng, f64) -> (Vec<f64>, f64),
) -> Stream {
    let steps_len = spec.rounds + 1;
    let jitter = spec.jitter();
    let mut node_rngs: Vec<ChaCha8Rng> = (0..spec.node_count)
        .map(|q| rng_for(spec.seed, TAG_NODE, q as u64))
        .collect();
    let mut latent = rng_for(spec.seed, TAG_LATENT, 0);
    let steps = (0..steps_len)
        .map(|_| match spec.source {
            SourceMode::Shared => {
                let (point, class) = draw(&mut latent, jitter);
                node_rngs
                    .iter_mut()
                    .map(|rng| Sample {
                        input: add_noise(rng, &point, spec.noise_std),
                        desired: class,
                    })
                    .collect()
            }
            SourceMode::Independent => node_rngs
                .iter_mut()
                .map(|rng| {
                    let (point, class) = draw(rng, jitter);
                    Sample {
                        input: add_noise(rng, &point, spec.noise_std),
                        desired: class,
                    }
                })
                .collect(),
        })
        .collect();
    Stream { steps }
}

/// Nonstationary equalization stream.
pub fn nonstationary_channel_stream(spec: &StreamSpec) -> Result<Stream> {
    spec.validate()?;
    let shared = match spec.source {
        SourceMode::Shared => Some(ChannelTrace::generate(
            spec,
            &mut rng_for(spec.seed, TAG_LATENT, 0),
        )),
        SourceMode::Independent => None,
    };
    let per_node: Vec<Vec<Sample>> = (0..spec.node_count)
        .map(|q| {
            let mut rng = rng_for(spec.seed, TAG_NODE, q as u64);
            let own;
            let trace = match &shared {
                Some(t) => t,
                None => {
                    own = ChannelTrace::generate(spec, &mut rng);
                    &own
                }
            };
            let noise: Vec<f64> = (0..trace.received.len())
                .map(|_| spec.noise_std * gaussian(&mut rng))
                .collect();
            (0..=spec.rounds)
                .map(|step| trace.sample(spec, step, &noise))
                .collect()
        })
        .collect();
    let steps = (0..=spec.rounds)
        .map(|step| per_node.iter().map(|node| node[step].clone()).collect())
        .collect();
    Ok(Stream { steps })
}

/// Two interlocking half moons: +1 on the unit upper arc, -1 on the lower
/// arc centered at (1, 0.5), with radial jitter.
pub fn crescent_moon_dataset(spec: &StreamSpec) -> Result<Stream> {
    spec.validate()?;
    Ok(geometric_stream(spec, crescent_point))
}

/// Two-arm spiral over one and a half turns; the -1 arm is the point
/// reflection of the +1 arm.
pub fn spiral_dataset(spec: &StreamSpec) -> Result<Stream> {
    spec.validate()?;
    Ok(geometric_stream(spec, spiral_point))
}

pub fn generate(spec: &StreamSpec) -> Result<Stream> {
    match spec.task {
        Task::Channel => nonstationary_channel_stream(spec),
        Task::Crescent => crescent_moon_dataset(spec),
        Task::Spiral => spiral_dataset(spec),
    }
}

/// Single-node inputs drawn from the task's distribution, for bandwidth
/// selection. Independent of any run's stream.
pub fn pilot_inputs(spec: &StreamSpec, count: usize) -> Result<Vec<Vec<f64>>> {
    let pilot = StreamSpec {
        node_count: 1,
        rounds: count.max(2) - 1,
        seed: derive_seed(spec.seed, TAG_PILOT, 0),
        ..spec.clone()
    };
    let stream = generate(&pilot)?;
    Ok(stream
        .steps
        .into_iter()
        .map(|mut s| s.swap_remove(0).input)
        .collect())
}
