//! Monte-Carlo runner, network-size sweeps, and metrics files.
//!
//! Each run draws a fresh stream from a seed derived from the master seed and
//! the run index, then runs every configured algorithm on it. Per-round
//! squared errors are averaged over nodes, then over runs. Runs execute in
//! parallel but are reduced in run-index order, so results do not depend on
//! scheduling.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::datasets::{derive_seed, generate, Stream, StreamSpec};
use crate::dictionary::Dictionary;
use crate::error::{Error, Result};
use crate::filters::{Algorithm, FilterHyperparams, NetworkFilter};
use crate::network::{build_topology, CombinationMatrices, Topology};

const TAG_RUN: u64 = 0x52554e;

/// Learning curves of one algorithm, averaged over runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmTrace {
    pub algorithm: Algorithm,
    pub node_count: usize,
    /// Network-average squared a-priori error per round.
    pub mse_per_round: Vec<f64>,
    /// Network-average dictionary size after each round.
    pub dict_size_per_round: Vec<f64>,
    /// Per-node dictionary size after the last round.
    pub final_dict_sizes: Vec<f64>,
    /// Largest dictionary seen at any node, round, or run.
    pub max_dict_size: usize,
    pub mse_floor: f64,
}

impl AlgorithmTrace {
    pub fn mean_final_dict_size(&self) -> f64 {
        self.final_dict_sizes.iter().sum::<f64>() / self.final_dict_sizes.len() as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsTrace {
    pub rounds: usize,
    pub sigma: f64,
    pub run_seeds: Vec<u64>,
    pub traces: Vec<AlgorithmTrace>,
    /// Final dictionaries of the first run, per algorithm and node.
    #[serde(skip)]
    pub first_run_dictionaries: Vec<(Algorithm, Vec<Dictionary>)>,
}

impl MetricsTrace {
    pub fn get(&self, algorithm: Algorithm) -> Option<&AlgorithmTrace> {
        self.traces.iter().find(|t| t.algorithm == algorithm)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub algorithm: Algorithm,
    pub node_count: usize,
    pub mse_floor: f64,
    pub avg_final_dict_size: f64,
}

/// Mean of the trailing `window` fraction of `curve` (at least one point).
pub fn mse_floor(curve: &[f64], window: f64) -> f64 {
    if curve.is_empty() {
        return f64::NAN;
    }
    let len = ((curve.len() as f64 * window).ceil() as usize).clamp(1, curve.len());
    curve[curve.len() - len..].iter().sum::<f64>() / len as f64
}

/// Number of rounds until the trailing moving average of `curve` over
/// `smoothing` rounds first drops to `target` or below.
pub fn rounds_to_reach(curve: &[f64], target: f64, smoothing: usize) -> Option<usize> {
    let w = smoothing.max(1);
    let mut acc = 0.0;
    for (i, v) in curve.iter().enumerate() {
        acc += v;
        if i >= w {
            acc -= curve[i - w];
        }
        let n = (i + 1).min(w);
        if i + 1 >= w && acc / n as f64 <= target {
            return Some(i + 1);
        }
    }
    None
}

pub fn run_seeds(config: &ExperimentConfig) -> Vec<u64> {
    (0..config.monte_carlo_runs as u64)
        .map(|r| derive_seed(config.stream.seed, TAG_RUN, r))
        .collect()
}

/// The experiment's topology and combination matrices.
pub fn build_network(config: &ExperimentConfig) -> Result<(Topology, CombinationMatrices)> {
    let net = &config.network;
    let topo = build_topology(net.topology, config.stream.node_count, net.seed, net.radius)?;
    let matrices = CombinationMatrices::new(&topo, net.rule_a, net.rule_c);
    Ok((topo, matrices))
}

struct RunCurves {
    mse: Vec<f64>,
    dict: Vec<f64>,
    final_sizes: Vec<usize>,
    max_size: usize,
    dictionaries: Option<Vec<Dictionary>>,
}

fn run_filter(
    mut filter: NetworkFilter,
    stream: &Stream,
    node: Option<usize>,
    keep: bool,
) -> Result<RunCurves> {
    let rounds = stream.rounds();
    let mut mse = Vec::with_capacity(rounds);
    let mut dict = Vec::with_capacity(rounds);
    let mut max_size = filter.dictionary_sizes().max().unwrap_or(0);
    for r in 0..rounds {
        let step = match node {
            Some(q) => std::slice::from_ref(&stream.round(r)[q]),
            None => stream.round(r),
        };
        let (xs, ds) = Stream::split(step);
        let out = filter.network_round(&xs, &ds)?;
        let n = out.errors.len() as f64;
        mse.push(out.errors.iter().map(|e| e * e).sum::<f64>() / n);
        let sizes: Vec<usize> = filter.dictionary_sizes().collect();
        max_size = max_size.max(*sizes.iter().max().unwrap_or(&0));
        dict.push(sizes.iter().sum::<usize>() as f64 / n);
    }
    Ok(RunCurves {
        mse,
        dict,
        final_sizes: filter.dictionary_sizes().collect(),
        max_size,
        dictionaries: keep.then(|| {
            filter
                .nodes()
                .iter()
                .map(|n| n.dictionary.clone())
                .collect()
        }),
    })
}

fn single_run(
    config: &ExperimentConfig,
    hyper: FilterHyperparams,
    matrices: &CombinationMatrices,
    seed: u64,
    keep_dictionaries: bool,
) -> Result<Vec<RunCurves>> {
    let spec = StreamSpec {
        seed,
        ..config.stream.clone()
    };
    let stream = generate(&spec)?;
    let (x0, d0) = Stream::split(stream.initial());
    let mut out = Vec::new();
    for &algorithm in &config.algorithms {
        let filter = NetworkFilter::new(algorithm, hyper, matrices.clone(), &x0, &d0)?;
        out.push(run_filter(filter, &stream, None, keep_dictionaries)?);
    }
    for &algorithm in &config.baselines {
        let filter = NetworkFilter::single(algorithm, hyper, &x0[0], d0[0])?;
        out.push(run_filter(filter, &stream, Some(0), keep_dictionaries)?);
    }
    Ok(out)
}

/// Runs the experiment over [`run_seeds`].
pub fn run_experiment(config: &ExperimentConfig) -> Result<MetricsTrace> {
    run_experiment_with_seeds(config, &run_seeds(config))
}

/// Runs one simulation per seed and averages. `config.monte_carlo_runs` is
/// ignored in favor of `seeds`.
pub fn run_experiment_with_seeds(config: &ExperimentConfig, seeds: &[u64]) -> Result<MetricsTrace> {
    config.validate()?;
    if seeds.is_empty() {
        return Err(Error::invalid(
            "monte_carlo_runs",
            "at least one run is required",
        ));
    }
    let kernel = config.resolve_kernel()?;
    let hyper = config.filter_hyperparams(kernel);
    let (_, matrices) = build_network(config)?;

    let runs: Vec<Vec<RunCurves>> = seeds
        .par_iter()
        .enumerate()
        .map(|(i, &seed)| single_run(config, hyper, &matrices, seed, i == 0))
        .collect::<Result<_>>()?;

    let rounds = config.stream.rounds;
    let n_runs = runs.len() as f64;
    let algorithms: Vec<Algorithm> = config.all_algorithms().collect();
    let mut traces = Vec::with_capacity(algorithms.len());
    let mut first_run_dictionaries = Vec::with_capacity(algorithms.len());
    for (a, &algorithm) in algorithms.iter().enumerate() {
        let nodes = runs[0][a].final_sizes.len();
        let mut mse = vec![0.0; rounds];
        let mut dict = vec![0.0; rounds];
        let mut finals = vec![0.0; nodes];
        let mut max_size = 0;
        for run in &runs {
            let c = &run[a];
            for r in 0..rounds {
                mse[r] += c.mse[r];
                dict[r] += c.dict[r];
            }
            for (f, &s) in finals.iter_mut().zip(&c.final_sizes) {
                *f += s as f64;
            }
            max_size = max_size.max(c.max_size);
        }
        for v in mse
            .iter_mut()
            .chain(dict.iter_mut())
            .chain(finals.iter_mut())
        {
            *v /= n_runs;
        }
        traces.push(AlgorithmTrace {
            algorithm,
            node_count: nodes,
            mse_floor: mse_floor(&mse, config.floor_window),
            mse_per_round: mse,
            dict_size_per_round: dict,
            final_dict_sizes: finals,
            max_dict_size: max_size,
        });
        first_run_dictionaries.push((
            algorithm,
            runs[0][a].dictionaries.clone().unwrap_or_default(),
        ));
    }

    Ok(MetricsTrace {
        rounds,
        sigma: kernel.sigma(),
        run_seeds: seeds.to_vec(),
        traces,
        first_run_dictionaries,
    })
}

/// Runs the experiment once per network size. Baselines are dropped, since
/// they do not depend on the network.
pub fn sweep_network_size(config: &ExperimentConfig, sizes: &[usize]) -> Result<Vec<SweepPoint>> {
    if sizes.is_empty() {
        return Err(Error::invalid(
            "sizes",
            "at least one network size is required",
        ));
    }
    if let Some(bad) = sizes.iter().find(|&&s| s == 0) {
        return Err(Error::invalid(
            "sizes",
            format!("network size {bad} must be >= 1"),
        ));
    }
    let mut points = Vec::with_capacity(sizes.len() * config.algorithms.len());
    for &size in sizes {
        let mut cfg = config.clone();
        cfg.stream.node_count = size;
        cfg.baselines.clear();
        let trace = run_experiment(&cfg)?;
        for t in &trace.traces {
            points.push(SweepPoint {
                algorithm: t.algorithm,
                node_count: size,
                mse_floor: t.mse_floor,
                avg_final_dict_size: t.mean_final_dict_size(),
            });
        }
    }
    Ok(points)
}

/// Budget matching the unbudgeted quantized filter's steady state: the
/// floor of its mean final dictionary size.
pub fn calibrate_budget(config: &ExperimentConfig) -> Result<usize> {
    let mut cfg = config.clone();
    cfg.algorithms = vec![Algorithm::Qdklms];
    cfg.baselines.clear();
    cfg.hyper.budget = None;
    let trace = run_experiment(&cfg)?;
    let size = trace.traces[0].mean_final_dict_size();
    Ok((size.floor() as usize).max(1))
}

/// Provenance written next to every metrics file.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Sidecar {
    pub config: ExperimentConfig,
    pub run_seeds: Vec<u64>,
}

pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

fn write_sidecar(
    config: &ExperimentConfig,
    seeds: Vec<u64>,
    sigma: Option<f64>,
    csv: &Path,
) -> Result<PathBuf> {
    let mut resolved = config.clone();
    if let Some(s) = sigma {
        resolved.kernel.sigma = Some(s);
    }
    let sidecar = Sidecar {
        config: resolved,
        run_seeds: seeds,
    };
    let path = sidecar_path(csv);
    let mut f = BufWriter::new(File::create(&path)?);
    serde_json::to_writer_pretty(&mut f, &sidecar)?;
    writeln!(f)?;
    f.flush()?;
    Ok(path)
}

/// Writes `algorithm,round,mse,avg_dict_size` rows (rounds numbered from 1)
/// to `path` and the resolved config to the `.json` sidecar. Returns the
/// paths written.
pub fn write_metrics(
    trace: &MetricsTrace,
    config: &ExperimentConfig,
    path: &Path,
) -> Result<Vec<PathBuf>> {
    if trace.traces.is_empty() {
        return Err(Error::invalid(
            "algorithms",
            "nothing to write: no algorithm traces",
        ));
    }
    let mut f = BufWriter::new(File::create(path)?);
    writeln!(f, "algorithm,round,mse,avg_dict_size")?;
    for t in &trace.traces {
        for (r, (mse, size)) in t
            .mse_per_round
            .iter()
            .zip(&t.dict_size_per_round)
            .enumerate()
        {
            writeln!(f, "{},{},{},{}", t.algorithm, r + 1, mse, size)?;
        }
    }
    f.flush()?;
    let sidecar = write_sidecar(config, trace.run_seeds.clone(), Some(trace.sigma), path)?;
    Ok(vec![path.to_path_buf(), sidecar])
}

/// Writes `algorithm,node_count,mse_floor,avg_final_dict_size` rows and the
/// config sidecar.
pub fn write_sweep(
    points: &[SweepPoint],
    config: &ExperimentConfig,
    path: &Path,
) -> Result<Vec<PathBuf>> {
    if points.is_empty() {
        return Err(Error::invalid("sizes", "nothing to write: empty sweep"));
    }
    let mut f = BufWriter::new(File::create(path)?);
    writeln!(f, "algorithm,node_count,mse_floor,avg_final_dict_size")?;
    for p in points {
        writeln!(
            f,
            "{},{},{},{}",
            p.algorithm, p.node_count, p.mse_floor, p.avg_final_dict_size
        )?;
    }
    f.flush()?;
    let sigma = config.resolve_kernel()?.sigma();
    let sidecar = write_sidecar(config, run_seeds(config), Some(sigma), path)?;
    Ok(vec![path.to_path_buf(), sidecar])
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRow {
    pub algorithm: Algorithm,
    pub round: usize,
    pub mse: f64,
    pub avg_dict_size: f64,
}

pub fn parse_metrics_csv(text: &str) -> Result<Vec<MetricsRow>> {
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default();
    if header != "algorithm,round,mse,avg_dict_size" {
        return Err(Error::invalid(
            "metrics",
            format!("unexpected header `{header}`"),
        ));
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let bad = |what: &str| Error::invalid("metrics", format!("line {}: {what}", i + 2));
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 4 {
                return Err(bad("expected 4 columns"));
            }
            Ok(MetricsRow {
                algorithm: cols[0].parse()?,
                round: cols[1].parse().map_err(|_| bad("bad round"))?,
                mse: cols[2].parse().map_err(|_| bad("bad mse"))?,
                avg_dict_size: cols[3].parse().map_err(|_| bad("bad avg_dict_size"))?,
            })
        })
        .collect()
}
