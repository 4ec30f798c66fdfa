//! Reference implementations used as test oracles. Written against the
//! algorithm definitions directly, sharing no code with the library beyond
//! the event types they read.
#![allow(dead_code, clippy::needless_range_loop, clippy::assign_op_pattern)]

use kafnet::filters::{DictionaryEvent, EventKind};

#[derive(Clone, Debug)]
pub struct Entry {
    pub center: Vec<f64>,
    pub weight: f64,
    pub sig: f64,
    pub age: f64,
}

pub fn kern(sigma: f64, x: &[f64], y: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..x.len() {
        let d = x[i] - y[i];
        s += d * d;
    }
    (-s / (sigma * sigma)).exp()
}

fn dist(x: &[f64], y: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..x.len() {
        s += (x[i] - y[i]) * (x[i] - y[i]);
    }
    s.sqrt()
}

/// Whole-network reference filter.
///
/// `a[q][l]` weighs node `l`'s error at node `q`; `c[l][q]` weighs node `l`'s
/// observation in node `q`'s fused regressor.
pub struct Oracle {
    pub eta: f64,
    pub eps: f64,
    pub zeta: f64,
    pub sigma: f64,
    pub budget: Option<usize>,
    pub track: bool,
    pub a: Vec<Vec<f64>>,
    pub c: Vec<Vec<f64>>,
    pub dicts: Vec<Vec<Entry>>,
}

pub struct OracleRound {
    pub y: Vec<f64>,
    pub e: Vec<f64>,
    pub e_diff: Vec<f64>,
}

impl Oracle {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        eta: f64,
        eps: f64,
        zeta: f64,
        sigma: f64,
        budget: Option<usize>,
        track: bool,
        a: Vec<Vec<f64>>,
        c: Vec<Vec<f64>>,
        x0: &[Vec<f64>],
        d0: &[f64],
    ) -> Self {
        let dicts = x0
            .iter()
            .zip(d0)
            .map(|(x, &d)| {
                vec![Entry {
                    center: x.clone(),
                    weight: eta * d,
                    sig: d.abs(),
                    age: 1.0,
                }]
            })
            .collect();
        Self {
            eta,
            eps,
            zeta,
            sigma,
            budget,
            track,
            a,
            c,
            dicts,
        }
    }

    pub fn round(&mut self, xs: &[Vec<f64>], ds: &[f64]) -> OracleRound {
        let n = xs.len();
        let dim = xs[0].len();
        let mut y = vec![0.0; n];
        let mut e = vec![0.0; n];
        for q in 0..n {
            let mut xf = vec![0.0; dim];
            for l in 0..n {
                for i in 0..dim {
                    xf[i] += self.c[l][q] * xs[l][i];
                }
            }
            let mut s = 0.0;
            for ent in &self.dicts[q] {
                s += ent.weight * kern(self.sigma, &ent.center, &xf);
            }
            y[q] = s;
            e[q] = ds[q] - s;
        }
        let mut e_diff = vec![0.0; n];
        for q in 0..n {
            let mut s = 0.0;
            for l in 0..n {
                s += self.a[q][l] * e[l];
            }
            e_diff[q] = s;
        }
        for q in 0..n {
            let ep = e_diff[q];
            let x = &xs[q];
            let (eta, zeta, sigma) = (self.eta, self.zeta, self.sigma);
            let d = &mut self.dicts[q];
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (j, ent) in d.iter().enumerate() {
                let dj = dist(&ent.center, x);
                if dj < best_d {
                    best_d = dj;
                    best = j;
                }
            }
            if best_d <= self.eps {
                let js = best;
                if self.track {
                    let cs = d[js].center.clone();
                    let w_old = d[js].weight;
                    let w_new = (w_old + eta * ep).abs();
                    for j in 0..d.len() {
                        if j == js {
                            continue;
                        }
                        d[j].sig =
                            zeta * d[j].sig + d[j].weight.abs() * kern(sigma, &d[j].center, &cs);
                        d[j].age = zeta * d[j].age;
                    }
                    let ratio = if w_old == 0.0 {
                        1.0
                    } else {
                        w_new / w_old.abs()
                    };
                    d[js].sig = ratio * zeta * d[js].sig + w_new * 1.0;
                    d[js].age = zeta * d[js].age + 1.0;
                }
                d[js].weight += eta * ep;
            } else {
                if self.track {
                    for j in 0..d.len() {
                        d[j].sig = zeta * d[j].sig + ep.abs() * kern(sigma, &d[j].center, x);
                    }
                }
                d.push(Entry {
                    center: x.clone(),
                    weight: eta * ep,
                    sig: ep.abs(),
                    age: 1.0,
                });
            }
            if let Some(b) = self.budget {
                if d.len() > b {
                    let mut low = 0;
                    for j in 1..d.len() {
                        if d[j].sig < d[low].sig {
                            low = j;
                        }
                    }
                    let gone = d.remove(low);
                    for j in 0..d.len() {
                        d[j].sig -=
                            d[j].weight.abs() * gone.age * kern(sigma, &d[j].center, &gone.center);
                        d[j].age = zeta * d[j].age + 1.0;
                    }
                }
            }
        }
        OracleRound { y, e, e_diff }
    }
}

/// Replays logged dictionary events against `dicts` (the dictionaries as they
/// stood before the first event) and returns the largest deviation of any
/// significance or age value from what the log recorded.
pub fn replay_significance(
    dicts: &mut [Vec<Entry>],
    events: &[DictionaryEvent],
    eta: f64,
    zeta: f64,
    sigma: f64,
) -> Result<f64, String> {
    let mut worst: f64 = 0.0;
    for (i, ev) in events.iter().enumerate() {
        let d = &mut dicts[ev.node];
        match &ev.kind {
            EventKind::Add {
                center,
                diffused_error,
            } => {
                for ent in d.iter_mut() {
                    ent.sig =
                        zeta * ent.sig + diffused_error.abs() * kern(sigma, &ent.center, center);
                }
                d.push(Entry {
                    center: center.clone(),
                    weight: eta * diffused_error,
                    sig: diffused_error.abs(),
                    age: 1.0,
                });
            }
            EventKind::Merge {
                index,
                diffused_error,
            } => {
                let js = *index;
                let cs = d[js].center.clone();
                let w_old = d[js].weight;
                let w_new = (w_old + eta * diffused_error).abs();
                for j in 0..d.len() {
                    if j != js {
                        d[j].sig =
                            zeta * d[j].sig + d[j].weight.abs() * kern(sigma, &d[j].center, &cs);
                        d[j].age *= zeta;
                    }
                }
                let ratio = if w_old == 0.0 {
                    1.0
                } else {
                    w_new / w_old.abs()
                };
                d[js].sig = ratio * zeta * d[js].sig + w_new;
                d[js].age = zeta * d[js].age + 1.0;
                d[js].weight += eta * diffused_error;
            }
            EventKind::Prune { index } => {
                let mut low = 0;
                for j in 1..d.len() {
                    if d[j].sig < d[low].sig {
                        low = j;
                    }
                }
                if low != *index {
                    return Err(format!("event {i}: log pruned {index}, replay picks {low}"));
                }
                let gone = d.remove(low);
                for ent in d.iter_mut() {
                    ent.sig -= ent.weight.abs() * gone.age * kern(sigma, &ent.center, &gone.center);
                    ent.age = zeta * ent.age + 1.0;
                }
            }
        }
        if d.len() != ev.significance.len() || d.len() != ev.age.len() {
            return Err(format!(
                "event {i}: size {} vs logged {}",
                d.len(),
                ev.significance.len()
            ));
        }
        for (j, ent) in d.iter().enumerate() {
            worst = worst.max((ent.sig - ev.significance[j]).abs());
            worst = worst.max((ent.age - ev.age[j]).abs());
        }
    }
    Ok(worst)
}

pub fn uniform_complete(n: usize) -> Vec<Vec<f64>> {
    vec![vec![1.0 / n as f64; n]; n]
}

pub fn transpose(m: &[Vec<f64>]) -> Vec<Vec<f64>> {
    (0..m[0].len())
        .map(|j| m.iter().map(|row| row[j]).collect())
        .collect()
}

/// Largest absolute difference between two equally long slices.
pub fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

pub mod golden {
    use super::*;
    use kafnet::filters::{Algorithm, FilterHyperparams, NetworkFilter};
    use kafnet::kernel::KernelParams;
    use kafnet::network::{CombinationMatrices, CombinationRule, Topology};

    pub const ETA: f64 = 0.5;
    pub const EPS: f64 = 0.3;
    pub const ZETA: f64 = 0.75;
    pub const BUDGET: usize = 2;

    pub fn initial() -> (Vec<Vec<f64>>, Vec<f64>) {
        (
            vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]],
            vec![1.0, -1.0, 0.5],
        )
    }

    pub fn script() -> Vec<(Vec<Vec<f64>>, Vec<f64>)> {
        vec![
            (
                vec![vec![0.125, 0.0], vec![1.0, 0.25], vec![0.5, 0.5]],
                vec![1.0, -1.0, 0.5],
            ),
            (
                vec![vec![2.0, 2.0], vec![1.0, 0.0], vec![0.0, 1.125]],
                vec![-1.0, 1.0, 0.5],
            ),
            (
                vec![vec![0.0, 0.25], vec![-1.0, -1.0], vec![0.5, 0.5]],
                vec![0.5, -0.5, 1.0],
            ),
            (
                vec![vec![2.0, 1.875], vec![1.25, 0.0], vec![-1.0, -1.0]],
                vec![-1.0, 1.0, -0.5],
            ),
            (
                vec![vec![0.5, 0.5], vec![0.0, 0.0], vec![1.0, 1.0]],
                vec![0.25, 0.75, -1.0],
            ),
        ]
    }

    /// Complete graph with uniform weights, or the path 0-1-2 with
    /// Metropolis errors and uniform observation weights.
    fn matrices(path: bool) -> (CombinationMatrices, Vec<Vec<f64>>, Vec<Vec<f64>>) {
        if path {
            let topo = Topology::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
            let m = CombinationMatrices::new(
                &topo,
                CombinationRule::Metropolis,
                CombinationRule::Uniform,
            );
            let t = 1.0 / 3.0;
            let a = vec![vec![2.0 * t, t, 0.0], vec![t, t, t], vec![0.0, t, 2.0 * t]];
            let u = vec![vec![0.5, 0.5, 0.0], vec![t, t, t], vec![0.0, 0.5, 0.5]];
            (m, a, transpose(&u))
        } else {
            let topo = Topology::from_edges(3, &[(0, 1), (1, 2), (0, 2)]).unwrap();
            let m =
                CombinationMatrices::new(&topo, CombinationRule::Uniform, CombinationRule::Uniform);
            (m, uniform_complete(3), uniform_complete(3))
        }
    }

    /// Largest deviation between library and oracle over every output,
    /// error, diffused error and dictionary field of the scripted run.
    pub fn deviation(algorithm: Algorithm, path: bool) -> f64 {
        let (m, a, c) = matrices(path);
        let (x0, d0) = initial();
        let budgeted = algorithm == Algorithm::Fbqdklms;
        let hyper = FilterHyperparams {
            eta: ETA,
            epsilon: EPS,
            zeta: ZETA,
            budget: budgeted.then_some(BUDGET),
            kernel: KernelParams::new(1.0).unwrap(),
        };
        let oracle_eps = match algorithm {
            Algorithm::Dklms => -1.0,
            _ => EPS,
        };
        let mut filter = NetworkFilter::new(algorithm, hyper, m, &x0, &d0).unwrap();
        let mut oracle = Oracle::new(
            ETA,
            oracle_eps,
            ZETA,
            1.0,
            hyper.budget,
            budgeted,
            a,
            c,
            &x0,
            &d0,
        );
        let mut worst: f64 = 0.0;
        for (xs, ds) in script() {
            let got = filter.network_round(&xs, &ds).unwrap();
            let want = oracle.round(&xs, &ds);
            worst = worst.max(max_diff(&got.outputs, &want.y));
            worst = worst.max(max_diff(&got.errors, &want.e));
            let diffused: Vec<f64> = filter
                .nodes()
                .iter()
                .map(|n| n.last_diffused_error)
                .collect();
            worst = worst.max(max_diff(&diffused, &want.e_diff));
            for (node, od) in filter.nodes().iter().zip(&oracle.dicts) {
                let entries = node.dictionary.entries();
                if entries.len() != od.len() {
                    return f64::INFINITY;
                }
                for (e, o) in entries.iter().zip(od) {
                    worst = worst.max(max_diff(&e.center, &o.center));
                    worst = worst.max((e.weight - o.weight).abs());
                    if budgeted {
                        worst = worst.max((e.significance - o.sig).abs());
                        worst = worst.max((e.age_accum - o.age).abs());
                    }
                }
            }
        }
        worst
    }

    /// Number of (adds, merges, prunes) the oracle performs on the script,
    /// to confirm the script exercises every branch.
    pub fn branch_counts() -> (usize, usize, usize) {
        let (_, a, c) = matrices(false);
        let (x0, d0) = initial();
        let mut oracle = Oracle::new(ETA, EPS, ZETA, 1.0, Some(BUDGET), true, a, c, &x0, &d0);
        let (mut adds, mut merges, mut prunes) = (0, 0, 0);
        for (xs, ds) in script() {
            let sizes: Vec<usize> = oracle.dicts.iter().map(Vec::len).collect();
            let nearest: Vec<bool> = (0..3)
                .map(|q| {
                    oracle.dicts[q]
                        .iter()
                        .any(|e| dist(&e.center, &xs[q]) <= EPS)
                })
                .collect();
            oracle.round(&xs, &ds);
            for q in 0..3 {
                if nearest[q] {
                    merges += 1;
                } else {
                    adds += 1;
                    if sizes[q] + 1 > BUDGET {
                        prunes += 1;
                    }
                }
            }
        }
        (adds, merges, prunes)
    }
}

pub mod reductions {
    use kafnet::datasets::{generate, ChannelParams, SourceMode, Stream, StreamSpec, Task};
    use kafnet::filters::{Algorithm, FilterHyperparams, NetworkFilter};
    use kafnet::kernel::KernelParams;
    use kafnet::network::{build_topology, CombinationMatrices, CombinationRule, TopologyKind};

    pub const ROUNDS: usize = 200;
    pub const SEEDS: [u64; 3] = [11, 2016, 90210];

    pub fn stream(task: Task, nodes: usize, seed: u64) -> Stream {
        generate(&StreamSpec {
            task,
            node_count: nodes,
            rounds: ROUNDS,
            seed,
            noise_std: 0.2,
            source: SourceMode::Shared,
            jitter: None,
            channel: ChannelParams::default(),
        })
        .unwrap()
    }

    fn hyper(epsilon: f64, budget: Option<usize>) -> FilterHyperparams {
        FilterHyperparams {
            eta: 0.1,
            epsilon,
            zeta: 0.99,
            budget,
            kernel: KernelParams::new(0.8).unwrap(),
        }
    }

    fn network(nodes: usize) -> CombinationMatrices {
        let topo = build_topology(TopologyKind::RandomGeometric, nodes, 5, Some(0.6)).unwrap();
        CombinationMatrices::new(&topo, CombinationRule::Metropolis, CombinationRule::Uniform)
    }

    fn start(
        alg: Algorithm,
        h: FilterHyperparams,
        m: CombinationMatrices,
        s: &Stream,
    ) -> NetworkFilter {
        let (x0, d0) = Stream::split(s.initial());
        NetworkFilter::new(alg, h, m, &x0, &d0).unwrap()
    }

    /// QDKLMS on one node with unit weights against QKLMS, step by step.
    pub fn single_node_qdklms_is_qklms(seed: u64) -> Result<(), String> {
        let s = stream(Task::Channel, 1, seed);
        let h = hyper(0.5, None);
        let mut net = start(Algorithm::Qdklms, h, CombinationMatrices::single_node(), &s);
        let first = &s.initial()[0];
        let mut q =
            NetworkFilter::single(Algorithm::Qklms, h, &first.input, first.desired).unwrap();
        for r in 0..s.rounds() {
            let (xs, ds) = Stream::split(s.round(r));
            let out = net.network_round(&xs, &ds).unwrap();
            let (y, e) = q.qklms_step(&xs[0], ds[0]).unwrap();
            if out.outputs[0].to_bits() != y.to_bits() || out.errors[0].to_bits() != e.to_bits() {
                return Err(format!(
                    "seed {seed} round {r}: ({}, {}) vs ({y}, {e})",
                    out.outputs[0], out.errors[0]
                ));
            }
            if net.nodes() != q.nodes() {
                return Err(format!("seed {seed} round {r}: node state differs"));
            }
        }
        Ok(())
    }

    /// FBQDKLMS with an unreachable budget against QDKLMS on four nodes.
    /// Significance is bookkeeping only, so everything else must agree.
    pub fn huge_budget_is_qdklms(seed: u64) -> Result<(), String> {
        let s = stream(Task::Crescent, 4, seed);
        let mut fb = start(
            Algorithm::Fbqdklms,
            hyper(0.15, Some(1_000_000)),
            network(4),
            &s,
        );
        let mut qd = start(Algorithm::Qdklms, hyper(0.15, None), network(4), &s);
        for r in 0..s.rounds() {
            let (xs, ds) = Stream::split(s.round(r));
            let a = fb.network_round(&xs, &ds).unwrap();
            let b = qd.network_round(&xs, &ds).unwrap();
            if a != b {
                return Err(format!("seed {seed} round {r}: outputs differ"));
            }
            for (p, q) in fb.nodes().iter().zip(qd.nodes()) {
                let same = p.dictionary.len() == q.dictionary.len()
                    && p.dictionary
                        .entries()
                        .iter()
                        .zip(q.dictionary.entries())
                        .all(|(x, y)| {
                            x.center == y.center && x.weight.to_bits() == y.weight.to_bits()
                        });
                if !same || p.last_diffused_error.to_bits() != q.last_diffused_error.to_bits() {
                    return Err(format!("seed {seed} round {r}: dictionaries differ"));
                }
            }
        }
        Ok(())
    }

    /// QDKLMS with a zero radius against DKLMS on four nodes.
    pub fn zero_radius_is_dklms(seed: u64) -> Result<(), String> {
        let s = stream(Task::Spiral, 4, seed);
        let mut qd = start(Algorithm::Qdklms, hyper(0.0, None), network(4), &s);
        let mut dk = start(Algorithm::Dklms, hyper(0.0, None), network(4), &s);
        for r in 0..s.rounds() {
            let (xs, ds) = Stream::split(s.round(r));
            let a = qd.network_round(&xs, &ds).unwrap();
            let b = dk.dklms_step(&xs, &ds).unwrap();
            if a != b || qd.nodes() != dk.nodes() {
                return Err(format!("seed {seed} round {r}: state differs"));
            }
        }
        Ok(())
    }
}
