//! Network topology, combination matrices, and the two diffusion primitives.
//!
//! Conventions: the error-diffusion matrix `A` is indexed `a[q][l]` and each
//! row sums to one, so `e'_q = sum_l a[q][l] e_l`. The fusion matrix `C` is
//! indexed `c[l][q]` and each column sums to one, so
//! `x'_q = sum_l c[l][q] x_l`. Both are supported only on the graph.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

const PLACEMENT_RETRIES: usize = 1000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TopologyKind {
    Ring,
    RandomGeometric,
    Complete,
}

impl FromStr for TopologyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ring" => Ok(Self::Ring),
            "random-geometric" => Ok(Self::RandomGeometric),
            "complete" => Ok(Self::Complete),
            other => Err(Error::invalid(
                "topology",
                format!("unknown kind `{other}`"),
            )),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CombinationRule {
    Uniform,
    Metropolis,
}

/// Undirected graph with self-loops. `neighbors[q]` is sorted and contains `q`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    node_count: usize,
    neighbors: Vec<Vec<usize>>,
    /// Node placement in the unit square, for random-geometric graphs.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    positions: Option<Vec<[f64; 2]>>,
}

impl Topology {
    /// Builds a topology from undirected edges. Self-loops are added and
    /// duplicate edges ignored.
    pub fn from_edges(node_count: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if node_count == 0 {
            return Err(Error::invalid("node_count", "must be >= 1"));
        }
        let mut neighbors: Vec<Vec<usize>> = (0..node_count).map(|q| vec![q]).collect();
        for &(a, b) in edges {
            if a >= node_count || b >= node_count {
                return Err(Error::Network(format!(
                    "edge ({a}, {b}) references a missing node"
                )));
            }
            neighbors[a].push(b);
            neighbors[b].push(a);
        }
        for list in &mut neighbors {
            list.sort_unstable();
            list.dedup();
        }
        Ok(Self {
            node_count,
            neighbors,
            positions: None,
        })
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn neighbors(&self, q: usize) -> &[usize] {
        &self.neighbors[q]
    }

    pub fn positions(&self) -> Option<&[[f64; 2]]> {
        self.positions.as_deref()
    }

    pub fn is_neighbor(&self, q: usize, l: usize) -> bool {
        self.neighbors[q].binary_search(&l).is_ok()
    }

    pub fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.node_count];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        while let Some(q) = queue.pop_front() {
            for &l in &self.neighbors[q] {
                if !seen[l] {
                    seen[l] = true;
                    queue.push_back(l);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }
}

/// Builds a connected topology. Random-geometric graphs place nodes uniformly
/// in the unit square and link pairs within `radius`; placement is redrawn
/// until the graph is connected.
pub fn build_topology(
    kind: TopologyKind,
    node_count: usize,
    seed: u64,
    radius: Option<f64>,
) -> Result<Topology> {
    if node_count == 0 {
        return Err(Error::invalid("node_count", "must be >= 1"));
    }
    match kind {
        TopologyKind::Ring => {
            let edges: Vec<_> = (0..node_count).map(|q| (q, (q + 1) % node_count)).collect();
            Topology::from_edges(node_count, &edges)
        }
        TopologyKind::Complete => {
            let mut edges = Vec::new();
            for a in 0..node_count {
                for b in a + 1..node_count {
                    edges.push((a, b));
                }
            }
            Topology::from_edges(node_count, &edges)
        }
        TopologyKind::RandomGeometric => {
            let radius = radius.ok_or_else(|| {
                Error::invalid("network.radius", "required for random-geometric topology")
            })?;
            if !(radius.is_finite() && radius > 0.0) {
                return Err(Error::invalid("network.radius", "must be finite and > 0"));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..PLACEMENT_RETRIES {
                let positions: Vec<[f64; 2]> = (0..node_count)
                    .map(|_| [rng.random::<f64>(), rng.random::<f64>()])
                    .collect();
                let mut edges = Vec::new();
                for a in 0..node_count {
                    for b in a + 1..node_count {
                        let dx = positions[a][0] - positions[b][0];
                        let dy = positions[a][1] - positions[b][1];
                        if (dx * dx + dy * dy).sqrt() <= radius {
                            edges.push((a, b));
                        }
                    }
                }
                let mut topo = Topology::from_edges(node_count, &edges)?;
                if topo.is_connected() {
                    topo.positions = Some(positions);
                    return Ok(topo);
                }
            }
            Err(Error::Network(format!(
                "no connected placement of {node_count} nodes with radius {radius} after {PLACEMENT_RETRIES} attempts"
            )))
        }
    }
}

/// Dense square matrix of combination weights, row-major.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "Vec<Vec<f64>>", try_from = "Vec<Vec<f64>>")]
pub struct CombinationMatrix {
    n: usize,
    data: Vec<f64>,
}

impl fmt::Debug for CombinationMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.data.chunks(self.n)).finish()
    }
}

impl From<CombinationMatrix> for Vec<Vec<f64>> {
    fn from(m: CombinationMatrix) -> Self {
        m.data.chunks(m.n).map(<[f64]>::to_vec).collect()
    }
}

impl TryFrom<Vec<Vec<f64>>> for CombinationMatrix {
    type Error = Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::invalid("matrix", "must have at least one row"));
        }
        let mut data = Vec::with_capacity(n * n);
        for row in rows {
            check_dim(n, row.len())?;
            data.extend(row);
        }
        Ok(Self { n, data })
    }
}

impl CombinationMatrix {
    pub fn identity(n: usize) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        Self { n, data }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.n + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.n..(row + 1) * self.n]
    }

    pub fn transpose(&self) -> Self {
        let n = self.n;
        let mut data = vec![0.0; n * n];
        for r in 0..n {
            for c in 0..n {
                data[c * n + r] = self.data[r * n + c];
            }
        }
        Self { n, data }
    }

    pub fn row_sum(&self, row: usize) -> f64 {
        self.row(row).iter().sum()
    }

    pub fn col_sum(&self, col: usize) -> f64 {
        (0..self.n).map(|r| self.get(r, col)).sum()
    }
}

/// Row-stochastic weights supported on `topo`: row `q` holds node `q`'s
/// weights over its neighborhood.
///
/// `Uniform` gives `1/|N_q|` to every neighbor. `Metropolis` gives
/// `1/max(|N_q|, |N_l|)` to each neighbor `l != q` and the residual to `q`
/// itself, which makes the matrix symmetric and doubly stochastic.
pub fn build_combination_matrix(topo: &Topology, rule: CombinationRule) -> CombinationMatrix {
    let n = topo.node_count();
    let mut data = vec![0.0; n * n];
    for q in 0..n {
        let nbrs = topo.neighbors(q);
        match rule {
            CombinationRule::Uniform => {
                let w = 1.0 / nbrs.len() as f64;
                for &l in nbrs {
                    data[q * n + l] = w;
                }
            }
            CombinationRule::Metropolis => {
                let mut off = 0.0;
                for &l in nbrs.iter().filter(|&&l| l != q) {
                    let w = 1.0 / nbrs.len().max(topo.neighbors(l).len()) as f64;
                    data[q * n + l] = w;
                    off += w;
                }
                data[q * n + q] = 1.0 - off;
            }
        }
    }
    CombinationMatrix { n, data }
}

/// The error-diffusion matrix `A` (rows sum to one) and the observation
/// fusion matrix `C` (columns sum to one).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CombinationMatrices {
    pub a: CombinationMatrix,
    pub c: CombinationMatrix,
}

impl CombinationMatrices {
    /// Both matrices from `topo`; `C` is the transpose of its row-stochastic
    /// form so that node `q`'s fusion weights are column `q`.
    pub fn new(topo: &Topology, rule_a: CombinationRule, rule_c: CombinationRule) -> Self {
        Self {
            a: build_combination_matrix(topo, rule_a),
            c: build_combination_matrix(topo, rule_c).transpose(),
        }
    }

    pub fn single_node() -> Self {
        Self {
            a: CombinationMatrix::identity(1),
            c: CombinationMatrix::identity(1),
        }
    }

    pub fn node_count(&self) -> usize {
        self.a.size()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.a.size();
        check_dim(n, self.c.size())?;
        for q in 0..n {
            for l in 0..n {
                if self.a.get(q, l) < 0.0 || self.c.get(l, q) < 0.0 {
                    return Err(Error::invalid("matrices", "weights must be nonnegative"));
                }
            }
            if (self.a.row_sum(q) - 1.0).abs() > 1e-9 {
                return Err(Error::invalid(
                    "matrices.a",
                    format!("row {q} does not sum to 1"),
                ));
            }
            if (self.c.col_sum(q) - 1.0).abs() > 1e-9 {
                return Err(Error::invalid(
                    "matrices.c",
                    format!("column {q} does not sum to 1"),
                ));
            }
        }
        Ok(())
    }
}

/// `x'_q = sum_l c[l][q] x_l`.
pub fn fuse_observations(
    c: &CombinationMatrix,
    node: usize,
    observations: &[Vec<f64>],
) -> Result<Vec<f64>> {
    check_dim(c.size(), observations.len())?;
    let dim = observations.first().map_or(0, Vec::len);
    let mut fused = vec![0.0; dim];
    for (l, x) in observations.iter().enumerate() {
        check_dim(dim, x.len())?;
        let w = c.get(l, node);
        if w != 0.0 {
            for (f, v) in fused.iter_mut().zip(x) {
                *f += w * v;
            }
        }
    }
    Ok(fused)
}

/// Fusion when some nodes did not report this round. Missing nodes are
/// treated as zero vectors with zero weight, and the remaining weights are
/// renormalized to sum to one.
pub fn fuse_observations_masked(
    c: &CombinationMatrix,
    node: usize,
    observations: &[Option<&[f64]>],
) -> Result<Vec<f64>> {
    check_dim(c.size(), observations.len())?;
    let dim = observations
        .iter()
        .flatten()
        .next()
        .map(|x| x.len())
        .ok_or_else(|| Error::State("no node reported an observation".into()))?;
    let mut fused = vec![0.0; dim];
    let mut mass = 0.0;
    for (l, x) in observations.iter().enumerate() {
        let Some(x) = x else { continue };
        check_dim(dim, x.len())?;
        let w = c.get(l, node);
        mass += w;
        for (f, v) in fused.iter_mut().zip(x.iter()) {
            *f += w * v;
        }
    }
    if mass <= 0.0 {
        return Err(Error::State(format!(
            "node {node} has no reporting neighbors"
        )));
    }
    for f in &mut fused {
        *f /= mass;
    }
    Ok(fused)
}

/// `A e`: each node's error replaced by its neighborhood combination.
pub fn diffuse_errors(a: &CombinationMatrix, errors: &[f64]) -> Result<Vec<f64>> {
    check_dim(a.size(), errors.len())?;
    Ok((0..a.size())
        .map(|q| diffuse_error_at(a, q, errors))
        .collect())
}

#[inline]
pub(crate) fn diffuse_error_at(a: &CombinationMatrix, q: usize, errors: &[f64]) -> f64 {
    a.row(q).iter().zip(errors).map(|(w, e)| w * e).sum()
}
