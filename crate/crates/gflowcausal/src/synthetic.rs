//! Ground-truth graphs and observational data for linear SEMs.
//!
//! Graphs come from two families: Erdős–Rényi draws (uniform edge presence
//! under a random node permutation) and scale-free preferential attachment.
//! Data is simulated ancestrally: each variable is a weighted sum of its
//! parents plus independent Gaussian or Gumbel noise.

use crate::bitmat::BitMatrix;
use crate::graph::is_acyclic;
use nalgebra::DMatrix;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gumbel, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("node count must be at least 2, got {0}")]
    InvalidDimension(usize),
    #[error("infeasible edge density: beta {beta} at d {d} (need 1 <= beta and beta*d <= d(d-1)/2)")]
    InvalidDensity { d: usize, beta: f64 },
    #[error("attachment count must satisfy 1 <= beta < d, got beta {beta} at d {d}")]
    InvalidAttachment { d: usize, beta: usize },
    #[error("adjacency matrix contains a cycle")]
    CyclicGraph,
    #[error("sample count must be positive")]
    EmptyDataset,
}

/// Additive-noise family for the structural equations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub scale: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    Gaussian,
    /// Location 0, scale as given.
    Gumbel,
}

impl NoiseSpec {
    pub fn gaussian(scale: f64) -> Self {
        NoiseSpec {
            kind: NoiseKind::Gaussian,
            scale,
        }
    }

    pub fn gumbel(scale: f64) -> Self {
        NoiseSpec {
            kind: NoiseKind::Gumbel,
            scale,
        }
    }

    fn sample(&self, rng: &mut impl Rng) -> f64 {
        match self.kind {
            NoiseKind::Gaussian => Normal::new(0.0, self.scale).unwrap().sample(rng),
            NoiseKind::Gumbel => Gumbel::new(0.0, self.scale).unwrap().sample(rng),
        }
    }
}

/// Ground truth: binary skeleton plus edge weights (`weights[i][j]` nonzero
/// iff the adjacency has edge j -> i).
#[derive(Debug, Clone)]
pub struct WeightedGraph {
    pub adjacency: BitMatrix,
    pub weights: DMatrix<f64>,
}

impl WeightedGraph {
    pub fn node_count(&self) -> usize {
        self.adjacency.size()
    }
}

/// Observation matrix: n rows (samples) by d columns (variables).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub names: Vec<String>,
    pub values: DMatrix<f64>,
}

impl Dataset {
    pub fn new(values: DMatrix<f64>) -> Self {
        let names = (1..=values.ncols()).map(|i| format!("x{i}")).collect();
        Dataset { names, values }
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn d(&self) -> usize {
        self.values.ncols()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.values.column(j).iter().copied().collect()
    }

    /// Population (biased) variance of column `j`.
    pub fn column_variance(&self, j: usize) -> f64 {
        let col = self.values.column(j);
        let n = col.len() as f64;
        let mean = col.sum() / n;
        col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n
    }

    /// Columns rescaled to zero mean, unit variance.
    pub fn standardized(&self) -> Dataset {
        let mut values = self.values.clone();
        for j in 0..values.ncols() {
            let mean = values.column(j).sum() / values.nrows() as f64;
            let var = self.column_variance(j);
            let sd = var.sqrt().max(f64::MIN_POSITIVE);
            for i in 0..values.nrows() {
                values[(i, j)] = (values[(i, j)] - mean) / sd;
            }
        }
        Dataset {
            names: self.names.clone(),
            values,
        }
    }
}

/// Erdős–Rényi DAG with on average `beta * d` edges: under a uniformly random
/// node permutation, each of the d(d-1)/2 forward positions is included
/// independently with probability beta*d / (d(d-1)/2).
pub fn sample_er_graph(d: usize, beta: f64, seed: u64) -> Result<BitMatrix, SynthError> {
    if d < 2 {
        return Err(SynthError::InvalidDimension(d));
    }
    let max_edges = (d * (d - 1) / 2) as f64;
    if beta < 1.0 || beta * d as f64 > max_edges {
        return Err(SynthError::InvalidDensity { d, beta });
    }
    let p = beta * d as f64 / max_edges;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..d).collect();
    order.shuffle(&mut rng);
    let mut adj = BitMatrix::zeros(d);
    for i in 0..d {
        for j in (i + 1)..d {
            if rng.random_bool(p) {
                // Edge order[i] -> order[j]: earlier in the permutation is the parent.
                adj.set(order[j], order[i], true);
            }
        }
    }
    Ok(adj)
}

/// Scale-free DAG by preferential attachment: nodes arrive in index order and
/// each new node receives `beta` edges from distinct existing nodes chosen
/// with probability proportional to (total degree + 1). Edges always point
/// old -> new, so the result is acyclic with
/// beta*(d-beta) + beta*(beta-1)/2 edges.
pub fn sample_sf_graph(d: usize, beta: usize, seed: u64) -> Result<BitMatrix, SynthError> {
    if d < 2 {
        return Err(SynthError::InvalidDimension(d));
    }
    if beta == 0 || beta >= d {
        return Err(SynthError::InvalidAttachment { d, beta });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut adj = BitMatrix::zeros(d);
    let mut degree = vec![0usize; d];
    for new in 1..d {
        let k = beta.min(new);
        let mut chosen = vec![false; new];
        for _ in 0..k {
            let total: usize = (0..new)
                .filter(|&u| !chosen[u])
                .map(|u| degree[u] + 1)
                .sum();
            let mut ticket = rng.random_range(0..total);
            let pick = (0..new)
                .filter(|&u| !chosen[u])
                .find(|&u| {
                    let w = degree[u] + 1;
                    if ticket < w {
                        true
                    } else {
                        ticket -= w;
                        false
                    }
                })
                .expect("ticket is below the total weight");
            chosen[pick] = true;
            adj.set(new, pick, true);
            degree[pick] += 1;
            degree[new] += 1;
        }
    }
    Ok(adj)
}

/// Assigns each edge a weight drawn uniformly from [-2, -0.5] ∪ [0.5, 2].
pub fn sample_weights(adj: &BitMatrix, seed: u64) -> Result<WeightedGraph, SynthError> {
    if !is_acyclic(adj) {
        return Err(SynthError::CyclicGraph);
    }
    let d = adj.size();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut weights = DMatrix::zeros(d, d);
    for (child, parent) in adj.ones() {
        let magnitude = rng.random_range(0.5..=2.0);
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        weights[(child, parent)] = sign * magnitude;
    }
    Ok(WeightedGraph {
        adjacency: adj.clone(),
        weights,
    })
}

/// Simulates `n` i.i.d. samples of the linear SEM in ancestral order:
/// x_i = sum_j weights[i][j] * x_j + noise_i.
pub fn simulate_sem(
    graph: &WeightedGraph,
    n: usize,
    noise: NoiseSpec,
    seed: u64,
) -> Result<Dataset, SynthError> {
    if n == 0 {
        return Err(SynthError::EmptyDataset);
    }
    let d = graph.node_count();
    let order = ancestral_order(&graph.adjacency);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = DMatrix::zeros(n, d);
    for row in 0..n {
        for &i in &order {
            let mut x = noise.sample(&mut rng);
            for parent in graph.adjacency.iter_row(i) {
                x += graph.weights[(i, parent)] * values[(row, parent)];
            }
            values[(row, i)] = x;
        }
    }
    Ok(Dataset::new(values))
}

/// Topological order by Kahn peeling; parents always precede children.
fn ancestral_order(adj: &BitMatrix) -> Vec<usize> {
    let d = adj.size();
    let mut indeg: Vec<usize> = (0..d).map(|v| adj.row_count_ones(v)).collect();
    let mut queue: Vec<usize> = (0..d).filter(|&v| indeg[v] == 0).collect();
    let mut order = Vec::with_capacity(d);
    while let Some(v) = queue.pop() {
        order.push(v);
        for child in 0..d {
            if adj.get(child, v) {
                indeg[child] -= 1;
                if indeg[child] == 0 {
                    queue.push(child);
                }
            }
        }
    }
    debug_assert_eq!(order.len(), d);
    order
}

/// Graph family selector for experiment configs and dataset sidecars.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GraphType {
    Er,
    Sf,
}

/// Full recipe for one synthetic dataset; doubles as the JSON sidecar written
/// next to generated data.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DataSpec {
    pub d: usize,
    pub n: usize,
    pub graph_type: GraphType,
    pub beta: f64,
    pub noise: NoiseSpec,
    pub seed: u64,
    #[serde(default)]
    pub standardize: bool,
}

impl DataSpec {
    /// Draws the ground-truth graph and simulates the dataset. The graph,
    /// weight, and noise streams are derived from `seed` so the whole recipe
    /// is reproducible from the sidecar alone.
    pub fn generate(&self) -> Result<(WeightedGraph, Dataset), SynthError> {
        let adj = match self.graph_type {
            GraphType::Er => sample_er_graph(self.d, self.beta, self.seed)?,
            GraphType::Sf => {
                if self.beta.fract() != 0.0 {
                    return Err(SynthError::InvalidAttachment {
                        d: self.d,
                        beta: self.beta as usize,
                    });
                }
                sample_sf_graph(self.d, self.beta as usize, self.seed)?
            }
        };
        let graph = sample_weights(&adj, self.seed.wrapping_add(1))?;
        let data = simulate_sem(&graph, self.n, self.noise, self.seed.wrapping_add(2))?;
        let data = if self.standardize {
            data.standardized()
        } else {
            data
        };
        Ok((graph, data))
    }
}
