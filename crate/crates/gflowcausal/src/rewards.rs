//! Terminal-state scoring: varsortability and a linear-Gaussian BIC, wrapped
//! into the non-negative reward used to weight sampled graphs.

use crate::bitmat::BitMatrix;
use crate::graph::{is_acyclic, DagState, GraphError};
use crate::linreg;
use crate::synthetic::Dataset;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum RewardError {
    #[error("adjacency matrix contains a cycle")]
    CyclicGraph,
    #[error("graph has {graph} nodes but dataset has {data} columns")]
    DimensionMismatch { graph: usize, data: usize },
    #[error("column {0} has zero variance")]
    DegenerateData(usize),
    #[error("need more than {required} samples for the largest parent set, got {n}")]
    InsufficientSamples { required: usize, n: usize },
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RewardKind {
    Varsortability,
    Bic,
}

/// Reward shaping: varsortability is scaled by `c`, the BIC score is turned
/// into exp(-S / tau). `tau` defaults to n*d when unset, which keeps the
/// exponent in a trainable range across problem sizes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardConfig {
    pub kind: RewardKind,
    #[serde(default = "default_scale")]
    pub c: f64,
    #[serde(default)]
    pub tau: Option<f64>,
}

fn default_scale() -> f64 {
    100.0
}

impl RewardConfig {
    pub fn varsortability(c: f64) -> Self {
        RewardConfig {
            kind: RewardKind::Varsortability,
            c,
            tau: None,
        }
    }

    pub fn bic(tau: Option<f64>) -> Self {
        RewardConfig {
            kind: RewardKind::Bic,
            c: default_scale(),
            tau,
        }
    }

    pub fn resolved_tau(&self, data: &Dataset) -> f64 {
        self.tau.unwrap_or((data.n() * data.d()) as f64)
    }
}

fn check_graph(adj: &BitMatrix, data: &Dataset) -> Result<(), RewardError> {
    if adj.size() != data.d() {
        return Err(RewardError::DimensionMismatch {
            graph: adj.size(),
            data: data.d(),
        });
    }
    if !is_acyclic(adj) {
        return Err(RewardError::CyclicGraph);
    }
    Ok(())
}

/// Fraction of directed paths whose start node has strictly lower marginal
/// variance than their end node; ties count one half.
///
/// Path membership at length k is the boolean k-th power of the adjacency,
/// and each ordered pair is counted once per length at which it is connected.
/// A graph with no paths at all scores the neutral 0.5.
pub fn varsortability(adj: &BitMatrix, data: &Dataset) -> Result<f64, RewardError> {
    check_graph(adj, data)?;
    let d = adj.size();
    let variances: Vec<f64> = (0..d).map(|j| data.column_variance(j)).collect();
    if let Some(col) = variances.iter().position(|v| *v == 0.0) {
        return Err(RewardError::DegenerateData(col));
    }
    let gamma = |a: f64, b: f64| -> f64 {
        if a < b {
            1.0
        } else if a == b {
            0.5
        } else {
            0.0
        }
    };
    let mut numerator = 0.0;
    let mut pairs = 0usize;
    // power[end][start] = 1 iff there is a directed path start -> end with
    // exactly k edges; the adjacency itself is k = 1.
    let mut power = adj.clone();
    for _k in 1..d {
        for (end, start) in power.ones() {
            numerator += gamma(variances[start], variances[end]);
            pairs += 1;
        }
        power = adj.bool_mul(&power);
    }
    if pairs == 0 {
        return Ok(0.5);
    }
    Ok(numerator / pairs as f64)
}

/// BIC of a linear-Gaussian fit, lower is better.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BicScore {
    pub value: f64,
    /// True when any per-node regression needed the ridge fallback.
    pub ridge_fallback: bool,
}

/// Lower-is-better linear-Gaussian BIC: each node is regressed on its
/// parents by OLS, the Gaussian log-likelihood uses the MLE residual
/// variance, and S = -2 log L + |params| log n with one parameter per edge
/// plus one residual variance per node.
pub fn bic_linear_gaussian(adj: &BitMatrix, data: &Dataset) -> Result<BicScore, RewardError> {
    check_graph(adj, data)?;
    let d = adj.size();
    let n = data.n();
    let max_indeg = (0..d).map(|v| adj.row_count_ones(v)).max().unwrap_or(0);
    if n <= max_indeg + 1 {
        return Err(RewardError::InsufficientSamples {
            required: max_indeg + 1,
            n,
        });
    }
    let nf = n as f64;
    let mut log_lik = 0.0;
    let mut param_count = d; // one residual variance per node
    let mut ridge_fallback = false;
    for child in 0..d {
        let parents: Vec<usize> = adj.iter_row(child).collect();
        let cols: Vec<Vec<f64>> = parents.iter().map(|&p| data.column(p)).collect();
        let fit = linreg::ols(&cols, &data.column(child));
        ridge_fallback |= fit.ridge_fallback;
        param_count += parents.len();
        let sigma2 = (fit.rss / nf).max(1e-300);
        log_lik += -(nf / 2.0) * ((2.0 * std::f64::consts::PI * sigma2).ln() + 1.0);
    }
    Ok(BicScore {
        value: -2.0 * log_lik + param_count as f64 * nf.ln(),
        ridge_fallback,
    })
}

/// Reward of an identified terminal state: the configured score evaluated on
/// its induced fully-connected DAG.
pub fn reward(state: &DagState, data: &Dataset, cfg: &RewardConfig) -> Result<f64, RewardError> {
    let full = state.full_dag()?;
    match cfg.kind {
        RewardKind::Varsortability => Ok(cfg.c * varsortability(&full, data)?),
        RewardKind::Bic => {
            let score = bic_linear_gaussian(&full, data)?;
            Ok((-score.value / cfg.resolved_tau(data)).exp())
        }
    }
}
