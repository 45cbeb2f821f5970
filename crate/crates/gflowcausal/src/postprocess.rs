//! Pruning of fully-connected outputs and structure-recovery metrics.

use crate::bitmat::BitMatrix;
use crate::graph::is_acyclic;
use crate::linreg;
use crate::synthetic::Dataset;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum PruneError {
    #[error("adjacency matrix contains a cycle")]
    CyclicGraph,
    #[error("graph has {graph} nodes but dataset has {data} columns")]
    DimensionMismatch { graph: usize, data: usize },
    #[error("penalty must be non-negative, got {0}")]
    NegativePenalty(f64),
}

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("graphs have different node counts: {a} vs {b}")]
    ShapeMismatch { a: usize, b: usize },
    #[error("empty sample set")]
    EmptyInput,
    #[error("AUROC is undefined when the truth has no edges or only edges")]
    UndefinedAuroc,
}

/// Pruned graph plus fit diagnostics.
#[derive(Debug, Clone)]
pub struct PruneResult {
    pub graph: BitMatrix,
    /// Some per-node regression needed the ridge fallback.
    pub ridge_fallback: bool,
    /// False when coordinate descent hit its sweep limit (last iterate used).
    pub converged: bool,
}

fn check_prune_inputs(full: &BitMatrix, data: &Dataset, penalty: f64) -> Result<(), PruneError> {
    if penalty < 0.0 {
        return Err(PruneError::NegativePenalty(penalty));
    }
    if full.size() != data.d() {
        return Err(PruneError::DimensionMismatch {
            graph: full.size(),
            data: data.d(),
        });
    }
    if !is_acyclic(full) {
        return Err(PruneError::CyclicGraph);
    }
    Ok(())
}

/// Per node, OLS on its parents; edges whose |coefficient| falls below
/// `omega` are removed. The output is an edge subset of the input, hence
/// still acyclic.
pub fn prune_threshold(
    full: &BitMatrix,
    data: &Dataset,
    omega: f64,
) -> Result<PruneResult, PruneError> {
    check_prune_inputs(full, data, omega)?;
    let d = full.size();
    let mut graph = BitMatrix::zeros(d);
    let mut ridge_fallback = false;
    for child in 0..d {
        let parents: Vec<usize> = full.iter_row(child).collect();
        if parents.is_empty() {
            continue;
        }
        let cols: Vec<Vec<f64>> = parents.iter().map(|&p| data.column(p)).collect();
        let fit = linreg::ols(&cols, &data.column(child));
        ridge_fallback |= fit.ridge_fallback;
        for (coef, &p) in fit.coeffs.iter().zip(&parents) {
            if coef.abs() >= omega {
                graph.set(child, p, true);
            }
        }
    }
    Ok(PruneResult {
        graph,
        ridge_fallback,
        converged: true,
    })
}

const LASSO_TOL: f64 = 1e-6;
const LASSO_MAX_SWEEPS: usize = 10_000;

/// Per node, L1-penalized regression by coordinate descent; zero-coefficient
/// edges are removed.
pub fn prune_lasso(
    full: &BitMatrix,
    data: &Dataset,
    lambda: f64,
) -> Result<PruneResult, PruneError> {
    check_prune_inputs(full, data, lambda)?;
    let d = full.size();
    let mut graph = BitMatrix::zeros(d);
    let mut converged = true;
    for child in 0..d {
        let parents: Vec<usize> = full.iter_row(child).collect();
        if parents.is_empty() {
            continue;
        }
        let cols: Vec<Vec<f64>> = parents.iter().map(|&p| data.column(p)).collect();
        let fit = linreg::lasso_cd(&cols, &data.column(child), lambda, LASSO_TOL, LASSO_MAX_SWEEPS);
        converged &= fit.converged;
        for (coef, &p) in fit.coeffs.iter().zip(&parents) {
            if *coef != 0.0 {
                graph.set(child, p, true);
            }
        }
    }
    Ok(PruneResult {
        graph,
        ridge_fallback: false,
        converged,
    })
}

/// Structure-recovery metrics against a ground-truth adjacency.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct MetricReport {
    pub tpr: f64,
    pub fdr: f64,
    pub shd: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub e_shd: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub auroc: Option<f64>,
}

/// TPR, FDR, and structural Hamming distance. A reversed pair counts once in
/// the SHD, as a false discovery in the FDR, and never as a true positive.
pub fn compare(pred: &BitMatrix, truth: &BitMatrix) -> Result<MetricReport, MetricError> {
    if pred.size() != truth.size() {
        return Err(MetricError::ShapeMismatch {
            a: pred.size(),
            b: truth.size(),
        });
    }
    let d = pred.size();
    let mut tp = 0usize;
    let mut pred_edges = 0usize;
    let mut truth_edges = 0usize;
    let mut shd = 0usize;
    for i in 0..d {
        for j in 0..d {
            if pred.get(i, j) {
                pred_edges += 1;
            }
            if truth.get(i, j) {
                truth_edges += 1;
                if pred.get(i, j) {
                    tp += 1;
                }
            }
        }
    }
    for i in 0..d {
        for j in (i + 1)..d {
            let p = (pred.get(i, j), pred.get(j, i));
            let t = (truth.get(i, j), truth.get(j, i));
            let p_any = p.0 || p.1;
            let t_any = t.0 || t.1;
            if p_any && t_any {
                if p != t {
                    shd += 1; // reversed (or double-vs-single) pair counts once
                }
            } else if p_any != t_any {
                shd += 1; // missing or extra
            }
        }
    }
    Ok(MetricReport {
        tpr: if truth_edges == 0 {
            1.0
        } else {
            tp as f64 / truth_edges as f64
        },
        fdr: (pred_edges - tp) as f64 / pred_edges.max(1) as f64,
        shd,
        e_shd: None,
        auroc: None,
    })
}

/// Mean SHD of a sample set against the truth.
pub fn expected_shd(samples: &[BitMatrix], truth: &BitMatrix) -> Result<f64, MetricError> {
    if samples.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    let mut total = 0usize;
    for s in samples {
        total += compare(s, truth)?.shd;
    }
    Ok(total as f64 / samples.len() as f64)
}

/// Area under the ROC curve by the midrank Mann-Whitney statistic.
pub fn auroc_from_scores(scores: &[f64], labels: &[bool]) -> Result<f64, MetricError> {
    debug_assert_eq!(scores.len(), labels.len());
    let positives = labels.iter().filter(|l| **l).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(MetricError::UndefinedAuroc);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut ranks = vec![0.0; scores.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let midrank = (i + j + 2) as f64 / 2.0; // ranks are 1-based
        for &idx in &order[i..=j] {
            ranks[idx] = midrank;
        }
        i = j + 1;
    }
    let rank_sum: f64 = labels
        .iter()
        .zip(&ranks)
        .filter_map(|(l, r)| l.then_some(*r))
        .sum();
    let p = positives as f64;
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * negatives as f64))
}

/// AUROC of per-edge marginal frequencies across a sample set, over all
/// d(d-1) ordered node pairs.
pub fn auroc(samples: &[BitMatrix], truth: &BitMatrix) -> Result<f64, MetricError> {
    if samples.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    let d = truth.size();
    for s in samples {
        if s.size() != d {
            return Err(MetricError::ShapeMismatch { a: s.size(), b: d });
        }
    }
    let mut scores = Vec::with_capacity(d * (d - 1));
    let mut labels = Vec::with_capacity(d * (d - 1));
    let n = samples.len() as f64;
    for i in 0..d {
        for j in 0..d {
            if i == j {
                continue;
            }
            let freq = samples.iter().filter(|s| s.get(i, j)).count() as f64 / n;
            scores.push(freq);
            labels.push(truth.get(i, j));
        }
    }
    auroc_from_scores(&scores, &labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{DagState, EdgeAction};
    use crate::synthetic::{sample_er_graph, sample_weights, simulate_sem, NoiseSpec};
    use proptest::prelude::*;

    fn adj_from_edges(d: usize, edges: &[(usize, usize)]) -> BitMatrix {
        let mut m = BitMatrix::zeros(d);
        for &(from, to) in edges {
            m.set(to, from, true);
        }
        m
    }

    fn chain_full_dag_data() -> (BitMatrix, Dataset) {
        // Truth 0 -> 1 -> 2; the candidate is the full DAG in the right order.
        let truth = adj_from_edges(3, &[(0, 1), (1, 2)]);
        let g = sample_weights(&truth, 100).unwrap();
        let data = simulate_sem(&g, 2000, NoiseSpec::gaussian(1.0), 101).unwrap();
        let mut s = DagState::new(3).unwrap();
        s.apply_in_place(EdgeAction::new(0, 1)).unwrap();
        s.apply_in_place(EdgeAction::new(1, 2)).unwrap();
        (s.full_dag().unwrap(), data)
    }

    #[test]
    fn zero_threshold_keeps_everything() {
        let (full, data) = chain_full_dag_data();
        let out = prune_threshold(&full, &data, 0.0).unwrap();
        assert_eq!(out.graph, full);
    }

    #[test]
    fn infinite_threshold_empties_the_graph() {
        let (full, data) = chain_full_dag_data();
        let out = prune_threshold(&full, &data, f64::INFINITY).unwrap();
        assert_eq!(out.graph.count_ones(), 0);
    }

    #[test]
    fn threshold_prunes_the_spurious_closure_edge() {
        // Regressing x2 on {x0, x1}: the partial coefficient of x0 is ~0, so
        // omega = 0.3 removes exactly the transitive edge.
        let (full, data) = chain_full_dag_data();
        let out = prune_threshold(&full, &data, 0.3).unwrap();
        let truth = adj_from_edges(3, &[(0, 1), (1, 2)]);
        assert_eq!(compare(&out.graph, &truth).unwrap().shd, 0);
    }

    #[test]
    fn prune_rejects_bad_inputs() {
        let (full, data) = chain_full_dag_data();
        assert_eq!(
            prune_threshold(&full, &data, -1.0).unwrap_err(),
            PruneError::NegativePenalty(-1.0)
        );
        let cyclic = adj_from_edges(2, &[(0, 1), (1, 0)]);
        let small = Dataset::new(nalgebra::DMatrix::from_row_slice(
            2,
            2,
            &[1.0, 2.0, 3.0, 4.0],
        ));
        assert_eq!(
            prune_threshold(&cyclic, &small, 0.1).unwrap_err(),
            PruneError::CyclicGraph
        );
        assert!(matches!(
            prune_threshold(&full, &small, 0.1).unwrap_err(),
            PruneError::DimensionMismatch { .. }
        ));
    }

    #[test]
    fn lasso_zero_penalty_equals_vanishing_threshold() {
        let (full, data) = chain_full_dag_data();
        let lasso = prune_lasso(&full, &data, 0.0).unwrap();
        let threshold = prune_threshold(&full, &data, 1e-12).unwrap();
        assert!(lasso.converged);
        assert_eq!(lasso.graph, threshold.graph);
    }

    #[test]
    fn lasso_large_penalty_empties_the_graph() {
        let (full, data) = chain_full_dag_data();
        let out = prune_lasso(&full, &data, 1e9).unwrap();
        assert!(out.converged);
        assert_eq!(out.graph.count_ones(), 0);
    }

    #[test]
    fn lasso_path_is_monotone_on_this_instance() {
        let (full, data) = chain_full_dag_data();
        let lambdas = [0.0, 0.01, 0.05, 0.2, 0.5, 2.0];
        let mut previous: Option<BitMatrix> = None;
        for &l in &lambdas {
            let graph = prune_lasso(&full, &data, l).unwrap().graph;
            if let Some(prev) = &previous {
                for (r, c) in graph.ones() {
                    assert!(prev.get(r, c), "edge set grew from lambda step at {l}");
                }
            }
            previous = Some(graph);
        }
    }

    #[test]
    fn prune_outputs_are_subsets_of_the_input() {
        let adj = sample_er_graph(8, 2.0, 110).unwrap();
        let g = sample_weights(&adj, 111).unwrap();
        let data = simulate_sem(&g, 500, NoiseSpec::gaussian(1.0), 112).unwrap();
        for result in [
            prune_threshold(&adj, &data, 0.3).unwrap(),
            prune_lasso(&adj, &data, 0.1).unwrap(),
        ] {
            for (r, c) in result.graph.ones() {
                assert!(adj.get(r, c));
            }
            assert!(is_acyclic(&result.graph));
        }
    }

    #[test]
    fn identical_graphs_have_perfect_metrics() {
        let truth = adj_from_edges(4, &[(0, 1), (1, 2), (0, 3)]);
        let report = compare(&truth, &truth).unwrap();
        assert_eq!(report.tpr, 1.0);
        assert_eq!(report.fdr, 0.0);
        assert_eq!(report.shd, 0);
    }

    #[test]
    fn empty_prediction_misses_every_truth_edge() {
        // A 17-edge ground truth on 11 nodes: the empty graph scores SHD 17.
        let edges: Vec<(usize, usize)> = (0..11)
            .flat_map(|i| ((i + 1)..11).map(move |j| (i, j)))
            .take(17)
            .collect();
        let truth = adj_from_edges(11, &edges);
        assert_eq!(truth.count_ones(), 17);
        let report = compare(&BitMatrix::zeros(11), &truth).unwrap();
        assert_eq!(report.shd, 17);
        assert_eq!(report.tpr, 0.0);
        assert_eq!(report.fdr, 0.0);
    }

    #[test]
    fn reversed_edge_counts_once_everywhere() {
        let truth = adj_from_edges(2, &[(0, 1)]);
        let pred = adj_from_edges(2, &[(1, 0)]);
        let report = compare(&pred, &truth).unwrap();
        assert_eq!(report.tpr, 0.0);
        assert_eq!(report.fdr, 1.0);
        assert_eq!(report.shd, 1);
    }

    #[test]
    fn expected_shd_is_the_arithmetic_mean() {
        let truth = adj_from_edges(4, &[(0, 1), (1, 2)]);
        // SHD 2: both truth edges missing.
        let a = BitMatrix::zeros(4);
        // SHD 4: two missing plus two extras.
        let b = adj_from_edges(4, &[(0, 3), (3, 2)]);
        assert_eq!(compare(&a, &truth).unwrap().shd, 2);
        assert_eq!(compare(&b, &truth).unwrap().shd, 4);
        let mean = expected_shd(&[a.clone(), b], &truth).unwrap();
        assert_eq!(mean, 3.0);
        assert_eq!(expected_shd(&[a], &truth).unwrap(), 2.0);
        assert_eq!(expected_shd(&[], &truth).unwrap_err(), MetricError::EmptyInput);
    }

    #[test]
    fn auroc_hand_example() {
        let v = auroc_from_scores(&[0.9, 0.8, 0.4, 0.1], &[true, false, true, false]).unwrap();
        assert_eq!(v, 0.75);
    }

    #[test]
    fn auroc_perfect_and_tied_marginals() {
        let truth = adj_from_edges(3, &[(0, 1), (1, 2)]);
        // Marginals exactly 1 on truth edges, 0 elsewhere.
        assert_eq!(auroc(&[truth.clone(), truth.clone()], &truth).unwrap(), 1.0);
        // All marginals equal: midranks give 0.5.
        let flat = BitMatrix::zeros(3);
        let full = BitMatrix::from_fn(3, |r, c| r != c);
        assert_eq!(auroc(&[flat], &truth).unwrap(), 0.5);
        assert_eq!(auroc(&[full], &truth).unwrap(), 0.5);
    }

    #[test]
    fn auroc_undefined_for_degenerate_truth() {
        let empty = BitMatrix::zeros(3);
        let sample = adj_from_edges(3, &[(0, 1)]);
        assert_eq!(
            auroc(&[sample.clone()], &empty).unwrap_err(),
            MetricError::UndefinedAuroc
        );
        let all = BitMatrix::from_fn(3, |r, c| r != c);
        assert_eq!(
            auroc(&[sample], &all).unwrap_err(),
            MetricError::UndefinedAuroc
        );
    }

    proptest! {
        #[test]
        fn shd_is_symmetric_and_zero_iff_equal(sa in 0u64..200, sb in 0u64..200) {
            let a = sample_er_graph(6, 1.5, sa).unwrap();
            let b = sample_er_graph(6, 1.5, sb).unwrap();
            let ab = compare(&a, &b).unwrap().shd;
            let ba = compare(&b, &a).unwrap().shd;
            prop_assert_eq!(ab, ba);
            prop_assert_eq!(ab == 0, a == b);
        }
    }
}
