//! Brute-force reference implementations for tests and acceptance checks.
//!
//! Everything here works on naive dense representations, deliberately
//! separate from the bit-packed production code, so that agreement between
//! the two is a meaningful cross-check. Nothing in this module is called by
//! the production path (the trainer consults it only in debug builds).

use crate::bitmat::BitMatrix;
use crate::graph::{DagState, EdgeAction, SamplingCase};
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("exhaustive enumeration is limited to d <= 4, got {0}")]
    TooLarge(usize),
}

/// Reflexive transitive closure by the classic O(d^3) triple loop.
pub fn reachability_floyd_warshall(adj: &BitMatrix) -> BitMatrix {
    let d = adj.size();
    let mut reach = vec![vec![false; d]; d];
    for i in 0..d {
        reach[i][i] = true;
        for j in 0..d {
            if adj.get(i, j) {
                reach[i][j] = true;
            }
        }
    }
    for k in 0..d {
        for i in 0..d {
            if reach[i][k] {
                for j in 0..d {
                    if reach[k][j] {
                        reach[i][j] = true;
                    }
                }
            }
        }
    }
    BitMatrix::from_fn(d, |i, j| reach[i][j])
}

/// Cycle detection by three-color depth-first search over adjacency lists.
pub fn has_cycle(adj: &BitMatrix) -> bool {
    let d = adj.size();
    // children[u] = nodes v with edge u -> v, i.e. A[v][u] = 1.
    let mut children = vec![Vec::new(); d];
    for (child, parent) in adj.ones() {
        children[parent].push(child);
    }
    #[derive(Clone, Copy, PartialEq)]
    enum Color {
        White,
        Gray,
        Black,
    }
    fn visit(u: usize, children: &[Vec<usize>], color: &mut [Color]) -> bool {
        color[u] = Color::Gray;
        for &v in &children[u] {
            match color[v] {
                Color::Gray => return true,
                Color::White => {
                    if visit(v, children, color) {
                        return true;
                    }
                }
                Color::Black => {}
            }
        }
        color[u] = Color::Black;
        false
    }
    let mut color = vec![Color::White; d];
    (0..d).any(|u| color[u] == Color::White && visit(u, &children, &mut color))
}

/// The set of edge additions that keep the graph acyclic and are not already
/// present, found by trying each candidate and running cycle detection.
/// Sorted by (from, to) for direct comparison with mask-derived sets.
pub fn brute_force_allowed(adj: &BitMatrix) -> Vec<EdgeAction> {
    let d = adj.size();
    let mut out = Vec::new();
    for from in 0..d {
        for to in 0..d {
            if from == to || adj.get(to, from) {
                continue;
            }
            let mut candidate = adj.clone();
            candidate.set(to, from, true);
            if !has_cycle(&candidate) {
                out.push(EdgeAction { from, to });
            }
        }
    }
    out
}

/// True iff every node pair is reachability-comparable (one reaches the
/// other), per the Floyd-Warshall closure.
pub fn pairwise_comparable(adj: &BitMatrix) -> bool {
    let reach = reachability_floyd_warshall(adj);
    let d = adj.size();
    (0..d).all(|i| (0..d).all(|j| reach.get(i, j) || reach.get(j, i)))
}

/// A terminal state of the construction MDP together with the number of
/// distinct complete trajectories that reach it.
#[derive(Debug, Clone)]
pub struct TerminalState {
    pub state: DagState,
    pub trajectory_count: u64,
}

/// Exhaustive expansion of the state space under a sampling case.
pub struct StateSpace {
    /// Every reachable state (interior and terminal).
    pub states: Vec<DagState>,
    pub terminals: Vec<TerminalState>,
}

/// Enumerates all reachable states and terminal trajectory counts for small
/// node counts by breadth-first expansion in edge-count order.
pub fn enumerate_states(d: usize, case: SamplingCase) -> Result<StateSpace, OracleError> {
    if d > 4 {
        return Err(OracleError::TooLarge(d));
    }
    let start = DagState::new(d).expect("d >= 2 for enumeration");
    let max_edges = d * (d - 1) / 2;
    // Path counts per state, layered by edge count so every predecessor is
    // finished before its successors are expanded.
    let mut layers: Vec<HashMap<Vec<u64>, (DagState, u64)>> =
        vec![HashMap::new(); max_edges + 1];
    layers[0].insert(start.adjacency().words().to_vec(), (start, 1));

    let mut states = Vec::new();
    let mut terminals = Vec::new();
    for t in 0..=max_edges {
        let layer: Vec<(DagState, u64)> = layers[t].values().cloned().collect();
        for (state, count) in layer {
            let terminal = match case {
                SamplingCase::Complete => state.edge_count() == max_edges,
                SamplingCase::Identified => state.is_identified(),
                SamplingCase::Ordered => state.edge_count() == d - 1,
            };
            if terminal {
                terminals.push(TerminalState {
                    state: state.clone(),
                    trajectory_count: count,
                });
            } else {
                for action in state.case_actions(case) {
                    let next = state.apply(action).expect("case action is mask-allowed");
                    let entry = layers[t + 1]
                        .entry(next.adjacency().words().to_vec())
                        .or_insert_with(|| (next, 0));
                    entry.1 += count;
                }
            }
            states.push(state);
        }
    }
    Ok(StateSpace { states, terminals })
}

/// Terminal states with trajectory counts; see [`enumerate_states`].
pub fn enumerate_terminal_states(
    d: usize,
    case: SamplingCase,
) -> Result<Vec<TerminalState>, OracleError> {
    Ok(enumerate_states(d, case)?.terminals)
}
