//! Incremental DAG construction with closure-based action masking.
//!
//! A build state tracks four bit matrices over `d` nodes:
//!
//! * adjacency `A`, where `A[i][j] = 1` encodes the edge `j -> i`
//!   (row = child, column = parent — this orientation is used everywhere),
//! * the reflexive transitive closure `H`, where `H[i][j] = 1` iff node `i`
//!   is reachable from node `j`,
//! * the action mask `M = A | H^T`: a zero at `M[i][j]` means the edge
//!   `j -> i` can still be added without duplicating an edge or closing a
//!   cycle,
//! * the comparability matrix `Q = H | H^T`: once `Q` has no zero entry,
//!   every node pair is ordered by reachability and the topological sort of
//!   the final graph is fixed.
//!
//! Adding an edge `u -> v` updates the closure with a rank-1 boolean product:
//! every node that can reach `u` becomes an ancestor of everything reachable
//! from `v`. With packed bit rows this is a few word-parallel ORs per affected
//! row, so edge application costs O(d^2 / 64) words.

use crate::bitmat::BitMatrix;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("node count must be at least 2, got {0}")]
    InvalidDimension(usize),
    #[error("action {action:?} is masked (duplicate edge or would create a cycle)")]
    ForbiddenAction { action: EdgeAction },
    #[error("state is not identified: some node pair is still unordered")]
    NotIdentified,
    #[error("edge endpoints must be distinct and below {d}: {action:?}")]
    InvalidAction { d: usize, action: EdgeAction },
}

/// Directed edge addition: `from -> to`, i.e. set `A[to][from] = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EdgeAction {
    pub from: usize,
    pub to: usize,
}

impl EdgeAction {
    pub fn new(from: usize, to: usize) -> Self {
        EdgeAction { from, to }
    }

    /// Flat index into a length-`d*d` action vector, row-major over (to, from).
    ///
    /// Matches the layout of the flattened adjacency fed to the flow network:
    /// index `to * d + from` toggles `A[to][from]`.
    pub fn index(&self, d: usize) -> usize {
        self.to * d + self.from
    }

    pub fn from_index(d: usize, idx: usize) -> Self {
        EdgeAction {
            from: idx % d,
            to: idx / d,
        }
    }
}

/// Trajectory-sampling regime.
///
/// * `Complete` — ignore identification, keep adding edges until the graph
///   has all d(d-1)/2 edges.
/// * `Identified` — stop as soon as the comparability matrix has no zeros.
/// * `Ordered` — grow a single directed path: after the first edge, every
///   action must leave the current path tail and attach a fresh node, so a
///   trajectory identifies the sort in exactly d-1 steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum SamplingCase {
    Complete,
    Identified,
    Ordered,
}

impl SamplingCase {
    pub fn as_index(self) -> u8 {
        match self {
            SamplingCase::Complete => 1,
            SamplingCase::Identified => 2,
            SamplingCase::Ordered => 3,
        }
    }

    pub fn from_index(i: u8) -> Option<Self> {
        match i {
            1 => Some(SamplingCase::Complete),
            2 => Some(SamplingCase::Identified),
            3 => Some(SamplingCase::Ordered),
            _ => None,
        }
    }
}

/// DAG-under-construction: adjacency plus incrementally maintained closure,
/// mask, and comparability matrices.
///
/// Value type: clone freely, mutate independent copies from different threads.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DagState {
    d: usize,
    adjacency: BitMatrix,
    closure: BitMatrix,
    closure_t: BitMatrix,
    mask: BitMatrix,
    comparability: BitMatrix,
    edges: usize,
}

impl DagState {
    /// Empty graph on `d` nodes; closure, mask and comparability start as I.
    pub fn new(d: usize) -> Result<Self, GraphError> {
        if d < 2 {
            return Err(GraphError::InvalidDimension(d));
        }
        Ok(DagState {
            d,
            adjacency: BitMatrix::zeros(d),
            closure: BitMatrix::identity(d),
            closure_t: BitMatrix::identity(d),
            mask: BitMatrix::identity(d),
            comparability: BitMatrix::identity(d),
            edges: 0,
        })
    }

    /// Rebuilds a state from an adjacency matrix by replaying its edges.
    ///
    /// Fails if the adjacency is cyclic or has diagonal entries.
    pub fn from_adjacency(adj: &BitMatrix) -> Result<Self, GraphError> {
        let mut s = DagState::new(adj.size())?;
        let mut pending: Vec<EdgeAction> = adj
            .ones()
            .map(|(to, from)| EdgeAction { from, to })
            .collect();
        // Edges of an acyclic graph can be inserted in any order, but a cyclic
        // input eventually leaves only masked candidates.
        while !pending.is_empty() {
            let before = pending.len();
            pending.retain(|a| s.apply_in_place(*a).is_err());
            if pending.len() == before {
                return Err(GraphError::ForbiddenAction { action: pending[0] });
            }
        }
        Ok(s)
    }

    pub fn node_count(&self) -> usize {
        self.d
    }

    pub fn edge_count(&self) -> usize {
        self.edges
    }

    pub fn adjacency(&self) -> &BitMatrix {
        &self.adjacency
    }

    pub fn closure(&self) -> &BitMatrix {
        &self.closure
    }

    pub fn mask(&self) -> &BitMatrix {
        &self.mask
    }

    pub fn comparability(&self) -> &BitMatrix {
        &self.comparability
    }

    /// Actions currently allowed by the mask: all `(from, to)` with
    /// `M[to][from] = 0`.
    pub fn allowed_actions(&self) -> Vec<EdgeAction> {
        let mut out = Vec::new();
        for to in 0..self.d {
            for from in self.mask.iter_row_zeros(to) {
                out.push(EdgeAction { from, to });
            }
        }
        out
    }

    pub fn allowed_action_count(&self) -> usize {
        self.d * self.d - self.mask.count_ones()
    }

    /// Applies an edge addition in place.
    pub fn apply_in_place(&mut self, action: EdgeAction) -> Result<(), GraphError> {
        let EdgeAction { from, to } = action;
        if from >= self.d || to >= self.d || from == to {
            return Err(GraphError::InvalidAction { d: self.d, action });
        }
        if self.mask.get(to, from) {
            return Err(GraphError::ForbiddenAction { action });
        }

        self.adjacency.set(to, from, true);

        // Closure rank-1 update: ancestors of `from` reach everything that
        // reaches... concretely, for every node k with `to` as an ancestor
        // (H[k][to] = 1), OR in the ancestor row of `from`.
        let from_row: Vec<u64> = self.closure.row_words(from).to_vec();
        for k in 0..self.d {
            if self.closure.get(k, to) {
                self.closure.or_row_from(k, &from_row);
            }
        }
        // Mirror on the transposed closure so mask/comparability rows stay
        // word-parallel: for every l that is an ancestor of `from`
        // (H^T[l][from] = 1), OR in the descendant row of `to`.
        let to_row: Vec<u64> = self.closure_t.row_words(to).to_vec();
        for l in 0..self.d {
            if self.closure_t.get(l, from) {
                self.closure_t.or_row_from(l, &to_row);
            }
        }

        self.mask = self.adjacency.or(&self.closure_t);
        self.comparability = self.closure.or(&self.closure_t);
        self.edges += 1;
        Ok(())
    }

    /// Applies an edge addition, returning the successor state.
    pub fn apply(&self, action: EdgeAction) -> Result<DagState, GraphError> {
        let mut next = self.clone();
        next.apply_in_place(action)?;
        Ok(next)
    }

    /// True once every node pair is reachability-comparable, i.e. the
    /// comparability matrix has no zero entry. From that point the
    /// topological sort can no longer change.
    pub fn is_identified(&self) -> bool {
        self.comparability.is_all_ones()
    }

    /// The fully-connected DAG induced by an identified state: closure minus
    /// the diagonal, read in the same row=child orientation as the adjacency.
    /// Always has exactly d(d-1)/2 edges.
    pub fn full_dag(&self) -> Result<BitMatrix, GraphError> {
        if !self.is_identified() {
            return Err(GraphError::NotIdentified);
        }
        let mut full = self.closure.clone();
        for i in 0..self.d {
            full.set(i, i, false);
        }
        Ok(full)
    }

    /// The unique topological sort of an identified state: nodes ascending by
    /// ancestor count (row sums of the closure).
    pub fn topological_sort(&self) -> Result<Vec<usize>, GraphError> {
        if !self.is_identified() {
            return Err(GraphError::NotIdentified);
        }
        let mut order: Vec<usize> = (0..self.d).collect();
        order.sort_by_key(|&v| self.closure.row_count_ones(v));
        Ok(order)
    }

    /// Actions allowed under a sampling case. For `Complete` and `Identified`
    /// this is the mask complement; `Ordered` additionally restricts sources
    /// to the current path tail and targets to unvisited nodes.
    pub fn case_actions(&self, case: SamplingCase) -> Vec<EdgeAction> {
        match case {
            SamplingCase::Complete | SamplingCase::Identified => self.allowed_actions(),
            SamplingCase::Ordered => {
                if self.edges == 0 {
                    return self.allowed_actions();
                }
                let tail = self
                    .path_tail()
                    .expect("ordered-case state is always a directed path");
                (0..self.d)
                    .filter(|&v| !self.is_visited(v))
                    .map(|v| EdgeAction { from: tail, to: v })
                    .collect()
            }
        }
    }

    /// Predecessor states under a sampling case, paired with the action that
    /// rebuilds `self` from them.
    ///
    /// `Complete` removes each edge in turn; `Identified` additionally drops
    /// predecessors that are themselves identified (a trajectory would have
    /// stopped there); `Ordered` has the single predecessor obtained by
    /// removing the edge into the path tail. Each predecessor is recomputed
    /// from scratch rather than via a decremental closure.
    pub fn predecessors(&self, case: SamplingCase) -> Vec<(DagState, EdgeAction)> {
        if self.edges == 0 {
            return Vec::new();
        }
        let removable: Vec<EdgeAction> = match case {
            SamplingCase::Complete | SamplingCase::Identified => self
                .adjacency
                .ones()
                .map(|(to, from)| EdgeAction { from, to })
                .collect(),
            SamplingCase::Ordered => {
                let tail = self
                    .path_tail()
                    .expect("ordered-case state is always a directed path");
                let from = self
                    .adjacency
                    .iter_row(tail)
                    .next()
                    .expect("path tail has exactly one incoming edge");
                vec![EdgeAction { from, to: tail }]
            }
        };
        let mut out = Vec::with_capacity(removable.len());
        for action in removable {
            let mut adj = self.adjacency.clone();
            adj.set(action.to, action.from, false);
            let parent = DagState::from_adjacency(&adj)
                .expect("edge subset of an acyclic graph is acyclic");
            if case == SamplingCase::Identified && parent.is_identified() {
                continue;
            }
            out.push((parent, action));
        }
        out
    }

    /// Node with at least one incident edge.
    pub fn is_visited(&self, v: usize) -> bool {
        self.adjacency.row_count_ones(v) > 0 || (0..self.d).any(|i| self.adjacency.get(i, v))
    }

    /// For path-shaped states: the unique visited node with no outgoing edge.
    fn path_tail(&self) -> Option<usize> {
        (0..self.d).find(|&v| {
            self.is_visited(v) && (0..self.d).all(|child| !self.adjacency.get(child, v))
        })
    }
}

/// Acyclicity check for standalone adjacency matrices (Kahn peeling).
///
/// Production-side validation; tests use the independent DFS oracle instead.
pub fn is_acyclic(adj: &BitMatrix) -> bool {
    let d = adj.size();
    // A[child][parent]: in-degree of a node is the popcount of its row.
    let mut indeg: Vec<usize> = (0..d).map(|child| adj.row_count_ones(child)).collect();
    let mut stack: Vec<usize> = (0..d).filter(|&v| indeg[v] == 0).collect();
    let mut seen = 0;
    let mut removed = vec![false; d];
    while let Some(v) = stack.pop() {
        seen += 1;
        removed[v] = true;
        for child in 0..d {
            if !removed[child] && adj.get(child, v) {
                indeg[child] -= 1;
                if indeg[child] == 0 {
                    stack.push(child);
                }
            }
        }
    }
    seen == d
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn state_with_edges(d: usize, edges: &[(usize, usize)]) -> DagState {
        let mut s = DagState::new(d).unwrap();
        for &(from, to) in edges {
            s.apply_in_place(EdgeAction { from, to }).unwrap();
        }
        s
    }

    #[test]
    fn new_state_rejects_small_dimension() {
        assert_eq!(DagState::new(1).unwrap_err(), GraphError::InvalidDimension(1));
        assert_eq!(DagState::new(0).unwrap_err(), GraphError::InvalidDimension(0));
    }

    #[test]
    fn empty_state_allows_all_off_diagonal_pairs() {
        let s = DagState::new(3).unwrap();
        assert_eq!(s.adjacency().count_ones(), 0);
        assert_eq!(s.allowed_actions().len(), 6);
        let s2 = DagState::new(2).unwrap();
        let acts = s2.allowed_actions();
        assert_eq!(acts.len(), 2);
        assert!(acts.contains(&EdgeAction::new(0, 1)));
        assert!(acts.contains(&EdgeAction::new(1, 0)));
        // d=4 starts from the identity closure.
        let s4 = DagState::new(4).unwrap();
        assert_eq!(*s4.closure(), BitMatrix::identity(4));
    }

    #[test]
    fn closure_update_matches_worked_example() {
        // d=4, edge 2->3 present, then apply 3->4 (1-based in the example;
        // 0-based here). The closure must pick up the indirect 2~>4 relation.
        let mut s = state_with_edges(4, &[(1, 2)]);
        assert!(s.closure().get(2, 1));
        s.apply_in_place(EdgeAction::new(2, 3)).unwrap();
        let expect = [
            [1, 0, 0, 0],
            [0, 1, 0, 0],
            [0, 1, 1, 0],
            [0, 1, 1, 1],
        ];
        for (i, row) in expect.iter().enumerate() {
            for (j, &e) in row.iter().enumerate() {
                assert_eq!(s.closure().get(i, j), e == 1, "H[{i}][{j}]");
            }
        }
    }

    #[test]
    fn single_edge_blocks_reverse_and_duplicate() {
        let s = state_with_edges(2, &[(0, 1)]);
        assert!(s.adjacency().get(1, 0));
        assert!(s.closure().get(1, 0));
        // Reverse blocked via the transposed closure, duplicate via adjacency.
        assert!(s.mask().get(0, 1));
        assert!(s.mask().get(1, 0));
        assert!(s.allowed_actions().is_empty());
    }

    #[test]
    fn masked_action_leaves_state_unchanged() {
        let s = state_with_edges(3, &[(0, 1), (1, 2)]);
        let before = s.clone();
        let err = s.apply(EdgeAction::new(2, 0)).unwrap_err();
        assert!(matches!(err, GraphError::ForbiddenAction { .. }));
        assert_eq!(s, before);
    }

    #[test]
    fn chain_blocks_back_edge() {
        let s = state_with_edges(3, &[(0, 1), (1, 2)]);
        let acts = s.allowed_actions();
        assert!(!acts.contains(&EdgeAction::new(2, 0)));
        assert!(acts.contains(&EdgeAction::new(0, 2)));
        // Cross-check the full allowed set against brute force.
        let brute = oracle::brute_force_allowed(s.adjacency());
        let mut got = acts.clone();
        got.sort_by_key(|a| (a.from, a.to));
        assert_eq!(got, brute);
    }

    #[test]
    fn exhaustive_small_dims_allowed_set_equals_brute_force() {
        // Every reachable state at d <= 5: the mask complement must agree
        // with the add-edge-and-cycle-check oracle exactly.
        for d in 2..=5 {
            let mut frontier = vec![DagState::new(d).unwrap()];
            let mut seen = std::collections::HashSet::new();
            seen.insert(frontier[0].adjacency().words().to_vec());
            let mut checked = 0usize;
            while let Some(s) = frontier.pop() {
                let mut allowed = s.allowed_actions();
                allowed.sort_by_key(|a| (a.from, a.to));
                assert_eq!(allowed, oracle::brute_force_allowed(s.adjacency()));
                checked += 1;
                for a in allowed {
                    let next = s.apply(a).unwrap();
                    if seen.insert(next.adjacency().words().to_vec()) {
                        frontier.push(next);
                    }
                }
            }
            // Counts of labelled DAGs: 3, 25, 543, 29281 for d = 2..=5.
            let expect = [3, 25, 543, 29281][d - 2];
            assert_eq!(checked, expect, "d={d}");
        }
    }

    #[test]
    fn random_sequences_closure_matches_floyd_warshall() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let mut s = DagState::new(6).unwrap();
            loop {
                let acts = s.allowed_actions();
                if acts.is_empty() {
                    break;
                }
                let a = acts[rng.random_range(0..acts.len())];
                s.apply_in_place(a).unwrap();
                let fw = oracle::reachability_floyd_warshall(s.adjacency());
                assert_eq!(*s.closure(), fw);
                if rng.random_bool(0.2) {
                    break;
                }
            }
        }
    }

    #[test]
    fn identification_examples() {
        let s0 = DagState::new(3).unwrap();
        assert!(!s0.is_identified());
        let chain = state_with_edges(3, &[(0, 1), (1, 2)]);
        assert!(chain.is_identified());
        let fork = state_with_edges(3, &[(0, 1), (0, 2)]);
        assert!(!fork.is_identified()); // 1 and 2 are incomparable
    }

    #[test]
    fn full_dag_of_chain() {
        let chain = state_with_edges(3, &[(0, 1), (1, 2)]);
        let full = chain.full_dag().unwrap();
        assert_eq!(full.count_ones(), 3);
        assert!(full.get(1, 0) && full.get(2, 1) && full.get(2, 0));
        assert!(is_acyclic(&full));

        let two = state_with_edges(2, &[(0, 1)]);
        assert_eq!(two.full_dag().unwrap().count_ones(), 1);

        let err = DagState::new(4).unwrap().full_dag().unwrap_err();
        assert_eq!(err, GraphError::NotIdentified);
    }

    #[test]
    fn full_dag_always_has_binomial_edge_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let mut s = DagState::new(4).unwrap();
            while !s.is_identified() {
                let acts = s.allowed_actions();
                let a = acts[rng.random_range(0..acts.len())];
                s.apply_in_place(a).unwrap();
            }
            let full = s.full_dag().unwrap();
            assert_eq!(full.count_ones(), 6);
            assert!(is_acyclic(&full));
            // The built edges are a subset of the full DAG.
            for (r, c) in s.adjacency().ones() {
                assert!(full.get(r, c));
            }
            // And the full DAG is itself identified.
            let refull = DagState::from_adjacency(&full).unwrap();
            assert!(refull.is_identified());
        }
    }

    #[test]
    fn topological_sort_of_chain_and_random_states() {
        let chain = state_with_edges(3, &[(0, 1), (1, 2)]);
        assert_eq!(chain.topological_sort().unwrap(), vec![0, 1, 2]);
        assert_eq!(
            DagState::new(5).unwrap().topological_sort().unwrap_err(),
            GraphError::NotIdentified
        );

        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let d = rng.random_range(3..=6);
            let mut s = DagState::new(d).unwrap();
            while !s.is_identified() {
                let acts = s.allowed_actions();
                let a = acts[rng.random_range(0..acts.len())];
                s.apply_in_place(a).unwrap();
            }
            let order = s.topological_sort().unwrap();
            assert_eq!(order.len(), d);
            let mut sorted = order.clone();
            sorted.sort_unstable();
            assert_eq!(sorted, (0..d).collect::<Vec<_>>());
            // Pairwise consistency with the reachability oracle.
            let fw = oracle::reachability_floyd_warshall(s.adjacency());
            for i in 0..d {
                for j in (i + 1)..d {
                    assert!(fw.get(order[j], order[i]));
                }
            }
        }
    }

    #[test]
    fn sort_is_frozen_after_identification() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        for _ in 0..30 {
            let mut s = DagState::new(5).unwrap();
            while !s.is_identified() {
                let acts = s.allowed_actions();
                let a = acts[rng.random_range(0..acts.len())];
                s.apply_in_place(a).unwrap();
            }
            let order = s.topological_sort().unwrap();
            while s.allowed_action_count() > 0 {
                let acts = s.allowed_actions();
                let a = acts[rng.random_range(0..acts.len())];
                s.apply_in_place(a).unwrap();
                assert!(s.is_identified());
                assert_eq!(s.topological_sort().unwrap(), order);
            }
        }
    }

    #[test]
    fn predecessors_single_edge() {
        let s = state_with_edges(3, &[(0, 1)]);
        let parents = s.predecessors(SamplingCase::Identified);
        assert_eq!(parents.len(), 1);
        assert_eq!(parents[0].0, DagState::new(3).unwrap());
        assert_eq!(parents[0].1, EdgeAction::new(0, 1));
        assert!(DagState::new(3)
            .unwrap()
            .predecessors(SamplingCase::Identified)
            .is_empty());
    }

    #[test]
    fn predecessors_exclude_identified_under_stop_rule() {
        let s = state_with_edges(3, &[(0, 1), (1, 2)]);
        let parents = s.predecessors(SamplingCase::Identified);
        // Both single-edge parents are unidentified, so both stay.
        assert_eq!(parents.len(), 2);
        for (p, a) in &parents {
            assert!(!p.is_identified());
            assert_eq!(p.apply(*a).unwrap(), s);
        }
        // The transitive triangle has an identified parent (the chain),
        // which must be dropped under the stop-at-identification rule but
        // kept under complete construction.
        let tri = state_with_edges(3, &[(0, 1), (1, 2), (0, 2)]);
        let stop = tri.predecessors(SamplingCase::Identified);
        assert_eq!(stop.len(), 2);
        let complete = tri.predecessors(SamplingCase::Complete);
        assert_eq!(complete.len(), 3);
    }

    #[test]
    fn predecessors_ordered_path() {
        // Path 1 -> 3 -> 0 (0-based): unique parent removes the edge into 0.
        let s = state_with_edges(4, &[(1, 3), (3, 0)]);
        let parents = s.predecessors(SamplingCase::Ordered);
        assert_eq!(parents.len(), 1);
        assert_eq!(parents[0].1, EdgeAction::new(3, 0));
        assert_eq!(parents[0].0, state_with_edges(4, &[(1, 3)]));
    }

    #[test]
    fn predecessors_contain_originating_state() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for case in [SamplingCase::Complete, SamplingCase::Identified] {
            for _ in 0..40 {
                let mut s = DagState::new(4).unwrap();
                for _ in 0..rng.random_range(0..4) {
                    let acts = s.allowed_actions();
                    if acts.is_empty() || (case == SamplingCase::Identified && s.is_identified()) {
                        break;
                    }
                    s.apply_in_place(acts[rng.random_range(0..acts.len())]).unwrap();
                }
                if case == SamplingCase::Identified && s.is_identified() {
                    continue;
                }
                let acts = s.case_actions(case);
                if acts.is_empty() {
                    continue;
                }
                let a = acts[rng.random_range(0..acts.len())];
                let next = s.apply(a).unwrap();
                assert!(
                    next.predecessors(case).iter().any(|(p, pa)| p == &s && *pa == a),
                    "case {case:?}: predecessor list must contain the origin"
                );
            }
        }
    }

    #[test]
    fn case_actions_ordered_forces_path_growth() {
        let s = state_with_edges(5, &[(2, 4)]);
        let acts = s.case_actions(SamplingCase::Ordered);
        // Tail is node 4; targets are the three unvisited nodes.
        assert_eq!(acts.len(), 3);
        for a in &acts {
            assert_eq!(a.from, 4);
            assert!(![2usize, 4].contains(&a.to));
        }
        // First move: all ordered pairs.
        assert_eq!(DagState::new(5).unwrap().case_actions(SamplingCase::Ordered).len(), 20);
    }

    #[test]
    fn states_along_trajectories_are_distinct() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let mut s = DagState::new(5).unwrap();
        let mut seen = std::collections::HashSet::new();
        seen.insert(s.adjacency().words().to_vec());
        loop {
            let acts = s.allowed_actions();
            if acts.is_empty() {
                break;
            }
            s.apply_in_place(acts[rng.random_range(0..acts.len())]).unwrap();
            assert!(seen.insert(s.adjacency().words().to_vec()));
        }
        assert_eq!(s.edge_count(), 10);
    }

    #[test]
    fn edge_count_tracks_ones_and_large_dimension_works() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let mut s = DagState::new(128).unwrap();
        for _ in 0..300 {
            let acts = s.allowed_actions();
            let a = acts[rng.random_range(0..acts.len())];
            s.apply_in_place(a).unwrap();
        }
        assert_eq!(s.edge_count(), 300);
        assert_eq!(s.adjacency().count_ones(), 300);
        let fw = oracle::reachability_floyd_warshall(s.adjacency());
        assert_eq!(*s.closure(), fw);
    }
}
