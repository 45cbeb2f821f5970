//! Generative-flow-network search for causal DAG structures.
//!
//! Graphs are built edge by edge from the empty graph. An incrementally
//! maintained transitive closure masks every action that would duplicate an
//! edge or close a cycle, and a comparability matrix detects the moment the
//! topological sort of the final graph is fully determined, so sampling can
//! stop early. A small MLP is trained with the flow-matching objective so
//! that terminal graphs are sampled with probability proportional to a
//! data-driven reward (varsortability or a linear-Gaussian BIC).
//!
//! See the `book/` guide at the repository root for a narrative tour; its
//! code snippets compile and run as doc-tests of this crate.

pub mod bitmat;
pub mod flow;
pub mod graph;
pub mod io;
pub(crate) mod linreg;
pub mod oracle;
pub mod postprocess;
pub mod rewards;
pub mod synthetic;
pub mod trainer;

pub use bitmat::BitMatrix;
pub use graph::{is_acyclic, DagState, EdgeAction, GraphError, SamplingCase};
pub use synthetic::Dataset;
