//! Batched trajectory sampling, the flow-matching objective, and the
//! training loop with best-graph tracking.
//!
//! Flow matching drives, at every non-initial state of a sampled trajectory,
//! the sum of incoming edge flows toward the state's outgoing flow (or its
//! terminal reward). Minimizing the squared mismatch trains the policy to
//! sample terminal graphs with probability proportional to their reward.

use crate::bitmat::BitMatrix;
use crate::flow::{
    adam_step, masked_distribution, AdamState, Featurization, FlowError, FlowFunction,
    FlowGradients, FlowNet,
};
use crate::graph::{DagState, EdgeAction, GraphError, SamplingCase};
use crate::postprocess;
use crate::rewards::{reward as reward_of, RewardConfig, RewardError};
use crate::synthetic::Dataset;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training diverged at epoch {epoch}: {reason}")]
    Diverged {
        epoch: usize,
        reason: String,
        /// Last finite network and optimizer state, for checkpointing.
        last_finite: Box<(FlowNet, AdamState)>,
    },
    #[error("dataset has {data} columns but the config asks for d={d}")]
    DimensionMismatch { d: usize, data: usize },
    #[error(transparent)]
    Reward(#[from] RewardError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Prune(#[from] crate::postprocess::PruneError),
}

/// One complete construction run: the visited (state, action) pairs, the
/// terminal state, and its reward.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub steps: Vec<(DagState, EdgeAction)>,
    pub terminal: DagState,
    pub reward: f64,
    pub case: SamplingCase,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

/// Squared mismatch in raw flows (the objective as written) or between
/// log(eps + flow) terms, which is far better behaved when rewards span
/// orders of magnitude.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum LossSpace {
    Raw,
    #[default]
    Log,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub d: usize,
    pub batch: usize,
    pub epochs: usize,
    pub lr: f64,
    pub case: SamplingCase,
    pub reward: RewardConfig,
    pub seed: u64,
    pub loss_space: LossSpace,
    /// Offset inside the logs of the log-space loss.
    pub epsilon: f64,
    pub hidden: usize,
    pub featurization: Featurization,
    /// Epochs sampled from the uniform policy before the network takes over.
    pub uniform_epochs: usize,
    /// Probability of a uniform action after warmup.
    pub exploration_floor: f64,
    /// Threshold used when pruning the best graph during training.
    pub prune_omega: f64,
    pub workers: usize,
}

impl TrainConfig {
    /// Desk defaults: batch 64, lr 1e-4, hidden 256, Adam(0.9, 0.999).
    pub fn new(d: usize, reward: RewardConfig) -> Self {
        TrainConfig {
            d,
            batch: 64,
            epochs: 5000,
            lr: 1e-4,
            case: SamplingCase::Identified,
            reward,
            seed: 0,
            loss_space: LossSpace::Log,
            epsilon: 1e-8,
            hidden: 256,
            featurization: Featurization::Adjacency,
            uniform_epochs: 500,
            exploration_floor: 0.05,
            prune_omega: 0.3,
            workers: 1,
        }
    }

    fn max_edges(&self) -> usize {
        self.d * (self.d - 1) / 2
    }
}

/// Terminal-state scoring used by the sampler. The production implementation
/// wraps a dataset; tests plug in enumerable reward tables.
pub trait RewardFn: Sync {
    fn reward(&self, terminal: &DagState) -> Result<f64, RewardError>;
}

pub struct DataReward<'a> {
    pub data: &'a Dataset,
    pub config: RewardConfig,
}

impl RewardFn for DataReward<'_> {
    fn reward(&self, terminal: &DagState) -> Result<f64, RewardError> {
        reward_of(terminal, self.data, &self.config)
    }
}

/// Constant reward, used by benchmarks where scoring is irrelevant.
pub struct ConstReward(pub f64);

impl RewardFn for ConstReward {
    fn reward(&self, _terminal: &DagState) -> Result<f64, RewardError> {
        Ok(self.0)
    }
}

enum Policy<'a> {
    Uniform,
    Net { net: &'a FlowNet, floor: f64 },
}

/// Action mask for a sampling case: ones forbid. `Ordered` tightens the base
/// mask to path-extension moves only.
pub fn case_mask(state: &DagState, case: SamplingCase) -> BitMatrix {
    match case {
        SamplingCase::Complete | SamplingCase::Identified => state.mask().clone(),
        SamplingCase::Ordered => {
            let d = state.node_count();
            let mut mask = BitMatrix::from_fn(d, |_, _| true);
            for a in state.case_actions(SamplingCase::Ordered) {
                mask.set(a.to, a.from, false);
            }
            mask
        }
    }
}

fn is_terminal(state: &DagState, case: SamplingCase, max_edges: usize) -> bool {
    match case {
        SamplingCase::Complete => state.edge_count() == max_edges,
        SamplingCase::Identified | SamplingCase::Ordered => state.is_identified(),
    }
}

fn sample_one<R: RewardFn>(
    policy: &Policy,
    case: SamplingCase,
    d: usize,
    reward: &R,
    rng: &mut ChaCha8Rng,
) -> Result<Trajectory, TrainError> {
    let max_edges = d * (d - 1) / 2;
    let mut state = DagState::new(d)?;
    let mut steps = Vec::new();
    while !is_terminal(&state, case, max_edges) {
        let mask = case_mask(&state, case);
        let dist = match policy {
            Policy::Uniform => {
                masked_distribution(&vec![0.0; d * d], &mask)?
            }
            Policy::Net { net, floor } => {
                if *floor > 0.0 && rng.random_bool(*floor) {
                    masked_distribution(&vec![0.0; d * d], &mask)?
                } else {
                    masked_distribution(&net.log_flows(&state), &mask)?
                }
            }
        };
        let action = EdgeAction::from_index(d, dist.sample(rng));
        steps.push((state.clone(), action));
        state.apply_in_place(action)?;
    }
    let r = reward.reward(&state)?;
    Ok(Trajectory {
        steps,
        terminal: state,
        reward: r,
        case,
    })
}

/// Samples one trajectory under the trained policy (plus the configured
/// exploration floor when `explore` is set).
pub fn sample_trajectory<R: RewardFn>(
    net: &FlowNet,
    cfg: &TrainConfig,
    reward: &R,
    rng: &mut ChaCha8Rng,
    explore: bool,
) -> Result<Trajectory, TrainError> {
    let policy = Policy::Net {
        net,
        floor: if explore { cfg.exploration_floor } else { 0.0 },
    };
    sample_one(&policy, cfg.case, cfg.d, reward, rng)
}

/// Deterministic per-trajectory RNG: one ChaCha stream per index.
fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn sample_batch<R: RewardFn>(
    policy: &Policy,
    cfg: &TrainConfig,
    reward: &R,
    epoch: usize,
) -> Result<Vec<Trajectory>, TrainError> {
    let run_one = |i: usize| -> Result<Trajectory, TrainError> {
        let stream = 1 + epoch as u64 * cfg.batch as u64 + i as u64;
        let mut rng = stream_rng(cfg.seed, stream);
        sample_one(policy, cfg.case, cfg.d, reward, &mut rng)
    };
    if cfg.workers <= 1 {
        (0..cfg.batch).map(run_one).collect()
    } else {
        use rayon::prelude::*;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build()
            .expect("worker pool");
        pool.install(|| (0..cfg.batch).into_par_iter().map(run_one).collect())
    }
}

/// Per-term bookkeeping shared by the loss value and its gradients.
struct FlowTerms<'a> {
    cfg: &'a TrainConfig,
    /// adjacency words -> (state, occurrence count, terminal reward if any)
    occurrences: Vec<(DagState, usize, Option<f64>)>,
    term_count: usize,
}

fn collect_terms<'a>(cfg: &'a TrainConfig, batch: &[Trajectory]) -> FlowTerms<'a> {
    let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut occurrences: Vec<(DagState, usize, Option<f64>)> = Vec::new();
    let mut term_count = 0usize;
    for traj in batch {
        debug_assert_eq!(traj.case, cfg.case);
        // Non-initial states: successors of each step; the last one is the
        // terminal state carrying the reward.
        for k in 1..=traj.len() {
            let (state, reward) = if k == traj.len() {
                (&traj.terminal, Some(traj.reward))
            } else {
                (&traj.steps[k].0, None)
            };
            term_count += 1;
            match index.entry(state.adjacency().words().to_vec()) {
                std::collections::hash_map::Entry::Occupied(e) => {
                    occurrences[*e.get()].1 += 1;
                }
                std::collections::hash_map::Entry::Vacant(e) => {
                    e.insert(occurrences.len());
                    occurrences.push((state.clone(), 1, reward));
                }
            }
        }
    }
    FlowTerms {
        cfg,
        occurrences,
        term_count,
    }
}

/// Inflow, target, and the per-action exponentials needed for gradients.
struct TermPieces {
    inflow: f64,
    target: f64,
    /// (parent state, action index, exp(logflow)) per inflow edge.
    parent_terms: Vec<(DagState, usize, f64)>,
    /// (action index, exp(logflow)) per outflow edge; empty for terminals.
    out_terms: Vec<(usize, f64)>,
}

fn term_pieces<F: FlowFunction>(
    flow: &F,
    state: &DagState,
    reward: Option<f64>,
    cfg: &TrainConfig,
) -> TermPieces {
    let d = cfg.d;
    let mut inflow = 0.0;
    let mut parent_terms = Vec::new();
    for (parent, action) in state.predecessors(cfg.case) {
        let logs = flow.log_flows(&parent);
        let f = logs[action.index(d)].exp();
        inflow += f;
        parent_terms.push((parent, action.index(d), f));
    }
    let (target, out_terms) = match reward {
        Some(r) => (r, Vec::new()),
        None => {
            let logs = flow.log_flows(state);
            let mut out = 0.0;
            let mut terms = Vec::new();
            for a in state.case_actions(cfg.case) {
                let f = logs[a.index(d)].exp();
                out += f;
                terms.push((a.index(d), f));
            }
            (out, terms)
        }
    };
    TermPieces {
        inflow,
        target,
        parent_terms,
        out_terms,
    }
}

fn term_loss(cfg: &TrainConfig, inflow: f64, target: f64) -> f64 {
    match cfg.loss_space {
        LossSpace::Raw => (inflow - target) * (inflow - target),
        LossSpace::Log => {
            let u = (cfg.epsilon + inflow).ln() - (cfg.epsilon + target).ln();
            u * u
        }
    }
}

/// d(term)/d(inflow) and d(term)/d(target).
fn term_grads(cfg: &TrainConfig, inflow: f64, target: f64) -> (f64, f64) {
    match cfg.loss_space {
        LossSpace::Raw => (2.0 * (inflow - target), -2.0 * (inflow - target)),
        LossSpace::Log => {
            let u = (cfg.epsilon + inflow).ln() - (cfg.epsilon + target).ln();
            (2.0 * u / (cfg.epsilon + inflow), -2.0 * u / (cfg.epsilon + target))
        }
    }
}

/// Mean flow-matching loss of a batch under any flow function. Evaluation
/// only; training uses [`flow_match_loss`].
pub fn flow_match_value<F: FlowFunction>(flow: &F, batch: &[Trajectory], cfg: &TrainConfig) -> f64 {
    let terms = collect_terms(cfg, batch);
    let mut total = 0.0;
    for (state, weight, reward) in &terms.occurrences {
        let pieces = term_pieces(flow, state, *reward, cfg);
        total += *weight as f64 * term_loss(cfg, pieces.inflow, pieces.target);
    }
    total / terms.term_count.max(1) as f64
}

/// Mean loss plus exact parameter gradients.
pub fn flow_match_loss(
    net: &FlowNet,
    batch: &[Trajectory],
    cfg: &TrainConfig,
) -> Result<(f64, FlowGradients), TrainError> {
    let d = cfg.d;
    let terms = collect_terms(cfg, batch);
    let norm = terms.term_count.max(1) as f64;
    let mut total = 0.0;
    // dLoss/d(log-flow vector), keyed and cached per unique state.
    let mut grad_out: HashMap<Vec<u64>, (DagState, Vec<f64>)> = HashMap::new();
    let mut push = |state: &DagState, idx: usize, amount: f64| {
        let entry = grad_out
            .entry(state.adjacency().words().to_vec())
            .or_insert_with(|| (state.clone(), vec![0.0; d * d]));
        entry.1[idx] += amount;
    };
    for (state, weight, reward) in &terms.occurrences {
        let pieces = term_pieces(net, state, *reward, cfg);
        let w = *weight as f64;
        total += w * term_loss(cfg, pieces.inflow, pieces.target);
        let (d_in, d_target) = term_grads(cfg, pieces.inflow, pieces.target);
        for (parent, idx, f) in &pieces.parent_terms {
            push(parent, *idx, w * d_in * f / norm);
        }
        for (idx, f) in &pieces.out_terms {
            push(state, *idx, w * d_target * f / norm);
        }
    }
    let loss = total / norm;
    if !loss.is_finite() {
        // Leave divergence classification to the caller: it owns the epoch
        // index and the last finite snapshot.
        return Err(FlowError::NonFiniteGradient { step: 0 }.into());
    }
    let mut grads = FlowGradients::zeros_like(net);
    let mut keyed: Vec<(&Vec<u64>, &(DagState, Vec<f64>))> = grad_out.iter().collect();
    keyed.sort_by(|a, b| a.0.cmp(b.0)); // deterministic accumulation order
    for (_, (state, go)) in keyed {
        let cache = net.forward_features(net.features(state)?);
        net.backward(&cache, go, &mut grads);
    }
    Ok((loss, grads))
}

#[derive(Debug, Clone, Serialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
    pub best_reward: f64,
    pub mean_traj_len: f64,
    pub wall_ms: f64,
}

/// Highest-reward terminal graph seen so far, with its pruned form.
#[derive(Debug, Clone)]
pub struct BestGraph {
    pub terminal: DagState,
    pub full: BitMatrix,
    pub pruned: BitMatrix,
    pub reward: f64,
    pub epoch: usize,
}

#[derive(Debug)]
pub struct TrainOutput {
    pub net: FlowNet,
    pub opt: AdamState,
    pub best: Option<BestGraph>,
    pub log: Vec<EpochStats>,
}

/// Algorithm: per epoch, sample a batch of trajectories (uniform policy
/// during warmup, the network with an exploration floor afterwards), take one
/// Adam step on the flow-matching loss, and keep the best-reward graph seen,
/// pruned with the configured threshold.
pub fn train(cfg: &TrainConfig, data: &Dataset) -> Result<TrainOutput, TrainError> {
    if data.d() != cfg.d {
        return Err(TrainError::DimensionMismatch {
            d: cfg.d,
            data: data.d(),
        });
    }
    let reward = DataReward {
        data,
        config: cfg.reward,
    };
    train_with(cfg, Some(data), &reward, |_, _, _| {})
}

/// Training loop over an arbitrary reward; `on_epoch` sees every epoch's
/// stats plus the current network for checkpointing. Without a dataset the
/// best graph is kept unpruned.
pub fn train_with<R: RewardFn>(
    cfg: &TrainConfig,
    data: Option<&Dataset>,
    reward: &R,
    mut on_epoch: impl FnMut(&EpochStats, &FlowNet, &AdamState),
) -> Result<TrainOutput, TrainError> {
    let mut init_rng = stream_rng(cfg.seed, 0);
    let mut net = FlowNet::new(cfg.d, cfg.hidden, cfg.featurization, &mut init_rng);
    let mut opt = AdamState::new(&net, cfg.lr);
    let mut best: Option<BestGraph> = None;
    let mut log = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let start = Instant::now();
        let policy = if epoch < cfg.uniform_epochs {
            Policy::Uniform
        } else {
            Policy::Net {
                net: &net,
                floor: cfg.exploration_floor,
            }
        };
        let batch = sample_batch(&policy, cfg, reward, epoch)?;
        #[cfg(debug_assertions)]
        spot_check(&batch[0]);

        for traj in &batch {
            if best.as_ref().is_none_or(|b| traj.reward > b.reward) {
                let full = traj.terminal.full_dag()?;
                let pruned = match data {
                    Some(x) => postprocess::prune_threshold(&full, x, cfg.prune_omega)?.graph,
                    None => full.clone(),
                };
                best = Some(BestGraph {
                    terminal: traj.terminal.clone(),
                    full,
                    pruned,
                    reward: traj.reward,
                    epoch,
                });
            }
        }

        let (loss, grads) = match flow_match_loss(&net, &batch, cfg) {
            Ok(ok) => ok,
            Err(_) => {
                return Err(TrainError::Diverged {
                    epoch,
                    reason: "non-finite loss".into(),
                    last_finite: Box::new((net, opt)),
                })
            }
        };
        if adam_step(&mut net, &grads, &mut opt).is_err() {
            return Err(TrainError::Diverged {
                epoch,
                reason: "non-finite gradient".into(),
                last_finite: Box::new((net, opt)),
            });
        }

        let stats = EpochStats {
            epoch,
            mean_loss: loss,
            best_reward: best.as_ref().map_or(0.0, |b| b.reward),
            mean_traj_len: batch.iter().map(|t| t.len()).sum::<usize>() as f64
                / batch.len() as f64,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
        };
        on_epoch(&stats, &net, &opt);
        log.push(stats);
    }
    Ok(TrainOutput {
        net,
        opt,
        best,
        log,
    })
}

/// Debug-build invariant: the incremental closure of every state along a
/// trajectory matches the Floyd–Warshall oracle.
#[cfg(debug_assertions)]
fn spot_check(traj: &Trajectory) {
    for (state, _) in traj.steps.iter().chain(std::iter::once(&(
        traj.terminal.clone(),
        EdgeAction::new(0, 0),
    ))) {
        let fw = crate::oracle::reachability_floyd_warshall(state.adjacency());
        debug_assert_eq!(state.closure(), &fw, "closure drifted from oracle");
        debug_assert_eq!(state.edge_count(), state.adjacency().count_ones());
    }
}

#[derive(Debug, Clone)]
pub struct SampleRecord {
    pub terminal: DagState,
    pub full: BitMatrix,
    pub reward: f64,
}

#[derive(Debug)]
pub struct ResampleStats {
    pub samples: Vec<SampleRecord>,
    pub distinct_terminals: usize,
    pub above_threshold: usize,
    pub total_ms: f64,
    pub mean_ms_per_graph: f64,
}

/// Stream base reserved for resampling so it never collides with training.
const RESAMPLE_STREAM: u64 = 1 << 40;

/// Draws `n` trajectories from the pure trained policy (no exploration
/// floor), without parameter updates.
pub fn resample<R: RewardFn>(
    net: &FlowNet,
    n: usize,
    cfg: &TrainConfig,
    reward: &R,
    reward_threshold: f64,
) -> Result<ResampleStats, TrainError> {
    let start = Instant::now();
    let policy = Policy::Net { net, floor: 0.0 };
    let run_one = |i: usize| -> Result<SampleRecord, TrainError> {
        let mut rng = stream_rng(cfg.seed, RESAMPLE_STREAM + i as u64);
        let traj = sample_one(&policy, cfg.case, cfg.d, reward, &mut rng)?;
        Ok(SampleRecord {
            full: traj.terminal.full_dag()?,
            terminal: traj.terminal,
            reward: traj.reward,
        })
    };
    let samples: Vec<SampleRecord> = if cfg.workers <= 1 {
        (0..n).map(run_one).collect::<Result<_, _>>()?
    } else {
        use rayon::prelude::*;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build()
            .expect("worker pool");
        pool.install(|| (0..n).into_par_iter().map(run_one).collect::<Result<_, _>>())?
    };
    let total_ms = start.elapsed().as_secs_f64() * 1e3;
    let distinct: std::collections::HashSet<Vec<u64>> = samples
        .iter()
        .map(|s| s.terminal.adjacency().words().to_vec())
        .collect();
    Ok(ResampleStats {
        distinct_terminals: distinct.len(),
        above_threshold: samples.iter().filter(|s| s.reward > reward_threshold).count(),
        mean_ms_per_graph: total_ms / n.max(1) as f64,
        total_ms,
        samples,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct CaseBench {
    pub case: SamplingCase,
    pub graphs: usize,
    pub total_ms: f64,
    pub mean_len: f64,
}

/// Samples `n_graphs` uniform-policy trajectories under each case and
/// records accumulated wall time and mean length.
pub fn bench_cases(d: usize, n_graphs: usize, seed: u64) -> Result<Vec<CaseBench>, TrainError> {
    let mut out = Vec::new();
    for case in [
        SamplingCase::Complete,
        SamplingCase::Identified,
        SamplingCase::Ordered,
    ] {
        let start = Instant::now();
        let mut total_len = 0usize;
        for i in 0..n_graphs {
            let mut rng = stream_rng(seed, i as u64);
            let traj = sample_one(&Policy::Uniform, case, d, &ConstReward(1.0), &mut rng)?;
            total_len += traj.len();
        }
        out.push(CaseBench {
            case,
            graphs: n_graphs,
            total_ms: start.elapsed().as_secs_f64() * 1e3,
            mean_len: total_len as f64 / n_graphs.max(1) as f64,
        });
    }
    Ok(out)
}
