//! The parametric flow function: a two-hidden-layer MLP from a flattened
//! state to one log-flow per action, with hand-written backpropagation and an
//! Adam optimizer.
//!
//! Outputs live in log space; flows are recovered by exponentiation inside
//! the loss, which keeps them positive without constrained optimization.

use crate::bitmat::BitMatrix;
use crate::graph::DagState;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FlowError {
    #[error("network built for d={net} was given a state with d={state}")]
    ShapeMismatch { net: usize, state: usize },
    #[error("no action is allowed: dead-end state")]
    DeadEnd,
    #[error("non-finite gradient at optimizer step {step}")]
    NonFiniteGradient { step: u64 },
    #[error("checkpoint does not match: {0}")]
    CheckpointMismatch(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Anything that maps a state to per-action log-flows. Implemented by
/// [`FlowNet`], by the uniform policy, and by lookup tables in tests.
pub trait FlowFunction {
    fn log_flows(&self, state: &DagState) -> Vec<f64>;
}

/// All-zero log-flows: after masking, a uniform distribution over allowed
/// actions.
pub struct UniformFlow {
    pub d: usize,
}

impl FlowFunction for UniformFlow {
    fn log_flows(&self, _state: &DagState) -> Vec<f64> {
        vec![0.0; self.d * self.d]
    }
}

/// What the network sees. The closure adds nothing the adjacency does not
/// determine, but feeding it explicitly is available behind this switch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Featurization {
    #[default]
    Adjacency,
    AdjacencyAndClosure,
}

const LEAKY_SLOPE: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
struct Linear {
    in_dim: usize,
    out_dim: usize,
    /// Row-major out_dim x in_dim.
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl Linear {
    fn glorot(in_dim: usize, out_dim: usize, rng: &mut impl Rng) -> Self {
        let bound = (6.0 / (in_dim + out_dim) as f64).sqrt();
        Linear {
            in_dim,
            out_dim,
            weights: (0..in_dim * out_dim)
                .map(|_| rng.random_range(-bound..=bound))
                .collect(),
            bias: vec![0.0; out_dim],
        }
    }

    fn forward(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.in_dim);
        let mut out = self.bias.clone();
        for (o, row) in out.iter_mut().zip(self.weights.chunks_exact(self.in_dim)) {
            *o += row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
        }
        out
    }
}

/// Two-hidden-layer MLP producing one log-flow per action index
/// (`to * d + from`, mirroring the flattened adjacency).
#[derive(Debug, Clone, PartialEq)]
pub struct FlowNet {
    d: usize,
    hidden: usize,
    featurization: Featurization,
    layers: Vec<Linear>,
}

/// Intermediate activations kept for the backward pass.
pub struct ForwardCache {
    input: Vec<f64>,
    hidden: Vec<Vec<f64>>,
    pub output: Vec<f64>,
}

/// Parameter-shaped gradient accumulator.
#[derive(Debug, Clone)]
pub struct FlowGradients {
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
}

impl FlowGradients {
    pub fn zeros_like(net: &FlowNet) -> Self {
        FlowGradients {
            weights: net.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            biases: net.layers.iter().map(|l| vec![0.0; l.bias.len()]).collect(),
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for t in self.weights.iter_mut().chain(self.biases.iter_mut()) {
            for g in t {
                *g *= factor;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.weights
            .iter()
            .chain(self.biases.iter())
            .all(|t| t.iter().all(|g| g.is_finite()))
    }

    /// Flat view in the same order as [`FlowNet::param`] indices.
    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w);
            out.extend_from_slice(b);
        }
        out
    }
}

impl FlowNet {
    pub fn new(d: usize, hidden: usize, featurization: Featurization, rng: &mut impl Rng) -> Self {
        let input = match featurization {
            Featurization::Adjacency => d * d,
            Featurization::AdjacencyAndClosure => 2 * d * d,
        };
        let output = d * d;
        FlowNet {
            d,
            hidden,
            featurization,
            layers: vec![
                Linear::glorot(input, hidden, rng),
                Linear::glorot(hidden, hidden, rng),
                Linear::glorot(hidden, output, rng),
            ],
        }
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn featurization(&self) -> Featurization {
        self.featurization
    }

    /// Flattened 0/1 input for a state (row-major adjacency, optionally
    /// followed by the closure).
    pub fn features(&self, state: &DagState) -> Result<Vec<f64>, FlowError> {
        if state.node_count() != self.d {
            return Err(FlowError::ShapeMismatch {
                net: self.d,
                state: state.node_count(),
            });
        }
        let d = self.d;
        let mut x = Vec::with_capacity(self.layers[0].in_dim);
        for r in 0..d {
            for c in 0..d {
                x.push(if state.adjacency().get(r, c) { 1.0 } else { 0.0 });
            }
        }
        if self.featurization == Featurization::AdjacencyAndClosure {
            for r in 0..d {
                for c in 0..d {
                    x.push(if state.closure().get(r, c) { 1.0 } else { 0.0 });
                }
            }
        }
        Ok(x)
    }

    pub fn forward_features(&self, input: Vec<f64>) -> ForwardCache {
        let h1: Vec<f64> = self.layers[0]
            .forward(&input)
            .into_iter()
            .map(leaky_relu)
            .collect();
        let h2: Vec<f64> = self.layers[1]
            .forward(&h1)
            .into_iter()
            .map(leaky_relu)
            .collect();
        let output = self.layers[2].forward(&h2);
        ForwardCache {
            input,
            hidden: vec![h1, h2],
            output,
        }
    }

    /// Log-flows for every action index of a state.
    pub fn log_flows_checked(&self, state: &DagState) -> Result<Vec<f64>, FlowError> {
        Ok(self.forward_features(self.features(state)?).output)
    }

    /// Accumulates parameter gradients for one state given dLoss/dOutput.
    pub fn backward(&self, cache: &ForwardCache, grad_output: &[f64], grads: &mut FlowGradients) {
        debug_assert_eq!(grad_output.len(), self.layers[2].out_dim);
        let mut upstream = grad_output.to_vec();
        for layer_idx in (0..3).rev() {
            let layer = &self.layers[layer_idx];
            let input: &[f64] = match layer_idx {
                0 => &cache.input,
                i => &cache.hidden[i - 1],
            };
            let gw = &mut grads.weights[layer_idx];
            for (o, &g) in upstream.iter().enumerate() {
                grads.biases[layer_idx][o] += g;
                let row = &mut gw[o * layer.in_dim..(o + 1) * layer.in_dim];
                for (slot, &x) in row.iter_mut().zip(input) {
                    *slot += g * x;
                }
            }
            if layer_idx == 0 {
                break;
            }
            // Pull the gradient through the weights, then the leaky rectifier.
            let mut down = vec![0.0; layer.in_dim];
            for (o, &g) in upstream.iter().enumerate() {
                let row = &layer.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
                for (slot, &w) in down.iter_mut().zip(row) {
                    *slot += g * w;
                }
            }
            let post = &cache.hidden[layer_idx - 1];
            for (slot, &h) in down.iter_mut().zip(post) {
                if h <= 0.0 {
                    *slot *= LEAKY_SLOPE;
                }
            }
            upstream = down;
        }
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    /// Flat parameter access (weights then bias, per layer) for gradient
    /// checking and serialization.
    pub fn param(&self, idx: usize) -> f64 {
        *self.locate(idx)
    }

    pub fn set_param(&mut self, idx: usize, value: f64) {
        *self.locate_mut(idx) = value;
    }

    fn locate(&self, mut idx: usize) -> &f64 {
        for l in &self.layers {
            if idx < l.weights.len() {
                return &l.weights[idx];
            }
            idx -= l.weights.len();
            if idx < l.bias.len() {
                return &l.bias[idx];
            }
            idx -= l.bias.len();
        }
        panic!("parameter index out of range");
    }

    fn locate_mut(&mut self, mut idx: usize) -> &mut f64 {
        for l in &mut self.layers {
            if idx < l.weights.len() {
                return &mut l.weights[idx];
            }
            idx -= l.weights.len();
            if idx < l.bias.len() {
                return &mut l.bias[idx];
            }
            idx -= l.bias.len();
        }
        panic!("parameter index out of range");
    }
}

impl FlowFunction for FlowNet {
    fn log_flows(&self, state: &DagState) -> Vec<f64> {
        self.log_flows_checked(state)
            .expect("state dimension matches the network")
    }
}

fn leaky_relu(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        LEAKY_SLOPE * v
    }
}

/// Masked categorical distribution over action indices.
#[derive(Debug, Clone)]
pub struct ActionDistribution {
    pub probs: Vec<f64>,
    allowed: Vec<usize>,
}

impl ActionDistribution {
    pub fn allowed(&self) -> &[usize] {
        &self.allowed
    }

    pub fn sample(&self, rng: &mut impl Rng) -> usize {
        let mut u: f64 = rng.random();
        for &idx in &self.allowed {
            u -= self.probs[idx];
            if u <= 0.0 {
                return idx;
            }
        }
        *self.allowed.last().expect("distribution has support")
    }
}

/// Softmax restricted to the zero entries of the mask; masked entries get
/// probability exactly zero.
pub fn masked_distribution(
    log_flows: &[f64],
    mask: &BitMatrix,
) -> Result<ActionDistribution, FlowError> {
    let d = mask.size();
    debug_assert_eq!(log_flows.len(), d * d);
    let mut allowed = Vec::new();
    for to in 0..d {
        for from in mask.iter_row_zeros(to) {
            allowed.push(to * d + from);
        }
    }
    if allowed.is_empty() {
        return Err(FlowError::DeadEnd);
    }
    let max = allowed
        .iter()
        .map(|&i| log_flows[i])
        .fold(f64::NEG_INFINITY, f64::max);
    let mut probs = vec![0.0; d * d];
    let mut total = 0.0;
    for &i in &allowed {
        let e = (log_flows[i] - max).exp();
        probs[i] = e;
        total += e;
    }
    for &i in &allowed {
        probs[i] /= total;
    }
    Ok(ActionDistribution { probs, allowed })
}

/// Adam with bias correction; moments mirror the parameter layout.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(net: &FlowNet, lr: f64) -> Self {
        // One moment buffer per weight and bias tensor, interleaved per layer.
        let mut m = Vec::new();
        for l in &net.layers {
            m.push(vec![0.0; l.weights.len()]);
            m.push(vec![0.0; l.bias.len()]);
        }
        AdamState {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            v: m.clone(),
            m,
        }
    }
}

/// The scalar Adam update shared by every tensor.
#[allow(clippy::too_many_arguments)]
pub fn adam_update(
    params: &mut [f64],
    grads: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    step: u64,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
) {
    let bc1 = 1.0 - beta1.powi(step as i32);
    let bc2 = 1.0 - beta2.powi(step as i32);
    for i in 0..params.len() {
        m[i] = beta1 * m[i] + (1.0 - beta1) * grads[i];
        v[i] = beta2 * v[i] + (1.0 - beta2) * grads[i] * grads[i];
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + eps);
    }
}

/// One optimizer step over the whole network. Rejects non-finite gradients.
pub fn adam_step(
    net: &mut FlowNet,
    grads: &FlowGradients,
    opt: &mut AdamState,
) -> Result<(), FlowError> {
    if !grads.is_finite() {
        return Err(FlowError::NonFiniteGradient { step: opt.step });
    }
    opt.step += 1;
    for (layer_idx, layer) in net.layers.iter_mut().enumerate() {
        let (lr, b1, b2, eps, step) = (opt.lr, opt.beta1, opt.beta2, opt.eps, opt.step);
        adam_update(
            &mut layer.weights,
            &grads.weights[layer_idx],
            &mut opt.m[2 * layer_idx],
            &mut opt.v[2 * layer_idx],
            step,
            lr,
            b1,
            b2,
            eps,
        );
        adam_update(
            &mut layer.bias,
            &grads.biases[layer_idx],
            &mut opt.m[2 * layer_idx + 1],
            &mut opt.v[2 * layer_idx + 1],
            step,
            lr,
            b1,
            b2,
            eps,
        );
    }
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointManifest {
    d: usize,
    hidden: usize,
    featurization: Featurization,
    layer_shapes: Vec<(usize, usize)>,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: u64,
}

fn checkpoint_paths(base: &Path) -> (PathBuf, PathBuf) {
    let stem = if base.extension().is_some_and(|e| e == "json") {
        base.with_extension("")
    } else {
        base.to_path_buf()
    };
    (stem.with_extension("json"), stem.with_extension("bin"))
}

/// Writes `<base>.json` (shapes and optimizer scalars) and `<base>.bin`
/// (little-endian f64 parameters followed by both moment buffers, in
/// manifest layer order).
pub fn save_checkpoint(net: &FlowNet, opt: &AdamState, base: &Path) -> Result<(), FlowError> {
    let (json_path, bin_path) = checkpoint_paths(base);
    let manifest = CheckpointManifest {
        d: net.d,
        hidden: net.hidden,
        featurization: net.featurization,
        layer_shapes: net.layers.iter().map(|l| (l.out_dim, l.in_dim)).collect(),
        lr: opt.lr,
        beta1: opt.beta1,
        beta2: opt.beta2,
        eps: opt.eps,
        step: opt.step,
    };
    let mut f = std::fs::File::create(&json_path)?;
    serde_json::to_writer_pretty(&mut f, &manifest)?;
    f.write_all(b"\n")?;

    let mut bin = std::io::BufWriter::new(std::fs::File::create(&bin_path)?);
    let mut dump = |vals: &[f64]| -> std::io::Result<()> {
        for v in vals {
            bin.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    };
    for l in &net.layers {
        dump(&l.weights)?;
        dump(&l.bias)?;
    }
    for buf in opt.m.iter().chain(opt.v.iter()) {
        dump(buf)?;
    }
    Ok(())
}

pub fn load_checkpoint(base: &Path) -> Result<(FlowNet, AdamState), FlowError> {
    let (json_path, bin_path) = checkpoint_paths(base);
    let manifest: CheckpointManifest =
        serde_json::from_reader(std::fs::File::open(&json_path)?)?;

    let mut layers = Vec::new();
    for &(out_dim, in_dim) in &manifest.layer_shapes {
        layers.push(Linear {
            in_dim,
            out_dim,
            weights: vec![0.0; in_dim * out_dim],
            bias: vec![0.0; out_dim],
        });
    }
    let mut net = FlowNet {
        d: manifest.d,
        hidden: manifest.hidden,
        featurization: manifest.featurization,
        layers,
    };
    let mut opt = AdamState::new(&net, manifest.lr);
    opt.beta1 = manifest.beta1;
    opt.beta2 = manifest.beta2;
    opt.eps = manifest.eps;
    opt.step = manifest.step;

    let mut bin = std::io::BufReader::new(std::fs::File::open(&bin_path)?);
    let mut slurp = |vals: &mut [f64]| -> Result<(), FlowError> {
        let mut buf = [0u8; 8];
        for v in vals {
            bin.read_exact(&mut buf)?;
            *v = f64::from_le_bytes(buf);
        }
        Ok(())
    };
    for l in &mut net.layers {
        slurp(&mut l.weights)?;
        slurp(&mut l.bias)?;
    }
    for buf in opt.m.iter_mut().chain(opt.v.iter_mut()) {
        slurp(buf)?;
    }
    let mut probe = [0u8; 1];
    if bin.read(&mut probe)? != 0 {
        return Err(FlowError::CheckpointMismatch(
            "trailing bytes after expected parameter payload".into(),
        ));
    }
    Ok((net, opt))
}
