//! From-scratch double deep Q-network: a small fully connected net with
//! manual backpropagation, a bounded FIFO replay pool, epsilon-greedy action
//! selection, and the double-Q target (online net picks the next action, the
//! target net values it).
//!
//! The production network shape is [in_dim, 40, 60, 40, 1] with rectifier
//! hidden layers and a linear scalar output; the input is one encoded
//! (state, action) pair. Tests use smaller specs, including identity
//! activations for closed-form gradients.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::mdp::{AgentAction, AgentState, encode};
use crate::network::{MsbsDesc, Scenario};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Identity => z,
        }
    }

    // Subgradient at 0 defined as 0 for the rectifier.
    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

/// Layer widths plus the hidden activation. The output layer is always
/// linear.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MlpSpec {
    pub layer_sizes: Vec<usize>,
    pub activation: Activation,
}

impl MlpSpec {
    /// The production shape for a given input width: [in, 40, 60, 40, 1].
    pub fn standard(in_dim: usize) -> Self {
        MlpSpec {
            layer_sizes: vec![in_dim, 40, 60, 40, 1],
            activation: Activation::Relu,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn out_dim(&self) -> usize {
        *self.layer_sizes.last().expect("at least two layers")
    }

    /// Total number of parameters: per layer, a dense weight block plus a
    /// bias vector.
    pub fn param_count(&self) -> usize {
        self.layer_sizes
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum()
    }
}

/// Flat parameter vector for one Q-network. Layout per layer: weights in
/// row-major [out][in] order, then the bias vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights {
    pub spec: MlpSpec,
    pub params: Vec<f64>,
}

#[derive(Debug, Error, PartialEq)]
pub enum DeepQError {
    #[error("input has {got} features, network expects {expected}")]
    DimensionMismatch { got: usize, expected: usize },
    #[error("model shapes do not match")]
    ShapeMismatch,
    #[error("replay pool is empty")]
    EmptyPool,
    #[error("malformed weight blob: {0}")]
    MalformedBlob(&'static str),
}

impl ModelWeights {
    pub fn zeros(spec: MlpSpec) -> Self {
        let n = spec.param_count();
        ModelWeights {
            spec,
            params: vec![0.0; n],
        }
    }

    /// Uniform init in [-1/sqrt(fan_in), +1/sqrt(fan_in)] per layer, weights
    /// first then biases, so initial Q values stay O(1).
    pub fn init_uniform(spec: MlpSpec, rng: &mut ChaCha8Rng) -> Self {
        let mut params = Vec::with_capacity(spec.param_count());
        for w in spec.layer_sizes.windows(2) {
            let (n_in, n_out) = (w[0], w[1]);
            let bound = 1.0 / (n_in as f64).sqrt();
            for _ in 0..n_in * n_out + n_out {
                params.push(rng.random_range(-bound..bound));
            }
        }
        ModelWeights { spec, params }
    }

    /// Serialize to a little-endian blob: layer count, layer sizes,
    /// activation tag, then the raw f64 parameters.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend((self.spec.layer_sizes.len() as u32).to_le_bytes());
        for &s in &self.spec.layer_sizes {
            out.extend((s as u32).to_le_bytes());
        }
        out.push(match self.spec.activation {
            Activation::Relu => 0,
            Activation::Identity => 1,
        });
        for &p in &self.params {
            out.extend(p.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DeepQError> {
        let mut at = 0usize;
        let take = |at: &mut usize, n: usize| -> Result<&[u8], DeepQError> {
            let slice = bytes
                .get(*at..*at + n)
                .ok_or(DeepQError::MalformedBlob("truncated header or payload"))?;
            *at += n;
            Ok(slice)
        };
        let n_layers = u32::from_le_bytes(take(&mut at, 4)?.try_into().unwrap()) as usize;
        if n_layers < 2 {
            return Err(DeepQError::MalformedBlob("need at least two layers"));
        }
        let mut layer_sizes = Vec::with_capacity(n_layers);
        for _ in 0..n_layers {
            layer_sizes.push(u32::from_le_bytes(take(&mut at, 4)?.try_into().unwrap()) as usize);
        }
        let activation = match take(&mut at, 1)?[0] {
            0 => Activation::Relu,
            1 => Activation::Identity,
            _ => return Err(DeepQError::MalformedBlob("unknown activation tag")),
        };
        let spec = MlpSpec {
            layer_sizes,
            activation,
        };
        let expected = spec.param_count();
        if bytes.len() - at != expected * 8 {
            return Err(DeepQError::MalformedBlob("parameter payload length"));
        }
        let params = bytes[at..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(ModelWeights { spec, params })
    }
}

/// Evaluate the network on one feature vector.
pub fn forward(w: &ModelWeights, x: &[f64]) -> Result<f64, DeepQError> {
    if x.len() != w.spec.in_dim() {
        return Err(DeepQError::DimensionMismatch {
            got: x.len(),
            expected: w.spec.in_dim(),
        });
    }
    let mut act = x.to_vec();
    let mut offset = 0;
    let layers = w.spec.layer_sizes.len() - 1;
    for (l, dims) in w.spec.layer_sizes.windows(2).enumerate() {
        let (n_in, n_out) = (dims[0], dims[1]);
        let weights = &w.params[offset..offset + n_in * n_out];
        let biases = &w.params[offset + n_in * n_out..offset + n_in * n_out + n_out];
        offset += n_in * n_out + n_out;
        let last = l == layers - 1;
        let mut next = Vec::with_capacity(n_out);
        for o in 0..n_out {
            let mut z = biases[o];
            let row = &weights[o * n_in..(o + 1) * n_in];
            for (wij, a) in row.iter().zip(&act) {
                z += wij * a;
            }
            next.push(if last { z } else { w.spec.activation.apply(z) });
        }
        act = next;
    }
    Ok(act[0])
}

/// Exact gradient of `d_loss_d_q * Q(x; w)` with respect to every parameter,
/// in the same flat layout as the weights.
pub fn backward(w: &ModelWeights, x: &[f64], d_loss_d_q: f64) -> Result<Vec<f64>, DeepQError> {
    if x.len() != w.spec.in_dim() {
        return Err(DeepQError::DimensionMismatch {
            got: x.len(),
            expected: w.spec.in_dim(),
        });
    }
    let sizes = &w.spec.layer_sizes;
    let layers = sizes.len() - 1;

    // forward pass keeping pre-activations and activations per layer
    let mut acts: Vec<Vec<f64>> = vec![x.to_vec()];
    let mut preacts: Vec<Vec<f64>> = Vec::with_capacity(layers);
    let mut offset = 0;
    for (l, dims) in sizes.windows(2).enumerate() {
        let (n_in, n_out) = (dims[0], dims[1]);
        let weights = &w.params[offset..offset + n_in * n_out];
        let biases = &w.params[offset + n_in * n_out..offset + n_in * n_out + n_out];
        offset += n_in * n_out + n_out;
        let last = l == layers - 1;
        let mut z = Vec::with_capacity(n_out);
        for o in 0..n_out {
            let mut s = biases[o];
            for (wij, a) in weights[o * n_in..(o + 1) * n_in].iter().zip(&acts[l]) {
                s += wij * a;
            }
            z.push(s);
        }
        let a = if last {
            z.clone()
        } else {
            z.iter().map(|&v| w.spec.activation.apply(v)).collect()
        };
        preacts.push(z);
        acts.push(a);
    }

    // backward pass
    let mut grad = vec![0.0; w.params.len()];
    let mut delta = vec![d_loss_d_q]; // linear output layer
    let mut layer_offsets: Vec<usize> = Vec::with_capacity(layers);
    let mut acc = 0;
    for dims in sizes.windows(2) {
        layer_offsets.push(acc);
        acc += dims[0] * dims[1] + dims[1];
    }
    for l in (0..layers).rev() {
        let (n_in, n_out) = (sizes[l], sizes[l + 1]);
        let base = layer_offsets[l];
        for o in 0..n_out {
            for i in 0..n_in {
                grad[base + o * n_in + i] = delta[o] * acts[l][i];
            }
            grad[base + n_in * n_out + o] = delta[o];
        }
        if l > 0 {
            let weights = &w.params[base..base + n_in * n_out];
            let mut prev = vec![0.0; n_in];
            for (i, p) in prev.iter_mut().enumerate() {
                let mut s = 0.0;
                for (o, d) in delta.iter().enumerate() {
                    s += d * weights[o * n_in + i];
                }
                *p = s * w.spec.activation.derivative(preacts[l - 1][i]);
            }
            delta = prev;
        }
    }
    Ok(grad)
}

/// One stored transition.
#[derive(Debug, Clone, PartialEq)]
pub struct Experience {
    pub state: AgentState,
    pub action: AgentAction,
    pub reward: f64,
    pub next_state: AgentState,
    /// End-of-episode transitions skip bootstrapping. The continuing task
    /// never sets this; it exists for tests and finite-horizon variants.
    pub terminal: bool,
}

/// Bounded FIFO replay buffer.
#[derive(Debug, Clone)]
pub struct ReplayPool<T = Experience> {
    buf: std::collections::VecDeque<T>,
    capacity: usize,
}

impl<T> ReplayPool<T> {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        ReplayPool {
            buf: std::collections::VecDeque::with_capacity(capacity),
            capacity,
        }
    }

    pub fn push(&mut self, item: T) {
        if self.buf.len() == self.capacity {
            self.buf.pop_front();
        }
        self.buf.push_back(item);
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn get(&self, i: usize) -> &T {
        &self.buf[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.buf.iter()
    }
}

/// Learning hyperparameters. Defaults: discount 0.8, step sizes 0.1,
/// epsilon decaying from 0.9 to 0.05 by 0.995 per slot, target sync every 4
/// steps, minibatch 36, replay capacity 400, 10 slots per communication
/// round, participation-frequency threshold 0.8.
#[derive(Debug, Clone, PartialEq)]
pub struct Hyperparams {
    /// Discount factor gamma.
    pub gamma: f64,
    /// Training step size alpha.
    pub alpha: f64,
    /// Local-update step size lambda (the federated correction term).
    pub lambda: f64,
    pub epsilon_start: f64,
    pub epsilon_min: f64,
    pub epsilon_decay: f64,
    /// Target network sync interval C in train steps.
    pub target_interval: u64,
    pub minibatch: usize,
    pub replay_capacity: usize,
    /// Slots per communication round (tau).
    pub tau: usize,
    /// Rewards are divided by this before entering the learner; `None` means
    /// 10 * U * W_mm, which keeps normalized rewards O(1). Smaller scales
    /// make the 0.1 step size overshoot on this network.
    pub reward_scale: Option<f64>,
    /// Participation-frequency threshold eta for data cleaning.
    pub eta: f64,
    /// How K_b, the per-mSBS training data volume, is counted.
    pub data_weighting: DataWeighting,
}

/// K_b accounting for the aggregation weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataWeighting {
    /// K_b = tau * max(1, |participants|).
    Participants,
    /// K_b = tau.
    SlotsOnly,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            gamma: 0.8,
            alpha: 0.1,
            lambda: 0.1,
            epsilon_start: 0.9,
            epsilon_min: 0.05,
            epsilon_decay: 0.995,
            target_interval: 4,
            minibatch: 36,
            replay_capacity: 400,
            tau: 10,
            reward_scale: None,
            eta: 0.8,
            data_weighting: DataWeighting::Participants,
        }
    }
}

impl Hyperparams {
    /// Exploration rate at a global slot index.
    pub fn epsilon(&self, step: u64) -> f64 {
        (self.epsilon_start * self.epsilon_decay.powi(step as i32)).max(self.epsilon_min)
    }

    pub fn effective_reward_scale(&self, scenario: &Scenario) -> f64 {
        self.reward_scale
            .unwrap_or(10.0 * scenario.num_users as f64 * scenario.radio.w_mm)
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(format!("discount must be in [0,1], got {}", self.gamma));
        }
        if self.alpha <= 0.0 || self.lambda < 0.0 {
            return Err("step sizes must be positive".into());
        }
        if self.target_interval < 1 {
            return Err("target interval must be >= 1".into());
        }
        if self.minibatch < 1 || self.replay_capacity < 1 {
            return Err("minibatch and replay capacity must be >= 1".into());
        }
        if self.tau < 1 {
            return Err("slots per round must be >= 1".into());
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(format!("eta must be in (0,1], got {}", self.eta));
        }
        if let Some(s) = self.reward_scale {
            if s <= 0.0 {
                return Err("reward scale must be positive".into());
            }
        }
        Ok(())
    }
}

fn argmax_lowest(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Q(s, a; w) for every candidate action.
pub fn q_values(
    w: &ModelWeights,
    s: &AgentState,
    actions: &[AgentAction],
    msbs: &MsbsDesc,
    num_users: usize,
) -> Result<Vec<f64>, DeepQError> {
    actions
        .iter()
        .map(|a| {
            let x = encode(s, a, msbs, num_users).map_err(|_| DeepQError::DimensionMismatch {
                got: s.serving.len(),
                expected: num_users,
            })?;
            forward(w, &x)
        })
        .collect()
}

/// Double-Q target: the online network picks the next action, the target
/// network values it. Terminal transitions return the reward alone. Ties in
/// the argmax go to the lowest action index.
#[allow(clippy::too_many_arguments)]
pub fn ddqn_target(
    reward: f64,
    next_state: &AgentState,
    online: &ModelWeights,
    target: &ModelWeights,
    actions: &[AgentAction],
    msbs: &MsbsDesc,
    num_users: usize,
    hp: &Hyperparams,
    terminal: bool,
) -> Result<f64, DeepQError> {
    assert!(!actions.is_empty(), "action set must be nonempty");
    if terminal || hp.gamma == 0.0 {
        return Ok(reward);
    }
    let online_q = q_values(online, next_state, actions, msbs, num_users)?;
    let best = argmax_lowest(&online_q);
    let x = encode(next_state, &actions[best], msbs, num_users)
        .expect("encode validated by q_values");
    Ok(reward + hp.gamma * forward(target, &x)?)
}

/// Epsilon-greedy selection over the candidate actions; exploitation breaks
/// ties toward the lowest action index.
pub fn select_action(
    s: &AgentState,
    w: &ModelWeights,
    actions: &[AgentAction],
    epsilon: f64,
    msbs: &MsbsDesc,
    num_users: usize,
    rng: &mut ChaCha8Rng,
) -> Result<AgentAction, DeepQError> {
    assert!((0.0..=1.0).contains(&epsilon));
    if rng.random::<f64>() < epsilon {
        return Ok(actions[rng.random_range(0..actions.len())]);
    }
    let q = q_values(w, s, actions, msbs, num_users)?;
    Ok(actions[argmax_lowest(&q)])
}

/// Result of one training step: the pre-step minibatch loss and the loss
/// gradient at the pre-step weights (used by the federated local update).
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub loss: f64,
    pub loss_grad: Vec<f64>,
}

/// One gradient step on a uniformly sampled (with replacement) minibatch:
/// per sample the double-Q target y, squared error (y - Q)^2, and the
/// semi-gradient ascent update theta += alpha * mean[(y - Q) grad Q].
#[allow(clippy::too_many_arguments)]
pub fn train_step(
    online: &mut ModelWeights,
    target: &ModelWeights,
    pool: &ReplayPool,
    actions: &[AgentAction],
    msbs: &MsbsDesc,
    num_users: usize,
    hp: &Hyperparams,
    rng: &mut ChaCha8Rng,
) -> Result<TrainOutcome, DeepQError> {
    if pool.is_empty() {
        return Err(DeepQError::EmptyPool);
    }
    let k = hp.minibatch.min(pool.len());
    let mut loss = 0.0;
    let mut direction = vec![0.0; online.params.len()];
    for _ in 0..k {
        let e = pool.get(rng.random_range(0..pool.len()));
        let y = ddqn_target(
            e.reward,
            &e.next_state,
            online,
            target,
            actions,
            msbs,
            num_users,
            hp,
            e.terminal,
        )?;
        let x = encode(&e.state, &e.action, msbs, num_users)
            .map_err(|_| DeepQError::DimensionMismatch {
                got: e.state.serving.len(),
                expected: num_users,
            })?;
        let q = forward(online, &x)?;
        let residual = y - q;
        loss += residual * residual;
        for (d, g) in direction.iter_mut().zip(backward(online, &x, residual)?) {
            *d += g;
        }
    }
    let kf = k as f64;
    loss /= kf;
    for (p, d) in online.params.iter_mut().zip(&direction) {
        *p += hp.alpha * d / kf;
    }
    // The squared-error loss gradient is -2 * mean[(y - Q) grad Q].
    let loss_grad = direction.iter().map(|d| -2.0 * d / kf).collect();
    Ok(TrainOutcome { loss, loss_grad })
}

/// Copy the online weights into the target network every C steps
/// (1-based step count).
pub fn sync_target(online: &ModelWeights, target: &mut ModelWeights, step_count: u64, c: u64) {
    assert!(c >= 1);
    if step_count % c == 0 {
        *target = online.clone();
    }
}
