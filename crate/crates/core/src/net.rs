//! Fully-connected policy/value network, its training step and the replay buffer.
//!
//! The last layer has `policy_dim + 1` outputs: policy logits followed by a
//! linear value. Parameters live in one flat vector, layer by layer, each layer
//! stored as its row-major weight matrix followed by its bias.

use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::env::RoutingState;
use crate::error::NetError;
use crate::grid::DistributionGrid;
use crate::scenario::{Scenario, StateEncoding};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Self::Relu => x.max(0.0),
            Self::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed through the activation's output.
    fn grad_from_output(self, y: f64) -> f64 {
        match self {
            Self::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Self::Tanh => 1.0 - y * y,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetConfig {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub policy_dim: usize,
    pub learning_rate: f64,
    pub l2: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub activation: Activation,
    pub rms_decay: f64,
    pub rms_eps: f64,
}

impl NetConfig {
    /// Sizes for a scenario: one position input plus one belief entry per line
    /// or segment, and one policy output per possible move.
    pub fn for_scenario(scenario: &Scenario) -> Self {
        let grid = &scenario.grid;
        let entries = match scenario.encoding {
            StateEncoding::Line => grid.lines.len(),
            StateEncoding::Segment => grid.segments.len(),
        };
        let (hidden, lr) = match scenario.encoding {
            StateEncoding::Line => (120, 1e-4),
            StateEncoding::Segment => (150, 1e-3),
        };
        Self {
            input_dim: 1 + entries,
            hidden_dims: vec![hidden, hidden],
            policy_dim: grid.max_feasible_actions(),
            learning_rate: lr,
            l2: 1e-4,
            batch_size: 32,
            seed: 0,
            activation: Activation::Relu,
            rms_decay: 0.9,
            rms_eps: 1e-8,
        }
    }

    fn dims(&self) -> Vec<usize> {
        let mut d = vec![self.input_dim];
        d.extend(&self.hidden_dims);
        d.push(self.policy_dim + 1);
        d
    }

    pub fn param_count(&self) -> usize {
        self.dims().windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    pub fn validate(&self) -> Result<(), NetError> {
        if self.input_dim == 0 || self.policy_dim == 0 {
            return Err(NetError::Config("input_dim and policy_dim must be positive".into()));
        }
        if self.hidden_dims.iter().any(|&h| h == 0) {
            return Err(NetError::Config("hidden layers must be non-empty".into()));
        }
        if !(self.learning_rate > 0.0) || self.l2 < 0.0 || self.batch_size == 0 {
            return Err(NetError::Config("learning_rate > 0, l2 >= 0 and batch_size >= 1 required".into()));
        }
        if !(0.0..1.0).contains(&self.rms_decay) || !(self.rms_eps > 0.0) {
            return Err(NetError::Config("rms_decay in [0,1) and rms_eps > 0 required".into()));
        }
        Ok(())
    }
}

/// Network input for the vehicle about to be dispatched: its normalized
/// position followed by per-line or per-segment fault probabilities.
pub fn encode_state(state: &RoutingState, grid: &DistributionGrid, encoding: StateEncoding) -> Vec<f64> {
    let v = state.queue.first().copied().unwrap_or(0);
    let n = grid.road.node_count();
    let pos = if n > 1 { state.vehicles[v].position as f64 / (n - 1) as f64 } else { 0.0 };
    let mut x = Vec::with_capacity(1 + grid.lines.len());
    x.push(pos);
    match encoding {
        StateEncoding::Line => x.extend_from_slice(state.belief.posterior()),
        StateEncoding::Segment => x.extend((0..grid.segments.len()).map(|s| state.belief.segment_posterior(grid, s))),
    }
    x
}

/// One training example. `pi` and `legal` have `policy_dim` entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub x: Vec<f64>,
    pub pi: Vec<f64>,
    pub legal: Vec<bool>,
    /// Value target, already divided by the scenario's value scale.
    pub z: f64,
}

impl Sample {
    pub fn new(x: Vec<f64>, pi: Vec<f64>, legal: Vec<bool>, z: f64) -> Result<Self, NetError> {
        if pi.len() != legal.len() {
            return Err(NetError::Config("policy target and legal mask differ in length".into()));
        }
        let mass: f64 = pi.iter().sum();
        let bad = pi.iter().zip(&legal).any(|(&p, &ok)| p < 0.0 || (!ok && p > 0.0));
        if bad || (mass - 1.0).abs() > 1e-9 || !z.is_finite() || !legal.iter().any(|&l| l) {
            return Err(NetError::Config("policy target must be a distribution over legal moves".into()));
        }
        Ok(Self { x, pi, legal, z })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct LossParts {
    pub value: f64,
    pub policy: f64,
    pub l2: f64,
}

impl LossParts {
    pub fn total(&self) -> f64 {
        self.value + self.policy + self.l2
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyValueNet {
    config: NetConfig,
    params: Vec<f64>,
}

/// Per-parameter running mean of squared gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct RmsProp {
    pub sq: Vec<f64>,
}

impl RmsProp {
    pub fn new(net: &PolicyValueNet) -> Self {
        Self { sq: vec![0.0; net.params.len()] }
    }
}

struct Trace {
    // activations per layer, input first
    acts: Vec<Vec<f64>>,
}

fn masked_log_softmax(logits: &[f64], legal: &[bool]) -> Vec<f64> {
    let m = logits
        .iter()
        .zip(legal)
        .filter(|(_, &ok)| ok)
        .map(|(&l, _)| l)
        .fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits
        .iter()
        .zip(legal)
        .filter(|(_, &ok)| ok)
        .map(|(&l, _)| (l - m).exp())
        .sum::<f64>()
        .ln();
    logits
        .iter()
        .zip(legal)
        .map(|(&l, &ok)| if ok { l - lse } else { f64::NEG_INFINITY })
        .collect()
}

impl PolicyValueNet {
    pub fn new(config: NetConfig) -> Result<Self, NetError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut params = Vec::with_capacity(config.param_count());
        let dims = config.dims();
        for (li, w) in dims.windows(2).enumerate() {
            let bound = 1.0 / (w[0] as f64).sqrt();
            params.extend((0..w[0] * w[1]).map(|_| rng.gen_range(-bound..bound)));
            params.extend(std::iter::repeat(0.0).take(w[1]));
            if li == dims.len() - 2 {
                // value row starts at zero
                let start = params.len() - w[1] - w[0];
                params[start..start + w[0]].iter_mut().for_each(|p| *p = 0.0);
            }
        }
        Ok(Self { config, params })
    }

    pub fn from_params(config: NetConfig, params: Vec<f64>) -> Result<Self, NetError> {
        config.validate()?;
        if params.len() != config.param_count() {
            return Err(NetError::Config(format!("expected {} parameters, got {}", config.param_count(), params.len())));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(NetError::Config("parameters must be finite".into()));
        }
        Ok(Self { config, params })
    }

    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn run(&self, x: &[f64]) -> Result<Trace, NetError> {
        if x.len() != self.config.input_dim {
            return Err(NetError::InputLength { expected: self.config.input_dim, got: x.len() });
        }
        if let Some(i) = x.iter().position(|v| !v.is_finite()) {
            return Err(NetError::NonFiniteInput(i));
        }
        let dims = self.config.dims();
        let last = dims.len() - 2;
        let mut acts = vec![x.to_vec()];
        let mut off = 0;
        for (li, w) in dims.windows(2).enumerate() {
            let (n_in, n_out) = (w[0], w[1]);
            let weights = &self.params[off..off + n_in * n_out];
            let bias = &self.params[off + n_in * n_out..off + n_in * n_out + n_out];
            off += n_in * n_out + n_out;
            let input = acts.last().expect("input");
            let mut out = bias.to_vec();
            for (o, row) in out.iter_mut().zip(weights.chunks_exact(n_in)) {
                *o += row.iter().zip(input).map(|(a, b)| a * b).sum::<f64>();
            }
            if li != last {
                for o in &mut out {
                    *o = self.config.activation.apply(*o);
                }
            }
            acts.push(out);
        }
        Ok(Trace { acts })
    }

    /// Softmax over all policy outputs and the value output.
    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, f64), NetError> {
        self.forward_masked(x, &vec![true; self.config.policy_dim])
    }

    /// Softmax restricted to `legal` outputs (zero elsewhere) and the value output.
    pub fn forward_masked(&self, x: &[f64], legal: &[bool]) -> Result<(Vec<f64>, f64), NetError> {
        let t = self.run(x)?;
        let out = t.acts.last().expect("output");
        let k = self.config.policy_dim;
        let logp = masked_log_softmax(&out[..k], legal);
        Ok((logp.iter().map(|l| l.exp()).collect(), out[k]))
    }

    /// Mean loss over `batch` and its gradient with respect to every parameter.
    pub fn loss_and_grad(&self, batch: &[Sample]) -> Result<(LossParts, Vec<f64>), NetError> {
        if batch.is_empty() {
            return Err(NetError::EmptyBatch);
        }
        let dims = self.config.dims();
        let k = self.config.policy_dim;
        let nb = batch.len() as f64;
        let mut grad = vec![0.0; self.params.len()];
        let mut parts = LossParts::default();
        // layer offsets
        let mut offsets = Vec::with_capacity(dims.len() - 1);
        let mut off = 0;
        for w in dims.windows(2) {
            offsets.push(off);
            off += w[0] * w[1] + w[1];
        }
        for (idx, s) in batch.iter().enumerate() {
            let t = self.run(&s.x)?;
            let out = t.acts.last().expect("output");
            let logp = masked_log_softmax(&out[..k], &s.legal);
            let v = out[k];
            let vl = (s.z - v).powi(2);
            let pl: f64 = -s.pi.iter().zip(&logp).filter(|(&p, _)| p > 0.0).map(|(&p, &l)| p * l).sum::<f64>();
            if !(vl.is_finite() && pl.is_finite()) {
                return Err(NetError::NonFiniteLoss { index: idx });
            }
            parts.value += vl / nb;
            parts.policy += pl / nb;

            // d loss / d output
            let mut delta: Vec<f64> = (0..k)
                .map(|j| if s.legal[j] { (logp[j].exp() - s.pi[j]) / nb } else { 0.0 })
                .collect();
            delta.push(2.0 * (v - s.z) / nb);

            for li in (0..dims.len() - 1).rev() {
                let (n_in, n_out) = (dims[li], dims[li + 1]);
                let input = &t.acts[li];
                let o = offsets[li];
                for (r, &d) in delta.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    let row = &mut grad[o + r * n_in..o + (r + 1) * n_in];
                    for (g, &a) in row.iter_mut().zip(input) {
                        *g += d * a;
                    }
                    grad[o + n_in * n_out + r] += d;
                }
                if li == 0 {
                    break;
                }
                let weights = &self.params[o..o + n_in * n_out];
                let mut prev = vec![0.0; n_in];
                for (r, &d) in delta.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    for (p, &w) in prev.iter_mut().zip(&weights[r * n_in..(r + 1) * n_in]) {
                        *p += d * w;
                    }
                }
                for (p, &a) in prev.iter_mut().zip(input) {
                    *p *= self.config.activation.grad_from_output(a);
                }
                delta = prev;
            }
        }
        let c = self.config.l2;
        if c != 0.0 {
            parts.l2 = c * self.params.iter().map(|p| p * p).sum::<f64>();
            for (g, p) in grad.iter_mut().zip(&self.params) {
                *g += 2.0 * c * p;
            }
        }
        Ok((parts, grad))
    }

    /// Loss only, for finite-difference checks.
    pub fn loss(&self, batch: &[Sample]) -> Result<LossParts, NetError> {
        let mut parts = LossParts::default();
        let nb = batch.len() as f64;
        let k = self.config.policy_dim;
        for (idx, s) in batch.iter().enumerate() {
            let t = self.run(&s.x)?;
            let out = t.acts.last().expect("output");
            let logp = masked_log_softmax(&out[..k], &s.legal);
            let vl = (s.z - out[k]).powi(2);
            let pl: f64 = -s.pi.iter().zip(&logp).filter(|(&p, _)| p > 0.0).map(|(&p, &l)| p * l).sum::<f64>();
            if !(vl.is_finite() && pl.is_finite()) {
                return Err(NetError::NonFiniteLoss { index: idx });
            }
            parts.value += vl / nb;
            parts.policy += pl / nb;
        }
        if self.config.l2 != 0.0 {
            parts.l2 = self.config.l2 * self.params.iter().map(|p| p * p).sum::<f64>();
        }
        Ok(parts)
    }

    /// One RMSprop step on `batch`. Returns the loss before the update.
    pub fn train_step(&mut self, opt: &mut RmsProp, batch: &[Sample]) -> Result<LossParts, NetError> {
        let (parts, grad) = self.loss_and_grad(batch)?;
        let (rho, eps, lr) = (self.config.rms_decay, self.config.rms_eps, self.config.learning_rate);
        for ((p, s), g) in self.params.iter_mut().zip(opt.sq.iter_mut()).zip(&grad) {
            *s = rho * *s + (1.0 - rho) * g * g;
            *p -= lr * g / (s.sqrt() + eps);
        }
        Ok(parts)
    }
}

// ---------------------------------------------------------------------------
// checkpoints

const MAGIC: &[u8; 8] = b"GCREWNET";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub config: NetConfig,
    /// Multiply the value output by this to get customer-hours.
    pub value_scale: f64,
    /// Bundled scenario name, or the absolute path of the scenario file.
    pub scenario: String,
    pub episodes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub net: PolicyValueNet,
    pub optimizer: Option<RmsProp>,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let meta = serde_json::to_vec(&self.meta).expect("meta serializes");
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(meta.len() as u64).to_le_bytes());
        out.extend_from_slice(&meta);
        out.extend_from_slice(&(self.net.params.len() as u64).to_le_bytes());
        for p in &self.net.params {
            out.extend_from_slice(&p.to_le_bytes());
        }
        match &self.optimizer {
            Some(o) => {
                out.push(1);
                for s in &o.sq {
                    out.extend_from_slice(&s.to_le_bytes());
                }
            }
            None => out.push(0),
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, NetError> {
        let bad = |m: &str| NetError::Checkpoint(m.to_string());
        if bytes.len() < MAGIC.len() + 4 + 8 + 32 {
            return Err(bad("is truncated"));
        }
        let (body, digest) = bytes.split_at(bytes.len() - 32);
        if Sha256::digest(body).as_slice() != digest {
            return Err(bad("checksum mismatch"));
        }
        let mut r = body;
        let mut take = |n: usize| -> Result<&[u8], NetError> {
            if r.len() < n {
                return Err(bad("is truncated"));
            }
            let (a, b) = r.split_at(n);
            r = b;
            Ok(a)
        };
        if take(8)? != MAGIC {
            return Err(bad("has the wrong magic bytes"));
        }
        let version = u32::from_le_bytes(take(4)?.try_into().expect("4 bytes"));
        if version != VERSION {
            return Err(NetError::Checkpoint(format!("version {version} is not supported")));
        }
        let meta_len = u64::from_le_bytes(take(8)?.try_into().expect("8 bytes")) as usize;
        let meta: CheckpointMeta =
            serde_json::from_slice(take(meta_len)?).map_err(|e| NetError::Checkpoint(format!("metadata: {e}")))?;
        let n = u64::from_le_bytes(take(8)?.try_into().expect("8 bytes")) as usize;
        let read_f64s = |raw: &[u8]| -> Vec<f64> {
            raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect()
        };
        let params = read_f64s(take(n * 8)?);
        let has_opt = take(1)?[0];
        let optimizer = if has_opt == 1 { Some(RmsProp { sq: read_f64s(take(n * 8)?) }) } else { None };
        if !r.is_empty() {
            return Err(bad("has trailing bytes"));
        }
        let net = PolicyValueNet::from_params(meta.config.clone(), params)?;
        Ok(Self { meta, net, optimizer })
    }

    pub fn save(&self, path: &Path) -> Result<(), NetError> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, NetError> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }

    /// Hex sha256 of the serialized checkpoint.
    pub fn digest(&self) -> String {
        Sha256::digest(self.to_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}

// ---------------------------------------------------------------------------
// replay buffer

#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Sample>,
    next: usize,
    pushed: usize,
    rng: ChaCha8Rng,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, seed: u64) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self { capacity, items: Vec::with_capacity(capacity.min(1 << 16)), next: 0, pushed: 0, rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Samples pushed over the buffer's lifetime, including evicted ones.
    pub fn total_pushed(&self) -> usize {
        self.pushed
    }

    pub fn push(&mut self, s: Sample) {
        if self.items.len() < self.capacity {
            self.items.push(s);
        } else {
            self.items[self.next] = s;
        }
        self.next = (self.next + 1) % self.capacity;
        self.pushed += 1;
    }

    /// Uniform draw with replacement.
    pub fn sample(&mut self, n: usize) -> Result<Vec<Sample>, NetError> {
        if self.items.is_empty() {
            return Err(NetError::EmptyBuffer);
        }
        Ok((0..n).map(|_| self.items[self.rng.gen_range(0..self.items.len())].clone()).collect())
    }

    /// Contents from oldest to newest.
    pub fn iter_oldest_first(&self) -> impl Iterator<Item = &Sample> {
        let split = if self.items.len() < self.capacity { 0 } else { self.next };
        self.items[split..].iter().chain(self.items[..split].iter())
    }
}
