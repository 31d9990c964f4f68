//! One-hidden-layer networks with hand-written backpropagation.
//!
//! A [`DiffNet`] maps `x -> W2 relu(W1 x + b1) + b2`, followed by either a
//! softmax or the identity. The same type backs the policy, the transition
//! adversary and the two critics. Parameters live in a single flat vector
//! laid out as `W1 (hidden x in, row-major) | b1 | W2 (out x hidden) | b2`,
//! so gradients are plain `Vec<f64>` of the same length.
//!
//! # Snapshot format
//!
//! [`DiffNet::to_bytes`] writes a little-endian record:
//!
//! | offset | size | field                                   |
//! |--------|------|-----------------------------------------|
//! | 0      | 4    | magic `b"RCDN"`                         |
//! | 4      | 4    | format version (`u32`, currently 1)     |
//! | 8      | 4    | input width (`u32`)                     |
//! | 12     | 4    | hidden width (`u32`)                    |
//! | 16     | 4    | output width (`u32`)                    |
//! | 20     | 1    | head kind (`0` softmax, `1` linear)     |
//! | 21     | 8    | parameter count `n` (`u64`)             |
//! | 29     | 8n   | parameters (`f64`, flat layout above)   |

use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};

pub const HIDDEN_UNITS: usize = 100;
pub const INIT_SCALE: f64 = 0.05;
const LOG_PROB_FLOOR: f64 = -27.631_021_115_928_547; // ln(1e-12)
const MAGIC: &[u8; 4] = b"RCDN";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Head {
    Softmax,
    Linear,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiffNet {
    n_in: usize,
    n_hidden: usize,
    n_out: usize,
    head: Head,
    params: Vec<f64>,
}

/// Forward-pass intermediates kept for backpropagation.
#[derive(Debug, Clone)]
pub struct Tape {
    input: Vec<f64>,
    pre: Vec<f64>,
    hidden: Vec<f64>,
    /// Raw outputs of the second affine layer.
    pub logits: Vec<f64>,
    /// Softmax over the first `active` logits (softmax head only).
    pub probs: Vec<f64>,
}

impl DiffNet {
    pub fn param_count(n_in: usize, n_hidden: usize, n_out: usize) -> usize {
        n_hidden * (n_in + 1) + n_out * (n_hidden + 1)
    }

    /// All-zero network.
    pub fn zeros(n_in: usize, n_hidden: usize, n_out: usize, head: Head) -> Self {
        Self {
            n_in,
            n_hidden,
            n_out,
            head,
            params: vec![0.0; Self::param_count(n_in, n_hidden, n_out)],
        }
    }

    /// Weights and biases drawn uniformly from `[-scale, scale]`.
    pub fn random<R: Rng + ?Sized>(
        n_in: usize,
        n_hidden: usize,
        n_out: usize,
        head: Head,
        scale: f64,
        rng: &mut R,
    ) -> Self {
        let mut net = Self::zeros(n_in, n_hidden, n_out, head);
        for p in &mut net.params {
            *p = rng.random_range(-scale..=scale);
        }
        net
    }

    pub fn from_params(
        n_in: usize,
        n_hidden: usize,
        n_out: usize,
        head: Head,
        params: Vec<f64>,
    ) -> Result<Self> {
        let expected = Self::param_count(n_in, n_hidden, n_out);
        if params.len() != expected {
            return Err(Error::Dimension {
                expected,
                got: params.len(),
            });
        }
        Ok(Self {
            n_in,
            n_hidden,
            n_out,
            head,
            params,
        })
    }

    pub fn input_width(&self) -> usize {
        self.n_in
    }

    pub fn hidden_width(&self) -> usize {
        self.n_hidden
    }

    pub fn output_width(&self) -> usize {
        self.n_out
    }

    pub fn head(&self) -> Head {
        self.head
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// `θ += scale * direction`.
    pub fn add_scaled(&mut self, direction: &[f64], scale: f64) {
        debug_assert_eq!(direction.len(), self.params.len());
        for (p, d) in self.params.iter_mut().zip(direction) {
            *p += scale * d;
        }
    }

    fn offsets(&self) -> (usize, usize, usize) {
        let b1 = self.n_hidden * self.n_in;
        let w2 = b1 + self.n_hidden;
        let b2 = w2 + self.n_out * self.n_hidden;
        (b1, w2, b2)
    }

    /// Forward pass keeping intermediates. For a softmax head the
    /// distribution is restricted to the first `active` outputs.
    pub fn tape(&self, x: &[f64], active: usize) -> Result<Tape> {
        if x.len() != self.n_in {
            return Err(Error::Dimension {
                expected: self.n_in,
                got: x.len(),
            });
        }
        if active == 0 || active > self.n_out {
            return Err(Error::InvalidArgument(format!(
                "active width {active} outside 1..={}",
                self.n_out
            )));
        }
        let (b1, w2, b2) = self.offsets();
        let p = &self.params;
        let mut pre = p[b1..w2].to_vec();
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            for (j, h) in pre.iter_mut().enumerate() {
                *h += p[j * self.n_in + i] * xi;
            }
        }
        let hidden: Vec<f64> = pre.iter().map(|&v| v.max(0.0)).collect();
        let mut logits = p[b2..].to_vec();
        for (k, z) in logits.iter_mut().enumerate() {
            let row = &p[w2 + k * self.n_hidden..w2 + (k + 1) * self.n_hidden];
            *z += row.iter().zip(&hidden).map(|(w, h)| w * h).sum::<f64>();
        }
        let probs = match self.head {
            Head::Softmax => softmax(&logits[..active]),
            Head::Linear => Vec::new(),
        };
        Ok(Tape {
            input: x.to_vec(),
            pre,
            hidden,
            logits,
            probs,
        })
    }

    /// Softmax probabilities, or raw outputs for a linear head.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let tape = self.tape(x, self.n_out)?;
        Ok(match self.head {
            Head::Softmax => tape.probs,
            Head::Linear => tape.logits,
        })
    }

    /// Softmax restricted to the first `active` outputs.
    pub fn forward_active(&self, x: &[f64], active: usize) -> Result<Vec<f64>> {
        self.require_softmax()?;
        Ok(self.tape(x, active)?.probs)
    }

    /// Accumulates `scale * d(logits·dlogits)/dθ` into `grad`.
    pub fn backprop(&self, tape: &Tape, dlogits: &[f64], grad: &mut [f64], scale: f64) {
        let (b1, w2, b2) = self.offsets();
        let mut dhidden = vec![0.0; self.n_hidden];
        for (k, &dz) in dlogits.iter().enumerate() {
            if dz == 0.0 {
                continue;
            }
            let dz = dz * scale;
            grad[b2 + k] += dz;
            let base = w2 + k * self.n_hidden;
            for j in 0..self.n_hidden {
                grad[base + j] += dz * tape.hidden[j];
                dhidden[j] += dz * self.params[base + j];
            }
        }
        for j in 0..self.n_hidden {
            if tape.pre[j] <= 0.0 {
                continue;
            }
            let dpre = dhidden[j];
            grad[b1 + j] += dpre;
            let row = j * self.n_in;
            for (i, &xi) in tape.input.iter().enumerate() {
                if xi != 0.0 {
                    grad[row + i] += dpre * xi;
                }
            }
        }
    }

    /// Accumulates `scale * d(probs·dprobs)/dθ` through the softmax.
    pub fn backprop_probs(&self, tape: &Tape, dprobs: &[f64], grad: &mut [f64], scale: f64) {
        let mean: f64 = dprobs.iter().zip(&tape.probs).map(|(g, p)| g * p).sum();
        let dlogits: Vec<f64> = tape
            .probs
            .iter()
            .zip(dprobs)
            .map(|(p, g)| p * (g - mean))
            .collect();
        self.backprop(tape, &dlogits, grad, scale);
    }

    fn require_softmax(&self) -> Result<()> {
        match self.head {
            Head::Softmax => Ok(()),
            Head::Linear => Err(Error::NotSoftmax),
        }
    }

    /// `log p_index(x)` and its parameter gradient.
    pub fn log_prob_grad(&self, x: &[f64], index: usize) -> Result<(f64, Vec<f64>)> {
        self.log_prob_grad_active(x, index, self.n_out)
    }

    /// As [`log_prob_grad`](Self::log_prob_grad) for a softmax over the
    /// first `active` outputs.
    pub fn log_prob_grad_active(
        &self,
        x: &[f64],
        index: usize,
        active: usize,
    ) -> Result<(f64, Vec<f64>)> {
        self.require_softmax()?;
        if index >= active {
            return Err(Error::InvalidArgument(format!(
                "index {index} outside active width {active}"
            )));
        }
        let tape = self.tape(x, active)?;
        let mut grad = vec![0.0; self.params.len()];
        let log_p = log_softmax_at(&tape.logits[..active], index);
        if log_p <= LOG_PROB_FLOOR {
            return Ok((LOG_PROB_FLOOR, grad));
        }
        let mut dlogits: Vec<f64> = tape.probs.iter().map(|p| -p).collect();
        dlogits[index] += 1.0;
        self.backprop(&tape, &dlogits, &mut grad, 1.0);
        Ok((log_p, grad))
    }

    /// Entropy `-Σ p log p` of the softmax output.
    pub fn entropy(&self, x: &[f64]) -> Result<f64> {
        self.require_softmax()?;
        let tape = self.tape(x, self.n_out)?;
        Ok(entropy_of(&tape.logits))
    }

    /// Entropy of the output distribution and its parameter gradient.
    pub fn entropy_grad(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.require_softmax()?;
        let tape = self.tape(x, self.n_out)?;
        let logp = log_softmax(&tape.logits);
        let h: f64 = -tape.probs.iter().zip(&logp).map(|(p, l)| p * l).sum::<f64>();
        // dH/dz_k = -p_k (log p_k + H)
        let dlogits: Vec<f64> = tape
            .probs
            .iter()
            .zip(&logp)
            .map(|(p, l)| -p * (l + h))
            .collect();
        let mut grad = vec![0.0; self.params.len()];
        self.backprop(&tape, &dlogits, &mut grad, 1.0);
        Ok((h, grad))
    }

    fn require_scalar_linear(&self) -> Result<()> {
        if self.head != Head::Linear {
            return Err(Error::InvalidArgument("critic needs a linear head".into()));
        }
        if self.n_out != 1 {
            return Err(Error::Dimension {
                expected: 1,
                got: self.n_out,
            });
        }
        Ok(())
    }

    /// Scalar output of a one-output linear network.
    pub fn value(&self, x: &[f64]) -> Result<f64> {
        self.require_scalar_linear()?;
        Ok(self.tape(x, 1)?.logits[0])
    }

    /// Mean squared error over a batch and its parameter gradient.
    pub fn mse_grad(&self, inputs: &[Vec<f64>], targets: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.require_scalar_linear()?;
        if inputs.is_empty() {
            return Err(Error::NoData("empty critic batch"));
        }
        if inputs.len() != targets.len() {
            return Err(Error::Dimension {
                expected: inputs.len(),
                got: targets.len(),
            });
        }
        let n = inputs.len() as f64;
        let mut grad = vec![0.0; self.params.len()];
        let mut loss = 0.0;
        for (x, &y) in inputs.iter().zip(targets) {
            let tape = self.tape(x, 1)?;
            let err = tape.logits[0] - y;
            loss += err * err / n;
            self.backprop(&tape, &[2.0 * err / n], &mut grad, 1.0);
        }
        Ok((loss, grad))
    }

    /// One Adam step on the episode's mean squared error. Returns the loss
    /// before the step.
    pub fn critic_fit_episode(
        &mut self,
        inputs: &[Vec<f64>],
        targets: &[f64],
        adam: &mut AdamState,
    ) -> Result<f64> {
        let (loss, grad) = self.mse_grad(inputs, targets)?;
        adam.step(&mut self.params, &grad)?;
        Ok(loss)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(29 + 8 * self.params.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        for w in [self.n_in, self.n_hidden, self.n_out] {
            out.extend_from_slice(&(w as u32).to_le_bytes());
        }
        out.push(match self.head {
            Head::Softmax => 0,
            Head::Linear => 1,
        });
        out.extend_from_slice(&(self.params.len() as u64).to_le_bytes());
        for p in &self.params {
            out.extend_from_slice(&p.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Format(format!("network snapshot: {m}"));
        if bytes.len() < 29 || &bytes[..4] != MAGIC {
            return Err(bad("missing header"));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let version = u32_at(4);
        if version != FORMAT_VERSION {
            return Err(bad(&format!("unsupported version {version}")));
        }
        let (n_in, n_hidden, n_out) = (u32_at(8) as usize, u32_at(12) as usize, u32_at(16) as usize);
        let head = match bytes[20] {
            0 => Head::Softmax,
            1 => Head::Linear,
            h => return Err(bad(&format!("unknown head kind {h}"))),
        };
        let n = u64::from_le_bytes(bytes[21..29].try_into().unwrap()) as usize;
        if n != Self::param_count(n_in, n_hidden, n_out) || bytes.len() != 29 + 8 * n {
            return Err(bad("parameter count does not match shape"));
        }
        let params = bytes[29..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Self::from_params(n_in, n_hidden, n_out, head, params)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

fn max_of(z: &[f64]) -> f64 {
    z.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let m = max_of(z);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let total: f64 = e.iter().sum();
    e.into_iter().map(|v| v / total).collect()
}

fn log_softmax(z: &[f64]) -> Vec<f64> {
    let m = max_of(z);
    let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    z.iter().map(|v| (v - lse).max(LOG_PROB_FLOOR)).collect()
}

fn log_softmax_at(z: &[f64], index: usize) -> f64 {
    let m = max_of(z);
    let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    (z[index] - lse).max(LOG_PROB_FLOOR)
}

fn entropy_of(z: &[f64]) -> f64 {
    let p = softmax(z);
    -p.iter().zip(log_softmax(z)).map(|(p, l)| p * l).sum::<f64>()
}

/// Adam moments for one parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamState {
    pub fn new(n_params: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
        }
    }

    pub fn for_net(net: &DiffNet, lr: f64) -> Self {
        Self::new(net.params().len(), lr)
    }

    /// Descends along `grad`.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grad.len() != self.m.len() {
            return Err(Error::Dimension {
                expected: self.m.len(),
                got: grad.len(),
            });
        }
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }
}
