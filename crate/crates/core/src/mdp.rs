//! Tabular robust constrained MDP primitives: the task description, transition
//! models over explicit successor supports, trajectories and discounted
//! reward / constraint-cost returns.

use rand::Rng;

use crate::error::{Error, Result};

/// Probability vectors must sum to one within this tolerance before they are
/// renormalised.
pub const PROB_TOLERANCE: f64 = 1e-9;

/// A tabular constrained decision task with finite states and actions.
///
/// Rewards and constraint-costs take the sampled successor as an argument so
/// that realised quantities (e.g. units sold) can be recovered from any
/// transition model, not only from the true simulator.
pub trait Rcmdp: Sync {
    fn n_states(&self) -> usize;
    fn n_actions(&self) -> usize;
    fn reward(&self, state: usize, action: usize, next: usize) -> f64;
    /// Nonnegative constraint-cost.
    fn constraint_cost(&self, state: usize, action: usize, next: usize) -> f64;
    /// Budget `d` on the expected discounted constraint-cost.
    fn budget(&self) -> f64;
    fn discount(&self) -> f64;
    fn horizon(&self) -> usize;
    fn is_terminal(&self, state: usize) -> bool;
    /// Start state used for data collection and evaluation.
    fn initial_state(&self) -> usize;

    /// Ordered successor support of `(state, action)`.
    fn support(&self, state: usize, action: usize) -> Vec<usize>;
    /// Number of outcomes entering the Hoeffding union bound.
    fn hoeffding_outcomes(&self) -> usize;

    fn policy_input(&self, state: usize) -> Vec<f64>;
    fn critic_input(&self, state: usize) -> Vec<f64> {
        one_hot(state, self.n_states())
    }
    fn adversary_input(&self, state: usize, action: usize) -> Vec<f64> {
        let mut x = one_hot(state, self.n_states());
        x.extend(one_hot(action, self.n_actions()));
        x
    }
    /// Output width of the adversary head (maximum support size).
    fn adversary_width(&self) -> usize;

    /// Training start states are drawn uniformly from the non-terminal states.
    fn sample_start(&self, rng: &mut dyn rand::RngCore) -> usize {
        let candidates = self.non_terminal_states();
        candidates[rng.random_range(0..candidates.len())]
    }

    fn non_terminal_states(&self) -> Vec<usize> {
        (0..self.n_states()).filter(|&s| !self.is_terminal(s)).collect()
    }
}

pub fn one_hot(index: usize, width: usize) -> Vec<f64> {
    let mut v = vec![0.0; width];
    v[index] = 1.0;
    v
}

/// One `(state, action)` row of a transition model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelRow {
    pub support: Vec<usize>,
    pub probs: Vec<f64>,
}

impl ModelRow {
    /// Validates and renormalises a row.
    pub fn new(support: Vec<usize>, probs: Vec<f64>) -> Result<Self> {
        let row = Self::checked(support, probs)?;
        let total: f64 = row.probs.iter().sum();
        if total == 1.0 {
            return Ok(row);
        }
        Ok(Self {
            probs: row.probs.into_iter().map(|p| p / total).collect(),
            support: row.support,
        })
    }

    /// Validates a row and keeps the probabilities bit-for-bit.
    pub fn checked(support: Vec<usize>, probs: Vec<f64>) -> Result<Self> {
        if support.is_empty() {
            return Err(Error::InvalidArgument("empty support".into()));
        }
        if support.len() != probs.len() {
            return Err(Error::Dimension {
                expected: support.len(),
                got: probs.len(),
            });
        }
        let mut seen = support.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != support.len() {
            return Err(Error::InvalidArgument(format!(
                "duplicate successor in support {support:?}"
            )));
        }
        check_distribution(&probs)?;
        Ok(Self { support, probs })
    }

    pub fn uniform(support: Vec<usize>) -> Result<Self> {
        let n = support.len();
        Self::new(support, vec![1.0 / n as f64; n])
    }

    pub fn prob_of(&self, next: usize) -> f64 {
        self.support
            .iter()
            .position(|&s| s == next)
            .map_or(0.0, |k| self.probs[k])
    }

    /// Draws a successor state by inverse CDF with a single uniform draw.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.support[sample_index(&self.probs, rng)]
    }

    pub fn l1_distance(&self, other: &[f64]) -> f64 {
        self.probs
            .iter()
            .zip(other)
            .map(|(p, q)| (p - q).abs())
            .sum()
    }
}

/// Index sampled from a probability vector with one uniform draw.
pub fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (k, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return k;
        }
    }
    // Rounding left u above the cumulative sum: fall back to the last
    // nonzero entry.
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1)
}

pub fn check_distribution(probs: &[f64]) -> Result<()> {
    if probs.iter().any(|p| !p.is_finite() || *p < -PROB_TOLERANCE) {
        return Err(Error::InvalidArgument(format!(
            "negative or non-finite probability in {probs:?}"
        )));
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > PROB_TOLERANCE {
        return Err(Error::InvalidArgument(format!(
            "probabilities sum to {total}, not 1"
        )));
    }
    Ok(())
}

/// Transition model `P(s' | s, a)` stored as one sparse row per pair,
/// indexed `state * n_actions + action`.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularModel {
    n_states: usize,
    n_actions: usize,
    rows: Vec<ModelRow>,
}

impl TabularModel {
    pub fn new(n_states: usize, n_actions: usize, rows: Vec<ModelRow>) -> Result<Self> {
        if rows.len() != n_states * n_actions {
            return Err(Error::Dimension {
                expected: n_states * n_actions,
                got: rows.len(),
            });
        }
        if let Some(bad) = rows
            .iter()
            .flat_map(|r| r.support.iter())
            .find(|&&s| s >= n_states)
        {
            return Err(Error::InvalidArgument(format!(
                "successor {bad} out of range for {n_states} states"
            )));
        }
        Ok(Self {
            n_states,
            n_actions,
            rows,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn row(&self, state: usize, action: usize) -> &ModelRow {
        &self.rows[state * self.n_actions + action]
    }

    pub fn rows(&self) -> &[ModelRow] {
        &self.rows
    }

    pub fn sample<R: Rng + ?Sized>(&self, state: usize, action: usize, rng: &mut R) -> usize {
        self.row(state, action).sample(rng)
    }

    /// Mean L1 distance to `other` over the given `(state, action)` pairs.
    pub fn mean_l1_distance(&self, other: &TabularModel, pairs: &[(usize, usize)]) -> f64 {
        if pairs.is_empty() {
            return 0.0;
        }
        let total: f64 = pairs
            .iter()
            .map(|&(s, a)| self.row(s, a).l1_distance(&other.row(s, a).probs))
            .sum();
        total / pairs.len() as f64
    }
}

/// One simulated transition with the gradient caches needed by the trainers.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Step {
    pub state: usize,
    pub action: usize,
    pub next_state: usize,
    pub reward: f64,
    pub cost: f64,
    /// `d/dθ log π(a | s)`; empty when not recorded.
    pub policy_grad: Vec<f64>,
    /// `d/dθ H(π(· | s))`; empty when not recorded.
    pub entropy_grad: Vec<f64>,
    /// `d/dθ_adv log π_adv(s' | s, a)`; empty unless the adversary generated `s'`.
    pub adversary_grad: Vec<f64>,
}

impl Step {
    pub fn new(state: usize, action: usize, next_state: usize, reward: f64, cost: f64) -> Self {
        Self {
            state,
            action,
            next_state,
            reward,
            cost,
            ..Self::default()
        }
    }
}

/// A single episode, truncated at the first terminal state or the horizon.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    pub steps: Vec<Step>,
}

impl Trajectory {
    /// Number of executed steps (`T_stop`).
    pub fn stop_index(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn total_reward(&self) -> f64 {
        self.steps.iter().map(|s| s.reward).sum()
    }

    pub fn total_cost(&self) -> f64 {
        self.steps.iter().map(|s| s.cost).sum()
    }
}

/// Discounted reward-to-go `V`, constraint-cost-to-go `C` and the combined
/// Lagrangian return `V - λC` at one time step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LagrangianReturns {
    pub value: f64,
    pub cost: f64,
    pub combined: f64,
}

/// Backward recursion `V ← r_t + γV`, `C ← c_t + γC` over the executed steps.
/// Entry `t` of the result belongs to step `t`.
pub fn returns_backward(
    traj: &Trajectory,
    discount: f64,
    lambda: f64,
) -> Result<Vec<LagrangianReturns>> {
    if traj.is_empty() {
        return Err(Error::NoData("empty trajectory"));
    }
    if lambda < 0.0 {
        return Err(Error::InvalidArgument(format!("negative multiplier {lambda}")));
    }
    let mut out = vec![
        LagrangianReturns {
            value: 0.0,
            cost: 0.0,
            combined: 0.0
        };
        traj.steps.len()
    ];
    let (mut v, mut c) = (0.0, 0.0);
    for (t, step) in traj.steps.iter().enumerate().rev() {
        v = step.reward + discount * v;
        c = step.cost + discount * c;
        out[t] = LagrangianReturns {
            value: v,
            cost: c,
            combined: v - lambda * c,
        };
    }
    Ok(out)
}

/// Converts a discounted budget into its undiscounted equivalent over `horizon`
/// steps: `d * T / sum_{i<T} γ^i`.
pub fn undiscounted_budget(budget: f64, discount: f64, horizon: usize) -> f64 {
    if horizon == 0 {
        return budget;
    }
    let mut norm = 0.0;
    let mut g = 1.0;
    for _ in 0..horizon {
        norm += g;
        g *= discount;
    }
    budget * horizon as f64 / norm
}
