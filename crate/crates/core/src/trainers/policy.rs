//! Rollouts with cached score-function gradients and the entropy-regularised
//! Lagrangian policy update.

use rand::Rng;

use super::LagrangeState;
use crate::diffnet::DiffNet;
use crate::error::Result;
use crate::mdp::{sample_index, LagrangianReturns, Rcmdp, Step, TabularModel, Trajectory};
use crate::robustness::UncertaintySet;

/// Where successor states come from during a training rollout.
#[derive(Debug, Clone, Copy)]
pub enum TransitionSource<'a> {
    Model(&'a TabularModel),
    /// Learned adversary over the supports of the nominal rows.
    Adversary {
        net: &'a DiffNet,
        uset: &'a UncertaintySet,
    },
}

/// Samples one episode of at most `horizon` steps from `start`, caching
/// `∇log π`, `∇H` and (for an adversary source) `∇log π_adv` per step.
pub fn rollout<T: Rcmdp + ?Sized, R: Rng + ?Sized>(
    task: &T,
    policy: &DiffNet,
    source: TransitionSource<'_>,
    start: usize,
    rng: &mut R,
) -> Result<Trajectory> {
    let mut steps = Vec::with_capacity(task.horizon());
    let mut s = start;
    for _ in 0..task.horizon() {
        if task.is_terminal(s) {
            break;
        }
        let x = task.policy_input(s);
        let probs = policy.forward(&x)?;
        let a = sample_index(&probs, rng);
        let (_, policy_grad) = policy.log_prob_grad(&x, a)?;
        let (_, entropy_grad) = policy.entropy_grad(&x)?;
        let (next, adversary_grad) = match source {
            TransitionSource::Model(model) => (model.sample(s, a, rng), Vec::new()),
            TransitionSource::Adversary { net, uset } => {
                let row = uset.nominal.row(s, a);
                let xa = task.adversary_input(s, a);
                let q = net.forward_active(&xa, row.support.len())?;
                let k = sample_index(&q, rng);
                let (_, g) = net.log_prob_grad_active(&xa, k, row.support.len())?;
                (row.support[k], g)
            }
        };
        let mut step = Step::new(s, a, next, task.reward(s, a, next), task.constraint_cost(s, a, next));
        step.policy_grad = policy_grad;
        step.entropy_grad = entropy_grad;
        step.adversary_grad = adversary_grad;
        steps.push(step);
        s = next;
    }
    Ok(Trajectory { steps })
}

/// Rates used by one policy update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyRates {
    pub params: f64,
    pub multiplier: f64,
}

/// `θ += η₁(𝐕_t ∇log π_t + w ∇H_t)` over the episode, then (when a budget is
/// given) `λ += η₂(C_0 − d)` once.
pub fn policy_step(
    traj: &Trajectory,
    returns: &[LagrangianReturns],
    lag: &mut LagrangeState,
    policy: &mut DiffNet,
    rates: PolicyRates,
    entropy_weight: f64,
    budget: Option<f64>,
) {
    let params = policy.params_mut();
    for (step, ret) in traj.steps.iter().zip(returns).rev() {
        for ((p, g), h) in params.iter_mut().zip(&step.policy_grad).zip(&step.entropy_grad) {
            *p += rates.params * (ret.combined * g + entropy_weight * h);
        }
    }
    if let (Some(d), Some(first)) = (budget, returns.first()) {
        lag.update_policy(rates.multiplier * (first.cost - d));
    }
}
