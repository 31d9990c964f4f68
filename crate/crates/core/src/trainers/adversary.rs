//! Learned transition adversary: fitting to the nominal model, the L1
//! hinge penalty on random pairs, and the Lagrangian adversarial update.

use log::warn;
use rand::Rng;

use super::LagrangeState;
use crate::diffnet::{AdamState, DiffNet};
use crate::error::Result;
use crate::mdp::{LagrangianReturns, Rcmdp, Trajectory};
use crate::robustness::UncertaintySet;

/// Outcome of [`adversary_pretrain`].
#[derive(Debug, Clone, PartialEq)]
pub struct PretrainReport {
    pub iterations: usize,
    /// Largest per-row mean absolute error at the end of fitting.
    pub max_row_mae: f64,
    /// Mean absolute error over all rows, one entry per iteration.
    pub history: Vec<f64>,
    pub converged: bool,
}

fn all_pairs<T: Rcmdp + ?Sized>(task: &T) -> Vec<(usize, usize)> {
    (0..task.n_states())
        .flat_map(|s| (0..task.n_actions()).map(move |a| (s, a)))
        .collect()
}

/// Adversary distribution over the support of `(state, action)`.
pub fn adversary_row<T: Rcmdp + ?Sized>(
    adv: &DiffNet,
    task: &T,
    uset: &UncertaintySet,
    state: usize,
    action: usize,
) -> Result<Vec<f64>> {
    let width = uset.nominal.row(state, action).support.len();
    adv.forward_active(&task.adversary_input(state, action), width)
}

/// Fits the adversary to the nominal rows by minimising the mean absolute
/// error over every `(s, a)` with full-batch Adam, until every row's MAE is
/// below `tolerance` or `max_iterations` is reached.
pub fn adversary_pretrain<T: Rcmdp + ?Sized>(
    adv: &mut DiffNet,
    task: &T,
    uset: &UncertaintySet,
    learning_rate: f64,
    tolerance: f64,
    max_iterations: usize,
) -> Result<PretrainReport> {
    let pairs = all_pairs(task);
    let inputs: Vec<Vec<f64>> = pairs
        .iter()
        .map(|&(s, a)| task.adversary_input(s, a))
        .collect();
    let entries: usize = pairs
        .iter()
        .map(|&(s, a)| uset.nominal.row(s, a).support.len())
        .sum();
    let mut adam = AdamState::for_net(adv, learning_rate);
    let mut history = Vec::new();
    let mut grad = vec![0.0; adv.params().len()];
    for iteration in 0..=max_iterations {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let (mut total, mut worst) = (0.0, 0.0f64);
        for (&(s, a), x) in pairs.iter().zip(&inputs) {
            let nominal = &uset.nominal.row(s, a).probs;
            let tape = adv.tape(x, nominal.len())?;
            let abs_err: f64 = tape.probs.iter().zip(nominal).map(|(y, p)| (y - p).abs()).sum();
            total += abs_err;
            worst = worst.max(abs_err / nominal.len() as f64);
            let signs: Vec<f64> = tape
                .probs
                .iter()
                .zip(nominal)
                .map(|(y, p)| sign(y - p))
                .collect();
            adv.backprop_probs(&tape, &signs, &mut grad, 1.0 / entries as f64);
        }
        history.push(total / entries as f64);
        if worst < tolerance || iteration == max_iterations {
            let converged = worst < tolerance;
            if !converged {
                warn!("adversary fit stopped after {iteration} iterations with max row MAE {worst:.4}");
            }
            return Ok(PretrainReport {
                iterations: iteration,
                max_row_mae: worst,
                history,
                converged,
            });
        }
        adam.step(adv.params_mut(), &grad)?;
    }
    unreachable!("loop returns on its last iteration")
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Mean hinge `max(0, ‖π_adv(s,a) − P̂(s,a)‖₁ − α(s,a))` over the given
/// pairs and its parameter gradient (L1 subgradient through the softmax).
pub fn deviation_grad_on<T: Rcmdp + ?Sized>(
    adv: &DiffNet,
    task: &T,
    uset: &UncertaintySet,
    pairs: &[(usize, usize)],
) -> Result<(f64, Vec<f64>)> {
    let mut grad = vec![0.0; adv.params().len()];
    let mut objective = 0.0;
    let n = pairs.len() as f64;
    for &(s, a) in pairs {
        let nominal = &uset.nominal.row(s, a).probs;
        let tape = adv.tape(&task.adversary_input(s, a), nominal.len())?;
        let dist: f64 = tape.probs.iter().zip(nominal).map(|(y, p)| (y - p).abs()).sum();
        let excess = dist - uset.budget(s, a);
        if excess <= 0.0 {
            continue;
        }
        objective += excess / n;
        let signs: Vec<f64> = tape
            .probs
            .iter()
            .zip(nominal)
            .map(|(y, p)| sign(y - p))
            .collect();
        adv.backprop_probs(&tape, &signs, &mut grad, 1.0 / n);
    }
    Ok((objective, grad))
}

/// Hinge-deviation gradient on a fresh batch of `samples` uniformly random
/// `(s, a)` pairs.
pub fn nominal_deviation_grad<T: Rcmdp + ?Sized, R: Rng + ?Sized>(
    adv: &DiffNet,
    task: &T,
    uset: &UncertaintySet,
    samples: usize,
    rng: &mut R,
) -> Result<(f64, Vec<f64>)> {
    let pairs: Vec<(usize, usize)> = (0..samples.max(1))
        .map(|_| {
            (
                rng.random_range(0..task.n_states()),
                rng.random_range(0..task.n_actions()),
            )
        })
        .collect();
    deviation_grad_on(adv, task, uset, &pairs)
}

/// Rates used by one adversary update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdversaryRates {
    pub params: f64,
    pub multiplier: f64,
}

/// Reverse pass over an adversarial episode: descend `θ_adv` along
/// `𝐕_next ∇log π_adv + λ_adv ∇P`, then ascend `λ_adv` on the observed
/// deviation of the visited row.
#[allow(clippy::too_many_arguments)]
pub fn adversary_step<T: Rcmdp + ?Sized, R: Rng + ?Sized>(
    traj: &Trajectory,
    returns: &[LagrangianReturns],
    lag: &mut LagrangeState,
    adv: &mut DiffNet,
    task: &T,
    uset: &UncertaintySet,
    rates: AdversaryRates,
    samples: usize,
    rng: &mut R,
) -> Result<()> {
    let mut next_value = 0.0;
    for (t, step) in traj.steps.iter().enumerate().rev() {
        let (_, deviation) = nominal_deviation_grad(adv, task, uset, samples, rng)?;
        let params = adv.params_mut();
        if !step.adversary_grad.is_empty() {
            for (p, g) in params.iter_mut().zip(&step.adversary_grad) {
                *p -= rates.params * next_value * g;
            }
        }
        let penalty = lag.lambda_adv;
        for (p, g) in params.iter_mut().zip(&deviation) {
            *p -= rates.params * penalty * g;
        }
        let row = adversary_row(adv, task, uset, step.state, step.action)?;
        let delta_p = uset.nominal.row(step.state, step.action).l1_distance(&row);
        lag.update_adversary(rates.multiplier * (delta_p - uset.budget(step.state, step.action)));
        next_value = returns[t].combined;
    }
    Ok(())
}

/// Mean L1 distance between adversary rows and nominal rows over `pairs`.
pub fn mean_deviation<T: Rcmdp + ?Sized>(
    adv: &DiffNet,
    task: &T,
    uset: &UncertaintySet,
    pairs: &[(usize, usize)],
) -> Result<f64> {
    if pairs.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for &(s, a) in pairs {
        let row = adversary_row(adv, task, uset, s, a)?;
        total += uset.nominal.row(s, a).l1_distance(&row);
    }
    Ok(total / pairs.len() as f64)
}
