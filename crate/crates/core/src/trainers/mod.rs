//! Policy-gradient trainers: PG, CPG, the three RCPG variants and the
//! adversarial RCPG with a learned transition network.

pub mod adversary;
pub mod policy;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use log::debug;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use adversary::{
    adversary_pretrain, adversary_row, adversary_step, deviation_grad_on, mean_deviation,
    nominal_deviation_grad, AdversaryRates, PretrainReport,
};
pub use policy::{policy_step, rollout, PolicyRates, TransitionSource};

use crate::diffnet::{AdamState, DiffNet, Head, HIDDEN_UNITS, INIT_SCALE};
use crate::error::{Error, Result};
use crate::mdp::{returns_backward, undiscounted_budget, Rcmdp, TabularModel};
use crate::robustness::{select_worst_model, UncertaintySet, WorstCaseMode};

/// Upper clamp for both multipliers.
pub const MULTIPLIER_MAX: f64 = 500.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Algorithm {
    #[serde(rename = "pg")]
    Pg,
    #[serde(rename = "cpg")]
    Cpg,
    #[serde(rename = "rcpg-value")]
    RcpgValue,
    #[serde(rename = "rcpg-constraint")]
    RcpgConstraint,
    #[serde(rename = "rcpg-lagrangian")]
    RcpgLagrangian,
    #[serde(rename = "adv-rcpg")]
    AdvRcpg,
}

impl Algorithm {
    pub const ALL: [Algorithm; 6] = [
        Algorithm::Pg,
        Algorithm::Cpg,
        Algorithm::RcpgValue,
        Algorithm::RcpgConstraint,
        Algorithm::RcpgLagrangian,
        Algorithm::AdvRcpg,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Pg => "pg",
            Algorithm::Cpg => "cpg",
            Algorithm::RcpgValue => "rcpg-value",
            Algorithm::RcpgConstraint => "rcpg-constraint",
            Algorithm::RcpgLagrangian => "rcpg-lagrangian",
            Algorithm::AdvRcpg => "adv-rcpg",
        }
    }

    /// Whether training needs an uncertainty set.
    pub fn is_robust(self) -> bool {
        !matches!(self, Algorithm::Pg | Algorithm::Cpg)
    }

    pub fn worst_case_mode(self) -> Option<WorstCaseMode> {
        match self {
            Algorithm::RcpgValue => Some(WorstCaseMode::Value),
            Algorithm::RcpgConstraint => Some(WorstCaseMode::Constraint),
            Algorithm::RcpgLagrangian => Some(WorstCaseMode::Lagrangian),
            _ => None,
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown algorithm {s:?}")))
    }
}

/// Lagrange multipliers of the policy (`λ`) and of the adversary (`λ_adv`),
/// both projected onto `[0, max]` after every update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LagrangeState {
    pub lambda: f64,
    pub lambda_adv: f64,
    pub max: f64,
}

impl LagrangeState {
    pub fn new(lambda: f64, lambda_adv: f64) -> Self {
        Self {
            lambda: lambda.clamp(0.0, MULTIPLIER_MAX),
            lambda_adv: lambda_adv.clamp(0.0, MULTIPLIER_MAX),
            max: MULTIPLIER_MAX,
        }
    }

    pub fn update_policy(&mut self, delta: f64) {
        self.lambda = (self.lambda + delta).clamp(0.0, self.max);
    }

    pub fn update_adversary(&mut self, delta: f64) {
        self.lambda_adv = (self.lambda_adv + delta).clamp(0.0, self.max);
    }
}

/// Step-size schedule `base / (1 + episode / period)` with integer division.
pub fn scheduled_rate(base: f64, episode: usize, period: usize) -> f64 {
    base / (1 + episode / period.max(1)) as f64
}

/// Everything a single training run needs besides the task and models.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainerConfig {
    pub algorithm: Algorithm,
    pub episodes: usize,
    pub seed: u64,
    pub policy_lr: f64,
    pub multiplier_lr: f64,
    pub critic_lr: f64,
    pub schedule_period: usize,
    pub entropy_weight: f64,
    pub initial_lambda: f64,
    pub initial_lambda_adv: f64,
    /// Episodes on the nominal model before the adversary takes over.
    pub warmup_episodes: usize,
    /// Random pairs per hinge-gradient batch.
    pub deviation_samples: usize,
    pub pretrain_lr: f64,
    pub pretrain_tolerance: f64,
    pub pretrain_max_iterations: usize,
    pub hidden_units: usize,
    pub init_scale: f64,
}

impl TrainerConfig {
    /// Standard hyperparameters; both multipliers start at `initial_lambda`.
    pub fn new(algorithm: Algorithm, episodes: usize, seed: u64, initial_lambda: f64) -> Self {
        Self {
            algorithm,
            episodes,
            seed,
            policy_lr: 1e-3,
            multiplier_lr: 1e-4,
            critic_lr: 1e-3,
            schedule_period: 500,
            entropy_weight: 5.0,
            initial_lambda,
            initial_lambda_adv: initial_lambda,
            warmup_episodes: 100,
            deviation_samples: 32,
            pretrain_lr: 1e-2,
            pretrain_tolerance: 0.01,
            pretrain_max_iterations: 50_000,
            hidden_units: HIDDEN_UNITS,
            init_scale: INIT_SCALE,
        }
    }
}

/// Per-episode training record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub episode: usize,
    pub value: f64,
    pub constraint_cost: f64,
    pub overshoot: f64,
    pub lambda: f64,
    pub lambda_adv: f64,
    pub mean_l1_deviation: f64,
}

#[derive(Debug, Clone)]
pub struct TrainingOutcome {
    pub policy: DiffNet,
    pub adversary: Option<DiffNet>,
    pub lagrange: LagrangeState,
    pub metrics: Vec<EpisodeMetrics>,
    pub pretrain: Option<PretrainReport>,
}

/// Independent RNG stream `stream` for `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

const POLICY_STREAM: u64 = 0;
const ROLLOUT_STREAM: u64 = 1;
const CRITIC_STREAM: u64 = 2;
const ADVERSARY_STREAM: u64 = 3;

fn non_terminal_pairs<T: Rcmdp + ?Sized>(task: &T) -> Vec<(usize, usize)> {
    task.non_terminal_states()
        .into_iter()
        .flat_map(|s| (0..task.n_actions()).map(move |a| (s, a)))
        .collect()
}

struct Critics {
    value: DiffNet,
    cost: DiffNet,
    value_adam: AdamState,
    cost_adam: AdamState,
}

impl Critics {
    fn tables<T: Rcmdp + ?Sized>(&self, task: &T) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut v = Vec::with_capacity(task.n_states());
        let mut c = Vec::with_capacity(task.n_states());
        for s in 0..task.n_states() {
            if task.is_terminal(s) {
                v.push(0.0);
                c.push(0.0);
            } else {
                let x = task.critic_input(s);
                v.push(self.value.value(&x)?);
                c.push(self.cost.value(&x)?);
            }
        }
        Ok((v, c))
    }
}

/// Trains one policy. `nominal` drives PG/CPG and the adversarial warm-up;
/// robust algorithms additionally need `uset`.
pub fn run_training<T: Rcmdp + ?Sized>(
    cfg: &TrainerConfig,
    task: &T,
    nominal: &TabularModel,
    uset: Option<&UncertaintySet>,
) -> Result<TrainingOutcome> {
    let algo = cfg.algorithm;
    if algo.is_robust() && uset.is_none() {
        return Err(Error::Missing(format!("{algo} needs an uncertainty set")));
    }
    let mut policy_rng = stream_rng(cfg.seed, POLICY_STREAM);
    let mut rollout_rng = stream_rng(cfg.seed, ROLLOUT_STREAM);
    let mut critic_rng = stream_rng(cfg.seed, CRITIC_STREAM);
    let mut adversary_rng = stream_rng(cfg.seed, ADVERSARY_STREAM);

    let mut policy = DiffNet::random(
        task.policy_input(task.initial_state()).len(),
        cfg.hidden_units,
        task.n_actions(),
        Head::Softmax,
        cfg.init_scale,
        &mut policy_rng,
    );
    let (lambda0, lambda_adv0) = match algo {
        Algorithm::Pg => (0.0, 0.0),
        Algorithm::AdvRcpg => (cfg.initial_lambda, cfg.initial_lambda_adv),
        _ => (cfg.initial_lambda, 0.0),
    };
    let mut lag = LagrangeState::new(lambda0, lambda_adv0);
    let budget = (algo != Algorithm::Pg).then_some(task.budget());
    let d_eval = undiscounted_budget(task.budget(), task.discount(), task.horizon());
    let pairs = non_terminal_pairs(task);

    let mut critics = match algo.worst_case_mode() {
        Some(_) => {
            let width = task.critic_input(task.initial_state()).len();
            let mut make = || {
                DiffNet::random(width, cfg.hidden_units, 1, Head::Linear, cfg.init_scale, &mut critic_rng)
            };
            let value = make();
            let cost = make();
            Some(Critics {
                value_adam: AdamState::for_net(&value, cfg.critic_lr),
                cost_adam: AdamState::for_net(&cost, cfg.critic_lr),
                value,
                cost,
            })
        }
        None => None,
    };
    let mut worst = match (&critics, algo.worst_case_mode(), uset) {
        (Some(c), Some(mode), Some(u)) => {
            let (v, k) = c.tables(task)?;
            Some(select_worst_model(u, &v, &k, lag.lambda, mode)?)
        }
        _ => None,
    };

    let mut pretrain = None;
    let mut adversary = match (algo, uset) {
        (Algorithm::AdvRcpg, Some(u)) => {
            let mut net = DiffNet::random(
                task.adversary_input(0, 0).len(),
                cfg.hidden_units,
                task.adversary_width(),
                Head::Softmax,
                cfg.init_scale,
                &mut adversary_rng,
            );
            let report = adversary_pretrain(
                &mut net,
                task,
                u,
                cfg.pretrain_lr,
                cfg.pretrain_tolerance,
                cfg.pretrain_max_iterations,
            )?;
            debug!(
                "adversary fit: {} iterations, max row MAE {:.5}",
                report.iterations, report.max_row_mae
            );
            pretrain = Some(report);
            Some(net)
        }
        _ => None,
    };

    let mut metrics = Vec::with_capacity(cfg.episodes);
    for episode in 0..cfg.episodes {
        let policy_rates = PolicyRates {
            params: scheduled_rate(cfg.policy_lr, episode, cfg.schedule_period),
            multiplier: scheduled_rate(cfg.multiplier_lr, episode, cfg.schedule_period),
        };
        let adversarial = adversary.is_some() && episode >= cfg.warmup_episodes;
        let source = match (&worst, &adversary, uset) {
            (Some(model), _, _) => TransitionSource::Model(model),
            (None, Some(net), Some(u)) if adversarial => TransitionSource::Adversary { net, uset: u },
            _ => TransitionSource::Model(nominal),
        };
        let start = task.sample_start(&mut rollout_rng);
        let traj = rollout(task, &policy, source, start, &mut rollout_rng)?;
        let returns = returns_backward(&traj, task.discount(), lag.lambda)?;

        policy_step(
            &traj,
            &returns,
            &mut lag,
            &mut policy,
            policy_rates,
            cfg.entropy_weight,
            budget,
        );

        if let (Some(c), Some(mode), Some(u)) = (critics.as_mut(), algo.worst_case_mode(), uset) {
            let inputs: Vec<Vec<f64>> = traj.steps.iter().map(|s| task.critic_input(s.state)).collect();
            let v_targets: Vec<f64> = returns.iter().map(|r| r.value).collect();
            let c_targets: Vec<f64> = returns.iter().map(|r| r.cost).collect();
            c.value.critic_fit_episode(&inputs, &v_targets, &mut c.value_adam)?;
            c.cost.critic_fit_episode(&inputs, &c_targets, &mut c.cost_adam)?;
            let (v, k) = c.tables(task)?;
            worst = Some(select_worst_model(u, &v, &k, lag.lambda, mode)?);
        }

        if let (Some(net), Some(u), true) = (adversary.as_mut(), uset, adversarial) {
            let rates = AdversaryRates {
                params: policy_rates.params,
                multiplier: policy_rates.multiplier,
            };
            adversary_step(
                &traj,
                &returns,
                &mut lag,
                net,
                task,
                u,
                rates,
                cfg.deviation_samples,
                &mut adversary_rng,
            )?;
        }

        let deviation = match (&worst, &adversary, uset) {
            (Some(model), _, _) => model.mean_l1_distance(nominal, &pairs),
            (None, Some(net), Some(u)) => mean_deviation(net, task, u, &pairs)?,
            _ => 0.0,
        };
        let cost = traj.total_cost();
        metrics.push(EpisodeMetrics {
            episode,
            value: traj.total_reward(),
            constraint_cost: cost,
            overshoot: cost - d_eval,
            lambda: lag.lambda,
            lambda_adv: lag.lambda_adv,
            mean_l1_deviation: deviation,
        });
    }

    Ok(TrainingOutcome {
        policy,
        adversary,
        lagrange: lag,
        metrics,
        pretrain,
    })
}

/// Writes one row per episode with a header.
pub fn write_metrics_csv(path: &Path, metrics: &[EpisodeMetrics]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for m in metrics {
        w.serialize(m)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_metrics_csv(path: &Path) -> Result<Vec<EpisodeMetrics>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}
