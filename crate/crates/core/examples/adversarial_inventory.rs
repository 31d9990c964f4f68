//! Adversarial RCPG on inventory management: pretrains the transition
//! adversary on the nominal model, then trains against it.
//!
//! `cargo run --release --example adversarial_inventory -- [episodes] [pretrain-iterations]`

use rcmdp::envs::Domain;
use rcmdp::pipeline::estimate_uncertainty;
use rcmdp::trainers::{run_training, Algorithm, TrainerConfig};

fn main() -> rcmdp::Result<()> {
    let mut args = std::env::args().skip(1).map(|a| a.parse::<usize>().ok());
    let episodes = args.next().flatten().unwrap_or(500);
    let pretrain = args.next().flatten().unwrap_or(5000);
    let domain = Domain::Inventory;
    let task = domain.task();
    let uset = estimate_uncertainty(&task, domain.estimation_episodes(), 0.1, 0)?;
    let mut cfg = TrainerConfig::new(Algorithm::AdvRcpg, episodes, 0, domain.initial_multiplier());
    cfg.pretrain_max_iterations = pretrain;
    let out = run_training(&cfg, &task, &uset.nominal, Some(&uset))?;
    if let Some(p) = &out.pretrain {
        println!(
            "pretrain: {} iterations, max row MAE {:.4}, converged {}",
            p.iterations, p.max_row_mae, p.converged
        );
    }
    for m in out.metrics.iter().step_by(episodes.div_ceil(10).max(1)) {
        println!(
            "ep {:>5}  V {:>8.1}  C {:>7.1}  λ {:>7.2}  λ_adv {:>7.2}  dev {:.3}",
            m.episode, m.value, m.constraint_cost, m.lambda, m.lambda_adv, m.mean_l1_deviation
        );
    }
    Ok(())
}
