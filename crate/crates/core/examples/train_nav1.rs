//! Trains CPG and adversarial RCPG on the first navigation task and prints
//! a learning-curve digest.

use std::time::Instant;

use rcmdp::envs::Domain;
use rcmdp::mdp::Rcmdp;
use rcmdp::robustness::UncertaintySet;
use rcmdp::trainers::{run_training, stream_rng, Algorithm, TrainerConfig};

fn main() -> rcmdp::Result<()> {
    let episodes: usize = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(1000);
    let domain = Domain::Nav1;
    let task = domain.task();
    let mut rng = stream_rng(7, 100);
    let data = task.collect_random(&task.data_dynamics(), domain.estimation_episodes(), &mut rng);
    let uset = UncertaintySet::from_trajectories(
        &data,
        task.n_states(),
        task.n_actions(),
        &task.supports(),
        task.hoeffding_outcomes(),
        0.1,
    )?;
    for algorithm in [Algorithm::Cpg, Algorithm::AdvRcpg] {
        let cfg = TrainerConfig::new(algorithm, episodes, 0, domain.initial_multiplier());
        let t = Instant::now();
        let out = run_training(&cfg, &task, &uset.nominal, Some(&uset))?;
        println!("{algorithm}: {} episodes in {:.1?}", episodes, t.elapsed());
        for chunk in out.metrics.chunks(episodes.div_ceil(10).max(1)) {
            let n = chunk.len() as f64;
            let v: f64 = chunk.iter().map(|m| m.value).sum::<f64>() / n;
            let c: f64 = chunk.iter().map(|m| m.constraint_cost).sum::<f64>() / n;
            let last = chunk.last().unwrap();
            println!(
                "  ep {:>5}  V {:>8.2}  C {:>6.2}  λ {:>6.3}  λ_adv {:>7.3}  dev {:.3}",
                last.episode, v, c, last.lambda, last.lambda_adv, last.mean_l1_deviation
            );
        }
    }
    Ok(())
}
