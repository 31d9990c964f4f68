//! Estimates nominal models from random-policy data and prints the spread
//! of the Hoeffding L1 budgets for each domain and a few data sizes.

use rcmdp::envs::Domain;
use rcmdp::pipeline::estimate_uncertainty;

fn main() -> rcmdp::Result<()> {
    println!("{:<10} {:>8} {:>8} {:>8} {:>8}  visited", "domain", "episodes", "min", "median", "max");
    for domain in [Domain::Inventory, Domain::Nav1, Domain::Nav2] {
        let task = domain.task();
        for episodes in [10, 100, 1000, 10_000] {
            let set = estimate_uncertainty(&task, episodes, 0.1, 0)?;
            let mut seen: Vec<f64> = set
                .budgets
                .iter()
                .enumerate()
                .filter(|&(i, _)| set.counts.observed(i / set.nominal.n_actions(), i % set.nominal.n_actions()) > 0)
                .map(|(_, &b)| b)
                .collect();
            seen.sort_by(f64::total_cmp);
            println!(
                "{:<10} {:>8} {:>8.3} {:>8.3} {:>8.3}  {}/{}",
                domain.as_str(),
                episodes,
                seen[0],
                seen[seen.len() / 2],
                seen[seen.len() - 1],
                seen.len(),
                set.budgets.len()
            );
        }
    }
    Ok(())
}
