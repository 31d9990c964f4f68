//! Independent oracles for the inventory demand law and transitions.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rcmdp::envs::inventory::{inventory_step, Demand, InventorySpec};
use statrs::distribution::{ContinuousCDF, Normal};

const DRAWS: usize = 200_000;

/// `P(clip(round(X), 0, S-1) = k)` for `X ~ N(mean, std)`.
fn demand_pmf(d: Demand, n_states: usize) -> Vec<f64> {
    let normal = Normal::new(d.mean, d.std).unwrap();
    let last = n_states - 1;
    (0..n_states)
        .map(|k| {
            let hi = if k == last { 1.0 } else { normal.cdf(k as f64 + 0.5) };
            let lo = if k == 0 { 0.0 } else { normal.cdf(k as f64 - 0.5) };
            hi - lo
        })
        .collect()
}

fn assert_close_to_pmf(counts: &[usize], pmf: &[f64]) {
    for (k, (&c, &p)) in counts.iter().zip(pmf).enumerate() {
        let freq = c as f64 / DRAWS as f64;
        let se = (p * (1.0 - p) / DRAWS as f64).sqrt().max(1e-6);
        assert!((freq - p).abs() < 5.0 * se + 1e-5, "k={k}: empirical {freq} vs exact {p}");
    }
}

#[test]
fn demand_frequencies_match_the_rounded_gaussian() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for d in [
        Demand { mean: 5.0, std: 20.0 / 6.0 },
        Demand { mean: 20.0 / 3.0, std: 5.0 },
        Demand { mean: 20.0 / 6.0, std: 2.5 },
    ] {
        let mut counts = vec![0; 20];
        for _ in 0..DRAWS {
            counts[d.sample(20, &mut rng)] += 1;
        }
        let pmf = demand_pmf(d, 20);
        assert!((pmf.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_close_to_pmf(&counts, &pmf);
    }
}

#[test]
fn transition_row_matches_closed_form() {
    let spec = InventorySpec::default();
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let (s, a) = (4, 7);
    let stock = s + spec.effective_order(s, a);
    let pmf = demand_pmf(spec.demand, spec.n_states);
    let mut exact = vec![0.0; spec.n_states];
    for (d, p) in pmf.iter().enumerate() {
        exact[stock - d.min(stock)] += p;
    }
    let mut counts = vec![0; spec.n_states];
    for _ in 0..DRAWS {
        let (next, _, _) = inventory_step(&spec, s, a, &mut rng, spec.demand);
        counts[next] += 1;
    }
    assert_close_to_pmf(&counts, &exact);
}
