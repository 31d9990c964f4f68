//! Compares the hand-derived policy and critic gradients against central
//! finite differences along random directions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rcmdp::diffnet::{DiffNet, Head};

fn fd(net: &DiffNet, u: &[f64], f: impl Fn(&DiffNet) -> f64) -> f64 {
    let h = 1e-5;
    let (mut a, mut b) = (net.clone(), net.clone());
    a.add_scaled(u, h);
    b.add_scaled(u, -h);
    (f(&a) - f(&b)) / (2.0 * h)
}

fn main() -> rcmdp::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let policy = DiffNet::random(6, 100, 4, Head::Softmax, 0.5, &mut rng);
    let critic = DiffNet::random(6, 100, 1, Head::Linear, 0.5, &mut rng);
    let x: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
    let batch: Vec<Vec<f64>> = (0..8).map(|_| (0..6).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let targets: Vec<f64> = (0..8).map(|_| rng.random_range(-5.0..5.0)).collect();
    println!("{:<10} {:>14} {:>14} {:>10}", "quantity", "analytic", "numeric", "rel err");
    for probe in 0..5 {
        let u: Vec<f64> = (0..policy.params().len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (_, g) = policy.log_prob_grad(&x, probe % 4)?;
        let a: f64 = g.iter().zip(&u).map(|(g, u)| g * u).sum();
        let n = fd(&policy, &u, |p| p.forward(&x).unwrap()[probe % 4].ln());
        println!("{:<10} {a:>14.8} {n:>14.8} {:>10.2e}", "log-prob", (a - n).abs() / n.abs());
        let (_, g) = policy.entropy_grad(&x)?;
        let a: f64 = g.iter().zip(&u).map(|(g, u)| g * u).sum();
        let n = fd(&policy, &u, |p| p.entropy(&x).unwrap());
        println!("{:<10} {a:>14.8} {n:>14.8} {:>10.2e}", "entropy", (a - n).abs() / n.abs());
        let u: Vec<f64> = (0..critic.params().len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (_, g) = critic.mse_grad(&batch, &targets)?;
        let a: f64 = g.iter().zip(&u).map(|(g, u)| g * u).sum();
        let n = fd(&critic, &u, |c| c.mse_grad(&batch, &targets).unwrap().0);
        println!("{:<10} {a:>14.8} {n:>14.8} {:>10.2e}", "mse", (a - n).abs() / n.abs());
    }
    Ok(())
}
