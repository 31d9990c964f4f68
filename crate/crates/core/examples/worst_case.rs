//! Solves the L1-ball inner problem for one transition row at growing
//! budgets and shows where the mass moves.

use rcmdp::robustness::worst_case_l1;

fn main() -> rcmdp::Result<()> {
    let nominal = [0.1, 0.4, 0.3, 0.2];
    let values = [-5.0, 2.0, 0.5, 8.0];
    let nominal_value: f64 = nominal.iter().zip(&values).map(|(p, v)| p * v).sum();
    println!("nominal {nominal:?}  value {nominal_value:.3}");
    for alpha in [0.0, 0.1, 0.3, 0.6, 1.0, 2.0] {
        let p = worst_case_l1(&nominal, &values, alpha)?;
        let value: f64 = p.iter().zip(&values).map(|(p, v)| p * v).sum();
        let moved: f64 = p.iter().zip(&nominal).map(|(a, b)| (a - b).abs()).sum();
        let row: Vec<String> = p.iter().map(|x| format!("{x:.3}")).collect();
        println!("alpha {alpha:.1}  p [{}]  value {value:>7.3}  |p - p̂|₁ {moved:.3}", row.join(", "));
    }
    Ok(())
}
