//! Runs estimation, training and testing from a TOML config into an output
//! directory, as the `rcmdp run` verb does.
//!
//! `cargo run --release --example full_pipeline -- configs/nav1-quick.toml`

use rcmdp::config::{validate_with, Overrides};
use rcmdp::pipeline::Pipeline;

fn main() -> rcmdp::Result<()> {
    let path = std::env::args().nth(1).unwrap_or_else(|| "configs/nav1-quick.toml".into());
    let text = std::fs::read_to_string(&path).map_err(|e| rcmdp::Error::Config(vec![format!("{path}: {e}")]))?;
    let validated = validate_with(&text, &Overrides::default())?;
    for w in &validated.warnings {
        println!("warning: {w}");
    }
    let mut pipeline = Pipeline::open(validated.config)?;
    let summary = pipeline.run()?;
    println!("outputs in {}", pipeline.out.display());
    for r in summary.iter().filter(|r| r.param_value == "all") {
        println!(
            "{:<16} {:<4} V {:>8.2} ± {:<6.2} overshoot {:>7.2}  R_pen {:>10.2}",
            r.algorithm.as_str(),
            r.test_id,
            r.value_mean,
            r.value_stderr,
            r.overshoot_mean,
            r.penalised_mean
        );
    }
    Ok(())
}
