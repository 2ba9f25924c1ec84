//! Finite-difference check of every layer, then the same check with a
//! deliberately broken backward rule.
//!
//! cargo run --release --example gradient_check

use convrecon::cli::gradient_suite;
use convrecon::diffcore::{GradCheckConfig, OpKind};

fn main() -> convrecon::Result<()> {
    let cfg = GradCheckConfig::default();
    let report = gradient_suite(&cfg, 0)?;
    for g in &report.groups {
        println!("{:<16} {:.3e}", g.group, g.max_rel_err());
    }
    println!("passed: {}", report.passed());

    let broken = GradCheckConfig {
        fault: Some(OpKind::Tanh),
        ..cfg
    };
    let report = gradient_suite(&broken, 0)?;
    println!("\nwith a corrupted tanh backward:");
    match report.into_result() {
        Err(e) => println!("{e}"),
        Ok(_) => unreachable!("the corruption must be detected"),
    }
    Ok(())
}
