//! Sampled verification of a trained certificate, plus the exhaustive grid
//! oracle on a small grid.
//!
//! cargo run --release --example verify_certificate -- platoon5.json

use std::path::Path;

use isscert::cli::Checkpoint;
use isscert::verification::{check_certificate, implication_oracle, CheckOptions, GridSpec};

fn main() -> isscert::Result<()> {
    let path = std::env::args().nth(1).unwrap_or_else(|| "platoon5.json".into());
    let ck = Checkpoint::load(Path::new(&path))?;
    let env = ck.environment()?;

    let report = check_certificate(&ck.bundle, &env, &CheckOptions::default())?;
    print!("{}", report.summary());
    for c in report.counterexamples.iter().take(3) {
        println!("counterexample node {} x {:?} residual {:.4}", c.node, c.state, c.residual);
    }

    // 2 points per axis on a 5-truck platoon is 2^15 states
    let grid = GridSpec::uniform(&env, 2);
    let bad = implication_oracle(&ck.bundle, &env, &grid, 0.0, 0.0)?;
    println!("grid oracle: {} violating (state, node) pairs out of {} states", bad.len(), grid.total_points());
    Ok(())
}
