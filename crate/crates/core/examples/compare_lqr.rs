//! Trained controller against the LQR baseline on the platoon scenario.
//!
//! cargo run --release --example compare_lqr -- platoon5.json

use std::path::Path;

use isscert::cli::Checkpoint;
use isscert::evaluation::{compare, platoon_linearization, care_solve, write_comparison_csv, BaselineSpec, Controller, NominalController};
use isscert::verification::monitor_composed_v;
use isscert::evaluation::rollout;
use nalgebra::DMatrix;

fn main() -> isscert::Result<()> {
    let path = std::env::args().nth(1).unwrap_or_else(|| "platoon5.json".into());
    let ck = Checkpoint::load(Path::new(&path))?;
    let env = ck.environment()?;

    let (a, b) = platoon_linearization();
    let care = care_solve(&a, &b, &DMatrix::identity(2, 2), &DMatrix::identity(1, 1))?;
    println!("platoon LQR gain {:.4} (CARE residual {:.1e})", care.k, care.residual);

    let lqr = NominalController::build(&env, &BaselineSpec::parse("lqr")?)?;
    let ctrls: Vec<(&str, &dyn Controller)> = vec![("neural", &ck.bundle), ("lqr", &lqr)];
    let cmp = compare(&env, &ctrls, &[0, 1, 2, 3], None)?;
    for e in &cmp.entries {
        println!(
            "{:<7} seed {}: reward {:>10.2}  tail error {:.4}{}",
            e.controller,
            e.seed,
            e.cumulative_reward,
            e.tail_error,
            if e.failed { "  FAILED" } else { "" }
        );
    }
    write_comparison_csv(std::fs::File::create("comparison.csv")?, &cmp)?;

    let trace = rollout(&env, &ck.bundle, &env.scenario(0), None, None)?;
    let mon = monitor_composed_v(&trace, &ck.bundle, 1e-3, 0.05)?;
    println!(
        "max_i V_i decreases on {:.1}% of {} steps outside the goal tube",
        100.0 * mon.decrease_fraction,
        mon.steps_considered
    );
    Ok(())
}
