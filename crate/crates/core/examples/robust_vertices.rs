//! Robust certificate over an uncertain lead-truck speed in [1, 3]:
//! checks the control-affine premise and compares vertex and interior rates.
//!
//! cargo run --release --example robust_vertices -- [joint_iters]

use isscert::environments::{EnvConfig, EnvKind};
use isscert::training::{train, TrainConfig};
use isscert::verification::{affineness_residual, check_robust_vertices, CheckOptions};

fn main() -> isscert::Result<()> {
    let joint = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(2000);
    let env = EnvConfig {
        uncertainty_vertices: Some(vec![vec![1.0], vec![3.0]]),
        ..EnvConfig::platoon(5)
    }
    .build()?;
    println!("affineness residual {:.2e}", affineness_residual(&env, 1000, 0)?);

    let cfg = TrainConfig {
        joint_iters: joint,
        ..TrainConfig::desk(EnvKind::Platoon)
    };
    let out = train(&env, &cfg)?;
    let report = check_robust_vertices(&out.bundle, &env, &CheckOptions::default(), 8)?;
    println!(
        "max vertex rate {:.4}  max interior rate {:.4}",
        report.max_vertex_rate, report.max_interior_rate
    );
    if let Some(n) = &report.notice {
        println!("{n}");
    }
    Ok(())
}
