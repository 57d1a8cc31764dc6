//! Networked microgrid: droop baseline and a short training run.
//!
//! cargo run --release --example microgrid -- [joint_iters]

use isscert::environments::{EnvConfig, EnvKind};
use isscert::evaluation::{compare, BaselineSpec, Controller, NominalController};
use isscert::training::{train, TrainConfig};
use isscert::verification::{check_certificate, CheckOptions};

fn main() -> isscert::Result<()> {
    let joint = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1000);
    let env = EnvConfig::microgrid(5).build()?;
    let cfg = TrainConfig {
        batch_size: 256,
        joint_iters: joint,
        ..TrainConfig::for_kind(EnvKind::Microgrid)
    };
    let out = train(&env, &cfg)?;
    let opts = CheckOptions {
        n_samples: 20_000,
        ..CheckOptions::default()
    };
    print!("{}", check_certificate(&out.bundle, &env, &opts)?.summary());

    let droop = NominalController::build(&env, &BaselineSpec::Droop { gain: 1.0 })?;
    let ctrls: Vec<(&str, &dyn Controller)> = vec![("neural", &out.bundle), ("droop", &droop)];
    for row in compare(&env, &ctrls, &[0, 1, 2, 3], None)?.rows {
        println!("{:<7} reward {:.2} ± {:.2}  mean error {:.4}", row.controller, row.reward_mean, row.reward_std, row.error_mean);
    }
    Ok(())
}
