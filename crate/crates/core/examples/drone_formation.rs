//! Planar drone formation: short training on 2x2, then port to 4x4.
//!
//! cargo run --release --example drone_formation -- [joint_iters]

use isscert::certificates::port_certificate;
use isscert::environments::{EnvConfig, EnvKind, Sharing};
use isscert::evaluation::{compare, metrics, rollout, BaselineSpec, Controller, NominalController};
use isscert::training::{train, TrainConfig};
use isscert::verification::{check_certificate, CheckOptions};

fn main() -> isscert::Result<()> {
    let joint = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(500);
    let env = EnvConfig::drone(2, 2).build()?;
    let cfg = TrainConfig {
        batch_size: 256,
        pretrain_ctrl_iters: 200,
        pretrain_lyap_iters: 200,
        joint_iters: joint,
        ..TrainConfig::for_kind(EnvKind::PlanarDrone)
    };
    let out = train(&env, &cfg)?;
    let last = out.history.last().expect("non-empty schedule");
    println!("final loss: goal {:.4} A {:.4} B {:.4} ctrl {:.4}", last.goal, last.loss_a, last.loss_b, last.ctrl);

    let opts = CheckOptions {
        n_samples: 20_000,
        ..CheckOptions::default()
    };
    print!("{}", check_certificate(&out.bundle, &env, &opts)?.summary());

    let lqr = NominalController::build(&env, &BaselineSpec::Nominal)?;
    let ctrls: Vec<(&str, &dyn Controller)> = vec![("neural", &out.bundle), ("lqr", &lqr)];
    for row in compare(&env, &ctrls, &[0, 1], None)?.rows {
        println!("{:<7} reward {:.2}  mean error {:.4}  failed {}", row.controller, row.reward_mean, row.error_mean, row.failed_runs);
    }

    let big = env.resized(4, Sharing::Single)?;
    let ported = port_certificate(&out.bundle, &env, &big)?;
    let m = metrics(&rollout(&big, &ported, &big.scenario(0), None, None)?)?;
    println!("4x4 formation: tail error per drone {:.4}, aborted {}", m.tail_error / big.n() as f64, m.aborted);
    Ok(())
}
