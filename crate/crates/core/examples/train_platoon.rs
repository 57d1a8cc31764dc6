//! Desk-scale training on a five-truck platoon.
//!
//! cargo run --release --example train_platoon -- [out.json] [joint_iters]

use std::path::PathBuf;
use std::time::Instant;

use isscert::cli::Checkpoint;
use isscert::environments::{EnvConfig, EnvKind};
use isscert::training::{write_history_csv, Phase, TrainConfig, Trainer};

fn main() -> isscert::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "platoon5.json".into()));
    let mut cfg = TrainConfig::desk(EnvKind::Platoon);
    if let Some(j) = args.next() {
        cfg.joint_iters = j.parse().map_err(|_| isscert::Error::Config(format!("bad iteration count {j:?}")))?;
    }
    let env = EnvConfig::platoon(5).build()?;

    let start = Instant::now();
    let mut trainer = Trainer::new(&env, cfg.clone())?;
    let schedule = [
        (Phase::Controller, cfg.pretrain_ctrl_iters),
        (Phase::Lyapunov, cfg.pretrain_lyap_iters),
        (Phase::Joint, cfg.joint_iters),
    ];
    for (phase, iters) in schedule {
        for k in 0..iters {
            let b = trainer.step(phase)?;
            if k % 500 == 0 || k + 1 == iters {
                println!(
                    "{phase:?} {k:>5}: goal {:.4} A {:.4} B {:.4} ctrl {:.4} total {:.3}",
                    b.goal, b.loss_a, b.loss_b, b.ctrl, b.total
                );
            }
        }
    }
    println!("trained in {:.1}s", start.elapsed().as_secs_f64());

    let ck = Checkpoint::new(&env, trainer.export(), cfg, trainer.history());
    ck.save(&out)?;
    let hist = out.with_extension("history.csv");
    write_history_csv(std::fs::File::create(&hist)?, trainer.history())?;
    println!("wrote {} and {}", out.display(), hist.display());
    Ok(())
}
