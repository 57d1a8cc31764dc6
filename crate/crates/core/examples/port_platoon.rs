//! Reuse a five-truck certificate on a hundred-truck platoon and roll it out.
//!
//! cargo run --release --example port_platoon -- platoon5.json 100

use std::path::Path;

use isscert::certificates::port_certificate;
use isscert::cli::Checkpoint;
use isscert::environments::Sharing;
use isscert::evaluation::{metrics, rollout};

fn main() -> isscert::Result<()> {
    let mut args = std::env::args().skip(1);
    let path = args.next().unwrap_or_else(|| "platoon5.json".into());
    let n: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(100);
    let ck = Checkpoint::load(Path::new(&path))?;
    let small = ck.environment()?;
    let large = small.resized(n, Sharing::PerRole)?;
    let ported = port_certificate(&ck.bundle, &small, &large)?;
    println!("{} trucks, {} parameter groups", large.n(), ported.groups.len());

    for seed in 0..4 {
        let a = metrics(&rollout(&small, &ck.bundle, &small.scenario(seed), None, None)?)?;
        let trace = rollout(&large, &ported, &large.scenario(seed), None, None)?;
        let b = metrics(&trace)?;
        let gaps_ok = trace.states.iter().all(|s| s.nodes.iter().all(|x| x[0] > 0.0 && x[0] < 4.0 && x[1] > 0.0 && x[1] < 4.0));
        println!(
            "seed {seed}: per-truck tail error {:.4} (n={}) vs {:.4} (n={n})  aborted {}  gaps in (0,4) {gaps_ok}",
            a.tail_error / small.n() as f64,
            small.n(),
            b.tail_error / n as f64,
            b.aborted
        );
    }
    Ok(())
}
