//! Command-line front end: config and checkpoint files, and the
//! `train`, `verify`, `port`, `eval` and `compare` subcommands.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::certificates::{port_certificate, CertificateBundle};
use crate::environments::{EnvConfig, EnvKind, EnvironmentModel, Sharing};
use crate::error::{Error, Result};
use crate::evaluation::{compare, metrics, rollout, write_comparison_csv, write_trace_csv, BaselineSpec, Controller, NominalController};
use crate::training::{write_history_csv, HistoryRow, TrainConfig, Trainer};
use crate::verification::{check_certificate, check_robust_vertices, CheckOptions};

pub const FORMAT_VERSION: u32 = 1;

/// A `--config` file: an environment plus optional training overrides.
/// Keys in `train` replace the per-kind defaults one by one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub env: EnvConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train: Option<serde_json::Value>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let mut base = serde_json::to_value(TrainConfig::for_kind(self.env.kind))?;
        match &self.train {
            None => {}
            Some(serde_json::Value::Object(over)) => {
                let obj = base.as_object_mut().expect("struct serializes to an object");
                for (k, v) in over {
                    obj.insert(k.clone(), v.clone());
                }
            }
            Some(_) => return Err(Error::Config("`train` must be a JSON object".into())),
        }
        let cfg: TrainConfig = serde_json::from_value(base)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistorySummary {
    pub iterations: usize,
    pub first: Option<HistoryRow>,
    pub last: Option<HistoryRow>,
}

impl HistorySummary {
    pub fn of(history: &[HistoryRow]) -> Self {
        Self {
            iterations: history.len(),
            first: history.first().cloned(),
            last: history.last().cloned(),
        }
    }
}

/// Everything needed to rebuild a trained network: the resolved environment,
/// the exported (already normalized) bundle, and how it was trained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub env: EnvConfig,
    pub bundle: CertificateBundle,
    pub train_config: TrainConfig,
    pub history: HistorySummary,
    pub seed: u64,
}

impl Checkpoint {
    pub fn new(env: &EnvironmentModel, bundle: CertificateBundle, train_config: TrainConfig, history: &[HistoryRow]) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            env: env.to_config(),
            seed: train_config.seed,
            bundle,
            train_config,
            history: HistorySummary::of(history),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Header {
            format_version: u32,
        }
        let h: Header = serde_json::from_str(text)?;
        if h.format_version != FORMAT_VERSION {
            return Err(Error::Version {
                found: h.format_version,
                expected: FORMAT_VERSION,
            });
        }
        let ck: Self = serde_json::from_str(text)?;
        let env = ck.env.build()?;
        ck.bundle.check_env(&env)?;
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = self.to_json()?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn environment(&self) -> Result<EnvironmentModel> {
        self.env.build()
    }
}

#[derive(Debug, Parser)]
#[command(name = "isscert", version, about = "Train, verify and port compositional ISS certificates")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train controllers and certificates; writes a checkpoint and a history CSV.
    Train(TrainArgs),
    /// Sample the certificate conditions; writes a JSON report.
    Verify(VerifyArgs),
    /// Build a checkpoint for a larger network from a trained one.
    Port(PortArgs),
    /// Roll out one controller; writes a trace CSV and prints metrics.
    Eval(EvalArgs),
    /// Roll out the trained controller and baselines over several seeds.
    Compare(CompareArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = "checkpoint.json")]
    pub out: PathBuf,
    /// Defaults to `<out>.history.csv`.
    #[arg(long)]
    pub history: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 100_000)]
    pub samples: usize,
    #[arg(long, default_value_t = 10_000)]
    pub goal_samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.0)]
    pub margin_a: f64,
    #[arg(long, default_value_t = 0.0)]
    pub margin_b: f64,
    /// Also check this many interior mixtures of the uncertainty vertices.
    #[arg(long, default_value_t = 0)]
    pub interior: usize,
    /// Report path; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PortArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Trucks for platoons, side length of the square formation for drones.
    #[arg(long)]
    pub target_n: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Evaluate a baseline (lqr, droop, nominal) instead of the trained policy.
    #[arg(long)]
    pub baseline: Option<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long, default_value = "trace.csv")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Comma-separated baselines to compare against.
    #[arg(long, default_value = "nominal")]
    pub baseline: String,
    /// Seeds `0..seeds`, or the single seed given by `--seed`.
    #[arg(long, default_value_t = 4)]
    pub seeds: u64,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long, default_value = "comparison.csv")]
    pub out: PathBuf,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

/// Loads a checkpoint and, when a config is also given, requires that it
/// describes the same kind of environment.
fn load_checked(checkpoint: &Path, config: Option<&Path>) -> Result<(Checkpoint, EnvironmentModel)> {
    let ck = Checkpoint::load(checkpoint)?;
    if let Some(path) = config {
        let rc = RunConfig::load(path)?;
        if rc.env.kind != ck.env.kind {
            return Err(Error::KindMismatch(format!(
                "config is {}, checkpoint is {}",
                rc.env.kind.name(),
                ck.env.kind.name()
            )));
        }
        rc.train_config()?;
    }
    let env = ck.environment()?;
    Ok((ck, env))
}

fn history_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".history.csv");
    PathBuf::from(s)
}

fn run_train(a: &TrainArgs, log: &mut dyn Write) -> Result<()> {
    let rc = RunConfig::load(&a.config)?;
    let mut cfg = rc.train_config()?;
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    let env = rc.env.build()?;
    let mut trainer = Trainer::new(&env, cfg.clone())?;
    trainer.pretrain_controller()?;
    trainer.pretrain_lyapunov()?;
    let out = a.out.clone();
    let done = cfg.pretrain_ctrl_iters + cfg.pretrain_lyap_iters;
    let mut last = None;
    trainer.train_joint(|it, bundle| {
        let mut ck = Checkpoint::new(&env, bundle.clone(), cfg.clone(), &[]);
        ck.history.iterations = done + it;
        ck.save(&out)?;
        last = Some(ck.bundle);
        Ok(())
    })?;
    let history = trainer.history().to_vec();
    let bundle = last.expect("train_joint reports the final bundle");
    let ck = Checkpoint::new(&env, bundle, cfg, &history);
    ck.save(&out)?;
    let hist = a.history.clone().unwrap_or_else(|| history_path(&out));
    write_history_csv(create(&hist)?, &history)?;
    if let Some(last) = history.last() {
        writeln!(log, "trained {} iterations, final total loss {:.6}", history.len(), last.total)?;
    }
    writeln!(log, "checkpoint {}  history {}", out.display(), hist.display())?;
    Ok(())
}

fn run_verify(a: &VerifyArgs, log: &mut dyn Write) -> Result<()> {
    let (ck, env) = load_checked(&a.checkpoint, a.config.as_deref())?;
    let opts = CheckOptions {
        n_samples: a.samples,
        n_goal_samples: a.goal_samples,
        margin_a: a.margin_a,
        margin_b: a.margin_b,
        seed: a.seed,
        ..CheckOptions::default()
    };
    let json = if a.interior > 0 {
        serde_json::to_string_pretty(&check_robust_vertices(&ck.bundle, &env, &opts, a.interior)?)?
    } else {
        let report = check_certificate(&ck.bundle, &env, &opts)?;
        write!(log, "{}", report.summary())?;
        serde_json::to_string_pretty(&report)?
    };
    match &a.out {
        Some(path) => std::fs::write(path, json + "\n")?,
        None => writeln!(log, "{json}")?,
    }
    Ok(())
}

fn run_port(a: &PortArgs, log: &mut dyn Write) -> Result<()> {
    let (ck, env) = load_checked(&a.checkpoint, a.config.as_deref())?;
    let sharing = match env.kind {
        EnvKind::Platoon => Sharing::PerRole,
        _ => Sharing::Single,
    };
    let target = env.resized(a.target_n, sharing)?;
    let bundle = port_certificate(&ck.bundle, &env, &target)?;
    let groups = bundle.groups.len();
    let out = Checkpoint {
        env: target.to_config(),
        bundle,
        ..ck
    };
    out.save(&a.out)?;
    writeln!(log, "ported to {} nodes with {groups} parameter groups: {}", target.n(), a.out.display())?;
    Ok(())
}

fn run_eval(a: &EvalArgs, log: &mut dyn Write) -> Result<()> {
    let (ck, env) = match (&a.checkpoint, &a.config) {
        (Some(c), cfg) => {
            let (ck, env) = load_checked(c, cfg.as_deref())?;
            (Some(ck), env)
        }
        (None, Some(cfg)) => {
            let rc = RunConfig::load(cfg)?;
            rc.train_config()?;
            (None, rc.env.build()?)
        }
        (None, None) => return Err(Error::Config("eval needs --checkpoint or --config".into())),
    };
    let baseline = a.baseline.as_deref().map(BaselineSpec::parse).transpose()?;
    let nominal;
    let ctrl: &dyn Controller = match (&baseline, &ck) {
        (Some(spec), _) => {
            nominal = NominalController::build(&env, spec)?;
            &nominal
        }
        (None, Some(ck)) => &ck.bundle,
        (None, None) => return Err(Error::Config("eval without --checkpoint needs --baseline".into())),
    };
    let trace = rollout(&env, ctrl, &env.scenario(a.seed), None, a.steps)?;
    write_trace_csv(create(&a.out)?, &trace)?;
    let m = metrics(&trace)?;
    let summary = serde_json::json!({
        "cumulative_reward": m.cumulative_reward,
        "final_error": m.final_error,
        "mean_error": m.mean_error,
        "tail_error": m.tail_error,
        "aborted": m.aborted,
    });
    writeln!(log, "{}", serde_json::to_string_pretty(&summary)?)?;
    Ok(())
}

fn run_compare(a: &CompareArgs, log: &mut dyn Write) -> Result<()> {
    let (ck, env) = load_checked(&a.checkpoint, a.config.as_deref())?;
    let mut baselines = Vec::new();
    for name in a.baseline.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        baselines.push((name.to_string(), NominalController::build(&env, &BaselineSpec::parse(name)?)?));
    }
    let mut ctrls: Vec<(&str, &dyn Controller)> = vec![("neural", &ck.bundle)];
    for (name, c) in &baselines {
        ctrls.push((name.as_str(), c));
    }
    let seeds: Vec<u64> = match a.seed {
        Some(s) => vec![s],
        None => (0..a.seeds).collect(),
    };
    let cmp = compare(&env, &ctrls, &seeds, a.steps)?;
    write_comparison_csv(create(&a.out)?, &cmp)?;
    for row in &cmp.rows {
        writeln!(
            log,
            "{:<10} reward {:.3} ± {:.3}  mean error {:.4} ± {:.4}  failed {}",
            row.controller, row.reward_mean, row.reward_std, row.error_mean, row.error_std, row.failed_runs
        )?;
    }
    Ok(())
}

pub fn run(cli: &Cli, log: &mut dyn Write) -> Result<()> {
    match &cli.command {
        Command::Train(a) => run_train(a, log),
        Command::Verify(a) => run_verify(a, log),
        Command::Port(a) => run_port(a, log),
        Command::Eval(a) => run_eval(a, log),
        Command::Compare(a) => run_compare(a, log),
    }
}

fn error_line(kind: &str, msg: &str) -> String {
    format!("error: kind={kind} message={:?}", msg.trim())
}

/// Parses `argv` (program name first), runs the subcommand and returns the
/// process exit status. Failures print one `error: kind=<code> ...` line to
/// stderr.
pub fn run_command<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let first = e.to_string().lines().next().unwrap_or_default().trim_start_matches("error: ").to_string();
            eprintln!("{}", error_line("usage", &first));
            return 2;
        }
    };
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    match run(&cli, &mut lock) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", error_line(e.code(), &e.to_string()));
            1
        }
    }
}
