use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use stepmix::harness::{emit_summary_json, summarize_records, ConfigFile};
use stepmix::record::{emit_csv, load_csv};
use stepmix::textfmt::{load_mdp, save_mdp, save_policy};
use stepmix::{
    boltzmann_baseline, expected_return, generate_random_mdp, offline_to_online, required_offline_samples,
    run_experiment, AgentConfig, Algorithm, EpisodeRecord, OfflineConfig, Summary, TabularMdp,
};

/// Offline dataset size used when `--n` is omitted and the sufficient size is larger.
const DEFAULT_OFFLINE_CAP: u64 = 100_000;

#[derive(Parser)]
#[command(
    name = "stepmix",
    version,
    about = "Conservative exploration experiments on tabular episodic MDPs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a random environment and write it as a pinned environment file.
    GenEnv(GenEnvArgs),
    /// Run a multi-trial experiment.
    Run(RunArgs),
    /// Extract a baseline from logged data with VI-LCB, then learn online from it.
    Offline(OfflineArgs),
    /// Aggregate record CSVs into a summary.
    Report(ReportArgs),
}

#[derive(Args)]
struct GenEnvArgs {
    #[arg(long = "S", value_name = "S")]
    states: usize,
    #[arg(long = "A", value_name = "A")]
    actions: usize,
    #[arg(long = "H", value_name = "H")]
    horizon: usize,
    #[arg(long)]
    seed: u64,
    /// Output path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
#[command(allow_negative_numbers = true)]
struct RunArgs {
    /// TOML configuration file; flags below override its keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Pinned environment file.
    #[arg(long)]
    env: Option<PathBuf>,
    #[arg(long = "S", value_name = "S")]
    states: Option<usize>,
    #[arg(long = "A", value_name = "A")]
    actions: Option<usize>,
    #[arg(long = "H", value_name = "H")]
    horizon: Option<usize>,
    #[arg(long)]
    env_seed: Option<u64>,
    /// `boltzmann` or `offline`.
    #[arg(long)]
    baseline: Option<String>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    behavior_eta: Option<f64>,
    #[arg(long)]
    offline_n: Option<usize>,
    #[arg(long)]
    offline_c: Option<f64>,
    /// Comma-separated subset of stepmix, epsmix, optimistic.
    #[arg(long, value_delimiter = ',')]
    algorithms: Option<Vec<String>>,
    #[arg(long, conflicts_with = "gamma_frac")]
    gamma: Option<f64>,
    /// Threshold as a fraction below the baseline value: `γ = (1 − α)·V^b`.
    #[arg(long)]
    gamma_frac: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long, short = 'K')]
    episodes: Option<usize>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    root_seed: Option<u64>,
    #[arg(long)]
    bonus_scale: Option<f64>,
    #[arg(long)]
    resample_env: Option<bool>,
    /// Per-episode records.
    #[arg(long)]
    out: PathBuf,
    /// Summary JSON.
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Args)]
#[command(allow_negative_numbers = true)]
struct OfflineArgs {
    /// Pinned environment file; otherwise a random one is drawn.
    #[arg(long, conflicts_with_all = ["states", "actions", "horizon", "env_seed"])]
    env: Option<PathBuf>,
    #[arg(long = "S", value_name = "S", default_value_t = 5)]
    states: usize,
    #[arg(long = "A", value_name = "A", default_value_t = 5)]
    actions: usize,
    #[arg(long = "H", value_name = "H", default_value_t = 3)]
    horizon: usize,
    #[arg(long, default_value_t = 0)]
    env_seed: u64,
    /// Boltzmann temperature of the behaviour policy.
    #[arg(long, default_value_t = 5.0)]
    behavior_eta: f64,
    /// Dataset size; defaults to the sufficient size, capped at 100000.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, default_value_t = 1.0)]
    c: f64,
    #[arg(long, conflicts_with = "gamma_frac")]
    gamma: Option<f64>,
    /// Threshold as a fraction below the behaviour value.
    #[arg(long, default_value_t = 0.2)]
    gamma_frac: f64,
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
    #[arg(long, default_value = "stepmix")]
    algorithm: String,
    #[arg(long, short = 'K', default_value_t = 2000)]
    episodes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1.0)]
    bonus_scale: f64,
    #[arg(long)]
    out: PathBuf,
    /// Where to write the extracted policy.
    #[arg(long)]
    policy_out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Record CSVs; trials of later files are renumbered after earlier ones.
    #[arg(required = true)]
    csv: Vec<PathBuf>,
    #[arg(long)]
    summary: PathBuf,
}

/// A failure caused by the invocation rather than by the computation.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: String) -> anyhow::Error {
    UsageError(msg).into()
}

fn require_file(path: &Path, what: &str) -> Result<()> {
    if !path.is_file() {
        return Err(usage(format!("{what} {} does not exist", path.display())));
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let config = err.chain().any(|cause| {
        cause.is::<UsageError>()
            || cause
                .downcast_ref::<stepmix::Error>()
                .is_some_and(stepmix::Error::is_config)
    });
    if config {
        1
    } else {
        2
    }
}

fn gen_env(args: GenEnvArgs) -> Result<()> {
    let mdp = generate_random_mdp(args.states, args.actions, args.horizon, args.seed)?;
    match args.out {
        Some(path) => save_mdp(&path, &mdp)?,
        None => print!("{}", stepmix::textfmt::write_mdp(&mdp)),
    }
    Ok(())
}

fn print_summary(summary: &Summary) {
    for (name, s) in &summary.algorithms {
        println!(
            "{name:<10} trials={} K={} violations={} final_window_value={:.4} mean_regret={:.3}",
            s.trials, s.episodes, s.total_violations, s.final_window_mean_value, s.mean_final_regret
        );
    }
}

fn run(args: RunArgs) -> Result<()> {
    let file = match &args.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    if let Some(env) = &args.env {
        require_file(env, "environment file")?;
    }
    let overrides = ConfigFile {
        states: args.states,
        actions: args.actions,
        horizon: args.horizon,
        env_seed: args.env_seed,
        env_file: args.env.clone(),
        baseline: args.baseline,
        eta: args.eta,
        behavior_eta: args.behavior_eta,
        offline_n: args.offline_n,
        offline_c: args.offline_c,
        algorithms: args.algorithms,
        gamma: args.gamma,
        gamma_frac: args.gamma_frac,
        delta: args.delta,
        episodes: args.episodes,
        trials: args.trials,
        root_seed: args.root_seed,
        bonus_scale: args.bonus_scale,
        resample_env: args.resample_env,
    };
    let mut merged = file.merge(overrides);
    if args.env.is_some() {
        // A pinned environment replaces any generator keys from the file.
        merged.states = None;
        merged.actions = None;
        merged.horizon = None;
        merged.env_seed = None;
    }
    let cfg = merged.resolve()?;
    let result = run_experiment(&cfg)?;
    for t in &result.trials {
        if let Some(w) = &t.baseline_warning {
            eprintln!("warning: trial {}: {w}", t.trial);
        }
    }
    emit_csv(&args.out, &result.records())?;
    if let Some(path) = &args.summary {
        emit_summary_json(path, &result.summary)?;
    }
    print_summary(&result.summary);
    Ok(())
}

fn offline(args: OfflineArgs) -> Result<()> {
    let algorithm: Algorithm = args.algorithm.parse()?;
    let offline_cfg = OfflineConfig::new(args.delta, args.c)?;
    let mdp: TabularMdp = match &args.env {
        Some(path) => {
            require_file(path, "environment file")?;
            load_mdp(path)?
        }
        None => generate_random_mdp(args.states, args.actions, args.horizon, args.env_seed)?,
    };
    let shape = mdp.shape();
    let behavior = boltzmann_baseline(&mdp, args.behavior_eta)?;
    let v_mu = expected_return(&mdp, &behavior)?;
    let gamma = args.gamma.unwrap_or((1.0 - args.gamma_frac) * v_mu);
    let n = match args.n {
        Some(n) => n,
        None => {
            let required =
                required_offline_samples(shape.states, shape.actions, shape.horizon, v_mu, gamma, &offline_cfg)?;
            println!("sufficient dataset size: {required}");
            required.min(DEFAULT_OFFLINE_CAP) as usize
        }
    };
    let online = AgentConfig::new(gamma, args.delta, args.bonus_scale, behavior.clone())?;
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let out = offline_to_online(
        &mdp,
        &behavior,
        n,
        &offline_cfg,
        &online,
        algorithm,
        args.episodes,
        &mut rng,
    )?;
    let records: Vec<EpisodeRecord> = out.run.records().cloned().collect();
    emit_csv(&args.out, &records)?;
    if let Some(path) = &args.policy_out {
        save_policy(path, &out.extracted)?;
    }
    println!("behaviour value: {v_mu:.6}");
    println!("gamma: {gamma:.6}");
    println!("dataset size: {n}");
    println!("extracted baseline value: {:.6}", out.run.baseline_value);
    println!("gap bound: {:.6}", offline_cfg.gap_bound(shape, n));
    println!(
        "{algorithm}: violations={} regret={:.3}",
        out.run.violations(),
        out.run.regret()
    );
    if let Some(w) = &out.run.baseline_warning {
        eprintln!("warning: {w}");
    }
    Ok(())
}

fn report(args: ReportArgs) -> Result<()> {
    let mut records = Vec::new();
    let mut offset = 0;
    for path in &args.csv {
        require_file(path, "record file")?;
        let mut batch = load_csv(path).with_context(|| format!("reading {}", path.display()))?;
        let next = batch.iter().map(|r| r.trial + 1).max().unwrap_or(0);
        for r in &mut batch {
            r.trial += offset;
        }
        offset += next;
        records.extend(batch);
    }
    if records.is_empty() {
        bail!(usage("no records found in the given files".into()));
    }
    let summary = summarize_records(&records, Vec::new())?;
    emit_summary_json(&args.summary, &summary)?;
    print_summary(&summary);
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let outcome = match cli.command {
        Command::GenEnv(a) => gen_env(a),
        Command::Run(a) => run(a),
        Command::Offline(a) => offline(a),
        Command::Report(a) => report(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
