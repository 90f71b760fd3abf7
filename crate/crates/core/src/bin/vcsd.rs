use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use vcsd::detector::{run_stream, DetectorConfig};
use vcsd::experiment::{simulate, trial_samples, ExperimentConfig};
use vcsd::io;
use vcsd::scenario::make_scenario;
use vcsd::theory::{sample_bound_target_absent, sample_bound_target_present, BoundInputs};
use vcsd::{Hypothesis, Result};

/// Volume-correlation subspace detector.
#[derive(Parser)]
#[command(name = "vcsd", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte Carlo experiment and write trajectory CSV plus summary JSON.
    Simulate(SimulateArgs),
    /// Run the detector on a sample file.
    Detect(DetectArgs),
    /// Sample-size bound for one hypothesis.
    Bound(BoundArgs),
    /// Write one trial's samples and the target basis as CSV.
    Generate(GenerateArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Config file, or a bundled preset name (fig1_full, fig1_desk).
    #[arg(long)]
    config: String,
    /// Override the master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Trajectory CSV path; the summary is written next to it.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    parallelism: Option<usize>,
}

#[derive(Args)]
struct DetectArgs {
    /// Samples, one vector per row, no header.
    #[arg(long)]
    samples: PathBuf,
    /// Orthonormal n x d2 target basis, one ambient coordinate per row.
    #[arg(long)]
    target_basis: PathBuf,
    /// Noise variance; without it the gap-ratio rank rule is used.
    #[arg(long)]
    sigma2: Option<f64>,
    /// Write the trajectory CSV here.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Sample budget; defaults to every row of the file.
    #[arg(long)]
    max_samples: Option<usize>,
    #[arg(long, default_value_t = 2.0)]
    gamma: f64,
    #[arg(long, default_value_t = 1e6)]
    t_div: f64,
    #[arg(long, default_value_t = 1e-3)]
    stall_eps: f64,
    #[arg(long, default_value_t = 5)]
    patience: usize,
}

#[derive(Args)]
struct BoundArgs {
    #[arg(long)]
    hypothesis: Hypothesis,
    /// Comma-separated eigenvalues, descending.
    #[arg(long, value_delimiter = ',', num_args = 1.., required = true)]
    eigs: Vec<f64>,
    #[arg(long)]
    sigma2: f64,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    delta: f64,
    #[arg(long)]
    eps: f64,
    /// Target dimension d2, for the target-present deviation bound.
    #[arg(long)]
    target_dim: Option<usize>,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    config: String,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 0)]
    trial: u64,
    #[arg(long, default_value = "present")]
    hypothesis: Hypothesis,
    /// Number of samples; defaults to the config's max_samples.
    #[arg(long)]
    count: Option<usize>,
    #[arg(long)]
    samples: PathBuf,
    #[arg(long)]
    target_basis: PathBuf,
}

#[derive(Serialize)]
struct DetectReport {
    decision: &'static str,
    decided_at: Option<usize>,
    samples_used: usize,
    final_inv_t: Option<f64>,
    final_rank: Option<usize>,
}

fn load_experiment(spec: &str, seed: Option<u64>) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(spec)?;
    if let Some(seed) = seed {
        cfg.scenario.seed = seed;
    }
    Ok(cfg)
}

fn cmd_simulate(a: SimulateArgs) -> Result<()> {
    let mut cfg = load_experiment(&a.config, a.seed)?;
    if let Some(trials) = a.trials {
        cfg.trials = trials;
    }
    if a.parallelism.is_some() {
        cfg.parallelism = a.parallelism;
    }
    let out = a.out.or_else(|| cfg.output.clone()).unwrap_or_else(|| {
        let stem = if cfg.name.is_empty() { "trajectories" } else { &cfg.name };
        PathBuf::from(format!("{stem}.csv"))
    });
    let result = simulate(&cfg)?;
    let summary_path = result.write_files(&out)?;
    let s = result.summary();
    println!(
        "wrote {} and {}\npresent: {} TargetPresent, {} TargetAbsent, {} Undecided, median final 1/T {:.6e}\nabsent:  {} TargetPresent, {} TargetAbsent, {} Undecided, median final 1/T {:.6e}",
        out.display(),
        summary_path.display(),
        s.present.decisions.target_present,
        s.present.decisions.target_absent,
        s.present.decisions.undecided,
        s.present.final_inv_t_median,
        s.absent.decisions.target_present,
        s.absent.decisions.target_absent,
        s.absent.decisions.undecided,
        s.absent.final_inv_t_median,
    );
    Ok(())
}

fn cmd_detect(a: DetectArgs) -> Result<()> {
    let basis = io::read_basis(&a.target_basis)?;
    let samples = io::read_samples(&a.samples)?;
    let mut cfg = DetectorConfig::new(basis).with_max_samples(a.max_samples.unwrap_or(samples.len().max(1)));
    cfg.noise_variance_hint = a.sigma2;
    cfg.rank_gap_factor = a.gamma;
    cfg.divergence_threshold = a.t_div;
    cfg.stall_epsilon = a.stall_eps;
    cfg.stall_patience = a.patience;
    let outcome = run_stream(&cfg, &samples)?;
    if let Some(path) = &a.trace {
        io::write_trajectory_file(path, &outcome.trajectory, outcome.decision)?;
    }
    let last = outcome.trajectory.last();
    let report = DetectReport {
        decision: outcome.decision.kind.as_str(),
        decided_at: outcome.decision.decided_at,
        samples_used: outcome.trajectory.len(),
        final_inv_t: last.map(|p| p.inv_t),
        final_rank: last.map(|p| p.rank),
    };
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn cmd_bound(a: BoundArgs) -> Result<()> {
    let mut inputs = BoundInputs::new(a.eigs, a.sigma2, a.n, a.delta, a.eps)?;
    if let Some(d2) = a.target_dim {
        inputs = inputs.with_target_dim(d2);
        inputs.validate()?;
    }
    let report = match a.hypothesis {
        Hypothesis::Present => sample_bound_target_present(&inputs)?,
        Hypothesis::Absent => sample_bound_target_absent(&inputs)?,
    };
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn cmd_generate(a: GenerateArgs) -> Result<()> {
    let cfg = load_experiment(&a.config, a.seed)?;
    let sc = make_scenario(&cfg.scenario)?;
    let m = a.count.unwrap_or_else(|| cfg.max_samples());
    let samples = trial_samples(&sc, a.trial, a.hypothesis, m);
    io::write_samples(&a.samples, &samples)?;
    io::write_matrix(&a.target_basis, sc.target_basis.matrix())?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Detect(a) => cmd_detect(a),
        Command::Bound(a) => cmd_bound(a),
        Command::Generate(a) => cmd_generate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
