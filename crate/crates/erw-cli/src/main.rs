//! `erw` — simulate excited random walks in identical cookie environments,
//! compute the exact branching-like transition law and its drift
//! parameters, classify recurrence/transience, and run the bundled
//! reproducible experiments.

mod experiments;
mod spec;
mod table;

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use erw_core::blp::{exact_transition, params_exact, sample_transition};
use erw_core::classify::{
    certify_extinction, certify_survival, classify, CertificateReport, Verdict,
    CERTIFICATE_DISCLAIMER,
};
use erw_core::env::CookieEnvironment;
use erw_core::rng::CoinSource;
use erw_core::walk::{run as walk_run, run_with_trace, WalkConfig};
use rayon::prelude::*;

use spec::{parse_grid, resolve_env, ExperimentConfig};
use table::{build_id, fmt_f64, Table};

#[derive(Parser)]
#[command(name = "erw", version, about = "excited random walks in cookie environments")]
struct Cli {
    /// Worker threads for parallel replications (0 = rayon default).
    /// Results are identical at any thread count.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct EnvArgs {
    /// Environment spec file (key = value lines; see README).
    #[arg(long, value_name = "FILE")]
    env: Option<PathBuf>,
    /// Inline environment, e.g. `finite:0.75,0.75` or `transient-example`.
    #[arg(long, value_name = "SPEC")]
    env_inline: Option<String>,
}

impl EnvArgs {
    fn resolve(&self) -> Result<CookieEnvironment> {
        resolve_env(self.env.as_deref(), self.env_inline.as_deref())
    }
}

#[derive(Subcommand)]
enum Command {
    /// Inspect an environment: strengths, prefix drifts, tail bounds.
    Env {
        #[command(flatten)]
        env: EnvArgs,
        /// Cookie indices to tabulate.
        #[arg(long, default_value = "pow2:0..20")]
        grid: String,
        /// Also print averaged statistics at this n.
        #[arg(long, default_value_t = 1000)]
        stats_n: u64,
        /// Tolerance for the total drift.
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
        /// Write the profile table to this CSV file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate walk trajectories and summarize them.
    Walk {
        #[command(flatten)]
        env: EnvArgs,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Replications (streams 0..reps).
        #[arg(long, default_value_t = 1)]
        reps: u64,
        /// Steps per trajectory.
        #[arg(long, default_value_t = 10_000)]
        horizon: u64,
        /// Stream whose full trajectory goes to --trace-out.
        #[arg(long, default_value_t = 0)]
        stream: u64,
        /// CSV trace (step,position) of the chosen stream.
        #[arg(long)]
        trace_out: Option<PathBuf>,
        /// CSV per-replication summaries
        /// (rep,returns,first_return,max,min,final).
        #[arg(long)]
        summary_out: Option<PathBuf>,
    },
    /// Exact or sampled one-step law of the branching-like process.
    Blp {
        #[command(flatten)]
        env: EnvArgs,
        /// Current generation size.
        #[arg(long)]
        n: u64,
        /// Truncation epsilon for the exact law.
        #[arg(long, default_value_t = 1e-12)]
        eps: f64,
        #[arg(long, value_enum, default_value_t = BlpMode::Exact)]
        mode: BlpMode,
        /// Samples for --mode mc.
        #[arg(long, default_value_t = 100_000)]
        reps: u64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// CSV output: m,mass (exact) or rep,z1 (mc).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Drift parameter table mu, rho, nu, theta over an n grid.
    Params {
        #[command(flatten)]
        env: EnvArgs,
        #[arg(long, default_value = "pow2:4..17")]
        n_grid: String,
        #[arg(long, default_value_t = 1e-12)]
        eps: f64,
        /// CSV output: n,mu,rho,nu,theta,eps_used.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recurrence/transience verdict, optionally with theta(n) certificates.
    /// Exits 0 on a determinate verdict, 2 on undetermined, 1 on error.
    Classify {
        #[command(flatten)]
        env: EnvArgs,
        /// Tolerance for the total drift.
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
        /// Certificate grid, e.g. `pow2:7..14` or `100,1000`.
        #[arg(long, value_name = "GRID")]
        certify: Option<String>,
        #[arg(long, default_value_t = 1e-12)]
        eps: f64,
        /// CSV output: n,theta,threshold,margin rows plus a verdict line.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a configured experiment; writes tables and a checksum manifest.
    Experiment {
        /// Experiment config file (key = value lines; see README).
        #[arg(long, value_name = "FILE")]
        config: PathBuf,
        /// Write artifacts here instead of the config's out-dir.
        #[arg(long, value_name = "DIR")]
        out_dir: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BlpMode {
    Exact,
    Mc,
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .context("configuring the rayon thread pool")?;
    }
    match cli.command {
        Command::Env { env, grid, stats_n, tol, out } => cmd_env(env, &grid, stats_n, tol, out),
        Command::Walk { env, seed, reps, horizon, stream, trace_out, summary_out } => {
            cmd_walk(env, seed, reps, horizon, stream, trace_out, summary_out)
        }
        Command::Blp { env, n, eps, mode, reps, seed, out } => {
            cmd_blp(env, n, eps, mode, reps, seed, out)
        }
        Command::Params { env, n_grid, eps, out } => cmd_params(env, &n_grid, eps, out),
        Command::Classify { env, tol, certify, eps, out } => {
            cmd_classify(env, tol, certify, eps, out)
        }
        Command::Experiment { config, out_dir } => cmd_experiment(&config, out_dir.as_deref()),
    }
}

fn write_or_print(table: &Table, out: Option<PathBuf>) -> Result<()> {
    match out {
        Some(path) => {
            table.write(&path)?;
            println!("wrote {}", path.display());
        }
        None => {
            use std::io::Write;
            // Tolerate a closed pipe (e.g. `erw ... | head`).
            let _ = std::io::stdout().write_all(&table.to_bytes());
        }
    }
    Ok(())
}

fn cmd_env(
    env_args: EnvArgs,
    grid: &str,
    stats_n: u64,
    tol: f64,
    out: Option<PathBuf>,
) -> Result<()> {
    let env = env_args.resolve()?;
    let indices = parse_grid(grid)?;
    let profile = env.drift_profile(&indices, tol)?;
    let mut table = Table::new(&["j", "strength", "delta_prefix", "tail_bound"]);
    table.comment(format!("build={}", build_id()));
    table.comment(format!("env={}", env.label()));
    table.comment(format!(
        "delta={} delta_error={}",
        fmt_f64(profile.total.value),
        fmt_f64(profile.total.error)
    ));
    for p in &profile.points {
        table.row(vec![
            p.n.to_string(),
            fmt_f64(p.strength),
            fmt_f64(p.delta_prefix),
            fmt_f64(p.tail_bound),
        ]);
    }
    let stats = env.stats(stats_n)?;
    println!(
        "env {}: delta = {} (±{}), mean strength over first {} cookies = {}, \
         variance avg = {}, gap to 1/4 = {}",
        env.label(),
        fmt_f64(profile.total.value),
        fmt_f64(profile.total.error),
        stats_n,
        fmt_f64(stats.mean_strength),
        fmt_f64(stats.variance_avg),
        fmt_f64(stats.bessel_gap),
    );
    write_or_print(&table, out)
}

#[allow(clippy::too_many_arguments)]
fn cmd_walk(
    env_args: EnvArgs,
    seed: u64,
    reps: u64,
    horizon: u64,
    stream: u64,
    trace_out: Option<PathBuf>,
    summary_out: Option<PathBuf>,
) -> Result<()> {
    let env = env_args.resolve()?;
    let config = WalkConfig::default();

    if let Some(path) = &trace_out {
        let (_, trace) = run_with_trace(&env, seed, stream, horizon, &config)?;
        let mut table = Table::new(&["step", "position"]);
        table.comment(format!("build={}", build_id()));
        table.comment(format!("env={} seed={seed} stream={stream}", env.label()));
        for (t, &x) in trace.iter().enumerate() {
            table.row(vec![t.to_string(), x.to_string()]);
        }
        table.write(path)?;
        println!("wrote {}", path.display());
    }

    let summaries: erw_core::Result<Vec<_>> = (0..reps)
        .into_par_iter()
        .map(|rep| walk_run(&env, seed, rep, horizon, &config))
        .collect();
    let summaries = summaries?;

    let returned = summaries.iter().filter(|s| s.first_return_time.is_some()).count();
    let mean_final =
        summaries.iter().map(|s| s.final_position as f64).sum::<f64>() / reps.max(1) as f64;
    println!(
        "env {}: reps={reps} horizon={horizon} returned={returned} mean_final={}",
        env.label(),
        fmt_f64(mean_final)
    );

    if let Some(path) = &summary_out {
        let mut table = Table::new(&["rep", "returns", "first_return", "max", "min", "final"]);
        table.comment(format!("build={}", build_id()));
        table.comment(format!("env={} seed={seed} horizon={horizon}", env.label()));
        for (rep, s) in summaries.iter().enumerate() {
            table.row(vec![
                rep.to_string(),
                s.returns_to_origin.to_string(),
                s.first_return_time.map(|t| t.to_string()).unwrap_or_default(),
                s.max_position.to_string(),
                s.min_position.to_string(),
                s.final_position.to_string(),
            ]);
        }
        table.write(path)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_blp(
    env_args: EnvArgs,
    n: u64,
    eps: f64,
    mode: BlpMode,
    reps: u64,
    seed: u64,
    out: Option<PathBuf>,
) -> Result<()> {
    let env = env_args.resolve()?;
    match mode {
        BlpMode::Exact => {
            let dist = exact_transition(&env, n, eps)?;
            let params = erw_core::blp::params_from_distribution(&dist)?;
            println!(
                "env {}: n={n} mean={} variance={} tail_mass={}",
                env.label(),
                fmt_f64(dist.mean()),
                fmt_f64(dist.variance()),
                fmt_f64(dist.tail_mass())
            );
            println!(
                "mu={} rho={} nu={} theta={}",
                fmt_f64(params.mu),
                fmt_f64(params.rho),
                fmt_f64(params.nu),
                fmt_f64(params.theta)
            );
            let mut table = Table::new(&["m", "mass"]);
            table.comment(format!("build={}", build_id()));
            table.comment(format!("env={} n={n} eps={}", env.label(), fmt_f64(eps)));
            table.comment(format!("tail_mass={}", fmt_f64(dist.tail_mass())));
            for (m, &mass) in dist.masses().iter().enumerate() {
                table.row(vec![m.to_string(), fmt_f64(mass)]);
            }
            write_or_print(&table, out)
        }
        BlpMode::Mc => {
            let samples: erw_core::Result<Vec<u64>> = (0..reps)
                .into_par_iter()
                .map(|rep| sample_transition(&env, n, &CoinSource::new(seed, rep), n as i64))
                .collect();
            let samples = samples?;
            let mean = samples.iter().map(|&z| z as f64).sum::<f64>() / reps.max(1) as f64;
            println!("env {}: n={n} reps={reps} sample mean={}", env.label(), fmt_f64(mean));
            let mut table = Table::new(&["rep", "z1"]);
            table.comment(format!("build={}", build_id()));
            table.comment(format!("env={} n={n} seed={seed}", env.label()));
            for (rep, &z) in samples.iter().enumerate() {
                table.row(vec![rep.to_string(), z.to_string()]);
            }
            write_or_print(&table, out)
        }
    }
}

fn cmd_params(env_args: EnvArgs, n_grid: &str, eps: f64, out: Option<PathBuf>) -> Result<()> {
    let env = env_args.resolve()?;
    let grid = parse_grid(n_grid)?;
    let rows: erw_core::Result<Vec<_>> =
        grid.par_iter().map(|&n| params_exact(&env, n, eps)).collect();
    let mut table = Table::new(&["n", "mu", "rho", "nu", "theta", "eps_used"]);
    table.comment(format!("build={}", build_id()));
    table.comment(format!("env={}", env.label()));
    for p in rows? {
        table.row(vec![
            p.n.to_string(),
            fmt_f64(p.mu),
            fmt_f64(p.rho),
            fmt_f64(p.nu),
            fmt_f64(p.theta),
            fmt_f64(p.truncation_eps),
        ]);
    }
    write_or_print(&table, out)
}

fn cmd_classify(
    env_args: EnvArgs,
    tol: f64,
    certify: Option<String>,
    eps: f64,
    out: Option<PathBuf>,
) -> Result<()> {
    let env = env_args.resolve()?;
    let mut result = classify(&env, tol)?;

    let certificate: Option<CertificateReport> = match &certify {
        Some(grid_spec) => {
            let grid = parse_grid(grid_spec)?;
            // Evidence for the side the drift points to: survival margins
            // for rightward drift, extinction margins otherwise.
            let report = if result.delta.value >= 0.0 {
                certify_survival(&env, &grid, eps)?
            } else {
                certify_extinction(&env, &grid, eps)?
            };
            result.evidence = report.rows.clone();
            Some(report)
        }
        None => None,
    };

    println!(
        "env {}: verdict={} delta={} (±{}) tail={}",
        env.label(),
        result.verdict,
        fmt_f64(result.delta.value),
        fmt_f64(result.delta.error),
        result.tail_condition
    );

    let mut table = Table::new(&["n", "theta", "threshold", "margin"]);
    table.comment(format!("build={}", build_id()));
    table.comment(format!("env={}", env.label()));
    if let Some(report) = &certificate {
        let kind = match report.kind {
            erw_core::classify::CertificateKind::Survival => "survival",
            erw_core::classify::CertificateKind::Extinction => "extinction",
        };
        table.comment(format!("certificate={kind}"));
        table.comment(CERTIFICATE_DISCLAIMER);
        table.comment(format!("all_margins_positive={}", report.all_margins_positive));
        for row in &report.rows {
            table.row(vec![
                row.n.to_string(),
                fmt_f64(row.theta),
                fmt_f64(row.threshold),
                fmt_f64(row.margin),
            ]);
        }
        if report.all_margins_positive {
            println!("certificate ({kind}): all margins positive over the grid");
        } else {
            println!("certificate ({kind}): margins not all positive");
        }
        println!("note: {CERTIFICATE_DISCLAIMER}");
    }
    table.comment(format!(
        "verdict={} delta={} delta_error={} tail={}",
        result.verdict,
        fmt_f64(result.delta.value),
        fmt_f64(result.delta.error),
        result.tail_condition
    ));
    write_or_print(&table, out)?;

    if result.verdict == Verdict::Undetermined {
        std::process::exit(2);
    }
    Ok(())
}

fn cmd_experiment(config_path: &std::path::Path, out_dir: Option<&std::path::Path>) -> Result<()> {
    let config = ExperimentConfig::from_file(config_path, out_dir)?;
    if config.n_grid.is_empty() {
        bail!("experiment n-grid is empty");
    }
    let artifacts = experiments::run(&config)?;
    println!(
        "experiment {} ({} artifacts) -> {}",
        config.experiment.name(),
        artifacts.len(),
        config.out_dir.display()
    );
    for a in &artifacts {
        println!("  {}  {} bytes  fnv1a64={}", a.name, a.bytes, a.checksum);
    }
    println!("manifest: {}", config.out_dir.join("manifest.csv").display());
    Ok(())
}
