//! Operator entry point: seeded simulations, delay attacks, trace
//! verification, and probability probes.
//!
//! Exit codes: 0 success, 2 invariant/consistency violation (or rejected
//! configuration), 3 liveness horizon exhausted. Other failures (I/O,
//! malformed input) exit 1.

mod campaign;
mod check;
mod output;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use hashgraph::attack::probability;
use hashgraph::event::PartyId;
use hashgraph::sim::{default_tx_schedule, SimConfig, TxInjection};
use serde::Deserialize;
use std::collections::BTreeSet;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "hashsim",
    version,
    about = "Hashgraph consensus simulator and delay-attack driver"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run seeded simulations under a scheduler strategy and export traces,
    /// metrics, and graphs.
    Simulate(SimulateArgs),
    /// Run the fame-delay attack and export delay statistics.
    Attack(AttackArgs),
    /// Replay a trace through an independent verifier and diff it against
    /// the recorded rounds, fames, and commits.
    Check(CheckArgs),
    /// Print exact supermajority probabilities, expected coin rounds, and
    /// the tail bound for a range of party counts.
    Probe(ProbeArgs),
}

#[derive(Args, Clone)]
struct CommonRunArgs {
    /// Number of parties.
    #[arg(long)]
    n: Option<u32>,
    /// Base RNG seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Inclusive seed range `A..B` for a campaign (overrides --seed).
    #[arg(long)]
    seeds: Option<String>,
    /// Coin-round period (>= 2).
    #[arg(long)]
    coin_period: Option<u32>,
    /// Step budget per run.
    #[arg(long)]
    max_steps: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Also export per-party DOT graphs.
    #[arg(long)]
    dot: bool,
    /// Optional JSON config file; explicit flags win over its fields.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: CommonRunArgs,
    /// Number of corrupted (forking) parties; defaults to the tail parties.
    #[arg(long)]
    t: Option<u32>,
    /// Explicit corrupted party list, comma separated (overrides --t).
    #[arg(long, value_delimiter = ',')]
    corrupted: Option<Vec<u32>>,
    /// Scheduler strategy name.
    #[arg(long, default_value = "fair")]
    scheduler: String,
    /// Number of auto-injected transactions (ignored with --tx-file).
    #[arg(long, default_value_t = 10)]
    tx_count: u32,
    /// Steps between auto-injected transactions.
    #[arg(long, default_value_t = 5)]
    tx_spacing: u64,
    /// JSON file with an explicit injection schedule
    /// `[{"step":1,"party":0,"payload":"<hex>"}]`.
    #[arg(long)]
    tx_file: Option<PathBuf>,
}

#[derive(Args)]
struct AttackArgs {
    #[command(flatten)]
    common: CommonRunArgs,
    /// Party whose first witness the attack delays.
    #[arg(long, default_value_t = 0)]
    target_witness: u32,
    /// Constructed-round budget before giving up.
    #[arg(long, default_value_t = 400)]
    max_rounds: u32,
}

#[derive(Args)]
struct CheckArgs {
    /// Path to a trace.jsonl produced by `simulate` or `attack`.
    #[arg(long)]
    trace: PathBuf,
}

#[derive(Args)]
struct ProbeArgs {
    /// Inclusive party-count range `A..B`.
    #[arg(long, default_value = "7..60")]
    n_range: String,
    /// Optional output directory for probe.csv.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Optional config-file fields mirroring the simulation config.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    n: Option<u32>,
    seed: Option<u64>,
    coin_period: Option<u32>,
    max_steps: Option<u64>,
    corrupted: Option<Vec<u32>>,
    tx_schedule: Option<Vec<TxInjection>>,
}

fn parse_range(text: &str) -> anyhow::Result<(u64, u64)> {
    let (a, b) = text
        .split_once("..")
        .with_context(|| format!("expected A..B, got `{text}`"))?;
    let lo: u64 = a.trim().parse().context("range start")?;
    let hi: u64 = b.trim().parse().context("range end")?;
    anyhow::ensure!(lo <= hi, "empty range `{text}`");
    Ok((lo, hi))
}

struct ResolvedRun {
    cfg: SimConfig,
    seeds: Vec<u64>,
    out: PathBuf,
    dot: bool,
}

fn resolve_common(
    common: &CommonRunArgs,
    corrupted: BTreeSet<u32>,
    tx_schedule: Vec<TxInjection>,
) -> anyhow::Result<ResolvedRun> {
    let file: FileConfig = match &common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            serde_json::from_str(&text).context("parsing config file")?
        }
        None => FileConfig::default(),
    };
    let n = common.n.or(file.n).context("--n is required")?;
    let seed = common.seed.or(file.seed).unwrap_or(1);
    let coin_period = common.coin_period.or(file.coin_period).unwrap_or(10);
    let max_steps = common.max_steps.or(file.max_steps).unwrap_or(100_000);
    let corrupted = if corrupted.is_empty() {
        file.corrupted.unwrap_or_default().into_iter().collect()
    } else {
        corrupted
    };
    let tx_schedule = if tx_schedule.is_empty() {
        file.tx_schedule.unwrap_or_default()
    } else {
        tx_schedule
    };
    let seeds = match &common.seeds {
        Some(range) => {
            let (lo, hi) = parse_range(range)?;
            (lo..=hi).collect()
        }
        None => vec![seed],
    };
    Ok(ResolvedRun {
        cfg: SimConfig {
            n,
            corrupted,
            coin_period,
            seed,
            max_steps,
            tx_schedule,
        },
        seeds,
        out: common.out.clone(),
        dot: common.dot,
    })
}

fn cmd_simulate(args: SimulateArgs) -> anyhow::Result<u8> {
    let corrupted: BTreeSet<u32> = match (&args.corrupted, args.t) {
        (Some(list), _) => list.iter().copied().collect(),
        (None, Some(t)) => {
            let n = args.common.n.context("--n is required with --t")?;
            anyhow::ensure!(t < n, "--t must be below --n");
            (n - t..n).collect()
        }
        (None, None) => BTreeSet::new(),
    };
    let tx_schedule = match &args.tx_file {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading tx file {}", path.display()))?;
            serde_json::from_str(&text).context("parsing tx file")?
        }
        None => Vec::new(),
    };
    let mut run = resolve_common(&args.common, corrupted, tx_schedule)?;
    if run.cfg.tx_schedule.is_empty() {
        run.cfg.tx_schedule = default_tx_schedule(
            run.cfg.n,
            &run.cfg.corrupted,
            args.tx_count,
            args.tx_spacing,
        );
    }
    if let Err(e) = run.cfg.validate() {
        eprintln!("configuration rejected: {e}");
        return Ok(2);
    }
    campaign::simulate(&run.cfg, &run.seeds, &args.scheduler, &run.out, run.dot)
}

fn cmd_attack(args: AttackArgs) -> anyhow::Result<u8> {
    let run = resolve_common(&args.common, BTreeSet::new(), Vec::new())?;
    if let Err(e) = run.cfg.validate() {
        eprintln!("configuration rejected: {e}");
        return Ok(2);
    }
    if run.cfg.n < 7 {
        eprintln!(
            "configuration rejected: the delay attack requires n >= 7 (below that the quorum is n-1); got n = {}",
            run.cfg.n
        );
        return Ok(2);
    }
    campaign::attack(
        &run.cfg,
        &run.seeds,
        PartyId(args.target_witness),
        args.max_rounds,
        &run.out,
        run.dot,
    )
}

fn cmd_probe(args: ProbeArgs) -> anyhow::Result<u8> {
    let (lo, hi) = parse_range(&args.n_range)?;
    anyhow::ensure!(lo >= 1 && hi <= 60, "probe supports 1 <= n <= 60");
    let mut csv = String::from("n,exactNum,exactDen,exactProb,expectedCoinRounds,hoeffdingBound\n");
    println!("n  exactProb        expectedCoinRounds  hoeffdingBound");
    for n in lo..=hi {
        let p = probability::exact_supermajority_prob(n as u32);
        let er = probability::expected_coin_rounds(n as u32);
        let hb = probability::hoeffding_bound(n as u32);
        println!("{n:<3} {:<16} {er:<19.6} {hb:.6}", format!("{p}"));
        csv.push_str(&format!(
            "{n},{},{},{:.9},{er:.9},{hb:.9}\n",
            p.num,
            p.den,
            p.as_f64()
        ));
    }
    if let Some(out) = &args.out {
        std::fs::create_dir_all(out)?;
        output::write_atomic(&out.join("probe.csv"), csv.as_bytes())?;
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::Attack(args) => cmd_attack(args),
        Command::Check(args) => check::cmd_check(&args.trace),
        Command::Probe(args) => cmd_probe(args),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}
