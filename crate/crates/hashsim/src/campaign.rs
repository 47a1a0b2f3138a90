//! Seed campaigns: run one configuration across many seeds, fan runs out
//! over worker threads, and write seed-sorted outputs so results do not
//! depend on scheduling.

use crate::output::write_atomic;
use hashgraph::attack::{self, probability, DelayAttack, DelayStats};
use hashgraph::event::PartyId;
use hashgraph::sim::scheduler::SchedulerRegistry;
use hashgraph::sim::{dot, trace, PrefixCheck, SimConfig, Simulation};
use hashgraph::SimError;
use std::path::Path;

pub const SIM_METRICS_HEADER: &str = "seed,n,t,steps,committedTx,maxRound\n";
pub const ATTACK_METRICS_HEADER: &str =
    "seed,n,c,target,roundsElapsed,coinRoundsElapsed,decidedAt,supermajorityRound,coinYesCounts\n";

struct SimRunResult {
    seed: u64,
    steps: u64,
    committed_tx: usize,
    max_round: u32,
    all_committed: bool,
    stalled: bool,
    violation: Option<String>,
    trace: String,
    dots: Vec<(u32, String)>,
}

fn run_one_sim(
    cfg: &SimConfig,
    seed: u64,
    scheduler: &str,
    want_dot: bool,
) -> anyhow::Result<SimRunResult> {
    let mut cfg = cfg.clone();
    cfg.seed = seed;
    let registry = SchedulerRegistry::builtin();
    let mut sched = registry.create(scheduler, &cfg)?;
    let mut sim = Simulation::new(cfg)?;
    sim.label_scheduler(scheduler);
    let outcome = sim.run_to_completion(sched.as_mut());
    let stalled = matches!(outcome, Err(SimError::Stalled));
    if let Err(e) = &outcome {
        if !stalled {
            anyhow::bail!("run failed: {e}");
        }
    }
    let violation = match (sim.violation(), sim.check_prefix_consistency()) {
        (Some(v), _) => Some(format!(
            "commit divergence: party p{} vs p{} at position {} (step {})",
            v.party.0, v.established_by.0, v.position, v.step
        )),
        (None, PrefixCheck::Violation { i, j, index }) => {
            Some(format!("tx log divergence: {i} vs {j} at index {index}"))
        }
        (None, PrefixCheck::Ok) => None,
    };
    for p in sim.honest_parties() {
        let skipped = hashgraph::consensus::unusable_rounds(&p.graph);
        if !skipped.is_empty() {
            eprintln!(
                "seed {seed}: note: rounds {skipped:?} had no unique famous witnesses and ordered nothing"
            );
        }
    }
    let dots = if want_dot {
        sim.parties()
            .iter()
            .map(|p| (p.id.0, dot::to_dot(&p.graph)))
            .collect()
    } else {
        Vec::new()
    };
    Ok(SimRunResult {
        seed,
        steps: sim.step_count(),
        committed_tx: sim.min_committed_tx(),
        max_round: sim.max_round(),
        all_committed: sim.all_honest_tx_committed(),
        stalled,
        violation,
        trace: trace::to_jsonl(sim.trace()),
        dots,
    })
}

/// Fan a closure over seeds on worker threads; results come back seed-sorted.
fn fan_out<T: Send>(
    seeds: &[u64],
    run: impl Fn(u64) -> anyhow::Result<T> + Sync,
) -> anyhow::Result<Vec<T>> {
    let workers = std::thread::available_parallelism()
        .map(|p| p.get())
        .unwrap_or(1)
        .min(seeds.len().max(1));
    if workers <= 1 || seeds.len() <= 1 {
        return seeds.iter().map(|&s| run(s)).collect();
    }
    let next = std::sync::atomic::AtomicUsize::new(0);
    let mut slots: Vec<Option<anyhow::Result<T>>> = Vec::new();
    slots.resize_with(seeds.len(), || None);
    let slots = std::sync::Mutex::new(&mut slots);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                if i >= seeds.len() {
                    break;
                }
                let result = run(seeds[i]);
                slots.lock().unwrap()[i] = Some(result);
            });
        }
    });
    slots
        .into_inner()
        .unwrap()
        .iter_mut()
        .map(|slot| slot.take().expect("every seed ran"))
        .collect()
}

pub fn simulate(
    cfg: &SimConfig,
    seeds: &[u64],
    scheduler: &str,
    out: &Path,
    want_dot: bool,
) -> anyhow::Result<u8> {
    // Validate the scheduler name before spawning workers.
    SchedulerRegistry::builtin().create(scheduler, cfg)?;
    std::fs::create_dir_all(out)?;
    let single = seeds.len() == 1;
    let results = fan_out(seeds, |seed| {
        run_one_sim(cfg, seed, scheduler, want_dot && single)
    })?;
    let mut metrics = String::from(SIM_METRICS_HEADER);
    let mut exit = 0u8;
    for r in &results {
        metrics.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.seed,
            cfg.n,
            cfg.corrupted.len(),
            r.steps,
            r.committed_tx,
            r.max_round
        ));
        if let Some(v) = &r.violation {
            eprintln!("seed {}: consistency violation: {v}", r.seed);
            exit = 2;
        } else if r.stalled || !r.all_committed {
            eprintln!(
                "seed {}: stalled before committing all transactions",
                r.seed
            );
            if exit == 0 {
                exit = 3;
            }
        }
    }
    write_atomic(&out.join("metrics.csv"), metrics.as_bytes())?;
    if single {
        let r = &results[0];
        write_atomic(&out.join("trace.jsonl"), r.trace.as_bytes())?;
        if want_dot {
            let dir = out.join("graphs");
            std::fs::create_dir_all(&dir)?;
            for (party, text) in &r.dots {
                write_atomic(&dir.join(format!("party_{party}.dot")), text.as_bytes())?;
            }
        }
    }
    println!(
        "simulate: {} run(s), n={}, t={}, scheduler={scheduler}, exit={exit}",
        results.len(),
        cfg.n,
        cfg.corrupted.len()
    );
    Ok(exit)
}

struct AttackRunResult {
    seed: u64,
    stats: DelayStats,
    trace: String,
    dots: Vec<(u32, String)>,
}

fn run_one_attack(
    cfg: &SimConfig,
    seed: u64,
    target: PartyId,
    max_rounds: u32,
    want_dot: bool,
) -> anyhow::Result<AttackRunResult> {
    let mut cfg = cfg.clone();
    cfg.seed = seed;
    let mut driver = DelayAttack::new(&cfg, target, max_rounds)?;
    let mut sim = Simulation::new(cfg)?;
    let stats = attack::run_delay_attack(&mut sim, &mut driver)?;
    let dots = if want_dot {
        sim.parties()
            .iter()
            .map(|p| (p.id.0, dot::to_dot(&p.graph)))
            .collect()
    } else {
        Vec::new()
    };
    Ok(AttackRunResult {
        seed,
        stats,
        trace: trace::to_jsonl(sim.trace()),
        dots,
    })
}

pub fn attack(
    cfg: &SimConfig,
    seeds: &[u64],
    target: PartyId,
    max_rounds: u32,
    out: &Path,
    want_dot: bool,
) -> anyhow::Result<u8> {
    std::fs::create_dir_all(out)?;
    let single = seeds.len() == 1;
    let results = fan_out(seeds, |seed| {
        run_one_attack(cfg, seed, target, max_rounds, want_dot && single)
    })?;
    let mut metrics = String::from(ATTACK_METRICS_HEADER);
    let mut coin_rounds_total = 0u64;
    let mut supermajority_total = 0u64;
    let mut decided_runs = 0u64;
    let mut rounds_sum = 0u64;
    for r in &results {
        let s = &r.stats;
        metrics.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.seed,
            cfg.n,
            cfg.coin_period,
            s.target_party.0,
            s.rounds_elapsed,
            s.coin_rounds_elapsed,
            s.decided_at.map_or(String::new(), |d| d.to_string()),
            s.supermajority_round
                .map_or(String::new(), |d| d.to_string()),
            s.per_coin_round_yes_counts
                .iter()
                .map(|c| c.to_string())
                .collect::<Vec<_>>()
                .join(";"),
        ));
        coin_rounds_total += s.coin_rounds_elapsed as u64;
        supermajority_total += s
            .per_coin_round_yes_counts
            .iter()
            .filter(|&&yes| probability::is_supermajority_split(cfg.n, yes))
            .count() as u64;
        if let Some(d) = s.decided_at {
            decided_runs += 1;
            rounds_sum += (d - s.target_round) as u64;
        }
    }
    write_atomic(&out.join("metrics.csv"), metrics.as_bytes())?;
    if seeds.len() > 1 {
        let exact = probability::exact_supermajority_prob(cfg.n);
        let empirical = if coin_rounds_total > 0 {
            supermajority_total as f64 / coin_rounds_total as f64
        } else {
            0.0
        };
        let summary = format!(
            "n,c,runs,coinRounds,supermajorityCoinRounds,empiricalRate,exactRate,meanRoundsToDecision\n{},{},{},{},{},{:.6},{:.6},{:.6}\n",
            cfg.n,
            cfg.coin_period,
            results.len(),
            coin_rounds_total,
            supermajority_total,
            empirical,
            exact.as_f64(),
            if decided_runs > 0 {
                rounds_sum as f64 / decided_runs as f64
            } else {
                0.0
            },
        );
        write_atomic(&out.join("coin_summary.csv"), summary.as_bytes())?;
    }
    if single {
        let r = &results[0];
        write_atomic(&out.join("trace.jsonl"), r.trace.as_bytes())?;
        if want_dot {
            let dir = out.join("graphs");
            std::fs::create_dir_all(&dir)?;
            for (party, text) in &r.dots {
                write_atomic(&dir.join(format!("party_{party}.dot")), text.as_bytes())?;
            }
        }
    }
    let exit = if results
        .iter()
        .all(|r| r.stats.decided_at.is_some() || r.stats.supermajority_round.is_none())
    {
        0
    } else {
        2
    };
    println!(
        "attack: {} run(s), n={}, c={}, exit={exit}",
        results.len(),
        cfg.n,
        cfg.coin_period
    );
    Ok(exit)
}
