//! A delivery-order attack that stalls one witness's fame election.
//!
//! All parties behave honestly; the scheduler alone, by choosing which syncs
//! to deliver when, shapes every party's hashgraph so that each election
//! round splits below the deciding threshold. In a normal round each party's
//! new witness repeats its previous vote, so a supermajority can only form in
//! a coin round, which happens with the small probability quantified in
//! [`probability`]. After a supermajority coin flip the strategy hands
//! control to the fair scheduler and measures how quickly the decision
//! lands.
//!
//! Round construction, for parties relabeled 1..n (majority voters first):
//!
//! - a "zig" chain of events from party n down to party 2, with a forked end
//!   at party 1 pointing at party 3's event;
//! - a "lower zag" back up across the rightmost quorum, skipping one link so
//!   the anchor event `B` stays below witness strength;
//! - an "upper zag" across the leftmost quorum seeded from party 1's zig
//!   event, producing anchors `C` and `D`;
//! - one delivery wave: minority voters receive `A` and `B` (they then
//!   strongly see exactly the rightmost quorum, whose majority is the old
//!   minority vote), majority voters receive `C` and `D` (they strongly see
//!   every previous witness, preserving the majority vote).
//!
//! The base round is simpler: one zig over the rightmost quorum, one zag
//!   producing `A` and `B`, then the target witness is shown only to the
//!   parties meant to vote yes.

pub mod probability;

use crate::consensus::{recompute_vote, witness_vote};
use crate::error::SimError;
use crate::event::{EventId, PartyId};
use crate::graph::Fame;
use crate::sim::scheduler::{Action, FairScheduler, Scheduler};
use crate::sim::{SimConfig, SimView, Simulation};
use rand_chacha::ChaCha8Rng;
use std::collections::{BTreeMap, HashMap, VecDeque};

/// Construction phase, for observability and tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhaseKind {
    Zig,
    ZagLower,
    ZagUpper,
    FixVotes,
    MakeWitnesses,
    CoinRound,
    Handoff,
    Decided,
}

/// Snapshot of the attack state after a constructed round.
#[derive(Debug, Clone)]
pub struct AttackPhase {
    pub kind: PhaseKind,
    pub round: u32,
    pub anchors: BTreeMap<char, EventId>,
}

/// Everything observable about one constructed round.
#[derive(Debug, Clone)]
pub struct RoundReport {
    pub round: u32,
    pub coin: bool,
    pub yes: u32,
    pub no: u32,
    pub supermajority: bool,
    /// Vote per party, indexed by party id.
    pub votes: Vec<bool>,
    /// The round's witness per party, indexed by party id.
    pub witnesses: Vec<EventId>,
    pub anchors: BTreeMap<char, EventId>,
}

/// Delay measurements for one attack run.
#[derive(Debug, Clone)]
pub struct DelayStats {
    pub target: EventId,
    pub target_party: PartyId,
    pub target_round: u32,
    /// Highest constructed round minus the target round.
    pub rounds_elapsed: u32,
    pub coin_rounds_elapsed: u32,
    pub per_coin_round_yes_counts: Vec<u32>,
    /// Round whose votes first reached a supermajority, if any.
    pub supermajority_round: Option<u32>,
    pub supermajority_was_coin: bool,
    /// Round of the witness that decided the target's fame, once every
    /// replica has decided.
    pub decided_at: Option<u32>,
    pub decided_famous: Option<bool>,
}

/// One scripted operation. Labels are 1-based; the labeling maps them to
/// parties for the current round.
#[derive(Debug, Clone, Copy)]
enum Op {
    /// Initiate from one label's party to another and deliver immediately.
    Sync {
        from: u32,
        to: u32,
    },
    /// Initiate now (capturing the sender's current tip) and remember the
    /// delivery id under (anchor, target label) for a later `DeliverKeyed`.
    InitiateKeyed {
        from: u32,
        anchor: char,
        to: u32,
    },
    /// Deliver a remembered sync.
    DeliverKeyed {
        anchor: char,
        to: u32,
    },
    /// Record the current tip of a label's party as a named anchor.
    NoteAnchor {
        anchor: char,
        of: u32,
    },
    Phase(PhaseKind),
}

enum Mode {
    Construct,
    Handoff,
    Done,
}

/// The delay attack as a [`Scheduler`] strategy.
pub struct DelayAttack {
    target_party: PartyId,
    target: Option<EventId>,
    n: u32,
    coin_period: u32,
    max_rounds: u32,
    /// `labeling[k]` holds label k+1.
    labeling: Vec<PartyId>,
    round_index: u32,
    ops: VecDeque<Op>,
    inflight: Option<u64>,
    keyed: HashMap<(char, u32), u64>,
    anchors: BTreeMap<char, EventId>,
    mode: Mode,
    phase: PhaseKind,
    fair: FairScheduler,
    handoff_steps: u64,
    stats: DelayStats,
    reports: VecDeque<RoundReport>,
    error: Option<String>,
}

impl DelayAttack {
    /// The attack needs at least seven parties (below that the quorum is
    /// n-1, which calls for a different strategy) and an all-honest run.
    pub fn new(
        cfg: &SimConfig,
        target_party: PartyId,
        max_rounds: u32,
    ) -> Result<DelayAttack, SimError> {
        if cfg.n < 7 {
            return Err(SimError::PreconditionViolated(format!(
                "the delay attack requires n >= 7, got n = {}",
                cfg.n
            )));
        }
        if !cfg.corrupted.is_empty() {
            return Err(SimError::PreconditionViolated(
                "the delay attack drives honest parties only; corruption would hinder it".into(),
            ));
        }
        if target_party.0 >= cfg.n {
            return Err(SimError::PreconditionViolated(format!(
                "target party {target_party} out of range"
            )));
        }
        let mut labeling: Vec<PartyId> = vec![target_party];
        labeling.extend((0..cfg.n).filter(|&p| p != target_party.0).map(PartyId));
        Ok(DelayAttack {
            target_party,
            target: None,
            n: cfg.n,
            coin_period: cfg.coin_period,
            max_rounds,
            labeling,
            round_index: 0,
            ops: VecDeque::new(),
            inflight: None,
            keyed: HashMap::new(),
            anchors: BTreeMap::new(),
            mode: Mode::Construct,
            phase: PhaseKind::Zig,
            fair: FairScheduler::new(),
            handoff_steps: 0,
            stats: DelayStats {
                target: EventId(crate::crypto::Digest([0; 32])),
                target_party,
                target_round: 1,
                rounds_elapsed: 0,
                coin_rounds_elapsed: 0,
                per_coin_round_yes_counts: Vec::new(),
                supermajority_round: None,
                supermajority_was_coin: false,
                decided_at: None,
                decided_famous: None,
            },
            reports: VecDeque::new(),
            error: None,
        })
    }

    pub fn stats(&self) -> &DelayStats {
        &self.stats
    }

    pub fn error(&self) -> Option<&str> {
        self.error.as_deref()
    }

    pub fn is_done(&self) -> bool {
        matches!(self.mode, Mode::Done)
    }

    pub fn phase(&self) -> AttackPhase {
        AttackPhase {
            kind: self.phase,
            round: self.constructed_round(),
            anchors: self.anchors.clone(),
        }
    }

    pub fn take_report(&mut self) -> Option<RoundReport> {
        self.reports.pop_front()
    }

    fn quorum(&self) -> u32 {
        2 * self.n / 3 + 1
    }

    /// The hashgraph round the current script builds: the base round
    /// constructs round 2 witnesses.
    fn constructed_round(&self) -> u32 {
        2 + self.round_index
    }

    fn party(&self, label: u32) -> PartyId {
        self.labeling[label as usize - 1]
    }

    fn is_coin_round(&self, round: u32) -> bool {
        (round - self.stats.target_round).is_multiple_of(self.coin_period)
    }

    /// Base script: zig across the rightmost quorum, zag up to anchors
    /// `B`/`A`, then show the target only to the leftmost half.
    fn base_ops(&self) -> VecDeque<Op> {
        let n = self.n;
        let q = self.quorum();
        let zig_end = n - q + 1;
        let zag_start = zig_end;
        let half = n / 2;
        let mut ops = VecDeque::new();
        ops.push_back(Op::Phase(PhaseKind::Zig));
        for i in (zig_end..n).rev() {
            ops.push_back(Op::Sync { from: i + 1, to: i });
        }
        ops.push_back(Op::NoteAnchor {
            anchor: 'e',
            of: zig_end,
        });
        ops.push_back(Op::Phase(PhaseKind::ZagLower));
        for i in zag_start + 1..=n - 2 {
            ops.push_back(Op::Sync { from: i - 1, to: i });
        }
        ops.push_back(Op::NoteAnchor {
            anchor: 'c',
            of: n - 2,
        });
        ops.push_back(Op::Sync {
            from: n - 2,
            to: n - 1,
        });
        ops.push_back(Op::NoteAnchor {
            anchor: 'B',
            of: n - 1,
        });
        let b_targets: Vec<u32> = std::iter::once(n)
            .chain(half + 1..=n - 2)
            .chain(zag_start..=half)
            .collect();
        for &t in &b_targets {
            ops.push_back(Op::InitiateKeyed {
                from: n - 1,
                anchor: 'B',
                to: t,
            });
        }
        ops.push_back(Op::Sync { from: n - 2, to: n });
        ops.push_back(Op::NoteAnchor { anchor: 'A', of: n });
        let a_targets: Vec<u32> = std::iter::once(n - 1)
            .chain(half + 1..=n - 2)
            .chain(2..=zag_start - 1)
            .chain(zag_start..=half)
            .chain(std::iter::once(1))
            .collect();
        for &t in &a_targets {
            ops.push_back(Op::InitiateKeyed {
                from: n,
                anchor: 'A',
                to: t,
            });
        }
        ops.push_back(Op::Phase(PhaseKind::FixVotes));
        ops.push_back(Op::DeliverKeyed {
            anchor: 'A',
            to: n - 1,
        });
        ops.push_back(Op::DeliverKeyed { anchor: 'B', to: n });
        for i in half + 1..=n - 2 {
            ops.push_back(Op::DeliverKeyed { anchor: 'A', to: i });
            ops.push_back(Op::DeliverKeyed { anchor: 'B', to: i });
        }
        ops.push_back(Op::Phase(PhaseKind::MakeWitnesses));
        for i in 2..=zag_start - 1 {
            ops.push_back(Op::Sync { from: 1, to: i });
            ops.push_back(Op::DeliverKeyed { anchor: 'A', to: i });
        }
        for i in zag_start..=half {
            ops.push_back(Op::Sync { from: 1, to: i });
            ops.push_back(Op::DeliverKeyed { anchor: 'A', to: i });
            ops.push_back(Op::DeliverKeyed { anchor: 'B', to: i });
        }
        ops.push_back(Op::DeliverKeyed { anchor: 'A', to: 1 });
        ops
    }

    /// Inductive script for one later round, majority size `cv`.
    fn inductive_ops(&self, cv: u32, coin: bool) -> VecDeque<Op> {
        let n = self.n;
        let q = self.quorum();
        let lower_start = n - q + 1;
        let mut ops = VecDeque::new();
        ops.push_back(Op::Phase(if coin {
            PhaseKind::CoinRound
        } else {
            PhaseKind::Zig
        }));
        for i in (2..n).rev() {
            ops.push_back(Op::Sync { from: i + 1, to: i });
        }
        // Forked end: label 1 hears label 3's event, leaving label 2's zig
        // event out of the left chain.
        ops.push_back(Op::Sync { from: 3, to: 1 });
        ops.push_back(Op::NoteAnchor { anchor: 'e', of: 1 });
        ops.push_back(Op::Phase(PhaseKind::ZagLower));
        let mut prev = lower_start;
        for i in lower_start + 1..n {
            ops.push_back(Op::Sync { from: prev, to: i });
            if i != q - 1 {
                // The skip: the next lower-zag event must not extend the
                // skipped link, keeping anchor D below witness strength.
                prev = i;
            }
        }
        ops.push_back(Op::Sync { from: n - 2, to: n });
        ops.push_back(Op::NoteAnchor {
            anchor: 'A',
            of: n - 1,
        });
        for t in (cv + 1..=n).filter(|&t| t != n - 1) {
            ops.push_back(Op::InitiateKeyed {
                from: n - 1,
                anchor: 'A',
                to: t,
            });
        }
        ops.push_back(Op::Sync { from: q - 1, to: n });
        ops.push_back(Op::NoteAnchor { anchor: 'B', of: n });
        for t in (cv + 1..=n).filter(|&t| t != n) {
            ops.push_back(Op::InitiateKeyed {
                from: n,
                anchor: 'B',
                to: t,
            });
        }
        ops.push_back(Op::Phase(PhaseKind::ZagUpper));
        let mut prev_u = 1;
        for i in 2..=q - 1 {
            ops.push_back(Op::Sync {
                from: prev_u,
                to: i,
            });
            if i != q - 1 {
                prev_u = i;
            } else {
                ops.push_back(Op::NoteAnchor { anchor: 'c', of: i });
            }
        }
        ops.push_back(Op::Sync {
            from: prev_u,
            to: q,
        });
        ops.push_back(Op::NoteAnchor { anchor: 'D', of: q });
        for t in (1..=cv).filter(|&t| t != q) {
            ops.push_back(Op::InitiateKeyed {
                from: q,
                anchor: 'D',
                to: t,
            });
        }
        ops.push_back(Op::Sync { from: q - 1, to: 1 });
        ops.push_back(Op::NoteAnchor { anchor: 'C', of: 1 });
        for t in 2..=cv {
            ops.push_back(Op::InitiateKeyed {
                from: 1,
                anchor: 'C',
                to: t,
            });
        }
        ops.push_back(Op::Phase(PhaseKind::MakeWitnesses));
        for i in cv + 1..=n {
            if i != n - 1 {
                ops.push_back(Op::DeliverKeyed { anchor: 'A', to: i });
            }
            if i != n {
                ops.push_back(Op::DeliverKeyed { anchor: 'B', to: i });
            }
        }
        for i in 1..=cv {
            if i != 1 {
                ops.push_back(Op::DeliverKeyed { anchor: 'C', to: i });
            }
            if i != q {
                ops.push_back(Op::DeliverKeyed { anchor: 'D', to: i });
            }
        }
        ops
    }

    /// Vote of `witness` on the target, read from the replica's own election
    /// when the target has reached it and recomputed from scratch otherwise.
    fn vote_on_replica(
        &self,
        view: &SimView<'_>,
        party: PartyId,
        witness: EventId,
    ) -> Option<bool> {
        let target = self.target?;
        let g = view.graph(party);
        witness_vote(g, target, witness)
            .or_else(|| recompute_vote(g, target, self.stats.target_round, witness))
    }

    /// Called when a round's script is exhausted: read the new witnesses and
    /// votes off the replicas, record the tally, and either schedule the next
    /// round, hand off to fair delivery, or stop.
    fn round_complete(&mut self, view: &SimView<'_>) {
        let round = self.constructed_round();
        let coin = self.is_coin_round(round);
        let mut witnesses = Vec::with_capacity(self.n as usize);
        let mut votes = Vec::with_capacity(self.n as usize);
        for p in 0..self.n {
            let party = PartyId(p);
            let g = view.graph(party);
            // The party's unique witness for this round, on its own replica.
            // Its tip can be a later non-witness: a party that anchors the
            // upper zag reaches witness strength on the first delivery of
            // the wave and its second response stays in the same round.
            let mine: Vec<EventId> = g
                .witnesses_of_round(round)
                .into_iter()
                .filter(|&w| g.event(w).map(|e| e.creator) == Some(party))
                .collect();
            let [witness] = mine[..] else {
                self.error = Some(format!(
                    "party {party} holds {} round-{round} witnesses, expected exactly one",
                    mine.len()
                ));
                self.mode = Mode::Done;
                return;
            };
            let Some(vote) = self.vote_on_replica(view, party, witness) else {
                self.error = Some(format!(
                    "vote of party {party} unavailable in round {round}"
                ));
                self.mode = Mode::Done;
                return;
            };
            witnesses.push(witness);
            votes.push(vote);
        }
        let yes = votes.iter().filter(|&&v| v).count() as u32;
        let no = self.n - yes;
        let supermajority = probability::is_supermajority_split(self.n, yes);
        self.stats.rounds_elapsed = round - self.stats.target_round;
        if coin {
            self.stats.coin_rounds_elapsed += 1;
            self.stats.per_coin_round_yes_counts.push(yes);
        }
        self.reports.push_back(RoundReport {
            round,
            coin,
            yes,
            no,
            supermajority,
            votes: votes.clone(),
            witnesses,
            anchors: self.anchors.clone(),
        });

        // A decision observed anywhere ends the run.
        if let Some((decided_round, famous)) = self.decision_on_any_replica(view) {
            self.stats.decided_at = Some(decided_round);
            self.stats.decided_famous = Some(famous);
            self.phase = PhaseKind::Decided;
            self.mode = Mode::Done;
            return;
        }
        if supermajority {
            self.stats.supermajority_round = Some(round);
            self.stats.supermajority_was_coin = coin;
            self.phase = PhaseKind::Handoff;
            self.mode = Mode::Handoff;
            return;
        }
        if self.stats.rounds_elapsed >= self.max_rounds {
            self.mode = Mode::Done;
            return;
        }
        // Relabel: majority voters take labels 1..cv, ascending party index.
        let v = yes >= no;
        let cv = if v { yes } else { no };
        let mut order: Vec<PartyId> = (0..self.n)
            .filter(|&p| votes[p as usize] == v)
            .map(PartyId)
            .collect();
        order.extend((0..self.n).filter(|&p| votes[p as usize] != v).map(PartyId));
        self.labeling = order;
        self.round_index += 1;
        let next_coin = self.is_coin_round(self.constructed_round());
        self.anchors.clear();
        self.ops = self.inductive_ops(cv, next_coin);
    }

    fn decision_on_any_replica(&self, view: &SimView<'_>) -> Option<(u32, bool)> {
        let target = self.target?;
        for p in 0..self.n {
            let g = view.graph(PartyId(p));
            match g.fame_of(target) {
                Ok(Fame::Famous) => {
                    return Some((
                        g.fame_decided_in_round(target).ok().flatten().unwrap_or(0),
                        true,
                    ))
                }
                Ok(Fame::NotFamous) => {
                    return Some((
                        g.fame_decided_in_round(target).ok().flatten().unwrap_or(0),
                        false,
                    ))
                }
                _ => {}
            }
        }
        None
    }

    fn all_replicas_decided(&self, view: &SimView<'_>) -> Option<(u32, bool)> {
        let target = self.target?;
        let mut latest = 0;
        let mut famous = None;
        for p in 0..self.n {
            let g = view.graph(PartyId(p));
            match g.fame_of(target).ok()? {
                Fame::Undecided => return None,
                Fame::Famous => famous = Some(true),
                Fame::NotFamous => {
                    if famous == Some(true) {
                        return None;
                    }
                    famous = Some(false);
                }
            }
            latest = latest.max(g.fame_decided_in_round(target).ok().flatten().unwrap_or(0));
        }
        famous.map(|f| (latest, f))
    }
}

impl Scheduler for DelayAttack {
    fn name(&self) -> &'static str {
        "attack"
    }

    fn next_action(&mut self, view: &SimView<'_>, rng: &mut ChaCha8Rng) -> Option<Action> {
        if self.error.is_some() {
            return None;
        }
        if self.target.is_none() {
            // The target witness is the target party's genesis.
            let x = view.tip(self.target_party);
            self.target = Some(x);
            self.stats.target = x;
            self.ops = self.base_ops();
        }
        loop {
            match self.mode {
                Mode::Done => return None,
                Mode::Handoff => {
                    if let Some((round, famous)) = self.all_replicas_decided(view) {
                        self.stats.decided_at = Some(round);
                        self.stats.decided_famous = Some(famous);
                        self.phase = PhaseKind::Decided;
                        self.mode = Mode::Done;
                        return None;
                    }
                    self.handoff_steps += 1;
                    if self.handoff_steps > 100_000 {
                        self.error = Some("handoff did not reach a decision".into());
                        return None;
                    }
                    return self.fair.next_action(view, rng);
                }
                Mode::Construct => {
                    if let Some(id) = self.inflight.take() {
                        return Some(Action::Deliver(id));
                    }
                    let Some(op) = self.ops.pop_front() else {
                        self.round_complete(view);
                        continue;
                    };
                    match op {
                        Op::Phase(kind) => {
                            self.phase = kind;
                            continue;
                        }
                        Op::NoteAnchor { anchor, of } => {
                            self.anchors.insert(anchor, view.tip(self.party(of)));
                            continue;
                        }
                        Op::Sync { from, to } => {
                            self.inflight = Some(view.next_delivery_id());
                            return Some(Action::Initiate {
                                from: self.party(from),
                                to: self.party(to),
                            });
                        }
                        Op::InitiateKeyed { from, anchor, to } => {
                            self.keyed.insert((anchor, to), view.next_delivery_id());
                            return Some(Action::Initiate {
                                from: self.party(from),
                                to: self.party(to),
                            });
                        }
                        Op::DeliverKeyed { anchor, to } => match self.keyed.remove(&(anchor, to)) {
                            Some(id) => return Some(Action::Deliver(id)),
                            None => {
                                self.error = Some(format!("missing keyed delivery {anchor}->{to}"));
                                return None;
                            }
                        },
                    }
                }
            }
        }
    }
}

/// Drive the base-round construction to completion and return its report.
pub fn run_base_case(
    sim: &mut Simulation,
    attack: &mut DelayAttack,
) -> Result<RoundReport, SimError> {
    run_until_report(sim, attack)
}

/// Drive exactly one more constructed round and return its report.
pub fn run_inductive_round(
    sim: &mut Simulation,
    attack: &mut DelayAttack,
) -> Result<RoundReport, SimError> {
    run_until_report(sim, attack)
}

fn run_until_report(
    sim: &mut Simulation,
    attack: &mut DelayAttack,
) -> Result<RoundReport, SimError> {
    loop {
        if let Some(report) = attack.take_report() {
            sim.record_attack_round(
                report.round,
                report.yes,
                report.no,
                report.coin,
                report.supermajority,
            );
            return Ok(report);
        }
        if let Some(err) = attack.error() {
            return Err(SimError::PreconditionViolated(err.to_string()));
        }
        if sim.step(attack)? == crate::sim::StepOutcome::Idle {
            if let Some(report) = attack.take_report() {
                return Ok(report);
            }
            let err = attack
                .error()
                .unwrap_or("attack stopped before completing a round")
                .to_string();
            return Err(SimError::PreconditionViolated(err));
        }
    }
}

/// Run the full delay attack: constructed rounds until a supermajority coin
/// round (or the round cap), then fair delivery until every replica decides
/// the target's fame. Ends with a full drain so every delivery lands.
pub fn run_delay_attack(
    sim: &mut Simulation,
    attack: &mut DelayAttack,
) -> Result<DelayStats, SimError> {
    sim.label_scheduler("attack");
    loop {
        while let Some(report) = attack.take_report() {
            sim.record_attack_round(
                report.round,
                report.yes,
                report.no,
                report.coin,
                report.supermajority,
            );
        }
        if let Some(err) = attack.error() {
            return Err(SimError::PreconditionViolated(err.to_string()));
        }
        if attack.is_done() {
            break;
        }
        if sim.step_count() >= sim.cfg.max_steps {
            break;
        }
        if sim.step(attack)? == crate::sim::StepOutcome::Idle {
            break;
        }
    }
    while let Some(report) = attack.take_report() {
        sim.record_attack_round(
            report.round,
            report.yes,
            report.no,
            report.coin,
            report.supermajority,
        );
    }
    if let Some(err) = attack.error() {
        return Err(SimError::PreconditionViolated(err.to_string()));
    }
    sim.drain()?;
    Ok(attack.stats().clone())
}
