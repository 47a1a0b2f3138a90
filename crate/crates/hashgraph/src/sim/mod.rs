//! Deterministic discrete-event simulation of `n` parties under an
//! asynchronous adversarial network.
//!
//! One step executes one scheduler action: either deliver one in-flight sync
//! or let a party snapshot its graph into a new in-flight sync. All state is
//! owned, single-threaded, and seeded, so a run is a pure function of
//! (config, scheduler): replaying one yields an identical trace. Independent
//! runs with different seeds can execute on separate threads.

pub mod dot;
pub mod scheduler;
pub mod trace;

use crate::consensus::{self, CommitLog};
use crate::crypto::Pki;
use crate::error::SimError;
use crate::event::{Event, EventId, PartyId};
use crate::graph::{Fame, Hashgraph, InsertOutcome};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scheduler::{Action, PendingInfo, Scheduler};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, HashSet, VecDeque};
use std::sync::Arc;
use trace::TraceRecord;

/// A transaction handed to a party at a given step; it rides the next event
/// that party creates.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TxInjection {
    pub step: u64,
    pub party: u32,
    #[serde(with = "hex_bytes")]
    pub payload: Vec<u8>,
}

mod hex_bytes {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(d)?;
        hex::decode(&s).map_err(serde::de::Error::custom)
    }
}

/// Simulation parameters. `3 * |corrupted| < n` is enforced.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n: u32,
    #[serde(default)]
    pub corrupted: BTreeSet<u32>,
    pub coin_period: u32,
    pub seed: u64,
    pub max_steps: u64,
    #[serde(default)]
    pub tx_schedule: Vec<TxInjection>,
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.n < 2 {
            return Err(SimError::InvalidConfig("need at least 2 parties".into()));
        }
        if 3 * self.corrupted.len() as u32 >= self.n {
            return Err(SimError::InvalidConfig(format!(
                "corruption bound violated: 3*{} >= {}",
                self.corrupted.len(),
                self.n
            )));
        }
        if self.corrupted.iter().any(|&p| p >= self.n) {
            return Err(SimError::InvalidConfig(
                "corrupted party out of range".into(),
            ));
        }
        if self.coin_period < 2 {
            return Err(SimError::InvalidConfig("coin period must be >= 2".into()));
        }
        if self.tx_schedule.iter().any(|t| t.party >= self.n) {
            return Err(SimError::InvalidConfig("tx target out of range".into()));
        }
        Ok(())
    }

    /// Default corruption pattern: the last `t` parties fork.
    pub fn with_tail_corruption(mut self, t: u32) -> Self {
        self.corrupted = (self.n - t..self.n).collect();
        self
    }
}

/// The unit of network delivery: one party's events, topologically ordered,
/// headed by its newest event. Events travel with their ids so receivers can
/// dedup without rehashing; fresh ids are verified against content on
/// insertion.
#[derive(Debug, Clone)]
pub struct SyncMessage {
    pub sender: PartyId,
    pub events: Vec<(EventId, Arc<Event>)>,
    pub head: EventId,
}

#[derive(Debug, Clone)]
pub struct PendingDelivery {
    pub id: u64,
    pub message: SyncMessage,
    pub target: PartyId,
}

struct ForkerState {
    branch_tips: [EventId; 2],
    responses: u64,
    forked: bool,
}

/// One party: its hashgraph replica, ancestor buffer, commit log, and the
/// queue of transactions waiting to ride its next event.
pub struct PartyState {
    pub id: PartyId,
    pub graph: Hashgraph,
    pub buffer: Vec<(EventId, Arc<Event>)>,
    pub log: CommitLog,
    pub pending_tx: VecDeque<Vec<u8>>,
    tip: EventId,
    forker: Option<ForkerState>,
    matched_tx: HashSet<Vec<u8>>,
}

impl PartyState {
    pub fn tip(&self) -> EventId {
        self.tip
    }

    pub fn is_corrupted(&self) -> bool {
        self.forker.is_some()
    }
}

/// Coordinates of the first prefix divergence between two honest logs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrefixCheck {
    Ok,
    Violation {
        i: PartyId,
        j: PartyId,
        index: usize,
    },
}

/// Total-order key of a commit entry.
type CommitKey = (u32, u64, [u8; 32]);

/// Entry-level commit monitor: every honest commit is checked against the
/// canonical sequence established by the first party to reach that position.
#[derive(Default)]
struct CanonicalLog {
    keys: Vec<(CommitKey, EventId, PartyId)>,
}

/// A violation of the commit-sequence invariant observed mid-run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConsistencyViolation {
    pub party: PartyId,
    pub established_by: PartyId,
    pub position: usize,
    pub step: u64,
}

pub struct Simulation {
    pub cfg: SimConfig,
    pki: Arc<Pki>,
    parties: Vec<PartyState>,
    pending: BTreeMap<u64, PendingDelivery>,
    next_delivery_id: u64,
    deliveries_done: u64,
    step: u64,
    rng: ChaCha8Rng,
    trace: Vec<TraceRecord>,
    canonical: CanonicalLog,
    violation: Option<ConsistencyViolation>,
    expected_tx: HashSet<Vec<u8>>,
    tx_cursor: usize,
    tx_by_step: Vec<TxInjection>,
}

/// Read-only view handed to schedulers.
pub struct SimView<'a> {
    sim: &'a Simulation,
}

impl<'a> SimView<'a> {
    pub fn n(&self) -> usize {
        self.sim.cfg.n as usize
    }

    pub fn step(&self) -> u64 {
        self.sim.step
    }

    pub fn pending_count(&self) -> usize {
        self.sim.pending.len()
    }

    pub fn oldest_pending(&self) -> Option<u64> {
        self.sim.pending.keys().next().copied()
    }

    pub fn nth_pending(&self, n: usize) -> Option<u64> {
        self.sim.pending.keys().nth(n).copied()
    }

    pub fn pending_infos(&self) -> impl Iterator<Item = PendingInfo> + '_ {
        self.sim.pending.values().map(|p| PendingInfo {
            id: p.id,
            from: p.message.sender,
            to: p.target,
            head: p.message.head,
        })
    }

    pub fn last_delivery_id(&self) -> Option<u64> {
        self.sim.next_delivery_id.checked_sub(1)
    }

    /// Id the next initiated sync will receive.
    pub fn next_delivery_id(&self) -> u64 {
        self.sim.next_delivery_id
    }

    pub fn has_pending(&self, id: u64) -> bool {
        self.sim.pending.contains_key(&id)
    }

    pub fn tip(&self, party: PartyId) -> EventId {
        self.sim.parties[party.0 as usize].tip
    }

    pub fn graph(&self, party: PartyId) -> &Hashgraph {
        &self.sim.parties[party.0 as usize].graph
    }

    pub fn is_corrupted(&self, party: PartyId) -> bool {
        self.sim.parties[party.0 as usize].is_corrupted()
    }

    /// A uniformly random party other than `from`.
    pub fn random_other(&self, from: PartyId, rng: &mut ChaCha8Rng) -> PartyId {
        let n = self.n() as u32;
        loop {
            let t = rng.gen_range(0..n);
            if t != from.0 {
                return PartyId(t);
            }
        }
    }
}

/// What one step did.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepOutcome {
    Acted,
    /// The scheduler had nothing to drive.
    Idle,
}

impl Simulation {
    pub fn new(cfg: SimConfig) -> Result<Simulation, SimError> {
        cfg.validate()?;
        let n = cfg.n as usize;
        let pki = Arc::new(Pki::new(n, cfg.seed));
        let mut parties = Vec::with_capacity(n);
        for p in 0..n as u32 {
            let key = pki.keypair(p);
            let genesis = Arc::new(Event::new_signed(key, p as u64, vec![], None, None));
            let tip = genesis.id();
            let mut graph = Hashgraph::new(PartyId(p), n, cfg.coin_period, pki.clone());
            graph.insert(genesis).expect("genesis inserts");
            parties.push(PartyState {
                id: PartyId(p),
                graph,
                buffer: Vec::new(),
                log: CommitLog::new(),
                pending_tx: VecDeque::new(),
                tip,
                forker: cfg.corrupted.contains(&p).then_some(ForkerState {
                    branch_tips: [tip, tip],
                    responses: 0,
                    forked: false,
                }),
                matched_tx: HashSet::new(),
            });
        }
        let expected_tx = cfg
            .tx_schedule
            .iter()
            .filter(|t| !cfg.corrupted.contains(&t.party))
            .map(|t| t.payload.clone())
            .collect();
        let mut tx_by_step = cfg.tx_schedule.clone();
        tx_by_step.sort_by_key(|t| t.step);
        let rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut sim = Simulation {
            trace: vec![TraceRecord::Config {
                step: 0,
                seed: cfg.seed,
                n: cfg.n,
                t: cfg.corrupted.len() as u32,
                corrupted: cfg.corrupted.iter().copied().collect(),
                coin_period: cfg.coin_period,
                max_steps: cfg.max_steps,
                scheduler: String::new(),
            }],
            pki,
            parties,
            pending: BTreeMap::new(),
            next_delivery_id: 0,
            deliveries_done: 0,
            step: 0,
            rng,
            canonical: CanonicalLog::default(),
            violation: None,
            expected_tx,
            tx_cursor: 0,
            tx_by_step,
            cfg,
        };
        for p in 0..n as u32 {
            let ev = sim.parties[p as usize]
                .graph
                .event_arc(sim.parties[p as usize].tip)
                .unwrap();
            sim.trace
                .push(created_record(0, &sim.parties[p as usize].graph, &ev));
        }
        // Each party multicasts its genesis.
        for p in 0..n as u32 {
            for q in 0..n as u32 {
                if p != q {
                    sim.enqueue_sync(PartyId(p), PartyId(q));
                }
            }
        }
        Ok(sim)
    }

    /// Stamp the scheduler name into the config echo record.
    pub fn label_scheduler(&mut self, name: &str) {
        if let Some(TraceRecord::Config { scheduler, .. }) = self.trace.first_mut() {
            *scheduler = name.to_string();
        }
    }

    pub fn view(&self) -> SimView<'_> {
        SimView { sim: self }
    }

    pub fn pki(&self) -> Arc<Pki> {
        self.pki.clone()
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn party(&self, p: PartyId) -> &PartyState {
        &self.parties[p.0 as usize]
    }

    pub fn parties(&self) -> &[PartyState] {
        &self.parties
    }

    pub fn honest_parties(&self) -> impl Iterator<Item = &PartyState> {
        self.parties.iter().filter(|p| !p.is_corrupted())
    }

    pub fn trace(&self) -> &[TraceRecord] {
        &self.trace
    }

    pub fn violation(&self) -> Option<ConsistencyViolation> {
        self.violation
    }

    pub fn pending_count(&self) -> usize {
        self.pending.len()
    }

    pub fn deliveries_created(&self) -> u64 {
        self.next_delivery_id
    }

    pub fn deliveries_done(&self) -> u64 {
        self.deliveries_done
    }

    /// Execute one scheduler decision.
    pub fn step(&mut self, sched: &mut dyn Scheduler) -> Result<StepOutcome, SimError> {
        self.step += 1;
        self.inject_due_transactions();
        let mut rng = std::mem::replace(&mut self.rng, ChaCha8Rng::seed_from_u64(0));
        let action = sched.next_action(&self.view(), &mut rng);
        self.rng = rng;
        match action {
            None => {
                self.step -= 1;
                Ok(StepOutcome::Idle)
            }
            Some(Action::Initiate { from, to }) => {
                if from == to || from.0 >= self.cfg.n || to.0 >= self.cfg.n {
                    return Err(SimError::InvalidConfig(format!(
                        "bad sync pair {from} -> {to}"
                    )));
                }
                self.enqueue_sync(from, to);
                Ok(StepOutcome::Acted)
            }
            Some(Action::Deliver(id)) => {
                let delivery = self
                    .pending
                    .remove(&id)
                    .ok_or(SimError::UnknownDelivery(id))?;
                self.deliveries_done += 1;
                self.deliver(delivery)?;
                Ok(StepOutcome::Acted)
            }
        }
    }

    fn inject_due_transactions(&mut self) {
        while self.tx_cursor < self.tx_by_step.len()
            && self.tx_by_step[self.tx_cursor].step <= self.step
        {
            let inj = self.tx_by_step[self.tx_cursor].clone();
            self.parties[inj.party as usize]
                .pending_tx
                .push_back(inj.payload);
            self.tx_cursor += 1;
        }
    }

    /// Snapshot `from`'s sync to `to` into the in-flight set. Honest parties
    /// share their whole graph; a forked party shares only the branch
    /// assigned to that target.
    fn enqueue_sync(&mut self, from: PartyId, to: PartyId) {
        let sender = &self.parties[from.0 as usize];
        let message = match &sender.forker {
            Some(f) if f.forked => {
                let tip = f.branch_tips[(to.0 % 2) as usize];
                SyncMessage {
                    sender: from,
                    events: sender.graph.ancestor_closure(tip),
                    head: tip,
                }
            }
            _ => SyncMessage {
                sender: from,
                events: sender.graph.events_with_ids().collect(),
                head: sender.tip,
            },
        };
        let id = self.next_delivery_id;
        self.next_delivery_id += 1;
        self.pending.insert(
            id,
            PendingDelivery {
                id,
                message,
                target: to,
            },
        );
    }

    /// Deliver one sync: insert what is deliverable, buffer the rest, create
    /// the response event, and run the local consensus procedures.
    fn deliver(&mut self, delivery: PendingDelivery) -> Result<(), SimError> {
        let target = delivery.target;
        let step = self.step;
        let mut inserted = 0u32;
        {
            let party = &mut self.parties[target.0 as usize];
            for (id, ev) in &delivery.message.events {
                match party.graph.insert_known(*id, ev.clone()) {
                    Ok(InsertOutcome::Inserted) => inserted += 1,
                    Ok(InsertOutcome::Duplicate) => {}
                    Err(crate::error::GraphError::MissingParents(_)) => {
                        self.trace.push(TraceRecord::Buffered {
                            step,
                            party: target.0,
                            event: id.to_hex(),
                        });
                        party.buffer.push((*id, ev.clone()));
                    }
                    // Incorrectly formatted events are discarded.
                    Err(_) => {}
                }
            }
            inserted += drain_buffer(party);
        }
        self.trace.push(TraceRecord::Delivered {
            step,
            party: target.0,
            from: delivery.message.sender.0,
            event: delivery.message.head.to_hex(),
            new_events: inserted,
        });
        if inserted == 0 {
            // A redelivery of known events creates nothing.
            return Ok(());
        }
        if !self.parties[target.0 as usize]
            .graph
            .contains(delivery.message.head)
        {
            // The head itself stayed buffered; respond only to complete syncs.
            return Ok(());
        }
        self.create_response(target, delivery.message.head)?;
        self.run_consensus(target)
    }

    /// The single event an honest party creates per sync. A corrupted party
    /// forks once (two conflicting events over one self-parent) and then
    /// alternates branches.
    fn create_response(&mut self, target: PartyId, other_parent: EventId) -> Result<(), SimError> {
        let step = self.step;
        let ts = step + target.0 as u64;
        let key = self.pki.keypair(target.0).clone();
        let party = &mut self.parties[target.0 as usize];
        let txs: Vec<Vec<u8>> = party.pending_tx.drain(..).collect();
        match &mut party.forker {
            None => {
                let ev = Arc::new(Event::new_signed(
                    &key,
                    ts,
                    txs,
                    Some(party.tip),
                    Some(other_parent),
                ));
                party.graph.insert(ev.clone()).expect("own event inserts");
                party.tip = ev.id();
                self.trace.push(created_record(step, &party.graph, &ev));
            }
            Some(f) if !f.forked => {
                // First response: create the fork.
                let left = Arc::new(Event::new_signed(
                    &key,
                    ts,
                    txs,
                    Some(party.tip),
                    Some(other_parent),
                ));
                let mut marker = b"fork:".to_vec();
                marker.extend_from_slice(&step.to_be_bytes());
                let right = Arc::new(Event::new_signed(
                    &key,
                    ts,
                    vec![marker],
                    Some(party.tip),
                    Some(other_parent),
                ));
                party
                    .graph
                    .insert(left.clone())
                    .expect("fork branch inserts");
                party
                    .graph
                    .insert(right.clone())
                    .expect("fork branch inserts");
                f.branch_tips = [left.id(), right.id()];
                f.forked = true;
                f.responses = 1;
                party.tip = left.id();
                let g = &party.graph;
                self.trace.push(created_record(step, g, &left));
                self.trace.push(created_record(step, g, &right));
            }
            Some(f) => {
                let branch = (f.responses % 2) as usize;
                f.responses += 1;
                let ev = Arc::new(Event::new_signed(
                    &key,
                    ts,
                    txs,
                    Some(f.branch_tips[branch]),
                    Some(other_parent),
                ));
                party.graph.insert(ev.clone()).expect("own event inserts");
                f.branch_tips[branch] = ev.id();
                party.tip = ev.id();
                self.trace.push(created_record(step, &party.graph, &ev));
            }
        }
        Ok(())
    }

    fn run_consensus(&mut self, target: PartyId) -> Result<(), SimError> {
        let step = self.step;
        let corrupted = self.parties[target.0 as usize].is_corrupted();
        let party = &mut self.parties[target.0 as usize];
        let decided = consensus::decide_fame(&mut party.graph);
        for (id, fame) in &decided {
            self.trace.push(TraceRecord::FameDecided {
                step,
                party: target.0,
                event: id.to_hex(),
                round: party.graph.round_of(*id).unwrap(),
                fame: match fame {
                    Fame::Famous => "famous".into(),
                    Fame::NotFamous => "not-famous".into(),
                    Fame::Undecided => unreachable!("decided fame"),
                },
            });
        }
        let batch = consensus::find_order(&mut party.graph);
        if batch.is_empty() {
            return Ok(());
        }
        let base = party.log.len();
        party
            .log
            .commit(&batch, &party.graph)
            .map_err(|source| SimError::Order {
                party: target.0,
                source,
            })?;
        for (i, entry) in batch.iter().enumerate() {
            self.trace.push(TraceRecord::Committed {
                step,
                party: target.0,
                event: entry.event.to_hex(),
                round_received: entry.round_received,
                consensus_timestamp: entry.consensus_timestamp,
                position: (base + i) as u64,
            });
            if let Some(ev) = party.graph.event(entry.event) {
                for tx in &ev.transactions {
                    if self.expected_tx.contains(tx) {
                        party.matched_tx.insert(tx.clone());
                    }
                }
            }
        }
        if !corrupted {
            // Entry-level prefix monitor across honest replicas.
            for (i, entry) in batch.iter().enumerate() {
                let pos = base + i;
                let key = (entry.key(), entry.event, target);
                if pos < self.canonical.keys.len() {
                    let (ck, cid, owner) = self.canonical.keys[pos];
                    if ck != entry.key() || cid != entry.event {
                        self.violation.get_or_insert(ConsistencyViolation {
                            party: target,
                            established_by: owner,
                            position: pos,
                            step,
                        });
                    }
                } else {
                    self.canonical.keys.push(key);
                }
            }
        }
        Ok(())
    }

    /// Deliver everything still in flight, oldest first, with no new
    /// initiations. Every delivery created before this drain is delivered.
    pub fn drain(&mut self) -> Result<(), SimError> {
        while let Some((&id, _)) = self.pending.iter().next() {
            self.step += 1;
            let delivery = self.pending.remove(&id).unwrap();
            self.deliveries_done += 1;
            self.deliver(delivery)?;
        }
        Ok(())
    }

    /// Drive the scheduler for at most `budget` steps.
    pub fn run_steps(&mut self, sched: &mut dyn Scheduler, budget: u64) -> Result<(), SimError> {
        for _ in 0..budget {
            if self.step(sched)? == StepOutcome::Idle {
                break;
            }
        }
        Ok(())
    }

    /// True when every honest party has committed every transaction injected
    /// into honest parties.
    pub fn all_honest_tx_committed(&self) -> bool {
        self.parties
            .iter()
            .filter(|p| !p.is_corrupted())
            .all(|p| p.matched_tx.len() == self.expected_tx.len())
    }

    /// Drive the scheduler until all honest transactions commit or the step
    /// budget runs out, then drain. `Stalled` when the goal was not reached.
    pub fn run_to_completion(&mut self, sched: &mut dyn Scheduler) -> Result<(), SimError> {
        while self.step < self.cfg.max_steps {
            if self.all_honest_tx_committed() {
                break;
            }
            if self.step(sched)? == StepOutcome::Idle {
                break;
            }
        }
        self.drain()?;
        if !self.all_honest_tx_committed() {
            return Err(SimError::Stalled);
        }
        Ok(())
    }

    /// Pairwise prefix comparison of honest committed-transaction logs.
    pub fn check_prefix_consistency(&self) -> PrefixCheck {
        let honest: Vec<(PartyId, &[Vec<u8>])> = self
            .honest_parties()
            .map(|p| (p.id, p.log.committed_tx()))
            .collect();
        prefix_check(&honest)
    }

    /// Highest round reached by any honest replica.
    pub fn max_round(&self) -> u32 {
        self.honest_parties()
            .map(|p| p.graph.max_round())
            .max()
            .unwrap_or(0)
    }

    /// Fewest committed transactions across honest replicas.
    pub fn min_committed_tx(&self) -> usize {
        self.honest_parties()
            .map(|p| p.log.committed_tx().len())
            .min()
            .unwrap_or(0)
    }

    pub fn record_attack_round(
        &mut self,
        round: u32,
        yes: u32,
        no: u32,
        coin: bool,
        supermajority: bool,
    ) {
        self.trace.push(TraceRecord::AttackRound {
            step: self.step,
            round,
            yes,
            no,
            coin,
            supermajority,
        });
    }
}

/// The shorter of any two logs must equal a prefix of the longer.
pub fn prefix_check(logs: &[(PartyId, &[Vec<u8>])]) -> PrefixCheck {
    for (a, (pa, la)) in logs.iter().enumerate() {
        for (pb, lb) in logs.iter().skip(a + 1) {
            let shared = la.len().min(lb.len());
            for k in 0..shared {
                if la[k] != lb[k] {
                    return PrefixCheck::Violation {
                        i: *pa,
                        j: *pb,
                        index: k,
                    };
                }
            }
        }
    }
    PrefixCheck::Ok
}

fn drain_buffer(party: &mut PartyState) -> u32 {
    let mut inserted = 0;
    loop {
        let mut progressed = false;
        let mut keep = Vec::with_capacity(party.buffer.len());
        for (id, ev) in party.buffer.drain(..).collect::<Vec<_>>() {
            match party.graph.insert_known(id, ev.clone()) {
                Ok(InsertOutcome::Inserted) => {
                    inserted += 1;
                    progressed = true;
                }
                Ok(InsertOutcome::Duplicate) => progressed = true,
                Err(crate::error::GraphError::MissingParents(_)) => keep.push((id, ev)),
                Err(_) => {}
            }
        }
        party.buffer = keep;
        if !progressed || party.buffer.is_empty() {
            break;
        }
    }
    inserted
}

fn created_record(step: u64, graph: &Hashgraph, ev: &Arc<Event>) -> TraceRecord {
    let id = ev.id();
    TraceRecord::Created {
        step,
        party: ev.creator.0,
        event: id.to_hex(),
        round: graph.round_of(id).unwrap(),
        witness: graph.is_witness(id).unwrap(),
        timestamp: ev.timestamp,
        self_parent: ev.self_parent.map(|p| p.to_hex()),
        other_parent: ev.other_parent.map(|p| p.to_hex()),
        txs: ev.transactions.iter().map(hex::encode).collect(),
        signature: ev.signature.to_hex(),
    }
}

/// Evenly spaced unique payloads injected into honest parties round-robin.
pub fn default_tx_schedule(
    cfg_n: u32,
    corrupted: &BTreeSet<u32>,
    count: u32,
    spacing: u64,
) -> Vec<TxInjection> {
    let honest: Vec<u32> = (0..cfg_n).filter(|p| !corrupted.contains(p)).collect();
    (0..count)
        .map(|i| TxInjection {
            step: 1 + i as u64 * spacing,
            party: honest[i as usize % honest.len()],
            payload: format!("tx-{i:04}").into_bytes(),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use scheduler::{FairScheduler, RandomScheduler, SchedulerRegistry};

    fn config(n: u32, seed: u64) -> SimConfig {
        SimConfig {
            n,
            corrupted: BTreeSet::new(),
            coin_period: 10,
            seed,
            max_steps: 20_000,
            tx_schedule: Vec::new(),
        }
    }

    #[test]
    fn config_rejects_corruption_bound() {
        let cfg = config(3, 1).with_tail_corruption(1);
        assert!(matches!(cfg.validate(), Err(SimError::InvalidConfig(_))));
        let cfg = config(4, 1).with_tail_corruption(1);
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn fresh_party_syncs_exactly_its_genesis() {
        let sim = Simulation::new(config(3, 2)).unwrap();
        // All initial multicasts carry one event: the sender's genesis.
        for p in sim.pending.values() {
            assert_eq!(p.message.events.len(), 1);
            assert_eq!(p.message.events[0].0, p.message.head);
            assert!(p.message.events[0].1.is_genesis());
        }
        assert_eq!(sim.pending_count(), 6);
    }

    #[test]
    fn first_delivery_creates_one_event_with_right_parents() {
        let mut sim = Simulation::new(config(2, 3)).unwrap();
        let g0 = sim.parties[0].tip;
        let g1 = sim.parties[1].tip;
        // Deliver p0's genesis to p1.
        let id = sim
            .pending
            .values()
            .find(|p| p.message.sender == PartyId(0) && p.target == PartyId(1))
            .unwrap()
            .id;
        sim.step += 1;
        let d = sim.pending.remove(&id).unwrap();
        sim.deliver(d).unwrap();
        let tip = sim.parties[1].tip;
        assert_ne!(tip, g1);
        let ev = sim.parties[1].graph.event(tip).unwrap();
        assert_eq!(ev.self_parent, Some(g1));
        assert_eq!(ev.other_parent, Some(g0));

        // Redelivering the same genesis creates nothing.
        let id2 = sim
            .pending
            .values()
            .find(|p| p.message.sender == PartyId(0) && p.target == PartyId(1))
            .map(|p| p.id);
        if let Some(id2) = id2 {
            sim.step += 1;
            let d2 = sim.pending.remove(&id2).unwrap();
            sim.deliver(d2).unwrap();
            assert_eq!(sim.parties[1].tip, tip);
        }
    }

    #[test]
    fn sync_after_insertions_is_ancestor_closed() {
        let mut sim = Simulation::new(config(3, 4)).unwrap();
        let mut sched = FairScheduler::new();
        sim.run_steps(&mut sched, 40).unwrap();
        sim.enqueue_sync(PartyId(0), PartyId(1));
        let delivery = sim.pending.values().last().unwrap();
        let msg = &delivery.message;
        assert_eq!(msg.events.last().unwrap().0, msg.head);
        assert_eq!(msg.head, sim.parties[0].tip);
        // Closure: every parent of every message event is in the message.
        let ids: std::collections::HashSet<EventId> = msg.events.iter().map(|e| e.0).collect();
        for (_, ev) in &msg.events {
            for p in [ev.self_parent, ev.other_parent].into_iter().flatten() {
                assert!(ids.contains(&p));
            }
        }
    }

    #[test]
    fn buffered_event_drains_when_parents_arrive() {
        let mut sim = Simulation::new(config(2, 5)).unwrap();
        // Build p0 a second event by delivering p1's genesis.
        let id = sim
            .pending
            .values()
            .find(|p| p.message.sender == PartyId(1) && p.target == PartyId(0))
            .unwrap()
            .id;
        sim.step += 1;
        let d = sim.pending.remove(&id).unwrap();
        sim.deliver(d).unwrap();
        let child = sim.parties[0].graph.event_arc(sim.parties[0].tip).unwrap();
        // p1 already holds its own genesis (the other parent); the missing
        // ancestor is p0's genesis, the child's self-parent.
        let parent = sim.parties[0]
            .graph
            .event_arc(child.self_parent.unwrap())
            .unwrap();
        // Hand p1 the child without its other parent: buffered.
        let mut p1 = &mut sim.parties[1];
        let before = p1.graph.len();
        let partial = SyncMessage {
            sender: PartyId(0),
            events: vec![(child.id(), child.clone())],
            head: child.id(),
        };
        sim.step += 1;
        sim.deliver(PendingDelivery {
            id: 999_999,
            message: partial,
            target: PartyId(1),
        })
        .unwrap();
        p1 = &mut sim.parties[1];
        assert_eq!(p1.graph.len(), before);
        assert_eq!(p1.buffer.len(), 1);
        // Now the missing ancestor arrives; the buffer drains eagerly.
        sim.step += 1;
        sim.deliver(PendingDelivery {
            id: 999_998,
            message: SyncMessage {
                sender: PartyId(0),
                events: vec![(parent.id(), parent.clone()), (child.id(), child.clone())],
                head: child.id(),
            },
            target: PartyId(1),
        })
        .unwrap();
        assert!(sim.parties[1].buffer.is_empty());
        assert!(sim.parties[1].graph.contains(child.id()));
    }

    #[test]
    fn same_seed_yields_identical_traces() {
        let mk = |seed| {
            let mut cfg = config(4, seed);
            cfg.tx_schedule = default_tx_schedule(4, &cfg.corrupted, 6, 3);
            let mut sim = Simulation::new(cfg).unwrap();
            let mut sched = RandomScheduler;
            sim.run_steps(&mut sched, 300).unwrap();
            trace::to_jsonl(sim.trace())
        };
        assert_eq!(mk(11), mk(11));
        assert_ne!(mk(11), mk(12));
    }

    #[test]
    fn fair_run_commits_all_transactions() {
        let mut cfg = config(4, 7);
        cfg.tx_schedule = default_tx_schedule(4, &cfg.corrupted, 8, 2);
        let mut sim = Simulation::new(cfg).unwrap();
        let mut sched = FairScheduler::new();
        sim.run_to_completion(&mut sched).unwrap();
        assert!(sim.all_honest_tx_committed());
        assert_eq!(sim.check_prefix_consistency(), PrefixCheck::Ok);
        assert!(sim.violation().is_none());
        assert_eq!(sim.pending_count(), 0, "drain delivered everything");
    }

    #[test]
    fn forked_sender_shows_different_branches_to_different_targets() {
        let mut cfg = config(4, 13).with_tail_corruption(1);
        cfg.tx_schedule = default_tx_schedule(4, &cfg.corrupted, 4, 3);
        let mut sim = Simulation::new(cfg).unwrap();
        let mut sched = FairScheduler::new();
        // Run until the forker has created its two branches.
        while sim.parties[3].forker.as_ref().is_none_or(|f| !f.forked) {
            sim.step(&mut sched).unwrap();
        }
        let tips = sim.parties[3].forker.as_ref().unwrap().branch_tips;
        assert_ne!(tips[0], tips[1]);
        assert_eq!(sim.parties[3].graph.forks_by(PartyId(3)).len(), 1);
        // Branch choice is keyed by target parity; each sync hides the
        // other branch.
        sim.enqueue_sync(PartyId(3), PartyId(0));
        sim.enqueue_sync(PartyId(3), PartyId(1));
        let mut msgs = sim.pending.values().rev().take(2).collect::<Vec<_>>();
        msgs.reverse();
        assert_eq!(msgs[0].message.head, tips[0]);
        assert_eq!(msgs[1].message.head, tips[1]);
        for (m, other) in [(&msgs[0], tips[1]), (&msgs[1], tips[0])] {
            assert!(m.message.events.iter().all(|(id, _)| *id != other));
        }
    }

    #[test]
    fn forkers_fork_and_honest_replicas_stay_consistent() {
        let mut cfg = config(4, 9).with_tail_corruption(1);
        cfg.tx_schedule = default_tx_schedule(4, &cfg.corrupted, 6, 3);
        let mut sim = Simulation::new(cfg).unwrap();
        let mut sched = RandomScheduler;
        sim.run_steps(&mut sched, 600).unwrap();
        sim.drain().unwrap();
        // The forker produced an observable fork.
        let forks = sim
            .honest_parties()
            .map(|p| p.graph.forks_by(PartyId(3)).len())
            .max()
            .unwrap();
        assert!(forks > 0, "corrupted party must have forked");
        // Honest parties never fork.
        for p in sim.honest_parties() {
            for honest in (0..3).map(PartyId) {
                assert!(p.graph.forks_by(honest).is_empty());
            }
        }
        assert_eq!(sim.check_prefix_consistency(), PrefixCheck::Ok);
        assert!(sim.violation().is_none());
    }

    #[test]
    fn prefix_checker_pinpoints_divergence() {
        let tx = |s: &str| s.as_bytes().to_vec();
        let a = vec![tx("a")];
        let ab = vec![tx("a"), tx("b")];
        let ac = vec![tx("a"), tx("c")];
        assert_eq!(
            prefix_check(&[(PartyId(0), &a), (PartyId(1), &a)]),
            PrefixCheck::Ok
        );
        assert_eq!(
            prefix_check(&[(PartyId(0), &a), (PartyId(1), &ab)]),
            PrefixCheck::Ok
        );
        assert_eq!(
            prefix_check(&[(PartyId(0), &ab), (PartyId(1), &ac)]),
            PrefixCheck::Violation {
                i: PartyId(0),
                j: PartyId(1),
                index: 1
            }
        );
    }

    #[test]
    fn registry_resolves_builtin_names() {
        let reg = SchedulerRegistry::builtin();
        assert_eq!(reg.names(), vec!["fair", "random"]);
        let cfg = config(4, 0);
        assert!(reg.create("fair", &cfg).is_ok());
        assert!(reg.create("random", &cfg).is_ok());
        assert!(reg.create("nope", &cfg).is_err());
    }
}
