//! The hashgraph: an append-only DAG of events closed under ancestry, plus
//! the seeing and strongly-seeing predicates that all consensus logic
//! consumes.
//!
//! Every event carries an ancestor bitset over arena indices, so ancestry is
//! a bit test. Fork observation is tracked exactly with a per-creator bit per
//! event plus, for creators without an observed fork, the unique maximal
//! ancestor by that creator ("tip"): when an event is inserted the tips of
//! its two parents either chain up (no fork) or are incomparable (the fork is
//! observed from here on).

use crate::bits::BitSet;
use crate::consensus::{ElectionState, OrderState};
use crate::crypto::Pki;
use crate::error::GraphError;
use crate::event::{Event, EventId, PartyId};
use std::collections::HashMap;
use std::sync::Arc;

/// Result of inserting an event that passed validation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InsertOutcome {
    Inserted,
    Duplicate,
}

/// Fame of a witness. Transitions only away from `Undecided`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fame {
    Undecided,
    Famous,
    NotFamous,
}

/// A pair of ancestry-incomparable events by one creator: proof of
/// corruption.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ForkPair {
    pub left: EventId,
    pub right: EventId,
}

/// Outcome of comparing two hashgraphs on their shared events.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Consistency {
    Consistent,
    Divergent(EventId),
}

pub(crate) struct StoredEvent {
    pub event: Arc<Event>,
    pub id: EventId,
    pub self_parent: Option<u32>,
    /// Reflexive ancestor set over arena indices.
    pub ancestors: BitSet,
    /// Per-creator bit: does this event observe a fork by that creator?
    pub fork_observed: BitSet,
    /// For creators without an observed fork: the maximal ancestor by them.
    pub tips: Vec<Option<u32>>,
    pub round: u32,
    pub is_witness: bool,
    pub fame: Fame,
    pub fame_decided_in_round: Option<u32>,
    pub round_received: Option<u32>,
    pub consensus_timestamp: Option<u64>,
    pub committed: bool,
    /// Next candidate round for the received-round search.
    pub next_receive_round: u32,
}

/// One party's view of the gossip history.
pub struct Hashgraph {
    owner: PartyId,
    n: usize,
    coin_period: u32,
    pki: Arc<Pki>,
    pub(crate) events: Vec<StoredEvent>,
    index: HashMap<EventId, u32>,
    by_creator: Vec<Vec<u32>>,
    fork_pairs: Vec<Vec<(u32, u32)>>,
    /// Witnesses per round, insertion order. Index 0 is round 1.
    pub(crate) witnesses_by_round: Vec<Vec<u32>>,
    pub(crate) undecided_by_round: Vec<u32>,
    pub(crate) election: ElectionState,
    pub(crate) order: OrderState,
}

impl Hashgraph {
    pub fn new(owner: PartyId, n: usize, coin_period: u32, pki: Arc<Pki>) -> Hashgraph {
        assert!(n >= 2, "need at least two parties");
        assert!(coin_period >= 2, "coin period must be at least 2");
        Hashgraph {
            owner,
            n,
            coin_period,
            pki,
            events: Vec::new(),
            index: HashMap::new(),
            by_creator: vec![Vec::new(); n],
            fork_pairs: vec![Vec::new(); n],
            witnesses_by_round: Vec::new(),
            undecided_by_round: Vec::new(),
            election: ElectionState::default(),
            order: OrderState::default(),
        }
    }

    pub fn owner(&self) -> PartyId {
        self.owner
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn coin_period(&self) -> u32 {
        self.coin_period
    }

    pub fn pki(&self) -> Arc<Pki> {
        self.pki.clone()
    }

    /// Smallest integer strictly greater than `2n/3`.
    pub fn quorum(&self) -> usize {
        2 * self.n / 3 + 1
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn contains(&self, id: EventId) -> bool {
        self.index.contains_key(&id)
    }

    pub fn event(&self, id: EventId) -> Option<&Event> {
        self.index
            .get(&id)
            .map(|&i| &*self.events[i as usize].event)
    }

    pub fn event_arc(&self, id: EventId) -> Option<Arc<Event>> {
        self.index
            .get(&id)
            .map(|&i| self.events[i as usize].event.clone())
    }

    /// All event ids in insertion order (parents before children).
    pub fn event_ids(&self) -> impl Iterator<Item = EventId> + '_ {
        self.events.iter().map(|s| s.id)
    }

    /// All events with their ids, insertion order, without per-event lookups.
    pub fn events_with_ids(&self) -> impl Iterator<Item = (EventId, Arc<Event>)> + '_ {
        self.events.iter().map(|s| (s.id, s.event.clone()))
    }

    pub fn events_by(&self, creator: PartyId) -> impl Iterator<Item = EventId> + '_ {
        self.by_creator[creator.0 as usize]
            .iter()
            .map(|&i| self.events[i as usize].id)
    }

    /// The creator's most recently inserted event, if any.
    pub fn latest_by(&self, creator: PartyId) -> Option<EventId> {
        self.by_creator[creator.0 as usize]
            .last()
            .map(|&i| self.events[i as usize].id)
    }

    /// The reflexive ancestor closure of `head`, in insertion order (parents
    /// before children). Empty when `head` is unknown.
    pub fn ancestor_closure(&self, head: EventId) -> Vec<(EventId, Arc<Event>)> {
        let Ok(h) = self.idx(head) else {
            return Vec::new();
        };
        let bits = &self.events[h as usize].ancestors;
        (0..=h)
            .filter(|&i| bits.get(i as usize))
            .map(|i| {
                (
                    self.events[i as usize].id,
                    self.events[i as usize].event.clone(),
                )
            })
            .collect()
    }

    pub fn round_of(&self, id: EventId) -> Result<u32, GraphError> {
        Ok(self.stored(id)?.round)
    }

    pub fn is_witness(&self, id: EventId) -> Result<bool, GraphError> {
        Ok(self.stored(id)?.is_witness)
    }

    pub fn fame_of(&self, id: EventId) -> Result<Fame, GraphError> {
        Ok(self.stored(id)?.fame)
    }

    /// Round of the witness whose supermajority observation decided this
    /// event's fame, when decided.
    pub fn fame_decided_in_round(&self, id: EventId) -> Result<Option<u32>, GraphError> {
        Ok(self.stored(id)?.fame_decided_in_round)
    }

    pub fn round_received_of(&self, id: EventId) -> Result<Option<u32>, GraphError> {
        Ok(self.stored(id)?.round_received)
    }

    pub fn consensus_timestamp_of(&self, id: EventId) -> Result<Option<u64>, GraphError> {
        Ok(self.stored(id)?.consensus_timestamp)
    }

    pub fn max_round(&self) -> u32 {
        self.witnesses_by_round.len() as u32
    }

    /// Witness events assigned the given round, in insertion order.
    pub fn witnesses_of_round(&self, round: u32) -> Vec<EventId> {
        self.round_slot(round)
            .map(|slot| slot.iter().map(|&i| self.events[i as usize].id).collect())
            .unwrap_or_default()
    }

    fn round_slot(&self, round: u32) -> Option<&Vec<u32>> {
        if round == 0 {
            return None;
        }
        self.witnesses_by_round.get(round as usize - 1)
    }

    pub(crate) fn stored(&self, id: EventId) -> Result<&StoredEvent, GraphError> {
        self.index
            .get(&id)
            .map(|&i| &self.events[i as usize])
            .ok_or(GraphError::UnknownEvent(id))
    }

    pub(crate) fn idx(&self, id: EventId) -> Result<u32, GraphError> {
        self.index
            .get(&id)
            .copied()
            .ok_or(GraphError::UnknownEvent(id))
    }

    /// Insert a validated event. Parents must already be present; the
    /// signature must verify over the canonical encoding. Round and witness
    /// flag are computed immediately and never change.
    pub fn insert(&mut self, event: Arc<Event>) -> Result<InsertOutcome, GraphError> {
        let id = event.id();
        self.insert_known(id, event)
    }

    /// As [`Hashgraph::insert`] with the id supplied by the caller (a sync
    /// carries ids alongside events). A duplicate id is dropped without
    /// rehashing; a fresh id must hash-match the event content.
    pub fn insert_known(
        &mut self,
        id: EventId,
        event: Arc<Event>,
    ) -> Result<InsertOutcome, GraphError> {
        if self.index.contains_key(&id) {
            return Ok(InsertOutcome::Duplicate);
        }
        if event.creator.0 as usize >= self.n {
            return Err(GraphError::BadSignature(id));
        }
        let bytes = event.canonical_bytes();
        if crate::crypto::hash_bytes(&bytes) != id.0 {
            return Err(GraphError::BadSignature(id));
        }
        if !self.pki.verify(
            event.creator.0,
            &bytes[..bytes.len() - crate::crypto::DIGEST_LEN],
            &event.signature,
        ) {
            return Err(GraphError::BadSignature(id));
        }
        let self_parent = match event.self_parent {
            Some(p) => Some(self.idx(p).map_err(|_| GraphError::MissingParents(id))?),
            None => None,
        };
        let other_parent = match event.other_parent {
            Some(p) => Some(self.idx(p).map_err(|_| GraphError::MissingParents(id))?),
            None => None,
        };

        let idx = self.events.len() as u32;
        let creator = event.creator.0 as usize;

        let mut ancestors = BitSet::with_capacity(idx as usize + 1);
        if let Some(sp) = self_parent {
            ancestors.union_with(&self.events[sp as usize].ancestors);
        }
        if let Some(op) = other_parent {
            ancestors.union_with(&self.events[op as usize].ancestors);
        }
        ancestors.set(idx as usize);

        // New fork pairs introduced by this event: prior events by the same
        // creator that are not its ancestors.
        for &prior in &self.by_creator[creator] {
            if !ancestors.get(prior as usize) {
                self.fork_pairs[creator].push((prior, idx));
            }
        }

        let (fork_observed, mut tips) = self.merge_fork_view(self_parent, other_parent);
        if !fork_observed.get(creator) {
            tips[creator] = Some(idx);
        }

        let stored = StoredEvent {
            event,
            id,
            self_parent,

            ancestors,
            fork_observed,
            tips,
            round: 0,
            is_witness: false,
            fame: Fame::Undecided,
            fame_decided_in_round: None,
            round_received: None,
            consensus_timestamp: None,
            committed: false,
            next_receive_round: 0,
        };
        self.events.push(stored);
        self.index.insert(id, idx);
        // Register under the creator before computing the round: the event
        // itself counts as an intermediary when it strongly sees (an event
        // sees itself).
        self.by_creator[creator].push(idx);

        let (round, is_witness) = self.compute_round(idx, self_parent, other_parent);
        let ev = &mut self.events[idx as usize];
        ev.round = round;
        ev.is_witness = is_witness;
        ev.next_receive_round = round;
        if is_witness {
            while self.witnesses_by_round.len() < round as usize {
                self.witnesses_by_round.push(Vec::new());
                self.undecided_by_round.push(0);
            }
            self.witnesses_by_round[round as usize - 1].push(idx);
            self.undecided_by_round[round as usize - 1] += 1;
            self.election.add_witness(idx, round);
        }
        Ok(InsertOutcome::Inserted)
    }

    /// Merge the parents' fork-observation bits and per-creator tips.
    fn merge_fork_view(
        &self,
        self_parent: Option<u32>,
        other_parent: Option<u32>,
    ) -> (BitSet, Vec<Option<u32>>) {
        let mut observed = BitSet::with_capacity(self.n);
        let mut tips = vec![None; self.n];
        match (self_parent, other_parent) {
            (None, None) => {}
            (Some(p), None) | (None, Some(p)) => {
                let pe = &self.events[p as usize];
                observed.union_with(&pe.fork_observed);
                tips.copy_from_slice(&pe.tips);
            }
            (Some(a), Some(b)) => {
                let (ea, eb) = (&self.events[a as usize], &self.events[b as usize]);
                observed.union_with(&ea.fork_observed);
                observed.union_with(&eb.fork_observed);
                for (c, tip) in tips.iter_mut().enumerate() {
                    if observed.get(c) {
                        continue;
                    }
                    *tip = match (ea.tips[c], eb.tips[c]) {
                        (None, t) | (t, None) => t,
                        (Some(x), Some(y)) if x == y => Some(x),
                        (Some(x), Some(y)) => {
                            if self.idx_is_ancestor(x, y) {
                                Some(y)
                            } else if self.idx_is_ancestor(y, x) {
                                Some(x)
                            } else {
                                // Incomparable maxima: the fork is observed
                                // from this event onward.
                                observed.set(c);
                                None
                            }
                        }
                    };
                }
            }
        }
        (observed, tips)
    }

    /// Round assignment: max parent round, promoted by one when the event
    /// strongly sees a quorum of that round's witnesses from distinct
    /// creators. Witness flag: no self-parent, or a strictly larger round
    /// than the self-parent's.
    fn compute_round(
        &self,
        idx: u32,
        self_parent: Option<u32>,
        other_parent: Option<u32>,
    ) -> (u32, bool) {
        let parent_round = |p: Option<u32>| p.map_or(0, |i| self.events[i as usize].round);
        let sp_round = parent_round(self_parent);
        let op_round = parent_round(other_parent);
        if self_parent.is_none() && other_parent.is_none() {
            return (1, true);
        }
        let r = sp_round.max(op_round);
        let promoted = self.strongly_seen_witness_creators(idx, r) >= self.quorum();
        let round = if promoted { r + 1 } else { r };
        let is_witness = self_parent.is_none() || round > sp_round;
        (round, is_witness)
    }

    /// Number of distinct creators with a round-`r` witness strongly seen by
    /// `idx`.
    fn strongly_seen_witness_creators(&self, idx: u32, round: u32) -> usize {
        let Some(slot) = self.round_slot(round) else {
            return 0;
        };
        let mut seen = vec![false; self.n];
        let mut count = 0;
        for &w in slot {
            let c = self.events[w as usize].event.creator.0 as usize;
            if !seen[c] && self.idx_strongly_sees(idx, w) {
                seen[c] = true;
                count += 1;
            }
        }
        count
    }

    pub(crate) fn idx_is_ancestor(&self, a: u32, d: u32) -> bool {
        self.events[d as usize].ancestors.get(a as usize)
    }

    pub(crate) fn idx_sees(&self, x: u32, y: u32) -> bool {
        let creator = self.events[y as usize].event.creator.0 as usize;
        self.idx_is_ancestor(y, x) && !self.events[x as usize].fork_observed.get(creator)
    }

    /// Strongly seeing: a quorum of distinct creators each contribute an
    /// event seen by `x` that sees `y`.
    pub(crate) fn idx_strongly_sees(&self, x: u32, y: u32) -> bool {
        let target_creator = self.events[y as usize].event.creator.0 as usize;
        let xe = &self.events[x as usize];
        let mut count = 0;
        for c in 0..self.n {
            if count + (self.n - c) < self.quorum() {
                break;
            }
            if xe.fork_observed.get(c) {
                continue;
            }
            // Newest-first scan: recent events are the likeliest to both be
            // ancestors of x and have y in their ancestry.
            for &s in self.by_creator[c].iter().rev() {
                if xe.ancestors.get(s as usize)
                    && self.events[s as usize].ancestors.get(y as usize)
                    && !self.events[s as usize].fork_observed.get(target_creator)
                {
                    count += 1;
                    break;
                }
            }
        }
        count >= self.quorum()
    }

    /// True iff `ancestor` is reachable from `descendant` via parent edges.
    /// Reflexive: every event is its own ancestor.
    pub fn is_ancestor(&self, ancestor: EventId, descendant: EventId) -> Result<bool, GraphError> {
        let a = self.idx(ancestor)?;
        let d = self.idx(descendant)?;
        Ok(self.idx_is_ancestor(a, d))
    }

    /// As `is_ancestor`, restricted to self-parent edges. Reflexive.
    pub fn is_self_ancestor(
        &self,
        ancestor: EventId,
        descendant: EventId,
    ) -> Result<bool, GraphError> {
        let a = self.idx(ancestor)?;
        let mut cur = self.idx(descendant)?;
        loop {
            if cur == a {
                return Ok(true);
            }
            if cur < a {
                return Ok(false);
            }
            match self.events[cur as usize].self_parent {
                Some(p) => cur = p,
                None => return Ok(false),
            }
        }
    }

    /// `x` sees `y`: `y` is an ancestor of `x` and `x` observes no fork by
    /// `y`'s creator.
    pub fn sees(&self, x: EventId, y: EventId) -> Result<bool, GraphError> {
        let xi = self.idx(x)?;
        let yi = self.idx(y)?;
        Ok(self.idx_sees(xi, yi))
    }

    /// `x` strongly sees `y`: more than `2n/3` distinct creators contribute
    /// intermediate events seen by `x` that each see `y`.
    pub fn strongly_sees(&self, x: EventId, y: EventId) -> Result<bool, GraphError> {
        let xi = self.idx(x)?;
        let yi = self.idx(y)?;
        Ok(self.idx_strongly_sees(xi, yi))
    }

    /// Does `x` observe a fork by `creator` among its ancestors?
    pub fn observes_fork(&self, x: EventId, creator: PartyId) -> Result<bool, GraphError> {
        let xi = self.idx(x)?;
        Ok(self.events[xi as usize]
            .fork_observed
            .get(creator.0 as usize))
    }

    /// All ancestry-incomparable pairs of events by one creator. Empty for
    /// honest creators.
    pub fn forks_by(&self, creator: PartyId) -> Vec<ForkPair> {
        self.fork_pairs
            .get(creator.0 as usize)
            .map(|pairs| {
                pairs
                    .iter()
                    .map(|&(l, r)| ForkPair {
                        left: self.events[l as usize].id,
                        right: self.events[r as usize].id,
                    })
                    .collect()
            })
            .unwrap_or_default()
    }

    /// Two hashgraphs are graph-consistent when every shared event has the
    /// same ancestor subgraph in both. Since ids are digests of the full
    /// encoding and both graphs are ancestor-closed, it suffices that every
    /// shared id stores the same event; a divergence requires a manufactured
    /// digest collision.
    pub fn graph_consistent(&self, other: &Hashgraph) -> Consistency {
        for stored in &self.events {
            if let Some(theirs) = other.event(stored.id) {
                if *theirs != *stored.event {
                    return Consistency::Divergent(stored.id);
                }
            }
        }
        Consistency::Consistent
    }

    /// Test-support hook: insert under a caller-chosen id without hashing or
    /// signature checks, to manufacture digest collisions for divergence
    /// scenarios. Not part of the protocol surface.
    #[doc(hidden)]
    pub fn insert_with_forged_id(&mut self, id: EventId, event: Event) {
        let self_parent = event
            .self_parent
            .map(|p| self.idx(p).expect("parent present"));
        let other_parent = event
            .other_parent
            .map(|p| self.idx(p).expect("parent present"));
        let idx = self.events.len() as u32;
        let creator = event.creator.0 as usize;
        let mut ancestors = BitSet::with_capacity(idx as usize + 1);
        if let Some(sp) = self_parent {
            ancestors.union_with(&self.events[sp as usize].ancestors);
        }
        if let Some(op) = other_parent {
            ancestors.union_with(&self.events[op as usize].ancestors);
        }
        ancestors.set(idx as usize);
        let (fork_observed, tips) = self.merge_fork_view(self_parent, other_parent);
        self.events.push(StoredEvent {
            event: Arc::new(event),
            id,
            self_parent,

            ancestors,
            fork_observed,
            tips,
            round: 1,
            is_witness: false,
            fame: Fame::Undecided,
            fame_decided_in_round: None,
            round_received: None,
            consensus_timestamp: None,
            committed: false,
            next_receive_round: 1,
        });
        self.index.insert(id, idx);
        self.by_creator[creator].push(idx);
    }
}
