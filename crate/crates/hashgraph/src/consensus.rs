//! The local consensus procedures: fame elections over witnesses, total
//! ordering of received events, and the append-only commit log.
//!
//! Elections are incremental: each witness's vote in each election is a pure
//! function of its fixed ancestry (or its signature in a coin round), so
//! votes are memoized and every (subject, voter) pair is processed once.

use crate::crypto::{middle_bit, Signature};
use crate::error::OrderViolation;
use crate::event::EventId;
use crate::graph::{Fame, Hashgraph};
use std::collections::HashMap;

/// Per-graph election bookkeeping.
///
/// Voters are consumed from an append-only log in insertion order, one
/// cursor per open election. Votes are pure functions of a voter's fixed
/// ancestry (or signature), and any two witnesses observing a deciding
/// supermajority agree, so processing order cannot change an outcome — it
/// only matters that every (subject, voter) pair is checked exactly once.
#[derive(Default)]
pub(crate) struct ElectionState {
    /// (subject witness, voting witness) -> vote.
    votes: HashMap<(u32, u32), bool>,
    /// Witness -> previous-round witnesses it strongly sees.
    strongly_seen_prev: HashMap<u32, Vec<u32>>,
    /// Every witness, in insertion order.
    witness_log: Vec<u32>,
    /// Undecided election subjects.
    subjects: Vec<u32>,
    /// Subject -> consumed prefix of the witness log.
    cursors: HashMap<u32, usize>,
}

struct Decision {
    subject: u32,
    famous: bool,
    decided_in_round: u32,
}

impl ElectionState {
    pub fn add_witness(&mut self, idx: u32, _round: u32) {
        self.witness_log.push(idx);
        self.subjects.push(idx);
        self.cursors.insert(idx, 0);
    }

    /// Memoized vote of witness `voter` in `subject`'s election, computed on
    /// demand from the recursive definition.
    fn vote(&mut self, g: &Hashgraph, subject: u32, voter: u32) -> bool {
        if let Some(&v) = self.votes.get(&(subject, voter)) {
            return v;
        }
        let d = g.events[voter as usize].round - g.events[subject as usize].round;
        debug_assert!(d >= 1);
        let vote = if d == 1 {
            g.idx_sees(voter, subject)
        } else {
            let (v, t) = self.tally(g, subject, voter);
            // Normal rounds and supermajority coin rounds take the tally;
            // split coin rounds flip the signature bit.
            if !d.is_multiple_of(g.coin_period()) || 3 * t > 2 * g.n() {
                v
            } else {
                middle_bit(&g.events[voter as usize].event.signature)
            }
        };
        self.votes.insert((subject, voter), vote);
        vote
    }

    /// Majority vote (true on a tie) and its tally among the previous-round
    /// witnesses `voter` strongly sees.
    fn tally(&mut self, g: &Hashgraph, subject: u32, voter: u32) -> (bool, usize) {
        let members = match self.strongly_seen_prev.get(&voter) {
            Some(m) => m.clone(),
            None => {
                let prev_round = g.events[voter as usize].round - 1;
                let members: Vec<u32> = g
                    .witnesses_by_round
                    .get(prev_round as usize - 1)
                    .map(|slot| {
                        slot.iter()
                            .copied()
                            .filter(|&w| g.idx_strongly_sees(voter, w))
                            .collect()
                    })
                    .unwrap_or_default();
                self.strongly_seen_prev.insert(voter, members.clone());
                members
            }
        };
        let mut yes = 0usize;
        for m in members {
            if self.vote(g, subject, m) {
                yes += 1;
            }
        }
        let total = self.strongly_seen_prev[&voter].len();
        let no = total - yes;
        if yes >= no {
            (true, yes)
        } else {
            (false, no)
        }
    }

    /// Advance every open election over the voters appended since its last
    /// pass.
    fn run(&mut self, g: &Hashgraph) -> Vec<Decision> {
        let mut order: Vec<u32> = self.subjects.clone();
        order.sort_by_key(|&s| (g.events[s as usize].round, s));
        let mut decisions = Vec::new();
        for subject in order {
            let subject_round = g.events[subject as usize].round;
            let mut cursor = self.cursors[&subject];
            let mut decided = None;
            while cursor < self.witness_log.len() {
                let voter = self.witness_log[cursor];
                cursor += 1;
                let voter_round = g.events[voter as usize].round;
                if voter_round <= subject_round {
                    continue;
                }
                let d = voter_round - subject_round;
                if d == 1 {
                    let v = g.idx_sees(voter, subject);
                    self.votes.insert((subject, voter), v);
                    continue;
                }
                let (v, t) = self.tally(g, subject, voter);
                let normal = !d.is_multiple_of(g.coin_period());
                let supermajority = 3 * t > 2 * g.n();
                if normal && supermajority {
                    // Supermajority observed: decide and stop this election.
                    self.votes.insert((subject, voter), v);
                    decided = Some(Decision {
                        subject,
                        famous: v,
                        decided_in_round: voter_round,
                    });
                    break;
                }
                let vote = if normal || supermajority {
                    v
                } else {
                    middle_bit(&g.events[voter as usize].event.signature)
                };
                self.votes.insert((subject, voter), vote);
            }
            match decided {
                Some(d) => {
                    self.subjects.retain(|&s| s != d.subject);
                    self.cursors.remove(&d.subject);
                    decisions.push(d);
                }
                None => {
                    self.cursors.insert(subject, cursor);
                }
            }
        }
        decisions
    }

    fn recorded_vote(&self, subject: u32, voter: u32) -> Option<bool> {
        self.votes.get(&(subject, voter)).copied()
    }
}

/// Ordering bookkeeping: unique-famous-witness sets per fully decided round.
#[derive(Default)]
pub(crate) struct OrderState {
    ufw_cache: HashMap<u32, Vec<u32>>,
    /// Rounds found to have zero unique famous witnesses, skipped for every
    /// candidate. Tracked for observability.
    pub unusable_rounds: Vec<u32>,
}

/// Run every open fame election forward. Returns witnesses newly decided in
/// this call, sorted by (round, creator, id). Idempotent: a decided fame is
/// never revisited.
pub fn decide_fame(graph: &mut Hashgraph) -> Vec<(EventId, Fame)> {
    let mut election = std::mem::take(&mut graph.election);
    let decisions = election.run(graph);
    graph.election = election;
    let mut out = Vec::with_capacity(decisions.len());
    for d in decisions {
        let round;
        {
            let ev = &mut graph.events[d.subject as usize];
            debug_assert_eq!(ev.fame, Fame::Undecided);
            ev.fame = if d.famous {
                Fame::Famous
            } else {
                Fame::NotFamous
            };
            ev.fame_decided_in_round = Some(d.decided_in_round);
            round = ev.round;
        }
        graph.undecided_by_round[round as usize - 1] -= 1;
        let ev = &graph.events[d.subject as usize];
        out.push((
            round,
            ev.event.creator.0,
            ev.id,
            if d.famous {
                Fame::Famous
            } else {
                Fame::NotFamous
            },
        ));
    }
    out.sort_by_key(|&(round, creator, id, _)| (round, creator, id));
    out.into_iter().map(|(_, _, id, fame)| (id, fame)).collect()
}

/// The memoized vote a witness cast in a subject's election, if it has been
/// computed.
pub fn witness_vote(graph: &Hashgraph, subject: EventId, voter: EventId) -> Option<bool> {
    let s = graph.idx(subject).ok()?;
    let v = graph.idx(voter).ok()?;
    graph.election.recorded_vote(s, v)
}

/// Recompute a witness vote from scratch against one replica, independent of
/// that replica's election memo. The subject may be absent from the replica
/// (its round is supplied): ancestry is content-addressed, so an unknown
/// subject is simply not seen and first-round voters vote no.
pub fn recompute_vote(
    graph: &Hashgraph,
    subject: EventId,
    subject_round: u32,
    voter: EventId,
) -> Option<bool> {
    let vi = graph.idx(voter).ok()?;
    if graph.events[vi as usize].round <= subject_round || !graph.events[vi as usize].is_witness {
        return None;
    }
    let subject_idx = graph.idx(subject).ok();
    let mut memo: HashMap<u32, bool> = HashMap::new();
    Some(recompute_rec(
        graph,
        subject_idx,
        subject_round,
        vi,
        &mut memo,
    ))
}

fn recompute_rec(
    g: &Hashgraph,
    subject: Option<u32>,
    subject_round: u32,
    voter: u32,
    memo: &mut HashMap<u32, bool>,
) -> bool {
    if let Some(&v) = memo.get(&voter) {
        return v;
    }
    let d = g.events[voter as usize].round - subject_round;
    let vote = if d == 1 {
        subject.is_some_and(|s| g.idx_sees(voter, s))
    } else {
        let prev = g.events[voter as usize].round - 1;
        let members: Vec<u32> = g
            .witnesses_by_round
            .get(prev as usize - 1)
            .map(|slot| {
                slot.iter()
                    .copied()
                    .filter(|&w| g.idx_strongly_sees(voter, w))
                    .collect()
            })
            .unwrap_or_default();
        let mut yes = 0usize;
        for &m in &members {
            if recompute_rec(g, subject, subject_round, m, memo) {
                yes += 1;
            }
        }
        let no = members.len() - yes;
        let (v, t) = if yes >= no { (true, yes) } else { (false, no) };
        if !d.is_multiple_of(g.coin_period()) || 3 * t > 2 * g.n() {
            v
        } else {
            middle_bit(&g.events[voter as usize].event.signature)
        }
    };
    memo.insert(voter, vote);
    vote
}

/// Famous round-`r` witnesses whose creator has exactly one famous witness
/// that round. A creator with several famous witnesses (fork-enabled) has all
/// of them excluded.
pub fn unique_famous_witnesses(graph: &Hashgraph, round: u32) -> Vec<EventId> {
    unique_famous_idx(graph, round)
        .into_iter()
        .map(|i| graph.events[i as usize].id)
        .collect()
}

fn unique_famous_idx(graph: &Hashgraph, round: u32) -> Vec<u32> {
    let mut famous_per_creator = vec![0u32; graph.n()];
    let witnesses = match round {
        0 => return Vec::new(),
        r => graph
            .witnesses_by_round
            .get(r as usize - 1)
            .cloned()
            .unwrap_or_default(),
    };
    for &w in &witnesses {
        if graph.events[w as usize].fame == Fame::Famous {
            famous_per_creator[graph.events[w as usize].event.creator.0 as usize] += 1;
        }
    }
    witnesses
        .into_iter()
        .filter(|&w| {
            let ev = &graph.events[w as usize];
            ev.fame == Fame::Famous && famous_per_creator[ev.event.creator.0 as usize] == 1
        })
        .collect()
}

/// Rounds that turned out to have zero unique famous witnesses; nothing can
/// receive such a round, which is worth surfacing when it happens.
pub fn unusable_rounds(graph: &Hashgraph) -> &[u32] {
    &graph.order.unusable_rounds
}

/// Largest round `R` such that every witness in rounds `1..=R` has decided
/// fame. Received-round assignment never looks past this.
pub fn decided_round_watermark(graph: &Hashgraph) -> u32 {
    let mut r = 0;
    while (r as usize) < graph.undecided_by_round.len() && graph.undecided_by_round[r as usize] == 0
    {
        r += 1;
    }
    r
}

/// An event placed into the total order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommitEntry {
    pub event: EventId,
    pub round_received: u32,
    pub consensus_timestamp: u64,
    pub whitened: Signature,
}

impl CommitEntry {
    /// The total-order key: round received, then consensus timestamp, then
    /// whitened signature bytes.
    pub fn key(&self) -> (u32, u64, [u8; 32]) {
        (
            self.round_received,
            self.consensus_timestamp,
            self.whitened.0,
        )
    }
}

/// Assign received rounds, consensus timestamps, and whitened signatures to
/// every event that became orderable, and return them as a sorted batch.
pub fn find_order(graph: &mut Hashgraph) -> Vec<CommitEntry> {
    let watermark = decided_round_watermark(graph);
    if watermark == 0 {
        return Vec::new();
    }
    // Freeze unique-famous-witness sets for every fully decided round.
    for r in 1..=watermark {
        if !graph.order.ufw_cache.contains_key(&r) {
            let ufw = unique_famous_idx(graph, r);
            if ufw.is_empty() {
                graph.order.unusable_rounds.push(r);
            }
            graph.order.ufw_cache.insert(r, ufw);
        }
    }

    struct Assignment {
        idx: u32,
        round_received: u32,
        consensus_timestamp: u64,
        whitened: Signature,
    }
    let mut assignments = Vec::new();
    let mut deferred = Vec::new();
    for idx in 0..graph.events.len() as u32 {
        let ev = &graph.events[idx as usize];
        if ev.committed || ev.next_receive_round > watermark {
            continue;
        }
        let mut hit = None;
        for r in ev.next_receive_round..=watermark {
            let ufw = &graph.order.ufw_cache[&r];
            // A round whose famous witnesses all forked away orders nothing.
            if ufw.is_empty() {
                continue;
            }
            if ufw.iter().all(|&w| graph.idx_is_ancestor(idx, w)) {
                hit = Some(r);
                break;
            }
        }
        match hit {
            Some(r) => {
                let ufw = &graph.order.ufw_cache[&r];
                let mut stamps: Vec<u64> = ufw
                    .iter()
                    .map(|&w| {
                        // Earliest self-ancestor of the witness that still
                        // descends from the event being ordered.
                        let mut z = w;
                        while let Some(p) = graph.events[z as usize].self_parent {
                            if graph.idx_is_ancestor(idx, p) {
                                z = p;
                            } else {
                                break;
                            }
                        }
                        graph.events[z as usize].event.timestamp
                    })
                    .collect();
                stamps.sort_unstable();
                let consensus_timestamp = stamps[(stamps.len() - 1) / 2];
                let whitened = ufw
                    .iter()
                    .fold(graph.events[idx as usize].event.signature, |acc, &w| {
                        acc.xor(&graph.events[w as usize].event.signature)
                    });
                assignments.push(Assignment {
                    idx,
                    round_received: r,
                    consensus_timestamp,
                    whitened,
                });
            }
            None => deferred.push(idx),
        }
    }
    for idx in deferred {
        graph.events[idx as usize].next_receive_round = watermark + 1;
    }
    let mut batch = Vec::with_capacity(assignments.len());
    for a in assignments {
        let ev = &mut graph.events[a.idx as usize];
        ev.round_received = Some(a.round_received);
        ev.consensus_timestamp = Some(a.consensus_timestamp);
        ev.committed = true;
        batch.push(CommitEntry {
            event: ev.id,
            round_received: a.round_received,
            consensus_timestamp: a.consensus_timestamp,
            whitened: a.whitened,
        });
    }
    batch.sort_by_key(|e| e.key());
    batch
}

/// A party's totally ordered output.
#[derive(Default)]
pub struct CommitLog {
    entries: Vec<CommitEntry>,
    committed_tx: Vec<Vec<u8>>,
}

impl CommitLog {
    pub fn new() -> CommitLog {
        CommitLog::default()
    }

    /// Append one `find_order` batch. Every key must strictly exceed the log
    /// tail; anything else signals a consensus bug and aborts the run.
    pub fn commit(
        &mut self,
        batch: &[CommitEntry],
        graph: &Hashgraph,
    ) -> Result<(), OrderViolation> {
        for entry in batch {
            if let Some(last) = self.entries.last() {
                if entry.key() <= last.key() {
                    return Err(OrderViolation {
                        position: self.entries.len(),
                    });
                }
            }
            if let Some(ev) = graph.event(entry.event) {
                self.committed_tx.extend(ev.transactions.iter().cloned());
            }
            self.entries.push(entry.clone());
        }
        Ok(())
    }

    pub fn entries(&self) -> &[CommitEntry] {
        &self.entries
    }

    pub fn committed_tx(&self) -> &[Vec<u8>] {
        &self.committed_tx
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::KeyPair;
    use crate::event::Event;
    use crate::testkit::GraphBuilder;

    /// n=4 ladder: every party hears every other genesis through a chain,
    /// so fourth-generation events strongly see all four round-1 witnesses.
    fn ladder_n4() -> GraphBuilder {
        let mut b = GraphBuilder::new(4, 7);
        let g: Vec<_> = (0..4).map(|p| b.genesis(p)).collect();
        let mut tips = g.clone();
        // Three full gossip sweeps.
        for _ in 0..3 {
            for p in 0..4usize {
                let other = tips[(p + 1) % 4];
                tips[p] = b.child(p as u32, tips[p], other);
            }
        }
        b
    }

    #[test]
    fn genesis_round_and_witness() {
        let mut b = GraphBuilder::new(2, 0);
        let g0 = b.genesis(0);
        assert_eq!(b.graph.round_of(g0).unwrap(), 1);
        assert!(b.graph.is_witness(g0).unwrap());
    }

    #[test]
    fn event_below_quorum_stays_in_round() {
        // n=4 needs 3 strongly seen round-1 witnesses; a chain through two
        // creators reaches only 2.
        let mut b = GraphBuilder::new(4, 1);
        let g: Vec<_> = (0..4).map(|p| b.genesis(p)).collect();
        let a = b.child(1, g[1], g[0]);
        let x = b.child(0, g[0], a);
        assert_eq!(b.graph.round_of(x).unwrap(), 1);
        assert!(!b.graph.is_witness(x).unwrap(), "same round as self-parent");
    }

    #[test]
    fn promotion_past_quorum() {
        let b = ladder_n4();
        assert!(b.graph.max_round() >= 2, "ladder must reach round 2");
        let w2 = b.graph.witnesses_of_round(2);
        assert!(!w2.is_empty());
        for w in &w2 {
            assert!(b.graph.is_witness(*w).unwrap());
        }
    }

    #[test]
    fn first_election_round_votes_by_sight() {
        let mut b = ladder_n4();
        decide_fame(&mut b.graph);
        let r1 = b.graph.witnesses_of_round(1);
        let r2 = b.graph.witnesses_of_round(2);
        for &x in &r1 {
            for &y in &r2 {
                if let Some(v) = witness_vote(&b.graph, x, y) {
                    assert_eq!(v, b.graph.sees(y, x).unwrap());
                }
            }
        }
    }

    #[test]
    fn fame_decides_and_is_idempotent() {
        let mut b = ladder_n4();
        // Extend enough rounds for round-1 elections to conclude.
        let mut tips: Vec<_> = (0..4)
            .map(|p| b.graph.latest_by(crate::event::PartyId(p)).unwrap())
            .collect();
        for _ in 0..6 {
            for p in 0..4usize {
                let other = tips[(p + 1) % 4];
                tips[p] = b.child(p as u32, tips[p], other);
            }
        }
        let first = decide_fame(&mut b.graph);
        assert!(
            first.iter().any(|(_, f)| *f == Fame::Famous),
            "some round-1 witness becomes famous"
        );
        let again = decide_fame(&mut b.graph);
        assert!(again.is_empty(), "re-running decides nothing new");
        for (id, fame) in &first {
            assert_eq!(b.graph.fame_of(*id).unwrap(), *fame);
        }
    }

    #[test]
    fn round_received_and_commit_flow() {
        let mut b = ladder_n4();
        let mut tips: Vec<_> = (0..4)
            .map(|p| b.graph.latest_by(crate::event::PartyId(p)).unwrap())
            .collect();
        let mut log = CommitLog::new();
        for _ in 0..8 {
            for p in 0..4usize {
                let other = tips[(p + 1) % 4];
                tips[p] = b.child(p as u32, tips[p], other);
                decide_fame(&mut b.graph);
                let batch = find_order(&mut b.graph);
                log.commit(&batch, &b.graph).unwrap();
            }
        }
        assert!(!log.is_empty(), "ordering must commit something");
        // Keys strictly increase along the log.
        for pair in log.entries().windows(2) {
            assert!(pair[0].key() < pair[1].key());
        }
        // Write-once metadata matches the log.
        for entry in log.entries() {
            assert_eq!(
                b.graph.round_received_of(entry.event).unwrap(),
                Some(entry.round_received)
            );
        }
    }

    #[test]
    fn no_round_fully_decided_means_no_entries() {
        let mut b = ladder_n4();
        // Round-1 fames cannot be decided yet with only two rounds present.
        decide_fame(&mut b.graph);
        let batch = find_order(&mut b.graph);
        assert!(batch.is_empty());
    }

    #[test]
    fn lower_median_of_odd_and_even_sets() {
        // Odd: {10, 20, 30} -> 20. Even: {10, 20, 30, 40} -> 20.
        let stamps = |mut v: Vec<u64>| {
            v.sort_unstable();
            v[(v.len() - 1) / 2]
        };
        assert_eq!(stamps(vec![30, 10, 20]), 20);
        assert_eq!(stamps(vec![40, 10, 30, 20]), 20);
    }

    #[test]
    fn whitened_signature_xor() {
        let x = Signature([0xf0; 32]);
        let a = Signature([0x0f; 32]);
        let b = Signature([0xff; 32]);
        let whitened = x.xor(&a).xor(&b);
        assert_eq!(whitened.0[0], 0x00);
    }

    #[test]
    fn commit_rejects_key_regression() {
        let b = ladder_n4();
        let mk = |rr, ts, byte| CommitEntry {
            event: EventId(crate::crypto::hash_bytes(&[byte])),
            round_received: rr,
            consensus_timestamp: ts,
            whitened: Signature([byte; 32]),
        };
        let mut log = CommitLog::new();
        log.commit(&[mk(1, 5, 1), mk(1, 5, 2)], &b.graph).unwrap();
        // Equal-key and lower-key entries are violations.
        let err = log.commit(&[mk(1, 5, 2)], &b.graph).unwrap_err();
        assert_eq!(err.position, 2);
        assert!(log.commit(&[mk(1, 4, 9)], &b.graph).is_err());
        // Ties in (round, timestamp) order by whitened bytes.
        log.commit(&[mk(1, 5, 3), mk(2, 0, 0)], &b.graph).unwrap();
        assert_eq!(log.len(), 4);
        // Empty batch leaves the log unchanged.
        log.commit(&[], &b.graph).unwrap();
        assert_eq!(log.len(), 4);
    }

    #[test]
    fn forked_creator_is_excluded_from_unique_famous() {
        // Directly exercise the uniqueness filter by marking fames.
        let mut b = GraphBuilder::new(4, 3);
        let g: Vec<_> = (0..4).map(|p| b.genesis(p)).collect();
        // Two parentless events cannot exist; fork via shared self-parent.
        let z1 = b.child_with_tx(0, g[0], g[1], vec![b"a".to_vec()]);
        let z2 = b.child_with_tx(0, g[0], g[2], vec![b"b".to_vec()]);
        // Manually decide fames for the test.
        for id in [g[0], z1, z2] {
            let idx = b.graph.idx(id).unwrap() as usize;
            b.graph.events[idx].fame = Fame::Famous;
        }
        // z1/z2 are round-1 non-witnesses, so seed the uniqueness check at
        // round 1 with the geneses only: g0 famous once -> included.
        let ufw = unique_famous_witnesses(&b.graph, 1);
        assert!(ufw.contains(&g[0]));
        // Now fake a second famous witness for creator 0 in round 1 by
        // flagging z1 as a witness in the same round.
        let z1_idx = b.graph.idx(z1).unwrap();
        b.graph.events[z1_idx as usize].is_witness = true;
        b.graph.witnesses_by_round[0].push(z1_idx);
        b.graph.undecided_by_round[0] += 0;
        let ufw = unique_famous_witnesses(&b.graph, 1);
        assert!(!ufw.contains(&g[0]), "forked-famous creator excluded");
        assert!(!ufw.contains(&z1));
    }

    #[test]
    fn bad_event_constructor_rejects_half_parents() {
        let k = KeyPair::derive(0, 0);
        let id = EventId(crate::crypto::hash_bytes(b"x"));
        let result = std::panic::catch_unwind(|| Event::new_signed(&k, 0, vec![], Some(id), None));
        assert!(result.is_err());
    }
}
