//! Fixtures and reference oracles for tests.
//!
//! The oracle functions here recompute ancestry, forks, seeing, and strong
//! seeing directly from parent pointers by graph search, independently of the
//! incremental bookkeeping inside [`Hashgraph`]. Acceptance checks compare
//! the two on randomly generated DAGs.

use crate::crypto::Pki;
use crate::event::{Event, EventId, PartyId};
use crate::graph::Hashgraph;
use std::collections::{HashMap, HashSet};
use std::sync::Arc;

/// Builds well-formed signed events directly into one graph.
pub struct GraphBuilder {
    pub graph: Hashgraph,
    pub pki: Arc<Pki>,
    clock: u64,
}

impl GraphBuilder {
    pub fn new(n: usize, key_seed: u64) -> GraphBuilder {
        Self::with_coin_period(n, key_seed, 10)
    }

    pub fn with_coin_period(n: usize, key_seed: u64, coin_period: u32) -> GraphBuilder {
        let pki = Arc::new(Pki::new(n, key_seed));
        GraphBuilder {
            graph: Hashgraph::new(PartyId(0), n, coin_period, pki.clone()),
            pki,
            clock: 0,
        }
    }

    fn next_ts(&mut self) -> u64 {
        self.clock += 1;
        self.clock
    }

    pub fn genesis(&mut self, party: u32) -> EventId {
        let ts = self.next_ts();
        let ev = Event::new_signed(self.pki.keypair(party), ts, vec![], None, None);
        let id = ev.id();
        self.graph.insert(Arc::new(ev)).unwrap();
        id
    }

    pub fn child(&mut self, party: u32, self_parent: EventId, other_parent: EventId) -> EventId {
        self.child_with_tx(party, self_parent, other_parent, vec![])
    }

    pub fn child_with_tx(
        &mut self,
        party: u32,
        self_parent: EventId,
        other_parent: EventId,
        txs: Vec<Vec<u8>>,
    ) -> EventId {
        let ts = self.next_ts();
        let ev = Event::new_signed(
            self.pki.keypair(party),
            ts,
            txs,
            Some(self_parent),
            Some(other_parent),
        );
        let id = ev.id();
        self.graph.insert(Arc::new(ev)).unwrap();
        id
    }

    /// Sign an event without inserting it.
    pub fn make_event(
        &mut self,
        party: u32,
        self_parent: EventId,
        other_parent: EventId,
        txs: Vec<Vec<u8>>,
    ) -> Event {
        let ts = self.next_ts();
        Event::new_signed(
            self.pki.keypair(party),
            ts,
            txs,
            Some(self_parent),
            Some(other_parent),
        )
    }
}

/// Reference oracle: recomputes ancestry, forks, seeing, and strong seeing
/// directly from parent pointers by graph search and pairwise enumeration,
/// with tables precomputed once per graph.
pub struct OracleGraph {
    pub n: usize,
    ids: Vec<EventId>,
    creators: Vec<u32>,
    /// anc[x] is x's reflexive ancestor membership vector.
    anc: Vec<Vec<bool>>,
    /// Incomparable same-creator pairs, per creator.
    forks: Vec<Vec<(usize, usize)>>,
    /// observed[x][c]: does x descend from both sides of a fork by c?
    observed: Vec<Vec<bool>>,
}

impl OracleGraph {
    /// Capture the events of a hashgraph (insertion order) into the plain
    /// reference form.
    pub fn from_graph(graph: &Hashgraph) -> OracleGraph {
        let n = graph.n();
        let mut index: HashMap<EventId, usize> = HashMap::new();
        let mut ids = Vec::new();
        let mut creators = Vec::new();
        let mut parents: Vec<Vec<usize>> = Vec::new();
        for id in graph.event_ids() {
            let ev = graph.event(id).unwrap();
            let ps = [ev.self_parent, ev.other_parent]
                .into_iter()
                .flatten()
                .map(|p| index[&p])
                .collect();
            index.insert(id, ids.len());
            ids.push(id);
            creators.push(ev.creator.0);
            parents.push(ps);
        }
        let count = ids.len();
        // Reflexive ancestor sets by depth-first search, per event.
        let mut anc = vec![vec![false; count]; count];
        for (x, row) in anc.iter_mut().enumerate() {
            let mut stack = vec![x];
            while let Some(e) = stack.pop() {
                if !row[e] {
                    row[e] = true;
                    stack.extend(&parents[e]);
                }
            }
        }
        // Forks by pairwise enumeration over each creator's events.
        let mut forks = vec![Vec::new(); n];
        for c in 0..n as u32 {
            let members: Vec<usize> = (0..count).filter(|&e| creators[e] == c).collect();
            for (i, &a) in members.iter().enumerate() {
                for &b in &members[i + 1..] {
                    if !anc[b][a] && !anc[a][b] {
                        forks[c as usize].push((a, b));
                    }
                }
            }
        }
        let mut observed = vec![vec![false; n]; count];
        for x in 0..count {
            for (c, pairs) in forks.iter().enumerate() {
                observed[x][c] = pairs.iter().any(|&(a, b)| anc[x][a] && anc[x][b]);
            }
        }
        OracleGraph {
            n,
            ids,
            creators,
            anc,
            forks,
            observed,
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn id(&self, idx: usize) -> EventId {
        self.ids[idx]
    }

    pub fn is_ancestor(&self, a: usize, d: usize) -> bool {
        self.anc[d][a]
    }

    pub fn forks_by(&self, creator: u32) -> &[(usize, usize)] {
        &self.forks[creator as usize]
    }

    pub fn observes_fork(&self, x: usize, creator: u32) -> bool {
        self.observed[x][creator as usize]
    }

    pub fn sees(&self, x: usize, y: usize) -> bool {
        self.anc[x][y] && !self.observed[x][self.creators[y] as usize]
    }

    /// Strong seeing by enumerating every event as a potential intermediary
    /// and counting distinct creators.
    pub fn strongly_sees(&self, x: usize, y: usize) -> bool {
        let mut creators = HashSet::new();
        for s in 0..self.len() {
            if self.sees(x, s) && self.sees(s, y) {
                creators.insert(self.creators[s]);
            }
        }
        creators.len() > 2 * self.n / 3
    }
}

/// Compare every pairwise predicate of a graph against the oracle. Panics
/// with coordinates on the first disagreement.
pub fn assert_matches_oracle(graph: &Hashgraph) {
    let oracle = OracleGraph::from_graph(graph);
    let ids: Vec<EventId> = graph.event_ids().collect();
    for (xi, &x) in ids.iter().enumerate() {
        for (yi, &y) in ids.iter().enumerate() {
            assert_eq!(
                graph.is_ancestor(y, x).unwrap(),
                oracle.is_ancestor(yi, xi),
                "ancestry disagrees at ({xi},{yi})"
            );
            assert_eq!(
                graph.sees(x, y).unwrap(),
                oracle.sees(xi, yi),
                "sees disagrees at ({xi},{yi})"
            );
            assert_eq!(
                graph.strongly_sees(x, y).unwrap(),
                oracle.strongly_sees(xi, yi),
                "strongly_sees disagrees at ({xi},{yi})"
            );
        }
    }
    for c in 0..graph.n() as u32 {
        let got: Vec<(EventId, EventId)> = graph
            .forks_by(PartyId(c))
            .into_iter()
            .map(|p| (p.left, p.right))
            .collect();
        let want: Vec<(EventId, EventId)> = oracle
            .forks_by(c)
            .iter()
            .map(|&(a, b)| (oracle.id(a), oracle.id(b)))
            .collect();
        let mut got_sorted = got.clone();
        let mut want_sorted = want.clone();
        got_sorted.sort();
        want_sorted.sort();
        assert_eq!(
            got_sorted, want_sorted,
            "fork pairs disagree for creator {c}"
        );
    }
}

/// Rebuild a graph from scratch with the same events in the same order.
/// Rounds, witness flags, fames, and received rounds are recomputed from
/// nothing, which makes this the reference for write-once stability checks.
pub fn rebuild_fresh(g: &Hashgraph) -> Hashgraph {
    let mut fresh = Hashgraph::new(g.owner(), g.n(), g.coin_period(), g.pki());
    for (id, ev) in g.events_with_ids() {
        fresh.insert_known(id, ev).expect("source graph is closed");
    }
    fresh
}

/// Merge every replica of a simulation into one graph: the union view an
/// observer holding all gossip would have.
pub fn union_graph(sim: &crate::sim::Simulation) -> Hashgraph {
    let mut union = Hashgraph::new(
        PartyId(0),
        sim.cfg.n as usize,
        sim.cfg.coin_period,
        sim.pki(),
    );
    for party in sim.parties() {
        for (id, ev) in party.graph.events_with_ids() {
            union
                .insert_known(id, ev)
                .expect("replica events are closed");
        }
    }
    union
}

/// Random well-formed DAG generator (forks allowed): each non-genesis event
/// picks any prior event by its creator as self-parent and any prior event
/// by another creator as other-parent.
pub fn random_dag(n: usize, events: usize, seed: u64, fork_bias: f64) -> Hashgraph {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut b = GraphBuilder::new(n, seed);
    let mut by_creator: Vec<Vec<EventId>> = vec![Vec::new(); n];
    for (p, slot) in by_creator.iter_mut().enumerate() {
        slot.push(b.genesis(p as u32));
    }
    let mut total = n;
    let mut tx_tag = 0u32;
    while total < events {
        let c = rng.gen_range(0..n);
        let mine = &by_creator[c];
        // Forking creators re-use older self-parents.
        let self_parent = if rng.gen_bool(fork_bias) {
            mine[rng.gen_range(0..mine.len())]
        } else {
            *mine.last().unwrap()
        };
        let oc = loop {
            let o = rng.gen_range(0..n);
            if o != c {
                break o;
            }
        };
        let other_parent = by_creator[oc][rng.gen_range(0..by_creator[oc].len())];
        tx_tag += 1;
        let id = b.child_with_tx(
            c as u32,
            self_parent,
            other_parent,
            vec![tx_tag.to_be_bytes().to_vec()],
        );
        by_creator[c].push(id);
        total += 1;
    }
    b.graph
}
