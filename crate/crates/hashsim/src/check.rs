//! Independent trace verification: rebuild the event DAG from the recorded
//! events alone, recompute rounds, fames, and the total order with a fresh
//! engine, and diff every recorded value against the recomputation.

use anyhow::Context;
use hashgraph::consensus;
use hashgraph::crypto::{Digest, Pki, Signature};
use hashgraph::event::{Event, EventId, PartyId};
use hashgraph::graph::{Fame, Hashgraph};
use hashgraph::sim::trace::{self, TraceRecord};
use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;

fn mismatch(what: impl std::fmt::Display) -> anyhow::Result<u8> {
    eprintln!("check: mismatch: {what}");
    Ok(2)
}

pub fn cmd_check(path: &Path) -> anyhow::Result<u8> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading trace {}", path.display()))?;
    let records = trace::from_jsonl(&text).context("parsing trace")?;
    if records.is_empty() {
        println!("check: empty trace, nothing to verify");
        return Ok(0);
    }
    let Some(TraceRecord::Config {
        n,
        seed,
        coin_period,
        ..
    }) = records.first().cloned()
    else {
        anyhow::bail!("trace does not start with a Config record");
    };

    // Rebuild one reference graph holding every created event, in creation
    // order (which is globally parent-closed).
    let pki = Arc::new(Pki::new(n as usize, seed));
    let mut graph = Hashgraph::new(PartyId(0), n as usize, coin_period, pki);
    let mut recorded_rounds: HashMap<EventId, (u32, bool)> = HashMap::new();
    for rec in &records {
        if let TraceRecord::Created {
            party,
            event,
            round,
            witness,
            timestamp,
            self_parent,
            other_parent,
            txs,
            signature,
            ..
        } = rec
        {
            let parse_id = |s: &String| -> anyhow::Result<EventId> {
                Digest::from_hex(s)
                    .map(EventId)
                    .with_context(|| format!("bad digest {s}"))
            };
            let ev = Event {
                creator: PartyId(*party),
                timestamp: *timestamp,
                transactions: txs
                    .iter()
                    .map(|t| hex::decode(t).context("bad tx hex"))
                    .collect::<Result<_, _>>()?,
                self_parent: self_parent.as_ref().map(parse_id).transpose()?,
                other_parent: other_parent.as_ref().map(parse_id).transpose()?,
                signature: Signature::from_hex(signature).context("bad signature hex")?,
            };
            let id = ev.id();
            if id.to_hex() != *event {
                return mismatch(format!(
                    "recorded event id {event} does not match its content (expected {})",
                    id.to_hex()
                ));
            }
            if let Err(e) = graph.insert(Arc::new(ev)) {
                return mismatch(format!("event {event} does not validate: {e}"));
            }
            if graph.round_of(id).unwrap() != *round || graph.is_witness(id).unwrap() != *witness {
                return mismatch(format!(
                    "event {event}: recorded round/witness {}/{} vs recomputed {}/{}",
                    round,
                    witness,
                    graph.round_of(id).unwrap(),
                    graph.is_witness(id).unwrap()
                ));
            }
            recorded_rounds.insert(id, (*round, *witness));
        }
    }

    // Recompute all fame decisions and the total order on the full graph.
    consensus::decide_fame(&mut graph);
    let full_order = consensus::find_order(&mut graph);
    let order_index: HashMap<EventId, usize> = full_order
        .iter()
        .enumerate()
        .map(|(i, e)| (e.event, i))
        .collect();

    let mut commit_cursor: HashMap<u32, u64> = HashMap::new();
    for rec in &records {
        match rec {
            TraceRecord::FameDecided {
                event, fame, party, ..
            } => {
                let id = Digest::from_hex(event)
                    .map(EventId)
                    .with_context(|| format!("bad digest {event}"))?;
                let recomputed = match graph.fame_of(id) {
                    Ok(f) => f,
                    Err(_) => return mismatch(format!("fame recorded for unknown event {event}")),
                };
                let expect = match recomputed {
                    Fame::Famous => "famous",
                    Fame::NotFamous => "not-famous",
                    Fame::Undecided => {
                        return mismatch(format!(
                            "party p{party} decided {event} but the full graph leaves it undecided"
                        ))
                    }
                };
                if fame != expect {
                    return mismatch(format!(
                        "party p{party} recorded {event} as {fame}, recomputation says {expect}"
                    ));
                }
            }
            TraceRecord::Committed {
                party,
                event,
                round_received,
                consensus_timestamp,
                position,
                ..
            } => {
                let id = Digest::from_hex(event)
                    .map(EventId)
                    .with_context(|| format!("bad digest {event}"))?;
                let cursor = commit_cursor.entry(*party).or_insert(0);
                if *position != *cursor {
                    return mismatch(format!(
                        "party p{party} commit positions out of order: got {position}, expected {cursor}"
                    ));
                }
                *cursor += 1;
                // The party's log must be a prefix of the full-graph order.
                match order_index.get(&id) {
                    Some(&i) if i as u64 == *position => {}
                    Some(&i) => {
                        return mismatch(format!(
                            "party p{party} committed {event} at {position}, full order places it at {i}"
                        ))
                    }
                    None => {
                        return mismatch(format!(
                            "party p{party} committed {event} which the full order never commits"
                        ))
                    }
                }
                let entry = &full_order[*position as usize];
                if entry.round_received != *round_received
                    || entry.consensus_timestamp != *consensus_timestamp
                {
                    return mismatch(format!(
                        "party p{party} committed {event} with key ({round_received},{consensus_timestamp}), recomputed ({},{})",
                        entry.round_received, entry.consensus_timestamp
                    ));
                }
            }
            _ => {}
        }
    }
    println!(
        "check: ok ({} events, {} ordered, {} records)",
        recorded_rounds.len(),
        full_order.len(),
        records.len()
    );
    Ok(0)
}
