//! Structured run records. Serialized one JSON object per line with stable
//! field names, so a rerun with the same config and scheduler produces a
//! byte-identical stream.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum TraceRecord {
    /// First record of every trace: the configuration echo.
    #[serde(rename_all = "camelCase")]
    Config {
        step: u64,
        seed: u64,
        n: u32,
        t: u32,
        corrupted: Vec<u32>,
        coin_period: u32,
        max_steps: u64,
        scheduler: String,
    },
    /// A party created and inserted one of its own events.
    #[serde(rename_all = "camelCase")]
    Created {
        step: u64,
        party: u32,
        event: String,
        round: u32,
        witness: bool,
        timestamp: u64,
        self_parent: Option<String>,
        other_parent: Option<String>,
        txs: Vec<String>,
        signature: String,
    },
    /// A sync was delivered to a party.
    #[serde(rename_all = "camelCase")]
    Delivered {
        step: u64,
        party: u32,
        from: u32,
        event: String,
        new_events: u32,
    },
    /// A received event is waiting for its ancestors.
    #[serde(rename_all = "camelCase")]
    Buffered {
        step: u64,
        party: u32,
        event: String,
    },
    /// A party decided a witness's fame.
    #[serde(rename_all = "camelCase")]
    FameDecided {
        step: u64,
        party: u32,
        event: String,
        round: u32,
        fame: String,
    },
    /// A party appended an event to its commit log.
    #[serde(rename_all = "camelCase")]
    Committed {
        step: u64,
        party: u32,
        event: String,
        round_received: u32,
        consensus_timestamp: u64,
        position: u64,
    },
    /// Per-round vote tally emitted by the delay attack.
    #[serde(rename_all = "camelCase")]
    AttackRound {
        step: u64,
        round: u32,
        yes: u32,
        no: u32,
        coin: bool,
        supermajority: bool,
    },
}

impl TraceRecord {
    pub fn step(&self) -> u64 {
        match self {
            TraceRecord::Config { step, .. }
            | TraceRecord::Created { step, .. }
            | TraceRecord::Delivered { step, .. }
            | TraceRecord::Buffered { step, .. }
            | TraceRecord::FameDecided { step, .. }
            | TraceRecord::Committed { step, .. }
            | TraceRecord::AttackRound { step, .. } => *step,
        }
    }
}

/// Render records as newline-delimited JSON.
pub fn to_jsonl(records: &[TraceRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("trace records serialize"));
        out.push('\n');
    }
    out
}

/// Parse a newline-delimited JSON trace.
pub fn from_jsonl(text: &str) -> Result<Vec<TraceRecord>, serde_json::Error> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(serde_json::from_str)
        .collect()
}
