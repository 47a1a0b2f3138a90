//! A DAG-based Byzantine fault tolerant atomic broadcast engine plus a
//! deterministic adversarial network simulator.
//!
//! The crate has three layers:
//!
//! - [`crypto`], [`event`], [`graph`], [`consensus`]: the consensus engine —
//!   signed gossip events, the append-only hashgraph, the seeing predicates,
//!   and the fame election / total ordering procedures that let a party
//!   commit transactions from local data alone.
//! - [`sim`]: a single-threaded discrete-event simulation of `n` parties
//!   under an asynchronous network where a pluggable [`sim::Scheduler`]
//!   strategy decides which message is delivered next. Same config plus same
//!   scheduler means byte-identical traces.
//! - [`attack`]: a scheduler strategy that stalls one witness's fame
//!   election by ordering deliveries, together with exact probability
//!   oracles quantifying the expected delay.

pub mod attack;
mod bits;
pub mod consensus;
pub mod crypto;
pub mod error;
pub mod event;
pub mod graph;
pub mod sim;
pub mod testkit;

pub use consensus::{decide_fame, find_order, unique_famous_witnesses, CommitEntry, CommitLog};
pub use crypto::{hash_bytes, middle_bit, Digest, KeyPair, Pki, Signature};
pub use error::{DecodeError, GraphError, OrderViolation, SimError};
pub use event::{Event, EventId, PartyId};
pub use graph::{Consistency, Fame, ForkPair, Hashgraph, InsertOutcome};
