use crate::event::EventId;
use thiserror::Error;

/// Errors surfaced by graph mutation and queries.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("unknown event {}", .0.to_hex())]
    UnknownEvent(EventId),
    #[error("event {} is missing parents", .0.to_hex())]
    MissingParents(EventId),
    #[error("event {} carries an invalid signature", .0.to_hex())]
    BadSignature(EventId),
}

/// Errors from the strict canonical decoder. Incorrectly formatted events are
/// discarded by the receiving party.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeError {
    #[error("unsupported encoding version {0:#04x}")]
    BadVersion(u8),
    #[error("input ended early")]
    Truncated,
    #[error("malformed encoding: {0}")]
    Malformed(&'static str),
}

/// A commit whose total-order key does not exceed the log tail. Signals a
/// consensus bug; the run must abort.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("commit order violation at log position {position}")]
pub struct OrderViolation {
    pub position: usize,
}

/// Errors from the simulation engine and attack driver.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("unknown scheduler `{0}`")]
    UnknownScheduler(String),
    #[error("no pending delivery with id {0}")]
    UnknownDelivery(u64),
    #[error("scheduler starved deliveries past the step budget")]
    Stalled,
    #[error("consensus order violation on party {party}: {source}")]
    Order {
        party: u32,
        #[source]
        source: OrderViolation,
    },
    #[error("attack precondition violated: {0}")]
    PreconditionViolated(String),
}
