//! Events and their canonical wire encoding.
//!
//! Layout (all integers big-endian):
//!
//! ```text
//! version 0x01 | creator u32 | timestamp u64 | tx-count u32
//!   | per tx: len u32, bytes | parent flags u8
//!   | self-parent digest (32B, zero when absent)
//!   | other-parent digest (32B, zero when absent)
//!   | signature (32B)
//! ```
//!
//! The hash covers the whole encoding; the signature covers everything except
//! its own trailing 32 bytes.

use crate::crypto::{hash_bytes, Digest, KeyPair, Signature, DIGEST_LEN};
use crate::error::DecodeError;
use serde::{Deserialize, Serialize};

pub const ENCODING_VERSION: u8 = 0x01;
const FLAG_SELF_PARENT: u8 = 0x01;
const FLAG_OTHER_PARENT: u8 = 0x02;
const MAX_TX_COUNT: u32 = 1 << 20;
const MAX_TX_LEN: u32 = 1 << 24;

/// Index of a participating party, in `[0, n)`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug, Serialize, Deserialize)]
pub struct PartyId(pub u32);

impl std::fmt::Display for PartyId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "p{}", self.0)
    }
}

/// Identity of an event: the digest of its canonical encoding.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug, Serialize, Deserialize)]
pub struct EventId(pub Digest);

impl EventId {
    pub fn to_hex(&self) -> String {
        self.0.to_hex()
    }
}

/// One gossip message: a batch of transactions plus the metadata that embeds
/// it into the graph. Genesis events carry no parents; every other event
/// carries both.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Event {
    pub creator: PartyId,
    pub timestamp: u64,
    pub transactions: Vec<Vec<u8>>,
    pub self_parent: Option<EventId>,
    pub other_parent: Option<EventId>,
    pub signature: Signature,
}

impl Event {
    /// Build and sign an event. Parents must be both present or both absent.
    pub fn new_signed(
        key: &KeyPair,
        timestamp: u64,
        transactions: Vec<Vec<u8>>,
        self_parent: Option<EventId>,
        other_parent: Option<EventId>,
    ) -> Event {
        assert_eq!(
            self_parent.is_some(),
            other_parent.is_some(),
            "parents must be both present or both absent"
        );
        let mut ev = Event {
            creator: PartyId(key.party),
            timestamp,
            transactions,
            self_parent,
            other_parent,
            signature: Signature([0; DIGEST_LEN]),
        };
        ev.signature = key.sign(&ev.signed_bytes());
        ev
    }

    pub fn is_genesis(&self) -> bool {
        self.self_parent.is_none()
    }

    /// Full canonical encoding, including the signature. This is what gets
    /// hashed into the event id.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(128);
        out.push(ENCODING_VERSION);
        out.extend_from_slice(&self.creator.0.to_be_bytes());
        out.extend_from_slice(&self.timestamp.to_be_bytes());
        out.extend_from_slice(&(self.transactions.len() as u32).to_be_bytes());
        for tx in &self.transactions {
            out.extend_from_slice(&(tx.len() as u32).to_be_bytes());
            out.extend_from_slice(tx);
        }
        let mut flags = 0u8;
        if self.self_parent.is_some() {
            flags |= FLAG_SELF_PARENT;
        }
        if self.other_parent.is_some() {
            flags |= FLAG_OTHER_PARENT;
        }
        out.push(flags);
        let zero = Digest([0; DIGEST_LEN]);
        out.extend_from_slice(&self.self_parent.map_or(zero, |p| p.0).0);
        out.extend_from_slice(&self.other_parent.map_or(zero, |p| p.0).0);
        out.extend_from_slice(&self.signature.0);
        out
    }

    /// The bytes the creator signs: the canonical encoding minus the
    /// trailing signature field.
    pub fn signed_bytes(&self) -> Vec<u8> {
        let mut bytes = self.canonical_bytes();
        bytes.truncate(bytes.len() - DIGEST_LEN);
        bytes
    }

    pub fn id(&self) -> EventId {
        EventId(hash_bytes(&self.canonical_bytes()))
    }

    /// Strict decoder: rejects trailing bytes, unknown versions, mixed parent
    /// flags, and nonzero digest bytes for absent parents, so that
    /// `decode(encode(e)) == e` and encodings are unique.
    pub fn decode(bytes: &[u8]) -> Result<Event, DecodeError> {
        let mut cur = Cursor { bytes, pos: 0 };
        let version = cur.u8()?;
        if version != ENCODING_VERSION {
            return Err(DecodeError::BadVersion(version));
        }
        let creator = PartyId(cur.u32()?);
        let timestamp = cur.u64()?;
        let tx_count = cur.u32()?;
        if tx_count > MAX_TX_COUNT {
            return Err(DecodeError::Malformed("transaction count too large"));
        }
        let mut transactions = Vec::with_capacity(tx_count as usize);
        for _ in 0..tx_count {
            let len = cur.u32()?;
            if len > MAX_TX_LEN {
                return Err(DecodeError::Malformed("transaction too large"));
            }
            transactions.push(cur.take(len as usize)?.to_vec());
        }
        let flags = cur.u8()?;
        if flags != 0 && flags != (FLAG_SELF_PARENT | FLAG_OTHER_PARENT) {
            return Err(DecodeError::Malformed(
                "parents must be both present or both absent",
            ));
        }
        let self_digest = cur.digest()?;
        let other_digest = cur.digest()?;
        let zero = Digest([0; DIGEST_LEN]);
        let (self_parent, other_parent) = if flags == 0 {
            if self_digest != zero || other_digest != zero {
                return Err(DecodeError::Malformed("absent parent digest must be zero"));
            }
            (None, None)
        } else {
            (Some(EventId(self_digest)), Some(EventId(other_digest)))
        };
        let signature = Signature(cur.digest()?.0);
        if cur.pos != bytes.len() {
            return Err(DecodeError::Malformed("trailing bytes"));
        }
        Ok(Event {
            creator,
            timestamp,
            transactions,
            self_parent,
            other_parent,
            signature,
        })
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], DecodeError> {
        if self.pos + n > self.bytes.len() {
            return Err(DecodeError::Truncated);
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8, DecodeError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, DecodeError> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, DecodeError> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn digest(&mut self) -> Result<Digest, DecodeError> {
        Ok(Digest(self.take(DIGEST_LEN)?.try_into().unwrap()))
    }
}
