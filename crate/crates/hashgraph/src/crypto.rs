//! Hashing and signing services backing the protocol.
//!
//! The signature scheme is a simulated one: a keyed deterministic digest of
//! `(secret || message)`. That gives the three properties the consensus logic
//! needs — determinism (one signature per key/message pair), no spoofing of
//! honest keys inside the simulation, and a uniformly distributed middle bit —
//! without real asymmetric cryptography. [`Pki`] is the adapter point: a real
//! scheme can replace it as long as signing stays deterministic, otherwise the
//! coin-round logic breaks.

use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};
use std::fmt;

/// Length in bytes of digests and signatures. Whitened-signature XOR requires
/// the two to be equal length.
pub const DIGEST_LEN: usize = 32;

const DOMAIN_HASH: &[u8] = b"hashsim/hash/v1";
const DOMAIN_SECRET: &[u8] = b"hashsim/key/v1";
const DOMAIN_PUBLIC: &[u8] = b"hashsim/pub/v1";
const DOMAIN_SIG: &[u8] = b"hashsim/sig/v1";

/// A 32-byte collision-resistant digest.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Digest(pub [u8; DIGEST_LEN]);

impl Digest {
    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Option<Digest> {
        let bytes = hex::decode(s).ok()?;
        let arr: [u8; DIGEST_LEN] = bytes.try_into().ok()?;
        Some(Digest(arr))
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({}..)", &self.to_hex()[..8])
    }
}

impl Serialize for Digest {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Digest {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Digest::from_hex(&s).ok_or_else(|| serde::de::Error::custom("invalid digest hex"))
    }
}

/// A 32-byte deterministic signature.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Signature(pub [u8; DIGEST_LEN]);

impl Signature {
    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Option<Signature> {
        let bytes = hex::decode(s).ok()?;
        let arr: [u8; DIGEST_LEN] = bytes.try_into().ok()?;
        Some(Signature(arr))
    }

    /// XOR two signatures byte-wise. Used for the whitened-signature tiebreak.
    pub fn xor(&self, other: &Signature) -> Signature {
        let mut out = [0u8; DIGEST_LEN];
        for (i, b) in out.iter_mut().enumerate() {
            *b = self.0[i] ^ other.0[i];
        }
        Signature(out)
    }
}

impl fmt::Debug for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Signature({}..)", &self.to_hex()[..8])
    }
}

/// Hash an arbitrary byte string into a [`Digest`]. Pure function.
pub fn hash_bytes(bytes: &[u8]) -> Digest {
    let mut h = Sha256::new();
    h.update(DOMAIN_HASH);
    h.update(bytes);
    Digest(h.finalize().into())
}

/// The middle bit of a signature: bit `8L/2` with bits numbered MSB-first
/// within each byte, i.e. the top bit of byte 16 for 32-byte signatures.
pub fn middle_bit(sig: &Signature) -> bool {
    sig.0[DIGEST_LEN / 2] & 0x80 != 0
}

/// One party's key material, fixed for an execution.
#[derive(Clone)]
pub struct KeyPair {
    pub party: u32,
    secret: [u8; DIGEST_LEN],
    pub public: [u8; DIGEST_LEN],
}

impl KeyPair {
    /// Derive the keypair for a party. Derivation is deterministic in
    /// `(key_seed, party)` so an execution is replayable from its seed.
    pub fn derive(key_seed: u64, party: u32) -> KeyPair {
        let mut h = Sha256::new();
        h.update(DOMAIN_SECRET);
        h.update(key_seed.to_be_bytes());
        h.update(party.to_be_bytes());
        let secret: [u8; DIGEST_LEN] = h.finalize().into();
        let mut h = Sha256::new();
        h.update(DOMAIN_PUBLIC);
        h.update(secret);
        let public: [u8; DIGEST_LEN] = h.finalize().into();
        KeyPair {
            party,
            secret,
            public,
        }
    }

    /// Deterministic signature over `message`.
    pub fn sign(&self, message: &[u8]) -> Signature {
        let mut h = Sha256::new();
        h.update(DOMAIN_SIG);
        h.update(self.secret);
        h.update(message);
        Signature(h.finalize().into())
    }

    /// True iff `sig` is this key's signature over `message`.
    pub fn verify(&self, message: &[u8], sig: &Signature) -> bool {
        self.sign(message) == *sig
    }
}

impl fmt::Debug for KeyPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KeyPair")
            .field("party", &self.party)
            .field("public", &hex::encode(&self.public[..4]))
            .finish()
    }
}

/// The key directory shared by all simulated parties. Every party knows every
/// public key; in the simulated scheme the directory can re-derive each
/// keypair, which is what makes verification possible.
#[derive(Clone, Debug)]
pub struct Pki {
    keys: Vec<KeyPair>,
}

impl Pki {
    pub fn new(n: usize, key_seed: u64) -> Pki {
        Pki {
            keys: (0..n as u32)
                .map(|p| KeyPair::derive(key_seed, p))
                .collect(),
        }
    }

    pub fn n(&self) -> usize {
        self.keys.len()
    }

    pub fn keypair(&self, party: u32) -> &KeyPair {
        &self.keys[party as usize]
    }

    pub fn sign(&self, party: u32, message: &[u8]) -> Signature {
        self.keypair(party).sign(message)
    }

    pub fn verify(&self, party: u32, message: &[u8], sig: &Signature) -> bool {
        party < self.keys.len() as u32 && self.keypair(party).verify(message, sig)
    }
}
