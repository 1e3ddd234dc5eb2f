//! Deterministic random-stream plumbing.
//!
//! Every random draw in the simulator comes from a [`RngSpec`], a pair of a
//! master seed and a stream id. Substreams are derived by hashing the parent
//! spec together with a list of integer labels, so any trial, round or device
//! can construct its own generator without coordinating with the others.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Generator type handed out by [`RngSpec::rng`].
pub type StreamRng = ChaCha8Rng;

/// Well-known labels used for the first component of derived streams.
pub mod label {
    pub const TRIAL: u64 = 1;
    pub const SELECT: u64 = 2;
    pub const ERRORS: u64 = 3;
    pub const BATCH: u64 = 4;
    pub const INIT: u64 = 5;
    pub const PARTITION: u64 = 6;
    pub const DATA: u64 = 7;
    pub const GEOMETRY: u64 = 8;
    pub const PROBE: u64 = 9;
    pub const CENTERS: u64 = 10;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngSpec {
    pub master_seed: u64,
    pub stream_id: u64,
}

impl RngSpec {
    pub fn new(master_seed: u64) -> Self {
        RngSpec {
            master_seed,
            stream_id: 0,
        }
    }

    /// Derives a child stream. Distinct label sequences give unrelated
    /// streams; the same labels always give the same stream.
    pub fn derive(&self, labels: &[u64]) -> RngSpec {
        derive_stream(self, labels)
    }

    /// Builds the generator for this stream. Output is identical on every
    /// platform (ChaCha8 keyed by SHA-256 of the spec).
    pub fn rng(&self) -> StreamRng {
        let mut hasher = Sha256::new();
        hasher.update(b"gomore.rng.key");
        hasher.update(self.master_seed.to_le_bytes());
        hasher.update(self.stream_id.to_le_bytes());
        let key: [u8; 32] = hasher.finalize().into();
        ChaCha8Rng::from_seed(key)
    }
}

/// Hash-based substream derivation. `labels` must be non-empty; an empty
/// label list returns the parent unchanged.
pub fn derive_stream(master: &RngSpec, labels: &[u64]) -> RngSpec {
    if labels.is_empty() {
        return *master;
    }
    let mut hasher = Sha256::new();
    hasher.update(b"gomore.rng.derive");
    hasher.update(master.master_seed.to_le_bytes());
    hasher.update(master.stream_id.to_le_bytes());
    hasher.update((labels.len() as u64).to_le_bytes());
    for l in labels {
        hasher.update(l.to_le_bytes());
    }
    let digest = hasher.finalize();
    let mut id = [0u8; 8];
    id.copy_from_slice(&digest[..8]);
    RngSpec {
        master_seed: master.master_seed,
        stream_id: u64::from_le_bytes(id),
    }
}
