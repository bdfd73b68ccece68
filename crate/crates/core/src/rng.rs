//! Keyed substreams.
//!
//! Every random quantity is drawn from a ChaCha12 stream whose key is
//! `(seed, tag)` and whose 64-bit stream id is the substream index (usually
//! a path index). ChaCha is counter based, so a substream can be opened
//! anywhere without touching the others and draws do not depend on the
//! order in which paths are simulated.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Separates the independent noise components of one path.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum StreamTag {
    Brownian = 1,
    SmallJumps = 2,
    LargeJumps = 3,
    SmallMarks = 4,
    LargeMarks = 5,
    Bridge = 6,
    Compensator = 7,
    Probe = 8,
    Triples = 9,
    Approach = 10,
}

pub fn substream(seed: u64, tag: StreamTag, index: u64) -> ChaCha12Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&(tag as u64).to_le_bytes());
    key[16..24].copy_from_slice(b"jumpflow");
    let mut rng = ChaCha12Rng::from_seed(key);
    rng.set_stream(index);
    rng
}

/// Derives an independent seed for a sub-experiment (e.g. one time slice of
/// backward induction) from a parent seed.
pub fn derive_seed(seed: u64, salt: u64) -> u64 {
    // splitmix64 finaliser
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
