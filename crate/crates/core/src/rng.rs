//! Reproducible random streams.
//!
//! Every replicate of an experiment owns a ChaCha8 stream. The 256-bit key is
//! the little-endian master seed followed by the little-endian domain tag and
//! sixteen zero bytes; the 64-bit ChaCha stream id is the replicate index.
//! ChaCha is counter based, so the stream for `(seed, domain, index)` does not
//! depend on which worker runs it or in which order replicates are scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_pcg::Pcg64Mcg;

/// Random generator used throughout the crate.
pub type StreamRng = ChaCha8Rng;

/// Short-lived generator for a single cell's noise draws.
pub type ChildRng = Pcg64Mcg;

/// Separates independent uses of the same master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Domain {
    Replicate = 1,
    LongRun = 2,
    ChainGap = 3,
    Simulation = 4,
    Estimation = 5,
    User = 0xff,
}

/// Stream number `index` within `domain` for the given master seed.
pub fn stream(seed: u64, domain: Domain, index: u64) -> StreamRng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&(domain as u64).to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    rng
}

/// Per-cell generator seeded from one draw of a replicate stream.
///
/// Rejection samplers consume a variable number of draws; running them on a
/// child generator keeps the parent stream at exactly one draw per cell.
pub fn child(seed: u64) -> ChildRng {
    Pcg64Mcg::seed_from_u64(seed)
}
