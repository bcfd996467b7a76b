//! Counter-based random streams.
//!
//! Every random decision in the crate draws from a ChaCha stream keyed by the
//! master seed and selected by `(purpose, index)`, so a single Monte-Carlo
//! iteration or a single simulated driver can be regenerated in isolation.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;

/// What a random stream is used for. The discriminant is part of the stream id.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u32)]
pub enum Purpose {
    Split = 1,
    Balance = 2,
    Model = 3,
    Synth = 4,
    Scenario = 5,
    Init = 6,
}

pub type StreamRng = ChaCha12Rng;

/// Random generator for `(purpose, index)` under `master`.
pub fn stream(master: u64, purpose: Purpose, index: u64) -> StreamRng {
    let mut rng = ChaCha12Rng::seed_from_u64(master);
    rng.set_stream(((purpose as u64) << 48) ^ index);
    rng
}

/// A derived 64-bit seed, for APIs that take a plain seed.
pub fn derive_seed(master: u64, purpose: Purpose, index: u64) -> u64 {
    stream(master, purpose, index).next_u64()
}
