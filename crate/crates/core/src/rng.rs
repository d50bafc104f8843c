//! Seeded random streams.
//!
//! Every random draw comes from a [`ChaCha8Rng`] seeded with the master seed
//! and positioned on a stream id. Stream ids pack
//! `(purpose << 48) | (task << 32) | instance`, so distinct datasets and
//! initialisations never share a stream and workers can be handed streams in
//! any order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum StreamPurpose {
    TrainData = 1,
    EvalLoss = 2,
    EvalError = 3,
    Init = 4,
    Shuffle = 5,
    Events = 6,
    Misc = 7,
}

pub fn stream_id(purpose: StreamPurpose, task: u64, instance: u64) -> u64 {
    debug_assert!(task < 1 << 16 && instance < 1 << 32);
    ((purpose as u64) << 48) | (task << 32) | instance
}

pub fn stream(master_seed: u64, purpose: StreamPurpose, task: u64, instance: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(stream_id(purpose, task, instance));
    rng
}

pub fn seeded(seed: u64) -> StreamRng {
    ChaCha8Rng::seed_from_u64(seed)
}
