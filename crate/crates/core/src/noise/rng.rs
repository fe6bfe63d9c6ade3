//! Keyed random streams. Every consumer of randomness draws from a ChaCha8
//! stream selected by `(seed, replica, block, purpose)`, so results do not
//! depend on scheduling or on how many other streams were used.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Stream purposes. Distinct purposes never share draws.
pub mod purpose {
    pub const SIMULATION: u8 = 1;
    pub const NOISE_LEVELS: u8 = 2;
    pub const CONVOLUTION: u8 = 3;
    pub const TEST_DIRECTIONS: u8 = 4;
    pub const INITIAL_STATE: u8 = 5;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamId {
    pub replica: u64,
    /// Experiment block, e.g. the index of a delta or epsilon value.
    pub block: u8,
    pub purpose: u8,
}

impl StreamId {
    pub fn new(replica: u64, block: u8, purpose: u8) -> Self {
        Self {
            replica,
            block,
            purpose,
        }
    }

    fn word(&self) -> u64 {
        debug_assert!(self.replica < 1 << 48);
        (self.replica << 16) | ((self.block as u64) << 8) | self.purpose as u64
    }
}

#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    id: StreamId,
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, id: StreamId) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(id.word());
        Self { seed, id, inner }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn id(&self) -> StreamId {
        self.id
    }

    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}
