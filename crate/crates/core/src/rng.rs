//! Reproducible random streams.
//!
//! Every simulation run owns a private splitmix64 stream keyed by
//! `(global seed, config id, run index)`, so results do not depend on how runs
//! are scheduled across threads.

use rand::RngCore;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;
const RUN_MULTIPLIER: u64 = 0xBF58_476D_1CE4_E5B9;

/// splitmix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamKey {
    pub global_seed: u64,
    pub config_id: u64,
    pub run_index: u64,
}

/// A splitmix64 generator.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RngStream {
    state: u64,
    key: Option<StreamKey>,
}

impl RngStream {
    pub fn new(state: u64) -> Self {
        Self { state, key: None }
    }

    pub fn key(&self) -> Option<StreamKey> {
        self.key
    }
}

/// Stream for one run of one configuration.
pub fn derive_stream(global_seed: u64, config_id: u64, run_index: u64) -> RngStream {
    let state = global_seed
        ^ config_id.wrapping_mul(GOLDEN_GAMMA)
        ^ run_index.wrapping_mul(RUN_MULTIPLIER);
    RngStream {
        state,
        key: Some(StreamKey {
            global_seed,
            config_id,
            run_index,
        }),
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }

    fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        mix64(self.state)
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        for chunk in dest.chunks_mut(8) {
            let bytes = self.next_u64().to_le_bytes();
            chunk.copy_from_slice(&bytes[..chunk.len()]);
        }
    }
}
