//! Seeded random streams.
//!
//! Every subsystem draws from its own ChaCha stream derived from the trial
//! seed, so adding draws in one subsystem never shifts another's sequence.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type SimRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Subsystem {
    World = 1,
    Ranging = 2,
    Heading = 3,
    Rssi = 4,
    Optical = 5,
}

/// Stream for `subsystem` of device `device` under `seed`.
pub fn stream(seed: u64, subsystem: Subsystem, device: u32) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((u64::from(device) << 8) | subsystem as u64);
    rng
}

/// Zero-mean Gaussian draw. A zero sigma consumes no randomness.
pub fn gauss(rng: &mut SimRng, sigma: f64) -> f64 {
    if sigma == 0.0 {
        0.0
    } else {
        let z: f64 = rng.sample(StandardNormal);
        z * sigma
    }
}
