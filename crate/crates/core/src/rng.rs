//! Counter-based random draws.
//!
//! Every random quantity in a simulation is drawn from a stream addressed by
//! `(seed, purpose, channel, counter)`, so the value for a given gate never
//! depends on the order in which gates are evaluated.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Distinguishes independent random substreams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u32)]
pub enum Purpose {
    PhotonNumber = 1,
    PhotonClick = 2,
    Dark = 3,
    Afterpulse = 4,
    Amplitude = 5,
    Onset = 6,
    Noise = 7,
    DeviceVariation = 8,
    DeviceSeed = 9,
}

/// Returns the generator for one `(seed, purpose, channel, counter)` address.
pub fn stream(seed: u64, purpose: Purpose, channel: u32, counter: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..12].copy_from_slice(&(purpose as u32).to_le_bytes());
    key[12..16].copy_from_slice(&channel.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(counter);
    rng
}
