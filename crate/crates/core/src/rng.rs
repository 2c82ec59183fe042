//! Keyed random streams.
//!
//! Every stream is a ChaCha12 keystream whose 256-bit key is the tuple
//! `(seed, index, tag, domain)`. ChaCha is counter based, so two streams with
//! different keys are independent and a stream's output never depends on how
//! many values other streams have produced. This is what lets the simulation
//! harness give each variable of each replication its own stream and stay
//! bit-for-bit reproducible at any thread count.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::normal;

/// Separates stream families that would otherwise share `(seed, index, tag)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    Split = 1,
    Forest = 2,
    Simulation = 3,
    SplitSeed = 4,
}

#[derive(Debug, Clone)]
pub struct Stream(ChaCha12Rng);

impl Stream {
    pub fn new(domain: Domain, seed: u64, index: u64, tag: u64) -> Self {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&seed.to_le_bytes());
        key[8..16].copy_from_slice(&index.to_le_bytes());
        key[16..24].copy_from_slice(&tag.to_le_bytes());
        key[24..].copy_from_slice(&(domain as u64).to_le_bytes());
        Stream(ChaCha12Rng::from_seed(key))
    }

    /// Uniform on the open interval (0, 1), 53 bits.
    pub fn uniform(&mut self) -> f64 {
        ((self.0.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal by inversion.
    pub fn normal(&mut self) -> f64 {
        normal::quantile(self.uniform())
    }

    /// Uniform integer in `0..bound` (Lemire's multiply-shift with rejection).
    pub fn below(&mut self, bound: usize) -> usize {
        assert!(bound > 0);
        let bound = bound as u64;
        let threshold = bound.wrapping_neg() % bound;
        loop {
            let m = (self.0.next_u64() as u128) * (bound as u128);
            if (m as u64) >= threshold {
                return (m >> 64) as usize;
            }
        }
    }

    /// In-place Fisher–Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}

/// Child seed for the `index`-th repetition under `master`.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    Stream::new(Domain::SplitSeed, master, index, 0).0.next_u64()
}
