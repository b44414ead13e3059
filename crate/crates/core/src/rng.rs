//! Deterministic randomness: a counted ChaCha stream plus the protocol's
//! sampling primitives (capacity-weighted sector choice lives in
//! [`crate::sampler`]; the scalar draws live here).
//!
//! Replays are exact: the same seed and the same sequence of draws produce
//! the same outputs on every run.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

/// Seeded random stream with a draw counter for replay audits.
#[derive(Clone, Debug)]
pub struct RngStream {
    rng: ChaCha8Rng,
    seed: u64,
    draws: u64,
}

/// SplitMix64 step, used to derive independent child seeds.
fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            seed,
            draws: 0,
        }
    }

    /// Independent stream for trial `index` under a master seed. Trials
    /// running in parallel each take their own child so results do not
    /// depend on scheduling.
    pub fn child(master_seed: u64, index: u64) -> Self {
        Self::new(splitmix64(splitmix64(master_seed) ^ index.wrapping_mul(0xa076_1d64_78bd_642f)))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn draws(&self) -> u64 {
        self.draws
    }

    /// Uniform f64 in [0, 1).
    pub fn uniform(&mut self) -> f64 {
        self.draws += 1;
        self.rng.random::<f64>()
    }

    /// Uniform integer in [lo, hi] inclusive.
    pub fn uniform_range(&mut self, lo: u64, hi: u64) -> u64 {
        debug_assert!(lo <= hi);
        self.draws += 1;
        self.rng.random_range(lo..=hi)
    }

    /// Uniform u128 in [0, bound), used by the capacity sampler.
    pub fn uniform_below_u128(&mut self, bound: u128) -> u128 {
        debug_assert!(bound > 0);
        self.draws += 1;
        self.rng.random_range(0..bound)
    }

    /// Exponential draw with the given mean, via inverse CDF.
    pub fn exponential(&mut self, mean: f64) -> f64 {
        debug_assert!(mean > 0.0);
        let u = loop {
            let u = self.uniform();
            if u < 1.0 {
                break u;
            }
        };
        -mean * (1.0 - u).ln()
    }

    /// Poisson draw with the given mean; zero mean yields zero.
    pub fn poisson(&mut self, mean: f64) -> u64 {
        if mean <= 0.0 {
            return 0;
        }
        self.draws += 1;
        let dist = Poisson::new(mean).expect("positive finite mean");
        let x: f64 = dist.sample(&mut self.rng);
        x as u64
    }

    /// Standard normal draw.
    pub fn normal(&mut self) -> f64 {
        self.draws += 1;
        rand_distr::StandardNormal.sample(&mut self.rng)
    }
}

/// Ceiling of an exponential draw with mean `mean` proof cycles; always ≥ 1.
/// Used for the refresh countdown.
pub fn sample_exp(rng: &mut RngStream, mean: u32) -> u64 {
    debug_assert!(mean > 0);
    let x = rng.exponential(mean as f64);
    (x.ceil() as u64).max(1)
}

/// Uniform replica index in [1, cp].
pub fn random_index(rng: &mut RngStream, cp: u32) -> u32 {
    assert!(cp >= 1, "file must have at least one replica");
    rng.uniform_range(1, cp as u64) as u32
}
