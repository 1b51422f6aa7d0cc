//! Counter-based random streams.
//!
//! Every sample draws from its own ChaCha8 stream keyed by
//! `(master_seed, level)` with the sample index as the 64-bit stream id, so a
//! sample's draws never depend on how many workers ran or in which order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Stream tag for the auxiliary (non-level) draws made by validators.
pub const AUX_LEVEL: u64 = u64::MAX;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed `tag` of `master`, e.g. one per replication.
pub fn derive_seed(master: u64, tag: u64) -> u64 {
    splitmix64(splitmix64(master) ^ splitmix64(tag.wrapping_add(0xD1B5_4A32_D192_ED03)))
}

/// Key material for one `(master_seed, level)` family of streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamKey {
    key: [u8; 32],
}

impl StreamKey {
    pub fn new(master_seed: u64, level: u64) -> Self {
        let mut key = [0u8; 32];
        let mut state = master_seed ^ splitmix64(level.wrapping_add(0x5851_F42D_4C95_7F2D));
        for chunk in key.chunks_exact_mut(8) {
            state = splitmix64(state);
            chunk.copy_from_slice(&state.to_le_bytes());
        }
        Self { key }
    }

    pub fn stream(&self, index: u64) -> SampleRng {
        let mut rng = ChaCha8Rng::from_seed(self.key);
        rng.set_stream(index);
        SampleRng { rng }
    }
}

/// Convenience: the stream of sample `index` at `level`.
pub fn sample_stream(master_seed: u64, level: u64, index: u64) -> SampleRng {
    StreamKey::new(master_seed, level).stream(index)
}

pub struct SampleRng {
    rng: ChaCha8Rng,
}

impl SampleRng {
    #[inline]
    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    /// Fills `out` with independent N(0, variance) draws.
    pub fn fill_normal(&mut self, variance: f64, out: &mut [f64]) {
        let sd = variance.sqrt();
        for v in out.iter_mut() {
            *v = sd * self.standard_normal();
        }
    }

    pub fn uniform(&mut self) -> f64 {
        rand::Rng::random::<f64>(&mut self.rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let mut a = sample_stream(7, 2, 11);
        let mut b = sample_stream(7, 2, 11);
        let mut c = sample_stream(7, 2, 12);
        let mut d = sample_stream(7, 3, 11);
        let xa: Vec<f64> = (0..8).map(|_| a.standard_normal()).collect();
        let xb: Vec<f64> = (0..8).map(|_| b.standard_normal()).collect();
        let xc: Vec<f64> = (0..8).map(|_| c.standard_normal()).collect();
        let xd: Vec<f64> = (0..8).map(|_| d.standard_normal()).collect();
        assert_eq!(xa, xb);
        assert_ne!(xa, xc);
        assert_ne!(xa, xd);
    }

    #[test]
    fn normal_moments() {
        let key = StreamKey::new(1, 0);
        let n = 200_000;
        let mut s1 = 0.0;
        let mut s2 = 0.0;
        for k in 0..n {
            let z = key.stream(k).standard_normal();
            s1 += z;
            s2 += z * z;
        }
        let mean = s1 / n as f64;
        let var = s2 / n as f64 - mean * mean;
        assert!(mean.abs() < 5.0 / (n as f64).sqrt());
        assert!((var - 1.0).abs() < 0.02);
    }
}
