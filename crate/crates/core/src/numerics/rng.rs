//! Seeded, stream-separated random number generation.
//!
//! Every consumer (noise path, end-time draw, bootstrap, agent jitter) owns an
//! [`RngStream`] keyed by `(seed, stream_id)`. The generator is ChaCha8 with the
//! stream id mapped onto ChaCha's native stream counter, so distinct ids never
//! overlap and a given key yields the same draws on every platform. Transcendental
//! functions go through `libm` rather than the platform math library for the same
//! reason.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

/// Stream ids reserved by the engine and the analysis pipeline.
pub mod streams {
    pub const NOISE: u64 = 1;
    pub const END_TIME: u64 = 2;
    pub const AGENT_BASE: u64 = 1_000;
    pub const BOOTSTRAP: u64 = 10;
    pub const SYNC_NULL: u64 = 11;
    pub const RESTARTS: u64 = 12;
}

const TWO_POW_53: f64 = 9_007_199_254_740_992.0;

#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    inner: ChaCha8Rng,
    spare_normal: Option<f64>,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream_id);
        Self {
            seed,
            stream_id,
            inner,
            spare_normal: None,
        }
    }

    /// Stream positioned at block `index` of `(seed, stream_id)`.
    ///
    /// Gives random access to a per-index sub-sequence, which lets pure decision
    /// functions draw noise for round `t` without carrying generator state.
    pub fn at(seed: u64, stream_id: u64, index: u64) -> Self {
        let mut s = Self::new(seed, stream_id);
        // 1024 words per index is far more than any single consumer draws.
        s.inner.set_word_pos(u128::from(index) << 10);
        s
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Child stream for a sub-task, e.g. one bootstrap replicate.
    pub fn fork(&self, child: u64) -> Self {
        let mixed = self
            .seed
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .rotate_left(17)
            ^ self.stream_id.wrapping_mul(0xBF58_476D_1CE4_E5B9);
        Self::new(mixed, child)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform draw on the open interval (0, 1).
    pub fn uniform(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 0.5) / TWO_POW_53
    }

    /// Uniform integer in `0..n`. Lemire's multiply-shift with rejection.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below(0)");
        let n = n as u64;
        let threshold = n.wrapping_neg() % n;
        loop {
            let x = self.next_u64();
            let m = u128::from(x) * u128::from(n);
            if (m as u64) >= threshold {
                return (m >> 64) as usize;
            }
        }
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    /// Standard normal via Box-Muller.
    pub fn standard_normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        let u1 = self.uniform();
        let u2 = self.uniform();
        let radius = libm::sqrt(-2.0 * libm::log(u1));
        let angle = 2.0 * std::f64::consts::PI * u2;
        self.spare_normal = Some(radius * libm::sin(angle));
        radius * libm::cos(angle)
    }

    pub fn exponential(&mut self) -> f64 {
        -libm::log(self.uniform())
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}
