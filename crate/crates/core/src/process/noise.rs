//! Counter-based Gaussian noise.
//!
//! A stream is the ChaCha8 keystream selected by `(seed, stream)`; the
//! counter counts 64-bit words already consumed, so any draw can be
//! reproduced by seeking. A standard normal consumes two words `a, b`:
//!
//! ```text
//! u1 = ((a >> 11) + 1) · 2^-53      ∈ (0, 1]
//! u2 = (b >> 11) · 2^-53            ∈ [0, 1)
//! ξ  = sqrt(-2 ln u1) · cos(2π u2)
//! ```

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

const UNIT: f64 = 1.0 / (1u64 << 53) as f64;

/// Source of standard normal and uniform draws.
pub trait NoiseSource {
    fn normal(&mut self) -> f64;
    fn uniform(&mut self) -> f64;
}

#[derive(Debug, Clone)]
pub struct NoiseStream {
    seed: u64,
    stream: u64,
    rng: ChaCha8Rng,
}

impl NoiseStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        NoiseStream { seed, stream, rng }
    }

    /// Stream positioned after `counter` 64-bit words.
    pub fn at(seed: u64, stream: u64, counter: u64) -> Self {
        let mut s = NoiseStream::new(seed, stream);
        s.seek(counter);
        s
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Number of 64-bit words consumed so far.
    pub fn counter(&self) -> u64 {
        (self.rng.get_word_pos() / 2) as u64
    }

    pub fn seek(&mut self, counter: u64) {
        self.rng.set_word_pos(counter as u128 * 2);
    }

    #[inline]
    pub fn next_word(&mut self) -> u64 {
        self.rng.next_u64()
    }
}

impl NoiseSource for NoiseStream {
    #[inline]
    fn normal(&mut self) -> f64 {
        let a = self.next_word();
        let b = self.next_word();
        let u1 = ((a >> 11) + 1) as f64 * UNIT;
        let u2 = (b >> 11) as f64 * UNIT;
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Uniform on `[0, 1)` with 53 random bits.
    #[inline]
    fn uniform(&mut self) -> f64 {
        (self.next_word() >> 11) as f64 * UNIT
    }
}

/// Replays fixed values, for exact arithmetic checks.
#[derive(Debug, Clone, Default)]
pub struct InjectedNoise {
    values: Vec<f64>,
    pos: usize,
}

impl InjectedNoise {
    pub fn new(values: Vec<f64>) -> Self {
        InjectedNoise { values, pos: 0 }
    }

    fn next(&mut self) -> f64 {
        let v = *self.values.get(self.pos).expect("injected noise exhausted");
        self.pos += 1;
        v
    }
}

impl NoiseSource for InjectedNoise {
    fn normal(&mut self) -> f64 {
        self.next()
    }

    fn uniform(&mut self) -> f64 {
        self.next()
    }
}

/// Stream ids used by trajectory `t`: noise, then auxiliary draws (initial
/// points, precision refresh, defragmenting shifts).
pub fn trajectory_streams(seed: u64, t: u64) -> (NoiseStream, NoiseStream) {
    (NoiseStream::new(seed, 2 * t), NoiseStream::new(seed, 2 * t + 1))
}
