//! Counter-based random numbers with explicit stream splitting.
//!
//! [`CounterRng`] is SplitMix64 viewed as a counter-based generator: draw
//! `k` of a stream with key `K` is `mix64(K + (k + 1) * GOLDEN)`, where
//! `mix64` is the SplitMix64 finalizer. Streams are keyed by folding a list
//! of indices into the seed:
//!
//! ```text
//! key = mix64(seed)
//! for i in indices: key = mix64(key ^ mix64(i + GOLDEN))
//! ```
//!
//! Denoising uses `indices = [group, element]`, so each (group, element)
//! pair owns an independent stream and the output does not depend on the
//! order in which pairs are processed. Floats take the top 53 bits of a draw.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 output finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CounterRng {
    key: u64,
    counter: u64,
}

impl CounterRng {
    /// Plain SplitMix64 stream whose state starts at `key`.
    pub fn from_key(key: u64) -> Self {
        CounterRng { key, counter: 0 }
    }

    /// Independent stream derived from `seed` and a path of indices.
    pub fn stream(seed: u64, indices: &[u64]) -> Self {
        let key = indices.iter().fold(mix64(seed), |key, &i| {
            mix64(key ^ mix64(i.wrapping_add(GOLDEN)))
        });
        Self::from_key(key)
    }

    pub fn key(&self) -> u64 {
        self.key
    }

    /// Random access to draw `counter` of this stream.
    pub fn at(&self, counter: u64) -> u64 {
        mix64(
            self.key
                .wrapping_add(counter.wrapping_add(1).wrapping_mul(GOLDEN)),
        )
    }

    pub fn next_u64(&mut self) -> u64 {
        let v = self.at(self.counter);
        self.counter = self.counter.wrapping_add(1);
        v
    }

    /// Uniform in `[0, 1)` with 53 bits of resolution.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[lo, hi)`; returns `lo` exactly when the bounds coincide.
    /// A draw is consumed either way so stream positions stay aligned.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        let u = self.next_f64();
        if lo == hi {
            lo
        } else {
            lo + (hi - lo) * u
        }
    }
}
