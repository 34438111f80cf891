//! Counter-based random numbers keyed by (seed, stream, sweep, site).
//!
//! Every variate is a pure function of its key, so chains are reproducible,
//! independent streams never communicate, and two chains sharing a stream
//! see identical randomness at matching (sweep, site) counters — which is
//! exactly what the monotone coupling needs.

/// SplitMix64 finalizer; full-avalanche 64-bit mix.
#[inline]
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CounterRng {
    seed: u64,
    stream: u64,
}

impl CounterRng {
    pub fn new(seed: u64, stream: u64) -> Self {
        CounterRng { seed, stream }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    #[inline]
    fn word(&self, sweep: u64, site: u64) -> u64 {
        let mut h = mix(self.seed ^ 0x243f6a8885a308d3);
        h = mix(h ^ self.stream);
        h = mix(h ^ sweep);
        mix(h ^ site)
    }

    /// Uniform variate in [0, 1) for the given counter pair.
    #[inline]
    pub fn uniform(&self, sweep: u64, site: u64) -> f64 {
        (self.word(sweep, site) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}
