use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};

/// Deterministic random stream.
///
/// Backed by ChaCha8, a counter-based generator: the draw sequence depends
/// only on `(seed, stream)`, never on platform or evaluation order. Parallel
/// work derives one substream per instance with [`RngState::substream`].
#[derive(Debug, Clone)]
pub struct RngState {
    seed: u64,
    stream: u64,
    inner: ChaCha8Rng,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngState {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        RngState {
            seed,
            stream,
            inner,
        }
    }

    /// Substream addressed by an arbitrary key path, e.g.
    /// `[purpose, epoch, batch, instance]`.
    pub fn substream(seed: u64, keys: &[u64]) -> Self {
        let stream = keys
            .iter()
            .fold(0x5eed_u64, |acc, &k| splitmix64(acc ^ splitmix64(k)));
        Self::with_stream(seed, stream)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform draw on the open interval (0, 1).
    pub fn uniform_open(&mut self) -> f64 {
        ((self.inner.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    pub(crate) fn chi_squared(&mut self, dof: f64) -> f64 {
        // dof is validated by the caller
        ChiSquared::new(dof)
            .expect("positive degrees of freedom")
            .sample(&mut self.inner)
    }

    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        items.shuffle(&mut self.inner);
    }
}
