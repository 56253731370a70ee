//! Named, seedable random streams.
//!
//! Every consumer of randomness draws from its own [`RngStream`], keyed by a
//! run seed and a [`Purpose`]. Two streams with the same seed but different
//! purposes are independent ChaCha20 streams, so adding draws to one (say,
//! the noise stream) never shifts the sequence seen by another (say, batch
//! sampling).

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

/// What a stream is used for. Each purpose maps to a distinct ChaCha stream id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Purpose {
    Data,
    Init,
    BatchSampling,
    Noise,
    UserSampling,
    LocalSampling,
    Selection,
    Custom(u32),
}

impl Purpose {
    fn stream_id(self) -> u64 {
        match self {
            Purpose::Data => 1,
            Purpose::Init => 2,
            Purpose::BatchSampling => 3,
            Purpose::Noise => 4,
            Purpose::UserSampling => 5,
            Purpose::LocalSampling => 6,
            Purpose::Selection => 7,
            Purpose::Custom(k) => (1 << 32) | u64::from(k),
        }
    }
}

/// A deterministic random stream. Not shared across threads: clone the seed,
/// not the stream.
#[derive(Debug, Clone)]
pub struct RngStream {
    inner: ChaCha20Rng,
}

impl RngStream {
    pub fn new(seed: u64, purpose: Purpose) -> Self {
        let mut inner = ChaCha20Rng::seed_from_u64(seed);
        inner.set_stream(purpose.stream_id());
        Self { inner }
    }

    /// The `index`-th member of a family of streams sharing `seed` and
    /// `purpose`, for per-round or per-user randomness that must not depend
    /// on evaluation order.
    pub fn substream(seed: u64, purpose: Purpose, index: u64) -> Self {
        let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        Self::new(z ^ (z >> 31), purpose)
    }

    /// Uniform draw on the open interval (0, 1).
    pub fn open01(&mut self) -> f64 {
        loop {
            let u: f64 = self.inner.random();
            if u > 0.0 {
                return u;
            }
        }
    }

    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.inner.random::<f64>() < p
    }

    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}
