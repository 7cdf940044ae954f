//! Counter-based random streams derived from one 64-bit seed.
//!
//! Each purpose gets its own key, and each batch its own ChaCha stream, so a
//! batch's numbers depend only on (seed, purpose, batch index) and results do
//! not change with the number of worker threads.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Named sub-streams.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stream {
    Ordering,
    TiltInit,
    /// Integrand inputs w.
    W,
    /// Accept-reject uniforms.
    Acceptance,
    /// Common random numbers shared by paired multilevel samples.
    Pairs,
    /// Digital shifts of the QMC point set.
    QmcShift,
    /// Synthetic data and other test-instance generation.
    Data,
}

impl Stream {
    fn tag(self) -> u64 {
        match self {
            Stream::Ordering => 0x6f72_6465_7269_6e67,
            Stream::TiltInit => 0x7469_6c74_696e_6974,
            Stream::W => 0x7700_0000_0000_0077,
            Stream::Acceptance => 0x6163_6365_7074_0001,
            Stream::Pairs => 0x7061_6972_7300_0002,
            Stream::QmcShift => 0x716d_6373_6869_6674,
            Stream::Data => 0x6461_7461_0000_0003,
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Generator for batch `index` of sub-stream `stream`.
pub fn stream_rng(seed: u64, stream: Stream, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ stream.tag()));
    rng.set_stream(index);
    rng
}

/// Uniform draw strictly inside (0, 1).
#[inline]
pub fn open01<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Standard normal draw by inversion.
#[inline]
pub fn std_normal<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    crate::normal::quantile(open01(rng))
}
