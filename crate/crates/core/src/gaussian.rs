//! Counter-based standard-normal streams.
//!
//! Every stream is a ChaCha8 keystream keyed by a 64-bit seed and addressed by
//! a 64-bit stream id. Element `j` of a stream is derived from the pair of
//! 64-bit words at keystream position `4 * (j / 2)` with the Box-Muller
//! transform (cosine branch for even `j`, sine branch for odd `j`), then
//! rounded to `f32`. Because the mapping from `(seed, stream, j)` to a value is
//! fixed, any element can be regenerated in isolation and a sequential fill
//! agrees bit-for-bit with random access.
//!
//! Stream ids carry a namespace in their top 16 bits so that projection rows
//! and LSH hyperplanes drawn from the same seed never overlap.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Top-16-bit namespace of a stream id.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Namespace {
    Projection = 0,
    LshHyperplane = 1,
    Synthetic = 2,
    PairSampling = 3,
}

const TWO_PI: f64 = std::f64::consts::TAU;
const INV_2_53: f64 = 1.0 / (1u64 << 53) as f64;

/// A seekable stream of standard-normal `f32` samples.
#[derive(Clone)]
pub struct GaussianStream {
    rng: ChaCha8Rng,
}

impl GaussianStream {
    pub fn new(seed: u64, namespace: Namespace, index: u64) -> Self {
        debug_assert!(index < (1 << 48));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(((namespace as u64) << 48) | index);
        GaussianStream { rng }
    }

    #[inline]
    fn next_pair(&mut self) -> (f32, f32) {
        let a = self.rng.next_u64();
        let b = self.rng.next_u64();
        // u1 in (0, 1], u2 in [0, 1)
        let u1 = ((a >> 11) + 1) as f64 * INV_2_53;
        let u2 = (b >> 11) as f64 * INV_2_53;
        let radius = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (TWO_PI * u2).sin_cos();
        ((radius * c) as f32, (radius * s) as f32)
    }

    /// Fills `out` with elements `0..out.len()` of the stream.
    pub fn fill(&mut self, out: &mut [f32]) {
        self.rng.set_word_pos(0);
        let mut chunks = out.chunks_exact_mut(2);
        for pair in &mut chunks {
            let (z0, z1) = self.next_pair();
            pair[0] = z0;
            pair[1] = z1;
        }
        if let [last] = chunks.into_remainder() {
            *last = self.next_pair().0;
        }
    }

    /// Element `j` of the stream.
    pub fn at(&mut self, j: u64) -> f32 {
        self.rng.set_word_pos(4 * (j / 2) as u128);
        let (z0, z1) = self.next_pair();
        if j.is_multiple_of(2) {
            z0
        } else {
            z1
        }
    }
}
