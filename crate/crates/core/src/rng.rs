//! Counter-based Gaussian sampling.
//!
//! Every draw is addressed by `(seed, stream, index, component)` and computed
//! by seeking a ChaCha20 keystream to a fixed word offset, so a value never
//! depends on how many other values were drawn before it. Trajectories are
//! therefore reproducible across platforms, worker counts and horizons:
//! two runs with the same seed and different horizons share the noise prefix.

use nalgebra::{DMatrix, DVector};
use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};

/// Independent noise channels. Each channel is a separate ChaCha stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Stream {
    /// Plant process noise `w_t`.
    Plant,
    /// Controller excitation `eta_t`.
    Excitation,
    /// Hint error directions `E_i`.
    HintDirection,
    /// Externally supplied estimates (scalar variant).
    ExternalEstimate,
    /// Free-form channel for tests, calibration sweeps and instance generation.
    Aux(u32),
}

impl Stream {
    fn id(self) -> u64 {
        match self {
            Stream::Plant => 0,
            Stream::Excitation => 1,
            Stream::HintDirection => 2,
            Stream::ExternalEstimate => 3,
            Stream::Aux(k) => 0x1000 + k as u64,
        }
    }
}

// Two u64 words per Box-Muller draw.
const WORDS_PER_DRAW: u128 = 4;

#[derive(Clone, Debug)]
pub struct CounterRng {
    seed: u64,
    base: ChaCha20Rng,
}

impl CounterRng {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            base: ChaCha20Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn positioned(&self, stream: Stream, slot: u128) -> ChaCha20Rng {
        let mut g = self.base.clone();
        g.set_stream(stream.id());
        g.set_word_pos(slot * WORDS_PER_DRAW);
        g
    }

    /// Standard normal draw at `(stream, slot)`.
    pub fn normal(&self, stream: Stream, slot: u128) -> f64 {
        let mut g = self.positioned(stream, slot);
        box_muller(&mut g)
    }

    /// Uniform draw in `(0, 1]` at `(stream, slot)`.
    pub fn uniform(&self, stream: Stream, slot: u128) -> f64 {
        let mut g = self.positioned(stream, slot);
        unit_open_closed(g.next_u64())
    }

    /// `dim` independent standard normals for time/index `t`.
    pub fn normal_vector(&self, stream: Stream, t: u64, dim: usize) -> DVector<f64> {
        let mut g = self.positioned(stream, t as u128 * dim as u128);
        DVector::from_fn(dim, |_, _| box_muller(&mut g))
    }

    /// `rows x cols` matrix of standard normals addressed by `index`.
    /// Entries are filled column-major.
    pub fn normal_matrix(&self, stream: Stream, index: u64, rows: usize, cols: usize) -> DMatrix<f64> {
        let len = (rows * cols) as u128;
        let mut g = self.positioned(stream, index as u128 * len);
        DMatrix::from_fn(rows, cols, |_, _| box_muller(&mut g))
    }
}

fn unit_open_closed(bits: u64) -> f64 {
    // 53 random mantissa bits mapped to (0, 1].
    ((bits >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
}

fn box_muller(g: &mut ChaCha20Rng) -> f64 {
    let u1 = unit_open_closed(g.next_u64());
    let u2 = unit_open_closed(g.next_u64());
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Mixes a base seed with a run index into a fresh 64-bit seed (SplitMix64 finalizer).
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
