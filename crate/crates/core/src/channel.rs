//! Rayleigh-fading channel draws and counter-based random streams.
//!
//! Every random quantity in a run is addressed by a [`RngStream`]: a master
//! seed plus a `(domain, realization, particle, iteration)` tuple. The tuple is
//! hashed into a ChaCha8 key, so a stream's sequence depends only on its
//! address and never on which worker consumes it or in what order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::numerics::{c, CMatrix};
use crate::system::{ChannelSet, SystemConfig};

/// Which part of an experiment a stream feeds. Channel draws and swarm
/// randomness never share a domain, so swarm settings cannot perturb the
/// channels drawn for a given seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StreamDomain {
    Channel,
    SwarmInit,
    Velocity,
}

impl StreamDomain {
    fn tag(self) -> u64 {
        match self {
            StreamDomain::Channel => 0x6368_616e,
            StreamDomain::SwarmInit => 0x696e_6974,
            StreamDomain::Velocity => 0x7665_6c6f,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngStream {
    pub master_seed: u64,
    pub domain: StreamDomain,
    pub realization: u64,
    pub particle: u64,
    pub iteration: u64,
}

impl RngStream {
    pub fn new(master_seed: u64, domain: StreamDomain) -> Self {
        Self { master_seed, domain, realization: 0, particle: 0, iteration: 0 }
    }

    pub fn channel(master_seed: u64, realization: u64) -> Self {
        Self::new(master_seed, StreamDomain::Channel).realization(realization)
    }

    pub fn domain(self, domain: StreamDomain) -> Self {
        Self { domain, ..self }
    }

    pub fn realization(self, realization: u64) -> Self {
        Self { realization, ..self }
    }

    pub fn particle(self, particle: u64) -> Self {
        Self { particle, ..self }
    }

    pub fn iteration(self, iteration: u64) -> Self {
        Self { iteration, ..self }
    }

    /// Opens the stream at its first draw.
    pub fn open(&self) -> StreamRng {
        let mut state = self.master_seed;
        let mut seed = [0u8; 32];
        let words = [self.domain.tag(), self.realization, self.particle, self.iteration];
        for w in words {
            state = splitmix64(state ^ splitmix64(w));
        }
        for chunk in seed.chunks_exact_mut(8) {
            state = splitmix64(state);
            chunk.copy_from_slice(&state.to_le_bytes());
        }
        StreamRng(ChaCha8Rng::from_seed(seed))
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Source of scalars on `[0, 1]` for the swarm's velocity coefficients.
pub trait UniformSource {
    fn uniform01(&mut self) -> f64;
}

/// Always returns the same value; pins the velocity coefficients in tests.
#[derive(Debug, Clone, Copy)]
pub struct ConstantUniform(pub f64);

impl UniformSource for ConstantUniform {
    fn uniform01(&mut self) -> f64 {
        self.0
    }
}

/// An opened [`RngStream`].
#[derive(Debug, Clone)]
pub struct StreamRng(ChaCha8Rng);

impl StreamRng {
    /// One circularly-symmetric CN(0, 1) sample: real and imaginary parts are
    /// independent N(0, 1/2).
    pub fn complex_gaussian(&mut self) -> num_complex::Complex64 {
        let re: f64 = self.0.sample(StandardNormal);
        let im: f64 = self.0.sample(StandardNormal);
        c(re * std::f64::consts::FRAC_1_SQRT_2, im * std::f64::consts::FRAC_1_SQRT_2)
    }

    /// Matrix of i.i.d. CN(0, 1) entries, filled row by row.
    pub fn complex_gaussian_matrix(&mut self, rows: usize, cols: usize) -> CMatrix {
        let mut m = CMatrix::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m[(i, j)] = self.complex_gaussian();
            }
        }
        m
    }
}

impl UniformSource for StreamRng {
    fn uniform01(&mut self) -> f64 {
        self.0.random::<f64>()
    }
}

/// Draws one block-fading realization: `K` channel matrices with i.i.d.
/// CN(0, 1) entries.
pub fn gen_channels(cfg: &SystemConfig, stream: &RngStream) -> ChannelSet {
    let mut rng = stream.open();
    ChannelSet(
        (0..cfg.users)
            .map(|_| rng.complex_gaussian_matrix(cfg.rx_antennas, cfg.tx_antennas))
            .collect(),
    )
}
