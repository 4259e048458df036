//! Scenario configuration and the matrix containers shared by every design
//! algorithm.

use std::fmt;

use crate::error::{Error, Result};
use crate::numerics::{frobenius_sq, real, CMatrix};

/// Scalars describing one downlink scenario. Every user has the same antenna
/// count, stream count and noise power.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig {
    pub users: usize,
    pub tx_antennas: usize,
    pub rx_antennas: usize,
    pub streams: usize,
    /// Receiver noise power, linear.
    pub noise_power: f64,
    /// Total transmit power budget, linear.
    pub p_max: f64,
    pub weights: Vec<f64>,
}

impl SystemConfig {
    /// Scenario with unit noise power and `p_max = 10^(snr_db / 10)`.
    pub fn from_snr_db(
        users: usize,
        tx_antennas: usize,
        rx_antennas: usize,
        streams: usize,
        snr_db: f64,
        weights: Vec<f64>,
    ) -> Self {
        Self {
            users,
            tx_antennas,
            rx_antennas,
            streams,
            noise_power: 1.0,
            p_max: snr_to_power(snr_db, 1.0),
            weights,
        }
    }

    pub fn with_p_max(&self, p_max: f64) -> Self {
        Self { p_max, ..self.clone() }
    }

    /// Nullspace dimension margin `N_t - (K-1) N_r - d`; negative when block
    /// diagonalization cannot null all inter-user interference.
    pub fn bd_margin(&self) -> i64 {
        self.tx_antennas as i64
            - (self.users as i64 - 1) * self.rx_antennas as i64
            - self.streams as i64
    }

    pub fn bd_feasible(&self) -> bool {
        self.bd_margin() >= 0
    }

    pub fn validate(&self) -> Validation {
        let mut errors = Vec::new();
        if self.users == 0 {
            errors.push("users must be at least 1".to_string());
        }
        if self.tx_antennas == 0 {
            errors.push("tx antennas must be at least 1".to_string());
        }
        if self.rx_antennas == 0 {
            errors.push("rx antennas must be at least 1".to_string());
        }
        if self.streams == 0 {
            errors.push("streams must be at least 1".to_string());
        }
        if self.streams > self.rx_antennas {
            errors.push(format!(
                "streams d={} must not exceed rx antennas N_r={}",
                self.streams, self.rx_antennas
            ));
        }
        if self.streams > self.tx_antennas {
            errors.push(format!(
                "streams d={} must not exceed tx antennas N_t={}",
                self.streams, self.tx_antennas
            ));
        }
        if !(self.noise_power > 0.0 && self.noise_power.is_finite()) {
            errors.push(format!("noise power must be positive and finite, got {}", self.noise_power));
        }
        if !(self.p_max > 0.0 && self.p_max.is_finite()) {
            errors.push(format!("power budget must be positive and finite, got {}", self.p_max));
        }
        if self.weights.len() != self.users {
            errors.push(format!(
                "weights has {} entries but users K={}",
                self.weights.len(),
                self.users
            ));
        }
        if self.weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            errors.push("weights must be finite and non-negative".to_string());
        }
        if !self.weights.iter().any(|&w| w > 0.0) {
            errors.push("at least one weight must be positive".to_string());
        }

        let mut notes = Vec::new();
        let bd_feasible = self.bd_feasible();
        if !bd_feasible && self.users >= 1 {
            notes.push(format!(
                "N_t - (K-1)N_r = {} < d = {}: block diagonalization cannot fully null interference",
                self.tx_antennas as i64 - (self.users as i64 - 1) * self.rx_antennas as i64,
                self.streams
            ));
        }
        Validation { errors, notes, bd_feasible }
    }

    /// Fails with every violated invariant when the configuration is unusable.
    pub fn check(&self) -> Result<()> {
        let v = self.validate();
        if v.errors.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(v.errors))
        }
    }
}

pub fn snr_to_power(snr_db: f64, noise_power: f64) -> f64 {
    noise_power * 10f64.powf(snr_db / 10.0)
}

/// Outcome of [`SystemConfig::validate`].
#[derive(Debug, Clone, PartialEq)]
pub struct Validation {
    pub errors: Vec<String>,
    /// Warnings that do not make the configuration invalid.
    pub notes: Vec<String>,
    pub bd_feasible: bool,
}

impl Validation {
    pub fn is_ok(&self) -> bool {
        self.errors.is_empty()
    }
}

fn check_shapes(what: &str, mats: &[CMatrix], count: usize, rows: usize, cols: usize) -> Result<()> {
    if mats.len() != count {
        return Err(Error::Shape(format!("{what}: expected {count} matrices, got {}", mats.len())));
    }
    for (k, m) in mats.iter().enumerate() {
        if m.shape() != (rows, cols) {
            return Err(Error::Shape(format!(
                "{what}[{k}]: expected {rows}x{cols}, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
    }
    Ok(())
}

/// Channel matrices `H_k`, each `N_r x N_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet(pub Vec<CMatrix>);

impl ChannelSet {
    pub fn check(&self, cfg: &SystemConfig) -> Result<()> {
        check_shapes("channel", &self.0, cfg.users, cfg.rx_antennas, cfg.tx_antennas)
    }

    pub fn users(&self) -> usize {
        self.0.len()
    }

    pub fn user(&self, k: usize) -> &CMatrix {
        &self.0[k]
    }
}

/// Precoders `F_k`, each `N_t x d`. Particle velocities share this layout.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecoderSet(pub Vec<CMatrix>);

/// A particle velocity has the same layout as a precoder set.
pub type Velocity = PrecoderSet;

impl PrecoderSet {
    pub fn zeros(cfg: &SystemConfig) -> Self {
        Self(vec![CMatrix::zeros(cfg.tx_antennas, cfg.streams); cfg.users])
    }

    pub fn check(&self, cfg: &SystemConfig) -> Result<()> {
        check_shapes("precoder", &self.0, cfg.users, cfg.tx_antennas, cfg.streams)
    }

    pub fn users(&self) -> usize {
        self.0.len()
    }

    pub fn user(&self, k: usize) -> &CMatrix {
        &self.0[k]
    }

    pub fn total_power(&self) -> f64 {
        total_power(self)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self(self.0.iter().map(|f| f * real(factor)).collect())
    }

    /// `self + alpha * other`.
    pub fn add_scaled(&self, alpha: f64, other: &Self) -> Self {
        Self(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(a, b)| a + b * real(alpha))
                .collect(),
        )
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add_scaled(-1.0, other)
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(crate::numerics::is_finite)
    }
}

/// Total transmit power `sum_k tr(F_k F_k^H)`.
pub fn total_power(f: &PrecoderSet) -> f64 {
    f.0.iter().map(frobenius_sq).sum()
}

/// Receive filters `W_k`, each `N_r x d`.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderSet(pub Vec<CMatrix>);

impl DecoderSet {
    pub fn check(&self, cfg: &SystemConfig) -> Result<()> {
        check_shapes("decoder", &self.0, cfg.users, cfg.rx_antennas, cfg.streams)
    }

    pub fn user(&self, k: usize) -> &CMatrix {
        &self.0[k]
    }
}

impl fmt::Display for SystemConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "({}x{},{})^{} sigma2={} p_max={} weights={:?}",
            self.tx_antennas, self.rx_antennas, self.streams, self.users, self.noise_power, self.p_max, self.weights
        )
    }
}
