//! Objective pipeline: MMSE (Wiener) receive filters, per-user rate and the
//! weighted sum-rate. Valid for any precoders, with or without residual
//! inter-user interference.

use std::f64::consts::LN_2;

use crate::error::{Error, Result};
use crate::numerics::{frobenius_sq, hermitian_part, hpd_solve, identity, logdet_hpd, real, svd, CMatrix};
use crate::system::{ChannelSet, DecoderSet, PrecoderSet, SystemConfig};

/// Relative singular-value cutoff below which a decoder column direction is
/// treated as absent.
const DECODER_RANK_TOL: f64 = 1e-12;

/// `sum_{l in users} H_k F_l F_l^H H_k^H + sigma^2 I`, optionally skipping
/// user `skip`.
fn received_covariance(cfg: &SystemConfig, h: &ChannelSet, f: &PrecoderSet, k: usize, skip: Option<usize>) -> CMatrix {
    let hk = h.user(k);
    let mut acc = identity(cfg.rx_antennas) * real(cfg.noise_power);
    for (l, fl) in f.0.iter().enumerate() {
        if Some(l) == skip {
            continue;
        }
        let hf = hk * fl;
        acc += &hf * hf.adjoint();
    }
    hermitian_part(&acc)
}

fn check_inputs(cfg: &SystemConfig, h: &ChannelSet, f: &PrecoderSet) -> Result<()> {
    h.check(cfg)?;
    f.check(cfg)
}

/// Wiener decoders `W_k = (sum_l H_k F_l F_l^H H_k^H + sigma^2 I)^-1 H_k F_k`.
pub fn mmse_decoders(cfg: &SystemConfig, h: &ChannelSet, f: &PrecoderSet) -> Result<DecoderSet> {
    check_inputs(cfg, h, f)?;
    (0..cfg.users)
        .map(|k| {
            let cov = received_covariance(cfg, h, f, k, None);
            hpd_solve(&cov, &(h.user(k) * f.user(k)))
        })
        .collect::<Result<Vec<_>>>()
        .map(DecoderSet)
}

/// Interference-plus-noise covariance after decoding,
/// `R_zk = W_k^H (sum_{l != k} H_k F_l F_l^H H_k^H + sigma^2 I) W_k`.
pub fn interference_covariance(
    cfg: &SystemConfig,
    h: &ChannelSet,
    f: &PrecoderSet,
    w: &DecoderSet,
    k: usize,
) -> CMatrix {
    let wk = w.user(k);
    let inner = received_covariance(cfg, h, f, k, Some(k));
    hermitian_part(&(wk.adjoint() * inner * wk))
}

/// Achievable rate of user `k` in bits/s/Hz:
/// `log2 |I + W^H H F F^H H^H W R_z^-1|`, evaluated as
/// `log2 |R_z + W^H H F F^H H^H W| - log2 |R_z|`.
///
/// A zero decoder or precoder yields 0. When the decoder is column-rank
/// deficient (for instance an MMSE decoder for a precoder with a switched-off
/// stream), both determinants are taken on the decoder's column space, which
/// is the mutual information carried by the filtered output.
pub fn user_rate(cfg: &SystemConfig, h: &ChannelSet, f: &PrecoderSet, w: &DecoderSet, k: usize) -> Result<f64> {
    let wk = w.user(k);
    let fk = f.user(k);
    if frobenius_sq(wk) == 0.0 || frobenius_sq(fk) == 0.0 {
        return Ok(0.0);
    }
    let hf = h.user(k) * fk;
    let signal = hermitian_part(&(&hf * hf.adjoint()));
    let noise = received_covariance(cfg, h, f, k, Some(k));

    let basis = decoder_basis(wk)?;
    let project = |m: &CMatrix| hermitian_part(&(basis.adjoint() * m * &basis));
    let r_z = project(&noise);
    let total = &r_z + project(&signal);

    let degenerate = |_| Error::DegenerateDecoder { user: k };
    let rate = (logdet_hpd(&total).map_err(degenerate)? - logdet_hpd(&r_z).map_err(degenerate)?) / LN_2;
    Ok(rate.max(0.0))
}

// Full-rank decoders are used as they are; rank-deficient ones are replaced by
// an orthonormal basis of their column space.
fn decoder_basis(wk: &CMatrix) -> Result<CMatrix> {
    if wk.ncols() == 1 {
        return Ok(wk.clone());
    }
    let factors = svd(wk)?;
    let top = factors.sigma[0];
    let rank = factors.sigma.iter().filter(|&&s| s > DECODER_RANK_TOL * top).count();
    if rank == wk.ncols() {
        Ok(wk.clone())
    } else {
        Ok(factors.u.columns(0, rank).into_owned())
    }
}

/// `sum_k w_k R_k`, accumulated in user order.
pub fn weighted_sum_rate(cfg: &SystemConfig, h: &ChannelSet, f: &PrecoderSet, w: &DecoderSet) -> Result<f64> {
    check_inputs(cfg, h, f)?;
    w.check(cfg)?;
    let mut total = 0.0;
    for (k, &weight) in cfg.weights.iter().enumerate() {
        total += weight * user_rate(cfg, h, f, w, k)?;
    }
    Ok(total)
}

/// Sum of per-stream mean-square errors `tr E[(x_hat - x)(x_hat - x)^H]` for
/// user `k` with unit-power symbols.
pub fn mean_square_error(cfg: &SystemConfig, h: &ChannelSet, f: &PrecoderSet, w: &CMatrix, k: usize) -> f64 {
    let cov = received_covariance(cfg, h, f, k, None);
    let hf = h.user(k) * f.user(k);
    let cross = w.adjoint() * &hf;
    let quad = w.adjoint() * cov * w;
    let mse = quad - &cross - cross.adjoint() + identity(cfg.streams);
    mse.trace().re
}
