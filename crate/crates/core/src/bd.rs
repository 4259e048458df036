//! Block-diagonalization baseline.
//!
//! Each user's precoder is confined to the (numerical) null space of the other
//! users' stacked channels, the resulting interference-free block is split into
//! parallel streams by a second SVD, and power is spread over all streams by
//! weighted water-filling under the total power budget.
//!
//! When the antenna counts leave no exact null space (`N_t - (K-1) N_r < d`),
//! the minimum-leakage directions are used anyway. The closed-form rate is then
//! meaningless and the design must be scored with
//! [`crate::link::weighted_sum_rate`].

use std::f64::consts::LN_2;

use crate::error::{Error, Result};
use crate::numerics::{frobenius, svd, CMatrix};
use crate::system::{ChannelSet, DecoderSet, PrecoderSet, SystemConfig};

const WF_MAX_ITERS: usize = 200;
const WF_REL_TOL: f64 = 1e-10;
/// Leakage above this fraction of `||H_int||_F` rules out the closed form.
const CLOSED_FORM_LEAKAGE_TOL: f64 = 1e-6;

/// Other users' channels stacked in ascending user order, or nothing for a
/// single-user system.
#[derive(Debug, Clone, PartialEq)]
pub enum InterferenceMatrix {
    Empty { tx_antennas: usize },
    Stacked(CMatrix),
}

impl InterferenceMatrix {
    pub fn tx_antennas(&self) -> usize {
        match self {
            InterferenceMatrix::Empty { tx_antennas } => *tx_antennas,
            InterferenceMatrix::Stacked(m) => m.ncols(),
        }
    }

    pub fn frobenius(&self) -> f64 {
        match self {
            InterferenceMatrix::Empty { .. } => 0.0,
            InterferenceMatrix::Stacked(m) => frobenius(m),
        }
    }

    /// `||H_int * b||_F`.
    pub fn leakage(&self, b: &CMatrix) -> f64 {
        match self {
            InterferenceMatrix::Empty { .. } => 0.0,
            InterferenceMatrix::Stacked(m) => frobenius(&(m * b)),
        }
    }
}

pub fn interference_matrix(h: &ChannelSet, k: usize) -> InterferenceMatrix {
    let others: Vec<&CMatrix> = h.0.iter().enumerate().filter(|(l, _)| *l != k).map(|(_, m)| m).collect();
    let tx_antennas = h.user(k).ncols();
    if others.is_empty() {
        return InterferenceMatrix::Empty { tx_antennas };
    }
    let rows: usize = others.iter().map(|m| m.nrows()).sum();
    let mut stacked = CMatrix::zeros(rows, tx_antennas);
    let mut at = 0;
    for m in others {
        stacked.view_mut((at, 0), m.shape()).copy_from(m);
        at += m.nrows();
    }
    InterferenceMatrix::Stacked(stacked)
}

/// The `d` right-singular directions of `h_int` with the smallest singular
/// values (the last `d` columns of the full `V`).
pub fn null_space_basis(h_int: &InterferenceMatrix, d: usize) -> Result<CMatrix> {
    let n = h_int.tx_antennas();
    if d > n {
        return Err(Error::Shape(format!("cannot pick {d} directions from {n} antennas")));
    }
    match h_int {
        InterferenceMatrix::Empty { .. } => Ok(CMatrix::identity(n, d)),
        InterferenceMatrix::Stacked(m) => Ok(svd(m)?.v.columns(n - d, d).into_owned()),
    }
}

/// Relative singular-value cutoff used to count the interference matrix rank.
const RANK_TOL: f64 = 1e-10;

/// Orthonormal basis of the whole numerical null space of `h_int`, widened to
/// the `d` least-leaking directions when the null space is thinner than `d`.
/// Selecting streams inside a wider null space is left to [`effective_svd`].
pub fn null_space(h_int: &InterferenceMatrix, d: usize) -> Result<CMatrix> {
    let n = h_int.tx_antennas();
    if d > n {
        return Err(Error::Shape(format!("cannot pick {d} directions from {n} antennas")));
    }
    match h_int {
        InterferenceMatrix::Empty { .. } => Ok(CMatrix::identity(n, n)),
        InterferenceMatrix::Stacked(m) => {
            let f = svd(m)?;
            let top = f.sigma.first().copied().unwrap_or(0.0);
            let rank = f.sigma.iter().filter(|&&s| s > RANK_TOL * top).count();
            let width = (n - rank).max(d);
            Ok(f.v.columns(n - width, width).into_owned())
        }
    }
}

/// Parallel-stream split of one user's effective channel `H_k B_k`.
#[derive(Debug, Clone)]
pub struct EffectiveChannel {
    /// First `d` right-singular vectors, `width x d` for a basis of `width`
    /// columns.
    pub d_mat: CMatrix,
    /// Stream gains, non-increasing.
    pub lambda: Vec<f64>,
    /// First `d` left-singular vectors, `N_r x d`.
    pub u_tilde: CMatrix,
}

/// SVD of `H_k B_k`, keeping the `streams` strongest directions.
pub fn effective_svd(h_k: &CMatrix, b_k: &CMatrix, streams: usize) -> Result<EffectiveChannel> {
    if h_k.ncols() != b_k.nrows() {
        return Err(Error::Shape(format!(
            "channel is {}x{} but basis is {}x{}",
            h_k.nrows(),
            h_k.ncols(),
            b_k.nrows(),
            b_k.ncols()
        )));
    }
    let d = streams;
    if d > h_k.nrows() || d > b_k.ncols() {
        return Err(Error::Shape(format!(
            "{d} streams exceed {} receive antennas or {} basis directions",
            h_k.nrows(),
            b_k.ncols()
        )));
    }
    let f = svd(&(h_k * b_k))?;
    Ok(EffectiveChannel {
        d_mat: f.v.columns(0, d).into_owned(),
        lambda: f.sigma[..d].to_vec(),
        u_tilde: f.u.columns(0, d).into_owned(),
    })
}

/// Null-space bases and stream decompositions for every user.
#[derive(Debug, Clone)]
pub struct BdDecomposition {
    /// Null-space bases, `N_t x width` with `width >= d`.
    pub b: Vec<CMatrix>,
    pub d_mat: Vec<CMatrix>,
    pub lambda: Vec<Vec<f64>>,
    pub u_tilde: Vec<CMatrix>,
    /// `||H_int,k B_k||_F`, the interference leakage of user `k`'s basis.
    pub residual: Vec<f64>,
    /// `||H_int,k||_F`, the scale `residual` is judged against.
    pub interference_norm: Vec<f64>,
}

impl BdDecomposition {
    pub fn compute(cfg: &SystemConfig, h: &ChannelSet) -> Result<Self> {
        h.check(cfg)?;
        let mut out = BdDecomposition {
            b: Vec::with_capacity(cfg.users),
            d_mat: Vec::with_capacity(cfg.users),
            lambda: Vec::with_capacity(cfg.users),
            u_tilde: Vec::with_capacity(cfg.users),
            residual: Vec::with_capacity(cfg.users),
            interference_norm: Vec::with_capacity(cfg.users),
        };
        for k in 0..cfg.users {
            let h_int = interference_matrix(h, k);
            let b = null_space(&h_int, cfg.streams)?;
            let eff = effective_svd(h.user(k), &b, cfg.streams)?;
            out.residual.push(h_int.leakage(&b));
            out.interference_norm.push(h_int.frobenius());
            out.b.push(b);
            out.d_mat.push(eff.d_mat);
            out.lambda.push(eff.lambda);
            out.u_tilde.push(eff.u_tilde);
        }
        Ok(out)
    }
}

/// Per-stream powers `p[k][i]` and the water level's dual variable.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerAllocation {
    pub p: Vec<Vec<f64>>,
    pub lambda_dual: f64,
    /// Set when no stream has a positive weighted gain; `p` is then all zero.
    pub degenerate: bool,
}

impl PowerAllocation {
    pub fn total(&self) -> f64 {
        self.p.iter().flatten().sum()
    }
}

/// `sum_k sum_i w_k log2(1 + lambda_ki^2 p_ki / sigma^2)`.
pub fn parallel_wsr(cfg: &SystemConfig, lambda: &[Vec<f64>], p: &[Vec<f64>]) -> f64 {
    let mut total = 0.0;
    for (k, (gains, powers)) in lambda.iter().zip(p).enumerate() {
        for (&g, &pk) in gains.iter().zip(powers) {
            total += cfg.weights[k] * (1.0 + g * g * pk / cfg.noise_power).log2();
        }
    }
    total
}

/// Weighted water-filling over all users' streams:
/// `p_ki = max(0, w_k / (mu ln 2) - sigma^2 / lambda_ki^2)` with the dual
/// `mu` chosen so the budget is spent exactly. Streams with zero weight or
/// zero gain get nothing.
pub fn water_fill(cfg: &SystemConfig, lambda: &[Vec<f64>]) -> Result<PowerAllocation> {
    if lambda.len() != cfg.weights.len() {
        return Err(Error::Shape(format!("{} gain vectors for {} users", lambda.len(), cfg.weights.len())));
    }
    if lambda.iter().flatten().any(|g| !(*g >= 0.0 && g.is_finite())) {
        return Err(Error::Shape("stream gains must be finite and non-negative".into()));
    }

    // (user, stream, weight, sigma^2 / gain^2) for every usable stream
    let channels: Vec<(usize, usize, f64, f64)> = lambda
        .iter()
        .enumerate()
        .flat_map(|(k, gains)| gains.iter().enumerate().map(move |(i, &g)| (k, i, g)))
        .filter(|&(k, _, g)| cfg.weights[k] > 0.0 && g > 0.0)
        .map(|(k, i, g)| (k, i, cfg.weights[k], cfg.noise_power / (g * g)))
        .collect();

    let mut p: Vec<Vec<f64>> = lambda.iter().map(|g| vec![0.0; g.len()]).collect();
    if channels.is_empty() {
        return Ok(PowerAllocation { p, lambda_dual: 0.0, degenerate: true });
    }

    let budget = cfg.p_max;
    let level = |mu: f64, w: f64, floor: f64| (w / (mu * LN_2) - floor).max(0.0);
    let spent = |mu: f64| channels.iter().map(|&(_, _, w, fl)| level(mu, w, fl)).sum::<f64>();

    // at mu_hi every stream is dry
    let mu_hi0 = channels.iter().map(|&(_, _, w, fl)| w / (fl * LN_2)).fold(0.0, f64::max);
    let mut hi = mu_hi0;
    let mut lo = mu_hi0;
    while spent(lo) < budget {
        hi = lo;
        lo *= 0.5;
    }
    let mut mu = lo;
    for _ in 0..WF_MAX_ITERS {
        let s = spent(mu);
        if (s - budget).abs() <= WF_REL_TOL * budget {
            break;
        }
        if s > budget {
            lo = mu;
        } else {
            hi = mu;
        }
        mu = 0.5 * (lo + hi);
    }

    // Solve the dual exactly on the active set; keep it if the set is stable.
    let active: Vec<bool> = channels.iter().map(|&(_, _, w, fl)| level(mu, w, fl) > 0.0).collect();
    let (w_sum, floor_sum) = channels
        .iter()
        .zip(&active)
        .filter(|(_, &a)| a)
        .fold((0.0, 0.0), |(ws, fs), (&(_, _, w, fl), _)| (ws + w, fs + fl));
    let exact = w_sum / (LN_2 * (budget + floor_sum));
    let consistent = channels.iter().zip(&active).all(|(&(_, _, w, fl), &a)| {
        let raw = w / (exact * LN_2) - fl;
        if a {
            raw > 0.0
        } else {
            raw <= 0.0
        }
    });
    if consistent {
        mu = exact;
    }

    for &(k, i, w, fl) in &channels {
        p[k][i] = level(mu, w, fl);
    }
    Ok(PowerAllocation { p, lambda_dual: mu, degenerate: false })
}

#[derive(Debug, Clone)]
pub struct BdDesign {
    pub decomposition: BdDecomposition,
    pub power: PowerAllocation,
}

/// A complete BD transceiver: its design data plus the precoders
/// `F_k = B_k D_k P_k^(1/2)` and decoders `W_k = U~_k`.
#[derive(Debug, Clone)]
pub struct BdSolution {
    pub design: BdDesign,
    pub precoders: PrecoderSet,
    pub decoders: DecoderSet,
}

pub fn bd_design(cfg: &SystemConfig, h: &ChannelSet) -> Result<BdSolution> {
    cfg.check()?;
    let decomposition = BdDecomposition::compute(cfg, h)?;
    let power = water_fill(cfg, &decomposition.lambda)?;

    let precoders = PrecoderSet(
        (0..cfg.users)
            .map(|k| {
                let mut f = &decomposition.b[k] * &decomposition.d_mat[k];
                for (i, &pk) in power.p[k].iter().enumerate() {
                    f.column_mut(i).scale_mut(pk.sqrt());
                }
                f
            })
            .collect(),
    );
    let decoders = DecoderSet(decomposition.u_tilde.clone());
    debug_assert!(precoders.total_power() <= cfg.p_max + 1e-8);
    Ok(BdSolution { design: BdDesign { decomposition, power }, precoders, decoders })
}

/// Closed-form BD weighted sum-rate. Only valid when every user's basis nulls
/// its interference.
pub fn bd_rate_closed_form(cfg: &SystemConfig, design: &BdDesign) -> Result<f64> {
    let dec = &design.decomposition;
    for (user, (&residual, &norm)) in dec.residual.iter().zip(&dec.interference_norm).enumerate() {
        if residual > CLOSED_FORM_LEAKAGE_TOL * norm {
            return Err(Error::BdInfeasible { user, residual });
        }
    }
    Ok(parallel_wsr(cfg, &dec.lambda, &design.power.p))
}
