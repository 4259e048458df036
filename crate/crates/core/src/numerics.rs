//! Small dense complex kernels: full SVD, Hermitian positive-definite solve
//! and log-determinant.
//!
//! Matrices here are tiny (a handful of antennas), so every routine favours
//! accuracy over speed. The SVD always returns full square unitary factors;
//! trailing columns of `v` span the numerical null space, which is what the
//! block-diagonalization baseline relies on.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Dense complex matrix used throughout the crate.
pub type CMatrix = DMatrix<Complex64>;

const SVD_MAX_ITERS: usize = 1000;
const HERMITIAN_TOL: f64 = 1e-12;

/// Full singular value decomposition `a = u * diag(sigma) * v^H`.
#[derive(Debug, Clone)]
pub struct SvdFactors {
    /// m x m, unitary.
    pub u: CMatrix,
    /// min(m, n) singular values, non-increasing.
    pub sigma: Vec<f64>,
    /// n x n, unitary.
    pub v: CMatrix,
}

impl SvdFactors {
    /// Rebuilds `u * diag(sigma) * v^H`.
    pub fn reconstruct(&self) -> CMatrix {
        let (m, n) = (self.u.nrows(), self.v.nrows());
        let mut s = CMatrix::zeros(m, n);
        for (i, &x) in self.sigma.iter().enumerate() {
            s[(i, i)] = Complex64::new(x, 0.0);
        }
        &self.u * s * self.v.adjoint()
    }
}

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn real(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

pub fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

/// Squared Frobenius norm, summed in row-major order.
pub fn frobenius_sq(a: &CMatrix) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum()
}

pub fn frobenius(a: &CMatrix) -> f64 {
    frobenius_sq(a).sqrt()
}

pub fn is_finite(a: &CMatrix) -> bool {
    a.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

fn ensure_finite(a: &CMatrix) -> Result<()> {
    if is_finite(a) {
        Ok(())
    } else {
        Err(Error::NonFinite { rows: a.nrows(), cols: a.ncols() })
    }
}

fn ensure_hermitian(a: &CMatrix) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(Error::Shape(format!(
            "expected a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    ensure_finite(a)?;
    let asymmetry = frobenius(&(a - a.adjoint()));
    if asymmetry > HERMITIAN_TOL * frobenius(a).max(1.0) {
        return Err(Error::NotHermitian { dim: a.nrows(), asymmetry });
    }
    Ok(())
}

/// Full SVD with singular values sorted in non-increasing order.
pub fn svd(a: &CMatrix) -> Result<SvdFactors> {
    let (m, n) = a.shape();
    if m == 0 || n == 0 {
        return Err(Error::Shape(format!("cannot factor an empty {m}x{n} matrix")));
    }
    ensure_finite(a)?;
    if m > n {
        // a^H = v sigma u^H
        let t = svd_wide(&a.adjoint())?;
        return Ok(SvdFactors { u: t.v, sigma: t.sigma, v: t.u });
    }
    svd_wide(a)
}

// m <= n. The matrix is padded with zero rows to n x n so the backend hands
// back a full right factor; the left factor is rebuilt from a * v / sigma and
// completed to a unitary basis.
fn svd_wide(a: &CMatrix) -> Result<SvdFactors> {
    let (m, n) = a.shape();
    let mut padded = CMatrix::zeros(n, n);
    padded.view_mut((0, 0), (m, n)).copy_from(a);

    let fail = || Error::SvdNoConvergence { rows: m, cols: n };
    let dec = padded
        .try_svd(true, true, f64::EPSILON, SVD_MAX_ITERS)
        .ok_or_else(fail)?;
    let v_t = dec.v_t.ok_or_else(fail)?;
    let values = dec.singular_values;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| values[j].total_cmp(&values[i]).then(i.cmp(&j)));

    let v_full = v_t.adjoint();
    let mut v = CMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        v.set_column(dst, &v_full.column(src));
    }
    let sigma: Vec<f64> = order.iter().take(m).map(|&i| values[i].max(0.0)).collect();

    let cutoff = sigma.first().copied().unwrap_or(0.0) * 1e-13 * n as f64;
    let mut left = Vec::with_capacity(m);
    for (i, &s) in sigma.iter().enumerate() {
        if s > cutoff && s > f64::MIN_POSITIVE {
            let col = a * v.column(i) / real(s);
            left.push(col.column(0).into_owned());
        } else {
            break;
        }
    }
    let u = complete_orthonormal(left, m);
    if !is_finite(&u) || !is_finite(&v) {
        return Err(fail());
    }
    Ok(SvdFactors { u, sigma, v })
}

/// Orthonormalizes `cols` in order and completes them to a dim x dim unitary
/// matrix with standard basis vectors.
fn complete_orthonormal(cols: Vec<nalgebra::DVector<Complex64>>, dim: usize) -> CMatrix {
    let mut basis: Vec<nalgebra::DVector<Complex64>> = Vec::with_capacity(dim);
    let candidates = cols.into_iter().chain((0..dim).map(|j| {
        let mut e = nalgebra::DVector::zeros(dim);
        e[j] = real(1.0);
        e
    }));
    for mut x in candidates {
        if basis.len() == dim {
            break;
        }
        let before = x.norm();
        // two passes of modified Gram-Schmidt
        for _ in 0..2 {
            for q in &basis {
                let proj = q.dotc(&x);
                x -= q * proj;
            }
        }
        let after = x.norm();
        if after > 1e-8 * before.max(1e-300) && after > 0.0 {
            basis.push(x / real(after));
        }
    }
    let mut u = CMatrix::zeros(dim, dim);
    for (j, q) in basis.iter().enumerate() {
        u.set_column(j, q);
    }
    u
}

/// Lower-triangular Cholesky factor of a Hermitian positive-definite matrix.
/// Every pivot must be strictly positive and finite.
fn cholesky(a: &CMatrix) -> Result<CMatrix> {
    ensure_hermitian(a)?;
    let n = a.nrows();
    let mut l = CMatrix::zeros(n, n);
    for j in 0..n {
        let mut diag = a[(j, j)].re;
        for p in 0..j {
            diag -= l[(j, p)].norm_sqr();
        }
        if !(diag > 0.0) || !diag.is_finite() {
            return Err(Error::NotPositiveDefinite { dim: n });
        }
        let pivot = diag.sqrt();
        l[(j, j)] = real(pivot);
        for i in j + 1..n {
            let mut acc = a[(i, j)];
            for p in 0..j {
                acc -= l[(i, p)] * l[(j, p)].conj();
            }
            l[(i, j)] = acc / pivot;
        }
    }
    Ok(l)
}

/// Solves `a * x = b` for Hermitian positive-definite `a`.
pub fn hpd_solve(a: &CMatrix, b: &CMatrix) -> Result<CMatrix> {
    if b.nrows() != a.nrows() {
        return Err(Error::Shape(format!(
            "right-hand side has {} rows, system has {}",
            b.nrows(),
            a.nrows()
        )));
    }
    ensure_finite(b)?;
    let l = cholesky(a)?;
    let n = a.nrows();
    let mut x = b.clone();
    for col in 0..x.ncols() {
        // forward: l y = b
        for i in 0..n {
            let mut acc = x[(i, col)];
            for p in 0..i {
                acc -= l[(i, p)] * x[(p, col)];
            }
            x[(i, col)] = acc / l[(i, i)].re;
        }
        // backward: l^H x = y
        for i in (0..n).rev() {
            let mut acc = x[(i, col)];
            for p in i + 1..n {
                acc -= l[(p, i)].conj() * x[(p, col)];
            }
            x[(i, col)] = acc / l[(i, i)].re;
        }
    }
    Ok(x)
}

/// Natural log of the determinant of a Hermitian positive-definite matrix,
/// accumulated from the Cholesky pivots.
pub fn logdet_hpd(a: &CMatrix) -> Result<f64> {
    let l = cholesky(a)?;
    Ok((0..a.nrows()).map(|i| 2.0 * l[(i, i)].re.ln()).sum())
}

/// Hermitian part `(a + a^H) / 2`; removes rounding asymmetry from products
/// such as `x * x^H`.
pub fn hermitian_part(a: &CMatrix) -> CMatrix {
    (a + a.adjoint()) * real(0.5)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, m: usize, n: usize) -> CMatrix {
        CMatrix::from_fn(m, n, |_, _| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
    }

    fn unitarity_defect(q: &CMatrix) -> f64 {
        frobenius(&(q.adjoint() * q - identity(q.ncols())))
    }

    fn check_svd(a: &CMatrix) {
        let f = svd(a).unwrap();
        assert_eq!(f.u.shape(), (a.nrows(), a.nrows()));
        assert_eq!(f.v.shape(), (a.ncols(), a.ncols()));
        assert_eq!(f.sigma.len(), a.nrows().min(a.ncols()));
        assert!(f.sigma.windows(2).all(|w| w[0] >= w[1]));
        assert!(f.sigma.iter().all(|&s| s >= 0.0));
        let resid = frobenius(&(f.reconstruct() - a));
        assert!(resid <= 1e-10 * frobenius(a).max(1.0), "residual {resid}");
        assert!(unitarity_defect(&f.u) <= 1e-10);
        assert!(unitarity_defect(&f.v) <= 1e-10);
    }

    #[test]
    fn svd_identity() {
        let f = svd(&identity(3)).unwrap();
        assert_eq!(f.sigma.len(), 3);
        for s in f.sigma {
            assert!((s - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn svd_diagonal_is_sorted() {
        let mut a = CMatrix::zeros(3, 3);
        a[(0, 0)] = real(1.0);
        a[(1, 1)] = real(2.0);
        a[(2, 2)] = real(3.0);
        let f = svd(&a).unwrap();
        for (s, want) in f.sigma.iter().zip([3.0, 2.0, 1.0]) {
            assert!((s - want).abs() < 1e-14);
        }
        check_svd(&a);
    }

    #[test]
    fn svd_random_4x6() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        check_svd(&random(&mut rng, 4, 6));
    }

    #[test]
    fn svd_all_shapes_used() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for (m, n) in [(1, 1), (2, 1), (2, 2), (1, 3), (2, 4), (4, 4), (4, 6), (6, 6), (6, 4), (8, 6), (2, 6)] {
            for _ in 0..20 {
                check_svd(&random(&mut rng, m, n));
            }
        }
    }

    #[test]
    fn svd_rank_deficient() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random(&mut rng, 4, 1);
        let y = random(&mut rng, 1, 6);
        let a = &x * &y;
        check_svd(&a);
        let f = svd(&a).unwrap();
        assert!(f.sigma[1] < 1e-12);
        check_svd(&CMatrix::zeros(2, 3));
        check_svd(&CMatrix::zeros(3, 2));
    }

    #[test]
    fn svd_rejects_nan() {
        let mut a = identity(2);
        a[(0, 1)] = c(f64::NAN, 0.0);
        assert!(matches!(svd(&a), Err(Error::NonFinite { .. })));
    }

    #[test]
    fn hpd_solve_scaled_identity() {
        let a = identity(2) * real(2.0);
        let x = hpd_solve(&a, &identity(2)).unwrap();
        assert!(frobenius(&(x - identity(2) * real(0.5))) < 1e-15);
    }

    #[test]
    fn hpd_solve_identity_returns_rhs() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let b = random(&mut rng, 3, 2);
        let x = hpd_solve(&identity(3), &b).unwrap();
        assert!(frobenius(&(x - &b)) < 1e-15);
    }

    #[test]
    fn hpd_solve_random_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for n in 1..=6 {
            let m = random(&mut rng, n, n);
            let a = hermitian_part(&(m.adjoint() * &m + identity(n)));
            let b = random(&mut rng, n, 2);
            let x = hpd_solve(&a, &b).unwrap();
            assert!(frobenius(&(&a * x - &b)) <= 1e-9 * frobenius(&b).max(1.0));
        }
    }

    #[test]
    fn hpd_solve_rejects_indefinite() {
        let mut a = identity(2);
        a[(1, 1)] = real(-1.0);
        assert!(matches!(
            hpd_solve(&a, &identity(2)),
            Err(Error::NotPositiveDefinite { dim: 2 })
        ));
        assert!(matches!(logdet_hpd(&CMatrix::zeros(2, 2)), Err(Error::NotPositiveDefinite { .. })));
    }

    #[test]
    fn hpd_solve_rejects_non_hermitian() {
        let mut a = identity(2);
        a[(0, 1)] = real(0.5);
        assert!(matches!(hpd_solve(&a, &identity(2)), Err(Error::NotHermitian { .. })));
    }

    #[test]
    fn logdet_simple_cases() {
        assert_eq!(logdet_hpd(&identity(4)).unwrap(), 0.0);
        let mut a = CMatrix::zeros(2, 2);
        a[(0, 0)] = real(2.0);
        a[(1, 1)] = real(4.0);
        assert!((logdet_hpd(&a).unwrap() - 8f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn logdet_matches_eigenvalue_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let m = random(&mut rng, 3, 3);
        let a = hermitian_part(&(m.adjoint() * &m + identity(3)));
        // eigenvalues of an HPD matrix are its singular values
        let eig: f64 = svd(&a).unwrap().sigma.iter().map(|s| s.ln()).sum();
        assert!((logdet_hpd(&a).unwrap() - eig).abs() < 1e-10);
    }

    #[test]
    fn logdet_scaling() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        for n in 1..=5 {
            let m = random(&mut rng, n, n);
            let a = hermitian_part(&(m.adjoint() * &m + identity(n)));
            let scale = 0.1 + 10.0 * rng.random::<f64>();
            let lhs = logdet_hpd(&(&a * real(scale))).unwrap();
            let rhs = logdet_hpd(&a).unwrap() + n as f64 * scale.ln();
            assert!((lhs - rhs).abs() < 1e-9);
        }
    }
}
