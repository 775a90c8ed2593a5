//! Dense real matrices and the numerical linear algebra the rest of the
//! crate is built on: full SVD, spectral norm, condition number, Frobenius
//! norm.
//!
//! Matrices are immutable once constructed and every operation is a pure
//! function, so values can be shared freely across threads.

use nalgebra::DMatrix;

use crate::constants::{SVD_ORTHO_TOL, SVD_RECON_TOL};
use crate::error::{Error, Result};

/// Sweep cap for the one-sided Jacobi iteration; quadratic convergence makes
/// ten sweeps typical at the dimensions this crate works at.
const MAX_JACOBI_SWEEPS: usize = 64;

/// Dense real matrix with double-precision entries.
///
/// Entries are logically addressed `(row, col)`; construction is from
/// row-major data. All entries are guaranteed finite.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    inner: DMatrix<f64>,
}

impl Matrix {
    /// Builds a matrix from row-major entries.
    pub fn from_row_major(rows: usize, cols: usize, entries: &[f64]) -> Result<Self> {
        check_shape(rows, cols)?;
        if entries.len() != rows * cols {
            return Err(Error::dims(
                "Matrix::from_row_major",
                rows * cols,
                entries.len(),
            ));
        }
        let inner = DMatrix::from_row_slice(rows, cols, entries);
        Self::from_dmatrix(inner)
    }

    /// Builds a matrix by evaluating `f(row, col)` for every entry.
    pub fn from_fn(rows: usize, cols: usize, f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        check_shape(rows, cols)?;
        Self::from_dmatrix(DMatrix::from_fn(rows, cols, f))
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        check_shape(rows, cols).expect("zeros: dimensions must be positive");
        Matrix {
            inner: DMatrix::zeros(rows, cols),
        }
    }

    pub fn identity(n: usize) -> Self {
        check_shape(n, n).expect("identity: dimension must be positive");
        Matrix {
            inner: DMatrix::identity(n, n),
        }
    }

    pub(crate) fn from_dmatrix(inner: DMatrix<f64>) -> Result<Self> {
        if !inner.iter().all(|x| x.is_finite()) {
            return Err(Error::NonFinite("matrix construction".into()));
        }
        Ok(Matrix { inner })
    }

    /// Wraps an internally computed value without re-scanning for finiteness.
    /// Only for products of already-validated matrices.
    pub(crate) fn from_dmatrix_unchecked(inner: DMatrix<f64>) -> Self {
        Matrix { inner }
    }

    pub(crate) fn as_dmatrix(&self) -> &DMatrix<f64> {
        &self.inner
    }

    pub fn rows(&self) -> usize {
        self.inner.nrows()
    }

    pub fn cols(&self) -> usize {
        self.inner.ncols()
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows(), self.cols())
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.inner[(row, col)]
    }

    /// Entries in row-major order (the serialization order).
    pub fn to_row_major(&self) -> Vec<f64> {
        let (m, n) = self.shape();
        let mut out = Vec::with_capacity(m * n);
        for i in 0..m {
            for j in 0..n {
                out.push(self.inner[(i, j)]);
            }
        }
        out
    }

    pub fn transpose(&self) -> Matrix {
        Matrix {
            inner: self.inner.transpose(),
        }
    }

    pub fn scale(&self, c: f64) -> Result<Matrix> {
        if !c.is_finite() {
            return Err(Error::NonFinite("Matrix::scale factor".into()));
        }
        Matrix::from_dmatrix(&self.inner * c)
    }

    pub fn is_finite(&self) -> bool {
        self.inner.iter().all(|x| x.is_finite())
    }

    pub fn is_zero(&self) -> bool {
        self.inner.iter().all(|&x| x == 0.0)
    }

    /// Square root of the sum of squared entries.
    pub fn frobenius_norm(&self) -> f64 {
        self.inner.norm()
    }

    /// Largest singular value.
    pub fn spectral_norm(&self) -> Result<f64> {
        Ok(self.singular_values()?[0])
    }

    /// Ratio of largest to smallest singular value; `+inf` when the matrix is
    /// rank deficient. Singular values below `max(m,n) * eps * sigma_max` are
    /// treated as zero, so the sentinel is stable under scaling.
    pub fn condition_number(&self) -> Result<f64> {
        let sv = self.singular_values()?;
        let s_max = sv[0];
        let s_min = sv[sv.len() - 1];
        let cutoff = self.rows().max(self.cols()) as f64 * f64::EPSILON * s_max;
        if s_min <= cutoff {
            return Ok(f64::INFINITY);
        }
        Ok(s_max / s_min)
    }

    /// Full singular value decomposition `A = U diag(sigma) V'` with
    /// `U: m x r`, `V: n x r`, `r = min(m, n)`, `sigma` nonincreasing.
    ///
    /// Rectangular inputs are first reduced to a square core with an economy
    /// QR factorization; the core is decomposed by one-sided Jacobi
    /// rotations. Every decomposition is checked against the input
    /// (orthonormal factors, reconstruction residual) before it is returned,
    /// so a misbehaving factorization surfaces as an error, never as silent
    /// garbage.
    ///
    /// No sign convention is imposed on the factor columns; consumers must
    /// only depend on sign-invariant products such as `V U'`.
    pub fn svd(&self) -> Result<SvdFactors> {
        let (m, n) = self.shape();
        let factors = if m == n {
            let (u, sigma, v) = jacobi_svd(self.inner.clone(), true)?;
            SvdFactors {
                u: Matrix::from_dmatrix_unchecked(u.expect("factors requested")),
                sigma,
                v: Matrix::from_dmatrix_unchecked(v.expect("factors requested")),
            }
        } else if m > n {
            // A = Q R; then A = (Q U) S V' with R = U S V'.
            let qr = self.inner.clone().qr();
            let (u, sigma, v) = jacobi_svd(qr.r(), true)?;
            SvdFactors {
                u: Matrix::from_dmatrix_unchecked(qr.q() * u.expect("factors requested")),
                sigma,
                v: Matrix::from_dmatrix_unchecked(v.expect("factors requested")),
            }
        } else {
            // A = R' Q' from the QR of A'; then A = U S (Q W)' with R' = U S W'.
            let qr = self.inner.transpose().qr();
            let (u, sigma, w) = jacobi_svd(qr.r().transpose(), true)?;
            SvdFactors {
                u: Matrix::from_dmatrix_unchecked(u.expect("factors requested")),
                sigma,
                v: Matrix::from_dmatrix_unchecked(qr.q() * w.expect("factors requested")),
            }
        };
        factors.validate(self)
    }

    /// Singular values only (nonincreasing). Same reduction strategy as
    /// [`Matrix::svd`] but skips accumulation of the orthogonal factors.
    pub(crate) fn singular_values(&self) -> Result<Vec<f64>> {
        let (m, n) = self.shape();
        let core = if m == n {
            self.inner.clone()
        } else if m > n {
            self.inner.clone().qr().r()
        } else {
            self.inner.transpose().qr().r()
        };
        let (_, sigma, _) = jacobi_svd(core, false)?;
        Ok(sigma)
    }
}

fn check_shape(rows: usize, cols: usize) -> Result<()> {
    if rows == 0 || cols == 0 {
        return Err(Error::InvalidParameter(format!(
            "matrix dimensions must be positive, got {rows}x{cols}"
        )));
    }
    Ok(())
}

impl std::ops::Mul for &Matrix {
    type Output = Matrix;

    /// Matrix product. Panics on non-conformal shapes; operations exposed to
    /// callers validate shapes first and surface `Error::DimensionMismatch`.
    fn mul(self, rhs: &Matrix) -> Matrix {
        Matrix::from_dmatrix_unchecked(&self.inner * &rhs.inner)
    }
}

impl std::ops::Sub for &Matrix {
    type Output = Matrix;

    fn sub(self, rhs: &Matrix) -> Matrix {
        Matrix::from_dmatrix_unchecked(&self.inner - &rhs.inner)
    }
}

impl std::ops::Add for &Matrix {
    type Output = Matrix;

    fn add(self, rhs: &Matrix) -> Matrix {
        Matrix::from_dmatrix_unchecked(&self.inner + &rhs.inner)
    }
}

/// Result of [`Matrix::svd`].
#[derive(Debug, Clone)]
pub struct SvdFactors {
    /// Left singular vectors, `m x r`, orthonormal columns.
    pub u: Matrix,
    /// Singular values, length `r = min(m, n)`, nonincreasing, nonnegative.
    pub sigma: Vec<f64>,
    /// Right singular vectors, `n x r`, orthonormal columns.
    pub v: Matrix,
}

impl SvdFactors {
    /// `U diag(sigma) V'`.
    pub fn reconstruct(&self) -> Matrix {
        let r = self.sigma.len();
        let mut us = self.u.inner.clone();
        for k in 0..r {
            let mut col = us.column_mut(k);
            col *= self.sigma[k];
        }
        Matrix::from_dmatrix_unchecked(us * self.v.inner.transpose())
    }

    /// Residuals used to validate the decomposition of `a`:
    /// `(||U'U - Id||_F, ||V'V - Id||_F, ||A - U S V'||_F)`.
    pub fn residuals(&self, a: &Matrix) -> (f64, f64, f64) {
        let r = self.sigma.len();
        let id = DMatrix::<f64>::identity(r, r);
        let ru = (self.u.inner.transpose() * &self.u.inner - &id).norm();
        let rv = (self.v.inner.transpose() * &self.v.inner - &id).norm();
        let recon = (&self.reconstruct() - a).frobenius_norm();
        (ru, rv, recon)
    }

    fn validate(self, a: &Matrix) -> Result<Self> {
        let sorted = self.sigma.windows(2).all(|w| w[0] >= w[1]);
        let nonneg = self.sigma.iter().all(|&s| s >= 0.0 && s.is_finite());
        if !sorted || !nonneg {
            return Err(Error::NumericalFailure(
                "svd produced unsorted or invalid singular values".into(),
            ));
        }
        let r = self.sigma.len() as f64;
        let (ru, rv, recon) = self.residuals(a);
        let ortho_tol = SVD_ORTHO_TOL * r.sqrt();
        let recon_tol = SVD_RECON_TOL * a.frobenius_norm().max(1.0);
        if ru > ortho_tol || rv > ortho_tol || recon > recon_tol {
            return Err(Error::NumericalFailure(format!(
                "svd residuals out of tolerance (u: {ru:.3e}, v: {rv:.3e}, recon: {recon:.3e})"
            )));
        }
        Ok(self)
    }
}

/// One-sided Jacobi SVD of a square matrix: Givens rotations orthogonalize
/// the columns of a working copy `B = A V`; on convergence the column norms
/// are the singular values and `U = B diag(sigma)^-1`. Exactly zero singular
/// values get their `U` columns from an orthonormal completion.
///
/// Returns `(U, sigma, V)` with sigma nonincreasing; `U`/`V` are `None` when
/// `compute_uv` is false. Non-convergence within the sweep cap is an error.
#[allow(clippy::type_complexity)]
fn jacobi_svd(
    mut b: DMatrix<f64>,
    compute_uv: bool,
) -> Result<(Option<DMatrix<f64>>, Vec<f64>, Option<DMatrix<f64>>)> {
    let n = b.ncols();
    debug_assert_eq!(b.nrows(), n, "jacobi core must be square");
    let mut v = if compute_uv {
        Some(DMatrix::<f64>::identity(n, n))
    } else {
        None
    };
    let tol = f64::EPSILON * n as f64;
    // Columns this far below the dominant one are rounding residue of a
    // rank-deficient input; they stay correlated with the large columns at
    // the eps level and would stall termination. Flattening them to exact
    // zero perturbs the input by well under the reconstruction tolerance.
    let deflate_sq = (tol * tol) * 4.0;

    // Cached squared column norms, updated in closed form per rotation and
    // refreshed each sweep so rounding drift cannot stall termination.
    let mut sq: Vec<f64> = vec![0.0; n];
    let mut converged = n < 2;
    for _ in 0..MAX_JACOBI_SWEEPS {
        for (j, s) in sq.iter_mut().enumerate() {
            *s = b.column(j).norm_squared();
        }
        let sq_max = sq.iter().cloned().fold(0.0f64, f64::max);
        for (j, s) in sq.iter_mut().enumerate() {
            if *s <= deflate_sq * sq_max && *s > 0.0 {
                b.column_mut(j).fill(0.0);
                *s = 0.0;
            }
        }
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq: f64 = (0..n).map(|i| b[(i, p)] * b[(i, q)]).sum();
                let (app, aqq) = (sq[p], sq[q]);
                if apq == 0.0 || apq.abs() <= tol * (app * aqq).sqrt() {
                    continue;
                }
                rotated = true;
                let tau = (aqq - app) / (2.0 * apq);
                let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..n {
                    let bp = b[(i, p)];
                    let bq = b[(i, q)];
                    b[(i, p)] = c * bp - s * bq;
                    b[(i, q)] = s * bp + c * bq;
                }
                let (c2, s2, cs) = (c * c, s * s, c * s);
                sq[p] = c2 * app + s2 * aqq - 2.0 * cs * apq;
                sq[q] = s2 * app + c2 * aqq + 2.0 * cs * apq;
                if let Some(vm) = v.as_mut() {
                    for i in 0..n {
                        let vp = vm[(i, p)];
                        let vq = vm[(i, q)];
                        vm[(i, p)] = c * vp - s * vq;
                        vm[(i, q)] = s * vp + c * vq;
                    }
                }
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NumericalFailure(format!(
            "jacobi svd did not converge within {MAX_JACOBI_SWEEPS} sweeps on a {n}x{n} core"
        )));
    }

    let norms: Vec<f64> = (0..n).map(|j| b.column(j).norm()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &c| norms[c].total_cmp(&norms[a]));
    let sigma: Vec<f64> = order.iter().map(|&j| norms[j]).collect();
    if !compute_uv {
        return Ok((None, sigma, None));
    }

    let mut u = DMatrix::zeros(n, n);
    let mut missing = Vec::new();
    for (k, &j) in order.iter().enumerate() {
        if sigma[k] > 0.0 {
            let inv = 1.0 / sigma[k];
            for i in 0..n {
                u[(i, k)] = b[(i, j)] * inv;
            }
        } else {
            missing.push(k);
        }
    }
    complete_orthonormal(&mut u, &missing);

    let vm = v.expect("accumulated when compute_uv");
    let mut v_sorted = DMatrix::zeros(n, n);
    for (k, &j) in order.iter().enumerate() {
        for i in 0..n {
            v_sorted[(i, k)] = vm[(i, j)];
        }
    }
    Ok((Some(u), sigma, Some(v_sorted)))
}

/// Fills the listed columns of `u` with vectors orthonormal to all other
/// (already orthonormal) columns, via twice-iterated Gram-Schmidt on the
/// best-conditioned standard basis vectors.
fn complete_orthonormal(u: &mut DMatrix<f64>, missing: &[usize]) {
    let n = u.nrows();
    let mut filled: Vec<usize> = (0..u.ncols()).filter(|k| !missing.contains(k)).collect();
    for &slot in missing {
        let mut best: Option<(f64, Vec<f64>)> = None;
        for cand in 0..n {
            let mut r: Vec<f64> = (0..n).map(|i| if i == cand { 1.0 } else { 0.0 }).collect();
            for _ in 0..2 {
                for &k in &filled {
                    let dot: f64 = (0..n).map(|i| r[i] * u[(i, k)]).sum();
                    for (i, ri) in r.iter_mut().enumerate() {
                        *ri -= dot * u[(i, k)];
                    }
                }
            }
            let norm = r.iter().map(|x| x * x).sum::<f64>().sqrt();
            if best.as_ref().map(|(b, _)| norm > *b).unwrap_or(true) {
                best = Some((norm, r));
            }
        }
        let (norm, r) = best.expect("n > 0");
        for i in 0..n {
            u[(i, slot)] = r[i] / norm;
        }
        filled.push(slot);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn randm(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Matrix::from_fn(rows, cols, |_, _| rng.random::<f64>() - 0.5).unwrap()
    }

    #[test]
    fn construction_validates() {
        assert!(Matrix::from_row_major(2, 2, &[1.0, 2.0, 3.0]).is_err());
        assert!(Matrix::from_row_major(2, 2, &[1.0, 2.0, 3.0, f64::NAN]).is_err());
        assert!(Matrix::from_row_major(0, 2, &[]).is_err());
        let m = Matrix::from_row_major(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        assert_eq!(m.get(1, 0), 4.0);
        assert_eq!(m.to_row_major(), vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
    }

    #[test]
    fn frobenius_examples() {
        assert!((Matrix::identity(3).frobenius_norm() - 3f64.sqrt()).abs() < 1e-15);
        assert_eq!(Matrix::zeros(4, 2).frobenius_norm(), 0.0);
        let m = Matrix::from_row_major(1, 2, &[3.0, 4.0]).unwrap();
        assert!((m.frobenius_norm() - 5.0).abs() < 1e-15);
    }

    #[test]
    fn svd_diagonal() {
        let m = Matrix::from_row_major(2, 2, &[3.0, 0.0, 0.0, 1.0]).unwrap();
        let f = m.svd().unwrap();
        assert!((f.sigma[0] - 3.0).abs() < 1e-12);
        assert!((f.sigma[1] - 1.0).abs() < 1e-12);
        // U and V agree with the identity up to per-column signs.
        for k in 0..2 {
            assert!((f.u.get(k, k).abs() - 1.0).abs() < 1e-12);
            assert!((f.u.get(k, k) - f.v.get(k, k)).abs() < 1e-12);
        }
    }

    #[test]
    fn svd_zero_matrix() {
        let f = Matrix::zeros(2, 2).svd().unwrap();
        assert_eq!(f.sigma, vec![0.0, 0.0]);
    }

    #[test]
    fn svd_reconstruction_random() {
        let a = randm(5, 7, 3);
        let f = a.svd().unwrap();
        let (_, _, recon) = f.residuals(&a);
        assert!(recon <= 1e-9, "residual {recon:.3e}");
    }

    #[test]
    fn svd_reconstruction_wide_qr_path() {
        // 100 x 10000 exercises the QR reduction; 10000 x 100 the tall branch.
        for (m, n) in [(100usize, 10000usize), (10000, 100)] {
            let a = randm(m, n, 11);
            let f = a.svd().unwrap();
            let (ru, rv, recon) = f.residuals(&a);
            let r = f.sigma.len() as f64;
            assert!(ru <= SVD_ORTHO_TOL * r.sqrt(), "u residual {ru:.3e}");
            assert!(rv <= SVD_ORTHO_TOL * r.sqrt(), "v residual {rv:.3e}");
            assert!(
                recon <= SVD_RECON_TOL * a.frobenius_norm().max(1.0),
                "recon residual {recon:.3e}"
            );
        }
    }

    #[test]
    fn spectral_norm_examples() {
        assert!((Matrix::identity(3).spectral_norm().unwrap() - 1.0).abs() < 1e-12);
        let d = Matrix::from_row_major(2, 2, &[2.0, 0.0, 0.0, -5.0]).unwrap();
        assert!((d.spectral_norm().unwrap() - 5.0).abs() < 1e-12);
    }

    #[test]
    fn spectral_norm_rank_one_matches_power_iteration() {
        // u v' with ||u|| = 2, ||v|| = 3 has spectral norm exactly 6.
        let u = [2.0 * (0.6f64), 2.0 * 0.8];
        let v = [3.0 * (1.0 / 3f64.sqrt()); 3];
        let a = Matrix::from_fn(2, 3, |i, j| u[i] * v[j]).unwrap();
        let s = a.spectral_norm().unwrap();
        assert!((s - 6.0).abs() < 1e-12);

        // Independent check: power iteration on A'A.
        let ata = &a.transpose() * &a;
        let mut x = vec![1.0, 0.5, -0.25];
        for _ in 0..200 {
            let y: Vec<f64> = (0..3)
                .map(|i| (0..3).map(|j| ata.get(i, j) * x[j]).sum())
                .collect();
            let norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
            x = y.iter().map(|v| v / norm).collect();
        }
        let lambda: f64 = (0..3)
            .map(|i| x[i] * (0..3).map(|j| ata.get(i, j) * x[j]).sum::<f64>())
            .sum();
        assert!((lambda.sqrt() - s).abs() < 1e-10);
    }

    #[test]
    fn condition_number_examples() {
        assert!((Matrix::identity(4).condition_number().unwrap() - 1.0).abs() < 1e-12);
        let d = Matrix::from_row_major(2, 2, &[4.0, 0.0, 0.0, 2.0]).unwrap();
        assert!((d.condition_number().unwrap() - 2.0).abs() < 1e-12);
        let deficient =
            Matrix::from_row_major(2, 3, &[1.0, 2.0, 3.0, 0.0, 0.0, 0.0]).unwrap();
        assert!(deficient.condition_number().unwrap().is_infinite());
    }

    #[test]
    fn condition_number_scale_invariant() {
        let a = randm(6, 9, 21);
        let k = a.condition_number().unwrap();
        for c in [1e-3, 0.7, 42.0] {
            let kc = a.scale(c).unwrap().condition_number().unwrap();
            assert!((kc - k).abs() <= 1e-10 * k, "c={c}: {kc} vs {k}");
        }
    }

    #[test]
    fn spectral_not_above_frobenius_random() {
        for seed in 0..100u64 {
            let rows = 1 + (seed as usize % 7);
            let cols = 1 + ((seed as usize * 13) % 9);
            let a = randm(rows, cols, 1000 + seed);
            assert!(a.spectral_norm().unwrap() <= a.frobenius_norm() + 1e-12);
        }
    }

    #[test]
    fn spectral_norm_unitary_invariant() {
        let a = randm(8, 5, 77);
        let q = crate::genmodel::gen_unitary(8, 3).unwrap();
        let qa = &q * &a;
        let s = a.spectral_norm().unwrap();
        let sq = qa.spectral_norm().unwrap();
        assert!((s - sq).abs() <= 1e-10 * s);
    }
}
