//! Convergence diagnostics for the alternating learner: contraction factors
//! and the spectral condition they must satisfy, convergence radii, the
//! large-sample limits of both, and signed-permutation alignment of recovered
//! transforms against ground truth.

use std::collections::HashSet;

use nalgebra::DMatrix;

use crate::constants::TAYLOR_RADIUS;
use crate::error::{Error, Result};
use crate::genmodel::{epsilon_for_support_recovery, GenerativeModel};
use crate::learner::LearnRecord;
use crate::linops::Matrix;

/// Grid step for locating the radius crossing before bisection.
const RADIUS_GRID_STEP: f64 = 1e-4;
/// Bisection refinement width for the crossing.
const RADIUS_BISECT_TOL: f64 = 1e-8;

/// Spectral quantities of a generative model that control the local
/// contraction of the alternating iteration.
#[derive(Debug, Clone)]
pub struct SpectralReport {
    /// Condition number of `Z*` (`+inf` when rank deficient).
    pub kappa: f64,
    /// `max_k || D_k Z* D~_k ||_2`: the largest spectral norm over rows `k`
    /// of `Z*` with row `k` zeroed and columns restricted to row `k`'s
    /// support.
    pub max_dk_norm: f64,
    /// Contraction factor in the orthonormal-rows regime (equals
    /// `max_dk_norm`).
    pub q_orth: f64,
    /// Scale-invariant contraction factor `kappa^4 / ||P||_2 * max_dk_norm`.
    pub q_n: f64,
    /// Large-sample limit `sqrt((s - 1) / (n - 1))` for uniformly random
    /// supports with variance-`n/sN` nonzeros.
    pub q_limit: f64,
    /// Whether the spectral condition `kappa^4 * max_dk_norm < 1` holds.
    pub contraction_ok: bool,
    /// `||Z* Z*' - Id||_F`: distance of the coefficient rows from exact
    /// orthonormality.
    pub row_gram_residual: f64,
}

/// Convergence radius decomposition: `eps1` guards support recovery in the
/// sparse coding step, `eps2` guards the operator-update expansions, and the
/// usable radius is their minimum.
#[derive(Debug, Clone)]
pub struct RadiusReport {
    pub eps1: f64,
    pub eps2: f64,
    /// Maximizer of `f(e0) = min((1 - q) / C(e0), e0)` on `[0, sqrt(2)-1)`.
    pub eps0_star: f64,
    pub c_at_eps0: f64,
    pub eps: f64,
    /// Set when the `kappa^-2` cap (poorly conditioned coefficients)
    /// tightened `eps2` below the maximizer value.
    pub kappa_capped: bool,
}

/// Row matching between a learned transform and the ground truth: row `i` of
/// `W` corresponds to row `perm[i]` of `W*` with sign `signs[i]`.
#[derive(Debug, Clone)]
pub struct Alignment {
    pub perm: Vec<usize>,
    pub signs: Vec<f64>,
    /// `||P_perm diag(signs) W - W*||_F` under the chosen matching.
    pub aligned_error: f64,
}

impl Alignment {
    /// Applies the row permutation and signs to any matrix with matching row
    /// count: output row `perm[i]` is `signs[i] *` input row `i`.
    pub fn apply_to_rows(&self, m: &Matrix) -> Result<Matrix> {
        if m.rows() != self.perm.len() {
            return Err(Error::dims(
                "Alignment::apply_to_rows",
                self.perm.len(),
                m.rows(),
            ));
        }
        let src = m.as_dmatrix();
        let mut out = DMatrix::zeros(m.rows(), m.cols());
        for i in 0..m.rows() {
            let sign = self.signs[i];
            let target = self.perm[i];
            for j in 0..m.cols() {
                out[(target, j)] = sign * src[(i, j)];
            }
        }
        Ok(Matrix::from_dmatrix_unchecked(out))
    }
}

/// `Z*` with row `k` zeroed and every column outside the support of row `k`
/// zeroed. Returned at full size; norm computations use the compact form.
pub fn dk_submatrix(zstar: &Matrix, k: usize) -> Result<Matrix> {
    let (n, big_n) = zstar.shape();
    if k >= n {
        return Err(Error::InvalidParameter(format!(
            "row index {k} out of range for {n} rows"
        )));
    }
    let src = zstar.as_dmatrix();
    let mut out = DMatrix::zeros(n, big_n);
    for j in 0..big_n {
        if src[(k, j)] == 0.0 {
            continue;
        }
        for i in 0..n {
            if i != k {
                out[(i, j)] = src[(i, j)];
            }
        }
    }
    Matrix::from_dmatrix(out)
}

/// Spectral norm of the compact `n x |S|` form of [`dk_submatrix`], where
/// `S` is the support of row `k`. Avoids materializing zero columns.
fn dk_norm(zstar: &DMatrix<f64>, k: usize) -> Result<f64> {
    let support: Vec<usize> = (0..zstar.ncols())
        .filter(|&j| zstar[(k, j)] != 0.0)
        .collect();
    masked_norm(zstar, k, &support)
}

fn masked_norm(zstar: &DMatrix<f64>, k: usize, columns: &[usize]) -> Result<f64> {
    if columns.is_empty() {
        return Ok(0.0);
    }
    let n = zstar.nrows();
    let mut compact = DMatrix::zeros(n, columns.len());
    for (cj, &j) in columns.iter().enumerate() {
        for i in 0..n {
            if i != k {
                compact[(i, cj)] = zstar[(i, j)];
            }
        }
    }
    Matrix::from_dmatrix_unchecked(compact).spectral_norm()
}

/// `max_k || D_k Z* D~_k ||_2` over all rows.
pub fn max_dk_norm(zstar: &Matrix) -> Result<f64> {
    let dm = zstar.as_dmatrix();
    let mut max = 0.0f64;
    for k in 0..dm.nrows() {
        max = max.max(dk_norm(dm, k)?);
    }
    Ok(max)
}

/// Computes all spectral diagnostics for a model.
pub fn spectral_report(model: &GenerativeModel) -> Result<SpectralReport> {
    let zstar = model.zstar();
    let kappa = zstar.condition_number()?;
    let max_dk = max_dk_norm(zstar)?;
    let p_norm = model.p().spectral_norm()?;
    if p_norm == 0.0 {
        return Err(Error::InvalidParameter("model data is all-zero".into()));
    }
    let (n, s) = (model.n(), model.s());
    let q_n = if kappa.is_finite() {
        kappa.powi(4) / p_norm * max_dk
    } else {
        f64::INFINITY
    };
    let q_limit = if n > 1 {
        ((s as f64 - 1.0) / (n as f64 - 1.0)).sqrt()
    } else {
        0.0
    };
    let contraction_ok = kappa.is_finite() && kappa.powi(4) * max_dk < 1.0;
    let gram = zstar * &zstar.transpose();
    let row_gram_residual =
        (gram.as_dmatrix() - DMatrix::<f64>::identity(n, n)).norm();
    Ok(SpectralReport {
        kappa,
        max_dk_norm: max_dk,
        q_orth: max_dk,
        q_n,
        q_limit,
        contraction_ok,
        row_gram_residual,
    })
}

/// Per-iteration contraction factor with the support mask taken from the
/// current iterate: columns are restricted to the support of row `k` of
/// `Z^t - Z*` instead of row `k` of `Z*`. Mismatched supports can only
/// enlarge the mask, so this relaxed factor can exceed the model's own.
pub fn q_relaxed(zstar: &Matrix, z_t: &Matrix, kappa4: f64) -> Result<f64> {
    if zstar.shape() != z_t.shape() {
        return Err(Error::dims(
            "q_relaxed",
            format!("{}x{}", zstar.rows(), zstar.cols()),
            format!("{}x{}", z_t.rows(), z_t.cols()),
        ));
    }
    let zs = zstar.as_dmatrix();
    let zt = z_t.as_dmatrix();
    let mut max = 0.0f64;
    for k in 0..zs.nrows() {
        let support: Vec<usize> = (0..zs.ncols())
            .filter(|&j| zt[(k, j)] - zs[(k, j)] != 0.0)
            .collect();
        max = max.max(masked_norm(zs, k, &support)?);
    }
    Ok(kappa4 * max)
}

/// Specialization for models whose columns carry at most two nonzeros. The
/// masked Gram matrices are then exactly diagonal, so the contraction factor
/// has the closed form
/// `q = max_{k, i != k} || row_i restricted to S(i) n S(k) ||_2`,
/// and `q < 1` holds iff no two row supports coincide and every row is
/// nonempty.
pub fn check_s2_contraction(zstar: &Matrix) -> Result<(bool, f64)> {
    let dm = zstar.as_dmatrix();
    let (n, big_n) = zstar.shape();
    for j in 0..big_n {
        let nnz = (0..n).filter(|&i| dm[(i, j)] != 0.0).count();
        if nnz > 2 {
            return Err(Error::InvalidParameter(format!(
                "column {j} has {nnz} nonzeros; the closed form needs at most 2"
            )));
        }
    }
    let supports: Vec<Vec<usize>> = (0..n)
        .map(|i| (0..big_n).filter(|&j| dm[(i, j)] != 0.0).collect())
        .collect();
    let all_nonempty = supports.iter().all(|s| !s.is_empty());
    let mut seen = HashSet::new();
    let distinct = supports.iter().all(|s| seen.insert(s.clone()));
    let holds = all_nonempty && distinct;

    let mut q_sq = 0.0f64;
    let mut in_sk = vec![false; big_n];
    for k in 0..n {
        for &j in &supports[k] {
            in_sk[j] = true;
        }
        for i in 0..n {
            if i == k {
                continue;
            }
            let sum_sq: f64 = supports[i]
                .iter()
                .filter(|&&j| in_sk[j])
                .map(|&j| dm[(i, j)] * dm[(i, j)])
                .sum();
            q_sq = q_sq.max(sum_sq);
        }
        for &j in &supports[k] {
            in_sk[j] = false;
        }
    }
    Ok((holds, q_sq.sqrt()))
}

/// Second-order error constant of the operator-update expansion:
/// `C(e0) = 2 + 9 sqrt(2) / (8 (1 - 2 e0 - e0^2)^1.5) + sqrt(2) / (1 - e0)`,
/// finite and monotone increasing on `[0, sqrt(2) - 1)`.
pub fn c_constant(eps0: f64) -> Result<f64> {
    if !(eps0 >= 0.0 && eps0 < TAYLOR_RADIUS) {
        return Err(Error::InvalidParameter(format!(
            "C is defined on [0, {TAYLOR_RADIUS}), got {eps0}"
        )));
    }
    let root = 1.0 - 2.0 * eps0 - eps0 * eps0;
    Ok(2.0 + 9.0 * std::f64::consts::SQRT_2 / (8.0 * root.powf(1.5))
        + std::f64::consts::SQRT_2 / (1.0 - eps0))
}

/// `f(e0) = min((1 - q) / C(e0), e0)`, the quantity maximized to obtain the
/// operator-update radius `eps2`. Zero at both ends of the domain.
pub fn radius_objective(q: f64, eps0: f64) -> Result<f64> {
    Ok(((1.0 - q) / c_constant(eps0)?).min(eps0))
}

/// Computes the convergence radius report for a model and contraction factor
/// `q`. The crossing `C(e0) e0 = 1 - q` (which is where `f` attains its
/// maximum, since one branch increases and the other decreases) is located on
/// a coarse grid and refined by bisection; `eps2` is additionally capped at
/// `kappa^-2(Z*)`, which suffices for the series expansions when the
/// coefficient rows are far from orthonormal.
pub fn convergence_radius(model: &GenerativeModel, q: f64) -> Result<RadiusReport> {
    if !(q >= 0.0 && q < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "no positive convergence radius for q = {q} (needs 0 <= q < 1)"
        )));
    }
    let eps1 = epsilon_for_support_recovery(model, 0.5)?;

    let g = |e: f64| -> Result<f64> { Ok(c_constant(e)? * e - (1.0 - q)) };
    // g(0) < 0 and g -> +inf at the right end, so a sign change exists.
    let mut lo = 0.0f64;
    let mut hi = TAYLOR_RADIUS - RADIUS_GRID_STEP;
    let mut e = RADIUS_GRID_STEP;
    while e < TAYLOR_RADIUS {
        if g(e)? >= 0.0 {
            hi = e;
            break;
        }
        lo = e;
        e += RADIUS_GRID_STEP;
    }
    while hi - lo > RADIUS_BISECT_TOL {
        let mid = 0.5 * (lo + hi);
        if g(mid)? >= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let eps0_star = 0.5 * (lo + hi);
    let c_at_eps0 = c_constant(eps0_star)?;
    let eps2_unc = ((1.0 - q) / c_at_eps0).min(eps0_star);

    let kappa = model.zstar().condition_number()?;
    let cap = if kappa.is_finite() {
        kappa.powi(-2)
    } else {
        0.0
    };
    let kappa_capped = cap < eps2_unc;
    let eps2 = if kappa_capped { cap } else { eps2_unc };

    Ok(RadiusReport {
        eps1,
        eps2,
        eps0_star,
        c_at_eps0,
        eps: eps1.min(eps2),
        kappa_capped,
    })
}

/// Best signed row permutation matching `w` to `wstar`: an optimal assignment
/// on the score matrix `|W W*'|` (which maximizes the summed absolute inner
/// products, equivalently minimizes the aligned Frobenius error), with each
/// sign chosen from the matched inner product.
pub fn align(w: &Matrix, wstar: &Matrix) -> Result<Alignment> {
    let n = w.rows();
    if w.shape() != (n, n) || wstar.shape() != (n, n) {
        return Err(Error::dims(
            "align",
            format!("{n}x{n} square pair"),
            format!(
                "{}x{} vs {}x{}",
                w.rows(),
                w.cols(),
                wstar.rows(),
                wstar.cols()
            ),
        ));
    }
    let score = (w * &wstar.transpose()).as_dmatrix().clone();
    let cost = DMatrix::from_fn(n, n, |i, j| -score[(i, j)].abs());
    let perm = min_cost_assignment(&cost);
    let signs: Vec<f64> = (0..n)
        .map(|i| if score[(i, perm[i])] < 0.0 { -1.0 } else { 1.0 })
        .collect();

    let wd = w.as_dmatrix();
    let sd = wstar.as_dmatrix();
    let mut err_sq = 0.0;
    for i in 0..n {
        for j in 0..n {
            let d = signs[i] * wd[(i, j)] - sd[(perm[i], j)];
            err_sq += d * d;
        }
    }
    Ok(Alignment {
        perm,
        signs,
        aligned_error: err_sq.sqrt(),
    })
}

/// O(n^3) minimum-cost assignment (Hungarian algorithm with potentials).
/// Returns `perm[i] =` column assigned to row `i`.
fn min_cost_assignment(cost: &DMatrix<f64>) -> Vec<usize> {
    let n = cost.nrows();
    // 1-based arrays; index 0 is the virtual source column/row.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[(i0 - 1, j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut perm = vec![0usize; n];
    for j in 1..=n {
        perm[p[j] - 1] = j - 1;
    }
    perm
}

/// Fraction of the ground-truth support recovered by `z` after permuting its
/// rows with `alignment`: `|S(z_aligned) n S(Z*)| / |S(Z*)|`. Signs are
/// irrelevant to supports.
pub fn support_recovery(z: &Matrix, zstar: &Matrix, alignment: &Alignment) -> Result<f64> {
    if z.shape() != zstar.shape() {
        return Err(Error::dims(
            "support_recovery",
            format!("{}x{}", zstar.rows(), zstar.cols()),
            format!("{}x{}", z.rows(), z.cols()),
        ));
    }
    if z.rows() != alignment.perm.len() {
        return Err(Error::dims(
            "support_recovery: alignment",
            alignment.perm.len(),
            z.rows(),
        ));
    }
    let zd = z.as_dmatrix();
    let sd = zstar.as_dmatrix();
    let mut denom = 0usize;
    for v in sd.iter() {
        if *v != 0.0 {
            denom += 1;
        }
    }
    if denom == 0 {
        return Err(Error::InvalidParameter(
            "support recovery undefined for an all-zero ground truth".into(),
        ));
    }
    let mut matched = 0usize;
    for i in 0..z.rows() {
        let target = alignment.perm[i];
        for j in 0..z.cols() {
            if zd[(i, j)] != 0.0 && sd[(target, j)] != 0.0 {
                matched += 1;
            }
        }
    }
    Ok(matched as f64 / denom as f64)
}

/// Which trace field [`empirical_rate`] estimates the decay rate of.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RateField {
    Werr,
    Zerr,
}

/// Geometric mean of consecutive error ratios over the usable window of a
/// trace: records after support recovery is complete (when it ever is) and
/// strictly above the `100 * eps` noise floor.
pub fn empirical_rate(trace: &[LearnRecord], field: RateField) -> Result<f64> {
    let floor = 100.0 * f64::EPSILON;
    let value = |r: &LearnRecord| match field {
        RateField::Werr => r.werr,
        RateField::Zerr => r.zerr,
    };
    let with_field: Vec<&LearnRecord> = trace.iter().filter(|r| value(r).is_some()).collect();
    let start = with_field
        .iter()
        .position(|r| r.support_recovery == Some(1.0))
        .unwrap_or(0);
    let mut window = Vec::new();
    for r in &with_field[start..] {
        let v = value(r).expect("filtered to records with the field");
        if v <= floor {
            break;
        }
        window.push(v);
    }
    if window.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "need >= 3 usable records above the noise floor, found {}",
            window.len()
        )));
    }
    let first = window[0];
    let last = window[window.len() - 1];
    Ok((last / first).powf(1.0 / (window.len() - 1) as f64))
}
