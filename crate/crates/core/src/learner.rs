//! Alternating minimization for unitary sparsifying transform learning:
//! hard-threshold sparse coding followed by a closed-form unitary operator
//! update (orthogonal Procrustes), with full per-iteration tracing.

use nalgebra::DMatrix;

use crate::analysis;
use crate::constants::ORTHONORMALITY_TOL;
use crate::error::{Error, Result};
use crate::genmodel::GenerativeModel;
use crate::linops::Matrix;

/// Per-iteration diagnostics. The error fields are present only when the
/// learner was given the ground-truth model. `werr`/`zerr` are measured after
/// signed-permutation alignment; the `_raw` variants compare iterates to the
/// ground truth directly, which is the meaningful quantity for
/// epsilon-ball starts.
#[derive(Debug, Clone)]
pub struct LearnRecord {
    pub t: usize,
    pub objective: f64,
    pub werr: Option<f64>,
    pub zerr: Option<f64>,
    pub support_recovery: Option<f64>,
    pub werr_raw: Option<f64>,
    pub zerr_raw: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    MaxIterations,
    ObjectiveTolerance,
    Stalled,
}

impl std::fmt::Display for StopReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            StopReason::MaxIterations => "max-iterations",
            StopReason::ObjectiveTolerance => "objective-tolerance",
            StopReason::Stalled => "stalled",
        };
        write!(f, "{s}")
    }
}

#[derive(Debug, Clone)]
pub struct LearnResult {
    pub w_final: Matrix,
    pub z_final: Matrix,
    pub trace: Vec<LearnRecord>,
    pub iterations_run: usize,
    pub stop_reason: StopReason,
}

/// Keeps the `s` largest-magnitude entries of `v` and zeroes the rest.
/// Ties are broken toward the lower index so results are reproducible.
pub fn hard_threshold(v: &[f64], s: usize) -> Result<Vec<f64>> {
    if s > v.len() {
        return Err(Error::InvalidParameter(format!(
            "hard_threshold: s={s} exceeds vector length {}",
            v.len()
        )));
    }
    let mut out = vec![0.0; v.len()];
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_unstable_by(|&a, &b| v[b].abs().total_cmp(&v[a].abs()).then(a.cmp(&b)));
    for &i in &order[..s] {
        out[i] = v[i];
    }
    Ok(out)
}

/// Sparse coding step: column `j` of the result is the hard-thresholded
/// product `H_s(W p_j)`, the global minimizer of `||W p_j - z||_2` over
/// `s`-sparse vectors `z`.
pub fn sparse_code_step(w: &Matrix, p: &Matrix, s: usize) -> Result<Matrix> {
    if w.rows() != w.cols() {
        return Err(Error::dims(
            "sparse_code_step: transform",
            "square",
            format!("{}x{}", w.rows(), w.cols()),
        ));
    }
    if w.cols() != p.rows() {
        return Err(Error::dims("sparse_code_step", w.cols(), p.rows()));
    }
    if s > w.rows() {
        return Err(Error::InvalidParameter(format!(
            "sparse_code_step: s={s} exceeds dimension {}",
            w.rows()
        )));
    }
    let mut wp = (w * p).as_dmatrix().clone();
    let n = wp.nrows();
    let mut order: Vec<usize> = Vec::with_capacity(n);
    for j in 0..wp.ncols() {
        let mut col = wp.column_mut(j);
        order.clear();
        order.extend(0..n);
        order.sort_unstable_by(|&a, &b| col[b].abs().total_cmp(&col[a].abs()).then(a.cmp(&b)));
        for &i in &order[s..] {
            col[i] = 0.0;
        }
    }
    Ok(Matrix::from_dmatrix_unchecked(wp))
}

/// Unitary operator update: `W = V U'` from the full SVD `P Z' = U S V'`,
/// the minimizer of `||W P - Z||_F^2` over unitary `W`.
///
/// When `P Z'` is the zero matrix every unitary matrix ties and the update is
/// degenerate; `stalled` is set and the previous transform is kept when it is
/// itself unitary, otherwise the identity is used (the conventional SVD of a
/// zero matrix). The returned transform is always unitary.
pub fn operator_update(p: &Matrix, z: &Matrix, w_prev: &Matrix) -> Result<(Matrix, bool)> {
    if p.shape() != z.shape() {
        return Err(Error::dims(
            "operator_update",
            format!("{}x{}", p.rows(), p.cols()),
            format!("{}x{}", z.rows(), z.cols()),
        ));
    }
    let n = p.rows();
    if w_prev.shape() != (n, n) {
        return Err(Error::dims(
            "operator_update: previous transform",
            format!("{n}x{n}"),
            format!("{}x{}", w_prev.rows(), w_prev.cols()),
        ));
    }
    let pzt = p * &z.transpose();
    if pzt.is_zero() {
        let w = if crate::genmodel::unitary_residual(w_prev) <= ORTHONORMALITY_TOL * n as f64 {
            w_prev.clone()
        } else {
            Matrix::identity(n)
        };
        return Ok((w, true));
    }
    let f = pzt.svd()?;
    Ok((&f.v * &f.u.transpose(), false))
}

/// `||W P - Z||_F^2`.
pub fn objective(w: &Matrix, z: &Matrix, p: &Matrix) -> Result<f64> {
    if w.cols() != p.rows() || w.rows() != z.rows() || p.cols() != z.cols() {
        return Err(Error::dims(
            "objective",
            format!("W ({}x{}) conformal with P, Z", w.rows(), w.cols()),
            format!(
                "P {}x{}, Z {}x{}",
                p.rows(),
                p.cols(),
                z.rows(),
                z.cols()
            ),
        ));
    }
    let wp = w * p;
    Ok(residual_sq(wp.as_dmatrix(), z.as_dmatrix()))
}

fn residual_sq(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum()
}

/// Runs the alternating iteration for up to `max_iter` rounds.
///
/// Stops early once the objective drops to `obj_tol` or the operator update
/// stalls twice in a row. With `ground_truth` supplied, per-iteration
/// diagnostics (aligned and raw transform/coefficient errors, support
/// recovery) are recorded in the trace.
pub fn learn(
    p: &Matrix,
    s: usize,
    w0: &Matrix,
    max_iter: usize,
    obj_tol: f64,
    ground_truth: Option<&GenerativeModel>,
) -> Result<LearnResult> {
    if max_iter == 0 {
        return Err(Error::InvalidParameter("max_iter must be >= 1".into()));
    }
    if !(obj_tol >= 0.0 && obj_tol.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "obj_tol must be finite and >= 0, got {obj_tol}"
        )));
    }
    let n = p.rows();
    if w0.shape() != (n, n) {
        return Err(Error::dims(
            "learn: initial transform",
            format!("{n}x{n}"),
            format!("{}x{}", w0.rows(), w0.cols()),
        ));
    }
    if let Some(model) = ground_truth {
        if model.p().shape() != p.shape() {
            return Err(Error::dims(
                "learn: ground truth",
                format!("{}x{}", p.rows(), p.cols()),
                format!("{}x{}", model.p().rows(), model.p().cols()),
            ));
        }
    }

    let mut w = w0.clone();
    let mut z = Matrix::zeros(n, p.cols());
    let mut trace = Vec::new();
    let mut prev_stalled = false;
    let mut stop_reason = StopReason::MaxIterations;
    let mut iterations_run = 0;

    for t in 1..=max_iter {
        z = sparse_code_step(&w, p, s)?;
        let (w_next, stalled) = operator_update(p, &z, &w)?;
        w = w_next;
        let obj = objective(&w, &z, p)?;
        if !obj.is_finite() || !w.is_finite() || !z.is_finite() {
            return Err(Error::NumericalFailure(format!(
                "non-finite iterate at iteration {t}"
            )));
        }

        let mut record = LearnRecord {
            t,
            objective: obj,
            werr: None,
            zerr: None,
            support_recovery: None,
            werr_raw: None,
            zerr_raw: None,
        };
        if let Some(model) = ground_truth {
            let alignment = analysis::align(&w, model.wstar())?;
            record.werr = Some(alignment.aligned_error);
            record.zerr = Some(
                (&alignment.apply_to_rows(&z)? - model.zstar()).frobenius_norm(),
            );
            record.support_recovery =
                Some(analysis::support_recovery(&z, model.zstar(), &alignment)?);
            record.werr_raw = Some((&w - model.wstar()).frobenius_norm());
            record.zerr_raw = Some((&z - model.zstar()).frobenius_norm());
        }
        trace.push(record);
        iterations_run = t;

        if obj <= obj_tol {
            stop_reason = StopReason::ObjectiveTolerance;
            break;
        }
        if stalled && prev_stalled {
            stop_reason = StopReason::Stalled;
            break;
        }
        prev_stalled = stalled;
    }

    Ok(LearnResult {
        w_final: w,
        z_final: z,
        trace,
        iterations_run,
        stop_reason,
    })
}
