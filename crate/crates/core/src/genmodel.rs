//! Seeded synthesis of ground-truth models `P = W*' (Z* + H)` with a unitary
//! transform `W*` and exactly `s`-sparse coefficient columns `Z*`, plus the
//! initialization recipes used by the experiments.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::constants::ORTHONORMALITY_TOL;
use crate::error::{Error, Result};
use crate::linops::Matrix;

/// Distribution of the nonzero coefficient values. Every variant has mean
/// zero and variance `n / (s N)`, so `||Z*||_2 -> 1` as `N` grows.
#[derive(Debug, Clone, PartialEq)]
pub enum NonzeroDistribution {
    /// `N(0, n/sN)`.
    Gaussian,
    /// `+-sqrt(n/sN)` with equal probability.
    ScaledSigns,
    /// Uniform on `[-b, -c] u [c, b]`. With `bounds = None` the defaults are
    /// `c = sqrt(3n/7sN)`, `b = sqrt(12n/7sN)`; explicit `(c, b)` overrides
    /// must keep the variance `(b^2 + bc + c^2)/3` equal to `n/sN`.
    UniformAnnulus { bounds: Option<(f64, f64)> },
    /// Two-sided truncated exponential `k e^(-a|z|)` on `c <= |z| <= b`,
    /// parameterized by `K > 1` with `beta = ln K / (K - 1)`,
    /// `a = sqrt((2 - K beta^2) s N / n)`, `c = beta / a`, `b = K c`.
    TruncatedExponential { shape: f64 },
}

impl NonzeroDistribution {
    /// Short stable tag used in CSV output and CLI flags.
    pub fn tag(&self) -> String {
        match self {
            NonzeroDistribution::Gaussian => "gaussian".into(),
            NonzeroDistribution::ScaledSigns => "signs".into(),
            NonzeroDistribution::UniformAnnulus { bounds: None } => "annulus".into(),
            NonzeroDistribution::UniformAnnulus { bounds: Some((c, b)) } => {
                format!("annulus:{c}:{b}")
            }
            NonzeroDistribution::TruncatedExponential { shape } => format!("texp:{shape}"),
        }
    }

    fn sampler(&self, n: usize, big_n: usize, s: usize) -> Result<ValueSampler> {
        let variance = n as f64 / (s as f64 * big_n as f64);
        match self {
            NonzeroDistribution::Gaussian => {
                let normal = Normal::new(0.0, variance.sqrt())
                    .map_err(|e| Error::InvalidParameter(format!("gaussian: {e}")))?;
                Ok(ValueSampler::Gaussian(normal))
            }
            NonzeroDistribution::ScaledSigns => Ok(ValueSampler::Signs(variance.sqrt())),
            NonzeroDistribution::UniformAnnulus { bounds } => {
                let (c, b) = match bounds {
                    None => ((3.0 * variance / 7.0).sqrt(), (12.0 * variance / 7.0).sqrt()),
                    Some((c, b)) => {
                        if !(*c > 0.0 && *b > *c) {
                            return Err(Error::InvalidParameter(format!(
                                "annulus bounds need 0 < c < b, got c={c}, b={b}"
                            )));
                        }
                        let var = (b * b + b * c + c * c) / 3.0;
                        if (var - variance).abs() > 1e-9 * variance {
                            return Err(Error::InvalidParameter(format!(
                                "annulus bounds give variance {var:.6e}, need {variance:.6e}"
                            )));
                        }
                        (*c, *b)
                    }
                };
                Ok(ValueSampler::Annulus { c, b })
            }
            NonzeroDistribution::TruncatedExponential { shape } => {
                let k = *shape;
                if !(k > 1.0) || !k.is_finite() {
                    return Err(Error::InvalidParameter(format!(
                        "truncated exponential needs K > 1, got {k}"
                    )));
                }
                let beta = k.ln() / (k - 1.0);
                let rem = 2.0 - k * beta * beta;
                if rem <= 0.0 {
                    return Err(Error::InvalidParameter(format!(
                        "truncated exponential K={k} violates 2 - K beta^2 > 0"
                    )));
                }
                let a = (rem / variance).sqrt();
                let c = beta / a;
                let b = k * c;
                Ok(ValueSampler::TruncExp { a, c, b })
            }
        }
    }

    /// Resolved magnitude range `(c, b)` for the bounded variants, mostly for
    /// tests and reporting.
    pub fn magnitude_bounds(&self, n: usize, big_n: usize, s: usize) -> Result<Option<(f64, f64)>> {
        match self.sampler(n, big_n, s)? {
            ValueSampler::Annulus { c, b } | ValueSampler::TruncExp { c, b, .. } => {
                Ok(Some((c, b)))
            }
            _ => Ok(None),
        }
    }
}

impl fmt::Display for NonzeroDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.tag())
    }
}

impl FromStr for NonzeroDistribution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        match parts[0] {
            "gaussian" | "normal" => Ok(NonzeroDistribution::Gaussian),
            "signs" | "scaled-signs" => Ok(NonzeroDistribution::ScaledSigns),
            "annulus" | "uniform" => match parts.len() {
                1 => Ok(NonzeroDistribution::UniformAnnulus { bounds: None }),
                3 => {
                    let c: f64 = parts[1]
                        .parse()
                        .map_err(|_| Error::InvalidParameter(format!("bad annulus c: {s}")))?;
                    let b: f64 = parts[2]
                        .parse()
                        .map_err(|_| Error::InvalidParameter(format!("bad annulus b: {s}")))?;
                    Ok(NonzeroDistribution::UniformAnnulus { bounds: Some((c, b)) })
                }
                _ => Err(Error::InvalidParameter(format!(
                    "annulus takes 0 or 2 parameters: {s}"
                ))),
            },
            "texp" | "truncated-exponential" => {
                let shape = if parts.len() == 2 {
                    parts[1]
                        .parse()
                        .map_err(|_| Error::InvalidParameter(format!("bad texp K: {s}")))?
                } else {
                    2.0
                };
                Ok(NonzeroDistribution::TruncatedExponential { shape })
            }
            other => Err(Error::InvalidParameter(format!(
                "unknown distribution '{other}' (expected gaussian|signs|annulus|texp)"
            ))),
        }
    }
}

enum ValueSampler {
    Gaussian(Normal<f64>),
    Signs(f64),
    Annulus { c: f64, b: f64 },
    TruncExp { a: f64, c: f64, b: f64 },
}

impl ValueSampler {
    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        match self {
            ValueSampler::Gaussian(n) => n.sample(rng),
            ValueSampler::Signs(m) => {
                if rng.random::<bool>() {
                    *m
                } else {
                    -*m
                }
            }
            ValueSampler::Annulus { c, b } => {
                let mag = rng.random_range(*c..=*b);
                if rng.random::<bool>() {
                    mag
                } else {
                    -mag
                }
            }
            ValueSampler::TruncExp { a, c, b } => {
                // Inverse CDF of the normalized exponential on [c, b].
                let u: f64 = rng.random::<f64>();
                let scale = 1.0 - (-a * (b - c)).exp();
                let mag = c - (1.0 - u * scale).ln() / a;
                if rng.random::<bool>() {
                    mag
                } else {
                    -mag
                }
            }
        }
    }
}

/// Ground-truth generative model satisfying the unitary/sparsity assumptions.
#[derive(Debug, Clone)]
pub struct GenerativeModel {
    n: usize,
    big_n: usize,
    s: usize,
    wstar: Matrix,
    zstar: Matrix,
    p: Matrix,
    noise_h: Option<Matrix>,
    dist: Option<NonzeroDistribution>,
    seed: u64,
    normalized: bool,
}

/// Parameters for [`GenerativeModel::generate`].
#[derive(Debug, Clone)]
pub struct ModelParams {
    pub n: usize,
    pub big_n: usize,
    pub s: usize,
    pub dist: NonzeroDistribution,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl GenerativeModel {
    /// Draws a full model: unitary `W*`, sparse `Z*`, data `P = W*'(Z* + H)`.
    /// Deterministic for fixed parameters and seed.
    pub fn generate(params: &ModelParams) -> Result<GenerativeModel> {
        let wstar = gen_unitary(params.n, derive_seed(params.seed, 0))?;
        let zstar = gen_sparse_codes(
            params.n,
            params.big_n,
            params.s,
            &params.dist,
            derive_seed(params.seed, 1),
        )?;
        let mut model = synthesize(&wstar, &zstar, params.noise_sigma, derive_seed(params.seed, 2))?;
        model.dist = Some(params.dist.clone());
        model.seed = params.seed;
        Ok(model)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn big_n(&self) -> usize {
        self.big_n
    }

    pub fn s(&self) -> usize {
        self.s
    }

    pub fn wstar(&self) -> &Matrix {
        &self.wstar
    }

    pub fn zstar(&self) -> &Matrix {
        &self.zstar
    }

    pub fn p(&self) -> &Matrix {
        &self.p
    }

    pub fn noise_h(&self) -> Option<&Matrix> {
        self.noise_h.as_ref()
    }

    pub fn dist(&self) -> Option<&NonzeroDistribution> {
        self.dist.as_ref()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn normalized(&self) -> bool {
        self.normalized
    }

    /// Rescales the model so that `||P||_2 = 1`. Supports are unchanged;
    /// idempotent up to rounding.
    pub fn normalize(&self) -> Result<GenerativeModel> {
        let p_norm = self.p.spectral_norm()?;
        if p_norm == 0.0 {
            return Err(Error::InvalidParameter(
                "cannot normalize a model with zero data".into(),
            ));
        }
        let inv = 1.0 / p_norm;
        Ok(GenerativeModel {
            n: self.n,
            big_n: self.big_n,
            s: self.s,
            wstar: self.wstar.clone(),
            zstar: self.zstar.scale(inv)?,
            p: self.p.scale(inv)?,
            noise_h: match &self.noise_h {
                Some(h) => Some(h.scale(inv)?),
                None => None,
            },
            dist: self.dist.clone(),
            seed: self.seed,
            normalized: true,
        })
    }

    /// Rescales coefficients and data by `c` (test/reporting helper; the
    /// scale-invariant contraction factor should not change).
    pub fn scaled(&self, c: f64) -> Result<GenerativeModel> {
        if c == 0.0 || !c.is_finite() {
            return Err(Error::InvalidParameter(format!("bad scale factor {c}")));
        }
        Ok(GenerativeModel {
            n: self.n,
            big_n: self.big_n,
            s: self.s,
            wstar: self.wstar.clone(),
            zstar: self.zstar.scale(c)?,
            p: self.p.scale(c)?,
            noise_h: match &self.noise_h {
                Some(h) => Some(h.scale(c)?),
                None => None,
            },
            dist: self.dist.clone(),
            seed: self.seed,
            normalized: false,
        })
    }
}

/// Initialization recipes for the learner's starting transform.
#[derive(Debug, Clone, PartialEq)]
pub enum InitSpec {
    /// `W0 = W* + eps G / ||G||_F` with standard normal `G`: the starting
    /// point sits exactly on the radius-`eps` sphere around `W*`.
    EpsilonBall(f64),
    /// I.i.d. standard normal entries.
    RandGaussian,
    Identity,
    /// Orthonormal type-II DCT matrix.
    Dct,
    /// I.i.d. uniform `[0, 1)` entries.
    Uniform01,
    Zero,
    /// Matrix read from a binary matrix file.
    FromFile(PathBuf),
}

impl InitSpec {
    pub fn label(&self) -> &'static str {
        match self {
            InitSpec::EpsilonBall(_) => "eps",
            InitSpec::RandGaussian => "rand",
            InitSpec::Identity => "id",
            InitSpec::Dct => "dct",
            InitSpec::Uniform01 => "unif",
            InitSpec::Zero => "zero",
            InitSpec::FromFile(_) => "file",
        }
    }
}

/// Splitmix64-style derivation of per-component seeds from a run seed.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed
        .wrapping_add(stream.wrapping_mul(0x9e37_79b9_7f4a_7c15))
        .wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Random `n x n` matrix with orthonormal rows/columns: QR orthonormalization
/// of an i.i.d. standard normal draw, with the usual sign correction from the
/// `R` diagonal. Deterministic per seed.
pub fn gen_unitary(n: usize, seed: u64) -> Result<Matrix> {
    if n == 0 {
        return Err(Error::InvalidParameter("gen_unitary: n must be >= 1".into()));
    }
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    for attempt in 0..3u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(attempt));
        let g = DMatrix::from_fn(n, n, |_, _| normal.sample(&mut rng));
        let qr = g.qr();
        let r = qr.r();
        let max_diag = (0..n).map(|i| f64::abs(r[(i, i)])).fold(0.0f64, f64::max);
        let min_diag = (0..n).map(|i| f64::abs(r[(i, i)])).fold(f64::INFINITY, f64::min);
        // A Gaussian draw is almost surely full rank; redraw on the
        // vanishing-pivot fluke instead of returning a deficient Q.
        if min_diag <= n as f64 * f64::EPSILON * max_diag {
            continue;
        }
        let mut q = qr.q();
        for j in 0..n {
            if r[(j, j)] < 0.0 {
                let mut col = q.column_mut(j);
                col.neg_mut();
            }
        }
        return Matrix::from_dmatrix(q);
    }
    Err(Error::NumericalFailure(format!(
        "gen_unitary: rank-deficient Gaussian draw three times in a row (n={n}, seed={seed})"
    )))
}

/// `n x N` matrix whose columns each carry exactly `s` nonzeros on a
/// uniformly random support, with values i.i.d. from `dist`.
pub fn gen_sparse_codes(
    n: usize,
    big_n: usize,
    s: usize,
    dist: &NonzeroDistribution,
    seed: u64,
) -> Result<Matrix> {
    if s == 0 || s > n {
        return Err(Error::InvalidParameter(format!(
            "sparsity must satisfy 1 <= s <= n, got s={s}, n={n}"
        )));
    }
    if big_n == 0 {
        return Err(Error::InvalidParameter("need at least one column".into()));
    }
    let sampler = dist.sampler(n, big_n, s)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut z = DMatrix::zeros(n, big_n);
    let mut indices: Vec<usize> = (0..n).collect();
    for j in 0..big_n {
        // Partial Fisher-Yates: the first s entries are a uniform s-subset.
        for i in 0..s {
            let pick = rng.random_range(i..n);
            indices.swap(i, pick);
        }
        for &row in &indices[..s] {
            z[(row, j)] = sampler.sample(&mut rng);
        }
    }
    Matrix::from_dmatrix(z)
}

/// Assembles a model from explicit factors: `P = W*'(Z* + H)` with `H`
/// i.i.d. `N(0, noise_sigma^2)` (absent when `noise_sigma = 0`). The column
/// sparsity `s` is inferred from `Z*` and must be uniform across columns.
pub fn synthesize(
    wstar: &Matrix,
    zstar: &Matrix,
    noise_sigma: f64,
    seed: u64,
) -> Result<GenerativeModel> {
    let n = wstar.rows();
    if wstar.cols() != n {
        return Err(Error::dims(
            "synthesize: wstar",
            format!("{n}x{n}"),
            format!("{}x{}", wstar.rows(), wstar.cols()),
        ));
    }
    if zstar.rows() != n {
        return Err(Error::dims(
            "synthesize: zstar rows",
            n,
            zstar.rows(),
        ));
    }
    let gram_residual = unitary_residual(wstar);
    if gram_residual > ORTHONORMALITY_TOL * n as f64 {
        return Err(Error::InvalidParameter(format!(
            "synthesize: wstar is not unitary (||W'W - Id||_F = {gram_residual:.3e})"
        )));
    }
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "noise_sigma must be finite and >= 0, got {noise_sigma}"
        )));
    }
    let big_n = zstar.cols();
    let s = column_sparsity(zstar)?;

    let noise_h = if noise_sigma > 0.0 {
        let normal = Normal::new(0.0, noise_sigma).expect("noise sigma validated");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Some(Matrix::from_fn(n, big_n, |_, _| normal.sample(&mut rng))?)
    } else {
        None
    };

    let wstar_t = wstar.transpose();
    let p = match &noise_h {
        Some(h) => &wstar_t * &(zstar + h),
        None => &wstar_t * zstar,
    };

    Ok(GenerativeModel {
        n,
        big_n,
        s,
        wstar: wstar.clone(),
        zstar: zstar.clone(),
        p,
        noise_h,
        dist: None,
        seed,
        normalized: false,
    })
}

/// Builds the learner's starting transform for the given recipe.
pub fn make_init(spec: &InitSpec, model: &GenerativeModel, seed: u64) -> Result<Matrix> {
    let n = model.n();
    match spec {
        InitSpec::EpsilonBall(eps) => {
            if !(*eps > 0.0 && eps.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "epsilon-ball radius must be positive, got {eps}"
                )));
            }
            let normal = Normal::new(0.0, 1.0).expect("unit normal");
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g = DMatrix::from_fn(n, n, |_, _| normal.sample(&mut rng));
            let g_norm = g.norm();
            if g_norm == 0.0 {
                return Err(Error::NumericalFailure("zero Gaussian direction".into()));
            }
            let direction = Matrix::from_dmatrix(g * (eps / g_norm))?;
            Ok(&direction + model.wstar())
        }
        InitSpec::RandGaussian => {
            let normal = Normal::new(0.0, 1.0).expect("unit normal");
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            Matrix::from_fn(n, n, |_, _| normal.sample(&mut rng))
        }
        InitSpec::Identity => Ok(Matrix::identity(n)),
        InitSpec::Dct => dct_matrix(n),
        InitSpec::Uniform01 => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            Matrix::from_fn(n, n, |_, _| rng.random::<f64>())
        }
        InitSpec::Zero => Ok(Matrix::zeros(n, n)),
        InitSpec::FromFile(path) => {
            let m = crate::io::read_matrix(path)?;
            if m.shape() != (n, n) {
                return Err(Error::dims(
                    "init from file",
                    format!("{n}x{n}"),
                    format!("{}x{}", m.rows(), m.cols()),
                ));
            }
            Ok(m)
        }
    }
}

/// Orthonormal type-II DCT: row `k`, column `j` is
/// `c_k cos(pi (2j + 1) k / 2n)` with `c_0 = sqrt(1/n)`, `c_k = sqrt(2/n)`.
pub fn dct_matrix(n: usize) -> Result<Matrix> {
    let nf = n as f64;
    Matrix::from_fn(n, n, |k, j| {
        let ck = if k == 0 {
            (1.0 / nf).sqrt()
        } else {
            (2.0 / nf).sqrt()
        };
        ck * (std::f64::consts::PI * (2 * j + 1) as f64 * k as f64 / (2.0 * nf)).cos()
    })
}

/// `fraction * min_j beta(z_j / ||z_j||_2)` where `beta` is the smallest
/// nonzero magnitude of a vector. With `fraction = 0.5` this is the
/// support-recovery radius of the sparse coding step.
pub fn epsilon_for_support_recovery(model: &GenerativeModel, fraction: f64) -> Result<f64> {
    if !(fraction > 0.0 && fraction <= 0.5) {
        return Err(Error::InvalidParameter(format!(
            "fraction must be in (0, 0.5], got {fraction}"
        )));
    }
    let z = model.zstar().as_dmatrix();
    let mut min_beta = f64::INFINITY;
    for j in 0..z.ncols() {
        let col = z.column(j);
        let norm = col.norm();
        if norm == 0.0 {
            return Err(Error::InvalidParameter(format!(
                "column {j} of Z* is all-zero; the model violates the sparsity assumption"
            )));
        }
        let mut beta = f64::INFINITY;
        for &v in col.iter() {
            if v != 0.0 {
                beta = beta.min(v.abs() / norm);
            }
        }
        min_beta = min_beta.min(beta);
    }
    Ok(fraction * min_beta)
}

pub(crate) fn unitary_residual(w: &Matrix) -> f64 {
    let wt_w = &w.transpose() * w;
    let n = w.cols();
    (wt_w.as_dmatrix() - DMatrix::<f64>::identity(n, n)).norm()
}

fn column_sparsity(zstar: &Matrix) -> Result<usize> {
    let z = zstar.as_dmatrix();
    let mut s = None;
    for j in 0..z.ncols() {
        let nnz = z.column(j).iter().filter(|&&v| v != 0.0).count();
        match s {
            None => s = Some(nnz),
            Some(prev) if prev != nnz => {
                return Err(Error::InvalidParameter(format!(
                    "columns of Z* must share one sparsity level; column {j} has {nnz} nonzeros, expected {prev}"
                )));
            }
            _ => {}
        }
    }
    match s {
        Some(0) | None => Err(Error::InvalidParameter(
            "Z* has all-zero columns; every column must carry at least one nonzero".into(),
        )),
        Some(s) => Ok(s),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(n: usize, big_n: usize, s: usize, seed: u64) -> ModelParams {
        ModelParams {
            n,
            big_n,
            s,
            dist: NonzeroDistribution::Gaussian,
            noise_sigma: 0.0,
            seed,
        }
    }

    #[test]
    fn unitary_basics() {
        let w1 = gen_unitary(1, 5).unwrap();
        assert!((w1.get(0, 0).abs() - 1.0).abs() < 1e-14);

        let a = gen_unitary(12, 9).unwrap();
        let b = gen_unitary(12, 9).unwrap();
        assert_eq!(a, b, "same (n, seed) must give identical matrices");

        let w = gen_unitary(50, 123).unwrap();
        assert!(unitary_residual(&w) <= 5e-9);
    }

    #[test]
    fn sparse_codes_full_support_when_s_equals_n() {
        let z = gen_sparse_codes(6, 20, 6, &NonzeroDistribution::Gaussian, 9).unwrap();
        for j in 0..20 {
            for i in 0..6 {
                assert_ne!(z.get(i, j), 0.0);
            }
        }
    }

    #[test]
    fn sparse_codes_invalid_s() {
        assert!(gen_sparse_codes(4, 5, 0, &NonzeroDistribution::Gaussian, 1).is_err());
        assert!(gen_sparse_codes(4, 5, 5, &NonzeroDistribution::Gaussian, 1).is_err());
    }

    #[test]
    fn gaussian_nonzero_variance_near_target() {
        let (n, big_n, s) = (50, 10000, 5);
        let z = gen_sparse_codes(n, big_n, s, &NonzeroDistribution::Gaussian, 2024).unwrap();
        let values: Vec<f64> = z
            .to_row_major()
            .into_iter()
            .filter(|&v| v != 0.0)
            .collect();
        assert_eq!(values.len(), s * big_n);
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
            / values.len() as f64;
        let target = n as f64 / (s as f64 * big_n as f64);
        assert!((var - target).abs() < 0.05 * target, "var {var} vs {target}");
        let se = (2.0 * target * target / values.len() as f64).sqrt();
        assert!(mean.abs() < 4.0 * (target / values.len() as f64).sqrt() + se);
    }

    #[test]
    fn scaled_signs_magnitudes_exact() {
        let (n, big_n, s) = (10, 300, 4);
        let z = gen_sparse_codes(n, big_n, s, &NonzeroDistribution::ScaledSigns, 7).unwrap();
        let m = (n as f64 / (s as f64 * big_n as f64)).sqrt();
        for v in z.to_row_major() {
            if v != 0.0 {
                assert_eq!(v.abs(), m);
            }
        }
    }

    #[test]
    fn annulus_and_texp_magnitudes_bounded() {
        let (n, big_n, s) = (10, 500, 3);
        for dist in [
            NonzeroDistribution::UniformAnnulus { bounds: None },
            NonzeroDistribution::TruncatedExponential { shape: 2.0 },
            NonzeroDistribution::TruncatedExponential { shape: 8.0 },
        ] {
            let (c, b) = dist.magnitude_bounds(n, big_n, s).unwrap().unwrap();
            assert!(c > 0.0 && b > c);
            let z = gen_sparse_codes(n, big_n, s, &dist, 31).unwrap();
            for v in z.to_row_major() {
                if v != 0.0 {
                    let mag = v.abs();
                    assert!(
                        mag >= c - 1e-15 && mag <= b + 1e-15,
                        "{dist}: magnitude {mag} outside [{c}, {b}]"
                    );
                }
            }
        }
    }

    #[test]
    fn texp_parameter_identities() {
        let (n, big_n, s) = (50, 10000, 5);
        for k in [1.5, 2.0, 10.0] {
            let dist = NonzeroDistribution::TruncatedExponential { shape: k };
            let (c, b) = dist.magnitude_bounds(n, big_n, s).unwrap().unwrap();
            let beta = k.ln() / (k - 1.0);
            let a = ((2.0 - k * beta * beta) * s as f64 * big_n as f64 / n as f64).sqrt();
            assert!((a * c - beta).abs() <= 1e-15 * beta.max(1.0));
            assert_eq!(b, k * c);
        }
    }

    #[test]
    fn nonzero_distribution_statistics() {
        let (n, big_n, s) = (20, 4000, 4);
        let target = n as f64 / (s as f64 * big_n as f64);
        for (i, dist) in [
            NonzeroDistribution::ScaledSigns,
            NonzeroDistribution::UniformAnnulus { bounds: None },
            NonzeroDistribution::TruncatedExponential { shape: 2.0 },
        ]
        .iter()
        .enumerate()
        {
            let z = gen_sparse_codes(n, big_n, s, dist, 400 + i as u64).unwrap();
            let values: Vec<f64> = z.to_row_major().into_iter().filter(|&v| v != 0.0).collect();
            let count = values.len() as f64;
            let mean = values.iter().sum::<f64>() / count;
            let var = values.iter().map(|v| v * v).sum::<f64>() / count - mean * mean;
            // 4 standard errors around zero for the mean, 5% for the variance.
            assert!(mean.abs() <= 4.0 * (var / count).sqrt(), "{dist}: mean {mean}");
            assert!((var - target).abs() <= 0.05 * target, "{dist}: var {var}");
        }
    }

    #[test]
    fn support_uniformity() {
        // n=10, s=2 has 45 possible supports; frequencies within 4 standard
        // errors of 1/45 over 1e5 columns.
        let (n, big_n, s) = (10usize, 100_000usize, 2usize);
        let z = gen_sparse_codes(n, big_n, s, &NonzeroDistribution::ScaledSigns, 99).unwrap();
        let mut counts = std::collections::HashMap::<(usize, usize), usize>::new();
        let dm = z.as_dmatrix();
        for j in 0..big_n {
            let nz: Vec<usize> = (0..n).filter(|&i| dm[(i, j)] != 0.0).collect();
            assert_eq!(nz.len(), 2);
            *counts.entry((nz[0], nz[1])).or_default() += 1;
        }
        assert_eq!(counts.len(), 45);
        let p = 1.0 / 45.0;
        let se = (p * (1.0 - p) / big_n as f64).sqrt();
        for (&pair, &c) in &counts {
            let freq = c as f64 / big_n as f64;
            assert!(
                (freq - p).abs() <= 4.0 * se,
                "support {pair:?}: freq {freq:.5} vs {p:.5}"
            );
        }
    }

    #[test]
    fn synthesize_identity_passthrough() {
        let z = gen_sparse_codes(5, 30, 2, &NonzeroDistribution::Gaussian, 3).unwrap();
        let model = synthesize(&Matrix::identity(5), &z, 0.0, 0).unwrap();
        assert_eq!(model.p(), &z);
        assert_eq!(model.s(), 2);
    }

    #[test]
    fn synthesize_unitary_round_trip() {
        let model = GenerativeModel::generate(&params(20, 500, 3, 17)).unwrap();
        let back = model.wstar() * model.p();
        let resid = (&back - model.zstar()).frobenius_norm();
        assert!(resid <= 1e-12 * model.zstar().frobenius_norm());
        let pn = model.p().spectral_norm().unwrap();
        let zn = model.zstar().spectral_norm().unwrap();
        assert!((pn - zn).abs() <= 1e-10 * zn);
    }

    #[test]
    fn synthesize_noise_level() {
        let mut p = params(50, 10000, 5, 4);
        p.noise_sigma = 0.01;
        let model = GenerativeModel::generate(&p).unwrap();
        let residual = (&(model.wstar() * model.p()) - model.zstar()).frobenius_norm();
        // ||H||_F concentrates around sigma * sqrt(nN).
        let expected = 0.01 * (50.0 * 10000.0f64).sqrt();
        assert!(
            (residual - expected).abs() <= 0.05 * expected,
            "residual {residual} vs {expected}"
        );
    }

    #[test]
    fn synthesize_rejects_ragged_sparsity() {
        let z = Matrix::from_row_major(2, 2, &[1.0, 1.0, 1.0, 0.0]).unwrap();
        assert!(synthesize(&Matrix::identity(2), &z, 0.0, 0).is_err());
    }

    #[test]
    fn normalize_model_contract() {
        let model = GenerativeModel::generate(&params(15, 400, 3, 8)).unwrap();
        let normed = model.normalize().unwrap();
        assert!((normed.p().spectral_norm().unwrap() - 1.0).abs() <= 1e-10);

        // Idempotence.
        let twice = normed.normalize().unwrap();
        let diff = (twice.p() - normed.p()).frobenius_norm();
        assert!(diff <= 1e-12 * normed.p().frobenius_norm());

        // Scale invariance: normalizing a 7x-scaled model matches.
        let scaled = model.scaled(7.0).unwrap().normalize().unwrap();
        let diff = (scaled.zstar() - normed.zstar()).frobenius_norm();
        assert!(diff <= 1e-12 * normed.zstar().frobenius_norm());
    }

    #[test]
    fn determinism_bitwise() {
        let a = GenerativeModel::generate(&params(10, 50, 2, 77)).unwrap();
        let b = GenerativeModel::generate(&params(10, 50, 2, 77)).unwrap();
        assert_eq!(a.wstar(), b.wstar());
        assert_eq!(a.zstar(), b.zstar());
        assert_eq!(a.p(), b.p());
    }

    #[test]
    fn epsilon_ball_radius_exact() {
        let model = GenerativeModel::generate(&params(12, 60, 2, 5)).unwrap();
        for eps in [1e-6, 0.3, 5.0] {
            let w0 = make_init(&InitSpec::EpsilonBall(eps), &model, 41).unwrap();
            let r = (&w0 - model.wstar()).frobenius_norm();
            assert!((r - eps).abs() <= 1e-12 * eps.max(1.0));
        }
    }

    #[test]
    fn dct_rows_orthonormal() {
        let w = dct_matrix(4).unwrap();
        assert!(unitary_residual(&w) <= 1e-12);
        let w = dct_matrix(50).unwrap();
        assert!(unitary_residual(&w) <= 1e-12 * 50.0);
    }

    #[test]
    fn zero_init_is_zero() {
        let model = GenerativeModel::generate(&params(6, 20, 2, 1)).unwrap();
        let w0 = make_init(&InitSpec::Zero, &model, 0).unwrap();
        assert_eq!(w0.frobenius_norm(), 0.0);
    }

    #[test]
    fn support_recovery_radius_examples() {
        // Scaled signs with s=4: every normalized nonzero is exactly 1/2,
        // so fraction 0.5 gives 0.25.
        let z = gen_sparse_codes(10, 200, 4, &NonzeroDistribution::ScaledSigns, 3).unwrap();
        let model = synthesize(&gen_unitary(10, 1).unwrap(), &z, 0.0, 0).unwrap();
        let eps1 = epsilon_for_support_recovery(&model, 0.5).unwrap();
        assert!((eps1 - 0.25).abs() <= 1e-12);

        // Hand case: single column [3, 4, 0] -> min nonzero 3/5, halved.
        let z = Matrix::from_row_major(3, 1, &[3.0, 4.0, 0.0]).unwrap();
        let model = synthesize(&Matrix::identity(3), &z, 0.0, 0).unwrap();
        let eps1 = epsilon_for_support_recovery(&model, 0.5).unwrap();
        assert!((eps1 - 0.3).abs() <= 1e-15);

        // Annulus defaults with s=4: bounded below by 0.25/sqrt(s) = 0.125.
        let z = gen_sparse_codes(
            10,
            500,
            4,
            &NonzeroDistribution::UniformAnnulus { bounds: None },
            5,
        )
        .unwrap();
        let model = synthesize(&gen_unitary(10, 2).unwrap(), &z, 0.0, 0).unwrap();
        let eps1 = epsilon_for_support_recovery(&model, 0.5).unwrap();
        assert!(eps1 >= 0.125 - 1e-12, "eps1 {eps1}");

        // Bad fraction and zero-column errors.
        assert!(epsilon_for_support_recovery(&model, 0.0).is_err());
        assert!(epsilon_for_support_recovery(&model, 0.6).is_err());
    }

    #[test]
    fn dist_parsing_round_trip() {
        for s in ["gaussian", "signs", "annulus", "texp:2", "annulus:0.5:1.5"] {
            let d: NonzeroDistribution = s.parse().unwrap();
            let back: NonzeroDistribution = d.tag().parse().unwrap();
            assert_eq!(d, back);
        }
        assert!("cauchy".parse::<NonzeroDistribution>().is_err());
    }
}
