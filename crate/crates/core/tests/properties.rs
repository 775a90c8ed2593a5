//! Cross-module statistical and asymptotic properties that are too heavy for
//! unit tests, plus property-based invariants.

use proptest::prelude::*;

use utl::analysis::{self, dk_submatrix, max_dk_norm, spectral_report};
use utl::genmodel::{GenerativeModel, ModelParams, NonzeroDistribution};
use utl::learner::hard_threshold;
use utl::linops::Matrix;

fn model(n: usize, big_n: usize, s: usize, seed: u64) -> GenerativeModel {
    GenerativeModel::generate(&ModelParams {
        n,
        big_n,
        s,
        dist: NonzeroDistribution::Gaussian,
        noise_sigma: 0.0,
        seed,
    })
    .unwrap()
}

/// `||Z* Z*' - Id||_F` shrinks with the number of training signals: the
/// coefficient rows become orthonormal in the large-sample limit.
#[test]
fn row_gram_residual_decreases_with_sample_count() {
    let mut means = Vec::new();
    for &big_n in &[1_000usize, 10_000, 100_000] {
        let mut total = 0.0;
        for seed in 0..5u64 {
            let m = model(50, big_n, 5, 900 + seed);
            total += spectral_report(&m).unwrap().row_gram_residual;
        }
        means.push(total / 5.0);
    }
    println!("row gram residual means: {means:?}");
    assert!(
        means[0] > means[1] && means[1] > means[2],
        "expected monotone decrease, got {means:?}"
    );
}

/// The masked Gram matrices `M_k M_k'` approach a multiple of the identity
/// (with the `k`th diagonal removed): their relative off-diagonal mass
/// decreases with the number of training signals.
#[test]
fn masked_gram_off_diagonal_mass_decreases() {
    let mut ratios = Vec::new();
    for &big_n in &[1_000usize, 10_000, 100_000] {
        let mut ratio_sum = 0.0;
        for seed in 0..5u64 {
            let m = model(50, big_n, 5, 300 + seed);
            let z = m.zstar();
            let mut off = 0.0;
            let mut diag = 0.0;
            for k in 0..50 {
                let mk = dk_submatrix(z, k).unwrap();
                let gram = &mk * &mk.transpose();
                for i in 0..50 {
                    for j in 0..50 {
                        let v = gram.get(i, j);
                        if i == j {
                            diag += v * v;
                        } else {
                            off += v * v;
                        }
                    }
                }
            }
            ratio_sum += (off / diag).sqrt();
        }
        ratios.push(ratio_sum / 5.0);
    }
    println!("off/diag mass ratios: {ratios:?}");
    assert!(
        ratios[0] > ratios[1] && ratios[1] > ratios[2],
        "expected monotone decrease, got {ratios:?}"
    );
}

/// For two-nonzero columns the masked Gram matrices are exactly diagonal:
/// an off-diagonal entry needs a column supported on three distinct rows.
#[test]
fn s2_masked_gram_exactly_diagonal() {
    for seed in 0..10u64 {
        let m = model(8, 120, 2, 40 + seed);
        let z = m.zstar();
        for k in 0..8 {
            let mk = dk_submatrix(z, k).unwrap();
            let gram = &mk * &mk.transpose();
            for i in 0..8 {
                for j in 0..8 {
                    if i != j {
                        assert!(
                            gram.get(i, j).abs() <= 1e-14,
                            "seed {seed} k={k}: off-diagonal ({i},{j}) = {}",
                            gram.get(i, j)
                        );
                    }
                }
            }
        }
    }
}

/// The normalized contraction factor divides by the data norm, so jointly
/// rescaling coefficients and data leaves it unchanged.
#[test]
fn q_n_scale_invariant() {
    let m = model(20, 2_000, 3, 77);
    let base = spectral_report(&m).unwrap().q_n;
    for c in [0.1, 3.0, 100.0] {
        let scaled = spectral_report(&m.scaled(c).unwrap()).unwrap().q_n;
        assert!(
            (scaled - base).abs() <= 1e-9 * base,
            "c={c}: q_n {scaled} vs {base}"
        );
    }
}

/// At n=50, s=5, N=1e5 the maximum masked norm sits above its large-sample
/// limit 2/7 by a finite-sample margin (measured ~12% for Gaussian values)
/// and approaches the limit from above as N grows.
#[test]
fn max_dk_norm_approaches_limit_from_above() {
    let limit = (4.0f64 / 49.0).sqrt();
    let mut means = Vec::new();
    for &big_n in &[10_000usize, 100_000] {
        let mut total = 0.0;
        for seed in 0..3u64 {
            let m = model(50, big_n, 5, 500 + seed);
            total += max_dk_norm(m.zstar()).unwrap();
        }
        means.push(total / 3.0);
    }
    println!("max_dk means (N=1e4, 1e5): {means:?}, limit {limit:.4}");
    assert!(means[1] < means[0], "should tighten with N: {means:?}");
    assert!(
        means[1] > limit && means[1] <= 1.15 * limit,
        "N=1e5 mean {} should sit within 15% above the limit {limit}",
        means[1]
    );
}

/// One sparse coding step from inside the support-recovery radius keeps the
/// coefficient error within the initialization error (50 models).
#[test]
fn sparse_code_error_within_radius_bound() {
    use utl::genmodel::{epsilon_for_support_recovery, make_init, InitSpec};
    use utl::learner::sparse_code_step;
    for seed in 0..50u64 {
        let s = 1 + (seed as usize % 4);
        let m = model(16, 400, s, 7_000 + seed).normalize().unwrap();
        let eps1 = epsilon_for_support_recovery(&m, 0.5).unwrap();
        let eps = 0.9 * eps1;
        let w0 = make_init(&InitSpec::EpsilonBall(eps), &m, seed).unwrap();
        let z1 = sparse_code_step(&w0, m.p(), s).unwrap();
        let err = (&z1 - m.zstar()).frobenius_norm();
        assert!(
            err <= eps * (1.0 + 1e-9),
            "seed {seed}: error {err} exceeds radius {eps}"
        );
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn hard_threshold_keeps_top_magnitudes(
        v in prop::collection::vec(-1e3f64..1e3, 1..24),
        s_frac in 0.0f64..=1.0,
    ) {
        let s = ((v.len() as f64) * s_frac) as usize;
        let out = hard_threshold(&v, s).unwrap();
        let nnz = out.iter().filter(|&&x| x != 0.0).count();
        prop_assert!(nnz <= s);
        for (a, b) in v.iter().zip(out.iter()) {
            // Every output entry is either the input entry or zero.
            prop_assert!(*b == *a || *b == 0.0);
        }
        // No dropped magnitude may exceed a kept one (ties go to the
        // lower index, so equality across the cut is fine).
        let kept_min = out
            .iter()
            .filter(|&&b| b != 0.0)
            .map(|b| b.abs())
            .fold(f64::INFINITY, f64::min);
        let dropped_max = v
            .iter()
            .zip(out.iter())
            .filter(|(a, b)| **b == 0.0 && **a != 0.0)
            .map(|(a, _)| a.abs())
            .fold(0.0f64, f64::max);
        if nnz > 0 {
            prop_assert!(dropped_max <= kept_min);
        } else {
            // Nothing kept: either s = 0 or the input was all zeros.
            prop_assert!(s == 0 || v.iter().all(|&a| a == 0.0));
        }
    }

    #[test]
    fn svd_factifies_random_matrices(
        rows in 1usize..10,
        cols in 1usize..10,
        seed in 0u64..1000,
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let a = Matrix::from_fn(rows, cols, |_, _| rng.random::<f64>() * 20.0 - 10.0).unwrap();
        let f = a.svd().unwrap();
        let (ru, rv, recon) = f.residuals(&a);
        let r = f.sigma.len() as f64;
        prop_assert!(ru <= 1e-10 * r.sqrt());
        prop_assert!(rv <= 1e-10 * r.sqrt());
        prop_assert!(recon <= 1e-9 * a.frobenius_norm().max(1.0));
        prop_assert!(a.spectral_norm().unwrap() <= a.frobenius_norm() + 1e-12);
    }

    #[test]
    fn alignment_error_never_worse_than_identity_matching(seed in 0u64..200) {
        use rand::{Rng, SeedableRng};
        let n = 3 + (seed as usize % 4);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let w = Matrix::from_fn(n, n, |_, _| rng.random::<f64>() - 0.5).unwrap();
        let wstar = utl::genmodel::gen_unitary(n, seed ^ 0xabcd).unwrap();
        let a = analysis::align(&w, &wstar).unwrap();
        let raw = (&w - &wstar).frobenius_norm();
        prop_assert!(a.aligned_error <= raw + 1e-12);
    }
}
