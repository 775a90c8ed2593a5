//! The canned experiment drivers. Each returns a [`CsvTable`] whose comment
//! lines echo the full configuration; in-run sanity assertions surface as
//! [`Error::AssertionFailed`] so the binary can exit nonzero with a named
//! failure.

use crate::analysis::{self, SpectralReport};
use crate::cli::{fmt_bool, fmt_f64, CsvTable, ExperimentConfig};
use crate::error::{Error, Result};
use crate::genmodel::{
    derive_seed, epsilon_for_support_recovery, make_init, GenerativeModel, InitSpec, ModelParams,
    NonzeroDistribution,
};
use crate::learner::{learn, sparse_code_step, LearnResult};
use crate::linops::Matrix;

/// Seed stream offset for initialization draws, distinct from the model's
/// internal streams.
const INIT_STREAM: u64 = 0x1717;

/// One learner run with its model and spectral diagnostics.
pub struct RunOutput {
    pub model: GenerativeModel,
    pub report: SpectralReport,
    pub result: LearnResult,
    pub init_label: String,
    /// Radius actually used when the initialization was an epsilon ball.
    pub eps_used: Option<f64>,
}

pub fn build_model(
    cfg: &ExperimentConfig,
    s: usize,
    dist: &NonzeroDistribution,
    seed: u64,
) -> Result<GenerativeModel> {
    let model = GenerativeModel::generate(&ModelParams {
        n: cfg.n,
        big_n: cfg.big_n,
        s,
        dist: dist.clone(),
        noise_sigma: cfg.noise_sigma,
        seed,
    })?;
    if cfg.normalize {
        model.normalize()
    } else {
        Ok(model)
    }
}

/// Maps an init label to a starting transform for the given model. Labels
/// other than the six built-ins are treated as matrix file paths.
pub fn resolve_init(
    cfg: &ExperimentConfig,
    label: &str,
    model: &GenerativeModel,
    seed: u64,
) -> Result<(InitSpec, Matrix, Option<f64>)> {
    let (spec, eps_used) = match label {
        "eps" => {
            let eps = epsilon_for_support_recovery(model, cfg.eps_fraction)?;
            (InitSpec::EpsilonBall(eps), Some(eps))
        }
        "rand" => (InitSpec::RandGaussian, None),
        "id" => (InitSpec::Identity, None),
        "dct" => (InitSpec::Dct, None),
        "unif" => (InitSpec::Uniform01, None),
        "zero" => (InitSpec::Zero, None),
        path => (InitSpec::FromFile(path.into()), None),
    };
    let w0 = make_init(&spec, model, derive_seed(seed, INIT_STREAM))?;
    Ok((spec, w0, eps_used))
}

/// Generates a model, resolves the initialization, and runs the learner with
/// ground-truth diagnostics.
pub fn run_single(
    cfg: &ExperimentConfig,
    s: usize,
    seed: u64,
    init_label: &str,
) -> Result<RunOutput> {
    let model = build_model(cfg, s, &cfg.dist, seed)?;
    let report = analysis::spectral_report(&model)?;
    let (_, w0, eps_used) = resolve_init(cfg, init_label, &model, seed)?;
    let result = learn(
        model.p(),
        s,
        &w0,
        cfg.max_iter,
        cfg.obj_tol,
        Some(&model),
    )?;
    Ok(RunOutput {
        model,
        report,
        result,
        init_label: init_label.to_string(),
        eps_used,
    })
}

fn check_objective_monotone(context: &str, result: &LearnResult) -> Result<()> {
    for pair in result.trace.windows(2) {
        if pair[1].objective > pair[0].objective + 1e-12 {
            return Err(Error::AssertionFailed {
                name: "objective-monotone".into(),
                detail: format!(
                    "{context}: objective rose from {:.6e} to {:.6e} at iteration {}",
                    pair[0].objective, pair[1].objective, pair[1].t
                ),
            });
        }
    }
    Ok(())
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

/// Epsilon-ball recovery traces: one run per `(s, seed)`, radius
/// `eps-fraction * min_j beta(z_j / ||z_j||)`.
pub fn run_convergence(cfg: &ExperimentConfig) -> Result<CsvTable> {
    let mut table = CsvTable::new(&[
        "s",
        "seed",
        "iteration",
        "werr",
        "zerr",
        "objective",
        "support_recovery",
        "werr_raw",
        "zerr_raw",
    ])?;
    for line in cfg.provenance() {
        table.comment(line);
    }
    for &s in &cfg.s_list {
        for &seed in &cfg.seeds {
            let run = run_single(cfg, s, seed, "eps")?;
            table.comment(format!(
                "s={s} seed={seed}: eps={} q_orth={} q_n={} q_limit={} kappa={} stop={}",
                fmt_f64(run.eps_used.unwrap_or(f64::NAN)),
                fmt_f64(run.report.q_orth),
                fmt_f64(run.report.q_n),
                fmt_f64(run.report.q_limit),
                fmt_f64(run.report.kappa),
                run.result.stop_reason,
            ));
            check_objective_monotone(&format!("convergence s={s} seed={seed}"), &run.result)?;
            let mut prev_werr = f64::INFINITY;
            for rec in &run.result.trace {
                let werr = rec.werr.unwrap_or(f64::NAN);
                if werr > prev_werr + 1e-12 {
                    return Err(Error::AssertionFailed {
                        name: "werr-monotone".into(),
                        detail: format!(
                            "s={s} seed={seed}: transform error rose to {werr:.6e} at iteration {}",
                            rec.t
                        ),
                    });
                }
                prev_werr = werr;
                table.push_row(vec![
                    s.to_string(),
                    seed.to_string(),
                    rec.t.to_string(),
                    opt(rec.werr),
                    opt(rec.zerr),
                    fmt_f64(rec.objective),
                    opt(rec.support_recovery),
                    opt(rec.werr_raw),
                    opt(rec.zerr_raw),
                ])?;
            }
        }
    }
    Ok(table)
}

/// Objective and support-recovery traces for every configured
/// initialization label.
pub fn run_initializations(cfg: &ExperimentConfig) -> Result<CsvTable> {
    let mut table = CsvTable::new(&[
        "s",
        "seed",
        "init",
        "iteration",
        "objective",
        "support_recovery",
        "werr",
    ])?;
    for line in cfg.provenance() {
        table.comment(line);
    }
    for &s in &cfg.s_list {
        for &seed in &cfg.seeds {
            for label in &cfg.inits {
                let run = run_single(cfg, s, seed, label)?;
                table.comment(format!(
                    "s={s} seed={seed} init={label}: q_orth={} q_n={} iterations={} stop={}",
                    fmt_f64(run.report.q_orth),
                    fmt_f64(run.report.q_n),
                    run.result.iterations_run,
                    run.result.stop_reason,
                ));
                check_objective_monotone(
                    &format!("initializations s={s} seed={seed} init={label}"),
                    &run.result,
                )?;
                for rec in &run.result.trace {
                    table.push_row(vec![
                        s.to_string(),
                        seed.to_string(),
                        label.clone(),
                        rec.t.to_string(),
                        fmt_f64(rec.objective),
                        opt(rec.support_recovery),
                        opt(rec.werr),
                    ])?;
                }
            }
        }
    }
    Ok(table)
}

/// Contraction-factor sweep over training-set size, sparsity ratio, and
/// nonzero distribution, with per-seed rows and a seed-averaged row per cell.
pub fn run_qsweep(cfg: &ExperimentConfig) -> Result<CsvTable> {
    let mut table = CsvTable::new(&[
        "dist",
        "n",
        "s",
        "N",
        "seed",
        "kappa",
        "max_dk_norm",
        "q_n",
        "q_limit",
    ])?;
    for line in cfg.provenance() {
        table.comment(line);
    }
    for dist in &cfg.dists {
        for &ratio in &cfg.s_over_n {
            let s = ((ratio * cfg.n as f64).round() as usize).clamp(1, cfg.n);
            for &big_n in &cfg.n_sweep {
                let mut sums = [0.0f64; 3];
                let mut q_limit = 0.0;
                for &seed in &cfg.seeds {
                    let model = GenerativeModel::generate(&ModelParams {
                        n: cfg.n,
                        big_n,
                        s,
                        dist: dist.clone(),
                        noise_sigma: 0.0,
                        seed,
                    })?;
                    let rep = analysis::spectral_report(&model)?;
                    sums[0] += rep.kappa;
                    sums[1] += rep.max_dk_norm;
                    sums[2] += rep.q_n;
                    q_limit = rep.q_limit;
                    table.push_row(vec![
                        dist.to_string(),
                        cfg.n.to_string(),
                        s.to_string(),
                        big_n.to_string(),
                        seed.to_string(),
                        fmt_f64(rep.kappa),
                        fmt_f64(rep.max_dk_norm),
                        fmt_f64(rep.q_n),
                        fmt_f64(rep.q_limit),
                    ])?;
                }
                let k = cfg.seeds.len() as f64;
                table.push_row(vec![
                    dist.to_string(),
                    cfg.n.to_string(),
                    s.to_string(),
                    big_n.to_string(),
                    "mean".into(),
                    fmt_f64(sums[0] / k),
                    fmt_f64(sums[1] / k),
                    fmt_f64(sums[2] / k),
                    fmt_f64(q_limit),
                ])?;
            }
        }
    }
    Ok(table)
}

/// One sparse coding step from epsilon-ball starts of varying radius on a
/// normalized model; the coefficient error may never exceed twice the radius.
pub fn run_lemma_bound(cfg: &ExperimentConfig) -> Result<CsvTable> {
    let mut table = CsvTable::new(&["seed", "eps", "z1_error", "ratio"])?;
    for line in cfg.provenance() {
        table.comment(line);
    }
    table.comment("model normalized to unit data spectral norm before each trial");
    let s = cfg.s_list[0];
    for &seed in &cfg.seeds {
        let model = build_model(cfg, s, &cfg.dist, seed)?.normalize()?;
        let eps1 = epsilon_for_support_recovery(&model, 0.5)?;
        table.comment(format!("seed={seed}: eps1={}", fmt_f64(eps1)));
        for (i, &eps) in cfg.eps_list.iter().enumerate() {
            if eps == 0.0 {
                // Exact start: zero error with a 0/0 ratio guard.
                table.push_row(vec![
                    seed.to_string(),
                    fmt_f64(0.0),
                    fmt_f64(0.0),
                    fmt_f64(0.0),
                ])?;
                continue;
            }
            let w0 = make_init(
                &InitSpec::EpsilonBall(eps),
                &model,
                derive_seed(seed, INIT_STREAM + 1 + i as u64),
            )?;
            let z1 = sparse_code_step(&w0, model.p(), s)?;
            let err = (&z1 - model.zstar()).frobenius_norm();
            let ratio = err / eps;
            if ratio > 2.0 + 1e-9 {
                return Err(Error::AssertionFailed {
                    name: "sparse-code-ratio".into(),
                    detail: format!(
                        "seed={seed} eps={eps}: ||Z1 - Z*||_F / eps = {ratio} exceeds 2"
                    ),
                });
            }
            table.push_row(vec![
                seed.to_string(),
                fmt_f64(eps),
                fmt_f64(err),
                fmt_f64(ratio),
            ])?;
        }
    }
    Ok(table)
}

/// Full spectral and radius report for one model.
pub fn run_analyze_model(cfg: &ExperimentConfig, model: &GenerativeModel) -> Result<CsvTable> {
    let mut table = CsvTable::new(&[
        "n",
        "N",
        "s",
        "dist",
        "seed",
        "normalized",
        "kappa",
        "max_dk_norm",
        "q_orth",
        "q_n",
        "q_limit",
        "contraction_ok",
        "row_gram_residual",
        "eps1",
        "eps2",
        "eps0_star",
        "c_at_eps0",
        "eps",
        "kappa_capped",
        "s2_holds",
        "s2_q",
    ])?;
    for line in cfg.provenance() {
        table.comment(line);
    }
    let rep = analysis::spectral_report(model)?;
    let radius = if rep.q_orth < 1.0 && rep.kappa.is_finite() {
        Some(analysis::convergence_radius(model, rep.q_orth)?)
    } else {
        table.comment("radius skipped: contraction factor >= 1 or rank-deficient coefficients");
        None
    };
    let s2 = if model.s() == 2 {
        Some(analysis::check_s2_contraction(model.zstar())?)
    } else {
        None
    };
    table.push_row(vec![
        model.n().to_string(),
        model.big_n().to_string(),
        model.s().to_string(),
        model
            .dist()
            .map(|d| d.to_string())
            .unwrap_or_else(|| "custom".into()),
        model.seed().to_string(),
        fmt_bool(model.normalized()),
        fmt_f64(rep.kappa),
        fmt_f64(rep.max_dk_norm),
        fmt_f64(rep.q_orth),
        fmt_f64(rep.q_n),
        fmt_f64(rep.q_limit),
        fmt_bool(rep.contraction_ok),
        fmt_f64(rep.row_gram_residual),
        opt(radius.as_ref().map(|r| r.eps1)),
        opt(radius.as_ref().map(|r| r.eps2)),
        opt(radius.as_ref().map(|r| r.eps0_star)),
        opt(radius.as_ref().map(|r| r.c_at_eps0)),
        opt(radius.as_ref().map(|r| r.eps)),
        radius
            .as_ref()
            .map(|r| fmt_bool(r.kappa_capped))
            .unwrap_or_default(),
        s2.map(|(holds, _)| fmt_bool(holds)).unwrap_or_default(),
        opt(s2.map(|(_, q)| q)),
    ])?;
    Ok(table)
}

/// Generates the model from the configuration, then analyzes it.
pub fn run_analyze(cfg: &ExperimentConfig) -> Result<CsvTable> {
    let model = build_model(cfg, cfg.s_list[0], &cfg.dist, cfg.seeds[0])?;
    run_analyze_model(cfg, &model)
}
