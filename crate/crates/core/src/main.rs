use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use utl::cli::experiments;
use utl::cli::{CsvTable, Experiment, ExperimentConfig};
use utl::error::{Error, Result};
use utl::genmodel::{self, derive_seed, synthesize, GenerativeModel};
use utl::io::{read_matrix, write_matrix};
use utl::learner::{learn, LearnResult};
use utl::linops::Matrix;

#[derive(Parser)]
#[command(
    name = "utl",
    version,
    about = "Unitary sparsifying transform learning: model generator, alternating learner, convergence diagnostics, experiment harness"
)]
struct CliArgs {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a ground-truth model and write its matrices.
    Gen(CommonArgs),
    /// Run the alternating learner on generated or file-based data.
    Learn(LearnArgs),
    /// Report contraction factors, spectral condition, and convergence radii.
    Analyze(AnalyzeArgs),
    /// Run a canned experiment and write its CSV table.
    Experiment {
        #[arg(value_enum)]
        which: ExperimentKind,
        #[command(flatten)]
        common: CommonArgs,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ExperimentKind {
    Convergence,
    Inits,
    Qsweep,
    Lemma,
}

impl ExperimentKind {
    fn experiment(self) -> Experiment {
        match self {
            ExperimentKind::Convergence => Experiment::Convergence,
            ExperimentKind::Inits => Experiment::Initializations,
            ExperimentKind::Qsweep => Experiment::QSweep,
            ExperimentKind::Lemma => Experiment::LemmaBound,
        }
    }
}

/// Flags mirror config-file keys; flags win over the config file.
#[derive(Args, Default)]
struct CommonArgs {
    /// Flat key = value config file applied before flags.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Signal dimension.
    #[arg(long)]
    n: Option<usize>,
    /// Number of training signals.
    #[arg(long = "N")]
    big_n: Option<usize>,
    /// Column sparsity (comma list for sweeps).
    #[arg(long)]
    s: Option<String>,
    /// Nonzero distribution: gaussian | signs | annulus[:c:b] | texp[:K].
    #[arg(long)]
    dist: Option<String>,
    /// Distributions swept by the qsweep experiment (comma list).
    #[arg(long)]
    dists: Option<String>,
    /// Single seed (shorthand for --seeds with one entry).
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated seed list.
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long = "max-iter")]
    max_iter: Option<usize>,
    #[arg(long = "obj-tol")]
    obj_tol: Option<f64>,
    #[arg(long = "noise-sigma")]
    noise_sigma: Option<f64>,
    /// Rescale the model to unit data spectral norm.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    normalize: Option<bool>,
    /// Initialization label(s): eps | rand | id | dct | unif | zero | <file>.
    #[arg(long)]
    init: Option<String>,
    #[arg(long = "eps-fraction")]
    eps_fraction: Option<f64>,
    /// Radii for the sparse-coding bound experiment.
    #[arg(long = "eps-list")]
    eps_list: Option<String>,
    /// Training-set sizes for the contraction-factor sweep.
    #[arg(long = "n-list")]
    n_list: Option<String>,
    /// Sparsity ratios for the contraction-factor sweep.
    #[arg(long = "s-over-n")]
    s_over_n: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl CommonArgs {
    fn into_config(self, experiment: Experiment) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::defaults(experiment);
        if let Some(path) = &self.config {
            cfg.apply_file(path)?;
        }
        let mut apply = |key: &str, value: Option<String>| -> Result<()> {
            if let Some(v) = value {
                cfg.apply_kv(key, &v)?;
            }
            Ok(())
        };
        apply("n", self.n.map(|v| v.to_string()))?;
        apply("N", self.big_n.map(|v| v.to_string()))?;
        apply("s", self.s)?;
        apply("dist", self.dist)?;
        apply("dists", self.dists)?;
        apply("seed", self.seed.map(|v| v.to_string()))?;
        apply("seeds", self.seeds)?;
        apply("max-iter", self.max_iter.map(|v| v.to_string()))?;
        apply("obj-tol", self.obj_tol.map(|v| v.to_string()))?;
        apply("noise-sigma", self.noise_sigma.map(|v| v.to_string()))?;
        apply("normalize", self.normalize.map(|v| v.to_string()))?;
        apply("init", self.init)?;
        apply("eps-fraction", self.eps_fraction.map(|v| v.to_string()))?;
        apply("eps-list", self.eps_list)?;
        apply("n-list", self.n_list)?;
        apply("s-over-n", self.s_over_n)?;
        apply("out", self.out.map(|v| v.display().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct LearnArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Learn from a data matrix file instead of a generated model
    /// (no ground-truth diagnostics; 'eps' init unavailable).
    #[arg(long)]
    data: Option<PathBuf>,
    /// Ground-truth transform file (used together with --zstar).
    #[arg(long)]
    wstar: Option<PathBuf>,
    /// Ground-truth coefficients file (used together with --wstar).
    #[arg(long)]
    zstar: Option<PathBuf>,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Ground-truth transform file (used together with --zstar).
    #[arg(long)]
    wstar: Option<PathBuf>,
    /// Ground-truth coefficients file (used together with --wstar).
    #[arg(long)]
    zstar: Option<PathBuf>,
}

fn main() -> ExitCode {
    match run(CliArgs::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: CliArgs) -> Result<()> {
    match cli.cmd {
        Cmd::Gen(common) => cmd_gen(common),
        Cmd::Learn(args) => cmd_learn(args),
        Cmd::Analyze(args) => cmd_analyze(args),
        Cmd::Experiment { which, common } => cmd_experiment(which, common),
    }
}

fn cmd_gen(common: CommonArgs) -> Result<()> {
    let cfg = common.into_config(Experiment::Analyze)?;
    let model = experiments::build_model(&cfg, cfg.s_list[0], &cfg.dist, cfg.seeds[0])?;
    let dir = &cfg.out_dir;
    std::fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.clone(),
        source,
    })?;
    write_matrix(&dir.join("wstar.utlm"), model.wstar())?;
    write_matrix(&dir.join("zstar.utlm"), model.zstar())?;
    write_matrix(&dir.join("p.utlm"), model.p())?;
    if let Some(h) = model.noise_h() {
        write_matrix(&dir.join("noise.utlm"), h)?;
    }
    let mut meta = CsvTable::new(&["n", "N", "s", "dist", "seed", "noise_sigma", "normalized"])?;
    for line in cfg.provenance() {
        meta.comment(line);
    }
    meta.push_row(vec![
        model.n().to_string(),
        model.big_n().to_string(),
        model.s().to_string(),
        model
            .dist()
            .map(|d| d.to_string())
            .unwrap_or_else(|| "custom".into()),
        model.seed().to_string(),
        cfg.noise_sigma.to_string(),
        model.normalized().to_string(),
    ])?;
    meta.write_to_file(&dir.join("model.csv"))?;
    println!(
        "wrote wstar.utlm, zstar.utlm, p.utlm{} and model.csv to {}",
        if model.noise_h().is_some() {
            ", noise.utlm"
        } else {
            ""
        },
        dir.display()
    );
    Ok(())
}

/// Initializations that need no ground-truth model (file-based data runs).
fn init_without_model(label: &str, n: usize, seed: u64) -> Result<Matrix> {
    match label {
        "eps" => Err(Error::InvalidParameter(
            "the 'eps' initialization needs a ground-truth model; provide --wstar/--zstar or generate the data".into(),
        )),
        "rand" => {
            use rand::SeedableRng;
            use rand_distr::Distribution;
            let normal = rand_distr::Normal::new(0.0, 1.0).expect("unit normal");
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            Matrix::from_fn(n, n, |_, _| normal.sample(&mut rng))
        }
        "id" => Ok(Matrix::identity(n)),
        "dct" => genmodel::dct_matrix(n),
        "unif" => {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            Matrix::from_fn(n, n, |_, _| rng.random::<f64>())
        }
        "zero" => Ok(Matrix::zeros(n, n)),
        path => {
            let m = read_matrix(std::path::Path::new(path))?;
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

fn trace_table(cfg: &ExperimentConfig, result: &LearnResult) -> Result<CsvTable> {
    let mut table = CsvTable::new(&[
        "iteration",
        "objective",
        "werr",
        "zerr",
        "support_recovery",
        "werr_raw",
        "zerr_raw",
    ])?;
    for line in cfg.provenance() {
        table.comment(line);
    }
    table.comment(format!(
        "iterations={} stop={}",
        result.iterations_run, result.stop_reason
    ));
    let opt = |v: Option<f64>| v.map(utl::cli::fmt_f64).unwrap_or_default();
    for rec in &result.trace {
        table.push_row(vec![
            rec.t.to_string(),
            utl::cli::fmt_f64(rec.objective),
            opt(rec.werr),
            opt(rec.zerr),
            opt(rec.support_recovery),
            opt(rec.werr_raw),
            opt(rec.zerr_raw),
        ])?;
    }
    Ok(table)
}

fn model_from_files(wstar: &PathBuf, zstar: &PathBuf, normalize: bool) -> Result<GenerativeModel> {
    let w = read_matrix(wstar)?;
    let z = read_matrix(zstar)?;
    let model = synthesize(&w, &z, 0.0, 0)?;
    if normalize {
        model.normalize()
    } else {
        Ok(model)
    }
}

fn cmd_learn(args: LearnArgs) -> Result<()> {
    let cfg = args.common.into_config(Experiment::Convergence)?;
    let label = cfg
        .inits
        .first()
        .cloned()
        .unwrap_or_else(|| "eps".to_string());
    let s = cfg.s_list[0];
    let seed = cfg.seeds[0];

    let (result, dir) = if let Some(data) = &args.data {
        let p = read_matrix(data)?;
        if s > p.rows() {
            return Err(Error::InvalidParameter(format!(
                "s={s} exceeds the data dimension {}",
                p.rows()
            )));
        }
        let w0 = init_without_model(&label, p.rows(), derive_seed(seed, 0x1717))?;
        let result = learn(&p, s, &w0, cfg.max_iter, cfg.obj_tol, None)?;
        (result, cfg.out_dir.clone())
    } else if let (Some(wf), Some(zf)) = (&args.wstar, &args.zstar) {
        let model = model_from_files(wf, zf, cfg.normalize)?;
        let (_, w0, _) = experiments::resolve_init(&cfg, &label, &model, seed)?;
        let result = learn(
            model.p(),
            model.s(),
            &w0,
            cfg.max_iter,
            cfg.obj_tol,
            Some(&model),
        )?;
        (result, cfg.out_dir.clone())
    } else {
        let run = experiments::run_single(&cfg, s, seed, &label)?;
        (run.result, cfg.out_dir.clone())
    };

    std::fs::create_dir_all(&dir).map_err(|source| Error::Io {
        path: dir.clone(),
        source,
    })?;
    write_matrix(&dir.join("w.utlm"), &result.w_final)?;
    write_matrix(&dir.join("z.utlm"), &result.z_final)?;
    trace_table(&cfg, &result)?.write_to_file(&dir.join("trace.csv"))?;
    println!(
        "learned in {} iterations (stop: {}); wrote w.utlm, z.utlm, trace.csv to {}",
        result.iterations_run,
        result.stop_reason,
        dir.display()
    );
    Ok(())
}

fn cmd_analyze(args: AnalyzeArgs) -> Result<()> {
    let cfg = args.common.into_config(Experiment::Analyze)?;
    let table = if let (Some(wf), Some(zf)) = (&args.wstar, &args.zstar) {
        let model = model_from_files(wf, zf, cfg.normalize)?;
        experiments::run_analyze_model(&cfg, &model)?
    } else {
        experiments::run_analyze(&cfg)?
    };
    let path = cfg.out_dir.join("analyze.csv");
    table.write_to_file(&path)?;
    print!("{}", table.render());
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_experiment(which: ExperimentKind, common: CommonArgs) -> Result<()> {
    let experiment = which.experiment();
    let cfg = common.into_config(experiment)?;
    let table = match experiment {
        Experiment::Convergence => experiments::run_convergence(&cfg)?,
        Experiment::Initializations => experiments::run_initializations(&cfg)?,
        Experiment::QSweep => experiments::run_qsweep(&cfg)?,
        Experiment::LemmaBound => experiments::run_lemma_bound(&cfg)?,
        Experiment::Analyze => experiments::run_analyze(&cfg)?,
    };
    let path = cfg.out_dir.join(format!("{}.csv", experiment.name()));
    table.write_to_file(&path)?;
    println!("wrote {} ({} rows)", path.display(), table.rows().len());
    Ok(())
}
