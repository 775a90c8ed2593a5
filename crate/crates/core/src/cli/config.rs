//! Run configuration: defaults, flat key-value config files, and flag
//! overrides. Precedence is defaults, then config file, then command-line
//! flags.

use std::path::{Path, PathBuf};

use crate::constants::{DEFAULT_EPS_FRACTION, DEFAULT_MAX_ITER, DEFAULT_OBJ_TOL};
use crate::error::{Error, Result};
use crate::genmodel::NonzeroDistribution;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    Convergence,
    Initializations,
    QSweep,
    LemmaBound,
    Analyze,
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Convergence => "convergence",
            Experiment::Initializations => "initializations",
            Experiment::QSweep => "qsweep",
            Experiment::LemmaBound => "lemma-bound",
            Experiment::Analyze => "analyze",
        }
    }
}

pub const ALL_INIT_LABELS: [&str; 6] = ["eps", "rand", "id", "dct", "unif", "zero"];

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub n: usize,
    pub big_n: usize,
    pub s_list: Vec<usize>,
    pub dist: NonzeroDistribution,
    /// Distributions swept by the contraction-factor experiment.
    pub dists: Vec<NonzeroDistribution>,
    pub inits: Vec<String>,
    pub max_iter: usize,
    pub obj_tol: f64,
    pub seeds: Vec<u64>,
    pub noise_sigma: f64,
    pub normalize: bool,
    pub eps_fraction: f64,
    /// Initialization radii for the sparse-coding bound experiment.
    pub eps_list: Vec<f64>,
    /// Training-set sizes swept by the contraction-factor experiment.
    pub n_sweep: Vec<usize>,
    pub s_over_n: Vec<f64>,
    pub out_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn defaults(experiment: Experiment) -> Self {
        ExperimentConfig {
            experiment,
            n: 50,
            big_n: 10_000,
            s_list: vec![5],
            dist: NonzeroDistribution::Gaussian,
            dists: vec![
                NonzeroDistribution::Gaussian,
                NonzeroDistribution::ScaledSigns,
            ],
            inits: ALL_INIT_LABELS.iter().map(|s| s.to_string()).collect(),
            max_iter: DEFAULT_MAX_ITER,
            obj_tol: DEFAULT_OBJ_TOL,
            seeds: vec![0],
            noise_sigma: 0.0,
            normalize: false,
            eps_fraction: DEFAULT_EPS_FRACTION,
            eps_list: vec![1e-3, 0.1, 0.5, 1.0, 5.0],
            n_sweep: vec![2_000, 5_000, 10_000, 20_000, 50_000, 100_000],
            s_over_n: vec![0.06, 0.1, 0.2],
            out_dir: PathBuf::from("."),
        }
    }

    /// Applies one `key = value` override. Keys match the long command-line
    /// flag names; `-` and `_` are interchangeable.
    pub fn apply_kv(&mut self, key: &str, value: &str) -> Result<()> {
        let norm = key.trim().replace('_', "-");
        let value = value.trim();
        match norm.as_str() {
            "n" => self.n = parse_one(value, "n")?,
            "N" | "big-n" => self.big_n = parse_one(value, "N")?,
            "s" => self.s_list = parse_list(value, "s")?,
            "dist" => self.dist = value.parse()?,
            "dists" => {
                self.dists = split_list(value)
                    .map(|item| item.parse())
                    .collect::<Result<Vec<_>>>()?;
            }
            "init" | "inits" => {
                self.inits = split_list(value).map(|s| s.to_string()).collect();
            }
            "max-iter" => self.max_iter = parse_one(value, "max-iter")?,
            "obj-tol" => self.obj_tol = parse_one(value, "obj-tol")?,
            "seed" => self.seeds = vec![parse_one(value, "seed")?],
            "seeds" => self.seeds = parse_list(value, "seeds")?,
            "noise-sigma" => self.noise_sigma = parse_one(value, "noise-sigma")?,
            "normalize" => self.normalize = parse_bool(value)?,
            "eps-fraction" => self.eps_fraction = parse_one(value, "eps-fraction")?,
            "eps-list" => self.eps_list = parse_list(value, "eps-list")?,
            "n-list" => self.n_sweep = parse_list(value, "n-list")?,
            "s-over-n" => self.s_over_n = parse_list(value, "s-over-n")?,
            "out" => self.out_dir = PathBuf::from(value),
            other => {
                return Err(Error::Config(format!("unknown config key '{other}'")));
            }
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        for (key, value) in parse_kv_file(path)? {
            self.apply_kv(&key, &value)?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.big_n == 0 {
            return Err(Error::Config("n and N must be positive".into()));
        }
        if self.s_list.is_empty() {
            return Err(Error::Config("at least one sparsity level required".into()));
        }
        for &s in &self.s_list {
            if s == 0 || s > self.n {
                return Err(Error::Config(format!(
                    "sparsity {s} out of range 1..={}",
                    self.n
                )));
            }
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed required".into()));
        }
        if self.max_iter == 0 {
            return Err(Error::Config("max-iter must be >= 1".into()));
        }
        if !(self.obj_tol >= 0.0 && self.obj_tol.is_finite()) {
            return Err(Error::Config("obj-tol must be finite and >= 0".into()));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::Config("noise-sigma must be finite and >= 0".into()));
        }
        if !(self.eps_fraction > 0.0 && self.eps_fraction <= 0.5) {
            return Err(Error::Config("eps-fraction must be in (0, 0.5]".into()));
        }
        if self.experiment == Experiment::Initializations && self.inits.is_empty() {
            return Err(Error::Config("at least one initialization required".into()));
        }
        if self.experiment == Experiment::QSweep
            && (self.n_sweep.is_empty() || self.s_over_n.is_empty() || self.dists.is_empty())
        {
            return Err(Error::Config(
                "qsweep needs non-empty n-list, s-over-n, and dists".into(),
            ));
        }
        Ok(())
    }

    /// Provenance lines echoed into every CSV: enough to rerun it.
    pub fn provenance(&self) -> Vec<String> {
        let mut lines = vec![
            format!("generator=utl {}", env!("CARGO_PKG_VERSION")),
            format!("experiment={}", self.experiment.name()),
            format!("n={}", self.n),
            format!("N={}", self.big_n),
            format!("s={}", join(&self.s_list)),
            format!("dist={}", self.dist),
            format!("seeds={}", join(&self.seeds)),
            format!("max-iter={}", self.max_iter),
            format!("obj-tol={}", self.obj_tol),
            format!("noise-sigma={}", self.noise_sigma),
            format!("normalize={}", self.normalize),
            format!("eps-fraction={}", self.eps_fraction),
        ];
        match self.experiment {
            Experiment::Initializations => lines.push(format!("inits={}", self.inits.join(","))),
            Experiment::QSweep => {
                lines.push(format!(
                    "dists={}",
                    self.dists
                        .iter()
                        .map(|d| d.to_string())
                        .collect::<Vec<_>>()
                        .join(",")
                ));
                lines.push(format!("n-list={}", join(&self.n_sweep)));
                lines.push(format!("s-over-n={}", join(&self.s_over_n)));
            }
            Experiment::LemmaBound => lines.push(format!("eps-list={}", join(&self.eps_list))),
            _ => {}
        }
        lines
    }
}

fn join<T: std::fmt::Display>(items: &[T]) -> String {
    items
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

fn split_list(value: &str) -> impl Iterator<Item = &str> {
    value.split(',').map(str::trim).filter(|s| !s.is_empty())
}

fn parse_one<T: std::str::FromStr>(value: &str, key: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("cannot parse '{value}' for key '{key}'")))
}

fn parse_list<T: std::str::FromStr>(value: &str, key: &str) -> Result<Vec<T>> {
    let items: Vec<T> = split_list(value)
        .map(|item| parse_one(item, key))
        .collect::<Result<Vec<_>>>()?;
    if items.is_empty() {
        return Err(Error::Config(format!("empty list for key '{key}'")));
    }
    Ok(items)
}

fn parse_bool(value: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        other => Err(Error::Config(format!("cannot parse boolean '{other}'"))),
    }
}

/// Flat `key = value` file; `#` starts a comment, blank lines are skipped.
pub fn parse_kv_file(path: &Path) -> Result<Vec<(String, String)>> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut pairs = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(i) => &raw[..i],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::Config(format!(
                "{}:{}: expected 'key = value', got '{line}'",
                path.display(),
                lineno + 1
            ))
        })?;
        pairs.push((key.trim().to_string(), value.trim().to_string()));
    }
    Ok(pairs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kv_overrides() {
        let mut cfg = ExperimentConfig::defaults(Experiment::Convergence);
        cfg.apply_kv("s", "5, 10").unwrap();
        cfg.apply_kv("N", "2000").unwrap();
        cfg.apply_kv("dist", "signs").unwrap();
        cfg.apply_kv("seeds", "1,2,3").unwrap();
        cfg.apply_kv("normalize", "true").unwrap();
        assert_eq!(cfg.s_list, vec![5, 10]);
        assert_eq!(cfg.big_n, 2000);
        assert_eq!(cfg.dist, NonzeroDistribution::ScaledSigns);
        assert_eq!(cfg.seeds, vec![1, 2, 3]);
        assert!(cfg.normalize);
        assert!(cfg.apply_kv("bogus", "1").is_err());
        cfg.validate().unwrap();
    }

    #[test]
    fn validation_catches_bad_sparsity() {
        let mut cfg = ExperimentConfig::defaults(Experiment::Convergence);
        cfg.apply_kv("s", "60").unwrap();
        assert!(cfg.validate().is_err());
        cfg.apply_kv("s", "5").unwrap();
        cfg.apply_kv("eps-fraction", "0.7").unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn config_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        std::fs::write(
            &path,
            "# comment\nn = 20\nN = 500\ns = 3\nseeds = 7,8\nobj_tol = 1e-20\n",
        )
        .unwrap();
        let mut cfg = ExperimentConfig::defaults(Experiment::Convergence);
        cfg.apply_file(&path).unwrap();
        assert_eq!(cfg.n, 20);
        assert_eq!(cfg.big_n, 500);
        assert_eq!(cfg.s_list, vec![3]);
        assert_eq!(cfg.seeds, vec![7, 8]);
        assert_eq!(cfg.obj_tol, 1e-20);

        std::fs::write(&path, "n 20\n").unwrap();
        assert!(cfg.apply_file(&path).is_err());
    }
}
