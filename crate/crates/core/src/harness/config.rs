//! Flat `key = value` run configuration.
//!
//! A file is read first and command-line values override it key by key.
//! Lines starting with `#` are comments. Every key has a default, so an
//! empty configuration is a valid MeZO-SVRG run on the default LS problem.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::error::{Result, ZoError};
use crate::estimators::SpsaConfig;
use crate::harness::accounting::AccountingMode;
use crate::objectives::{
    load_idx, make_least_squares, make_logistic, make_mlp2, synthetic_digits, LeastSquaresProblem, LogisticProblem,
    Mlp2Problem, Objective, SamplingMode,
};
use crate::optimizers::{Budget, LrSchedule, OptimizerConfig, OptimizerKind, RunSpec};
use crate::params::ParamVector;

pub const KEYS: &[&str] = &[
    "problem",
    "n",
    "d",
    "noise_std",
    "separation",
    "problem_seed",
    "samples",
    "mnist_images",
    "mnist_labels",
    "optimizer",
    "lr1",
    "lr2",
    "q",
    "batch_size",
    "anchor_batch",
    "mu",
    "p",
    "seed",
    "steps",
    "query_budget",
    "kappa",
    "alpha",
    "window",
    "sampling",
    "eval_every",
    "accounting_mode",
    "out",
    "traj_out",
    "params_out",
    "theta0_out",
];

/// Problem family and its parameters.
#[derive(Clone, Debug, PartialEq)]
pub enum ProblemSpec {
    LeastSquares {
        n: usize,
        d: usize,
        noise_std: f64,
        seed: u64,
    },
    Logistic {
        n: usize,
        d: usize,
        separation: f64,
        seed: u64,
    },
    /// Two-layer MLP on IDX files when both paths are given, otherwise on
    /// the synthetic 28×28 ten-class stand-in.
    Mlp {
        samples: usize,
        images: Option<PathBuf>,
        labels: Option<PathBuf>,
        seed: u64,
    },
}

impl ProblemSpec {
    pub fn least_squares_default() -> Self {
        Self::LeastSquares {
            n: 1000,
            d: 100,
            noise_std: 0.01,
            seed: 0,
        }
    }

    pub fn id(&self) -> &'static str {
        match self {
            Self::LeastSquares { .. } => "ls",
            Self::Logistic { .. } => "logistic",
            Self::Mlp { .. } => "mlp",
        }
    }

    pub fn build(&self) -> Result<Problem> {
        Ok(match self {
            Self::LeastSquares { n, d, noise_std, seed } => {
                let p = make_least_squares(*n, *d, *noise_std, *seed)?;
                Problem {
                    theta0: ParamVector::zeros(*d),
                    f_star: Some(p.f_star),
                    kind: ProblemKind::LeastSquares(p),
                }
            }
            Self::Logistic { n, d, separation, seed } => Problem {
                theta0: ParamVector::zeros(*d),
                f_star: None,
                kind: ProblemKind::Logistic(make_logistic(*n, *d, *separation, *seed)?),
            },
            Self::Mlp {
                samples,
                images,
                labels,
                seed,
            } => {
                let data = match (images, labels) {
                    (Some(i), Some(l)) => load_idx(i, l, Some(*samples))?,
                    (None, None) => synthetic_digits(*samples, 28, 10, *seed)?,
                    _ => return Err(ZoError::Config("mnist_images and mnist_labels go together".into())),
                };
                let (p, theta0) = make_mlp2(data, *seed)?;
                Problem {
                    theta0,
                    f_star: None,
                    kind: ProblemKind::Mlp(p),
                }
            }
        })
    }

    fn push_pairs(&self, m: &mut Vec<(String, String)>) {
        let mut push = |k: &str, v: String| m.push((k.into(), v));
        push("problem", self.id().into());
        match self {
            Self::LeastSquares { n, d, noise_std, seed } => {
                push("n", n.to_string());
                push("d", d.to_string());
                push("noise_std", format!("{noise_std:?}"));
                push("problem_seed", seed.to_string());
            }
            Self::Logistic { n, d, separation, seed } => {
                push("n", n.to_string());
                push("d", d.to_string());
                push("separation", format!("{separation:?}"));
                push("problem_seed", seed.to_string());
            }
            Self::Mlp {
                samples,
                images,
                labels,
                seed,
            } => {
                push("samples", samples.to_string());
                if let (Some(i), Some(l)) = (images, labels) {
                    push("mnist_images", i.display().to_string());
                    push("mnist_labels", l.display().to_string());
                }
                push("problem_seed", seed.to_string());
            }
        }
    }
}

#[derive(Clone, Debug)]
pub enum ProblemKind {
    LeastSquares(LeastSquaresProblem),
    Logistic(LogisticProblem),
    Mlp(Mlp2Problem),
}

/// A constructed objective with its starting point.
#[derive(Clone, Debug)]
pub struct Problem {
    pub kind: ProblemKind,
    pub theta0: ParamVector,
    pub f_star: Option<f64>,
}

impl Problem {
    pub fn objective(&self) -> &dyn Objective {
        match &self.kind {
            ProblemKind::LeastSquares(p) => p,
            ProblemKind::Logistic(p) => p,
            ProblemKind::Mlp(p) => p,
        }
    }
}

/// Everything needed to reproduce one run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub problem: ProblemSpec,
    pub optimizer: OptimizerConfig,
    pub master_seed: u64,
    pub budget: Budget,
    pub schedule: Option<LrSchedule>,
    pub sampling: SamplingMode,
    pub eval_every: u64,
    pub accounting_mode: AccountingMode,
    pub out: Option<PathBuf>,
    pub traj_out: Option<PathBuf>,
    pub params_out: Option<PathBuf>,
    pub theta0_out: Option<PathBuf>,
}

/// Parses `key = value` lines.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| ZoError::Config(format!("line {}: expected key = value", no + 1)))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

pub fn read_pairs(path: &Path) -> Result<Vec<(String, String)>> {
    let text = std::fs::read_to_string(path).map_err(|e| ZoError::io(path, e))?;
    parse_pairs(&text)
}

/// Later pairs override earlier ones; unknown keys are rejected.
pub fn merge_pairs<I: IntoIterator<Item = (String, String)>>(layers: I) -> Result<BTreeMap<String, String>> {
    let mut m = BTreeMap::new();
    for (k, v) in layers {
        if !KEYS.contains(&k.as_str()) {
            return Err(ZoError::Config(format!("unknown key {k:?}")));
        }
        m.insert(k, v);
    }
    Ok(m)
}

fn parse<T: std::str::FromStr>(m: &BTreeMap<String, String>, key: &str, default: T) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    match m.get(key) {
        Some(v) => v.parse().map_err(|e| ZoError::Config(format!("{key} = {v:?}: {e}"))),
        None => Ok(default),
    }
}

fn path(m: &BTreeMap<String, String>, key: &str) -> Option<PathBuf> {
    m.get(key).map(PathBuf::from)
}

impl RunConfig {
    pub fn from_map(m: &BTreeMap<String, String>) -> Result<Self> {
        let problem_seed = parse(m, "problem_seed", 0u64)?;
        let problem = match m.get("problem").map_or("ls", String::as_str) {
            "ls" => ProblemSpec::LeastSquares {
                n: parse(m, "n", 1000)?,
                d: parse(m, "d", 100)?,
                noise_std: parse(m, "noise_std", 0.01)?,
                seed: problem_seed,
            },
            "logistic" => ProblemSpec::Logistic {
                n: parse(m, "n", 1000)?,
                d: parse(m, "d", 20)?,
                separation: parse(m, "separation", 2.0)?,
                seed: problem_seed,
            },
            "mlp" => ProblemSpec::Mlp {
                samples: parse(m, "samples", 512)?,
                images: path(m, "mnist_images"),
                labels: path(m, "mnist_labels"),
                seed: problem_seed,
            },
            other => return Err(ZoError::Config(format!("unknown problem {other:?}"))),
        };
        let n = match &problem {
            ProblemSpec::LeastSquares { n, .. } | ProblemSpec::Logistic { n, .. } => *n,
            ProblemSpec::Mlp { samples, .. } => *samples,
        };

        let kind: OptimizerKind = parse(m, "optimizer", OptimizerKind::MezoSvrg)?;
        let batch_size: usize = parse(m, "batch_size", 32)?;
        let defaults = [
            ("optimizer", kind.as_str().to_string()),
            ("lr1", "0.001".into()),
            ("lr2", "0.0001".into()),
            ("q", "2".into()),
            ("batch_size", batch_size.to_string()),
            ("anchor_batch", n.to_string()),
            ("mu", "0.001".into()),
            ("p", "1".into()),
        ];
        let opt_pairs: Vec<(String, String)> = defaults
            .into_iter()
            .map(|(k, d)| (k.to_string(), m.get(k).cloned().unwrap_or(d)))
            .collect();
        let optimizer = OptimizerConfig::from_pairs(&opt_pairs)?;
        optimizer.validate(n)?;

        let budget = Budget {
            max_steps: m.get("steps").map(|_| parse(m, "steps", 0u64)).transpose()?,
            max_queries: m
                .get("query_budget")
                .map(|v| parse_count(v).map_err(|e| ZoError::Config(format!("query_budget: {e}"))))
                .transpose()?,
        };
        let budget = if budget == Budget::default() {
            Budget::steps(1000)
        } else {
            budget
        };
        budget.validate()?;

        let schedule = if m.contains_key("kappa") || m.contains_key("alpha") || m.contains_key("window") {
            let window = parse(m, "window", n.div_ceil(optimizer.batch_size()))?;
            Some(LrSchedule::new(
                parse(m, "kappa", 1.05)?,
                parse(m, "alpha", 5.0)?,
                window,
            )?)
        } else {
            None
        };
        let sampling = match m.get("sampling").map_or("without", String::as_str) {
            "without" => SamplingMode::WithoutReplacement,
            "with" => SamplingMode::WithReplacement,
            other => {
                return Err(ZoError::Config(format!(
                    "sampling must be with or without, got {other:?}"
                )))
            }
        };

        Ok(Self {
            problem,
            optimizer,
            master_seed: parse(m, "seed", 0)?,
            budget,
            schedule,
            sampling,
            eval_every: parse(m, "eval_every", 1)?,
            accounting_mode: parse(m, "accounting_mode", AccountingMode::StoreG)?,
            out: path(m, "out"),
            traj_out: path(m, "traj_out"),
            params_out: path(m, "params_out"),
            theta0_out: path(m, "theta0_out"),
        })
    }

    pub fn from_pairs<I: IntoIterator<Item = (String, String)>>(pairs: I) -> Result<Self> {
        Self::from_map(&merge_pairs(pairs)?)
    }

    /// Complete key/value form; `from_pairs(to_pairs())` is the identity.
    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let mut v = Vec::new();
        self.problem.push_pairs(&mut v);
        v.extend(self.optimizer.to_pairs());
        let mut push = |k: &str, val: String| v.push((k.into(), val));
        push("seed", self.master_seed.to_string());
        if let Some(s) = self.budget.max_steps {
            push("steps", s.to_string());
        }
        if let Some(q) = self.budget.max_queries {
            push("query_budget", q.to_string());
        }
        if let Some(s) = self.schedule {
            push("kappa", format!("{:?}", s.kappa));
            push("alpha", format!("{:?}", s.alpha));
            push("window", s.window.to_string());
        }
        let sampling = match self.sampling {
            SamplingMode::WithoutReplacement => "without",
            SamplingMode::WithReplacement => "with",
        };
        push("sampling", sampling.into());
        push("eval_every", self.eval_every.to_string());
        push("accounting_mode", self.accounting_mode.to_string());
        for (k, p) in [
            ("out", &self.out),
            ("traj_out", &self.traj_out),
            ("params_out", &self.params_out),
            ("theta0_out", &self.theta0_out),
        ] {
            if let Some(p) = p {
                push(k, p.display().to_string());
            }
        }
        v
    }

    pub fn to_text(&self) -> String {
        self.to_pairs().iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn run_spec(&self, f_star: Option<f64>) -> RunSpec {
        RunSpec {
            schedule: self.schedule,
            sampling: self.sampling,
            eval_every: self.eval_every,
            f_star,
            record_trajectory: self.traj_out.is_some(),
            accounting_mode: self.accounting_mode,
            ..RunSpec::new(self.optimizer.clone(), self.master_seed, self.budget)
        }
    }

    pub fn spsa(&self) -> Option<SpsaConfig> {
        self.optimizer.spsa()
    }
}

/// Parses integer counts, accepting scientific notation such as `2e6`.
pub fn parse_count(s: &str) -> std::result::Result<u64, String> {
    if let Ok(v) = s.parse::<u64>() {
        return Ok(v);
    }
    let f: f64 = s.parse().map_err(|_| format!("not a count: {s:?}"))?;
    if f >= 0.0 && f.fract() == 0.0 && f <= u64::MAX as f64 {
        Ok(f as u64)
    } else {
        Err(format!("not a whole non-negative count: {s:?}"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pairs(s: &[(&str, &str)]) -> Vec<(String, String)> {
        s.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn empty_config_is_the_default_svrg_run() {
        let c = RunConfig::from_pairs(Vec::new()).unwrap();
        assert_eq!(c.problem, ProblemSpec::least_squares_default());
        let OptimizerConfig::MezoSvrg(o) = c.optimizer else {
            panic!("default optimizer")
        };
        assert_eq!(
            (o.eta1, o.eta2, o.q, o.batch_size, o.anchor_batch),
            (1e-3, 1e-4, 2, 32, 1000)
        );
        assert_eq!(c.budget, Budget::steps(1000));
    }

    #[test]
    fn text_round_trips() {
        let c = RunConfig::from_pairs(pairs(&[
            ("problem", "logistic"),
            ("n", "64"),
            ("d", "5"),
            ("optimizer", "mezo"),
            ("lr1", "0.01"),
            ("batch_size", "8"),
            ("query_budget", "2e4"),
            ("kappa", "1.1"),
            ("seed", "9"),
            ("out", "r.csv"),
        ]))
        .unwrap();
        let back = RunConfig::from_pairs(parse_pairs(&c.to_text()).unwrap()).unwrap();
        assert_eq!(back, c);
        assert_eq!(c.budget.max_queries, Some(20_000));
        assert_eq!(c.schedule.unwrap().window, 8);
    }

    #[test]
    fn later_layers_override() {
        let file = parse_pairs("# comment\noptimizer = mezo\nlr1 = 0.5\n\nsteps=3\n").unwrap();
        let flags = pairs(&[("lr1", "0.25")]);
        let c = RunConfig::from_pairs(file.into_iter().chain(flags)).unwrap();
        assert_eq!(c.optimizer.learning_rates().0, 0.25);
        assert_eq!(c.budget, Budget::steps(3));
    }

    #[test]
    fn bad_input_is_reported() {
        assert!(parse_pairs("lr1 0.5").is_err());
        assert!(RunConfig::from_pairs(pairs(&[("colour", "red")])).is_err());
        assert!(RunConfig::from_pairs(pairs(&[("problem", "rosenbrock")])).is_err());
        assert!(RunConfig::from_pairs(pairs(&[("lr1", "fast")])).is_err());
        assert!(RunConfig::from_pairs(pairs(&[("batch_size", "5000")])).is_err());
        assert!(RunConfig::from_pairs(pairs(&[("accounting_mode", "lazy")])).is_err());
        assert!(RunConfig::from_pairs(pairs(&[("steps", "0")])).is_err());
    }

    #[test]
    fn counts_accept_scientific_notation() {
        assert_eq!(parse_count("2000000"), Ok(2_000_000));
        assert_eq!(parse_count("2e6"), Ok(2_000_000));
        assert!(parse_count("1.5").is_err());
        assert!(parse_count("-1").is_err());
    }

    #[test]
    fn problems_build() {
        let p = ProblemSpec::Logistic {
            n: 20,
            d: 3,
            separation: 1.0,
            seed: 0,
        }
        .build()
        .unwrap();
        assert_eq!(p.objective().dim(), 3);
        assert!(p.f_star.is_none());
        let ls = ProblemSpec::LeastSquares {
            n: 30,
            d: 4,
            noise_std: 0.1,
            seed: 1,
        }
        .build()
        .unwrap();
        assert!(ls.f_star.unwrap() > 0.0);
    }
}
