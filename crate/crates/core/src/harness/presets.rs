//! Named experiment presets run at matched query budgets.

use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::error::{Result, ZoError};
use crate::estimators::SpsaConfig;
use crate::harness::accounting::AccountingMode;
use crate::harness::compare::{compare, summarize, CompareReport, Criterion, RunSummary};
use crate::harness::config::{Problem, ProblemSpec, RunConfig};
use crate::harness::records::{save_records, CsvRow};
use crate::objectives::SamplingMode;
use crate::optimizers::{run, Budget, FoSgdConfig, MezoConfig, MezoSvrgConfig, OptimizerConfig, RunOutcome};

pub const PRESETS: [&str; 6] = [
    "fig1a",
    "batch-robustness",
    "q-ablation",
    "anchor",
    "mu-ablation",
    "mlp",
];

/// Shared budget of the least-squares ablations.
pub const ABLATION_QUERIES: u64 = 20_000_000;

/// Approximate number of full-loss evaluations per run.
pub const EVALUATIONS: u64 = 2000;

/// `metric(runs[reference]) <= ratio · metric(runs[other])`.
#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub reference: usize,
    pub other: usize,
    pub criterion: Criterion,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Preset {
    pub name: &'static str,
    pub problem: ProblemSpec,
    pub runs: Vec<(String, RunConfig)>,
    pub checks: Vec<Check>,
}

#[derive(Clone, Debug)]
pub struct PresetOutcome {
    pub label: String,
    pub config: RunConfig,
    pub outcome: RunOutcome,
    pub summary: RunSummary,
}

#[derive(Clone, Debug)]
pub struct PresetReport {
    pub name: &'static str,
    pub runs: Vec<PresetOutcome>,
    pub checks: Vec<CompareReport>,
}

impl PresetReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(CompareReport::passed)
    }

    pub fn diverged(&self) -> bool {
        self.runs.iter().any(|r| r.outcome.diverged())
    }

    pub fn run(&self, label: &str) -> Option<&PresetOutcome> {
        self.runs.iter().find(|r| r.label == label)
    }
}

fn mezo(eta: f64, b: usize) -> OptimizerConfig {
    OptimizerConfig::Mezo(MezoConfig {
        eta,
        batch_size: b,
        spsa: SpsaConfig::default(),
    })
}

fn svrg(eta1: f64, eta2: f64, q: usize, b: usize, anchor: usize, mu: f64) -> OptimizerConfig {
    OptimizerConfig::MezoSvrg(MezoSvrgConfig {
        eta1,
        eta2,
        q,
        batch_size: b,
        anchor_batch: anchor,
        spsa: SpsaConfig { mu, p: 1 },
    })
}

fn fo(eta: f64, b: usize) -> OptimizerConfig {
    OptimizerConfig::FoSgd(FoSgdConfig { eta, batch_size: b })
}

/// Mean forward queries per step over one anchor period.
fn mean_step_queries(cfg: &OptimizerConfig) -> f64 {
    match cfg {
        OptimizerConfig::Mezo(c) => (2 * c.batch_size * c.spsa.p) as f64,
        OptimizerConfig::MezoSvrg(c) => {
            let period = (2 * c.anchor_batch + 4 * c.batch_size * (c.q - 1)) * c.spsa.p;
            period as f64 / c.q as f64
        }
        OptimizerConfig::ZoSvrg(c) => ((2 * c.anchor_batch + 4 * c.batch_size * c.q) * c.spsa.p) as f64 / c.q as f64,
        OptimizerConfig::FoSgd(c) => c.batch_size as f64,
    }
}

/// Evaluation period in steps that spreads about [`EVALUATIONS`] full-loss
/// evaluations over `queries`.
pub fn eval_period(cfg: &OptimizerConfig, queries: u64) -> u64 {
    ((queries as f64 / EVALUATIONS as f64 / mean_step_queries(cfg)).round() as u64).max(1)
}

fn config(problem: &ProblemSpec, optimizer: OptimizerConfig, seed: u64, queries: u64) -> RunConfig {
    RunConfig {
        problem: problem.clone(),
        eval_every: eval_period(&optimizer, queries),
        optimizer,
        master_seed: seed,
        budget: Budget::queries(queries),
        schedule: None,
        sampling: SamplingMode::WithoutReplacement,
        accounting_mode: AccountingMode::StoreG,
        out: None,
        traj_out: None,
        params_out: None,
        theta0_out: None,
    }
}

fn check(reference: usize, other: usize, criterion: &str) -> Check {
    Check {
        reference,
        other,
        criterion: criterion.parse().expect("preset criteria are well formed"),
    }
}

type Parts = (
    &'static str,
    ProblemSpec,
    u64,
    Vec<(&'static str, OptimizerConfig)>,
    Vec<Check>,
);

/// Builds preset `name`. `queries` overrides the preset budget.
pub fn preset(name: &str, seed: u64, queries: Option<u64>) -> Result<Preset> {
    let ls = ProblemSpec::least_squares_default();
    let n = 1000;
    let (name, problem, budget, runs, checks): Parts = match name {
        "fig1a" => (
            "fig1a",
            ls,
            2_000_000,
            vec![
                ("mezo-svrg", svrg(1e-3, 1e-4, 2, 32, n, 1e-3)),
                ("mezo", mezo(1e-3, 32)),
                ("fo-sgd", fo(1e-3, 32)),
            ],
            vec![check(0, 1, "final_gap<=0.1")],
        ),
        "batch-robustness" => (
            "batch-robustness",
            ls,
            ABLATION_QUERIES,
            vec![
                ("mezo-b8", mezo(1e-4, 8)),
                ("mezo-b128", mezo(1e-4, 128)),
                ("mezo-svrg-b8", svrg(1e-3, 1e-4, 2, 8, n, 1e-3)),
            ],
            vec![check(1, 0, "trailing_std<=0.5"), check(2, 0, "trailing_std")],
        ),
        "q-ablation" => (
            "q-ablation",
            ls,
            ABLATION_QUERIES,
            vec![
                ("q2", svrg(1e-3, 1e-4, 2, 32, n, 1e-3)),
                ("q10", svrg(1e-3, 1e-4, 10, 32, n, 1e-3)),
            ],
            vec![check(0, 1, "final_loss")],
        ),
        "anchor" => (
            "anchor",
            ls,
            ABLATION_QUERIES,
            vec![
                ("anchor-n", svrg(1e-3, 1e-4, 2, 32, n, 1e-3)),
                ("anchor-n/2", svrg(1e-3, 1e-4, 2, 32, n / 2, 1e-3)),
            ],
            vec![check(1, 0, "final_loss<=1.2"), check(0, 1, "final_loss<=1.25")],
        ),
        "mu-ablation" => (
            "mu-ablation",
            ls,
            2_000_000,
            vec![
                ("mu1e-3", svrg(1e-3, 1e-4, 2, 32, n, 1e-3)),
                ("mu1e-4", svrg(1e-3, 1e-4, 2, 32, n, 1e-4)),
                ("mu1e-5", svrg(1e-3, 1e-4, 2, 32, n, 1e-5)),
            ],
            Vec::new(),
        ),
        "mlp" => (
            "mlp",
            ProblemSpec::Mlp {
                samples: 512,
                images: None,
                labels: None,
                seed: 0,
            },
            300_000,
            vec![
                ("mezo-svrg", svrg(1e-2, 3e-3, 2, 64, 512, 1e-3)),
                ("mezo", mezo(1e-3, 64)),
                ("fo-sgd", fo(1e-3, 64)),
            ],
            vec![check(0, 1, "final_loss"), check(2, 0, "final_loss")],
        ),
        other => {
            return Err(ZoError::Config(format!(
                "unknown preset {other:?}; known: {}",
                PRESETS.join(", ")
            )))
        }
    };
    let budget = queries.unwrap_or(budget);
    Ok(Preset {
        name,
        runs: runs
            .into_iter()
            .map(|(l, o)| (l.to_string(), config(&problem, o, seed, budget)))
            .collect(),
        problem,
        checks,
    })
}

/// Runs every configuration in parallel on one shared problem instance and
/// evaluates the preset checks. With `out_dir`, each run's rows are written
/// to `<out_dir>/<preset>-<label>.csv`.
pub fn run_preset(p: &Preset, out_dir: Option<&Path>) -> Result<PresetReport> {
    let problem: Problem = p.problem.build()?;
    let obj = problem.objective();
    let runs = p
        .runs
        .par_iter()
        .map(|(label, cfg)| -> Result<PresetOutcome> {
            let mut spec = cfg.run_spec(problem.f_star);
            spec.thin_records = true;
            let outcome = run(obj, &problem.theta0, &spec)?;
            let rows: Vec<CsvRow> = outcome.records.iter().map(CsvRow::from).collect();
            let summary = if rows.is_empty() {
                RunSummary {
                    label: label.clone(),
                    steps: 0,
                    final_queries: 0,
                    final_loss: None,
                    final_gap: None,
                    trailing_std: None,
                    max_step_queries: 0,
                    curve: Vec::new(),
                }
            } else {
                summarize(label, &rows)?
            };
            Ok(PresetOutcome {
                label: label.clone(),
                config: cfg.clone(),
                outcome,
                summary,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir).map_err(|e| ZoError::io(dir, e))?;
        for r in &runs {
            save_records(&preset_csv_path(dir, p.name, &r.label), &r.outcome.records, &[])?;
        }
    }
    let checks = p
        .checks
        .iter()
        .map(|c| {
            compare(
                vec![runs[c.reference].summary.clone(), runs[c.other].summary.clone()],
                c.criterion,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PresetReport {
        name: p.name,
        runs,
        checks,
    })
}

pub fn preset_csv_path(dir: &Path, preset: &str, label: &str) -> PathBuf {
    dir.join(format!("{preset}-{}.csv", label.replace('/', "_")))
}
