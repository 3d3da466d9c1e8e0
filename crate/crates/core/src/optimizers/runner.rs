use std::time::Instant;

use super::fo_sgd::fo_sgd_step_with;
use super::{
    lr_schedule_update, mezo_step, mezo_svrg_step, zo_svrg_refresh, zo_svrg_step, DenseAnchor, LrSchedule,
    LrScheduleState, OptimizerConfig, OptimizerKind, StepKind, StepReport, SvrgAnchor,
};
use crate::error::{Result, ZoError};
use crate::harness::accounting::{account_memory, AccountingMode};
use crate::objectives::{Minibatch, Objective, SamplingMode};
use crate::params::ParamVector;
use crate::rng::{chacha, derive_sample_seed, derive_seed, PerturbationSeed, SeedDomain};
use crate::trajectory::TrajectoryLog;

/// A run stops when the observed loss exceeds this multiple of the initial
/// loss.
pub const DIVERGENCE_FACTOR: f64 = 1e6;

/// Step and query limits; a step is taken only if it fits entirely.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Budget {
    pub max_steps: Option<u64>,
    pub max_queries: Option<u64>,
}

impl Budget {
    pub fn steps(max_steps: u64) -> Self {
        Self {
            max_steps: Some(max_steps),
            max_queries: None,
        }
    }

    pub fn queries(max_queries: u64) -> Self {
        Self {
            max_steps: None,
            max_queries: Some(max_queries),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match (self.max_steps, self.max_queries) {
            (None, None) => Err(ZoError::Config("budget needs a step or query limit".into())),
            (Some(0), _) | (_, Some(0)) => Err(ZoError::Config("budget limits must be positive".into())),
            _ => Ok(()),
        }
    }

    fn admits(&self, steps_done: u64, queries_done: u64, next_queries: u64) -> bool {
        self.max_steps.is_none_or(|m| steps_done < m)
            && self.max_queries.is_none_or(|m| queries_done + next_queries <= m)
    }
}

/// Everything that determines a run besides the objective and θ₀.
#[derive(Clone, Debug, PartialEq)]
pub struct RunSpec {
    pub optimizer: OptimizerConfig,
    pub master_seed: u64,
    pub budget: Budget,
    pub schedule: Option<LrSchedule>,
    pub sampling: SamplingMode,
    /// Full-loss evaluation period in steps; 0 evaluates only at the end.
    pub eval_every: u64,
    /// Optimal loss, when known, for the gap column.
    pub f_star: Option<f64>,
    pub record_trajectory: bool,
    pub accounting_mode: AccountingMode,
    pub divergence_factor: f64,
    /// Keep only records of evaluated steps.
    pub thin_records: bool,
}

impl RunSpec {
    pub fn new(optimizer: OptimizerConfig, master_seed: u64, budget: Budget) -> Self {
        Self {
            optimizer,
            master_seed,
            budget,
            schedule: None,
            sampling: SamplingMode::WithoutReplacement,
            eval_every: 1,
            f_star: None,
            record_trajectory: false,
            accounting_mode: AccountingMode::StoreG,
            divergence_factor: DIVERGENCE_FACTOR,
            thin_records: false,
        }
    }
}

/// One emitted measurement row.
#[derive(Clone, Debug, PartialEq)]
pub struct RunRecord {
    /// Steps completed.
    pub step: u64,
    pub cumulative_queries: u64,
    /// Full training loss f(θ) after the step, at evaluation points.
    pub train_loss: Option<f64>,
    pub eval_metric: Option<f64>,
    pub eta1: f64,
    pub eta2: f64,
    pub kind: StepKind,
    pub peak_slots: u64,
    pub elapsed_seconds: f64,
    pub backward_queries: u64,
    pub gap: Option<f64>,
    /// Loss observed while forming the step.
    pub batch_loss: f64,
    /// Largest single-step query count so far.
    pub max_step_queries: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunFailure {
    /// Index of the step that failed.
    pub step: u64,
    pub reason: String,
    pub diverged: bool,
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub theta: ParamVector,
    pub records: Vec<RunRecord>,
    pub failure: Option<RunFailure>,
    pub trajectory: Option<TrajectoryLog>,
    pub total_queries: u64,
    pub total_backward_queries: u64,
    pub steps: u64,
    pub initial_loss: f64,
    /// Full loss at the end (None when the run failed).
    pub final_loss: Option<f64>,
}

impl RunOutcome {
    pub fn diverged(&self) -> bool {
        self.failure.as_ref().is_some_and(|f| f.diverged)
    }
}

/// Stateful optimizer: owns the step counter, anchors and scratch buffers,
/// and derives every batch and perturbation seed from the master seed.
#[derive(Clone, Debug)]
pub struct Optimizer {
    config: OptimizerConfig,
    master_seed: u64,
    sampling: SamplingMode,
    n: usize,
    d: usize,
    t: u64,
    svrg_anchor: Option<SvrgAnchor>,
    dense_anchor: Option<DenseAnchor>,
    grad: Vec<f64>,
}

impl Optimizer {
    pub fn new(config: OptimizerConfig, master_seed: u64, n: usize, d: usize, sampling: SamplingMode) -> Result<Self> {
        config.validate(n)?;
        let dense_anchor = matches!(config, OptimizerConfig::ZoSvrg(_)).then(|| DenseAnchor::new(d));
        let grad = if matches!(config, OptimizerConfig::FoSgd(_)) {
            vec![0.0; d]
        } else {
            Vec::new()
        };
        Ok(Self {
            config,
            master_seed,
            sampling,
            n,
            d,
            t: 0,
            svrg_anchor: None,
            dense_anchor,
            grad,
        })
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.config
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    pub fn anchor(&self) -> Option<&SvrgAnchor> {
        self.svrg_anchor.as_ref()
    }

    pub fn dense_anchor(&self) -> Option<&DenseAnchor> {
        self.dense_anchor.as_ref()
    }

    pub fn set_learning_rates(&mut self, eta1: f64, eta2: f64) {
        self.config.set_learning_rates(eta1, eta2);
    }

    /// Perturbation seed of step `t`.
    pub fn perturbation_seed(master_seed: u64, t: u64) -> PerturbationSeed {
        PerturbationSeed::new(derive_seed(master_seed, SeedDomain::Perturbation, t))
    }

    /// Forward queries the next step will use.
    pub fn next_step_queries(&self) -> u64 {
        let p = self.config.spsa().map_or(1, |s| s.p) as u64;
        match &self.config {
            OptimizerConfig::Mezo(c) => 2 * c.batch_size as u64 * p,
            OptimizerConfig::MezoSvrg(c) => {
                if c.is_fullbatch_step(self.t) {
                    2 * c.anchor_batch as u64 * p
                } else {
                    4 * c.batch_size as u64 * p
                }
            }
            OptimizerConfig::ZoSvrg(c) => {
                let refresh = if self.t.is_multiple_of(c.q as u64) {
                    2 * c.anchor_batch as u64 * p
                } else {
                    0
                };
                refresh + 4 * c.batch_size as u64 * p
            }
            OptimizerConfig::FoSgd(c) => c.batch_size as u64,
        }
    }

    fn minibatch(&self, b: usize) -> Result<Minibatch> {
        let mut rng = chacha(derive_seed(self.master_seed, SeedDomain::Batch, self.t));
        Minibatch::sample(&mut rng, self.n, b, self.sampling)
    }

    fn anchor_batch(&self, size: usize) -> Result<Minibatch> {
        if size == self.n {
            return Ok(Minibatch::full(self.n));
        }
        let mut rng = chacha(derive_seed(self.master_seed, SeedDomain::AnchorBatch, self.t));
        Minibatch::sample(&mut rng, self.n, size, SamplingMode::WithoutReplacement)
    }

    fn sample_seeds(&self, domain: SeedDomain, k: usize) -> Vec<PerturbationSeed> {
        (0..k as u64)
            .map(|i| PerturbationSeed::new(derive_sample_seed(self.master_seed, domain, self.t, i)))
            .collect()
    }

    /// Takes step `t` and advances the counter. On error the counter is not
    /// advanced and θ may be partially updated.
    pub fn step<O: Objective + ?Sized>(&mut self, obj: &O, theta: &mut ParamVector) -> Result<StepReport> {
        if obj.num_samples() != self.n {
            return Err(ZoError::DimensionMismatch {
                expected: self.n,
                actual: obj.num_samples(),
            });
        }
        theta.ensure_dim(self.d)?;
        let t = self.t;
        let seed = Self::perturbation_seed(self.master_seed, t);
        let mut report = match self.config.clone() {
            OptimizerConfig::Mezo(c) => {
                let batch = self.minibatch(c.batch_size)?;
                mezo_step(obj, theta, &batch, seed, c.eta, &c.spsa)?
            }
            OptimizerConfig::MezoSvrg(c) => {
                let batch = if c.is_fullbatch_step(t) {
                    self.anchor_batch(c.anchor_batch)?
                } else {
                    self.minibatch(c.batch_size)?
                };
                mezo_svrg_step(obj, theta, &mut self.svrg_anchor, &batch, seed, &c, t)?
            }
            OptimizerConfig::ZoSvrg(c) => {
                let mut queries = 0;
                let refresh = t.is_multiple_of(c.q as u64);
                if refresh {
                    let ab = self.anchor_batch(c.anchor_batch)?;
                    let seeds = self.sample_seeds(SeedDomain::AnchorPerSample, c.anchor_batch);
                    let anchor = self.dense_anchor.as_mut().expect("allocated for ZO-SVRG");
                    queries += zo_svrg_refresh(obj, theta, anchor, &ab, &seeds, &c.spsa, t)?;
                }
                let batch = self.minibatch(c.batch_size)?;
                let seeds = self.sample_seeds(SeedDomain::PerSample, c.batch_size);
                let anchor = self.dense_anchor.as_mut().expect("allocated for ZO-SVRG");
                let mut r = zo_svrg_step(obj, theta, anchor, &batch, &seeds, c.eta, &c.spsa)?;
                r.queries += queries;
                if refresh {
                    r.kind = StepKind::Fullbatch;
                }
                r
            }
            OptimizerConfig::FoSgd(c) => {
                let batch = self.minibatch(c.batch_size)?;
                fo_sgd_step_with(obj, theta, &batch, c.eta, &mut self.grad)?
            }
        };
        report.step = t;
        self.t += 1;
        Ok(report)
    }
}

/// Runs until the budget is exhausted or a step fails.
pub fn run<O: Objective + ?Sized>(obj: &O, theta0: &ParamVector, spec: &RunSpec) -> Result<RunOutcome> {
    run_with(obj, theta0, spec, |_, _| {})
}

/// [`run`] with an observer called after every successful step.
pub fn run_with<O, F>(obj: &O, theta0: &ParamVector, spec: &RunSpec, mut observer: F) -> Result<RunOutcome>
where
    O: Objective + ?Sized,
    F: FnMut(&StepReport, &ParamVector),
{
    spec.budget.validate()?;
    let (n, d) = (obj.num_samples(), obj.dim());
    theta0.ensure_dim(d)?;
    let mut opt = Optimizer::new(spec.optimizer.clone(), spec.master_seed, n, d, spec.sampling)?;
    let mut trajectory = if spec.record_trajectory {
        Some(TrajectoryLog::for_run(&spec.optimizer, spec.master_seed, theta0, n)?)
    } else {
        None
    };
    let mut schedule = spec.schedule.map(LrScheduleState::new);
    let peak_slots = account_memory(spec.optimizer.kind(), spec.accounting_mode, d as u64)?.peak_slots();
    let initial_loss = obj.full_loss(theta0)?;
    let start = Instant::now();

    let mut theta = theta0.clone();
    let mut records = Vec::new();
    let mut failure = None;
    let (mut queries, mut backward, mut max_step) = (0u64, 0u64, 0u64);

    while spec.budget.admits(opt.steps_taken(), queries, opt.next_step_queries()) {
        let t = opt.steps_taken();
        let report = match opt.step(obj, &mut theta) {
            Ok(r) => r,
            Err(e) => {
                let diverged = matches!(e, ZoError::NonFiniteLoss { .. } | ZoError::NonFiniteParameters);
                failure = Some(RunFailure {
                    step: t,
                    reason: e.to_string(),
                    diverged,
                });
                break;
            }
        };
        queries += report.queries;
        backward += report.backward_queries;
        max_step = max_step.max(report.queries);
        if let Some(log) = trajectory.as_mut() {
            log.record(&report)?;
        }
        observer(&report, &theta);

        let done = t + 1;
        let last = !spec.budget.admits(done, queries, opt.next_step_queries());
        let evaluate = last || (spec.eval_every > 0 && done % spec.eval_every == 0);
        let (train_loss, eval_metric) = if evaluate {
            (Some(obj.full_loss(&theta)?), obj.metric(&theta))
        } else {
            (None, None)
        };
        if evaluate || !spec.thin_records {
            records.push(RunRecord {
                step: done,
                cumulative_queries: queries,
                train_loss,
                eval_metric,
                eta1: report.eta1,
                eta2: report.eta2,
                kind: report.kind,
                peak_slots,
                elapsed_seconds: start.elapsed().as_secs_f64(),
                backward_queries: backward,
                gap: train_loss.zip(spec.f_star).map(|(l, f)| l - f),
                batch_loss: report.loss_before,
                max_step_queries: max_step,
            });
        }

        let observed = train_loss.unwrap_or(report.loss_before);
        if !observed.is_finite() || observed > spec.divergence_factor * initial_loss {
            failure = Some(RunFailure {
                step: t,
                reason: format!(
                    "loss {observed:e} exceeds {:e} x initial loss {initial_loss:e}",
                    spec.divergence_factor
                ),
                diverged: true,
            });
            break;
        }

        if let Some(state) = schedule.as_mut() {
            state.push(report.loss_before);
            if state.at_epoch_boundary() {
                let (e1, e2) = opt.config().learning_rates();
                let (n1, n2) = lr_schedule_update(state, e1, e2);
                if (n1, n2) != (e1, e2) {
                    opt.set_learning_rates(n1, n2);
                    if let Some(log) = trajectory.as_mut() {
                        log.record_lr_change(t, n1, n2)?;
                    }
                }
            }
        }
    }

    let final_loss = if failure.is_none() {
        Some(obj.full_loss(&theta)?)
    } else {
        None
    };
    Ok(RunOutcome {
        theta,
        records,
        failure,
        trajectory,
        total_queries: queries,
        total_backward_queries: backward,
        steps: opt.steps_taken(),
        initial_loss,
        final_loss,
    })
}

impl OptimizerKind {
    /// Whether runs of this optimizer can be recorded for seed replay.
    pub fn replayable(self) -> bool {
        matches!(self, OptimizerKind::Mezo | OptimizerKind::MezoSvrg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::SpsaConfig;
    use crate::objectives::make_least_squares;
    use crate::optimizers::{FoSgdConfig, MezoConfig, MezoSvrgConfig, ZoSvrgConfig};

    fn svrg(n: usize, b: usize, q: usize) -> OptimizerConfig {
        OptimizerConfig::MezoSvrg(MezoSvrgConfig {
            q,
            batch_size: b,
            ..MezoSvrgConfig::least_squares_defaults(n)
        })
    }

    #[test]
    fn query_budget_admits_exactly_one_mezo_step() {
        let p = make_least_squares(64, 4, 0.1, 0).unwrap();
        let cfg = OptimizerConfig::Mezo(MezoConfig {
            batch_size: 8,
            ..MezoConfig::default()
        });
        let out = run(&p, &ParamVector::zeros(4), &RunSpec::new(cfg, 1, Budget::queries(16))).unwrap();
        assert_eq!(out.steps, 1);
        assert_eq!(out.total_queries, 16);
        assert_eq!(out.records.len(), 1);
    }

    #[test]
    fn svrg_query_count_matches_branch_accounting() {
        let p = make_least_squares(8, 2, 0.1, 0).unwrap();
        let out = run(
            &p,
            &ParamVector::zeros(2),
            &RunSpec::new(svrg(8, 2, 2), 3, Budget::steps(4)),
        )
        .unwrap();
        assert_eq!(out.total_queries, 48);
        let kinds: Vec<_> = out.records.iter().map(|r| r.kind).collect();
        assert_eq!(
            kinds,
            [
                StepKind::Fullbatch,
                StepKind::Minibatch,
                StepKind::Fullbatch,
                StepKind::Minibatch
            ]
        );
        let cum: Vec<_> = out.records.iter().map(|r| r.cumulative_queries).collect();
        assert_eq!(cum, [16, 24, 40, 48]);
    }

    #[test]
    fn anchor_refreshes_exactly_on_period() {
        let p = make_least_squares(20, 3, 0.1, 0).unwrap();
        let mut opt = Optimizer::new(svrg(20, 4, 3), 9, 20, 3, SamplingMode::WithoutReplacement).unwrap();
        let mut theta = ParamVector::zeros(3);
        for t in 0..10u64 {
            opt.step(&p, &mut theta).unwrap();
            assert_eq!(opt.anchor().unwrap().step_created, t - t % 3);
        }
    }

    #[test]
    fn identical_seeds_give_bit_identical_runs() {
        let p = make_least_squares(50, 5, 0.1, 0).unwrap();
        for cfg in [
            svrg(50, 8, 3),
            OptimizerConfig::Mezo(MezoConfig {
                batch_size: 8,
                ..MezoConfig::default()
            }),
            OptimizerConfig::ZoSvrg(ZoSvrgConfig {
                eta: 1e-3,
                q: 4,
                batch_size: 4,
                anchor_batch: 20,
                spsa: SpsaConfig::default(),
            }),
        ] {
            let spec = RunSpec::new(cfg, 11, Budget::steps(30));
            let a = run(&p, &ParamVector::zeros(5), &spec).unwrap();
            let b = run(&p, &ParamVector::zeros(5), &spec).unwrap();
            assert!(a.theta.bitwise_eq(&b.theta));
            let strip = |r: &[RunRecord]| {
                r.iter()
                    .map(|x| (x.step, x.cumulative_queries, x.train_loss.map(f64::to_bits)))
                    .collect::<Vec<_>>()
            };
            assert_eq!(strip(&a.records), strip(&b.records));
        }
    }

    #[test]
    fn zo_svrg_counts_refresh_and_minibatch_queries() {
        let p = make_least_squares(10, 2, 0.1, 0).unwrap();
        let cfg = OptimizerConfig::ZoSvrg(ZoSvrgConfig {
            eta: 1e-3,
            q: 2,
            batch_size: 2,
            anchor_batch: 10,
            spsa: SpsaConfig::default(),
        });
        let out = run(&p, &ParamVector::zeros(2), &RunSpec::new(cfg, 0, Budget::steps(4))).unwrap();
        // refresh steps: 2·10 + 4·2; plain steps: 4·2
        assert_eq!(out.total_queries, 2 * (20 + 8) + 2 * 8);
    }

    #[test]
    fn divergence_is_reported() {
        let p = make_least_squares(50, 5, 0.1, 0).unwrap();
        let cfg = OptimizerConfig::Mezo(MezoConfig {
            eta: 5.0,
            batch_size: 8,
            ..MezoConfig::default()
        });
        let out = run(&p, &ParamVector::zeros(5), &RunSpec::new(cfg, 0, Budget::steps(500))).unwrap();
        assert!(out.diverged(), "{:?}", out.failure);
        assert!(out.steps < 500);
    }

    #[test]
    fn fo_sgd_reports_backward_passes_separately() {
        let p = make_least_squares(40, 3, 0.1, 0).unwrap();
        let cfg = OptimizerConfig::FoSgd(FoSgdConfig {
            eta: 1e-2,
            batch_size: 4,
        });
        let out = run(&p, &ParamVector::zeros(3), &RunSpec::new(cfg, 0, Budget::steps(5))).unwrap();
        assert_eq!(out.total_queries, 20);
        assert_eq!(out.total_backward_queries, 20);
    }

    #[test]
    fn rising_losses_trigger_annealing() {
        let p = make_least_squares(64, 4, 0.1, 0).unwrap();
        let cfg = OptimizerConfig::Mezo(MezoConfig {
            eta: 0.05,
            batch_size: 8,
            ..MezoConfig::default()
        });
        let mut spec = RunSpec::new(cfg, 2, Budget::steps(400));
        spec.schedule = Some(LrSchedule::with_window(8).unwrap());
        let out = run(&p, &ParamVector::zeros(4), &spec).unwrap();
        let etas: Vec<f64> = out.records.iter().map(|r| r.eta1).collect();
        assert!(etas.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn empty_budget_is_rejected() {
        let p = make_least_squares(8, 2, 0.1, 0).unwrap();
        let spec = RunSpec::new(svrg(8, 2, 2), 0, Budget::default());
        assert!(run(&p, &ParamVector::zeros(2), &spec).is_err());
    }
}
