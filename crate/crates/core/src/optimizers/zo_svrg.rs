use super::{check_batch, check_rate, StepKind, StepReport};
use crate::error::{Result, ZoError};
use crate::estimators::{spsa_batch_avg_into, SpsaConfig};
use crate::objectives::{Minibatch, Objective};
use crate::params::ParamVector;
use crate::rng::PerturbationSeed;

/// Reference ZO-SVRG with per-sample averaged estimators and dense
/// storage of every intermediate vector.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ZoSvrgConfig {
    pub eta: f64,
    pub q: usize,
    pub batch_size: usize,
    pub anchor_batch: usize,
    pub spsa: SpsaConfig,
}

impl ZoSvrgConfig {
    pub fn validate(&self, n: usize) -> Result<()> {
        check_rate("eta", self.eta)?;
        if self.q == 0 {
            return Err(ZoError::Config("q must be >= 1".into()));
        }
        check_batch("batch_size", self.batch_size, n)?;
        check_batch("anchor_batch", self.anchor_batch, n)?;
        self.spsa.validate()
    }
}

/// θ̄, the dense anchor estimate ĝ(θ̄), and the two minibatch buffers.
/// Together with θ this is five d-length vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseAnchor {
    pub theta_bar: ParamVector,
    pub g: Vec<f64>,
    pub step_created: u64,
    g_hat: Vec<f64>,
    g_bar: Vec<f64>,
}

impl DenseAnchor {
    pub fn new(d: usize) -> Self {
        Self {
            theta_bar: ParamVector::zeros(d),
            g: vec![0.0; d],
            step_created: 0,
            g_hat: vec![0.0; d],
            g_bar: vec![0.0; d],
        }
    }

    /// Last blended direction ĝ − ḡ + g.
    pub fn last_direction(&self) -> Vec<f64> {
        (0..self.g.len())
            .map(|k| self.g_hat[k] - self.g_bar[k] + self.g[k])
            .collect()
    }

    /// Last minibatch estimates at θ and θ̄.
    pub fn last_minibatch_estimates(&self) -> (&[f64], &[f64]) {
        (&self.g_hat, &self.g_bar)
    }
}

/// Anchor refresh: g ← ∇̂f(θ) over `anchor_batch`; θ̄ ← θ. Returns the
/// queries used.
pub fn zo_svrg_refresh<O: Objective + ?Sized>(
    obj: &O,
    theta: &mut ParamVector,
    anchor: &mut DenseAnchor,
    anchor_batch: &Minibatch,
    seeds: &[PerturbationSeed],
    cfg: &SpsaConfig,
    t: u64,
) -> Result<u64> {
    theta.ensure_dim(anchor.g.len())?;
    let (queries, _) = spsa_batch_avg_into(obj, theta, anchor_batch, seeds, cfg, &mut anchor.g)?;
    anchor.theta_bar.copy_from(theta)?;
    anchor.step_created = t;
    Ok(queries)
}

/// θ ← θ − η[∇̂f_𝓘(θ) − ∇̂f_𝓘(θ̄) + ∇̂f(θ̄)], the same per-sample seeds
/// at θ and θ̄.
pub fn zo_svrg_step<O: Objective + ?Sized>(
    obj: &O,
    theta: &mut ParamVector,
    anchor: &mut DenseAnchor,
    batch: &Minibatch,
    per_sample_seeds: &[PerturbationSeed],
    eta: f64,
    cfg: &SpsaConfig,
) -> Result<StepReport> {
    check_rate("eta", eta)?;
    let (q1, loss) = spsa_batch_avg_into(obj, theta, batch, per_sample_seeds, cfg, &mut anchor.g_hat)?;
    let (q2, _) = spsa_batch_avg_into(
        obj,
        &mut anchor.theta_bar,
        batch,
        per_sample_seeds,
        cfg,
        &mut anchor.g_bar,
    )?;
    for (k, t) in theta.as_mut_slice().iter_mut().enumerate() {
        *t -= eta * (anchor.g_hat[k] - anchor.g_bar[k] + anchor.g[k]);
    }
    theta.ensure_finite()?;
    Ok(StepReport {
        step: 0,
        kind: StepKind::Minibatch,
        loss_before: loss,
        queries: q1 + q2,
        backward_queries: 0,
        eta1: eta,
        eta2: eta,
        coeffs: Vec::new(),
    })
}
