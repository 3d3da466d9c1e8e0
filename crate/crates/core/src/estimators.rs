//! SPSA gradient estimators and the seed-replay perturbation primitive.
//!
//! A shared-perturbation estimate is stored compressed as a seed plus one
//! coefficient per draw, `coeff_j = [f(θ+μz_j) − f(θ−μz_j)] / (2μ)`, and
//! represents the vector `(1/p) Σ_j coeff_j · z_j`. Vectors are realized
//! by streaming `z` from its seed; nothing d-sized is kept.

use crate::error::{Result, ZoError};
use crate::objectives::{mean_loss, Minibatch, Objective};
use crate::params::ParamVector;
use crate::rng::{NormalStream, PerturbationSeed};

/// Perturbation scale μ and number of averaged draws p.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpsaConfig {
    pub mu: f64,
    pub p: usize,
}

impl SpsaConfig {
    pub fn new(mu: f64, p: usize) -> Result<Self> {
        let cfg = Self { mu, p };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_mu(mu: f64) -> Result<Self> {
        Self::new(mu, 1)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return Err(ZoError::Config(format!(
                "mu must be a positive finite number, got {}",
                self.mu
            )));
        }
        if self.p == 0 {
            return Err(ZoError::Config("p must be >= 1".into()));
        }
        Ok(())
    }
}

impl Default for SpsaConfig {
    fn default() -> Self {
        Self { mu: 1e-3, p: 1 }
    }
}

/// Compressed SPSA estimate.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientEstimate {
    pub seed: PerturbationSeed,
    /// One coefficient per draw; draw j uses `seed.draw(j, d)`.
    pub coeffs: Vec<f64>,
    pub d: usize,
    pub queries_used: u64,
    /// Mean of the perturbed losses, a proxy for the loss at θ.
    pub center_loss: f64,
}

impl GradientEstimate {
    /// Coefficient of the first draw (the only one when p = 1).
    pub fn coeff(&self) -> f64 {
        self.coeffs[0]
    }

    pub fn p(&self) -> usize {
        self.coeffs.len()
    }
}

/// Dense average of per-sample estimates.
#[derive(Clone, Debug, PartialEq)]
pub struct AveragedEstimate {
    pub values: Vec<f64>,
    pub queries_used: u64,
    /// Mean of the perturbed losses over the batch.
    pub center_loss: f64,
}

/// θ ← θ + factor · z(seed), in index order, streaming z.
#[inline]
fn add_scaled_z(theta: &mut [f64], seed: PerturbationSeed, factor: f64) {
    let mut z = NormalStream::new(seed);
    for t in theta.iter_mut() {
        *t += factor * z.next_normal();
    }
}

/// Memory-efficient parameter perturbation: θ ← θ + s·μ·z(seed) with
/// s ∈ {1, −2}.
pub fn perturb_in_place(theta: &mut ParamVector, seed: PerturbationSeed, s: i32, mu: f64) -> Result<()> {
    if s != 1 && s != -2 {
        return Err(ZoError::Contract(format!("scaling factor must be 1 or -2, got {s}")));
    }
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(ZoError::Contract(format!("mu must be positive, got {mu}")));
    }
    add_scaled_z(theta.as_mut_slice(), seed, f64::from(s) * mu);
    theta.ensure_finite()
}

/// Runs the (+1, −2, +1) perturbation cycle for every draw, calling `eval`
/// at θ+μz and θ−μz. Returns the coefficients and the mean perturbed loss.
///
/// Replay passes an `eval` that returns 0 and substitutes recorded
/// coefficients, so the arithmetic applied to θ is identical to the live run.
pub(crate) fn perturbation_cycle<F>(
    theta: &mut ParamVector,
    seed: PerturbationSeed,
    cfg: &SpsaConfig,
    mut eval: F,
) -> Result<(Vec<f64>, f64)>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let d = theta.dim();
    let mu = cfg.mu;
    let mut coeffs = Vec::with_capacity(cfg.p);
    let mut center = 0.0;
    for j in 0..cfg.p {
        let s = seed.draw(j, d);
        add_scaled_z(theta.as_mut_slice(), s, mu);
        let plus = eval(theta);
        let minus = if plus.is_ok() {
            eval_minus(theta, s, mu, &mut eval)
        } else {
            skip_minus(theta, s, mu)
        };
        add_scaled_z(theta.as_mut_slice(), s, mu);
        let (plus, minus) = (plus?, minus?);
        coeffs.push((plus - minus) / (2.0 * mu));
        center += 0.5 * (plus + minus);
    }
    theta.ensure_finite()?;
    Ok((coeffs, center / cfg.p as f64))
}

fn eval_minus<F>(theta: &mut ParamVector, s: PerturbationSeed, mu: f64, eval: &mut F) -> Result<f64>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    add_scaled_z(theta.as_mut_slice(), s, -2.0 * mu);
    eval(theta)
}

fn skip_minus(theta: &mut ParamVector, s: PerturbationSeed, mu: f64) -> Result<f64> {
    add_scaled_z(theta.as_mut_slice(), s, -2.0 * mu);
    Ok(0.0)
}

fn check_loss(l: f64, index: usize) -> Result<f64> {
    if l.is_finite() {
        Ok(l)
    } else {
        Err(ZoError::NonFiniteLoss { index })
    }
}

/// Per-sample two-point estimate for sample `i`.
pub fn spsa_sample<O: Objective + ?Sized>(
    obj: &O,
    theta: &mut ParamVector,
    i: usize,
    seed: PerturbationSeed,
    cfg: &SpsaConfig,
) -> Result<GradientEstimate> {
    cfg.validate()?;
    theta.ensure_dim(obj.dim())?;
    let n = obj.num_samples();
    if i >= n {
        return Err(ZoError::IndexOutOfRange { index: i, n });
    }
    let (coeffs, center_loss) = perturbation_cycle(theta, seed, cfg, |t| check_loss(obj.loss(t, i), i))?;
    Ok(GradientEstimate {
        seed,
        coeffs,
        d: theta.dim(),
        queries_used: 2 * cfg.p as u64,
        center_loss,
    })
}

/// Shared-perturbation estimate over `batch`: every sample is perturbed
/// along the same z and the batch losses are mean-reduced.
pub fn spsa_batch_shared<O: Objective + ?Sized>(
    obj: &O,
    theta: &mut ParamVector,
    batch: &Minibatch,
    seed: PerturbationSeed,
    cfg: &SpsaConfig,
) -> Result<GradientEstimate> {
    cfg.validate()?;
    theta.ensure_dim(obj.dim())?;
    check_batch(obj, batch)?;
    let (coeffs, center_loss) = perturbation_cycle(theta, seed, cfg, |t| mean_loss(obj, t, batch.indices()))?;
    Ok(GradientEstimate {
        seed,
        coeffs,
        d: theta.dim(),
        queries_used: 2 * batch.len() as u64 * cfg.p as u64,
        center_loss,
    })
}

/// Average of per-sample estimates, one seed per batch position.
pub fn spsa_batch_avg<O: Objective + ?Sized>(
    obj: &O,
    theta: &mut ParamVector,
    batch: &Minibatch,
    seeds: &[PerturbationSeed],
    cfg: &SpsaConfig,
) -> Result<AveragedEstimate> {
    let mut values = vec![0.0; theta.dim()];
    let (queries_used, center_loss) = spsa_batch_avg_into(obj, theta, batch, seeds, cfg, &mut values)?;
    Ok(AveragedEstimate {
        values,
        queries_used,
        center_loss,
    })
}

/// [`spsa_batch_avg`] into a caller-owned buffer, which is overwritten.
/// Returns the queries used and the mean perturbed loss.
pub fn spsa_batch_avg_into<O: Objective + ?Sized>(
    obj: &O,
    theta: &mut ParamVector,
    batch: &Minibatch,
    seeds: &[PerturbationSeed],
    cfg: &SpsaConfig,
    out: &mut [f64],
) -> Result<(u64, f64)> {
    check_batch(obj, batch)?;
    if seeds.len() != batch.len() {
        return Err(ZoError::Contract(format!(
            "{} seeds for a batch of {}",
            seeds.len(),
            batch.len()
        )));
    }
    if out.len() != theta.dim() {
        return Err(ZoError::DimensionMismatch {
            expected: theta.dim(),
            actual: out.len(),
        });
    }
    out.fill(0.0);
    let weight = 1.0 / batch.len() as f64;
    let (mut queries, mut center) = (0, 0.0);
    for (&i, &seed) in batch.indices().iter().zip(seeds) {
        let est = spsa_sample(obj, theta, i, seed, cfg)?;
        accumulate_estimate(out, &est, weight)?;
        queries += est.queries_used;
        center += est.center_loss;
    }
    Ok((queries, center * weight))
}

fn check_batch<O: Objective + ?Sized>(obj: &O, batch: &Minibatch) -> Result<()> {
    let n = obj.num_samples();
    if batch.is_empty() {
        return Err(ZoError::Contract("minibatch must be nonempty".into()));
    }
    match batch.indices().iter().find(|&&i| i >= n) {
        Some(&index) => Err(ZoError::IndexOutOfRange { index, n }),
        None => Ok(()),
    }
}

/// out ← out + scale · est, streaming z.
pub fn accumulate_estimate(out: &mut [f64], est: &GradientEstimate, scale: f64) -> Result<()> {
    if out.len() != est.d {
        return Err(ZoError::DimensionMismatch {
            expected: est.d,
            actual: out.len(),
        });
    }
    let p = est.p() as f64;
    for (j, &c) in est.coeffs.iter().enumerate() {
        let w = if est.p() == 1 { scale * c } else { scale * c / p };
        add_scaled_z(out, est.seed.draw(j, est.d), w);
    }
    Ok(())
}

/// Realizes the estimate as a dense vector.
pub fn materialize(est: &GradientEstimate) -> Vec<f64> {
    let mut out = vec![0.0; est.d];
    accumulate_estimate(&mut out, est, 1.0).expect("buffer sized from the estimate");
    out
}

/// θ ← θ + scale · est, in place.
pub fn axpy_estimate_in_place(theta: &mut ParamVector, est: &GradientEstimate, scale: f64) -> Result<()> {
    accumulate_estimate(theta.as_mut_slice(), est, scale)?;
    theta.ensure_finite()
}
