use super::{check_batch, check_rate, StepKind, StepReport};
use crate::error::{Result, ZoError};
use crate::estimators::{axpy_estimate_in_place, spsa_batch_shared, GradientEstimate, SpsaConfig};
use crate::objectives::{Minibatch, Objective};
use crate::params::ParamVector;
use crate::rng::PerturbationSeed;

/// Memory-efficient ZO-SVRG with q-periodic anchoring and two learning
/// rates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MezoSvrgConfig {
    /// Rate of the fullbatch step.
    pub eta1: f64,
    /// Rate of the variance-reduced minibatch step.
    pub eta2: f64,
    /// Anchor period; steps with t mod q = 0 are fullbatch steps.
    pub q: usize,
    pub batch_size: usize,
    /// Samples in the anchor estimate; n for a true fullbatch.
    pub anchor_batch: usize,
    pub spsa: SpsaConfig,
}

impl MezoSvrgConfig {
    /// Reference settings for the least-squares benchmark with a fullbatch anchor
    /// over `n` samples.
    pub fn least_squares_defaults(n: usize) -> Self {
        Self {
            eta1: 1e-3,
            eta2: 1e-4,
            q: 2,
            batch_size: 32.min(n),
            anchor_batch: n,
            spsa: SpsaConfig::default(),
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        check_rate("eta1", self.eta1)?;
        check_rate("eta2", self.eta2)?;
        if self.q == 0 {
            return Err(ZoError::Config("q must be >= 1".into()));
        }
        check_batch("batch_size", self.batch_size, n)?;
        check_batch("anchor_batch", self.anchor_batch, n)?;
        self.spsa.validate()
    }

    pub fn is_fullbatch_step(&self, t: u64) -> bool {
        t.is_multiple_of(self.q as u64)
    }
}

/// θ̄ and the compressed fullbatch estimate g computed at θ̄.
#[derive(Clone, Debug, PartialEq)]
pub struct SvrgAnchor {
    pub theta_bar: ParamVector,
    pub g: GradientEstimate,
    pub step_created: u64,
}

/// Fullbatch branch: g ← ∇̄f(θ); θ̄ ← θ; θ ← θ − η₁g.
pub(crate) fn svrg_fullbatch<E>(
    theta: &mut ParamVector,
    anchor: &mut Option<SvrgAnchor>,
    seed: PerturbationSeed,
    eta1: f64,
    t: u64,
    mut estimate: E,
) -> Result<GradientEstimate>
where
    E: FnMut(&mut ParamVector, PerturbationSeed) -> Result<GradientEstimate>,
{
    let g = estimate(theta, seed)?;
    match anchor {
        Some(a) => {
            a.theta_bar.copy_from(theta)?;
            a.g = g.clone();
            a.step_created = t;
        }
        None => {
            *anchor = Some(SvrgAnchor {
                theta_bar: theta.clone(),
                g: g.clone(),
                step_created: t,
            })
        }
    }
    axpy_estimate_in_place(theta, &g, -eta1)?;
    Ok(g)
}

/// Minibatch branch: θ ← θ − η₂∇̄f_𝓘(θ); θ ← θ + η₂∇̄f_𝓘(θ̄); θ ← θ − η₂g.
/// Both minibatch estimates use `seed`.
pub(crate) fn svrg_minibatch<E>(
    theta: &mut ParamVector,
    anchor: &mut SvrgAnchor,
    seed: PerturbationSeed,
    eta2: f64,
    mut estimate: E,
) -> Result<(GradientEstimate, GradientEstimate)>
where
    E: FnMut(&mut ParamVector, PerturbationSeed) -> Result<GradientEstimate>,
{
    let at_theta = estimate(theta, seed)?;
    axpy_estimate_in_place(theta, &at_theta, -eta2)?;
    let at_bar = estimate(&mut anchor.theta_bar, seed)?;
    axpy_estimate_in_place(theta, &at_bar, eta2)?;
    axpy_estimate_in_place(theta, &anchor.g, -eta2)?;
    Ok((at_theta, at_bar))
}

/// One MeZO-SVRG step at iteration `t`.
///
/// When `t mod q = 0`, `batch` is the anchor batch (`anchor_batch` samples)
/// and the anchor is refreshed. Otherwise `batch` is the minibatch 𝓘_t of
/// `batch_size` samples and an anchor must already exist.
pub fn mezo_svrg_step<O: Objective + ?Sized>(
    obj: &O,
    theta: &mut ParamVector,
    anchor: &mut Option<SvrgAnchor>,
    batch: &Minibatch,
    seed: PerturbationSeed,
    cfg: &MezoSvrgConfig,
    t: u64,
) -> Result<StepReport> {
    let mut estimate = |th: &mut ParamVector, s: PerturbationSeed| spsa_batch_shared(obj, th, batch, s, &cfg.spsa);
    let report = |kind, loss_before, queries, coeffs| StepReport {
        step: t,
        kind,
        loss_before,
        queries,
        backward_queries: 0,
        eta1: cfg.eta1,
        eta2: cfg.eta2,
        coeffs,
    };
    if cfg.is_fullbatch_step(t) {
        if batch.len() != cfg.anchor_batch {
            return Err(ZoError::Contract(format!(
                "fullbatch step needs {} anchor samples, got {}",
                cfg.anchor_batch,
                batch.len()
            )));
        }
        let g = svrg_fullbatch(theta, anchor, seed, cfg.eta1, t, &mut estimate)?;
        Ok(report(StepKind::Fullbatch, g.center_loss, g.queries_used, g.coeffs))
    } else {
        let a = anchor
            .as_mut()
            .ok_or_else(|| ZoError::Contract("minibatch step without an anchor".into()))?;
        if batch.len() != cfg.batch_size {
            return Err(ZoError::Contract(format!(
                "minibatch step needs {} samples, got {}",
                cfg.batch_size,
                batch.len()
            )));
        }
        let (x, y) = svrg_minibatch(theta, a, seed, cfg.eta2, &mut estimate)?;
        let queries = x.queries_used + y.queries_used;
        let loss = x.center_loss;
        let mut coeffs = x.coeffs;
        coeffs.extend(y.coeffs);
        Ok(report(StepKind::Minibatch, loss, queries, coeffs))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::materialize;
    use crate::objectives::{make_least_squares, SamplingMode};

    fn cfg(n: usize, eta1: f64, eta2: f64, b: usize) -> MezoSvrgConfig {
        MezoSvrgConfig {
            eta1,
            eta2,
            q: 2,
            batch_size: b,
            anchor_batch: n,
            spsa: SpsaConfig::default(),
        }
    }

    #[test]
    fn zero_rate_refresh_keeps_theta_and_builds_anchor() {
        let p = make_least_squares(16, 3, 0.1, 2).unwrap();
        let orig = ParamVector::new(vec![0.3, 0.2, 0.1]).unwrap();
        let mut theta = orig.clone();
        let mut anchor = None;
        let c = cfg(16, 0.0, 1e-4, 4);
        let r = mezo_svrg_step(
            &p,
            &mut theta,
            &mut anchor,
            &Minibatch::full(16),
            PerturbationSeed::new(1),
            &c,
            0,
        )
        .unwrap();
        assert_eq!(r.kind, StepKind::Fullbatch);
        assert_eq!(r.queries, 32);
        assert_eq!(r.coeffs.len(), 1);
        let a = anchor.unwrap();
        assert_eq!(a.step_created, 0);
        for ((x, y), z) in theta.iter().zip(orig.iter()).zip(a.theta_bar.iter()) {
            assert!((x - y).abs() <= 1e-12 * y.abs());
            assert_eq!(x.to_bits(), z.to_bits());
        }
    }

    #[test]
    fn minibatch_terms_cancel_at_the_anchor() {
        let p = make_least_squares(16, 3, 0.1, 2).unwrap();
        let mut theta = ParamVector::new(vec![0.3, 0.2, 0.1]).unwrap();
        let c = cfg(16, 0.0, 1e-2, 4);
        let mut anchor = None;
        mezo_svrg_step(
            &p,
            &mut theta,
            &mut anchor,
            &Minibatch::full(16),
            PerturbationSeed::new(1),
            &c,
            0,
        )
        .unwrap();
        let before = theta.clone();
        let g = materialize(&anchor.as_ref().unwrap().g);
        let batch = Minibatch::new(vec![1, 5, 9, 12], 16, SamplingMode::WithoutReplacement).unwrap();
        let r = mezo_svrg_step(&p, &mut theta, &mut anchor, &batch, PerturbationSeed::new(2), &c, 1).unwrap();
        assert_eq!(r.kind, StepKind::Minibatch);
        assert_eq!(r.queries, 16);
        assert_eq!(r.coeffs.len(), 2);
        assert_eq!(r.coeffs[0].to_bits(), r.coeffs[1].to_bits());
        let norm = before.iter().map(|v| v * v).sum::<f64>().sqrt();
        let err = theta
            .iter()
            .zip(before.iter())
            .zip(&g)
            .map(|((a, b), g)| (a - (b - 1e-2 * g)).powi(2))
            .sum::<f64>()
            .sqrt();
        assert!(err <= 1e-10 * norm, "{err:e}");
    }

    #[test]
    fn minibatch_without_anchor_is_a_contract_error() {
        let p = make_least_squares(8, 2, 0.1, 2).unwrap();
        let mut theta = ParamVector::zeros(2);
        let c = cfg(8, 1e-3, 1e-4, 2);
        let batch = Minibatch::new(vec![0, 1], 8, SamplingMode::WithoutReplacement).unwrap();
        let r = mezo_svrg_step(&p, &mut theta, &mut None, &batch, PerturbationSeed::new(0), &c, 1);
        assert!(matches!(r, Err(ZoError::Contract(_))));
    }

    #[test]
    fn wrong_anchor_batch_size_is_rejected() {
        let p = make_least_squares(8, 2, 0.1, 2).unwrap();
        let mut theta = ParamVector::zeros(2);
        let c = cfg(8, 1e-3, 1e-4, 2);
        let batch = Minibatch::new(vec![0, 1], 8, SamplingMode::WithoutReplacement).unwrap();
        assert!(mezo_svrg_step(&p, &mut theta, &mut None, &batch, PerturbationSeed::new(0), &c, 0).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(cfg(8, 1e-3, 1e-4, 9).validate(8).is_err());
        let mut c = cfg(8, 1e-3, 1e-4, 2);
        c.q = 0;
        assert!(c.validate(8).is_err());
        assert!(MezoSvrgConfig::least_squares_defaults(1000).validate(1000).is_ok());
    }
}
