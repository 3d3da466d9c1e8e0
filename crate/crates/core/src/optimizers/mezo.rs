use super::{check_batch, check_rate, StepKind, StepReport};
use crate::error::Result;
use crate::estimators::{axpy_estimate_in_place, spsa_batch_shared, GradientEstimate, SpsaConfig};
use crate::objectives::{Minibatch, Objective};
use crate::params::ParamVector;
use crate::rng::PerturbationSeed;

/// In-place ZO-SGD with the shared-perturbation minibatch estimator.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MezoConfig {
    pub eta: f64,
    pub batch_size: usize,
    pub spsa: SpsaConfig,
}

impl MezoConfig {
    pub fn validate(&self, n: usize) -> Result<()> {
        check_rate("eta", self.eta)?;
        check_batch("batch_size", self.batch_size, n)?;
        self.spsa.validate()
    }
}

impl Default for MezoConfig {
    fn default() -> Self {
        Self {
            eta: 1e-3,
            batch_size: 32,
            spsa: SpsaConfig::default(),
        }
    }
}

/// θ ← θ − η·est, where `estimate` runs the perturbation cycle on θ.
pub(crate) fn mezo_update<E>(
    theta: &mut ParamVector,
    seed: PerturbationSeed,
    eta: f64,
    mut estimate: E,
) -> Result<GradientEstimate>
where
    E: FnMut(&mut ParamVector, PerturbationSeed) -> Result<GradientEstimate>,
{
    let est = estimate(theta, seed)?;
    axpy_estimate_in_place(theta, &est, -eta)?;
    Ok(est)
}

/// One MeZO step: θ ← θ − η·∇̄f_𝓘(θ).
pub fn mezo_step<O: Objective + ?Sized>(
    obj: &O,
    theta: &mut ParamVector,
    batch: &Minibatch,
    seed: PerturbationSeed,
    eta: f64,
    cfg: &SpsaConfig,
) -> Result<StepReport> {
    check_rate("eta", eta)?;
    let est = mezo_update(theta, seed, eta, |t, s| spsa_batch_shared(obj, t, batch, s, cfg))?;
    Ok(StepReport {
        step: 0,
        kind: StepKind::Minibatch,
        loss_before: est.center_loss,
        queries: est.queries_used,
        backward_queries: 0,
        eta1: eta,
        eta2: eta,
        coeffs: est.coeffs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::{make_least_squares, SamplingMode};
    use crate::rng::{chacha, regenerate_z};

    struct Square;
    impl Objective for Square {
        fn num_samples(&self) -> usize {
            1
        }
        fn dim(&self) -> usize {
            1
        }
        fn loss(&self, t: &[f64], _: usize) -> f64 {
            t[0] * t[0]
        }
    }

    #[test]
    fn zero_rate_leaves_theta_within_restore_tolerance() {
        let p = make_least_squares(20, 4, 0.1, 1).unwrap();
        let orig = ParamVector::new(vec![0.5, -0.5, 1.0, 2.0]).unwrap();
        let mut theta = orig.clone();
        let r = mezo_step(
            &p,
            &mut theta,
            &Minibatch::full(20),
            PerturbationSeed::new(3),
            0.0,
            &SpsaConfig::default(),
        )
        .unwrap();
        assert_eq!(r.queries, 40);
        for (a, b) in theta.iter().zip(orig.iter()) {
            assert!((a - b).abs() <= 1e-12 * b.abs());
        }
    }

    #[test]
    fn quadratic_step_matches_hand_value() {
        let seed = PerturbationSeed::new(12);
        let z = regenerate_z(seed, 1)[0];
        let mut theta = ParamVector::new(vec![1.0]).unwrap();
        mezo_step(
            &Square,
            &mut theta,
            &Minibatch::full(1),
            seed,
            0.1,
            &SpsaConfig::default(),
        )
        .unwrap();
        // coeff = 2z, so θ′ = 1 − 0.1·2z·z
        assert!((theta[0] - (1.0 - 0.2 * z * z)).abs() < 1e-9);
    }

    #[test]
    fn default_least_squares_settings_stay_finite() {
        let p = make_least_squares(1000, 100, 0.01, 0).unwrap();
        let mut theta = ParamVector::zeros(100);
        let mut rng = chacha(5);
        let cfg = SpsaConfig::default();
        let f0 = p.full_loss(&theta).unwrap();
        for t in 0..1000 {
            let batch = Minibatch::sample(&mut rng, 1000, 32, SamplingMode::WithoutReplacement).unwrap();
            mezo_step(&p, &mut theta, &batch, PerturbationSeed::new(t), 1e-3, &cfg).unwrap();
        }
        let f = p.full_loss(&theta).unwrap();
        assert!(f.is_finite() && f < f0, "{f0} -> {f}");
    }
}
