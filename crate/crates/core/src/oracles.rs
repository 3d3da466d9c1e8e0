//! Brute-force and closed-form oracles for the estimator algebra.
//!
//! Nothing here calls into the optimizers; the least-squares optimum is
//! solved with a dense Cholesky factorization independent of any iterative
//! path.

use itertools::Itertools;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Result, ZoError};
use crate::estimators::{materialize, spsa_batch_shared, spsa_sample, SpsaConfig};
use crate::objectives::{Minibatch, Objective, SamplingMode};
use crate::params::ParamVector;
use crate::rng::{chacha, PerturbationSeed};

/// Largest n for which every size-b minibatch is enumerated.
pub const MAX_ENUMERATION_N: usize = 12;
/// Largest n accepted by [`control_variate_check`].
pub const MAX_CONTROL_VARIATE_N: usize = 64;

/// Solves (XᵀX) w = Xᵀy for row-major `x` (n×d). Returns `(w_ls, f_star)`
/// with f_star the mean squared residual.
pub fn ls_normal_equations(x: &[f64], y: &[f64], n: usize, d: usize) -> Result<(Vec<f64>, f64)> {
    if x.len() != n * d || y.len() != n || n == 0 || d == 0 {
        return Err(ZoError::DimensionMismatch {
            expected: n * d,
            actual: x.len(),
        });
    }
    let xm = DMatrix::from_row_slice(n, d, x);
    let yv = DVector::from_column_slice(y);
    let gram = xm.transpose() * &xm;
    let rhs = xm.transpose() * &yv;
    let chol = gram
        .clone()
        .cholesky()
        .ok_or_else(|| ZoError::Singular("XᵀX is not positive definite".into()))?;
    let l = chol.l();
    let diag = l.diagonal();
    let (lo, hi) = diag
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if lo.partial_cmp(&(hi * 1e-7)) != Some(std::cmp::Ordering::Greater) {
        return Err(ZoError::Singular(format!(
            "XᵀX is numerically singular (Cholesky diagonal range {lo:e}..{hi:e})"
        )));
    }
    let w = chol.solve(&rhs);
    let resid = &xm * &w - &yv;
    let f_star = resid.norm_squared() / n as f64;
    Ok((w.iter().copied().collect(), f_star))
}

/// Averages the shared estimate over every size-`b` minibatch with a fixed
/// z and returns ‖average − fullbatch‖∞ / ‖fullbatch‖∞.
pub fn unbiasedness_check<O: Objective + ?Sized>(
    obj: &O,
    theta: &ParamVector,
    z_seed: PerturbationSeed,
    b: usize,
    cfg: &SpsaConfig,
) -> Result<f64> {
    let n = obj.num_samples();
    if n > MAX_ENUMERATION_N {
        return Err(ZoError::Contract(format!(
            "enumeration needs n <= {MAX_ENUMERATION_N}, got {n}"
        )));
    }
    if b == 0 || b > n {
        return Err(ZoError::Contract(format!("batch size must be in 1..={n}, got {b}")));
    }
    let d = theta.dim();
    let mut avg = vec![0.0; d];
    let mut count = 0usize;
    for combo in (0..n).combinations(b) {
        let batch = Minibatch::new(combo, n, SamplingMode::WithoutReplacement)?;
        let mut t = theta.clone();
        let est = spsa_batch_shared(obj, &mut t, &batch, z_seed, cfg)?;
        for (a, v) in avg.iter_mut().zip(materialize(&est)) {
            *a += v;
        }
        count += 1;
    }
    avg.iter_mut().for_each(|a| *a /= count as f64);
    let mut t = theta.clone();
    let full = materialize(&spsa_batch_shared(obj, &mut t, &Minibatch::full(n), z_seed, cfg)?);
    let scale = inf_norm(&full);
    let dev = avg.iter().zip(&full).map(|(a, f)| (a - f).abs()).fold(0.0, f64::max);
    Ok(if scale > 0.0 { dev / scale } else { dev })
}

/// Control variates u_i for a fixed z at (θ, θ′).
pub fn control_variates<O: Objective + ?Sized>(
    obj: &O,
    theta: &ParamVector,
    theta_prime: &ParamVector,
    z_seed: PerturbationSeed,
    cfg: &SpsaConfig,
) -> Result<Vec<Vec<f64>>> {
    let n = obj.num_samples();
    if n > MAX_CONTROL_VARIATE_N {
        return Err(ZoError::Contract(format!(
            "control variates need n <= {MAX_CONTROL_VARIATE_N}, got {n}"
        )));
    }
    let at = |p: &ParamVector, i: Option<usize>| -> Result<Vec<f64>> {
        let mut t = p.clone();
        let est = match i {
            Some(i) => spsa_sample(obj, &mut t, i, z_seed, cfg)?,
            None => spsa_batch_shared(obj, &mut t, &Minibatch::full(n), z_seed, cfg)?,
        };
        Ok(materialize(&est))
    };
    let full_a = at(theta, None)?;
    let full_b = at(theta_prime, None)?;
    (0..n)
        .map(|i| {
            let a = at(theta, Some(i))?;
            let b = at(theta_prime, Some(i))?;
            Ok((0..a.len()).map(|k| a[k] - b[k] - (full_a[k] - full_b[k])).collect())
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ControlVariateReport {
    /// ‖Σ_i u_i‖∞.
    pub sum_inf_norm: f64,
    /// max_i ‖u_i‖∞.
    pub max_u_inf_norm: f64,
    /// ‖(1/n) Σ_i u_i‖², the cross-moment over all i.i.d. index pairs.
    pub population_cross_moment: f64,
}

/// Exact zero-sum check on the control variates.
pub fn control_variate_check<O: Objective + ?Sized>(
    obj: &O,
    theta: &ParamVector,
    theta_prime: &ParamVector,
    z_seed: PerturbationSeed,
    cfg: &SpsaConfig,
) -> Result<ControlVariateReport> {
    let u = control_variates(obj, theta, theta_prime, z_seed, cfg)?;
    Ok(control_variate_report(&u))
}

pub fn control_variate_report(u: &[Vec<f64>]) -> ControlVariateReport {
    let n = u.len() as f64;
    let d = u.first().map_or(0, Vec::len);
    let sum: Vec<f64> = (0..d).map(|k| u.iter().map(|v| v[k]).sum()).collect();
    ControlVariateReport {
        sum_inf_norm: inf_norm(&sum),
        max_u_inf_norm: u.iter().map(|v| inf_norm(v)).fold(0.0, f64::max),
        population_cross_moment: sum.iter().map(|s| (s / n) * (s / n)).sum(),
    }
}

/// |(1/M) Σ_m u_{i_m}·u_{j_m}| over M index pairs drawn uniformly with
/// replacement.
pub fn cross_moment_estimate(u: &[Vec<f64>], m: usize, seed: u64) -> f64 {
    let n = u.len();
    let mut rng = chacha(seed);
    let total: f64 = (0..m)
        .map(|_| {
            let (i, j) = (rng.random_range(0..n), rng.random_range(0..n));
            u[i].iter().zip(&u[j]).map(|(a, b)| a * b).sum::<f64>()
        })
        .sum();
    (total / m as f64).abs()
}

/// Trace-of-covariance comparison between the plain shared minibatch
/// estimator and the variance-reduced blended direction.
#[derive(Clone, Debug, PartialEq)]
pub struct VarianceProbe {
    pub plain_trace: f64,
    pub blended_trace: f64,
    pub plain_stderr: f64,
    pub blended_stderr: f64,
    pub samples: usize,
}

impl VarianceProbe {
    /// Whether the blended variance is below the plain one by at least
    /// `sigmas` combined standard errors.
    pub fn blended_lower_by(&self, sigmas: f64) -> bool {
        let se = (self.plain_stderr.powi(2) + self.blended_stderr.powi(2)).sqrt();
        self.blended_trace + sigmas * se < self.plain_trace
    }
}

/// For each trial draws a batch of size `b`, a minibatch direction z and an
/// independent anchor direction z′, then forms
/// plain = ∇̄f_𝓘(θ) and blended = ∇̄f_𝓘(θ) − ∇̄f_𝓘(θ̄) + ∇̄f(θ̄).
pub fn estimator_variance_probe<O: Objective + ?Sized>(
    obj: &O,
    theta: &ParamVector,
    theta_bar: &ParamVector,
    b: usize,
    num_seeds: usize,
    cfg: &SpsaConfig,
    seed: u64,
) -> Result<VarianceProbe> {
    if num_seeds < 100 {
        return Err(ZoError::Contract(format!(
            "variance probe needs >= 100 seeds, got {num_seeds}"
        )));
    }
    let n = obj.num_samples();
    let d = theta.dim();
    let mut rng = chacha(seed);
    let mut plain = Vec::with_capacity(num_seeds);
    let mut blended = Vec::with_capacity(num_seeds);
    for _ in 0..num_seeds {
        let batch = Minibatch::sample(&mut rng, n, b, SamplingMode::WithoutReplacement)?;
        let z = PerturbationSeed::new(rng.random());
        let z_anchor = PerturbationSeed::new(rng.random());
        let at_theta = materialize(&spsa_batch_shared(obj, &mut theta.clone(), &batch, z, cfg)?);
        let at_bar = materialize(&spsa_batch_shared(obj, &mut theta_bar.clone(), &batch, z, cfg)?);
        let anchor = materialize(&spsa_batch_shared(
            obj,
            &mut theta_bar.clone(),
            &Minibatch::full(n),
            z_anchor,
            cfg,
        )?);
        blended.push((0..d).map(|k| at_theta[k] - at_bar[k] + anchor[k]).collect::<Vec<_>>());
        plain.push(at_theta);
    }
    let (plain_trace, plain_stderr) = trace_covariance(&plain);
    let (blended_trace, blended_stderr) = trace_covariance(&blended);
    Ok(VarianceProbe {
        plain_trace,
        blended_trace,
        plain_stderr,
        blended_stderr,
        samples: num_seeds,
    })
}

/// Unbiased trace of the sample covariance and the standard error of that
/// estimate.
fn trace_covariance(v: &[Vec<f64>]) -> (f64, f64) {
    let k = v.len() as f64;
    let d = v[0].len();
    let mean: Vec<f64> = (0..d).map(|j| v.iter().map(|x| x[j]).sum::<f64>() / k).collect();
    let dev: Vec<f64> = v
        .iter()
        .map(|x| x.iter().zip(&mean).map(|(a, m)| (a - m) * (a - m)).sum::<f64>() * k / (k - 1.0))
        .collect();
    let trace = dev.iter().sum::<f64>() / k;
    let var = dev.iter().map(|s| (s - trace) * (s - trace)).sum::<f64>() / (k - 1.0);
    (trace, (var / k).sqrt())
}

/// Largest relative error between the analytic gradient and central
/// differences with step `h` over `coords`, with the denominator floored at
/// `floor`.
pub fn gradient_check<O: Objective + ?Sized>(
    obj: &O,
    theta: &[f64],
    coords: &[usize],
    h: f64,
    floor: f64,
) -> Result<f64> {
    let g = obj.full_grad(theta)?;
    let mut probe = theta.to_vec();
    let mut worst: f64 = 0.0;
    for &j in coords {
        let orig = probe[j];
        probe[j] = orig + h;
        let plus = obj.full_loss(&probe)?;
        probe[j] = orig - h;
        let minus = obj.full_loss(&probe)?;
        probe[j] = orig;
        let fd = (plus - minus) / (2.0 * h);
        worst = worst.max((fd - g[j]).abs() / g[j].abs().max(floor));
    }
    Ok(worst)
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::{make_least_squares, make_logistic, LeastSquaresProblem};

    fn probe_theta(d: usize, seed: u64) -> ParamVector {
        let mut rng = chacha(seed);
        ParamVector::new((0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn hand_solvable_normal_equations() {
        let (w, f) = ls_normal_equations(&[1.0, 1.0], &[1.0, 3.0], 2, 1).unwrap();
        assert!((w[0] - 2.0).abs() < 1e-15);
        assert!((f - 1.0).abs() < 1e-15);
    }

    #[test]
    fn singular_design_is_reported() {
        let x = [1.0, 2.0, 2.0, 4.0, 3.0, 6.0];
        assert!(matches!(
            ls_normal_equations(&x, &[1.0, 2.0, 3.0], 3, 2),
            Err(ZoError::Singular(_))
        ));
    }

    #[test]
    fn gradient_vanishes_at_solution() {
        let p = make_least_squares(200, 10, 0.5, 3).unwrap();
        let g = p.full_grad(&p.w_ls).unwrap();
        assert!(inf_norm(&g) < 1e-8);
        let noiseless = make_least_squares(50, 5, 0.0, 3).unwrap();
        assert!(noiseless.f_star < 1e-16);
    }

    #[test]
    fn full_batch_enumeration_is_exact() {
        let p = make_least_squares(6, 5, 0.1, 1).unwrap();
        let theta = probe_theta(5, 2);
        let cfg = SpsaConfig::with_mu(1e-2).unwrap();
        assert_eq!(
            unbiasedness_check(&p, &theta, PerturbationSeed::new(4), 6, &cfg).unwrap(),
            0.0
        );
    }

    #[test]
    fn enumeration_is_unbiased_for_every_batch_size() {
        let p = make_least_squares(6, 5, 0.1, 1).unwrap();
        let cfg = SpsaConfig::with_mu(1e-2).unwrap();
        for b in 1..=3 {
            for k in 0..5 {
                let theta = probe_theta(5, 10 + k);
                let dev = unbiasedness_check(&p, &theta, PerturbationSeed::new(k), b, &cfg).unwrap();
                assert!(dev < 1e-12, "b={b} probe {k}: {dev:e}");
            }
        }
    }

    #[test]
    fn enumeration_rejects_large_n() {
        let p = make_least_squares(13, 2, 0.1, 1).unwrap();
        let cfg = SpsaConfig::default();
        assert!(unbiasedness_check(&p, &ParamVector::zeros(2), PerturbationSeed::new(0), 2, &cfg).is_err());
    }

    #[test]
    fn control_variates_sum_to_zero() {
        let cfg = SpsaConfig::with_mu(1e-3).unwrap();
        let ls = make_least_squares(32, 6, 0.1, 8).unwrap();
        let lr = make_logistic(32, 6, 2.0, 8).unwrap();
        let (a, b) = (probe_theta(6, 1), probe_theta(6, 2));
        for r in [
            control_variate_check(&ls, &a, &b, PerturbationSeed::new(3), &cfg).unwrap(),
            control_variate_check(&lr, &a, &b, PerturbationSeed::new(3), &cfg).unwrap(),
        ] {
            assert!(r.sum_inf_norm < 1e-10 * r.max_u_inf_norm, "{r:?}");
            assert!(r.population_cross_moment < 1e-20);
        }
    }

    #[test]
    fn identical_points_give_zero_variates() {
        let ls = make_least_squares(8, 3, 0.1, 8).unwrap();
        let a = probe_theta(3, 1);
        let u = control_variates(&ls, &a, &a, PerturbationSeed::new(1), &SpsaConfig::default()).unwrap();
        assert!(u.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn cross_moment_shrinks_with_more_pairs() {
        let ls = make_least_squares(32, 6, 0.1, 8).unwrap();
        let u = control_variates(
            &ls,
            &probe_theta(6, 1),
            &probe_theta(6, 2),
            PerturbationSeed::new(3),
            &SpsaConfig::default(),
        )
        .unwrap();
        let avg = |m| (0..10).map(|r| cross_moment_estimate(&u, m, r)).sum::<f64>() / 10.0;
        assert!(avg(100) > 3.0 * avg(10_000));
    }

    #[test]
    fn blended_equals_anchor_when_batch_is_everything() {
        let p = make_least_squares(16, 4, 0.1, 2).unwrap();
        let theta = probe_theta(4, 3);
        let cfg = SpsaConfig::with_mu(1e-3).unwrap();
        let probe = estimator_variance_probe(&p, &theta, &theta, 16, 200, &cfg, 5).unwrap();
        assert!(probe.blended_trace > 0.0);
        // b = n: plain and blended are the same fullbatch estimator up to the draw of z
        assert!((probe.blended_trace / probe.plain_trace - 1.0).abs() < 0.5);
    }

    #[test]
    fn variance_is_reduced_near_the_optimum() {
        let p = make_least_squares(256, 10, 0.01, 4).unwrap();
        let mut rng = chacha(9);
        let theta = ParamVector::new(p.w_ls.iter().map(|w| w + 1e-2 * rng.random_range(-1.0..1.0)).collect()).unwrap();
        let cfg = SpsaConfig::with_mu(1e-3).unwrap();
        let probe = estimator_variance_probe(&p, &theta, &theta, 8, 300, &cfg, 1).unwrap();
        assert!(probe.blended_lower_by(3.0), "{probe:?}");
    }

    #[test]
    fn gradient_check_catches_a_wrong_gradient() {
        struct Wrong(LeastSquaresProblem);
        impl Objective for Wrong {
            fn num_samples(&self) -> usize {
                self.0.n
            }
            fn dim(&self) -> usize {
                self.0.d
            }
            fn loss(&self, t: &[f64], i: usize) -> f64 {
                self.0.loss(t, i)
            }
            fn add_grad(&self, t: &[f64], i: usize, w: f64, out: &mut [f64]) -> Result<()> {
                self.0.add_grad(t, i, 0.5 * w, out)
            }
        }
        let p = make_least_squares(20, 3, 0.1, 1).unwrap();
        let theta = probe_theta(3, 4);
        assert!(gradient_check(&p, &theta, &[0, 1, 2], 1e-5, 1e-6).unwrap() < 1e-6);
        assert!(gradient_check(&Wrong(p), &theta, &[0, 1, 2], 1e-5, 1e-6).unwrap() > 0.1);
    }
}
