//! Oracle suite behind the `verify` subcommand.

use std::fmt;

use rand::Rng;

use crate::error::Result;
use crate::estimators::{perturb_in_place, spsa_batch_shared, SpsaConfig};
use crate::harness::accounting::{account_memory, AccountingMode, OVERHEAD_SLOTS};
use crate::objectives::{
    make_least_squares, make_logistic, make_mlp2, synthetic_digits, CountingObjective, Minibatch, Objective,
    SamplingMode, SeparableQuadratic,
};
use crate::optimizers::{run, Budget, MezoSvrgConfig, OptimizerConfig, OptimizerKind, RunSpec};
use crate::oracles::{
    control_variate_check, control_variates, cross_moment_estimate, estimator_variance_probe, gradient_check,
    ls_normal_equations, unbiasedness_check,
};
use crate::params::ParamVector;
use crate::rng::{chacha, regenerate_z, PerturbationSeed};
use crate::trajectory::replay;

#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {:<28} {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.detail
        )
    }
}

fn result(name: &'static str, passed: bool, detail: String) -> CheckResult {
    CheckResult { name, passed, detail }
}

fn random_theta(d: usize, scale: f64, rng: &mut impl Rng) -> ParamVector {
    ParamVector::new((0..d).map(|_| scale * (2.0 * rng.random::<f64>() - 1.0)).collect()).expect("finite")
}

fn minibatch_unbiasedness() -> Result<CheckResult> {
    let p = make_least_squares(6, 5, 0.1, 11)?;
    let cfg = SpsaConfig::with_mu(1e-2)?;
    let mut rng = chacha(1);
    let mut worst: f64 = 0.0;
    for probe in 0..10 {
        let theta = random_theta(5, 1.0, &mut rng);
        for b in 1..=3 {
            worst = worst.max(unbiasedness_check(&p, &theta, PerturbationSeed::new(probe), b, &cfg)?);
        }
    }
    Ok(result(
        "minibatch unbiasedness",
        worst < 1e-12,
        format!("max relative deviation {worst:.3e}"),
    ))
}

fn control_variate_sum() -> Result<CheckResult> {
    let cfg = SpsaConfig::default();
    let mut rng = chacha(2);
    let ls = make_least_squares(32, 6, 0.1, 3)?;
    let lg = make_logistic(32, 6, 1.5, 4)?;
    let mut worst: f64 = 0.0;
    for (obj, d) in [(&ls as &dyn Objective, 6), (&lg as &dyn Objective, 6)] {
        let (a, b) = (random_theta(d, 1.0, &mut rng), random_theta(d, 1.0, &mut rng));
        let r = control_variate_check(obj, &a, &b, PerturbationSeed::new(5), &cfg)?;
        worst = worst.max(r.sum_inf_norm / r.max_u_inf_norm.max(f64::MIN_POSITIVE));
    }
    let u = control_variates(
        &ls,
        &random_theta(6, 1.0, &mut rng),
        &random_theta(6, 1.0, &mut rng),
        PerturbationSeed::new(6),
        &cfg,
    )?;
    let small: f64 = (0..10).map(|r| cross_moment_estimate(&u, 1_000, r)).sum::<f64>() / 10.0;
    let large: f64 = (0..10)
        .map(|r| cross_moment_estimate(&u, 100_000, 100 + r))
        .sum::<f64>()
        / 10.0;
    Ok(result(
        "control variates",
        worst < 1e-10 && small >= 3.0 * large,
        format!("sum ratio {worst:.3e}, cross-moment {small:.3e} -> {large:.3e}"),
    ))
}

fn central_difference() -> Result<CheckResult> {
    let q = SeparableQuadratic::random(8, 12, 7);
    let cfg = SpsaConfig::default();
    let mut rng = chacha(3);
    let mut worst: f64 = 0.0;
    for probe in 0..100 {
        let mut theta = random_theta(12, 2.0, &mut rng);
        let batch = Minibatch::sample(&mut rng, 8, 3, SamplingMode::WithoutReplacement)?;
        let seed = PerturbationSeed::new(1000 + probe);
        let est = spsa_batch_shared(&q, &mut theta, &batch, seed, &cfg)?;
        let mut g = vec![0.0; 12];
        for &i in batch.indices() {
            q.add_grad(&theta, i, 1.0 / batch.len() as f64, &mut g)?;
        }
        let dir: f64 = g.iter().zip(regenerate_z(seed, 12)).map(|(a, z)| a * z).sum();
        worst = worst.max((est.coeff() - dir).abs() / (1.0 + dir.abs()));
    }
    Ok(result(
        "central difference on quadratics",
        worst < 1e-9,
        format!("max scaled error {worst:.3e}"),
    ))
}

fn restore() -> Result<CheckResult> {
    let mut rng = chacha(4);
    let orig = random_theta(100_000, 1.0, &mut rng);
    let mut worst: f64 = 0.0;
    for s in 0..10 {
        let seed = PerturbationSeed::new(s);
        let mut t = orig.clone();
        perturb_in_place(&mut t, seed, 1, 1e-3)?;
        perturb_in_place(&mut t, seed, -2, 1e-3)?;
        perturb_in_place(&mut t, seed, 1, 1e-3)?;
        for (a, b) in t.iter().zip(orig.iter()) {
            worst = worst.max((a - b).abs() / b.abs().max(f64::MIN_POSITIVE));
        }
    }
    Ok(result(
        "perturbation restore",
        worst < 1e-12,
        format!("max relative drift {worst:.3e}"),
    ))
}

fn seed_replay() -> Result<CheckResult> {
    let p = make_least_squares(200, 20, 0.01, 5)?;
    let counter = CountingObjective::new(&p);
    let theta0 = ParamVector::zeros(20);
    let cfg = OptimizerConfig::MezoSvrg(MezoSvrgConfig::least_squares_defaults(200));
    let mut spec = RunSpec::new(cfg, 9, Budget::steps(200));
    spec.record_trajectory = true;
    spec.eval_every = 0;
    let out = run(&counter, &theta0, &spec)?;
    let log = out.trajectory.expect("recorded");
    counter.reset();
    let ok = replay(&log, &theta0, 200)?.bitwise_eq(&out.theta);
    let queries = counter.loss_queries();
    Ok(result(
        "seed replay",
        ok && queries == 0,
        format!("bit-exact={ok}, queries during replay {queries}"),
    ))
}

fn memory_model() -> Result<CheckResult> {
    let d = 1_000_000;
    let slots = |k, m| account_memory(k, m, d).map(|x| x.peak_slots());
    let rows = [
        (slots(OptimizerKind::Mezo, AccountingMode::StoreG)?, 1),
        (slots(OptimizerKind::MezoSvrg, AccountingMode::RecomputeG)?, 2),
        (slots(OptimizerKind::MezoSvrg, AccountingMode::StoreG)?, 3),
        (slots(OptimizerKind::ZoSvrg, AccountingMode::NaiveSvrg)?, 5),
    ];
    let ok = rows.iter().all(|&(s, k)| s == k * d + OVERHEAD_SLOTS);
    let ratios: Vec<String> = rows
        .iter()
        .map(|(s, _)| format!("{}x", (s - OVERHEAD_SLOTS) / d))
        .collect();
    Ok(result("memory model", ok, format!("slot ratios {}", ratios.join("/"))))
}

fn normal_equations() -> Result<CheckResult> {
    let p = make_least_squares(300, 15, 0.1, 6)?;
    let (w, f_star) = ls_normal_equations(&p.x, &p.y, p.n, p.d)?;
    let g = p.full_grad(&w)?;
    let gmax = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut rng = chacha(7);
    let convex = (0..100).all(|_| {
        let mut dir: Vec<f64> = (0..15).map(|_| rng.random::<f64>() - 0.5).collect();
        let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
        dir.iter_mut().zip(&w).for_each(|(v, wi)| *v = wi + 1e-2 * *v / norm);
        p.full_loss(&dir).is_ok_and(|f| f >= f_star)
    });
    Ok(result(
        "normal equations",
        gmax < 1e-8 && convex,
        format!("|grad f(w_ls)|_inf {gmax:.3e}, convexity probe {convex}"),
    ))
}

fn variance_reduction() -> Result<CheckResult> {
    let p = make_least_squares(256, 10, 0.1, 8)?;
    let mut rng = chacha(9);
    let mut theta = ParamVector::new(p.w_ls.clone())?;
    theta
        .as_mut_slice()
        .iter_mut()
        .for_each(|t| *t += 0.05 * (rng.random::<f64>() - 0.5));
    let mut bar = theta.clone();
    bar.as_mut_slice()
        .iter_mut()
        .for_each(|t| *t += 0.02 * (rng.random::<f64>() - 0.5));
    let r = estimator_variance_probe(&p, &theta, &bar, 8, 300, &SpsaConfig::default(), 10)?;
    Ok(result(
        "variance reduction",
        r.blended_lower_by(3.0),
        format!("plain {:.3e}, blended {:.3e}", r.plain_trace, r.blended_trace),
    ))
}

fn gradients() -> Result<CheckResult> {
    let lg = make_logistic(40, 8, 1.0, 12)?;
    let mut rng = chacha(13);
    let theta = random_theta(8, 0.5, &mut rng);
    let coords: Vec<usize> = (0..8).collect();
    let e1 = gradient_check(&lg, &theta, &coords, 1e-5, 1e-6)?;
    let (mlp, t0) = make_mlp2(synthetic_digits(8, 6, 3, 14)?, 15)?;
    let coords: Vec<usize> = (0..mlp.dim()).step_by(mlp.dim().div_ceil(50)).collect();
    let e2 = gradient_check(&mlp, &t0, &coords, 1e-5, 1e-6)?;
    Ok(result(
        "analytic gradients",
        e1 < 1e-6 && e2 < 1e-5,
        format!("logistic {e1:.3e}, mlp {e2:.3e}"),
    ))
}

type Check = (&'static str, fn() -> Result<CheckResult>);

/// Runs every check; errors are reported as failures.
pub fn run_all() -> Vec<CheckResult> {
    let checks: [Check; 9] = [
        ("minibatch unbiasedness", minibatch_unbiasedness),
        ("control variates", control_variate_sum),
        ("central difference on quadratics", central_difference),
        ("perturbation restore", restore),
        ("seed replay", seed_replay),
        ("memory model", memory_model),
        ("normal equations", normal_equations),
        ("variance reduction", variance_reduction),
        ("analytic gradients", gradients),
    ];
    checks
        .into_iter()
        .map(|(name, f)| f().unwrap_or_else(|e| result(name, false, format!("error: {e}"))))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oracle_suite_passes() {
        for r in run_all() {
            assert!(r.passed, "{r}");
        }
    }
}
