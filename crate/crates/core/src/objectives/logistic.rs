use rand_distr::{Distribution, StandardNormal};

use super::least_squares::dot;
use super::Objective;
use crate::error::{Result, ZoError};
use crate::rng::chacha;

/// Binary logistic regression on two Gaussian classes.
///
/// Labels are ±1, features x_i ~ N(y_i·(s/2)·u, I) for a random unit vector u
/// and separation s. Loss f_i(θ) = ln(1 + exp(−y_i θ·x_i)); no bias term.
#[derive(Clone, Debug)]
pub struct LogisticProblem {
    pub n: usize,
    pub d: usize,
    pub x: Vec<f64>,
    pub labels: Vec<f64>,
    pub separation: f64,
}

pub fn make_logistic(n: usize, d: usize, separation: f64, seed: u64) -> Result<LogisticProblem> {
    if n == 0 || d == 0 {
        return Err(ZoError::Config("logistic needs n, d >= 1".into()));
    }
    if !(separation >= 0.0 && separation.is_finite()) {
        return Err(ZoError::Config(format!("separation must be >= 0, got {separation}")));
    }
    let mut rng = chacha(seed);
    let mut dir: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
    let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    dir.iter_mut().for_each(|v| *v *= 0.5 * separation / norm);
    let mut x = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let y = if i % 2 == 0 { 1.0 } else { -1.0 };
        labels.push(y);
        for m in &dir {
            let e: f64 = StandardNormal.sample(&mut rng);
            x.push(y * m + e);
        }
    }
    Ok(LogisticProblem {
        n,
        d,
        x,
        labels,
        separation,
    })
}

/// ln(1 + e^{-m}) without overflow.
#[inline]
fn softplus_neg(m: f64) -> f64 {
    if m > 0.0 {
        (-m).exp().ln_1p()
    } else {
        -m + m.exp().ln_1p()
    }
}

/// σ(−m) = 1 / (1 + e^{m}).
#[inline]
fn sigmoid_neg(m: f64) -> f64 {
    if m > 0.0 {
        let e = (-m).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + m.exp())
    }
}

impl LogisticProblem {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.d..(i + 1) * self.d]
    }

    fn margin(&self, theta: &[f64], i: usize) -> f64 {
        self.labels[i] * dot(self.row(i), theta)
    }
}

impl Objective for LogisticProblem {
    fn num_samples(&self) -> usize {
        self.n
    }

    fn dim(&self) -> usize {
        self.d
    }

    fn loss(&self, theta: &[f64], index: usize) -> f64 {
        softplus_neg(self.margin(theta, index))
    }

    fn add_grad(&self, theta: &[f64], index: usize, weight: f64, out: &mut [f64]) -> Result<()> {
        let c = -weight * self.labels[index] * sigmoid_neg(self.margin(theta, index));
        for (o, x) in out.iter_mut().zip(self.row(index)) {
            *o += c * x;
        }
        Ok(())
    }

    fn has_grad(&self) -> bool {
        true
    }

    /// Training accuracy.
    fn metric(&self, theta: &[f64]) -> Option<f64> {
        let correct = (0..self.n).filter(|&i| self.margin(theta, i) > 0.0).count();
        Some(correct as f64 / self.n as f64)
    }
}
