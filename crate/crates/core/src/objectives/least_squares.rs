use rand_distr::{Distribution, Normal, StandardNormal};

use super::Objective;
use crate::error::{Result, ZoError};
use crate::oracles::ls_normal_equations;
use crate::rng::chacha;

/// Regeneration attempts before a singular design is reported as an error.
const MAX_REGENERATIONS: u64 = 16;

/// Linear least squares with per-sample loss f_i(w) = (x_i·w − y_i)² and
/// f(w) = (1/n) Σ f_i(w), i.e. ‖Xw − y‖² / n.
#[derive(Clone, Debug)]
pub struct LeastSquaresProblem {
    pub n: usize,
    pub d: usize,
    /// Row-major n×d design matrix.
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// Planted weights (all zero when built from explicit data).
    pub w_star: Vec<f64>,
    pub noise_std: f64,
    /// Normal-equation solution.
    pub w_ls: Vec<f64>,
    /// Optimal mean loss f(w_ls).
    pub f_star: f64,
    /// Seed that produced this instance after any regenerations.
    pub seed_used: u64,
    pub regenerations: u64,
}

/// Builds a reproducible instance: X i.i.d. standard normal, w⋆ i.i.d.
/// N(0, 1/d) so that ‖w⋆‖ ≈ 1, y = Xw⋆ + N(0, noise_std²).
pub fn make_least_squares(n: usize, d: usize, noise_std: f64, seed: u64) -> Result<LeastSquaresProblem> {
    if d == 0 || n < d {
        return Err(ZoError::Config(format!(
            "least squares needs n >= d >= 1, got n={n}, d={d}"
        )));
    }
    if !(noise_std >= 0.0 && noise_std.is_finite()) {
        return Err(ZoError::Config(format!("noise_std must be >= 0, got {noise_std}")));
    }
    let mut last_err = None;
    for attempt in 0..MAX_REGENERATIONS {
        let seed_used = seed.wrapping_add(attempt);
        let mut rng = chacha(seed_used);
        let x: Vec<f64> = (0..n * d).map(|_| StandardNormal.sample(&mut rng)).collect();
        let w_scale = Normal::new(0.0, 1.0 / (d as f64).sqrt()).expect("valid normal");
        let w_star: Vec<f64> = (0..d).map(|_| w_scale.sample(&mut rng)).collect();
        let noise = Normal::new(0.0, noise_std).expect("valid normal");
        let y: Vec<f64> = x
            .chunks_exact(d)
            .map(|row| dot(row, &w_star) + noise.sample(&mut rng))
            .collect();
        match LeastSquaresProblem::build(x, y, w_star, noise_std, n, d) {
            Ok(mut p) => {
                p.seed_used = seed_used;
                p.regenerations = attempt;
                return Ok(p);
            }
            Err(e @ ZoError::Singular(_)) => last_err = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last_err.expect("at least one attempt"))
}

impl LeastSquaresProblem {
    /// Instance from explicit data (row-major `x`).
    pub fn from_data(x: Vec<f64>, y: Vec<f64>, n: usize, d: usize) -> Result<Self> {
        if x.len() != n * d || y.len() != n || d == 0 || n == 0 {
            return Err(ZoError::Config("x must be n×d and y length n".into()));
        }
        Self::build(x, y, vec![0.0; d], 0.0, n, d)
    }

    fn build(x: Vec<f64>, y: Vec<f64>, w_star: Vec<f64>, noise_std: f64, n: usize, d: usize) -> Result<Self> {
        let (w_ls, f_star) = ls_normal_equations(&x, &y, n, d)?;
        Ok(Self {
            n,
            d,
            x,
            y,
            w_star,
            noise_std,
            w_ls,
            f_star,
            seed_used: 0,
            regenerations: 0,
        })
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.d..(i + 1) * self.d]
    }

    #[inline]
    pub fn residual(&self, w: &[f64], i: usize) -> f64 {
        dot(self.row(i), w) - self.y[i]
    }

    /// f(w) − f⋆.
    pub fn gap(&self, w: &[f64]) -> Result<f64> {
        Ok(self.full_loss(w)? - self.f_star)
    }
}

impl Objective for LeastSquaresProblem {
    fn num_samples(&self) -> usize {
        self.n
    }

    fn dim(&self) -> usize {
        self.d
    }

    fn loss(&self, theta: &[f64], index: usize) -> f64 {
        let r = self.residual(theta, index);
        r * r
    }

    fn add_grad(&self, theta: &[f64], index: usize, weight: f64, out: &mut [f64]) -> Result<()> {
        let c = 2.0 * weight * self.residual(theta, index);
        for (o, x) in out.iter_mut().zip(self.row(index)) {
            *o += c * x;
        }
        Ok(())
    }

    fn has_grad(&self) -> bool {
        true
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
