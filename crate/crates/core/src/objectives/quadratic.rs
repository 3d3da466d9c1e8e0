use rand_distr::{Distribution, StandardNormal, Uniform};

use super::Objective;
use crate::error::Result;
use crate::rng::chacha;

/// f_i(θ) = ½·a_i·‖θ − c_i‖², a cheap quadratic whose loss evaluation
/// allocates nothing. Used for memory measurements and algebraic tests.
#[derive(Clone, Debug)]
pub struct SeparableQuadratic {
    n: usize,
    d: usize,
    scales: Vec<f64>,
    centers: Vec<f64>,
}

impl SeparableQuadratic {
    pub fn new(scales: Vec<f64>, centers: Vec<f64>, d: usize) -> Self {
        let n = scales.len();
        assert_eq!(centers.len(), n * d, "centers must be n×d");
        Self { n, d, scales, centers }
    }

    pub fn random(n: usize, d: usize, seed: u64) -> Self {
        let mut rng = chacha(seed);
        let scale = Uniform::new(0.5, 2.0).expect("valid range");
        let scales = (0..n).map(|_| scale.sample(&mut rng)).collect();
        let centers = (0..n * d).map(|_| StandardNormal.sample(&mut rng)).collect();
        Self::new(scales, centers, d)
    }

    fn center(&self, i: usize) -> &[f64] {
        &self.centers[i * self.d..(i + 1) * self.d]
    }
}

impl Objective for SeparableQuadratic {
    fn num_samples(&self) -> usize {
        self.n
    }

    fn dim(&self) -> usize {
        self.d
    }

    fn loss(&self, theta: &[f64], index: usize) -> f64 {
        let sq: f64 = theta
            .iter()
            .zip(self.center(index))
            .map(|(t, c)| (t - c) * (t - c))
            .sum();
        0.5 * self.scales[index] * sq
    }

    fn add_grad(&self, theta: &[f64], index: usize, weight: f64, out: &mut [f64]) -> Result<()> {
        let a = weight * self.scales[index];
        for ((o, t), c) in out.iter_mut().zip(theta).zip(self.center(index)) {
            *o += a * (t - c);
        }
        Ok(())
    }

    fn has_grad(&self) -> bool {
        true
    }
}
