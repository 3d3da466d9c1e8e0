use rand_distr::{Distribution, Uniform};

use super::{Dataset, Objective};
use crate::error::{Result, ZoError};
use crate::params::ParamVector;
use crate::rng::chacha;

pub const HIDDEN1: usize = 32;
pub const HIDDEN2: usize = 16;

/// Two-hidden-layer perceptron `input → 32 → 16 → classes` with ReLU
/// activations and softmax cross-entropy.
///
/// θ layout, each weight matrix stored input-major (`w[j * fan_out + k]`
/// connects input j to unit k): `W1, b1, W2, b2, W3, b3`.
#[derive(Clone, Debug)]
pub struct Mlp2Problem {
    pub data: Dataset,
    sizes: [usize; 4],
    offsets: Offsets,
}

#[derive(Clone, Copy, Debug)]
struct Offsets {
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
    w3: usize,
    b3: usize,
    end: usize,
}

impl Offsets {
    fn new([i, h1, h2, c]: [usize; 4]) -> Self {
        let w1 = 0;
        let b1 = w1 + i * h1;
        let w2 = b1 + h1;
        let b2 = w2 + h1 * h2;
        let w3 = b2 + h2;
        let b3 = w3 + h2 * c;
        Self {
            w1,
            b1,
            w2,
            b2,
            w3,
            b3,
            end: b3 + c,
        }
    }
}

/// Builds the network for `dataset` and draws initial parameters from
/// U(±1/√fan_in) for every weight; biases start at zero.
pub fn make_mlp2(dataset: Dataset, seed: u64) -> Result<(Mlp2Problem, ParamVector)> {
    let problem = Mlp2Problem::new(dataset)?;
    let theta0 = problem.init_params(seed);
    Ok((problem, theta0))
}

struct Activations {
    h1: [f64; HIDDEN1],
    h2: [f64; HIDDEN2],
    logits: Vec<f64>,
}

impl Mlp2Problem {
    pub fn new(data: Dataset) -> Result<Self> {
        if data.n == 0 || data.dim == 0 || data.classes < 2 {
            return Err(ZoError::Config("MLP needs a nonempty dataset with >= 2 classes".into()));
        }
        if data.features.len() != data.n * data.dim {
            return Err(ZoError::DimensionMismatch {
                expected: data.n * data.dim,
                actual: data.features.len(),
            });
        }
        let sizes = [data.dim, HIDDEN1, HIDDEN2, data.classes];
        Ok(Self {
            data,
            sizes,
            offsets: Offsets::new(sizes),
        })
    }

    /// Layer widths `[input, 32, 16, classes]`.
    pub fn layer_sizes(&self) -> [usize; 4] {
        self.sizes
    }

    pub fn param_count(&self) -> usize {
        self.offsets.end
    }

    pub fn init_params(&self, seed: u64) -> ParamVector {
        let mut rng = chacha(seed);
        let mut theta = vec![0.0; self.param_count()];
        let o = self.offsets;
        let [i, h1, h2, _] = self.sizes;
        let mut fill = |range: std::ops::Range<usize>, fan_in: usize| {
            let a = 1.0 / (fan_in as f64).sqrt();
            let u = Uniform::new_inclusive(-a, a).expect("valid range");
            for v in &mut theta[range] {
                *v = u.sample(&mut rng);
            }
        };
        fill(o.w1..o.b1, i);
        fill(o.w2..o.b2, h1);
        fill(o.w3..o.b3, h2);
        ParamVector::new(theta).expect("finite initialization")
    }

    fn forward(&self, theta: &[f64], x: &[f64]) -> Activations {
        let o = self.offsets;
        let classes = self.sizes[3];
        let mut h1 = [0.0; HIDDEN1];
        h1.copy_from_slice(&theta[o.b1..o.b1 + HIDDEN1]);
        for (j, &xj) in x.iter().enumerate() {
            if xj != 0.0 {
                let w = &theta[o.w1 + j * HIDDEN1..o.w1 + (j + 1) * HIDDEN1];
                for (h, wk) in h1.iter_mut().zip(w) {
                    *h += xj * wk;
                }
            }
        }
        h1.iter_mut().for_each(|h| *h = h.max(0.0));
        let mut h2 = [0.0; HIDDEN2];
        h2.copy_from_slice(&theta[o.b2..o.b2 + HIDDEN2]);
        for (j, &a) in h1.iter().enumerate() {
            let w = &theta[o.w2 + j * HIDDEN2..o.w2 + (j + 1) * HIDDEN2];
            for (h, wk) in h2.iter_mut().zip(w) {
                *h += a * wk;
            }
        }
        h2.iter_mut().for_each(|h| *h = h.max(0.0));
        let mut logits = theta[o.b3..o.b3 + classes].to_vec();
        for (j, &a) in h2.iter().enumerate() {
            let w = &theta[o.w3 + j * classes..o.w3 + (j + 1) * classes];
            for (l, wk) in logits.iter_mut().zip(w) {
                *l += a * wk;
            }
        }
        Activations { h1, h2, logits }
    }

    fn log_sum_exp(logits: &[f64]) -> f64 {
        let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        m + logits.iter().map(|l| (l - m).exp()).sum::<f64>().ln()
    }

    /// Predicted class for sample `i`.
    pub fn predict(&self, theta: &[f64], i: usize) -> usize {
        let act = self.forward(theta, self.data.row(i));
        act.logits
            .iter()
            .enumerate()
            .fold(
                (0, f64::NEG_INFINITY),
                |best, (k, &l)| if l > best.1 { (k, l) } else { best },
            )
            .0
    }
}

impl Objective for Mlp2Problem {
    fn num_samples(&self) -> usize {
        self.data.n
    }

    fn dim(&self) -> usize {
        self.param_count()
    }

    fn loss(&self, theta: &[f64], index: usize) -> f64 {
        let act = self.forward(theta, self.data.row(index));
        Self::log_sum_exp(&act.logits) - act.logits[self.data.labels[index]]
    }

    fn add_grad(&self, theta: &[f64], index: usize, weight: f64, out: &mut [f64]) -> Result<()> {
        if out.len() != self.param_count() {
            return Err(ZoError::DimensionMismatch {
                expected: self.param_count(),
                actual: out.len(),
            });
        }
        let o = self.offsets;
        let classes = self.sizes[3];
        let x = self.data.row(index);
        let act = self.forward(theta, x);
        let lse = Self::log_sum_exp(&act.logits);
        let mut dlogits: Vec<f64> = act.logits.iter().map(|l| (l - lse).exp()).collect();
        dlogits[self.data.labels[index]] -= 1.0;
        dlogits.iter_mut().for_each(|g| *g *= weight);

        let mut dh2 = [0.0; HIDDEN2];
        for j in 0..HIDDEN2 {
            let w = &theta[o.w3 + j * classes..o.w3 + (j + 1) * classes];
            let gw = &mut out[o.w3 + j * classes..o.w3 + (j + 1) * classes];
            for k in 0..classes {
                gw[k] += act.h2[j] * dlogits[k];
                dh2[j] += w[k] * dlogits[k];
            }
            if act.h2[j] <= 0.0 {
                dh2[j] = 0.0;
            }
        }
        for (g, d) in out[o.b3..o.b3 + classes].iter_mut().zip(&dlogits) {
            *g += d;
        }

        let mut dh1 = [0.0; HIDDEN1];
        for j in 0..HIDDEN1 {
            let w = &theta[o.w2 + j * HIDDEN2..o.w2 + (j + 1) * HIDDEN2];
            let gw = &mut out[o.w2 + j * HIDDEN2..o.w2 + (j + 1) * HIDDEN2];
            for k in 0..HIDDEN2 {
                gw[k] += act.h1[j] * dh2[k];
                dh1[j] += w[k] * dh2[k];
            }
            if act.h1[j] <= 0.0 {
                dh1[j] = 0.0;
            }
        }
        for (g, d) in out[o.b2..o.b2 + HIDDEN2].iter_mut().zip(&dh2) {
            *g += d;
        }

        for (j, &xj) in x.iter().enumerate() {
            if xj != 0.0 {
                let gw = &mut out[o.w1 + j * HIDDEN1..o.w1 + (j + 1) * HIDDEN1];
                for (g, d) in gw.iter_mut().zip(&dh1) {
                    *g += xj * d;
                }
            }
        }
        for (g, d) in out[o.b1..o.b1 + HIDDEN1].iter_mut().zip(&dh1) {
            *g += d;
        }
        Ok(())
    }

    fn has_grad(&self) -> bool {
        true
    }

    /// Training-set accuracy.
    fn metric(&self, theta: &[f64]) -> Option<f64> {
        let n = self.data.n;
        let correct = (0..n)
            .filter(|&i| self.predict(theta, i) == self.data.labels[i])
            .count();
        Some(correct as f64 / n as f64)
    }
}
