//! Sample-indexed objectives f(θ) = (1/n) Σ f_i(θ).

use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Result, ZoError};

mod dataset;
mod idx;
mod least_squares;
mod logistic;
mod mlp;
mod quadratic;

pub use dataset::{synthetic_digits, Dataset};
pub use idx::{encode_idx, load_idx, read_idx_images, read_idx_labels, IMAGES_MAGIC, LABELS_MAGIC};
pub use least_squares::{make_least_squares, LeastSquaresProblem};
pub use logistic::{make_logistic, LogisticProblem};
pub use mlp::{make_mlp2, Mlp2Problem, HIDDEN1, HIDDEN2};
pub use quadratic::SeparableQuadratic;

/// Below this many scalar multiply-adds a batch is evaluated serially.
const PARALLEL_WORK_THRESHOLD: usize = 1 << 16;

/// A loss oracle over `n` samples and `d` parameters.
///
/// `loss` must be a pure function of `(theta, index)`. Objectives are
/// immutable and may be evaluated from several threads at once.
pub trait Objective: Send + Sync {
    fn num_samples(&self) -> usize;

    fn dim(&self) -> usize;

    /// Per-sample loss f_i(θ).
    fn loss(&self, theta: &[f64], index: usize) -> f64;

    /// Adds `weight · ∇f_i(θ)` into `out`.
    fn add_grad(&self, _theta: &[f64], _index: usize, _weight: f64, _out: &mut [f64]) -> Result<()> {
        Err(ZoError::Unsupported("objective has no analytic gradient"))
    }

    fn has_grad(&self) -> bool {
        false
    }

    /// Optional evaluation metric, e.g. classification accuracy.
    fn metric(&self, _theta: &[f64]) -> Option<f64> {
        None
    }

    /// Mean loss over `batch`.
    fn batch_loss(&self, theta: &[f64], batch: &Minibatch) -> Result<f64> {
        mean_loss(self, theta, batch.indices())
    }

    /// f(θ) over all samples.
    fn full_loss(&self, theta: &[f64]) -> Result<f64> {
        let all: Vec<usize> = (0..self.num_samples()).collect();
        mean_loss(self, theta, &all)
    }

    /// ∇f(θ) over all samples, when an analytic gradient exists.
    fn full_grad(&self, theta: &[f64]) -> Result<Vec<f64>> {
        let n = self.num_samples();
        let mut g = vec![0.0; self.dim()];
        for i in 0..n {
            self.add_grad(theta, i, 1.0 / n as f64, &mut g)?;
        }
        Ok(g)
    }
}

/// Mean of per-sample losses. Evaluation may run in parallel; the sum is
/// always reduced in the order of `indices`.
pub fn mean_loss<O: Objective + ?Sized>(obj: &O, theta: &[f64], indices: &[usize]) -> Result<f64> {
    if indices.is_empty() {
        return Err(ZoError::Contract("empty batch".into()));
    }
    let parallel = indices.len() > 1 && indices.len() * obj.dim() >= PARALLEL_WORK_THRESHOLD;
    let losses: Vec<f64> = if parallel {
        indices.par_iter().map(|&i| obj.loss(theta, i)).collect()
    } else {
        indices.iter().map(|&i| obj.loss(theta, i)).collect()
    };
    let mut sum = 0.0;
    for (&i, &l) in indices.iter().zip(&losses) {
        if !l.is_finite() {
            return Err(ZoError::NonFiniteLoss { index: i });
        }
        sum += l;
    }
    Ok(sum / indices.len() as f64)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum SamplingMode {
    WithReplacement,
    #[default]
    WithoutReplacement,
}

/// Sample indices 𝓘 ⊂ [n], kept in ascending order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Minibatch {
    indices: Vec<usize>,
    mode: SamplingMode,
}

impl Minibatch {
    pub fn new(mut indices: Vec<usize>, n: usize, mode: SamplingMode) -> Result<Self> {
        if indices.is_empty() {
            return Err(ZoError::Contract("minibatch must be nonempty".into()));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= n) {
            return Err(ZoError::IndexOutOfRange { index: bad, n });
        }
        indices.sort_unstable();
        if mode == SamplingMode::WithoutReplacement && indices.windows(2).any(|w| w[0] == w[1]) {
            return Err(ZoError::Contract(
                "duplicate index in a without-replacement minibatch".into(),
            ));
        }
        Ok(Self { indices, mode })
    }

    pub fn full(n: usize) -> Self {
        Self {
            indices: (0..n).collect(),
            mode: SamplingMode::WithoutReplacement,
        }
    }

    pub fn sample<R: Rng + ?Sized>(rng: &mut R, n: usize, b: usize, mode: SamplingMode) -> Result<Self> {
        if b == 0 {
            return Err(ZoError::Contract("batch size must be >= 1".into()));
        }
        let mut indices = match mode {
            SamplingMode::WithReplacement => (0..b).map(|_| rng.random_range(0..n)).collect(),
            SamplingMode::WithoutReplacement => {
                if b > n {
                    return Err(ZoError::Contract(format!("batch size {b} exceeds n = {n}")));
                }
                if b == n {
                    return Ok(Self::full(n));
                }
                rand::seq::index::sample(rng, n, b).into_vec()
            }
        };
        indices.sort_unstable();
        Ok(Self { indices, mode })
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn mode(&self) -> SamplingMode {
        self.mode
    }
}

/// Wraps an objective and counts per-sample loss and gradient evaluations.
pub struct CountingObjective<'a, O: ?Sized> {
    inner: &'a O,
    losses: AtomicU64,
    grads: AtomicU64,
}

impl<'a, O: Objective + ?Sized> CountingObjective<'a, O> {
    pub fn new(inner: &'a O) -> Self {
        Self {
            inner,
            losses: AtomicU64::new(0),
            grads: AtomicU64::new(0),
        }
    }

    pub fn loss_queries(&self) -> u64 {
        self.losses.load(Ordering::Relaxed)
    }

    pub fn grad_queries(&self) -> u64 {
        self.grads.load(Ordering::Relaxed)
    }

    pub fn reset(&self) {
        self.losses.store(0, Ordering::Relaxed);
        self.grads.store(0, Ordering::Relaxed);
    }
}

impl<O: Objective + ?Sized> Objective for CountingObjective<'_, O> {
    fn num_samples(&self) -> usize {
        self.inner.num_samples()
    }

    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn loss(&self, theta: &[f64], index: usize) -> f64 {
        self.losses.fetch_add(1, Ordering::Relaxed);
        self.inner.loss(theta, index)
    }

    fn add_grad(&self, theta: &[f64], index: usize, weight: f64, out: &mut [f64]) -> Result<()> {
        self.grads.fetch_add(1, Ordering::Relaxed);
        self.inner.add_grad(theta, index, weight, out)
    }

    fn has_grad(&self) -> bool {
        self.inner.has_grad()
    }

    fn metric(&self, theta: &[f64]) -> Option<f64> {
        self.inner.metric(theta)
    }
}
