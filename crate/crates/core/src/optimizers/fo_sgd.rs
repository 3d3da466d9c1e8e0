use super::{check_batch, check_rate, StepKind, StepReport};
use crate::error::{Result, ZoError};
use crate::objectives::{Minibatch, Objective};
use crate::params::ParamVector;

/// First-order minibatch SGD on the analytic gradient.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FoSgdConfig {
    pub eta: f64,
    pub batch_size: usize,
}

impl FoSgdConfig {
    pub fn validate(&self, n: usize) -> Result<()> {
        check_rate("eta", self.eta)?;
        check_batch("batch_size", self.batch_size, n)
    }
}

impl Default for FoSgdConfig {
    fn default() -> Self {
        Self {
            eta: 1e-3,
            batch_size: 32,
        }
    }
}

/// θ ← θ − η·(1/b)Σ∇f_i(θ). Uses `grad` as scratch space.
pub(crate) fn fo_sgd_step_with<O: Objective + ?Sized>(
    obj: &O,
    theta: &mut ParamVector,
    batch: &Minibatch,
    eta: f64,
    grad: &mut [f64],
) -> Result<StepReport> {
    check_rate("eta", eta)?;
    if !obj.has_grad() {
        return Err(ZoError::Unsupported("FO-SGD needs an analytic gradient"));
    }
    let loss = obj.batch_loss(theta, batch)?;
    grad.fill(0.0);
    let w = 1.0 / batch.len() as f64;
    for &i in batch.indices() {
        obj.add_grad(theta, i, w, grad)?;
    }
    for (t, g) in theta.as_mut_slice().iter_mut().zip(grad.iter()) {
        *t -= eta * g;
    }
    theta.ensure_finite()?;
    let b = batch.len() as u64;
    Ok(StepReport {
        step: 0,
        kind: StepKind::Fo,
        loss_before: loss,
        queries: b,
        backward_queries: b,
        eta1: eta,
        eta2: eta,
        coeffs: Vec::new(),
    })
}

/// One FO-SGD step.
pub fn fo_sgd_step<O: Objective + ?Sized>(
    obj: &O,
    theta: &mut ParamVector,
    batch: &Minibatch,
    eta: f64,
) -> Result<StepReport> {
    let mut grad = vec![0.0; theta.dim()];
    fo_sgd_step_with(obj, theta, batch, eta, &mut grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::{make_least_squares, LeastSquaresProblem};

    #[test]
    fn hand_computed_two_dimensional_step() {
        // rows (1,0), (0,2); y = (1, 2); f = ((w0−1)² + (2w1−2)²)/2
        let p = LeastSquaresProblem::from_data(vec![1.0, 0.0, 0.0, 2.0], vec![1.0, 2.0], 2, 2).unwrap();
        let mut theta = ParamVector::zeros(2);
        let r = fo_sgd_step(&p, &mut theta, &Minibatch::full(2), 0.1).unwrap();
        // ∇f(0) = (−1, −4)
        assert!((theta[0] - 0.1).abs() < 1e-15);
        assert!((theta[1] - 0.4).abs() < 1e-15);
        assert_eq!((r.queries, r.backward_queries), (2, 2));
        assert!((r.loss_before - 2.5).abs() < 1e-15);
    }

    #[test]
    fn zero_rate_is_a_no_op() {
        let p = make_least_squares(10, 3, 0.1, 0).unwrap();
        let orig = ParamVector::new(vec![1.0, 2.0, 3.0]).unwrap();
        let mut theta = orig.clone();
        fo_sgd_step(&p, &mut theta, &Minibatch::full(10), 0.0).unwrap();
        assert!(theta.bitwise_eq(&orig));
    }

    #[test]
    fn full_batch_converges_to_normal_equations() {
        let p = make_least_squares(200, 10, 0.1, 6).unwrap();
        let mut theta = ParamVector::zeros(10);
        let all = Minibatch::full(200);
        for _ in 0..5000 {
            fo_sgd_step(&p, &mut theta, &all, 0.1).unwrap();
        }
        let gap = p.gap(&theta).unwrap();
        assert!(gap <= 1e-6 * p.f_star, "gap {gap:e}, f* {:e}", p.f_star);
    }

    #[test]
    fn objectives_without_gradient_are_unsupported() {
        struct NoGrad;
        impl Objective for NoGrad {
            fn num_samples(&self) -> usize {
                1
            }
            fn dim(&self) -> usize {
                1
            }
            fn loss(&self, t: &[f64], _: usize) -> f64 {
                t[0]
            }
        }
        let mut theta = ParamVector::zeros(1);
        let r = fo_sgd_step(&NoGrad, &mut theta, &Minibatch::full(1), 0.1);
        assert!(matches!(r, Err(ZoError::Unsupported(_))));
    }
}
