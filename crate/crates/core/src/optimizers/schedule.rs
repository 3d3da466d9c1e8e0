use crate::error::{Result, ZoError};

/// Loss-feedback annealing parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LrSchedule {
    pub kappa: f64,
    pub alpha: f64,
    /// Steps per epoch.
    pub window: usize,
}

impl LrSchedule {
    pub fn new(kappa: f64, alpha: f64, window: usize) -> Result<Self> {
        if !(kappa > 1.0 && kappa.is_finite()) {
            return Err(ZoError::Config(format!("kappa must exceed 1, got {kappa}")));
        }
        if !(alpha > 1.0 && alpha.is_finite()) {
            return Err(ZoError::Config(format!("alpha must exceed 1, got {alpha}")));
        }
        if window == 0 {
            return Err(ZoError::Config("schedule window must be >= 1".into()));
        }
        Ok(Self { kappa, alpha, window })
    }

    /// κ = 1.05, α = 5.
    pub fn with_window(window: usize) -> Result<Self> {
        Self::new(1.05, 5.0, window)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LrScheduleState {
    pub schedule: LrSchedule,
    pub loss_history: Vec<f64>,
}

impl LrScheduleState {
    pub fn new(schedule: LrSchedule) -> Self {
        Self {
            schedule,
            loss_history: Vec::new(),
        }
    }

    pub fn push(&mut self, loss: f64) {
        self.loss_history.push(loss);
    }

    /// True when the history ends an epoch with at least two epochs seen.
    pub fn at_epoch_boundary(&self) -> bool {
        let (len, w) = (self.loss_history.len(), self.schedule.window);
        len >= 2 * w && len % w == 0
    }
}

/// m₁ = mean of the last w losses, m₂ = mean of the w before them; if
/// m₁/m₂ > κ both rates are divided by α. Short histories and m₂ ≤ 0 are
/// no-ops.
pub fn lr_schedule_update(state: &LrScheduleState, eta1: f64, eta2: f64) -> (f64, f64) {
    let LrSchedule {
        kappa,
        alpha,
        window: w,
    } = state.schedule;
    let h = &state.loss_history;
    if h.len() < 2 * w {
        return (eta1, eta2);
    }
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    let m1 = mean(&h[h.len() - w..]);
    let m2 = mean(&h[h.len() - 2 * w..h.len() - w]);
    if m2 > 0.0 && m1 / m2 > kappa {
        (eta1 / alpha, eta2 / alpha)
    } else {
        (eta1, eta2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn state(history: &[f64], w: usize) -> LrScheduleState {
        let mut s = LrScheduleState::new(LrSchedule::with_window(w).unwrap());
        history.iter().for_each(|&l| s.push(l));
        s
    }

    #[test]
    fn flat_losses_keep_rates() {
        assert_eq!(lr_schedule_update(&state(&[1.0; 6], 3), 1e-3, 1e-4), (1e-3, 1e-4));
    }

    #[test]
    fn rising_losses_anneal_both_rates() {
        let (a, b) = lr_schedule_update(&state(&[1.0, 1.0, 1.1, 1.1], 2), 1e-3, 1e-4);
        assert!((a - 2e-4).abs() < 1e-18 && (b - 2e-5).abs() < 1e-19);
    }

    #[test]
    fn zero_previous_mean_is_guarded() {
        assert_eq!(
            lr_schedule_update(&state(&[0.0, 0.0, 1.0, 1.0], 2), 1.0, 1.0),
            (1.0, 1.0)
        );
    }

    #[test]
    fn short_history_is_a_no_op() {
        assert_eq!(lr_schedule_update(&state(&[1.0, 5.0, 9.0], 2), 1.0, 1.0), (1.0, 1.0));
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        assert!(LrSchedule::new(1.0, 5.0, 2).is_err());
        assert!(LrSchedule::new(1.05, 0.5, 2).is_err());
        assert!(LrSchedule::new(1.05, 5.0, 0).is_err());
    }

    proptest! {
        #[test]
        fn rates_never_increase(losses in prop::collection::vec(0.0f64..10.0, 0..60), w in 1usize..6) {
            let mut s = LrScheduleState::new(LrSchedule::with_window(w).unwrap());
            let (mut e1, mut e2) = (1e-3, 1e-4);
            for l in losses {
                s.push(l);
                let (n1, n2) = lr_schedule_update(&s, e1, e2);
                prop_assert!(n1 <= e1 && n2 <= e2);
                e1 = n1;
                e2 = n2;
            }
        }
    }
}
