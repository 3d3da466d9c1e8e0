//! MeZO, reference ZO-SVRG, MeZO-SVRG and first-order SGD.
//!
//! Every step function mutates θ in place and returns a [`StepReport`].
//! The arithmetic of the zeroth-order updates lives in closures over an
//! estimate source so the same code path serves live runs and seed replay.

mod fo_sgd;
mod mezo;
mod mezo_svrg;
mod runner;
mod schedule;
mod zo_svrg;

use std::fmt;
use std::str::FromStr;

use crate::error::{Result, ZoError};
use crate::estimators::SpsaConfig;

pub use fo_sgd::{fo_sgd_step, FoSgdConfig};
pub use mezo::{mezo_step, MezoConfig};
pub use mezo_svrg::{mezo_svrg_step, MezoSvrgConfig, SvrgAnchor};
pub use runner::{run, run_with, Budget, Optimizer, RunFailure, RunOutcome, RunRecord, RunSpec, DIVERGENCE_FACTOR};
pub use schedule::{lr_schedule_update, LrSchedule, LrScheduleState};
pub use zo_svrg::{zo_svrg_refresh, zo_svrg_step, DenseAnchor, ZoSvrgConfig};

pub(crate) use mezo::mezo_update;
pub(crate) use mezo_svrg::{svrg_fullbatch, svrg_minibatch};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum StepKind {
    Fullbatch,
    Minibatch,
    Fo,
}

impl StepKind {
    pub fn as_str(self) -> &'static str {
        match self {
            StepKind::Fullbatch => "fullbatch",
            StepKind::Minibatch => "minibatch",
            StepKind::Fo => "fo",
        }
    }

    pub(crate) fn tag(self) -> u8 {
        match self {
            StepKind::Fullbatch => 0,
            StepKind::Minibatch => 1,
            StepKind::Fo => 2,
        }
    }

    pub(crate) fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(StepKind::Fullbatch),
            1 => Some(StepKind::Minibatch),
            2 => Some(StepKind::Fo),
            _ => None,
        }
    }
}

impl fmt::Display for StepKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Outcome of one optimizer step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepReport {
    pub step: u64,
    pub kind: StepKind,
    /// Loss observed while forming the step: the mean of the two perturbed
    /// batch losses for zeroth-order steps, the batch loss for FO steps.
    pub loss_before: f64,
    /// Forward passes on single samples.
    pub queries: u64,
    /// Backward passes on single samples (FO steps only).
    pub backward_queries: u64,
    pub eta1: f64,
    pub eta2: f64,
    /// Estimator coefficients in evaluation order; `p` per estimate.
    pub coeffs: Vec<f64>,
}

/// Optimizer identity.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum OptimizerKind {
    Mezo,
    MezoSvrg,
    ZoSvrg,
    FoSgd,
}

impl OptimizerKind {
    pub const ALL: [OptimizerKind; 4] = [Self::Mezo, Self::MezoSvrg, Self::ZoSvrg, Self::FoSgd];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Mezo => "mezo",
            Self::MezoSvrg => "mezo-svrg",
            Self::ZoSvrg => "zo-svrg",
            Self::FoSgd => "fo-sgd",
        }
    }

    pub(crate) fn tag(self) -> u8 {
        match self {
            Self::Mezo => 0,
            Self::MezoSvrg => 1,
            Self::ZoSvrg => 2,
            Self::FoSgd => 3,
        }
    }

    pub(crate) fn from_tag(tag: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.tag() == tag)
    }
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for OptimizerKind {
    type Err = ZoError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "mezo" | "zo-sgd" => Ok(Self::Mezo),
            "mezo-svrg" => Ok(Self::MezoSvrg),
            "zo-svrg" => Ok(Self::ZoSvrg),
            "fo-sgd" | "sgd" => Ok(Self::FoSgd),
            other => Err(ZoError::Config(format!("unknown optimizer {other:?}"))),
        }
    }
}

/// Any optimizer with its hyperparameters.
#[derive(Clone, Debug, PartialEq)]
pub enum OptimizerConfig {
    Mezo(MezoConfig),
    MezoSvrg(MezoSvrgConfig),
    ZoSvrg(ZoSvrgConfig),
    FoSgd(FoSgdConfig),
}

impl OptimizerConfig {
    pub fn kind(&self) -> OptimizerKind {
        match self {
            Self::Mezo(_) => OptimizerKind::Mezo,
            Self::MezoSvrg(_) => OptimizerKind::MezoSvrg,
            Self::ZoSvrg(_) => OptimizerKind::ZoSvrg,
            Self::FoSgd(_) => OptimizerKind::FoSgd,
        }
    }

    /// Checks the configuration against a problem with `n` samples.
    pub fn validate(&self, n: usize) -> Result<()> {
        match self {
            Self::Mezo(c) => c.validate(n),
            Self::MezoSvrg(c) => c.validate(n),
            Self::ZoSvrg(c) => c.validate(n),
            Self::FoSgd(c) => c.validate(n),
        }
    }

    /// `(eta1, eta2)`; single-rate optimizers report the rate twice.
    pub fn learning_rates(&self) -> (f64, f64) {
        match self {
            Self::Mezo(c) => (c.eta, c.eta),
            Self::MezoSvrg(c) => (c.eta1, c.eta2),
            Self::ZoSvrg(c) => (c.eta, c.eta),
            Self::FoSgd(c) => (c.eta, c.eta),
        }
    }

    pub(crate) fn set_learning_rates(&mut self, eta1: f64, eta2: f64) {
        match self {
            Self::Mezo(c) => c.eta = eta1,
            Self::MezoSvrg(c) => {
                c.eta1 = eta1;
                c.eta2 = eta2;
            }
            Self::ZoSvrg(c) => c.eta = eta1,
            Self::FoSgd(c) => c.eta = eta1,
        }
    }

    pub fn spsa(&self) -> Option<SpsaConfig> {
        match self {
            Self::Mezo(c) => Some(c.spsa),
            Self::MezoSvrg(c) => Some(c.spsa),
            Self::ZoSvrg(c) => Some(c.spsa),
            Self::FoSgd(_) => None,
        }
    }

    pub fn batch_size(&self) -> usize {
        match self {
            Self::Mezo(c) => c.batch_size,
            Self::MezoSvrg(c) => c.batch_size,
            Self::ZoSvrg(c) => c.batch_size,
            Self::FoSgd(c) => c.batch_size,
        }
    }

    /// Flat key/value form, stable across versions, used by trajectory
    /// headers and config files.
    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let mut v = vec![("optimizer".to_string(), self.kind().as_str().to_string())];
        let mut push = |k: &str, val: String| v.push((k.to_string(), val));
        match self {
            Self::Mezo(c) => {
                push("lr1", fmt_f64(c.eta));
                push("batch_size", c.batch_size.to_string());
            }
            Self::MezoSvrg(c) => {
                push("lr1", fmt_f64(c.eta1));
                push("lr2", fmt_f64(c.eta2));
                push("q", c.q.to_string());
                push("batch_size", c.batch_size.to_string());
                push("anchor_batch", c.anchor_batch.to_string());
            }
            Self::ZoSvrg(c) => {
                push("lr1", fmt_f64(c.eta));
                push("q", c.q.to_string());
                push("batch_size", c.batch_size.to_string());
                push("anchor_batch", c.anchor_batch.to_string());
            }
            Self::FoSgd(c) => {
                push("lr1", fmt_f64(c.eta));
                push("batch_size", c.batch_size.to_string());
            }
        }
        if let Some(s) = self.spsa() {
            push("mu", fmt_f64(s.mu));
            push("p", s.p.to_string());
        }
        v
    }

    /// Inverse of [`to_pairs`](Self::to_pairs).
    pub fn from_pairs(pairs: &[(String, String)]) -> Result<Self> {
        let get = |k: &str| pairs.iter().find(|(key, _)| key == k).map(|(_, v)| v.as_str());
        let req = |k: &str| get(k).ok_or_else(|| ZoError::Config(format!("missing key {k:?}")));
        let f = |k: &str| -> Result<f64> { req(k)?.parse().map_err(|e| ZoError::Config(format!("{k}: {e}"))) };
        let u = |k: &str| -> Result<usize> { req(k)?.parse().map_err(|e| ZoError::Config(format!("{k}: {e}"))) };
        let kind: OptimizerKind = req("optimizer")?.parse()?;
        let spsa = || -> Result<SpsaConfig> { SpsaConfig::new(f("mu")?, u("p")?) };
        Ok(match kind {
            OptimizerKind::Mezo => Self::Mezo(MezoConfig {
                eta: f("lr1")?,
                batch_size: u("batch_size")?,
                spsa: spsa()?,
            }),
            OptimizerKind::MezoSvrg => Self::MezoSvrg(MezoSvrgConfig {
                eta1: f("lr1")?,
                eta2: f("lr2")?,
                q: u("q")?,
                batch_size: u("batch_size")?,
                anchor_batch: u("anchor_batch")?,
                spsa: spsa()?,
            }),
            OptimizerKind::ZoSvrg => Self::ZoSvrg(ZoSvrgConfig {
                eta: f("lr1")?,
                q: u("q")?,
                batch_size: u("batch_size")?,
                anchor_batch: u("anchor_batch")?,
                spsa: spsa()?,
            }),
            OptimizerKind::FoSgd => Self::FoSgd(FoSgdConfig {
                eta: f("lr1")?,
                batch_size: u("batch_size")?,
            }),
        })
    }
}

/// Shortest representation that parses back to the same bits.
pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

pub(crate) fn check_rate(name: &str, eta: f64) -> Result<()> {
    if eta >= 0.0 && eta.is_finite() {
        Ok(())
    } else {
        Err(ZoError::Config(format!(
            "{name} must be a finite non-negative number, got {eta}"
        )))
    }
}

pub(crate) fn check_batch(name: &str, b: usize, n: usize) -> Result<()> {
    if b == 0 || b > n {
        Err(ZoError::Config(format!("{name} must be in 1..={n}, got {b}")))
    } else {
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_pairs_round_trip() {
        let spsa = SpsaConfig::new(1e-3, 2).unwrap();
        for cfg in [
            OptimizerConfig::Mezo(MezoConfig {
                eta: 1e-3,
                batch_size: 32,
                spsa,
            }),
            OptimizerConfig::MezoSvrg(MezoSvrgConfig {
                eta1: 1e-3,
                eta2: 1e-4,
                q: 2,
                batch_size: 32,
                anchor_batch: 1000,
                spsa,
            }),
            OptimizerConfig::ZoSvrg(ZoSvrgConfig {
                eta: 0.1 + 0.2,
                q: 3,
                batch_size: 4,
                anchor_batch: 8,
                spsa,
            }),
            OptimizerConfig::FoSgd(FoSgdConfig {
                eta: 1e-3,
                batch_size: 32,
            }),
        ] {
            assert_eq!(OptimizerConfig::from_pairs(&cfg.to_pairs()).unwrap(), cfg);
        }
    }

    #[test]
    fn optimizer_names_parse() {
        for k in OptimizerKind::ALL {
            assert_eq!(k.as_str().parse::<OptimizerKind>().unwrap(), k);
            assert_eq!(OptimizerKind::from_tag(k.tag()), Some(k));
        }
        assert!("adam".parse::<OptimizerKind>().is_err());
    }
}
