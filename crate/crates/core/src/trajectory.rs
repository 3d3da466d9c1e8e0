//! Seed-replay trajectories.
//!
//! A log stores the master seed, the optimizer configuration, a digest of
//! θ₀ and, per step, only the estimator coefficients. Replay regenerates
//! every perturbation from the derived seeds and re-applies the identical
//! in-place arithmetic, so it reproduces the live parameters bit for bit
//! without evaluating the objective.
//!
//! File layout (little-endian):
//!
//! ```text
//! "ZOTRJ" u32 version
//! u64 master_seed  u64 d  u8 optimizer
//! u32 pairs  { u16 len, key bytes, u16 len, value bytes }*
//! [u8; 32] SHA-256 of θ₀   u64 records
//! record*: u8 0, u64 step, u8 kind, u8 count, f64*count   (step)
//!          u8 1, u64 step, f64 eta1, f64 eta2             (rate change)
//! u32 CRC-32 of everything above
//! ```

use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Result, ZoError};
use crate::estimators::{perturbation_cycle, GradientEstimate, SpsaConfig};
use crate::optimizers::{
    mezo_update, svrg_fullbatch, svrg_minibatch, Optimizer, OptimizerConfig, OptimizerKind, StepKind, StepReport,
    SvrgAnchor,
};
use crate::params::ParamVector;
use crate::rng::PerturbationSeed;

pub const MAGIC: &[u8; 5] = b"ZOTRJ";
pub const FORMAT_VERSION: u32 = 1;
pub const PARAMS_MAGIC: &[u8; 5] = b"ZOPRM";

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryHeader {
    pub version: u32,
    pub master_seed: u64,
    pub d: u64,
    pub optimizer: OptimizerKind,
    pub config: Vec<(String, String)>,
    pub theta0_digest: [u8; 32],
}

#[derive(Clone, Debug, PartialEq)]
pub enum TrajectoryRecord {
    /// Coefficients of step `step` in evaluation order.
    Step {
        step: u64,
        kind: StepKind,
        coeffs: Vec<f64>,
    },
    /// Rates in force from step `step + 1` on.
    LrChange { step: u64, eta1: f64, eta2: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryLog {
    pub header: TrajectoryHeader,
    records: Vec<TrajectoryRecord>,
    steps: u64,
}

/// SHA-256 of the little-endian bytes of θ.
pub fn digest(theta: &ParamVector) -> [u8; 32] {
    Sha256::digest(theta.to_le_bytes()).into()
}

impl TrajectoryLog {
    pub fn new(header: TrajectoryHeader) -> Self {
        Self {
            header,
            records: Vec::new(),
            steps: 0,
        }
    }

    /// Empty log for a run of `config` from `theta0`.
    pub fn for_run(config: &OptimizerConfig, master_seed: u64, theta0: &ParamVector, n: usize) -> Result<Self> {
        let kind = config.kind();
        if !kind.replayable() {
            return Err(ZoError::Unsupported("only MeZO and MeZO-SVRG runs can be recorded"));
        }
        let mut pairs = config.to_pairs();
        pairs.push(("n".into(), n.to_string()));
        Ok(Self::new(TrajectoryHeader {
            version: FORMAT_VERSION,
            master_seed,
            d: theta0.dim() as u64,
            optimizer: kind,
            config: pairs,
            theta0_digest: digest(theta0),
        }))
    }

    pub fn records(&self) -> &[TrajectoryRecord] {
        &self.records
    }

    /// Number of recorded steps.
    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn config(&self) -> Result<OptimizerConfig> {
        OptimizerConfig::from_pairs(&self.header.config)
    }

    fn coeffs_per_estimate(&self) -> Result<usize> {
        Ok(self.config()?.spsa().map_or(1, |s| s.p))
    }

    /// Appends a step. Steps must arrive in order starting at 0.
    pub fn record(&mut self, report: &StepReport) -> Result<()> {
        if report.step != self.steps {
            return Err(ZoError::Contract(format!(
                "out-of-order record: expected step {}, got {}",
                self.steps, report.step
            )));
        }
        let p = self.coeffs_per_estimate()?;
        let expected = match (self.header.optimizer, report.kind) {
            (OptimizerKind::Mezo, StepKind::Minibatch) | (OptimizerKind::MezoSvrg, StepKind::Fullbatch) => p,
            (OptimizerKind::MezoSvrg, StepKind::Minibatch) => 2 * p,
            (opt, kind) => return Err(ZoError::Contract(format!("{kind} step cannot be recorded for {opt}"))),
        };
        if report.coeffs.len() != expected || expected > usize::from(u8::MAX) {
            return Err(ZoError::Contract(format!(
                "{} step carries {} coefficients, expected {expected}",
                report.kind,
                report.coeffs.len()
            )));
        }
        self.records.push(TrajectoryRecord::Step {
            step: report.step,
            kind: report.kind,
            coeffs: report.coeffs.clone(),
        });
        self.steps += 1;
        Ok(())
    }

    /// Records new rates taking effect after step `step`, which must be the
    /// last recorded step.
    pub fn record_lr_change(&mut self, step: u64, eta1: f64, eta2: f64) -> Result<()> {
        if self.steps == 0 || step != self.steps - 1 {
            return Err(ZoError::Contract(format!(
                "rate change after step {step} but {} steps are recorded",
                self.steps
            )));
        }
        self.records.push(TrajectoryRecord::LrChange { step, eta1, eta2 });
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let h = &self.header;
        let mut out = Vec::with_capacity(128 + 32 * self.records.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&h.version.to_le_bytes());
        out.extend_from_slice(&h.master_seed.to_le_bytes());
        out.extend_from_slice(&h.d.to_le_bytes());
        out.push(h.optimizer.tag());
        out.extend_from_slice(&(h.config.len() as u32).to_le_bytes());
        for (k, v) in &h.config {
            for s in [k, v] {
                out.extend_from_slice(&(s.len() as u16).to_le_bytes());
                out.extend_from_slice(s.as_bytes());
            }
        }
        out.extend_from_slice(&h.theta0_digest);
        out.extend_from_slice(&(self.records.len() as u64).to_le_bytes());
        for r in &self.records {
            match r {
                TrajectoryRecord::Step { step, kind, coeffs } => {
                    out.push(0);
                    out.extend_from_slice(&step.to_le_bytes());
                    out.push(kind.tag());
                    out.push(coeffs.len() as u8);
                    coeffs.iter().for_each(|c| out.extend_from_slice(&c.to_le_bytes()));
                }
                TrajectoryRecord::LrChange { step, eta1, eta2 } => {
                    out.push(1);
                    out.extend_from_slice(&step.to_le_bytes());
                    out.extend_from_slice(&eta1.to_le_bytes());
                    out.extend_from_slice(&eta2.to_le_bytes());
                }
            }
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() + 8 {
            return Err(ZoError::Corrupt("file too short".into()));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
        if crc32fast::hash(body) != stored {
            return Err(ZoError::Corrupt("checksum mismatch".into()));
        }
        let mut r = Reader { buf: body, pos: 0 };
        if r.take(MAGIC.len())? != MAGIC {
            return Err(ZoError::Format("not a trajectory file".into()));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(ZoError::VersionMismatch {
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        let master_seed = r.u64()?;
        let d = r.u64()?;
        let optimizer =
            OptimizerKind::from_tag(r.u8()?).ok_or_else(|| ZoError::Corrupt("unknown optimizer tag".into()))?;
        let pairs = r.u32()?;
        let mut config = Vec::new();
        for _ in 0..pairs {
            config.push((r.string()?, r.string()?));
        }
        let theta0_digest: [u8; 32] = r.take(32)?.try_into().expect("32 bytes");
        let count = r.u64()?;
        let mut log = Self::new(TrajectoryHeader {
            version,
            master_seed,
            d,
            optimizer,
            config,
            theta0_digest,
        });
        for _ in 0..count {
            match r.u8()? {
                0 => {
                    let step = r.u64()?;
                    let kind =
                        StepKind::from_tag(r.u8()?).ok_or_else(|| ZoError::Corrupt("unknown step kind".into()))?;
                    let n = usize::from(r.u8()?);
                    let coeffs = (0..n).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
                    let report = StepReport {
                        step,
                        kind,
                        loss_before: f64::NAN,
                        queries: 0,
                        backward_queries: 0,
                        eta1: 0.0,
                        eta2: 0.0,
                        coeffs,
                    };
                    log.record(&report).map_err(|e| ZoError::Corrupt(e.to_string()))?;
                }
                1 => {
                    let step = r.u64()?;
                    let (eta1, eta2) = (r.f64()?, r.f64()?);
                    log.record_lr_change(step, eta1, eta2)
                        .map_err(|e| ZoError::Corrupt(e.to_string()))?;
                }
                t => return Err(ZoError::Corrupt(format!("unknown record tag {t}"))),
            }
        }
        if r.pos != body.len() {
            return Err(ZoError::Corrupt("trailing bytes after records".into()));
        }
        Ok(log)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| ZoError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| ZoError::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let s = self
            .buf
            .get(self.pos..self.pos + n)
            .ok_or_else(|| ZoError::Corrupt("unexpected end of data".into()))?;
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn string(&mut self) -> Result<String> {
        let n = usize::from(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")));
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| ZoError::Corrupt("config text is not UTF-8".into()))
    }
}

/// Reconstructs θ after `upto` steps without evaluating the objective.
pub fn replay(log: &TrajectoryLog, theta0: &ParamVector, upto: u64) -> Result<ParamVector> {
    let h = &log.header;
    if h.version != FORMAT_VERSION {
        return Err(ZoError::VersionMismatch {
            found: h.version,
            expected: FORMAT_VERSION,
        });
    }
    if theta0.dim() as u64 != h.d {
        return Err(ZoError::DimensionMismatch {
            expected: h.d as usize,
            actual: theta0.dim(),
        });
    }
    if digest(theta0) != h.theta0_digest {
        return Err(ZoError::DigestMismatch);
    }
    if upto > log.steps() {
        return Err(ZoError::StepOutOfRange {
            requested: upto,
            available: log.steps(),
        });
    }
    let config = log.config()?;
    let spsa = config
        .spsa()
        .ok_or(ZoError::Unsupported("trajectory optimizer has no estimator"))?;
    let (mut eta1, mut eta2) = config.learning_rates();
    let mut theta = theta0.clone();
    let mut anchor: Option<SvrgAnchor> = None;
    for rec in log.records() {
        match rec {
            TrajectoryRecord::Step { step, .. } if *step >= upto => break,
            TrajectoryRecord::Step { step, kind, coeffs } => {
                let seed = Optimizer::perturbation_seed(h.master_seed, *step);
                let mut chunks = coeffs.chunks(spsa.p);
                let estimate = |th: &mut ParamVector, s: PerturbationSeed| -> Result<GradientEstimate> {
                    replay_estimate(th, s, &spsa, chunks.next())
                };
                match (&config, kind) {
                    (OptimizerConfig::Mezo(_), StepKind::Minibatch) => {
                        mezo_update(&mut theta, seed, eta1, estimate)?;
                    }
                    (OptimizerConfig::MezoSvrg(c), StepKind::Fullbatch) if c.is_fullbatch_step(*step) => {
                        svrg_fullbatch(&mut theta, &mut anchor, seed, eta1, *step, estimate)?;
                    }
                    (OptimizerConfig::MezoSvrg(c), StepKind::Minibatch) if !c.is_fullbatch_step(*step) => {
                        let a = anchor
                            .as_mut()
                            .ok_or_else(|| ZoError::Corrupt("minibatch record before any anchor".into()))?;
                        svrg_minibatch(&mut theta, a, seed, eta2, estimate)?;
                    }
                    _ => {
                        return Err(ZoError::Corrupt(format!(
                            "{kind} record at step {step} does not fit the schedule"
                        )))
                    }
                }
            }
            TrajectoryRecord::LrChange { step, .. } if *step + 1 >= upto => {}
            TrajectoryRecord::LrChange { eta1: a, eta2: b, .. } => {
                eta1 = *a;
                eta2 = *b;
            }
        }
    }
    Ok(theta)
}

/// Runs the perturbation cycle with no evaluations and substitutes the
/// recorded coefficients.
fn replay_estimate(
    theta: &mut ParamVector,
    seed: PerturbationSeed,
    spsa: &SpsaConfig,
    coeffs: Option<&[f64]>,
) -> Result<GradientEstimate> {
    let coeffs = coeffs.ok_or_else(|| ZoError::Corrupt("record has too few coefficients".into()))?;
    perturbation_cycle(theta, seed, spsa, |_| Ok(0.0))?;
    Ok(GradientEstimate {
        seed,
        coeffs: coeffs.to_vec(),
        d: theta.dim(),
        queries_used: 0,
        center_loss: f64::NAN,
    })
}

/// Writes a parameter checkpoint: "ZOPRM", u64 d, then d little-endian f64.
pub fn save_params(theta: &ParamVector, path: &Path) -> Result<()> {
    let mut out = Vec::with_capacity(13 + 8 * theta.dim());
    out.extend_from_slice(PARAMS_MAGIC);
    out.extend_from_slice(&(theta.dim() as u64).to_le_bytes());
    out.extend_from_slice(&theta.to_le_bytes());
    std::fs::write(path, out).map_err(|e| ZoError::io(path, e))
}

pub fn load_params(path: &Path) -> Result<ParamVector> {
    let bytes = std::fs::read(path).map_err(|e| ZoError::io(path, e))?;
    params_from_bytes(&bytes)
}

pub fn params_from_bytes(bytes: &[u8]) -> Result<ParamVector> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(PARAMS_MAGIC.len())? != PARAMS_MAGIC {
        return Err(ZoError::Format("not a parameter checkpoint".into()));
    }
    let d = r.u64()? as usize;
    if bytes.len() != PARAMS_MAGIC.len() + 8 + 8 * d {
        return Err(ZoError::Corrupt(format!("checkpoint length does not match d = {d}")));
    }
    let values = (0..d).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
    ParamVector::new(values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::{make_least_squares, CountingObjective, Objective};
    use crate::optimizers::{run, Budget, LrSchedule, MezoConfig, MezoSvrgConfig, RunSpec};
    use proptest::prelude::*;

    fn mezo() -> OptimizerConfig {
        OptimizerConfig::Mezo(MezoConfig {
            batch_size: 4,
            ..MezoConfig::default()
        })
    }

    fn svrg(n: usize) -> OptimizerConfig {
        OptimizerConfig::MezoSvrg(MezoSvrgConfig {
            batch_size: 4,
            q: 3,
            ..MezoSvrgConfig::least_squares_defaults(n)
        })
    }

    fn recorded(cfg: OptimizerConfig, steps: u64) -> (crate::optimizers::RunOutcome, ParamVector) {
        let p = make_least_squares(40, 6, 0.1, 2).unwrap();
        let theta0 = ParamVector::new(vec![0.1; 6]).unwrap();
        let mut spec = RunSpec::new(cfg, 17, Budget::steps(steps));
        spec.record_trajectory = true;
        spec.eval_every = 0;
        (run(&p, &theta0, &spec).unwrap(), theta0)
    }

    #[test]
    fn replay_of_zero_steps_is_theta0() {
        let (out, theta0) = recorded(mezo(), 5);
        let log = out.trajectory.unwrap();
        assert!(replay(&log, &theta0, 0).unwrap().bitwise_eq(&theta0));
    }

    #[test]
    fn replay_matches_live_runs_bit_for_bit() {
        for cfg in [mezo(), svrg(40)] {
            let (out, theta0) = recorded(cfg, 50);
            let log = out.trajectory.unwrap();
            assert!(replay(&log, &theta0, 50).unwrap().bitwise_eq(&out.theta));
        }
    }

    #[test]
    fn replay_prefixes_match_shorter_runs() {
        let (long, theta0) = recorded(svrg(40), 30);
        let log = long.trajectory.unwrap();
        for t in [1, 2, 3, 7, 29] {
            let (short, _) = recorded(svrg(40), t);
            assert!(replay(&log, &theta0, t).unwrap().bitwise_eq(&short.theta), "t={t}");
        }
    }

    #[test]
    fn replay_honours_rate_changes() {
        let p = make_least_squares(64, 4, 0.1, 0).unwrap();
        let theta0 = ParamVector::zeros(4);
        let cfg = OptimizerConfig::Mezo(MezoConfig {
            eta: 0.08,
            batch_size: 4,
            ..MezoConfig::default()
        });
        let mut spec = RunSpec::new(cfg, 3, Budget::steps(300));
        spec.record_trajectory = true;
        spec.schedule = Some(LrSchedule::with_window(4).unwrap());
        let out = run(&p, &theta0, &spec).unwrap();
        let log = out.trajectory.unwrap();
        assert!(log
            .records()
            .iter()
            .any(|r| matches!(r, TrajectoryRecord::LrChange { .. })));
        assert!(replay(&log, &theta0, out.steps).unwrap().bitwise_eq(&out.theta));
    }

    #[test]
    fn replay_evaluates_nothing() {
        let p = make_least_squares(40, 6, 0.1, 2).unwrap();
        let counter = CountingObjective::new(&p);
        let theta0 = ParamVector::zeros(6);
        let mut spec = RunSpec::new(svrg(40), 5, Budget::steps(20));
        spec.record_trajectory = true;
        let out = run(&counter, &theta0, &spec).unwrap();
        counter.reset();
        let log = out.trajectory.unwrap();
        replay(&log, &theta0, 20).unwrap();
        assert_eq!(counter.loss_queries(), 0);
        assert_eq!(counter.num_samples(), 40);
    }

    #[test]
    fn digest_and_range_are_checked() {
        let (out, theta0) = recorded(mezo(), 5);
        let log = out.trajectory.unwrap();
        let other = ParamVector::new(vec![0.2; 6]).unwrap();
        assert!(matches!(replay(&log, &other, 1), Err(ZoError::DigestMismatch)));
        assert!(matches!(
            replay(&log, &theta0, 6),
            Err(ZoError::StepOutOfRange {
                requested: 6,
                available: 5
            })
        ));
    }

    #[test]
    fn minibatch_records_carry_two_scalars() {
        let (out, _) = recorded(svrg(40), 6);
        let log = out.trajectory.unwrap();
        for r in log.records() {
            if let TrajectoryRecord::Step { kind, coeffs, .. } = r {
                let expect = if *kind == StepKind::Minibatch { 2 } else { 1 };
                assert_eq!(coeffs.len(), expect);
            }
        }
    }

    #[test]
    fn serialization_is_canonical() {
        let (out, _) = recorded(svrg(40), 25);
        let log = out.trajectory.unwrap();
        let bytes = log.to_bytes();
        let back = TrajectoryLog::from_bytes(&bytes).unwrap();
        assert_eq!(back, log);
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn empty_log_round_trips() {
        let cfg = mezo();
        let log = TrajectoryLog::for_run(&cfg, 1, &ParamVector::zeros(3), 10).unwrap();
        let back = TrajectoryLog::from_bytes(&log.to_bytes()).unwrap();
        assert_eq!(back, log);
        assert_eq!(back.steps(), 0);
    }

    #[test]
    fn truncation_and_corruption_are_detected() {
        let (out, _) = recorded(mezo(), 10);
        let bytes = out.trajectory.unwrap().to_bytes();
        for cut in [1, 5, 20, bytes.len() - 1] {
            assert!(matches!(
                TrajectoryLog::from_bytes(&bytes[..bytes.len() - cut]),
                Err(ZoError::Corrupt(_))
            ));
        }
        let mut flipped = bytes.clone();
        flipped[40] ^= 1;
        assert!(matches!(TrajectoryLog::from_bytes(&flipped), Err(ZoError::Corrupt(_))));
    }

    #[test]
    fn version_is_checked() {
        let log = TrajectoryLog::for_run(&mezo(), 1, &ParamVector::zeros(3), 10).unwrap();
        let mut bytes = log.to_bytes();
        bytes[5] = 9;
        let n = bytes.len();
        let crc = crc32fast::hash(&bytes[..n - 4]);
        bytes[n - 4..].copy_from_slice(&crc.to_le_bytes());
        assert!(matches!(
            TrajectoryLog::from_bytes(&bytes),
            Err(ZoError::VersionMismatch { found: 9, expected: 1 })
        ));
    }

    #[test]
    fn out_of_order_records_are_rejected() {
        let mut log = TrajectoryLog::for_run(&mezo(), 1, &ParamVector::zeros(3), 10).unwrap();
        let mut r = StepReport {
            step: 1,
            kind: StepKind::Minibatch,
            loss_before: 0.0,
            queries: 8,
            backward_queries: 0,
            eta1: 1e-3,
            eta2: 1e-3,
            coeffs: vec![0.5],
        };
        assert!(log.record(&r).is_err());
        r.step = 0;
        log.record(&r).unwrap();
        assert!(log.record(&r).is_err());
    }

    #[test]
    fn size_is_independent_of_dimension() {
        let size = |d: usize| {
            let mut log = TrajectoryLog::for_run(&mezo(), 1, &ParamVector::zeros(d), 10).unwrap();
            let header = log.to_bytes().len();
            for step in 0..100 {
                log.record(&StepReport {
                    step,
                    kind: StepKind::Minibatch,
                    loss_before: 0.0,
                    queries: 8,
                    backward_queries: 0,
                    eta1: 1e-3,
                    eta2: 1e-3,
                    coeffs: vec![0.1],
                })
                .unwrap();
            }
            (header, log.to_bytes().len())
        };
        let (h1, s1) = size(3);
        let (h2, s2) = size(100_000);
        assert_eq!(s1 - h1, s2 - h2);
        assert!(s1 - h1 < 64 * 100);
    }

    #[test]
    fn unsupported_optimizers_cannot_record() {
        let cfg = OptimizerConfig::FoSgd(crate::optimizers::FoSgdConfig::default());
        assert!(TrajectoryLog::for_run(&cfg, 0, &ParamVector::zeros(2), 40).is_err());
    }

    #[test]
    fn parameter_checkpoints_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("theta.bin");
        let theta = ParamVector::new(vec![1.5, -0.0, 3e-300]).unwrap();
        save_params(&theta, &path).unwrap();
        assert!(load_params(&path).unwrap().bitwise_eq(&theta));
        let bytes = std::fs::read(&path).unwrap();
        assert!(params_from_bytes(&bytes[..bytes.len() - 1]).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn replay_is_exact_for_any_seed(seed in any::<u64>(), steps in 1u64..25) {
            let p = make_least_squares(30, 4, 0.1, 1).unwrap();
            let theta0 = ParamVector::new(vec![0.3, -0.1, 0.2, 0.0]).unwrap();
            let mut spec = RunSpec::new(svrg(30), seed, Budget::steps(steps));
            spec.record_trajectory = true;
            spec.eval_every = 0;
            let out = run(&p, &theta0, &spec).unwrap();
            let log = TrajectoryLog::from_bytes(&out.trajectory.unwrap().to_bytes()).unwrap();
            prop_assert!(replay(&log, &theta0, steps).unwrap().bitwise_eq(&out.theta));
        }
    }
}
