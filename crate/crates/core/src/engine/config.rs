use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{AwpError, Result};
use crate::projections::{ProjectionOrder, QuantSpec, SparsityTarget};

/// Which feasible set the iterates are projected onto.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Prune,
    Quantize,
    Joint,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Prune => "prune",
            Mode::Quantize => "quantize",
            Mode::Joint => "joint",
        })
    }
}

/// Step-size rule for `Z = Θ + η (W − Θ) C`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepRule {
    /// `η = c / ‖C‖_F`.
    FrobScaled(f64),
    /// A fixed `η`.
    Explicit(f64),
    /// `η = 1 / λmax(C)`; guarantees monotone descent for hard thresholding.
    LipschitzSafe,
}

impl fmt::Display for StepRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StepRule::FrobScaled(c) => write!(f, "{c}/||C||_F"),
            StepRule::Explicit(eta) => write!(f, "{eta}"),
            StepRule::LipschitzSafe => f.write_str("1/lambda_max(C)"),
        }
    }
}

/// How `Θ(0)` is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitStrategy {
    Wanda,
    Rtn,
    Magnitude,
    OriginalWeight,
    /// Caller-supplied matrix.
    Provided,
}

impl fmt::Display for InitStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InitStrategy::Wanda => "wanda",
            InitStrategy::Rtn => "rtn",
            InitStrategy::Magnitude => "magnitude",
            InitStrategy::OriginalWeight => "original_weight",
            InitStrategy::Provided => "provided",
        })
    }
}

/// Whether the quantization grid is refitted at every projection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridPolicy {
    #[default]
    Refit,
    /// Quantize mode: keep the grid of `W`. Joint mode: keep the grid fitted
    /// at the first joint iteration.
    Freeze,
}

/// Pruning-ratio ramp for joint compression: prune-only iterations whose
/// ratio grows linearly over the first `ramp_iters`, then joint iterations
/// at the target ratio.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RampSchedule {
    pub total_iters: usize,
    pub prune_only_iters: usize,
    pub ramp_iters: usize,
}

impl Default for RampSchedule {
    fn default() -> Self {
        Self {
            total_iters: 100,
            prune_only_iters: 50,
            ramp_iters: 25,
        }
    }
}

impl RampSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.total_iters == 0
            || self.ramp_iters > self.prune_only_iters
            || self.prune_only_iters > self.total_iters
        {
            return Err(AwpError::InvalidConfig(format!(
                "ramp schedule needs ramp <= prune_only <= total, total >= 1: {self:?}"
            )));
        }
        Ok(())
    }

    /// `ratio(t) = p·min(t / ramp_iters, 1)` for `t ≥ 1`; 0 at `t = 0`.
    pub fn ratio(&self, t: usize, target: f64) -> f64 {
        if t == 0 {
            0.0
        } else if t >= self.ramp_iters {
            target
        } else {
            target * (t as f64 / self.ramp_iters as f64)
        }
    }

    /// Keep count at iteration `t`: `ceil((1 − ratio(t))·d_in)` while
    /// ramping, `final_keep` once the target ratio is reached.
    pub fn keep(&self, t: usize, target: f64, d_in: usize, final_keep: usize) -> usize {
        let r = self.ratio(t, target);
        if t >= self.ramp_iters && t > 0 {
            return final_keep;
        }
        let k = ((1.0 - r) * d_in as f64 - 1e-9).ceil().max(0.0) as usize;
        k.clamp(final_keep, d_in)
    }

    pub fn is_joint_iteration(&self, t: usize) -> bool {
        t > self.prune_only_iters
    }
}

/// Full configuration of one compression run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompressionConfig {
    pub mode: Mode,
    pub sparsity: Option<SparsityTarget>,
    pub quant: Option<QuantSpec>,
    pub step_rule: StepRule,
    /// Iteration cap for prune and quantize modes; joint mode runs the schedule.
    pub max_iters: usize,
    /// Stop when `‖(W − Θ) C‖_F / ‖W‖_F` falls below this (prune mode only).
    pub grad_tol: f64,
    pub init: InitStrategy,
    pub schedule: RampSchedule,
    pub joint_order: ProjectionOrder,
    pub grid_policy: GridPolicy,
}

impl CompressionConfig {
    /// Pruning defaults: `η = 2/‖C‖_F`, tolerance `1e-4`, 200 iterations,
    /// Wanda initialization.
    pub fn pruning(target: SparsityTarget) -> Self {
        Self {
            mode: Mode::Prune,
            sparsity: Some(target),
            quant: None,
            step_rule: StepRule::FrobScaled(2.0),
            max_iters: 200,
            grad_tol: 1e-4,
            init: InitStrategy::Wanda,
            schedule: RampSchedule::default(),
            joint_order: ProjectionOrder::PruneThenQuant,
            grid_policy: GridPolicy::Refit,
        }
    }

    /// Quantization defaults: `η = 1.5/‖C‖_F`, 10 iterations, RTN initialization.
    pub fn quantization(qspec: QuantSpec) -> Self {
        Self {
            mode: Mode::Quantize,
            sparsity: None,
            quant: Some(qspec),
            step_rule: StepRule::FrobScaled(1.5),
            max_iters: 10,
            grad_tol: 1e-4,
            init: InitStrategy::Rtn,
            ..Self::pruning(SparsityTarget::Ratio(0.0))
        }
    }

    /// Joint defaults: `η = 1.5/‖C‖_F`, 50 prune-only iterations with a
    /// 25-iteration ramp, then 50 joint iterations, starting from `W`.
    pub fn joint(target: SparsityTarget, qspec: QuantSpec) -> Self {
        let schedule = RampSchedule::default();
        Self {
            mode: Mode::Joint,
            sparsity: Some(target),
            quant: Some(qspec),
            step_rule: StepRule::FrobScaled(1.5),
            max_iters: schedule.total_iters,
            grad_tol: 1e-4,
            init: InitStrategy::OriginalWeight,
            schedule,
            joint_order: ProjectionOrder::PruneThenQuant,
            grid_policy: GridPolicy::Refit,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(AwpError::InvalidConfig(m));
        if self.max_iters == 0 {
            return bad("max_iters must be at least 1".into());
        }
        if !(self.grad_tol > 0.0) {
            return bad(format!("grad_tol must be positive, got {}", self.grad_tol));
        }
        match self.step_rule {
            StepRule::FrobScaled(c) | StepRule::Explicit(c) if !(c > 0.0 && c.is_finite()) => {
                return bad(format!("step constant must be positive, got {c}"));
            }
            _ => {}
        }
        let needs_sparsity = matches!(self.mode, Mode::Prune | Mode::Joint)
            || matches!(self.init, InitStrategy::Wanda | InitStrategy::Magnitude);
        let needs_quant = matches!(self.mode, Mode::Quantize | Mode::Joint)
            || self.init == InitStrategy::Rtn;
        if needs_sparsity && self.sparsity.is_none() {
            return bad(format!("{} with {} init needs a sparsity target", self.mode, self.init));
        }
        if needs_quant && self.quant.is_none() {
            return bad(format!("{} with {} init needs a quantization spec", self.mode, self.init));
        }
        if let Some(SparsityTarget::Ratio(p)) = self.sparsity {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("pruning ratio {p} outside [0, 1]"));
            }
        }
        if self.mode == Mode::Joint {
            self.schedule.validate()?;
        }
        Ok(())
    }

    /// Number of iterations the run will perform at most.
    pub fn iteration_budget(&self) -> usize {
        match self.mode {
            Mode::Joint => self.schedule.total_iters,
            _ => self.max_iters,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ramp_ratio_is_linear_then_flat() {
        let s = RampSchedule::default();
        assert_eq!(s.ratio(0, 0.5), 0.0);
        assert_eq!(s.ratio(5, 0.5), 0.5 * 5.0 / 25.0);
        assert_eq!(s.ratio(25, 0.5), 0.5);
        assert_eq!(s.ratio(80, 0.5), 0.5);
        let r: Vec<f64> = (0..=100).map(|t| s.ratio(t, 0.75)).collect();
        assert!(r.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn ramp_keep_counts() {
        let s = RampSchedule::default();
        // 1 - 0.5/25 = 0.98; 0.98*128 = 125.44 -> 126
        assert_eq!(s.keep(1, 0.5, 128, 64), 126);
        assert_eq!(s.keep(25, 0.5, 128, 64), 64);
        assert_eq!(s.keep(60, 0.5, 128, 64), 64);
        // 0.36 target on 10: final round(6.4) = 6 while ceil would give 7
        assert_eq!(s.keep(25, 0.36, 10, 6), 6);
        let ks: Vec<usize> = (1..=100).map(|t| s.keep(t, 0.36, 10, 6)).collect();
        assert!(ks.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn schedule_validation() {
        assert!(RampSchedule { total_iters: 10, prune_only_iters: 5, ramp_iters: 6 }
            .validate()
            .is_err());
        assert!(RampSchedule { total_iters: 4, prune_only_iters: 5, ramp_iters: 1 }
            .validate()
            .is_err());
    }

    #[test]
    fn presets_echo_protocol_values() {
        let p = CompressionConfig::pruning(SparsityTarget::Ratio(0.5));
        assert_eq!(p.step_rule.to_string(), "2/||C||_F");
        assert_eq!((p.max_iters, p.grad_tol, p.init), (200, 1e-4, InitStrategy::Wanda));
        let q = CompressionConfig::quantization(QuantSpec::new(4, 128).unwrap());
        assert_eq!(q.step_rule.to_string(), "1.5/||C||_F");
        assert_eq!((q.max_iters, q.init), (10, InitStrategy::Rtn));
        let j = CompressionConfig::joint(SparsityTarget::Ratio(0.5), QuantSpec::new(4, 128).unwrap());
        assert_eq!(j.init, InitStrategy::OriginalWeight);
        assert_eq!(j.iteration_budget(), 100);
        for c in [p, q, j] {
            c.validate().unwrap();
        }
    }

    #[test]
    fn invalid_configs() {
        let mut c = CompressionConfig::pruning(SparsityTarget::Ratio(0.5));
        c.max_iters = 0;
        assert!(c.validate().is_err());
        let mut c = CompressionConfig::pruning(SparsityTarget::Ratio(0.5));
        c.grad_tol = 0.0;
        assert!(c.validate().is_err());
        let mut c = CompressionConfig::pruning(SparsityTarget::Ratio(0.5));
        c.sparsity = None;
        assert!(c.validate().is_err());
        let mut c = CompressionConfig::quantization(QuantSpec::new(4, 8).unwrap());
        c.init = InitStrategy::Wanda;
        assert!(c.validate().is_err());
    }
}
