use std::f64::consts::PI;

use super::{evaluate_cycle, CycleEvaluation, EvalOptions};
use crate::env::{CycleProtocol, EnvConfig, HybridAction};
use crate::error::{Error, Result};
use crate::quantum::{BathChoice, Model};

/// Trapezoidal modulation between `u_low` and `u_high`.
///
/// A period is split into a low dwell, a rising ramp, a high dwell and a
/// falling ramp; each ramp takes `ramp_fraction` of the period. The ramp
/// profile blends a straight line (`smoothing = 0`) with a raised cosine
/// (`smoothing = 1`). The waveform is sampled at step midpoints.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrapezoidSpec {
    /// Period in steps.
    pub period: usize,
    pub ramp_fraction: f64,
    pub smoothing: f64,
    pub u_low: f64,
    pub u_high: f64,
}

impl TrapezoidSpec {
    pub fn new(period: usize) -> Self {
        Self {
            period,
            ramp_fraction: 0.4,
            smoothing: 1.0,
            u_low: 0.0,
            u_high: 0.5,
        }
    }

    /// Control at phase `x` in `[0, 1)`.
    pub fn value(&self, x: f64) -> f64 {
        let r = self.ramp_fraction;
        let w = 0.5 * (1.0 - 2.0 * r);
        let shape = |y: f64| (1.0 - self.smoothing) * y + self.smoothing * 0.5 * (1.0 - (PI * y).cos());
        let span = self.u_high - self.u_low;
        if x < w {
            self.u_low
        } else if x < w + r {
            self.u_low + span * shape((x - w) / r)
        } else if x < 2.0 * w + r {
            self.u_high
        } else {
            self.u_high - span * shape((x - 2.0 * w - r) / r)
        }
    }
}

pub fn trapezoid_cycle(config: &EnvConfig, spec: &TrapezoidSpec) -> Result<CycleProtocol> {
    if !matches!(config.model, Model::Fridge { .. }) {
        return Err(Error::Unsupported("trapezoid baseline needs the refrigerator model".into()));
    }
    if spec.period < 4 {
        return Err(Error::InvalidParameter(format!("trapezoid period must be at least 4 steps, got {}", spec.period)));
    }
    if !(0.0..0.5).contains(&spec.ramp_fraction) {
        return Err(Error::InvalidParameter(format!(
            "ramps must fit in the period: ramp fraction {} outside [0, 0.5)",
            spec.ramp_fraction
        )));
    }
    if !(0.0..=1.0).contains(&spec.smoothing) {
        return Err(Error::InvalidParameter(format!("smoothing {} outside [0, 1]", spec.smoothing)));
    }
    let actions: Vec<HybridAction> = (0..spec.period)
        .map(|k| {
            let x = (k as f64 + 0.5) / spec.period as f64;
            HybridAction::new(spec.value(x), BathChoice::Both)
        })
        .collect();
    let protocol = CycleProtocol::from_actions(&actions)?;
    protocol.check(&config.actions)?;
    Ok(protocol)
}

#[derive(Clone, Debug)]
pub struct TrapezoidSweep {
    /// `(period, power)` for every period tried.
    pub powers: Vec<(usize, f64)>,
    pub best: TrapezoidSpec,
    pub best_eval: CycleEvaluation,
}

/// Evaluates the trapezoid for every period in `periods` and keeps the best.
pub fn sweep_trapezoid(
    config: &EnvConfig,
    base: &TrapezoidSpec,
    periods: impl IntoIterator<Item = usize>,
    options: &EvalOptions,
) -> Result<TrapezoidSweep> {
    let mut powers = Vec::new();
    let mut best: Option<(TrapezoidSpec, CycleEvaluation)> = None;
    for period in periods {
        let spec = TrapezoidSpec { period, ..*base };
        let eval = evaluate_cycle(config, &trapezoid_cycle(config, &spec)?, options)?;
        powers.push((period, eval.power));
        if best.as_ref().is_none_or(|b| eval.power > b.1.power) {
            best = Some((spec, eval));
        }
    }
    let (best, best_eval) = best.ok_or_else(|| Error::InvalidParameter("empty period range".into()))?;
    Ok(TrapezoidSweep {
        powers,
        best,
        best_eval,
    })
}
