//! Classical reference cycles and the periodic steady-state evaluator.

mod otto;
mod square;
mod trapezoid;

pub use otto::{optimize_otto, otto_protocol, otto_protocol_power, OttoEvaluator, OttoOptimum, OttoPoint, OttoSpec, OTTO_MAX_STEPS};
pub use square::{optimize_square_wave, square_wave, SquareWaveOptimum, SQUARE_GRID};
pub use trapezoid::{sweep_trapezoid, trapezoid_cycle, TrapezoidSpec, TrapezoidSweep};

use crate::env::{CycleProtocol, EnvConfig, Environment, HybridAction};
use crate::error::{Error, Result};
use crate::metrics::{efficiency_report, relative_entropy_of_coherence, time_average, EfficiencyReport, PeriodTotals};
use crate::quantum::{HeatFlows, Model, QubitEigenbasis};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalOptions {
    /// Periods averaged after the burn-in.
    pub periods: usize,
    /// Minimum number of burn-in periods.
    pub burn_in: usize,
    /// Burn-in continues until consecutive period boundaries are this close.
    pub tol: f64,
    /// Upper bound on burn-in steps.
    pub max_burn_in_steps: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            periods: 10,
            burn_in: 20,
            tol: 1e-9,
            max_burn_in_steps: 2_000_000,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceStep {
    pub action: HybridAction,
    pub reward: f64,
    pub work_in: f64,
    pub heat: HeatFlows,
    /// Time-averaged coherence over the step, refrigerator only.
    pub coherence: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CycleEvaluation {
    /// Mean reward over the measured periods.
    pub power: f64,
    /// Per-period averages over the measured periods.
    pub totals: PeriodTotals,
    /// Steps of the last measured period.
    pub trace: Vec<TraceStep>,
    /// Largest state change between the last two burn-in period boundaries.
    pub drift: f64,
    pub converged: bool,
    pub burn_in_periods: usize,
    /// Time-averaged relative entropy of coherence, refrigerator only.
    pub coherence: Option<f64>,
}

impl CycleEvaluation {
    pub fn efficiency(&self, config: &EnvConfig) -> Result<EfficiencyReport> {
        efficiency_report(config.kind(), &config.baths, &self.totals)
    }
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Repeats `protocol` from the reset state until the state at period
/// boundaries stops changing, then averages over `options.periods` periods.
pub fn evaluate_cycle(config: &EnvConfig, protocol: &CycleProtocol, options: &EvalOptions) -> Result<CycleEvaluation> {
    protocol.check(&config.actions)?;
    if options.periods == 0 {
        return Err(Error::InvalidParameter("need at least one measured period".into()));
    }
    let mut env = Environment::new(config.clone())?;
    env.reset()?;
    let actions = protocol.actions();
    let period = actions.len();

    let mut burn_in = 0;
    let mut drift = f64::INFINITY;
    let mut prev = env.state_vector();
    while burn_in < options.burn_in || (drift >= options.tol && (burn_in + 1) * period <= options.max_burn_in_steps) {
        for a in &actions {
            env.step(*a)?;
        }
        let now = env.state_vector();
        if now.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("state during cycle evaluation".into()));
        }
        drift = distance(&now, &prev);
        prev = now;
        burn_in += 1;
    }

    let fridge = match config.model {
        Model::Fridge { e0, delta } => Some((e0, delta)),
        _ => None,
    };
    let mut totals = PeriodTotals::default();
    let mut reward_sum = 0.0;
    let mut coherence_area = 0.0;
    let mut trace = Vec::with_capacity(period);
    for p in 0..options.periods {
        for a in &actions {
            let (outcome, coherence) = match (fridge, env.as_dense_mut()) {
                (Some((e0, delta)), Some(dense)) => {
                    let basis = QubitEigenbasis::fridge(e0, delta, a.u);
                    let mut samples = Vec::new();
                    let out = dense.step_observed(*a, |t, rho| {
                        samples.push((t, relative_entropy_of_coherence(rho, &basis)));
                    })?;
                    (out, time_average(&samples))
                }
                _ => (env.step(*a)?, None),
            };
            reward_sum += outcome.reward;
            totals.work_in += outcome.work_in;
            totals.heat_hot += outcome.heat.hot;
            totals.heat_cold += outcome.heat.cold;
            if let Some(c) = coherence {
                coherence_area += c;
            }
            if p + 1 == options.periods {
                trace.push(TraceStep {
                    action: *a,
                    reward: outcome.reward,
                    work_in: outcome.work_in,
                    heat: outcome.heat,
                    coherence,
                });
            }
        }
    }
    let n = options.periods as f64;
    let steps = n * period as f64;
    Ok(CycleEvaluation {
        power: reward_sum / steps,
        totals: PeriodTotals {
            work_in: totals.work_in / n,
            heat_hot: totals.heat_hot / n,
            heat_cold: totals.heat_cold / n,
        },
        trace,
        drift,
        converged: drift < options.tol,
        burn_in_periods: burn_in,
        coherence: fridge.filter(|_| env.as_dense().is_some()).map(|_| coherence_area / steps),
    })
}
