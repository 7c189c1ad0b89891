use argmin::core::{CostFunction, Executor};
use argmin::solver::neldermead::NelderMead;

use super::{evaluate_cycle, EvalOptions};
use crate::env::{CycleProtocol, EnvConfig, Segment};
use crate::error::{Error, Result};
use crate::quantum::{BathChoice, Model};

/// Points per axis of the coarse grid.
pub const SQUARE_GRID: usize = 41;

/// One step on the hot bath at `u_hot`, one step on the cold bath at `u_cold`.
pub fn square_wave(u_hot: f64, u_cold: f64) -> CycleProtocol {
    CycleProtocol {
        segments: vec![
            Segment {
                steps: 1,
                u: u_hot,
                d: BathChoice::Hot,
            },
            Segment {
                steps: 1,
                u: u_cold,
                d: BathChoice::Cold,
            },
        ],
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SquareWaveOptimum {
    pub u_hot: f64,
    pub u_cold: f64,
    pub power: f64,
    /// Best point of the coarse grid, `(u_hot, u_cold, power)`.
    pub grid_best: (f64, f64, f64),
    pub protocol: CycleProtocol,
}

struct NegativePower<'a> {
    config: &'a EnvConfig,
    options: &'a EvalOptions,
}

impl NegativePower<'_> {
    fn clamp(&self, p: &[f64]) -> (f64, f64) {
        let s = &self.config.actions;
        (p[0].clamp(s.u_min, s.u_max), p[1].clamp(s.u_min, s.u_max))
    }

    fn power(&self, u_hot: f64, u_cold: f64) -> Result<f64> {
        Ok(evaluate_cycle(self.config, &square_wave(u_hot, u_cold), self.options)?.power)
    }
}

impl CostFunction for NegativePower<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, p: &Self::Param) -> std::result::Result<f64, argmin::core::Error> {
        let (h, c) = self.clamp(p);
        self.power(h, c).map(|v| -v).map_err(|e| argmin::core::Error::msg(e.to_string()))
    }
}

/// Fastest hot/cold alternation with the best pair of controls: a 41x41
/// grid over the control interval, refined by Nelder-Mead.
pub fn optimize_square_wave(config: &EnvConfig, options: &EvalOptions) -> Result<SquareWaveOptimum> {
    if !matches!(config.model, Model::TwoLevel { .. } | Model::Oscillator(_)) {
        return Err(Error::Unsupported("square-wave baseline needs an engine model".into()));
    }
    let objective = NegativePower { config, options };
    let s = &config.actions;
    let h = (s.u_max - s.u_min) / (SQUARE_GRID - 1) as f64;
    let at = |i: usize| if i + 1 == SQUARE_GRID { s.u_max } else { s.u_min + i as f64 * h };
    let mut best = (at(0), at(0), f64::NEG_INFINITY);
    for i in 0..SQUARE_GRID {
        for j in 0..SQUARE_GRID {
            let p = objective.power(at(i), at(j))?;
            if p > best.2 {
                best = (at(i), at(j), p);
            }
        }
    }
    let simplex = vec![
        vec![best.0, best.1],
        vec![best.0 - h, best.1],
        vec![best.0, best.1 + h],
    ];
    let solver = NelderMead::new(simplex)
        .with_sd_tolerance(1e-14)
        .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let run = Executor::new(NegativePower { config, options }, solver)
        .configure(|st| st.max_iters(400))
        .run()
        .map_err(|e| Error::InvalidParameter(format!("square-wave refinement failed: {e}")))?;
    let mut result = (best.0, best.1, best.2);
    if let Some(p) = run.state().best_param.as_ref() {
        let (uh, uc) = objective.clamp(p);
        let power = objective.power(uh, uc)?;
        if power > result.2 {
            result = (uh, uc, power);
        }
    }
    Ok(SquareWaveOptimum {
        u_hot: result.0,
        u_cold: result.1,
        power: result.2,
        grid_best: best,
        protocol: square_wave(result.0, result.1),
    })
}
