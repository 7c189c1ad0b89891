//! Reinforcement-learning environments for the three thermal machines.
//!
//! Each environment executes a [`HybridAction`] as a sudden control jump
//! followed by a constant-control segment of length `dt`. The reward is the
//! average heat current over the segment: total heat for engines, cold-bath
//! heat for the refrigerator.

mod dense;
mod oscillator;
mod protocol;
mod two_level;

pub use dense::DenseEnv;
pub use oscillator::{jump_moments, oscillator_thermal_energy, JumpMap, OscillatorEnv, OscillatorMoments, LOG_FLOOR};
pub use protocol::{CycleProtocol, Segment};
pub use two_level::TwoLevelEnv;

use crate::error::{Error, Result};
use crate::quantum::{BathChoice, Baths, HeatFlows, Model, DEFAULT_MAX_SUBSTEP};

/// Continuous control paired with the bath selector.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HybridAction {
    pub u: f64,
    pub d: BathChoice,
}

impl HybridAction {
    pub fn new(u: f64, d: BathChoice) -> Self {
        Self { u, d }
    }
}

/// Control interval `[u_min, u_max]` and the discrete choices, in the order
/// used for the policy and critic output heads.
#[derive(Clone, Debug, PartialEq)]
pub struct ActionSpace {
    pub u_min: f64,
    pub u_max: f64,
    pub choices: Vec<BathChoice>,
}

// Slack for controls that were squashed from the interval ends.
const BOUNDS_SLACK: f64 = 1e-12;

impl ActionSpace {
    pub fn new(u_min: f64, u_max: f64, choices: Vec<BathChoice>) -> Result<Self> {
        let space = Self { u_min, u_max, choices };
        space.validate()?;
        Ok(space)
    }

    /// Three-way choice used by the engines.
    pub fn engine(u_min: f64, u_max: f64) -> Result<Self> {
        Self::new(u_min, u_max, vec![BathChoice::Hot, BathChoice::Cold, BathChoice::None])
    }

    /// Single implicit choice of the refrigerator.
    pub fn refrigerator(u_min: f64, u_max: f64) -> Result<Self> {
        Self::new(u_min, u_max, vec![BathChoice::Both])
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.u_min < self.u_max) || !self.u_min.is_finite() || !self.u_max.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "control interval needs u_min < u_max, got [{}, {}]",
                self.u_min, self.u_max
            )));
        }
        if self.choices.is_empty() {
            return Err(Error::InvalidParameter("discrete action set is empty".into()));
        }
        Ok(())
    }

    pub fn arity(&self) -> usize {
        self.choices.len()
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.u_min + self.u_max)
    }

    pub fn half_width(&self) -> f64 {
        0.5 * (self.u_max - self.u_min)
    }

    pub fn contains(&self, u: f64) -> bool {
        u >= self.u_min - BOUNDS_SLACK && u <= self.u_max + BOUNDS_SLACK
    }

    /// Maps `t` in `[-1, 1]` onto the control interval.
    pub fn denormalize(&self, t: f64) -> f64 {
        (self.midpoint() + self.half_width() * t).clamp(self.u_min, self.u_max)
    }

    /// Inverse of [`ActionSpace::denormalize`].
    pub fn normalize(&self, u: f64) -> f64 {
        (u - self.midpoint()) / self.half_width()
    }

    pub fn index_of(&self, d: BathChoice) -> Option<usize> {
        self.choices.iter().position(|&c| c == d)
    }

    pub fn check(&self, action: &HybridAction) -> Result<()> {
        if !action.u.is_finite() {
            return Err(Error::NonFinite(format!("control u = {}", action.u)));
        }
        if !self.contains(action.u) {
            return Err(Error::InvalidParameter(format!(
                "control {} outside [{}, {}]",
                action.u, self.u_min, self.u_max
            )));
        }
        if self.index_of(action.d).is_none() {
            return Err(Error::InvalidParameter(format!("bath choice '{}' not available", action.d)));
        }
        Ok(())
    }
}

/// Whether power is produced (engine) or heat is pumped out of the cold bath.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MachineKind {
    Engine,
    Refrigerator,
}

/// Which integrator backs an environment.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Dynamics {
    /// Closed-form laws for the two-level and oscillator models, dense
    /// propagation for the refrigerator.
    #[default]
    Fast,
    /// Dense master-equation propagation for every model.
    Dense,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnvConfig {
    pub model: Model,
    pub baths: Baths,
    pub dt: f64,
    pub actions: ActionSpace,
    /// Control at t = 0; the midpoint of the interval when absent.
    pub initial_u: Option<f64>,
    /// Largest RK4 substep for dense propagation.
    pub max_substep: f64,
    pub dynamics: Dynamics,
}

impl EnvConfig {
    pub fn new(model: Model, baths: Baths, dt: f64, actions: ActionSpace) -> Self {
        Self {
            model,
            baths,
            dt,
            actions,
            initial_u: None,
            max_substep: DEFAULT_MAX_SUBSTEP,
            dynamics: Dynamics::Fast,
        }
    }

    pub fn kind(&self) -> MachineKind {
        match self.model {
            Model::Fridge { .. } => MachineKind::Refrigerator,
            _ => MachineKind::Engine,
        }
    }

    pub fn initial_u(&self) -> f64 {
        self.initial_u.unwrap_or_else(|| self.actions.midpoint())
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.baths.validate()?;
        self.actions.validate()?;
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::InvalidParameter(format!("time step must be positive, got {}", self.dt)));
        }
        if !(self.max_substep > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "maximum substep must be positive, got {}",
                self.max_substep
            )));
        }
        let u0 = self.initial_u();
        if !self.actions.contains(u0) {
            return Err(Error::InvalidParameter(format!("initial control {u0} outside the control interval")));
        }
        match (&self.model, self.kind()) {
            (Model::Fridge { .. }, _) => {
                if self.actions.choices != [BathChoice::Both] {
                    return Err(Error::InvalidParameter(
                        "the refrigerator has the single bath choice 'both'".into(),
                    ));
                }
            }
            _ => {
                if self.actions.choices.contains(&BathChoice::Both) {
                    return Err(Error::InvalidParameter(
                        "engines cannot couple both baths at once".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Everything observable about one environment step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepOutcome {
    /// Average power over the segment.
    pub reward: f64,
    /// Work supplied by the control jump at the start of the step.
    pub work_in: f64,
    /// Heat drawn from each bath during the segment.
    pub heat: HeatFlows,
    pub energy_before: f64,
    pub energy_after: f64,
}

impl StepOutcome {
    /// `energy_after - energy_before - work_in - heat`, zero up to round-off.
    pub fn first_law_residual(&self) -> f64 {
        self.energy_after - self.energy_before - self.work_in - self.heat.total()
    }
}

pub(crate) fn reward_from_heat(kind: MachineKind, heat: &HeatFlows, dt: f64) -> f64 {
    match kind {
        MachineKind::Engine => heat.total() / dt,
        MachineKind::Refrigerator => heat.cold / dt,
    }
}

/// A configured environment with its current state.
#[derive(Clone, Debug)]
pub enum Environment {
    TwoLevel(TwoLevelEnv),
    Oscillator(OscillatorEnv),
    Dense(DenseEnv),
}

impl Environment {
    /// Builds the environment and puts it in its t = 0 state.
    pub fn new(config: EnvConfig) -> Result<Self> {
        config.validate()?;
        Ok(match (&config.model, config.dynamics) {
            (Model::TwoLevel { .. }, Dynamics::Fast) => Environment::TwoLevel(TwoLevelEnv::new(config)?),
            (Model::Oscillator(_), Dynamics::Fast) => Environment::Oscillator(OscillatorEnv::new(config)?),
            _ => Environment::Dense(DenseEnv::new(config)?),
        })
    }

    pub fn config(&self) -> &EnvConfig {
        match self {
            Environment::TwoLevel(e) => e.config(),
            Environment::Oscillator(e) => e.config(),
            Environment::Dense(e) => e.config(),
        }
    }

    pub fn reset(&mut self) -> Result<Vec<f64>> {
        match self {
            Environment::TwoLevel(e) => e.reset(),
            Environment::Oscillator(e) => e.reset(),
            Environment::Dense(e) => e.reset()?,
        }
        Ok(self.observation())
    }

    pub fn step(&mut self, action: HybridAction) -> Result<StepOutcome> {
        match self {
            Environment::TwoLevel(e) => e.step(action),
            Environment::Oscillator(e) => e.step(action),
            Environment::Dense(e) => e.step(action),
        }
    }

    /// Encoded state: model-specific features followed by the last control.
    pub fn observation(&self) -> Vec<f64> {
        match self {
            Environment::TwoLevel(e) => e.observation(),
            Environment::Oscillator(e) => e.observation(),
            Environment::Dense(e) => e.observation(),
        }
    }

    pub fn observation_dim(&self) -> usize {
        observation_dim(&self.config().model)
    }

    pub fn actions(&self) -> &ActionSpace {
        &self.config().actions
    }

    pub fn u_last(&self) -> f64 {
        match self {
            Environment::TwoLevel(e) => e.u_last(),
            Environment::Oscillator(e) => e.u_last(),
            Environment::Dense(e) => e.u_last(),
        }
    }

    /// Internal energy at the current control.
    pub fn energy(&self) -> f64 {
        match self {
            Environment::TwoLevel(e) => e.energy(),
            Environment::Oscillator(e) => e.energy(),
            Environment::Dense(e) => e.energy(),
        }
    }

    /// Raw state coordinates used to detect periodic steady states.
    pub fn state_vector(&self) -> Vec<f64> {
        match self {
            Environment::TwoLevel(e) => vec![e.population()],
            Environment::Oscillator(e) => {
                let m = e.moments();
                vec![m.h, m.l, m.d]
            }
            Environment::Dense(e) => e.state_vector(),
        }
    }

    /// Inverse of [`Environment::state_vector`], used by checkpoints.
    pub fn restore(&mut self, state: &[f64], u_last: f64) -> Result<()> {
        let expect = match self {
            Environment::TwoLevel(_) => 1,
            Environment::Oscillator(_) => 3,
            Environment::Dense(e) => 2 * e.state().dim() * e.state().dim(),
        };
        if state.len() != expect {
            return Err(Error::ShapeMismatch {
                context: "environment state",
                expected: expect,
                actual: state.len(),
            });
        }
        match self {
            Environment::TwoLevel(e) => e.set_state(state[0], u_last),
            Environment::Oscillator(e) => {
                e.set_state(OscillatorMoments { h: state[0], l: state[1], d: state[2] }, u_last);
                Ok(())
            }
            Environment::Dense(e) => {
                let n = e.state().dim();
                let m = crate::quantum::CMatrix::from_iterator(
                    n,
                    n,
                    state.chunks(2).map(|c| crate::quantum::C64::new(c[0], c[1])),
                );
                e.set_state(crate::quantum::DensityMatrix::from_matrix(m)?, u_last)
            }
        }
    }

    pub fn as_dense(&self) -> Option<&DenseEnv> {
        match self {
            Environment::Dense(e) => Some(e),
            _ => None,
        }
    }

    pub fn as_dense_mut(&mut self) -> Option<&mut DenseEnv> {
        match self {
            Environment::Dense(e) => Some(e),
            _ => None,
        }
    }
}

/// Length of the encoded observation for a model.
pub fn observation_dim(model: &Model) -> usize {
    match model {
        Model::TwoLevel { .. } => 2,
        Model::Fridge { .. } => 4,
        Model::Oscillator(_) => 6,
    }
}
