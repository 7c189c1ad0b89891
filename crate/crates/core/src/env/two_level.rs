use super::{reward_from_heat, EnvConfig, HybridAction, StepOutcome};
use crate::error::{Error, Result};
use crate::quantum::{fermi, BathCoupling, BathTag, HeatFlows, Model};

/// Two-level engine with exact exponential relaxation of the excited
/// population `p`.
#[derive(Clone, Debug)]
pub struct TwoLevelEnv {
    config: EnvConfig,
    e0: f64,
    rates: [f64; 2],
    p: f64,
    u_last: f64,
}

impl TwoLevelEnv {
    pub fn new(config: EnvConfig) -> Result<Self> {
        let e0 = match config.model {
            Model::TwoLevel { e0 } => e0,
            _ => return Err(Error::InvalidParameter("two-level environment needs the two-level model".into())),
        };
        let mut rates = [0.0; 2];
        for (slot, tag) in rates.iter_mut().zip([BathTag::Hot, BathTag::Cold]) {
            *slot = match config.baths.get(tag).coupling {
                BathCoupling::Rate(g) => g,
                _ => return Err(Error::InvalidParameter("two-level baths need flat rates".into())),
            };
        }
        let mut env = Self {
            config,
            e0,
            rates,
            p: 0.0,
            u_last: 0.0,
        };
        env.reset();
        Ok(env)
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    /// Thermal population of the cold bath at the initial control.
    pub fn reset(&mut self) {
        let u0 = self.config.initial_u();
        self.u_last = u0;
        self.p = fermi(self.config.baths.cold.beta * u0 * self.e0);
    }

    pub fn population(&self) -> f64 {
        self.p
    }

    pub fn set_state(&mut self, p: f64, u_last: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidParameter(format!("population {p} outside [0, 1]")));
        }
        self.p = p;
        self.u_last = u_last;
        Ok(())
    }

    pub fn u_last(&self) -> f64 {
        self.u_last
    }

    /// `Tr[rho H] = E0 u (p - 1/2)`.
    pub fn energy(&self) -> f64 {
        self.e0 * self.u_last * (self.p - 0.5)
    }

    pub fn observation(&self) -> Vec<f64> {
        vec![self.p, self.u_last]
    }

    pub fn step(&mut self, action: HybridAction) -> Result<StepOutcome> {
        self.config.actions.check(&action)?;
        let u = action.u;
        let energy_before = self.energy();
        let work_in = self.e0 * (u - self.u_last) * (self.p - 0.5);
        self.u_last = u;

        let mut heat = HeatFlows::default();
        for (i, tag) in [BathTag::Hot, BathTag::Cold].into_iter().enumerate() {
            if !action.d.couples(tag) {
                continue;
            }
            let beta = self.config.baths.get(tag).beta;
            let target = fermi(beta * u * self.e0);
            let decay = (-self.rates[i] * self.config.dt).exp();
            let p_new = target + (self.p - target) * decay;
            heat.add(tag, u * self.e0 * (p_new - self.p));
            self.p = p_new;
        }
        if !self.p.is_finite() {
            return Err(Error::NonFinite("two-level population".into()));
        }
        Ok(StepOutcome {
            reward: reward_from_heat(self.config.kind(), &heat, self.config.dt),
            work_in,
            heat,
            energy_before,
            energy_after: self.energy(),
        })
    }
}
