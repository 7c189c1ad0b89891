use super::{reward_from_heat, EnvConfig, HybridAction, StepOutcome};
use crate::error::{Error, Result};
use crate::quantum::{BathCoupling, BathTag, HeatFlows, Model};

/// Offset inside the log encoding `log(|O| + LOG_FLOOR)`.
pub const LOG_FLOOR: f64 = 1e-20;

/// Second moments that close under the oscillator dynamics.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OscillatorMoments {
    /// `<p^2/2m + m w^2 q^2/2>`
    pub h: f64,
    /// `<p^2/2m - m w^2 q^2/2>`
    pub l: f64,
    /// `<qp + pq>`
    pub d: f64,
}

/// Thermal energy `(w/2) coth(beta w/2)`.
pub fn oscillator_thermal_energy(omega: f64, beta: f64) -> f64 {
    0.5 * omega / (0.5 * beta * omega).tanh()
}

/// Harmonic oscillator engine evolved through its closed moment equations.
///
/// Between jumps the pair `(L, w D/2)` rotates at angular frequency `2w` and,
/// when a bath is attached, decays at its rate together with `H - H_eq`.
#[derive(Clone, Debug)]
pub struct OscillatorEnv {
    config: EnvConfig,
    omega0: f64,
    rates: [f64; 2],
    m: OscillatorMoments,
    u_last: f64,
    jump: JumpMap,
}

/// Moment update applied at a control change, `(moments, u_old, u_new)`.
pub type JumpMap = fn(OscillatorMoments, f64, f64) -> OscillatorMoments;

impl OscillatorEnv {
    pub fn new(config: EnvConfig) -> Result<Self> {
        let omega0 = match &config.model {
            Model::Oscillator(o) => o.omega0,
            _ => return Err(Error::InvalidParameter("oscillator environment needs the oscillator model".into())),
        };
        if !(config.actions.u_min > 0.0) {
            return Err(Error::InvalidParameter("oscillator controls must be positive".into()));
        }
        let mut rates = [0.0; 2];
        for (slot, tag) in rates.iter_mut().zip([BathTag::Hot, BathTag::Cold]) {
            *slot = match config.baths.get(tag).coupling {
                BathCoupling::Rate(g) => g,
                _ => return Err(Error::InvalidParameter("oscillator baths need flat rates".into())),
            };
        }
        let mut env = Self {
            config,
            omega0,
            rates,
            m: OscillatorMoments { h: 0.0, l: 0.0, d: 0.0 },
            u_last: 0.0,
            jump: jump_moments,
        };
        env.reset();
        Ok(env)
    }

    /// Replaces the jump update, for checking that the oracle suite notices.
    pub fn with_jump_map(mut self, jump: JumpMap) -> Self {
        self.jump = jump;
        self
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn reset(&mut self) {
        let u0 = self.config.initial_u();
        self.u_last = u0;
        self.m = OscillatorMoments {
            h: oscillator_thermal_energy(u0 * self.omega0, self.config.baths.cold.beta),
            l: 0.0,
            d: 0.0,
        };
    }

    pub fn moments(&self) -> OscillatorMoments {
        self.m
    }

    pub fn set_state(&mut self, m: OscillatorMoments, u_last: f64) {
        self.m = m;
        self.u_last = u_last;
    }

    pub fn u_last(&self) -> f64 {
        self.u_last
    }

    pub fn energy(&self) -> f64 {
        self.m.h
    }

    /// `(log|H|, log|L|, log|D|, sign L, sign D, u)`.
    pub fn observation(&self) -> Vec<f64> {
        let lg = |x: f64| (x.abs() + LOG_FLOOR).ln();
        vec![lg(self.m.h), lg(self.m.l), lg(self.m.d), sign(self.m.l), sign(self.m.d), self.u_last]
    }

    pub fn step(&mut self, action: HybridAction) -> Result<StepOutcome> {
        self.config.actions.check(&action)?;
        let energy_before = self.m.h;
        let u = action.u;

        let jumped = (self.jump)(self.m, self.u_last, u);
        let work_in = jumped.h - self.m.h;
        self.m = jumped;
        self.u_last = u;

        let omega = u * self.omega0;
        let dt = self.config.dt;
        let mut heat = HeatFlows::default();
        let mut decay = 1.0;
        let mut h = self.m.h;
        for (i, tag) in [BathTag::Hot, BathTag::Cold].into_iter().enumerate() {
            if !action.d.couples(tag) {
                continue;
            }
            let f = (-self.rates[i] * dt).exp();
            let h_eq = oscillator_thermal_energy(omega, self.config.baths.get(tag).beta);
            let h_new = h_eq + (h - h_eq) * f;
            heat.add(tag, h_new - h);
            h = h_new;
            decay *= f;
        }
        let (c, s) = ((2.0 * omega * dt).cos(), (2.0 * omega * dt).sin());
        let l = self.m.l;
        let dd = 0.5 * omega * self.m.d;
        let l_new = decay * (l * c - dd * s);
        let dd_new = decay * (dd * c + l * s);
        self.m = OscillatorMoments {
            h,
            l: l_new,
            d: 2.0 * dd_new / omega,
        };
        if !(self.m.h.is_finite() && self.m.l.is_finite() && self.m.d.is_finite()) {
            return Err(Error::NonFinite("oscillator moments".into()));
        }
        Ok(StepOutcome {
            reward: reward_from_heat(self.config.kind(), &heat, dt),
            work_in,
            heat,
            energy_before,
            energy_after: self.m.h,
        })
    }
}

/// Moments right after an instantaneous frequency change `u_old -> u_new`.
/// Only the potential part of the energy rescales, by `(u_new/u_old)^2`.
pub fn jump_moments(m: OscillatorMoments, u_old: f64, u_new: f64) -> OscillatorMoments {
    if u_old == u_new {
        return m;
    }
    let r = (u_new / u_old).powi(2);
    OscillatorMoments {
        h: 0.5 * ((1.0 + r) * m.h + (1.0 - r) * m.l),
        l: 0.5 * ((1.0 - r) * m.h + (1.0 + r) * m.l),
        d: m.d,
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}
