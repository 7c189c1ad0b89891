use super::oscillator::OscillatorMoments;
use super::{reward_from_heat, EnvConfig, HybridAction, StepOutcome, LOG_FLOOR};
use crate::error::{Error, Result};
use crate::quantum::{
    build_channels, build_hamiltonian, gibbs_state, propagate_with, sudden_jump, CMatrix, DensityMatrix,
    Liouvillian, Model, QubitEigenbasis,
};

/// Environment backed by dense master-equation propagation. It drives the
/// refrigerator and serves as the reference for the closed-form engines.
#[derive(Clone, Debug)]
pub struct DenseEnv {
    config: EnvConfig,
    rho: DensityMatrix,
    u_last: f64,
    hamiltonian: CMatrix,
}

impl DenseEnv {
    pub fn new(config: EnvConfig) -> Result<Self> {
        let u0 = config.initial_u();
        let hamiltonian = build_hamiltonian(&config.model, u0)?;
        let rho = gibbs_state(&hamiltonian, config.baths.cold.beta)?;
        Ok(Self {
            config,
            rho,
            u_last: u0,
            hamiltonian,
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    /// Cold-bath Gibbs state at the initial control.
    pub fn reset(&mut self) -> Result<()> {
        let u0 = self.config.initial_u();
        self.hamiltonian = build_hamiltonian(&self.config.model, u0)?;
        self.rho = gibbs_state(&self.hamiltonian, self.config.baths.cold.beta)?;
        self.u_last = u0;
        Ok(())
    }

    pub fn state(&self) -> &DensityMatrix {
        &self.rho
    }

    pub fn set_state(&mut self, rho: DensityMatrix, u_last: f64) -> Result<()> {
        if rho.dim() != self.config.model.dim() {
            return Err(Error::ShapeMismatch {
                context: "density matrix",
                expected: self.config.model.dim(),
                actual: rho.dim(),
            });
        }
        self.hamiltonian = build_hamiltonian(&self.config.model, u_last)?;
        self.rho = rho;
        self.u_last = u_last;
        Ok(())
    }

    pub fn u_last(&self) -> f64 {
        self.u_last
    }

    pub fn energy(&self) -> f64 {
        self.rho.expectation(&self.hamiltonian).re
    }

    pub fn state_vector(&self) -> Vec<f64> {
        self.rho.matrix().iter().flat_map(|v| [v.re, v.im]).collect()
    }

    /// Population of the highest retained level; a truncation diagnostic.
    pub fn top_occupation(&self) -> f64 {
        let n = self.rho.dim();
        self.rho.matrix()[(n - 1, n - 1)].re
    }

    /// `(H, L, D)` expectations for the oscillator model.
    pub fn oscillator_moments(&self) -> Result<OscillatorMoments> {
        match &self.config.model {
            Model::Oscillator(o) => {
                let ops = o.operators(self.u_last)?;
                Ok(OscillatorMoments {
                    h: self.rho.expectation(&ops.hamiltonian).re,
                    l: self.rho.expectation(&ops.lagrangian).re,
                    d: self.rho.expectation(&ops.correlation).re,
                })
            }
            _ => Err(Error::Unsupported("oscillator moments of a non-oscillator model".into())),
        }
    }

    /// Same layout as the closed-form environment of each model.
    pub fn observation(&self) -> Vec<f64> {
        let rho = self.rho.matrix();
        match &self.config.model {
            Model::TwoLevel { .. } => vec![rho[(0, 0)].re, self.u_last],
            Model::Fridge { e0, delta } => {
                let basis = QubitEigenbasis::fridge(*e0, *delta, self.u_last);
                let ee = QubitEigenbasis::element(&basis.excited, rho, &basis.excited);
                let ge = QubitEigenbasis::element(&basis.ground, rho, &basis.excited);
                vec![ee.re, ge.re, ge.im, self.u_last]
            }
            Model::Oscillator(_) => {
                let m = self.oscillator_moments().expect("oscillator model");
                let lg = |x: f64| (x.abs() + LOG_FLOOR).ln();
                let sg = |x: f64| if x > 0.0 { 1.0 } else if x < 0.0 { -1.0 } else { 0.0 };
                vec![lg(m.h), lg(m.l), lg(m.d), sg(m.l), sg(m.d), self.u_last]
            }
        }
    }

    pub fn step(&mut self, action: HybridAction) -> Result<StepOutcome> {
        self.step_observed(action, |_, _| {})
    }

    /// Like [`DenseEnv::step`], calling `observer(t, rho)` at every RK4 substep
    /// of the segment (t measured from the start of the segment).
    pub fn step_observed(
        &mut self,
        action: HybridAction,
        observer: impl FnMut(f64, &CMatrix),
    ) -> Result<StepOutcome> {
        self.config.actions.check(&action)?;
        let energy_before = self.energy();
        let model = &self.config.model;
        let work_in = sudden_jump(&self.rho, model, self.u_last, action.u)?;
        if action.u != self.u_last {
            self.hamiltonian = build_hamiltonian(model, action.u)?;
            self.u_last = action.u;
        }
        let channels = build_channels(model, &self.config.baths, action.u, action.d)?;
        let generator = Liouvillian::new(&self.hamiltonian, &channels)?;
        let substeps = generator.recommended_substeps(self.config.dt, self.config.max_substep);
        let out = propagate_with(&self.rho, &generator, self.config.dt, substeps, observer)?;
        self.rho = out.state;
        Ok(StepOutcome {
            reward: reward_from_heat(self.config.kind(), &out.heat, self.config.dt),
            work_in,
            heat: out.heat,
            energy_before,
            energy_after: self.energy(),
        })
    }
}
