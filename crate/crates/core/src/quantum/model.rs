//! The three working media: Hamiltonians, bath couplings and jump operators.

use serde::{Deserialize, Serialize};

use super::operator::{dagger, lowering, real, sigma_minus, sigma_plus, sigma_x, sigma_z, CMatrix, C64, I};
use crate::error::{Error, Result};

/// Which bath a dissipator belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BathTag {
    Hot,
    Cold,
}

/// Discrete half of an action: the bath coupled during a step.
///
/// `Both` is the fixed coupling of the refrigerator, where the agent has no
/// discrete choice to make.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BathChoice {
    Hot,
    Cold,
    None,
    Both,
}

impl BathChoice {
    pub fn couples(self, bath: BathTag) -> bool {
        matches!(
            (self, bath),
            (BathChoice::Both, _) | (BathChoice::Hot, BathTag::Hot) | (BathChoice::Cold, BathTag::Cold)
        )
    }

    pub fn label(self) -> &'static str {
        match self {
            BathChoice::Hot => "hot",
            BathChoice::Cold => "cold",
            BathChoice::None => "none",
            BathChoice::Both => "both",
        }
    }

    pub fn from_label(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "hot" => Some(BathChoice::Hot),
            "cold" => Some(BathChoice::Cold),
            "none" => Some(BathChoice::None),
            "both" => Some(BathChoice::Both),
            _ => None,
        }
    }
}

impl std::fmt::Display for BathChoice {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// Harmonic oscillator working medium, truncated to `cutoff` Fock levels of
/// the reference frequency `reference_u * omega0`.
#[derive(Clone, Debug, PartialEq)]
pub struct OscillatorModel {
    pub omega0: f64,
    pub mass: f64,
    pub cutoff: usize,
    pub reference_u: f64,
}

/// Truncated oscillator observables at a fixed control.
pub struct OscillatorOperators {
    /// `p^2/2m + m w^2 q^2/2`
    pub hamiltonian: CMatrix,
    /// `p^2/2m - m w^2 q^2/2`
    pub lagrangian: CMatrix,
    /// `qp + pq`
    pub correlation: CMatrix,
    /// Lowering operator of the instantaneous frequency.
    pub lowering: CMatrix,
}

impl OscillatorModel {
    pub fn frequency(&self, u: f64) -> f64 {
        u * self.omega0
    }

    pub fn operators(&self, u: f64) -> Result<OscillatorOperators> {
        if self.cutoff < 2 {
            return Err(Error::InvalidParameter(format!(
                "Fock cutoff must be at least 2, got {}",
                self.cutoff
            )));
        }
        if !(u > 0.0) {
            return Err(Error::InvalidParameter(format!("oscillator control must be positive, got {u}")));
        }
        let n = self.cutoff;
        let m = self.mass;
        let w_ref = self.frequency(self.reference_u);
        let w = self.frequency(u);

        // Matrix elements of q^2, p^2 and qp + pq in the reference Fock basis,
        // from a^2, a^+^2 and a a^+ + a^+ a = 2n + 1. They equal the truncation
        // of the untruncated products.
        let x2 = 1.0 / (2.0 * m * w_ref);
        let p2s = 0.5 * m * w_ref;
        let mut q2 = CMatrix::zeros(n, n);
        let mut p2 = CMatrix::zeros(n, n);
        let mut qp = CMatrix::zeros(n, n);
        for k in 0..n {
            let sym = 2.0 * k as f64 + 1.0;
            q2[(k, k)] = real(x2 * sym);
            p2[(k, k)] = real(p2s * sym);
            if k + 2 < n {
                let a2 = (((k + 1) * (k + 2)) as f64).sqrt();
                q2[(k, k + 2)] = real(x2 * a2);
                q2[(k + 2, k)] = real(x2 * a2);
                p2[(k, k + 2)] = real(-p2s * a2);
                p2[(k + 2, k)] = real(-p2s * a2);
                qp[(k, k + 2)] = I * (-a2);
                qp[(k + 2, k)] = I * a2;
            }
        }

        let kinetic = p2 * real(0.5 / m);
        let potential = q2 * real(0.5 * m * w * w);

        let a = lowering(n);
        let ratio = (w / w_ref).sqrt();
        let lowering_u = &a * real(0.5 * (ratio + 1.0 / ratio)) + dagger(&a) * real(0.5 * (ratio - 1.0 / ratio));

        Ok(OscillatorOperators {
            hamiltonian: &kinetic + &potential,
            lagrangian: &kinetic - &potential,
            correlation: qp,
            lowering: lowering_u,
        })
    }
}

/// Working medium and its fixed energy scales.
#[derive(Clone, Debug, PartialEq)]
pub enum Model {
    /// `H = E0 u sigma_z / 2`.
    TwoLevel { e0: f64 },
    /// `H = -E0 (delta sigma_x + u sigma_z)`.
    Fridge { e0: f64, delta: f64 },
    Oscillator(OscillatorModel),
}

impl Model {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64, name: &str| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")))
            }
        };
        match self {
            Model::TwoLevel { e0 } => positive(*e0, "E0"),
            Model::Fridge { e0, delta } => {
                positive(*e0, "E0")?;
                positive(*delta, "delta")
            }
            Model::Oscillator(o) => {
                positive(o.omega0, "omega0")?;
                positive(o.mass, "mass")?;
                positive(o.reference_u, "reference control")?;
                if o.cutoff < 2 {
                    return Err(Error::InvalidParameter(format!(
                        "Fock cutoff must be at least 2, got {}",
                        o.cutoff
                    )));
                }
                Ok(())
            }
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Model::TwoLevel { .. } | Model::Fridge { .. } => 2,
            Model::Oscillator(o) => o.cutoff,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Model::TwoLevel { .. } => "two_level",
            Model::Fridge { .. } => "fridge",
            Model::Oscillator(_) => "oscillator",
        }
    }

    /// Instantaneous level spacing at control `u`.
    pub fn gap(&self, u: f64) -> f64 {
        match self {
            Model::TwoLevel { e0 } => e0 * u,
            Model::Fridge { e0, delta } => 2.0 * e0 * (delta * delta + u * u).sqrt(),
            Model::Oscillator(o) => o.frequency(u),
        }
    }
}

/// Instantaneous eigenbasis of the refrigerator Hamiltonian.
///
/// The ground vector has a nonnegative real first component and the excited
/// vector a nonnegative real second component, which fixes the phases of the
/// encoded coherences.
#[derive(Clone, Copy, Debug)]
pub struct QubitEigenbasis {
    pub ground: [C64; 2],
    pub excited: [C64; 2],
    pub gap: f64,
}

impl QubitEigenbasis {
    pub fn fridge(e0: f64, delta: f64, u: f64) -> Self {
        let r = (delta * delta + u * u).sqrt();
        let cos_half = ((1.0 + u / r) / 2.0).max(0.0).sqrt();
        let sin_half = ((1.0 - u / r) / 2.0).max(0.0).sqrt();
        Self {
            ground: [real(cos_half), real(sin_half)],
            excited: [real(-sin_half), real(cos_half)],
            gap: 2.0 * e0 * r,
        }
    }

    /// Unitary whose columns are (ground, excited).
    pub fn unitary(&self) -> CMatrix {
        CMatrix::from_row_slice(
            2,
            2,
            &[self.ground[0], self.excited[0], self.ground[1], self.excited[1]],
        )
    }

    /// `<a| rho |b>` for basis vectors a, b.
    pub fn element(bra: &[C64; 2], rho: &CMatrix, ket: &[C64; 2]) -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        for i in 0..2 {
            for j in 0..2 {
                acc += bra[i].conj() * rho[(i, j)] * ket[j];
            }
        }
        acc
    }

    pub fn outer(a: &[C64; 2], b: &[C64; 2]) -> CMatrix {
        CMatrix::from_fn(2, 2, |i, j| a[i] * b[j].conj())
    }
}

pub fn build_hamiltonian(model: &Model, u: f64) -> Result<CMatrix> {
    if !u.is_finite() {
        return Err(Error::NonFinite(format!("control u = {u}")));
    }
    match model {
        Model::TwoLevel { e0 } => Ok(sigma_z() * real(e0 * u / 2.0)),
        Model::Fridge { e0, delta } => Ok((sigma_x() * real(*delta) + sigma_z() * real(u)) * real(-e0)),
        Model::Oscillator(o) => Ok(o.operators(u)?.hamiltonian),
    }
}

/// How strongly a bath couples to the working medium.
#[derive(Clone, Debug, PartialEq)]
pub enum BathCoupling {
    /// Flat thermalization rate `Gamma`.
    Rate(f64),
    /// Resonant circuit with coupling `g`, quality factor `quality` and base
    /// frequency `omega`.
    Resonator { g: f64, quality: f64, omega: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct BathSpec {
    pub beta: f64,
    pub coupling: BathCoupling,
}

impl BathSpec {
    /// Noise power spectrum of a resonator bath, evaluated at signed energy `e`.
    pub fn noise_spectrum(&self, e: f64) -> Result<f64> {
        match self.coupling {
            BathCoupling::Resonator { g, quality, omega } => {
                if e == 0.0 {
                    return Ok(0.0);
                }
                let detuning = e / omega - omega / e;
                let lorentz = 1.0 / (1.0 + quality * quality * detuning * detuning);
                Ok(0.5 * g * lorentz * e / (self.beta * e).exp_m1())
            }
            BathCoupling::Rate(_) => Err(Error::Unsupported(
                "noise spectrum requested for a flat-rate bath".into(),
            )),
        }
    }

    fn rate(&self) -> Result<f64> {
        match self.coupling {
            BathCoupling::Rate(g) => Ok(g),
            BathCoupling::Resonator { .. } => Err(Error::Unsupported(
                "flat rate requested for a resonator bath".into(),
            )),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Baths {
    pub hot: BathSpec,
    pub cold: BathSpec,
}

impl Baths {
    pub fn get(&self, tag: BathTag) -> &BathSpec {
        match tag {
            BathTag::Hot => &self.hot,
            BathTag::Cold => &self.cold,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.hot.beta > 0.0 && self.cold.beta > self.hot.beta && self.cold.beta.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "need beta_cold > beta_hot > 0, got beta_hot = {}, beta_cold = {}",
                self.hot.beta, self.cold.beta
            )));
        }
        for (name, bath) in [("hot", &self.hot), ("cold", &self.cold)] {
            let ok = match bath.coupling {
                BathCoupling::Rate(g) => g > 0.0,
                BathCoupling::Resonator { g, quality, omega } => g > 0.0 && quality > 0.0 && omega > 0.0,
            };
            if !ok {
                return Err(Error::InvalidParameter(format!("{name} bath couplings must be positive")));
            }
        }
        Ok(())
    }
}

/// Jump operators and rates of one bath.
#[derive(Clone, Debug)]
pub struct LindbladChannel {
    pub jump_ops: Vec<CMatrix>,
    pub rates: Vec<f64>,
    pub bath: BathTag,
}

impl LindbladChannel {
    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.jump_ops.len() != self.rates.len() {
            return Err(Error::ShapeMismatch {
                context: "channel rates",
                expected: self.jump_ops.len(),
                actual: self.rates.len(),
            });
        }
        for (op, &rate) in self.jump_ops.iter().zip(&self.rates) {
            if !(rate >= 0.0) || !rate.is_finite() {
                return Err(Error::InvalidParameter(format!("negative or non-finite rate {rate}")));
            }
            if op.nrows() != dim || op.ncols() != dim {
                return Err(Error::ShapeMismatch {
                    context: "jump operator",
                    expected: dim,
                    actual: op.nrows(),
                });
            }
        }
        Ok(())
    }
}

/// Fermi occupation `1/(1+e^x)`.
pub fn fermi(x: f64) -> f64 {
    if x >= 0.0 {
        let e = (-x).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + x.exp())
    }
}

/// Bose occupation `1/(e^x-1)`.
pub fn bose(x: f64) -> f64 {
    1.0 / x.exp_m1()
}

/// Dissipators active at control `u` for the discrete choice `d`.
///
/// The refrigerator ignores `d`: both of its baths are always coupled.
pub fn build_channels(model: &Model, baths: &Baths, u: f64, d: BathChoice) -> Result<Vec<LindbladChannel>> {
    if !u.is_finite() {
        return Err(Error::NonFinite(format!("control u = {u}")));
    }
    let tags: Vec<BathTag> = match model {
        Model::Fridge { .. } => vec![BathTag::Hot, BathTag::Cold],
        _ => [BathTag::Hot, BathTag::Cold].into_iter().filter(|&t| d.couples(t)).collect(),
    };
    let mut channels = Vec::with_capacity(tags.len());
    for tag in tags {
        let bath = baths.get(tag);
        let channel = match model {
            Model::TwoLevel { e0 } => {
                let gamma = bath.rate()?;
                let x = bath.beta * u * e0;
                LindbladChannel {
                    jump_ops: vec![sigma_plus(), sigma_minus()],
                    rates: vec![gamma * fermi(x), gamma * fermi(-x)],
                    bath: tag,
                }
            }
            Model::Fridge { e0, delta } => {
                let basis = QubitEigenbasis::fridge(*e0, *delta, u);
                let raise = QubitEigenbasis::outer(&basis.excited, &basis.ground) * (-I);
                let lower = QubitEigenbasis::outer(&basis.ground, &basis.excited) * I;
                LindbladChannel {
                    jump_ops: vec![raise, lower],
                    rates: vec![bath.noise_spectrum(basis.gap)?, bath.noise_spectrum(-basis.gap)?],
                    bath: tag,
                }
            }
            Model::Oscillator(o) => {
                let gamma = bath.rate()?;
                let n = bose(bath.beta * o.frequency(u));
                let a = o.operators(u)?.lowering;
                LindbladChannel {
                    jump_ops: vec![dagger(&a), a],
                    rates: vec![gamma * n, gamma * (1.0 + n)],
                    bath: tag,
                }
            }
        };
        channels.push(channel);
    }
    Ok(channels)
}
