//! Efficiencies, reference bounds and coherence of the refrigerator.

use serde::Serialize;

use crate::env::MachineKind;
use crate::error::{Error, Result};
use crate::quantum::{Baths, CMatrix, QubitEigenbasis};

/// `1 - beta_h / beta_c`.
pub fn carnot_efficiency(beta_hot: f64, beta_cold: f64) -> f64 {
    1.0 - beta_hot / beta_cold
}

/// `1 - sqrt(beta_h / beta_c)`.
pub fn curzon_ahlborn_efficiency(beta_hot: f64, beta_cold: f64) -> f64 {
    1.0 - (beta_hot / beta_cold).sqrt()
}

/// `T_c / (T_h - T_c)`.
pub fn carnot_cop(beta_hot: f64, beta_cold: f64) -> f64 {
    (1.0 / beta_cold) / (1.0 / beta_hot - 1.0 / beta_cold)
}

/// Energy exchanged over one period of a periodic steady state.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct PeriodTotals {
    /// Work done on the system by the control jumps.
    pub work_in: f64,
    pub heat_hot: f64,
    pub heat_cold: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EfficiencyReport {
    /// Work extracted per period, `-work_in`.
    pub work: f64,
    pub heat_hot: f64,
    pub heat_cold: f64,
    /// `W / Q_H` for engines.
    pub efficiency: Option<f64>,
    /// `Q_C / W_in` for refrigerators.
    pub cop: Option<f64>,
    pub eta_carnot: f64,
    pub eta_curzon_ahlborn: f64,
    pub cop_carnot: f64,
    /// `W - Q_H - Q_C`.
    pub first_law_residual: f64,
}

pub fn efficiency_report(kind: MachineKind, baths: &Baths, totals: &PeriodTotals) -> Result<EfficiencyReport> {
    let work = -totals.work_in;
    let (bh, bc) = (baths.hot.beta, baths.cold.beta);
    let (efficiency, cop) = match kind {
        MachineKind::Engine => {
            if !(work > 0.0) {
                return Err(Error::Unsupported(format!("cycle extracts no work (W = {work:e}), not an engine")));
            }
            (Some(work / totals.heat_hot), None)
        }
        MachineKind::Refrigerator => (None, Some(totals.heat_cold / totals.work_in)),
    };
    Ok(EfficiencyReport {
        work,
        heat_hot: totals.heat_hot,
        heat_cold: totals.heat_cold,
        efficiency,
        cop,
        eta_carnot: carnot_efficiency(bh, bc),
        eta_curzon_ahlborn: curzon_ahlborn_efficiency(bh, bc),
        cop_carnot: carnot_cop(bh, bc),
        first_law_residual: work - totals.heat_hot - totals.heat_cold,
    })
}

// Eigenvalues below this are treated as zero before taking logarithms.
const CLIP_TOL: f64 = 1e-9;

fn entropy(probs: &[f64]) -> f64 {
    let clipped: Vec<f64> = probs.iter().map(|&p| if p < CLIP_TOL { 0.0 } else { p }).collect();
    let total: f64 = clipped.iter().sum();
    clipped
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| {
            let q = p / total;
            -q * q.ln()
        })
        .sum()
}

/// `S(rho_diag) - S(rho)` for a qubit state, with `rho_diag` the state
/// dephased in `basis`. Eigenvalues below 1e-9 are clipped to zero and the
/// rest renormalized.
pub fn relative_entropy_of_coherence(rho: &CMatrix, basis: &QubitEigenbasis) -> f64 {
    let a = rho[(0, 0)].re;
    let d = rho[(1, 1)].re;
    let b = rho[(0, 1)];
    let mean = 0.5 * (a + d);
    let radius = (0.25 * (a - d) * (a - d) + b.norm_sqr()).sqrt();
    let s = entropy(&[mean + radius, mean - radius]);
    let pg = QubitEigenbasis::element(&basis.ground, rho, &basis.ground).re;
    let pe = QubitEigenbasis::element(&basis.excited, rho, &basis.excited).re;
    (entropy(&[pg, pe]) - s).max(0.0)
}

/// Trapezoidal time average of samples `(t, value)` with increasing `t`.
pub fn time_average(samples: &[(f64, f64)]) -> Option<f64> {
    if samples.len() < 2 {
        return samples.first().map(|s| s.1);
    }
    let span = samples.last().unwrap().0 - samples[0].0;
    let area: f64 = samples.windows(2).map(|w| 0.5 * (w[0].1 + w[1].1) * (w[1].0 - w[0].0)).sum();
    Some(area / span)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::{BathCoupling, BathSpec, C64};

    fn baths(bh: f64, bc: f64) -> Baths {
        let spec = |beta| BathSpec {
            beta,
            coupling: BathCoupling::Rate(1.0),
        };
        Baths {
            hot: spec(bh),
            cold: spec(bc),
        }
    }

    #[test]
    fn reference_bounds() {
        assert!((carnot_efficiency(1.0, 2.0) - 0.5).abs() < 1e-15);
        assert!((curzon_ahlborn_efficiency(1.0, 2.0) - (1.0 - 0.5f64.sqrt())).abs() < 1e-15);
        assert!((curzon_ahlborn_efficiency(0.2, 2.0) - 0.683772233983162).abs() < 1e-12);
        assert!((carnot_cop(1.0, 2.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn engine_report_and_non_engine_error() {
        let t = PeriodTotals {
            work_in: -0.3,
            heat_hot: 1.0,
            heat_cold: -0.7,
        };
        let r = efficiency_report(MachineKind::Engine, &baths(1.0, 2.0), &t).unwrap();
        assert!((r.efficiency.unwrap() - 0.3).abs() < 1e-15);
        assert!(r.first_law_residual.abs() < 1e-15);
        let t = PeriodTotals {
            work_in: 0.3,
            heat_hot: -1.0,
            heat_cold: 0.7,
        };
        assert!(efficiency_report(MachineKind::Engine, &baths(1.0, 2.0), &t).is_err());
        let r = efficiency_report(MachineKind::Refrigerator, &baths(1.0, 2.0), &t).unwrap();
        assert!((r.cop.unwrap() - 0.7 / 0.3).abs() < 1e-15);
    }

    #[test]
    fn coherence_limits() {
        let basis = QubitEigenbasis::fridge(1.0, 0.12, 0.3);
        let diag = QubitEigenbasis::outer(&basis.ground, &basis.ground) * C64::new(0.7, 0.0)
            + QubitEigenbasis::outer(&basis.excited, &basis.excited) * C64::new(0.3, 0.0);
        assert!(relative_entropy_of_coherence(&diag, &basis) < 1e-12);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let plus = [basis.ground[0] * s + basis.excited[0] * s, basis.ground[1] * s + basis.excited[1] * s];
        let pure = QubitEigenbasis::outer(&plus, &plus);
        assert!((relative_entropy_of_coherence(&pure, &basis) - std::f64::consts::LN_2).abs() < 1e-9);
    }

    #[test]
    fn trapezoid_average() {
        assert_eq!(time_average(&[(0.0, 1.0), (1.0, 3.0), (2.0, 3.0)]), Some(2.5));
    }
}
