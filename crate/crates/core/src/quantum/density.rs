use nalgebra::SymmetricEigen;

use super::operator::{hermiticity_defect, trace, CMatrix, C64};
use crate::error::{Error, Result};

pub const HERMITICITY_TOL: f64 = 1e-12;
pub const TRACE_TOL: f64 = 1e-10;
pub const POSITIVITY_TOL: f64 = -1e-9;

/// Complex Hermitian unit-trace matrix describing the system state.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    entries: CMatrix,
}

impl DensityMatrix {
    /// Wraps a matrix after checking that it is square. Physical invariants
    /// are checked separately by [`DensityMatrix::validate`].
    pub fn from_matrix(entries: CMatrix) -> Result<Self> {
        if entries.nrows() != entries.ncols() {
            return Err(Error::ShapeMismatch {
                context: "density matrix",
                expected: entries.nrows(),
                actual: entries.ncols(),
            });
        }
        Ok(Self { entries })
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        Self {
            entries: CMatrix::identity(dim, dim) / C64::new(dim as f64, 0.0),
        }
    }

    /// Pure state `|psi><psi|` from an (unnormalized) amplitude vector.
    pub fn pure(amplitudes: &[C64]) -> Self {
        let norm: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        let n = amplitudes.len();
        let entries = CMatrix::from_fn(n, n, |i, j| amplitudes[i] * amplitudes[j].conj() / (norm * norm));
        Self { entries }
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.entries
    }

    pub fn into_matrix(self) -> CMatrix {
        self.entries
    }

    pub fn trace(&self) -> C64 {
        trace(&self.entries)
    }

    /// `Tr[rho op]`.
    pub fn expectation(&self, op: &CMatrix) -> C64 {
        super::operator::trace_product(&self.entries, op)
    }

    pub fn hermiticity_defect(&self) -> f64 {
        hermiticity_defect(&self.entries)
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        let herm = (&self.entries + self.entries.adjoint()) * C64::new(0.5, 0.0);
        let eig = SymmetricEigen::new(herm);
        eig.eigenvalues.iter().copied().collect()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues().into_iter().fold(f64::INFINITY, f64::min)
    }

    /// Checks Hermiticity, unit trace and positive semidefiniteness.
    pub fn validate(&self) -> Result<()> {
        if self.entries.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::NonFinite("density matrix".into()));
        }
        let herm = self.hermiticity_defect();
        if herm > HERMITICITY_TOL {
            return Err(Error::InvalidParameter(format!(
                "density matrix not Hermitian (defect {herm:.3e})"
            )));
        }
        let tr = self.trace();
        if (tr - C64::new(1.0, 0.0)).norm() > TRACE_TOL {
            return Err(Error::InvalidParameter(format!("density matrix trace {tr}")));
        }
        let lo = self.min_eigenvalue();
        if lo < POSITIVITY_TOL {
            return Err(Error::InvalidParameter(format!(
                "density matrix not positive (min eigenvalue {lo:.3e})"
            )));
        }
        Ok(())
    }

    /// Replaces the entries with their Hermitian part, removing round-off asymmetry.
    pub(crate) fn symmetrize(&mut self) {
        let adj = self.entries.adjoint();
        self.entries = (&self.entries + adj) * C64::new(0.5, 0.0);
    }

    /// Largest entrywise distance to another state.
    pub fn distance(&self, other: &DensityMatrix) -> f64 {
        self.entries
            .iter()
            .zip(other.entries.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn maximally_mixed_is_valid() {
        let rho = DensityMatrix::maximally_mixed(3);
        rho.validate().unwrap();
        assert!((rho.min_eigenvalue() - 1.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn pure_state_has_unit_purity() {
        let rho = DensityMatrix::pure(&[C64::new(1.0, 0.0), C64::new(0.0, 1.0)]);
        rho.validate().unwrap();
        let purity = rho.expectation(rho.matrix()).re;
        assert!((purity - 1.0).abs() < 1e-14);
    }

    #[test]
    fn rejects_negative_population() {
        let m = CMatrix::from_row_slice(
            2,
            2,
            &[C64::new(1.1, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(-0.1, 0.0)],
        );
        let rho = DensityMatrix::from_matrix(m).unwrap();
        assert!(rho.validate().is_err());
    }
}
