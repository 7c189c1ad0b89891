//! Dense and sparse complex operators.

use nalgebra::DMatrix;
use num_complex::Complex64;

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

pub fn real(x: f64) -> C64 {
    C64::new(x, 0.0)
}

pub fn dagger(m: &CMatrix) -> CMatrix {
    m.adjoint()
}

pub fn sigma_x() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO])
}

pub fn sigma_y() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[ZERO, -I, I, ZERO])
}

pub fn sigma_z() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[ONE, ZERO, ZERO, -ONE])
}

/// `|0><1|` in the basis where index 0 is the upper (`sigma_z = +1`) level.
pub fn sigma_plus() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[ZERO, ONE, ZERO, ZERO])
}

pub fn sigma_minus() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[ZERO, ZERO, ONE, ZERO])
}

/// Truncated bosonic lowering operator on `dim` Fock levels.
pub fn lowering(dim: usize) -> CMatrix {
    let mut a = CMatrix::zeros(dim, dim);
    for n in 1..dim {
        a[(n - 1, n)] = real((n as f64).sqrt());
    }
    a
}

pub fn trace(m: &CMatrix) -> C64 {
    (0..m.nrows()).map(|i| m[(i, i)]).sum()
}

/// `Tr[a b]` without forming the product.
pub fn trace_product(a: &CMatrix, b: &CMatrix) -> C64 {
    let n = a.nrows();
    let mut acc = ZERO;
    for i in 0..n {
        for k in 0..n {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}

/// Largest absolute deviation from Hermiticity.
pub fn hermiticity_defect(m: &CMatrix) -> f64 {
    let n = m.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

/// Row-sum norm, an upper bound on the spectral radius.
pub fn row_sum_norm(m: &CMatrix) -> f64 {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)].norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Sparse operator stored by diagonals, used inside the Lindblad right-hand
/// side.
///
/// The Fock-space operators of the oscillator are banded, so diagonal storage
/// keeps every inner loop contiguous and the dense oracle affordable at
/// cutoff 60.
#[derive(Clone, Debug)]
pub struct SparseOp {
    dim: usize,
    /// `(k, v)` holds `v[r] = M[r, r + k]` for the rows where `r + k` is valid.
    diagonals: Vec<(isize, Vec<C64>)>,
}

impl SparseOp {
    pub fn from_dense(m: &CMatrix) -> Self {
        let n = m.nrows() as isize;
        let mut diagonals = Vec::new();
        for k in -(n - 1)..n {
            let rows = diagonal_rows(n as usize, k);
            let v: Vec<C64> = rows.clone().map(|r| m[(r, (r as isize + k) as usize)]).collect();
            if v.iter().any(|&x| x != ZERO) {
                diagonals.push((k, v));
            }
        }
        Self {
            dim: m.nrows(),
            diagonals,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.diagonals
            .iter()
            .map(|(_, v)| v.iter().filter(|&&x| x != ZERO).count())
            .sum()
    }

    /// `out = scale * self * x`, overwriting `out`.
    pub fn mul_into(&self, x: &CMatrix, scale: C64, out: &mut CMatrix) {
        out.fill(ZERO);
        self.mul_add(x, scale, out);
    }

    /// `out += scale * self * x`.
    pub fn mul_add(&self, x: &CMatrix, scale: C64, out: &mut CMatrix) {
        let n = self.dim;
        let xs = x.as_slice();
        let os = out.as_mut_slice();
        let scaled: Vec<(isize, Vec<C64>)> = if scale == ONE {
            Vec::new()
        } else {
            self.diagonals
                .iter()
                .map(|(k, v)| (*k, v.iter().map(|&a| scale * a).collect()))
                .collect()
        };
        let diagonals = if scale == ONE { &self.diagonals } else { &scaled };
        for (xc, oc) in xs.chunks_exact(n).zip(os.chunks_exact_mut(n)) {
            for (k, v) in diagonals {
                let rows = diagonal_rows(n, *k);
                let shift = (rows.start as isize + k) as usize;
                let src = &xc[shift..shift + rows.len()];
                for ((o, &a), &b) in oc[rows].iter_mut().zip(v).zip(src) {
                    *o += a * b;
                }
            }
        }
    }

    /// `out += scale * x * self^+`.
    pub fn mul_adjoint_right_add(&self, x: &CMatrix, scale: C64, out: &mut CMatrix) {
        let n = self.dim;
        let xs = x.as_slice();
        let os = out.as_mut_slice();
        for (k, v) in &self.diagonals {
            for (r, &a) in diagonal_rows(n, *k).zip(v) {
                if a == ZERO {
                    continue;
                }
                let c = (r as isize + k) as usize;
                let w = scale * a.conj();
                let src = &xs[c * n..(c + 1) * n];
                for (o, &b) in os[r * n..(r + 1) * n].iter_mut().zip(src) {
                    *o += w * b;
                }
            }
        }
    }

    /// `Tr[self * x]`.
    pub fn trace_with(&self, x: &CMatrix) -> C64 {
        let mut acc = ZERO;
        for (k, v) in &self.diagonals {
            for (r, &a) in diagonal_rows(self.dim, *k).zip(v) {
                acc += a * x[((r as isize + k) as usize, r)];
            }
        }
        acc
    }
}

/// Rows `r` for which `r + k` is a valid column of an `n x n` matrix.
fn diagonal_rows(n: usize, k: isize) -> std::ops::Range<usize> {
    if k >= 0 {
        0..n.saturating_sub(k as usize)
    } else {
        (-k) as usize..n
    }
}
