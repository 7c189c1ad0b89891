//! Fixed-step integration of the master equation with constant controls.

use nalgebra::SymmetricEigen;

use super::density::DensityMatrix;
use super::model::{build_hamiltonian, BathTag, LindbladChannel, Model};
use super::operator::{dagger, real, trace, CMatrix, SparseOp, I, ONE};
use crate::error::{Error, Result};

/// Largest substep length used when no stricter stability bound applies.
pub const DEFAULT_MAX_SUBSTEP: f64 = 0.02;

/// Trace drift that aborts a propagation.
pub const TRACE_DRIFT_LIMIT: f64 = 1e-8;

// Classical RK4 is stable on the imaginary axis up to |h lambda| = 2.83.
const STABILITY_MARGIN: f64 = 2.0;

/// Heat drawn from each bath.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct HeatFlows {
    pub hot: f64,
    pub cold: f64,
}

impl HeatFlows {
    pub fn total(&self) -> f64 {
        self.hot + self.cold
    }

    pub fn get(&self, tag: BathTag) -> f64 {
        match tag {
            BathTag::Hot => self.hot,
            BathTag::Cold => self.cold,
        }
    }

    pub fn add(&mut self, tag: BathTag, value: f64) {
        match tag {
            BathTag::Hot => self.hot += value,
            BathTag::Cold => self.cold += value,
        }
    }
}

impl std::ops::AddAssign for HeatFlows {
    fn add_assign(&mut self, rhs: Self) {
        self.hot += rhs.hot;
        self.cold += rhs.cold;
    }
}

/// Precomputed generator `d rho/dt = -i(Heff rho - rho Heff^+) + sum_k g_k A_k rho A_k^+`.
pub struct Liouvillian {
    dim: usize,
    minus_i_heff: SparseOp,
    jumps: Vec<(f64, SparseOp)>,
    heat_ops: Vec<(BathTag, SparseOp)>,
    stiffness: f64,
}

impl Liouvillian {
    pub fn new(hamiltonian: &CMatrix, channels: &[LindbladChannel]) -> Result<Self> {
        let dim = hamiltonian.nrows();
        if hamiltonian.ncols() != dim {
            return Err(Error::ShapeMismatch {
                context: "Hamiltonian",
                expected: dim,
                actual: hamiltonian.ncols(),
            });
        }
        let mut heff = hamiltonian.clone();
        let mut jumps = Vec::new();
        let mut heat_ops = Vec::new();
        let mut stiffness = spectral_spread(hamiltonian);
        for channel in channels {
            channel.validate(dim)?;
            // Tr[H D(rho)] = Tr[M rho] with M = sum_k g_k (A^+ H A - {A^+ A, H}/2).
            let mut heat_op = CMatrix::zeros(dim, dim);
            for (op, &rate) in channel.jump_ops.iter().zip(&channel.rates) {
                if rate == 0.0 {
                    continue;
                }
                let op_dag = dagger(op);
                let number = sparse_product(&op_dag, op);
                heff -= &number * (I * real(0.5 * rate));
                let sandwich = sparse_product(&op_dag, &sparse_product(hamiltonian, op));
                let anti = sparse_product(&number, hamiltonian) + sparse_product(hamiltonian, &number);
                heat_op += (sandwich - anti * real(0.5)) * real(rate);
                stiffness += 2.0 * rate * spectral_spread_from_zero(&number);
                jumps.push((rate, SparseOp::from_dense(op)));
            }
            heat_ops.push((channel.bath, SparseOp::from_dense(&heat_op)));
        }
        Ok(Self {
            dim,
            minus_i_heff: SparseOp::from_dense(&(heff * (-I))),
            jumps,
            heat_ops,
            stiffness,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Bound on the generator's spectral radius, used to choose stable substeps.
    ///
    /// The commutator with `H` has norm `E_max - E_min` and each dissipator
    /// at most `2 gamma ||A^+ A||`, so their sum bounds the superoperator norm.
    pub fn stiffness(&self) -> f64 {
        self.stiffness
    }

    /// Writes `d rho/dt` into `out`; `scratch` must have the same shape.
    ///
    /// Every term is evaluated complex-linearly. Shortcuts such as
    /// `A rho A^+ = A (A rho)^+` hold only for Hermitian input and let
    /// round-off in the anti-Hermitian part grow without bound.
    pub fn apply(&self, rho: &CMatrix, out: &mut CMatrix, scratch: &mut CMatrix) {
        // S rho + rho S^+ with S = -i Heff.
        self.minus_i_heff.mul_into(rho, ONE, out);
        self.minus_i_heff.mul_adjoint_right_add(rho, ONE, out);
        for (rate, op) in &self.jumps {
            op.mul_into(rho, ONE, scratch);
            op.mul_adjoint_right_add(scratch, real(*rate), out);
        }
    }

    /// Instantaneous heat current out of each coupled bath.
    pub fn heat_rates(&self, rho: &CMatrix) -> HeatFlows {
        let mut flows = HeatFlows::default();
        for (tag, op) in &self.heat_ops {
            flows.add(*tag, op.trace_with(rho).re);
        }
        flows
    }

    /// Substep count meeting both the accuracy cap and the RK4 stability bound.
    pub fn recommended_substeps(&self, dt: f64, max_substep: f64) -> usize {
        let by_accuracy = (dt / max_substep).ceil();
        let by_stability = (dt * self.stiffness / STABILITY_MARGIN).ceil();
        by_accuracy.max(by_stability).max(1.0) as usize
    }
}

/// Gershgorin interval `[lo, hi]` containing the spectrum of a Hermitian matrix.
fn gershgorin(m: &CMatrix) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..m.nrows() {
        let radius: f64 = (0..m.ncols()).filter(|&j| j != i).map(|j| m[(i, j)].norm()).sum();
        lo = lo.min(m[(i, i)].re - radius);
        hi = hi.max(m[(i, i)].re + radius);
    }
    (lo, hi)
}

fn spectral_spread(m: &CMatrix) -> f64 {
    let (lo, hi) = gershgorin(m);
    hi - lo
}

/// Bound on the largest eigenvalue of a positive semidefinite matrix.
fn spectral_spread_from_zero(m: &CMatrix) -> f64 {
    gershgorin(m).1.max(0.0)
}

/// Dense product `a b` evaluated through the diagonal storage of `a`.
fn sparse_product(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let mut out = CMatrix::zeros(a.nrows(), b.ncols());
    SparseOp::from_dense(a).mul_add(b, ONE, &mut out);
    out
}

fn add_scaled(dst: &mut CMatrix, scale: f64, src: &CMatrix) {
    for (d, s) in dst.as_mut_slice().iter_mut().zip(src.as_slice()) {
        *d += s * scale;
    }
}

/// Result of a constant-control propagation.
#[derive(Clone, Debug)]
pub struct Propagation {
    pub state: DensityMatrix,
    pub heat: HeatFlows,
}

/// Integrates the master equation for `dt` at fixed controls with `substeps`
/// classical RK4 steps. Heat currents are integrated with the same stages, so
/// the energy balance closes to round-off.
pub fn propagate_constant(
    rho: &DensityMatrix,
    hamiltonian: &CMatrix,
    channels: &[LindbladChannel],
    dt: f64,
    substeps: usize,
) -> Result<Propagation> {
    let generator = Liouvillian::new(hamiltonian, channels)?;
    propagate_with(rho, &generator, dt, substeps, |_, _| {})
}

/// Like [`propagate_constant`] with a prebuilt generator, calling `observer`
/// with `(elapsed time, state)` at t = 0 and after every substep.
pub fn propagate_with(
    rho: &DensityMatrix,
    generator: &Liouvillian,
    dt: f64,
    substeps: usize,
    mut observer: impl FnMut(f64, &CMatrix),
) -> Result<Propagation> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidParameter(format!("propagation time must be positive, got {dt}")));
    }
    if substeps == 0 {
        return Err(Error::InvalidParameter("substep count must be at least 1".into()));
    }
    if rho.dim() != generator.dim() {
        return Err(Error::ShapeMismatch {
            context: "density matrix vs generator",
            expected: generator.dim(),
            actual: rho.dim(),
        });
    }
    let n = rho.dim();
    let h = dt / substeps as f64;
    let mut state = rho.matrix().clone();
    let mut heat = HeatFlows::default();
    let initial_trace = trace(&state);

    let mut k1 = CMatrix::zeros(n, n);
    let mut k2 = CMatrix::zeros(n, n);
    let mut k3 = CMatrix::zeros(n, n);
    let mut k4 = CMatrix::zeros(n, n);
    let mut stage = CMatrix::zeros(n, n);
    let mut scratch = CMatrix::zeros(n, n);

    observer(0.0, &state);
    for step in 0..substeps {
        generator.apply(&state, &mut k1, &mut scratch);
        let j1 = generator.heat_rates(&state);

        stage.copy_from(&state);
        add_scaled(&mut stage, 0.5 * h, &k1);
        generator.apply(&stage, &mut k2, &mut scratch);
        let j2 = generator.heat_rates(&stage);

        stage.copy_from(&state);
        add_scaled(&mut stage, 0.5 * h, &k2);
        generator.apply(&stage, &mut k3, &mut scratch);
        let j3 = generator.heat_rates(&stage);

        stage.copy_from(&state);
        add_scaled(&mut stage, h, &k3);
        generator.apply(&stage, &mut k4, &mut scratch);
        let j4 = generator.heat_rates(&stage);

        let w = h / 6.0;
        add_scaled(&mut state, w, &k1);
        add_scaled(&mut state, 2.0 * w, &k2);
        add_scaled(&mut state, 2.0 * w, &k3);
        add_scaled(&mut state, w, &k4);
        heat.hot += w * (j1.hot + 2.0 * j2.hot + 2.0 * j3.hot + j4.hot);
        heat.cold += w * (j1.cold + 2.0 * j2.cold + 2.0 * j3.cold + j4.cold);

        observer(h * (step + 1) as f64, &state);
    }

    if state.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(Error::NonFinite("propagated density matrix".into()));
    }
    let drift = (trace(&state) - initial_trace).norm();
    if drift > TRACE_DRIFT_LIMIT {
        return Err(Error::TraceDrift { drift });
    }
    let mut state = DensityMatrix::from_matrix(state)?;
    state.symmetrize();
    Ok(Propagation { state, heat })
}

/// Work supplied by an instantaneous control change. The state itself is
/// untouched by a sudden quench, which the shared borrow makes explicit.
pub fn sudden_jump(rho: &DensityMatrix, model: &Model, u_old: f64, u_new: f64) -> Result<f64> {
    if u_old == u_new {
        return Ok(0.0);
    }
    let delta_h = build_hamiltonian(model, u_new)? - build_hamiltonian(model, u_old)?;
    Ok(rho.expectation(&delta_h).re)
}

/// Thermal state `exp(-beta H)/Z`, computed in the eigenbasis of `H` with the
/// ground energy shifted to zero so the exponentials never overflow.
pub fn gibbs_state(hamiltonian: &CMatrix, beta: f64) -> Result<DensityMatrix> {
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(Error::InvalidParameter(format!("inverse temperature must be positive, got {beta}")));
    }
    let herm = (hamiltonian + hamiltonian.adjoint()) * real(0.5);
    let eig = SymmetricEigen::new(herm);
    let e_min = eig.eigenvalues.min();
    let weights: Vec<f64> = eig.eigenvalues.iter().map(|&e| (-beta * (e - e_min)).exp()).collect();
    let z: f64 = weights.iter().sum();
    if !z.is_finite() || z <= 0.0 {
        return Err(Error::NonFinite("Gibbs partition function".into()));
    }
    let n = hamiltonian.nrows();
    let v = &eig.eigenvectors;
    let mut rho = CMatrix::zeros(n, n);
    for (k, w) in weights.iter().enumerate() {
        let p = w / z;
        if p == 0.0 {
            continue;
        }
        let col = v.column(k);
        for i in 0..n {
            for j in 0..n {
                rho[(i, j)] += col[i] * col[j].conj() * p;
            }
        }
    }
    let mut state = DensityMatrix::from_matrix(rho)?;
    state.symmetrize();
    Ok(state)
}

/// `|| d rho/dt ||` (largest entry) for a given state.
pub fn generator_norm(rho: &DensityMatrix, hamiltonian: &CMatrix, channels: &[LindbladChannel]) -> Result<f64> {
    let generator = Liouvillian::new(hamiltonian, channels)?;
    let n = rho.dim();
    let mut out = CMatrix::zeros(n, n);
    let mut scratch = CMatrix::zeros(n, n);
    generator.apply(rho.matrix(), &mut out, &mut scratch);
    Ok(out.iter().map(|v| v.norm()).fold(0.0, f64::max))
}
