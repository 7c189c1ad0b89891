use nalgebra::SymmetricEigen;
use proptest::prelude::*;
use qtm_core::quantum::*;

fn fridge() -> Model {
    Model::Fridge { e0: 1.0, delta: 0.12 }
}

fn fridge_baths() -> Baths {
    Baths {
        hot: BathSpec {
            beta: 10.0 / 3.0,
            coupling: BathCoupling::Resonator {
                g: 1.0,
                quality: 30.0,
                omega: 1.03,
            },
        },
        cold: BathSpec {
            beta: 20.0 / 3.0,
            coupling: BathCoupling::Resonator {
                g: 1.0,
                quality: 30.0,
                omega: 0.24,
            },
        },
    }
}

fn flat_baths(gamma: f64) -> Baths {
    Baths {
        hot: BathSpec {
            beta: 1.0,
            coupling: BathCoupling::Rate(gamma),
        },
        cold: BathSpec {
            beta: 2.0,
            coupling: BathCoupling::Rate(gamma),
        },
    }
}

/// Qubit state from a Bloch vector of length at most one.
fn bloch_state(x: f64, y: f64, z: f64) -> DensityMatrix {
    let m = CMatrix::from_row_slice(
        2,
        2,
        &[
            C64::new(0.5 * (1.0 + z), 0.0),
            C64::new(0.5 * x, -0.5 * y),
            C64::new(0.5 * x, 0.5 * y),
            C64::new(0.5 * (1.0 - z), 0.0),
        ],
    );
    DensityMatrix::from_matrix(m).unwrap()
}

fn max_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

#[test]
fn rk4_converges_at_fourth_order() {
    let h = build_hamiltonian(&fridge(), 0.3).unwrap();
    let channels = build_channels(&fridge(), &fridge_baths(), 0.3, BathChoice::Both).unwrap();
    let rho = bloch_state(0.3, -0.5, 0.6);
    let dt = 4.0;
    let reference = propagate_constant(&rho, &h, &channels, dt, 4096).unwrap();
    let errors: Vec<f64> = [8, 16, 32]
        .iter()
        .map(|&n| {
            let p = propagate_constant(&rho, &h, &channels, dt, n).unwrap();
            max_diff(p.state.matrix(), reference.state.matrix())
        })
        .collect();
    for w in errors.windows(2) {
        let order = (w[0] / w[1]).log2();
        assert!((3.7..4.3).contains(&order), "observed order {order}, errors {errors:?}");
    }
}

#[test]
fn closed_evolution_matches_matrix_exponential() {
    let u = 0.4;
    let h = build_hamiltonian(&fridge(), u).unwrap();
    let rho = bloch_state(0.1, 0.7, -0.2);
    let t = 3.3;
    let p = propagate_constant(&rho, &h, &[], t, 400).unwrap();
    // exp(-iHt) from the eigendecomposition of H.
    let eig = SymmetricEigen::new(h.clone());
    let phases = CMatrix::from_diagonal(&eig.eigenvalues.map(|e| C64::new(0.0, -e * t).exp()));
    let unitary = &eig.eigenvectors * phases * eig.eigenvectors.adjoint();
    let exact = &unitary * rho.matrix() * unitary.adjoint();
    assert!(max_diff(p.state.matrix(), &exact) < 1e-10);
    assert!(p.heat.total().abs() < 1e-12);
}

#[test]
fn two_level_relaxation_is_exponential() {
    let model = Model::TwoLevel { e0: 2.5 };
    let baths = flat_baths(1.0);
    let u = 0.7;
    let h = build_hamiltonian(&model, u).unwrap();
    let channels = build_channels(&model, &baths, u, BathChoice::Hot).unwrap();
    let p0 = 0.9;
    let rho = bloch_state(0.0, 0.0, 2.0 * p0 - 1.0);
    let dt = 0.5;
    let out = propagate_constant(&rho, &h, &channels, dt, 200).unwrap();
    let target = 1.0 / (1.0 + (1.0 * u * 2.5f64).exp());
    let expected = target + (p0 - target) * (-dt).exp();
    // Excited state is the first basis vector.
    assert!((out.state.matrix()[(0, 0)].re - expected).abs() < 1e-11);
    assert!((out.heat.hot - u * 2.5 * (expected - p0)).abs() < 1e-11);
    assert_eq!(out.heat.cold, 0.0);
}

#[test]
fn gibbs_populations() {
    let model = Model::TwoLevel { e0: 2.5 };
    let rho = gibbs_state(&build_hamiltonian(&model, 0.6).unwrap(), 2.0).unwrap();
    let expected = 1.0 / (1.0 + 3.0f64.exp());
    assert!((rho.matrix()[(0, 0)].re - expected).abs() < 1e-14);
    rho.validate().unwrap();
}

#[test]
fn fridge_steady_state_under_both_baths_is_diagonal() {
    // Gap on the hot resonance, so relaxation is fast.
    let u = 0.5;
    let h = build_hamiltonian(&fridge(), u).unwrap();
    let channels = build_channels(&fridge(), &fridge_baths(), u, BathChoice::Both).unwrap();
    let out = propagate_constant(&bloch_state(0.5, 0.5, 0.0), &h, &channels, 2000.0, 40000).unwrap();
    let basis = QubitEigenbasis::fridge(1.0, 0.12, u);
    let coherence = QubitEigenbasis::element(&basis.ground, out.state.matrix(), &basis.excited);
    assert!(coherence.norm() < 1e-8, "coherence {}", coherence.norm());
    // Detailed balance of the summed rates fixes the excited population.
    let rates = |b: &BathSpec| (b.noise_spectrum(basis.gap).unwrap(), b.noise_spectrum(-basis.gap).unwrap());
    let (uh, dh) = rates(&fridge_baths().hot);
    let (uc, dc) = rates(&fridge_baths().cold);
    let pe = (uh + uc) / (uh + uc + dh + dc);
    let got = QubitEigenbasis::element(&basis.excited, out.state.matrix(), &basis.excited).re;
    assert!((got - pe).abs() < 1e-8, "{got} vs {pe}");
}

#[test]
fn oscillator_thermal_state_is_stationary_below_truncation() {
    let model = Model::Oscillator(OscillatorModel {
        omega0: 2.0,
        mass: 1.0,
        cutoff: 40,
        reference_u: 0.75,
    });
    let baths = flat_baths(0.6);
    let u = 0.75;
    let h = build_hamiltonian(&model, u).unwrap();
    let rho = gibbs_state(&h, baths.cold.beta).unwrap();
    let channels = build_channels(&model, &baths, u, BathChoice::Cold).unwrap();
    let out = propagate_constant(&rho, &h, &channels, 1.0, 200).unwrap();
    assert!(max_diff(out.state.matrix(), rho.matrix()) < 1e-12);
    assert!(out.heat.cold.abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn fridge_propagation_preserves_state_and_energy_balance(
        r in 0.0f64..1.0, theta in 0.0f64..std::f64::consts::PI, phi in 0.0f64..6.3,
        u in 0.0f64..0.75, dt in 0.05f64..2.0,
    ) {
        let rho = bloch_state(r * theta.sin() * phi.cos(), r * theta.sin() * phi.sin(), r * theta.cos());
        let h = build_hamiltonian(&fridge(), u).unwrap();
        let channels = build_channels(&fridge(), &fridge_baths(), u, BathChoice::Both).unwrap();
        let out = propagate_constant(&rho, &h, &channels, dt, 64).unwrap();
        let s = &out.state;
        prop_assert!((s.trace() - C64::new(1.0, 0.0)).norm() < 1e-12);
        prop_assert!(s.hermiticity_defect() < 1e-14);
        prop_assert!(s.min_eigenvalue() > -1e-10);
        let de = s.expectation(&h).re - rho.expectation(&h).re;
        prop_assert!((de - out.heat.total()).abs() < 1e-12);
    }

    #[test]
    fn sudden_jump_work_is_the_energy_change(u0 in 0.0f64..0.75, u1 in 0.0f64..0.75, z in -0.8f64..0.8, x in -0.5f64..0.5) {
        let rho = bloch_state(x, 0.0, z);
        let w = sudden_jump(&rho, &fridge(), u0, u1).unwrap();
        let e0 = rho.expectation(&build_hamiltonian(&fridge(), u0).unwrap()).re;
        let e1 = rho.expectation(&build_hamiltonian(&fridge(), u1).unwrap()).re;
        prop_assert!((w - (e1 - e0)).abs() < 1e-14);
    }
}
