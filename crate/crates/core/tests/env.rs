use proptest::prelude::*;
use qtm_core::config::RunConfigFile;
use qtm_core::env::*;
use qtm_core::quantum::{BathChoice, Model};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn config(preset: &str) -> EnvConfig {
    RunConfigFile::preset(preset).unwrap().env_config().unwrap()
}

fn random_actions(space: &ActionSpace, n: usize, seed: u64) -> Vec<HybridAction> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let u = rng.random_range(space.u_min..=space.u_max);
            HybridAction::new(u, space.choices[rng.random_range(0..space.choices.len())])
        })
        .collect()
}

#[test]
fn observation_layouts() {
    for (preset, dim) in [("two_level", 2), ("fridge", 4), ("oscillator_narrow", 6)] {
        let mut env = Environment::new(config(preset)).unwrap();
        let obs = env.reset().unwrap();
        assert_eq!(obs.len(), dim);
        assert_eq!(env.observation_dim(), dim);
        assert_eq!(*obs.last().unwrap(), env.config().initial_u());
    }
}

#[test]
fn two_level_step_from_reset() {
    let mut env = Environment::new(config("two_level")).unwrap();
    env.reset().unwrap();
    let u0: f64 = 0.65;
    let p0 = 1.0 / (1.0 + (2.0 * u0 * 2.5).exp());
    let out = env.step(HybridAction::new(1.0, BathChoice::Hot)).unwrap();
    let target = 1.0 / (1.0 + (1.0 * 1.0 * 2.5f64).exp());
    let p1 = target + (p0 - target) * (-0.5f64).exp();
    assert!((env.observation()[0] - p1).abs() < 1e-15);
    assert!((out.work_in - 2.5 * (1.0 - u0) * (p0 - 0.5)).abs() < 1e-15);
    assert!((out.reward - 2.5 * (p1 - p0) / 0.5).abs() < 1e-14);
    assert_eq!(out.heat.cold, 0.0);
}

#[test]
fn decoupled_step_exchanges_no_heat() {
    let mut env = Environment::new(config("oscillator_narrow")).unwrap();
    env.reset().unwrap();
    let out = env.step(HybridAction::new(0.9, BathChoice::None)).unwrap();
    assert_eq!(out.heat.total(), 0.0);
    assert_eq!(out.reward, 0.0);
    assert!(out.work_in != 0.0);
}

#[test]
fn equilibrium_is_stationary() {
    // The reset state is in equilibrium with the cold bath at the initial control.
    for preset in ["two_level", "oscillator_narrow"] {
        let mut env = Environment::new(config(preset)).unwrap();
        env.reset().unwrap();
        let before = env.state_vector();
        let u0 = env.config().initial_u();
        let out = env.step(HybridAction::new(u0, BathChoice::Cold)).unwrap();
        assert!(out.reward.abs() < 1e-15);
        let after = env.state_vector();
        for (a, b) in before.iter().zip(&after) {
            assert!((a - b).abs() < 1e-14);
        }
    }
}

#[test]
fn refrigerator_reward_is_cold_heat_rate() {
    let mut env = Environment::new(config("fridge")).unwrap();
    env.reset().unwrap();
    for a in random_actions(env.actions(), 5, 3) {
        let out = env.step(a).unwrap();
        assert!((out.reward - out.heat.cold / 0.98).abs() < 1e-15);
    }
}

#[test]
fn invalid_actions_are_rejected() {
    let mut env = Environment::new(config("two_level")).unwrap();
    assert!(env.step(HybridAction::new(1.2, BathChoice::Hot)).is_err());
    assert!(env.step(HybridAction::new(0.5, BathChoice::Both)).is_err());
    assert!(env.step(HybridAction::new(f64::NAN, BathChoice::Hot)).is_err());
    let mut fridge = Environment::new(config("fridge")).unwrap();
    assert!(fridge.step(HybridAction::new(0.5, BathChoice::Hot)).is_err());
}

#[test]
fn same_actions_give_identical_trajectories() {
    for preset in ["two_level", "fridge", "oscillator_wide"] {
        let c = config(preset);
        let actions = random_actions(&c.actions, 40, 9);
        let run = || {
            let mut env = Environment::new(c.clone()).unwrap();
            env.reset().unwrap();
            actions.iter().map(|a| env.step(*a).unwrap()).collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }
}

#[test]
fn restore_round_trips_the_state() {
    for preset in ["two_level", "fridge", "oscillator_narrow"] {
        let c = config(preset);
        let actions = random_actions(&c.actions, 12, 4);
        let mut env = Environment::new(c.clone()).unwrap();
        env.reset().unwrap();
        for a in &actions[..6] {
            env.step(*a).unwrap();
        }
        let mut copy = Environment::new(c).unwrap();
        copy.restore(&env.state_vector(), env.u_last()).unwrap();
        for a in &actions[6..] {
            assert_eq!(env.step(*a).unwrap(), copy.step(*a).unwrap());
        }
    }
}

#[test]
fn oscillator_jump_rescales_the_potential_energy() {
    // Kinetic part (H + L)/2 is untouched, potential part (H - L)/2 scales with u^2.
    let m = OscillatorMoments { h: 3.0, l: -0.4, d: 0.7 };
    let j = jump_moments(m, 0.6, 1.2);
    assert!(((j.h + j.l) - (m.h + m.l)).abs() < 1e-15);
    assert!(((j.h - j.l) - 4.0 * (m.h - m.l)).abs() < 1e-14);
    assert_eq!(j.d, m.d);
}

#[test]
fn injected_jump_error_is_visible_to_the_oracle() {
    fn broken(m: OscillatorMoments, u_old: f64, u_new: f64) -> OscillatorMoments {
        let mut j = jump_moments(m, u_old, u_new);
        j.l = -j.l;
        j
    }
    let mut c = config("oscillator_narrow");
    if let Model::Oscillator(o) = &mut c.model {
        o.cutoff = 40;
    }
    let options = qtm_core::verify::OracleOptions {
        protocols: 3,
        steps: 10,
        seed: 5,
    };
    let good = qtm_core::verify::oracle_error(&c, &options, None).unwrap();
    let bad = qtm_core::verify::oracle_error(&c, &options, Some(broken)).unwrap();
    assert!(good < 1e-3, "{good}");
    assert!(bad > 1e-2, "{bad}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn oscillator_moments_respect_uncertainty(seed in 0u64..1000, wide in any::<bool>()) {
        let c = config(if wide { "oscillator_wide" } else { "oscillator_narrow" });
        let mut env = OscillatorEnv::new(c.clone()).unwrap();
        for a in random_actions(&c.actions, 200, seed) {
            let out = env.step(a).unwrap();
            prop_assert!(out.first_law_residual().abs() <= 1e-12 * out.energy_before.abs().max(1.0));
            let m = env.moments();
            let w = 2.0 * env.u_last();
            prop_assert!(m.h * m.h - m.l * m.l - (0.5 * w * m.d).powi(2) >= 0.25 * w * w * (1.0 - 1e-9));
        }
    }

    #[test]
    fn two_level_population_stays_physical(seed in 0u64..1000) {
        let c = config("two_level");
        let mut env = TwoLevelEnv::new(c.clone()).unwrap();
        for a in random_actions(&c.actions, 200, seed) {
            let out = env.step(a).unwrap();
            prop_assert!((0.0..=1.0).contains(&env.population()));
            prop_assert!(out.first_law_residual().abs() < 1e-14);
        }
    }
}
