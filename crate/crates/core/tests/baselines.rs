use proptest::prelude::*;
use qtm_core::baselines::*;
use qtm_core::config::RunConfigFile;
use qtm_core::env::{CycleProtocol, EnvConfig, MachineKind, Segment};
use qtm_core::metrics::{carnot_cop, carnot_efficiency, efficiency_report};
use qtm_core::quantum::BathChoice;

fn env(preset: &str) -> EnvConfig {
    RunConfigFile::preset(preset).unwrap().env_config().unwrap()
}

/// Burn-in to the fixed point at round-off level.
fn tight() -> EvalOptions {
    EvalOptions {
        tol: 1e-13,
        ..EvalOptions::default()
    }
}

fn occupation(x: f64) -> f64 {
    1.0 / (1.0 + x.exp())
}

/// Power of the hot/cold square wave from the fixed point of the two-step
/// relaxation map `p -> p* + (p - p*) f`.
fn square_wave_closed_form(u_hot: f64, u_cold: f64) -> f64 {
    let (e0, beta_h, beta_c, gamma, dt): (f64, f64, f64, f64, f64) = (2.5, 1.0, 2.0, 1.0, 0.5);
    let f: f64 = (-gamma * dt).exp();
    let ph = occupation(beta_h * u_hot * e0);
    let pc = occupation(beta_c * u_cold * e0);
    let after_cold = (pc + f * ph) / (1.0 + f);
    let after_hot = (ph + f * pc) / (1.0 + f);
    e0 * (u_hot - u_cold) * (after_hot - after_cold) / (2.0 * dt)
}

#[test]
fn two_level_square_wave_matches_closed_form_fixed_point() {
    let config = env("two_level");
    for (uh, uc) in [(1.0, 0.3), (0.8, 0.55), (0.5, 0.9), (0.7, 0.7)] {
        let eval = evaluate_cycle(&config, &square_wave(uh, uc), &tight()).unwrap();
        let expected = square_wave_closed_form(uh, uc);
        assert!(
            (eval.power - expected).abs() <= 1e-12 * expected.abs().max(1e-2),
            "({uh}, {uc}): {} vs {expected}",
            eval.power
        );
        assert!(eval.converged && eval.drift < 1e-13);
    }
}

#[test]
fn constant_protocol_has_no_power() {
    let config = env("two_level");
    let protocol = CycleProtocol::new(vec![Segment {
        steps: 1,
        u: 0.6,
        d: BathChoice::Hot,
    }])
    .unwrap();
    let eval = evaluate_cycle(&config, &protocol, &tight()).unwrap();
    assert!(eval.power.abs() < 1e-12);

    let osc = env("oscillator_narrow");
    let protocol = CycleProtocol::new(vec![Segment {
        steps: 3,
        u: 0.75,
        d: BathChoice::Cold,
    }])
    .unwrap();
    let eval = evaluate_cycle(&osc, &protocol, &tight()).unwrap();
    assert!(eval.power.abs() < 1e-9);
}

#[test]
fn square_wave_optimum_is_an_engine_and_refines_the_grid() {
    let config = env("two_level");
    let o = optimize_square_wave(&config, &tight()).unwrap();
    assert!(o.u_hot > o.u_cold);
    assert!(o.power > 0.0);
    assert!(o.power >= o.grid_best.2);
    // Independent check of optimality against the closed form on a fine grid.
    let mut best: f64 = 0.0;
    for i in 0..=140 {
        for j in 0..=140 {
            let uh = 0.3 + 0.7 * i as f64 / 140.0;
            let uc = 0.3 + 0.7 * j as f64 / 140.0;
            best = best.max(square_wave_closed_form(uh, uc));
        }
    }
    assert!(o.power >= best * (1.0 - 1e-9), "{} < {best}", o.power);
    assert!((o.power - square_wave_closed_form(o.u_hot, o.u_cold)).abs() < 1e-12);
}

#[test]
fn square_wave_needs_an_engine_model() {
    assert!(optimize_square_wave(&env("fridge"), &EvalOptions::default()).is_err());
}

#[test]
fn degenerate_trapezoid_is_a_square_wave() {
    let config = env("fridge");
    let spec = TrapezoidSpec {
        ramp_fraction: 0.0,
        ..TrapezoidSpec::new(10)
    };
    let p = trapezoid_cycle(&config, &spec).unwrap();
    assert_eq!(
        p.segments,
        vec![
            Segment {
                steps: 5,
                u: 0.0,
                d: BathChoice::Both
            },
            Segment {
                steps: 5,
                u: 0.5,
                d: BathChoice::Both
            },
        ]
    );
}

#[test]
fn trapezoid_dwells_exactly_at_the_resonances() {
    let config = env("fridge");
    for period in [8, 20, 57, 100] {
        let p = trapezoid_cycle(&config, &TrapezoidSpec::new(period)).unwrap();
        let u: Vec<f64> = p.actions().iter().map(|a| a.u).collect();
        assert_eq!(u.iter().copied().fold(f64::INFINITY, f64::min), 0.0);
        assert_eq!(u.iter().copied().fold(f64::NEG_INFINITY, f64::max), 0.5);
        assert_eq!(p.period(), period);
    }
}

#[test]
fn trapezoid_rejects_bad_shapes() {
    let config = env("fridge");
    assert!(trapezoid_cycle(&config, &TrapezoidSpec::new(3)).is_err());
    let spec = TrapezoidSpec {
        ramp_fraction: 0.5,
        ..TrapezoidSpec::new(20)
    };
    assert!(trapezoid_cycle(&config, &spec).is_err());
    assert!(trapezoid_cycle(&env("two_level"), &TrapezoidSpec::new(20)).is_err());
}

#[test]
fn fast_trapezoid_heats_the_cold_bath() {
    // Driving much faster than the baths relax generates coherence and
    // the cooling power turns negative.
    let eval = evaluate_cycle(&env("fridge"), &trapezoid_cycle(&env("fridge"), &TrapezoidSpec::new(6)).unwrap(), &EvalOptions::default()).unwrap();
    assert!(eval.power < 0.0);
    assert!(eval.converged);
}

#[test]
fn otto_optimum_beats_its_grid_and_extracts_work() {
    let config = env("oscillator_narrow");
    let o = optimize_otto(&config, 0.5, 1.0, 12).unwrap();
    assert!(o.power > 0.0);
    assert!(o.power >= o.grid_power);
    assert!(o.continuous_power >= o.grid_power);
    assert!(o.heat_hot > 0.0 && o.heat_cold < 0.0);
    let total: f64 = o.spec.durations.iter().sum();
    assert!((o.power - (o.heat_hot + o.heat_cold) / total).abs() < 1e-12);
    assert!(optimize_otto(&env("two_level"), 0.5, 1.0, 4).is_err());
}

#[test]
fn otto_evaluator_matches_the_environment_staircase() {
    // With one ramp piece per step the evaluator performs exactly the
    // environment's jumps and free evolutions.
    let config = env("oscillator_narrow");
    for steps in [[3, 4, 2, 4], [6, 2, 5, 2], [1, 7, 1, 7]] {
        let mut ev = OttoEvaluator::new(&config, 0.5, 1.0).unwrap();
        ev.ramp_pieces = steps[1];
        let point = ev.evaluate(steps.map(|n| n as f64 * config.dt)).unwrap();
        let protocol = otto_protocol(steps, 0.5, 1.0).unwrap();
        let eval = evaluate_cycle(&config, &protocol, &EvalOptions::default()).unwrap();
        assert!(eval.converged);
        assert!(
            (eval.power - point.power).abs() < 1e-8 * point.power.abs().max(1e-6),
            "{steps:?}: env {} vs evaluator {}",
            eval.power,
            point.power
        );
        assert!((eval.totals.heat_hot - point.heat_hot).abs() < 1e-8 * point.heat_hot.abs());
    }
}

#[test]
fn otto_protocol_layout() {
    let p = otto_protocol([2, 3, 1, 2], 0.5, 1.0).unwrap();
    let a = p.actions();
    assert_eq!(a.len(), 8);
    assert_eq!(a[0].u, 1.0);
    assert_eq!(a[0].d, BathChoice::Hot);
    assert_eq!(a[4].u, 0.5);
    assert_eq!(a[4].d, BathChoice::None);
    assert_eq!(a[5].d, BathChoice::Cold);
    assert_eq!(a[7].u, 1.0);
    assert_eq!(a[7].d, BathChoice::None);
}

#[test]
fn baselines_reach_a_periodic_steady_state() {
    let options = EvalOptions::default();
    let sq = evaluate_cycle(&env("two_level"), &square_wave(0.9, 0.5), &options).unwrap();
    let fridge = env("fridge");
    let tr = evaluate_cycle(&fridge, &trapezoid_cycle(&fridge, &TrapezoidSpec::new(60)).unwrap(), &options).unwrap();
    let osc = env("oscillator_narrow");
    let ot = evaluate_cycle(&osc, &otto_protocol([11, 7, 10, 6], 0.5, 1.0).unwrap(), &options).unwrap();
    for e in [sq, tr, ot] {
        assert!(e.drift < 1e-9, "drift {}", e.drift);
        let scale = e.totals.heat_hot.abs().max(e.totals.heat_cold.abs());
        let residual = -e.totals.work_in - e.totals.heat_hot - e.totals.heat_cold;
        assert!(residual.abs() <= 1e-8 * scale, "first law residual {residual:e}");
    }
}

#[test]
fn refrigerator_cop_stays_below_carnot() {
    let config = env("fridge");
    let c_c = carnot_cop(config.baths.hot.beta, config.baths.cold.beta);
    let mut cooled = 0;
    for period in [60, 100, 200, 400] {
        let spec = TrapezoidSpec::new(period);
        let eval = evaluate_cycle(&config, &trapezoid_cycle(&config, &spec).unwrap(), &EvalOptions::default()).unwrap();
        let r = efficiency_report(MachineKind::Refrigerator, &config.baths, &eval.totals).unwrap();
        assert!((r.cop_carnot - c_c).abs() < 1e-15);
        if eval.totals.heat_cold > 0.0 {
            cooled += 1;
            assert!(r.cop.unwrap() <= c_c, "period {period}: COP {:?}", r.cop);
        }
        assert!(eval.coherence.unwrap() >= 0.0);
    }
    assert!(cooled > 0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn engine_efficiency_is_bounded_by_carnot(uh in 0.3f64..1.0, uc in 0.3f64..1.0) {
        let config = env("two_level");
        let eval = evaluate_cycle(&config, &square_wave(uh, uc), &tight()).unwrap();
        let eta_c = carnot_efficiency(config.baths.hot.beta, config.baths.cold.beta);
        match eval.efficiency(&config) {
            Ok(r) => {
                prop_assert!(r.efficiency.unwrap() <= eta_c + 1e-12);
                prop_assert!(r.first_law_residual.abs() <= 1e-8 * r.heat_hot.abs().max(r.heat_cold.abs()));
            }
            Err(_) => prop_assert!(eval.totals.work_in >= 0.0),
        }
    }
}
