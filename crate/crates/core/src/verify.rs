//! Self-checks: closed-form environments against dense propagation, and
//! analytic loss gradients against central differences.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::env::{ActionSpace, Dynamics, EnvConfig, Environment, HybridAction, JumpMap, StepOutcome};
use crate::error::{Error, Result};
use crate::nn::{Mlp, MlpGrads};
use crate::quantum::Model;
use crate::replay::Batch;
use crate::sac::{Agent, SacConfig};

/// One line of a verification table.
#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub cases: usize,
    pub max_error: f64,
    pub tolerance: f64,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.max_error <= self.tolerance
    }
}

impl std::fmt::Display for CheckResult {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{:<4} {:<34} cases {:>4}  max err {:>10.3e}  tol {:.0e}",
            if self.passed() { "PASS" } else { "FAIL" },
            self.name,
            self.cases,
            self.max_error,
            self.tolerance
        )
    }
}

/// Random protocol driving the closed-form and the dense environment.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OracleOptions {
    pub protocols: usize,
    pub steps: usize,
    pub seed: u64,
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self {
            protocols: 200,
            steps: 30,
            seed: 0,
        }
    }
}

fn random_action<R: Rng + ?Sized>(space: &ActionSpace, rng: &mut R) -> HybridAction {
    let u = rng.random_range(space.u_min..=space.u_max);
    let d = space.choices[rng.random_range(0..space.choices.len())];
    HybridAction::new(u, d)
}

fn step_error(fast: &Environment, dense: &Environment, of: &StepOutcome, od: &StepOutcome) -> Result<f64> {
    let state = |env: &Environment| -> Result<Vec<f64>> {
        match env {
            Environment::Dense(d) => match d.config().model {
                Model::Oscillator(_) => {
                    let m = d.oscillator_moments()?;
                    Ok(vec![m.h, m.l, m.d])
                }
                _ => Ok(vec![d.observation()[0]]),
            },
            other => Ok(match other.config().model {
                Model::Oscillator(_) => other.state_vector(),
                _ => vec![other.observation()[0]],
            }),
        }
    };
    let (xf, xd) = (state(fast)?, state(dense)?);
    // Energies set the scale for quantities that may pass through zero.
    let scale = od.energy_after.abs().max(od.energy_before.abs()).max(1e-12);
    let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(scale);
    let mut worst = xf.iter().zip(&xd).map(|(a, b)| rel(*a, *b)).fold(0.0, f64::max);
    for (a, b) in [
        (of.heat.hot, od.heat.hot),
        (of.heat.cold, od.heat.cold),
        (of.work_in, od.work_in),
        (of.energy_after, od.energy_after),
    ] {
        worst = worst.max(rel(a, b));
    }
    Ok(worst)
}

/// Largest relative deviation between the closed-form environment of
/// `config` and dense propagation, over random protocols. `jump` replaces the
/// oscillator jump update of the closed-form side.
pub fn oracle_error(config: &EnvConfig, options: &OracleOptions, jump: Option<JumpMap>) -> Result<f64> {
    let mut fast_cfg = config.clone();
    fast_cfg.dynamics = Dynamics::Fast;
    let mut dense_cfg = config.clone();
    dense_cfg.dynamics = Dynamics::Dense;
    let mut fast0 = Environment::new(fast_cfg)?;
    if matches!(fast0, Environment::Dense(_)) {
        return Err(Error::Unsupported("the oracle check needs a model with a closed form".into()));
    }
    if let (Some(j), Environment::Oscillator(o)) = (jump, &fast0) {
        fast0 = Environment::Oscillator(o.clone().with_jump_map(j));
    }
    let dense0 = Environment::new(dense_cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut worst: f64 = 0.0;
    for _ in 0..options.protocols {
        let mut fast = fast0.clone();
        let mut dense = dense0.clone();
        for _ in 0..options.steps {
            let a = random_action(&config.actions, &mut rng);
            let of = fast.step(a)?;
            let od = dense.step(a)?;
            worst = worst.max(step_error(&fast, &dense, &of, &od)?);
        }
    }
    Ok(worst)
}

pub fn oracle_check(name: &str, config: &EnvConfig, options: &OracleOptions, tolerance: f64) -> Result<CheckResult> {
    Ok(CheckResult {
        name: name.to_string(),
        cases: options.protocols,
        max_error: oracle_error(config, options, None)?,
        tolerance,
    })
}

/// `|a - b| / |b|` in the Euclidean norm.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff = analytic.iter().zip(numeric).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let norm = numeric.iter().map(|b| b * b).sum::<f64>().sqrt();
    diff / norm.max(1e-12)
}

fn perturbed(net: &Mlp, index: usize, h: f64) -> Mlp {
    let mut out = net.clone();
    let mut c = 0;
    out.update_params(|p| {
        if c == index {
            *p += h;
        }
        c += 1;
    });
    out
}

fn central_difference(net: &Mlp, h: f64, mut loss: impl FnMut(Mlp) -> Result<f64>) -> Result<Vec<f64>> {
    (0..net.num_params())
        .map(|p| Ok((loss(perturbed(net, p, h))? - loss(perturbed(net, p, -h))?) / (2.0 * h)))
        .collect()
}

fn flat(g: &MlpGrads) -> Vec<f64> {
    g.iter().copied().collect()
}

/// Critic and policy gradient errors of one random agent and frozen batch.
pub fn gradient_errors(seed: u64) -> Result<[f64; 3]> {
    let h = 1e-5;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (obs_dim, space) = match seed % 3 {
        0 => (2, ActionSpace::engine(0.3, 1.0)?),
        1 => (4, ActionSpace::refrigerator(0.0, 0.75)?),
        _ => (6, ActionSpace::engine(0.35, 1.5)?),
    };
    // Central differences are only meaningful away from ReLU kinks, so
    // instances with a pre-activation within 10h of zero are redrawn.
    let (agent, batch, eps, noise) = loop {
        let config = SacConfig {
            hidden: vec![rng.random_range(3..9), rng.random_range(3..9)],
            batch_size: 4,
            gamma: rng.random_range(0.5..0.999),
            ..SacConfig::default()
        };
        let mut agent = Agent::new(obs_dim, space.clone(), config, &mut rng)?;
        // Zero initial biases put whole hidden rows exactly on a kink.
        for net in agent.critics.iter_mut().chain(std::iter::once(&mut agent.policy)) {
            net.update_params(|p| *p += rng.random_range(-0.1..0.1));
        }
        let n = rng.random_range(3..8);
        let arity = space.arity();
        let batch = Batch {
            obs: Array2::from_shape_fn((n, obs_dim), |_| rng.random_range(-1.0..1.0)),
            control: Array1::from_shape_fn(n, |_| rng.random_range(-0.95..0.95)),
            choice: (0..n).map(|_| rng.random_range(0..arity)).collect(),
            reward: Array1::from_shape_fn(n, |_| rng.random_range(-1.0..1.0)),
            next_obs: Array2::from_shape_fn((n, obs_dim), |_| rng.random_range(-1.0..1.0)),
        };
        let eps = rng.random_range(0.0..2.0);
        let noise = agent.draw_noise(n, &mut rng);
        let mut x = Array2::zeros((n, obs_dim + 1));
        x.slice_mut(ndarray::s![.., ..obs_dim]).assign(&batch.obs);
        x.column_mut(obs_dim).assign(&batch.control);
        let branches = agent.sampled_branch_inputs(batch.obs.view(), &noise)?;
        let mut margin = agent.policy.kink_margin(batch.obs.view())?;
        for critic in &agent.critics {
            margin = margin.min(critic.kink_margin(x.view())?).min(critic.kink_margin(branches.view())?);
        }
        if margin > 10.0 * h {
            break (agent, batch, eps, noise);
        }
    };


    let y = agent.critic_targets(&batch, eps, &noise)?;
    let (_, grads) = agent.critic_loss_and_grad(&batch, &y)?;
    let mut errors = [0.0; 3];
    for j in 0..2 {
        let mut probe = agent.clone();
        let numeric = central_difference(&agent.critics[j], h, |net| {
            probe.critics[j] = net;
            Ok(probe.critic_loss_and_grad(&batch, &y)?.0[j])
        })?;
        errors[j] = relative_error(&flat(&grads[j]), &numeric);
    }

    let (_, grads) = agent.policy_loss_and_grad(batch.obs.view(), eps, &noise)?;
    let mut probe = agent.clone();
    let numeric = central_difference(&agent.policy, h, |net| {
        probe.policy = net;
        Ok(probe.policy_loss_and_grad(batch.obs.view(), eps, &noise)?.0)
    })?;
    errors[2] = relative_error(&flat(&grads), &numeric);
    Ok(errors)
}

/// Critic and policy rows of the gradient table over `instances` seeds.
pub fn gradient_checks(instances: usize, seed: u64, tolerance: f64) -> Result<Vec<CheckResult>> {
    let mut worst = [0.0f64; 3];
    for i in 0..instances {
        let e = gradient_errors(seed.wrapping_add(i as u64))?;
        for k in 0..3 {
            worst[k] = worst[k].max(e[k]);
        }
    }
    let row = |name: &str, max_error| CheckResult {
        name: name.into(),
        cases: instances,
        max_error,
        tolerance,
    };
    Ok(vec![
        row("critic 1 loss gradient", worst[0]),
        row("critic 2 loss gradient", worst[1]),
        row("policy loss gradient", worst[2]),
    ])
}
