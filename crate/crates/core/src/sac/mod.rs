//! Soft actor-critic for one continuous control and one discrete choice.
//!
//! The policy network outputs, for every discrete choice `d`, a logit, the
//! mean and the log standard deviation of a Gaussian in the pre-squash
//! coordinate `zeta`; the control is `u = mid + half_width * tanh(zeta)`.
//! The twin critics read the observation followed by the normalized control
//! `tanh(zeta)` and output one value per discrete choice.

mod policy;

pub use policy::{log_one_minus_tanh_sq, log_softmax, normal_pdf, PolicyHeads, LOG_SIGMA_MAX, LOG_SIGMA_MIN};

use std::io::{Read, Write};

use ndarray::{s, Array1, Array2, ArrayView2};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::env::{ActionSpace, HybridAction};
use crate::error::{Error, Result};
use crate::nn::checkpoint::{read_adam, read_bytes, read_f64, read_mlp, read_u64, write_adam, write_bytes, write_f64, write_mlp, write_u64};
use crate::nn::{polyak_update, Adam, Mlp, MlpGrads};
use crate::quantum::BathChoice;
use crate::replay::Batch;

/// `eps(n) = eps0 * exp(-n / decay)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EntropySchedule {
    pub eps0: f64,
    pub decay: f64,
}

impl EntropySchedule {
    pub fn new(eps0: f64, decay: f64) -> Result<Self> {
        let s = Self { eps0, decay };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps0 > 0.0 && self.eps0.is_finite()) || !(self.decay > 0.0 && self.decay.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "entropy schedule needs positive eps0 and decay, got {} and {}",
                self.eps0, self.decay
            )));
        }
        Ok(())
    }

    pub fn value(&self, step: u64) -> f64 {
        self.eps0 * (-(step as f64) / self.decay).exp()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SacConfig {
    /// Hidden layer widths shared by policy and critics.
    pub hidden: Vec<usize>,
    pub gamma: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub polyak: f64,
    pub entropy: EntropySchedule,
    /// Use one noise draw per sample for all discrete branches.
    pub shared_noise: bool,
    /// Multiplies rewards before they enter the critic targets.
    pub reward_scale: f64,
}

impl Default for SacConfig {
    fn default() -> Self {
        Self {
            hidden: vec![256, 256],
            gamma: 0.995,
            learning_rate: 1e-3,
            batch_size: 256,
            polyak: 0.995,
            entropy: EntropySchedule { eps0: 50.0, decay: 48_000.0 },
            shared_noise: false,
            reward_scale: 1.0,
        }
    }
}

impl SacConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad(format!("hidden widths must be nonempty and positive, got {:?}", self.hidden));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return bad(format!("discount must be in [0, 1), got {}", self.gamma));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning rate must be positive, got {}", self.learning_rate));
        }
        if self.batch_size == 0 {
            return bad("batch size must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.polyak) {
            return bad(format!("polyak coefficient must be in [0, 1], got {}", self.polyak));
        }
        if !self.reward_scale.is_finite() {
            return bad(format!("reward scale must be finite, got {}", self.reward_scale));
        }
        self.entropy.validate()
    }
}

/// Loss values of one update.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UpdateStats {
    /// Mean of the two critic losses.
    pub critic_loss: f64,
    pub policy_loss: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Agent {
    pub config: SacConfig,
    actions: ActionSpace,
    obs_dim: usize,
    pub policy: Mlp,
    pub critics: [Mlp; 2],
    pub targets: [Mlp; 2],
    policy_opt: Adam,
    critic_opts: [Adam; 2],
    updates: u64,
}

fn layer_sizes(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    let mut v = vec![input];
    v.extend_from_slice(hidden);
    v.push(output);
    v
}

fn finite_or(loss: f64, what: &str) -> Result<f64> {
    if loss.is_finite() {
        Ok(loss)
    } else {
        Err(Error::NonFinite(format!("{what} = {loss}")))
    }
}

impl Agent {
    pub fn new<R: Rng + ?Sized>(obs_dim: usize, actions: ActionSpace, config: SacConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        actions.validate()?;
        let k = actions.arity();
        let policy = Mlp::new(&layer_sizes(obs_dim, &config.hidden, 3 * k), rng)?;
        let critic_sizes = layer_sizes(obs_dim + 1, &config.hidden, k);
        let critics = [Mlp::new(&critic_sizes, rng)?, Mlp::new(&critic_sizes, rng)?];
        let targets = critics.clone();
        let lr = config.learning_rate;
        Ok(Self {
            policy_opt: Adam::new(&policy, lr),
            critic_opts: [Adam::new(&critics[0], lr), Adam::new(&critics[1], lr)],
            config,
            actions,
            obs_dim,
            policy,
            critics,
            targets,
            updates: 0,
        })
    }

    pub fn actions(&self) -> &ActionSpace {
        &self.actions
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn arity(&self) -> usize {
        self.actions.arity()
    }

    /// Number of completed updates.
    pub fn updates(&self) -> u64 {
        self.updates
    }

    fn check_obs(&self, obs: &[f64]) -> Result<()> {
        if obs.len() != self.obs_dim {
            return Err(Error::ShapeMismatch {
                context: "agent observation",
                expected: self.obs_dim,
                actual: obs.len(),
            });
        }
        Ok(())
    }

    pub fn heads(&self, obs: &[f64]) -> Result<PolicyHeads> {
        self.check_obs(obs)?;
        let x = ArrayView2::from_shape((1, self.obs_dim), obs).expect("checked width");
        let out = self.policy.predict(x)?;
        Ok(PolicyHeads::from_output(out.row(0), self.arity()))
    }

    fn batch_heads(&self, out: &Array2<f64>) -> Vec<PolicyHeads> {
        out.rows().into_iter().map(|r| PolicyHeads::from_output(r, self.arity())).collect()
    }

    /// Samples an action with explicit noise `xi` and uniform draw `uniform`.
    pub fn sample_action_with(&self, obs: &[f64], xi: f64, uniform: f64) -> Result<(HybridAction, f64)> {
        let h = self.heads(obs)?;
        let mut d = h.arity() - 1;
        let mut acc = 0.0;
        for (i, p) in h.probs.iter().enumerate() {
            acc += p;
            if uniform < acc {
                d = i;
                break;
            }
        }
        let zeta = h.zeta(d, xi);
        let u = self.actions.denormalize(zeta.tanh());
        let logp = h.log_density(d, zeta, self.actions.half_width());
        Ok((HybridAction::new(u, self.actions.choices[d]), logp))
    }

    pub fn sample_action<R: Rng + ?Sized>(&self, obs: &[f64], rng: &mut R) -> Result<(HybridAction, f64)> {
        let xi: f64 = rng.sample(StandardNormal);
        let uniform: f64 = rng.random();
        self.sample_action_with(obs, xi, uniform)
    }

    /// Most probable choice with its mean control.
    pub fn deterministic_action(&self, obs: &[f64]) -> Result<HybridAction> {
        let h = self.heads(obs)?;
        let d = h.argmax();
        Ok(HybridAction::new(self.actions.denormalize(h.mu[d].tanh()), self.actions.choices[d]))
    }

    /// `log pi(a | s)` for a control strictly inside the interval.
    pub fn log_prob(&self, obs: &[f64], action: &HybridAction) -> Result<f64> {
        let h = self.heads(obs)?;
        let d = self
            .actions
            .index_of(action.d)
            .ok_or_else(|| Error::InvalidParameter(format!("bath choice '{}' not available", action.d)))?;
        let t = self.actions.normalize(action.u);
        if !(t.abs() < 1.0) {
            return Ok(f64::NEG_INFINITY);
        }
        Ok(h.log_density(d, t.atanh(), self.actions.half_width()))
    }

    /// Critic values `Q_j(s, u, d)` for every choice, one row per observation.
    pub fn q_values(&self, critic: usize, obs: &[f64], u: f64) -> Result<Vec<f64>> {
        self.check_obs(obs)?;
        let mut x = obs.to_vec();
        x.push(self.actions.normalize(u));
        let x = ArrayView2::from_shape((1, self.obs_dim + 1), &x).expect("width");
        Ok(self.critics[critic].predict(x)?.row(0).to_vec())
    }

    /// Standard-normal draws, one per (sample, branch).
    pub fn draw_noise<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Array2<f64> {
        let k = self.arity();
        if self.config.shared_noise {
            let col: Vec<f64> = (0..batch).map(|_| rng.sample(StandardNormal)).collect();
            Array2::from_shape_fn((batch, k), |(i, _)| col[i])
        } else {
            Array2::from_shape_fn((batch, k), |_| rng.sample(StandardNormal))
        }
    }

    // Rows `i * K + d` hold `[s_i, tanh(zeta_id)]`.
    /// Critic inputs of the policy loss for the reparameterized noise.
    pub(crate) fn sampled_branch_inputs(&self, obs: ArrayView2<f64>, noise: &Array2<f64>) -> Result<Array2<f64>> {
        self.check_batch(&obs, noise)?;
        let (b, k) = noise.dim();
        let heads = self.batch_heads(&self.policy.predict(obs)?);
        let t = Array2::from_shape_fn((b, k), |(i, d)| heads[i].zeta(d, noise[[i, d]]).tanh());
        Ok(self.branch_inputs(&obs, &t))
    }

    fn branch_inputs(&self, obs: &ArrayView2<f64>, t: &Array2<f64>) -> Array2<f64> {
        let (b, k) = t.dim();
        let mut x = Array2::zeros((b * k, self.obs_dim + 1));
        for i in 0..b {
            for d in 0..k {
                let row = i * k + d;
                x.slice_mut(s![row, ..self.obs_dim]).assign(&obs.row(i));
                x[[row, self.obs_dim]] = t[[i, d]];
            }
        }
        x
    }

    fn check_batch(&self, obs: &ArrayView2<f64>, noise: &Array2<f64>) -> Result<()> {
        if obs.ncols() != self.obs_dim {
            return Err(Error::ShapeMismatch {
                context: "batch observation width",
                expected: self.obs_dim,
                actual: obs.ncols(),
            });
        }
        if noise.dim() != (obs.nrows(), self.arity()) {
            return Err(Error::ShapeMismatch {
                context: "noise rows",
                expected: obs.nrows(),
                actual: noise.nrows(),
            });
        }
        Ok(())
    }

    /// Soft Bellman targets, averaged exactly over the next discrete choice
    /// and sampled once per branch for the control.
    pub fn critic_targets(&self, batch: &Batch, eps: f64, noise: &Array2<f64>) -> Result<Array1<f64>> {
        let next = batch.next_obs.view();
        self.check_batch(&next, noise)?;
        let (b, k) = noise.dim();
        let heads = self.batch_heads(&self.policy.predict(next)?);
        let hw = self.actions.half_width();
        let mut t = Array2::zeros((b, k));
        let mut logp = Array2::zeros((b, k));
        for i in 0..b {
            for d in 0..k {
                let zeta = heads[i].zeta(d, noise[[i, d]]);
                t[[i, d]] = zeta.tanh();
                logp[[i, d]] = heads[i].log_density(d, zeta, hw);
            }
        }
        let x = self.branch_inputs(&next, &t);
        let q1 = self.targets[0].predict(x.view())?;
        let q2 = self.targets[1].predict(x.view())?;
        let gamma = self.config.gamma;
        let y = Array1::from_shape_fn(b, |i| {
            let soft: f64 = (0..k)
                .map(|d| {
                    let row = i * k + d;
                    let p = heads[i].probs[d];
                    if p == 0.0 {
                        return 0.0;
                    }
                    p * (q1[[row, d]].min(q2[[row, d]]) - eps * logp[[i, d]])
                })
                .sum();
            self.config.reward_scale * batch.reward[i] + gamma * soft
        });
        Ok(y)
    }

    /// Mean squared Bellman residual of each online critic and its gradient.
    pub fn critic_loss_and_grad(&self, batch: &Batch, y: &Array1<f64>) -> Result<([f64; 2], [MlpGrads; 2])> {
        let b = batch.len();
        if y.len() != b || batch.obs.nrows() != b || batch.control.len() != b {
            return Err(Error::ShapeMismatch {
                context: "critic batch rows",
                expected: b,
                actual: y.len(),
            });
        }
        let mut x = Array2::zeros((b, self.obs_dim + 1));
        x.slice_mut(s![.., ..self.obs_dim]).assign(&batch.obs);
        x.column_mut(self.obs_dim).assign(&batch.control);
        let mut losses = [0.0; 2];
        let mut grads = Vec::with_capacity(2);
        for (j, critic) in self.critics.iter().enumerate() {
            let (q, tape) = critic.forward(x.view())?;
            let mut cot = Array2::zeros(q.dim());
            let mut loss = 0.0;
            for i in 0..b {
                let r = q[[i, batch.choice[i]]] - y[i];
                loss += r * r;
                cot[[i, batch.choice[i]]] = 2.0 * r / b as f64;
            }
            losses[j] = finite_or(loss / b as f64, "critic loss")?;
            grads.push(critic.backward(&tape, cot.view(), false)?.0);
        }
        let g2 = grads.pop().unwrap();
        let g1 = grads.pop().unwrap();
        Ok((losses, [g1, g2]))
    }

    /// Entropy-regularized policy loss, averaged exactly over the discrete
    /// choice, with reparameterized gradients through the control.
    pub fn policy_loss_and_grad(&self, obs: ArrayView2<f64>, eps: f64, noise: &Array2<f64>) -> Result<(f64, MlpGrads)> {
        self.check_batch(&obs, noise)?;
        let (b, k) = noise.dim();
        let bf = b as f64;
        let (out, tape) = self.policy.forward(obs)?;
        let heads = self.batch_heads(&out);
        let hw = self.actions.half_width();
        let mut t = Array2::zeros((b, k));
        let mut logp = Array2::zeros((b, k));
        for i in 0..b {
            for d in 0..k {
                let zeta = heads[i].zeta(d, noise[[i, d]]);
                t[[i, d]] = zeta.tanh();
                logp[[i, d]] = heads[i].log_density(d, zeta, hw);
            }
        }
        let x = self.branch_inputs(&obs, &t);
        let (q1, tape1) = self.critics[0].forward(x.view())?;
        let (q2, tape2) = self.critics[1].forward(x.view())?;

        let mut sel1 = Array2::zeros(q1.dim());
        let mut sel2 = Array2::zeros(q2.dim());
        let mut f = Array2::zeros((b, k));
        for i in 0..b {
            for d in 0..k {
                let row = i * k + d;
                let q = if q1[[row, d]] <= q2[[row, d]] {
                    sel1[[row, d]] = 1.0;
                    q1[[row, d]]
                } else {
                    sel2[[row, d]] = 1.0;
                    q2[[row, d]]
                };
                f[[i, d]] = eps * logp[[i, d]] - q;
            }
        }
        let dq = self.critics[0].input_gradient(&tape1, sel1.view())?
            + self.critics[1].input_gradient(&tape2, sel2.view())?;

        let mut loss = 0.0;
        let mut cot = Array2::zeros(out.dim());
        for (i, h) in heads.iter().enumerate() {
            let mean_f: f64 = (0..k).map(|d| h.probs[d] * f[[i, d]]).sum();
            loss += mean_f;
            for d in 0..k {
                let p = h.probs[d];
                let td = t[[i, d]];
                let dq_dt = dq[[i * k + d, self.obs_dim]];
                let one_minus_t2 = log_one_minus_tanh_sq(h.zeta(d, noise[[i, d]])).exp();
                let df_dzeta = 2.0 * eps * td - dq_dt * one_minus_t2;
                cot[[i, d]] = p * (f[[i, d]] - mean_f) / bf;
                cot[[i, k + d]] = p * df_dzeta / bf;
                cot[[i, 2 * k + d]] = if h.clamped[d] {
                    0.0
                } else {
                    p * (df_dzeta * h.sigma(d) * noise[[i, d]] - eps) / bf
                };
            }
        }
        let loss = finite_or(loss / bf, "policy loss")?;
        let (grads, _) = self.policy.backward(&tape, cot.view(), false)?;
        Ok((loss, grads))
    }

    /// One update: both critics, then the policy, then the targets.
    pub fn update<R: Rng + ?Sized>(&mut self, batch: &Batch, eps: f64, rng: &mut R) -> Result<UpdateStats> {
        let b = batch.len();
        let noise = self.draw_noise(b, rng);
        let y = self.critic_targets(batch, eps, &noise)?;
        let (lq, gq) = self.critic_loss_and_grad(batch, &y)?;
        for j in 0..2 {
            self.critic_opts[j].step(&mut self.critics[j], &gq[j])?;
        }
        let noise = self.draw_noise(b, rng);
        let (lpi, gp) = self.policy_loss_and_grad(batch.obs.view(), eps, &noise)?;
        self.policy_opt.step(&mut self.policy, &gp)?;
        for j in 0..2 {
            polyak_update(&mut self.targets[j], &self.critics[j], self.config.polyak)?;
        }
        self.updates += 1;
        Ok(UpdateStats {
            critic_loss: 0.5 * (lq[0] + lq[1]),
            policy_loss: lpi,
        })
    }

    pub fn is_finite(&self) -> bool {
        self.policy.is_finite() && self.critics.iter().chain(&self.targets).all(Mlp::is_finite)
    }
}

const MAGIC: &[u8] = b"QTMSAC01";

impl Agent {
    pub fn write_checkpoint<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(MAGIC)?;
        write_u64(w, self.obs_dim as u64)?;
        write_f64(w, self.actions.u_min)?;
        write_f64(w, self.actions.u_max)?;
        let labels: Vec<&str> = self.actions.choices.iter().map(|c| c.label()).collect();
        write_bytes(w, labels.join(",").as_bytes())?;
        let c = &self.config;
        write_u64(w, c.hidden.len() as u64)?;
        for &h in &c.hidden {
            write_u64(w, h as u64)?;
        }
        for v in [c.gamma, c.learning_rate, c.polyak, c.entropy.eps0, c.entropy.decay, c.reward_scale] {
            write_f64(w, v)?;
        }
        write_u64(w, c.batch_size as u64)?;
        write_u64(w, c.shared_noise as u64)?;
        write_u64(w, self.updates)?;
        write_mlp(w, &self.policy)?;
        for net in self.critics.iter().chain(&self.targets) {
            write_mlp(w, net)?;
        }
        write_adam(w, &self.policy_opt)?;
        for opt in &self.critic_opts {
            write_adam(w, opt)?;
        }
        Ok(())
    }

    pub fn read_checkpoint<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)
            .map_err(|e| Error::Checkpoint(format!("truncated file: {e}")))?;
        if magic != MAGIC {
            return Err(Error::Checkpoint("not an agent checkpoint".into()));
        }
        let obs_dim = read_u64(r)? as usize;
        let u_min = read_f64(r)?;
        let u_max = read_f64(r)?;
        let labels = String::from_utf8(read_bytes(r)?).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let choices = labels
            .split(',')
            .map(|l| BathChoice::from_label(l).ok_or_else(|| Error::Checkpoint(format!("unknown choice '{l}'"))))
            .collect::<Result<Vec<_>>>()?;
        let actions = ActionSpace::new(u_min, u_max, choices).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let n_hidden = read_u64(r)?;
        if n_hidden > 64 {
            return Err(Error::Checkpoint(format!("implausible depth {n_hidden}")));
        }
        let hidden = (0..n_hidden).map(|_| read_u64(r).map(|v| v as usize)).collect::<Result<Vec<_>>>()?;
        let gamma = read_f64(r)?;
        let learning_rate = read_f64(r)?;
        let polyak = read_f64(r)?;
        let eps0 = read_f64(r)?;
        let decay = read_f64(r)?;
        let reward_scale = read_f64(r)?;
        let batch_size = read_u64(r)? as usize;
        let shared_noise = read_u64(r)? != 0;
        let updates = read_u64(r)?;
        let config = SacConfig {
            hidden,
            gamma,
            learning_rate,
            batch_size,
            polyak,
            entropy: EntropySchedule { eps0, decay },
            shared_noise,
            reward_scale,
        };
        config.validate().map_err(|e| Error::Checkpoint(e.to_string()))?;
        let policy = read_mlp(r)?;
        let mut nets = Vec::with_capacity(4);
        for _ in 0..4 {
            nets.push(read_mlp(r)?);
        }
        let k = actions.arity();
        let policy_sizes = layer_sizes(obs_dim, &config.hidden, 3 * k);
        let critic_sizes = layer_sizes(obs_dim + 1, &config.hidden, k);
        if policy.sizes() != policy_sizes.as_slice() || nets.iter().any(|n| n.sizes() != critic_sizes.as_slice()) {
            return Err(Error::Checkpoint("network shapes disagree with the action space".into()));
        }
        let policy_opt = read_adam(r, &policy_sizes)?;
        let opt1 = read_adam(r, &critic_sizes)?;
        let opt2 = read_adam(r, &critic_sizes)?;
        let t2 = nets.pop().unwrap();
        let t1 = nets.pop().unwrap();
        let c2 = nets.pop().unwrap();
        let c1 = nets.pop().unwrap();
        Ok(Self {
            config,
            actions,
            obs_dim,
            policy,
            critics: [c1, c2],
            targets: [t1, t2],
            policy_opt,
            critic_opts: [opt1, opt2],
            updates,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_config() -> SacConfig {
        SacConfig {
            hidden: vec![6, 5],
            batch_size: 4,
            ..SacConfig::default()
        }
    }

    fn agent(seed: u64) -> Agent {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Agent::new(2, ActionSpace::engine(0.3, 1.0).unwrap(), small_config(), &mut rng).unwrap()
    }

    fn batch(rng: &mut ChaCha8Rng, n: usize) -> Batch {
        Batch {
            obs: Array2::from_shape_fn((n, 2), |_| rng.random_range(-1.0..1.0)),
            control: Array1::from_shape_fn(n, |_| rng.random_range(-1.0..1.0)),
            choice: (0..n).map(|i| i % 3).collect(),
            reward: Array1::from_shape_fn(n, |_| rng.random_range(-1.0..1.0)),
            next_obs: Array2::from_shape_fn((n, 2), |_| rng.random_range(-1.0..1.0)),
        }
    }

    // Zero last layers so the policy outputs are exactly the biases.
    fn set_policy_output(a: &mut Agent, out: &[f64]) {
        let last = a.policy.num_layers() - 1;
        let mut l = 0;
        let nw: usize = a.policy.weights(last).len();
        let first: usize = (0..last).map(|i| a.policy.weights(i).len() + a.policy.biases(i).len()).sum();
        let mut idx = 0;
        a.policy.update_params(|p| {
            if idx >= first && idx < first + nw {
                *p = 0.0;
            } else if idx >= first + nw {
                *p = out[l];
                l += 1;
            }
            idx += 1;
        });
    }

    #[test]
    fn schedule_is_strictly_decreasing() {
        let s = EntropySchedule::new(50.0, 48_000.0).unwrap();
        assert_eq!(s.value(0), 50.0);
        assert!(s.value(1) < s.value(0));
        assert!((s.value(48_000) - 50.0 / std::f64::consts::E).abs() < 1e-12);
        assert!(EntropySchedule::new(0.0, 1.0).is_err());
    }

    #[test]
    fn zero_noise_and_mean_give_midpoint() {
        let mut a = agent(1);
        set_policy_output(&mut a, &[0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let (act, logp) = a.sample_action_with(&[0.2, 0.4], 0.0, 0.1).unwrap();
        assert!((act.u - 0.65).abs() < 1e-15);
        assert_eq!(act.d, BathChoice::Hot);
        assert!(logp.is_finite());
        // Symmetric logits: the lowest index wins.
        assert_eq!(a.deterministic_action(&[0.2, 0.4]).unwrap(), HybridAction::new(0.65, BathChoice::Hot));
        set_policy_output(&mut a, &[0.0, 0.0, 0.0, 50.0, 50.0, 50.0, -5.0, -5.0, -5.0]);
        assert!((a.deterministic_action(&[0.0, 0.0]).unwrap().u - 1.0).abs() < 1e-12);
    }

    #[test]
    fn uniform_draw_selects_branch_by_cumulative_probability() {
        let mut a = agent(2);
        let lp = [0.2f64.ln(), 0.3f64.ln(), 0.5f64.ln()];
        set_policy_output(&mut a, &[lp[0], lp[1], lp[2], 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let d = |u: f64| a.sample_action_with(&[0.0, 0.0], 0.0, u).unwrap().0.d;
        assert_eq!(d(0.1), BathChoice::Hot);
        assert_eq!(d(0.45), BathChoice::Cold);
        assert_eq!(d(0.9), BathChoice::None);
    }

    #[test]
    fn discount_zero_targets_equal_reward() {
        let mut a = agent(3);
        a.config.gamma = 0.0;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let b = batch(&mut rng, 5);
        let noise = a.draw_noise(5, &mut rng);
        let y = a.critic_targets(&b, 1.0, &noise).unwrap();
        assert_eq!(y, b.reward);
    }

    #[test]
    fn critic_loss_zero_at_targets_and_four_for_residual_two() {
        let a = agent(4);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let b = batch(&mut rng, 1);
        let q = a.q_values(0, &b.obs.row(0).to_vec(), a.actions.denormalize(b.control[0])).unwrap()[b.choice[0]];
        let q2 = a.q_values(1, &b.obs.row(0).to_vec(), a.actions.denormalize(b.control[0])).unwrap()[b.choice[0]];
        let (l, g) = a.critic_loss_and_grad(&b, &Array1::from(vec![q])).unwrap();
        assert!(l[0] < 1e-24);
        assert!(g[0].max_abs() < 1e-12);
        let (l, _) = a.critic_loss_and_grad(&b, &Array1::from(vec![q2 - 2.0])).unwrap();
        assert!((l[1] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn polyak_one_freezes_targets_and_seeds_reproduce() {
        let mut a = agent(5);
        a.config.polyak = 1.0;
        let t0 = a.targets.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let b = batch(&mut rng, 4);
        let mut a2 = a.clone();
        a.update(&b, 0.5, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        a2.update(&b, 0.5, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a.targets, t0);
        assert_eq!(a.policy, a2.policy);
        assert_eq!(a.critics, a2.critics);
        assert_eq!(a.updates(), 1);
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut a = agent(6);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let b = batch(&mut rng, 4);
        a.update(&b, 0.5, &mut rng).unwrap();
        let mut buf = Vec::new();
        a.write_checkpoint(&mut buf).unwrap();
        let back = Agent::read_checkpoint(&mut &buf[..]).unwrap();
        assert_eq!(a, back);
        assert!(Agent::read_checkpoint(&mut &buf[..20]).is_err());
    }
}
