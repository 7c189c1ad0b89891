//! Training loop, telemetry, checkpoints and multi-seed studies.

mod log;

pub use log::{LogRecord, TrainLog, LOG_HEADER};

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::env::{CycleProtocol, EnvConfig, Environment, HybridAction};
use crate::error::{Error, Result};
use crate::nn::checkpoint::{read_f64, read_u64, write_f64, write_u64};
use crate::replay::{ReplayBuffer, Transition};
use crate::sac::{Agent, SacConfig};

/// `gamma * prev + (1 - gamma) * x`, starting from the first sample.
pub fn running_average(prev: Option<f64>, x: f64, gamma: f64) -> f64 {
    match prev {
        Some(p) => gamma * p + (1.0 - gamma) * x,
        None => x,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub env: EnvConfig,
    pub sac: SacConfig,
    /// Steps with uniformly random actions at the start.
    pub initial_random_steps: u64,
    /// No update happens before this step.
    pub first_update_step: u64,
    /// Every `n_updates` steps, `n_updates` updates are run.
    pub n_updates: u64,
    pub buffer_size: usize,
    pub total_steps: u64,
    pub seed: u64,
    /// Settling steps of the deterministic rollout before the cycle is read.
    pub cycle_warmup: usize,
    /// Recorded steps of the deterministic rollout.
    pub cycle_horizon: usize,
}

impl TrainConfig {
    pub fn new(env: EnvConfig, sac: SacConfig) -> Self {
        Self {
            env,
            sac,
            initial_random_steps: 5_000,
            first_update_step: 1_000,
            n_updates: 50,
            buffer_size: 192_000,
            total_steps: 500_000,
            seed: 0,
            cycle_warmup: 2_000,
            cycle_horizon: 200,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        self.sac.validate()?;
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.n_updates == 0 {
            return bad("n_updates must be positive".into());
        }
        if self.buffer_size < self.sac.batch_size {
            return bad(format!(
                "buffer size {} is smaller than the batch size {}",
                self.buffer_size, self.sac.batch_size
            ));
        }
        if self.first_update_step < self.sac.batch_size as u64 {
            return bad(format!(
                "first update at step {} precedes a full batch of {}",
                self.first_update_step, self.sac.batch_size
            ));
        }
        if self.cycle_horizon < 2 {
            return bad("cycle horizon must be at least 2".into());
        }
        Ok(())
    }
}

/// Periodic steady state of the deterministic policy.
#[derive(Clone, Debug, PartialEq)]
pub struct ExtractedCycle {
    pub protocol: CycleProtocol,
    /// Per-step rewards over the reported period.
    pub rewards: Vec<f64>,
    /// False when no recurrence was found within the horizon; the protocol
    /// then covers the whole horizon.
    pub periodic: bool,
}

impl ExtractedCycle {
    pub fn mean_power(&self) -> f64 {
        self.rewards.iter().sum::<f64>() / self.rewards.len() as f64
    }
}

// Observations closer than this are treated as the same state.
const RECURRENCE_TOL: f64 = 1e-6;

/// Rolls out the deterministic policy from the reset state and returns the
/// trailing periodic portion of the trajectory.
pub fn extract_cycle(agent: &Agent, env_config: &EnvConfig, warmup: usize, horizon: usize) -> Result<ExtractedCycle> {
    let mut env = Environment::new(env_config.clone())?;
    let mut obs = env.reset()?;
    for _ in 0..warmup {
        let a = agent.deterministic_action(&obs)?;
        env.step(a)?;
        obs = env.observation();
    }
    let mut observations = vec![obs.clone()];
    let mut actions = Vec::with_capacity(horizon);
    let mut rewards = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        let a = agent.deterministic_action(&obs)?;
        rewards.push(env.step(a)?.reward);
        actions.push(a);
        obs = env.observation();
        observations.push(obs.clone());
    }
    let close = |a: &[f64], b: &[f64]| a.iter().zip(b).all(|(x, y)| (x - y).abs() <= RECURRENCE_TOL * (1.0 + x.abs()));
    let n = observations.len() - 1;
    for period in 1..=horizon / 2 {
        // Recurrence over the trailing window of length `period`.
        if (n - period..=n).all(|t| close(&observations[t], &observations[t - period])) {
            return Ok(ExtractedCycle {
                protocol: CycleProtocol::from_actions(&actions[horizon - period..])?,
                rewards: rewards[horizon - period..].to_vec(),
                periodic: true,
            });
        }
    }
    Ok(ExtractedCycle {
        protocol: CycleProtocol::from_actions(&actions)?,
        rewards,
        periodic: false,
    })
}

/// Training state that can be advanced step by step and checkpointed.
pub struct Trainer {
    pub config: TrainConfig,
    pub agent: Agent,
    pub log: TrainLog,
    env: Environment,
    buffer: ReplayBuffer,
    rng: ChaCha8Rng,
    obs: Vec<f64>,
    step: u64,
    p_avg: Option<f64>,
    lq_avg: Option<f64>,
    lpi_avg: Option<f64>,
}

impl Trainer {
    pub fn new(config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut env = Environment::new(config.env.clone())?;
        let obs = env.reset()?;
        let obs_dim = env.observation_dim();
        let actions = config.env.actions.clone();
        let agent = Agent::new(obs_dim, actions.clone(), config.sac.clone(), &mut rng)?;
        let buffer = ReplayBuffer::new(config.buffer_size, obs_dim, actions)?;
        Ok(Self {
            config,
            agent,
            log: TrainLog::default(),
            env,
            buffer,
            rng,
            obs,
            step: 0,
            p_avg: None,
            lq_avg: None,
            lpi_avg: None,
        })
    }

    /// Environment steps taken so far.
    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    pub fn env(&self) -> &Environment {
        &self.env
    }

    fn random_action(&mut self) -> HybridAction {
        let space = &self.config.env.actions;
        let u = self.rng.random_range(space.u_min..=space.u_max);
        let d = space.choices[self.rng.random_range(0..space.arity())];
        HybridAction::new(u, d)
    }

    fn diverged(&self, step: u64, e: Error) -> Error {
        match e {
            e if e.is_numerical() => Error::Divergence {
                step,
                reason: e.to_string(),
            },
            e => e,
        }
    }

    /// Advances one environment step, running an update burst when due.
    pub fn step_once(&mut self) -> Result<&LogRecord> {
        let step = self.step + 1;
        let eps = self.config.sac.entropy.value(step);
        let action = if step <= self.config.initial_random_steps {
            self.random_action()
        } else {
            let obs = self.obs.clone();
            self.agent
                .sample_action(&obs, &mut self.rng)
                .map_err(|e| self.diverged(step, e))?
                .0
        };
        let outcome = self.env.step(action).map_err(|e| self.diverged(step, e))?;
        let next = self.env.observation();
        self.buffer
            .push(Transition {
                obs: std::mem::take(&mut self.obs),
                action,
                reward: outcome.reward,
                next_obs: next.clone(),
            })
            .map_err(|e| self.diverged(step, e))?;
        self.obs = next;
        self.step = step;
        let gamma = self.config.sac.gamma;
        self.p_avg = Some(running_average(self.p_avg, outcome.reward, gamma));

        let n = self.config.n_updates;
        if step >= self.config.first_update_step && step % n == 0 {
            for _ in 0..n {
                let batch = self.buffer.sample(self.config.sac.batch_size, &mut self.rng)?;
                let stats = self
                    .agent
                    .update(&batch, eps, &mut self.rng)
                    .map_err(|e| self.diverged(step, e))?;
                self.lq_avg = Some(running_average(self.lq_avg, stats.critic_loss, gamma));
                self.lpi_avg = Some(running_average(self.lpi_avg, stats.policy_loss, gamma));
            }
        }
        self.log.records.push(LogRecord {
            step,
            action,
            reward: outcome.reward,
            p_avg: self.p_avg.unwrap_or(0.0),
            lq_avg: self.lq_avg.unwrap_or(0.0),
            lpi_avg: self.lpi_avg.unwrap_or(0.0),
            eps,
        });
        Ok(self.log.records.last().unwrap())
    }

    /// Runs until `total_steps` have been taken.
    pub fn run(&mut self) -> Result<()> {
        self.run_until(self.config.total_steps)
    }

    pub fn run_until(&mut self, step: u64) -> Result<()> {
        while self.step < step {
            self.step_once()?;
        }
        Ok(())
    }

    pub fn extract_cycle(&self) -> Result<ExtractedCycle> {
        extract_cycle(&self.agent, &self.config.env, self.config.cycle_warmup, self.config.cycle_horizon)
    }

    /// Agent, step counter, RNG position, running averages and environment
    /// state. The replay buffer is not saved.
    pub fn write_checkpoint<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(b"QTMTRN01")?;
        write_u64(w, self.step)?;
        w.write_all(&self.rng.get_seed())?;
        write_u64(w, self.rng.get_stream())?;
        let pos = self.rng.get_word_pos();
        write_u64(w, pos as u64)?;
        write_u64(w, (pos >> 64) as u64)?;
        for v in [self.p_avg, self.lq_avg, self.lpi_avg] {
            write_u64(w, v.is_some() as u64)?;
            write_f64(w, v.unwrap_or(0.0))?;
        }
        write_f64(w, self.env.u_last())?;
        let state = self.env.state_vector();
        write_u64(w, state.len() as u64)?;
        for v in state {
            write_f64(w, v)?;
        }
        self.agent.write_checkpoint(w)
    }

    /// Restores a checkpoint into a fresh trainer for `config`; training
    /// continues with an empty replay buffer.
    pub fn resume<R: Read>(config: TrainConfig, r: &mut R) -> Result<Self> {
        let mut t = Self::new(config)?;
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)
            .map_err(|e| Error::Checkpoint(format!("truncated file: {e}")))?;
        if &magic != b"QTMTRN01" {
            return Err(Error::Checkpoint("not a training checkpoint".into()));
        }
        t.step = read_u64(r)?;
        let mut seed = [0u8; 32];
        r.read_exact(&mut seed)
            .map_err(|e| Error::Checkpoint(format!("truncated file: {e}")))?;
        t.rng = ChaCha8Rng::from_seed(seed);
        t.rng.set_stream(read_u64(r)?);
        let lo = read_u64(r)? as u128;
        let hi = read_u64(r)? as u128;
        t.rng.set_word_pos(lo | (hi << 64));
        let mut avgs = [None; 3];
        for a in &mut avgs {
            let some = read_u64(r)? != 0;
            let v = read_f64(r)?;
            *a = some.then_some(v);
        }
        [t.p_avg, t.lq_avg, t.lpi_avg] = avgs;
        let u_last = read_f64(r)?;
        let n = read_u64(r)?;
        if n > 1 << 20 {
            return Err(Error::Checkpoint(format!("implausible state length {n}")));
        }
        let state = (0..n).map(|_| read_f64(r)).collect::<Result<Vec<_>>>()?;
        t.env
            .restore(&state, u_last)
            .map_err(|e| Error::Checkpoint(format!("environment state: {e}")))?;
        t.obs = t.env.observation();
        let agent = Agent::read_checkpoint(r)?;
        if agent.obs_dim() != t.agent.obs_dim() || agent.actions() != t.agent.actions() {
            return Err(Error::Checkpoint("agent does not match the configured environment".into()));
        }
        t.agent = agent;
        Ok(t)
    }
}

/// Result of a completed training run.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub agent: Agent,
    pub log: TrainLog,
    pub cycle: ExtractedCycle,
}

pub fn train(config: TrainConfig) -> Result<TrainOutcome> {
    let mut t = Trainer::new(config)?;
    t.run()?;
    let cycle = t.extract_cycle()?;
    Ok(TrainOutcome {
        agent: t.agent,
        log: t.log,
        cycle,
    })
}

/// One run of a multi-seed study.
#[derive(Debug)]
pub struct SeedRun {
    pub seed: u64,
    pub outcome: Result<TrainOutcome>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MultiSeedSummary {
    /// Final running-average power per successful run, in seed order.
    pub final_powers: Vec<(u64, f64)>,
    pub failures: Vec<(u64, String)>,
    pub min: f64,
    pub median: f64,
    pub max: f64,
}

impl MultiSeedSummary {
    pub fn from_runs(runs: &[SeedRun]) -> Self {
        let mut final_powers = Vec::new();
        let mut failures = Vec::new();
        for r in runs {
            match &r.outcome {
                Ok(o) => final_powers.push((r.seed, o.log.final_power().unwrap_or(0.0))),
                Err(e) => failures.push((r.seed, e.to_string())),
            }
        }
        let mut v: Vec<f64> = final_powers.iter().map(|p| p.1).collect();
        v.sort_by(f64::total_cmp);
        let (min, median, max) = if v.is_empty() {
            (f64::NAN, f64::NAN, f64::NAN)
        } else {
            let m = v.len();
            let median = if m % 2 == 1 { v[m / 2] } else { 0.5 * (v[m / 2 - 1] + v[m / 2]) };
            (v[0], median, v[m - 1])
        };
        Self {
            final_powers,
            failures,
            min,
            median,
            max,
        }
    }

    /// Largest relative deviation of a run from the median.
    pub fn spread(&self) -> f64 {
        self.final_powers
            .iter()
            .map(|(_, p)| ((p - self.median) / self.median).abs())
            .fold(0.0, f64::max)
    }
}

/// Seed of run `i` derived from the master seed; run 0 uses the master seed.
pub fn run_seed(master: u64, i: usize) -> u64 {
    master.wrapping_add(i as u64)
}

/// Independent runs with seeds `run_seed(config.seed, i)`, using up to
/// `jobs` threads. A failing run does not stop the others.
pub fn multi_seed(config: &TrainConfig, n_runs: usize, jobs: usize) -> Result<(Vec<SeedRun>, MultiSeedSummary)> {
    if n_runs == 0 {
        return Err(Error::InvalidParameter("multi-seed study needs at least one run".into()));
    }
    config.validate()?;
    let jobs = jobs.clamp(1, n_runs);
    let mut slots: Vec<Option<SeedRun>> = (0..n_runs).map(|_| None).collect();
    let next = std::sync::atomic::AtomicUsize::new(0);
    let results = std::sync::Mutex::new(&mut slots);
    std::thread::scope(|s| {
        for _ in 0..jobs {
            s.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                if i >= n_runs {
                    break;
                }
                let mut c = config.clone();
                c.seed = run_seed(config.seed, i);
                let run = SeedRun {
                    seed: c.seed,
                    outcome: train(c),
                };
                results.lock().unwrap()[i] = Some(run);
            });
        }
    });
    let runs: Vec<SeedRun> = slots.into_iter().map(|r| r.expect("every run completes")).collect();
    let summary = MultiSeedSummary::from_runs(&runs);
    Ok((runs, summary))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn running_average_examples() {
        assert_eq!(running_average(None, 3.0, 0.9), 3.0);
        assert_eq!(running_average(Some(1.0), 3.0, 0.0), 3.0);
        let mut a = Some(2.5);
        for _ in 0..100 {
            a = Some(running_average(a, 2.5, 0.99));
        }
        assert!((a.unwrap() - 2.5).abs() < 1e-14);
        // Transient decays as gamma^n.
        let mut a = Some(1.0);
        for _ in 0..10 {
            a = Some(running_average(a, 0.0, 0.5));
        }
        assert!((a.unwrap() - 0.5f64.powi(10)).abs() < 1e-15);
    }

    #[test]
    fn summary_statistics() {
        let runs: Vec<SeedRun> = vec![SeedRun {
            seed: 3,
            outcome: Err(Error::Divergence {
                step: 5,
                reason: "nan".into(),
            }),
        }];
        let s = MultiSeedSummary::from_runs(&runs);
        assert_eq!(s.failures.len(), 1);
        assert!(s.median.is_nan());
    }
}
