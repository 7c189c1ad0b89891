//! Fixed-capacity FIFO store of one-step transitions.

use ndarray::{Array1, Array2};
use rand::Rng;

use crate::env::{ActionSpace, HybridAction};
use crate::error::{Error, Result};

/// One observed step `(s, a, r, s')`.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub obs: Vec<f64>,
    pub action: HybridAction,
    pub reward: f64,
    pub next_obs: Vec<f64>,
}

/// Batch in the layout consumed by the agent: observations as rows, the
/// control normalized to `[-1, 1]` and the discrete choice as a head index.
#[derive(Clone, Debug)]
pub struct Batch {
    pub obs: Array2<f64>,
    pub control: Array1<f64>,
    pub choice: Vec<usize>,
    pub reward: Array1<f64>,
    pub next_obs: Array2<f64>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.choice.len()
    }

    pub fn is_empty(&self) -> bool {
        self.choice.is_empty()
    }
}

#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    capacity: usize,
    obs_dim: usize,
    actions: ActionSpace,
    obs: Vec<f64>,
    next_obs: Vec<f64>,
    u: Vec<f64>,
    choice: Vec<usize>,
    reward: Vec<f64>,
    len: usize,
    pushed: u64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, obs_dim: usize, actions: ActionSpace) -> Result<Self> {
        if capacity == 0 || obs_dim == 0 {
            return Err(Error::InvalidParameter("replay buffer needs positive capacity and width".into()));
        }
        Ok(Self {
            capacity,
            obs_dim,
            actions,
            obs: Vec::new(),
            next_obs: Vec::new(),
            u: Vec::new(),
            choice: Vec::new(),
            reward: Vec::new(),
            len: 0,
            pushed: 0,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Number of transitions ever pushed.
    pub fn pushed(&self) -> u64 {
        self.pushed
    }

    pub fn push(&mut self, t: Transition) -> Result<()> {
        for (what, v) in [("observation", &t.obs), ("next observation", &t.next_obs)] {
            if v.len() != self.obs_dim {
                return Err(Error::ShapeMismatch {
                    context: if what == "observation" { "transition observation" } else { "transition next observation" },
                    expected: self.obs_dim,
                    actual: v.len(),
                });
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite(format!("transition {what}")));
            }
        }
        if !t.reward.is_finite() {
            return Err(Error::NonFinite("transition reward".into()));
        }
        self.actions.check(&t.action)?;
        let d = self.actions.index_of(t.action.d).expect("checked above");

        let slot = (self.pushed % self.capacity as u64) as usize;
        if self.len < self.capacity {
            self.obs.extend_from_slice(&t.obs);
            self.next_obs.extend_from_slice(&t.next_obs);
            self.u.push(t.action.u);
            self.choice.push(d);
            self.reward.push(t.reward);
            self.len += 1;
        } else {
            let w = self.obs_dim;
            self.obs[slot * w..(slot + 1) * w].copy_from_slice(&t.obs);
            self.next_obs[slot * w..(slot + 1) * w].copy_from_slice(&t.next_obs);
            self.u[slot] = t.action.u;
            self.choice[slot] = d;
            self.reward[slot] = t.reward;
        }
        self.pushed += 1;
        Ok(())
    }

    /// The `i`-th stored transition counted from the oldest.
    pub fn get(&self, i: usize) -> Option<Transition> {
        if i >= self.len {
            return None;
        }
        let start = if self.len < self.capacity { 0 } else { (self.pushed % self.capacity as u64) as usize };
        let slot = (start + i) % self.capacity;
        let w = self.obs_dim;
        Some(Transition {
            obs: self.obs[slot * w..(slot + 1) * w].to_vec(),
            action: HybridAction::new(self.u[slot], self.actions.choices[self.choice[slot]]),
            reward: self.reward[slot],
            next_obs: self.next_obs[slot * w..(slot + 1) * w].to_vec(),
        })
    }

    /// Slot indices drawn uniformly with replacement.
    pub fn sample_indices<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Result<Vec<usize>> {
        if self.len < batch || batch == 0 {
            return Err(Error::BufferUnderfull { size: self.len, batch });
        }
        Ok((0..batch).map(|_| rng.random_range(0..self.len)).collect())
    }

    pub fn sample<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Result<Batch> {
        let idx = self.sample_indices(batch, rng)?;
        let w = self.obs_dim;
        let mut obs = Array2::zeros((batch, w));
        let mut next_obs = Array2::zeros((batch, w));
        for (row, &i) in idx.iter().enumerate() {
            obs.row_mut(row)
                .iter_mut()
                .zip(&self.obs[i * w..(i + 1) * w])
                .for_each(|(a, b)| *a = *b);
            next_obs
                .row_mut(row)
                .iter_mut()
                .zip(&self.next_obs[i * w..(i + 1) * w])
                .for_each(|(a, b)| *a = *b);
        }
        Ok(Batch {
            obs,
            control: idx.iter().map(|&i| self.actions.normalize(self.u[i])).collect(),
            choice: idx.iter().map(|&i| self.choice[i]).collect(),
            reward: idx.iter().map(|&i| self.reward[i]).collect(),
            next_obs,
        })
    }
}
