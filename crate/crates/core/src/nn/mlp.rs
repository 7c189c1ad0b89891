use std::sync::atomic::{AtomicU64, Ordering};

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Uniform};

use crate::error::{Error, Result};

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

fn fresh_id() -> u64 {
    NEXT_ID.fetch_add(1, Ordering::Relaxed)
}

/// Fully connected network with ReLU hidden layers and a linear output.
///
/// Weights are stored `fan_in x fan_out` so a batch `X` (rows are samples)
/// maps to `X W + b`.
#[derive(Debug)]
pub struct Mlp {
    sizes: Vec<usize>,
    pub(crate) weights: Vec<Array2<f64>>,
    pub(crate) biases: Vec<Array1<f64>>,
    id: u64,
    version: u64,
}

impl Clone for Mlp {
    fn clone(&self) -> Self {
        Self {
            sizes: self.sizes.clone(),
            weights: self.weights.clone(),
            biases: self.biases.clone(),
            id: fresh_id(),
            version: 0,
        }
    }
}

impl PartialEq for Mlp {
    fn eq(&self, other: &Self) -> bool {
        self.sizes == other.sizes && self.weights == other.weights && self.biases == other.biases
    }
}

/// Activations recorded by [`Mlp::forward`] for one backward pass.
#[derive(Debug)]
pub struct Tape {
    owner: (u64, u64),
    /// Input to every layer; entry 0 is the network input.
    inputs: Vec<Array2<f64>>,
}

impl Tape {
    pub fn batch_size(&self) -> usize {
        self.inputs[0].nrows()
    }
}

/// Gradient (or optimizer moment) congruent to an [`Mlp`].
#[derive(Clone, Debug, PartialEq)]
pub struct MlpGrads {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl MlpGrads {
    pub fn zeros_like(net: &Mlp) -> Self {
        Self {
            weights: net.weights.iter().map(|w| Array2::zeros(w.raw_dim())).collect(),
            biases: net.biases.iter().map(|b| Array1::zeros(b.raw_dim())).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.iter().all(|v| v.is_finite())
    }

    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.weights.iter().zip(&self.biases).flat_map(|(w, b)| w.iter().chain(b.iter()))
    }

    pub fn max_abs(&self) -> f64 {
        self.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn scale(&mut self, factor: f64) {
        for w in &mut self.weights {
            *w *= factor;
        }
        for b in &mut self.biases {
            *b *= factor;
        }
    }

    pub fn add_assign(&mut self, other: &MlpGrads) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            *a += b;
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            *a += b;
        }
    }
}

impl Mlp {
    /// Random network with layer widths `sizes` (input first, output last).
    /// Weights are uniform in `+-1/sqrt(fan_in)`, biases zero.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(sizes)?;
        for w in &mut net.weights {
            let bound = 1.0 / (w.nrows() as f64).sqrt();
            let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
            w.mapv_inplace(|_| dist.sample(rng));
        }
        Ok(net)
    }

    pub fn zeros(sizes: &[usize]) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::InvalidParameter(format!(
                "network needs at least two nonzero layer sizes, got {sizes:?}"
            )));
        }
        let weights = sizes.windows(2).map(|p| Array2::zeros((p[0], p[1]))).collect();
        let biases = sizes[1..].iter().map(|&n| Array1::zeros(n)).collect();
        Ok(Self {
            sizes: sizes.to_vec(),
            weights,
            biases,
            id: fresh_id(),
            version: 0,
        })
    }

    pub(crate) fn from_parts(sizes: Vec<usize>, weights: Vec<Array2<f64>>, biases: Vec<Array1<f64>>) -> Result<Self> {
        let mut net = Self::zeros(&sizes)?;
        for (i, (w, b)) in weights.iter().zip(&biases).enumerate() {
            if w.dim() != net.weights[i].dim() || b.len() != net.biases[i].len() {
                return Err(Error::Checkpoint(format!("layer {i} has inconsistent shapes")));
            }
        }
        net.weights = weights;
        net.biases = biases;
        Ok(net)
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn num_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self, layer: usize) -> &Array2<f64> {
        &self.weights[layer]
    }

    pub fn biases(&self, layer: usize) -> &Array1<f64> {
        &self.biases[layer]
    }

    pub fn num_params(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>() + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    pub fn is_finite(&self) -> bool {
        self.params().all(|v| v.is_finite())
    }

    pub fn params(&self) -> impl Iterator<Item = &f64> {
        self.weights.iter().zip(&self.biases).flat_map(|(w, b)| w.iter().chain(b.iter()))
    }

    /// Applies `f` to every parameter in the order of [`Mlp::params`].
    pub fn update_params(&mut self, mut f: impl FnMut(&mut f64)) {
        self.touch();
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            w.iter_mut().for_each(&mut f);
            b.iter_mut().for_each(&mut f);
        }
    }

    /// Bumps the version so that tapes recorded earlier are rejected.
    pub(crate) fn touch(&mut self) {
        self.version += 1;
    }

    fn check_input(&self, x: &ArrayView2<f64>) -> Result<()> {
        if x.ncols() != self.input_dim() {
            return Err(Error::ShapeMismatch {
                context: "network input width",
                expected: self.input_dim(),
                actual: x.ncols(),
            });
        }
        Ok(())
    }

    /// Forward pass without recording.
    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(&x)?;
        let last = self.num_layers() - 1;
        let mut h = x.dot(&self.weights[0]) + &self.biases[0];
        for l in 1..=last {
            h.mapv_inplace(relu);
            h = h.dot(&self.weights[l]) + &self.biases[l];
        }
        Ok(h)
    }

    /// Smallest `|z|` over all hidden pre-activations for the batch `x`, i.e.
    /// the distance to the nearest ReLU kink.
    pub fn kink_margin(&self, x: ArrayView2<f64>) -> Result<f64> {
        self.check_input(&x)?;
        let mut margin = f64::INFINITY;
        let mut h = x.dot(&self.weights[0]) + &self.biases[0];
        for l in 1..self.num_layers() {
            margin = h.iter().fold(margin, |m, z| m.min(z.abs()));
            h.mapv_inplace(relu);
            h = h.dot(&self.weights[l]) + &self.biases[l];
        }
        Ok(margin)
    }

    /// Forward pass recording the activations needed by [`Mlp::backward`].
    pub fn forward(&self, x: ArrayView2<f64>) -> Result<(Array2<f64>, Tape)> {
        self.check_input(&x)?;
        let mut inputs = Vec::with_capacity(self.num_layers());
        inputs.push(x.to_owned());
        let mut h = x.dot(&self.weights[0]) + &self.biases[0];
        for l in 1..self.num_layers() {
            h.mapv_inplace(relu);
            let next = h.dot(&self.weights[l]) + &self.biases[l];
            inputs.push(h);
            h = next;
        }
        Ok((
            h,
            Tape {
                owner: (self.id, self.version),
                inputs,
            },
        ))
    }

    /// Reverse pass for the scalar `<cotangent, output>`, returning the
    /// parameter gradient and, when `want_input` is set, the input gradient.
    pub fn backward(
        &self,
        tape: &Tape,
        cotangent: ArrayView2<f64>,
        want_input: bool,
    ) -> Result<(MlpGrads, Option<Array2<f64>>)> {
        self.backward_impl(tape, cotangent, true, want_input)
            .map(|(g, x)| (g.expect("parameter gradient requested"), x))
    }

    /// Input gradient only, skipping the parameter gradient.
    pub fn input_gradient(&self, tape: &Tape, cotangent: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.backward_impl(tape, cotangent, false, true)
            .map(|(_, x)| x.expect("input gradient requested"))
    }

    fn backward_impl(
        &self,
        tape: &Tape,
        cotangent: ArrayView2<f64>,
        want_params: bool,
        want_input: bool,
    ) -> Result<(Option<MlpGrads>, Option<Array2<f64>>)> {
        if tape.owner != (self.id, self.version) {
            return Err(Error::StaleTape);
        }
        if cotangent.ncols() != self.output_dim() || cotangent.nrows() != tape.batch_size() {
            return Err(Error::ShapeMismatch {
                context: "output cotangent",
                expected: self.output_dim(),
                actual: cotangent.ncols(),
            });
        }
        let mut grads = want_params.then(|| MlpGrads::zeros_like(self));
        let mut delta = cotangent.to_owned();
        for l in (0..self.num_layers()).rev() {
            let input = &tape.inputs[l];
            if let Some(g) = grads.as_mut() {
                g.weights[l] = input.t().dot(&delta);
                g.biases[l] = delta.sum_axis(Axis(0));
            }
            if l == 0 && !want_input {
                break;
            }
            let mut back = delta.dot(&self.weights[l].t());
            if l > 0 {
                // The recorded input of layer l is relu(z), positive exactly where z > 0.
                ndarray::Zip::from(&mut back).and(input).for_each(|d, &a| {
                    if a <= 0.0 {
                        *d = 0.0;
                    }
                });
            }
            delta = back;
        }
        Ok((grads, want_input.then_some(delta)))
    }
}

#[inline]
fn relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

/// `target <- rho * target + (1 - rho) * online`.
pub fn polyak_update(target: &mut Mlp, online: &Mlp, rho: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::InvalidParameter(format!("polyak coefficient {rho} outside [0, 1]")));
    }
    if target.sizes != online.sizes {
        return Err(Error::ShapeMismatch {
            context: "polyak target layers",
            expected: online.sizes.len(),
            actual: target.sizes.len(),
        });
    }
    target.touch();
    for (t, o) in target.weights.iter_mut().zip(&online.weights) {
        ndarray::Zip::from(t).and(o).for_each(|t, &o| *t = rho * *t + (1.0 - rho) * o);
    }
    for (t, o) in target.biases.iter_mut().zip(&online.biases) {
        ndarray::Zip::from(t).and(o).for_each(|t, &o| *t = rho * *t + (1.0 - rho) * o);
    }
    Ok(())
}
