use super::mlp::{Mlp, MlpGrads};
use crate::error::{Error, Result};

/// Bias-corrected ADAM optimizer state for one network.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub(crate) t: u64,
    pub(crate) m: MlpGrads,
    pub(crate) v: MlpGrads,
}

impl Adam {
    pub fn new(net: &Mlp, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: MlpGrads::zeros_like(net),
            v: MlpGrads::zeros_like(net),
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn first_moment(&self) -> &MlpGrads {
        &self.m
    }

    pub fn second_moment(&self) -> &MlpGrads {
        &self.v
    }

    /// One descent step on `net` along `grads`.
    pub fn step(&mut self, net: &mut Mlp, grads: &MlpGrads) -> Result<()> {
        if !grads.is_finite() {
            return Err(Error::NonFinite("gradient passed to ADAM".into()));
        }
        if grads.weights.len() != net.weights.len()
            || grads.weights.iter().zip(&net.weights).any(|(g, w)| g.dim() != w.dim())
        {
            return Err(Error::ShapeMismatch {
                context: "ADAM gradient layers",
                expected: net.weights.len(),
                actual: grads.weights.len(),
            });
        }
        self.t += 1;
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        let c1 = 1.0 - b1.powi(self.t as i32);
        let c2 = 1.0 - b2.powi(self.t as i32);
        let lr = self.lr;
        let update = |p: &mut f64, m: &mut f64, v: &mut f64, g: f64| {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
        };
        net.touch();
        for l in 0..net.weights.len() {
            ndarray::Zip::from(&mut net.weights[l])
                .and(&mut self.m.weights[l])
                .and(&mut self.v.weights[l])
                .and(&grads.weights[l])
                .for_each(|p, m, v, &g| update(p, m, v, g));
            ndarray::Zip::from(&mut net.biases[l])
                .and(&mut self.m.biases[l])
                .and(&mut self.v.biases[l])
                .and(&grads.biases[l])
                .for_each(|p, m, v, &g| update(p, m, v, g));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_gradient_keeps_params_and_decays_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut net = Mlp::new(&[2, 3, 1], &mut rng).unwrap();
        let before = net.clone();
        let mut adam = Adam::new(&net, 1e-3);
        let mut g = MlpGrads::zeros_like(&net);
        g.weights[0].fill(1.0);
        adam.step(&mut net, &g).unwrap();
        let m_before = adam.m.weights[0][[0, 0]];
        let zero = MlpGrads::zeros_like(&net);
        adam.step(&mut net, &zero).unwrap();
        assert!((adam.m.weights[0][[0, 0]] - 0.9 * m_before).abs() < 1e-15);
        assert_eq!(net.weights[1], before.weights[1]);
        assert_eq!(adam.steps(), 2);
    }

    #[test]
    fn first_step_has_magnitude_lr() {
        let mut net = Mlp::zeros(&[1, 2]).unwrap();
        let mut adam = Adam::new(&net, 1e-3);
        let mut g = MlpGrads::zeros_like(&net);
        g.weights[0][[0, 0]] = 0.37;
        g.weights[0][[0, 1]] = -12.0;
        adam.step(&mut net, &g).unwrap();
        let expect = |g: f64| -1e-3 * g / (g.abs() + 1e-8);
        assert!((net.weights[0][[0, 0]] - expect(0.37)).abs() < 1e-15);
        assert!((net.weights[0][[0, 1]] - expect(-12.0)).abs() < 1e-15);
    }

    #[test]
    fn non_finite_gradient_is_fatal() {
        let mut net = Mlp::zeros(&[1, 1]).unwrap();
        let mut adam = Adam::new(&net, 1e-3);
        let mut g = MlpGrads::zeros_like(&net);
        g.biases[0][0] = f64::NAN;
        assert!(adam.step(&mut net, &g).is_err());
        assert_eq!(adam.steps(), 0);
    }
}
