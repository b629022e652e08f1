//! Adam optimizer over a [`Network`]'s trainable tensors.

use super::network::{Gradients, Network};
use super::real::Real;

#[derive(Debug, Clone)]
pub struct Adam<R> {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Vec<R>>,
    v: Vec<Vec<R>>,
}

impl<R: Real> Adam<R> {
    pub fn new(net: &mut Network<R>, learning_rate: f64) -> Self {
        let shapes: Vec<usize> = net.trainable_mut().iter().map(|p| p.len()).collect();
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: shapes.iter().map(|&n| vec![R::ZERO; n]).collect(),
            v: shapes.iter().map(|&n| vec![R::ZERO; n]).collect(),
        }
    }

    /// Number of updates applied so far.
    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, net: &mut Network<R>, grads: &Gradients<R>) {
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let (b1, b2) = (R::from_f64(self.beta1), R::from_f64(self.beta2));
        let (one_b1, one_b2) = (R::from_f64(1.0 - self.beta1), R::from_f64(1.0 - self.beta2));
        let lr_t = R::from_f64(self.learning_rate * bc2.sqrt() / bc1);
        let eps_t = R::from_f64(self.eps * bc2.sqrt());

        let params = net.trainable_mut();
        let grads = grads.slices();
        for (((p, g), m), v) in params.into_iter().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + one_b1 * g[i];
                v[i] = b2 * v[i] + one_b2 * g[i] * g[i];
                p[i] -= lr_t * m[i] / (v[i].sqrt() + eps_t);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::network::Architecture;
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn first_step_moves_by_learning_rate() {
        let arch = Architecture {
            in_channels: 1,
            conv_blocks: 1,
            filters: 1,
            kernel_size: 1,
            classes: 2,
        };
        let mut net: Network<f64> = Network::init(arch, &mut ChaCha8Rng::seed_from_u64(0));
        let before = net.dense_bias.clone();
        let mut grads = Gradients {
            blocks: vec![super::super::network::BlockGrads {
                weight: vec![0.0],
                bias: vec![0.0],
                gamma: vec![0.0],
                beta: vec![0.0],
            }],
            dense_weight: vec![0.0; 2],
            dense_bias: vec![0.5, -2.0],
        };
        let mut adam = Adam::new(&mut net, 1e-3);
        adam.step(&mut net, &grads);
        // With bias correction the first step is lr·sign(g).
        assert!((net.dense_bias[0] - (before[0] - 1e-3)).abs() < 1e-9);
        assert!((net.dense_bias[1] - (before[1] + 1e-3)).abs() < 1e-9);
        grads.dense_bias = vec![0.0, 0.0];
        adam.step(&mut net, &grads);
        assert_eq!(adam.steps(), 2);
    }
}
