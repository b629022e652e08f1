//! Finite-difference verification of the backward pass.
//!
//! Runs in `f64` on a small randomly initialized network in training mode
//! (batch statistics), so the checked function is exactly the one the
//! optimizer sees.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::network::{Gradients, Network};
use super::ModelConfig;

/// Default central-difference step. Larger steps let the perturbation push
/// ReLU inputs across zero, which corrupts the estimate near the kink.
pub const STEP: f64 = 1e-5;

/// Denominator floor for the relative error, so parameters whose true
/// gradient is zero (conv biases ahead of batch-norm) compare on an
/// absolute scale.
pub const REL_FLOOR: f64 = 1e-6;

const BATCH: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_tensor: String,
    pub worst_index: usize,
    pub checked: usize,
}

/// `|a - n| / max(|a|, |n|, REL_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Mean cross-entropy of a training-mode forward pass.
pub fn batch_loss(net: &Network<f64>, inputs: &[Vec<f64>], targets: &[Vec<f64>], len: usize) -> f64 {
    let cache = net.forward_train(inputs, len);
    Network::loss_and_logit_grad(&cache, targets).0
}

pub fn analytic_gradients(
    net: &Network<f64>,
    inputs: &[Vec<f64>],
    targets: &[Vec<f64>],
    len: usize,
) -> Gradients<f64> {
    let cache = net.forward_train(inputs, len);
    let (_, dlogits) = Network::loss_and_logit_grad(&cache, targets);
    net.backward(inputs, &cache, &dlogits)
}

/// Central difference `(L(p + h) - L(p - h)) / 2h` for one element of the
/// `tensor`-th trainable tensor.
pub fn numeric_gradient(
    net: &Network<f64>,
    inputs: &[Vec<f64>],
    targets: &[Vec<f64>],
    len: usize,
    tensor: usize,
    index: usize,
    h: f64,
) -> f64 {
    let mut probe = net.clone();
    let orig = probe.trainable_mut()[tensor][index];
    probe.trainable_mut()[tensor][index] = orig + h;
    let up = batch_loss(&probe, inputs, targets, len);
    probe.trainable_mut()[tensor][index] = orig - h;
    let down = batch_loss(&probe, inputs, targets, len);
    (up - down) / (2.0 * h)
}

/// A random network for `config` with non-trivial biases and batch-norm
/// parameters, plus a random batch with one-hot targets.
pub fn random_problem(config: &ModelConfig) -> (Network<f64>, Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut net: Network<f64> = Network::init(config.architecture(), &mut rng);
    for b in &mut net.blocks {
        b.bias.iter_mut().for_each(|v| *v = rng.random_range(-0.5..0.5));
        b.gamma.iter_mut().for_each(|v| *v = rng.random_range(0.5..1.5));
        b.beta.iter_mut().for_each(|v| *v = rng.random_range(-0.5..0.5));
    }
    net.dense_bias.iter_mut().for_each(|v| *v = rng.random_range(-0.5..0.5));
    let width = config.in_channels * config.input_len;
    let inputs = (0..BATCH)
        .map(|_| (0..width).map(|_| rng.sample(StandardNormal)).collect())
        .collect();
    let targets = (0..BATCH)
        .map(|_| {
            let mut t = vec![0.0; config.classes];
            t[rng.random_range(0..config.classes)] = 1.0;
            t
        })
        .collect();
    (net, inputs, targets)
}

/// Compares analytic gradients of every trainable parameter with central
/// differences at [`STEP`] and returns the worst relative error.
pub fn gradient_check(config: &ModelConfig) -> GradCheckReport {
    let len = config.input_len;
    let (net, inputs, targets) = random_problem(config);
    let grads = analytic_gradients(&net, &inputs, &targets, len);
    let names = net.trainable_names();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_tensor: String::new(),
        worst_index: 0,
        checked: 0,
    };
    for (t, g) in grads.slices().into_iter().enumerate() {
        for (i, &a) in g.iter().enumerate() {
            let n = numeric_gradient(&net, &inputs, &targets, len, t, i, STEP);
            let err = relative_error(a, n);
            report.checked += 1;
            if err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst_tensor = names[t].clone();
                report.worst_index = i;
            }
        }
    }
    report
}
