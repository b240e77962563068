//! Behaviour cloning of the plain solver.
//!
//! The expert is plain ADMM run to convergence. Every block `r` of `beta`
//! iterates of every variable becomes one sample whose label is the
//! variable's final rounded value and whose weight is `1 / (r + 1)`, so
//! early blocks, where fixing pays off most, dominate the loss.

mod dataset;

pub use dataset::{read_dataset, write_dataset, Dataset, Sample};

use ndarray::Array1;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::admm::{solve, AdmmParams};
use crate::error::{Error, Result};
use crate::instances::IpInstance;
use crate::policy::{sigmoid, BatchStats, Mode, PolicyConfig, PolicyWeights, Scalar};
use crate::rng;

/// Probabilities are clamped to `[LOSS_CLAMP, 1 - LOSS_CLAMP]` inside the loss.
pub const LOSS_CLAMP: f64 = 1e-7;

/// Weight of a sample from round `r` (0-based).
pub fn sample_weight(r: usize) -> f64 {
    1.0 / (r as f64 + 1.0)
}

/// Weighted binary cross-entropy, `-(1/M) sum_k w_k q_k` with
/// `q = a log p + (1 - a) log(1 - p)`.
pub fn wbce_loss(p: &[f64], labels: &[u8], weights: &[f64]) -> f64 {
    debug_assert!(p.len() == labels.len() && p.len() == weights.len());
    if p.is_empty() {
        return 0.0;
    }
    let total: f64 = p
        .iter()
        .zip(labels)
        .zip(weights)
        .map(|((&p, &a), &w)| {
            let p = p.clamp(LOSS_CLAMP, 1.0 - LOSS_CLAMP);
            let q = if a == 1 { p.ln() } else { (1.0 - p).ln() };
            w * q
        })
        .sum();
    -total / p.len() as f64
}

/// Loss and parameter gradients for one batch, with batch norm in training
/// behaviour. The batch statistics are returned for the running update.
pub fn loss_and_grad<F: Scalar>(
    weights: &PolicyWeights<F>,
    traces: &[f64],
    labels: &[u8],
    sample_weights: &[f64],
) -> (f64, PolicyWeights<F>, BatchStats<F>) {
    let (logits, cache, stats) = weights.forward_logits(traces, true);
    let p: Vec<f64> = logits.iter().map(|z| sigmoid(z.to_f64().expect("float logit"))).collect();
    let loss = wbce_loss(&p, labels, sample_weights);
    let m = p.len() as f64;
    let dlogits: Array1<F> = p
        .iter()
        .zip(labels)
        .zip(sample_weights)
        .map(|((&p, &a), &w)| {
            // d/dz of the clamped term; zero where the clamp is active
            let g = if p > LOSS_CLAMP && p < 1.0 - LOSS_CLAMP { w * (p - f64::from(a)) / m } else { 0.0 };
            F::from_f64(g).expect("finite gradient")
        })
        .collect();
    let grads = weights.backward(&cache, &dlogits);
    (loss, grads, stats)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    /// Blocks collected per training instance.
    pub gamma: usize,
    /// Seed of the batch shuffle.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10,
            learning_rate: 1e-4,
            batch_size: 256,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            gamma: 10,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning_rate", "must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size", "must be positive"));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return Err(Error::invalid("adam_beta", "moment decays must lie in [0, 1)"));
        }
        if !(self.adam_eps > 0.0) {
            return Err(Error::invalid("adam_eps", "must be positive"));
        }
        Ok(())
    }
}

/// Runs the plain solver on every instance and records its traces.
///
/// Sample `(e, r, i)` holds the iterates of variable `i` of instance `e`
/// after sweeps `r*beta + 1 ..= (r+1)*beta`, which is exactly the window the
/// policy sees at the end of block `r` during inference. Runs that converge
/// early contribute only their completed blocks.
pub fn collect_dataset(
    instances: &[IpInstance],
    params: &AdmmParams,
    beta: usize,
    gamma: usize,
) -> Result<Dataset> {
    if beta == 0 {
        return Err(Error::invalid("beta", "must be positive"));
    }
    if gamma.saturating_mul(beta) > params.max_iters {
        return Err(Error::invalid("gamma", "gamma * beta exceeds the iteration budget"));
    }
    params.validate()?;
    let per_instance: Vec<Result<Vec<Sample>>> = instances
        .par_iter()
        .enumerate()
        .map(|(e, inst)| expert_samples(e, inst, params, beta, gamma))
        .collect();
    let mut samples = Vec::new();
    for part in per_instance {
        samples.extend(part?);
    }
    Ok(Dataset { beta, samples })
}

fn expert_samples(e: usize, inst: &IpInstance, params: &AdmmParams, beta: usize, gamma: usize) -> Result<Vec<Sample>> {
    let n = inst.n();
    let horizon = gamma * beta;
    let mut history: Vec<f64> = Vec::with_capacity(horizon * n);
    let solution = solve(inst, params, |t, x| {
        if t <= horizon {
            history.extend_from_slice(x);
        }
    })?;
    let rounds = (history.len() / n.max(1)) / beta;
    if rounds < gamma {
        log::info!("instance {e}: expert stopped after {} iterations, {rounds} of {gamma} blocks", solution.iterations);
    }
    let mut samples = Vec::with_capacity(rounds * n);
    for r in 0..rounds {
        for i in 0..n {
            let trace = (r * beta..(r + 1) * beta).map(|t| history[t * n + i] as f32).collect();
            samples.push(Sample {
                trace,
                label: solution.x[i],
                weight: sample_weight(r) as f32,
                provenance: [e as u32, r as u32, i as u32],
            });
        }
    }
    Ok(samples)
}

/// Adam over the trainable tensors.
#[derive(Debug, Clone)]
pub struct Adam<F> {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    steps: i32,
    m: PolicyWeights<F>,
    v: PolicyWeights<F>,
}

impl<F: Scalar> Adam<F> {
    pub fn new(config: &PolicyConfig, cfg: &TrainConfig) -> Result<Self> {
        Ok(Adam {
            lr: cfg.learning_rate,
            beta1: cfg.adam_beta1,
            beta2: cfg.adam_beta2,
            eps: cfg.adam_eps,
            steps: 0,
            m: PolicyWeights::zeros(config)?,
            v: PolicyWeights::zeros(config)?,
        })
    }

    pub fn step(&mut self, weights: &mut PolicyWeights<F>, grads: &PolicyWeights<F>) {
        self.steps += 1;
        let c1 = 1.0 - self.beta1.powi(self.steps);
        let c2 = 1.0 - self.beta2.powi(self.steps);
        let cast = |v: f64| F::from_f64(v).expect("finite hyperparameter");
        let (b1, b2, eps) = (cast(self.beta1), cast(self.beta2), cast(self.eps));
        let (lr_hat, c2_sqrt) = (cast(self.lr / c1), cast(c2.sqrt()));
        let params = weights.tensors_mut();
        let grads = grads.tensors();
        let ms = self.m.tensors_mut();
        let vs = self.v.tensors_mut();
        for (((p, g), m), v) in params.into_iter().zip(grads).zip(ms).zip(vs) {
            if p.kind != crate::policy::TensorKind::Trainable {
                continue;
            }
            for (((w, &gi), mi), vi) in p.data.iter_mut().zip(g.data).zip(m.data.iter_mut()).zip(v.data.iter_mut()) {
                *mi = b1 * *mi + (F::one() - b1) * gi;
                *vi = b2 * *vi + (F::one() - b2) * gi * gi;
                *w -= lr_hat * *mi / ((*vi).sqrt() / c2_sqrt + eps);
            }
        }
    }
}

/// Trained weights (inference mode) and the mean loss of every epoch.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub weights: PolicyWeights<f32>,
    pub epoch_losses: Vec<f64>,
}

pub fn train(dataset: &Dataset, cfg: &TrainConfig, policy_cfg: &PolicyConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::invalid("dataset", "no samples"));
    }
    if dataset.beta != policy_cfg.beta {
        return Err(Error::invalid(
            "beta",
            format!("dataset has beta = {}, policy expects {}", dataset.beta, policy_cfg.beta),
        ));
    }
    let mut weights = PolicyWeights::<f32>::init(policy_cfg)?;
    let mut adam = Adam::new(policy_cfg, cfg)?;
    let mut rng = rng::seeded(cfg.seed);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let beta = dataset.beta;
    let mut traces = Vec::with_capacity(cfg.batch_size * beta);
    let mut labels = Vec::with_capacity(cfg.batch_size);
    let mut sample_weights = Vec::with_capacity(cfg.batch_size);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for (batch, idx) in order.chunks(cfg.batch_size).enumerate() {
            traces.clear();
            labels.clear();
            sample_weights.clear();
            for &k in idx {
                let s = &dataset.samples[k];
                traces.extend(s.trace.iter().map(|&v| f64::from(v)));
                labels.push(s.label);
                sample_weights.push(f64::from(s.weight));
            }
            let (loss, grads, stats) = loss_and_grad(&weights, &traces, &labels, &sample_weights);
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, batch, loss });
            }
            adam.step(&mut weights, &grads);
            weights.update_running(&stats);
            total += loss * idx.len() as f64;
        }
        let mean = total / dataset.len() as f64;
        log::info!("epoch {}: loss {mean:.6}", epoch + 1);
        epoch_losses.push(mean);
    }
    weights.set_mode(Mode::Inference);
    Ok(TrainOutcome { weights, epoch_losses })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_by_round() {
        assert_eq!(sample_weight(0), 1.0);
        assert_eq!(sample_weight(1), 0.5);
        assert!((sample_weight(9) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn loss_values() {
        assert!((wbce_loss(&[0.5], &[1], &[1.0]) - std::f64::consts::LN_2).abs() < 1e-15);
        assert!(wbce_loss(&[1.0, 0.0], &[1, 0], &[1.0, 1.0]) < 1e-6);
        let base = wbce_loss(&[0.3, 0.8], &[1, 0], &[1.0, 0.5]);
        let doubled = wbce_loss(&[0.3, 0.8], &[1, 0], &[2.0, 1.0]);
        assert!((doubled - 2.0 * base).abs() < 1e-15);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        assert!(TrainConfig { learning_rate: 0.0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { batch_size: 0, ..Default::default() }.validate().is_err());
    }
}
