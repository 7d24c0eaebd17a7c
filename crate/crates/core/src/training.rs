//! Writer-independent training: mini-batch Nesterov-momentum SGD on the
//! user-classification task, with step learning-rate decay and L2 weight
//! decay on weights (not biases).

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nn::{Network, Params, Scalar, Tensor};
use crate::par::Execution;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub initial_lr: f64,
    pub lr_decay_factor: f64,
    /// Epochs between learning-rate decays.
    pub lr_decay_every: usize,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    /// lr 0.01 decayed ×0.1 every 20 epochs, momentum 0.9, weight decay
    /// 5e-4, batches of 100, 60 epochs.
    fn default() -> Self {
        TrainConfig {
            initial_lr: 0.01,
            lr_decay_factor: 0.1,
            lr_decay_every: 20,
            momentum: 0.9,
            weight_decay: 0.0005,
            batch_size: 100,
            epochs: 60,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 1 {
            return Err(Error::config("batch size must be at least 1"));
        }
        if self.lr_decay_every < 1 {
            return Err(Error::config("learning-rate decay interval must be at least 1 epoch"));
        }
        if !(self.initial_lr > 0.0) || !(0.0..1.0).contains(&self.momentum) || self.weight_decay < 0.0 {
            return Err(Error::config(format!("invalid optimizer settings {self:?}")));
        }
        Ok(())
    }
}

/// `initial_lr · decay_factor^floor(epoch / decay_every)`.
pub fn lr_schedule(epoch: usize, cfg: &TrainConfig) -> f64 {
    cfg.initial_lr * cfg.lr_decay_factor.powi((epoch / cfg.lr_decay_every.max(1)) as i32)
}

/// One Nesterov update on a flat parameter block:
/// `v ← μ·v − lr·(g + λ·w)`, `w ← w + v`.
///
/// `grads` must have been evaluated at the lookahead point `w + μ·v`.
pub fn nesterov_step<F: Scalar>(
    params: &mut [F],
    grads: &[F],
    velocity: &mut [F],
    lr: f64,
    momentum: f64,
    weight_decay: f64,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != velocity.len() {
        return Err(Error::State(format!(
            "parameter block of {} values, gradient {}, velocity {}",
            params.len(),
            grads.len(),
            velocity.len()
        )));
    }
    let (lr, mu, decay) = (F::of(lr), F::of(momentum), F::of(weight_decay));
    for ((w, &g), v) in params.iter_mut().zip(grads).zip(velocity.iter_mut()) {
        *v = mu * *v - lr * (g + decay * *w);
        *w += *v;
    }
    Ok(())
}

/// Velocity per parameter tensor, zero-initialized.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState<F> {
    pub velocity: Vec<Option<Params<F>>>,
}

impl<F: Scalar> OptimizerState<F> {
    pub fn new(net: &Network<F>) -> Self {
        OptimizerState {
            velocity: net
                .params()
                .iter()
                .map(|p| {
                    p.as_ref().map(|p| Params {
                        weights: Tensor::zeros(p.weights.shape()),
                        bias: Tensor::zeros(p.bias.shape()),
                    })
                })
                .collect(),
        }
    }

    /// The point `w + μ·v` at which the next gradient is evaluated.
    pub fn lookahead(&self, net: &Network<F>, momentum: f64) -> Network<F> {
        let mut ahead = net.clone();
        if momentum == 0.0 {
            return ahead;
        }
        let mu = F::of(momentum);
        for (p, v) in ahead.params_mut().iter_mut().zip(&self.velocity) {
            if let (Some(p), Some(v)) = (p, v) {
                for (w, &vv) in p.weights.data_mut().iter_mut().zip(v.weights.data()) {
                    *w += mu * vv;
                }
                for (b, &vv) in p.bias.data_mut().iter_mut().zip(v.bias.data()) {
                    *b += mu * vv;
                }
            }
        }
        ahead
    }

    /// Applies [`nesterov_step`] to every parameter tensor; weight decay is
    /// applied to weights only.
    pub fn step(
        &mut self,
        net: &mut Network<F>,
        grads: &[Option<Params<F>>],
        lr: f64,
        momentum: f64,
        weight_decay: f64,
    ) -> Result<()> {
        if grads.len() != net.params().len() || self.velocity.len() != grads.len() {
            return Err(Error::State("gradient/velocity layout does not match the network".into()));
        }
        for ((p, g), v) in net.params_mut().iter_mut().zip(grads).zip(self.velocity.iter_mut()) {
            match (p, g, v) {
                (Some(p), Some(g), Some(v)) => {
                    nesterov_step(p.weights.data_mut(), g.weights.data(), v.weights.data_mut(), lr, momentum, weight_decay)?;
                    nesterov_step(p.bias.data_mut(), g.bias.data(), v.bias.data_mut(), lr, momentum, 0.0)?;
                }
                (None, None, None) => {}
                _ => return Err(Error::State("parameter slot mismatch".into())),
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    /// Mean training-mode cross-entropy over the epoch's samples.
    pub mean_loss: f64,
    /// Training-mode accuracy over the epoch's samples.
    pub accuracy: f64,
}

/// splitmix64 finalizer; decorrelates per-sample dropout seeds.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Trains `net` to classify `inputs` into `labels` (user indices).
///
/// Each epoch draws a fresh permutation from the run seed and walks it in
/// mini-batches; the last partial batch is kept. `on_epoch` sees every
/// epoch's record and the network after that epoch. The run is a pure
/// function of its arguments.
pub fn train_wi<F: Scalar>(
    net: &mut Network<F>,
    inputs: &[Tensor<F>],
    labels: &[usize],
    cfg: &TrainConfig,
    exec: Execution,
    mut on_epoch: impl FnMut(&EpochRecord, &Network<F>),
) -> Result<Vec<EpochRecord>> {
    cfg.validate()?;
    if inputs.is_empty() {
        return Err(Error::config("training set is empty"));
    }
    if inputs.len() != labels.len() {
        return Err(Error::config("every training input needs a label"));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= net.classes()) {
        return Err(Error::config(format!("label {bad} outside the network's {} classes", net.classes())));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut state = OptimizerState::new(net);
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    let mut log = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let lr = lr_schedule(epoch, cfg);
        order.shuffle(&mut rng);
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let xs: Vec<&Tensor<F>> = batch.iter().map(|&i| &inputs[i]).collect();
            let ys: Vec<usize> = batch.iter().map(|&i| labels[i]).collect();
            let seeds: Vec<u64> = (0..batch.len())
                .map(|k| mix(cfg.seed ^ mix(((epoch as u64) << 40) ^ ((b as u64) << 20) ^ k as u64)))
                .collect();
            let ahead = state.lookahead(net, cfg.momentum);
            let mut out = ahead.batch_gradients(&xs, &ys, &seeds, exec)?;
            out.grads.scale(F::of(1.0 / batch.len() as f64));
            state.step(net, &out.grads.layers, lr, cfg.momentum, cfg.weight_decay)?;
            loss_sum += out.loss_sum;
            correct += out.correct;
        }
        let record = EpochRecord {
            epoch,
            lr,
            mean_loss: loss_sum / inputs.len() as f64,
            accuracy: correct as f64 / inputs.len() as f64,
        };
        if !record.mean_loss.is_finite() {
            return Err(Error::config(format!("training diverged at epoch {epoch} (loss {})", record.mean_loss)));
        }
        log::info!(
            "epoch {:>3}  lr {:.0e}  loss {:.4}  acc {:.3}",
            epoch,
            lr,
            record.mean_loss,
            record.accuracy
        );
        if epoch >= 10 && epoch < cfg.lr_decay_every {
            let earlier: &EpochRecord = &log[epoch - 10];
            if record.mean_loss > earlier.mean_loss {
                log::warn!(
                    "training loss rose over 10 epochs: {:.4} at epoch {} -> {:.4} at epoch {}",
                    earlier.mean_loss,
                    earlier.epoch,
                    record.mean_loss,
                    epoch
                );
            }
        }
        on_epoch(&record, net);
        log.push(record);
    }
    Ok(log)
}
