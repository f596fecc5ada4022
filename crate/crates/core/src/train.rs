//! Plain per-sample SGD with binary cross-entropy, used to give the toy
//! threat models real saliency behaviour.

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::Sample;
use crate::math::ln;
use crate::metrics;
use crate::model::{backward_from, backward_full, forward_trace, predict, ModelSpec, ModelWeights};
use crate::{Error, Result, Tensor};

const PROB_FLOOR: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Weight of an L1 penalty on the mean context-layer activation. A
    /// positive weight silences context units on featureless background.
    pub context_penalty: f64,
}

impl TrainConfig {
    pub fn new(epochs: usize, learning_rate: f64, seed: u64) -> Self {
        TrainConfig {
            epochs,
            learning_rate,
            seed,
            context_penalty: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub initial_loss: f64,
    pub final_loss: f64,
    /// Mean training loss over each epoch (measured during the epoch).
    pub epoch_losses: Vec<f64>,
}

/// BCE target: the ground-truth map rescaled to peak 1.
pub fn bce_target(saliency: &Tensor) -> Tensor {
    let peak = saliency.max();
    if peak > 0.0 {
        saliency.scale(1.0 / peak)
    } else {
        saliency.clone()
    }
}

/// Mean binary cross-entropy and its gradient with respect to the prediction.
pub fn bce(pred: &Tensor, target: &Tensor) -> Result<(f64, Tensor)> {
    pred.same_shape(target, "bce")?;
    let n = pred.len() as f64;
    let mut loss = 0.0;
    let grad = pred.zip_map(target, |p, t| {
        let p = p.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR);
        loss -= t * ln(p) + (1.0 - t) * ln(1.0 - p);
        (p - t) / (p * (1.0 - p) * n)
    })?;
    Ok((loss / n, grad))
}

/// Mean BCE of the model over a dataset.
pub fn dataset_loss(spec: &ModelSpec, weights: &ModelWeights, data: &[Sample]) -> Result<f64> {
    let mut total = 0.0;
    for s in data {
        total += bce(&predict(spec, weights, &s.image)?, &bce_target(&s.saliency))?.0;
    }
    Ok(total / data.len().max(1) as f64)
}

/// Mean CC between predictions and ground truth.
pub fn dataset_cc(spec: &ModelSpec, weights: &ModelWeights, data: &[Sample]) -> Result<f64> {
    let mut total = 0.0;
    for s in data {
        total += metrics::cc(&predict(spec, weights, &s.image)?, &s.saliency)?;
    }
    Ok(total / data.len().max(1) as f64)
}

/// Trains from the seeded initialization; deterministic given the config.
pub fn train_toy(spec: &ModelSpec, data: &[Sample], cfg: &TrainConfig) -> Result<(ModelWeights, TrainReport)> {
    if data.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    if !(cfg.learning_rate > 0.0 && cfg.learning_rate.is_finite()) {
        return Err(Error::invalid("learning rate must be positive"));
    }
    if !(cfg.context_penalty >= 0.0 && cfg.context_penalty.is_finite()) {
        return Err(Error::invalid("context penalty must be non-negative"));
    }
    let mut weights = ModelWeights::init(spec, cfg.seed);
    let initial_loss = dataset_loss(spec, &weights, data)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_0f_0de7);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_total = 0.0;
        for (k, &i) in order.iter().enumerate() {
            let trace = forward_trace(spec, &weights, &data[i].image)?;
            let (loss, grad) = bce(trace.output(), &bce_target(&data[i].saliency))?;
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, sample: k, loss });
            }
            epoch_total += loss;
            let (_, mut grads) = backward_full(spec, &weights, &trace, &grad)?;
            if cfg.context_penalty > 0.0 {
                let ctx = &trace.layers[spec.context];
                let unit = cfg.context_penalty / ctx.len() as f64;
                let g = ctx.map(|a| if a > 0.0 { unit } else { 0.0 });
                let extra = backward_from(spec, &weights, &trace, spec.context, &g)?;
                for (acc, e) in grads.iter_mut().zip(extra) {
                    if let (Some(acc), Some(e)) = (acc.as_mut(), e) {
                        acc.weight.add_assign(&e.weight)?;
                        acc.bias.add_assign(&e.bias)?;
                    }
                }
            }
            for (p, g) in weights.params.iter_mut().zip(grads) {
                if let (Some(p), Some(g)) = (p.as_mut(), g) {
                    for (w, d) in p.weight.data_mut().iter_mut().zip(g.weight.data()) {
                        *w -= cfg.learning_rate * d;
                    }
                    for (b, d) in p.bias.data_mut().iter_mut().zip(g.bias.data()) {
                        *b -= cfg.learning_rate * d;
                    }
                }
            }
            if !weights.all_finite() {
                return Err(Error::Diverged {
                    epoch,
                    sample: k,
                    loss: f64::NAN,
                });
            }
        }
        epoch_losses.push(epoch_total / data.len() as f64);
    }
    let final_loss = dataset_loss(spec, &weights, data)?;
    Ok((
        weights,
        TrainReport {
            initial_loss,
            final_loss,
            epoch_losses,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic_dataset, SceneParams};
    use crate::model::minisal_s;

    fn small() -> (ModelSpec, Vec<Sample>) {
        let p = SceneParams {
            height: 16,
            width: 16,
            ..SceneParams::default()
        };
        (minisal_s(16, 16), generate_synthetic_dataset(4, &p, 1))
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let (spec, data) = small();
        let cfg = TrainConfig::new(0, 0.1, 9);
        let (w, _) = train_toy(&spec, &data, &cfg).unwrap();
        assert_eq!(w, ModelWeights::init(&spec, 9));
    }

    #[test]
    fn seeded_training_is_bit_identical() {
        let (spec, data) = small();
        let cfg = TrainConfig::new(2, 0.1, 3);
        let a = train_toy(&spec, &data, &cfg).unwrap();
        let b = train_toy(&spec, &data, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn divergence_is_reported() {
        let (spec, data) = small();
        let cfg = TrainConfig::new(3, 1e200, 3);
        assert!(matches!(train_toy(&spec, &data, &cfg), Err(Error::Diverged { .. })));
    }

    #[test]
    fn bce_gradient_matches_finite_differences() {
        let p = Tensor::new(alloc::vec![1, 1, 3], alloc::vec![0.2, 0.7, 0.5]).unwrap();
        let t = Tensor::new(alloc::vec![1, 1, 3], alloc::vec![0.0, 1.0, 0.3]).unwrap();
        let (_, g) = bce(&p, &t).unwrap();
        for i in 0..3 {
            let mut a = p.clone();
            a.data_mut()[i] += 1e-6;
            let mut b = p.clone();
            b.data_mut()[i] -= 1e-6;
            let fd = (bce(&a, &t).unwrap().0 - bce(&b, &t).unwrap().0) / 2e-6;
            assert!((fd - g.data()[i]).abs() < 1e-6);
        }
    }
}
