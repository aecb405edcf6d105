use std::time::Instant;

use rand::seq::SliceRandom;

use super::{backward_pass, build, forward_pass, predict, Features, ModelConfig, ModelWeights};
use crate::error::{Error, Result};
use crate::lstm::Mode;
use crate::numcore::{adam_step, AdamState};
use crate::pipeline::DatasetSplit;
use crate::rng::{derive_seed, seeded};

/// Per-epoch training record.
#[derive(Debug, Clone, Default)]
pub struct TrainHistory {
    /// Mean squared error on the scaled target, averaged over the epoch's forward passes.
    pub train_loss: Vec<f64>,
    /// Validation RMSE in bu/acre; `None` without a validation split.
    pub val_rmse: Vec<Option<f64>>,
    pub seconds: Vec<f64>,
    /// Zero-based epoch whose weights were returned.
    pub best_epoch: usize,
}

/// Wall-clock time is excluded.
impl PartialEq for TrainHistory {
    fn eq(&self, other: &Self) -> bool {
        self.train_loss == other.train_loss && self.val_rmse == other.val_rmse && self.best_epoch == other.best_epoch
    }
}

impl TrainHistory {
    pub fn epochs(&self) -> usize {
        self.train_loss.len()
    }

    /// `epoch,train_loss,val_rmse` with one-based epochs.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_rmse\n");
        for (i, (l, v)) in self.train_loss.iter().zip(&self.val_rmse).enumerate() {
            let v = v.map(|v| format!("{v:.6}")).unwrap_or_default();
            out.push_str(&format!("{},{l:.8},{v}\n", i + 1));
        }
        out
    }
}

fn clip_global_norm(grads: &mut ModelWeights, max_norm: f64) {
    let norm = grads.tensors().iter().flat_map(|t| t.iter()).map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        for t in grads.tensors_mut() {
            t.iter_mut().for_each(|g| *g *= s);
        }
    }
}

fn rmse(pred: &[f64], actual: &[f64]) -> f64 {
    let sum: f64 = pred.iter().zip(actual).map(|(p, a)| (p - a) * (p - a)).sum();
    (sum / pred.len() as f64).sqrt()
}

/// Mini-batch Adam on the squared error of the scaled target.
///
/// Seeds for initialization, shuffling and dropout all derive from
/// `cfg.seed`. With a validation split the weights of the epoch with the
/// lowest validation RMSE are returned; without one, the final weights.
pub fn train(cfg: &ModelConfig, data: &DatasetSplit) -> Result<(ModelWeights, TrainHistory)> {
    cfg.validate()?;
    if data.train.is_empty() {
        return Err(Error::Data("training split is empty".into()));
    }
    let features: Vec<Features> = data.train.iter().map(|s| cfg.features(s)).collect::<Result<_>>()?;
    let targets: Vec<f64> = data.train.iter().map(|s| s.target).collect();
    let val_actual: Vec<f64> = data.validation.iter().map(|s| s.record.yield_bu_ac).collect();

    let mut weights = build(cfg, derive_seed(cfg.seed, "model-init"))?;
    let mut grads = ModelWeights::zeros(cfg);
    let lens: Vec<usize> = weights.tensors().iter().map(|t| t.len()).collect();
    let mut adam = AdamState::new(&lens, cfg.learning_rate);
    let mut shuffle_rng = seeded(derive_seed(cfg.seed, "epoch-shuffle"));
    let mut dropout_rng = seeded(derive_seed(cfg.seed, "dropout"));

    let n = features.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut sq_err = vec![0.0; n];
    let mut history = TrainHistory::default();
    let mut best: Option<(f64, ModelWeights)> = None;
    let mut since_best = 0;

    for epoch in 0..cfg.epochs {
        let started = Instant::now();
        order.shuffle(&mut shuffle_rng);
        for batch in order.chunks(cfg.batch_size) {
            for t in grads.tensors_mut() {
                t.fill(0.0);
            }
            let scale = 2.0 / batch.len() as f64;
            for &i in batch {
                let mut mode = Mode::Train { rng: &mut dropout_rng };
                let pass = forward_pass(&weights, cfg, &features[i], &mut mode)?;
                let err = pass.prediction - targets[i];
                sq_err[i] = err * err;
                backward_pass(&weights, &pass, scale * err, &mut grads)?;
            }
            if let Some(c) = cfg.grad_clip {
                clip_global_norm(&mut grads, c);
            }
            let g: Vec<&[f64]> = grads.tensors();
            let mut p = weights.tensors_mut();
            adam_step(&mut p, &g, &mut adam)?;
        }
        // Summed in record order so the value does not depend on the shuffle.
        let loss = sq_err.iter().sum::<f64>() / n as f64;
        if !loss.is_finite() || !weights.is_finite() {
            return Err(Error::NonFinite(format!("training loss is {loss} at epoch {}", epoch + 1)));
        }
        history.train_loss.push(loss);

        let val = if data.validation.is_empty() {
            None
        } else {
            let pred = predict(&weights, cfg, &data.validation, &data.scaler)?;
            Some(rmse(&pred, &val_actual))
        };
        history.val_rmse.push(val);
        history.seconds.push(started.elapsed().as_secs_f64());
        log::info!(
            "epoch {}/{}: train loss {loss:.6}{}",
            epoch + 1,
            cfg.epochs,
            val.map(|v| format!(", validation RMSE {v:.4}")).unwrap_or_default()
        );

        if let Some(v) = val {
            if best.as_ref().is_none_or(|(b, _)| v < *b) {
                best = Some((v, weights.clone()));
                history.best_epoch = epoch;
                since_best = 0;
            } else {
                since_best += 1;
            }
            if cfg.patience.is_some_and(|p| since_best >= p) {
                log::info!("no validation improvement for {since_best} epochs; stopping");
                break;
            }
        } else {
            history.best_epoch = epoch;
        }
    }

    let out = match best {
        Some((_, w)) => w,
        None => weights,
    };
    Ok((out, history))
}
