//! Training loop with validation-UAR model selection.

use std::time::Instant;

use crate::checkpoint::{save_model, CheckpointMeta};
use crate::data::{epoch_order, index_batches, stack_batch, LoadedSplit};
use crate::error::{Error, Result};
use crate::graph::{Graph, Mode};
use crate::metrics::{evaluate, uar, EvalReport};
use crate::network::Model;
use crate::optim::{adam_step, AdamConfig, AdamState};
use crate::rng::StreamRng;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ClassWeighting {
    #[default]
    Off,
    /// Inverse-frequency weights from the training labels.
    Balanced,
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub seed: u64,
    pub patience: Option<usize>,
    pub class_weighting: ClassWeighting,
    pub grad_clip: Option<f64>,
    /// Stop as soon as validation UAR reaches this value.
    pub target_uar: Option<f64>,
    /// Strict reproducibility: single-threaded execution is forced by the
    /// caller; wall-clock fields in history and checkpoints are zeroed so
    /// two identical runs produce identical bytes.
    pub deterministic: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            adam: AdamConfig::default(),
            batch_size: 16,
            max_epochs: 1,
            seed: 0,
            patience: None,
            class_weighting: ClassWeighting::Off,
            grad_clip: None,
            target_uar: None,
            deterministic: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.adam.validate()?;
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be >= 1".to_string()));
        }
        if self.max_epochs == 0 {
            return Err(Error::config(
                "max_epochs must be >= 1: no epoch would be trained".to_string(),
            ));
        }
        if let Some(t) = self.target_uar {
            if !(0.0..=1.0).contains(&t) {
                return Err(Error::config(format!("target UAR {t} out of [0, 1]")));
            }
        }
        if let Some(c) = self.grad_clip {
            if c <= 0.0 {
                return Err(Error::config(format!("gradient clip {c} must be > 0")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_uar: f64,
    pub seconds: f64,
}

impl EpochRecord {
    pub fn render(&self) -> String {
        format!(
            "epoch={} train_loss={:.6} val_uar={:.6} seconds={:.3}",
            self.epoch, self.train_loss, self.val_uar, self.seconds
        )
    }
}

pub fn render_history(history: &[EpochRecord]) -> String {
    let mut out = String::new();
    for r in history {
        out.push_str(&r.render());
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_uar: f64,
    /// Checkpoint of the epoch with the highest validation UAR
    /// (earliest epoch wins ties).
    pub best_checkpoint: Vec<u8>,
    /// Checkpoint after the last trained epoch.
    pub final_checkpoint: Vec<u8>,
}

fn class_weights(labels: &[usize], n_classes: usize) -> Result<Vec<f32>> {
    let mut counts = vec![0usize; n_classes];
    for &l in labels {
        counts[l] += 1;
    }
    if counts.contains(&0) {
        return Err(Error::config(
            "balanced class weighting needs every class in the training split".to_string(),
        ));
    }
    let n = labels.len() as f64;
    Ok(counts
        .iter()
        .map(|&c| (n / (n_classes as f64 * c as f64)) as f32)
        .collect())
}

/// Scale all gradients so their global L2 norm is at most `max_norm`.
fn clip_gradients(model: &mut Model<f32>, max_norm: f64) {
    let mut total = 0.0f64;
    for p in model.store.params() {
        for &g in p.grad.data() {
            total += (g as f64) * (g as f64);
        }
    }
    let norm = total.sqrt();
    if norm > max_norm {
        let scale = (max_norm / norm) as f32;
        for p in model.store.params_mut() {
            for g in p.grad.data_mut() {
                *g *= scale;
            }
        }
    }
}

/// Argmax predictions over a split, batched, in split order.
pub fn predict_split(
    model: &mut Model<f32>,
    split: &LoadedSplit,
    batch_size: usize,
) -> Result<Vec<usize>> {
    let order: Vec<usize> = (0..split.len()).collect();
    let mut preds = Vec::with_capacity(split.len());
    let mut unused = StreamRng::from_seed(0).stream("eval");
    for batch_idx in index_batches(&order, batch_size) {
        let (batch, _) = stack_batch(split, &batch_idx);
        let logits = model.forward(&batch, Mode::Eval, &mut unused)?;
        let k = logits.shape()[1];
        for row in logits.data().chunks(k) {
            let argmax = row
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .map(|(i, _)| i)
                .unwrap_or(0);
            preds.push(argmax);
        }
    }
    Ok(preds)
}

/// Validation UAR of the current parameters.
pub fn validation_uar(
    model: &mut Model<f32>,
    split: &LoadedSplit,
    batch_size: usize,
) -> Result<f64> {
    let preds = predict_split(model, split, batch_size)?;
    uar(&split.labels, &preds, model.config.n_classes)
}

/// Full evaluation report over a split (UAR, confusion, 95% bootstrap CI).
pub fn evaluate_split(
    model: &mut Model<f32>,
    split: &LoadedSplit,
    batch_size: usize,
    n_bootstrap: usize,
    seed: u64,
) -> Result<EvalReport> {
    let preds = predict_split(model, split, batch_size)?;
    evaluate(
        &split.labels,
        &preds,
        model.config.n_classes,
        n_bootstrap,
        seed,
    )
}

fn snapshot(model: &Model<f32>, config: &TrainConfig, epoch: usize, val_uar: f64) -> Vec<u8> {
    let mut meta = CheckpointMeta::new();
    meta.set("epoch", epoch);
    meta.set("val_uar", format!("{val_uar:.6}"));
    meta.set("train.lr", config.adam.lr);
    meta.set("train.beta1", config.adam.beta1);
    meta.set("train.beta2", config.adam.beta2);
    meta.set("train.eps", config.adam.eps);
    meta.set("train.batch_size", config.batch_size);
    meta.set("train.max_epochs", config.max_epochs);
    meta.set("train.seed", config.seed);
    let created = if config.deterministic {
        0
    } else {
        std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0)
    };
    meta.set("created_unix", created);
    save_model(model, &meta)
}

/// Per epoch: seeded shuffle, cross-entropy forward/backward over batches,
/// Adam update, validation UAR; retains the checkpoint with the highest
/// validation UAR (ties resolved toward the earlier epoch).
pub fn train(
    model: &mut Model<f32>,
    train_split: &LoadedSplit,
    val_split: &LoadedSplit,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    if train_split.is_empty() {
        return Err(Error::config("training split is empty".to_string()));
    }
    let n_classes = model.config.n_classes;
    // UAR is undefined if the validation split misses a class
    let mut present = vec![false; n_classes];
    for &l in &val_split.labels {
        present[l] = true;
    }
    if let Some(missing) = present.iter().position(|&p| !p) {
        return Err(Error::config(format!(
            "validation split has no clips of class {missing}; UAR undefined"
        )));
    }

    let weights = match config.class_weighting {
        ClassWeighting::Off => None,
        ClassWeighting::Balanced => Some(class_weights(&train_split.labels, n_classes)?),
    };

    let mut adam = AdamState::new(&model.store);
    let root_rng = StreamRng::from_seed(config.seed);
    let mut history = Vec::new();
    let mut best: Option<(usize, f64, Vec<u8>)> = None;
    let mut since_best = 0usize;

    for epoch in 1..=config.max_epochs {
        let started = Instant::now();
        let order = epoch_order(train_split.len(), config.seed, epoch, true);
        let mut loss_sum = 0.0f64;
        let mut seen = 0usize;

        for (step, batch_idx) in index_batches(&order, config.batch_size).iter().enumerate() {
            let (batch, labels) = stack_batch(train_split, batch_idx);
            let mut drop_rng = root_rng.stream(&format!("dropout/e{epoch}/s{step}"));

            model.store.zero_grads();
            let mut g = Graph::new();
            let x = g.input(batch)?;
            let logits = model.forward_graph(&mut g, x, Mode::Train, &mut drop_rng)?;
            let loss = g.softmax_cross_entropy(logits, &labels, weights.clone())?;
            let loss_value = g.value(loss).data()[0] as f64;
            let mut grads = g.backward(loss)?;
            model.apply_gradients(&g, &mut grads)?;
            if let Some(max_norm) = config.grad_clip {
                clip_gradients(model, max_norm);
            }
            adam_step(&mut model.store, &mut adam, &config.adam)?;

            loss_sum += loss_value * batch_idx.len() as f64;
            seen += batch_idx.len();
        }

        let val_uar = validation_uar(model, val_split, config.batch_size)?;
        let seconds = if config.deterministic {
            0.0
        } else {
            started.elapsed().as_secs_f64()
        };
        history.push(EpochRecord {
            epoch,
            train_loss: loss_sum / seen as f64,
            val_uar,
            seconds,
        });

        let improved = match &best {
            Some((_, best_uar, _)) => val_uar > *best_uar,
            None => true,
        };
        if improved {
            best = Some((epoch, val_uar, snapshot(model, config, epoch, val_uar)));
            since_best = 0;
        } else {
            since_best += 1;
        }

        if let Some(target) = config.target_uar {
            if val_uar >= target {
                break;
            }
        }
        if let Some(patience) = config.patience {
            if since_best > patience {
                break;
            }
        }
    }

    let (best_epoch, best_val_uar, best_checkpoint) =
        best.ok_or_else(|| Error::Internal("no epoch completed".to_string()))?;
    let last = history.last().expect("at least one epoch");
    let final_checkpoint = snapshot(model, config, last.epoch, last.val_uar);
    Ok(TrainOutcome {
        history,
        best_epoch,
        best_val_uar,
        best_checkpoint,
        final_checkpoint,
    })
}

/// Class probabilities for one feature tensor.
pub fn predict_probs(model: &mut Model<f32>, features: &Tensor<f32>) -> Result<Vec<f64>> {
    let mut batch_shape = vec![1usize];
    batch_shape.extend_from_slice(features.shape());
    let batch = features.clone().reshaped(&batch_shape)?;
    let mut unused = StreamRng::from_seed(0).stream("eval");
    let logits = model.forward(&batch, Mode::Eval, &mut unused)?;
    let row = logits.data();
    let max = row.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
    let exps: Vec<f64> = row.iter().map(|&v| ((v - max) as f64).exp()).collect();
    let denom: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / denom).collect())
}
