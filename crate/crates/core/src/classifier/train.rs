//! Epoch loop, early stopping and best-model selection.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rayon::prelude::*;

use super::network::Network;
use super::optim::Adam;
use super::tensor::{Scalar, Tensor};
use super::{io, ModelState, TrainConfig};
use crate::encoder::{encode, resize, NetworkInput};
use crate::landmarks::{LandmarkSequence, SignSample};
use crate::transforms::{augment, uniformize, AugmentParams, UniformizationPlan};
use crate::{seed, Error, Result};

const SHUFFLE_STREAM: u64 = 1;
const DROPOUT_STREAM: u64 = 2;
const INIT_STREAM: u64 = 3;

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EpochStats {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
}

/// Stops once the validation loss has gone `patience` consecutive epochs
/// without dropping strictly below the best value seen so far.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best: Option<f64>,
    stale: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: None,
            stale: 0,
        }
    }

    /// Records one epoch's validation loss; returns true when training should stop.
    pub fn observe(&mut self, val_loss: f64) -> bool {
        match self.best {
            Some(b) if val_loss >= b => self.stale += 1,
            _ => {
                self.best = Some(val_loss);
                self.stale = 0;
            }
        }
        self.stale >= self.patience
    }
}

/// One epoch of work plus a way to capture the current model.
pub trait EpochRunner {
    type Snapshot;

    fn run_epoch(&mut self, epoch: usize) -> Result<EpochStats>;

    fn snapshot(&self) -> Self::Snapshot;
}

#[derive(Debug, Clone)]
pub struct LoopOutcome<T> {
    pub best: T,
    pub best_epoch: usize,
    pub history: Vec<EpochStats>,
    pub stopped_early: bool,
}

/// Runs up to `epochs` epochs and keeps the snapshot with the highest
/// validation accuracy, earliest on ties.
pub fn run_epochs<R: EpochRunner>(runner: &mut R, epochs: usize, patience: usize) -> Result<LoopOutcome<R::Snapshot>> {
    if epochs == 0 {
        return Err(Error::Config("epochs must be positive".into()));
    }
    let mut stopper = EarlyStopping::new(patience);
    let mut best: Option<(f64, usize, R::Snapshot)> = None;
    let mut history = Vec::new();
    let mut stopped_early = false;
    for epoch in 1..=epochs {
        let stats = runner.run_epoch(epoch)?;
        if best.as_ref().is_none_or(|(acc, _, _)| stats.val_accuracy > *acc) {
            best = Some((stats.val_accuracy, epoch, runner.snapshot()));
        }
        let stop = stopper.observe(stats.val_loss);
        history.push(stats);
        if stop {
            stopped_early = epoch < epochs;
            break;
        }
    }
    let (_, best_epoch, best) = best.expect("at least one epoch ran");
    Ok(LoopOutcome {
        best,
        best_epoch,
        history,
        stopped_early,
    })
}

/// Landmark-space hooks applied before encoding.
#[derive(Debug, Clone, Default)]
pub struct Pipeline {
    /// Drawn afresh per training sample and epoch; never applied to val/test.
    pub augment: Option<AugmentParams>,
    pub uniformize: Option<UniformizationPlan>,
}

impl Pipeline {
    fn finish(&self, seq: &LandmarkSequence, size: usize) -> Result<NetworkInput> {
        let seq = match &self.uniformize {
            Some(plan) => uniformize(seq, plan)?,
            None => seq.clone(),
        };
        Ok(resize(&encode(&seq)?, size))
    }

    /// Network input for validation, test and inference.
    pub fn eval_input(&self, seq: &LandmarkSequence, size: usize) -> Result<NetworkInput> {
        self.finish(seq, size)
    }

    /// Network input for one training step; augmentation is seeded by
    /// `(run_seed, epoch, sample_id)`.
    pub fn train_input(
        &self,
        seq: &LandmarkSequence,
        sample_id: &str,
        epoch: usize,
        run_seed: u64,
        size: usize,
    ) -> Result<NetworkInput> {
        match &self.augment {
            Some(params) => {
                let p = params.with_seed(seed::sample_epoch_seed(run_seed, epoch, sample_id));
                self.finish(&augment(seq, &p)?, size)
            }
            None => self.finish(seq, size),
        }
    }
}

/// Stacks inputs into an `N x 3 x size x size` tensor.
pub fn stack<S: Scalar>(inputs: &[NetworkInput], size: usize) -> Result<Tensor<S>> {
    let plane = 3 * size * size;
    let mut data = Vec::with_capacity(inputs.len() * plane);
    for inp in inputs {
        if inp.size != size || inp.pixels.len() != plane {
            return Err(Error::Argument(format!(
                "input `{}` is {}x{}, model expects {size}x{size}",
                inp.source_id, inp.size, inp.size
            )));
        }
        data.extend(inp.pixels.iter().map(|&v| S::from_f32(v).expect("finite pixel")));
    }
    Ok(Tensor::from_vec([inputs.len(), 3, size, size], data))
}

/// Mean softmax cross-entropy over the batch, its gradient with respect to
/// the logits, and the number of correct argmax predictions.
pub fn softmax_cross_entropy<S: Scalar>(logits: &Tensor<S>, labels: &[usize]) -> (f64, Tensor<S>, usize) {
    let n = logits.batch();
    let c = logits.sample_len();
    assert_eq!(labels.len(), n, "one label per row");
    let mut grad = Tensor::zeros(logits.shape);
    let mut loss = 0.0;
    let mut correct = 0;
    for i in 0..n {
        let row: Vec<f64> = logits.sample(i).iter().map(|v| v.as_f64()).collect();
        let p = softmax(&row);
        loss -= p[labels[i]].max(f64::MIN_POSITIVE).ln();
        if argmax(&row) == labels[i] {
            correct += 1;
        }
        for (j, pj) in p.iter().enumerate() {
            let target = if j == labels[i] { 1.0 } else { 0.0 };
            grad.data[i * c + j] = S::from_f64_lossy((pj - target) / n as f64);
        }
    }
    (loss / n.max(1) as f64, grad, correct)
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|&v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Index of the largest value, first on ties.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Inference-mode logits for a list of inputs, `batch` at a time.
pub fn infer_logits(net: &Network<f32>, inputs: &[NetworkInput], size: usize, batch: usize) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::with_capacity(inputs.len());
    for chunk in inputs.chunks(batch.max(1)) {
        let logits = net.forward(&stack::<f32>(chunk, size)?);
        for i in 0..chunk.len() {
            out.push(logits.sample(i).iter().map(|&v| f64::from(v)).collect());
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub state: ModelState,
    pub history: Vec<EpochStats>,
    pub stopped_early: bool,
    /// Ids of every sample whose data entered training or model selection.
    pub touched: Vec<String>,
}

fn label_indices(samples: &[SignSample], classes: &BTreeMap<&str, usize>, role: &str) -> Result<Vec<usize>> {
    samples
        .iter()
        .map(|s| {
            classes.get(s.label.as_str()).copied().ok_or_else(|| {
                Error::Config(format!(
                    "{role} sample {} has class `{}` outside the training vocabulary",
                    s.id(),
                    s.label
                ))
            })
        })
        .collect()
}

struct NetworkRunner<'a> {
    net: Network<f32>,
    adam: Adam<f32>,
    cfg: &'a TrainConfig,
    pipeline: &'a Pipeline,
    train: &'a [SignSample],
    train_labels: Vec<usize>,
    val_inputs: Vec<NetworkInput>,
    val_labels: Vec<usize>,
}

impl EpochRunner for NetworkRunner<'_> {
    type Snapshot = Network<f32>;

    fn run_epoch(&mut self, epoch: usize) -> Result<EpochStats> {
        let cfg = self.cfg;
        let size = cfg.input_size;
        let mut order: Vec<usize> = (0..self.train.len()).collect();
        order.shuffle(&mut seed::rng(seed::derive(cfg.seed, &[SHUFFLE_STREAM, epoch as u64])));
        let (mut loss_sum, mut correct, mut seen) = (0.0, 0usize, 0usize);
        for (b, idx) in order.chunks(cfg.batch_size).enumerate() {
            // Batch statistics are undefined for one sample; a trailing
            // singleton batch is skipped.
            if idx.len() == 1 && order.len() > 1 {
                continue;
            }
            let inputs: Vec<NetworkInput> = idx
                .par_iter()
                .map(|&i| {
                    let s = &self.train[i];
                    self.pipeline.train_input(&s.sequence, &s.id(), epoch, cfg.seed, size)
                })
                .collect::<Result<_>>()?;
            let labels: Vec<usize> = idx.iter().map(|&i| self.train_labels[i]).collect();
            let x = stack::<f32>(&inputs, size)?;
            let logits = self
                .net
                .forward_train(x, seed::derive(cfg.seed, &[DROPOUT_STREAM, epoch as u64, b as u64]));
            let (loss, grad, ok) = softmax_cross_entropy(&logits, &labels);
            if !loss.is_finite() || grad.data.iter().any(|g| !g.is_finite()) {
                self.net.clear_cache();
                return Err(Error::Training {
                    epoch,
                    batch: b + 1,
                    message: format!("non-finite loss {loss}"),
                });
            }
            self.net.zero_grad();
            self.net.backward(grad);
            self.adam.step(&mut self.net);
            loss_sum += loss * idx.len() as f64;
            correct += ok;
            seen += idx.len();
        }
        self.net.clear_cache();
        let (val_loss, val_accuracy) = evaluate(&self.net, &self.val_inputs, &self.val_labels, size, cfg.batch_size)?;
        if !val_loss.is_finite() {
            return Err(Error::Training {
                epoch,
                batch: 0,
                message: format!("non-finite validation loss {val_loss}"),
            });
        }
        let stats = EpochStats {
            epoch,
            train_loss: loss_sum / seen.max(1) as f64,
            train_accuracy: correct as f64 / seen.max(1) as f64,
            val_loss,
            val_accuracy,
        };
        log::info!(
            "epoch {epoch}: train loss {:.4} acc {:.3}, val loss {:.4} acc {:.3}",
            stats.train_loss,
            stats.train_accuracy,
            stats.val_loss,
            stats.val_accuracy
        );
        Ok(stats)
    }

    fn snapshot(&self) -> Self::Snapshot {
        self.net.clone()
    }
}

/// Mean cross-entropy and accuracy in inference mode.
pub fn evaluate(net: &Network<f32>, inputs: &[NetworkInput], labels: &[usize], size: usize, batch: usize) -> Result<(f64, f64)> {
    if inputs.is_empty() {
        return Err(Error::Argument("evaluation set is empty".into()));
    }
    let logits = infer_logits(net, inputs, size, batch)?;
    let mut loss = 0.0;
    let mut correct = 0;
    for (row, &y) in logits.iter().zip(labels) {
        loss -= softmax(row)[y].max(f64::MIN_POSITIVE).ln();
        if argmax(row) == y {
            correct += 1;
        }
    }
    Ok((loss / inputs.len() as f64, correct as f64 / inputs.len() as f64))
}

/// Trains one model. `classes` is the manifest vocabulary and fixes the
/// output order.
pub fn train(
    train_set: &[SignSample],
    val_set: &[SignSample],
    classes: &[String],
    cfg: &TrainConfig,
    pipeline: &Pipeline,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::Argument("training set is empty".into()));
    }
    if val_set.is_empty() {
        return Err(Error::Argument("validation set is empty".into()));
    }
    let vocab: BTreeMap<&str, usize> = classes.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect();
    if vocab.len() != classes.len() || classes.is_empty() {
        return Err(Error::Config("class vocabulary must be non-empty and unique".into()));
    }
    let train_labels = label_indices(train_set, &vocab, "training")?;
    let val_labels = label_indices(val_set, &vocab, "validation")?;
    let val_inputs: Vec<NetworkInput> = val_set
        .par_iter()
        .map(|s| pipeline.eval_input(&s.sequence, cfg.input_size))
        .collect::<Result<_>>()?;

    let arch = cfg.architecture(classes.len());
    let mut net = Network::<f32>::new(&arch, seed::derive(cfg.seed, &[INIT_STREAM]));
    if let Network::Resnet18(_) = net {
        io::init_pretrained(&mut net, cfg.pretrained_path.as_deref())?;
    }

    let mut runner = NetworkRunner {
        net,
        adam: Adam::new(cfg.learning_rate, cfg.weight_decay),
        cfg,
        pipeline,
        train: train_set,
        train_labels,
        val_inputs,
        val_labels,
    };
    let outcome = run_epochs(&mut runner, cfg.epochs, cfg.patience)?;
    let stats = &outcome.history[outcome.best_epoch - 1];
    let state = ModelState {
        arch,
        classes: classes.to_vec(),
        config: cfg.clone(),
        network: outcome.best,
        epoch: outcome.best_epoch,
        val_accuracy: stats.val_accuracy,
        val_loss: stats.val_loss,
    };
    let touched: BTreeSet<String> = train_set.iter().chain(val_set).map(SignSample::id).collect();
    Ok(TrainOutcome {
        state,
        history: outcome.history,
        stopped_early: outcome.stopped_early,
        touched: touched.into_iter().collect(),
    })
}
