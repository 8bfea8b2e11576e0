use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{one_hot, ClassScores, CnnModel, Gradients};
use crate::error::{Error, Result};
use crate::metrics::accuracy;
use crate::signal_io::{Dataset, Label};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Optimizer {
    Adam,
    SgdMomentum,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub optimizer: Optimizer,
    /// Stop once training accuracy reaches this value.
    pub early_stop_accuracy: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            epochs: 30,
            batch_size: 16,
            seed: 42,
            optimizer: Optimizer::Adam,
            early_stop_accuracy: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        // zero is allowed so a frozen run can be used as a baseline
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidParameter(format!("learning rate {}", self.learning_rate)));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidParameter("batch size must be at least 1".into()));
        }
        if let Some(a) = self.early_stop_accuracy {
            if !(0.0..=1.0).contains(&a) {
                return Err(Error::InvalidParameter(format!("early-stop accuracy {a}")));
            }
        }
        Ok(())
    }
}

/// Per-epoch training curve. Accuracies are measured in evaluation mode at
/// the end of each epoch.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub loss: Vec<f64>,
    pub train_accuracy: Vec<f64>,
    pub test_accuracy: Option<Vec<f64>>,
}

impl TrainHistory {
    pub fn epochs(&self) -> usize {
        self.loss.len()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let io = |e: csv::Error| Error::InvalidRecording(e.to_string());
        w.write_record(["epoch", "loss", "train_accuracy", "test_accuracy"]).map_err(io)?;
        for e in 0..self.loss.len() {
            let test = self
                .test_accuracy
                .as_ref()
                .and_then(|t| t.get(e))
                .map(f64::to_string)
                .unwrap_or_default();
            w.write_record([
                (e + 1).to_string(),
                self.loss[e].to_string(),
                self.train_accuracy[e].to_string(),
                test,
            ])
            .map_err(io)?;
        }
        w.flush().map_err(|e| Error::InvalidRecording(e.to_string()))
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(file)
    }
}

struct OptimizerState {
    kind: Optimizer,
    lr: f64,
    step: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;
const SGD_MOMENTUM: f64 = 0.9;

impl OptimizerState {
    fn new(model: &CnnModel, cfg: &TrainConfig) -> Self {
        let zeros = || model.parameters().iter().map(|p| vec![0.0; p.len()]).collect::<Vec<_>>();
        Self {
            kind: cfg.optimizer,
            lr: cfg.learning_rate,
            step: 0,
            m: zeros(),
            v: if cfg.optimizer == Optimizer::Adam { zeros() } else { Vec::new() },
        }
    }

    fn apply(&mut self, model: &mut CnnModel, grads: &Gradients) {
        self.step += 1;
        let mut params = model.parameters_mut();
        match self.kind {
            Optimizer::Adam => {
                let c1 = 1.0 - ADAM_BETA1.powi(self.step);
                let c2 = 1.0 - ADAM_BETA2.powi(self.step);
                for (t, p) in params.iter_mut().enumerate() {
                    let (m, v, g) = (&mut self.m[t], &mut self.v[t], &grads.tensors[t]);
                    for i in 0..p.len() {
                        m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * g[i];
                        v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * g[i] * g[i];
                        p[i] -= self.lr * (m[i] / c1) / ((v[i] / c2).sqrt() + ADAM_EPS);
                    }
                }
            }
            Optimizer::SgdMomentum => {
                for (t, p) in params.iter_mut().enumerate() {
                    let (m, g) = (&mut self.m[t], &grads.tensors[t]);
                    for i in 0..p.len() {
                        m[i] = SGD_MOMENTUM * m[i] + g[i];
                        p[i] -= self.lr * m[i];
                    }
                }
            }
        }
    }
}

pub fn predict_dataset(model: &CnnModel, ds: &Dataset) -> Result<Vec<Label>> {
    let windows: Vec<_> = ds.windows.iter().map(|w| &w.samples).collect();
    model.predict(&windows)
}

/// Evaluation-mode accuracy over a dataset.
pub fn evaluate(model: &CnnModel, ds: &Dataset) -> Result<f64> {
    let truth: Vec<Label> = ds.windows.iter().map(|w| w.label).collect();
    accuracy(&predict_dataset(model, ds)?, &truth)
}

/// Splits `order` into `ceil(n / max_size)` batches whose sizes differ by at
/// most one, so no tiny tail batch feeds batch norm degenerate statistics.
fn balanced_batches(order: &[usize], max_size: usize) -> Vec<&[usize]> {
    let count = order.len().div_ceil(max_size);
    let (base, extra) = (order.len() / count, order.len() % count);
    let mut out = Vec::with_capacity(count);
    let mut start = 0;
    for i in 0..count {
        let len = base + usize::from(i < extra);
        out.push(&order[start..start + len]);
        start += len;
    }
    out
}

/// Mini-batch training with a seeded shuffle each epoch. Batch norm uses
/// batch statistics during the pass and folds them into running statistics
/// afterwards.
pub fn train(model: &mut CnnModel, train_set: &Dataset, test_set: Option<&Dataset>, cfg: &TrainConfig) -> Result<TrainHistory> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt = OptimizerState::new(model, cfg);
    let mut grads = Gradients::zeros_like(model);
    let targets: Vec<ClassScores> = train_set.windows.iter().map(|w| one_hot(w.label)).collect();
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = TrainHistory {
        test_accuracy: test_set.map(|_| Vec::new()),
        ..TrainHistory::default()
    };

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in balanced_batches(&order, cfg.batch_size) {
            let windows: Vec<_> = batch.iter().map(|&i| &train_set.windows[i].samples).collect();
            let batch_targets: Vec<ClassScores> = batch.iter().map(|&i| targets[i]).collect();
            let pass = match model.backward_into(&windows, &batch_targets, 1.0, &mut grads) {
                Ok(p) => p,
                Err(Error::Diverged { .. }) => {
                    return Err(Error::Diverged {
                        epoch,
                        history: Box::new(history),
                    })
                }
                Err(e) => return Err(e),
            };
            total += pass.loss * batch.len() as f64;
            opt.apply(model, &grads);
            model.update_running_stats(&pass.stats);
        }
        let loss = total / train_set.len() as f64;
        if !loss.is_finite() || !model.is_finite() {
            return Err(Error::Diverged {
                epoch,
                history: Box::new(history),
            });
        }
        history.loss.push(loss);
        let train_acc = evaluate(model, train_set)?;
        history.train_accuracy.push(train_acc);
        if let (Some(ts), Some(acc)) = (test_set, history.test_accuracy.as_mut()) {
            acc.push(evaluate(model, ts)?);
        }
        if cfg.early_stop_accuracy.is_some_and(|a| train_acc >= a) {
            break;
        }
    }
    Ok(history)
}
