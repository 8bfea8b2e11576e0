//! From-scratch 1-D CNN classifying `channels × samples` EEG windows into the
//! five cognitive labels.
//!
//! Each convolution stage is conv (valid, stride 1) → batch norm → ReLU →
//! max pool. The pooled output is flattened channel-major and fed through a
//! ReLU dense stack ending in per-class sigmoids trained with binary
//! cross-entropy.

pub mod layers;
mod train;

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal_io::Label;
use layers::{BatchNormCache, ConvShape};

pub use train::{evaluate, predict_dataset, train, Optimizer, TrainConfig, TrainHistory};

/// One sigmoid output per label, in [`Label::ALL`] order.
pub type ClassScores = [f64; Label::COUNT];

pub const BN_MOMENTUM: f64 = 0.1;

/// Batch size used when running inference over many windows.
const EVAL_CHUNK: usize = 32;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_channels: usize,
    pub input_len: usize,
    pub conv_channels: Vec<usize>,
    pub kernel: usize,
    pub pool: usize,
    /// Dense widths starting with the flatten width and ending with the
    /// number of classes.
    pub dense: Vec<usize>,
}

impl Default for Architecture {
    fn default() -> Self {
        Self {
            input_channels: 14,
            input_len: 640,
            conv_channels: vec![75, 150, 300],
            kernel: 3,
            pool: 2,
            dense: vec![23400, 1024, 512, 256, 5],
        }
    }
}

impl Architecture {
    pub fn new(
        input_channels: usize,
        input_len: usize,
        conv_channels: Vec<usize>,
        kernel: usize,
        pool: usize,
        dense: Vec<usize>,
    ) -> Result<Self> {
        let arch = Self {
            input_channels,
            input_len,
            conv_channels,
            kernel,
            pool,
            dense,
        };
        arch.validate()?;
        Ok(arch)
    }

    /// Temporal length after every stage, starting with the input length.
    /// `None` when a stage would leave no samples.
    pub fn length_trace(&self, input_len: usize) -> Option<Vec<usize>> {
        let mut trace = vec![input_len];
        let mut len = input_len;
        for _ in &self.conv_channels {
            if len < self.kernel {
                return None;
            }
            len = (len + 1 - self.kernel) / self.pool;
            if len == 0 {
                return None;
            }
            trace.push(len);
        }
        Some(trace)
    }

    pub fn flatten_width(&self) -> Option<usize> {
        let last = *self.length_trace(self.input_len)?.last()?;
        Some(last * self.conv_channels.last().copied().unwrap_or(self.input_channels))
    }

    pub fn validate(&self) -> Result<()> {
        let sizes_ok = self.input_channels > 0
            && self.kernel > 0
            && self.pool > 0
            && self.pool <= u8::MAX as usize
            && self.conv_channels.iter().all(|&c| c > 0)
            && self.dense.len() >= 2
            && self.dense.iter().all(|&d| d > 0);
        if !sizes_ok {
            return Err(Error::InvalidParameter(format!("degenerate architecture {self:?}")));
        }
        let flatten = self.flatten_width().ok_or_else(|| Error::ShapeMismatch {
            expected: "a positive length after every pooling stage".into(),
            found: format!("input length {}", self.input_len),
        })?;
        if self.dense[0] != flatten {
            return Err(Error::ShapeMismatch {
                expected: format!("first dense width {flatten} (flattened conv output)"),
                found: self.dense[0].to_string(),
            });
        }
        if self.dense.last() != Some(&Label::COUNT) {
            return Err(Error::ShapeMismatch {
                expected: format!("{} outputs", Label::COUNT),
                found: format!("{:?}", self.dense.last()),
            });
        }
        Ok(())
    }

    fn conv_shape(&self, stage: usize, batch: usize, in_len: usize) -> ConvShape {
        ConvShape {
            in_channels: if stage == 0 { self.input_channels } else { self.conv_channels[stage - 1] },
            out_channels: self.conv_channels[stage],
            kernel: self.kernel,
            batch,
            in_len,
        }
    }

    fn check_window(&self, w: &DMatrix<f64>) -> Result<()> {
        if w.nrows() != self.input_channels || w.ncols() != self.input_len {
            return Err(Error::ShapeMismatch {
                expected: format!("{}×{}", self.input_channels, self.input_len),
                found: format!("{}×{}", w.nrows(), w.ncols()),
            });
        }
        if let Some(i) = w.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteSample {
                row: i / w.nrows(),
                channel: i % w.nrows(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvBlock {
    /// `[out, in, kernel]`
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    /// `[out, in]`
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CnnModel {
    arch: Architecture,
    pub conv: Vec<ConvBlock>,
    pub dense: Vec<DenseLayer>,
}

/// Per-stage batch mean and population variance seen in a training pass.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchStats {
    pub mean: Vec<Vec<f64>>,
    pub var: Vec<Vec<f64>>,
    /// Values per channel that fed each statistic.
    pub counts: Vec<usize>,
}

/// Gradient tensors in [`CnnModel::parameters`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub tensors: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(model: &CnnModel) -> Self {
        Self {
            tensors: model.parameters().iter().map(|p| vec![0.0; p.len()]).collect(),
        }
    }

    fn clear(&mut self) {
        for t in &mut self.tensors {
            t.fill(0.0);
        }
    }
}

#[derive(Debug, Clone)]
pub struct BackwardPass {
    pub loss: f64,
    pub outputs: Vec<ClassScores>,
    /// dLoss/dLogits, already multiplied by the loss scale.
    pub output_grad: Vec<ClassScores>,
    pub stats: BatchStats,
}

struct StageCache {
    cols: Vec<f64>,
    bn: BatchNormCache,
    activated: Vec<f64>,
    argmax: Vec<u8>,
    conv_len: usize,
}

struct Trace {
    stages: Vec<StageCache>,
    dense_inputs: Vec<Vec<f64>>,
    logits: Vec<f64>,
}

fn to_scores(flat: &[f64]) -> Vec<ClassScores> {
    flat.chunks_exact(Label::COUNT)
        .map(|c| c.try_into().expect("chunk of class width"))
        .collect()
}

/// Index of the largest score; the lowest index wins ties.
pub fn argmax_label(scores: &ClassScores) -> Label {
    let mut best = 0;
    for (i, s) in scores.iter().enumerate() {
        if *s > scores[best] {
            best = i;
        }
    }
    Label::from_index(best).expect("class index in range")
}

pub fn one_hot(label: Label) -> ClassScores {
    let mut t = [0.0; Label::COUNT];
    t[label.index()] = 1.0;
    t
}

impl CnnModel {
    /// Fan-in scaled uniform initialization: `±sqrt(6 / fan_in)` ahead of a
    /// ReLU, `±sqrt(3 / fan_in)` for the output layer. Biases start at zero.
    pub fn new(arch: Architecture, seed: u64) -> Result<Self> {
        let mut model = Self::zeros(arch)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut fill = |w: &mut [f64], fan_in: usize, gain: f64| {
            let bound = (gain / fan_in as f64).sqrt();
            for v in w {
                *v = rng.random_range(-bound..bound);
            }
        };
        let kernel = model.arch.kernel;
        let mut in_ch = model.arch.input_channels;
        for (block, &out_ch) in model.conv.iter_mut().zip(&model.arch.conv_channels) {
            fill(&mut block.weight, in_ch * kernel, 6.0);
            in_ch = out_ch;
        }
        let n_dense = model.dense.len();
        for (i, layer) in model.dense.iter_mut().enumerate() {
            let fan_in = model.arch.dense[i];
            fill(&mut layer.weight, fan_in, if i + 1 == n_dense { 3.0 } else { 6.0 });
        }
        Ok(model)
    }

    /// All weights and biases zero, identity batch norm.
    pub fn zeros(arch: Architecture) -> Result<Self> {
        arch.validate()?;
        let mut conv = Vec::new();
        let mut in_ch = arch.input_channels;
        for &out_ch in &arch.conv_channels {
            conv.push(ConvBlock {
                weight: vec![0.0; out_ch * in_ch * arch.kernel],
                bias: vec![0.0; out_ch],
                gamma: vec![1.0; out_ch],
                beta: vec![0.0; out_ch],
                running_mean: vec![0.0; out_ch],
                running_var: vec![1.0; out_ch],
            });
            in_ch = out_ch;
        }
        let dense = arch
            .dense
            .windows(2)
            .map(|w| DenseLayer {
                weight: vec![0.0; w[0] * w[1]],
                bias: vec![0.0; w[1]],
            })
            .collect();
        Ok(Self { arch, conv, dense })
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    /// Trainable tensors: per conv stage weight, bias, gamma, beta; then per
    /// dense layer weight, bias.
    pub fn parameters(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        for b in &self.conv {
            out.extend([&b.weight[..], &b.bias, &b.gamma, &b.beta]);
        }
        for d in &self.dense {
            out.extend([&d.weight[..], &d.bias]);
        }
        out
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for b in &mut self.conv {
            out.extend([&mut b.weight[..], &mut b.bias, &mut b.gamma, &mut b.beta]);
        }
        for d in &mut self.dense {
            out.extend([&mut d.weight[..], &mut d.bias]);
        }
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.parameters().iter().map(|p| p.len()).sum()
    }

    fn pack(&self, windows: &[&DMatrix<f64>]) -> Result<Vec<f64>> {
        if windows.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let (c_in, len, batch) = (self.arch.input_channels, self.arch.input_len, windows.len());
        let mut x = vec![0.0; c_in * batch * len];
        for (b, w) in windows.iter().enumerate() {
            self.arch.check_window(w)?;
            for c in 0..c_in {
                let row = &mut x[(c * batch + b) * len..][..len];
                for (t, v) in row.iter_mut().enumerate() {
                    *v = w[(c, t)];
                }
            }
        }
        Ok(x)
    }

    /// Runs the network. Training mode normalizes with batch statistics and
    /// keeps the caches needed by backprop.
    fn run(&self, windows: &[&DMatrix<f64>], training: bool) -> Result<Trace> {
        let batch = windows.len();
        let mut x = self.pack(windows)?;
        let mut len = self.arch.input_len;
        let mut stages = Vec::with_capacity(self.conv.len());
        for (i, block) in self.conv.iter().enumerate() {
            let shape = self.arch.conv_shape(i, batch, len);
            let (z, cols) = layers::conv_forward(&x, &block.weight, &block.bias, &shape);
            let conv_len = shape.out_len();
            let (mut a, bn) = if training {
                let (a, cache) = layers::batchnorm_forward_train(&z, &block.gamma, &block.beta);
                (a, Some(cache))
            } else {
                let a = layers::batchnorm_forward_eval(
                    &z,
                    &block.gamma,
                    &block.beta,
                    &block.running_mean,
                    &block.running_var,
                );
                (a, None)
            };
            layers::relu_in_place(&mut a);
            let (pooled, argmax) = layers::maxpool_forward(&a, conv_len, self.arch.pool);
            x = pooled;
            len = conv_len / self.arch.pool;
            if let Some(bn) = bn {
                stages.push(StageCache {
                    cols,
                    bn,
                    activated: a,
                    argmax,
                    conv_len,
                });
            }
        }

        // [C, B, L] -> [B, C·L]
        let channels = x.len() / (batch * len);
        let mut h = vec![0.0; x.len()];
        for c in 0..channels {
            for b in 0..batch {
                h[b * channels * len + c * len..][..len].copy_from_slice(&x[(c * batch + b) * len..][..len]);
            }
        }

        let mut dense_inputs = Vec::with_capacity(self.dense.len());
        let last = self.dense.len() - 1;
        for (i, layer) in self.dense.iter().enumerate() {
            let mut y = layers::dense_forward(&h, &layer.weight, &layer.bias, batch);
            if i < last {
                layers::relu_in_place(&mut y);
            }
            if training {
                dense_inputs.push(std::mem::replace(&mut h, y));
            } else {
                h = y;
            }
        }
        Ok(Trace {
            stages,
            dense_inputs,
            logits: h,
        })
    }

    /// Evaluation-mode sigmoid outputs (running batch-norm statistics).
    pub fn forward(&self, windows: &[&DMatrix<f64>]) -> Result<Vec<ClassScores>> {
        let mut out = Vec::with_capacity(windows.len());
        for chunk in windows.chunks(EVAL_CHUNK) {
            let trace = self.run(chunk, false)?;
            out.extend(to_scores(&trace.logits).into_iter().map(|z| z.map(layers::sigmoid)));
        }
        if windows.is_empty() {
            return Err(Error::EmptyDataset);
        }
        Ok(out)
    }

    pub fn predict(&self, windows: &[&DMatrix<f64>]) -> Result<Vec<Label>> {
        Ok(self.forward(windows)?.iter().map(argmax_label).collect())
    }

    /// Training-mode loss against `targets` (no parameter or statistic change).
    pub fn loss(&self, windows: &[&DMatrix<f64>], targets: &[ClassScores]) -> Result<f64> {
        check_targets(windows, targets)?;
        let trace = self.run(windows, true)?;
        Ok(layers::sigmoid_bce(&trace.logits, targets.as_flattened()).0)
    }

    pub fn backward(&self, windows: &[&DMatrix<f64>], targets: &[ClassScores], scale: f64) -> Result<(BackwardPass, Gradients)> {
        let mut grads = Gradients::zeros_like(self);
        let pass = self.backward_into(windows, targets, scale, &mut grads)?;
        Ok((pass, grads))
    }

    /// Training-mode forward and backward pass. Gradients of `scale · loss`
    /// overwrite `grads`.
    pub fn backward_into(
        &self,
        windows: &[&DMatrix<f64>],
        targets: &[ClassScores],
        scale: f64,
        grads: &mut Gradients,
    ) -> Result<BackwardPass> {
        check_targets(windows, targets)?;
        let batch = windows.len();
        let trace = self.run(windows, true)?;
        let (loss, mut dz) = layers::sigmoid_bce(&trace.logits, targets.as_flattened());
        if !loss.is_finite() {
            return Err(Error::Diverged {
                epoch: 0,
                history: Box::default(),
            });
        }
        for g in &mut dz {
            *g *= scale;
        }
        let output_grad = to_scores(&dz);
        let outputs = to_scores(&trace.logits)
            .into_iter()
            .map(|z| z.map(layers::sigmoid))
            .collect();

        grads.clear();
        let n_conv = self.conv.len();
        let mut g = dz;
        for i in (0..self.dense.len()).rev() {
            let layer = &self.dense[i];
            let input = &trace.dense_inputs[i];
            let (gw, rest) = grads.tensors[4 * n_conv + 2 * i..].split_at_mut(1);
            g = layers::dense_backward(&g, input, &layer.weight, batch, &mut gw[0], &mut rest[0], true);
            if i > 0 {
                layers::relu_backward_in_place(&mut g, input);
            }
        }

        // [B, C·L] -> [C, B, L]
        let len = *self.arch.length_trace(self.arch.input_len).expect("validated").last().unwrap();
        let channels = g.len() / (batch * len);
        let mut gx = vec![0.0; g.len()];
        for c in 0..channels {
            for b in 0..batch {
                gx[(c * batch + b) * len..][..len].copy_from_slice(&g[b * channels * len + c * len..][..len]);
            }
        }

        let trace_lens = self.arch.length_trace(self.arch.input_len).expect("validated");
        for i in (0..n_conv).rev() {
            let stage = &trace.stages[i];
            let block = &self.conv[i];
            let mut ga = layers::maxpool_backward(&gx, &stage.argmax, stage.conv_len, self.arch.pool);
            layers::relu_backward_in_place(&mut ga, &stage.activated);
            let [gw, gb, gg, gbeta] = &mut grads.tensors[4 * i..4 * i + 4] else {
                unreachable!()
            };
            let gz = layers::batchnorm_backward(&ga, &stage.bn, &block.gamma, gg, gbeta);
            let shape = self.arch.conv_shape(i, batch, trace_lens[i]);
            gx = layers::conv_backward(&gz, &stage.cols, &block.weight, &shape, gw, gb);
        }

        let stats = BatchStats {
            mean: trace.stages.iter().map(|s| s.bn.mean.clone()).collect(),
            var: trace.stages.iter().map(|s| s.bn.var.clone()).collect(),
            counts: trace.stages.iter().map(|s| batch * s.conv_len).collect(),
        };
        Ok(BackwardPass {
            loss,
            outputs,
            output_grad,
            stats,
        })
    }

    /// Exponential moving average of batch statistics; the running variance
    /// uses the unbiased estimate.
    pub fn update_running_stats(&mut self, stats: &BatchStats) {
        for (i, block) in self.conv.iter_mut().enumerate() {
            let n = stats.counts[i] as f64;
            let correction = if n > 1.0 { n / (n - 1.0) } else { 1.0 };
            for c in 0..block.gamma.len() {
                block.running_mean[c] = (1.0 - BN_MOMENTUM) * block.running_mean[c] + BN_MOMENTUM * stats.mean[i][c];
                block.running_var[c] =
                    (1.0 - BN_MOMENTUM) * block.running_var[c] + BN_MOMENTUM * stats.var[i][c] * correction;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.parameters().iter().all(|p| p.iter().all(|v| v.is_finite()))
            && self
                .conv
                .iter()
                .all(|b| b.running_mean.iter().all(|v| v.is_finite()) && b.running_var.iter().all(|v| *v > 0.0 && v.is_finite()))
    }

    fn to_document(&self) -> ModelDocument {
        let k = self.arch.kernel;
        let mut in_ch = self.arch.input_channels;
        let conv = self
            .conv
            .iter()
            .map(|b| {
                let per_out = in_ch * k;
                in_ch = b.bias.len();
                ConvDocument {
                    weight: b
                        .weight
                        .chunks(per_out)
                        .map(|o| o.chunks(k).map(<[f64]>::to_vec).collect())
                        .collect(),
                    bias: b.bias.clone(),
                    gamma: b.gamma.clone(),
                    beta: b.beta.clone(),
                    running_mean: b.running_mean.clone(),
                    running_var: b.running_var.clone(),
                }
            })
            .collect();
        let dense = self
            .dense
            .iter()
            .map(|d| {
                let in_dim = d.weight.len() / d.bias.len();
                DenseDocument {
                    weight: d.weight.chunks(in_dim).map(<[f64]>::to_vec).collect(),
                    bias: d.bias.clone(),
                }
            })
            .collect();
        ModelDocument {
            format: MODEL_FORMAT.into(),
            architecture: self.arch.clone(),
            conv,
            dense,
        }
    }

    fn from_document(doc: ModelDocument) -> Result<Self> {
        if doc.format != MODEL_FORMAT {
            return Err(Error::InvalidRecording(format!("unknown model format {:?}", doc.format)));
        }
        let mut model = Self::zeros(doc.architecture)?;
        let bad = |what: &str| Error::ShapeMismatch {
            expected: format!("{what} matching the architecture header"),
            found: "different tensor size".into(),
        };
        if doc.conv.len() != model.conv.len() || doc.dense.len() != model.dense.len() {
            return Err(bad("layer count"));
        }
        for (block, d) in model.conv.iter_mut().zip(doc.conv) {
            let weight: Vec<f64> = d.weight.into_iter().flatten().flatten().collect();
            let tensors = [
                (&mut block.weight, weight),
                (&mut block.bias, d.bias),
                (&mut block.gamma, d.gamma),
                (&mut block.beta, d.beta),
                (&mut block.running_mean, d.running_mean),
                (&mut block.running_var, d.running_var),
            ];
            for (dst, src) in tensors {
                if dst.len() != src.len() {
                    return Err(bad("conv tensor"));
                }
                *dst = src;
            }
        }
        for (layer, d) in model.dense.iter_mut().zip(doc.dense) {
            let weight: Vec<f64> = d.weight.into_iter().flatten().collect();
            if weight.len() != layer.weight.len() || d.bias.len() != layer.bias.len() {
                return Err(bad("dense tensor"));
            }
            layer.weight = weight;
            layer.bias = d.bias;
        }
        if !model.is_finite() {
            return Err(Error::InvalidRecording("model contains non-finite parameters".into()));
        }
        Ok(model)
    }

    pub fn write_json<W: Write>(&self, writer: W) -> Result<()> {
        serde_json::to_writer(writer, &self.to_document())?;
        Ok(())
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        Self::from_document(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_json(&mut w)?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_document(serde_json::from_reader(BufReader::new(file))?)
    }
}

const MODEL_FORMAT: &str = "eegica-cnn-v1";

#[derive(Serialize, Deserialize)]
struct ModelDocument {
    format: String,
    architecture: Architecture,
    conv: Vec<ConvDocument>,
    dense: Vec<DenseDocument>,
}

#[derive(Serialize, Deserialize)]
struct ConvDocument {
    weight: Vec<Vec<Vec<f64>>>,
    bias: Vec<f64>,
    gamma: Vec<f64>,
    beta: Vec<f64>,
    running_mean: Vec<f64>,
    running_var: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct DenseDocument {
    weight: Vec<Vec<f64>>,
    bias: Vec<f64>,
}

fn check_targets(windows: &[&DMatrix<f64>], targets: &[ClassScores]) -> Result<()> {
    if windows.len() != targets.len() {
        return Err(Error::LengthMismatch {
            left: windows.len(),
            right: targets.len(),
        });
    }
    if targets.iter().flatten().any(|t| !(0.0..=1.0).contains(t)) {
        return Err(Error::InvalidParameter("targets must lie in [0, 1]".into()));
    }
    Ok(())
}
