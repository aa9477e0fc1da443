//! Teacher-forced training with Adam on the task-mixed sample stream.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::diagram::DiagramEmbedding;
use super::model::{ModelError, SeqModel};
use super::tensor::Tensor;
use crate::rng::{derive_seed, shuffle, SplitMix64};

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// Which sample kinds a training run consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskMix {
    Pretrain,
    Unified,
    CalculationOnly,
    ProvingOnly,
}

impl std::str::FromStr for TaskMix {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pretrain" => Ok(Self::Pretrain),
            "unified" => Ok(Self::Unified),
            "calculation-only" => Ok(Self::CalculationOnly),
            "proving-only" => Ok(Self::ProvingOnly),
            other => Err(format!(
                "unknown task mix '{other}' (expected pretrain|unified|calculation-only|proving-only)"
            )),
        }
    }
}

/// Fine-grained sample tag; the mix filters on it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Calculation,
    Proving,
    Mep,
    Mlm,
}

impl TaskMix {
    pub fn accepts(&self, kind: TaskKind) -> bool {
        match self {
            TaskMix::Pretrain => matches!(kind, TaskKind::Mep | TaskKind::Mlm),
            TaskMix::Unified => matches!(kind, TaskKind::Calculation | TaskKind::Proving),
            TaskMix::CalculationOnly => kind == TaskKind::Calculation,
            TaskMix::ProvingOnly => kind == TaskKind::Proving,
        }
    }
}

/// Optimization hyperparameters. Adam is fixed at β₁ = 0.9, β₂ = 0.999.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub seed: u64,
    pub task_mix: TaskMix,
}

impl TrainConfig {
    /// Fine-tuning defaults: lr 2e-4, batch 10, 100 epochs.
    pub fn fine_tune(seed: u64) -> Self {
        Self { learning_rate: 2e-4, batch_size: 10, max_epochs: 100, seed, task_mix: TaskMix::Unified }
    }

    /// Pretraining defaults: lr 5e-4, batch 10, 100 epochs.
    pub fn pretrain(seed: u64) -> Self {
        Self { learning_rate: 5e-4, batch_size: 10, max_epochs: 100, seed, task_mix: TaskMix::Pretrain }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        if self.learning_rate.is_nan() || self.learning_rate < 0.0 || self.batch_size == 0 {
            return Err(TrainError::BadConfig {
                message: format!(
                    "learning rate {} must be >= 0 and batch size {} >= 1",
                    self.learning_rate, self.batch_size
                ),
            });
        }
        Ok(())
    }
}

/// One encodable training sample.
#[derive(Debug, Clone)]
pub struct TrainSample {
    pub id: String,
    pub task: TaskKind,
    pub src_ids: Vec<u32>,
    pub diagram: DiagramEmbedding,
    /// Target ids ending with `<eos>`. The decoder input is `<bos>` plus
    /// this sequence shifted right.
    pub tgt_ids: Vec<u32>,
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("bad train config: {message}")]
    BadConfig { message: String },
    #[error("no samples match task mix {mix:?}")]
    EmptySelection { mix: TaskMix },
    #[error("sample '{id}': empty target")]
    EmptyTarget { id: String },
    #[error("non-finite loss at epoch {epoch}, batch {batch} (lr {lr})")]
    NonFiniteLoss { epoch: usize, batch: usize, lr: f64 },
    #[error("sample '{id}': {source}")]
    Forward {
        id: String,
        #[source]
        source: ModelError,
    },
}

/// Per-epoch mean losses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epoch_losses: Vec<f64>,
}

/// Adam state, one slot per parameter tensor.
pub struct Adam {
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    step: u64,
}

impl Adam {
    pub fn new(model: &SeqModel) -> Self {
        let shape: Vec<Tensor> =
            model.params.entries.iter().map(|p| Tensor::zeros(p.tensor.rows, p.tensor.cols)).collect();
        Self { m: shape.clone(), v: shape, step: 0 }
    }

    fn update(&mut self, model: &mut SeqModel, grads: &[Tensor], lr: f64) {
        self.step += 1;
        let bias1 = 1.0 - ADAM_BETA1.powi(self.step as i32);
        let bias2 = 1.0 - ADAM_BETA2.powi(self.step as i32);
        for (slot, grad) in grads.iter().enumerate() {
            let m = &mut self.m[slot];
            let v = &mut self.v[slot];
            let param = &mut model.params.entries[slot].tensor;
            for i in 0..grad.data.len() {
                let g = grad.data[i];
                m.data[i] = ADAM_BETA1 * m.data[i] + (1.0 - ADAM_BETA1) * g;
                v.data[i] = ADAM_BETA2 * v.data[i] + (1.0 - ADAM_BETA2) * g * g;
                let m_hat = m.data[i] / bias1;
                let v_hat = v.data[i] / bias2;
                param.data[i] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
            }
        }
    }
}

/// Train to `max_epochs`, returning the loss log.
pub fn train(
    model: &mut SeqModel,
    data: &[TrainSample],
    cfg: &TrainConfig,
) -> Result<TrainLog, TrainError> {
    let mut log = TrainLog { epoch_losses: Vec::with_capacity(cfg.max_epochs) };
    let mut session = TrainSession::new(model, data, cfg)?;
    for _ in 0..cfg.max_epochs {
        let loss = session.run_epoch(model)?;
        log.epoch_losses.push(loss);
    }
    Ok(log)
}

/// Incremental training driver: callers that need to inspect the model
/// between epochs (early stopping, periodic decoding) run epochs one at a
/// time. `train` is the plain loop over this.
pub struct TrainSession<'d> {
    selected: Vec<&'d TrainSample>,
    cfg: TrainConfig,
    adam: Adam,
    epoch: usize,
}

impl<'d> TrainSession<'d> {
    pub fn new(
        model: &SeqModel,
        data: &'d [TrainSample],
        cfg: &TrainConfig,
    ) -> Result<Self, TrainError> {
        cfg.validate()?;
        let selected: Vec<&TrainSample> =
            data.iter().filter(|s| cfg.task_mix.accepts(s.task)).collect();
        if selected.is_empty() {
            return Err(TrainError::EmptySelection { mix: cfg.task_mix });
        }
        for sample in &selected {
            if sample.tgt_ids.is_empty() {
                return Err(TrainError::EmptyTarget { id: sample.id.clone() });
            }
        }
        Ok(Self { selected, cfg: *cfg, adam: Adam::new(model), epoch: 0 })
    }

    pub fn epochs_run(&self) -> usize {
        self.epoch
    }

    /// One pass over the task-mixed, seed-shuffled stream. Returns the mean
    /// per-sample loss.
    pub fn run_epoch(&mut self, model: &mut SeqModel) -> Result<f64, TrainError> {
        let epoch = self.epoch;
        let mut order: Vec<usize> = (0..self.selected.len()).collect();
        let shuffle_seed = derive_seed(self.cfg.seed, "epoch-shuffle", &epoch.to_string());
        shuffle(&mut order, &mut SplitMix64::new(shuffle_seed));

        let mut grad_acc: Vec<Tensor> = model
            .params
            .entries
            .iter()
            .map(|p| Tensor::zeros(p.tensor.rows, p.tensor.cols))
            .collect();
        let mut epoch_loss = 0.0;

        for (batch_idx, batch) in order.chunks(self.cfg.batch_size).enumerate() {
            for g in &mut grad_acc {
                g.fill(0.0);
            }
            let mut batch_loss = 0.0;
            for &sample_idx in batch {
                let sample = self.selected[sample_idx];
                let (loss, grads) = model
                    .teacher_forced_loss_and_grads(&sample.src_ids, &sample.diagram, &sample.tgt_ids)
                    .map_err(|source| TrainError::Forward { id: sample.id.clone(), source })?;
                batch_loss += loss;
                for (acc, g) in grad_acc.iter_mut().zip(&grads) {
                    acc.add_assign(g);
                }
            }
            if !batch_loss.is_finite() {
                return Err(TrainError::NonFiniteLoss {
                    epoch,
                    batch: batch_idx,
                    lr: self.cfg.learning_rate,
                });
            }
            let inv = 1.0 / batch.len() as f64;
            for g in &mut grad_acc {
                g.scale_assign(inv);
            }
            self.adam.update(model, &grad_acc, self.cfg.learning_rate);
            epoch_loss += batch_loss;
        }
        self.epoch += 1;
        Ok(epoch_loss / self.selected.len() as f64)
    }
}
