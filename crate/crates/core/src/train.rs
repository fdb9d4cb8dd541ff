//! Training loop: AdamW with separate head/adapter learning rates and a
//! linear warmup/decay schedule.
//!
//! Runs are bit-reproducible from (model seed, data seed, config): batches
//! are drawn from one deterministic stream, per-example gradients are summed
//! in batch order, and the optimizer walks the slot list in a fixed order.
//! A non-finite loss aborts the run instead of being clipped.

use crate::adapter::AdapterConfig;
use crate::checkpoint::Checkpoint;
use crate::error::{Error, Result};
use crate::model::{argmax, cross_entropy, ModelGrads, Slot, ToyModel};
use crate::task::{gen_batch, TaskSpec};

// Stream keys under the data seed.
const BATCH_KEY: u64 = 0;
const EVAL_KEY: u64 = 1;

/// Optimizer and schedule settings.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub lr_adapter: f64,
    pub lr_head: f64,
    pub steps: usize,
    pub batch: usize,
    pub data_seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    /// Fraction of steps spent ramping the learning rate up linearly;
    /// the remainder decays linearly to zero.
    pub warmup_ratio: f64,
    /// Held-out examples drawn once per run for accuracy measurement.
    pub eval_size: usize,
    /// Evaluate every this many steps (and always at the end).
    pub eval_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr_adapter: 1e-2,
            lr_head: 1e-3,
            steps: 500,
            batch: 16,
            data_seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
            warmup_ratio: 0.06,
            eval_size: 256,
            eval_every: 50,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr_adapter >= 0.0) || !(self.lr_head >= 0.0) {
            return Err(Error::InvalidConfig("learning rates must be >= 0".into()));
        }
        if !(0.0..1.0).contains(&self.warmup_ratio) {
            return Err(Error::InvalidConfig(format!(
                "warmup_ratio must be in [0, 1), got {}",
                self.warmup_ratio
            )));
        }
        if self.steps == 0 || self.batch == 0 || self.eval_size == 0 || self.eval_every == 0 {
            return Err(Error::InvalidConfig(
                "steps, batch, eval_size, and eval_every must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Linear warmup then linear decay multiplier for 0-indexed `step`.
pub fn lr_multiplier(step: usize, total: usize, warmup_ratio: f64) -> f64 {
    let warmup = (warmup_ratio * total as f64).round() as usize;
    if warmup > 0 && step < warmup {
        step as f64 / warmup as f64
    } else {
        (total - step) as f64 / (total - warmup).max(1) as f64
    }
}

#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct StepStat {
    pub step: usize,
    pub loss: f64,
    pub train_accuracy: f64,
}

/// The outcome of one training run.
#[derive(Debug, Clone)]
pub struct TrainReport {
    pub steps: Vec<StepStat>,
    /// (step, held-out accuracy) at each evaluation point.
    pub evals: Vec<(usize, f64)>,
    pub final_accuracy: f64,
    pub checkpoint: Checkpoint,
}

impl TrainReport {
    /// Loss-curve CSV: `step,loss,accuracy` per training step.
    pub fn curve_csv(&self) -> String {
        let mut out = String::from("step,loss,accuracy\n");
        for s in &self.steps {
            out.push_str(&format!("{},{},{}\n", s.step, s.loss, s.train_accuracy));
        }
        out
    }
}

/// Mean cross-entropy loss over a batch (no gradients).
pub fn batch_loss(model: &ToyModel, inputs: &[Vec<usize>], labels: &[usize]) -> Result<f64> {
    let mut total = 0.0;
    for (tokens, &label) in inputs.iter().zip(labels) {
        let (logits, _) = model.forward(tokens)?;
        total += cross_entropy(&logits, label)?.0;
    }
    Ok(total / inputs.len() as f64)
}

/// Mean loss, accuracy, and mean parameter gradients over a batch,
/// accumulated in example order.
pub fn batch_loss_and_grads(
    model: &ToyModel,
    inputs: &[Vec<usize>],
    labels: &[usize],
) -> Result<(f64, f64, ModelGrads)> {
    let mut grads = model.zero_grads();
    let mut total = 0.0;
    let mut correct = 0usize;
    for (tokens, &label) in inputs.iter().zip(labels) {
        let (logits, cache) = model.forward(tokens)?;
        let (loss, dlogits) = cross_entropy(&logits, label)?;
        total += loss;
        if argmax(&logits) == label {
            correct += 1;
        }
        model.backward(&cache, &dlogits, &mut grads)?;
    }
    let n = inputs.len() as f64;
    grads.scale(1.0 / n);
    Ok((total / n, correct as f64 / n, grads))
}

/// Fraction of examples whose argmax logit equals the label.
pub fn accuracy(model: &ToyModel, inputs: &[Vec<usize>], labels: &[usize]) -> Result<f64> {
    let mut correct = 0usize;
    for (tokens, &label) in inputs.iter().zip(labels) {
        let (logits, _) = model.forward(tokens)?;
        if argmax(&logits) == label {
            correct += 1;
        }
    }
    Ok(correct as f64 / inputs.len() as f64)
}

struct Moments {
    m: Vec<f64>,
    v: Vec<f64>,
}

/// Per-slot AdamW state with decoupled weight decay.
struct AdamW {
    moments: Vec<(Slot, Moments)>,
    step: usize,
}

impl AdamW {
    fn new(model: &ToyModel) -> Self {
        let moments = model
            .trainable_slots()
            .into_iter()
            .map(|slot| {
                let len = model.param_slice(slot).unwrap().len();
                (
                    slot,
                    Moments {
                        m: vec![0.0; len],
                        v: vec![0.0; len],
                    },
                )
            })
            .collect();
        Self { moments, step: 0 }
    }

    fn update(&mut self, model: &mut ToyModel, grads: &ModelGrads, cfg: &TrainConfig, mult: f64) {
        self.step += 1;
        let t = self.step as f64;
        let bc1 = 1.0 - cfg.beta1.powf(t);
        let bc2 = 1.0 - cfg.beta2.powf(t);
        for (slot, mom) in &mut self.moments {
            let slot = *slot;
            let lr = mult
                * if slot == Slot::Head {
                    cfg.lr_head
                } else {
                    cfg.lr_adapter
                };
            let decay = if model.decays(slot) {
                cfg.weight_decay
            } else {
                0.0
            };
            let grad = grads.slice(slot).expect("gradient for trainable slot");
            let params = model.param_slice_mut(slot).expect("trainable slot");
            for i in 0..params.len() {
                if decay > 0.0 {
                    params[i] *= 1.0 - lr * decay;
                }
                let g = grad[i];
                mom.m[i] = cfg.beta1 * mom.m[i] + (1.0 - cfg.beta1) * g;
                mom.v[i] = cfg.beta2 * mom.v[i] + (1.0 - cfg.beta2) * g * g;
                let m_hat = mom.m[i] / bc1;
                let v_hat = mom.v[i] / bc2;
                params[i] -= lr * m_hat / (v_hat.sqrt() + cfg.eps);
            }
        }
    }
}

/// Trains `model` on `task`; deterministic given (model seed, task seed,
/// config). Returns the loss curve, held-out accuracy trace, and a
/// checkpoint of the adapted layers.
pub fn train(
    model: &mut ToyModel,
    task: &TaskSpec,
    adapter_config: &AdapterConfig,
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    cfg.validate()?;
    task.validate()?;

    let mut batch_stream = crate::rng::RngStream::new(cfg.data_seed ^ task.seed, BATCH_KEY);
    let mut eval_stream = crate::rng::RngStream::new(cfg.data_seed ^ task.seed, EVAL_KEY);
    let (eval_inputs, eval_labels) = gen_batch(task, cfg.eval_size, &mut eval_stream)?;

    let mut optimizer = AdamW::new(model);
    let mut steps = Vec::with_capacity(cfg.steps);
    let mut evals = Vec::new();

    for step in 0..cfg.steps {
        let (inputs, labels) = gen_batch(task, cfg.batch, &mut batch_stream)?;
        let (loss, train_acc, grads) = batch_loss_and_grads(model, &inputs, &labels)?;
        if !loss.is_finite() {
            return Err(Error::Diverged(format!(
                "non-finite loss {loss} at step {step}"
            )));
        }
        let mult = lr_multiplier(step, cfg.steps, cfg.warmup_ratio);
        optimizer.update(model, &grads, cfg, mult);
        steps.push(StepStat {
            step,
            loss,
            train_accuracy: train_acc,
        });
        if (step + 1) % cfg.eval_every == 0 || step + 1 == cfg.steps {
            evals.push((step + 1, accuracy(model, &eval_inputs, &eval_labels)?));
        }
    }

    let final_accuracy = evals.last().map_or(0.0, |&(_, a)| a);
    let checkpoint = Checkpoint::new(normalized_for_save(adapter_config), model.layer_records())?;
    Ok(TrainReport {
        steps,
        evals,
        final_accuracy,
        checkpoint,
    })
}

/// LoRA records fold α/r into B on save, so the stored config uses the
/// unit-scale convention.
fn normalized_for_save(config: &AdapterConfig) -> AdapterConfig {
    let mut c = config.clone();
    c.lora_alpha = c.rank as f64;
    c
}
