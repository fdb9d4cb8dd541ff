//! Rank sweeps and the adaptation-magnitude report.

use serde::Serialize;

use crate::adapter::{AdapterConfig, Method};
use crate::checkpoint::{Checkpoint, LayerParams};
use crate::error::{Error, Result};
use crate::model::{ArchConfig, ToyModel};
use crate::task::TaskSpec;
use crate::train::{train, TrainConfig};

/// One (method, rank) cell of a sweep: per-seed held-out accuracies and
/// their median.
#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub method: Method,
    pub rank: usize,
    pub trainable_params: usize,
    /// (model seed, final held-out accuracy) per run.
    pub runs: Vec<(u64, f64)>,
    pub median_accuracy: f64,
}

/// Median of the values as stored (ties keep the lower middle for even
/// counts — sweeps use odd seed counts).
fn median(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    sorted[(sorted.len() - 1) / 2]
}

/// Trains every (method, rank, seed) combination and reports medians.
/// Rows come back in (method, rank) order with one entry per combination.
pub fn rank_sweep(
    task: &TaskSpec,
    methods: &[Method],
    ranks: &[usize],
    seeds: &[u64],
    arch: &ArchConfig,
    base: &TrainConfig,
    template: &AdapterConfig,
) -> Result<Vec<SweepRow>> {
    if seeds.is_empty() {
        return Err(Error::InvalidConfig("sweep needs at least one seed".into()));
    }
    let mut rows = Vec::with_capacity(methods.len() * ranks.len());
    for &method in methods {
        for &rank in ranks {
            let mut runs = Vec::with_capacity(seeds.len());
            let mut params = 0usize;
            for &seed in seeds {
                let mut cfg = template.clone();
                cfg.method = method;
                cfg.rank = rank;
                cfg.r_max = rank;
                cfg.lora_alpha = rank as f64;
                cfg.master_seed = seed;
                let mut model = ToyModel::new(task.vocab, task.classes, arch, &cfg)?;
                params = model.adapter_trainable_params();
                let report = train(&mut model, task, &cfg, base)?;
                runs.push((seed, report.final_accuracy));
            }
            let median_accuracy = median(&runs.iter().map(|&(_, a)| a).collect::<Vec<_>>());
            rows.push(SweepRow {
                method,
                rank,
                trainable_params: params,
                runs,
                median_accuracy,
            });
        }
    }
    Ok(rows)
}

/// Sweep CSV: one line per (method, rank, seed) plus a flag on the run
/// whose accuracy equals the cell median.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("method,rank,params,seed,accuracy,is_median\n");
    for row in rows {
        let mut median_marked = false;
        for &(seed, acc) in &row.runs {
            let is_median = !median_marked && acc == row.median_accuracy;
            if is_median {
                median_marked = true;
            }
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                row.method.name(),
                row.rank,
                row.trainable_params,
                seed,
                acc,
                u8::from(is_median)
            ));
        }
    }
    out
}

/// Magnitude of adaptation per layer: how far d moved from its
/// initialization and how large b grew. Norms of equal-shaped vectors are
/// comparable across layers because every layer scales the same frozen
/// pair.
#[derive(Debug, Clone, Serialize)]
pub struct MagnitudeRow {
    pub layer: String,
    /// "q" / "v" for the toy model's projections, "?" otherwise.
    pub role: String,
    pub d_change_norm: f64,
    pub b_norm: f64,
}

/// Per-layer ‖d − d_init·1‖₂ and ‖b‖₂ of a full-VeRA checkpoint.
pub fn magnitude_report(ckpt: &Checkpoint) -> Result<Vec<MagnitudeRow>> {
    if ckpt.config.method != Method::Vera {
        return Err(Error::UnsupportedMethod(format!(
            "magnitude report needs a vera checkpoint, got {}",
            ckpt.config.method.name()
        )));
    }
    let d_init = ckpt.config.d_init as f32;
    let mut rows = Vec::with_capacity(ckpt.layers.len());
    for rec in &ckpt.layers {
        let LayerParams::Vera { d, b } = &rec.params else {
            return Err(Error::Corrupt(format!(
                "vera checkpoint with non-vera layer '{}'",
                rec.name
            )));
        };
        let d_change_norm = d
            .iter()
            .map(|&v| {
                let diff = (v - d_init) as f64;
                diff * diff
            })
            .sum::<f64>()
            .sqrt();
        let b_norm = b.iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>().sqrt();
        let role = match rec.name.rsplit('.').next() {
            Some("q") => "q",
            Some("v") => "v",
            _ => "?",
        };
        rows.push(MagnitudeRow {
            layer: rec.name.clone(),
            role: role.into(),
            d_change_norm,
            b_norm,
        });
    }
    Ok(rows)
}

/// Magnitude CSV: `layer,role,d_change_norm,b_norm`.
pub fn magnitude_csv(rows: &[MagnitudeRow]) -> String {
    let mut out = String::from("layer,role,d_change_norm,b_norm\n");
    for row in rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            row.layer, row.role, row.d_change_norm, row.b_norm
        ));
    }
    out
}
