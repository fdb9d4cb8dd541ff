//! Finite-difference verification of every analytic backward pass.
//!
//! Layer-level checks differentiate the scalar loss `L = h·g` through each
//! adapter; the end-to-end check differentiates the batched cross-entropy
//! of the toy model with respect to every trainable scalar. Central
//! differences with step 1e-6; errors are relative with a small-magnitude
//! floor so near-zero gradients are compared absolutely.

use std::sync::Arc;

use crate::adapter::{AdapterConfig, LoraLayer, Method, SharedMatrices, VeraLayer};
use crate::error::Result;
use crate::linalg::{Matrix, Vector};
use crate::model::{ArchConfig, ToyModel};
use crate::rng::{InitScheme, RngStream};
use crate::task::{gen_batch, TaskSpec};
use crate::train::{batch_loss, batch_loss_and_grads};

const FD_STEP: f64 = 1e-6;

/// Relative error with a 1e-3 magnitude floor.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-3)
}

/// Worst relative error for one parameter group of one configuration.
#[derive(Debug, Clone, serde::Serialize)]
pub struct GradCheckEntry {
    pub method: Method,
    pub m: usize,
    pub n: usize,
    pub rank: usize,
    pub group: String,
    pub max_rel_err: f64,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct GradCheckReport {
    pub tolerance: f64,
    pub entries: Vec<GradCheckEntry>,
}

impl GradCheckReport {
    pub fn max_rel_err(&self) -> f64 {
        self.entries
            .iter()
            .map(|e| e.max_rel_err)
            .fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.max_rel_err() < self.tolerance
    }

    pub fn failures(&self) -> impl Iterator<Item = &GradCheckEntry> {
        self.entries
            .iter()
            .filter(move |e| e.max_rel_err >= self.tolerance)
    }
}

fn random_values(count: usize, stream: &mut RngStream, quantize: bool) -> Vec<f64> {
    (0..count)
        .map(|_| {
            let v = stream.uniform(-1.0, 1.0).unwrap();
            if quantize {
                v as f32 as f64
            } else {
                v
            }
        })
        .collect()
}

fn fd_slope(mut eval: impl FnMut(f64) -> f64, at: f64) -> f64 {
    (eval(at + FD_STEP) - eval(at - FD_STEP)) / (2.0 * FD_STEP)
}

/// Checks one VeRA-family layer at (m, n, rank); emits entries for the
/// trainable vector groups and the input gradient.
fn check_vera_layer(
    method: Method,
    m: usize,
    n: usize,
    rank: usize,
    seed: u64,
    quantize: bool,
    entries: &mut Vec<GradCheckEntry>,
) -> Result<()> {
    let mut stream = RngStream::new(seed, 0xC0FFEE);
    let shared = SharedMatrices::build(m, n, rank, InitScheme::KaimingUniform, seed)?;
    let w0 = Matrix::new(m, n, random_values(m * n, &mut stream, quantize))?;
    let mut cfg = AdapterConfig::new(method, rank, seed);
    cfg.d_init = 0.1;
    let mut layer = VeraLayer::new("gc", w0, Arc::clone(&shared), &cfg)?;
    if layer.trains_d() {
        *layer.d_mut() = Vector::new(random_values(rank, &mut stream, quantize))?;
    }
    if layer.trains_b() {
        *layer.b_mut() = Vector::new(random_values(m, &mut stream, quantize))?;
    }
    let x = Vector::new(random_values(n, &mut stream, quantize))?;
    let g = Vector::new(random_values(m, &mut stream, quantize))?;
    let (_, cache) = layer.forward(&x)?;
    let grads = layer.backward(&g, &cache)?;

    if let Some(gd) = &grads.d {
        let mut worst = 0.0f64;
        for k in 0..rank {
            let mut probe = layer.clone();
            let at = probe.d().get(k);
            let fd = fd_slope(
                |v| {
                    probe.d_mut().data_mut()[k] = v;
                    probe.forward(&x).unwrap().0.dot(&g).unwrap()
                },
                at,
            );
            worst = worst.max(rel_err(gd.get(k), fd));
        }
        entries.push(GradCheckEntry {
            method,
            m,
            n,
            rank,
            group: "d".into(),
            max_rel_err: worst,
        });
    }
    if let Some(gb) = &grads.b {
        let mut worst = 0.0f64;
        for i in 0..m {
            let mut probe = layer.clone();
            let at = probe.b().get(i);
            let fd = fd_slope(
                |v| {
                    probe.b_mut().data_mut()[i] = v;
                    probe.forward(&x).unwrap().0.dot(&g).unwrap()
                },
                at,
            );
            worst = worst.max(rel_err(gb.get(i), fd));
        }
        entries.push(GradCheckEntry {
            method,
            m,
            n,
            rank,
            group: "b".into(),
            max_rel_err: worst,
        });
    }
    let mut worst = 0.0f64;
    for j in 0..n {
        let mut probe = x.clone();
        let at = x.get(j);
        let fd = fd_slope(
            |v| {
                probe.data_mut()[j] = v;
                layer.forward(&probe).unwrap().0.dot(&g).unwrap()
            },
            at,
        );
        worst = worst.max(rel_err(grads.x.get(j), fd));
    }
    entries.push(GradCheckEntry {
        method,
        m,
        n,
        rank,
        group: "x".into(),
        max_rel_err: worst,
    });
    Ok(())
}

fn check_lora_layer(
    m: usize,
    n: usize,
    rank: usize,
    seed: u64,
    quantize: bool,
    entries: &mut Vec<GradCheckEntry>,
) -> Result<()> {
    let mut stream = RngStream::new(seed, 0xBEEF);
    let w0 = Matrix::new(m, n, random_values(m * n, &mut stream, quantize))?;
    let mut layer = LoraLayer::new(
        "gc",
        w0,
        rank,
        rank as f64,
        InitScheme::KaimingUniform,
        &mut stream,
    )?;
    *layer.b_mut() = Matrix::new(m, rank, random_values(m * rank, &mut stream, quantize))?;
    let x = Vector::new(random_values(n, &mut stream, quantize))?;
    let g = Vector::new(random_values(m, &mut stream, quantize))?;
    let (_, cache) = layer.forward(&x)?;
    let grads = layer.backward(&x, &g, &cache)?;

    let mut worst_a = 0.0f64;
    for idx in 0..rank * n {
        let mut probe = layer.clone();
        let at = probe.a().data()[idx];
        let fd = fd_slope(
            |v| {
                probe.a_mut().data_mut()[idx] = v;
                probe.forward(&x).unwrap().0.dot(&g).unwrap()
            },
            at,
        );
        worst_a = worst_a.max(rel_err(grads.a.data()[idx], fd));
    }
    entries.push(GradCheckEntry {
        method: Method::Lora,
        m,
        n,
        rank,
        group: "A".into(),
        max_rel_err: worst_a,
    });

    let mut worst_b = 0.0f64;
    for idx in 0..m * rank {
        let mut probe = layer.clone();
        let at = probe.b().data()[idx];
        let fd = fd_slope(
            |v| {
                probe.b_mut().data_mut()[idx] = v;
                probe.forward(&x).unwrap().0.dot(&g).unwrap()
            },
            at,
        );
        worst_b = worst_b.max(rel_err(grads.b.data()[idx], fd));
    }
    entries.push(GradCheckEntry {
        method: Method::Lora,
        m,
        n,
        rank,
        group: "B".into(),
        max_rel_err: worst_b,
    });

    let mut worst_x = 0.0f64;
    for j in 0..n {
        let mut probe = x.clone();
        let at = x.get(j);
        let fd = fd_slope(
            |v| {
                probe.data_mut()[j] = v;
                layer.forward(&probe).unwrap().0.dot(&g).unwrap()
            },
            at,
        );
        worst_x = worst_x.max(rel_err(grads.x.get(j), fd));
    }
    entries.push(GradCheckEntry {
        method: Method::Lora,
        m,
        n,
        rank,
        group: "x".into(),
        max_rel_err: worst_x,
    });
    Ok(())
}

/// Layer-level grid over shapes × ranks × methods.
pub fn check_layer_grid(
    shapes: &[(usize, usize)],
    ranks: &[usize],
    seed: u64,
    tolerance: f64,
    quantize: bool,
) -> Result<GradCheckReport> {
    let mut entries = Vec::new();
    for &(m, n) in shapes {
        for &rank in ranks {
            for method in [Method::Vera, Method::OnlyD, Method::OnlyB] {
                check_vera_layer(method, m, n, rank, seed, quantize, &mut entries)?;
            }
            check_lora_layer(m, n, rank, seed, quantize, &mut entries)?;
        }
    }
    Ok(GradCheckReport { tolerance, entries })
}

/// End-to-end check: every trainable scalar of the toy model against
/// central differences of the batched cross-entropy.
pub fn check_toy_model(
    method: Method,
    d_model: usize,
    seed: u64,
    tolerance: f64,
) -> Result<GradCheckReport> {
    let task = TaskSpec::majority(5, seed);
    let mut cfg = AdapterConfig::new(method, 2, seed);
    cfg.d_init = 0.1;
    let arch = ArchConfig { d_model, heads: 2 };
    let mut model = ToyModel::new(task.vocab, task.classes, &arch, &cfg)?;

    // Nudge every trainable tensor off its (often zero) initialization so
    // gradients flow through the full chain.
    let mut stream = RngStream::new(seed, 0xD1CE);
    for slot in model.trainable_slots() {
        let params = model.param_slice_mut(slot).unwrap();
        for p in params {
            *p += stream.uniform(-0.4, 0.4)?;
        }
    }

    let mut data = RngStream::new(seed, 0xDA7A);
    let (inputs, labels) = gen_batch(&task, 4, &mut data)?;
    let (_, _, grads) = batch_loss_and_grads(&model, &inputs, &labels)?;

    let mut entries = Vec::new();
    for slot in model.trainable_slots() {
        let len = model.param_slice(slot).unwrap().len();
        let mut worst = 0.0f64;
        for idx in 0..len {
            let at = model.param_slice(slot).unwrap()[idx];
            let fd = fd_slope(
                |v| {
                    model.param_slice_mut(slot).unwrap()[idx] = v;
                    batch_loss(&model, &inputs, &labels).unwrap()
                },
                at,
            );
            model.param_slice_mut(slot).unwrap()[idx] = at;
            worst = worst.max(rel_err(grads.slice(slot).unwrap()[idx], fd));
        }
        entries.push(GradCheckEntry {
            method,
            m: d_model,
            n: d_model,
            rank: cfg.rank,
            group: slot.label().into(),
            max_rel_err: worst,
        });
    }
    Ok(GradCheckReport { tolerance, entries })
}

/// The full verification: layer grid (m, n ∈ {3, 8, 32}, r ∈ {1, 2, 8}, all
/// methods) plus the end-to-end toy-model check at d_model = 8.
///
/// With `float64` the inputs are full-precision f64 draws; otherwise every
/// generated value is first rounded through f32, certifying the gradient
/// path at storage precision as well.
pub fn run_default(seed: u64, tolerance: f64, float64: bool) -> Result<GradCheckReport> {
    let shapes = [
        (3, 3),
        (3, 8),
        (3, 32),
        (8, 3),
        (8, 8),
        (8, 32),
        (32, 3),
        (32, 8),
        (32, 32),
    ];
    let ranks = [1, 2, 8];
    let mut report = check_layer_grid(&shapes, &ranks, seed, tolerance, !float64)?;
    for method in [
        Method::Vera,
        Method::Lora,
        Method::OnlyD,
        Method::OnlyB,
        Method::HeadOnly,
    ] {
        let model_report = check_toy_model(method, 8, seed, tolerance)?;
        report.entries.extend(model_report.entries);
    }
    Ok(report)
}
