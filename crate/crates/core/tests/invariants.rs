//! Cross-module behavioral invariants that need full training runs.

use vera_core::adapter::{AdapterConfig, Method};
use vera_core::model::{ArchConfig, ToyModel};
use vera_core::task::TaskSpec;
use vera_core::train::{train, TrainConfig};

fn final_accuracy(method: Method, rank: usize, task: &TaskSpec, seed: u64) -> f64 {
    let cfg = AdapterConfig::new(method, rank, seed);
    let mut model = ToyModel::new(task.vocab, task.classes, &ArchConfig::default(), &cfg).unwrap();
    let tc = TrainConfig {
        steps: 500,
        batch: 16,
        eval_size: 1024,
        eval_every: 250,
        data_seed: 1000 + seed,
        ..TrainConfig::default()
    };
    train(&mut model, task, &cfg, &tc).unwrap().final_accuracy
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    v[(v.len() - 1) / 2]
}

/// Head-only accuracy never beats full adaptation on the pattern task
/// (medians over 5 seeds, identical hyperparameters for both).
#[test]
fn baseline_separation_on_pattern_detect() {
    let task = TaskSpec::pattern(16, 0);
    let seeds = [1u64, 2, 3, 4, 5];
    let vera: Vec<f64> = seeds
        .iter()
        .map(|&s| final_accuracy(Method::Vera, 8, &task, s))
        .collect();
    let head: Vec<f64> = seeds
        .iter()
        .map(|&s| final_accuracy(Method::HeadOnly, 1, &task, s))
        .collect();
    let vera_median = median(vera.clone());
    let head_median = median(head.clone());
    println!("vera median {vera_median:.4} {vera:?}");
    println!("head median {head_median:.4} {head:?}");
    assert!(
        head_median <= vera_median,
        "head-only {head_median} beat vera {vera_median}"
    );

    // Single-vector ablations: reported for comparison, not asserted — the
    // ordering is task-specific.
    let only_d: Vec<f64> = seeds
        .iter()
        .map(|&s| final_accuracy(Method::OnlyD, 8, &task, s))
        .collect();
    let only_b: Vec<f64> = seeds
        .iter()
        .map(|&s| final_accuracy(Method::OnlyB, 8, &task, s))
        .collect();
    println!(
        "ablation medians: vera {vera_median:.4}, only-d {:.4}, only-b {:.4}",
        median(only_d),
        median(only_b)
    );
}
