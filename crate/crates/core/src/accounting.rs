//! Trainable-parameter and storage-byte planning.
//!
//! Counting follows the closed forms `L_tuned × (d_model + r)` for VeRA and
//! `2 × L_tuned × d_model × r` for LoRA, with the classification head
//! excluded. Storage assumes single precision (4 bytes per value). Two
//! counting modes are exposed: trainable-only, and
//! with-shared-matrices (adds the `2 × d_model × r` values of the frozen
//! pair). The reference planning table's RoBERTa cells agree with the
//! trainable-only mode while its GPT-3 VeRA cells at rank 16/256 agree only
//! with the with-shared mode, so [`table1`] reports both and annotates which
//! mode matches each published cell.

use serde::Serialize;

use crate::error::{Error, Result};

/// Architecture description used for planning: adapted layers are
/// `blocks × adapted_per_block` square matrices of side `d_model`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ModelShape {
    pub name: String,
    pub blocks: usize,
    pub d_model: usize,
    pub adapted_per_block: usize,
}

impl ModelShape {
    pub fn new(
        name: impl Into<String>,
        blocks: usize,
        d_model: usize,
        adapted_per_block: usize,
    ) -> Result<Self> {
        if blocks == 0 || d_model == 0 || adapted_per_block == 0 {
            return Err(Error::InvalidParameter(
                "model shape counts must be >= 1".into(),
            ));
        }
        Ok(Self {
            name: name.into(),
            blocks,
            d_model,
            adapted_per_block,
        })
    }

    /// 12 blocks, width 768, two adapted projections per block.
    pub fn roberta_base() -> Self {
        Self::new("roberta-base", 12, 768, 2).unwrap()
    }

    /// 24 blocks, width 1024.
    pub fn roberta_large() -> Self {
        Self::new("roberta-large", 24, 1024, 2).unwrap()
    }

    /// 96 blocks, width 12288.
    pub fn gpt3() -> Self {
        Self::new("gpt-3", 96, 12288, 2).unwrap()
    }

    /// Number of adapted weight matrices.
    pub fn l_tuned(&self) -> u64 {
        (self.blocks * self.adapted_per_block) as u64
    }
}

/// VeRA trainable parameters: `L_tuned × (d_model + r)`.
pub fn vera_param_count(shape: &ModelShape, r: usize) -> u64 {
    shape.l_tuned() * (shape.d_model as u64 + r as u64)
}

/// LoRA trainable parameters: `2 × L_tuned × d_model × r`.
pub fn lora_param_count(shape: &ModelShape, r: usize) -> u64 {
    2 * shape.l_tuned() * shape.d_model as u64 * r as u64
}

/// Values in the shared frozen pair at rank r: `2 × d_model × r`.
pub fn shared_value_count(shape: &ModelShape, r: usize) -> u64 {
    2 * shape.d_model as u64 * r as u64
}

/// Per-unit-rank growth of the VeRA count — constant in r.
pub fn vera_rank_increment(shape: &ModelShape) -> u64 {
    shape.l_tuned()
}

/// Per-unit-rank growth of the LoRA count, reported for contrast.
pub fn lora_rank_increment(shape: &ModelShape) -> u64 {
    2 * shape.l_tuned() * shape.d_model as u64
}

/// Formats a byte count with binary units (divisor 1024). KB values print
/// as integers; MB/GB values keep one decimal below 100 units.
pub fn format_bytes(n: u64) -> String {
    const KIB: f64 = 1024.0;
    let (value, unit) = if (n as f64) < KIB * KIB {
        (n as f64 / KIB, "KB")
    } else if (n as f64) < KIB * KIB * KIB {
        (n as f64 / (KIB * KIB), "MB")
    } else {
        (n as f64 / (KIB * KIB * KIB), "GB")
    };
    if unit == "KB" || value >= 100.0 {
        format!("{:.0}{unit}", value)
    } else {
        format!("{:.1}{unit}", value)
    }
}

/// Formats a parameter count with decimal units (K below 10⁶, M above),
/// one decimal digit.
pub fn format_params(n: u64) -> String {
    if n < 1_000_000 {
        format!("{:.1}K", n as f64 / 1e3)
    } else {
        format!("{:.1}M", n as f64 / 1e6)
    }
}

/// Planning method — the two methods with closed-form counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlanMethod {
    Vera,
    Lora,
    OnlyD,
    OnlyB,
}

impl PlanMethod {
    pub fn name(self) -> &'static str {
        match self {
            PlanMethod::Vera => "vera",
            PlanMethod::Lora => "lora",
            PlanMethod::OnlyD => "only-d",
            PlanMethod::OnlyB => "only-b",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "vera" => Ok(PlanMethod::Vera),
            "lora" => Ok(PlanMethod::Lora),
            "only-d" | "only_d" => Ok(PlanMethod::OnlyD),
            "only-b" | "only_b" => Ok(PlanMethod::OnlyB),
            other => Err(Error::InvalidParameter(format!(
                "unknown plan method '{other}'"
            ))),
        }
    }

    /// Trainable count for this method at rank r.
    pub fn param_count(self, shape: &ModelShape, r: usize) -> u64 {
        match self {
            PlanMethod::Vera => vera_param_count(shape, r),
            PlanMethod::Lora => lora_param_count(shape, r),
            PlanMethod::OnlyD => shape.l_tuned() * r as u64,
            PlanMethod::OnlyB => shape.l_tuned() * shape.d_model as u64,
        }
    }
}

/// One planning row in both counting modes. `stored_bytes` is
/// `4 × trainable_params`; the with-shared figures add the `2 d_model r`
/// values of the frozen pair.
#[derive(Debug, Clone, Serialize)]
pub struct BudgetRow {
    pub model: String,
    pub method: PlanMethod,
    pub rank: usize,
    pub trainable_params: u64,
    pub stored_bytes: u64,
    pub with_shared_params: u64,
    pub stored_bytes_with_shared: u64,
    pub params_display: String,
    pub bytes_display: String,
}

pub fn budget_row(shape: &ModelShape, method: PlanMethod, rank: usize) -> BudgetRow {
    let trainable = method.param_count(shape, rank);
    let with_shared = trainable + shared_value_count(shape, rank);
    BudgetRow {
        model: shape.name.clone(),
        method,
        rank,
        trainable_params: trainable,
        stored_bytes: 4 * trainable,
        with_shared_params: with_shared,
        stored_bytes_with_shared: 4 * with_shared,
        params_display: format_params(trainable),
        bytes_display: format_bytes(4 * trainable),
    }
}

/// A published reference cell: its printed text, the value it denotes in
/// raw units, and the size of one increment of its last displayed digit.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct PublishedCell {
    pub text: &'static str,
    pub value: f64,
    pub unit: f64,
}

const fn params_cell(text: &'static str, value: f64, unit: f64) -> PublishedCell {
    PublishedCell { text, value, unit }
}

const KIB: f64 = 1024.0;
const MIB: f64 = 1024.0 * 1024.0;
const GIB: f64 = 1024.0 * 1024.0 * 1024.0;

/// Which counting mode reproduces a published cell (within one displayed
/// unit).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MatchMode {
    TrainableOnly,
    WithShared,
    Both,
    Neither,
}

impl MatchMode {
    pub fn label(self) -> &'static str {
        match self {
            MatchMode::TrainableOnly => "trainable-only",
            MatchMode::WithShared => "with-shared",
            MatchMode::Both => "both",
            MatchMode::Neither => "neither",
        }
    }

    fn classify(cell: PublishedCell, trainable: f64, with_shared: f64) -> Self {
        let hit = |v: f64| (v - cell.value).abs() <= cell.unit;
        match (hit(trainable), hit(with_shared)) {
            (true, true) => MatchMode::Both,
            (true, false) => MatchMode::TrainableOnly,
            (false, true) => MatchMode::WithShared,
            (false, false) => MatchMode::Neither,
        }
    }
}

/// One row of the reproduced planning table with its published reference
/// cells and match annotations.
#[derive(Debug, Clone, Serialize)]
pub struct Table1Row {
    #[serde(flatten)]
    pub budget: BudgetRow,
    pub published_params: PublishedCell,
    pub published_bytes: PublishedCell,
    pub params_match: MatchMode,
    pub bytes_match: MatchMode,
}

/// Published reference values: (model, method, rank, params cell, bytes
/// cell). Parameter cells use decimal K/M; byte cells use binary units.
type PublishedRow = (
    &'static str,
    PlanMethod,
    usize,
    PublishedCell,
    PublishedCell,
);

const PUBLISHED: [PublishedRow; 18] = [
    ("roberta-base", PlanMethod::Lora, 1,
        params_cell("36.8K", 36.8e3, 0.1e3), params_cell("144KB", 144.0 * KIB, KIB)),
    ("roberta-base", PlanMethod::Lora, 16,
        params_cell("589.8K", 589.8e3, 0.1e3), params_cell("2MB", 2.0 * MIB, MIB)),
    ("roberta-base", PlanMethod::Lora, 256,
        params_cell("9437.1K", 9437.1e3, 0.1e3), params_cell("36MB", 36.0 * MIB, MIB)),
    ("roberta-base", PlanMethod::Vera, 1,
        params_cell("18.4K", 18.4e3, 0.1e3), params_cell("72KB", 72.0 * KIB, KIB)),
    ("roberta-base", PlanMethod::Vera, 16,
        params_cell("18.8K", 18.8e3, 0.1e3), params_cell("74KB", 74.0 * KIB, KIB)),
    ("roberta-base", PlanMethod::Vera, 256,
        params_cell("24.5K", 24.5e3, 0.1e3), params_cell("96KB", 96.0 * KIB, KIB)),
    ("roberta-large", PlanMethod::Lora, 1,
        params_cell("98.3K", 98.3e3, 0.1e3), params_cell("384KB", 384.0 * KIB, KIB)),
    ("roberta-large", PlanMethod::Lora, 16,
        params_cell("1572.8K", 1572.8e3, 0.1e3), params_cell("6MB", 6.0 * MIB, MIB)),
    ("roberta-large", PlanMethod::Lora, 256,
        params_cell("25165.8K", 25165.8e3, 0.1e3), params_cell("96MB", 96.0 * MIB, MIB)),
    ("roberta-large", PlanMethod::Vera, 1,
        params_cell("49.2K", 49.2e3, 0.1e3), params_cell("192KB", 192.0 * KIB, KIB)),
    ("roberta-large", PlanMethod::Vera, 16,
        params_cell("49.5K", 49.5e3, 0.1e3), params_cell("195KB", 195.0 * KIB, KIB)),
    ("roberta-large", PlanMethod::Vera, 256,
        params_cell("61.4K", 61.4e3, 0.1e3), params_cell("240KB", 240.0 * KIB, KIB)),
    ("gpt-3", PlanMethod::Lora, 1,
        params_cell("4.7M", 4.7e6, 0.1e6), params_cell("18MB", 18.0 * MIB, MIB)),
    ("gpt-3", PlanMethod::Lora, 16,
        params_cell("75.5M", 75.5e6, 0.1e6), params_cell("288MB", 288.0 * MIB, MIB)),
    ("gpt-3", PlanMethod::Lora, 256,
        params_cell("1207.9M", 1207.9e6, 0.1e6), params_cell("4.6GB", 4.6 * GIB, 0.1 * GIB)),
    ("gpt-3", PlanMethod::Vera, 1,
        params_cell("2.4M", 2.4e6, 0.1e6), params_cell("9.1MB", 9.1 * MIB, 0.1 * MIB)),
    ("gpt-3", PlanMethod::Vera, 16,
        params_cell("2.8M", 2.8e6, 0.1e6), params_cell("10.5MB", 10.5 * MIB, 0.1 * MIB)),
    ("gpt-3", PlanMethod::Vera, 256,
        params_cell("8.7M", 8.7e6, 0.1e6), params_cell("33MB", 33.0 * MIB, MIB)),
];

/// Reproduces the reference planning table: the three presets × ranks
/// {1, 16, 256} × both methods, in both counting modes, annotated with the
/// mode (if any) that lands within one displayed unit of each published
/// cell.
pub fn table1() -> Vec<Table1Row> {
    let shapes = [
        ModelShape::roberta_base(),
        ModelShape::roberta_large(),
        ModelShape::gpt3(),
    ];
    let mut rows = Vec::with_capacity(PUBLISHED.len());
    for (model, method, rank, p_cell, b_cell) in PUBLISHED {
        let shape = shapes.iter().find(|s| s.name == model).unwrap();
        let budget = budget_row(shape, method, rank);
        let params_match = MatchMode::classify(
            p_cell,
            budget.trainable_params as f64,
            budget.with_shared_params as f64,
        );
        let bytes_match = MatchMode::classify(
            b_cell,
            budget.stored_bytes as f64,
            budget.stored_bytes_with_shared as f64,
        );
        rows.push(Table1Row {
            budget,
            published_params: p_cell,
            published_bytes: b_cell,
            params_match,
            bytes_match,
        });
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vera_counts_match_reference_cells() {
        let base = ModelShape::roberta_base();
        let large = ModelShape::roberta_large();
        let gpt3 = ModelShape::gpt3();
        assert_eq!(vera_param_count(&base, 1), 18_456);
        assert_eq!(vera_param_count(&large, 256), 61_440);
        assert_eq!(vera_param_count(&gpt3, 1), 2_359_488);
    }

    #[test]
    fn lora_counts_match_reference_cells() {
        let base = ModelShape::roberta_base();
        let gpt3 = ModelShape::gpt3();
        assert_eq!(lora_param_count(&base, 16), 589_824);
        assert_eq!(lora_param_count(&gpt3, 256), 1_207_959_552);
    }

    #[test]
    fn rank_one_ratio_is_about_two() {
        // LoRA/VeRA at r = 1 is 2·d_model/(d_model+1) ≈ 2.
        for shape in [ModelShape::roberta_base(), ModelShape::gpt3()] {
            let ratio = lora_param_count(&shape, 1) as f64 / vera_param_count(&shape, 1) as f64;
            let want = 2.0 * shape.d_model as f64 / (shape.d_model as f64 + 1.0);
            assert!((ratio - want).abs() < 1e-12);
            assert!((ratio - 2.0).abs() < 0.01);
        }
    }

    #[test]
    fn rank_increment_is_l_tuned_and_constant() {
        let base = ModelShape::roberta_base();
        let gpt3 = ModelShape::gpt3();
        assert_eq!(vera_rank_increment(&base), 24);
        assert_eq!(vera_rank_increment(&gpt3), 192);
        for r in 1..64 {
            assert_eq!(
                vera_param_count(&base, r + 1) - vera_param_count(&base, r),
                vera_rank_increment(&base)
            );
        }
        assert_eq!(lora_rank_increment(&base), 2 * 24 * 768);
    }

    #[test]
    fn byte_formatting_reference_values() {
        assert_eq!(format_bytes(147_456), "144KB");
        assert_eq!(format_bytes(245_760), "240KB");
        assert_eq!(format_bytes(73_824), "72KB");
        assert_eq!(format_bytes(75_264), "74KB");
        assert_eq!(format_bytes(199_680), "195KB");
        assert_eq!(format_bytes(4 * 2_755_584), "10.5MB");
        assert_eq!(format_bytes(4 * 2_384_064), "9.1MB");
        assert_eq!(format_bytes(301_989_888), "288MB");
    }

    #[test]
    fn table1_modes_and_annotations() {
        let rows = table1();
        assert_eq!(rows.len(), 18);

        // GPT-3 VeRA r=16: trainable-only does NOT reproduce the published
        // 2.8M; with-shared does.
        let row = rows
            .iter()
            .find(|r| r.budget.model == "gpt-3" && r.budget.method == PlanMethod::Vera && r.budget.rank == 16)
            .unwrap();
        assert_eq!(row.budget.trainable_params, 2_362_368);
        assert_eq!(row.budget.with_shared_params, 2_755_584);
        assert_eq!(row.params_match, MatchMode::WithShared);

        let row = rows
            .iter()
            .find(|r| r.budget.model == "gpt-3" && r.budget.method == PlanMethod::Vera && r.budget.rank == 256)
            .unwrap();
        assert_eq!(row.budget.with_shared_params, 8_699_904);
        assert_ne!(row.params_match, MatchMode::Neither);

        let row = rows
            .iter()
            .find(|r| r.budget.model == "roberta-base" && r.budget.method == PlanMethod::Vera && r.budget.rank == 256)
            .unwrap();
        assert_eq!(row.budget.trainable_params, 24_576);
        assert!(matches!(
            row.params_match,
            MatchMode::TrainableOnly | MatchMode::Both
        ));
    }

    #[test]
    fn vera_never_exceeds_lora() {
        // m + r <= 2·m·r for m, r >= 1.
        for blocks in [1usize, 2, 12] {
            for d_model in [1usize, 4, 768] {
                let shape = ModelShape::new("s", blocks, d_model, 2).unwrap();
                for r in [1usize, 2, 7, 64] {
                    assert!(vera_param_count(&shape, r) <= lora_param_count(&shape, r));
                }
            }
        }
    }

    #[test]
    fn budget_row_invariants() {
        let shape = ModelShape::roberta_base();
        let row = budget_row(&shape, PlanMethod::Vera, 16);
        assert_eq!(row.stored_bytes, 4 * row.trainable_params);
        assert_eq!(
            row.stored_bytes_with_shared,
            row.stored_bytes + 4 * shared_value_count(&shape, 16)
        );
    }
}
