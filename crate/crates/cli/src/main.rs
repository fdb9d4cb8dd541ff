//! `vera` — plan, train, verify, and package low-rank adapters.
//!
//! Exit codes: 0 success, 1 usage error, 2 validation error (bad file,
//! dimension mismatch, invalid config), 3 failed check (gradient tolerance
//! exceeded, divergence). Every run prints its resolved configuration as
//! one `config:` JSON line on stderr; errors are one `error:` line on
//! stderr.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use vera_core::accounting::{budget_row, table1, ModelShape, PlanMethod};
use vera_core::adapter::{AdapterConfig, Method};
use vera_core::checkpoint::{export_merged, Checkpoint};
use vera_core::error::Error as CoreError;
use vera_core::gradcheck;
use vera_core::model::{ArchConfig, ToyModel};
use vera_core::rng::InitScheme;
use vera_core::sweep::{magnitude_csv, magnitude_report, rank_sweep, sweep_csv};
use vera_core::task::TaskSpec;
use vera_core::tensorfile;
use vera_core::train::{train, TrainConfig};

#[derive(Parser)]
#[command(name = "vera", version, about = "Vector-adapted and low-rank finetuning toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Parameter and storage planning for a custom model shape.
    Plan(PlanArgs),
    /// Reproduce the reference planning table in both counting modes.
    Table1(Table1Args),
    /// Train the toy model and write an adapter checkpoint.
    Train(TrainArgs),
    /// Accuracy-vs-rank sweep over methods, ranks, and seeds.
    Sweep(SweepArgs),
    /// Verify analytic gradients against central finite differences.
    Gradcheck(GradcheckArgs),
    /// Merge a checkpoint into a base-weight container.
    Merge(MergeArgs),
    /// Describe a checkpoint (config, shapes, vector norms).
    Inspect(InspectArgs),
    /// Per-layer adaptation magnitudes of a trained checkpoint.
    Magnitude(MagnitudeArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
    Csv,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    Vera,
    Lora,
    OnlyD,
    OnlyB,
    HeadOnly,
}

impl MethodArg {
    fn to_method(self) -> Method {
        match self {
            MethodArg::Vera => Method::Vera,
            MethodArg::Lora => Method::Lora,
            MethodArg::OnlyD => Method::OnlyD,
            MethodArg::OnlyB => Method::OnlyB,
            MethodArg::HeadOnly => Method::HeadOnly,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SchemeArg {
    KaimingUniform,
    KaimingNormal,
    Uniform,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TaskArg {
    Majority,
    Pattern,
}

#[derive(Args)]
struct PlanArgs {
    /// Transformer blocks.
    #[arg(long, default_value_t = 12)]
    blocks: usize,
    /// Width of the adapted square projections.
    #[arg(long = "dmodel", default_value_t = 768)]
    d_model: usize,
    /// Adapted projections per block.
    #[arg(long, default_value_t = 2)]
    adapted_per_block: usize,
    /// Ranks to tabulate.
    #[arg(long, value_delimiter = ',', default_value = "1,16,256")]
    ranks: Vec<usize>,
    /// Methods to tabulate.
    #[arg(long = "method", value_delimiter = ',', default_value = "vera,lora")]
    methods: Vec<String>,
    /// Also print the with-shared-matrices columns in text output.
    #[arg(long)]
    include_shared: bool,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
}

#[derive(Args)]
struct Table1Args {
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, value_enum, default_value_t = MethodArg::Vera)]
    method: MethodArg,
    #[arg(long, default_value_t = 8)]
    rank: usize,
    /// Width the shared pair is generated at (defaults to the rank).
    #[arg(long)]
    r_max: Option<usize>,
    /// Initial value for every element of d.
    #[arg(long, default_value_t = 0.1)]
    d_init: f64,
    #[arg(long, value_enum, default_value_t = SchemeArg::KaimingUniform)]
    init_scheme: SchemeArg,
    /// Lower bound for the uniform init scheme.
    #[arg(long, default_value_t = 0.0)]
    init_low: f64,
    /// Upper bound for the uniform init scheme.
    #[arg(long, default_value_t = 0.1)]
    init_high: f64,
    /// LoRA scale numerator (defaults to the rank, i.e. unit scale).
    #[arg(long)]
    lora_alpha: Option<f64>,
    /// Model seed: base weights, shared matrices, adapter init.
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Data seed: batch and evaluation streams.
    #[arg(long, default_value_t = 7)]
    data_seed: u64,
    #[arg(long, default_value_t = 500)]
    steps: usize,
    #[arg(long, default_value_t = 16)]
    batch: usize,
    #[arg(long, default_value_t = 1e-2)]
    lr_adapter: f64,
    #[arg(long, default_value_t = 1e-3)]
    lr_head: f64,
    #[arg(long, value_enum, default_value_t = TaskArg::Majority)]
    task: TaskArg,
    /// Sequence length (defaults per task: 9 majority, 16 pattern).
    #[arg(long)]
    seq_len: Option<usize>,
    #[arg(long, default_value_t = 32)]
    d_model: usize,
    #[arg(long, default_value_t = 2)]
    heads: usize,
    #[arg(long, default_value_t = 256)]
    eval_size: usize,
    #[arg(long, default_value_t = 50)]
    eval_every: usize,
    /// Checkpoint output path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Loss-curve CSV output path.
    #[arg(long)]
    curve_out: Option<PathBuf>,
    /// Write the frozen base weights as a tensor container (for `merge`).
    #[arg(long)]
    export_base: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long, value_delimiter = ',', default_value = "vera,lora")]
    methods: Vec<String>,
    #[arg(long, value_delimiter = ',', default_value = "1,4,16,64")]
    ranks: Vec<usize>,
    /// Number of seeds per cell.
    #[arg(long, default_value_t = 5)]
    seeds: usize,
    /// First model seed; runs use seed_base..seed_base+seeds.
    #[arg(long, default_value_t = 1)]
    seed_base: u64,
    #[arg(long, default_value_t = 77)]
    data_seed: u64,
    #[arg(long, value_enum, default_value_t = TaskArg::Majority)]
    task: TaskArg,
    #[arg(long)]
    seq_len: Option<usize>,
    #[arg(long, default_value_t = 500)]
    steps: usize,
    #[arg(long, default_value_t = 16)]
    batch: usize,
    #[arg(long, default_value_t = 1e-2)]
    lr_adapter: f64,
    #[arg(long, default_value_t = 1e-3)]
    lr_head: f64,
    #[arg(long, default_value_t = 32)]
    d_model: usize,
    #[arg(long, default_value_t = 2)]
    heads: usize,
    #[arg(long, default_value_t = 256)]
    eval_size: usize,
    /// Sweep CSV output path.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 1e-4)]
    tolerance: f64,
    /// Draw check inputs at full f64 precision instead of routing them
    /// through f32 storage rounding first.
    #[arg(long)]
    float64: bool,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
}

#[derive(Args)]
struct MergeArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    base: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct InspectArgs {
    #[arg(long)]
    ckpt: PathBuf,
    /// Emit the full JSON description instead of the text summary.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct MagnitudeArgs {
    #[arg(long)]
    ckpt: PathBuf,
    /// Magnitude CSV output path (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Anything a subcommand can fail with, mapped onto the exit-code contract.
enum CliError {
    Core(CoreError),
    CheckFailed(String),
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    fn category(&self) -> &'static str {
        match self {
            CliError::CheckFailed(_) => "check-failed",
            CliError::Core(e) => match e {
                CoreError::DimMismatch(_) => "dimension-mismatch",
                CoreError::InvalidParameter(_) => "invalid-parameter",
                CoreError::InvalidConfig(_) => "invalid-config",
                CoreError::Format(_) => "format",
                CoreError::Corrupt(_) => "corrupt",
                CoreError::MissingTensor(_) => "missing-tensor",
                CoreError::UnsupportedMethod(_) => "unsupported-method",
                CoreError::Diverged(_) => "diverged",
                CoreError::Io(_) => "io",
            },
        }
    }

    fn message(&self) -> String {
        match self {
            CliError::Core(e) => e.to_string(),
            CliError::CheckFailed(m) => m.clone(),
        }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::CheckFailed(_) => 3,
            CliError::Core(CoreError::Diverged(_)) => 3,
            CliError::Core(_) => 2,
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}: {}", e.category(), e.message());
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cmd: Cmd) -> Result<(), CliError> {
    match cmd {
        Cmd::Plan(args) => cmd_plan(args),
        Cmd::Table1(args) => cmd_table1(args),
        Cmd::Train(args) => cmd_train(args),
        Cmd::Sweep(args) => cmd_sweep(args),
        Cmd::Gradcheck(args) => cmd_gradcheck(args),
        Cmd::Merge(args) => cmd_merge(args),
        Cmd::Inspect(args) => cmd_inspect(args),
        Cmd::Magnitude(args) => cmd_magnitude(args),
    }
}

/// The reproducibility contract: every run states its resolved options.
fn print_config(subcommand: &str, resolved: serde_json::Value) {
    eprintln!("config: {}", json!({ "subcommand": subcommand, "options": resolved }));
}

fn cmd_plan(args: PlanArgs) -> Result<(), CliError> {
    let methods: Vec<PlanMethod> = args
        .methods
        .iter()
        .map(|s| PlanMethod::parse(s))
        .collect::<Result<_, _>>()?;
    if args.ranks.is_empty() || args.ranks.contains(&0) {
        return Err(CoreError::InvalidParameter("ranks must be >= 1".into()).into());
    }
    let shape = ModelShape::new("custom", args.blocks, args.d_model, args.adapted_per_block)?;
    print_config(
        "plan",
        json!({
            "blocks": args.blocks,
            "dmodel": args.d_model,
            "adapted_per_block": args.adapted_per_block,
            "ranks": args.ranks,
            "methods": methods.iter().map(|m| m.name()).collect::<Vec<_>>(),
            "include_shared": args.include_shared,
        }),
    );

    let mut rows = Vec::with_capacity(methods.len() * args.ranks.len());
    for &m in &methods {
        for &r in &args.ranks {
            rows.push(budget_row(&shape, m, r));
        }
    }

    match args.format {
        Format::Json => println!("{}", serde_json::to_string_pretty(&rows).unwrap()),
        Format::Csv => {
            println!("method,rank,trainable_params,stored_bytes,with_shared_params,stored_bytes_with_shared");
            for r in &rows {
                println!(
                    "{},{},{},{},{},{}",
                    r.method.name(),
                    r.rank,
                    r.trainable_params,
                    r.stored_bytes,
                    r.with_shared_params,
                    r.stored_bytes_with_shared
                );
            }
        }
        Format::Text => {
            if args.include_shared {
                println!(
                    "{:<8} {:>6} {:>16} {:>10} {:>16} {:>10}",
                    "method", "rank", "params", "bytes", "params+shared", "bytes"
                );
                for r in &rows {
                    println!(
                        "{:<8} {:>6} {:>16} {:>10} {:>16} {:>10}",
                        r.method.name(),
                        r.rank,
                        r.trainable_params,
                        r.bytes_display,
                        r.with_shared_params,
                        vera_core::accounting::format_bytes(r.stored_bytes_with_shared)
                    );
                }
            } else {
                println!("{:<8} {:>6} {:>16} {:>10}", "method", "rank", "params", "bytes");
                for r in &rows {
                    println!(
                        "{:<8} {:>6} {:>16} {:>10}",
                        r.method.name(),
                        r.rank,
                        r.trainable_params,
                        r.bytes_display
                    );
                }
            }
        }
    }
    Ok(())
}

fn cmd_table1(args: Table1Args) -> Result<(), CliError> {
    print_config("table1", json!({}));
    let rows = table1();
    match args.format {
        Format::Json => println!("{}", serde_json::to_string_pretty(&rows).unwrap()),
        Format::Csv => {
            println!("model,method,rank,trainable_params,stored_bytes,with_shared_params,stored_bytes_with_shared,published_params,published_bytes,params_match,bytes_match");
            for r in &rows {
                println!(
                    "{},{},{},{},{},{},{},{},{},{},{}",
                    r.budget.model,
                    r.budget.method.name(),
                    r.budget.rank,
                    r.budget.trainable_params,
                    r.budget.stored_bytes,
                    r.budget.with_shared_params,
                    r.budget.stored_bytes_with_shared,
                    r.published_params.text,
                    r.published_bytes.text,
                    r.params_match.label(),
                    r.bytes_match.label()
                );
            }
        }
        Format::Text => {
            println!(
                "{:<14} {:<6} {:>5} {:>14} {:>9} {:>14} {:>9}  {:>9} {:>9}  {:<15} {:<15}",
                "model", "method", "rank", "params", "bytes", "params+sh", "bytes+sh",
                "published", "pub bytes", "params match", "bytes match"
            );
            for r in &rows {
                println!(
                    "{:<14} {:<6} {:>5} {:>14} {:>9} {:>14} {:>9}  {:>9} {:>9}  {:<15} {:<15}",
                    r.budget.model,
                    r.budget.method.name(),
                    r.budget.rank,
                    r.budget.trainable_params,
                    r.budget.bytes_display,
                    r.budget.with_shared_params,
                    vera_core::accounting::format_bytes(r.budget.stored_bytes_with_shared),
                    r.published_params.text,
                    r.published_bytes.text,
                    r.params_match.label(),
                    r.bytes_match.label()
                );
            }
        }
    }
    Ok(())
}

fn build_task(task: TaskArg, seq_len: Option<usize>, data_seed: u64) -> TaskSpec {
    match task {
        TaskArg::Majority => TaskSpec::majority(seq_len.unwrap_or(9), data_seed),
        TaskArg::Pattern => TaskSpec::pattern(seq_len.unwrap_or(16), data_seed),
    }
}

fn build_scheme(scheme: SchemeArg, low: f64, high: f64) -> InitScheme {
    match scheme {
        SchemeArg::KaimingUniform => InitScheme::KaimingUniform,
        SchemeArg::KaimingNormal => InitScheme::KaimingNormal,
        SchemeArg::Uniform => InitScheme::UniformRange { low, high },
    }
}

fn scheme_json(scheme: InitScheme) -> serde_json::Value {
    match scheme {
        InitScheme::KaimingUniform => json!("kaiming-uniform"),
        InitScheme::KaimingNormal => json!("kaiming-normal"),
        InitScheme::UniformRange { low, high } => json!({"uniform": {"low": low, "high": high}}),
    }
}

fn cmd_train(args: TrainArgs) -> Result<(), CliError> {
    let method = args.method.to_method();
    let task = build_task(args.task, args.seq_len, 0);
    let scheme = build_scheme(args.init_scheme, args.init_low, args.init_high);

    let mut adapter = AdapterConfig::new(method, args.rank, args.seed);
    adapter.r_max = args.r_max.unwrap_or(args.rank);
    adapter.scheme = scheme;
    adapter.d_init = args.d_init;
    adapter.lora_alpha = args.lora_alpha.unwrap_or(args.rank as f64);

    let train_cfg = TrainConfig {
        lr_adapter: args.lr_adapter,
        lr_head: args.lr_head,
        steps: args.steps,
        batch: args.batch,
        data_seed: args.data_seed,
        eval_size: args.eval_size,
        eval_every: args.eval_every,
        ..TrainConfig::default()
    };

    print_config(
        "train",
        json!({
            "method": method.name(),
            "rank": adapter.rank,
            "r_max": adapter.r_max,
            "d_init": adapter.d_init,
            "init_scheme": scheme_json(scheme),
            "lora_alpha": adapter.lora_alpha,
            "seed": args.seed,
            "data_seed": args.data_seed,
            "steps": train_cfg.steps,
            "batch": train_cfg.batch,
            "lr_adapter": train_cfg.lr_adapter,
            "lr_head": train_cfg.lr_head,
            "warmup_ratio": train_cfg.warmup_ratio,
            "weight_decay": train_cfg.weight_decay,
            "task": task.kind.name(),
            "seq_len": task.seq_len,
            "vocab": task.vocab,
            "d_model": args.d_model,
            "heads": args.heads,
            "eval_size": train_cfg.eval_size,
            "out": args.out,
            "curve_out": args.curve_out,
            "export_base": args.export_base,
        }),
    );

    let arch = ArchConfig {
        d_model: args.d_model,
        heads: args.heads,
    };
    let mut model = ToyModel::new(task.vocab, task.classes, &arch, &adapter)?;
    let adapter_params = model.adapter_trainable_params();
    let report = train(&mut model, &task, &adapter, &train_cfg)?;

    if let Some(path) = &args.out {
        let bytes = report.checkpoint.save(path)?;
        eprintln!("wrote checkpoint {} ({bytes} bytes)", path.display());
    }
    if let Some(path) = &args.curve_out {
        std::fs::write(path, report.curve_csv()).map_err(CoreError::Io)?;
        eprintln!("wrote loss curve {}", path.display());
    }
    if let Some(path) = &args.export_base {
        let count = tensorfile::write_tensors(path, &model.base_weights())?;
        eprintln!("wrote base weights {} ({count} bytes)", path.display());
    }

    let final_loss = report.steps.last().map_or(f64::NAN, |s| s.loss);
    match args.format {
        Format::Json | Format::Csv => println!(
            "{}",
            json!({
                "method": method.name(),
                "rank": adapter.rank,
                "adapter_trainable_params": adapter_params,
                "steps": report.steps.len(),
                "final_loss": final_loss,
                "final_accuracy": report.final_accuracy,
                "evals": report.evals,
                "checkpoint_payload_bytes": report.checkpoint.payload_bytes(),
            })
        ),
        Format::Text => {
            println!(
                "{} r={}: {} adapter params, {} steps",
                method.name(),
                adapter.rank,
                adapter_params,
                report.steps.len()
            );
            for (step, acc) in &report.evals {
                println!("  step {step:>5}: held-out accuracy {acc:.4}");
            }
            println!("final loss {final_loss:.6}, held-out accuracy {:.4}", report.final_accuracy);
        }
    }
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> Result<(), CliError> {
    let methods: Vec<Method> = args
        .methods
        .iter()
        .map(|s| Method::parse(s))
        .collect::<Result<_, _>>()?;
    if args.seeds == 0 {
        return Err(CoreError::InvalidConfig("need at least one seed".into()).into());
    }
    let task = build_task(args.task, args.seq_len, 0);
    let seeds: Vec<u64> = (0..args.seeds as u64).map(|i| args.seed_base + i).collect();

    print_config(
        "sweep",
        json!({
            "methods": methods.iter().map(|m| m.name()).collect::<Vec<_>>(),
            "ranks": args.ranks,
            "seeds": seeds,
            "data_seed": args.data_seed,
            "task": task.kind.name(),
            "seq_len": task.seq_len,
            "steps": args.steps,
            "batch": args.batch,
            "lr_adapter": args.lr_adapter,
            "lr_head": args.lr_head,
            "d_model": args.d_model,
            "heads": args.heads,
            "eval_size": args.eval_size,
            "out": args.out,
        }),
    );

    let arch = ArchConfig {
        d_model: args.d_model,
        heads: args.heads,
    };
    let base = TrainConfig {
        lr_adapter: args.lr_adapter,
        lr_head: args.lr_head,
        steps: args.steps,
        batch: args.batch,
        data_seed: args.data_seed,
        eval_size: args.eval_size,
        eval_every: args.steps,
        ..TrainConfig::default()
    };
    let template = AdapterConfig::new(Method::Vera, 1, 0);
    let rows = rank_sweep(&task, &methods, &args.ranks, &seeds, &arch, &base, &template)?;

    let csv = sweep_csv(&rows);
    if let Some(path) = &args.out {
        std::fs::write(path, &csv).map_err(CoreError::Io)?;
        eprintln!("wrote sweep csv {}", path.display());
    }
    match args.format {
        Format::Json => println!("{}", serde_json::to_string_pretty(&rows).unwrap()),
        Format::Csv => print!("{csv}"),
        Format::Text => {
            println!("{:<8} {:>6} {:>10} {:>10}", "method", "rank", "params", "median");
            for row in &rows {
                println!(
                    "{:<8} {:>6} {:>10} {:>10.4}",
                    row.method.name(),
                    row.rank,
                    row.trainable_params,
                    row.median_accuracy
                );
            }
        }
    }
    Ok(())
}

fn cmd_gradcheck(args: GradcheckArgs) -> Result<(), CliError> {
    print_config(
        "gradcheck",
        json!({
            "tolerance": args.tolerance,
            "float64": args.float64,
            "seed": args.seed,
        }),
    );
    let report = gradcheck::run_default(args.seed, args.tolerance, args.float64)?;
    match args.format {
        Format::Json | Format::Csv => println!("{}", serde_json::to_string_pretty(&report).unwrap()),
        Format::Text => {
            println!(
                "{} parameter groups checked, max relative error {:.3e} (tolerance {:.1e})",
                report.entries.len(),
                report.max_rel_err(),
                report.tolerance
            );
            for f in report.failures() {
                println!(
                    "  FAIL {} m={} n={} r={} group {}: {:.3e}",
                    f.method.name(),
                    f.m,
                    f.n,
                    f.rank,
                    f.group,
                    f.max_rel_err
                );
            }
        }
    }
    if !report.passed() {
        return Err(CliError::CheckFailed(format!(
            "gradient check exceeded tolerance: max relative error {:.3e} >= {:.1e}",
            report.max_rel_err(),
            report.tolerance
        )));
    }
    Ok(())
}

fn cmd_merge(args: MergeArgs) -> Result<(), CliError> {
    print_config(
        "merge",
        json!({ "ckpt": args.ckpt, "base": args.base, "out": args.out }),
    );
    let ckpt = Checkpoint::load(&args.ckpt)?;
    let count = export_merged(&ckpt, &args.base, &args.out)?;
    println!(
        "merged {} adapted layers into {} tensors -> {}",
        ckpt.layers.len(),
        count,
        args.out.display()
    );
    Ok(())
}

fn cmd_inspect(args: InspectArgs) -> Result<(), CliError> {
    print_config("inspect", json!({ "ckpt": args.ckpt, "json": args.json }));
    let ckpt = Checkpoint::load(&args.ckpt)?;
    let description = ckpt.inspect_json();
    if args.json {
        println!("{}", serde_json::to_string_pretty(&description).unwrap());
    } else {
        println!(
            "{} checkpoint, rank {} (r_max {}), seed {}, {} layers, payload {} bytes",
            ckpt.config.method.name(),
            ckpt.config.rank,
            ckpt.config.r_max,
            ckpt.config.master_seed,
            ckpt.layers.len(),
            ckpt.payload_bytes()
        );
        for layer in description["layers"].as_array().unwrap() {
            let norms: Vec<String> = ["d_norm", "b_norm", "a_norm"]
                .iter()
                .filter_map(|k| {
                    layer
                        .get(*k)
                        .and_then(serde_json::Value::as_f64)
                        .map(|v| format!("{k}={v:.6}"))
                })
                .collect();
            println!(
                "  {} {}x{}: {}",
                layer["name"].as_str().unwrap(),
                layer["m"],
                layer["n"],
                norms.join(" ")
            );
        }
    }
    Ok(())
}

fn cmd_magnitude(args: MagnitudeArgs) -> Result<(), CliError> {
    print_config("magnitude", json!({ "ckpt": args.ckpt, "out": args.out }));
    let ckpt = Checkpoint::load(&args.ckpt)?;
    let rows = magnitude_report(&ckpt)?;
    let csv = magnitude_csv(&rows);
    match &args.out {
        Some(path) => {
            std::fs::write(path, &csv).map_err(CoreError::Io)?;
            eprintln!("wrote magnitude csv {}", path.display());
        }
        None => print!("{csv}"),
    }
    Ok(())
}
