//! Command-line surface over the pmss library: select skeletons, run the
//! skeleton decompositions, fine-tune adapters on synthetic tasks, bench
//! selection strategies, and compute parameter budgets.
//!
//! Exit codes: 0 success, 2 parameter errors, 3 I/O or file-format errors,
//! 4 numerical degeneracy, 5 training divergence. Reports go to stdout
//! (JSON under `--json`), diagnostics to stderr. Outputs carry no
//! timestamps, so identical invocations produce identical bytes.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use pmss::adapter::{Checkpoint, LoraAdapter, PmssAdapter};
use pmss::budget::{equivalent_rank, param_budget, BudgetMethod, BudgetReport};
use pmss::error::{Error, Result};
use pmss::io::{
    read_matrix, write_checkpoint, write_index_file, write_matrix, Axis, IndexFile, MatrixFormat,
};
use pmss::skeleton::{
    column_id, cur_optimal, make_spectrum_matrix, row_id, select_with, summarize, two_sided_id,
    ApproxMethod, ApproxReport, QualityReport, QualityRow, SelectionStrategy, SkeletonIndices,
    Spectrum,
};
use pmss::trainer::{
    train, BatchMode, LrSchedule, Optimizer, SyntheticTask, TrainConfig, TrainReport,
    TrainableAdapter,
};
use pmss::DenseMatrix;

#[derive(Parser)]
#[command(
    name = "pmss",
    version,
    about = "Skeleton-selection low-rank adapters: select, decompose, train, bench, paramcount"
)]
struct Cli {
    /// Seed for stochastic selection, synthetic tasks and adapter init.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Format for matrices written by the command.
    #[arg(long, global = true, value_parser = ["dmat", "csv"], default_value = "dmat")]
    format: String,

    /// Path prefix for files written by the command.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Print the report as JSON instead of aligned text.
    #[arg(long, global = true)]
    json: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Select skeleton column and row indices from a matrix.
    Select(SelectArgs),
    /// Approximate a matrix from its skeleton and report the error.
    Decompose(DecomposeArgs),
    /// Fine-tune an adapter on a synthetic teacher-student task.
    Train(TrainArgs),
    /// Compare selection strategies across seeded matrices.
    Bench(BenchArgs),
    /// Compute trainable-parameter budgets.
    Paramcount(ParamcountArgs),
}

#[derive(Args)]
struct SelectArgs {
    /// Matrix file (binary or CSV; sniffed by content).
    #[arg(long)]
    matrix: PathBuf,

    /// Number of skeleton columns.
    #[arg(long = "c")]
    c: usize,

    /// Number of skeleton rows (defaults to --c).
    #[arg(long = "r")]
    r: Option<usize>,

    /// Selection strategy.
    #[arg(long, value_parser = ["pmss", "random", "inverse-norm"], default_value = "pmss")]
    strategy: String,
}

#[derive(Args)]
struct DecomposeArgs {
    /// Matrix file (binary or CSV; sniffed by content).
    #[arg(long)]
    matrix: PathBuf,

    /// Number of skeleton columns.
    #[arg(long = "c")]
    c: usize,

    /// Number of skeleton rows (defaults to --c).
    #[arg(long = "r")]
    r: Option<usize>,

    /// Selection strategy.
    #[arg(long, value_parser = ["pmss", "random", "inverse-norm"], default_value = "pmss")]
    strategy: String,

    /// Decomposition to evaluate.
    #[arg(long, value_parser = ["cur", "col-id", "row-id", "two-sided"])]
    method: String,

    /// Also write the reconstructed matrix to <out>.approx.<format>.
    #[arg(long)]
    dump_approx: bool,
}

#[derive(Args)]
struct TrainArgs {
    /// Base weight matrix file.
    #[arg(long)]
    base: PathBuf,

    /// Adapter family.
    #[arg(long, value_parser = ["pmss", "lora"], default_value = "pmss")]
    adapter: String,

    /// Skeleton columns (pmss adapter only).
    #[arg(long = "c")]
    c: Option<usize>,

    /// Skeleton rows (pmss adapter only; defaults to --c).
    #[arg(long = "r")]
    r: Option<usize>,

    /// LoRA rank (lora adapter only).
    #[arg(long)]
    rank: Option<usize>,

    /// Adapter scale numerator (defaults to max(c, r) for pmss and to the
    /// rank for lora, making the effective scale 1).
    #[arg(long)]
    alpha: Option<f64>,

    /// Skeleton selection strategy (pmss adapter only).
    #[arg(long, value_parser = ["pmss", "random", "inverse-norm"], default_value = "pmss")]
    strategy: String,

    /// Rank of the true update the teacher applies.
    #[arg(long, default_value_t = 2)]
    k_true: usize,

    /// Frobenius norm of the true update.
    #[arg(long, default_value_t = 1.0)]
    delta_norm: f64,

    /// Standard deviation of target noise.
    #[arg(long, default_value_t = 0.0)]
    noise_std: f64,

    /// Optimization steps.
    #[arg(long, default_value_t = 100)]
    steps: usize,

    /// Learning rate.
    #[arg(long, default_value_t = 1e-2)]
    lr: f64,

    /// Optimizer.
    #[arg(long, value_parser = ["sgd", "adamw"], default_value = "sgd")]
    optimizer: String,

    /// Samples per step.
    #[arg(long, default_value_t = 32)]
    batch_size: usize,

    /// Decoupled weight decay.
    #[arg(long, default_value_t = 0.0)]
    weight_decay: f64,

    /// Learning-rate schedule.
    #[arg(long, value_parser = ["constant", "linear"], default_value = "constant")]
    lr_schedule: String,

    /// Draw a new batch each step or reuse the first one.
    #[arg(long, value_parser = ["fresh", "fixed"], default_value = "fresh")]
    batch_mode: String,
}

#[derive(Args)]
struct BenchArgs {
    /// Rows of the generated matrices.
    #[arg(long = "m")]
    m: usize,

    /// Columns of the generated matrices.
    #[arg(long = "n")]
    n: usize,

    /// Number of leading singular values forming the spectrum break.
    #[arg(long)]
    rank: usize,

    /// Number of skeleton columns.
    #[arg(long = "c")]
    c: usize,

    /// Number of skeleton rows (defaults to --c).
    #[arg(long = "r")]
    r: Option<usize>,

    /// Number of seeded matrices to bench (seeds start at --seed).
    #[arg(long, default_value_t = 1)]
    seeds: u64,

    /// Singular-value profile of the generated matrices.
    #[arg(long, value_parser = ["dominant", "flat"], default_value = "dominant")]
    spectrum: String,
}

#[derive(Args)]
struct ParamcountArgs {
    /// Rows of each adapted matrix.
    #[arg(long = "m")]
    m: u64,

    /// Columns of each adapted matrix.
    #[arg(long = "n")]
    n: u64,

    /// Number of adapted layers.
    #[arg(long)]
    layers: u64,

    /// Budget formula to apply.
    #[arg(long, value_parser = ["lora", "pmss"])]
    method: String,

    /// LoRA rank (lora method only).
    #[arg(long)]
    rank: Option<u64>,

    /// Skeleton columns (pmss method only).
    #[arg(long = "c")]
    c: Option<u64>,

    /// Skeleton rows (pmss method only; defaults to --c).
    #[arg(long = "r")]
    r: Option<u64>,

    /// Total model parameters (the percentage denominator).
    #[arg(long)]
    total: u64,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        // Help and version exit 0 here; genuine usage errors exit 2.
        Err(err) => err.exit(),
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Parameter(_) | Error::NonFinite(_) | Error::Contract(_) => 2,
        Error::Io(_) | Error::Format(_) => 3,
        Error::Degenerate { .. } | Error::NonConvergence { .. } => 4,
        Error::Diverged { .. } => 5,
    }
}

fn run(cli: Cli) -> Result<()> {
    let format = MatrixFormat::from_str(&cli.format)?;
    let ctx = Context { seed: cli.seed, format, out: cli.out, json: cli.json };
    match cli.command {
        Command::Select(args) => cmd_select(&ctx, args),
        Command::Decompose(args) => cmd_decompose(&ctx, args),
        Command::Train(args) => cmd_train(&ctx, args),
        Command::Bench(args) => cmd_bench(&ctx, args),
        Command::Paramcount(args) => cmd_paramcount(&ctx, args),
    }
}

/// Resolved global flags.
struct Context {
    seed: u64,
    format: MatrixFormat,
    out: Option<PathBuf>,
    json: bool,
}

impl Context {
    fn out_prefix(&self, needed_for: &str) -> Result<&Path> {
        self.out
            .as_deref()
            .ok_or_else(|| Error::Parameter(format!("--out is required to write {needed_for}")))
    }

    fn matrix_extension(&self) -> &'static str {
        match self.format {
            MatrixFormat::Dmat => "dmat",
            MatrixFormat::Csv => "csv",
        }
    }
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut name = prefix.as_os_str().to_os_string();
    name.push(suffix);
    PathBuf::from(name)
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Format(format!("report serialization failed: {e}")))?;
    println!("{text}");
    Ok(())
}

#[derive(Serialize)]
struct SelectSummary {
    shape: (usize, usize),
    strategy: SelectionStrategy,
    c: usize,
    r: usize,
    seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pivot_warning: Option<String>,
    files: Vec<String>,
}

fn cmd_select(ctx: &Context, args: SelectArgs) -> Result<()> {
    let strategy = SelectionStrategy::from_str(&args.strategy)?;
    let r = args.r.unwrap_or(args.c);
    let w = read_matrix(&args.matrix)?;
    let skel = select_with(&w, strategy, args.c, r, ctx.seed)?;

    let prefix = ctx.out_prefix("the index files")?;
    let col_path = with_suffix(prefix, ".J.idx");
    let row_path = with_suffix(prefix, ".K.idx");
    write_index_file(
        &col_path,
        &IndexFile {
            axis: Axis::Col,
            indices: skel.col_indices.clone(),
            strategy,
            seed: skel.seed,
        },
    )?;
    write_index_file(
        &row_path,
        &IndexFile {
            axis: Axis::Row,
            indices: skel.row_indices.clone(),
            strategy,
            seed: skel.seed,
        },
    )?;

    if let Some(warning) = &skel.pivot_warning {
        eprintln!("warning: {warning}");
    }
    // The summary is JSON by contract, in either output mode.
    print_json(&SelectSummary {
        shape: skel.source_shape,
        strategy,
        c: skel.c(),
        r: skel.r(),
        seed: skel.seed,
        pivot_warning: skel.pivot_warning.clone(),
        files: vec![col_path.display().to_string(), row_path.display().to_string()],
    })
}

fn parse_method(s: &str) -> Result<ApproxMethod> {
    match s {
        "cur" => Ok(ApproxMethod::Cur),
        "col-id" => Ok(ApproxMethod::ColumnId),
        "row-id" => Ok(ApproxMethod::RowId),
        "two-sided" => Ok(ApproxMethod::TwoSidedId),
        other => Err(Error::Parameter(format!("unknown decomposition method '{other}'"))),
    }
}

/// Runs the requested decomposition; the reconstruction is only
/// materialized when the caller asked for a dump.
fn run_decomposition(
    w: &DenseMatrix,
    skel: &SkeletonIndices,
    method: ApproxMethod,
    want_approx: bool,
) -> Result<(ApproxReport, Option<DenseMatrix>)> {
    match method {
        ApproxMethod::ColumnId => {
            let (x_coeff, report) = column_id(w, skel)?;
            let approx = want_approx
                .then(|| -> Result<DenseMatrix> {
                    Ok(w.select_columns(&skel.cols_zero_based())?.matmul(&x_coeff))
                })
                .transpose()?;
            Ok((report, approx))
        }
        ApproxMethod::RowId => {
            let (z_coeff, report) = row_id(w, skel)?;
            let approx = want_approx
                .then(|| -> Result<DenseMatrix> {
                    Ok(z_coeff.matmul(&w.select_rows(&skel.rows_zero_based())?))
                })
                .transpose()?;
            Ok((report, approx))
        }
        ApproxMethod::TwoSidedId => {
            let (factors, report) = two_sided_id(w, skel)?;
            Ok((report, want_approx.then(|| factors.approx())))
        }
        ApproxMethod::Cur => {
            let (u_opt, report) = cur_optimal(w, skel)?;
            let approx = want_approx
                .then(|| -> Result<DenseMatrix> {
                    let c_mat = w.select_columns(&skel.cols_zero_based())?;
                    let r_mat = w.select_rows(&skel.rows_zero_based())?;
                    Ok(c_mat.matmul(&u_opt).matmul(&r_mat))
                })
                .transpose()?;
            Ok((report, approx))
        }
    }
}

fn cmd_decompose(ctx: &Context, args: DecomposeArgs) -> Result<()> {
    let strategy = SelectionStrategy::from_str(&args.strategy)?;
    let method = parse_method(&args.method)?;
    let r = args.r.unwrap_or(args.c);
    let w = read_matrix(&args.matrix)?;
    let skel = select_with(&w, strategy, args.c, r, ctx.seed)?;

    let (report, approx) = run_decomposition(&w, &skel, method, args.dump_approx)?;
    if let Some(approx) = approx {
        let prefix = ctx.out_prefix("the reconstructed matrix")?;
        let path = with_suffix(prefix, &format!(".approx.{}", ctx.matrix_extension()));
        write_matrix(&path, &approx, ctx.format)?;
        eprintln!("wrote {}", path.display());
    }

    if ctx.json {
        print_json(&report)
    } else {
        println!("method:    {}", report.method);
        println!("abs_error: {:.6e}", report.abs_error);
        println!("rel_error: {:.6e}", report.rel_error);
        println!("svd_floor: {:.6e}", report.svd_floor);
        println!("ratio:     {:.6}", report.ratio);
        Ok(())
    }
}

struct BuiltAdapter {
    trainable: TrainableAdapter,
    label: String,
}

fn build_adapter(ctx: &Context, args: &TrainArgs, base: DenseMatrix) -> Result<BuiltAdapter> {
    match args.adapter.as_str() {
        "pmss" => {
            if args.rank.is_some() {
                return Err(Error::Parameter(
                    "--rank configures the lora adapter; the pmss adapter takes --c/--r".into(),
                ));
            }
            let c = args.c.ok_or_else(|| {
                Error::Parameter("the pmss adapter requires --c (and optionally --r)".into())
            })?;
            let r = args.r.unwrap_or(c);
            let alpha = args.alpha.unwrap_or(c.max(r) as f64);
            let strategy = SelectionStrategy::from_str(&args.strategy)?;
            let adapter = PmssAdapter::init(base, strategy, c, r, alpha, ctx.seed)?;
            let label = format!("pmss (strategy {strategy}, c {c}, r {r}, alpha {alpha})");
            Ok(BuiltAdapter { trainable: TrainableAdapter::Pmss(adapter), label })
        }
        "lora" => {
            if args.c.is_some() || args.r.is_some() {
                return Err(Error::Parameter(
                    "--c/--r configure the pmss adapter; the lora adapter takes --rank".into(),
                ));
            }
            let rank = args
                .rank
                .ok_or_else(|| Error::Parameter("the lora adapter requires --rank".into()))?;
            let alpha = args.alpha.unwrap_or(rank as f64);
            let adapter = LoraAdapter::init(base, rank, alpha, ctx.seed)?;
            let label = format!("lora (rank {rank}, alpha {alpha})");
            Ok(BuiltAdapter { trainable: TrainableAdapter::Lora(adapter), label })
        }
        other => Err(Error::Parameter(format!("unknown adapter '{other}'"))),
    }
}

fn cmd_train(ctx: &Context, args: TrainArgs) -> Result<()> {
    let base = read_matrix(&args.base)?;
    let task =
        SyntheticTask::with_base(base.clone(), args.k_true, args.delta_norm, args.noise_std, ctx.seed)?;
    let built = build_adapter(ctx, &args, base)?;
    let mut trainable = built.trainable;

    let config = TrainConfig {
        optimizer: Optimizer::from_str(&args.optimizer)?,
        learning_rate: args.lr,
        steps: args.steps,
        batch_size: args.batch_size,
        weight_decay: args.weight_decay,
        lr_schedule: LrSchedule::from_str(&args.lr_schedule)?,
        batch_mode: BatchMode::from_str(&args.batch_mode)?,
        seed: ctx.seed,
    };
    let report = train(&mut trainable, &task, &config)?;

    let prefix = ctx.out_prefix("the checkpoint and sidecar matrices")?;
    let mut files = Vec::new();
    if let TrainableAdapter::Pmss(adapter) = &trainable {
        let path = with_suffix(prefix, ".pmsa");
        write_checkpoint(&path, &Checkpoint::from_adapter(adapter))?;
        files.push(path);
    }
    let ext = ctx.matrix_extension();
    let m_t_path = with_suffix(prefix, &format!(".m_t.{ext}"));
    write_matrix(&m_t_path, &report.m_t_accum, ctx.format)?;
    files.push(m_t_path);
    let delta_path = with_suffix(prefix, &format!(".delta_w.{ext}"));
    write_matrix(&delta_path, &report.delta_w, ctx.format)?;
    files.push(delta_path);

    if ctx.json {
        print_json(&report)?;
    } else {
        print_train_text(&built.label, &config, &report);
    }
    for file in files {
        eprintln!("wrote {}", file.display());
    }
    Ok(())
}

fn print_train_text(label: &str, config: &TrainConfig, report: &TrainReport) {
    println!("adapter:        {label}");
    println!(
        "run:            {} steps, lr {}, batch {}, {} batches, {} schedule",
        config.steps, config.learning_rate, config.batch_size, config.batch_mode,
        config.lr_schedule
    );
    match (report.loss_history.first(), report.loss_history.last()) {
        (Some(first), Some(last)) => {
            println!("loss:           {first:.6e} -> {last:.6e}");
        }
        _ => println!("loss:           no steps taken"),
    }
    println!("effective_rank: {}", report.effective_rank);
    if let Some(res) = &report.subspace_residuals {
        println!("subspace:       column {:.3e}, row {:.3e}", res.column, res.row);
    }
    if let Some(residual) = report.identity_residual {
        println!("identity_residual: {residual:.6e}");
    }
}

fn cmd_bench(ctx: &Context, args: BenchArgs) -> Result<()> {
    let spectrum = Spectrum::from_str(&args.spectrum)?;
    let r = args.r.unwrap_or(args.c);
    if args.seeds == 0 {
        return Err(Error::Parameter("--seeds must be positive".into()));
    }
    let strategies =
        [SelectionStrategy::Pmss, SelectionStrategy::Random, SelectionStrategy::InverseNorm];

    // One fresh matrix per seed; every strategy sees the same matrix and
    // the stochastic ones reuse the seed for their draws.
    let mut rows: Vec<QualityRow> = Vec::new();
    for offset in 0..args.seeds {
        let seed = ctx.seed + offset;
        let w = make_spectrum_matrix(args.m, args.n, args.rank, spectrum, seed)?;
        for strategy in strategies {
            let outcome = select_with(&w, strategy, args.c, r, seed)
                .and_then(|skel| cur_optimal(&w, &skel).map(|(_, report)| report));
            let (report, error) = match outcome {
                Ok(report) => (Some(report), None),
                Err(err) => (None, Some(err.to_string())),
            };
            rows.push(QualityRow { strategy, seed, report, error });
        }
    }
    let summary = summarize(&rows, &strategies);
    let report = QualityReport { rows, summary };

    if ctx.json {
        print_json(&report)
    } else {
        println!(
            "{:<14} {:>14} {:>14} {:>14} {:>9}",
            "strategy", "mean_rel_err", "min_rel_err", "max_rel_err", "failures"
        );
        for line in &report.summary {
            println!(
                "{:<14} {:>14.6e} {:>14.6e} {:>14.6e} {:>9}",
                line.strategy.to_string(),
                line.mean_rel_error,
                line.min_rel_error,
                line.max_rel_error,
                line.failures
            );
        }
        Ok(())
    }
}

#[derive(Serialize)]
struct ParamcountReport {
    #[serde(flatten)]
    budget: BudgetReport,
    /// Square core size at which the skeleton adapter's per-layer budget
    /// matches this LoRA rank; only meaningful for the lora method.
    #[serde(skip_serializing_if = "Option::is_none")]
    equivalent_rank: Option<f64>,
}

fn cmd_paramcount(ctx: &Context, args: ParamcountArgs) -> Result<()> {
    let method = match args.method.as_str() {
        "lora" => {
            if args.c.is_some() || args.r.is_some() {
                return Err(Error::Parameter(
                    "--c/--r configure the pmss method; lora takes --rank".into(),
                ));
            }
            let rank = args
                .rank
                .ok_or_else(|| Error::Parameter("the lora method requires --rank".into()))?;
            BudgetMethod::Lora { rank }
        }
        "pmss" => {
            if args.rank.is_some() {
                return Err(Error::Parameter(
                    "--rank configures the lora method; pmss takes --c/--r".into(),
                ));
            }
            let c = args
                .c
                .ok_or_else(|| Error::Parameter("the pmss method requires --c".into()))?;
            BudgetMethod::Pmss { c, r: args.r.unwrap_or(c) }
        }
        other => return Err(Error::Parameter(format!("unknown budget method '{other}'"))),
    };

    let budget = param_budget(args.m, args.n, args.layers, method, args.total)?;
    let equivalent = match method {
        BudgetMethod::Lora { rank } => Some(equivalent_rank(args.m, args.n, rank)),
        BudgetMethod::Pmss { .. } => None,
    };
    let report = ParamcountReport { budget, equivalent_rank: equivalent };

    if ctx.json {
        print_json(&report)
    } else {
        match report.budget.method {
            BudgetMethod::Lora { rank } => println!("method:  lora (rank {rank})"),
            BudgetMethod::Pmss { c, r } => println!("method:  pmss (c {c}, r {r})"),
        }
        println!("theta:   {}", report.budget.theta);
        // Display rounds to the conventional three decimals; the JSON
        // report always carries the raw percentage.
        println!("percent: {:.3}", report.budget.percent);
        if let Some(rank) = report.equivalent_rank {
            println!("equivalent_rank: {rank:.3}");
        }
        Ok(())
    }
}
