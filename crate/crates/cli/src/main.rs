use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use ldm::analysis::{accuracy, compute_margins, cumulative_curve_csv};
use ldm::data::{format_real, Label, LabeledDataset};
use ldm::model_file::ModelFile;
use ldm::model_selection::{cross_validate_with, CvSettings, ModelFamily, SearchGrid};
use ldm::pipeline::{train_model, KernelChoice, SolverKind, TrainOptions};
use ldm::LdmError;

#[derive(Parser)]
#[command(name = "ldm", version, about = "Large margin distribution machine")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write it to a file.
    Train(TrainArgs),
    /// Predict labels (and optionally scores) for a data file.
    Predict(PredictArgs),
    /// Grid search by k-fold cross-validation.
    Cv(CvArgs),
    /// Margin statistics and the cumulative margin curve.
    Margins(MarginsArgs),
    /// Accuracy of a predictions file against labelled data.
    Eval(EvalArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Solver {
    Kernel,
    Linear,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Kernel {
    Linear,
    Rbf,
}

#[derive(Args)]
struct TrainArgs {
    /// Training data in sparse `label idx:value ...` format.
    data: PathBuf,
    #[arg(long, value_enum, default_value = "kernel")]
    solver: Solver,
    #[arg(long, value_enum, default_value = "linear")]
    kernel: Kernel,
    /// Absolute RBF width.
    #[arg(long, allow_negative_numbers = true, conflicts_with = "width_factor")]
    width: Option<f64>,
    /// RBF width as a multiple of the mean pairwise distance of the scaled
    /// training data.
    #[arg(long, allow_negative_numbers = true)]
    width_factor: Option<f64>,
    #[arg(long, allow_negative_numbers = true, default_value_t = 10.0)]
    c: f64,
    #[arg(long, allow_negative_numbers = true, default_value_t = 0.0625)]
    lambda1: f64,
    #[arg(long, allow_negative_numbers = true, default_value_t = 0.0625)]
    lambda2: f64,
    /// Epoch limit (kernel, default 1000) or epoch count (linear, default 5).
    #[arg(long)]
    epochs: Option<usize>,
    /// KKT tolerance of the kernel solver.
    #[arg(long, allow_negative_numbers = true, default_value_t = 1e-3)]
    tol: f64,
    /// Initial step size of the linear solver; calibrated when absent.
    #[arg(long, allow_negative_numbers = true)]
    eta0: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Train on the features as given instead of scaling them to [0, 1].
    #[arg(long)]
    no_normalize: bool,
    #[arg(long)]
    model_out: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    data: PathBuf,
    #[arg(long)]
    model: PathBuf,
    /// Append a tab and the raw score to each line.
    #[arg(long)]
    scores: bool,
    /// Write here instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct CvArgs {
    data: PathBuf,
    #[arg(long, value_enum, default_value = "kernel")]
    solver: Solver,
    #[arg(long, value_enum, default_value = "linear")]
    kernel: Kernel,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Comma-separated C values.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    c_grid: Option<Vec<f64>>,
    /// Comma-separated values searched for both lambda1 and lambda2.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    lambda_grid: Option<Vec<f64>>,
    /// Comma-separated RBF width multipliers.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    width_grid: Option<Vec<f64>>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long, allow_negative_numbers = true, default_value_t = 1e-3)]
    tol: f64,
    /// Per-fold accuracy log (CSV).
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Args)]
struct MarginsArgs {
    data: PathBuf,
    #[arg(long)]
    model: PathBuf,
    /// Cumulative margin curve output (CSV).
    #[arg(long)]
    csv: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    data: PathBuf,
    /// Output of `ldm predict`.
    #[arg(long)]
    predictions: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Train(a) => train(a),
        Command::Predict(a) => predict(a),
        Command::Cv(a) => cv(a),
        Command::Margins(a) => margins(a),
        Command::Eval(a) => eval(a),
    };
    match result {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &LdmError) -> u8 {
    match e {
        LdmError::InvalidParameter(_) => 1,
        LdmError::Parse { .. }
        | LdmError::TooManyLabels { .. }
        | LdmError::DegenerateData(_)
        | LdmError::LengthMismatch { .. }
        | LdmError::ModelFormat { .. }
        | LdmError::Io(_) => 2,
        LdmError::Factorization { .. } | LdmError::TooLarge { .. } | LdmError::Diverged(_) => 3,
    }
}

fn read_data(path: &Path) -> ldm::Result<LabeledDataset> {
    LabeledDataset::read_file(path)
}

fn bad(msg: impl Into<String>) -> LdmError {
    LdmError::InvalidParameter(msg.into())
}

fn train(a: TrainArgs) -> ldm::Result<String> {
    let raw = read_data(&a.data)?;
    let kernel = match (a.kernel, a.width) {
        (Kernel::Linear, _) => KernelChoice::Linear,
        (Kernel::Rbf, Some(w)) => KernelChoice::RbfWidth(w),
        (Kernel::Rbf, None) => KernelChoice::RbfFactor(a.width_factor.unwrap_or(1.0)),
    };
    let opts = TrainOptions {
        solver: match a.solver {
            Solver::Kernel => SolverKind::Kernel,
            Solver::Linear => SolverKind::Linear,
        },
        kernel,
        c: a.c,
        lambda1: a.lambda1,
        lambda2: a.lambda2,
        epochs: a.epochs,
        tolerance: a.tol,
        eta0: a.eta0,
        seed: a.seed,
        normalize: !a.no_normalize,
    };
    let (file, report) = train_model(&raw, &opts)?;
    file.save(&a.model_out)?;
    Ok(format!("{}\n", report.summary()))
}

fn predict(a: PredictArgs) -> ldm::Result<String> {
    let file = ModelFile::load(&a.model)?;
    let d = read_data(&a.data)?;
    let mut out = String::new();
    for x in d.instances() {
        let (label, score) = file.model.predict(x);
        if a.scores {
            let _ = writeln!(out, "{label}\t{}", format_real(score));
        } else {
            let _ = writeln!(out, "{label}");
        }
    }
    match a.output {
        Some(p) => {
            std::fs::write(p, out)?;
            Ok(String::new())
        }
        None => Ok(out),
    }
}

fn cv(a: CvArgs) -> ldm::Result<String> {
    let d = read_data(&a.data)?;
    let family = match (a.solver, a.kernel) {
        (Solver::Kernel, Kernel::Linear) => ModelFamily::KernelLinear,
        (Solver::Kernel, Kernel::Rbf) => ModelFamily::KernelRbf,
        (Solver::Linear, Kernel::Linear) => ModelFamily::Linear,
        (Solver::Linear, Kernel::Rbf) => return Err(bad("the linear solver only supports --kernel linear")),
    };
    let default = SearchGrid::default();
    let grid = SearchGrid {
        c_values: a.c_grid.unwrap_or(default.c_values),
        lambda_values: a.lambda_grid.unwrap_or(default.lambda_values),
        width_multipliers: a.width_grid.unwrap_or(default.width_multipliers),
    };
    let mut settings = CvSettings { k: a.folds, seed: a.seed, ..Default::default() };
    settings.kernel.tolerance = a.tol;
    settings.kernel.seed = a.seed;
    settings.linear.seed = a.seed;
    if let Some(e) = a.epochs {
        settings.kernel.max_epochs = e;
        settings.linear.epochs = e;
    }
    let result = cross_validate_with(&d, family, &grid, &settings, &mut |_| {})?;
    if let Some(p) = &a.log {
        std::fs::write(p, result.log_csv())?;
    }
    let mut out = String::from("c\tlambda1\tlambda2\twidth\tmean_accuracy\n");
    for (c, acc) in result.configs.iter().zip(&result.mean_accuracy) {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{acc:.6}",
            format_real(c.c),
            format_real(c.lambda1),
            format_real(c.lambda2),
            format_real(c.width)
        );
    }
    let _ = writeln!(out, "{}", result.best.best_line());
    Ok(out)
}

fn margins(a: MarginsArgs) -> ldm::Result<String> {
    let file = ModelFile::load(&a.model)?;
    let d = read_data(&a.data)?;
    let scores: Vec<f64> = d.instances().iter().map(|x| file.model.score(x)).collect();
    let stats = compute_margins(&scores, d.labels())?;
    std::fs::write(&a.csv, cumulative_curve_csv(&stats))?;
    Ok(format!(
        "mean={} variance={} min={}\n",
        format_real(stats.mean),
        format_real(stats.variance),
        format_real(stats.minimum)
    ))
}

fn read_predictions(path: &Path) -> ldm::Result<Vec<Label>> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let Some(tok) = line.split_whitespace().next() else { continue };
        out.push(match tok {
            "+1" | "1" => Label::Positive,
            "-1" => Label::Negative,
            _ => {
                return Err(LdmError::Parse {
                    line: n + 1,
                    message: format!("expected +1 or -1, got {tok:?}"),
                })
            }
        });
    }
    Ok(out)
}

fn eval(a: EvalArgs) -> ldm::Result<String> {
    let pred = read_predictions(&a.predictions)?;
    let d = read_data(&a.data)?;
    Ok(format!("accuracy={:.6}\n", accuracy(&pred, d.labels())?))
}
