use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use geoaudit::bundle::Dtype;
use geoaudit_cli::{
    cmd_bounds, cmd_detector_eval, cmd_detector_train, cmd_gate, cmd_regions, cmd_score, load, CliError, FileConfig,
    Format, RegionOptions, ScoreOptions,
};

#[derive(Parser)]
#[command(name = "geoaudit", version, about = "Audit the feature-space geometry of a linear classifier head")]
struct Cli {
    /// JSON file with default option values; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads for per-sample work (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Geometry profile and ambiguity score of every evaluation sample.
    Score(ScoreArgs),
    /// Classify or abstain for every evaluation sample.
    Gate(ScoreArgs),
    /// Confidence bounds from the head's weight rows.
    Bounds {
        #[command(flatten)]
        input: BundleArgs,
        /// Write the bound curves as CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Boundary volumes and high-confidence fractions of the domain.
    Regions(RegionArgs),
    /// Train or evaluate the undesirable-input detector.
    #[command(subcommand)]
    Detector(DetectorCommand),
}

#[derive(Args)]
struct BundleArgs {
    /// Bundle directory.
    #[arg(long)]
    bundle: PathBuf,
    /// Read binary matrices as this dtype instead of the one in meta.json.
    #[arg(long, value_parser = parse_dtype)]
    dtype: Option<Dtype>,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Jsonl,
    Csv,
}

#[derive(Args)]
struct ScoreArgs {
    #[command(flatten)]
    input: BundleArgs,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    eps_bar: Option<f64>,
    /// Abstention threshold on the ambiguity score.
    #[arg(long, allow_hyphen_values = true)]
    tau: Option<f64>,
    /// Calibrate the threshold as this percentile of training scores.
    #[arg(long)]
    percentile: Option<f64>,
    #[arg(long, value_enum, default_value = "jsonl")]
    format: FormatArg,
}

#[derive(Args)]
struct RegionArgs {
    #[command(flatten)]
    input: BundleArgs,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Confidence level for the high-confidence and overconfident regions.
    #[arg(long)]
    tau_conf: Option<f64>,
    /// Outward offset of the training box.
    #[arg(long)]
    delta_h: Option<f64>,
    #[arg(long)]
    mc_samples: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Skip boundary vertex enumeration.
    #[arg(long)]
    no_vertices: bool,
}

#[derive(Subcommand)]
enum DetectorCommand {
    /// Fit on profile files of undesirable and normal samples.
    Train {
        #[arg(long)]
        positive: PathBuf,
        #[arg(long)]
        negative: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        lambda: Option<f64>,
    },
    /// Report AUROC, FPR at 95% TPR and accuracy.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        positive: PathBuf,
        #[arg(long)]
        negative: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_dtype(s: &str) -> Result<Dtype, String> {
    s.parse()
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<(), CliError> {
    match out {
        Some(p) => std::fs::write(p, bytes).map_err(|e| CliError::Input(format!("{}: {e}", p.display()))),
        None => {
            use std::io::Write;
            std::io::stdout()
                .write_all(bytes)
                .map_err(|e| CliError::Compute(format!("stdout: {e}")))
        }
    }
}

fn score_options(a: &ScoreArgs, f: &FileConfig) -> ScoreOptions {
    let d = ScoreOptions::default();
    ScoreOptions {
        epsilon: a.epsilon.or(f.epsilon).unwrap_or(d.epsilon),
        alpha: a.alpha.or(f.alpha).unwrap_or(d.alpha),
        eps_bar: a.eps_bar.or(f.eps_bar).unwrap_or(d.eps_bar),
        tau: a.tau.or(if a.percentile.is_some() { None } else { f.tau }),
        percentile: a.percentile.or(f.percentile),
        format: match a.format {
            FormatArg::Jsonl => Format::Jsonl,
            FormatArg::Csv => Format::Csv,
        },
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let file = match &cli.config {
        Some(p) => FileConfig::read(p)?,
        None => FileConfig::default(),
    };
    if let Some(t) = cli.threads.or(file.threads) {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::Compute(e.to_string()))?;
    }
    let dtype = |b: &BundleArgs| b.dtype.or(file.dtype);
    match cli.command {
        Command::Score(a) => {
            let bundle = load(&a.input.bundle, dtype(&a.input))?;
            emit(a.out.as_deref(), &cmd_score(&bundle, &score_options(&a, &file))?)
        }
        Command::Gate(a) => {
            let bundle = load(&a.input.bundle, dtype(&a.input))?;
            emit(a.out.as_deref(), &cmd_gate(&bundle, &score_options(&a, &file))?)
        }
        Command::Bounds { input, out } => {
            let bundle = load(&input.bundle, dtype(&input))?;
            let b = cmd_bounds(&bundle)?;
            match out {
                Some(p) => {
                    emit(None, b.report.as_bytes())?;
                    emit(Some(&p), b.curves_csv.as_bytes())
                }
                None => emit(None, format!("{}\n{}", b.report, b.curves_csv).as_bytes()),
            }
        }
        Command::Regions(a) => {
            let seed = a
                .seed
                .or(file.seed)
                .ok_or_else(|| CliError::Input("regions needs --seed".into()))?;
            let bundle = load(&a.input.bundle, dtype(&a.input))?;
            let d = RegionOptions::default();
            let opts = RegionOptions {
                tau_conf: a.tau_conf.or(file.tau_conf).unwrap_or(d.tau_conf),
                delta_h: a.delta_h.or(file.delta_h).unwrap_or(d.delta_h),
                mc_samples: a.mc_samples.or(file.mc_samples).unwrap_or(d.mc_samples),
                seed,
                enumerate_vertices: !a.no_vertices,
            };
            let bytes = cmd_regions(&bundle, &opts)?;
            emit(a.out.as_deref(), &bytes)
        }
        Command::Detector(DetectorCommand::Train {
            positive,
            negative,
            out,
            lambda,
        }) => emit(out.as_deref(), &cmd_detector_train(&positive, &negative, lambda.or(file.lambda))?),
        Command::Detector(DetectorCommand::Eval {
            model,
            positive,
            negative,
            out,
        }) => emit(out.as_deref(), &cmd_detector_eval(&model, &positive, &negative)?),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { geoaudit_cli::EXIT_INPUT } else { 0 };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
