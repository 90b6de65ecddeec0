//! The `ufce` command line.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ufce_core::bench::{emit_report, run_rq1, run_rq2, run_rq3, BenchConfig, ReportFormat};
use ufce_core::mi::{rank_pairs, DEFAULT_MI_NEIGHBORS};
use ufce_core::model::{cross_validate, train_logistic, LogisticConfig};

use crate::api::{router, AppState};
use crate::explain::{handle_explain, ExplainRequest};
use crate::registry::{dataset_paths, load_with_schema, Artifacts, ModelFile, Registry, CV_SEED, DATA_DIR_ENV};

#[derive(Debug, Parser)]
#[command(name = "ufce", version, about = "Counterfactual explanations constrained by user feedback")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train the logistic model on a dataset and write it as JSON.
    Train(TrainArgs),
    /// Answer an explain request (JSON file) with a trained model.
    Explain(ExplainArgs),
    /// Rank feature pairs by mutual information.
    MiPairs(MiArgs),
    /// Run an experiment and write report.json, report.csv, report.md and config.json.
    Bench(BenchArgs),
    /// Serve the HTTP API.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
struct DataArgs {
    /// Dataset CSV.
    #[arg(long)]
    data: PathBuf,
    /// Schema descriptor; defaults to `<data stem>.schema.json`.
    #[arg(long)]
    schema: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    out: PathBuf,
    /// Seed for the cross-validation folds.
    #[arg(long, default_value_t = CV_SEED)]
    seed: u64,
}

#[derive(Debug, Args)]
struct ExplainArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    request: PathBuf,
    /// Directory holding `<dataset>.csv` and `<dataset>.schema.json`.
    #[arg(long, env = DATA_DIR_ENV, default_value = "data")]
    data_dir: PathBuf,
    /// Write the response here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct MiArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value_t = DEFAULT_MI_NEIGHBORS)]
    k: usize,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Experiment {
    Rq1,
    Rq2,
    Rq3,
}

#[derive(Debug, Args)]
struct BenchArgs {
    experiment: Experiment,
    /// Dataset id; rq3 runs every dataset in the data directory when omitted.
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, env = DATA_DIR_ENV, default_value = "data")]
    data_dir: PathBuf,
    #[arg(long)]
    pool_size: Option<usize>,
    #[arg(long)]
    repetitions: Option<usize>,
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, env = DATA_DIR_ENV, default_value = "data")]
    data_dir: PathBuf,
    /// Directory of static files served at `/`.
    #[arg(long)]
    static_dir: Option<PathBuf>,
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Core(#[from] ufce_core::UfceError),
    #[error(transparent)]
    Api(#[from] crate::error::ApiError),
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("{0}")]
    Other(String),
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

fn to_json<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("serialisable value") + "\n"
}

/// Parses `argv` and runs the command. Exit codes: 0 success, 1 usage error,
/// 2 runtime error.
pub fn run<I, S>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> ExitCode
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { stdout.write_all(text.as_bytes()) } else { stderr.write_all(text.as_bytes()) };
            return ExitCode::from(code);
        }
    };
    match execute(cli.command, stdout, stderr) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            ExitCode::from(2)
        }
    }
}

fn execute(command: Command, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<(), CliError> {
    match command {
        Command::Train(a) => {
            let ds = load_with_schema(&a.data.data, a.data.schema.as_deref())?;
            let config = LogisticConfig::default();
            let model = train_logistic(&ds, &config)?;
            write(&a.out, &to_json(&ModelFile::from_model(&model, &ds)))?;
            let cv = cross_validate(&ds, 5, a.seed, &config)?;
            let _ = writeln!(
                stdout,
                "trained on {} rows; 5-fold accuracy {:.3} ± {:.3}; model written to {}",
                ds.len(),
                cv.mean_accuracy,
                cv.std_accuracy,
                a.out.display()
            );
        }
        Command::Explain(a) => {
            let req: ExplainRequest =
                serde_json::from_str(&read(&a.request)?).map_err(|source| CliError::Json { path: a.request.clone(), source })?;
            let model_file: ModelFile =
                serde_json::from_str(&read(&a.model)?).map_err(|source| CliError::Json { path: a.model.clone(), source })?;
            let (csv, schema) = dataset_paths(&a.data_dir, &req.dataset);
            let ds = load_with_schema(&csv, Some(&schema))?;
            let model = model_file.into_model(&ds)?;
            let art = Artifacts::with_model(&req.dataset, ds, model, None)?;
            let response = to_json(&handle_explain(&art, &req)?);
            match &a.out {
                Some(path) => write(path, &response)?,
                None => {
                    let _ = stdout.write_all(response.as_bytes());
                }
            }
        }
        Command::MiPairs(a) => {
            let ds = load_with_schema(&a.data.data, a.data.schema.as_deref())?;
            let all: Vec<usize> = (0..ds.dim()).collect();
            let pairs = rank_pairs(&ds, &all, a.k)?;
            let named: Vec<serde_json::Value> = pairs
                .iter()
                .map(|p| {
                    serde_json::json!({
                        "i": ds.schema.features[p.i].name,
                        "j": ds.schema.features[p.j].name,
                        "score": p.score,
                    })
                })
                .collect();
            let _ = stdout.write_all(to_json(&named).as_bytes());
        }
        Command::Bench(a) => bench(a, stdout)?,
        Command::Serve(a) => serve(a, stderr)?,
    }
    Ok(())
}

fn bench(a: BenchArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let registry = Registry::new(&a.data_dir);
    let ids = match (&a.dataset, a.experiment) {
        (Some(id), _) => vec![id.clone()],
        (None, Experiment::Rq3) => registry.list(),
        (None, _) => return Err(CliError::Other("--dataset is required for rq1 and rq2".into())),
    };
    let mut datasets = Vec::new();
    for id in &ids {
        let (csv, schema) = dataset_paths(&a.data_dir, id);
        datasets.push((id.clone(), load_with_schema(&csv, Some(&schema))?));
    }
    let mut config = BenchConfig::default();
    if let Some(n) = a.pool_size {
        config.pool_size = n;
    }
    if let Some(n) = a.repetitions {
        config.repetitions = n;
    }
    let (report, timing) = match a.experiment {
        Experiment::Rq1 => run_rq1(&datasets[0].0, &datasets[0].1, &config, a.seed)?,
        Experiment::Rq2 => run_rq2(&datasets[0].0, &datasets[0].1, &config, a.seed)?,
        Experiment::Rq3 => run_rq3(&datasets, &config, a.seed)?,
    };
    fs::create_dir_all(&a.out).map_err(|source| CliError::Io { path: a.out.clone(), source })?;
    write(&a.out.join("report.json"), &emit_report(&report, ReportFormat::Json)?)?;
    write(&a.out.join("report.csv"), &emit_report(&report, ReportFormat::Csv)?)?;
    write(&a.out.join("report.md"), &emit_report(&report, ReportFormat::Markdown)?)?;
    write(&a.out.join("config.json"), &to_json(&config))?;
    write(&a.out.join("timing.json"), &to_json(&timing))?;
    let _ = stdout.write_all(emit_report(&report, ReportFormat::Markdown)?.as_bytes());
    Ok(())
}

fn serve(a: ServeArgs, stderr: &mut dyn Write) -> Result<(), CliError> {
    let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::Other(e.to_string()))?;
    let state = AppState::new(Registry::new(&a.data_dir));
    let app = router(state, a.static_dir);
    let addr = std::net::SocketAddr::from(([0, 0, 0, 0], a.port));
    let _ = writeln!(stderr, "listening on http://{addr}");
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr).await.map_err(|e| CliError::Other(format!("{addr}: {e}")))?;
        axum::serve(listener, app).await.map_err(|e| CliError::Other(e.to_string()))
    })
}
