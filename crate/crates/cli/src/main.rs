use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use povm_core::experiments::{
    first_run_config, run_experiment, write_sweep, ExperimentSpec, ExportFormat, Task, TrainRecord,
};
use povm_core::training::{train, EvalMode};
use povm_core::Error;
use serde_json::json;

#[derive(Parser)]
#[command(name = "povm", version, about = "Train and evaluate discriminator circuits")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Single training run (run 0 of the first cell); writes the trajectory.
    Train(Common),
    /// Every cell and repetition of an experiment; writes the report.
    Experiment(Common),
    /// A penalty sweep; writes one row per penalty pair.
    Sweep(Common),
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML).
    config: PathBuf,
    /// Top-level seed, replacing the config's.
    #[arg(long)]
    seed: Option<u64>,
    /// Output file; defaults to the config's `output`, else stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// csv or json; defaults to the output extension, else csv.
    #[arg(long)]
    format: Option<String>,
    /// Worker threads for repetitions.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Train from this many measurement shots per evaluation.
    #[arg(long)]
    shots: Option<u64>,
}

struct Failure {
    error: Error,
    completed_iterations: Option<usize>,
}

impl From<Error> for Failure {
    fn from(error: Error) -> Self {
        Self { error, completed_iterations: None }
    }
}

fn load(c: &Common) -> Result<ExperimentSpec, Error> {
    let mut spec = ExperimentSpec::load(&c.config)?;
    if let Some(seed) = c.seed {
        spec.seed = seed;
    }
    if let Some(n) = c.shots {
        match &mut spec.task {
            Task::ShotConvergence { shots, .. } => *shots = vec![n],
            _ => spec.training.mode = Some(EvalMode::Sampled { shots: n }),
        }
        if spec.training.gradient_step.is_none() && !matches!(spec.task, Task::ShotConvergence { .. }) {
            spec.training.gradient_step = Some(1e-2);
        }
    }
    spec.validate()?;
    Ok(spec)
}

fn destination(c: &Common, spec: &ExperimentSpec) -> Result<(Option<PathBuf>, ExportFormat), Error> {
    let out = c.out.clone().or_else(|| spec.output.clone());
    let format = match &c.format {
        Some(f) => f.parse()?,
        None => out.as_deref().and_then(ExportFormat::for_path).unwrap_or(ExportFormat::Csv),
    };
    Ok((out, format))
}

fn emit(out: Option<&Path>, write: impl FnOnce(&mut dyn Write) -> Result<(), Error>) -> Result<(), Error> {
    match out {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(|source| Error::Io { path: dir.into(), source })?;
            }
            let file = std::fs::File::create(path).map_err(|source| Error::Io { path: path.into(), source })?;
            let mut w = std::io::BufWriter::new(file);
            write(&mut w).map_err(|e| match e {
                Error::Format { message, .. } => Error::Format { path: path.into(), message },
                e => e,
            })?;
            w.flush().map_err(|source| Error::Io { path: path.into(), source })
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            write(&mut lock)
        }
    }
}

fn run_train(c: &Common) -> Result<(), Failure> {
    let spec = load(c)?;
    let (out, format) = destination(c, &spec)?;
    let config = first_run_config(&spec, 0)?;
    let result = train(&config).map_err(|e| Failure {
        completed_iterations: e.partial.as_ref().map(|p| p.trajectory.len()),
        error: e.source,
    })?;
    eprintln!(
        "seed {}: J1 {:.6}, train {}, test {}, {:.1}s",
        result.seed,
        result.final_j1,
        result.train_metrics,
        result.test_metrics.unwrap_or_default(),
        result.wall_time_s
    );
    let record = TrainRecord { config, result };
    emit(out.as_deref(), |w| record.write(w, format))?;
    Ok(())
}

fn run_experiment_cmd(c: &Common) -> Result<(), Failure> {
    let spec = load(c)?;
    let (out, format) = destination(c, &spec)?;
    let report = run_experiment(&spec, c.jobs)?;
    for cell in &report.cells {
        match (&cell.aggregate, &cell.error) {
            (Some(a), _) => eprintln!(
                "{}: test mean {} (sd {:.4}/{:.4}/{:.4}), J1 {:.4}",
                cell.label, a.test_mean, a.test_sd.p_suc, a.test_sd.p_err, a.test_sd.p_inc, a.final_j1.mean
            ),
            (None, Some(e)) => eprintln!("{}: failed: {e}", cell.label),
            (None, None) => {}
        }
    }
    emit(out.as_deref(), |w| report.write(w, format))?;
    Ok(())
}

fn run_sweep(c: &Common) -> Result<(), Failure> {
    let spec = load(c)?;
    if !matches!(spec.task, Task::PenaltySweep { .. }) {
        return Err(Error::Config(vec![format!(
            "task.kind: sweep needs a penalty_sweep task, got {}",
            spec.task.kind()
        )])
        .into());
    }
    let (out, format) = destination(c, &spec)?;
    let rows = run_experiment(&spec, c.jobs)?.sweep_rows();
    emit(out.as_deref(), |w| write_sweep(&rows, w, format))?;
    Ok(())
}

fn error_record(f: &Failure) -> serde_json::Value {
    let details = match &f.error {
        Error::Config(items) => items.clone(),
        _ => Vec::new(),
    };
    let mut record = json!({
        "error": {
            "kind": f.error.kind(),
            "message": f.error.to_string(),
            "details": details,
        }
    });
    if let Some(n) = f.completed_iterations {
        record["error"]["completed_iterations"] = json!(n);
    }
    record
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let record =
                json!({ "error": { "kind": "usage", "message": e.kind().to_string(), "details": [e.to_string()] } });
            eprintln!("{record}");
            return ExitCode::from(2);
        }
    };
    let outcome = match &cli.command {
        Command::Train(c) => run_train(c),
        Command::Experiment(c) => run_experiment_cmd(c),
        Command::Sweep(c) => run_sweep(c),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{}", error_record(&f));
            match f.error {
                Error::Config(_) | Error::Format { .. } => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
