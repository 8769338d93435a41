use std::fs;
use std::io::{self, BufWriter, Write};
use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use adlift_core::engine::{Command, EngineError, Experiment, ExperimentConfig, Report, ReportOptions};
use adlift_core::sim::write_log;
use adlift_service::wire::ReportQuery;
use adlift_service::{exit_code, render, router, ApiError, Client, ClientError, Service, Store};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "adlift", version, about = "Creative x audience experiments with Thompson sampling")]
struct Cli {
    /// Output format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Table)]
    format: Format,

    /// Server base URL. Without it, run-to-completion runs in-process.
    #[arg(long, global = true, env = "ADLIFT_SERVER")]
    server: Option<String>,

    #[command(subcommand)]
    command: Cmd,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Format {
    Table,
    Raw,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the HTTP service.
    Serve(ServeArgs),
    /// Create a Draft experiment from a config file.
    Create(ConfigArgs),
    Start(IdArg),
    Pause(IdArg),
    Resume(IdArg),
    Stop(IdArg),
    /// Lifecycle summary of one experiment.
    Status(IdArg),
    /// List experiments.
    List,
    /// Report on the latest completed batch.
    Report(ReportArgs),
    /// Best-probability series, one record per batch.
    History(IdArg),
    /// Record the request to roll out the winning combination.
    ApplyWinner(IdArg),
    /// Create, start and run an experiment until it halts, then print the
    /// final report.
    RunToCompletion(RunArgs),
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, env = "ADLIFT_BIND", default_value = "127.0.0.1:8080")]
    bind: SocketAddr,
    /// Directory for snapshots and logs; state is memory-only without it.
    #[arg(long, env = "ADLIFT_DATA_DIR")]
    data_dir: Option<PathBuf>,
    /// Milliseconds between batches.
    #[arg(long, env = "ADLIFT_TICK_MS", default_value_t = 1000)]
    tick_ms: u64,
}

#[derive(Args)]
struct IdArg {
    #[arg(long)]
    id: String,
}

#[derive(Args)]
struct ConfigArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's experiment_id.
    #[arg(long)]
    id: Option<String>,
    /// Overrides the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    id: String,
    #[command(flatten)]
    opts: ReportFlags,
}

#[derive(Args, Clone, Copy)]
struct ReportFlags {
    /// Credible level.
    #[arg(long)]
    level: Option<f64>,
    /// Monte Carlo draws.
    #[arg(long)]
    draws: Option<usize>,
    /// Report seed; defaults to the experiment seed.
    #[arg(long = "report-seed")]
    report_seed: Option<u64>,
}

impl ReportFlags {
    fn query(self) -> ReportQuery {
        ReportQuery {
            level: self.level,
            draws: self.draws,
            seed: self.report_seed,
        }
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[command(flatten)]
    report: ReportFlags,
    /// Write the impression log (JSON lines) here; in-process runs only.
    #[arg(long)]
    log: Option<PathBuf>,
    /// Poll interval against a server, in milliseconds.
    #[arg(long, default_value_t = 200)]
    poll_ms: u64,
}

/// A failure with the exit code it maps to.
struct Failure {
    code: i32,
    message: String,
}

impl From<ClientError> for Failure {
    fn from(e: ClientError) -> Self {
        Failure {
            code: exit_code(e.http_status()),
            message: e.to_string(),
        }
    }
}

impl From<EngineError> for Failure {
    fn from(e: EngineError) -> Self {
        let api = ApiError::from(e);
        Failure {
            code: exit_code(Some(api.http.as_u16())),
            message: format!("{}: {}", api.code, api.message),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure {
            code: 1,
            message: e.to_string(),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code as u8)
        }
    }
}

fn emit<T: Serialize>(format: Format, value: &T, table: impl FnOnce(&T) -> String) -> Result<(), Failure> {
    let text = match format {
        Format::Raw => serde_json::to_string_pretty(value).expect("serializable") + "\n",
        Format::Table => table(value),
    };
    io::stdout().write_all(text.as_bytes())?;
    Ok(())
}

fn load_config(args: &ConfigArgs) -> Result<ExperimentConfig, Failure> {
    let text = fs::read_to_string(&args.config)
        .map_err(|e| Failure { code: 1, message: format!("{}: {e}", args.config.display()) })?;
    let mut config: ExperimentConfig = serde_json::from_str(&text).map_err(|e| Failure {
        code: exit_code(Some(400)),
        message: format!("{}: {e}", args.config.display()),
    })?;
    if let Some(id) = &args.id {
        config.experiment_id = id.clone();
    }
    if let Some(seed) = args.seed {
        config.scenario.seed = seed;
    }
    Ok(config)
}

fn run(cli: Cli) -> Result<(), Failure> {
    let format = cli.format;
    let client = || Client::new(cli.server.as_deref().unwrap_or("http://127.0.0.1:8080"));
    let lifecycle = |id: &str, command: Command| -> Result<(), Failure> {
        emit(format, &client().command(id, command)?, render::command)
    };
    match &cli.command {
        Cmd::Serve(args) => serve(args),
        Cmd::Create(args) => emit(format, &client().create(&load_config(args)?)?, render::summary),
        Cmd::Start(a) => lifecycle(&a.id, Command::Start),
        Cmd::Pause(a) => lifecycle(&a.id, Command::Pause),
        Cmd::Resume(a) => lifecycle(&a.id, Command::Resume),
        Cmd::Stop(a) => lifecycle(&a.id, Command::Stop),
        Cmd::Status(a) => emit(format, &client().status(&a.id)?, render::summary),
        Cmd::List => emit(format, &client().list()?, render::list),
        Cmd::History(a) => emit(format, &client().history(&a.id)?, render::history),
        Cmd::ApplyWinner(a) => emit(format, &client().apply_winner(&a.id)?, render::winner),
        Cmd::Report(a) => {
            let query = a.opts.query();
            match format {
                // pass the server's payload through untouched
                Format::Raw => emit(format, &client().report_value(&a.id, &query)?, |_| String::new()),
                Format::Table => emit(format, &client().report(&a.id, &query)?, render::report),
            }
        }
        Cmd::RunToCompletion(args) => match &cli.server {
            Some(_) => run_remote(&client(), args, format),
            None => run_local(args, format),
        },
    }
}

fn run_local(args: &RunArgs, format: Format) -> Result<(), Failure> {
    let mut exp = Experiment::new(load_config(&args.config)?)?;
    let mut log = match &args.log {
        Some(path) => Some(BufWriter::new(fs::File::create(path)?)),
        None => None,
    };
    let mut io_err = None;
    exp.run_to_completion(|batch| {
        if let (Some(w), None) = (log.as_mut(), io_err.as_ref()) {
            io_err = write_log(&batch.records, w).err();
        }
    })?;
    if let Some(e) = io_err {
        return Err(e.into());
    }
    if let Some(mut w) = log {
        w.flush()?;
    }
    let q = args.report.query();
    let opts = ReportOptions {
        level: q.level.unwrap_or(ReportOptions::default().level),
        draws: q.draws.unwrap_or(ReportOptions::default().draws),
        seed: q.seed,
    };
    let report = Report::generate(&exp, &opts)?;
    emit(format, &report, render::report)
}

fn run_remote(client: &Client, args: &RunArgs, format: Format) -> Result<(), Failure> {
    if args.log.is_some() {
        return Err(Failure {
            code: 1,
            message: "--log applies to in-process runs; the server keeps its own log".into(),
        });
    }
    let created = client.create(&load_config(&args.config)?)?;
    let id = created.experiment_id;
    client.command(&id, Command::Start)?;
    loop {
        let s = client.status(&id)?;
        let runnable = s.status == adlift_core::engine::Status::Running
            || (s.status == adlift_core::engine::Status::Completed && s.continuing);
        if !runnable {
            break;
        }
        std::thread::sleep(Duration::from_millis(args.poll_ms));
    }
    let report = client.report(&id, &args.report.query())?;
    emit(format, &report, render::report)
}

fn serve(args: &ServeArgs) -> Result<(), Failure> {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(io::stderr)
        .init();
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async {
        let svc = match &args.data_dir {
            Some(dir) => Service::load(Store::open(dir)?)?,
            None => Service::new(None),
        };
        let listener = tokio::net::TcpListener::bind(args.bind).await?;
        tracing::info!(addr = %listener.local_addr()?, tick_ms = args.tick_ms, "listening");
        svc.spawn_scheduler(Duration::from_millis(args.tick_ms.max(1)));
        axum::serve(listener, router(svc))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        Ok(())
    })
}
