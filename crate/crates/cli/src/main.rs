use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use athena_core::engine::{EventLog, RunConfig, SessionStore};
use athena_core::eval::{load_baselines, load_dataset, run_eval, EngineRunner, QueryRunner, RemoteRunner};
use athena_core::llm::{HttpBackend, HttpBackendConfig, ScriptedBackend};
use athena_core::par::ExecutionMode;
use athena_core::tools::{default_registry, Credentials, ToolkitConfig, TransportMode};
use athena_core::{Backend, Engine, EngineConfig, Registry};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "athena", version, about = "Tool-augmented LLM runtime")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Serve the HTTP and event-stream gateway.
    Serve(ServeArgs),
    /// Run a multiple-choice dataset and report accuracy.
    Eval(EvalArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendKind {
    Scripted,
    Http,
}

#[derive(Args)]
struct EngineArgs {
    #[arg(long, value_enum, default_value = "scripted")]
    backend: BackendKind,
    /// Backend script, required for the scripted backend.
    #[arg(long)]
    script: Option<PathBuf>,
    #[arg(long, default_value_t = athena_core::engine::DEFAULT_MAX_ITERATIONS)]
    max_iterations: u32,
    /// Per-call tool timeout in seconds.
    #[arg(long, default_value_t = 30)]
    tool_timeout: u64,
    /// Serve network tool responses from recorded fixtures.
    #[arg(long, conflicts_with = "record")]
    fixtures: Option<PathBuf>,
    /// Call the live services and save every response as a fixture.
    #[arg(long)]
    record: Option<PathBuf>,
    /// Calendar store file; in memory when omitted.
    #[arg(long)]
    calendar: Option<PathBuf>,
    /// Use Wolfram|Alpha instead of the local calculator.
    #[arg(long)]
    remote_calculator: bool,
    /// Register no tools at all.
    #[arg(long)]
    no_tools: bool,
    /// Append tool descriptions to the system prompt.
    #[arg(long)]
    schemas_in_prompt: bool,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    #[arg(long, default_value_t = 8080)]
    port: u16,
    /// Persist sessions and event logs here.
    #[arg(long)]
    data_dir: Option<PathBuf>,
    #[command(flatten)]
    engine: EngineArgs,
}

#[derive(Args)]
struct EvalArgs {
    /// JSON-lines dataset.
    #[arg(long)]
    dataset: PathBuf,
    /// Write the full report as JSON.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Baseline accuracies to print a comparison table against.
    #[arg(long)]
    baselines: Option<PathBuf>,
    /// Items evaluated concurrently; 1 runs sequentially.
    #[arg(long, default_value_t = 4)]
    parallelism: usize,
    /// Send queries to a running gateway instead of an in-process engine.
    #[arg(long)]
    gateway: Option<String>,
    #[command(flatten)]
    engine: EngineArgs,
}

fn build_engine(args: &EngineArgs) -> Result<Engine> {
    let backend: Arc<dyn Backend> = match args.backend {
        BackendKind::Scripted => {
            let path = args.script.as_ref().context("--script is required with the scripted backend")?;
            Arc::new(ScriptedBackend::from_file(path).with_context(|| format!("loading {}", path.display()))?)
        }
        BackendKind::Http => Arc::new(HttpBackend::new(HttpBackendConfig::from_env()?)),
    };
    let transport = match (&args.fixtures, &args.record) {
        (Some(dir), _) => TransportMode::Replay(dir.clone()),
        (None, Some(dir)) => TransportMode::Record(dir.clone()),
        (None, None) => TransportMode::Live,
    };
    let toolkit = ToolkitConfig {
        transport,
        credentials: Credentials::from_env(),
        calendar_path: args.calendar.clone(),
        remote_calculator: args.remote_calculator,
    };
    let registry = if args.no_tools { Registry::empty() } else { default_registry(&toolkit)? };
    let config = EngineConfig {
        run: RunConfig { max_iterations: args.max_iterations, tool_timeout: Duration::from_secs(args.tool_timeout) },
        schemas_in_prompt: args.schemas_in_prompt,
        ..Default::default()
    };
    Ok(Engine::new(Arc::new(registry), backend, config))
}

fn serve(args: ServeArgs) -> Result<()> {
    let mut engine = build_engine(&args.engine)?;
    if let Some(dir) = &args.data_dir {
        engine = engine
            .with_sessions(SessionStore::open(dir.join("sessions"))?)
            .with_event_log(EventLog::new(dir.join("events")));
    }
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind((args.host.as_str(), args.port))
            .await
            .with_context(|| format!("binding {}:{}", args.host, args.port))?;
        log::info!("listening on http://{}", listener.local_addr()?);
        athena_gateway::serve(listener, Arc::new(engine)).await?;
        Ok(())
    })
}

fn eval(args: EvalArgs) -> Result<()> {
    let items = load_dataset(&args.dataset)?;
    if items.is_empty() {
        bail!("{} has no items", args.dataset.display());
    }
    let runner: Box<dyn QueryRunner> = match &args.gateway {
        Some(url) => Box::new(RemoteRunner::new(url)),
        None => Box::new(EngineRunner::new(Arc::new(build_engine(&args.engine)?))),
    };
    let mode = ExecutionMode::from_parallelism(args.parallelism);
    let mut report = run_eval(&items, runner.as_ref(), mode)?;
    if let Some(path) = &args.baselines {
        report.baselines = Some(load_baselines(path)?);
    }

    println!("accuracy: {:.2} ({}/{})", report.accuracy, report.correct(), report.records.len());
    for (subject, acc) in &report.per_subject {
        println!("  {subject}: {acc:.2} of {}", report.subject_counts[subject]);
    }
    let failures = report.records.iter().filter(|r| r.failure.is_some()).count();
    if failures > 0 {
        println!("unanswered: {failures}");
    }
    if let Some(table) = report.table() {
        println!("\n{table}");
    }
    if let Some(path) = &args.report {
        std::fs::write(path, serde_json::to_string_pretty(&report)?)
            .with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Serve(args) => serve(args),
        Command::Eval(args) => eval(args),
    }
}
