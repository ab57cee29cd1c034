use std::ffi::OsString;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::sync::mpsc::sync_channel;
use std::sync::Arc;
use std::time::Duration;

use clap::{Parser, Subcommand};
use serde_json::json;
use tapwise::bench::{load_suite, render_table, run_reference, run_suite, AgentConfig, BenchReport, DocConfig, ModelChoice, Suite};
use tapwise::explorer::{explore, record_demo, DemoCommand, DemoEventRequest, ExplorationConfig, ExploreTermination, DEMO_QUEUE_DEPTH};
use tapwise::kb::KnowledgeStore;
use tapwise::operator::{run_task, RunConfig, Termination};
use tapwise::session::{NullObserver, SessionObserver};
use tracing::info;

use crate::backend::BackendSpec;
use crate::config::{FileConfig, Overrides, Settings};
use crate::service::{self, Factory, NewSession, ServiceState, SessionKind};
use crate::target::Target;
use crate::CliError;

#[derive(Debug, Parser)]
#[command(name = "tapwise", version, about = "Smartphone GUI agent: explore apps, record demos, run tasks, benchmark")]
pub struct Cli {
    /// Config file (TOML). Defaults to ./tapwise.toml when present.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Knowledge store root [env: TAPWISE_KB_ROOT]
    #[arg(long, global = true)]
    pub kb_root: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Explore an app autonomously toward a task and document its elements.
    Explore {
        /// sim:<app id>, sim:<spec.toml> or adb:<serial>:<app id>
        #[arg(long)]
        app: String,
        #[arg(long)]
        task: String,
        #[arg(long, default_value_t = tapwise::explorer::DEFAULT_MAX_STEPS)]
        max_steps: u32,
        /// scripted:<path>, replay:<path>, record:<path> or http
        #[arg(long)]
        backend: Option<String>,
        /// Exploration report path [default: <app id>.exploration.json]
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Record documents from demonstrated actions.
    Demo {
        #[arg(long)]
        app: String,
        #[arg(long)]
        backend: Option<String>,
        /// Serve the session over HTTP at this address instead of reading
        /// events from standard input.
        #[arg(long)]
        serve: Option<String>,
    },
    /// Carry out a task using the knowledge store.
    Run {
        #[arg(long)]
        app: String,
        #[arg(long)]
        task: String,
        #[arg(long, default_value_t = tapwise::operator::DEFAULT_MAX_STEPS)]
        max_steps: u32,
        /// Never consult the knowledge store.
        #[arg(long)]
        no_docs: bool,
        #[arg(long)]
        backend: Option<String>,
        /// Trajectory path [default: <app id>.trajectory.jsonl]
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a task suite and report success rate, reward and steps.
    Bench {
        #[arg(long)]
        suite: PathBuf,
        /// `scripted` replays the suite's own fixtures; anything else is a
        /// model backend as for the other commands.
        #[arg(long, default_value = "scripted")]
        backend: String,
        /// Scripted: none, auto, demo, manual or all. Otherwise: none or store.
        #[arg(long = "docs", default_value = "all")]
        docs: String,
        /// Directory for the JSON reports.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve sessions over HTTP and WebSocket.
    Serve {
        /// Listen address [env: TAPWISE_ADDR] [default: 127.0.0.1:7878]
        #[arg(long)]
        addr: Option<String>,
        #[arg(long)]
        backend: Option<String>,
    },
}

/// Parses `argv` and runs the command. Returns the process exit code.
pub fn dispatch<I, T>(argv: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => {
                    let _ = e.print();
                    if e.kind() == ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand {
                        2
                    } else {
                        0
                    }
                }
                _ => {
                    let text = e.render().to_string();
                    let (head, rest) = text.split_once("\n\n").unwrap_or((&text, ""));
                    let head = head.trim_start_matches("error: ").split_whitespace().collect::<Vec<_>>().join(" ");
                    eprintln!("usage: {head}");
                    eprintln!("{}", rest.trim());
                    2
                }
            };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}

fn settings(cli: &Cli, addr: Option<&String>, backend: Option<&String>) -> Result<Settings, CliError> {
    let file = FileConfig::load(cli.config.as_deref())?;
    let flags = Overrides { addr: addr.cloned(), kb_root: cli.kb_root.clone(), backend: backend.cloned() };
    Ok(Settings::resolve(&flags, &|k| std::env::var(k).ok(), &file))
}

fn backend_spec(settings: &Settings) -> Result<BackendSpec, CliError> {
    BackendSpec::parse(settings.backend.as_deref().unwrap_or("http"))
}

fn open_store(settings: &Settings) -> Result<KnowledgeStore, CliError> {
    Ok(KnowledgeStore::open(&settings.kb_root)?)
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Infra(format!("{}: {e}", dir.display())))?;
    }
    std::fs::write(path, contents).map_err(|e| CliError::Infra(format!("{}: {e}", path.display())))
}

/// Logs engine events at debug level for `RUST_LOG=tapwise=debug`.
struct Trace;

impl SessionObserver for Trace {
    fn on_event(&mut self, event: &tapwise::session::SessionEvent) {
        tracing::debug!(target: "tapwise::session", event = %serde_json::to_string(event).unwrap_or_default());
    }
}

fn execute(cli: Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Explore { app, task, max_steps, backend, out } => {
            let settings = settings(&cli, None, backend.as_ref())?;
            let target = Target::parse(app)?;
            let model = backend_spec(&settings)?.build(&settings.http)?;
            let store = open_store(&settings)?;
            let mut opened = target.open(&settings.adb)?;
            let mut config = ExplorationConfig::new(task.clone(), target.app_id());
            config.max_steps = *max_steps;
            let report = explore(&config, opened.device.as_mut(), model.as_ref(), &store, &mut Trace).map_err(|e| match e {
                tapwise::explorer::ExploreError::Config(m) => CliError::Usage(m),
                other => CliError::Infra(other.to_string()),
            })?;
            let out = out.clone().unwrap_or_else(|| PathBuf::from(format!("{}.exploration.json", target.app_id())));
            write_file(&out, &report.to_json())?;
            println!(
                "{}",
                json!({
                    "termination": report.termination.as_str(),
                    "iterations": report.iterations,
                    "steps": report.steps.len(),
                    "docs_written": report.docs_written.len(),
                    "report": out,
                })
            );
            match report.termination {
                ExploreTermination::TaskComplete => Ok(()),
                other => Err(CliError::Task(format!("exploration ended with {}", other.as_str()))),
            }
        }
        Command::Run { app, task, max_steps, no_docs, backend, out } => {
            let settings = settings(&cli, None, backend.as_ref())?;
            let target = Target::parse(app)?;
            let model = backend_spec(&settings)?.build(&settings.http)?;
            let store = if *no_docs { None } else { Some(open_store(&settings)?) };
            let mut opened = target.open(&settings.adb)?;
            let mut config = RunConfig::new(task.clone(), target.app_id());
            config.max_steps = *max_steps;
            let trajectory =
                run_task(&config, opened.device.as_mut(), model.as_ref(), store.as_ref(), &mut Trace).map_err(|e| match e {
                    tapwise::operator::RunError::Config(m) => CliError::Usage(m),
                    other => CliError::Infra(other.to_string()),
                })?;
            let out = out.clone().unwrap_or_else(|| PathBuf::from(format!("{}.trajectory.jsonl", target.app_id())));
            write_file(&out, &trajectory.to_json_lines())?;
            println!(
                "{}",
                json!({
                    "termination": trajectory.termination.as_str(),
                    "steps": trajectory.steps.len(),
                    "final_page_ref": trajectory.final_page_ref,
                    "trajectory": out,
                })
            );
            match trajectory.termination {
                Termination::ExitByAgent => Ok(()),
                Termination::StepCap => Err(CliError::Task(format!("step cap of {max_steps} reached"))),
                Termination::Error => Err(CliError::Task(trajectory.error.unwrap_or_else(|| "run failed".into()))),
            }
        }
        Command::Demo { app, backend, serve } => {
            let settings = settings(&cli, serve.as_ref(), backend.as_ref())?;
            match serve {
                Some(_) => demo_served(&settings, app),
                None => demo_stdin(&settings, app),
            }
        }
        Command::Bench { suite, backend, docs, out } => {
            let settings = settings(&cli, None, None)?;
            bench(&settings, suite, backend, docs, out.as_deref())
        }
        Command::Serve { addr, backend } => {
            let settings = settings(&cli, addr.as_ref(), backend.as_ref())?;
            let state = service_state(&settings)?;
            block_on_service(&settings.addr, state, async {
                let _ = tokio::signal::ctrl_c().await;
            })
        }
    }
}

fn service_state(settings: &Settings) -> Result<Arc<ServiceState>, CliError> {
    let store = Arc::new(open_store(settings)?);
    let factory = Factory { backend: backend_spec(settings)?, http: settings.http.clone(), adb: settings.adb.clone() };
    Ok(ServiceState::new(store, factory))
}

fn block_on_service(
    addr: &str,
    state: Arc<ServiceState>,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> Result<(), CliError> {
    let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::Infra(format!("runtime: {e}")))?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr).await.map_err(|e| CliError::Infra(format!("cannot bind {addr}: {e}")))?;
        let local = listener.local_addr().map_err(|e| CliError::Infra(e.to_string()))?;
        eprintln!("listening on http://{local}");
        info!(%local, "service listening");
        service::serve(listener, state, shutdown).await.map_err(|e| CliError::Infra(format!("service: {e}")))
    })
}

/// Serves one demo session and returns once it has ended.
fn demo_served(settings: &Settings, app: &str) -> Result<(), CliError> {
    let state = service_state(settings)?;
    let session = state.start(NewSession { kind: SessionKind::Demo, app: app.to_string(), task: None, max_steps: None, no_docs: false })?;
    eprintln!("demo session {}", session.descriptor().session_id);
    let watched = session.clone();
    block_on_service(&settings.addr, state, async move {
        while !watched.descriptor().status.is_over() {
            tokio::time::sleep(Duration::from_millis(100)).await;
        }
    })?;
    let d = session.descriptor();
    println!("{}", json!({"session_id": d.session_id, "status": d.status}));
    match d.status {
        service::SessionStatus::Finished => Ok(()),
        _ => Err(CliError::Infra("demo session failed".into())),
    }
}

/// Reads one JSON demo event per line from standard input; `stop` or end
/// of input ends the session. Prints one JSON result per event.
fn demo_stdin(settings: &Settings, app: &str) -> Result<(), CliError> {
    let target = Target::parse(app)?;
    let model = backend_spec(settings)?.build(&settings.http)?;
    let store = open_store(settings)?;
    let mut opened = target.open(&settings.adb)?;
    let (tx, rx) = sync_channel(DEMO_QUEUE_DEPTH);
    let app_id = target.app_id().to_string();

    let report = std::thread::scope(|scope| {
        let engine = scope.spawn(|| record_demo(&app_id, opened.device.as_mut(), model.as_ref(), &store, rx, &mut NullObserver));
        let stdout = std::io::stdout();
        for line in std::io::stdin().lock().lines() {
            let Ok(line) = line else { break };
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if line == "stop" {
                break;
            }
            let result = match serde_json::from_str::<DemoEventRequest>(line) {
                Ok(request) => {
                    let (reply_tx, reply_rx) = sync_channel(1);
                    if tx.send(DemoCommand::Event { request, reply: reply_tx }).is_err() {
                        break;
                    }
                    match reply_rx.recv() {
                        Ok(Ok(ack)) => json!({"ok": ack}),
                        Ok(Err(errors)) => json!({"errors": errors}),
                        Err(_) => break,
                    }
                }
                Err(e) => json!({"errors": [{"field": "$", "message": e.to_string()}]}),
            };
            let _ = writeln!(stdout.lock(), "{result}");
        }
        let _ = tx.send(DemoCommand::Stop);
        engine.join().expect("demo thread panicked")
    })
    .map_err(|e| CliError::Infra(e.to_string()))?;
    println!(
        "{}",
        json!({
            "events_accepted": report.events_accepted,
            "events_rejected": report.events_rejected,
            "docs_written": report.docs_written.len(),
        })
    );
    Ok(())
}

fn bench(settings: &Settings, suite_path: &Path, backend: &str, docs: &str, out: Option<&Path>) -> Result<(), CliError> {
    if !suite_path.is_file() {
        return Err(CliError::Usage(format!("suite file not found: {}", suite_path.display())));
    }
    let suite = load_suite(suite_path).map_err(|e| CliError::Usage(e.to_string()))?;
    let reports = if backend == "scripted" {
        bench_reference(&suite, docs)?
    } else {
        vec![bench_live(settings, &suite, &BackendSpec::parse(backend)?, docs)?]
    };
    if let Some(dir) = out {
        for report in &reports {
            let name = report.document.replace(' ', "_");
            write_file(&dir.join(format!("{name}.json")), &report.to_json())?;
        }
    }
    print!("{}", render_table(&reports));

    // The reference fixtures pin what each configuration must produce.
    if backend == "scripted" {
        let mut mismatches = Vec::new();
        for (config, report) in reference_configs(docs)?.iter().zip(&reports) {
            if let Some(pin) = suite.expected(config.as_str()) {
                let got = (report.successes, report.reward_sum(), report.success_step_sum());
                if got != (pin.successes, pin.reward_sum, pin.success_step_sum) {
                    mismatches.push(format!(
                        "{}: got {} successes, reward {}, steps {}; pinned {}, {}, {}",
                        config.as_str(),
                        got.0,
                        got.1,
                        got.2,
                        pin.successes,
                        pin.reward_sum,
                        pin.success_step_sum
                    ));
                }
            }
        }
        if !mismatches.is_empty() {
            return Err(CliError::Task(format!("results differ from the suite's pins: {}", mismatches.join("; "))));
        }
    }
    Ok(())
}

fn reference_configs(docs: &str) -> Result<Vec<DocConfig>, CliError> {
    if docs == "all" {
        return Ok(DocConfig::ALL.to_vec());
    }
    DocConfig::parse(docs)
        .map(|c| vec![c])
        .ok_or_else(|| CliError::Usage(format!("--docs {docs:?} must be none, auto, demo, manual or all")))
}

fn bench_reference(suite: &Suite, docs: &str) -> Result<Vec<BenchReport>, CliError> {
    let mut reports = Vec::new();
    for config in reference_configs(docs)? {
        let dir = tempfile::tempdir().map_err(|e| CliError::Infra(format!("temp dir: {e}")))?;
        let report = run_reference(suite, config, dir.path()).map_err(|e| match e {
            tapwise::bench::ReferenceError::MissingFixture { .. } => CliError::Usage(e.to_string()),
            other => CliError::Infra(other.to_string()),
        })?;
        reports.push(report);
    }
    Ok(reports)
}

fn bench_live(settings: &Settings, suite: &Suite, spec: &BackendSpec, docs: &str) -> Result<BenchReport, CliError> {
    let store = match docs {
        "none" => None,
        "store" => Some(open_store(settings)?),
        other => return Err(CliError::Usage(format!("--docs {other:?} must be none or store with a model backend"))),
    };
    let agent = AgentConfig {
        method: tapwise::bench::METHOD.to_string(),
        document: docs.to_string(),
        models: ModelChoice::Shared(spec.build(&settings.http)?),
        store: store.as_ref(),
    };
    run_suite(&suite.suite_id, &suite.tasks, &suite.specs(), &agent).map_err(|abort| {
        print!("{}", render_table(std::slice::from_ref(abort.partial.as_ref())));
        CliError::Infra(abort.to_string())
    })
}
