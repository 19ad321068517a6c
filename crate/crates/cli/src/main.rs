mod bench;
mod config;
mod plan;
mod script;
mod trace;

use std::fs::{self, File};
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use gmha_service::Store;
use guided_mha::events::read_log;
use guided_mha::{replay, Scenario};

use config::ConfigFile;

#[derive(Parser, Debug)]
#[command(name = "gmha", version, about = "Guided multi-heuristic A* planning")]
struct Cli {
    /// TOML file with `[planner]` defaults and `[service]` settings.
    #[arg(long, global = true, env = "GMHA_CONFIG")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one scenario with scripted guidance and report the outcome.
    Plan(plan::PlanArgs),
    /// Per-expansion plot data from an event log.
    Trace {
        log: PathBuf,
        #[arg(long, value_enum, default_value = "delay")]
        metric: trace::Metric,
        /// Only rows of this queue.
        #[arg(long)]
        queue: Option<usize>,
    },
    /// Serve sessions over HTTP.
    Serve {
        /// Address to listen on [default: 127.0.0.1:8080].
        #[arg(long)]
        bind: Option<String>,
        /// Persist session logs here and restore them on start.
        #[arg(long)]
        log_dir: Option<PathBuf>,
    },
    /// Repeated trials of a directory of scenarios under both detectors.
    Bench(bench::BenchArgs),
    /// Re-execute a log and check that it reproduces bit for bit.
    Replay {
        log: PathBuf,
        /// Write the re-executed log here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List built-in scenarios, print one, or write them all to a directory.
    Builtin {
        name: Option<String>,
        /// Write `NAME.json` and `NAME.guidance.json` for every built-in.
        #[arg(long, conflicts_with = "name")]
        dir: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli, &mut io::stdout().lock()) {
        Ok(code) => code,
        Err(e) if broken_pipe(&e) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

/// A reader such as `head` closing the pipe early is not a failure.
fn broken_pipe(e: &anyhow::Error) -> bool {
    e.chain()
        .filter_map(|c| c.downcast_ref::<io::Error>())
        .any(|e| e.kind() == io::ErrorKind::BrokenPipe)
}

fn run(cli: Cli, out: &mut dyn Write) -> Result<ExitCode> {
    let file = ConfigFile::load(cli.config.as_deref())?;
    match cli.command {
        Command::Plan(args) => plan::plan(&args, &file, out),
        Command::Trace { log, metric, queue } => {
            let events = read_log(BufReader::new(open(&log)?)).with_context(|| format!("log {}", log.display()))?;
            let rows = trace::rows(&events, metric, queue);
            trace::write_tsv(&rows, metric, out)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Serve { bind, log_dir } => serve(&file, bind, log_dir, out),
        Command::Bench(args) => {
            let lines = bench::bench(&args, &file)?;
            if args.json {
                writeln!(out, "{}", serde_json::to_string_pretty(&lines)?)?;
            } else {
                bench::print_table(&lines, out)?;
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Replay { log, out: dest } => {
            let events = read_log(BufReader::new(open(&log)?)).with_context(|| format!("log {}", log.display()))?;
            let again = replay(&events)?;
            if let Some(dest) = dest {
                let file = File::create(&dest).with_context(|| format!("creating {}", dest.display()))?;
                guided_mha::events::EventWriter::new(io::BufWriter::new(file)).write_all(&again)?;
            }
            let first = (0..events.len().max(again.len())).find(|&i| events.get(i) != again.get(i));
            match first {
                None => {
                    writeln!(out, "identical: {} events", events.len())?;
                    Ok(ExitCode::SUCCESS)
                }
                Some(seq) => {
                    writeln!(out, "diverges at seq {seq}")?;
                    Ok(ExitCode::from(4))
                }
            }
        }
        Command::Builtin { name, dir } => builtin(name, dir, out),
    }
}

fn open(path: &Path) -> Result<File> {
    File::open(path).with_context(|| format!("opening {}", path.display()))
}

fn serve(file: &ConfigFile, bind: Option<String>, log_dir: Option<PathBuf>, out: &mut dyn Write) -> Result<ExitCode> {
    let addr = bind
        .or_else(|| file.service.bind.clone())
        .unwrap_or_else(|| "127.0.0.1:8080".into());
    let config = file.service(log_dir)?;
    let store = Arc::new(Store::open(config).context("opening session store")?);
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(&addr)
            .await
            .with_context(|| format!("binding {addr}"))?;
        writeln!(out, "listening on {}", listener.local_addr()?)?;
        out.flush()?;
        gmha_service::serve(listener, store).await?;
        Ok(ExitCode::SUCCESS)
    })
}

fn builtin(name: Option<String>, dir: Option<PathBuf>, out: &mut dyn Write) -> Result<ExitCode> {
    if let Some(dir) = dir {
        fs::create_dir_all(&dir)?;
        for name in Scenario::BUILTIN {
            let scenario = Scenario::builtin(name).unwrap();
            let script = Scenario::builtin_guidance(name).unwrap();
            fs::write(dir.join(format!("{name}.json")), serde_json::to_string_pretty(&scenario)? + "\n")?;
            fs::write(dir.join(format!("{name}.guidance.json")), serde_json::to_string(&script)? + "\n")?;
        }
        return Ok(ExitCode::SUCCESS);
    }
    match name {
        None => {
            for n in Scenario::BUILTIN {
                writeln!(out, "{n}")?;
            }
        }
        Some(name) => {
            let Some(scenario) = Scenario::builtin(&name) else {
                bail!("unknown builtin {name:?}, expected one of {}", Scenario::BUILTIN.join(", "));
            };
            writeln!(out, "{}", serde_json::to_string_pretty(&scenario)?)?;
        }
    }
    Ok(ExitCode::SUCCESS)
}
