use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::Args;
use guided_mha::events::EventWriter;
use guided_mha::{run_session, Outcome, Scenario, Session, SessionResult, SessionSettings};
use serde::Serialize;

use crate::config::{load_scenario, ConfigFile, PlannerFlags};
use crate::script::{self, ScriptEntry, ScriptProvider};

#[derive(Args, Debug)]
pub struct PlanArgs {
    /// `builtin:NAME`, a scenario document (.json) or a map text file.
    pub scenario: String,
    /// Guidance script; defaults to the scenario's own script, if any.
    #[arg(long)]
    pub guidance: Option<PathBuf>,
    /// Never ask for guidance (the ablation arm).
    #[arg(long)]
    pub no_guidance: bool,
    /// Run the guided and unguided arms and print them side by side.
    #[arg(long, conflicts_with = "no_guidance")]
    pub compare: bool,
    #[command(flatten)]
    pub planner: PlannerFlags,
    /// Seed for the guidance jitter.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Standard deviation of the noise added to scripted guidance, in
    /// configuration units.
    #[arg(long, default_value_t = 0.0)]
    pub jitter: f64,
    /// Write the report as JSON.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Write the event log (guided arm when comparing).
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// Print the report as JSON instead of a table.
    #[arg(long)]
    pub json: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Report {
    pub scenario: Option<String>,
    pub guidance: bool,
    pub outcome: Outcome,
    pub cost: Option<f64>,
    pub path_states: Option<usize>,
    pub expansions: u64,
    pub guidance_requests: u64,
    pub guidances_used: u64,
    pub guidances_discarded_unhelpful: u64,
    pub seed: u64,
    pub jitter: f64,
    pub elapsed_ms: f64,
}

impl Report {
    fn rows(&self) -> Vec<(&'static str, String)> {
        let opt = |v: Option<String>| v.unwrap_or_else(|| "-".into());
        vec![
            ("scenario", opt(self.scenario.clone())),
            ("guidance", if self.guidance { "on" } else { "off" }.into()),
            ("outcome", format!("{:?}", self.outcome)),
            ("cost", opt(self.cost.map(|c| format!("{c:.3}")))),
            ("path states", opt(self.path_states.map(|n| n.to_string()))),
            ("expansions", self.expansions.to_string()),
            ("guidance requests", self.guidance_requests.to_string()),
            ("guidances used", self.guidances_used.to_string()),
            ("discarded unhelpful", self.guidances_discarded_unhelpful.to_string()),
            ("time (ms)", format!("{:.1}", self.elapsed_ms)),
        ]
    }
}

pub fn exit_code(outcome: Outcome) -> ExitCode {
    match outcome {
        Outcome::Solved => ExitCode::SUCCESS,
        Outcome::BudgetExhausted | Outcome::SpaceExhausted => ExitCode::from(2),
        Outcome::Declined => ExitCode::from(3),
    }
}

/// One session from start to finish.
pub fn run(
    scenario: &Scenario,
    script: Vec<ScriptEntry>,
    guidance: bool,
    seed: u64,
    jitter: f64,
) -> Result<(Report, SessionResult)> {
    run_with(scenario, ScriptProvider::new(script, jitter, seed)?, guidance, seed, jitter)
}

pub fn run_with(
    scenario: &Scenario,
    mut provider: ScriptProvider,
    guidance: bool,
    seed: u64,
    jitter: f64,
) -> Result<(Report, SessionResult)> {
    let settings = SessionSettings {
        guidance,
        ..SessionSettings::default()
    };
    let started = Instant::now();
    let mut session = Session::from_scenario(scenario, settings)?;
    let result = run_session(&mut session, &mut provider);
    let report = Report {
        scenario: scenario.name.clone(),
        guidance,
        outcome: result.outcome,
        cost: result.cost,
        path_states: result.path.as_ref().map(Vec::len),
        expansions: result.totals.expansions,
        guidance_requests: result.totals.guidance_requests,
        guidances_used: result.totals.guidances_used,
        guidances_discarded_unhelpful: result.totals.guidances_discarded_unhelpful,
        seed,
        jitter,
        elapsed_ms: started.elapsed().as_secs_f64() * 1e3,
    };
    Ok((report, result))
}

pub fn write_log(path: &PathBuf, result: &SessionResult) -> Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    EventWriter::new(BufWriter::new(file))
        .write_all(&result.events)
        .with_context(|| format!("writing {}", path.display()))
}

pub fn plan(args: &PlanArgs, file: &ConfigFile, out: &mut dyn Write) -> Result<ExitCode> {
    let loaded = load_scenario(&args.scenario, file, &args.planner.overrides())?;
    let script = match &args.guidance {
        Some(path) => script::load(path)?,
        None => loaded.script.unwrap_or_default(),
    };
    let arms: Vec<bool> = if args.compare {
        vec![true, false]
    } else {
        vec![!args.no_guidance]
    };
    let mut reports = Vec::new();
    for (i, guidance) in arms.into_iter().enumerate() {
        let (report, result) = run(&loaded.scenario, script.clone(), guidance, args.seed, args.jitter)?;
        if i == 0 {
            if let Some(path) = &args.log {
                write_log(path, &result)?;
            }
        }
        reports.push(report);
    }
    let json = if reports.len() == 1 {
        serde_json::to_string_pretty(&reports[0])?
    } else {
        serde_json::to_string_pretty(&reports)?
    };
    if let Some(path) = &args.report {
        std::fs::write(path, &json).with_context(|| format!("writing {}", path.display()))?;
    }
    if args.json {
        writeln!(out, "{json}")?;
    } else {
        print_table(&reports, out)?;
    }
    Ok(exit_code(reports[0].outcome))
}

fn print_table(reports: &[Report], out: &mut dyn Write) -> std::io::Result<()> {
    let columns: Vec<Vec<(&str, String)>> = reports.iter().map(Report::rows).collect();
    let width = columns
        .iter()
        .flat_map(|c| c.iter().map(|(_, v)| v.len()))
        .max()
        .unwrap_or(0)
        .max(8);
    for row in 0..columns[0].len() {
        let mut line = format!("{:<20}", columns[0][row].0);
        for c in &columns {
            line.push_str(&format!("  {:>width$}", c[row].1));
        }
        writeln!(out, "{}", line.trim_end())?;
    }
    Ok(())
}
