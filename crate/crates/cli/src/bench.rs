//! Trials of every scenario in a directory under both detectors.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use guided_mha::{DetectorKind, Outcome};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{load_scenario, ConfigFile, Loaded, PlannerFlags};
use crate::plan;
use crate::script::ScriptProvider;

#[derive(Args, Debug)]
pub struct BenchArgs {
    /// Directory of scenario documents; `x.guidance.json` scripts `x.json`.
    pub dir: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub trials: usize,
    /// Seed of the first trial; trial `i` uses `seed + i`.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Noise added to scripted guidance, in configuration units. With noise
    /// on, a trial whose script runs out keeps re-offering its last entry.
    #[arg(long, default_value_t = 1.0)]
    pub jitter: f64,
    #[command(flatten)]
    pub planner: PlannerFlags,
    /// Print JSON instead of a table.
    #[arg(long)]
    pub json: bool,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct Stat {
    pub mean: f64,
    pub stddev: f64,
}

impl Stat {
    /// Sample standard deviation; zero for a single trial.
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        if values.is_empty() {
            return Self::default();
        }
        let mean = values.iter().sum::<f64>() / n;
        let var = if values.len() > 1 {
            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Self { mean, stddev: var.sqrt() }
    }
}

impl std::fmt::Display for Stat {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:.1} ± {:.1}", self.mean, self.stddev)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Cell {
    pub detector: DetectorKind,
    pub trials: usize,
    pub solved: usize,
    pub expansions: Stat,
    pub guidance_requests: Stat,
    pub guidances_used: Stat,
}

#[derive(Clone, Debug, Serialize)]
pub struct Line {
    pub scenario: String,
    pub cells: Vec<Cell>,
}

const DETECTORS: [DetectorKind; 2] = [DetectorKind::Vacillation, DetectorKind::HeuristicBased];

pub fn scenario_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    files.retain(|p| {
        let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
        name.ends_with(".json") && !name.ends_with(".guidance.json")
    });
    files.sort();
    if files.is_empty() {
        bail!("no scenario documents (*.json) in {}", dir.display());
    }
    Ok(files)
}

pub fn bench(args: &BenchArgs, file: &ConfigFile) -> Result<Vec<Line>> {
    let overrides = args.planner.overrides();
    let scenarios: Vec<(String, Loaded)> = scenario_files(&args.dir)?
        .iter()
        .map(|p| {
            let loaded = load_scenario(p.to_str().context("path is not UTF-8")?, file, &overrides)?;
            let name = p.file_stem().unwrap().to_string_lossy().into_owned();
            Ok((name, loaded))
        })
        .collect::<Result<_>>()?;
    let jobs: Vec<(usize, usize, usize)> = (0..scenarios.len())
        .flat_map(|s| (0..DETECTORS.len()).flat_map(move |d| (0..args.trials).map(move |t| (s, d, t))))
        .collect();
    let reports = jobs
        .par_iter()
        .map(|&(s, d, t)| {
            let loaded = &scenarios[s].1;
            let mut scenario = loaded.scenario.clone();
            scenario.config.detector_kind = DETECTORS[d];
            let script = loaded.script.clone().unwrap_or_default();
            let seed = args.seed + t as u64;
            let mut provider = ScriptProvider::new(script, args.jitter, seed)?;
            if args.jitter > 0.0 {
                provider = provider.repeat_last();
            }
            plan::run_with(&scenario, provider, true, seed, args.jitter).map(|(r, _)| r)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut lines = Vec::new();
    for (s, (name, _)) in scenarios.iter().enumerate() {
        let cells = DETECTORS
            .iter()
            .enumerate()
            .map(|(d, &detector)| {
                let trial = |t: usize| &reports[(s * DETECTORS.len() + d) * args.trials + t];
                let pick = |f: &dyn Fn(&plan::Report) -> f64| Stat::of(&(0..args.trials).map(|t| f(trial(t))).collect::<Vec<_>>());
                Cell {
                    detector,
                    trials: args.trials,
                    solved: (0..args.trials).filter(|&t| trial(t).outcome == Outcome::Solved).count(),
                    expansions: pick(&|r| r.expansions as f64),
                    guidance_requests: pick(&|r| r.guidance_requests as f64),
                    guidances_used: pick(&|r| r.guidances_used as f64),
                }
            })
            .collect();
        lines.push(Line { scenario: name.clone(), cells });
    }
    Ok(lines)
}

pub fn print_table(lines: &[Line], out: &mut dyn Write) -> std::io::Result<()> {
    writeln!(
        out,
        "{:<20} {:<16} {:>7} {:>22} {:>14} {:>14}",
        "scenario", "detector", "solved", "expansions", "requests", "used"
    )?;
    for line in lines {
        for cell in &line.cells {
            let detector = match cell.detector {
                DetectorKind::Vacillation => "vacillation",
                DetectorKind::HeuristicBased => "heuristic",
            };
            writeln!(
                out,
                "{:<20} {:<16} {:>7} {:>22} {:>14} {:>14}",
                line.scenario,
                detector,
                format!("{}/{}", cell.solved, cell.trials),
                cell.expansions.to_string(),
                cell.guidance_requests.to_string(),
                cell.guidances_used.to_string()
            )?;
        }
    }
    let fewer = lines
        .iter()
        .filter(|l| l.cells[1].expansions.mean <= l.cells[0].expansions.mean)
        .count();
    writeln!(
        out,
        "heuristic-based needed no more expansions than vacillation-based on {fewer}/{} scenarios",
        lines.len()
    )
}
