use std::path::{Path, PathBuf};
use std::process::Command;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use serde::Deserialize;

use hdice::env::{parse_grid_map, Cell, GridAction, GridSpec};
use hdice::harness::{format_probe, grid_probe_observation, plot_curves, probe_state, run_experiment, RunConfig, Snapshot};

#[derive(Parser)]
#[command(name = "hdice", version, about = "Credit-assignment experiments on GridWorld and friends")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one experiment; trailing --key=value pairs override the config file.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Output directory for config.txt, metrics.csv and snapshot.json.
        #[arg(long, default_value = "runs/latest")]
        out: PathBuf,
        #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
        overrides: Vec<String>,
    },
    /// Every `*.cfg` in a directory times every seed, one process each.
    Sweep {
        #[arg(long)]
        configs: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        seeds: Vec<u64>,
        #[arg(long, default_value = "runs/sweep")]
        out: PathBuf,
        /// Concurrent processes.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Learned π, h and both ratios at one state.
    Probe {
        #[arg(long)]
        snapshot: PathBuf,
        /// JSON observation array, or {"row": r, "col": c, "collected": [[r, c], ...]} on GridWorld.
        #[arg(long)]
        state: String,
        /// Action names (Up, Down, Left, Right) or indices.
        #[arg(long, value_delimiter = ',', default_value = "Left,Right")]
        actions: Vec<String>,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "-100,69")]
        returns: Vec<f64>,
    },
    /// Learning curves (mean ± std per method) as SVG.
    Plot {
        #[arg(long, num_args = 1.., required = true)]
        csv: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> anyhow::Result<()> {
    match Cli::parse().command {
        Cmd::Train { config, out, overrides } => train(&config, &out, &overrides),
        Cmd::Sweep { configs, seeds, out, jobs } => sweep(&configs, &seeds, &out, jobs),
        Cmd::Probe {
            snapshot,
            state,
            actions,
            returns,
        } => probe(&snapshot, &state, &actions, &returns),
        Cmd::Plot { csv, out } => Ok(plot_curves(&csv, &out)?),
    }
}

fn train(config: &Path, out: &Path, overrides: &[String]) -> anyhow::Result<()> {
    let text = std::fs::read_to_string(config).with_context(|| format!("reading {}", config.display()))?;
    let cfg = RunConfig::parse_with_overrides(&text, overrides)?;
    let run = run_experiment(&cfg)?;
    run.write(out)?;
    if let Some(last) = run.rows.last() {
        println!(
            "{} {} seed {}: iteration {} episodes {} eval return {:.2} ± {:.2}",
            cfg.env_id(),
            cfg.method.name(),
            cfg.seed,
            last.iteration,
            last.episodes_elapsed,
            last.eval_return_mean,
            last.eval_return_std
        );
    }
    if let Some((it, msg)) = &run.aborted {
        bail!("aborted at iteration {it}: {msg}");
    }
    Ok(())
}

fn sweep(dir: &Path, seeds: &[u64], out: &Path, jobs: usize) -> anyhow::Result<()> {
    let mut configs: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "cfg"))
        .collect();
    configs.sort();
    if configs.is_empty() {
        bail!("no *.cfg files in {}", dir.display());
    }
    let exe = std::env::current_exe()?;
    let mut queue: Vec<(PathBuf, u64)> = configs.iter().flat_map(|c| seeds.iter().map(move |&s| (c.clone(), s))).collect();
    queue.reverse();
    let mut running = Vec::new();
    let mut failures = 0;
    while !queue.is_empty() || !running.is_empty() {
        while running.len() < jobs.max(1) {
            let Some((cfg, seed)) = queue.pop() else { break };
            let stem = cfg.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            let run_dir = out.join(&stem).join(format!("seed{seed}"));
            let child = Command::new(&exe)
                .arg("train")
                .arg("--config")
                .arg(&cfg)
                .arg("--out")
                .arg(&run_dir)
                .arg(format!("--seed={seed}"))
                .spawn()?;
            running.push((stem, seed, child));
        }
        let (stem, seed, mut child) = running.remove(0);
        if !child.wait()?.success() {
            eprintln!("{stem} seed {seed} failed");
            failures += 1;
        }
    }
    if failures > 0 {
        bail!("{failures} runs failed");
    }
    Ok(())
}

#[derive(Deserialize)]
#[serde(untagged)]
enum StateArg {
    Observation(Vec<f64>),
    Grid {
        row: usize,
        col: usize,
        #[serde(default)]
        collected: Vec<(usize, usize)>,
    },
}

fn grid_spec_for(env: &str) -> anyhow::Result<GridSpec> {
    Ok(match env {
        "gridworld-v1" => GridSpec::v1(),
        "gridworld-v2" => GridSpec::v2(),
        other => match other.strip_prefix("gridworld-file:") {
            Some(path) => parse_grid_map(&std::fs::read_to_string(path)?)?,
            None => bail!("grid states need a GridWorld snapshot, got env '{other}'"),
        },
    })
}

fn probe(snapshot: &Path, state: &str, actions: &[String], returns: &[f64]) -> anyhow::Result<()> {
    let snap = Snapshot::load(snapshot)?;
    let cfg = RunConfig::parse(&snap.config)?;
    let observation = match serde_json::from_str::<StateArg>(state).context("parsing --state")? {
        StateArg::Observation(v) => v,
        StateArg::Grid { row, col, collected } => {
            let cells: Vec<Cell> = collected.into_iter().map(|(row, col)| Cell { row, col }).collect();
            grid_probe_observation(&grid_spec_for(&cfg.env)?, row, col, &cells)?
        }
    };
    let actions = actions
        .iter()
        .map(|a| match a.parse::<usize>() {
            Ok(i) => Ok(i),
            Err(_) => Ok(GridAction::parse(a)? as usize),
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    let rows = probe_state(&snap, &observation, &actions, returns)?;
    let name = |a: usize| GridAction::from_index(a).map_or_else(|_| a.to_string(), |g| g.name().to_string());
    print!("{}", format_probe(&rows, name));
    Ok(())
}
