//! Command-line front end.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus;
use crate::dependency::{build_all_graphs, total_edges, DependencyGraph, EdgeId, Producer};
use crate::disclosure::{DisclosureProtocol, DisclosureSet, Strategy};
use crate::extension::schedule;
use crate::harness::{hindsight, run_experiment, solve, ExperimentConfig};
use crate::io::{
    export_dependency_graph_dot, parse_problem, projection_to_document, write_experiment_csv, Solver,
};
use crate::model::{JointPlan, MAProblem};
use crate::projection::build_projection;
use crate::search::{bfs_oracle, merged_task, SearchBudget};

pub const EXIT_OK: i32 = 0;
pub const EXIT_UNSOLVED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "privdeps", version, about = "Partial disclosure of private dependencies in multi-agent planning")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build every agent's dependency graph and list its edges.
    Deps {
        problem: PathBuf,
        /// Write the graphs as DOT to this file.
        #[arg(long)]
        dot: Option<PathBuf>,
    },
    /// Print the order in which a strategy publishes edges.
    Rank {
        problem: PathBuf,
        #[arg(long)]
        strategy: Strategy,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Stop after this many rounds (default: until everything is published).
        #[arg(long)]
        rounds: Option<usize>,
    },
    /// Print the projection after some disclosure rounds as a problem document.
    Project {
        problem: PathBuf,
        #[arg(long)]
        rounds: usize,
        #[arg(long)]
        strategy: Strategy,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Disclose for some rounds, then solve once.
    Solve {
        problem: PathBuf,
        #[arg(long)]
        solver: Solver,
        #[arg(long)]
        strategy: Strategy,
        #[arg(long)]
        rounds: usize,
        #[arg(long, default_value_t = 300_000)]
        timeout_ms: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the MAFS message log as JSON lines.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Run the disclose-then-solve loop and emit one CSV row per round.
    Experiment {
        #[arg(required = true)]
        problems: Vec<PathBuf>,
        #[arg(long)]
        solver: Solver,
        #[arg(long)]
        strategy: Strategy,
        #[arg(long, default_value_t = 100)]
        rounds: usize,
        #[arg(long, default_value_t = 300_000)]
        timeout_ms: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Record real wall-clock times instead of zeros.
        #[arg(long)]
        measure_time: bool,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Exhaustive report on the merged problem.
    Oracle {
        problem: PathBuf,
        #[arg(long)]
        max_len: usize,
        #[arg(long, default_value_t = 50_000)]
        state_cap: usize,
    },
    /// Count the dependencies used by the full-disclosure plan.
    Hindsight {
        problem: PathBuf,
        #[arg(long, default_value_t = 300_000)]
        timeout_ms: u64,
    },
}

/// A file path, or the name of a bundled problem when no such file exists.
pub fn load_problem(path: &Path) -> Result<MAProblem, String> {
    match fs::read_to_string(path) {
        Ok(text) => parse_problem(&text).map_err(|e| format!("{}: {e}", path.display())),
        Err(err) => {
            let name = path.to_string_lossy();
            let name = name.trim_end_matches(".maps.json");
            corpus::all()
                .into_iter()
                .find(|(n, _)| *n == name)
                .map(|(_, p)| p)
                .ok_or_else(|| format!("{}: {err}", path.display()))
        }
    }
}

fn describe(problem: &MAProblem, graphs: &[DependencyGraph], edge: EdgeId) -> String {
    let e = graphs[edge.agent.0].edge(edge);
    let producer = match e.producer {
        Producer::Action(a) => problem.action(a).name.clone(),
        Producer::DummyInit => "dummy-init".to_string(),
    };
    format!("{edge} {producer} -> {}", e.fact)
}

fn disclose(graphs: &[DependencyGraph], strategy: Strategy, rounds: usize, seed: u64) -> DisclosureSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut protocol = DisclosureProtocol::new(graphs, strategy);
    for _ in 0..rounds {
        if protocol.round(&mut rng).is_empty() {
            break;
        }
    }
    protocol.disclosed().clone()
}

fn budget(timeout_ms: u64) -> Result<SearchBudget, String> {
    if timeout_ms == 0 {
        return Err("--timeout-ms must be positive".into());
    }
    Ok(SearchBudget::new(SearchBudget::DEFAULT.max_expansions, timeout_ms))
}

fn write_out(path: Option<&Path>, text: &str, out: &mut dyn Write) -> Result<(), String> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| format!("{}: {e}", p.display())),
        None => out.write_all(text.as_bytes()).map_err(|e| e.to_string()),
    }
}

/// Plan lines as `t=<slot> <agent>: <action>`.
pub fn format_plan(problem: &MAProblem, plan: &JointPlan) -> String {
    let slots = schedule(problem, plan).expect("printed plans are valid");
    plan.steps
        .iter()
        .zip(slots)
        .map(|(a, t)| {
            let action = problem.action(*a);
            format!("t={t} {}: {}\n", problem.agents[action.agent.0], action.name)
        })
        .collect()
}

fn execute(command: Command, out: &mut dyn Write) -> Result<i32, String> {
    let w = |out: &mut dyn Write, s: String| out.write_all(s.as_bytes()).map_err(|e| e.to_string());
    match command {
        Command::Deps { problem, dot } => {
            let p = load_problem(&problem)?;
            let graphs = build_all_graphs(&p);
            for g in &graphs {
                w(out, format!(
                    "agent {}: {} artificial facts, {} edges\n",
                    p.agents[g.agent.0],
                    g.artificial_facts.len(),
                    g.edges.len()
                ))?;
                for e in &g.edges {
                    w(out, format!("  {}\n", describe(&p, &graphs, e.id)))?;
                }
            }
            w(out, format!("total edges: {}\n", total_edges(&graphs)))?;
            if let Some(path) = dot {
                let none = DisclosureSet::new();
                let text: String = graphs.iter().map(|g| export_dependency_graph_dot(&p, g, &none)).collect();
                write_out(Some(&path), &text, out)?;
            }
            Ok(EXIT_OK)
        }
        Command::Rank {
            problem,
            strategy,
            seed,
            rounds,
        } => {
            let p = load_problem(&problem)?;
            let graphs = build_all_graphs(&p);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut protocol = DisclosureProtocol::new(&graphs, strategy);
            if strategy == Strategy::All {
                for e in protocol.disclosed().iter() {
                    w(out, format!("round 0: {}\n", describe(&p, &graphs, e)))?;
                }
            }
            let mut round = 0;
            while rounds.is_none_or(|k| round < k) {
                let picked = protocol.round(&mut rng);
                if picked.is_empty() {
                    break;
                }
                round += 1;
                for e in picked {
                    w(out, format!("round {round}: {}\n", describe(&p, &graphs, e)))?;
                }
            }
            Ok(EXIT_OK)
        }
        Command::Project {
            problem,
            rounds,
            strategy,
            seed,
            out: path,
        } => {
            let p = load_problem(&problem)?;
            let graphs = build_all_graphs(&p);
            let disclosed = disclose(&graphs, strategy, rounds, seed);
            let projection = build_projection(&p, &graphs, &disclosed);
            let doc = projection_to_document(&p, &projection);
            let text = serde_json::to_string_pretty(&doc).map_err(|e| e.to_string())? + "\n";
            write_out(path.as_deref(), &text, out)?;
            Ok(EXIT_OK)
        }
        Command::Solve {
            problem,
            solver,
            strategy,
            rounds,
            timeout_ms,
            seed,
            log,
        } => {
            let p = load_problem(&problem)?;
            let graphs = build_all_graphs(&p);
            let disclosed = disclose(&graphs, strategy, rounds, seed);
            let outcome = solve(&p, &graphs, &disclosed, solver, budget(timeout_ms)?, seed);
            if let (Some(path), Some(messages)) = (log, &outcome.mafs_log) {
                write_out(Some(&path), &messages.to_json_lines(&p), out)?;
            }
            w(out, format!("disclosed {} of {} edges\n", disclosed.len(), total_edges(&graphs)))?;
            match outcome.plan {
                Some(plan) => {
                    w(out, format_plan(&p, &plan))?;
                    Ok(EXIT_OK)
                }
                None => {
                    w(out, "unsolved\n".into())?;
                    Ok(EXIT_UNSOLVED)
                }
            }
        }
        Command::Experiment {
            problems,
            solver,
            strategy,
            rounds,
            timeout_ms,
            seed,
            measure_time,
            csv,
        } => {
            let config = ExperimentConfig {
                max_rounds: rounds,
                budget: budget(timeout_ms)?,
                seed,
                measure_time,
                hindsight: true,
            };
            let mut records = Vec::new();
            for path in &problems {
                let p = load_problem(path)?;
                records.extend(run_experiment(&p, solver, strategy, &config));
            }
            write_out(csv.as_deref(), &write_experiment_csv(&records), out)?;
            Ok(EXIT_OK)
        }
        Command::Oracle {
            problem,
            max_len,
            state_cap,
        } => {
            let p = load_problem(&problem)?;
            let report = bfs_oracle(&merged_task(&p), max_len, state_cap).map_err(|e| e.to_string())?;
            w(out, format!("reachable states: {}\n", report.reachable))?;
            match report.opt {
                Some(c) => w(out, format!("optimal cost: {c}\n"))?,
                None => w(out, "optimal cost: none\n".into())?,
            }
            w(out, format!("plans up to length {max_len}: {}\n", report.plans.len()))?;
            Ok(if report.opt.is_some() { EXIT_OK } else { EXIT_UNSOLVED })
        }
        Command::Hindsight { problem, timeout_ms } => {
            let p = load_problem(&problem)?;
            let graphs = build_all_graphs(&p);
            match hindsight(&p, &graphs, budget(timeout_ms)?) {
                Some(h) => {
                    w(out, format!("hindsight: {} of {} edges\n", h.edges.len(), total_edges(&graphs)))?;
                    for e in h.edges.iter() {
                        w(out, format!("  {}\n", describe(&p, &graphs, e)))?;
                    }
                    Ok(EXIT_OK)
                }
                None => {
                    w(out, "unsolved\n".into())?;
                    Ok(EXIT_UNSOLVED)
                }
            }
        }
    }
}

/// Parses `args` (program name first) and runs the command, returning the exit code.
pub fn dispatch<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { err.write_all(text.as_bytes()) } else { out.write_all(text.as_bytes()) };
            return code;
        }
    };
    match execute(cli.command, out) {
        Ok(code) => code,
        Err(message) => {
            let _ = writeln!(err, "error: {message}");
            EXIT_USAGE
        }
    }
}
