//! `mswarm`: run, inspect and post-process model swarm searches.
//!
//! Every subcommand prints a single JSON document (or CSV, for `export`) on
//! success. On failure it prints one JSON line `{"error": ..., "kind": ...}`
//! to stderr and exits nonzero.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use model_swarms::analysis::{c_emerge, c_surge, diversity_experts, export_trajectory, rank_report, CorrectnessMatrix};
use model_swarms::checkpoint::{load_checkpoint, save_checkpoint};
use model_swarms::engine::{search_with_sink, Swarm};
use model_swarms::grid::grid_search;
use model_swarms::modularity::{greedy_soup, inject_expert, injection_rng, replay_removal, uniform_soup};
use model_swarms::runconfig::{RunConfigFile, UtilitySpec};
use model_swarms::runlog::{read_log, JsonlSink, LogLine, RunHeader};
use model_swarms::token::{token_search, CompositionUtility};
use model_swarms::{ParamVector, SwarmConfig, SwarmError};

#[derive(Debug, Parser)]
#[command(name = "mswarm", version, about = "Swarm search over model parameter vectors")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SoupMode {
    Uniform,
    Greedy,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a swarm search described by a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Search a composition of categorical experts toward target distributions.
    TokenRun {
        #[arg(long)]
        config: PathBuf,
    },
    /// Random search over the hyperparameter grid in the config.
    Grid {
        #[arg(long)]
        config: PathBuf,
        /// Number of sampled configurations.
        #[arg(long)]
        budget: usize,
    },
    /// Add an expert to the swarm recorded in a log.
    Inject {
        /// Run log to read the swarm from; the injection is appended to it.
        #[arg(long)]
        state: PathBuf,
        #[arg(long)]
        expert: PathBuf,
        /// Keep searching after the injection, appending iterations to the log.
        #[arg(long)]
        resume: bool,
    },
    /// Replay a logged run as if an expert had never been part of it.
    RemoveReplay {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        expert_id: usize,
        /// Directory to write each particle's adjusted final location to.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Average expert checkpoints.
    Soup {
        #[arg(long, value_enum)]
        mode: SoupMode,
        #[arg(long, num_args = 1.., required = true)]
        experts: Vec<PathBuf>,
        /// Config whose utility scores the greedy soup.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Checkpoint to write the soup to.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Correctness-emergence metrics, and the winner's starting rank given a log.
    Analyze {
        #[arg(long, requires = "post")]
        pre: Option<PathBuf>,
        #[arg(long, requires = "pre")]
        post: Option<PathBuf>,
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Two coordinates of every evaluated location, as CSV.
    Export {
        #[arg(long)]
        log: PathBuf,
        /// Coordinate pair, e.g. `0,3`.
        #[arg(long)]
        coords: String,
        /// File to write instead of stdout.
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let message = e.to_string();
            let first = message.lines().next().unwrap_or("invalid arguments");
            report(first.trim_start_matches("error: "), "usage");
            return ExitCode::from(2);
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let kind = e.downcast_ref::<SwarmError>().map(SwarmError::kind).unwrap_or("cli");
            report(&format!("{e:#}"), kind);
            ExitCode::FAILURE
        }
    }
}

fn report(message: &str, kind: &str) {
    eprintln!("{}", json!({ "error": message.replace('\n', " "), "kind": kind }));
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Run { config } => run(&config),
        Command::TokenRun { config } => token_run(&config),
        Command::Grid { config, budget } => grid(&config, budget),
        Command::Inject { state, expert, resume } => inject(&state, &expert, resume),
        Command::RemoveReplay { log, expert_id, output } => remove_replay(&log, expert_id, output.as_deref()),
        Command::Soup {
            mode,
            experts,
            config,
            output,
        } => soup(mode, &experts, config.as_deref(), output.as_deref()),
        Command::Analyze { pre, post, log } => analyze(pre.zip(post), log.as_deref()),
        Command::Export { log, coords, output } => export(&log, &coords, output.as_deref()),
    }
}

fn print(value: &Value) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(())
}

fn header_for(cfg: &RunConfigFile, dim: usize, experts: usize, label: Option<String>) -> Result<RunHeader> {
    let mut header = RunHeader::new(&cfg.swarm, dim, experts);
    header.seed_from_entropy = cfg.seed_from_entropy;
    header.label = label.or_else(|| cfg.label.clone());
    header.utility = Some(serde_json::to_value(&cfg.utility)?);
    Ok(header)
}

fn run(config: &Path) -> Result<()> {
    let cfg = RunConfigFile::load(config)?;
    let utility = cfg.utility.build()?;
    let mut experts = cfg.experts.load()?;
    let mut label = None;
    if let Some(d) = cfg.diversity {
        experts = diversity_experts(&experts, d.distinct, d.repeats, d.base)?;
        label = Some(format!("{}x{}", d.distinct, d.repeats));
    }
    let dim = experts.first().map(ParamVector::dim).ok_or(SwarmError::EmptyExperts)?;
    let header = header_for(&cfg, dim, experts.len(), label)?;

    ensure_parent(&cfg.log_path)?;
    let mut sink = JsonlSink::create(&cfg.log_path, &header)?;
    let state = search_with_sink(&experts, utility.as_ref(), &cfg.swarm, &mut sink)?;
    sink.finish()?;
    ensure_parent(&cfg.best_path)?;
    save_checkpoint(&state.g, &cfg.best_path)?;

    print(&json!({
        "seed": cfg.swarm.seed,
        "label": header.label,
        "utility": utility.name(),
        "f_best": state.f_g,
        "best_provider": state.g_provider,
        "iterations": state.iteration,
        "log": cfg.log_path,
        "best": cfg.best_path,
    }))
}

fn token_run(config: &Path) -> Result<()> {
    let cfg = RunConfigFile::load(config)?;
    let (contexts, targets) = cfg.token_inputs()?;
    let experts = contexts[0].experts();
    let outcome = token_search(contexts.clone(), targets.clone(), &cfg.swarm)?;
    let composition = CompositionUtility::new(contexts, targets)?;
    let best_pure = (0..experts)
        .map(|j| {
            let mut row = vec![0.0; experts];
            row[j] = 1.0;
            composition.mean_kl(&row)
        })
        .collect::<model_swarms::Result<Vec<_>>>()?
        .into_iter()
        .fold(f64::INFINITY, f64::min);

    // The search widens the swarm to at least one particle per expert; log what actually ran.
    let effective = SwarmConfig {
        swarm_size: cfg.swarm.swarm_size.max(experts),
        ..cfg.swarm.clone()
    };
    let mut header = RunHeader::new(&effective, experts, experts);
    header.seed_from_entropy = cfg.seed_from_entropy;
    header.label = cfg.label.clone();
    header.utility = Some(json!({
        "kind": "token-composition",
        "contexts": cfg.token_contexts,
        "targets": cfg.token_targets,
    }));
    ensure_parent(&cfg.log_path)?;
    let mut sink = JsonlSink::create(&cfg.log_path, &header)?;
    for record in &outcome.search.log {
        sink.write_line(&LogLine::Iteration(record.clone()))?;
    }
    sink.finish()?;
    ensure_parent(&cfg.best_path)?;
    save_checkpoint(&ParamVector::new(outcome.row.clone())?, &cfg.best_path)?;

    print(&json!({
        "seed": cfg.swarm.seed,
        "row": outcome.row,
        "mean_kl": -outcome.utility,
        "best_pure_mean_kl": best_pure,
        "iterations": outcome.search.state.iteration,
        "log": cfg.log_path,
        "best": cfg.best_path,
    }))
}

fn grid(config: &Path, budget: usize) -> Result<()> {
    let cfg = RunConfigFile::load(config)?;
    let utility = cfg.utility.build()?;
    let experts = cfg.experts.load()?;
    let outcome = grid_search(&experts, utility.as_ref(), &cfg.swarm, &cfg.grid, budget, cfg.swarm.seed)?;
    ensure_parent(&cfg.best_path)?;
    save_checkpoint(&outcome.best, &cfg.best_path)?;
    print(&json!({
        "seed": cfg.swarm.seed,
        "budget": budget,
        "grid_size": cfg.grid.cardinality(),
        "best_index": outcome.best_index,
        "f_best": outcome.f_best,
        "best_config": outcome.best_config,
        "runs": outcome.runs,
        "best": cfg.best_path,
    }))
}

fn inject(log_path: &Path, expert: &Path, resume: bool) -> Result<()> {
    let log = read_log(log_path)?;
    let spec: UtilitySpec = log
        .header
        .utility
        .clone()
        .ok_or_else(|| anyhow!("log header records no utility"))
        .and_then(|v| serde_json::from_value(v).map_err(|e| anyhow!("log utility cannot be rebuilt: {e}")))?;
    let utility = spec.build()?;
    let cfg = log.header.config.clone();
    let state = log.final_state()?;
    let newcomer = load_checkpoint(expert)?;
    let mut rng = injection_rng(cfg.seed, log.injection_count());
    let (state, event) = inject_expert(&state, newcomer, utility.as_ref(), &cfg, &mut rng)?;

    let mut sink = JsonlSink::append(log_path)?;
    sink.write_line(&LogLine::Injection(event.clone()))?;
    let mut summary = json!({
        "particle": event.particle,
        "iteration": event.iteration,
        "utility": event.utility,
        "became_global_best": event.became_global_best,
        "f_g": state.f_g,
    });
    if resume {
        let position = log
            .records
            .last()
            .and_then(|r| r.rng_position)
            .ok_or_else(|| anyhow!("log does not record the RNG position needed to resume"))?;
        let mut swarm = Swarm::resume(state, cfg, position)?;
        let start = swarm.state().iteration;
        swarm.run(utility.as_ref(), &mut sink)?;
        summary["resumed_iterations"] = json!(swarm.state().iteration - start);
        summary["f_g"] = json!(swarm.state().f_g);
    }
    sink.finish()?;
    print(&summary)
}

fn remove_replay(log_path: &Path, expert_id: usize, output: Option<&Path>) -> Result<()> {
    let log = read_log(log_path)?;
    let adjusted = replay_removal(&log.records, expert_id)?;
    let mut particles = Vec::new();
    for (id, x) in &adjusted {
        let written = match output {
            Some(dir) => {
                fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
                let path = dir.join(format!("particle-{id}.mswm"));
                save_checkpoint(x, &path)?;
                Some(path)
            }
            None => None,
        };
        let coords: Vec<f32> = x.iter().map(|&v| v as f32).collect();
        particles.push(json!({ "id": id, "x": coords, "checkpoint": written }));
    }
    print(&json!({ "removed": expert_id, "particles": particles }))
}

fn soup(mode: SoupMode, paths: &[PathBuf], config: Option<&Path>, output: Option<&Path>) -> Result<()> {
    let experts = paths.iter().map(load_checkpoint).collect::<model_swarms::Result<Vec<_>>>()?;
    let (soup, summary) = match mode {
        SoupMode::Uniform => {
            let soup = uniform_soup(&experts)?;
            (soup, json!({ "mode": "uniform", "experts": experts.len() }))
        }
        SoupMode::Greedy => {
            let Some(config) = config else {
                bail!("greedy soup needs --config to select a utility");
            };
            let utility = RunConfigFile::load(config)?.utility.build()?;
            let out = greedy_soup(&experts, utility.as_ref())?;
            let summary = json!({
                "mode": "greedy",
                "experts": experts.len(),
                "members": out.members,
                "utility": out.utility,
            });
            (out.soup, summary)
        }
    };
    let mut summary = summary;
    if let Some(path) = output {
        ensure_parent(path)?;
        save_checkpoint(&soup, path)?;
        summary["output"] = json!(path);
    } else {
        summary["soup"] = json!(soup.iter().map(|&v| v as f32).collect::<Vec<_>>());
    }
    print(&summary)
}

fn analyze(matrices: Option<(PathBuf, PathBuf)>, log: Option<&Path>) -> Result<()> {
    if matrices.is_none() && log.is_none() {
        bail!("analyze needs --pre and --post, or --log");
    }
    let mut out = json!({});
    if let Some((pre, post)) = matrices {
        let pre = CorrectnessMatrix::load(pre)?;
        let post = CorrectnessMatrix::load(post)?;
        out["questions"] = json!(pre.questions());
        out["c_surge"] = json!(c_surge(&pre, &post)?);
        // `null` when no question started out all-wrong.
        out["c_emerge"] = json!(c_emerge(&pre, &post)?);
    }
    if let Some(path) = log {
        let report = rank_report(&read_log(path)?.records)?;
        out["rank"] = json!({
            "particle": report.particle,
            "start_rank": report.start_rank,
            "start_utility": report.start_utility,
            "final_utility": report.final_utility,
        });
    }
    print(&out)
}

fn parse_coords(text: &str) -> Result<(usize, usize)> {
    let (a, b) = text
        .split_once(',')
        .ok_or_else(|| anyhow!("--coords expects two indices like 0,1"))?;
    let parse = |s: &str| {
        s.trim()
            .parse::<usize>()
            .map_err(|_| anyhow!("--coords index {s:?} is not a nonnegative integer"))
    };
    Ok((parse(a)?, parse(b)?))
}

fn export(log: &Path, coords: &str, output: Option<&Path>) -> Result<()> {
    let coords = parse_coords(coords)?;
    let csv = export_trajectory(&read_log(log)?.records, coords)?;
    match output {
        Some(path) => {
            ensure_parent(path)?;
            fs::write(path, csv).with_context(|| format!("writing {}", path.display()))?;
        }
        None => print!("{csv}"),
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coords_parse() {
        assert_eq!(parse_coords("0,3").unwrap(), (0, 3));
        assert_eq!(parse_coords(" 2 , 1 ").unwrap(), (2, 1));
        assert!(parse_coords("1").is_err());
        assert!(parse_coords("a,1").is_err());
    }
}
