//! Command-line front end: scenario generation, planning, execution,
//! experiment sweeps, and candidate ranking reports.

pub mod config;
pub mod experiment;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use s3o_core::executor::run_trials;
use s3o_core::partition::{
    adjacency, base_voronoi, enumerate_candidates, rank_and_select, regroup, score_candidates,
};
use s3o_core::planner::{plan_workspace, PlanError, PlanOutput, PlannerMode, Workspace};
use s3o_core::pnm::{field_pgm, partition_ppm};
use s3o_core::world::{generate_scenario, Scenario};

pub use config::{sibling, RunConfig};

/// Exit status for a successful command.
pub const EXIT_OK: u8 = 0;
/// Exit status for bad input, configuration, or I/O.
pub const EXIT_ERROR: u8 = 1;
/// Exit status of `plan` when no feasible plan exists.
pub const EXIT_NO_PLAN: u8 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "s3o",
    version,
    about = "Feasibility-aware symbolic state space planning for mobile pick-up tasks"
)]
pub struct Cli {
    /// TOML file overriding the default run configuration.
    #[arg(long, global = true, env = "S3O_CONFIG")]
    pub config: Option<PathBuf>,
    /// Worker threads (0 = every available CPU). Results do not depend on it.
    #[arg(long, global = true, env = "S3O_WORKERS")]
    pub workers: Option<usize>,
    /// Suppress progress messages.
    #[arg(long, global = true, env = "S3O_QUIET")]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate seeded scenarios as `scenario_<seed>.txt`.
    Gen(GenArgs),
    /// Plan one scenario with one planner mode.
    Plan(PlanArgs),
    /// Execute a plan file under noise for a number of trials.
    Exec(ExecArgs),
    /// Plan and execute a scenario directory with several modes.
    Experiment(ExperimentArgs),
    /// Rank the candidate state spaces of a scenario.
    Score(ScoreArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// First scenario seed; later scenarios use consecutive seeds.
    #[arg(long, env = "S3O_SEED")]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 1)]
    pub count: u64,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Replace existing scenario files.
    #[arg(long)]
    pub overwrite: bool,
}

#[derive(Debug, Args)]
pub struct PlanArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    #[arg(long, default_value = "S3O_GROP_STAR")]
    pub mode: PlannerMode,
    #[arg(long, env = "S3O_SEED")]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write one PGM field per object and a PPM of the chosen partition.
    #[arg(long)]
    pub emit_heatmaps: bool,
}

#[derive(Debug, Args)]
pub struct ExecArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    #[arg(long)]
    pub plan: PathBuf,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long, env = "S3O_SEED")]
    pub seed: Option<u64>,
    /// Per-trial CSV.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    #[arg(long)]
    pub scenario_dir: PathBuf,
    /// Comma-separated planner modes.
    #[arg(long, value_delimiter = ',')]
    pub modes: Option<Vec<PlannerMode>>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long, env = "S3O_SEED")]
    pub seed: Option<u64>,
    /// Summary CSV; per-mode detail CSVs are written beside it.
    #[arg(long)]
    pub out: PathBuf,
    /// Progress journal; defaults to `<out>.journal.jsonl`.
    #[arg(long)]
    pub journal: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    #[arg(long, env = "S3O_SEED")]
    pub seed: Option<u64>,
    /// Candidate report CSV.
    #[arg(long)]
    pub out: PathBuf,
}

/// Parses `args`, runs the command, and returns the process exit status.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
        }
    };
    match dispatch(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_ERROR
        }
    }
}

fn resolve(cli: &Cli, seed: Option<u64>) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    if let Some(w) = cli.workers {
        cfg.planner.workers = w;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn dispatch(cli: &Cli) -> Result<u8> {
    match &cli.command {
        Command::Gen(a) => cmd_gen(&resolve(cli, a.seed)?, a, cli.quiet),
        Command::Plan(a) => cmd_plan(&resolve(cli, a.seed)?, a, cli.quiet),
        Command::Exec(a) => {
            let mut cfg = resolve(cli, a.seed)?;
            if let Some(t) = a.trials {
                cfg.trials = t;
            }
            cmd_exec(&cfg, a, cli.quiet)
        }
        Command::Experiment(a) => {
            let mut cfg = resolve(cli, a.seed)?;
            if let Some(t) = a.trials {
                cfg.trials = t;
            }
            if let Some(m) = &a.modes {
                cfg.modes = m.clone();
            }
            cmd_experiment(&cfg, a, cli.quiet)
        }
        Command::Score(a) => cmd_score(&resolve(cli, a.seed)?, a),
    }
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

pub fn cmd_gen(cfg: &RunConfig, a: &GenArgs, quiet: bool) -> Result<u8> {
    if !a.out_dir.is_dir() {
        bail!("output directory {} does not exist", a.out_dir.display());
    }
    let seeds = cfg.seed
        ..cfg
            .seed
            .checked_add(a.count)
            .context("seed range overflows")?;
    let paths: Vec<PathBuf> = seeds
        .clone()
        .map(|s| a.out_dir.join(format!("scenario_{s}.txt")))
        .collect();
    if !a.overwrite {
        if let Some(p) = paths.iter().find(|p| p.exists()) {
            bail!("{} exists; pass --overwrite to replace it", p.display());
        }
    }
    for (seed, path) in seeds.zip(&paths) {
        let s = generate_scenario(seed, &cfg.generator)?;
        write(path, s.to_text())?;
    }
    write(&a.out_dir.join("gen.config.toml"), cfg.to_toml())?;
    if !quiet {
        eprintln!("wrote {} scenarios to {}", paths.len(), a.out_dir.display());
    }
    Ok(EXIT_OK)
}

pub fn cmd_plan(cfg: &RunConfig, a: &PlanArgs, quiet: bool) -> Result<u8> {
    cfg.planner.validate()?;
    let scenario =
        Scenario::load(&a.scenario).with_context(|| format!("loading {}", a.scenario.display()))?;
    scenario.validate()?;
    cfg.echo_beside(&a.out)?;
    let ws = Workspace::new(&scenario, &cfg.planner.feasibility);
    let outcome = match plan_workspace(&ws, a.mode, &cfg.planner, cfg.seed) {
        Ok(o) => o,
        Err(PlanError::NoPlan(msg)) => {
            eprintln!("no plan: {msg}");
            return Ok(EXIT_NO_PLAN);
        }
        Err(e) => return Err(e.into()),
    };
    let out = &outcome.output;
    write(&a.out, out.to_text())?;
    write(
        &sibling(&a.out, "timing.json"),
        format!("{{\"planning_time_s\": {}}}\n", outcome.elapsed_s),
    )?;
    if a.emit_heatmaps {
        emit_heatmaps(&ws, out, &a.out)?;
    }
    if !quiet {
        eprintln!(
            "{}: utility {:.2}, {} navs, {} picks, state space {} ({:.2} s)",
            out.mode,
            out.plan.utility,
            out.plan.nav_count(),
            out.plan.pick_count(),
            out.state_space_id,
            outcome.elapsed_s
        );
    }
    Ok(EXIT_OK)
}

/// Heatmap file names beside `out`: `<out>.field_o<k>.pgm` and `<out>.partition.ppm`.
pub fn heatmap_paths(ws: &Workspace, out: &Path) -> (Vec<PathBuf>, PathBuf) {
    let fields = ws
        .fields
        .iter()
        .map(|f| sibling(out, &format!("field_{}.pgm", f.object_id)))
        .collect();
    (fields, sibling(out, "partition.ppm"))
}

fn emit_heatmaps(ws: &Workspace, out: &PlanOutput, path: &Path) -> Result<()> {
    let (field_paths, partition_path) = heatmap_paths(ws, path);
    for (f, p) in ws.fields.iter().zip(&field_paths) {
        write(p, field_pgm(f))?;
    }
    let base = base_voronoi(&ws.objects, &ws.occ, &ws.feasibility)?;
    let ss = regroup(&base, &out.state_space_id)
        .with_context(|| format!("plan names unknown state space {}", out.state_space_id))?;
    write(&partition_path, partition_ppm(&ss, &ws.occ, &ws.objects))
}

pub fn cmd_exec(cfg: &RunConfig, a: &ExecArgs, quiet: bool) -> Result<u8> {
    cfg.validate()?;
    let scenario =
        Scenario::load(&a.scenario).with_context(|| format!("loading {}", a.scenario.display()))?;
    scenario.validate()?;
    let text =
        fs::read_to_string(&a.plan).with_context(|| format!("reading {}", a.plan.display()))?;
    let plan =
        PlanOutput::from_text(&text).with_context(|| format!("parsing {}", a.plan.display()))?;
    cfg.echo_beside(&a.out)?;
    let ws = Workspace::new(&scenario, &cfg.planner.feasibility);
    let trials = run_trials(
        &ws,
        Some(&plan.plan),
        cfg.trials,
        &cfg.noise,
        &cfg.planner.cost,
        cfg.seed,
        0,
    );
    let mut w =
        csv::Writer::from_path(&a.out).with_context(|| format!("writing {}", a.out.display()))?;
    w.write_record(["trial", "completion", "time"])?;
    for (t, r) in trials.iter().enumerate() {
        w.write_record([t.to_string(), r.completion.to_string(), r.time.to_string()])?;
    }
    w.flush()?;
    if !quiet {
        let n = trials.len() as f64;
        eprintln!(
            "{} trials: mean completion {:.3}, mean time {:.1} s",
            trials.len(),
            trials.iter().map(|r| r.completion).sum::<f64>() / n,
            trials.iter().map(|r| r.time).sum::<f64>() / n
        );
    }
    Ok(EXIT_OK)
}

pub fn cmd_experiment(cfg: &RunConfig, a: &ExperimentArgs, quiet: bool) -> Result<u8> {
    cfg.validate()?;
    let scenarios = experiment::load_scenario_dir(&a.scenario_dir)?;
    cfg.echo_beside(&a.out)?;
    let journal = a
        .journal
        .clone()
        .unwrap_or_else(|| sibling(&a.out, "journal.jsonl"));
    let report = experiment::run_experiment(&scenarios, cfg, &a.out, &journal, !quiet)?;
    if !quiet {
        for r in report.summary.iter().filter(|r| r.group == "all") {
            eprintln!(
                "{}: completion {:.3}, time {:.1} s",
                r.mode, r.mean_completion, r.mean_time
            );
        }
    }
    Ok(EXIT_OK)
}

pub const SCORE_HEADER: [&str; 6] = [
    "rank",
    "candidate",
    "state_space",
    "locations",
    "score",
    "selection_weight",
];

pub fn cmd_score(cfg: &RunConfig, a: &ScoreArgs) -> Result<u8> {
    cfg.planner.validate()?;
    let scenario =
        Scenario::load(&a.scenario).with_context(|| format!("loading {}", a.scenario.display()))?;
    scenario.validate()?;
    cfg.echo_beside(&a.out)?;
    let ws = Workspace::new(&scenario, &cfg.planner.feasibility);
    let base = base_voronoi(&ws.objects, &ws.occ, &ws.feasibility)?;
    let all = enumerate_candidates(&base, &adjacency(&base), &cfg.planner.candidates);
    let scores = score_candidates(&all, &ws.fields, &ws.feasibility, cfg.seed)?;
    let kept = rank_and_select(all.clone(), &scores, cfg.planner.top_k)?;
    let ranked = rank_and_select(all, &scores, scores.len())?;
    let mut w =
        csv::Writer::from_path(&a.out).with_context(|| format!("writing {}", a.out.display()))?;
    w.write_record(SCORE_HEADER)?;
    for (rank, c) in ranked.candidates.iter().enumerate() {
        let weight = kept
            .selection_weights
            .get(rank)
            .map(|x| x.to_string())
            .unwrap_or_default();
        w.write_record([
            rank.to_string(),
            c.index.to_string(),
            c.state_space.id.clone(),
            c.state_space.locations.len().to_string(),
            c.score.to_string(),
            weight,
        ])?;
    }
    w.flush()?;
    Ok(EXIT_OK)
}
