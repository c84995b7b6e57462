//! Batch experiments with a resumable JSONL progress journal.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use s3o_core::executor::{
    evaluate_scenario, prepare_batch, summarize, summary_csv, BatchEntry, ScenarioRecord,
    SummaryRow,
};
use s3o_core::planner::PlannerMode;
use s3o_core::world::Scenario;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;

/// Identifies the run a journal belongs to.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct JournalHeader {
    config: String,
    scenarios: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct JournalEntry {
    mode: PlannerMode,
    record: ScenarioRecord,
}

pub const DETAIL_HEADER: [&str; 10] = [
    "mode",
    "scenario_index",
    "scenario_seed",
    "group",
    "difficulty_area",
    "plan_utility",
    "nav_count",
    "trial",
    "completion",
    "time",
];

#[derive(Clone, Debug)]
pub struct ExperimentReport {
    pub summary: Vec<SummaryRow>,
    pub summary_path: PathBuf,
    pub detail_paths: Vec<PathBuf>,
    /// Entries taken from an existing journal instead of being recomputed.
    pub resumed: usize,
}

/// Loads every `scenario_*.txt` in `dir`, ordered by scenario seed then file name.
pub fn load_scenario_dir(dir: &Path) -> Result<Vec<Scenario>> {
    let mut found = Vec::new();
    for entry in fs::read_dir(dir)
        .with_context(|| format!("reading scenario directory {}", dir.display()))?
    {
        let path = entry?.path();
        let name = path
            .file_name()
            .and_then(|n| n.to_str())
            .unwrap_or_default();
        if name.starts_with("scenario_") && name.ends_with(".txt") {
            let s = Scenario::load(&path).with_context(|| format!("loading {}", path.display()))?;
            found.push((s.seed, name.to_string(), s));
        }
    }
    if found.is_empty() {
        bail!("no scenario_*.txt files in {}", dir.display());
    }
    found.sort_by(|a, b| (a.0, &a.1).cmp(&(b.0, &b.1)));
    Ok(found.into_iter().map(|(_, _, s)| s).collect())
}

/// Per-mode detail CSV path: `<stem>_<MODE>_detail.csv` beside `summary`.
pub fn detail_path(summary: &Path, mode: PlannerMode) -> PathBuf {
    let stem = summary
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("experiment");
    summary.with_file_name(format!("{stem}_{mode}_detail.csv"))
}

fn read_journal(path: &Path, header: &JournalHeader) -> Result<Vec<JournalEntry>> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e).with_context(|| format!("opening journal {}", path.display())),
    };
    let mut lines = BufReader::new(file).lines();
    let Some(first) = lines.next().transpose()? else {
        return Ok(Vec::new());
    };
    match serde_json::from_str::<JournalHeader>(&first) {
        Ok(h) if h == *header => {}
        Ok(_) => bail!(
            "journal {} belongs to a different config or scenario set; remove it to start over",
            path.display()
        ),
        // An interrupted first write leaves nothing worth keeping.
        Err(_) => return Ok(Vec::new()),
    }
    let mut entries = Vec::new();
    for line in lines {
        // A torn final line from an interrupted run ends the usable prefix.
        match serde_json::from_str::<JournalEntry>(&line?) {
            Ok(e) => entries.push(e),
            Err(_) => break,
        }
    }
    Ok(entries)
}

fn rewrite_journal(path: &Path, header: &JournalHeader, entries: &[JournalEntry]) -> Result<File> {
    let mut f =
        File::create(path).with_context(|| format!("writing journal {}", path.display()))?;
    writeln!(f, "{}", serde_json::to_string(header)?)?;
    for e in entries {
        writeln!(f, "{}", serde_json::to_string(e)?)?;
    }
    f.flush()?;
    drop(f);
    Ok(OpenOptions::new().append(true).open(path)?)
}

fn write_detail(path: &Path, mode: PlannerMode, records: &[ScenarioRecord]) -> Result<()> {
    let mut w =
        csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    w.write_record(DETAIL_HEADER)?;
    for r in records {
        let utility = r.plan_utility.map(|u| u.to_string()).unwrap_or_default();
        for (t, trial) in r.trials.iter().enumerate() {
            w.write_record([
                mode.name().to_string(),
                r.index.to_string(),
                r.scenario_seed.to_string(),
                r.group.name().to_string(),
                r.difficulty_area.to_string(),
                utility.clone(),
                r.nav_count.to_string(),
                t.to_string(),
                trial.completion.to_string(),
                trial.time.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Plans and executes every scenario with every configured mode, appending
/// each finished (mode, scenario) pair to `journal` so a rerun resumes.
pub fn run_experiment(
    scenarios: &[Scenario],
    cfg: &RunConfig,
    summary_path: &Path,
    journal: &Path,
    progress: bool,
) -> Result<ExperimentReport> {
    cfg.validate()?;
    // results never depend on the worker count, so a resume may change it
    let mut keyed = cfg.clone();
    keyed.planner.workers = 0;
    let header = JournalHeader {
        config: keyed.to_toml(),
        scenarios: scenarios.iter().map(|s| s.seed).collect(),
    };
    let previous = read_journal(journal, &header)?;
    let mut out = rewrite_journal(journal, &header, &previous)?;
    let resumed = previous.len();
    let mut done: BTreeMap<(PlannerMode, usize), ScenarioRecord> = previous
        .into_iter()
        .map(|e| ((e.mode, e.record.index), e.record))
        .collect();

    let (workspaces, areas, groups) = prepare_batch(scenarios, &cfg.planner.feasibility);
    let n = scenarios.len();
    for &mode in &cfg.modes {
        for (i, ws) in workspaces.iter().enumerate() {
            if done.contains_key(&(mode, i)) {
                continue;
            }
            let entry = BatchEntry {
                ws,
                index: i,
                scenario_seed: scenarios[i].seed,
                difficulty_area: areas[i],
                group: groups[i],
            };
            let record =
                evaluate_scenario(entry, mode, cfg.trials, &cfg.planner, &cfg.noise, cfg.seed)?;
            if progress {
                eprintln!(
                    "{mode} {}/{n} completion {:.3} time {:.1}",
                    i + 1,
                    record.mean_completion(),
                    record.mean_time()
                );
            }
            writeln!(
                out,
                "{}",
                serde_json::to_string(&JournalEntry {
                    mode,
                    record: record.clone()
                })?
            )?;
            out.flush()?;
            done.insert((mode, i), record);
        }
    }

    let mut summary = Vec::new();
    let mut detail_paths = Vec::new();
    for &mode in &cfg.modes {
        let records: Vec<ScenarioRecord> = (0..n).map(|i| done[&(mode, i)].clone()).collect();
        summary.extend(summarize(mode, &records));
        let path = detail_path(summary_path, mode);
        write_detail(&path, mode, &records)?;
        detail_paths.push(path);
    }
    fs::write(summary_path, summary_csv(&summary))
        .with_context(|| format!("writing {}", summary_path.display()))?;
    Ok(ExperimentReport {
        summary,
        summary_path: summary_path.to_path_buf(),
        detail_paths,
        resumed,
    })
}
