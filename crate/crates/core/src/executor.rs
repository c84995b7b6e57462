//! Stochastic execution of grounded plans and batch evaluation.
//!
//! Navigation lands at the goal plus isotropic Gaussian noise. A pick succeeds
//! with probability `Fea^m` at the realized pose, scaled by a reach-error
//! factor. Failed picks are recorded and execution continues.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::feasibility::FeasibilityParams;
use crate::planner::{
    plan_workspace, CostParams, GroundedAction, GroundedPlan, PlanError, PlannerConfig,
    PlannerMode, Workspace,
};
use crate::seeds::{derive_seed, rng_for, stream, Rng};
use crate::world::{reachable_from, NavGrid, ObjectId, Pose2D, Scenario};

/// Landing retries before falling back to the exact goal.
const LANDING_TRIES: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseModel {
    /// Standard deviation of the landing error per axis, meters.
    pub nav_sigma: f64,
    /// Standard deviation of the end-effector placement error, meters.
    pub reach_sigma: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            nav_sigma: 0.05,
            reach_sigma: 0.02,
        }
    }
}

impl NoiseModel {
    pub fn none() -> Self {
        Self {
            nav_sigma: 0.0,
            reach_sigma: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), PlanError> {
        if !(self.nav_sigma >= 0.0
            && self.reach_sigma >= 0.0
            && self.nav_sigma.is_finite()
            && self.reach_sigma.is_finite())
        {
            return Err(PlanError::InvalidParams(format!(
                "noise must be finite and >= 0: {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExecutionResult {
    pub per_object_success: BTreeMap<ObjectId, bool>,
    pub completion_rate: f64,
    pub execution_time: f64,
    /// Realized robot pose after each step.
    pub trace: Vec<Pose2D>,
}

/// Executes plans against one workspace, reusing its path-length cache.
pub struct Executor<'w> {
    ws: &'w Workspace,
    nav: NavGrid<'w>,
}

impl<'w> Executor<'w> {
    pub fn new(ws: &'w Workspace) -> Self {
        Self {
            ws,
            nav: NavGrid::new(&ws.occ),
        }
    }

    fn land(
        &mut self,
        from_cell: usize,
        goal: Pose2D,
        sigma: f64,
        rng: &mut Rng,
    ) -> (Pose2D, usize) {
        let g = self.ws.occ.geometry;
        let goal_cell = g.cell_of(goal);
        if sigma > 0.0 {
            let normal = Normal::new(0.0, sigma).expect("sigma is finite and positive");
            for _ in 0..LANDING_TRIES {
                let p = Pose2D::new(goal.x + normal.sample(rng), goal.y + normal.sample(rng));
                if let Some(c) = g.cell_of(p).filter(|&c| !self.ws.occ.is_blocked(c)) {
                    if self.nav.length_cells(from_cell, c).is_some() {
                        return (p, c);
                    }
                }
            }
        }
        (goal, goal_cell.unwrap_or(from_cell))
    }

    pub fn execute(
        &mut self,
        plan: &GroundedPlan,
        noise: &NoiseModel,
        cost: &CostParams,
        rng: &mut Rng,
    ) -> ExecutionResult {
        let g = self.ws.occ.geometry;
        let mut per_object_success: BTreeMap<ObjectId, bool> =
            self.ws.objects.iter().map(|o| (o.id, false)).collect();
        let mut at = self.ws.start;
        let mut at_cell = g.cell_of(at).unwrap_or(0);
        let mut time = 0.0;
        let mut trace = Vec::with_capacity(plan.steps.len());
        let reach = (noise.reach_sigma > 0.0)
            .then(|| Normal::new(0.0, noise.reach_sigma).expect("finite sigma"));
        for step in &plan.steps {
            match *step {
                GroundedAction::Nav { to, length, .. } => {
                    let (p, c) = self.land(at_cell, to, noise.nav_sigma, rng);
                    let realized = self.nav.length_cells(at_cell, c).unwrap_or(length);
                    time += realized / cost.speed + cost.gamma;
                    at = p;
                    at_cell = c;
                }
                GroundedAction::Pick { object, .. } => {
                    time += cost.delta;
                    let f = self
                        .ws
                        .field(object)
                        .map_or(0.0, |field| field.value_at(at));
                    let factor = match &reach {
                        Some(n) => {
                            let e: f64 = n.sample(rng).abs();
                            (-e * e / (2.0 * noise.reach_sigma * noise.reach_sigma * 25.0)).exp()
                        }
                        None => 1.0,
                    };
                    let ok = rng.random::<f64>() < f * factor;
                    if ok {
                        per_object_success.insert(object, true);
                    }
                }
            }
            trace.push(at);
        }
        let total = per_object_success.len().max(1);
        let successes = per_object_success.values().filter(|v| **v).count();
        ExecutionResult {
            per_object_success,
            completion_rate: successes as f64 / total as f64,
            execution_time: time,
            trace,
        }
    }
}

pub fn execute(
    plan: &GroundedPlan,
    ws: &Workspace,
    noise: &NoiseModel,
    cost: &CostParams,
    rng: &mut Rng,
) -> ExecutionResult {
    Executor::new(ws).execute(plan, noise, cost, rng)
}

/// Streaming mean and sample standard deviation.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RunningStats {
    n: usize,
    mean: f64,
    m2: f64,
}

impl RunningStats {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn count(&self) -> usize {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Sample standard deviation; 0 with fewer than two values.
    pub fn std(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            (self.m2.max(0.0) / (self.n - 1) as f64).sqrt()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Difficulty {
    Easy,
    Moderate,
    Difficult,
}

impl Difficulty {
    pub const ALL: [Difficulty; 3] = [
        Difficulty::Easy,
        Difficulty::Moderate,
        Difficulty::Difficult,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Difficulty::Easy => "easy",
            Difficulty::Moderate => "moderate",
            Difficulty::Difficult => "difficult",
        }
    }
}

impl fmt::Display for Difficulty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Total area (m^2, summed over objects) of cells reachable from the start
/// from which the object can be picked.
pub fn difficulty_area(ws: &Workspace) -> f64 {
    let reachable = reachable_from(&ws.occ, ws.start);
    let cell_area = ws.occ.geometry.resolution.powi(2);
    ws.fields
        .iter()
        .map(|f| {
            f.values
                .iter()
                .zip(&reachable)
                .filter(|(v, r)| **v > 0.0 && **r)
                .count()
        })
        .sum::<usize>() as f64
        * cell_area
}

/// Tercile split: largest area is easiest; remainders go to the easier groups.
pub fn tercile_groups(areas: &[f64]) -> Vec<Difficulty> {
    let n = areas.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| areas[b].total_cmp(&areas[a]).then(a.cmp(&b)));
    let base = n / 3;
    let rem = n % 3;
    let sizes = [
        base + usize::from(rem > 0),
        base + usize::from(rem > 1),
        base,
    ];
    let mut out = vec![Difficulty::Easy; n];
    let mut pos = 0;
    for (group, size) in Difficulty::ALL.into_iter().zip(sizes) {
        for &i in &order[pos..pos + size] {
            out[i] = group;
        }
        pos += size;
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub completion: f64,
    pub time: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioRecord {
    pub index: usize,
    pub scenario_seed: u64,
    pub difficulty_area: f64,
    pub group: Difficulty,
    /// `None` when the planner found no feasible plan; trials then score zero.
    pub plan_utility: Option<f64>,
    pub nav_count: usize,
    pub trials: Vec<TrialRecord>,
}

impl ScenarioRecord {
    pub fn mean_completion(&self) -> f64 {
        self.trials.iter().map(|t| t.completion).sum::<f64>() / self.trials.len().max(1) as f64
    }

    pub fn mean_time(&self) -> f64 {
        self.trials.iter().map(|t| t.time).sum::<f64>() / self.trials.len().max(1) as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub mode: PlannerMode,
    pub group: String,
    pub mean_completion: f64,
    pub std_completion: f64,
    pub mean_time: f64,
    pub std_time: f64,
    pub trials: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub mode: PlannerMode,
    pub records: Vec<ScenarioRecord>,
    pub summary: Vec<SummaryRow>,
}

/// Plan seed for scenario `index` of a batch.
pub fn plan_seed(seed: u64, index: usize) -> u64 {
    derive_seed(seed, stream::EVALUATION, index as u64)
}

/// Executes `plan` for `trials` independent trials. Trial `t` of scenario
/// `index` always uses the same random stream, whatever the mode.
pub fn run_trials(
    ws: &Workspace,
    plan: Option<&GroundedPlan>,
    trials: usize,
    noise: &NoiseModel,
    cost: &CostParams,
    seed: u64,
    index: usize,
) -> Vec<TrialRecord> {
    let Some(plan) = plan else {
        return vec![
            TrialRecord {
                completion: 0.0,
                time: 0.0
            };
            trials
        ];
    };
    let mut exec = Executor::new(ws);
    let base = derive_seed(seed, stream::EXECUTION, index as u64);
    (0..trials)
        .map(|t| {
            let mut rng = rng_for(base, stream::EXECUTION, t as u64);
            let r = exec.execute(plan, noise, cost, &mut rng);
            TrialRecord {
                completion: r.completion_rate,
                time: r.execution_time,
            }
        })
        .collect()
}

/// Plans scenario `index` with its derived seed; `Ok(None)` when no plan exists.
pub fn plan_for_evaluation(
    ws: &Workspace,
    mode: PlannerMode,
    cfg: &PlannerConfig,
    seed: u64,
    index: usize,
) -> Result<Option<GroundedPlan>, PlanError> {
    match plan_workspace(ws, mode, cfg, plan_seed(seed, index)) {
        Ok(outcome) => Ok(Some(outcome.output.plan)),
        Err(PlanError::NoPlan(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Per-group rows (easy, moderate, difficult, all) pooled over trials.
pub fn summarize(mode: PlannerMode, records: &[ScenarioRecord]) -> Vec<SummaryRow> {
    let groups: Vec<(String, Option<Difficulty>)> = Difficulty::ALL
        .into_iter()
        .map(|d| (d.name().to_string(), Some(d)))
        .chain([("all".to_string(), None)])
        .collect();
    groups
        .into_iter()
        .map(|(name, group)| {
            let mut c = RunningStats::default();
            let mut t = RunningStats::default();
            for r in records
                .iter()
                .filter(|r| group.is_none_or(|g| r.group == g))
            {
                for trial in &r.trials {
                    c.push(trial.completion);
                    t.push(trial.time);
                }
            }
            SummaryRow {
                mode,
                group: name,
                mean_completion: c.mean(),
                std_completion: c.std(),
                mean_time: t.mean(),
                std_time: t.std(),
                trials: c.count(),
            }
        })
        .collect()
}

pub const SUMMARY_HEADER: &str =
    "mode,group,mean_completion,std_completion,mean_time,std_time,trials";

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut out = format!("{SUMMARY_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.mode, r.group, r.mean_completion, r.std_completion, r.mean_time, r.std_time, r.trials
        );
    }
    out
}

/// One scenario of a batch, prepared for evaluation.
#[derive(Clone, Copy, Debug)]
pub struct BatchEntry<'w> {
    pub ws: &'w Workspace,
    pub index: usize,
    pub scenario_seed: u64,
    pub difficulty_area: f64,
    pub group: Difficulty,
}

/// Workspaces of a batch with their difficulty areas and tercile groups.
pub fn prepare_batch(
    scenarios: &[Scenario],
    feasibility: &FeasibilityParams,
) -> (Vec<Workspace>, Vec<f64>, Vec<Difficulty>) {
    let workspaces: Vec<Workspace> = scenarios
        .iter()
        .map(|s| Workspace::new(s, feasibility))
        .collect();
    let areas: Vec<f64> = workspaces.iter().map(difficulty_area).collect();
    let groups = tercile_groups(&areas);
    (workspaces, areas, groups)
}

/// Plans and executes one batch entry.
pub fn evaluate_scenario(
    entry: BatchEntry<'_>,
    mode: PlannerMode,
    trials: usize,
    cfg: &PlannerConfig,
    noise: &NoiseModel,
    seed: u64,
) -> Result<ScenarioRecord, PlanError> {
    let plan = plan_for_evaluation(entry.ws, mode, cfg, seed, entry.index)?;
    Ok(ScenarioRecord {
        index: entry.index,
        scenario_seed: entry.scenario_seed,
        difficulty_area: entry.difficulty_area,
        group: entry.group,
        plan_utility: plan.as_ref().map(|p| p.utility),
        nav_count: plan.as_ref().map_or(0, |p| p.nav_count()),
        trials: run_trials(
            entry.ws,
            plan.as_ref(),
            trials,
            noise,
            &cfg.cost,
            seed,
            entry.index,
        ),
    })
}

/// Plans and executes every scenario of the batch with `mode`.
pub fn evaluate(
    mode: PlannerMode,
    scenarios: &[Scenario],
    trials: usize,
    cfg: &PlannerConfig,
    noise: &NoiseModel,
    seed: u64,
) -> Result<Evaluation, PlanError> {
    if scenarios.is_empty() {
        return Err(PlanError::InvalidParams("scenario batch is empty".into()));
    }
    noise.validate()?;
    let (workspaces, areas, groups) = prepare_batch(scenarios, &cfg.feasibility);
    let records = workspaces
        .iter()
        .enumerate()
        .map(|(i, ws)| {
            let entry = BatchEntry {
                ws,
                index: i,
                scenario_seed: scenarios[i].seed,
                difficulty_area: areas[i],
                group: groups[i],
            };
            evaluate_scenario(entry, mode, trials, cfg, noise, seed)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let summary = summarize(mode, &records);
    Ok(Evaluation {
        mode,
        records,
        summary,
    })
}
