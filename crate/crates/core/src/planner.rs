//! Plan utility, grounding of task sequences into navigation/pick steps,
//! standing-pose optimization, and the planner modes.
//!
//! A grounded plan's utility is the sum of action rewards: a navigation costs
//! `len / v + gamma`, a pick costs `delta` and earns `lambda * Fea^m`. Poses
//! that leave their symbolic location pay `lambda` each.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cmaes::{CmaConfig, CmaError, CmaState, TraceRow};
use crate::feasibility::{
    build_field, joint_value, FeasibilityError, FeasibilityField, FeasibilityParams,
    LocationSampler,
};
use crate::partition::{
    adjacency, base_voronoi, enumerate_candidates, rank_and_select, score_candidates,
    CandidateLimits, LocationId, PartitionError, StateSpace,
};
use crate::seeds::{rng_for, stream, Rng};
use crate::taskplan::{enumerate_sequences, SymbolicState, TaskAction, TaskSequence};
use crate::world::{NavGrid, ObjectId, ObjectState, OccupancyGrid, Pose2D, Scenario, WorldError};

/// Utility stand-in for unreachable groundings inside the optimizer.
const INFEASIBLE_FITNESS: f64 = -1e9;

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("invalid planner parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Partition(#[from] PartitionError),
    #[error(transparent)]
    Feasibility(#[from] FeasibilityError),
    #[error(transparent)]
    Cma(#[from] CmaError),
    #[error("sequence `{0}` has no feasible grounding")]
    InfeasibleSequence(String),
    #[error("no feasible plan: {0}")]
    NoPlan(String),
    #[error("worker pool: {0}")]
    Pool(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CostParams {
    /// Robot speed in m/s.
    pub speed: f64,
    /// Fixed cost of starting a navigation.
    pub gamma: f64,
    /// Cost of one manipulation.
    pub delta: f64,
    /// Reward for a successful pickup.
    pub lambda: f64,
    /// Wall-clock planning cap in seconds.
    pub time_budget_s: f64,
    /// Motion-level samples per optimized sequence.
    pub sample_budget: usize,
}

impl Default for CostParams {
    fn default() -> Self {
        Self {
            speed: 0.4,
            gamma: 20.0,
            delta: 5.0,
            lambda: 150.0,
            time_budget_s: 300.0,
            sample_budget: 200,
        }
    }
}

impl CostParams {
    pub fn validate(&self) -> Result<(), PlanError> {
        let vals = [
            self.speed,
            self.gamma,
            self.delta,
            self.lambda,
            self.time_budget_s,
        ];
        if vals.iter().any(|v| !(*v > 0.0 && v.is_finite())) || self.sample_budget == 0 {
            return Err(PlanError::InvalidParams(format!(
                "cost parameters must be positive: {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum GroundedAction {
    Nav {
        from: Pose2D,
        to: Pose2D,
        length: f64,
    },
    Pick {
        object: ObjectId,
        robot_pose: Pose2D,
        object_pose: Pose2D,
        feasibility: f64,
    },
}

pub fn action_cost(a: &GroundedAction, p: &CostParams) -> f64 {
    match a {
        GroundedAction::Nav { length, .. } if length.is_finite() => length / p.speed + p.gamma,
        GroundedAction::Nav { .. } => f64::INFINITY,
        GroundedAction::Pick { .. } => p.delta,
    }
}

pub fn action_reward(a: &GroundedAction, p: &CostParams) -> f64 {
    match a {
        GroundedAction::Nav { .. } => -action_cost(a, p),
        GroundedAction::Pick { feasibility, .. } => -p.delta + feasibility * p.lambda,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundedPlan {
    pub steps: Vec<GroundedAction>,
    pub utility: f64,
    /// Poses that fell outside their symbolic location; each costs `lambda`.
    pub location_violations: usize,
    pub state_space_id: String,
    pub sequence_id: String,
}

impl GroundedPlan {
    /// Sum of action rewards minus the location penalty.
    pub fn recompute_utility(&self, p: &CostParams) -> f64 {
        let rewards: f64 = self.steps.iter().map(|a| action_reward(a, p)).sum();
        rewards - p.lambda * self.location_violations as f64
    }

    pub fn nav_count(&self) -> usize {
        self.steps
            .iter()
            .filter(|a| matches!(a, GroundedAction::Nav { .. }))
            .count()
    }

    pub fn pick_count(&self) -> usize {
        self.steps.len() - self.nav_count()
    }

    /// Each navigation starts where the previous one ended and every pick is
    /// made from the pose of the latest navigation.
    pub fn is_chained(&self, start: Pose2D) -> bool {
        let mut at = start;
        for a in &self.steps {
            match *a {
                GroundedAction::Nav { from, to, .. } => {
                    if from != at {
                        return false;
                    }
                    at = to;
                }
                GroundedAction::Pick { robot_pose, .. } => {
                    if robot_pose != at {
                        return false;
                    }
                }
            }
        }
        true
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PlannerMode {
    #[serde(rename = "S3O_GROP_STAR")]
    S3oGropStar,
    #[serde(rename = "S3O_GROP")]
    S3oGrop,
    #[serde(rename = "V_GROP_STAR")]
    VGropStar,
    #[serde(rename = "V_GROP")]
    VGrop,
    #[serde(rename = "V_PETLON")]
    VPetlon,
    #[serde(rename = "S3O_RANDOM")]
    S3oRandom,
}

impl PlannerMode {
    pub const ALL: [PlannerMode; 6] = [
        PlannerMode::S3oGropStar,
        PlannerMode::S3oGrop,
        PlannerMode::VGropStar,
        PlannerMode::VGrop,
        PlannerMode::VPetlon,
        PlannerMode::S3oRandom,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PlannerMode::S3oGropStar => "S3O_GROP_STAR",
            PlannerMode::S3oGrop => "S3O_GROP",
            PlannerMode::VGropStar => "V_GROP_STAR",
            PlannerMode::VGrop => "V_GROP",
            PlannerMode::VPetlon => "V_PETLON",
            PlannerMode::S3oRandom => "S3O_RANDOM",
        }
    }

    fn grounding(self) -> Grounding {
        match self {
            PlannerMode::S3oGropStar | PlannerMode::VGropStar | PlannerMode::S3oRandom => {
                Grounding::Cma
            }
            PlannerMode::S3oGrop | PlannerMode::VGrop => Grounding::Smp,
            PlannerMode::VPetlon => Grounding::Uniform,
        }
    }
}

impl fmt::Display for PlannerMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PlannerMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s
            .trim()
            .to_ascii_uppercase()
            .replace('-', "_")
            .replace('*', "_STAR");
        Self::ALL
            .into_iter()
            .find(|m| m.name() == norm)
            .ok_or_else(|| format!("unknown planner mode `{s}`"))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoseEncoding {
    /// One standing pose per location visit.
    #[default]
    PerGroup,
    /// One standing pose per pickup; repeated poses still pay `gamma`.
    PerObject,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Grounding {
    Cma,
    Smp,
    Uniform,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlannerConfig {
    pub cost: CostParams,
    pub feasibility: FeasibilityParams,
    pub candidates: CandidateLimits,
    pub top_k: usize,
    /// Search iterations per plan. S3O modes draw one candidate per iteration,
    /// with replacement; Voronoi modes plan over the base partition each time.
    pub candidate_draws: usize,
    /// Heuristically best sequences optimized per candidate.
    pub sequences_per_candidate: usize,
    pub population: usize,
    pub max_generations: usize,
    pub pose_encoding: PoseEncoding,
    /// Worker threads; 0 uses every available CPU. Never changes results.
    pub workers: usize,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            cost: CostParams::default(),
            feasibility: FeasibilityParams::default(),
            candidates: CandidateLimits::default(),
            top_k: 5,
            candidate_draws: 12,
            sequences_per_candidate: 4,
            population: 10,
            max_generations: 20,
            pose_encoding: PoseEncoding::PerGroup,
            workers: 0,
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<(), PlanError> {
        self.cost.validate()?;
        self.feasibility.validate()?;
        let counts = [
            ("top_k", self.top_k),
            ("candidate_draws", self.candidate_draws),
            ("sequences_per_candidate", self.sequences_per_candidate),
            ("max_generations", self.max_generations),
            ("max_candidates", self.candidates.max_candidates),
            ("max_group_size", self.candidates.max_group_size),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(PlanError::InvalidParams(format!("{name} must be positive")));
        }
        if self.population < 2 {
            return Err(PlanError::InvalidParams(
                "population must be at least 2".into(),
            ));
        }
        Ok(())
    }

    pub fn effective_workers(&self) -> usize {
        if self.workers == 0 {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        } else {
            self.workers
        }
    }
}

/// Immutable per-scenario planning inputs shared by all workers.
#[derive(Clone, Debug)]
pub struct Workspace {
    pub occ: OccupancyGrid,
    /// Objects still to be collected.
    pub objects: Vec<ObjectState>,
    pub start: Pose2D,
    pub fields: Vec<FeasibilityField>,
    pub feasibility: FeasibilityParams,
}

impl Workspace {
    pub fn new(scenario: &Scenario, feasibility: &FeasibilityParams) -> Self {
        let occ = scenario.occupancy();
        let objects: Vec<ObjectState> = scenario
            .objects
            .iter()
            .filter(|o| !o.collected)
            .cloned()
            .collect();
        let fields = objects
            .iter()
            .map(|o| build_field(o, &occ, feasibility))
            .collect();
        Self {
            occ,
            objects,
            start: scenario.robot_start,
            fields,
            feasibility: feasibility.clone(),
        }
    }

    pub fn field(&self, o: ObjectId) -> Option<&FeasibilityField> {
        self.fields.iter().find(|f| f.object_id == o)
    }

    pub fn object(&self, o: ObjectId) -> Option<&ObjectState> {
        self.objects.iter().find(|x| x.id == o)
    }
}

/// Pose variables of `seq`: the location each `(x, y)` pair must lie in.
pub fn pose_slots(seq: &TaskSequence, encoding: PoseEncoding) -> Vec<LocationId> {
    seq.actions
        .iter()
        .filter_map(|a| match (encoding, a) {
            (PoseEncoding::PerGroup, TaskAction::Goto { to, .. }) => Some(*to),
            (PoseEncoding::PerObject, TaskAction::Pickup { location, .. }) => Some(*location),
            _ => None,
        })
        .collect()
}

/// Objects picked from each pose slot.
fn slot_objects(seq: &TaskSequence, encoding: PoseEncoding) -> Vec<Vec<ObjectId>> {
    let mut out: Vec<Vec<ObjectId>> = Vec::new();
    for a in &seq.actions {
        match (encoding, a) {
            (PoseEncoding::PerGroup, TaskAction::Goto { .. }) => out.push(Vec::new()),
            (PoseEncoding::PerGroup, TaskAction::Pickup { object, .. }) => {
                if let Some(last) = out.last_mut() {
                    last.push(*object);
                }
            }
            (PoseEncoding::PerObject, TaskAction::Pickup { object, .. }) => out.push(vec![*object]),
            _ => {}
        }
    }
    out
}

/// Turns pose vectors into grounded plans. Owns a path-length cache, so each
/// worker uses its own.
pub struct Grounder<'w> {
    ws: &'w Workspace,
    nav: NavGrid<'w>,
}

impl<'w> Grounder<'w> {
    pub fn new(ws: &'w Workspace) -> Self {
        Self {
            ws,
            nav: NavGrid::new(&ws.occ),
        }
    }

    pub fn workspace(&self) -> &'w Workspace {
        self.ws
    }

    /// Grounds `seq` with one pose per slot. Poses snap to cell centers.
    /// `feasibility_weight` scales the pickup bonus (0 ignores feasibility).
    /// Returns `None` when a pose is blocked or a segment is unreachable.
    pub fn ground(
        &mut self,
        seq: &TaskSequence,
        ss: &StateSpace,
        encoding: PoseEncoding,
        poses: &[Pose2D],
        cost: &CostParams,
        feasibility_weight: f64,
    ) -> Result<Option<GroundedPlan>, PlanError> {
        let slots = pose_slots(seq, encoding);
        if poses.len() != slots.len() {
            return Err(PlanError::InvalidParams(format!(
                "{} poses for {} pose variables",
                poses.len(),
                slots.len()
            )));
        }
        let g = self.ws.occ.geometry;
        let mut steps = Vec::with_capacity(seq.actions.len() + slots.len());
        let mut violations = 0;
        let mut at = self.ws.start;
        let mut at_cell = match g.cell_of(at) {
            Some(c) if !self.ws.occ.is_blocked(c) => c,
            _ => return Ok(None),
        };
        let mut slot = 0;
        let mut pick_bonus = 0.0;
        for a in &seq.actions {
            let moves = matches!(
                (encoding, a),
                (PoseEncoding::PerGroup, TaskAction::Goto { .. })
                    | (PoseEncoding::PerObject, TaskAction::Pickup { .. })
            );
            if moves {
                let Some(cell) = g
                    .cell_of(poses[slot])
                    .filter(|&c| !self.ws.occ.is_blocked(c))
                else {
                    return Ok(None);
                };
                let Some(length) = self.nav.length_cells(at_cell, cell) else {
                    return Ok(None);
                };
                let to = g.center(cell);
                if ss.sym_grid[cell] != Some(slots[slot]) {
                    violations += 1;
                }
                steps.push(GroundedAction::Nav {
                    from: at,
                    to,
                    length,
                });
                at = to;
                at_cell = cell;
                slot += 1;
            }
            if let TaskAction::Pickup { object, .. } = *a {
                let (Some(obj), Some(field)) = (self.ws.object(object), self.ws.field(object))
                else {
                    return Err(PlanError::InvalidParams(format!("unknown object {object}")));
                };
                let feasibility = field.values[at_cell];
                pick_bonus += (feasibility_weight - 1.0) * feasibility * cost.lambda;
                steps.push(GroundedAction::Pick {
                    object,
                    robot_pose: at,
                    object_pose: obj.position,
                    feasibility,
                });
            }
        }
        let mut plan = GroundedPlan {
            steps,
            utility: 0.0,
            location_violations: violations,
            state_space_id: ss.id.clone(),
            sequence_id: seq.to_string(),
        };
        plan.utility = plan.recompute_utility(cost) + pick_bonus;
        Ok(Some(plan))
    }
}

/// Per-sequence optimizer budget.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SequenceBudget {
    pub population: usize,
    pub max_generations: usize,
    pub sample_budget: usize,
}

impl SequenceBudget {
    pub fn from_config(cfg: &PlannerConfig) -> Self {
        Self {
            population: cfg.population,
            max_generations: cfg.max_generations,
            sample_budget: cfg.cost.sample_budget,
        }
    }

    /// Generations that fit in both budgets (at least one).
    pub fn generations(&self) -> usize {
        self.max_generations
            .min(self.sample_budget / self.population.max(1))
            .max(1)
    }
}

#[derive(Clone, Debug)]
pub struct SequenceOutcome {
    pub plan: GroundedPlan,
    pub samples: usize,
    pub trace: Vec<TraceRow>,
    /// Stopped early because the planning deadline passed.
    pub truncated: bool,
}

fn expired(deadline: Option<Instant>) -> bool {
    deadline.is_some_and(|d| Instant::now() >= d)
}

fn keep_best(best: &mut Option<GroundedPlan>, candidate: Option<GroundedPlan>) {
    if let Some(p) = candidate {
        if best.as_ref().is_none_or(|b| p.utility > b.utility) {
            *best = Some(p);
        }
    }
}

/// Axis-aligned box as (min x, min y, max x, max y).
type BoundingBox = (f64, f64, f64, f64);

/// Feasibility-weighted centroid of a slot's location (joint feasibility when
/// some cell serves every slot object), snapped to the nearest location cell
/// with positive weight, plus half the location's bounding-box diagonal.
fn slot_start(
    ws: &Workspace,
    ss: &StateSpace,
    l: LocationId,
    objects: &[ObjectId],
) -> Option<(Pose2D, f64, BoundingBox)> {
    let loc = ss.location(l)?;
    let g = ss.geometry;
    let fields: Vec<&FeasibilityField> = objects.iter().filter_map(|o| ws.field(*o)).collect();
    let shared = loc.cells.iter().any(|&c| joint_value(&fields, c) > 0.0);
    let weight = |c: usize| {
        if shared {
            joint_value(&fields, c)
        } else {
            fields.iter().map(|f| f.values[c]).sum::<f64>()
        }
    };
    let (mut sx, mut sy, mut sw) = (0.0, 0.0, 0.0);
    for &c in &loc.cells {
        let w = weight(c);
        if w > 0.0 {
            let p = g.center(c);
            sx += w * p.x;
            sy += w * p.y;
            sw += w;
        }
    }
    if sw <= 0.0 {
        return None;
    }
    let centroid = Pose2D::new(sx / sw, sy / sw);
    let snapped = loc
        .cells
        .iter()
        .filter(|&&c| weight(c) > 0.0)
        .map(|&c| g.center(c))
        .min_by(|a, b| a.distance(&centroid).total_cmp(&b.distance(&centroid)))?;
    let bounds = ss.bounds(l)?;
    let half_diag = 0.5 * ((bounds.2 - bounds.0).powi(2) + (bounds.3 - bounds.1).powi(2)).sqrt();
    Some((snapped, half_diag, bounds))
}

/// CMA-ES over the pose vector of `seq`, maximizing plan utility. Returns the
/// best grounded plan seen.
#[allow(clippy::too_many_arguments)]
pub fn optimize_sequence(
    grounder: &mut Grounder<'_>,
    seq: &TaskSequence,
    ss: &StateSpace,
    budget: SequenceBudget,
    cost: &CostParams,
    encoding: PoseEncoding,
    rng: &mut Rng,
    deadline: Option<Instant>,
) -> Result<SequenceOutcome, PlanError> {
    let infeasible = || PlanError::InfeasibleSequence(seq.to_string());
    let slots = pose_slots(seq, encoding);
    let objects = slot_objects(seq, encoding);
    let ws = grounder.workspace();
    if slots.is_empty() {
        let plan = grounder
            .ground(seq, ss, encoding, &[], cost, 1.0)?
            .ok_or_else(infeasible)?;
        return Ok(SequenceOutcome {
            plan,
            samples: 0,
            trace: Vec::new(),
            truncated: false,
        });
    }

    let mut mean = Vec::with_capacity(2 * slots.len());
    let mut scales = Vec::with_capacity(2 * slots.len());
    let mut bounds = Vec::with_capacity(2 * slots.len());
    for (l, objs) in slots.iter().zip(&objects) {
        let (p, half_diag, b) = slot_start(ws, ss, *l, objs).ok_or_else(infeasible)?;
        mean.extend([p.x, p.y]);
        scales.extend([half_diag, half_diag]);
        bounds.extend([(b.0, b.2), (b.1, b.3)]);
    }
    let sigma = scales.iter().copied().fold(0.0, f64::max);
    let config = CmaConfig {
        population: budget.population,
        max_generations: budget.generations(),
        initial_sigma: sigma,
        bounds,
    };
    let mut cma = CmaState::with_scales(&mean, &scales, &config)?;
    let to_poses = |x: &[f64]| {
        x.chunks_exact(2)
            .map(|c| Pose2D::new(c[0], c[1]))
            .collect::<Vec<_>>()
    };

    let mut best = grounder.ground(seq, ss, encoding, &to_poses(&mean), cost, 1.0)?;
    let mut samples = 1;
    let mut trace = Vec::new();
    let mut truncated = false;
    while !cma.is_exhausted() {
        if expired(deadline) {
            truncated = true;
            break;
        }
        let xs = cma.ask(rng)?;
        let mut fitness = Vec::with_capacity(xs.len());
        for x in &xs {
            let plan = grounder.ground(seq, ss, encoding, &to_poses(x), cost, 1.0)?;
            fitness.push(plan.as_ref().map_or(INFEASIBLE_FITNESS, |p| p.utility));
            keep_best(&mut best, plan);
        }
        samples += xs.len();
        cma.tell(&xs, &fitness)?;
        trace.push(cma.trace_row());
    }
    let plan = best.ok_or_else(infeasible)?;
    Ok(SequenceOutcome {
        plan,
        samples,
        trace,
        truncated,
    })
}

/// Best of `sample_budget` pose vectors drawn by `Smp`. A slot serving several
/// objects draws by their joint feasibility, or, when no cell serves all of
/// them, from the sampler of a uniformly chosen member.
#[allow(clippy::too_many_arguments)]
pub fn sample_sequence(
    grounder: &mut Grounder<'_>,
    seq: &TaskSequence,
    ss: &StateSpace,
    sample_budget: usize,
    cost: &CostParams,
    encoding: PoseEncoding,
    rng: &mut Rng,
    deadline: Option<Instant>,
) -> Result<SequenceOutcome, PlanError> {
    let infeasible = || PlanError::InfeasibleSequence(seq.to_string());
    let ws = grounder.workspace();
    let slots = pose_slots(seq, encoding);
    let mut samplers: Vec<Vec<LocationSampler>> = Vec::with_capacity(slots.len());
    for (l, objs) in slots.iter().zip(slot_objects(seq, encoding)) {
        let fields: Vec<&FeasibilityField> = objs.iter().filter_map(|o| ws.field(*o)).collect();
        let s: Vec<LocationSampler> = match LocationSampler::joint(&fields, ss, *l) {
            Ok(joint) => vec![joint],
            Err(_) => fields
                .iter()
                .filter_map(|f| LocationSampler::new(f, ss, *l).ok())
                .collect(),
        };
        if s.is_empty() {
            return Err(infeasible());
        }
        samplers.push(s);
    }
    let mut best = None;
    let mut samples = 0;
    let mut truncated = false;
    for _ in 0..sample_budget.max(1) {
        if samples > 0 && expired(deadline) {
            truncated = true;
            break;
        }
        let poses: Vec<Pose2D> = samplers
            .iter()
            .map(|s| {
                let pick = if s.len() > 1 {
                    rng.random_range(0..s.len())
                } else {
                    0
                };
                s[pick].sample(rng)
            })
            .collect();
        keep_best(
            &mut best,
            grounder.ground(seq, ss, encoding, &poses, cost, 1.0)?,
        );
        samples += 1;
    }
    let plan = best.ok_or_else(infeasible)?;
    Ok(SequenceOutcome {
        plan,
        samples,
        trace: Vec::new(),
        truncated,
    })
}

/// Poses drawn uniformly from each slot's free cells, selected on efficiency
/// alone; the returned plan reports its true feasibility-aware utility.
#[allow(clippy::too_many_arguments)]
pub fn uniform_sequence(
    grounder: &mut Grounder<'_>,
    seq: &TaskSequence,
    ss: &StateSpace,
    sample_budget: usize,
    cost: &CostParams,
    encoding: PoseEncoding,
    rng: &mut Rng,
    deadline: Option<Instant>,
) -> Result<SequenceOutcome, PlanError> {
    let infeasible = || PlanError::InfeasibleSequence(seq.to_string());
    let slots = pose_slots(seq, encoding);
    let mut cells: Vec<&[usize]> = Vec::with_capacity(slots.len());
    for l in &slots {
        let loc = ss.location(*l).ok_or_else(infeasible)?;
        if loc.cells.is_empty() {
            return Err(infeasible());
        }
        cells.push(&loc.cells);
    }
    let g = ss.geometry;
    let mut best: Option<(f64, Vec<Pose2D>)> = None;
    let mut samples = 0;
    let mut truncated = false;
    for _ in 0..sample_budget.max(1) {
        if samples > 0 && expired(deadline) {
            truncated = true;
            break;
        }
        let poses: Vec<Pose2D> = cells
            .iter()
            .map(|c| g.center(c[rng.random_range(0..c.len())]))
            .collect();
        if let Some(p) = grounder.ground(seq, ss, encoding, &poses, cost, 0.0)? {
            if best.as_ref().is_none_or(|(u, _)| p.utility > *u) {
                best = Some((p.utility, poses));
            }
        }
        samples += 1;
    }
    let (_, poses) = best.ok_or_else(infeasible)?;
    let plan = grounder
        .ground(seq, ss, encoding, &poses, cost, 1.0)?
        .ok_or_else(infeasible)?;
    Ok(SequenceOutcome {
        plan,
        samples,
        trace: Vec::new(),
        truncated,
    })
}

/// One fully evaluated (candidate, sequence) work item.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Incumbent {
    pub state_space_id: String,
    pub sequence_id: String,
    /// `None` when the sequence had no feasible grounding.
    pub utility: Option<f64>,
    pub samples: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PlanDiagnostics {
    pub candidates_enumerated: usize,
    pub candidates_scored: usize,
    pub candidates_selected: Vec<String>,
    pub sequences_optimized: usize,
    pub samples_spent: usize,
    pub incumbents: Vec<Incumbent>,
    /// The wall-clock cap cut the search short.
    pub partial: bool,
}

/// The deterministic part of a planning run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanOutput {
    pub mode: PlannerMode,
    pub seed: u64,
    pub state_space_id: String,
    pub plan: GroundedPlan,
    pub diagnostics: PlanDiagnostics,
}

impl PlanOutput {
    pub fn to_text(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("plan output serializes");
        s.push('\n');
        s
    }

    pub fn from_text(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

#[derive(Clone, Debug)]
pub struct PlanOutcome {
    pub output: PlanOutput,
    /// Wall-clock planning time; kept out of `output` so that output is reproducible.
    pub elapsed_s: f64,
}

struct WorkItem<'a> {
    ss: &'a StateSpace,
    seq: TaskSequence,
}

fn run_item(
    ws: &Workspace,
    item: &WorkItem<'_>,
    index: usize,
    mode: PlannerMode,
    cfg: &PlannerConfig,
    seed: u64,
    deadline: Option<Instant>,
) -> Result<Option<SequenceOutcome>, PlanError> {
    if expired(deadline) {
        return Ok(None);
    }
    let mut grounder = Grounder::new(ws);
    let mut rng = rng_for(seed, stream::WORK_ITEM, index as u64);
    let enc = cfg.pose_encoding;
    let out = match mode.grounding() {
        Grounding::Cma => optimize_sequence(
            &mut grounder,
            &item.seq,
            item.ss,
            SequenceBudget::from_config(cfg),
            &cfg.cost,
            enc,
            &mut rng,
            deadline,
        ),
        Grounding::Smp => sample_sequence(
            &mut grounder,
            &item.seq,
            item.ss,
            cfg.cost.sample_budget,
            &cfg.cost,
            enc,
            &mut rng,
            deadline,
        ),
        Grounding::Uniform => uniform_sequence(
            &mut grounder,
            &item.seq,
            item.ss,
            cfg.cost.sample_budget,
            &cfg.cost,
            enc,
            &mut rng,
            deadline,
        ),
    };
    match out {
        Ok(o) => Ok(Some(o)),
        Err(PlanError::InfeasibleSequence(id)) => Ok(Some(SequenceOutcome {
            plan: GroundedPlan {
                steps: Vec::new(),
                utility: f64::NEG_INFINITY,
                location_violations: 0,
                state_space_id: item.ss.id.clone(),
                sequence_id: id,
            },
            samples: 0,
            trace: Vec::new(),
            truncated: false,
        })),
        Err(e) => Err(e),
    }
}

/// Candidate state spaces to plan over, with the counts reported in diagnostics.
fn select_candidates(
    ws: &Workspace,
    mode: PlannerMode,
    cfg: &PlannerConfig,
    seed: u64,
    diag: &mut PlanDiagnostics,
) -> Result<Vec<StateSpace>, PlanError> {
    let base = base_voronoi(&ws.objects, &ws.occ, &ws.feasibility)?;
    match mode {
        PlannerMode::VGropStar | PlannerMode::VGrop | PlannerMode::VPetlon => {
            diag.candidates_enumerated = 1;
            Ok(vec![base; cfg.candidate_draws])
        }
        PlannerMode::S3oGropStar | PlannerMode::S3oGrop => {
            let adj = adjacency(&base);
            let all = enumerate_candidates(&base, &adj, &cfg.candidates);
            diag.candidates_enumerated = all.len();
            let scores = score_candidates(&all, &ws.fields, &ws.feasibility, seed)?;
            diag.candidates_scored = scores.len();
            let set = rank_and_select(all, &scores, cfg.top_k)?;
            let dist = WeightedIndex::new(&set.selection_weights)
                .map_err(|e| PlanError::InvalidParams(format!("selection weights: {e}")))?;
            let mut rng = rng_for(seed, stream::CANDIDATE_DRAW, 0);
            Ok((0..cfg.candidate_draws)
                .map(|_| set.candidates[dist.sample(&mut rng)].state_space.clone())
                .collect())
        }
        PlannerMode::S3oRandom => {
            let adj = adjacency(&base);
            let all = enumerate_candidates(&base, &adj, &cfg.candidates);
            diag.candidates_enumerated = all.len();
            let mut rng = rng_for(seed, stream::CANDIDATE_DRAW, 0);
            Ok((0..cfg.candidate_draws)
                .map(|_| all[rng.random_range(0..all.len())].clone())
                .collect())
        }
    }
}

fn plan_inner(
    ws: &Workspace,
    mode: PlannerMode,
    cfg: &PlannerConfig,
    seed: u64,
    started: Instant,
) -> Result<PlanOutput, PlanError> {
    let deadline = started.checked_add(Duration::from_secs_f64(cfg.cost.time_budget_s));
    let mut diag = PlanDiagnostics::default();
    let candidates = select_candidates(ws, mode, cfg, seed, &mut diag)?;
    diag.candidates_selected = candidates.iter().map(|c| c.id.clone()).collect();

    let mut items = Vec::new();
    for ss in &candidates {
        let init = SymbolicState::initial(ss);
        for seq in enumerate_sequences(ss, &init, ws.start, cfg.sequences_per_candidate) {
            items.push(WorkItem { ss, seq });
        }
    }
    let results: Vec<Result<Option<SequenceOutcome>, PlanError>> = items
        .par_iter()
        .enumerate()
        .map(|(i, item)| run_item(ws, item, i, mode, cfg, seed, deadline))
        .collect();

    let mut best: Option<GroundedPlan> = None;
    for (item, res) in items.iter().zip(results) {
        let Some(out) = res? else {
            diag.partial = true;
            continue;
        };
        diag.partial |= out.truncated;
        diag.sequences_optimized += 1;
        diag.samples_spent += out.samples;
        let utility = Some(out.plan.utility).filter(|u| u.is_finite());
        diag.incumbents.push(Incumbent {
            state_space_id: item.ss.id.clone(),
            sequence_id: item.seq.to_string(),
            utility,
            samples: out.samples,
        });
        if utility.is_some() && best.as_ref().is_none_or(|b| out.plan.utility > b.utility) {
            best = Some(out.plan);
        }
    }
    let plan = best.ok_or_else(|| {
        PlanError::NoPlan(if diag.partial && diag.sequences_optimized == 0 {
            "time budget expired before any sequence was evaluated".into()
        } else {
            format!("all {} sequences are infeasible", diag.sequences_optimized)
        })
    })?;
    Ok(PlanOutput {
        mode,
        seed,
        state_space_id: plan.state_space_id.clone(),
        plan,
        diagnostics: diag,
    })
}

/// Runs the full pipeline for `mode` on a prepared workspace.
pub fn plan_workspace(
    ws: &Workspace,
    mode: PlannerMode,
    cfg: &PlannerConfig,
    seed: u64,
) -> Result<PlanOutcome, PlanError> {
    cfg.validate()?;
    if ws.objects.is_empty() {
        return Err(PlanError::NoPlan("no objects left to collect".into()));
    }
    let started = Instant::now();
    let output = match cfg.effective_workers() {
        1 => plan_inner(ws, mode, cfg, seed, started)?,
        n => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| PlanError::Pool(e.to_string()))?
            .install(|| plan_inner(ws, mode, cfg, seed, started))?,
    };
    Ok(PlanOutcome {
        output,
        elapsed_s: started.elapsed().as_secs_f64(),
    })
}

pub fn plan(
    scenario: &Scenario,
    mode: PlannerMode,
    cfg: &PlannerConfig,
    seed: u64,
) -> Result<PlanOutcome, PlanError> {
    scenario.validate()?;
    let ws = Workspace::new(scenario, &cfg.feasibility);
    plan_workspace(&ws, mode, cfg, seed)
}
