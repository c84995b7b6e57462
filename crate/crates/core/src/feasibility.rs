//! Motion-level feasibility `Fea^m`, the feasibility-weighted position sampler,
//! and task-level feasibility `Fea^t`.
//!
//! `Fea^m(y_r, y_o)` is an analytic kernel: a clearance gate on the robot's
//! cell times a piecewise-linear reach profile of the robot-object distance.
//! Anything implementing [`FeasibilityProvider`] can replace it.
//!
//! `Fea^t(l, o)` draws standing positions inside location `l` with probability
//! proportional to `Fea^m` and averages `Fea^m` over the draws, so its
//! expectation is the self-weighted mean `sum f^2 / sum f` over the cells of `l`.
//! When `l` holds several objects the robot picks all of them from one
//! standing position, so draws are weighted by the joint feasibility (the
//! product of the member fields); for a single object this is the plain rule.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::partition::{LocationId, StateSpace};
use crate::seeds::Rng;
use crate::world::{GridGeometry, ObjectId, ObjectState, OccupancyGrid, Pose2D};

#[derive(Debug, Error, PartialEq)]
pub enum FeasibilityError {
    #[error("location {0} has zero total feasibility mass")]
    EmptySupport(LocationId),
    #[error("location {0} does not exist in the state space")]
    UnknownLocation(LocationId),
    #[error("sample count must be at least 1")]
    ZeroSamples,
    #[error("invalid feasibility parameters: {0}")]
    InvalidParams(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeasibilityParams {
    /// Beyond this distance the object cannot be reached.
    pub reach_max: f64,
    /// Start of the full-feasibility band.
    pub reach_full_lo: f64,
    /// End of the full-feasibility band.
    pub reach_full_hi: f64,
    /// Closer than this the arm cannot fold enough.
    pub reach_min: f64,
    /// Draws per `Fea^t` estimate.
    pub sample_count: usize,
}

impl Default for FeasibilityParams {
    fn default() -> Self {
        Self {
            reach_max: 1.0,
            reach_full_lo: 0.35,
            reach_full_hi: 0.7,
            reach_min: 0.3,
            sample_count: 200,
        }
    }
}

impl FeasibilityParams {
    pub fn validate(&self) -> Result<(), FeasibilityError> {
        let ok = 0.0 <= self.reach_min
            && self.reach_min < self.reach_full_lo
            && self.reach_full_lo <= self.reach_full_hi
            && self.reach_full_hi < self.reach_max;
        if !ok {
            return Err(FeasibilityError::InvalidParams(format!(
                "need 0 <= reach_min < reach_full_lo <= reach_full_hi < reach_max, got {} {} {} {}",
                self.reach_min, self.reach_full_lo, self.reach_full_hi, self.reach_max
            )));
        }
        if self.sample_count == 0 {
            return Err(FeasibilityError::ZeroSamples);
        }
        Ok(())
    }
}

/// Reach factor in `[0, 1]` for a robot-object distance `d`.
pub fn reach_profile(d: f64, p: &FeasibilityParams) -> f64 {
    if !(d >= p.reach_min && d <= p.reach_max) {
        0.0
    } else if d < p.reach_full_lo {
        (d - p.reach_min) / (p.reach_full_lo - p.reach_min)
    } else if d <= p.reach_full_hi {
        1.0
    } else {
        (p.reach_max - d) / (p.reach_max - p.reach_full_hi)
    }
}

/// `Fea^m(y_r, y_o)`: zero on blocked or off-grid robot cells, otherwise the reach profile.
pub fn motion_feasibility(
    robot: Pose2D,
    object: Pose2D,
    occ: &OccupancyGrid,
    params: &FeasibilityParams,
) -> f64 {
    if !occ.is_free_pose(robot) {
        return 0.0;
    }
    reach_profile(robot.distance(&object), params)
}

/// Source of motion-level feasibility values.
pub trait FeasibilityProvider: Sync {
    fn feasibility(&self, robot: Pose2D, object: Pose2D) -> f64;
}

/// The analytic clearance x reach kernel over a fixed occupancy grid.
#[derive(Clone, Copy)]
pub struct AnalyticKernel<'a> {
    pub occ: &'a OccupancyGrid,
    pub params: &'a FeasibilityParams,
}

impl FeasibilityProvider for AnalyticKernel<'_> {
    fn feasibility(&self, robot: Pose2D, object: Pose2D) -> f64 {
        motion_feasibility(robot, object, self.occ, self.params)
    }
}

/// Per-cell `Fea^m` for one object, evaluated at cell centers.
#[derive(Clone, Debug, PartialEq)]
pub struct FeasibilityField {
    pub object_id: ObjectId,
    pub geometry: GridGeometry,
    pub values: Vec<f64>,
}

impl FeasibilityField {
    pub fn value_at(&self, p: Pose2D) -> f64 {
        self.geometry
            .cell_of(p)
            .map(|i| self.values[i])
            .unwrap_or(0.0)
    }

    pub fn nonzero_cells(&self) -> usize {
        self.values.iter().filter(|v| **v > 0.0).count()
    }
}

/// Field from an arbitrary provider, evaluated at every cell center within
/// `reach_max` of the object (all other cells are zero by construction).
pub fn build_field_with(
    object: &ObjectState,
    geometry: GridGeometry,
    reach_max: f64,
    provider: &dyn FeasibilityProvider,
) -> FeasibilityField {
    let mut values = vec![0.0; geometry.len()];
    let res = geometry.resolution;
    let lo_x = ((object.position.x - reach_max) / res).floor().max(0.0) as usize;
    let lo_y = ((object.position.y - reach_max) / res).floor().max(0.0) as usize;
    let hi_x =
        (((object.position.x + reach_max) / res).ceil().max(0.0) as usize).min(geometry.width - 1);
    let hi_y =
        (((object.position.y + reach_max) / res).ceil().max(0.0) as usize).min(geometry.height - 1);
    for iy in lo_y..=hi_y {
        for ix in lo_x..=hi_x {
            let idx = geometry.index(ix, iy);
            let v = provider.feasibility(geometry.center(idx), object.position);
            values[idx] = v.clamp(0.0, 1.0);
        }
    }
    FeasibilityField {
        object_id: object.id,
        geometry,
        values,
    }
}

pub fn build_field(
    object: &ObjectState,
    occ: &OccupancyGrid,
    params: &FeasibilityParams,
) -> FeasibilityField {
    let kernel = AnalyticKernel { occ, params };
    build_field_with(object, occ.geometry, params.reach_max, &kernel)
}

/// `Smp` restricted to one location: draws cells of `l` with probability
/// proportional to the field value. Reusable across many draws.
#[derive(Clone, Debug)]
pub struct LocationSampler {
    cells: Vec<usize>,
    index: WeightedIndex<f64>,
    geometry: GridGeometry,
}

impl LocationSampler {
    pub fn new(
        field: &FeasibilityField,
        ss: &StateSpace,
        l: LocationId,
    ) -> Result<Self, FeasibilityError> {
        Self::joint(&[field], ss, l)
    }

    /// Draws cells of `l` with probability proportional to the product of `fields`.
    pub fn joint(
        fields: &[&FeasibilityField],
        ss: &StateSpace,
        l: LocationId,
    ) -> Result<Self, FeasibilityError> {
        let loc = ss.location(l).ok_or(FeasibilityError::UnknownLocation(l))?;
        let (cells, weights): (Vec<usize>, Vec<f64>) = loc
            .cells
            .iter()
            .map(|&c| (c, joint_value(fields, c)))
            .filter(|(_, w)| *w > 0.0)
            .unzip();
        let index = WeightedIndex::new(&weights).map_err(|_| FeasibilityError::EmptySupport(l))?;
        Ok(Self {
            cells,
            index,
            geometry: ss.geometry,
        })
    }

    pub fn support(&self) -> usize {
        self.cells.len()
    }

    pub fn sample_cell(&self, rng: &mut Rng) -> usize {
        self.cells[self.index.sample(rng)]
    }

    pub fn sample(&self, rng: &mut Rng) -> Pose2D {
        self.geometry.center(self.sample_cell(rng))
    }
}

/// Product of the field values at cell `c`; 0 for an empty list.
pub fn joint_value(fields: &[&FeasibilityField], c: usize) -> f64 {
    if fields.is_empty() {
        return 0.0;
    }
    fields.iter().map(|f| f.values[c]).product()
}

/// Draws `n` standing positions inside `l`, weighted by the field (with replacement).
pub fn sample_positions_smp(
    field: &FeasibilityField,
    ss: &StateSpace,
    l: LocationId,
    n: usize,
    rng: &mut Rng,
) -> Result<Vec<Pose2D>, FeasibilityError> {
    if n == 0 {
        return Err(FeasibilityError::ZeroSamples);
    }
    let sampler = LocationSampler::new(field, ss, l)?;
    Ok((0..n).map(|_| sampler.sample(rng)).collect())
}

/// `Fea^t(l, o)` estimated with `params.sample_count` draws; an all-infeasible
/// location scores 0.
pub fn task_feasibility(
    field: &FeasibilityField,
    ss: &StateSpace,
    l: LocationId,
    params: &FeasibilityParams,
    rng: &mut Rng,
) -> f64 {
    let Ok(sampler) = LocationSampler::new(field, ss, l) else {
        return 0.0;
    };
    let n = params.sample_count.max(1);
    let sum: f64 = (0..n).map(|_| field.values[sampler.sample_cell(rng)]).sum();
    sum / n as f64
}

/// `Fea^t(l, o)` for `target = o` when the draws follow the joint feasibility of
/// every object in `l` (`members`, which includes `target`). Zero when no
/// cell of `l` serves all members.
pub fn joint_task_feasibility(
    target: &FeasibilityField,
    members: &[&FeasibilityField],
    ss: &StateSpace,
    l: LocationId,
    params: &FeasibilityParams,
    rng: &mut Rng,
) -> f64 {
    let Ok(sampler) = LocationSampler::joint(members, ss, l) else {
        return 0.0;
    };
    let n = params.sample_count.max(1);
    let sum: f64 = (0..n)
        .map(|_| target.values[sampler.sample_cell(rng)])
        .sum();
    sum / n as f64
}
