//! Symbolic goto/pickup layer: action schemas with preconditions and effects,
//! and enumeration of visit-order task sequences for a state space.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::partition::{LocationId, StateSpace};
use crate::world::{ObjectId, Pose2D};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RobotAt {
    Start,
    Location(LocationId),
}

impl fmt::Display for RobotAt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RobotAt::Start => f.write_str("start"),
            RobotAt::Location(l) => write!(f, "{l}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SymbolicState {
    pub robot_at: RobotAt,
    /// `at(o, l)` facts for objects still on tables.
    pub object_at: BTreeMap<ObjectId, LocationId>,
    /// `inhand(o)` facts.
    pub collected: BTreeSet<ObjectId>,
}

impl SymbolicState {
    /// Robot at start, every object at its assigned location.
    pub fn initial(ss: &StateSpace) -> Self {
        Self {
            robot_at: RobotAt::Start,
            object_at: ss.object_assignment.clone(),
            collected: BTreeSet::new(),
        }
    }

    pub fn all_collected(&self) -> bool {
        self.object_at.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "action")]
pub enum TaskAction {
    Goto {
        from: RobotAt,
        to: LocationId,
    },
    Pickup {
        object: ObjectId,
        location: LocationId,
    },
}

impl fmt::Display for TaskAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TaskAction::Goto { to, .. } => write!(f, "goto({to})"),
            TaskAction::Pickup { object, .. } => write!(f, "pickup({object})"),
        }
    }
}

/// The fact whose absence blocked an action.
#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum PreconditionViolation {
    #[error("precondition at(robot, {0}) does not hold")]
    RobotNotAt(RobotAt),
    #[error("precondition at({object}, {location}) does not hold")]
    ObjectNotAt {
        object: ObjectId,
        location: LocationId,
    },
    #[error("goto({0}) while already there")]
    AlreadyAt(LocationId),
}

/// Applies `a`, returning the successor state or the violated precondition.
pub fn apply(
    state: &SymbolicState,
    a: &TaskAction,
) -> Result<SymbolicState, PreconditionViolation> {
    match *a {
        TaskAction::Goto { from, to } => {
            if state.robot_at != from {
                return Err(PreconditionViolation::RobotNotAt(from));
            }
            if from == RobotAt::Location(to) {
                return Err(PreconditionViolation::AlreadyAt(to));
            }
            let mut next = state.clone();
            next.robot_at = RobotAt::Location(to);
            Ok(next)
        }
        TaskAction::Pickup { object, location } => {
            if state.robot_at != RobotAt::Location(location) {
                return Err(PreconditionViolation::RobotNotAt(RobotAt::Location(
                    location,
                )));
            }
            if state.object_at.get(&object) != Some(&location) {
                return Err(PreconditionViolation::ObjectNotAt { object, location });
            }
            let mut next = state.clone();
            next.object_at.remove(&object);
            next.collected.insert(object);
            Ok(next)
        }
    }
}

/// An ordered goto/pickup plan for one state space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskSequence {
    pub actions: Vec<TaskAction>,
    pub state_space_id: String,
}

impl TaskSequence {
    /// Locations in visit order.
    pub fn visits(&self) -> Vec<LocationId> {
        self.actions
            .iter()
            .filter_map(|a| match a {
                TaskAction::Goto { to, .. } => Some(*to),
                _ => None,
            })
            .collect()
    }

    pub fn goto_count(&self) -> usize {
        self.actions
            .iter()
            .filter(|a| matches!(a, TaskAction::Goto { .. }))
            .count()
    }

    pub fn pickup_count(&self) -> usize {
        self.actions.len() - self.goto_count()
    }

    /// Replays the sequence and checks the structural rules.
    pub fn validate(&self, init: &SymbolicState) -> Result<SymbolicState, PreconditionViolation> {
        let mut state = init.clone();
        for a in &self.actions {
            state = apply(&state, a)?;
        }
        Ok(state)
    }
}

impl fmt::Display for TaskSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, a) in self.actions.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{a};")?;
        }
        Ok(())
    }
}

fn permutations(items: &[LocationId]) -> Vec<Vec<LocationId>> {
    fn heap(k: usize, items: &mut Vec<LocationId>, out: &mut Vec<Vec<LocationId>>) {
        if k <= 1 {
            out.push(items.clone());
            return;
        }
        for i in 0..k {
            heap(k - 1, items, out);
            let j = if k.is_multiple_of(2) { i } else { 0 };
            items.swap(j, k - 1);
        }
    }
    let mut v = items.to_vec();
    let mut out = Vec::new();
    if v.is_empty() {
        out.push(Vec::new());
    } else {
        heap(v.len(), &mut v, &mut out);
    }
    out
}

/// Visit-order sequences: each visit is one goto followed by pickups of every
/// remaining object there (ascending id). Ordered by Euclidean tour length
/// through location anchors from `start` (ties by visit order), truncated to `limit`.
pub fn enumerate_sequences(
    ss: &StateSpace,
    init: &SymbolicState,
    start: Pose2D,
    limit: usize,
) -> Vec<TaskSequence> {
    let mut pending: BTreeMap<LocationId, Vec<ObjectId>> = BTreeMap::new();
    for (&o, &l) in &init.object_at {
        pending.entry(l).or_default().push(o);
    }
    let locs: Vec<LocationId> = pending.keys().copied().collect();
    let anchor = |l: LocationId| ss.location(l).map(|loc| loc.anchor).unwrap_or(start);

    let mut orders: Vec<(f64, Vec<LocationId>)> = permutations(&locs)
        .into_iter()
        .map(|order| {
            let mut cur = start;
            let mut len = 0.0;
            for &l in &order {
                let a = anchor(l);
                len += cur.distance(&a);
                cur = a;
            }
            (len, order)
        })
        .collect();
    orders.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)));

    orders
        .into_iter()
        .take(limit.max(1))
        .map(|(_, order)| {
            let mut actions = Vec::new();
            let mut at = init.robot_at;
            for l in order {
                if at != RobotAt::Location(l) {
                    actions.push(TaskAction::Goto { from: at, to: l });
                    at = RobotAt::Location(l);
                }
                for &o in &pending[&l] {
                    actions.push(TaskAction::Pickup {
                        object: o,
                        location: l,
                    });
                }
            }
            TaskSequence {
                actions,
                state_space_id: ss.id.clone(),
            }
        })
        .collect()
}
