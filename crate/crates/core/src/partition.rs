//! Object-centric Voronoi partition, merged-region state-space candidates,
//! feasibility scoring, and top-K selection.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::feasibility::{joint_task_feasibility, FeasibilityField, FeasibilityParams};
use crate::seeds::{rng_for, stream};
use crate::world::{GridGeometry, ObjectId, ObjectState, OccupancyGrid, Pose2D};

#[derive(Debug, Error, PartialEq)]
pub enum PartitionError {
    #[error("cannot partition a scene without objects")]
    NoObjects,
    #[error("candidate list is empty")]
    NoCandidates,
    #[error("top-k must be at least 1")]
    ZeroK,
    #[error("{candidates} candidates but {scores} scores")]
    ScoreMismatch { candidates: usize, scores: usize },
    #[error("no feasibility field for object {0}")]
    MissingField(ObjectId),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LocationId(pub u32);

impl fmt::Display for LocationId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "l{}", self.0)
    }
}

/// One symbolic location and its grounding.
#[derive(Clone, Debug, PartialEq)]
pub struct Location {
    pub id: LocationId,
    /// Objects `o` with `at(o, l)`, ascending.
    pub objects: Vec<ObjectId>,
    /// Base Voronoi regions fused into this location.
    pub merged_from: BTreeSet<usize>,
    /// Flat cell indices `y` with `Sym(y) = l`, ascending.
    pub cells: Vec<usize>,
    /// Centroid of the member objects, used by sequence heuristics.
    pub anchor: Pose2D,
}

/// A candidate symbolic state space `<L, Sym, Y>`.
#[derive(Clone, Debug, PartialEq)]
pub struct StateSpace {
    /// Canonical grouping label, e.g. `o0+o1|o2`.
    pub id: String,
    pub geometry: GridGeometry,
    pub sym_grid: Vec<Option<LocationId>>,
    pub locations: Vec<Location>,
    pub object_assignment: BTreeMap<ObjectId, LocationId>,
}

impl StateSpace {
    pub fn location(&self, l: LocationId) -> Option<&Location> {
        self.locations.get(l.0 as usize).filter(|loc| loc.id == l)
    }

    /// `Sym(y)`, or `None` where no location covers `y`.
    pub fn sym(&self, p: Pose2D) -> Option<LocationId> {
        self.geometry.cell_of(p).and_then(|i| self.sym_grid[i])
    }

    pub fn location_of(&self, o: ObjectId) -> Option<LocationId> {
        self.object_assignment.get(&o).copied()
    }

    /// Base-region grouping, one sorted group per location.
    pub fn grouping(&self) -> Vec<Vec<usize>> {
        self.locations
            .iter()
            .map(|l| l.merged_from.iter().copied().collect())
            .collect()
    }

    pub fn is_merged(&self) -> bool {
        self.locations.iter().any(|l| l.merged_from.len() > 1)
    }

    /// Axis-aligned cell bounds `(x0, y0, x1, y1)` of a location in meters.
    pub fn bounds(&self, l: LocationId) -> Option<(f64, f64, f64, f64)> {
        let loc = self.location(l)?;
        let g = self.geometry;
        let mut it = loc.cells.iter().map(|&c| g.coords(c));
        let (x, y) = it.next()?;
        let (mut lx, mut ly, mut hx, mut hy) = (x, y, x, y);
        for (x, y) in it {
            lx = lx.min(x);
            ly = ly.min(y);
            hx = hx.max(x);
            hy = hy.max(y);
        }
        let r = g.resolution;
        Some((
            lx as f64 * r,
            ly as f64 * r,
            (hx + 1) as f64 * r,
            (hy + 1) as f64 * r,
        ))
    }

    /// Builds the state space obtained by fusing base regions per `groups`.
    /// `groups` must partition `0..base.locations.len()`.
    pub fn merge(base: &StateSpace, groups: &[Vec<usize>]) -> StateSpace {
        let mut groups: Vec<Vec<usize>> = groups
            .iter()
            .map(|g| {
                let mut g = g.clone();
                g.sort_unstable();
                g
            })
            .collect();
        groups.sort();
        let mut relabel = vec![LocationId(0); base.locations.len()];
        for (gi, group) in groups.iter().enumerate() {
            for &b in group {
                relabel[b] = LocationId(gi as u32);
            }
        }
        let sym_grid = base
            .sym_grid
            .iter()
            .map(|l| l.map(|l| relabel[l.0 as usize]))
            .collect();
        let mut locations = Vec::with_capacity(groups.len());
        let mut object_assignment = BTreeMap::new();
        for (gi, group) in groups.iter().enumerate() {
            let id = LocationId(gi as u32);
            let mut objects = Vec::new();
            let mut merged_from = BTreeSet::new();
            let mut cells = Vec::new();
            let (mut ax, mut ay, mut n) = (0.0, 0.0, 0.0);
            for &b in group {
                let part = &base.locations[b];
                for inner in &part.merged_from {
                    merged_from.insert(*inner);
                }
                objects.extend(part.objects.iter().copied());
                cells.extend(part.cells.iter().copied());
                let k = part.objects.len() as f64;
                ax += part.anchor.x * k;
                ay += part.anchor.y * k;
                n += k;
            }
            objects.sort_unstable();
            cells.sort_unstable();
            for o in &objects {
                object_assignment.insert(*o, id);
            }
            let anchor = if n > 0.0 {
                Pose2D::new(ax / n, ay / n)
            } else {
                Pose2D::new(0.0, 0.0)
            };
            locations.push(Location {
                id,
                objects,
                merged_from,
                cells,
                anchor,
            });
        }
        let id = grouping_label(&locations);
        StateSpace {
            id,
            geometry: base.geometry,
            sym_grid,
            locations,
            object_assignment,
        }
    }
}

/// Rebuilds the state space labeled `id` (e.g. `o0+o1|o2`) from `base`.
/// `None` when the label does not name a grouping of the base objects.
pub fn regroup(base: &StateSpace, id: &str) -> Option<StateSpace> {
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for part in id.split('|') {
        let mut group = BTreeSet::new();
        for name in part.split('+') {
            let o = ObjectId(name.strip_prefix('o')?.parse().ok()?);
            group.insert(base.location_of(o)?.0 as usize);
        }
        groups.push(group.into_iter().collect());
    }
    let ss = StateSpace::merge(base, &groups);
    let used: usize = groups.iter().map(Vec::len).sum();
    (ss.id == id && used == base.locations.len()).then_some(ss)
}

fn grouping_label(locations: &[Location]) -> String {
    locations
        .iter()
        .map(|l| {
            l.objects
                .iter()
                .map(|o| o.to_string())
                .collect::<Vec<_>>()
                .join("+")
        })
        .collect::<Vec<_>>()
        .join("|")
}

/// Grid Voronoi partition: a free cell within `reach_max` of its nearest
/// object is labeled with that object's location (ties go to the lowest id).
/// Objects left with no cells share the location of the nearest labeled cell;
/// an object with no labeled cell anywhere keeps an empty location.
pub fn base_voronoi(
    objects: &[ObjectState],
    occ: &OccupancyGrid,
    params: &FeasibilityParams,
) -> Result<StateSpace, PartitionError> {
    if objects.is_empty() {
        return Err(PartitionError::NoObjects);
    }
    let mut order: Vec<usize> = (0..objects.len()).collect();
    order.sort_by_key(|&i| objects[i].id);

    let g = occ.geometry;
    let reach2 = params.reach_max * params.reach_max;
    let mut sym_grid = vec![None; g.len()];
    let mut cells: Vec<Vec<usize>> = vec![Vec::new(); objects.len()];
    for (idx, label) in sym_grid.iter_mut().enumerate() {
        if occ.is_blocked(idx) {
            continue;
        }
        let c = g.center(idx);
        let mut best: Option<(f64, usize)> = None;
        for (rank, &oi) in order.iter().enumerate() {
            let p = objects[oi].position;
            let d2 = (c.x - p.x) * (c.x - p.x) + (c.y - p.y) * (c.y - p.y);
            if best.is_none_or(|(bd, _)| d2 < bd) {
                best = Some((d2, rank));
            }
        }
        if let Some((d2, rank)) = best {
            if d2 <= reach2 {
                *label = Some(LocationId(rank as u32));
                cells[rank].push(idx);
            }
        }
    }

    // An object whose region is empty is shadowed by a nearer object; it joins
    // the location owning the labeled cell closest to it.
    let mut host: Vec<usize> = (0..order.len()).collect();
    for (rank, &oi) in order.iter().enumerate() {
        if !cells[rank].is_empty() {
            continue;
        }
        let p = objects[oi].position;
        let mut best: Option<(f64, usize)> = None;
        for (idx, label) in sym_grid.iter().enumerate() {
            if let Some(l) = label {
                let c = g.center(idx);
                let d2 = (c.x - p.x) * (c.x - p.x) + (c.y - p.y) * (c.y - p.y);
                if best.is_none_or(|(bd, _)| d2 < bd) {
                    best = Some((d2, l.0 as usize));
                }
            }
        }
        if let Some((_, owner)) = best {
            host[rank] = owner;
        }
    }

    let mut relabel = vec![usize::MAX; order.len()];
    let mut locations: Vec<Location> = Vec::new();
    for (rank, &oi) in order.iter().enumerate() {
        if host[rank] != rank {
            continue;
        }
        let n = locations.len();
        relabel[rank] = n;
        locations.push(Location {
            id: LocationId(n as u32),
            objects: vec![objects[oi].id],
            merged_from: BTreeSet::from([n]),
            cells: std::mem::take(&mut cells[rank]),
            anchor: objects[oi].position,
        });
    }
    let mut object_assignment = BTreeMap::new();
    for (rank, &oi) in order.iter().enumerate() {
        let n = relabel[host[rank]];
        if host[rank] != rank {
            locations[n].objects.push(objects[oi].id);
        }
        object_assignment.insert(objects[oi].id, LocationId(n as u32));
    }
    for loc in &mut locations {
        loc.objects.sort_unstable();
    }
    for label in sym_grid.iter_mut().flatten() {
        *label = LocationId(relabel[label.0 as usize] as u32);
    }
    let id = grouping_label(&locations);
    Ok(StateSpace {
        id,
        geometry: g,
        sym_grid,
        locations,
        object_assignment,
    })
}

/// Undirected adjacency over base locations.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Adjacency {
    n: usize,
    matrix: Vec<bool>,
}

impl Adjacency {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            matrix: vec![false; n * n],
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn add_edge(&mut self, a: usize, b: usize) {
        if a != b {
            self.matrix[a * self.n + b] = true;
            self.matrix[b * self.n + a] = true;
        }
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.matrix[a * self.n + b]
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for a in 0..self.n {
            for b in a + 1..self.n {
                if self.has_edge(a, b) {
                    out.push((a, b));
                }
            }
        }
        out
    }

    /// Whether `nodes` induce a connected subgraph.
    pub fn is_connected(&self, nodes: &[usize]) -> bool {
        if nodes.len() <= 1 {
            return true;
        }
        let mut seen = vec![false; nodes.len()];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(i) = stack.pop() {
            for (j, s) in seen.iter_mut().enumerate() {
                if !*s && self.has_edge(nodes[i], nodes[j]) {
                    *s = true;
                    stack.push(j);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }
}

/// Two base locations are adjacent iff some of their cells are 8-neighbors.
pub fn adjacency(base: &StateSpace) -> Adjacency {
    let g = base.geometry;
    let mut adj = Adjacency::new(base.locations.len());
    for (idx, label) in base.sym_grid.iter().enumerate() {
        let Some(a) = label else { continue };
        let (x, y) = g.coords(idx);
        // half-neighborhood suffices for an undirected scan
        for (dx, dy) in [(1i64, 0i64), (-1, 1), (0, 1), (1, 1)] {
            if let Some(n) = g.checked_index(x as i64 + dx, y as i64 + dy) {
                if let Some(b) = base.sym_grid[n] {
                    if b != *a {
                        adj.add_edge(a.0 as usize, b.0 as usize);
                    }
                }
            }
        }
    }
    adj
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MergeMode {
    /// Every partition of the adjacency graph into connected groups.
    Connected,
    /// The base partition plus one merged pair per adjacency edge.
    SinglePair,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CandidateLimits {
    pub max_group_size: usize,
    pub max_candidates: usize,
    pub merge_mode: MergeMode,
}

impl Default for CandidateLimits {
    fn default() -> Self {
        Self {
            max_group_size: 3,
            max_candidates: 200,
            merge_mode: MergeMode::Connected,
        }
    }
}

fn connected_groupings(adj: &Adjacency, max_group: usize) -> Vec<Vec<Vec<usize>>> {
    fn recurse(
        node: usize,
        adj: &Adjacency,
        max_group: usize,
        blocks: &mut Vec<Vec<usize>>,
        out: &mut Vec<Vec<Vec<usize>>>,
    ) {
        if node == adj.len() {
            if blocks.iter().all(|b| adj.is_connected(b)) {
                out.push(blocks.clone());
            }
            return;
        }
        for bi in 0..blocks.len() {
            if blocks[bi].len() < max_group {
                blocks[bi].push(node);
                recurse(node + 1, adj, max_group, blocks, out);
                blocks[bi].pop();
            }
        }
        blocks.push(vec![node]);
        recurse(node + 1, adj, max_group, blocks, out);
        blocks.pop();
    }
    let mut out = Vec::new();
    recurse(0, adj, max_group.max(1), &mut Vec::new(), &mut out);
    out
}

/// All admissible groupings of the base regions, base partition first, in
/// lexicographic order of the sorted group lists, truncated at `max_candidates`.
pub fn enumerate_groupings(adj: &Adjacency, limits: &CandidateLimits) -> Vec<Vec<Vec<usize>>> {
    let n = adj.len();
    let mut all: Vec<Vec<Vec<usize>>> = match limits.merge_mode {
        MergeMode::Connected => connected_groupings(adj, limits.max_group_size),
        MergeMode::SinglePair => {
            let base: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
            let mut v = vec![base];
            if limits.max_group_size >= 2 {
                for (a, b) in adj.edges() {
                    let mut g: Vec<Vec<usize>> = (0..n)
                        .filter(|&i| i != a && i != b)
                        .map(|i| vec![i])
                        .collect();
                    g.push(vec![a, b]);
                    g.sort();
                    v.push(g);
                }
            }
            v
        }
    };
    for g in all.iter_mut() {
        for block in g.iter_mut() {
            block.sort_unstable();
        }
        g.sort();
    }
    all.sort();
    all.dedup();
    all.truncate(limits.max_candidates.max(1));
    all
}

pub fn enumerate_candidates(
    base: &StateSpace,
    adj: &Adjacency,
    limits: &CandidateLimits,
) -> Vec<StateSpace> {
    enumerate_groupings(adj, limits)
        .iter()
        .map(|groups| StateSpace::merge(base, groups))
        .collect()
}

fn field_for(
    fields: &[FeasibilityField],
    o: ObjectId,
) -> Result<&FeasibilityField, PartitionError> {
    fields
        .iter()
        .find(|f| f.object_id == o)
        .ok_or(PartitionError::MissingField(o))
}

/// `Score = sum_o Fea^t(l, o)` with `at(o, l)`. Standing positions in a merged
/// location are drawn by the joint feasibility of all its objects.
pub fn score_state_space(
    ss: &StateSpace,
    fields: &[FeasibilityField],
    params: &FeasibilityParams,
    rng: &mut crate::seeds::Rng,
) -> Result<f64, PartitionError> {
    let mut total = 0.0;
    for loc in &ss.locations {
        let members = loc
            .objects
            .iter()
            .map(|&o| field_for(fields, o))
            .collect::<Result<Vec<_>, _>>()?;
        for target in &members {
            total += joint_task_feasibility(target, &members, ss, loc.id, params, rng);
        }
    }
    Ok(total)
}

/// Scores every candidate with an independent stream per candidate index.
pub fn score_candidates(
    candidates: &[StateSpace],
    fields: &[FeasibilityField],
    params: &FeasibilityParams,
    seed: u64,
) -> Result<Vec<f64>, PartitionError> {
    candidates
        .par_iter()
        .enumerate()
        .map(|(i, ss)| {
            let mut rng = rng_for(seed, stream::SCORING, i as u64);
            score_state_space(ss, fields, params, &mut rng)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScoredCandidate {
    /// Position in the enumeration order.
    pub index: usize,
    pub state_space: StateSpace,
    pub score: f64,
}

/// Top-K candidates by score with normalized selection weights.
#[derive(Clone, Debug, PartialEq)]
pub struct CandidateSet {
    pub candidates: Vec<ScoredCandidate>,
    pub top_k: usize,
    pub selection_weights: Vec<f64>,
}

pub fn rank_and_select(
    candidates: Vec<StateSpace>,
    scores: &[f64],
    k: usize,
) -> Result<CandidateSet, PartitionError> {
    if k == 0 {
        return Err(PartitionError::ZeroK);
    }
    if candidates.is_empty() {
        return Err(PartitionError::NoCandidates);
    }
    if candidates.len() != scores.len() {
        return Err(PartitionError::ScoreMismatch {
            candidates: candidates.len(),
            scores: scores.len(),
        });
    }
    let mut ranked: Vec<ScoredCandidate> = candidates
        .into_iter()
        .zip(scores)
        .enumerate()
        .map(|(index, (state_space, &score))| ScoredCandidate {
            index,
            state_space,
            score,
        })
        .collect();
    // stable: equal scores keep enumeration order
    ranked.sort_by(|a, b| b.score.total_cmp(&a.score));
    ranked.truncate(k);
    let total: f64 = ranked.iter().map(|c| c.score).sum();
    let selection_weights = if total > 0.0 {
        ranked.iter().map(|c| c.score / total).collect()
    } else {
        vec![1.0 / ranked.len() as f64; ranked.len()]
    };
    Ok(CandidateSet {
        candidates: ranked,
        top_k: k,
        selection_weights,
    })
}
