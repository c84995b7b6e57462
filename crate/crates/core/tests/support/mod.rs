//! Independent reference computations shared by the integration tests.
//! Nothing here calls the routine it checks.

#![allow(dead_code)]

use std::cmp::Ordering;
use std::collections::{BTreeSet, BinaryHeap};

use s3o_core::feasibility::FeasibilityField;
use s3o_core::planner::{CostParams, GroundedAction, GroundedPlan};
use s3o_core::world::{ChairObstacle, GridMap, ObjectState, OccupancyGrid, Pose2D};

/// Nearest object (lowest id on ties) for every free cell within `reach_max`.
pub fn nearest_object_labels(
    objects: &[ObjectState],
    occ: &OccupancyGrid,
    reach_max: f64,
) -> Vec<Option<usize>> {
    let g = occ.geometry;
    (0..g.len())
        .map(|c| {
            if occ.blocked[c] {
                return None;
            }
            let p = g.center(c);
            let mut best: Option<(f64, u32, usize)> = None;
            for (i, o) in objects.iter().enumerate() {
                let d = (p.x - o.position.x).powi(2) + (p.y - o.position.y).powi(2);
                let better = match best {
                    None => true,
                    Some((bd, bid, _)) => d < bd || (d == bd && o.id.0 < bid),
                };
                if better {
                    best = Some((d, o.id.0, i));
                }
            }
            best.filter(|(d, _, _)| *d <= reach_max * reach_max)
                .map(|(_, _, i)| i)
        })
        .collect()
}

/// Closed-form `Fea^t` under feasibility-weighted sampling: `sum f^2 / sum f`.
pub fn expected_task_feasibility(field: &FeasibilityField, cells: &[usize]) -> f64 {
    let s1: f64 = cells.iter().map(|&c| field.values[c]).sum();
    let s2: f64 = cells
        .iter()
        .map(|&c| field.values[c] * field.values[c])
        .sum();
    if s1 > 0.0 {
        s2 / s1
    } else {
        0.0
    }
}

#[derive(PartialEq)]
struct Node(f64, usize);
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then(other.1.cmp(&self.1))
    }
}

/// Single-source Dijkstra in meters over free cells: 8-connected, diagonals
/// cost `sqrt(2) * res` and may not pass between two blocked side cells.
pub fn dijkstra(occ: &OccupancyGrid, source: usize) -> Vec<f64> {
    let g = occ.geometry;
    let mut dist = vec![f64::INFINITY; g.len()];
    if occ.blocked[source] {
        return dist;
    }
    dist[source] = 0.0;
    let mut heap = BinaryHeap::from([Node(0.0, source)]);
    let free = |x: i64, y: i64| {
        x >= 0
            && y >= 0
            && (x as usize) < g.width
            && (y as usize) < g.height
            && !occ.blocked[y as usize * g.width + x as usize]
    };
    while let Some(Node(d, c)) = heap.pop() {
        if d > dist[c] {
            continue;
        }
        let (x, y) = ((c % g.width) as i64, (c / g.width) as i64);
        for dx in -1..=1i64 {
            for dy in -1..=1i64 {
                if (dx, dy) == (0, 0) || !free(x + dx, y + dy) {
                    continue;
                }
                let diagonal = dx != 0 && dy != 0;
                if diagonal && !(free(x + dx, y) && free(x, y + dy)) {
                    continue;
                }
                let step = if diagonal {
                    std::f64::consts::SQRT_2
                } else {
                    1.0
                } * g.resolution;
                let n = (y + dy) as usize * g.width + (x + dx) as usize;
                if d + step < dist[n] {
                    dist[n] = d + step;
                    heap.push(Node(dist[n], n));
                }
            }
        }
    }
    dist
}

/// Cell-by-cell occupancy: static cells and cells whose center a chair covers,
/// then every cell whose center lies within the inflation radius of one of those.
pub fn brute_occupancy(map: &GridMap, chairs: &[ChairObstacle]) -> Vec<bool> {
    let g = map.geometry;
    let base: Vec<bool> = (0..g.len())
        .map(|c| {
            let p = g.center(c);
            map.static_occupancy[c] || chairs.iter().any(|ch| inside_rotated(ch, p))
        })
        .collect();
    let r2 = map.inflation_radius * map.inflation_radius + 1e-9;
    let sources: Vec<Pose2D> = (0..g.len())
        .filter(|&c| base[c])
        .map(|c| g.center(c))
        .collect();
    (0..g.len())
        .map(|c| {
            let p = g.center(c);
            base[c]
                || (map.inflation_radius > 0.0
                    && sources
                        .iter()
                        .any(|s| (s.x - p.x).powi(2) + (s.y - p.y).powi(2) <= r2))
        })
        .collect()
}

fn inside_rotated(ch: &ChairObstacle, p: Pose2D) -> bool {
    // rotate the query point into the chair frame
    let (dx, dy) = (p.x - ch.position.x, p.y - ch.position.y);
    let a = -ch.orientation;
    let u = dx * a.cos() - dy * a.sin();
    let v = dx * a.sin() + dy * a.cos();
    u.abs() <= ch.footprint.width / 2.0 + 1e-12 && v.abs() <= ch.footprint.depth / 2.0 + 1e-12
}

/// Plan utility summed from the raw constants.
pub fn utility_by_hand(plan: &GroundedPlan, c: &CostParams) -> f64 {
    let mut u = -(plan.location_violations as f64) * c.lambda;
    for a in &plan.steps {
        u += match a {
            GroundedAction::Nav { length, .. } => -(length / c.speed + c.gamma),
            GroundedAction::Pick { feasibility, .. } => -c.delta + c.lambda * feasibility,
        };
    }
    u
}

/// Best single-visit utility over every cell of `cells`: one navigation from
/// `start_cell`, one pick with the cell's field value.
pub fn best_single_visit(
    occ: &OccupancyGrid,
    start_cell: usize,
    field: &FeasibilityField,
    cells: &[usize],
    c: &CostParams,
) -> f64 {
    let dist = dijkstra(occ, start_cell);
    cells
        .iter()
        .filter(|&&cell| dist[cell].is_finite())
        .map(|&cell| -(dist[cell] / c.speed + c.gamma) - c.delta + c.lambda * field.values[cell])
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Every set partition of `0..n`, blocks sorted, partition sorted.
pub fn set_partitions(n: usize) -> Vec<Vec<Vec<usize>>> {
    fn go(i: usize, n: usize, blocks: &mut Vec<Vec<usize>>, out: &mut Vec<Vec<Vec<usize>>>) {
        if i == n {
            let mut p = blocks.clone();
            p.sort();
            out.push(p);
            return;
        }
        for b in 0..blocks.len() {
            blocks[b].push(i);
            go(i + 1, n, blocks, out);
            blocks[b].pop();
        }
        blocks.push(vec![i]);
        go(i + 1, n, blocks, out);
        blocks.pop();
    }
    let mut out = Vec::new();
    go(0, n, &mut Vec::new(), &mut out);
    out
}

/// Whether `block` induces a connected subgraph of `edges`.
pub fn block_connected(block: &[usize], edges: &BTreeSet<(usize, usize)>) -> bool {
    let Some(&first) = block.first() else {
        return true;
    };
    let mut seen = BTreeSet::from([first]);
    let mut stack = vec![first];
    while let Some(a) = stack.pop() {
        for &b in block {
            if !seen.contains(&b) && (edges.contains(&(a.min(b), a.max(b)))) {
                seen.insert(b);
                stack.push(b);
            }
        }
    }
    seen.len() == block.len()
}

/// Partitions of `0..n` into connected blocks of at most `max_block` nodes.
pub fn connected_partitions(
    n: usize,
    edges: &BTreeSet<(usize, usize)>,
    max_block: usize,
) -> Vec<Vec<Vec<usize>>> {
    let mut v: Vec<_> = set_partitions(n)
        .into_iter()
        .filter(|p| {
            p.iter()
                .all(|b| b.len() <= max_block && block_connected(b, edges))
        })
        .collect();
    v.sort();
    v
}

/// Paired difference of per-scenario means: `(mean, standard error)`.
pub fn paired(a: &[f64], b: &[f64]) -> (f64, f64) {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let n = d.len() as f64;
    let mean = d.iter().sum::<f64>() / n;
    let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, (var / n).sqrt())
}

/// Closed-form `Fea^t` for `target` when positions are drawn by the product
/// of `members`' fields: `sum j * f_t / sum j` with `j = prod f`.
pub fn expected_joint_feasibility(
    target: &FeasibilityField,
    members: &[&FeasibilityField],
    cells: &[usize],
) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for &c in cells {
        let j: f64 = members.iter().map(|f| f.values[c]).product();
        num += j * target.values[c];
        den += j;
    }
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

/// Checks every module-level invariant on the scenario generated from `seed`,
/// planning with `cfg`. Returns the first violation.
pub fn check_invariants(seed: u64, cfg: &s3o_core::planner::PlannerConfig) -> Result<(), String> {
    use s3o_core::cmaes::{CmaConfig, CmaState};
    use s3o_core::partition::{adjacency, base_voronoi, enumerate_candidates};
    use s3o_core::planner::{
        optimize_sequence, plan_workspace, Grounder, PlannerMode, SequenceBudget, Workspace,
    };
    use s3o_core::seeds::rng_for;
    use s3o_core::taskplan::{enumerate_sequences, SymbolicState};
    use s3o_core::world::{generate_scenario, GeneratorConfig};

    let s = generate_scenario(seed, &GeneratorConfig::default()).map_err(|e| e.to_string())?;
    let ws = Workspace::new(&s, &cfg.feasibility);
    let p = &cfg.feasibility;
    let g = ws.occ.geometry;

    for (o, field) in ws.objects.iter().zip(&ws.fields) {
        for c in 0..g.len() {
            let v = field.values[c];
            let d = g.center(c).distance(&o.position);
            if !(0.0..=1.0).contains(&v) {
                return Err(format!("field {} cell {c} = {v}", o.id));
            }
            if v > 0.0 && (ws.occ.blocked[c] || d > p.reach_max || d < p.reach_min) {
                return Err(format!("field {} nonzero at masked cell {c}", o.id));
            }
        }
    }

    let base = base_voronoi(&ws.objects, &ws.occ, p).map_err(|e| e.to_string())?;
    let candidates = enumerate_candidates(&base, &adjacency(&base), &cfg.candidates);
    for ss in std::iter::once(&base).chain(&candidates) {
        let mut owner = vec![None; g.len()];
        for loc in &ss.locations {
            if loc.cells.is_empty()
                && loc
                    .objects
                    .iter()
                    .any(|o| ws.field(*o).is_some_and(|f| f.nonzero_cells() > 0))
            {
                return Err(format!("{}: {} has no cells", ss.id, loc.id));
            }
            for &c in &loc.cells {
                if owner[c].replace(loc.id).is_some() {
                    return Err(format!("{}: cell {c} in two locations", ss.id));
                }
                if ss.sym_grid[c] != Some(loc.id) {
                    return Err(format!("{}: cell {c} list and grid disagree", ss.id));
                }
                let reachable = loc.objects.iter().any(|o| {
                    ws.object(*o).is_some_and(|obj| {
                        g.center(c).distance(&obj.position) <= p.reach_max + 1e-9
                    })
                });
                if !reachable {
                    return Err(format!("{}: cell {c} out of reach of {}", ss.id, loc.id));
                }
            }
        }
        if owner != ss.sym_grid {
            return Err(format!("{}: grid labels cells no location lists", ss.id));
        }
        for o in &ws.objects {
            let l = ss
                .location_of(o.id)
                .ok_or(format!("{}: {} unassigned", ss.id, o.id))?;
            if !ss
                .location(l)
                .is_some_and(|loc| loc.objects.contains(&o.id))
            {
                return Err(format!("{}: {} assignment inconsistent", ss.id, o.id));
            }
        }
    }

    for mode in [PlannerMode::S3oGropStar, PlannerMode::VGrop] {
        let Ok(out) = plan_workspace(&ws, mode, cfg, seed) else {
            continue;
        };
        let out = out.output;
        let plan = &out.plan;
        if !plan.is_chained(ws.start) {
            return Err(format!("{mode}: plan not chained"));
        }
        let mut at = ws.start;
        for a in &plan.steps {
            match *a {
                GroundedAction::Nav { from, to, .. } => {
                    if from != at {
                        return Err(format!("{mode}: nav starts off the previous pose"));
                    }
                    at = to;
                }
                GroundedAction::Pick { robot_pose, .. } if robot_pose != at => {
                    return Err(format!("{mode}: pick off the current pose"));
                }
                GroundedAction::Pick { .. } => {}
            }
        }
        let by_hand = utility_by_hand(plan, &cfg.cost);
        if (by_hand - plan.utility).abs() > 1e-9 {
            return Err(format!(
                "{mode}: utility {} recomputes to {by_hand}",
                plan.utility
            ));
        }
        let best = out
            .diagnostics
            .incumbents
            .iter()
            .filter_map(|i| i.utility)
            .fold(f64::NEG_INFINITY, f64::max);
        if best != plan.utility {
            return Err(format!(
                "{mode}: returned {} but best incumbent {best}",
                plan.utility
            ));
        }
    }

    let seq = enumerate_sequences(&base, &SymbolicState::initial(&base), ws.start, 1).remove(0);
    if let Ok(out) = optimize_sequence(
        &mut Grounder::new(&ws),
        &seq,
        &base,
        SequenceBudget::from_config(cfg),
        &cfg.cost,
        cfg.pose_encoding,
        &mut rng_for(seed, 11, 0),
        None,
    ) {
        if out
            .trace
            .windows(2)
            .any(|w| w[1].best_fitness < w[0].best_fitness)
        {
            return Err("incumbent fitness decreased".into());
        }
        if out
            .trace
            .last()
            .is_some_and(|t| t.best_fitness > out.plan.utility)
        {
            return Err("returned plan worse than the optimizer incumbent".into());
        }
    }

    // rotated, badly scaled quadratic
    let n = 2 + (seed % 7) as usize;
    let mut cma = CmaState::new(
        &vec![1.0; n],
        &CmaConfig::unbounded(n, CmaConfig::default_population(n), 60, 0.5),
    )
    .map_err(|e| e.to_string())?;
    let mut rng = rng_for(seed, 12, 0);
    while !cma.is_exhausted() {
        let xs = cma.ask(&mut rng).map_err(|e| e.to_string())?;
        let f: Vec<f64> = xs
            .iter()
            .map(|x| {
                -x.iter()
                    .enumerate()
                    .map(|(i, v)| 10f64.powi(i as i32) * (v + 0.3 * x[0]).powi(2))
                    .sum::<f64>()
            })
            .collect();
        cma.tell(&xs, &f).map_err(|e| e.to_string())?;
        let c = cma.covariance();
        if (c - c.transpose()).amax() > 1e-12 * c.amax() {
            return Err("covariance not symmetric".into());
        }
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        let not_pd = cma.eigenvalues().iter().any(|&e| !(e > 0.0));
        if not_pd {
            return Err(format!(
                "covariance not positive definite at generation {}",
                cma.generation()
            ));
        }
    }
    Ok(())
}

/// Single-object scenario at 0.1 m resolution.
pub fn single_object_scenario(seed: u64) -> s3o_core::world::Scenario {
    use s3o_core::world::{generate_scenario, GeneratorConfig};
    let cfg = GeneratorConfig {
        resolution: 0.1,
        min_objects: 1,
        max_objects: 1,
        ..Default::default()
    };
    generate_scenario(seed, &cfg).expect("generator succeeds")
}

/// Two objects side by side on one table and a third on a distant table.
pub fn two_near_one_far() -> s3o_core::world::Scenario {
    use s3o_core::world::{ObjectId, Scenario};
    let mut map = GridMap::empty(160, 80, 0.05, 0.0).expect("valid grid");
    map.add_border_walls();
    map.block_rect(1.5, 1.5, 2.5, 2.1);
    map.block_rect(5.5, 2.9, 6.5, 3.5);
    let object = |id, x, y| ObjectState {
        id: ObjectId(id),
        position: Pose2D::new(x, y),
        collected: false,
    };
    Scenario {
        map,
        objects: vec![
            object(0, 1.9, 1.6),
            object(1, 2.1, 1.6),
            object(2, 6.0, 3.0),
        ],
        robot_start: Pose2D::new(0.5, 0.5),
        chairs: Vec::new(),
        seed: 0,
    }
}

/// Runs CMA-ES minimizing `f` from `x0`; returns the best value found within
/// `max_evals` evaluations.
pub fn cma_minimize(
    f: impl Fn(&[f64]) -> f64,
    x0: &[f64],
    sigma: f64,
    max_evals: usize,
    seed: u64,
) -> f64 {
    use s3o_core::cmaes::{CmaConfig, CmaState};
    let n = x0.len();
    let pop = CmaConfig::default_population(n);
    let mut cma = CmaState::new(x0, &CmaConfig::unbounded(n, pop, max_evals / pop, sigma))
        .expect("valid config");
    let mut rng = s3o_core::seeds::rng_for(seed, 13, 0);
    let mut best = f64::INFINITY;
    while !cma.is_exhausted() {
        let xs = cma.ask(&mut rng).expect("ask");
        let fx: Vec<f64> = xs.iter().map(|x| f(x)).collect();
        best = fx.iter().copied().fold(best, f64::min);
        let fitness: Vec<f64> = fx.iter().map(|v| -v).collect();
        cma.tell(&xs, &fitness).expect("tell");
    }
    best
}

pub fn sphere(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

pub fn rosenbrock(x: &[f64]) -> f64 {
    x.windows(2)
        .map(|w| 100.0 * (w[1] - w[0] * w[0]).powi(2) + (1.0 - w[0]).powi(2))
        .sum()
}
