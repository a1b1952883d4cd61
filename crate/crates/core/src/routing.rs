//! Trajectory generation and the managed (reservation-based) planner.

use std::cmp::Reverse;
use std::collections::hash_map::Entry;
use std::collections::{BinaryHeap, HashMap};
use std::fmt;

use thiserror::Error;

use crate::grid::{Cell, Grid, Point};

pub type AgentId = u32;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RoutingError {
    /// A planner bug: a (cell, step) slot was booked twice.
    #[error("double booking of cell {cell} at step {step}: held by agent {owner}, requested by agent {agent}")]
    DoubleBooking {
        cell: Cell,
        step: u64,
        owner: AgentId,
        agent: AgentId,
    },
    #[error("destination {0} is cut off by blocked cells")]
    Unreachable(Cell),
}

/// A per-step occupancy plan.
///
/// For offset `k` (steps since `launch_step`) the agent sits at `cells[0]`
/// while `k < hold`, then at `cells[k - hold]`. `positions_m` carries the
/// continuous position for free-flight trajectories; grid routes use cell centers.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub launch_step: u64,
    pub hold: u32,
    pub cells: Vec<Cell>,
    pub positions_m: Option<Vec<Point>>,
}

impl Trajectory {
    pub fn from_cells(cells: Vec<Cell>) -> Self {
        debug_assert!(!cells.is_empty());
        Self {
            launch_step: 0,
            hold: 0,
            cells,
            positions_m: None,
        }
    }

    pub fn origin(&self) -> Cell {
        self.cells[0]
    }

    pub fn destination(&self) -> Cell {
        *self.cells.last().expect("trajectory has at least one cell")
    }

    /// Steps spent moving (excluding hold).
    pub fn flight_steps(&self) -> u64 {
        self.cells.len() as u64 - 1
    }

    /// Steps from launch decision to landing, hold included.
    pub fn total_steps(&self) -> u64 {
        u64::from(self.hold) + self.flight_steps()
    }

    pub fn land_step(&self) -> u64 {
        self.launch_step + self.total_steps()
    }

    pub fn cell_at_offset(&self, offset: u64) -> Option<Cell> {
        self.path_index(offset).map(|i| self.cells[i])
    }

    pub fn position_at_offset(&self, offset: u64, cell_size_m: f64) -> Option<Point> {
        let i = self.path_index(offset)?;
        Some(match &self.positions_m {
            Some(points) => points[i],
            None => self.cells[i].center_m(cell_size_m),
        })
    }

    fn path_index(&self, offset: u64) -> Option<usize> {
        if offset > self.total_steps() {
            return None;
        }
        Some(offset.saturating_sub(u64::from(self.hold)) as usize)
    }

    /// Every (cell, absolute step) the trajectory occupies, hold included.
    pub fn occupancy(&self) -> impl Iterator<Item = (Cell, u64)> + '_ {
        (0..=self.total_steps()).map(move |k| {
            (
                self.cell_at_offset(k).expect("offset within trajectory"),
                self.launch_step + k,
            )
        })
    }

    /// Re-time this trajectory to start at `launch_step` after `hold` ground steps.
    pub fn scheduled(mut self, launch_step: u64, hold: u32) -> Self {
        self.launch_step = launch_step;
        self.hold = hold;
        self
    }
}

/// Straight-line free flight sampled once per step.
///
/// The position at step `k` is `origin + min(k * speed, D) * unit(dest - origin)`
/// and the occupied cell is its floor quantization.
pub fn p2p_trajectory(origin_m: Point, dest_m: Point, speed_m_per_step: f64, cell_size_m: f64) -> Trajectory {
    let distance = origin_m.distance(dest_m);
    let steps = if distance > 0.0 {
        (distance / speed_m_per_step).ceil() as u64
    } else {
        0
    };
    let positions: Vec<Point> = (0..=steps)
        .map(|k| {
            let travelled = k as f64 * speed_m_per_step;
            if travelled >= distance {
                dest_m
            } else {
                Point::new(
                    origin_m.x + (dest_m.x - origin_m.x) * travelled / distance,
                    origin_m.y + (dest_m.y - origin_m.y) * travelled / distance,
                )
            }
        })
        .collect();
    let cells = positions.iter().map(|p| p.to_cell(cell_size_m)).collect();
    Trajectory {
        launch_step: 0,
        hold: 0,
        cells,
        positions_m: Some(positions),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AxisOrder {
    XFirst,
    YFirst,
}

/// L-shaped route: all the way along one axis, then the other.
pub fn manhattan_trajectory(origin: Cell, dest: Cell, axis_order: AxisOrder) -> Trajectory {
    let mut cells = Vec::with_capacity(origin.manhattan(dest) as usize + 1);
    let mut current = origin;
    cells.push(current);
    let step_toward = |from: u32, to: u32| if to > from { from + 1 } else { from - 1 };
    let walk_x = |current: &mut Cell, cells: &mut Vec<Cell>| {
        while current.x != dest.x {
            current.x = step_toward(current.x, dest.x);
            cells.push(*current);
        }
    };
    let walk_y = |current: &mut Cell, cells: &mut Vec<Cell>| {
        while current.y != dest.y {
            current.y = step_toward(current.y, dest.y);
            cells.push(*current);
        }
    };
    match axis_order {
        AxisOrder::XFirst => {
            walk_x(&mut current, &mut cells);
            walk_y(&mut current, &mut cells);
        }
        AxisOrder::YFirst => {
            walk_y(&mut current, &mut cells);
            walk_x(&mut current, &mut cells);
        }
    }
    Trajectory::from_cells(cells)
}

/// Shortest 4-connected route avoiding blocked cells.
///
/// A* with the L1 heuristic. The open list is ordered by
/// (estimated total cost, heuristic, insertion order) and neighbors are
/// expanded +x, -x, +y, -y, so the chosen path is deterministic.
pub fn constrained_route(
    grid: Grid,
    origin: Cell,
    dest: Cell,
    blocked: impl Fn(Cell) -> bool,
) -> Result<Trajectory, RoutingError> {
    if origin == dest {
        return Ok(Trajectory::from_cells(vec![origin]));
    }
    let mut best_cost: HashMap<Cell, u32> = HashMap::new();
    let mut parent: HashMap<Cell, Cell> = HashMap::new();
    let mut open = BinaryHeap::new();
    let mut seq: u64 = 0;

    best_cost.insert(origin, 0);
    open.push(Reverse((origin.manhattan(dest), origin.manhattan(dest), seq, origin)));

    while let Some(Reverse((estimate, heuristic, _, cell))) = open.pop() {
        let cost = estimate - heuristic;
        if best_cost.get(&cell).is_some_and(|&c| c < cost) {
            continue;
        }
        if cell == dest {
            let mut path = vec![dest];
            let mut at = dest;
            while let Some(&prev) = parent.get(&at) {
                path.push(prev);
                at = prev;
            }
            path.reverse();
            return Ok(Trajectory::from_cells(path));
        }
        for next in grid.neighbors4(cell) {
            if blocked(next) {
                continue;
            }
            let next_cost = cost + 1;
            let improved = match best_cost.entry(next) {
                Entry::Occupied(mut e) if *e.get() > next_cost => {
                    e.insert(next_cost);
                    true
                }
                Entry::Occupied(_) => false,
                Entry::Vacant(e) => {
                    e.insert(next_cost);
                    true
                }
            };
            if improved {
                parent.insert(next, cell);
                seq += 1;
                let h = next.manhattan(dest);
                open.push(Reverse((next_cost + h, h, seq, next)));
            }
        }
    }
    Err(RoutingError::Unreachable(dest))
}

/// Sparse (cell, step) -> agent booking map.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReservationTable {
    slots: HashMap<(Cell, u64), AgentId>,
    by_agent: HashMap<AgentId, Vec<(Cell, u64)>>,
}

impl ReservationTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn owner(&self, cell: Cell, step: u64) -> Option<AgentId> {
        self.slots.get(&(cell, step)).copied()
    }

    pub fn is_free(&self, cell: Cell, step: u64) -> bool {
        !self.slots.contains_key(&(cell, step))
    }

    pub fn entries(&self) -> impl Iterator<Item = ((Cell, u64), AgentId)> + '_ {
        self.slots.iter().map(|(k, v)| (*k, *v))
    }

    /// Book every (cell, step) of the trajectory for `agent`, all or nothing.
    pub fn reserve(&mut self, trajectory: &Trajectory, agent: AgentId) -> Result<(), RoutingError> {
        let keys: Vec<(Cell, u64)> = trajectory.occupancy().collect();
        for &(cell, step) in &keys {
            if let Some(&owner) = self.slots.get(&(cell, step)) {
                return Err(RoutingError::DoubleBooking {
                    cell,
                    step,
                    owner,
                    agent,
                });
            }
        }
        // A trajectory never revisits a (cell, step) pair since steps strictly increase.
        for &key in &keys {
            self.slots.insert(key, agent);
        }
        self.by_agent.entry(agent).or_default().extend(keys);
        Ok(())
    }

    /// Remove every booking held by `agent`. Returns the number of slots freed.
    pub fn release(&mut self, agent: AgentId) -> usize {
        let Some(keys) = self.by_agent.remove(&agent) else {
            return 0;
        };
        for key in &keys {
            self.slots.remove(key);
        }
        keys.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Mission {
    pub origin: Cell,
    pub dest: Cell,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CancelReason {
    ReservationConflict,
    NoCoverage,
    Unreachable,
}

impl CancelReason {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::ReservationConflict => "reservation conflict",
            Self::NoCoverage => "no coverage",
            Self::Unreachable => "unreachable",
        }
    }
}

impl fmt::Display for CancelReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PlanOutcome {
    Planned(Trajectory),
    Cancelled(CancelReason),
}

impl PlanOutcome {
    pub fn hold(&self) -> Option<u32> {
        match self {
            Self::Planned(t) => Some(t.hold),
            Self::Cancelled(_) => None,
        }
    }
}

/// Static airspace constraints seen by the planners.
pub struct Airspace<'a> {
    pub grid: Grid,
    pub blocked: &'a dyn Fn(Cell) -> bool,
    pub covered: &'a dyn Fn(Cell) -> bool,
}

impl Airspace<'_> {
    fn path_blocked(&self, t: &Trajectory) -> bool {
        t.cells.iter().any(|&c| (self.blocked)(c))
    }

    /// Candidate grid routes in preference order: the unblocked L-shapes,
    /// or the shortest detour when both are blocked.
    pub fn candidate_routes(&self, mission: Mission) -> Result<Vec<Trajectory>, RoutingError> {
        let shapes: Vec<Trajectory> = [AxisOrder::XFirst, AxisOrder::YFirst]
            .into_iter()
            .map(|order| manhattan_trajectory(mission.origin, mission.dest, order))
            .filter(|t| !self.path_blocked(t))
            .collect();
        if !shapes.is_empty() {
            return Ok(shapes);
        }
        constrained_route(self.grid, mission.origin, mission.dest, |c| (self.blocked)(c)).map(|t| vec![t])
    }
}

/// Route for unmanaged grid traffic: first candidate, no reservation checks.
pub fn unmanaged_route(airspace: &Airspace<'_>, mission: Mission, t0: u64) -> Result<Trajectory, CancelReason> {
    airspace
        .candidate_routes(mission)
        .map(|mut c| c.swap_remove(0).scheduled(t0, 0))
        .map_err(|_| CancelReason::Unreachable)
}

/// Plan a managed mission launching at `t0`, booking it in `table` when feasible.
///
/// Candidates are tried for hold 0..=max_hold, and within one hold value in
/// [`Airspace::candidate_routes`] order. A candidate is feasible when every
/// cell is covered and every (cell, step), hold steps at the origin included,
/// is unreserved.
pub fn plan_managed(
    airspace: &Airspace<'_>,
    mission: Mission,
    agent: AgentId,
    t0: u64,
    table: &mut ReservationTable,
    max_hold: u32,
) -> Result<PlanOutcome, RoutingError> {
    let routes = match airspace.candidate_routes(mission) {
        Ok(routes) => routes,
        Err(RoutingError::Unreachable(_)) => return Ok(PlanOutcome::Cancelled(CancelReason::Unreachable)),
        Err(e) => return Err(e),
    };
    let covered: Vec<Trajectory> = routes
        .into_iter()
        .filter(|t| t.cells.iter().all(|&c| (airspace.covered)(c)))
        .collect();
    if covered.is_empty() {
        return Ok(PlanOutcome::Cancelled(CancelReason::NoCoverage));
    }
    for hold in 0..=max_hold {
        for route in &covered {
            let candidate = route.clone().scheduled(t0, hold);
            if candidate.occupancy().all(|(c, s)| table.is_free(c, s)) {
                table.reserve(&candidate, agent)?;
                return Ok(PlanOutcome::Planned(candidate));
            }
        }
    }
    Ok(PlanOutcome::Cancelled(CancelReason::ReservationConflict))
}
