//! Discrete-time simulation driver.
//!
//! Each step runs five phases in a fixed order: launch decisions (every
//! `t_min` steps), advancement of flying agents, landing with reservation
//! release, channel allocation over agents still airborne, and logging.

use rand::distributions::WeightedIndex;
use rand::prelude::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use thiserror::Error;

use crate::comms::{
    allocate_channels, coverage_mask, propagation_model, reset_channels, BaseStationState, CommsError, CoverageMap,
    LinkRequest, PropagationModel,
};
use crate::grid::Cell;
use crate::log::{CancelEvent, LandingEvent, LaunchEvent, PositionRecord, SimulationLog};
use crate::routing::{
    p2p_trajectory, plan_managed, unmanaged_route, AgentId, Airspace, Mission, PlanOutcome, ReservationTable,
    RoutingError, Trajectory,
};
use crate::scenario::{validate, Rect, ScenarioConfig, TrajectoryType};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scenario: {}", .0.join("; "))]
    InvalidConfig(Vec<String>),
    #[error(transparent)]
    Comms(#[from] CommsError),
    #[error("internal invariant violated: {0}")]
    Routing(#[from] RoutingError),
}

/// Labels of the independent random substreams derived from one seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Launch = 1,
    LandingChoice = 2,
    Shadowing = 3,
    Endpoints = 4,
}

/// A ChaCha8 generator keyed by `seed` on the substream `label`.
pub fn substream(seed: u64, label: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(label as u64);
    rng
}

/// Seed for replicate `k`.
pub fn replicate_seed(base: u64, k: u64) -> u64 {
    base.wrapping_add(k)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AgentState {
    Flying,
    Landed { step: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct UasAgent {
    pub id: AgentId,
    pub origin: Cell,
    pub dest: Cell,
    pub state: AgentState,
    pub trajectory: Trajectory,
}

impl UasAgent {
    pub fn launch_step(&self) -> u64 {
        self.trajectory.launch_step
    }
}

/// Outcome of one launch area's draw in a launch window.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LaunchDecision {
    pub step: u64,
    pub area: usize,
    pub origin: Cell,
    pub dest: Cell,
}

struct Streams {
    launch: ChaCha8Rng,
    landing: ChaCha8Rng,
    shadowing: ChaCha8Rng,
    endpoints: ChaCha8Rng,
}

pub struct World {
    config: ScenarioConfig,
    clock: u64,
    next_id: AgentId,
    flying: Vec<UasAgent>,
    reservations: ReservationTable,
    stations: Vec<BaseStationState>,
    model: Box<dyn PropagationModel>,
    coverage: Option<CoverageMap>,
    landing_choice: Option<WeightedIndex<f64>>,
    shadowing: Option<Normal<f64>>,
    streams: Streams,
    log: SimulationLog,
}

impl World {
    /// An empty world at step 0. The config must already be valid.
    pub fn new(config: ScenarioConfig) -> Result<Self, SimError> {
        // The horizon is the caller's concern; a zero-step run is an empty run.
        let report = validate(&ScenarioConfig {
            sim_steps: config.sim_steps.max(1),
            ..config.clone()
        });
        if !report.is_empty() {
            return Err(SimError::InvalidConfig(report));
        }
        let model = propagation_model(&config.path_loss)?;
        // Connectivity is only enforced when a cellular layer exists.
        let coverage = (config.managed && !config.base_stations.is_empty()).then(|| {
            coverage_mask(
                &config.base_stations,
                &*model,
                &config.path_loss,
                config.grid(),
                config.cell_size_m,
            )
        });
        let landing_choice = WeightedIndex::new(config.landing_areas.iter().map(|a| a.selection_probability)).ok();
        let shadowing = (config.path_loss.sigma > 0.0)
            .then(|| Normal::new(0.0, config.path_loss.sigma).expect("sigma validated as finite and positive"));
        let seed = config.rng_seed;
        Ok(Self {
            stations: config
                .base_stations
                .iter()
                .cloned()
                .map(BaseStationState::new)
                .collect(),
            clock: 0,
            next_id: 0,
            flying: Vec::new(),
            reservations: ReservationTable::new(),
            model,
            coverage,
            landing_choice,
            shadowing,
            streams: Streams {
                launch: substream(seed, Stream::Launch),
                landing: substream(seed, Stream::LandingChoice),
                shadowing: substream(seed, Stream::Shadowing),
                endpoints: substream(seed, Stream::Endpoints),
            },
            log: SimulationLog::default(),
            config,
        })
    }

    pub fn clock(&self) -> u64 {
        self.clock
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    pub fn flying(&self) -> &[UasAgent] {
        &self.flying
    }

    pub fn reservations(&self) -> &ReservationTable {
        &self.reservations
    }

    pub fn log(&self) -> &SimulationLog {
        &self.log
    }

    pub fn into_log(self) -> SimulationLog {
        self.log
    }

    fn pick_cell(&mut self, region: Rect) -> Cell {
        if self.config.random_endpoint_cells {
            let rng = &mut self.streams.endpoints;
            Cell::new(
                rng.gen_range(region.x_min..=region.x_max),
                rng.gen_range(region.y_min..=region.y_max),
            )
        } else {
            region.center()
        }
    }

    /// Draw this step's launch decisions, one Bernoulli trial per launch area
    /// in declaration order. Returns nothing off the `t_min` grid.
    pub fn schedule_launches(&mut self) -> Vec<LaunchDecision> {
        if !self.clock.is_multiple_of(self.config.t_min) {
            return Vec::new();
        }
        let mut decisions = Vec::new();
        for area in 0..self.config.launch_areas.len() {
            let p = self.config.launch_areas[area].launch_probability;
            if !self.streams.launch.gen_bool(p) {
                continue;
            }
            let landing = match &self.landing_choice {
                Some(choice) => choice.sample(&mut self.streams.landing),
                None => 0,
            };
            let origin = self.pick_cell(self.config.launch_areas[area].region);
            let dest = self.pick_cell(self.config.landing_areas[landing].region);
            decisions.push(LaunchDecision {
                step: self.clock,
                area,
                origin,
                dest,
            });
        }
        decisions
    }

    fn launch(&mut self, decision: LaunchDecision) -> Result<(), SimError> {
        let LaunchDecision { step, origin, dest, .. } = decision;
        let mission = Mission { origin, dest };
        let id = self.next_id;
        let config = &self.config;
        let zones = &config.no_fly_zones;
        let blocked = |c: Cell| zones.iter().any(|z| z.contains(c));
        let coverage = self.coverage.as_ref();
        let covered = |c: Cell| coverage.is_none_or(|m| m.is_covered(c));
        let airspace = Airspace {
            grid: config.grid(),
            blocked: &blocked,
            covered: &covered,
        };

        let planned = match (config.trajectory_type, config.managed) {
            (TrajectoryType::P2P, _) => {
                let cs = config.cell_size_m;
                let t = p2p_trajectory(
                    origin.center_m(cs),
                    dest.center_m(cs),
                    config.speed_cells_per_step * cs,
                    cs,
                );
                Ok(t.scheduled(step, 0))
            }
            (TrajectoryType::Manhattan, false) => unmanaged_route(&airspace, mission, step),
            (TrajectoryType::Manhattan, true) => {
                match plan_managed(&airspace, mission, id, step, &mut self.reservations, config.max_hold)? {
                    PlanOutcome::Planned(t) => Ok(t),
                    PlanOutcome::Cancelled(reason) => Err(reason),
                }
            }
        };

        match planned {
            Ok(trajectory) => {
                self.log.launches.push(LaunchEvent {
                    step,
                    agent: id,
                    origin,
                    dest,
                    hold: trajectory.hold,
                });
                self.flying.push(UasAgent {
                    id,
                    origin,
                    dest,
                    state: AgentState::Flying,
                    trajectory,
                });
                self.next_id += 1;
            }
            Err(reason) => self
                .log
                .cancellations
                .push(CancelEvent::new(step, origin, dest, reason)),
        }
        Ok(())
    }

    /// Advance the world by one step.
    pub fn step(&mut self) -> Result<(), SimError> {
        let now = self.clock;

        for decision in self.schedule_launches() {
            self.launch(decision)?;
        }

        let cell_size = self.config.cell_size_m;
        let mut requests = Vec::with_capacity(self.flying.len());
        for agent in &mut self.flying {
            let offset = now - agent.launch_step();
            let cell = agent
                .trajectory
                .cell_at_offset(offset)
                .expect("flying agents are within their trajectory");
            self.log.positions.push(PositionRecord {
                step: now,
                agent: agent.id,
                cell,
            });
            if offset == agent.trajectory.total_steps() {
                agent.state = AgentState::Landed { step: now };
                self.log.landings.push(LandingEvent {
                    step: now,
                    agent: agent.id,
                    origin: agent.origin,
                    dest: agent.dest,
                    hold: agent.trajectory.hold,
                });
                self.reservations.release(agent.id);
            } else {
                let position = agent
                    .trajectory
                    .position_at_offset(offset, cell_size)
                    .expect("offset within trajectory");
                let shadowing_db = match &self.shadowing {
                    Some(normal) => normal.sample(&mut self.streams.shadowing),
                    None => 0.0,
                };
                requests.push(LinkRequest {
                    agent: agent.id,
                    position,
                    shadowing_db,
                });
            }
        }
        self.flying.retain(|a| a.state == AgentState::Flying);

        if !self.stations.is_empty() || !requests.is_empty() {
            reset_channels(&mut self.stations);
            let samples = allocate_channels(now, &requests, &mut self.stations, &*self.model, &self.config.path_loss);
            self.log.links.extend(samples);
        }

        self.clock += 1;
        Ok(())
    }
}

/// Run a validated scenario for `sim_steps` steps from an empty world.
pub fn run(config: &ScenarioConfig) -> Result<SimulationLog, SimError> {
    let mut world = World::new(config.clone())?;
    for _ in 0..config.sim_steps {
        world.step()?;
    }
    Ok(world.into_log())
}

/// Run replicate `k`, seeded with `rng_seed + k`.
pub fn run_replicate(config: &ScenarioConfig, k: u64) -> Result<SimulationLog, SimError> {
    let mut cfg = config.clone();
    cfg.rng_seed = replicate_seed(config.rng_seed, k);
    run(&cfg)
}
