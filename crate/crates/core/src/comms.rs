//! Cellular C2 link model: propagation, link classes, coverage and channel allocation.

use std::fmt;

use thiserror::Error;

use crate::grid::{Cell, Grid, Point};
use crate::routing::AgentId;
use crate::scenario::{BaseStationConfig, PathLossParams};

pub type StationId = u32;

#[derive(Debug, Error, PartialEq)]
pub enum CommsError {
    #[error("unknown propagation model {0:?}")]
    UnknownModel(String),
}

/// Log-distance path loss in dB. Distances below `d0` are clamped to `d0`.
pub fn path_loss(distance_m: f64, params: &PathLossParams, shadowing_db: f64) -> f64 {
    let d = distance_m.max(params.d0);
    params.pl_d0 + 10.0 * params.n * (d / params.d0).log10() + shadowing_db
}

/// Distance at which the shadowing-free loss reaches `threshold_db`.
pub fn range_for_loss(threshold_db: f64, params: &PathLossParams) -> f64 {
    params.d0 * 10f64.powf((threshold_db - params.pl_d0) / (10.0 * params.n))
}

pub trait PropagationModel: Send + Sync {
    fn path_loss(&self, distance_m: f64, shadowing_db: f64) -> f64;
}

#[derive(Debug, Clone)]
pub struct LogDistance {
    pub params: PathLossParams,
}

impl PropagationModel for LogDistance {
    fn path_loss(&self, distance_m: f64, shadowing_db: f64) -> f64 {
        path_loss(distance_m, &self.params, shadowing_db)
    }
}

/// Look up the propagation model named in the scenario.
pub fn propagation_model(params: &PathLossParams) -> Result<Box<dyn PropagationModel>, CommsError> {
    match params.model.as_str() {
        "log-distance" => Ok(Box::new(LogDistance { params: params.clone() })),
        other => Err(CommsError::UnknownModel(other.to_string())),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LinkClass {
    Good,
    Poor,
    NoLink,
}

impl LinkClass {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Good => "good",
            Self::Poor => "poor",
            Self::NoLink => "nolink",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "good" => Some(Self::Good),
            "poor" => Some(Self::Poor),
            "nolink" => Some(Self::NoLink),
            _ => None,
        }
    }
}

impl fmt::Display for LinkClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// `<= good` is Good, `(good, nolink]` is Poor, anything above is NoLink.
pub fn classify_link(pl_db: f64, params: &PathLossParams) -> LinkClass {
    if pl_db <= params.good_threshold_db {
        LinkClass::Good
    } else if pl_db <= params.nolink_threshold_db {
        LinkClass::Poor
    } else {
        LinkClass::NoLink
    }
}

/// Per-cell best link class over all stations, shadowing excluded.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageMap {
    grid: Grid,
    classes: Vec<LinkClass>,
}

impl CoverageMap {
    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn class_at(&self, cell: Cell) -> LinkClass {
        if self.grid.contains(cell) {
            self.classes[self.grid.index(cell)]
        } else {
            LinkClass::NoLink
        }
    }

    pub fn is_covered(&self, cell: Cell) -> bool {
        self.class_at(cell) != LinkClass::NoLink
    }

    /// Classes in row-major order (row 0 is y = 0).
    pub fn classes(&self) -> &[LinkClass] {
        &self.classes
    }
}

/// Classify every cell center against the nearest-in-loss station.
pub fn coverage_mask(
    stations: &[BaseStationConfig],
    model: &dyn PropagationModel,
    params: &PathLossParams,
    grid: Grid,
    cell_size_m: f64,
) -> CoverageMap {
    let classes = grid
        .cells()
        .map(|cell| {
            let center = cell.center_m(cell_size_m);
            stations
                .iter()
                .map(|s| model.path_loss(center.distance(s.position()), 0.0))
                .min_by(f64::total_cmp)
                .map_or(LinkClass::NoLink, |pl| classify_link(pl, params))
        })
        .collect();
    CoverageMap { grid, classes }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaseStationState {
    pub config: BaseStationConfig,
    pub in_use: u32,
}

impl BaseStationState {
    pub fn new(config: BaseStationConfig) -> Self {
        Self { config, in_use: 0 }
    }

    pub fn has_free_channel(&self) -> bool {
        self.in_use < self.config.channels
    }
}

pub fn reset_channels(stations: &mut [BaseStationState]) {
    for s in stations {
        s.in_use = 0;
    }
}

/// One airborne agent as seen by the allocator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkRequest {
    pub agent: AgentId,
    pub position: Point,
    pub shadowing_db: f64,
}

/// One agent's link for one step.
///
/// When `station` is `None` the class is NoLink and `path_loss_db` is the
/// best loss over all stations (infinite with no stations), which may lie
/// within range if every reachable station was saturated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkSample {
    pub agent: AgentId,
    pub step: u64,
    pub station: Option<StationId>,
    pub path_loss_db: f64,
    pub class: LinkClass,
}

/// Greedy per-step channel assignment.
///
/// Requests are served in ascending agent id. Each agent takes the
/// reachable station with the lowest loss (ties by station id) that still
/// has a free channel. Station counters are expected to be reset by the caller.
pub fn allocate_channels(
    step: u64,
    requests: &[LinkRequest],
    stations: &mut [BaseStationState],
    model: &dyn PropagationModel,
    params: &PathLossParams,
) -> Vec<LinkSample> {
    let mut order: Vec<&LinkRequest> = requests.iter().collect();
    order.sort_by_key(|r| r.agent);

    order
        .into_iter()
        .map(|req| {
            let mut ranked: Vec<(f64, StationId)> = stations
                .iter()
                .enumerate()
                .map(|(id, s)| {
                    let d = req.position.distance(s.config.position());
                    (model.path_loss(d, req.shadowing_db), id as StationId)
                })
                .collect();
            ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let best_loss = ranked.first().map_or(f64::INFINITY, |r| r.0);

            let chosen = ranked
                .iter()
                .take_while(|(pl, _)| *pl <= params.nolink_threshold_db)
                .find(|(_, id)| stations[*id as usize].has_free_channel())
                .copied();
            match chosen {
                Some((pl, id)) => {
                    stations[id as usize].in_use += 1;
                    LinkSample {
                        agent: req.agent,
                        step,
                        station: Some(id),
                        path_loss_db: pl,
                        class: classify_link(pl, params),
                    }
                }
                None => LinkSample {
                    agent: req.agent,
                    step,
                    station: None,
                    path_loss_db: best_loss,
                    class: LinkClass::NoLink,
                },
            }
        })
        .collect()
}
