//! Declarative scenario configuration: schema, defaults, parsing and validation.
//!
//! Scenario files are TOML. Top-level scalars describe the grid, clock and
//! policy; `[[launch_areas]]`, `[[landing_areas]]`, `[[no_fly_zones]]` and
//! `[[base_stations]]` are arrays of tables; `[path_loss]` and `[geo_anchor]`
//! are optional tables. See `docs/scenario-format.md` for the frozen key list.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{Cell, Grid, Point};

/// Documented defaults injected for absent optional keys.
pub mod defaults {
    pub const CELL_SIZE_M: f64 = 18.0;
    pub const SIM_STEPS: u64 = 20_000;
    pub const STEP_SECONDS: f64 = 1.0;
    pub const T_MIN: u64 = 10;
    pub const MAX_HOLD: u32 = 0;
    pub const SPEED_CELLS_PER_STEP: f64 = 1.0;
    pub const MANAGED: bool = false;
    pub const RANDOM_ENDPOINT_CELLS: bool = false;
    pub const CHANNELS: u32 = 8;
    pub const DENSITY_WINDOW: u32 = 5;
    pub const DENSITY_STRIDE: u32 = 5;
    pub const PATH_LOSS_MODEL: &str = "log-distance";
    pub const PL_D0_DB: f64 = 40.0;
    pub const D0_M: f64 = 1.0;
    pub const EXPONENT: f64 = 2.7;
    pub const SIGMA_DB: f64 = 0.0;
    pub const GOOD_THRESHOLD_DB: f64 = 80.0;
    pub const NOLINK_THRESHOLD_DB: f64 = 120.0;
    pub const METERS_PER_DEGREE: f64 = 111_320.0;
}

/// Absolute tolerance for probability comparisons.
pub const PROBABILITY_TOLERANCE: f64 = 1e-9;

/// Keys that must be present at the top level of a scenario document.
pub const REQUIRED_KEYS: &[&str] = &[
    "grid_width",
    "grid_height",
    "trajectory_type",
    "launch_areas",
    "landing_areas",
    "rng_seed",
];

/// Keys that may be omitted; their defaults live in [`defaults`].
pub const OPTIONAL_KEYS: &[&str] = &[
    "cell_size_m",
    "sim_steps",
    "step_seconds",
    "t_min",
    "managed",
    "max_hold",
    "speed_cells_per_step",
    "random_endpoint_cells",
    "density_window_w",
    "density_stride_s",
    "no_fly_zones",
    "base_stations",
    "path_loss",
    "geo_anchor",
];

#[derive(Debug, Error, PartialEq)]
pub enum ScenarioError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unknown key {0}")]
    UnknownKey(String),
    #[error("missing required key {0}")]
    MissingKey(String),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("serialization error: {0}")]
    Serialize(String),
}

/// Inclusive rectangle of grid cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rect {
    pub x_min: u32,
    pub y_min: u32,
    pub x_max: u32,
    pub y_max: u32,
}

impl Rect {
    pub const fn new(x_min: u32, y_min: u32, x_max: u32, y_max: u32) -> Self {
        Self {
            x_min,
            y_min,
            x_max,
            y_max,
        }
    }

    pub fn is_well_formed(&self) -> bool {
        self.x_min <= self.x_max && self.y_min <= self.y_max
    }

    pub fn contains(&self, cell: Cell) -> bool {
        (self.x_min..=self.x_max).contains(&cell.x) && (self.y_min..=self.y_max).contains(&cell.y)
    }

    pub fn overlaps(&self, other: &Rect) -> bool {
        self.x_min <= other.x_max && other.x_min <= self.x_max && self.y_min <= other.y_max && other.y_min <= self.y_max
    }

    pub fn inside(&self, grid: Grid) -> bool {
        self.x_max < grid.width && self.y_max < grid.height
    }

    /// Center cell, rounding toward the minimum corner.
    pub fn center(&self) -> Cell {
        Cell::new(
            self.x_min + (self.x_max - self.x_min) / 2,
            self.y_min + (self.y_max - self.y_min) / 2,
        )
    }

    pub fn cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (self.y_min..=self.y_max).flat_map(move |y| (self.x_min..=self.x_max).map(move |x| Cell::new(x, y)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LaunchArea {
    pub region: Rect,
    pub launch_probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LandingArea {
    pub region: Rect,
    pub selection_probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaseStationConfig {
    /// Position in map meters.
    pub x_m: f64,
    pub y_m: f64,
    #[serde(default = "default_channels")]
    pub channels: u32,
}

impl BaseStationConfig {
    pub fn new(x_m: f64, y_m: f64, channels: u32) -> Self {
        Self { x_m, y_m, channels }
    }

    pub fn position(&self) -> Point {
        Point::new(self.x_m, self.y_m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathLossParams {
    /// Propagation model name. Only `log-distance` is built in.
    pub model: String,
    pub pl_d0: f64,
    pub d0: f64,
    pub n: f64,
    pub sigma: f64,
    pub good_threshold_db: f64,
    pub nolink_threshold_db: f64,
}

impl Default for PathLossParams {
    fn default() -> Self {
        Self {
            model: defaults::PATH_LOSS_MODEL.to_string(),
            pl_d0: defaults::PL_D0_DB,
            d0: defaults::D0_M,
            n: defaults::EXPONENT,
            sigma: defaults::SIGMA_DB,
            good_threshold_db: defaults::GOOD_THRESHOLD_DB,
            nolink_threshold_db: defaults::NOLINK_THRESHOLD_DB,
        }
    }
}

/// Planar-to-geographic anchor used by trajectory exports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeoAnchor {
    /// Latitude/longitude of map origin (0 m, 0 m).
    pub lat: f64,
    pub lon: f64,
    #[serde(default = "default_meters_per_degree")]
    pub meters_per_degree: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrajectoryType {
    P2P,
    Manhattan,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub grid_width: u32,
    pub grid_height: u32,
    #[serde(default = "default_cell_size")]
    pub cell_size_m: f64,
    #[serde(default = "default_sim_steps")]
    pub sim_steps: u64,
    #[serde(default = "default_step_seconds")]
    pub step_seconds: f64,
    #[serde(default = "default_t_min")]
    pub t_min: u64,
    pub trajectory_type: TrajectoryType,
    #[serde(default = "default_managed")]
    pub managed: bool,
    #[serde(default = "default_max_hold")]
    pub max_hold: u32,
    #[serde(default = "default_speed")]
    pub speed_cells_per_step: f64,
    /// Draw launch/landing cells uniformly inside each region instead of using the center.
    #[serde(default = "default_random_endpoints")]
    pub random_endpoint_cells: bool,
    #[serde(default = "default_window")]
    pub density_window_w: u32,
    #[serde(default = "default_stride")]
    pub density_stride_s: u32,
    pub rng_seed: u64,
    pub launch_areas: Vec<LaunchArea>,
    pub landing_areas: Vec<LandingArea>,
    #[serde(default)]
    pub no_fly_zones: Vec<Rect>,
    #[serde(default)]
    pub base_stations: Vec<BaseStationConfig>,
    #[serde(default)]
    pub path_loss: PathLossParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geo_anchor: Option<GeoAnchor>,
}

fn default_cell_size() -> f64 {
    defaults::CELL_SIZE_M
}
fn default_sim_steps() -> u64 {
    defaults::SIM_STEPS
}
fn default_step_seconds() -> f64 {
    defaults::STEP_SECONDS
}
fn default_t_min() -> u64 {
    defaults::T_MIN
}
fn default_managed() -> bool {
    defaults::MANAGED
}
fn default_max_hold() -> u32 {
    defaults::MAX_HOLD
}
fn default_speed() -> f64 {
    defaults::SPEED_CELLS_PER_STEP
}
fn default_random_endpoints() -> bool {
    defaults::RANDOM_ENDPOINT_CELLS
}
fn default_window() -> u32 {
    defaults::DENSITY_WINDOW
}
fn default_stride() -> u32 {
    defaults::DENSITY_STRIDE
}
fn default_channels() -> u32 {
    defaults::CHANNELS
}
fn default_meters_per_degree() -> f64 {
    defaults::METERS_PER_DEGREE
}

impl ScenarioConfig {
    /// A config with every optional field at its documented default.
    pub fn with_defaults(
        grid_width: u32,
        grid_height: u32,
        trajectory_type: TrajectoryType,
        launch_areas: Vec<LaunchArea>,
        landing_areas: Vec<LandingArea>,
        rng_seed: u64,
    ) -> Self {
        Self {
            grid_width,
            grid_height,
            cell_size_m: defaults::CELL_SIZE_M,
            sim_steps: defaults::SIM_STEPS,
            step_seconds: defaults::STEP_SECONDS,
            t_min: defaults::T_MIN,
            trajectory_type,
            managed: defaults::MANAGED,
            max_hold: defaults::MAX_HOLD,
            speed_cells_per_step: defaults::SPEED_CELLS_PER_STEP,
            random_endpoint_cells: defaults::RANDOM_ENDPOINT_CELLS,
            density_window_w: defaults::DENSITY_WINDOW,
            density_stride_s: defaults::DENSITY_STRIDE,
            rng_seed,
            launch_areas,
            landing_areas,
            no_fly_zones: Vec::new(),
            base_stations: Vec::new(),
            path_loss: PathLossParams::default(),
            geo_anchor: None,
        }
    }

    pub fn grid(&self) -> Grid {
        Grid::new(self.grid_width, self.grid_height)
    }

    pub fn map_width_m(&self) -> f64 {
        f64::from(self.grid_width) * self.cell_size_m
    }

    pub fn map_height_m(&self) -> f64 {
        f64::from(self.grid_height) * self.cell_size_m
    }

    pub fn is_no_fly(&self, cell: Cell) -> bool {
        self.no_fly_zones.iter().any(|z| z.contains(cell))
    }

    /// Serialize to the canonical TOML form accepted by [`parse_scenario`].
    pub fn to_toml(&self) -> Result<String, ScenarioError> {
        toml::to_string(self).map_err(|e| ScenarioError::Serialize(e.to_string()))
    }
}

/// Parse a TOML scenario document, filling documented defaults.
pub fn parse_scenario(text: &str) -> Result<ScenarioConfig, ScenarioError> {
    let table: toml::Table = text.parse().map_err(|e: toml::de::Error| {
        let (line, column) = e.span().map(|span| line_column(text, span.start)).unwrap_or((1, 1));
        ScenarioError::Syntax {
            line,
            column,
            message: e.message().to_string(),
        }
    })?;

    if let Some(unknown) = table
        .keys()
        .find(|k| !REQUIRED_KEYS.contains(&k.as_str()) && !OPTIONAL_KEYS.contains(&k.as_str()))
    {
        return Err(ScenarioError::UnknownKey(unknown.clone()));
    }
    if let Some(missing) = REQUIRED_KEYS.iter().find(|k| !table.contains_key(**k)) {
        return Err(ScenarioError::MissingKey((*missing).to_string()));
    }

    table
        .try_into()
        .map_err(|e: toml::de::Error| ScenarioError::Schema(e.message().to_string()))
}

fn line_column(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, column)
}

/// Check every configuration invariant. An empty report means the config is valid.
// Negated float comparisons are deliberate: NaN must fail every check.
#[allow(clippy::neg_cmp_op_on_partial_ord)]
pub fn validate(config: &ScenarioConfig) -> Vec<String> {
    let mut report = Vec::new();
    let grid = config.grid();

    if config.grid_width == 0 || config.grid_height == 0 {
        report.push(format!(
            "grid {}x{} must have positive width and height",
            config.grid_width, config.grid_height
        ));
    }
    if !(config.cell_size_m > 0.0) {
        report.push(format!("cell_size_m {} must be > 0", config.cell_size_m));
    }
    if config.sim_steps == 0 {
        report.push("sim_steps must be > 0".to_string());
    }
    if !(config.step_seconds > 0.0) {
        report.push(format!("step_seconds {} must be > 0", config.step_seconds));
    }
    if config.t_min < 1 {
        report.push("t_min must be >= 1".to_string());
    }
    if !(config.speed_cells_per_step > 0.0) {
        report.push(format!(
            "speed_cells_per_step {} must be > 0",
            config.speed_cells_per_step
        ));
    }
    if config.trajectory_type == TrajectoryType::Manhattan && config.speed_cells_per_step != 1.0 {
        report.push(format!(
            "speed_cells_per_step {} must be 1 for Manhattan routing",
            config.speed_cells_per_step
        ));
    }
    if config.managed && config.trajectory_type != TrajectoryType::Manhattan {
        report.push("managed routing requires trajectory_type Manhattan".to_string());
    }
    if !config.no_fly_zones.is_empty() && config.trajectory_type != TrajectoryType::Manhattan {
        report.push("no_fly_zones require trajectory_type Manhattan".to_string());
    }
    if config.density_window_w < 1 {
        report.push("density_window_w must be >= 1".to_string());
    }
    if config.density_stride_s < 1 {
        report.push("density_stride_s must be >= 1".to_string());
    }

    if config.launch_areas.is_empty() {
        report.push("at least one launch area is required".to_string());
    }
    if config.landing_areas.is_empty() {
        report.push("at least one landing area is required".to_string());
    }

    let regions = named_regions(config);
    for (name, rect) in &regions {
        if !rect.is_well_formed() {
            report.push(format!("{name} has min > max"));
        } else if !rect.inside(grid) {
            report.push(format!(
                "{name} extends outside the {}x{} grid",
                grid.width, grid.height
            ));
        }
    }

    for (i, area) in config.launch_areas.iter().enumerate() {
        let p = area.launch_probability;
        if !(0.0..=1.0).contains(&p) {
            report.push(format!("launch_areas[{i}] probability {p} outside [0, 1]"));
        }
    }
    for (i, area) in config.landing_areas.iter().enumerate() {
        let p = area.selection_probability;
        if !(0.0..=1.0).contains(&p) {
            report.push(format!("landing_areas[{i}] probability {p} outside [0, 1]"));
        }
    }
    if !config.landing_areas.is_empty() {
        let sum: f64 = config.landing_areas.iter().map(|a| a.selection_probability).sum();
        if (sum - 1.0).abs() > PROBABILITY_TOLERANCE {
            report.push(format!("landing probabilities sum {sum} ≠ 1"));
        }
    }

    for (i, (name_a, a)) in regions.iter().enumerate() {
        for (name_b, b) in &regions[i + 1..] {
            if a.is_well_formed() && b.is_well_formed() && a.overlaps(b) {
                report.push(format!("{name_a} overlaps {name_b}"));
            }
        }
    }

    for (i, station) in config.base_stations.iter().enumerate() {
        if station.channels < 1 {
            report.push(format!("base_stations[{i}] must have at least 1 channel"));
        }
        let inside =
            (0.0..=config.map_width_m()).contains(&station.x_m) && (0.0..=config.map_height_m()).contains(&station.y_m);
        if !inside {
            report.push(format!(
                "base_stations[{i}] position ({}, {}) m outside map bounds",
                station.x_m, station.y_m
            ));
        }
    }

    let pl = &config.path_loss;
    if pl.model != defaults::PATH_LOSS_MODEL {
        report.push(format!("path_loss.model {:?} is not supported", pl.model));
    }
    if !(pl.d0 > 0.0) {
        report.push(format!("path_loss.d0 {} must be > 0", pl.d0));
    }
    if !(pl.n > 0.0) {
        report.push(format!("path_loss.n {} must be > 0", pl.n));
    }
    if !(pl.sigma >= 0.0) {
        report.push(format!("path_loss.sigma {} must be >= 0", pl.sigma));
    }
    if !(pl.good_threshold_db < pl.nolink_threshold_db) {
        report.push(format!(
            "path_loss.good_threshold_db {} must be < nolink_threshold_db {}",
            pl.good_threshold_db, pl.nolink_threshold_db
        ));
    }
    if let Some(anchor) = &config.geo_anchor {
        if !(anchor.meters_per_degree > 0.0) {
            report.push("geo_anchor.meters_per_degree must be > 0".to_string());
        }
    }

    report
}

fn named_regions(config: &ScenarioConfig) -> Vec<(String, Rect)> {
    let launch = config
        .launch_areas
        .iter()
        .enumerate()
        .map(|(i, a)| (format!("launch_areas[{i}]"), a.region));
    let landing = config
        .landing_areas
        .iter()
        .enumerate()
        .map(|(i, a)| (format!("landing_areas[{i}]"), a.region));
    let zones = config
        .no_fly_zones
        .iter()
        .enumerate()
        .map(|(i, r)| (format!("no_fly_zones[{i}]"), *r));
    launch.chain(landing).chain(zones).collect()
}
