//! File artifacts for external viewers: graymaps, dense CSV matrices and trajectory files.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use chrono::{DateTime, SecondsFormat};
use serde_json::{json, Value};

use crate::analysis::DensityMap;
use crate::comms::{CoverageMap, LinkClass};
use crate::grid::{Cell, Point};
use crate::log::SimulationLog;
use crate::routing::AgentId;
use crate::scenario::{GeoAnchor, ScenarioConfig};

/// Plain (ASCII) PGM with north up: the last matrix row is written first.
///
/// Pixel value is `floor(255 * v / max)`, raised to 1 for nonzero `v` so that
/// normalization never turns an occupied cell black. An all-zero matrix is black.
pub fn graymap(matrix: &[Vec<u32>]) -> String {
    let height = matrix.len();
    let width = matrix.first().map_or(0, Vec::len);
    let max = matrix.iter().flatten().copied().max().unwrap_or(0);
    let mut out = format!("P2\n{width} {height}\n255\n");
    for row in matrix.iter().rev() {
        let line: Vec<String> = row
            .iter()
            .map(|&v| {
                if v == 0 || max == 0 {
                    0
                } else {
                    ((255 * u64::from(v)) / u64::from(max)).max(1)
                }
                .to_string()
            })
            .collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

/// Dense CSV, first line is window row 0.
pub fn matrix_csv(matrix: &[Vec<u32>]) -> String {
    let mut out = String::new();
    for row in matrix {
        let line: Vec<String> = row.iter().map(u32::to_string).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

pub fn density_csv(map: &DensityMap) -> String {
    matrix_csv(&map.to_dense())
}

/// Launch/landing/no-fly rectangles, in cell coordinates.
pub fn regions_csv(config: &ScenarioConfig) -> String {
    let mut out = String::from("kind,index,x_min,y_min,x_max,y_max\n");
    let mut row = |kind: &str, i: usize, r: &crate::scenario::Rect| {
        let _ = writeln!(out, "{kind},{i},{},{},{},{}", r.x_min, r.y_min, r.x_max, r.y_max);
    };
    for (i, a) in config.launch_areas.iter().enumerate() {
        row("launch", i, &a.region);
    }
    for (i, a) in config.landing_areas.iter().enumerate() {
        row("landing", i, &a.region);
    }
    for (i, z) in config.no_fly_zones.iter().enumerate() {
        row("no_fly", i, z);
    }
    out
}

fn class_matrix(map: &CoverageMap, value: impl Fn(LinkClass) -> u32) -> Vec<Vec<u32>> {
    let grid = map.grid();
    (0..grid.height)
        .map(|y| (0..grid.width).map(|x| value(map.class_at(Cell::new(x, y)))).collect())
        .collect()
}

/// Per-cell class labels, first line is y = 0.
pub fn coverage_csv(map: &CoverageMap) -> String {
    let grid = map.grid();
    let mut out = String::new();
    for y in 0..grid.height {
        let line: Vec<&str> = (0..grid.width)
            .map(|x| map.class_at(Cell::new(x, y)).as_str())
            .collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

/// Combined graymap: Good 255, Poor 128, NoLink 0.
pub fn coverage_graymap(map: &CoverageMap) -> String {
    graymap(&class_matrix(map, |c| match c {
        LinkClass::Good => 255,
        LinkClass::Poor => 128,
        LinkClass::NoLink => 0,
    }))
}

/// Binary mask graymap of one class.
pub fn class_graymap(map: &CoverageMap, class: LinkClass) -> String {
    graymap(&class_matrix(map, |c| u32::from(c == class)))
}

/// Map meters to (lon, lat) with an equirectangular approximation at the anchor.
pub fn to_geo(p: Point, anchor: &GeoAnchor) -> (f64, f64) {
    let lat = anchor.lat + p.y / anchor.meters_per_degree;
    let lon = anchor.lon + p.x / (anchor.meters_per_degree * anchor.lat.to_radians().cos());
    (lon, lat)
}

pub fn from_geo(lon: f64, lat: f64, anchor: &GeoAnchor) -> Point {
    Point::new(
        (lon - anchor.lon) * anchor.meters_per_degree * anchor.lat.to_radians().cos(),
        (lat - anchor.lat) * anchor.meters_per_degree,
    )
}

/// One launched mission's logged path.
#[derive(Debug, Clone, PartialEq)]
pub struct MissionTrack {
    pub agent: AgentId,
    pub launch_step: u64,
    pub land_step: Option<u64>,
    pub steps: Vec<u64>,
    pub cells: Vec<Cell>,
}

/// Group position records into one track per launched mission, in agent order.
pub fn mission_tracks(log: &SimulationLog) -> Vec<MissionTrack> {
    let mut tracks: BTreeMap<AgentId, MissionTrack> = log
        .launches
        .iter()
        .map(|l| {
            (
                l.agent,
                MissionTrack {
                    agent: l.agent,
                    launch_step: l.step,
                    land_step: None,
                    steps: Vec::new(),
                    cells: Vec::new(),
                },
            )
        })
        .collect();
    for l in &log.landings {
        if let Some(t) = tracks.get_mut(&l.agent) {
            t.land_step = Some(l.step);
        }
    }
    let mut positions: Vec<_> = log.positions.iter().collect();
    positions.sort_by_key(|p| (p.agent, p.step));
    for p in positions {
        if let Some(t) = tracks.get_mut(&p.agent) {
            t.steps.push(p.step);
            t.cells.push(p.cell);
        }
    }
    tracks.into_values().collect()
}

/// UTC timestamp of a simulation step, counted from the Unix epoch.
pub fn step_timestamp(step: u64, step_seconds: f64) -> String {
    let millis = (step as f64 * step_seconds * 1000.0).round() as i64;
    DateTime::from_timestamp_millis(millis)
        .expect("simulation times fit in the chrono range")
        .to_rfc3339_opts(SecondsFormat::Millis, true)
}

fn vertex(cell: Cell, config: &ScenarioConfig) -> (f64, f64) {
    let center = cell.center_m(config.cell_size_m);
    match &config.geo_anchor {
        Some(anchor) => to_geo(center, anchor),
        None => (center.x, center.y),
    }
}

fn coord_text(v: (f64, f64), geographic: bool) -> (String, String) {
    if geographic {
        (format!("{:.9}", v.0), format!("{:.9}", v.1))
    } else {
        (format!("{:.3}", v.0), format!("{:.3}", v.1))
    }
}

/// GeoJSON FeatureCollection, one LineString per mission with per-vertex timestamps.
pub fn trajectories_geojson(log: &SimulationLog, config: &ScenarioConfig) -> String {
    let geographic = config.geo_anchor.is_some();
    let round = |x: f64| {
        let (s, _) = coord_text((x, 0.0), geographic);
        s.parse::<f64>().expect("formatted float parses")
    };
    let features: Vec<Value> = mission_tracks(log)
        .into_iter()
        .map(|t| {
            let coords: Vec<Value> = t
                .cells
                .iter()
                .map(|&c| {
                    let (x, y) = vertex(c, config);
                    json!([round(x), round(y)])
                })
                .collect();
            let times: Vec<String> = t
                .steps
                .iter()
                .map(|&s| step_timestamp(s, config.step_seconds))
                .collect();
            json!({
                "type": "Feature",
                "geometry": { "type": "LineString", "coordinates": coords },
                "properties": {
                    "agent": t.agent,
                    "launch_step": t.launch_step,
                    "land_step": t.land_step,
                    "steps": t.steps,
                    "timestamps": times,
                }
            })
        })
        .collect();
    let crs = if geographic { "EPSG:4326" } else { "local-planar-meters" };
    let doc = json!({
        "type": "FeatureCollection",
        "properties": { "crs": crs, "cell_size_m": config.cell_size_m },
        "features": features,
    });
    let mut text = serde_json::to_string_pretty(&doc).expect("json values serialize");
    text.push('\n');
    text
}

/// KML document with one `gx:Track` placemark per mission.
pub fn trajectories_kml(log: &SimulationLog, config: &ScenarioConfig) -> String {
    let geographic = config.geo_anchor.is_some();
    let mut out = String::from(concat!(
        "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n",
        "<kml xmlns=\"http://www.opengis.net/kml/2.2\" xmlns:gx=\"http://www.google.com/kml/ext/2.2\">\n",
        "<Document>\n",
    ));
    if !geographic {
        out.push_str("<description>local planar coordinates in meters</description>\n");
    }
    for t in mission_tracks(log) {
        let _ = writeln!(out, "<Placemark>\n<name>agent {}</name>", t.agent);
        out.push_str("<gx:Track>\n<altitudeMode>relativeToGround</altitudeMode>\n");
        for &s in &t.steps {
            let _ = writeln!(out, "<when>{}</when>", step_timestamp(s, config.step_seconds));
        }
        for &c in &t.cells {
            let (x, y) = coord_text(vertex(c, config), geographic);
            let _ = writeln!(out, "<gx:coord>{x} {y} 0</gx:coord>");
        }
        out.push_str("</gx:Track>\n</Placemark>\n");
    }
    out.push_str("</Document>\n</kml>\n");
    out
}
