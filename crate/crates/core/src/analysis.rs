//! Metrics and density maps derived from simulation logs.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use crate::comms::LinkClass;
use crate::grid::{Cell, Grid};
use crate::log::{PositionRecord, SimulationLog};
use crate::routing::AgentId;

/// Two or more agents in one cell at one step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConflictEvent {
    pub step: u64,
    pub cell: Cell,
    /// Members in ascending id order.
    pub agents: Vec<AgentId>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConflictReport {
    pub events: Vec<ConflictEvent>,
    /// Missions involved in at least one conflict.
    pub flagged: BTreeSet<AgentId>,
}

/// Group position records by (step, cell); every group of two or more is a conflict.
pub fn detect_conflicts(positions: &[PositionRecord]) -> ConflictReport {
    let mut occupancy: BTreeMap<(u64, Cell), Vec<AgentId>> = BTreeMap::new();
    for r in positions {
        occupancy.entry((r.step, r.cell)).or_default().push(r.agent);
    }
    let mut report = ConflictReport::default();
    for ((step, cell), mut agents) in occupancy {
        if agents.len() < 2 {
            continue;
        }
        agents.sort_unstable();
        report.flagged.extend(agents.iter().copied());
        report.events.push(ConflictEvent { step, cell, agents });
    }
    report
}

/// Flagged missions over launched missions; `None` when nothing launched.
pub fn conflict_ratio(flagged: usize, launched: usize) -> Option<f64> {
    (launched > 0).then(|| flagged as f64 / launched as f64)
}

/// Sparse per-cell agent counts.
pub type DistributionMap = BTreeMap<Cell, u32>;

/// Occupancy of each step, in step order.
pub fn distribution_by_step(positions: &[PositionRecord]) -> BTreeMap<u64, DistributionMap> {
    let mut out: BTreeMap<u64, DistributionMap> = BTreeMap::new();
    for r in positions {
        *out.entry(r.step).or_default().entry(r.cell).or_default() += 1;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Filter {
    Sum,
    Max,
}

/// Sparse window map over a grid, valid-mode (windows fully inside the grid).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DensityMap {
    pub window: u32,
    pub stride: u32,
    pub cols: u32,
    pub rows: u32,
    pub values: BTreeMap<(u32, u32), u32>,
}

impl DensityMap {
    pub fn empty(grid: Grid, window: u32, stride: u32) -> Self {
        let dim = |n: u32| if n >= window { (n - window) / stride + 1 } else { 0 };
        Self {
            window,
            stride,
            cols: dim(grid.width),
            rows: dim(grid.height),
            values: BTreeMap::new(),
        }
    }

    pub fn get(&self, x: u32, y: u32) -> u32 {
        self.values.get(&(x, y)).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.values.values().map(|&v| u64::from(v)).sum()
    }

    pub fn max_value(&self) -> u32 {
        self.values.values().copied().max().unwrap_or(0)
    }

    /// Element-wise maximum with another map of the same shape.
    pub fn merge_max(&mut self, other: &DensityMap) {
        for (&k, &v) in &other.values {
            let e = self.values.entry(k).or_insert(0);
            *e = (*e).max(v);
        }
    }

    /// Window indices whose span covers grid coordinate `c` along one axis.
    fn covering(&self, c: u32, limit: u32) -> std::ops::Range<u32> {
        let lo = (c + 1).saturating_sub(self.window).div_ceil(self.stride);
        let hi = (c / self.stride + 1).min(limit);
        lo..hi.max(lo)
    }

    fn apply(dist: &DistributionMap, grid: Grid, window: u32, stride: u32, filter: Filter) -> Self {
        assert!(window >= 1 && stride >= 1, "window and stride must be >= 1");
        let mut map = Self::empty(grid, window, stride);
        for (&cell, &count) in dist {
            if count == 0 || !grid.contains(cell) {
                continue;
            }
            for wy in map.covering(cell.y, map.rows) {
                for wx in map.covering(cell.x, map.cols) {
                    let e = map.values.entry((wx, wy)).or_insert(0);
                    match filter {
                        Filter::Sum => *e += count,
                        Filter::Max => *e = (*e).max(count),
                    }
                }
            }
        }
        map
    }

    /// Dense row-major matrix, row 0 is window row y = 0.
    pub fn to_dense(&self) -> Vec<Vec<u32>> {
        (0..self.rows)
            .map(|y| (0..self.cols).map(|x| self.get(x, y)).collect())
            .collect()
    }
}

/// `D(x, y) = sum of d over the W x W window at (x*S, y*S)`.
pub fn density_map(dist: &DistributionMap, grid: Grid, window: u32, stride: u32) -> DensityMap {
    DensityMap::apply(dist, grid, window, stride, Filter::Sum)
}

/// `D(x, y) = max of d over the W x W window at (x*S, y*S)`.
pub fn max_density_map(dist: &DistributionMap, grid: Grid, window: u32, stride: u32) -> DensityMap {
    DensityMap::apply(dist, grid, window, stride, Filter::Max)
}

/// Element-wise maximum over all steps of the per-step window map.
pub fn peak_density_map(
    positions: &[PositionRecord],
    grid: Grid,
    window: u32,
    stride: u32,
    filter: Filter,
) -> DensityMap {
    let mut peak = DensityMap::empty(grid, window, stride);
    for dist in distribution_by_step(positions).values() {
        peak.merge_max(&DensityMap::apply(dist, grid, window, stride, filter));
    }
    peak
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub throughput: u64,
    pub avg_flight_time_s: Option<f64>,
    pub conflict_ratio: Option<f64>,
    pub no_link_rate: Option<f64>,
    pub poor_link_rate: Option<f64>,
    pub cancellations: u64,
}

pub const METRICS_HEADER: &str =
    "throughput,avg_flight_time_s,conflict_ratio,no_link_rate,poor_link_rate,cancellations";

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

impl MetricsReport {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.throughput,
            opt(self.avg_flight_time_s),
            opt(self.conflict_ratio),
            opt(self.no_link_rate),
            opt(self.poor_link_rate),
            self.cancellations
        )
    }
}

/// Mean of each column across runs; absent values are skipped per column.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanMetrics {
    pub throughput: f64,
    pub avg_flight_time_s: Option<f64>,
    pub conflict_ratio: Option<f64>,
    pub no_link_rate: Option<f64>,
    pub poor_link_rate: Option<f64>,
    pub cancellations: f64,
}

pub fn mean_metrics(reports: &[MetricsReport]) -> MeanMetrics {
    let mean = |values: Vec<f64>| (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64);
    let col = |f: fn(&MetricsReport) -> Option<f64>| mean(reports.iter().filter_map(f).collect());
    MeanMetrics {
        throughput: mean(reports.iter().map(|r| r.throughput as f64).collect()).unwrap_or(0.0),
        avg_flight_time_s: col(|r| r.avg_flight_time_s),
        conflict_ratio: col(|r| r.conflict_ratio),
        no_link_rate: col(|r| r.no_link_rate),
        poor_link_rate: col(|r| r.poor_link_rate),
        cancellations: mean(reports.iter().map(|r| r.cancellations as f64).collect()).unwrap_or(0.0),
    }
}

impl MeanMetrics {
    pub fn csv_row(&self) -> String {
        format!(
            "{:.6},{},{},{},{},{:.6}",
            self.throughput,
            opt(self.avg_flight_time_s),
            opt(self.conflict_ratio),
            opt(self.no_link_rate),
            opt(self.poor_link_rate),
            self.cancellations
        )
    }
}

/// Header, one row per run in order, then the mean row.
pub fn metrics_csv(reports: &[MetricsReport]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in reports {
        let _ = writeln!(out, "{}", r.csv_row());
    }
    if !reports.is_empty() {
        let _ = writeln!(out, "{}", mean_metrics(reports).csv_row());
    }
    out
}

/// Throughput, flight time, conflict ratio and link rates for one run.
pub fn summarize_metrics(log: &SimulationLog, step_seconds: f64) -> MetricsReport {
    let launched = log.launches.len();
    let conflicts = detect_conflicts(&log.positions);

    let launch_step: BTreeMap<AgentId, u64> = log.launches.iter().map(|l| (l.agent, l.step)).collect();
    let durations: Vec<f64> = log
        .landings
        .iter()
        .filter_map(|l| launch_step.get(&l.agent).map(|&s| (l.step - s) as f64 * step_seconds))
        .collect();
    let avg_flight_time_s = (!durations.is_empty()).then(|| durations.iter().sum::<f64>() / durations.len() as f64);

    let samples = log.links.len();
    let rate = |class: LinkClass| {
        (samples > 0).then(|| log.links.iter().filter(|s| s.class == class).count() as f64 / samples as f64)
    };

    MetricsReport {
        throughput: launched as u64,
        avg_flight_time_s,
        conflict_ratio: conflict_ratio(conflicts.flagged.len(), launched),
        no_link_rate: rate(LinkClass::NoLink),
        poor_link_rate: rate(LinkClass::Poor),
        cancellations: log.cancellations.len() as u64,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::comms::LinkSample;
    use crate::log::{LandingEvent, LaunchEvent};

    fn pos(step: u64, agent: AgentId, x: u32, y: u32) -> PositionRecord {
        PositionRecord {
            step,
            agent,
            cell: Cell::new(x, y),
        }
    }

    fn dist(cells: &[(u32, u32, u32)]) -> DistributionMap {
        cells.iter().map(|&(x, y, n)| (Cell::new(x, y), n)).collect()
    }

    #[test]
    fn co_located_pair_is_one_event() {
        let r = detect_conflicts(&[pos(7, 0, 4, 4), pos(7, 1, 4, 4)]);
        assert_eq!(r.events.len(), 1);
        assert_eq!(r.flagged.len(), 2);
    }

    #[test]
    fn temporal_separation_is_no_conflict() {
        let r = detect_conflicts(&[pos(7, 0, 4, 4), pos(8, 1, 4, 4)]);
        assert!(r.events.is_empty() && r.flagged.is_empty());
    }

    #[test]
    fn three_way_conflict() {
        let r = detect_conflicts(&[pos(2, 5, 1, 1), pos(2, 3, 1, 1), pos(2, 9, 1, 1)]);
        assert_eq!(
            r.events,
            vec![ConflictEvent {
                step: 2,
                cell: Cell::new(1, 1),
                agents: vec![3, 5, 9]
            }]
        );
        assert_eq!(r.flagged.len(), 3);
    }

    #[test]
    fn persistent_conflict_counts_once_per_mission() {
        let positions: Vec<_> = (0..5).flat_map(|s| [pos(s, 0, 2, 2), pos(s, 1, 2, 2)]).collect();
        let r = detect_conflicts(&positions);
        assert_eq!(r.events.len(), 5);
        assert_eq!(r.flagged.len(), 2);
    }

    #[test]
    fn ratio_cases() {
        assert_eq!(conflict_ratio(2, 10), Some(0.2));
        assert_eq!(conflict_ratio(0, 10), Some(0.0));
        assert_eq!(conflict_ratio(10, 10), Some(1.0));
        assert_eq!(conflict_ratio(0, 0), None);
    }

    #[test]
    fn density_identity_and_empty() {
        let g = Grid::new(6, 6);
        assert!(density_map(&DistributionMap::new(), g, 2, 2).values.is_empty());
        let d = dist(&[(0, 0, 1), (3, 5, 2)]);
        let m = density_map(&d, g, 1, 1);
        assert_eq!((m.cols, m.rows), (6, 6));
        assert_eq!(m.get(0, 0), 1);
        assert_eq!(m.get(3, 5), 2);
        assert_eq!(m.total(), 3);
    }

    #[test]
    fn density_diagonal() {
        let g = Grid::new(4, 4);
        let d = dist(&[(0, 0, 1), (1, 1, 1), (2, 2, 1)]);
        let m = density_map(&d, g, 2, 2);
        assert_eq!(m.to_dense(), vec![vec![2, 0], vec![0, 1]]);
        let d = dist(&[(0, 0, 2), (1, 1, 1)]);
        let m = max_density_map(&d, g, 2, 2);
        assert_eq!(m.get(0, 0), 2);
    }

    #[test]
    fn overlapping_windows() {
        // W=3, S=1 on a 5x5 grid: 3x3 windows
        let g = Grid::new(5, 5);
        let m = density_map(&dist(&[(2, 2, 1)]), g, 3, 1);
        assert_eq!((m.cols, m.rows), (3, 3));
        assert_eq!(m.total(), 9);
        let m = density_map(&dist(&[(0, 4, 1)]), g, 3, 1);
        assert_eq!(m.values.keys().copied().collect::<Vec<_>>(), vec![(0, 2)]);
    }

    #[test]
    fn window_larger_than_grid() {
        let m = density_map(&dist(&[(0, 0, 1)]), Grid::new(2, 2), 3, 1);
        assert_eq!((m.cols, m.rows), (0, 0));
        assert!(m.values.is_empty());
    }

    #[test]
    fn flight_time_and_rates() {
        let (o, d) = (Cell::new(0, 0), Cell::new(1, 1));
        let mut log = SimulationLog {
            launches: vec![
                LaunchEvent {
                    step: 0,
                    agent: 0,
                    origin: o,
                    dest: d,
                    hold: 0,
                },
                LaunchEvent {
                    step: 0,
                    agent: 1,
                    origin: o,
                    dest: d,
                    hold: 0,
                },
            ],
            landings: vec![
                LandingEvent {
                    step: 381,
                    agent: 0,
                    origin: o,
                    dest: d,
                    hold: 0,
                },
                LandingEvent {
                    step: 383,
                    agent: 1,
                    origin: o,
                    dest: d,
                    hold: 0,
                },
            ],
            ..Default::default()
        };
        let m = summarize_metrics(&log, 1.0);
        assert_eq!(m.throughput, 2);
        assert_eq!(m.avg_flight_time_s, Some(382.0));
        assert_eq!(m.no_link_rate, None);
        assert_eq!(m.poor_link_rate, None);

        log.links = (0..100)
            .map(|i| LinkSample {
                agent: 0,
                step: i,
                station: None,
                path_loss_db: 0.0,
                class: match i {
                    0 => LinkClass::NoLink,
                    1..=45 => LinkClass::Poor,
                    _ => LinkClass::Good,
                },
            })
            .collect();
        let m = summarize_metrics(&log, 1.0);
        assert_eq!(m.no_link_rate, Some(0.01));
        assert_eq!(m.poor_link_rate, Some(0.45));
    }

    #[test]
    fn metrics_table_has_mean_row() {
        let r = |t, c| MetricsReport {
            throughput: t,
            avg_flight_time_s: Some(10.0),
            conflict_ratio: c,
            no_link_rate: None,
            poor_link_rate: None,
            cancellations: 1,
        };
        let csv = metrics_csv(&[r(4, Some(0.5)), r(6, None)]);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[1], "4,10.000000,0.500000,,,1");
        assert_eq!(lines[3], "5.000000,10.000000,0.500000,,,1.000000");
    }
}
