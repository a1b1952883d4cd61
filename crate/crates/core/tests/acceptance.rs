//! End-to-end acceptance suite. Every criterion prints one PASS/FAIL line;
//! the test fails if any criterion fails.
//!
//! The report goes straight to stderr, so it shows without `--nocapture`.

use std::collections::hash_map::DefaultHasher;
use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::hash::{Hash, Hasher};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use skylane::analysis::{density_map, max_density_map, summarize_metrics, DistributionMap, MetricsReport};
use skylane::cli::cmd_run;
use skylane::comms::{
    allocate_channels, coverage_mask, path_loss, propagation_model, reset_channels, LinkClass, LinkRequest,
};
use skylane::routing::{
    manhattan_trajectory, p2p_trajectory, plan_managed, Airspace, AxisOrder, Mission, PlanOutcome, ReservationTable,
    Trajectory,
};
use skylane::scenario::{BaseStationConfig, PathLossParams, ScenarioConfig};
use skylane::{parse_scenario, run, Cell, Grid, Point};
use tempfile::TempDir;

type Outcome = Result<String, String>;

fn scenario_path(name: &str) -> PathBuf {
    [env!("CARGO_MANIFEST_DIR"), "scenarios", name].iter().collect()
}

fn desk(name: &str) -> ScenarioConfig {
    parse_scenario(&fs::read_to_string(scenario_path(name)).unwrap()).unwrap()
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Run seeds 1..=10 of a scenario; returns per-seed metrics and the slowest single run.
fn ten_seeds(cfg: &ScenarioConfig) -> (Vec<MetricsReport>, Duration) {
    let runs: Vec<(MetricsReport, Duration)> = (1..=10u64)
        .into_par_iter()
        .map(|seed| {
            let c = ScenarioConfig {
                rng_seed: seed,
                ..cfg.clone()
            };
            let t = Instant::now();
            let log = run(&c).expect("desk scenarios are valid");
            let elapsed = t.elapsed();
            (summarize_metrics(&log, c.step_seconds), elapsed)
        })
        .collect();
    let slowest = runs.iter().map(|r| r.1).max().unwrap();
    (runs.into_iter().map(|r| r.0).collect(), slowest)
}

fn mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.into_iter().collect();
    v.iter().sum::<f64>() / v.len() as f64
}

/// Seed sweeps shared by several criteria.
struct Sweeps {
    p2p: Vec<MetricsReport>,
    manhattan: Vec<MetricsReport>,
    managed: Vec<MetricsReport>,
    managed_slowest: Duration,
}

fn c1(s: &Sweeps) -> Outcome {
    let ratios: Vec<f64> = s.managed.iter().map(|m| m.conflict_ratio.unwrap_or(f64::NAN)).collect();
    let zero = ratios.iter().all(|&r| r == 0.0);
    let fast = s.managed_slowest < Duration::from_secs(10);
    check(
        zero && fast,
        format!("conflict ratios {ratios:?}, slowest seed {:.2?}", s.managed_slowest),
    )
}

fn c2(s: &Sweeps) -> Outcome {
    let p2p = mean(s.p2p.iter().map(|m| m.conflict_ratio.unwrap()));
    let man = mean(s.manhattan.iter().map(|m| m.conflict_ratio.unwrap()));
    check(
        man > p2p && p2p > 0.0,
        format!("mean conflict ratio manhattan {man:.4} > p2p {p2p:.4} > 0"),
    )
}

fn c3() -> Outcome {
    let start = Instant::now();
    let side = 1000u32;
    let pairs = 10_000;
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let (mut l1, mut l2) = (0u64, 0u64);
    for _ in 0..pairs {
        let mut cell = || Cell::new(rng.gen_range(0..side), rng.gen_range(0..side));
        let (a, b) = (cell(), cell());
        l1 += manhattan_trajectory(a, b, AxisOrder::XFirst).flight_steps();
        l2 += p2p_trajectory(a.center_m(18.0), b.center_m(18.0), 18.0, 18.0).flight_steps();
    }
    let ratio = l1 as f64 / l2 as f64;
    let target = 4.0 / std::f64::consts::PI;
    let elapsed = start.elapsed();
    check(
        (ratio / target - 1.0).abs() <= 0.05 && elapsed < Duration::from_secs(5),
        format!("{pairs} pairs: ratio {ratio:.4} vs 4/pi {target:.4}, {elapsed:.2?}"),
    )
}

fn c4(s: &Sweeps) -> Outcome {
    let mut detail = Vec::new();
    let mut ok = true;
    for (k, (un, man)) in s.manhattan.iter().zip(&s.managed).enumerate() {
        let fine = man.throughput <= un.throughput && (man.cancellations == 0 || man.throughput < un.throughput);
        ok &= fine;
        if !fine {
            detail.push(format!("seed {}: {} vs {}", k + 1, man.throughput, un.throughput));
        }
    }
    let (tu, tm) = (
        mean(s.manhattan.iter().map(|m| m.throughput as f64)),
        mean(s.managed.iter().map(|m| m.throughput as f64)),
    );
    let cancels: u64 = s.managed.iter().map(|m| m.cancellations).sum();
    check(
        ok,
        format!("mean throughput managed {tm:.1} <= unmanaged {tu:.1}, {cancels} cancellations {detail:?}"),
    )
}

fn c5(s: &Sweeps) -> Outcome {
    let un = mean(s.manhattan.iter().filter_map(|m| m.avg_flight_time_s));
    let held = ScenarioConfig {
        max_hold: 5,
        ..desk("desk_managed.toml")
    };
    let (held_runs, _) = ten_seeds(&held);
    let mut parts = Vec::new();
    let mut ok = true;
    for (hold, runs) in [(0, &s.managed), (5, &held_runs)] {
        let man = mean(runs.iter().filter_map(|m| m.avg_flight_time_s));
        let inflation = (man - un) / un;
        ok &= inflation < 0.05;
        parts.push(format!("max_hold {hold}: {man:.2} s ({:+.2}%)", 100.0 * inflation));
    }
    check(ok, format!("unmanaged {un:.2} s; {}", parts.join("; ")))
}

fn c6() -> Outcome {
    let params = PathLossParams::default();
    let pl = path_loss(1000.0, &params, 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut violations = 0;
    for _ in 0..100_000 {
        let (a, b): (f64, f64) = (rng.gen_range(0.0..50_000.0), rng.gen_range(0.0..50_000.0));
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        if path_loss(lo, &params, 0.0) > path_loss(hi, &params, 0.0) {
            violations += 1;
        }
    }
    check(
        (pl - 121.0).abs() <= 1e-9 && violations == 0,
        format!("PL(1000 m) = {pl:.12} dB, {violations} monotonicity violations in 1e5 pairs"),
    )
}

fn dense_oracle(grid: Grid, dist: &DistributionMap, w: u32, s: u32) -> (Vec<Vec<u32>>, Vec<Vec<u32>>) {
    let mut d = vec![vec![0u32; grid.width as usize]; grid.height as usize];
    for (c, &n) in dist {
        d[c.y as usize][c.x as usize] = n;
    }
    let (mut sums, mut maxes) = (Vec::new(), Vec::new());
    let mut y = 0;
    while y + w <= grid.height {
        let (mut srow, mut mrow) = (Vec::new(), Vec::new());
        let mut x = 0;
        while x + w <= grid.width {
            let (mut sum, mut max) = (0, 0);
            for j in y..y + w {
                for i in x..x + w {
                    sum += d[j as usize][i as usize];
                    max = max.max(d[j as usize][i as usize]);
                }
            }
            srow.push(sum);
            mrow.push(max);
            x += s;
        }
        sums.push(srow);
        maxes.push(mrow);
        y += s;
    }
    (sums, maxes)
}

fn c7() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut mismatches = 0;
    for _ in 0..1000 {
        let grid = Grid::new(rng.gen_range(1..=32), rng.gen_range(1..=32));
        let mut dist = DistributionMap::new();
        for _ in 0..rng.gen_range(0..60) {
            let c = Cell::new(rng.gen_range(0..grid.width), rng.gen_range(0..grid.height));
            *dist.entry(c).or_default() += rng.gen_range(1..4);
        }
        let (w, s) = (rng.gen_range(1..=6), rng.gen_range(1..=6));
        let (sums, maxes) = dense_oracle(grid, &dist, w, s);
        if density_map(&dist, grid, w, s).to_dense() != sums || max_density_map(&dist, grid, w, s).to_dense() != maxes {
            mismatches += 1;
        }
    }
    let elapsed = start.elapsed();
    check(
        mismatches == 0 && elapsed < Duration::from_secs(5),
        format!("1000 random grids, {mismatches} mismatches, {elapsed:.2?}"),
    )
}

/// One random sequence of planning, direct reservations and releases on a
/// small grid with an obstacle. Returns the number of violations found.
fn fuzz_sequence(rng: &mut ChaCha8Rng) -> usize {
    let grid = Grid::new(10, 10);
    let blocked = |c: Cell| c.x == 4 && (2..=7).contains(&c.y);
    let covered = |_: Cell| true;
    let air = Airspace {
        grid,
        blocked: &blocked,
        covered: &covered,
    };
    let mut table = ReservationTable::new();
    let mut live: BTreeMap<u32, Trajectory> = BTreeMap::new();
    let mut violations = 0;
    let free_cell = |rng: &mut ChaCha8Rng| loop {
        let c = Cell::new(rng.gen_range(0..10), rng.gen_range(0..10));
        if !blocked(c) {
            return c;
        }
    };

    for agent in 0..rng.gen_range(1..16u32) {
        match rng.gen_range(0..10) {
            0..=5 => {
                let mission = Mission {
                    origin: free_cell(rng),
                    dest: free_cell(rng),
                };
                let (t0, hold) = (rng.gen_range(0..12), rng.gen_range(0..4));
                match plan_managed(&air, mission, agent, t0, &mut table, hold) {
                    Ok(PlanOutcome::Planned(t)) => {
                        live.insert(agent, t);
                    }
                    Ok(PlanOutcome::Cancelled(_)) => {}
                    Err(_) => violations += 1,
                }
            }
            6..=7 => {
                let (a, b) = (free_cell(rng), free_cell(rng));
                let t = manhattan_trajectory(a, b, AxisOrder::YFirst).scheduled(rng.gen_range(0..12), 0);
                let clash = live
                    .values()
                    .any(|o| o.occupancy().any(|k| t.occupancy().any(|m| m == k)));
                let before = table.len();
                match table.reserve(&t, agent) {
                    Ok(()) if !clash => {
                        live.insert(agent, t);
                    }
                    Err(_) if clash => violations += usize::from(table.len() != before),
                    _ => violations += 1,
                }
            }
            _ => {
                if let Some(&victim) = live.keys().nth(rng.gen_range(0..live.len().max(1))) {
                    let n = live.remove(&victim).unwrap().occupancy().count();
                    violations += usize::from(table.release(victim) != n);
                }
            }
        }

        // replay: no two live trajectories share a (cell, step), and the table holds exactly their keys
        let mut owners: HashMap<(Cell, u64), u32> = HashMap::new();
        for (&a, t) in &live {
            for k in t.occupancy() {
                if owners.insert(k, a).is_some() {
                    violations += 1;
                }
            }
        }
        if owners.len() != table.len() || table.entries().any(|(k, a)| owners.get(&k) != Some(&a)) {
            violations += 1;
        }
    }
    violations
}

fn c8() -> Outcome {
    let violations: usize = (0..10_000u64)
        .into_par_iter()
        .map(|i| fuzz_sequence(&mut ChaCha8Rng::seed_from_u64(i)))
        .sum();
    check(
        violations == 0,
        format!("1e4 sequences, {violations} co-occupancies or double bookings"),
    )
}

fn tree_hashes(root: &Path) -> BTreeMap<PathBuf, u64> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let mut h = DefaultHasher::new();
                fs::read(&path).unwrap().hash(&mut h);
                out.insert(path.strip_prefix(root).unwrap().to_path_buf(), h.finish());
            }
        }
    }
    out
}

fn c9() -> Outcome {
    let tmp = TempDir::new().unwrap();
    let scenario = scenario_path("desk_managed.toml");
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    cmd_run(&scenario, "3", &a).map_err(|e| e.to_string())?;
    cmd_run(&scenario, "3", &b).map_err(|e| e.to_string())?;
    let (ha, hb) = (tree_hashes(&a), tree_hashes(&b));
    check(
        ha == hb && ha.len() == 3 * 4 + 1,
        format!("{} files, trees identical: {}", ha.len(), ha == hb),
    )
}

/// Lexicographically best feasible assignment, found by enumeration.
fn exhaustive(losses: &[Vec<f64>], capacity: &[u32], nolink: f64) -> Vec<Option<usize>> {
    let key = |a: &[Option<usize>]| -> Vec<(f64, usize)> {
        a.iter()
            .enumerate()
            .map(|(i, s)| s.map_or((f64::INFINITY, usize::MAX), |s| (losses[i][s], s)))
            .collect()
    };
    let mut best: Option<Vec<Option<usize>>> = None;
    let total = (capacity.len() + 1).pow(losses.len() as u32);
    for code in 0..total {
        let mut c = code;
        let assignment: Vec<Option<usize>> = (0..losses.len())
            .map(|_| {
                let s = c % (capacity.len() + 1);
                c /= capacity.len() + 1;
                (s < capacity.len()).then_some(s)
            })
            .collect();
        let mut used = vec![0; capacity.len()];
        let feasible = assignment.iter().enumerate().all(|(i, s)| {
            s.is_none_or(|s| {
                used[s] += 1;
                used[s] <= capacity[s] && losses[i][s] <= nolink
            })
        });
        let better = best.as_ref().is_none_or(|b| {
            let (kn, kb) = (key(&assignment), key(b));
            kn.iter()
                .zip(&kb)
                .find(|(x, y)| x != y)
                .is_some_and(|(x, y)| x.0 < y.0 || (x.0 == y.0 && x.1 < y.1))
        });
        if feasible && better {
            best = Some(assignment);
        }
    }
    best.unwrap()
}

fn c10() -> Outcome {
    let params = PathLossParams::default();
    let model = propagation_model(&params).unwrap();
    let spot = Point::new(500.0, 500.0);
    let requests: Vec<LinkRequest> = (0..5)
        .map(|agent| LinkRequest {
            agent,
            position: spot,
            shadowing_db: 0.0,
        })
        .collect();
    let mut detail = Vec::new();
    let mut ok = true;
    // a lone station, then a second one that is reachable, then one that is not
    for (label, extra) in [
        ("alone", None),
        ("reachable spare", Some(900.0)),
        ("unreachable spare", Some(5000.0)),
    ] {
        let mut configs = vec![BaseStationConfig::new(500.0, 510.0, 2)];
        if let Some(x) = extra {
            configs.push(BaseStationConfig::new(x, 500.0, 8));
        }
        let mut stations: Vec<_> = configs
            .iter()
            .cloned()
            .map(skylane::comms::BaseStationState::new)
            .collect();
        let losses: Vec<Vec<f64>> = requests
            .iter()
            .map(|r| {
                configs
                    .iter()
                    .map(|c| path_loss(r.position.distance(c.position()), &params, 0.0))
                    .collect()
            })
            .collect();
        let capacity: Vec<u32> = configs.iter().map(|c| c.channels).collect();
        let oracle = exhaustive(&losses, &capacity, params.nolink_threshold_db);
        for step in 0..10 {
            reset_channels(&mut stations);
            let samples = allocate_channels(step, &requests, &mut stations, &*model, &params);
            let on_first = samples.iter().filter(|s| s.station == Some(0)).count();
            let got: Vec<Option<usize>> = samples.iter().map(|s| s.station.map(|x| x as usize)).collect();
            let nolink_ok = samples
                .iter()
                .all(|s| (s.class == LinkClass::NoLink) == (s.station.is_none()));
            ok &= on_first == 2 && got == oracle && nolink_ok;
        }
        let assigned = oracle.iter().filter(|s| s.is_some()).count();
        detail.push(format!("{label}: {assigned}/5 linked"));
    }
    check(
        ok,
        format!("2 channels on the shared station every step; {}", detail.join(", ")),
    )
}

fn c11(managed: &[MetricsReport]) -> Outcome {
    let zoned = desk("desk_managed_nofly.toml");
    let model = propagation_model(&zoned.path_loss).unwrap();
    let coverage = coverage_mask(
        &zoned.base_stations,
        &*model,
        &zoned.path_loss,
        zoned.grid(),
        zoned.cell_size_m,
    );
    let zone_ok = zoned
        .no_fly_zones
        .iter()
        .flat_map(|z| z.cells())
        .all(|c| coverage.class_at(c) != LinkClass::Good);
    let (with_zone, _) = ten_seeds(&zoned);
    let before = mean(managed.iter().map(|m| m.poor_link_rate.unwrap()));
    let after = mean(with_zone.iter().map(|m| m.poor_link_rate.unwrap()));
    let (nb, na) = (
        mean(managed.iter().map(|m| m.no_link_rate.unwrap())),
        mean(with_zone.iter().map(|m| m.no_link_rate.unwrap())),
    );
    check(
        zone_ok && after < before,
        format!("zones over poor/no-link cells: {zone_ok}; poor-link rate {before:.4} -> {after:.4}, no-link {nb:.4} -> {na:.4}"),
    )
}

#[test]
fn acceptance() {
    let (p2p, _) = ten_seeds(&desk("desk_p2p.toml"));
    let (manhattan, _) = ten_seeds(&desk("desk_manhattan.toml"));
    let (managed, managed_slowest) = ten_seeds(&desk("desk_managed.toml"));
    let sweeps = Sweeps {
        p2p,
        manhattan,
        managed,
        managed_slowest,
    };

    let results: Vec<(&str, Outcome)> = vec![
        ("C1 managed zero-conflict", c1(&sweeps)),
        ("C2 conflict ordering", c2(&sweeps)),
        ("C3 flight-time ratio", c3()),
        ("C4 throughput monotonicity", c4(&sweeps)),
        ("C5 flight-time inflation bound", c5(&sweeps)),
        ("C6 path-loss exactness", c6()),
        ("C7 density-map oracle equivalence", c7()),
        ("C8 reservation soundness", c8()),
        ("C9 determinism", c9()),
        ("C10 channel capacity", c10()),
        ("C11 no-fly-zone coverage effect", c11(&sweeps.managed)),
    ];

    // written past the test harness capture so the report always shows
    let mut out = std::io::stderr().lock();
    let mut failed = Vec::new();
    for (name, outcome) in &results {
        match outcome {
            Ok(detail) => writeln!(out, "PASS {name}: {detail}").unwrap(),
            Err(detail) => {
                writeln!(out, "FAIL {name}: {detail}").unwrap();
                failed.push(*name);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
