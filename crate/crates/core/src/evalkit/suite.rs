//! Scaling grids: robots, neighbors, obstacle density and obstacle size.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::metrics::{score_episode, EpisodeReport};
use super::runner::run_episode;
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::policy::PolicyParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuiteCell {
    pub n_robots: usize,
    pub obstacle_density: f64,
    pub obstacle_size: f64,
    pub k_neighbors: usize,
}

impl SuiteCell {
    pub const BASE: SuiteCell = SuiteCell {
        n_robots: 8,
        obstacle_density: 0.2,
        obstacle_size: 0.6,
        k_neighbors: 2,
    };

    pub fn apply(&self, base: &RunConfig) -> RunConfig {
        let mut c = base.clone();
        c.world.n_robots = self.n_robots;
        c.world.obstacle_density = self.obstacle_density;
        c.world.obstacle_size = self.obstacle_size;
        c.world.point_to_point = None;
        c.obs.k_neighbors = self.k_neighbors;
        c
    }
}

pub const SUITE_NAMES: [&str; 7] = ["base", "robots", "neighbors", "density", "size", "stress", "full"];

/// Grid of cells by name. Every grid contains the base cell.
pub fn named_suite(name: &str) -> Result<Vec<SuiteCell>> {
    let b = SuiteCell::BASE;
    let mut cells = vec![b];
    match name {
        "base" => {}
        "robots" => cells.extend([16, 24, 32].map(|n| SuiteCell { n_robots: n, ..b })),
        "neighbors" => cells.extend([1, 2, 6, 16, 31].map(|k| SuiteCell {
            n_robots: 32,
            k_neighbors: k,
            ..b
        })),
        "density" => cells.extend([0.4, 0.6, 0.8].map(|d| SuiteCell { obstacle_density: d, ..b })),
        "size" => cells.extend([0.7, 0.85].map(|s| SuiteCell { obstacle_size: s, ..b })),
        "stress" => cells.push(SuiteCell {
            n_robots: 32,
            obstacle_density: 0.8,
            ..b
        }),
        "full" => {
            for part in &SUITE_NAMES[1..6] {
                for c in named_suite(part)? {
                    if !cells.contains(&c) {
                        cells.push(c);
                    }
                }
            }
        }
        other => {
            return Err(Error::config(
                "suite",
                format!("unknown suite {other:?}; expected one of {}", SUITE_NAMES.join(", ")),
            ))
        }
    }
    Ok(cells)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    pub fn of(xs: impl Iterator<Item = f64> + Clone) -> Stat {
        let n = xs.clone().count();
        if n == 0 {
            return Stat::default();
        }
        let mean = xs.clone().sum::<f64>() / n as f64;
        let var = xs.map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        Stat { mean, std: var.sqrt() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub cell: SuiteCell,
    /// `None` when the cell ran; otherwise why it could not.
    pub infeasible: Option<String>,
    pub reports: Vec<EpisodeReport>,
    pub success_rate: Stat,
    pub collision_rate: Stat,
    pub final_distance: Stat,
    pub flight_distance: Stat,
    pub inference_ms: Stat,
}

/// Evaluate every cell for `episodes` episodes with seeds `seed, seed + 1, ...`.
///
/// Episodes of one cell run on separate threads. Cells whose configuration is
/// invalid or cannot be generated are reported, not raised.
pub fn run_suite(params: &PolicyParams, base: &RunConfig, cells: &[SuiteCell], episodes: usize, seed: u64) -> Result<Vec<CellResult>> {
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get()).min(episodes.max(1));
    let mut out = Vec::with_capacity(cells.len());
    for cell in cells {
        let config = cell.apply(base);
        if let Err(e) = config.validate() {
            out.push(infeasible(*cell, e)?);
            continue;
        }
        let mut slots: Vec<Option<Result<EpisodeReport>>> = (0..episodes).map(|_| None).collect();
        std::thread::scope(|s| {
            for (t, chunk) in slots.chunks_mut(episodes.div_ceil(threads).max(1)).enumerate() {
                let config = &config;
                s.spawn(move || {
                    let first = t * episodes.div_ceil(threads).max(1);
                    for (j, slot) in chunk.iter_mut().enumerate() {
                        let ep_seed = seed.wrapping_add((first + j) as u64);
                        *slot = Some(run_episode(params, config, ep_seed).map(|tr| score_episode(&tr, config.eval.success_radius)));
                    }
                });
            }
        });
        let mut reports = Vec::with_capacity(episodes);
        let mut failure = None;
        for r in slots.into_iter().flatten() {
            match r {
                Ok(rep) => reports.push(rep),
                Err(e) => {
                    failure = Some(e);
                    break;
                }
            }
        }
        if let Some(e) = failure {
            out.push(infeasible(*cell, e)?);
            continue;
        }
        let stat = |f: fn(&EpisodeReport) -> f64| Stat::of(reports.iter().map(f));
        out.push(CellResult {
            cell: *cell,
            infeasible: None,
            success_rate: stat(|r| r.success_rate),
            collision_rate: stat(|r| r.collision_rate),
            final_distance: stat(|r| r.mean_final_distance),
            flight_distance: stat(|r| r.mean_flight_distance),
            inference_ms: stat(|r| r.inference_ms),
            reports,
        });
    }
    Ok(out)
}

fn infeasible(cell: SuiteCell, e: Error) -> Result<CellResult> {
    match e {
        Error::Config { .. } | Error::Infeasible(_) => Ok(CellResult {
            cell,
            infeasible: Some(e.to_string()),
            reports: Vec::new(),
            success_rate: Stat::default(),
            collision_rate: Stat::default(),
            final_distance: Stat::default(),
            flight_distance: Stat::default(),
            inference_ms: Stat::default(),
        }),
        other => Err(other),
    }
}

pub const CSV_HEADER: &str = "n_robots,obstacle_density,obstacle_size,k_neighbors,status,episodes,\
success_mean,success_std,collision_mean,collision_std,distance_mean,distance_std,\
flight_mean,flight_std,inference_ms_mean,inference_ms_std";

/// One row per cell.
pub fn results_csv(results: &[CellResult]) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for r in results {
        let c = &r.cell;
        let status = match &r.infeasible {
            None => "ok".to_string(),
            Some(msg) => format!("\"infeasible: {}\"", msg.replace('"', "'")),
        };
        write!(
            s,
            "{},{},{},{},{},{}",
            c.n_robots,
            c.obstacle_density,
            c.obstacle_size,
            c.k_neighbors,
            status,
            r.reports.len()
        )
        .unwrap();
        for st in [r.success_rate, r.collision_rate, r.final_distance, r.flight_distance, r.inference_ms] {
            write!(s, ",{:.6},{:.6}", st.mean, st.std).unwrap();
        }
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::PolicyConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup() -> (PolicyParams, RunConfig) {
        let mut c = RunConfig::default();
        c.policy = PolicyConfig::deployment();
        c.world.episode_length = 150;
        let p = PolicyParams::init(&c.policy, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        (p, c)
    }

    #[test]
    fn every_suite_contains_base() {
        for name in SUITE_NAMES {
            assert!(named_suite(name).unwrap().contains(&SuiteCell::BASE), "{name}");
        }
        assert!(named_suite("nope").is_err());
    }

    #[test]
    fn one_cell_one_episode() {
        let (p, c) = setup();
        let r = run_suite(&p, &c, &[SuiteCell::BASE], 1, 0).unwrap();
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].reports.len(), 1);
        assert!(r[0].infeasible.is_none());
        let csv = results_csv(&r);
        assert_eq!(csv.lines().count(), 2);
    }

    #[test]
    fn infeasible_cell_is_reported() {
        let (p, c) = setup();
        let bad = SuiteCell {
            n_robots: 4,
            k_neighbors: 6,
            ..SuiteCell::BASE
        };
        let r = run_suite(&p, &c, &[bad, SuiteCell::BASE], 1, 0).unwrap();
        assert!(r[0].infeasible.as_deref().unwrap().contains("k_neighbors"));
        assert!(r[1].infeasible.is_none());
    }

    #[test]
    fn deterministic_given_seeds() {
        let (p, c) = setup();
        let a = run_suite(&p, &c, &[SuiteCell::BASE], 3, 11).unwrap();
        let b = run_suite(&p, &c, &[SuiteCell::BASE], 3, 11).unwrap();
        assert_eq!(a[0].success_rate, b[0].success_rate);
        assert_eq!(a[0].final_distance, b[0].final_distance);
        assert_eq!(a[0].flight_distance, b[0].flight_distance);
    }

    #[test]
    fn stat_of_values() {
        let s = Stat::of([1.0, 3.0].into_iter());
        assert_eq!((s.mean, s.std), (2.0, 1.0));
    }
}
