//! Batch experiments: Monte-Carlo basin estimate and controller comparison.
//!
//! Runs fan out over rayon; results are collected in input order so every
//! summary depends only on the inputs and the seed.

use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::excitation::{self, ExcitationError, PE_TOLERANCE};
use crate::log::SimLog;
use crate::sim::{simulate, InitialCondition, SimConfig, SimError};
use crate::trajectory::{DesiredTrajectory, TrajectorySpec};

/// Final Lyapunov value below which a run counts as converged.
pub const BASIN_THRESHOLD: f64 = 1e-6;
/// Half-width of the excluded band around `θ_E = ±π`.
pub const BASIN_EXCLUSION: f64 = 0.05;
/// Half-width of the sampled position-error box.
pub const BASIN_POSITION_RANGE: f64 = 5.0;
/// Error level used for the time-to-threshold columns.
pub const SETTLING_THRESHOLD: f64 = 1e-2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExperimentError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Excitation(#[from] ExcitationError),
    #[error("reference trajectory is not persistently exciting (epsilon = {0:e})")]
    NotExcited(f64),
    #[error("no configurations to compare")]
    Empty,
    #[error("configuration {index} differs from the first in {field}")]
    Mismatch { index: usize, field: &'static str },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BasinSample {
    pub theta_e: f64,
    pub p_e: [f64; 2],
    pub final_lyapunov: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasinSummary {
    pub seed: u64,
    pub t_end: f64,
    pub threshold: f64,
    pub samples: Vec<BasinSample>,
    pub converged: usize,
    /// `None` when no samples were drawn.
    pub fraction: Option<f64>,
}

/// Checks that the reference regressor is PE over `[0, horizon]`.
pub fn certify_reference(traj: &DesiredTrajectory, horizon: f64) -> Result<f64, ExperimentError> {
    let window = traj
        .period()
        .unwrap_or(horizon / excitation::DEFAULT_PERIODS)
        .min(horizon);
    let report = excitation::pe_epsilon(
        excitation::controller_regressor(traj),
        horizon,
        window,
        excitation::DEFAULT_WINDOWS,
        excitation::DEFAULT_NODES,
    )?;
    if report.certifies(PE_TOLERANCE) {
        Ok(report.epsilon)
    } else {
        Err(ExperimentError::NotExcited(report.epsilon))
    }
}

/// Draws the initial spatial errors for [`monte_carlo_basin`].
pub fn basin_initial_errors(samples: usize, seed: u64) -> Vec<InitialCondition> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let limit = std::f64::consts::PI - BASIN_EXCLUSION;
    (0..samples)
        .map(|_| {
            let theta = rng.random_range(-limit..=limit);
            let x = rng.random_range(-BASIN_POSITION_RANGE..=BASIN_POSITION_RANGE);
            let y = rng.random_range(-BASIN_POSITION_RANGE..=BASIN_POSITION_RANGE);
            InitialCondition::SpatialError { theta, p: [x, y] }
        })
        .collect()
}

/// Simulates `template` from `samples` random spatial errors and reports how
/// many end with `L < 1e-6`.
pub fn monte_carlo_basin(
    template: &SimConfig,
    samples: usize,
    seed: u64,
) -> Result<BasinSummary, ExperimentError> {
    let traj = template.validate()?;
    if samples > 0 {
        certify_reference(&traj, template.t_end)?;
    }
    let runs: Vec<Result<BasinSample, SimError>> = basin_initial_errors(samples, seed)
        .into_par_iter()
        .map(|initial| {
            let cfg = SimConfig {
                initial,
                seed,
                ..*template
            };
            let log = simulate(&cfg)?;
            let final_lyapunov = log.last().map_or(f64::NAN, |r| r.lyap);
            let InitialCondition::SpatialError { theta, p } = initial else {
                unreachable!("basin samples are spatial errors")
            };
            Ok(BasinSample {
                theta_e: theta,
                p_e: p,
                final_lyapunov,
                converged: final_lyapunov < BASIN_THRESHOLD,
            })
        })
        .collect();
    let samples = runs.into_iter().collect::<Result<Vec<_>, _>>()?;
    let converged = samples.iter().filter(|s| s.converged).count();
    let fraction = (!samples.is_empty()).then(|| converged as f64 / samples.len() as f64);
    Ok(BasinSummary {
        seed,
        t_end: template.t_end,
        threshold: BASIN_THRESHOLD,
        samples,
        converged,
        fraction,
    })
}

/// Earliest grid time after which `err` stays below `threshold`.
pub fn settling_time(
    log: &SimLog,
    threshold: f64,
    err: impl Fn(&crate::log::LogRow) -> f64,
) -> Option<f64> {
    let last_above = log
        .rows
        .iter()
        .rposition(|r| err(r) >= threshold || err(r).is_nan());
    match last_above {
        None => log.rows.first().map(|r| r.t),
        Some(i) => log.rows.get(i + 1).map(|r| r.t),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub label: String,
    pub controller: String,
    pub origin: [f64; 2],
    pub heading_settling: Option<f64>,
    pub position_settling: Option<f64>,
    pub final_heading_error: f64,
    pub final_position_error: f64,
    pub final_lyapunov: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonTable {
    pub threshold: f64,
    pub rows: Vec<ComparisonRow>,
    pub logs: Vec<SimLog>,
}

fn same_family(a: &TrajectorySpec, b: &TrajectorySpec) -> bool {
    a.with_origin([0.0, 0.0]) == b.with_origin([0.0, 0.0])
}

fn labels(cfgs: &[SimConfig]) -> Vec<String> {
    let base: Vec<String> = cfgs
        .iter()
        .map(|c| c.controller.name().to_string())
        .collect();
    let with_origin: Vec<String> = cfgs
        .iter()
        .zip(&base)
        .map(|(c, name)| {
            if base.iter().filter(|b| *b == name).count() > 1 {
                let [x, y] = c.trajectory.origin();
                format!("{name}@{x}:{y}")
            } else {
                name.clone()
            }
        })
        .collect();
    with_origin
        .iter()
        .enumerate()
        .map(|(i, l)| {
            if with_origin.iter().filter(|o| *o == l).count() > 1 {
                format!("{l}#{i}")
            } else {
                l.clone()
            }
        })
        .collect()
}

/// Runs each configuration and tabulates settling times and final errors.
///
/// All configurations must share the initial offset, step and horizon, and
/// use the same trajectory up to its origin.
pub fn compare_controllers(cfgs: &[SimConfig]) -> Result<ComparisonTable, ExperimentError> {
    let first = cfgs.first().ok_or(ExperimentError::Empty)?;
    for (index, c) in cfgs.iter().enumerate().skip(1) {
        let field = if !same_family(&c.trajectory, &first.trajectory) {
            Some("trajectory")
        } else if c.initial != first.initial {
            Some("initial")
        } else if c.dt != first.dt {
            Some("dt")
        } else if c.t_end != first.t_end {
            Some("t_end")
        } else {
            None
        };
        if let Some(field) = field {
            return Err(ExperimentError::Mismatch { index, field });
        }
    }
    let logs = cfgs
        .par_iter()
        .map(simulate)
        .collect::<Result<Vec<_>, _>>()?;
    let rows = cfgs
        .iter()
        .zip(&logs)
        .zip(labels(cfgs))
        .map(|((c, log), label)| {
            let last = log.last().expect("simulation logs at least one row");
            ComparisonRow {
                label,
                controller: c.controller.name().to_string(),
                origin: c.trajectory.origin(),
                heading_settling: settling_time(log, SETTLING_THRESHOLD, |r| r.heading_error()),
                position_settling: settling_time(log, SETTLING_THRESHOLD, |r| r.position_error()),
                final_heading_error: last.heading_error(),
                final_position_error: last.position_error(),
                final_lyapunov: last.lyap,
            }
        })
        .collect();
    Ok(ComparisonTable {
        threshold: SETTLING_THRESHOLD,
        rows,
        logs,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x}"))
}

impl ComparisonTable {
    pub fn write_summary_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(
            w,
            "label,controller,origin_x,origin_y,heading_settling,position_settling,final_heading_error,final_position_error,final_lyap"
        )?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{}",
                r.label,
                r.controller,
                r.origin[0],
                r.origin[1],
                opt(r.heading_settling),
                opt(r.position_settling),
                r.final_heading_error,
                r.final_position_error,
                r.final_lyapunov
            )?;
        }
        w.flush()
    }

    /// Long-format plot data: `panel,series,x,y`.
    ///
    /// Panel `a` holds planar paths (`desired` plus one per run), `b` the
    /// Lyapunov function, `c` heading error and `d` position error against
    /// time. Every `stride`-th row is kept, plus the last.
    pub fn write_panels_csv<W: Write>(&self, mut w: W, stride: usize) -> io::Result<()> {
        let stride = stride.max(1);
        writeln!(w, "panel,series,x,y")?;
        let keep = |log: &SimLog| {
            let n = log.len();
            (0..n).filter(move |&i| i % stride == 0 || i + 1 == n)
        };
        let mut desired_written = Vec::new();
        for (row, log) in self.rows.iter().zip(&self.logs) {
            if !desired_written.contains(&row.origin) {
                desired_written.push(row.origin);
                let series = if self.distinct_origins() > 1 {
                    format!("desired@{}:{}", row.origin[0], row.origin[1])
                } else {
                    "desired".to_string()
                };
                for i in keep(log) {
                    let r = &log.rows[i];
                    writeln!(w, "a,{series},{},{}", r.pxd, r.pyd)?;
                }
            }
            for i in keep(log) {
                let r = &log.rows[i];
                writeln!(w, "a,{},{},{}", row.label, r.px, r.py)?;
            }
        }
        for (panel, value) in [
            (
                "b",
                (|r: &crate::log::LogRow| r.lyap) as fn(&crate::log::LogRow) -> f64,
            ),
            ("c", |r| r.heading_error()),
            ("d", |r| r.position_error()),
        ] {
            for (row, log) in self.rows.iter().zip(&self.logs) {
                if panel == "b" && row.controller != "spatial" {
                    continue;
                }
                for i in keep(log) {
                    let r = &log.rows[i];
                    writeln!(w, "{panel},{},{},{}", row.label, r.t, value(r))?;
                }
            }
        }
        w.flush()
    }

    fn distinct_origins(&self) -> usize {
        let mut seen: Vec<[f64; 2]> = Vec::new();
        for r in &self.rows {
            if !seen.contains(&r.origin) {
                seen.push(r.origin);
            }
        }
        seen.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::ControllerSpec;
    use crate::trajectory::TrajectorySpec;

    fn short(controller: ControllerSpec, t_end: f64) -> SimConfig {
        SimConfig {
            t_end,
            dt: 1e-2,
            ..SimConfig::reference(controller)
        }
    }

    #[test]
    fn empty_basin() {
        let s = monte_carlo_basin(&short(ControllerSpec::spatial(), 1.0), 0, 7).unwrap();
        assert!(s.samples.is_empty());
        assert_eq!(s.fraction, None);
    }

    #[test]
    fn basin_samples_respect_ranges_and_seed() {
        let a = basin_initial_errors(500, 3);
        assert_eq!(a, basin_initial_errors(500, 3));
        assert_ne!(a, basin_initial_errors(500, 4));
        for ic in a {
            let InitialCondition::SpatialError { theta, p } = ic else {
                panic!()
            };
            assert!(theta.abs() <= std::f64::consts::PI - BASIN_EXCLUSION);
            assert!(p.iter().all(|c| c.abs() <= BASIN_POSITION_RANGE));
        }
    }

    #[test]
    fn basin_deterministic() {
        let cfg = short(ControllerSpec::spatial(), 10.0);
        let a = monte_carlo_basin(&cfg, 4, 11).unwrap();
        assert_eq!(a, monte_carlo_basin(&cfg, 4, 11).unwrap());
        assert_eq!(a.samples.len(), 4);
    }

    #[test]
    fn basin_requires_excitation() {
        let cfg = SimConfig {
            trajectory: TrajectorySpec::Line {
                speed: 0.0,
                heading: 0.0,
                start: [0.0, 0.0],
            },
            ..short(ControllerSpec::spatial(), 5.0)
        };
        assert!(matches!(
            monte_carlo_basin(&cfg, 2, 0),
            Err(ExperimentError::NotExcited(_))
        ));
    }

    #[test]
    fn settling() {
        let mut log = simulate(&short(ControllerSpec::Feedforward, 0.05)).unwrap();
        for (i, r) in log.rows.iter_mut().enumerate() {
            r.lyap = [1.0, 0.0, 1.0, 0.0, 0.0, 0.0][i];
        }
        assert_eq!(settling_time(&log, 0.5, |r| r.lyap), Some(log.rows[3].t));
        log.rows[5].lyap = 1.0;
        assert_eq!(settling_time(&log, 0.5, |r| r.lyap), None);
        for r in &mut log.rows {
            r.lyap = 0.0;
        }
        assert_eq!(settling_time(&log, 0.5, |r| r.lyap), Some(0.0));
    }

    #[test]
    fn single_config_one_row() {
        let t = compare_controllers(&[short(ControllerSpec::spatial(), 1.0)]).unwrap();
        assert_eq!(t.rows.len(), 1);
        assert_eq!(t.rows[0].label, "spatial");
    }

    #[test]
    fn compare_rejects_mismatch_and_empty() {
        assert_eq!(compare_controllers(&[]), Err(ExperimentError::Empty));
        let a = short(ControllerSpec::spatial(), 1.0);
        let mut b = short(ControllerSpec::kanayama(), 1.0);
        b.dt = 2e-2;
        assert_eq!(
            compare_controllers(&[a, b]),
            Err(ExperimentError::Mismatch {
                index: 1,
                field: "dt"
            })
        );
    }

    #[test]
    fn labels_disambiguate_origins() {
        let a = short(ControllerSpec::spatial(), 1.0);
        let b = SimConfig {
            trajectory: a.trajectory.with_origin([3.0, 3.0]),
            ..a
        };
        let k = short(ControllerSpec::kanayama(), 1.0);
        assert_eq!(
            labels(&[a, b, k]),
            ["spatial@0:0", "spatial@3:3", "kanayama"]
        );
        assert_eq!(labels(&[a, a]), ["spatial@0:0#0", "spatial@0:0#1"]);
    }

    #[test]
    fn panel_export_shape() {
        let t = compare_controllers(&[
            short(ControllerSpec::spatial(), 0.1),
            short(ControllerSpec::Feedforward, 0.1),
        ])
        .unwrap();
        let mut buf = Vec::new();
        t.write_panels_csv(&mut buf, 5).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "panel,series,x,y");
        // 11 rows, kept indices 0, 5, 10.
        let count = |p: &str| lines.iter().filter(|l| l.starts_with(p)).count();
        assert_eq!(count("a,"), 9);
        assert_eq!(count("b,"), 3);
        assert_eq!(count("c,"), 6);
        assert_eq!(count("d,"), 6);
    }
}
