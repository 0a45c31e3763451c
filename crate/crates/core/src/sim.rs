//! Closed-loop unicycle simulation.
//!
//! The state `(θ, p)` is integrated with fixed-step RK4 under the unicycle
//! kinematics. The control law is re-evaluated at every RK4 stage against the
//! reference at the stage time, and `θ` is wrapped after each step.

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controller::{correction, kanayama_control, GainError, Gains, KanayamaGains};
use crate::group_error::{left_error, lyapunov, right_error, SpatialError};
use crate::integrate::rk4_step;
use crate::log::{LogRow, SimLog};
use crate::se2::{normalize_angle, ControlPair, Pose};
use crate::trajectory::{DesiredTrajectory, TrajectoryError, TrajectorySpec};

pub const DEFAULT_DT: f64 = 1e-3;
pub const DEFAULT_T_END: f64 = 40.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("time step must be finite and positive, got {0}")]
    BadStep(f64),
    #[error("t_end = {t_end} must be finite and at least dt = {dt}")]
    BadHorizon { t_end: f64, dt: f64 },
    #[error("initial condition is not finite")]
    BadInitial,
    #[error(transparent)]
    Gains(#[from] GainError),
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
    #[error("state became non-finite at step {step} (t = {t})")]
    NonFinite { step: usize, t: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ControllerSpec {
    /// Gradient law on the spatial error.
    Spatial {
        #[serde(default)]
        gains: Gains,
    },
    /// Kanayama's law on the body-fixed error.
    Kanayama {
        #[serde(default)]
        gains: KanayamaGains,
    },
    /// `u = u_d`.
    Feedforward,
}

impl ControllerSpec {
    pub fn spatial() -> Self {
        ControllerSpec::Spatial {
            gains: Gains::default(),
        }
    }

    pub fn kanayama() -> Self {
        ControllerSpec::Kanayama {
            gains: KanayamaGains::default(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ControllerSpec::Spatial { .. } => "spatial",
            ControllerSpec::Kanayama { .. } => "kanayama",
            ControllerSpec::Feedforward => "feedforward",
        }
    }

    fn validate(&self) -> Result<(), GainError> {
        match *self {
            ControllerSpec::Spatial { gains } => Gains::new(gains.k_omega, gains.k_v).map(|_| ()),
            ControllerSpec::Kanayama { gains } => {
                KanayamaGains::new(gains.k_x, gains.k_y, gains.k_theta).map(|_| ())
            }
            ControllerSpec::Feedforward => Ok(()),
        }
    }

    /// Applied input for state `x` against reference `(xd, u_d)`.
    pub fn control(&self, x: &Pose, xd: &Pose, u_d: &ControlPair) -> ControlPair {
        match self {
            ControllerSpec::Spatial { gains } => {
                let du = correction(&right_error(x, xd), xd);
                ControlPair::new(
                    u_d.omega + gains.k_omega * du.omega,
                    u_d.v + gains.k_v * du.v,
                )
            }
            ControllerSpec::Kanayama { gains } => kanayama_control(&left_error(xd, x), u_d, gains),
            ControllerSpec::Feedforward => *u_d,
        }
    }
}

/// How the initial robot pose is placed relative to `X_d(0)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum InitialCondition {
    /// `p(0) = p_d(0) + dp`, `θ(0) = θ_d(0) + dtheta`.
    Offset { dp: [f64; 2], dtheta: f64 },
    /// `X(0) = E · X_d(0)` for the given spatial error `E = (theta, p)`.
    SpatialError { theta: f64, p: [f64; 2] },
}

impl InitialCondition {
    /// The perturbation used in the reference experiments: `(3, −2)` and a quarter turn.
    pub fn reference_offset() -> Self {
        InitialCondition::Offset {
            dp: [3.0, -2.0],
            dtheta: std::f64::consts::FRAC_PI_2,
        }
    }

    pub fn pose(&self, xd0: &Pose) -> Pose {
        match *self {
            InitialCondition::Offset { dp, dtheta } => {
                Pose::new(xd0.theta() + dtheta, xd0.p + Vector2::from(dp))
            }
            InitialCondition::SpatialError { theta, p } => {
                Pose::new(theta, Vector2::from(p)).compose(xd0)
            }
        }
    }

    fn is_finite(&self) -> bool {
        match *self {
            InitialCondition::Offset { dp, dtheta } => {
                dtheta.is_finite() && dp.iter().all(|c| c.is_finite())
            }
            InitialCondition::SpatialError { theta, p } => {
                theta.is_finite() && p.iter().all(|c| c.is_finite())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub trajectory: TrajectorySpec,
    pub controller: ControllerSpec,
    pub initial: InitialCondition,
    pub dt: f64,
    pub t_end: f64,
    #[serde(default)]
    pub seed: u64,
}

impl SimConfig {
    /// Centered ellipse, reference offset, default step and horizon.
    pub fn reference(controller: ControllerSpec) -> Self {
        Self {
            trajectory: TrajectorySpec::centered_ellipse(),
            controller,
            initial: InitialCondition::reference_offset(),
            dt: DEFAULT_DT,
            t_end: DEFAULT_T_END,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<DesiredTrajectory, SimError> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(SimError::BadStep(self.dt));
        }
        if !(self.t_end.is_finite() && self.t_end >= self.dt) {
            return Err(SimError::BadHorizon {
                t_end: self.t_end,
                dt: self.dt,
            });
        }
        if !self.initial.is_finite() {
            return Err(SimError::BadInitial);
        }
        self.controller.validate()?;
        Ok(self.trajectory.build()?)
    }

    /// Number of integration steps; the log has one more row.
    pub fn steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }
}

fn pack(x: &Pose) -> Vector3<f64> {
    Vector3::new(x.theta(), x.p[0], x.p[1])
}

fn unpack(s: &Vector3<f64>) -> Pose {
    Pose::new(s[0], Vector2::new(s[1], s[2]))
}

fn record(t: f64, x: &Pose, xd: &Pose, u: &ControlPair, u_d: &ControlPair) -> LogRow {
    let el = left_error(xd, x);
    let er = right_error(x, xd);
    LogRow {
        t,
        theta: x.theta(),
        px: x.p[0],
        py: x.p[1],
        theta_d: xd.theta(),
        pxd: xd.p[0],
        pyd: xd.p[1],
        el_theta: el.theta(),
        el_px: el.p()[0],
        el_py: el.p()[1],
        er_theta: er.theta(),
        er_px: er.p()[0],
        er_py: er.p()[1],
        lyap: lyapunov(&er),
        omega: u.omega,
        v: u.v,
        omega_tilde: u.omega - u_d.omega,
        v_tilde: u.v - u_d.v,
    }
}

/// Runs one closed-loop simulation and logs every grid point.
pub fn simulate(cfg: &SimConfig) -> Result<SimLog, SimError> {
    let traj = cfg.validate()?;
    let ctrl = cfg.controller;
    let steps = cfg.steps();
    let dt = cfg.dt;

    let mut rows = Vec::with_capacity(steps + 1);
    let mut x = cfg.initial.pose(&traj.pose_at(0.0));

    let dynamics = |t: f64, s: &Vector3<f64>| {
        let xd = traj.pose_at(t);
        let u = ctrl.control(&unpack(s), &xd, &traj.input_at(t));
        let (sin, cos) = s[0].sin_cos();
        Vector3::new(u.omega, u.v * cos, u.v * sin)
    };

    for k in 0..=steps {
        let t = k as f64 * dt;
        let xd = traj.pose_at(t);
        let u_d = traj.input_at(t);
        let u = ctrl.control(&x, &xd, &u_d);
        if !u.is_finite() {
            return Err(SimError::NonFinite { step: k, t });
        }
        rows.push(record(t, &x, &xd, &u, &u_d));
        if k == steps {
            break;
        }
        let next = rk4_step(&dynamics, t, &pack(&x), dt);
        if !next.iter().all(|c| c.is_finite()) {
            return Err(SimError::NonFinite {
                step: k + 1,
                t: t + dt,
            });
        }
        x = unpack(&next);
        debug_assert!(x.theta() == normalize_angle(x.theta()));
    }
    Ok(SimLog { rows })
}

/// Spatial error at every logged row.
pub fn spatial_errors(log: &SimLog) -> Vec<SpatialError> {
    log.rows.iter().map(|r| r.spatial_error()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controller::lyapunov_rate;
    use std::f64::consts::PI;

    fn short(controller: ControllerSpec, t_end: f64, dt: f64) -> SimConfig {
        SimConfig {
            t_end,
            dt,
            ..SimConfig::reference(controller)
        }
    }

    #[test]
    fn row_count_and_grid() {
        let log = simulate(&short(ControllerSpec::Feedforward, 1.0, 0.01)).unwrap();
        assert_eq!(log.len(), 101);
        assert_eq!(log.rows[0].t, 0.0);
        assert!((log.last().unwrap().t - 1.0).abs() < 1e-12);
    }

    #[test]
    fn initial_offset_is_applied() {
        let cfg = short(ControllerSpec::Feedforward, 0.01, 0.01);
        let log = simulate(&cfg).unwrap();
        let r = &log.rows[0];
        assert!((r.px - r.pxd - 3.0).abs() < 1e-12);
        assert!((r.py - r.pyd + 2.0).abs() < 1e-12);
        assert!((normalize_angle(r.theta - r.theta_d) - PI / 2.0).abs() < 1e-12);
    }

    #[test]
    fn logged_lyapunov_matches_state() {
        let log = simulate(&short(ControllerSpec::spatial(), 2.0, 1e-3)).unwrap();
        for r in &log.rows {
            let recomputed = lyapunov(&right_error(&r.pose(), &r.desired()));
            assert!((recomputed - r.lyap).abs() <= 1e-12);
        }
    }

    #[test]
    fn rejects_invalid_config() {
        let mut cfg = short(ControllerSpec::spatial(), 1.0, 0.0);
        assert!(matches!(simulate(&cfg), Err(SimError::BadStep(_))));
        cfg.dt = 0.1;
        cfg.t_end = 0.01;
        assert!(matches!(simulate(&cfg), Err(SimError::BadHorizon { .. })));
        cfg.t_end = 1.0;
        cfg.controller = ControllerSpec::Spatial {
            gains: Gains {
                k_omega: -1.0,
                k_v: 1.0,
            },
        };
        assert!(matches!(simulate(&cfg), Err(SimError::Gains(_))));
        cfg.controller = ControllerSpec::Kanayama {
            gains: KanayamaGains {
                k_x: 0.0,
                k_y: 1.0,
                k_theta: 1.0,
            },
        };
        assert!(simulate(&cfg).is_err());
    }

    #[test]
    fn non_finite_state_reports_step() {
        let cfg = SimConfig {
            controller: ControllerSpec::Spatial {
                gains: Gains {
                    k_omega: 1e300,
                    k_v: 1e300,
                },
            },
            ..short(ControllerSpec::spatial(), 1.0, 0.01)
        };
        match simulate(&cfg) {
            Err(SimError::NonFinite { step, .. }) => assert!(step <= 2),
            other => panic!("expected non-finite failure, got {other:?}"),
        }
    }

    #[test]
    fn deterministic() {
        let cfg = short(ControllerSpec::spatial(), 3.0, 1e-3);
        assert_eq!(simulate(&cfg).unwrap(), simulate(&cfg).unwrap());
    }

    #[test]
    fn descent_on_short_run() {
        let cfg = short(ControllerSpec::spatial(), 5.0, 1e-3);
        let log = simulate(&cfg).unwrap();
        for w in log.rows.windows(2) {
            assert!(w[1].lyap <= w[0].lyap + 1e-8);
        }
        let r = &log.rows[100];
        assert!(lyapunov_rate(&r.spatial_error(), &r.desired()) < 0.0);
    }

    #[test]
    fn config_json_round_trip() {
        let cfg = SimConfig::reference(ControllerSpec::kanayama());
        let text = serde_json::to_string(&cfg).unwrap();
        assert!(text.contains("\"kind\":\"kanayama\""));
        let back: SimConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cfg);
    }
}
