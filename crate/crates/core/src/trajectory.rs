//! Reference trajectories `(X_d(t), u_d(t))` satisfying `Ẋ_d = X_d (B u_d)^∧`.

use std::f64::consts::TAU;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::se2::{normalize_angle, ControlPair, Pose};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrajectoryError {
    #[error("ellipse semi-axes must be finite and non-zero (a = {a}, b = {b})")]
    DegenerateEllipse { a: f64, b: f64 },
    #[error("angular frequency h must be finite and non-zero, got {0}")]
    ZeroFrequency(f64),
    #[error("trajectory parameter {0} is not finite")]
    NonFinite(&'static str),
}

/// Anything that yields a reference pose over time.
pub trait PosePath {
    fn pose_at(&self, t: f64) -> Pose;
}

/// Serializable description of a reference trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum TrajectorySpec {
    /// `p_d(t) = origin + (a cos ht, b sin ht)` with flatness-consistent heading and inputs.
    Ellipse {
        a: f64,
        b: f64,
        h: f64,
        #[serde(default)]
        origin: [f64; 2],
    },
    /// Straight line at constant speed and heading.
    Line {
        speed: f64,
        heading: f64,
        #[serde(default)]
        start: [f64; 2],
    },
}

impl TrajectorySpec {
    /// The reference ellipse centred at the origin: a = 3, b = 5, h = 2π/5.
    pub fn centered_ellipse() -> Self {
        TrajectorySpec::Ellipse {
            a: 3.0,
            b: 5.0,
            h: TAU / 5.0,
            origin: [0.0, 0.0],
        }
    }

    /// Same family and shape with the origin (or line start) moved.
    pub fn with_origin(self, o: [f64; 2]) -> Self {
        match self {
            TrajectorySpec::Ellipse { a, b, h, .. } => {
                TrajectorySpec::Ellipse { a, b, h, origin: o }
            }
            TrajectorySpec::Line { speed, heading, .. } => TrajectorySpec::Line {
                speed,
                heading,
                start: o,
            },
        }
    }

    pub fn origin(&self) -> [f64; 2] {
        match *self {
            TrajectorySpec::Ellipse { origin, .. } => origin,
            TrajectorySpec::Line { start, .. } => start,
        }
    }

    pub fn build(&self) -> Result<DesiredTrajectory, TrajectoryError> {
        match *self {
            TrajectorySpec::Ellipse { a, b, h, origin } => ellipse_trajectory(a, b, h, origin),
            TrajectorySpec::Line {
                speed,
                heading,
                start,
            } => line_trajectory(speed, heading, start),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Shape {
    Ellipse {
        a: f64,
        b: f64,
        h: f64,
        origin: Vector2<f64>,
    },
    Line {
        speed: f64,
        heading: f64,
        start: Vector2<f64>,
    },
}

/// A kinematically consistent reference for the unicycle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DesiredTrajectory {
    spec: TrajectorySpec,
    shape: Shape,
}

pub fn ellipse_trajectory(
    a: f64,
    b: f64,
    h: f64,
    origin: [f64; 2],
) -> Result<DesiredTrajectory, TrajectoryError> {
    if !(a.is_finite() && b.is_finite()) || a == 0.0 || b == 0.0 {
        return Err(TrajectoryError::DegenerateEllipse { a, b });
    }
    if !h.is_finite() || h == 0.0 {
        return Err(TrajectoryError::ZeroFrequency(h));
    }
    if !origin.iter().all(|c| c.is_finite()) {
        return Err(TrajectoryError::NonFinite("origin"));
    }
    Ok(DesiredTrajectory {
        spec: TrajectorySpec::Ellipse { a, b, h, origin },
        shape: Shape::Ellipse {
            a,
            b,
            h,
            origin: Vector2::from(origin),
        },
    })
}

pub fn line_trajectory(
    speed: f64,
    heading: f64,
    start: [f64; 2],
) -> Result<DesiredTrajectory, TrajectoryError> {
    if !speed.is_finite() {
        return Err(TrajectoryError::NonFinite("speed"));
    }
    if !heading.is_finite() {
        return Err(TrajectoryError::NonFinite("heading"));
    }
    if !start.iter().all(|c| c.is_finite()) {
        return Err(TrajectoryError::NonFinite("start"));
    }
    Ok(DesiredTrajectory {
        spec: TrajectorySpec::Line {
            speed,
            heading,
            start,
        },
        shape: Shape::Line {
            speed,
            heading,
            start: Vector2::from(start),
        },
    })
}

impl DesiredTrajectory {
    pub fn spec(&self) -> &TrajectorySpec {
        &self.spec
    }

    /// Period in seconds, if the reference is periodic.
    pub fn period(&self) -> Option<f64> {
        match self.shape {
            Shape::Ellipse { h, .. } => Some(TAU / h.abs()),
            Shape::Line { .. } => None,
        }
    }

    /// `(p_d, ṗ_d, p̈_d)` of the position path.
    fn position_derivatives(&self, t: f64) -> (Vector2<f64>, Vector2<f64>, Vector2<f64>) {
        match self.shape {
            Shape::Ellipse { a, b, h, origin } => {
                let (s, c) = (h * t).sin_cos();
                (
                    origin + Vector2::new(a * c, b * s),
                    Vector2::new(-a * h * s, b * h * c),
                    Vector2::new(-a * h * h * c, -b * h * h * s),
                )
            }
            Shape::Line {
                speed,
                heading,
                start,
            } => {
                let d = Vector2::new(heading.cos(), heading.sin());
                (start + d * (speed * t), d * speed, Vector2::zeros())
            }
        }
    }

    pub fn pose_at(&self, t: f64) -> Pose {
        match self.shape {
            Shape::Ellipse { .. } => {
                let (p, dp, _) = self.position_derivatives(t);
                Pose::new(dp[1].atan2(dp[0]), p)
            }
            Shape::Line { heading, .. } => {
                let (p, _, _) = self.position_derivatives(t);
                Pose::new(heading, p)
            }
        }
    }

    /// `u_d = (Ω_d, v_d)` with `v_d = ‖ṗ_d‖` and `Ω_d = (ṗ_d × p̈_d) / ‖ṗ_d‖²`.
    pub fn input_at(&self, t: f64) -> ControlPair {
        match self.shape {
            Shape::Ellipse { .. } => {
                let (_, dp, ddp) = self.position_derivatives(t);
                let speed2 = dp.norm_squared();
                let cross = dp[0] * ddp[1] - dp[1] * ddp[0];
                ControlPair::new(cross / speed2, speed2.sqrt())
            }
            Shape::Line { speed, .. } => ControlPair::new(0.0, speed),
        }
    }

    /// Largest deviation between a central difference of `pose_at` and `X_d (B u_d)^∧`
    /// over `samples` times spread across `[0, horizon]`.
    pub fn consistency_residual(&self, horizon: f64, samples: usize, step: f64) -> f64 {
        let mut worst: f64 = 0.0;
        for k in 0..samples {
            let t = step + horizon * k as f64 / samples.max(1) as f64;
            let fwd = self.pose_at(t + step);
            let bwd = self.pose_at(t - step);
            let dtheta = normalize_angle(fwd.theta() - bwd.theta()) / (2.0 * step);
            let dp = (fwd.p - bwd.p) / (2.0 * step);
            let pose = self.pose_at(t);
            let u = self.input_at(t);
            let expected = Vector2::new(pose.theta().cos(), pose.theta().sin()) * u.v;
            worst = worst
                .max((dtheta - u.omega).abs())
                .max((dp - expected).abs().max());
        }
        worst
    }
}

impl PosePath for DesiredTrajectory {
    fn pose_at(&self, t: f64) -> Pose {
        DesiredTrajectory::pose_at(self, t)
    }
}

/// Ellipse with heading `θ_d = ht`, the convention under which the closed-form
/// excitation Gram is stated. Not a unicycle-consistent reference unless `a = b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeadingLockedEllipse {
    pub a: f64,
    pub b: f64,
    pub h: f64,
    pub origin: Vector2<f64>,
}

impl HeadingLockedEllipse {
    pub fn new(a: f64, b: f64, h: f64) -> Result<Self, TrajectoryError> {
        if !(a.is_finite() && b.is_finite()) || a == 0.0 || b == 0.0 {
            return Err(TrajectoryError::DegenerateEllipse { a, b });
        }
        if !h.is_finite() || h == 0.0 {
            return Err(TrajectoryError::ZeroFrequency(h));
        }
        Ok(Self {
            a,
            b,
            h,
            origin: Vector2::zeros(),
        })
    }

    pub fn period(&self) -> f64 {
        TAU / self.h.abs()
    }
}

impl PosePath for HeadingLockedEllipse {
    fn pose_at(&self, t: f64) -> Pose {
        let (s, c) = (self.h * t).sin_cos();
        Pose::new(
            self.h * t,
            self.origin + Vector2::new(self.a * c, self.b * s),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn unit_circle_inputs() {
        let traj = ellipse_trajectory(1.0, 1.0, 1.0, [0.0, 0.0]).unwrap();
        for k in 0..50 {
            let t = 0.37 * k as f64;
            let u = traj.input_at(t);
            assert_relative_eq!(u.v, 1.0, epsilon = 1e-12);
            assert_relative_eq!(u.omega, 1.0, epsilon = 1e-12);
            // θ_d = ht + π/2 on a circle
            let expect = normalize_angle(t + FRAC_PI_2);
            assert!(normalize_angle(traj.pose_at(t).theta() - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn centered_ellipse_speed_and_period() {
        let traj = TrajectorySpec::centered_ellipse().build().unwrap();
        assert_relative_eq!(traj.input_at(0.0).v, TAU, epsilon = 1e-12);
        assert_relative_eq!(traj.period().unwrap(), 5.0, epsilon = 1e-12);
        let p0 = traj.pose_at(0.3);
        let p1 = traj.pose_at(5.3);
        assert!(p0.angle_distance(&p1) < 1e-12);
        assert!((p0.p - p1.p).norm() < 1e-12);
    }

    #[test]
    fn ellipse_is_consistent() {
        for spec in [
            TrajectorySpec::centered_ellipse(),
            TrajectorySpec::centered_ellipse().with_origin([3.0, 3.0]),
            TrajectorySpec::Ellipse {
                a: 2.0,
                b: 1.0,
                h: -3.0,
                origin: [0.5, -1.0],
            },
        ] {
            let traj = spec.build().unwrap();
            assert!(traj.consistency_residual(20.0, 100, 1e-5) < 1e-6);
        }
    }

    #[test]
    fn line_examples() {
        let still = line_trajectory(0.0, 0.7, [1.0, 2.0]).unwrap();
        assert_eq!(still.pose_at(0.0), still.pose_at(12.0));
        assert_eq!(still.input_at(3.0), ControlPair::ZERO);

        let line = line_trajectory(1.0, 0.0, [1.0, -1.0]).unwrap();
        let pose = line.pose_at(2.5);
        assert_eq!(pose.p, Vector2::new(3.5, -1.0));
        assert_eq!(pose.theta(), 0.0);
        assert!(line.period().is_none());
        let slanted = line_trajectory(2.0, 2.5, [0.0, 0.0]).unwrap();
        assert!(slanted.consistency_residual(10.0, 100, 1e-5) <= 1e-9);
    }

    #[test]
    fn rejects_degenerate_parameters() {
        assert!(matches!(
            ellipse_trajectory(0.0, 1.0, 1.0, [0.0, 0.0]),
            Err(TrajectoryError::DegenerateEllipse { .. })
        ));
        assert!(ellipse_trajectory(1.0, 0.0, 1.0, [0.0, 0.0]).is_err());
        assert!(matches!(
            ellipse_trajectory(1.0, 1.0, 0.0, [0.0, 0.0]),
            Err(TrajectoryError::ZeroFrequency(_))
        ));
        assert!(line_trajectory(f64::NAN, 0.0, [0.0, 0.0]).is_err());
        assert!(HeadingLockedEllipse::new(1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn spec_json_shape() {
        let json = serde_json::to_string(&TrajectorySpec::centered_ellipse()).unwrap();
        assert!(json.contains("\"family\":\"ellipse\""));
        let back: TrajectorySpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back, TrajectorySpec::centered_ellipse());
    }
}
