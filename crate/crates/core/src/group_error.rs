//! Body-fixed and spatial group errors, their dynamics and the Lyapunov value.
//!
//! The error kind is a type parameter, so a controller written for the spatial
//! error cannot be handed a body-fixed one by accident.

use std::fmt;
use std::marker::PhantomData;

use nalgebra::{Matrix3, Vector2};

use crate::se2::{wedge, ControlPair, Pose};

/// Runtime tag for the two error formulations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    BodyFixed,
    Spatial,
}

pub trait Kind: Copy + fmt::Debug {
    const KIND: ErrorKind;
}

/// Left-invariant error `X_d⁻¹ X`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BodyFixed;

/// Right-invariant error `X X_d⁻¹`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Spatial;

impl Kind for BodyFixed {
    const KIND: ErrorKind = ErrorKind::BodyFixed;
}

impl Kind for Spatial {
    const KIND: ErrorKind = ErrorKind::Spatial;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupError<K: Kind> {
    pose: Pose,
    _kind: PhantomData<K>,
}

pub type SpatialError = GroupError<Spatial>;
pub type BodyError = GroupError<BodyFixed>;

impl<K: Kind> GroupError<K> {
    /// Wraps an error element directly, e.g. to start a simulation at a chosen error.
    pub fn from_pose(pose: Pose) -> Self {
        Self {
            pose,
            _kind: PhantomData,
        }
    }

    pub fn pose(&self) -> &Pose {
        &self.pose
    }

    pub fn kind(&self) -> ErrorKind {
        K::KIND
    }

    pub fn theta(&self) -> f64 {
        self.pose.theta()
    }

    pub fn p(&self) -> Vector2<f64> {
        self.pose.p
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        self.pose.to_matrix()
    }

    pub fn is_identity(&self, tol: f64) -> bool {
        self.pose.theta().abs() <= tol && self.pose.p.norm() <= tol
    }
}

/// `E_L = X_d⁻¹ X`: rotation `R_dᵀR`, translation `R_dᵀ(p − p_d)`.
pub fn left_error(xd: &Pose, x: &Pose) -> BodyError {
    GroupError::from_pose(xd.inverse().compose(x))
}

/// `E_R = X X_d⁻¹`: rotation `R R_dᵀ`, translation `p − R R_dᵀ p_d`.
pub fn right_error(x: &Pose, xd: &Pose) -> SpatialError {
    GroupError::from_pose(x.compose(&xd.inverse()))
}

/// `Ė_R = E_R · (Ad_{X_d} B ũ)^∧`. Vanishes under pure feedforward.
pub fn right_error_rate(e: &SpatialError, xd: &Pose, u_tilde: &ControlPair) -> Matrix3<f64> {
    let xi = xd.adjoint_matrix() * u_tilde.embed();
    e.matrix() * wedge(&xi)
}

/// `Ė_L = −U_d E_L + E_L U`.
pub fn left_error_rate(e: &BodyError, u: &ControlPair, u_d: &ControlPair) -> Matrix3<f64> {
    let m = e.matrix();
    -wedge(&u_d.embed()) * m + m * wedge(&u.embed())
}

/// `L(E) = 2(1 − cos θ_E) + ½‖p_E‖²`, equal to `½<E − I, E − I>_F`.
pub fn lyapunov(e: &SpatialError) -> f64 {
    2.0 * (1.0 - e.theta().cos()) + 0.5 * e.p().norm_squared()
}

/// Matrix route of [`lyapunov`], kept for cross-checking.
pub fn lyapunov_frobenius(e: &SpatialError) -> f64 {
    let d = e.matrix() - Matrix3::identity();
    0.5 * (d.transpose() * d).trace()
}

/// `(‖R − R_d‖_F, ‖p − p_d‖)`.
pub fn tracking_distance(x: &Pose, xd: &Pose) -> (f64, f64) {
    ((x.rotation() - xd.rotation()).norm(), (x.p - xd.p).norm())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

    fn pose_close(a: &Pose, b: &Pose, tol: f64) -> bool {
        a.angle_distance(b) <= tol && (a.p - b.p).norm() <= tol
    }

    #[test]
    fn errors_vanish_on_coincidence() {
        let x = Pose::from_parts(1.1, -3.0, 0.5);
        assert!(left_error(&x, &x).is_identity(1e-12));
        assert!(right_error(&x, &x).is_identity(1e-12));
        assert_eq!(left_error(&x, &x).kind(), ErrorKind::BodyFixed);
        assert_eq!(right_error(&x, &x).kind(), ErrorKind::Spatial);
    }

    #[test]
    fn right_error_with_identity_reference() {
        let x = Pose::from_parts(0.4, 2.0, -1.0);
        assert!(pose_close(
            right_error(&x, &Pose::identity()).pose(),
            &x,
            1e-15
        ));
    }

    #[test]
    fn left_error_t0_example() {
        // Reference rotated by 45° and translated (-2, 0) in its own frame.
        let xd = Pose::from_parts(0.8, 4.0, -1.0);
        let e = Pose::from_parts(FRAC_PI_4, -2.0, 0.0);
        let x = xd.compose(&e);
        let el = left_error(&xd, &x);
        let m = el.matrix();
        assert!((m[(0, 0)] - 0.717).abs() < 0.01);
        assert!((m[(0, 1)] + 0.717).abs() < 0.01);
        assert_relative_eq!(m[(0, 2)], -2.0, epsilon = 1e-12);
        assert_relative_eq!(m[(1, 2)], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn left_error_extracts_right_factor() {
        let xd = Pose::from_parts(FRAC_PI_2, 1.0, 2.0);
        let e = Pose::from_parts(FRAC_PI_4, -2.0, 0.0);
        let x = xd.compose(&e);
        assert!(pose_close(left_error(&xd, &x).pose(), &e, 1e-12));
        // component form
        let rd = xd.rotation();
        let el = left_error(&xd, &x);
        assert!((el.p() - rd.transpose() * (x.p - xd.p)).norm() < 1e-12);
    }

    #[test]
    fn right_error_extracts_left_factor() {
        let xd = Pose::from_parts(FRAC_PI_2, 1.0, 2.0);
        let e = Pose::from_parts(FRAC_PI_4, 1.0, -1.0);
        let x = e.compose(&xd);
        let er = right_error(&x, &xd);
        assert!(pose_close(er.pose(), &e, 1e-12));
        let rrt = x.rotation() * xd.rotation().transpose();
        assert!((er.p() - (x.p - rrt * xd.p)).norm() < 1e-12);
    }

    #[test]
    fn right_error_rate_examples() {
        let e = right_error(&Pose::from_parts(1.0, 2.0, 3.0), &Pose::identity());
        let xd = Pose::from_parts(-0.5, 1.0, 1.0);
        assert_eq!(
            right_error_rate(&e, &xd, &ControlPair::ZERO),
            Matrix3::zeros()
        );

        let id = GroupError::<Spatial>::from_pose(Pose::identity());
        let rate = right_error_rate(&id, &Pose::identity(), &ControlPair::new(1.0, 0.0));
        assert_eq!(rate, wedge(&nalgebra::Vector3::new(1.0, 0.0, 0.0)));
    }

    #[test]
    fn left_error_rate_examples() {
        let u = ControlPair::new(1.0, 0.0);
        let id = GroupError::<BodyFixed>::from_pose(Pose::identity());
        assert_eq!(left_error_rate(&id, &u, &u), Matrix3::zeros());

        // Drift under feedforward: [E, U_d] ≠ 0 for a translated, rotated error.
        let e = GroupError::<BodyFixed>::from_pose(Pose::from_parts(FRAC_PI_4, -2.0, 0.0));
        let rate = left_error_rate(&e, &u, &u);
        // Oracle: explicit E·U − U·E.
        let m = e.matrix();
        let w = wedge(&u.embed());
        assert!((rate - (m * w - w * m)).abs().max() < 1e-15);
        // translation column of −U E is −1^× p_E = (0, 2)
        assert_relative_eq!(rate[(1, 2)], 2.0, epsilon = 1e-12);
        assert!(rate.abs().max() > 1.0);
    }

    #[test]
    fn lyapunov_examples() {
        let id = GroupError::<Spatial>::from_pose(Pose::identity());
        assert_eq!(lyapunov(&id), 0.0);
        let half = GroupError::<Spatial>::from_pose(Pose::from_parts(PI, 0.0, 0.0));
        assert_relative_eq!(lyapunov(&half), 4.0);
        let shifted = GroupError::<Spatial>::from_pose(Pose::from_parts(0.0, 3.0, -2.0));
        assert_relative_eq!(lyapunov(&shifted), 6.5);
        assert_relative_eq!(lyapunov_frobenius(&shifted), 6.5, epsilon = 1e-12);
        assert_relative_eq!(lyapunov_frobenius(&half), 4.0, epsilon = 1e-12);
    }

    #[test]
    fn tracking_distance_examples() {
        let xd = Pose::from_parts(0.3, 1.0, 1.0);
        assert_eq!(tracking_distance(&xd, &xd), (0.0, 0.0));
        let x = Pose::from_parts(0.3, 2.0, 1.0);
        let (r, p) = tracking_distance(&x, &xd);
        assert_eq!(r, 0.0);
        assert_relative_eq!(p, 1.0);
        let x = Pose::from_parts(0.3 + FRAC_PI_2, 1.0, 1.0);
        let (r, p) = tracking_distance(&x, &xd);
        assert_relative_eq!(r, 2.0, epsilon = 1e-12);
        assert_eq!(p, 0.0);
    }
}
