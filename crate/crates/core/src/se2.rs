//! SE(2) group, se(2) algebra and the weighted operators used by the controller.
//!
//! Group elements are stored as a heading angle plus a planar position. The
//! 3×3 homogeneous matrices are produced on demand, so SO(2) closure is exact
//! and no re-orthogonalization is ever needed.
//!
//! Algebra coordinates are ordered `(Ω, vx, vy)`:
//!
//! ```text
//! (Ω, vx, vy)^∧ = | 0  -Ω  vx |
//!                 | Ω   0  vy |
//!                 | 0   0   0 |
//! ```

use std::f64::consts::{PI, TAU};
use std::ops::{Add, Sub};

use nalgebra::{Matrix2, Matrix3, Matrix3x2, Vector2, Vector3};
use thiserror::Error;

/// Tolerance for structural checks (matrix patterns, membership tests).
pub const STRUCTURE_TOL: f64 = 1e-9;

/// Weight matrix `S = diag(2, 1, 1)` such that `<x^∧, y^∧>_F = <Sx, y>`.
pub fn weight_s() -> Matrix3<f64> {
    Matrix3::from_diagonal(&Vector3::new(2.0, 1.0, 1.0))
}

/// Input matrix `B` embedding `(Ω, v)` into the algebra as `(Ω, v, 0)`.
pub fn input_b() -> Matrix3x2<f64> {
    Matrix3x2::new(1.0, 0.0, 0.0, 1.0, 0.0, 0.0)
}

/// `1^×`, the generator of so(2).
pub fn one_cross() -> Matrix2<f64> {
    Matrix2::new(0.0, -1.0, 1.0, 0.0)
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Se2Error {
    #[error("matrix is not in se(2): {0}")]
    NotInAlgebra(String),
    #[error("matrix is not in SE(2): {0}")]
    NotInGroup(String),
    #[error("logarithm has no unique principal value at heading ±π")]
    AmbiguousLog,
}

/// Wraps an angle into `[-π, π)`.
pub fn normalize_angle(theta: f64) -> f64 {
    if (-PI..PI).contains(&theta) {
        return theta;
    }
    let wrapped = (theta + PI).rem_euclid(TAU);
    // rem_euclid may round up to exactly TAU
    if wrapped >= TAU {
        -PI
    } else {
        wrapped - PI
    }
}

/// Planar rotation matrix `R(θ)`.
pub fn rot(theta: f64) -> Matrix2<f64> {
    let (s, c) = theta.sin_cos();
    Matrix2::new(c, -s, s, c)
}

pub fn wedge(x: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -x[0], x[1], x[0], 0.0, x[2], 0.0, 0.0, 0.0)
}

/// Inverse of [`wedge`]. Rejects matrices outside se(2) beyond [`STRUCTURE_TOL`].
pub fn vee(m: &Matrix3<f64>) -> Result<Vector3<f64>, Se2Error> {
    let bottom = m[(2, 0)].abs().max(m[(2, 1)].abs()).max(m[(2, 2)].abs());
    if bottom > STRUCTURE_TOL {
        return Err(Se2Error::NotInAlgebra(format!(
            "bottom row has magnitude {bottom:e}"
        )));
    }
    let diag = m[(0, 0)].abs().max(m[(1, 1)].abs());
    let asym = (m[(0, 1)] + m[(1, 0)]).abs();
    if diag > STRUCTURE_TOL || asym > STRUCTURE_TOL {
        return Err(Se2Error::NotInAlgebra(
            "upper-left block is not skew-symmetric".into(),
        ));
    }
    Ok(Vector3::new(m[(1, 0)], m[(0, 2)], m[(1, 2)]))
}

/// `vee(P_se(2)(M))`: skew part of the upper-left block and the translation column.
pub fn se2_project(m: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(0.5 * (m[(1, 0)] - m[(0, 1)]), m[(0, 2)], m[(1, 2)])
}

/// `xᵀ S y` with `S = diag(2, 1, 1)`, equal to `tr(x^∧ᵀ y^∧)`.
pub fn frobenius_weighted(x: &Vector3<f64>, y: &Vector3<f64>) -> f64 {
    2.0 * x[0] * y[0] + x[1] * y[1] + x[2] * y[2]
}

/// An se(2) element: angular rate and planar linear velocity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlgebraVector {
    pub omega: f64,
    pub v: Vector2<f64>,
}

impl AlgebraVector {
    pub fn new(omega: f64, vx: f64, vy: f64) -> Self {
        Self {
            omega,
            v: Vector2::new(vx, vy),
        }
    }

    pub fn coords(&self) -> Vector3<f64> {
        Vector3::new(self.omega, self.v[0], self.v[1])
    }

    pub fn hat(&self) -> Matrix3<f64> {
        wedge(&self.coords())
    }
}

impl From<Vector3<f64>> for AlgebraVector {
    fn from(x: Vector3<f64>) -> Self {
        Self::new(x[0], x[1], x[2])
    }
}

/// Unicycle input `u = (Ω, v)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ControlPair {
    pub omega: f64,
    pub v: f64,
}

impl ControlPair {
    pub const ZERO: Self = Self { omega: 0.0, v: 0.0 };

    pub fn new(omega: f64, v: f64) -> Self {
        Self { omega, v }
    }

    /// `B u = (Ω, v, 0)`.
    pub fn embed(&self) -> Vector3<f64> {
        Vector3::new(self.omega, self.v, 0.0)
    }

    pub fn as_vector(&self) -> Vector2<f64> {
        Vector2::new(self.omega, self.v)
    }

    pub fn is_finite(&self) -> bool {
        self.omega.is_finite() && self.v.is_finite()
    }
}

impl From<Vector2<f64>> for ControlPair {
    fn from(u: Vector2<f64>) -> Self {
        Self::new(u[0], u[1])
    }
}

impl Add for ControlPair {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self::new(self.omega + rhs.omega, self.v + rhs.v)
    }
}

impl Sub for ControlPair {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Self::new(self.omega - rhs.omega, self.v - rhs.v)
    }
}

/// An SE(2) element stored as heading (normalized to `[-π, π)`) and position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    theta: f64,
    pub p: Vector2<f64>,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn new(theta: f64, p: Vector2<f64>) -> Self {
        Self {
            theta: normalize_angle(theta),
            p,
        }
    }

    pub fn from_parts(theta: f64, x: f64, y: f64) -> Self {
        Self::new(theta, Vector2::new(x, y))
    }

    pub fn identity() -> Self {
        Self {
            theta: 0.0,
            p: Vector2::zeros(),
        }
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn rotation(&self) -> Matrix2<f64> {
        rot(self.theta)
    }

    pub fn to_matrix(&self) -> Matrix3<f64> {
        let (s, c) = self.theta.sin_cos();
        Matrix3::new(c, -s, self.p[0], s, c, self.p[1], 0.0, 0.0, 1.0)
    }

    /// Reads a homogeneous matrix back into a pose, checking the SE(2) pattern.
    pub fn from_matrix(m: &Matrix3<f64>) -> Result<Self, Se2Error> {
        let r = m.fixed_view::<2, 2>(0, 0).into_owned();
        let orth = (r.transpose() * r - Matrix2::identity()).abs().max();
        if orth > STRUCTURE_TOL || (r.determinant() - 1.0).abs() > STRUCTURE_TOL {
            return Err(Se2Error::NotInGroup(
                "rotation block is not in SO(2)".into(),
            ));
        }
        let bottom = (m[(2, 0)].abs())
            .max(m[(2, 1)].abs())
            .max((m[(2, 2)] - 1.0).abs());
        if bottom > STRUCTURE_TOL {
            return Err(Se2Error::NotInGroup("bottom row is not (0, 0, 1)".into()));
        }
        Ok(Self::new(
            m[(1, 0)].atan2(m[(0, 0)]),
            Vector2::new(m[(0, 2)], m[(1, 2)]),
        ))
    }

    /// Group product `self · other`.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose::new(self.theta + other.theta, self.p + self.rotation() * other.p)
    }

    pub fn inverse(&self) -> Pose {
        let rt = self.rotation().transpose();
        Pose::new(-self.theta, -(rt * self.p))
    }

    /// Coordinate matrix of `Ad_g`, i.e. `Ad(g)·x = vee(g x^∧ g⁻¹)`.
    ///
    /// Block form `[[1, 0], [-1^× p, R]]`.
    pub fn adjoint_matrix(&self) -> Matrix3<f64> {
        let r = self.rotation();
        Matrix3::new(
            1.0,
            0.0,
            0.0, //
            self.p[1],
            r[(0, 0)],
            r[(0, 1)], //
            -self.p[0],
            r[(1, 0)],
            r[(1, 1)],
        )
    }

    /// Acts on a point in the plane.
    pub fn transform_point(&self, q: &Vector2<f64>) -> Vector2<f64> {
        self.rotation() * q + self.p
    }

    pub fn is_finite(&self) -> bool {
        self.theta.is_finite() && self.p.iter().all(|c| c.is_finite())
    }

    /// Group exponential of algebra coordinates `(Ω, vx, vy)`.
    pub fn exp(x: &Vector3<f64>) -> Pose {
        let theta = x[0];
        let v = Vector2::new(x[1], x[2]);
        Pose::new(theta, left_jacobian(theta) * v)
    }

    /// Group logarithm on the branch with heading in `[-π, π)`.
    pub fn log(&self) -> Vector3<f64> {
        let theta = self.theta;
        let v = left_jacobian_inverse(theta) * self.p;
        Vector3::new(theta, v[0], v[1])
    }

    /// Like [`Pose::log`] but refuses heading `-π`, where the principal value is not unique.
    pub fn log_principal(&self) -> Result<Vector3<f64>, Se2Error> {
        if (self.theta + PI).abs() < 1e-12 {
            return Err(Se2Error::AmbiguousLog);
        }
        Ok(self.log())
    }

    /// Distance on the circle between two headings, in `[0, π]`.
    pub fn angle_distance(&self, other: &Pose) -> f64 {
        normalize_angle(self.theta - other.theta).abs()
    }
}

// V(θ) = [[sinθ/θ, -(1-cosθ)/θ], [(1-cosθ)/θ, sinθ/θ]]
fn left_jacobian(theta: f64) -> Matrix2<f64> {
    let (a, b) = if theta.abs() < 1e-6 {
        let t2 = theta * theta;
        (1.0 - t2 / 6.0, theta / 2.0 - theta * t2 / 24.0)
    } else {
        (theta.sin() / theta, (1.0 - theta.cos()) / theta)
    };
    Matrix2::new(a, -b, b, a)
}

fn left_jacobian_inverse(theta: f64) -> Matrix2<f64> {
    let half = 0.5 * theta;
    let a = if theta.abs() < 1e-6 {
        1.0 - theta * theta / 12.0
    } else {
        half / half.tan()
    };
    Matrix2::new(a, half, -half, a)
}
