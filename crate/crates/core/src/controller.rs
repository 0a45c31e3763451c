//! Gradient tracking law on the spatial error, plus the Kanayama baseline.
//!
//! The correction is the Lyapunov gradient projected onto the actuated
//! directions: `ũ = −A(X_d)·C(E)` with
//!
//! ```text
//! A(X_d) = Bᵀ Ad_{X_d}ᵀ S              (2×3 regressor)
//! C(E)   = vee(P_se(2)(EᵀE − Eᵀ))      = (sin θ_E, R_Eᵀ p_E)
//! ```
//!
//! so that `L̇ = −‖A·C‖²` with unit gains.

use nalgebra::{Matrix2x3, Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::group_error::{right_error, BodyError, SpatialError};
use crate::se2::{input_b, one_cross, rot, se2_project, weight_s, ControlPair, Pose};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GainError {
    #[error("gain {name} must be finite and non-negative, got {value}")]
    Negative { name: &'static str, value: f64 },
    #[error("gain {name} must be finite and strictly positive, got {value}")]
    NotPositive { name: &'static str, value: f64 },
}

/// Diagonal scaling of the spatial correction. `(1, 1)` is the unscaled law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gains {
    pub k_omega: f64,
    pub k_v: f64,
}

impl Default for Gains {
    fn default() -> Self {
        Self {
            k_omega: 1.0,
            k_v: 1.0,
        }
    }
}

impl Gains {
    pub fn new(k_omega: f64, k_v: f64) -> Result<Self, GainError> {
        for (name, value) in [("k_omega", k_omega), ("k_v", k_v)] {
            if !(value.is_finite() && value >= 0.0) {
                return Err(GainError::Negative { name, value });
            }
        }
        Ok(Self { k_omega, k_v })
    }

    /// Pure feedforward.
    pub fn zero() -> Self {
        Self {
            k_omega: 0.0,
            k_v: 0.0,
        }
    }

    pub fn is_strictly_positive(&self) -> bool {
        self.k_omega > 0.0 && self.k_v > 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KanayamaGains {
    pub k_x: f64,
    pub k_y: f64,
    pub k_theta: f64,
}

impl Default for KanayamaGains {
    fn default() -> Self {
        Self {
            k_x: 2.0,
            k_y: 8.0,
            k_theta: 4.0,
        }
    }
}

impl KanayamaGains {
    pub fn new(k_x: f64, k_y: f64, k_theta: f64) -> Result<Self, GainError> {
        for (name, value) in [("k_x", k_x), ("k_y", k_y), ("k_theta", k_theta)] {
            if !(value.is_finite() && value > 0.0) {
                return Err(GainError::NotPositive { name, value });
            }
        }
        Ok(Self { k_x, k_y, k_theta })
    }
}

/// `ũ = −Bᵀ Ad_{X_d}ᵀ S vee(P_se(2)(EᵀE − Eᵀ))`, assembled from the matrices.
pub fn correction_matrix_form(e: &SpatialError, xd: &Pose) -> ControlPair {
    let m = e.matrix();
    let c = se2_project(&(m.transpose() * m - m.transpose()));
    let u = -(input_b().transpose() * xd.adjoint_matrix().transpose() * weight_s() * c);
    ControlPair::from(u)
}

/// Component form of the correction:
/// `Ω̃ = −2 sin θ_E − p_dᵀ 1^× R_Eᵀ p_E`, `ṽ = −e₁ᵀ R_dᵀ R_Eᵀ p_E`.
pub fn correction_component_form(theta_e: f64, p_e: &Vector2<f64>, xd: &Pose) -> ControlPair {
    let q = rot(theta_e).transpose() * p_e;
    let omega = -2.0 * theta_e.sin() - (xd.p.transpose() * one_cross() * q)[0];
    let v = -(xd.rotation().transpose() * q)[0];
    ControlPair::new(omega, v)
}

/// Correction evaluated from the error element.
pub fn correction(e: &SpatialError, xd: &Pose) -> ControlPair {
    correction_component_form(e.theta(), &e.p(), xd)
}

/// `u = u_d + diag(k_Ω, k_v)·ũ(E_R, X_d)`.
pub fn total_control(x: &Pose, xd: &Pose, u_d: &ControlPair, gains: &Gains) -> ControlPair {
    let du = correction(&right_error(x, xd), xd);
    ControlPair::new(
        u_d.omega + gains.k_omega * du.omega,
        u_d.v + gains.k_v * du.v,
    )
}

/// `A(X_d) = Bᵀ Ad_{X_d}ᵀ S = [[2, p_dᵀ1^×], [0, e₁ᵀR_dᵀ]]`.
pub fn regressor_a(xd: &Pose) -> Matrix2x3<f64> {
    let (s, c) = xd.theta().sin_cos();
    Matrix2x3::new(2.0, xd.p[1], -xd.p[0], 0.0, c, s)
}

/// `C(E) = (sin θ_E, R_Eᵀ p_E)`.
pub fn gradient_c(e: &SpatialError) -> Vector3<f64> {
    let q = e.pose().rotation().transpose() * e.p();
    Vector3::new(e.theta().sin(), q[0], q[1])
}

/// `L̇ = −‖A(X_d)·C(E)‖²` for the unit-gain law.
pub fn lyapunov_rate(e: &SpatialError, xd: &Pose) -> f64 {
    -(regressor_a(xd) * gradient_c(e)).norm_squared()
}

/// `L̇ = −(AC)ᵀ K (AC)` for diagonal gains `K`.
pub fn lyapunov_rate_with_gains(e: &SpatialError, xd: &Pose, gains: &Gains) -> f64 {
    let ac = regressor_a(xd) * gradient_c(e);
    -(gains.k_omega * ac[0] * ac[0] + gains.k_v * ac[1] * ac[1])
}

/// Kanayama's law on tracking error `(x_e, y_e, θ_e)`, the reference pose seen from the robot:
/// `v = v_d cos θ_e + k_x x_e`, `Ω = Ω_d + v_d (k_y y_e + k_θ sin θ_e)`.
pub fn kanayama_law(
    x_e: f64,
    y_e: f64,
    theta_e: f64,
    u_d: &ControlPair,
    g: &KanayamaGains,
) -> ControlPair {
    ControlPair::new(
        u_d.omega + u_d.v * (g.k_y * y_e + g.k_theta * theta_e.sin()),
        u_d.v * theta_e.cos() + g.k_x * x_e,
    )
}

/// Kanayama baseline driven by the body-fixed error.
///
/// The law is written for `X⁻¹X_d = E_L⁻¹`, so the error is inverted before use.
pub fn kanayama_control(e: &BodyError, u_d: &ControlPair, g: &KanayamaGains) -> ControlPair {
    let rel = e.pose().inverse();
    kanayama_law(rel.p[0], rel.p[1], rel.theta(), u_d, g)
}

/// Explicit `Ad_{X_d} B Bᵀ Ad_{X_d}ᵀ`, the Gram of the actuated directions.
pub fn actuation_gram(xd: &Pose) -> Matrix3<f64> {
    let ad_b = xd.adjoint_matrix() * input_b();
    ad_b * ad_b.transpose()
}
