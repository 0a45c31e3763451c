//! Persistent-excitation certificates.
//!
//! `F` is persistently exciting when every window Gram
//! `∫_t^{t+T} F(τ)ᵀF(τ) dτ` is bounded below by `ε·Id`. Numerically that can
//! only be checked on a finite horizon at a finite set of window starts, so
//! [`PeReport`] always carries the horizon and resolution it was computed on.

use std::f64::consts::PI;

use nalgebra::{DMatrix, Matrix3, SymmetricEigen, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controller::regressor_a;
use crate::trajectory::PosePath;

pub const DEFAULT_NODES: usize = 401;
pub const DEFAULT_WINDOWS: usize = 64;
pub const DEFAULT_PERIODS: f64 = 5.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExcitationError {
    #[error("window length must be finite and positive, got {0}")]
    BadWindow(f64),
    #[error("Simpson's rule needs an odd node count of at least 3, got {0}")]
    BadNodes(usize),
    #[error("horizon {horizon} is shorter than the window {window}")]
    ShortHorizon { horizon: f64, window: f64 },
    #[error("at least one window start is required")]
    NoWindows,
    #[error("integrand is not square ({rows}×{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("h must be finite and non-zero, got {0}")]
    ZeroFrequency(f64),
}

fn check_quadrature(window: f64, n: usize) -> Result<(), ExcitationError> {
    if !(window.is_finite() && window > 0.0) {
        return Err(ExcitationError::BadWindow(window));
    }
    if n < 3 || n.is_multiple_of(2) {
        return Err(ExcitationError::BadNodes(n));
    }
    Ok(())
}

/// Composite Simpson approximation of `∫_t^{t+T} g(τ) dτ` for a matrix-valued `g`.
pub fn window_integral<G>(
    g: G,
    t: f64,
    window: f64,
    n: usize,
) -> Result<DMatrix<f64>, ExcitationError>
where
    G: Fn(f64) -> DMatrix<f64>,
{
    check_quadrature(window, n)?;
    let step = window / (n - 1) as f64;
    let mut acc = g(t);
    let (rows, cols) = acc.shape();
    for i in 1..n {
        let w = if i == n - 1 {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        let m = g(t + i as f64 * step);
        debug_assert_eq!(m.shape(), (rows, cols));
        acc += m * w;
    }
    Ok(acc * (step / 3.0))
}

/// `∫_t^{t+T} F(τ)ᵀF(τ) dτ`, symmetrized.
pub fn window_gram<F>(f: F, t: f64, window: f64, n: usize) -> Result<DMatrix<f64>, ExcitationError>
where
    F: Fn(f64) -> DMatrix<f64>,
{
    let m = window_integral(
        |tau| {
            let v = f(tau);
            v.transpose() * v
        },
        t,
        window,
        n,
    )?;
    Ok(symmetrize(&m))
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    SymmetricEigen::new(symmetrize(m)).eigenvalues.min()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeReport {
    /// Window length `T`, seconds.
    pub window_t: f64,
    /// Smallest window eigenvalue over the scanned starts, clamped at zero.
    pub epsilon: f64,
    /// Unclamped minimum; slightly negative values are quadrature rounding.
    pub raw_min_eigenvalue: f64,
    pub horizon: f64,
    pub windows: usize,
    pub grid_points_per_window: usize,
    /// `(start time, smallest eigenvalue)` for each scanned window.
    pub per_window: Vec<(f64, f64)>,
}

impl PeReport {
    /// True when `epsilon` clears `tol`.
    pub fn certifies(&self, tol: f64) -> bool {
        self.epsilon > tol
    }
}

/// Default verdict threshold: window eigenvalues at or below this are treated as zero.
pub const PE_TOLERANCE: f64 = 1e-9;

fn window_starts(horizon: f64, window: f64, windows: usize) -> Result<Vec<f64>, ExcitationError> {
    if !(window.is_finite() && window > 0.0) {
        return Err(ExcitationError::BadWindow(window));
    }
    if !(horizon.is_finite() && horizon >= window) {
        return Err(ExcitationError::ShortHorizon { horizon, window });
    }
    if windows == 0 {
        return Err(ExcitationError::NoWindows);
    }
    let span = horizon - window;
    Ok((0..windows)
        .map(|k| {
            if windows == 1 {
                0.0
            } else {
                span * k as f64 / (windows - 1) as f64
            }
        })
        .collect())
}

/// Scans window starts uniformly over `[0, horizon − T]` and reports the
/// smallest eigenvalue of `∫ g` over any window. `g` must be square and symmetric.
pub fn scan_window_integrals<G>(
    g: G,
    horizon: f64,
    window: f64,
    windows: usize,
    n: usize,
) -> Result<PeReport, ExcitationError>
where
    G: Fn(f64) -> DMatrix<f64> + Sync,
{
    check_quadrature(window, n)?;
    let starts = window_starts(horizon, window, windows)?;
    let probe = g(0.0);
    if !probe.is_square() {
        return Err(ExcitationError::NotSquare {
            rows: probe.nrows(),
            cols: probe.ncols(),
        });
    }
    let per_window: Vec<(f64, f64)> = starts
        .par_iter()
        .map(|&t| {
            let m = window_integral(&g, t, window, n).expect("quadrature arguments checked");
            (t, min_eigenvalue(&m))
        })
        .collect();
    let raw = per_window
        .iter()
        .map(|&(_, e)| e)
        .fold(f64::INFINITY, f64::min);
    Ok(PeReport {
        window_t: window,
        epsilon: raw.max(0.0),
        raw_min_eigenvalue: raw,
        horizon,
        windows,
        grid_points_per_window: n,
        per_window,
    })
}

/// PE certificate for `F` on `[0, horizon]` with window `T`.
pub fn pe_epsilon<F>(
    f: F,
    horizon: f64,
    window: f64,
    windows: usize,
    n: usize,
) -> Result<PeReport, ExcitationError>
where
    F: Fn(f64) -> DMatrix<f64> + Sync,
{
    scan_window_integrals(
        |tau| {
            let v = f(tau);
            v.transpose() * v
        },
        horizon,
        window,
        windows,
        n,
    )
}

/// One-period Gram of the ellipse regressor under the heading convention `θ_d = ht`:
/// `diag(8π/h, (b²+1)π/h, (a²+1)π/h)`.
pub fn ellipse_pe_closed_form(a: f64, b: f64, h: f64) -> Result<Matrix3<f64>, ExcitationError> {
    if !h.is_finite() || h == 0.0 {
        return Err(ExcitationError::ZeroFrequency(h));
    }
    let k = PI / h;
    Ok(Matrix3::from_diagonal(&Vector3::new(
        8.0 * k,
        (b * b + 1.0) * k,
        (a * a + 1.0) * k,
    )))
}

/// `t ↦ A(X_d(t)) = Bᵀ Ad_{X_d(t)}ᵀ S` as a dynamic matrix.
pub fn controller_regressor<P: PosePath + ?Sized + Sync>(
    traj: &P,
) -> impl Fn(f64) -> DMatrix<f64> + Sync + '_ {
    move |t| {
        let a = regressor_a(&traj.pose_at(t));
        DMatrix::from_fn(2, 3, |i, j| a[(i, j)])
    }
}
