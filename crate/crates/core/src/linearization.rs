//! Linearized error dynamics at `E = I` and a decay probe for `ẋ = −A(t)x`.
//!
//! Near the identity the closed loop is `μ̇ = −M(X_d)·S·μ` in coordinates
//! `μ = (θ_E, p_E)`, where `M = Ad B Bᵀ Adᵀ` is the Gram of the actuated
//! directions. The analytic form is checked against a central-difference
//! Jacobian of the full nonlinear error velocity.

use nalgebra::{DMatrix, DVector, Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controller::{actuation_gram, correction};
use crate::excitation::{self, ExcitationError, PE_TOLERANCE};
use crate::group_error::GroupError;
use crate::integrate::rk4_step;
use crate::se2::{input_b, one_cross, weight_s, Pose};
use crate::trajectory::PosePath;

pub const DEFAULT_FD_STEP: f64 = 1e-6;
/// Fraction of the horizon, counted from the end, used for the decay fit.
pub const FIT_FRACTION: f64 = 0.6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinError {
    #[error("finite-difference step {0} outside [1e-8, 1e-4]")]
    BadStep(f64),
    #[error("A(t) at t = {t} is not symmetric (asymmetry {asym:e})")]
    NotSymmetric { t: f64, asym: f64 },
    #[error("A(t) at t = {t} is indefinite (smallest eigenvalue {eig:e})")]
    Indefinite { t: f64, eig: f64 },
    #[error("excitation level must be positive, got {0}")]
    BadEpsilon(f64),
    #[error("window integral reaches only {found:e}, below the claimed {claimed:e}")]
    NotExcited { found: f64, claimed: f64 },
    #[error("integration settings invalid: dt = {dt}, t_end = {t_end}")]
    BadIntegration { dt: f64, t_end: f64 },
    #[error("initial state has {got} entries, A(t) is {dim}×{dim}")]
    Dimension { got: usize, dim: usize },
    #[error(transparent)]
    Excitation(#[from] ExcitationError),
}

/// The explicit block matrix
/// `[[1, p_dᵀ1^×], [−1^×p_d, −1^×p_d p_dᵀ1^× + R_d e₁e₁ᵀR_dᵀ]]`.
pub fn explicit_p(xd: &Pose) -> Matrix3<f64> {
    let j = one_cross();
    let p = xd.p;
    let top = p.transpose() * j;
    let left = -(j * p);
    let heading = xd.rotation().column(0).into_owned();
    let block = -(j * p) * (p.transpose() * j) + heading * heading.transpose();
    Matrix3::new(
        1.0,
        top[0],
        top[1],
        left[0],
        block[(0, 0)],
        block[(0, 1)],
        left[1],
        block[(1, 0)],
        block[(1, 1)],
    )
}

/// `−M(X_d)·S`, the analytic Jacobian of the error velocity at the identity.
pub fn analytic_jacobian(xd: &Pose) -> Matrix3<f64> {
    -actuation_gram(xd) * weight_s()
}

/// Nonlinear closed-loop error velocity `(θ̇_E, ṗ_E)` with `X_d` frozen.
///
/// From `Ė = E (Ad_{X_d} B ũ)^∧`: `θ̇_E = ξ_Ω`, `ṗ_E = R_E ξ_v`.
pub fn error_velocity(xd: &Pose, mu: &Vector3<f64>) -> Vector3<f64> {
    let e = GroupError::from_pose(Pose::new(mu[0], Vector2::new(mu[1], mu[2])));
    let u = correction(&e, xd);
    let xi = xd.adjoint_matrix() * input_b() * u.as_vector();
    // Angle is not wrapped here; FD perturbations stay tiny.
    let pv = crate::se2::rot(mu[0]) * Vector2::new(xi[1], xi[2]);
    Vector3::new(xi[0], pv[0], pv[1])
}

/// Central-difference Jacobian of [`error_velocity`] at `μ = 0`.
pub fn fd_closed_loop_jacobian(xd: &Pose, step: f64) -> Result<Matrix3<f64>, LinError> {
    if !(1e-8..=1e-4).contains(&step) {
        return Err(LinError::BadStep(step));
    }
    let mut jac = Matrix3::zeros();
    for j in 0..3 {
        let mut d = Vector3::zeros();
        d[j] = step;
        let col = (error_velocity(xd, &d) - error_velocity(xd, &(-d))) / (2.0 * step);
        jac.set_column(j, &col);
    }
    Ok(jac)
}

/// `S^{1/2} M(X_d) S^{1/2}`: the linearization in scaled coordinates `z = S^{1/2} μ`,
/// where it reads `ż = −A z` with `A` symmetric PSD.
pub fn symmetric_closed_loop(xd: &Pose) -> Matrix3<f64> {
    let s_half = Matrix3::from_diagonal(&Vector3::new(2f64.sqrt(), 1.0, 1.0));
    s_half * actuation_gram(xd) * s_half
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    /// Excitation window `T`.
    pub window: f64,
    /// Claimed lower bound `ε` on every window integral.
    pub epsilon: f64,
    pub t_end: f64,
    pub dt: f64,
    /// Simpson nodes per window.
    pub nodes: usize,
    /// Number of window starts scanned for the excitation check.
    pub windows: usize,
    /// Spacing of the symmetry/PSD checks.
    pub check_every: f64,
}

impl ProbeConfig {
    pub fn new(window: f64, epsilon: f64, t_end: f64) -> Self {
        Self {
            window,
            epsilon,
            t_end,
            dt: 1e-3,
            nodes: excitation::DEFAULT_NODES,
            windows: excitation::DEFAULT_WINDOWS,
            check_every: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayReport {
    /// Least-squares decay rate of `‖x(t)‖`, i.e. minus the slope of `log‖x‖`.
    pub fitted_rate: f64,
    pub r_squared: f64,
    /// `[t0, t1]` the fit was taken over.
    pub fit_window: (f64, f64),
    /// `‖x‖` never increased beyond rounding.
    pub monotone: bool,
    pub initial_norm: f64,
    pub final_norm: f64,
    /// Smallest window-integral eigenvalue found by the excitation check, if run.
    pub excitation: Option<f64>,
}

/// Least-squares line through `(t, y)`; returns `(slope, r²)`.
pub fn fit_line(ts: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = ts.len() as f64;
    if ts.len() < 2 {
        return (0.0, 0.0);
    }
    let mt = ts.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (t, y) in ts.iter().zip(ys) {
        sxy += (t - mt) * (y - my);
        sxx += (t - mt) * (t - mt);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 {
        return (0.0, 0.0);
    }
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 {
        1.0
    } else {
        sxy * sxy / (sxx * syy)
    };
    (slope, r2)
}

/// Fits `log y` against `t` over the last [`FIT_FRACTION`] of the samples,
/// stopping early if `y` underflows towards zero.
pub fn fit_decay(ts: &[f64], ys: &[f64]) -> (f64, f64, (f64, f64)) {
    let usable = ys
        .iter()
        .position(|&y| y <= 1e-200 || y.is_nan())
        .unwrap_or(ys.len());
    if usable < 2 {
        return (0.0, 0.0, (0.0, 0.0));
    }
    let t_stop = ts[usable - 1];
    let t_start = t_stop - FIT_FRACTION * (t_stop - ts[0]);
    let first = ts[..usable].partition_point(|&t| t < t_start);
    let logs: Vec<f64> = ys[first..usable].iter().map(|y| y.ln()).collect();
    let (slope, r2) = fit_line(&ts[first..usable], &logs);
    (-slope, r2, (ts[first], t_stop))
}

/// Integrates `ẋ = −A(t)x` with RK4, returning sample times and `‖x‖`.
pub fn integrate_ltv<A>(
    a: A,
    x0: &DVector<f64>,
    dt: f64,
    t_end: f64,
) -> Result<(Vec<f64>, Vec<f64>), LinError>
where
    A: Fn(f64) -> DMatrix<f64>,
{
    if !(dt.is_finite() && dt > 0.0 && t_end.is_finite() && t_end >= dt) {
        return Err(LinError::BadIntegration { dt, t_end });
    }
    let dim = a(0.0).nrows();
    if x0.len() != dim {
        return Err(LinError::Dimension { got: x0.len(), dim });
    }
    let steps = (t_end / dt).round() as usize;
    let mut ts = Vec::with_capacity(steps + 1);
    let mut norms = Vec::with_capacity(steps + 1);
    let mut x = x0.clone();
    for k in 0..=steps {
        let t = k as f64 * dt;
        ts.push(t);
        norms.push(x.norm());
        if k < steps {
            x = rk4_step(|tau, y: &DVector<f64>| -(a(tau) * y), t, &x, dt);
        }
    }
    Ok((ts, norms))
}

fn decay_report(ts: &[f64], norms: &[f64], excitation: Option<f64>) -> DecayReport {
    let (rate, r2, window) = fit_decay(ts, norms);
    let monotone = norms
        .windows(2)
        .all(|w| w[1] <= w[0] * (1.0 + 1e-12) + 1e-300);
    DecayReport {
        fitted_rate: rate,
        r_squared: r2,
        fit_window: window,
        monotone,
        initial_norm: norms[0],
        final_norm: *norms.last().unwrap(),
        excitation,
    }
}

/// Unchecked variant of [`stability_probe`] for systems that may not be excited.
pub fn decay_without_checks<A>(
    a: A,
    x0: &DVector<f64>,
    dt: f64,
    t_end: f64,
) -> Result<DecayReport, LinError>
where
    A: Fn(f64) -> DMatrix<f64>,
{
    let (ts, norms) = integrate_ltv(a, x0, dt, t_end)?;
    Ok(decay_report(&ts, &norms, None))
}

/// Checks that `A(t)` is symmetric PSD and excited on `[0, t_end]`, then
/// simulates `ẋ = −A(t)x` and fits the exponential decay rate of `‖x‖`.
pub fn stability_probe<A>(
    a: A,
    x0: &DVector<f64>,
    cfg: &ProbeConfig,
) -> Result<DecayReport, LinError>
where
    A: Fn(f64) -> DMatrix<f64> + Sync,
{
    if !(cfg.epsilon.is_finite() && cfg.epsilon > 0.0) {
        return Err(LinError::BadEpsilon(cfg.epsilon));
    }
    if !(cfg.dt.is_finite() && cfg.dt > 0.0 && cfg.t_end.is_finite() && cfg.t_end >= cfg.dt) {
        return Err(LinError::BadIntegration {
            dt: cfg.dt,
            t_end: cfg.t_end,
        });
    }
    let checks = (cfg.t_end / cfg.check_every.max(cfg.dt)).ceil() as usize;
    for k in 0..=checks {
        let t = (k as f64 * cfg.check_every).min(cfg.t_end);
        let m = a(t);
        let asym = (&m - m.transpose()).abs().max();
        if asym > 1e-9 {
            return Err(LinError::NotSymmetric { t, asym });
        }
        let eig = excitation::min_eigenvalue(&m);
        if eig < -1e-9 {
            return Err(LinError::Indefinite { t, eig });
        }
    }
    let pe = excitation::scan_window_integrals(&a, cfg.t_end, cfg.window, cfg.windows, cfg.nodes)?;
    if pe.raw_min_eigenvalue < cfg.epsilon {
        return Err(LinError::NotExcited {
            found: pe.raw_min_eigenvalue,
            claimed: cfg.epsilon,
        });
    }
    let (ts, norms) = integrate_ltv(&a, x0, cfg.dt, cfg.t_end)?;
    Ok(decay_report(&ts, &norms, Some(pe.raw_min_eigenvalue)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinCheckReport {
    pub sample_times: Vec<f64>,
    /// max |P(X_d) − Ad B Bᵀ Adᵀ| over the samples.
    pub max_structure_residual: f64,
    /// max |J_fd − (−M S)| over the samples.
    pub max_fd_residual: f64,
    /// Smallest eigenvalue of the window integral of the scaled linearization.
    pub excitation_epsilon: f64,
    pub fitted_decay_rate: f64,
    pub fit_r_squared: f64,
    pub fit_window: (f64, f64),
    pub verdict: String,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinCheckOptions {
    pub samples: usize,
    pub fd_step: f64,
    pub window: f64,
    pub t_end: f64,
    pub dt: f64,
}

/// Runs the structural, finite-difference and decay checks along a reference.
pub fn lin_check<P: PosePath + Sync>(
    traj: &P,
    opts: &LinCheckOptions,
) -> Result<LinCheckReport, LinError> {
    let samples = opts.samples.max(1);
    let sample_times: Vec<f64> = (0..samples)
        .map(|k| opts.t_end * k as f64 / samples as f64)
        .collect();
    let mut structure: f64 = 0.0;
    let mut fd: f64 = 0.0;
    for &t in &sample_times {
        let xd = traj.pose_at(t);
        structure = structure.max((explicit_p(&xd) - actuation_gram(&xd)).abs().max());
        let jac = fd_closed_loop_jacobian(&xd, opts.fd_step)?;
        fd = fd.max((jac - analytic_jacobian(&xd)).abs().max());
    }

    let a = |t: f64| {
        let m = symmetric_closed_loop(&traj.pose_at(t));
        DMatrix::from_fn(3, 3, |i, j| m[(i, j)])
    };
    let pe = excitation::scan_window_integrals(
        a,
        opts.t_end,
        opts.window,
        excitation::DEFAULT_WINDOWS,
        excitation::DEFAULT_NODES,
    )?;
    let x0 = DVector::from_element(3, 1.0 / 3f64.sqrt());
    let (decay, verdict) = if pe.certifies(PE_TOLERANCE) {
        let mut cfg = ProbeConfig::new(opts.window, pe.epsilon, opts.t_end);
        cfg.dt = opts.dt;
        (
            stability_probe(a, &x0, &cfg)?,
            "PE: exponentially stable".to_string(),
        )
    } else {
        (
            decay_without_checks(a, &x0, opts.dt, opts.t_end)?,
            "not PE".to_string(),
        )
    };
    Ok(LinCheckReport {
        sample_times,
        max_structure_residual: structure,
        max_fd_residual: fd,
        excitation_epsilon: pe.epsilon,
        fitted_decay_rate: decay.fitted_rate,
        fit_r_squared: decay.r_squared,
        fit_window: decay.fit_window,
        verdict,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::TrajectorySpec;
    use approx::assert_relative_eq;

    #[test]
    fn explicit_p_at_identity() {
        let p = explicit_p(&Pose::identity());
        assert_eq!(p, Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, 0.0)));
    }

    #[test]
    fn explicit_p_is_actuation_gram() {
        // Oracle: Ad·diag(1,1,0)·Adᵀ built from the adjoint directly.
        for (th, x, y) in [(0.3, 1.0, -2.0), (-2.9, 4.0, 0.5), (1.7, -3.0, -3.0)] {
            let xd = Pose::from_parts(th, x, y);
            let ad = xd.adjoint_matrix();
            let gram = ad * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, 0.0)) * ad.transpose();
            assert!((explicit_p(&xd) - gram).abs().max() < 1e-12);
            let eig = nalgebra::SymmetricEigen::new(explicit_p(&xd)).eigenvalues;
            assert!(eig.min() >= -1e-12);
            assert!(eig.iter().filter(|e| e.abs() > 1e-9).count() <= 2);
        }
    }

    #[test]
    fn fd_jacobian_at_identity_reference() {
        let jac = fd_closed_loop_jacobian(&Pose::identity(), DEFAULT_FD_STEP).unwrap();
        assert_relative_eq!(jac[(0, 0)], -2.0, epsilon = 1e-8);
        assert_relative_eq!(jac[(1, 1)], -1.0, epsilon = 1e-8);
        assert!(jac.row(2).abs().max() < 1e-8);
        assert!((jac - analytic_jacobian(&Pose::identity())).abs().max() < 1e-8);
    }

    #[test]
    fn fd_jacobian_step_bounds() {
        assert_eq!(
            fd_closed_loop_jacobian(&Pose::identity(), 1e-3),
            Err(LinError::BadStep(1e-3))
        );
        assert!(fd_closed_loop_jacobian(&Pose::identity(), 1e-9).is_err());
    }

    #[test]
    fn fd_jacobian_descent_and_convergence() {
        let traj = TrajectorySpec::centered_ellipse().build().unwrap();
        let s = weight_s();
        for k in 0..10 {
            let xd = traj.pose_at(0.5 * k as f64);
            let jac = fd_closed_loop_jacobian(&xd, DEFAULT_FD_STEP).unwrap();
            let sym = s * jac + (s * jac).transpose();
            let top = nalgebra::SymmetricEigen::new(sym).eigenvalues.max();
            assert!(top <= 1e-9 * 2.0 + 1e-8, "max eig {top}");
            let coarse = fd_closed_loop_jacobian(&xd, 1e-5).unwrap();
            let fine = fd_closed_loop_jacobian(&xd, 5e-6).unwrap();
            assert!((coarse - fine).abs().max() <= 1e-6);
        }
    }

    #[test]
    fn identity_generator_decays_as_exponential() {
        let x0 = DVector::from_vec(vec![3.0, -4.0]);
        let mut cfg = ProbeConfig::new(1.0, 0.5, 5.0);
        cfg.dt = 1e-4;
        let report = stability_probe(|_| DMatrix::identity(2, 2), &x0, &cfg).unwrap();
        assert_relative_eq!(report.fitted_rate, 1.0, epsilon = 1e-8);
        assert_relative_eq!(report.final_norm, 5.0 * (-5.0f64).exp(), epsilon = 1e-6);
        assert!(report.monotone);
    }

    #[test]
    fn diagonal_generator_decays_at_least_unit_rate() {
        let a =
            |t: f64| DMatrix::from_diagonal(&DVector::from_vec(vec![1.0 + t.sin().powi(2), 1.0]));
        let x0 = DVector::from_vec(vec![1.0, 1.0]);
        let report = stability_probe(a, &x0, &ProbeConfig::new(1.0, 0.5, 10.0)).unwrap();
        assert!(
            report.fitted_rate >= 1.0 - 1e-9,
            "rate {}",
            report.fitted_rate
        );
    }

    #[test]
    fn probe_rejects_bad_generators() {
        let x0 = DVector::from_vec(vec![1.0, 0.0]);
        let cfg = ProbeConfig::new(1.0, 0.1, 2.0);
        let skew = |_: f64| DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
        assert!(matches!(
            stability_probe(skew, &x0, &cfg),
            Err(LinError::NotSymmetric { .. })
        ));
        let indefinite = |_: f64| DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(matches!(
            stability_probe(indefinite, &x0, &cfg),
            Err(LinError::Indefinite { .. })
        ));
        let flat = |_: f64| DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        assert!(matches!(
            stability_probe(flat, &x0, &cfg),
            Err(LinError::NotExcited { .. })
        ));
        let mut bad = cfg;
        bad.epsilon = 0.0;
        assert_eq!(
            stability_probe(|_| DMatrix::identity(2, 2), &x0, &bad),
            Err(LinError::BadEpsilon(0.0))
        );
        assert!(matches!(
            stability_probe(|_| DMatrix::identity(3, 3), &x0, &cfg),
            Err(LinError::Dimension { got: 2, dim: 3 })
        ));
    }

    #[test]
    fn line_fit() {
        let ts = [0.0, 1.0, 2.0, 3.0];
        let ys = [1.0, 3.0, 5.0, 7.0];
        let (slope, r2) = fit_line(&ts, &ys);
        assert_relative_eq!(slope, 2.0);
        assert_relative_eq!(r2, 1.0);
    }

    #[test]
    fn lin_check_on_centered_ellipse() {
        let traj = TrajectorySpec::centered_ellipse().build().unwrap();
        let report = lin_check(
            &traj,
            &LinCheckOptions {
                samples: 10,
                fd_step: DEFAULT_FD_STEP,
                window: 5.0,
                t_end: 25.0,
                dt: 1e-3,
            },
        )
        .unwrap();
        assert!(report.max_structure_residual <= 1e-12);
        assert!(report.max_fd_residual <= 1e-4);
        assert!(report.fitted_decay_rate > 0.0);
        assert!(report.verdict.starts_with("PE"));
    }
}
