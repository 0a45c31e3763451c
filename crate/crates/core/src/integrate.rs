//! Classical fixed-step fourth-order Runge–Kutta.

use std::ops::{Add, Mul};

/// One RK4 step of `ẋ = f(t, x)`.
pub fn rk4_step<S, F>(mut f: F, t: f64, x: &S, dt: f64) -> S
where
    S: Clone + Add<Output = S> + Mul<f64, Output = S>,
    F: FnMut(f64, &S) -> S,
{
    let half = 0.5 * dt;
    let k1 = f(t, x);
    let k2 = f(t + half, &(x.clone() + k1.clone() * half));
    let k3 = f(t + half, &(x.clone() + k2.clone() * half));
    let k4 = f(t + dt, &(x.clone() + k3.clone() * dt));
    x.clone() + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0)
}
