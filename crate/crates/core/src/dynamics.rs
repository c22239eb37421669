//! Longitudinal vehicle model with a first-order actuator lag.
//!
//! The continuous model is `ṗ = v`, `v̇ = a`, `ȧ = (u − a)/τ`, where `u` is the
//! commanded acceleration. [`discretize`] returns its exact zero-order-hold
//! discretization, so [`DiscreteModel::step`] is exact for piecewise-constant
//! commands.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

/// Position (m), speed (m/s) and acceleration (m/s²) of one vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct VehicleState {
    pub p: f64,
    pub v: f64,
    pub a: f64,
}

impl VehicleState {
    pub const fn new(p: f64, v: f64, a: f64) -> Self {
        Self { p, v, a }
    }

    pub fn is_finite(&self) -> bool {
        self.p.is_finite() && self.v.is_finite() && self.a.is_finite()
    }

    pub fn as_vector(&self) -> Vector3<f64> {
        Vector3::new(self.p, self.v, self.a)
    }

    pub fn from_vector(x: &Vector3<f64>) -> Self {
        Self::new(x[0], x[1], x[2])
    }
}

/// Exact discretization `x⁺ = A_d x + B_d u` of the actuator-lag model.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteModel {
    dt: f64,
    tau: f64,
    a_d: Matrix3<f64>,
    b_d: Vector3<f64>,
}

/// Builds the zero-order-hold model for lag `tau` and step `dt` (both seconds).
pub fn discretize(tau: f64, dt: f64) -> Result<DiscreteModel> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::param("tau", format!("must be positive, got {tau}")));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::param("dt", format!("must be positive, got {dt}")));
    }
    let e = (-dt / tau).exp();
    // 1 − e^{−dt/τ}, accurate for dt ≪ τ
    let one_minus_e = -(-dt / tau).exp_m1();
    let a_d = Matrix3::new(
        1.0,
        dt,
        tau * tau * (e - 1.0) + dt * tau,
        0.0,
        1.0,
        tau * one_minus_e,
        0.0,
        0.0,
        e,
    );
    let b_d = Vector3::new(
        tau * tau * one_minus_e + dt * dt / 2.0 - dt * tau,
        tau * (e - 1.0) + dt,
        one_minus_e,
    );
    Ok(DiscreteModel { dt, tau, a_d, b_d })
}

impl DiscreteModel {
    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn a_d(&self) -> &Matrix3<f64> {
        &self.a_d
    }

    pub fn b_d(&self) -> &Vector3<f64> {
        &self.b_d
    }

    /// Propagates `x` one step under the held command `u`.
    pub fn step(&self, x: &VehicleState, u: f64) -> VehicleState {
        VehicleState::from_vector(&(self.a_d * x.as_vector() + self.b_d * u))
    }
}
