//! Receding-horizon speed controller.
//!
//! Each cycle predicts the lead vehicle under a constant-acceleration
//! assumption, condenses the tracking cost over `h` steps into a QP over
//! the input sequence, solves it, and converts the first input into a
//! target speed.

mod qp;

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};

use crate::dynamics::{discretize, DiscreteModel, VehicleState};
use crate::error::{Error, Result};

pub use qp::{solve_qp, QpProblem, QpSolution, SoftBounds, DEFAULT_MAX_ITER};

#[derive(Debug, Clone, PartialEq)]
pub struct MpcConfig {
    /// Horizon length in steps.
    pub horizon: usize,
    /// Length of one prediction step (s), independent of the control period.
    pub prediction_dt: f64,
    pub q_p: f64,
    pub q_v: f64,
    pub q_a: f64,
    pub r: f64,
    /// Desired gap to the lead (m).
    pub d_c: f64,
    pub u_min: f64,
    pub u_max: f64,
    pub v_min: f64,
    pub v_max_limit: f64,
    pub slack_weight: f64,
    pub max_iter: usize,
    /// Lead speed samples used to estimate the lead acceleration.
    pub accel_window: usize,
    /// Time (s) over which the first optimal input is integrated into the
    /// emitted target speed. Matches the speed tracker's time constant, so
    /// tracking the target reproduces the optimal input.
    pub speed_lookahead: f64,
}

impl Default for MpcConfig {
    fn default() -> Self {
        Self {
            horizon: 10,
            prediction_dt: 0.2,
            q_p: 50.0,
            q_v: 400.0,
            q_a: 1.0,
            r: 1.0,
            d_c: 20.0,
            u_min: -12.0,
            u_max: 3.0,
            v_min: 0.0,
            v_max_limit: 32.0,
            slack_weight: 1e4,
            max_iter: DEFAULT_MAX_ITER,
            accel_window: 5,
            speed_lookahead: 0.5,
        }
    }
}

impl MpcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon < 1 {
            return Err(Error::param("horizon", "must be at least 1"));
        }
        if !(self.prediction_dt > 0.0 && self.prediction_dt.is_finite()) {
            return Err(Error::param("prediction_dt", "must be positive"));
        }
        for (name, w) in [("q_p", self.q_p), ("q_v", self.q_v), ("q_a", self.q_a)] {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(Error::param(name, format!("must be non-negative, got {w}")));
            }
        }
        if !(self.r > 0.0 && self.r.is_finite()) {
            return Err(Error::param(
                "r",
                format!("must be positive, got {}", self.r),
            ));
        }
        if !(self.u_min < self.u_max) {
            return Err(Error::param("u_min", "must be below u_max"));
        }
        if !(self.v_min < self.v_max_limit) {
            return Err(Error::param("v_min", "must be below v_max_limit"));
        }
        if !(self.d_c > 0.0) {
            return Err(Error::param("d_c", "must be positive"));
        }
        if !(self.slack_weight > 0.0) {
            return Err(Error::param("slack_weight", "must be positive"));
        }
        if self.max_iter == 0 {
            return Err(Error::param("max_iter", "must be positive"));
        }
        if self.accel_window < 2 {
            return Err(Error::param("accel_window", "needs at least 2 samples"));
        }
        if !(self.speed_lookahead > 0.0) {
            return Err(Error::param("speed_lookahead", "must be positive"));
        }
        Ok(())
    }

    fn weights(&self) -> Vector3<f64> {
        Vector3::new(self.q_p, self.q_v, self.q_a)
    }
}

/// Lead position after `k` steps of constant acceleration `accel`. A
/// decelerating lead stops and stays at its stopping point.
pub fn predict_lead(lead: &VehicleState, accel: f64, k: usize, dt: f64) -> f64 {
    let t = k as f64 * dt;
    if accel < 0.0 {
        let t_stop = lead.v.max(0.0) / -accel;
        if t >= t_stop {
            return lead.p + lead.v.max(0.0) * t_stop / 2.0;
        }
    }
    lead.p + lead.v * t + 0.5 * accel * t * t
}

/// Predicted lead states for steps `1..=h`.
pub fn forecast_lead(lead: &VehicleState, accel: f64, h: usize, dt: f64) -> Vec<VehicleState> {
    (1..=h)
        .map(|k| {
            let v = lead.v + accel * k as f64 * dt;
            if accel < 0.0 && v <= 0.0 {
                VehicleState::new(predict_lead(lead, accel, k, dt), 0.0, 0.0)
            } else {
                VehicleState::new(predict_lead(lead, accel, k, dt), v, accel)
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AccelEstimate {
    pub accel: f64,
    /// Fewer than two samples were available; `accel` is zero.
    pub cold_start: bool,
}

/// Least-squares slope of evenly spaced speed samples.
pub fn estimate_lead_accel(speeds: &[f64], dt: f64) -> AccelEstimate {
    let m = speeds.len();
    if m < 2 {
        return AccelEstimate {
            accel: 0.0,
            cold_start: true,
        };
    }
    let mean_i = (m - 1) as f64 / 2.0;
    let mean_v = speeds.iter().sum::<f64>() / m as f64;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, &v) in speeds.iter().enumerate() {
        let di = i as f64 - mean_i;
        sxy += di * (v - mean_v);
        sxx += di * di;
    }
    AccelEstimate {
        accel: sxy / (sxx * dt),
        cold_start: false,
    }
}

/// Condensed prediction `X = Φ x₀ + Γ U` of the stacked ego states
/// `x₁..x_h`, with the products reused across cycles.
#[derive(Debug, Clone)]
struct Prediction {
    horizon: usize,
    phi: DMatrix<f64>,
    gamma: DMatrix<f64>,
    /// ΓᵀQ̄ with Q̄ = blockdiag(Q, …, Q)
    gamma_t_q: DMatrix<f64>,
    hessian: DMatrix<f64>,
}

impl Prediction {
    fn new(cfg: &MpcConfig, model: &DiscreteModel) -> Self {
        let h = cfg.horizon;
        let a = model.a_d();
        let b = model.b_d();
        let mut phi = DMatrix::zeros(3 * h, 3);
        let mut gamma = DMatrix::zeros(3 * h, h);
        // powers[k] = A^k
        let mut powers = vec![Matrix3::identity()];
        for k in 1..=h {
            powers.push(a * powers[k - 1]);
        }
        for k in 1..=h {
            phi.view_mut((3 * (k - 1), 0), (3, 3)).copy_from(&powers[k]);
            for j in 0..k {
                let col = powers[k - 1 - j] * b;
                gamma.view_mut((3 * (k - 1), j), (3, 1)).copy_from(&col);
            }
        }
        let w = cfg.weights();
        let qbar = DVector::from_fn(3 * h, |i, _| w[i % 3]);
        let gamma_t_q = gamma.transpose() * DMatrix::from_diagonal(&qbar);
        let hessian = (&gamma_t_q * &gamma + DMatrix::identity(h, h) * cfg.r) * 2.0;
        Self {
            horizon: h,
            phi,
            gamma,
            gamma_t_q,
            hessian,
        }
    }

    fn assemble(
        &self,
        cfg: &MpcConfig,
        ego: &VehicleState,
        lead: &[VehicleState],
    ) -> Result<QpProblem> {
        let h = self.horizon;
        if lead.len() != h {
            return Err(Error::InvalidArgument(format!(
                "lead forecast has {} entries, horizon is {h}",
                lead.len()
            )));
        }
        let free = &self.phi * ego.as_vector();
        // c = x_a − [d_c, 0, 0] − Φx₀ stacked, so x_opt = c − ΓU
        let c = DVector::from_fn(3 * h, |i, _| {
            let target = lead[i / 3].as_vector()[i % 3] - if i % 3 == 0 { cfg.d_c } else { 0.0 };
            target - free[i]
        });
        let qc = DVector::from_fn(3 * h, |i, _| cfg.weights()[i % 3] * c[i]);
        let speed_rows: Vec<usize> = (0..h).map(|k| 3 * k + 1).collect();
        let soft = SoftBounds {
            offset: DVector::from_iterator(h, speed_rows.iter().map(|&i| free[i])),
            map: self.gamma.select_rows(speed_rows.iter()),
            lower: cfg.v_min,
            upper: cfg.v_max_limit,
        };
        Ok(QpProblem {
            h: self.hessian.clone(),
            g: -(&self.gamma_t_q * &c) * 2.0,
            constant: c.dot(&qc),
            lb: DVector::from_element(h, cfg.u_min),
            ub: DVector::from_element(h, cfg.u_max),
            slack_weight: cfg.slack_weight,
            soft: Some(soft),
        })
    }
}

/// Condenses the horizon cost `Σ x_optᵀ Q x_opt + r u²` into a QP over the
/// input sequence. `lead` holds the predicted lead states at steps `1..=h`.
pub fn assemble_qp(
    cfg: &MpcConfig,
    model: &DiscreteModel,
    ego: &VehicleState,
    lead: &[VehicleState],
) -> Result<QpProblem> {
    cfg.validate()?;
    Prediction::new(cfg, model).assemble(cfg, ego, lead)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MpcOutput {
    pub v_mpc: f64,
    /// Optimal input sequence; only its first element affects `v_mpc`.
    pub inputs: DVector<f64>,
    pub converged: bool,
    pub kkt_residual: f64,
}

/// Target speed obtained by applying the first optimal input over the
/// lookahead time, clamped to the speed bounds.
pub fn speed_from_input(cfg: &MpcConfig, ego: &VehicleState, inputs: &DVector<f64>) -> f64 {
    (ego.v + cfg.speed_lookahead * inputs[0]).clamp(cfg.v_min, cfg.v_max_limit)
}

/// One stateless controller evaluation for a lead assumed to hold
/// acceleration `lead_accel` over the horizon.
pub fn mpc_target_speed(
    cfg: &MpcConfig,
    model: &DiscreteModel,
    ego: &VehicleState,
    lead: &VehicleState,
    lead_accel: f64,
) -> Result<MpcOutput> {
    cfg.validate()?;
    solve_cycle(
        cfg,
        &Prediction::new(cfg, model),
        model,
        ego,
        lead,
        lead_accel,
    )
}

fn solve_cycle(
    cfg: &MpcConfig,
    prediction: &Prediction,
    model: &DiscreteModel,
    ego: &VehicleState,
    lead: &VehicleState,
    lead_accel: f64,
) -> Result<MpcOutput> {
    if !ego.is_finite() || !lead.is_finite() || !lead_accel.is_finite() {
        return Err(Error::InvalidArgument("non-finite controller input".into()));
    }
    let forecast = forecast_lead(lead, lead_accel, cfg.horizon, model.dt());
    let qp = prediction.assemble(cfg, ego, &forecast)?;
    let sol = solve_qp(&qp, cfg.max_iter);
    Ok(MpcOutput {
        v_mpc: speed_from_input(cfg, ego, &sol.u),
        inputs: sol.u,
        converged: sol.converged,
        kkt_residual: sol.kkt_residual,
    })
}

/// MPC controller with cached prediction matrices and a lead-speed history
/// for estimating the lead acceleration.
#[derive(Debug, Clone)]
pub struct MpcController {
    cfg: MpcConfig,
    model: DiscreteModel,
    prediction: Prediction,
    /// Spacing of the lead speed samples (s).
    sample_dt: f64,
    history: VecDeque<f64>,
}

impl MpcController {
    /// Controller for a plant with actuator lag `tau`, called every
    /// `sample_dt` seconds.
    pub fn new(cfg: MpcConfig, tau: f64, sample_dt: f64) -> Result<Self> {
        cfg.validate()?;
        if !(sample_dt > 0.0 && sample_dt.is_finite()) {
            return Err(Error::param(
                "dt",
                format!("must be positive, got {sample_dt}"),
            ));
        }
        let model = discretize(tau, cfg.prediction_dt)?;
        let prediction = Prediction::new(&cfg, &model);
        Ok(Self {
            history: VecDeque::with_capacity(cfg.accel_window),
            cfg,
            model,
            prediction,
            sample_dt,
        })
    }

    pub fn model(&self) -> &DiscreteModel {
        &self.model
    }

    pub fn config(&self) -> &MpcConfig {
        &self.cfg
    }

    /// Records the current lead speed and returns the clamped acceleration
    /// estimate over the sliding window.
    pub fn observe_lead(&mut self, lead_speed: f64) -> AccelEstimate {
        if self.history.len() == self.cfg.accel_window {
            self.history.pop_front();
        }
        self.history.push_back(lead_speed);
        let mut est = estimate_lead_accel(self.history.make_contiguous(), self.sample_dt);
        est.accel = est.accel.clamp(self.cfg.u_min, self.cfg.u_max);
        est
    }

    /// Observes the lead and runs one control cycle.
    pub fn update(&mut self, ego: &VehicleState, lead: &VehicleState) -> Result<MpcOutput> {
        let est = self.observe_lead(lead.v);
        solve_cycle(
            &self.cfg,
            &self.prediction,
            &self.model,
            ego,
            lead,
            est.accel,
        )
    }
}
