//! Closed-loop car-following simulation.
//!
//! The lead follows an analytic sinusoidal speed profile, optionally
//! interrupted by a hard brake to standstill. Each step computes all three
//! candidate speeds, selects a target for the controller under test, turns
//! it into an acceleration command with a proportional speed tracker, and
//! advances the ego with the exact discrete plant. Controllers with a safe
//! layer command full braking whenever the ego exceeds `v_max`.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::dynamics::{discretize, VehicleState};
use crate::error::{Error, Result};
use crate::hybrid::{switch, Policy};
use crate::mpc::{MpcConfig, MpcController};
use crate::safe_ctrl::{SafeConfig, SafeController};

/// Brake start used by the default experiment grid (s).
pub const DEFAULT_T_BRAKE: f64 = 37.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Brake {
    /// Deceleration magnitude (m/s²).
    pub rate: f64,
    /// Time the brake starts (s).
    pub t_brake: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    /// Amplitude of the lead speed oscillation (m/s).
    pub amplitude: f64,
    /// Period of the lead speed oscillation (s).
    pub period: f64,
    /// Mean lead speed (m/s).
    pub v_a0: f64,
    pub brake: Option<Brake>,
    /// Initial gap (m).
    pub d0: f64,
    pub ego_v0: f64,
    pub t_sim: f64,
    pub dt: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            amplitude: 6.0,
            period: 10.0,
            v_a0: 12.0,
            brake: None,
            d0: 10.0,
            ego_v0: 0.0,
            t_sim: 60.0,
            dt: 0.05,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidScenario(msg));
        if !(self.amplitude >= 0.0 && self.amplitude.is_finite()) {
            return bad(format!(
                "amplitude must be non-negative, got {}",
                self.amplitude
            ));
        }
        if !(self.period > 0.0 && self.period.is_finite()) {
            return bad(format!("period must be positive, got {}", self.period));
        }
        if !(self.v_a0 >= self.amplitude && self.v_a0.is_finite()) {
            return bad(format!(
                "base speed {} below amplitude {} would reverse the lead",
                self.v_a0, self.amplitude
            ));
        }
        if !(self.d0 > 0.0 && self.d0.is_finite()) {
            return bad(format!("initial gap must be positive, got {}", self.d0));
        }
        if !(self.ego_v0 >= 0.0 && self.ego_v0.is_finite()) {
            return bad(format!(
                "initial ego speed must be non-negative, got {}",
                self.ego_v0
            ));
        }
        if !(self.t_sim > 0.0 && self.t_sim.is_finite()) {
            return bad(format!("t_sim must be positive, got {}", self.t_sim));
        }
        if !(self.dt > 0.0 && self.dt <= self.t_sim) {
            return bad(format!("dt must be in (0, t_sim], got {}", self.dt));
        }
        if let Some(b) = self.brake {
            if !(b.rate > 0.0 && b.rate.is_finite()) {
                return bad(format!("brake rate must be positive, got {}", b.rate));
            }
            if !(b.t_brake >= 0.0 && b.t_brake.is_finite()) {
                return bad(format!(
                    "brake time must be non-negative, got {}",
                    b.t_brake
                ));
            }
        }
        Ok(())
    }

    /// Number of steps; the trace has one more row than this.
    pub fn steps(&self) -> usize {
        (self.t_sim / self.dt).round() as usize
    }

    fn nominal_lead(&self, t: f64) -> VehicleState {
        let omega = 2.0 * PI / self.period;
        VehicleState::new(
            self.d0 + self.v_a0 * t + self.amplitude / omega * (1.0 - (omega * t).cos()),
            self.amplitude * (omega * t).sin() + self.v_a0,
            self.amplitude * omega * (omega * t).cos(),
        )
    }
}

/// Lead state at time `t`. The lead starts `d0` ahead of the ego.
pub fn lead_profile(t: f64, sc: &ScenarioConfig) -> VehicleState {
    match sc.brake {
        Some(b) if t >= b.t_brake => {
            let start = sc.nominal_lead(b.t_brake);
            let v0 = start.v.max(0.0);
            let elapsed = t - b.t_brake;
            let t_stop = v0 / b.rate;
            if elapsed < t_stop {
                VehicleState::new(
                    start.p + v0 * elapsed - 0.5 * b.rate * elapsed * elapsed,
                    v0 - b.rate * elapsed,
                    -b.rate,
                )
            } else {
                VehicleState::new(start.p + v0 * t_stop / 2.0, 0.0, 0.0)
            }
        }
        _ => sc.nominal_lead(t),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackerConfig {
    /// Time constant of the proportional speed law (s).
    pub t_track: f64,
    pub u_ceil: f64,
    /// Braking limit while the MPC target is applied.
    pub u_floor_mpc: f64,
    /// Braking limit while the nominal safe target is applied.
    pub u_floor_nominal: f64,
    pub u_floor_emergency: f64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            t_track: 0.5,
            u_ceil: 3.0,
            u_floor_mpc: -6.0,
            u_floor_nominal: -3.0,
            u_floor_emergency: -12.0,
        }
    }
}

/// Acceleration command steering `v_e` toward `v_target`. Emergency braking
/// authority is granted only while the `v_max` bound is applied.
pub fn speed_tracker(v_target: f64, v_e: f64, policy: Policy, cfg: &TrackerConfig) -> f64 {
    let floor = match policy {
        Policy::SafeMax => cfg.u_floor_emergency,
        Policy::Mpc => cfg.u_floor_mpc,
        Policy::SafeNominal => cfg.u_floor_nominal,
    };
    ((v_target - v_e) / cfg.t_track).clamp(floor, cfg.u_ceil)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Controller {
    Mpc,
    Safe,
    Hybrid,
}

impl Controller {
    pub const ALL: [Controller; 3] = [Controller::Mpc, Controller::Safe, Controller::Hybrid];

    pub fn as_str(self) -> &'static str {
        match self {
            Controller::Mpc => "mpc",
            Controller::Safe => "safe",
            Controller::Hybrid => "hybrid",
        }
    }
}

impl fmt::Display for Controller {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

impl FromStr for Controller {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mpc" => Ok(Controller::Mpc),
            "safe" => Ok(Controller::Safe),
            "hybrid" => Ok(Controller::Hybrid),
            other => Err(Error::InvalidArgument(format!(
                "unknown controller `{other}`"
            ))),
        }
    }
}

/// Everything except the scenario that a run depends on.
#[derive(Debug, Clone, PartialEq)]
pub struct SimSettings {
    pub mpc: MpcConfig,
    pub safe: SafeConfig,
    pub tracker: TrackerConfig,
    /// Actuator lag of the ego plant, shared with the MPC model (s).
    pub tau: f64,
    /// Gap at which a collision is declared (m).
    pub vehicle_length: f64,
}

impl Default for SimSettings {
    fn default() -> Self {
        Self {
            mpc: MpcConfig::default(),
            safe: SafeConfig::default(),
            tracker: TrackerConfig::default(),
            tau: 0.3,
            vehicle_length: 0.0,
        }
    }
}

impl SimSettings {
    pub fn validate(&self) -> Result<()> {
        self.mpc.validate()?;
        self.safe.validate()?;
        let t = &self.tracker;
        if !(t.t_track > 0.0) {
            return Err(Error::param("t_track", "must be positive"));
        }
        let floors_ok = [t.u_floor_mpc, t.u_floor_nominal]
            .iter()
            .all(|&f| t.u_floor_emergency <= f && f < 0.0);
        if !(floors_ok && t.u_ceil > 0.0) {
            return Err(Error::param(
                "tracker",
                "need u_floor_emergency ≤ u_floor_mpc, u_floor_nominal < 0 < u_ceil",
            ));
        }
        if !(self.vehicle_length >= 0.0) {
            return Err(Error::param("vehicle_length", "must be non-negative"));
        }
        if !(self.tau > 0.0) {
            return Err(Error::param("tau", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub t: f64,
    pub p_e: f64,
    pub v_e: f64,
    pub a_e: f64,
    pub u_cmd: f64,
    pub p_a: f64,
    pub v_a: f64,
    pub d: f64,
    pub v_mpc: f64,
    pub v_safe: f64,
    pub v_max: f64,
    pub policy: Policy,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationTrace {
    pub dt: f64,
    pub rows: Vec<TraceRow>,
    pub collision: Option<f64>,
    /// Gap threshold used for collision detection (m).
    pub vehicle_length: f64,
    /// Largest QP KKT residual over all MPC cycles.
    pub max_kkt_residual: f64,
    /// MPC cycles that hit the solver iteration cap.
    pub unconverged_cycles: usize,
}

impl SimulationTrace {
    pub fn min_gap(&self) -> f64 {
        self.rows.iter().map(|r| r.d).fold(f64::INFINITY, f64::min)
    }
}

/// Runs one scenario against one controller. Stops at the first collision.
pub fn run_simulation(
    sc: &ScenarioConfig,
    controller: Controller,
    settings: &SimSettings,
) -> Result<SimulationTrace> {
    sc.validate()?;
    settings.validate()?;
    let model = discretize(settings.tau, sc.dt)?;
    let mut mpc = MpcController::new(settings.mpc.clone(), settings.tau, sc.dt)?;
    let mut safe = SafeController::new(settings.safe.clone())?;

    let steps = sc.steps();
    let mut rows = Vec::with_capacity(steps + 1);
    let mut ego = VehicleState::new(0.0, sc.ego_v0, 0.0);
    let mut collision = None;
    let mut max_kkt_residual: f64 = 0.0;
    let mut unconverged_cycles = 0;

    for k in 0..=steps {
        let t = k as f64 * sc.dt;
        let lead = lead_profile(t, sc);
        let d = lead.p - ego.p;
        let gap = d - settings.vehicle_length;

        let out = mpc.update(&ego, &lead)?;
        max_kkt_residual = max_kkt_residual.max(out.kkt_residual);
        if !out.converged {
            unconverged_cycles += 1;
        }
        let targets = safe.step(gap.max(0.0), ego.v, lead.v);
        let (v_safe, v_max) = (targets.v_safe, targets.v_max);

        let (v_target, policy) = match controller {
            Controller::Mpc => (out.v_mpc, Policy::Mpc),
            Controller::Safe => (v_safe, Policy::SafeNominal),
            Controller::Hybrid => {
                let dec = switch(out.v_mpc, v_safe, v_max);
                (dec.v_target, dec.policy)
            }
        };
        // above the bound the safe layer overrides with full braking
        let emergency = controller != Controller::Mpc && ego.v > v_max;
        let (u_cmd, policy) = if emergency {
            (settings.tracker.u_floor_emergency, Policy::SafeMax)
        } else {
            (
                speed_tracker(v_target, ego.v, policy, &settings.tracker),
                policy,
            )
        };

        rows.push(TraceRow {
            t,
            p_e: ego.p,
            v_e: ego.v,
            a_e: ego.a,
            u_cmd,
            p_a: lead.p,
            v_a: lead.v,
            d,
            v_mpc: out.v_mpc,
            v_safe,
            v_max,
            policy,
        });
        if gap <= 0.0 {
            collision = Some(t);
            break;
        }
        ego = advance(&model, &ego, u_cmd);
    }

    Ok(SimulationTrace {
        dt: sc.dt,
        rows,
        collision,
        vehicle_length: settings.vehicle_length,
        max_kkt_residual,
        unconverged_cycles,
    })
}

/// Plant step that holds the vehicle at standstill instead of reversing.
pub fn advance(model: &crate::dynamics::DiscreteModel, ego: &VehicleState, u: f64) -> VehicleState {
    let next = model.step(ego, u);
    if next.v < 0.0 {
        VehicleState::new(next.p.max(ego.p), 0.0, 0.0)
    } else {
        next
    }
}

/// Earliest logged time at which the gap closes.
pub fn detect_collision(trace: &SimulationTrace) -> Option<f64> {
    trace
        .rows
        .iter()
        .find(|r| r.d - trace.vehicle_length <= 0.0)
        .map(|r| r.t)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows_with_gaps(gaps: &[f64], dt: f64) -> SimulationTrace {
        let rows = gaps
            .iter()
            .enumerate()
            .map(|(k, &d)| TraceRow {
                t: k as f64 * dt,
                p_e: 0.0,
                v_e: 0.0,
                a_e: 0.0,
                u_cmd: 0.0,
                p_a: d,
                v_a: 0.0,
                d,
                v_mpc: 0.0,
                v_safe: 0.0,
                v_max: 0.0,
                policy: Policy::Mpc,
            })
            .collect();
        SimulationTrace {
            dt,
            rows,
            collision: None,
            vehicle_length: 0.0,
            max_kkt_residual: 0.0,
            unconverged_cycles: 0,
        }
    }

    #[test]
    fn lead_profile_examples() {
        let sc = ScenarioConfig::default();
        let start = lead_profile(0.0, &sc);
        assert_eq!(start.v, 12.0);
        assert_eq!(start.p, 10.0);
        let peak = lead_profile(2.5, &sc);
        assert!((peak.v - 18.0).abs() < 1e-12);
        assert!(peak.a.abs() < 1e-12);
    }

    #[test]
    fn brake_stops_the_lead() {
        let sc = ScenarioConfig {
            amplitude: 0.0,
            brake: Some(Brake {
                rate: 12.0,
                t_brake: 5.0,
            }),
            ..ScenarioConfig::default()
        };
        let at_brake = lead_profile(5.0, &sc);
        assert_eq!(at_brake.v, 12.0);
        assert_eq!(at_brake.a, -12.0);
        let later = lead_profile(6.0, &sc);
        assert_eq!(later.v, 0.0);
        assert!((later.p - at_brake.p - 6.0).abs() < 1e-12);
        let much_later = lead_profile(30.0, &sc);
        assert_eq!(much_later, later);
        let mid = lead_profile(5.5, &sc);
        assert!((mid.v - 6.0).abs() < 1e-12);
    }

    #[test]
    fn tracker_examples() {
        let cfg = TrackerConfig::default();
        assert_eq!(speed_tracker(10.0, 10.0, Policy::Mpc, &cfg), 0.0);
        assert_eq!(speed_tracker(12.0, 10.0, Policy::Mpc, &cfg), 3.0);
        assert_eq!(speed_tracker(0.0, 12.0, Policy::SafeMax, &cfg), -12.0);
        assert_eq!(speed_tracker(0.0, 12.0, Policy::SafeNominal, &cfg), -3.0);
        assert_eq!(speed_tracker(0.0, 12.0, Policy::Mpc, &cfg), -6.0);
        assert_eq!(speed_tracker(11.0, 12.0, Policy::SafeMax, &cfg), -2.0);
    }

    #[test]
    fn collision_detection_examples() {
        let dt = 0.05;
        let n = 1201;
        let gaps: Vec<f64> = (0..n).map(|k| 10.0 - 0.25 * (k as f64 * dt)).collect();
        let t = detect_collision(&rows_with_gaps(&gaps, dt)).unwrap();
        assert!((t - 40.0).abs() < 1e-9);
        assert_eq!(detect_collision(&rows_with_gaps(&[0.5; 10], dt)), None);
        assert_eq!(
            detect_collision(&rows_with_gaps(&[3.0, 1.0, 0.0, 1.0], dt)),
            Some(0.1)
        );
    }

    #[test]
    fn invalid_scenarios_are_rejected() {
        let settings = SimSettings::default();
        for sc in [
            ScenarioConfig {
                amplitude: 13.0,
                ..Default::default()
            },
            ScenarioConfig {
                period: 0.0,
                ..Default::default()
            },
            ScenarioConfig {
                d0: 0.0,
                ..Default::default()
            },
            ScenarioConfig {
                t_sim: -1.0,
                ..Default::default()
            },
            ScenarioConfig {
                brake: Some(Brake {
                    rate: 0.0,
                    t_brake: 1.0,
                }),
                ..Default::default()
            },
        ] {
            assert!(matches!(
                run_simulation(&sc, Controller::Safe, &settings),
                Err(Error::InvalidScenario(_))
            ));
        }
    }

    #[test]
    fn controller_names_round_trip() {
        for c in Controller::ALL {
            assert_eq!(c.as_str().parse::<Controller>().unwrap(), c);
        }
        assert!("all".parse::<Controller>().is_err());
    }

    #[test]
    fn standstill_is_held() {
        let model = discretize(0.3, 0.05).unwrap();
        let next = advance(&model, &VehicleState::new(5.0, 0.1, -6.0), -3.0);
        assert_eq!(next.v, 0.0);
        assert_eq!(next.a, 0.0);
        assert!(next.p >= 5.0);
    }

    #[test]
    fn mpc_holds_the_reference_gap() {
        let sc = ScenarioConfig {
            amplitude: 0.0,
            d0: 20.0,
            ego_v0: 12.0,
            ..Default::default()
        };
        let trace = run_simulation(&sc, Controller::Mpc, &SimSettings::default()).unwrap();
        assert!(trace.collision.is_none());
        for r in trace.rows.iter().filter(|r| r.t >= 10.0) {
            assert!((15.0..=25.0).contains(&r.d), "gap {} at t = {}", r.d, r.t);
        }
    }

    #[test]
    fn trace_follows_plant_and_lead() {
        let sc = ScenarioConfig {
            brake: Some(Brake {
                rate: 8.0,
                t_brake: 20.0,
            }),
            ..Default::default()
        };
        let settings = SimSettings::default();
        let model = discretize(settings.tau, sc.dt).unwrap();
        for c in Controller::ALL {
            let trace = run_simulation(&sc, c, &settings).unwrap();
            for w in trace.rows.windows(2) {
                let ego = VehicleState::new(w[0].p_e, w[0].v_e, w[0].a_e);
                let next = advance(&model, &ego, w[0].u_cmd);
                assert!((next.p - w[1].p_e).abs() < 1e-9);
                assert!((next.v - w[1].v_e).abs() < 1e-9);
            }
            for r in &trace.rows {
                let lead = lead_profile(r.t, &sc);
                assert_eq!((lead.p, lead.v), (r.p_a, r.v_a));
                assert!((r.d - (r.p_a - r.p_e)).abs() < 1e-12);
            }
            assert_eq!(detect_collision(&trace), trace.collision);
        }
    }

    #[test]
    fn runs_are_deterministic() {
        let sc = ScenarioConfig {
            amplitude: 9.0,
            period: 20.0,
            ..Default::default()
        };
        let settings = SimSettings::default();
        for c in Controller::ALL {
            let a = run_simulation(&sc, c, &settings).unwrap();
            let b = run_simulation(&sc, c, &settings).unwrap();
            assert_eq!(a, b);
        }
    }
}
