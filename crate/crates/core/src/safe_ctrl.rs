//! Level-based safe speed controller.
//!
//! Speeds are quantized into increasing levels `v_0 = 0 < v_1 < … < v_n`.
//! For every level the controller precomputes the distance needed to brake
//! from it to a stop (`B_i`) and the distance needed to climb to it from the
//! level below and then brake (`D_i`). An automaton over the levels moves up
//! one level when the gap reaches `D_{i+1}` and down one level when it falls
//! to `B_i`, so the gap always covers the braking distance of the current
//! level.
//!
//! The nominal target `v_safe` runs the automaton on the relative speed
//! `v_e − v_a` with the moderate rate `a_nom` and is capped by the
//! out-of-nominal bound `v_max`: the highest speed from which the ego can
//! stop within the current gap braking at `a_max` after a reaction time
//! covering the actuator lag.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SafeConfig {
    pub levels: Vec<f64>,
    pub a_nom: f64,
    pub a_max: f64,
    /// Delay before full braking takes effect (s). Zero gives the
    /// constant-rate bound `√(2 a_max d)`.
    pub reaction_time: f64,
}

impl Default for SafeConfig {
    fn default() -> Self {
        Self {
            levels: (0..=8).map(|i| 4.0 * i as f64).collect(),
            a_nom: 3.0,
            a_max: 12.0,
            reaction_time: 0.35,
        }
    }
}

impl SafeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.levels.len() < 2 {
            return Err(Error::param("levels", "need at least two levels"));
        }
        if self.levels[0] != 0.0 {
            return Err(Error::param("levels", "first level must be 0"));
        }
        if !self.levels.windows(2).all(|w| w[0] < w[1])
            || !self.levels.iter().all(|v| v.is_finite())
        {
            return Err(Error::param(
                "levels",
                "must be finite and strictly increasing",
            ));
        }
        if !(self.a_nom > 0.0) {
            return Err(Error::param("a_nom", "must be positive"));
        }
        if !(self.a_max > self.a_nom && self.a_max.is_finite()) {
            return Err(Error::param("a_max", "must exceed a_nom"));
        }
        if !(self.reaction_time >= 0.0 && self.reaction_time.is_finite()) {
            return Err(Error::param("reaction_time", "must be non-negative"));
        }
        Ok(())
    }

    pub fn top_speed(&self) -> f64 {
        *self.levels.last().expect("validated levels")
    }
}

/// Distance covered braking from `v` down to `v_target` at constant `rate`.
pub fn brake_distance(v: f64, v_target: f64, rate: f64) -> Result<f64> {
    if !(rate > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "braking rate must be positive, got {rate}"
        )));
    }
    if !(v >= v_target && v_target >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "cannot brake from {v} m/s to {v_target} m/s"
        )));
    }
    Ok((v * v - v_target * v_target) / (2.0 * rate))
}

/// Distance covered accelerating from `v` up to `v_target` at constant `rate`.
pub fn accel_distance(v: f64, v_target: f64, rate: f64) -> Result<f64> {
    if !(rate > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "acceleration rate must be positive, got {rate}"
        )));
    }
    if !(v_target >= v && v >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "cannot accelerate from {v} m/s to {v_target} m/s"
        )));
    }
    Ok((v_target * v_target - v * v) / (2.0 * rate))
}

/// Highest speed from which braking at `a_max` stops within `d`.
pub fn v_max_speed(d: f64, a_max: f64) -> f64 {
    (2.0 * a_max * d.max(0.0)).sqrt()
}

/// Highest speed `v` with `v·t_r + v²/(2 a_max) ≤ d`: coasting for the
/// reaction time `t_r`, then braking at `a_max`, stops within `d`.
pub fn v_max_with_reaction(d: f64, a_max: f64, t_r: f64) -> f64 {
    let d = d.max(0.0);
    if t_r == 0.0 {
        return v_max_speed(d, a_max);
    }
    // rationalized root of v² + 2 a t_r v − 2 a d = 0, stable for small d
    2.0 * a_max * d / (a_max * t_r + (a_max * a_max * t_r * t_r + 2.0 * a_max * d).sqrt())
}

/// Per-level braking bounds `B_i` and climbing bounds `D_i` (m).
#[derive(Debug, Clone, PartialEq)]
pub struct SafeTable {
    pub braking: Vec<f64>,
    /// `climbing[0]` has no meaning and is stored as 0.
    pub climbing: Vec<f64>,
}

impl SafeTable {
    /// Index of the top level.
    pub fn top(&self) -> usize {
        self.braking.len() - 1
    }
}

pub fn compute_bounds(cfg: &SafeConfig) -> Result<SafeTable> {
    cfg.validate()?;
    let braking = cfg
        .levels
        .iter()
        .map(|&v| brake_distance(v, 0.0, cfg.a_nom))
        .collect::<Result<Vec<_>>>()?;
    let mut climbing = vec![0.0; cfg.levels.len()];
    for i in 1..cfg.levels.len() {
        climbing[i] = accel_distance(cfg.levels[i - 1], cfg.levels[i], cfg.a_nom)? + braking[i];
    }
    Ok(SafeTable { braking, climbing })
}

/// One automaton transition from `level` for gap `d`.
pub fn control(d: f64, level: usize, table: &SafeTable) -> usize {
    let top = table.top();
    let level = level.min(top);
    if level < top && d >= table.climbing[level + 1] {
        level + 1
    } else if level > 0 && d <= table.braking[level] {
        level - 1
    } else {
        level
    }
}

/// Largest level index whose speed does not exceed `v`.
pub fn floor_level(levels: &[f64], v: f64) -> usize {
    levels.iter().rposition(|&l| l <= v.max(0.0)).unwrap_or(0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SafeTargets {
    /// `v_a + v_level`, limited to `[0, v_n]`.
    pub nominal: f64,
    /// `nominal` capped at `v_max`.
    pub v_safe: f64,
    pub v_max: f64,
}

/// The relative-speed automaton together with its current level.
#[derive(Debug, Clone)]
pub struct SafeController {
    cfg: SafeConfig,
    table: SafeTable,
    level: usize,
}

impl SafeController {
    pub fn new(cfg: SafeConfig) -> Result<Self> {
        let table = compute_bounds(&cfg)?;
        Ok(Self {
            cfg,
            table,
            level: 0,
        })
    }

    pub fn config(&self) -> &SafeConfig {
        &self.cfg
    }

    pub fn table(&self) -> &SafeTable {
        &self.table
    }

    pub fn level(&self) -> usize {
        self.level
    }

    /// Advances the automaton and returns both targets for this cycle.
    ///
    /// The stored level is raised to the measured relative speed first when
    /// the ego is faster than the level accounts for. A stored level above
    /// the measured relative speed is kept: its braking bound already covers
    /// the slower approach, and the distance rule lowers it when needed.
    pub fn step(&mut self, d: f64, v_e: f64, v_a: f64) -> SafeTargets {
        let measured = floor_level(&self.cfg.levels, v_e - v_a);
        let current = self.level.max(measured);
        self.level = control(d, current, &self.table);
        let nominal = (v_a + self.cfg.levels[self.level]).clamp(0.0, self.cfg.top_speed());
        let v_max = self.v_max(d);
        SafeTargets {
            nominal,
            v_safe: nominal.min(v_max),
            v_max,
        }
    }

    /// [`SafeController::step`] reduced to the capped target.
    pub fn v_safe(&mut self, d: f64, v_e: f64, v_a: f64) -> f64 {
        self.step(d, v_e, v_a).v_safe
    }

    pub fn v_max(&self, d: f64) -> f64 {
        v_max_with_reaction(d, self.cfg.a_max, self.cfg.reaction_time)
    }
}
