//! Efficiency metrics of a finished run.
//!
//! All time integrals use the trapezoidal rule over the logged rows.

use crate::error::{Error, Result};
use crate::hybrid::Policy;
use crate::sim::{SimulationTrace, TraceRow};

/// Lower limit applied to the acceleration variance before inversion.
pub const VARIANCE_FLOOR: f64 = 1e-9;
/// Comfort reported when the variance is below [`VARIANCE_FLOOR`].
pub const COMFORT_CAP: f64 = 1e9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Comfort {
    pub value: f64,
    /// The variance was below [`VARIANCE_FLOOR`]; `value` is the cap.
    pub capped: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PolicyUsage {
    pub mpc: f64,
    pub safe_nominal: f64,
    pub safe_max: f64,
}

impl PolicyUsage {
    pub fn get(&self, policy: Policy) -> f64 {
        match policy {
            Policy::Mpc => self.mpc,
            Policy::SafeNominal => self.safe_nominal,
            Policy::SafeMax => self.safe_max,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EfficiencyMetrics {
    pub m_p: f64,
    pub m_o: f64,
    pub m_c: f64,
    pub comfort_capped: bool,
    pub usage: PolicyUsage,
}

fn integrate(rows: &[TraceRow], f: impl Fn(&TraceRow) -> f64) -> f64 {
    rows.windows(2)
        .map(|w| 0.5 * (f(&w[0]) + f(&w[1])) * (w[1].t - w[0].t))
        .sum()
}

fn duration(rows: &[TraceRow]) -> f64 {
    match (rows.first(), rows.last()) {
        (Some(a), Some(b)) => b.t - a.t,
        _ => 0.0,
    }
}

fn time_mean(rows: &[TraceRow], f: impl Fn(&TraceRow) -> f64) -> f64 {
    let span = duration(rows);
    if span > 0.0 {
        integrate(rows, f) / span
    } else {
        f(&rows[0])
    }
}

fn non_empty(trace: &SimulationTrace) -> Result<&[TraceRow]> {
    if trace.rows.is_empty() {
        Err(Error::InvalidTrace("trace has no rows".into()))
    } else {
        Ok(&trace.rows)
    }
}

/// Ratio of the ego speed integral to the lead speed integral.
pub fn performance(trace: &SimulationTrace) -> Result<f64> {
    let rows = non_empty(trace)?;
    let lead = integrate(rows, |r| r.v_a);
    if !(lead > 0.0) {
        return Err(Error::UndefinedMetric("lead speed integral is zero"));
    }
    Ok(integrate(rows, |r| r.v_e) / lead)
}

/// Time average of the inverse gap.
pub fn occupancy(trace: &SimulationTrace) -> Result<f64> {
    let rows = non_empty(trace)?;
    if rows.iter().any(|r| r.d <= 0.0) {
        return Err(Error::UndefinedMetric("gap closes, occupancy is unbounded"));
    }
    Ok(time_mean(rows, |r| 1.0 / r.d))
}

/// Inverse of the time variance of the ego acceleration.
pub fn comfort(trace: &SimulationTrace) -> Result<Comfort> {
    let rows = non_empty(trace)?;
    let mean = time_mean(rows, |r| r.a_e);
    let variance = time_mean(rows, |r| (r.a_e - mean) * (r.a_e - mean));
    Ok(if variance < VARIANCE_FLOOR {
        Comfort {
            value: COMFORT_CAP,
            capped: true,
        }
    } else {
        Comfort {
            value: 1.0 / variance,
            capped: false,
        }
    })
}

/// Fraction of control cycles spent under each policy.
pub fn policy_usage(trace: &SimulationTrace) -> Result<PolicyUsage> {
    let rows = non_empty(trace)?;
    let n = rows.len() as f64;
    let count = |p: Policy| rows.iter().filter(|r| r.policy == p).count() as f64 / n;
    Ok(PolicyUsage {
        mpc: count(Policy::Mpc),
        safe_nominal: count(Policy::SafeNominal),
        safe_max: count(Policy::SafeMax),
    })
}

/// All metrics of a collision-free run.
pub fn evaluate(trace: &SimulationTrace) -> Result<EfficiencyMetrics> {
    if trace.collision.is_some() {
        return Err(Error::UndefinedMetric("run ended in a collision"));
    }
    let c = comfort(trace)?;
    Ok(EfficiencyMetrics {
        m_p: performance(trace)?,
        m_o: occupancy(trace)?,
        m_c: c.value,
        comfort_capped: c.capped,
        usage: policy_usage(trace)?,
    })
}
