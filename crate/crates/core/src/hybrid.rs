//! Switch combining the MPC target, the nominal safe target and the
//! out-of-nominal speed bound into one target speed.

use std::fmt;
use std::str::FromStr;

use crate::error::Error;

/// Which candidate produced the applied target speed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Policy {
    Mpc,
    SafeNominal,
    SafeMax,
}

impl Policy {
    pub const ALL: [Policy; 3] = [Policy::Mpc, Policy::SafeNominal, Policy::SafeMax];

    pub fn as_str(self) -> &'static str {
        match self {
            Policy::Mpc => "MPC",
            Policy::SafeNominal => "SAFE_NOMINAL",
            Policy::SafeMax => "SAFE_MAX",
        }
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

impl FromStr for Policy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "MPC" => Ok(Policy::Mpc),
            "SAFE_NOMINAL" => Ok(Policy::SafeNominal),
            "SAFE_MAX" => Ok(Policy::SafeMax),
            other => Err(Error::InvalidTrace(format!(
                "unknown policy label `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwitchDecision {
    pub v_target: f64,
    pub policy: Policy,
}

/// Selects the highest candidate that does not exceed `v_max`.
///
/// Rules, in order:
/// 1. `v_safe ≤ v_mpc ≤ v_max` → `v_mpc`
/// 2. `v_mpc ≤ v_safe` → `v_safe`, limited to `v_max`
/// 3. `v_max ≤ v_mpc` → `v_max`, labeled [`Policy::SafeMax`]
pub fn switch(v_mpc: f64, v_safe: f64, v_max: f64) -> SwitchDecision {
    let v_max = v_max.max(0.0);
    if v_safe <= v_mpc && v_mpc <= v_max {
        SwitchDecision {
            v_target: v_mpc.max(0.0),
            policy: Policy::Mpc,
        }
    } else if v_mpc <= v_safe {
        SwitchDecision {
            v_target: v_safe.clamp(0.0, v_max),
            policy: Policy::SafeNominal,
        }
    } else {
        SwitchDecision {
            v_target: v_max,
            policy: Policy::SafeMax,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rule_examples() {
        assert_eq!(
            switch(12.0, 10.0, 15.0),
            SwitchDecision {
                v_target: 12.0,
                policy: Policy::Mpc
            }
        );
        assert_eq!(
            switch(8.0, 10.0, 15.0),
            SwitchDecision {
                v_target: 10.0,
                policy: Policy::SafeNominal
            }
        );
        assert_eq!(
            switch(20.0, 10.0, 15.0),
            SwitchDecision {
                v_target: 15.0,
                policy: Policy::SafeMax
            }
        );
    }

    #[test]
    fn safe_candidate_above_bound_is_clamped() {
        assert_eq!(
            switch(5.0, 18.0, 15.0),
            SwitchDecision {
                v_target: 15.0,
                policy: Policy::SafeNominal
            }
        );
    }

    #[test]
    fn ties_prefer_mpc() {
        assert_eq!(switch(10.0, 10.0, 15.0).policy, Policy::Mpc);
        assert_eq!(switch(15.0, 10.0, 15.0).policy, Policy::Mpc);
        assert_eq!(switch(15.0, 15.0, 15.0).policy, Policy::Mpc);
    }

    #[test]
    fn labels_round_trip() {
        for p in Policy::ALL {
            assert_eq!(p.as_str().parse::<Policy>().unwrap(), p);
        }
        assert!("HYBRID".parse::<Policy>().is_err());
    }

    proptest! {
        #[test]
        fn never_exceeds_bound(v_mpc in 0.0..40.0f64, v_safe in 0.0..40.0f64, v_max in 0.0..40.0f64) {
            let d = switch(v_mpc, v_safe, v_max);
            prop_assert!(d.v_target <= v_max);
            prop_assert!(d.v_target >= 0.0);
        }

        #[test]
        fn picks_highest_admissible_candidate(v_mpc in 0.0..40.0f64, v_max in 0.0..40.0f64, frac in 0.0..=1.0f64) {
            let v_safe = frac * v_max;
            let d = switch(v_mpc, v_safe, v_max);
            prop_assert_eq!(d.v_target, v_mpc.min(v_max).max(v_safe.min(v_max)));
        }

        #[test]
        fn mpc_label_iff_mpc_applied(v_mpc in 0.0..40.0f64, v_safe in 0.0..40.0f64, v_max in 0.0..40.0f64) {
            let d = switch(v_mpc, v_safe, v_max);
            prop_assert_eq!(d.policy == Policy::Mpc, d.v_target == v_mpc && v_mpc >= v_safe && v_mpc <= v_max);
        }
    }
}
