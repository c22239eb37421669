//! One MPC cycle: the ego is closing on a slower lead.

use hybridacc::dynamics::{discretize, VehicleState};
use hybridacc::mpc::{mpc_target_speed, MpcConfig};

fn main() -> hybridacc::Result<()> {
    let cfg = MpcConfig::default();
    let model = discretize(0.3, cfg.prediction_dt)?;
    let ego = VehicleState::new(0.0, 15.0, 0.0);
    for gap in [10.0, 20.0, 30.0] {
        let lead = VehicleState::new(gap, 12.0, 0.0);
        let out = mpc_target_speed(&cfg, &model, &ego, &lead, 0.0)?;
        println!(
            "gap {gap:4.1} m: u*(1) = {:6.3} m/s², v_mpc = {:6.3} m/s, KKT {:.1e}",
            out.inputs[0], out.v_mpc, out.kkt_residual
        );
    }
    Ok(())
}
