//! Efficiency metrics and policy usage of a nominal hybrid run.

use hybridacc::metrics::evaluate;
use hybridacc::sim::{run_simulation, Controller, ScenarioConfig, SimSettings};

fn main() -> hybridacc::Result<()> {
    let sc = ScenarioConfig {
        amplitude: 9.0,
        period: 20.0,
        ..Default::default()
    };
    let trace = run_simulation(&sc, Controller::Hybrid, &SimSettings::default())?;
    let m = evaluate(&trace)?;
    println!("performance m_p = {:.4}", m.m_p);
    println!("occupancy   m_o = {:.4} 1/m", m.m_o);
    println!(
        "comfort     m_c = {:.4}{}",
        m.m_c,
        if m.comfort_capped { " (capped)" } else { "" }
    );
    println!(
        "usage: MPC {:.3}  SAFE_NOMINAL {:.3}  SAFE_MAX {:.3}",
        m.usage.mpc, m.usage.safe_nominal, m.usage.safe_max
    );
    Ok(())
}
