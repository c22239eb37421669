//! One closed-loop run per controller behind a hard-braking lead.

use hybridacc::metrics::evaluate;
use hybridacc::sim::{run_simulation, Brake, Controller, ScenarioConfig, SimSettings};

fn main() -> hybridacc::Result<()> {
    let sc = ScenarioConfig {
        amplitude: 12.0,
        period: 30.0,
        brake: Some(Brake {
            rate: 12.0,
            t_brake: 37.5,
        }),
        ..Default::default()
    };
    let settings = SimSettings::default();
    for c in Controller::ALL {
        let trace = run_simulation(&sc, c, &settings)?;
        match trace.collision {
            Some(t) => println!("{c:6}: collision at t = {t:.2} s"),
            None => {
                let m = evaluate(&trace)?;
                println!(
                    "{c:6}: min gap {:.2} m, m_p {:.3}, m_o {:.4}, m_c {:.3}",
                    trace.min_gap(),
                    m.m_p,
                    m.m_o,
                    m.m_c
                );
            }
        }
    }
    Ok(())
}
