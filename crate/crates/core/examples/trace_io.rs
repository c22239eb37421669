//! Saves a trace to CSV and reads it back.

use hybridacc::report::{load_trace, save_trace};
use hybridacc::sim::{run_simulation, Controller, ScenarioConfig, SimSettings};

fn main() -> hybridacc::Result<()> {
    let trace = run_simulation(
        &ScenarioConfig::default(),
        Controller::Safe,
        &SimSettings::default(),
    )?;
    let path = std::env::temp_dir().join("hybridacc_trace_io.csv");
    save_trace(&path, &trace)?;
    let back = load_trace(&path)?;
    println!("wrote {} rows to {}", trace.rows.len(), path.display());
    println!(
        "read back {} rows, collision {:?}",
        back.rows.len(),
        back.collision
    );
    let last = back.rows.last().expect("non-empty trace");
    println!(
        "last row: t = {} v_e = {} d = {} policy {}",
        last.t, last.v_e, last.d, last.policy
    );
    std::fs::remove_file(&path).map_err(|e| hybridacc::Error::Io { path, source: e })?;
    Ok(())
}
