//! Braking and climbing bounds of the speed levels, and the automaton
//! walking up as the gap opens.

use hybridacc::safe_ctrl::{compute_bounds, SafeConfig, SafeController};

fn main() -> hybridacc::Result<()> {
    let cfg = SafeConfig::default();
    let table = compute_bounds(&cfg)?;
    println!("level  v_i   B_i      D_i");
    for (i, v) in cfg.levels.iter().enumerate() {
        println!(
            "{i:5}  {v:4}  {:7.3}  {:7.3}",
            table.braking[i], table.climbing[i]
        );
    }

    let mut ctrl = SafeController::new(cfg)?;
    for d in [2.0, 6.0, 15.0, 30.0, 60.0, 120.0, 10.0] {
        let t = ctrl.step(d, 12.0, 12.0);
        println!(
            "d = {d:5.1} m  level {}  v_safe = {:6.3}  v_max = {:6.3}",
            ctrl.level(),
            t.v_safe,
            t.v_max
        );
    }
    Ok(())
}
