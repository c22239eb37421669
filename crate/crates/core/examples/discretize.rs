//! Exact zero-order-hold model of the lagged vehicle, stepped under a held command.

use hybridacc::dynamics::{discretize, VehicleState};

fn main() -> hybridacc::Result<()> {
    let model = discretize(0.3, 0.05)?;
    println!("A_d = {}", model.a_d());
    println!("B_d = {}", model.b_d());

    let mut x = VehicleState::new(0.0, 10.0, 0.0);
    for k in 1..=20 {
        x = model.step(&x, 2.0);
        if k % 5 == 0 {
            println!(
                "t = {:.2} s  p = {:7.3} m  v = {:6.3} m/s  a = {:5.3} m/s²",
                k as f64 * 0.05,
                x.p,
                x.v,
                x.a
            );
        }
    }
    Ok(())
}
