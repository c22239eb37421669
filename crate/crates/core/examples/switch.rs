//! The hybrid switch on a few candidate triples.

use hybridacc::hybrid::switch;

fn main() {
    let cases = [
        (12.0, 10.0, 15.0),
        (8.0, 10.0, 15.0),
        (20.0, 10.0, 15.0),
        (5.0, 18.0, 15.0),
    ];
    for (v_mpc, v_safe, v_max) in cases {
        let d = switch(v_mpc, v_safe, v_max);
        println!(
            "v_mpc {v_mpc:5.1}  v_safe {v_safe:5.1}  v_max {v_max:5.1}  ->  {:5.1} {}",
            d.v_target, d.policy
        );
    }
}
