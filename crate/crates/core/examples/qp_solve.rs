//! Box-constrained QP solve with a KKT check.

use hybridacc::mpc::{solve_qp, QpProblem, DEFAULT_MAX_ITER};
use nalgebra::{dmatrix, dvector};

fn main() -> hybridacc::Result<()> {
    let qp = QpProblem::boxed(
        dmatrix![4.0, 1.0; 1.0, 2.0],
        dvector![-8.0, 3.0],
        dvector![-1.0, -1.0],
        dvector![1.5, 1.0],
    )?;
    let sol = solve_qp(&qp, DEFAULT_MAX_ITER);
    println!("u* = [{:.6}, {:.6}]", sol.u[0], sol.u[1]);
    println!("objective = {:.6}", qp.objective(&sol.u));
    println!(
        "iterations = {}, converged = {}",
        sol.iterations, sol.converged
    );
    println!("KKT residual = {:.3e}", sol.kkt_residual);
    Ok(())
}
