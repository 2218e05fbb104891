//! Solves a small box- and inequality-constrained QP and prints the
//! solution with its multipliers.

use nalgebra::{dmatrix, dvector};
use wholebody::qp::{solve, QpProblem, SolverSettings};

fn main() -> wholebody::Result<()> {
    // minimize (x - 1)^2 + (y - 2)^2  s.t.  x + y = 2,  x - y <= 0.5,  0 <= x, y <= 1.5
    let problem = QpProblem::new(dmatrix![2.0, 0.0; 0.0, 2.0], dvector![-2.0, -4.0])
        .with_equality(dmatrix![1.0, 1.0], dvector![2.0])
        .with_inequality(dmatrix![1.0, -1.0], dvector![0.5])
        .with_bounds(dvector![0.0, 0.0], dvector![1.5, 1.5]);
    let sol = solve(&problem, &SolverSettings::default())?;
    println!("status      {:?} after {} iterations", sol.status, sol.iterations);
    println!("x           {:?}", sol.x.as_slice());
    println!("equality    {:?}", sol.eq_multipliers.as_slice());
    println!("inequality  {:?}", sol.ineq_multipliers.as_slice());
    println!("residuals   primal {:.2e}  dual {:.2e}", sol.primal_residual, sol.dual_residual);
    Ok(())
}
