//! A box- and ball-constrained quadratic program solved with the operator
//! splitting solver.

use nalgebra::{DMatrix, DVector};
use nalgebra_sparse::{CooMatrix, CsrMatrix};
use orbitfacet::trajopt::{solve_qp, BallBlock, QpProblem, QpSettings};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // minimize ½‖x − c‖² subject to 0 ≤ x₀ + x₁ ≤ 1 and ‖(x₂, x₃)‖ ≤ 0.5
    let c = DVector::from_vec(vec![2.0, 1.0, 1.0, -1.0]);
    let mut coo = CooMatrix::new(3, 4);
    coo.push(0, 0, 1.0);
    coo.push(0, 1, 1.0);
    coo.push(1, 2, 1.0);
    coo.push(2, 3, 1.0);
    let prob = QpProblem {
        p: DMatrix::identity(4, 4),
        q: -&c,
        a: CsrMatrix::from(&coo),
        l: DVector::from_vec(vec![0.0, 0.0, 0.0]),
        u: DVector::from_vec(vec![1.0, 0.0, 0.0]),
        balls: vec![BallBlock {
            start: 1,
            dim: 2,
            radius: 0.5,
        }],
    };
    let sol = solve_qp(&prob, &QpSettings::default())?;
    let r = &sol.report;
    println!(
        "status {:?} after {} iterations (polished {})",
        r.status, r.iterations, r.polished
    );
    println!("x = {:.6?}", sol.x.as_slice());
    println!(
        "objective {:.9}, residuals {:.1e} / {:.1e}",
        r.objective, r.primal_residual, r.dual_residual
    );
    println!(
        "expected x = [1, 0, {:.6}, {:.6}]",
        0.5f64.sqrt() / 2.0,
        -(0.5f64.sqrt()) / 2.0
    );
    Ok(())
}
