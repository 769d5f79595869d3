//! Smooth unit-speed solutions along a line field, and the orbit-mean
//! obstruction that appears when a chart cuts across the flow.

use convint::expr::Expr;
use convint::smooth_solver::{
    formal_solution_beta, invert_along_flow, solve_unit_speed, solve_with, FlowInversion, LineFieldProblem,
};

fn main() -> convint::Result<()> {
    for c in [0.6, 0.9] {
        let problem = LineFieldProblem::circle(c, [16, 16])?;
        let s = solve_unit_speed(&problem)?;
        println!("c = {c}");
        println!("  f = ({}, {})", s.map.base()[0], s.map.base()[1]);
        println!("  | |Xf|^2 - 1 | <= {:.2e}, |X alpha - beta| <= {:.2e}", s.unit_speed_residual, s.flow_residual);
    }

    let problem = LineFieldProblem::circle(0.6, [16, 16])?;
    let across = solve_with(&problem, &FlowInversion::two_chart(0, [16, 16]))?;
    println!("charts transverse to the flow: residual {:.2e}", across.unit_speed_residual);
    match solve_with(&problem, &FlowInversion::two_chart(1, [16, 16])) {
        Ok(_) => println!("charts along the flow: solved"),
        Err(e) => println!("charts along the flow: {e}"),
    }

    let beta = formal_solution_beta(&problem);
    println!("beta = ({}, {})", beta[0], beta[1]);
    let constant = [Expr::constant(1.0), Expr::constant(0.0)];
    if let Err(e) = invert_along_flow(&constant, &problem.flow, &FlowInversion::global([16, 16])) {
        println!("constant right-hand side: {e}");
    }
    Ok(())
}
