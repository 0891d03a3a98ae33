//! Min-max equilibrium: the plate and the order tensor minimise the
//! energy while the potential maximises it.

use nematoplate::gauss2d::BoundaryData;
use nematoplate::grid::{BoundarySpec, Grid2};
use nematoplate::solver::{minmax_certificate, solve_minmax, MinMaxOptions, PlateProblem};

fn main() -> nematoplate::Result<()> {
    let grid = Grid2::new(13, 9, 1.0, 0.6)?;
    let pb = PlateProblem::new(grid, BoundarySpec::clamped());
    let phi0 = BoundaryData::affine(0.0, [1.0, 0.0]);
    let res = solve_minmax(&pb, Some(&phi0), &MinMaxOptions::default())?;
    println!("optimal Q entries {:?}", res.qbar.entries());
    println!("energy            {:.10e}", res.report.breakdown.total);
    for b in &res.basins {
        println!("  basin from start {:2}: value {:.10e}", b.start, b.value);
    }
    let (dg, di) = minmax_certificate(&pb, Some(&phi0), &res)?;
    println!("certificate: gauss change {dg:.2e}, inner change {di:.2e}");
    Ok(())
}
