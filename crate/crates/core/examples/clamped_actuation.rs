//! Clamped square actuated by a tilted Frank director, solved directly and
//! through the bundled configuration.

use std::path::Path;

use nalgebra::Vector3;
use nematoplate::grid::{BoundarySpec, Grid2};
use nematoplate::qtensor::make_frank;
use nematoplate::solver::{minimize_actuation, reflection_residual, PlateProblem};

fn main() -> nematoplate::Result<()> {
    let grid = Grid2::unit(65)?;
    let pb = PlateProblem::new(grid, BoundarySpec::clamped());
    let q = make_frank(&Vector3::new(1.0, 0.0, 1.0).normalize())?;
    let (ps, _, report) = minimize_actuation(&pb, &q, None)?;
    println!("energy          {:.10e}", report.breakdown.total);
    println!("max |zeta3|     {:.6e}", ps.zeta3.max_abs());
    println!("x2 mirror       {:.3e}", reflection_residual(&grid, &ps, 1));
    println!("monotone trace  {}", report.trace_is_monotone(1e-12));
    println!("wall time       {:?}", report.wall_time);

    let cfg = Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/clamped.cfg");
    let dir = tempfile::tempdir().expect("temporary directory");
    let local = dir.path().join("clamped.cfg");
    std::fs::copy(&cfg, &local).expect("copy config");
    let code = nematoplate::cli::run(&local);
    println!("cli exit code   {code}");
    Ok(())
}
