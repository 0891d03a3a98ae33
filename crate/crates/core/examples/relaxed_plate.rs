//! Relaxed nematic foundation under a uniform transverse load, thin and
//! thick regimes.

use nematoplate::energy2d::Loads;
use nematoplate::foundation::Regime;
use nematoplate::grid::{BoundarySpec, Grid2};
use nematoplate::solver::{minimize_relaxed, PlateProblem};

fn main() -> nematoplate::Result<()> {
    let grid = Grid2::unit(33)?;
    let loads = Loads::transverse(&grid, |_, _| 0.5);
    for regime in [Regime::Thin, Regime::Thick] {
        let mut pb = PlateProblem::new(grid, BoundarySpec::clamped());
        pb.regime = regime;
        let (ps, r) = minimize_relaxed(&pb, &loads)?;
        println!(
            "{:5}  energy {:.8e}  max|zeta3| {:.4e}  iterations {}  converged {}",
            regime.name(),
            r.breakdown.total,
            ps.zeta3.max_abs(),
            r.iterations,
            r.converged
        );
    }
    Ok(())
}
