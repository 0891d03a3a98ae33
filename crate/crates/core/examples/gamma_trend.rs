//! Three-dimensional energies along recovery sequences approaching the
//! plate energies as the thickness ratio shrinks.

use nematoplate::energy2d::{PlateState, Representation};
use nematoplate::foundation::MaterialParams;
use nematoplate::grid::Grid2;
use nematoplate::limit3d::{film_recovery_trend, upper_bound_trend, UpperBoundSetup};

fn main() -> nematoplate::Result<()> {
    let plane = Grid2::unit(17)?;
    let mp = MaterialParams::default();
    let ps = PlateState::from_fns(&plane, |_, _| 0.0, |_, _| 0.0, |x, y| 0.5 * x * x * y * y - 0.2 * x * y, Representation::Interface);
    let film = film_recovery_trend(&plane, &ps, &[0.2, 0.1, 0.05, 0.025], 9, &mp)?;
    print!("film\n{}", film.to_text());
    println!("fitted order {:?}", film.fitted_order());
    let ub = upper_bound_trend(&plane, &ps, &[0.2, 0.1, 0.05], &UpperBoundSetup::default(), &mp)?;
    print!("film + laminated layer\n{}", ub.to_text());
    println!("gap strictly decreasing {}", ub.strictly_decreasing_gap());
    Ok(())
}
