//! Reduced Gauss law with the Schur-complement dielectric compared with the
//! rescaled three-dimensional Gauss law.

use nalgebra::Vector3;
use nematoplate::dielectric::{c_star, d_tensor, schur_b, DielectricParams};
use nematoplate::gauss2d::{electrostatic_work, solve_gauss, BoundaryData, GaussProblem};
use nematoplate::grid::{BoundarySpec, Grid2};
use nematoplate::limit3d::{gauss3d_desk, Grid3};
use nematoplate::qtensor::make_frank;

fn main() -> nematoplate::Result<()> {
    let dp = DielectricParams::default();
    let q = make_frank(&Vector3::new(1.0, 0.0, 1.0).normalize())?;
    let d = d_tensor(&q, &dp)?;
    let b = schur_b(&d)?;
    println!("B = {:?}", b.b);
    let plane = Grid2::unit(17)?;
    let gp = GaussProblem { b, phi0: BoundaryData::affine(0.0, [1.0, 0.0]), bc: BoundarySpec::clamped() };
    let phi = solve_gauss(&gp, &plane)?;
    let w2 = electrostatic_work(&plane, &phi, &b);
    let cs = c_star(&d, [1.0, 0.0])?;
    let centre = plane.idx(8, 8);
    for eps in [0.1, 0.05] {
        let g3 = Grid3::new(plane, 3, 9)?;
        let s = gauss3d_desk(0.0, eps, &g3, &|_, _, _| q, &dp, &gp.phi0, &gp.bc)?;
        println!(
            "eps {eps:5}: 3D work {:.8} 2D work {w2:.8} gap {:.3e}  transverse {:.6} vs c* {cs:.6}",
            s.work,
            s.work - w2,
            s.transverse_mean[centre]
        );
    }
    Ok(())
}
