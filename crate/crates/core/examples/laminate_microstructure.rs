//! Frank laminates: averaging to a biaxial target, mollified transitions
//! and compatible displacements.

use nalgebra::Vector3;
use nematoplate::microlam::{laminate_profile, mollify_laminate, two_variant_displacement, weak_convergence_check};
use nematoplate::qtensor::QTensor;

fn main() -> nematoplate::Result<()> {
    let qbar = QTensor::from_entries([0.1, -0.05, -0.05, 0.02, 0.0, 0.03]);
    let lf = laminate_profile(&qbar, 0.02, &Vector3::x())?;
    println!("variants {} fractions {:?}", lf.variants.len(), lf.fractions);
    let wc = weak_convergence_check(&lf, &qbar, &[4.37, 16.37, 64.37], 0.0);
    println!("window errors {:?} rate {:?}", wc.errors, wc.rate);
    for delta in [0.004, 0.002, 0.001] {
        let (_, t) = mollify_laminate(&lf, delta)?;
        println!("delta {delta}: transition fraction {:.3} curvature {:.4e}", t.fraction, t.curvature);
    }
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let map = two_variant_displacement(&Vector3::new(s, 0.0, s), &Vector3::new(s, 0.0, -s), 0.5, 0.1)?;
    println!("jump second singular value {:.2e}", map.jump_rank_defect());
    Ok(())
}
