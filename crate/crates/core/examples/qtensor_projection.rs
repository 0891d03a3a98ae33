//! Projection of symmetric matrices onto the admissible order tensors and
//! the Frank decomposition of the result.

use nalgebra::Matrix3;
use nematoplate::qtensor::{dist2_qb, frank_decomposition, project_qb};

fn main() -> nematoplate::Result<()> {
    for m in [
        Matrix3::from_diagonal(&nalgebra::Vector3::new(0.0, 0.0, 1.0)),
        Matrix3::from_diagonal(&nalgebra::Vector3::new(0.0, 0.0, 3.0)),
        Matrix3::new(0.4, 0.2, -0.1, 0.2, -0.3, 0.5, -0.1, 0.5, 0.9),
    ] {
        let p = project_qb(&m);
        let (d2, _) = dist2_qb(&m);
        let fd = frank_decomposition(&p)?;
        println!("dist^2 {d2:.12}  projection {:?}", p.entries());
        println!("  weights {:?}", fd.weights);
    }
    Ok(())
}
