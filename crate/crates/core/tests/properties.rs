use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use proptest::prelude::*;

use nematoplate::cli::{read_csv, write_csv};
use nematoplate::dielectric::{d_tensor, schur_b, DielectricParams};
use nematoplate::energy2d::{PlateState, Representation};
use nematoplate::grid::{Grid2, VectorField2};
use nematoplate::microlam::{laminate_profile, smooth_step};
use nematoplate::qtensor::{dist2_qb, frank_decomposition, make_frank, project_qb, QSet, LAMBDA_MAX, LAMBDA_MIN};

fn sym() -> impl Strategy<Value = Matrix3<f64>> {
    prop::array::uniform6(-2.0f64..2.0).prop_map(|e| Matrix3::new(e[0], e[3], e[4], e[3], e[1], e[5], e[4], e[5], e[2]))
}

fn unit() -> impl Strategy<Value = Vector3<f64>> {
    prop::array::uniform3(-1.0f64..1.0)
        .prop_filter("non-degenerate", |v| Vector3::from(*v).norm() > 0.1)
        .prop_map(|v| Vector3::from(v).normalize())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn projection_is_idempotent(m in sym()) {
        let p = project_qb(&m);
        let pp = project_qb(&p.matrix());
        prop_assert!((p.matrix() - pp.matrix()).norm() < 1e-12);
        prop_assert!(p.is_in(QSet::Biaxial, 1e-10));
    }

    #[test]
    fn projection_spectrum_in_bounds(m in sym()) {
        let e = SymmetricEigen::new(project_qb(&m).matrix()).eigenvalues;
        prop_assert!(e.iter().all(|&l| l >= LAMBDA_MIN - 1e-12 && l <= LAMBDA_MAX + 1e-12));
        prop_assert!(e.sum().abs() < 1e-12);
    }

    #[test]
    fn projection_beats_random_members(m in sym(), c in sym()) {
        let (d2, grad) = dist2_qb(&m);
        let p = m - grad * 0.5;
        prop_assert!(d2 >= 0.0);
        prop_assert!((p - project_qb(&m).matrix()).norm() < 1e-12);
        prop_assert!(((m - p).norm_squared() - d2).abs() < 1e-10);
        let other = project_qb(&c).matrix();
        prop_assert!(d2 <= (m - other).norm_squared() + 1e-10);
    }

    #[test]
    fn frank_decomposition_reconstructs(m in sym()) {
        let q = project_qb(&m);
        let fd = frank_decomposition(&q).unwrap();
        prop_assert!((fd.weights.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        prop_assert!(fd.weights.iter().all(|&w| w >= 0.0));
        prop_assert!((fd.reconstruct().matrix() - q.matrix()).norm() < 1e-10);
    }

    #[test]
    fn frank_tensor_is_in_smallest_set(n in unit()) {
        let q = make_frank(&n).unwrap();
        prop_assert_eq!(q.classify(), Some(QSet::Frank));
    }

    #[test]
    fn dielectric_and_schur_positive(m in sym(), ep in 0.5f64..3.0, ratio in 1.0f64..5.0) {
        let q = project_qb(&m);
        let dp = DielectricParams::new(ep, ep * ratio).unwrap();
        let d = d_tensor(&q, &dp).unwrap();
        let (lo, _) = d.ellipticity();
        prop_assert!(lo >= ep - 1e-10);
        let b = schur_b(&d).unwrap();
        prop_assert!(b.min_eigenvalue() > 0.0);
        prop_assert!((b.b - b.b.transpose()).norm() < 1e-14);
    }

    #[test]
    fn laminate_reproduces_average(m in sym(), n in unit(), eta in 0.001f64..0.5) {
        let q = project_qb(&m);
        let lf = laminate_profile(&q, eta, &n).unwrap();
        let avg = lf.cell_average().matrix();
        prop_assert!((avg - q.matrix()).norm() < 1e-12);
        prop_assert!(lf.directors.iter().all(|d| (d.norm() - 1.0).abs() < 1e-12));
    }

    #[test]
    fn smooth_step_is_symmetric(u in 0.0f64..1.0) {
        prop_assert!((smooth_step(u) + smooth_step(1.0 - u) - 1.0).abs() < 1e-14);
        prop_assert!((0.0..=1.0).contains(&smooth_step(u)));
    }

    #[test]
    fn csv_round_trip_is_exact(vals in prop::collection::vec(-1e3f64..1e3, 4 * 25)) {
        let g = Grid2::new(5, 5, 1.0, 1.0).unwrap();
        let n = g.nn();
        let mut ps = PlateState::zeros(&g, Representation::Interface);
        let small: Vec<f64> = vals[n..2 * n].iter().map(|v| v * 1e-7).collect();
        ps.zeta_prime = VectorField2::from_components(&g, &vals[..n], &small);
        for k in 0..n {
            ps.zeta3.values[k] = vals[2 * n + k] * 1e9;
        }
        let mut phi = g.sample(|_, _| 0.0);
        phi.values.copy_from_slice(&vals[3 * n..4 * n]);
        let mut buf = Vec::new();
        write_csv(&mut buf, &g, &ps, Some(&phi)).unwrap();
        let (ps2, phi2) = read_csv(&buf[..], &g).unwrap();
        prop_assert_eq!(ps2, ps);
        prop_assert_eq!(phi2, phi);
    }
}
