use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use nematoplate::dielectric::{d_tensor, schur_b};
use nematoplate::energy2d::{j_actuation, PlateOps, PlateState};
use nematoplate::gauss2d::{electrostatic_work, solve_gauss, BoundaryData, GaussProblem};
use nematoplate::grid::{BoundarySpec, Grid2};
use nematoplate::qtensor::{director, make_frank};
use nematoplate::solver::{brute_force_frank, minimize_actuation, solve_minmax, tensor_distance, MinMaxOptions, PlateProblem};

fn small_problem() -> PlateProblem {
    PlateProblem::new(Grid2::new(9, 7, 1.0, 0.6).unwrap(), BoundarySpec::clamped())
}

/// Reduced energy along a route that avoids the solver's cached model: a
/// fresh plate minimisation followed by a direct energy evaluation.
fn reduced_energy(pb: &PlateProblem, n: &Vector3<f64>, phi0: &BoundaryData) -> f64 {
    let q = make_frank(n).unwrap();
    let (ps, phi, _) = minimize_actuation(pb, &q, Some(phi0)).unwrap();
    let ops = PlateOps::new(&pb.grid, &pb.bc);
    j_actuation(&ops, &ps, &q, phi.as_ref(), &pb.mp, &pb.dp, pb.regime, pb.cross).unwrap().0
}

#[test]
fn multistart_matches_director_sweep() {
    let pb = small_problem();
    let phi0 = BoundaryData::affine(0.0, [1.0, 0.3]);
    let res = solve_minmax(&pb, Some(&phi0), &MinMaxOptions::default()).unwrap();
    let best = res.basins[0].value;

    let (bf, n_bf) = brute_force_frank(&pb, Some(&phi0), 10.0, 3).unwrap();
    assert!((best - bf).abs() <= 1e-8 * (1.0 + bf.abs()), "multistart {best} vs sweep {bf}");
    assert!(tensor_distance(&res.qbar, &make_frank(&n_bf).unwrap()) < 1e-3);

    let mut coarse = f64::INFINITY;
    for i in 0..=6 {
        for j in 0..12 {
            let th = i as f64 * std::f64::consts::FRAC_PI_2 / 6.0;
            let ph = j as f64 * std::f64::consts::PI / 6.0;
            coarse = coarse.min(reduced_energy(&pb, &director(th, ph), &phi0));
        }
    }
    assert!(best <= coarse + 1e-10, "optimiser {best} above coarse sweep {coarse}");
}

#[test]
fn gauss_solution_minimises_work() {
    let g = Grid2::unit(17).unwrap();
    let q = make_frank(&Vector3::new(0.4, 0.7, 0.6).normalize()).unwrap();
    let b = schur_b(&d_tensor(&q, &Default::default()).unwrap()).unwrap();
    let gp = GaussProblem { b, phi0: BoundaryData::affine(0.2, [1.0, -0.5]), bc: BoundarySpec::clamped() };
    let phi = solve_gauss(&gp, &g).unwrap();
    let w0 = electrostatic_work(&g, &phi, &b);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..50 {
        let mut p = phi.clone();
        for k in 0..g.nn() {
            if !g.is_boundary(k) {
                p.values[k] += rng.gen_range(-1e-3..1e-3);
            }
        }
        assert!(electrostatic_work(&g, &p, &b) > w0);
    }
}

#[test]
fn plate_minimiser_beats_perturbations() {
    let pb = PlateProblem::new(Grid2::unit(13).unwrap(), BoundarySpec::clamped());
    let q = make_frank(&Vector3::new(1.0, 0.0, 1.0).normalize()).unwrap();
    let (ps, _, _) = minimize_actuation(&pb, &q, None).unwrap();
    let ops = PlateOps::new(&pb.grid, &pb.bc);
    let energy = |s: &PlateState| j_actuation(&ops, s, &q, None, &pb.mp, &pb.dp, pb.regime, pb.cross).unwrap().0;
    let e0 = energy(&ps);
    let g = &pb.grid;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..30 {
        let mut u = ps.dofs();
        for k in 0..g.nn() {
            let (i, j) = g.ij(k);
            if i >= 2 && j >= 2 && i + 2 < g.nx && j + 2 < g.ny {
                for c in 0..3 {
                    u[3 * k + c] += rng.gen_range(-1e-4..1e-4);
                }
            }
        }
        let pert = PlateState::from_dofs(g, &u, ps.representation);
        assert!(energy(&pert) > e0);
    }
}
