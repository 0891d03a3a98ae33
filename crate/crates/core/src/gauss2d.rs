//! Reduced Gauss law `−div′(B̄∇′φ̄) = 0` on a structured grid with bilinear
//! elements, mixed Dirichlet/natural edges and the electrostatic work.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dielectric::ReducedDielectric;
use crate::error::{invalid, Error, Result};
use crate::grid::{BoundarySpec, Edge, Grid2, PhiBc, ScalarField2};
use crate::linalg::{pcg, Csr};

pub const GAUSS_TOL: f64 = 1e-12;

/// Dirichlet datum `a₀ + a·x′`, optionally overridden at individual
/// Dirichlet nodes.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct BoundaryData {
    pub a0: f64,
    pub a: [f64; 2],
    pub overrides: Vec<(usize, f64)>,
}

impl BoundaryData {
    pub fn affine(a0: f64, a: [f64; 2]) -> Self {
        BoundaryData { a0, a, overrides: Vec::new() }
    }

    pub fn is_zero(&self) -> bool {
        self.a0 == 0.0 && self.a == [0.0, 0.0] && self.overrides.iter().all(|(_, v)| *v == 0.0)
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        self.a0 + self.a[0] * x + self.a[1] * y
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GaussProblem {
    pub b: ReducedDielectric,
    pub phi0: BoundaryData,
    pub bc: BoundarySpec,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaussReport {
    pub iterations: usize,
    pub rel_residual: f64,
    pub dirichlet_nodes: usize,
}

/// Element stiffness of a bilinear rectangle, local nodes ordered
/// `(0,0), (1,0), (0,1), (1,1)`; 2×2 Gauss points integrate it exactly.
fn element_stiffness(g: &Grid2, b: &ReducedDielectric) -> [[f64; 4]; 4] {
    let gp = [0.5 - 0.5 / 3f64.sqrt(), 0.5 + 0.5 / 3f64.sqrt()];
    let (hx, hy) = (g.hx, g.hy);
    let mut k = [[0.0; 4]; 4];
    for &xi in &gp {
        for &et in &gp {
            let dn = [
                [-(1.0 - et) / hx, -(1.0 - xi) / hy],
                [(1.0 - et) / hx, -xi / hy],
                [-et / hx, (1.0 - xi) / hy],
                [et / hx, xi / hy],
            ];
            let w = 0.25 * hx * hy;
            for i in 0..4 {
                let bi = [b.b[(0, 0)] * dn[i][0] + b.b[(0, 1)] * dn[i][1], b.b[(1, 0)] * dn[i][0] + b.b[(1, 1)] * dn[i][1]];
                for j in 0..4 {
                    k[i][j] += w * (bi[0] * dn[j][0] + bi[1] * dn[j][1]);
                }
            }
        }
    }
    k
}

fn element_nodes(g: &Grid2, i: usize, j: usize) -> [usize; 4] {
    [g.idx(i, j), g.idx(i + 1, j), g.idx(i, j + 1), g.idx(i + 1, j + 1)]
}

/// Global stiffness matrix; its 9-point stencil is symmetric by construction.
pub fn stiffness(g: &Grid2, b: &ReducedDielectric) -> Csr {
    let ke = element_stiffness(g, b);
    let mut t = Vec::with_capacity(16 * (g.nx - 1) * (g.ny - 1));
    for j in 0..g.ny - 1 {
        for i in 0..g.nx - 1 {
            let nodes = element_nodes(g, i, j);
            for (a, &na) in nodes.iter().enumerate() {
                for (c, &nc) in nodes.iter().enumerate() {
                    t.push((na, nc, ke[a][c]));
                }
            }
        }
    }
    Csr::from_triplets(g.nn(), g.nn(), t)
}

/// `½∫ ∇′φᵀ B ∇′φ` for the bilinear interpolant of nodal values, with the
/// gradient formed from nodal differences so that constants give exactly 0.
pub fn electrostatic_work(g: &Grid2, phi: &ScalarField2, b: &ReducedDielectric) -> f64 {
    let gp = [0.5 - 0.5 / 3f64.sqrt(), 0.5 + 0.5 / 3f64.sqrt()];
    let w = 0.25 * g.hx * g.hy;
    let mut total = 0.0;
    for j in 0..g.ny - 1 {
        for i in 0..g.nx - 1 {
            let v = element_nodes(g, i, j).map(|n| phi.values[n]);
            for &xi in &gp {
                for &et in &gp {
                    let gx = ((v[1] - v[0]) * (1.0 - et) + (v[3] - v[2]) * et) / g.hx;
                    let gy = ((v[2] - v[0]) * (1.0 - xi) + (v[3] - v[1]) * xi) / g.hy;
                    total += w * b.quad([gx, gy]);
                }
            }
        }
    }
    0.5 * total
}

/// Nodes lying on a Dirichlet edge.
pub fn dirichlet_nodes(g: &Grid2, bc: &BoundarySpec) -> Vec<bool> {
    (0..g.nn())
        .map(|k| Edge::ALL.iter().any(|e| bc.phi_at(*e) == PhiBc::Dirichlet && g.on_edge(k, *e)))
        .collect()
}

/// Boundary values at every node (affine extension inside), with overrides
/// applied; overrides away from Dirichlet nodes are rejected.
fn datum(g: &Grid2, gp: &GaussProblem, dir: &[bool]) -> Result<Vec<f64>> {
    let mut v: Vec<f64> = (0..g.nn()).map(|k| { let (x, y) = g.coords(k); gp.phi0.eval(x, y) }).collect();
    for &(k, val) in &gp.phi0.overrides {
        if k >= g.nn() || !dir[k] {
            return invalid(format!("potential override at node {k} is not on a Dirichlet edge"));
        }
        v[k] = val;
    }
    Ok(v)
}

pub fn solve_gauss(gp: &GaussProblem, g: &Grid2) -> Result<ScalarField2> {
    solve_gauss_with(gp, g, None).map(|r| r.0)
}

/// Solves with an optional initial guess; the default guess is the affine
/// extension of the boundary datum.
pub fn solve_gauss_with(gp: &GaussProblem, g: &Grid2, guess: Option<&ScalarField2>) -> Result<(ScalarField2, GaussReport)> {
    if gp.b.min_eigenvalue() <= 0.0 {
        return invalid("reduced dielectric matrix must be positive definite");
    }
    let dir = dirichlet_nodes(g, &gp.bc);
    let nd = dir.iter().filter(|d| **d).count();
    if nd == 0 {
        return Err(Error::InvalidProblem("Gauss problem has no Dirichlet nodes".into()));
    }
    let bnd = datum(g, gp, &dir)?;
    let free: Vec<usize> = (0..g.nn()).filter(|k| !dir[*k]).collect();
    let mut phi = bnd.clone();
    if free.is_empty() {
        return Ok((ScalarField2 { nx: g.nx, ny: g.ny, values: phi }, GaussReport { iterations: 0, rel_residual: 0.0, dirichlet_nodes: nd }));
    }
    let mut map = vec![usize::MAX; g.nn()];
    for (i, f) in free.iter().enumerate() {
        map[*f] = i;
    }
    let k = stiffness(g, &gp.b);
    let mut lifted = bnd.clone();
    for f in &free {
        lifted[*f] = 0.0;
    }
    let kb = k.mul_vec(&lifted);
    let rhs: Vec<f64> = free.iter().map(|f| -kb[*f]).collect();
    let trips = k.triplets().into_iter().filter(|(r, c, _)| !dir[*r] && !dir[*c]).map(|(r, c, v)| (map[r], map[c], v)).collect();
    let kff = Csr::from_triplets(free.len(), free.len(), trips);
    let diag = kff.diagonal();
    let x0: Vec<f64> = match guess {
        Some(s) => free.iter().map(|f| s.values[*f]).collect(),
        None => free.iter().map(|f| bnd[*f]).collect(),
    };
    let n = g.nx.max(g.ny);
    let out = pcg(
        |x| kff.mul_vec(x),
        |r| r.iter().zip(&diag).map(|(ri, di)| ri / di).collect(),
        &rhs,
        Some(&x0),
        GAUSS_TOL,
        10 * n * n,
    );
    if !out.converged {
        return Err(Error::Solver(format!("Gauss solve stalled at relative residual {:.3e}", out.rel_residual)));
    }
    for (i, f) in free.iter().enumerate() {
        phi[*f] = out.x[i];
    }
    Ok((
        ScalarField2 { nx: g.nx, ny: g.ny, values: phi },
        GaussReport { iterations: out.iterations, rel_residual: out.rel_residual, dirichlet_nodes: nd },
    ))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConsistencyReport {
    pub work: f64,
    /// Smallest `W(φ̄ + v) − W(φ̄)` over the sampled admissible `v`.
    pub min_gap: f64,
    pub samples: usize,
}

/// Samples perturbations vanishing on Dirichlet nodes and records how much
/// they change the work of the computed solution.
pub fn min_work_consistency(gp: &GaussProblem, g: &Grid2, samples: usize, seed: u64) -> Result<ConsistencyReport> {
    let phi = solve_gauss(gp, g)?;
    let dir = dirichlet_nodes(g, &gp.bc);
    let w0 = electrostatic_work(g, &phi, &gp.b);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut min_gap = f64::INFINITY;
    for s in 0..samples {
        let amp = 10f64.powi(-(s as i32 % 4));
        let mut trial = phi.clone();
        for (k, v) in trial.values.iter_mut().enumerate() {
            if !dir[k] {
                *v += amp * rng.gen_range(-1.0..1.0);
            }
        }
        min_gap = min_gap.min(electrostatic_work(g, &trial, &gp.b) - w0);
    }
    Ok(ConsistencyReport { work: w0, min_gap, samples })
}
