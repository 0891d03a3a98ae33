//! Structured rectangular grids, nodal fields, finite-difference operators,
//! trapezoidal quadrature and per-edge boundary handling.

use crate::error::{invalid, Result};
use crate::linalg::Csr;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid2 {
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
    pub hx: f64,
    pub hy: f64,
}

impl Grid2 {
    pub fn new(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Self> {
        if nx < 4 || ny < 4 {
            return invalid(format!("grid needs at least 4 nodes per side, got {nx}x{ny}"));
        }
        if !(lx > 0.0 && ly > 0.0) || !lx.is_finite() || !ly.is_finite() {
            return invalid(format!("grid extents must be positive, got {lx}x{ly}"));
        }
        Ok(Grid2 { nx, ny, lx, ly, hx: lx / (nx - 1) as f64, hy: ly / (ny - 1) as f64 })
    }

    /// Unit square with `n` nodes per side.
    pub fn unit(n: usize) -> Result<Self> {
        Grid2::new(n, n, 1.0, 1.0)
    }

    pub fn nn(&self) -> usize {
        self.nx * self.ny
    }

    /// Row-major node index, `x` varying fastest.
    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        i + self.nx * j
    }

    pub fn ij(&self, k: usize) -> (usize, usize) {
        (k % self.nx, k / self.nx)
    }

    pub fn x(&self, i: usize) -> f64 {
        if i + 1 == self.nx { self.lx } else { i as f64 * self.hx }
    }

    pub fn y(&self, j: usize) -> f64 {
        if j + 1 == self.ny { self.ly } else { j as f64 * self.hy }
    }

    pub fn coords(&self, k: usize) -> (f64, f64) {
        let (i, j) = self.ij(k);
        (self.x(i), self.y(j))
    }

    pub fn area(&self) -> f64 {
        self.lx * self.ly
    }

    /// Trapezoidal tensor-product quadrature weights.
    pub fn weights(&self) -> Vec<f64> {
        let wx = trapezoid_1d(self.nx, self.hx);
        let wy = trapezoid_1d(self.ny, self.hy);
        (0..self.nn()).map(|k| {
            let (i, j) = self.ij(k);
            wx[i] * wy[j]
        }).collect()
    }

    pub fn sample(&self, f: impl Fn(f64, f64) -> f64) -> ScalarField2 {
        ScalarField2 {
            nx: self.nx,
            ny: self.ny,
            values: (0..self.nn()).map(|k| {
                let (x, y) = self.coords(k);
                f(x, y)
            }).collect(),
        }
    }

    pub fn on_edge(&self, k: usize, edge: Edge) -> bool {
        let (i, j) = self.ij(k);
        match edge {
            Edge::Left => i == 0,
            Edge::Right => i + 1 == self.nx,
            Edge::Bottom => j == 0,
            Edge::Top => j + 1 == self.ny,
        }
    }

    pub fn is_boundary(&self, k: usize) -> bool {
        Edge::ALL.iter().any(|e| self.on_edge(k, *e))
    }
}

fn trapezoid_1d(n: usize, h: f64) -> Vec<f64> {
    (0..n).map(|i| if i == 0 || i + 1 == n { 0.5 * h } else { h }).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField2 {
    pub nx: usize,
    pub ny: usize,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VectorField2 {
    pub nx: usize,
    pub ny: usize,
    pub values: Vec<[f64; 2]>,
}

/// Nodal symmetric 2×2 field stored as `(f11, f22, f12)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SymField2 {
    pub nx: usize,
    pub ny: usize,
    pub values: Vec<[f64; 3]>,
}

impl ScalarField2 {
    pub fn zeros(g: &Grid2) -> Self {
        ScalarField2 { nx: g.nx, ny: g.ny, values: vec![0.0; g.nn()] }
    }

    pub fn from_values(g: &Grid2, values: Vec<f64>) -> Result<Self> {
        if values.len() != g.nn() {
            return invalid(format!("expected {} nodal values, got {}", g.nn(), values.len()));
        }
        Ok(ScalarField2 { nx: g.nx, ny: g.ny, values })
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

impl VectorField2 {
    pub fn zeros(g: &Grid2) -> Self {
        VectorField2 { nx: g.nx, ny: g.ny, values: vec![[0.0; 2]; g.nn()] }
    }

    pub fn component(&self, c: usize) -> Vec<f64> {
        self.values.iter().map(|v| v[c]).collect()
    }

    pub fn from_components(g: &Grid2, a: &[f64], b: &[f64]) -> Self {
        VectorField2 { nx: g.nx, ny: g.ny, values: a.iter().zip(b).map(|(x, y)| [*x, *y]).collect() }
    }

    pub fn l2_norm(&self, g: &Grid2) -> f64 {
        let w = g.weights();
        self.values.iter().zip(&w).map(|(v, w)| w * (v[0] * v[0] + v[1] * v[1])).sum::<f64>().sqrt()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Edge {
    Left,
    Right,
    Bottom,
    Top,
}

impl Edge {
    pub const ALL: [Edge; 4] = [Edge::Left, Edge::Right, Edge::Bottom, Edge::Top];

    pub fn name(self) -> &'static str {
        match self {
            Edge::Left => "left",
            Edge::Right => "right",
            Edge::Bottom => "bottom",
            Edge::Top => "top",
        }
    }

    pub fn parse(s: &str) -> Option<Edge> {
        Edge::ALL.into_iter().find(|e| e.name() == s)
    }

    fn slot(self) -> usize {
        self as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MechBc {
    Clamped,
    Free,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PhiBc {
    Dirichlet,
    Natural,
}

/// Per-edge conditions for the displacement and for the potential, indexed
/// in the order left, right, bottom, top.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct BoundarySpec {
    pub mech: [MechBc; 4],
    pub phi: [PhiBc; 4],
}

impl Default for BoundarySpec {
    fn default() -> Self {
        BoundarySpec::clamped()
    }
}

impl BoundarySpec {
    pub fn clamped() -> Self {
        BoundarySpec { mech: [MechBc::Clamped; 4], phi: [PhiBc::Dirichlet; 4] }
    }

    pub fn free() -> Self {
        BoundarySpec { mech: [MechBc::Free; 4], phi: [PhiBc::Dirichlet; 4] }
    }

    pub fn mech_at(&self, e: Edge) -> MechBc {
        self.mech[e.slot()]
    }

    pub fn phi_at(&self, e: Edge) -> PhiBc {
        self.phi[e.slot()]
    }

    pub fn set_mech(&mut self, e: Edge, bc: MechBc) {
        self.mech[e.slot()] = bc;
    }

    pub fn set_phi(&mut self, e: Edge, bc: PhiBc) {
        self.phi[e.slot()] = bc;
    }

    pub fn has_dirichlet(&self) -> bool {
        self.phi.contains(&PhiBc::Dirichlet)
    }

    pub fn all_free(&self) -> bool {
        self.mech.iter().all(|m| *m == MechBc::Free)
    }

    pub fn validate_phi(&self) -> Result<()> {
        if !self.has_dirichlet() {
            return invalid("potential needs at least one Dirichlet edge");
        }
        Ok(())
    }

    /// Ghost rule used for the transverse displacement on edge `e`.
    pub fn zeta3_ghost(&self, e: Edge) -> Ghost {
        match self.mech_at(e) {
            MechBc::Clamped => Ghost::Even,
            MechBc::Free => Ghost::Extrapolate,
        }
    }
}

/// Rule defining the value at the ghost node beyond a boundary node.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Ghost {
    /// Quadratic extrapolation `f₋₁ = 3f₀ − 3f₁ + f₂`; turns the central
    /// stencil into the second-order one-sided difference.
    Extrapolate,
    /// Even reflection `f₋₁ = f₁`; the normal derivative vanishes.
    Even,
}

fn ghost_coeffs(g: Ghost) -> [(usize, f64); 3] {
    match g {
        Ghost::Extrapolate => [(0, 3.0), (1, -3.0), (2, 1.0)],
        Ghost::Even => [(1, 1.0), (0, 0.0), (2, 0.0)],
    }
}

fn stencil_1d(n: usize, stencil: [f64; 3], left: Ghost, right: Ghost) -> Csr {
    let mut t = Vec::with_capacity(3 * n);
    for i in 0..n {
        for (off, w) in stencil.iter().enumerate() {
            if *w == 0.0 {
                continue;
            }
            let pos = i as isize + off as isize - 1;
            if pos < 0 {
                for (k, c) in ghost_coeffs(left) {
                    t.push((i, k, w * c));
                }
            } else if pos as usize >= n {
                for (k, c) in ghost_coeffs(right) {
                    t.push((i, n - 1 - k, w * c));
                }
            } else {
                t.push((i, pos as usize, *w));
            }
        }
    }
    let mut m = Csr::from_triplets(n, n, t);
    m.data.iter_mut().for_each(|v| if v.abs() < 1e-300 { *v = 0.0 });
    m
}

/// Central first difference with ghost closure.
pub fn d1(n: usize, h: f64, left: Ghost, right: Ghost) -> Csr {
    stencil_1d(n, [-0.5 / h, 0.0, 0.5 / h], left, right)
}

/// Three-point second difference with ghost closure.
pub fn d2(n: usize, h: f64, left: Ghost, right: Ghost) -> Csr {
    stencil_1d(n, [1.0 / (h * h), -2.0 / (h * h), 1.0 / (h * h)], left, right)
}

/// Two-dimensional nodal difference operators for one set of ghost rules.
#[derive(Clone, Debug)]
pub struct Ops2 {
    pub dx: Csr,
    pub dy: Csr,
    pub dxx: Csr,
    pub dyy: Csr,
    pub dxy: Csr,
}

impl Ops2 {
    /// Ghost rules indexed left, right, bottom, top.
    pub fn new(g: &Grid2, ghosts: [Ghost; 4]) -> Self {
        let ix = Csr::identity(g.nx);
        let iy = Csr::identity(g.ny);
        let dx1 = d1(g.nx, g.hx, ghosts[0], ghosts[1]);
        let dy1 = d1(g.ny, g.hy, ghosts[2], ghosts[3]);
        let dxx1 = d2(g.nx, g.hx, ghosts[0], ghosts[1]);
        let dyy1 = d2(g.ny, g.hy, ghosts[2], ghosts[3]);
        Ops2 {
            dx: Csr::kron(&iy, &dx1),
            dy: Csr::kron(&dy1, &ix),
            dxx: Csr::kron(&iy, &dxx1),
            dyy: Csr::kron(&dyy1, &ix),
            dxy: Csr::kron(&dy1, &dx1),
        }
    }

    pub fn extrapolating(g: &Grid2) -> Self {
        Ops2::new(g, [Ghost::Extrapolate; 4])
    }
}

/// Nodal gradient: central differences inside, second-order one-sided
/// differences on the boundary.
pub fn grad2(g: &Grid2, f: &ScalarField2) -> VectorField2 {
    let ops = Ops2::extrapolating(g);
    VectorField2::from_components(g, &ops.dx.mul_vec(&f.values), &ops.dy.mul_vec(&f.values))
}

/// Nodal Hessian with three-point second differences and the four-point
/// mixed stencil.
pub fn hessian2(g: &Grid2, f: &ScalarField2) -> SymField2 {
    let ops = Ops2::extrapolating(g);
    let a = ops.dxx.mul_vec(&f.values);
    let b = ops.dyy.mul_vec(&f.values);
    let c = ops.dxy.mul_vec(&f.values);
    SymField2 { nx: g.nx, ny: g.ny, values: (0..g.nn()).map(|k| [a[k], b[k], c[k]]).collect() }
}

/// Trapezoidal integral of a nodal density.
pub fn integrate2(g: &Grid2, density: &[f64]) -> f64 {
    g.weights().iter().zip(density).map(|(w, d)| w * d).sum()
}

/// Pinned degrees of freedom for the interleaved state `(ζ₁, ζ₂, ζ₃)` per node.
#[derive(Clone, Debug, PartialEq)]
pub struct DofMask {
    pub pinned: Vec<bool>,
    pub all_free: bool,
}

impl DofMask {
    pub fn pinned_per_component(&self) -> [usize; 3] {
        let mut c = [0; 3];
        for (i, p) in self.pinned.iter().enumerate() {
            if *p {
                c[i % 3] += 1;
            }
        }
        c
    }

    pub fn free_indices(&self) -> Vec<usize> {
        (0..self.pinned.len()).filter(|i| !self.pinned[*i]).collect()
    }

    pub fn zero_pinned(&self, v: &mut [f64]) {
        for (x, p) in v.iter_mut().zip(&self.pinned) {
            if *p {
                *x = 0.0;
            }
        }
    }
}

/// Clamped edges pin all three displacement components on their nodes; the
/// vanishing normal slope of ζ₃ is imposed by the even ghost rule in the
/// energy operators.
pub fn apply_clamped(g: &Grid2, bc: &BoundarySpec) -> DofMask {
    let mut pinned = vec![false; 3 * g.nn()];
    for k in 0..g.nn() {
        if Edge::ALL.iter().any(|e| bc.mech_at(*e) == MechBc::Clamped && g.on_edge(k, *e)) {
            pinned[3 * k..3 * k + 3].iter_mut().for_each(|p| *p = true);
        }
    }
    DofMask { pinned, all_free: bc.all_free() }
}

/// True when the mechanical problem has no stiffness beyond the film and
/// nothing drives it: every edge free, no field and a vanishing order tensor.
pub fn is_semidefinite_setup(bc: &BoundarySpec, field_active: bool, qbar_zero: bool) -> bool {
    bc.all_free() && !field_active && qbar_zero
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn grad_examples() {
        let g = Grid2::unit(9).unwrap();
        let c = grad2(&g, &g.sample(|_, _| 3.5));
        assert!(c.values.iter().all(|v| v[0].abs() < 1e-12 && v[1].abs() < 1e-12));
        let lin = grad2(&g, &g.sample(|x, _| x));
        for v in &lin.values {
            assert_abs_diff_eq!(v[0], 1.0, epsilon = 1e-13);
            assert_abs_diff_eq!(v[1], 0.0, epsilon = 1e-13);
        }
        let q = grad2(&g, &g.sample(|x, _| x * x));
        for k in 0..g.nn() {
            let (x, _) = g.coords(k);
            assert_abs_diff_eq!(q.values[k][0], 2.0 * x, epsilon = 1e-12);
        }
    }

    #[test]
    fn hessian_examples() {
        let g = Grid2::unit(9).unwrap();
        for v in hessian2(&g, &g.sample(|x, y| x * y)).values {
            assert_abs_diff_eq!(v[0], 0.0, epsilon = 1e-10);
            assert_abs_diff_eq!(v[1], 0.0, epsilon = 1e-10);
            assert_abs_diff_eq!(v[2], 1.0, epsilon = 1e-10);
        }
        for v in hessian2(&g, &g.sample(|x, _| 0.5 * x * x)).values {
            assert_abs_diff_eq!(v[0], 1.0, epsilon = 1e-10);
            assert_abs_diff_eq!(v[2], 0.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn hessian_second_order_convergence() {
        let pi = std::f64::consts::PI;
        let err = |n: usize| {
            let g = Grid2::unit(n).unwrap();
            let h = hessian2(&g, &g.sample(|x, _| (pi * x).sin()));
            (0..g.nn())
                .filter(|k| !g.is_boundary(*k))
                .map(|k| (h.values[k][0] + pi * pi * (pi * g.coords(k).0).sin()).abs())
                .fold(0.0, f64::max)
        };
        let ratio = err(17) / err(33);
        assert!((ratio - 4.0).abs() < 0.2, "ratio {ratio}");
    }

    #[test]
    fn integrate_examples() {
        let g = Grid2::unit(9).unwrap();
        assert_abs_diff_eq!(integrate2(&g, &g.sample(|_, _| 1.0).values), 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(integrate2(&g, &g.sample(|x, _| x).values), 0.5, epsilon = 1e-14);
        let f = |n: usize| {
            let g = Grid2::unit(n).unwrap();
            integrate2(&g, &g.sample(|x, y| x * x * y * y).values) - 1.0 / 9.0
        };
        let (e1, e2) = (f(9), f(17));
        assert!((e1 / e2 - 4.0).abs() < 0.1);
        let richardson = (4.0 * (f(33) + 1.0 / 9.0) - (f(17) + 1.0 / 9.0)) / 3.0;
        assert!((richardson - 1.0 / 9.0).abs() < 1e-3 * e2.abs());
    }

    #[test]
    fn clamped_mask_counts() {
        let g = Grid2::unit(5).unwrap();
        let m = apply_clamped(&g, &BoundarySpec::clamped());
        assert_eq!(m.pinned_per_component(), [16, 16, 16]);
        let m = apply_clamped(&g, &BoundarySpec::free());
        assert_eq!(m.pinned_per_component(), [0, 0, 0]);
        assert!(m.all_free);
        assert!(is_semidefinite_setup(&BoundarySpec::free(), false, true));
    }

    #[test]
    fn even_ghost_kills_normal_slope() {
        let g = Grid2::unit(9).unwrap();
        let ops = Ops2::new(&g, [Ghost::Even; 4]);
        let f = g.sample(|x, y| (x - 0.5).powi(2) * (1.0 + y));
        let dx = ops.dx.mul_vec(&f.values);
        for j in 0..g.ny {
            assert!(dx[g.idx(0, j)].abs() < 1e-12);
            assert!(dx[g.idx(g.nx - 1, j)].abs() < 1e-12);
        }
    }

    #[test]
    fn summation_by_parts_residual_decays() {
        let resid = |n: usize| {
            let g = Grid2::unit(n).unwrap();
            let ops = Ops2::extrapolating(&g);
            let f = g.sample(|x, y| (x + 2.0 * y).sin());
            let gx = g.sample(|x, y| x * y + 1.0);
            let gy = g.sample(|x, y| (x - y).cos());
            let df = grad2(&g, &f);
            let div: Vec<f64> = ops.dx.mul_vec(&gx.values).iter().zip(ops.dy.mul_vec(&gy.values)).map(|(a, b)| a + b).collect();
            let lhs: Vec<f64> = (0..g.nn())
                .map(|k| df.values[k][0] * gx.values[k] + df.values[k][1] * gy.values[k] + f.values[k] * div[k])
                .collect();
            let vol = integrate2(&g, &lhs);
            let boundary = boundary_flux(&g, &f, &gx, &gy);
            (vol - boundary).abs()
        };
        let (r1, r2) = (resid(17), resid(33));
        assert!(r2 < r1 / 3.0, "{r1} {r2}");
    }

    fn boundary_flux(g: &Grid2, f: &ScalarField2, gx: &ScalarField2, gy: &ScalarField2) -> f64 {
        let tr = |vals: &[f64]| -> f64 {
            let n = vals.len();
            let h = 1.0 / (n - 1) as f64;
            vals.iter().enumerate().map(|(i, v)| if i == 0 || i + 1 == n { 0.5 * h * v } else { h * v }).sum()
        };
        let right: Vec<f64> = (0..g.ny).map(|j| { let k = g.idx(g.nx - 1, j); f.values[k] * gx.values[k] }).collect();
        let left: Vec<f64> = (0..g.ny).map(|j| { let k = g.idx(0, j); f.values[k] * gx.values[k] }).collect();
        let top: Vec<f64> = (0..g.nx).map(|i| { let k = g.idx(i, g.ny - 1); f.values[k] * gy.values[k] }).collect();
        let bottom: Vec<f64> = (0..g.nx).map(|i| { let k = g.idx(i, 0); f.values[k] * gy.values[k] }).collect();
        tr(&right) - tr(&left) + tr(&top) - tr(&bottom)
    }
}
