//! Desk-scale three-dimensional evaluation of the scaled bilayer energy,
//! recovery sequences for the film and the nematic layer, and the rescaled
//! three-dimensional Gauss law. Used to observe dimension-reduction trends.

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;

use crate::dielectric::{d_tensor, DielectricParams};
use crate::energy2d::{film_energy, frozen_foundation, PlateOps, PlateState, Representation};
use crate::error::{invalid, Error, Result};
use crate::foundation::{MaterialParams, Regime};
use crate::gauss2d::{dirichlet_nodes, BoundaryData};
use crate::grid::{d1, BoundarySpec, Ghost, Grid2, Ops2};
use crate::linalg::{pcg, Csr};
use crate::microlam::{gauss_legendre, mollify_laminate, LaminateField, MollifiedLaminate, TwoVariantMap};
use crate::qtensor::{make_frank, QTensor};

/// Largest number of nodes accepted by the three-dimensional solvers.
pub const MAX_NODES_3D: usize = 33 * 33 * 33;
pub const GAUSS3D_TOL: f64 = 1e-12;

/// Tensor grid over `ω × (0,1)` (film) and `ω × (−1,0)` (layer). Node `k`
/// of slice `l` has index `k + nn·l`; slices run upwards in `x₃`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid3 {
    pub plane: Grid2,
    pub nz_film: usize,
    pub nz_layer: usize,
}

impl Grid3 {
    /// Slice counts must be odd (Simpson quadrature in `x₃`).
    pub fn new(plane: Grid2, nz_film: usize, nz_layer: usize) -> Result<Self> {
        for n in [nz_film, nz_layer] {
            if n < 3 || n % 2 == 0 {
                return invalid(format!("transverse node count {n} must be odd and at least 3"));
            }
        }
        Ok(Grid3 { plane, nz_film, nz_layer })
    }

    pub fn z_film(&self, l: usize) -> f64 {
        l as f64 / (self.nz_film - 1) as f64
    }

    pub fn z_layer(&self, l: usize) -> f64 {
        -1.0 + l as f64 / (self.nz_layer - 1) as f64
    }
}

fn simpson(n: usize, h: f64) -> Vec<f64> {
    (0..n)
        .map(|i| {
            let c = if i == 0 || i + 1 == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
            c * h / 3.0
        })
        .collect()
}

/// Nodal 3D fields.
#[derive(Clone, Debug, PartialEq)]
pub struct Field3 {
    pub grid: Grid3,
    pub film_v: Vec<[f64; 3]>,
    pub layer_v: Vec<[f64; 3]>,
    pub layer_q: Vec<QTensor>,
    pub layer_phi: Vec<f64>,
}

impl Field3 {
    pub fn zeros(grid: Grid3) -> Self {
        let nn = grid.plane.nn();
        Field3 {
            grid,
            film_v: vec![[0.0; 3]; nn * grid.nz_film],
            layer_v: vec![[0.0; 3]; nn * grid.nz_layer],
            layer_q: vec![QTensor::zero(); nn * grid.nz_layer],
            layer_phi: vec![0.0; nn * grid.nz_layer],
        }
    }

    /// Largest jump of `v` across `x₃ = 0`.
    pub fn interface_mismatch(&self) -> f64 {
        let nn = self.grid.plane.nn();
        let top = nn * (self.grid.nz_layer - 1);
        (0..nn)
            .flat_map(|k| (0..3).map(move |c| (k, c)))
            .map(|(k, c)| (self.film_v[k][c] - self.layer_v[top + k][c]).abs())
            .fold(0.0, f64::max)
    }

    /// Largest `|v(x′, −1)|`.
    pub fn bottom_clamp_residual(&self) -> f64 {
        let nn = self.grid.plane.nn();
        self.layer_v[..nn].iter().flat_map(|v| v.iter()).fold(0.0, |m, x| m.max(x.abs()))
    }
}

/// Terms of the scaled 3D energy. `total = film + layer + curvature −
/// electrostatic`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Energy3d {
    pub film: f64,
    pub layer: f64,
    pub curvature: f64,
    pub electrostatic: f64,
    pub total: f64,
}

fn check_scaling(p: f64, eps: f64) -> Result<()> {
    if !(p > -1.0 && p <= 0.0) {
        return invalid(format!("thickness exponent p = {p} outside (-1, 0]"));
    }
    if !(eps > 0.0) || !eps.is_finite() {
        return invalid(format!("thickness ratio must be positive, got {eps}"));
    }
    Ok(())
}

/// Nodal derivatives of one scalar component stored slice by slice.
struct Derivs {
    dx: Vec<f64>,
    dy: Vec<f64>,
    dz: Vec<f64>,
}

fn derivatives(plane: &Grid2, ops: &Ops2, nz: usize, f: &[f64]) -> Derivs {
    let nn = plane.nn();
    let mut dx = vec![0.0; nn * nz];
    let mut dy = vec![0.0; nn * nz];
    for l in 0..nz {
        let s = &f[l * nn..(l + 1) * nn];
        ops.dx.mul_vec_into(s, &mut dx[l * nn..(l + 1) * nn]);
        ops.dy.mul_vec_into(s, &mut dy[l * nn..(l + 1) * nn]);
    }
    let dz1 = d1(nz, 1.0 / (nz - 1) as f64, Ghost::Extrapolate, Ghost::Extrapolate);
    let mut dz = vec![0.0; nn * nz];
    let mut col = vec![0.0; nz];
    for k in 0..nn {
        for l in 0..nz {
            col[l] = f[k + nn * l];
        }
        for (l, v) in dz1.mul_vec(&col).into_iter().enumerate() {
            dz[k + nn * l] = v;
        }
    }
    Derivs { dx, dy, dz }
}

fn gradient_matrices(plane: &Grid2, ops: &Ops2, nz: usize, v: &[[f64; 3]]) -> Vec<Matrix3<f64>> {
    let d: Vec<Derivs> = (0..3).map(|c| derivatives(plane, ops, nz, &v.iter().map(|x| x[c]).collect::<Vec<_>>())).collect();
    (0..v.len())
        .map(|n| Matrix3::from_fn(|i, j| match j {
            0 => d[i].dx[n],
            1 => d[i].dy[n],
            _ => d[i].dz[n],
        }))
        .collect()
}

fn sym(g: &Matrix3<f64>) -> Matrix3<f64> {
    0.5 * (g + g.transpose())
}

/// `½∫_{ω×(0,1)} |κ_ε|² + ν/(1−2ν) tr²κ_ε` with in-plane block `e′(v)`,
/// mixed entries `ε⁻¹e_α3` and transverse entry `ε⁻²e₃₃`.
pub fn film_energy_3d(grid: &Grid3, v: &[[f64; 3]], eps: f64, mp: &MaterialParams) -> Result<f64> {
    mp.check()?;
    let plane = &grid.plane;
    let nz = grid.nz_film;
    if v.len() != plane.nn() * nz {
        return invalid("film field does not match the grid");
    }
    let ops = Ops2::extrapolating(plane);
    let grads = gradient_matrices(plane, &ops, nz, v);
    let wz = simpson(nz, 1.0 / (nz - 1) as f64);
    let wp = plane.weights();
    let c = mp.foundation_coeff();
    let nn = plane.nn();
    let total = (0..nz)
        .map(|l| {
            (0..nn)
                .map(|k| {
                    let e = sym(&grads[k + nn * l]);
                    let mut kap = e;
                    for a in 0..2 {
                        kap[(a, 2)] /= eps;
                        kap[(2, a)] /= eps;
                    }
                    kap[(2, 2)] /= eps * eps;
                    let tr = kap.trace();
                    wp[k] * wz[l] * 0.5 * (kap.norm_squared() + c * tr * tr)
                })
                .sum::<f64>()
        })
        .sum();
    Ok(total)
}

/// Scaled layer strain `κ̂_ε` from the displacement gradient.
fn layer_strain(g: &Matrix3<f64>, p: f64, eps: f64) -> Matrix3<f64> {
    let mut k = Matrix3::zeros();
    for a in 0..2 {
        for b in 0..2 {
            k[(a, b)] = eps * 0.5 * (g[(a, b)] + g[(b, a)]);
        }
        let m = 0.5 * (eps.powf(p + 1.0) * g[(2, a)] + eps.powf(-p) * g[(a, 2)]);
        k[(a, 2)] = m;
        k[(2, a)] = m;
    }
    k[(2, 2)] = g[(2, 2)];
    k
}

/// Scaled energy of the nematic layer: elastic part, Frank curvature and
/// electrostatic work, integrated over `ω × (−1,0)`.
pub fn layer_energy_3d(
    grid: &Grid3,
    field: &Field3,
    p: f64,
    eps: f64,
    mp: &MaterialParams,
    dp: &DielectricParams,
    delta_eps: f64,
) -> Result<(f64, f64, f64)> {
    check_scaling(p, eps)?;
    mp.check()?;
    let plane = &grid.plane;
    let nz = grid.nz_layer;
    let nn = plane.nn();
    let ops = Ops2::extrapolating(plane);
    let grads = gradient_matrices(plane, &ops, nz, &field.layer_v);
    let qd: Vec<Derivs> = (0..6)
        .map(|c| derivatives(plane, &ops, nz, &field.layer_q.iter().map(|q| q.entries()[c]).collect::<Vec<_>>()))
        .collect();
    let pd = derivatives(plane, &ops, nz, &field.layer_phi);
    let wz = simpson(nz, 1.0 / (nz - 1) as f64);
    let wp = plane.weights();
    let c = mp.foundation_coeff();
    let s = eps.powf(-(p + 1.0));
    let (mut elastic, mut curv, mut work) = (0.0, 0.0, 0.0);
    let mult = [1.0, 1.0, 1.0, 2.0, 2.0, 2.0];
    for l in 0..nz {
        for k in 0..nn {
            let n = k + nn * l;
            let w = wp[k] * wz[l];
            let kap = layer_strain(&grads[n], p, eps);
            let q = field.layer_q[n];
            let tr = kap.trace();
            elastic += w * 0.5 * ((kap - q.matrix()).norm_squared() + c * tr * tr);
            if delta_eps != 0.0 {
                let (mut gp2, mut g3) = (0.0, 0.0);
                for e in 0..6 {
                    gp2 += mult[e] * (qd[e].dx[n].powi(2) + qd[e].dy[n].powi(2));
                    g3 += mult[e] * qd[e].dz[n].powi(2);
                }
                curv += w * 0.5 * delta_eps * delta_eps * (eps.powf(2.0 * p + 2.0) * gp2 + g3);
            }
            let gphi = Vector3::new(pd.dx[n], pd.dy[n], s * pd.dz[n]);
            if gphi.norm_squared() > 0.0 {
                let d = d_tensor(&q, dp)?.d;
                work += w * 0.5 * gphi.dot(&(d * gphi));
            }
        }
    }
    Ok((elastic, curv, work))
}

/// All terms of the scaled energy for nodal fields.
pub fn assemble_j3d(
    p: f64,
    eps: f64,
    field: &Field3,
    mp: &MaterialParams,
    dp: &DielectricParams,
    delta_eps: f64,
) -> Result<Energy3d> {
    check_scaling(p, eps)?;
    let film = film_energy_3d(&field.grid, &field.film_v, eps, mp)?;
    let (layer, curvature, electrostatic) = layer_energy_3d(&field.grid, field, p, eps, mp, dp, delta_eps)?;
    Ok(Energy3d { film, layer, curvature, electrostatic, total: film + layer + curvature - electrostatic })
}

/// Film recovery displacement `v′ = ζ′ − x₃∇′ζ₃`, `v₃ = ζ₃ + ε²h` with
/// `h = −ν/(1−ν)(x₃ tr e′(ζ′) − ½x₃² Δ′ζ₃)`, so `h = 0` on the interface.
/// Derivatives of `ζ` are nodal differences.
pub fn recovery_film(grid: &Grid3, ps: &PlateState, eps: f64, mp: &MaterialParams) -> Result<Vec<[f64; 3]>> {
    mp.check()?;
    if ps.representation != Representation::Interface {
        return invalid("recovery expects interface variables");
    }
    let plane = &grid.plane;
    let ops = Ops2::extrapolating(plane);
    let z1 = ps.zeta_prime.component(0);
    let z2 = ps.zeta_prime.component(1);
    let z3 = &ps.zeta3.values;
    let tre: Vec<f64> = ops.dx.mul_vec(&z1).iter().zip(ops.dy.mul_vec(&z2)).map(|(a, b)| a + b).collect();
    let lap: Vec<f64> = ops.dxx.mul_vec(z3).iter().zip(ops.dyy.mul_vec(z3)).map(|(a, b)| a + b).collect();
    let g1 = ops.dx.mul_vec(z3);
    let g2 = ops.dy.mul_vec(z3);
    let c1 = mp.film_coeff();
    let nn = plane.nn();
    let mut v = vec![[0.0; 3]; nn * grid.nz_film];
    for l in 0..grid.nz_film {
        let x3 = grid.z_film(l);
        for k in 0..nn {
            let h = -c1 * (x3 * tre[k] - 0.5 * x3 * x3 * lap[k]);
            v[k + nn * l] = [z1[k] - x3 * g1[k], z2[k] - x3 * g2[k], z3[k] + eps * eps * h];
        }
    }
    Ok(v)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrendRow {
    pub eps: f64,
    pub j3d: f64,
    pub j2d: f64,
    pub gap: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrendTable {
    pub rows: Vec<TrendRow>,
}

impl TrendTable {
    pub fn strictly_decreasing_gap(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].gap < w[0].gap)
    }

    pub fn all_gaps_positive(&self) -> bool {
        self.rows.iter().all(|r| r.gap > 0.0)
    }

    /// Least-squares order `r` in `gap ≈ C εʳ`; `None` if a gap is not
    /// positive.
    pub fn fitted_order(&self) -> Option<f64> {
        if !self.all_gaps_positive() || self.rows.len() < 2 {
            return None;
        }
        let pts: Vec<(f64, f64)> = self.rows.iter().map(|r| (r.eps.ln(), r.gap.ln())).collect();
        Some(crate::microlam::fit_slope(&pts))
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("eps,j3d,j2d,gap\n");
        for r in &self.rows {
            s.push_str(&format!("{:.17e},{:.17e},{:.17e},{:.17e}\n", r.eps, r.j3d, r.j2d, r.gap));
        }
        s
    }
}

/// Film energy along the recovery sequence against the plate film energy,
/// both with nodal differences on free edges.
pub fn film_recovery_trend(plane: &Grid2, ps: &PlateState, eps_list: &[f64], nz: usize, mp: &MaterialParams) -> Result<TrendTable> {
    let grid = Grid3::new(*plane, nz, 3)?;
    let ops = PlateOps::new(plane, &BoundarySpec::free());
    let (j2d, _) = film_energy(&ops, ps, mp)?;
    let rows = eps_list
        .iter()
        .map(|&eps| {
            let v = recovery_film(&grid, ps, eps, mp)?;
            let j3d = film_energy_3d(&grid, &v, eps, mp)?;
            Ok(TrendRow { eps, j3d, j2d, gap: j3d - j2d })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TrendTable { rows })
}

/// Two-variant laminate stacked across the layer thickness, with the
/// compatible displacement correcting the oscillation of the order tensor.
#[derive(Clone, Debug)]
pub struct LayerLaminate {
    pub map: TwoVariantMap,
    pub mollified: MollifiedLaminate,
}

impl LayerLaminate {
    /// Frank directors `n`, `m` with `n − m` parallel to `e₃`, equal
    /// fractions, period `eta` dividing the layer thickness.
    pub fn new(n: &Vector3<f64>, m: &Vector3<f64>, eta: f64, delta: f64) -> Result<Self> {
        let periods = 1.0 / eta;
        if (periods - periods.round()).abs() > 1e-9 {
            return invalid(format!("laminate period {eta} must divide the layer thickness"));
        }
        let map = crate::microlam::two_variant_displacement(n, m, 0.5, eta)?;
        if (map.b - Vector3::z()).norm() > 1e-12 {
            return invalid("laminate must be stacked across the thickness (n − m parallel to e3)");
        }
        let lf = LaminateField {
            normal: Vector3::z(),
            eta,
            directors: vec![*n, *m],
            variants: vec![make_frank(n)?, make_frank(m)?],
            fractions: vec![0.5, 0.5],
        };
        let (mollified, _) = mollify_laminate(&lf, delta)?;
        Ok(LayerLaminate { map, mollified })
    }

    pub fn qbar(&self) -> QTensor {
        self.map.qbar()
    }

    /// `∂₃w`, the transverse derivative of the periodic corrector.
    fn corrector_slope(&self, x3: f64) -> Vector3<f64> {
        (self.map.gradient(&Vector3::new(0.0, 0.0, x3)) - self.qbar().matrix()) * Vector3::z()
    }

    /// Corrector `w = f − Q̄x` on the interface and the clamped bottom.
    pub fn boundary_residual(&self) -> f64 {
        let a = self.map.periodic_part(&Vector3::zeros()).norm();
        let b = self.map.periodic_part(&Vector3::new(0.0, 0.0, -1.0)).norm();
        a.max(b)
    }
}

struct ColumnPoint {
    x3: f64,
    w: f64,
    q: Matrix3<f64>,
    slope: Vector3<f64>,
    curv: f64,
}

fn column_rule(lam: &LayerLaminate, order: usize) -> Vec<ColumnPoint> {
    let (gx, gw) = gauss_legendre(order);
    let eta = lam.mollified.base.eta;
    let periods = (1.0 / eta).round() as i64;
    let bp = lam.mollified.breakpoints();
    let mut pts = Vec::new();
    for k in 0..periods {
        let base = -1.0 + k as f64 * eta;
        for seg in bp.windows(2) {
            let (a, b) = (base + seg[0], base + seg[1]);
            let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
            for (x, w) in gx.iter().zip(&gw) {
                let x3 = mid + half * x;
                let d = lam.mollified.derivative_at(x3);
                pts.push(ColumnPoint {
                    x3,
                    w: half * w,
                    q: lam.mollified.value_at(x3).matrix(),
                    slope: lam.corrector_slope(x3),
                    curv: d.norm_squared(),
                });
            }
        }
    }
    pts
}

/// Layer energy (thin regime) of `v = u*(x′,0)(x₃+1) + w` against the
/// mollified laminate, integrated column by column with breakpoints at the
/// stripe and transition boundaries. Returns (elastic, curvature).
fn layer_recovery_energy(
    plane: &Grid2,
    ps: &PlateState,
    lam: &LayerLaminate,
    eps: f64,
    delta_eps: f64,
    mp: &MaterialParams,
) -> (f64, f64) {
    let ops = Ops2::extrapolating(plane);
    let z1 = ps.zeta_prime.component(0);
    let z2 = ps.zeta_prime.component(1);
    let z3 = &ps.zeta3.values;
    let grads = [ops.dx.mul_vec(&z1), ops.dy.mul_vec(&z1), ops.dx.mul_vec(&z2), ops.dy.mul_vec(&z2), ops.dx.mul_vec(z3), ops.dy.mul_vec(z3)];
    let pts = column_rule(lam, 8);
    let c = mp.foundation_coeff();
    let wp = plane.weights();
    let elastic: f64 = (0..plane.nn())
        .into_par_iter()
        .map(|k| {
            let e = [grads[0][k], grads[3][k], 0.5 * (grads[1][k] + grads[2][k])];
            let zp = [z1[k], z2[k]];
            let dz3 = [grads[4][k], grads[5][k]];
            let mut col = 0.0;
            for pt in &pts {
                let t = pt.x3 + 1.0;
                let mut kap = Matrix3::zeros();
                kap[(0, 0)] = eps * t * e[0];
                kap[(1, 1)] = eps * t * e[1];
                kap[(0, 1)] = eps * t * e[2];
                kap[(1, 0)] = kap[(0, 1)];
                for a in 0..2 {
                    let m = 0.5 * (eps * t * dz3[a] + zp[a] + pt.slope[a]);
                    kap[(a, 2)] = m;
                    kap[(2, a)] = m;
                }
                kap[(2, 2)] = z3[k] + pt.slope[2];
                let tr = kap.trace();
                col += pt.w * 0.5 * ((kap - pt.q).norm_squared() + c * tr * tr);
            }
            wp[k] * col
        })
        .sum();
    let curv_col: f64 = pts.iter().map(|pt| pt.w * 0.5 * delta_eps * delta_eps * pt.curv).sum();
    (elastic, curv_col * plane.area())
}

/// Parameters of the combined recovery sequence: `η = ε²`, `δ = ε³`,
/// `δ_ε = ε³`, thin regime.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UpperBoundSetup {
    pub n: Vector3<f64>,
    pub m: Vector3<f64>,
    pub nz_film: usize,
}

impl Default for UpperBoundSetup {
    fn default() -> Self {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        UpperBoundSetup { n: Vector3::new(s, 0.0, s), m: Vector3::new(s, 0.0, -s), nz_film: 9 }
    }
}

/// One row of the upper-bound trend: 3D energy of film recovery plus
/// layer laminate recovery against the 2D frozen-order energy at `Q̄`.
pub fn upper_bound_row(plane: &Grid2, ps: &PlateState, eps: f64, setup: &UpperBoundSetup, mp: &MaterialParams) -> Result<TrendRow> {
    if !(eps > 0.0 && eps < 0.25) {
        return invalid(format!("thickness ratio {eps} outside (0, 0.25)"));
    }
    let lam = LayerLaminate::new(&setup.n, &setup.m, eps * eps, eps.powi(3))?;
    let qbar = lam.qbar();
    let grid = Grid3::new(*plane, setup.nz_film, 3)?;
    let v = recovery_film(&grid, ps, eps, mp)?;
    let film3 = film_energy_3d(&grid, &v, eps, mp)?;
    let (layer, curv) = layer_recovery_energy(plane, ps, &lam, eps, eps.powi(3), mp);
    let ops = PlateOps::new(plane, &BoundarySpec::free());
    let (film2, _) = film_energy(&ops, ps, mp)?;
    let mut g = vec![0.0; ops.ndofs()];
    let found = frozen_foundation(&ops, &ps.dofs(), &|_| qbar, mp, Regime::Thin, &mut g)?;
    let j3d = film3 + layer + curv;
    let j2d = film2 + found;
    Ok(TrendRow { eps, j3d, j2d, gap: j3d - j2d })
}

pub fn upper_bound_trend(plane: &Grid2, ps: &PlateState, eps_list: &[f64], setup: &UpperBoundSetup, mp: &MaterialParams) -> Result<TrendTable> {
    let rows = eps_list.iter().map(|&e| upper_bound_row(plane, ps, e, setup, mp)).collect::<Result<Vec<_>>>()?;
    Ok(TrendTable { rows })
}

/// Output of the three-dimensional Gauss solve on `ω × (−1,0)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Gauss3dSolution {
    pub grid: Grid3,
    /// Nodal potential on the layer grid.
    pub phi: Vec<f64>,
    pub work: f64,
    /// `x₃`-average of `ε^{−(p+1)}∂₃φ` per in-plane node.
    pub transverse_mean: Vec<f64>,
    pub iterations: usize,
}

const GP: [f64; 2] = [0.211_324_865_405_187_1, 0.788_675_134_594_812_9];

fn hex_shape_grads(xi: [f64; 3], h: [f64; 3]) -> [[f64; 3]; 8] {
    let mut out = [[0.0; 3]; 8];
    for (a, o) in out.iter_mut().enumerate() {
        let (bx, by, bz) = (a & 1, (a >> 1) & 1, (a >> 2) & 1);
        let f = |b: usize, t: f64| if b == 1 { t } else { 1.0 - t };
        let df = |b: usize| if b == 1 { 1.0 } else { -1.0 };
        *o = [
            df(bx) * f(by, xi[1]) * f(bz, xi[2]) / h[0],
            f(bx, xi[0]) * df(by) * f(bz, xi[2]) / h[1],
            f(bx, xi[0]) * f(by, xi[1]) * df(bz) / h[2],
        ];
    }
    out
}

/// Minimises `½∫ (∇′φ, s∂₃φ)ᵀ D(Q) (∇′φ, s∂₃φ)` with `s = ε^{−(p+1)}` over
/// trilinear elements, `φ = φ₀(x′)` on the Dirichlet part of `∂ω × (−1,0)`
/// and natural conditions on the top and bottom faces.
pub fn gauss3d_desk(
    p: f64,
    eps: f64,
    grid: &Grid3,
    q: &(dyn Fn(f64, f64, f64) -> QTensor + Sync),
    dp: &DielectricParams,
    phi0: &BoundaryData,
    bc: &BoundarySpec,
) -> Result<Gauss3dSolution> {
    check_scaling(p, eps)?;
    let plane = &grid.plane;
    let nz = grid.nz_layer;
    let nn = plane.nn();
    let total = nn * nz;
    if total > MAX_NODES_3D {
        return invalid(format!("3D grid with {total} nodes exceeds the desk limit of {MAX_NODES_3D}"));
    }
    let s = eps.powf(-(p + 1.0));
    let h = [plane.hx, plane.hy, 1.0 / (nz - 1) as f64];
    let dir2 = dirichlet_nodes(plane, bc);
    if !dir2.iter().any(|d| *d) {
        return Err(Error::InvalidProblem("Gauss problem has no Dirichlet nodes".into()));
    }
    let node = |i: usize, j: usize, l: usize| plane.idx(i, j) + nn * l;
    let elems: Vec<(usize, usize, usize)> = (0..nz - 1)
        .flat_map(|l| (0..plane.ny - 1).flat_map(move |j| (0..plane.nx - 1).map(move |i| (i, j, l))))
        .collect();
    let shapes: Vec<([f64; 3], [[f64; 3]; 8])> = GP
        .iter()
        .flat_map(|&a| GP.iter().flat_map(move |&b| GP.iter().map(move |&c| [a, b, c])))
        .map(|xi| (xi, hex_shape_grads(xi, h)))
        .collect();
    let vol = h[0] * h[1] * h[2] / 8.0;
    let local: Vec<Result<Vec<(usize, usize, f64)>>> = elems
        .par_iter()
        .map(|&(i, j, l)| {
            let ids: [usize; 8] = std::array::from_fn(|a| node(i + (a & 1), j + ((a >> 1) & 1), l + ((a >> 2) & 1)));
            let mut ke = [[0.0; 8]; 8];
            for (xi, dn) in &shapes {
                let x = plane.x(i) + xi[0] * h[0];
                let y = plane.y(j) + xi[1] * h[1];
                let z = grid.z_layer(l) + xi[2] * h[2];
                let mut d = d_tensor(&q(x, y, z), dp)?.d;
                for r in 0..3 {
                    d[(r, 2)] *= s;
                    d[(2, r)] *= s;
                }
                for a in 0..8 {
                    let ga = Vector3::from(dn[a]);
                    let da = d * ga;
                    for b in 0..8 {
                        ke[a][b] += vol * da.dot(&Vector3::from(dn[b]));
                    }
                }
            }
            Ok((0..64).map(|t| (ids[t / 8], ids[t % 8], ke[t / 8][t % 8])).collect())
        })
        .collect();
    let mut trips = Vec::with_capacity(64 * elems.len());
    for r in local {
        trips.extend(r?);
    }
    let k = Csr::from_triplets(total, total, trips);
    let dir: Vec<bool> = (0..total).map(|n| dir2[n % nn]).collect();
    let mut bnd: Vec<f64> = (0..total)
        .map(|n| {
            let (x, y) = plane.coords(n % nn);
            phi0.eval(x, y)
        })
        .collect();
    for &(k2, val) in &phi0.overrides {
        if k2 >= nn || !dir2[k2] {
            return invalid(format!("potential override at node {k2} is not on a Dirichlet edge"));
        }
        for l in 0..nz {
            bnd[k2 + nn * l] = val;
        }
    }
    let free: Vec<usize> = (0..total).filter(|n| !dir[*n]).collect();
    let mut map = vec![usize::MAX; total];
    for (a, f) in free.iter().enumerate() {
        map[*f] = a;
    }
    let mut lifted = bnd.clone();
    for f in &free {
        lifted[*f] = 0.0;
    }
    let kb = k.mul_vec(&lifted);
    let rhs: Vec<f64> = free.iter().map(|f| -kb[*f]).collect();
    let kff = Csr::from_triplets(
        free.len(),
        free.len(),
        k.triplets().into_iter().filter(|(r, c, _)| !dir[*r] && !dir[*c]).map(|(r, c, v)| (map[r], map[c], v)).collect(),
    );
    let diag = kff.diagonal();
    let x0: Vec<f64> = free.iter().map(|f| bnd[*f]).collect();
    let out = pcg(
        |x| kff.mul_vec(x),
        |r| r.iter().zip(&diag).map(|(a, b)| a / b).collect(),
        &rhs,
        Some(&x0),
        GAUSS3D_TOL,
        50 * total,
    );
    if !out.converged {
        return Err(Error::Solver(format!("3D Gauss solve stalled at relative residual {:.3e}", out.rel_residual)));
    }
    let mut phi = bnd;
    for (a, f) in free.iter().enumerate() {
        phi[*f] = out.x[a];
    }
    let kp = k.mul_vec(&phi);
    let work = 0.5 * phi.iter().zip(&kp).map(|(a, b)| a * b).sum::<f64>();
    let transverse_mean = (0..nn).map(|k2| s * (phi[k2 + nn * (nz - 1)] - phi[k2])).collect();
    Ok(Gauss3dSolution { grid: *grid, phi, work, transverse_mean, iterations: out.iterations })
}
