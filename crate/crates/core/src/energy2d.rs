//! Limit plate functionals on a structured grid: film energy, relaxed and
//! actuated foundations, electrostatic work and loads, with exact gradients
//! of the discrete energies, plus the interface/mid-section shift.

use crate::dielectric::{d_tensor, schur_b, DielectricParams};
use crate::error::{invalid, Result};
use crate::foundation::{frozen_density, relaxed_density, FoundationSample, MaterialParams, Regime};
use crate::gauss2d::electrostatic_work;
use crate::grid::{apply_clamped, grad2, BoundarySpec, DofMask, Edge, Grid2, Ops2, ScalarField2, VectorField2};
use crate::linalg::{Csr, SymBand};
use crate::qtensor::{QTensor, MEMBERSHIP_TOL};

/// Which plate variables a state carries.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Representation {
    /// Displacement of the film/layer interface.
    Interface,
    /// Displacement of the film mid-section.
    Midsection,
}

/// Reading of the film cross term in the actuated energy.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum CrossTerm {
    /// `−e′(ζ′) : ∇′∇′ζ₃`.
    #[default]
    Hessian,
    /// `+div′e′(ζ′) · ∇′ζ₃`, equal to the Hessian form up to boundary terms
    /// that vanish for clamped plates.
    GradientByParts,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Flavor {
    Relaxation,
    Actuation,
}

/// Thickness exponent and energy flavour. Derived exponents follow
/// `q = 2 − p` and `r = p + 1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScalingRegime {
    pub p: f64,
    pub flavor: Flavor,
    pub eps: f64,
    pub delta_eps: f64,
    pub phi0_gauge: f64,
}

impl ScalingRegime {
    pub fn new(p: f64, flavor: Flavor) -> Result<Self> {
        let r = ScalingRegime { p, flavor, eps: 0.1, delta_eps: 0.0, phi0_gauge: 1.0 };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p > -1.0 && self.p <= 0.0) {
            return invalid(format!("thickness exponent p = {} outside (-1, 0]", self.p));
        }
        Ok(())
    }

    pub fn regime(&self) -> Regime {
        if self.p == 0.0 { Regime::Thin } else { Regime::Thick }
    }

    pub fn q(&self) -> f64 {
        2.0 - self.p
    }

    pub fn r(&self) -> f64 {
        self.p + 1.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlateState {
    pub zeta_prime: VectorField2,
    pub zeta3: ScalarField2,
    pub representation: Representation,
}

impl PlateState {
    pub fn zeros(g: &Grid2, representation: Representation) -> Self {
        PlateState { zeta_prime: VectorField2::zeros(g), zeta3: ScalarField2::zeros(g), representation }
    }

    pub fn from_fns(
        g: &Grid2,
        z1: impl Fn(f64, f64) -> f64,
        z2: impl Fn(f64, f64) -> f64,
        z3: impl Fn(f64, f64) -> f64,
        representation: Representation,
    ) -> Self {
        let a = g.sample(z1).values;
        let b = g.sample(z2).values;
        PlateState { zeta_prime: VectorField2::from_components(g, &a, &b), zeta3: g.sample(z3), representation }
    }

    /// Interleaved degrees of freedom `(ζ₁, ζ₂, ζ₃)` per node.
    pub fn dofs(&self) -> Vec<f64> {
        let mut u = Vec::with_capacity(3 * self.zeta3.values.len());
        for (p, z) in self.zeta_prime.values.iter().zip(&self.zeta3.values) {
            u.extend_from_slice(&[p[0], p[1], *z]);
        }
        u
    }

    pub fn from_dofs(g: &Grid2, u: &[f64], representation: Representation) -> Self {
        let nn = g.nn();
        assert_eq!(u.len(), 3 * nn);
        PlateState {
            zeta_prime: VectorField2 { nx: g.nx, ny: g.ny, values: (0..nn).map(|k| [u[3 * k], u[3 * k + 1]]).collect() },
            zeta3: ScalarField2 { nx: g.nx, ny: g.ny, values: (0..nn).map(|k| u[3 * k + 2]).collect() },
            representation,
        }
    }
}

/// Per-term energy values. `total = Σ parts − electrostatic − load_work`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EnergyBreakdown {
    pub film_membrane: f64,
    pub film_cross: f64,
    pub film_bending: f64,
    pub film_trace: f64,
    pub foundation: f64,
    pub electrostatic: f64,
    pub load_work: f64,
    pub total: f64,
}

impl EnergyBreakdown {
    pub fn film(&self) -> f64 {
        self.film_membrane + self.film_cross + self.film_bending + self.film_trace
    }

    pub fn mechanical(&self) -> f64 {
        self.film() + self.foundation
    }

    pub fn finish(mut self) -> Self {
        self.total = self.mechanical() - self.electrostatic - self.load_work;
        self
    }

    pub fn entries(&self) -> [(&'static str, f64); 8] {
        [
            ("film_membrane", self.film_membrane),
            ("film_cross", self.film_cross),
            ("film_bending", self.film_bending),
            ("film_trace", self.film_trace),
            ("foundation", self.foundation),
            ("electrostatic", self.electrostatic),
            ("load_work", self.load_work),
            ("total", self.total),
        ]
    }
}

/// Distributed loads on the interface displacement.
#[derive(Clone, Debug, PartialEq)]
pub struct Loads {
    pub f_prime: VectorField2,
    pub f3: ScalarField2,
}

impl Loads {
    pub fn zero(g: &Grid2) -> Self {
        Loads { f_prime: VectorField2::zeros(g), f3: ScalarField2::zeros(g) }
    }

    pub fn transverse(g: &Grid2, f3: impl Fn(f64, f64) -> f64) -> Self {
        Loads { f_prime: VectorField2::zeros(g), f3: g.sample(f3) }
    }

    pub fn is_zero(&self) -> bool {
        self.f3.values.iter().all(|v| *v == 0.0) && self.f_prime.values.iter().all(|v| v[0] == 0.0 && v[1] == 0.0)
    }
}

const N_FILM: usize = 6;

/// Discrete strain operators over the interleaved state for one grid and
/// boundary specification.
#[derive(Clone, Debug)]
pub struct PlateOps {
    pub grid: Grid2,
    pub bc: BoundarySpec,
    pub weights: Vec<f64>,
    pub mask: DofMask,
    /// `e₁₁, e₂₂, e₁₂, H₁₁, H₂₂, H₁₂`.
    pub film: [Csr; N_FILM],
    /// `(div′e′)₁, (div′e′)₂, ∂₁ζ₃, ∂₂ζ₃`.
    pub by_parts: [Csr; 4],
}

impl PlateOps {
    pub fn new(grid: &Grid2, bc: &BoundarySpec) -> Self {
        let nn = grid.nn();
        let n = 3 * nn;
        let op = Ops2::extrapolating(grid);
        let ghosts = [bc.zeta3_ghost(Edge::Left), bc.zeta3_ghost(Edge::Right), bc.zeta3_ghost(Edge::Bottom), bc.zeta3_ghost(Edge::Top)];
        let o3 = Ops2::new(grid, ghosts);
        let il = |blocks: &[(&Csr, usize, f64)]| Csr::interleave(nn, n, 3, blocks);
        let e11 = il(&[(&op.dx, 0, 1.0)]);
        let e22 = il(&[(&op.dy, 1, 1.0)]);
        let e12 = il(&[(&op.dy, 0, 0.5), (&op.dx, 1, 0.5)]);
        let h11 = il(&[(&o3.dxx, 2, 1.0)]);
        let h22 = il(&[(&o3.dyy, 2, 1.0)]);
        let h12 = il(&[(&o3.dxy, 2, 1.0)]);
        let sum = |a: Csr, b: Csr| {
            let mut t = a.triplets();
            t.extend(b.triplets());
            Csr::from_triplets(nn, n, t)
        };
        let de1 = sum(op.dx.matmul(&e11), op.dy.matmul(&e12));
        let de2 = sum(op.dx.matmul(&e12), op.dy.matmul(&e22));
        let g1 = il(&[(&o3.dx, 2, 1.0)]);
        let g2 = il(&[(&o3.dy, 2, 1.0)]);
        PlateOps {
            grid: *grid,
            bc: *bc,
            weights: grid.weights(),
            mask: apply_clamped(grid, bc),
            film: [e11, e22, e12, h11, h22, h12],
            by_parts: [de1, de2, g1, g2],
        }
    }

    pub fn ndofs(&self) -> usize {
        3 * self.grid.nn()
    }

    fn channels(&self, u: &[f64], cross: CrossTerm) -> Vec<Vec<f64>> {
        let mut ch: Vec<Vec<f64>> = self.film.iter().map(|c| c.mul_vec(u)).collect();
        if cross == CrossTerm::GradientByParts {
            ch.extend(self.by_parts.iter().map(|c| c.mul_vec(u)));
        }
        ch
    }

    fn channel_ops(&self, cross: CrossTerm) -> Vec<&Csr> {
        let mut v: Vec<&Csr> = self.film.iter().collect();
        if cross == CrossTerm::GradientByParts {
            v.extend(self.by_parts.iter());
        }
        v
    }
}

/// Film integrand form.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FilmForm {
    Interface(CrossTerm),
    Midsection,
}

fn inner(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + 2.0 * a[2] * b[2]
}

/// Pointwise film integrand split as (membrane, cross, bending, trace), with
/// the gradient in the channel values.
fn film_density(c: &[f64], c1: f64, form: FilmForm, grad: &mut [f64]) -> [f64; 4] {
    let e = [c[0], c[1], c[2]];
    let h = [c[3], c[4], c[5]];
    let tre = e[0] + e[1];
    let trh = h[0] + h[1];
    grad.iter_mut().for_each(|g| *g = 0.0);
    let (kb, kt) = match form {
        FilmForm::Interface(_) => (1.0 / 3.0, 1.0 / 3.0),
        FilmForm::Midsection => (1.0 / 12.0, 1.0 / 12.0),
    };
    let membrane = inner(e, e);
    let bending = kb * inner(h, h);
    grad[0] = 2.0 * e[0] + c1 * 2.0 * tre;
    grad[1] = 2.0 * e[1] + c1 * 2.0 * tre;
    grad[2] = 4.0 * e[2];
    grad[3] = 2.0 * kb * h[0] + c1 * 2.0 * kt * trh;
    grad[4] = 2.0 * kb * h[1] + c1 * 2.0 * kt * trh;
    grad[5] = 4.0 * kb * h[2];
    let mut trace = c1 * (tre * tre + kt * trh * trh);
    let mut cross = 0.0;
    match form {
        FilmForm::Interface(CrossTerm::Hessian) => {
            cross = -inner(e, h);
            trace -= c1 * tre * trh;
            grad[0] += -h[0] - c1 * trh;
            grad[1] += -h[1] - c1 * trh;
            grad[2] += -2.0 * h[2];
            grad[3] += -e[0] - c1 * tre;
            grad[4] += -e[1] - c1 * tre;
            grad[5] += -2.0 * e[2];
        }
        FilmForm::Interface(CrossTerm::GradientByParts) => {
            cross = c[6] * c[8] + c[7] * c[9];
            trace -= c1 * tre * trh;
            grad[0] += -c1 * trh;
            grad[1] += -c1 * trh;
            grad[3] += -c1 * tre;
            grad[4] += -c1 * tre;
            grad[6] = c[8];
            grad[7] = c[9];
            grad[8] = c[6];
            grad[9] = c[7];
        }
        FilmForm::Midsection => {}
    }
    [membrane, cross, bending, trace]
}

fn film_terms(ops: &PlateOps, u: &[f64], mp: &MaterialParams, form: FilmForm) -> ([f64; 4], Vec<f64>) {
    let cross = match form {
        FilmForm::Interface(c) => c,
        FilmForm::Midsection => CrossTerm::Hessian,
    };
    let ch = ops.channels(u, cross);
    let nch = ch.len();
    let c1 = mp.film_coeff();
    let mut parts = [0.0; 4];
    let mut dch = vec![vec![0.0; ops.grid.nn()]; nch];
    let mut cv = vec![0.0; nch];
    let mut g = vec![0.0; nch];
    for k in 0..ops.grid.nn() {
        for a in 0..nch {
            cv[a] = ch[a][k];
        }
        let p = film_density(&cv, c1, form, &mut g);
        let w = 0.5 * ops.weights[k];
        for i in 0..4 {
            parts[i] += w * p[i];
        }
        for a in 0..nch {
            dch[a][k] = w * g[a];
        }
    }
    let mut grad = vec![0.0; ops.ndofs()];
    for (op, d) in ops.channel_ops(cross).iter().zip(&dch) {
        op.tmul_add(d, &mut grad);
    }
    (parts, grad)
}

fn check_interface(ps: &PlateState) -> Result<()> {
    if ps.representation != Representation::Interface {
        return invalid("energy expects interface variables; apply kl_shift first");
    }
    Ok(())
}

/// `½∫ |e′|² − e′:H + ⅓|H|² + ν/(1−ν)(tr²e′ − tr e′ Δζ₃ + ⅓(Δζ₃)²)`.
pub fn film_energy(ops: &PlateOps, ps: &PlateState, mp: &MaterialParams) -> Result<(f64, Vec<f64>)> {
    check_interface(ps)?;
    mp.check()?;
    let (p, g) = film_terms(ops, &ps.dofs(), mp, FilmForm::Interface(CrossTerm::Hessian));
    Ok((p.iter().sum(), g))
}

/// Film energy in mid-section variables: `½∫ |e′♯|² + (1/12)|H|² +
/// ν/(1−ν)(tr²e′♯ + (1/12)(Δζ₃)²)`.
pub fn film_energy_midsection(ops: &PlateOps, ps: &PlateState, mp: &MaterialParams) -> Result<(f64, Vec<f64>)> {
    if ps.representation != Representation::Midsection {
        return invalid("mid-section energy expects mid-section variables");
    }
    mp.check()?;
    let (p, g) = film_terms(ops, &ps.dofs(), mp, FilmForm::Midsection);
    Ok((p.iter().sum(), g))
}

fn film_breakdown(p: [f64; 4]) -> EnergyBreakdown {
    EnergyBreakdown { film_membrane: p[0], film_cross: p[1], film_bending: p[2], film_trace: p[3], ..Default::default() }
}

fn relaxed_foundation(ops: &PlateOps, u: &[f64], mp: &MaterialParams, regime: Regime, grad: &mut [f64]) -> Result<f64> {
    let mut total = 0.0;
    for k in 0..ops.grid.nn() {
        let s = FoundationSample::new([u[3 * k], u[3 * k + 1]], u[3 * k + 2], regime);
        let (v, g) = relaxed_density(&s, mp)?;
        let w = 0.5 * ops.weights[k];
        total += w * v;
        for c in 0..3 {
            grad[3 * k + c] += w * g[c];
        }
    }
    Ok(total)
}

/// Frozen foundation with a (possibly node-dependent) order tensor.
pub(crate) fn frozen_foundation(
    ops: &PlateOps,
    u: &[f64],
    q: &dyn Fn(usize) -> QTensor,
    mp: &MaterialParams,
    regime: Regime,
    grad: &mut [f64],
) -> Result<f64> {
    let mut total = 0.0;
    for k in 0..ops.grid.nn() {
        let s = FoundationSample::new([u[3 * k], u[3 * k + 1]], u[3 * k + 2], regime);
        let (v, g) = frozen_density(&s, &q(k), mp)?;
        let w = 0.5 * ops.weights[k];
        total += w * v;
        for c in 0..3 {
            grad[3 * k + c] += w * g[c];
        }
    }
    Ok(total)
}

/// Relaxed plate energy: film plus `½∫ dist²(K, Q_B) + ν/(1−2ν) ζ₃²`, where
/// the thick regime evaluates `K(0, ζ₃)`.
pub fn j_relax(
    ops: &PlateOps,
    ps: &PlateState,
    mp: &MaterialParams,
    regime: Regime,
) -> Result<(f64, Vec<f64>, EnergyBreakdown)> {
    check_interface(ps)?;
    mp.check()?;
    let u = ps.dofs();
    let (p, mut grad) = film_terms(ops, &u, mp, FilmForm::Interface(CrossTerm::Hessian));
    let mut b = film_breakdown(p);
    b.foundation = relaxed_foundation(ops, &u, mp, regime, &mut grad)?;
    let b = b.finish();
    Ok((b.total, grad, b))
}

/// Thick relaxed energy written in mid-section variables.
pub fn j_relax_midsection(ops: &PlateOps, ps: &PlateState, mp: &MaterialParams) -> Result<(f64, Vec<f64>, EnergyBreakdown)> {
    if ps.representation != Representation::Midsection {
        return invalid("mid-section energy expects mid-section variables");
    }
    mp.check()?;
    let u = ps.dofs();
    let (p, mut grad) = film_terms(ops, &u, mp, FilmForm::Midsection);
    let mut b = film_breakdown(p);
    b.foundation = relaxed_foundation(ops, &u, mp, Regime::Thick, &mut grad)?;
    let b = b.finish();
    Ok((b.total, grad, b))
}

/// Reduced dielectric matrix `B̄(Q̄)`.
pub fn reduced_dielectric(qbar: &QTensor, dp: &DielectricParams) -> Result<crate::dielectric::ReducedDielectric> {
    schur_b(&d_tensor(qbar, dp)?)
}

/// Actuated plate energy with a constant order tensor:
/// film + `½∫` frozen density `− ½∫ ∇′φ̄ᵀ B̄(Q̄) ∇′φ̄`. The gradient is taken in
/// the displacement only.
#[allow(clippy::too_many_arguments)]
pub fn j_actuation(
    ops: &PlateOps,
    ps: &PlateState,
    qbar: &QTensor,
    phibar: Option<&ScalarField2>,
    mp: &MaterialParams,
    dp: &DielectricParams,
    regime: Regime,
    cross: CrossTerm,
) -> Result<(f64, Vec<f64>, EnergyBreakdown)> {
    check_interface(ps)?;
    mp.check()?;
    if qbar.qb_violation() > MEMBERSHIP_TOL {
        return invalid("order tensor lies outside the De Gennes set");
    }
    let u = ps.dofs();
    let (p, mut grad) = film_terms(ops, &u, mp, FilmForm::Interface(cross));
    let mut b = film_breakdown(p);
    b.foundation = frozen_foundation(ops, &u, &|_| *qbar, mp, regime, &mut grad)?;
    if let Some(phi) = phibar {
        b.electrostatic = electrostatic_work(&ops.grid, phi, &reduced_dielectric(qbar, dp)?);
    }
    let b = b.finish();
    Ok((b.total, grad, b))
}

/// Work of distributed loads, `∫ f′·ζ′ + f₃ζ₃`.
pub fn load_work(ops: &PlateOps, loads: &Loads, ps: &PlateState) -> f64 {
    let g = load_gradient(ops, loads);
    g.iter().zip(ps.dofs()).map(|(a, b)| a * b).sum()
}

/// Gradient of the load work in the variables of `repr`; mid-section
/// variables see the in-plane load through `½∇′ζ₃`.
pub(crate) fn load_gradient_in(ops: &PlateOps, loads: &Loads, repr: Representation) -> Vec<f64> {
    let mut g = load_gradient(ops, loads);
    if repr == Representation::Midsection {
        let nn = ops.grid.nn();
        let wf1: Vec<f64> = (0..nn).map(|k| 0.5 * g[3 * k]).collect();
        let wf2: Vec<f64> = (0..nn).map(|k| 0.5 * g[3 * k + 1]).collect();
        let op = Ops2::extrapolating(&ops.grid);
        let mut extra = vec![0.0; nn];
        op.dx.tmul_add(&wf1, &mut extra);
        op.dy.tmul_add(&wf2, &mut extra);
        for k in 0..nn {
            g[3 * k + 2] += extra[k];
        }
    }
    g
}

pub(crate) fn load_gradient(ops: &PlateOps, loads: &Loads) -> Vec<f64> {
    let mut g = vec![0.0; ops.ndofs()];
    for k in 0..ops.grid.nn() {
        let w = ops.weights[k];
        g[3 * k] = w * loads.f_prime.values[k][0];
        g[3 * k + 1] = w * loads.f_prime.values[k][1];
        g[3 * k + 2] = w * loads.f3.values[k];
    }
    g
}

/// Converts between interface and mid-section variables through
/// `ζ′ = ζ′♯ + ½∇′ζ₃`.
pub fn kl_shift(g: &Grid2, ps: &PlateState) -> PlateState {
    let grad = grad2(g, &ps.zeta3);
    let (sign, repr) = match ps.representation {
        Representation::Interface => (-0.5, Representation::Midsection),
        Representation::Midsection => (0.5, Representation::Interface),
    };
    let values = ps
        .zeta_prime
        .values
        .iter()
        .zip(&grad.values)
        .map(|(z, d)| [z[0] + sign * d[0], z[1] + sign * d[1]])
        .collect();
    PlateState { zeta_prime: VectorField2 { nx: g.nx, ny: g.ny, values }, zeta3: ps.zeta3.clone(), representation: repr }
}

/// Hessian of the quadratic part shared by the actuated energy and the
/// majorised relaxed energy, restricted to free degrees of freedom.
pub fn assemble_hessian(ops: &PlateOps, mp: &MaterialParams, regime: Regime, cross: CrossTerm) -> (SymBand, Vec<usize>) {
    assemble_hessian_form(ops, mp, regime, FilmForm::Interface(cross))
}

/// As [`assemble_hessian`] for any film form.
pub fn assemble_hessian_form(ops: &PlateOps, mp: &MaterialParams, regime: Regime, form: FilmForm) -> (SymBand, Vec<usize>) {
    let cross = match form {
        FilmForm::Interface(c) => c,
        FilmForm::Midsection => CrossTerm::Hessian,
    };
    let chops = ops.channel_ops(cross);
    let nch = chops.len();
    let c1 = mp.film_coeff();
    let mut m = vec![vec![0.0; nch]; nch];
    let mut unit = vec![0.0; nch];
    let mut g = vec![0.0; nch];
    for b in 0..nch {
        unit.iter_mut().for_each(|v| *v = 0.0);
        unit[b] = 1.0;
        film_density(&unit, c1, form, &mut g);
        for a in 0..nch {
            m[a][b] = 0.5 * g[a];
        }
    }
    let cf = mp.foundation_coeff();
    let fdiag = match regime {
        Regime::Thin => [1.0, 1.0, 2.0 + 2.0 * cf],
        Regime::Thick => [0.0, 0.0, 2.0 + 2.0 * cf],
    };
    let free = ops.mask.free_indices();
    let mut map = vec![usize::MAX; ops.ndofs()];
    for (i, f) in free.iter().enumerate() {
        map[*f] = i;
    }
    let nn = ops.grid.nn();
    let local_cols = |k: usize| -> Vec<usize> {
        let mut cols: Vec<usize> = chops.iter().flat_map(|c| c.row(k).map(|(j, _)| j)).collect();
        cols.extend([3 * k, 3 * k + 1, 3 * k + 2]);
        cols.sort_unstable();
        cols.dedup();
        cols.retain(|c| map[*c] != usize::MAX);
        cols
    };
    let mut bw = 0;
    for k in 0..nn {
        let cols = local_cols(k);
        if let (Some(a), Some(b)) = (cols.first(), cols.last()) {
            bw = bw.max(map[*b] - map[*a]);
        }
    }
    let mut h = SymBand::zeros(free.len(), bw);
    for k in 0..nn {
        let cols = local_cols(k);
        let nc = cols.len();
        let mut cl = vec![vec![0.0; nc]; nch];
        for (a, op) in chops.iter().enumerate() {
            for (j, v) in op.row(k) {
                if let Ok(pos) = cols.binary_search(&j) {
                    cl[a][pos] += v;
                }
            }
        }
        let w = ops.weights[k];
        for (p, &gp) in cols.iter().enumerate() {
            for (q, &gq) in cols.iter().enumerate().take(p + 1) {
                let mut s = 0.0;
                for a in 0..nch {
                    if cl[a][p] == 0.0 {
                        continue;
                    }
                    for b in 0..nch {
                        s += cl[a][p] * m[a][b] * cl[b][q];
                    }
                }
                if s != 0.0 {
                    h.add_lower(map[gp], map[gq], w * s);
                }
            }
        }
        for c in 0..3 {
            let d = 3 * k + c;
            if map[d] != usize::MAX && fdiag[c] != 0.0 {
                h.add_lower(map[d], map[d], 0.5 * w * fdiag[c]);
            }
        }
    }
    (h, free)
}
