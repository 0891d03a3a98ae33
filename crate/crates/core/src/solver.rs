//! Minimisation drivers: convex actuation at a frozen order tensor, the
//! min-max equilibrium over constant order tensors and the relaxed plate
//! with loads.
//!
//! Every plate energy handled here is quadratic, or majorised by a quadratic,
//! with one Hessian that does not depend on the order tensor. A
//! [`QuadraticModel`] assembles it once in band storage and factors it, so
//! each inner solve is a preconditioned CG run that converges in one or two
//! steps.

use std::time::{Duration, Instant};

use nalgebra::Vector3;
use rayon::prelude::*;

use crate::dielectric::DielectricParams;
use crate::energy2d::{
    assemble_hessian_form, frozen_foundation, j_actuation, j_relax, j_relax_midsection, kl_shift, load_gradient_in,
    reduced_dielectric, CrossTerm, EnergyBreakdown, FilmForm, Loads, PlateOps, PlateState, Representation,
};
use crate::error::{invalid, Error, Result};
use crate::foundation::{k_matrix, MaterialParams, Regime};
use crate::gauss2d::{solve_gauss_with, BoundaryData, GaussProblem};
use crate::grid::{BoundarySpec, Grid2, ScalarField2};
use crate::linalg::{norm, pcg, BandCholesky, CgOutcome, SymBand};
use crate::qtensor::{from_coords5, make_frank, project_qb, to_coords5, QSet, QTensor, MEMBERSHIP_TOL};

/// Environment variable overriding the worker count.
pub const THREADS_ENV: &str = "NEMATOPLATE_THREADS";

const INNER_TOL: f64 = 1e-12;
const OUTER_TOL: f64 = 1e-6;
const FD_STEP: f64 = 1e-5;
const TIE_REL: f64 = 1e-9;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SolveReport {
    pub iterations: usize,
    pub grad_norm: f64,
    pub energy_trace: Vec<f64>,
    pub wall_time: Duration,
    pub breakdown: EnergyBreakdown,
    pub converged: bool,
}

impl SolveReport {
    pub fn trace_is_monotone(&self, tol: f64) -> bool {
        self.energy_trace.windows(2).all(|w| w[1] <= w[0] + tol * (1.0 + w[0].abs()))
    }
}

/// Everything but the order tensor and the boundary datum of the potential.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlateProblem {
    pub grid: Grid2,
    pub bc: BoundarySpec,
    pub mp: MaterialParams,
    pub dp: DielectricParams,
    pub regime: Regime,
    pub cross: CrossTerm,
}

impl PlateProblem {
    pub fn new(grid: Grid2, bc: BoundarySpec) -> Self {
        PlateProblem {
            grid,
            bc,
            mp: MaterialParams::default(),
            dp: DielectricParams::default(),
            regime: Regime::Thin,
            cross: CrossTerm::Hessian,
        }
    }
}

/// Builds a worker pool; `None` falls back to [`THREADS_ENV`] and then to
/// the rayon default.
pub fn thread_pool(threads: Option<usize>) -> Result<rayon::ThreadPool> {
    let n = match threads {
        Some(n) => n,
        None => match std::env::var(THREADS_ENV) {
            Ok(v) => v.trim().parse().map_err(|_| Error::InvalidArgument(format!("{THREADS_ENV}={v} is not a count")))?,
            Err(_) => 0,
        },
    };
    rayon::ThreadPoolBuilder::new().num_threads(n).build().map_err(|e| Error::Solver(e.to_string()))
}

/// Factored Hessian of the plate energy over the free degrees of freedom.
#[derive(Clone, Debug)]
pub struct QuadraticModel {
    pub ops: PlateOps,
    pub mp: MaterialParams,
    pub regime: Regime,
    pub form: FilmForm,
    hess: SymBand,
    chol: BandCholesky,
    free: Vec<usize>,
}

impl QuadraticModel {
    pub fn new(grid: &Grid2, bc: &BoundarySpec, mp: &MaterialParams, regime: Regime, form: FilmForm) -> Result<Self> {
        mp.check_convex()?;
        let ops = PlateOps::new(grid, bc);
        let (hess, free) = assemble_hessian_form(&ops, mp, regime, form);
        let chol = hess.cholesky().map_err(|_| {
            Error::InvalidProblem("plate energy is only semidefinite for these boundary conditions; clamp an edge".into())
        })?;
        Ok(QuadraticModel { ops, mp: *mp, regime, form, hess, chol, free })
    }

    pub fn representation(&self) -> Representation {
        match self.form {
            FilmForm::Interface(_) => Representation::Interface,
            FilmForm::Midsection => Representation::Midsection,
        }
    }

    pub fn free(&self) -> &[usize] {
        &self.free
    }

    pub fn restrict(&self, full: &[f64]) -> Vec<f64> {
        self.free.iter().map(|i| full[*i]).collect()
    }

    pub fn expand(&self, x: &[f64]) -> Vec<f64> {
        let mut u = vec![0.0; self.ops.ndofs()];
        for (v, i) in x.iter().zip(&self.free) {
            u[*i] = *v;
        }
        u
    }

    /// Rayleigh quotient `xᵀHx / xᵀx` of the assembled Hessian.
    pub fn rayleigh(&self, x: &[f64]) -> f64 {
        let hx = self.hess.mul_vec(x);
        crate::linalg::dot(x, &hx) / crate::linalg::dot(x, x)
    }

    /// Minimises `½xᵀHx + g₀ᵀx` where `g₀` is the full gradient at zero.
    pub fn solve(&self, g0: &[f64], x0: Option<&[f64]>) -> CgOutcome {
        let b: Vec<f64> = self.free.iter().map(|i| -g0[*i]).collect();
        let x0 = x0.map(|u| self.restrict(u));
        pcg(|x| self.hess.mul_vec(x), |r| self.chol.solve(r), &b, x0.as_deref(), INNER_TOL, 50)
    }

    /// Linear part for a node-dependent frozen order tensor and loads.
    pub fn linear_term(&self, q: &dyn Fn(usize) -> QTensor, loads: Option<&Loads>) -> Result<Vec<f64>> {
        let zero = vec![0.0; self.ops.ndofs()];
        let mut g = vec![0.0; self.ops.ndofs()];
        frozen_foundation(&self.ops, &zero, q, &self.mp, self.regime, &mut g)?;
        if let Some(l) = loads {
            for (gi, li) in g.iter_mut().zip(load_gradient_in(&self.ops, l, self.representation())) {
                *gi -= li;
            }
        }
        Ok(g)
    }

    fn free_norm(&self, g: &[f64]) -> f64 {
        norm(&self.restrict(g))
    }
}

fn check_q(qbar: &QTensor) -> Result<()> {
    let v = qbar.qb_violation();
    if v > MEMBERSHIP_TOL {
        return invalid(format!("order tensor lies outside the De Gennes set (violation {v:.3e})"));
    }
    Ok(())
}

fn gauss_problem(pb: &PlateProblem, qbar: &QTensor, phi0: &BoundaryData) -> Result<GaussProblem> {
    Ok(GaussProblem { b: reduced_dielectric(qbar, &pb.dp)?, phi0: phi0.clone(), bc: pb.bc })
}

/// Inner solution at a fixed order tensor.
#[derive(Clone, Debug)]
pub struct InnerSolution {
    pub state: PlateState,
    pub phi: Option<ScalarField2>,
    pub energy: f64,
    pub breakdown: EnergyBreakdown,
    pub grad_norm: f64,
    pub outcome: CgOutcome,
}

/// Solves Gauss for `B̄(Q̄)` (when a datum is given) and then the convex
/// displacement problem. Warm starts are optional.
pub fn inner_solve(
    model: &QuadraticModel,
    pb: &PlateProblem,
    qbar: &QTensor,
    phi0: Option<&BoundaryData>,
    warm: Option<(&[f64], Option<&ScalarField2>)>,
) -> Result<InnerSolution> {
    let g = &pb.grid;
    let phi = match phi0 {
        Some(d) if !d.is_zero() => {
            let guess = warm.and_then(|w| w.1);
            Some(solve_gauss_with(&gauss_problem(pb, qbar, d)?, g, guess)?.0)
        }
        Some(_) => Some(ScalarField2::zeros(g)),
        None => None,
    };
    let q = *qbar;
    let g0 = model.linear_term(&|_| q, None)?;
    let outcome = model.solve(&g0, warm.map(|w| w.0));
    let u = model.expand(&outcome.x);
    let state = PlateState::from_dofs(g, &u, Representation::Interface);
    let (energy, grad, breakdown) = j_actuation(&model.ops, &state, qbar, phi.as_ref(), &pb.mp, &pb.dp, pb.regime, pb.cross)?;
    let grad_norm = model.free_norm(&grad);
    Ok(InnerSolution { state, phi, energy, breakdown, grad_norm, outcome })
}

fn actuation_model(pb: &PlateProblem) -> Result<QuadraticModel> {
    QuadraticModel::new(&pb.grid, &pb.bc, &pb.mp, pb.regime, FilmForm::Interface(pb.cross))
}

/// Unique minimiser of the actuated energy at a constant order tensor.
pub fn minimize_actuation(
    pb: &PlateProblem,
    qbar: &QTensor,
    phi0: Option<&BoundaryData>,
) -> Result<(PlateState, Option<ScalarField2>, SolveReport)> {
    let start = Instant::now();
    check_q(qbar)?;
    let model = actuation_model(pb)?;
    let sol = inner_solve(&model, pb, qbar, phi0, None)?;
    let e0 = sol.energy - sol.outcome.energy_trace.last().copied().unwrap_or(0.0);
    let report = SolveReport {
        iterations: sol.outcome.iterations,
        grad_norm: sol.grad_norm,
        energy_trace: sol.outcome.energy_trace.iter().map(|e| e + e0).collect(),
        wall_time: start.elapsed(),
        breakdown: sol.breakdown,
        converged: sol.outcome.converged && sol.grad_norm <= 1e-8 * (1.0 + sol.energy.abs()),
    };
    if !report.converged {
        return Err(Error::Solver(format!("actuation solve did not converge (gradient {:.3e})", sol.grad_norm)));
    }
    Ok((sol.state, sol.phi, report))
}

/// Largest mismatch between a state and its mirror image. `axis = 0`
/// reflects `x₁ ↦ L₁ − x₁`, `axis = 1` reflects `x₂ ↦ L₂ − x₂`; the mirrored
/// in-plane component changes sign.
pub fn reflection_residual(g: &Grid2, ps: &PlateState, axis: usize) -> f64 {
    let mut r: f64 = 0.0;
    for k in 0..g.nn() {
        let (i, j) = g.ij(k);
        let m = if axis == 0 { g.idx(g.nx - 1 - i, j) } else { g.idx(i, g.ny - 1 - j) };
        let (a, b) = (ps.zeta_prime.values[k], ps.zeta_prime.values[m]);
        let (s0, s1) = if axis == 0 { (-1.0, 1.0) } else { (1.0, -1.0) };
        r = r.max((a[0] - s0 * b[0]).abs()).max((a[1] - s1 * b[1]).abs());
        r = r.max((ps.zeta3.values[k] - ps.zeta3.values[m]).abs());
    }
    r
}

/// Chart of the unit sphere used for director angles.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Chart {
    /// `n = (sin θ cos φ, sin θ sin φ, cos θ)`.
    PolarE3,
    /// `n = (cos θ, sin θ cos φ, sin θ sin φ)`.
    PolarE1,
}

fn chart_director(chart: Chart, t: f64, p: f64) -> Vector3<f64> {
    match chart {
        Chart::PolarE3 => Vector3::new(t.sin() * p.cos(), t.sin() * p.sin(), t.cos()),
        Chart::PolarE1 => Vector3::new(t.cos(), t.sin() * p.cos(), t.sin() * p.sin()),
    }
}

fn chart_angles(chart: Chart, n: &Vector3<f64>) -> [f64; 2] {
    match chart {
        Chart::PolarE3 => [n.z.clamp(-1.0, 1.0).acos(), n.y.atan2(n.x)],
        Chart::PolarE1 => [n.x.clamp(-1.0, 1.0).acos(), n.z.atan2(n.y)],
    }
}

fn preferred_chart(n: &Vector3<f64>) -> Chart {
    if n.z.abs() > 0.9 { Chart::PolarE1 } else { Chart::PolarE3 }
}

/// Coordinates of a constant order tensor in one of the three sets: two
/// angles (Frank), two angles and the scalar order (uniaxial) or five
/// traceless coordinates followed by projection (biaxial).
#[derive(Clone, Debug, PartialEq)]
pub struct QParametrization {
    pub set: QSet,
    pub coords: Vec<f64>,
    pub chart: Chart,
}

impl QParametrization {
    pub fn frank(n: &Vector3<f64>) -> Self {
        let n = n.normalize();
        let chart = preferred_chart(&n);
        QParametrization { set: QSet::Frank, coords: chart_angles(chart, &n).to_vec(), chart }
    }

    pub fn uniaxial(s: f64, n: &Vector3<f64>) -> Self {
        let mut p = QParametrization::frank(n);
        p.set = QSet::Uniaxial;
        p.coords.push(s.clamp(-0.5, 1.0));
        p
    }

    pub fn biaxial(q: &QTensor) -> Self {
        QParametrization { set: QSet::Biaxial, coords: to_coords5(&project_qb(&q.matrix())).to_vec(), chart: Chart::PolarE3 }
    }

    /// Starting point of the given set whose leading direction is `n`.
    pub fn start(set: QSet, n: &Vector3<f64>) -> Self {
        match set {
            QSet::Frank => QParametrization::frank(n),
            QSet::Uniaxial => QParametrization::uniaxial(1.0, n),
            QSet::Biaxial => QParametrization::biaxial(&QTensor::from_entries(
                make_frank(&n.normalize()).expect("normalised").entries().map(|e| 0.5 * e),
            )),
        }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn director(&self) -> Option<Vector3<f64>> {
        match self.set {
            QSet::Biaxial => None,
            _ => Some(chart_director(self.chart, self.coords[0], self.coords[1])),
        }
    }

    pub fn decode(&self) -> QTensor {
        match self.set {
            QSet::Frank => make_frank(&self.director().expect("angles")).expect("unit director"),
            QSet::Uniaxial => {
                let f = make_frank(&self.director().expect("angles")).expect("unit director");
                let s = self.coords[2].clamp(-0.5, 1.0);
                QTensor::from_entries(f.entries().map(|e| s * e))
            }
            QSet::Biaxial => {
                let c: [f64; 5] = std::array::from_fn(|i| self.coords[i]);
                project_qb(&from_coords5(&c).matrix())
            }
        }
    }

    /// Maps coordinates back onto the admissible set.
    pub fn project(&mut self) {
        match self.set {
            QSet::Frank => {}
            QSet::Uniaxial => self.coords[2] = self.coords[2].clamp(-0.5, 1.0),
            QSet::Biaxial => self.coords = to_coords5(&self.decode()).to_vec(),
        }
    }

    /// Switches away from a chart near its pole; returns whether it did.
    pub fn maybe_switch_chart(&mut self) -> bool {
        let Some(n) = self.director() else { return false };
        let next = match self.chart {
            Chart::PolarE3 if n.z.abs() > 0.9 => Chart::PolarE1,
            Chart::PolarE1 if n.x.abs() > 0.9 => Chart::PolarE3,
            _ => return false,
        };
        let a = chart_angles(next, &n);
        self.chart = next;
        self.coords[0] = a[0];
        self.coords[1] = a[1];
        true
    }

    fn with_coords(&self, c: Vec<f64>) -> Self {
        QParametrization { coords: c, ..self.clone() }
    }
}

/// Directions on the upper hemisphere spread by the golden angle.
pub fn fibonacci_hemisphere(m: usize) -> Vec<Vector3<f64>> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..m)
        .map(|i| {
            let z = (i as f64 + 0.5) / m as f64;
            let r = (1.0 - z * z).sqrt();
            let p = golden * i as f64;
            Vector3::new(r * p.cos(), r * p.sin(), z)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct OuterResult {
    pub param: QParametrization,
    pub value: f64,
    pub iterations: usize,
    pub stationarity: f64,
    pub trace: Vec<f64>,
}

fn fd_gradient(f: &dyn Fn(&QParametrization) -> Result<f64>, p: &QParametrization) -> Result<Vec<f64>> {
    (0..p.dim())
        .map(|i| {
            let mut a = p.coords.clone();
            let mut b = p.coords.clone();
            a[i] += FD_STEP;
            b[i] -= FD_STEP;
            Ok((f(&p.with_coords(a))? - f(&p.with_coords(b))?) / (2.0 * FD_STEP))
        })
        .collect()
}

fn projected_step(p: &QParametrization, d: &[f64], t: f64) -> QParametrization {
    let mut q = p.with_coords(p.coords.iter().zip(d).map(|(c, di)| c + t * di).collect());
    q.project();
    q
}

fn stationarity(p: &QParametrization, g: &[f64]) -> f64 {
    let q = projected_step(p, &g.iter().map(|x| -x).collect::<Vec<_>>(), 1.0);
    norm(&q.coords.iter().zip(&p.coords).map(|(a, b)| a - b).collect::<Vec<_>>())
}

/// Projected BFGS on the order-tensor coordinates with a central-difference
/// gradient and Armijo backtracking.
pub fn minimize_outer(
    f: &dyn Fn(&QParametrization) -> Result<f64>,
    start: QParametrization,
    max_iter: usize,
) -> Result<OuterResult> {
    let mut p = start;
    p.project();
    p.maybe_switch_chart();
    let n = p.dim();
    let mut fx = f(&p)?;
    let mut g = fd_gradient(f, &p)?;
    let mut hinv = identity(n);
    let mut trace = vec![fx];
    let mut it = 0;
    let mut stat = stationarity(&p, &g);
    while stat > OUTER_TOL && it < max_iter {
        it += 1;
        let mut d: Vec<f64> = (0..n).map(|i| -(0..n).map(|j| hinv[i][j] * g[j]).sum::<f64>()).collect();
        if dotv(&d, &g) >= 0.0 {
            hinv = identity(n);
            d = g.iter().map(|x| -x).collect();
        }
        let dn = norm(&d);
        let mut t = if dn > 0.5 { 0.5 / dn } else { 1.0 };
        let mut accepted = None;
        for attempt in 0..2 {
            while t > 1e-14 {
                let q = projected_step(&p, &d, t);
                let s: Vec<f64> = q.coords.iter().zip(&p.coords).map(|(a, b)| a - b).collect();
                let slope = dotv(&g, &s);
                if slope < 0.0 {
                    let fq = f(&q)?;
                    if fq <= fx + 1e-4 * slope {
                        accepted = Some((q, fq, s));
                        break;
                    }
                }
                t *= 0.5;
            }
            if accepted.is_some() || attempt == 1 {
                break;
            }
            hinv = identity(n);
            d = g.iter().map(|x| -x).collect();
            t = 1.0;
        }
        let Some((mut q, fq, s)) = accepted else { break };
        let switched = q.maybe_switch_chart();
        let gq = fd_gradient(f, &q)?;
        if switched {
            hinv = identity(n);
        } else {
            let y: Vec<f64> = gq.iter().zip(&g).map(|(a, b)| a - b).collect();
            bfgs_update(&mut hinv, &s, &y);
        }
        p = q;
        fx = fq;
        g = gq;
        trace.push(fx);
        stat = stationarity(&p, &g);
    }
    Ok(OuterResult { param: p, value: fx, iterations: it, stationarity: stat, trace })
}

fn identity(n: usize) -> Vec<Vec<f64>> {
    (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect()
}

fn dotv(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn bfgs_update(h: &mut [Vec<f64>], s: &[f64], y: &[f64]) {
    let sy = dotv(s, y);
    if sy <= 1e-14 * norm(s) * norm(y) {
        return;
    }
    let n = s.len();
    let hy: Vec<f64> = (0..n).map(|i| dotv(&h[i], y)).collect();
    let yhy = dotv(y, &hy);
    for i in 0..n {
        for j in 0..n {
            h[i][j] += ((sy + yhy) * s[i] * s[j]) / (sy * sy) - (hy[i] * s[j] + s[i] * hy[j]) / sy;
        }
    }
}

/// One multistart basin of the outer problem.
#[derive(Clone, Debug, PartialEq)]
pub struct Basin {
    pub start: usize,
    pub qbar: QTensor,
    pub value: f64,
    pub iterations: usize,
    pub stationarity: f64,
    pub param: QParametrization,
}

#[derive(Clone, Debug)]
pub struct MinMaxResult {
    pub state: PlateState,
    pub qbar: QTensor,
    pub phi: Option<ScalarField2>,
    pub report: SolveReport,
    pub param: QParametrization,
    /// Distinct basins sorted by energy, best first.
    pub basins: Vec<Basin>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MinMaxOptions {
    pub set: QSet,
    pub starts: usize,
    pub threads: Option<usize>,
    pub max_outer: usize,
}

impl Default for MinMaxOptions {
    fn default() -> Self {
        MinMaxOptions { set: QSet::Frank, starts: 8, threads: None, max_outer: 200 }
    }
}

/// Orders basins by energy, then lexicographically by tensor entries when
/// the energies agree to a relative `1e−9`.
pub fn basin_order(a: &Basin, b: &Basin) -> std::cmp::Ordering {
    let scale = 1.0 + a.value.abs().max(b.value.abs());
    if (a.value - b.value).abs() > TIE_REL * scale {
        return a.value.total_cmp(&b.value);
    }
    let (ea, eb) = (a.qbar.entries(), b.qbar.entries());
    for i in 0..6 {
        let c = ea[i].total_cmp(&eb[i]);
        if (ea[i] - eb[i]).abs() > 1e-9 && c != std::cmp::Ordering::Equal {
            return c;
        }
    }
    a.start.cmp(&b.start)
}

/// Reduced outer objective `F(Q̄) = min_ζ J(ζ, Q̄, φ̄_Q̄)`.
pub fn reduced_objective(model: &QuadraticModel, pb: &PlateProblem, q: &QTensor, phi0: Option<&BoundaryData>) -> Result<f64> {
    Ok(inner_solve(model, pb, q, phi0, None)?.energy)
}

/// Min-max equilibrium over constant order tensors of the chosen set.
pub fn solve_minmax(pb: &PlateProblem, phi0: Option<&BoundaryData>, opts: &MinMaxOptions) -> Result<MinMaxResult> {
    let start = Instant::now();
    if opts.starts == 0 {
        return invalid("multistart needs at least one start");
    }
    let model = actuation_model(pb)?;
    let pool = thread_pool(opts.threads)?;
    let objective = |p: &QParametrization| reduced_objective(&model, pb, &p.decode(), phi0);
    let starts: Vec<QParametrization> =
        fibonacci_hemisphere(opts.starts).iter().map(|n| QParametrization::start(opts.set, n)).collect();
    let runs: Vec<Result<OuterResult>> =
        pool.install(|| starts.par_iter().map(|s| minimize_outer(&objective, s.clone(), opts.max_outer)).collect());
    let mut all = Vec::with_capacity(runs.len());
    for (i, r) in runs.into_iter().enumerate() {
        let r = r?;
        all.push(Basin { start: i, qbar: r.param.decode(), value: r.value, iterations: r.iterations, stationarity: r.stationarity, param: r.param });
    }
    all.sort_by(basin_order);
    let mut basins: Vec<Basin> = Vec::new();
    for b in all {
        if !basins.iter().any(|c| tensor_distance(&c.qbar, &b.qbar) < 1e-5) {
            basins.push(b);
        }
    }
    let best = basins[0].clone();
    let sol = inner_solve(&model, pb, &best.qbar, phi0, None)?;
    let report = SolveReport {
        iterations: basins.iter().map(|b| b.iterations).sum(),
        grad_norm: best.stationarity,
        energy_trace: Vec::new(),
        wall_time: start.elapsed(),
        breakdown: sol.breakdown,
        converged: best.stationarity <= OUTER_TOL,
    };
    let mut report = report;
    report.energy_trace = sol.outcome.energy_trace.clone();
    Ok(MinMaxResult { state: sol.state, qbar: best.qbar, phi: sol.phi, report, param: best.param, basins })
}

pub fn tensor_distance(a: &QTensor, b: &QTensor) -> f64 {
    let (x, y) = (a.entries(), b.entries());
    let d: [f64; 6] = std::array::from_fn(|i| x[i] - y[i]);
    QTensor::from_entries(d).norm2().sqrt()
}

/// Extra Gauss solve and extra inner minimisation at a min-max output;
/// returns the two energy changes.
pub fn minmax_certificate(pb: &PlateProblem, phi0: Option<&BoundaryData>, res: &MinMaxResult) -> Result<(f64, f64)> {
    let model = actuation_model(pb)?;
    let (e, _, _) = j_actuation(&model.ops, &res.state, &res.qbar, res.phi.as_ref(), &pb.mp, &pb.dp, pb.regime, pb.cross)?;
    let phi2 = match (phi0, &res.phi) {
        (Some(d), Some(prev)) if !d.is_zero() => Some(solve_gauss_with(&gauss_problem(pb, &res.qbar, d)?, &pb.grid, Some(prev))?.0),
        _ => res.phi.clone(),
    };
    let (e_gauss, _, _) = j_actuation(&model.ops, &res.state, &res.qbar, phi2.as_ref(), &pb.mp, &pb.dp, pb.regime, pb.cross)?;
    let u = res.state.dofs();
    let sol = inner_solve(&model, pb, &res.qbar, phi0, Some((&u, phi2.as_ref())))?;
    Ok(((e_gauss - e).abs(), (sol.energy - e_gauss).abs()))
}

/// Director sweep on a `step`-degree grid of the upper hemisphere followed
/// by nested local refinement around the best nodes; returns the smallest
/// reduced energy over Frank tensors and its director.
pub fn brute_force_frank(pb: &PlateProblem, phi0: Option<&BoundaryData>, step_deg: f64, keep: usize) -> Result<(f64, Vector3<f64>)> {
    let model = actuation_model(pb)?;
    let eval = |t: f64, p: f64| -> Result<f64> {
        reduced_objective(&model, pb, &make_frank(&chart_director(Chart::PolarE3, t, p))?, phi0)
    };
    let d = step_deg.to_radians();
    let nt = (90.0 / step_deg).round() as usize;
    let np = (360.0 / step_deg).round() as usize;
    let mut grid: Vec<(f64, f64, f64)> = Vec::with_capacity((nt + 1) * np);
    for i in 0..=nt {
        for j in 0..np {
            let (t, p) = (i as f64 * d, j as f64 * d);
            grid.push((eval(t, p)?, t, p));
            if i == 0 {
                break;
            }
        }
    }
    grid.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut best = (f64::INFINITY, 0.0, 0.0);
    for &(v0, t0, p0) in grid.iter().take(keep) {
        let (mut v, mut t, mut p) = (v0, t0, p0);
        let mut h = d;
        while h > 1e-7 {
            let mut moved = true;
            while moved {
                moved = false;
                for (dt, dp) in [(h, 0.0), (-h, 0.0), (0.0, h), (0.0, -h), (h, h), (h, -h), (-h, h), (-h, -h)] {
                    let cand = eval(t + dt, p + dp)?;
                    if cand < v {
                        v = cand;
                        t += dt;
                        p += dp;
                        moved = true;
                    }
                }
            }
            h *= 0.25;
        }
        if v < best.0 {
            best = (v, t, p);
        }
    }
    Ok((best.0, chart_director(Chart::PolarE3, best.1, best.2)))
}

/// Relaxed plate with loads, minimised by majorisation: at each step the
/// distance term is replaced by `‖K − P_k‖²` with `P_k` the pointwise
/// projection of the current `K`, which is the frozen density at `Q = P_k`.
/// The thick regime is solved in mid-section variables, where the membrane
/// decouples, and shifted back.
pub fn minimize_relaxed(pb: &PlateProblem, loads: &Loads) -> Result<(PlateState, SolveReport)> {
    minimize_relaxed_with(pb, loads, 2000, 1e-10)
}

pub fn minimize_relaxed_with(pb: &PlateProblem, loads: &Loads, max_iter: usize, tol: f64) -> Result<(PlateState, SolveReport)> {
    let start = Instant::now();
    let form = match pb.regime {
        Regime::Thin => FilmForm::Interface(CrossTerm::Hessian),
        Regime::Thick => FilmForm::Midsection,
    };
    let model = QuadraticModel::new(&pb.grid, &pb.bc, &pb.mp, pb.regime, form)?;
    let repr = model.representation();
    let g = &pb.grid;
    let energy = |u: &[f64]| -> Result<(f64, Vec<f64>, EnergyBreakdown)> {
        let ps = PlateState::from_dofs(g, u, repr);
        let (_, mut grad, mut b) = match repr {
            Representation::Interface => j_relax(&model.ops, &ps, &pb.mp, pb.regime)?,
            Representation::Midsection => j_relax_midsection(&model.ops, &ps, &pb.mp)?,
        };
        let lg = load_gradient_in(&model.ops, loads, repr);
        b.load_work = crate::linalg::dot(&lg, u);
        for (gi, li) in grad.iter_mut().zip(&lg) {
            *gi -= li;
        }
        let b = b.finish();
        Ok((b.total, grad, b))
    };
    let mut u = vec![0.0; model.ops.ndofs()];
    let (mut e, mut grad, mut bd) = energy(&u)?;
    let mut trace = vec![e];
    let mut gn = model.free_norm(&grad);
    let mut it = 0;
    let gtol = |e: f64| tol * (1.0 + e.abs());
    while gn > gtol(e) && it < max_iter {
        it += 1;
        let proj: Vec<QTensor> = (0..g.nn())
            .map(|k| {
                let zp = match pb.regime {
                    Regime::Thin => [u[3 * k], u[3 * k + 1]],
                    Regime::Thick => [0.0, 0.0],
                };
                project_qb(&k_matrix(zp, u[3 * k + 2]))
            })
            .collect();
        let g0 = model.linear_term(&|k| proj[k], Some(loads))?;
        let out = model.solve(&g0, Some(&u));
        let un = model.expand(&out.x);
        let (en, gradn, bdn) = energy(&un)?;
        let stalled = en >= e;
        u = un;
        e = en;
        grad = gradn;
        bd = bdn;
        trace.push(e);
        gn = model.free_norm(&grad);
        if stalled {
            break;
        }
    }
    let mut ps = PlateState::from_dofs(g, &u, repr);
    if repr == Representation::Midsection {
        ps = kl_shift(g, &ps);
    }
    let report = SolveReport {
        iterations: it,
        grad_norm: gn,
        energy_trace: trace,
        wall_time: start.elapsed(),
        breakdown: bd,
        converged: gn <= gtol(e) * 10.0,
    };
    Ok((ps, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn problem(n: usize, nu: f64) -> PlateProblem {
        let mut pb = PlateProblem::new(Grid2::unit(n).unwrap(), BoundarySpec::clamped());
        pb.mp = MaterialParams::new(nu).unwrap();
        pb
    }

    #[test]
    fn zero_order_tensor_gives_zero_state() {
        let pb = problem(9, 0.3);
        let (ps, phi, rep) = minimize_actuation(&pb, &QTensor::zero(), None).unwrap();
        assert!(phi.is_none());
        assert!(ps.dofs().iter().all(|v| v.abs() < 1e-10));
        assert!(rep.breakdown.total.abs() < 1e-10);
    }

    #[test]
    fn vertical_director_lifts_plate_symmetrically() {
        let pb = problem(17, 0.3);
        let q = make_frank(&Vector3::z()).unwrap();
        let (ps, _, rep) = minimize_actuation(&pb, &q, None).unwrap();
        assert!(rep.trace_is_monotone(1e-14));
        let g = pb.grid;
        for k in 0..g.nn() {
            if !g.is_boundary(k) {
                assert!(ps.zeta3.values[k] > 0.0);
            }
        }
        assert!(reflection_residual(&g, &ps, 0) < 1e-8);
        assert!(reflection_residual(&g, &ps, 1) < 1e-8);
    }

    #[test]
    fn negative_poisson_ratio_is_refused() {
        let pb = problem(9, -0.2);
        assert!(minimize_actuation(&pb, &QTensor::zero(), None).is_err());
    }

    #[test]
    fn charts_switch_near_poles() {
        let mut p = QParametrization::frank(&Vector3::new(0.1, 0.0, 0.995).normalize());
        assert_eq!(p.chart, Chart::PolarE1);
        let n = p.director().unwrap();
        assert_abs_diff_eq!(n.z, Vector3::new(0.1, 0.0, 0.995).normalize().z, epsilon = 1e-14);
        p.coords = vec![0.05, 0.0];
        assert!(p.maybe_switch_chart());
        assert_eq!(p.chart, Chart::PolarE3);
        assert!(p.decode().is_in(QSet::Frank, 1e-12));
        let u = QParametrization::uniaxial(3.0, &Vector3::x());
        assert_eq!(u.coords[2], 1.0);
        let b = QParametrization::biaxial(&QTensor::from_entries([1.0, 0.0, -1.0, 0.0, 0.0, 0.0]));
        assert!(b.decode().is_in(QSet::Biaxial, 1e-10));
    }

    #[test]
    fn relaxed_zero_load_is_zero() {
        let pb = problem(9, 0.3);
        let (ps, rep) = minimize_relaxed(&pb, &Loads::zero(&pb.grid)).unwrap();
        assert!(ps.dofs().iter().all(|v| *v == 0.0));
        assert_eq!(rep.breakdown.total, 0.0);
    }

    #[test]
    fn relaxed_trace_is_monotone() {
        let mut pb = problem(13, 0.3);
        let loads = Loads::transverse(&pb.grid, |x, y| 40.0 * (x * y).sin());
        for regime in [Regime::Thin, Regime::Thick] {
            pb.regime = regime;
            let (_, rep) = minimize_relaxed(&pb, &loads).unwrap();
            assert!(rep.trace_is_monotone(1e-14));
            assert!(rep.converged, "{regime:?} {rep:?}");
        }
    }
}
