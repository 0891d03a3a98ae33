//! Laminate microstructure: stripes of Frank tensors averaging to a biaxial
//! target, their smooth (director-interpolating) mollification and
//! compatible piecewise-affine displacements for two variants.

use nalgebra::{Matrix3, Vector3};

use crate::error::{invalid, Result};
use crate::qtensor::{frank_decomposition, make_frank, QTensor, MEMBERSHIP_TOL};

const FRACTION_TOL: f64 = 1e-12;

/// Microstructure scales. `delta` is the total measure of the transition
/// set per period, so the non-constant fraction equals `delta / eta`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LaminateParams {
    pub eta: f64,
    pub delta: f64,
    /// Width of the boundary layer of the grain cutoff.
    pub rho: f64,
    /// Number of columnar grains splitting `ω` along `x₁`.
    pub grains: usize,
}

impl LaminateParams {
    pub fn new(eta: f64, delta: f64) -> Result<Self> {
        let p = LaminateParams { eta, delta, rho: 0.1, grains: 1 };
        p.check()?;
        Ok(p)
    }

    pub fn check(&self) -> Result<()> {
        if !(self.eta > 0.0) || !self.eta.is_finite() {
            return invalid(format!("laminate period must be positive, got {}", self.eta));
        }
        if !(self.delta >= 0.0 && self.delta < 0.25 * self.eta) {
            return invalid(format!("mollification width {} must lie in [0, eta/4)", self.delta));
        }
        if !(self.rho > 0.0) || self.grains == 0 {
            return invalid("grain cutoff width and grain count must be positive");
        }
        Ok(())
    }

    /// Grain containing `x₁ ∈ [0, 1]`.
    pub fn grain_of(&self, x1: f64) -> usize {
        ((x1 * self.grains as f64).floor() as usize).min(self.grains - 1)
    }
}

/// Piecewise-constant field of Frank tensors in stripes normal to `normal`,
/// periodic with period `eta`.
#[derive(Clone, Debug, PartialEq)]
pub struct LaminateField {
    pub normal: Vector3<f64>,
    pub eta: f64,
    pub directors: Vec<Vector3<f64>>,
    pub variants: Vec<QTensor>,
    pub fractions: Vec<f64>,
}

/// Stripes of widths `η μᵢ` cycling through the Frank tensors of the
/// convex decomposition of `Q̄`; variants of zero weight are dropped.
pub fn laminate_profile(qbar: &QTensor, eta: f64, normal: &Vector3<f64>) -> Result<LaminateField> {
    if !(eta > 0.0) || !eta.is_finite() {
        return invalid(format!("laminate period must be positive, got {eta}"));
    }
    if !(normal.norm() > 0.0) {
        return invalid("stripe normal must be nonzero");
    }
    let fd = frank_decomposition(qbar)?;
    let mut directors = Vec::new();
    let mut fractions = Vec::new();
    for (w, v) in fd.weights.iter().zip(fd.directions.iter()) {
        if *w > FRACTION_TOL {
            directors.push(*v);
            fractions.push(*w);
        }
    }
    let total: f64 = fractions.iter().sum();
    fractions.iter_mut().for_each(|f| *f /= total);
    let variants = directors.iter().map(|d| make_frank(d)).collect::<Result<Vec<_>>>()?;
    Ok(LaminateField { normal: normal.normalize(), eta, directors, variants, fractions })
}

impl LaminateField {
    /// Stripe index and offset within the period for the coordinate `s`.
    fn locate(&self, s: f64) -> usize {
        let t = (s / self.eta).rem_euclid(1.0);
        let mut acc = 0.0;
        for (i, f) in self.fractions.iter().enumerate() {
            acc += f;
            if t < acc {
                return i;
            }
        }
        self.fractions.len() - 1
    }

    pub fn value_at(&self, s: f64) -> QTensor {
        self.variants[self.locate(s)]
    }

    pub fn value(&self, x: &Vector3<f64>) -> QTensor {
        self.value_at(self.normal.dot(x))
    }

    /// Stripe boundaries inside one period, as offsets in `[0, η)`.
    pub fn interfaces(&self) -> Vec<f64> {
        if self.variants.len() < 2 {
            return Vec::new();
        }
        let mut acc = 0.0;
        let mut out = vec![0.0];
        for f in &self.fractions[..self.fractions.len() - 1] {
            acc += f;
            out.push(acc * self.eta);
        }
        out
    }

    /// Exact cell average over one period.
    pub fn cell_average(&self) -> QTensor {
        let mut e = [0.0; 6];
        for (q, f) in self.variants.iter().zip(&self.fractions) {
            for (a, b) in e.iter_mut().zip(q.entries()) {
                *a += f * b;
            }
        }
        QTensor::from_entries(e)
    }

    /// Exact average over `[s0, s0 + w]` along the normal.
    pub fn window_average(&self, s0: f64, w: f64) -> QTensor {
        let mut e = [0.0; 6];
        let mut acc = [0.0; 6];
        let prim = |s: f64, out: &mut [f64; 6]| {
            let k = (s / self.eta).floor();
            let cell = self.cell_average().entries();
            let mut r = s - k * self.eta;
            for i in 0..6 {
                out[i] = k * self.eta * cell[i];
            }
            for (q, f) in self.variants.iter().zip(&self.fractions) {
                let len = (f * self.eta).min(r);
                for (o, v) in out.iter_mut().zip(q.entries()) {
                    *o += len * v;
                }
                r -= len;
                if r <= 0.0 {
                    break;
                }
            }
        };
        prim(s0 + w, &mut e);
        prim(s0, &mut acc);
        QTensor::from_entries(std::array::from_fn(|i| (e[i] - acc[i]) / w))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WeakConvergenceReport {
    pub widths: Vec<f64>,
    pub errors: Vec<f64>,
    /// Least-squares slope of `log error` against `log(η/w)`; `None` when
    /// every error vanishes.
    pub rate: Option<f64>,
}

/// Windowed averages of width `w = m η` starting at `s0`, compared with `Q̄`.
pub fn weak_convergence_check(lf: &LaminateField, qbar: &QTensor, multiples: &[f64], s0: f64) -> WeakConvergenceReport {
    let widths: Vec<f64> = multiples.iter().map(|m| m * lf.eta).collect();
    let errors: Vec<f64> = widths
        .iter()
        .map(|w| {
            let a = lf.window_average(s0, *w).entries();
            let b = qbar.entries();
            QTensor::from_entries(std::array::from_fn(|i| a[i] - b[i])).norm2().sqrt()
        })
        .collect();
    let pts: Vec<(f64, f64)> = widths
        .iter()
        .zip(&errors)
        .filter(|(_, e)| **e > 1e-15)
        .map(|(w, e)| ((lf.eta / w).ln(), e.ln()))
        .collect();
    let rate = (pts.len() >= 2).then(|| fit_slope(&pts));
    WeakConvergenceReport { widths, errors, rate }
}

pub fn fit_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

fn psi(t: f64) -> f64 {
    if t <= 0.0 { 0.0 } else { (-1.0 / t).exp() }
}

fn dpsi(t: f64) -> f64 {
    if t <= 0.0 { 0.0 } else { (-1.0 / t).exp() / (t * t) }
}

/// Smooth monotone step on `[0, 1]`: the convolution of a unit jump at
/// `1/2` with a compactly supported `C^∞` kernel.
pub fn smooth_step(u: f64) -> f64 {
    if u <= 0.0 {
        0.0
    } else if u >= 1.0 {
        1.0
    } else {
        psi(u) / (psi(u) + psi(1.0 - u))
    }
}

/// Derivative of [`smooth_step`], i.e. the mollifier kernel.
pub fn smooth_step_kernel(u: f64) -> f64 {
    if u <= 0.0 || u >= 1.0 {
        return 0.0;
    }
    let (a, b) = (psi(u), psi(1.0 - u));
    (dpsi(u) * b + a * dpsi(1.0 - u)) / ((a + b) * (a + b))
}

/// Grain cutoff: 0 at distance 0 from the grain boundary, 1 beyond `1.5ρ`,
/// with slope at most `1/ρ`.
pub fn cutoff(dist: f64, rho: f64) -> f64 {
    let t = (dist / (1.5 * rho)).clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

pub fn cutoff_slope(dist: f64, rho: f64) -> f64 {
    let t = dist / (1.5 * rho);
    if t <= 0.0 || t >= 1.0 { 0.0 } else { 6.0 * t * (1.0 - t) / (1.5 * rho) }
}

/// Laminate whose jumps are replaced by smooth transitions of the director
/// along great circles, so every value stays a Frank tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct MollifiedLaminate {
    pub base: LaminateField,
    pub delta: f64,
    /// Width of a single transition zone.
    pub zone: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TransitionReport {
    /// Fraction of the period where the field is not constant.
    pub fraction: f64,
    /// `∫|∂Q/∂s|²` over one period.
    pub curvature: f64,
}

/// Mollifies a laminate. The total transition measure per period is
/// `delta`, split evenly between its interfaces.
pub fn mollify_laminate(lf: &LaminateField, delta: f64) -> Result<(MollifiedLaminate, TransitionReport)> {
    if !(delta >= 0.0 && delta < 0.25 * lf.eta) {
        return invalid(format!("mollification width {delta} must lie in [0, eta/4)"));
    }
    let k = lf.interfaces().len();
    let zone = if k == 0 { 0.0 } else { delta / k as f64 };
    if lf.fractions.iter().any(|f| f * lf.eta <= zone) {
        return invalid("a stripe is thinner than its transition zone");
    }
    let m = MollifiedLaminate { base: lf.clone(), delta, zone };
    let report = TransitionReport { fraction: m.transition_fraction(), curvature: m.curvature_integral(64) };
    Ok((m, report))
}

impl MollifiedLaminate {
    fn director_pair(&self, i: usize) -> (Vector3<f64>, Vector3<f64>) {
        let n = self.base.directors.len();
        let a = self.base.directors[i];
        let mut b = self.base.directors[(i + 1) % n];
        if a.dot(&b) < 0.0 {
            b = -b;
        }
        (a, b)
    }

    /// Director (up to sign) and its derivative in `s`.
    pub fn director_at(&self, s: f64) -> (Vector3<f64>, Vector3<f64>) {
        let lf = &self.base;
        let nv = lf.variants.len();
        if nv < 2 || self.zone == 0.0 {
            return (lf.directors[lf.locate(s)], Vector3::zeros());
        }
        let t = (s / lf.eta).rem_euclid(1.0) * lf.eta;
        let ifs = lf.interfaces();
        let half = 0.5 * self.zone;
        for (j, &x0) in ifs.iter().enumerate() {
            for shift in [-lf.eta, 0.0, lf.eta] {
                let c = x0 + shift;
                if (t - c).abs() < half {
                    let prev = (j + nv - 1) % nv;
                    let (a, b) = self.director_pair(prev);
                    let u = (t - c + half) / self.zone;
                    let omega = a.dot(&b).clamp(-1.0, 1.0).acos();
                    let perp = (b - a * a.dot(&b)).try_normalize(1e-300).unwrap_or_else(Vector3::zeros);
                    let ang = omega * smooth_step(u);
                    let dang = omega * smooth_step_kernel(u) / self.zone;
                    let n = a * ang.cos() + perp * ang.sin();
                    let dn = (-a * ang.sin() + perp * ang.cos()) * dang;
                    return (n, dn);
                }
            }
        }
        (lf.directors[lf.locate(s)], Vector3::zeros())
    }

    pub fn value_at(&self, s: f64) -> QTensor {
        make_frank(&self.director_at(s).0.normalize()).expect("unit director")
    }

    /// `∂Q/∂s` as a matrix.
    pub fn derivative_at(&self, s: f64) -> Matrix3<f64> {
        let (n, dn) = self.director_at(s);
        dn * n.transpose() + n * dn.transpose()
    }

    pub fn transition_fraction(&self) -> f64 {
        self.base.interfaces().len() as f64 * self.zone / self.base.eta
    }

    /// Breakpoints of one period `[0, η]`: stripe boundaries and the ends of
    /// the transition zones.
    pub fn breakpoints(&self) -> Vec<f64> {
        let eta = self.base.eta;
        let mut b = vec![0.0, eta];
        for x0 in self.base.interfaces() {
            for c in [x0 - 0.5 * self.zone, x0, x0 + 0.5 * self.zone] {
                b.push(c.rem_euclid(eta));
            }
        }
        b.sort_by(f64::total_cmp);
        b.dedup_by(|a, c| (*a - *c).abs() < 1e-15 * eta);
        b
    }

    /// `∫|∂Q/∂s|²` over one period, Gauss–Legendre on each transition zone.
    pub fn curvature_integral(&self, order: usize) -> f64 {
        let (x, w) = gauss_legendre(order);
        let b = self.breakpoints();
        let mut total = 0.0;
        for seg in b.windows(2) {
            let (a, c) = (seg[0], seg[1]);
            let mid = 0.5 * (a + c);
            if self.derivative_at(mid).norm() == 0.0 && self.derivative_at(a + 0.25 * (c - a)).norm() == 0.0 {
                continue;
            }
            for (xi, wi) in x.iter().zip(&w) {
                let s = mid + 0.5 * (c - a) * xi;
                let d = self.derivative_at(s);
                total += 0.5 * (c - a) * wi * d.norm_squared();
            }
        }
        total
    }
}

/// Gauss–Legendre nodes and weights on `[−1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let p = if n == 0 { 1.0 } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * p - pm) / (z * z - 1.0);
            let dz = p / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
    }
    (x, w)
}

/// Continuous piecewise-affine map whose symmetric gradient alternates
/// between two Frank tensors across planes normal to `b`.
#[derive(Clone, Debug, PartialEq)]
pub struct TwoVariantMap {
    pub q1: QTensor,
    pub q2: QTensor,
    /// Jump vector `a` of `∇f`.
    pub a: Vector3<f64>,
    /// Unit stripe normal.
    pub b: Vector3<f64>,
    pub g1: Matrix3<f64>,
    pub g2: Matrix3<f64>,
    /// Volume fraction of the first variant.
    pub lambda: f64,
    pub eta: f64,
}

/// Uses `n⊗n − m⊗m = sym((n+m)⊗(n−m))`. The skew part added to the first
/// gradient makes the cell-average gradient symmetric, so `f − Q̄x` is
/// periodic. Parallel directors give a constant gradient.
pub fn two_variant_displacement(n: &Vector3<f64>, m: &Vector3<f64>, lambda: f64, eta: f64) -> Result<TwoVariantMap> {
    if !(0.0..=1.0).contains(&lambda) {
        return invalid(format!("volume fraction {lambda} outside [0, 1]"));
    }
    if !(eta > 0.0) {
        return invalid(format!("laminate period must be positive, got {eta}"));
    }
    let q1 = make_frank(n)?;
    let mut mm = *m;
    if n.dot(&mm) < 0.0 {
        mm = -mm;
    }
    let q2 = make_frank(&mm)?;
    let diff = n - mm;
    if diff.norm() < 1e-12 {
        let g = q1.matrix();
        return Ok(TwoVariantMap { q1, q2: q1, a: Vector3::zeros(), b: Vector3::z(), g1: g, g2: g, lambda, eta });
    }
    let b = diff / diff.norm();
    let a = (n + mm) * diff.norm();
    let ab = a * b.transpose();
    let skew = 0.5 * (ab - ab.transpose());
    let g1 = q1.matrix() + (1.0 - lambda) * skew;
    let g2 = g1 - ab;
    Ok(TwoVariantMap { q1, q2, a, b, g1, g2, lambda, eta })
}

impl TwoVariantMap {
    /// `φ(s) = ∫₀ˢ χ₂`, the measure of second-variant stripes in `[0, s]`.
    fn phi_branch(&self, s: f64, period: i64, second: bool) -> f64 {
        let base = period as f64 * (1.0 - self.lambda) * self.eta;
        if second { base + (s - period as f64 * self.eta - self.lambda * self.eta) } else { base }
    }

    fn branch(&self, s: f64) -> (i64, bool) {
        let k = (s / self.eta).floor();
        let t = s - k * self.eta;
        (k as i64, t >= self.lambda * self.eta)
    }

    pub fn eval(&self, x: &Vector3<f64>) -> Vector3<f64> {
        let s = self.b.dot(x);
        let (k, second) = self.branch(s);
        self.eval_branch(x, k, second)
    }

    /// Formula of a given stripe, usable on its closure.
    pub fn eval_branch(&self, x: &Vector3<f64>, period: i64, second: bool) -> Vector3<f64> {
        self.g1 * x - self.a * self.phi_branch(self.b.dot(x), period, second)
    }

    pub fn gradient(&self, x: &Vector3<f64>) -> Matrix3<f64> {
        let (_, second) = self.branch(self.b.dot(x));
        if second { self.g2 } else { self.g1 }
    }

    pub fn average_gradient(&self) -> Matrix3<f64> {
        self.lambda * self.g1 + (1.0 - self.lambda) * self.g2
    }

    /// Target tensor `λQ₁ + (1−λ)Q₂`.
    pub fn qbar(&self) -> QTensor {
        let (a, b) = (self.q1.entries(), self.q2.entries());
        QTensor::from_entries(std::array::from_fn(|i| self.lambda * a[i] + (1.0 - self.lambda) * b[i]))
    }

    /// `f(x) − Q̄x`, periodic along `b` with period `η`.
    pub fn periodic_part(&self, x: &Vector3<f64>) -> Vector3<f64> {
        self.eval(x) - self.qbar().matrix() * x
    }

    /// Second singular value of the gradient jump.
    pub fn jump_rank_defect(&self) -> f64 {
        let sv = (self.g1 - self.g2).svd(false, false).singular_values;
        let mut s: Vec<f64> = sv.iter().copied().collect();
        s.sort_by(|a, b| b.total_cmp(a));
        s[1]
    }
}

/// Second-order laminate for three variants: an outer laminate of period
/// `eta` mixing an inner two-variant laminate (period `eta_inner`) with the
/// third variant. Only the order-tensor field is built.
#[derive(Clone, Debug, PartialEq)]
pub struct SecondOrderLaminate {
    pub outer: LaminateField,
    pub inner: LaminateField,
    pub inner_fraction: f64,
}

pub fn second_order_laminate(
    qbar: &QTensor,
    eta: f64,
    eta_inner: f64,
    outer_normal: &Vector3<f64>,
    inner_normal: &Vector3<f64>,
) -> Result<SecondOrderLaminate> {
    if !(eta_inner > 0.0 && eta_inner < eta) {
        return invalid("inner period must be positive and smaller than the outer one");
    }
    let fd = frank_decomposition(qbar)?;
    let inner_fraction = fd.weights[0] + fd.weights[1];
    let inner = if inner_fraction > FRACTION_TOL {
        let mut e = [0.0; 6];
        for i in 0..2 {
            let f = make_frank(&fd.directions[i])?.entries();
            for (a, b) in e.iter_mut().zip(f) {
                *a += fd.weights[i] / inner_fraction * b;
            }
        }
        laminate_profile(&QTensor::from_entries(e), eta_inner, inner_normal)?
    } else {
        laminate_profile(&make_frank(&fd.directions[2])?, eta_inner, inner_normal)?
    };
    let third = make_frank(&fd.directions[2])?;
    let outer = LaminateField {
        normal: outer_normal.normalize(),
        eta,
        directors: vec![fd.directions[0], fd.directions[2]],
        variants: vec![inner.cell_average(), third],
        fractions: vec![inner_fraction, 1.0 - inner_fraction],
    };
    Ok(SecondOrderLaminate { outer, inner, inner_fraction })
}

impl SecondOrderLaminate {
    pub fn value(&self, x: &Vector3<f64>) -> QTensor {
        let s = self.outer.normal.dot(x);
        let t = (s / self.outer.eta).rem_euclid(1.0);
        if t < self.inner_fraction { self.inner.value(x) } else { self.outer.variants[1] }
    }

    /// Average of the field over an outer period, assuming the inner period
    /// divides the inner stripe width.
    pub fn cell_average(&self) -> QTensor {
        let a = self.inner.cell_average().entries();
        let b = self.outer.variants[1].entries();
        QTensor::from_entries(std::array::from_fn(|i| self.inner_fraction * a[i] + (1.0 - self.inner_fraction) * b[i]))
    }
}

/// True when every stripe value is a Frank tensor.
pub fn all_frank(lf: &LaminateField) -> bool {
    lf.variants.iter().all(|q| q.is_in(crate::qtensor::QSet::Frank, MEMBERSHIP_TOL))
}
