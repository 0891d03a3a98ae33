//! Order tensors: construction, spectral decomposition, membership in the
//! Frank / uniaxial / De Gennes sets, projection onto the De Gennes polytope
//! and the Frank convex decomposition.

use nalgebra::{Matrix3, Vector3};

use crate::error::{invalid, Error, Result};

/// Smallest admissible eigenvalue of a De Gennes tensor.
pub const LAMBDA_MIN: f64 = -1.0 / 3.0;
/// Largest admissible eigenvalue of a De Gennes tensor.
pub const LAMBDA_MAX: f64 = 2.0 / 3.0;
/// Absolute tolerance used for every membership test.
pub const MEMBERSHIP_TOL: f64 = 1e-8;

const UNIT_TOL: f64 = 1e-10;

/// Symmetric 3×3 tensor stored by its six independent entries
/// `(m11, m22, m33, m12, m13, m23)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QTensor {
    e: [f64; 6],
}

/// Nested order-tensor sets, ordered by inclusion.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum QSet {
    Frank,
    Uniaxial,
    Biaxial,
}

impl QSet {
    pub fn name(self) -> &'static str {
        match self {
            QSet::Frank => "frank",
            QSet::Uniaxial => "uniaxial",
            QSet::Biaxial => "biaxial",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpectralData {
    /// Eigenvalues sorted in descending order.
    pub eigvals: [f64; 3],
    /// Orthonormal eigenvectors stored as columns, matching `eigvals`.
    pub eigvecs: Matrix3<f64>,
}

impl SpectralData {
    pub fn reconstruct(&self) -> Matrix3<f64> {
        let d = Matrix3::from_diagonal(&Vector3::from(self.eigvals));
        self.eigvecs * d * self.eigvecs.transpose()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FrankDecomposition {
    pub weights: [f64; 3],
    pub directions: [Vector3<f64>; 3],
}

impl FrankDecomposition {
    pub fn reconstruct(&self) -> QTensor {
        let mut m = Matrix3::zeros();
        for (w, v) in self.weights.iter().zip(self.directions.iter()) {
            m += *w * (v * v.transpose() - Matrix3::identity() / 3.0);
        }
        QTensor::from_sym_unchecked(&m)
    }
}

impl QTensor {
    pub fn zero() -> Self {
        QTensor { e: [0.0; 6] }
    }

    pub fn from_entries(e: [f64; 6]) -> Self {
        QTensor { e }
    }

    /// Builds a tensor from a matrix, symmetrising it. An asymmetry above the
    /// membership tolerance is reported through the `log` facade.
    pub fn from_matrix(m: &Matrix3<f64>) -> Self {
        let asym = (m - m.transpose()).abs().max();
        if asym > MEMBERSHIP_TOL {
            log::warn!("symmetrising input with asymmetry {asym:.3e}");
        }
        Self::from_sym_unchecked(m)
    }

    fn from_sym_unchecked(m: &Matrix3<f64>) -> Self {
        QTensor {
            e: [
                m[(0, 0)],
                m[(1, 1)],
                m[(2, 2)],
                0.5 * (m[(0, 1)] + m[(1, 0)]),
                0.5 * (m[(0, 2)] + m[(2, 0)]),
                0.5 * (m[(1, 2)] + m[(2, 1)]),
            ],
        }
    }

    pub fn entries(&self) -> [f64; 6] {
        self.e
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        let [a, b, c, d, e, f] = self.e;
        Matrix3::new(a, d, e, d, b, f, e, f, c)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.matrix()[(i, j)]
    }

    pub fn trace(&self) -> f64 {
        self.e[0] + self.e[1] + self.e[2]
    }

    pub fn norm2(&self) -> f64 {
        let [a, b, c, d, e, f] = self.e;
        a * a + b * b + c * c + 2.0 * (d * d + e * e + f * f)
    }

    pub fn spectral(&self) -> SpectralData {
        sym_eigen(&self.matrix())
    }

    /// Signed-free distance of the spectrum from the De Gennes box and the
    /// trace constraint; zero for members.
    pub fn qb_violation(&self) -> f64 {
        let l = self.spectral().eigvals;
        let box_excess = (l[2] - LAMBDA_MIN).min(0.0).abs().max((l[0] - LAMBDA_MAX).max(0.0));
        box_excess.max(self.trace().abs())
    }

    pub fn is_in(&self, set: QSet, tol: f64) -> bool {
        if self.qb_violation() > tol {
            return false;
        }
        let l = self.spectral().eigvals;
        match set {
            QSet::Biaxial => true,
            QSet::Uniaxial => (l[0] - l[1]).abs() <= tol || (l[1] - l[2]).abs() <= tol,
            QSet::Frank => {
                (l[0] - LAMBDA_MAX).abs() <= tol
                    && (l[1] - LAMBDA_MIN).abs() <= tol
                    && (l[2] - LAMBDA_MIN).abs() <= tol
            }
        }
    }

    /// Smallest set of the chain Frank ⊂ uniaxial ⊂ biaxial containing the
    /// tensor, or `None` when it lies outside the De Gennes polytope.
    pub fn classify(&self) -> Option<QSet> {
        [QSet::Frank, QSet::Uniaxial, QSet::Biaxial]
            .into_iter()
            .find(|s| self.is_in(*s, MEMBERSHIP_TOL))
    }

    /// Invariant form of uniaxiality, `|Q|⁶ − 54 det(Q)²`, vanishing exactly
    /// on traceless tensors with a repeated eigenvalue.
    pub fn uniaxial_defect(&self) -> f64 {
        let n2 = self.norm2();
        let d = self.matrix().determinant();
        n2 * n2 * n2 - 54.0 * d * d
    }
}

fn check_unit(n: &Vector3<f64>) -> Result<()> {
    if !n.iter().all(|x| x.is_finite()) || (n.norm() - 1.0).abs() > UNIT_TOL {
        return invalid(format!("director must be a unit vector, |n| = {}", n.norm()));
    }
    Ok(())
}

/// Frank tensor `n⊗n − I/3` for a unit director.
pub fn make_frank(n: &Vector3<f64>) -> Result<QTensor> {
    check_unit(n)?;
    Ok(QTensor::from_sym_unchecked(&(n * n.transpose() - Matrix3::identity() / 3.0)))
}

/// Uniaxial tensor `s (n⊗n − I/3)` with scalar order `s ∈ [−1/2, 1]`.
pub fn make_uniaxial(s: f64, n: &Vector3<f64>) -> Result<QTensor> {
    if !(-0.5..=1.0).contains(&s) {
        return invalid(format!("scalar order parameter {s} outside [-1/2, 1]"));
    }
    let f = make_frank(n)?;
    Ok(QTensor::from_sym_unchecked(&(s * f.matrix())))
}

/// Unit director from spherical angles (polar angle from e₃).
pub fn director(theta: f64, phi: f64) -> Vector3<f64> {
    Vector3::new(theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos())
}

fn symmetrize(a: &Matrix3<f64>) -> Matrix3<f64> {
    0.5 * (a + a.transpose())
}

/// Null vector of the (nearly) rank-two matrix `a − λI`.
fn null_vector(a: &Matrix3<f64>, lambda: f64) -> Option<Vector3<f64>> {
    let m = a - Matrix3::identity() * lambda;
    let r0 = m.row(0).transpose();
    let r1 = m.row(1).transpose();
    let r2 = m.row(2).transpose();
    let c = [r0.cross(&r1), r0.cross(&r2), r1.cross(&r2)];
    let best = c
        .iter()
        .max_by(|x, y| x.norm_squared().total_cmp(&y.norm_squared()))
        .copied()?;
    let nn = best.norm();
    (nn > 1e-150).then(|| best / nn)
}

fn complete_frame(v: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let trial = if v.x.abs() < 0.6 { Vector3::x() } else if v.y.abs() < 0.6 { Vector3::y() } else { Vector3::z() };
    let u = (trial - v * v.dot(&trial)).normalize();
    let w = v.cross(&u);
    (u, w)
}

fn jacobi_sweep(a: &mut Matrix3<f64>, v: &mut Matrix3<f64>) {
    for (p, q) in [(0usize, 1usize), (0, 2), (1, 2)] {
        let apq = a[(p, q)];
        if apq.abs() <= f64::MIN_POSITIVE {
            continue;
        }
        let theta = 0.5 * (2.0 * apq).atan2(a[(q, q)] - a[(p, p)]);
        let (s, c) = theta.sin_cos();
        let mut g = Matrix3::identity();
        g[(p, p)] = c;
        g[(q, q)] = c;
        g[(p, q)] = s;
        g[(q, p)] = -s;
        *a = g.transpose() * *a * g;
        a[(p, q)] = 0.0;
        a[(q, p)] = 0.0;
        *v *= g;
    }
}

/// Symmetric 3×3 eigensolver: trigonometric closed form for the spectrum,
/// cross-product eigenvectors for the best-separated eigenvalue, an exact
/// 2×2 rotation in its complement and one Jacobi refinement sweep.
pub fn sym_eigen(a: &Matrix3<f64>) -> SpectralData {
    let a = symmetrize(a);
    let scale = a.abs().max();
    if scale == 0.0 || !scale.is_finite() {
        return SpectralData { eigvals: [a[(0, 0)]; 3], eigvecs: Matrix3::identity() };
    }
    let s = a / scale;
    let q = s.trace() / 3.0;
    let p1 = s[(0, 1)].powi(2) + s[(0, 2)].powi(2) + s[(1, 2)].powi(2);
    let p2 = (s[(0, 0)] - q).powi(2) + (s[(1, 1)] - q).powi(2) + (s[(2, 2)] - q).powi(2) + 2.0 * p1;
    let p = (p2 / 6.0).sqrt();
    let mut frame = Matrix3::identity();
    if p > 1e-14 {
        let b = (s - Matrix3::identity() * q) / p;
        let r = (0.5 * b.determinant()).clamp(-1.0, 1.0);
        let phi = r.acos() / 3.0;
        let l1 = q + 2.0 * p * phi.cos();
        let l3 = q + 2.0 * p * (phi + 2.0 * std::f64::consts::PI / 3.0).cos();
        let l2 = 3.0 * q - l1 - l3;
        let isolated = if l1 - l2 >= l2 - l3 { l1 } else { l3 };
        if let Some(v) = null_vector(&s, isolated) {
            let (u, w) = complete_frame(&v);
            let t11 = u.dot(&(s * u));
            let t22 = w.dot(&(s * w));
            let t12 = u.dot(&(s * w));
            let theta = 0.5 * (2.0 * t12).atan2(t11 - t22);
            let (sn, cs) = theta.sin_cos();
            let e1 = u * cs + w * sn;
            let e2 = -u * sn + w * cs;
            frame = Matrix3::from_columns(&[v, e1, e2]);
        }
    }
    let mut d = frame.transpose() * s * frame;
    jacobi_sweep(&mut d, &mut frame);
    let mut idx = [0usize, 1, 2];
    idx.sort_by(|&i, &j| d[(j, j)].total_cmp(&d[(i, i)]));
    let eigvals = [d[(idx[0], idx[0])] * scale, d[(idx[1], idx[1])] * scale, d[(idx[2], idx[2])] * scale];
    let eigvecs = Matrix3::from_columns(&[frame.column(idx[0]), frame.column(idx[1]), frame.column(idx[2])]);
    SpectralData { eigvals, eigvecs }
}

/// Euclidean projection of an eigenvalue triple onto
/// `{Σλᵢ = 0, −1/3 ≤ λᵢ ≤ 2/3}` by enumeration of all KKT active sets.
pub fn project_eigs_qb(lambda: [f64; 3]) -> [f64; 3] {
    let bounds = [LAMBDA_MIN, LAMBDA_MAX];
    let mut best: Option<([f64; 3], f64)> = None;
    for code in 0..27usize {
        let status = [code % 3, (code / 3) % 3, code / 9];
        let mut x = [0.0; 3];
        let mut fixed_sum = 0.0;
        let mut free_sum = 0.0;
        let mut nfree = 0usize;
        for i in 0..3 {
            match status[i] {
                0 => {
                    nfree += 1;
                    free_sum += lambda[i];
                }
                k => {
                    x[i] = bounds[k - 1];
                    fixed_sum += x[i];
                }
            }
        }
        if nfree == 0 {
            if fixed_sum.abs() > 1e-12 {
                continue;
            }
        } else {
            let tau = (fixed_sum + free_sum) / nfree as f64;
            for i in 0..3 {
                if status[i] == 0 {
                    x[i] = lambda[i] - tau;
                }
            }
        }
        let feasible = x.iter().all(|&v| v >= LAMBDA_MIN - 1e-13 && v <= LAMBDA_MAX + 1e-13);
        if !feasible {
            continue;
        }
        let d: f64 = (0..3).map(|i| (x[i] - lambda[i]).powi(2)).sum();
        if best.map_or(true, |(_, bd)| d < bd) {
            best = Some((x, d));
        }
    }
    let (mut x, _) = best.expect("the polytope is nonempty");
    for v in x.iter_mut() {
        *v = v.clamp(LAMBDA_MIN, LAMBDA_MAX);
    }
    x
}

/// Nearest De Gennes tensor to `m` in the Frobenius norm.
pub fn project_qb(m: &Matrix3<f64>) -> QTensor {
    let q = QTensor::from_matrix(m);
    let sd = sym_eigen(&q.matrix());
    let scale = 1.0 + sd.eigvals[0].abs().max(sd.eigvals[2].abs());
    let inside = sd.eigvals[0] <= LAMBDA_MAX && sd.eigvals[2] >= LAMBDA_MIN && q.trace().abs() <= 1e-15 * scale;
    if inside {
        return q;
    }
    let l = project_eigs_qb(sd.eigvals);
    let d = Matrix3::from_diagonal(&Vector3::from(l));
    QTensor::from_sym_unchecked(&(sd.eigvecs * d * sd.eigvecs.transpose()))
}

/// Squared distance to the De Gennes polytope and its gradient `2(M − P(M))`.
pub fn dist2_qb(m: &Matrix3<f64>) -> (f64, Matrix3<f64>) {
    let ms = symmetrize(m);
    let r = ms - project_qb(&ms).matrix();
    (r.norm_squared(), 2.0 * r)
}

/// Convex decomposition of a De Gennes tensor into three Frank tensors built
/// on its eigenframe, with weights `λᵢ + 1/3`.
pub fn frank_decomposition(q: &QTensor) -> Result<FrankDecomposition> {
    let viol = q.qb_violation();
    if viol > MEMBERSHIP_TOL {
        return Err(Error::InvalidArgument(format!(
            "tensor lies outside the De Gennes set (distance {:.3e})",
            dist2_qb(&q.matrix()).0.sqrt()
        )));
    }
    let sd = q.spectral();
    let mut weights = [0.0; 3];
    for i in 0..3 {
        weights[i] = (sd.eigvals[i] - LAMBDA_MIN).clamp(0.0, 1.0);
    }
    let directions = [
        sd.eigvecs.column(0).into_owned(),
        sd.eigvecs.column(1).into_owned(),
        sd.eigvecs.column(2).into_owned(),
    ];
    Ok(FrankDecomposition { weights, directions })
}

/// Orthonormal basis of traceless symmetric matrices used as five
/// coordinates for biaxial tensors.
pub fn traceless_basis() -> [Matrix3<f64>; 5] {
    let r2 = std::f64::consts::SQRT_2;
    let r6 = 6f64.sqrt();
    [
        Matrix3::new(1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, 0.0) / r2,
        Matrix3::new(-1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, 2.0) / r6,
        Matrix3::new(0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0) / r2,
        Matrix3::new(0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0) / r2,
        Matrix3::new(0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 1.0, 0.0) / r2,
    ]
}

pub fn to_coords5(q: &QTensor) -> [f64; 5] {
    let m = q.matrix();
    let b = traceless_basis();
    std::array::from_fn(|i| m.dot(&b[i]))
}

pub fn from_coords5(c: &[f64; 5]) -> QTensor {
    let b = traceless_basis();
    let m = (0..5).fold(Matrix3::zeros(), |acc, i| acc + b[i] * c[i]);
    QTensor::from_sym_unchecked(&m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn diag(a: f64, b: f64, c: f64) -> Matrix3<f64> {
        Matrix3::from_diagonal(&Vector3::new(a, b, c))
    }

    #[test]
    fn frank_examples() {
        let q = make_frank(&Vector3::z()).unwrap();
        assert_abs_diff_eq!(q.matrix(), diag(-1.0 / 3.0, -1.0 / 3.0, 2.0 / 3.0), epsilon = 1e-15);
        let n = Vector3::new(1.0, 0.0, 1.0) / 2f64.sqrt();
        let q = make_frank(&n).unwrap().matrix();
        let expect = Matrix3::new(1.0 / 6.0, 0.0, 0.5, 0.0, -1.0 / 3.0, 0.0, 0.5, 0.0, 1.0 / 6.0);
        assert_abs_diff_eq!(q, expect, epsilon = 1e-15);
        let qm = make_frank(&-Vector3::z()).unwrap();
        assert_eq!(qm, make_frank(&Vector3::z()).unwrap());
        assert!(make_frank(&Vector3::new(1.0, 1.0, 0.0)).is_err());
    }

    #[test]
    fn uniaxial_examples() {
        let n = Vector3::z();
        assert_eq!(make_uniaxial(1.0, &n).unwrap(), make_frank(&n).unwrap());
        assert_abs_diff_eq!(make_uniaxial(0.0, &Vector3::x()).unwrap().matrix(), Matrix3::zeros());
        let h = make_uniaxial(0.5, &n).unwrap();
        assert_abs_diff_eq!(h.matrix(), diag(-1.0 / 6.0, -1.0 / 6.0, 1.0 / 3.0), epsilon = 1e-15);
        assert_eq!(h.classify(), Some(QSet::Uniaxial));
        assert!(make_uniaxial(1.2, &n).is_err());
        assert!(make_uniaxial(-0.6, &n).is_err());
    }

    #[test]
    fn eigen_projection_examples() {
        let t = [2.0 / 3.0, -1.0 / 3.0, -1.0 / 3.0];
        assert_eq!(project_eigs_qb(t), t);
        for input in [[0.0, 0.0, 1.0], [0.0, 0.0, 3.0]] {
            let p = project_eigs_qb(input);
            for (a, b) in p.iter().zip([-1.0 / 3.0, -1.0 / 3.0, 2.0 / 3.0]) {
                assert_abs_diff_eq!(*a, b, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn projection_and_distance_examples() {
        assert_abs_diff_eq!(project_qb(&Matrix3::zeros()).matrix(), Matrix3::zeros());
        let p = project_qb(&diag(0.0, 0.0, 1.0)).matrix();
        assert_abs_diff_eq!(p, diag(-1.0 / 3.0, -1.0 / 3.0, 2.0 / 3.0), epsilon = 1e-14);
        let (v, g) = dist2_qb(&diag(0.0, 0.0, 1.0));
        assert_abs_diff_eq!(v, 1.0 / 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(g, diag(2.0 / 3.0, 2.0 / 3.0, 2.0 / 3.0), epsilon = 1e-14);
        let (v, _) = dist2_qb(&diag(0.0, 0.0, 3.0));
        assert_abs_diff_eq!(v, 17.0 / 3.0, epsilon = 1e-13);
        let m = make_uniaxial(0.3, &Vector3::new(0.6, 0.0, 0.8)).unwrap().matrix();
        let (v, g) = dist2_qb(&m);
        assert_eq!(v, 0.0);
        assert_eq!(g, Matrix3::zeros());
    }

    #[test]
    fn eigen_handles_degenerate_spectra() {
        for m in [Matrix3::identity() * 2.0, diag(1.0, 1.0, -2.0), diag(0.0, 0.0, 0.0), diag(3.0, -1.0, -1.0)] {
            let sd = sym_eigen(&m);
            assert_abs_diff_eq!(sd.reconstruct(), m, epsilon = 1e-13);
            assert_abs_diff_eq!(sd.eigvecs.transpose() * sd.eigvecs, Matrix3::identity(), epsilon = 1e-13);
        }
    }

    #[test]
    fn decomposition_examples() {
        let d = frank_decomposition(&QTensor::zero()).unwrap();
        for w in d.weights {
            assert_abs_diff_eq!(w, 1.0 / 3.0, epsilon = 1e-15);
        }
        let d = frank_decomposition(&make_frank(&Vector3::z()).unwrap()).unwrap();
        assert_abs_diff_eq!(d.weights[0], 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(d.directions[0].z.abs(), 1.0, epsilon = 1e-14);
        let d = frank_decomposition(&make_uniaxial(0.5, &Vector3::z()).unwrap()).unwrap();
        for (w, e) in d.weights.iter().zip([2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0]) {
            assert_abs_diff_eq!(*w, e, epsilon = 1e-14);
        }
        let outside = QTensor::from_matrix(&diag(0.0, 0.0, 1.0));
        assert!(matches!(frank_decomposition(&outside), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn coords5_round_trip() {
        let q = make_frank(&director(0.7, 1.9)).unwrap();
        let back = from_coords5(&to_coords5(&q));
        assert_abs_diff_eq!(back.matrix(), q.matrix(), epsilon = 1e-15);
    }
}
