//! Sparse and banded linear algebra used by the plate and Gauss solvers.

use crate::error::{Error, Result};

/// Compressed sparse row matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Csr {
    pub nrows: usize,
    pub ncols: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub data: Vec<f64>,
}

impl Csr {
    /// Builds a matrix from `(row, col, value)` triplets, summing duplicates.
    pub fn from_triplets(nrows: usize, ncols: usize, mut trips: Vec<(usize, usize, f64)>) -> Self {
        trips.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut indptr = vec![0usize; nrows + 1];
        let mut indices = Vec::with_capacity(trips.len());
        let mut data: Vec<f64> = Vec::with_capacity(trips.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in trips {
            debug_assert!(r < nrows && c < ncols);
            if last == Some((r, c)) {
                *data.last_mut().unwrap() += v;
            } else {
                indices.push(c);
                data.push(v);
                indptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..nrows {
            indptr[r + 1] += indptr[r];
        }
        Csr { nrows, ncols, indptr, indices, data }
    }

    pub fn identity(n: usize) -> Self {
        Csr::from_triplets(n, n, (0..n).map(|i| (i, i, 1.0)).collect())
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (a, b) = (self.indptr[r], self.indptr[r + 1]);
        self.indices[a..b].iter().copied().zip(self.data[a..b].iter().copied())
    }

    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        (0..self.nrows).flat_map(|r| self.row(r).map(move |(c, v)| (r, c, v))).collect()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.mul_vec_into(x, &mut y);
        y
    }

    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.ncols);
        for (r, yr) in y.iter_mut().enumerate() {
            *yr = self.row(r).map(|(c, v)| v * x[c]).sum();
        }
    }

    /// Accumulates `Aᵀ x` into `y`.
    pub fn tmul_add(&self, x: &[f64], y: &mut [f64]) {
        for (r, xr) in x.iter().enumerate() {
            if *xr != 0.0 {
                for (c, v) in self.row(r) {
                    y[c] += v * xr;
                }
            }
        }
    }

    /// Kronecker product `a ⊗ b`.
    pub fn kron(a: &Csr, b: &Csr) -> Csr {
        let mut t = Vec::new();
        for (ra, ca, va) in a.triplets() {
            for (rb, cb, vb) in b.triplets() {
                t.push((ra * b.nrows + rb, ca * b.ncols + cb, va * vb));
            }
        }
        Csr::from_triplets(a.nrows * b.nrows, a.ncols * b.ncols, t)
    }

    pub fn matmul(&self, other: &Csr) -> Csr {
        assert_eq!(self.ncols, other.nrows);
        let mut t = Vec::new();
        for r in 0..self.nrows {
            for (k, v) in self.row(r) {
                for (c, w) in other.row(k) {
                    t.push((r, c, v * w));
                }
            }
        }
        Csr::from_triplets(self.nrows, other.ncols, t)
    }

    /// Sum of scaled blocks `Σ sᵢ Aᵢ` placed with column stride and offset:
    /// column `c` of block `i` goes to `stride * c + offsetᵢ`.
    pub fn interleave(nrows: usize, ncols: usize, stride: usize, blocks: &[(&Csr, usize, f64)]) -> Csr {
        let mut t = Vec::new();
        for (m, off, s) in blocks {
            for (r, c, v) in m.triplets() {
                t.push((r, stride * c + off, s * v));
            }
        }
        Csr::from_triplets(nrows, ncols, t)
    }

    pub fn scaled(&self, s: f64) -> Csr {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|v| *v *= s);
        out
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows).map(|r| self.row(r).filter(|(c, _)| *c == r).map(|(_, v)| v).sum()).collect()
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Symmetric matrix in lower band storage.
#[derive(Clone, Debug)]
pub struct SymBand {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl SymBand {
    pub fn zeros(n: usize, bw: usize) -> Self {
        SymBand { n, bw, data: vec![0.0; n * (bw + 1)] }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> usize {
        i * (self.bw + 1) + (j + self.bw - i)
    }

    /// Adds `v` to entries `(i, j)` and `(j, i)`; pass each unordered pair once
    /// for off-diagonal entries or use `add_lower` with both orders.
    pub fn add_lower(&mut self, i: usize, j: usize, v: f64) {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        assert!(i - j <= self.bw, "entry outside band");
        let s = self.slot(i, j);
        self.data[s] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        if i - j > self.bw {
            0.0
        } else {
            self.data[self.slot(i, j)]
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for i in 0..self.n {
            let j0 = i.saturating_sub(self.bw);
            let row = &self.data[i * (self.bw + 1)..(i + 1) * (self.bw + 1)];
            let mut acc = 0.0;
            for j in j0..i {
                let v = row[j + self.bw - i];
                acc += v * x[j];
                y[j] += v * x[i];
            }
            y[i] += acc + row[self.bw] * x[i];
        }
        y
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.data[self.slot(i, i)]).collect()
    }

    pub fn cholesky(&self) -> Result<BandCholesky> {
        let (n, bw) = (self.n, self.bw);
        let w = bw + 1;
        let mut l = self.data.clone();
        for i in 0..n {
            let i0 = i.saturating_sub(bw);
            for j in i0..=i {
                let k0 = i0.max(j.saturating_sub(bw));
                let mut s = l[i * w + (j + bw - i)];
                if j > k0 {
                    let ri = &l[i * w + (k0 + bw - i)..i * w + (j + bw - i)];
                    let rj = &l[j * w + (k0 + bw - j)..j * w + bw];
                    s -= dot(ri, rj);
                }
                if i == j {
                    if !(s > 0.0) || !s.is_finite() {
                        return Err(Error::Solver(format!("matrix is not positive definite (pivot {s:.3e} at row {i})")));
                    }
                    l[i * w + bw] = s.sqrt();
                } else {
                    l[i * w + (j + bw - i)] = s / l[j * w + bw];
                }
            }
        }
        Ok(BandCholesky { n, bw, l })
    }
}

/// Cholesky factor `L` of a banded SPD matrix.
#[derive(Clone, Debug)]
pub struct BandCholesky {
    n: usize,
    bw: usize,
    l: Vec<f64>,
}

impl BandCholesky {
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let (n, bw) = (self.n, self.bw);
        let w = bw + 1;
        let mut y = b.to_vec();
        for i in 0..n {
            let j0 = i.saturating_sub(bw);
            let s = dot(&self.l[i * w + (j0 + bw - i)..i * w + bw], &y[j0..i]);
            y[i] = (y[i] - s) / self.l[i * w + bw];
        }
        for i in (0..n).rev() {
            y[i] /= self.l[i * w + bw];
            let yi = y[i];
            let j0 = i.saturating_sub(bw);
            for j in j0..i {
                y[j] -= self.l[i * w + (j + bw - i)] * yi;
            }
        }
        y
    }
}

#[derive(Clone, Debug)]
pub struct CgOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub rel_residual: f64,
    /// Values of `½xᵀAx − bᵀx` after each iteration, starting with the guess.
    pub energy_trace: Vec<f64>,
    pub converged: bool,
}

/// Preconditioned conjugate gradients for SPD systems `A x = b`.
pub fn pcg(
    apply: impl Fn(&[f64]) -> Vec<f64>,
    precond: impl Fn(&[f64]) -> Vec<f64>,
    b: &[f64],
    x0: Option<&[f64]>,
    tol: f64,
    max_iter: usize,
) -> CgOutcome {
    let n = b.len();
    let mut x = x0.map_or_else(|| vec![0.0; n], |v| v.to_vec());
    let bnorm = norm(b);
    let ax = apply(&x);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    let energy = |x: &[f64], r: &[f64]| -0.5 * x.iter().zip(b.iter().zip(r)).map(|(xi, (bi, ri))| xi * (bi + ri)).sum::<f64>();
    let mut trace = vec![energy(&x, &r)];
    if bnorm == 0.0 && norm(&r) == 0.0 {
        return CgOutcome { x, iterations: 0, rel_residual: 0.0, energy_trace: trace, converged: true };
    }
    let scale = if bnorm > 0.0 { bnorm } else { 1.0 };
    let mut z = precond(&r);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut it = 0;
    let mut rel = norm(&r) / scale;
    while rel > tol && it < max_iter {
        let ap = apply(&p);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            break;
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        it += 1;
        trace.push(energy(&x, &r));
        rel = norm(&r) / scale;
        if rel <= tol {
            break;
        }
        z = precond(&r);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    CgOutcome { x, iterations: it, rel_residual: rel, energy_trace: trace, converged: rel <= tol }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn laplace_band(n: usize) -> SymBand {
        let mut a = SymBand::zeros(n, 1);
        for i in 0..n {
            a.add_lower(i, i, 2.0);
            if i > 0 {
                a.add_lower(i, i - 1, -1.0);
            }
        }
        a
    }

    #[test]
    fn band_cholesky_solves_tridiagonal() {
        let a = laplace_band(50);
        let x: Vec<f64> = (0..50).map(|i| (i as f64 * 0.3).sin()).collect();
        let b = a.mul_vec(&x);
        let sol = a.cholesky().unwrap().solve(&b);
        for (s, e) in sol.iter().zip(&x) {
            assert_abs_diff_eq!(s, e, epsilon = 1e-10);
        }
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let mut a = SymBand::zeros(2, 1);
        a.add_lower(0, 0, 1.0);
        a.add_lower(1, 0, 2.0);
        a.add_lower(1, 1, 1.0);
        assert!(a.cholesky().is_err());
    }

    #[test]
    fn pcg_energy_trace_is_monotone() {
        let a = laplace_band(40);
        let b: Vec<f64> = (0..40).map(|i| 1.0 + i as f64 * 0.01).collect();
        let d = a.diagonal();
        let out = pcg(|x| a.mul_vec(x), |r| r.iter().zip(&d).map(|(ri, di)| ri / di).collect(), &b, None, 1e-12, 1000);
        assert!(out.converged);
        assert!(out.energy_trace.windows(2).all(|w| w[1] <= w[0] + 1e-12));
    }

    #[test]
    fn kron_and_matmul_agree_with_dense() {
        let a = Csr::from_triplets(2, 2, vec![(0, 0, 1.0), (0, 1, 2.0), (1, 1, 3.0)]);
        let b = Csr::from_triplets(2, 2, vec![(0, 0, 4.0), (1, 0, 5.0)]);
        let k = Csr::kron(&a, &b);
        assert_eq!(k.mul_vec(&[1.0, 0.0, 0.0, 0.0]), vec![4.0, 5.0, 0.0, 0.0]);
        let m = a.matmul(&b);
        assert_eq!(m.mul_vec(&[1.0, 0.0]), vec![4.0 + 10.0, 15.0]);
    }
}
