//! Compressed sparse rows and conjugate gradients.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Csr {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col: Vec<usize>,
    pub val: Vec<f64>,
}

impl Csr {
    /// Square matrix from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(n: usize, mut t: Vec<(usize, usize, f64)>) -> Self {
        t.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0; n + 1];
        let mut col = Vec::with_capacity(t.len());
        let mut val: Vec<f64> = Vec::with_capacity(t.len());
        let mut last = None;
        for (r, c, v) in t {
            if last == Some((r, c)) {
                *val.last_mut().unwrap() += v;
                continue;
            }
            last = Some((r, c));
            col.push(c);
            val.push(v);
            row_ptr[r + 1] += 1;
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        Csr { n, row_ptr, col, val }
    }

    pub fn diagonal(d: &[f64]) -> Self {
        Csr::from_triplets(d.len(), d.iter().enumerate().map(|(i, &v)| (i, i, v)).collect())
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.mul_into(x, &mut y);
        y
    }

    pub fn mul_into(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let mut s = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.val[k] * x[self.col[k]];
            }
            *yi = s;
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = &self.col[self.row_ptr[i]..self.row_ptr[i + 1]];
        match r.binary_search(&j) {
            Ok(k) => self.val[self.row_ptr[i] + k],
            Err(_) => 0.0,
        }
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    /// `a·self + b·other`.
    pub fn add(&self, a: f64, other: &Csr, b: f64) -> Csr {
        let mut t = Vec::with_capacity(self.val.len() + other.val.len());
        for (m, s) in [(self, a), (other, b)] {
            for i in 0..m.n {
                for k in m.row_ptr[i]..m.row_ptr[i + 1] {
                    t.push((i, m.col[k], s * m.val[k]));
                }
            }
        }
        Csr::from_triplets(self.n, t)
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        (0..self.n).all(|i| {
            (self.row_ptr[i]..self.row_ptr[i + 1]).all(|k| (self.val[k] - self.get(self.col[k], i)).abs() <= tol)
        })
    }

    pub fn quad(&self, x: &[f64]) -> f64 {
        dot(x, &self.mul(x))
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Jacobi-preconditioned CG for `A x = b` with `A` symmetric positive
/// (semi)definite. When `null` is given, iterates are kept orthogonal to it
/// in the Euclidean inner product.
pub fn cg(a: &Csr, b: &[f64], x0: Option<&[f64]>, null: Option<&[f64]>, tol: f64, max_iter: usize) -> Result<Vec<f64>> {
    let n = a.n;
    let proj = |v: &mut [f64]| {
        if let Some(z) = null {
            let c = dot(v, z) / dot(z, z);
            for (vi, zi) in v.iter_mut().zip(z) {
                *vi -= c * zi;
            }
        }
    };
    let dinv: Vec<f64> = a.diag().iter().map(|d| if d.abs() > 0.0 { 1.0 / d } else { 1.0 }).collect();
    let mut x = x0.map(|v| v.to_vec()).unwrap_or_else(|| vec![0.0; n]);
    proj(&mut x);
    let mut r: Vec<f64> = b.iter().zip(a.mul(&x)).map(|(bi, ai)| bi - ai).collect();
    proj(&mut r);
    let bn = norm(b).max(f64::MIN_POSITIVE);
    if norm(&r) <= tol * bn {
        return Ok(x);
    }
    let mut z: Vec<f64> = r.iter().zip(&dinv).map(|(ri, di)| ri * di).collect();
    proj(&mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    for _ in 0..max_iter {
        a.mul_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::SolverBreakdown(format!("p·Ap = {pap}")));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        proj(&mut r);
        if norm(&r) <= tol * bn {
            proj(&mut x);
            return Ok(x);
        }
        for i in 0..n {
            z[i] = r[i] * dinv[i];
        }
        proj(&mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::NoConvergence(format!("cg after {max_iter} iterations")))
}

/// Dense LU solve of a sparse system; used for small indefinite systems.
pub fn dense_solve(a: &Csr, b: &[f64]) -> Result<Vec<f64>> {
    let m = nalgebra::DMatrix::from_fn(a.n, a.n, |i, j| a.get(i, j));
    let lu = m.lu();
    lu.solve(&nalgebra::DVector::from_column_slice(b))
        .map(|x| x.as_slice().to_vec())
        .ok_or_else(|| Error::SolverBreakdown("singular matrix".into()))
}
