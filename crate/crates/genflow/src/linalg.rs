//! Sparse and dense matrix kernels: CSR storage, LU with partial or full
//! pivoting, and a banded LU for grid operators.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Csr {
    pub nrows: usize,
    pub ncols: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl Csr {
    /// Builds from (row, col, value) triplets; duplicates are summed, explicit zeros kept out.
    pub fn from_triplets(nrows: usize, ncols: usize, mut t: Vec<(usize, usize, f64)>) -> Self {
        t.sort_by_key(|a| (a.0, a.1));
        let mut indptr = vec![0usize; nrows + 1];
        let mut indices = Vec::with_capacity(t.len());
        let mut values: Vec<f64> = Vec::with_capacity(t.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in t {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
                continue;
            }
            indices.push(c);
            values.push(v);
            indptr[r + 1] += 1;
            last = Some((r, c));
        }
        for r in 0..nrows {
            indptr[r + 1] += indptr[r];
        }
        let mut m = Csr { nrows, ncols, indptr, indices, values };
        m.drop_zeros();
        m
    }

    pub fn identity(n: usize) -> Self {
        Csr { nrows: n, ncols: n, indptr: (0..=n).collect(), indices: (0..n).collect(), values: vec![1.0; n] }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    fn drop_zeros(&mut self) {
        let mut indptr = vec![0usize; self.nrows + 1];
        let mut indices = Vec::with_capacity(self.indices.len());
        let mut values = Vec::with_capacity(self.values.len());
        for r in 0..self.nrows {
            for k in self.indptr[r]..self.indptr[r + 1] {
                if self.values[k] != 0.0 {
                    indices.push(self.indices[k]);
                    values.push(self.values[k]);
                }
            }
            indptr[r + 1] = indices.len();
        }
        self.indptr = indptr;
        self.indices = indices;
        self.values = values;
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (self.indptr[r]..self.indptr[r + 1]).map(move |k| (self.indices[k], self.values[k]))
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.row(r).find(|(j, _)| *j == c).map(|(_, v)| v).unwrap_or(0.0)
    }

    /// y = A x
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        for r in 0..self.nrows {
            let mut s = 0.0;
            for k in self.indptr[r]..self.indptr[r + 1] {
                s += self.values[k] * x[self.indices[k]];
            }
            y[r] = s;
        }
    }

    /// y = Aᵀ x
    pub fn apply_t(&self, x: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        for r in 0..self.nrows {
            let xr = x[r];
            if xr == 0.0 {
                continue;
            }
            for k in self.indptr[r]..self.indptr[r + 1] {
                y[self.indices[k]] += self.values[k] * xr;
            }
        }
    }

    pub fn transpose(&self) -> Csr {
        let mut t = Vec::with_capacity(self.nnz());
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                t.push((c, r, v));
            }
        }
        Csr::from_triplets(self.ncols, self.nrows, t)
    }

    /// diag(left) · A · diag(right)
    pub fn scale(&self, left: Option<&[f64]>, right: Option<&[f64]>, s: f64) -> Csr {
        let mut m = self.clone();
        for r in 0..m.nrows {
            let l = left.map(|d| d[r]).unwrap_or(1.0) * s;
            for k in m.indptr[r]..m.indptr[r + 1] {
                let rr = right.map(|d| d[m.indices[k]]).unwrap_or(1.0);
                m.values[k] *= l * rr;
            }
        }
        m.drop_zeros();
        m
    }

    pub fn add(&self, other: &Csr) -> Csr {
        let mut t = self.triplets();
        t.extend(other.triplets());
        Csr::from_triplets(self.nrows, self.ncols, t)
    }

    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        let mut t = Vec::with_capacity(self.nnz());
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                t.push((r, c, v));
            }
        }
        t
    }

    /// Sparse product A·B with a dense accumulator row.
    pub fn matmul(&self, b: &Csr) -> Csr {
        let mut acc = vec![0.0; b.ncols];
        let mut mark = vec![usize::MAX; b.ncols];
        let mut cols: Vec<usize> = Vec::new();
        let mut indptr = vec![0usize; self.nrows + 1];
        let mut indices = Vec::new();
        let mut values = Vec::new();
        for r in 0..self.nrows {
            cols.clear();
            for (k, a) in self.row(r) {
                for (c, bv) in b.row(k) {
                    if mark[c] != r {
                        mark[c] = r;
                        acc[c] = 0.0;
                        cols.push(c);
                    }
                    acc[c] += a * bv;
                }
            }
            cols.sort_unstable();
            for &c in &cols {
                if acc[c] != 0.0 {
                    indices.push(c);
                    values.push(acc[c]);
                }
            }
            indptr[r + 1] = indices.len();
        }
        Csr { nrows: self.nrows, ncols: b.ncols, indptr, indices, values }
    }

    pub fn to_dense(&self) -> Dense {
        let mut d = Dense::zeros(self.nrows, self.ncols);
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                d[(r, c)] += v;
            }
        }
        d
    }

    /// (lower, upper) bandwidth.
    pub fn bandwidth(&self) -> (usize, usize) {
        let mut lo = 0;
        let mut up = 0;
        for r in 0..self.nrows {
            for (c, _) in self.row(r) {
                if c < r {
                    lo = lo.max(r - c);
                } else {
                    up = up.max(c - r);
                }
            }
        }
        (lo, up)
    }

    pub fn norm_inf(&self) -> f64 {
        (0..self.nrows).map(|r| self.row(r).map(|(_, v)| libm::fabs(v)).sum::<f64>()).fold(0.0, f64::max)
    }
}

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub nrows: usize,
    pub ncols: usize,
    pub data: Vec<f64>,
}

impl core::ops::Index<(usize, usize)> for Dense {
    type Output = f64;
    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        &self.data[r * self.ncols + c]
    }
}

impl core::ops::IndexMut<(usize, usize)> for Dense {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        &mut self.data[r * self.ncols + c]
    }
}

impl Dense {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Dense { nrows, ncols, data: vec![0.0; nrows * ncols] }
    }

    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let ncols = rows.first().map(|r| r.len()).unwrap_or(0);
        let mut data = Vec::with_capacity(rows.len() * ncols);
        for r in rows {
            assert_eq!(r.len(), ncols, "ragged rows");
            data.extend_from_slice(r);
        }
        Dense { nrows: rows.len(), ncols, data }
    }

    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        for r in 0..self.nrows {
            let row = &self.data[r * self.ncols..(r + 1) * self.ncols];
            y[r] = row.iter().zip(x).map(|(a, b)| a * b).sum();
        }
    }

    pub fn apply_t(&self, x: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        for r in 0..self.nrows {
            let row = &self.data[r * self.ncols..(r + 1) * self.ncols];
            for (c, a) in row.iter().enumerate() {
                y[c] += a * x[r];
            }
        }
    }

    pub fn transpose(&self) -> Dense {
        let mut t = Dense::zeros(self.ncols, self.nrows);
        for r in 0..self.nrows {
            for c in 0..self.ncols {
                t[(c, r)] = self[(r, c)];
            }
        }
        t
    }

    pub fn to_csr(&self) -> Csr {
        let mut t = Vec::new();
        for r in 0..self.nrows {
            for c in 0..self.ncols {
                let v = self[(r, c)];
                if v != 0.0 {
                    t.push((r, c, v));
                }
            }
        }
        Csr::from_triplets(self.nrows, self.ncols, t)
    }

    pub fn max_abs(&self) -> f64 {
        crate::num::max_abs(&self.data)
    }

    /// LU with partial pivoting; fails on an exactly singular pivot column.
    pub fn lu(&self) -> Result<Lu> {
        assert_eq!(self.nrows, self.ncols);
        let n = self.nrows;
        let mut a = self.data.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let mut p = k;
            let mut best = libm::fabs(a[k * n + k]);
            for r in k + 1..n {
                let v = libm::fabs(a[r * n + k]);
                if v > best {
                    best = v;
                    p = r;
                }
            }
            if best == 0.0 {
                return Err(Error::Singular);
            }
            if p != k {
                for c in 0..n {
                    a.swap(k * n + c, p * n + c);
                }
                perm.swap(k, p);
            }
            let piv = a[k * n + k];
            for r in k + 1..n {
                let l = a[r * n + k] / piv;
                if l == 0.0 {
                    continue;
                }
                a[r * n + k] = l;
                for c in k + 1..n {
                    a[r * n + c] -= l * a[k * n + c];
                }
            }
        }
        Ok(Lu { n, a, perm })
    }

    /// Null space via LU with complete pivoting. Pivots below `rel_tol · max|pivot|`
    /// count as zero; returns one basis vector per dropped pivot.
    pub fn null_space(&self, rel_tol: f64) -> Vec<Vec<f64>> {
        assert_eq!(self.nrows, self.ncols);
        let n = self.nrows;
        let mut a = self.data.clone();
        let mut rowp: Vec<usize> = (0..n).collect();
        let mut colp: Vec<usize> = (0..n).collect();
        let scale = self.max_abs().max(f64::MIN_POSITIVE);
        let mut rank = n;
        for k in 0..n {
            let (mut pr, mut pc, mut best) = (k, k, 0.0);
            for r in k..n {
                for c in k..n {
                    let v = libm::fabs(a[r * n + c]);
                    if v > best {
                        best = v;
                        pr = r;
                        pc = c;
                    }
                }
            }
            if best <= rel_tol * scale {
                rank = k;
                break;
            }
            if pr != k {
                for c in 0..n {
                    a.swap(k * n + c, pr * n + c);
                }
                rowp.swap(k, pr);
            }
            if pc != k {
                for r in 0..n {
                    a.swap(r * n + k, r * n + pc);
                }
                colp.swap(k, pc);
            }
            let piv = a[k * n + k];
            for r in k + 1..n {
                let l = a[r * n + k] / piv;
                if l == 0.0 {
                    continue;
                }
                a[r * n + k] = 0.0;
                for c in k + 1..n {
                    a[r * n + c] -= l * a[k * n + c];
                }
            }
        }
        // U y = 0 with free variables rank..n in permuted column order.
        let mut basis = Vec::new();
        for free in rank..n {
            let mut y = vec![0.0; n];
            y[free] = 1.0;
            for k in (0..rank).rev() {
                let mut s = 0.0;
                for c in k + 1..n {
                    s += a[k * n + c] * y[c];
                }
                y[k] = -s / a[k * n + k];
            }
            let mut x = vec![0.0; n];
            for (k, &c) in colp.iter().enumerate() {
                x[c] = y[k];
            }
            basis.push(x);
        }
        basis
    }
}

pub struct Lu {
    n: usize,
    a: Vec<f64>,
    perm: Vec<usize>,
}

impl Lu {
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for r in 0..n {
            let mut s = x[r];
            for c in 0..r {
                s -= self.a[r * n + c] * x[c];
            }
            x[r] = s;
        }
        for r in (0..n).rev() {
            let mut s = x[r];
            for c in r + 1..n {
                s -= self.a[r * n + c] * x[c];
            }
            x[r] = s / self.a[r * n + r];
        }
        x
    }
}

/// LU with partial pivoting for a banded matrix (LAPACK gbtf2 layout, row-wise).
pub struct BandedLu {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    a: Vec<f64>,
    piv: Vec<usize>,
}

impl BandedLu {
    pub fn factor(m: &Csr) -> Result<Self> {
        let n = m.nrows;
        let (kl, ku) = m.bandwidth();
        let width = 2 * kl + ku + 1;
        let mut a = vec![0.0; n * width];
        let off = |i: usize, j: usize| i * width + j + kl - i;
        for r in 0..n {
            for (c, v) in m.row(r) {
                a[off(r, c)] += v;
            }
        }
        let mut piv = vec![0usize; n];
        for k in 0..n {
            let last = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = libm::fabs(a[off(k, k)]);
            for r in k + 1..=last {
                let v = libm::fabs(a[off(r, k)]);
                if v > best {
                    best = v;
                    p = r;
                }
            }
            if best == 0.0 {
                return Err(Error::Singular);
            }
            piv[k] = p;
            let cend = (k + ku + kl).min(n - 1);
            if p != k {
                for c in k..=cend {
                    a.swap(off(k, c), off(p, c));
                }
            }
            let d = a[off(k, k)];
            for r in k + 1..=last {
                let l = a[off(r, k)] / d;
                a[off(r, k)] = l;
                if l == 0.0 {
                    continue;
                }
                for c in k + 1..=cend {
                    a[off(r, c)] -= l * a[off(k, c)];
                }
            }
        }
        Ok(BandedLu { n, kl, ku, width, a, piv })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let (n, kl, ku, w) = (self.n, self.kl, self.ku, self.width);
        let off = |i: usize, j: usize| i * w + j + kl - i;
        let mut x = b.to_vec();
        for k in 0..n {
            x.swap(k, self.piv[k]);
            let xk = x[k];
            for r in k + 1..=(k + kl).min(n - 1) {
                x[r] -= self.a[off(r, k)] * xk;
            }
        }
        for k in (0..n).rev() {
            let mut s = x[k];
            for c in k + 1..=(k + ku + kl).min(n - 1) {
                s -= self.a[off(k, c)] * x[c];
            }
            x[k] = s / self.a[off(k, k)];
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Csr {
        Csr::from_triplets(3, 3, vec![(0, 0, 4.0), (0, 1, 1.0), (1, 0, 2.0), (1, 1, 5.0), (1, 2, 1.0), (2, 1, 3.0), (2, 2, 6.0), (0, 1, 1.0)])
    }

    #[test]
    fn triplets_sum_duplicates() {
        let m = sample();
        assert_eq!(m.get(0, 1), 2.0);
        assert_eq!(m.nnz(), 7);
    }

    #[test]
    fn transpose_apply_agrees() {
        let m = sample();
        let x = [1.0, -2.0, 0.5];
        let mut y1 = [0.0; 3];
        let mut y2 = [0.0; 3];
        m.apply_t(&x, &mut y1);
        m.transpose().apply(&x, &mut y2);
        assert_eq!(y1, y2);
    }

    #[test]
    fn matmul_matches_dense() {
        let m = sample();
        let p = m.matmul(&m.transpose()).to_dense();
        let d = m.to_dense();
        for r in 0..3 {
            for c in 0..3 {
                let e: f64 = (0..3).map(|k| d[(r, k)] * d[(c, k)]).sum();
                assert!((p[(r, c)] - e).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn dense_and_banded_lu_solve() {
        let m = sample();
        let b = [1.0, 2.0, 3.0];
        let x1 = m.to_dense().lu().unwrap().solve(&b);
        let x2 = BandedLu::factor(&m).unwrap().solve(&b);
        let mut r = [0.0; 3];
        m.apply(&x1, &mut r);
        for i in 0..3 {
            assert!((r[i] - b[i]).abs() < 1e-13);
            assert!((x1[i] - x2[i]).abs() < 1e-13);
        }
    }

    #[test]
    fn banded_lu_needs_pivoting() {
        // Zero leading diagonal forces a row swap inside the band.
        let n = 6;
        let mut t = Vec::new();
        for i in 0..n {
            if i > 0 {
                t.push((i, i - 1, 1.0 + i as f64));
            }
            if i + 1 < n {
                t.push((i, i + 1, 2.0));
            }
            if i % 2 == 1 {
                t.push((i, i, 0.5));
            }
        }
        let m = Csr::from_triplets(n, n, t);
        let b: Vec<f64> = (0..n).map(|i| i as f64 - 2.0).collect();
        let x = BandedLu::factor(&m).unwrap().solve(&b);
        let mut r = vec![0.0; n];
        m.apply(&x, &mut r);
        for i in 0..n {
            assert!((r[i] - b[i]).abs() < 1e-12, "{r:?}");
        }
    }

    #[test]
    fn null_space_dimension() {
        let q = Dense::from_rows(&[&[-1.0, 1.0], &[2.0, -2.0]]);
        let ns = q.transpose().null_space(1e-12);
        assert_eq!(ns.len(), 1);
        let v = &ns[0];
        assert!((v[0] / v[1] - 2.0).abs() < 1e-14);
        let block = Dense::from_rows(&[&[-1.0, 1.0, 0.0, 0.0], &[1.0, -1.0, 0.0, 0.0], &[0.0, 0.0, -2.0, 2.0], &[0.0, 0.0, 1.0, -1.0]]);
        assert_eq!(block.null_space(1e-12).len(), 2);
    }
}
