//! Compressed sparse row matrices and a profile Cholesky factorisation.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// CSR matrix with sorted, duplicate-free column indices in every row.
#[derive(Clone, Debug, PartialEq)]
pub struct Csr {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    data: Vec<f64>,
}

impl Csr {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            indptr: vec![0; nrows + 1],
            indices: Vec::new(),
            data: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            nrows: n,
            ncols: n,
            indptr: (0..=n).collect(),
            indices: (0..n).collect(),
            data: vec![1.0; n],
        }
    }

    /// Builds from raw parts; rows must be sorted and duplicate-free.
    pub fn from_parts(
        nrows: usize,
        ncols: usize,
        indptr: Vec<usize>,
        indices: Vec<usize>,
        data: Vec<f64>,
    ) -> Result<Self> {
        if indptr.len() != nrows + 1 || indices.len() != data.len() || indptr[nrows] != data.len() {
            return Err(Error::InvalidArgument("inconsistent CSR arrays".into()));
        }
        for r in 0..nrows {
            let row = &indices[indptr[r]..indptr[r + 1]];
            if row.windows(2).any(|w| w[0] >= w[1]) || row.iter().any(|&c| c >= ncols) {
                return Err(Error::InvalidArgument(format!("row {r} is not sorted or out of range")));
            }
        }
        Ok(Self {
            nrows,
            ncols,
            indptr,
            indices,
            data,
        })
    }

    /// Sums duplicates in insertion order, so the result is deterministic.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut counts = vec![0usize; nrows + 1];
        for &(r, c, _) in triplets {
            assert!(r < nrows && c < ncols, "triplet ({r}, {c}) out of range");
            counts[r + 1] += 1;
        }
        for r in 0..nrows {
            counts[r + 1] += counts[r];
        }
        let mut fill = counts.clone();
        let mut tmp = vec![(0usize, 0.0f64); triplets.len()];
        for &(r, c, v) in triplets {
            tmp[fill[r]] = (c, v);
            fill[r] += 1;
        }
        let mut indptr = Vec::with_capacity(nrows + 1);
        let mut indices = Vec::with_capacity(triplets.len());
        let mut data = Vec::with_capacity(triplets.len());
        indptr.push(0);
        for r in 0..nrows {
            let row = &mut tmp[counts[r]..counts[r + 1]];
            row.sort_by_key(|e| e.0);
            for &(c, v) in row.iter() {
                if indices.len() > indptr[r] && *indices.last().unwrap() == c {
                    *data.last_mut().unwrap() += v;
                } else {
                    indices.push(c);
                    data.push(v);
                }
            }
            indptr.push(indices.len());
        }
        Self {
            nrows,
            ncols,
            indptr,
            indices,
            data,
        }
    }

    /// Zero matrix with the given sparsity pattern (each row sorted and unique).
    pub fn from_pattern(ncols: usize, rows: Vec<Vec<usize>>) -> Self {
        let nrows = rows.len();
        let mut indptr = Vec::with_capacity(nrows + 1);
        indptr.push(0);
        let nnz: usize = rows.iter().map(Vec::len).sum();
        let mut indices = Vec::with_capacity(nnz);
        for row in rows {
            indices.extend(row);
            indptr.push(indices.len());
        }
        Self {
            nrows,
            ncols,
            indptr,
            data: vec![0.0; indices.len()],
            indices,
        }
    }

    pub fn from_dense(m: &DMatrix<f64>) -> Self {
        let mut trip = Vec::new();
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                if m[(r, c)] != 0.0 {
                    trip.push((r, c, m[(r, c)]));
                }
            }
        }
        Self::from_triplets(m.nrows(), m.ncols(), &trip)
    }

    #[inline]
    pub fn nrows(&self) -> usize {
        self.nrows
    }

    #[inline]
    pub fn ncols(&self) -> usize {
        self.ncols
    }

    #[inline]
    pub fn nnz(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn indptr(&self) -> &[usize] {
        &self.indptr
    }

    #[inline]
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let (a, b) = (self.indptr[r], self.indptr[r + 1]);
        (&self.indices[a..b], &self.data[a..b])
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (cols, vals) = self.row(r);
        match cols.binary_search(&c) {
            Ok(k) => vals[k],
            Err(_) => 0.0,
        }
    }

    /// Adds `v` to an entry that must exist in the pattern.
    #[inline]
    pub fn add_to(&mut self, r: usize, c: usize, v: f64) {
        let (a, b) = (self.indptr[r], self.indptr[r + 1]);
        let k = self.indices[a..b]
            .binary_search(&c)
            .unwrap_or_else(|_| panic!("entry ({r}, {c}) not in pattern"));
        self.data[a + k] += v;
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows.min(self.ncols)).map(|i| self.get(i, i)).collect()
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.ncols);
        assert_eq!(y.len(), self.nrows);
        let row_dot = |r: usize| {
            let (cols, vals) = self.row(r);
            cols.iter().zip(vals).map(|(&c, &v)| v * x[c]).sum::<f64>()
        };
        if self.nnz() > 200_000 {
            y.par_iter_mut().enumerate().for_each(|(r, yr)| *yr = row_dot(r));
        } else {
            for (r, yr) in y.iter_mut().enumerate() {
                *yr = row_dot(r);
            }
        }
    }

    /// `y = A^T x`.
    pub fn matvec_transpose(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.nrows);
        let mut y = vec![0.0; self.ncols];
        for r in 0..self.nrows {
            if x[r] == 0.0 {
                continue;
            }
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                y[c] += v * x[r];
            }
        }
        y
    }

    pub fn transpose(&self) -> Csr {
        let mut counts = vec![0usize; self.ncols + 1];
        for &c in &self.indices {
            counts[c + 1] += 1;
        }
        for c in 0..self.ncols {
            counts[c + 1] += counts[c];
        }
        let mut fill = counts.clone();
        let mut indices = vec![0; self.nnz()];
        let mut data = vec![0.0; self.nnz()];
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                indices[fill[c]] = r;
                data[fill[c]] = v;
                fill[c] += 1;
            }
        }
        Csr {
            nrows: self.ncols,
            ncols: self.nrows,
            indptr: counts,
            indices,
            data,
        }
    }

    /// Sparse product `self * other` (row-wise Gustavson).
    pub fn matmul(&self, other: &Csr) -> Csr {
        assert_eq!(self.ncols, other.nrows, "dimension mismatch in product");
        let n = other.ncols;
        let rows: Vec<(Vec<usize>, Vec<f64>)> = (0..self.nrows)
            .into_par_iter()
            .map_init(
                || (vec![f64::NAN; n], Vec::<usize>::new()),
                |(acc, touched), r| {
                    touched.clear();
                    let (ac, av) = self.row(r);
                    for (&k, &a) in ac.iter().zip(av) {
                        let (bc, bv) = other.row(k);
                        for (&c, &b) in bc.iter().zip(bv) {
                            if acc[c].is_nan() {
                                acc[c] = a * b;
                                touched.push(c);
                            } else {
                                acc[c] += a * b;
                            }
                        }
                    }
                    touched.sort_unstable();
                    let vals: Vec<f64> = touched.iter().map(|&c| acc[c]).collect();
                    for &c in touched.iter() {
                        acc[c] = f64::NAN;
                    }
                    (touched.clone(), vals)
                },
            )
            .collect();
        let mut indptr = Vec::with_capacity(self.nrows + 1);
        indptr.push(0);
        let nnz = rows.iter().map(|r| r.0.len()).sum();
        let mut indices = Vec::with_capacity(nnz);
        let mut data = Vec::with_capacity(nnz);
        for (c, v) in rows {
            indices.extend(c);
            data.extend(v);
            indptr.push(indices.len());
        }
        Csr {
            nrows: self.nrows,
            ncols: n,
            indptr,
            indices,
            data,
        }
    }

    /// `P^T self P`.
    pub fn congruence(&self, p: &Csr) -> Csr {
        p.transpose().matmul(&self.matmul(p))
    }

    /// Submatrix with the given (sorted or unsorted) row and column index lists.
    pub fn select(&self, rows: &[usize], cols: &[usize]) -> Csr {
        let mut map = vec![usize::MAX; self.ncols];
        for (k, &c) in cols.iter().enumerate() {
            map[c] = k;
        }
        let mut indptr = Vec::with_capacity(rows.len() + 1);
        indptr.push(0);
        let mut indices = Vec::new();
        let mut data = Vec::new();
        let mut buf: Vec<(usize, f64)> = Vec::new();
        for &r in rows {
            buf.clear();
            let (rc, rv) = self.row(r);
            for (&c, &v) in rc.iter().zip(rv) {
                if map[c] != usize::MAX {
                    buf.push((map[c], v));
                }
            }
            buf.sort_by_key(|e| e.0);
            for &(c, v) in &buf {
                indices.push(c);
                data.push(v);
            }
            indptr.push(indices.len());
        }
        Csr {
            nrows: rows.len(),
            ncols: cols.len(),
            indptr,
            indices,
            data,
        }
    }

    pub fn scaled(&self, s: f64) -> Csr {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|v| *v *= s);
        out
    }

    /// Drops stored entries with `|v| <= tol`.
    pub fn pruned(&self, tol: f64) -> Csr {
        let mut indptr = Vec::with_capacity(self.nrows + 1);
        indptr.push(0);
        let mut indices = Vec::new();
        let mut data = Vec::new();
        for r in 0..self.nrows {
            let (c, v) = self.row(r);
            for (&cc, &vv) in c.iter().zip(v) {
                if vv.abs() > tol {
                    indices.push(cc);
                    data.push(vv);
                }
            }
            indptr.push(indices.len());
        }
        Csr {
            nrows: self.nrows,
            ncols: self.ncols,
            indptr,
            indices,
            data,
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.nrows, self.ncols);
        for r in 0..self.nrows {
            let (c, v) = self.row(r);
            for (&cc, &vv) in c.iter().zip(v) {
                m[(r, cc)] += vv;
            }
        }
        m
    }

    /// Largest `|a_ij - a_ji| / max(|a_ij|, |a_ji|)` over stored entries.
    pub fn symmetry_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for r in 0..self.nrows {
            let (c, v) = self.row(r);
            for (&cc, &vv) in c.iter().zip(v) {
                let t = self.get(cc, r);
                let scale = vv.abs().max(t.abs());
                if scale > 0.0 {
                    worst = worst.max((vv - t).abs() / scale);
                }
            }
        }
        worst
    }
}

/// Reverse Cuthill-McKee ordering of the symmetric pattern of `a`; `perm[new] = old`.
pub fn reverse_cuthill_mckee(a: &Csr) -> Vec<usize> {
    let n = a.nrows();
    let degree: Vec<usize> = (0..n).map(|i| a.row(i).0.len()).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut by_degree: Vec<usize> = (0..n).collect();
    by_degree.sort_by_key(|&i| (degree[i], i));
    let bfs = |start: usize, visited: &mut Vec<bool>, out: &mut Vec<usize>| {
        let begin = out.len();
        visited[start] = true;
        out.push(start);
        let mut head = begin;
        let mut nbrs = Vec::new();
        while head < out.len() {
            let v = out[head];
            head += 1;
            nbrs.clear();
            nbrs.extend(a.row(v).0.iter().copied().filter(|&w| !visited[w]));
            nbrs.sort_by_key(|&w| (degree[w], w));
            for &w in &nbrs {
                if !visited[w] {
                    visited[w] = true;
                    out.push(w);
                }
            }
        }
    };
    for &s in &by_degree {
        if visited[s] {
            continue;
        }
        // pseudo-peripheral start: last vertex of a BFS from the min-degree vertex
        let mut scratch_vis = visited.clone();
        let mut scratch = Vec::new();
        bfs(s, &mut scratch_vis, &mut scratch);
        let start = *scratch.last().unwrap();
        bfs(start, &mut visited, &mut order);
    }
    order.reverse();
    order
}

/// Profile (envelope) Cholesky factor of a symmetric positive definite matrix.
#[derive(Clone, Debug)]
pub struct EnvelopeCholesky {
    perm: Vec<usize>,
    first: Vec<usize>,
    rowptr: Vec<usize>,
    vals: Vec<f64>,
}

impl EnvelopeCholesky {
    pub fn new(a: &Csr) -> Result<Self> {
        let n = a.nrows();
        if n != a.ncols() {
            return Err(Error::InvalidArgument("matrix must be square".into()));
        }
        let perm = reverse_cuthill_mckee(a);
        let mut inv = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let mut first: Vec<usize> = (0..n).collect();
        for old in 0..n {
            let i = inv[old];
            for &c in a.row(old).0 {
                let j = inv[c];
                if j < i {
                    first[i] = first[i].min(j);
                }
            }
        }
        let mut rowptr = Vec::with_capacity(n + 1);
        rowptr.push(0);
        for i in 0..n {
            rowptr.push(rowptr[i] + (i - first[i] + 1));
        }
        let mut vals = vec![0.0; rowptr[n]];
        for old in 0..n {
            let i = inv[old];
            let (cols, v) = a.row(old);
            for (&c, &x) in cols.iter().zip(v) {
                let j = inv[c];
                if j <= i {
                    vals[rowptr[i] + j - first[i]] = x;
                }
            }
        }
        for i in 0..n {
            let fi = first[i];
            for j in fi..=i {
                let fj = first[j];
                let k0 = fi.max(fj);
                let mut s = vals[rowptr[i] + j - fi];
                for k in k0..j {
                    s -= vals[rowptr[i] + k - fi] * vals[rowptr[j] + k - fj];
                }
                if j == i {
                    if s <= 0.0 || !s.is_finite() {
                        return Err(Error::Singular(format!(
                            "matrix is not positive definite (pivot {i})"
                        )));
                    }
                    vals[rowptr[i] + i - fi] = s.sqrt();
                } else {
                    vals[rowptr[i] + j - fi] = s / vals[rowptr[j] + j - fj];
                }
            }
        }
        Ok(Self {
            perm,
            first,
            rowptr,
            vals,
        })
    }

    pub fn dim(&self) -> usize {
        self.perm.len()
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let mut y: Vec<f64> = self.perm.iter().map(|&o| b[o]).collect();
        for i in 0..n {
            let fi = self.first[i];
            let row = &self.vals[self.rowptr[i]..self.rowptr[i + 1]];
            let mut s = y[i];
            for k in fi..i {
                s -= row[k - fi] * y[k];
            }
            y[i] = s / row[i - fi];
        }
        for i in (0..n).rev() {
            let fi = self.first[i];
            let row = &self.vals[self.rowptr[i]..self.rowptr[i + 1]];
            y[i] /= row[i - fi];
            let yi = y[i];
            for k in fi..i {
                y[k] -= row[k - fi] * yi;
            }
        }
        let mut x = vec![0.0; n];
        for (new, &old) in self.perm.iter().enumerate() {
            x[old] = y[new];
        }
        x
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
