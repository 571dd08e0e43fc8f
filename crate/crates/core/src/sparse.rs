//! Compressed sparse rows and a banded LU for vectorized generators.
//!
//! In column-stacked form a Fock-space generator only couples indices that
//! differ by `0, ±1, ±(dim - 1), ±dim, ±(dim + 1)`, so its bandwidth is
//! `dim + 1` and banded elimination costs `O(dim^4)` instead of `O(dim^6)`.

use crate::fock::{CMatrix, CVector, C64, ZERO};

pub type Triplet = (usize, usize, C64);

#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<C64>,
}

impl SparseMatrix {
    /// Square matrix of size `n`; duplicate entries are summed and exact
    /// zeros dropped.
    pub fn from_triplets(n: usize, mut triplets: Vec<Triplet>) -> Self {
        triplets.sort_unstable_by_key(|&(i, j, _)| (i, j));
        let mut merged: Vec<Triplet> = Vec::with_capacity(triplets.len());
        for (i, j, v) in triplets {
            assert!(i < n && j < n, "entry ({i}, {j}) outside {n}x{n}");
            match merged.last_mut() {
                Some(last) if last.0 == i && last.1 == j => last.2 += v,
                _ => merged.push((i, j, v)),
            }
        }
        merged.retain(|t| t.2 != ZERO);
        let mut row_ptr = vec![0; n + 1];
        for &(i, _, _) in &merged {
            row_ptr[i + 1] += 1;
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        let col_idx = merged.iter().map(|t| t.1).collect();
        let values = merged.iter().map(|t| t.2).collect();
        Self { n, row_ptr, col_idx, values }
    }

    pub fn from_dense(m: &CMatrix) -> Self {
        assert!(m.is_square());
        Self::from_triplets(m.nrows(), nonzeros(m))
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, C64)> + '_ {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[span.clone()].iter().copied().zip(self.values[span].iter().copied())
    }

    pub fn triplets(&self) -> impl Iterator<Item = Triplet> + '_ {
        (0..self.n).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    pub fn mul_vec(&self, x: &CVector) -> CVector {
        let mut y = CVector::zeros(self.n);
        self.mul_vec_into(x.as_slice(), y.as_mut_slice());
        y
    }

    pub fn mul_vec_into(&self, x: &[C64], y: &mut [C64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = self.row(i).map(|(j, v)| v * x[j]).sum();
        }
    }

    pub fn mul_adjoint_vec(&self, x: &CVector) -> CVector {
        let mut y = CVector::zeros(self.n);
        for (i, j, v) in self.triplets() {
            y[j] += v.conj() * x[i];
        }
        y
    }

    pub fn to_dense(&self) -> CMatrix {
        let mut m = CMatrix::zeros(self.n, self.n);
        for (i, j, v) in self.triplets() {
            m[(i, j)] = v;
        }
        m
    }

    /// Maximum absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        (0..self.n).map(|i| self.row(i).map(|(_, v)| v.norm()).sum::<f64>()).fold(0.0, f64::max)
    }

    /// `(lower, upper)` bandwidths.
    pub fn bandwidth(&self) -> (usize, usize) {
        self.triplets().fold((0, 0), |(kl, ku), (i, j, _)| {
            if i > j {
                (kl.max(i - j), ku)
            } else {
                (kl, ku.max(j - i))
            }
        })
    }

    pub fn scale(&self, c: C64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= c);
        out
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.n, other.n);
        Self::from_triplets(self.n, self.triplets().chain(other.triplets()).collect())
    }

    /// Copy with row `i` replaced by the given entries.
    pub fn with_row(&self, i: usize, entries: &[(usize, C64)]) -> Self {
        let t = self
            .triplets()
            .filter(|&(r, _, _)| r != i)
            .chain(entries.iter().map(|&(j, v)| (i, j, v)))
            .collect();
        Self::from_triplets(self.n, t)
    }

    /// Largest singular value, by power iteration on `A^dag A`.
    pub fn norm2_estimate(&self, iterations: usize) -> f64 {
        let mut v = probe_vector(self.n);
        let mut sigma = 0.0;
        for _ in 0..iterations {
            let w = self.mul_adjoint_vec(&self.mul_vec(&v));
            let nw = w.norm();
            if nw == 0.0 {
                return 0.0;
            }
            sigma = nw.sqrt();
            v = w / C64::from(nw);
        }
        sigma
    }
}

/// Nonzero entries of a dense matrix.
pub fn nonzeros(m: &CMatrix) -> Vec<Triplet> {
    let mut t = Vec::new();
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            if m[(i, j)] != ZERO {
                t.push((i, j, m[(i, j)]));
            }
        }
    }
    t
}

/// Appends `coef * (B^T (x) A)`, the column-stacked form of `X -> A X B`.
pub fn push_sandwich(out: &mut Vec<Triplet>, coef: C64, a: &[Triplet], b: &[Triplet], dim: usize) {
    for &(s, q, bv) in b {
        for &(p, r, av) in a {
            out.push((q * dim + p, s * dim + r, coef * bv * av));
        }
    }
}

/// Deterministic, non-degenerate starting vector for iterative estimates.
fn probe_vector(n: usize) -> CVector {
    let v = CVector::from_fn(n, |i, _| C64::new(1.0 + (i % 7) as f64 * 0.1, ((i * 3) % 5) as f64 * 0.05));
    let norm = v.norm();
    v / C64::from(norm)
}

/// LU factorization with partial pivoting of a banded matrix, stored row-wise
/// as in LAPACK `gbtrf`: row `i` keeps columns `i - kl ..= i + kl + ku`.
#[derive(Debug, Clone)]
pub struct BandedLu {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<C64>,
    pivots: Vec<usize>,
}

impl BandedLu {
    pub fn factor(m: &SparseMatrix) -> Self {
        let (kl, ku0) = m.bandwidth();
        let n = m.size();
        let ku = ku0 + kl;
        let width = kl + ku + 1;
        let mut lu = Self { n, kl, ku, width, data: vec![ZERO; n * width], pivots: vec![0; n] };
        for (i, j, v) in m.triplets() {
            *lu.at_mut(i, j) = v;
        }
        for k in 0..n {
            let last = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = lu.at(k, k).norm();
            for i in k + 1..=last {
                let x = lu.at(i, k).norm();
                if x > best {
                    best = x;
                    p = i;
                }
            }
            lu.pivots[k] = p;
            let cmax = (k + ku).min(n - 1);
            if p != k {
                for j in k..=cmax {
                    let tmp = lu.at(k, j);
                    *lu.at_mut(k, j) = lu.at(p, j);
                    *lu.at_mut(p, j) = tmp;
                }
            }
            let pivot = lu.at(k, k);
            if pivot == ZERO {
                continue;
            }
            for i in k + 1..=last {
                let l = lu.at(i, k) / pivot;
                if l == ZERO {
                    continue;
                }
                *lu.at_mut(i, k) = l;
                for j in k + 1..=cmax {
                    let u = lu.at(k, j);
                    if u != ZERO {
                        *lu.at_mut(i, j) -= l * u;
                    }
                }
            }
        }
        lu
    }

    #[inline]
    fn offset(&self, i: usize, j: usize) -> usize {
        debug_assert!(j + self.kl >= i && j <= i + self.ku);
        i * self.width + (j + self.kl - i)
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> C64 {
        self.data[self.offset(i, j)]
    }

    #[inline]
    fn at_mut(&mut self, i: usize, j: usize) -> &mut C64 {
        let o = self.offset(i, j);
        &mut self.data[o]
    }

    /// `min |u_kk| / max |u_kk|`.
    pub fn pivot_ratio(&self) -> f64 {
        let (lo, hi) = (0..self.n)
            .map(|k| self.at(k, k).norm())
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), x| (lo.min(x), hi.max(x)));
        if hi == 0.0 {
            0.0
        } else {
            lo / hi
        }
    }

    pub fn solve(&self, b: &CVector) -> CVector {
        let n = self.n;
        let mut x = b.clone();
        for k in 0..n {
            let p = self.pivots[k];
            if p != k {
                x.swap_rows(k, p);
            }
            let xk = x[k];
            for i in k + 1..=(k + self.kl).min(n - 1) {
                x[i] -= self.at(i, k) * xk;
            }
        }
        for k in (0..n).rev() {
            let mut s = x[k];
            for j in k + 1..=(k + self.ku).min(n - 1) {
                s -= self.at(k, j) * x[j];
            }
            x[k] = s / self.at(k, k);
        }
        x
    }

    /// Solves `A^dag y = b`.
    pub fn solve_adjoint(&self, b: &CVector) -> CVector {
        let n = self.n;
        let mut z = b.clone();
        for k in 0..n {
            z[k] /= self.at(k, k).conj();
            let zk = z[k];
            for j in k + 1..=(k + self.ku).min(n - 1) {
                z[j] -= self.at(k, j).conj() * zk;
            }
        }
        for k in (0..n).rev() {
            let mut s = z[k];
            for i in k + 1..=(k + self.kl).min(n - 1) {
                s -= self.at(i, k).conj() * z[i];
            }
            z[k] = s;
            let p = self.pivots[k];
            if p != k {
                z.swap_rows(k, p);
            }
        }
        z
    }

    /// Smallest singular value, by inverse iteration on `(A^dag A)^-1`.
    pub fn min_singular_estimate(&self, iterations: usize) -> f64 {
        let mut v = probe_vector(self.n);
        let mut sigma = f64::INFINITY;
        for _ in 0..iterations {
            let w = self.solve(&self.solve_adjoint(&v));
            let nw = w.norm();
            if !nw.is_finite() {
                return 0.0;
            }
            sigma = 1.0 / nw.sqrt();
            v = w / C64::from(nw);
        }
        sigma
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn random_banded(n: usize, kl: usize, ku: usize, seed: u64) -> SparseMatrix {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut t = Vec::new();
        for i in 0..n {
            for j in i.saturating_sub(kl)..=(i + ku).min(n - 1) {
                if rng.random_bool(0.7) {
                    t.push((i, j, C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))));
                }
            }
        }
        SparseMatrix::from_triplets(n, t)
    }

    #[test]
    fn triplets_sum_and_drop_zeros() {
        let one = C64::from(1.0);
        let m = SparseMatrix::from_triplets(3, vec![(0, 1, one), (0, 1, one), (2, 2, one), (2, 2, -one)]);
        assert_eq!(m.nnz(), 1);
        assert_eq!(m.to_dense()[(0, 1)], C64::from(2.0));
    }

    #[test]
    fn banded_solve_matches_dense() {
        let m = random_banded(60, 7, 5, 3);
        let b = CVector::from_fn(60, |i, _| C64::new(i as f64, 1.0));
        let lu = BandedLu::factor(&m);
        let x = lu.solve(&b);
        assert!((m.mul_vec(&x) - &b).camax() < 1e-9 * b.camax());
        let y = lu.solve_adjoint(&b);
        assert!((m.mul_adjoint_vec(&y) - &b).camax() < 1e-9 * b.camax());
    }

    #[test]
    fn singular_value_estimates() {
        let m = random_banded(40, 3, 3, 9);
        let sv = m.to_dense().singular_values();
        let smax = sv.max();
        let smin = sv.min();
        assert!((m.norm2_estimate(200) - smax).abs() < 1e-3 * smax);
        let est = BandedLu::factor(&m).min_singular_estimate(200);
        assert!((est - smin).abs() < 1e-3 * smin, "{est} vs {smin}");
    }

    #[test]
    fn sandwich_matches_dense_kronecker() {
        let a = random_banded(4, 1, 1, 1).to_dense();
        let b = random_banded(4, 1, 0, 2).to_dense();
        let mut t = Vec::new();
        push_sandwich(&mut t, C64::new(0.0, 2.0), &nonzeros(&a), &nonzeros(&b), 4);
        let sparse = SparseMatrix::from_triplets(16, t).to_dense();
        let dense = crate::fock::sandwich(&a, &b) * C64::new(0.0, 2.0);
        assert!((sparse - dense).camax() < 1e-15);
    }
}
