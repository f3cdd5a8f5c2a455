//! Banded matrices: symmetric storage with an in-place Cholesky factor, and a
//! general band LU with partial pivoting for indefinite Jacobians.

use crate::error::{Error, Result};

/// Symmetric band matrix, lower triangle stored row by row.
///
/// Row `i` keeps columns `i - bw ..= i`, padded on the left for the first rows.
#[derive(Debug, Clone)]
pub struct SymBand {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl SymBand {
    pub fn zeros(n: usize, bw: usize) -> Self {
        Self { n, bw, data: vec![0.0; n * (bw + 1)] }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(j <= i && i - j <= self.bw);
        i * (self.bw + 1) + self.bw + j - i
    }

    /// Entry `(i, j)` of the full symmetric matrix.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        if i - j > self.bw {
            0.0
        } else {
            self.data[self.idx(i, j)]
        }
    }

    /// Adds `v` to the symmetric pair `(i, j)`, `(j, i)`.
    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        let k = self.idx(i, j);
        self.data[k] += v;
    }

    /// Linear combination `a * self + b * other` of two matrices with equal shape.
    pub fn combine(&self, a: f64, other: &SymBand, b: f64) -> SymBand {
        assert_eq!(self.n, other.n);
        assert_eq!(self.bw, other.bw);
        let data = self.data.iter().zip(&other.data).map(|(x, y)| a * x + b * y).collect();
        SymBand { n: self.n, bw: self.bw, data }
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n);
        assert_eq!(y.len(), self.n);
        y.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bw);
            let row = &self.data[self.idx(i, lo)..=self.idx(i, i)];
            let mut acc = row[row.len() - 1] * x[i];
            for (off, &a) in row[..row.len() - 1].iter().enumerate() {
                let j = lo + off;
                acc += a * x[j];
                y[j] += a * x[i];
            }
            y[i] += acc;
        }
    }

    /// Quadratic form `x^T A x`.
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        let mut y = vec![0.0; self.n];
        self.matvec(x, &mut y);
        x.iter().zip(&y).map(|(a, b)| a * b).sum()
    }

    /// Cholesky factorization `A = L L^T`; fails when a pivot is not positive.
    pub fn cholesky(&self) -> Result<Cholesky> {
        let mut l = self.clone();
        let bw = self.bw;
        for j in 0..self.n {
            let lo = j.saturating_sub(bw);
            let (dj_start, dj_end) = (l.idx(j, lo), l.idx(j, j));
            let s: f64 = l.data[dj_start..dj_end].iter().map(|v| v * v).sum();
            let d = l.data[dj_end] - s;
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::Singular(format!("non-positive pivot {d:e} at row {j}")));
            }
            let d = d.sqrt();
            l.data[dj_end] = d;
            let hi = (j + bw).min(self.n - 1);
            for i in (j + 1)..=hi {
                let lo_i = i.saturating_sub(bw).max(lo);
                let ri = l.idx(i, lo_i);
                let rj = l.idx(j, lo_i);
                let len = j - lo_i;
                let mut dot = 0.0;
                for k in 0..len {
                    dot += l.data[ri + k] * l.data[rj + k];
                }
                let e = l.idx(i, j);
                l.data[e] = (l.data[e] - dot) / d;
            }
        }
        Ok(Cholesky { l })
    }
}

/// Band Cholesky factor.
#[derive(Debug, Clone)]
pub struct Cholesky {
    l: SymBand,
}

impl Cholesky {
    pub fn dim(&self) -> usize {
        self.l.n
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        let l = &self.l;
        let n = l.n;
        assert_eq!(b.len(), n);
        for i in 0..n {
            let lo = i.saturating_sub(l.bw);
            let start = l.idx(i, lo);
            let mut s = b[i];
            for (k, &a) in l.data[start..l.idx(i, i)].iter().enumerate() {
                s -= a * b[lo + k];
            }
            b[i] = s / l.data[l.idx(i, i)];
        }
        for i in (0..n).rev() {
            let xi = b[i] / l.data[l.idx(i, i)];
            b[i] = xi;
            let lo = i.saturating_sub(l.bw);
            let start = l.idx(i, lo);
            for (k, &a) in l.data[start..l.idx(i, i)].iter().enumerate() {
                b[lo + k] -= a * xi;
            }
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

/// General band matrix in column-major band storage, factorized by LU with
/// partial pivoting. Column `j` holds rows `j - ku - kl ..= j + kl`.
#[derive(Debug, Clone)]
pub struct BandLu {
    n: usize,
    kl: usize,
    ku: usize,
    ld: usize,
    data: Vec<f64>,
    piv: Vec<usize>,
    factored: bool,
}

impl BandLu {
    /// Copies a symmetric band matrix into general band storage.
    pub fn from_sym(a: &SymBand) -> Self {
        let n = a.n;
        let kl = a.bw;
        let ku = a.bw;
        let ld = 2 * kl + ku + 1;
        let mut m = Self { n, kl, ku, ld, data: vec![0.0; n * ld], piv: vec![0; n], factored: false };
        for i in 0..n {
            let lo = i.saturating_sub(a.bw);
            for j in lo..=i {
                let v = a.data[a.idx(i, j)];
                let p = m.pos(i, j);
                m.data[p] = v;
                if i != j {
                    let q = m.pos(j, i);
                    m.data[q] = v;
                }
            }
        }
        m
    }

    #[inline]
    fn pos(&self, i: usize, j: usize) -> usize {
        debug_assert!(i + self.ku + self.kl >= j && i <= j + self.kl);
        j * self.ld + (i + self.ku + self.kl - j)
    }

    pub fn factor(mut self) -> Result<Self> {
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        for j in 0..n {
            let last = (j + kl).min(n - 1);
            let mut p = j;
            let mut best = self.data[self.pos(j, j)].abs();
            for i in (j + 1)..=last {
                let v = self.data[self.pos(i, j)].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best == 0.0 || !best.is_finite() {
                return Err(Error::Singular(format!("zero pivot in column {j}")));
            }
            self.piv[j] = p;
            let cmax = (j + ku + kl).min(n - 1);
            if p != j {
                for c in j..=cmax {
                    let a = self.pos(j, c);
                    let b = self.pos(p, c);
                    self.data.swap(a, b);
                }
            }
            let d = self.data[self.pos(j, j)];
            for i in (j + 1)..=last {
                let k = self.pos(i, j);
                self.data[k] /= d;
            }
            if last == j {
                continue;
            }
            let mult_start = self.pos(j + 1, j);
            let len = last - j;
            for c in (j + 1)..=cmax {
                let a = self.data[self.pos(j, c)];
                if a == 0.0 {
                    continue;
                }
                let col_start = self.pos(j + 1, c);
                for k in 0..len {
                    self.data[col_start + k] -= self.data[mult_start + k] * a;
                }
            }
        }
        self.factored = true;
        Ok(self)
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        assert!(self.factored, "BandLu::solve before factor");
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        for j in 0..n {
            let p = self.piv[j];
            if p != j {
                b.swap(j, p);
            }
            let bj = b[j];
            if bj != 0.0 {
                for i in (j + 1)..=(j + kl).min(n - 1) {
                    b[i] -= self.data[self.pos(i, j)] * bj;
                }
            }
        }
        for j in (0..n).rev() {
            let xj = b[j] / self.data[self.pos(j, j)];
            b[j] = xj;
            if xj != 0.0 {
                for i in j.saturating_sub(ku + kl)..j {
                    b[i] -= self.data[self.pos(i, j)] * xj;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_from(a: &SymBand) -> Vec<Vec<f64>> {
        (0..a.dim()).map(|i| (0..a.dim()).map(|j| a.get(i, j)).collect()).collect()
    }

    fn laplace_like(n: usize, bw: usize, shift: f64) -> SymBand {
        let mut a = SymBand::zeros(n, bw);
        for i in 0..n {
            a.add(i, i, 2.0 * bw as f64 + shift);
            for k in 1..=bw {
                if i + k < n {
                    a.add(i + k, i, -1.0 + 0.1 * k as f64);
                }
            }
        }
        a
    }

    #[test]
    fn cholesky_solves_spd_system() {
        let a = laplace_like(40, 3, 0.5);
        let x: Vec<f64> = (0..40).map(|i| (i as f64 * 0.37).sin()).collect();
        let mut b = vec![0.0; 40];
        a.matvec(&x, &mut b);
        let y = a.cholesky().unwrap().solve(&b);
        for (u, v) in x.iter().zip(&y) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn matvec_matches_dense() {
        let a = laplace_like(12, 2, 1.0);
        let d = dense_from(&a);
        let x: Vec<f64> = (0..12).map(|i| 1.0 + i as f64).collect();
        let mut y = vec![0.0; 12];
        a.matvec(&x, &mut y);
        for i in 0..12 {
            let e: f64 = (0..12).map(|j| d[i][j] * x[j]).sum();
            assert!((e - y[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn lu_handles_indefinite_matrix() {
        // Shift far enough to make the matrix indefinite.
        let a = laplace_like(30, 2, -5.3);
        assert!(a.cholesky().is_err());
        let x: Vec<f64> = (0..30).map(|i| (i as f64).cos()).collect();
        let mut b = vec![0.0; 30];
        a.matvec(&x, &mut b);
        let lu = BandLu::from_sym(&a).factor().unwrap();
        lu.solve_in_place(&mut b);
        for (u, v) in x.iter().zip(&b) {
            assert!((u - v).abs() < 1e-10, "{u} vs {v}");
        }
    }
}
