//! Banded linear algebra for the discrete operators.
//!
//! Every operator assembled on a [`Grid`](crate::grid::Grid) is the stiffness
//! matrix plus a diagonal, so a symmetric band (tridiagonal on radial grids,
//! half-bandwidth `n_per_axis - 1` on box grids) covers all of them.

/// Square matrix with equal lower and upper half-bandwidth, stored row-wise.
#[derive(Debug, Clone, PartialEq)]
pub struct BandMatrix {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, bw: usize) -> Self {
        Self {
            n,
            bw,
            data: vec![0.0; n * (2 * bw + 1)],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn half_bandwidth(&self) -> usize {
        self.bw
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(i.abs_diff(j) <= self.bw, "({i},{j}) outside band");
        i * (2 * self.bw + 1) + (j + self.bw - i)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i.abs_diff(j) > self.bw {
            0.0
        } else {
            self.data[self.idx(i, j)]
        }
    }

    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let k = self.idx(i, j);
        self.data[k] += v;
    }

    pub fn add_diagonal(&mut self, d: &[f64]) {
        assert_eq!(d.len(), self.n);
        for (i, &v) in d.iter().enumerate() {
            self.add(i, i, v);
        }
    }

    /// Replaces row and column `i` by the identity row/column.
    pub fn pin(&mut self, i: usize) {
        let lo = i.saturating_sub(self.bw);
        let hi = (i + self.bw).min(self.n - 1);
        for j in lo..=hi {
            let a = self.idx(i, j);
            let b = self.idx(j, i);
            self.data[a] = 0.0;
            self.data[b] = 0.0;
        }
        let d = self.idx(i, i);
        self.data[d] = 1.0;
    }

    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate().take(self.n) {
            let lo = i.saturating_sub(self.bw);
            let hi = (i + self.bw).min(self.n - 1);
            let row = &self.data[i * (2 * self.bw + 1)..];
            let mut acc = 0.0;
            for j in lo..=hi {
                acc += row[j + self.bw - i] * x[j];
            }
            *yi = acc;
        }
    }

    /// Cholesky factorization; `None` when the matrix is not numerically
    /// positive definite.
    pub fn cholesky(&self) -> Option<BandCholesky> {
        let n = self.n;
        let bw = self.bw;
        let w = bw + 1;
        // l[i*w + (j + bw - i)] for j in i-bw..=i
        let mut l = vec![0.0; n * w];
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            for j in lo..=i {
                let mut s = self.get(i, j);
                let klo = lo.max(j.saturating_sub(bw));
                for k in klo..j {
                    s -= l[i * w + (k + bw - i)] * l[j * w + (k + bw - j)];
                }
                if i == j {
                    if !(s > 0.0) || !s.is_finite() {
                        return None;
                    }
                    l[i * w + bw] = s.sqrt();
                } else {
                    l[i * w + (j + bw - i)] = s / l[j * w + bw];
                }
            }
        }
        Some(BandCholesky { n, bw, l })
    }

    /// LU factorization with partial pivoting.
    pub fn lu(&self) -> Option<BandLu> {
        let n = self.n;
        let bw = self.bw;
        let w = 3 * bw + 1;
        // row i holds columns i-bw ..= i+2bw at offset c + bw - i
        let mut a = vec![0.0; n * w];
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            let hi = (i + bw).min(n - 1);
            for j in lo..=hi {
                a[i * w + (j + bw - i)] = self.get(i, j);
            }
        }
        let at = |i: usize, c: usize| i * w + (c + bw - i);
        let mut piv = vec![0usize; n];
        for k in 0..n {
            let last_row = (k + bw).min(n - 1);
            let mut p = k;
            let mut best = a[at(k, k)].abs();
            for i in k + 1..=last_row {
                let v = a[at(i, k)].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if !(best > 0.0) || !best.is_finite() {
                return None;
            }
            piv[k] = p;
            let last_col = (k + 2 * bw).min(n - 1);
            if p != k {
                for c in k..=last_col {
                    a.swap(at(k, c), at(p, c));
                }
            }
            let pivot = a[at(k, k)];
            for i in k + 1..=last_row {
                let m = a[at(i, k)] / pivot;
                a[at(i, k)] = m;
                if m != 0.0 {
                    for c in k + 1..=last_col {
                        a[at(i, c)] -= m * a[at(k, c)];
                    }
                }
            }
        }
        Some(BandLu { n, bw, a, piv })
    }
}

#[derive(Debug, Clone)]
pub struct BandCholesky {
    n: usize,
    bw: usize,
    l: Vec<f64>,
}

impl BandCholesky {
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let (n, bw, w) = (self.n, self.bw, self.bw + 1);
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            let mut s = b[i];
            for k in lo..i {
                s -= self.l[i * w + (k + bw - i)] * b[k];
            }
            b[i] = s / self.l[i * w + bw];
        }
        for i in (0..n).rev() {
            let hi = (i + bw).min(n - 1);
            let mut s = b[i];
            for k in i + 1..=hi {
                s -= self.l[k * w + (i + bw - k)] * b[k];
            }
            b[i] = s / self.l[i * w + bw];
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

#[derive(Debug, Clone)]
pub struct BandLu {
    n: usize,
    bw: usize,
    a: Vec<f64>,
    piv: Vec<usize>,
}

impl BandLu {
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let (n, bw) = (self.n, self.bw);
        let w = 3 * bw + 1;
        let at = |i: usize, c: usize| i * w + (c + bw - i);
        for k in 0..n {
            let p = self.piv[k];
            if p != k {
                b.swap(k, p);
            }
            let bk = b[k];
            if bk != 0.0 {
                for i in k + 1..=(k + bw).min(n - 1) {
                    b[i] -= self.a[at(i, k)] * bk;
                }
            }
        }
        for k in (0..n).rev() {
            let mut s = b[k];
            for c in k + 1..=(k + 2 * bw).min(n - 1) {
                s -= self.a[at(k, c)] * b[c];
            }
            b[k] = s / self.a[at(k, k)];
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_band(n: usize, bw: usize, shift: f64, seed: u64) -> BandMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = BandMatrix::zeros(n, bw);
        for i in 0..n {
            for j in i..=(i + bw).min(n - 1) {
                let v: f64 = rng.gen_range(-1.0..1.0);
                m.add(i, j, v);
                if i != j {
                    m.add(j, i, v);
                }
            }
            m.add(i, i, shift);
        }
        m
    }

    #[test]
    fn cholesky_solves_spd_system() {
        let m = random_band(40, 3, 8.0, 1);
        let x: Vec<f64> = (0..40).map(|i| (i as f64 * 0.37).sin()).collect();
        let mut b = vec![0.0; 40];
        m.mul_vec(&x, &mut b);
        let y = m.cholesky().expect("spd").solve(&b);
        for (a, c) in x.iter().zip(&y) {
            assert!((a - c).abs() < 1e-12);
        }
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let mut m = BandMatrix::zeros(3, 1);
        m.add_diagonal(&[1.0, -1.0, 1.0]);
        assert!(m.cholesky().is_none());
    }

    #[test]
    fn lu_solves_indefinite_system() {
        let m = random_band(50, 4, 0.0, 7);
        let x: Vec<f64> = (0..50).map(|i| 1.0 + (i as f64).cos()).collect();
        let mut b = vec![0.0; 50];
        m.mul_vec(&x, &mut b);
        let y = m.lu().expect("nonsingular").solve(&b);
        for (a, c) in x.iter().zip(&y) {
            assert!((a - c).abs() < 1e-9, "{a} vs {c}");
        }
    }

    #[test]
    fn pinned_rows_decouple() {
        let mut m = random_band(10, 2, 6.0, 3);
        m.pin(4);
        assert_eq!(m.get(4, 4), 1.0);
        assert_eq!(m.get(3, 4), 0.0);
        assert_eq!(m.get(4, 6), 0.0);
    }
}
