use alloc::vec;
use alloc::vec::Vec;

use super::FemError;

/// Square banded matrix with room for the fill-in of partial pivoting.
///
/// Row `i` stores columns `i - kl ..= i + kl + ku`; the extra `kl`
/// super-diagonals receive the fill produced by row interchanges.
#[derive(Clone, Debug)]
pub struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let width = 2 * kl + ku + 1;
        BandMatrix {
            n,
            kl,
            ku,
            width,
            data: vec![0.0; n * width],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    fn at(&self, i: usize, j: usize) -> usize {
        debug_assert!(j + self.kl >= i && j <= i + self.kl + self.ku);
        i * self.width + j + self.kl - i
    }

    fn in_band(&self, i: usize, j: usize) -> bool {
        i < self.n && j < self.n && j + self.kl >= i && j <= i + self.ku
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if self.in_band(i, j) {
            self.data[self.at(i, j)]
        } else {
            0.0
        }
    }

    /// Adds `v` at `(i, j)`; panics if outside the declared band.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        assert!(self.in_band(i, j), "entry ({i}, {j}) outside band");
        let k = self.at(i, j);
        self.data[k] += v;
    }

    /// Replaces row `i` with the identity row.
    pub fn set_identity_row(&mut self, i: usize) {
        let lo = i.saturating_sub(self.kl);
        let hi = (i + self.ku).min(self.n - 1);
        for j in lo..=hi {
            let k = self.at(i, j);
            self.data[k] = 0.0;
        }
        let k = self.at(i, i);
        self.data[k] = 1.0;
    }

    /// Matrix-vector product, used for residual checks.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                let lo = i.saturating_sub(self.kl);
                let hi = (i + self.ku).min(self.n - 1);
                (lo..=hi).map(|j| self.data[self.at(i, j)] * x[j]).sum()
            })
            .collect()
    }

    /// Gaussian elimination with partial pivoting; overwrites `b` with the
    /// solution and consumes the matrix.
    pub fn solve(mut self, b: &mut [f64]) -> Result<(), FemError> {
        let n = self.n;
        assert_eq!(b.len(), n);
        let (kl, w) = (self.kl, self.width);
        let reach = kl + self.ku;
        for k in 0..n {
            let last = (k + kl).min(n - 1);
            let mut piv = k;
            let mut best = self.data[self.at(k, k)].abs();
            for r in k + 1..=last {
                let v = self.data[self.at(r, k)].abs();
                if v > best {
                    best = v;
                    piv = r;
                }
            }
            if best == 0.0 || !best.is_finite() {
                return Err(FemError::SingularMatrix { pivot: k });
            }
            let jend = (k + reach).min(n - 1);
            if piv != k {
                for j in k..=jend {
                    let (a, c) = (self.at(k, j), self.at(piv, j));
                    self.data.swap(a, c);
                }
                b.swap(k, piv);
            }
            let len = jend - k;
            let diag = self.data[self.at(k, k)];
            let bk = b[k];
            let (head, tail) = self.data.split_at_mut((k + 1) * w);
            let pivot_row = &head[k * w + kl + 1..k * w + kl + 1 + len];
            for r in k + 1..=last {
                let off = (r - k - 1) * w;
                let col = off + k + kl - r;
                let l = tail[col] / diag;
                if l == 0.0 {
                    continue;
                }
                tail[col] = 0.0;
                let row = &mut tail[col + 1..col + 1 + len];
                for (x, &p) in row.iter_mut().zip(pivot_row) {
                    *x -= l * p;
                }
                b[r] -= l * bk;
            }
        }
        for k in (0..n).rev() {
            let jend = (k + reach).min(n - 1);
            let base = self.at(k, k);
            let mut s = b[k];
            for (t, j) in (k + 1..=jend).enumerate() {
                s -= self.data[base + 1 + t] * b[j];
            }
            b[k] = s / self.data[base];
        }
        Ok(())
    }
}
