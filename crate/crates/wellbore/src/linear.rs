//! Banded LU factorization with partial pivoting. The well tree ordered
//! depth-first gives a narrow band, so a dense band factorization is the
//! whole sparse direct solver this problem needs.

use crate::error::{Error, Result};

/// Band matrix in LAPACK-style storage: entry (i, j) lives at
/// `data[j * ldab + (kl + ku + i - j)]`, with `kl` extra upper diagonals
/// reserved for pivoting fill.
#[derive(Clone, Debug)]
pub struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    ldab: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn new(n: usize, kl: usize, ku: usize) -> Self {
        let ldab = 2 * kl + ku + 1;
        Self {
            n,
            kl,
            ku,
            ldab,
            data: vec![0.0; ldab * n],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.n && j < self.n);
        debug_assert!(
            i + self.ku + self.kl >= j && j + self.kl >= i,
            "entry ({i}, {j}) outside band kl={} ku={}",
            self.kl,
            self.ku
        );
        j * self.ldab + (self.kl + self.ku + i - j)
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let s = self.slot(i, j);
        self.data[s] += v;
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let s = self.slot(i, j);
        self.data[s] = v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i + self.ku + self.kl >= j && j + self.kl >= i {
            self.data[self.slot(i, j)]
        } else {
            0.0
        }
    }

    /// Zero an entire row inside the band (used when replacing an equation).
    pub fn clear_row(&mut self, i: usize) {
        let lo = i.saturating_sub(self.kl);
        let hi = (i + self.ku + self.kl).min(self.n - 1);
        for j in lo..=hi {
            let s = self.slot(i, j);
            self.data[s] = 0.0;
        }
    }

    pub fn mat_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for j in 0..self.n {
            let lo = j.saturating_sub(self.ku + self.kl);
            let hi = (j + self.kl).min(self.n - 1);
            for i in lo..=hi {
                y[i] += self.get(i, j) * x[j];
            }
        }
        y
    }

    /// LU factorization with partial pivoting (in place).
    pub fn factor(mut self) -> Result<BandLu> {
        let n = self.n;
        let (kl, ku) = (self.kl, self.ku);
        let mut pivots = vec![0usize; n];
        for j in 0..n {
            let i_max = (j + kl).min(n - 1);
            let mut piv = j;
            let mut best = self.get(j, j).abs();
            for i in (j + 1)..=i_max {
                let a = self.get(i, j).abs();
                if a > best {
                    best = a;
                    piv = i;
                }
            }
            if best == 0.0 || !best.is_finite() {
                return Err(Error::Linear(format!(
                    "zero or non-finite pivot in column {j}"
                )));
            }
            pivots[j] = piv;
            let j_hi = (j + ku + kl).min(n - 1);
            if piv != j {
                for k in j..=j_hi {
                    let a = self.slot(j, k);
                    let b = self.slot(piv, k);
                    self.data.swap(a, b);
                }
            }
            let diag = self.get(j, j);
            for i in (j + 1)..=i_max {
                let m = self.get(i, j) / diag;
                self.set(i, j, m);
                if m != 0.0 {
                    for k in (j + 1)..=j_hi {
                        let v = m * self.get(j, k);
                        if v != 0.0 {
                            let s = self.slot(i, k);
                            self.data[s] -= v;
                        }
                    }
                }
            }
        }
        Ok(BandLu {
            band: self,
            pivots,
        })
    }
}

/// Factored band matrix.
pub struct BandLu {
    band: BandMatrix,
    pivots: Vec<usize>,
}

impl BandLu {
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.band.n;
        let kl = self.band.kl;
        for j in 0..n {
            let piv = self.pivots[j];
            if piv != j {
                b.swap(j, piv);
            }
            let i_max = (j + kl).min(n - 1);
            for i in (j + 1)..=i_max {
                b[i] -= self.band.get(i, j) * b[j];
            }
        }
        for j in (0..n).rev() {
            b[j] /= self.band.get(j, j);
            let lo = j.saturating_sub(self.band.ku + self.band.kl);
            for i in lo..j {
                b[i] -= self.band.get(i, j) * b[j];
            }
        }
    }
}
