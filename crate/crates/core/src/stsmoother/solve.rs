//! Symmetric positive-definite solves for the penalized normal equations.
//!
//! Matrices are held as a lower band. Small systems are factored densely with
//! nalgebra; larger ones with a band Cholesky that never touches entries
//! outside the band.

use nalgebra::{DMatrix, DVector};

/// Pivot ratio below which an unpenalized system is treated as rank deficient.
const RANK_TOL: f64 = 1e-12;

/// Symmetric matrix stored as its lower band of half-width `b`.
#[derive(Debug, Clone, PartialEq)]
pub struct BandMatrix {
    n: usize,
    b: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, b: usize) -> BandMatrix {
        let b = b.min(n.saturating_sub(1));
        BandMatrix {
            n,
            b,
            data: vec![0.0; n * (b + 1)],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.b
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(j <= i && i - j <= self.b);
        i * (self.b + 1) + (j + self.b - i)
    }

    /// Adds `v` at `(i, j)` (and implicitly `(j, i)`).
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        assert!(i - j <= self.b, "entry ({i}, {j}) outside band {}", self.b);
        let k = self.idx(i, j);
        self.data[k] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        if i - j > self.b {
            0.0
        } else {
            self.data[self.idx(i, j)]
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| self.get(i, j))
    }

    /// `self + λ·other`, both with the same shape.
    pub fn plus_scaled(&self, other: &BandMatrix, lambda: f64) -> BandMatrix {
        assert_eq!((self.n, self.b), (other.n, other.b));
        let mut out = self.clone();
        for (o, v) in out.data.iter_mut().zip(&other.data) {
            *o += lambda * v;
        }
        out
    }

    /// Matrix-vector product.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for i in 0..self.n {
            for j in i.saturating_sub(self.b)..=i {
                let a = self.data[self.idx(i, j)];
                y[i] += a * x[j];
                if i != j {
                    y[j] += a * x[i];
                }
            }
        }
        y
    }
}

/// Why a factorization failed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FactorError {
    NotPositiveDefinite,
    RankDeficient,
}

/// Cholesky factor `A = L Lᵀ`.
pub enum Factor {
    Dense(nalgebra::Cholesky<f64, nalgebra::Dyn>),
    Band(BandMatrix),
}

impl Factor {
    /// Factors `a`, densely when `a.n() < dense_limit`. With `check_rank`
    /// a tiny pivot relative to the largest is reported as rank deficiency.
    pub fn new(a: &BandMatrix, dense_limit: usize, check_rank: bool) -> Result<Factor, FactorError> {
        let (factor, pivots) = if a.n < dense_limit {
            let chol = a.to_dense().cholesky().ok_or(FactorError::NotPositiveDefinite)?;
            let pivots: Vec<f64> = chol.l_dirty().diagonal().iter().copied().collect();
            (Factor::Dense(chol), pivots)
        } else {
            let l = band_cholesky(a)?;
            let pivots = (0..l.n).map(|i| l.get(i, i)).collect();
            (Factor::Band(l), pivots)
        };
        if check_rank {
            let max = pivots.iter().fold(0.0f64, |m, p| m.max(p * p));
            if pivots.iter().any(|p| p * p < RANK_TOL * max) {
                return Err(FactorError::RankDeficient);
            }
        }
        Ok(factor)
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        match self {
            Factor::Dense(c) => c.solve(&DVector::from_column_slice(rhs)).as_slice().to_vec(),
            Factor::Band(l) => {
                let mut y = forward(l, rhs);
                backward(l, &mut y);
                y
            }
        }
    }

    /// `tr(A⁻¹ G)` for symmetric band `g` of the same size.
    pub fn trace_inv_times(&self, g: &BandMatrix) -> f64 {
        match self {
            Factor::Dense(c) => {
                let x = c.solve(&g.to_dense());
                x.trace()
            }
            Factor::Band(_) => {
                let n = g.n;
                let mut col = vec![0.0; n];
                let mut total = 0.0;
                for j in 0..n {
                    col.iter_mut().for_each(|v| *v = 0.0);
                    let lo = j.saturating_sub(g.b);
                    let hi = (j + g.b).min(n - 1);
                    for (i, c) in col.iter_mut().enumerate().take(hi + 1).skip(lo) {
                        *c = g.get(i, j);
                    }
                    total += self.solve(&col)[j];
                }
                total
            }
        }
    }
}

fn band_cholesky(a: &BandMatrix) -> Result<BandMatrix, FactorError> {
    let (n, b) = (a.n, a.b);
    let mut l = a.clone();
    for j in 0..n {
        let lo = j.saturating_sub(b);
        let mut d = l.data[l.idx(j, j)];
        for k in lo..j {
            let v = l.data[l.idx(j, k)];
            d -= v * v;
        }
        if !(d > 0.0) {
            return Err(FactorError::NotPositiveDefinite);
        }
        let d = d.sqrt();
        let jj = l.idx(j, j);
        l.data[jj] = d;
        for i in (j + 1)..=(j + b).min(n - 1) {
            let mut s = l.data[l.idx(i, j)];
            for k in i.saturating_sub(b)..j {
                s -= l.data[l.idx(i, k)] * l.data[l.idx(j, k)];
            }
            let ij = l.idx(i, j);
            l.data[ij] = s / d;
        }
    }
    Ok(l)
}

fn forward(l: &BandMatrix, rhs: &[f64]) -> Vec<f64> {
    let mut y = rhs.to_vec();
    for i in 0..l.n {
        let mut s = y[i];
        for k in i.saturating_sub(l.b)..i {
            s -= l.data[l.idx(i, k)] * y[k];
        }
        y[i] = s / l.data[l.idx(i, i)];
    }
    y
}

fn backward(l: &BandMatrix, y: &mut [f64]) {
    for i in (0..l.n).rev() {
        let mut s = y[i];
        for k in (i + 1)..=(i + l.b).min(l.n - 1) {
            s -= l.data[l.idx(k, i)] * y[k];
        }
        y[i] = s / l.data[l.idx(i, i)];
    }
}
