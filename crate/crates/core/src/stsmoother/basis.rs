use serde::{Deserialize, Serialize};

use super::StError;

/// B-spline basis on one axis.
///
/// The domain is `[knots[degree], knots[m]]`; outside it every basis
/// function is zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BSplineBasis1D {
    pub knots: Vec<f64>,
    pub degree: usize,
    /// Number of basis functions.
    pub m: usize,
}

impl BSplineBasis1D {
    /// `m` functions of the given degree with equally spaced knots over
    /// `[lo, hi]`, padded by `degree` knots on each side.
    pub fn uniform(lo: f64, hi: f64, m: usize, degree: usize) -> Result<Self, StError> {
        if degree < 1 || m < degree + 1 {
            return Err(StError::BasisTooSmall { m, degree });
        }
        if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
            return Err(StError::DegenerateRange { axis: "basis" });
        }
        let spans = (m - degree) as f64;
        let step = (hi - lo) / spans;
        let knots = (0..=m + degree)
            .map(|j| {
                let k = j as f64 - degree as f64;
                // pin the interior ends exactly to lo and hi
                if j == degree {
                    lo
                } else if j == m {
                    hi
                } else {
                    lo + k * step
                }
            })
            .collect();
        Ok(BSplineBasis1D { knots, degree, m })
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.knots[self.degree], self.knots[self.m])
    }

    /// Index of the first nonzero function at `x` and the `degree + 1` values
    /// starting there; `None` outside the domain.
    pub fn eval(&self, x: f64) -> Option<(usize, Vec<f64>)> {
        let p = self.degree;
        let (lo, hi) = self.domain();
        if !(x >= lo && x <= hi) {
            return None;
        }
        // knot span s with knots[s] <= x < knots[s+1], the last span closed
        let s = if x >= hi {
            self.m - 1
        } else {
            self.knots[p..=self.m].partition_point(|k| *k <= x) - 1 + p
        };
        let t = &self.knots;
        let mut n = vec![0.0; p + 1];
        let mut left = vec![0.0; p + 1];
        let mut right = vec![0.0; p + 1];
        n[0] = 1.0;
        for j in 1..=p {
            left[j] = x - t[s + 1 - j];
            right[j] = t[s + j] - x;
            let mut saved = 0.0;
            for r in 0..j {
                let tmp = n[r] / (right[r + 1] + left[j - r]);
                n[r] = saved + right[r + 1] * tmp;
                saved = left[j - r] * tmp;
            }
            n[j] = saved;
        }
        Some((s - p, n))
    }

    /// All `m` function values at `x` (zeros outside the domain).
    pub fn eval_dense(&self, x: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.m];
        if let Some((first, vals)) = self.eval(x) {
            out[first..first + vals.len()].copy_from_slice(&vals);
        }
        out
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Textbook recursive definition, used as an oracle.
    pub(crate) fn cox_de_boor(t: &[f64], j: usize, p: usize, x: f64, last: bool) -> f64 {
        if p == 0 {
            // at the right end of the domain only the span closing there counts
            let on = if last {
                x == t[j + 1] && t[j] < t[j + 1]
            } else {
                t[j] <= x && x < t[j + 1]
            };
            return if on { 1.0 } else { 0.0 };
        }
        let mut v = 0.0;
        if t[j + p] > t[j] {
            v += (x - t[j]) / (t[j + p] - t[j]) * cox_de_boor(t, j, p - 1, x, last);
        }
        if t[j + p + 1] > t[j + 1] {
            v += (t[j + p + 1] - x) / (t[j + p + 1] - t[j + 1]) * cox_de_boor(t, j + 1, p - 1, x, last);
        }
        v
    }

    #[test]
    fn linear_hats() {
        let b = BSplineBasis1D::uniform(0.0, 2.0, 3, 1).unwrap();
        assert_eq!(b.knots, vec![-1.0, 0.0, 1.0, 2.0, 3.0]);
        assert_eq!(b.eval_dense(0.5), vec![0.5, 0.5, 0.0]);
        assert_eq!(b.eval_dense(2.0), vec![0.0, 0.0, 1.0]);
    }

    #[test]
    fn partition_of_unity_and_local_support() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for (m, p) in [(6, 3), (8, 3), (5, 2), (4, 1), (12, 3)] {
            let b = BSplineBasis1D::uniform(-3.0, 7.0, m, p).unwrap();
            for _ in 0..1000 {
                let x = rng.random_range(-3.0..=7.0);
                let v = b.eval_dense(x);
                assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                assert!(v.iter().all(|x| *x >= 0.0));
                assert!(v.iter().filter(|x| **x != 0.0).count() <= p + 1);
            }
            assert!((b.eval_dense(7.0).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn matches_recursive_definition() {
        let b = BSplineBasis1D::uniform(0.0, 1.0, 7, 3).unwrap();
        for i in 0..=200 {
            let x = i as f64 / 200.0;
            let v = b.eval_dense(x);
            for (j, vj) in v.iter().enumerate() {
                let want = cox_de_boor(&b.knots, j, 3, x, x == 1.0);
                assert!((vj - want).abs() < 1e-13, "x={x} j={j}: {vj} vs {want}");
            }
        }
    }

    #[test]
    fn outside_range_is_zero() {
        let b = BSplineBasis1D::uniform(0.0, 1.0, 6, 3).unwrap();
        assert!(b.eval(-1e-9).is_none());
        assert!(b.eval(1.0 + 1e-9).is_none());
        assert!(b.eval_dense(-0.5).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn rejects_bad_sizes() {
        assert!(matches!(BSplineBasis1D::uniform(0.0, 1.0, 3, 3), Err(StError::BasisTooSmall { .. })));
        assert!(matches!(BSplineBasis1D::uniform(1.0, 1.0, 6, 3), Err(StError::DegenerateRange { .. })));
    }
}
