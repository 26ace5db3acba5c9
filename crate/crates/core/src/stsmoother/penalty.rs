use serde::{Deserialize, Serialize};

use super::solve::BandMatrix;

/// Difference penalty on a 3-D coefficient lattice: order-`order` differences
/// taken along each axis separately and stacked.
///
/// Lattice position `(ix, iy, it)` maps to `ix + mx·(iy + my·it)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Penalty {
    pub order: usize,
    pub dims: [usize; 3],
}

/// Row of the 1-D difference operator: `(-1)^(d-k) C(d, k)`.
pub fn difference_row(order: usize) -> Vec<f64> {
    let mut row = vec![1.0];
    for _ in 0..order {
        let mut next = vec![0.0; row.len() + 1];
        for (i, v) in row.iter().enumerate() {
            next[i] -= v;
            next[i + 1] += v;
        }
        row = next;
    }
    row
}

impl Penalty {
    pub fn new(order: usize, dims: [usize; 3]) -> Penalty {
        Penalty { order, dims }
    }

    pub fn size(&self) -> usize {
        self.dims.iter().product()
    }

    fn strides(&self) -> [usize; 3] {
        [1, self.dims[0], self.dims[0] * self.dims[1]]
    }

    /// Visits every difference row as `(start index, stride)` along each axis.
    fn for_each_row(&self, mut f: impl FnMut(usize, usize)) {
        let strides = self.strides();
        let [mx, my, mt] = self.dims;
        for axis in 0..3 {
            let len = self.dims[axis];
            if len <= self.order {
                continue;
            }
            for it in 0..mt {
                for iy in 0..my {
                    for ix in 0..mx {
                        let pos = [ix, iy, it][axis];
                        if pos + self.order < len {
                            f(ix + mx * (iy + my * it), strides[axis]);
                        }
                    }
                }
            }
        }
    }

    /// Stacked differences `D α`.
    pub fn apply(&self, alpha: &[f64]) -> Vec<f64> {
        let row = difference_row(self.order);
        let mut out = Vec::new();
        self.for_each_row(|start, stride| {
            out.push(row.iter().enumerate().map(|(k, c)| c * alpha[start + k * stride]).sum());
        });
        out
    }

    pub fn norm_sq(&self, alpha: &[f64]) -> f64 {
        self.apply(alpha).iter().map(|v| v * v).sum()
    }

    /// Widest index offset between coupled coefficients.
    pub fn bandwidth(&self) -> usize {
        self.order * self.strides()[2]
    }

    /// Adds `λ D′D` into a symmetric band matrix.
    pub fn add_to(&self, a: &mut BandMatrix, lambda: f64) {
        let row = difference_row(self.order);
        self.for_each_row(|start, stride| {
            for (i, ci) in row.iter().enumerate() {
                for (j, cj) in row.iter().enumerate().take(i + 1) {
                    a.add(start + i * stride, start + j * stride, lambda * ci * cj);
                }
            }
        });
    }

    /// Dense stacked `D` (rows × m), for checks.
    pub fn dense(&self) -> nalgebra::DMatrix<f64> {
        let row = difference_row(self.order);
        let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
        self.for_each_row(|start, stride| {
            rows.push(row.iter().enumerate().map(|(k, c)| (start + k * stride, *c)).collect());
        });
        let mut d = nalgebra::DMatrix::zeros(rows.len(), self.size());
        for (r, entries) in rows.iter().enumerate() {
            for (c, v) in entries {
                d[(r, *c)] = *v;
            }
        }
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn difference_rows() {
        assert_eq!(difference_row(1), vec![-1.0, 1.0]);
        assert_eq!(difference_row(2), vec![1.0, -2.0, 1.0]);
        assert_eq!(difference_row(3), vec![-1.0, 3.0, -3.0, 1.0]);
    }

    #[test]
    fn null_spaces() {
        let p1 = Penalty::new(1, [4, 3, 5]);
        let p2 = Penalty::new(2, [4, 3, 5]);
        assert_eq!(p2.apply(&vec![1.0; 60]).len(), 2 * 3 * 5 + 4 * 1 * 5 + 4 * 3 * 3);
        assert!(p1.apply(&vec![2.5; 60]).iter().all(|v| *v == 0.0));
        assert!(p2.apply(&vec![2.5; 60]).iter().all(|v| *v == 0.0));
        let mut lin = vec![0.0; 60];
        for it in 0..5 {
            for iy in 0..3 {
                for ix in 0..4 {
                    lin[ix + 4 * (iy + 3 * it)] = 1.0 + 2.0 * ix as f64 - 0.5 * iy as f64 + 3.0 * it as f64;
                }
            }
        }
        assert!(p2.apply(&lin).iter().all(|v| v.abs() < 1e-12));
        assert!(p1.norm_sq(&lin) > 0.0);
    }

    #[test]
    fn band_assembly_matches_dense() {
        let p = Penalty::new(2, [4, 3, 5]);
        let mut band = BandMatrix::zeros(60, p.bandwidth());
        p.add_to(&mut band, 2.0);
        let d = p.dense();
        let want = d.transpose() * &d * 2.0;
        let got = band.to_dense();
        assert!((got - want).amax() < 1e-12);
    }
}
