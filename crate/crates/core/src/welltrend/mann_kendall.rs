use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::TrendError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MannKendallResult {
    #[serde(rename = "S")]
    pub s: i64,
    pub tau: f64,
    pub var_s: f64,
    /// Two-sided, normal approximation with continuity correction.
    pub p_value: f64,
}

/// Sizes of the groups of tied values (groups of size one omitted).
fn tie_groups(values: &[f64]) -> Vec<usize> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mut groups = Vec::new();
    let mut run = 1;
    for w in v.windows(2) {
        if w[0] == w[1] {
            run += 1;
        } else {
            if run > 1 {
                groups.push(run);
            }
            run = 1;
        }
    }
    if run > 1 {
        groups.push(run);
    }
    groups
}

/// Mann-Kendall trend test on a series ordered by (distinct) time.
///
/// `tau` is tau-b: ties in the values shrink the denominator, times are untied.
pub fn mann_kendall(values: &[f64]) -> Result<MannKendallResult, TrendError> {
    let n = values.len();
    if n < 2 {
        return Err(TrendError::InsufficientData { needed: 2, got: n });
    }
    let mut s: i64 = 0;
    for i in 0..n {
        for j in (i + 1)..n {
            s += match values[j].partial_cmp(&values[i]) {
                Some(std::cmp::Ordering::Greater) => 1,
                Some(std::cmp::Ordering::Less) => -1,
                _ => 0,
            };
        }
    }
    let ties = tie_groups(values);
    let nf = n as f64;
    let tie_var: f64 = ties
        .iter()
        .map(|&t| {
            let t = t as f64;
            t * (t - 1.0) * (2.0 * t + 5.0)
        })
        .sum();
    let var_s = (nf * (nf - 1.0) * (2.0 * nf + 5.0) - tie_var) / 18.0;
    let pairs = nf * (nf - 1.0) / 2.0;
    let tied_pairs: f64 = ties.iter().map(|&t| (t * (t - 1)) as f64 / 2.0).sum();
    let denom = ((pairs - tied_pairs) * pairs).sqrt();
    let tau = if denom > 0.0 { s as f64 / denom } else { 0.0 };

    let p_value = if var_s <= 0.0 || s == 0 {
        1.0
    } else {
        let corrected = if s > 0 { s - 1 } else { s + 1 } as f64;
        let z = corrected / var_s.sqrt();
        let normal = Normal::standard();
        (2.0 * (1.0 - normal.cdf(z.abs()))).clamp(0.0, 1.0)
    };
    Ok(MannKendallResult {
        s,
        tau: tau.clamp(-1.0, 1.0),
        var_s,
        p_value,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn monotone_series() {
        let up = mann_kendall(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(up.s, 6);
        assert_eq!(up.tau, 1.0);
        assert_eq!(up.var_s, 4.0 * 3.0 * 13.0 / 18.0);
        let down = mann_kendall(&[4.0, 3.0, 2.0, 1.0]).unwrap();
        assert_eq!(down.s, -6);
        assert_eq!(down.tau, -1.0);
    }

    #[test]
    fn all_tied() {
        let r = mann_kendall(&[2.0; 5]).unwrap();
        assert_eq!((r.s, r.tau, r.var_s, r.p_value), (0, 0.0, 0.0, 1.0));
    }

    #[test]
    fn too_short() {
        assert!(matches!(mann_kendall(&[1.0]), Err(TrendError::InsufficientData { .. })));
    }

    #[test]
    fn reference_p_value() {
        // n = 10 strictly increasing: S = 45, var = 125, z = 44/sqrt(125).
        let v: Vec<f64> = (0..10).map(f64::from).collect();
        let r = mann_kendall(&v).unwrap();
        assert_eq!(r.s, 45);
        assert_eq!(r.var_s, 125.0);
        let z: f64 = 44.0 / 125f64.sqrt();
        let expected = 2.0 * (1.0 - Normal::standard().cdf(z));
        assert!((r.p_value - expected).abs() < 1e-15);
        assert!(r.p_value < 1e-4);
    }

    proptest! {
        #[test]
        fn reversal_negates(v in proptest::collection::vec(0u8..5, 2..15)) {
            let v: Vec<f64> = v.into_iter().map(f64::from).collect();
            let mut r = v.clone();
            r.reverse();
            let a = mann_kendall(&v).unwrap();
            let b = mann_kendall(&r).unwrap();
            prop_assert_eq!(a.s, -b.s);
            prop_assert_eq!(a.tau, -b.tau);
            prop_assert_eq!(a.var_s, b.var_s);
            prop_assert_eq!(a.p_value, b.p_value);
        }

        #[test]
        fn monotone_transform_invariant(v in proptest::collection::vec(-5i8..5, 2..15)) {
            let v: Vec<f64> = v.into_iter().map(f64::from).collect();
            let t: Vec<f64> = v.iter().map(|x| x.powi(3) + 10.0 * x.exp()).collect();
            let a = mann_kendall(&v).unwrap();
            let b = mann_kendall(&t).unwrap();
            prop_assert_eq!((a.s, a.tau, a.var_s), (b.s, b.tau, b.var_s));
        }
    }
}
