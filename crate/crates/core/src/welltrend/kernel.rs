use std::f64::consts::PI;

use super::TrendError;

/// Gaussian kernel weight: the normal density with standard deviation `h` at `u`.
pub fn kernel_weight(u: f64, h: f64) -> Result<f64, TrendError> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(TrendError::InvalidBandwidth(h));
    }
    let z = u / h;
    Ok((-0.5 * z * z).exp() / (h * (2.0 * PI).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ratio_at_one_bandwidth() {
        let h = 37.5;
        let r = kernel_weight(h, h).unwrap() / kernel_weight(0.0, h).unwrap();
        assert!((r - (-0.5f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_bandwidth() {
        assert!(kernel_weight(0.0, 0.0).is_err());
        assert!(kernel_weight(0.0, -1.0).is_err());
        assert!(kernel_weight(0.0, f64::NAN).is_err());
        assert!(kernel_weight(0.0, f64::INFINITY).is_err());
    }

    proptest! {
        #[test]
        fn even_and_peaked_at_zero(d in -1e3f64..1e3, h in 1e-2f64..1e3) {
            let w = kernel_weight(d, h).unwrap();
            prop_assert_eq!(w, kernel_weight(-d, h).unwrap());
            prop_assert!(w <= kernel_weight(0.0, h).unwrap());
            prop_assert!(w >= 0.0);
        }
    }
}
