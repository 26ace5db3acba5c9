use serde::{Deserialize, Serialize};

use super::TrendError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ParametricForm {
    Linear,
    LogLinear,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParametricFit {
    pub form: ParametricForm,
    pub intercept: f64,
    /// Per day, in value units (linear) or natural-log units (log-linear).
    pub slope: f64,
    pub slope_se: f64,
}

/// Ordinary least squares of `values` on `times`, optionally on the log scale.
pub fn parametric_fit(
    times: &[f64],
    values: &[f64],
    form: ParametricForm,
) -> Result<ParametricFit, TrendError> {
    let n = times.len();
    if values.len() != n {
        return Err(TrendError::LengthMismatch);
    }
    if n < 3 {
        return Err(TrendError::InsufficientData { needed: 3, got: n });
    }
    let y: Vec<f64> = match form {
        ParametricForm::Linear => values.to_vec(),
        ParametricForm::LogLinear => values
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                if v > 0.0 {
                    Ok(v.ln())
                } else {
                    Err(TrendError::NonPositive { index: i, value: v })
                }
            })
            .collect::<Result<_, _>>()?,
    };
    let nf = n as f64;
    let tbar = times.iter().sum::<f64>() / nf;
    let ybar = y.iter().sum::<f64>() / nf;
    let sxx: f64 = times.iter().map(|t| (t - tbar).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(TrendError::InsufficientData { needed: 2, got: 1 });
    }
    let sxy: f64 = times.iter().zip(&y).map(|(t, v)| (t - tbar) * (v - ybar)).sum();
    let slope = sxy / sxx;
    let intercept = ybar - slope * tbar;
    let rss: f64 = times
        .iter()
        .zip(&y)
        .map(|(t, v)| (v - intercept - slope * t).powi(2))
        .sum();
    let slope_se = (rss / (nf - 2.0) / sxx).sqrt();
    Ok(ParametricFit {
        form,
        intercept,
        slope,
        slope_se,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn exact_linear() {
        let t = [0.0, 1.0, 2.0, 5.0];
        let y: Vec<f64> = t.iter().map(|x| 2.0 + 3.0 * x).collect();
        let f = parametric_fit(&t, &y, ParametricForm::Linear).unwrap();
        assert!((f.intercept - 2.0).abs() < 1e-12);
        assert!((f.slope - 3.0).abs() < 1e-12);
        assert!(f.slope_se < 1e-7);
    }

    #[test]
    fn exact_log_linear() {
        let t = [0.0, 1.0, 2.0, 3.0, 4.5];
        let y: Vec<f64> = t.iter().map(|x: &f64| (1.0 + 0.5 * x).exp()).collect();
        let f = parametric_fit(&t, &y, ParametricForm::LogLinear).unwrap();
        assert!((f.intercept - 1.0).abs() < 1e-12);
        assert!((f.slope - 0.5).abs() < 1e-12);
        assert!(f.slope_se < 1e-7);
    }

    #[test]
    fn log_linear_rejects_nonpositive() {
        let e = parametric_fit(&[0.0, 1.0, 2.0], &[1.0, 0.0, 2.0], ParametricForm::LogLinear).unwrap_err();
        assert!(matches!(e, TrendError::NonPositive { index: 1, .. }));
    }

    #[test]
    fn matches_normal_equations_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let noise = Normal::new(0.0, 2.0).unwrap();
        let t: Vec<f64> = (0..30).map(|i| 12000.0 + 30.0 * i as f64).collect();
        let y: Vec<f64> = t.iter().map(|x| 5.0 - 0.01 * (x - 12000.0) + noise.sample(&mut rng)).collect();
        let f = parametric_fit(&t, &y, ParametricForm::Linear).unwrap();
        // [n Σt; Σt Σt²] β = [Σy; Σty], solved with nalgebra on centred time.
        let c = 12000.0;
        let x = nalgebra::DMatrix::from_fn(t.len(), 2, |i, j| if j == 0 { 1.0 } else { t[i] - c });
        let yv = nalgebra::DVector::from_column_slice(&y);
        let xtx = x.transpose() * &x;
        let beta = xtx.clone().cholesky().unwrap().solve(&(x.transpose() * &yv));
        let resid = &yv - &x * &beta;
        let s2 = resid.norm_squared() / (t.len() as f64 - 2.0);
        let se = (s2 * xtx.try_inverse().unwrap()[(1, 1)]).sqrt();
        let intercept = beta[0] - beta[1] * c;
        assert!(((f.slope - beta[1]) / beta[1]).abs() < 1e-10);
        assert!(((f.intercept - intercept) / intercept).abs() < 1e-10);
        assert!(((f.slope_se - se) / se).abs() < 1e-10);
    }
}
