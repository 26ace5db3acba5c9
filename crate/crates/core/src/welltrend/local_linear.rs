//! Local linear regression with a Gaussian kernel.
//!
//! At an evaluation point `x` the smoother solves the weighted least-squares
//! problem `min Σ w_i (y_i − a − b(t_i − x))²` with `w_i ∝ exp(−(t_i − x)²/2h²)`.
//! Both `a(x)` and `b(x)` are linear in `y`; the coefficient vectors are the
//! equivalent kernels used for standard errors and the hat matrix.

use super::TrendError;

/// Largest admissible condition number of the bandwidth-scaled local 2×2 system.
pub const MAX_LOCAL_CONDITION: f64 = 1e8;

/// Equivalent-kernel weights at one evaluation point.
#[derive(Debug, Clone)]
pub(crate) struct EquivalentKernel {
    /// `fitted(x) = Σ level[i]·y[i]`
    pub level: Vec<f64>,
    /// `derivative(x) = Σ slope[i]·y[i]`
    pub slope: Vec<f64>,
}

/// Condition number of the scaled local design at `x`; `None` if singular.
pub(crate) fn local_condition(times: &[f64], x: f64, h: f64) -> Option<f64> {
    let (s0, s1, s2, _) = moments(times, x, h);
    let (a, b, c) = (s0, s1, s2);
    let tr = a + c;
    let det = a * c - b * b;
    if !(det > 0.0) {
        return None;
    }
    let disc = ((a - c) * (a - c) + 4.0 * b * b).sqrt();
    let lmax = 0.5 * (tr + disc);
    let lmin = det / lmax;
    Some(lmax / lmin)
}

/// Weighted moments in the scaled offset `u = (t − x)/h`, with weights
/// normalized so the largest is 1 (the fit is invariant to that scaling and
/// it keeps far-from-data evaluation points from underflowing).
fn moments(times: &[f64], x: f64, h: f64) -> (f64, f64, f64, Vec<f64>) {
    let zmin = times
        .iter()
        .map(|t| ((t - x) / h).powi(2))
        .fold(f64::INFINITY, f64::min);
    let w: Vec<f64> = times
        .iter()
        .map(|t| (-0.5 * (((t - x) / h).powi(2) - zmin)).exp())
        .collect();
    let (mut s0, mut s1, mut s2) = (0.0, 0.0, 0.0);
    for (t, wi) in times.iter().zip(&w) {
        let u = (t - x) / h;
        s0 += wi;
        s1 += wi * u;
        s2 += wi * u * u;
    }
    (s0, s1, s2, w)
}

pub(crate) fn equivalent_kernel(times: &[f64], x: f64, h: f64) -> Result<EquivalentKernel, TrendError> {
    let cond = local_condition(times, x, h).unwrap_or(f64::INFINITY);
    if !(cond < MAX_LOCAL_CONDITION) {
        return Err(TrendError::Degenerate { at: x, bandwidth: h });
    }
    let (s0, s1, s2, w) = moments(times, x, h);
    let det = s0 * s2 - s1 * s1;
    let mut level = Vec::with_capacity(times.len());
    let mut slope = Vec::with_capacity(times.len());
    for (t, wi) in times.iter().zip(&w) {
        let u = (t - x) / h;
        level.push(wi * (s2 - s1 * u) / det);
        // d/dx in original units: slope in u is per h.
        slope.push(wi * (s0 * u - s1) / det / h);
    }
    Ok(EquivalentKernel { level, slope })
}

/// Output of [`local_linear_fit`].
#[derive(Debug, Clone, PartialEq)]
pub struct LocalLinearFit {
    pub fitted: Vec<f64>,
    pub se: Vec<f64>,
    pub derivative: Vec<f64>,
    /// Residual variance `RSS / (n − 2 tr H + tr H Hᵀ)`.
    pub sigma2: f64,
    /// Trace of the smoother matrix at the data points.
    pub trace: f64,
}

/// Smoother-matrix summaries at the data points.
#[derive(Debug, Clone)]
pub(crate) struct HatSummary {
    pub rss: f64,
    pub trace: f64,
    pub trace_hht: f64,
}

pub(crate) fn hat_summary(times: &[f64], values: &[f64], h: f64) -> Result<HatSummary, TrendError> {
    let mut rss = 0.0;
    let mut trace = 0.0;
    let mut trace_hht = 0.0;
    for (i, &t) in times.iter().enumerate() {
        let k = equivalent_kernel(times, t, h)?;
        let fit: f64 = k.level.iter().zip(values).map(|(l, y)| l * y).sum();
        rss += (values[i] - fit).powi(2);
        trace += k.level[i];
        trace_hht += k.level.iter().map(|l| l * l).sum::<f64>();
    }
    Ok(HatSummary { rss, trace, trace_hht })
}

pub(crate) fn residual_variance(n: usize, hat: &HatSummary) -> f64 {
    let df = n as f64 - 2.0 * hat.trace + hat.trace_hht;
    if df > 1e-9 {
        hat.rss / df
    } else {
        0.0
    }
}

/// Local linear fit of `values` observed at `times`, evaluated at `eval_times`.
///
/// Standard errors are pointwise: `se(x) = σ̂·‖l(x)‖` with `l(x)` the level
/// equivalent kernel.
pub fn local_linear_fit(
    times: &[f64],
    values: &[f64],
    eval_times: &[f64],
    h: f64,
) -> Result<LocalLinearFit, TrendError> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(TrendError::InvalidBandwidth(h));
    }
    if times.len() != values.len() {
        return Err(TrendError::LengthMismatch);
    }
    let distinct = distinct_count(times);
    if distinct < 3 {
        return Err(TrendError::InsufficientData { needed: 3, got: distinct });
    }
    let hat = hat_summary(times, values, h)?;
    let sigma2 = residual_variance(times.len(), &hat);
    let sigma = sigma2.sqrt();
    let mut fitted = Vec::with_capacity(eval_times.len());
    let mut se = Vec::with_capacity(eval_times.len());
    let mut derivative = Vec::with_capacity(eval_times.len());
    for &x in eval_times {
        let k = equivalent_kernel(times, x, h)?;
        fitted.push(k.level.iter().zip(values).map(|(l, y)| l * y).sum());
        derivative.push(k.slope.iter().zip(values).map(|(l, y)| l * y).sum());
        se.push(sigma * k.level.iter().map(|l| l * l).sum::<f64>().sqrt());
    }
    Ok(LocalLinearFit {
        fitted,
        se,
        derivative,
        sigma2,
        trace: hat.trace,
    })
}

pub(crate) fn distinct_count(times: &[f64]) -> usize {
    let mut t: Vec<f64> = times.to_vec();
    t.sort_by(f64::total_cmp);
    t.dedup();
    t.len()
}
