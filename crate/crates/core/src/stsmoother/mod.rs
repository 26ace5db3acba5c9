//! Joint (x, y, t) concentration smoother.
//!
//! Log concentrations are modelled as a tensor-product B-spline surface
//! `y = B α + ε`, with `α` estimated by penalized least squares
//! `α̂ = (B′B + λ D′D)⁻¹ B′y`, where `D` stacks order-`d` coefficient differences
//! along each lattice axis. λ is chosen by GCV over a log grid. Every axis is
//! mapped affinely to [0, 1] before the basis is built.

mod basis;
mod penalty;
mod solve;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use basis::BSplineBasis1D;
pub use penalty::{difference_row, Penalty};
pub use solve::{BandMatrix, Factor, FactorError};

use crate::dataset::{Dataset, Diagnostic};
use crate::welltrend::log_floor;

/// Systems with at least this many coefficients use the band solver.
pub const DENSE_LIMIT: usize = 500;

/// Number of λ values in the default GCV grid.
pub const LAMBDA_GRID_SIZE: usize = 30;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StError {
    #[error("basis needs at least degree + 1 = {} functions, got {m}", degree + 1)]
    BasisTooSmall { m: usize, degree: usize },
    #[error("{axis} axis has zero width")]
    DegenerateRange { axis: &'static str },
    #[error("no observations for this solute")]
    NoData,
    #[error("no positive concentrations to log-transform")]
    NonPositive,
    #[error("lambda must be nonnegative, got {0}")]
    NegativeLambda(f64),
    #[error("B'B is singular at lambda = 0; use a positive lambda")]
    RankDeficient,
    #[error("penalized system is not positive definite")]
    NotPositiveDefinite,
    #[error("every lambda gives tr(H) >= n; use a smaller basis")]
    BasisTooRich,
    #[error("lambda grid is empty")]
    EmptyGrid,
    #[error("{} point(s) outside the model range, first {:?}", points.len(), points[0])]
    Extrapolation { points: Vec<[f64; 3]> },
}

/// Affine map `u = (v − shift) / scale` onto the unit interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisTransform {
    pub shift: f64,
    pub scale: f64,
}

impl AxisTransform {
    pub fn spanning(lo: f64, hi: f64, axis: &'static str) -> Result<AxisTransform, StError> {
        if !(hi > lo) || !(hi - lo).is_finite() {
            return Err(StError::DegenerateRange { axis });
        }
        Ok(AxisTransform {
            shift: lo,
            scale: hi - lo,
        })
    }

    pub fn forward(&self, v: f64) -> f64 {
        (v - self.shift) / self.scale
    }

    pub fn inverse(&self, u: f64) -> f64 {
        self.shift + u * self.scale
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StConfig {
    pub mx: usize,
    pub my: usize,
    pub mt: usize,
    pub degree: usize,
    pub order: usize,
    /// `None` selects the default GCV grid.
    pub lambda_grid: Option<Vec<f64>>,
    /// Skips selection and fits at this λ.
    pub fixed_lambda: Option<f64>,
    pub dense_limit: usize,
}

impl StConfig {
    /// Defaults for a dataset with `intervals` monitoring intervals.
    pub fn for_intervals(intervals: usize) -> StConfig {
        StConfig {
            mx: 6,
            my: 6,
            mt: (intervals / 2).max(6),
            degree: 3,
            order: 2,
            lambda_grid: None,
            fixed_lambda: None,
            dense_limit: DENSE_LIMIT,
        }
    }

    pub fn grid(&self) -> Vec<f64> {
        self.lambda_grid.clone().unwrap_or_else(default_lambda_grid)
    }
}

/// `LAMBDA_GRID_SIZE` log-spaced values from 1e-4 to 1e6.
pub fn default_lambda_grid() -> Vec<f64> {
    (0..LAMBDA_GRID_SIZE)
        .map(|i| 10f64.powf(-4.0 + 10.0 * i as f64 / (LAMBDA_GRID_SIZE - 1) as f64))
        .collect()
}

/// One observation on the original axes; `value` in concentration units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub well_id: String,
    pub x: f64,
    pub y: f64,
    pub t: f64,
    pub value: f64,
}

/// Bases and transforms shared by a design and the model fitted from it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorBasis {
    pub axes: [BSplineBasis1D; 3],
    pub transforms: [AxisTransform; 3],
}

impl TensorBasis {
    /// Cubic-style bases on [0, 1] after mapping each `(lo, hi)` range there.
    pub fn new(ranges: [(f64, f64); 3], config: &StConfig) -> Result<TensorBasis, StError> {
        let names = ["x", "y", "t"];
        let sizes = [config.mx, config.my, config.mt];
        let mut transforms = Vec::with_capacity(3);
        let mut axes = Vec::with_capacity(3);
        for k in 0..3 {
            transforms.push(AxisTransform::spanning(ranges[k].0, ranges[k].1, names[k])?);
            axes.push(BSplineBasis1D::uniform(0.0, 1.0, sizes[k], config.degree)?);
        }
        Ok(TensorBasis {
            axes: axes.try_into().expect("three axes"),
            transforms: transforms.try_into().expect("three axes"),
        })
    }

    pub fn dims(&self) -> [usize; 3] {
        [self.axes[0].m, self.axes[1].m, self.axes[2].m]
    }

    pub fn size(&self) -> usize {
        self.dims().iter().product()
    }

    /// Largest column offset within one design row.
    pub fn bandwidth(&self) -> usize {
        let [mx, my, _] = self.dims();
        let p = self.axes.iter().map(|a| a.degree).max().unwrap_or(0);
        p * (1 + mx + mx * my)
    }

    /// Sparse row `(column, value)` at an original-unit point; `None` outside
    /// the range. Points within 1e-12 (unit scale) of the edge are clamped.
    pub fn row(&self, point: [f64; 3]) -> Option<Vec<(usize, f64)>> {
        let mut evals = Vec::with_capacity(3);
        for k in 0..3 {
            let mut u = self.transforms[k].forward(point[k]);
            if (-1e-12..0.0).contains(&u) {
                u = 0.0;
            } else if u > 1.0 && u <= 1.0 + 1e-12 {
                u = 1.0;
            }
            evals.push(self.axes[k].eval(u)?);
        }
        let [mx, my, _] = self.dims();
        let (fx, bx) = &evals[0];
        let (fy, by) = &evals[1];
        let (ft, bt) = &evals[2];
        let mut row = Vec::with_capacity(bx.len() * by.len() * bt.len());
        for (kt, vt) in bt.iter().enumerate() {
            for (ky, vy) in by.iter().enumerate() {
                for (kx, vx) in bx.iter().enumerate() {
                    let col = (fx + kx) + mx * ((fy + ky) + my * (ft + kt));
                    row.push((col, vx * vy * vt));
                }
            }
        }
        Some(row)
    }
}

/// Design matrix rows and log responses.
#[derive(Debug, Clone, PartialEq)]
pub struct StDesign {
    pub basis: TensorBasis,
    pub rows: Vec<Vec<(usize, f64)>>,
    /// Natural-log concentrations.
    pub y: Vec<f64>,
}

impl StDesign {
    /// Builds rows for `obs`; every value must be positive and every point
    /// inside the basis ranges.
    pub fn new(basis: TensorBasis, obs: &[Observation]) -> Result<StDesign, StError> {
        if obs.is_empty() {
            return Err(StError::NoData);
        }
        let mut rows = Vec::with_capacity(obs.len());
        let mut outside = Vec::new();
        for o in obs {
            if !(o.value > 0.0) {
                return Err(StError::NonPositive);
            }
            match basis.row([o.x, o.y, o.t]) {
                Some(r) => rows.push(r),
                None => outside.push([o.x, o.y, o.t]),
            }
        }
        if !outside.is_empty() {
            return Err(StError::Extrapolation { points: outside });
        }
        Ok(StDesign {
            basis,
            rows,
            y: obs.iter().map(|o| o.value.ln()).collect(),
        })
    }

    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn dense(&self) -> nalgebra::DMatrix<f64> {
        let mut b = nalgebra::DMatrix::zeros(self.n(), self.basis.size());
        for (i, row) in self.rows.iter().enumerate() {
            for (j, v) in row {
                b[(i, *j)] += v;
            }
        }
        b
    }

    fn gram(&self, band: usize) -> BandMatrix {
        let mut g = BandMatrix::zeros(self.basis.size(), band);
        for row in &self.rows {
            for (a, (i, vi)) in row.iter().enumerate() {
                for (j, vj) in row.iter().take(a + 1) {
                    g.add(*i, *j, vi * vj);
                }
            }
        }
        g
    }

    fn bty(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.basis.size()];
        for (row, y) in self.rows.iter().zip(&self.y) {
            for (j, v) in row {
                out[*j] += v * y;
            }
        }
        out
    }

    fn fitted(&self, alpha: &[f64]) -> Vec<f64> {
        self.rows.iter().map(|r| r.iter().map(|(j, v)| v * alpha[*j]).sum()).collect()
    }
}

/// Iterative refinement steps after the Cholesky solve.
const REFINE_STEPS: usize = 2;

/// Relative GCV difference below which two scores count as tied.
const GCV_TIE: f64 = 1e-9;

/// Penalized normal equations, assembled once and reused across λ.
///
/// The part of the response captured by the penalty null space is fitted
/// first by plain least squares and only the remainder goes through the
/// penalized solve. By linearity the estimate is unchanged, but at large λ
/// the null-space component no longer depends on entries of `B′B` that were
/// rounded away against `λ D′D`.
pub struct NormalEquations<'a> {
    design: &'a StDesign,
    penalty: Penalty,
    g: BandMatrix,
    p: BandMatrix,
    bty: Vec<f64>,
    /// Null-space coefficients `N β`, added back after each solve.
    null_alpha: Vec<f64>,
    /// `y − B N β`.
    rest: Vec<f64>,
    /// `B′(y − B N β)`.
    bty_rest: Vec<f64>,
    dense_limit: usize,
}

/// Lattice monomials spanning the null space of the stacked differences:
/// products of powers below `order` of each (rescaled) lattice index.
fn null_space(dims: [usize; 3], order: usize) -> nalgebra::DMatrix<f64> {
    let [mx, my, mt] = dims;
    let scaled = |i: usize, m: usize| if m > 1 { 2.0 * i as f64 / (m - 1) as f64 - 1.0 } else { 0.0 };
    let powers: Vec<[i32; 3]> = (0..order)
        .flat_map(|c| (0..order).flat_map(move |b| (0..order).map(move |a| [a as i32, b as i32, c as i32])))
        .collect();
    nalgebra::DMatrix::from_fn(mx * my * mt, powers.len(), |j, k| {
        let (ix, iy, it) = (j % mx, (j / mx) % my, j / (mx * my));
        let [a, b, c] = powers[k];
        scaled(ix, mx).powi(a) * scaled(iy, my).powi(b) * scaled(it, mt).powi(c)
    })
}

impl<'a> NormalEquations<'a> {
    pub fn new(design: &'a StDesign, order: usize, dense_limit: usize) -> NormalEquations<'a> {
        let penalty = Penalty::new(order, design.basis.dims());
        let band = design.basis.bandwidth().max(penalty.bandwidth());
        let g = design.gram(band);
        let mut p = BandMatrix::zeros(design.basis.size(), band);
        penalty.add_to(&mut p, 1.0);

        let n_mat = null_space(design.basis.dims(), order);
        let bn = nalgebra::DMatrix::from_fn(design.n(), n_mat.ncols(), |i, k| {
            design.rows[i].iter().map(|(j, v)| v * n_mat[(*j, k)]).sum()
        });
        let y = nalgebra::DVector::from_column_slice(&design.y);
        let beta = bn
            .clone()
            .svd(true, true)
            .solve(&y, 1e-12 * y.amax().max(1.0))
            .unwrap_or_else(|_| nalgebra::DVector::zeros(n_mat.ncols()));
        let null_alpha: Vec<f64> = (&n_mat * &beta).iter().copied().collect();
        let rest: Vec<f64> = (&y - &bn * &beta).iter().copied().collect();
        let mut bty_rest = vec![0.0; design.basis.size()];
        for (row, r) in design.rows.iter().zip(&rest) {
            for (j, v) in row {
                bty_rest[*j] += v * r;
            }
        }
        NormalEquations {
            design,
            penalty,
            g,
            p,
            bty: design.bty(),
            null_alpha,
            rest,
            bty_rest,
            dense_limit,
        }
    }

    /// Fits at one λ.
    pub fn fit(&self, lambda: f64) -> Result<StModel, StError> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(StError::NegativeLambda(lambda));
        }
        let a = self.g.plus_scaled(&self.p, lambda);
        let factor = Factor::new(&a, self.dense_limit, lambda == 0.0).map_err(|e| match e {
            FactorError::RankDeficient => StError::RankDeficient,
            FactorError::NotPositiveDefinite if lambda == 0.0 => StError::RankDeficient,
            FactorError::NotPositiveDefinite => StError::NotPositiveDefinite,
        })?;
        let mut alpha = factor.solve(&self.bty_rest);
        // Refinement with the residual taken from the rows of B rather than
        // from B′B, which keeps the λ = 0 solution close to a QR solve.
        for _ in 0..REFINE_STEPS {
            let fitted = self.design.fitted(&alpha);
            let mut r = vec![0.0; alpha.len()];
            for (row, (y, f)) in self.design.rows.iter().zip(self.rest.iter().zip(&fitted)) {
                for (j, v) in row {
                    r[*j] += v * (y - f);
                }
            }
            if lambda > 0.0 {
                for (ri, pi) in r.iter_mut().zip(self.p.mul_vec(&alpha)) {
                    *ri -= lambda * pi;
                }
            }
            for (a, d) in alpha.iter_mut().zip(factor.solve(&r)) {
                *a += d;
            }
        }
        for (a, n) in alpha.iter_mut().zip(&self.null_alpha) {
            *a += n;
        }
        let fitted = self.design.fitted(&alpha);
        let rss: f64 = fitted.iter().zip(&self.design.y).map(|(f, y)| (y - f).powi(2)).sum();
        let edf = factor.trace_inv_times(&self.g);
        let n = self.design.n();
        let dof = n as f64 - edf;
        Ok(StModel {
            basis: self.design.basis.clone(),
            penalty: self.penalty.clone(),
            lambda,
            sigma2: if dof > 0.0 { rss / dof } else { 0.0 },
            alpha,
            edf,
            rss,
            n,
            gcv: if dof > 0.0 { Some(n as f64 * rss / (dof * dof)) } else { None },
        })
    }

    /// `‖(B′B + λD′D)α − B′y‖` relative to `‖B′y‖`.
    pub fn residual_norm(&self, alpha: &[f64], lambda: f64) -> f64 {
        let a = self.g.plus_scaled(&self.p, lambda);
        let r: f64 = a.mul_vec(alpha).iter().zip(&self.bty).map(|(u, v)| (u - v).powi(2)).sum();
        let b: f64 = self.bty.iter().map(|v| v * v).sum();
        (r / b).sqrt()
    }
}

/// Fitted smoother; immutable and self-contained for prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StModel {
    pub basis: TensorBasis,
    pub penalty: Penalty,
    pub lambda: f64,
    pub alpha: Vec<f64>,
    /// Residual variance on the log scale; 0 when `edf ≥ n`.
    pub sigma2: f64,
    pub edf: f64,
    pub rss: f64,
    pub n: usize,
    pub gcv: Option<f64>,
}

impl StModel {
    /// Log-scale predictions.
    pub fn predict_log(&self, points: &[[f64; 3]]) -> Result<Vec<f64>, StError> {
        let mut out = Vec::with_capacity(points.len());
        let mut outside = Vec::new();
        for p in points {
            match self.basis.row(*p) {
                Some(r) => out.push(r.iter().map(|(j, v)| v * self.alpha[*j]).sum()),
                None => outside.push(*p),
            }
        }
        if outside.is_empty() {
            Ok(out)
        } else {
            Err(StError::Extrapolation { points: outside })
        }
    }

    /// Concentrations `exp(B(p)·α̂)`.
    pub fn predict(&self, points: &[[f64; 3]]) -> Result<Vec<f64>, StError> {
        Ok(self.predict_log(points)?.into_iter().map(f64::exp).collect())
    }

    /// Model time range in days.
    pub fn time_range(&self) -> (f64, f64) {
        let t = self.basis.transforms[2];
        (t.shift, t.shift + t.scale)
    }
}

/// GCV scores over a grid and the chosen λ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaChoice {
    pub lambda: f64,
    pub grid: Vec<f64>,
    /// `None` where the fit failed or `tr H ≥ n`.
    pub scores: Vec<Option<f64>>,
}

/// Chooses λ minimizing `GCV(λ) = n·RSS / (n − tr H)²`; scores within a
/// relative 1e-9 count as tied and ties go to the larger λ.
/// Returns the model fitted at the chosen λ.
pub fn select_lambda(
    eq: &NormalEquations,
    grid: &[f64],
) -> Result<(LambdaChoice, StModel, Vec<Diagnostic>), StError> {
    if grid.is_empty() {
        return Err(StError::EmptyGrid);
    }
    if let Some(bad) = grid.iter().find(|l| !(**l >= 0.0)) {
        return Err(StError::NegativeLambda(*bad));
    }
    let mut diags = Vec::new();
    if grid.len() == 1 {
        diags.push(Diagnostic::warning(
            "LAMBDA_GRID_SINGLE",
            None,
            format!("lambda grid has one value; using {} without selection", grid[0]),
        ));
        let model = eq.fit(grid[0])?;
        let choice = LambdaChoice {
            lambda: grid[0],
            grid: grid.to_vec(),
            scores: vec![model.gcv],
        };
        return Ok((choice, model, diags));
    }
    let mut best: Option<(f64, StModel)> = None;
    let mut scores = Vec::with_capacity(grid.len());
    for &lambda in grid {
        let model = eq.fit(lambda).ok();
        let score = model.as_ref().and_then(|m| m.gcv);
        scores.push(score);
        let (Some(model), Some(s)) = (model, score) else { continue };
        let better = match &best {
            None => true,
            Some((bs, bm)) => {
                let tied = (s - bs).abs() <= GCV_TIE * bs.abs();
                if tied {
                    lambda > bm.lambda
                } else {
                    s < *bs
                }
            }
        };
        if better {
            best = Some((s, model));
        }
    }
    let (_, model) = best.ok_or(StError::BasisTooRich)?;
    Ok((
        LambdaChoice {
            lambda: model.lambda,
            grid: grid.to_vec(),
            scores,
        },
        model,
        diags,
    ))
}

/// Observations of `solute` in `dataset` (substituted working values).
/// Zero concentrations are raised to half the smallest positive value, the
/// same floor the per-well trends use.
pub fn observations(dataset: &Dataset, solute: &str) -> Result<(Vec<Observation>, Vec<Diagnostic>), StError> {
    let recs: Vec<_> = dataset.records.iter().filter(|r| r.constituent == solute).collect();
    if recs.is_empty() {
        return Err(StError::NoData);
    }
    let floor = log_floor(recs.iter().map(|r| r.working)).ok_or(StError::NonPositive)?;
    let mut diags = Vec::new();
    let zeros = recs.iter().filter(|r| r.working <= 0.0).count();
    if zeros > 0 {
        diags.push(Diagnostic::warning(
            "ZERO_FLOORED",
            None,
            format!("{solute}: {zeros} zero value(s) raised to {floor} before log transform"),
        ));
    }
    let obs = recs
        .iter()
        .filter_map(|r| {
            let w = dataset.well(&r.well_id)?;
            Some(Observation {
                well_id: r.well_id.clone(),
                x: w.x,
                y: w.y,
                t: r.day(),
                value: if r.working > 0.0 { r.working } else { floor },
            })
        })
        .collect();
    Ok((obs, diags))
}

/// Axis ranges for a dataset: the wells' bounding box and the full sampling period.
pub fn dataset_ranges(dataset: &Dataset) -> [(f64, f64); 3] {
    let span = |it: &mut dyn Iterator<Item = f64>| {
        it.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
    };
    [
        span(&mut dataset.wells.iter().map(|w| w.x)),
        span(&mut dataset.wells.iter().map(|w| w.y)),
        span(&mut dataset.records.iter().map(|r| r.day())),
    ]
}

/// Fitted smoother for one solute, with the λ search and diagnostics.
pub fn fit_solute(
    dataset: &Dataset,
    solute: &str,
    config: &StConfig,
) -> Result<(StModel, LambdaChoice, Vec<Diagnostic>), StError> {
    let (obs, mut diags) = observations(dataset, solute)?;
    let basis = TensorBasis::new(dataset_ranges(dataset), config)?;
    let design = StDesign::new(basis, &obs)?;
    let eq = NormalEquations::new(&design, config.order, config.dense_limit);
    if let Some(lambda) = config.fixed_lambda {
        let model = eq.fit(lambda)?;
        let choice = LambdaChoice {
            lambda,
            grid: vec![lambda],
            scores: vec![model.gcv],
        };
        return Ok((model, choice, diags));
    }
    let (choice, model, more) = select_lambda(&eq, &config.grid())?;
    diags.extend(more);
    Ok((model, choice, diags))
}
