//! Groundwater flow direction and relative gradient per monitoring interval.
//!
//! For each well, a plane `L = a + bx + cy` is fitted by least squares to the
//! groundwater level at the well and its Delaunay neighbours. Flow runs down
//! the gradient: `theta = atan2(-c, -b)` in degrees, counter-clockwise from +x,
//! and `R = sqrt(b² + c²)` is the relative hydraulic gradient.

mod delaunay;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use delaunay::Triangulation;

use crate::dataset::{Dataset, GW};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FlowError {
    #[error("triangulation needs at least 3 wells, got {0}")]
    TooFewWells(usize),
    #[error("all wells are collinear")]
    Collinear,
    #[error("wells {0} and {1} share a location")]
    Coincident(usize, usize),
    #[error("well coordinates must be finite")]
    NonFinite,
}

/// Why a well got no vector in an interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SuppressReason {
    /// Fewer than two neighbours carry a level in the interval.
    InsufficientNeighbors,
    Collinear,
    /// Zero gradient: direction undefined.
    Flat,
    /// No triangulation exists for the dataset.
    NoTriangulation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowVector {
    pub well_id: String,
    pub interval: usize,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    #[serde(rename = "theta_degrees")]
    pub theta: f64,
    #[serde(rename = "R")]
    pub r: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Suppressed {
    pub well_id: String,
    pub reason: SuppressReason,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowField {
    pub interval: usize,
    pub label: String,
    pub vectors: Vec<FlowVector>,
    pub suppressed: Vec<Suppressed>,
}

/// Least-squares plane through `(x, y, L)` points, returned as `(a, b, c)`.
///
/// `None` with fewer than three points or when they are (numerically) collinear.
pub fn fit_plane(points: &[[f64; 3]]) -> Option<(f64, f64, f64)> {
    if points.len() < 3 {
        return None;
    }
    let n = points.len() as f64;
    let mean = |k: usize| points.iter().map(|p| p[k]).sum::<f64>() / n;
    let (mx, my, ml) = (mean(0), mean(1), mean(2));
    let (mut sxx, mut sxy, mut syy, mut sxl, mut syl) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for p in points {
        let (dx, dy, dl) = (p[0] - mx, p[1] - my, p[2] - ml);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
        sxl += dx * dl;
        syl += dy * dl;
    }
    let det = sxx * syy - sxy * sxy;
    if !(det > 1e-12 * (sxx + syy).powi(2)) {
        return None;
    }
    let b = (syy * sxl - sxy * syl) / det;
    let c = (sxx * syl - sxy * sxl) / det;
    Some((ml - b * mx - c * my, b, c))
}

/// Down-gradient direction in degrees within `[0, 360)` and gradient magnitude.
/// `None` for a flat plane.
pub fn flow_direction(b: f64, c: f64) -> Option<(f64, f64)> {
    let r = (b * b + c * c).sqrt();
    if !(r > 0.0) || !r.is_finite() {
        return None;
    }
    let mut theta = (-c).atan2(-b).to_degrees();
    if theta < 0.0 {
        theta += 360.0;
    }
    if theta >= 360.0 {
        theta -= 360.0;
    }
    Some((theta, r))
}

/// Triangulates the dataset's wells (in dataset order).
pub fn triangulate(dataset: &Dataset) -> Result<Triangulation, FlowError> {
    let pts: Vec<[f64; 2]> = dataset.wells.iter().map(|w| [w.x, w.y]).collect();
    Triangulation::new(&pts)
}

/// Latest level per well index in interval `k`.
fn interval_levels(dataset: &Dataset, k: usize) -> HashMap<usize, f64> {
    let index: HashMap<&str, usize> = dataset
        .wells
        .iter()
        .enumerate()
        .map(|(i, w)| (w.well_id.as_str(), i))
        .collect();
    let mut latest: HashMap<usize, (chrono::NaiveDate, f64)> = HashMap::new();
    for r in dataset.records.iter().filter(|r| r.constituent == GW && r.interval == k) {
        let Some(&i) = index.get(r.well_id.as_str()) else { continue };
        match latest.get(&i) {
            Some((d, _)) if *d >= r.sample_date => {}
            _ => {
                latest.insert(i, (r.sample_date, r.value));
            }
        }
    }
    latest.into_iter().map(|(i, (_, v))| (i, v)).collect()
}

/// Flow vectors for interval `k`. Wells are visited in dataset order.
pub fn flow_field(dataset: &Dataset, tri: Option<&Triangulation>, k: usize) -> FlowField {
    let label = dataset.intervals.get(k).map(|i| i.label.clone()).unwrap_or_default();
    let levels = interval_levels(dataset, k);
    let mut field = FlowField {
        interval: k,
        label,
        vectors: Vec::new(),
        suppressed: Vec::new(),
    };
    for (i, well) in dataset.wells.iter().enumerate() {
        let Some(&level) = levels.get(&i) else { continue };
        let suppress = |reason| Suppressed {
            well_id: well.well_id.clone(),
            reason,
        };
        let Some(tri) = tri else {
            field.suppressed.push(suppress(SuppressReason::NoTriangulation));
            continue;
        };
        let mut pts = vec![[well.x, well.y, level]];
        for &j in &tri.neighbors[i] {
            if let Some(&l) = levels.get(&j) {
                pts.push([dataset.wells[j].x, dataset.wells[j].y, l]);
            }
        }
        if pts.len() < 3 {
            field.suppressed.push(suppress(SuppressReason::InsufficientNeighbors));
            continue;
        }
        let Some((a, b, c)) = fit_plane(&pts) else {
            field.suppressed.push(suppress(SuppressReason::Collinear));
            continue;
        };
        match flow_direction(b, c) {
            Some((theta, r)) => field.vectors.push(FlowVector {
                well_id: well.well_id.clone(),
                interval: k,
                a,
                b,
                c,
                theta,
                r,
            }),
            None => field.suppressed.push(suppress(SuppressReason::Flat)),
        }
    }
    field
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dataset(monitoring: &str, wells: &str) -> Dataset {
        use crate::dataset::{DatasetOptions, RawTables};
        let today = chrono::NaiveDate::from_ymd_opt(2030, 1, 1).unwrap();
        Dataset::build(RawTables::parse(monitoring, wells, None), &DatasetOptions::new(today)).unwrap().0
    }

    const SIMPLEX: &str = "WellID,X,Y\nA,0,0\nB,100,0\nC,0,100\n";

    #[test]
    fn simplex_gives_one_global_plane() {
        let mon = "WellID,SampleDate,Constituent,Result,Units\n\
                   A,2020-01-10,GW,10,m\nB,2020-01-10,GW,9,m\nC,2020-01-10,GW,9,m\n\
                   A,2020-01-01,GW,50,m\nA,2020-01-10,Benzene,1,ug/l\n";
        let ds = dataset(mon, SIMPLEX);
        let tri = triangulate(&ds).unwrap();
        let f = flow_field(&ds, Some(&tri), 0);
        assert_eq!(f.vectors.len(), 3);
        assert!(f.suppressed.is_empty());
        for v in &f.vectors {
            // latest reading at A (10) wins over the earlier 50
            assert!((v.a - 10.0).abs() < 1e-9 && (v.b + 0.01).abs() < 1e-12 && (v.c + 0.01).abs() < 1e-12);
            assert!((v.theta - 45.0).abs() < 1e-9);
            assert_eq!(v.r, (v.b * v.b + v.c * v.c).sqrt());
        }
        let json = serde_json::to_value(&f).unwrap();
        assert!(json["vectors"][0]["theta_degrees"].is_number() && json["vectors"][0]["R"].is_number());
    }

    #[test]
    fn two_gw_wells_give_empty_field() {
        let mon = "WellID,SampleDate,Constituent,Result,Units\n\
                   A,2020-01-10,GW,10,m\nB,2020-01-10,GW,9,m\nC,2020-01-10,Benzene,1,ug/l\n";
        let ds = dataset(mon, SIMPLEX);
        let tri = triangulate(&ds).unwrap();
        let f = flow_field(&ds, Some(&tri), 0);
        assert!(f.vectors.is_empty());
        assert_eq!(f.suppressed.len(), 2);
        assert!(f.suppressed.iter().all(|s| s.reason == SuppressReason::InsufficientNeighbors));
        let none = flow_field(&ds, None, 0);
        assert!(none.suppressed.iter().all(|s| s.reason == SuppressReason::NoTriangulation));
    }

    #[test]
    fn exact_plane_through_three_points() {
        let (a, b, c) = fit_plane(&[[0.0, 0.0, 10.0], [1.0, 0.0, 9.0], [0.0, 1.0, 9.0]]).unwrap();
        assert!((a - 10.0).abs() < 1e-12 && (b + 1.0).abs() < 1e-12 && (c + 1.0).abs() < 1e-12);
    }

    #[test]
    fn six_points_match_normal_equations() {
        let xy = [[0.0, 0.0], [3.0, 1.0], [1.0, 4.0], [5.0, 5.0], [2.0, 7.0], [6.0, 2.0]];
        let pts: Vec<[f64; 3]> = xy.iter().map(|p| [p[0], p[1], 5.0 + 2.0 * p[0] - 3.0 * p[1]]).collect();
        let (a, b, c) = fit_plane(&pts).unwrap();
        let x = nalgebra::DMatrix::from_fn(6, 3, |i, j| [1.0, xy[i][0], xy[i][1]][j]);
        let l = nalgebra::DVector::from_iterator(6, pts.iter().map(|p| p[2]));
        let beta = (x.transpose() * &x).cholesky().unwrap().solve(&(x.transpose() * l));
        for (got, want) in [a, b, c].iter().zip(beta.iter()) {
            assert!((got - want).abs() < 1e-10);
        }
        assert!((a - 5.0).abs() < 1e-10 && (b - 2.0).abs() < 1e-10 && (c + 3.0).abs() < 1e-10);
    }

    #[test]
    fn collinear_and_short_inputs() {
        assert!(fit_plane(&[[0.0, 0.0, 1.0], [1.0, 1.0, 2.0], [2.0, 2.0, 3.0]]).is_none());
        assert!(fit_plane(&[[0.0, 0.0, 1.0], [1.0, 0.0, 2.0]]).is_none());
    }

    #[test]
    fn flat_plane_is_suppressed() {
        let (_, b, c) = fit_plane(&[[0.0, 0.0, 4.0], [1.0, 0.0, 4.0], [0.0, 1.0, 4.0]]).unwrap();
        assert_eq!((b, c), (0.0, 0.0));
        assert!(flow_direction(b, c).is_none());
    }

    #[test]
    fn direction_convention() {
        let (t, r) = flow_direction(-1.0, -1.0).unwrap();
        assert!((t - 45.0).abs() < 1e-12);
        assert_eq!(r, 2f64.sqrt());
        assert_eq!(flow_direction(1.0, 0.0).unwrap(), (180.0, 1.0));
        assert_eq!(flow_direction(0.0, 1.0).unwrap(), (270.0, 1.0));
        assert_eq!(flow_direction(-1.0, 0.0).unwrap(), (0.0, 1.0));
    }

    fn random_config(seed: u64, n: usize) -> (Vec<[f64; 2]>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts: Vec<[f64; 2]> = (0..n).map(|_| [rng.random_range(0.0..500.0), rng.random_range(0.0..500.0)]).collect();
        let levels = pts
            .iter()
            .map(|p| 30.0 + 0.01 * p[0] - 0.02 * p[1] + rng.random_range(-0.5..0.5))
            .collect();
        (pts, levels)
    }

    /// Vectors for every well from its Delaunay neighbourhood.
    fn vectors(pts: &[[f64; 2]], levels: &[f64]) -> Vec<Option<(f64, f64, f64, f64, f64)>> {
        let tri = Triangulation::new(pts).unwrap();
        (0..pts.len())
            .map(|i| {
                let mut p = vec![[pts[i][0], pts[i][1], levels[i]]];
                p.extend(tri.neighbors[i].iter().map(|&j| [pts[j][0], pts[j][1], levels[j]]));
                let (a, b, c) = fit_plane(&p)?;
                let (t, r) = flow_direction(b, c)?;
                Some((a, b, c, t, r))
            })
            .collect()
    }

    fn angle_diff(a: f64, b: f64) -> f64 {
        let d = (a - b).rem_euclid(360.0);
        d.min(360.0 - d)
    }

    proptest! {
        #[test]
        fn rotation_equivariance(seed in 0u64..500, phi in 0.0f64..360.0) {
            let (pts, levels) = random_config(seed, 12);
            let (s, c) = phi.to_radians().sin_cos();
            let rot: Vec<[f64; 2]> = pts.iter().map(|p| [c * p[0] - s * p[1], s * p[0] + c * p[1]]).collect();
            for (u, v) in vectors(&pts, &levels).into_iter().zip(vectors(&rot, &levels)) {
                let (u, v) = (u.unwrap(), v.unwrap());
                prop_assert!(angle_diff(v.3, u.3 + phi) < 1e-9);
                prop_assert!((v.4 - u.4).abs() <= 1e-12 * u.4.max(1e-300) * 10.0);
            }
        }

        #[test]
        fn translation_offset_and_scaling(seed in 0u64..500, dx in -1e4f64..1e4, dl in -50.0f64..50.0, k in 0.1f64..10.0) {
            let (pts, levels) = random_config(seed, 10);
            let base = vectors(&pts, &levels);
            let moved: Vec<[f64; 2]> = pts.iter().map(|p| [p[0] + dx, p[1] - dx / 2.0]).collect();
            let offset: Vec<f64> = levels.iter().map(|l| l + dl).collect();
            let scaled: Vec<f64> = levels.iter().map(|l| l * k).collect();
            for (((b0, bt), bo), bs) in base.iter().zip(vectors(&moved, &levels)).zip(vectors(&pts, &offset)).zip(vectors(&pts, &scaled)) {
                let (b0, bt, bo, bs) = (b0.unwrap(), bt.unwrap(), bo.unwrap(), bs.unwrap());
                prop_assert!(angle_diff(b0.3, bt.3) < 1e-6 && (b0.4 - bt.4).abs() < 1e-9 * b0.4);
                prop_assert!((b0.1 - bo.1).abs() < 1e-12 && (b0.2 - bo.2).abs() < 1e-12);
                prop_assert!(angle_diff(b0.3, bo.3) < 1e-8);
                prop_assert!(angle_diff(b0.3, bs.3) < 1e-9 && (bs.4 - k * b0.4).abs() < 1e-9 * bs.4);
            }
        }
    }
}
