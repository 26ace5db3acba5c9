//! Planar Delaunay triangulation.
//!
//! Points are inserted in lexicographic `(x, y, index)` order; each new point
//! lies outside the current hull and is fanned onto the hull edges it sees.
//! Lawson edge flips then restore the empty-circumcircle property. Predicates
//! are exact, and a flip happens only when a point is strictly inside a
//! circumcircle, so cocircular configurations resolve the same way every run.

use std::collections::{BTreeSet, HashMap};

use robust::{incircle, orient2d, Coord};
use serde::{Deserialize, Serialize};

use super::FlowError;

fn c(p: [f64; 2]) -> Coord<f64> {
    Coord { x: p[0], y: p[1] }
}

fn orient(p: &[[f64; 2]], a: usize, b: usize, q: usize) -> f64 {
    orient2d(c(p[a]), c(p[b]), c(p[q]))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Triangulation {
    pub vertices: Vec<[f64; 2]>,
    /// Counter-clockwise vertex index triples.
    pub triangles: Vec<[usize; 3]>,
    /// Delaunay-adjacent vertices per vertex.
    pub neighbors: Vec<BTreeSet<usize>>,
}

impl Triangulation {
    /// Triangulates `points`; needs at least three distinct, non-collinear points.
    pub fn new(points: &[[f64; 2]]) -> Result<Triangulation, FlowError> {
        let n = points.len();
        if n < 3 {
            return Err(FlowError::TooFewWells(n));
        }
        if points.iter().any(|p| !p[0].is_finite() || !p[1].is_finite()) {
            return Err(FlowError::NonFinite);
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| {
            points[i][0]
                .total_cmp(&points[j][0])
                .then(points[i][1].total_cmp(&points[j][1]))
                .then(i.cmp(&j))
        });
        for w in order.windows(2) {
            if points[w[0]] == points[w[1]] {
                return Err(FlowError::Coincident(w[0], w[1]));
            }
        }

        // Leading run of collinear points, then the first point off their line.
        let mut k = 2;
        while k < n && orient(points, order[0], order[1], order[k]) == 0.0 {
            k += 1;
        }
        if k == n {
            return Err(FlowError::Collinear);
        }
        let q = order[k];
        let run = &order[..k];
        let mut triangles: Vec<[usize; 3]> = Vec::new();
        let mut hull: Vec<usize>;
        if orient(points, run[0], run[k - 1], q) > 0.0 {
            for w in run.windows(2) {
                triangles.push([w[0], w[1], q]);
            }
            hull = run.to_vec();
            hull.push(q);
        } else {
            for w in run.windows(2) {
                triangles.push([w[1], w[0], q]);
            }
            hull = run.iter().rev().copied().collect();
            hull.push(q);
        }

        for &p in &order[k + 1..] {
            let m = hull.len();
            let visible: Vec<bool> = (0..m)
                .map(|i| orient(points, hull[i], hull[(i + 1) % m], p) < 0.0)
                .collect();
            let start = (0..m)
                .find(|&i| visible[i] && !visible[(i + m - 1) % m])
                .expect("point outside hull sees an edge");
            let mut count = 0;
            while visible[(start + count) % m] {
                let a = hull[(start + count) % m];
                let b = hull[(start + count + 1) % m];
                triangles.push([b, a, p]);
                count += 1;
            }
            let mut rotated: Vec<usize> = hull[start..].iter().chain(&hull[..start]).copied().collect();
            rotated.splice(1..count, [p]);
            hull = rotated;
        }

        let mut tri = Triangulation {
            vertices: points.to_vec(),
            triangles,
            neighbors: Vec::new(),
        };
        tri.lawson_flip();
        tri.neighbors = vec![BTreeSet::new(); n];
        for t in &tri.triangles {
            for i in 0..3 {
                let (a, b) = (t[i], t[(i + 1) % 3]);
                tri.neighbors[a].insert(b);
                tri.neighbors[b].insert(a);
            }
        }
        debug_assert_eq!(tri.circumcircle_violations(), 0);
        Ok(tri)
    }

    fn lawson_flip(&mut self) {
        let mut edges: HashMap<(usize, usize), usize> = HashMap::new();
        for (ti, t) in self.triangles.iter().enumerate() {
            for i in 0..3 {
                edges.insert((t[i], t[(i + 1) % 3]), ti);
            }
        }
        let mut stack: Vec<(usize, usize)> = edges.keys().copied().collect();
        stack.sort_unstable();
        let third = |t: &[usize; 3], u: usize, v: usize| {
            *t.iter().find(|&&x| x != u && x != v).expect("triangle has a third vertex")
        };
        while let Some((u, v)) = stack.pop() {
            let (Some(&t1), Some(&t2)) = (edges.get(&(u, v)), edges.get(&(v, u))) else {
                continue;
            };
            let w = third(&self.triangles[t1], u, v);
            let z = third(&self.triangles[t2], u, v);
            let p = &self.vertices;
            if incircle(c(p[u]), c(p[v]), c(p[w]), c(p[z])) <= 0.0 {
                continue;
            }
            for t in [t1, t2] {
                let tr = self.triangles[t];
                for i in 0..3 {
                    edges.remove(&(tr[i], tr[(i + 1) % 3]));
                }
            }
            self.triangles[t1] = [u, z, w];
            self.triangles[t2] = [z, v, w];
            for t in [t1, t2] {
                let tr = self.triangles[t];
                for i in 0..3 {
                    edges.insert((tr[i], tr[(i + 1) % 3]), t);
                }
            }
            stack.extend([(u, z), (z, v), (v, w), (w, u)]);
        }
    }

    /// Number of (triangle, vertex) pairs where the vertex lies strictly inside
    /// the triangle's circumcircle.
    pub fn circumcircle_violations(&self) -> usize {
        let p = &self.vertices;
        self.triangles
            .iter()
            .map(|t| {
                (0..p.len())
                    .filter(|q| !t.contains(q))
                    .filter(|&q| incircle(c(p[t[0]]), c(p[t[1]]), c(p[t[2]]), c(p[q])) > 0.0)
                    .count()
            })
            .sum()
    }
}
