//! Incremental Bowyer–Watson Delaunay triangulation on exact predicates.

use robust::{incircle, orient2d, Coord};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug)]
struct Tri {
    v: [usize; 3],
    /// `n[i]` is the neighbor across the edge opposite `v[i]`.
    n: [Option<usize>; 3],
    alive: bool,
}

struct Builder {
    pts: Vec<[f64; 2]>,
    tris: Vec<Tri>,
    last: usize,
}

fn c(p: [f64; 2]) -> Coord<f64> {
    Coord { x: p[0], y: p[1] }
}

impl Builder {
    fn orient(&self, a: usize, b: usize, p: [f64; 2]) -> f64 {
        orient2d(c(self.pts[a]), c(self.pts[b]), c(p))
    }

    fn in_circle(&self, t: usize, p: [f64; 2]) -> bool {
        let [a, b, cc] = self.tris[t].v;
        incircle(c(self.pts[a]), c(self.pts[b]), c(self.pts[cc]), c(p)) > 0.0
    }

    fn locate(&self, p: [f64; 2]) -> Result<usize> {
        let mut t = self.last;
        if !self.tris[t].alive {
            t = self
                .tris
                .iter()
                .rposition(|t| t.alive)
                .expect("live triangle");
        }
        let limit = 4 * self.tris.len() + 16;
        'walk: for _ in 0..limit {
            let tri = self.tris[t];
            for i in 0..3 {
                let (a, b) = (tri.v[(i + 1) % 3], tri.v[(i + 2) % 3]);
                if self.orient(a, b, p) < 0.0 {
                    match tri.n[i] {
                        Some(nb) => {
                            t = nb;
                            continue 'walk;
                        }
                        None => {
                            return Err(Error::Meshing(format!(
                                "point {p:?} outside the triangulation"
                            )))
                        }
                    }
                }
            }
            return Ok(t);
        }
        // Fall back to a scan if the walk cycles.
        (0..self.tris.len())
            .find(|&t| {
                let tri = self.tris[t];
                tri.alive
                    && (0..3).all(|i| self.orient(tri.v[(i + 1) % 3], tri.v[(i + 2) % 3], p) >= 0.0)
            })
            .ok_or_else(|| Error::Meshing(format!("cannot locate point {p:?}")))
    }

    fn insert(&mut self, pi: usize) -> Result<()> {
        let p = self.pts[pi];
        let start = self.locate(p)?;
        if !self.in_circle(start, p) {
            return Err(Error::Meshing(format!(
                "duplicate or degenerate point {p:?}"
            )));
        }
        let mut bad = vec![start];
        let mut is_bad = std::collections::HashSet::from([start]);
        let mut stack = vec![start];
        while let Some(t) = stack.pop() {
            for nb in self.tris[t].n.into_iter().flatten() {
                if !is_bad.contains(&nb) && self.in_circle(nb, p) {
                    is_bad.insert(nb);
                    bad.push(nb);
                    stack.push(nb);
                }
            }
        }
        // Cavity boundary edges (a, b) in counterclockwise order, with the outside neighbor.
        let mut boundary: Vec<(usize, usize, Option<usize>)> = Vec::new();
        for &t in &bad {
            let tri = self.tris[t];
            for i in 0..3 {
                let outside = match tri.n[i] {
                    Some(nb) => !is_bad.contains(&nb),
                    None => true,
                };
                if outside {
                    boundary.push((tri.v[(i + 1) % 3], tri.v[(i + 2) % 3], tri.n[i]));
                }
            }
        }
        for &t in &bad {
            self.tris[t].alive = false;
        }
        let first = self.tris.len();
        for (k, &(a, b, outer)) in boundary.iter().enumerate() {
            if self.orient(a, b, p) <= 0.0 {
                return Err(Error::Meshing(format!(
                    "cavity for {p:?} is not star-shaped"
                )));
            }
            let new = first + k;
            self.tris.push(Tri {
                v: [a, b, pi],
                n: [None, None, outer],
                alive: true,
            });
            if let Some(o) = outer {
                let slot = (0..3)
                    .find(|&j| {
                        let ot = self.tris[o];
                        let (x, y) = (ot.v[(j + 1) % 3], ot.v[(j + 2) % 3]);
                        x == b && y == a
                    })
                    .expect("outer neighbor shares the cavity edge");
                self.tris[o].n[slot] = Some(new);
            }
        }
        // Link the fan: the edge (b, p) of [a, b, p] meets the edge (p, b) of [b, c, p].
        let count = boundary.len();
        for k in 0..count {
            let (_, b, _) = boundary[k];
            let j = (0..count)
                .find(|&j| boundary[j].0 == b)
                .ok_or_else(|| Error::Meshing("open cavity boundary".into()))?;
            self.tris[first + k].n[0] = Some(first + j);
            self.tris[first + j].n[1] = Some(first + k);
        }
        self.last = first;
        Ok(())
    }
}

/// Delaunay triangulation of `points` (which must all lie in `[0,1]²` and be
/// pairwise distinct). Returns counterclockwise triangles indexing `points`.
pub(crate) fn triangulate(points: &[[f64; 2]]) -> Result<Vec<[usize; 3]>> {
    let n = points.len();
    let mut pts = points.to_vec();
    let big = 1.0e4;
    pts.push([-big, -big]);
    pts.push([big, -big]);
    pts.push([0.5, big]);
    let mut b = Builder {
        pts,
        tris: vec![Tri {
            v: [n, n + 1, n + 2],
            n: [None; 3],
            alive: true,
        }],
        last: 0,
    };
    for i in 0..n {
        b.insert(i)?;
    }
    Ok(b.tris
        .into_iter()
        .filter(|t| t.alive && t.v.iter().all(|&v| v < n))
        .map(|t| t.v)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn area(p: &[[f64; 2]], t: [usize; 3]) -> f64 {
        let [a, b, c] = t.map(|i| p[i]);
        0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
    }

    #[test]
    fn grid_is_fully_covered() {
        let mut pts = Vec::new();
        for j in 0..=5 {
            for i in 0..=5 {
                pts.push([i as f64 / 5.0, j as f64 / 5.0]);
            }
        }
        let tris = triangulate(&pts).unwrap();
        assert_eq!(tris.len(), 50);
        let total: f64 = tris.iter().map(|&t| area(&pts, t)).sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!(tris.iter().all(|&t| area(&pts, t) > 0.0));
    }

    #[test]
    fn empty_circumcircles() {
        let pts: Vec<[f64; 2]> = (0..200)
            .map(|k| {
                let x = ((k * 7919) % 997) as f64 / 997.0;
                let y = ((k * 104729) % 991) as f64 / 991.0;
                [x, y]
            })
            .collect();
        let tris = triangulate(&pts).unwrap();
        for t in &tris {
            let [a, b, cc] = t.map(|i| c(pts[i]));
            for (k, q) in pts.iter().enumerate() {
                if t.contains(&k) {
                    continue;
                }
                assert!(incircle(a, b, cc, c(*q)) <= 0.0);
            }
        }
    }
}
