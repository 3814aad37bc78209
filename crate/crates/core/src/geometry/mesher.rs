//! Unit-cell mesher.
//!
//! Points are seeded in priority order: the square's sides (identical spacing
//! on opposite sides, so periodic matching is exact), the hole polygons,
//! graded rings around each hole, and finally a uniform background grid.
//! A candidate is accepted only if it keeps its distance from the points
//! already placed and stays out of the diametral disks of the constrained
//! edges; the latter guarantees that every side and hole edge appears in the
//! Delaunay triangulation of the accepted set.

use std::f64::consts::PI;

use super::delaunay::triangulate;
use super::mesh::{side_of, EdgeTag, TaggedEdge, TriMesh};
use super::{UnitCellGeometry, MIN_SEGMENTS};
use crate::error::{Error, Result};

/// Relative spacing between accepted points, as a fraction of the mean local size.
const SPACING: f64 = 0.75;
/// Ring-to-ring growth of the circumferential spacing.
const GROWTH: f64 = 1.3;
/// Guard factor on diametral disks.
const DISK_GUARD: f64 = 1.05;
/// Triangles with an edge longer than this multiple of the background size get a centroid.
const FILL_FACTOR: f64 = 1.5;
const MAX_FILL_ROUNDS: usize = 6;

struct Candidate {
    p: [f64; 2],
    size: f64,
}

struct Placed {
    points: Vec<[f64; 2]>,
    sizes: Vec<f64>,
    /// Bucket grid over the unit square for neighbor queries.
    buckets: Vec<Vec<usize>>,
    nb: usize,
}

impl Placed {
    fn new(bucket_size: f64) -> Self {
        let nb = ((1.0 / bucket_size).ceil() as usize).clamp(1, 512);
        Self {
            points: Vec::new(),
            sizes: Vec::new(),
            buckets: vec![Vec::new(); nb * nb],
            nb,
        }
    }

    fn bucket(&self, p: [f64; 2]) -> (usize, usize) {
        let f = |x: f64| ((x * self.nb as f64).floor().max(0.0) as usize).min(self.nb - 1);
        (f(p[0]), f(p[1]))
    }

    fn push(&mut self, p: [f64; 2], size: f64) -> usize {
        let (i, j) = self.bucket(p);
        let id = self.points.len();
        self.points.push(p);
        self.sizes.push(size);
        self.buckets[j * self.nb + i].push(id);
        id
    }

    fn far_enough(&self, p: [f64; 2], size: f64, reach: f64) -> bool {
        let (ci, cj) = self.bucket(p);
        let r = ((reach * self.nb as f64).ceil() as usize).max(1);
        for j in cj.saturating_sub(r)..=(cj + r).min(self.nb - 1) {
            for i in ci.saturating_sub(r)..=(ci + r).min(self.nb - 1) {
                for &q in &self.buckets[j * self.nb + i] {
                    let d = (p[0] - self.points[q][0]).hypot(p[1] - self.points[q][1]);
                    if d < SPACING * 0.5 * (size + self.sizes[q]) {
                        return false;
                    }
                }
            }
        }
        true
    }
}

/// Constrained edges whose diametral disks must stay empty.
struct Guard {
    mid: [f64; 2],
    radius: f64,
}

/// Triangulates the perforated cell at background spacing `target_h`.
///
/// Fails when a hole polygon has fewer than eight sides or when the clearance
/// between a hole and the sides (or another hole) is smaller than `target_h`.
pub fn mesh_unit_cell(cell: &UnitCellGeometry, target_h: f64) -> Result<TriMesh> {
    if !(target_h > 0.0) {
        return Err(Error::Meshing(format!(
            "target_h must be positive, got {target_h}"
        )));
    }
    let m = (1.0 / target_h - 1e-9).ceil().max(1.0) as usize;
    if cell.holes.is_empty() {
        return Ok(TriMesh::unit_square(m));
    }
    let segs = cell.boundary_segments_per_hole;
    if segs < MIN_SEGMENTS {
        return Err(Error::Meshing(format!(
            "{segs} boundary segments per hole; at least {MIN_SEGMENTS} are required"
        )));
    }
    for (i, hole) in cell.holes.iter().enumerate() {
        let c = hole.side_clearance();
        if c < target_h {
            return Err(Error::Meshing(format!(
                "hole {i}: clearance {c:.4} to the cell sides is below target_h {target_h:.4}"
            )));
        }
        for (j, other) in cell.holes.iter().enumerate().skip(i + 1) {
            let gap = hole.gap_to(other);
            if gap < target_h {
                return Err(Error::Meshing(format!(
                    "holes {i} and {j}: gap {gap:.4} is below target_h {target_h:.4}"
                )));
            }
        }
    }

    let h = 1.0 / m as f64;
    let coord = |k: usize| if k == m { 1.0 } else { k as f64 * h };
    let mut placed = Placed::new(h);
    let mut guards: Vec<Guard> = Vec::new();

    // Square boundary, counterclockwise from the origin.
    for k in 0..m {
        placed.push([coord(k), 0.0], h);
    }
    for k in 0..m {
        placed.push([1.0, coord(k)], h);
    }
    for k in 0..m {
        placed.push([coord(m - k), 1.0], h);
    }
    for k in 0..m {
        placed.push([0.0, coord(m - k)], h);
    }
    for k in 0..m {
        let (a, b) = (coord(k), coord(k + 1));
        let r = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        guards.push(Guard {
            mid: [mid, 0.0],
            radius: r,
        });
        guards.push(Guard {
            mid: [mid, 1.0],
            radius: r,
        });
        guards.push(Guard {
            mid: [0.0, mid],
            radius: r,
        });
        guards.push(Guard {
            mid: [1.0, mid],
            radius: r,
        });
    }

    // Hole polygons.
    let mut hole_first = Vec::with_capacity(cell.holes.len());
    for hole in &cell.holes {
        let poly = hole.polygon(segs);
        let s = 2.0 * hole.radius * (PI / segs as f64).sin();
        hole_first.push(placed.points.len());
        for (k, &p) in poly.iter().enumerate() {
            placed.push(p, s);
            let q = poly[(k + 1) % segs];
            guards.push(Guard {
                mid: [0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])],
                radius: 0.5 * s,
            });
        }
    }

    let mut candidates: Vec<Candidate> = Vec::new();
    // Graded rings: the first ring sits an equilateral height away from the
    // polygon, each subsequent ring widens the spacing by GROWTH until it
    // reaches the background size.
    for hole in &cell.holes {
        let mut spacing = 2.0 * hole.radius * (PI / segs as f64).sin();
        let mut rho = hole.radius;
        let mut layer = 0usize;
        loop {
            rho += spacing * 0.5 * 3f64.sqrt();
            let next = (spacing * GROWTH).min(h);
            layer += 1;
            let count = ((2.0 * PI * rho / next).round() as usize).max(segs.min(8));
            let shift = if layer % 2 == 1 {
                PI / count as f64
            } else {
                0.0
            };
            for k in 0..count {
                let t = 2.0 * PI * k as f64 / count as f64 + shift;
                candidates.push(Candidate {
                    p: [
                        hole.center[0] + rho * t.cos(),
                        hole.center[1] + rho * t.sin(),
                    ],
                    size: next,
                });
            }
            spacing = next;
            if next >= h {
                break;
            }
        }
    }
    for j in 1..m {
        for i in 1..m {
            candidates.push(Candidate {
                p: [coord(i), coord(j)],
                size: h,
            });
        }
    }

    let inside_hole = |p: [f64; 2], pad: f64| {
        cell.holes
            .iter()
            .any(|hole| (p[0] - hole.center[0]).hypot(p[1] - hole.center[1]) < hole.radius + pad)
    };
    for cand in candidates {
        let p = cand.p;
        let wall = p[0].min(1.0 - p[0]).min(p[1]).min(1.0 - p[1]);
        if wall < 0.5 * SPACING * cand.size {
            continue;
        }
        if inside_hole(p, 0.0) {
            continue;
        }
        if guards
            .iter()
            .any(|g| (p[0] - g.mid[0]).hypot(p[1] - g.mid[1]) < DISK_GUARD * g.radius)
        {
            continue;
        }
        if !placed.far_enough(p, cand.size, cand.size.max(h)) {
            continue;
        }
        placed.push(p, cand.size);
    }

    // Keep triangles whose centroid is outside every hole polygon.
    let polys: Vec<Vec<[f64; 2]>> = cell.holes.iter().map(|hole| hole.polygon(segs)).collect();
    let centroid = |p: &[[f64; 2]], [a, b, c]: [usize; 3]| {
        [
            (p[a][0] + p[b][0] + p[c][0]) / 3.0,
            (p[a][1] + p[b][1] + p[c][1]) / 3.0,
        ]
    };
    let mut triangles: Vec<[usize; 3]>;
    let mut rounds = 0;
    loop {
        triangles = triangulate(&placed.points)?
            .into_iter()
            .filter(|&t| {
                !polys
                    .iter()
                    .any(|poly| inside_convex(poly, centroid(&placed.points, t)))
            })
            .collect();
        // Fill voids left where the graded rings of neighboring holes meet.
        let mut fill = Vec::new();
        for &t in &triangles {
            let p = t.map(|v| placed.points[v]);
            let longest =
                (0..3).map(|k| (p[k][0] - p[(k + 1) % 3][0]).hypot(p[k][1] - p[(k + 1) % 3][1]));
            if longest.fold(0.0f64, f64::max) > FILL_FACTOR * h {
                fill.push(centroid(&placed.points, t));
            }
        }
        let mut added = false;
        for g in fill {
            let guarded = guards
                .iter()
                .any(|d| (g[0] - d.mid[0]).hypot(g[1] - d.mid[1]) < DISK_GUARD * d.radius);
            if !guarded && !inside_hole(g, 0.0) && placed.far_enough(g, 0.5 * h, h) {
                placed.push(g, 0.5 * h);
                added = true;
            }
        }
        rounds += 1;
        if !added || rounds == MAX_FILL_ROUNDS {
            break;
        }
    }
    let points = placed.points;

    let mut mesh = TriMesh::new(points, triangles, Vec::new());
    mesh.edge_tags = tag_cell_boundary(&mesh, cell, &hole_first)?;
    mesh.check_conforming()?;

    for (k, hole) in cell.holes.iter().enumerate() {
        let count = mesh
            .edge_tags
            .iter()
            .filter(|e| {
                e.tag == hole.phase.hole_tag()
                    && e.v[0] >= hole_first[k]
                    && e.v[0] < hole_first[k] + segs
            })
            .count();
        if count != segs {
            return Err(Error::Meshing(format!(
                "hole {k}: {count} of {segs} polygon edges recovered"
            )));
        }
    }
    for side in [
        EdgeTag::SideLeft,
        EdgeTag::SideRight,
        EdgeTag::SideBottom,
        EdgeTag::SideTop,
    ] {
        if mesh.tag_count(side) != m {
            return Err(Error::Meshing(format!("side {} lost edges", side.name())));
        }
    }
    if mesh.mesh_size_h > 2.0 * target_h {
        return Err(Error::Meshing(format!(
            "mesh size {:.4} exceeds twice the target {target_h:.4}",
            mesh.mesh_size_h
        )));
    }
    Ok(mesh)
}

fn inside_convex(poly: &[[f64; 2]], p: [f64; 2]) -> bool {
    let n = poly.len();
    (0..n).all(|k| {
        let a = poly[k];
        let b = poly[(k + 1) % n];
        (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]) > 0.0
    })
}

fn tag_cell_boundary(
    mesh: &TriMesh,
    cell: &UnitCellGeometry,
    hole_first: &[usize],
) -> Result<Vec<TaggedEdge>> {
    let segs = cell.boundary_segments_per_hole;
    let mut sides = Vec::new();
    let mut holes = Vec::new();
    for [a, b] in mesh.boundary_edges() {
        let owner = hole_first
            .iter()
            .position(|&f| a >= f && a < f + segs && b >= f && b < f + segs);
        if let Some(k) = owner {
            let f = hole_first[k];
            let (la, lb) = (a - f, b - f);
            // Outside the hole the domain sees the polygon clockwise.
            if la != (lb + 1) % segs {
                return Err(Error::Meshing(format!(
                    "hole {k}: chord {la}-{lb} on the boundary"
                )));
            }
            holes.push(TaggedEdge {
                v: [a, b],
                tag: cell.holes[k].phase.hole_tag(),
            });
            continue;
        }
        match side_of(mesh.vertices[a], mesh.vertices[b]) {
            Some(tag) => sides.push(TaggedEdge { v: [a, b], tag }),
            None => {
                return Err(Error::Meshing(format!(
                    "stray boundary edge {:?}-{:?}",
                    mesh.vertices[a], mesh.vertices[b]
                )))
            }
        }
    }
    sides.extend(holes);
    Ok(sides)
}
