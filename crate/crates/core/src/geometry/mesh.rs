use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EdgeTag {
    SideLeft,
    SideRight,
    SideBottom,
    SideTop,
    HolePhase1,
    HolePhase2,
    DirichletOuter,
}

impl EdgeTag {
    pub fn name(self) -> &'static str {
        match self {
            EdgeTag::SideLeft => "side_left",
            EdgeTag::SideRight => "side_right",
            EdgeTag::SideBottom => "side_bottom",
            EdgeTag::SideTop => "side_top",
            EdgeTag::HolePhase1 => "hole_phase_1",
            EdgeTag::HolePhase2 => "hole_phase_2",
            EdgeTag::DirichletOuter => "dirichlet_outer",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "side_left" => EdgeTag::SideLeft,
            "side_right" => EdgeTag::SideRight,
            "side_bottom" => EdgeTag::SideBottom,
            "side_top" => EdgeTag::SideTop,
            "hole_phase_1" => EdgeTag::HolePhase1,
            "hole_phase_2" => EdgeTag::HolePhase2,
            "dirichlet_outer" => EdgeTag::DirichletOuter,
            _ => return None,
        })
    }

    pub fn is_side(self) -> bool {
        matches!(
            self,
            EdgeTag::SideLeft | EdgeTag::SideRight | EdgeTag::SideBottom | EdgeTag::SideTop
        )
    }
}

/// A boundary edge, oriented as in its (counterclockwise) triangle.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaggedEdge {
    pub v: [usize; 2],
    pub tag: EdgeTag,
}

/// Conforming P1 triangulation with tagged boundary edges.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TriMesh {
    pub vertices: Vec<[f64; 2]>,
    pub triangles: Vec<[usize; 3]>,
    pub edge_tags: Vec<TaggedEdge>,
    pub mesh_size_h: f64,
}

pub(crate) fn signed_area(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

impl TriMesh {
    /// Builds a mesh and computes its size; the tag list is taken as given.
    pub fn new(
        vertices: Vec<[f64; 2]>,
        triangles: Vec<[usize; 3]>,
        edge_tags: Vec<TaggedEdge>,
    ) -> Self {
        let mut mesh = Self {
            vertices,
            triangles,
            edge_tags,
            mesh_size_h: 0.0,
        };
        mesh.mesh_size_h = mesh.max_diameter();
        mesh
    }

    /// Structured mesh of the unit square with `n × n` squares, each split
    /// along the same diagonal. Sides carry the periodic side tags.
    pub fn unit_square(n: usize) -> Self {
        assert!(n >= 1, "unit_square needs at least one subdivision");
        let h = 1.0 / n as f64;
        let idx = |i: usize, j: usize| j * (n + 1) + i;
        let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
        for j in 0..=n {
            for i in 0..=n {
                let x = if i == n { 1.0 } else { i as f64 * h };
                let y = if j == n { 1.0 } else { j as f64 * h };
                vertices.push([x, y]);
            }
        }
        let mut triangles = Vec::with_capacity(2 * n * n);
        for j in 0..n {
            for i in 0..n {
                let (a, b, c, d) = (idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1));
                triangles.push([a, b, c]);
                triangles.push([a, c, d]);
            }
        }
        let mut mesh = Self::new(vertices, triangles, Vec::new());
        mesh.edge_tags = mesh
            .tag_square_sides()
            .expect("structured square has only side edges");
        mesh
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn triangle_coords(&self, t: usize) -> [[f64; 2]; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangle_coords(t);
        signed_area(a, b, c)
    }

    pub fn edge_length(&self, e: &TaggedEdge) -> f64 {
        dist(self.vertices[e.v[0]], self.vertices[e.v[1]])
    }

    fn max_diameter(&self) -> f64 {
        self.triangles
            .iter()
            .map(|&[a, b, c]| {
                let (pa, pb, pc) = (self.vertices[a], self.vertices[b], self.vertices[c]);
                dist(pa, pb).max(dist(pb, pc)).max(dist(pc, pa))
            })
            .fold(0.0, f64::max)
    }

    pub fn has_tag(&self, tag: EdgeTag) -> bool {
        self.edge_tags.iter().any(|e| e.tag == tag)
    }

    pub fn edges_with_tag(&self, tag: EdgeTag) -> impl Iterator<Item = &TaggedEdge> + '_ {
        self.edge_tags.iter().filter(move |e| e.tag == tag)
    }

    pub fn tag_count(&self, tag: EdgeTag) -> usize {
        self.edges_with_tag(tag).count()
    }

    pub fn area(&self) -> f64 {
        (0..self.num_triangles())
            .map(|t| self.triangle_area(t))
            .sum()
    }

    pub fn tagged_length(&self, tag: EdgeTag) -> f64 {
        self.edges_with_tag(tag).map(|e| self.edge_length(e)).sum()
    }

    /// Boundary edges (edges owned by exactly one triangle), in triangle order.
    pub fn boundary_edges(&self) -> Vec<[usize; 2]> {
        let mut count: HashMap<(usize, usize), usize> = HashMap::new();
        for tri in &self.triangles {
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                *count.entry((a.min(b), a.max(b))).or_default() += 1;
            }
        }
        let mut out = Vec::new();
        for tri in &self.triangles {
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                if count[&(a.min(b), a.max(b))] == 1 {
                    out.push([a, b]);
                }
            }
        }
        out
    }

    /// Tags every boundary edge lying on `x = 0`, `x = 1`, `y = 0` or `y = 1`.
    /// Returns an error if a boundary edge is not on the square.
    pub(crate) fn tag_square_sides(&self) -> Result<Vec<TaggedEdge>> {
        let mut tags = Vec::new();
        for [a, b] in self.boundary_edges() {
            match side_of(self.vertices[a], self.vertices[b]) {
                Some(tag) => tags.push(TaggedEdge { v: [a, b], tag }),
                None => {
                    return Err(Error::Meshing(format!(
                        "boundary edge {:?}-{:?} is not on the square",
                        self.vertices[a], self.vertices[b]
                    )))
                }
            }
        }
        Ok(tags)
    }

    /// Checks positivity of every triangle and that each interior edge is
    /// shared by exactly two triangles with opposite orientation.
    pub fn check_conforming(&self) -> Result<()> {
        for t in 0..self.num_triangles() {
            let area = self.triangle_area(t);
            if !(area > 0.0) {
                return Err(Error::DegenerateTriangle { index: t, area });
            }
        }
        let mut directed: HashMap<(usize, usize), usize> = HashMap::new();
        for (t, tri) in self.triangles.iter().enumerate() {
            for k in 0..3 {
                let e = (tri[k], tri[(k + 1) % 3]);
                if directed.insert(e, t).is_some() {
                    return Err(Error::Meshing(format!("directed edge {e:?} used twice")));
                }
            }
        }
        // Every vertex must be used, and no vertex may sit inside another edge.
        let mut used = vec![false; self.num_vertices()];
        for tri in &self.triangles {
            for &v in tri {
                used[v] = true;
            }
        }
        if let Some(v) = used.iter().position(|u| !u) {
            return Err(Error::Meshing(format!(
                "vertex {v} is not used by any triangle"
            )));
        }
        // Euler characteristic: V - E + F = 1 - (number of holes).
        let edges: BTreeSet<(usize, usize)> = directed
            .keys()
            .map(|&(a, b)| (a.min(b), a.max(b)))
            .collect();
        let boundary = self.boundary_edges();
        let loops = count_loops(&boundary);
        let euler = self.num_vertices() as i64 - edges.len() as i64 + self.num_triangles() as i64;
        if euler != 2 - loops as i64 {
            return Err(Error::Meshing(format!(
                "Euler characteristic {euler} inconsistent with {loops} boundary loops"
            )));
        }
        Ok(())
    }

    /// Pairs of vertices identified by the periodic translations, as
    /// `(slave, master)` where the master lies on the left/bottom sides and
    /// every corner maps to the vertex at the origin.
    pub fn periodic_pairs(&self) -> Result<Vec<(usize, usize)>> {
        let on = |v: usize, axis: usize, val: f64| {
            (self.vertices[v][axis] - val).abs() <= super::GEOM_TOL
        };
        let mut side_vertices: [BTreeSet<usize>; 4] = Default::default();
        for e in &self.edge_tags {
            let slot = match e.tag {
                EdgeTag::SideLeft => 0,
                EdgeTag::SideRight => 1,
                EdgeTag::SideBottom => 2,
                EdgeTag::SideTop => 3,
                _ => continue,
            };
            side_vertices[slot].extend(e.v);
        }
        let origin = (0..self.num_vertices())
            .find(|&v| on(v, 0, 0.0) && on(v, 1, 0.0))
            .ok_or_else(|| Error::UnmatchedPeriodic("no vertex at the origin".into()))?;
        let mut pairs = Vec::new();
        let mut matched: BTreeMap<usize, usize> = BTreeMap::new();
        for (lo, hi, axis) in [(0usize, 1usize, 0usize), (2, 3, 1)] {
            let other = 1 - axis;
            let mut lows: Vec<usize> = side_vertices[lo].iter().copied().collect();
            let mut highs: Vec<usize> = side_vertices[hi].iter().copied().collect();
            if lows.len() != highs.len() {
                return Err(Error::UnmatchedPeriodic(format!(
                    "{} vertices on one side, {} on the opposite side",
                    lows.len(),
                    highs.len()
                )));
            }
            let key = |v: &usize| self.vertices[*v][other];
            lows.sort_by(|a, b| key(a).total_cmp(&key(b)));
            highs.sort_by(|a, b| key(a).total_cmp(&key(b)));
            for (&l, &h) in lows.iter().zip(&highs) {
                if (key(&l) - key(&h)).abs() > super::GEOM_TOL {
                    return Err(Error::UnmatchedPeriodic(format!(
                        "vertex {:?} has no partner at {:?}",
                        self.vertices[h], self.vertices[l]
                    )));
                }
                matched.insert(h, l);
            }
        }
        // Resolve chains so every slave points at a vertex that is not itself a slave.
        for &slave in matched.keys() {
            let mut m = matched[&slave];
            let mut steps = 0;
            while let Some(&next) = matched.get(&m) {
                m = next;
                steps += 1;
                if steps > 4 {
                    return Err(Error::UnmatchedPeriodic(
                        "cyclic periodic identification".into(),
                    ));
                }
            }
            let is_corner = (on(slave, 0, 0.0) || on(slave, 0, 1.0))
                && (on(slave, 1, 0.0) || on(slave, 1, 1.0));
            pairs.push((slave, if is_corner { origin } else { m }));
        }
        Ok(pairs)
    }

    /// Content hash over coordinates (bitwise) and connectivity.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        for v in &self.vertices {
            hasher.update(v[0].to_bits().to_le_bytes());
            hasher.update(v[1].to_bits().to_le_bytes());
        }
        for t in &self.triangles {
            for &i in t {
                hasher.update((i as u64).to_le_bytes());
            }
        }
        let digest = hasher.finalize();
        digest.iter().fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }

    /// Plain-text dump: header `V T E`, then vertex, triangle and edge lines.
    pub fn write_text<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(
            w,
            "{} {} {}",
            self.num_vertices(),
            self.num_triangles(),
            self.edge_tags.len()
        )?;
        for v in &self.vertices {
            writeln!(w, "{:?} {:?}", v[0], v[1])?;
        }
        for t in &self.triangles {
            writeln!(w, "{} {} {}", t[0], t[1], t[2])?;
        }
        for e in &self.edge_tags {
            writeln!(w, "{} {} {}", e.v[0], e.v[1], e.tag.name())?;
        }
        Ok(())
    }

    pub fn read_text(text: &str) -> Result<Self> {
        let bad = |msg: &str| Error::Meshing(format!("mesh text: {msg}"));
        let mut lines = text.lines();
        let header: Vec<usize> = lines
            .next()
            .ok_or_else(|| bad("missing header"))?
            .split_whitespace()
            .map(|s| s.parse().map_err(|_| bad("bad header")))
            .collect::<Result<_>>()?;
        let [nv, nt, ne] = header[..] else {
            return Err(bad("header must have three counts"));
        };
        let mut vertices = Vec::with_capacity(nv);
        for _ in 0..nv {
            let p: Vec<f64> = lines
                .next()
                .ok_or_else(|| bad("truncated vertices"))?
                .split_whitespace()
                .map(|s| s.parse().map_err(|_| bad("bad coordinate")))
                .collect::<Result<_>>()?;
            vertices.push([p[0], p[1]]);
        }
        let mut triangles = Vec::with_capacity(nt);
        for _ in 0..nt {
            let p: Vec<usize> = lines
                .next()
                .ok_or_else(|| bad("truncated triangles"))?
                .split_whitespace()
                .map(|s| s.parse().map_err(|_| bad("bad index")))
                .collect::<Result<_>>()?;
            triangles.push([p[0], p[1], p[2]]);
        }
        let mut edge_tags = Vec::with_capacity(ne);
        for _ in 0..ne {
            let line = lines.next().ok_or_else(|| bad("truncated edges"))?;
            let parts: Vec<&str> = line.split_whitespace().collect();
            let a = parts[0].parse().map_err(|_| bad("bad index"))?;
            let b = parts[1].parse().map_err(|_| bad("bad index"))?;
            let tag = EdgeTag::from_name(parts[2]).ok_or_else(|| bad("unknown tag"))?;
            edge_tags.push(TaggedEdge { v: [a, b], tag });
        }
        Ok(Self::new(vertices, triangles, edge_tags))
    }
}

pub(crate) fn side_of(a: [f64; 2], b: [f64; 2]) -> Option<EdgeTag> {
    let tol = super::GEOM_TOL;
    if a[0].abs() <= tol && b[0].abs() <= tol {
        Some(EdgeTag::SideLeft)
    } else if (a[0] - 1.0).abs() <= tol && (b[0] - 1.0).abs() <= tol {
        Some(EdgeTag::SideRight)
    } else if a[1].abs() <= tol && b[1].abs() <= tol {
        Some(EdgeTag::SideBottom)
    } else if (a[1] - 1.0).abs() <= tol && (b[1] - 1.0).abs() <= tol {
        Some(EdgeTag::SideTop)
    } else {
        None
    }
}

fn count_loops(edges: &[[usize; 2]]) -> usize {
    let mut next: HashMap<usize, usize> = HashMap::new();
    for &[a, b] in edges {
        next.insert(a, b);
    }
    let mut seen: BTreeSet<usize> = BTreeSet::new();
    let mut loops = 0;
    for &[a, _] in edges {
        if seen.contains(&a) {
            continue;
        }
        loops += 1;
        let mut v = a;
        while seen.insert(v) {
            match next.get(&v) {
                Some(&n) => v = n,
                None => break,
            }
        }
    }
    loops
}
