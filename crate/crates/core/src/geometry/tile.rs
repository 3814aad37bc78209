use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::mesh::{EdgeTag, TaggedEdge, TriMesh};
use crate::error::{Error, Result};

/// Mesh of `Ω_ε = (0,1)²` minus the ε-scaled holes, obtained by tiling a
/// periodic cell mesh `N × N` times with `ε = 1/N`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PerforatedDomainMesh {
    pub mesh: TriMesh,
    pub n: usize,
    pub epsilon: f64,
    /// Lattice cell of each triangle, `i * n + j` for the cell `[i/N,(i+1)/N] × [j/N,(j+1)/N]`.
    pub cell_of_triangle: Vec<usize>,
    /// Cell-mesh vertex each global vertex is a periodic copy of (always a master).
    pub source_vertex: Vec<usize>,
    /// Fingerprint of the cell mesh this domain was tiled from.
    pub cell_fingerprint: String,
}

impl PerforatedDomainMesh {
    pub fn num_cells(&self) -> usize {
        self.n * self.n
    }
}

/// Tiles `cell_mesh` over the unit square with `ε = 1/n`.
///
/// Vertices on shared cell interfaces are merged by periodic identity, so the
/// result has no duplicate nodes. Hole edges keep their phase tags and every
/// edge on `∂(0,1)²` is retagged [`EdgeTag::DirichletOuter`].
pub fn tile_mesh(cell_mesh: &TriMesh, n: usize) -> Result<PerforatedDomainMesh> {
    if n == 0 {
        return Err(Error::Meshing("tiling factor must be at least 1".into()));
    }
    let pairs = cell_mesh.periodic_pairs()?;
    let nv = cell_mesh.num_vertices();
    // master[v] and the lattice shift from v's cell to its master's cell.
    let mut master: Vec<(usize, usize, usize)> = (0..nv).map(|v| (v, 0, 0)).collect();
    for (slave, m) in pairs {
        let ps = cell_mesh.vertices[slave];
        let pm = cell_mesh.vertices[m];
        let sx = (ps[0] - pm[0]).round() as usize;
        let sy = (ps[1] - pm[1]).round() as usize;
        master[slave] = (m, sx, sy);
    }

    let eps = 1.0 / n as f64;
    let mut index: HashMap<(usize, usize, usize), usize> = HashMap::new();
    let mut vertices: Vec<[f64; 2]> = Vec::new();
    let mut source_vertex = Vec::new();
    let mut local_to_global = vec![0usize; nv];
    let mut triangles = Vec::with_capacity(n * n * cell_mesh.num_triangles());
    let mut cell_of_triangle = Vec::with_capacity(triangles.capacity());
    let mut edge_tags = Vec::new();

    for i in 0..n {
        for j in 0..n {
            for v in 0..nv {
                let (m, sx, sy) = master[v];
                let key = (i + sx, j + sy, m);
                let g = *index.entry(key).or_insert_with(|| {
                    let p = cell_mesh.vertices[m];
                    vertices.push([(key.0 as f64 + p[0]) * eps, (key.1 as f64 + p[1]) * eps]);
                    source_vertex.push(m);
                    vertices.len() - 1
                });
                local_to_global[v] = g;
            }
            for tri in &cell_mesh.triangles {
                triangles.push(tri.map(|v| local_to_global[v]));
                cell_of_triangle.push(i * n + j);
            }
            for e in &cell_mesh.edge_tags {
                let outer = match e.tag {
                    EdgeTag::SideLeft => i == 0,
                    EdgeTag::SideRight => i == n - 1,
                    EdgeTag::SideBottom => j == 0,
                    EdgeTag::SideTop => j == n - 1,
                    _ => {
                        edge_tags.push(TaggedEdge {
                            v: e.v.map(|v| local_to_global[v]),
                            tag: e.tag,
                        });
                        continue;
                    }
                };
                if outer {
                    edge_tags.push(TaggedEdge {
                        v: e.v.map(|v| local_to_global[v]),
                        tag: EdgeTag::DirichletOuter,
                    });
                }
            }
        }
    }

    let mut mesh = TriMesh::new(vertices, triangles, edge_tags);
    // Scaling is exact in the lattice coordinates, so the size is scaled directly.
    mesh.mesh_size_h = cell_mesh.mesh_size_h * eps;
    Ok(PerforatedDomainMesh {
        mesh,
        n,
        epsilon: eps,
        cell_of_triangle,
        source_vertex,
        cell_fingerprint: cell_mesh.fingerprint(),
    })
}
