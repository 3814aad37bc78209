use std::collections::BTreeMap;

use super::sparse::SparseMatrix;
use crate::error::Result;
use crate::geometry::{EdgeTag, TriMesh};

/// Role of a mesh vertex in the reduced system.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DofKind {
    /// Free unknown with this reduced index.
    Free(usize),
    /// Fixed value, eliminated from the system.
    Dirichlet(f64),
    /// Periodic copy of the free dof with this reduced index.
    Slave(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct DofMap {
    pub kinds: Vec<DofKind>,
    pub num_free: usize,
}

impl DofMap {
    pub fn unconstrained(num_vertices: usize) -> Self {
        Self {
            kinds: (0..num_vertices).map(DofKind::Free).collect(),
            num_free: num_vertices,
        }
    }

    /// Homogeneous Dirichlet condition on every vertex of an edge with one of `tags`.
    pub fn dirichlet(mesh: &TriMesh, tags: &[EdgeTag]) -> Self {
        let mut fixed = vec![false; mesh.num_vertices()];
        for e in mesh.edge_tags.iter().filter(|e| tags.contains(&e.tag)) {
            fixed[e.v[0]] = true;
            fixed[e.v[1]] = true;
        }
        let mut next = 0;
        let kinds = fixed
            .iter()
            .map(|&f| {
                if f {
                    DofKind::Dirichlet(0.0)
                } else {
                    next += 1;
                    DofKind::Free(next - 1)
                }
            })
            .collect();
        Self {
            kinds,
            num_free: next,
        }
    }

    /// Periodic identification of a unit-cell mesh; slaves point straight at free masters.
    pub fn periodic(mesh: &TriMesh) -> Result<Self> {
        let mut master_of: Vec<Option<usize>> = vec![None; mesh.num_vertices()];
        for (slave, master) in mesh.periodic_pairs()? {
            master_of[slave] = Some(master);
        }
        let mut free_index = vec![usize::MAX; mesh.num_vertices()];
        let mut next = 0;
        for (v, m) in master_of.iter().enumerate() {
            if m.is_none() {
                free_index[v] = next;
                next += 1;
            }
        }
        let kinds = master_of
            .iter()
            .enumerate()
            .map(|(v, m)| match m {
                None => DofKind::Free(free_index[v]),
                Some(m) => DofKind::Slave(free_index[*m]),
            })
            .collect();
        Ok(Self {
            kinds,
            num_free: next,
        })
    }

    pub fn num_vertices(&self) -> usize {
        self.kinds.len()
    }

    pub fn has_dirichlet(&self) -> bool {
        self.kinds
            .iter()
            .any(|k| matches!(k, DofKind::Dirichlet(_)))
    }

    /// Reduced index a vertex contributes to, if any.
    pub fn target(&self, v: usize) -> Option<usize> {
        match self.kinds[v] {
            DofKind::Free(i) | DofKind::Slave(i) => Some(i),
            DofKind::Dirichlet(_) => None,
        }
    }

    /// Vertex values from reduced values (constraints reinstated).
    pub fn expand(&self, reduced: &[f64]) -> Vec<f64> {
        self.kinds
            .iter()
            .map(|k| match *k {
                DofKind::Free(i) | DofKind::Slave(i) => reduced[i],
                DofKind::Dirichlet(g) => g,
            })
            .collect()
    }

    /// Reduced values from vertex values (slave and Dirichlet entries ignored).
    pub fn restrict(&self, values: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.num_free];
        for (v, k) in self.kinds.iter().enumerate() {
            if let DofKind::Free(i) = *k {
                out[i] = values[v];
            }
        }
        out
    }

    /// Sums a vertex-space load vector into the reduced space.
    pub fn fold(&self, load: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.num_free];
        for (v, &b) in load.iter().enumerate() {
            if let Some(i) = self.target(v) {
                out[i] += b;
            }
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct ReducedSystem {
    pub matrix: SparseMatrix,
    pub rhs: Vec<f64>,
    /// Constants lie in the kernel (no Dirichlet dofs and zero row sums).
    pub singular: bool,
}

/// Folds periodic slaves into their masters and eliminates Dirichlet dofs,
/// moving their contribution to the right-hand side. The result is
/// symmetrized entrywise so it is bitwise symmetric.
pub fn apply_constraints(matrix: &SparseMatrix, rhs: &[f64], dofs: &DofMap) -> ReducedSystem {
    assert_eq!(
        matrix.n,
        dofs.num_vertices(),
        "matrix and dof map sizes differ"
    );
    let n = dofs.num_free;
    let mut rows: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); n];
    let mut b = dofs.fold(rhs);
    for v in 0..matrix.n {
        let Some(p) = dofs.target(v) else { continue };
        for (w, a) in matrix.row(v) {
            match dofs.kinds[w] {
                DofKind::Free(q) | DofKind::Slave(q) => *rows[p].entry(q).or_insert(0.0) += a,
                DofKind::Dirichlet(g) => b[p] -= a * g,
            }
        }
    }
    for p in 0..n {
        rows[p].entry(p).or_insert(0.0);
    }
    let pattern: Vec<Vec<usize>> = rows.iter().map(|r| r.keys().copied().collect()).collect();
    let mut reduced = SparseMatrix::from_pattern(pattern);
    for p in 0..n {
        for (&q, &a) in &rows[p] {
            let sym = if q == p {
                a
            } else {
                0.5 * (a + rows[q].get(&p).copied().unwrap_or(0.0))
            };
            reduced.add(p, q, sym);
        }
    }
    reduced.prune_zeros();

    let singular = !dofs.has_dirichlet() && {
        let scale = reduced
            .diagonal()
            .iter()
            .fold(0.0_f64, |m, d| m.max(d.abs()));
        (0..n).all(|p| {
            reduced.row(p).map(|(_, a)| a).sum::<f64>().abs()
                <= 1e-10 * scale.max(f64::MIN_POSITIVE)
        })
    };
    ReducedSystem {
        matrix: reduced,
        rhs: b,
        singular,
    }
}
