use rayon::prelude::*;

use super::coefficient::Coefficient;
use super::sparse::SparseMatrix;
use super::{bary_point, to_cell, EDGE_QUAD, TRI_QUAD, TRI_QUAD16};
use crate::error::{Error, Result};
use crate::geometry::{EdgeTag, TriMesh};

/// Gradients of the three P1 basis functions and the signed area.
pub fn p1_gradients(p: &[[f64; 2]; 3]) -> ([[f64; 2]; 3], f64) {
    let det = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
    let inv = 1.0 / det;
    let g = [
        [(p[1][1] - p[2][1]) * inv, (p[2][0] - p[1][0]) * inv],
        [(p[2][1] - p[0][1]) * inv, (p[0][0] - p[2][0]) * inv],
        [(p[0][1] - p[1][1]) * inv, (p[1][0] - p[0][0]) * inv],
    ];
    (g, 0.5 * det)
}

/// Element mean of `a(x/scale)`, symmetrized.
pub fn element_coefficient(p: &[[f64; 2]; 3], coeff: &Coefficient, scale: f64) -> [[f64; 2]; 2] {
    if coeff.is_constant() {
        let a = coeff.eval([0.0, 0.0]);
        let o = 0.5 * (a[0][1] + a[1][0]);
        return [[a[0][0], o], [o, a[1][1]]];
    }
    let mut m = [[0.0; 2]; 2];
    for (l, w) in TRI_QUAD16.iter() {
        let a = coeff.eval(to_cell(bary_point(p, *l), scale));
        m[0][0] += w * a[0][0];
        m[1][1] += w * a[1][1];
        m[0][1] += w * 0.5 * (a[0][1] + a[1][0]);
    }
    m[1][0] = m[0][1];
    m
}

fn checked_gradients(mesh: &TriMesh, t: usize) -> Result<([[f64; 2]; 3], f64)> {
    let p = mesh.triangle_coords(t);
    let (g, area) = p1_gradients(&p);
    if !(area > 0.0) {
        return Err(Error::DegenerateTriangle { index: t, area });
    }
    Ok((g, area))
}

/// Upper triangle mirrored, so element matrices are exactly symmetric.
fn scatter(k: &mut SparseMatrix, tri: [usize; 3], ke: &[[f64; 3]; 3]) {
    for i in 0..3 {
        for j in 0..3 {
            let v = if i <= j { ke[i][j] } else { ke[j][i] };
            k.add(tri[i], tri[j], v);
        }
    }
}

/// Stiffness matrix of `∫ a(x/scale)∇u·∇v` in vertex space.
pub fn assemble_stiffness(mesh: &TriMesh, coeff: &Coefficient, scale: f64) -> Result<SparseMatrix> {
    let elements: Vec<[[f64; 3]; 3]> = (0..mesh.num_triangles())
        .into_par_iter()
        .map(|t| {
            let (g, area) = checked_gradients(mesh, t)?;
            let a = element_coefficient(&mesh.triangle_coords(t), coeff, scale);
            let mut ke = [[0.0; 3]; 3];
            for i in 0..3 {
                for j in i..3 {
                    let ag = [
                        a[0][0] * g[j][0] + a[0][1] * g[j][1],
                        a[1][0] * g[j][0] + a[1][1] * g[j][1],
                    ];
                    ke[i][j] = area * (g[i][0] * ag[0] + g[i][1] * ag[1]);
                }
            }
            Ok(ke)
        })
        .collect::<Result<_>>()?;
    let mut k = SparseMatrix::from_triangles(mesh.num_vertices(), &mesh.triangles);
    for (tri, ke) in mesh.triangles.iter().zip(&elements) {
        scatter(&mut k, *tri, ke);
    }
    Ok(k)
}

/// Consistent P1 mass matrix.
pub fn assemble_mass(mesh: &TriMesh) -> Result<SparseMatrix> {
    let mut m = SparseMatrix::from_triangles(mesh.num_vertices(), &mesh.triangles);
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let (_, area) = checked_gradients(mesh, t)?;
        let mut me = [[area / 12.0; 3]; 3];
        for (i, row) in me.iter_mut().enumerate() {
            row[i] = area / 6.0;
        }
        scatter(&mut m, *tri, &me);
    }
    Ok(m)
}

/// Load vector `∫ f φ_i`.
pub fn assemble_volume_linear(mesh: &TriMesh, f: impl Fn([f64; 2]) -> f64 + Sync) -> Vec<f64> {
    let elements: Vec<[f64; 3]> = (0..mesh.num_triangles())
        .into_par_iter()
        .map(|t| {
            let p = mesh.triangle_coords(t);
            let w = mesh.triangle_area(t) / 3.0;
            let mut be = [0.0; 3];
            for l in &TRI_QUAD {
                let fx = w * f(bary_point(&p, *l));
                for i in 0..3 {
                    be[i] += fx * l[i];
                }
            }
            be
        })
        .collect();
    let mut b = vec![0.0; mesh.num_vertices()];
    for (tri, be) in mesh.triangles.iter().zip(&elements) {
        for i in 0..3 {
            b[tri[i]] += be[i];
        }
    }
    b
}

/// Residual `∫ κ(u) φ_i` and Jacobian `∫ κ′(u) φ_j φ_i` of a volume nonlinearity.
pub fn assemble_volume_nonlinear(
    mesh: &TriMesh,
    u: &[f64],
    kappa: impl Fn(f64) -> f64 + Sync,
    kappa_prime: impl Fn(f64) -> f64 + Sync,
) -> (Vec<f64>, SparseMatrix) {
    let elements: Vec<([f64; 3], [[f64; 3]; 3])> = (0..mesh.num_triangles())
        .into_par_iter()
        .map(|t| {
            let tri = mesh.triangles[t];
            let w = mesh.triangle_area(t) / 3.0;
            let mut re = [0.0; 3];
            let mut je = [[0.0; 3]; 3];
            for l in &TRI_QUAD {
                let uq = l[0] * u[tri[0]] + l[1] * u[tri[1]] + l[2] * u[tri[2]];
                let (k, kp) = (w * kappa(uq), w * kappa_prime(uq));
                for i in 0..3 {
                    re[i] += k * l[i];
                    for j in i..3 {
                        je[i][j] += kp * l[i] * l[j];
                    }
                }
            }
            (re, je)
        })
        .collect();
    let mut r = vec![0.0; mesh.num_vertices()];
    let mut jac = SparseMatrix::from_triangles(mesh.num_vertices(), &mesh.triangles);
    for (tri, (re, je)) in mesh.triangles.iter().zip(&elements) {
        for i in 0..3 {
            r[tri[i]] += re[i];
        }
        scatter(&mut jac, *tri, je);
    }
    (r, jac)
}

fn require_tag(mesh: &TriMesh, tag: EdgeTag) -> Result<()> {
    if mesh.has_tag(tag) {
        Ok(())
    } else {
        Err(Error::UnknownTag(tag.name().into()))
    }
}

/// Boundary load `∫_{tag} density·φ_i ds`.
pub fn assemble_boundary_linear(
    mesh: &TriMesh,
    tag: EdgeTag,
    density: impl Fn([f64; 2]) -> f64,
) -> Result<Vec<f64>> {
    require_tag(mesh, tag)?;
    let mut b = vec![0.0; mesh.num_vertices()];
    for e in mesh.edges_with_tag(tag) {
        let (p, q) = (mesh.vertices[e.v[0]], mesh.vertices[e.v[1]]);
        let w = 0.5 * mesh.edge_length(e);
        for s in EDGE_QUAD {
            let x = [p[0] + s * (q[0] - p[0]), p[1] + s * (q[1] - p[1])];
            let d = w * density(x);
            b[e.v[0]] += d * (1.0 - s);
            b[e.v[1]] += d * s;
        }
    }
    Ok(b)
}

/// Residual `∫_{tag} κ(u) φ_i ds` and Jacobian `∫_{tag} κ′(u) φ_j φ_i ds`.
pub fn assemble_boundary_nonlinear(
    mesh: &TriMesh,
    tag: EdgeTag,
    u: &[f64],
    kappa: impl Fn(f64) -> f64,
    kappa_prime: impl Fn(f64) -> f64,
) -> Result<(Vec<f64>, SparseMatrix)> {
    require_tag(mesh, tag)?;
    let n = mesh.num_vertices();
    let mut rows: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    for e in mesh.edges_with_tag(tag) {
        rows[e.v[0]].push(e.v[1]);
        rows[e.v[1]].push(e.v[0]);
    }
    for r in &mut rows {
        r.sort_unstable();
        r.dedup();
    }
    let mut jac = SparseMatrix::from_pattern(rows);
    let mut res = vec![0.0; n];
    for e in mesh.edges_with_tag(tag) {
        let [a, b] = e.v;
        let w = 0.5 * mesh.edge_length(e);
        let mut je = [[0.0; 2]; 2];
        for s in EDGE_QUAD {
            let l = [1.0 - s, s];
            let uq = l[0] * u[a] + l[1] * u[b];
            let (k, kp) = (w * kappa(uq), w * kappa_prime(uq));
            res[a] += k * l[0];
            res[b] += k * l[1];
            je[0][0] += kp * l[0] * l[0];
            je[0][1] += kp * l[0] * l[1];
            je[1][1] += kp * l[1] * l[1];
        }
        jac.add(a, a, je[0][0]);
        jac.add(a, b, je[0][1]);
        jac.add(b, a, je[0][1]);
        jac.add(b, b, je[1][1]);
    }
    Ok((res, jac))
}
