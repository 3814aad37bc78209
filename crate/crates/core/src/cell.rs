//! Periodic cell problems on the perforated unit cell and the homogenized tensor.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{
    apply_constraints, assemble_boundary_linear, assemble_stiffness, assemble_volume_linear,
    element_coefficient, p1_gradients, solve_cg, Coefficient, DofMap, FemField, SparseMatrix,
};
use crate::geometry::{CellMeasures, PerforatedDomainMesh, Phase, TriMesh, UnitCellGeometry};

/// Cell solves need a tight tolerance so that the two tensor forms agree to 1e-8.
pub const CELL_CG_TOL: f64 = 1e-13;

/// Consistency threshold for singular periodic systems, relative to `‖b‖`.
pub const RHS_CONSISTENCY_TOL: f64 = 1e-9;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CellSolution {
    pub cell: UnitCellGeometry,
    pub mesh: TriMesh,
    pub coefficient: Coefficient,
    /// Measures taken from the polygonal mesh itself.
    pub measures: CellMeasures,
    /// Correctors `T₁, T₂`.
    pub t: [FemField; 2],
    /// Auxiliary potentials `ψ⁽¹⁾, ψ⁽²⁾`.
    pub psi: [FemField; 2],
}

/// `|Q₀|`, `|S⁽ᵐ⁾|` and `q_m` measured on the mesh.
pub fn mesh_measures(mesh: &TriMesh) -> CellMeasures {
    CellMeasures::from_area_and_perimeters(
        mesh.area(),
        [
            mesh.tagged_length(Phase::One.hole_tag()),
            mesh.tagged_length(Phase::Two.hole_tag()),
        ],
    )
}

/// Periodic solver for one cell mesh: the reduced stiffness is built once.
struct PeriodicSystem<'a> {
    mesh: &'a TriMesh,
    dofs: DofMap,
    matrix: SparseMatrix,
}

impl<'a> PeriodicSystem<'a> {
    fn new(mesh: &'a TriMesh, coeff: &Coefficient) -> Result<Self> {
        let k = assemble_stiffness(mesh, coeff, 1.0)?;
        let dofs = DofMap::periodic(mesh)?;
        let sys = apply_constraints(&k, &vec![0.0; mesh.num_vertices()], &dofs);
        Ok(Self {
            mesh,
            dofs,
            matrix: sys.matrix,
        })
    }

    /// Solves `K x = b` for a vertex-space load with zero total, returning the
    /// zero-mean solution. `magnitude` is the size of the terms the load was
    /// summed from; a load that cancels to roundoff against it is treated as zero.
    fn solve(&self, load: &[f64], magnitude: f64, consistency_tol: f64) -> Result<FemField> {
        let mut b = self.dofs.fold(load);
        let n = b.len() as f64;
        let total: f64 = b.iter().sum();
        let norm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm <= 1e-13 * magnitude {
            return Ok(FemField::zeros(self.mesh.num_vertices()));
        }
        if total.abs() > consistency_tol * norm {
            return Err(Error::InconsistentRhs {
                mean: total / n,
                norm,
            });
        }
        let shift = total / n;
        b.iter_mut().for_each(|v| *v -= shift);
        let out = solve_cg(&self.matrix, &b, CELL_CG_TOL, 0)?;
        let mut field = FemField::new(self.dofs.expand(&out.x));
        let mean = field.mean(self.mesh);
        field.values.iter_mut().for_each(|v| *v -= mean);
        Ok(field)
    }
}

/// Load `−∫ a e_l·∇φ_i` of the corrector problem, with the summed term magnitude.
fn corrector_load(mesh: &TriMesh, coeff: &Coefficient, l: usize) -> (Vec<f64>, f64) {
    let mut b = vec![0.0; mesh.num_vertices()];
    let mut magnitude = 0.0;
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let p = mesh.triangle_coords(t);
        let (g, area) = p1_gradients(&p);
        let a = element_coefficient(&p, coeff, 1.0);
        let col = [a[0][l], a[1][l]];
        for k in 0..3 {
            let v = area * (col[0] * g[k][0] + col[1] * g[k][1]);
            b[tri[k]] -= v;
            magnitude += v.abs();
        }
    }
    (b, magnitude)
}

/// Correctors `T₁, T₂`: `∫ a∇T_l·∇φ = −∫ a e_l·∇φ` for periodic `φ`, zero mean.
pub fn solve_corrector_cells(mesh: &TriMesh, coeff: &Coefficient) -> Result<[FemField; 2]> {
    let sys = PeriodicSystem::new(mesh, coeff)?;
    let solve_dir = |l: usize| {
        let (load, magnitude) = corrector_load(mesh, coeff, l);
        sys.solve(&load, magnitude, RHS_CONSISTENCY_TOL)
    };
    let (t1, t2) = rayon::join(|| solve_dir(0), || solve_dir(1));
    Ok([t1?, t2?])
}

/// Auxiliary potentials: `∫ a∇ψ⁽ᵐ⁾·∇φ = −q_m∫φ + ∫_{S⁽ᵐ⁾}φ`, zero mean.
/// A phase without holes gets the zero field.
pub fn solve_auxiliary_cells(
    mesh: &TriMesh,
    coeff: &Coefficient,
    q: [f64; 2],
) -> Result<[FemField; 2]> {
    let sys = PeriodicSystem::new(mesh, coeff)?;
    let solve_phase = |phase: Phase| -> Result<FemField> {
        let m = phase.index();
        if !mesh.has_tag(phase.hole_tag()) {
            return Ok(FemField::zeros(mesh.num_vertices()));
        }
        let vol = assemble_volume_linear(mesh, |_| 1.0);
        let surf = assemble_boundary_linear(mesh, phase.hole_tag(), |_| 1.0)?;
        let load: Vec<f64> = vol.iter().zip(&surf).map(|(v, s)| s - q[m] * v).collect();
        // Relative to the size of either data term, as in the compatibility condition.
        let scale = surf.iter().sum::<f64>();
        let total: f64 = load.iter().sum();
        if total.abs() > 1e-8 * scale {
            return Err(Error::InconsistentRhs {
                mean: total / load.len() as f64,
                norm: scale,
            });
        }
        sys.solve(&load, 2.0 * scale, f64::INFINITY)
    };
    let (p1, p2) = rayon::join(|| solve_phase(Phase::One), || solve_phase(Phase::Two));
    Ok([p1?, p2?])
}

/// All four cell problems on `mesh`, with `q_m` taken from the mesh.
pub fn solve_cell(
    cell: &UnitCellGeometry,
    mesh: &TriMesh,
    coeff: &Coefficient,
) -> Result<CellSolution> {
    let measures = mesh_measures(mesh);
    let (t, psi) = rayon::join(
        || solve_corrector_cells(mesh, coeff),
        || solve_auxiliary_cells(mesh, coeff, measures.q),
    );
    Ok(CellSolution {
        cell: cell.clone(),
        mesh: mesh.clone(),
        coefficient: coeff.clone(),
        measures,
        t: t?,
        psi: psi?,
    })
}

/// Lemma-1 defect `|−q_m|Q₀| + |S⁽ᵐ⁾||` per phase.
pub fn compatibility_defect(measures: &CellMeasures) -> [f64; 2] {
    [0, 1].map(|m| (measures.perimeter[m] - measures.q[m] * measures.area_q0).abs())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorProvenance {
    pub formula: String,
    pub mesh_size_h: f64,
    pub segments: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HomogenizedTensor {
    /// Symmetric part of the direct form `∫ a_ij + a_ik ∂_k T_j`.
    pub matrix: [[f64; 2]; 2],
    /// Direct form before symmetrization.
    pub direct: [[f64; 2]; 2],
    /// Energy form `∫ (e_i + ∇T_i)·a(e_j + ∇T_j)`.
    pub energy: [[f64; 2]; 2],
    pub provenance: TensorProvenance,
}

impl HomogenizedTensor {
    pub fn eigenvalues(&self) -> (f64, f64) {
        crate::fem::sym_eigenvalues(self.matrix)
    }

    pub fn norm(&self) -> f64 {
        self.matrix
            .iter()
            .flatten()
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }
}

fn tensor_forms(sol: &CellSolution) -> ([[f64; 2]; 2], [[f64; 2]; 2]) {
    let mesh = &sol.mesh;
    let mut direct = [[0.0; 2]; 2];
    let mut energy = [[0.0; 2]; 2];
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let p = mesh.triangle_coords(t);
        let (g, area) = p1_gradients(&p);
        let a = element_coefficient(&p, &sol.coefficient, 1.0);
        let mut grad_t = [[0.0; 2]; 2];
        for l in 0..2 {
            for k in 0..3 {
                grad_t[l][0] += sol.t[l].values[tri[k]] * g[k][0];
                grad_t[l][1] += sol.t[l].values[tri[k]] * g[k][1];
            }
        }
        for i in 0..2 {
            for j in 0..2 {
                direct[i][j] += area * (a[i][j] + a[i][0] * grad_t[j][0] + a[i][1] * grad_t[j][1]);
                let ui = [
                    (i == 0) as u8 as f64 + grad_t[i][0],
                    (i == 1) as u8 as f64 + grad_t[i][1],
                ];
                let uj = [
                    (j == 0) as u8 as f64 + grad_t[j][0],
                    (j == 1) as u8 as f64 + grad_t[j][1],
                ];
                let auj = [
                    a[0][0] * uj[0] + a[0][1] * uj[1],
                    a[1][0] * uj[0] + a[1][1] * uj[1],
                ];
                energy[i][j] += area * (ui[0] * auj[0] + ui[1] * auj[1]);
            }
        }
    }
    (direct, energy)
}

/// Homogenized tensor from the corrector fields (integral convention over `Q₀`).
pub fn homogenized_tensor(sol: &CellSolution) -> Result<HomogenizedTensor> {
    let (direct, energy) = tensor_forms(sol);
    let off = 0.5 * (direct[0][1] + direct[1][0]);
    let tensor = HomogenizedTensor {
        matrix: [[direct[0][0], off], [off, direct[1][1]]],
        direct,
        energy,
        provenance: TensorProvenance {
            formula: "direct form, symmetrized".into(),
            mesh_size_h: sol.mesh.mesh_size_h,
            segments: sol.cell.boundary_segments_per_hole,
        },
    };
    let asym = (direct[0][1] - direct[1][0]).abs();
    if asym > 1e-10 * tensor.norm() {
        return Err(Error::Tensor(format!(
            "symmetry defect {asym:e} exceeds 1e-10·‖â‖"
        )));
    }
    Ok(tensor)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorReport {
    /// Largest entrywise `|direct − energy| / ‖â‖`.
    pub form_defect: f64,
    /// `|â₁₂ − â₂₁| / ‖â‖` of the direct form.
    pub symmetry_defect: f64,
    pub eigenvalues: (f64, f64),
}

impl TensorReport {
    pub fn passed(&self) -> bool {
        self.form_defect <= 1e-8 && self.symmetry_defect <= 1e-10 && self.eigenvalues.0 > 0.0
    }
}

pub fn verify_tensor(tensor: &HomogenizedTensor) -> TensorReport {
    let norm = tensor.norm().max(f64::MIN_POSITIVE);
    let mut form_defect: f64 = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            form_defect = form_defect.max((tensor.direct[i][j] - tensor.energy[i][j]).abs() / norm);
        }
    }
    TensorReport {
        form_defect,
        symmetry_defect: (tensor.direct[0][1] - tensor.direct[1][0]).abs() / norm,
        eigenvalues: tensor.eigenvalues(),
    }
}

/// `∫_{Q₀} a dξ`, the arithmetic (Voigt) upper bound for `â`.
pub fn voigt_bound(mesh: &TriMesh, coeff: &Coefficient) -> [[f64; 2]; 2] {
    let mut m = [[0.0; 2]; 2];
    for t in 0..mesh.num_triangles() {
        let p = mesh.triangle_coords(t);
        let area = mesh.triangle_area(t);
        let a = element_coefficient(&p, coeff, 1.0);
        for i in 0..2 {
            for j in 0..2 {
                m[i][j] += area * a[i][j];
            }
        }
    }
    m
}

/// Terms of the trace identity for one phase on a tiled domain:
/// `ε∫_{Ξ⁽ᵐ⁾} φ ds`, `ε∫ a∇_ξψ⁽ᵐ⁾(x/ε)·∇φ dx` and `q_m ∫_{Ω_ε} φ dx`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceIdentity {
    pub boundary: f64,
    pub flux: f64,
    pub volume: f64,
}

impl TraceIdentity {
    pub fn residual(&self) -> f64 {
        (self.boundary - self.flux - self.volume).abs()
    }
}

/// Evaluates the trace identity for the P1 field `phi` on `domain`, which must
/// be tiled from `sol.mesh`. The auxiliary potential is taken node-exactly
/// from the cell solution.
pub fn trace_identity(
    sol: &CellSolution,
    domain: &PerforatedDomainMesh,
    phase: Phase,
    phi: &[f64],
) -> Result<TraceIdentity> {
    if domain.cell_fingerprint != sol.mesh.fingerprint() {
        return Err(Error::MeshMismatch(
            "domain was not tiled from this cell mesh".into(),
        ));
    }
    let mesh = &domain.mesh;
    if phi.len() != mesh.num_vertices() {
        return Err(Error::MeshMismatch(format!(
            "field has {} values for {} vertices",
            phi.len(),
            mesh.num_vertices()
        )));
    }
    let eps = domain.epsilon;
    let tag = phase.hole_tag();
    let boundary: f64 = mesh
        .edges_with_tag(tag)
        .map(|e| 0.5 * mesh.edge_length(e) * (phi[e.v[0]] + phi[e.v[1]]))
        .sum();
    let psi: Vec<f64> = domain
        .source_vertex
        .iter()
        .map(|&s| sol.psi[phase.index()].values[s])
        .collect();
    // ∇_x ψ(x/ε) = ε⁻¹∇_ξψ, so ε∫a∇_ξψ·∇φ = ε²·φᵀKψ.
    let k = assemble_stiffness(mesh, &sol.coefficient, eps)?;
    let flux = eps * eps * k.bilinear(phi, &psi);
    let integral: f64 = mesh
        .triangles
        .iter()
        .enumerate()
        .map(|(t, tri)| mesh.triangle_area(t) * (phi[tri[0]] + phi[tri[1]] + phi[tri[2]]) / 3.0)
        .sum();
    Ok(TraceIdentity {
        boundary: eps * boundary,
        flux,
        volume: sol.measures.q[phase.index()] * integral,
    })
}
