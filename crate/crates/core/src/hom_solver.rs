//! Homogenized problem on the unperforated square: constant tensor `â`,
//! volume nonlinearity `Σ|S⁽ᵐ⁾| κ_m(v₀)`, structured P1 mesh.

use serde::{Deserialize, Serialize};

use crate::cell::HomogenizedTensor;
use crate::error::{Error, Result};
use crate::fem::{
    apply_constraints, assemble_stiffness, assemble_volume_linear, assemble_volume_nonlinear,
    p1_gradients, sym_eigenvalues, Coefficient, DofMap, FemField, ScalarField, SparseMatrix,
    TRI_QUAD,
};
use crate::fine_solver::{newton, NonlinearPhase};
use crate::geometry::{CellMeasures, EdgeTag, TriMesh};

const SIDES: [EdgeTag; 4] = [
    EdgeTag::SideLeft,
    EdgeTag::SideRight,
    EdgeTag::SideBottom,
    EdgeTag::SideTop,
];

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HomProblem {
    pub tensor: [[f64; 2]; 2],
    pub measures: CellMeasures,
    pub phases: [NonlinearPhase; 2],
    pub f0: ScalarField,
    pub g0: [ScalarField; 2],
}

impl HomProblem {
    pub fn new(
        tensor: &HomogenizedTensor,
        measures: CellMeasures,
        phases: [NonlinearPhase; 2],
        f0: ScalarField,
        g0: [ScalarField; 2],
    ) -> Self {
        HomProblem {
            tensor: tensor.matrix,
            measures,
            phases,
            f0,
            g0,
        }
    }

    fn validate(&self) -> Result<()> {
        let t = self.tensor;
        let (l1, _) = sym_eigenvalues(t);
        if (t[0][1] - t[1][0]).abs() > 1e-10 * (t[0][0].abs() + t[1][1].abs()) || !(l1 > 0.0) {
            return Err(Error::Tensor(format!(
                "homogenized tensor {t:?} is not symmetric positive definite"
            )));
        }
        Ok(())
    }

    /// Phases with a nonempty hole boundary, with their weights `|S⁽ᵐ⁾|`.
    fn active_phases(&self) -> Vec<(f64, NonlinearPhase, ScalarField)> {
        (0..2)
            .filter(|&m| self.measures.perimeter[m] > 0.0)
            .map(|m| (self.measures.perimeter[m], self.phases[m], self.g0[m]))
            .collect()
    }

    fn kappa(&self, t: f64) -> f64 {
        self.active_phases()
            .iter()
            .map(|(s, p, _)| s * p.kappa(t))
            .sum()
    }

    fn kappa_prime(&self, t: f64) -> f64 {
        self.active_phases()
            .iter()
            .map(|(s, p, _)| s * p.kappa_prime(t))
            .sum()
    }

    /// `|Q₀| f₀ + Σ|S⁽ᵐ⁾| g⁽ᵐ⁾₀`.
    fn source(&self, x: [f64; 2]) -> f64 {
        let g: f64 = self
            .active_phases()
            .iter()
            .map(|(s, _, g)| s * g.eval(x))
            .sum();
        self.measures.area_q0 * self.f0.eval(x) + g
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HomSolution {
    /// Subdivisions per side of the structured mesh.
    pub n: usize,
    pub v0: FemField,
    /// Recovered nodal gradient components.
    pub grad: [FemField; 2],
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub energy: f64,
}

impl HomSolution {
    pub fn mesh(&self) -> TriMesh {
        TriMesh::unit_square(self.n)
    }

    pub fn h(&self) -> f64 {
        1.0 / self.n as f64
    }

    /// Structured-mesh cell and local coordinates of `x`.
    fn locate(&self, x: [f64; 2]) -> ([usize; 4], f64, f64) {
        let n = self.n;
        let nf = n as f64;
        let cell = |c: f64| ((c * nf).floor().max(0.0) as usize).min(n - 1);
        let (i, j) = (cell(x[0]), cell(x[1]));
        let s = x[0] * nf - i as f64;
        let t = x[1] * nf - j as f64;
        let idx = |i: usize, j: usize| j * (n + 1) + i;
        (
            [idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1)],
            s,
            t,
        )
    }

    fn interpolate(&self, values: &[f64], x: [f64; 2]) -> f64 {
        let ([a, b, c, d], s, t) = self.locate(x);
        if s >= t {
            values[a] + s * (values[b] - values[a]) + t * (values[c] - values[b])
        } else {
            values[a] + s * (values[c] - values[d]) + t * (values[d] - values[a])
        }
    }

    /// P1 value of `v₀` at `x`.
    pub fn value_at(&self, x: [f64; 2]) -> f64 {
        self.interpolate(&self.v0.values, x)
    }

    /// P1 interpolant of the recovered gradient at `x`.
    pub fn recovered_gradient_at(&self, x: [f64; 2]) -> [f64; 2] {
        [
            self.interpolate(&self.grad[0].values, x),
            self.interpolate(&self.grad[1].values, x),
        ]
    }

    /// Elementwise gradient of `v₀` on the triangle containing `x`.
    pub fn element_gradient_at(&self, x: [f64; 2]) -> [f64; 2] {
        let ([a, b, c, d], s, t) = self.locate(x);
        let v = &self.v0.values;
        let nf = self.n as f64;
        if s >= t {
            [nf * (v[b] - v[a]), nf * (v[c] - v[b])]
        } else {
            [nf * (v[c] - v[d]), nf * (v[d] - v[a])]
        }
    }
}

struct HomSystem {
    mesh: TriMesh,
    stiffness: SparseMatrix,
    load: Vec<f64>,
    dofs: DofMap,
}

fn system(problem: &HomProblem, n: usize) -> Result<HomSystem> {
    problem.validate()?;
    let mesh = TriMesh::unit_square(n);
    let stiffness = assemble_stiffness(
        &mesh,
        &Coefficient::Constant {
            matrix: problem.tensor,
        },
        1.0,
    )?;
    let load = assemble_volume_linear(&mesh, |x| problem.source(x));
    let dofs = DofMap::dirichlet(&mesh, &SIDES);
    Ok(HomSystem {
        mesh,
        stiffness,
        load,
        dofs,
    })
}

/// Structured subdivisions for a requested mesh size.
pub fn subdivisions_for(mesh_h: f64) -> usize {
    ((1.0 / mesh_h) - 1e-9).ceil().max(1.0) as usize
}

pub fn solve_homogenized(
    problem: &HomProblem,
    mesh_h: f64,
    newton_tol: f64,
    max_newton: usize,
) -> Result<HomSolution> {
    solve_homogenized_from(
        problem,
        subdivisions_for(mesh_h),
        None,
        newton_tol,
        max_newton,
    )
}

/// Solves on `unit_square(n)` starting from `initial` (vertex values).
pub fn solve_homogenized_from(
    problem: &HomProblem,
    n: usize,
    initial: Option<&[f64]>,
    newton_tol: f64,
    max_newton: usize,
) -> Result<HomSolution> {
    let sys = system(problem, n)?;
    let start = initial.map_or_else(|| vec![0.0; sys.dofs.num_free], |v| sys.dofs.restrict(v));
    let zero_rhs = vec![0.0; sys.mesh.num_vertices()];
    let nonlinear = !problem.active_phases().is_empty();
    let (x, trace, iterations) = newton(start, newton_tol, max_newton, |x, with_jac| {
        let u = sys.dofs.expand(x);
        let mut r = sys.stiffness.mul_vec(&u);
        r.iter_mut().zip(&sys.load).for_each(|(r, b)| *r -= b);
        let mut jac = with_jac.then(|| sys.stiffness.clone());
        if nonlinear {
            let (rk, jk) = assemble_volume_nonlinear(
                &sys.mesh,
                &u,
                |t| problem.kappa(t),
                |t| problem.kappa_prime(t),
            );
            r.iter_mut().zip(&rk).for_each(|(r, k)| *r += k);
            if let Some(j) = jac.as_mut() {
                *j = j.add_scaled(&jk, 1.0);
            }
        }
        Ok((
            sys.dofs.fold(&r),
            jac.map(|j| apply_constraints(&j, &zero_rhs, &sys.dofs).matrix),
        ))
    })?;
    let v0 = FemField::new(sys.dofs.expand(&x));
    let energy = energy_with(problem, &sys.mesh, &sys.stiffness, &v0.values);
    let grad = recover_gradient(&sys.mesh, &v0.values);
    Ok(HomSolution {
        n,
        v0,
        grad,
        trace,
        iterations,
        energy,
    })
}

fn energy_with(problem: &HomProblem, mesh: &TriMesh, stiffness: &SparseMatrix, v: &[f64]) -> f64 {
    let mut s = 0.0;
    if !problem.active_phases().is_empty() {
        for (t, tri) in mesh.triangles.iter().enumerate() {
            let w = mesh.triangle_area(t) / 3.0;
            for l in &TRI_QUAD {
                let vq = l[0] * v[tri[0]] + l[1] * v[tri[1]] + l[2] * v[tri[2]];
                s += w * problem.kappa(vq) * vq;
            }
        }
    }
    stiffness.bilinear(v, v) + s
}

/// `E₀(v₀) = ∫ â∇v₀·∇v₀ + Σ_m |S⁽ᵐ⁾| ∫ κ_m(v₀) v₀`.
pub fn energy_integral_hom(solution: &HomSolution, problem: &HomProblem) -> Result<f64> {
    let sys = system(problem, solution.n)?;
    Ok(energy_with(
        problem,
        &sys.mesh,
        &sys.stiffness,
        &solution.v0.values,
    ))
}

/// `|Q₀|∫f₀v + Σ|S⁽ᵐ⁾|∫g⁽ᵐ⁾₀v`.
pub fn load_functional_hom(solution: &HomSolution, problem: &HomProblem) -> Result<f64> {
    let sys = system(problem, solution.n)?;
    Ok(sys
        .load
        .iter()
        .zip(&solution.v0.values)
        .map(|(b, v)| b * v)
        .sum())
}

/// Area-weighted average of the adjacent element gradients at each vertex.
pub fn recover_gradient(mesh: &TriMesh, v: &[f64]) -> [FemField; 2] {
    let nv = mesh.num_vertices();
    let mut gx = vec![0.0; nv];
    let mut gy = vec![0.0; nv];
    let mut w = vec![0.0; nv];
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let (g, area) = p1_gradients(&mesh.triangle_coords(t));
        let mut d = [0.0; 2];
        for k in 0..3 {
            d[0] += v[tri[k]] * g[k][0];
            d[1] += v[tri[k]] * g[k][1];
        }
        for &i in tri {
            gx[i] += area * d[0];
            gy[i] += area * d[1];
            w[i] += area;
        }
    }
    for i in 0..nv {
        if w[i] > 0.0 {
            gx[i] /= w[i];
            gy[i] /= w[i];
        }
    }
    [FemField::new(gx), FemField::new(gy)]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{dense_solve, l2_error_against};
    use crate::fine_solver::{DEFAULT_MAX_NEWTON, DEFAULT_NEWTON_TOL};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    const I: [[f64; 2]; 2] = [[1.0, 0.0], [0.0, 1.0]];

    fn perforated_problem(phase: NonlinearPhase) -> HomProblem {
        HomProblem {
            tensor: [[0.8, 0.05], [0.05, 0.7]],
            measures: CellMeasures::from_area_and_perimeters(0.78, [1.2, 0.9]),
            phases: [phase; 2],
            f0: ScalarField::Constant { value: 1.0 },
            g0: [
                ScalarField::SineBump { amplitude: 1.0 },
                ScalarField::SineBump { amplitude: -1.0 },
            ],
        }
    }

    const SOFT: NonlinearPhase = NonlinearPhase::SoftSine { c1: 0.7, c2: 1.3 };

    #[test]
    fn zero_data() {
        let mut p = perforated_problem(SOFT);
        p.f0 = ScalarField::Zero;
        p.g0 = [ScalarField::Zero; 2];
        let s = solve_homogenized(&p, 1.0 / 8.0, DEFAULT_NEWTON_TOL, DEFAULT_MAX_NEWTON).unwrap();
        assert_eq!(s.v0.max_abs(), 0.0);
        assert_eq!(s.energy, 0.0);
    }

    #[test]
    fn manufactured_poisson() {
        let p = HomProblem {
            tensor: I,
            measures: CellMeasures::from_area_and_perimeters(1.0, [0.0, 0.0]),
            phases: [NonlinearPhase::identity(); 2],
            f0: ScalarField::PoissonMms { amplitude: 1.0 },
            g0: [ScalarField::Zero; 2],
        };
        let exact = |x: [f64; 2]| (PI * x[0]).sin() * (PI * x[1]).sin();
        let errs: Vec<f64> = [8, 16, 32]
            .iter()
            .map(|&n| {
                let s = solve_homogenized_from(&p, n, None, DEFAULT_NEWTON_TOL, DEFAULT_MAX_NEWTON)
                    .unwrap();
                l2_error_against(&s.mesh(), &s.v0.values, exact)
            })
            .collect();
        for w in errs.windows(2) {
            let r = (w[0] / w[1]).log2();
            assert!((1.9..=2.1).contains(&r), "{r}");
        }
    }

    #[test]
    fn linear_kappa_matches_dense_oracle() {
        let p = perforated_problem(NonlinearPhase::Linear { a: 1.5, b: 0.0 });
        let n = 12;
        let s =
            solve_homogenized_from(&p, n, None, DEFAULT_NEWTON_TOL, DEFAULT_MAX_NEWTON).unwrap();
        assert_eq!(s.iterations, 1);
        // Oracle: K + (Σ|S|·a) M assembled independently, dense elimination.
        let mesh = TriMesh::unit_square(n);
        let k =
            assemble_stiffness(&mesh, &Coefficient::Constant { matrix: p.tensor }, 1.0).unwrap();
        let m = crate::fem::assemble_mass(&mesh).unwrap();
        let a = k.add_scaled(&m, 1.5 * (1.2 + 0.9));
        let b = assemble_volume_linear(&mesh, |x| {
            0.78 + 1.2 * p.g0[0].eval(x) + 0.9 * p.g0[1].eval(x)
        });
        let dofs = DofMap::dirichlet(&mesh, &SIDES);
        assert!(dofs.num_free <= 400);
        let red = apply_constraints(&a, &b, &dofs);
        let x = dense_solve(red.matrix.to_dense(), red.rhs.clone());
        let oracle = dofs.expand(&x);
        let diff = oracle
            .iter()
            .zip(&s.v0.values)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(diff < 1e-8, "{diff}");
    }

    #[test]
    fn energy_identity_and_scaling() {
        let p = perforated_problem(NonlinearPhase::identity());
        let s = solve_homogenized(&p, 1.0 / 16.0, DEFAULT_NEWTON_TOL, DEFAULT_MAX_NEWTON).unwrap();
        let load = load_functional_hom(&s, &p).unwrap();
        assert!((s.energy - load).abs() <= 1e-9 * load.abs());
        assert_eq!(energy_integral_hom(&s, &p).unwrap(), s.energy);
        let mut q = p.clone();
        q.f0 = q.f0.scaled(2.0);
        q.g0 = [q.g0[0].scaled(2.0), q.g0[1].scaled(2.0)];
        let d = solve_homogenized(&q, 1.0 / 16.0, DEFAULT_NEWTON_TOL, DEFAULT_MAX_NEWTON).unwrap();
        for (a, b) in s.v0.values.iter().zip(&d.v0.values) {
            assert!((2.0 * a - b).abs() < 1e-9);
        }
        assert!((d.energy - 4.0 * s.energy).abs() < 1e-8 * d.energy);
    }

    #[test]
    fn soft_sine_uniqueness() {
        let p = perforated_problem(SOFT);
        let n = 16;
        let a =
            solve_homogenized_from(&p, n, None, DEFAULT_NEWTON_TOL, DEFAULT_MAX_NEWTON).unwrap();
        assert!(a.iterations <= 8);
        let nv = (n + 1) * (n + 1);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let random: Vec<f64> = (0..nv).map(|_| rng.gen_range(-1.0..1.0)).collect();
        for start in [vec![1.0; nv], random] {
            let b =
                solve_homogenized_from(&p, n, Some(&start), DEFAULT_NEWTON_TOL, DEFAULT_MAX_NEWTON)
                    .unwrap();
            let diff =
                a.v0.values
                    .iter()
                    .zip(&b.v0.values)
                    .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
            assert!(diff <= 10.0 * DEFAULT_NEWTON_TOL * a.v0.max_abs(), "{diff}");
        }
    }

    #[test]
    fn non_spd_tensor_rejected() {
        let mut p = perforated_problem(SOFT);
        p.tensor = [[1.0, 2.0], [2.0, 1.0]];
        assert!(matches!(
            solve_homogenized(&p, 0.25, 1e-10, 10),
            Err(Error::Tensor(_))
        ));
    }

    #[test]
    fn gradient_recovery() {
        let n = 16;
        let mesh = TriMesh::unit_square(n);
        let interior = |x: [f64; 2]| x.iter().all(|&c| c > 1e-9 && c < 1.0 - 1e-9);
        let lin: Vec<f64> = mesh.vertices.iter().map(|x| x[0]).collect();
        let g = recover_gradient(&mesh, &lin);
        for (i, x) in mesh.vertices.iter().enumerate() {
            assert!(
                (g[0].values[i] - 1.0).abs() < 1e-12 && g[1].values[i].abs() < 1e-12,
                "{x:?}"
            );
        }
        let c = recover_gradient(&mesh, &vec![2.5; mesh.num_vertices()]);
        assert!(c[0].max_abs() < 1e-12 && c[1].max_abs() < 1e-12);
        // x₁²: interior recovered ∂₁ = 2x₁ up to O(h²) (exact on this mesh).
        let sq: Vec<f64> = mesh.vertices.iter().map(|x| x[0] * x[0]).collect();
        let g = recover_gradient(&mesh, &sq);
        let h = 1.0 / n as f64;
        for (i, x) in mesh
            .vertices
            .iter()
            .enumerate()
            .filter(|(_, x)| interior(**x))
        {
            assert!((g[0].values[i] - 2.0 * x[0]).abs() <= h * h, "{x:?}");
        }
    }

    #[test]
    fn structured_evaluation() {
        let n = 8;
        let mesh = TriMesh::unit_square(n);
        let v: Vec<f64> = mesh
            .vertices
            .iter()
            .map(|x| 1.0 + 2.0 * x[0] - 3.0 * x[1])
            .collect();
        let grad = recover_gradient(&mesh, &v);
        let s = HomSolution {
            n,
            v0: FemField::new(v),
            grad,
            trace: vec![],
            iterations: 0,
            energy: 0.0,
        };
        for x in [
            [0.0, 0.0],
            [0.33, 0.71],
            [1.0, 1.0],
            [0.5, 0.125],
            [0.999, 0.001],
        ] {
            assert!((s.value_at(x) - (1.0 + 2.0 * x[0] - 3.0 * x[1])).abs() < 1e-13);
            let g = s.element_gradient_at(x);
            assert!((g[0] - 2.0).abs() < 1e-12 && (g[1] + 3.0).abs() < 1e-12);
            let r = s.recovered_gradient_at(x);
            assert!((r[0] - 2.0).abs() < 1e-12 && (r[1] + 3.0).abs() < 1e-12);
        }
    }
}
