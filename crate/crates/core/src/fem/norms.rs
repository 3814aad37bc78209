use super::assembly::p1_gradients;
use super::{bary_point, EDGE_QUAD, TRI_QUAD, TRI_QUAD7};
use crate::geometry::{EdgeTag, TriMesh};

/// `‖u‖_{L²}` (the 3-point rule is exact for P1 squares).
pub fn norm_l2(mesh: &TriMesh, u: &[f64]) -> f64 {
    let mut s = 0.0;
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let w = mesh.triangle_area(t) / 3.0;
        for l in &TRI_QUAD {
            let v = l[0] * u[tri[0]] + l[1] * u[tri[1]] + l[2] * u[tri[2]];
            s += w * v * v;
        }
    }
    s.sqrt()
}

/// `(∫|∇u|²)^{1/2}`.
pub fn h1_seminorm(mesh: &TriMesh, u: &[f64]) -> f64 {
    let mut s = 0.0;
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let (g, area) = p1_gradients(&mesh.triangle_coords(t));
        let mut d = [0.0; 2];
        for k in 0..3 {
            d[0] += u[tri[k]] * g[k][0];
            d[1] += u[tri[k]] * g[k][1];
        }
        s += area * (d[0] * d[0] + d[1] * d[1]);
    }
    s.sqrt()
}

pub fn norm_h1(mesh: &TriMesh, u: &[f64]) -> f64 {
    norm_l2(mesh, u).hypot(h1_seminorm(mesh, u))
}

/// `scale·∫_{tags} u² ds`.
pub fn trace_norm_sq(mesh: &TriMesh, u: &[f64], tags: &[EdgeTag], scale: f64) -> f64 {
    let mut s = 0.0;
    for e in mesh.edge_tags.iter().filter(|e| tags.contains(&e.tag)) {
        let w = 0.5 * mesh.edge_length(e);
        for q in EDGE_QUAD {
            let v = (1.0 - q) * u[e.v[0]] + q * u[e.v[1]];
            s += w * v * v;
        }
    }
    scale * s
}

/// `‖u_h − u‖_{L²}` against a smooth reference, with the degree-5 rule.
pub fn l2_error_against(mesh: &TriMesh, u: &[f64], exact: impl Fn([f64; 2]) -> f64) -> f64 {
    let mut s = 0.0;
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let p = mesh.triangle_coords(t);
        let area = mesh.triangle_area(t);
        for (l, w) in &TRI_QUAD7 {
            let uh = l[0] * u[tri[0]] + l[1] * u[tri[1]] + l[2] * u[tri[2]];
            let e = uh - exact(bary_point(&p, *l));
            s += w * area * e * e;
        }
    }
    s.sqrt()
}

/// `|u_h − u|_{H¹}` against a smooth reference gradient, with the degree-5 rule.
pub fn h1_error_against(mesh: &TriMesh, u: &[f64], grad: impl Fn([f64; 2]) -> [f64; 2]) -> f64 {
    let mut s = 0.0;
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let p = mesh.triangle_coords(t);
        let (g, area) = p1_gradients(&p);
        let mut d = [0.0; 2];
        for k in 0..3 {
            d[0] += u[tri[k]] * g[k][0];
            d[1] += u[tri[k]] * g[k][1];
        }
        for (l, w) in &TRI_QUAD7 {
            let r = grad(bary_point(&p, *l));
            s += w * area * ((d[0] - r[0]).powi(2) + (d[1] - r[1]).powi(2));
        }
    }
    s.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{
        apply_constraints, assemble_stiffness, assemble_volume_linear, solve_cg, Coefficient,
        DofMap, FemField, ScalarField,
    };
    use crate::geometry::{mesh_unit_cell, HoleSpec, Phase, UnitCellGeometry};
    use std::f64::consts::PI;

    const SIDES: [EdgeTag; 4] = [
        EdgeTag::SideLeft,
        EdgeTag::SideRight,
        EdgeTag::SideBottom,
        EdgeTag::SideTop,
    ];

    #[test]
    fn constant_field() {
        let cell =
            UnitCellGeometry::new(vec![HoleSpec::new([0.5, 0.5], 0.25, Phase::One)], 32).unwrap();
        let mesh = mesh_unit_cell(&cell, 1.0 / 8.0).unwrap();
        let u = vec![3.0; mesh.num_vertices()];
        assert!((norm_l2(&mesh, &u) - 3.0 * mesh.area().sqrt()).abs() < 1e-13);
        assert!(h1_seminorm(&mesh, &u) < 1e-12);
        let p = mesh.tagged_length(EdgeTag::HolePhase1);
        assert!(
            (trace_norm_sq(&mesh, &u, &[EdgeTag::HolePhase1], 0.5) - 0.5 * 9.0 * p).abs() < 1e-12
        );
    }

    #[test]
    fn coordinate_field() {
        let mesh = TriMesh::unit_square(8);
        let u = FemField::interpolate(&mesh, |x| x[0]).values;
        assert!((norm_l2(&mesh, &u) - (1.0f64 / 3.0).sqrt()).abs() < 1e-13);
        assert!((h1_seminorm(&mesh, &u) - 1.0).abs() < 1e-13);
    }

    /// Solves −Δu = f with u = 0 on the square.
    fn poisson(n: usize, f: ScalarField) -> (TriMesh, Vec<f64>) {
        let mesh = TriMesh::unit_square(n);
        let k = assemble_stiffness(&mesh, &Coefficient::Identity, 1.0).unwrap();
        let b = assemble_volume_linear(&mesh, |x| f.eval(x));
        let dofs = DofMap::dirichlet(&mesh, &SIDES);
        let sys = apply_constraints(&k, &b, &dofs);
        let sol = solve_cg(&sys.matrix, &sys.rhs, 1e-13, 0).unwrap();
        let u = dofs.expand(&sol.x);
        (mesh, u)
    }

    #[test]
    fn unit_load_center_value() {
        // Series solution of −Δu = 1: u(½,½) = 0.07367135…
        let (mesh, u) = poisson(64, ScalarField::Constant { value: 1.0 });
        let c = mesh
            .vertices
            .iter()
            .position(|v| (v[0] - 0.5).abs() < 1e-12 && (v[1] - 0.5).abs() < 1e-12)
            .unwrap();
        let series: f64 = (0..200)
            .map(|k| {
                let n = (2 * k + 1) as f64;
                // 1D expansion in x plus exact cosh correction in y.
                let s = if k % 2 == 0 { 1.0 } else { -1.0 };
                s * 4.0 / (PI * n).powi(3) * (1.0 - 1.0 / (PI * n / 2.0).cosh())
            })
            .sum();
        assert!((series - 0.073671).abs() < 1e-6, "{series}");
        assert!((u[c] - series).abs() < 1e-4, "{}", u[c]);
        let max = u.iter().fold(0.0f64, |m, &v| m.max(v));
        assert_eq!(max, u[c]);
    }

    #[test]
    fn manufactured_rates() {
        let exact = |x: [f64; 2]| (PI * x[0]).sin() * (PI * x[1]).sin();
        let grad = |x: [f64; 2]| {
            [
                PI * (PI * x[0]).cos() * (PI * x[1]).sin(),
                PI * (PI * x[0]).sin() * (PI * x[1]).cos(),
            ]
        };
        let mut errs = Vec::new();
        for n in [8, 16, 32, 64] {
            let (mesh, u) = poisson(n, ScalarField::PoissonMms { amplitude: 1.0 });
            errs.push((
                l2_error_against(&mesh, &u, exact),
                h1_error_against(&mesh, &u, grad),
            ));
        }
        for w in errs.windows(2) {
            let rl2 = (w[0].0 / w[1].0).log2();
            let rh1 = (w[0].1 / w[1].1).log2();
            assert!((1.9..=2.1).contains(&rl2), "L2 rate {rl2}");
            assert!((0.9..=1.1).contains(&rh1), "H1 rate {rh1}");
        }
    }
}
