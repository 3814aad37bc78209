use std::f64::consts::PI;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::assembly::p1_gradients;
use crate::geometry::TriMesh;

/// Builtin smooth data fields on the unit square.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScalarField {
    #[default]
    Zero,
    Constant {
        value: f64,
    },
    /// `c0 + c1·x₁ + c2·x₂`.
    Linear {
        c0: f64,
        c1: f64,
        c2: f64,
    },
    /// `amplitude·x₁x₂`.
    Bilinear {
        amplitude: f64,
    },
    /// `amplitude·sin πx₁ sin πx₂`.
    #[serde(alias = "sine-bump")]
    SineBump {
        amplitude: f64,
    },
    /// `amplitude·sin k₁πx₁ sin k₂πx₂`.
    #[serde(alias = "sine-mode")]
    SineMode {
        k1: u32,
        k2: u32,
        amplitude: f64,
    },
    /// `amplitude·16·x₁(1−x₁)x₂(1−x₂)`.
    Bubble {
        amplitude: f64,
    },
    /// `amplitude·2π² sin πx₁ sin πx₂`, the load whose Dirichlet Poisson
    /// solution is `amplitude·sin πx₁ sin πx₂`.
    #[serde(alias = "poisson-mms")]
    PoissonMms {
        amplitude: f64,
    },
}

impl ScalarField {
    pub fn eval(&self, x: [f64; 2]) -> f64 {
        match *self {
            ScalarField::Zero => 0.0,
            ScalarField::Constant { value } => value,
            ScalarField::Linear { c0, c1, c2 } => c0 + c1 * x[0] + c2 * x[1],
            ScalarField::Bilinear { amplitude } => amplitude * x[0] * x[1],
            ScalarField::SineBump { amplitude } => {
                amplitude * (PI * x[0]).sin() * (PI * x[1]).sin()
            }
            ScalarField::SineMode { k1, k2, amplitude } => {
                amplitude * (k1 as f64 * PI * x[0]).sin() * (k2 as f64 * PI * x[1]).sin()
            }
            ScalarField::Bubble { amplitude } => {
                amplitude * 16.0 * x[0] * (1.0 - x[0]) * x[1] * (1.0 - x[1])
            }
            ScalarField::PoissonMms { amplitude } => {
                amplitude * 2.0 * PI * PI * (PI * x[0]).sin() * (PI * x[1]).sin()
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        match *self {
            ScalarField::Zero => true,
            ScalarField::Constant { value } => value == 0.0,
            ScalarField::Linear { c0, c1, c2 } => c0 == 0.0 && c1 == 0.0 && c2 == 0.0,
            ScalarField::Bilinear { amplitude }
            | ScalarField::SineBump { amplitude }
            | ScalarField::SineMode { amplitude, .. }
            | ScalarField::Bubble { amplitude }
            | ScalarField::PoissonMms { amplitude } => amplitude == 0.0,
        }
    }

    /// Same field with values multiplied by `s`.
    pub fn scaled(&self, s: f64) -> ScalarField {
        match *self {
            ScalarField::Zero => ScalarField::Zero,
            ScalarField::Constant { value } => ScalarField::Constant { value: s * value },
            ScalarField::Linear { c0, c1, c2 } => ScalarField::Linear {
                c0: s * c0,
                c1: s * c1,
                c2: s * c2,
            },
            ScalarField::Bilinear { amplitude } => ScalarField::Bilinear {
                amplitude: s * amplitude,
            },
            ScalarField::SineBump { amplitude } => ScalarField::SineBump {
                amplitude: s * amplitude,
            },
            ScalarField::SineMode { k1, k2, amplitude } => ScalarField::SineMode {
                k1,
                k2,
                amplitude: s * amplitude,
            },
            ScalarField::Bubble { amplitude } => ScalarField::Bubble {
                amplitude: s * amplitude,
            },
            ScalarField::PoissonMms { amplitude } => ScalarField::PoissonMms {
                amplitude: s * amplitude,
            },
        }
    }
}

/// Nodal values of a P1 field (one value per mesh vertex).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FemField {
    pub values: Vec<f64>,
}

impl FemField {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            values: vec![0.0; n],
        }
    }

    pub fn interpolate(mesh: &TriMesh, f: impl Fn([f64; 2]) -> f64) -> Self {
        Self {
            values: mesh.vertices.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn eval_bary(&self, mesh: &TriMesh, t: usize, l: [f64; 3]) -> f64 {
        let [a, b, c] = mesh.triangles[t];
        l[0] * self.values[a] + l[1] * self.values[b] + l[2] * self.values[c]
    }

    /// Constant gradient on triangle `t`.
    pub fn gradient_on(&self, mesh: &TriMesh, t: usize) -> [f64; 2] {
        let (g, _) = p1_gradients(&mesh.triangle_coords(t));
        let tri = mesh.triangles[t];
        let mut out = [0.0; 2];
        for k in 0..3 {
            out[0] += self.values[tri[k]] * g[k][0];
            out[1] += self.values[tri[k]] * g[k][1];
        }
        out
    }

    /// Value at `x`, or `None` outside the mesh.
    pub fn eval_at(&self, mesh: &TriMesh, locator: &PointLocator, x: [f64; 2]) -> Option<f64> {
        locator
            .locate(mesh, x)
            .map(|(t, l)| self.eval_bary(mesh, t, l))
    }

    /// Area-weighted integral mean over the mesh.
    pub fn mean(&self, mesh: &TriMesh) -> f64 {
        let mut s = 0.0;
        let mut area = 0.0;
        for (t, tri) in mesh.triangles.iter().enumerate() {
            let a = mesh.triangle_area(t);
            s += a * (self.values[tri[0]] + self.values[tri[1]] + self.values[tri[2]]) / 3.0;
            area += a;
        }
        s / area
    }

    /// Plain-text dump, one `vertex-index value` line per vertex.
    pub fn write_text<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for (i, v) in self.values.iter().enumerate() {
            writeln!(w, "{i} {v:?}")?;
        }
        Ok(())
    }
}

/// Uniform bucket grid over the bounding box for point-in-triangle queries.
#[derive(Clone, Debug)]
pub struct PointLocator {
    origin: [f64; 2],
    cell: [f64; 2],
    dims: [usize; 2],
    buckets: Vec<Vec<usize>>,
}

impl PointLocator {
    pub fn new(mesh: &TriMesh) -> Self {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for v in &mesh.vertices {
            for k in 0..2 {
                lo[k] = lo[k].min(v[k]);
                hi[k] = hi[k].max(v[k]);
            }
        }
        let side = (mesh.num_triangles() as f64 / 2.0).sqrt().ceil().max(1.0) as usize;
        let dims = [side, side];
        let cell = [
            ((hi[0] - lo[0]) / side as f64).max(f64::MIN_POSITIVE),
            ((hi[1] - lo[1]) / side as f64).max(f64::MIN_POSITIVE),
        ];
        let mut loc = Self {
            origin: lo,
            cell,
            dims,
            buckets: vec![Vec::new(); side * side],
        };
        for (t, _) in mesh.triangles.iter().enumerate() {
            let p = mesh.triangle_coords(t);
            let (mut b0, mut b1) = ([usize::MAX; 2], [0usize; 2]);
            for q in &p {
                let b = loc.bucket_of(*q);
                for k in 0..2 {
                    b0[k] = b0[k].min(b[k]);
                    b1[k] = b1[k].max(b[k]);
                }
            }
            for i in b0[0]..=b1[0] {
                for j in b0[1]..=b1[1] {
                    loc.buckets[j * dims[0] + i].push(t);
                }
            }
        }
        loc
    }

    fn bucket_of(&self, x: [f64; 2]) -> [usize; 2] {
        let mut b = [0; 2];
        for k in 0..2 {
            let f = ((x[k] - self.origin[k]) / self.cell[k]).floor();
            b[k] = (f.max(0.0) as usize).min(self.dims[k] - 1);
        }
        b
    }

    /// Triangle containing `x` and the barycentric coordinates of `x` in it.
    pub fn locate(&self, mesh: &TriMesh, x: [f64; 2]) -> Option<(usize, [f64; 3])> {
        let b = self.bucket_of(x);
        let mut best: Option<(usize, [f64; 3], f64)> = None;
        for &t in &self.buckets[b[1] * self.dims[0] + b[0]] {
            let l = barycentric(&mesh.triangle_coords(t), x);
            let worst = l.iter().fold(f64::INFINITY, |m, &v| m.min(v));
            if worst >= 0.0 {
                return Some((t, l));
            }
            if best.as_ref().is_none_or(|(_, _, w)| worst > *w) {
                best = Some((t, l, worst));
            }
        }
        best.filter(|(_, _, w)| *w >= -1e-10)
            .map(|(t, l, _)| (t, l))
    }
}

pub(crate) fn barycentric(p: &[[f64; 2]; 3], x: [f64; 2]) -> [f64; 3] {
    let det = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
    let l1 =
        ((x[0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (x[1] - p[0][1])) / det;
    let l2 =
        ((p[1][0] - p[0][0]) * (x[1] - p[0][1]) - (x[0] - p[0][0]) * (p[1][1] - p[0][1])) / det;
    [1.0 - l1 - l2, l1, l2]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{mesh_unit_cell, HoleSpec, Phase, UnitCellGeometry};

    #[test]
    fn linear_fields_are_reproduced_everywhere() {
        let mesh = TriMesh::unit_square(5);
        let f = |x: [f64; 2]| 1.0 + 2.0 * x[0] - 3.0 * x[1];
        let u = FemField::interpolate(&mesh, f);
        let loc = PointLocator::new(&mesh);
        for x in [[0.0, 0.0], [0.33, 0.71], [1.0, 1.0], [0.999, 0.001]] {
            assert!((u.eval_at(&mesh, &loc, x).unwrap() - f(x)).abs() < 1e-13);
        }
        assert!(u.eval_at(&mesh, &loc, [1.2, 0.5]).is_none());
        let g = u.gradient_on(&mesh, 7);
        assert!((g[0] - 2.0).abs() < 1e-12 && (g[1] + 3.0).abs() < 1e-12);
    }

    #[test]
    fn points_in_holes_are_not_located() {
        let cell =
            UnitCellGeometry::new(vec![HoleSpec::new([0.5, 0.5], 0.25, Phase::One)], 32).unwrap();
        let mesh = mesh_unit_cell(&cell, 1.0 / 8.0).unwrap();
        let loc = PointLocator::new(&mesh);
        assert!(loc.locate(&mesh, [0.5, 0.5]).is_none());
        assert!(loc.locate(&mesh, [0.05, 0.9]).is_some());
    }

    #[test]
    fn builtin_fields() {
        let x = [0.5, 0.5];
        assert_eq!(ScalarField::Bubble { amplitude: 1.0 }.eval(x), 1.0);
        assert_eq!(ScalarField::SineBump { amplitude: 2.0 }.eval(x), 2.0);
        assert!(ScalarField::Linear {
            c0: 0.0,
            c1: 0.0,
            c2: 0.0
        }
        .is_zero());
        let f: ScalarField =
            serde_json::from_str(r#"{"kind":"sine_bump","amplitude":1.5}"#).unwrap();
        assert_eq!(f.scaled(2.0), ScalarField::SineBump { amplitude: 3.0 });
    }
}
