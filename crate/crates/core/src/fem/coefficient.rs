use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

/// A 1-periodic symmetric coefficient field `ξ ↦ a(ξ)` with declared
/// ellipticity bounds `(ϰ₁, ϰ₂)`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Coefficient {
    #[default]
    Identity,
    /// Constant symmetric matrix (used for the homogenized operator).
    Constant {
        matrix: [[f64; 2]; 2],
    },
    /// `(mean + amplitude·sin 2πξ₁)·I`.
    Layered {
        mean: f64,
        amplitude: f64,
    },
    /// Smooth checkerboard with a coupling term:
    /// `a₁₁ = a₂₂ = base + amplitude·sin 2πξ₁ sin 2πξ₂`,
    /// `a₁₂ = a₂₁ = ½·amplitude·cos 2πξ₁ cos 2πξ₂`.
    #[serde(alias = "checker-smooth")]
    CheckerSmooth {
        base: f64,
        amplitude: f64,
    },
}

impl Coefficient {
    pub fn layered_default() -> Self {
        Coefficient::Layered {
            mean: 2.0,
            amplitude: 1.0,
        }
    }

    pub fn eval(&self, xi: [f64; 2]) -> [[f64; 2]; 2] {
        match *self {
            Coefficient::Identity => [[1.0, 0.0], [0.0, 1.0]],
            Coefficient::Constant { matrix } => matrix,
            Coefficient::Layered { mean, amplitude } => {
                let a = mean + amplitude * (2.0 * PI * xi[0]).sin();
                [[a, 0.0], [0.0, a]]
            }
            Coefficient::CheckerSmooth { base, amplitude } => {
                let (s1, c1) = (2.0 * PI * xi[0]).sin_cos();
                let (s2, c2) = (2.0 * PI * xi[1]).sin_cos();
                let d = base + amplitude * s1 * s2;
                let o = 0.5 * amplitude * c1 * c2;
                [[d, o], [o, d]]
            }
        }
    }

    /// Declared `(ϰ₁, ϰ₂)`.
    pub fn bounds(&self) -> (f64, f64) {
        match *self {
            Coefficient::Identity => (1.0, 1.0),
            Coefficient::Constant { matrix } => {
                let (l1, l2) = sym_eigenvalues(matrix);
                (l1, l2)
            }
            Coefficient::Layered { mean, amplitude } => {
                (mean - amplitude.abs(), mean + amplitude.abs())
            }
            Coefficient::CheckerSmooth { base, amplitude } => {
                (base - 1.5 * amplitude.abs(), base + 1.5 * amplitude.abs())
            }
        }
    }

    /// True when the field does not depend on `ξ`.
    pub fn is_constant(&self) -> bool {
        matches!(self, Coefficient::Identity | Coefficient::Constant { .. })
    }
}

/// Ascending eigenvalues of a symmetric 2×2 matrix.
pub fn sym_eigenvalues(m: [[f64; 2]; 2]) -> (f64, f64) {
    let tr = m[0][0] + m[1][1];
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let disc = (0.25 * tr * tr - det).max(0.0).sqrt();
    (0.5 * tr - disc, 0.5 * tr + disc)
}

/// Sampled check of symmetry, ellipticity and periodicity.
#[derive(Clone, Debug, PartialEq)]
pub struct CoefficientReport {
    pub max_asymmetry: f64,
    pub min_rayleigh: f64,
    pub max_rayleigh: f64,
    pub max_period_defect: f64,
    pub within_bounds: bool,
}

impl CoefficientReport {
    pub fn passed(&self) -> bool {
        self.max_asymmetry <= 1e-14 && self.max_period_defect <= 1e-12 && self.within_bounds
    }
}

/// Samples `a` on a `samples × samples` grid with 16 probe directions.
pub fn check_coefficient(coeff: &Coefficient, samples: usize) -> CoefficientReport {
    let (k1, k2) = coeff.bounds();
    let mut rep = CoefficientReport {
        max_asymmetry: 0.0,
        min_rayleigh: f64::INFINITY,
        max_rayleigh: f64::NEG_INFINITY,
        max_period_defect: 0.0,
        within_bounds: true,
    };
    for i in 0..samples {
        for j in 0..samples {
            let xi = [
                (i as f64 + 0.37) / samples as f64,
                (j as f64 + 0.61) / samples as f64,
            ];
            let a = coeff.eval(xi);
            rep.max_asymmetry = rep.max_asymmetry.max((a[0][1] - a[1][0]).abs());
            for z in [[1.0, 0.0], [0.0, 1.0], [-2.0, 3.0]] {
                let b = coeff.eval([xi[0] + z[0], xi[1] + z[1]]);
                for r in 0..2 {
                    for c in 0..2 {
                        rep.max_period_defect =
                            rep.max_period_defect.max((a[r][c] - b[r][c]).abs());
                    }
                }
            }
            for k in 0..16 {
                let (s, c) = (PI * k as f64 / 16.0).sin_cos();
                let q = a[0][0] * c * c + (a[0][1] + a[1][0]) * c * s + a[1][1] * s * s;
                rep.min_rayleigh = rep.min_rayleigh.min(q);
                rep.max_rayleigh = rep.max_rayleigh.max(q);
                if q < k1 - 1e-12 || q > k2 + 1e-12 {
                    rep.within_bounds = false;
                }
            }
        }
    }
    rep
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_respect_their_bounds() {
        for c in [
            Coefficient::Identity,
            Coefficient::layered_default(),
            Coefficient::CheckerSmooth {
                base: 3.0,
                amplitude: 1.0,
            },
            Coefficient::Constant {
                matrix: [[2.0, 0.5], [0.5, 1.0]],
            },
        ] {
            let rep = check_coefficient(&c, 24);
            assert!(rep.passed(), "{c:?}: {rep:?}");
            let (k1, _) = c.bounds();
            assert!(k1 > 0.0);
        }
    }

    #[test]
    fn indefinite_matrix_is_visible_in_samples() {
        let rep = check_coefficient(
            &Coefficient::Constant {
                matrix: [[1.0, 2.0], [2.0, 1.0]],
            },
            4,
        );
        assert!(rep.min_rayleigh < 0.0);
    }

    #[test]
    fn eigenvalues_of_symmetric_matrix() {
        let (a, b) = sym_eigenvalues([[2.0, 1.0], [1.0, 2.0]]);
        assert!((a - 1.0).abs() < 1e-15 && (b - 3.0).abs() < 1e-15);
    }
}
