//! Piecewise-linear finite elements on [`TriMesh`](crate::geometry::TriMesh).
//!
//! Load, mass and nonlinear volume terms use the 3-point interior rule (exact
//! for quadratics) and edge integrals the 2-point Gauss rule. Oscillating
//! coefficients are sampled at physical points mapped to the cell by
//! `x/ε mod 1` and averaged per element with a degree-8 rule.

mod assembly;
mod cg;
mod coefficient;
mod constraints;
mod field;
mod norms;
mod sparse;

pub use assembly::{
    assemble_boundary_linear, assemble_boundary_nonlinear, assemble_mass, assemble_stiffness,
    assemble_volume_linear, assemble_volume_nonlinear, element_coefficient, p1_gradients,
};
pub use cg::{solve_cg, CgOutcome, DEFAULT_CG_TOL};
pub use coefficient::{check_coefficient, sym_eigenvalues, Coefficient, CoefficientReport};
pub use constraints::{apply_constraints, DofKind, DofMap, ReducedSystem};
pub use field::{FemField, PointLocator, ScalarField};
pub use norms::{h1_error_against, h1_seminorm, l2_error_against, norm_h1, norm_l2, trace_norm_sq};
pub use sparse::SparseMatrix;

/// Barycentric points of the 3-point interior rule; weights are `area / 3`.
pub const TRI_QUAD: [[f64; 3]; 3] = [
    [2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0],
    [1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0],
    [1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0],
];

/// 2-point Gauss abscissae on `[0,1]`; weights are `length / 2`.
pub const EDGE_QUAD: [f64; 2] = [0.5 - 0.288_675_134_594_812_9, 0.5 + 0.288_675_134_594_812_9];

/// Degree-5 seven-point rule (barycentric point, weight relative to area),
/// used for errors against smooth reference functions.
pub const TRI_QUAD7: [([f64; 3], f64); 7] = [
    ([1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0], 0.225),
    (
        [
            0.059_715_871_789_770,
            0.470_142_064_105_115,
            0.470_142_064_105_115,
        ],
        0.132_394_152_788_506,
    ),
    (
        [
            0.470_142_064_105_115,
            0.059_715_871_789_770,
            0.470_142_064_105_115,
        ],
        0.132_394_152_788_506,
    ),
    (
        [
            0.470_142_064_105_115,
            0.470_142_064_105_115,
            0.059_715_871_789_770,
        ],
        0.132_394_152_788_506,
    ),
    (
        [
            0.797_426_985_353_087,
            0.101_286_507_323_456,
            0.101_286_507_323_456,
        ],
        0.125_939_180_544_827,
    ),
    (
        [
            0.101_286_507_323_456,
            0.797_426_985_353_087,
            0.101_286_507_323_456,
        ],
        0.125_939_180_544_827,
    ),
    (
        [
            0.101_286_507_323_456,
            0.101_286_507_323_456,
            0.797_426_985_353_087,
        ],
        0.125_939_180_544_827,
    ),
];

/// Degree-8 sixteen-point rule (barycentric point, weight relative to area),
/// used to integrate non-constant coefficients over each element.
pub const TRI_QUAD16: [([f64; 3], f64); 16] = [
    ([1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0], 0.144_315_607_677_787),
    (
        [
            0.081_414_823_414_554,
            0.459_292_588_292_723,
            0.459_292_588_292_723,
        ],
        0.095_091_634_267_285,
    ),
    (
        [
            0.459_292_588_292_723,
            0.081_414_823_414_554,
            0.459_292_588_292_723,
        ],
        0.095_091_634_267_285,
    ),
    (
        [
            0.459_292_588_292_723,
            0.459_292_588_292_723,
            0.081_414_823_414_554,
        ],
        0.095_091_634_267_285,
    ),
    (
        [
            0.658_861_384_496_480,
            0.170_569_307_751_760,
            0.170_569_307_751_760,
        ],
        0.103_217_370_534_718,
    ),
    (
        [
            0.170_569_307_751_760,
            0.658_861_384_496_480,
            0.170_569_307_751_760,
        ],
        0.103_217_370_534_718,
    ),
    (
        [
            0.170_569_307_751_760,
            0.170_569_307_751_760,
            0.658_861_384_496_480,
        ],
        0.103_217_370_534_718,
    ),
    (
        [
            0.898_905_543_365_938,
            0.050_547_228_317_031,
            0.050_547_228_317_031,
        ],
        0.032_458_497_623_198,
    ),
    (
        [
            0.050_547_228_317_031,
            0.898_905_543_365_938,
            0.050_547_228_317_031,
        ],
        0.032_458_497_623_198,
    ),
    (
        [
            0.050_547_228_317_031,
            0.050_547_228_317_031,
            0.898_905_543_365_938,
        ],
        0.032_458_497_623_198,
    ),
    (
        [
            0.008_394_777_409_958,
            0.263_112_829_634_638,
            0.728_492_392_955_404,
        ],
        0.027_230_314_174_435,
    ),
    (
        [
            0.008_394_777_409_958,
            0.728_492_392_955_404,
            0.263_112_829_634_638,
        ],
        0.027_230_314_174_435,
    ),
    (
        [
            0.263_112_829_634_638,
            0.008_394_777_409_958,
            0.728_492_392_955_404,
        ],
        0.027_230_314_174_435,
    ),
    (
        [
            0.263_112_829_634_638,
            0.728_492_392_955_404,
            0.008_394_777_409_958,
        ],
        0.027_230_314_174_435,
    ),
    (
        [
            0.728_492_392_955_404,
            0.008_394_777_409_958,
            0.263_112_829_634_638,
        ],
        0.027_230_314_174_435,
    ),
    (
        [
            0.728_492_392_955_404,
            0.263_112_829_634_638,
            0.008_394_777_409_958,
        ],
        0.027_230_314_174_435,
    ),
];

pub(crate) fn bary_point(p: &[[f64; 2]; 3], l: [f64; 3]) -> [f64; 2] {
    [
        l[0] * p[0][0] + l[1] * p[1][0] + l[2] * p[2][0],
        l[0] * p[0][1] + l[1] * p[1][1] + l[2] * p[2][1],
    ]
}

/// Cell coordinate `x/scale mod 1`.
pub(crate) fn to_cell(x: [f64; 2], scale: f64) -> [f64; 2] {
    let w = |t: f64| {
        let s = t / scale;
        s - s.floor()
    };
    [w(x[0]), w(x[1])]
}

/// Gaussian elimination with partial pivoting; test oracle for the sparse solvers.
#[cfg(test)]
pub(crate) fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for k in 0..n {
        let piv = (k..n)
            .max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs()))
            .unwrap();
        a.swap(k, piv);
        b.swap(k, piv);
        for i in k + 1..n {
            let f = a[i][k] / a[k][k];
            for j in k..n {
                a[i][j] -= f * a[k][j];
            }
            b[i] -= f * b[k];
        }
    }
    let mut x = vec![0.0; n];
    for k in (0..n).rev() {
        let s: f64 = (k + 1..n).map(|j| a[k][j] * x[j]).sum();
        x[k] = (b[k] - s) / a[k][k];
    }
    x
}
