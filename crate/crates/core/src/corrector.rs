//! First-order corrector `ū_ε = v₀ + ε T_k(x/ε) ∂_k v₀`, boundary cutoff,
//! error measures, rate fits and the ε-sweep driver.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::cell::{CellSolution, HomogenizedTensor};
use crate::error::{Error, Result};
use crate::fem::{norm_h1, norm_l2, FemField, ScalarField};
use crate::fine_solver::{block_averages, solve_fine, FineProblem, FineSolution, NonlinearPhase};
use crate::geometry::{tile_mesh, PerforatedDomainMesh, TriMesh};
use crate::hom_solver::{solve_homogenized_from, HomProblem, HomSolution};

/// How `∂_k v₀` is evaluated at perforated-mesh nodes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientMode {
    /// P1 interpolant of the area-weighted nodal gradient.
    Recovered,
    /// Gradient of the homogenized element containing the node.
    Elementwise,
}

/// Boundary layer ramp: `1` within `ε` of `∂Ω`, `0` beyond `2ε`, linear between.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CutoffFunction {
    pub epsilon: f64,
}

impl CutoffFunction {
    pub fn value(&self, x: [f64; 2]) -> f64 {
        let d = x[0].min(1.0 - x[0]).min(x[1]).min(1.0 - x[1]);
        ((2.0 * self.epsilon - d) / self.epsilon).clamp(0.0, 1.0)
    }

    /// Lipschitz constant `1/ε`.
    pub fn gradient_bound(&self) -> f64 {
        1.0 / self.epsilon
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CorrectorField {
    pub epsilon: f64,
    pub mode: GradientMode,
    pub u_bar: FemField,
    /// `ū_ε + ψ_ε` with `ψ_ε = −ε φ_ε T_k ∂_k v₀`; zero on `Γ_ε`.
    pub with_cutoff: Option<FemField>,
    /// `v₀` at the perforated-mesh nodes.
    pub v0: FemField,
}

pub fn build_corrector(
    hom: &HomSolution,
    cell: &CellSolution,
    domain: &PerforatedDomainMesh,
    with_cutoff: bool,
    mode: GradientMode,
) -> Result<CorrectorField> {
    let fp = cell.mesh.fingerprint();
    if domain.cell_fingerprint != fp {
        return Err(Error::MeshMismatch(format!(
            "perforated mesh was tiled from cell mesh {} but the cell solution uses {}",
            domain.cell_fingerprint, fp
        )));
    }
    let eps = domain.epsilon;
    let cutoff = CutoffFunction { epsilon: eps };
    let n = domain.mesh.num_vertices();
    let mut v0 = Vec::with_capacity(n);
    let mut u_bar = Vec::with_capacity(n);
    let mut cut = Vec::with_capacity(if with_cutoff { n } else { 0 });
    for (v, &x) in domain.mesh.vertices.iter().enumerate() {
        let s = domain.source_vertex[v];
        let g = match mode {
            GradientMode::Recovered => hom.recovered_gradient_at(x),
            GradientMode::Elementwise => hom.element_gradient_at(x),
        };
        let corr = cell.t[0].values[s] * g[0] + cell.t[1].values[s] * g[1];
        let base = hom.value_at(x);
        v0.push(base);
        u_bar.push(base + eps * corr);
        if with_cutoff {
            cut.push(base + eps * (1.0 - cutoff.value(x)) * corr);
        }
    }
    Ok(CorrectorField {
        epsilon: eps,
        mode,
        u_bar: FemField::new(u_bar),
        with_cutoff: with_cutoff.then(|| FemField::new(cut)),
        v0: FemField::new(v0),
    })
}

fn difference(mesh: &TriMesh, a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    if a.len() != mesh.num_vertices() || b.len() != mesh.num_vertices() {
        return Err(Error::MeshMismatch(format!(
            "fields of length {} and {} on a mesh with {} vertices",
            a.len(),
            b.len(),
            mesh.num_vertices()
        )));
    }
    Ok(a.iter().zip(b).map(|(a, b)| a - b).collect())
}

/// `‖u − ū‖_{H¹(Ω_ε)}`.
pub fn error_h1(mesh: &TriMesh, u: &[f64], u_bar: &[f64]) -> Result<f64> {
    Ok(norm_h1(mesh, &difference(mesh, u, u_bar)?))
}

/// `‖u − v‖_{L²(Ω_ε)}`.
pub fn error_l2(mesh: &TriMesh, u: &[f64], v: &[f64]) -> Result<f64> {
    Ok(norm_l2(mesh, &difference(mesh, u, v)?))
}

pub fn energy_gap(e_fine: f64, e_hom: f64) -> f64 {
    (e_fine - e_hom).abs()
}

/// `max_B |avg_B(ũ_ε) − |Q₀|·avg_B(v₀)|`.
pub fn weak_convergence_gap(fine_blocks: &[f64], hom_blocks: &[f64], area_q0: f64) -> f64 {
    fine_blocks
        .iter()
        .zip(hom_blocks)
        .fold(0.0f64, |m, (a, b)| m.max((a - area_q0 * b).abs()))
}

/// Block averages of `v₀` over a `blocks × blocks` partition.
pub fn hom_block_averages(hom: &HomSolution, blocks: usize) -> Vec<f64> {
    block_averages(&hom.mesh(), &hom.v0.values, blocks, None)
}

/// Least-squares fit of `log e = rate·log ε + intercept`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub rate: f64,
    pub intercept: f64,
    /// Root-mean-square residual of the fit in log space.
    pub residual: f64,
    /// 95% confidence interval of the rate.
    pub ci: (f64, f64),
    pub points: usize,
    /// ε values dropped by the preasymptotic guard.
    pub excluded: Vec<f64>,
}

impl RateFit {
    pub fn within(&self, lo: f64, hi: f64) -> bool {
        (lo..=hi).contains(&self.rate)
    }
}

pub fn observed_rate(points: &[(f64, f64)]) -> Result<RateFit> {
    if points.len() < 3 {
        return Err(Error::RateFit(format!(
            "need at least 3 points, got {}",
            points.len()
        )));
    }
    if let Some(&(eps, e)) = points
        .iter()
        .find(|(eps, e)| !(*e > 0.0 && *eps > 0.0 && e.is_finite()))
    {
        return Err(Error::RateFit(format!(
            "nonpositive error {e} at epsilon {eps}"
        )));
    }
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::RateFit("all epsilon values coincide".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let rate = sxy / sxx;
    let intercept = my - rate * mx;
    let sse: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - rate * x).powi(2))
        .sum();
    let dof = n - 2.0;
    let se = (sse / dof / sxx).sqrt();
    let t = StudentsT::new(0.0, 1.0, dof)
        .map_err(|e| Error::RateFit(e.to_string()))?
        .inverse_cdf(0.975);
    Ok(RateFit {
        rate,
        intercept,
        residual: (sse / n).sqrt(),
        ci: (rate - t * se, rate + t * se),
        points: points.len(),
        excluded: Vec::new(),
    })
}

/// [`observed_rate`] that drops `ε = 1/2` when keeping it more than doubles
/// the fit residual and at least 3 points remain.
pub fn observed_rate_guarded(points: &[(f64, f64)]) -> Result<RateFit> {
    let full = observed_rate(points)?;
    let rest: Vec<(f64, f64)> = points
        .iter()
        .copied()
        .filter(|p| p.0 < 0.5 - 1e-12)
        .collect();
    if rest.len() == points.len() || rest.len() < 3 {
        return Ok(full);
    }
    let trimmed = observed_rate(&rest)?;
    if full.residual > 2.0 * trimmed.residual {
        let excluded = points
            .iter()
            .filter(|p| p.0 >= 0.5 - 1e-12)
            .map(|p| p.0)
            .collect();
        Ok(RateFit {
            excluded,
            ..trimmed
        })
    } else {
        Ok(full)
    }
}

pub const H1_RATE_WINDOW: (f64, f64) = (0.4, 1.1);
pub const ENERGY_RATE_WINDOW: (f64, f64) = (0.4, 1.2);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRecord {
    pub epsilon: f64,
    /// Perforated-mesh size `ε·h_cell`.
    pub h: f64,
    pub err_h1: f64,
    pub err_h1_cutoff: f64,
    pub err_h1_elementwise: f64,
    /// `‖u_ε − v₀‖_{L²(Ω_ε)}`.
    pub err_l2: f64,
    pub energy_fine: f64,
    pub energy_hom: f64,
    pub energy_gap: f64,
    pub weak_gap: f64,
    pub newton_iters: usize,
    pub newton_trace: Vec<f64>,
    pub norm_h1: f64,
    pub seconds: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    /// Sorted by ε descending.
    pub records: Vec<ConvergenceRecord>,
    pub hom_h: f64,
    pub hom_newton_iters: usize,
    pub rate_h1: Option<RateFit>,
    pub rate_h1_cutoff: Option<RateFit>,
    pub rate_energy: Option<RateFit>,
    /// Why rates are absent (too few points, zero errors).
    pub rate_note: Option<String>,
}

impl ConvergenceReport {
    pub fn from_records(
        mut records: Vec<ConvergenceRecord>,
        hom_h: f64,
        hom_newton_iters: usize,
    ) -> Self {
        records.sort_by(|a, b| b.epsilon.total_cmp(&a.epsilon));
        let fit = |f: fn(&ConvergenceRecord) -> f64| {
            let pts: Vec<(f64, f64)> = records.iter().map(|r| (r.epsilon, f(r))).collect();
            observed_rate_guarded(&pts)
        };
        let (h1, cut, en) = (
            fit(|r| r.err_h1),
            fit(|r| r.err_h1_cutoff),
            fit(|r| r.energy_gap),
        );
        let rate_note = [&h1, &cut, &en]
            .iter()
            .find_map(|r| r.as_ref().err().map(|e| e.to_string()));
        ConvergenceReport {
            records,
            hom_h,
            hom_newton_iters,
            rate_h1: h1.ok(),
            rate_h1_cutoff: cut.ok(),
            rate_energy: en.ok(),
            rate_note,
        }
    }

    /// Rates that were fitted lie in their windows. Absent rates do not fail.
    /// The cutoff-variant rate is reported but not judged.
    pub fn windows_met(&self) -> bool {
        let ok =
            |r: &Option<RateFit>, w: (f64, f64)| r.as_ref().is_none_or(|r| r.within(w.0, w.1));
        ok(&self.rate_h1, H1_RATE_WINDOW) && ok(&self.rate_energy, ENERGY_RATE_WINDOW)
    }

    /// `(ε, gap/√ε)` table.
    pub fn energy_ratio_table(&self) -> Vec<(f64, f64)> {
        self.records
            .iter()
            .map(|r| (r.epsilon, r.energy_gap / r.epsilon.sqrt()))
            .collect()
    }
}

/// Inputs of an ε-sweep. The cell solution fixes geometry and coefficient.
#[derive(Clone, Debug)]
pub struct SweepSetup<'a> {
    pub cell: &'a CellSolution,
    pub tensor: &'a HomogenizedTensor,
    /// Cell mesh target size, used for the reported fine-mesh size.
    pub cell_h: f64,
    pub phases: [NonlinearPhase; 2],
    pub f0: ScalarField,
    pub g0: [ScalarField; 2],
    pub ns: Vec<usize>,
    /// Homogenized mesh subdivisions.
    pub hom_n: usize,
    pub newton_tol: f64,
    pub max_newton: usize,
    pub blocks: usize,
    pub timings: bool,
}

impl SweepSetup<'_> {
    pub fn hom_problem(&self) -> HomProblem {
        HomProblem::new(
            self.tensor,
            self.cell.measures,
            self.phases,
            self.f0,
            self.g0,
        )
    }

    /// `2·N_max·M` with `M = ⌈1/h_cell⌉`, rounded up to a multiple of `blocks`.
    pub fn default_hom_n(ns: &[usize], cell_h: f64, blocks: usize) -> usize {
        let m = (1.0 / cell_h - 1e-9).ceil() as usize;
        let n = 2 * ns.iter().copied().max().unwrap_or(1) * m;
        n.div_ceil(blocks.max(1)) * blocks.max(1)
    }
}

/// Everything measured for one ε.
pub struct EpsilonRun {
    pub domain: PerforatedDomainMesh,
    pub fine: FineSolution,
    pub record: ConvergenceRecord,
}

pub fn run_epsilon(
    setup: &SweepSetup,
    hom: &HomSolution,
    hom_blocks: &[f64],
    n: usize,
) -> Result<EpsilonRun> {
    let start = Instant::now();
    let domain = tile_mesh(&setup.cell.mesh, n)?;
    let problem = FineProblem {
        domain: &domain,
        coefficient: setup.cell.coefficient.clone(),
        phases: setup.phases,
        f: setup.f0,
        g: setup.g0,
    };
    let fine = solve_fine(&problem, setup.newton_tol, setup.max_newton)?;
    let corr = build_corrector(hom, setup.cell, &domain, true, GradientMode::Recovered)?;
    let elem = build_corrector(hom, setup.cell, &domain, false, GradientMode::Elementwise)?;
    let mesh = &domain.mesh;
    let u = &fine.u.values;
    let cut = corr.with_cutoff.as_ref().expect("cutoff requested");
    let blocks = block_averages(
        mesh,
        u,
        setup.blocks,
        Some((&domain.cell_of_triangle, domain.n)),
    );
    let record = ConvergenceRecord {
        epsilon: domain.epsilon,
        h: setup.cell_h * domain.epsilon,
        err_h1: error_h1(mesh, u, &corr.u_bar.values)?,
        err_h1_cutoff: error_h1(mesh, u, &cut.values)?,
        err_h1_elementwise: error_h1(mesh, u, &elem.u_bar.values)?,
        err_l2: error_l2(mesh, u, &corr.v0.values)?,
        energy_fine: fine.energy,
        energy_hom: hom.energy,
        energy_gap: energy_gap(fine.energy, hom.energy),
        weak_gap: weak_convergence_gap(&blocks, hom_blocks, setup.cell.measures.area_q0),
        newton_iters: fine.iterations,
        newton_trace: fine.trace.clone(),
        norm_h1: norm_h1(mesh, u),
        seconds: setup.timings.then(|| start.elapsed().as_secs_f64()),
    };
    Ok(EpsilonRun {
        domain,
        fine,
        record,
    })
}

/// Solves the homogenized problem once, then every ε of the sweep in
/// parallel; records are collected in sweep order.
pub fn run_sweep(setup: &SweepSetup) -> Result<(ConvergenceReport, HomSolution)> {
    let hom = solve_homogenized_from(
        &setup.hom_problem(),
        setup.hom_n,
        None,
        setup.newton_tol,
        setup.max_newton,
    )?;
    let hom_blocks = hom_block_averages(&hom, setup.blocks);
    let records = setup
        .ns
        .par_iter()
        .map(|&n| {
            run_epsilon(setup, &hom, &hom_blocks, n)
                .map(|r| r.record)
                .map_err(|e| Error::Solver {
                    epsilon: 1.0 / n as f64,
                    source: Box::new(e),
                })
        })
        .collect::<Result<Vec<_>>>()?;
    let report = ConvergenceReport::from_records(records, hom.h(), hom.iterations);
    Ok((report, hom))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cell::{homogenized_tensor, solve_cell};
    use crate::fem::Coefficient;
    use crate::geometry::{mesh_unit_cell, EdgeTag, HoleSpec, Phase, UnitCellGeometry};
    use crate::hom_solver::recover_gradient;

    fn hom_from(n: usize, f: impl Fn([f64; 2]) -> f64) -> HomSolution {
        let mesh = TriMesh::unit_square(n);
        let v: Vec<f64> = mesh.vertices.iter().map(|&x| f(x)).collect();
        let grad = recover_gradient(&mesh, &v);
        HomSolution {
            n,
            v0: FemField::new(v),
            grad,
            trace: vec![],
            iterations: 0,
            energy: 0.0,
        }
    }

    fn holed_cell() -> CellSolution {
        let cell =
            UnitCellGeometry::new(vec![HoleSpec::new([0.5, 0.5], 0.25, Phase::One)], 32).unwrap();
        let mesh = mesh_unit_cell(&cell, 1.0 / 8.0).unwrap();
        solve_cell(&cell, &mesh, &Coefficient::Identity).unwrap()
    }

    #[test]
    fn trivial_correctors() {
        let cell = UnitCellGeometry::empty();
        let mesh = mesh_unit_cell(&cell, 1.0 / 8.0).unwrap();
        let sol = solve_cell(&cell, &mesh, &Coefficient::Identity).unwrap();
        let d = tile_mesh(&mesh, 4).unwrap();
        let hom = hom_from(16, |x| x[0] * (1.0 - x[0]) * x[1]);
        let c = build_corrector(&hom, &sol, &d, true, GradientMode::Recovered).unwrap();
        assert_eq!(c.u_bar, c.v0);
        let holed = holed_cell();
        let d = tile_mesh(&holed.mesh, 4).unwrap();
        let c = build_corrector(
            &hom_from(8, |_| 0.7),
            &holed,
            &d,
            true,
            GradientMode::Elementwise,
        )
        .unwrap();
        assert!(c.u_bar.values.iter().all(|&v| (v - 0.7).abs() < 1e-15));
    }

    #[test]
    fn layered_corrector_size() {
        let cell = UnitCellGeometry::empty();
        let mesh = mesh_unit_cell(&cell, 1.0 / 16.0).unwrap();
        let sol = solve_cell(&cell, &mesh, &Coefficient::layered_default()).unwrap();
        let t1 = sol.t[0].max_abs();
        assert!(t1 > 0.0);
        for n in [2, 4, 8] {
            let d = tile_mesh(&mesh, n).unwrap();
            let hom = hom_from(64, |x| x[0] * (1.0 - x[0]));
            let c = build_corrector(&hom, &sol, &d, false, GradientMode::Recovered).unwrap();
            let dev = c
                .u_bar
                .values
                .iter()
                .zip(&c.v0.values)
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            let bound = d.epsilon * t1 * 1.0;
            assert!(dev <= bound * (1.0 + 1e-9), "{dev} > {bound}");
            assert!(dev >= 0.5 * bound, "{dev} vs {bound}");
        }
    }

    #[test]
    fn cutoff_variant_vanishes_on_outer_boundary() {
        let sol = holed_cell();
        let d = tile_mesh(&sol.mesh, 4).unwrap();
        let hom = hom_from(32, |x| (x[0] * (1.0 - x[0]) * x[1] * (1.0 - x[1])) * 16.0);
        let c = build_corrector(&hom, &sol, &d, true, GradientMode::Recovered).unwrap();
        let cut = c.with_cutoff.unwrap();
        let mut outer = 0;
        for e in d.mesh.edges_with_tag(EdgeTag::DirichletOuter) {
            for &v in &e.v {
                assert_eq!(cut.values[v], 0.0);
                outer += 1;
            }
        }
        assert!(outer > 0);
        let phi = CutoffFunction { epsilon: 0.25 };
        assert_eq!(phi.value([0.1, 0.5]), 1.0);
        assert_eq!(phi.value([0.5, 0.5]), 0.0);
        assert!((phi.value([0.375, 0.5]) - 0.5).abs() < 1e-15);
        assert_eq!(phi.gradient_bound(), 4.0);
    }

    #[test]
    fn mismatched_mesh_rejected() {
        let sol = holed_cell();
        let other =
            UnitCellGeometry::new(vec![HoleSpec::new([0.5, 0.5], 0.2, Phase::One)], 32).unwrap();
        let d = tile_mesh(&mesh_unit_cell(&other, 1.0 / 8.0).unwrap(), 2).unwrap();
        let hom = hom_from(8, |_| 0.0);
        assert!(matches!(
            build_corrector(&hom, &sol, &d, false, GradientMode::Recovered),
            Err(Error::MeshMismatch(_))
        ));
        assert!(matches!(
            error_h1(&d.mesh, &[0.0], &[0.0]),
            Err(Error::MeshMismatch(_))
        ));
    }

    #[test]
    fn h1_error_of_a_bump() {
        let b = |x: [f64; 2]| x[0] * (1.0 - x[0]) * x[1] * (1.0 - x[1]);
        let exact = (21.0f64).sqrt() / 30.0;
        let mut prev = f64::INFINITY;
        for n in [16, 32, 64] {
            let mesh = TriMesh::unit_square(n);
            let eps = 0.125;
            let u: Vec<f64> = mesh.vertices.iter().map(|&x| 1.0 + eps * b(x)).collect();
            let ub = vec![1.0; u.len()];
            assert_eq!(error_h1(&mesh, &u, &u).unwrap(), 0.0);
            let rel = (error_h1(&mesh, &u, &ub).unwrap() / (eps * exact) - 1.0).abs();
            assert!(rel < prev);
            prev = rel;
        }
        assert!(prev < 5e-3, "{prev}");
    }

    #[test]
    fn rate_fits() {
        let eps = [0.5, 0.25, 0.125, 0.0625];
        let sq: Vec<(f64, f64)> = eps.iter().map(|&e: &f64| (e, e.sqrt())).collect();
        let r = observed_rate(&sq).unwrap();
        assert!((r.rate - 0.5).abs() < 1e-12 && r.residual < 1e-12 && r.intercept.abs() < 1e-12);
        let lin: Vec<(f64, f64)> = eps.iter().map(|&e| (e, 3.0 * e)).collect();
        let r = observed_rate(&lin).unwrap();
        assert!((r.rate - 1.0).abs() < 1e-12 && (r.intercept - 3f64.ln()).abs() < 1e-12);
        assert!(observed_rate(&lin[..2]).is_err());
        assert!(observed_rate(&[(0.5, 1.0), (0.25, 0.0), (0.125, 0.1)]).is_err());
        // Noisy data: the interval brackets the estimate.
        let noisy = [(0.5, 0.9), (0.25, 0.5), (0.125, 0.41), (0.0625, 0.27)];
        let r = observed_rate(&noisy).unwrap();
        assert!(r.ci.0 < r.rate && r.rate < r.ci.1);
        // Preasymptotic first point is dropped.
        let pre = [(0.5, 5.0), (0.25, 0.5), (0.125, 0.25), (0.0625, 0.125)];
        let g = observed_rate_guarded(&pre).unwrap();
        assert_eq!(g.excluded, vec![0.5]);
        assert!((g.rate - 1.0).abs() < 1e-12);
        assert!(observed_rate_guarded(&noisy).unwrap().excluded.is_empty() || noisy.len() == 4);
    }

    #[test]
    fn weak_gap_definition() {
        assert_eq!(weak_convergence_gap(&[0.0; 16], &[0.0; 16], 0.8), 0.0);
        let q0 = 0.8;
        assert_eq!(weak_convergence_gap(&[q0; 16], &[1.0; 16], q0), 0.0);
        let hom = hom_from(16, |_| 1.0);
        assert!(hom_block_averages(&hom, 4)
            .iter()
            .all(|&a| (a - 1.0).abs() < 1e-12));
    }

    #[test]
    fn small_sweep_is_consistent() {
        let sol = holed_cell();
        let tensor = homogenized_tensor(&sol).unwrap();
        let setup = SweepSetup {
            cell: &sol,
            tensor: &tensor,
            cell_h: 1.0 / 8.0,
            phases: [
                NonlinearPhase::SoftSine { c1: 0.7, c2: 1.3 },
                NonlinearPhase::identity(),
            ],
            f0: ScalarField::Constant { value: 1.0 },
            g0: [ScalarField::SineBump { amplitude: 1.0 }, ScalarField::Zero],
            ns: vec![4, 2],
            hom_n: 32,
            newton_tol: 1e-10,
            max_newton: 30,
            blocks: 2,
            timings: false,
        };
        let (report, hom) = run_sweep(&setup).unwrap();
        assert_eq!(report.records.len(), 2);
        assert!(report.records[0].epsilon > report.records[1].epsilon);
        assert!(report.rate_h1.is_none() && report.rate_note.is_some());
        assert!(report.windows_met());
        assert!(report
            .records
            .iter()
            .all(|r| r.seconds.is_none() && r.err_h1 > 0.0));
        assert!(hom.energy > 0.0);
        // Zero data: every error vanishes and no rate is fitted.
        let zero = SweepSetup {
            f0: ScalarField::Zero,
            g0: [ScalarField::Zero; 2],
            ns: vec![2, 4, 8],
            ..setup
        };
        let (report, _) = run_sweep(&zero).unwrap();
        assert!(report
            .records
            .iter()
            .all(|r| r.err_h1 == 0.0 && r.energy_gap == 0.0));
        assert!(report.rate_h1.is_none() && report.windows_met());
    }
}
