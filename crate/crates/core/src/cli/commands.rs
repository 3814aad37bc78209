use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::cache::{load_or_compute, CacheKey, CellEntry};
use super::config::RunConfig;
use super::report::{csv_string, fmt_f64, render_summary, render_svg, SweepSummary, Windows};
use crate::cell::{compatibility_defect, trace_identity, verify_tensor, TensorReport};
use crate::corrector::{run_sweep, SweepSetup};
use crate::error::{Error, Result};
use crate::fem::{check_coefficient, norm_h1, FemField, ScalarField};
use crate::fine_solver::{
    check_phase, coercivity_constants, functional_value, norm_equivalence, random_modes,
    solve_fine, FineProblem,
};
use crate::geometry::{tile_mesh, CellMeasures, Phase};
use crate::hom_solver::{solve_homogenized_from, subdivisions_for, HomProblem};

/// Resolved settings shared by every subcommand.
#[derive(Clone, Debug)]
pub struct Context {
    pub config: RunConfig,
    pub out: PathBuf,
    pub cache: Option<PathBuf>,
    pub seed: u64,
    pub timings: bool,
}

/// How a command that ran to completion judged its results.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Passed,
    /// A rate window or a verification check failed.
    Violated,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn write_field(path: &Path, field: &FemField) -> Result<()> {
    let mut buf = Vec::new();
    field.write_text(&mut buf)?;
    fs::write(path, buf)?;
    Ok(())
}

fn matrix_str(m: &[[f64; 2]; 2]) -> String {
    format!(
        "[[{}, {}], [{}, {}]]",
        fmt_f64(m[0][0]),
        fmt_f64(m[0][1]),
        fmt_f64(m[1][0]),
        fmt_f64(m[1][1])
    )
}

impl Context {
    fn cell(&self, log: &mut dyn Write) -> Result<CellEntry> {
        let (entry, status) = load_or_compute(&self.config, self.cache.as_deref())?;
        writeln!(log, "cell cache {} ({})", status.name(), entry.key.0)?;
        Ok(entry)
    }

    fn prepare_out(&self) -> Result<()> {
        fs::create_dir_all(&self.out)?;
        Ok(())
    }

    fn hom_n(&self) -> usize {
        match self.config.sweep.hom_h {
            Some(h) => subdivisions_for(h),
            None => SweepSetup::default_hom_n(
                &self.config.sweep.n,
                self.config.cell.target_h,
                self.config.sweep.blocks,
            ),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct CellSummary {
    cache_key: CacheKey,
    tensor: crate::cell::HomogenizedTensor,
    report: TensorReport,
    measures: CellMeasures,
    compatibility_defect: [f64; 2],
    vertices: usize,
    triangles: usize,
}

pub fn cmd_cell(ctx: &Context, log: &mut dyn Write) -> Result<Verdict> {
    ctx.prepare_out()?;
    let entry = ctx.cell(log)?;
    let sol = &entry.solution;
    let report = verify_tensor(&entry.tensor);
    let summary = CellSummary {
        cache_key: entry.key.clone(),
        tensor: entry.tensor.clone(),
        report: report.clone(),
        measures: sol.measures,
        compatibility_defect: compatibility_defect(&sol.measures),
        vertices: sol.mesh.num_vertices(),
        triangles: sol.mesh.num_triangles(),
    };
    write_json(&ctx.out.join("tensor.json"), &summary)?;
    let mut mesh = Vec::new();
    sol.mesh.write_text(&mut mesh)?;
    fs::write(ctx.out.join("cell.mesh"), mesh)?;

    writeln!(
        log,
        "cell mesh: {} vertices, {} triangles",
        summary.vertices, summary.triangles
    )?;
    writeln!(log, "a_hat = {}", matrix_str(&entry.tensor.matrix))?;
    writeln!(
        log,
        "eigenvalues = ({}, {})",
        fmt_f64(report.eigenvalues.0),
        fmt_f64(report.eigenvalues.1)
    )?;
    writeln!(log, "form defect = {:e}", report.form_defect)?;
    writeln!(log, "symmetry defect = {:e}", report.symmetry_defect)?;
    writeln!(
        log,
        "q = ({}, {})",
        fmt_f64(sol.measures.q[0]),
        fmt_f64(sol.measures.q[1])
    )?;
    if !report.passed() {
        return Err(Error::Tensor(format!(
            "form defect {:e}, symmetry defect {:e}, eigenvalues {:?}",
            report.form_defect, report.symmetry_defect, report.eigenvalues
        )));
    }
    Ok(Verdict::Passed)
}

#[derive(Serialize, Deserialize)]
struct FineSummary {
    epsilon: f64,
    n: usize,
    vertices: usize,
    triangles: usize,
    iterations: usize,
    trace: Vec<f64>,
    energy: f64,
    functional: f64,
    norm_h1: f64,
}

pub fn cmd_fine(ctx: &Context, n: usize, log: &mut dyn Write) -> Result<Verdict> {
    ctx.prepare_out()?;
    let entry = ctx.cell(log)?;
    let cfg = &ctx.config;
    let eps = 1.0 / n as f64;
    let wrap = |e: Error| Error::Solver {
        epsilon: eps,
        source: Box::new(e),
    };
    let domain = tile_mesh(&entry.solution.mesh, n).map_err(wrap)?;
    let problem = FineProblem {
        domain: &domain,
        coefficient: cfg.coefficient.clone(),
        phases: cfg.phases(),
        f: cfg.data.f0,
        g: cfg.g0(),
    };
    let sol = solve_fine(&problem, cfg.solver.newton_tol, cfg.solver.max_newton).map_err(wrap)?;
    let mesh = &domain.mesh;
    let summary = FineSummary {
        epsilon: eps,
        n,
        vertices: mesh.num_vertices(),
        triangles: mesh.num_triangles(),
        iterations: sol.iterations,
        trace: sol.trace.clone(),
        energy: sol.energy,
        functional: functional_value(&problem, &sol.u.values)?,
        norm_h1: norm_h1(mesh, &sol.u.values),
    };
    let mut buf = Vec::new();
    mesh.write_text(&mut buf)?;
    fs::write(ctx.out.join(format!("fine-{n}.mesh")), buf)?;
    write_field(&ctx.out.join(format!("fine-{n}.field")), &sol.u)?;
    write_json(&ctx.out.join(format!("fine-{n}.json")), &summary)?;

    writeln!(
        log,
        "epsilon = 1/{n}: {} vertices, {} triangles",
        summary.vertices, summary.triangles
    )?;
    writeln!(log, "newton iterations = {}", sol.iterations)?;
    let trace: Vec<String> = sol.trace.iter().map(|r| format!("{r:.3e}")).collect();
    writeln!(log, "residual trace = [{}]", trace.join(", "))?;
    writeln!(log, "energy = {}", fmt_f64(summary.energy))?;
    writeln!(log, "functional = {}", fmt_f64(summary.functional))?;
    writeln!(log, "norm_h1 = {}", fmt_f64(summary.norm_h1))?;
    Ok(Verdict::Passed)
}

#[derive(Serialize, Deserialize)]
struct HomSummary {
    n: usize,
    h: f64,
    tensor: [[f64; 2]; 2],
    iterations: usize,
    trace: Vec<f64>,
    energy: f64,
}

fn hom_problem(cfg: &RunConfig, entry: &CellEntry) -> HomProblem {
    HomProblem::new(
        &entry.tensor,
        entry.solution.measures,
        cfg.phases(),
        cfg.data.f0,
        cfg.g0(),
    )
}

pub fn cmd_hom(ctx: &Context, log: &mut dyn Write) -> Result<Verdict> {
    ctx.prepare_out()?;
    let entry = ctx.cell(log)?;
    let cfg = &ctx.config;
    let n = ctx.hom_n();
    let sol = solve_homogenized_from(
        &hom_problem(cfg, &entry),
        n,
        None,
        cfg.solver.newton_tol,
        cfg.solver.max_newton,
    )?;
    let summary = HomSummary {
        n,
        h: sol.h(),
        tensor: entry.tensor.matrix,
        iterations: sol.iterations,
        trace: sol.trace.clone(),
        energy: sol.energy,
    };
    write_field(&ctx.out.join("hom.field"), &sol.v0)?;
    write_json(&ctx.out.join("hom.json"), &summary)?;
    writeln!(
        log,
        "homogenized mesh: {n} x {n} (h = {})",
        fmt_f64(summary.h)
    )?;
    writeln!(log, "newton iterations = {}", sol.iterations)?;
    writeln!(log, "energy = {}", fmt_f64(sol.energy))?;
    Ok(Verdict::Passed)
}

fn emit_sweep(out: &Path, summary: &SweepSummary, log: &mut dyn Write) -> Result<Verdict> {
    fs::write(out.join("sweep.csv"), csv_string(&summary.report)?)?;
    fs::write(out.join("convergence.svg"), render_svg(&summary.report))?;
    write!(log, "{}", render_summary(summary))?;
    Ok(if summary.windows_met {
        Verdict::Passed
    } else {
        Verdict::Violated
    })
}

pub fn cmd_sweep(ctx: &Context, log: &mut dyn Write) -> Result<Verdict> {
    ctx.prepare_out()?;
    let entry = ctx.cell(log)?;
    let cfg = &ctx.config;
    let setup = SweepSetup {
        cell: &entry.solution,
        tensor: &entry.tensor,
        cell_h: cfg.cell.target_h,
        phases: cfg.phases(),
        f0: cfg.data.f0,
        g0: cfg.g0(),
        ns: cfg.sweep.n.clone(),
        hom_n: ctx.hom_n(),
        newton_tol: cfg.solver.newton_tol,
        max_newton: cfg.solver.max_newton,
        blocks: cfg.sweep.blocks,
        timings: ctx.timings,
    };
    let (report, _hom) = run_sweep(&setup)?;
    let windows_met = report.windows_met();
    let summary = SweepSummary {
        config: cfg.clone(),
        cache_key: entry.key.clone(),
        tensor: entry.tensor.matrix,
        measures: entry.solution.measures,
        hom_n: setup.hom_n,
        report,
        windows: Windows::default(),
        windows_met,
    };
    write_json(&ctx.out.join("summary.json"), &summary)?;
    let norms: Vec<f64> = summary.report.records.iter().map(|r| r.norm_h1).collect();
    if norms.len() >= 2 {
        let max = norms.iter().copied().fold(0.0f64, f64::max);
        let min = norms.iter().copied().fold(f64::INFINITY, f64::min);
        if min > 0.0 {
            writeln!(log, "uniform bound: max/min of norm_h1 = {:.4}", max / min)?;
        } else {
            writeln!(
                log,
                "uniform bound: min norm_h1 = {}, ratio undefined",
                fmt_f64(min)
            )?;
        }
    }
    emit_sweep(&ctx.out, &summary, log)
}

/// Rewrites the CSV and plot from a previous sweep's summary.
pub fn cmd_report(out: &Path, log: &mut dyn Write) -> Result<Verdict> {
    let path = out.join("summary.json");
    let text = fs::read(&path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let summary: SweepSummary = serde_json::from_slice(&text)?;
    emit_sweep(out, &summary, log)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckStatus {
    Pass,
    Fail,
    Skip,
    Info,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CheckItem {
    pub name: String,
    pub status: CheckStatus,
    pub detail: String,
}

fn item(name: impl Into<String>, pass: bool, detail: String) -> CheckItem {
    CheckItem {
        name: name.into(),
        status: if pass {
            CheckStatus::Pass
        } else {
            CheckStatus::Fail
        },
        detail,
    }
}

/// Lattice used for the trace-identity check.
const IDENTITY_N: usize = 4;

pub fn verify_items(ctx: &Context, entry: &CellEntry) -> Result<Vec<CheckItem>> {
    let cfg = &ctx.config;
    let sol = &entry.solution;
    let mut items = Vec::new();

    let c = check_coefficient(&cfg.coefficient, 64);
    items.push(item(
        "coefficient bounds",
        c.passed(),
        format!(
            "rayleigh [{:.4}, {:.4}], asymmetry {:e}",
            c.min_rayleigh, c.max_rayleigh, c.max_asymmetry
        ),
    ));
    let t = verify_tensor(&entry.tensor);
    items.push(item(
        "tensor forms",
        t.passed(),
        format!(
            "form defect {:e}, symmetry defect {:e}, eigenvalues ({:.6}, {:.6})",
            t.form_defect, t.symmetry_defect, t.eigenvalues.0, t.eigenvalues.1
        ),
    ));

    let defect = compatibility_defect(&sol.measures);
    let domain = tile_mesh(&sol.mesh, IDENTITY_N)?;
    let h = cfg.cell.target_h;
    let bubble = FemField::interpolate(&domain.mesh, |x| {
        ScalarField::Bubble { amplitude: 1.0 }.eval(x)
    })
    .values;
    let bilinear = FemField::interpolate(&domain.mesh, |x| x[0] * x[1]).values;
    for phase in Phase::ALL {
        let m = phase.number();
        if !sol.cell.has_phase(phase) {
            for name in ["compatibility", "trace identity"] {
                items.push(CheckItem {
                    name: format!("{name} (phase {m})"),
                    status: CheckStatus::Skip,
                    detail: "no holes of this phase".into(),
                });
            }
            continue;
        }
        let d = defect[phase.index()];
        items.push(item(
            format!("compatibility (phase {m})"),
            d <= 1e-12,
            format!("defect {d:e}"),
        ));

        let b = trace_identity(sol, &domain, phase, &bubble)?;
        let scale = b.boundary.abs().max(b.volume.abs()).max(f64::MIN_POSITIVE);
        items.push(item(
            format!("trace identity (phase {m})"),
            b.residual() <= 1e-10 * scale,
            format!(
                "bubble test function at eps = 1/{IDENTITY_N}: residual {:e} of {:e}",
                b.residual(),
                scale
            ),
        ));
        let x = trace_identity(sol, &domain, phase, &bilinear)?;
        items.push(CheckItem {
            name: format!("trace identity x1*x2 (phase {m})"),
            status: CheckStatus::Info,
            detail: format!(
                "residual {:e}, residual/h {:e}",
                x.residual(),
                x.residual() / h
            ),
        });
    }

    for (i, p) in cfg.phases().iter().enumerate() {
        let r = check_phase(p, 10.0, 400);
        items.push(item(
            format!("monotone nonlinearity (phase {})", i + 1),
            r.passed(),
            format!(
                "derivative in bounds {}, primitive bracketed {}, fd error {:e}",
                r.derivative_in_bounds, r.primitive_bracketed, r.max_fd_error
            ),
        ));
    }

    let modes = random_modes(ctx.seed, 8);
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    let mut per_eps = Vec::new();
    for &n in &cfg.sweep.n {
        let d = tile_mesh(&sol.mesh, n)?;
        let r = norm_equivalence(&d, &modes);
        lo = lo.min(r.min_ratio);
        hi = hi.max(r.max_ratio);
        per_eps.push(format!("1/{n}: [{:.4}, {:.4}]", r.min_ratio, r.max_ratio));
    }
    items.push(item(
        "norm equivalence",
        lo > 0.0 && hi.is_finite(),
        format!("ratio range [{lo:.4}, {hi:.4}] ({})", per_eps.join(", ")),
    ));

    let n = cfg.sweep.n.iter().copied().min().unwrap_or(1);
    let d = tile_mesh(&sol.mesh, n)?;
    let problem = FineProblem {
        domain: &d,
        coefficient: cfg.coefficient.clone(),
        phases: cfg.phases(),
        f: cfg.data.f0,
        g: cfg.g0(),
    };
    let dirs: Vec<Vec<f64>> = random_modes(ctx.seed.wrapping_add(1), 6)
        .iter()
        .map(|f| FemField::interpolate(&d.mesh, |x| f.eval(x)).values)
        .collect();
    let coercive = coercivity_constants(&problem, &dirs, &[0.01, 0.1, 1.0, 10.0, 100.0])?;
    items.push(item(
        "coercivity",
        coercive.c1 > 0.0 && coercive.c2.is_finite(),
        format!(
            "C1 = {:.4e}, C2 = {:.4e} over {} samples at eps = 1/{n}",
            coercive.c1, coercive.c2, coercive.samples
        ),
    ));
    Ok(items)
}

pub fn cmd_verify(ctx: &Context, log: &mut dyn Write) -> Result<Verdict> {
    ctx.prepare_out()?;
    let entry = ctx.cell(log)?;
    let items = verify_items(ctx, &entry)?;
    for it in &items {
        let tag = match it.status {
            CheckStatus::Pass => "PASS",
            CheckStatus::Fail => "FAIL",
            CheckStatus::Skip => "SKIP",
            CheckStatus::Info => "INFO",
        };
        writeln!(log, "{tag} {}: {}", it.name, it.detail)?;
    }
    write_json(&ctx.out.join("verify.json"), &items)?;
    let failed = items.iter().any(|i| i.status == CheckStatus::Fail);
    Ok(if failed {
        Verdict::Violated
    } else {
        Verdict::Passed
    })
}
