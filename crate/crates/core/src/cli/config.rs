use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{check_coefficient, Coefficient, ScalarField};
use crate::fine_solver::{NonlinearPhase, DEFAULT_MAX_NEWTON, DEFAULT_NEWTON_TOL};
use crate::geometry::{HoleSpec, Phase, UnitCellGeometry, DEFAULT_SEGMENTS, MIN_SEGMENTS};

/// A run configuration, read from TOML.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub cell: CellConfig,
    #[serde(default)]
    pub coefficient: Coefficient,
    #[serde(default = "NonlinearPhase::identity")]
    pub phase1: NonlinearPhase,
    #[serde(default = "NonlinearPhase::identity")]
    pub phase2: NonlinearPhase,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellConfig {
    #[serde(default = "default_target_h")]
    pub target_h: f64,
    #[serde(default = "default_segments")]
    pub segments: usize,
    #[serde(default)]
    pub holes: Vec<HoleConfig>,
}

impl Default for CellConfig {
    fn default() -> Self {
        Self {
            target_h: default_target_h(),
            segments: default_segments(),
            holes: Vec::new(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HoleConfig {
    pub center: [f64; 2],
    pub radius: f64,
    pub phase: u8,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    #[serde(default)]
    pub f0: ScalarField,
    #[serde(default)]
    pub g1: ScalarField,
    #[serde(default)]
    pub g2: ScalarField,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default = "default_ns")]
    pub n: Vec<usize>,
    /// Homogenized mesh size; derived from the finest fine mesh when absent.
    #[serde(default)]
    pub hom_h: Option<f64>,
    #[serde(default = "default_blocks")]
    pub blocks: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            n: default_ns(),
            hom_h: None,
            blocks: default_blocks(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default = "default_newton_tol")]
    pub newton_tol: f64,
    #[serde(default = "default_max_newton")]
    pub max_newton: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            newton_tol: DEFAULT_NEWTON_TOL,
            max_newton: DEFAULT_MAX_NEWTON,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default)]
    pub dir: Option<PathBuf>,
    #[serde(default)]
    pub cache: Option<PathBuf>,
}

fn default_target_h() -> f64 {
    1.0 / 16.0
}
fn default_segments() -> usize {
    DEFAULT_SEGMENTS
}
fn default_ns() -> Vec<usize> {
    vec![2, 4, 8, 16]
}
fn default_blocks() -> usize {
    4
}
fn default_newton_tol() -> f64 {
    DEFAULT_NEWTON_TOL
}
fn default_max_newton() -> usize {
    DEFAULT_MAX_NEWTON
}

fn bad(field: &str, msg: impl std::fmt::Display) -> Error {
    Error::Config(format!("{field}: {msg}"))
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn phases(&self) -> [NonlinearPhase; 2] {
        [self.phase1, self.phase2]
    }

    pub fn g0(&self) -> [ScalarField; 2] {
        [self.data.g1, self.data.g2]
    }

    pub fn holes(&self) -> Result<Vec<HoleSpec>> {
        self.cell
            .holes
            .iter()
            .enumerate()
            .map(|(i, h)| {
                let phase = Phase::try_from(h.phase)
                    .map_err(|e| bad(&format!("cell.holes[{i}].phase"), e))?;
                Ok(HoleSpec::new(h.center, h.radius, phase))
            })
            .collect()
    }

    pub fn geometry(&self) -> Result<UnitCellGeometry> {
        UnitCellGeometry::new(self.holes()?, self.cell.segments).map_err(|e| bad("cell.holes", e))
    }

    pub fn validate(&self) -> Result<()> {
        let c = &self.cell;
        if !(c.target_h > 0.0 && c.target_h <= 0.5) {
            return Err(bad(
                "cell.target_h",
                format!("{} is not in (0, 0.5]", c.target_h),
            ));
        }
        if c.segments < MIN_SEGMENTS {
            return Err(bad(
                "cell.segments",
                format!("{} is below the minimum {MIN_SEGMENTS}", c.segments),
            ));
        }
        self.geometry()?;

        let (k1, k2) = self.coefficient.bounds();
        if !(k1 > 0.0 && k1 <= k2 && k2.is_finite()) {
            return Err(bad(
                "coefficient",
                format!("bounds ({k1}, {k2}) are not uniformly elliptic"),
            ));
        }
        if !check_coefficient(&self.coefficient, 16).passed() {
            return Err(bad(
                "coefficient",
                "samples violate the declared bounds or symmetry",
            ));
        }
        for (name, p) in [("phase1", self.phase1), ("phase2", self.phase2)] {
            let (c1, c2) = p.bounds();
            if !(c1 > 0.0 && c1 <= c2 && c2.is_finite()) {
                return Err(bad(
                    name,
                    format!("derivative bounds ({c1}, {c2}) are not monotone"),
                ));
            }
        }
        for (name, f) in [
            ("data.f0", self.data.f0),
            ("data.g1", self.data.g1),
            ("data.g2", self.data.g2),
        ] {
            if !f.eval([0.5, 0.5]).is_finite() {
                return Err(bad(name, "parameters are not finite"));
            }
        }

        let s = &self.sweep;
        if s.n.is_empty() {
            return Err(bad("sweep.n", "at least one value is required"));
        }
        if let Some(i) = s.n.iter().position(|&n| n == 0) {
            return Err(bad(&format!("sweep.n[{i}]"), "must be a positive integer"));
        }
        let mut sorted = s.n.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != s.n.len() {
            return Err(bad("sweep.n", "values must be distinct"));
        }
        if let Some(h) = s.hom_h {
            if !(h > 0.0 && h <= 0.5) {
                return Err(bad("sweep.hom_h", format!("{h} is not in (0, 0.5]")));
            }
        }
        if s.blocks == 0 {
            return Err(bad("sweep.blocks", "must be positive"));
        }
        if !(self.solver.newton_tol > 0.0 && self.solver.newton_tol.is_finite()) {
            return Err(bad("solver.newton_tol", "must be positive"));
        }
        if self.solver.max_newton == 0 {
            return Err(bad("solver.max_newton", "must be positive"));
        }
        Ok(())
    }
}

/// Parses `1/N`, `N` or a decimal that is the reciprocal of an integer.
pub fn parse_epsilon(text: &str) -> Result<usize> {
    let t = text.trim();
    let n = if let Some(d) = t.strip_prefix("1/") {
        d.trim().parse::<usize>().ok()
    } else if let Ok(n) = t.parse::<usize>() {
        Some(n)
    } else {
        t.parse::<f64>()
            .ok()
            .filter(|e| *e > 0.0 && *e <= 1.0)
            .and_then(|e| {
                let n = (1.0 / e).round();
                ((1.0 / n - e).abs() <= 1e-12 * e).then_some(n as usize)
            })
    };
    n.filter(|&n| n > 0)
        .ok_or_else(|| bad("--eps", format!("`{text}` is not of the form 1/N")))
}
