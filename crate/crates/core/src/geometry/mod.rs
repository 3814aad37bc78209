//! Perforated unit cell, its triangulations and the ε-periodic tiling.
//!
//! The cell is `(0,1)²` minus a finite set of circular holes, each tagged
//! with one of two phases. Circles are represented by inscribed regular
//! polygons so that every measure used downstream can be taken either from
//! the closed-form disk formulas or from the polygonal mesh itself.

mod delaunay;
mod mesh;
mod mesher;
mod tile;

pub use mesh::{EdgeTag, TaggedEdge, TriMesh};
pub use mesher::mesh_unit_cell;
pub use tile::{tile_mesh, PerforatedDomainMesh};

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Absolute tolerance for coordinate matching.
pub const GEOM_TOL: f64 = 1e-12;

/// Minimum gap required between two holes and between a hole and the cell sides.
pub const HOLE_MARGIN: f64 = 0.02;

/// Default polygonal resolution of each hole.
pub const DEFAULT_SEGMENTS: usize = 64;

/// Fewest polygon sides the mesher accepts for a hole.
pub const MIN_SEGMENTS: usize = 8;

/// One of the two hole families.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Phase {
    One,
    Two,
}

impl Phase {
    pub const ALL: [Phase; 2] = [Phase::One, Phase::Two];

    /// Zero-based slot in two-element phase arrays.
    pub fn index(self) -> usize {
        match self {
            Phase::One => 0,
            Phase::Two => 1,
        }
    }

    pub fn number(self) -> u8 {
        self.index() as u8 + 1
    }

    pub fn hole_tag(self) -> EdgeTag {
        match self {
            Phase::One => EdgeTag::HolePhase1,
            Phase::Two => EdgeTag::HolePhase2,
        }
    }
}

impl TryFrom<u8> for Phase {
    type Error = String;

    fn try_from(value: u8) -> std::result::Result<Self, Self::Error> {
        match value {
            1 => Ok(Phase::One),
            2 => Ok(Phase::Two),
            other => Err(format!("phase must be 1 or 2, got {other}")),
        }
    }
}

impl From<Phase> for u8 {
    fn from(p: Phase) -> u8 {
        p.number()
    }
}

/// A circular hole in cell coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HoleSpec {
    pub center: [f64; 2],
    pub radius: f64,
    pub phase: Phase,
}

impl HoleSpec {
    pub fn new(center: [f64; 2], radius: f64, phase: Phase) -> Self {
        Self {
            center,
            radius,
            phase,
        }
    }

    /// Distance from the disk to the nearest cell side (negative when it sticks out).
    pub fn side_clearance(&self) -> f64 {
        let [x, y] = self.center;
        x.min(1.0 - x).min(y).min(1.0 - y) - self.radius
    }

    /// Gap between two disks (negative when they overlap).
    pub fn gap_to(&self, other: &HoleSpec) -> f64 {
        let dx = self.center[0] - other.center[0];
        let dy = self.center[1] - other.center[1];
        dx.hypot(dy) - self.radius - other.radius
    }

    /// Vertices of the inscribed regular polygon, counterclockwise from angle 0.
    pub fn polygon(&self, segments: usize) -> Vec<[f64; 2]> {
        (0..segments)
            .map(|k| {
                let t = 2.0 * PI * k as f64 / segments as f64;
                [
                    self.center[0] + self.radius * t.cos(),
                    self.center[1] + self.radius * t.sin(),
                ]
            })
            .collect()
    }
}

/// A constraint broken by a proposed hole layout.
#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    NonPositiveRadius { hole: usize },
    BoundaryContact { hole: usize, clearance: f64 },
    BoundaryMargin { hole: usize, clearance: f64 },
    Overlap { a: usize, b: usize, gap: f64 },
    Tangent { a: usize, b: usize },
    HoleMargin { a: usize, b: usize, gap: f64 },
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::NonPositiveRadius { hole } => {
                write!(f, "hole {hole}: radius must be positive")
            }
            Violation::BoundaryContact { hole, clearance } => {
                write!(
                    f,
                    "hole {hole}: touches or crosses the cell boundary (clearance {clearance:.6})"
                )
            }
            Violation::BoundaryMargin { hole, clearance } => write!(
                f,
                "hole {hole}: clearance {clearance:.6} to the cell boundary is below {HOLE_MARGIN}"
            ),
            Violation::Overlap { a, b, gap } => {
                write!(f, "holes {a} and {b} overlap (gap {gap:.6})")
            }
            Violation::Tangent { a, b } => write!(f, "holes {a} and {b} are tangent"),
            Violation::HoleMargin { a, b, gap } => {
                write!(f, "holes {a} and {b}: gap {gap:.6} is below {HOLE_MARGIN}")
            }
        }
    }
}

/// Outcome of [`validate_cell`]; empty `violations` means the layout is admissible.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CellValidation {
    pub violations: Vec<Violation>,
}

impl CellValidation {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks that every hole lies strictly inside the cell and that the holes are
/// pairwise disjoint and nontangent, with [`HOLE_MARGIN`] to spare.
pub fn validate_cell(holes: &[HoleSpec]) -> CellValidation {
    let mut violations = Vec::new();
    for (i, h) in holes.iter().enumerate() {
        if !(h.radius > 0.0) {
            violations.push(Violation::NonPositiveRadius { hole: i });
            continue;
        }
        let c = h.side_clearance();
        if c <= GEOM_TOL {
            violations.push(Violation::BoundaryContact {
                hole: i,
                clearance: c,
            });
        } else if c < HOLE_MARGIN {
            violations.push(Violation::BoundaryMargin {
                hole: i,
                clearance: c,
            });
        }
    }
    for a in 0..holes.len() {
        for b in a + 1..holes.len() {
            let gap = holes[a].gap_to(&holes[b]);
            if gap.abs() <= GEOM_TOL {
                violations.push(Violation::Tangent { a, b });
            } else if gap < 0.0 {
                violations.push(Violation::Overlap { a, b, gap });
            } else if gap < HOLE_MARGIN {
                violations.push(Violation::HoleMargin { a, b, gap });
            }
        }
    }
    CellValidation { violations }
}

/// Areas, perimeters and surface-to-volume ratios of a cell.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellMeasures {
    pub area_q0: f64,
    pub perimeter: [f64; 2],
    pub q: [f64; 2],
}

impl CellMeasures {
    pub fn from_area_and_perimeters(area_q0: f64, perimeter: [f64; 2]) -> Self {
        Self {
            area_q0,
            perimeter,
            q: [perimeter[0] / area_q0, perimeter[1] / area_q0],
        }
    }
}

/// The perforated unit cell `Q₀`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnitCellGeometry {
    pub holes: Vec<HoleSpec>,
    pub boundary_segments_per_hole: usize,
    pub area_q0: f64,
    pub perimeter_s1: f64,
    pub perimeter_s2: f64,
    pub q1: f64,
    pub q2: f64,
}

impl UnitCellGeometry {
    /// Validates the layout and fills in the closed-form measures.
    pub fn new(holes: Vec<HoleSpec>, boundary_segments_per_hole: usize) -> Result<Self> {
        let report = validate_cell(&holes);
        if !report.passed() {
            let msg: Vec<String> = report.violations.iter().map(|v| v.to_string()).collect();
            return Err(Error::InvalidCell(msg.join("; ")));
        }
        if boundary_segments_per_hole == 0 {
            return Err(Error::InvalidCell(
                "boundary_segments_per_hole must be positive".into(),
            ));
        }
        let m = measures_of(&holes);
        Ok(Self {
            holes,
            boundary_segments_per_hole,
            area_q0: m.area_q0,
            perimeter_s1: m.perimeter[0],
            perimeter_s2: m.perimeter[1],
            q1: m.q[0],
            q2: m.q[1],
        })
    }

    pub fn empty() -> Self {
        Self::new(Vec::new(), DEFAULT_SEGMENTS).expect("empty cell is valid")
    }

    pub fn has_phase(&self, phase: Phase) -> bool {
        self.holes.iter().any(|h| h.phase == phase)
    }

    /// Exact measures of the inscribed polygons, which is what a mesh of this
    /// cell reproduces.
    pub fn polygon_measures(&self) -> CellMeasures {
        let n = self.boundary_segments_per_hole as f64;
        let mut area = 1.0;
        let mut perim = [0.0; 2];
        for h in &self.holes {
            area -= 0.5 * n * h.radius * h.radius * (2.0 * PI / n).sin();
            perim[h.phase.index()] += 2.0 * n * h.radius * (PI / n).sin();
        }
        CellMeasures::from_area_and_perimeters(area, perim)
    }
}

fn measures_of(holes: &[HoleSpec]) -> CellMeasures {
    let mut area = 1.0;
    let mut perim = [0.0; 2];
    for h in holes {
        area -= PI * h.radius * h.radius;
        perim[h.phase.index()] += 2.0 * PI * h.radius;
    }
    CellMeasures::from_area_and_perimeters(area, perim)
}

/// Closed-form `(|Q₀|, |S⁽¹⁾|, |S⁽²⁾|, q₁, q₂)` from the disk formulas.
pub fn measures(cell: &UnitCellGeometry) -> CellMeasures {
    measures_of(&cell.holes)
}
