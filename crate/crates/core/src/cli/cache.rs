use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::RunConfig;
use crate::cell::{homogenized_tensor, solve_cell, CellSolution, HomogenizedTensor};
use crate::error::{Error, Result};
use crate::fem::Coefficient;
use crate::geometry::{mesh_unit_cell, HoleSpec};

/// Bumped whenever the cell discretization changes in a way that alters results.
const CACHE_FORMAT: u32 = 1;

#[derive(Serialize)]
struct KeyInput<'a> {
    format: u32,
    holes: &'a [HoleSpec],
    segments: usize,
    coefficient: &'a Coefficient,
    target_h: f64,
}

/// Content hash of everything the cell solve depends on.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CacheKey(pub String);

impl CacheKey {
    pub fn of(config: &RunConfig) -> Result<Self> {
        let holes = config.holes()?;
        let input = KeyInput {
            format: CACHE_FORMAT,
            holes: &holes,
            segments: config.cell.segments,
            coefficient: &config.coefficient,
            target_h: config.cell.target_h,
        };
        let bytes = serde_json::to_vec(&input)?;
        Ok(CacheKey(hex::encode(Sha256::digest(&bytes))))
    }

    pub fn file_name(&self) -> String {
        format!("cell-{}.json", self.0)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CellEntry {
    pub key: CacheKey,
    pub solution: CellSolution,
    pub tensor: HomogenizedTensor,
}

/// Where a cell entry came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CacheStatus {
    Hit,
    Miss,
    Disabled,
}

impl CacheStatus {
    pub fn name(self) -> &'static str {
        match self {
            CacheStatus::Hit => "hit",
            CacheStatus::Miss => "miss",
            CacheStatus::Disabled => "disabled",
        }
    }
}

pub fn compute_cell(config: &RunConfig, key: CacheKey) -> Result<CellEntry> {
    let geometry = config.geometry()?;
    let mesh = mesh_unit_cell(&geometry, config.cell.target_h)?;
    let solution = solve_cell(&geometry, &mesh, &config.coefficient)?;
    let tensor = homogenized_tensor(&solution)?;
    Ok(CellEntry {
        key,
        solution,
        tensor,
    })
}

fn read_entry(path: &Path, key: &CacheKey) -> Option<CellEntry> {
    let text = fs::read(path).ok()?;
    let entry: CellEntry = serde_json::from_slice(&text).ok()?;
    (entry.key == *key).then_some(entry)
}

/// Loads the cell entry for `config` from `dir`, solving and storing it on a
/// miss. Unreadable or foreign entries are treated as misses and overwritten.
pub fn load_or_compute(config: &RunConfig, dir: Option<&Path>) -> Result<(CellEntry, CacheStatus)> {
    let key = CacheKey::of(config)?;
    let Some(dir) = dir else {
        return Ok((compute_cell(config, key)?, CacheStatus::Disabled));
    };
    let path = dir.join(key.file_name());
    if let Some(entry) = read_entry(&path, &key) {
        return Ok((entry, CacheStatus::Hit));
    }
    let entry = compute_cell(config, key)?;
    fs::create_dir_all(dir)?;
    let tmp: PathBuf = dir.join(format!(
        ".{}.tmp{}",
        entry.key.file_name(),
        std::process::id()
    ));
    fs::write(&tmp, serde_json::to_vec(&entry)?)?;
    fs::rename(&tmp, &path).map_err(Error::from)?;
    Ok((entry, CacheStatus::Miss))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(text: &str) -> RunConfig {
        RunConfig::parse(text).unwrap()
    }

    const HOLED: &str = "[cell]\ntarget_h = 0.125\nsegments = 16\nholes = [{ center = [0.5, 0.5], radius = 0.2, phase = 1 }]\n";

    #[test]
    fn keys_track_every_cell_parameter() {
        let base = config(HOLED);
        let k = CacheKey::of(&base).unwrap();
        assert_eq!(k, CacheKey::of(&config(HOLED)).unwrap());
        assert_eq!(k.0.len(), 64);

        let mut c = base.clone();
        c.cell.target_h = 0.1;
        assert_ne!(k, CacheKey::of(&c).unwrap());
        let mut c = base.clone();
        c.cell.segments = 17;
        assert_ne!(k, CacheKey::of(&c).unwrap());
        let mut c = base.clone();
        c.cell.holes[0].radius = 0.21;
        assert_ne!(k, CacheKey::of(&c).unwrap());
        let mut c = base.clone();
        c.cell.holes[0].phase = 2;
        assert_ne!(k, CacheKey::of(&c).unwrap());
        let mut c = base.clone();
        c.coefficient = Coefficient::layered_default();
        assert_ne!(k, CacheKey::of(&c).unwrap());

        // Parameters the cell solve does not see leave the key alone.
        let mut c = base.clone();
        c.sweep.n = vec![3];
        c.data.f0 = crate::fem::ScalarField::Constant { value: 2.0 };
        assert_eq!(k, CacheKey::of(&c).unwrap());
    }

    #[test]
    fn hit_is_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = config(HOLED);
        let (cold, s1) = load_or_compute(&cfg, Some(dir.path())).unwrap();
        let (warm, s2) = load_or_compute(&cfg, Some(dir.path())).unwrap();
        assert_eq!((s1, s2), (CacheStatus::Miss, CacheStatus::Hit));
        let bits = |t: &HomogenizedTensor| {
            t.matrix
                .iter()
                .flatten()
                .map(|v| v.to_bits())
                .collect::<Vec<_>>()
        };
        assert_eq!(bits(&cold.tensor), bits(&warm.tensor));
        assert_eq!(cold.tensor, warm.tensor);
        assert_eq!(cold.solution.t, warm.solution.t);
        assert_eq!(cold.solution.psi, warm.solution.psi);
        assert_eq!(
            cold.solution.mesh.fingerprint(),
            warm.solution.mesh.fingerprint()
        );
    }

    #[test]
    fn corrupt_entry_is_recomputed() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = config(HOLED);
        let key = CacheKey::of(&cfg).unwrap();
        fs::write(dir.path().join(key.file_name()), b"{ not json").unwrap();
        let (_, s) = load_or_compute(&cfg, Some(dir.path())).unwrap();
        assert_eq!(s, CacheStatus::Miss);
        let (_, s) = load_or_compute(&cfg, Some(dir.path())).unwrap();
        assert_eq!(s, CacheStatus::Hit);
    }
}
