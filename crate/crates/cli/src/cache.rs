//! On-disk cache of band tables, keyed by a digest of everything that
//! determines them. JSON floats round-trip exactly, so a cached table is
//! bit-identical to a fresh one.

use anyhow::{Context, Result};
use hill_kg::bands::BAND_TABLE_SCHEMA;
use hill_kg::{find_n_bands, BandConfig, BandTable, PeriodicPotential};
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

#[derive(Serialize)]
struct Key<'a> {
    schema: u32,
    potential: &'a PeriodicPotential,
    n_bands: usize,
    cfg: &'a BandConfig,
}

pub fn cache_path(dir: &Path, pot: &PeriodicPotential, n_bands: usize, cfg: &BandConfig) -> PathBuf {
    let key = serde_json::to_vec(&Key {
        schema: BAND_TABLE_SCHEMA,
        potential: pot,
        n_bands,
        cfg,
    })
    .expect("key serializes");
    let digest = Sha256::digest(&key);
    let mut name = String::from("bandtable-");
    for b in &digest[..8] {
        write!(name, "{b:02x}").unwrap();
    }
    name.push_str(".json");
    dir.join(name)
}

/// Load the table from `dir` when present, otherwise compute and store it.
/// `dir = None` bypasses the cache.
pub fn band_table(dir: Option<&Path>, pot: &PeriodicPotential, n_bands: usize, cfg: &BandConfig) -> Result<BandTable> {
    let Some(dir) = dir else {
        return Ok(find_n_bands(pot, n_bands, cfg)?);
    };
    let path = cache_path(dir, pot, n_bands, cfg);
    if let Ok(text) = std::fs::read_to_string(&path) {
        match serde_json::from_str::<BandTable>(&text) {
            Ok(t) if t.schema_version == BAND_TABLE_SCHEMA => return Ok(t),
            _ => eprintln!("ignoring stale cache file {}", path.display()),
        }
    }
    let table = find_n_bands(pot, n_bands, cfg)?;
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    std::fs::write(&path, serde_json::to_string(&table)?).with_context(|| format!("writing {}", path.display()))?;
    Ok(table)
}
