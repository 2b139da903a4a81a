//! Report emission and the on-disk field cache.
//!
//! Artifacts are written with a stable layout so that reruns with the same
//! configuration and master seed are byte-identical: CSV columns appear in a
//! fixed order, floats are printed at 12 significant digits, and provenance
//! metadata (content hashes of the configuration and upstream artifacts)
//! rides in `#`-prefixed comment lines at the top of each file.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::pde::{field_from_parts, Field};

/// Hex SHA-256 of a byte string; the provenance primitive.
pub fn content_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    hex(&h.finalize())
}

/// Hash of a serializable value via its canonical JSON encoding.
pub fn value_hash<T: Serialize>(value: &T) -> Result<String> {
    Ok(content_hash(serde_json::to_vec(value)?.as_slice()))
}

fn hex(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(2 * bytes.len());
    for b in bytes {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

/// Format a float at 12 significant digits, with a stable representation for
/// the non-finite and signed-zero corner cases.
pub fn format_sig(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let mag = x.abs().log10().floor() as i32;
    // Plain decimal for moderate magnitudes, scientific otherwise.
    if (-4..12).contains(&mag) {
        let decimals = (11 - mag).max(0) as usize;
        let s = format!("{x:.decimals$}");
        // Trim trailing zeros (and a bare trailing dot) for stability across
        // magnitudes that round to the same value.
        if s.contains('.') {
            let t = s.trim_end_matches('0').trim_end_matches('.');
            t.to_string()
        } else {
            s
        }
    } else {
        format!("{x:.11e}")
    }
}

/// A CSV artifact: provenance comment lines, a fixed header, numeric rows.
#[derive(Debug, Clone, Default)]
pub struct CsvReport {
    /// Provenance lines, emitted as `# key: value` in insertion order.
    pub provenance: Vec<(String, String)>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl CsvReport {
    pub fn new(columns: &[&str]) -> Self {
        CsvReport {
            provenance: Vec::new(),
            columns: columns.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn with_provenance(mut self, key: &str, value: impl Into<String>) -> Self {
        self.provenance.push((key.to_string(), value.into()));
        self
    }

    pub fn push_row(&mut self, row: Vec<f64>) {
        assert_eq!(row.len(), self.columns.len(), "row width mismatch");
        self.rows.push(row);
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.provenance {
            out.push_str(&format!("# {k}: {v}\n"));
        }
        out.push_str(&self.columns.join(","));
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|&x| format_sig(x)).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    pub fn write_to(&self, path: &Path) -> Result<String> {
        let body = self.render();
        write_atomic(path, body.as_bytes())?;
        Ok(content_hash(body.as_bytes()))
    }
}

/// Write a JSON artifact with a provenance envelope:
/// `{ "provenance": {...}, "payload": <value> }`, pretty-printed with sorted
/// provenance keys so emission is deterministic. Returns the content hash.
pub fn write_json<T: Serialize>(
    path: &Path,
    provenance: &[(String, String)],
    payload: &T,
) -> Result<String> {
    let mut prov = serde_json::Map::new();
    for (k, v) in provenance {
        prov.insert(k.clone(), serde_json::Value::String(v.clone()));
    }
    let doc = serde_json::json!({
        "provenance": serde_json::Value::Object(prov),
        "payload": payload,
    });
    let body = serde_json::to_string_pretty(&doc)?;
    write_atomic(path, body.as_bytes())?;
    Ok(content_hash(body.as_bytes()))
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Sidecar header stored next to each cached field's binary block.
#[derive(Debug, Clone, Serialize, serde::Deserialize)]
struct FieldSidecar {
    grid: crate::pde::GridConfig,
    boundary: crate::model::Boundary,
    meta: crate::pde::FieldMeta,
    /// Hash of the configuration that produced the field; the cache key.
    config_hash: String,
    /// Hash of the binary value block, checked on load.
    values_hash: String,
}

/// Disk cache for solved fields, keyed by a content hash of the producing
/// configuration. Values live in a flat binary block (little-endian f64,
/// row-major over time then space) with a JSON sidecar header; a stale or
/// corrupted entry is treated as a miss.
#[derive(Debug, Clone)]
pub struct FieldCache {
    dir: PathBuf,
}

impl FieldCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        FieldCache { dir: dir.into() }
    }

    fn paths(&self, key: &str) -> (PathBuf, PathBuf) {
        (
            self.dir.join(format!("{key}.json")),
            self.dir.join(format!("{key}.f64")),
        )
    }

    pub fn store(&self, key: &str, field: &Field) -> Result<()> {
        fs::create_dir_all(&self.dir)?;
        let mut block = Vec::with_capacity(8 * field.values().len());
        for &v in field.values() {
            block.extend_from_slice(&v.to_le_bytes());
        }
        let sidecar = FieldSidecar {
            grid: field.grid.clone(),
            boundary: field.boundary.clone(),
            meta: field.meta.clone(),
            config_hash: key.to_string(),
            values_hash: content_hash(&block),
        };
        let (sc_path, bin_path) = self.paths(key);
        write_atomic(&bin_path, &block)?;
        write_atomic(&sc_path, serde_json::to_string_pretty(&sidecar)?.as_bytes())?;
        Ok(())
    }

    /// Load the entry for `key`, or `None` on miss / hash mismatch.
    pub fn load(&self, key: &str) -> Result<Option<Field>> {
        let (sc_path, bin_path) = self.paths(key);
        if !sc_path.exists() || !bin_path.exists() {
            return Ok(None);
        }
        let sidecar: FieldSidecar = serde_json::from_str(&fs::read_to_string(&sc_path)?)?;
        if sidecar.config_hash != key {
            return Ok(None);
        }
        let block = fs::read(&bin_path)?;
        if content_hash(&block) != sidecar.values_hash || block.len() % 8 != 0 {
            return Ok(None);
        }
        let values: Vec<f64> = block
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        match field_from_parts(sidecar.grid, sidecar.boundary, sidecar.meta, values) {
            Ok(field) => Ok(Some(field)),
            Err(Error::Schema { .. }) => Ok(None),
            Err(e) => Err(e),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Boundary, Payoff};
    use crate::pde::{solve_value, GridConfig};

    #[test]
    fn format_sig_is_stable_and_12_digits() {
        assert_eq!(format_sig(0.0), "0");
        assert_eq!(format_sig(1.0), "1");
        assert_eq!(format_sig(0.5390028524), "0.5390028524");
        assert_eq!(format_sig(1.0 / 3.0), "0.333333333333");
        assert_eq!(format_sig(-123456.789012345), "-123456.789012");
        assert_eq!(format_sig(1.23456789e-7), "1.23456789000e-7");
        assert_eq!(format_sig(9.876543210987e14), "9.87654321099e14");
    }

    #[test]
    fn csv_layout_is_deterministic() {
        let mut r = CsvReport::new(&["n", "mean", "stderr"]).with_provenance("config", "abc123");
        r.push_row(vec![100.0, 0.53, 0.001]);
        r.push_row(vec![400.0, 0.535, 0.0005]);
        let a = r.render();
        let b = r.render();
        assert_eq!(a, b);
        assert!(a.starts_with("# config: abc123\nn,mean,stderr\n"));
        assert_eq!(a.lines().count(), 4);
    }

    #[test]
    fn hash_distinguishes_contents() {
        assert_ne!(content_hash(b"a"), content_hash(b"b"));
        assert_eq!(content_hash(b"a").len(), 64);
    }

    #[test]
    fn field_cache_round_trip_and_corruption_miss() {
        let dir = std::env::temp_dir().join(format!("field-cache-test-{}", std::process::id()));
        let cache = FieldCache::new(&dir);
        let mut grid = GridConfig::new(4.0, 2.0, 33, 33);
        grid.truncation_tol = 0.5; // tiny smoke grid; truncation is irrelevant here
        let field = solve_value(
            &Boundary::standard(),
            &|t: f64| Payoff::standard().value(t, 0.0),
            "payoff",
            &grid,
        )
        .unwrap();
        let key = value_hash(&grid).unwrap();
        cache.store(&key, &field).unwrap();
        let loaded = cache.load(&key).unwrap().expect("cache hit");
        assert_eq!(loaded.values(), field.values());
        assert_eq!(loaded.grid, field.grid);
        // A different key misses; a corrupted block degrades to a miss.
        assert!(cache.load("0000").unwrap().is_none());
        let (_, bin) = cache.paths(&key);
        fs::write(&bin, b"garbage").unwrap();
        assert!(cache.load(&key).unwrap().is_none());
        fs::remove_dir_all(&dir).unwrap();
    }
}
