//! Observable-table import/export: raw little-endian f64 arrays in rank
//! order, with a JSON sidecar `{n, name, sha256}` next to the data file.

use crate::chains::ObservableTable;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fs;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TableSidecar {
    pub n: usize,
    pub name: String,
    pub sha256: String,
}

fn le_bytes(values: &[f64]) -> Vec<u8> {
    let mut bytes = Vec::with_capacity(values.len() * 8);
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    bytes
}

fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Short content hash of a value table, for report contexts.
pub fn fingerprint(values: &[f64]) -> String {
    sha256_hex(&le_bytes(values))[..12].to_string()
}

fn sidecar_path(data_path: &Path) -> PathBuf {
    let mut p = data_path.as_os_str().to_owned();
    p.push(".json");
    PathBuf::from(p)
}

/// Writes the table as raw little-endian f64 plus `<path>.json` sidecar.
pub fn write_table(table: &ObservableTable, name: &str, path: &Path) -> Result<()> {
    let bytes = le_bytes(table.values());
    let sidecar = TableSidecar {
        n: table.n(),
        name: name.to_string(),
        sha256: sha256_hex(&bytes),
    };
    fs::write(path, &bytes)?;
    fs::write(sidecar_path(path), serde_json::to_vec_pretty(&sidecar)?)?;
    Ok(())
}

/// Reads a table written by [`write_table`], verifying length and checksum
/// against the sidecar.
pub fn read_table(path: &Path) -> Result<(ObservableTable, TableSidecar)> {
    let bytes = fs::read(path)?;
    let sidecar: TableSidecar = serde_json::from_slice(&fs::read(sidecar_path(path))?)?;
    if bytes.len() % 8 != 0 {
        return Err(Error::InvalidParams(format!(
            "data length {} is not a multiple of 8",
            bytes.len()
        )));
    }
    let got = sha256_hex(&bytes);
    if got != sidecar.sha256 {
        return Err(Error::InvalidParams(format!(
            "checksum mismatch: sidecar {} vs data {got}",
            sidecar.sha256
        )));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    let table = ObservableTable::new(sidecar.n, values)?;
    Ok((table, sidecar))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_with_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("psi.f64");
        let table = ObservableTable::from_fn(4, |c| c.letters()[0] as f64).unwrap();
        write_table(&table, "first-letter", &path).unwrap();
        let (back, sidecar) = read_table(&path).unwrap();
        assert_eq!(back.values(), table.values());
        assert_eq!(sidecar.n, 4);
        assert_eq!(sidecar.name, "first-letter");
    }

    #[test]
    fn corrupted_data_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.f64");
        let table = ObservableTable::constant(3, 1.0).unwrap();
        write_table(&table, "ones", &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[0] ^= 0xff;
        std::fs::write(&path, &bytes).unwrap();
        assert!(read_table(&path).is_err());
    }

    #[test]
    fn fingerprint_is_stable_and_sensitive() {
        let a = fingerprint(&[1.0, 2.0, 3.0]);
        let b = fingerprint(&[1.0, 2.0, 3.0]);
        let c = fingerprint(&[1.0, 2.0, 3.0000001]);
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.len(), 12);
    }
}
