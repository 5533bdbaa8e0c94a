//! Binary cache for partition tables.
//!
//! Layout: magic `HCGP`, format version, the inverse temperature's raw
//! bits, the table size, the `log Z` array, and a SHA-256 digest of
//! everything before it. A loaded table reproduces a fresh build
//! bit-for-bit because all derived arrays are deterministic functions of
//! `log Z`.

use crate::error::{io_err, LabError};
use hcg_core::energy::Beta;
use hcg_core::partition::PartitionTable;
use sha2::{Digest, Sha256};
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"HCGP";
const FORMAT_VERSION: u32 = 1;

fn payload_bytes(beta: Beta, log_z: &[f64]) -> Vec<u8> {
    let mut bytes = Vec::with_capacity(20 + log_z.len() * 8);
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    bytes.extend_from_slice(&beta.value().to_bits().to_le_bytes());
    bytes.extend_from_slice(&(log_z.len() as u64 - 1).to_le_bytes());
    for &z in log_z {
        bytes.extend_from_slice(&z.to_bits().to_le_bytes());
    }
    bytes
}

fn digest_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Checksum identifying a table's contents, identical for cached and
/// freshly built tables of the same parameters.
pub fn table_checksum(table: &PartitionTable) -> String {
    digest_hex(&payload_bytes(table.beta(), table.log_z_slice()))
}

/// Write a table to the cache file.
pub fn store(path: &Path, table: &PartitionTable) -> Result<String, LabError> {
    let payload = payload_bytes(table.beta(), table.log_z_slice());
    let digest = Sha256::digest(&payload);
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(io_err(parent))?;
        }
    }
    let mut file = fs::File::create(path).map_err(io_err(path))?;
    file.write_all(&payload).map_err(io_err(path))?;
    file.write_all(&digest).map_err(io_err(path))?;
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

/// Load a table from the cache file, verifying format, digest and key.
///
/// The file must carry the same inverse temperature (bit-exact) and at
/// least `n_max` entries.
pub fn load(path: &Path, beta: Beta, n_max: usize) -> Result<PartitionTable, LabError> {
    let mut bytes = Vec::new();
    fs::File::open(path)
        .map_err(io_err(path))?
        .read_to_end(&mut bytes)
        .map_err(io_err(path))?;
    if bytes.len() < 52 || &bytes[0..4] != MAGIC {
        return Err(LabError::Cache(format!(
            "{} is not a partition cache file",
            path.display()
        )));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(LabError::Cache(format!(
            "cache format version {version} does not match expected {FORMAT_VERSION}"
        )));
    }
    let (payload, digest) = bytes.split_at(bytes.len() - 32);
    if Sha256::digest(payload).as_slice() != digest {
        return Err(LabError::Cache(format!(
            "checksum mismatch in {}; the file is corrupt",
            path.display()
        )));
    }
    let stored_beta = f64::from_bits(u64::from_le_bytes(payload[8..16].try_into().unwrap()));
    if stored_beta.to_bits() != beta.value().to_bits() {
        return Err(LabError::Cache(format!(
            "cache holds beta = {stored_beta}, requested {}",
            beta.value()
        )));
    }
    let stored_n_max = u64::from_le_bytes(payload[16..24].try_into().unwrap()) as usize;
    if stored_n_max < n_max {
        return Err(LabError::Cache(format!(
            "cache covers n <= {stored_n_max}, requested {n_max}"
        )));
    }
    let body = &payload[24..];
    if body.len() != (stored_n_max + 1) * 8 {
        return Err(LabError::Cache("truncated cache payload".into()));
    }
    let log_z: Vec<f64> = body
        .chunks_exact(8)
        .map(|c| f64::from_bits(u64::from_le_bytes(c.try_into().unwrap())))
        .collect();
    Ok(PartitionTable::from_log_z(beta, log_z)?)
}

/// Load the table from `path` when possible, otherwise build it and write
/// the cache. Returns the table, its checksum, and whether it was loaded.
pub fn load_or_build(
    path: &Path,
    beta: Beta,
    n_max: usize,
    force_rebuild: bool,
) -> Result<(PartitionTable, String, bool), LabError> {
    if !force_rebuild && path.exists() {
        match load(path, beta, n_max) {
            Ok(table) => {
                let checksum = table_checksum(&table);
                return Ok((table, checksum, true));
            }
            Err(LabError::Cache(_)) => {} // stale key: rebuild below
            Err(other) => return Err(other),
        }
    }
    let table = PartitionTable::build(beta, n_max)?;
    let checksum = store(path, &table)?;
    Ok((table, checksum, false))
}
