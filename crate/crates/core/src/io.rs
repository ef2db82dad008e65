//! Block-CSV persistence shared by Markov sequences and gain schedules.
//!
//! Each matrix block is one CSV file, one matrix row per line. Values are
//! written with Rust's shortest round-trip formatting so a reload is
//! bit-exact.

use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linalg::Mat;

pub fn matrix_to_csv(m: &Mat) -> String {
    let mut s = String::with_capacity(m.len() * 24);
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            if c > 0 {
                s.push(',');
            }
            let _ = write!(s, "{:?}", m[(r, c)]);
        }
        s.push('\n');
    }
    s
}

pub fn matrix_from_csv(text: &str, origin: &Path) -> Result<Mat> {
    let rows: Vec<Vec<f64>> = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| {
            l.split(',')
                .map(|t| {
                    t.trim().parse::<f64>().map_err(|e| {
                        Error::parse(origin, format!("line {}: '{}': {e}", i + 1, t.trim()))
                    })
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let ncols = rows.first().map_or(0, |r| r.len());
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != ncols) {
        return Err(Error::parse(
            origin,
            format!("line {}: expected {ncols} columns, found {}", i + 1, r.len()),
        ));
    }
    Ok(Mat::from_fn(rows.len(), ncols, |r, c| rows[r][c]))
}

pub fn block_file_name(prefix: &str, index: usize) -> String {
    format!("{prefix}_{index:03}.csv")
}

/// Writes `prefix_000.csv`, `prefix_001.csv`, ... and feeds their bytes to
/// `hasher` in order.
pub fn write_blocks(dir: &Path, prefix: &str, blocks: &[Mat], hasher: &mut Sha256) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for (i, b) in blocks.iter().enumerate() {
        let text = matrix_to_csv(b);
        hasher.update(text.as_bytes());
        std::fs::write(dir.join(block_file_name(prefix, i)), text)?;
    }
    Ok(())
}

pub fn read_blocks(dir: &Path, prefix: &str, count: usize, hasher: &mut Sha256) -> Result<Vec<Mat>> {
    (0..count)
        .map(|i| {
            let path = dir.join(block_file_name(prefix, i));
            let text = std::fs::read_to_string(&path)?;
            hasher.update(text.as_bytes());
            matrix_from_csv(&text, &path)
        })
        .collect()
}

pub fn hex_digest(hasher: Sha256) -> String {
    hasher
        .finalize()
        .iter()
        .fold(String::with_capacity(64), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    hex_digest(h)
}

pub fn read_toml<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    toml::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))
}

pub fn write_toml<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = toml::to_string(value).map_err(|e| Error::parse(path, e.to_string()))?;
    std::fs::write(path, text)?;
    Ok(())
}
