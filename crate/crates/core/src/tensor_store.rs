//! Named 2-D tensors on disk: a text manifest plus a flat little-endian
//! `f32` blob. Used for model checkpoints and graph feature sidecars.
//!
//! ```text
//! # free-form header lines
//! format	lifelog-checkpoint
//! version	1
//! dtype	f32le
//! data	model.bin
//! meta	kappa	1
//! block	enc.w1	28	32	0
//! ```
//! Block offsets are in bytes from the start of the data file.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::{Array2, ArrayView2};
use thiserror::Error;

pub const STORE_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: line {line}: {reason}")]
    Manifest {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("{path}: {reason}")]
    Data { path: PathBuf, reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockEntry {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct StoreManifest {
    pub format: String,
    pub version: u32,
    pub data_file: String,
    pub meta: Vec<(String, String)>,
    pub blocks: Vec<BlockEntry>,
}

impl StoreManifest {
    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes `blocks` next to `manifest_path`; the data file name is the
/// manifest's stem with a `.bin` extension.
pub fn write_store(
    manifest_path: &Path,
    format: &str,
    header: &[String],
    meta: &[(String, String)],
    blocks: &[(String, ArrayView2<f64>)],
) -> Result<(), StoreError> {
    let bin_path = manifest_path.with_extension("bin");
    let data_file = bin_path
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let mut text = String::new();
    for h in header {
        text.push_str(&format!("# {h}\n"));
    }
    text.push_str(&format!("format\t{format}\nversion\t{STORE_VERSION}\ndtype\tf32le\ndata\t{data_file}\n"));
    for (k, v) in meta {
        text.push_str(&format!("meta\t{k}\t{v}\n"));
    }
    let mut blob: Vec<u8> = Vec::new();
    for (name, arr) in blocks {
        let (rows, cols) = arr.dim();
        text.push_str(&format!("block\t{name}\t{rows}\t{cols}\t{}\n", blob.len()));
        for &v in arr.iter() {
            blob.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    let mut f = fs::File::create(manifest_path).map_err(io(manifest_path))?;
    f.write_all(text.as_bytes()).map_err(io(manifest_path))?;
    fs::write(&bin_path, &blob).map_err(io(&bin_path))?;
    Ok(())
}

pub fn read_manifest(manifest_path: &Path) -> Result<StoreManifest, StoreError> {
    let text = fs::read_to_string(manifest_path).map_err(io(manifest_path))?;
    let mut m = StoreManifest::default();
    for (i, line) in text.lines().enumerate() {
        let bad = |reason: &str| StoreError::Manifest {
            path: manifest_path.to_path_buf(),
            line: i + 1,
            reason: reason.to_string(),
        };
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        match cols[0] {
            "format" if cols.len() == 2 => m.format = cols[1].to_string(),
            "version" if cols.len() == 2 => {
                m.version = cols[1].parse().map_err(|_| bad("bad version"))?;
                if m.version != STORE_VERSION {
                    return Err(bad("unsupported version"));
                }
            }
            "dtype" if cols.len() == 2 => {
                if cols[1] != "f32le" {
                    return Err(bad("unsupported dtype"));
                }
            }
            "data" if cols.len() == 2 => m.data_file = cols[1].to_string(),
            "meta" if cols.len() == 3 => m.meta.push((cols[1].to_string(), cols[2].to_string())),
            "block" if cols.len() == 5 => {
                let num = |s: &str| s.parse::<usize>().map_err(|_| bad("bad block number"));
                m.blocks.push(BlockEntry {
                    name: cols[1].to_string(),
                    rows: num(cols[2])?,
                    cols: num(cols[3])?,
                    offset: num(cols[4])?,
                });
            }
            _ => return Err(bad("unrecognized manifest line")),
        }
    }
    if m.format.is_empty() || m.data_file.is_empty() {
        return Err(StoreError::Manifest {
            path: manifest_path.to_path_buf(),
            line: 0,
            reason: "missing format or data entry".into(),
        });
    }
    Ok(m)
}

/// Reads the manifest and all blocks, widening values to `f64`.
pub fn read_store(manifest_path: &Path) -> Result<(StoreManifest, Vec<Array2<f64>>), StoreError> {
    let manifest = read_manifest(manifest_path)?;
    let bin_path = manifest_path
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .join(&manifest.data_file);
    let blob = fs::read(&bin_path).map_err(io(&bin_path))?;
    let mut arrays = Vec::with_capacity(manifest.blocks.len());
    for b in &manifest.blocks {
        let len = b.rows * b.cols;
        let end = b.offset + 4 * len;
        if end > blob.len() {
            return Err(StoreError::Data {
                path: bin_path.clone(),
                reason: format!("block {} runs past end of data", b.name),
            });
        }
        let values: Vec<f64> = blob[b.offset..end]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        arrays.push(Array2::from_shape_vec((b.rows, b.cols), values).expect("length checked"));
    }
    Ok((manifest, arrays))
}
