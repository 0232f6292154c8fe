//! On-disk formats: headerless CSV for matrices and point clouds, a binary
//! matrix container for caching, JSON sidecars for everything a CSV cannot
//! carry, and the append-only results table the experiments emit.

use std::fs::{File, OpenOptions};
use std::io::{BufReader, BufWriter, Read as _, Write as _};
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2, ArrayView2};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::datasets::{Latents, PairedDataset};
use crate::differential::{DifferentialResult, ExtractionInfo, Modality};
use crate::error::{Error, Result};
use crate::graph::PointCloud;
use crate::linalg::SpectrumSide;
use crate::spectral::EigenSystem;

const MATRIX_MAGIC: &[u8; 8] = b"DLATMTX1";
const EIGEN_MAGIC: &[u8; 8] = b"DLATEIG1";
const CONTAINER_VERSION: u32 = 1;

/// Shortest decimal form that parses back to the identical f64.
fn format_f64(v: f64) -> String {
    format!("{v}")
}

pub fn write_matrix_csv(path: &Path, m: &ArrayView2<f64>) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(BufWriter::new(File::create(path)?));
    for row in m.rows() {
        w.write_record(row.iter().map(|v| format_f64(*v)))?;
    }
    w.flush().map_err(std::io::Error::from)?;
    Ok(())
}

pub fn read_matrix_csv(path: &Path) -> Result<Array2<f64>> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(BufReader::new(File::open(path)?));
    let mut data: Vec<f64> = Vec::new();
    let mut cols = None;
    let mut rows = 0usize;
    for record in r.records() {
        let record = record?;
        let width = record.len();
        match cols {
            None => cols = Some(width),
            Some(c) if c != width => {
                return Err(Error::Format(format!(
                    "ragged csv: row {rows} has {width} fields, expected {c}"
                )))
            }
            _ => {}
        }
        for field in record.iter() {
            let v: f64 = field.trim().parse().map_err(|_| {
                Error::Format(format!("unparseable csv field {field:?} in row {rows}"))
            })?;
            data.push(v);
        }
        rows += 1;
    }
    let cols = cols.ok_or_else(|| Error::Format("empty csv matrix".into()))?;
    if cols == 0 {
        return Err(Error::Format("csv matrix with zero columns".into()));
    }
    Array2::from_shape_vec((rows, cols), data)
        .map_err(|e| Error::Format(format!("csv shape: {e}")))
}

pub fn write_point_cloud_csv(path: &Path, pc: &PointCloud) -> Result<()> {
    write_matrix_csv(path, &pc.data().view())
}

pub fn read_point_cloud_csv(path: &Path) -> Result<PointCloud> {
    PointCloud::new(read_matrix_csv(path)?)
}

fn write_f64_slice(w: &mut impl std::io::Write, data: &[f64]) -> std::io::Result<()> {
    for v in data {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_exact_f64(r: &mut impl std::io::Read, len: usize) -> Result<Vec<f64>> {
    let mut bytes = vec![0u8; len * 8];
    r.read_exact(&mut bytes)
        .map_err(|e| Error::Format(format!("binary container truncated: {e}")))?;
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunked")))
        .collect())
}

fn read_u64(r: &mut impl std::io::Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)
        .map_err(|e| Error::Format(format!("binary container truncated: {e}")))?;
    Ok(u64::from_le_bytes(b))
}

fn read_u32(r: &mut impl std::io::Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)
        .map_err(|e| Error::Format(format!("binary container truncated: {e}")))?;
    Ok(u32::from_le_bytes(b))
}

fn check_header(r: &mut impl std::io::Read, magic: &[u8; 8]) -> Result<()> {
    let mut got = [0u8; 8];
    r.read_exact(&mut got)
        .map_err(|e| Error::Format(format!("binary container truncated: {e}")))?;
    if &got != magic {
        return Err(Error::Format(format!(
            "bad container magic {:?}, expected {:?}",
            String::from_utf8_lossy(&got),
            String::from_utf8_lossy(magic)
        )));
    }
    let version = read_u32(r)?;
    if version != CONTAINER_VERSION {
        return Err(Error::Format(format!("unsupported container version {version}")));
    }
    Ok(())
}

fn checked_dim(v: u64, what: &str) -> Result<usize> {
    let max = 1u64 << 32;
    if v == 0 || v > max {
        return Err(Error::Format(format!("implausible {what} {v} in container")));
    }
    Ok(v as usize)
}

/// Binary matrix container: magic, version, rows, cols (little-endian u64),
/// then row-major f64 payload. Bit-exact, including non-finite values.
pub fn write_matrix_binary(path: &Path, m: &ArrayView2<f64>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MATRIX_MAGIC)?;
    w.write_all(&CONTAINER_VERSION.to_le_bytes())?;
    w.write_all(&(m.nrows() as u64).to_le_bytes())?;
    w.write_all(&(m.ncols() as u64).to_le_bytes())?;
    let owned;
    let slice = match m.as_slice() {
        Some(s) => s,
        None => {
            owned = m.to_owned();
            owned.as_slice().expect("owned row-major")
        }
    };
    write_f64_slice(&mut w, slice)?;
    w.flush()?;
    Ok(())
}

pub fn read_matrix_binary(path: &Path) -> Result<Array2<f64>> {
    let mut r = BufReader::new(File::open(path)?);
    check_header(&mut r, MATRIX_MAGIC)?;
    let rows = checked_dim(read_u64(&mut r)?, "row count")?;
    let cols = checked_dim(read_u64(&mut r)?, "column count")?;
    let data = read_exact_f64(&mut r, rows * cols)?;
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(Error::Format("trailing bytes after matrix payload".into()));
    }
    Array2::from_shape_vec((rows, cols), data)
        .map_err(|e| Error::Format(format!("binary shape: {e}")))
}

/// Eigendecomposition cache: header, spectrum side, source label, then the
/// eigenvalues and eigenvector matrix.
pub fn write_eigensystem(path: &Path, es: &EigenSystem) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(EIGEN_MAGIC)?;
    w.write_all(&CONTAINER_VERSION.to_le_bytes())?;
    let side: u8 = match es.side {
        SpectrumSide::Smallest => 0,
        SpectrumSide::Largest => 1,
    };
    w.write_all(&[side])?;
    let src = es.source.as_bytes();
    w.write_all(&(src.len() as u32).to_le_bytes())?;
    w.write_all(src)?;
    w.write_all(&(es.n() as u64).to_le_bytes())?;
    w.write_all(&(es.m() as u64).to_le_bytes())?;
    write_f64_slice(&mut w, es.eigenvalues.as_slice().expect("contiguous"))?;
    let owned;
    let slice = match es.eigenvectors.as_slice() {
        Some(s) => s,
        None => {
            owned = es.eigenvectors.to_owned();
            owned.as_slice().expect("owned row-major")
        }
    };
    write_f64_slice(&mut w, slice)?;
    w.flush()?;
    Ok(())
}

pub fn read_eigensystem(path: &Path) -> Result<EigenSystem> {
    let mut r = BufReader::new(File::open(path)?);
    check_header(&mut r, EIGEN_MAGIC)?;
    let mut side_byte = [0u8; 1];
    r.read_exact(&mut side_byte)
        .map_err(|e| Error::Format(format!("binary container truncated: {e}")))?;
    let side = match side_byte[0] {
        0 => SpectrumSide::Smallest,
        1 => SpectrumSide::Largest,
        b => return Err(Error::Format(format!("unknown spectrum side tag {b}"))),
    };
    let src_len = read_u32(&mut r)? as usize;
    if src_len > 1 << 20 {
        return Err(Error::Format(format!("implausible source label length {src_len}")));
    }
    let mut src = vec![0u8; src_len];
    r.read_exact(&mut src)
        .map_err(|e| Error::Format(format!("binary container truncated: {e}")))?;
    let source = String::from_utf8(src)
        .map_err(|e| Error::Format(format!("source label not utf-8: {e}")))?;
    let n = checked_dim(read_u64(&mut r)?, "row count")?;
    let m = checked_dim(read_u64(&mut r)?, "eigenpair count")?;
    let eigenvalues = Array1::from_vec(read_exact_f64(&mut r, m)?);
    let eigenvectors = Array2::from_shape_vec((n, m), read_exact_f64(&mut r, n * m)?)
        .map_err(|e| Error::Format(format!("eigenvector shape: {e}")))?;
    Ok(EigenSystem { eigenvalues, eigenvectors, side, source })
}

/// Sidecar written next to a differential CSV: everything about the run
/// that the bare vector columns do not carry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DifferentialSidecar {
    pub method: String,
    pub modality: Modality,
    pub iteration: usize,
    pub eigenvalues: Vec<f64>,
    pub info: ExtractionInfo,
}

pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
}

/// Writes the vectors as headerless CSV (one column per recovered vector)
/// plus a JSON sidecar with the method tag, eigenvalues, and extraction
/// parameters.
pub fn write_differential(csv_path: &Path, result: &DifferentialResult) -> Result<()> {
    write_matrix_csv(csv_path, &result.vectors.view())?;
    let sidecar = DifferentialSidecar {
        method: result.info.method.clone(),
        modality: result.modality,
        iteration: result.iteration,
        eigenvalues: result.eigenvalues.to_vec(),
        info: result.info.clone(),
    };
    write_json(&sidecar_path(csv_path), &sidecar)
}

pub fn read_differential(csv_path: &Path) -> Result<(Array2<f64>, DifferentialSidecar)> {
    let vectors = read_matrix_csv(csv_path)?;
    let sidecar: DifferentialSidecar = read_json(&sidecar_path(csv_path))?;
    if sidecar.eigenvalues.len() != vectors.ncols() {
        return Err(Error::Format(format!(
            "sidecar lists {} eigenvalues for {} vector columns",
            sidecar.eigenvalues.len(),
            vectors.ncols()
        )));
    }
    Ok((vectors, sidecar))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct DatasetSidecar {
    name: String,
    params: serde_json::Value,
    latents: Latents,
}

/// Dataset layout in a directory: xa.csv and xb.csv hold the observations,
/// latents.json holds ground truth and generator parameters.
pub fn export_dataset(dir: &Path, ds: &PairedDataset) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_point_cloud_csv(&dir.join("xa.csv"), &ds.xa)?;
    write_point_cloud_csv(&dir.join("xb.csv"), &ds.xb)?;
    let sidecar = DatasetSidecar {
        name: ds.name.clone(),
        params: ds.params.clone(),
        latents: ds.latents.clone(),
    };
    write_json(&dir.join("latents.json"), &sidecar)
}

pub fn import_dataset(dir: &Path) -> Result<PairedDataset> {
    let xa = read_point_cloud_csv(&dir.join("xa.csv"))?;
    let xb = read_point_cloud_csv(&dir.join("xb.csv"))?;
    let sidecar: DatasetSidecar = read_json(&dir.join("latents.json"))?;
    if xa.n() != xb.n() || sidecar.latents.theta.len() != xa.n() {
        return Err(Error::Format(format!(
            "inconsistent dataset: xa has {} rows, xb {}, latents {}",
            xa.n(),
            xb.n(),
            sidecar.latents.theta.len()
        )));
    }
    Ok(PairedDataset {
        xa,
        xb,
        latents: sidecar.latents,
        name: sidecar.name,
        params: sidecar.params,
    })
}

/// One scored run in the results table the plotting step consumes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub experiment: String,
    pub method: String,
    pub sigma: f64,
    pub seed: u64,
    pub score_name: String,
    pub value: f64,
    pub params_hash: String,
}

/// Hex digest (first 16 chars of sha-256) of a JSON parameter object with
/// recursively sorted keys, so logically equal configs hash identically.
pub fn params_hash(params: &serde_json::Value) -> String {
    fn canonical(v: &serde_json::Value, out: &mut String) {
        match v {
            serde_json::Value::Object(map) => {
                let mut keys: Vec<&String> = map.keys().collect();
                keys.sort();
                out.push('{');
                for (i, k) in keys.iter().enumerate() {
                    if i > 0 {
                        out.push(',');
                    }
                    out.push_str(&serde_json::to_string(k).expect("string"));
                    out.push(':');
                    canonical(&map[*k], out);
                }
                out.push('}');
            }
            serde_json::Value::Array(items) => {
                out.push('[');
                for (i, item) in items.iter().enumerate() {
                    if i > 0 {
                        out.push(',');
                    }
                    canonical(item, out);
                }
                out.push(']');
            }
            other => out.push_str(&other.to_string()),
        }
    }
    let mut text = String::new();
    canonical(params, &mut text);
    let digest = Sha256::digest(text.as_bytes());
    hex::encode(digest)[..16].to_string()
}

/// Appends rows to the results table, writing the header only when the file
/// is new or empty. Infinite scores round-trip through their decimal form.
pub fn append_score_rows(path: &Path, rows: &[ScoreRow]) -> Result<()> {
    let need_header = std::fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    let file = OpenOptions::new().create(true).append(true).open(path)?;
    let mut w = csv::WriterBuilder::new()
        .has_headers(need_header)
        .from_writer(BufWriter::new(file));
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(std::io::Error::from)?;
    Ok(())
}

pub fn read_score_rows(path: &Path) -> Result<Vec<ScoreRow>> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(BufReader::new(File::open(path)?));
    let mut rows = Vec::new();
    for record in r.deserialize() {
        rows.push(record?);
    }
    Ok(rows)
}
