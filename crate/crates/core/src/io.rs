//! Dataset container: a directory holding `meta.json` and one
//! `real_<k>.bin` per realization (row-major little-endian f64,
//! `n_time × n_space`). The same binary conventions back the other
//! serialized artifacts (POD bases, mode sets, SPOD results).

use std::fs;
use std::path::Path;

use nalgebra::{Complex, DMatrix, DVector};
use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::data::{Realization, SnapshotEnsemble, TrainingPair};
use crate::error::{Error, Result};

pub const ENDIANNESS: &str = "little";
pub const DTYPE: &str = "f64";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DatasetMeta {
    spatial_shape: Vec<usize>,
    field_dim: usize,
    endianness: String,
    dtype: String,
    realizations: Vec<RealizationMeta>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RealizationMeta {
    file: String,
    times: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    phase_label: Option<f64>,
}

pub fn write_dataset(dir: &Path, ensemble: &SnapshotEnsemble) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut metas = Vec::with_capacity(ensemble.realizations().len());
    for (k, r) in ensemble.realizations().iter().enumerate() {
        let file = format!("real_{k}.bin");
        write_matrix_bin(&dir.join(&file), r.snapshots())?;
        metas.push(RealizationMeta {
            file,
            times: r.times().to_vec(),
            phase_label: r.phase_label,
        });
    }
    let meta = DatasetMeta {
        spatial_shape: ensemble.spatial_shape().to_vec(),
        field_dim: ensemble.field_dim(),
        endianness: ENDIANNESS.into(),
        dtype: DTYPE.into(),
        realizations: metas,
    };
    write_json(&dir.join("meta.json"), &meta)
}

pub fn read_dataset(dir: &Path) -> Result<SnapshotEnsemble> {
    let meta_path = dir.join("meta.json");
    let meta: DatasetMeta = read_json(&meta_path)?;
    check_tags(&meta_path, &meta.endianness, &meta.dtype)?;
    let n_space = meta.spatial_shape.iter().product::<usize>() * meta.field_dim;
    if n_space == 0 {
        return Err(Error::parse(&meta_path, 0, "spatial layout has zero size"));
    }
    let mut reals = Vec::with_capacity(meta.realizations.len());
    for (k, rm) in meta.realizations.into_iter().enumerate() {
        let path = dir.join(&rm.file);
        let values = read_f64_bin(&path)?;
        let expected = rm.times.len() * n_space;
        if values.len() != expected {
            return Err(Error::parse(
                &path,
                (values.len().min(expected) * 8) as u64,
                format!(
                    "realization {k}: header declares {} snapshots × {n_space} values = {expected}, payload holds {}",
                    rm.times.len(),
                    values.len()
                ),
            ));
        }
        if let Some(i) = rm.times.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::parse(
                &meta_path,
                0,
                format!("realization {k}: times not strictly increasing at index {}", i + 1),
            ));
        }
        let m = DMatrix::from_row_slice(rm.times.len(), n_space, &values);
        let mut r = Realization::new(rm.times, m)
            .map_err(|e| Error::parse(&path, 0, format!("realization {k}: {e}")))?;
        r.phase_label = rm.phase_label;
        reals.push(r);
    }
    SnapshotEnsemble::new(reals, meta.spatial_shape, meta.field_dim)
        .map_err(|e| Error::parse(&meta_path, 0, e.to_string()))
}

pub(crate) fn check_tags(path: &Path, endianness: &str, dtype: &str) -> Result<()> {
    if endianness != ENDIANNESS {
        return Err(Error::parse(path, 0, format!("unsupported endianness {endianness:?}")));
    }
    if dtype != DTYPE {
        return Err(Error::parse(path, 0, format!("unsupported dtype {dtype:?}")));
    }
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PairsMeta {
    n_pairs: usize,
    dim: usize,
    /// Row layout of `pairs.bin`.
    columns: String,
    endianness: String,
    dtype: String,
}

/// Training pairs as `pairs.json` + `pairs.bin`, one row per pair:
/// realization id, lag, anchor, target.
pub fn write_training_pairs(dir: &Path, pairs: &[TrainingPair]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let r = pairs.first().map_or(0, |p| p.anchor.len());
    let m = DMatrix::from_fn(pairs.len(), 2 + 2 * r, |i, j| {
        let p = &pairs[i];
        match j {
            0 => p.realization_id as f64,
            1 => p.lag,
            j if j < 2 + r => p.anchor[j - 2],
            j => p.target[j - 2 - r],
        }
    });
    write_matrix_bin(&dir.join("pairs.bin"), &m)?;
    let meta = PairsMeta {
        n_pairs: pairs.len(),
        dim: r,
        columns: "realization_id, lag, anchor[dim], target[dim]".into(),
        endianness: ENDIANNESS.into(),
        dtype: DTYPE.into(),
    };
    write_json(&dir.join("pairs.json"), &meta)
}

pub fn read_training_pairs(dir: &Path) -> Result<Vec<TrainingPair>> {
    let meta_path = dir.join("pairs.json");
    let meta: PairsMeta = read_json(&meta_path)?;
    check_tags(&meta_path, &meta.endianness, &meta.dtype)?;
    let r = meta.dim;
    let m = read_matrix_bin(&dir.join("pairs.bin"), meta.n_pairs, 2 + 2 * r)?;
    Ok(m.row_iter()
        .map(|row| TrainingPair {
            realization_id: row[0] as usize,
            lag: row[1],
            anchor: DVector::from_fn(r, |i, _| row[2 + i]),
            target: DVector::from_fn(r, |i, _| row[2 + r + i]),
        })
        .collect())
}

/// Row-major dump of a real matrix.
pub fn write_matrix_bin(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let mut bytes = Vec::with_capacity(m.len() * 8);
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            bytes.extend_from_slice(&m[(i, j)].to_le_bytes());
        }
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_matrix_bin(path: &Path, nrows: usize, ncols: usize) -> Result<DMatrix<f64>> {
    let v = read_f64_bin(path)?;
    if v.len() != nrows * ncols {
        return Err(Error::parse(
            path,
            (v.len().min(nrows * ncols) * 8) as u64,
            format!("expected {nrows}×{ncols} values, found {}", v.len()),
        ));
    }
    Ok(DMatrix::from_row_slice(nrows, ncols, &v))
}

/// Row-major dump of a complex matrix, re/im interleaved.
pub fn write_complex_bin(path: &Path, m: &DMatrix<Complex<f64>>) -> Result<()> {
    let mut bytes = Vec::with_capacity(m.len() * 16);
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            bytes.extend_from_slice(&m[(i, j)].re.to_le_bytes());
            bytes.extend_from_slice(&m[(i, j)].im.to_le_bytes());
        }
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_complex_bin(path: &Path, nrows: usize, ncols: usize) -> Result<DMatrix<Complex<f64>>> {
    let v = read_f64_bin(path)?;
    if v.len() != 2 * nrows * ncols {
        return Err(Error::parse(
            path,
            (v.len().min(2 * nrows * ncols) * 8) as u64,
            format!("expected {nrows}×{ncols} complex values, found {} reals", v.len()),
        ));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| {
        let k = 2 * (i * ncols + j);
        Complex::new(v[k], v[k + 1])
    }))
}

pub fn read_f64_bin(path: &Path) -> Result<Vec<f64>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() % 8 != 0 {
        let whole = bytes.len() - bytes.len() % 8;
        return Err(Error::parse(
            path,
            whole as u64,
            format!("truncated value: {} trailing bytes", bytes.len() - whole),
        ));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::invalid(format!("cannot serialize {}: {e}", path.display())))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_json(path, &text)
}

/// Parses JSON text, reporting failures with the byte offset of the
/// offending line/column.
pub fn parse_json<T: DeserializeOwned>(path: &Path, text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| {
        let offset = byte_offset(text, e.line(), e.column());
        Error::parse(
            path,
            offset as u64,
            format!("{e} (line {}, column {})", e.line(), e.column()),
        )
    })
}

/// Round-trip float formatting for CSV output (17 significant digits).
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes a CSV file with a header row; cells are written verbatim.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut text = header.join(",");
    text.push('\n');
    for row in rows {
        text.push_str(&row.join(","));
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let line_start: usize = text
        .split_inclusive('\n')
        .take(line - 1)
        .map(str::len)
        .sum();
    (line_start + column.saturating_sub(1)).min(text.len())
}
