//! Common output of every decomposition: complex spatial modes with a
//! frequency, a growth rate and an optional ranking weight each.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;
use crate::linalg::{complex_to_real_pairs, C64};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum MethodTag {
    Dmd,
    Spod,
    Mvgpr,
    Truth,
}

/// Complex modes (one per column) with frequency in Hz and growth rate in
/// 1/s. Conjugate pairs are stored once, with non-negative frequency.
#[derive(Clone, Debug, PartialEq)]
pub struct ModeSet {
    modes: DMatrix<C64>,
    frequencies: Vec<f64>,
    growth_rates: Vec<f64>,
    weights: Vec<f64>,
    method: MethodTag,
    /// Free-form annotations (e.g. heuristic ordering, rank warnings).
    pub notes: Vec<String>,
}

impl ModeSet {
    pub fn new(
        modes: DMatrix<C64>,
        frequencies: Vec<f64>,
        growth_rates: Vec<f64>,
        weights: Vec<f64>,
        method: MethodTag,
    ) -> Result<Self> {
        let k = modes.ncols();
        if frequencies.len() != k || growth_rates.len() != k {
            return Err(Error::invalid(format!(
                "{k} modes but {} frequencies and {} growth rates",
                frequencies.len(),
                growth_rates.len()
            )));
        }
        if !weights.is_empty() && weights.len() != k {
            return Err(Error::invalid(format!("{k} modes but {} weights", weights.len())));
        }
        if let Some(f) = frequencies.iter().find(|f| !(**f >= 0.0)) {
            return Err(Error::invalid(format!("mode frequency {f} must be non-negative")));
        }
        if weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::invalid("mode weights must be non-negative"));
        }
        Ok(Self {
            modes,
            frequencies,
            growth_rates,
            weights,
            method,
            notes: Vec::new(),
        })
    }

    pub fn modes(&self) -> &DMatrix<C64> {
        &self.modes
    }

    pub fn frequencies(&self) -> &[f64] {
        &self.frequencies
    }

    pub fn growth_rates(&self) -> &[f64] {
        &self.growth_rates
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn method(&self) -> MethodTag {
        self.method
    }

    pub fn len(&self) -> usize {
        self.modes.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.ncols() == 0
    }

    pub fn n_rows(&self) -> usize {
        self.modes.nrows()
    }

    pub fn select(&self, idx: &[usize]) -> ModeSet {
        ModeSet {
            modes: self.modes.select_columns(idx),
            frequencies: idx.iter().map(|&i| self.frequencies[i]).collect(),
            growth_rates: idx.iter().map(|&i| self.growth_rates[i]).collect(),
            weights: if self.weights.is_empty() {
                Vec::new()
            } else {
                idx.iter().map(|&i| self.weights[i]).collect()
            },
            method: self.method,
            notes: self.notes.clone(),
        }
    }

    /// Replaces the mode matrix (e.g. after unprojection) keeping the
    /// spectral data.
    pub fn with_modes(&self, modes: DMatrix<C64>) -> Result<ModeSet> {
        if modes.ncols() != self.len() {
            return Err(Error::invalid("replacement mode matrix has wrong column count"));
        }
        let mut out = self.clone();
        out.modes = modes;
        Ok(out)
    }

    /// Indices of the `count` modes whose frequencies are nearest to
    /// `freq`; ties resolve towards the larger weight, then lower index.
    pub fn nearest(&self, freq: f64, count: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.sort_by(|&a, &b| {
            let da = (self.frequencies[a] - freq).abs();
            let db = (self.frequencies[b] - freq).abs();
            da.total_cmp(&db).then_with(|| {
                let wa = self.weights.get(a).copied().unwrap_or(0.0);
                let wb = self.weights.get(b).copied().unwrap_or(0.0);
                wb.total_cmp(&wa)
            })
        });
        idx.truncate(count);
        idx
    }

    /// Indices of modes whose frequency matches `freq` within `tol` Hz.
    pub fn group(&self, freq: f64, tol: f64) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| (self.frequencies[i] - freq).abs() <= tol)
            .collect()
    }

    /// Real `n × 2k` basis `[Re γ₁, Im γ₁, …]` of the selected modes.
    pub fn real_subspace(&self, idx: &[usize]) -> DMatrix<f64> {
        complex_to_real_pairs(&self.modes.select_columns(idx))
    }

    /// Distinct frequencies, merged within `tol` Hz, ascending.
    pub fn distinct_frequencies(&self, tol: f64) -> Vec<f64> {
        let mut f = self.frequencies.clone();
        f.sort_by(f64::total_cmp);
        let mut out: Vec<f64> = Vec::new();
        for v in f {
            match out.last() {
                Some(last) if (v - last).abs() <= tol => {}
                _ => out.push(v),
            }
        }
        out
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let meta = ModeSetMeta {
            method: self.method,
            n_rows: self.n_rows(),
            n_modes: self.len(),
            frequencies: self.frequencies.clone(),
            growth_rates: self.growth_rates.clone(),
            weights: self.weights.clone(),
            notes: self.notes.clone(),
            endianness: io::ENDIANNESS.into(),
            dtype: io::DTYPE.into(),
        };
        io::write_json(&dir.join("meta.json"), &meta)?;
        io::write_complex_bin(&dir.join("modes.bin"), &self.modes)
    }

    pub fn read(dir: &Path) -> Result<ModeSet> {
        let meta_path = dir.join("meta.json");
        let meta: ModeSetMeta = io::read_json(&meta_path)?;
        io::check_tags(&meta_path, &meta.endianness, &meta.dtype)?;
        let modes = io::read_complex_bin(&dir.join("modes.bin"), meta.n_rows, meta.n_modes)?;
        let mut set = ModeSet::new(
            modes,
            meta.frequencies,
            meta.growth_rates,
            meta.weights,
            meta.method,
        )
        .map_err(|e| Error::parse(&meta_path, 0, e.to_string()))?;
        set.notes = meta.notes;
        Ok(set)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModeSetMeta {
    method: MethodTag,
    n_rows: usize,
    n_modes: usize,
    frequencies: Vec<f64>,
    growth_rates: Vec<f64>,
    #[serde(default)]
    weights: Vec<f64>,
    #[serde(default)]
    notes: Vec<String>,
    endianness: String,
    dtype: String,
}
