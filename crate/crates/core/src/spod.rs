//! Spectral POD with one block per realization: windowed FFT of every
//! block, one-sided cross-spectral density per bin and its Hermitian
//! eigendecomposition.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::data::SnapshotEnsemble;
use crate::error::{Error, Result};
use crate::io;
use crate::linalg::C64;
use crate::modes::{MethodTag, ModeSet};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Window {
    #[default]
    Rectangular,
    Hamming,
}

impl Window {
    pub fn weights(self, n: usize) -> Vec<f64> {
        match self {
            Window::Rectangular => vec![1.0; n],
            Window::Hamming if n == 1 => vec![1.0],
            Window::Hamming => (0..n)
                .map(|i| 0.54 - 0.46 * (2.0 * PI * i as f64 / (n - 1) as f64).cos())
                .collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpodResult {
    /// Bin centres `k/(n·dt)`, `k = 0..=n/2`.
    pub frequencies: Vec<f64>,
    /// `n_freq × n_modes`, each row non-negative and descending.
    pub eigenvalues: DMatrix<f64>,
    /// Per bin, `n_space × n_modes` with orthonormal columns.
    pub modes: Vec<DMatrix<C64>>,
    pub bin_width: f64,
    pub dt: f64,
    pub n_blocks: usize,
    pub window: Window,
}

/// Scaled one-sided block spectra: entry `[k]` is `n_space × n_blocks`
/// with `Ŝ_k = Q_k Q_kᴴ`.
fn block_spectra(ensemble: &SnapshotEnsemble, window: Window) -> Result<(f64, Vec<DMatrix<C64>>)> {
    let dt = ensemble.common_dt().ok_or_else(|| {
        Error::invalid("SPOD needs uniformly sampled realizations with one common dt; interpolate first")
    })?;
    let n = ensemble.realizations()[0].len();
    if let Some(k) = ensemble.realizations().iter().position(|r| r.len() != n) {
        return Err(Error::invalid(format!(
            "SPOD needs equal-length realizations; realization {k} differs"
        )));
    }
    let nb = ensemble.realizations().len();
    let n_space = ensemble.n_space();
    let w = window.weights(n);
    let kappa = dt / w.iter().map(|v| v * v).sum::<f64>();
    let n_freq = n / 2 + 1;
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n);
    let mut q = vec![DMatrix::<C64>::zeros(n_space, nb); n_freq];
    let mut buf = vec![C64::new(0.0, 0.0); n];
    for (b, r) in ensemble.realizations().iter().enumerate() {
        let s = r.snapshots();
        for j in 0..n_space {
            for (i, v) in buf.iter_mut().enumerate() {
                *v = C64::new(s[(i, j)] * w[i], 0.0);
            }
            fft.process(&mut buf);
            for (k, qk) in q.iter_mut().enumerate() {
                let one_sided = if k == 0 || 2 * k == n { 1.0 } else { 2.0 };
                qk[(j, b)] = buf[k] * (kappa * one_sided / nb as f64).sqrt();
            }
        }
    }
    Ok((dt, q))
}

/// Dense `n_space × n_space` cross-spectral density at every bin. Meant for
/// small reduced-coordinate ensembles.
pub fn cross_spectral_density(ensemble: &SnapshotEnsemble, window: Window) -> Result<Vec<DMatrix<C64>>> {
    let (_, q) = block_spectra(ensemble, window)?;
    Ok(q.iter().map(|qk| qk * qk.adjoint()).collect())
}

pub fn fit_spod(ensemble: &SnapshotEnsemble, window: Window) -> Result<SpodResult> {
    let (dt, q) = block_spectra(ensemble, window)?;
    let n = ensemble.realizations()[0].len();
    let nb = ensemble.realizations().len();
    let n_space = ensemble.n_space();
    let n_keep = nb.min(n_space);
    let bin_width = 1.0 / (n as f64 * dt);
    let mut eigenvalues = DMatrix::zeros(q.len(), n_keep);
    let mut modes = Vec::with_capacity(q.len());
    for (k, qk) in q.iter().enumerate() {
        // method of snapshots: QᴴQ shares the nonzero spectrum of QQᴴ
        let gram = qk.adjoint() * qk;
        let eig = gram.symmetric_eigen();
        let mut order: Vec<usize> = (0..nb).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let lead = eig.eigenvalues[order[0]].max(0.0);
        let tol = 1e-12 * lead.max(f64::MIN_POSITIVE);
        let mut cols: Vec<DVector<C64>> = Vec::with_capacity(n_keep);
        for (slot, &i) in order.iter().take(n_keep).enumerate() {
            let lam = eig.eigenvalues[i];
            eigenvalues[(k, slot)] = lam.max(0.0);
            if lam > tol {
                let v = qk * eig.eigenvectors.column(i) * C64::new(1.0 / lam.sqrt(), 0.0);
                cols.push(v);
            }
        }
        complete_orthonormal(&mut cols, n_space, n_keep);
        modes.push(DMatrix::from_columns(&cols));
    }
    Ok(SpodResult {
        frequencies: (0..q.len()).map(|k| k as f64 * bin_width).collect(),
        eigenvalues,
        modes,
        bin_width,
        dt,
        n_blocks: nb,
        window,
    })
}

/// Extends `cols` with unit vectors from the orthogonal complement until it
/// holds `target` orthonormal columns.
fn complete_orthonormal(cols: &mut Vec<DVector<C64>>, n: usize, target: usize) {
    let mut e = 0;
    while cols.len() < target && e < n {
        let mut v = DVector::<C64>::zeros(n);
        v[e] = C64::new(1.0, 0.0);
        e += 1;
        for _ in 0..2 {
            for c in cols.iter() {
                let p = c.dotc(&v);
                v -= c * p;
            }
        }
        let norm = v.norm();
        if norm > 0.5 {
            cols.push(v / C64::new(norm, 0.0));
        }
    }
}

impl SpodResult {
    pub fn nyquist(&self) -> f64 {
        0.5 / self.dt
    }

    pub fn nearest_bin(&self, freq: f64) -> usize {
        ((freq / self.bin_width).round().max(0.0) as usize).min(self.frequencies.len() - 1)
    }

    pub fn n_modes(&self) -> usize {
        self.eigenvalues.ncols()
    }

    pub fn n_space(&self) -> usize {
        self.modes.first().map_or(0, |m| m.nrows())
    }

    /// Leading `n_modes` eigenvectors at the bin nearest `target_freq`.
    pub fn mode_subspace(&self, target_freq: f64, n_modes: usize) -> Result<DMatrix<C64>> {
        if !(target_freq >= 0.0) || target_freq > self.nyquist() {
            return Err(Error::invalid(format!(
                "target frequency {target_freq} Hz outside [0, Nyquist = {} Hz]",
                self.nyquist()
            )));
        }
        if n_modes == 0 || n_modes > self.n_modes() {
            return Err(Error::invalid(format!(
                "requested {n_modes} modes, {} available",
                self.n_modes()
            )));
        }
        Ok(self.modes[self.nearest_bin(target_freq)].columns(0, n_modes).into_owned())
    }

    /// Leading `per_bin` modes of every bin as one mode set, weighted by
    /// their eigenvalues.
    pub fn mode_set(&self, per_bin: usize) -> Result<ModeSet> {
        if per_bin == 0 || per_bin > self.n_modes() {
            return Err(Error::invalid(format!(
                "requested {per_bin} modes per bin, {} available",
                self.n_modes()
            )));
        }
        let mut cols = Vec::new();
        let (mut freqs, mut weights) = (Vec::new(), Vec::new());
        for (k, m) in self.modes.iter().enumerate() {
            for j in 0..per_bin {
                cols.push(m.column(j).into_owned());
                freqs.push(self.frequencies[k]);
                weights.push(self.eigenvalues[(k, j)]);
            }
        }
        let n = freqs.len();
        ModeSet::new(DMatrix::from_columns(&cols), freqs, vec![0.0; n], weights, MethodTag::Spod)
    }

    /// Trace of the cross-spectral density per bin.
    pub fn total_power(&self) -> Vec<f64> {
        self.eigenvalues.row_iter().map(|r| r.sum()).collect()
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let meta = SpodMeta {
            dt: self.dt,
            bin_width: self.bin_width,
            window: self.window,
            n_blocks: self.n_blocks,
            n_space: self.n_space(),
            n_modes: self.n_modes(),
            frequencies: self.frequencies.clone(),
            endianness: io::ENDIANNESS.into(),
            dtype: io::DTYPE.into(),
        };
        io::write_json(&dir.join("meta.json"), &meta)?;
        let mut header = vec!["frequency".to_string()];
        header.extend((1..=self.n_modes()).map(|i| format!("lambda_{i}")));
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        let rows: Vec<Vec<String>> = self
            .frequencies
            .iter()
            .enumerate()
            .map(|(k, f)| {
                std::iter::once(io::fmt_f64(*f))
                    .chain(self.eigenvalues.row(k).iter().map(|v| io::fmt_f64(*v)))
                    .collect()
            })
            .collect();
        io::write_csv(&dir.join("eigenvalues.csv"), &header, &rows)?;
        let mut all = DMatrix::<f64>::zeros(self.frequencies.len(), self.n_modes());
        all.copy_from(&self.eigenvalues);
        io::write_matrix_bin(&dir.join("eigenvalues.bin"), &all)?;
        for (k, m) in self.modes.iter().enumerate() {
            io::write_complex_bin(&dir.join(format!("modes_{k}.bin")), m)?;
        }
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<SpodResult> {
        let meta_path = dir.join("meta.json");
        let meta: SpodMeta = io::read_json(&meta_path)?;
        io::check_tags(&meta_path, &meta.endianness, &meta.dtype)?;
        let n_freq = meta.frequencies.len();
        let eigenvalues = io::read_matrix_bin(&dir.join("eigenvalues.bin"), n_freq, meta.n_modes)?;
        let modes = (0..n_freq)
            .map(|k| io::read_complex_bin(&dir.join(format!("modes_{k}.bin")), meta.n_space, meta.n_modes))
            .collect::<Result<Vec<_>>>()?;
        Ok(SpodResult {
            frequencies: meta.frequencies,
            eigenvalues,
            modes,
            bin_width: meta.bin_width,
            dt: meta.dt,
            n_blocks: meta.n_blocks,
            window: meta.window,
        })
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpodMeta {
    dt: f64,
    bin_width: f64,
    window: Window,
    n_blocks: usize,
    n_space: usize,
    n_modes: usize,
    frequencies: Vec<f64>,
    endianness: String,
    dtype: String,
}
