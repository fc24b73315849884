//! Exact DMD and ensemble DMD.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::data::SnapshotEnsemble;
use crate::error::{Error, Result};
use crate::linalg::{eig_real, svd_sorted, to_complex, C64};
use crate::modes::{MethodTag, ModeSet};

/// Singular values below this fraction of the largest are treated as zero.
const RANK_TOL: f64 = 1e-10;

#[derive(Clone, Debug)]
pub struct DmdFit {
    /// Positive-frequency representatives, ordered by initial-condition
    /// amplitude (stored as weights).
    pub modes: ModeSet,
    /// Every discrete-time eigenvalue of the projected operator, before
    /// conjugate deduplication.
    pub discrete_eigenvalues: Vec<C64>,
    /// Rank actually used.
    pub rank: usize,
}

/// Exact DMD of snapshot pairs: columns of `y` are one step `dt` after the
/// matching columns of `x`.
pub fn fit_dmd(x: &DMatrix<f64>, y: &DMatrix<f64>, dt: f64, rank: usize) -> Result<DmdFit> {
    let x0 = x.column(0).into_owned();
    fit_dmd_with_initial(x, y, dt, rank, &[x0])
}

/// DMD on `(x_i, x_{i+1})` pairs pooled over all realizations.
pub fn fit_dmd_ensemble(ensemble: &SnapshotEnsemble, rank: usize) -> Result<DmdFit> {
    let dt = ensemble.common_dt().ok_or_else(|| {
        Error::invalid("DMD needs every realization sampled uniformly with one common dt")
    })?;
    let n_pairs: usize = ensemble.realizations().iter().map(|r| r.len() - 1).sum();
    let n = ensemble.n_space();
    let mut x = DMatrix::zeros(n, n_pairs);
    let mut y = DMatrix::zeros(n, n_pairs);
    let mut col = 0;
    for r in ensemble.realizations() {
        let s = r.snapshots();
        for i in 0..r.len() - 1 {
            x.set_column(col, &s.row(i).transpose());
            y.set_column(col, &s.row(i + 1).transpose());
            col += 1;
        }
    }
    let initial: Vec<DVector<f64>> = ensemble.realizations().iter().map(|r| r.snapshot(0)).collect();
    fit_dmd_with_initial(&x, &y, dt, rank, &initial)
}

fn fit_dmd_with_initial(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    dt: f64,
    rank: usize,
    initial: &[DVector<f64>],
) -> Result<DmdFit> {
    if x.shape() != y.shape() {
        return Err(Error::invalid(format!(
            "X is {:?} but Y is {:?}",
            x.shape(),
            y.shape()
        )));
    }
    if x.ncols() == 0 {
        return Err(Error::invalid("DMD needs at least one snapshot pair"));
    }
    if !(dt > 0.0) {
        return Err(Error::invalid("dt must be positive"));
    }
    if rank == 0 {
        return Err(Error::invalid("DMD rank must be positive"));
    }
    let mut notes = Vec::new();
    let svd = svd_sorted(x)?;
    let lead = svd.s[0];
    if lead == 0.0 {
        return Err(Error::invalid("X is identically zero"));
    }
    let numerical = svd.s.iter().filter(|s| **s > RANK_TOL * lead).count();
    let r = rank.min(numerical);
    if r < rank {
        notes.push(format!(
            "warning: requested rank {rank} reduced to numerical rank {r}"
        ));
    }
    let u = svd.u.columns(0, r);
    let v = svd.v.columns(0, r);
    let s_inv = DMatrix::from_diagonal(&svd.s.rows(0, r).map(|s| 1.0 / s));
    let yvs = y * v * s_inv;
    let a_tilde = u.transpose() * &yvs;
    let (lambda, w) = eig_real(&a_tilde)?;

    // exact modes; a vanishing eigenvalue has no exact mode, use the projected one
    let exact = to_complex(&yvs) * &w;
    let projected = to_complex(&u.into_owned()) * &w;
    let mut gamma = DMatrix::<C64>::zeros(x.nrows(), r);
    for j in 0..r {
        let col = if exact.column(j).norm() > 1e-12 * lead {
            exact.column(j).into_owned()
        } else {
            projected.column(j).into_owned()
        };
        gamma.set_column(j, &normalize_phase(col));
    }

    // initial-condition amplitudes (least squares, all modes at once)
    let gsvd = gamma.clone().svd(true, true);
    let mut amp = vec![0.0; r];
    for g0 in initial {
        let b = gsvd
            .solve(&to_complex(&DMatrix::from_column_slice(g0.len(), 1, g0.as_slice())), 1e-12)
            .map_err(|e| Error::Numerical(format!("amplitude fit failed: {e}")))?;
        for j in 0..r {
            amp[j] += b[(j, 0)].norm_sqr();
        }
    }
    let amp: Vec<f64> = amp.iter().map(|a| (a / initial.len() as f64).sqrt()).collect();

    let tol_im = 1e-12;
    let mut keep: Vec<usize> = (0..r).filter(|&j| lambda[j].im >= -tol_im).collect();
    keep.sort_by(|&a, &b| amp[b].total_cmp(&amp[a]).then(a.cmp(&b)));
    let mut freqs = Vec::with_capacity(keep.len());
    let mut growth = Vec::with_capacity(keep.len());
    let mut weights = Vec::with_capacity(keep.len());
    for &j in &keep {
        let cont = lambda[j].ln() / dt;
        freqs.push((cont.im / (2.0 * PI)).abs());
        growth.push(cont.re);
        // a conjugate pair carries twice the amplitude of its representative
        let pair = if lambda[j].im.abs() > tol_im { 2.0 } else { 1.0 };
        weights.push(pair * amp[j]);
    }
    let mut modes = ModeSet::new(gamma.select_columns(&keep), freqs, growth, weights, MethodTag::Dmd)?;
    notes.push("ordering: heuristic, by initial-condition amplitude".into());
    modes.notes = notes;
    Ok(DmdFit {
        modes,
        discrete_eigenvalues: lambda,
        rank: r,
    })
}

/// Unit norm with the largest-magnitude entry real and positive.
fn normalize_phase(mut v: DVector<C64>) -> DVector<C64> {
    let norm = v.norm();
    if norm == 0.0 {
        return v;
    }
    let pivot = v.iter().copied().max_by(|a, b| a.norm().total_cmp(&b.norm())).unwrap();
    let rot = pivot.conj() / (pivot.norm() * norm);
    v *= rot;
    v
}
