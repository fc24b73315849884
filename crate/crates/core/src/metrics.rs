//! Comparison of mode sets and forecasts: Grassmannian distance, Procrustes
//! alignment, NRMSE, pairwise mode correlation and sweep aggregation.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::io;
use crate::linalg::{complex_to_real_pairs, C64};
use crate::modes::ModeSet;

const RANK_TOL: f64 = 1e-10;

/// Orthonormal basis of the numerical column space (pivoted QR,
/// relative tolerance `RANK_TOL`), possibly with fewer columns than `a`.
fn range_basis(a: &DMatrix<f64>) -> DMatrix<f64> {
    let k = a.ncols().min(a.nrows());
    if a.ncols() == 0 || a.amax() == 0.0 {
        return DMatrix::zeros(a.nrows(), 0);
    }
    let qr = a.clone().col_piv_qr();
    let r = qr.r();
    let lead = r[(0, 0)].abs();
    let rank = (0..k).filter(|&i| r[(i, i)].abs() > RANK_TOL * lead).count();
    qr.q().columns(0, rank).into_owned()
}

/// Principal angles between the spans of two orthonormal bases, one per
/// column of the smaller basis. Cosines come from the cross-Gram and sines
/// from the residual of projecting one basis onto the other, which keeps
/// small angles accurate.
fn principal_angles(qa: &DMatrix<f64>, qb: &DMatrix<f64>) -> Vec<f64> {
    let (big, small) = if qa.ncols() >= qb.ncols() { (qa, qb) } else { (qb, qa) };
    if small.ncols() == 0 {
        return Vec::new();
    }
    let gram = big.transpose() * small;
    let mut cos: Vec<f64> = gram.singular_values().iter().map(|s| s.clamp(0.0, 1.0)).collect();
    cos.sort_by(|a, b| b.total_cmp(a));
    let resid = small - big * &gram;
    let mut sin: Vec<f64> = resid.singular_values().iter().map(|s| s.clamp(0.0, 1.0)).collect();
    sin.sort_by(f64::total_cmp);
    cos.iter().zip(&sin).map(|(c, s)| s.atan2(*c)).collect()
}

/// `√Σ θ_i²` over the principal angles `θ_i = arccos σ_i`, `σ_i` the
/// singular values of the cross-Gram of orthonormal bases of `a` and `b`.
pub fn grassmann_distance(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64> {
    if a.nrows() != b.nrows() || a.ncols() != b.ncols() {
        return Err(Error::invalid(format!(
            "subspaces must have equal shapes, got {:?} and {:?}",
            a.shape(),
            b.shape()
        )));
    }
    if a.ncols() == 0 || a.ncols() > a.nrows() {
        return Err(Error::invalid(format!("need 1 ≤ k ≤ n columns, got {:?}", a.shape())));
    }
    let qa = range_basis(a);
    if qa.ncols() < a.ncols() {
        return Err(Error::invalid(format!("matrix A is rank deficient (rank {})", qa.ncols())));
    }
    let qb = range_basis(b);
    if qb.ncols() < b.ncols() {
        return Err(Error::invalid(format!("matrix B is rank deficient (rank {})", qb.ncols())));
    }
    Ok(angles_norm(&principal_angles(&qa, &qb), a.ncols()))
}

fn angles_norm(angles: &[f64], dim: usize) -> f64 {
    let mut sum: f64 = angles.iter().map(|t| t * t).sum();
    sum += (dim - angles.len()) as f64 * (std::f64::consts::FRAC_PI_2).powi(2);
    sum.sqrt()
}

/// Like [`grassmann_distance`] but tolerant of rank deficiency and unequal
/// column counts: every dimension of the larger subspace without a
/// partner counts as a right angle.
pub fn subspace_distance(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64> {
    if a.nrows() != b.nrows() {
        return Err(Error::invalid("subspaces live in spaces of different dimension"));
    }
    let qa = range_basis(a);
    let qb = range_basis(b);
    let dim = qa.ncols().max(qb.ncols());
    Ok(angles_norm(&principal_angles(&qa, &qb), dim))
}

/// Distance between the real subspaces `[Re, Im]` spanned by two sets of
/// complex modes.
pub fn complex_subspace_distance(a: &DMatrix<C64>, b: &DMatrix<C64>) -> Result<f64> {
    subspace_distance(&complex_to_real_pairs(a), &complex_to_real_pairs(b))
}

/// Frequencies match when within `max(rel·f, half_bin)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FrequencyTolerance {
    pub rel: f64,
    pub half_bin: f64,
}

impl Default for FrequencyTolerance {
    fn default() -> Self {
        Self { rel: 0.01, half_bin: 0.0 }
    }
}

impl FrequencyTolerance {
    /// Default relative tolerance, widened to half an SPOD bin.
    pub fn with_bin(bin_width: f64) -> Self {
        Self {
            rel: 0.01,
            half_bin: 0.5 * bin_width,
        }
    }

    pub fn at(&self, f: f64) -> f64 {
        (self.rel * f.abs()).max(self.half_bin)
    }
}

/// Rotates each frequency group of `candidate` onto the matching group of
/// `reference` (complex orthogonal Procrustes, also trying the conjugate
/// of the group). The spanned subspaces are unchanged.
pub fn align_modes(reference: &ModeSet, candidate: &ModeSet, tol: FrequencyTolerance) -> Result<ModeSet> {
    if reference.n_rows() != candidate.n_rows() {
        return Err(Error::invalid("mode sets have different row counts"));
    }
    let groups = frequency_groups(reference, tol);
    let mut used = vec![false; candidate.len()];
    let mut orphans = Vec::new();
    let mut plan = Vec::new();
    for (f, ref_idx) in &groups {
        let cand_idx: Vec<usize> = (0..candidate.len())
            .filter(|&j| !used[j] && (candidate.frequencies()[j] - f).abs() <= tol.at(*f))
            .collect();
        if cand_idx.is_empty() {
            orphans.push(*f);
            continue;
        }
        cand_idx.iter().for_each(|&j| used[j] = true);
        plan.push((ref_idx.clone(), cand_idx));
    }
    orphans.extend((0..candidate.len()).filter(|&j| !used[j]).map(|j| candidate.frequencies()[j]));
    if !orphans.is_empty() {
        return Err(Error::Alignment { orphans });
    }
    let mut out = candidate.modes().clone();
    for (ref_idx, cand_idx) in plan {
        if ref_idx.len() != cand_idx.len() {
            return Err(Error::invalid(format!(
                "frequency group has {} reference and {} candidate modes",
                ref_idx.len(),
                cand_idx.len()
            )));
        }
        let r = reference.modes().select_columns(&ref_idx);
        let c = candidate.modes().select_columns(&cand_idx);
        let (direct, res_d) = procrustes(&r, &c);
        let (flipped, res_f) = procrustes(&r, &c.map(|v| v.conj()));
        let best = if res_f < res_d { flipped } else { direct };
        for (slot, &j) in cand_idx.iter().enumerate() {
            out.set_column(j, &best.column(slot));
        }
    }
    candidate.with_modes(out)
}

/// `C·Q` with the unitary `Q` minimizing `‖CQ − R‖_F`, and the residual.
fn procrustes(r: &DMatrix<C64>, c: &DMatrix<C64>) -> (DMatrix<C64>, f64) {
    let m = c.adjoint() * r;
    let svd = m.svd(true, true);
    let q = svd.u.expect("u requested") * svd.v_t.expect("v_t requested");
    let aligned = c * q;
    let res = (&aligned - r).norm();
    (aligned, res)
}

/// Reference modes grouped by frequency: `(group frequency, indices)`.
fn frequency_groups(set: &ModeSet, tol: FrequencyTolerance) -> Vec<(f64, Vec<usize>)> {
    let mut groups: Vec<(f64, Vec<usize>)> = Vec::new();
    let mut order: Vec<usize> = (0..set.len()).collect();
    order.sort_by(|&a, &b| set.frequencies()[a].total_cmp(&set.frequencies()[b]));
    for i in order {
        let f = set.frequencies()[i];
        match groups.last_mut() {
            Some((g, idx)) if (f - *g).abs() <= tol.at(*g) => idx.push(i),
            _ => groups.push((f, vec![i])),
        }
    }
    groups
}

/// `‖truth − estimate‖_F / ‖truth‖_F × 100`.
pub fn nrmse(truth: &DMatrix<f64>, estimate: &DMatrix<f64>) -> Result<f64> {
    if truth.shape() != estimate.shape() {
        return Err(Error::invalid(format!(
            "shapes differ: {:?} vs {:?}",
            truth.shape(),
            estimate.shape()
        )));
    }
    let n = truth.norm();
    if n == 0.0 {
        return Err(Error::invalid("truth has zero norm"));
    }
    Ok((truth - estimate).norm() / n * 100.0)
}

/// `|⟨a_i, b_j⟩| / (‖a_i‖‖b_j‖)` for every pair of modes.
pub fn pairwise_correlation(a: &ModeSet, b: &ModeSet) -> Result<DMatrix<f64>> {
    if a.n_rows() != b.n_rows() {
        return Err(Error::invalid("mode sets have different row counts"));
    }
    let na: Vec<f64> = a.modes().column_iter().map(|c| c.norm()).collect();
    let nb: Vec<f64> = b.modes().column_iter().map(|c| c.norm()).collect();
    if na.iter().chain(&nb).any(|v| *v == 0.0) {
        return Err(Error::invalid("zero-norm mode"));
    }
    let g = a.modes().adjoint() * b.modes();
    Ok(DMatrix::from_fn(a.len(), b.len(), |i, j| {
        (g[(i, j)].norm() / (na[i] * nb[j])).min(1.0)
    }))
}

/// Per-frequency and combined subspace distances of `candidate` against
/// `reference`.
#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonReport {
    /// `(reference frequency, distance in radians)`, ascending frequency.
    pub grassmann_per_frequency: Vec<(f64, f64)>,
    /// Euclidean combination of the per-frequency distances.
    pub grassmann_total: f64,
    /// Candidate frequency nearest each reference frequency.
    pub matched_frequencies: Vec<f64>,
    pub nrmse_percent: Option<f64>,
    pub pairwise_costheta: DMatrix<f64>,
}

/// For every reference frequency group of `k` modes, the `k` candidate
/// modes with the nearest frequencies are compared as real subspaces.
pub fn compare_modes(reference: &ModeSet, candidate: &ModeSet, tol: FrequencyTolerance) -> Result<ComparisonReport> {
    if reference.n_rows() != candidate.n_rows() {
        return Err(Error::invalid("mode sets have different row counts"));
    }
    let mut per = Vec::new();
    let mut matched = Vec::new();
    for (f, idx) in frequency_groups(reference, tol) {
        let near = candidate.nearest(f, idx.len());
        let d = if near.is_empty() {
            angles_norm(&[], 2 * idx.len())
        } else {
            subspace_distance(&reference.real_subspace(&idx), &candidate.real_subspace(&near))?
        };
        per.push((f, d));
        matched.push(near.first().map_or(f64::NAN, |&j| candidate.frequencies()[j]));
    }
    let total = per.iter().map(|(_, d)| d * d).sum::<f64>().sqrt();
    Ok(ComparisonReport {
        grassmann_per_frequency: per,
        grassmann_total: total,
        matched_frequencies: matched,
        nrmse_percent: None,
        pairwise_costheta: pairwise_correlation(reference, candidate)?,
    })
}

/// One cell of a retention sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub method: String,
    pub fraction: f64,
    pub seed: u64,
    pub grassmann_per_frequency: Vec<f64>,
    pub grassmann_total: f64,
    pub nrmse: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Band {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

impl Band {
    fn of(v: &[f64]) -> Option<Band> {
        if v.is_empty() {
            return None;
        }
        Some(Band {
            mean: v.iter().sum::<f64>() / v.len() as f64,
            min: v.iter().copied().fold(f64::INFINITY, f64::min),
            max: v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        })
    }
}

/// Mean and min–max band per `(method, fraction)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepCell {
    pub method: String,
    pub fraction: f64,
    pub n: usize,
    pub grassmann_per_frequency: Vec<Band>,
    pub grassmann_total: Band,
    pub nrmse: Option<Band>,
}

pub fn sweep_report(rows: &[SweepRow]) -> Vec<SweepCell> {
    let mut cells: BTreeMap<(String, u64), Vec<&SweepRow>> = BTreeMap::new();
    for r in rows {
        cells.entry((r.method.clone(), r.fraction.to_bits())).or_default().push(r);
    }
    let mut out: Vec<SweepCell> = cells
        .into_iter()
        .map(|((method, fbits), rs)| {
            let nf = rs.iter().map(|r| r.grassmann_per_frequency.len()).min().unwrap_or(0);
            let per = (0..nf)
                .map(|i| Band::of(&rs.iter().map(|r| r.grassmann_per_frequency[i]).collect::<Vec<_>>()).unwrap())
                .collect();
            let tot = Band::of(&rs.iter().map(|r| r.grassmann_total).collect::<Vec<_>>()).unwrap();
            let nr: Vec<f64> = rs.iter().filter_map(|r| r.nrmse).collect();
            SweepCell {
                method,
                fraction: f64::from_bits(fbits),
                n: rs.len(),
                grassmann_per_frequency: per,
                grassmann_total: tot,
                nrmse: if nr.len() == rs.len() { Band::of(&nr) } else { None },
            }
        })
        .collect();
    out.sort_by(|a, b| a.method.cmp(&b.method).then(a.fraction.total_cmp(&b.fraction)));
    out
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, io::fmt_f64)
}

/// Per-run table: `method,fraction,seed,grassmann_f1..,grassmann_total,nrmse`.
pub fn write_sweep_rows(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let nf = rows.iter().map(|r| r.grassmann_per_frequency.len()).max().unwrap_or(0);
    let mut header: Vec<String> = vec!["method".into(), "fraction".into(), "seed".into()];
    header.extend((1..=nf).map(|i| format!("grassmann_f{i}")));
    header.extend(["grassmann_total".into(), "nrmse".into()]);
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let mut v = vec![r.method.clone(), io::fmt_f64(r.fraction), r.seed.to_string()];
            v.extend((0..nf).map(|i| opt(r.grassmann_per_frequency.get(i).copied())));
            v.push(io::fmt_f64(r.grassmann_total));
            v.push(opt(r.nrmse));
            v
        })
        .collect();
    io::write_csv(path, &header, &body)
}

/// Aggregate table with mean/min/max columns per metric.
pub fn write_sweep_cells(path: &Path, cells: &[SweepCell]) -> Result<()> {
    let nf = cells.iter().map(|c| c.grassmann_per_frequency.len()).max().unwrap_or(0);
    let mut header: Vec<String> = vec!["method".into(), "fraction".into(), "n".into()];
    let mut metrics: Vec<String> = (1..=nf).map(|i| format!("grassmann_f{i}")).collect();
    metrics.extend(["grassmann_total".into(), "nrmse".into()]);
    for m in &metrics {
        for s in ["mean", "min", "max"] {
            header.push(format!("{m}_{s}"));
        }
    }
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let band = |b: Option<Band>| -> Vec<String> {
        match b {
            Some(b) => vec![io::fmt_f64(b.mean), io::fmt_f64(b.min), io::fmt_f64(b.max)],
            None => vec![String::new(); 3],
        }
    };
    let body: Vec<Vec<String>> = cells
        .iter()
        .map(|c| {
            let mut v = vec![c.method.clone(), io::fmt_f64(c.fraction), c.n.to_string()];
            for i in 0..nf {
                v.extend(band(c.grassmann_per_frequency.get(i).copied()));
            }
            v.extend(band(Some(c.grassmann_total)));
            v.extend(band(c.nrmse));
            v
        })
        .collect();
    io::write_csv(path, &header, &body)
}
