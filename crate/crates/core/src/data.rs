//! Snapshot containers, coordinate-wise standardization and extraction of
//! (anchor, lag, target) training pairs.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// One trajectory of the system: strictly increasing timestamps and one
/// snapshot per row.
#[derive(Clone, Debug, PartialEq)]
pub struct Realization {
    times: Vec<f64>,
    snapshots: DMatrix<f64>,
    /// Metadata only, e.g. the known phase of synthetic data.
    pub phase_label: Option<f64>,
}

impl Realization {
    pub fn new(times: Vec<f64>, snapshots: DMatrix<f64>) -> Result<Self> {
        if times.len() != snapshots.nrows() {
            return Err(Error::invalid(format!(
                "{} timestamps for {} snapshots",
                times.len(),
                snapshots.nrows()
            )));
        }
        if let Some(i) = times.iter().position(|t| !t.is_finite()) {
            return Err(Error::invalid(format!("timestamp {i} is not finite")));
        }
        if let Some(i) = times.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::invalid(format!(
                "timestamps not strictly increasing at index {}",
                i + 1
            )));
        }
        if snapshots.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("snapshot contains NaN or Inf"));
        }
        Ok(Self {
            times,
            snapshots,
            phase_label: None,
        })
    }

    pub fn with_phase_label(mut self, phase: f64) -> Self {
        self.phase_label = Some(phase);
        self
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// `n_time × n_space`, one snapshot per row.
    pub fn snapshots(&self) -> &DMatrix<f64> {
        &self.snapshots
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn n_space(&self) -> usize {
        self.snapshots.ncols()
    }

    pub fn snapshot(&self, i: usize) -> DVector<f64> {
        self.snapshots.row(i).transpose()
    }

    /// Common step when the timestamps are uniform to `rel_tol`, else `None`.
    pub fn uniform_dt(&self, rel_tol: f64) -> Option<f64> {
        if self.times.len() < 2 {
            return None;
        }
        let span = self.times[self.times.len() - 1] - self.times[0];
        let dt = span / (self.times.len() - 1) as f64;
        let uniform = self
            .times
            .windows(2)
            .all(|w| ((w[1] - w[0]) - dt).abs() <= rel_tol * dt);
        uniform.then_some(dt)
    }

    /// Rows `idx` (which must be increasing) as a new realization.
    pub fn select(&self, idx: &[usize]) -> Result<Realization> {
        let times = idx.iter().map(|&i| self.times[i]).collect();
        let snapshots = self.snapshots.select_rows(idx);
        let mut r = Realization::new(times, snapshots)?;
        r.phase_label = self.phase_label;
        Ok(r)
    }
}

/// A set of realizations sharing one spatial layout.
#[derive(Clone, Debug, PartialEq)]
pub struct SnapshotEnsemble {
    realizations: Vec<Realization>,
    spatial_shape: Vec<usize>,
    field_dim: usize,
}

impl SnapshotEnsemble {
    pub fn new(
        realizations: Vec<Realization>,
        spatial_shape: Vec<usize>,
        field_dim: usize,
    ) -> Result<Self> {
        if realizations.is_empty() {
            return Err(Error::invalid("ensemble needs at least one realization"));
        }
        if spatial_shape.is_empty() || spatial_shape.contains(&0) || field_dim == 0 {
            return Err(Error::invalid(format!(
                "bad layout: spatial_shape {spatial_shape:?}, field_dim {field_dim}"
            )));
        }
        let n_space = spatial_shape.iter().product::<usize>() * field_dim;
        for (k, r) in realizations.iter().enumerate() {
            if r.len() < 2 {
                return Err(Error::invalid(format!(
                    "realization {k} has {} snapshots, need at least 2",
                    r.len()
                )));
            }
            if r.n_space() != n_space {
                return Err(Error::invalid(format!(
                    "realization {k} has snapshot length {}, layout implies {n_space}",
                    r.n_space()
                )));
            }
        }
        Ok(Self {
            realizations,
            spatial_shape,
            field_dim,
        })
    }

    /// Ensemble of reduced coordinates (`spatial_shape = [r]`, one component).
    pub fn reduced(realizations: Vec<Realization>) -> Result<Self> {
        let r = realizations.first().map(|r| r.n_space()).unwrap_or(0);
        Self::new(realizations, vec![r], 1)
    }

    pub fn realizations(&self) -> &[Realization] {
        &self.realizations
    }

    pub fn spatial_shape(&self) -> &[usize] {
        &self.spatial_shape
    }

    pub fn field_dim(&self) -> usize {
        self.field_dim
    }

    pub fn n_space(&self) -> usize {
        self.spatial_shape.iter().product::<usize>() * self.field_dim
    }

    pub fn total_snapshots(&self) -> usize {
        self.realizations.iter().map(Realization::len).sum()
    }

    /// All snapshots stacked row-wise, realization by realization.
    pub fn stacked(&self) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.total_snapshots(), self.n_space());
        let mut row = 0;
        for r in &self.realizations {
            out.rows_mut(row, r.len()).copy_from(r.snapshots());
            row += r.len();
        }
        out
    }

    /// Same layout, realizations transformed one by one.
    pub fn map_realizations<F>(&self, mut f: F) -> Result<SnapshotEnsemble>
    where
        F: FnMut(usize, &Realization) -> Result<Realization>,
    {
        let reals = self
            .realizations
            .iter()
            .enumerate()
            .map(|(k, r)| f(k, r))
            .collect::<Result<Vec<_>>>()?;
        let n = reals[0].n_space();
        if n == self.n_space() {
            SnapshotEnsemble::new(reals, self.spatial_shape.clone(), self.field_dim)
        } else {
            SnapshotEnsemble::reduced(reals)
        }
    }

    /// Common sampling step of all realizations, if every one is uniform with
    /// the same step.
    pub fn common_dt(&self) -> Option<f64> {
        let dt0 = self.realizations[0].uniform_dt(1e-6)?;
        self.realizations
            .iter()
            .all(|r| r.uniform_dt(1e-6).is_some_and(|dt| (dt - dt0).abs() <= 1e-6 * dt0))
            .then_some(dt0)
    }
}

/// Result of [`normalize_coordinatewise`].
#[derive(Clone, Debug, PartialEq)]
pub struct Normalization {
    pub normalized: DMatrix<f64>,
    pub mean: DVector<f64>,
    /// Population standard deviation per column; 1 for constant columns.
    pub scale: DVector<f64>,
    /// Columns with zero variance, passed through centered with scale 1.
    pub constant_columns: Vec<usize>,
}

impl Normalization {
    pub fn denormalize(&self, data: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = data.clone();
        for (j, mut col) in out.column_iter_mut().enumerate() {
            col.apply(|v| *v = *v * self.scale[j] + self.mean[j]);
        }
        out
    }
}

/// Standardizes every column of `data` (`n × d`) to zero mean and unit
/// population standard deviation.
pub fn normalize_coordinatewise(data: &DMatrix<f64>) -> Result<Normalization> {
    let (n, d) = data.shape();
    if n == 0 || d == 0 {
        return Err(Error::invalid("cannot normalize an empty matrix"));
    }
    let mut normalized = data.clone();
    let mut mean = DVector::zeros(d);
    let mut scale = DVector::from_element(d, 1.0);
    let mut constant_columns = Vec::new();
    for (j, mut col) in normalized.column_iter_mut().enumerate() {
        let mu = col.sum() / n as f64;
        let var = col.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / n as f64;
        let sd = var.sqrt();
        mean[j] = mu;
        if sd <= f64::EPSILON * mu.abs().max(1.0) {
            constant_columns.push(j);
            col.apply(|v| *v -= mu);
        } else {
            scale[j] = sd;
            col.apply(|v| *v = (*v - mu) / sd);
        }
    }
    Ok(Normalization {
        normalized,
        mean,
        scale,
        constant_columns,
    })
}

/// A GP training example: the realization's anchor snapshot, a lag and the
/// snapshot observed that long after the anchor.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingPair {
    pub anchor: DVector<f64>,
    pub lag: f64,
    pub target: DVector<f64>,
    pub realization_id: usize,
}

/// Builds `(anchor, lag, target)` pairs per realization, anchored at the
/// first snapshot. When more than `max_pairs_per_realization` lags qualify,
/// an evenly spaced subset of indices is kept (first and last included).
pub fn extract_training_pairs(
    ensemble: &SnapshotEnsemble,
    max_lag: f64,
    max_pairs_per_realization: usize,
) -> Result<Vec<TrainingPair>> {
    if max_lag.is_nan() || max_lag <= 0.0 {
        return Err(Error::invalid(format!("max_lag must be positive, got {max_lag}")));
    }
    if max_pairs_per_realization == 0 {
        return Err(Error::invalid("max_pairs_per_realization must be positive"));
    }
    let mut pairs = Vec::new();
    for (id, r) in ensemble.realizations().iter().enumerate() {
        let t0 = r.times()[0];
        let anchor = r.snapshot(0);
        let eligible: Vec<usize> = (0..r.len())
            .filter(|&i| r.times()[i] - t0 <= max_lag * (1.0 + 1e-12))
            .collect();
        for i in strided_subset(eligible.len(), max_pairs_per_realization) {
            let idx = eligible[i];
            pairs.push(TrainingPair {
                anchor: anchor.clone(),
                lag: r.times()[idx] - t0,
                target: r.snapshot(idx),
                realization_id: id,
            });
        }
    }
    Ok(pairs)
}

/// `cap` evenly spaced indices out of `0..n` (all of them when `n <= cap`).
pub(crate) fn strided_subset(n: usize, cap: usize) -> Vec<usize> {
    if n <= cap {
        return (0..n).collect();
    }
    if cap == 1 {
        return vec![0];
    }
    let mut idx: Vec<usize> = (0..cap)
        .map(|i| ((i as f64) * (n - 1) as f64 / (cap - 1) as f64).round() as usize)
        .collect();
    idx.dedup();
    idx
}
