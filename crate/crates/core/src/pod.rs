//! Snapshot POD: a truncated SVD of the (optionally mean-subtracted)
//! snapshot matrix, used to project fields onto standardized reduced
//! coordinates and back.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{Realization, SnapshotEnsemble};
use crate::error::{Error, Result};
use crate::io;
use crate::linalg::{svd_sorted, C64};
use crate::modes::ModeSet;

/// How many POD modes to keep.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PodTarget {
    /// Smallest rank whose cumulative squared singular values reach this
    /// fraction of the total.
    Energy(f64),
    Rank(usize),
}

impl Default for PodTarget {
    fn default() -> Self {
        PodTarget::Energy(0.99)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PodOptions {
    pub target: PodTarget,
    /// Subtract the mean snapshot before the SVD.
    pub center: bool,
}

impl Default for PodOptions {
    fn default() -> Self {
        Self {
            target: PodTarget::default(),
            center: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PodBasis {
    /// `n_space × r`, orthonormal columns.
    pub modes: DMatrix<f64>,
    /// Leading `r` singular values, non-increasing.
    pub singular_values: DVector<f64>,
    pub mean_field: DVector<f64>,
    /// Root-mean-square of each projected training coordinate; reduced
    /// coordinates are divided by it.
    pub scale: DVector<f64>,
    /// Sum of all squared singular values (including truncated ones).
    pub total_energy: f64,
}

pub fn fit_pod(ensemble: &SnapshotEnsemble, opts: PodOptions) -> Result<PodBasis> {
    let mut x = ensemble.stacked();
    let (n_snap, n_space) = x.shape();
    match opts.target {
        PodTarget::Energy(e) if !(e > 0.0 && e <= 1.0) => {
            return Err(Error::invalid(format!("energy_target {e} outside (0, 1]")))
        }
        PodTarget::Rank(0) => return Err(Error::invalid("POD rank must be positive")),
        PodTarget::Rank(r) if r > n_snap.min(n_space) => {
            return Err(Error::invalid(format!(
                "requested rank {r} exceeds min({n_snap} snapshots, {n_space} dofs)"
            )))
        }
        _ => {}
    }
    let mean_field = if opts.center {
        let m = x.row_mean().transpose();
        for mut row in x.row_iter_mut() {
            row -= m.transpose();
        }
        m
    } else {
        DVector::zeros(n_space)
    };

    // thin SVD oriented so that the smaller dimension drives the cost
    let (u, s) = if n_space >= n_snap {
        let svd = svd_sorted(&x.transpose())?;
        (svd.u, svd.s)
    } else {
        let svd = svd_sorted(&x)?;
        (svd.v, svd.s)
    };
    let energy: Vec<f64> = s.iter().map(|v| v * v).collect();
    let total_energy: f64 = energy.iter().sum();
    if total_energy <= 0.0 {
        return Err(Error::invalid("snapshot matrix is identically zero"));
    }
    let tiny = s[0] * 1e-12 * (n_snap.max(n_space) as f64);
    let numerical_rank = s.iter().filter(|v| **v > tiny).count().max(1);
    let rank = match opts.target {
        PodTarget::Rank(r) => r,
        PodTarget::Energy(target) => {
            let mut acc = 0.0;
            let mut r = energy.len();
            for (i, e) in energy.iter().enumerate() {
                acc += e;
                if acc >= target * total_energy * (1.0 - 1e-14) {
                    r = i + 1;
                    break;
                }
            }
            r.min(numerical_rank)
        }
    };
    let modes = u.columns(0, rank).into_owned();
    let coords = &x * &modes;
    let scale = DVector::from_iterator(
        rank,
        coords.column_iter().map(|c| {
            let rms = (c.norm_squared() / n_snap as f64).sqrt();
            if rms > 0.0 {
                rms
            } else {
                1.0
            }
        }),
    );
    Ok(PodBasis {
        modes,
        singular_values: s.rows(0, rank).into_owned(),
        mean_field,
        scale,
        total_energy,
    })
}

impl PodBasis {
    pub fn rank(&self) -> usize {
        self.modes.ncols()
    }

    pub fn n_space(&self) -> usize {
        self.modes.nrows()
    }

    /// Fraction of the training energy captured by the retained modes.
    pub fn energy_fraction(&self) -> f64 {
        self.singular_values.norm_squared() / self.total_energy
    }

    /// Snapshots (`n × n_space`, one per row) to scaled reduced coordinates
    /// (`n × r`).
    pub fn project(&self, snapshots: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if snapshots.ncols() != self.n_space() {
            return Err(Error::invalid(format!(
                "snapshot length {} does not match basis dimension {}",
                snapshots.ncols(),
                self.n_space()
            )));
        }
        let mut centered = snapshots.clone();
        for mut row in centered.row_iter_mut() {
            row -= self.mean_field.transpose();
        }
        let mut c = centered * &self.modes;
        for (j, mut col) in c.column_iter_mut().enumerate() {
            col /= self.scale[j];
        }
        Ok(c)
    }

    /// Scaled reduced coordinates (`n × r`) back to full snapshots.
    pub fn unproject(&self, coords: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if coords.ncols() != self.rank() {
            return Err(Error::invalid(format!(
                "coordinate length {} does not match rank {}",
                coords.ncols(),
                self.rank()
            )));
        }
        let mut c = coords.clone();
        for (j, mut col) in c.column_iter_mut().enumerate() {
            col *= self.scale[j];
        }
        let mut out = c * self.modes.transpose();
        for mut row in out.row_iter_mut() {
            row += self.mean_field.transpose();
        }
        Ok(out)
    }

    /// Maps reduced-coordinate directions (`r × k`) to full-space directions
    /// (no mean added).
    pub fn lift_directions(&self, dirs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if dirs.nrows() != self.rank() {
            return Err(Error::invalid("direction matrix does not match POD rank"));
        }
        Ok(&self.modes * DMatrix::from_diagonal(&self.scale) * dirs)
    }

    /// Lifts a reduced-coordinate mode set into the full space.
    pub fn lift_modes(&self, set: &ModeSet) -> Result<ModeSet> {
        if set.n_rows() != self.rank() {
            return Err(Error::invalid(format!(
                "mode set has {} rows, POD rank is {}",
                set.n_rows(),
                self.rank()
            )));
        }
        let lift = (&self.modes * DMatrix::from_diagonal(&self.scale)).map(|v| C64::new(v, 0.0));
        set.with_modes(lift * set.modes())
    }

    pub fn project_ensemble(&self, ensemble: &SnapshotEnsemble) -> Result<SnapshotEnsemble> {
        let reals = ensemble
            .realizations()
            .iter()
            .map(|r| {
                let mut out = Realization::new(r.times().to_vec(), self.project(r.snapshots())?)?;
                out.phase_label = r.phase_label;
                Ok(out)
            })
            .collect::<Result<Vec<_>>>()?;
        SnapshotEnsemble::reduced(reals)
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let meta = PodMeta {
            n_space: self.n_space(),
            rank: self.rank(),
            singular_values: self.singular_values.iter().copied().collect(),
            scale: self.scale.iter().copied().collect(),
            total_energy: self.total_energy,
            energy_fraction: self.energy_fraction(),
            endianness: io::ENDIANNESS.into(),
            dtype: io::DTYPE.into(),
        };
        io::write_json(&dir.join("meta.json"), &meta)?;
        io::write_matrix_bin(&dir.join("modes.bin"), &self.modes)?;
        io::write_matrix_bin(
            &dir.join("mean.bin"),
            &DMatrix::from_column_slice(1, self.n_space(), self.mean_field.as_slice()),
        )
    }

    pub fn read(dir: &Path) -> Result<PodBasis> {
        let meta_path = dir.join("meta.json");
        let meta: PodMeta = io::read_json(&meta_path)?;
        io::check_tags(&meta_path, &meta.endianness, &meta.dtype)?;
        if meta.singular_values.len() != meta.rank || meta.scale.len() != meta.rank {
            return Err(Error::parse(&meta_path, 0, "singular_values/scale length differs from rank"));
        }
        let modes = io::read_matrix_bin(&dir.join("modes.bin"), meta.n_space, meta.rank)?;
        let mean = io::read_matrix_bin(&dir.join("mean.bin"), 1, meta.n_space)?;
        Ok(PodBasis {
            modes,
            singular_values: DVector::from_vec(meta.singular_values),
            mean_field: DVector::from_column_slice(mean.as_slice()),
            scale: DVector::from_vec(meta.scale),
            total_energy: meta.total_energy,
        })
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PodMeta {
    n_space: usize,
    rank: usize,
    singular_values: Vec<f64>,
    scale: Vec<f64>,
    total_energy: f64,
    energy_fraction: f64,
    endianness: String,
    dtype: String,
}
