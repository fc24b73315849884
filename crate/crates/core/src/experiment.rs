//! Retention sweeps against a known mode set: every method sees the same
//! irregular subsample, DMD and SPOD after cubic interpolation back onto a
//! uniform grid, MVGPR on the irregular samples directly.

use serde::{Deserialize, Serialize};

use crate::data::SnapshotEnsemble;
use crate::dmd::fit_dmd_ensemble;
use crate::error::{Error, Result};
use crate::metrics::{compare_modes, ComparisonReport, FrequencyTolerance, SweepRow};
use crate::modes::ModeSet;
use crate::mvgpr::{extract_modes, train, TrainConfig};
use crate::pod::{fit_pod, PodOptions};
use crate::spod::{fit_spod, Window};
use crate::synth::{interpolate_ensemble_uniform, subsample_irregular};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Dmd,
    Spod,
    Mvgpr,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Dmd => "dmd",
            Method::Spod => "spod",
            Method::Mvgpr => "mvgpr",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepOptions {
    pub pod: PodOptions,
    /// Grid spacing for the interpolated baselines.
    pub interp_dt: f64,
    pub window: Window,
    /// `seed` is overwritten per cell.
    pub mvgpr: TrainConfig,
    pub tolerance: FrequencyTolerance,
}

#[derive(Clone, Debug)]
pub struct CellResult {
    pub row: SweepRow,
    pub report: ComparisonReport,
    pub modes: ModeSet,
    /// Frequencies of the MVGPR pairs or DMD modes; empty for SPOD.
    pub frequencies: Vec<f64>,
}

/// Runs the requested methods on one `(fraction, seed)` subsample.
pub fn run_cell(
    full: &SnapshotEnsemble,
    truth: &ModeSet,
    fraction: f64,
    seed: u64,
    methods: &[Method],
    opts: &SweepOptions,
) -> Result<Vec<CellResult>> {
    if truth.n_rows() != full.n_space() {
        return Err(Error::invalid("truth modes and ensemble differ in spatial size"));
    }
    let sub = subsample_irregular(full, fraction, seed)?;
    let basis = fit_pod(&sub, opts.pod)?;
    let reduced = basis.project_ensemble(&sub)?;
    let mut uniform = None;
    let mut out = Vec::new();
    for &method in methods {
        let (modes, frequencies) = match method {
            Method::Dmd | Method::Spod => {
                if uniform.is_none() {
                    uniform = Some(interpolate_ensemble_uniform(&reduced, opts.interp_dt)?);
                }
                let uni = uniform.as_ref().expect("set above");
                if method == Method::Dmd {
                    let fit = fit_dmd_ensemble(uni, basis.rank())?;
                    let f = fit.modes.frequencies().to_vec();
                    (basis.lift_modes(&fit.modes)?, f)
                } else {
                    let sp = fit_spod(uni, opts.window)?;
                    (basis.lift_modes(&sp.mode_set(sp.n_modes())?)?, Vec::new())
                }
            }
            Method::Mvgpr => {
                let cfg = TrainConfig {
                    seed,
                    ..opts.mvgpr.clone()
                };
                let res = train(&reduced, &cfg)?;
                let f = (0..res.model.n_pairs()).map(|k| res.model.frequency_hz(k)).collect();
                (extract_modes(&res.model, &basis)?, f)
            }
        };
        let report = compare_modes(truth, &modes, opts.tolerance)?;
        let row = SweepRow {
            method: method.name().to_string(),
            fraction,
            seed,
            grassmann_per_frequency: report.grassmann_per_frequency.iter().map(|p| p.1).collect(),
            grassmann_total: report.grassmann_total,
            nrmse: report.nrmse_percent,
        };
        out.push(CellResult {
            row,
            report,
            modes,
            frequencies,
        });
    }
    Ok(out)
}
