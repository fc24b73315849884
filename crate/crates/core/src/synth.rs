//! Benchmark data generators: the two-frequency synthesized flow with
//! several modes per frequency, the coupled harmonic oscillator, linear
//! systems with a prescribed imaginary spectrum, plus irregular
//! subsampling and the cubic-interpolation baseline.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{Realization, SnapshotEnsemble};
use crate::error::{Error, Result};
use crate::linalg::C64;
use crate::modes::{MethodTag, ModeSet};
use crate::rng;
use crate::spline::NaturalSpline;

/// Named spatial shapes on `[0,1]²` for the synthesized flow.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BuiltinMode {
    M1r,
    M2r,
    M3r,
    M4r,
    M1c,
    M2c,
    M3c,
    M4c,
}

impl BuiltinMode {
    pub fn eval(self, x: f64, y: f64) -> f64 {
        let g5 = ((x - 0.5).powi(2) + (y - 0.5).powi(2)).exp();
        let g2 = ((x - 0.2).powi(2) + (y - 0.2).powi(2)).exp();
        match self {
            BuiltinMode::M1r => g5,
            BuiltinMode::M2r => (2.0 * x).sin() * (2.0 * y).sin(),
            BuiltinMode::M3r => (4.0 * x).sin() * (4.0 * y).sin() * g5,
            BuiltinMode::M4r => (4.0 * x).sin() * (2.0 * y).sin(),
            BuiltinMode::M1c => g2,
            BuiltinMode::M2c => (2.0 * x).cos() * (2.0 * y).cos(),
            BuiltinMode::M3c => (4.0 * x).cos() * (4.0 * y).cos() * g2,
            BuiltinMode::M4c => (4.0 * x).cos() * (2.0 * y).cos(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrigFn {
    Sin,
    Cos,
}

impl TrigFn {
    fn eval(self, v: f64) -> f64 {
        match self {
            TrigFn::Sin => v.sin(),
            TrigFn::Cos => v.cos(),
        }
    }
}

/// A spatial mode function sampled on the grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModeShape {
    Builtin { name: BuiltinMode },
    /// `fx(kx·x)·fy(ky·y)`
    Trig { fx: TrigFn, kx: f64, fy: TrigFn, ky: f64 },
    /// `exp(-((x-cx)²+(y-cy)²)/(2w²))`
    Gaussian { cx: f64, cy: f64, width: f64 },
    /// Explicit grid values, `ny × nx` row-major.
    Values { values: Vec<f64> },
    Zero,
}

impl ModeShape {
    pub fn builtin(name: BuiltinMode) -> Self {
        ModeShape::Builtin { name }
    }

    pub fn sample(&self, nx: usize, ny: usize) -> Result<DVector<f64>> {
        let coord = |i: usize, n: usize| i as f64 / (n - 1) as f64;
        let f = |g: &dyn Fn(f64, f64) -> f64| {
            DVector::from_fn(nx * ny, |k, _| g(coord(k % nx, nx), coord(k / nx, ny)))
        };
        Ok(match self {
            ModeShape::Builtin { name } => f(&|x, y| name.eval(x, y)),
            ModeShape::Trig { fx, kx, fy, ky } => f(&|x, y| fx.eval(kx * x) * fy.eval(ky * y)),
            ModeShape::Gaussian { cx, cy, width } => f(&|x, y| {
                (-((x - cx).powi(2) + (y - cy).powi(2)) / (2.0 * width * width)).exp()
            }),
            ModeShape::Values { values } => {
                if values.len() != nx * ny {
                    return Err(Error::invalid(format!(
                        "mode values have length {}, grid needs {}",
                        values.len(),
                        nx * ny
                    )));
                }
                DVector::from_column_slice(values)
            }
            ModeShape::Zero => DVector::zeros(nx * ny),
        })
    }
}

/// One `A·[M_r cos(ω(t+α)) + M_c sin(ω(t+α))]` term.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthTerm {
    /// Index into [`SynthSpec::frequencies`].
    pub frequency: usize,
    pub real: ModeShape,
    pub imag: ModeShape,
    #[serde(default = "one")]
    pub amplitude: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    /// Hz
    pub frequencies: Vec<f64>,
    pub terms: Vec<SynthTerm>,
    pub nx: usize,
    pub ny: usize,
    pub n_realizations: usize,
    /// Standard deviation (s) of the Gaussian per-term phase shifts.
    pub phase_sigma: f64,
    pub dt: f64,
    pub t_end: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    /// Two frequencies (3.1 Hz, 5.2 Hz) with two modes each, five
    /// realizations on a 32×32 grid over 3 s at 100 Hz.
    fn default() -> Self {
        use BuiltinMode::*;
        let term = |f, r, c| SynthTerm {
            frequency: f,
            real: ModeShape::builtin(r),
            imag: ModeShape::builtin(c),
            amplitude: 1.0,
        };
        Self {
            frequencies: vec![3.1, 5.2],
            terms: vec![
                term(0, M1r, M1c),
                term(0, M2r, M2c),
                term(1, M3r, M3c),
                term(1, M4r, M4c),
            ],
            nx: 32,
            ny: 32,
            n_realizations: 5,
            phase_sigma: 1.0,
            dt: 0.01,
            t_end: 3.0,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.frequencies.is_empty() || self.frequencies.iter().any(|f| !(*f > 0.0)) {
            return Err(Error::invalid("frequencies must be positive"));
        }
        for (i, a) in self.frequencies.iter().enumerate() {
            if self.frequencies[..i].contains(a) {
                return Err(Error::invalid(format!("frequency {a} listed twice")));
            }
        }
        if self.terms.is_empty() {
            return Err(Error::invalid("at least one term is required"));
        }
        if let Some(t) = self.terms.iter().find(|t| t.frequency >= self.frequencies.len()) {
            return Err(Error::invalid(format!("term references frequency {}", t.frequency)));
        }
        if self.nx < 2 || self.ny < 2 {
            return Err(Error::invalid("grid needs nx, ny ≥ 2"));
        }
        if self.n_realizations == 0 {
            return Err(Error::invalid("n_realizations must be positive"));
        }
        if !(self.dt > 0.0) || !(self.t_end >= self.dt) {
            return Err(Error::invalid("need dt > 0 and t_end ≥ dt"));
        }
        if !(self.phase_sigma >= 0.0) {
            return Err(Error::invalid("phase_sigma must be non-negative"));
        }
        Ok(())
    }

    pub fn times(&self) -> Vec<f64> {
        let n = (self.t_end / self.dt + 1e-9).floor() as usize + 1;
        (0..n).map(|k| k as f64 * self.dt).collect()
    }
}

/// Ground truth of a synthesized ensemble.
#[derive(Clone, Debug)]
pub struct SynthTruth {
    /// One complex mode `A(M_r − i·M_c)` per term.
    pub modes: ModeSet,
    /// `n_realizations × n_terms` phase shifts α in seconds.
    pub phases: DMatrix<f64>,
    /// Share of each term in the total squared mode norm.
    pub energy_fractions: Vec<f64>,
}

pub fn generate_synthesized_flow(spec: &SynthSpec) -> Result<(SnapshotEnsemble, SynthTruth)> {
    spec.validate()?;
    let n_space = spec.nx * spec.ny;
    let shapes = spec
        .terms
        .iter()
        .map(|t| {
            let r = t.real.sample(spec.nx, spec.ny)? * t.amplitude;
            let c = t.imag.sample(spec.nx, spec.ny)? * t.amplitude;
            Ok((r, c))
        })
        .collect::<Result<Vec<_>>>()?;
    let times = spec.times();
    let phase_dist = Normal::new(0.0, spec.phase_sigma)
        .map_err(|e| Error::invalid(format!("phase distribution: {e}")))?;
    let n_terms = spec.terms.len();
    let mut phases = DMatrix::zeros(spec.n_realizations, n_terms);
    let mut reals = Vec::with_capacity(spec.n_realizations);
    for k in 0..spec.n_realizations {
        let mut rng = rng::stream(spec.seed, "synth/phase", k as u64);
        let mut snaps = DMatrix::zeros(times.len(), n_space);
        for (j, term) in spec.terms.iter().enumerate() {
            let alpha = phase_dist.sample(&mut rng);
            phases[(k, j)] = alpha;
            let omega = 2.0 * PI * spec.frequencies[term.frequency];
            let (mr, mc) = &shapes[j];
            for (i, t) in times.iter().enumerate() {
                let th = omega * (t + alpha);
                let (s, c) = th.sin_cos();
                let field = mr * c + mc * s;
                let mut row = snaps.row_mut(i);
                row += field.transpose();
            }
        }
        reals.push(Realization::new(times.clone(), snaps)?);
    }
    let ensemble = SnapshotEnsemble::new(reals, vec![spec.ny, spec.nx], 1)?;

    let modes = DMatrix::from_fn(n_space, n_terms, |i, j| C64::new(shapes[j].0[i], -shapes[j].1[i]));
    let energies: Vec<f64> = shapes
        .iter()
        .map(|(r, c)| r.norm_squared() + c.norm_squared())
        .collect();
    let total: f64 = energies.iter().sum();
    let truth_modes = ModeSet::new(
        modes,
        spec.terms.iter().map(|t| spec.frequencies[t.frequency]).collect(),
        vec![0.0; n_terms],
        energies.clone(),
        MethodTag::Truth,
    )?;
    Ok((
        ensemble,
        SynthTruth {
            modes: truth_modes,
            phases,
            energy_fractions: energies.iter().map(|e| e / total).collect(),
        },
    ))
}

/// Exact state of the oscillator `ẋ = −Ωy, ẏ = Ωx` after time `t`.
pub fn rotate_oscillator(state0: [f64; 2], rate: f64, t: f64) -> [f64; 2] {
    let (s, c) = (rate * t).sin_cos();
    [c * state0[0] - s * state0[1], s * state0[0] + c * state0[1]]
}

/// Realizations of the coupled harmonic oscillator with rate `j·ω₀` and
/// initial state drawn from `N(0, σ²I)`; snapshots are `[x, y]`.
pub fn generate_coupled_oscillator(
    omega0: f64,
    j: u32,
    sigma: f64,
    n_samples: usize,
    dt: f64,
    t_end: f64,
    seed: u64,
) -> Result<SnapshotEnsemble> {
    if !(omega0 > 0.0) || !(sigma > 0.0) {
        return Err(Error::invalid("omega0 and sigma must be positive"));
    }
    if j == 0 {
        return Err(Error::invalid("harmonic index j must be positive"));
    }
    let times = uniform_times(dt, t_end)?;
    // identity real block Γ̃ = I  ⇔  complex mode e₁ − i·e₂
    let mode = DMatrix::from_column_slice(2, 1, &[C64::new(1.0, 0.0), C64::new(0.0, -1.0)]);
    let sys = LinearSystem {
        eigenvalues: vec![C64::new(0.0, j as f64 * omega0)],
        modes: mode,
        modal_std: vec![sigma],
    };
    Ok(sys.generate(&times, n_samples, seed)?.0)
}

fn uniform_times(dt: f64, t_end: f64) -> Result<Vec<f64>> {
    if !(dt > 0.0) || !(t_end >= dt) {
        return Err(Error::invalid("need dt > 0 and t_end ≥ dt"));
    }
    let n = (t_end / dt + 1e-9).floor() as usize + 1;
    Ok((0..n).map(|k| k as f64 * dt).collect())
}

/// A stationary linear system `g(t) = Σ_k Re[v_k e^{iω_k t} z_k]` with
/// `z_k = φ_{k,1} + iφ_{k,2}`, `φ ~ N(0, σ_k²)`, evaluated through the real
/// block-rotation form `g_t = Γ̃ D̃_t φ` with `Γ̃ = [Re v, −Im v, …]`.
#[derive(Clone, Debug)]
pub struct LinearSystem {
    /// Continuous-time eigenvalues `iω_k` (one per conjugate pair).
    pub eigenvalues: Vec<C64>,
    /// `n × k`, mode `v_k` attached to `e^{+iω_k t}`.
    pub modes: DMatrix<C64>,
    /// Standard deviation of each modal coordinate.
    pub modal_std: Vec<f64>,
}

impl LinearSystem {
    pub fn validate(&self) -> Result<()> {
        let k = self.eigenvalues.len();
        if k == 0 || self.modes.ncols() != k || self.modal_std.len() != k {
            return Err(Error::invalid(format!(
                "{k} eigenvalues, {} modes, {} modal std values",
                self.modes.ncols(),
                self.modal_std.len()
            )));
        }
        if let Some(l) = self.eigenvalues.iter().find(|l| l.re != 0.0) {
            return Err(Error::invalid(format!(
                "eigenvalue {l} has a nonzero real part; only stationary systems are supported"
            )));
        }
        if self.modal_std.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::invalid("modal standard deviations must be positive"));
        }
        Ok(())
    }

    /// Real block matrix `Γ̃ = [Re v₁, −Im v₁, …]`, `n × 2k`.
    pub fn real_modes(&self) -> DMatrix<f64> {
        let (n, k) = self.modes.shape();
        DMatrix::from_fn(n, 2 * k, |i, j| {
            let v = self.modes[(i, j / 2)];
            if j % 2 == 0 {
                v.re
            } else {
                -v.im
            }
        })
    }

    /// Modal coordinates `D̃_t φ` at time `t`.
    pub fn evolve_modal(&self, phi: &DVector<f64>, t: f64) -> DVector<f64> {
        let mut out = DVector::zeros(phi.len());
        for (k, l) in self.eigenvalues.iter().enumerate() {
            let r = rotate_oscillator([phi[2 * k], phi[2 * k + 1]], l.im, t);
            out[2 * k] = r[0];
            out[2 * k + 1] = r[1];
        }
        out
    }

    /// Trajectories at `times` for `n_realizations` random initial modal
    /// states, plus the ground-truth mode set.
    pub fn generate(
        &self,
        times: &[f64],
        n_realizations: usize,
        seed: u64,
    ) -> Result<(SnapshotEnsemble, ModeSet)> {
        self.validate()?;
        if n_realizations == 0 {
            return Err(Error::invalid("n_realizations must be positive"));
        }
        let gamma = self.real_modes();
        let k = self.eigenvalues.len();
        let mut reals = Vec::with_capacity(n_realizations);
        for r in 0..n_realizations {
            let mut rng = rng::stream(seed, "linear-system/initial", r as u64);
            let phi = DVector::from_fn(2 * k, |i, _| {
                self.modal_std[i / 2] * Normal::new(0.0, 1.0).expect("unit normal").sample(&mut rng)
            });
            let mut snaps = DMatrix::zeros(times.len(), gamma.nrows());
            for (i, &t) in times.iter().enumerate() {
                let g = &gamma * self.evolve_modal(&phi, t);
                snaps.set_row(i, &g.transpose());
            }
            reals.push(Realization::new(times.to_vec(), snaps)?);
        }
        let n = gamma.nrows();
        let ensemble = SnapshotEnsemble::new(reals, vec![n], 1)?;
        let truth = ModeSet::new(
            self.modes.clone(),
            self.eigenvalues.iter().map(|l| l.im.abs() / (2.0 * PI)).collect(),
            vec![0.0; k],
            self.modal_std.iter().map(|s| s * s).collect(),
            MethodTag::Truth,
        )?;
        Ok((ensemble, truth))
    }
}

/// Convenience wrapper over [`LinearSystem::generate`].
pub fn generate_linear_system(
    eigenvalues: &[C64],
    modes: &DMatrix<C64>,
    times: &[f64],
    modal_std: &[f64],
    n_realizations: usize,
    seed: u64,
) -> Result<(SnapshotEnsemble, ModeSet)> {
    LinearSystem {
        eigenvalues: eigenvalues.to_vec(),
        modes: modes.clone(),
        modal_std: modal_std.to_vec(),
    }
    .generate(times, n_realizations, seed)
}

/// Number of snapshots kept out of `n` for a retention fraction.
pub fn retained_count(n: usize, fraction: f64) -> usize {
    ((fraction * n as f64).round() as usize).clamp(2.min(n), n)
}

/// Randomly drops snapshots so each realization keeps `round(fraction·n)`
/// of them; the first snapshot (the anchor) is always kept.
pub fn subsample_irregular(
    ensemble: &SnapshotEnsemble,
    retain_fraction: f64,
    seed: u64,
) -> Result<SnapshotEnsemble> {
    if !(retain_fraction > 0.0 && retain_fraction <= 1.0) {
        return Err(Error::invalid(format!(
            "retain_fraction {retain_fraction} outside (0, 1]"
        )));
    }
    ensemble.map_realizations(|k, r| {
        let n = r.len();
        let keep = retained_count(n, retain_fraction);
        if keep == n {
            return Ok(r.clone());
        }
        let mut rng = rng::stream(seed, "subsample", k as u64);
        let mut idx: Vec<usize> = index::sample(&mut rng, n - 1, keep - 1)
            .into_iter()
            .map(|i| i + 1)
            .collect();
        idx.push(0);
        idx.sort_unstable();
        r.select(&idx)
    })
}

/// Natural cubic spline of every column resampled on
/// `t_first + k·dt_out ≤ t_last`.
pub fn interpolate_cubic_uniform(realization: &Realization, dt_out: f64) -> Result<Realization> {
    if realization.len() < 4 {
        return Err(Error::invalid(format!(
            "cubic interpolation needs at least 4 snapshots, got {}",
            realization.len()
        )));
    }
    if !(dt_out > 0.0) {
        return Err(Error::invalid("dt_out must be positive"));
    }
    let t = realization.times();
    let (t0, t1) = (t[0], t[t.len() - 1]);
    let n_out = ((t1 - t0) / dt_out + 1e-9).floor() as usize + 1;
    let grid: Vec<f64> = (0..n_out).map(|k| t0 + k as f64 * dt_out).collect();
    let spline = NaturalSpline::new(t, realization.snapshots())?;
    let mut values = spline.eval(&grid);
    // knots that land on the grid keep their exact values
    for (k, tg) in grid.iter().enumerate() {
        if let Ok(i) = t.binary_search_by(|v| v.total_cmp(tg)) {
            values.set_row(k, &realization.snapshots().row(i));
        }
    }
    let mut out = Realization::new(grid, values)?;
    out.phase_label = realization.phase_label;
    Ok(out)
}

/// Interpolates every realization and truncates them to a common length so
/// the result is a uniform, equal-length ensemble.
pub fn interpolate_ensemble_uniform(ensemble: &SnapshotEnsemble, dt_out: f64) -> Result<SnapshotEnsemble> {
    let interp = ensemble.map_realizations(|_, r| interpolate_cubic_uniform(r, dt_out))?;
    let n_min = interp.realizations().iter().map(Realization::len).min().unwrap_or(0);
    interp.map_realizations(|_, r| r.select(&(0..n_min).collect::<Vec<_>>()))
}
