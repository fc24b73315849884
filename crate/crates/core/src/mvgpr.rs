//! Multivariate GP regression with the LMC kernel: negative log posterior
//! with analytic gradients, training, prediction and mode extraction.
//!
//! The Gram matrix is `K = ΦΦᵀ + sI` with `Φ` the stacked `(n·r) × m`
//! feature matrix of the kernel, so everything goes through the `m × m`
//! capacitance matrix `A = sI + ΦᵀΦ`:
//! `log|K| = (N−m) log s + log|A|`, `K⁻¹y = (y − ΦA⁻¹Φᵀy)/s`.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{extract_training_pairs, SnapshotEnsemble, TrainingPair};
use crate::error::{Error, Result};
use crate::io;
use crate::kernels::{KernelForm, LmcModel};
use crate::linalg::C64;
use crate::metrics::FrequencyTolerance;
use crate::modes::{MethodTag, ModeSet};
use crate::optim::{self, OptimOptions, Optimizer, TraceRow};
use crate::pod::PodBasis;
use crate::rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Number of conjugate pairs `N_k`.
    pub n_pairs: usize,
    pub form: KernelForm,
    /// Initial frequencies in Hz, one per pair; periodogram peaks when absent.
    pub freq_init: Option<Vec<f64>>,
    /// Each initial frequency is moved by this fraction, up or down at random.
    pub freq_init_jitter: f64,
    /// Weight of the orthonormality penalty on `Γ̃`.
    pub lambda_reg: f64,
    pub max_iters: usize,
    pub seed: u64,
    pub optimizer: Optimizer,
    pub learning_rate: f64,
    /// Longest lag used for training pairs (s); all lags when absent.
    pub max_lag: Option<f64>,
    pub max_pairs_per_realization: Option<usize>,
    /// Training restarts from the previous optimum with the lag window
    /// doubled each stage, ending at the full window. Short windows first
    /// keep a detuned initial frequency inside the likelihood's main lobe.
    pub lag_stages: usize,
    /// Iterations run before the first stage with the frequencies held at
    /// their initial values, so every pair first picks up the content
    /// nearest its own frequency.
    pub warmup_iters: usize,
    pub noise_init: f64,
    /// Added to the trained noise variance to keep `K` well conditioned.
    pub noise_floor: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            n_pairs: 1,
            form: KernelForm::PhaseAware,
            freq_init: None,
            freq_init_jitter: 0.0,
            lambda_reg: 0.0,
            max_iters: 2000,
            seed: 0,
            optimizer: Optimizer::Lbfgs,
            learning_rate: 1e-2,
            max_lag: None,
            max_pairs_per_realization: None,
            lag_stages: 3,
            warmup_iters: 200,
            noise_init: 1e-2,
            noise_floor: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_pairs == 0 || self.lag_stages == 0 {
            return Err(Error::invalid("n_pairs and lag_stages must be positive"));
        }
        if let Some(f) = &self.freq_init {
            if f.len() != self.n_pairs || f.iter().any(|v| !(*v > 0.0)) {
                return Err(Error::invalid("freq_init needs one positive frequency per pair"));
            }
        }
        if !(self.lambda_reg >= 0.0) {
            return Err(Error::invalid("lambda_reg must be non-negative"));
        }
        if !(self.freq_init_jitter >= 0.0 && self.freq_init_jitter < 1.0) {
            return Err(Error::invalid("freq_init_jitter must lie in [0, 1)"));
        }
        if !(self.learning_rate > 0.0) || !(self.noise_init > 0.0) || !(self.noise_floor >= 0.0) {
            return Err(Error::invalid("learning_rate and noise_init must be positive, noise_floor non-negative"));
        }
        Ok(())
    }
}

/// Orthonormality penalty `‖Γ_RᵀΓ_R + Γ_IᵀΓ_I − I‖² + ‖Γ_RᵀΓ_I − Γ_IᵀΓ_R‖²`
/// with `Γ_R`, `Γ_I` the even and odd columns of `Γ̃`.
pub fn orthonormal_penalty(gamma: &DMatrix<f64>) -> f64 {
    let (p, q, _, _) = penalty_parts(gamma);
    p.norm_squared() + q.norm_squared()
}

fn penalty_parts(gamma: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
    let nk = gamma.ncols() / 2;
    let gr = gamma.select_columns(&(0..nk).map(|k| 2 * k).collect::<Vec<_>>());
    let gi = gamma.select_columns(&(0..nk).map(|k| 2 * k + 1).collect::<Vec<_>>());
    let p = gr.transpose() * &gr + gi.transpose() * &gi - DMatrix::identity(nk, nk);
    let q = gr.transpose() * &gi - gi.transpose() * &gr;
    (p, q, gr, gi)
}

fn stacked_targets(pairs: &[TrainingPair], r: usize) -> Result<DVector<f64>> {
    let mut y = DVector::zeros(pairs.len() * r);
    for (p, pair) in pairs.iter().enumerate() {
        if pair.target.len() != r || pair.anchor.len() != r {
            return Err(Error::invalid(format!(
                "pair {p} has dimension {}/{}, model expects {r}",
                pair.anchor.len(),
                pair.target.len()
            )));
        }
        y.rows_mut(p * r, r).copy_from(&pair.target);
    }
    Ok(y)
}

/// Negative log marginal likelihood plus `lambda_reg` times the
/// orthonormality penalty, using the model's noise variance as is.
pub fn negative_log_posterior(model: &LmcModel, pairs: &[TrainingPair], lambda_reg: f64) -> Result<f64> {
    let y = stacked_targets(pairs, model.dim())?;
    Ok(objective(model, pairs, &y, lambda_reg, 0.0, false)?.0)
}

/// Same value with its gradient with respect to [`LmcModel::params`].
pub fn negative_log_posterior_grad(
    model: &LmcModel,
    pairs: &[TrainingPair],
    lambda_reg: f64,
) -> Result<(f64, Vec<f64>)> {
    let y = stacked_targets(pairs, model.dim())?;
    objective(model, pairs, &y, lambda_reg, 0.0, true)
}

/// Reference evaluation through the dense Gram matrix (cubic cost).
pub fn negative_log_posterior_dense(model: &LmcModel, pairs: &[TrainingPair], lambda_reg: f64) -> Result<f64> {
    let y = stacked_targets(pairs, model.dim())?;
    let gram = model.assemble_gram(pairs)?;
    let alpha = gram.cholesky.solve(&y);
    let l = gram.cholesky.l();
    let logdet: f64 = 2.0 * l.diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let n = y.len() as f64;
    Ok(0.5 * y.dot(&alpha) + 0.5 * logdet + 0.5 * n * (2.0 * PI).ln() + lambda_reg * orthonormal_penalty(model.gamma()))
}

fn objective(
    model: &LmcModel,
    pairs: &[TrainingPair],
    y: &DVector<f64>,
    lambda_reg: f64,
    noise_floor: f64,
    with_grad: bool,
) -> Result<(f64, Vec<f64>)> {
    if pairs.is_empty() {
        return Err(Error::invalid("no training pairs"));
    }
    let r = model.dim();
    let n = y.len();
    let phi = model.feature_matrix(pairs)?;
    let m = phi.ncols();
    let s = model.noise_var() + noise_floor;
    let (chol, phit_y) = capacitance(&phi, y, s)?;
    let z = chol.solve(&phit_y);
    let alpha = (y - &phi * &z) / s;
    let logdet_a = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let logdet = (n as f64 - m as f64) * s.ln() + logdet_a;
    let penalty = if lambda_reg > 0.0 { orthonormal_penalty(model.gamma()) } else { 0.0 };
    let loss = 0.5 * y.dot(&alpha) + 0.5 * logdet + 0.5 * n as f64 * (2.0 * PI).ln() + lambda_reg * penalty;
    if !with_grad {
        return Ok((loss, Vec::new()));
    }

    // dL/dΦ = K⁻¹Φ − α(αᵀΦ), with K⁻¹Φ = ΦA⁻¹
    let a_inv = chol.inverse();
    let mut g = &phi * &a_inv;
    let at_phi = phi.tr_mul(&alpha);
    g.ger(-1.0, &alpha, &at_phi, 1.0);

    let lay = model.layout();
    let mut grad = vec![0.0; model.n_params()];
    let tr_kinv = (n as f64 - m as f64) / s + a_inv.trace();
    grad[lay.log_noise] = 0.5 * (tr_kinv - alpha.norm_squared()) * model.noise_var();

    let form = model.form();
    let nf = form.n_features();
    let gamma = model.gamma();
    let weights = model.weights();
    for k in 0..model.n_pairs() {
        let sd = model.sigma2(k).sqrt();
        let om = model.omega(k);
        let a = gamma.column(2 * k);
        let b = gamma.column(2 * k + 1);
        let cols = k * nf..(k + 1) * nf;
        // ½ Σ G⊙Φ over the pair's columns
        let mut d_logs2 = 0.0;
        for c in cols.clone() {
            d_logs2 += g.column(c).dot(&phi.column(c));
        }
        grad[lay.log_sigma2 + k] = 0.5 * d_logs2;

        let mut d_omega = 0.0;
        let mut d_a = DVector::zeros(r);
        let mut d_b = DVector::zeros(r);
        let mut d_w0 = DVector::zeros(r);
        let mut d_w1 = DVector::zeros(r);
        for (p, pair) in pairs.iter().enumerate() {
            let gp = g.view((p * r, k * nf), (r, nf));
            let t = pair.lag;
            let (sn, cs) = (om * t).sin_cos();
            match form {
                KernelForm::Plain | KernelForm::PhaseAware => {
                    let l = if form == KernelForm::Plain { 1.0 } else { weights.column(k).dot(&pair.anchor) };
                    let u0 = a.dot(&gp.column(0));
                    let u1 = a.dot(&gp.column(1));
                    let u2 = b.dot(&gp.column(2));
                    let u3 = b.dot(&gp.column(3));
                    let dc = sd * l * (u0 + u2);
                    let ds = sd * l * (u1 + u3);
                    d_omega += t * (-sn * dc + cs * ds);
                    d_a += (gp.column(0) * cs + gp.column(1) * sn) * (sd * l);
                    d_b += (gp.column(2) * cs + gp.column(3) * sn) * (sd * l);
                    if form == KernelForm::PhaseAware {
                        let dl = sd * (cs * (u0 + u2) + sn * (u1 + u3));
                        d_w0.axpy(dl, &pair.anchor, 1.0);
                    }
                }
                KernelForm::Coupled => {
                    let p1 = weights.column(2 * k).dot(&pair.anchor);
                    let p2 = weights.column(2 * k + 1).dot(&pair.anchor);
                    let x1 = cs * p1 - sn * p2;
                    let x2 = sn * p1 + cs * p2;
                    let h0 = gp.column(0);
                    let h1 = gp.column(1);
                    d_a += (h0 * x1 - h1 * x2) * sd;
                    d_b += (h0 * x2 + h1 * x1) * sd;
                    let dx1 = sd * (a.dot(&h0) + b.dot(&h1));
                    let dx2 = sd * (b.dot(&h0) - a.dot(&h1));
                    d_omega += t * (-x2 * dx1 + x1 * dx2);
                    d_w0.axpy(cs * dx1 + sn * dx2, &pair.anchor, 1.0);
                    d_w1.axpy(-sn * dx1 + cs * dx2, &pair.anchor, 1.0);
                }
            }
        }
        grad[lay.log_omega + k] = d_omega * om;
        for i in 0..r {
            grad[lay.gamma + (2 * k) * r + i] = d_a[i];
            grad[lay.gamma + (2 * k + 1) * r + i] = d_b[i];
        }
        match form {
            KernelForm::Plain => {}
            KernelForm::PhaseAware => {
                for i in 0..r {
                    grad[lay.weights + k * r + i] = d_w0[i];
                }
            }
            KernelForm::Coupled => {
                for i in 0..r {
                    grad[lay.weights + (2 * k) * r + i] = d_w0[i];
                    grad[lay.weights + (2 * k + 1) * r + i] = d_w1[i];
                }
            }
        }
    }

    if lambda_reg > 0.0 {
        let (p, q, gr, gi) = penalty_parts(gamma);
        let d_r = (&gr * &p * 4.0 - &gi * &q * 4.0) * lambda_reg;
        let d_i = (&gi * &p * 4.0 + &gr * &q * 4.0) * lambda_reg;
        for k in 0..model.n_pairs() {
            for i in 0..r {
                grad[lay.gamma + (2 * k) * r + i] += d_r[(i, k)];
                grad[lay.gamma + (2 * k + 1) * r + i] += d_i[(i, k)];
            }
        }
    }
    Ok((loss, grad))
}

/// Cholesky factor of `A = sI + ΦᵀΦ` and `Φᵀy`.
fn capacitance(phi: &DMatrix<f64>, y: &DVector<f64>, s: f64) -> Result<(Cholesky<f64, Dyn>, DVector<f64>)> {
    if !(s > 0.0) {
        return Err(Error::Numerical("noise variance must be positive for GP inference".into()));
    }
    let mut a = phi.tr_mul(phi);
    for i in 0..a.nrows() {
        a[(i, i)] += s;
    }
    let chol = a
        .cholesky()
        .ok_or_else(|| Error::Numerical("capacitance matrix is not positive definite".into()))?;
    Ok((chol, phi.tr_mul(y)))
}

/// A trained model together with what it was trained on.
#[derive(Clone, Debug)]
pub struct TrainResult {
    pub model: LmcModel,
    pub trace: Vec<TraceRow>,
    pub pairs: Vec<TrainingPair>,
    pub converged: bool,
    pub initial_frequencies: Vec<f64>,
}

pub fn train(ensemble: &SnapshotEnsemble, config: &TrainConfig) -> Result<TrainResult> {
    config.validate()?;
    let r = ensemble.n_space();
    let base = match &config.freq_init {
        Some(f) => f.clone(),
        None => {
            let peaks = periodogram_peaks(ensemble, config.n_pairs)?;
            (0..config.n_pairs).map(|k| peaks[k % peaks.len()]).collect()
        }
    };
    let mut rng = rng::stream(config.seed, "mvgpr/init", 0);
    let freq0: Vec<f64> = base
        .iter()
        .map(|f| {
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            f * (1.0 + sign * config.freq_init_jitter)
        })
        .collect();
    let scale = 1.0 / (r as f64).sqrt();
    let mut normal = |rows: usize, cols: usize| {
        DMatrix::from_fn(rows, cols, |_, _| {
            let z: f64 = StandardNormal.sample(&mut rng);
            z * scale
        })
    };
    let gamma = normal(r, 2 * config.n_pairs);
    let weights = normal(r, config.n_pairs * config.form.n_weights());
    let omega: Vec<f64> = freq0.iter().map(|f| 2.0 * PI * f).collect();
    let mut model = LmcModel::new(
        config.form,
        gamma,
        &vec![1.0; config.n_pairs],
        &omega,
        weights,
        config.noise_init,
    )?;
    let full_lag = match config.max_lag {
        Some(l) => l,
        None => ensemble
            .realizations()
            .iter()
            .map(|r| r.times()[r.len() - 1] - r.times()[0])
            .fold(0.0, f64::max),
    };
    let floor = config.noise_floor;
    let lambda = config.lambda_reg;
    let stages = config.lag_stages;
    let mut trace: Vec<TraceRow> = Vec::new();
    let mut converged = false;
    let mut pairs = Vec::new();
    let lay = model.layout();
    let n_pairs = config.n_pairs;
    // stage 0 is the frozen-frequency warm-up
    for stage in 0..=stages {
        if stage == 0 && config.warmup_iters == 0 {
            continue;
        }
        let frozen = stage == 0;
        let level = stage.max(1) - 1;
        let last = level + 1 == stages && !frozen;
        let lag = if last {
            config.max_lag.unwrap_or(f64::INFINITY)
        } else {
            full_lag / 2f64.powi((stages - 1 - level) as i32)
        };
        pairs = extract_training_pairs(ensemble, lag, config.max_pairs_per_realization.unwrap_or(usize::MAX))?;
        let y = stacked_targets(&pairs, r)?;
        let mut work = model.clone();
        let mut f = |p: &[f64]| -> Result<(f64, Vec<f64>)> {
            work.set_params(p)?;
            let (loss, mut grad) = objective(&work, &pairs, &y, lambda, floor, true)?;
            if frozen {
                grad[lay.log_omega..lay.log_omega + n_pairs].fill(0.0);
            }
            Ok((loss, grad))
        };
        let budget = if frozen {
            config.warmup_iters
        } else {
            config.max_iters / stages + if last { config.max_iters % stages } else { 0 }
        };
        let opts = OptimOptions {
            optimizer: config.optimizer,
            max_iters: budget,
            learning_rate: config.learning_rate,
            ..OptimOptions::default()
        };
        let res = optim::minimize(&mut f, &model.params(), &opts).map_err(|e| match e {
            Error::Training { iteration, message, last_valid } => Error::Training {
                iteration: iteration + trace.len(),
                message,
                last_valid,
            },
            other => other,
        })?;
        model.set_params(&res.params)?;
        let offset = trace.len();
        trace.extend(res.trace.into_iter().map(|row| TraceRow {
            iteration: row.iteration + offset,
            ..row
        }));
        converged = res.converged;
    }
    let model = model.with_noise_var(model.noise_var() + floor)?;
    Ok(TrainResult {
        model,
        trace,
        pairs,
        converged,
        initial_frequencies: freq0,
    })
}

/// Dominant frequencies (Hz) of an ensemble that may be irregularly
/// sampled: peaks of the summed non-uniform DFT power of every coordinate
/// and realization, at least one record-length resolution apart.
pub fn periodogram_peaks(ensemble: &SnapshotEnsemble, n_peaks: usize) -> Result<Vec<f64>> {
    let span = ensemble
        .realizations()
        .iter()
        .map(|r| r.times()[r.len() - 1] - r.times()[0])
        .fold(f64::INFINITY, f64::min);
    let n_steps: usize = ensemble.realizations().iter().map(|r| r.len() - 1).sum();
    let total: f64 = ensemble
        .realizations()
        .iter()
        .map(|r| r.times()[r.len() - 1] - r.times()[0])
        .sum();
    if !(span > 0.0) || n_steps == 0 {
        return Err(Error::invalid("periodogram needs realizations spanning positive time"));
    }
    let f_max = 0.5 * n_steps as f64 / total;
    let df = 1.0 / (8.0 * span);
    let f_min = 1.0 / span;
    let grid: Vec<f64> = (0..)
        .map(|i| f_min + i as f64 * df)
        .take_while(|f| *f <= f_max)
        .collect();
    if grid.len() < 3 {
        return Err(Error::invalid("record too short to locate frequency peaks"));
    }
    let mut power = vec![0.0; grid.len()];
    for r in ensemble.realizations() {
        let t0 = r.times()[0];
        let s = r.snapshots();
        let mean = s.row_mean();
        for (gi, f) in grid.iter().enumerate() {
            let om = 2.0 * PI * f;
            let mut acc = 0.0;
            for j in 0..s.ncols() {
                let (mut re, mut im) = (0.0, 0.0);
                for (i, t) in r.times().iter().enumerate() {
                    let (sn, cs) = (om * (t - t0)).sin_cos();
                    let v = s[(i, j)] - mean[j];
                    re += v * cs;
                    im -= v * sn;
                }
                acc += re * re + im * im;
            }
            power[gi] += acc / r.len() as f64;
        }
    }
    let mut maxima: Vec<usize> = (1..grid.len() - 1)
        .filter(|&i| power[i] >= power[i - 1] && power[i] >= power[i + 1])
        .collect();
    maxima.sort_by(|&a, &b| power[b].total_cmp(&power[a]));
    let mut out: Vec<f64> = Vec::new();
    for i in maxima {
        if out.len() == n_peaks {
            break;
        }
        if out.iter().all(|f| (f - grid[i]).abs() >= f_min) {
            out.push(grid[i]);
        }
    }
    if out.is_empty() {
        return Err(Error::invalid("no spectral peak found"));
    }
    Ok(out)
}

/// Predictive mean and latent variance, one row per query.
#[derive(Clone, Debug, PartialEq)]
pub struct Posterior {
    pub mean: DMatrix<f64>,
    pub variance: DMatrix<f64>,
}

/// A model conditioned on its training pairs.
pub struct FittedGp {
    model: LmcModel,
    chol: Cholesky<f64, Dyn>,
    /// `A⁻¹Φᵀy`
    coef: DVector<f64>,
}

impl FittedGp {
    pub fn new(model: &LmcModel, pairs: &[TrainingPair]) -> Result<Self> {
        let y = stacked_targets(pairs, model.dim())?;
        let phi = model.feature_matrix(pairs)?;
        let (chol, phit_y) = capacitance(&phi, &y, model.noise_var())?;
        let coef = chol.solve(&phit_y);
        Ok(Self {
            model: model.clone(),
            chol,
            coef,
        })
    }

    pub fn predict(&self, queries: &[(DVector<f64>, f64)]) -> Result<Posterior> {
        let r = self.model.dim();
        let s = self.model.noise_var();
        let mut mean = DMatrix::zeros(queries.len(), r);
        let mut variance = DMatrix::zeros(queries.len(), r);
        for (q, (anchor, lag)) in queries.iter().enumerate() {
            let f = self.model.features(*lag, anchor)?;
            mean.set_row(q, &(&f * &self.coef).transpose());
            let sol = self.chol.solve(&f.transpose());
            for i in 0..r {
                let v = s * f.row(i).dot(&sol.column(i).transpose());
                variance[(q, i)] = v.max(0.0);
            }
        }
        Ok(Posterior { mean, variance })
    }
}

pub fn predict(model: &LmcModel, pairs: &[TrainingPair], queries: &[(DVector<f64>, f64)]) -> Result<Posterior> {
    FittedGp::new(model, pairs)?.predict(queries)
}

/// Complex modes `γ̃_{2k} + iγ̃_{2k+1}` in reduced coordinates, ranked by
/// `λ̃_k` (descending).
pub fn model_modes(model: &LmcModel) -> Result<ModeSet> {
    let w = model.ranking_weights();
    let mut order: Vec<usize> = (0..model.n_pairs()).collect();
    order.sort_by(|&a, &b| w[b].total_cmp(&w[a]).then(a.cmp(&b)));
    let cols: Vec<_> = order.iter().map(|&k| model.complex_mode(k)).collect();
    ModeSet::new(
        DMatrix::from_columns(&cols),
        order.iter().map(|&k| model.frequency_hz(k)).collect(),
        vec![0.0; order.len()],
        order.iter().map(|&k| w[k]).collect(),
        MethodTag::Mvgpr,
    )
}

/// Modes lifted to the full field through the scaled POD basis.
pub fn extract_modes(model: &LmcModel, basis: &PodBasis) -> Result<ModeSet> {
    basis.lift_modes(&model_modes(model)?)
}

/// Energy-ranked modes per frequency group: the implied spectral density
/// `Σ_k λ̃_k (Lγ_k)(Lγ_k)ᴴ` of the pairs whose frequencies lie within
/// `tol` of each other, lifted through the scaled basis `L` and
/// eigendecomposed. In whitened coordinates the per-pair weights carry no
/// energy information; the lift restores it.
pub fn ranked_modes(model: &LmcModel, basis: &PodBasis, tol: FrequencyTolerance) -> Result<ModeSet> {
    let lifted = extract_modes(model, basis)?;
    let mut order: Vec<usize> = (0..lifted.len()).collect();
    order.sort_by(|&a, &b| lifted.frequencies()[a].total_cmp(&lifted.frequencies()[b]));
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for k in order {
        let f = lifted.frequencies()[k];
        match groups.last_mut() {
            Some(g) if (f - lifted.frequencies()[g[0]]).abs() <= tol.at(lifted.frequencies()[g[0]]) => g.push(k),
            _ => groups.push(vec![k]),
        }
    }
    let mut cols = Vec::new();
    let (mut freqs, mut weights) = (Vec::new(), Vec::new());
    for g in groups {
        let q = DMatrix::from_columns(
            &g.iter()
                .map(|&k| lifted.modes().column(k) * C64::new(lifted.weights()[k].sqrt(), 0.0))
                .collect::<Vec<_>>(),
        );
        let eig = (q.adjoint() * &q).symmetric_eigen();
        let mut idx: Vec<usize> = (0..g.len()).collect();
        idx.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let wsum: f64 = g.iter().map(|&k| lifted.weights()[k]).sum();
        let f = g.iter().map(|&k| lifted.weights()[k] * lifted.frequencies()[k]).sum::<f64>() / wsum.max(f64::MIN_POSITIVE);
        for i in idx {
            let lam = eig.eigenvalues[i].max(0.0);
            if lam <= 1e-12 * eig.eigenvalues.max().max(f64::MIN_POSITIVE) {
                continue;
            }
            cols.push(&q * eig.eigenvectors.column(i) * C64::new(1.0 / lam.sqrt(), 0.0));
            freqs.push(if wsum > 0.0 { f } else { lifted.frequencies()[g[0]] });
            weights.push(lam);
        }
    }
    let n = freqs.len();
    let mut out = ModeSet::new(DMatrix::from_columns(&cols), freqs, vec![0.0; n], weights, MethodTag::Mvgpr)?;
    out.notes.push("weights: eigenvalues of the lifted implied spectral density per frequency group".into());
    Ok(out)
}

pub fn write_loss_trace(path: &Path, trace: &[TraceRow]) -> Result<()> {
    let rows: Vec<Vec<String>> = trace
        .iter()
        .map(|t| vec![t.iteration.to_string(), io::fmt_f64(t.loss), io::fmt_f64(t.grad_norm)])
        .collect();
    io::write_csv(path, &["iteration", "loss", "grad_norm"], &rows)
}
