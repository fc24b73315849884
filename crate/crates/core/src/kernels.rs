//! Cosine and linear kernels and the matrix-valued LMC kernel built from
//! them, in plain, phase-aware and coupled forms.
//!
//! Every form is a finite feature expansion: the covariance between two
//! training pairs is `Φ_a Φ_bᵀ`, where `Φ` has `r` rows and a few columns per
//! conjugate pair. This is what makes training cheap (see `mvgpr`).

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::TrainingPair;
use crate::error::{Error, Result};
use crate::io;
use crate::linalg::C64;

/// `σ² cos(ωτ)`
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CosineKernel {
    pub sigma2: f64,
    /// rad/s
    pub omega: f64,
}

impl CosineKernel {
    pub fn new(sigma2: f64, omega: f64) -> Result<Self> {
        if !(sigma2 > 0.0) || !(omega > 0.0) {
            return Err(Error::invalid("cosine kernel needs sigma2 > 0 and omega > 0"));
        }
        Ok(Self { sigma2, omega })
    }

    pub fn eval(&self, tau: f64) -> f64 {
        self.sigma2 * (self.omega * tau).cos()
    }
}

/// `(wᵀg′)(wᵀg″)`
#[derive(Clone, Debug, PartialEq)]
pub struct LinearKernel {
    pub w: DVector<f64>,
}

impl LinearKernel {
    pub fn eval(&self, ga: &DVector<f64>, gb: &DVector<f64>) -> f64 {
        self.w.dot(ga) * self.w.dot(gb)
    }
}

/// Which LMC variant a model uses.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelForm {
    /// `Σ_j γ̃_j γ̃_jᵀ σ_k² cos(ω_k τ)`, no anchor dependence.
    Plain,
    /// `Σ_j γ̃_j γ̃_jᵀ σ_k² cos(ω_k τ) (w_kᵀg′)(w_kᵀg″)`, one `w` per pair.
    #[default]
    PhaseAware,
    /// Keeps the sine cross-correlation between the two members of a pair
    /// and reads a two-component modal coordinate `(u_kᵀg, v_kᵀg)` from the
    /// anchor, so a linear system's trajectories are represented exactly.
    Coupled,
}

impl KernelForm {
    /// Linear-kernel weight vectors per pair.
    pub fn n_weights(self) -> usize {
        match self {
            KernelForm::Plain => 0,
            KernelForm::PhaseAware => 1,
            KernelForm::Coupled => 2,
        }
    }

    /// Feature columns per pair.
    pub fn n_features(self) -> usize {
        match self {
            KernelForm::Plain | KernelForm::PhaseAware => 4,
            KernelForm::Coupled => 2,
        }
    }
}

/// Hyperparameters of the LMC kernel. Columns `2k` and `2k+1` of `Γ̃` form
/// conjugate pair `k` and share its cosine and linear kernels; parameters
/// are stored once per pair, so the tie cannot be broken.
#[derive(Clone, Debug, PartialEq)]
pub struct LmcModel {
    form: KernelForm,
    gamma: DMatrix<f64>,
    log_sigma2: Vec<f64>,
    log_omega: Vec<f64>,
    /// `r × (n_pairs·n_weights)`, pair-major.
    weights: DMatrix<f64>,
    log_noise: f64,
}

/// Parameters whose positivity is enforced through a log are clamped to
/// this floor when constructed from raw values.
const MIN_POSITIVE: f64 = 1e-300;

impl LmcModel {
    /// `gamma` is `r × 2N_k`, `weights` is `r × (N_k·form.n_weights())`.
    pub fn new(
        form: KernelForm,
        gamma: DMatrix<f64>,
        sigma2: &[f64],
        omega: &[f64],
        weights: DMatrix<f64>,
        noise_var: f64,
    ) -> Result<Self> {
        let r = gamma.nrows();
        let nk = sigma2.len();
        if r == 0 || nk == 0 {
            return Err(Error::invalid("model needs r ≥ 1 and at least one pair"));
        }
        if gamma.ncols() != 2 * nk || omega.len() != nk {
            return Err(Error::invalid(format!(
                "gamma has {} columns, {} omegas, expected {} and {nk} for {nk} pairs",
                gamma.ncols(),
                omega.len(),
                2 * nk
            )));
        }
        if weights.shape() != (r, nk * form.n_weights()) {
            return Err(Error::invalid(format!(
                "weights are {:?}, {form:?} needs {:?}",
                weights.shape(),
                (r, nk * form.n_weights())
            )));
        }
        if sigma2.iter().chain(omega).any(|v| !(*v > 0.0)) {
            return Err(Error::invalid("variances and frequencies must be positive"));
        }
        if !(noise_var >= 0.0) {
            return Err(Error::invalid("noise variance must be non-negative"));
        }
        if gamma.iter().chain(weights.iter()).any(|v| !v.is_finite()) {
            return Err(Error::invalid("gamma and weights must be finite"));
        }
        Ok(Self {
            form,
            gamma,
            log_sigma2: sigma2.iter().map(|v| v.ln()).collect(),
            log_omega: omega.iter().map(|v| v.ln()).collect(),
            weights,
            log_noise: noise_var.max(MIN_POSITIVE).ln(),
        })
    }

    pub fn form(&self) -> KernelForm {
        self.form
    }

    pub fn n_pairs(&self) -> usize {
        self.log_sigma2.len()
    }

    /// Reduced dimension `r`.
    pub fn dim(&self) -> usize {
        self.gamma.nrows()
    }

    pub fn gamma(&self) -> &DMatrix<f64> {
        &self.gamma
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn sigma2(&self, k: usize) -> f64 {
        self.log_sigma2[k].exp()
    }

    pub fn omega(&self, k: usize) -> f64 {
        self.log_omega[k].exp()
    }

    pub fn frequency_hz(&self, k: usize) -> f64 {
        self.omega(k) / (2.0 * PI)
    }

    pub fn noise_var(&self) -> f64 {
        self.log_noise.exp()
    }

    pub fn cosine_kernel(&self, k: usize) -> CosineKernel {
        CosineKernel {
            sigma2: self.sigma2(k),
            omega: self.omega(k),
        }
    }

    /// Linear kernel of pair `k` (the first weight vector for the coupled form).
    pub fn linear_kernel(&self, k: usize) -> Option<LinearKernel> {
        let nw = self.form.n_weights();
        (nw > 0).then(|| LinearKernel {
            w: self.weights.column(k * nw).into_owned(),
        })
    }

    /// Copy with a different noise variance.
    pub fn with_noise_var(&self, noise_var: f64) -> Result<Self> {
        if !(noise_var >= 0.0) {
            return Err(Error::invalid("noise variance must be non-negative"));
        }
        let mut m = self.clone();
        m.log_noise = noise_var.max(MIN_POSITIVE).ln();
        Ok(m)
    }

    /// Copy of the model in another form; linear weights are rebuilt from
    /// `weights`, which must match the new form.
    pub fn with_form(&self, form: KernelForm, weights: DMatrix<f64>) -> Result<Self> {
        let s: Vec<f64> = (0..self.n_pairs()).map(|k| self.sigma2(k)).collect();
        let o: Vec<f64> = (0..self.n_pairs()).map(|k| self.omega(k)).collect();
        LmcModel::new(form, self.gamma.clone(), &s, &o, weights, self.noise_var())
    }

    /// Number of packed optimization parameters.
    pub fn n_params(&self) -> usize {
        2 * self.n_pairs() + 1 + self.gamma.len() + self.weights.len()
    }

    /// Packed parameters: `[log σ² (N_k), log ω (N_k), log σ_n², Γ̃ (column
    /// major), weights (column major)]`.
    pub fn params(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.n_params());
        p.extend(&self.log_sigma2);
        p.extend(&self.log_omega);
        p.push(self.log_noise);
        p.extend(self.gamma.iter());
        p.extend(self.weights.iter());
        p
    }

    pub fn set_params(&mut self, p: &[f64]) -> Result<()> {
        if p.len() != self.n_params() {
            return Err(Error::invalid(format!(
                "expected {} parameters, got {}",
                self.n_params(),
                p.len()
            )));
        }
        let nk = self.n_pairs();
        self.log_sigma2.copy_from_slice(&p[..nk]);
        self.log_omega.copy_from_slice(&p[nk..2 * nk]);
        self.log_noise = p[2 * nk];
        let g0 = 2 * nk + 1;
        let ng = self.gamma.len();
        self.gamma.as_mut_slice().copy_from_slice(&p[g0..g0 + ng]);
        self.weights.as_mut_slice().copy_from_slice(&p[g0 + ng..]);
        Ok(())
    }

    /// Index layout of [`params`](Self::params).
    pub(crate) fn layout(&self) -> ParamLayout {
        let nk = self.n_pairs();
        ParamLayout {
            log_sigma2: 0,
            log_omega: nk,
            log_noise: 2 * nk,
            gamma: 2 * nk + 1,
            weights: 2 * nk + 1 + self.gamma.len(),
        }
    }

    /// Total feature columns `m`.
    pub fn n_features(&self) -> usize {
        self.n_pairs() * self.form.n_features()
    }

    /// Anchor-dependent scalar(s) of pair `k`.
    fn anchor_coords(&self, k: usize, g: &DVector<f64>) -> [f64; 2] {
        match self.form {
            KernelForm::Plain => [1.0, 0.0],
            KernelForm::PhaseAware => [self.weights.column(k).dot(g), 0.0],
            KernelForm::Coupled => [
                self.weights.column(2 * k).dot(g),
                self.weights.column(2 * k + 1).dot(g),
            ],
        }
    }

    /// Feature block `r × m` of one (anchor, lag) input.
    pub fn features(&self, lag: f64, anchor: &DVector<f64>) -> Result<DMatrix<f64>> {
        let r = self.dim();
        if anchor.len() != r {
            return Err(Error::invalid(format!(
                "anchor has dimension {}, model expects {r}",
                anchor.len()
            )));
        }
        let nf = self.form.n_features();
        let mut out = DMatrix::zeros(r, self.n_features());
        for k in 0..self.n_pairs() {
            let sd = self.sigma2(k).sqrt();
            let (s, c) = (self.omega(k) * lag).sin_cos();
            let a = self.gamma.column(2 * k);
            let b = self.gamma.column(2 * k + 1);
            let phi = self.anchor_coords(k, anchor);
            let base = k * nf;
            match self.form {
                KernelForm::Plain | KernelForm::PhaseAware => {
                    let l = sd * phi[0];
                    out.column_mut(base).axpy(l * c, &a, 0.0);
                    out.column_mut(base + 1).axpy(l * s, &a, 0.0);
                    out.column_mut(base + 2).axpy(l * c, &b, 0.0);
                    out.column_mut(base + 3).axpy(l * s, &b, 0.0);
                }
                KernelForm::Coupled => {
                    // x = R(ωt)φ; columns Γ̃x and Γ̃Jx
                    let x1 = c * phi[0] - s * phi[1];
                    let x2 = s * phi[0] + c * phi[1];
                    let mut c0 = out.column_mut(base);
                    c0.axpy(sd * x1, &a, 0.0);
                    c0.axpy(sd * x2, &b, 1.0);
                    let mut c1 = out.column_mut(base + 1);
                    c1.axpy(-sd * x2, &a, 0.0);
                    c1.axpy(sd * x1, &b, 1.0);
                }
            }
        }
        Ok(out)
    }

    /// Stacked features `(n·r) × m` of a list of pairs.
    pub fn feature_matrix(&self, pairs: &[TrainingPair]) -> Result<DMatrix<f64>> {
        let r = self.dim();
        let mut out = DMatrix::zeros(pairs.len() * r, self.n_features());
        for (p, pair) in pairs.iter().enumerate() {
            out.rows_mut(p * r, r).copy_from(&self.features(pair.lag, &pair.anchor)?);
        }
        Ok(out)
    }

    /// Covariance block between inputs `(t_a, g_a)` and `(t_a + tau, g_b)`.
    pub fn eval_block(&self, tau: f64, ga: &DVector<f64>, gb: &DVector<f64>) -> Result<DMatrix<f64>> {
        Ok(self.features(0.0, ga)? * self.features(tau, gb)?.transpose())
    }

    /// Dense Gram matrix with noise and the smallest jitter that lets a
    /// Cholesky factorization succeed.
    pub fn assemble_gram(&self, pairs: &[TrainingPair]) -> Result<GramMatrix> {
        if pairs.is_empty() {
            return Err(Error::invalid("cannot assemble a Gram matrix without pairs"));
        }
        let r = self.dim();
        let n = pairs.len() * r;
        let mut k = DMatrix::zeros(n, n);
        for (a, pa) in pairs.iter().enumerate() {
            for (b, pb) in pairs.iter().enumerate().skip(a) {
                let blk = self.eval_block(pb.lag - pa.lag, &pa.anchor, &pb.anchor)?;
                k.view_mut((a * r, b * r), (r, r)).copy_from(&blk);
                if a != b {
                    k.view_mut((b * r, a * r), (r, r)).copy_from(&blk.transpose());
                }
            }
        }
        for i in 0..n {
            k[(i, i)] += self.noise_var();
        }
        let scale = (k.trace() / n as f64).max(f64::MIN_POSITIVE);
        let mut jitter = 0.0;
        let mut next = 1e-10;
        loop {
            let mut kj = k.clone();
            for i in 0..n {
                kj[(i, i)] += jitter;
            }
            if let Some(chol) = kj.clone().cholesky() {
                return Ok(GramMatrix {
                    matrix: kj,
                    cholesky: chol,
                    jitter,
                });
            }
            if next > 1e-6 * (1.0 + 1e-9) {
                let min_eig = k.clone().symmetric_eigenvalues().min();
                return Err(Error::Numerical(format!(
                    "Gram matrix not positive definite after jitter {jitter:e}; smallest eigenvalue {min_eig:e}"
                )));
            }
            jitter = next * scale;
            next *= 10.0;
        }
    }

    /// One spectral entry per pair: frequency, complex mode
    /// `γ̃_{2k} + iγ̃_{2k+1}` and delta weight `2πσ_k²`.
    pub fn implied_spectral_density(&self) -> Vec<SpectralEntry> {
        let weights: Vec<f64> = (0..self.n_pairs()).map(|k| 2.0 * PI * self.sigma2(k)).collect();
        let max = weights.iter().copied().fold(0.0, f64::max);
        (0..self.n_pairs())
            .map(|k| SpectralEntry {
                frequency: self.frequency_hz(k),
                mode: self.complex_mode(k),
                weight: weights[k],
                prunable: weights[k] <= 1e-8 * max,
            })
            .collect()
    }

    pub fn complex_mode(&self, k: usize) -> DVector<C64> {
        let a = self.gamma.column(2 * k);
        let b = self.gamma.column(2 * k + 1);
        DVector::from_fn(self.dim(), |i, _| C64::new(a[i], b[i]))
    }

    /// Mode ranking `λ̃_k = σ_k²‖w_k‖²` (`σ_k²` for the plain form; the
    /// coupled form averages its two weight vectors).
    pub fn ranking_weights(&self) -> Vec<f64> {
        let nw = self.form.n_weights();
        (0..self.n_pairs())
            .map(|k| {
                let w2 = if nw == 0 {
                    1.0
                } else {
                    (0..nw).map(|i| self.weights.column(k * nw + i).norm_squared()).sum::<f64>() / nw as f64
                };
                self.sigma2(k) * w2
            })
            .collect()
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let meta = ModelMeta {
            form: self.form,
            dim: self.dim(),
            n_pairs: self.n_pairs(),
            log_sigma2: self.log_sigma2.clone(),
            log_omega: self.log_omega.clone(),
            log_noise: self.log_noise,
            endianness: io::ENDIANNESS.into(),
            dtype: io::DTYPE.into(),
        };
        io::write_json(&dir.join("model.json"), &meta)?;
        io::write_matrix_bin(&dir.join("gamma.bin"), &self.gamma)?;
        io::write_matrix_bin(&dir.join("weights.bin"), &self.weights)
    }

    pub fn read(dir: &Path) -> Result<LmcModel> {
        let path = dir.join("model.json");
        let meta: ModelMeta = io::read_json(&path)?;
        io::check_tags(&path, &meta.endianness, &meta.dtype)?;
        if meta.log_sigma2.len() != meta.n_pairs || meta.log_omega.len() != meta.n_pairs {
            return Err(Error::parse(&path, 0, "per-pair parameter count does not match n_pairs"));
        }
        let gamma = io::read_matrix_bin(&dir.join("gamma.bin"), meta.dim, 2 * meta.n_pairs)?;
        let weights = io::read_matrix_bin(
            &dir.join("weights.bin"),
            meta.dim,
            meta.n_pairs * meta.form.n_weights(),
        )?;
        Ok(LmcModel {
            form: meta.form,
            gamma,
            log_sigma2: meta.log_sigma2,
            log_omega: meta.log_omega,
            weights,
            log_noise: meta.log_noise,
        })
    }
}

pub(crate) struct ParamLayout {
    pub log_sigma2: usize,
    pub log_omega: usize,
    pub log_noise: usize,
    pub gamma: usize,
    pub weights: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelMeta {
    form: KernelForm,
    dim: usize,
    n_pairs: usize,
    log_sigma2: Vec<f64>,
    log_omega: Vec<f64>,
    log_noise: f64,
    endianness: String,
    dtype: String,
}

/// Result of [`LmcModel::assemble_gram`].
pub struct GramMatrix {
    /// Including noise and jitter.
    pub matrix: DMatrix<f64>,
    pub cholesky: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    /// Absolute jitter added to the diagonal (0 if none was needed).
    pub jitter: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpectralEntry {
    /// Hz
    pub frequency: f64,
    pub mode: DVector<C64>,
    pub weight: f64,
    /// Weight negligible relative to the largest entry.
    pub prunable: bool,
}
