//! Acceptance suite: one PASS/FAIL line per criterion. Pass criterion
//! numbers as arguments to run a subset.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::OnceLock;
use std::time::Instant;

use modekit::data::{Realization, SnapshotEnsemble, TrainingPair};
use modekit::dmd::fit_dmd_ensemble;
use modekit::experiment::{run_cell, Method, SweepOptions};
use modekit::kernels::{KernelForm, LmcModel};
use modekit::linalg::{complex_to_real_pairs, C64};
use modekit::metrics::{compare_modes, grassmann_distance, FrequencyTolerance};
use modekit::mvgpr::{
    extract_modes, negative_log_posterior, negative_log_posterior_grad, predict, ranked_modes, train, TrainConfig,
    TrainResult,
};
use modekit::pod::{fit_pod, PodBasis, PodOptions, PodTarget};
use modekit::rng;
use modekit::spod::{cross_spectral_density, fit_spod, Window};
use modekit::synth::{
    generate_coupled_oscillator, generate_linear_system, generate_synthesized_flow, BuiltinMode, ModeShape,
    SynthSpec, SynthTerm, SynthTruth,
};
use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use serde_json::json;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

const TRUTH_F: [f64; 2] = [3.1, 5.2];

struct Problem2 {
    ens: SnapshotEnsemble,
    truth: SynthTruth,
    basis: PodBasis,
    reduced: SnapshotEnsemble,
}

fn problem2() -> &'static Problem2 {
    static P: OnceLock<Problem2> = OnceLock::new();
    P.get_or_init(|| {
        let (ens, truth) = generate_synthesized_flow(&SynthSpec::default()).unwrap();
        let basis = fit_pod(&ens, PodOptions { target: PodTarget::Rank(8), center: true }).unwrap();
        let reduced = basis.project_ensemble(&ens).unwrap();
        Problem2 { ens, truth, basis, reduced }
    })
}

fn p2_tolerance() -> FrequencyTolerance {
    FrequencyTolerance::with_bin(1.0 / 3.01)
}

fn p2_train_config(form: KernelForm) -> TrainConfig {
    TrainConfig {
        n_pairs: 4,
        form,
        // periodogram peaks would seed three pairs at 3.1 Hz and one at 5.2 Hz
        freq_init: Some(vec![3.1, 3.1, 5.2, 5.2]),
        freq_init_jitter: 0.07,
        max_iters: 1500,
        seed: 3,
        ..TrainConfig::default()
    }
}

/// Full-data MVGPR fit on Problem 2 and its training time.
fn p2_mvgpr() -> &'static (TrainResult, f64) {
    static R: OnceLock<(TrainResult, f64)> = OnceLock::new();
    R.get_or_init(|| {
        let t = Instant::now();
        let res = train(&problem2().reduced, &p2_train_config(KernelForm::PhaseAware)).unwrap();
        (res, t.elapsed().as_secs_f64())
    })
}

fn rel_err_to_truth(f: f64) -> f64 {
    TRUTH_F.iter().map(|t| ((f - t) / t).abs()).fold(f64::INFINITY, f64::min)
}

/// Both truth frequencies are hit by at least one estimate within `tol`.
fn covers_truth(freqs: &[f64], tol: f64) -> bool {
    TRUTH_F.iter().all(|t| freqs.iter().any(|f| ((f - t) / t).abs() < tol))
}

fn gaussian(rows: usize, cols: usize, seed: u64, label: &str) -> DMatrix<f64> {
    let mut g = rng::stream(seed, label, 0);
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut g))
}

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

fn fmt_list(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.4}")).collect();
    format!("[{}]", parts.join(", "))
}

fn c1_frequency_recovery() -> Outcome {
    let p = problem2();
    let (res, secs) = p2_mvgpr();
    let mv: Vec<f64> = (0..res.model.n_pairs()).map(|k| res.model.frequency_hz(k)).collect();
    let mv_err = mv.iter().map(|f| rel_err_to_truth(*f)).fold(0.0, f64::max);
    let mv_ok = mv_err < 0.01 && covers_truth(&mv, 0.01) && *secs <= 600.0;

    let t = Instant::now();
    let dmd = fit_dmd_ensemble(&p.reduced, 8).unwrap();
    let dmd_secs = t.elapsed().as_secs_f64();
    let df = dmd.modes.frequencies().to_vec();
    let dmd_err = df.iter().map(|f| rel_err_to_truth(*f)).fold(0.0, f64::max);
    let dmd_ok = dmd_err < 1e-3 && covers_truth(&df, 1e-3) && dmd_secs <= 5.0;

    let t = Instant::now();
    let sp = fit_spod(&p.ens, Window::default()).unwrap();
    let spod_secs = t.elapsed().as_secs_f64();
    let lead: Vec<f64> = sp.eigenvalues.column(0).iter().copied().collect();
    let mut peaks: Vec<usize> = (1..lead.len() - 1).filter(|&k| lead[k] > lead[k - 1] && lead[k] > lead[k + 1]).collect();
    peaks.sort_by(|&a, &b| lead[b].total_cmp(&lead[a]));
    peaks.truncate(2);
    peaks.sort();
    let want: Vec<usize> = TRUTH_F.iter().map(|f| sp.nearest_bin(*f)).collect();
    let spod_ok = peaks == want && spod_secs <= 5.0;

    outcome(
        mv_ok && dmd_ok && spod_ok,
        format!(
            "MVGPR {} Hz (max rel err {mv_err:.1e}, {secs:.1} s); DMD {} Hz (max rel err {dmd_err:.1e}, {dmd_secs:.2} s); \
             SPOD peak bins {:?} = {} Hz, nearest to truth {:?} ({spod_secs:.2} s)",
            fmt_list(&mv),
            fmt_list(&df),
            peaks,
            fmt_list(&peaks.iter().map(|&k| sp.frequencies[k]).collect::<Vec<_>>()),
            want
        ),
    )
}

fn c2_subspace_equivalence() -> Outcome {
    let p = problem2();
    let (res, _) = p2_mvgpr();
    let modes = extract_modes(&res.model, &p.basis).unwrap();
    let sp = fit_spod(&p.ens, Window::default()).unwrap();
    let mut vs_spod = Vec::new();
    for f in TRUTH_F {
        let idx = modes.nearest(f, 2);
        let s = complex_to_real_pairs(&sp.mode_subspace(f, 2).unwrap());
        vs_spod.push(grassmann_distance(&modes.real_subspace(&idx), &s).unwrap());
    }
    let rep = compare_modes(&p.truth.modes, &modes, p2_tolerance()).unwrap();
    let vs_truth: Vec<f64> = rep.grassmann_per_frequency.iter().map(|x| x.1).collect();
    let pass = vs_spod.iter().all(|d| *d < 0.15) && vs_truth.iter().all(|d| *d < 0.1);
    outcome(
        pass,
        format!("per frequency {:?} Hz: MVGPR vs SPOD {} rad (< 0.15), MVGPR vs truth {} rad (< 0.1)", TRUTH_F, fmt_list(&vs_spod), fmt_list(&vs_truth)),
    )
}

fn sweep_options(form: KernelForm) -> SweepOptions {
    let spec = SynthSpec::default();
    SweepOptions {
        pod: PodOptions { target: PodTarget::Rank(8), center: true },
        interp_dt: spec.dt,
        window: Window::default(),
        mvgpr: TrainConfig {
            n_pairs: 4,
            form,
            freq_init: Some(vec![3.1, 3.1, 5.2, 5.2]),
            freq_init_jitter: 0.07,
            ..TrainConfig::default()
        },
        tolerance: p2_tolerance(),
    }
}

/// Mean over seeds of the mean per-frequency distance, per method, plus
/// the worst MVGPR relative frequency error.
fn sweep_fraction(fraction: f64, methods: &[Method], form: KernelForm) -> (Vec<f64>, f64) {
    let p = problem2();
    let opts = sweep_options(form);
    let mut sums = vec![0.0; methods.len()];
    let mut worst: f64 = 0.0;
    let n_seeds = 10;
    for seed in 0..n_seeds {
        let cells = run_cell(&p.ens, &p.truth.modes, fraction, seed, methods, &opts).unwrap();
        for (i, c) in cells.iter().enumerate() {
            let d = &c.row.grassmann_per_frequency;
            sums[i] += d.iter().sum::<f64>() / d.len() as f64;
            if methods[i] == Method::Mvgpr {
                worst = c.frequencies.iter().map(|f| rel_err_to_truth(*f)).fold(worst, f64::max);
                if !covers_truth(&c.frequencies, 0.01) {
                    worst = worst.max(f64::INFINITY);
                }
            }
        }
    }
    (sums.iter().map(|s| s / n_seeds as f64).collect(), worst)
}

fn c3_irregular_sampling() -> Outcome {
    let methods = [Method::Dmd, Method::Spod, Method::Mvgpr];
    let mut lines = Vec::new();
    let mut pass = true;
    for fraction in [0.25, 0.30, 0.35, 0.40, 0.45, 0.50] {
        let (m, worst) = sweep_fraction(fraction, &methods, KernelForm::Coupled);
        let (dmd, spod, mv) = (m[0], m[1], m[2]);
        pass &= worst < 0.01;
        if fraction >= 0.3 - 1e-9 {
            pass &= mv < 0.3;
        }
        if (fraction - 0.3).abs() < 1e-9 {
            pass &= mv < spod && spod < dmd;
        }
        lines.push(format!("{:.0}%: DMD {dmd:.3} SPOD {spod:.3} MVGPR {mv:.4} (freq err {worst:.1e})", fraction * 100.0));
    }
    let (pa, pa_worst) = sweep_fraction(0.3, &[Method::Mvgpr], KernelForm::PhaseAware);
    outcome(
        pass,
        format!(
            "mean per-frequency distance over 10 seeds, coupled MVGPR; {}; phase-aware MVGPR at 30%: {:.3} (freq err {pa_worst:.1e})",
            lines.join("; "),
            pa[0]
        ),
    )
}

fn cosine_mixture(model: &LmcModel, tau: f64) -> DMatrix<f64> {
    let r = model.dim();
    let mut c = DMatrix::zeros(r, r);
    for k in 0..model.n_pairs() {
        let a = model.gamma().column(2 * k);
        let b = model.gamma().column(2 * k + 1);
        c += (a * a.transpose() + b * b.transpose()) * (model.sigma2(k) * (model.omega(k) * tau).cos());
    }
    c
}

fn c4_kernel_average() -> Outcome {
    let r = 4;
    let mut w = gaussian(r, 2, 2, "w");
    for mut c in w.column_iter_mut() {
        c.normalize_mut();
    }
    let model = LmcModel::new(
        KernelForm::PhaseAware,
        gaussian(r, 4, 1, "gamma") * 0.5,
        &[1.5, 0.7],
        &[2.0 * PI * 1.1, 2.0 * PI * 2.9],
        w,
        0.0,
    )
    .unwrap();
    let n = 100_000;
    let mut g = rng::stream(3, "anchors", 0);
    let anchors: Vec<DVector<f64>> = (0..n).map(|_| DVector::from_fn(r, |_, _| StandardNormal.sample(&mut g))).collect();
    let mut worst: f64 = 0.0;
    for tau in [0.0, 0.1, 0.25, 0.5] {
        let blocks: Vec<DMatrix<f64>> = anchors.iter().map(|a| model.eval_block(tau, a, a).unwrap()).collect();
        let want = cosine_mixture(&model, tau);
        for i in 0..r {
            for j in 0..r {
                let xs: Vec<f64> = blocks.iter().map(|b| b[(i, j)]).collect();
                let (m, se) = mean_se(&xs);
                worst = worst.max((m - want[(i, j)]).abs() / se);
            }
        }
    }
    outcome(worst < 3.0, format!("10^5 anchors, tau in {{0, 0.1, 0.25, 0.5}} s, 4x4 entries: worst deviation {worst:.2} SE (< 3)"))
}

fn c5_cosine_kernel() -> Outcome {
    let (omega0, j, sigma) = (2.0 * PI * 0.9, 2, 1.3);
    let dt = 0.05;
    let ens = generate_coupled_oscillator(omega0, j, sigma, 100_000, dt, 0.5, 11).unwrap();
    let s2 = sigma * sigma;
    let mut worst: f64 = 0.0;
    for tau in [0.1, 0.25, 0.5] {
        let i = (tau / dt).round() as usize;
        let (xx, xy): (Vec<f64>, Vec<f64>) = ens
            .realizations()
            .iter()
            .map(|r| {
                let s = r.snapshots();
                (s[(0, 0)] * s[(i, 0)], s[(0, 0)] * s[(i, 1)])
            })
            .unzip();
        let w = j as f64 * omega0 * tau;
        let (m, se) = mean_se(&xx);
        worst = worst.max((m - s2 * w.cos()).abs() / se);
        let (m, se) = mean_se(&xy);
        worst = worst.max((m - s2 * w.sin()).abs() / se);
    }
    outcome(worst < 3.0, format!("10^5 realizations, x-x and x-y correlations at 3 lags: worst deviation {worst:.2} SE (< 3)"))
}

fn c6_exact_dmd() -> Outcome {
    let (mut eig_err, mut sub_err, mut circle_err) = (0.0f64, 0.0f64, 0.0f64);
    for (case, freqs) in [vec![2.2], vec![1.7, 4.3], vec![0.9, 2.6, 6.1]].into_iter().enumerate() {
        let k = freqs.len();
        let seed = case as u64;
        let re = gaussian(8, k, seed, "re");
        let im = gaussian(8, k, seed, "im");
        let modes = DMatrix::from_fn(8, k, |i, j| C64::new(re[(i, j)], im[(i, j)]));
        let eig: Vec<C64> = freqs.iter().map(|f| C64::new(0.0, 2.0 * PI * f)).collect();
        let dt = 0.01;
        let times: Vec<f64> = (0..300).map(|i| i as f64 * dt).collect();
        let std: Vec<f64> = (0..k).map(|i| 1.0 / (1.0 + i as f64)).collect();
        let (ens, truth) = generate_linear_system(&eig, &modes, &times, &std, 3, 40 + seed).unwrap();
        let fit = fit_dmd_ensemble(&ens, 2 * k).unwrap();
        for l in &fit.discrete_eigenvalues {
            circle_err = circle_err.max((l.norm() - 1.0).abs());
        }
        for (j, f) in freqs.iter().enumerate() {
            for sign in [1.0, -1.0] {
                let want = C64::new(0.0, sign * 2.0 * PI * f * dt).exp();
                let e = fit.discrete_eigenvalues.iter().map(|l| (l - want).norm()).fold(f64::INFINITY, f64::min);
                eig_err = eig_err.max(e);
            }
            let i = fit.modes.nearest(*f, 1)[0];
            sub_err = sub_err.max(grassmann_distance(&truth.real_subspace(&[j]), &fit.modes.real_subspace(&[i])).unwrap());
        }
    }
    outcome(
        eig_err < 1e-8 && sub_err < 1e-6 && circle_err < 1e-8,
        format!("3 systems with 1-3 pairs in R^8: eigenvalue error {eig_err:.1e} (< 1e-8), subspace {sub_err:.1e} (< 1e-6), |lambda| - 1 {circle_err:.1e} (< 1e-8)"),
    )
}

fn random_model(form: KernelForm, r: usize, nk: usize, noise: f64, seed: u64) -> LmcModel {
    let sigma2: Vec<f64> = (0..nk).map(|k| 0.8 + 0.3 * k as f64).collect();
    let omega: Vec<f64> = (0..nk).map(|k| 2.0 * PI * (1.3 + 0.9 * k as f64)).collect();
    let w = gaussian(r, nk * form.n_weights(), seed, "w");
    LmcModel::new(form, gaussian(r, 2 * nk, seed, "gamma"), &sigma2, &omega, w, noise).unwrap()
}

fn random_pairs(r: usize, n: usize, seed: u64) -> Vec<TrainingPair> {
    let anchors = gaussian(r, 2, seed, "anchors");
    let targets = gaussian(r, n, seed, "targets");
    (0..n)
        .map(|i| TrainingPair {
            anchor: anchors.column(i % 2).into_owned(),
            lag: 0.07 * i as f64 + 0.01 * (i % 3) as f64,
            target: targets.column(i).into_owned(),
            realization_id: i % 2,
        })
        .collect()
}

/// Covariance block written out from the kernel definitions.
fn closed_form_block(m: &LmcModel, tau: f64, ga: &DVector<f64>, gb: &DVector<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(m.dim(), m.dim());
    for k in 0..m.n_pairs() {
        let g = DMatrix::from_columns(&[m.gamma().column(2 * k), m.gamma().column(2 * k + 1)]);
        let (s, c) = (m.omega(k) * tau).sin_cos();
        let inner = match m.form() {
            KernelForm::Plain => DMatrix::identity(2, 2) * c,
            KernelForm::PhaseAware => {
                let w = m.weights().column(k);
                DMatrix::identity(2, 2) * (c * w.dot(ga) * w.dot(gb))
            }
            KernelForm::Coupled => {
                let (u, v) = (m.weights().column(2 * k), m.weights().column(2 * k + 1));
                let xa = DVector::from_vec(vec![u.dot(ga), v.dot(ga)]);
                let xb = DMatrix::from_row_slice(2, 2, &[c, -s, s, c]) * DVector::from_vec(vec![u.dot(gb), v.dot(gb)]);
                let j = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
                &xa * xb.transpose() + &j * &xa * xb.transpose() * j.transpose()
            }
        };
        out += &g * inner * g.transpose() * m.sigma2(k);
    }
    out
}

fn dense_nlml(m: &LmcModel, pairs: &[TrainingPair]) -> f64 {
    let r = m.dim();
    let n = pairs.len() * r;
    let mut k = DMatrix::zeros(n, n);
    for (a, pa) in pairs.iter().enumerate() {
        for (b, pb) in pairs.iter().enumerate() {
            k.view_mut((a * r, b * r), (r, r)).copy_from(&closed_form_block(m, pb.lag - pa.lag, &pa.anchor, &pb.anchor));
        }
    }
    k += DMatrix::identity(n, n) * m.noise_var();
    let y = DVector::from_iterator(n, pairs.iter().flat_map(|p| p.target.iter().copied()));
    let chol = k.cholesky().unwrap();
    let logdet = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    0.5 * y.dot(&chol.solve(&y)) + 0.5 * logdet + 0.5 * n as f64 * (2.0 * PI).ln()
}

fn c7_gp_numerics() -> Outcome {
    let forms = [KernelForm::Plain, KernelForm::PhaseAware, KernelForm::Coupled];
    let (mut nlml_err, mut grad_err, mut interp_err) = (0.0f64, 0.0f64, 0.0f64);
    for form in forms {
        let m = random_model(form, 3, 2, 0.05, 1);
        let pairs = random_pairs(3, 12, 2);
        let want = dense_nlml(&m, &pairs);
        nlml_err = nlml_err.max((negative_log_posterior(&m, &pairs, 0.0).unwrap() - want).abs() / want.abs().max(1.0));

        let m = random_model(form, 2, 1, 0.1, 3);
        let pairs = random_pairs(2, 5, 4);
        let (_, grad) = negative_log_posterior_grad(&m, &pairs, 0.3).unwrap();
        let p0 = m.params();
        for i in 0..p0.len() {
            let h = 1e-5 * p0[i].abs().max(1.0);
            let eval = |d: f64| {
                let mut p = p0.clone();
                p[i] += d;
                let mut mm = m.clone();
                mm.set_params(&p).unwrap();
                negative_log_posterior(&mm, &pairs, 0.3).unwrap()
            };
            let fd = (eval(h) - eval(-h)) / (2.0 * h);
            grad_err = grad_err.max((fd - grad[i]).abs() / fd.abs().max(grad[i].abs()).max(1e-3));
        }

        let clean = random_model(form, 3, 2, 0.0, 5);
        let mut pairs = random_pairs(3, 15, 6);
        let phi = clean.feature_matrix(&pairs).unwrap();
        let y = &phi * gaussian(phi.ncols(), 1, 7, "beta").column(0);
        for (p, pair) in pairs.iter_mut().enumerate() {
            pair.target = y.rows(p * 3, 3).into_owned();
        }
        let queries: Vec<_> = pairs.iter().map(|p| (p.anchor.clone(), p.lag)).collect();
        let post = predict(&clean.with_noise_var(1e-10).unwrap(), &pairs, &queries).unwrap();
        for (p, pair) in pairs.iter().enumerate() {
            interp_err = interp_err.max((post.mean.row(p).transpose() - &pair.target).amax());
        }
    }
    outcome(
        nlml_err < 1e-8 && grad_err < 1e-4 && interp_err < 1e-6,
        format!("3 kernel forms: NLML vs dense MVN {nlml_err:.1e} (< 1e-8), gradient vs central FD {grad_err:.1e} (< 1e-4), interpolation at noise 1e-10 {interp_err:.1e} (< 1e-6)"),
    )
}

/// Principal angles from projector products: singular values of `P_a P_b`
/// are the cosines, those of `P_a − P_b` the sines (each twice).
fn brute_force_distance(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let proj = |m: &DMatrix<f64>| m * (m.transpose() * m).try_inverse().unwrap() * m.transpose();
    let (pa, pb) = (proj(a), proj(b));
    let k = a.ncols();
    let mut cos: Vec<f64> = (&pa * &pb).singular_values().iter().copied().collect();
    cos.sort_by(|x, y| y.total_cmp(x));
    let mut sin: Vec<f64> = (&pa - &pb).singular_values().iter().copied().collect();
    sin.sort_by(|x, y| y.total_cmp(x));
    // sines come in pairs: keep every other one of the 2k largest, ascending
    let mut s: Vec<f64> = (0..k).map(|i| sin[2 * i]).collect();
    s.reverse();
    (0..k).map(|i| s[i].atan2(cos[i].min(1.0)).powi(2)).sum::<f64>().sqrt()
}

fn c8_metric_oracles() -> Outcome {
    let (mut brute, mut inv) = (0.0f64, 0.0f64);
    for case in 0..20u64 {
        let k = 1 + (case % 3) as usize;
        let a = gaussian(8, k, case, "a");
        let b = gaussian(8, k, case, "b");
        let d = grassmann_distance(&a, &b).unwrap();
        brute = brute.max((d - brute_force_distance(&a, &b)).abs());
        let t = DMatrix::identity(k, k) * 2.0 + gaussian(k, k, case, "t") * 0.3;
        inv = inv.max((grassmann_distance(&(&a * &t), &b).unwrap() - d).abs());
        inv = inv.max((grassmann_distance(&a, &(&b * &t)).unwrap() - d).abs());
    }
    let u = gaussian(8, 3, 99, "u");
    let self_d = grassmann_distance(&u, &u).unwrap();
    let e1 = DMatrix::from_fn(8, 1, |i, _| if i == 0 { 1.0 } else { 0.0 });
    let e2 = DMatrix::from_fn(8, 1, |i, _| if i == 1 { 1.0 } else { 0.0 });
    let right = (grassmann_distance(&e1, &e2).unwrap() - PI / 2.0).abs();
    outcome(
        brute < 1e-10 && inv < 1e-10 && self_d < 1e-12 && right < 1e-12,
        format!("vs projector brute force {brute:.1e} (< 1e-10); invertible right-multiplication {inv:.1e}; d(U,U) = {self_d:.1e}; |d(e1,e2) - pi/2| = {right:.1e}"),
    )
}

fn uniform_ensemble(blocks: Vec<DMatrix<f64>>, dt: f64) -> SnapshotEnsemble {
    let n = blocks[0].ncols();
    let reals = blocks
        .into_iter()
        .map(|b| Realization::new((0..b.nrows()).map(|i| i as f64 * dt).collect(), b).unwrap())
        .collect();
    SnapshotEnsemble::new(reals, vec![n], 1).unwrap()
}

fn c9_spod_sanity() -> Outcome {
    // rank one: Re(a_b v e^{iωt}) with ω on bin 12 and a random a_b per block
    let (n, dt, bin) = (128, 0.01, 12);
    let w = 2.0 * PI * bin as f64 / (n as f64 * dt);
    let v = gaussian(6, 2, 1, "v");
    let amp = gaussian(4, 2, 2, "amp");
    let blocks: Vec<DMatrix<f64>> = (0..4)
        .map(|b| {
            let a = C64::new(amp[(b, 0)], amp[(b, 1)]);
            DMatrix::from_fn(n, 6, |i, j| (a * C64::new(v[(j, 0)], v[(j, 1)]) * C64::new(0.0, w * i as f64 * dt).exp()).re)
        })
        .collect();
    let sp = fit_spod(&uniform_ensemble(blocks, dt), Window::Rectangular).unwrap();
    let top = sp.eigenvalues[(bin, 0)];
    let rest = sp.eigenvalues.max().max(0.0);
    let second = sp.eigenvalues.row(bin).iter().skip(1).fold(0.0f64, |a, x| a.max(*x));
    let off_bin = (0..sp.frequencies.len()).filter(|&k| k != bin).map(|k| sp.eigenvalues[(k, 0)]).fold(0.0f64, f64::max);
    let rank_one = top == rest && second <= 1e-10 * top && off_bin <= 1e-10 * top;

    let raw: Vec<DMatrix<f64>> = (0..3).map(|b| gaussian(64, 5, 20 + b, "block")).collect();
    let ens = uniform_ensemble(raw.clone(), 0.01);
    let sp = fit_spod(&ens, Window::Rectangular).unwrap();
    let spectral: f64 = sp.total_power().iter().sum::<f64>() * sp.bin_width;
    let temporal = raw.iter().map(|b| b.norm_squared()).sum::<f64>() / (3.0 * 64.0);
    let parseval = ((spectral - temporal) / temporal).abs();

    let mut herm: f64 = 0.0;
    let mut neg: f64 = 0.0;
    for window in [Window::Rectangular, Window::Hamming] {
        for s in cross_spectral_density(&ens, window).unwrap() {
            let scale = s.iter().map(|x| x.norm()).fold(f64::MIN_POSITIVE, f64::max);
            herm = herm.max((&s - s.adjoint()).iter().map(|x| x.norm()).fold(0.0, f64::max) / scale);
            neg = neg.max(-s.symmetric_eigenvalues().min() / scale);
        }
    }
    outcome(
        rank_one && parseval < 1e-6 && herm < 1e-12 && neg < 1e-10,
        format!(
            "rank-one input: second eigenvalue {:.1e} and off-bin max {:.1e} relative to the bin's {top:.3e}; Parseval {parseval:.1e} (< 1e-6); CSD Hermitian defect {herm:.1e}, most negative eigenvalue {neg:.1e}",
            second / top,
            off_bin / top
        ),
    )
}

fn cumulative(w: &[f64]) -> Vec<f64> {
    let total: f64 = w.iter().sum();
    w.iter().scan(0.0, |a, v| {
        *a += v / total;
        Some(*a)
    })
    .collect()
}

fn c10_ranking() -> Outcome {
    use BuiltinMode::*;
    let term = |r, c, a| SynthTerm {
        frequency: 0,
        real: ModeShape::builtin(r),
        imag: ModeShape::builtin(c),
        amplitude: a,
    };
    // one frequency carrying three modes, four realizations
    let spec = SynthSpec {
        frequencies: vec![2.0],
        terms: vec![term(M1r, M1c, 1.0), term(M2r, M2c, 1.19), term(M3r, M3c, 0.46)],
        n_realizations: 4,
        dt: 0.02,
        t_end: 3.0,
        ..SynthSpec::default()
    };
    let (ens, truth) = generate_synthesized_flow(&spec).unwrap();
    let basis = fit_pod(&ens, PodOptions { target: PodTarget::Rank(6), center: true }).unwrap();
    let sp = fit_spod(&ens, Window::Hamming).unwrap();
    let b = sp.nearest_bin(2.0);
    let spod_cum = cumulative(&sp.eigenvalues.row(b).iter().copied().collect::<Vec<_>>());
    let cfg = TrainConfig {
        n_pairs: 3,
        freq_init: Some(vec![2.0; 3]),
        freq_init_jitter: 0.07,
        lambda_reg: 1.0,
        seed: 1,
        ..TrainConfig::default()
    };
    let res = train(&basis.project_ensemble(&ens).unwrap(), &cfg).unwrap();
    let ranked = ranked_modes(&res.model, &basis, FrequencyTolerance::with_bin(sp.bin_width)).unwrap();
    let w = ranked.weights().to_vec();
    let cum = cumulative(&w);
    let monotone = w.windows(2).all(|p| p[0] >= p[1]) && cum.windows(2).all(|p| p[0] <= p[1]);
    let pass = monotone && cum[0] >= 0.7 && ranked.len() >= 3;
    outcome(
        pass,
        format!(
            "truth energy {}; cumulative SPOD {}; cumulative MVGPR {} (reference SPOD 0.912/0.976/0.996/1.0, reference MVGPR 0.815/0.916/0.975/1.0)",
            fmt_list(&truth.energy_fractions),
            fmt_list(&spod_cum),
            fmt_list(&cum)
        ),
    )
}

fn cli(root: &Path, args: &[&str], threads: &str) {
    let out = Command::new(env!("CARGO_BIN_EXE_modekit"))
        .current_dir(root)
        .env("MODEKIT_LOG", "error")
        .args(args)
        .args(["--threads", threads])
        .output()
        .unwrap();
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn write(root: &Path, name: &str, v: serde_json::Value) {
    fs::write(root.join(name), serde_json::to_vec_pretty(&v).unwrap()).unwrap();
}

/// Every CLI command on a small problem, in `root`.
fn pipeline(root: &Path, threads: &str) {
    let spec = SynthSpec { nx: 12, ny: 12, ..SynthSpec::default() };
    write(root, "synth.json", json!({ "schema": 1, "spec": spec }));
    cli(root, &["synth", "--config", "synth.json", "--seed", "7", "--out", "synth"], threads);
    write(root, "pod.json", json!({ "schema": 1, "dataset": "synth/dataset", "rank": 8 }));
    cli(root, &["pod", "--config", "pod.json", "--out", "pod"], threads);
    write(root, "sub.json", json!({ "schema": 1, "dataset": "pod/reduced", "fraction": 0.3 }));
    cli(root, &["subsample", "--config", "sub.json", "--seed", "2", "--out", "sub"], threads);
    write(root, "interp.json", json!({ "schema": 1, "dataset": "sub/dataset", "dt": 0.01 }));
    cli(root, &["interp", "--config", "interp.json", "--out", "interp"], threads);
    write(root, "dmd.json", json!({ "schema": 1, "dataset": "interp/dataset", "rank": 8, "basis": "pod/basis" }));
    cli(root, &["dmd", "--config", "dmd.json", "--out", "dmd"], threads);
    write(root, "spod.json", json!({ "schema": 1, "dataset": "interp/dataset", "window": "hamming", "basis": "pod/basis" }));
    cli(root, &["spod", "--config", "spod.json", "--out", "spod"], threads);
    let train = json!({ "n_pairs": 4, "freq_init": [3.1, 3.1, 5.2, 5.2], "freq_init_jitter": 0.07, "max_iters": 300 });
    write(root, "train.json", json!({ "schema": 1, "dataset": "sub/dataset", "basis": "pod/basis", "train": train }));
    cli(root, &["mvgpr-train", "--config", "train.json", "--seed", "5", "--out", "mvgpr"], threads);
    write(root, "predict.json", json!({ "schema": 1, "model": "mvgpr", "anchors": "pod/reduced" }));
    cli(root, &["predict", "--config", "predict.json", "--out", "predict"], threads);
    for (name, cand) in [("cmp_dmd", "dmd/modes"), ("cmp_spod", "spod/modes"), ("cmp_mvgpr", "mvgpr/modes")] {
        let cfg = format!("{name}.json");
        write(root, &cfg, json!({ "schema": 1, "reference": "synth/truth_modes", "candidate": cand, "bin_width": 1.0 / 3.01 }));
        cli(root, &["compare", "--config", &cfg, "--out", name], threads);
    }
    let sweep = json!({
        "dataset": "synth/dataset", "truth": "synth/truth_modes", "fractions": [0.4], "n_seeds": 2,
        "methods": ["dmd", "spod", "mvgpr"], "pod_rank": 8, "mvgpr": train,
    });
    write(root, "sweep.json", json!({ "schema": 1, "sweep": sweep, "bin_width": 1.0 / 3.01 }));
    cli(root, &["compare", "--config", "sweep.json", "--seed", "1", "--out", "sweep"], threads);
    fs::write(root.join("m.csv"), "1,2,3\n4,5,6\n7,8,9\n10,11,12\n").unwrap();
    write(root, "import.json", json!({ "schema": 1, "input": "m.csv", "format": "matrix-csv", "dt": 0.5, "snapshots_per_realization": 2 }));
    cli(root, &["import", "--config", "import.json", "--out", "import"], threads);
}

fn all_files(root: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

fn c11_determinism() -> Outcome {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    pipeline(a.path(), "1");
    pipeline(b.path(), "4");
    let (fa, fb) = (all_files(a.path()), all_files(b.path()));
    let differing: Vec<String> = fa
        .iter()
        .filter(|p| fs::read(a.path().join(p)).ok() != fs::read(b.path().join(p)).ok())
        .map(|p| p.display().to_string())
        .collect();
    let pass = fa == fb && differing.is_empty();
    outcome(
        pass,
        format!(
            "synth, import, pod, subsample, interp, dmd, spod, mvgpr-train, predict, compare (pairs and sweep) run twice (--threads 1 and 4): {} files, {} differ {:?}",
            fa.len(),
            differing.len(),
            differing
        ),
    )
}

fn panic_message(e: Box<dyn std::any::Any + Send>) -> String {
    e.downcast_ref::<String>()
        .cloned()
        .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
        .unwrap_or_else(|| "panicked".into())
}

fn main() {
    let criteria: [(u32, &str, fn() -> Outcome); 11] = [
        (1, "frequency recovery, full data", c1_frequency_recovery),
        (2, "subspace equivalence", c2_subspace_equivalence),
        (3, "irregular-sampling superiority", c3_irregular_sampling),
        (4, "kernel stochastic average", c4_kernel_average),
        (5, "cosine kernel from the oscillator", c5_cosine_kernel),
        (6, "exact DMD on linear systems", c6_exact_dmd),
        (7, "GP numerics", c7_gp_numerics),
        (8, "metric oracles", c8_metric_oracles),
        (9, "SPOD sanity", c9_spod_sanity),
        (10, "multi-mode ranking", c10_ranking),
        (11, "CLI determinism", c11_determinism),
    ];
    let only: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = Vec::new();
    for (n, name, f) in criteria {
        if !only.is_empty() && !only.contains(&n) {
            continue;
        }
        let t = Instant::now();
        let o = std::panic::catch_unwind(f).unwrap_or_else(|e| outcome(false, format!("panicked: {}", panic_message(e))));
        let status = if o.pass { "PASS" } else { "FAIL" };
        println!("criterion {n:>2} {status} {name}: {} [{:.1} s]", o.detail, t.elapsed().as_secs_f64());
        if !o.pass {
            failed.push(n);
        }
    }
    if !failed.is_empty() {
        println!("acceptance: criteria {failed:?} failed");
        std::process::exit(1);
    }
    println!("acceptance: all criteria passed");
}

