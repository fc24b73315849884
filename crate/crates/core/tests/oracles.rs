use std::f64::consts::PI;

use modekit::data::{extract_training_pairs, Realization, SnapshotEnsemble};
use modekit::dmd::fit_dmd_ensemble;
use modekit::kernels::{KernelForm, LmcModel};
use modekit::linalg::C64;
use modekit::metrics::{compare_modes, grassmann_distance, FrequencyTolerance};
use modekit::pod::{fit_pod, PodOptions, PodTarget};
use modekit::rng;
use modekit::spod::{fit_spod, Window};
use modekit::synth::{
    generate_coupled_oscillator, generate_linear_system, generate_synthesized_flow, retained_count,
    subsample_irregular, interpolate_cubic_uniform, SynthSpec,
};
use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};

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

#[test]
fn oscillator_statistics_give_cosine_and_sine_kernels() {
    let (omega0, j, sigma) = (2.0 * PI * 0.9, 2, 1.3);
    let dt = 0.05;
    let ens = generate_coupled_oscillator(omega0, j, sigma, 100_000, dt, 0.5, 11).unwrap();
    let s2 = sigma * sigma;
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
        assert!((m - s2 * w.cos()).abs() < 3.0 * se, "tau {tau}: cos {m} vs {}", s2 * w.cos());
        let (m, se) = mean_se(&xy);
        assert!((m - s2 * w.sin()).abs() < 3.0 * se, "tau {tau}: sin {m} vs {}", s2 * w.sin());
    }
}

fn expected_lmc(model: &LmcModel, tau: f64) -> DMatrix<f64> {
    let r = model.dim();
    let mut c = DMatrix::zeros(r, r);
    for k in 0..model.n_pairs() {
        let a = model.gamma().column(2 * k);
        let b = model.gamma().column(2 * k + 1);
        let s = model.sigma2(k) * (model.omega(k) * tau).cos();
        c += (a * a.transpose() + b * b.transpose()) * s;
    }
    c
}

#[test]
fn lmc_stochastic_average_matches_cosine_mixture() {
    let r = 4;
    let gamma = gaussian(r, 4, 1, "gamma") * 0.5;
    let mut w = gaussian(r, 2, 2, "w");
    for mut c in w.column_iter_mut() {
        c.normalize_mut();
    }
    let model = LmcModel::new(KernelForm::PhaseAware, gamma, &[1.5, 0.7], &[2.0 * PI * 1.1, 2.0 * PI * 2.9], w, 0.0).unwrap();
    let n = 100_000;
    let mut g = rng::stream(3, "anchors", 0);
    let anchors: Vec<DVector<f64>> = (0..n).map(|_| DVector::from_fn(r, |_, _| StandardNormal.sample(&mut g))).collect();
    for tau in [0.0, 0.1, 0.25, 0.5] {
        let blocks: Vec<DMatrix<f64>> = anchors.iter().map(|a| model.eval_block(tau, a, a).unwrap()).collect();
        let want = expected_lmc(&model, tau);
        for i in 0..r {
            for jj in 0..r {
                let xs: Vec<f64> = blocks.iter().map(|b| b[(i, jj)]).collect();
                let (m, se) = mean_se(&xs);
                assert!((m - want[(i, jj)]).abs() < 3.0 * se, "tau {tau} ({i},{jj}): {m} vs {}", want[(i, jj)]);
            }
        }
    }
}

#[test]
fn plain_lmc_is_the_cosine_mixture() {
    let gamma = gaussian(3, 4, 5, "gamma");
    let model = LmcModel::new(KernelForm::Plain, gamma, &[0.4, 2.0], &[3.0, 7.5], DMatrix::zeros(3, 0), 0.0).unwrap();
    let g = DVector::from_element(3, 0.3);
    for tau in [0.0, 0.2, -0.7, 1.9] {
        let d = model.eval_block(tau, &g, &g).unwrap() - expected_lmc(&model, tau);
        assert!(d.amax() < 1e-12);
    }
}

fn random_modes(n: usize, k: usize, seed: u64) -> DMatrix<C64> {
    let re = gaussian(n, k, seed, "re");
    let im = gaussian(n, k, seed, "im");
    DMatrix::from_fn(n, k, |i, j| C64::new(re[(i, j)], im[(i, j)]))
}

#[test]
fn dmd_recovers_constructed_linear_system() {
    let omegas = [2.0 * PI * 1.7, 2.0 * PI * 4.3];
    let eig: Vec<C64> = omegas.iter().map(|w| C64::new(0.0, *w)).collect();
    let modes = random_modes(6, 2, 4);
    let dt = 0.01;
    let times: Vec<f64> = (0..200).map(|i| i as f64 * dt).collect();
    let (ens, truth) = generate_linear_system(&eig, &modes, &times, &[1.0, 0.6], 3, 9).unwrap();
    let fit = fit_dmd_ensemble(&ens, 4).unwrap();
    assert_eq!(fit.discrete_eigenvalues.len(), 4);
    for l in &fit.discrete_eigenvalues {
        assert!((l.norm() - 1.0).abs() < 1e-8, "|λ| = {}", l.norm());
    }
    for w in omegas {
        for sign in [1.0, -1.0] {
            let want = C64::new(0.0, sign * w * dt).exp();
            let err = fit.discrete_eigenvalues.iter().map(|l| (l - want).norm()).fold(f64::INFINITY, f64::min);
            assert!(err < 1e-8, "eigenvalue error {err}");
        }
    }
    for (k, w) in omegas.iter().enumerate() {
        let j = fit.modes.nearest(w / (2.0 * PI), 1)[0];
        assert!((2.0 * PI * fit.modes.frequencies()[j] - w).abs() < 1e-8);
        assert!(fit.modes.growth_rates()[j].abs() < 1e-8);
        let d = grassmann_distance(&truth.real_subspace(&[k]), &fit.modes.real_subspace(&[j])).unwrap();
        assert!(d < 1e-6, "mode {k}: {d}");
    }
}

#[test]
fn dmd_needs_the_ensemble_for_two_modes_per_frequency() {
    let tol = FrequencyTolerance::with_bin(1.0 / 3.01);
    let single = SynthSpec {
        n_realizations: 1,
        ..SynthSpec::default()
    };
    let (ens, truth) = generate_synthesized_flow(&single).unwrap();
    let basis = fit_pod(&ens, PodOptions { target: PodTarget::Rank(4), center: true }).unwrap();
    let fit = fit_dmd_ensemble(&basis.project_ensemble(&ens).unwrap(), 4).unwrap();
    let rep = compare_modes(&truth.modes, &basis.lift_modes(&fit.modes).unwrap(), tol).unwrap();
    for (f, d) in &rep.grassmann_per_frequency {
        assert!(*d > 0.5, "{f} Hz: {d}");
    }

    let (ens, truth) = generate_synthesized_flow(&SynthSpec::default()).unwrap();
    let basis = fit_pod(&ens, PodOptions { target: PodTarget::Rank(8), center: true }).unwrap();
    let fit = fit_dmd_ensemble(&basis.project_ensemble(&ens).unwrap(), 8).unwrap();
    assert_eq!(fit.discrete_eigenvalues.len(), 8);
    assert_eq!(fit.modes.len(), 4);
    let rep = compare_modes(&truth.modes, &basis.lift_modes(&fit.modes).unwrap(), tol).unwrap();
    for (f, d) in &rep.grassmann_per_frequency {
        assert!(*d < 1e-3, "{f} Hz: {d}");
    }
    for f in fit.modes.frequencies() {
        let near = [3.1, 5.2].iter().map(|t| ((f - t) / t).abs()).fold(f64::INFINITY, f64::min);
        assert!(near < 1e-3, "{f}");
    }
}

#[test]
fn pod_rank_and_energy_target_follow_the_singular_values() {
    let (ens, _) = generate_synthesized_flow(&SynthSpec::default()).unwrap();
    let mut x = ens.stacked();
    let mean = x.row_mean();
    for mut row in x.row_iter_mut() {
        row -= &mean;
    }
    let sv = x.singular_values();
    let mut e: Vec<f64> = sv.iter().map(|s| s * s).collect();
    e.sort_by(|a, b| b.total_cmp(a));
    let total: f64 = e.iter().sum();
    assert!(e[7] / total > 1e-6);
    assert!(e[8..].iter().sum::<f64>() / total < 1e-20);
    let mut acc = 0.0;
    let want = e.iter().position(|v| {
        acc += v;
        acc >= 0.99 * total
    }).unwrap() + 1;
    let basis = fit_pod(&ens, PodOptions::default()).unwrap();
    assert_eq!(basis.rank(), want);
    for (a, b) in basis.singular_values.iter().zip(&e) {
        assert!((a * a - b).abs() <= 1e-9 * b);
    }
}

fn uniform_ensemble(blocks: Vec<DMatrix<f64>>, dt: f64) -> SnapshotEnsemble {
    let n = blocks[0].ncols();
    let reals = blocks
        .into_iter()
        .map(|b| Realization::new((0..b.nrows()).map(|i| i as f64 * dt).collect(), b).unwrap())
        .collect();
    SnapshotEnsemble::new(reals, vec![n], 1).unwrap()
}

#[test]
fn spod_parseval_with_rectangular_window() {
    let blocks: Vec<DMatrix<f64>> = (0..3).map(|b| gaussian(64, 5, 20 + b, "block")).collect();
    let ens = uniform_ensemble(blocks.clone(), 0.01);
    let sp = fit_spod(&ens, Window::Rectangular).unwrap();
    let spectral: f64 = sp.total_power().iter().sum::<f64>() * sp.bin_width;
    let temporal = blocks.iter().map(|b| b.norm_squared()).sum::<f64>() / (3.0 * 64.0);
    assert!(((spectral - temporal) / temporal).abs() < 1e-6, "{spectral} vs {temporal}");
}

#[test]
fn spod_bins_follow_span_and_length() {
    let spec = SynthSpec {
        t_end: 10.0,
        nx: 8,
        ny: 8,
        ..SynthSpec::default()
    };
    let (ens, _) = generate_synthesized_flow(&spec).unwrap();
    let sp = fit_spod(&ens, Window::Hamming).unwrap();
    let power = sp.total_power();
    for f in [3.1, 5.2] {
        let k = sp.nearest_bin(f);
        assert!((sp.frequencies[k] - f).abs() <= 0.5 * sp.bin_width + 1e-12);
        assert!(power[k] > power[k - 3] && power[k] > power[k + 3]);
    }

    let ens = uniform_ensemble(vec![gaussian(300, 2, 7, "x")], 0.01);
    let sp = fit_spod(&ens, Window::Rectangular).unwrap();
    assert!((sp.frequencies[sp.nearest_bin(3.0)] - 3.0).abs() < 1e-12);
}

#[test]
fn spod_subspace_of_linear_system() {
    let w = 2.0 * PI * 2.5;
    let modes = random_modes(5, 2, 8);
    // two modes sharing one frequency
    let eig = [C64::new(0.0, w), C64::new(0.0, w)];
    let dt = 0.02;
    let times: Vec<f64> = (0..200).map(|i| i as f64 * dt).collect();
    let (ens, truth) = generate_linear_system(&eig, &modes, &times, &[1.0, 0.5], 40, 3).unwrap();
    let sp = fit_spod(&ens, Window::Rectangular).unwrap();
    let m = sp.mode_subspace(2.5, 2).unwrap();
    let spod = modekit::linalg::complex_to_real_pairs(&m);
    let d = grassmann_distance(&truth.real_subspace(&[0, 1]), &spod).unwrap();
    assert!(d < 1e-2, "{d}");
}

#[test]
fn pair_and_subsample_counts() {
    let times: Vec<f64> = (0..121).map(|i| i as f64 * 0.025).collect();
    let reals = (0..5)
        .map(|_| Realization::new(times.clone(), DMatrix::from_element(121, 2, 1.0)).unwrap())
        .collect();
    let ens = SnapshotEnsemble::new(reals, vec![2], 1).unwrap();
    assert_eq!(extract_training_pairs(&ens, 3.0, usize::MAX).unwrap().len(), 5 * 121);
    assert_eq!(extract_training_pairs(&ens, 3.0, 30).unwrap().len(), 150);

    assert_eq!(retained_count(151, 0.24), 36);
    let times: Vec<f64> = (0..151).map(|i| i as f64 * 0.02).collect();
    let r = Realization::new(times, DMatrix::from_fn(151, 1, |i, _| i as f64)).unwrap();
    let ens = SnapshotEnsemble::new(vec![r], vec![1], 1).unwrap();
    let sub = subsample_irregular(&ens, 0.24, 5).unwrap();
    assert_eq!(sub.realizations()[0].len(), 36);
}

#[test]
fn spline_on_irregular_sine() {
    let f = 3.1;
    let times: Vec<f64> = (0..91).map(|i| i as f64 / 30.0).collect();
    let x = DMatrix::from_fn(91, 1, |i, _| (2.0 * PI * f * times[i]).sin());
    let ens = SnapshotEnsemble::new(vec![Realization::new(times, x).unwrap()], vec![1], 1).unwrap();
    let sub = subsample_irregular(&ens, 0.3, 2).unwrap();
    let r = &sub.realizations()[0];
    let out = interpolate_cubic_uniform(r, 1.0 / 30.0).unwrap();
    let t_last = r.times()[r.len() - 1];
    let mut worst: f64 = 0.0;
    for (i, t) in out.times().iter().enumerate() {
        if *t <= t_last {
            worst = worst.max((out.snapshots()[(i, 0)] - (2.0 * PI * f * t).sin()).abs());
        }
    }
    // about 2.8 samples per period survive; the error is reported, the
    // bound only rules out a broken interpolant
    println!("max spline error at 30% of 30 Hz: {worst:.3}");
    assert!(worst.is_finite() && worst < 2.0);
}
