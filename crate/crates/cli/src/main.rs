//! `modekit` command-line pipelines. Every command reads a JSON config
//! (`"schema": 1`), writes its artifacts under `--out`, and records a
//! `run.json` with input hashes and the config echo.

mod config;
mod hash;
mod log;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nalgebra::DVector;
use serde_json::{json, Value};

use modekit::data::{Realization, SnapshotEnsemble};
use modekit::experiment::{run_cell, SweepOptions};
use modekit::io::{self, fmt_f64};
use modekit::kernels::LmcModel;
use modekit::metrics::{self, FrequencyTolerance, SweepRow};
use modekit::modes::ModeSet;
use modekit::pod::{fit_pod, PodBasis, PodOptions, PodTarget};
use modekit::{dmd, mvgpr, spod, synth, Error};

use config::*;
use log::Logger;

#[derive(Parser)]
#[command(name = "modekit", version, about = "Modal analysis of snapshot ensembles: POD, DMD, SPOD and MVGPR")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON config; relative paths inside it resolve against its directory.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the seed in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (created if missing).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Accepted for interface compatibility; computation is single-threaded.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Clone, Copy, Debug)]
enum Command {
    /// Generate the synthetic flow ensemble and its ground truth.
    Synth,
    /// Import a snapshot matrix (`format: matrix-csv`).
    Import,
    /// Fit a POD basis and project the dataset onto it.
    Pod,
    /// Keep a random fraction of each realization's snapshots.
    Subsample,
    /// Cubic-spline resampling onto a uniform grid.
    Interp,
    /// Exact DMD over all realizations of a uniformly sampled dataset.
    Dmd,
    /// Spectral POD, one block per realization.
    Spod,
    /// Train the MVGPR model and extract its modes.
    #[command(name = "mvgpr-train")]
    MvgprTrain,
    /// Posterior mean and variance from a trained model.
    Predict,
    /// Compare two mode sets, or run a retention sweep.
    Compare,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Synth => "synth",
            Command::Import => "import",
            Command::Pod => "pod",
            Command::Subsample => "subsample",
            Command::Interp => "interp",
            Command::Dmd => "dmd",
            Command::Spod => "spod",
            Command::MvgprTrain => "mvgpr-train",
            Command::Predict => "predict",
            Command::Compare => "compare",
        }
    }
}

/// Inputs recorded in run.json: config name, path as written, resolved path.
struct Run {
    out: PathBuf,
    inputs: Vec<(String, String, PathBuf)>,
    summary: Value,
}

impl Run {
    fn input(&mut self, name: &str, written: &str, base: &Path) -> PathBuf {
        let p = base.join(written);
        self.inputs.push((name.to_string(), written.to_string(), p.clone()));
        p
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let logger = Logger::from_env();
    let cmd = cli.command;
    logger.info("start", json!({ "command": cmd.name() }));
    match execute(&cli, &logger) {
        Ok(()) => {
            logger.info("done", json!({ "command": cmd.name() }));
            ExitCode::SUCCESS
        }
        Err(e) => {
            let (kind, code) = classify(&e);
            logger.error(json!({ "command": cmd.name(), "kind": kind, "message": e.to_string() }));
            ExitCode::from(code)
        }
    }
}

fn classify(e: &Error) -> (&'static str, u8) {
    match e {
        Error::InvalidInput(_) => ("invalid_input", 1),
        Error::Parse { .. } => ("parse", 1),
        Error::Io { .. } => ("io", 1),
        Error::Numerical(_) => ("numerical", 2),
        Error::Training { .. } => ("training", 2),
        Error::Alignment { .. } => ("alignment", 2),
    }
}

fn execute(cli: &Cli, logger: &Logger) -> modekit::Result<()> {
    let out = cli
        .out
        .clone()
        .ok_or_else(|| Error::InvalidInput("--out <dir> is required".into()))?;
    if cli.threads == Some(0) {
        return Err(Error::InvalidInput("--threads must be positive".into()));
    }
    let loaded = match &cli.config {
        Some(p) => Some(load_config(p)?),
        None => None,
    };
    let base = cli
        .config
        .as_ref()
        .and_then(|p| p.parent().map(Path::to_path_buf))
        .unwrap_or_default();
    std::fs::create_dir_all(&out).map_err(|e| Error::Io { path: out.clone(), source: e })?;
    let mut run = Run {
        out: out.clone(),
        inputs: Vec::new(),
        summary: Value::Null,
    };
    let raw = loaded.as_ref().map(|(v, _)| v.clone()).unwrap_or(Value::Null);
    let cfg_path = cli.config.clone().unwrap_or_default();
    let need = || -> modekit::Result<Value> {
        raw.as_object()
            .map(|_| raw.clone())
            .ok_or_else(|| Error::InvalidInput("--config <file> is required for this command".into()))
    };
    match cli.command {
        Command::Synth => {
            let c: SynthConfig = if raw.is_null() { SynthConfig::default() } else { parse(&cfg_path, &raw)? };
            cmd_synth(c, cli.seed, &mut run)?
        }
        Command::Import => cmd_import(parse(&cfg_path, &need()?)?, &base, &mut run)?,
        Command::Pod => cmd_pod(parse(&cfg_path, &need()?)?, &base, &mut run)?,
        Command::Subsample => cmd_subsample(parse(&cfg_path, &need()?)?, cli.seed, &base, &mut run)?,
        Command::Interp => cmd_interp(parse(&cfg_path, &need()?)?, &base, &mut run)?,
        Command::Dmd => cmd_dmd(parse(&cfg_path, &need()?)?, &base, &mut run)?,
        Command::Spod => cmd_spod(parse(&cfg_path, &need()?)?, &base, &mut run)?,
        Command::MvgprTrain => cmd_mvgpr(parse(&cfg_path, &need()?)?, cli.seed, &base, &mut run, logger)?,
        Command::Predict => cmd_predict(parse(&cfg_path, &need()?)?, &base, &mut run)?,
        Command::Compare => cmd_compare(parse(&cfg_path, &need()?)?, cli.seed, &base, &mut run, logger)?,
    }
    write_run_json(cli, &raw, &run)
}

fn write_run_json(cli: &Cli, raw: &Value, run: &Run) -> modekit::Result<()> {
    let mut inputs = Vec::new();
    for (name, written, path) in &run.inputs {
        inputs.push(json!({ "name": name, "path": written, "sha256": hash::path_digest(path)? }));
    }
    let record = json!({
        "schema": SCHEMA,
        "command": cli.command.name(),
        "seed": cli.seed,
        "config": raw,
        "inputs": inputs,
        "outputs": hash::tree_digests(&run.out, &["run.json"])?,
        "summary": run.summary,
        "versions": { "modekit": env!("CARGO_PKG_VERSION"), "dtype": io::DTYPE, "endianness": io::ENDIANNESS },
    });
    io::write_json(&run.out.join("run.json"), &record)
}

fn cmd_synth(c: SynthConfig, seed: Option<u64>, run: &mut Run) -> modekit::Result<()> {
    let mut spec = c.spec;
    if let Some(s) = seed {
        spec.seed = s;
    }
    let (ens, truth) = synth::generate_synthesized_flow(&spec)?;
    io::write_dataset(&run.out.join("dataset"), &ens)?;
    truth.modes.write(&run.out.join("truth_modes"))?;
    let phases: Vec<Vec<f64>> = truth.phases.row_iter().map(|r| r.iter().copied().collect()).collect();
    io::write_json(
        &run.out.join("truth.json"),
        &json!({
            "frequencies": spec.frequencies,
            "term_frequencies": truth.modes.frequencies(),
            "energy_fractions": truth.energy_fractions,
            "phases": phases,
            "spec": spec,
        }),
    )?;
    run.summary = json!({ "realizations": ens.realizations().len(), "n_space": ens.n_space() });
    Ok(())
}

fn cmd_import(c: ImportConfig, base: &Path, run: &mut Run) -> modekit::Result<()> {
    if c.format != "matrix-csv" {
        return Err(Error::InvalidInput(format!("unknown import format {:?}; supported: matrix-csv", c.format)));
    }
    if !(c.dt > 0.0) {
        return Err(Error::InvalidInput("dt must be positive".into()));
    }
    let path = run.input("input", &c.input, base);
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(c.has_header)
        .trim(csv::Trim::All)
        .from_path(&path)
        .map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| csv_error(&path, e))?;
        let row = rec
            .iter()
            .map(|v| v.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Parse {
                path: path.clone(),
                offset: rec.position().map_or(0, |p| p.byte()),
                message: format!("row {}: {e}", i + 1),
            })?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::InvalidInput(format!("{} holds no snapshots", path.display())));
    }
    let n_space = rows[0].len();
    let per = c.snapshots_per_realization.unwrap_or(rows.len());
    if per < 2 || rows.len() % per != 0 {
        return Err(Error::InvalidInput(format!(
            "{} snapshots cannot be split into realizations of {per}",
            rows.len()
        )));
    }
    let reals = rows
        .chunks(per)
        .map(|chunk| {
            let m = nalgebra::DMatrix::from_fn(chunk.len(), n_space, |i, j| chunk[i][j]);
            Realization::new((0..chunk.len()).map(|k| k as f64 * c.dt).collect(), m)
        })
        .collect::<modekit::Result<Vec<_>>>()?;
    let shape = c.spatial_shape.unwrap_or_else(|| vec![n_space / c.field_dim.max(1)]);
    let ens = SnapshotEnsemble::new(reals, shape, c.field_dim)?;
    io::write_dataset(&run.out.join("dataset"), &ens)?;
    run.summary = json!({ "realizations": ens.realizations().len(), "n_space": n_space });
    Ok(())
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let offset = e.position().map_or(0, |p| p.byte());
    Error::Parse {
        path: path.to_path_buf(),
        offset,
        message: e.to_string(),
    }
}

fn cmd_pod(c: PodConfig, base: &Path, run: &mut Run) -> modekit::Result<()> {
    let ens = io::read_dataset(&run.input("dataset", &c.dataset, base))?;
    let target = match (c.rank, c.energy_target) {
        (Some(_), Some(_)) => return Err(Error::InvalidInput("give rank or energy_target, not both".into())),
        (Some(r), None) => PodTarget::Rank(r),
        (None, Some(e)) => PodTarget::Energy(e),
        (None, None) => PodTarget::default(),
    };
    let basis = fit_pod(&ens, PodOptions { target, center: c.center })?;
    basis.write(&run.out.join("basis"))?;
    io::write_dataset(&run.out.join("reduced"), &basis.project_ensemble(&ens)?)?;
    let mut acc = 0.0;
    let rows: Vec<Vec<String>> = basis
        .singular_values
        .iter()
        .enumerate()
        .map(|(i, s)| {
            acc += s * s / basis.total_energy;
            vec![(i + 1).to_string(), fmt_f64(*s), fmt_f64(acc)]
        })
        .collect();
    io::write_csv(&run.out.join("singular_values.csv"), &["index", "singular_value", "cumulative_energy"], &rows)?;
    run.summary = json!({ "rank": basis.rank(), "energy_fraction": basis.energy_fraction() });
    Ok(())
}

fn cmd_subsample(c: SubsampleConfig, seed: Option<u64>, base: &Path, run: &mut Run) -> modekit::Result<()> {
    let ens = io::read_dataset(&run.input("dataset", &c.dataset, base))?;
    let sub = synth::subsample_irregular(&ens, c.fraction, seed.unwrap_or(0))?;
    io::write_dataset(&run.out.join("dataset"), &sub)?;
    run.summary = json!({ "snapshots": sub.total_snapshots() });
    Ok(())
}

fn cmd_interp(c: InterpConfig, base: &Path, run: &mut Run) -> modekit::Result<()> {
    let ens = io::read_dataset(&run.input("dataset", &c.dataset, base))?;
    let uni = synth::interpolate_ensemble_uniform(&ens, c.dt)?;
    io::write_dataset(&run.out.join("dataset"), &uni)?;
    run.summary = json!({ "snapshots": uni.total_snapshots() });
    Ok(())
}

fn read_basis(run: &mut Run, written: &Option<String>, base: &Path) -> modekit::Result<Option<PodBasis>> {
    match written {
        Some(b) => Ok(Some(PodBasis::read(&run.input("basis", b, base))?)),
        None => Ok(None),
    }
}

fn lift(basis: &Option<PodBasis>, set: &ModeSet) -> modekit::Result<ModeSet> {
    match basis {
        Some(b) => b.lift_modes(set),
        None => Ok(set.clone()),
    }
}

fn cmd_dmd(c: DmdConfig, base: &Path, run: &mut Run) -> modekit::Result<()> {
    let ens = io::read_dataset(&run.input("dataset", &c.dataset, base))?;
    let basis = read_basis(run, &c.basis, base)?;
    let rank = c.rank.unwrap_or(ens.n_space());
    let fit = dmd::fit_dmd_ensemble(&ens, rank)?;
    let modes = lift(&basis, &fit.modes)?;
    modes.write(&run.out.join("modes"))?;
    let rows: Vec<Vec<String>> = (0..modes.len())
        .map(|i| {
            vec![
                i.to_string(),
                fmt_f64(modes.frequencies()[i]),
                fmt_f64(modes.growth_rates()[i]),
                fmt_f64(modes.weights().get(i).copied().unwrap_or(f64::NAN)),
            ]
        })
        .collect();
    io::write_csv(&run.out.join("spectrum.csv"), &["mode", "frequency_hz", "growth_rate", "weight"], &rows)?;
    let evs: Vec<Vec<String>> = fit
        .discrete_eigenvalues
        .iter()
        .map(|l| vec![fmt_f64(l.re), fmt_f64(l.im)])
        .collect();
    io::write_csv(&run.out.join("discrete_eigenvalues.csv"), &["re", "im"], &evs)?;
    run.summary = json!({ "rank": fit.rank, "frequencies": modes.frequencies(), "notes": modes.notes });
    Ok(())
}

fn cmd_spod(c: SpodConfig, base: &Path, run: &mut Run) -> modekit::Result<()> {
    let ens = io::read_dataset(&run.input("dataset", &c.dataset, base))?;
    let basis = read_basis(run, &c.basis, base)?;
    let res = spod::fit_spod(&ens, c.window)?;
    res.write(&run.out.join("spod"))?;
    let modes = lift(&basis, &res.mode_set(res.n_modes())?)?;
    modes.write(&run.out.join("modes"))?;
    let lead: Vec<f64> = res.eigenvalues.column(0).iter().copied().collect();
    let peak = (1..lead.len()).max_by(|&a, &b| lead[a].total_cmp(&lead[b])).unwrap_or(0);
    run.summary = json!({
        "bins": res.frequencies.len(),
        "bin_width": res.bin_width,
        "blocks": res.n_blocks,
        "peak_frequency": res.frequencies[peak],
    });
    Ok(())
}

fn cmd_mvgpr(c: MvgprConfig, seed: Option<u64>, base: &Path, run: &mut Run, logger: &Logger) -> modekit::Result<()> {
    let ens = io::read_dataset(&run.input("dataset", &c.dataset, base))?;
    let basis = read_basis(run, &c.basis, base)?;
    let mut cfg = c.train;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let res = mvgpr::train(&ens, &cfg)?;
    logger.debug("trained", json!({ "iterations": res.trace.len(), "converged": res.converged }));
    let model = &res.model;
    model.write(&run.out.join("model"))?;
    io::write_training_pairs(&run.out.join("pairs"), &res.pairs)?;
    mvgpr::write_loss_trace(&run.out.join("loss_trace.csv"), &res.trace)?;
    let modes = match &basis {
        Some(b) => mvgpr::extract_modes(model, b)?,
        None => mvgpr::model_modes(model)?,
    };
    modes.write(&run.out.join("modes"))?;
    if let Some(b) = &basis {
        let tol = FrequencyTolerance { rel: c.group_rel_tol, half_bin: 0.0 };
        mvgpr::ranked_modes(model, b, tol)?.write(&run.out.join("ranked_modes"))?;
    }
    let rows: Vec<Vec<String>> = model
        .implied_spectral_density()
        .iter()
        .zip(model.ranking_weights())
        .enumerate()
        .map(|(k, (e, w))| vec![k.to_string(), fmt_f64(e.frequency), fmt_f64(e.weight), fmt_f64(w), e.prunable.to_string()])
        .collect();
    io::write_csv(
        &run.out.join("spectrum.csv"),
        &["pair", "frequency_hz", "spectral_weight", "ranking_weight", "prunable"],
        &rows,
    )?;
    run.summary = json!({
        "frequencies": (0..model.n_pairs()).map(|k| model.frequency_hz(k)).collect::<Vec<_>>(),
        "initial_frequencies": res.initial_frequencies,
        "noise_var": model.noise_var(),
        "final_loss": res.trace.last().map(|t| t.loss),
        "iterations": res.trace.len(),
        "converged": res.converged,
    });
    Ok(())
}

fn cmd_predict(c: PredictConfig, base: &Path, run: &mut Run) -> modekit::Result<()> {
    let model_dir = run.input("model", &c.model, base);
    let model = LmcModel::read(&model_dir.join("model"))?;
    let pairs = io::read_training_pairs(&model_dir.join("pairs"))?;
    let anchors = io::read_dataset(&run.input("anchors", &c.anchors, base))?;
    let gp = mvgpr::FittedGp::new(&model, &pairs)?;
    let r = model.dim();
    let mut header: Vec<String> = vec!["realization".into(), "lag".into()];
    header.extend((0..r).map(|i| format!("mean_{i}")));
    header.extend((0..r).map(|i| format!("var_{i}")));
    let mut rows = Vec::new();
    let mut scores = Vec::new();
    for (k, real) in anchors.realizations().iter().enumerate() {
        let anchor: DVector<f64> = real.snapshot(0);
        let t0 = real.times()[0];
        let lags: Vec<f64> = match &c.lags {
            Some(l) => l.clone(),
            None => real.times().iter().map(|t| t - t0).collect(),
        };
        let queries: Vec<(DVector<f64>, f64)> = lags.iter().map(|&l| (anchor.clone(), l)).collect();
        let post = gp.predict(&queries)?;
        for (q, lag) in lags.iter().enumerate() {
            let mut row = vec![k.to_string(), fmt_f64(*lag)];
            row.extend(post.mean.row(q).iter().map(|v| fmt_f64(*v)));
            row.extend(post.variance.row(q).iter().map(|v| fmt_f64(*v)));
            rows.push(row);
        }
        if c.lags.is_none() {
            scores.push(metrics::nrmse(real.snapshots(), &post.mean)?);
        }
    }
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    io::write_csv(&run.out.join("prediction.csv"), &header, &rows)?;
    run.summary = json!({ "nrmse_percent": scores });
    Ok(())
}

fn cmd_compare(c: CompareConfig, seed: Option<u64>, base: &Path, run: &mut Run, logger: &Logger) -> modekit::Result<()> {
    match (c.reference, c.candidate, c.sweep) {
        (Some(a), Some(b), None) => {
            let reference = ModeSet::read(&run.input("reference", &a, base))?;
            let candidate = ModeSet::read(&run.input("candidate", &b, base))?;
            let tol = FrequencyTolerance { rel: c.rel_tol, half_bin: 0.5 * c.bin_width.unwrap_or(0.0) };
            let rep = metrics::compare_modes(&reference, &candidate, tol)?;
            let rows: Vec<Vec<String>> = rep
                .grassmann_per_frequency
                .iter()
                .zip(&rep.matched_frequencies)
                .map(|((f, d), m)| vec![fmt_f64(*f), fmt_f64(*m), fmt_f64(*d)])
                .collect();
            io::write_csv(&run.out.join("report.csv"), &["frequency_hz", "matched_frequency_hz", "grassmann"], &rows)?;
            let cos: Vec<Vec<String>> = rep
                .pairwise_costheta
                .row_iter()
                .map(|r| r.iter().map(|v| fmt_f64(*v)).collect())
                .collect();
            let head: Vec<String> = (0..rep.pairwise_costheta.ncols()).map(|j| format!("candidate_{j}")).collect();
            let head: Vec<&str> = head.iter().map(String::as_str).collect();
            io::write_csv(&run.out.join("pairwise_costheta.csv"), &head, &cos)?;
            run.summary = json!({
                "grassmann_total": rep.grassmann_total,
                "grassmann_per_frequency": rep.grassmann_per_frequency,
            });
            Ok(())
        }
        (None, None, Some(s)) => {
            let full = io::read_dataset(&run.input("dataset", &s.dataset, base))?;
            let truth = ModeSet::read(&run.input("truth", &s.truth, base))?;
            let dt = match s.interp_dt {
                Some(d) => d,
                None => full
                    .common_dt()
                    .ok_or_else(|| Error::InvalidInput("interp_dt is required for irregular datasets".into()))?,
            };
            let opts = SweepOptions {
                pod: PodOptions { target: PodTarget::Rank(s.pod_rank), center: s.center },
                interp_dt: dt,
                window: s.window,
                mvgpr: s.mvgpr,
                tolerance: FrequencyTolerance { rel: c.rel_tol, half_bin: 0.5 * c.bin_width.unwrap_or(0.0) },
            };
            let base_seed = seed.unwrap_or(0);
            let mut rows: Vec<SweepRow> = Vec::new();
            for &fraction in &s.fractions {
                for i in 0..s.n_seeds {
                    let cell_seed = base_seed + i;
                    for r in run_cell(&full, &truth, fraction, cell_seed, &s.methods, &opts)? {
                        logger.debug(
                            "cell",
                            json!({ "method": r.row.method, "fraction": fraction, "seed": cell_seed, "grassmann_total": r.row.grassmann_total }),
                        );
                        rows.push(r.row);
                    }
                }
            }
            metrics::write_sweep_rows(&run.out.join("sweep_rows.csv"), &rows)?;
            let cells = metrics::sweep_report(&rows);
            metrics::write_sweep_cells(&run.out.join("sweep_cells.csv"), &cells)?;
            run.summary = json!({ "cells": cells.len(), "rows": rows.len() });
            Ok(())
        }
        _ => Err(Error::InvalidInput(
            "compare needs either both reference and candidate, or sweep".into(),
        )),
    }
}
