//! First-order minimizers used for hyperparameter training: L-BFGS with a
//! backtracking Armijo line search, and Adam.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    #[default]
    Lbfgs,
    Adam,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OptimOptions {
    pub optimizer: Optimizer,
    pub max_iters: usize,
    /// Adam step size; ignored by L-BFGS.
    pub learning_rate: f64,
    /// Stop when the loss changed by less than `rel_tol·max(|loss|, 1)`
    /// over the last `window` iterations.
    pub rel_tol: f64,
    pub window: usize,
}

impl Default for OptimOptions {
    fn default() -> Self {
        Self {
            optimizer: Optimizer::Lbfgs,
            max_iters: 2000,
            learning_rate: 1e-2,
            rel_tol: 1e-9,
            window: 50,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    pub loss: f64,
    pub grad_norm: f64,
}

#[derive(Clone, Debug)]
pub struct OptimResult {
    /// Best parameters seen.
    pub params: Vec<f64>,
    pub loss: f64,
    pub trace: Vec<TraceRow>,
    pub converged: bool,
}

/// Objective returning `(loss, gradient)`. Errors and non-finite losses at
/// trial points are treated as rejected steps.
pub trait Objective {
    fn eval(&mut self, x: &[f64]) -> Result<(f64, Vec<f64>)>;
}

impl<F> Objective for F
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    fn eval(&mut self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        self(x)
    }
}

pub fn minimize(f: &mut dyn Objective, x0: &[f64], opts: &OptimOptions) -> Result<OptimResult> {
    let (loss, grad) = f.eval(x0).map_err(|e| Error::Training {
        iteration: 0,
        message: format!("initial evaluation failed: {e}"),
        last_valid: x0.to_vec(),
    })?;
    if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::Training {
            iteration: 0,
            message: "initial loss or gradient is not finite".into(),
            last_valid: x0.to_vec(),
        });
    }
    match opts.optimizer {
        Optimizer::Lbfgs => lbfgs(f, x0.to_vec(), loss, grad, opts),
        Optimizer::Adam => adam(f, x0.to_vec(), loss, grad, opts),
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn stalled(trace: &[TraceRow], opts: &OptimOptions) -> bool {
    let n = trace.len();
    if n <= opts.window {
        return false;
    }
    let now = trace[n - 1].loss;
    let then = trace[n - 1 - opts.window].loss;
    (then - now).abs() <= opts.rel_tol * now.abs().max(1.0)
}

fn lbfgs(
    f: &mut dyn Objective,
    mut x: Vec<f64>,
    mut loss: f64,
    mut grad: Vec<f64>,
    opts: &OptimOptions,
) -> Result<OptimResult> {
    const MEMORY: usize = 10;
    const C1: f64 = 1e-4;
    let n = x.len();
    let mut s_hist: Vec<Vec<f64>> = Vec::new();
    let mut y_hist: Vec<Vec<f64>> = Vec::new();
    let mut trace = vec![TraceRow {
        iteration: 0,
        loss,
        grad_norm: norm(&grad),
    }];
    let mut converged = false;
    let mut fresh_start = true;
    for it in 1..=opts.max_iters {
        // two-loop recursion
        let mut d: Vec<f64> = grad.iter().map(|g| -g).collect();
        let mut alphas = vec![0.0; s_hist.len()];
        for i in (0..s_hist.len()).rev() {
            let rho = 1.0 / dot(&y_hist[i], &s_hist[i]);
            alphas[i] = rho * dot(&s_hist[i], &d);
            for j in 0..n {
                d[j] -= alphas[i] * y_hist[i][j];
            }
        }
        if let (Some(s), Some(y)) = (s_hist.last(), y_hist.last()) {
            let gamma = dot(s, y) / dot(y, y);
            d.iter_mut().for_each(|v| *v *= gamma);
        }
        for i in 0..s_hist.len() {
            let rho = 1.0 / dot(&y_hist[i], &s_hist[i]);
            let beta = rho * dot(&y_hist[i], &d);
            for j in 0..n {
                d[j] += (alphas[i] - beta) * s_hist[i][j];
            }
        }
        let mut slope = dot(&grad, &d);
        if !(slope < 0.0) {
            s_hist.clear();
            y_hist.clear();
            d = grad.iter().map(|g| -g).collect();
            slope = -dot(&grad, &grad);
            fresh_start = true;
        }
        let mut step = if fresh_start {
            (1.0 / norm(&d)).min(1.0)
        } else {
            1.0
        };
        let mut accepted = None;
        for _ in 0..40 {
            let xt: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + step * b).collect();
            if let Ok((lt, gt)) = f.eval(&xt) {
                if lt.is_finite() && gt.iter().all(|g| g.is_finite()) && lt <= loss + C1 * step * slope {
                    accepted = Some((xt, lt, gt));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((xn, ln, gn)) = accepted else {
            if s_hist.is_empty() {
                converged = true;
                break;
            }
            s_hist.clear();
            y_hist.clear();
            fresh_start = true;
            continue;
        };
        fresh_start = false;
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&grad).map(|(a, b)| a - b).collect();
        if dot(&s, &y) > 1e-12 * norm(&s) * norm(&y) {
            if s_hist.len() == MEMORY {
                s_hist.remove(0);
                y_hist.remove(0);
            }
            s_hist.push(s);
            y_hist.push(y);
        }
        x = xn;
        loss = ln;
        grad = gn;
        trace.push(TraceRow {
            iteration: it,
            loss,
            grad_norm: norm(&grad),
        });
        if stalled(&trace, opts) || norm(&grad) == 0.0 {
            converged = true;
            break;
        }
    }
    Ok(OptimResult {
        params: x,
        loss,
        trace,
        converged,
    })
}

fn adam(
    f: &mut dyn Objective,
    mut x: Vec<f64>,
    loss0: f64,
    mut grad: Vec<f64>,
    opts: &OptimOptions,
) -> Result<OptimResult> {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;
    let n = x.len();
    let mut m = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut best = (x.clone(), loss0);
    let mut trace = vec![TraceRow {
        iteration: 0,
        loss: loss0,
        grad_norm: norm(&grad),
    }];
    let mut converged = false;
    for it in 1..=opts.max_iters {
        let b1t = 1.0 - B1.powi(it as i32);
        let b2t = 1.0 - B2.powi(it as i32);
        for j in 0..n {
            m[j] = B1 * m[j] + (1.0 - B1) * grad[j];
            v[j] = B2 * v[j] + (1.0 - B2) * grad[j] * grad[j];
            x[j] -= opts.learning_rate * (m[j] / b1t) / ((v[j] / b2t).sqrt() + EPS);
        }
        let (loss, g) = match f.eval(&x) {
            Ok(r) if r.0.is_finite() && r.1.iter().all(|g| g.is_finite()) => r,
            Ok(_) => {
                return Err(Error::Training {
                    iteration: it,
                    message: "loss became NaN or infinite".into(),
                    last_valid: best.0,
                })
            }
            Err(e) => {
                return Err(Error::Training {
                    iteration: it,
                    message: e.to_string(),
                    last_valid: best.0,
                })
            }
        };
        grad = g;
        if loss < best.1 {
            best = (x.clone(), loss);
        }
        trace.push(TraceRow {
            iteration: it,
            loss,
            grad_norm: norm(&grad),
        });
        if stalled(&trace, opts) {
            converged = true;
            break;
        }
    }
    Ok(OptimResult {
        params: best.0,
        loss: best.1,
        trace,
        converged,
    })
}
