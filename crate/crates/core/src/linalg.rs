//! Dense linear-algebra helpers on top of nalgebra.

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;

/// Orthonormal basis of the column space of `a` via QR with column
/// pivoting. Fails when the numerical rank (relative tolerance `rel_tol`
/// against the largest pivot) is below the column count.
pub fn orthonormal_columns(a: &DMatrix<f64>, rel_tol: f64) -> Result<DMatrix<f64>> {
    let (n, k) = a.shape();
    if k == 0 || k > n {
        return Err(Error::invalid(format!("cannot orthonormalize a {n}×{k} matrix")));
    }
    let qr = a.clone().col_piv_qr();
    let r = qr.r();
    let lead = r[(0, 0)].abs();
    let rank = (0..k).filter(|&i| r[(i, i)].abs() > rel_tol * lead).count();
    if lead == 0.0 || rank < k {
        return Err(Error::invalid(format!(
            "matrix is rank deficient: numerical rank {rank} < {k} columns"
        )));
    }
    Ok(qr.q().columns(0, k).into_owned())
}

/// Thin SVD with singular values sorted in decreasing order.
pub struct SortedSvd {
    pub u: DMatrix<f64>,
    pub s: DVector<f64>,
    /// Right singular vectors as columns.
    pub v: DMatrix<f64>,
}

pub fn svd_sorted(a: &DMatrix<f64>) -> Result<SortedSvd> {
    let svd = a.clone().svd(true, true);
    let u = svd.u.ok_or_else(|| Error::Numerical("SVD did not return U".into()))?;
    let vt = svd.v_t.ok_or_else(|| Error::Numerical("SVD did not return V".into()))?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let s = DVector::from_iterator(order.len(), order.iter().map(|&i| svd.singular_values[i]));
    let u = u.select_columns(&order);
    let v = vt.transpose().select_columns(&order);
    Ok(SortedSvd { u, s, v })
}

/// Eigenvalues and right eigenvectors (unit norm columns) of a real square
/// matrix. Repeated eigenvalues of a diagonalizable matrix receive an
/// orthonormal basis of their eigenspace.
pub fn eig_real(a: &DMatrix<f64>) -> Result<(Vec<C64>, DMatrix<C64>)> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(Error::invalid("eigendecomposition needs a square matrix"));
    }
    if n == 0 {
        return Ok((Vec::new(), DMatrix::zeros(0, 0)));
    }
    let vals: Vec<C64> = a.complex_eigenvalues().iter().copied().collect();
    if vals.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(Error::Numerical("eigenvalue computation did not converge".into()));
    }
    let radius = vals.iter().map(|v| v.norm()).fold(0.0, f64::max).max(1e-300);
    let tol = 1e-8 * radius.max(1.0);

    let ac = a.map(|v| C64::new(v, 0.0));
    let mut vecs = DMatrix::<C64>::zeros(n, n);
    let mut done = vec![false; n];
    for i in 0..n {
        if done[i] {
            continue;
        }
        let cluster: Vec<usize> = (i..n)
            .filter(|&j| !done[j] && (vals[j] - vals[i]).norm() <= tol)
            .collect();
        let centre = cluster.iter().map(|&j| vals[j]).sum::<C64>() / cluster.len() as f64;
        let shifted = &ac - DMatrix::<C64>::identity(n, n) * centre;
        let svd = shifted.svd(false, true);
        let vt = svd
            .v_t
            .ok_or_else(|| Error::Numerical("SVD did not return V".into()))?;
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&p, &q| svd.singular_values[p].total_cmp(&svd.singular_values[q]));
        for (slot, &j) in cluster.iter().enumerate() {
            let row = order[slot];
            let v: DVector<C64> = vt.row(row).adjoint();
            vecs.set_column(j, &v);
            done[j] = true;
        }
    }
    Ok((vals, vecs))
}

/// Real `n × 2k` matrix `[Re c₁, Im c₁, …]` spanning the real subspace of
/// complex columns.
pub fn complex_to_real_pairs(m: &DMatrix<C64>) -> DMatrix<f64> {
    let (n, k) = m.shape();
    DMatrix::from_fn(n, 2 * k, |i, j| {
        let c = m[(i, j / 2)];
        if j % 2 == 0 {
            c.re
        } else {
            c.im
        }
    })
}

pub fn to_complex(m: &DMatrix<f64>) -> DMatrix<C64> {
    m.map(|v| C64::new(v, 0.0))
}
