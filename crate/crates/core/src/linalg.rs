//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

pub const LN_2PI: f64 = 1.8378770664093453;

pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Log-density of `N(mean, cov)` at `x`; `None` when `cov` is not positive definite.
pub fn mvn_log_density(x: &DVector<f64>, mean: &DVector<f64>, cov: &DMatrix<f64>) -> Option<f64> {
    let chol = cov.clone().cholesky()?;
    let diff = x - mean;
    let sol = chol.solve(&diff);
    let quad = diff.dot(&sol);
    let log_det = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    Some(-0.5 * (x.len() as f64 * LN_2PI + log_det + quad))
}

/// Symmetric square root factor `L` with `L L^T = m` for a PSD matrix;
/// negative eigenvalues from round-off are clipped to zero.
pub fn psd_factor(m: &DMatrix<f64>) -> DMatrix<f64> {
    if m.iter().all(|v| *v == 0.0) {
        return DMatrix::zeros(m.nrows(), m.ncols());
    }
    if let Some(chol) = m.clone().cholesky() {
        return chol.l();
    }
    let mut sym = m.clone();
    symmetrize(&mut sym);
    let eig = sym.symmetric_eigen();
    let sqrt_vals = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&sqrt_vals)
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let mut sym = m.clone();
    symmetrize(&mut sym);
    sym.symmetric_eigen().eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Numerically stable `log(sum(exp(xs)))`; `-inf` for an empty or all `-inf` input.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// `log(mean(exp(xs)))`.
pub fn log_mean_exp(xs: &[f64]) -> f64 {
    log_sum_exp(xs) - (xs.len() as f64).ln()
}
