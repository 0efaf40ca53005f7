//! Small dense helpers shared across modules.

use nalgebra::{DMatrix, DVector};

/// `dst += s · src`
pub fn add_scaled(dst: &mut DMatrix<f64>, s: f64, src: &DMatrix<f64>) {
    dst.zip_apply(src, |a, b| *a += s * b);
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Symmetric square root of a symmetric positive semidefinite matrix.
pub fn sym_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = symmetrize(m).symmetric_eigen();
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose()
}

/// Largest real part among the eigenvalues of a general square matrix.
pub fn spectral_abscissa(m: &DMatrix<f64>) -> f64 {
    m.complex_eigenvalues()
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// `‖v‖_M = sqrt(vᵀ M v)`
pub fn weighted_norm(m: &DMatrix<f64>, v: &DVector<f64>) -> f64 {
    v.dot(&(m * v)).max(0.0).sqrt()
}

pub fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect()
}

pub fn from_rows(rows: &[Vec<f64>]) -> Option<DMatrix<f64>> {
    let r = rows.len();
    let c = rows.first().map_or(0, |row| row.len());
    if rows.iter().any(|row| row.len() != c) {
        return None;
    }
    Some(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

/// One classical RK4 step of `ẋ = f(τ, x)` where `τ ∈ [0, dt]` is the
/// offset from the step start.
pub fn rk4_step(x: &[f64], dt: f64, mut f: impl FnMut(f64, &[f64], &mut [f64])) -> Vec<f64> {
    let m = x.len();
    let mut k1 = vec![0.0; m];
    let mut k2 = vec![0.0; m];
    let mut k3 = vec![0.0; m];
    let mut k4 = vec![0.0; m];
    let mut tmp = vec![0.0; m];
    f(0.0, x, &mut k1);
    for i in 0..m {
        tmp[i] = x[i] + 0.5 * dt * k1[i];
    }
    f(0.5 * dt, &tmp, &mut k2);
    for i in 0..m {
        tmp[i] = x[i] + 0.5 * dt * k2[i];
    }
    f(0.5 * dt, &tmp, &mut k3);
    for i in 0..m {
        tmp[i] = x[i] + dt * k3[i];
    }
    f(dt, &tmp, &mut k4);
    (0..m)
        .map(|i| x[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect()
}
