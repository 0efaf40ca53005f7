//! Identifier-based state estimator and the barrier upper bound `B̄`.
//!
//! The filters
//!
//! ```text
//! ż_y = A_zᵀ z_y + c₀ᵀ y      Ė_y = A_zᵀ E_y + y I
//! ż_u = A_zᵀ z_u + c₀ᵀ u      Ė_u = A_zᵀ E_u + u I
//! ```
//!
//! give `x̂_p(δ) = E_yᵀ (b_y(δ) + b_z) + E_uᵀ b_u(δ)`, whose error against the
//! true state obeys `ė = A_z e − b_z w` regardless of `δ`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{spectral_abscissa, weighted_norm};
use crate::lmi::{self, AffineMatrix, BarrierSolver, LmiProblem, Sense};
use crate::model::{a0_matrix, c0_row, sign_patterns, UncertainPlant};
use crate::synthesis::log_space;

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorDesign {
    pub b_z: DVector<f64>,
    /// Certified bound on `‖e‖_X`.
    pub r_e: f64,
    pub mu_e: f64,
    /// `A₀ − b_z c₀`
    pub a_z: DMatrix<f64>,
}

impl EstimatorDesign {
    /// Builds a design from a filter gain (no optimality implied).
    pub fn from_gain(b_z: DVector<f64>, r_e: f64, mu_e: f64) -> Self {
        let n = b_z.len();
        let a_z = a0_matrix(n) - &b_z * c0_row(n);
        Self {
            b_z,
            r_e,
            mu_e,
            a_z,
        }
    }

    pub fn n(&self) -> usize {
        self.b_z.len()
    }
}

#[derive(Debug, Clone)]
pub struct EstimatorOptions {
    pub mu_grid: Vec<f64>,
    pub margin: f64,
    pub tol: f64,
    pub solver: BarrierSolver,
}

impl Default for EstimatorOptions {
    fn default() -> Self {
        Self {
            mu_grid: log_space(1e-2, 1e3, 25),
            margin: 1e-9,
            tol: 1e-10,
            solver: BarrierSolver::default(),
        }
    }
}

/// Estimator LMI at fixed `μ_e` in `(b_z, s = r_e²)`:
///
/// ```text
/// [[A_zᵀ X + X A_z + μ_e X,  −X b_z     ],
///  [−b_zᵀ X,                −μ_e s / w̄²]] ≺ 0
/// ```
pub fn estimator_problem(
    x: &DMatrix<f64>,
    w_bar: f64,
    mu_e: f64,
    margin: f64,
) -> Result<(LmiProblem, lmi::Var, lmi::Var)> {
    let n = x.nrows();
    let mut problem = LmiProblem::new();
    let b_z = problem.matrix("b_z", n, 1);
    let s = problem.scalar("r_e^2");
    let a0 = a0_matrix(n);
    let c0 = c0_row(n);
    let c0m = DMatrix::from_row_slice(1, n, c0.as_slice());

    // X A_z = X A₀ − X b_z c₀
    let xa = AffineMatrix::constant(x * &a0) - b_z.expr().lmul(x).rmul(&c0m);
    let top = xa.he() + AffineMatrix::constant(x * mu_e);
    let off = -b_z.expr().lmul(x);
    let corner = s.expr().scale(-mu_e / (w_bar * w_bar));
    let m = AffineMatrix::blocks(&[vec![top, off.clone()], vec![off.t(), corner]]);
    problem.constrain("estimator", m, Sense::Negative, margin)?;
    problem.minimize(s)?;
    Ok((problem, b_z, s))
}

/// Chooses `b_z` minimizing `r_e` over the `μ_e` grid.
pub fn design_bz(x: &DMatrix<f64>, w_bar: f64, opts: &EstimatorOptions) -> Result<EstimatorDesign> {
    if x.nrows() == 0 || x.nrows() != x.ncols() {
        return Err(Error::InvalidModel("X must be square and nonempty".into()));
    }
    if !(w_bar >= 0.0) || !w_bar.is_finite() {
        return Err(Error::InvalidModel(
            "w_bar must be finite and nonnegative".into(),
        ));
    }
    if opts.mu_grid.is_empty() {
        return Err(Error::InvalidConfig("empty mu_e grid".into()));
    }
    // The LMI is homogeneous in (w̄, r_e); solve at w̄ = 1 and rescale.
    let mut best: Option<EstimatorDesign> = None;
    for &mu_e in &opts.mu_grid {
        let (problem, b_z, s) = estimator_problem(x, 1.0, mu_e, opts.margin)?;
        let report = lmi::solve_with(&problem, &opts.solver, opts.tol);
        if !report.is_optimal() {
            continue;
        }
        let r_e = report.scalar(s).max(0.0).sqrt() * w_bar;
        if best.as_ref().is_none_or(|b| r_e < b.r_e) {
            let b_z = DVector::from_column_slice(report.value(b_z).as_slice());
            best = Some(EstimatorDesign::from_gain(b_z, r_e, mu_e));
        }
    }
    let design = best.ok_or(Error::DesignInfeasible {
        points: opts.mu_grid.len(),
    })?;
    let max_real = spectral_abscissa(&design.a_z);
    if !(max_real < -1e-9) {
        return Err(Error::NotHurwitz { max_real });
    }
    Ok(design)
}

/// Largest eigenvalue of the estimator LMI at a given design.
pub fn estimator_lmi_margin(x: &DMatrix<f64>, w_bar: f64, design: &EstimatorDesign) -> f64 {
    let n = x.nrows();
    let mut m = DMatrix::zeros(n + 1, n + 1);
    let top = design.a_z.transpose() * x + x * &design.a_z + x * design.mu_e;
    let off = -(x * &design.b_z);
    m.view_mut((0, 0), (n, n)).copy_from(&top);
    m.view_mut((0, n), (n, 1)).copy_from(&off);
    m.view_mut((n, 0), (1, n)).copy_from(&off.transpose());
    m[(n, n)] = -design.mu_e * design.r_e * design.r_e / (w_bar * w_bar);
    lmi::check_definite(&m, Sense::Negative, 0.0).1
}

/// Filter states; all zero at `t = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorState {
    pub z_y: DVector<f64>,
    pub z_u: DVector<f64>,
    pub e_y: DMatrix<f64>,
    pub e_u: DMatrix<f64>,
    pub t: f64,
}

impl EstimatorState {
    pub fn zeros(n: usize) -> Self {
        Self {
            z_y: DVector::zeros(n),
            z_u: DVector::zeros(n),
            e_y: DMatrix::zeros(n, n),
            e_u: DMatrix::zeros(n, n),
            t: 0.0,
        }
    }

    pub fn n(&self) -> usize {
        self.z_y.len()
    }

    /// Number of scalars in [`Self::to_flat`].
    pub fn flat_len(n: usize) -> usize {
        2 * n + 2 * n * n
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(Self::flat_len(self.n()));
        v.extend_from_slice(self.z_y.as_slice());
        v.extend_from_slice(self.z_u.as_slice());
        v.extend_from_slice(self.e_y.as_slice());
        v.extend_from_slice(self.e_u.as_slice());
        v
    }

    pub fn from_flat(n: usize, v: &[f64], t: f64) -> Self {
        let nn = n * n;
        Self {
            z_y: DVector::from_column_slice(&v[..n]),
            z_u: DVector::from_column_slice(&v[n..2 * n]),
            e_y: DMatrix::from_column_slice(n, n, &v[2 * n..2 * n + nn]),
            e_u: DMatrix::from_column_slice(n, n, &v[2 * n + nn..2 * n + 2 * nn]),
            t,
        }
    }
}

/// Writes the filter derivatives for the flat layout of [`EstimatorState`].
pub fn filter_rates(a_z: &DMatrix<f64>, state: &[f64], y: f64, u: f64, out: &mut [f64]) {
    let n = a_z.nrows();
    let nn = n * n;
    // (A_zᵀ v)_i = Σ_j A_z[j, i] v_j
    let at_mul = |v: &[f64], o: &mut [f64]| {
        for i in 0..n {
            o[i] = (0..n).map(|j| a_z[(j, i)] * v[j]).sum();
        }
    };
    at_mul(&state[..n], &mut out[..n]);
    out[n - 1] += y;
    at_mul(&state[n..2 * n], &mut out[n..2 * n]);
    out[2 * n - 1] += u;
    for (base, drive) in [(2 * n, y), (2 * n + nn, u)] {
        for col in 0..n {
            let c = base + col * n;
            at_mul(&state[c..c + n], &mut out[c..c + n]);
            out[c + col] += drive;
        }
    }
}

/// Advances the filters by one RK4 step with `y`, `u` held over the step.
pub fn step(
    state: &EstimatorState,
    y: f64,
    u: f64,
    design: &EstimatorDesign,
    dt: f64,
) -> EstimatorState {
    let n = state.n();
    let x0 = state.to_flat();
    let x1 = crate::linalg::rk4_step(&x0, dt, |_, s, out| filter_rates(&design.a_z, s, y, u, out));
    EstimatorState::from_flat(n, &x1, state.t + dt)
}

/// `[b, A b, …, A^{n−1} b]`
pub fn controllability_matrix(a: &DMatrix<f64>, b: &DVector<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let mut c = DMatrix::zeros(n, n);
    let mut col = b.clone();
    for k in 0..n {
        c.set_column(k, &col);
        col = a * col;
    }
    c
}

/// `E = C_z C₀⁻¹` from controllability matrices of `(A_zᵀ, z)` and `(A_zᵀ, c₀ᵀ)`.
pub fn e_from_controllability(a_z: &DMatrix<f64>, z: &DVector<f64>) -> Result<DMatrix<f64>> {
    let n = a_z.nrows();
    let at = a_z.transpose();
    let c0 = controllability_matrix(&at, &c0_row(n).transpose());
    let c0_inv = c0.try_inverse().ok_or_else(|| {
        Error::Numerical("controllability matrix of (A_zᵀ, c₀ᵀ) is singular".into())
    })?;
    Ok(controllability_matrix(&at, z) * c0_inv)
}

/// `x̂_p` at an arbitrary parameter point `δ`.
pub fn estimate_at(
    state: &EstimatorState,
    plant: &UncertainPlant,
    design: &EstimatorDesign,
    delta: &[f64],
) -> DVector<f64> {
    let (b_y, b_u) = plant.parameters_at(delta);
    state.e_y.transpose() * (b_y + &design.b_z) + state.e_u.transpose() * b_u
}

/// `(x̄_p, [x̃_1 … x̃_{n_p}])`
pub fn affine_estimate(
    state: &EstimatorState,
    plant: &UncertainPlant,
    design: &EstimatorDesign,
) -> (DVector<f64>, Vec<DVector<f64>>) {
    let e_yt = state.e_y.transpose();
    let e_ut = state.e_u.transpose();
    let center = &e_yt * (plant.b_y_nominal() + &design.b_z) + &e_ut * plant.b_u_nominal();
    let dirs = plant
        .uncertainty
        .iter()
        .map(|d| {
            let b = DVector::from_column_slice(&d.b_tilde);
            &e_yt * &b * d.theta_y + &e_ut * &b * d.theta_u
        })
        .collect();
    (center, dirs)
}

/// Estimates at every vertex of the uncertainty box, ordered like
/// [`crate::model::vertex_parameters`].
pub fn vertex_estimates(
    state: &EstimatorState,
    plant: &UncertainPlant,
    design: &EstimatorDesign,
) -> Result<Vec<DVector<f64>>> {
    let (center, dirs) = affine_estimate(state, plant, design);
    Ok(sign_patterns(plant.n_p())?
        .iter()
        .map(|signs| {
            let mut v = center.clone();
            for (s, d) in signs.iter().zip(&dirs) {
                v.axpy(*s, d, 1.0);
            }
            v
        })
        .collect())
}

/// `B̄ = max_vertices ‖[x̂_p; x_k]‖_P + r_e`
pub fn barrier_upper_bound(
    vertices: &[DVector<f64>],
    x_k: &DVector<f64>,
    p: &DMatrix<f64>,
    r_e: f64,
) -> f64 {
    assert!(
        !vertices.is_empty(),
        "barrier_upper_bound needs at least one vertex"
    );
    let n = x_k.len();
    let mut x_cl = DVector::zeros(2 * n);
    x_cl.rows_mut(n, n).copy_from(x_k);
    vertices
        .iter()
        .map(|v| {
            x_cl.rows_mut(0, n).copy_from(v);
            weighted_norm(p, &x_cl)
        })
        .fold(f64::NEG_INFINITY, f64::max)
        + r_e
}
