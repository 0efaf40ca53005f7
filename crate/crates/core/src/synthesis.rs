//! Barrier pair synthesis.
//!
//! The barrier function is `B(x_CL) = ‖x_CL‖_P`. With the change of
//! controller variables `(A_k, b_k, c_k) → (E, F, G)` the invariance and
//! limit conditions become LMIs in `(X, Y, E, F, G)` once the S-procedure
//! multipliers `(μ_w, μ_1 … μ_{n_p})` are fixed. The multipliers are
//! searched on a grid and `log det Y` is maximized at each grid point.

use nalgebra::{DMatrix, DVector, RowDVector};

use crate::error::{Error, GridAttempt, Result};
use crate::linalg::symmetrize;
use crate::lmi::{
    self, check_definite, AffineMatrix, BarrierSolver, LmiProblem, Sense, SolveReport, SolveStatus,
    Var,
};
use crate::model::{
    canonical_realization, closed_loop_matrices, Controller, Realization, SafetySpec,
    UncertainPlant,
};

/// Controller variables after the linearizing change of coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformedVars {
    pub x: DMatrix<f64>,
    pub y: DMatrix<f64>,
    pub e: DMatrix<f64>,
    pub f: DVector<f64>,
    pub g: RowDVector<f64>,
}

/// A barrier function `‖x_CL‖_P` with its output feedback safety controller.
#[derive(Debug, Clone)]
pub struct BarrierPair {
    pub x: DMatrix<f64>,
    pub y: DMatrix<f64>,
    pub v: DMatrix<f64>,
    pub w: DMatrix<f64>,
    pub p: DMatrix<f64>,
    pub controller: Controller,
    pub epsilon: f64,
    pub mu_w: f64,
    pub mu_p: Vec<f64>,
    pub log_det_y: f64,
    pub transformed: TransformedVars,
}

impl BarrierPair {
    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    /// `Q = P⁻¹` assembled blockwise from `(Y, W, V)`.
    pub fn q_from_blocks(&self) -> DMatrix<f64> {
        assemble_q(&self.y, &self.w, &self.v)
    }

    /// `B(x_CL) = sqrt(x_CLᵀ P x_CL)`
    pub fn value(&self, x_cl: &DVector<f64>) -> f64 {
        crate::linalg::weighted_norm(&self.p, x_cl)
    }
}

/// `P = [[X, V], [Vᵀ, I]]`, the completion matching `W = −Y V`.
pub fn assemble_p(x: &DMatrix<f64>, v: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.nrows();
    let mut p = DMatrix::identity(2 * n, 2 * n);
    p.view_mut((0, 0), (n, n)).copy_from(x);
    p.view_mut((0, n), (n, n)).copy_from(v);
    p.view_mut((n, 0), (n, n)).copy_from(&v.transpose());
    p
}

/// `Q = [[Y, W], [Wᵀ, I − Vᵀ W]]`
pub fn assemble_q(y: &DMatrix<f64>, w: &DMatrix<f64>, v: &DMatrix<f64>) -> DMatrix<f64> {
    let n = y.nrows();
    let mut q = DMatrix::zeros(2 * n, 2 * n);
    q.view_mut((0, 0), (n, n)).copy_from(y);
    q.view_mut((0, n), (n, n)).copy_from(w);
    q.view_mut((n, 0), (n, n)).copy_from(&w.transpose());
    q.view_mut((n, n), (n, n))
        .copy_from(&(DMatrix::identity(n, n) - v.transpose() * w));
    q
}

/// Multiplier search settings.
#[derive(Debug, Clone)]
pub struct MultiplierGrid {
    pub mu_w: Vec<f64>,
    pub mu_p: Vec<f64>,
}

pub fn log_space(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    match points {
        0 => vec![],
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.log10(), hi.log10());
            (0..points)
                .map(|i| 10f64.powf(a + (b - a) * i as f64 / (points - 1) as f64))
                .collect()
        }
    }
}

impl Default for MultiplierGrid {
    fn default() -> Self {
        Self {
            mu_w: log_space(1e-2, 1e3, 13),
            mu_p: log_space(1e-2, 1e3, 7),
        }
    }
}

impl MultiplierGrid {
    /// Multiplier tuples visited exhaustively (`n_p ≤ 2`) or as uniform
    /// starting tuples for coordinate refinement (`n_p > 2`).
    fn initial_tuples(&self, n_p: usize) -> Vec<(f64, Vec<f64>)> {
        let mut out = Vec::new();
        for &mw in &self.mu_w {
            if n_p <= 2 {
                let mut idx = vec![0usize; n_p];
                loop {
                    out.push((mw, idx.iter().map(|&i| self.mu_p[i]).collect()));
                    let mut pos = n_p;
                    loop {
                        if pos == 0 {
                            break;
                        }
                        pos -= 1;
                        idx[pos] += 1;
                        if idx[pos] < self.mu_p.len() {
                            break;
                        }
                        idx[pos] = 0;
                        if pos == 0 {
                            pos = usize::MAX;
                            break;
                        }
                    }
                    if pos == usize::MAX || n_p == 0 {
                        break;
                    }
                }
            } else {
                for &mp in &self.mu_p {
                    out.push((mw, vec![mp; n_p]));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct SynthesisOptions {
    pub grid: MultiplierGrid,
    /// Distance from the boundary imposed on every synthesis LMI.
    pub margin: f64,
    pub tol: f64,
    /// Certificates must hold with this much slack.
    pub verify_tol: f64,
    pub solver: BarrierSolver,
}

impl Default for SynthesisOptions {
    fn default() -> Self {
        Self {
            grid: MultiplierGrid::default(),
            margin: lmi::DEFAULT_MARGIN,
            tol: 1e-7,
            verify_tol: 1e-9,
            solver: BarrierSolver::default(),
        }
    }
}

/// Handles to the synthesis variables inside an [`LmiProblem`].
#[derive(Debug, Clone, Copy)]
pub struct SynthesisVars {
    pub x: Var,
    pub y: Var,
    pub e: Var,
    pub f: Var,
    pub g: Var,
}

impl SynthesisVars {
    pub fn declare(problem: &mut LmiProblem, n: usize) -> Self {
        Self {
            x: problem.symmetric("X", n),
            y: problem.symmetric("Y", n),
            e: problem.matrix("E", n, n),
            f: problem.matrix("F", n, 1),
            g: problem.matrix("G", 1, n),
        }
    }

    pub fn pack(&self, problem: &LmiProblem, tv: &TransformedVars) -> DVector<f64> {
        let f = DMatrix::from_column_slice(tv.f.len(), 1, tv.f.as_slice());
        let g = DMatrix::from_row_slice(1, tv.g.len(), tv.g.as_slice());
        problem.pack(&[
            (self.x, &tv.x),
            (self.y, &tv.y),
            (self.e, &tv.e),
            (self.f, &f),
            (self.g, &g),
        ])
    }

    pub fn unpack(&self, report: &SolveReport) -> TransformedVars {
        let f = report.value(self.f);
        let g = report.value(self.g);
        TransformedVars {
            x: symmetrize(&report.value(self.x)),
            y: symmetrize(&report.value(self.y)),
            e: report.value(self.e),
            f: DVector::from_column_slice(f.as_slice()),
            g: RowDVector::from_row_slice(g.as_slice()),
        }
    }
}

fn row_matrix(r: &RowDVector<f64>) -> DMatrix<f64> {
    DMatrix::from_row_slice(1, r.len(), r.as_slice())
}

fn col_matrix(c: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_column_slice(c.len(), 1, c.as_slice())
}

/// `[[Y, I], [I, X]]`
pub fn coupling_expr(vars: &SynthesisVars, n: usize) -> AffineMatrix {
    AffineMatrix::blocks(&[
        vec![vars.y.expr(), AffineMatrix::identity(n)],
        vec![AffineMatrix::identity(n), vars.x.expr()],
    ])
}

/// Left-hand side of the invariance LMI (must be negative definite).
pub fn invariance_expr(
    vars: &SynthesisVars,
    real: &Realization,
    epsilon: f64,
    w_bar: f64,
    mu_w: f64,
    mu_p: &[f64],
) -> AffineMatrix {
    let n = real.n();
    let n_p = real.n_p();
    assert_eq!(mu_p.len(), n_p, "one multiplier per uncertainty direction");
    let (x, y, e, f, g) = (
        vars.x.expr(),
        vars.y.expr(),
        vars.e.expr(),
        vars.f.expr(),
        vars.g.expr(),
    );
    let c0 = row_matrix(&real.c0);
    let b_u = col_matrix(&real.b_u);
    let b_y = col_matrix(&real.b_y);
    let a_hat = &real.a_hat;

    let top_left = y.lmul(a_hat) + g.lmul(&b_u);
    let bottom_right = x.rmul(a_hat) + f.rmul(&c0);
    let core = AffineMatrix::blocks(&[
        vec![top_left, AffineMatrix::constant(a_hat.clone())],
        vec![e, bottom_right],
    ]);
    let h_a = core.he() + coupling_expr(vars, n).scale(mu_w * w_bar * w_bar / (epsilon * epsilon));

    let h_b = AffineMatrix::blocks(&[
        vec![
            AffineMatrix::constant(b_y.clone()),
            AffineMatrix::constant(real.b_tilde.clone()),
        ],
        vec![f + x.rmul(&b_y), x.rmul(&real.b_tilde)],
    ]);

    let m_wp = DMatrix::from_diagonal(&DVector::from_iterator(
        1 + n_p,
        std::iter::once(mu_w).chain(mu_p.iter().copied()),
    ));
    if n_p == 0 {
        return AffineMatrix::blocks(&[
            vec![h_a, h_b.clone()],
            vec![h_b.t(), AffineMatrix::constant(-m_wp)],
        ]);
    }

    let m_p = DMatrix::from_diagonal(&DVector::from_column_slice(mu_p));
    let theta_y_t = DMatrix::from_column_slice(n_p, 1, real.theta_y.as_slice());
    let theta_u_t = DMatrix::from_column_slice(n_p, 1, real.theta_u.as_slice());
    let h_c = AffineMatrix::blocks(&[vec![
        g.lmul(&theta_u_t) + y.lmul(&(&theta_y_t * &c0)),
        AffineMatrix::constant(&theta_y_t * &c0),
    ]]);
    let mut d_wp = DMatrix::zeros(n_p, 1 + n_p);
    d_wp.view_mut((0, 0), (n_p, 1)).copy_from(&theta_y_t);

    let row3_1 = h_c.lmul(&m_p);
    let row3_2 = AffineMatrix::constant(&m_p * &d_wp);
    AffineMatrix::blocks(&[
        vec![h_a, h_b.clone(), row3_1.t()],
        vec![h_b.t(), AffineMatrix::constant(-m_wp), row3_2.t()],
        vec![row3_1, row3_2, AffineMatrix::constant(-m_p)],
    ])
}

/// `[[Y, I, Gᵀ], [I, X, 0], [G, 0, ū²]]` (must be positive semidefinite).
pub fn input_limit_expr(vars: &SynthesisVars, n: usize, u_bar: f64) -> AffineMatrix {
    let g = vars.g.expr();
    AffineMatrix::blocks(&[
        vec![vars.y.expr(), AffineMatrix::identity(n), g.t()],
        vec![
            AffineMatrix::identity(n),
            vars.x.expr(),
            AffineMatrix::zeros(n, 1),
        ],
        vec![
            g,
            AffineMatrix::zeros(1, n),
            AffineMatrix::identity(1) * (u_bar * u_bar),
        ],
    ])
}

/// `f_iᵀ Y f_i − 1` for each state limit (must be nonpositive).
pub fn state_limit_exprs(vars: &SynthesisVars, spec: &SafetySpec) -> Vec<AffineMatrix> {
    spec.f_vectors()
        .iter()
        .map(|f| {
            let fm = col_matrix(f);
            vars.y.expr().lmul(&fm.transpose()).rmul(&fm) - AffineMatrix::identity(1)
        })
        .collect()
}

/// Adds `X ≻ 0`, `Y ≻ 0`, the coupling LMI and the invariance LMI.
#[allow(clippy::too_many_arguments)]
pub fn build_invariance_lmi(
    problem: &mut LmiProblem,
    vars: &SynthesisVars,
    real: &Realization,
    spec: &SafetySpec,
    w_bar: f64,
    mu_w: f64,
    mu_p: &[f64],
    margin: f64,
) -> Result<()> {
    if !(mu_w >= 0.0) || mu_p.iter().any(|m| !(*m >= 0.0)) {
        return Err(Error::InvalidModel(
            "multipliers must be nonnegative".into(),
        ));
    }
    let n = real.n();
    problem.constrain("X>0", vars.x.expr(), Sense::Positive, margin)?;
    problem.constrain("Y>0", vars.y.expr(), Sense::Positive, margin)?;
    problem.constrain("coupling", coupling_expr(vars, n), Sense::Positive, margin)?;
    problem.constrain(
        "invariance",
        invariance_expr(vars, real, spec.epsilon, w_bar, mu_w, mu_p),
        Sense::Negative,
        margin,
    )?;
    Ok(())
}

/// Adds the state-limit and input-limit LMIs.
pub fn build_limit_lmis(
    problem: &mut LmiProblem,
    vars: &SynthesisVars,
    real: &Realization,
    spec: &SafetySpec,
    margin: f64,
) -> Result<()> {
    spec.validate(Some(real.n()))?;
    for (i, e) in state_limit_exprs(vars, spec).into_iter().enumerate() {
        problem.constrain(&format!("state_limit_{i}"), e, Sense::Negative, margin)?;
    }
    problem.constrain(
        "input_limit",
        input_limit_expr(vars, real.n(), spec.u_bar),
        Sense::Positive,
        margin,
    )?;
    Ok(())
}

/// The maxdet problem for one multiplier tuple.
pub fn grid_point_problem(
    real: &Realization,
    spec: &SafetySpec,
    w_bar: f64,
    mu_w: f64,
    mu_p: &[f64],
    margin: f64,
) -> Result<(LmiProblem, SynthesisVars)> {
    let mut problem = LmiProblem::new();
    let vars = SynthesisVars::declare(&mut problem, real.n());
    build_invariance_lmi(&mut problem, &vars, real, spec, w_bar, mu_w, mu_p, margin)?;
    build_limit_lmis(&mut problem, &vars, real, spec, margin)?;
    problem.maximize_log_det(vars.y)?;
    Ok((problem, vars))
}

/// Evaluates the invariance LMI matrix at given variables.
pub fn invariance_matrix(
    real: &Realization,
    epsilon: f64,
    w_bar: f64,
    mu_w: f64,
    mu_p: &[f64],
    tv: &TransformedVars,
) -> DMatrix<f64> {
    let mut problem = LmiProblem::new();
    let vars = SynthesisVars::declare(&mut problem, real.n());
    let x = vars.pack(&problem, tv);
    invariance_expr(&vars, real, epsilon, w_bar, mu_w, mu_p).evaluate(&x)
}

/// Recovers `(V, W)` and the controller from `(X, Y, E, F, G)` with
/// `V Vᵀ = X − Y⁻¹` (lower-triangular `V`) and `W = −Y V`.
pub fn recover_controller(
    real: &Realization,
    tv: &TransformedVars,
) -> Result<(DMatrix<f64>, DMatrix<f64>, Controller)> {
    let n = real.n();
    let y_inv =
        tv.y.clone()
            .try_inverse()
            .ok_or_else(|| Error::Recovery("Y is singular".into()))?;
    let gap = symmetrize(&(&tv.x - &y_inv));
    let v = nalgebra::Cholesky::new(gap)
        .ok_or_else(|| Error::Recovery("X − Y⁻¹ is not positive definite".into()))?
        .l();
    let w = -(&tv.y * &v);
    let v_inv = v
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Recovery("V is singular".into()))?;
    let w_inv_t = w
        .transpose()
        .try_inverse()
        .ok_or_else(|| Error::Recovery("W is singular".into()))?;

    let c0 = row_matrix(&real.c0);
    let f = col_matrix(&tv.f);
    let g = row_matrix(&tv.g);
    let b_u = col_matrix(&real.b_u);
    let inner = &tv.e - &f * &c0 * &tv.y - &tv.x * &b_u * &g - &tv.x * &real.a_hat * &tv.y;
    let a_k = &v_inv * inner * &w_inv_t;
    let b_k = &v_inv * &tv.f;
    let c_k = &tv.g * &w_inv_t;
    debug_assert_eq!(a_k.shape(), (n, n));
    Ok((v, w, Controller { a_k, b_k, c_k }))
}

/// `(E, F, G)` implied by a controller and `(X, Y, V, W)`.
pub fn transform_controller(
    real: &Realization,
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    v: &DMatrix<f64>,
    w: &DMatrix<f64>,
    ctrl: &Controller,
) -> TransformedVars {
    let c0 = row_matrix(&real.c0);
    let f = v * &ctrl.b_k;
    let g = &ctrl.c_k * w.transpose();
    let e = v * &ctrl.a_k * w.transpose()
        + col_matrix(&f) * &c0 * y
        + x * col_matrix(&real.b_u) * row_matrix(&g)
        + x * &real.a_hat * y;
    TransformedVars {
        x: x.clone(),
        y: y.clone(),
        e,
        f,
        g,
    }
}

/// Invariance condition written in `Q` and the closed-loop matrices:
///
/// ```text
/// [[A Q + Q Aᵀ + μ_w w̄²/ε² Q,  B_wp,    Q C_qᵀ M_p],
///  [B_wpᵀ,                    −M_wp,    D_wpᵀ M_p],
///  [M_p C_q Q,                M_p D_wp, −M_p     ]]
/// ```
pub fn q_form_matrix(real: &Realization, bp: &BarrierPair, w_bar: f64) -> Result<DMatrix<f64>> {
    let cl = closed_loop_matrices(real, &bp.controller)?;
    let q = bp.q_from_blocks();
    let n2 = 2 * real.n();
    let n_p = real.n_p();
    let m_wp = DMatrix::from_diagonal(&DVector::from_iterator(
        1 + n_p,
        std::iter::once(bp.mu_w).chain(bp.mu_p.iter().copied()),
    ));
    let m_p = DMatrix::from_diagonal(&DVector::from_column_slice(&bp.mu_p));
    let size = n2 + 1 + 2 * n_p;
    let mut m = DMatrix::zeros(size, size);
    let scale = bp.mu_w * w_bar * w_bar / (bp.epsilon * bp.epsilon);
    let phi = &cl.a_cl * &q + &q * cl.a_cl.transpose() + &q * scale;
    m.view_mut((0, 0), (n2, n2)).copy_from(&phi);
    m.view_mut((0, n2), (n2, 1 + n_p)).copy_from(&cl.b_wp);
    m.view_mut((n2, 0), (1 + n_p, n2))
        .copy_from(&cl.b_wp.transpose());
    m.view_mut((n2, n2), (1 + n_p, 1 + n_p))
        .copy_from(&(-&m_wp));
    if n_p > 0 {
        let r3c1 = &m_p * &cl.c_q * &q;
        let r3c2 = &m_p * &cl.d_wp;
        let o = n2 + 1 + n_p;
        m.view_mut((o, 0), (n_p, n2)).copy_from(&r3c1);
        m.view_mut((0, o), (n2, n_p)).copy_from(&r3c1.transpose());
        m.view_mut((o, n2), (n_p, 1 + n_p)).copy_from(&r3c2);
        m.view_mut((n2, o), (1 + n_p, n_p))
            .copy_from(&r3c2.transpose());
        m.view_mut((o, o), (n_p, n_p)).copy_from(&(-&m_p));
    }
    Ok(m)
}

/// `diag(Π₁, I, I)` with `Π₁ = [[I, X], [0, Vᵀ]]`.
pub fn congruence_transform(bp: &BarrierPair, n_p: usize) -> DMatrix<f64> {
    let n = bp.n();
    let size = 2 * n + 1 + 2 * n_p;
    let mut t = DMatrix::identity(size, size);
    t.view_mut((0, n), (n, n)).copy_from(&bp.x);
    t.view_mut((n, n), (n, n)).copy_from(&bp.v.transpose());
    t
}

/// Lyapunov S-procedure matrix in `P` with `μ_CL = μ_w w̄²`:
///
/// ```text
/// [[AᵀP + PA + μ_CL/ε² P + C_qᵀ M_p C_q,  P B_wp + C_qᵀ M_p D_wp],
///  [⋆,                                    −M_wp + D_wpᵀ M_p D_wp]]
/// ```
///
/// The cross term `C_qᵀ M_p D_wp` comes from `qᵀ M_p q` with
/// `q = C_q x_CL + D_wp [w; p]`; it is what makes this matrix the Schur
/// complement of [`q_form_matrix`] after congruence with `diag(P, I, I)`.
pub fn lyapunov_matrix(real: &Realization, bp: &BarrierPair, w_bar: f64) -> Result<DMatrix<f64>> {
    let cl = closed_loop_matrices(real, &bp.controller)?;
    let p = &bp.p;
    let n2 = 2 * real.n();
    let n_p = real.n_p();
    let m_wp = DMatrix::from_diagonal(&DVector::from_iterator(
        1 + n_p,
        std::iter::once(bp.mu_w).chain(bp.mu_p.iter().copied()),
    ));
    let m_p = DMatrix::from_diagonal(&DVector::from_column_slice(&bp.mu_p));
    let mu_cl = bp.mu_w * w_bar * w_bar;
    let tl = cl.a_cl.transpose() * p
        + p * &cl.a_cl
        + p * (mu_cl / (bp.epsilon * bp.epsilon))
        + cl.c_q.transpose() * &m_p * &cl.c_q;
    let off = p * &cl.b_wp + cl.c_q.transpose() * &m_p * &cl.d_wp;
    let br = -m_wp + cl.d_wp.transpose() * &m_p * &cl.d_wp;
    let size = n2 + 1 + n_p;
    let mut h = DMatrix::zeros(size, size);
    h.view_mut((0, 0), (n2, n2)).copy_from(&tl);
    h.view_mut((0, n2), (n2, 1 + n_p)).copy_from(&off);
    h.view_mut((n2, 0), (1 + n_p, n2))
        .copy_from(&off.transpose());
    h.view_mut((n2, n2), (1 + n_p, 1 + n_p)).copy_from(&br);
    Ok(h)
}

/// One re-checked certificate. `margin < 0` means the inequality holds.
#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    pub name: &'static str,
    pub margin: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CertificateReport {
    pub checks: Vec<Certificate>,
}

impl CertificateReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn worst_margin(&self) -> f64 {
        self.checks
            .iter()
            .map(|c| c.margin)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn get(&self, name: &str) -> Option<&Certificate> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Evaluates every certificate without failing.
pub fn certificate_report(
    plant: &UncertainPlant,
    spec: &SafetySpec,
    bp: &BarrierPair,
    tol: f64,
) -> Result<CertificateReport> {
    let real = canonical_realization(plant)?;
    let n = real.n();
    let mut checks = Vec::new();
    let mut push = |name, margin: f64| {
        checks.push(Certificate {
            name,
            margin,
            passed: margin < -tol,
        })
    };

    let mut coupling = DMatrix::identity(2 * n, 2 * n);
    coupling.view_mut((0, 0), (n, n)).copy_from(&bp.y);
    coupling.view_mut((n, n), (n, n)).copy_from(&bp.x);
    let (_, lmin) = check_definite(&coupling, Sense::Positive, 0.0);
    push("coupling", -lmin);

    let inv = invariance_matrix(
        &real,
        bp.epsilon,
        plant.w_bar,
        bp.mu_w,
        &bp.mu_p,
        &bp.transformed,
    );
    let (_, lmax) = check_definite(&inv, Sense::Negative, 0.0);
    push("invariance", lmax);

    let h_p = lyapunov_matrix(&real, bp, plant.w_bar)?;
    let (_, lmax) = check_definite(&h_p, Sense::Negative, 0.0);
    push("lyapunov", lmax);

    let q =
        bp.p.clone()
            .try_inverse()
            .ok_or_else(|| Error::Numerical("P is singular".into()))?;
    let q_pp = q.view((0, 0), (n, n)).into_owned();
    let q_kk = q.view((n, n), (n, n)).into_owned();
    let state = spec
        .f_vectors()
        .iter()
        .map(|f| f.dot(&(&q_pp * f)) - 1.0)
        .fold(f64::NEG_INFINITY, f64::max);
    let c_k = &bp.controller.c_k;
    let input = (c_k * &q_kk * c_k.transpose())[(0, 0)] - spec.u_bar * spec.u_bar;
    push("containment", state.max(input));

    Ok(CertificateReport { checks })
}

/// Re-checks every certificate; fails listing the ones that do not hold.
pub fn verify_barrier_pair(
    plant: &UncertainPlant,
    spec: &SafetySpec,
    bp: &BarrierPair,
    tol: f64,
) -> Result<CertificateReport> {
    let report = certificate_report(plant, spec, bp, tol)?;
    if report.all_passed() {
        Ok(report)
    } else {
        Err(Error::VerificationFailed {
            failing: report
                .checks
                .iter()
                .filter(|c| !c.passed)
                .map(|c| format!("{} (margin {:e})", c.name, c.margin))
                .collect(),
        })
    }
}

/// Solution of one grid point.
#[derive(Debug, Clone)]
pub struct GridSolution {
    pub index: usize,
    pub mu_w: f64,
    pub mu_p: Vec<f64>,
    pub status: SolveStatus,
    pub log_det_y: f64,
    pub vars: Option<TransformedVars>,
}

pub fn solve_grid_point(
    real: &Realization,
    spec: &SafetySpec,
    w_bar: f64,
    mu_w: f64,
    mu_p: &[f64],
    opts: &SynthesisOptions,
) -> Result<(SolveStatus, f64, Option<TransformedVars>)> {
    let (problem, vars) = grid_point_problem(real, spec, w_bar, mu_w, mu_p, opts.margin)?;
    let report = lmi::solve_with(&problem, &opts.solver, opts.tol);
    if report.is_optimal() {
        Ok((report.status, report.objective, Some(vars.unpack(&report))))
    } else {
        Ok((report.status, f64::NEG_INFINITY, None))
    }
}

fn solve_tuples(
    real: &Realization,
    spec: &SafetySpec,
    w_bar: f64,
    tuples: Vec<(f64, Vec<f64>)>,
    first_index: usize,
    opts: &SynthesisOptions,
) -> Result<Vec<GridSolution>> {
    let run = |(i, (mu_w, mu_p)): (usize, (f64, Vec<f64>))| -> Result<GridSolution> {
        let (status, log_det_y, vars) = solve_grid_point(real, spec, w_bar, mu_w, &mu_p, opts)?;
        Ok(GridSolution {
            index: first_index + i,
            mu_w,
            mu_p,
            status,
            log_det_y,
            vars,
        })
    };
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        tuples.into_par_iter().enumerate().map(run).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        tuples.into_iter().enumerate().map(run).collect()
    }
}

fn better(a: &GridSolution, b: &GridSolution) -> bool {
    a.log_det_y > b.log_det_y || (a.log_det_y == b.log_det_y && a.index < b.index)
}

/// Runs the multiplier search and returns every visited grid point.
pub fn search_multipliers(
    real: &Realization,
    spec: &SafetySpec,
    w_bar: f64,
    opts: &SynthesisOptions,
) -> Result<Vec<GridSolution>> {
    let n_p = real.n_p();
    let tuples = opts.grid.initial_tuples(n_p);
    let mut all = solve_tuples(real, spec, w_bar, tuples, 0, opts)?;
    if n_p > 2 {
        // Coordinate-wise refinement from the best uniform tuple.
        let Some(mut best) = all
            .iter()
            .filter(|s| s.vars.is_some())
            .fold(None::<&GridSolution>, |acc, s| match acc {
                Some(b) if !better(s, b) => Some(b),
                _ => Some(s),
            })
            .cloned()
        else {
            return Ok(all);
        };
        for i in 0..n_p {
            let tuples: Vec<_> = opts
                .grid
                .mu_p
                .iter()
                .map(|&m| {
                    let mut mu = best.mu_p.clone();
                    mu[i] = m;
                    (best.mu_w, mu)
                })
                .collect();
            let next = all.len();
            let round = solve_tuples(real, spec, w_bar, tuples, next, opts)?;
            for s in &round {
                if s.vars.is_some() && better(s, &best) {
                    best = s.clone();
                }
            }
            all.extend(round);
        }
    }
    Ok(all)
}

fn assemble_pair(real: &Realization, spec: &SafetySpec, sol: &GridSolution) -> Result<BarrierPair> {
    let mut tv = sol.vars.clone().expect("feasible grid point");
    let y_inv =
        tv.y.clone()
            .try_inverse()
            .ok_or_else(|| Error::Recovery("Y is singular".into()))?;
    let (_, lmin) = check_definite(&(&tv.x - &y_inv), Sense::Positive, 0.0);
    if lmin < 1e-9 {
        tv.y *= 1.0 - 1e-6;
    }
    let (v, w, controller) = recover_controller(real, &tv)?;
    let p = assemble_p(&tv.x, &v);
    Ok(BarrierPair {
        x: tv.x.clone(),
        y: tv.y.clone(),
        v,
        w,
        p,
        controller,
        epsilon: spec.epsilon,
        mu_w: sol.mu_w,
        mu_p: sol.mu_p.clone(),
        log_det_y: sol.log_det_y,
        transformed: tv,
    })
}

/// Maximizes `log det Y` over the multiplier grid and returns the best
/// verified barrier pair.
pub fn synthesize(
    plant: &UncertainPlant,
    spec: &SafetySpec,
    opts: &SynthesisOptions,
) -> Result<BarrierPair> {
    let real = canonical_realization(plant)?;
    spec.validate(Some(real.n()))?;
    if opts.grid.mu_w.is_empty() || (real.n_p() > 0 && opts.grid.mu_p.is_empty()) {
        return Err(Error::InvalidConfig("empty multiplier grid".into()));
    }
    let all = search_multipliers(&real, spec, plant.w_bar, opts)?;
    let mut feasible: Vec<&GridSolution> = all.iter().filter(|s| s.vars.is_some()).collect();
    feasible.sort_by(|a, b| {
        b.log_det_y
            .total_cmp(&a.log_det_y)
            .then(a.index.cmp(&b.index))
    });
    let mut last_err = None;
    for sol in feasible {
        let attempt = assemble_pair(&real, spec, sol)
            .and_then(|bp| verify_barrier_pair(plant, spec, &bp, opts.verify_tol).map(|_| bp));
        match attempt {
            Ok(bp) => return Ok(bp),
            Err(e) => last_err = Some(e),
        }
    }
    Err(last_err.unwrap_or_else(|| Error::SynthesisInfeasible {
        attempts: all
            .iter()
            .map(|s| GridAttempt {
                mu_w: s.mu_w,
                mu_p: s.mu_p.clone(),
                status: s.status.to_string(),
            })
            .collect(),
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_recovery() {
        // n = 1, X = 2, Y = 1 ⇒ V = 1, W = −1
        let plant = UncertainPlant::new(vec![1.0], vec![1.0], vec![], 0.0).unwrap();
        let real = canonical_realization(&plant).unwrap();
        let tv = TransformedVars {
            x: DMatrix::from_element(1, 1, 2.0),
            y: DMatrix::from_element(1, 1, 1.0),
            e: DMatrix::from_element(1, 1, -3.0),
            f: DVector::from_element(1, 0.5),
            g: RowDVector::from_element(1, 0.25),
        };
        let (v, w, ctrl) = recover_controller(&real, &tv).unwrap();
        assert!((v[(0, 0)] - 1.0).abs() < 1e-15);
        assert!((w[(0, 0)] + 1.0).abs() < 1e-15);
        let back = transform_controller(&real, &tv.x, &tv.y, &v, &w, &ctrl);
        assert!((back.e - tv.e).amax() < 1e-12);
        assert!((back.f - tv.f).amax() < 1e-12);
        assert!((back.g - tv.g).amax() < 1e-12);
    }

    #[test]
    fn recovery_rejects_bad_coupling() {
        let plant = UncertainPlant::new(vec![1.0], vec![1.0], vec![], 0.0).unwrap();
        let real = canonical_realization(&plant).unwrap();
        let tv = TransformedVars {
            x: DMatrix::from_element(1, 1, 0.5),
            y: DMatrix::from_element(1, 1, 1.0),
            e: DMatrix::zeros(1, 1),
            f: DVector::zeros(1),
            g: RowDVector::zeros(1),
        };
        assert!(matches!(
            recover_controller(&real, &tv),
            Err(Error::Recovery(_))
        ));
    }

    #[test]
    fn grid_defaults() {
        let g = MultiplierGrid::default();
        assert_eq!(g.mu_w.len(), 13);
        assert_eq!(g.mu_p.len(), 7);
        assert!((g.mu_w[0] - 1e-2).abs() < 1e-15);
        assert!((g.mu_w[12] - 1e3).abs() < 1e-9);
        assert_eq!(g.initial_tuples(0).len(), 13);
        assert_eq!(g.initial_tuples(1).len(), 91);
        assert_eq!(g.initial_tuples(2).len(), 13 * 49);
        assert_eq!(g.initial_tuples(3).len(), 91);
    }

    #[test]
    fn invariance_without_uncertainty_is_two_by_two_blocks() {
        let plant = UncertainPlant::new(vec![0.0, 1.0], vec![0.0, 1.0], vec![], 0.1).unwrap();
        let real = canonical_realization(&plant).unwrap();
        let mut p = LmiProblem::new();
        let vars = SynthesisVars::declare(&mut p, 2);
        let e = invariance_expr(&vars, &real, 0.5, 0.1, 2.0, &[]);
        assert_eq!(e.shape(), (5, 5));
        let x = DVector::zeros(p.n_scalars());
        assert_eq!(e.evaluate(&x)[(4, 4)], -2.0);
    }

    #[test]
    fn disturbance_free_drops_coupling_term() {
        let plant = UncertainPlant::mass_spring(1.0, 10.0, 1.0, 0.0).unwrap();
        let real = canonical_realization(&plant).unwrap();
        let tv = TransformedVars {
            x: DMatrix::identity(2, 2),
            y: DMatrix::identity(2, 2),
            e: DMatrix::zeros(2, 2),
            f: DVector::zeros(2),
            g: RowDVector::zeros(2),
        };
        let a = invariance_matrix(&real, 0.5, 0.0, 1.0, &[1.0], &tv);
        let b = invariance_matrix(&real, 0.5, 0.0, 50.0, &[1.0], &tv);
        // only the −μ_w diagonal entry differs
        let d = &a - &b;
        assert!((d[(4, 4)] - 49.0).abs() < 1e-12);
        assert!(d.amax() - 49.0 < 1e-12);
    }

    #[test]
    fn coordinate_normal_state_limit() {
        let spec = SafetySpec::new(vec![vec![0.5, 0.0]], 10.0, 0.5).unwrap();
        let mut p = LmiProblem::new();
        let vars = SynthesisVars::declare(&mut p, 2);
        let e = &state_limit_exprs(&vars, &spec)[0];
        let y = DMatrix::from_row_slice(2, 2, &[3.0, 1.0, 1.0, 7.0]);
        let x = p.pack(&[(vars.y, &y)]);
        assert!((e.evaluate(&x)[(0, 0)] - (0.25 * 3.0 - 1.0)).abs() < 1e-15);
    }
}
