//! Linear matrix inequality modeling over symmetric, rectangular and scalar
//! decision variables.
//!
//! Problems are lowered to a standard maxdet form (affine symmetric blocks
//! that must be positive definite, a linear cost and optional log-det
//! terms) and handed to a [`ConicBackend`]. The bundled backend is
//! [`BarrierSolver`].

mod barrier;
mod expr;

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};

pub use barrier::{BackendSolution, BarrierSolver};
pub use expr::{AffineMatrix, Var, VarShape};

use crate::error::{Error, Result};

/// Default distance kept from the boundary of strict inequalities.
pub const DEFAULT_MARGIN: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    /// `expr ⪯ −margin·I`
    Negative,
    /// `expr ⪰ margin·I`
    Positive,
}

#[derive(Debug, Clone)]
pub struct Constraint {
    pub name: String,
    pub expr: AffineMatrix,
    pub sense: Sense,
    pub margin: f64,
}

impl Constraint {
    /// Signed slack: negative when satisfied. For `Negative` this is
    /// `λ_max(expr) + margin`, for `Positive` it is `margin − λ_min(expr)`.
    pub fn slack_at(&self, x: &DVector<f64>) -> f64 {
        let m = self.expr.evaluate(x);
        let (_, extreme) = check_definite(&m, self.sense, 0.0);
        match self.sense {
            Sense::Negative => extreme + self.margin,
            Sense::Positive => self.margin - extreme,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Objective {
    Feasibility,
    MaximizeLogDet(Var),
    Minimize(Var),
}

#[derive(Debug, Clone)]
struct VarDecl {
    name: String,
    var: Var,
}

/// A collection of decision variables, LMI constraints and an objective.
#[derive(Debug, Clone)]
pub struct LmiProblem {
    vars: Vec<VarDecl>,
    n_scalars: usize,
    constraints: Vec<Constraint>,
    objective: Objective,
}

impl Default for LmiProblem {
    fn default() -> Self {
        Self::new()
    }
}

impl LmiProblem {
    pub fn new() -> Self {
        Self {
            vars: Vec::new(),
            n_scalars: 0,
            constraints: Vec::new(),
            objective: Objective::Feasibility,
        }
    }

    fn declare(&mut self, name: &str, shape: VarShape) -> Var {
        let var = Var {
            id: self.vars.len(),
            offset: self.n_scalars,
            shape,
        };
        self.n_scalars += shape.scalar_count();
        self.vars.push(VarDecl {
            name: name.to_string(),
            var,
        });
        var
    }

    pub fn symmetric(&mut self, name: &str, n: usize) -> Var {
        self.declare(name, VarShape::Symmetric(n))
    }

    pub fn matrix(&mut self, name: &str, rows: usize, cols: usize) -> Var {
        self.declare(name, VarShape::Matrix(rows, cols))
    }

    pub fn scalar(&mut self, name: &str) -> Var {
        self.declare(name, VarShape::Scalar)
    }

    pub fn n_scalars(&self) -> usize {
        self.n_scalars
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn objective(&self) -> Objective {
        self.objective
    }

    pub fn var_name(&self, var: Var) -> &str {
        &self.vars[var.id].name
    }

    pub fn constrain(
        &mut self,
        name: &str,
        expr: AffineMatrix,
        sense: Sense,
        margin: f64,
    ) -> Result<()> {
        if expr.nrows() != expr.ncols() {
            return Err(Error::MalformedProblem(format!(
                "constraint {name} is not square ({:?})",
                expr.shape()
            )));
        }
        let scale = expr
            .terms()
            .map(|(_, m)| m.amax())
            .fold(expr.constant_part().amax(), f64::max)
            .max(1.0);
        if expr.asymmetry() > 1e-10 * scale {
            return Err(Error::MalformedProblem(format!(
                "constraint {name} is not symmetric"
            )));
        }
        if expr.max_index().is_some_and(|k| k >= self.n_scalars) {
            return Err(Error::MalformedProblem(format!(
                "constraint {name} references an undeclared variable"
            )));
        }
        if !(margin >= 0.0) {
            return Err(Error::MalformedProblem(format!(
                "constraint {name} has negative margin"
            )));
        }
        self.constraints.push(Constraint {
            name: name.to_string(),
            expr,
            sense,
            margin,
        });
        Ok(())
    }

    pub fn maximize_log_det(&mut self, var: Var) -> Result<()> {
        if !matches!(var.shape, VarShape::Symmetric(_) | VarShape::Scalar) {
            return Err(Error::MalformedProblem(
                "log-det objective needs a symmetric variable".into(),
            ));
        }
        self.objective = Objective::MaximizeLogDet(var);
        Ok(())
    }

    pub fn minimize(&mut self, var: Var) -> Result<()> {
        if var.shape != VarShape::Scalar {
            return Err(Error::MalformedProblem(
                "linear objective needs a scalar variable".into(),
            ));
        }
        self.objective = Objective::Minimize(var);
        Ok(())
    }

    /// Packs variable values into the scalar decision vector; unset variables are zero.
    pub fn pack(&self, values: &[(Var, &DMatrix<f64>)]) -> DVector<f64> {
        let mut x = DVector::zeros(self.n_scalars);
        for (var, value) in values {
            var.pack_into(value, &mut x);
        }
        x
    }

    pub fn to_standard_form(&self) -> StandardForm {
        let blocks = self
            .constraints
            .iter()
            .map(|c| {
                let n = c.expr.nrows();
                let sign = match c.sense {
                    Sense::Negative => -1.0,
                    Sense::Positive => 1.0,
                };
                let mut constant = c.expr.constant_part() * sign;
                for i in 0..n {
                    constant[(i, i)] -= c.margin;
                }
                LmiBlock {
                    constant,
                    coeffs: c.expr.terms().map(|(k, m)| (k, m * sign)).collect(),
                }
            })
            .collect();
        let mut c = DVector::zeros(self.n_scalars);
        let mut logdet = Vec::new();
        match self.objective {
            Objective::Feasibility => {}
            Objective::Minimize(v) => c[v.offset] = 1.0,
            Objective::MaximizeLogDet(v) => {
                let e = v.expr();
                logdet.push(LmiBlock {
                    constant: e.constant_part().clone(),
                    coeffs: e.terms().map(|(k, m)| (k, m.clone())).collect(),
                });
            }
        }
        StandardForm {
            n_vars: self.n_scalars,
            blocks,
            c,
            logdet,
        }
    }

    /// Plain-text dump of the assembled problem: one labeled block per
    /// matrix, rows printed row-major.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# variables");
        for d in &self.vars {
            let _ = writeln!(
                out,
                "var {} {:?} offset={} scalars={}",
                d.name,
                d.var.shape,
                d.var.offset,
                d.var.shape.scalar_count()
            );
        }
        let _ = writeln!(out, "objective {:?}", self.objective_label());
        for c in &self.constraints {
            let _ = writeln!(
                out,
                "\nconstraint {} sense={:?} margin={:e} size={}",
                c.name,
                c.sense,
                c.margin,
                c.expr.nrows()
            );
            write_matrix(&mut out, "const", c.expr.constant_part());
            for (k, m) in c.expr.terms() {
                write_matrix(&mut out, &format!("x[{k}] {}", self.slot_label(k)), m);
            }
        }
        out
    }

    fn objective_label(&self) -> String {
        match self.objective {
            Objective::Feasibility => "feasibility".into(),
            Objective::Minimize(v) => format!("minimize {}", self.var_name(v)),
            Objective::MaximizeLogDet(v) => format!("maximize logdet {}", self.var_name(v)),
        }
    }

    fn slot_label(&self, k: usize) -> String {
        self.vars
            .iter()
            .find(|d| k >= d.var.offset && k < d.var.offset + d.var.shape.scalar_count())
            .map(|d| format!("({}+{})", d.name, k - d.var.offset))
            .unwrap_or_default()
    }
}

fn write_matrix(out: &mut String, label: &str, m: &DMatrix<f64>) {
    let _ = writeln!(out, "block {label} {}x{}", m.nrows(), m.ncols());
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| format!("{:e}", m[(i, j)])).collect();
        let _ = writeln!(out, "  {}", row.join(" "));
    }
}

/// One affine symmetric block `C + Σ x_k A_k` of the standard form.
#[derive(Debug, Clone)]
pub struct LmiBlock {
    pub constant: DMatrix<f64>,
    pub coeffs: Vec<(usize, DMatrix<f64>)>,
}

impl LmiBlock {
    pub fn dim(&self) -> usize {
        self.constant.nrows()
    }
}

/// `minimize cᵀx − Σ log det L_i(x)` subject to `G_j(x) ≻ 0`.
#[derive(Debug, Clone)]
pub struct StandardForm {
    pub n_vars: usize,
    pub blocks: Vec<LmiBlock>,
    pub c: DVector<f64>,
    pub logdet: Vec<LmiBlock>,
}

/// A solver accepting problems in [`StandardForm`].
pub trait ConicBackend {
    fn solve(&self, problem: &StandardForm, tol: f64) -> BackendSolution;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    NumericalFailure,
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::NumericalFailure => "numerical-failure",
        })
    }
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub status: SolveStatus,
    pub x: DVector<f64>,
    pub objective: f64,
    /// Largest positive constraint slack (zero when all constraints hold).
    pub max_violation: f64,
    pub iterations: usize,
}

impl SolveReport {
    pub fn value(&self, var: Var) -> DMatrix<f64> {
        var.unpack(&self.x)
    }

    pub fn scalar(&self, var: Var) -> f64 {
        self.x[var.offset]
    }

    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }
}

pub fn solve(problem: &LmiProblem, tol: f64) -> SolveReport {
    solve_with(problem, &BarrierSolver::default(), tol)
}

pub fn solve_with(problem: &LmiProblem, backend: &dyn ConicBackend, tol: f64) -> SolveReport {
    let std_form = problem.to_standard_form();
    let sol = backend.solve(&std_form, tol);
    let max_violation = problem
        .constraints
        .iter()
        .map(|c| c.slack_at(&sol.x).max(0.0))
        .fold(0.0, f64::max);
    let objective = match problem.objective {
        Objective::Feasibility => 0.0,
        Objective::Minimize(v) => sol.x[v.offset],
        Objective::MaximizeLogDet(v) => log_det_spd(&v.unpack(&sol.x)).unwrap_or(f64::NAN),
    };
    let mut status = sol.status;
    if status == SolveStatus::Optimal && !(max_violation <= tol) {
        status = SolveStatus::NumericalFailure;
    }
    SolveReport {
        status,
        x: sol.x,
        objective,
        max_violation,
        iterations: sol.iterations,
    }
}

/// Checks definiteness of the symmetric part of `m`. Returns whether every
/// eigenvalue lies strictly beyond `∓tol` together with the worst eigenvalue
/// (`λ_max` for [`Sense::Negative`], `λ_min` for [`Sense::Positive`]).
pub fn check_definite(m: &DMatrix<f64>, sense: Sense, tol: f64) -> (bool, f64) {
    assert_eq!(m.nrows(), m.ncols(), "check_definite needs a square matrix");
    if m.nrows() == 0 {
        return (true, 0.0);
    }
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.symmetric_eigenvalues();
    match sense {
        Sense::Negative => {
            let worst = eig.max();
            (worst < -tol, worst)
        }
        Sense::Positive => {
            let worst = eig.min();
            (worst > tol, worst)
        }
    }
}

/// `log det M` for symmetric positive definite `M`.
pub fn log_det_spd(m: &DMatrix<f64>) -> Option<f64> {
    let ch = nalgebra::Cholesky::new(m.clone())?;
    Some(ch.l_dirty().diagonal().iter().map(|d| 2.0 * d.ln()).sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_maxdet() {
        let mut p = LmiProblem::new();
        let x = p.symmetric("X", 1);
        p.constrain(
            "lower",
            x.expr() - AffineMatrix::identity(1),
            Sense::Positive,
            0.0,
        )
        .unwrap();
        p.constrain(
            "upper",
            x.expr() - AffineMatrix::identity(1) * 2.0,
            Sense::Negative,
            0.0,
        )
        .unwrap();
        p.maximize_log_det(x).unwrap();
        let r = solve(&p, 1e-9);
        assert!(r.is_optimal(), "{:?}", r.status);
        assert!((r.value(x)[(0, 0)] - 2.0).abs() < 1e-6);
        assert!((r.objective - 2f64.ln()).abs() < 1e-6);
    }

    #[test]
    fn contradictory_bounds_are_infeasible() {
        let mut p = LmiProblem::new();
        let x = p.symmetric("X", 2);
        p.constrain(
            "neg",
            x.expr() + AffineMatrix::identity(2),
            Sense::Negative,
            0.0,
        )
        .unwrap();
        p.constrain(
            "pos",
            x.expr() - AffineMatrix::identity(2),
            Sense::Positive,
            0.0,
        )
        .unwrap();
        let r = solve(&p, 1e-8);
        assert_eq!(r.status, SolveStatus::Infeasible);
    }

    #[test]
    fn diagonal_maxdet_product() {
        let caps = [0.5, 3.0];
        let mut p = LmiProblem::new();
        let y = p.symmetric("Y", 2);
        for (i, c) in caps.iter().enumerate() {
            let mut e = DMatrix::zeros(1, 2);
            e[(0, i)] = 1.0;
            let yi = y.expr().lmul(&e).rmul(&e.transpose());
            p.constrain(
                &format!("cap{i}"),
                yi - AffineMatrix::identity(1) * *c,
                Sense::Negative,
                0.0,
            )
            .unwrap();
        }
        p.maximize_log_det(y).unwrap();
        let r = solve(&p, 1e-10);
        assert!(r.is_optimal());
        let det = r.value(y).determinant();
        assert!(
            (det - caps.iter().product::<f64>()).abs() < 1e-6,
            "det {det}"
        );
    }

    #[test]
    fn minimize_scalar() {
        let mut p = LmiProblem::new();
        let s = p.scalar("s");
        // [[s, 1], [1, 1]] ⪰ 0  ⇒  s ≥ 1
        let e = AffineMatrix::blocks(&[
            vec![s.expr(), AffineMatrix::identity(1)],
            vec![AffineMatrix::identity(1), AffineMatrix::identity(1)],
        ]);
        p.constrain("schur", e, Sense::Positive, 0.0).unwrap();
        p.minimize(s).unwrap();
        let r = solve(&p, 1e-9);
        assert!(r.is_optimal());
        assert!((r.objective - 1.0).abs() < 1e-7);
    }

    #[test]
    fn malformed_constraints() {
        let mut p = LmiProblem::new();
        let g = p.matrix("G", 1, 2);
        assert!(p.constrain("rect", g.expr(), Sense::Negative, 0.0).is_err());
        let sq = p.matrix("S", 2, 2);
        assert!(p
            .constrain("asym", sq.expr(), Sense::Negative, 0.0)
            .is_err());
        let mut other = LmiProblem::new();
        let _ = other.symmetric("a", 3);
        let foreign = other.symmetric("b", 2);
        assert!(p
            .constrain("foreign", foreign.expr(), Sense::Negative, 0.0)
            .is_err());
        assert!(p.minimize(g).is_err());
    }

    #[test]
    fn definiteness_checks() {
        let neg = -DMatrix::<f64>::identity(3, 3);
        assert_eq!(check_definite(&neg, Sense::Negative, 0.0), (true, -1.0));
        let zero = DMatrix::<f64>::zeros(2, 2);
        assert_eq!(check_definite(&zero, Sense::Negative, 1e-9), (false, 0.0));
        let (ok, lam) = check_definite(&DMatrix::identity(2, 2), Sense::Positive, 1e-9);
        assert!(ok);
        assert_eq!(lam, 1.0);
    }

    #[test]
    fn dump_lists_blocks() {
        let mut p = LmiProblem::new();
        let x = p.symmetric("X", 2);
        p.constrain("pd", x.expr(), Sense::Positive, 1e-6).unwrap();
        p.maximize_log_det(x).unwrap();
        let text = p.dump();
        assert!(text.contains("constraint pd"));
        assert!(text.contains("maximize logdet X"));
        assert_eq!(text.matches("block ").count(), 4);
    }

    #[test]
    fn verdict_round_trip() {
        let mut p = LmiProblem::new();
        let x = p.symmetric("X", 2);
        let a = DMatrix::from_row_slice(2, 2, &[-1.0, 2.0, 0.0, -3.0]);
        // Lyapunov: AᵀX + XA ⪯ −margin, X ⪰ I
        p.constrain(
            "lyap",
            x.expr().lmul(&a.transpose()).he(),
            Sense::Negative,
            1e-3,
        )
        .unwrap();
        p.constrain(
            "pd",
            x.expr() - AffineMatrix::identity(2),
            Sense::Positive,
            0.0,
        )
        .unwrap();
        let r = solve(&p, 1e-8);
        assert!(r.is_optimal());
        for c in p.constraints() {
            let m = c.expr.evaluate(&r.x);
            let shifted = match c.sense {
                Sense::Negative => &m + DMatrix::identity(2, 2) * c.margin,
                Sense::Positive => &m - DMatrix::identity(2, 2) * c.margin,
            };
            let (ok, _) = check_definite(&shifted, c.sense, -10.0 * 1e-8);
            assert!(ok, "{}", c.name);
        }
    }
}
