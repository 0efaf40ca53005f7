//! Log-barrier path-following solver for small dense maxdet problems
//!
//! ```text
//! minimize   cᵀx − Σ_i log det L_i(x)
//! subject to G_j(x) ≻ 0,  ‖x‖ < R
//! ```
//!
//! with every `L_i`, `G_j` affine and symmetric. A phase-I problem on
//! `G_j(x) + sI ≻ 0` produces a strictly feasible start.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::linalg::add_scaled;

use super::{ConicBackend, LmiBlock, SolveStatus, StandardForm};

/// Result handed back by a backend.
#[derive(Debug, Clone)]
pub struct BackendSolution {
    pub status: SolveStatus,
    pub x: DVector<f64>,
    pub iterations: usize,
}

#[derive(Debug, Clone)]
pub struct BarrierSolver {
    /// Radius of the ball every iterate is kept inside.
    pub radius: f64,
    pub t_init: f64,
    pub t_growth: f64,
    pub max_newton_per_center: usize,
    pub max_outer: usize,
}

impl Default for BarrierSolver {
    fn default() -> Self {
        Self {
            radius: 1e6,
            t_init: 1.0,
            t_growth: 20.0,
            max_newton_per_center: 200,
            max_outer: 60,
        }
    }
}

struct Barrier<'a> {
    blocks: Vec<&'a LmiBlock>,
    /// Extra scalar `s` added to every constraint block as `s·I` (phase I).
    slack_index: Option<usize>,
    logdet: &'a [LmiBlock],
    c: DVector<f64>,
    ball_dims: usize,
    radius: f64,
}

enum CenterError {
    Stalled,
    NonFinite,
}

fn eval_block(block: &LmiBlock, x: &DVector<f64>, slack: Option<f64>) -> DMatrix<f64> {
    let mut g = block.constant.clone();
    for (k, a) in &block.coeffs {
        add_scaled(&mut g, x[*k], a);
    }
    if let Some(s) = slack {
        for i in 0..g.nrows() {
            g[(i, i)] += s;
        }
    }
    g
}

fn log_det_chol(ch: &Cholesky<f64, Dyn>) -> f64 {
    ch.l_dirty().diagonal().iter().map(|d| 2.0 * d.ln()).sum()
}

impl Barrier<'_> {
    fn dim(&self) -> usize {
        self.c.len()
    }

    fn slack(&self, x: &DVector<f64>) -> Option<f64> {
        self.slack_index.map(|i| x[i])
    }

    fn ball_gap(&self, x: &DVector<f64>) -> f64 {
        let r2: f64 = x.rows(0, self.ball_dims).norm_squared();
        self.radius * self.radius - r2
    }

    /// Barrier value at `x`, or `None` outside the domain.
    fn value(&self, x: &DVector<f64>, t: f64) -> Option<f64> {
        let gap = self.ball_gap(x);
        if !(gap > 0.0) {
            return None;
        }
        let mut f = t * self.c.dot(x) - gap.ln();
        let s = self.slack(x);
        for b in &self.blocks {
            let ch = Cholesky::new(eval_block(b, x, s))?;
            f -= log_det_chol(&ch);
        }
        for b in self.logdet {
            let ch = Cholesky::new(eval_block(b, x, None))?;
            f -= t * log_det_chol(&ch);
        }
        f.is_finite().then_some(f)
    }

    fn accumulate(
        block: &LmiBlock,
        g: DMatrix<f64>,
        weight: f64,
        slack_index: Option<usize>,
        grad: &mut DVector<f64>,
        hess: &mut DMatrix<f64>,
    ) -> Option<()> {
        let ch = Cholesky::new(g)?;
        let l = ch.l();
        let n = l.nrows();
        let mut scaled: Vec<(usize, DMatrix<f64>)> = Vec::with_capacity(block.coeffs.len() + 1);
        let whiten = |a: &DMatrix<f64>| -> Option<DMatrix<f64>> {
            let m = l.solve_lower_triangular(a)?;
            l.solve_lower_triangular(&m.transpose())
        };
        for (k, a) in &block.coeffs {
            scaled.push((*k, whiten(a)?));
        }
        if let Some(si) = slack_index {
            scaled.push((si, whiten(&DMatrix::identity(n, n))?));
        }
        for (i, (ki, si)) in scaled.iter().enumerate() {
            grad[*ki] -= weight * si.trace();
            for (kj, sj) in scaled.iter().skip(i) {
                let v = weight * si.dot(sj);
                hess[(*ki, *kj)] += v;
                if ki != kj {
                    hess[(*kj, *ki)] += v;
                }
            }
        }
        Some(())
    }

    fn derivatives(&self, x: &DVector<f64>, t: f64) -> Option<(DVector<f64>, DMatrix<f64>)> {
        let m = self.dim();
        let mut grad = &self.c * t;
        let mut hess = DMatrix::zeros(m, m);
        let s = self.slack(x);
        for b in &self.blocks {
            Self::accumulate(
                b,
                eval_block(b, x, s),
                1.0,
                self.slack_index,
                &mut grad,
                &mut hess,
            )?;
        }
        for b in self.logdet {
            Self::accumulate(b, eval_block(b, x, None), t, None, &mut grad, &mut hess)?;
        }
        let gap = self.ball_gap(x);
        for i in 0..self.ball_dims {
            grad[i] += 2.0 * x[i] / gap;
            hess[(i, i)] += 2.0 / gap;
            for j in 0..self.ball_dims {
                hess[(i, j)] += 4.0 * x[i] * x[j] / (gap * gap);
            }
        }
        Some((grad, hess))
    }

    /// Damped Newton minimization of the barrier at fixed `t`.
    fn center(
        &self,
        x: &mut DVector<f64>,
        t: f64,
        max_iter: usize,
        mut stop: impl FnMut(&DVector<f64>) -> bool,
    ) -> Result<usize, CenterError> {
        for it in 0..max_iter {
            let (grad, hess) = self.derivatives(x, t).ok_or(CenterError::NonFinite)?;
            let step = newton_step(&hess, &grad).ok_or(CenterError::NonFinite)?;
            let decrement = -grad.dot(&step);
            if !decrement.is_finite() {
                return Err(CenterError::NonFinite);
            }
            if decrement < 1e-10 {
                return Ok(it);
            }
            let f0 = self.value(x, t).ok_or(CenterError::NonFinite)?;
            let mut alpha = 1.0;
            loop {
                let trial = &*x + &step * alpha;
                if let Some(f) = self.value(&trial, t) {
                    if f <= f0 - 0.25 * alpha * decrement {
                        *x = trial;
                        break;
                    }
                }
                alpha *= 0.5;
                if alpha < 1e-16 {
                    // No descent left at working precision.
                    return if decrement < 1e-6 {
                        Ok(it)
                    } else {
                        Err(CenterError::Stalled)
                    };
                }
            }
            if stop(x) {
                return Ok(it + 1);
            }
        }
        Err(CenterError::Stalled)
    }
}

fn newton_step(hess: &DMatrix<f64>, grad: &DVector<f64>) -> Option<DVector<f64>> {
    if let Some(ch) = Cholesky::new(hess.clone()) {
        let s = ch.solve(grad);
        if s.iter().all(|v| v.is_finite()) {
            return Some(-s);
        }
    }
    let scale = hess.diagonal().amax().max(1.0);
    let mut reg = 1e-14 * scale;
    for _ in 0..12 {
        let mut h = hess.clone();
        for i in 0..h.nrows() {
            h[(i, i)] += reg;
        }
        if let Some(ch) = Cholesky::new(h) {
            return Some(-ch.solve(grad));
        }
        reg *= 100.0;
    }
    None
}

fn lambda_min(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return f64::INFINITY;
    }
    let sym = (m + m.transpose()) * 0.5;
    sym.symmetric_eigenvalues().min()
}

impl BarrierSolver {
    fn total_dim(problem: &StandardForm) -> f64 {
        problem.blocks.iter().map(|b| b.dim()).sum::<usize>() as f64 + 1.0
    }

    /// Phase I: returns a strictly feasible point, `Ok(None)` when the
    /// constraints have no interior.
    fn phase_one(
        &self,
        problem: &StandardForm,
        tol: f64,
        iterations: &mut usize,
    ) -> Result<Option<DVector<f64>>, SolveStatus> {
        let m = problem.n_vars;
        let x0 = DVector::zeros(m);
        let all: Vec<&LmiBlock> = problem.blocks.iter().chain(problem.logdet.iter()).collect();
        let worst = all
            .iter()
            .map(|b| -lambda_min(&eval_block(b, &x0, None)))
            .fold(f64::NEG_INFINITY, f64::max);
        if all.is_empty() || worst < 0.0 {
            return Ok(Some(x0));
        }

        let mut c = DVector::zeros(m + 1);
        c[m] = 1.0;
        let barrier = Barrier {
            blocks: all,
            slack_index: Some(m),
            logdet: &[],
            c,
            ball_dims: m,
            radius: self.radius,
        };
        let dim = barrier.blocks.iter().map(|b| b.dim()).sum::<usize>() as f64 + 1.0;
        let mut x = DVector::zeros(m + 1);
        x[m] = worst.max(0.0) + 1.0;
        let mut t = self.t_init;
        for _ in 0..self.max_outer {
            match barrier.center(&mut x, t, self.max_newton_per_center, |x| x[m] < -1e-3) {
                Ok(it) => *iterations += it,
                Err(CenterError::NonFinite) => return Err(SolveStatus::NumericalFailure),
                Err(CenterError::Stalled) => {}
            }
            let s = x[m];
            if s < 0.0 {
                return Ok(Some(x.rows(0, m).into_owned()));
            }
            let gap = dim / t;
            if s - gap > 0.0 || gap < tol * 1e-2 {
                return Ok(None);
            }
            t *= self.t_growth;
        }
        Err(SolveStatus::NumericalFailure)
    }
}

impl ConicBackend for BarrierSolver {
    fn solve(&self, problem: &StandardForm, tol: f64) -> BackendSolution {
        let mut iterations = 0;
        let x0 = match self.phase_one(problem, tol, &mut iterations) {
            Ok(Some(x)) => x,
            Ok(None) => {
                return BackendSolution {
                    status: SolveStatus::Infeasible,
                    x: DVector::zeros(problem.n_vars),
                    iterations,
                }
            }
            Err(status) => {
                return BackendSolution {
                    status,
                    x: DVector::zeros(problem.n_vars),
                    iterations,
                }
            }
        };

        let barrier = Barrier {
            blocks: problem.blocks.iter().collect(),
            slack_index: None,
            logdet: &problem.logdet,
            c: problem.c.clone(),
            ball_dims: problem.n_vars,
            radius: self.radius,
        };
        let dim = Self::total_dim(problem);
        let mut x = x0;
        let mut t = self.t_init;
        let mut status = SolveStatus::NumericalFailure;
        for _ in 0..self.max_outer {
            match barrier.center(&mut x, t, self.max_newton_per_center, |_| false) {
                Ok(it) => iterations += it,
                Err(CenterError::Stalled) => {
                    // Accept a stalled center once the gap bound is already tight.
                    if dim / t < tol * 1e2 {
                        status = SolveStatus::Optimal;
                    }
                    break;
                }
                Err(CenterError::NonFinite) => break,
            }
            if dim / t < tol {
                status = SolveStatus::Optimal;
                break;
            }
            t *= self.t_growth;
        }
        BackendSolution {
            status,
            x,
            iterations,
        }
    }
}
