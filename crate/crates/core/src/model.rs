//! Uncertain SISO plant, safety constraints and the structured matrices of
//! the closed loop formed with a full-order dynamic output feedback
//! controller.
//!
//! The plant is held in observer-canonical form
//!
//! ```text
//! x_p' = A0 x_p + b_y y + b_u u,    y = c0 x_p + w
//! ```
//!
//! with `b_y = b̄_y + Σ δ_i θ_i^y b̃_i`, `b_u = b̄_u + Σ δ_i θ_i^u b̃_i`
//! and `|δ_i| ≤ 1`.

use nalgebra::{DMatrix, DVector, RowDVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest number of uncertainty directions whose sign vertices are enumerated.
pub const MAX_UNCERTAINTY_DIRS: usize = 20;

/// One direction of parametric uncertainty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyDirection {
    pub b_tilde: Vec<f64>,
    pub theta_y: f64,
    pub theta_u: f64,
}

/// SISO plant whose transfer-function coefficients range over a box.
///
/// `alpha_bar` and `beta_bar` are listed in descending powers of `s`
/// (`α₁ … αₙ`, `β₁ … βₙ`); the reversal into `b̄_y`/`b̄_u` is internal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertainPlant {
    pub n: usize,
    pub alpha_bar: Vec<f64>,
    pub beta_bar: Vec<f64>,
    #[serde(default)]
    pub uncertainty: Vec<UncertaintyDirection>,
    pub w_bar: f64,
}

impl UncertainPlant {
    pub fn new(
        alpha_bar: Vec<f64>,
        beta_bar: Vec<f64>,
        uncertainty: Vec<UncertaintyDirection>,
        w_bar: f64,
    ) -> Result<Self> {
        let plant = Self {
            n: alpha_bar.len(),
            alpha_bar,
            beta_bar,
            uncertainty,
            w_bar,
        };
        plant.validate()?;
        Ok(plant)
    }

    /// Unit-mass spring with stiffness `k = k̂ + δ k̄`, output the spring
    /// position, input the applied force.
    pub fn mass_spring(mass: f64, k_hat: f64, k_bar: f64, w_bar: f64) -> Result<Self> {
        if !(mass > 0.0) {
            return Err(Error::InvalidModel("mass must be positive".into()));
        }
        Self::new(
            vec![0.0, k_hat / mass],
            vec![0.0, k_hat / mass],
            vec![UncertaintyDirection {
                b_tilde: vec![k_bar / mass, 0.0],
                theta_y: -1.0,
                theta_u: 1.0,
            }],
            w_bar,
        )
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n;
        if n == 0 {
            return Err(Error::InvalidModel("plant order must be at least 1".into()));
        }
        if self.alpha_bar.len() != n || self.beta_bar.len() != n {
            return Err(Error::InvalidModel(format!(
                "expected {n} alpha and beta coefficients, got {} and {}",
                self.alpha_bar.len(),
                self.beta_bar.len()
            )));
        }
        for (i, dir) in self.uncertainty.iter().enumerate() {
            if dir.b_tilde.len() != n {
                return Err(Error::InvalidModel(format!(
                    "uncertainty direction {i} has b_tilde of length {}, expected {n}",
                    dir.b_tilde.len()
                )));
            }
            let finite = dir.b_tilde.iter().all(|v| v.is_finite())
                && dir.theta_y.is_finite()
                && dir.theta_u.is_finite();
            if !finite {
                return Err(Error::InvalidModel(format!(
                    "uncertainty direction {i} has non-finite entries"
                )));
            }
        }
        if !self
            .alpha_bar
            .iter()
            .chain(&self.beta_bar)
            .all(|v| v.is_finite())
        {
            return Err(Error::InvalidModel("non-finite plant coefficient".into()));
        }
        if !(self.w_bar >= 0.0) || !self.w_bar.is_finite() {
            return Err(Error::InvalidModel(
                "w_bar must be finite and nonnegative".into(),
            ));
        }
        Ok(())
    }

    pub fn n_p(&self) -> usize {
        self.uncertainty.len()
    }

    /// `b̄_y = [−ᾱₙ, …, −ᾱ₁]ᵀ`
    pub fn b_y_nominal(&self) -> DVector<f64> {
        DVector::from_iterator(self.n, self.alpha_bar.iter().rev().map(|a| -a))
    }

    /// `b̄_u = [β̄ₙ, …, β̄₁]ᵀ`
    pub fn b_u_nominal(&self) -> DVector<f64> {
        DVector::from_iterator(self.n, self.beta_bar.iter().rev().copied())
    }

    /// Plant parameters `(b_y, b_u)` at an uncertainty value `δ`.
    pub fn parameters_at(&self, delta: &[f64]) -> (DVector<f64>, DVector<f64>) {
        assert_eq!(delta.len(), self.n_p(), "delta length must equal n_p");
        let mut b_y = self.b_y_nominal();
        let mut b_u = self.b_u_nominal();
        for (d, dir) in delta.iter().zip(&self.uncertainty) {
            let b = DVector::from_column_slice(&dir.b_tilde);
            b_y.axpy(d * dir.theta_y, &b, 1.0);
            b_u.axpy(d * dir.theta_u, &b, 1.0);
        }
        (b_y, b_u)
    }
}

/// State and input limits `|f_iᵀ x_p| ≤ 1`, `|u| ≤ ū`, plus the residual level `ε`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SafetySpec {
    pub f_rows: Vec<Vec<f64>>,
    pub u_bar: f64,
    pub epsilon: f64,
}

impl SafetySpec {
    pub fn new(f_rows: Vec<Vec<f64>>, u_bar: f64, epsilon: f64) -> Result<Self> {
        let spec = Self {
            f_rows,
            u_bar,
            epsilon,
        };
        spec.validate(None)?;
        Ok(spec)
    }

    /// Box limits `|x_i| ≤ limits[i]` expressed as coordinate normals.
    pub fn from_box(limits: &[f64], u_bar: f64, epsilon: f64) -> Result<Self> {
        let n = limits.len();
        let rows = limits
            .iter()
            .enumerate()
            .map(|(i, l)| {
                let mut row = vec![0.0; n];
                row[i] = 1.0 / l;
                row
            })
            .collect();
        Self::new(rows, u_bar, epsilon)
    }

    pub fn validate(&self, n: Option<usize>) -> Result<()> {
        for (i, f) in self.f_rows.iter().enumerate() {
            if let Some(n) = n {
                if f.len() != n {
                    return Err(Error::InvalidModel(format!(
                        "constraint row {i} has length {}, expected {n}",
                        f.len()
                    )));
                }
            }
            if !f.iter().all(|v| v.is_finite()) || f.iter().all(|v| *v == 0.0) {
                return Err(Error::InvalidModel(format!(
                    "constraint row {i} must be finite and nonzero"
                )));
            }
        }
        if !(self.u_bar > 0.0) {
            return Err(Error::InvalidModel("u_bar must be positive".into()));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::InvalidModel("epsilon must lie in (0, 1)".into()));
        }
        Ok(())
    }

    pub fn f_vectors(&self) -> Vec<DVector<f64>> {
        self.f_rows
            .iter()
            .map(|f| DVector::from_column_slice(f))
            .collect()
    }
}

/// Structured matrices of the nominal realization and its uncertainty channel.
#[derive(Debug, Clone)]
pub struct Realization {
    pub a0: DMatrix<f64>,
    pub c0: RowDVector<f64>,
    pub b_y: DVector<f64>,
    pub b_u: DVector<f64>,
    /// `Â_p = A0 + b̄_y c0`
    pub a_hat: DMatrix<f64>,
    /// `[b̃₁ … b̃_{n_p}]`, n × n_p
    pub b_tilde: DMatrix<f64>,
    pub theta_y: RowDVector<f64>,
    pub theta_u: RowDVector<f64>,
    pub s_p: DMatrix<f64>,
    pub s_k: DMatrix<f64>,
}

impl Realization {
    pub fn n(&self) -> usize {
        self.a0.nrows()
    }

    pub fn n_p(&self) -> usize {
        self.b_tilde.ncols()
    }
}

/// Shift matrix with ones on the subdiagonal.
pub fn a0_matrix(n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, j| if i == j + 1 { 1.0 } else { 0.0 })
}

/// `c0 = [0 … 0 1]`
pub fn c0_row(n: usize) -> RowDVector<f64> {
    let mut c = RowDVector::zeros(n);
    c[n - 1] = 1.0;
    c
}

pub fn canonical_realization(plant: &UncertainPlant) -> Result<Realization> {
    plant.validate()?;
    let n = plant.n;
    let n_p = plant.n_p();
    let a0 = a0_matrix(n);
    let c0 = c0_row(n);
    let b_y = plant.b_y_nominal();
    let b_u = plant.b_u_nominal();
    let a_hat = &a0 + &b_y * &c0;
    let b_tilde = DMatrix::from_fn(n, n_p, |i, j| plant.uncertainty[j].b_tilde[i]);
    let theta_y = RowDVector::from_iterator(n_p, plant.uncertainty.iter().map(|d| d.theta_y));
    let theta_u = RowDVector::from_iterator(n_p, plant.uncertainty.iter().map(|d| d.theta_u));

    let mut s_p = DMatrix::zeros(n, 2 * n);
    let mut s_k = DMatrix::zeros(n, 2 * n);
    for i in 0..n {
        s_p[(i, i)] = 1.0;
        s_k[(i, n + i)] = 1.0;
    }

    Ok(Realization {
        a0,
        c0,
        b_y,
        b_u,
        a_hat,
        b_tilde,
        theta_y,
        theta_u,
        s_p,
        s_k,
    })
}

/// Full-order dynamic output feedback controller `x_k' = A_k x_k + b_k y`, `u = c_k x_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Controller {
    pub a_k: DMatrix<f64>,
    pub b_k: DVector<f64>,
    pub c_k: RowDVector<f64>,
}

impl Controller {
    pub fn zeros(n: usize) -> Self {
        Self {
            a_k: DMatrix::zeros(n, n),
            b_k: DVector::zeros(n),
            c_k: RowDVector::zeros(n),
        }
    }

    pub fn n(&self) -> usize {
        self.a_k.nrows()
    }
}

/// Closed-loop data `(A_CL, B_wp, C_q, D_wp)` with exogenous input `[w; p]`
/// and uncertainty channel `p_i = δ_i q_i`.
#[derive(Debug, Clone)]
pub struct ClosedLoop {
    pub a_cl: DMatrix<f64>,
    pub b_wp: DMatrix<f64>,
    pub c_q: DMatrix<f64>,
    pub d_wp: DMatrix<f64>,
}

pub fn closed_loop_matrices(real: &Realization, ctrl: &Controller) -> Result<ClosedLoop> {
    let n = real.n();
    let n_p = real.n_p();
    if ctrl.a_k.shape() != (n, n) || ctrl.b_k.len() != n || ctrl.c_k.len() != n {
        return Err(Error::InvalidModel(format!(
            "controller dimensions do not match plant order {n}"
        )));
    }

    let mut a_cl = DMatrix::zeros(2 * n, 2 * n);
    a_cl.view_mut((0, 0), (n, n)).copy_from(&real.a_hat);
    a_cl.view_mut((0, n), (n, n))
        .copy_from(&(&real.b_u * &ctrl.c_k));
    a_cl.view_mut((n, 0), (n, n))
        .copy_from(&(&ctrl.b_k * &real.c0));
    a_cl.view_mut((n, n), (n, n)).copy_from(&ctrl.a_k);

    let mut b_wp = DMatrix::zeros(2 * n, 1 + n_p);
    b_wp.view_mut((0, 0), (n, 1)).copy_from(&real.b_y);
    b_wp.view_mut((0, 1), (n, n_p)).copy_from(&real.b_tilde);
    b_wp.view_mut((n, 0), (n, 1)).copy_from(&ctrl.b_k);

    let mut c_q = DMatrix::zeros(n_p, 2 * n);
    c_q.view_mut((0, 0), (n_p, n))
        .copy_from(&(real.theta_y.transpose() * &real.c0));
    c_q.view_mut((0, n), (n_p, n))
        .copy_from(&(real.theta_u.transpose() * &ctrl.c_k));

    let mut d_wp = DMatrix::zeros(n_p, 1 + n_p);
    d_wp.view_mut((0, 0), (n_p, 1))
        .copy_from(&real.theta_y.transpose());

    Ok(ClosedLoop {
        a_cl,
        b_wp,
        c_q,
        d_wp,
    })
}

/// One extreme point of the uncertainty box.
#[derive(Debug, Clone, PartialEq)]
pub struct Vertex {
    pub signs: Vec<f64>,
    pub b_y: DVector<f64>,
    pub b_u: DVector<f64>,
}

/// All `δ ∈ {−1, +1}^{n_p}` in lexicographic order, first coordinate most
/// significant and `−1` before `+1`.
pub fn sign_patterns(n_p: usize) -> Result<Vec<Vec<f64>>> {
    if n_p > MAX_UNCERTAINTY_DIRS {
        return Err(Error::EnumerationLimit {
            n_p,
            limit: MAX_UNCERTAINTY_DIRS,
        });
    }
    Ok((0..1usize << n_p)
        .map(|code| {
            (0..n_p)
                .map(|i| {
                    if code >> (n_p - 1 - i) & 1 == 1 {
                        1.0
                    } else {
                        -1.0
                    }
                })
                .collect()
        })
        .collect())
}

pub fn vertex_parameters(plant: &UncertainPlant) -> Result<Vec<Vertex>> {
    plant.validate()?;
    Ok(sign_patterns(plant.n_p())?
        .into_iter()
        .map(|signs| {
            let (b_y, b_u) = plant.parameters_at(&signs);
            Vertex { signs, b_y, b_u }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plant(alpha: Vec<f64>, beta: Vec<f64>) -> UncertainPlant {
        UncertainPlant::new(alpha, beta, vec![], 0.0).unwrap()
    }

    #[test]
    fn mass_spring_realization() {
        let p = UncertainPlant::mass_spring(1.0, 10.0, 1.0, 0.05).unwrap();
        let r = canonical_realization(&p).unwrap();
        assert_eq!(r.b_y, DVector::from_vec(vec![-10.0, 0.0]));
        assert_eq!(r.b_u, DVector::from_vec(vec![10.0, 0.0]));
        assert_eq!(r.a0, DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 0.0]));
        assert_eq!(r.c0, RowDVector::from_vec(vec![0.0, 1.0]));
        assert_eq!(
            r.a_hat,
            DMatrix::from_row_slice(2, 2, &[0.0, -10.0, 1.0, 0.0])
        );
    }

    #[test]
    fn first_order_realization() {
        let r = canonical_realization(&plant(vec![3.0], vec![7.0])).unwrap();
        assert_eq!(r.a0, DMatrix::zeros(1, 1));
        assert_eq!(r.c0[0], 1.0);
        assert_eq!(r.b_y[0], -3.0);
        assert_eq!(r.b_u[0], 7.0);
    }

    #[test]
    fn third_order_reversal() {
        let p = plant(vec![1.0, 2.0, 3.0], vec![0.0, 0.0, 1.0]);
        assert_eq!(p.b_y_nominal(), DVector::from_vec(vec![-3.0, -2.0, -1.0]));
        let r = canonical_realization(&p).unwrap();
        assert_eq!(r.a0[(1, 0)], 1.0);
        assert_eq!(r.a0[(2, 1)], 1.0);
        assert_eq!(r.a0.sum(), 2.0);
        assert_eq!(r.s_p.shape(), (3, 6));
        assert_eq!(r.s_k[(2, 5)], 1.0);
    }

    #[test]
    fn bad_direction_is_rejected() {
        let err = UncertainPlant::new(
            vec![1.0, 2.0],
            vec![0.0, 1.0],
            vec![UncertaintyDirection {
                b_tilde: vec![1.0],
                theta_y: 1.0,
                theta_u: 0.0,
            }],
            0.1,
        );
        assert!(matches!(err, Err(Error::InvalidModel(_))));
    }

    #[test]
    fn zero_controller_decouples() {
        let p = UncertainPlant::mass_spring(1.0, 10.0, 1.0, 0.05).unwrap();
        let r = canonical_realization(&p).unwrap();
        let cl = closed_loop_matrices(&r, &Controller::zeros(2)).unwrap();
        let mut expected = DMatrix::zeros(4, 4);
        expected.view_mut((0, 0), (2, 2)).copy_from(&r.a_hat);
        assert_eq!(cl.a_cl, expected);
        assert_eq!(cl.c_q.shape(), (1, 4));
        assert_eq!(cl.d_wp, DMatrix::from_row_slice(1, 2, &[-1.0, 0.0]));
    }

    #[test]
    fn no_uncertainty_channel() {
        let r = canonical_realization(&plant(vec![1.0, 2.0], vec![0.0, 1.0])).unwrap();
        let ctrl = Controller {
            a_k: DMatrix::identity(2, 2),
            b_k: DVector::from_vec(vec![3.0, 4.0]),
            c_k: RowDVector::from_vec(vec![1.0, 1.0]),
        };
        let cl = closed_loop_matrices(&r, &ctrl).unwrap();
        assert_eq!(cl.c_q.shape(), (0, 4));
        assert_eq!(cl.d_wp.shape(), (0, 1));
        assert_eq!(
            cl.b_wp,
            DMatrix::from_column_slice(4, 1, &[-2.0, -1.0, 3.0, 4.0])
        );
    }

    #[test]
    fn controller_dimension_mismatch() {
        let r = canonical_realization(&plant(vec![1.0, 2.0], vec![0.0, 1.0])).unwrap();
        assert!(closed_loop_matrices(&r, &Controller::zeros(3)).is_err());
    }

    #[test]
    fn mass_spring_vertices() {
        let p = UncertainPlant::mass_spring(1.0, 10.0, 1.0, 0.05).unwrap();
        let v = vertex_parameters(&p).unwrap();
        assert_eq!(v.len(), 2);
        assert_eq!(v[0].b_y, DVector::from_vec(vec![-9.0, 0.0]));
        assert_eq!(v[0].b_u, DVector::from_vec(vec![9.0, 0.0]));
        assert_eq!(v[1].b_y, DVector::from_vec(vec![-11.0, 0.0]));
        assert_eq!(v[1].b_u, DVector::from_vec(vec![11.0, 0.0]));
    }

    #[test]
    fn vertex_order_and_limits() {
        assert_eq!(sign_patterns(0).unwrap(), vec![Vec::<f64>::new()]);
        assert_eq!(
            sign_patterns(2).unwrap(),
            vec![
                vec![-1.0, -1.0],
                vec![-1.0, 1.0],
                vec![1.0, -1.0],
                vec![1.0, 1.0]
            ]
        );
        assert!(matches!(
            sign_patterns(21),
            Err(Error::EnumerationLimit { n_p: 21, .. })
        ));
    }

    #[test]
    fn safety_spec_validation() {
        assert!(SafetySpec::new(vec![vec![0.5, 0.0]], 10.0, 0.0).is_err());
        assert!(SafetySpec::new(vec![vec![0.0, 0.0]], 10.0, 0.5).is_err());
        assert!(SafetySpec::new(vec![vec![0.5, 0.0]], 0.0, 0.5).is_err());
        let s = SafetySpec::from_box(&[2.0, 2.0], 10.0, 0.5).unwrap();
        assert_eq!(s.f_rows, vec![vec![0.5, 0.0], vec![0.0, 0.5]]);
    }
}
