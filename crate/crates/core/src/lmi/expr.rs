use std::collections::BTreeMap;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{DMatrix, DVector};

use crate::linalg::add_scaled;

/// Shape of a decision variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarShape {
    Symmetric(usize),
    Matrix(usize, usize),
    Scalar,
}

impl VarShape {
    pub fn scalar_count(self) -> usize {
        match self {
            VarShape::Symmetric(n) => n * (n + 1) / 2,
            VarShape::Matrix(r, c) => r * c,
            VarShape::Scalar => 1,
        }
    }

    pub fn dims(self) -> (usize, usize) {
        match self {
            VarShape::Symmetric(n) => (n, n),
            VarShape::Matrix(r, c) => (r, c),
            VarShape::Scalar => (1, 1),
        }
    }
}

/// Handle to a decision variable occupying a contiguous range of scalar slots.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var {
    pub(crate) id: usize,
    pub(crate) offset: usize,
    pub(crate) shape: VarShape,
}

impl Var {
    pub fn shape(&self) -> VarShape {
        self.shape
    }

    pub fn id(&self) -> usize {
        self.id
    }

    /// The variable as an affine matrix expression.
    pub fn expr(&self) -> AffineMatrix {
        let (r, c) = self.shape.dims();
        let mut terms = BTreeMap::new();
        let mut k = self.offset;
        match self.shape {
            VarShape::Symmetric(n) => {
                for j in 0..n {
                    for i in 0..=j {
                        let mut m = DMatrix::zeros(n, n);
                        m[(i, j)] = 1.0;
                        m[(j, i)] = 1.0;
                        terms.insert(k, m);
                        k += 1;
                    }
                }
            }
            VarShape::Matrix(_, _) | VarShape::Scalar => {
                for j in 0..c {
                    for i in 0..r {
                        let mut m = DMatrix::zeros(r, c);
                        m[(i, j)] = 1.0;
                        terms.insert(k, m);
                        k += 1;
                    }
                }
            }
        }
        AffineMatrix {
            constant: DMatrix::zeros(r, c),
            terms,
        }
    }

    /// Writes `value` into the packed scalar vector.
    pub(crate) fn pack_into(&self, value: &DMatrix<f64>, x: &mut DVector<f64>) {
        assert_eq!(value.shape(), self.shape.dims(), "value shape mismatch");
        let mut k = self.offset;
        match self.shape {
            VarShape::Symmetric(n) => {
                for j in 0..n {
                    for i in 0..=j {
                        x[k] = 0.5 * (value[(i, j)] + value[(j, i)]);
                        k += 1;
                    }
                }
            }
            _ => {
                for v in value.iter() {
                    x[k] = *v;
                    k += 1;
                }
            }
        }
    }

    /// Reads the variable's value out of a packed scalar vector.
    pub fn unpack(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let (r, c) = self.shape.dims();
        let mut k = self.offset;
        match self.shape {
            VarShape::Symmetric(n) => {
                let mut m = DMatrix::zeros(n, n);
                for j in 0..n {
                    for i in 0..=j {
                        m[(i, j)] = x[k];
                        m[(j, i)] = x[k];
                        k += 1;
                    }
                }
                m
            }
            _ => DMatrix::from_column_slice(r, c, &x.as_slice()[k..k + r * c]),
        }
    }
}

/// Matrix-valued affine function `C + Σ_k x_k A_k` of the packed decision vector.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineMatrix {
    constant: DMatrix<f64>,
    terms: BTreeMap<usize, DMatrix<f64>>,
}

impl AffineMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::constant(DMatrix::zeros(rows, cols))
    }

    pub fn constant(m: DMatrix<f64>) -> Self {
        Self {
            constant: m,
            terms: BTreeMap::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::constant(DMatrix::identity(n, n))
    }

    pub fn shape(&self) -> (usize, usize) {
        self.constant.shape()
    }

    pub fn nrows(&self) -> usize {
        self.constant.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.constant.ncols()
    }

    pub fn constant_part(&self) -> &DMatrix<f64> {
        &self.constant
    }

    pub fn terms(&self) -> impl Iterator<Item = (usize, &DMatrix<f64>)> {
        self.terms.iter().map(|(k, m)| (*k, m))
    }

    fn map(&self, f: impl Fn(&DMatrix<f64>) -> DMatrix<f64>) -> Self {
        Self {
            constant: f(&self.constant),
            terms: self.terms.iter().map(|(k, m)| (*k, f(m))).collect(),
        }
    }

    /// `L · self`
    pub fn lmul(&self, left: &DMatrix<f64>) -> Self {
        assert_eq!(left.ncols(), self.nrows(), "lmul dimension mismatch");
        self.map(|m| left * m)
    }

    /// `self · R`
    pub fn rmul(&self, right: &DMatrix<f64>) -> Self {
        assert_eq!(self.ncols(), right.nrows(), "rmul dimension mismatch");
        self.map(|m| m * right)
    }

    pub fn t(&self) -> Self {
        self.map(|m| m.transpose())
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|m| m * s)
    }

    /// `self + selfᵀ`
    pub fn he(&self) -> Self {
        self + &self.t()
    }

    /// Scalar expression (1 × 1) times a constant matrix.
    pub fn times_matrix(&self, m: &DMatrix<f64>) -> Self {
        assert_eq!(
            self.shape(),
            (1, 1),
            "times_matrix needs a scalar expression"
        );
        self.map(|c| m * c[(0, 0)])
    }

    /// Assembles a block matrix; every row must share row counts and every
    /// column must share column counts.
    pub fn blocks(rows: &[Vec<AffineMatrix>]) -> Self {
        assert!(!rows.is_empty(), "empty block matrix");
        let ncol_blocks = rows[0].len();
        let heights: Vec<usize> = rows.iter().map(|r| r[0].nrows()).collect();
        let widths: Vec<usize> = rows[0].iter().map(|b| b.ncols()).collect();
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), ncol_blocks, "ragged block row {i}");
            for (j, b) in row.iter().enumerate() {
                assert_eq!(
                    b.shape(),
                    (heights[i], widths[j]),
                    "block ({i},{j}) has inconsistent shape"
                );
            }
        }
        let total_r: usize = heights.iter().sum();
        let total_c: usize = widths.iter().sum();
        let mut out = Self::zeros(total_r, total_c);
        let mut r0 = 0;
        for (i, row) in rows.iter().enumerate() {
            let mut c0 = 0;
            for (j, b) in row.iter().enumerate() {
                let (h, w) = (heights[i], widths[j]);
                if h > 0 && w > 0 {
                    out.constant
                        .view_mut((r0, c0), (h, w))
                        .copy_from(&b.constant);
                    for (k, m) in &b.terms {
                        let slot = out
                            .terms
                            .entry(*k)
                            .or_insert_with(|| DMatrix::zeros(total_r, total_c));
                        slot.view_mut((r0, c0), (h, w)).copy_from(m);
                    }
                }
                c0 += widths[j];
            }
            r0 += heights[i];
        }
        out
    }

    pub fn evaluate(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let mut out = self.constant.clone();
        for (k, m) in &self.terms {
            add_scaled(&mut out, x[*k], m);
        }
        out
    }

    pub fn max_index(&self) -> Option<usize> {
        self.terms.keys().next_back().copied()
    }

    /// Largest asymmetry over the constant and every coefficient.
    pub fn asymmetry(&self) -> f64 {
        if self.nrows() != self.ncols() {
            return f64::INFINITY;
        }
        std::iter::once(&self.constant)
            .chain(self.terms.values())
            .map(|m| (m - m.transpose()).amax())
            .fold(0.0, f64::max)
    }

    fn combine(&self, other: &Self, sign: f64) -> Self {
        assert_eq!(self.shape(), other.shape(), "affine shape mismatch");
        let mut out = self.clone();
        add_scaled(&mut out.constant, sign, &other.constant);
        for (k, m) in &other.terms {
            out.terms
                .entry(*k)
                .and_modify(|e| add_scaled(e, sign, m))
                .or_insert_with(|| m * sign);
        }
        out
    }
}

impl From<DMatrix<f64>> for AffineMatrix {
    fn from(m: DMatrix<f64>) -> Self {
        Self::constant(m)
    }
}

impl Add<&AffineMatrix> for &AffineMatrix {
    type Output = AffineMatrix;
    fn add(self, rhs: &AffineMatrix) -> AffineMatrix {
        self.combine(rhs, 1.0)
    }
}

impl Add for AffineMatrix {
    type Output = AffineMatrix;
    fn add(self, rhs: AffineMatrix) -> AffineMatrix {
        self.combine(&rhs, 1.0)
    }
}

impl Sub<&AffineMatrix> for &AffineMatrix {
    type Output = AffineMatrix;
    fn sub(self, rhs: &AffineMatrix) -> AffineMatrix {
        self.combine(rhs, -1.0)
    }
}

impl Sub for AffineMatrix {
    type Output = AffineMatrix;
    fn sub(self, rhs: AffineMatrix) -> AffineMatrix {
        self.combine(&rhs, -1.0)
    }
}

impl Neg for AffineMatrix {
    type Output = AffineMatrix;
    fn neg(self) -> AffineMatrix {
        self.scale(-1.0)
    }
}

impl Mul<f64> for AffineMatrix {
    type Output = AffineMatrix;
    fn mul(self, s: f64) -> AffineMatrix {
        self.scale(s)
    }
}
