//! Discrete Gromov-Wasserstein solver for square-loss costs via conditional
//! gradient with the exact tensor contraction
//! `L (x) gamma = (Cx o Cx) p 1^T + 1 q^T (Cy o Cy)^T - 2 Cx gamma Cy^T`
//! (`o` entrywise, `p`/`q` the row/column sums of the contracted matrix).
//!
//! Inner-product losses are handled by passing Gram matrices as the
//! similarity inputs; the same contraction applies.

use nalgebra::{DMatrix, DVector};

use crate::cg::{self, TensorContraction};
use crate::error::{Error, Result};
use crate::measures::Coupling;

/// Default relative convergence tolerance of the conditional-gradient solvers.
pub const DEFAULT_TOL: f64 = 1e-9;
/// Default iteration cap of the conditional-gradient solvers.
pub const DEFAULT_MAX_ITER: usize = 1000;

/// Symmetric matrix of pairwise similarities (inner products or squared
/// distances) within one space.
#[derive(Debug, Clone)]
pub struct SimilarityMatrix {
    entries: DMatrix<f64>,
}

impl SimilarityMatrix {
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        if entries.nrows() != entries.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "similarity matrix must be square, got {}x{}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue("similarity matrix entries"));
        }
        let asym = (&entries - entries.transpose()).abs().max();
        if asym > 1e-10 {
            return Err(Error::NumericalFailure(format!(
                "similarity matrix asymmetry {asym}"
            )));
        }
        Ok(Self { entries })
    }

    /// Gram matrix `<x_i, x_k>` of a point cloud (rows are points).
    pub fn from_inner_products(points: &DMatrix<f64>) -> Result<Self> {
        Self::new(points * points.transpose())
    }

    /// Pairwise squared Euclidean distances of a point cloud.
    pub fn from_squared_distances(points: &DMatrix<f64>) -> Result<Self> {
        let n = points.nrows();
        let mut entries = DMatrix::zeros(n, n);
        for i in 0..n {
            for k in (i + 1)..n {
                let mut d = 0.0;
                for t in 0..points.ncols() {
                    let diff = points[(i, t)] - points[(k, t)];
                    d += diff * diff;
                }
                entries[(i, k)] = d;
                entries[(k, i)] = d;
            }
        }
        Self::new(entries)
    }

    pub fn len(&self) -> usize {
        self.entries.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.nrows() == 0
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }
}

/// Outcome of a conditional-gradient run: final coupling, the exact energy
/// after every accepted step, the number of coupling updates, and whether the
/// stopping rule fired before the iteration cap.
#[derive(Debug, Clone)]
pub struct CgReport {
    pub coupling: Coupling,
    pub energy_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

struct GwContraction<'a> {
    cx: &'a DMatrix<f64>,
    cy: &'a DMatrix<f64>,
    cx_sq: DMatrix<f64>,
    cy_sq: DMatrix<f64>,
}

impl<'a> GwContraction<'a> {
    fn new(cx: &'a SimilarityMatrix, cy: &'a SimilarityMatrix) -> Self {
        Self {
            cx: cx.entries(),
            cy: cy.entries(),
            cx_sq: cx.entries().map(|v| v * v),
            cy_sq: cy.entries().map(|v| v * v),
        }
    }
}

impl TensorContraction for GwContraction<'_> {
    fn apply(&self, mat: &DMatrix<f64>) -> DMatrix<f64> {
        let n = mat.nrows();
        let m = mat.ncols();
        let row_sums = DVector::from_iterator(n, (0..n).map(|i| mat.row(i).sum()));
        let col_sums = DVector::from_iterator(m, (0..m).map(|j| mat.column(j).sum()));
        let t1 = &self.cx_sq * row_sums;
        let t2 = &self.cy_sq * col_sums;
        let mut out = self.cx * mat * self.cy.transpose() * (-2.0);
        for i in 0..n {
            for j in 0..m {
                out[(i, j)] += t1[i] + t2[j];
            }
        }
        out
    }
}

fn check_dims(cx: &SimilarityMatrix, cy: &SimilarityMatrix, g: &Coupling) -> Result<()> {
    if cx.len() != g.nrows() || cy.len() != g.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "similarities {}x{} vs coupling {}x{}",
            cx.len(),
            cy.len(),
            g.nrows(),
            g.ncols()
        )));
    }
    Ok(())
}

/// Quadratic GW energy `sum_{i,j,k,l} (Cx[i,k] - Cy[j,l])^2 g[i,j] g[k,l]`,
/// evaluated through the contraction identity.
pub fn gw_energy(cx: &SimilarityMatrix, cy: &SimilarityMatrix, g: &Coupling) -> Result<f64> {
    check_dims(cx, cy, g)?;
    let contraction = GwContraction::new(cx, cy);
    Ok(contraction.apply(g.matrix()).dot(g.matrix()))
}

/// The contracted tensor `L (x) gamma` with `L[i,j,k,l] = (Cx[i,k] - Cy[j,l])^2`.
pub fn gw_tensor_product(
    cx: &SimilarityMatrix,
    cy: &SimilarityMatrix,
    g: &Coupling,
) -> Result<DMatrix<f64>> {
    check_dims(cx, cy, g)?;
    let contraction = GwContraction::new(cx, cy);
    Ok(contraction.apply(g.matrix()))
}

/// Conditional-gradient solver for the discrete GW problem. Defaults to the
/// product coupling `p q^T` when no warm start is supplied.
pub fn solve_gw_cg(
    cx: &SimilarityMatrix,
    cy: &SimilarityMatrix,
    p: &DVector<f64>,
    q: &DVector<f64>,
    init: Option<&Coupling>,
    max_iter: usize,
    tol: f64,
) -> Result<CgReport> {
    if cx.len() != p.len() || cy.len() != q.len() {
        return Err(Error::DimensionMismatch(format!(
            "similarities {}x{} vs marginals {}/{}",
            cx.len(),
            cy.len(),
            p.len(),
            q.len()
        )));
    }
    let contraction = GwContraction::new(cx, cy);
    cg::conditional_gradient(&contraction, p, q, init, max_iter, tol)
}
