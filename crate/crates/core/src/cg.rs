//! Shared conditional-gradient (Frank-Wolfe) loop for quadratic transport
//! energies of the form `E(gamma) = <L (x) gamma, gamma>`.
//!
//! Each iteration linearizes the energy (gradient `2 (L (x) gamma)`), solves
//! the linear minimization over the transportation polytope with the exact
//! Kantorovich solver, and takes an exact line-search step: the restriction
//! of `E` to the segment is a univariate quadratic, so the minimizer is
//! closed-form and clamped to `[0, 1]`. Iterates stay convex combinations of
//! feasible couplings, hence feasible.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::exact_ot::{solve_kantorovich, CostMatrix};
use crate::gw_solver::CgReport;
use crate::measures::Coupling;

/// A quadratic transport energy presented through its tensor contraction.
/// `apply` must compute `L (x) M` for an arbitrary matrix `M`, using the row
/// and column sums of `M` itself (the contraction identities never require
/// `M` to be a coupling).
pub(crate) trait TensorContraction {
    fn apply(&self, mat: &DMatrix<f64>) -> DMatrix<f64>;
}

pub(crate) fn conditional_gradient<T: TensorContraction>(
    contraction: &T,
    p: &DVector<f64>,
    q: &DVector<f64>,
    init: Option<&Coupling>,
    max_iter: usize,
    tol: f64,
) -> Result<CgReport> {
    let n = p.len();
    let m = q.len();
    let mut gamma = match init {
        Some(c) => {
            if c.nrows() != n || c.ncols() != m {
                return Err(Error::DimensionMismatch(format!(
                    "initial coupling {}x{} vs marginals {n}/{m}",
                    c.nrows(),
                    c.ncols()
                )));
            }
            let residual = warm_start_residual(c, p, q);
            if residual > crate::measures::MARGINAL_TOLERANCE {
                return Err(Error::InfeasibleMarginals { residual });
            }
            c.matrix().clone()
        }
        None => p * q.transpose(),
    };

    let mut contracted = contraction.apply(&gamma);
    let mut energy = contracted.dot(&gamma);
    if !energy.is_finite() {
        return Err(Error::NonFiniteEnergy);
    }
    let mut trace = vec![energy];
    let mut iterations = 0usize;
    let mut converged = false;

    for _ in 0..max_iter {
        let gradient = &contracted * 2.0;
        let (vertex, _) = solve_kantorovich(&CostMatrix::new(gradient)?, p, q)?;
        let direction = vertex.matrix() - &gamma;

        // E(gamma + tau d) = E + 2 tau b + tau^2 a
        let b = contracted.dot(&direction);
        let a = contraction.apply(&direction).dot(&direction);
        let tau = if a > 0.0 {
            (-b / a).clamp(0.0, 1.0)
        } else if 2.0 * b + a < 0.0 {
            1.0
        } else {
            0.0
        };
        if tau <= 0.0 {
            converged = true;
            break;
        }

        gamma += direction * tau;
        contracted = contraction.apply(&gamma);
        let new_energy = contracted.dot(&gamma);
        if !new_energy.is_finite() {
            return Err(Error::NonFiniteEnergy);
        }
        iterations += 1;
        trace.push(new_energy);
        let decrease = energy - new_energy;
        energy = new_energy;
        if decrease <= tol * energy.abs().max(1e-300) {
            converged = true;
            break;
        }
    }

    let coupling = Coupling::new(gamma, p.clone(), q.clone())?;
    Ok(CgReport {
        coupling,
        energy_trace: trace,
        iterations,
        converged,
    })
}

fn warm_start_residual(c: &Coupling, p: &DVector<f64>, q: &DVector<f64>) -> f64 {
    let mut res: f64 = 0.0;
    for i in 0..p.len() {
        res = res.max((c.matrix().row(i).sum() - p[i]).abs());
    }
    for j in 0..q.len() {
        res = res.max((c.matrix().column(j).sum() - q[j]).abs());
    }
    res
}
