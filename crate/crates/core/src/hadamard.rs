//! The Hadamard-Wasserstein problem: quadratic transport with the separable
//! cost `||x o x' - y o y'||^2` (`o` the entrywise product), its
//! coordinate-weighted degenerated family, and a conditional-gradient solver.
//!
//! With `X_t[i,k] = x_i[t] x_k[t]` and `Y_t[j,l] = y_j[t] y_l[t]`, the tensor
//! contraction reads
//! `L (x) gamma = X2 p 1^T + 1 q^T Y2^T - 2 sum_t X_t gamma Y_t^T`
//! where `X2[i,k] = sum_t X_t[i,k]^2`. Every `X_t` is rank one, so each term
//! `X_t gamma Y_t^T` collapses to `(x_t^T gamma y_t) x_t y_t^T` and the whole
//! contraction costs `O(d n m)`.
//!
//! Coordinate weights `a_t` (the diagonal of the degeneration matrix, with
//! `a_0 = 1`) are folded into the points once: scaling a point coordinate by
//! `a_t^(1/4)` scales the pairwise product by `a_t^(1/2)` and the squared
//! difference by exactly `a_t`.

use nalgebra::{DMatrix, DVector};

use crate::cg::{self, TensorContraction};
use crate::error::{Error, Result};
use crate::gw_solver::CgReport;
use crate::measures::{Coupling, DiscreteMeasure};

/// Cumulative coordinate weights are floored here to avoid denormal underflow
/// for large dimensions.
pub const LAMBDA_FLOOR: f64 = 1e-18;

/// A discrete Hadamard-Wasserstein instance: two point clouds sharing the
/// ambient dimension, their weights, and the diagonal coordinate weights.
#[derive(Debug, Clone)]
pub struct HwInstance {
    x_points: DMatrix<f64>,
    y_points: DMatrix<f64>,
    p: DVector<f64>,
    q: DVector<f64>,
    lambda_weights: DVector<f64>,
    scaled_x: DMatrix<f64>,
    scaled_y: DMatrix<f64>,
}

impl HwInstance {
    pub fn new(
        x_points: DMatrix<f64>,
        y_points: DMatrix<f64>,
        p: DVector<f64>,
        q: DVector<f64>,
        lambda_weights: DVector<f64>,
    ) -> Result<Self> {
        let d = x_points.ncols();
        if y_points.ncols() != d {
            return Err(Error::DimensionMismatch(format!(
                "point dimensions {} vs {}",
                d,
                y_points.ncols()
            )));
        }
        if x_points.nrows() != p.len() || y_points.nrows() != q.len() {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} and {}x{} points vs {}/{} weights",
                x_points.nrows(),
                d,
                y_points.nrows(),
                d,
                p.len(),
                q.len()
            )));
        }
        if lambda_weights.len() != d {
            return Err(Error::DimensionMismatch(format!(
                "{} coordinate weights for dimension {d}",
                lambda_weights.len()
            )));
        }
        if d == 0 {
            return Err(Error::DimensionMismatch("zero-dimensional points".into()));
        }
        if (lambda_weights[0] - 1.0).abs() > 1e-12 {
            return Err(Error::NumericalFailure(format!(
                "first coordinate weight must be 1, got {}",
                lambda_weights[0]
            )));
        }
        if lambda_weights.iter().any(|&l| !(l > 0.0) || !l.is_finite()) {
            return Err(Error::NumericalFailure(
                "coordinate weights must be positive and finite".into(),
            ));
        }
        if x_points.iter().any(|v| !v.is_finite()) || y_points.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue("instance points"));
        }
        for w in p.iter().chain(q.iter()) {
            if !w.is_finite() || *w < 0.0 {
                return Err(Error::NumericalFailure(format!("invalid weight {w}")));
            }
        }
        let gap = (p.sum() - q.sum()).abs();
        if gap > 1e-9 {
            return Err(Error::InfeasibleMarginals { residual: gap });
        }

        let mut lambda = lambda_weights;
        lambda[0] = 1.0;
        let quarter: Vec<f64> = lambda.iter().map(|&l| l.max(LAMBDA_FLOOR).powf(0.25)).collect();
        let mut scaled_x = x_points.clone();
        let mut scaled_y = y_points.clone();
        for t in 0..d {
            scaled_x.column_mut(t).scale_mut(quarter[t]);
            scaled_y.column_mut(t).scale_mut(quarter[t]);
        }
        Ok(Self {
            x_points,
            y_points,
            p,
            q,
            lambda_weights: lambda,
            scaled_x,
            scaled_y,
        })
    }

    /// Unweighted instance (all coordinate weights 1) from two measures.
    pub fn from_measures(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<Self> {
        let d = mu.dim();
        Self::new(
            mu.points().clone(),
            nu.points().clone(),
            mu.weights().clone(),
            nu.weights().clone(),
            DVector::from_element(d, 1.0),
        )
    }

    /// Same points and weights, new coordinate weights.
    pub fn with_lambda_weights(&self, lambda_weights: DVector<f64>) -> Result<Self> {
        Self::new(
            self.x_points.clone(),
            self.y_points.clone(),
            self.p.clone(),
            self.q.clone(),
            lambda_weights,
        )
    }

    /// Degenerated weights for a single scalar `t`: cumulative products
    /// `(1, t, t^2, ...)`, floored at [`LAMBDA_FLOOR`].
    pub fn with_uniform_cascade(&self, t: f64) -> Result<Self> {
        if !(t > 0.0) || !t.is_finite() {
            return Err(Error::NumericalFailure(format!(
                "cascade parameter must be positive, got {t}"
            )));
        }
        let d = self.dim();
        let mut lambda = DVector::from_element(d, 1.0);
        let mut acc = 1.0f64;
        for k in 1..d {
            acc = (acc * t).max(LAMBDA_FLOOR);
            lambda[k] = acc;
        }
        self.with_lambda_weights(lambda)
    }

    pub fn dim(&self) -> usize {
        self.x_points.ncols()
    }

    pub fn source_len(&self) -> usize {
        self.x_points.nrows()
    }

    pub fn target_len(&self) -> usize {
        self.y_points.nrows()
    }

    pub fn x_points(&self) -> &DMatrix<f64> {
        &self.x_points
    }

    pub fn y_points(&self) -> &DMatrix<f64> {
        &self.y_points
    }

    pub fn source_weights(&self) -> &DVector<f64> {
        &self.p
    }

    pub fn target_weights(&self) -> &DVector<f64> {
        &self.q
    }

    pub fn lambda_weights(&self) -> &DVector<f64> {
        &self.lambda_weights
    }

    fn contraction(&self) -> HwContraction<'_> {
        HwContraction::new(&self.scaled_x, &self.scaled_y)
    }

    fn check_coupling(&self, g: &Coupling) -> Result<()> {
        if g.nrows() != self.source_len() || g.ncols() != self.target_len() {
            return Err(Error::DimensionMismatch(format!(
                "coupling {}x{} vs instance {}x{}",
                g.nrows(),
                g.ncols(),
                self.source_len(),
                self.target_len()
            )));
        }
        Ok(())
    }
}

struct HwContraction<'a> {
    sx: &'a DMatrix<f64>,
    sy: &'a DMatrix<f64>,
    sx_sq: DMatrix<f64>,
    sy_sq: DMatrix<f64>,
}

impl<'a> HwContraction<'a> {
    fn new(sx: &'a DMatrix<f64>, sy: &'a DMatrix<f64>) -> Self {
        Self {
            sx,
            sy,
            sx_sq: sx.map(|v| v * v),
            sy_sq: sy.map(|v| v * v),
        }
    }
}

impl TensorContraction for HwContraction<'_> {
    fn apply(&self, mat: &DMatrix<f64>) -> DMatrix<f64> {
        let n = mat.nrows();
        let m = mat.ncols();
        let d = self.sx.ncols();
        let row_sums = DVector::from_iterator(n, (0..n).map(|i| mat.row(i).sum()));
        let col_sums = DVector::from_iterator(m, (0..m).map(|j| mat.column(j).sum()));
        // X2 r = U (U^T r) with U the entrywise square of the scaled points
        let t1 = &self.sx_sq * (self.sx_sq.transpose() * row_sums);
        let t2 = &self.sy_sq * (self.sy_sq.transpose() * col_sums);
        // sum_t X_t M Y_t^T = sum_t (x_t^T M y_t) x_t y_t^T
        let my = mat * self.sy;
        let mut weighted = self.sx.clone();
        for t in 0..d {
            let s_t = self.sx.column(t).dot(&my.column(t));
            weighted.column_mut(t).scale_mut(s_t);
        }
        let mut out = weighted * self.sy.transpose() * (-2.0);
        for i in 0..n {
            for j in 0..m {
                out[(i, j)] += t1[i] + t2[j];
            }
        }
        out
    }
}

/// Hadamard-Wasserstein energy of a coupling, evaluated via the contraction.
pub fn hw_energy(inst: &HwInstance, g: &Coupling) -> Result<f64> {
    inst.check_coupling(g)?;
    Ok(inst.contraction().apply(g.matrix()).dot(g.matrix()))
}

/// The contracted tensor `L (x) gamma` for the (weighted) Hadamard cost.
pub fn hw_tensor_product(inst: &HwInstance, g: &Coupling) -> Result<DMatrix<f64>> {
    inst.check_coupling(g)?;
    Ok(inst.contraction().apply(g.matrix()))
}

/// Conditional-gradient solver for the Hadamard-Wasserstein problem; same
/// contract as [`crate::gw_solver::solve_gw_cg`] with the Hadamard gradient
/// oracle.
pub fn solve_hw(
    inst: &HwInstance,
    init: Option<&Coupling>,
    max_iter: usize,
    tol: f64,
) -> Result<CgReport> {
    let contraction = inst.contraction();
    cg::conditional_gradient(&contraction, &inst.p, &inst.q, init, max_iter, tol)
}

/// Solves the degenerated family along a strictly decreasing schedule of
/// cascade parameters, warm-starting each solve from the previous coupling.
pub fn hw_t_schedule(
    inst_base: &HwInstance,
    t_values: &[f64],
    max_iter: usize,
    tol: f64,
) -> Result<Vec<CgReport>> {
    if t_values.is_empty() {
        return Err(Error::NumericalFailure("empty cascade schedule".into()));
    }
    for w in t_values.windows(2) {
        if !(w[1] < w[0]) {
            return Err(Error::NumericalFailure(format!(
                "schedule must be strictly decreasing, got {} then {}",
                w[0], w[1]
            )));
        }
    }
    let mut reports = Vec::with_capacity(t_values.len());
    let mut warm: Option<Coupling> = None;
    for &t in t_values {
        let inst = inst_base.with_uniform_cascade(t)?;
        let report = solve_hw(&inst, warm.as_ref(), max_iter, tol)?;
        warm = Some(report.coupling.clone());
        reports.push(report);
    }
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gw_solver::{gw_energy, SimilarityMatrix};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn uniform(n: usize) -> DVector<f64> {
        DVector::from_element(n, 1.0 / n as f64)
    }

    fn random_points(n: usize, d: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        DMatrix::from_fn(n, d, |_, _| rng.random_range(-1.5..1.5))
    }

    /// Weighted quadruple-sum oracle: sum_t a_t (x_it x_kt - y_jt y_lt)^2.
    fn hw_energy_quadruple(
        x: &DMatrix<f64>,
        y: &DMatrix<f64>,
        lambda: &DVector<f64>,
        g: &DMatrix<f64>,
    ) -> f64 {
        let (n, m) = g.shape();
        let d = x.ncols();
        let mut total = 0.0;
        for i in 0..n {
            for j in 0..m {
                for k in 0..n {
                    for l in 0..m {
                        let mut cost = 0.0;
                        for t in 0..d {
                            let diff = x[(i, t)] * x[(k, t)] - y[(j, t)] * y[(l, t)];
                            cost += lambda[t] * diff * diff;
                        }
                        total += cost * g[(i, j)] * g[(k, l)];
                    }
                }
            }
        }
        total
    }

    fn hw_tensor_quadruple(
        x: &DMatrix<f64>,
        y: &DMatrix<f64>,
        lambda: &DVector<f64>,
        g: &DMatrix<f64>,
    ) -> DMatrix<f64> {
        let (n, m) = g.shape();
        let d = x.ncols();
        DMatrix::from_fn(n, m, |i, j| {
            let mut acc = 0.0;
            for k in 0..n {
                for l in 0..m {
                    let mut cost = 0.0;
                    for t in 0..d {
                        let diff = x[(i, t)] * x[(k, t)] - y[(j, t)] * y[(l, t)];
                        cost += lambda[t] * diff * diff;
                    }
                    acc += cost * g[(k, l)];
                }
            }
            acc
        })
    }

    #[test]
    fn identical_points_identity_coupling_has_zero_energy() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let pts = random_points(4, 3, &mut rng);
        let inst = HwInstance::new(
            pts.clone(),
            pts,
            uniform(4),
            uniform(4),
            DVector::from_element(3, 1.0),
        )
        .unwrap();
        let g = Coupling::new(DMatrix::identity(4, 4) * 0.25, uniform(4), uniform(4)).unwrap();
        assert_abs_diff_eq!(hw_energy(&inst, &g).unwrap(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn one_dimensional_energy_equals_inner_product_gw() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = random_points(5, 1, &mut rng);
        let y = random_points(4, 1, &mut rng);
        let inst = HwInstance::new(
            x.clone(),
            y.clone(),
            uniform(5),
            uniform(4),
            DVector::from_element(1, 1.0),
        )
        .unwrap();
        let g = Coupling::product(&uniform(5), &uniform(4)).unwrap();
        let via_hw = hw_energy(&inst, &g).unwrap();
        let cx = SimilarityMatrix::from_inner_products(&x).unwrap();
        let cy = SimilarityMatrix::from_inner_products(&y).unwrap();
        let via_gw = gw_energy(&cx, &cy, &g).unwrap();
        assert_abs_diff_eq!(via_hw, via_gw, epsilon = 1e-12);
    }

    #[test]
    fn contraction_matches_quadruple_oracle_with_unit_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..5 {
            let n = rng.random_range(2..8);
            let m = rng.random_range(2..8);
            let d = rng.random_range(1..4);
            let x = random_points(n, d, &mut rng);
            let y = random_points(m, d, &mut rng);
            let lambda = DVector::from_element(d, 1.0);
            let inst =
                HwInstance::new(x.clone(), y.clone(), uniform(n), uniform(m), lambda.clone())
                    .unwrap();
            let g = Coupling::product(&uniform(n), &uniform(m)).unwrap();
            let tensor = hw_tensor_product(&inst, &g).unwrap();
            let oracle = hw_tensor_quadruple(&x, &y, &lambda, g.matrix());
            assert!((tensor.clone() - oracle).abs().max() <= 1e-10);
            let energy = hw_energy(&inst, &g).unwrap();
            assert_abs_diff_eq!(
                energy,
                hw_energy_quadruple(&x, &y, &lambda, g.matrix()),
                epsilon = 1e-10
            );
            assert_abs_diff_eq!(tensor.dot(g.matrix()), energy, epsilon = 1e-10);
        }
    }

    #[test]
    fn contraction_matches_quadruple_oracle_with_cascade_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for &t in &[1.0, 0.3, 0.01] {
            let n = 5;
            let m = 4;
            let d = 3;
            let x = random_points(n, d, &mut rng);
            let y = random_points(m, d, &mut rng);
            let base = HwInstance::new(
                x.clone(),
                y.clone(),
                uniform(n),
                uniform(m),
                DVector::from_element(d, 1.0),
            )
            .unwrap();
            let inst = base.with_uniform_cascade(t).unwrap();
            let g = Coupling::product(&uniform(n), &uniform(m)).unwrap();
            let tensor = hw_tensor_product(&inst, &g).unwrap();
            let oracle = hw_tensor_quadruple(&x, &y, inst.lambda_weights(), g.matrix());
            assert!((tensor - oracle).abs().max() <= 1e-10);
        }
    }

    #[test]
    fn zero_points_give_zero_tensor() {
        let inst = HwInstance::new(
            DMatrix::zeros(3, 2),
            DMatrix::zeros(2, 2),
            uniform(3),
            uniform(2),
            DVector::from_element(2, 1.0),
        )
        .unwrap();
        let g = Coupling::product(&uniform(3), &uniform(2)).unwrap();
        assert_abs_diff_eq!(
            hw_tensor_product(&inst, &g).unwrap().abs().max(),
            0.0
        );
    }

    #[test]
    fn duplicated_target_points_give_identical_tensor_columns() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let x = random_points(4, 2, &mut rng);
        let mut y = random_points(3, 2, &mut rng);
        let dup = y.row(1).into_owned();
        y.row_mut(2).copy_from(&dup);
        let inst =
            HwInstance::new(x, y, uniform(4), uniform(3), DVector::from_element(2, 1.0)).unwrap();
        let g = Coupling::product(&uniform(4), &uniform(3)).unwrap();
        let tensor = hw_tensor_product(&inst, &g).unwrap();
        assert!((tensor.column(1) - tensor.column(2)).abs().max() <= 1e-12);
    }

    #[test]
    fn axis_reflection_leaves_energy_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let x = random_points(5, 3, &mut rng);
        let y = random_points(4, 3, &mut rng);
        let mut reflected = x.clone();
        for i in 0..reflected.nrows() {
            reflected[(i, 1)] = -reflected[(i, 1)];
        }
        let lambda = DVector::from_element(3, 1.0);
        let a = HwInstance::new(x, y.clone(), uniform(5), uniform(4), lambda.clone()).unwrap();
        let b = HwInstance::new(reflected, y, uniform(5), uniform(4), lambda).unwrap();
        let g = Coupling::product(&uniform(5), &uniform(4)).unwrap();
        assert_abs_diff_eq!(
            hw_energy(&a, &g).unwrap(),
            hw_energy(&b, &g).unwrap(),
            epsilon = 1e-10
        );
    }

    #[test]
    fn solve_hw_on_identical_measures_reaches_zero_energy() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let pts = random_points(6, 2, &mut rng);
        let inst = HwInstance::new(
            pts.clone(),
            pts,
            uniform(6),
            uniform(6),
            DVector::from_element(2, 1.0),
        )
        .unwrap();
        let init = Coupling::new(DMatrix::identity(6, 6) / 6.0, uniform(6), uniform(6)).unwrap();
        let report = solve_hw(&inst, Some(&init), 100, 1e-9).unwrap();
        assert!(report.energy_trace.last().unwrap().abs() <= 1e-10);
    }

    #[test]
    fn single_value_schedule_is_a_plain_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let inst = HwInstance::new(
            random_points(5, 2, &mut rng),
            random_points(5, 2, &mut rng),
            uniform(5),
            uniform(5),
            DVector::from_element(2, 1.0),
        )
        .unwrap();
        let reports = hw_t_schedule(&inst, &[1.0], 200, 1e-9).unwrap();
        assert_eq!(reports.len(), 1);
        let direct = solve_hw(&inst.with_uniform_cascade(1.0).unwrap(), None, 200, 1e-9).unwrap();
        assert!(
            (reports[0].coupling.matrix() - direct.coupling.matrix())
                .abs()
                .max()
                <= 1e-12
        );
    }

    #[test]
    fn one_dimensional_schedule_returns_identical_couplings() {
        let mut rng = ChaCha8Rng::seed_from_u64(18);
        let inst = HwInstance::new(
            random_points(6, 1, &mut rng),
            random_points(6, 1, &mut rng),
            uniform(6),
            uniform(6),
            DVector::from_element(1, 1.0),
        )
        .unwrap();
        let reports = hw_t_schedule(&inst, &[1.0, 0.1, 0.01], 300, 1e-9).unwrap();
        for r in &reports[1..] {
            assert!(
                (r.coupling.matrix() - reports[0].coupling.matrix())
                    .abs()
                    .max()
                    <= 1e-12
            );
        }
    }

    #[test]
    fn schedule_must_be_strictly_decreasing() {
        let inst = HwInstance::new(
            DMatrix::zeros(2, 1),
            DMatrix::zeros(2, 1),
            uniform(2),
            uniform(2),
            DVector::from_element(1, 1.0),
        )
        .unwrap();
        assert!(hw_t_schedule(&inst, &[0.1, 0.1], 10, 1e-9).is_err());
        assert!(hw_t_schedule(&inst, &[], 10, 1e-9).is_err());
    }

    #[test]
    fn first_coordinate_weight_must_be_one() {
        let err = HwInstance::new(
            DMatrix::zeros(2, 2),
            DMatrix::zeros(2, 2),
            uniform(2),
            uniform(2),
            DVector::from_column_slice(&[0.5, 1.0]),
        )
        .unwrap_err();
        assert!(matches!(err, Error::NumericalFailure(_)));
    }
}
