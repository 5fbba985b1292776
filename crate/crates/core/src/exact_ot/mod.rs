//! Exact discrete Kantorovich solver and the closed-form 1D monotone coupling.
//!
//! The linear solver doubles as the linearized-step oracle of the
//! conditional-gradient methods in [`crate::gw_solver`] and [`crate::hadamard`].
//! Instances stay in the range of a few thousand support points, where the
//! exact network simplex beats entropic approximations in both accuracy and
//! determinism.

mod network_simplex;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::measures::{Coupling, DiscreteMeasure, ZERO_MASS};

/// Dense pairwise cost matrix `c(x_i, y_j)`.
#[derive(Debug, Clone)]
pub struct CostMatrix {
    entries: DMatrix<f64>,
}

impl CostMatrix {
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue("cost matrix entries"));
        }
        Ok(Self { entries })
    }

    /// Squared Euclidean distances between two point clouds (rows are points).
    pub fn squared_euclidean(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<Self> {
        if x.ncols() != y.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "point dimensions {} vs {}",
                x.ncols(),
                y.ncols()
            )));
        }
        let n = x.nrows();
        let m = y.nrows();
        let mut entries = DMatrix::zeros(n, m);
        for i in 0..n {
            for j in 0..m {
                let mut d = 0.0;
                for t in 0..x.ncols() {
                    let diff = x[(i, t)] - y[(j, t)];
                    d += diff * diff;
                }
                entries[(i, j)] = d;
            }
        }
        Self::new(entries)
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn nrows(&self) -> usize {
        self.entries.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.entries.ncols()
    }
}

/// Sorting direction of a monotone 1D rearrangement.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MonotoneDirection {
    Ascending,
    Descending,
}

/// Exact optimal transport plan and value for the discrete Kantorovich problem.
///
/// Atoms with mass below `1e-15` are dropped before solving and re-embedded as
/// zero rows/columns of the returned coupling.
pub fn solve_kantorovich(
    cost: &CostMatrix,
    p: &DVector<f64>,
    q: &DVector<f64>,
) -> Result<(Coupling, f64)> {
    let n = p.len();
    let m = q.len();
    if cost.nrows() != n || cost.ncols() != m {
        return Err(Error::DimensionMismatch(format!(
            "cost {}x{} vs marginals {n}/{m}",
            cost.nrows(),
            cost.ncols()
        )));
    }
    for (name, v) in [("row marginal", p), ("column marginal", q)] {
        for &w in v.iter() {
            if !w.is_finite() {
                return Err(Error::NonFiniteValue("marginals"));
            }
            if w < 0.0 {
                return Err(Error::NumericalFailure(format!("negative {name} entry {w}")));
            }
        }
    }
    let mass_gap = (p.sum() - q.sum()).abs();
    if mass_gap > 1e-9 {
        return Err(Error::InfeasibleMarginals { residual: mass_gap });
    }

    let keep_p: Vec<usize> = (0..n).filter(|&i| p[i] >= ZERO_MASS).collect();
    let keep_q: Vec<usize> = (0..m).filter(|&j| q[j] >= ZERO_MASS).collect();
    if keep_p.is_empty() || keep_q.is_empty() {
        return Err(Error::EmptySupport);
    }

    let pr = DVector::from_iterator(keep_p.len(), keep_p.iter().map(|&i| p[i]));
    let qr = DVector::from_iterator(keep_q.len(), keep_q.iter().map(|&j| q[j]));
    let mut cr = DMatrix::zeros(keep_p.len(), keep_q.len());
    for (a, &i) in keep_p.iter().enumerate() {
        for (b, &j) in keep_q.iter().enumerate() {
            cr[(a, b)] = cost.entries[(i, j)];
        }
    }

    let reduced_plan = network_simplex::transportation_simplex(&cr, &pr, &qr)?;

    let mut plan = DMatrix::zeros(n, m);
    for (a, &i) in keep_p.iter().enumerate() {
        for (b, &j) in keep_q.iter().enumerate() {
            plan[(i, j)] = reduced_plan[(a, b)];
        }
    }
    let coupling = Coupling::new(plan, p.clone(), q.clone())?;
    let value = coupling.transport_cost(cost.entries());
    Ok((coupling, value))
}

/// Monotone coupling between two 1D measures: north-west-corner mass matching
/// over supports sorted ascending (and the second one descending for
/// [`MonotoneDirection::Descending`]). Ties are broken by original index.
pub fn monotone_coupling_1d(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    direction: MonotoneDirection,
) -> Result<Coupling> {
    if mu.dim() != 1 || nu.dim() != 1 {
        return Err(Error::DimensionMismatch(format!(
            "monotone coupling needs 1D measures, got {} and {}",
            mu.dim(),
            nu.dim()
        )));
    }
    let order_mu = sorted_indices(mu, MonotoneDirection::Ascending);
    let order_nu = sorted_indices(nu, direction);

    let n = mu.len();
    let m = nu.len();
    let mut plan = DMatrix::zeros(n, m);
    let mut i = 0usize;
    let mut j = 0usize;
    let mut a = remaining(mu, &order_mu, i);
    let mut b = remaining(nu, &order_nu, j);
    while i < order_mu.len() && j < order_nu.len() {
        let t = a.min(b);
        if t > 0.0 {
            plan[(order_mu[i], order_nu[j])] += t;
        }
        a -= t;
        b -= t;
        if a <= ZERO_MASS {
            i += 1;
            if i < order_mu.len() {
                a = remaining(mu, &order_mu, i);
            }
        }
        if b <= ZERO_MASS {
            j += 1;
            if j < order_nu.len() {
                b = remaining(nu, &order_nu, j);
            }
        }
    }
    Coupling::new(plan, mu.weights().clone(), nu.weights().clone())
}

fn sorted_indices(measure: &DiscreteMeasure, direction: MonotoneDirection) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..measure.len())
        .filter(|&i| measure.weights()[i] >= ZERO_MASS)
        .collect();
    idx.sort_by(|&x, &y| {
        let vx = measure.points()[(x, 0)];
        let vy = measure.points()[(y, 0)];
        let ord = vx.partial_cmp(&vy).expect("finite support values");
        match direction {
            MonotoneDirection::Ascending => ord.then(x.cmp(&y)),
            MonotoneDirection::Descending => ord.reverse().then(x.cmp(&y)),
        }
    });
    idx
}

fn remaining(measure: &DiscreteMeasure, order: &[usize], pos: usize) -> f64 {
    measure.weights()[order[pos]]
}

/// The increasing rearrangement: optimal coupling for the squared-difference
/// cost between 1D measures. Equals [`solve_kantorovich`] on that cost.
pub fn wasserstein_1d_coupling(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<Coupling> {
    monotone_coupling_1d(mu, nu, MonotoneDirection::Ascending)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use itertools::Itertools;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn uniform_vec(n: usize) -> DVector<f64> {
        DVector::from_element(n, 1.0 / n as f64)
    }

    #[test]
    fn zero_cost_matrix_gives_zero_value() {
        let c = CostMatrix::new(DMatrix::zeros(3, 4)).unwrap();
        let p = uniform_vec(3);
        let q = uniform_vec(4);
        let (coupling, value) = solve_kantorovich(&c, &p, &q).unwrap();
        assert_abs_diff_eq!(value, 0.0);
        assert!(coupling.marginal_residual() <= 1e-9);
    }

    #[test]
    fn two_by_two_zero_cost_matching() {
        let c = CostMatrix::new(DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0])).unwrap();
        let p = uniform_vec(2);
        let q = uniform_vec(2);
        let (coupling, value) = solve_kantorovich(&c, &p, &q).unwrap();
        assert_abs_diff_eq!(value, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(coupling.matrix()[(0, 0)], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(coupling.matrix()[(1, 1)], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn unbalanced_marginals_are_rejected() {
        let c = CostMatrix::new(DMatrix::zeros(2, 2)).unwrap();
        let p = DVector::from_column_slice(&[0.5, 0.5]);
        let q = DVector::from_column_slice(&[0.5, 0.4]);
        assert!(matches!(
            solve_kantorovich(&c, &p, &q),
            Err(Error::InfeasibleMarginals { .. })
        ));
    }

    #[test]
    fn non_finite_cost_is_rejected() {
        assert!(CostMatrix::new(DMatrix::from_row_slice(1, 1, &[f64::INFINITY])).is_err());
    }

    fn permutation_minimum(cost: &DMatrix<f64>) -> f64 {
        let n = cost.nrows();
        (0..n)
            .permutations(n)
            .map(|perm| {
                perm.iter()
                    .enumerate()
                    .map(|(i, &j)| cost[(i, j)])
                    .sum::<f64>()
                    / n as f64
            })
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn uniform_instances_match_exhaustive_permutation_minimum() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for trial in 0..30 {
            let n = 2 + (trial % 6);
            let cost = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
            let p = uniform_vec(n);
            let (coupling, value) =
                solve_kantorovich(&CostMatrix::new(cost.clone()).unwrap(), &p, &p).unwrap();
            let oracle = permutation_minimum(&cost);
            assert_abs_diff_eq!(value, oracle, epsilon = 1e-9);
            assert!(coupling.marginal_residual() <= 1e-9);
        }
    }

    #[test]
    fn random_instances_are_feasible_and_dominate_random_plans() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let n = rng.random_range(2..9);
            let m = rng.random_range(2..9);
            let cost = DMatrix::from_fn(n, m, |_, _| rng.random_range(0.0..5.0));
            let mut p = DVector::from_fn(n, |_, _| rng.random_range(0.1..1.0));
            let mut q = DVector::from_fn(m, |_, _| rng.random_range(0.1..1.0));
            p /= p.sum();
            q /= q.sum();
            let (coupling, value) =
                solve_kantorovich(&CostMatrix::new(cost.clone()).unwrap(), &p, &q).unwrap();
            assert!(coupling.marginal_residual() <= 1e-9);
            for _ in 0..20 {
                let other = random_feasible_coupling(&p, &q, &mut rng);
                let other_value = other.dot(&cost);
                assert!(value <= other_value + 1e-9);
            }
        }
    }

    /// Random feasible coupling: convex mixture of north-west-corner vertices
    /// taken over shuffled row/column orders.
    fn random_feasible_coupling(
        p: &DVector<f64>,
        q: &DVector<f64>,
        rng: &mut ChaCha8Rng,
    ) -> DMatrix<f64> {
        let n = p.len();
        let m = q.len();
        let mut acc = DMatrix::zeros(n, m);
        let terms = 4;
        let mut weights: Vec<f64> = (0..terms).map(|_| rng.random_range(0.1..1.0)).collect();
        let total: f64 = weights.iter().sum();
        for w in weights.iter_mut() {
            *w /= total;
        }
        for &w in &weights {
            let mut rows: Vec<usize> = (0..n).collect();
            let mut cols: Vec<usize> = (0..m).collect();
            for i in (1..rows.len()).rev() {
                rows.swap(i, rng.random_range(0..=i));
            }
            for j in (1..cols.len()).rev() {
                cols.swap(j, rng.random_range(0..=j));
            }
            let mut a = p[rows[0]];
            let mut b = q[cols[0]];
            let (mut i, mut j) = (0usize, 0usize);
            while i < n && j < m {
                let t = a.min(b);
                acc[(rows[i], cols[j])] += w * t;
                a -= t;
                b -= t;
                if a <= ZERO_MASS {
                    i += 1;
                    if i < n {
                        a = p[rows[i]];
                    }
                }
                if b <= ZERO_MASS {
                    j += 1;
                    if j < m {
                        b = q[cols[j]];
                    }
                }
            }
        }
        acc
    }

    #[test]
    fn monotone_coupling_preserves_order() {
        let mu = DiscreteMeasure::uniform_1d(&[1.0, 2.0]).unwrap();
        let nu = DiscreteMeasure::uniform_1d(&[5.0, 6.0]).unwrap();
        let c = wasserstein_1d_coupling(&mu, &nu).unwrap();
        assert_abs_diff_eq!(c.matrix()[(0, 0)], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(c.matrix()[(1, 1)], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(c.matrix()[(0, 1)], 0.0);
    }

    #[test]
    fn identical_measures_give_diagonal_coupling_with_zero_cost() {
        let mu = DiscreteMeasure::uniform_1d(&[0.3, -1.0, 2.0]).unwrap();
        let c = wasserstein_1d_coupling(&mu, &mu).unwrap();
        let cost = CostMatrix::squared_euclidean(mu.points(), mu.points()).unwrap();
        assert_abs_diff_eq!(c.transport_cost(cost.entries()), 0.0, epsilon = 1e-15);
        for i in 0..3 {
            assert_abs_diff_eq!(c.matrix()[(i, i)], 1.0 / 3.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn mass_splitting_matches_lp_value() {
        let mu = DiscreteMeasure::weighted_1d(&[0.0, 1.0], &[0.3, 0.7]).unwrap();
        let nu = DiscreteMeasure::weighted_1d(&[2.0, 3.0], &[0.7, 0.3]).unwrap();
        let c = wasserstein_1d_coupling(&mu, &nu).unwrap();
        let cost = CostMatrix::squared_euclidean(mu.points(), nu.points()).unwrap();
        let (_, lp_value) = solve_kantorovich(&cost, mu.weights(), nu.weights()).unwrap();
        assert_abs_diff_eq!(c.transport_cost(cost.entries()), lp_value, epsilon = 1e-10);
        // NW corner splits the second source atom across both targets.
        assert_abs_diff_eq!(c.matrix()[(1, 0)], 0.4, epsilon = 1e-12);
        assert_abs_diff_eq!(c.matrix()[(1, 1)], 0.3, epsilon = 1e-12);
    }

    #[test]
    fn monotone_coupling_agrees_with_lp_on_random_1d_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..15 {
            let n = rng.random_range(2..8);
            let m = rng.random_range(2..8);
            let xs: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
            let ys: Vec<f64> = (0..m).map(|_| rng.random_range(-3.0..3.0)).collect();
            let mut wp: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
            let mut wq: Vec<f64> = (0..m).map(|_| rng.random_range(0.05..1.0)).collect();
            let sp: f64 = wp.iter().sum();
            let sq: f64 = wq.iter().sum();
            wp.iter_mut().for_each(|w| *w /= sp);
            wq.iter_mut().for_each(|w| *w /= sq);
            let mu = DiscreteMeasure::weighted_1d(&xs, &wp).unwrap();
            let nu = DiscreteMeasure::weighted_1d(&ys, &wq).unwrap();
            let cost = CostMatrix::squared_euclidean(mu.points(), nu.points()).unwrap();
            let monotone = wasserstein_1d_coupling(&mu, &nu).unwrap();
            let (_, lp_value) = solve_kantorovich(&cost, mu.weights(), nu.weights()).unwrap();
            assert_abs_diff_eq!(
                monotone.transport_cost(cost.entries()),
                lp_value,
                epsilon = 1e-10
            );
        }
    }

    #[test]
    fn zero_mass_atoms_are_dropped_and_reembedded() {
        let c = CostMatrix::new(DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 5.0, 5.0, 0.0, 1.0]))
            .unwrap();
        let p = DVector::from_column_slice(&[0.5, 0.0, 0.5]);
        let q = DVector::from_column_slice(&[0.5, 0.5]);
        let (coupling, value) = solve_kantorovich(&c, &p, &q).unwrap();
        assert_abs_diff_eq!(value, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(coupling.matrix().row(1).sum(), 0.0);
    }

    #[test]
    fn rejects_dimension_mismatch_in_monotone_coupling() {
        let mu = DiscreteMeasure::uniform(DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 1.0]))
            .unwrap();
        let nu = DiscreteMeasure::uniform_1d(&[0.0, 1.0]).unwrap();
        assert!(matches!(
            wasserstein_1d_coupling(&mu, &nu),
            Err(Error::DimensionMismatch(_))
        ));
    }
}
