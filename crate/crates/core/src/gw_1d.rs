//! Closed-form 1D Gromov-Wasserstein with the inner-product loss: the optimum
//! over couplings is attained by a monotone rearrangement, either ascending
//! (both supports sorted the same way) or descending (one support reversed).
//! Both candidates are built and their quadratic energies compared exactly.

use crate::error::{Error, Result};
use crate::exact_ot::{monotone_coupling_1d, MonotoneDirection};
use crate::hadamard::{hw_energy, HwInstance};
use crate::measures::{Coupling, DiscreteMeasure};

/// Ties between the two candidate energies are resolved to ascending below
/// this gap, keeping outputs deterministic.
pub const DIRECTION_TIE_TOLERANCE: f64 = 1e-12;

/// The selected monotone candidate with its coupling and exact energy.
#[derive(Debug, Clone)]
pub struct MonotoneChoice {
    pub direction: MonotoneDirection,
    pub coupling: Coupling,
    pub cost: f64,
}

/// Solves the 1D inner-product GW problem by evaluating the ascending and the
/// descending rearrangement and returning the cheaper one. The energy is
/// evaluated through the Hadamard contraction restricted to one dimension.
pub fn inner_gw_1d(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<MonotoneChoice> {
    if mu.dim() != 1 || nu.dim() != 1 {
        return Err(Error::DimensionMismatch(format!(
            "inner_gw_1d needs 1D measures, got {} and {}",
            mu.dim(),
            nu.dim()
        )));
    }
    let inst = HwInstance::from_measures(mu, nu)?;

    let ascending = monotone_coupling_1d(mu, nu, MonotoneDirection::Ascending)?;
    let descending = monotone_coupling_1d(mu, nu, MonotoneDirection::Descending)?;
    let cost_asc = hw_energy(&inst, &ascending)?;
    let cost_desc = hw_energy(&inst, &descending)?;

    if cost_desc < cost_asc - DIRECTION_TIE_TOLERANCE {
        Ok(MonotoneChoice {
            direction: MonotoneDirection::Descending,
            coupling: descending,
            cost: cost_desc,
        })
    } else {
        Ok(MonotoneChoice {
            direction: MonotoneDirection::Ascending,
            coupling: ascending,
            cost: cost_asc,
        })
    }
}

/// 1D inner-product GW energy of an arbitrary coupling (test and diagnostics
/// helper; the solver itself only compares the two monotone candidates).
pub fn inner_gw_energy_1d(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    coupling: &Coupling,
) -> Result<f64> {
    if mu.dim() != 1 || nu.dim() != 1 {
        return Err(Error::DimensionMismatch(
            "inner_gw_energy_1d needs 1D measures".into(),
        ));
    }
    let inst = HwInstance::from_measures(mu, nu)?;
    hw_energy(&inst, coupling)
}

/// Negates a 1D measure's support (diagnostics helper for the sign-flip
/// covariance of the monotone choice).
pub fn negate_support(mu: &DiscreteMeasure) -> DiscreteMeasure {
    let points = mu.points().map(|v| -v);
    DiscreteMeasure::new(points, mu.weights().clone()).expect("negation preserves validity")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use itertools::Itertools;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn inner_energy_of_permutation(xs: &[f64], ys: &[f64], perm: &[usize]) -> f64 {
        let n = xs.len() as f64;
        let mut total = 0.0;
        for (i, &pi) in perm.iter().enumerate() {
            for (k, &pk) in perm.iter().enumerate() {
                let diff = xs[i] * xs[k] - ys[pi] * ys[pk];
                total += diff * diff;
            }
        }
        total / (n * n)
    }

    #[test]
    fn identical_measures_choose_ascending_with_zero_cost() {
        let mu = DiscreteMeasure::uniform_1d(&[1.0, 2.0, 3.0]).unwrap();
        let choice = inner_gw_1d(&mu, &mu).unwrap();
        assert_eq!(choice.direction, MonotoneDirection::Ascending);
        assert_abs_diff_eq!(choice.cost, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn negated_target_prefers_descending() {
        let mu = DiscreteMeasure::uniform_1d(&[1.0, 2.0]).unwrap();
        let nu = DiscreteMeasure::uniform_1d(&[-2.0, -1.0]).unwrap();
        let choice = inner_gw_1d(&mu, &nu).unwrap();
        assert_eq!(choice.direction, MonotoneDirection::Descending);
        // pairing 1 -> -1, 2 -> -2 preserves pairwise products better
        assert_abs_diff_eq!(choice.coupling.matrix()[(0, 1)], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(choice.coupling.matrix()[(1, 0)], 0.5, epsilon = 1e-12);
        // returned cost matches the exhaustive minimum over both candidates
        let asc = inner_energy_of_permutation(&[1.0, 2.0], &[-2.0, -1.0], &[0, 1]);
        let desc = inner_energy_of_permutation(&[1.0, 2.0], &[-2.0, -1.0], &[1, 0]);
        assert_abs_diff_eq!(choice.cost, asc.min(desc), epsilon = 1e-12);
    }

    #[test]
    fn matches_exhaustive_permutation_minimum_at_desk_scale() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for trial in 0..20 {
            let n = 2 + trial % 5;
            let xs: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
            let ys: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
            let mu = DiscreteMeasure::uniform_1d(&xs).unwrap();
            let nu = DiscreteMeasure::uniform_1d(&ys).unwrap();
            let choice = inner_gw_1d(&mu, &nu).unwrap();
            let oracle = (0..n)
                .permutations(n)
                .map(|perm| inner_energy_of_permutation(&xs, &ys, &perm))
                .fold(f64::INFINITY, f64::min);
            assert_abs_diff_eq!(choice.cost, oracle, epsilon = 1e-9);
        }
    }

    #[test]
    fn sign_flip_keeps_cost_and_flips_direction() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        for _ in 0..10 {
            let n = rng.random_range(2..7);
            let xs: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..3.0)).collect();
            let ys: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..3.0)).collect();
            let mu = DiscreteMeasure::uniform_1d(&xs).unwrap();
            let nu = DiscreteMeasure::uniform_1d(&ys).unwrap();
            let base = inner_gw_1d(&mu, &nu).unwrap();
            let flipped = inner_gw_1d(&negate_support(&mu), &nu).unwrap();
            assert_abs_diff_eq!(base.cost, flipped.cost, epsilon = 1e-10);
            // strictly positive supports make the optimum unique generically
            if (base.cost - flipped.cost).abs() > 1e-14 {
                continue;
            }
            assert_ne!(base.direction, flipped.direction);
        }
    }

    #[test]
    fn dominates_random_feasible_couplings() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let xs: Vec<f64> = (0..6).map(|_| rng.random_range(-2.0..2.0)).collect();
        let ys: Vec<f64> = (0..6).map(|_| rng.random_range(-2.0..2.0)).collect();
        let mu = DiscreteMeasure::uniform_1d(&xs).unwrap();
        let nu = DiscreteMeasure::uniform_1d(&ys).unwrap();
        let choice = inner_gw_1d(&mu, &nu).unwrap();
        let n = 6;
        for _ in 0..50 {
            // random Birkhoff mixture of a few permutation matrices
            let mut matrix = nalgebra::DMatrix::zeros(n, n);
            let mut weights: Vec<f64> = (0..3).map(|_| rng.random_range(0.1..1.0)).collect();
            let total: f64 = weights.iter().sum();
            weights.iter_mut().for_each(|w| *w /= total);
            for &w in &weights {
                let mut perm: Vec<usize> = (0..n).collect();
                for i in (1..n).rev() {
                    perm.swap(i, rng.random_range(0..=i));
                }
                for (i, &j) in perm.iter().enumerate() {
                    matrix[(i, j)] += w / n as f64;
                }
            }
            let random_coupling =
                Coupling::new(matrix, mu.weights().clone(), nu.weights().clone()).unwrap();
            let energy = inner_gw_energy_1d(&mu, &nu, &random_coupling).unwrap();
            assert!(choice.cost <= energy + 1e-9);
        }
    }

    #[test]
    fn symmetric_instance_ties_to_ascending() {
        let mu = DiscreteMeasure::uniform_1d(&[-1.0, 1.0]).unwrap();
        let nu = DiscreteMeasure::uniform_1d(&[-1.0, 1.0]).unwrap();
        let choice = inner_gw_1d(&mu, &nu).unwrap();
        assert_eq!(choice.direction, MonotoneDirection::Ascending);
    }

    #[test]
    fn rejects_multidimensional_input() {
        let mu =
            DiscreteMeasure::uniform(nalgebra::DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 1.0]))
                .unwrap();
        let nu = DiscreteMeasure::uniform_1d(&[0.0, 1.0]).unwrap();
        assert!(inner_gw_1d(&mu, &nu).is_err());
    }
}
