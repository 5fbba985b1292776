//! Triangular reference couplings built by recursing over coordinates:
//! classical Knothe-Rosenblatt (ascending 1D rearrangement of every
//! conditional) and the alternate variant whose per-conditional 1D coupling is
//! the cheaper of the ascending/descending monotone candidates under the
//! inner-product GW energy.
//!
//! Conditional slices of discrete data are formed by exact-value grouping of
//! the preceding coordinates (optionally quantized with a width `delta`).
//! When a level's coupling splits an atom, the recursion carries fractional
//! masses, mirroring north-west-corner behavior.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::exact_ot::{monotone_coupling_1d, MonotoneDirection};
use crate::gw_1d::inner_gw_1d;
use crate::measures::{Coupling, DiscreteMeasure, ZERO_MASS};

/// A triangular coupling together with the majority monotone direction chosen
/// at each recursion level (mass-weighted across conditional slices).
#[derive(Debug, Clone)]
pub struct TriangularCoupling {
    pub coupling: Coupling,
    pub level_directions: Vec<MonotoneDirection>,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Variant {
    Classical,
    Alternate,
}

/// Classical Knothe-Rosenblatt coupling: all levels ascending.
pub fn classical_kr(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<TriangularCoupling> {
    build_kr(mu, nu, 0.0, Variant::Classical)
}

/// Classical Knothe-Rosenblatt with quantized conditional grouping.
pub fn classical_kr_quantized(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    delta: f64,
) -> Result<TriangularCoupling> {
    build_kr(mu, nu, delta, Variant::Classical)
}

/// Alternate Knothe-Rosenblatt coupling: each conditional slice picks the
/// monotone direction minimizing the 1D inner-product GW energy.
pub fn alternate_kr(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<TriangularCoupling> {
    build_kr(mu, nu, 0.0, Variant::Alternate)
}

/// Alternate Knothe-Rosenblatt with quantized conditional grouping.
pub fn alternate_kr_quantized(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    delta: f64,
) -> Result<TriangularCoupling> {
    build_kr(mu, nu, delta, Variant::Alternate)
}

fn build_kr(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    delta: f64,
    variant: Variant,
) -> Result<TriangularCoupling> {
    if mu.dim() != nu.dim() {
        return Err(Error::DimensionMismatch(format!(
            "measure dimensions {} vs {}",
            mu.dim(),
            nu.dim()
        )));
    }
    if delta < 0.0 || !delta.is_finite() {
        return Err(Error::NumericalFailure(format!(
            "quantization width must be nonnegative, got {delta}"
        )));
    }
    let d = mu.dim();
    let mut plan = DMatrix::zeros(mu.len(), nu.len());
    let mut tallies = vec![(0.0f64, 0.0f64); d];

    let root = Slice {
        mu_members: (0..mu.len()).collect(),
        mu_masses: mu.weights().iter().copied().collect(),
        nu_members: (0..nu.len()).collect(),
        nu_masses: nu.weights().iter().copied().collect(),
    };
    recurse(mu, nu, root, 0, delta, variant, &mut plan, &mut tallies)?;

    let level_directions = tallies
        .iter()
        .map(|&(asc, desc)| {
            if desc > asc {
                MonotoneDirection::Descending
            } else {
                MonotoneDirection::Ascending
            }
        })
        .collect();
    let coupling = Coupling::new(plan, mu.weights().clone(), nu.weights().clone())?;
    Ok(TriangularCoupling {
        coupling,
        level_directions,
    })
}

/// A conditional slice: atom ids into the original supports with the
/// (possibly fractional) masses they carry at this recursion depth.
struct Slice {
    mu_members: Vec<usize>,
    mu_masses: Vec<f64>,
    nu_members: Vec<usize>,
    nu_masses: Vec<f64>,
}

#[allow(clippy::too_many_arguments)]
fn recurse(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    slice: Slice,
    level: usize,
    delta: f64,
    variant: Variant,
    plan: &mut DMatrix<f64>,
    tallies: &mut [(f64, f64)],
) -> Result<()> {
    let total: f64 = slice.mu_masses.iter().sum();
    if total < ZERO_MASS {
        return Ok(());
    }

    if level == mu.dim() {
        // exhausted all coordinates: distribute the independent product
        for (i, &atom_i) in slice.mu_members.iter().enumerate() {
            for (j, &atom_j) in slice.nu_members.iter().enumerate() {
                plan[(atom_i, atom_j)] += slice.mu_masses[i] * slice.nu_masses[j] / total;
            }
        }
        return Ok(());
    }

    let mu_groups = group_by_coordinate(mu, &slice.mu_members, &slice.mu_masses, level, delta);
    let nu_groups = group_by_coordinate(nu, &slice.nu_members, &slice.nu_masses, level, delta);

    let nu_total: f64 = slice.nu_masses.iter().sum();
    let mu_1d = DiscreteMeasure::weighted_1d(
        &mu_groups.iter().map(|g| g.value).collect::<Vec<_>>(),
        &mu_groups.iter().map(|g| g.mass / total).collect::<Vec<_>>(),
    )?;
    let nu_1d = DiscreteMeasure::weighted_1d(
        &nu_groups.iter().map(|g| g.value).collect::<Vec<_>>(),
        &nu_groups.iter().map(|g| g.mass / nu_total).collect::<Vec<_>>(),
    )?;

    let (level_coupling, direction) = match variant {
        Variant::Classical => (
            monotone_coupling_1d(&mu_1d, &nu_1d, MonotoneDirection::Ascending)?,
            MonotoneDirection::Ascending,
        ),
        Variant::Alternate => {
            let choice = inner_gw_1d(&mu_1d, &nu_1d)?;
            (choice.coupling, choice.direction)
        }
    };
    match direction {
        MonotoneDirection::Ascending => tallies[level].0 += total,
        MonotoneDirection::Descending => tallies[level].1 += total,
    }

    for (a, ga) in mu_groups.iter().enumerate() {
        for (b, gb) in nu_groups.iter().enumerate() {
            let cell_mass = level_coupling.matrix()[(a, b)] * total;
            if cell_mass < ZERO_MASS {
                continue;
            }
            let sub = Slice {
                mu_members: ga.members.iter().map(|&p| slice.mu_members[p]).collect(),
                mu_masses: ga
                    .members
                    .iter()
                    .map(|&p| slice.mu_masses[p] * cell_mass / ga.mass)
                    .collect(),
                nu_members: gb.members.iter().map(|&p| slice.nu_members[p]).collect(),
                nu_masses: gb
                    .members
                    .iter()
                    .map(|&p| slice.nu_masses[p] * cell_mass / gb.mass)
                    .collect(),
            };
            recurse(mu, nu, sub, level + 1, delta, variant, plan, tallies)?;
        }
    }
    Ok(())
}

/// A run of equal (or `delta`-quantized) level coordinates within a slice.
struct Group {
    /// Mass-weighted representative coordinate.
    value: f64,
    /// Positions into the slice's member/mass arrays.
    members: Vec<usize>,
    mass: f64,
}

fn group_by_coordinate(
    measure: &DiscreteMeasure,
    members: &[usize],
    masses: &[f64],
    level: usize,
    delta: f64,
) -> Vec<Group> {
    let key = |atom: usize| -> f64 {
        let v = measure.points()[(atom, level)];
        if delta > 0.0 {
            (v / delta).floor()
        } else {
            v
        }
    };
    let mut order: Vec<usize> = (0..members.len()).collect();
    order.sort_by(|&a, &b| {
        key(members[a])
            .partial_cmp(&key(members[b]))
            .expect("finite coordinates")
            .then(members[a].cmp(&members[b]))
    });

    let mut grouped: Vec<(f64, Vec<usize>)> = Vec::new();
    for &pos in &order {
        let k = key(members[pos]);
        match grouped.last_mut() {
            Some((gk, ps)) if *gk == k => ps.push(pos),
            _ => grouped.push((k, vec![pos])),
        }
    }
    grouped
        .into_iter()
        .map(|(_, ps)| {
            let mass: f64 = ps.iter().map(|&p| masses[p]).sum();
            let value = if mass > 0.0 {
                ps.iter()
                    .map(|&p| measure.points()[(members[p], level)] * masses[p])
                    .sum::<f64>()
                    / mass
            } else {
                measure.points()[(members[ps[0]], level)]
            };
            Group {
                value,
                members: ps,
                mass,
            }
        })
        .collect()
}
