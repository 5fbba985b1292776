//! Closed-form transport between Gaussian measures: the Monge map of the
//! Gaussian-restricted quadratic GW problem, the block-triangular
//! Monge-Knothe map, and the Monge-Independent joint covariance.
//!
//! All block formulas operate on covariances rotated into the subspace bases
//! `[V_E | V_E_perp]` / `[V_F | V_F_perp]`; returned maps are expressed in the
//! original coordinates.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::measures::{GaussianMeasure, Subspace};

/// Eigenvalues below this make a block unusable for the closed forms:
/// covariances are rejected rather than regularized, callers may
/// pre-regularize.
pub const MIN_EIGENVALUE: f64 = 1e-12;
/// Pushforward residual allowed before a closed-form map is considered broken.
pub const PUSHFORWARD_TOLERANCE: f64 = 1e-8;

/// An affine map `x -> linear x + offset`.
#[derive(Debug, Clone)]
pub struct AffineMap {
    pub linear: DMatrix<f64>,
    pub offset: DVector<f64>,
}

impl AffineMap {
    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.linear * x + &self.offset
    }

    /// Covariance of the pushforward of a Gaussian with covariance `cov`.
    pub fn push_covariance(&self, cov: &DMatrix<f64>) -> DMatrix<f64> {
        &self.linear * cov * self.linear.transpose()
    }
}

/// Covariance of `R^p` split along a `k`-dimensional subspace into the four
/// blocks `(E, E)`, `(E, E_perp)`, `(E_perp, E)` and `(E_perp, E_perp)`.
#[derive(Debug, Clone)]
pub struct BlockPartition {
    pub sigma_e: DMatrix<f64>,
    pub sigma_e_ep: DMatrix<f64>,
    pub sigma_ep_e: DMatrix<f64>,
    pub sigma_ep: DMatrix<f64>,
}

impl BlockPartition {
    pub fn new(
        sigma_e: DMatrix<f64>,
        sigma_e_ep: DMatrix<f64>,
        sigma_ep_e: DMatrix<f64>,
        sigma_ep: DMatrix<f64>,
    ) -> Result<Self> {
        let k = sigma_e.nrows();
        let r = sigma_ep.nrows();
        if sigma_e.ncols() != k
            || sigma_ep.ncols() != r
            || sigma_e_ep.shape() != (k, r)
            || sigma_ep_e.shape() != (r, k)
        {
            return Err(Error::DimensionMismatch(format!(
                "inconsistent block shapes {:?}/{:?}/{:?}/{:?}",
                sigma_e.shape(),
                sigma_e_ep.shape(),
                sigma_ep_e.shape(),
                sigma_ep.shape()
            )));
        }
        if (&sigma_e_ep - sigma_ep_e.transpose()).abs().max() > 1e-10 {
            return Err(Error::NumericalFailure(
                "cross blocks are not transposes of each other".into(),
            ));
        }
        let part = Self {
            sigma_e,
            sigma_e_ep,
            sigma_ep_e,
            sigma_ep,
        };
        let assembled = part.assemble();
        let min_eig = SymmetricEigen::new((&assembled + assembled.transpose()) * 0.5)
            .eigenvalues
            .min();
        if min_eig < -1e-10 {
            return Err(Error::DegenerateCovariance(format!(
                "assembled block matrix has minimum eigenvalue {min_eig}"
            )));
        }
        Ok(part)
    }

    /// Splits a covariance at coordinate `k` (subspace = first `k` axes).
    pub fn from_covariance(cov: &DMatrix<f64>, k: usize) -> Result<Self> {
        let p = cov.nrows();
        if cov.ncols() != p || k == 0 || k > p {
            return Err(Error::DimensionMismatch(format!(
                "cannot split {}x{} covariance at {k}",
                cov.nrows(),
                cov.ncols()
            )));
        }
        Self::new(
            cov.view((0, 0), (k, k)).into_owned(),
            cov.view((0, k), (k, p - k)).into_owned(),
            cov.view((k, 0), (p - k, k)).into_owned(),
            cov.view((k, k), (p - k, p - k)).into_owned(),
        )
    }

    /// Rotates a covariance into the subspace basis and splits it there.
    pub fn from_covariance_in_subspace(cov: &DMatrix<f64>, subspace: &Subspace) -> Result<Self> {
        if cov.nrows() != subspace.ambient_dim() {
            return Err(Error::DimensionMismatch(format!(
                "covariance {}x{} vs subspace ambient dimension {}",
                cov.nrows(),
                cov.ncols(),
                subspace.ambient_dim()
            )));
        }
        let w = subspace.full_basis();
        let rotated = w.transpose() * cov * &w;
        let symmetrized = (&rotated + rotated.transpose()) * 0.5;
        Self::from_covariance(&symmetrized, subspace.dim())
    }

    pub fn assemble(&self) -> DMatrix<f64> {
        let k = self.sigma_e.nrows();
        let r = self.sigma_ep.nrows();
        let mut out = DMatrix::zeros(k + r, k + r);
        out.view_mut((0, 0), (k, k)).copy_from(&self.sigma_e);
        out.view_mut((0, k), (k, r)).copy_from(&self.sigma_e_ep);
        out.view_mut((k, 0), (r, k)).copy_from(&self.sigma_ep_e);
        out.view_mut((k, k), (r, r)).copy_from(&self.sigma_ep);
        out
    }
}

/// Schur complement `Sigma_Ep - Sigma_EEp^T Sigma_E^{-1} Sigma_EEp`: the
/// covariance of the Gaussian conditional on the subspace coordinates.
pub fn schur_complement(part: &BlockPartition) -> Result<DMatrix<f64>> {
    let inv = invert_pd(&part.sigma_e, "sigma_E")?;
    let out = &part.sigma_ep - &part.sigma_ep_e * inv * &part.sigma_e_ep;
    Ok((&out + out.transpose()) * 0.5)
}

fn invert_pd(mat: &DMatrix<f64>, label: &str) -> Result<DMatrix<f64>> {
    let min_eig = SymmetricEigen::new((mat + mat.transpose()) * 0.5)
        .eigenvalues
        .min();
    if min_eig <= MIN_EIGENVALUE {
        return Err(Error::SingularBlock(format!(
            "{label} has minimum eigenvalue {min_eig}"
        )));
    }
    nalgebra::Cholesky::new(mat.clone())
        .map(|c| c.inverse())
        .ok_or_else(|| Error::SingularBlock(format!("{label} is not positive definite")))
}

/// Symmetric eigendecomposition sorted by descending eigenvalue, with each
/// eigenvector's largest-magnitude entry made positive (deterministic output).
fn sorted_symmetric_eigen(mat: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = mat.nrows();
    let eig = SymmetricEigen::new((mat + mat.transpose()) * 0.5);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .expect("finite eigenvalues")
            .then(a.cmp(&b))
    });
    let mut values = DVector::zeros(n);
    let mut vectors = DMatrix::zeros(n, n);
    for (pos, &src) in order.iter().enumerate() {
        values[pos] = eig.eigenvalues[src];
        let mut col = eig.eigenvectors.column(src).into_owned();
        let mut lead = 0usize;
        for i in 1..n {
            if col[i].abs() > col[lead].abs() {
                lead = i;
            }
        }
        if col[lead] < 0.0 {
            col = -col;
        }
        vectors.column_mut(pos).copy_from(&col);
    }
    (values, vectors)
}

/// Monge map of the Gaussian-restricted quadratic GW problem between a
/// `p`-dimensional and a `q <= p`-dimensional Gaussian:
/// `T(x) = m_nu + P_nu A P_mu^T (x - m_mu)` with
/// `A = [ S D_nu^(1/2) (D_mu^(q))^(-1/2) | 0 ]`, `S = diag(signs)`, and the
/// eigenvalues sorted descending. Defaults to the all-plus sign pattern.
pub fn ggw_map(
    mu: &GaussianMeasure,
    nu: &GaussianMeasure,
    signs: Option<&[f64]>,
) -> Result<AffineMap> {
    let p = mu.dim();
    let q = nu.dim();
    if q > p {
        return Err(Error::DimensionMismatch(format!(
            "target dimension {q} exceeds source dimension {p}"
        )));
    }
    let sign_vec: Vec<f64> = match signs {
        Some(s) => {
            if s.len() != q {
                return Err(Error::DimensionMismatch(format!(
                    "{} signs for target dimension {q}",
                    s.len()
                )));
            }
            if s.iter().any(|&v| v != 1.0 && v != -1.0) {
                return Err(Error::NumericalFailure(
                    "sign pattern entries must be +1 or -1".into(),
                ));
            }
            s.to_vec()
        }
        None => vec![1.0; q],
    };

    let (d_mu, p_mu) = sorted_symmetric_eigen(mu.covariance());
    let (d_nu, p_nu) = sorted_symmetric_eigen(nu.covariance());
    if d_mu[p - 1] <= MIN_EIGENVALUE {
        return Err(Error::DegenerateCovariance(format!(
            "source covariance has minimum eigenvalue {}",
            d_mu[p - 1]
        )));
    }

    let mut a = DMatrix::zeros(q, p);
    for i in 0..q {
        a[(i, i)] = sign_vec[i] * (d_nu[i].max(0.0) / d_mu[i]).sqrt();
    }
    let linear = &p_nu * a * p_mu.transpose();
    let offset = nu.mean() - &linear * mu.mean();
    let map = AffineMap { linear, offset };

    let residual = (map.push_covariance(mu.covariance()) - nu.covariance()).norm();
    if residual > PUSHFORWARD_TOLERANCE {
        return Err(Error::NumericalFailure(format!(
            "pushforward residual {residual} exceeds {PUSHFORWARD_TOLERANCE}"
        )));
    }
    Ok(map)
}

/// A Monge-Knothe map with its diagnostics: the affine map in original
/// coordinates, the block lower-triangular matrix in the `[E|E_perp]` /
/// `[F|F_perp]` bases, the two diagonal transport blocks and the cross block.
#[derive(Debug, Clone)]
pub struct MongeKnotheMap {
    pub map: AffineMap,
    /// `q x p` matrix in the subspace bases; its upper-right block is exactly 0.
    pub block_matrix: DMatrix<f64>,
    pub t_parallel: DMatrix<f64>,
    pub t_orthogonal: DMatrix<f64>,
    pub cross: DMatrix<f64>,
    pub pushforward_residual: f64,
}

/// Closed-form Monge-Knothe transport map between Gaussians for equal
/// subspace dimensions: couples the subspace marginals by the Gaussian GW map,
/// the conditionals by the Gaussian GW map between Schur complements, and
/// fills the cross block so that `B Sigma B^T = Lambda`.
pub fn mk_gaussian_map(
    mu: &GaussianMeasure,
    nu: &GaussianMeasure,
    e: &Subspace,
    f: &Subspace,
) -> Result<MongeKnotheMap> {
    let p = mu.dim();
    let q = nu.dim();
    if q > p {
        return Err(Error::DimensionMismatch(format!(
            "target dimension {q} exceeds source dimension {p}"
        )));
    }
    if e.ambient_dim() != p || f.ambient_dim() != q {
        return Err(Error::DimensionMismatch(
            "subspace ambient dimensions do not match the measures".into(),
        ));
    }
    let k = e.dim();
    if f.dim() != k {
        return Err(Error::DimensionMismatch(format!(
            "subspace dimensions must be equal, got {k} and {}",
            f.dim()
        )));
    }

    let sigma = BlockPartition::from_covariance_in_subspace(mu.covariance(), e)?;
    let lambda = BlockPartition::from_covariance_in_subspace(nu.covariance(), f)?;

    let t_parallel = ggw_map(
        &GaussianMeasure::centered(sigma.sigma_e.clone())?,
        &GaussianMeasure::centered(lambda.sigma_e.clone())?,
        None,
    )?
    .linear;

    let (t_orthogonal, cross) = if q == k {
        (DMatrix::zeros(0, p - k), DMatrix::zeros(0, k))
    } else {
        let schur_sigma = schur_complement(&sigma)?;
        let schur_lambda = schur_complement(&lambda)?;
        let t_orth = ggw_map(
            &GaussianMeasure::centered(schur_sigma)?,
            &GaussianMeasure::centered(schur_lambda)?,
            None,
        )?
        .linear;
        let t_par_inv_t = t_parallel
            .transpose()
            .lu()
            .try_inverse()
            .ok_or_else(|| Error::SingularBlock("subspace transport map is singular".into()))?;
        let sigma_e_inv = invert_pd(&sigma.sigma_e, "sigma_E")?;
        let cross = (&lambda.sigma_ep_e * t_par_inv_t - &t_orth * &sigma.sigma_ep_e) * sigma_e_inv;
        (t_orth, cross)
    };

    let mut block = DMatrix::zeros(q, p);
    block.view_mut((0, 0), (k, k)).copy_from(&t_parallel);
    block.view_mut((k, 0), (q - k, k)).copy_from(&cross);
    block
        .view_mut((k, k), (q - k, p - k))
        .copy_from(&t_orthogonal);

    let w_e = e.full_basis();
    let w_f = f.full_basis();
    let linear = &w_f * &block * w_e.transpose();
    let offset = nu.mean() - &linear * mu.mean();
    let map = AffineMap { linear, offset };

    let pushforward_residual = (map.push_covariance(mu.covariance()) - nu.covariance()).norm();
    if pushforward_residual > PUSHFORWARD_TOLERANCE {
        return Err(Error::NumericalFailure(format!(
            "Monge-Knothe pushforward residual {pushforward_residual}"
        )));
    }
    Ok(MongeKnotheMap {
        map,
        block_matrix: block,
        t_parallel,
        t_orthogonal,
        cross,
        pushforward_residual,
    })
}

/// A Monge-Independent joint plan with diagnostics.
#[derive(Debug, Clone)]
pub struct MongeIndependentPlan {
    /// Degenerate Gaussian on `R^(p+q)` whose marginals are the inputs.
    pub joint: GaussianMeasure,
    /// The `p x q` cross-covariance block in original coordinates.
    pub cross: DMatrix<f64>,
    /// The subspace transport map the plan was glued around (`k' x k`).
    pub t_parallel: DMatrix<f64>,
}

/// Closed-form Monge-Independent plan between centered Gaussians: a Gaussian
/// on `R^(p+q)` with diagonal blocks `Sigma`, `Lambda` and cross block
/// `C = (V_E Sigma_E + V_Ep Sigma_EpE) T^T (V_F^T + Lambda_F^{-1}
/// Lambda_FpF^T V_Fp^T)`.
pub fn mi_gaussian_plan(
    mu: &GaussianMeasure,
    nu: &GaussianMeasure,
    e: &Subspace,
    f: &Subspace,
) -> Result<MongeIndependentPlan> {
    let p = mu.dim();
    let q = nu.dim();
    if mu.mean().abs().max() > 1e-12 || nu.mean().abs().max() > 1e-12 {
        return Err(Error::NotCentered);
    }
    if e.ambient_dim() != p || f.ambient_dim() != q {
        return Err(Error::DimensionMismatch(
            "subspace ambient dimensions do not match the measures".into(),
        ));
    }
    let k = e.dim();
    let kp = f.dim();
    if kp > k {
        return Err(Error::DimensionMismatch(format!(
            "target subspace dimension {kp} exceeds source subspace dimension {k}"
        )));
    }

    let sigma = BlockPartition::from_covariance_in_subspace(mu.covariance(), e)?;
    let lambda = BlockPartition::from_covariance_in_subspace(nu.covariance(), f)?;

    let t_parallel = ggw_map(
        &GaussianMeasure::centered(sigma.sigma_e.clone())?,
        &GaussianMeasure::centered(lambda.sigma_e.clone())?,
        None,
    )?
    .linear;

    let cross = assemble_mi_cross(&sigma, &lambda, e, f, &t_parallel)?;

    let mut gamma = DMatrix::zeros(p + q, p + q);
    gamma.view_mut((0, 0), (p, p)).copy_from(mu.covariance());
    gamma.view_mut((0, p), (p, q)).copy_from(&cross);
    gamma
        .view_mut((p, 0), (q, p))
        .copy_from(&cross.transpose());
    gamma.view_mut((p, p), (q, q)).copy_from(nu.covariance());

    let min_eig = SymmetricEigen::new((&gamma + gamma.transpose()) * 0.5)
        .eigenvalues
        .min();
    if min_eig < -1e-10 {
        return Err(Error::NumericalFailure(format!(
            "Monge-Independent covariance has minimum eigenvalue {min_eig}"
        )));
    }
    let joint = GaussianMeasure::new(DVector::zeros(p + q), gamma)?;
    Ok(MongeIndependentPlan {
        joint,
        cross,
        t_parallel,
    })
}

/// The compact cross-block formula; also used directly by tests to check the
/// degenerate `T = 0` case and the cell-by-cell block expansion.
pub(crate) fn assemble_mi_cross(
    sigma: &BlockPartition,
    lambda: &BlockPartition,
    e: &Subspace,
    f: &Subspace,
    t_parallel: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let lambda_f_inv = invert_pd(&lambda.sigma_e, "lambda_F")?;
    let left = e.basis() * &sigma.sigma_e + e.complement_basis() * &sigma.sigma_ep_e;
    let right = f.basis().transpose()
        + lambda_f_inv * lambda.sigma_ep_e.transpose() * f.complement_basis().transpose();
    Ok(left * t_parallel.transpose() * right)
}
