//! Core data types shared by every solver: weighted point clouds, couplings
//! with prescribed marginals, Gaussian measures and orthonormal subspaces.
//!
//! All types are immutable after construction and safe to share across
//! concurrent solver invocations.

use std::io::Read;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Weight sums are renormalized when within this tolerance of 1, rejected otherwise.
pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-6;
/// Maximum allowed deviation of coupling row/column sums from their marginals.
pub const MARGINAL_TOLERANCE: f64 = 1e-9;
/// Orthonormality tolerance for subspace bases.
pub const ORTHONORMAL_TOLERANCE: f64 = 1e-10;
/// Atoms lighter than this are treated as zero mass by the solvers.
pub const ZERO_MASS: f64 = 1e-15;

/// A weighted point cloud in `d` dimensions with weights on the simplex.
#[derive(Debug, Clone)]
pub struct DiscreteMeasure {
    points: DMatrix<f64>,
    weights: DVector<f64>,
}

impl DiscreteMeasure {
    /// Validated constructor. Weights must be nonnegative and sum to 1 within
    /// [`WEIGHT_SUM_TOLERANCE`]; the sum is then renormalized to exactly 1.
    /// Silent renormalization of badly scaled input would hide user bugs, so
    /// larger deviations are rejected.
    pub fn new(points: DMatrix<f64>, weights: DVector<f64>) -> Result<Self> {
        let n = points.nrows();
        if n == 0 {
            return Err(Error::EmptySupport);
        }
        if weights.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "{} points but {} weights",
                n,
                weights.len()
            )));
        }
        if points.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue("measure support points"));
        }
        for (i, &w) in weights.iter().enumerate() {
            if !w.is_finite() {
                return Err(Error::NonFiniteValue("measure weights"));
            }
            if w < 0.0 {
                return Err(Error::NegativeWeight { index: i, value: w });
            }
        }
        let sum: f64 = weights.sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
            return Err(Error::WeightSumOutOfTolerance {
                sum,
                tolerance: WEIGHT_SUM_TOLERANCE,
            });
        }
        Ok(Self {
            points,
            weights: weights / sum,
        })
    }

    /// Uniform weights over the given support.
    pub fn uniform(points: DMatrix<f64>) -> Result<Self> {
        let n = points.nrows();
        if n == 0 {
            return Err(Error::EmptySupport);
        }
        let w = DVector::from_element(n, 1.0 / n as f64);
        Self::new(points, w)
    }

    /// Uniform one-dimensional measure on the given values.
    pub fn uniform_1d(values: &[f64]) -> Result<Self> {
        Self::uniform(DMatrix::from_column_slice(values.len(), 1, values))
    }

    /// One-dimensional measure with explicit weights.
    pub fn weighted_1d(values: &[f64], weights: &[f64]) -> Result<Self> {
        Self::new(
            DMatrix::from_column_slice(values.len(), 1, values),
            DVector::from_column_slice(weights),
        )
    }

    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        false // n >= 1 by construction
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    pub fn points(&self) -> &DMatrix<f64> {
        &self.points
    }

    pub fn weights(&self) -> &DVector<f64> {
        &self.weights
    }

    /// Coordinates of atom `i` as a column vector.
    pub fn point(&self, i: usize) -> DVector<f64> {
        self.points.row(i).transpose()
    }

    /// Pushforward onto the subspace: points become the `k` coordinate vectors
    /// `basis^T x_i`, weights are unchanged.
    pub fn project_onto(&self, subspace: &Subspace) -> Result<DiscreteMeasure> {
        if self.dim() != subspace.ambient_dim() {
            return Err(Error::DimensionMismatch(format!(
                "measure dimension {} vs subspace ambient dimension {}",
                self.dim(),
                subspace.ambient_dim()
            )));
        }
        let projected = &self.points * subspace.basis();
        DiscreteMeasure::new(projected, self.weights.clone())
    }

    /// Splits each support point into subspace coordinates and orthogonal
    /// complement coordinates. Reassembling through `[basis | complement]`
    /// recovers the original points.
    pub fn split_coordinates(&self, subspace: &Subspace) -> Result<(DiscreteMeasure, DMatrix<f64>)> {
        let projected = self.project_onto(subspace)?;
        let complement_coords = &self.points * subspace.complement_basis();
        Ok((projected, complement_coords))
    }

    /// Reads a point cloud from CSV with header `x0,...,x{d-1}[,w]`.
    /// Without a trailing `w` column the weights are uniform.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| Error::ParseError(format!("csv header: {e}")))?
            .clone();
        let mut names: Vec<&str> = headers.iter().collect();
        let has_weights = names.last() == Some(&"w");
        if has_weights {
            names.pop();
        }
        let d = names.len();
        if d == 0 {
            return Err(Error::ParseError("no coordinate columns".into()));
        }
        for (i, name) in names.iter().enumerate() {
            if *name != format!("x{i}") {
                return Err(Error::ParseError(format!(
                    "expected header column `x{i}`, found `{name}`"
                )));
            }
        }
        let mut coords: Vec<f64> = Vec::new();
        let mut weights: Vec<f64> = Vec::new();
        for (row_idx, record) in rdr.records().enumerate() {
            let record = record.map_err(|e| Error::ParseError(format!("csv row {row_idx}: {e}")))?;
            let expected = d + usize::from(has_weights);
            if record.len() != expected {
                return Err(Error::ParseError(format!(
                    "row {row_idx}: expected {expected} fields, found {}",
                    record.len()
                )));
            }
            for field in record.iter().take(d) {
                let v: f64 = field
                    .parse()
                    .map_err(|e| Error::ParseError(format!("row {row_idx}: {e}")))?;
                coords.push(v);
            }
            if has_weights {
                let w: f64 = record[d]
                    .parse()
                    .map_err(|e| Error::ParseError(format!("row {row_idx}: {e}")))?;
                weights.push(w);
            }
        }
        let n = coords.len() / d;
        if n == 0 {
            return Err(Error::EmptySupport);
        }
        let points = DMatrix::from_row_iterator(n, d, coords.into_iter());
        if has_weights {
            Self::new(points, DVector::from_vec(weights))
        } else {
            Self::uniform(points)
        }
    }

    /// Reads a point cloud from a CSV file; see [`DiscreteMeasure::from_csv_reader`].
    pub fn from_csv_path<P: AsRef<std::path::Path>>(path: P) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::from_csv_reader(file)
    }
}

/// A nonnegative `n x m` matrix of joint masses with prescribed marginals.
#[derive(Debug, Clone)]
pub struct Coupling {
    matrix: DMatrix<f64>,
    row_marginal: DVector<f64>,
    col_marginal: DVector<f64>,
}

impl Coupling {
    /// Validated constructor: entries nonnegative, row and column sums within
    /// [`MARGINAL_TOLERANCE`] of the prescribed marginals.
    pub fn new(
        matrix: DMatrix<f64>,
        row_marginal: DVector<f64>,
        col_marginal: DVector<f64>,
    ) -> Result<Self> {
        let (n, m) = matrix.shape();
        if row_marginal.len() != n || col_marginal.len() != m {
            return Err(Error::DimensionMismatch(format!(
                "coupling {n}x{m} vs marginals {}/{}",
                row_marginal.len(),
                col_marginal.len()
            )));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue("coupling entries"));
        }
        if let Some(v) = matrix.iter().find(|&&v| v < 0.0) {
            return Err(Error::NumericalFailure(format!(
                "negative coupling entry {v}"
            )));
        }
        let residual = marginal_residual(&matrix, &row_marginal, &col_marginal);
        if residual > MARGINAL_TOLERANCE {
            return Err(Error::InfeasibleMarginals { residual });
        }
        Ok(Self {
            matrix,
            row_marginal,
            col_marginal,
        })
    }

    /// Independent product coupling `p q^T`.
    pub fn product(p: &DVector<f64>, q: &DVector<f64>) -> Result<Self> {
        let matrix = p * q.transpose();
        Self::new(matrix, p.clone(), q.clone())
    }

    pub fn nrows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn row_marginal(&self) -> &DVector<f64> {
        &self.row_marginal
    }

    pub fn col_marginal(&self) -> &DVector<f64> {
        &self.col_marginal
    }

    /// Maximum deviation of row/column sums from the prescribed marginals.
    pub fn marginal_residual(&self) -> f64 {
        marginal_residual(&self.matrix, &self.row_marginal, &self.col_marginal)
    }

    /// Linear transport cost `<C, gamma>`.
    pub fn transport_cost(&self, cost: &DMatrix<f64>) -> f64 {
        self.matrix.dot(cost)
    }

    /// Total-variation distance between two couplings on the same supports:
    /// half the entrywise L1 distance.
    pub fn tv_distance(&self, other: &Coupling) -> Result<f64> {
        if self.matrix.shape() != other.matrix.shape() {
            return Err(Error::DimensionMismatch(format!(
                "coupling shapes {:?} vs {:?}",
                self.matrix.shape(),
                other.matrix.shape()
            )));
        }
        Ok(0.5
            * self
                .matrix
                .iter()
                .zip(other.matrix.iter())
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>())
    }

    /// Per-row argmax assignment; ties broken toward the smallest column index.
    pub fn argmax_assignment(&self) -> Vec<usize> {
        (0..self.nrows())
            .map(|i| {
                let row = self.matrix.row(i);
                let mut best = 0usize;
                let mut best_v = row[0];
                for j in 1..row.len() {
                    if row[j] > best_v {
                        best_v = row[j];
                        best = j;
                    }
                }
                best
            })
            .collect()
    }
}

fn marginal_residual(
    matrix: &DMatrix<f64>,
    row_marginal: &DVector<f64>,
    col_marginal: &DVector<f64>,
) -> f64 {
    let mut res: f64 = 0.0;
    for i in 0..matrix.nrows() {
        res = res.max((matrix.row(i).sum() - row_marginal[i]).abs());
    }
    for j in 0..matrix.ncols() {
        res = res.max((matrix.column(j).sum() - col_marginal[j]).abs());
    }
    res
}

/// A Gaussian measure: mean vector plus symmetric PSD covariance.
#[derive(Debug, Clone)]
pub struct GaussianMeasure {
    mean: DVector<f64>,
    covariance: DMatrix<f64>,
}

impl GaussianMeasure {
    /// Symmetry is required to 1e-12 (the stored matrix is symmetrized);
    /// eigenvalues must be >= -1e-10.
    pub fn new(mean: DVector<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        let p = mean.len();
        if covariance.nrows() != p || covariance.ncols() != p {
            return Err(Error::DimensionMismatch(format!(
                "mean length {p} vs covariance {}x{}",
                covariance.nrows(),
                covariance.ncols()
            )));
        }
        if mean.iter().any(|v| !v.is_finite()) || covariance.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue("gaussian parameters"));
        }
        let asym = (&covariance - covariance.transpose()).abs().max();
        if asym > 1e-12 {
            return Err(Error::DegenerateCovariance(format!(
                "covariance asymmetry {asym}"
            )));
        }
        let sym = (&covariance + covariance.transpose()) * 0.5;
        let min_eig = nalgebra::SymmetricEigen::new(sym.clone())
            .eigenvalues
            .min();
        if min_eig < -1e-10 {
            return Err(Error::DegenerateCovariance(format!(
                "minimum eigenvalue {min_eig}"
            )));
        }
        Ok(Self {
            mean,
            covariance: sym,
        })
    }

    /// Standard Gaussian in `p` dimensions.
    pub fn standard(p: usize) -> Self {
        Self {
            mean: DVector::zeros(p),
            covariance: DMatrix::identity(p, p),
        }
    }

    /// Centered Gaussian with the given covariance.
    pub fn centered(covariance: DMatrix<f64>) -> Result<Self> {
        let p = covariance.nrows();
        Self::new(DVector::zeros(p), covariance)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }
}

/// An orthonormal basis of a `k`-dimensional subspace of `R^d`, carried with an
/// explicit orthonormal basis of its complement so that every downstream
/// disintegration is deterministic.
#[derive(Debug, Clone)]
pub struct Subspace {
    basis: DMatrix<f64>,
    complement: DMatrix<f64>,
}

impl Subspace {
    /// Builds the subspace from an orthonormal `d x k` basis; the complement
    /// basis is computed once by Gram-Schmidt completion over standard axes.
    pub fn new(basis: DMatrix<f64>) -> Result<Self> {
        let complement = orthonormal_completion(&basis)?;
        Self::from_parts(basis, complement)
    }

    /// Builds the subspace from explicit bases, validating orthonormality of
    /// each block and mutual orthogonality.
    pub fn from_parts(basis: DMatrix<f64>, complement: DMatrix<f64>) -> Result<Self> {
        let d = basis.nrows();
        let k = basis.ncols();
        if k == 0 || k > d {
            return Err(Error::DimensionMismatch(format!(
                "subspace dimension {k} in ambient dimension {d}"
            )));
        }
        if complement.nrows() != d || complement.ncols() != d - k {
            return Err(Error::DimensionMismatch(format!(
                "complement basis {}x{}, expected {d}x{}",
                complement.nrows(),
                complement.ncols(),
                d - k
            )));
        }
        let gram = basis.transpose() * &basis;
        if (&gram - DMatrix::identity(k, k)).abs().max() > ORTHONORMAL_TOLERANCE {
            return Err(Error::NumericalFailure(
                "subspace basis is not orthonormal".into(),
            ));
        }
        if d > k {
            let gram_c = complement.transpose() * &complement;
            if (&gram_c - DMatrix::identity(d - k, d - k)).abs().max() > ORTHONORMAL_TOLERANCE {
                return Err(Error::NumericalFailure(
                    "complement basis is not orthonormal".into(),
                ));
            }
            let cross = complement.transpose() * &basis;
            if cross.abs().max() > ORTHONORMAL_TOLERANCE {
                return Err(Error::NumericalFailure(
                    "complement basis is not orthogonal to the subspace".into(),
                ));
            }
        }
        Ok(Self { basis, complement })
    }

    /// Span of the first `k` standard axes of `R^d`.
    pub fn standard(d: usize, k: usize) -> Self {
        let basis = DMatrix::identity(d, d).columns(0, k).into_owned();
        let complement = DMatrix::identity(d, d).columns(k, d - k).into_owned();
        Self { basis, complement }
    }

    /// Span of the single standard axis `e_i` of `R^d`.
    pub fn axis(d: usize, i: usize) -> Result<Self> {
        if i >= d {
            return Err(Error::IndexOutOfRange { index: i, len: d });
        }
        let mut basis = DMatrix::zeros(d, 1);
        basis[(i, 0)] = 1.0;
        Self::new(basis)
    }

    pub fn ambient_dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn complement_basis(&self) -> &DMatrix<f64> {
        &self.complement
    }

    /// The full orthogonal matrix `[basis | complement]`.
    pub fn full_basis(&self) -> DMatrix<f64> {
        let d = self.ambient_dim();
        let k = self.dim();
        let mut full = DMatrix::zeros(d, d);
        full.columns_mut(0, k).copy_from(&self.basis);
        full.columns_mut(k, d - k).copy_from(&self.complement);
        full
    }
}

/// Completes an orthonormal `d x k` basis to the remaining `d - k` directions
/// by modified Gram-Schmidt over the standard axes (with one reorthogonalization
/// pass). Deterministic for a given input basis.
fn orthonormal_completion(basis: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let d = basis.nrows();
    let k = basis.ncols();
    if k > d {
        return Err(Error::DimensionMismatch(format!(
            "basis has {k} columns in dimension {d}"
        )));
    }
    let existing: Vec<DVector<f64>> = (0..k).map(|j| basis.column(j).into_owned()).collect();
    let mut extra: Vec<DVector<f64>> = Vec::with_capacity(d - k);
    for axis in 0..d {
        if extra.len() == d - k {
            break;
        }
        let mut v = DVector::zeros(d);
        v[axis] = 1.0;
        for _ in 0..2 {
            for c in existing.iter().chain(extra.iter()) {
                let proj = c.dot(&v);
                v -= c * proj;
            }
        }
        let norm = v.norm();
        if norm > 1e-8 {
            extra.push(v / norm);
        }
    }
    if extra.len() != d - k {
        return Err(Error::NumericalFailure(
            "failed to complete orthonormal basis".into(),
        ));
    }
    let mut complement = DMatrix::zeros(d, d - k);
    for (j, c) in extra.iter().enumerate() {
        complement.column_mut(j).copy_from(c);
    }
    Ok(complement)
}
