//! Spectral graph products.
//!
//! The product of `J` graphs shares their eigenvectors (as Kronecker products)
//! and combines their eigenvalues through a coupling function `kappa`. Product
//! vertices `(i_1, ..., i_J)` map to flat indices in row-major order everywhere
//! in the crate.

use std::fmt;

use ndarray::{Array2, ArrayD, IxDyn};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::spectral::EigenSystem;
use crate::tensor::{checked_volume, outer, MultiIndex};
use crate::Scalar;

/// Upper bound on `prod n_j` for dense materialization.
pub const DENSE_SGP_LIMIT: usize = 4096;

#[derive(Debug, Error, PartialEq)]
pub enum SgpError {
    #[error("exponential coupling is defined for 1 to 3 graphs, got {0}")]
    ExponentialArity(usize),
    #[error("nonparametric coupling is index based and cannot be evaluated on eigenvalues")]
    NonparametricEval,
    #[error("kappa tensor dims {kappa:?} do not match eigensystem ranks {ranks:?}")]
    DimMismatch { kappa: Vec<usize>, ranks: Vec<usize> },
    #[error("kappa entries must be finite and nonnegative")]
    InvalidEntries,
    #[error("dense product of size {0} exceeds the oracle limit {DENSE_SGP_LIMIT}")]
    TooLarge(usize),
    #[error("dense materialization needs full eigensystems (d = n)")]
    NotFull,
    #[error("at least one graph is required")]
    NoGraphs,
}

/// Explicit `d_1 x ... x d_J` tensor of coupling values, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct KappaTensor<T> {
    values: ArrayD<T>,
}

impl<T: Scalar> KappaTensor<T> {
    /// Wraps a tensor, rejecting negative or non-finite entries.
    pub fn new(values: ArrayD<T>) -> Result<Self, SgpError> {
        if values.iter().any(|&x| !x.is_finite() || x < T::zero()) {
            return Err(SgpError::InvalidEntries);
        }
        Ok(Self { values: values.as_standard_layout().into_owned() })
    }

    pub fn from_shape_vec(dims: &[usize], data: Vec<T>) -> Result<Self, SgpError> {
        let values = ArrayD::from_shape_vec(IxDyn(dims), data)
            .map_err(|_| SgpError::DimMismatch { kappa: dims.to_vec(), ranks: vec![] })?;
        Self::new(values)
    }

    pub fn dims(&self) -> &[usize] {
        self.values.shape()
    }

    pub fn values(&self) -> &ArrayD<T> {
        &self.values
    }

    pub fn as_slice(&self) -> &[T] {
        self.values.as_slice().expect("standard layout")
    }

    pub fn into_values(self) -> ArrayD<T> {
        self.values
    }

    /// Nonincreasing along every axis, up to `slack`.
    pub fn is_axis_nonincreasing(&self, slack: T) -> bool {
        monotone_violation(&self.values) <= slack
    }
}

/// Largest amount by which any entry exceeds its predecessor along an axis.
pub fn monotone_violation<T: Scalar>(x: &ArrayD<T>) -> T {
    let mut worst = T::zero();
    for axis in 0..x.ndim() {
        for lane in x.lanes(ndarray::Axis(axis)) {
            for w in lane.iter().collect::<Vec<_>>().windows(2) {
                worst = worst.max(*w[1] - *w[0]);
            }
        }
    }
    worst
}

/// Name of a coupling family, as written in archives and accepted by the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KappaKind {
    Tensor,
    Cartesian,
    Exponential,
    Flat,
    Nonparametric,
}

impl fmt::Display for KappaKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            KappaKind::Tensor => "tensor",
            KappaKind::Cartesian => "cartesian",
            KappaKind::Exponential => "exponential",
            KappaKind::Flat => "flat",
            KappaKind::Nonparametric => "nonparametric",
        };
        f.write_str(s)
    }
}

/// Coupling function `kappa`.
///
/// * `Tensor`: product of eigenvalues (Kronecker product of graphs).
/// * `Cartesian`: sum of eigenvalues (Kronecker sum).
/// * `Exponential`: `exp(x)` for one graph, `exp(x + y)` for two,
///   `exp(xy + yz + xz)` for three. Not defined beyond three graphs.
/// * `Flat`: constant 1.
/// * `Nonparametric`: an explicit tensor indexed by eigenpair rank.
#[derive(Debug, Clone, PartialEq)]
pub enum KappaSpec<T> {
    Tensor,
    Cartesian,
    Exponential,
    Flat,
    Nonparametric(KappaTensor<T>),
}

impl<T: Scalar> KappaSpec<T> {
    pub fn kind(&self) -> KappaKind {
        match self {
            KappaSpec::Tensor => KappaKind::Tensor,
            KappaSpec::Cartesian => KappaKind::Cartesian,
            KappaSpec::Exponential => KappaKind::Exponential,
            KappaSpec::Flat => KappaKind::Flat,
            KappaSpec::Nonparametric(_) => KappaKind::Nonparametric,
        }
    }

    /// Parametric spec for a kind; `None` for `Nonparametric`.
    pub fn parametric(kind: KappaKind) -> Option<Self> {
        match kind {
            KappaKind::Tensor => Some(KappaSpec::Tensor),
            KappaKind::Cartesian => Some(KappaSpec::Cartesian),
            KappaKind::Exponential => Some(KappaSpec::Exponential),
            KappaKind::Flat => Some(KappaSpec::Flat),
            KappaKind::Nonparametric => None,
        }
    }
}

/// Evaluates a parametric coupling on one eigenvalue per graph.
pub fn kappa_eval<T: Scalar>(spec: &KappaSpec<T>, lambdas: &[T]) -> Result<T, SgpError> {
    if lambdas.is_empty() {
        return Err(SgpError::NoGraphs);
    }
    Ok(match spec {
        KappaSpec::Tensor => lambdas.iter().fold(T::one(), |acc, &l| acc * l),
        KappaSpec::Cartesian => lambdas.iter().copied().sum(),
        KappaSpec::Flat => T::one(),
        KappaSpec::Exponential => match lambdas {
            [x] => x.exp(),
            [x, y] => (*x + *y).exp(),
            [x, y, z] => (*x * *y + *y * *z + *x * *z).exp(),
            _ => return Err(SgpError::ExponentialArity(lambdas.len())),
        },
        KappaSpec::Nonparametric(_) => return Err(SgpError::NonparametricEval),
    })
}

/// Result of [`build_kappa_tensor`]: the tensor and how many entries were
/// raised to the division floor.
#[derive(Debug, Clone, PartialEq)]
pub struct KappaBuild<T> {
    pub kappa: KappaTensor<T>,
    pub clamped: usize,
}

/// Evaluates `kappa` over the grid of retained eigenvalues. Entries below
/// [`crate::KAPPA_FLOOR`] (including negative ones) are clamped to it.
pub fn build_kappa_tensor<T: Scalar>(
    spec: &KappaSpec<T>,
    systems: &[EigenSystem<T>],
) -> Result<KappaBuild<T>, SgpError> {
    if systems.is_empty() {
        return Err(SgpError::NoGraphs);
    }
    let ranks: Vec<usize> = systems.iter().map(EigenSystem::d).collect();
    if let KappaSpec::Nonparametric(k) = spec {
        if k.dims() != ranks.as_slice() {
            return Err(SgpError::DimMismatch { kappa: k.dims().to_vec(), ranks });
        }
        return Ok(KappaBuild { kappa: k.clone(), clamped: 0 });
    }
    let floor = T::kappa_floor();
    let mut clamped = 0;
    let mut data = Vec::with_capacity(ranks.iter().product());
    let mut lam = vec![T::zero(); systems.len()];
    for idx in MultiIndex::new(&ranks) {
        for (j, (&k, sys)) in idx.iter().zip(systems).enumerate() {
            lam[j] = sys.lambdas()[k];
        }
        let v = kappa_eval(spec, &lam)?;
        if !v.is_finite() {
            return Err(SgpError::InvalidEntries);
        }
        if v < floor {
            clamped += 1;
            data.push(floor);
        } else {
            data.push(v);
        }
    }
    let kappa = KappaTensor::from_shape_vec(&ranks, data)?;
    Ok(KappaBuild { kappa, clamped })
}

/// Dense `prod n_j x prod n_j` matrix of the product graph,
/// `sum_k kappa_k (⊗_j v_{k_j}) (⊗_j v_{k_j})^T`, from full eigensystems.
///
/// Coupling values are used as evaluated (no floor), so signed spectra are
/// reproduced exactly. Test and oracle use only.
pub fn materialize_sgp_dense<T: Scalar>(
    systems: &[EigenSystem<T>],
    spec: &KappaSpec<T>,
) -> Result<Array2<T>, SgpError> {
    if systems.is_empty() {
        return Err(SgpError::NoGraphs);
    }
    if systems.iter().any(|s| s.d() != s.n()) {
        return Err(SgpError::NotFull);
    }
    let dims: Vec<usize> = systems.iter().map(EigenSystem::n).collect();
    let total = checked_volume(&dims).filter(|&t| t <= DENSE_SGP_LIMIT).ok_or_else(|| {
        SgpError::TooLarge(dims.iter().fold(1usize, |a, &b| a.saturating_mul(b)))
    })?;
    // Columns of `basis` are the product eigenvectors, one per rank tuple.
    let mut basis = Array2::<T>::zeros((total, total));
    let mut coupling = Vec::with_capacity(total);
    let mut lam = vec![T::zero(); systems.len()];
    let mut column = Vec::with_capacity(total);
    for (col, ks) in MultiIndex::new(&dims).enumerate() {
        let vecs: Vec<Vec<T>> = ks.iter().zip(systems).map(|(&k, s)| s.vectors().column(k).to_vec()).collect();
        let refs: Vec<&[T]> = vecs.iter().map(Vec::as_slice).collect();
        outer(&refs, &mut column);
        for (row, &x) in column.iter().enumerate() {
            basis[[row, col]] = x;
        }
        coupling.push(match spec {
            KappaSpec::Nonparametric(k) => {
                if k.dims() != dims.as_slice() {
                    return Err(SgpError::DimMismatch { kappa: k.dims().to_vec(), ranks: dims });
                }
                k.values()[IxDyn(&ks)]
            }
            _ => {
                for (j, (&k, s)) in ks.iter().zip(systems).enumerate() {
                    lam[j] = s.lambdas()[k];
                }
                kappa_eval(spec, &lam)?
            }
        });
    }
    let mut scaled = basis.clone();
    for (mut col, &c) in scaled.columns_mut().into_iter().zip(&coupling) {
        col.mapv_inplace(|x| x * c);
    }
    Ok(scaled.dot(&basis.t()))
}
