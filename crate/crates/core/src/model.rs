//! Tucker-restricted predictions `f = alpha x_1 V1 ... x_J VJ`.

use ndarray::{ArrayD, IxDyn};
use thiserror::Error;

use crate::sgp::{kappa_eval, KappaKind, KappaSpec, KappaTensor, SgpError};
use crate::spectral::EigenSystem;
use crate::tensor::{checked_volume, contract, mode_product, outer, MultiIndex};
use crate::Scalar;

/// Upper bound on `prod n_j` for [`Model::recover_full`].
pub const RECOVER_LIMIT: usize = 1_000_000;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("gamma must be positive and finite, got {0}")]
    BadGamma(f64),
    #[error("prediction tensor of size {0} exceeds {RECOVER_LIMIT}")]
    TooLarge(usize),
    #[error("exact semi-norm needs full eigensystems (d = n)")]
    NotFull,
    #[error(transparent)]
    Sgp(#[from] SgpError),
}

/// Tucker core `alpha`, one axis per graph, sized by the retained ranks.
#[derive(Debug, Clone, PartialEq)]
pub struct CoreTensor<T> {
    values: ArrayD<T>,
}

impl<T: Scalar> CoreTensor<T> {
    pub fn zeros(dims: &[usize]) -> Self {
        Self { values: ArrayD::zeros(IxDyn(dims)) }
    }

    pub fn from_array(values: ArrayD<T>) -> Result<Self, ModelError> {
        if values.iter().any(|x| !x.is_finite()) {
            return Err(ModelError::Shape("core entries must be finite".into()));
        }
        Ok(Self { values: values.as_standard_layout().into_owned() })
    }

    pub fn from_shape_vec(dims: &[usize], data: Vec<T>) -> Result<Self, ModelError> {
        let values = ArrayD::from_shape_vec(IxDyn(dims), data)
            .map_err(|e| ModelError::Shape(e.to_string()))?;
        Self::from_array(values)
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

    pub(crate) fn as_mut_slice(&mut self) -> &mut [T] {
        self.values.as_slice_mut().expect("standard layout")
    }
}

/// A trained (or trainable) model: core, per-graph eigensystems, kappa tensor,
/// and regularization weight `gamma`.
#[derive(Debug, Clone, PartialEq)]
pub struct Model<T> {
    alpha: CoreTensor<T>,
    systems: Vec<EigenSystem<T>>,
    kappa: KappaTensor<T>,
    kappa_kind: KappaKind,
    gamma: T,
}

impl<T: Scalar> Model<T> {
    /// Model with a zero core.
    pub fn new(
        systems: Vec<EigenSystem<T>>,
        kappa: KappaTensor<T>,
        kappa_kind: KappaKind,
        gamma: T,
    ) -> Result<Self, ModelError> {
        let dims: Vec<usize> = systems.iter().map(EigenSystem::d).collect();
        Self::with_alpha(CoreTensor::zeros(&dims), systems, kappa, kappa_kind, gamma)
    }

    pub fn with_alpha(
        alpha: CoreTensor<T>,
        systems: Vec<EigenSystem<T>>,
        kappa: KappaTensor<T>,
        kappa_kind: KappaKind,
        gamma: T,
    ) -> Result<Self, ModelError> {
        if systems.is_empty() {
            return Err(ModelError::Shape("no eigensystems".into()));
        }
        let ranks: Vec<usize> = systems.iter().map(EigenSystem::d).collect();
        if alpha.dims() != ranks.as_slice() || kappa.dims() != ranks.as_slice() {
            return Err(ModelError::Shape(format!(
                "alpha {:?}, kappa {:?}, ranks {:?}",
                alpha.dims(),
                kappa.dims(),
                ranks
            )));
        }
        if !(gamma > T::zero() && gamma.is_finite()) {
            return Err(ModelError::BadGamma(gamma.as_f64()));
        }
        Ok(Self { alpha, systems, kappa, kappa_kind, gamma })
    }

    pub fn alpha(&self) -> &CoreTensor<T> {
        &self.alpha
    }

    pub(crate) fn alpha_mut(&mut self) -> &mut CoreTensor<T> {
        &mut self.alpha
    }

    pub fn set_alpha(&mut self, alpha: CoreTensor<T>) -> Result<(), ModelError> {
        if alpha.dims() != self.alpha.dims() {
            return Err(ModelError::Shape(format!("alpha {:?} vs {:?}", alpha.dims(), self.alpha.dims())));
        }
        self.alpha = alpha;
        Ok(())
    }

    pub fn systems(&self) -> &[EigenSystem<T>] {
        &self.systems
    }

    pub fn kappa(&self) -> &KappaTensor<T> {
        &self.kappa
    }

    pub fn kappa_kind(&self) -> KappaKind {
        self.kappa_kind
    }

    /// Replaces kappa, keeping alpha.
    pub fn set_kappa(&mut self, kappa: KappaTensor<T>, kind: KappaKind) -> Result<(), ModelError> {
        if kappa.dims() != self.alpha.dims() {
            return Err(ModelError::Shape(format!("kappa {:?} vs {:?}", kappa.dims(), self.alpha.dims())));
        }
        self.kappa = kappa;
        self.kappa_kind = kind;
        Ok(())
    }

    pub fn gamma(&self) -> T {
        self.gamma
    }

    /// Number of graphs `J`.
    pub fn order(&self) -> usize {
        self.systems.len()
    }

    pub fn dims_n(&self) -> Vec<usize> {
        self.systems.iter().map(EigenSystem::n).collect()
    }

    pub fn dims_d(&self) -> Vec<usize> {
        self.alpha.dims().to_vec()
    }

    fn rows<'a>(&'a self, t: &[usize]) -> Vec<&'a [T]> {
        t.iter().zip(&self.systems).map(|(&i, s)| s.row(i)).collect()
    }

    /// Score of one tuple, `sum_k alpha_k prod_j V^(j)[i_j, k_j]`. Cost is
    /// `O(prod d_j)` regardless of the graph sizes.
    ///
    /// Panics if `t` has the wrong arity or an index is out of range.
    pub fn score_tuple(&self, t: &[usize]) -> T {
        assert_eq!(t.len(), self.order(), "tuple arity");
        contract(self.alpha.as_slice(), self.alpha.dims(), &self.rows(t))
    }

    /// `⊗_j V^(j)_{t_j}` in row-major order, the derivative of the score of `t` with respect to alpha.
    pub fn score_gradient(&self, t: &[usize], out: &mut Vec<T>) {
        outer(&self.rows(t), out);
    }

    /// Full prediction tensor `n_1 x ... x n_J`.
    pub fn recover_full(&self) -> Result<ArrayD<T>, ModelError> {
        let dims = self.dims_n();
        let total = checked_volume(&dims).unwrap_or(usize::MAX);
        if total > RECOVER_LIMIT {
            return Err(ModelError::TooLarge(total));
        }
        let mut f = self.alpha.values.clone();
        for (mode, sys) in self.systems.iter().enumerate() {
            f = mode_product(&f, sys.vectors().view(), mode);
        }
        Ok(f)
    }

    /// `(gamma / 2) * sum alpha^2 / kappa`.
    pub fn regularizer(&self) -> T {
        self.gamma / T::lit(2.0) * seminorm_tucker(&self.alpha, &self.kappa)
    }
}

/// `sum alpha^2 / kappa` with kappa floored at [`crate::KAPPA_FLOOR`].
pub fn seminorm_tucker<T: Scalar>(alpha: &CoreTensor<T>, kappa: &KappaTensor<T>) -> T {
    assert_eq!(alpha.dims(), kappa.dims(), "alpha/kappa shape mismatch");
    let floor = T::kappa_floor();
    alpha.as_slice().iter().zip(kappa.as_slice()).map(|(&a, &k)| a * a / k.max(floor)).sum()
}

/// Semi-norm of an arbitrary prediction tensor under the product graph.
///
/// The coefficients `f(v_{k_1}, ..., v_{k_J})` for every eigen-tuple come from
/// `J` successive mode products with `V^(j)^T`, costing
/// `O((sum n_j)(prod n_j))`. Returns the value and the number of coupling
/// values that fell below the floor.
pub fn seminorm_exact<T: Scalar>(
    f: &ArrayD<T>,
    systems: &[EigenSystem<T>],
    spec: &KappaSpec<T>,
) -> Result<(T, usize), ModelError> {
    if systems.iter().any(|s| s.d() != s.n()) {
        return Err(ModelError::NotFull);
    }
    let dims: Vec<usize> = systems.iter().map(EigenSystem::n).collect();
    if f.shape() != dims.as_slice() {
        return Err(ModelError::Shape(format!("f {:?} vs graphs {:?}", f.shape(), dims)));
    }
    let mut coef = f.as_standard_layout().into_owned();
    for (mode, sys) in systems.iter().enumerate() {
        coef = mode_product(&coef, sys.vectors().t(), mode);
    }
    let floor = T::kappa_floor();
    let mut clamped = 0;
    let mut total = T::zero();
    let mut lam = vec![T::zero(); systems.len()];
    for (idx, &c) in MultiIndex::new(&dims).zip(coef.iter()) {
        let k = match spec {
            KappaSpec::Nonparametric(t) => {
                if t.dims() != dims.as_slice() {
                    return Err(SgpError::DimMismatch { kappa: t.dims().to_vec(), ranks: dims }.into());
                }
                t.values()[IxDyn(&idx)]
            }
            _ => {
                for (j, (&i, s)) in idx.iter().zip(systems).enumerate() {
                    lam[j] = s.lambdas()[i];
                }
                kappa_eval(spec, &lam)?
            }
        };
        let k = if k < floor {
            clamped += 1;
            floor
        } else {
            k
        };
        total += c * c / k;
    }
    Ok((total, clamped))
}
