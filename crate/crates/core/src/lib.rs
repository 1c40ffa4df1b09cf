//! Transductive learning over spectral graph products.
//!
//! Given `J` sparse similarity graphs (one per object type) and a small set of
//! labeled cross-graph tuples, `topgraph` ranks every unlabeled tuple with a
//! low-rank Tucker model
//!
//! ```text
//! f = alpha x_1 V1 x_2 V2 ... x_J VJ
//! ```
//!
//! where each `Vj` holds the top eigenvectors of graph `j` and the core `alpha`
//! is regularized by the product-graph semi-norm `sum alpha^2 / kappa`. The
//! coupling `kappa` combines per-graph eigenvalues (Kronecker product,
//! Kronecker sum, exponential, flat) or is learned as a free tensor under
//! monotonicity and simplex constraints.
//!
//! All numerical code is generic over [`Scalar`] (`f32` or `f64`); the
//! `*64` aliases below fix the scalar to `f64`, which is what the CLI and the
//! on-disk archives use.
//!
//! Pipeline:
//!
//! 1. [`graphio`]: load, kNN-sparsify, and normalize graphs; load tuples.
//! 2. [`spectral`]: truncated eigensystems and energy-based rank selection.
//! 3. [`sgp`]: coupling functions and the kappa tensor.
//! 4. [`model`]: scoring, full recovery, and semi-norms.
//! 5. [`train`]: squared ranking hinge loss with AdaGrad.
//! 6. [`adapt`]: learning kappa by projected Danskin gradients.
//! 7. [`eval`]: splits, completion queries, MAP/AUC/Hits@k, the one-class NN baseline.

pub mod adapt;
pub mod archive;
pub mod cli;
pub mod eval;
pub mod graphio;
pub mod model;
pub mod oracle;
mod scalar;
pub mod sgp;
pub mod spectral;
pub(crate) mod tensor;
pub mod train;

pub use scalar::Scalar;

/// Division floor for kappa entries, shared by every module that divides by kappa.
pub const KAPPA_FLOOR: f64 = 1e-8;

pub use adapt::{AdaptConfig, AdaptOutcome};
pub use eval::{CompletionQuery, EvalReport, Split};
pub use graphio::{SparseGraph, TupleSet};
pub use model::{CoreTensor, Model};
pub use sgp::{KappaKind, KappaSpec, KappaTensor};
pub use spectral::EigenSystem;
pub use train::{AdaGradState, TrainConfig};

pub type SparseGraph64 = SparseGraph<f64>;
pub type EigenSystem64 = EigenSystem<f64>;
pub type KappaSpec64 = KappaSpec<f64>;
pub type KappaTensor64 = KappaTensor<f64>;
pub type CoreTensor64 = CoreTensor<f64>;
pub type Model64 = Model<f64>;
pub type AdaGradState64 = AdaGradState<f64>;

pub type SparseGraph32 = SparseGraph<f32>;
pub type EigenSystem32 = EigenSystem<f32>;
pub type Model32 = Model<f32>;
