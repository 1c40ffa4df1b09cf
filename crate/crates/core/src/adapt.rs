//! Learning a nonparametric kappa tensor.
//!
//! With `phi_hat(kappa) = min_alpha phi(alpha; kappa)`, the derivative at a
//! fixed minimizer `alpha_hat` is `-(gamma / 2) alpha_hat^2 / kappa^2`. Kappa is
//! updated by projected gradient steps onto the set of tensors that are
//! nonincreasing along every axis and lie on the simplex `{kappa >= 0, sum kappa = total}`.
//!
//! The projection onto that intersection runs Dykstra's method between the
//! monotone cone and the simplex (sort-and-threshold). The monotone cone is
//! itself the intersection of one cone per axis, each projected exactly by PAVA
//! on every lane of that axis, and is handled by an inner Dykstra loop.

use ndarray::{ArrayD, IxDyn};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graphio::TupleSet;
use crate::model::{CoreTensor, Model, ModelError};
use crate::sgp::{build_kappa_tensor, monotone_violation, KappaKind, KappaSpec, KappaTensor, SgpError};
use crate::spectral::EigenSystem;
use crate::tensor::for_each_lane_mut;
use crate::train::{full_objective, solve_full_batch, train, FullBatchConfig, TrainConfig, TrainError};
use crate::Scalar;

#[derive(Debug, Error, PartialEq)]
pub enum AdaptError {
    #[error("invalid adaptation config: {0}")]
    Config(String),
    #[error("constraint projection left a violation of {violation} after {iterations} cycles")]
    Infeasible { iterations: usize, violation: f64 },
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Sgp(#[from] SgpError),
}

/// Which closed form of the kappa derivative to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GradientForm {
    /// `-(gamma / 2) alpha^2 / kappa^2`, the derivative of the regularizer value.
    #[default]
    Squared,
    /// `-(gamma / 2) alpha / kappa^2`, kept for compatibility with the unsquared printed form.
    Literal,
}

/// Direction of the kappa update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// Minimize `phi_hat`.
    #[default]
    Descent,
    Ascent,
}

/// Solver for `alpha_hat(kappa)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InnerSolver {
    /// Deterministic semismooth Newton on the exact objective.
    FullBatch(FullBatchConfig),
    /// AdaGrad SGD; `phi_hat` is then reported from the exact objective when the grid allows.
    Sgd(TrainConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptConfig {
    pub outer_iters: usize,
    pub kappa_step: f64,
    pub inner: InnerSolver,
    pub dykstra_iters: usize,
    pub dykstra_tol: f64,
    pub pava_tol: f64,
    /// Simplex mass.
    pub total: f64,
    pub gradient_form: GradientForm,
    pub direction: Direction,
}

impl Default for AdaptConfig {
    fn default() -> Self {
        Self {
            outer_iters: 10,
            kappa_step: 1e-3,
            inner: InnerSolver::FullBatch(FullBatchConfig::default()),
            dykstra_iters: 10_000,
            dykstra_tol: 1e-10,
            pava_tol: 1e-10,
            total: 1.0,
            gradient_form: GradientForm::Squared,
            direction: Direction::Descent,
        }
    }
}

impl AdaptConfig {
    pub fn validate(&self) -> Result<(), AdaptError> {
        let tol_ok = |t: f64| t > 0.0 && t <= 1e-2;
        if !(self.kappa_step > 0.0 && self.kappa_step.is_finite()) {
            return Err(AdaptError::Config(format!("kappa_step must be positive, got {}", self.kappa_step)));
        }
        if !tol_ok(self.dykstra_tol) || !tol_ok(self.pava_tol) {
            return Err(AdaptError::Config("tolerances must lie in (0, 1e-2]".into()));
        }
        if self.dykstra_iters == 0 {
            return Err(AdaptError::Config("dykstra_iters must be positive".into()));
        }
        if !(self.total > 0.0 && self.total.is_finite()) {
            return Err(AdaptError::Config(format!("total must be positive, got {}", self.total)));
        }
        Ok(())
    }
}

/// Danskin derivative of `phi_hat` with respect to kappa; every entry is `<= 0`
/// in the squared form.
pub fn kappa_gradient<T: Scalar>(
    alpha_hat: &CoreTensor<T>,
    kappa: &KappaTensor<T>,
    gamma: T,
    form: GradientForm,
) -> ArrayD<T> {
    assert_eq!(alpha_hat.dims(), kappa.dims(), "alpha/kappa shape mismatch");
    let half = gamma / T::lit(2.0);
    let floor = T::kappa_floor();
    let data = alpha_hat
        .as_slice()
        .iter()
        .zip(kappa.as_slice())
        .map(|(&a, &k)| {
            let k = k.max(floor);
            let num = match form {
                GradientForm::Squared => a * a,
                GradientForm::Literal => a,
            };
            -half * num / (k * k)
        })
        .collect();
    ArrayD::from_shape_vec(IxDyn(alpha_hat.dims()), data).expect("same shape")
}

/// Euclidean projection onto `{y >= 0, sum y = total}` by sorting and thresholding.
pub fn project_simplex<T: Scalar>(x: &[T], total: T) -> Vec<T> {
    if x.is_empty() {
        return Vec::new();
    }
    let mut u = x.to_vec();
    u.sort_by(crate::scalar::cmp_desc);
    let mut cum = T::zero();
    let mut theta = T::zero();
    for (k, &uk) in u.iter().enumerate() {
        cum += uk;
        let t = (cum - total) / T::from_usize(k + 1).unwrap();
        if uk - t > T::zero() {
            theta = t;
        }
    }
    x.iter().map(|&v| (v - theta).max(T::zero())).collect()
}

/// Tensor form of [`project_simplex`] over all entries.
pub fn project_simplex_tensor<T: Scalar>(x: &ArrayD<T>, total: T) -> ArrayD<T> {
    let flat: Vec<T> = x.iter().copied().collect();
    ArrayD::from_shape_vec(IxDyn(x.shape()), project_simplex(&flat, total)).expect("same shape")
}

/// Exact least-squares nonincreasing fit of a sequence (pool adjacent violators).
/// Equal neighbours are not pooled.
pub fn pava_nonincreasing<T: Scalar>(y: &mut [T]) {
    // blocks of (sum, count)
    let mut blocks: Vec<(T, usize)> = Vec::with_capacity(y.len());
    for &v in y.iter() {
        blocks.push((v, 1));
        while blocks.len() > 1 {
            let (s1, c1) = blocks[blocks.len() - 1];
            let (s0, c0) = blocks[blocks.len() - 2];
            if s0 / T::from_usize(c0).unwrap() < s1 / T::from_usize(c1).unwrap() {
                blocks.pop();
                let last = blocks.last_mut().unwrap();
                *last = (s0 + s1, c0 + c1);
            } else {
                break;
            }
        }
    }
    let mut k = 0;
    for (s, c) in blocks {
        let mean = s / T::from_usize(c).unwrap();
        for slot in &mut y[k..k + c] {
            *slot = mean;
        }
        k += c;
    }
}

/// Exact projection onto the cone of tensors nonincreasing along `axis`.
fn project_axis<T: Scalar>(x: &mut ArrayD<T>, axis: usize) {
    for_each_lane_mut(x, axis, pava_nonincreasing);
}

/// Result of an iterative projection.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection<T> {
    pub values: ArrayD<T>,
    /// Full Dykstra cycles performed.
    pub cycles: usize,
    pub converged: bool,
}

/// Runs Dykstra's method over the given exact projectors.
fn dykstra<T: Scalar>(
    x0: &ArrayD<T>,
    projectors: &[&dyn Fn(&mut ArrayD<T>)],
    max_cycles: usize,
    tol: T,
    feasible: &dyn Fn(&ArrayD<T>) -> T,
) -> Projection<T> {
    let mut x = x0.clone();
    let mut corrections: Vec<ArrayD<T>> = projectors.iter().map(|_| ArrayD::zeros(x0.raw_dim())).collect();
    let mut cycles = 0;
    let mut converged = false;
    while cycles < max_cycles {
        cycles += 1;
        let start = x.clone();
        for (proj, p) in projectors.iter().zip(corrections.iter_mut()) {
            let mut y = &x + &*p;
            let shifted = y.clone();
            proj(&mut y);
            *p = shifted - &y;
            x = y;
        }
        let change = x.iter().zip(start.iter()).fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs()));
        if change < tol && feasible(&x) <= tol {
            converged = true;
            break;
        }
    }
    Projection { values: x, cycles, converged }
}

/// Euclidean projection onto the tensors nonincreasing along every axis.
/// Cyclic per-axis PAVA sweeps with Dykstra corrections; a single sweep is
/// exact for one axis.
pub fn project_monotone<T: Scalar>(x: &ArrayD<T>, tol: T, max_sweeps: usize) -> Projection<T> {
    let axes: Vec<Box<dyn Fn(&mut ArrayD<T>)>> =
        (0..x.ndim()).map(|axis| Box::new(move |t: &mut ArrayD<T>| project_axis(t, axis)) as Box<dyn Fn(&mut ArrayD<T>)>).collect();
    let refs: Vec<&dyn Fn(&mut ArrayD<T>)> = axes.iter().map(|b| b.as_ref()).collect();
    dykstra(x, &refs, max_sweeps.max(1), tol, &|t| monotone_violation(t))
}

/// Largest violation of monotonicity, nonnegativity, or the mass constraint.
pub fn feasibility_violation<T: Scalar>(x: &ArrayD<T>, total: T) -> T {
    let mass = (x.iter().copied().sum::<T>() - total).abs();
    let neg = x.iter().fold(T::zero(), |m, &v| m.max(-v));
    monotone_violation(x).max(mass).max(neg)
}

/// Projected kappa and the projection's bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintProjection<T> {
    pub kappa: KappaTensor<T>,
    pub cycles: usize,
    pub converged: bool,
    /// Violation before flooring, as measured by [`feasibility_violation`].
    pub violation: T,
}

/// Projects onto {nonincreasing along every axis} ∩ {simplex of mass `cfg.total`}.
/// The inner monotone projection stops at `cfg.pava_tol`, the outer loop at `cfg.dykstra_tol`.
/// Entries are then floored at the kappa floor and rescaled to the target mass.
pub fn project_constraints<T: Scalar>(x: &ArrayD<T>, cfg: &AdaptConfig) -> Result<ConstraintProjection<T>, AdaptError> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(AdaptError::Sgp(SgpError::InvalidEntries));
    }
    let total = T::lit(cfg.total);
    let (pava_tol, sweeps) = (T::lit(cfg.pava_tol), cfg.dykstra_iters);
    let monotone = move |t: &mut ArrayD<T>| {
        *t = project_monotone(t, pava_tol, sweeps).values;
    };
    let simplex = move |t: &mut ArrayD<T>| {
        *t = project_simplex_tensor(t, total);
    };
    let refs: [&dyn Fn(&mut ArrayD<T>); 2] = [&monotone, &simplex];
    let proj = dykstra(x, &refs, cfg.dykstra_iters, T::lit(cfg.dykstra_tol), &|t| feasibility_violation(t, total));
    let violation = feasibility_violation(&proj.values, total);
    let floor = T::kappa_floor();
    let mut values = proj.values.mapv(|v| v.max(floor));
    let mass: T = values.iter().copied().sum();
    values.mapv_inplace(|v| v * total / mass);
    Ok(ConstraintProjection { kappa: KappaTensor::new(values)?, cycles: proj.cycles, converged: proj.converged, violation })
}

/// One outer iteration of adaptation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptTracePoint {
    pub outer_iter: usize,
    pub phi_hat: f64,
    pub feasibility_violation: f64,
}

/// Writes a trace as CSV `outer_iter,phi_hat,feasibility_violation`.
pub fn adapt_trace_csv(trace: &[AdaptTracePoint]) -> String {
    let mut out = String::from("outer_iter,phi_hat,feasibility_violation\n");
    for p in trace {
        out.push_str(&format!("{},{},{}\n", p.outer_iter, p.phi_hat, p.feasibility_violation));
    }
    out
}

#[derive(Debug, Clone)]
pub struct AdaptOutcome<T> {
    pub kappa: KappaTensor<T>,
    pub model: Model<T>,
    pub trace: Vec<AdaptTracePoint>,
}

/// Feasibility tolerance every adapted kappa must meet.
pub const FEASIBILITY_TOL: f64 = 1e-6;

fn fit_inner<T: Scalar>(m: &mut Model<T>, positives: &TupleSet, inner: &InnerSolver) -> Result<T, AdaptError> {
    match inner {
        InnerSolver::FullBatch(cfg) => Ok(solve_full_batch(m, positives, cfg)?.objective),
        InnerSolver::Sgd(cfg) => {
            let out = train(m.clone(), positives, cfg)?;
            *m = out.model;
            match full_objective(m, positives) {
                Ok(v) => Ok(v),
                Err(TrainError::Model(ModelError::TooLarge(_))) => {
                    Ok(T::lit(out.trace.last().map_or(f64::NAN, |p| p.objective)))
                }
                Err(e) => Err(e.into()),
            }
        }
    }
}

/// Alternates fitting `alpha_hat(kappa)` and a projected gradient step on kappa.
///
/// `initial` defaults to the Cartesian coupling of the systems' eigenvalues.
/// The initial kappa is always projected first, so the returned kappa is
/// feasible even with `outer_iters = 0`.
pub fn adapt_kappa<T: Scalar>(
    positives: &TupleSet,
    systems: Vec<EigenSystem<T>>,
    gamma: T,
    initial: Option<KappaTensor<T>>,
    cfg: &AdaptConfig,
) -> Result<AdaptOutcome<T>, AdaptError> {
    cfg.validate()?;
    let start = match initial {
        Some(k) => k,
        None => build_kappa_tensor(&KappaSpec::Cartesian, &systems)?.kappa,
    };
    let project = |x: &ArrayD<T>| -> Result<ConstraintProjection<T>, AdaptError> {
        let p = project_constraints(x, cfg)?;
        if p.violation.as_f64() > FEASIBILITY_TOL {
            return Err(AdaptError::Infeasible { iterations: p.cycles, violation: p.violation.as_f64() });
        }
        Ok(p)
    };
    let first = project(start.values())?;
    let mut model = Model::new(systems, first.kappa, KappaKind::Nonparametric, gamma)?;
    let mut phi = fit_inner(&mut model, positives, &cfg.inner)?;
    let mut trace = vec![AdaptTracePoint { outer_iter: 0, phi_hat: phi.as_f64(), feasibility_violation: first.violation.as_f64() }];
    let step = T::lit(match cfg.direction {
        Direction::Descent => cfg.kappa_step,
        Direction::Ascent => -cfg.kappa_step,
    });
    for outer in 1..=cfg.outer_iters {
        let g = kappa_gradient(model.alpha(), model.kappa(), gamma, cfg.gradient_form);
        let moved = model.kappa().values() - &g.mapv(|v| v * step);
        let p = project(&moved)?;
        model.set_kappa(p.kappa, KappaKind::Nonparametric)?;
        phi = fit_inner(&mut model, positives, &cfg.inner)?;
        trace.push(AdaptTracePoint { outer_iter: outer, phi_hat: phi.as_f64(), feasibility_violation: p.violation.as_f64() });
    }
    Ok(AdaptOutcome { kappa: model.kappa().clone(), model, trace })
}
