//! Training the Tucker core with the squared ranking hinge loss.
//!
//! The objective is
//!
//! ```text
//! phi(alpha) = mean_{(p, q) in O x complement(O)} max(0, 1 - f_p + f_q)^2
//!            + (gamma / 2) * sum alpha^2 / kappa
//! ```
//!
//! [`train`] minimizes it by stochastic gradient steps on one (or a small
//! batch of) sampled pairs with per-coordinate AdaGrad step sizes.
//! [`solve_full_batch`] minimizes it deterministically with a semismooth Newton
//! method; it is meant for desk-scale grids where every score can be held at once.
//!
//! # Randomness
//!
//! Every generator is a `ChaCha8Rng` seeded with the run seed and switched to a
//! fixed stream: [`TRAIN_STREAM`] for positive/negative draws,
//! [`MONITOR_STREAM`] for sampled loss estimates, and [`VALIDATION_STREAM`]
//! for the validation negatives used by early stopping.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graphio::TupleSet;
use crate::model::{seminorm_tucker, CoreTensor, Model, ModelError, RECOVER_LIMIT};
use crate::tensor::unravel;
use crate::Scalar;

pub const TRAIN_STREAM: u64 = 0;
pub const MONITOR_STREAM: u64 = 1;
pub const VALIDATION_STREAM: u64 = 3;

/// Sampled pairs used for the loss estimate when the grid is too large for exact evaluation.
pub const DEFAULT_MONITOR_SAMPLES: usize = 10_000;

/// Entries of the dense score-by-core matrix the full-batch solver may allocate.
pub const FULL_BATCH_LIMIT: usize = 50_000_000;

#[derive(Debug, Error, PartialEq)]
pub enum TrainError {
    #[error("the positive set is empty")]
    EmptyPositives,
    #[error("the positive set covers the whole tuple grid; no negatives exist")]
    Saturated,
    #[error("non-finite gradient at iteration {iteration} (delta = {delta})")]
    NonFinite { iteration: usize, delta: f64 },
    #[error("tuple grid {tuples:?} does not match model graphs {graphs:?}")]
    Shape { tuples: Vec<usize>, graphs: Vec<usize> },
    #[error("problem too large for exact evaluation ({0} entries)")]
    TooLarge(usize),
    #[error("full-batch solver stopped at gradient norm {grad_norm} after {iterations} iterations")]
    NotConverged { iterations: usize, grad_norm: f64 },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Stochastic training knobs. The regularization weight lives on the [`Model`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// AdaGrad base step `eta0`.
    pub eta0: f64,
    pub iterations: usize,
    pub seed: u64,
    /// Pairs per step; their hinge gradients are averaged.
    pub batch: usize,
    /// Checkpoint cadence in iterations (0 disables intermediate checkpoints).
    pub eval_every: usize,
    /// Pairs sampled for the loss estimate; `None` evaluates exactly when the grid allows.
    pub monitor_samples: Option<usize>,
    /// Stop after this many checkpoints without improvement of the moving-average validation AUC.
    pub patience: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            eta0: 1.0,
            iterations: 10_000,
            seed: 0,
            batch: 1,
            eval_every: 1_000,
            monitor_samples: None,
            patience: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if !(self.eta0 > 0.0 && self.eta0.is_finite()) {
            return Err(TrainError::Config(format!("eta0 must be positive, got {}", self.eta0)));
        }
        if self.batch == 0 {
            return Err(TrainError::Config("batch must be positive".into()));
        }
        if self.patience == Some(0) {
            return Err(TrainError::Config("patience must be positive".into()));
        }
        Ok(())
    }
}

/// Accumulated squared gradients, one per core entry.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaGradState<T> {
    z: Vec<T>,
}

impl<T: Scalar> AdaGradState<T> {
    pub fn new(dims: &[usize]) -> Self {
        Self { z: vec![T::zero(); dims.iter().product()] }
    }

    pub fn accumulated(&self) -> &[T] {
        &self.z
    }
}

/// `max(0, 1 - (f_pos - f_neg))^2`.
pub fn pair_loss_term<T: Scalar>(f_pos: T, f_neg: T) -> T {
    let slack = (T::one() - (f_pos - f_neg)).max(T::zero());
    slack * slack
}

/// Uniform draw from the complement of `positives` by rejection. Expected
/// draws are `1 / (1 - |O| / prod n)`.
pub fn sample_negative<R: Rng + ?Sized>(positives: &TupleSet, rng: &mut R) -> Result<Vec<usize>, TrainError> {
    if positives.len() >= positives.volume() {
        return Err(TrainError::Saturated);
    }
    let dims = positives.dims();
    loop {
        let t: Vec<usize> = dims.iter().map(|&d| rng.gen_range(0..d)).collect();
        if !positives.contains(&t) {
            return Ok(t);
        }
    }
}

fn check_grid<T: Scalar>(m: &Model<T>, positives: &TupleSet) -> Result<(), TrainError> {
    if positives.dims() != m.dims_n().as_slice() {
        return Err(TrainError::Shape { tuples: positives.dims().to_vec(), graphs: m.dims_n() });
    }
    if positives.is_empty() {
        return Err(TrainError::EmptyPositives);
    }
    if positives.len() >= positives.volume() {
        return Err(TrainError::Saturated);
    }
    Ok(())
}

/// Mean pair loss over `O x complement(O)`, exactly, from the full score vector.
///
/// Sorting the negative scores turns the pair sum into suffix sums, so the
/// cost is `O(N log N)` instead of `O(|O| |complement|)`.
pub fn exact_loss_from_scores<T: Scalar>(scores: &[T], positives: &TupleSet) -> T {
    let (pos, neg) = split_scores(scores, positives);
    let mut neg_sorted: Vec<T> = neg.iter().map(|&(_, s)| s).collect();
    neg_sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let (s1, s2) = suffix_sums(&neg_sorted);
    let mut total = T::zero();
    for &(_, fp) in &pos {
        let start = neg_sorted.partition_point(|&fq| fq <= fp - T::one());
        let cnt = T::from_usize(neg_sorted.len() - start).unwrap();
        let c = T::one() - fp;
        total += cnt * c * c + T::lit(2.0) * c * s1[start] + s2[start];
    }
    total / T::from_usize(pos.len() * neg.len()).unwrap()
}

fn split_scores<T: Scalar>(scores: &[T], positives: &TupleSet) -> (Vec<(usize, T)>, Vec<(usize, T)>) {
    let mut pos = Vec::with_capacity(positives.len());
    let mut neg = Vec::with_capacity(scores.len() - positives.len());
    for (flat, &s) in scores.iter().enumerate() {
        if positives.contains_flat(flat) {
            pos.push((flat, s));
        } else {
            neg.push((flat, s));
        }
    }
    (pos, neg)
}

/// `s1[k] = sum_{i >= k} x_i`, `s2[k] = sum_{i >= k} x_i^2`, each with a trailing zero.
fn suffix_sums<T: Scalar>(x: &[T]) -> (Vec<T>, Vec<T>) {
    let mut s1 = vec![T::zero(); x.len() + 1];
    let mut s2 = vec![T::zero(); x.len() + 1];
    for k in (0..x.len()).rev() {
        s1[k] = s1[k + 1] + x[k];
        s2[k] = s2[k + 1] + x[k] * x[k];
    }
    (s1, s2)
}

/// Mean pair loss of the model over `O x complement(O)`.
///
/// With `sample = None` the loss is exact (requires a recoverable grid);
/// otherwise `(count, seed)` pairs are sampled on [`MONITOR_STREAM`].
pub fn full_loss<T: Scalar>(
    m: &Model<T>,
    positives: &TupleSet,
    sample: Option<(usize, u64)>,
) -> Result<T, TrainError> {
    check_grid(m, positives)?;
    match sample {
        None => {
            let f = m.recover_full()?;
            Ok(exact_loss_from_scores(f.as_slice().expect("standard layout"), positives))
        }
        Some((count, seed)) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(MONITOR_STREAM);
            let mut total = T::zero();
            for _ in 0..count.max(1) {
                let p = positives.get(rng.gen_range(0..positives.len()));
                let q = sample_negative(positives, &mut rng)?;
                total += pair_loss_term(m.score_tuple(p), m.score_tuple(&q));
            }
            Ok(total / T::from_usize(count.max(1)).unwrap())
        }
    }
}

/// Value and gradient of the single-pair objective
/// `max(0, 1 - f_pos + f_neg)^2 + (gamma / 2) sum alpha^2 / kappa`.
///
/// Returns `(pair loss, regularizer, delta)` and writes the gradient into `grad`.
pub fn pair_objective_gradient<T: Scalar>(
    m: &Model<T>,
    pos: &[usize],
    neg: &[usize],
    grad: &mut Vec<T>,
) -> (T, T, T) {
    let mut pairs = Scratch::default();
    let delta = pairs.hinge_gradient(m, &[(pos, neg)], grad);
    add_regularizer_gradient(m, grad);
    (pair_loss_term(delta, T::zero()), m.regularizer(), delta)
}

#[derive(Default)]
struct Scratch<T> {
    up: Vec<T>,
    un: Vec<T>,
}

impl<T: Scalar> Scratch<T> {
    /// Averaged hinge gradient of the given pairs into `grad`; returns the last pair's delta.
    fn hinge_gradient(&mut self, m: &Model<T>, pairs: &[(&[usize], &[usize])], grad: &mut Vec<T>) -> T {
        let size = m.alpha().as_slice().len();
        grad.clear();
        grad.resize(size, T::zero());
        let scale = T::one() / T::from_usize(pairs.len()).unwrap();
        let mut delta = T::zero();
        for &(pos, neg) in pairs {
            m.score_gradient(pos, &mut self.up);
            m.score_gradient(neg, &mut self.un);
            let alpha = m.alpha().as_slice();
            let fp: T = alpha.iter().zip(&self.up).map(|(&a, &u)| a * u).sum();
            let fneg: T = alpha.iter().zip(&self.un).map(|(&a, &u)| a * u).sum();
            delta = fp - fneg;
            if delta < T::one() {
                let c = T::lit(2.0) * (delta - T::one()) * scale;
                for ((g, &a), &b) in grad.iter_mut().zip(&self.up).zip(&self.un) {
                    *g += c * (a - b);
                }
            }
        }
        delta
    }
}

fn add_regularizer_gradient<T: Scalar>(m: &Model<T>, grad: &mut [T]) {
    let floor = T::kappa_floor();
    let gamma = m.gamma();
    for ((g, &a), &k) in grad.iter_mut().zip(m.alpha().as_slice()).zip(m.kappa().as_slice()) {
        *g += gamma * a / k.max(floor);
    }
}

/// Applies `alpha -= eta0 * Z^{-1/2} * grad` after `Z += grad^2`.
/// Coordinates whose accumulator is still zero are left untouched.
fn adagrad_update<T: Scalar>(m: &mut Model<T>, state: &mut AdaGradState<T>, grad: &[T], eta0: T) {
    let alpha = m.alpha_mut().as_mut_slice();
    for ((a, z), &g) in alpha.iter_mut().zip(state.z.iter_mut()).zip(grad) {
        *z += g * g;
        if *z > T::zero() {
            *a -= eta0 * g / z.sqrt();
        }
    }
}

/// One AdaGrad step on a single (positive, negative) pair. Returns the pair's
/// loss term measured before the update.
pub fn sgd_step<T: Scalar>(
    m: &mut Model<T>,
    state: &mut AdaGradState<T>,
    pos: &[usize],
    neg: &[usize],
    eta0: T,
) -> Result<T, TrainError> {
    sgd_step_batch(m, state, &[(pos, neg)], eta0)
}

/// One AdaGrad step on the mean gradient of several pairs. Returns the mean
/// loss term measured before the update.
pub fn sgd_step_batch<T: Scalar>(
    m: &mut Model<T>,
    state: &mut AdaGradState<T>,
    pairs: &[(&[usize], &[usize])],
    eta0: T,
) -> Result<T, TrainError> {
    let mut grad = Vec::new();
    step_with(m, state, pairs, eta0, &mut Scratch::default(), &mut grad, 0)
}

fn step_with<T: Scalar>(
    m: &mut Model<T>,
    state: &mut AdaGradState<T>,
    pairs: &[(&[usize], &[usize])],
    eta0: T,
    scratch: &mut Scratch<T>,
    grad: &mut Vec<T>,
    iteration: usize,
) -> Result<T, TrainError> {
    let mut loss = T::zero();
    for &(p, q) in pairs {
        loss += pair_loss_term(m.score_tuple(p), m.score_tuple(q));
    }
    loss /= T::from_usize(pairs.len()).unwrap();
    let delta = scratch.hinge_gradient(m, pairs, grad);
    add_regularizer_gradient(m, grad);
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(TrainError::NonFinite { iteration, delta: delta.as_f64() });
    }
    adagrad_update(m, state, grad, eta0);
    Ok(loss)
}

/// One checkpoint of a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub iter: usize,
    pub objective: f64,
    pub loss: f64,
    pub seminorm: f64,
    pub validation_auc: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    pub model: Model<T>,
    pub state: AdaGradState<T>,
    pub trace: Vec<TracePoint>,
    /// Iterations actually run (less than configured after an early stop).
    pub iterations: usize,
}

/// Writes a trace as CSV `iter,objective,loss,seminorm`.
pub fn trace_csv(trace: &[TracePoint]) -> String {
    let mut out = String::from("iter,objective,loss,seminorm\n");
    for p in trace {
        out.push_str(&format!("{},{},{},{}\n", p.iter, p.objective, p.loss, p.seminorm));
    }
    out
}

/// Runs AdaGrad SGD from the model's current core.
pub fn train<T: Scalar>(m: Model<T>, positives: &TupleSet, cfg: &TrainConfig) -> Result<TrainOutcome<T>, TrainError> {
    train_with_validation(m, positives, None, cfg)
}

/// As [`train`], also tracking validation AUC at each checkpoint for early stopping.
pub fn train_with_validation<T: Scalar>(
    mut m: Model<T>,
    positives: &TupleSet,
    validation: Option<&TupleSet>,
    cfg: &TrainConfig,
) -> Result<TrainOutcome<T>, TrainError> {
    cfg.validate()?;
    check_grid(&m, positives)?;
    let exact_ok = positives.volume() <= RECOVER_LIMIT;
    let monitor = match cfg.monitor_samples {
        Some(k) => Some((k, cfg.seed)),
        None if exact_ok => None,
        None => Some((DEFAULT_MONITOR_SAMPLES, cfg.seed)),
    };
    let val_negatives = match validation {
        Some(v) if !v.is_empty() => Some(validation_negatives(positives, v, cfg.seed)?),
        _ => None,
    };
    let checkpoint = |m: &Model<T>, iter: usize| -> Result<TracePoint, TrainError> {
        let loss = full_loss(m, positives, monitor)?.as_f64();
        let seminorm = seminorm_tucker(m.alpha(), m.kappa()).as_f64();
        let objective = loss + m.gamma().as_f64() / 2.0 * seminorm;
        let validation_auc = match (validation, &val_negatives) {
            (Some(v), Some(neg)) => {
                let ps: Vec<f64> = v.tuples().iter().map(|t| m.score_tuple(t).as_f64()).collect();
                let ns: Vec<f64> = neg.iter().map(|t| m.score_tuple(t).as_f64()).collect();
                crate::eval::auc(&ps, &ns)
            }
            _ => None,
        };
        Ok(TracePoint { iter, objective, loss, seminorm, validation_auc })
    };

    let mut state = AdaGradState::new(m.alpha().dims());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(TRAIN_STREAM);
    let eta0 = T::lit(cfg.eta0);
    let mut trace = vec![checkpoint(&m, 0)?];
    let mut scratch = Scratch::default();
    let mut grad = Vec::new();
    let mut batch: Vec<(Vec<usize>, Vec<usize>)> = Vec::with_capacity(cfg.batch);
    let mut early = EarlyStop::new(cfg.patience);
    let mut done = 0;
    for it in 1..=cfg.iterations {
        batch.clear();
        for _ in 0..cfg.batch {
            let p = positives.get(rng.gen_range(0..positives.len())).to_vec();
            let q = sample_negative(positives, &mut rng)?;
            batch.push((p, q));
        }
        let pairs: Vec<(&[usize], &[usize])> = batch.iter().map(|(p, q)| (p.as_slice(), q.as_slice())).collect();
        step_with(&mut m, &mut state, &pairs, eta0, &mut scratch, &mut grad, it)?;
        done = it;
        if cfg.eval_every > 0 && it % cfg.eval_every == 0 && it != cfg.iterations {
            let point = checkpoint(&m, it)?;
            let stop = early.observe(point.validation_auc);
            trace.push(point);
            if stop {
                break;
            }
        }
    }
    if trace.last().map(|p| p.iter) != Some(done) {
        trace.push(checkpoint(&m, done)?);
    }
    Ok(TrainOutcome { model: m, state, trace, iterations: done })
}

/// Negatives for validation AUC: up to 1000 tuples outside both sets, drawn once.
fn validation_negatives(positives: &TupleSet, validation: &TupleSet, seed: u64) -> Result<Vec<Vec<usize>>, TrainError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(VALIDATION_STREAM);
    let free = positives.volume().saturating_sub(positives.len() + validation.len());
    let want = free.min(1000);
    let mut out = Vec::with_capacity(want);
    while out.len() < want {
        let t = sample_negative(positives, &mut rng)?;
        if !validation.contains(&t) {
            out.push(t);
        }
    }
    Ok(out)
}

/// Patience on a three-checkpoint moving average of validation AUC.
struct EarlyStop {
    patience: Option<usize>,
    window: Vec<f64>,
    best: f64,
    stale: usize,
}

impl EarlyStop {
    fn new(patience: Option<usize>) -> Self {
        Self { patience, window: Vec::new(), best: f64::NEG_INFINITY, stale: 0 }
    }

    fn observe(&mut self, auc: Option<f64>) -> bool {
        let (Some(patience), Some(auc)) = (self.patience, auc) else {
            return false;
        };
        self.window.push(auc);
        if self.window.len() > 3 {
            self.window.remove(0);
        }
        let avg = self.window.iter().sum::<f64>() / self.window.len() as f64;
        if avg > self.best {
            self.best = avg;
            self.stale = 0;
        } else {
            self.stale += 1;
        }
        self.stale >= patience
    }
}

/// Settings for [`solve_full_batch`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FullBatchConfig {
    /// Stop once the max-norm of the gradient drops to this value.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for FullBatchConfig {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: 200 }
    }
}

/// Deterministic full-batch view of the objective: every grid tuple's
/// Kronecker row `⊗_j V^(j)_{i_j}` is held in a dense `N x D` matrix.
pub struct FullBatchProblem<'a, T> {
    positives: &'a TupleSet,
    rows: Array2<T>,
    pairs: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FullBatchOutcome<T> {
    pub objective: T,
    pub grad_norm: T,
    pub iterations: usize,
}

impl<'a, T: Scalar> FullBatchProblem<'a, T> {
    pub fn new(m: &Model<T>, positives: &'a TupleSet) -> Result<Self, TrainError> {
        check_grid(m, positives)?;
        let n = positives.volume();
        let d = m.alpha().as_slice().len();
        if n.saturating_mul(d) > FULL_BATCH_LIMIT {
            return Err(TrainError::TooLarge(n.saturating_mul(d)));
        }
        let dims = m.dims_n();
        let mut rows = Array2::zeros((n, d));
        let mut idx = vec![0; dims.len()];
        let mut u = Vec::with_capacity(d);
        for flat in 0..n {
            unravel(flat, &dims, &mut idx);
            m.score_gradient(&idx, &mut u);
            rows.row_mut(flat).assign(&Array1::from(u.clone()));
        }
        let pairs = T::from_usize(positives.len() * (n - positives.len())).unwrap();
        Ok(Self { positives, rows, pairs })
    }

    fn scores(&self, alpha: &[T]) -> Array1<T> {
        self.rows.dot(&ndarray::ArrayView1::from(alpha))
    }

    /// Full objective at `alpha`.
    pub fn objective(&self, m: &Model<T>, alpha: &[T]) -> T {
        let s = self.scores(alpha);
        let loss = exact_loss_from_scores(s.as_slice().unwrap(), self.positives);
        let floor = T::kappa_floor();
        let reg: T = alpha.iter().zip(m.kappa().as_slice()).map(|(&a, &k)| a * a / k.max(floor)).sum();
        loss + m.gamma() / T::lit(2.0) * reg
    }

    /// Gradient of the full objective at `alpha`, plus the active-pair
    /// structure needed for the generalized Hessian.
    fn gradient(&self, m: &Model<T>, alpha: &[T]) -> (Vec<T>, Active<T>) {
        let s = self.scores(alpha);
        let s = s.as_slice().unwrap();
        let (mut pos, mut neg) = split_scores(s, self.positives);
        let by_score = |a: &(usize, T), b: &(usize, T)| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal);
        pos.sort_by(by_score);
        neg.sort_by(by_score);
        let neg_scores: Vec<T> = neg.iter().map(|x| x.1).collect();
        let pos_scores: Vec<T> = pos.iter().map(|x| x.1).collect();
        let (ns1, _) = suffix_sums(&neg_scores);
        let mut pos_prefix = vec![T::zero(); pos.len() + 1];
        for k in 0..pos.len() {
            pos_prefix[k + 1] = pos_prefix[k] + pos_scores[k];
        }
        let two_over = T::lit(2.0) / self.pairs;
        let mut gf = vec![T::zero(); s.len()];
        let mut pos_start = Vec::with_capacity(pos.len());
        for &(flat, fp) in &pos {
            // negatives with fq > fp - 1 are active
            let start = neg_scores.partition_point(|&fq| fq <= fp - T::one());
            let cnt = T::from_usize(neg.len() - start).unwrap();
            gf[flat] = two_over * (cnt * (fp - T::one()) - ns1[start]);
            pos_start.push(start);
        }
        let mut neg_count = Vec::with_capacity(neg.len());
        for &(flat, fq) in &neg {
            // positives with fp < fq + 1 are active
            let end = pos_scores.partition_point(|&fp| fp < fq + T::one());
            let cnt = T::from_usize(end).unwrap();
            gf[flat] = two_over * (cnt * (fq + T::one()) - pos_prefix[end]);
            neg_count.push(end);
        }
        let mut grad = self.rows.t().dot(&Array1::from(gf)).to_vec();
        let floor = T::kappa_floor();
        for ((g, &a), &k) in grad.iter_mut().zip(alpha).zip(m.kappa().as_slice()) {
            *g += m.gamma() * a / k.max(floor);
        }
        (grad, Active { pos, neg, pos_start, neg_count })
    }

    /// Generalized Hessian `(2/P) sum_active (u_p - u_q)(u_p - u_q)^T + gamma diag(1/kappa)`.
    fn hessian(&self, m: &Model<T>, active: &Active<T>) -> Array2<T> {
        let d = self.rows.ncols();
        let mut h = Array2::<T>::zeros((d, d));
        // suffix sums of sorted negative rows
        let mut suffix = Array2::<T>::zeros((active.neg.len() + 1, d));
        for k in (0..active.neg.len()).rev() {
            let next = suffix.row(k + 1).to_owned();
            let mut row = suffix.row_mut(k);
            row.assign(&next);
            row += &self.rows.row(active.neg[k].0);
        }
        let mut weighted = Array2::<T>::zeros((0, d));
        let mut wrows: Vec<T> = Vec::new();
        let mut count = 0;
        for (&(flat, _), &start) in active.pos.iter().zip(&active.pos_start) {
            let c = T::from_usize(active.neg.len() - start).unwrap();
            if c == T::zero() {
                continue;
            }
            let u = self.rows.row(flat);
            let sp = suffix.row(start);
            // c u u^T - u s^T - s u^T
            for a in 0..d {
                for b in 0..d {
                    h[[a, b]] += c * u[a] * u[b] - u[a] * sp[b] - sp[a] * u[b];
                }
            }
        }
        for (&(flat, _), &c) in active.neg.iter().zip(&active.neg_count) {
            if c == 0 {
                continue;
            }
            let sc = T::from_usize(c).unwrap().sqrt();
            wrows.extend(self.rows.row(flat).iter().map(|&x| x * sc));
            count += 1;
        }
        if count > 0 {
            weighted = Array2::from_shape_vec((count, d), wrows).unwrap();
        }
        h += &weighted.t().dot(&weighted);
        h.mapv_inplace(|x| x * T::lit(2.0) / self.pairs);
        let floor = T::kappa_floor();
        for (k, &kap) in m.kappa().as_slice().iter().enumerate() {
            h[[k, k]] += m.gamma() / kap.max(floor);
        }
        h
    }
}

struct Active<T> {
    pos: Vec<(usize, T)>,
    neg: Vec<(usize, T)>,
    /// For each sorted positive, index of its first active negative.
    pos_start: Vec<usize>,
    /// For each sorted negative, number of active positives.
    neg_count: Vec<usize>,
}

/// Minimizes the full objective with damped semismooth Newton steps, starting
/// from the model's current core, and stores the minimizer in the model.
pub fn solve_full_batch<T: Scalar>(
    m: &mut Model<T>,
    positives: &TupleSet,
    cfg: &FullBatchConfig,
) -> Result<FullBatchOutcome<T>, TrainError> {
    let problem = FullBatchProblem::new(m, positives)?;
    let mut alpha = m.alpha().as_slice().to_vec();
    let tol = T::lit(cfg.tol);
    let mut value = problem.objective(m, &alpha);
    let mut grad_norm = T::infinity();
    for it in 0..=cfg.max_iter {
        let (grad, active) = problem.gradient(m, &alpha);
        grad_norm = grad.iter().fold(T::zero(), |acc, g| acc.max(g.abs()));
        if !grad_norm.is_finite() {
            return Err(TrainError::NonFinite { iteration: it, delta: f64::NAN });
        }
        if grad_norm <= tol || it == cfg.max_iter {
            if grad_norm > tol {
                break;
            }
            let core = CoreTensor::from_shape_vec(m.alpha().dims(), alpha)?;
            m.set_alpha(core)?;
            return Ok(FullBatchOutcome { objective: value, grad_norm, iterations: it });
        }
        let h = problem.hessian(m, &active);
        let step = cholesky_solve(h, &grad).unwrap_or_else(|| grad.clone());
        let slope: T = grad.iter().zip(&step).map(|(&g, &s)| g * s).sum();
        let mut t = T::one();
        let mut trial: Vec<T>;
        loop {
            trial = alpha.iter().zip(&step).map(|(&a, &s)| a - t * s).collect();
            let v = problem.objective(m, &trial);
            if v <= value - T::lit(1e-4) * t * slope || t < T::lit(1e-12) {
                value = v;
                break;
            }
            t /= T::lit(2.0);
        }
        alpha = trial;
    }
    Err(TrainError::NotConverged { iterations: cfg.max_iter, grad_norm: grad_norm.as_f64() })
}

/// Full objective `mean pair loss + (gamma / 2) seminorm` at the model's core.
pub fn full_objective<T: Scalar>(m: &Model<T>, positives: &TupleSet) -> Result<T, TrainError> {
    Ok(full_loss(m, positives, None)? + m.regularizer())
}

/// Solves `H x = b` for symmetric positive definite `H`; `None` if not positive definite.
fn cholesky_solve<T: Scalar>(mut h: Array2<T>, b: &[T]) -> Option<Vec<T>> {
    let n = b.len();
    for j in 0..n {
        let mut diag = h[[j, j]];
        for k in 0..j {
            diag -= h[[j, k]] * h[[j, k]];
        }
        if !(diag > T::zero()) {
            return None;
        }
        let diag = diag.sqrt();
        h[[j, j]] = diag;
        for i in j + 1..n {
            let mut s = h[[i, j]];
            for k in 0..j {
                s -= h[[i, k]] * h[[j, k]];
            }
            h[[i, j]] = s / diag;
        }
    }
    let mut y = b.to_vec();
    for i in 0..n {
        for k in 0..i {
            let v = h[[i, k]] * y[k];
            y[i] -= v;
        }
        y[i] /= h[[i, i]];
    }
    for i in (0..n).rev() {
        for k in i + 1..n {
            let v = h[[k, i]] * y[k];
            y[i] -= v;
        }
        y[i] /= h[[i, i]];
    }
    Some(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sgp::{KappaKind, KappaTensor};
    use crate::spectral::EigenSystem;
    use crate::tensor::MultiIndex;
    use ndarray::{array, Array1};

    fn toy_model(ns: &[usize], ds: &[usize], gamma: f64, seed: u64) -> Model<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let systems: Vec<_> = ns
            .iter()
            .zip(ds)
            .map(|(&n, &d)| {
                let v = Array2::from_shape_fn((n, d), |_| rng.gen_range(-1.0..1.0));
                let l: Array1<f64> = (0..d).map(|k| 1.0 - 0.1 * k as f64).collect();
                EigenSystem::new(l, v).unwrap()
            })
            .collect();
        let vol: usize = ds.iter().product();
        let kappa =
            KappaTensor::from_shape_vec(ds, (0..vol).map(|_| rng.gen_range(0.2..1.0)).collect()).unwrap();
        let alpha = CoreTensor::from_shape_vec(ds, (0..vol).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        Model::with_alpha(alpha, systems, kappa, KappaKind::Nonparametric, gamma).unwrap()
    }

    fn brute_loss(scores: &[f64], positives: &TupleSet) -> f64 {
        let mut total = 0.0;
        let mut count = 0;
        for (p, &fp) in scores.iter().enumerate() {
            if !positives.contains_flat(p) {
                continue;
            }
            for (q, &fq) in scores.iter().enumerate() {
                if positives.contains_flat(q) {
                    continue;
                }
                total += pair_loss_term(fp, fq);
                count += 1;
            }
        }
        total / count as f64
    }

    #[test]
    fn pair_loss_examples() {
        assert_eq!(pair_loss_term(1.5, 0.0), 0.0);
        assert_eq!(pair_loss_term(0.3, 0.3), 1.0);
        assert_eq!(pair_loss_term(0.5, 0.0), 0.25);
    }

    #[test]
    fn exact_loss_examples() {
        let o = TupleSet::from_tuples(vec![2, 2], [vec![0, 0]]).unwrap();
        assert_eq!(exact_loss_from_scores(&[2.0, 0.0, 0.0, 0.0], &o), 0.0);
        assert_eq!(exact_loss_from_scores(&[0.7, 0.7, 0.7, 0.7], &o), 1.0);
        // Hand-set scores: f(0,0)=1, others 0.5, 0.2, 1.5 -> deltas 0.5, 0.8, -0.5.
        let want = (0.25 + 0.04 + 2.25) / 3.0;
        assert!((exact_loss_from_scores(&[1.0f64, 0.5, 0.2, 1.5], &o) - want).abs() < 1e-15);
    }

    #[test]
    fn exact_loss_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let scores: Vec<f64> = (0..30).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let picks: Vec<Vec<usize>> = (0..7).map(|_| vec![rng.gen_range(0..5), rng.gen_range(0..6)]).collect();
            let o = TupleSet::from_tuples(vec![5, 6], picks).unwrap();
            assert!((exact_loss_from_scores(&scores, &o) - brute_loss(&scores, &o)).abs() < 1e-12);
        }
    }

    #[test]
    fn negatives_are_forced_or_uniform() {
        let dims = vec![2, 2];
        let o = TupleSet::from_tuples(dims.clone(), [vec![0, 0], vec![0, 1], vec![1, 0]]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            assert_eq!(sample_negative(&o, &mut rng).unwrap(), vec![1, 1]);
        }
        let o = TupleSet::from_tuples(dims.clone(), [vec![0, 0], vec![1, 1]]).unwrap();
        for _ in 0..200 {
            let t = sample_negative(&o, &mut rng).unwrap();
            assert!(t == vec![0, 1] || t == vec![1, 0]);
        }
        let full = TupleSet::from_tuples(dims.clone(), MultiIndex::new(&dims)).unwrap();
        assert_eq!(sample_negative(&full, &mut rng), Err(TrainError::Saturated));

        // chi-square over an empty positive set, 12 cells, 1e5 draws
        let empty = TupleSet::new(vec![3, 4]).unwrap();
        let mut counts = [0usize; 12];
        for _ in 0..100_000 {
            let t = sample_negative(&empty, &mut rng).unwrap();
            counts[t[0] * 4 + t[1]] += 1;
        }
        let expected = 100_000.0 / 12.0;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        // 11 degrees of freedom, p = 0.001 critical value
        assert!(chi2 < 31.26, "chi2 = {chi2}");
    }

    #[test]
    fn identical_tuples_leave_zero_core_unchanged() {
        let mut m = toy_model(&[3, 3], &[2, 2], 1.0, 2);
        m.set_alpha(CoreTensor::zeros(&[2, 2])).unwrap();
        let mut st = AdaGradState::new(&[2, 2]);
        let loss = sgd_step(&mut m, &mut st, &[1, 2], &[1, 2], 1.0).unwrap();
        assert_eq!(loss, 1.0);
        assert!(m.alpha().as_slice().iter().all(|&a| a == 0.0));
        assert!(st.accumulated().iter().all(|&z| z == 0.0));
    }

    #[test]
    fn hand_rolled_one_dimensional_step() {
        // J=1, n=2, d=2, V = [[1, 0.5], [0.2, 1]], kappa = [1, 0.5], gamma = 0.1
        let sys = EigenSystem::<f64>::new(array![1.0, 0.5], array![[1.0, 0.5], [0.2, 1.0]]).unwrap();
        let kappa = KappaTensor::from_shape_vec(&[2], vec![1.0, 0.5]).unwrap();
        let alpha = CoreTensor::from_shape_vec(&[2], vec![0.3, -0.2]).unwrap();
        let mut m = Model::with_alpha(alpha, vec![sys], kappa, KappaKind::Nonparametric, 0.1).unwrap();
        let mut st = AdaGradState::new(&[2]);
        sgd_step(&mut m, &mut st, &[0], &[1], 1.0).unwrap();
        // f0 = 0.3 - 0.1 = 0.2; f1 = 0.06 - 0.2 = -0.14; delta = 0.34
        // hinge grad = 2 (0.34 - 1) (u0 - u1) = -1.32 * [0.8, -0.5] = [-1.056, 0.66]
        // reg grad = 0.1 * [0.3 / 1, -0.2 / 0.5] = [0.03, -0.04]
        // g = [-1.026, 0.62]; Z = g^2; alpha -= g / |g| = alpha - sign(g)
        assert!((m.alpha().as_slice()[0] - 1.3).abs() < 1e-12);
        assert!((m.alpha().as_slice()[1] + 1.2).abs() < 1e-12);
        assert!((st.accumulated()[0] - 1.026f64.powi(2)).abs() < 1e-12);
        assert!((st.accumulated()[1] - 0.62f64.powi(2)).abs() < 1e-12);
        // a second step uses the accumulated history
        let before = m.alpha().as_slice().to_vec();
        let z_before = st.accumulated().to_vec();
        let mut g = Vec::new();
        pair_objective_gradient(&m, &[0], &[1], &mut g);
        sgd_step(&mut m, &mut st, &[0], &[1], 1.0).unwrap();
        for k in 0..2 {
            let z = z_before[k] + g[k] * g[k];
            assert!((st.accumulated()[k] - z).abs() < 1e-12);
            assert!((m.alpha().as_slice()[k] - (before[k] - g[k] / z.sqrt())).abs() < 1e-12);
        }
    }

    #[test]
    fn inactive_hinge_applies_only_shrinkage() {
        let mut m = toy_model(&[4, 4], &[2, 2], 5.0, 3);
        let mut st = AdaGradState::new(&[2, 2]);
        // force a large margin
        let mut a = CoreTensor::zeros(&[2, 2]);
        a.as_mut_slice().copy_from_slice(&[10.0, 0.0, 0.0, 0.0]);
        m.set_alpha(a).unwrap();
        let (pos, neg) = find_margin_pair(&m);
        let mut g = Vec::new();
        let (loss, _, delta) = pair_objective_gradient(&m, &pos, &neg, &mut g);
        assert!(delta >= 1.0);
        assert_eq!(loss, 0.0);
        let gamma = m.gamma();
        for ((&gk, &a), &k) in g.iter().zip(m.alpha().as_slice()).zip(m.kappa().as_slice()) {
            assert!((gk - gamma * a / k).abs() < 1e-15);
        }
        let norm_before: f64 = m.alpha().as_slice().iter().map(|a| a * a).sum();
        sgd_step(&mut m, &mut st, &pos, &neg, 0.5).unwrap();
        let norm_after: f64 = m.alpha().as_slice().iter().map(|a| a * a).sum();
        assert!(norm_after < norm_before);
    }

    fn find_margin_pair(m: &Model<f64>) -> (Vec<usize>, Vec<usize>) {
        let all: Vec<Vec<usize>> = MultiIndex::new(&m.dims_n()).collect();
        let hi = all.iter().max_by(|a, b| m.score_tuple(a).partial_cmp(&m.score_tuple(b)).unwrap()).unwrap();
        let lo = all.iter().min_by(|a, b| m.score_tuple(a).partial_cmp(&m.score_tuple(b)).unwrap()).unwrap();
        (hi.clone(), lo.clone())
    }

    #[test]
    fn large_gamma_shrinks_monotonically() {
        let mut m = toy_model(&[4, 4], &[2, 2], 1e6, 5);
        let mut a = CoreTensor::zeros(&[2, 2]);
        a.as_mut_slice().copy_from_slice(&[40.0, -30.0, 20.0, 10.0]);
        m.set_alpha(a).unwrap();
        let (pos, neg) = find_margin_pair(&m);
        let mut st = AdaGradState::new(&[2, 2]);
        let mut prev: f64 = m.alpha().as_slice().iter().map(|a| a.abs()).sum();
        for _ in 0..5 {
            let mut g = Vec::new();
            let (_, _, delta) = pair_objective_gradient(&m, &pos, &neg, &mut g);
            if delta < 1.0 {
                break;
            }
            sgd_step(&mut m, &mut st, &pos, &neg, 1.0).unwrap();
            let now: f64 = m.alpha().as_slice().iter().map(|a| a.abs()).sum();
            assert!(now < prev);
            prev = now;
        }
    }

    #[test]
    fn pair_gradient_matches_finite_differences() {
        for seed in 0..10 {
            let m = toy_model(&[3, 4, 2], &[2, 3, 2], 0.7, seed);
            let pos = vec![1, 2, 0];
            let neg = vec![2, 0, 1];
            let mut g = Vec::new();
            pair_objective_gradient(&m, &pos, &neg, &mut g);
            let f = |m: &Model<f64>| pair_loss_term(m.score_tuple(&pos), m.score_tuple(&neg)) + m.regularizer();
            let h = 1e-5;
            for k in 0..g.len() {
                let mut plus = m.clone();
                plus.alpha_mut().as_mut_slice()[k] += h;
                let mut minus = m.clone();
                minus.alpha_mut().as_mut_slice()[k] -= h;
                let fd = (f(&plus) - f(&minus)) / (2.0 * h);
                assert!((fd - g[k]).abs() <= 1e-5 * fd.abs().max(1e-3), "{fd} vs {}", g[k]);
            }
        }
    }

    #[test]
    fn full_loss_sampled_is_close_to_exact() {
        let m = toy_model(&[5, 6], &[2, 2], 0.5, 12);
        let o = TupleSet::from_tuples(vec![5, 6], [vec![0, 0], vec![1, 3], vec![4, 5]]).unwrap();
        let exact = full_loss(&m, &o, None).unwrap();
        let sampled = full_loss(&m, &o, Some((50_000, 1))).unwrap();
        assert!((exact - sampled).abs() < 0.05 * exact.max(0.1));
        assert_eq!(full_loss(&m, &TupleSet::new(vec![5, 6]).unwrap(), None), Err(TrainError::EmptyPositives));
    }

    #[test]
    fn full_batch_gradient_matches_finite_differences() {
        let m = toy_model(&[4, 5], &[2, 3], 0.3, 4);
        let o = TupleSet::from_tuples(vec![4, 5], [vec![0, 1], vec![2, 2], vec![3, 4], vec![1, 0]]).unwrap();
        let p = FullBatchProblem::new(&m, &o).unwrap();
        let alpha = m.alpha().as_slice().to_vec();
        let (g, _) = p.gradient(&m, &alpha);
        let exact = full_objective(&m, &o).unwrap();
        assert!((p.objective(&m, &alpha) - exact).abs() < 1e-12);
        for k in 0..g.len() {
            let h = 1e-6;
            let mut ap = alpha.clone();
            ap[k] += h;
            let mut am = alpha.clone();
            am[k] -= h;
            let fd = (p.objective(&m, &ap) - p.objective(&m, &am)) / (2.0 * h);
            assert!((fd - g[k]).abs() < 1e-6, "{fd} vs {}", g[k]);
        }
    }

    #[test]
    fn full_batch_solver_reaches_stationarity() {
        let mut m = toy_model(&[5, 5], &[3, 3], 0.2, 6);
        let o = TupleSet::from_tuples(vec![5, 5], [vec![0, 0], vec![1, 1], vec![2, 3], vec![4, 4]]).unwrap();
        let start = full_objective(&m, &o).unwrap();
        let out = solve_full_batch(&mut m, &o, &FullBatchConfig::default()).unwrap();
        assert!(out.grad_norm <= 1e-10);
        assert!(out.objective <= start);
        assert!((full_objective(&m, &o).unwrap() - out.objective).abs() < 1e-12);
        // any perturbation increases the objective
        for k in 0..9 {
            let mut p = m.clone();
            p.alpha_mut().as_mut_slice()[k] += 1e-3;
            assert!(full_objective(&p, &o).unwrap() >= out.objective);
        }
    }

    #[test]
    fn training_is_deterministic_and_zero_iterations_is_identity() {
        let mut m = toy_model(&[6, 5], &[3, 2], 0.1, 9);
        m.set_alpha(CoreTensor::zeros(&[3, 2])).unwrap();
        let o = TupleSet::from_tuples(vec![6, 5], [vec![0, 0], vec![1, 1], vec![2, 2], vec![5, 4]]).unwrap();
        let cfg = TrainConfig { iterations: 0, ..Default::default() };
        let out = train(m.clone(), &o, &cfg).unwrap();
        assert_eq!(out.model, m);
        assert_eq!(out.trace.len(), 1);

        let cfg = TrainConfig { iterations: 500, eval_every: 100, seed: 3, ..Default::default() };
        let a = train(m.clone(), &o, &cfg).unwrap();
        let b = train(m.clone(), &o, &cfg).unwrap();
        assert_eq!(a.model.alpha().as_slice(), b.model.alpha().as_slice());
        assert_eq!(a.trace, b.trace);
        assert_eq!(a.trace.len(), 6);
        assert!(a.trace.last().unwrap().objective < a.trace[0].objective);
        // accumulator never decreases
        assert!(a.state.accumulated().iter().all(|&z| z >= 0.0));
    }

    #[test]
    fn mini_batches_average_gradients() {
        let m0 = toy_model(&[4, 4], &[2, 2], 0.4, 10);
        let pairs: [(&[usize], &[usize]); 2] = [(&[0, 0], &[1, 2]), (&[3, 1], &[2, 2])];
        let mut g1 = Vec::new();
        let mut g2 = Vec::new();
        pair_objective_gradient(&m0, pairs[0].0, pairs[0].1, &mut g1);
        pair_objective_gradient(&m0, pairs[1].0, pairs[1].1, &mut g2);
        let mean: Vec<f64> = g1.iter().zip(&g2).map(|(a, b)| (a + b) / 2.0).collect();
        let mut m = m0.clone();
        let mut st = AdaGradState::new(&[2, 2]);
        sgd_step_batch(&mut m, &mut st, &pairs, 1.0).unwrap();
        for k in 0..4 {
            assert!((st.accumulated()[k] - mean[k] * mean[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn early_stopping_respects_patience() {
        let mut es = EarlyStop::new(Some(2));
        assert!(!es.observe(Some(0.5)));
        assert!(!es.observe(Some(0.6)));
        assert!(!es.observe(Some(0.1)));
        assert!(es.observe(Some(0.1)));
        let mut off = EarlyStop::new(None);
        assert!(!off.observe(Some(0.0)));
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig { batch: 0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { eta0: -1.0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig::default().validate().is_ok());
    }

    #[test]
    fn single_precision_tracks_double() {
        let m64 = toy_model(&[6, 5], &[3, 2], 0.1, 21);
        let cast = |x: &f64| *x as f32;
        let systems: Vec<EigenSystem<f32>> = m64
            .systems()
            .iter()
            .map(|s| EigenSystem::new(s.lambdas().map(cast), s.vectors().map(cast)).unwrap())
            .collect();
        let kappa = KappaTensor::new(m64.kappa().values().map(cast)).unwrap();
        let alpha = CoreTensor::from_array(m64.alpha().values().map(cast)).unwrap();
        let m32 = Model::with_alpha(alpha, systems, kappa, KappaKind::Nonparametric, 0.1f32).unwrap();
        let o = TupleSet::from_tuples(vec![6, 5], [vec![0, 0], vec![2, 3], vec![5, 4]]).unwrap();
        let cfg = TrainConfig { iterations: 300, seed: 3, eval_every: 100, ..Default::default() };
        let a = train(m64, &o, &cfg).unwrap();
        let b = train(m32, &o, &cfg).unwrap();
        for (x, y) in a.model.alpha().as_slice().iter().zip(b.model.alpha().as_slice()) {
            assert!((x - *y as f64).abs() < 1e-3 * (1.0 + x.abs()), "{x} vs {y}");
        }
        assert_eq!(a.trace.len(), b.trace.len());
    }
}
