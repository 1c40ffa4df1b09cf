//! Splits, tuple-completion queries, ranking metrics, and the one-class
//! nearest-neighbor baseline.
//!
//! A completion query fixes every mode but one (the wildcard) and ranks all
//! indices of the wildcard mode. Training positives are removed from the
//! ranking; test positives matching the query are the relevant items and
//! every other remaining candidate is a negative.

use std::collections::{BTreeMap, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graphio::{SparseGraph, TupleSet};
use crate::Scalar;

/// RNG stream used by [`make_split`].
pub const SPLIT_STREAM: u64 = 4;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("need at least 3 tuples to split, got {0}")]
    TooFewTuples(usize),
    #[error("a completion query needs exactly one wildcard, got {0}")]
    Wildcards(usize),
    #[error("wildcard mode {mode} out of range for {order} modes")]
    BadMode { mode: usize, order: usize },
    #[error("the training set is empty")]
    EmptyTrain,
    #[error("graph count {graphs} does not match tuple order {order}")]
    GraphCount { graphs: usize, order: usize },
    #[error("tuple sets live on different grids: {0:?} vs {1:?}")]
    GridMismatch(Vec<usize>, Vec<usize>),
}

/// Train / validation / test partition of a tuple set.
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: TupleSet,
    pub validation: TupleSet,
    pub test: TupleSet,
}

/// Shuffles with the seed, then takes `floor(N/3)` for training,
/// `floor(N/3)` for validation, and the rest for testing.
pub fn make_split(tuples: &TupleSet, seed: u64) -> Result<Split, EvalError> {
    let n = tuples.len();
    if n < 3 {
        return Err(EvalError::TooFewTuples(n));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(SPLIT_STREAM);
    order.shuffle(&mut rng);
    let third = n / 3;
    Ok(Split {
        train: tuples.subset(order[..third].iter().copied()),
        validation: tuples.subset(order[third..2 * third].iter().copied()),
        test: tuples.subset(order[2 * third..].iter().copied()),
    })
}

/// A partial tuple with exactly one wildcard (`None`) mode.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CompletionQuery {
    fixed: Vec<Option<usize>>,
}

impl CompletionQuery {
    pub fn new(fixed: Vec<Option<usize>>) -> Result<Self, EvalError> {
        let wild = fixed.iter().filter(|x| x.is_none()).count();
        if wild != 1 {
            return Err(EvalError::Wildcards(wild));
        }
        Ok(Self { fixed })
    }

    /// The query obtained by blanking `mode` in `t`.
    pub fn from_tuple(t: &[usize], mode: usize) -> Result<Self, EvalError> {
        if mode >= t.len() {
            return Err(EvalError::BadMode { mode, order: t.len() });
        }
        let fixed = t.iter().enumerate().map(|(j, &i)| (j != mode).then_some(i)).collect();
        Ok(Self { fixed })
    }

    pub fn mode(&self) -> usize {
        self.fixed.iter().position(Option::is_none).expect("one wildcard")
    }

    pub fn fixed(&self) -> &[Option<usize>] {
        &self.fixed
    }

    /// The full tuple with the wildcard set to `candidate`.
    pub fn fill(&self, candidate: usize) -> Vec<usize> {
        self.fixed.iter().map(|x| x.unwrap_or(candidate)).collect()
    }

    /// Text form such as `3,?,7`.
    pub fn label(&self) -> String {
        let parts: Vec<String> = self.fixed.iter().map(|x| x.map_or("?".to_string(), |i| i.to_string())).collect();
        parts.join(",")
    }
}

/// Scores every candidate of the wildcard mode, drops those completing to a
/// tuple in `exclude`, and sorts descending (ties to the lower index).
pub fn rank_completions<F>(score: F, q: &CompletionQuery, exclude: &TupleSet) -> Vec<(usize, f64)>
where
    F: Fn(&[usize]) -> f64,
{
    let size = exclude.dims()[q.mode()];
    let mut ranked: Vec<(usize, f64)> = (0..size)
        .filter_map(|c| {
            let t = q.fill(c);
            (!exclude.contains(&t)).then(|| (c, score(&t)))
        })
        .collect();
    ranked.sort_by(|a, b| crate::scalar::cmp_desc(&a.1, &b.1).then(a.0.cmp(&b.0)));
    ranked
}

/// Mean over relevant items of the precision at their rank. Relevant items
/// missing from `ranked` contribute zero. `None` when nothing is relevant.
pub fn average_precision(ranked: &[usize], relevant: &HashSet<usize>) -> Option<f64> {
    if relevant.is_empty() {
        return None;
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (rank, item) in ranked.iter().enumerate() {
        if relevant.contains(item) {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
        }
    }
    Some(sum / relevant.len() as f64)
}

/// Fraction of (positive, negative) pairs ordered correctly, ties counting
/// one half. `None` unless both sides are non-empty.
pub fn auc(pos: &[f64], neg: &[f64]) -> Option<f64> {
    if pos.is_empty() || neg.is_empty() {
        return None;
    }
    let mut neg_sorted = neg.to_vec();
    neg_sorted.sort_by(|a, b| a.total_cmp(b));
    let mut correct = 0.0;
    for &p in pos {
        let below = neg_sorted.partition_point(|&x| x < p);
        let not_above = neg_sorted.partition_point(|&x| x <= p);
        correct += below as f64 + 0.5 * (not_above - below) as f64;
    }
    Some(correct / (pos.len() as f64 * neg.len() as f64))
}

/// 1 if any relevant item is within the top `k`, else 0. `None` when nothing is relevant.
pub fn hits_at_k(ranked: &[usize], relevant: &HashSet<usize>, k: usize) -> Option<f64> {
    if relevant.is_empty() {
        return None;
    }
    Some(if ranked.iter().take(k).any(|x| relevant.contains(x)) { 1.0 } else { 0.0 })
}

/// Mean of the defined values; `None` if there are none.
pub fn mean_defined(values: impl IntoIterator<Item = Option<f64>>) -> Option<f64> {
    let (sum, n) = values.into_iter().flatten().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Mean average precision over queries.
pub fn map_over_queries(aps: &[Option<f64>]) -> Option<f64> {
    mean_defined(aps.iter().copied())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRow {
    pub query: String,
    pub n_relevant: usize,
    pub n_candidates: usize,
    pub ap: Option<f64>,
    pub auc: Option<f64>,
    pub hit_at_5: Option<f64>,
}

/// Aggregated completion metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub map: Option<f64>,
    pub auc: Option<f64>,
    pub hits_at_5: Option<f64>,
    pub n_queries: usize,
    #[serde(skip)]
    pub per_query: Vec<QueryRow>,
}

impl EvalReport {
    /// `{"map":..,"auc":..,"hits_at_5":..,"n_queries":..}`; undefined metrics are `null`.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn per_query_csv(&self) -> String {
        let opt = |x: Option<f64>| x.map_or(String::new(), |v| v.to_string());
        let mut out = String::from("query,n_relevant,n_candidates,ap,auc,hit_at_5\n");
        for r in &self.per_query {
            out.push_str(&format!(
                "\"{}\",{},{},{},{},{}\n",
                r.query,
                r.n_relevant,
                r.n_candidates,
                opt(r.ap),
                opt(r.auc),
                opt(r.hit_at_5)
            ));
        }
        out
    }
}

/// Evaluates completion of the wildcard `mode` for every distinct query
/// induced by the test tuples. Queries run in parallel; results keep query order.
pub fn evaluate_completions<F>(score: F, train: &TupleSet, test: &TupleSet, mode: usize) -> Result<EvalReport, EvalError>
where
    F: Fn(&[usize]) -> f64 + Sync,
{
    if train.dims() != test.dims() {
        return Err(EvalError::GridMismatch(train.dims().to_vec(), test.dims().to_vec()));
    }
    if mode >= test.order() {
        return Err(EvalError::BadMode { mode, order: test.order() });
    }
    let mut queries: BTreeMap<CompletionQuery, HashSet<usize>> = BTreeMap::new();
    for t in test.tuples() {
        let q = CompletionQuery::from_tuple(t, mode)?;
        queries.entry(q).or_default().insert(t[mode]);
    }
    let queries: Vec<_> = queries.into_iter().collect();
    let per_query: Vec<QueryRow> = queries
        .par_iter()
        .map(|(q, relevant)| {
            let ranked = rank_completions(&score, q, train);
            let order: Vec<usize> = ranked.iter().map(|x| x.0).collect();
            let (pos, neg): (Vec<&(usize, f64)>, Vec<_>) = ranked.iter().partition(|x| relevant.contains(&x.0));
            let pos: Vec<f64> = pos.iter().map(|x| x.1).collect();
            let neg: Vec<f64> = neg.iter().map(|x| x.1).collect();
            QueryRow {
                query: q.label(),
                n_relevant: relevant.len(),
                n_candidates: ranked.len(),
                ap: average_precision(&order, relevant),
                auc: auc(&pos, &neg),
                hit_at_5: hits_at_k(&order, relevant, 5),
            }
        })
        .collect();
    Ok(EvalReport {
        map: mean_defined(per_query.iter().map(|r| r.ap)),
        auc: mean_defined(per_query.iter().map(|r| r.auc)),
        hits_at_5: mean_defined(per_query.iter().map(|r| r.hit_at_5)),
        n_queries: per_query.len(),
        per_query,
    })
}

/// `max_{o in O} prod_j G^(j)[t_j, o_j]`, with absent edges contributing zero.
pub fn one_class_nn_score<T: Scalar>(graphs: &[SparseGraph<T>], train: &TupleSet, t: &[usize]) -> Result<T, EvalError> {
    if graphs.len() != train.order() {
        return Err(EvalError::GraphCount { graphs: graphs.len(), order: train.order() });
    }
    if train.is_empty() {
        return Err(EvalError::EmptyTrain);
    }
    let best = train
        .tuples()
        .iter()
        .map(|o| {
            graphs.iter().zip(t.iter().zip(o)).fold(T::one(), |acc, (g, (&i, &k))| {
                if acc == T::zero() {
                    acc
                } else {
                    acc * g.get(i, k)
                }
            })
        })
        .fold(T::neg_infinity(), T::max);
    Ok(best)
}
