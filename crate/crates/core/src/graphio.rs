//! Graph and tuple inputs.
//!
//! Edge lists are UTF-8 text with one `i<TAB>j<TAB>w` triple per line
//! (0-based indices). Lines starting with `#` are comments; a `# n=<N>` comment
//! declares the vertex count. Tuple lists carry one `i1<TAB>...<TAB>iJ` per line.
//! Both parsers accept any run of whitespace as the separator.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;

use ndarray::Array2;
use thiserror::Error;

use crate::tensor::{checked_volume, flat_index};
use crate::Scalar;

/// Tolerance for symmetric weight agreement.
const SYMMETRY_TOL: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("line {line}: expected `i<TAB>j<TAB>w`, got {text:?}")]
    Malformed { line: usize, text: String },
    #[error("line {line}: vertex index {index} out of range for n={n}")]
    IndexOutOfRange { line: usize, index: usize, n: usize },
    #[error("line {line}: weight {weight} must be finite and nonnegative")]
    BadWeight { line: usize, weight: f64 },
    #[error("line {line}: edge ({i},{j}) has conflicting weights {first} and {second}")]
    ConflictingDuplicate { line: usize, i: usize, j: usize, first: f64, second: f64 },
    #[error("vertex count unknown: pass n or add a `# n=<N>` header")]
    MissingVertexCount,
    #[error("kNN fraction {0} must lie in (0, 1]")]
    BadFraction(f64),
    #[error("line {line}: expected {expected} indices, found {found}")]
    WrongArity { line: usize, expected: usize, found: usize },
    #[error("line {line}: tuple index {index} out of range for mode {mode} (size {size})")]
    TupleOutOfRange { line: usize, mode: usize, index: usize, size: usize },
    #[error("tuple grid must have at least one mode and a representable size")]
    BadDims,
}

/// Symmetric weighted adjacency in compressed sparse row layout.
///
/// Column indices within each row are sorted and unique, and every stored
/// `(i, j, w)` has a mirror `(j, i, w)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseGraph<T> {
    n: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    weights: Vec<T>,
    normalized: bool,
}

impl<T: Scalar> SparseGraph<T> {
    /// Graph with `n` isolated vertices.
    pub fn empty(n: usize) -> Self {
        Self { n, indptr: vec![0; n + 1], indices: Vec::new(), weights: Vec::new(), normalized: false }
    }

    /// Builds a symmetric graph from `(i, j, w)` triples. A pair given in only
    /// one orientation is mirrored; repeated pairs must carry the same weight.
    pub fn from_triplets(
        n: usize,
        triplets: impl IntoIterator<Item = (usize, usize, T)>,
    ) -> Result<Self, GraphError> {
        let numbered = triplets.into_iter().enumerate().map(|(k, (i, j, w))| (k + 1, i, j, w));
        Self::build(n, numbered)
    }

    fn build(
        n: usize,
        triplets: impl Iterator<Item = (usize, usize, usize, T)>,
    ) -> Result<Self, GraphError> {
        let mut map: BTreeMap<(usize, usize), T> = BTreeMap::new();
        for (line, i, j, w) in triplets {
            for index in [i, j] {
                if index >= n {
                    return Err(GraphError::IndexOutOfRange { line, index, n });
                }
            }
            if !w.is_finite() || w < T::zero() {
                return Err(GraphError::BadWeight { line, weight: w.as_f64() });
            }
            let key = (i.min(j), i.max(j));
            match map.get(&key) {
                Some(&prev) if (prev - w).abs().as_f64() > SYMMETRY_TOL => {
                    return Err(GraphError::ConflictingDuplicate {
                        line,
                        i,
                        j,
                        first: prev.as_f64(),
                        second: w.as_f64(),
                    });
                }
                Some(_) => {}
                None => {
                    map.insert(key, w);
                }
            }
        }
        let mut rows: Vec<Vec<(usize, T)>> = vec![Vec::new(); n];
        for (&(i, j), &w) in &map {
            rows[i].push((j, w));
            if i != j {
                rows[j].push((i, w));
            }
        }
        Ok(Self::from_rows(n, rows, false))
    }

    fn from_rows(n: usize, mut rows: Vec<Vec<(usize, T)>>, normalized: bool) -> Self {
        let mut indptr = Vec::with_capacity(n + 1);
        let mut indices = Vec::new();
        let mut weights = Vec::new();
        indptr.push(0);
        for row in &mut rows {
            row.sort_by_key(|&(j, _)| j);
            for &(j, w) in row.iter() {
                indices.push(j);
                weights.push(w);
            }
            indptr.push(indices.len());
        }
        Self { n, indptr, indices, weights, normalized }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of stored directed entries (each off-diagonal edge counts twice).
    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    /// Neighbors of `i` with weights, ascending by neighbor index.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let span = self.indptr[i]..self.indptr[i + 1];
        self.indices[span.clone()].iter().copied().zip(self.weights[span].iter().copied())
    }

    /// Weight of `(i, j)`, zero when absent.
    pub fn get(&self, i: usize, j: usize) -> T {
        let span = self.indptr[i]..self.indptr[i + 1];
        match self.indices[span.clone()].binary_search(&j) {
            Ok(pos) => self.weights[span.start + pos],
            Err(_) => T::zero(),
        }
    }

    /// Each undirected edge once, with `i <= j`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, T)> + '_ {
        (0..self.n).flat_map(move |i| self.row(i).filter(move |&(j, _)| j >= i).map(move |(j, w)| (i, j, w)))
    }

    pub fn degree(&self, i: usize) -> T {
        self.row(i).map(|(_, w)| w).sum()
    }

    /// `y = G x`.
    pub fn matvec(&self, x: &[T], y: &mut [T]) {
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = self.row(i).fold(T::zero(), |acc, (j, w)| acc + w * x[j]);
        }
    }

    pub fn to_dense(&self) -> Array2<T> {
        let mut m = Array2::zeros((self.n, self.n));
        for i in 0..self.n {
            for (j, w) in self.row(i) {
                m[[i, j]] = w;
            }
        }
        m
    }

    /// Serializes as an edge list with a `# n=<N>` header.
    pub fn to_edge_list(&self) -> String {
        let mut out = format!("# n={}\n", self.n);
        for (i, j, w) in self.edges() {
            let _ = writeln!(out, "{i}\t{j}\t{w}");
        }
        out
    }

    /// Rebuilds a graph from raw CSR arrays, checking every invariant.
    pub fn from_csr(
        n: usize,
        indptr: Vec<usize>,
        indices: Vec<usize>,
        weights: Vec<T>,
        normalized: bool,
    ) -> Result<Self, GraphError> {
        if indptr.len() != n + 1 || indices.len() != weights.len() || indptr.last() != Some(&indices.len()) {
            return Err(GraphError::Malformed { line: 0, text: "inconsistent CSR arrays".into() });
        }
        if indptr.windows(2).any(|w| w[0] > w[1]) {
            return Err(GraphError::Malformed { line: 0, text: "indptr not monotone".into() });
        }
        let triplets = (0..n).flat_map(|i| {
            let span = indptr[i]..indptr[i + 1];
            span.map(move |k| (i, k))
        });
        let mut g = Self::build(n, triplets.map(|(i, k)| (0, i, indices[k], weights[k])))?;
        if g.indices != indices {
            return Err(GraphError::Malformed { line: 0, text: "CSR arrays are not symmetric".into() });
        }
        g.normalized = normalized;
        Ok(g)
    }

    pub fn indptr(&self) -> &[usize] {
        &self.indptr
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    /// Removes vertices with no incident edges (self-loops ignored). Returns the
    /// reduced graph and, for each old vertex, its new index if kept.
    pub fn drop_isolated(&self) -> (Self, Vec<Option<usize>>) {
        let mut map = vec![None; self.n];
        let mut next = 0;
        for (i, slot) in map.iter_mut().enumerate() {
            if self.row(i).any(|(j, _)| j != i) {
                *slot = Some(next);
                next += 1;
            }
        }
        let mut rows = vec![Vec::new(); next];
        for i in 0..self.n {
            if let Some(ni) = map[i] {
                rows[ni] = self.row(i).filter_map(|(j, w)| map[j].map(|nj| (nj, w))).collect();
            }
        }
        (Self::from_rows(next, rows, self.normalized), map)
    }
}

/// Parses an edge list. `n` overrides any `# n=<N>` header.
pub fn load_edge_list<T: Scalar>(text: &str, n: Option<usize>) -> Result<SparseGraph<T>, GraphError> {
    let mut header_n = None;
    let mut triplets = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(comment) = trimmed.strip_prefix('#') {
            if let Some(v) = comment.trim().strip_prefix("n=") {
                header_n = Some(v.trim().parse::<usize>().map_err(|_| GraphError::Malformed {
                    line,
                    text: raw.to_string(),
                })?);
            }
            continue;
        }
        let malformed = || GraphError::Malformed { line, text: raw.to_string() };
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(malformed());
        }
        let i = fields[0].parse::<usize>().map_err(|_| malformed())?;
        let j = fields[1].parse::<usize>().map_err(|_| malformed())?;
        let w = fields[2].parse::<T>().map_err(|_| malformed())?;
        triplets.push((line, i, j, w));
    }
    let n = n.or(header_n).ok_or(GraphError::MissingVertexCount)?;
    SparseGraph::build(n, triplets.into_iter())
}

/// Keeps, for every vertex, edges to its `k = max(1, round(fraction * n))`
/// heaviest neighbors (ties to the lower index), then symmetrizes by union.
/// Self-loops are not neighbors and pass through unchanged.
pub fn knn_sparsify<T: Scalar>(g: &SparseGraph<T>, fraction: f64) -> Result<SparseGraph<T>, GraphError> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(GraphError::BadFraction(fraction));
    }
    let k = ((fraction * g.n as f64).round() as usize).max(1);
    let mut keep: HashSet<(usize, usize)> = HashSet::new();
    let mut nbrs: Vec<(usize, T)> = Vec::new();
    for i in 0..g.n {
        nbrs.clear();
        nbrs.extend(g.row(i).filter(|&(j, _)| j != i));
        nbrs.sort_by(|a, b| crate::scalar::cmp_desc(&a.1, &b.1).then(a.0.cmp(&b.0)));
        for &(j, _) in nbrs.iter().take(k) {
            keep.insert((i.min(j), i.max(j)));
        }
    }
    let mut rows: Vec<Vec<(usize, T)>> = vec![Vec::new(); g.n];
    for i in 0..g.n {
        for (j, w) in g.row(i) {
            if i == j || keep.contains(&(i.min(j), i.max(j))) {
                rows[i].push((j, w));
            }
        }
    }
    Ok(SparseGraph::from_rows(g.n, rows, false))
}

/// `D^{-1/2} A D^{-1/2}` with self-loops removed first. Isolated vertices keep
/// empty rows.
pub fn symmetric_normalize<T: Scalar>(g: &SparseGraph<T>) -> SparseGraph<T> {
    let inv_sqrt: Vec<T> = (0..g.n)
        .map(|i| {
            let d: T = g.row(i).filter(|&(j, _)| j != i).map(|(_, w)| w).sum();
            if d > T::zero() {
                T::one() / d.sqrt()
            } else {
                T::zero()
            }
        })
        .collect();
    let rows = (0..g.n)
        .map(|i| {
            g.row(i)
                .filter(|&(j, w)| j != i && w > T::zero())
                .map(|(j, w)| (j, w * inv_sqrt[i] * inv_sqrt[j]))
                .collect()
        })
        .collect();
    SparseGraph::from_rows(g.n, rows, true)
}

/// Labeled tuples over a grid of `dims`, deduplicated, in first-seen order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TupleSet {
    dims: Vec<usize>,
    volume: usize,
    tuples: Vec<Vec<usize>>,
    members: HashSet<usize>,
}

impl TupleSet {
    pub fn new(dims: Vec<usize>) -> Result<Self, GraphError> {
        if dims.is_empty() {
            return Err(GraphError::BadDims);
        }
        let volume = checked_volume(&dims).ok_or(GraphError::BadDims)?;
        Ok(Self { dims, volume, tuples: Vec::new(), members: HashSet::new() })
    }

    pub fn from_tuples(dims: Vec<usize>, tuples: impl IntoIterator<Item = Vec<usize>>) -> Result<Self, GraphError> {
        let mut set = Self::new(dims)?;
        for (k, t) in tuples.into_iter().enumerate() {
            set.insert_checked(t, k + 1)?;
        }
        Ok(set)
    }

    fn insert_checked(&mut self, t: Vec<usize>, line: usize) -> Result<bool, GraphError> {
        if t.len() != self.dims.len() {
            return Err(GraphError::WrongArity { line, expected: self.dims.len(), found: t.len() });
        }
        for (mode, (&index, &size)) in t.iter().zip(&self.dims).enumerate() {
            if index >= size {
                return Err(GraphError::TupleOutOfRange { line, mode, index, size });
            }
        }
        Ok(self.insert_unchecked(t))
    }

    /// Inserts a tuple; returns false when already present.
    pub fn insert(&mut self, t: Vec<usize>) -> Result<bool, GraphError> {
        self.insert_checked(t, 0)
    }

    fn insert_unchecked(&mut self, t: Vec<usize>) -> bool {
        let flat = flat_index(&t, &self.dims);
        if self.members.insert(flat) {
            self.tuples.push(t);
            true
        } else {
            false
        }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    /// Number of modes `J`.
    pub fn order(&self) -> usize {
        self.dims.len()
    }

    /// Size of the full tuple grid.
    pub fn volume(&self) -> usize {
        self.volume
    }

    pub fn len(&self) -> usize {
        self.tuples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tuples.is_empty()
    }

    pub fn tuples(&self) -> &[Vec<usize>] {
        &self.tuples
    }

    pub fn get(&self, k: usize) -> &[usize] {
        &self.tuples[k]
    }

    /// Membership test. Tuples of the wrong arity or out of range are never members.
    pub fn contains(&self, t: &[usize]) -> bool {
        t.len() == self.dims.len()
            && t.iter().zip(&self.dims).all(|(&i, &d)| i < d)
            && self.members.contains(&flat_index(t, &self.dims))
    }

    pub fn contains_flat(&self, flat: usize) -> bool {
        self.members.contains(&flat)
    }

    /// Subset in the given order.
    pub fn subset(&self, picks: impl IntoIterator<Item = usize>) -> Self {
        let mut out = Self::new(self.dims.clone()).expect("dims already validated");
        for k in picks {
            out.insert_unchecked(self.tuples[k].clone());
        }
        out
    }

    /// Reindexes `mode` through `map`, dropping tuples whose vertex was removed.
    pub fn remap(&self, mode: usize, map: &[Option<usize>], new_size: usize) -> Result<Self, GraphError> {
        let mut dims = self.dims.clone();
        dims[mode] = new_size;
        let mut out = Self::new(dims)?;
        for t in &self.tuples {
            if let Some(ni) = map.get(t[mode]).copied().flatten() {
                let mut nt = t.clone();
                nt[mode] = ni;
                out.insert(nt)?;
            }
        }
        Ok(out)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for t in &self.tuples {
            let fields: Vec<String> = t.iter().map(usize::to_string).collect();
            out.push_str(&fields.join("\t"));
            out.push('\n');
        }
        out
    }
}

/// Parses a tuple list against `dims`, dropping duplicates.
pub fn load_tuples(text: &str, dims: &[usize]) -> Result<TupleSet, GraphError> {
    let mut set = TupleSet::new(dims.to_vec())?;
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let t = trimmed
            .split_whitespace()
            .map(|f| f.parse::<usize>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| GraphError::Malformed { line, text: raw.to_string() })?;
        set.insert_checked(t, line)?;
    }
    Ok(set)
}
