//! Truncated eigensystems of symmetric graphs.
//!
//! Graphs with `n <= dense_limit` are decomposed densely (Householder
//! tridiagonalization followed by implicit QL). Larger graphs go through
//! Lanczos with full reorthogonalization; the Krylov dimension doubles until
//! every retained Ritz pair meets the residual tolerance or the space fills
//! the whole graph.
//!
//! The algebraically largest eigenpairs are kept, sorted descending. Each
//! eigenvector is signed so that its largest-magnitude entry is positive.

use ndarray::{s, Array1, Array2, ArrayView1, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graphio::SparseGraph;
use crate::Scalar;

/// RNG stream reserved for Lanczos start vectors.
pub const EIGEN_STREAM: u64 = 2;

#[derive(Debug, Error, PartialEq)]
pub enum SpectralError {
    #[error("rank {d} must lie in 1..={n}")]
    BadRank { d: usize, n: usize },
    #[error("eigensolver did not converge; worst residuals {residuals:?}")]
    NonConvergence { residuals: Vec<f64> },
    #[error("empty spectrum")]
    EmptySpectrum,
    #[error("coverage {0} must lie in (0, 1]")]
    BadCoverage(f64),
    #[error("eigensystem shape mismatch: {0}")]
    Shape(String),
}

/// Top-`d` eigenpairs of one graph: `lambdas` descending, `vectors` is `n x d`
/// with orthonormal columns.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenSystem<T> {
    lambdas: Array1<T>,
    vectors: Array2<T>,
}

impl<T: Scalar> EigenSystem<T> {
    pub fn new(lambdas: Array1<T>, vectors: Array2<T>) -> Result<Self, SpectralError> {
        if lambdas.len() != vectors.ncols() {
            return Err(SpectralError::Shape(format!(
                "{} eigenvalues for {} vectors",
                lambdas.len(),
                vectors.ncols()
            )));
        }
        if vectors.ncols() > vectors.nrows() {
            return Err(SpectralError::BadRank { d: vectors.ncols(), n: vectors.nrows() });
        }
        Ok(Self { lambdas, vectors: vectors.as_standard_layout().into_owned() })
    }

    pub fn n(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn d(&self) -> usize {
        self.lambdas.len()
    }

    pub fn lambdas(&self) -> &Array1<T> {
        &self.lambdas
    }

    pub fn vectors(&self) -> &Array2<T> {
        &self.vectors
    }

    /// Row `i` of `V`, i.e. vertex `i`'s coordinates in the eigenbasis.
    pub fn row(&self, i: usize) -> &[T] {
        let d = self.d();
        &self.vectors.as_slice().expect("standard layout")[i * d..(i + 1) * d]
    }

    /// First `d` pairs.
    pub fn truncate(&self, d: usize) -> Self {
        let d = d.min(self.d());
        Self {
            lambdas: self.lambdas.slice(s![..d]).to_owned(),
            vectors: self.vectors.slice(s![.., ..d]).as_standard_layout().into_owned(),
        }
    }

    /// `||G v_k - lambda_k v_k||_2` for every retained pair.
    pub fn residuals(&self, g: &SparseGraph<T>) -> Vec<T> {
        let n = self.n();
        let mut gv = vec![T::zero(); n];
        (0..self.d())
            .map(|k| {
                let v: Vec<T> = self.vectors.column(k).to_vec();
                g.matvec(&v, &mut gv);
                gv.iter().zip(&v).map(|(&a, &b)| (a - self.lambdas[k] * b).powi(2)).sum::<T>().sqrt()
            })
            .collect()
    }

    /// Largest entry of `|V^T V - I|`.
    pub fn orthonormality_error(&self) -> T {
        let gram = self.vectors.t().dot(&self.vectors);
        gram.indexed_iter()
            .map(|((a, b), &x)| (x - if a == b { T::one() } else { T::zero() }).abs())
            .fold(T::zero(), T::max)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EigenOptions {
    pub seed: u64,
    /// Residual tolerance relative to `max(1, |lambda|)`; `None` picks a precision-dependent default.
    pub tol: Option<f64>,
    /// Graphs at or below this size use the dense solver.
    pub dense_limit: usize,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self { seed: 0, tol: None, dense_limit: 512 }
    }
}

/// The `d` algebraically largest eigenpairs of `g`.
pub fn top_eigensystem<T: Scalar>(
    g: &SparseGraph<T>,
    d: usize,
    opts: &EigenOptions,
) -> Result<EigenSystem<T>, SpectralError> {
    let n = g.n();
    if d == 0 || d > n {
        return Err(SpectralError::BadRank { d, n });
    }
    let tol = opts.tol.map(T::lit).unwrap_or_else(T::default_tol);
    let sys = if n <= opts.dense_limit {
        let (vals, vecs) = dense_symmetric_eigen(&g.to_dense())?;
        EigenSystem { lambdas: vals.slice(s![..d]).to_owned(), vectors: vecs.slice(s![.., ..d]).to_owned() }
    } else {
        lanczos(g, d, tol, opts.seed)?
    };
    let mut sys = sys;
    fix_signs(&mut sys.vectors);
    if !sys.vectors.is_standard_layout() {
        sys.vectors = sys.vectors.as_standard_layout().into_owned();
    }
    Ok(sys)
}

/// Full eigendecomposition (`d = n`).
pub fn full_eigensystem<T: Scalar>(g: &SparseGraph<T>) -> Result<EigenSystem<T>, SpectralError> {
    top_eigensystem(g, g.n(), &EigenOptions { dense_limit: usize::MAX, ..Default::default() })
}

/// Scales each column so its largest-magnitude entry is positive (first such entry on ties).
pub fn fix_signs<T: Scalar>(vectors: &mut Array2<T>) {
    for mut col in vectors.axis_iter_mut(Axis(1)) {
        let mut best = T::zero();
        let mut sign = T::one();
        for &x in col.iter() {
            if x.abs() > best {
                best = x.abs();
                sign = x.signum();
            }
        }
        if sign < T::zero() {
            col.mapv_inplace(|x| -x);
        }
    }
}

/// How spectral energy is measured for rank selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnergyMeasure {
    #[default]
    Absolute,
    Squared,
}

/// Smallest `d` whose leading `d` eigenvalues (in the given order) carry at
/// least `coverage` of the total energy.
pub fn select_rank_by_energy<T: Scalar>(
    lambdas: &[T],
    coverage: f64,
    measure: EnergyMeasure,
) -> Result<usize, SpectralError> {
    if lambdas.is_empty() {
        return Err(SpectralError::EmptySpectrum);
    }
    if !(coverage > 0.0 && coverage <= 1.0) {
        return Err(SpectralError::BadCoverage(coverage));
    }
    let energy = |x: T| match measure {
        EnergyMeasure::Absolute => x.abs().as_f64(),
        EnergyMeasure::Squared => x.powi(2).as_f64(),
    };
    let total: f64 = lambdas.iter().map(|&x| energy(x)).sum();
    let target = coverage * total * (1.0 - 1e-12);
    let mut acc = 0.0;
    for (k, &x) in lambdas.iter().enumerate() {
        acc += energy(x);
        if acc >= target {
            return Ok(k + 1);
        }
    }
    Ok(lambdas.len())
}

/// Dense symmetric eigendecomposition, eigenvalues descending, eigenvectors as columns.
pub fn dense_symmetric_eigen<T: Scalar>(a: &Array2<T>) -> Result<(Array1<T>, Array2<T>), SpectralError> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(SpectralError::Shape(format!("{}x{} matrix is not square", n, a.ncols())));
    }
    if n == 0 {
        return Err(SpectralError::EmptySpectrum);
    }
    let mut v = a.as_standard_layout().into_owned();
    let mut d = vec![T::zero(); n];
    let mut e = vec![T::zero(); n];
    tred2(&mut v, &mut d, &mut e);
    tql2(&mut v, &mut d, &mut e)?;
    Ok(sort_descending(&d, &v))
}

fn sort_descending<T: Scalar>(vals: &[T], vecs: &Array2<T>) -> (Array1<T>, Array2<T>) {
    let mut order: Vec<usize> = (0..vals.len()).collect();
    order.sort_by(|&a, &b| crate::scalar::cmp_desc(&vals[a], &vals[b]));
    let lambdas = order.iter().map(|&k| vals[k]).collect();
    let vectors = vecs.select(Axis(1), &order);
    (lambdas, vectors)
}

/// Householder reduction to tridiagonal form (EISPACK `tred2`). On return `d`
/// holds the diagonal, `e[1..]` the subdiagonal, and `v` the accumulated transform.
fn tred2<T: Scalar>(v: &mut Array2<T>, d: &mut [T], e: &mut [T]) {
    let n = d.len();
    let zero = T::zero();
    for j in 0..n {
        d[j] = v[[n - 1, j]];
    }
    for i in (1..n).rev() {
        let mut scale = zero;
        let mut h = zero;
        for &dk in d.iter().take(i) {
            scale += dk.abs();
        }
        if scale == zero {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[[i - 1, j]];
                v[[i, j]] = zero;
                v[[j, i]] = zero;
            }
        } else {
            for dk in d.iter_mut().take(i) {
                *dk /= scale;
                h += *dk * *dk;
            }
            let mut f = d[i - 1];
            let mut g = h.sqrt();
            if f > zero {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for ej in e.iter_mut().take(i) {
                *ej = zero;
            }
            for j in 0..i {
                f = d[j];
                v[[j, i]] = f;
                g = e[j] + v[[j, j]] * f;
                for k in j + 1..i {
                    g += v[[k, j]] * d[k];
                    e[k] += v[[k, j]] * f;
                }
                e[j] = g;
            }
            f = zero;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                for k in j..i {
                    let upd = f * e[k] + g * d[k];
                    v[[k, j]] -= upd;
                }
                d[j] = v[[i - 1, j]];
                v[[i, j]] = zero;
            }
        }
        d[i] = h;
    }
    for i in 0..n.saturating_sub(1) {
        v[[n - 1, i]] = v[[i, i]];
        v[[i, i]] = T::one();
        let h = d[i + 1];
        if h != zero {
            for k in 0..=i {
                d[k] = v[[k, i + 1]] / h;
            }
            for j in 0..=i {
                let mut g = zero;
                for k in 0..=i {
                    g += v[[k, i + 1]] * v[[k, j]];
                }
                for k in 0..=i {
                    let upd = g * d[k];
                    v[[k, j]] -= upd;
                }
            }
        }
        for k in 0..=i {
            v[[k, i + 1]] = zero;
        }
    }
    for j in 0..n {
        d[j] = v[[n - 1, j]];
        v[[n - 1, j]] = zero;
    }
    v[[n - 1, n - 1]] = T::one();
    e[0] = zero;
}

/// Implicit QL on a symmetric tridiagonal matrix (EISPACK `tql2`), applying the
/// rotations to `v`. `e[i]` couples rows `i-1` and `i`. Eigenvalues are left unsorted in `d`.
fn tql2<T: Scalar>(v: &mut Array2<T>, d: &mut [T], e: &mut [T]) -> Result<(), SpectralError> {
    let n = d.len();
    let zero = T::zero();
    let one = T::one();
    let two = T::lit(2.0);
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = zero;
    let mut f = zero;
    let mut tst1 = zero;
    let eps = T::epsilon();
    let max_sweeps = 60;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n - 1 && e[m].abs() > eps * tst1 {
            m += 1;
        }
        if m > l {
            let mut sweeps = 0;
            loop {
                sweeps += 1;
                if sweeps > max_sweeps || !tst1.is_finite() {
                    return Err(SpectralError::NonConvergence { residuals: vec![e[l].as_f64()] });
                }
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (two * e[l]);
                let mut r = p.hypot(one);
                if p < zero {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().skip(l + 2) {
                    *di -= h;
                }
                f += h;

                p = d[m];
                let mut c = one;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = zero;
                let mut s2 = zero;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    for k in 0..v.nrows() {
                        h = v[[k, i + 1]];
                        v[[k, i + 1]] = s * v[[k, i]] + c * h;
                        v[[k, i]] = c * v[[k, i]] - s * h;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = zero;
    }
    Ok(())
}

/// Eigen-decomposes the Lanczos tridiagonal `(alpha, beta)`; `beta[k]` couples `k` and `k+1`.
fn tridiagonal_eigen<T: Scalar>(alpha: &[T], beta: &[T]) -> Result<(Array1<T>, Array2<T>), SpectralError> {
    let m = alpha.len();
    let mut v = Array2::eye(m);
    let mut d = alpha.to_vec();
    let mut e = vec![T::zero(); m];
    for k in 1..m {
        e[k] = beta[k - 1];
    }
    tql2(&mut v, &mut d, &mut e)?;
    Ok(sort_descending(&d, &v))
}

fn dot<T: Scalar>(a: ArrayView1<T>, b: ArrayView1<T>) -> T {
    a.dot(&b)
}

fn lanczos<T: Scalar>(g: &SparseGraph<T>, d: usize, tol: T, seed: u64) -> Result<EigenSystem<T>, SpectralError> {
    let n = g.n();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(EIGEN_STREAM);
    let mut m = n.min((2 * d + 20).max(40));
    loop {
        let (sys, worst) = lanczos_pass(g, d, m, &mut rng)?;
        let ok = worst.iter().zip(sys.lambdas.iter()).all(|(&r, &l)| r <= tol * l.abs().max(T::one()));
        if ok {
            return Ok(sys);
        }
        if m == n {
            return Err(SpectralError::NonConvergence { residuals: worst.iter().map(|r| r.as_f64()).collect() });
        }
        m = n.min(2 * m);
    }
}

fn random_unit<T: Scalar>(n: usize, rng: &mut ChaCha8Rng) -> Array1<T> {
    let mut q: Array1<T> = (0..n).map(|_| T::lit(rng.gen_range(-1.0..1.0))).collect();
    let norm = q.dot(&q).sqrt();
    q /= norm;
    q
}

/// One Lanczos run of dimension `m` with full (twice-applied) reorthogonalization.
fn lanczos_pass<T: Scalar>(
    g: &SparseGraph<T>,
    d: usize,
    m: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(EigenSystem<T>, Vec<T>), SpectralError> {
    let n = g.n();
    let mut basis = Array2::<T>::zeros((m, n));
    let mut alpha = Vec::with_capacity(m);
    let mut beta: Vec<T> = Vec::with_capacity(m);
    let breakdown = T::epsilon().sqrt() * T::lit(1e-3);
    basis.row_mut(0).assign(&random_unit(n, rng));
    let mut w = vec![T::zero(); n];
    for k in 0..m {
        let qk: Vec<T> = basis.row(k).to_vec();
        g.matvec(&qk, &mut w);
        let mut wv = Array1::from(w.clone());
        let a = dot(wv.view(), basis.row(k));
        alpha.push(a);
        if k + 1 == m {
            break;
        }
        for _ in 0..2 {
            for j in 0..=k {
                let c = dot(wv.view(), basis.row(j));
                wv.scaled_add(-c, &basis.row(j));
            }
        }
        let mut b = wv.dot(&wv).sqrt();
        if b <= breakdown {
            // Invariant subspace: continue from a fresh direction orthogonal to the basis.
            b = T::zero();
            let mut fresh = random_unit::<T>(n, rng);
            for _ in 0..2 {
                for j in 0..=k {
                    let c = dot(fresh.view(), basis.row(j));
                    fresh.scaled_add(-c, &basis.row(j));
                }
            }
            let norm = fresh.dot(&fresh).sqrt();
            fresh /= norm;
            basis.row_mut(k + 1).assign(&fresh);
        } else {
            basis.row_mut(k + 1).assign(&(&wv / b));
        }
        beta.push(b);
    }
    let (theta, s) = tridiagonal_eigen(&alpha, &beta)?;
    let lambdas = theta.slice(s![..d]).to_owned();
    let vectors = basis.t().dot(&s.slice(s![.., ..d]));
    let sys = EigenSystem { lambdas, vectors: vectors.as_standard_layout().into_owned() };
    let residuals = sys.residuals(g);
    Ok((sys, residuals))
}
