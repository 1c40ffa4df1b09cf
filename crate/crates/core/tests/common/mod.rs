#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::Rng;
use topgraph::SparseGraph64;

pub fn random_graph(rng: &mut impl Rng, n: usize, p: f64) -> SparseGraph64 {
    let mut trip = Vec::new();
    for i in 0..n {
        for j in i..n {
            if rng.gen_bool(p) {
                trip.push((i, j, rng.gen_range(0.1..1.0)));
            }
        }
    }
    SparseGraph64::from_triplets(n, trip).unwrap()
}

pub fn to_na(g: &SparseGraph64) -> DMatrix<f64> {
    let d = g.to_dense();
    DMatrix::from_fn(d.nrows(), d.ncols(), |i, j| d[[i, j]])
}

/// Two-block stochastic block model; vertex `i` is in block `i * 2 / n`.
pub fn sbm(rng: &mut impl Rng, n: usize, p_in: f64, p_out: f64) -> SparseGraph64 {
    let mut trip = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let p = if block(i, n) == block(j, n) { p_in } else { p_out };
            if rng.gen_bool(p) {
                trip.push((i, j, 1.0));
            }
        }
    }
    SparseGraph64::from_triplets(n, trip).unwrap()
}

pub fn block(i: usize, n: usize) -> usize {
    i * 2 / n
}

/// Euclidean projection onto `{y >= 0, sum y = total}` by enumerating supports
/// and keeping the nearest KKT-feasible candidate.
pub fn simplex_qp(x: &[f64], total: f64) -> Vec<f64> {
    let n = x.len();
    let mut best = (f64::INFINITY, Vec::new());
    for mask in 1u32..(1 << n) {
        let on = |i: usize| mask >> i & 1 == 1;
        let k = mask.count_ones() as f64;
        let t = ((0..n).filter(|&i| on(i)).map(|i| x[i]).sum::<f64>() - total) / k;
        let y: Vec<f64> = (0..n).map(|i| if on(i) { x[i] - t } else { 0.0 }).collect();
        if y.iter().all(|&v| v >= -1e-12) {
            let cost: f64 = y.iter().zip(x).map(|(a, b)| (a - b).powi(2)).sum();
            if cost < best.0 {
                best = (cost, y);
            }
        }
    }
    best.1
}

/// Exact nonincreasing least-squares fit: the optimum is piecewise constant on
/// consecutive blocks at the block means, so enumerate every block partition.
pub fn isotonic_qp(y: &[f64]) -> Vec<f64> {
    let n = y.len();
    let mut best = (f64::INFINITY, Vec::new());
    for mask in 0u32..(1 << (n - 1)) {
        let mut fit = Vec::with_capacity(n);
        let mut start = 0;
        for i in 0..n {
            if i == n - 1 || mask >> i & 1 == 1 {
                let mean = y[start..=i].iter().sum::<f64>() / (i + 1 - start) as f64;
                fit.extend(std::iter::repeat_n(mean, i + 1 - start));
                start = i + 1;
            }
        }
        if fit.windows(2).all(|w| w[0] >= w[1] - 1e-15) {
            let cost: f64 = fit.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum();
            if cost < best.0 {
                best = (cost, fit);
            }
        }
    }
    best.1
}

/// Projection of a row-major `rows x cols` grid onto the cone of arrays
/// nonincreasing along both axes, by Hildreth's dual coordinate ascent over the
/// pairwise constraints `y[next] - y[prev] <= 0`.
pub fn grid_monotone_qp(x: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut cons = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            let k = r * cols + c;
            if r + 1 < rows {
                cons.push((k, k + cols));
            }
            if c + 1 < cols {
                cons.push((k, k + 1));
            }
        }
    }
    let mut lambda = vec![0.0; cons.len()];
    let mut y = x.to_vec();
    for _ in 0..200_000 {
        let mut moved: f64 = 0.0;
        for (l, &(prev, next)) in lambda.iter_mut().zip(&cons) {
            // y = x - sum lambda_k a_k with a_k = e_next - e_prev, |a_k|^2 = 2
            let slack = y[next] - y[prev];
            let new = (*l + slack / 2.0).max(0.0);
            let step = new - *l;
            if step != 0.0 {
                y[next] -= step;
                y[prev] += step;
                *l = new;
                moved = moved.max(step.abs());
            }
        }
        if moved < 1e-14 {
            break;
        }
    }
    y
}

/// AP by definition: for each relevant item, precision of the prefix ending at it.
pub fn ap_oracle(ranked: &[usize], relevant: &[usize]) -> Option<f64> {
    if relevant.is_empty() {
        return None;
    }
    let mut total = 0.0;
    for r in relevant {
        if let Some(pos) = ranked.iter().position(|x| x == r) {
            let hits = ranked[..=pos].iter().filter(|x| relevant.contains(x)).count();
            total += hits as f64 / (pos + 1) as f64;
        }
    }
    Some(total / relevant.len() as f64)
}

/// AUC by counting every (positive, negative) pair.
pub fn auc_oracle(pos: &[f64], neg: &[f64]) -> Option<f64> {
    if pos.is_empty() || neg.is_empty() {
        return None;
    }
    let mut s = 0.0;
    for p in pos {
        for q in neg {
            s += if p > q {
                1.0
            } else if p == q {
                0.5
            } else {
                0.0
            };
        }
    }
    Some(s / (pos.len() * neg.len()) as f64)
}

pub fn hits_oracle(ranked: &[usize], relevant: &[usize], k: usize) -> Option<f64> {
    if relevant.is_empty() {
        return None;
    }
    let top = &ranked[..ranked.len().min(k)];
    Some(if relevant.iter().any(|r| top.contains(r)) { 1.0 } else { 0.0 })
}

pub fn max_abs(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}
