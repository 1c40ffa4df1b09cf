//! Desk-scale self-checks run by `topgraph oracle`.
//!
//! Each suite compares a fast path against a brute-force reference on small
//! random instances and reports the worst error seen.

use ndarray::{Array2, ArrayD, IxDyn};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::adapt::{feasibility_violation, pava_nonincreasing, project_constraints, project_simplex, AdaptConfig};
use crate::graphio::SparseGraph;
use crate::model::{seminorm_exact, seminorm_tucker, CoreTensor, Model};
use crate::sgp::{materialize_sgp_dense, KappaKind, KappaSpec, KappaTensor};
use crate::spectral::{full_eigensystem, EigenSystem};
use crate::tensor::{flat_index, MultiIndex};
use crate::train::pair_objective_gradient;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Dense,
    Seminorm,
    Commutativity,
    Gradient,
    Projection,
}

impl Suite {
    pub const ALL: [Suite; 5] = [Suite::Dense, Suite::Seminorm, Suite::Commutativity, Suite::Gradient, Suite::Projection];

    pub fn parse(name: &str) -> Option<Vec<Suite>> {
        Some(match name {
            "all" => Self::ALL.to_vec(),
            "dense" => vec![Suite::Dense],
            "seminorm" => vec![Suite::Seminorm],
            "commutativity" => vec![Suite::Commutativity],
            "gradient" => vec![Suite::Gradient],
            "projection" => vec![Suite::Projection],
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteResult {
    pub suite: Suite,
    pub trials: usize,
    pub max_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub seed: u64,
    pub passed: bool,
    pub suites: Vec<SuiteResult>,
}

pub fn run_suites(suites: &[Suite], seed: u64) -> OracleReport {
    let results: Vec<SuiteResult> = suites
        .iter()
        .enumerate()
        .map(|(k, &s)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            let (trials, max_error, tolerance) = match s {
                Suite::Dense => dense_suite(&mut rng),
                Suite::Seminorm => seminorm_suite(&mut rng),
                Suite::Commutativity => commutativity_suite(&mut rng),
                Suite::Gradient => gradient_suite(&mut rng),
                Suite::Projection => projection_suite(&mut rng),
            };
            SuiteResult { suite: s, trials, max_error, tolerance, passed: max_error <= tolerance }
        })
        .collect();
    OracleReport { seed, passed: results.iter().all(|r| r.passed), suites: results }
}

/// Random symmetric graph with nonnegative weights; each pair is an edge with probability `p`.
pub fn random_graph(rng: &mut impl Rng, n: usize, p: f64) -> SparseGraph<f64> {
    let mut trip = Vec::new();
    for i in 0..n {
        for j in i..n {
            if rng.gen_bool(p) {
                trip.push((i, j, rng.gen_range(0.1..1.0)));
            }
        }
    }
    SparseGraph::from_triplets(n, trip).expect("valid triplets")
}

fn kron(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    let (m, n) = (a.nrows(), b.nrows());
    Array2::from_shape_fn((m * n, m * n), |(r, c)| a[[r / n, c / n]] * b[[r % n, c % n]])
}

fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter().zip(b.iter()).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

fn dense_suite(rng: &mut ChaCha8Rng) -> (usize, f64, f64) {
    let trials = 20;
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let (n1, n2) = (rng.gen_range(1..=6), rng.gen_range(1..=6));
        let g1 = random_graph(rng, n1, 0.5);
        let g2 = random_graph(rng, n2, 0.5);
        let systems = vec![full_eigensystem(&g1).unwrap(), full_eigensystem(&g2).unwrap()];
        let (a, b) = (g1.to_dense(), g2.to_dense());
        let tensor = materialize_sgp_dense(&systems, &KappaSpec::Tensor).unwrap();
        worst = worst.max(max_abs_diff(&tensor, &kron(&a, &b)));
        let sum = kron(&a, &Array2::eye(n2)) + kron(&Array2::eye(n1), &b);
        let cart = materialize_sgp_dense(&systems, &KappaSpec::Cartesian).unwrap();
        worst = worst.max(max_abs_diff(&cart, &sum));
    }
    (trials, worst, 1e-8)
}

fn random_core(rng: &mut impl Rng, dims: &[usize]) -> CoreTensor<f64> {
    let n: usize = dims.iter().product();
    CoreTensor::from_shape_vec(dims, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn random_kappa(rng: &mut impl Rng, dims: &[usize]) -> KappaTensor<f64> {
    let n: usize = dims.iter().product();
    KappaTensor::from_shape_vec(dims, (0..n).map(|_| rng.gen_range(0.1..2.0)).collect()).unwrap()
}

fn seminorm_suite(rng: &mut ChaCha8Rng) -> (usize, f64, f64) {
    let trials = 30;
    let mut worst: f64 = 0.0;
    for t in 0..trials {
        let order = 2 + t % 2;
        let dims: Vec<usize> = (0..order).map(|_| rng.gen_range(1..=if order == 2 { 8 } else { 5 })).collect();
        let systems: Vec<EigenSystem<f64>> =
            dims.iter().map(|&n| full_eigensystem(&random_graph(rng, n, 0.6)).unwrap()).collect();
        let kappa = random_kappa(rng, &dims);
        let alpha = random_core(rng, &dims);
        let m = Model::with_alpha(alpha, systems, kappa.clone(), KappaKind::Nonparametric, 1.0).unwrap();
        let fast = seminorm_tucker(m.alpha(), &kappa);
        let f = m.recover_full().unwrap();
        let (exact, _) = seminorm_exact(&f, m.systems(), &KappaSpec::Nonparametric(kappa)).unwrap();
        worst = worst.max((fast - exact).abs() / exact.abs().max(1e-300));
    }
    (trials, worst, 1e-8)
}

fn commutativity_suite(rng: &mut ChaCha8Rng) -> (usize, f64, f64) {
    let perms: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    let mut worst: f64 = 0.0;
    let mut trials = 0;
    for spec in [KappaSpec::Tensor, KappaSpec::Cartesian, KappaSpec::Exponential] {
        let dims: Vec<usize> = (0..3).map(|_| rng.gen_range(1..=4)).collect();
        let systems: Vec<EigenSystem<f64>> =
            dims.iter().map(|&n| full_eigensystem(&random_graph(rng, n, 0.6)).unwrap()).collect();
        let base = materialize_sgp_dense(&systems, &spec).unwrap();
        for p in perms {
            trials += 1;
            let psys: Vec<EigenSystem<f64>> = p.iter().map(|&j| systems[j].clone()).collect();
            let pdims: Vec<usize> = p.iter().map(|&j| dims[j]).collect();
            let permuted = materialize_sgp_dense(&psys, &spec).unwrap();
            let vertices: Vec<Vec<usize>> = MultiIndex::new(&dims).collect();
            for u in &vertices {
                let pu: Vec<usize> = p.iter().map(|&j| u[j]).collect();
                for v in &vertices {
                    let pv: Vec<usize> = p.iter().map(|&j| v[j]).collect();
                    let a = base[[flat_index(u, &dims), flat_index(v, &dims)]];
                    let b = permuted[[flat_index(&pu, &pdims), flat_index(&pv, &pdims)]];
                    worst = worst.max((a - b).abs());
                }
            }
        }
    }
    (trials, worst, 1e-8)
}

fn gradient_suite(rng: &mut ChaCha8Rng) -> (usize, f64, f64) {
    let trials = 30;
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    let mut done = 0;
    while done < trials {
        let ns: Vec<usize> = (0..2).map(|_| rng.gen_range(3..=6)).collect();
        let ds: Vec<usize> = ns.iter().map(|&n| rng.gen_range(1..=n)).collect();
        let systems: Vec<EigenSystem<f64>> = ns
            .iter()
            .zip(&ds)
            .map(|(&n, &d)| full_eigensystem(&random_graph(rng, n, 0.6)).unwrap().truncate(d))
            .collect();
        let alpha = random_core(rng, &ds);
        let kappa = random_kappa(rng, &ds);
        let gamma = rng.gen_range(0.01..1.0);
        let mut m = Model::with_alpha(alpha, systems, kappa, KappaKind::Nonparametric, gamma).unwrap();
        let pos: Vec<usize> = ns.iter().map(|&n| rng.gen_range(0..n)).collect();
        let neg: Vec<usize> = ns.iter().map(|&n| rng.gen_range(0..n)).collect();
        let mut grad = Vec::new();
        let (_, _, delta) = pair_objective_gradient(&m, &pos, &neg, &mut grad);
        if (1.0 - delta).abs() < 1e-3 {
            continue;
        }
        done += 1;
        let base = m.alpha().as_slice().to_vec();
        let mut scratch = Vec::new();
        let mut value_at = |m: &mut Model<f64>, a: Vec<f64>| {
            m.set_alpha(CoreTensor::from_shape_vec(&ds, a).unwrap()).unwrap();
            let (l, r, _) = pair_objective_gradient(m, &pos, &neg, &mut scratch);
            l + r
        };
        for k in 0..base.len() {
            let mut up = base.clone();
            up[k] += h;
            let mut down = base.clone();
            down[k] -= h;
            let fd = (value_at(&mut m, up) - value_at(&mut m, down)) / (2.0 * h);
            worst = worst.max((fd - grad[k]).abs() / grad[k].abs().max(fd.abs()).max(1e-4));
        }
    }
    (trials, worst, 1e-5)
}

/// Nearest point of the simplex by enumerating supports.
fn simplex_by_support(x: &[f64], total: f64) -> Vec<f64> {
    let n = x.len();
    let mut best = (f64::INFINITY, Vec::new());
    for mask in 1u32..(1 << n) {
        let k = mask.count_ones() as f64;
        let t = ((0..n).filter(|i| mask >> i & 1 == 1).map(|i| x[i]).sum::<f64>() - total) / k;
        let y: Vec<f64> = (0..n).map(|i| if mask >> i & 1 == 1 { x[i] - t } else { 0.0 }).collect();
        if y.iter().all(|&v| v >= -1e-12) {
            let cost: f64 = y.iter().zip(x).map(|(a, b)| (a - b).powi(2)).sum();
            if cost < best.0 {
                best = (cost, y);
            }
        }
    }
    best.1
}

/// Nonincreasing least-squares fit by enumerating block partitions.
fn isotonic_by_partition(y: &[f64]) -> Vec<f64> {
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

fn projection_suite(rng: &mut ChaCha8Rng) -> (usize, f64, f64) {
    let trials = 50;
    let mut worst: f64 = 0.0;
    let cfg = AdaptConfig::default();
    for _ in 0..trials {
        let n = rng.gen_range(1..=5);
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let p = project_simplex(&x, 1.0);
        let o = simplex_by_support(&x, 1.0);
        worst = worst.max(p.iter().zip(&o).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())) / 1e-6 * 1e-8);

        let mut y: Vec<f64> = (0..rng.gen_range(1..=8)).map(|_| rng.gen_range(-2.0..2.0)).collect();
        y.shuffle(rng);
        let want = isotonic_by_partition(&y);
        pava_nonincreasing(&mut y);
        worst = worst.max(y.iter().zip(&want).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())) / 1e-10 * 1e-8);

        let dims = [rng.gen_range(1..=3), rng.gen_range(1..=3)];
        let data: Vec<f64> = (0..dims[0] * dims[1]).map(|_| rng.gen_range(-1.0..2.0)).collect();
        let t = ArrayD::from_shape_vec(IxDyn(&dims), data).unwrap();
        let c = project_constraints(&t, &cfg).unwrap();
        worst = worst.max(feasibility_violation(c.kappa.values(), 1.0) / 1e-6 * 1e-8);
        let again = project_constraints(c.kappa.values(), &cfg).unwrap();
        let drift = c.kappa.as_slice().iter().zip(again.kappa.as_slice()).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        worst = worst.max(drift);
    }
    // errors are rescaled so every check shares the 1e-8 threshold
    (trials, worst, 1e-8)
}
