//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

mod common;

use std::collections::HashSet;
use std::process::Command;
use std::time::{Duration, Instant};

use common::*;
use nalgebra::DMatrix;
use ndarray::{Array1, Array2, ArrayD, IxDyn};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use topgraph::adapt::{
    feasibility_violation, kappa_gradient, project_constraints, project_monotone, project_simplex, AdaptConfig,
    GradientForm,
};
use topgraph::eval::{auc, average_precision, hits_at_k};
use topgraph::graphio::symmetric_normalize;
use topgraph::model::{seminorm_exact, seminorm_tucker};
use topgraph::sgp::{build_kappa_tensor, materialize_sgp_dense, monotone_violation};
use topgraph::spectral::{full_eigensystem, top_eigensystem, EigenOptions};
use topgraph::train::{
    full_objective, pair_objective_gradient, sgd_step, solve_full_batch, train, FullBatchConfig,
};
use topgraph::{
    AdaGradState64, CoreTensor64, EigenSystem64, KappaKind, KappaSpec64, KappaTensor64, Model64, TrainConfig,
    TupleSet,
};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_core(rng: &mut impl Rng, dims: &[usize]) -> CoreTensor64 {
    let n: usize = dims.iter().product();
    CoreTensor64::from_shape_vec(dims, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn random_kappa(rng: &mut impl Rng, dims: &[usize], lo: f64, hi: f64) -> KappaTensor64 {
    let n: usize = dims.iter().product();
    KappaTensor64::from_shape_vec(dims, (0..n).map(|_| rng.gen_range(lo..hi)).collect()).unwrap()
}

fn to_nd(m: &DMatrix<f64>) -> Array2<f64> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)])
}

fn nd_max_abs(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter().zip(b.iter()).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

fn c1_kronecker() -> Outcome {
    let start = Instant::now();
    let mut r = rng(1);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let (n1, n2) = (r.gen_range(1..=6), r.gen_range(1..=6));
        let (g1, g2) = (random_graph(&mut r, n1, 0.5), random_graph(&mut r, n2, 0.5));
        let systems = vec![full_eigensystem(&g1).unwrap(), full_eigensystem(&g2).unwrap()];
        let (a, b) = (to_na(&g1), to_na(&g2));
        let kron = to_nd(&a.kronecker(&b));
        let ksum = to_nd(&(a.kronecker(&DMatrix::identity(n2, n2)) + DMatrix::identity(n1, n1).kronecker(&b)));
        worst = worst.max(nd_max_abs(&materialize_sgp_dense(&systems, &KappaSpec64::Tensor).unwrap(), &kron));
        worst = worst.max(nd_max_abs(&materialize_sgp_dense(&systems, &KappaSpec64::Cartesian).unwrap(), &ksum));
    }
    let secs = start.elapsed().as_secs_f64();
    check(worst <= 1e-8 && secs < 5.0, format!("max |err| = {worst:.2e} over 100 pairs (limit 1e-8), {secs:.2} s (limit 5 s)"))
}

/// `sum_k <f, ⊗ v_k>^2 / kappa_k` with every product eigenvector built explicitly.
fn seminorm_by_projection(f: &ArrayD<f64>, systems: &[EigenSystem64], kappa: &KappaTensor64) -> f64 {
    let dims: Vec<usize> = systems.iter().map(|s| s.n()).collect();
    let total: usize = dims.iter().product();
    let unravel = |mut flat: usize| {
        let mut idx = vec![0; dims.len()];
        for j in (0..dims.len()).rev() {
            idx[j] = flat % dims[j];
            flat /= dims[j];
        }
        idx
    };
    let flat_f = f.as_slice().unwrap();
    let mut sum = 0.0;
    for kf in 0..total {
        let k = unravel(kf);
        let mut coef = 0.0;
        for vf in 0..total {
            let v = unravel(vf);
            let mut u = 1.0;
            for j in 0..dims.len() {
                u *= systems[j].vectors()[[v[j], k[j]]];
            }
            coef += u * flat_f[vf];
        }
        sum += coef * coef / kappa.as_slice()[kf];
    }
    sum
}

fn c2_seminorm() -> Outcome {
    let start = Instant::now();
    let mut r = rng(2);
    let mut worst: f64 = 0.0;
    let mut worst_direct: f64 = 0.0;
    for t in 0..100 {
        let order = 2 + t % 2;
        let dims: Vec<usize> = (0..order).map(|_| r.gen_range(1..=8)).collect();
        let systems: Vec<EigenSystem64> =
            dims.iter().map(|&n| full_eigensystem(&random_graph(&mut r, n, 0.5)).unwrap()).collect();
        let kappa = random_kappa(&mut r, &dims, 0.05, 2.0);
        let alpha = random_core(&mut r, &dims);
        let m = Model64::with_alpha(alpha, systems, kappa.clone(), KappaKind::Nonparametric, 1.0).unwrap();
        let tucker = seminorm_tucker(m.alpha(), &kappa);
        let f = m.recover_full().unwrap();
        let (exact, _) = seminorm_exact(&f, m.systems(), &KappaSpec64::Nonparametric(kappa.clone())).unwrap();
        worst = worst.max((tucker - exact).abs() / exact.abs());
        if t < 20 {
            let direct = seminorm_by_projection(&f, m.systems(), &kappa);
            worst_direct = worst_direct.max((direct - exact).abs() / exact.abs());
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        worst <= 1e-8 && worst_direct <= 1e-8 && secs < 30.0,
        format!(
            "max rel err tucker vs exact = {worst:.2e}, exact vs explicit projection = {worst_direct:.2e} (limit 1e-8), {secs:.2} s"
        ),
    )
}

fn c3_commutativity() -> Outcome {
    let mut r = rng(3);
    let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for spec in [KappaSpec64::Tensor, KappaSpec64::Cartesian, KappaSpec64::Exponential] {
        for _ in 0..3 {
            let dims: Vec<usize> = (0..3).map(|_| r.gen_range(2..=4)).collect();
            let systems: Vec<EigenSystem64> =
                dims.iter().map(|&n| full_eigensystem(&random_graph(&mut r, n, 0.6)).unwrap()).collect();
            let base = materialize_sgp_dense(&systems, &spec).unwrap();
            let flat = |idx: &[usize], d: &[usize]| idx.iter().zip(d).fold(0, |acc, (&i, &n)| acc * n + i);
            for p in perms {
                cases += 1;
                let psys: Vec<EigenSystem64> = p.iter().map(|&j| systems[j].clone()).collect();
                let pd: Vec<usize> = p.iter().map(|&j| dims[j]).collect();
                let permuted = materialize_sgp_dense(&psys, &spec).unwrap();
                // permutation matrix Q with (Q^T S' Q) compared to S
                let total: usize = dims.iter().product();
                let mut q = Array2::<f64>::zeros((total, total));
                for i0 in 0..dims[0] {
                    for i1 in 0..dims[1] {
                        for i2 in 0..dims[2] {
                            let u = [i0, i1, i2];
                            let pu: Vec<usize> = p.iter().map(|&j| u[j]).collect();
                            q[[flat(&pu, &pd), flat(&u, &dims)]] = 1.0;
                        }
                    }
                }
                let back = q.t().dot(&permuted).dot(&q);
                worst = worst.max(nd_max_abs(&back, &base));
            }
        }
    }
    check(worst <= 1e-8, format!("max |err| = {worst:.2e} over {cases} (kappa, permutation) cases (limit 1e-8)"))
}

fn c4_gradient() -> Outcome {
    let mut r = rng(4);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    let mut trials = 0;
    while trials < 50 {
        let order = r.gen_range(1..=3);
        let ns: Vec<usize> = (0..order).map(|_| r.gen_range(2..=6)).collect();
        let ds: Vec<usize> = ns.iter().map(|&n| r.gen_range(1..=n.min(4))).collect();
        let systems: Vec<EigenSystem64> = ns
            .iter()
            .zip(&ds)
            .map(|(&n, &d)| full_eigensystem(&random_graph(&mut r, n, 0.6)).unwrap().truncate(d))
            .collect();
        let alpha = random_core(&mut r, &ds);
        let kappa = random_kappa(&mut r, &ds, 0.1, 2.0);
        let gamma = r.gen_range(0.01..1.0);
        let mut m = Model64::with_alpha(alpha, systems, kappa, KappaKind::Nonparametric, gamma).unwrap();
        let pos: Vec<usize> = ns.iter().map(|&n| r.gen_range(0..n)).collect();
        let neg: Vec<usize> = ns.iter().map(|&n| r.gen_range(0..n)).collect();
        let mut grad = Vec::new();
        let (_, _, delta) = pair_objective_gradient(&m, &pos, &neg, &mut grad);
        if (1.0 - delta).abs() < 1e-3 {
            continue;
        }
        trials += 1;
        let base = m.alpha().as_slice().to_vec();
        let mut value = |a: Vec<f64>| {
            m.set_alpha(CoreTensor64::from_shape_vec(&ds, a).unwrap()).unwrap();
            let mut g = Vec::new();
            let (l, reg, _) = pair_objective_gradient(&m, &pos, &neg, &mut g);
            l + reg
        };
        let mut fd = vec![0.0; base.len()];
        for k in 0..base.len() {
            let (mut up, mut down) = (base.clone(), base.clone());
            up[k] += h;
            down[k] -= h;
            fd[k] = (value(up) - value(down)) / (2.0 * h);
        }
        let diff: f64 = fd.iter().zip(&grad).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let scale: f64 = fd.iter().map(|a| a * a).sum::<f64>().sqrt().max(1e-12);
        worst = worst.max(diff / scale);
    }
    check(worst <= 1e-5, format!("max relative error = {worst:.2e} over 50 random models (limit 1e-5)"))
}

fn phi_hat(systems: &[EigenSystem64], kappa: &KappaTensor64, gamma: f64, o: &TupleSet) -> (f64, CoreTensor64) {
    let mut m = Model64::new(systems.to_vec(), kappa.clone(), KappaKind::Nonparametric, gamma).unwrap();
    let out = solve_full_batch(&mut m, o, &FullBatchConfig { tol: 1e-13, max_iter: 500 }).unwrap();
    (out.objective, m.alpha().clone())
}

fn c5_danskin() -> Outcome {
    let mut r = rng(5);
    let systems: Vec<EigenSystem64> = [5, 6]
        .iter()
        .map(|&n| full_eigensystem(&random_graph(&mut r, n, 0.6)).unwrap().truncate(2))
        .collect();
    let o = TupleSet::from_tuples(vec![5, 6], [vec![0, 0], vec![1, 2], vec![3, 4], vec![4, 1]]).unwrap();
    let gamma = 0.5;
    let kappa = random_kappa(&mut r, &[2, 2], 0.2, 1.0);
    let (_, alpha_hat) = phi_hat(&systems, &kappa, gamma, &o);
    let squared = kappa_gradient(&alpha_hat, &kappa, gamma, GradientForm::Squared);
    let literal = kappa_gradient(&alpha_hat, &kappa, gamma, GradientForm::Literal);
    let mut worst: f64 = 0.0;
    let mut worst_literal: f64 = 0.0;
    for k in 0..4 {
        let h = 1e-5 * kappa.as_slice()[k];
        let shifted = |delta: f64| {
            let mut v = kappa.as_slice().to_vec();
            v[k] += delta;
            KappaTensor64::from_shape_vec(&[2, 2], v).unwrap()
        };
        let fd = (phi_hat(&systems, &shifted(h), gamma, &o).0 - phi_hat(&systems, &shifted(-h), gamma, &o).0) / (2.0 * h);
        worst = worst.max((squared.as_slice().unwrap()[k] - fd).abs() / fd.abs());
        worst_literal = worst_literal.max((literal.as_slice().unwrap()[k] - fd).abs() / fd.abs());
    }
    check(
        worst <= 1e-3,
        format!(
            "alpha^2 form max rel err = {worst:.2e} (limit 1e-3); unsquared alpha form max rel err = {worst_literal:.2e}"
        ),
    )
}

fn c6_projections() -> Outcome {
    let mut r = rng(6);
    let cfg = AdaptConfig::default();
    let (mut simplex_err, mut pava_err, mut grid_err, mut idem, mut feas) = (0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for _ in 0..200 {
        let n = r.gen_range(1..=5);
        let x: Vec<f64> = (0..n).map(|_| r.gen_range(-2.0..2.0)).collect();
        let total = r.gen_range(0.5..2.0);
        let p = project_simplex(&x, total);
        simplex_err = simplex_err.max(max_abs(&p, &simplex_qp(&x, total)));
        idem = idem.max(max_abs(&p, &project_simplex(&p, total)));

        let len = r.gen_range(1..=9);
        let y: Vec<f64> = (0..len).map(|_| r.gen_range(-2.0..2.0)).collect();
        let t = ArrayD::from_shape_vec(IxDyn(&[len]), y.clone()).unwrap();
        let m = project_monotone(&t, 1e-12, 100).values;
        pava_err = pava_err.max(max_abs(m.as_slice().unwrap(), &isotonic_qp(&y)));
        let mm = project_monotone(&m, 1e-12, 100).values;
        idem = idem.max(max_abs(m.as_slice().unwrap(), mm.as_slice().unwrap()));

        let (rows, cols) = (r.gen_range(1..=4), r.gen_range(1..=4));
        let g: Vec<f64> = (0..rows * cols).map(|_| r.gen_range(-2.0..2.0)).collect();
        let t = ArrayD::from_shape_vec(IxDyn(&[rows, cols]), g.clone()).unwrap();
        let m = project_monotone(&t, 1e-12, 100_000).values;
        grid_err = grid_err.max(max_abs(m.as_slice().unwrap(), &grid_monotone_qp(&g, rows, cols)));
        let mm = project_monotone(&m, 1e-12, 100_000).values;
        idem = idem.max(max_abs(m.as_slice().unwrap(), mm.as_slice().unwrap()));

        let c = project_constraints(&t, &cfg).unwrap().kappa;
        feas = feas.max(feasibility_violation(c.values(), 1.0)).max(monotone_violation(c.values()));
        let cc = project_constraints(c.values(), &cfg).unwrap().kappa;
        idem = idem.max(max_abs(c.as_slice(), cc.as_slice()));
    }
    check(
        simplex_err <= 1e-6 && pava_err <= 1e-10 && grid_err <= 1e-4 && idem <= 1e-8 && feas <= 1e-6,
        format!(
            "simplex {simplex_err:.1e} (1e-6), 1-D PAVA {pava_err:.1e} (1e-10), 2-D cone {grid_err:.1e} (1e-4), \
             idempotence {idem:.1e} (1e-8), feasibility {feas:.1e} (1e-6)"
        ),
    )
}

fn c7_convexity() -> Outcome {
    let mut r = rng(7);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..100 {
        let ns = [r.gen_range(2..=5), r.gen_range(2..=5)];
        let ds: Vec<usize> = ns.iter().map(|&n| r.gen_range(1..=n)).collect();
        let systems: Vec<EigenSystem64> = ns
            .iter()
            .zip(&ds)
            .map(|(&n, &d)| full_eigensystem(&random_graph(&mut r, n, 0.6)).unwrap().truncate(d))
            .collect();
        let kappa = random_kappa(&mut r, &ds, 0.1, 2.0);
        let mut m = Model64::new(systems, kappa, KappaKind::Nonparametric, r.gen_range(0.01..1.0)).unwrap();
        let k = r.gen_range(1..ns[0] * ns[1]);
        let mut all: Vec<Vec<usize>> = (0..ns[0]).flat_map(|i| (0..ns[1]).map(move |j| vec![i, j])).collect();
        all.shuffle(&mut r);
        let o = TupleSet::from_tuples(ns.to_vec(), all.into_iter().take(k)).unwrap();
        let scale = r.gen_range(0.1..5.0);
        let a: Vec<f64> = random_core(&mut r, &ds).as_slice().iter().map(|v| v * scale).collect();
        let b: Vec<f64> = random_core(&mut r, &ds).as_slice().iter().map(|v| v * scale).collect();
        let mid: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 0.5 * (x + y)).collect();
        let mut value = |v: &[f64]| {
            m.set_alpha(CoreTensor64::from_shape_vec(&ds, v.to_vec()).unwrap()).unwrap();
            full_objective(&m, &o).unwrap()
        };
        let (fa, fb, fm) = (value(&a), value(&b), value(&mid));
        worst = worst.max(fm - 0.5 * (fa + fb));
    }
    check(worst <= 1e-10, format!("max midpoint violation = {worst:.2e} over 100 pairs (limit 1e-10)"))
}

fn score_auc(m: &Model64, pos: &[Vec<usize>], neg: &[Vec<usize>]) -> f64 {
    let p: Vec<f64> = pos.iter().map(|t| m.score_tuple(t)).collect();
    let n: Vec<f64> = neg.iter().map(|t| m.score_tuple(t)).collect();
    auc_oracle(&p, &n).unwrap()
}

fn c8_synthetic() -> Outcome {
    let start = Instant::now();
    let n = 60;
    let mut r = rng(7);
    let graphs = [sbm(&mut r, n, 0.3, 0.02), sbm(&mut r, n, 0.3, 0.02)];
    let systems: Vec<EigenSystem64> = graphs
        .iter()
        .map(|g| top_eigensystem(&symmetric_normalize(g), 10, &EigenOptions { seed: 7, ..Default::default() }).unwrap())
        .collect();
    let mut aligned = Vec::new();
    let mut crossed = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if block(i, n) == block(j, n) {
                aligned.push(vec![i, j]);
            } else {
                crossed.push(vec![i, j]);
            }
        }
    }
    aligned.shuffle(&mut r);
    let k = (aligned.len() as f64 * 0.05).round() as usize;
    let positives = TupleSet::from_tuples(vec![n, n], aligned[..k].iter().cloned()).unwrap();
    let held_out = &aligned[k..];
    let cfg = TrainConfig { iterations: 20_000, seed: 7, eval_every: 0, ..Default::default() };
    let mut aucs = Vec::new();
    for spec in [KappaSpec64::Exponential, KappaSpec64::Flat] {
        let kappa = build_kappa_tensor(&spec, &systems).unwrap().kappa;
        let m = Model64::new(systems.clone(), kappa, spec.kind(), 0.1).unwrap();
        let out = train(m, &positives, &cfg).unwrap();
        aucs.push(score_auc(&out.model, held_out, &crossed));
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        aucs[0] >= 0.85 && aucs[0] > aucs[1] && secs < 60.0,
        format!(
            "exponential AUC = {:.4} (limit 0.85), flat AUC = {:.4}, {k} positives, {secs:.1} s (limit 60 s)",
            aucs[0], aucs[1]
        ),
    )
}

fn random_system(r: &mut impl Rng, n: usize, d: usize) -> EigenSystem64 {
    let v = Array2::from_shape_fn((n, d), |_| r.gen_range(-1.0..1.0) / (n as f64).sqrt());
    let l = Array1::from_iter((0..d).map(|k| 1.0 - 0.1 * k as f64));
    EigenSystem64::new(l, v).unwrap()
}

fn median_step(n: usize, r: &mut ChaCha8Rng) -> Duration {
    let systems = vec![random_system(r, n, 8), random_system(r, n, 8)];
    let kappa = build_kappa_tensor(&KappaSpec64::Exponential, &systems).unwrap().kappa;
    let mut m = Model64::new(systems, kappa, KappaKind::Exponential, 0.1).unwrap();
    let o = TupleSet::from_tuples(vec![n, n], (0..200).map(|_| vec![r.gen_range(0..n), r.gen_range(0..n)])).unwrap();
    let mut st = AdaGradState64::new(&[8, 8]);
    let pairs: Vec<(Vec<usize>, Vec<usize>)> = (0..6000)
        .map(|_| (o.get(r.gen_range(0..o.len())).to_vec(), vec![r.gen_range(0..n), r.gen_range(0..n)]))
        .collect();
    let mut times = Vec::with_capacity(pairs.len());
    for (i, (p, q)) in pairs.iter().enumerate() {
        let t = Instant::now();
        sgd_step(&mut m, &mut st, p, q, 1.0).unwrap();
        if i >= 1000 {
            times.push(t.elapsed());
        }
    }
    times.sort();
    times[times.len() / 2]
}

fn c9_n_independence() -> Outcome {
    let mut r = rng(9);
    let small = median_step(1_000, &mut r);
    let large = median_step(10_000, &mut r);
    let ratio = large.as_secs_f64().max(small.as_secs_f64()) / large.as_secs_f64().min(small.as_secs_f64());
    check(
        ratio < 2.0,
        format!("median sgd_step {:.2?} at n=1e3 vs {:.2?} at n=1e4, ratio {ratio:.2} (limit 2)", small, large),
    )
}

fn run_cli(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_topgraph")).args(args).output().map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("{args:?} exited {:?}: {}", out.status.code(), String::from_utf8_lossy(&out.stderr)))
    }
}

fn c10_determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let p = |name: &str| dir.path().join(name).to_string_lossy().into_owned();
    let mut r = rng(10);
    for (j, n) in [(1, 30), (2, 25)] {
        std::fs::write(p(&format!("g{j}.tsv")), sbm(&mut r, n, 0.4, 0.05).to_edge_list()).unwrap();
        run_cli(&["graph", "--in", &p(&format!("g{j}.tsv")), "--normalize", "--out", &p(&format!("g{j}.bin"))])?;
        run_cli(&["eigen", "--graph", &p(&format!("g{j}.bin")), "--rank", "6", "--seed", "3", "--out", &p(&format!("e{j}.bin"))])?;
    }
    let tuples: String = (0..40).map(|_| format!("{}\t{}\n", r.gen_range(0..30), r.gen_range(0..25))).collect();
    std::fs::write(p("pos.tsv"), tuples).unwrap();
    for out in ["m1.bin", "m2.bin"] {
        run_cli(&[
            "train", "--eigen", &p("e1.bin"), "--eigen", &p("e2.bin"), "--tuples", &p("pos.tsv"), "--kappa", "exp",
            "--gamma", "0.1", "--iters", "3000", "--seed", "11", "--batch", "4", "--out", &p(out),
        ])?;
    }
    let (a, b) = (std::fs::read(p("m1.bin")).unwrap(), std::fs::read(p("m2.bin")).unwrap());
    check(a == b && !a.is_empty(), format!("two cmd_train runs: {} and {} bytes, identical = {}", a.len(), b.len(), a == b))
}

fn c11_metrics() -> Outcome {
    let mut r = rng(11);
    let mut worst: f64 = 0.0;
    let mut mismatched_definedness = 0;
    for _ in 0..1000 {
        let len = r.gen_range(1..=12);
        let mut ranked: Vec<usize> = (0..len).collect();
        ranked.shuffle(&mut r);
        let relevant: Vec<usize> = (0..len).filter(|_| r.gen_bool(0.3)).collect();
        let rel_set: HashSet<usize> = relevant.iter().copied().collect();
        let pairs = [
            (average_precision(&ranked, &rel_set), ap_oracle(&ranked, &relevant)),
            (hits_at_k(&ranked, &rel_set, 5), hits_oracle(&ranked, &relevant, 5)),
        ];
        let pos: Vec<f64> = (0..r.gen_range(0..6)).map(|_| r.gen_range(0..5) as f64 * 0.25).collect();
        let neg: Vec<f64> = (0..r.gen_range(0..6)).map(|_| r.gen_range(0..5) as f64 * 0.25).collect();
        for (got, want) in pairs.into_iter().chain([(auc(&pos, &neg), auc_oracle(&pos, &neg))]) {
            match (got, want) {
                (Some(g), Some(w)) => worst = worst.max((g - w).abs()),
                (None, None) => {}
                _ => mismatched_definedness += 1,
            }
        }
    }
    check(
        worst <= 1e-12 && mismatched_definedness == 0,
        format!("max |err| = {worst:.1e} over 1000 lists (limit 1e-12), definedness mismatches = {mismatched_definedness}"),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("Kronecker equivalence", c1_kronecker),
        ("Semi-norm equivalence", c2_seminorm),
        ("Commutativity", c3_commutativity),
        ("Gradient check", c4_gradient),
        ("Danskin check", c5_danskin),
        ("Projection oracles", c6_projections),
        ("Convexity witness", c7_convexity),
        ("Synthetic recovery", c8_synthetic),
        ("Per-iteration n-independence", c9_n_independence),
        ("Determinism", c10_determinism),
        ("Metric oracles", c11_metrics),
    ];
    let mut failed = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        let (tag, detail) = match std::panic::catch_unwind(f) {
            Ok(Ok(d)) => ("PASS", d),
            Ok(Err(d)) => ("FAIL", d),
            Err(_) => ("FAIL", "panicked".to_string()),
        };
        if tag == "FAIL" {
            failed += 1;
        }
        println!("criterion {:>2} [{tag}] {name}: {detail}", k + 1);
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
