//! End-to-end acceptance checks. Each test prints one PASS/FAIL line to the
//! raw stderr handle so the verdicts survive libtest's output capture.

use std::io::Write;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use vvnet::caratheodory::{reduce, ReduceConfig};
use vvnet::compress::{compress_network, CompressConfig};
use vvnet::mlp::{synthetic_classification, train_mlp, MlpConfig};
use vvnet::mtl::{group_norm, solve_constrained, support, MtlProblem, SolverConfig};
use vvnet::norms::{Activation, AtomicMeasure, AtomicNet, Dataset, MeasureNorm, Neuron};
use vvnet::oracle::{
    exhaustive_min_support, feasibility_residual, histogram_experiment, random_instance, ExperimentMode, InstanceSpec,
    K_MAX_GUARD, OPTIMALITY_RTOL,
};
use vvnet::rng::CounterRng;
use vvnet::tensor::{matmul, norm2, numerical_rank, pinv, svd, Matrix, Threshold};
use vvnet::trainer::{
    active_neurons, generate_teacher_data, init_net, objective_and_gradient, params, set_params, shared_fraction,
    train, training_objective, Regularizer, TeacherSpec, TrainConfig, ACTIVE_EPS,
};

fn verdict(id: u32, name: &str, pass: bool, detail: &str) {
    let line = format!(
        "\ncriterion {id:>2} {name}: {} ({detail})\n",
        if pass { "PASS" } else { "FAIL" }
    );
    let _ = std::io::stderr().lock().write_all(line.as_bytes());
    assert!(pass, "criterion {id} failed: {detail}");
}

fn random_net(rng: &mut CounterRng, k: usize, d: usize, out: usize, act: Activation) -> AtomicNet {
    let neurons = (0..k)
        .map(|_| Neuron {
            w: (0..=d).map(|_| rng.standard_normal()).collect(),
            v: (0..out).map(|_| rng.standard_normal()).collect(),
        })
        .collect();
    AtomicNet::with_neurons(d, out, act, neurons).unwrap()
}

#[test]
fn c01_solver_matches_exhaustive_oracle() {
    let t = Instant::now();
    let config = SolverConfig::default();
    let mut rng = CounterRng::stream(1, "acceptance.c01", 0);
    let mut worst = 0.0f64;
    let mut failures = Vec::new();
    for i in 0..50u64 {
        let d = 1 + rng.below(3);
        let n = 1 + rng.below(4);
        let k = 1 + rng.below(10);
        let spec = InstanceSpec {
            d,
            n,
            k,
            rank_phi: 1 + rng.below(k.min(n)),
            rank_psi: 1 + rng.below(d.min(n)),
            seed: 1000 + i,
        };
        let (phi, psi) = random_instance(&spec).unwrap();
        let oracle = exhaustive_min_support(&phi, &psi, K_MAX_GUARD, OPTIMALITY_RTOL, &config).unwrap();
        let p = MtlProblem::new(phi, psi, 0.0).unwrap();
        let sol = solve_constrained(&p, &config).unwrap();
        let gap = (sol.objective - oracle.optimal_objective).abs() / oracle.optimal_objective.max(1e-300);
        worst = worst.max(gap);
        if gap > 1e-6 {
            failures.push((spec, gap));
        }
    }
    let secs = t.elapsed().as_secs_f64();
    verdict(
        1,
        "constrained solver vs exhaustive oracle",
        failures.is_empty() && secs <= 300.0,
        &format!(
            "50 instances, worst relative gap {worst:.2e}, {} above 1e-6, {secs:.1}s",
            failures.len()
        ),
    );
}

#[test]
fn c02_width_bounds_across_ranks() {
    let t = Instant::now();
    let mut detail = Vec::new();
    let mut pass = true;
    for r in [2, 5, 10, 20] {
        let spec = InstanceSpec {
            d: 10,
            n: 20,
            k: 200,
            rank_phi: r,
            rank_psi: 10,
            seed: 2,
        };
        let h = histogram_experiment(&spec, 100, ExperimentMode::Solver, &SolverConfig::default(), 1).unwrap();
        let ok = h
            .outcomes
            .iter()
            .filter(|o| o.general_position == Some(true) && o.support_size.is_some_and(|s| s >= r && s <= r * 10))
            .count();
        let lo = h.rows.first().map_or(0, |x| x.0);
        let hi = h.rows.last().map_or(0, |x| x.0);
        pass &= ok == 100;
        detail.push(format!("r={r}: {ok}/100 in [{r},{}], sizes {lo}..{hi}", r * 10));
    }
    let secs = t.elapsed().as_secs_f64();
    pass &= secs <= 1200.0;
    verdict(
        2,
        "support bounds for D=10 N=20 K=200",
        pass,
        &format!("{}; {secs:.1}s", detail.join("; ")),
    );
}

#[test]
fn c03_full_rank_histogram() {
    let t = Instant::now();
    let spec = InstanceSpec {
        d: 10,
        n: 10,
        k: 500,
        rank_phi: 10,
        rank_psi: 10,
        seed: 3,
    };
    let h = histogram_experiment(&spec, 100, ExperimentMode::Solver, &SolverConfig::default(), 1).unwrap();
    let ok = h
        .outcomes
        .iter()
        .filter(|o| o.support_size.is_some_and(|s| (10..=100).contains(&s)))
        .count();
    let secs = t.elapsed().as_secs_f64();
    let lo = h.rows.first().map_or(0, |x| x.0);
    let hi = h.rows.last().map_or(0, |x| x.0);
    verdict(
        3,
        "support sizes for D=10 N=10 K=500",
        ok == 100 && secs <= 1200.0,
        &format!("{ok}/100 in [10,100], sizes {lo}..{hi}, {secs:.1}s"),
    );
}

#[test]
fn c04_exhaustive_histogram() {
    let t = Instant::now();
    let mut pass = true;
    let mut seen = std::collections::BTreeSet::new();
    let mut detail = Vec::new();
    for k in 7..=11 {
        let spec = InstanceSpec {
            d: 2,
            n: 3,
            k,
            rank_phi: 3,
            rank_psi: 2,
            seed: 4,
        };
        let h = histogram_experiment(&spec, 200, ExperimentMode::Exhaustive, &SolverConfig::default(), 1).unwrap();
        let ok = h
            .outcomes
            .iter()
            .filter(|o| o.support_size.is_some_and(|s| s >= o.r_phi && s <= o.r_phi * o.r_psi))
            .count();
        pass &= ok == 200;
        seen.extend(h.rows.iter().map(|r| r.0));
        detail.push(format!("K={k}: {ok}/200 {:?}", h.rows));
    }
    let secs = t.elapsed().as_secs_f64();
    pass &= seen.len() >= 2 && secs <= 1800.0;
    verdict(
        4,
        "exhaustive minimum support for D=2 N=3",
        pass,
        &format!("{}; {} distinct sizes; {secs:.1}s", detail.join("; "), seen.len()),
    );
}

/// `rows × r` with orthonormal columns.
fn orthonormal(rng: &mut CounterRng, rows: usize, r: usize) -> Matrix {
    let g = Matrix::from_fn(rows, r, |_, _| rng.standard_normal());
    svd(&g).unwrap().u
}

/// `Φ = Q₁ S Q₂ᵀ` and `Ψ = Q₃ S' (Q₂ R)ᵀ` with singular values in `[1, 2]`,
/// so both ranks are unambiguous and `row(Ψ) ⊆ row(Φ)`.
fn conditioned_instance(rng: &mut CounterRng, k: usize, n: usize, d: usize, rp: usize, rq: usize) -> (Matrix, Matrix) {
    let spectrum =
        |rng: &mut CounterRng, r: usize| Matrix::diag(&(0..r).map(|_| 1.0 + rng.uniform()).collect::<Vec<_>>());
    let q1 = orthonormal(rng, k, rp);
    let q2 = orthonormal(rng, n, rp);
    let s = spectrum(rng, rp);
    let phi = matmul(&matmul(&q1, &s).unwrap(), &q2.transpose()).unwrap();
    let q3 = orthonormal(rng, d, rq);
    let inner = matmul(&q2, &orthonormal(rng, rp, rq)).unwrap();
    let s2 = spectrum(rng, rq);
    let psi = matmul(&matmul(&q3, &s2).unwrap(), &inner.transpose()).unwrap();
    (phi, psi)
}

#[test]
fn c05_reduction_contract() {
    let mut rng = CounterRng::stream(5, "acceptance.c05", 0);
    let mut passed = 0;
    let (mut worst_obj, mut worst_feas) = (f64::NEG_INFINITY, 0.0f64);
    for _ in 0..100 {
        let n = 4 + rng.below(9);
        let d = 1 + rng.below(4);
        let rank_phi = 1 + rng.below(n.min(6));
        let rank_psi = 1 + rng.below(d.min(rank_phi));
        let k = rank_phi * rank_psi + 3 + rng.below(20);
        let (phi, psi) = conditioned_instance(&mut rng, k, n, d, rank_phi, rank_psi);
        // The minimum-Frobenius solution uses every column.
        let v = matmul(&psi, &pinv(&phi, Threshold::Relative(1e-9)).unwrap()).unwrap();
        let r_phi = numerical_rank(&phi, Threshold::Relative(1e-9)).unwrap().rank;
        let r_psi = numerical_rank(&psi, Threshold::Relative(1e-9)).unwrap().rank;
        let (out, _) = reduce(&phi, &psi, &v, &ReduceConfig::default()).unwrap();
        let before = group_norm(&v);
        let rel = (group_norm(&out) - before) / before;
        let feas = feasibility_residual(&phi, &psi, &out).unwrap();
        worst_obj = worst_obj.max(rel);
        worst_feas = worst_feas.max(feas);
        let size = support(&out, SolverConfig::default().support_eps).len();
        if size <= r_phi * r_psi && rel <= 1e-8 && feas <= 1e-7 {
            passed += 1;
        }
    }
    verdict(
        5,
        "reduction support, objective and feasibility",
        passed == 100,
        &format!("{passed}/100, worst relative objective change {worst_obj:.2e}, worst residual {worst_feas:.2e}"),
    );
}

#[test]
fn c06_rebalance_identities() {
    let mut rng = CounterRng::stream(6, "acceptance.c06", 0);
    let acts = [
        Activation::Relu,
        Activation::LeakyRelu(0.1),
        Activation::Abs,
        Activation::Linear,
    ];
    let (mut eval_gap, mut bal_gap, mut path_gap) = (0.0f64, 0.0f64, 0.0f64);
    for i in 0..1000 {
        let d = 1 + rng.below(5);
        let out = 1 + rng.below(4);
        let k = 1 + rng.below(20);
        let net = random_net(&mut rng, k, d, out, acts[i % 4]);
        let b = net.rebalance().unwrap();
        for _ in 0..100 {
            let x: Vec<f64> = (0..d).map(|_| rng.standard_normal()).collect();
            let f = net.evaluate(&x).unwrap();
            let g = b.evaluate(&x).unwrap();
            let scale = net.evaluation_scale(&x).unwrap().max(f64::MIN_POSITIVE);
            for (a, c) in f.iter().zip(&g) {
                eval_gap = eval_gap.max((a - c).abs() / scale);
            }
        }
        for n in &b.neurons {
            let (a, c) = (norm2(&n.w), norm2(&n.v));
            bal_gap = bal_gap.max((a - c).abs() / a.max(c));
        }
        let path = net.path_norm();
        path_gap = path_gap.max((b.weight_decay_cost() - path).abs() / path);
    }
    verdict(
        6,
        "rebalance preserves outputs and balances norms",
        eval_gap <= 1e-12 && bal_gap <= 1e-12 && path_gap <= 1e-12,
        &format!("1000 nets: output {eval_gap:.2e}, balance {bal_gap:.2e}, path identity {path_gap:.2e}"),
    );
}

#[test]
fn c07_merging_near_duplicates() {
    let mut rng = CounterRng::stream(7, "acceptance.c07", 0);
    let lambda = 0.05;
    let mut passed = 0;
    let mut eps_range = (f64::INFINITY, 0.0f64);
    for _ in 0..100 {
        let d = 2;
        let w1: Vec<f64> = (0..=d).map(|_| rng.standard_normal()).collect();
        let mut u: Vec<f64> = (0..=d).map(|_| rng.standard_normal()).collect();
        let un = norm2(&u);
        u.iter_mut().for_each(|x| *x /= un);
        let sign = |r: &mut CounterRng| if r.below(2) == 0 { -1.0 } else { 1.0 };
        let a = sign(&mut rng) * (0.5 + 1.5 * rng.uniform());
        let b = sign(&mut rng) * (0.5 + 1.5 * rng.uniform());
        let other = random_net(&mut rng, 2, d, 2, Activation::Relu).neurons;
        let build = |eps: f64| {
            let w2: Vec<f64> = w1.iter().zip(&u).map(|(x, y)| x + eps * y).collect();
            let mut ns = vec![
                Neuron {
                    w: w1.clone(),
                    v: vec![a, 0.0],
                },
                Neuron { w: w2, v: vec![0.0, b] },
            ];
            ns.extend(other.iter().cloned());
            AtomicNet::with_neurons(d, 2, Activation::Relu, ns).unwrap()
        };
        let x = Matrix::from_fn(d, 20, |_, _| rng.standard_normal());
        let y = build(0.0).forward(&x).unwrap();
        let y = Matrix::from_fn(2, 20, |r, c| y.get(r, c) + 0.1 * rng.standard_normal());
        let data = Dataset::new(x, y).unwrap();
        let diff = |eps: f64| {
            let net = build(eps);
            let merged = net.merge_neurons(0, 1).unwrap();
            merged.objective(&data, lambda).unwrap() - net.objective(&data, lambda).unwrap()
        };
        let mut lo = 1e-6;
        if diff(lo) >= 0.0 {
            continue;
        }
        let mut hi = lo;
        while diff(hi) < 0.0 && hi < 1e3 {
            hi *= 2.0;
        }
        let eps_star = if diff(hi) < 0.0 {
            hi
        } else {
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if diff(mid) < 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            lo
        };
        let net = build(eps_star / 2.0);
        let norm_drop = net.merge_neurons(0, 1).unwrap().variation_norm().unwrap() < net.variation_norm().unwrap();
        if eps_star > 0.0 && diff(eps_star / 2.0) < 0.0 && norm_drop {
            passed += 1;
        }
        eps_range = (eps_range.0.min(eps_star), eps_range.1.max(eps_star));
    }
    verdict(
        7,
        "merging disjoint-output near-duplicates",
        passed == 100,
        &format!("{passed}/100, eps* in [{:.2e}, {:.2e}]", eps_range.0, eps_range.1),
    );
}

#[test]
fn c08_measure_norm_sandwich() {
    let mut rng = CounterRng::stream(8, "acceptance.c08", 0);
    let mut violations = 0;
    for i in 0..1000 {
        let dim = 1 + i % 8;
        let atoms = 1 + rng.below(12);
        let m = AtomicMeasure {
            atoms: (0..atoms)
                .map(|_| {
                    let mut loc: Vec<f64> = (0..3).map(|_| rng.standard_normal()).collect();
                    let s = norm2(&loc);
                    loc.iter_mut().for_each(|x| *x /= s);
                    (loc, (0..dim).map(|_| rng.standard_normal()).collect())
                })
                .collect(),
        };
        let pm = m.norm(1.0, MeasureNorm::PM).unwrap();
        let mp = m.norm(1.0, MeasureNorm::MP).unwrap();
        let tol = 1e-12 * mp;
        if !(mp / dim as f64 <= pm + tol && pm <= mp + tol) {
            violations += 1;
        }
    }
    verdict(
        8,
        "measure norm sandwich",
        violations == 0,
        &format!("1000 measures, {violations} violations"),
    );
}

// Calibrated so that 200k iterations cover the same lr × iterations budget
// as the long reference run.
const SHARING_LR: f64 = 2e-2;
const SHARING_WD: f64 = 1e-2;
const SHARING_L1: f64 = 1e-4;

#[test]
fn c09_neuron_sharing_ordering() {
    let t = Instant::now();
    let mut ordered = 0;
    let mut shared = 0;
    let mut rows = Vec::new();
    for seed in 0..5u64 {
        let (data, _) = generate_teacher_data(&TeacherSpec::new(seed)).unwrap();
        let init = init_net(150, 2, 3, None, seed);
        let run = |reg, lambda| {
            let cfg = TrainConfig {
                reg,
                lambda,
                lr: SHARING_LR,
                seed,
                ..Default::default()
            };
            train(&init, &data, &cfg).unwrap().0
        };
        let wd = run(Regularizer::WeightDecay, SHARING_WD);
        let l1 = run(Regularizer::L1, SHARING_L1);
        let none = run(Regularizer::None, 0.0);
        let counts = [&wd, &l1, &none].map(|n| active_neurons(n, ACTIVE_EPS).len());
        let (sw, sl) = (shared_fraction(&wd, ACTIVE_EPS), shared_fraction(&l1, ACTIVE_EPS));
        if counts[0] < counts[1] && counts[1] < counts[2] {
            ordered += 1;
        }
        if sw > sl {
            shared += 1;
        }
        rows.push(format!("seed {seed}: active {counts:?} shared {sw:.2}/{sl:.2}"));
    }
    let secs = t.elapsed().as_secs_f64();
    verdict(
        9,
        "neuron sharing ordering",
        ordered >= 4 && shared >= 4 && secs <= 1800.0,
        &format!(
            "ordering {ordered}/5, sharing {shared}/5; {}; {secs:.1}s",
            rows.join("; ")
        ),
    );
}

#[test]
fn c10_trainer_gradients() {
    let mut rng = CounterRng::stream(10, "acceptance.c10", 0);
    let regs = [Regularizer::WeightDecay, Regularizer::L1, Regularizer::None];
    let mut accepted = 0;
    let mut skipped = 0;
    let mut worst = 0.0f64;
    let h = 1e-6;
    while accepted < 100 {
        let seed = rng.next_u64();
        let reg = regs[rng.below(3)];
        let lambda = 0.01 + rng.uniform();
        let k = 1 + rng.below(8);
        let (data, _) = generate_teacher_data(&TeacherSpec {
            n: 5 + rng.below(20),
            ..TeacherSpec::new(seed)
        })
        .unwrap();
        let net = random_net(&mut rng, k, 2, 3, Activation::Relu);
        let theta = params(&net);
        let near_kink = net.neurons.iter().any(|n| {
            (0..data.len()).any(|i| (n.w[0] * data.x.get(0, i) + n.w[1] * data.x.get(1, i) + n.w[2]).abs() < 1e-4)
        }) || (reg == Regularizer::L1 && theta.iter().any(|x| x.abs() < 1e-4));
        if near_kink {
            skipped += 1;
            continue;
        }
        let (_, g) = objective_and_gradient(&net, &data, reg, lambda).unwrap();
        let mut probe = net.clone();
        for i in 0..theta.len() {
            let mut t = theta.clone();
            t[i] += h;
            set_params(&mut probe, &t);
            let fp = training_objective(&probe, &data, reg, lambda).unwrap();
            t[i] -= 2.0 * h;
            set_params(&mut probe, &t);
            let fm = training_objective(&probe, &data, reg, lambda).unwrap();
            let fd = (fp - fm) / (2.0 * h);
            worst = worst.max((fd - g[i]).abs() / g[i].abs().max(1e-3));
        }
        accepted += 1;
    }
    verdict(
        10,
        "trainer gradient check",
        worst <= 1e-5,
        &format!("100 configurations ({skipped} near-kink draws skipped), worst relative error {worst:.2e}"),
    );
}

#[test]
fn c11_mlp_last_layer_compression() {
    let t = Instant::now();
    let data = synthetic_classification(2000, 20, 10, 0).unwrap();
    let cfg = MlpConfig {
        lambda: 1e-3,
        ..Default::default()
    };
    let (net, _) = train_mlp(&data, &cfg).unwrap();
    let chain = net.to_chain().unwrap();
    let snaps = chain.snapshots(&data.x).unwrap();
    let (_, rep) = compress_network(&snaps, &[None, Some(CompressConfig::new(1e-7))], &data).unwrap();
    let layer = &rep.layers[0].report;
    let loss_change = (rep.loss_after - rep.loss_before).abs() / rep.loss_before;
    let sum_sq_ok = layer.objective_sum_sq_after <= layer.objective_sum_sq_before * (1.0 + 1e-6);
    let width_ok = layer.width_after <= layer.r_phi * layer.r_psi + 5;
    let secs = t.elapsed().as_secs_f64();
    verdict(
        11,
        "MLP last-layer compression",
        width_ok && loss_change <= 0.01 && sum_sq_ok && rep.output_residual <= 1e-3 && secs <= 900.0,
        &format!(
            "width {} -> {} (bound {} + 5), loss change {loss_change:.2e}, sum sq {:.4} -> {:.4}, residual {:.2e}, {secs:.1}s",
            layer.width_before,
            layer.width_after,
            layer.r_phi * layer.r_psi,
            layer.objective_sum_sq_before,
            layer.objective_sum_sq_after,
            rep.output_residual
        ),
    );
}

fn vvnet(args: &[&str]) {
    let status = Command::new(env!("CARGO_BIN_EXE_vvnet")).args(args).status().unwrap();
    assert!(status.success(), "vvnet {args:?} exited with {status}");
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(p) = stack.pop() {
        for e in std::fs::read_dir(&p).unwrap() {
            let path = e.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.push((rel, std::fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}

/// Every seeded command, run into `root`.
fn cli_pipeline(root: &Path) {
    let p = |s: &str| root.join(s).to_string_lossy().into_owned();
    let inst = p("inst");
    vvnet(&[
        "oracle",
        "--D",
        "2",
        "--N",
        "3",
        "--K",
        "8",
        "--seed",
        "5",
        "--rank-phi",
        "3",
        "--rank-psi",
        "2",
        "--out",
        &inst,
    ]);
    let big = p("big");
    vvnet(&[
        "oracle",
        "--D",
        "2",
        "--N",
        "3",
        "--K",
        "10",
        "--seed",
        "6",
        "--rank-phi",
        "2",
        "--rank-psi",
        "2",
        "--out",
        &big,
    ]);
    let (phi, psi) = (format!("{big}/instance:Phi"), format!("{big}/instance:Psi"));
    vvnet(&[
        "solve",
        "--phi",
        &phi,
        "--psi",
        &psi,
        "--lambda",
        "0.01",
        "--out",
        &p("reg"),
    ]);
    vvnet(&[
        "solve",
        "--phi",
        &phi,
        "--psi",
        &psi,
        "--constrained",
        "--out",
        &p("con"),
    ]);
    let v = format!("{}/solution:V", p("con"));
    vvnet(&["reduce", "--phi", &phi, "--psi", &psi, "--v", &v, "--out", &p("red")]);
    vvnet(&[
        "experiment",
        "lasso-hist",
        "--D",
        "3",
        "--N",
        "6",
        "--K",
        "30",
        "--seed",
        "7",
        "--rank-phi",
        "4",
        "--rank-psi",
        "3",
        "--trials",
        "6",
        "--threads",
        "2",
        "--out",
        &p("lasso"),
    ]);
    vvnet(&[
        "experiment",
        "exhaustive-hist",
        "--D",
        "2",
        "--N",
        "3",
        "--K",
        "7",
        "--seed",
        "8",
        "--trials",
        "5",
        "--out",
        &p("exh"),
    ]);
    for reg in ["wd", "l1", "none"] {
        vvnet(&[
            "train",
            "--reg",
            reg,
            "--lambda",
            "0.01",
            "--iters",
            "1500",
            "--seed",
            "9",
            "--out",
            &p(&format!("train_{reg}")),
        ]);
    }
    let mlp = p("mlp");
    vvnet(&[
        "train-mlp",
        "--samples",
        "200",
        "--iters",
        "40",
        "--seed",
        "10",
        "--out",
        &mlp,
    ]);
    vvnet(&[
        "compress",
        "--model",
        &format!("{mlp}/model"),
        "--data",
        &format!("{mlp}/data"),
        "--lambda",
        "1e-4",
        "--layers",
        "2",
        "--out",
        &p("comp"),
    ]);
}

#[test]
fn c12_cli_determinism() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    cli_pipeline(a.path());
    cli_pipeline(b.path());
    let (fa, fb) = (files(a.path()), files(b.path()));
    let names: Vec<&str> = fa.iter().map(|f| f.0.as_str()).collect();
    let differing: Vec<&str> = fa
        .iter()
        .zip(&fb)
        .filter(|(x, y)| x != y)
        .map(|(x, _)| x.0.as_str())
        .collect();
    verdict(
        12,
        "bitwise-identical CLI reruns",
        fa.len() == fb.len() && !fa.is_empty() && differing.is_empty(),
        &format!("{} files compared, differing: {differing:?}", names.len()),
    );
}
