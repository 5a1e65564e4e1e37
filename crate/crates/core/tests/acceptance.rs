//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary (`harness = false`). It exits 0 after reporting
//! unless `MODSCALE_ACCEPTANCE_STRICT=1`, in which case any failure exits 1.
//! `MODSCALE_ACCEPTANCE=1,5,10` restricts the run to the listed criteria.

use std::time::{Duration, Instant};

use rand::Rng;
use serde_json::json;

use modscale::harness::{
    binary_search_sample_complexity, run_experiment, similarity_score, simulate_curve, theory_curve,
    CurveConfig, CurveModel, CurveRow, ExperimentConfig, ExperimentRecord, ModularForm, SearchConfig,
    SimulationSettings,
};
use modscale::module_init::{
    find_module_projection, init_all_modules, kernel_loss, kernel_loss_grad, InitConfig, KernelSpec,
    KernelTemplate, ProjectionVars,
};
use modscale::nn::{
    loss_and_grad, CombineKind, LossKind, ModularSpec, Network, NetworkSpec, ProjectionKind,
};
use modscale::numerics::{dot, norm2, pinv, sample_gaussian_matrix, sample_unit_sphere, Matrix, RngStream};
use modscale::tasks::{gen_sine_task, SineVariant};
use modscale::theory::{
    f_np_closed, f_np_monte_carlo, invert_sample_complexity, monolithic_losses, FEvaluator, LossCurve,
    McConfig, MonolithicConfig, SampleComplexity, SpectrumSpec,
};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

type Criterion = (usize, &'static str, Duration, fn() -> Verdict);

const C: f64 = 1.15;
const OMEGA: f64 = 1.57;

fn curve_config(dim: u32, n: Vec<u64>, p: Vec<u64>, model: CurveModel, form: ModularForm) -> CurveConfig {
    CurveConfig {
        spectrum: SpectrumSpec::new(C, OMEGA, dim).unwrap(),
        d: 1,
        n,
        p,
        model,
        form,
        mc: McConfig::default(),
        simulation: SimulationSettings {
            features: 2000,
            trials: 200,
            n_test: 256,
        },
    }
}

fn z(sim: f64, se: f64, th: f64) -> f64 {
    if se > 0.0 {
        (sim - th) / se
    } else if sim == th {
        0.0
    } else {
        f64::INFINITY
    }
}

/// Compares simulated rows to theory rows; exact zeros are required for the
/// train loss wherever `p ≥ dn`.
fn compare(theory: &[CurveRow], sim: &[CurveRow], worst: &mut Vec<String>) -> bool {
    let mut ok = true;
    for (t, s) in theory.iter().zip(sim) {
        let interpolating = s.p >= (s.d * s.n) as f64;
        let train_ok = if interpolating {
            s.train <= 1e-8 && t.train <= 1e-8
        } else {
            z(s.train, s.train_se.unwrap(), t.train).abs() <= 3.0
        };
        let zt = z(s.test, s.test_se.unwrap(), t.test);
        let test_ok = zt.abs() <= 3.0;
        if !(train_ok && test_ok) {
            ok = false;
            worst.push(format!(
                "n={} p={} train {:.4}±{:.4} vs {:.4}, test {:.4}±{:.4} vs {:.4} (z={zt:.2})",
                s.n,
                s.p,
                s.train,
                s.train_se.unwrap(),
                t.train,
                s.test,
                s.test_se.unwrap(),
                t.test
            ));
        }
    }
    ok
}

fn criterion_1() -> Verdict {
    let cfg = curve_config(
        3,
        vec![20, 50, 100],
        vec![10, 49, 51, 200],
        CurveModel::Monolithic,
        ModularForm::Printed,
    );
    let theory = theory_curve(&cfg).unwrap();
    let sim = simulate_curve(&cfg, 0).unwrap();
    let mut bad = Vec::new();
    let ok = compare(&theory, &sim, &mut bad);
    let max_z = theory
        .iter()
        .zip(&sim)
        .map(|(t, s)| z(s.test, s.test_se.unwrap(), t.test).abs())
        .fold(0.0, f64::max);
    if ok {
        verdict(true, format!("12 grid points within 3 SE (max |z| {max_z:.2})"))
    } else {
        verdict(false, bad.join("; "))
    }
}

fn criterion_2() -> Verdict {
    let model = CurveModel::Modular { m: 5 };
    let printed = curve_config(1, vec![20, 100, 200], vec![40, 60], model, ModularForm::Printed);
    let split = CurveConfig {
        form: ModularForm::Split,
        ..printed.clone()
    };
    let sim = simulate_curve(&printed, 0).unwrap();
    let mut bad = Vec::new();
    let printed_ok = compare(&theory_curve(&printed).unwrap(), &sim, &mut bad);
    let split_ok = compare(&theory_curve(&split).unwrap(), &sim, &mut Vec::new());

    // m-independence in the dn > p regime.
    let at = |m: u64| {
        let c = curve_config(1, vec![100], vec![40], CurveModel::Modular { m }, ModularForm::Printed);
        simulate_curve(&c, 1).unwrap().remove(0)
    };
    let (a, b) = (at(3), at(9));
    let combined = (a.test_se.unwrap().powi(2) + b.test_se.unwrap().powi(2)).sqrt();
    let gap = (a.test - b.test).abs() / combined;
    let m_ok = gap < 3.0;
    let detail = format!(
        "printed formula {}{}; m=3 vs m=9 test {:.4} vs {:.4} ({gap:.2} combined SE); split-form diagnostic: {}",
        if printed_ok { "within 3 SE" } else { "off: " },
        bad.join("; "),
        a.test,
        b.test,
        if split_ok { "within 3 SE" } else { "off" }
    );
    verdict(printed_ok && m_ok, detail)
}

fn criterion_3() -> Verdict {
    let mut worst: f64 = 0.0;
    let mut lines = Vec::new();
    for n in [10usize, 50] {
        for gap in [2usize, 3, 10] {
            for p in [n + gap, n.wrapping_sub(gap)] {
                if p == 0 || p > n + gap {
                    continue;
                }
                let rng = RngStream::new(3, 0).keyed(&[n as u64, p as u64]);
                let mc = f_np_monte_carlo(n, p, 10_000, &rng).unwrap();
                let closed = f_np_closed(n as f64, p as f64).unwrap();
                let rel = (mc - closed).abs() / closed;
                worst = worst.max(rel);
                if rel > 0.1 {
                    lines.push(format!("n={n} p={p}: {mc:.4} vs {closed:.4}"));
                }
            }
        }
    }
    verdict(
        worst <= 0.1,
        format!("worst relative error {:.2}% {}", 100.0 * worst, lines.join("; ")),
    )
}

fn criterion_4() -> Verdict {
    let f = FEvaluator::new(McConfig::default());
    let spectrum = SpectrumSpec::new(C, OMEGA, 3).unwrap();
    let n = 50;
    let (mut best_p, mut best) = (0, f64::NEG_INFINITY);
    for p in 1..=150 {
        let l = monolithic_losses(&MonolithicConfig { spectrum, n, p, d: 1 }, &f)
            .unwrap()
            .test;
        if l > best {
            best = l;
            best_p = p;
        }
    }
    verdict(
        best_p.abs_diff(n) <= 1,
        format!("test-loss peak at p={best_p} (loss {best:.3}) for dn=50"),
    )
}

fn criterion_5() -> Verdict {
    let mut rng = RngStream::new(5, 0);
    let mut worst: f64 = 0.0;
    for trial in 0..10 {
        let dim = 4 + trial % 3;
        let modules = 2 + trial % 3;
        // Cosine features of a width-1 projection make K numerically
        // singular; width >= 2 at frequency scale 2 keeps it well conditioned.
        let width = 2 + trial % 2;
        let features = 24;
        let outputs = 1 + trial % 2;
        let n = 10 + trial;
        let x = sample_gaussian_matrix(&mut rng, n, dim, 0.0, 1.0);
        let y = sample_gaussian_matrix(&mut rng, n, outputs, 0.0, 1.0);
        // Random Fourier features of each module's projection X·Û.
        let mut phis = Vec::new();
        for _ in 0..modules {
            let u = sample_gaussian_matrix(&mut rng, dim, width, 0.0, 1.0 / (dim as f64).sqrt());
            let w = sample_gaussian_matrix(&mut rng, width, features, 0.0, 2.0);
            let b: Vec<f64> = (0..features).map(|_| rng.random_range(0.0..std::f64::consts::TAU)).collect();
            let z = x.matmul(&u).unwrap().matmul(&w).unwrap();
            let scale = (2.0 / features as f64).sqrt();
            let phi = Matrix::from_vec(
                n,
                features,
                (0..n * features)
                    .map(|i| scale * (z.data()[i] + b[i % features]).cos())
                    .collect(),
            )
            .unwrap();
            phis.push(phi);
        }
        assert!(features * modules > outputs * n);
        let mut stacked = Matrix::zeros(n, features * modules);
        let mut k = Matrix::zeros(n, n);
        for (j, phi) in phis.iter().enumerate() {
            for i in 0..n {
                stacked.row_mut(i)[j * features..(j + 1) * features].copy_from_slice(phi.row(i));
            }
            k.add_t_matmul(1.0, &phi.transpose(), &phi.transpose()).unwrap();
        }
        let pinv = pinv(&stacked, 1e-12).unwrap();
        let mut oracle = 0.0;
        let mut loss = 0.0;
        for a in 0..outputs {
            let ya = y.col(a);
            let theta = pinv.matvec(&ya).unwrap();
            oracle += dot(&theta, &theta);
            loss += kernel_loss(&k, &ya, 0.0).unwrap();
        }
        worst = worst.max((loss - oracle).abs() / oracle.max(1.0));
    }
    verdict(
        worst <= 1e-8,
        format!("10 configurations, worst relative gap {worst:.2e}"),
    )
}

fn nn_gradient_error(spec: &NetworkSpec, kind: LossKind, seed: u64) -> f64 {
    let mut rng = RngStream::new(seed, 66);
    let mut net = Network::init(spec, &mut rng).unwrap();
    let p0: Vec<f64> = net.params().iter().map(|v| v + rng.random_range(-0.3..0.3)).collect();
    net.set_params(&p0).unwrap();
    let n = 6;
    let c = net.output_dim();
    let x = sample_gaussian_matrix(&mut rng, n, net.input_dim(), 0.0, 1.0);
    let y = match kind {
        LossKind::Mse => sample_gaussian_matrix(&mut rng, n, c, 0.0, 1.0),
        LossKind::BlockSoftmax => {
            let mut y = Matrix::zeros(n, c);
            for i in 0..n {
                for blk in 0..c / 10 {
                    y.set(i, blk * 10 + rng.random_range(0..10), 1.0);
                }
            }
            y
        }
    };
    let (_, g) = loss_and_grad(&net, &x, &y, kind, 0).unwrap();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for i in 0..p0.len() {
        let mut p = p0.clone();
        p[i] += h;
        net.set_params(&p).unwrap();
        let up = loss_and_grad(&net, &x, &y, kind, 0).unwrap().0;
        p[i] -= 2.0 * h;
        net.set_params(&p).unwrap();
        let down = loss_and_grad(&net, &x, &y, kind, 0).unwrap().0;
        let fd = (up - down) / (2.0 * h);
        worst = worst.max((fd - g[i]).abs() / fd.abs().max(g[i].abs()).max(1e-3));
    }
    worst
}

fn kernel_gradient_error(spec: &KernelSpec, x: &Matrix, y: &Matrix) -> f64 {
    // Kernels of one scalar per point (distance, width-1 RBF) have
    // numerically singular Gram matrices, so they are checked at a larger
    // jitter to keep central differences above roundoff.
    let relative = match &spec.vars {
        ProjectionVars::Distance { .. } => 1e-3,
        ProjectionVars::RbfProjection { u } if u.cols() == 1 => 1e-3,
        _ => 1e-6,
    };
    let jitter = relative * spec.max_value();
    let (_, g) = kernel_loss_grad(spec, x, y, jitter).unwrap();
    let g = g.flatten();
    let base = spec.vars.flatten();
    let h = 1e-5 * base.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let mut worst: f64 = 0.0;
    for i in 0..base.len() {
        let eval = |delta: f64| {
            let mut s = spec.clone();
            let mut off = 0;
            s.vars.visit_mut(&mut |p| {
                for v in p.iter_mut() {
                    if off == i {
                        *v += delta;
                    }
                    off += 1;
                }
            });
            kernel_loss_grad(&s, x, y, jitter).unwrap().0
        };
        let fd = (eval(h) - eval(-h)) / (2.0 * h);
        worst = worst.max((fd - g[i]).abs() / fd.abs().max(g[i].abs()).max(1e-6));
    }
    worst
}

fn criterion_6() -> Verdict {
    let modular = |projection, combine, shared, batchnorm| {
        NetworkSpec::Modular(ModularSpec {
            input_dim: 4,
            modules: 3,
            projection,
            body_hidden: vec![5],
            body_out: if matches!(combine, CombineKind::Sum) { 1 } else { 3 },
            batchnorm,
            shared,
            combine,
            train_projections: true,
        })
    };
    let mut nets = vec![
        (NetworkSpec::Mlp { sizes: vec![3, 6, 5, 2], batchnorm: false }, LossKind::Mse),
        (NetworkSpec::Mlp { sizes: vec![3, 6, 5, 2], batchnorm: true }, LossKind::Mse),
        (NetworkSpec::Mlp { sizes: vec![4, 8, 20], batchnorm: true }, LossKind::BlockSoftmax),
    ];
    for shared in [false, true] {
        for bn in [false, true] {
            nets.push((modular(ProjectionKind::Linear { b: 1 }, CombineKind::Sum, shared, bn), LossKind::Mse));
            nets.push((modular(ProjectionKind::Distance, CombineKind::Sum, shared, bn), LossKind::Mse));
            nets.push((
                modular(ProjectionKind::Linear { b: 2 }, CombineKind::Concat { outputs: 20 }, shared, bn),
                LossKind::BlockSoftmax,
            ));
        }
    }
    let mut nn_worst: f64 = 0.0;
    for (spec, kind) in &nets {
        for seed in 0..3 {
            nn_worst = nn_worst.max(nn_gradient_error(spec, *kind, seed));
        }
    }

    let mut kernel_worst: f64 = 0.0;
    let mut kernels = 0;
    for seed in 0..3u64 {
        let mut rng = RngStream::new(seed, 67);
        let dim = 5;
        let x = sample_gaussian_matrix(&mut rng, 16, dim, 0.0, 1.0);
        for outputs in [1, 3] {
            let y = sample_gaussian_matrix(&mut rng, 16, outputs, 0.0, 1.0);
            for (sigma, template) in [
                (1.0, KernelTemplate::SineLinear { sigma: 1.0 }),
                (0.7, KernelTemplate::RbfProjection { sigma: 0.7, width: 1 }),
                (0.7, KernelTemplate::RbfProjection { sigma: 0.7, width: 3 }),
                (0.3, KernelTemplate::Distance { sigma: 0.3 }),
            ] {
                let spec = KernelSpec {
                    sigma,
                    vars: template.random_vars(&mut rng, dim).unwrap(),
                };
                kernel_worst = kernel_worst.max(kernel_gradient_error(&spec, &x, &y));
                kernels += 1;
            }
        }
    }
    verdict(
        nn_worst < 1e-4 && kernel_worst < 1e-4,
        format!(
            "network suite: {} variants × 3 seeds, worst {nn_worst:.1e}; kernel suite: {kernels} cases, worst {kernel_worst:.1e}",
            nets.len()
        ),
    )
}

fn criterion_7() -> Verdict {
    // Planted single module.
    let mut hits = 0;
    for seed in 0..5 {
        let mut rng = RngStream::new(seed, 0);
        let task = gen_sine_task(&mut rng, 1, 5, 3).unwrap();
        let data = task.sample(&mut rng, 1000, SineVariant::Linear).unwrap();
        let cfg = InitConfig {
            iters: 2000,
            batch_size: 128,
            lr: 0.01,
            jitter: 1e-6,
            one_output_per_iter: true,
            log_every: 100,
        };
        let run = find_module_projection(
            &data.x,
            &Matrix::column(&data.y),
            &KernelTemplate::SineLinear { sigma: 0.3 },
            &cfg,
            &mut RngStream::new(seed, 1),
        )
        .unwrap();
        let ProjectionVars::SineLinear { u, .. } = &run.vars else {
            unreachable!()
        };
        if dot(u, &task.u[0]).abs() / norm2(u) > 0.9 {
            hits += 1;
        }
    }

    // k = m = 5 with 25 modules: learned versus random directions.
    let mut gaps = Vec::new();
    for seed in 0..SIMILARITY_SEEDS {
        let mut rng = RngStream::new(seed, 0);
        let task = gen_sine_task(&mut rng, 5, 5, 3).unwrap();
        let data = task.sample(&mut rng, 1000, SineVariant::Linear).unwrap();
        let cfg = InitConfig {
            iters: SIMILARITY_ITERS,
            batch_size: 128,
            lr: 0.01,
            jitter: 1e-6,
            one_output_per_iter: true,
            log_every: 1000,
        };
        let runs = init_all_modules(
            &data.x,
            &Matrix::column(&data.y),
            25,
            &KernelTemplate::SineLinear { sigma: 0.3 },
            &cfg,
            &RngStream::new(seed, 5),
        )
        .unwrap();
        let learned: Vec<Vec<f64>> = runs
            .iter()
            .map(|r| match &r.vars {
                ProjectionVars::SineLinear { u, .. } => u.clone(),
                _ => unreachable!(),
            })
            .collect();
        let mut r = RngStream::new(seed, 9);
        let random: Vec<Vec<f64>> = (0..25).map(|_| sample_unit_sphere(&mut r, 5).unwrap()).collect();
        let kernel = similarity_score(&learned, &task.u).unwrap();
        let baseline = similarity_score(&random, &task.u).unwrap();
        gaps.push((kernel, baseline));
    }
    let kernel = gaps.iter().map(|g| g.0).sum::<f64>() / gaps.len() as f64;
    let baseline = gaps.iter().map(|g| g.1).sum::<f64>() / gaps.len() as f64;
    verdict(
        hits >= 4 && kernel - baseline >= 0.15,
        format!(
            "planted recovery {hits}/5; K=25 similarity kernel {kernel:.3} vs random {baseline:.3} (gap {:.3}, {} seeds)",
            kernel - baseline,
            gaps.len()
        ),
    )
}

const SIMILARITY_SEEDS: u64 = 5;
const SIMILARITY_ITERS: usize = 4000;

fn mean_by(records: &[ExperimentRecord], arch: &str, init: &str, f: impl Fn(&ExperimentRecord) -> f64) -> Vec<f64> {
    records
        .iter()
        .filter(|r| r.architecture == arch && r.init == init)
        .map(f)
        .collect()
}

fn avg(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn criterion_8() -> Verdict {
    let cfg: ExperimentConfig = serde_json::from_value(nonlinear_config()).unwrap();
    let recs = run_experiment(&cfg, None).unwrap();
    let test = |a: &str, i: &str| mean_by(&recs, a, i, |r| r.test_loss.unwrap_or(f64::NAN));
    let ours = test("modular", "kernel");
    let modular = test("modular", "random");
    let mono = test("monolithic", "random");
    let wins = ours.iter().zip(&modular).filter(|(a, b)| a < b).count();
    let (o, m, b) = (avg(&ours), avg(&modular), avg(&mono));
    verdict(
        o < m && m < b && wins >= 4,
        format!("mean test loss kernel-init {o:.3} < random-init modular {m:.3} < monolithic {b:.3}; per-seed wins {wins}/5"),
    )
}

fn nonlinear_config() -> serde_json::Value {
    // The distance kernel's Gram matrix is numerically singular, so a
    // ridge-sized jitter keeps plain gradient steps on the centers bounded.
    json!({
        "task": {"kind": "sine", "dims": [5], "variant": "distance", "n_train": 1000, "n_test": 1000},
        "architecture": [
            {"name": "monolithic", "kind": "monolithic", "width": 128, "layers": 4},
            {"name": "modular", "kind": "modular", "width": 32, "layers": 4, "modules_per_dim": 2}
        ],
        "init": {"methods": ["random", "kernel"], "sigma": 1.0, "iters": 1000, "batch_size": 128, "lr": 0.01,
                 "jitter": 1.0},
        "train": {"lr": 0.003, "iterations": 5000, "batch_size": 128},
        "seeds": [0, 1, 2, 3, 4]
    })
}

fn compositional_config(ood: Option<f64>) -> serde_json::Value {
    json!({
        "task": {"kind": "compositional", "dims": [2], "n_train": 20000, "n_test": 2000,
                 "ood_split": ood,
                 "source": {"kind": "toy", "train_images": 5000, "test_images": 1000,
                            "config": {"side": 8, "prototype_seed": 0, "noise": 255.0, "brightness": 24.0}}},
        "architecture": [
            {"name": "modular", "kind": "modular", "width": 32, "layers": 2, "modules_per_dim": 4,
             "shared": true, "projection_width": 16, "body_out": 16}
        ],
        "init": {"methods": ["random", "kernel"], "sigma": 10.0, "iters": 1000, "batch_size": 128, "lr": 0.1,
                 "jitter": 1.0},
        "train": {"lr": 0.001, "iterations": 1000, "batch_size": 128},
        "seeds": [0, 1, 2, 3, 4]
    })
}

fn criterion_9() -> Verdict {
    let mut parts = Vec::new();
    let mut ok = true;
    for (label, ood) in [("iid", None), ("ood", Some(0.2))] {
        let cfg: ExperimentConfig = serde_json::from_value(compositional_config(ood)).unwrap();
        let recs = run_experiment(&cfg, None).unwrap();
        let acc = |i: &str| avg(&mean_by(&recs, "modular", i, |r| r.test_accuracy.unwrap_or(f64::NAN)));
        let (kernel, random) = (acc("kernel"), acc("random"));
        let pass = if ood.is_none() {
            kernel - random >= 0.02 && random > 0.1 && kernel > 0.1
        } else {
            kernel > random && random > 0.1
        };
        ok &= pass;
        parts.push(format!(
            "{label}: kernel-init {:.1}% vs random-init {:.1}%",
            100.0 * kernel,
            100.0 * random
        ));
    }
    verdict(ok, parts.join("; "))
}

fn criterion_10() -> Verdict {
    let cfg = SearchConfig::default();
    let res = binary_search_sample_complexity(|n| Ok(100.0 / (n as f64).sqrt()), 1.0, &cfg).unwrap();
    let target = 1e4f64.log2();
    let oracle_ok = !res.exceeded && (res.c - target).abs() <= cfg.stop_gap;
    let fail = binary_search_sample_complexity(|_| Ok(f64::INFINITY), 1.0, &cfg).unwrap();
    let fail_ok = fail.exceeded && fail.c == 22.0;
    verdict(
        oracle_ok && fail_ok,
        format!(
            "100/√n oracle: c={} (target {target:.3}, bracket [{}, {}]); always-failing: exceeded={} at c={}",
            res.c,
            res.l,
            res.r.unwrap_or(f64::INFINITY),
            fail.exceeded,
            fail.c
        ),
    )
}

const INVERSION_P: f64 = 85.0;

fn criterion_11() -> Verdict {
    let f = FEvaluator::new(McConfig::default());
    let mut points = Vec::new();
    for m in 2..=6u32 {
        let curve = LossCurve::Monolithic {
            spectrum: SpectrumSpec::new(C, OMEGA, m).unwrap(),
            p: INVERSION_P,
            d: 1,
        };
        match invert_sample_complexity(&curve, 1.2, &f).unwrap() {
            SampleComplexity::Reached { n } => points.push((m as f64, (n as f64).ln())),
            SampleComplexity::Unreachable { floor } => {
                return verdict(false, format!("m={m}: eps below the loss floor {floor:.3}"))
            }
        }
    }
    let increasing = points.windows(2).all(|w| w[1].1 > w[0].1);
    let k = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / k;
    let my = points.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    let r2 = sxy * sxy / (sxx * syy);
    let ns: Vec<String> = points.iter().map(|p| format!("{:.0}", p.1.exp())).collect();
    verdict(
        increasing && r2 > 0.9,
        format!("n(m=2..6) = [{}], log-linear R² = {r2:.3}", ns.join(", ")),
    )
}

fn main() {
    let only: Option<Vec<usize>> = std::env::var("MODSCALE_ACCEPTANCE")
        .ok()
        .map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let strict = std::env::var("MODSCALE_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    let secs = Duration::from_secs;
    let criteria: [Criterion; 11] = [
        (1, "monolithic simulation matches closed form", secs(300), criterion_1),
        (2, "modular simulation matches closed form, m-independent", secs(300), criterion_2),
        (3, "F(n,p) Monte Carlo matches closed form", secs(60), criterion_3),
        (4, "double-descent peak at p = dn", secs(60), criterion_4),
        (5, "kernel objective equals min-norm feature oracle", secs(60), criterion_5),
        (6, "network and kernel gradient suites", secs(120), criterion_6),
        (7, "planted module recovery and similarity gain", secs(900), criterion_7),
        (8, "method ordering on the nonlinear sine variant", secs(1800), criterion_8),
        (9, "compositional classification at desk scale", secs(2700), criterion_9),
        (10, "sample-complexity search oracles", secs(10), criterion_10),
        (11, "sample complexity grows exponentially in m", secs(10), criterion_11),
    ];
    let mut failed = 0;
    for (id, name, cap, run) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let start = Instant::now();
        let v = run();
        let took = start.elapsed();
        let pass = v.pass && took <= cap;
        if !pass {
            failed += 1;
        }
        let over = if took > cap {
            format!(" [over the {}s runtime cap]", cap.as_secs())
        } else {
            String::new()
        };
        println!(
            "criterion {id:>2} {} {name}: {} ({:.1}s){over}",
            if pass { "PASS" } else { "FAIL" },
            v.detail,
            took.as_secs_f64()
        );
    }
    println!("acceptance: {failed} failing");
    if strict && failed > 0 {
        std::process::exit(1);
    }
}
