//! Grid execution: task dims × architectures × init methods, per seed or
//! aggregated over seeds inside a sample-complexity search.
//!
//! Every random draw comes from a stream keyed by what it depends on, so a
//! grid point is reproducible in isolation and init methods are compared on
//! identical data, network draws and minibatch orders:
//!
//! | draw              | stream                         |
//! |-------------------|--------------------------------|
//! | task / images     | `(seed, 1)` keyed by `[k]`     |
//! | training data     | `(seed, 2)` keyed by `[k, n]`  |
//! | test data         | `(seed, 3)` keyed by `[k]`     |
//! | network init      | `(seed, 4)` keyed by `[k]`     |
//! | kernel init       | `(seed, 5)` keyed by `[k, n]`  |
//! | minibatches       | `(seed, 6)` keyed by `[k, n]`  |

use std::collections::{HashMap, HashSet};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use rayon::prelude::*;

use super::config::{ArchKind, ArchitectureConfig, ExperimentConfig, ImageSource, InitMethod, TaskConfig};
use super::records::{append_jsonl, read_jsonl, ExperimentRecord};
use super::search::binary_search_sample_complexity;
use super::similarity::similarity_score;
use crate::error::{Error, Result};
use crate::module_init::{init_all_modules, to_projection, InitConfig, KernelTemplate};
use crate::nn::{
    evaluate, loss_value_and_grad, train, CombineKind, LossKind, Metric, ModularSpec, Network,
    NetworkSpec, Projection, ProjectionKind, TrainConfig, TrainStatus,
};
use crate::numerics::{Matrix, RngStream};
use crate::tasks::{
    gen_compositional, gen_sine_task, load_cifar10_files, toy_images, CompositionalOptions, ImageSet,
    SineTask, SineVariant, NUM_CLASSES,
};

/// One cell of the grid.
#[derive(Clone, Debug, PartialEq)]
pub struct GridPoint {
    pub k: usize,
    pub architecture: ArchitectureConfig,
    pub init: InitMethod,
    /// A single seed, or every seed when searching.
    pub seeds: Vec<u64>,
}

impl GridPoint {
    pub fn key(&self) -> String {
        let seeds: Vec<String> = self.seeds.iter().map(u64::to_string).collect();
        format!(
            "k={}/arch={}/init={}/seeds={}",
            self.k,
            self.architecture.label(),
            self.init.name(),
            seeds.join(",")
        )
    }
}

/// Grid points in a fixed order. Monolithic networks have no projections,
/// so they run once with random init regardless of the listed methods.
pub fn grid(cfg: &ExperimentConfig) -> Vec<GridPoint> {
    let seed_groups: Vec<Vec<u64>> = if cfg.search.is_some() {
        vec![cfg.seeds.clone()]
    } else {
        cfg.seeds.iter().map(|&s| vec![s]).collect()
    };
    let mut out = Vec::new();
    for &k in cfg.task.dims() {
        for arch in &cfg.architecture {
            let methods: Vec<InitMethod> = match arch.kind {
                ArchKind::Monolithic => vec![InitMethod::Random],
                ArchKind::Modular => cfg.init.methods.clone(),
            };
            for init in methods {
                for seeds in &seed_groups {
                    if seeds.is_empty() {
                        continue;
                    }
                    out.push(GridPoint {
                        k,
                        architecture: arch.clone(),
                        init,
                        seeds: seeds.clone(),
                    });
                }
            }
        }
    }
    out
}

/// Metrics of one trained network.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RunOutcome {
    pub train_loss: f64,
    pub test_loss: f64,
    pub test_accuracy: Option<f64>,
    /// Projection directions against the planted ones, sine tasks only.
    pub similarity: Option<f64>,
    /// Same score before training.
    pub init_similarity: Option<f64>,
    pub diverged: bool,
}

struct Split {
    x_train: Matrix,
    y_train: Matrix,
    x_test: Matrix,
    y_test: Matrix,
    sine: Option<SineTask>,
}

fn stream(seed: u64, purpose: u64, key: &[u64]) -> RngStream {
    RngStream::new(seed, purpose).keyed(key)
}

/// Source images for the compositional task: toy images drawn from
/// `(seed, 1)` keyed by `[k]`, or the CIFAR-10 binary batches in a directory.
pub fn load_image_sources(source: &ImageSource, seed: u64, k: usize) -> Result<(ImageSet, ImageSet)> {
    match source {
        ImageSource::Toy {
            train_images,
            test_images,
            config,
        } => {
            let mut rng = stream(seed, 1, &[k as u64]);
            let train = toy_images(&mut rng, *train_images, config)?;
            let test = toy_images(&mut rng, *test_images, config)?;
            Ok((train, test))
        }
        ImageSource::Cifar { dir } => {
            let train: Vec<PathBuf> = (1..=5).map(|i| dir.join(format!("data_batch_{i}.bin"))).collect();
            let train = load_cifar10_files(&train)?;
            let test = load_cifar10_files(&[dir.join("test_batch.bin")])?;
            Ok((train, test))
        }
    }
}

fn make_split(cfg: &ExperimentConfig, k: usize, n: u64, seed: u64) -> Result<Split> {
    let kk = k as u64;
    match &cfg.task {
        TaskConfig::Sine {
            m,
            tau,
            variant,
            n_test,
            ..
        } => {
            let m = m.unwrap_or(k);
            let task = gen_sine_task(&mut stream(seed, 1, &[kk]), k, m, *tau)?;
            let train = task.sample(&mut stream(seed, 2, &[kk, n]), n as usize, *variant)?;
            let test = task.sample(&mut stream(seed, 3, &[kk]), *n_test, *variant)?;
            Ok(Split {
                x_train: train.x,
                y_train: Matrix::column(&train.y),
                x_test: test.x,
                y_test: Matrix::column(&test.y),
                sine: Some(task),
            })
        }
        TaskConfig::Compositional {
            source,
            n_test,
            ood_split,
            noise_sigma,
            normalize,
            ..
        } => {
            let (train_images, test_images) = load_image_sources(source, seed, k)?;
            let opts = CompositionalOptions {
                ood_split: *ood_split,
                noise_sigma: *noise_sigma,
                normalize: *normalize,
                partition_seed: seed,
            };
            // Two draws so the test set does not depend on n.
            let train = gen_compositional(
                &mut stream(seed, 2, &[kk, n]),
                &train_images,
                &test_images,
                k,
                n as usize,
                1,
                &opts,
            )?
            .train;
            let test = gen_compositional(
                &mut stream(seed, 3, &[kk]),
                &train_images,
                &test_images,
                k,
                1,
                *n_test,
                &opts,
            )?
            .test;
            Ok(Split {
                x_train: train.x,
                y_train: train.y,
                x_test: test.x,
                y_test: test.y,
                sine: None,
            })
        }
    }
}

fn network_spec(cfg: &ExperimentConfig, arch: &ArchitectureConfig, k: usize, input_dim: usize, outputs: usize) -> NetworkSpec {
    let hidden = vec![arch.width; arch.layers.saturating_sub(1)];
    match arch.kind {
        ArchKind::Monolithic => {
            let mut sizes = vec![input_dim];
            sizes.extend(&hidden);
            sizes.push(outputs);
            NetworkSpec::Mlp {
                sizes,
                batchnorm: arch.batchnorm,
            }
        }
        ArchKind::Modular => {
            let (projection, body_out, combine) = match &cfg.task {
                TaskConfig::Sine {
                    variant: SineVariant::Distance,
                    ..
                } => (ProjectionKind::Distance, 1, CombineKind::Sum),
                TaskConfig::Sine { .. } => (
                    ProjectionKind::Linear {
                        b: arch.projection_width,
                    },
                    1,
                    CombineKind::Sum,
                ),
                TaskConfig::Compositional { .. } => (
                    ProjectionKind::Linear {
                        b: arch.projection_width,
                    },
                    arch.body_out.unwrap_or(arch.width),
                    CombineKind::Concat { outputs },
                ),
            };
            NetworkSpec::Modular(ModularSpec {
                input_dim,
                modules: arch.modules_for(k),
                projection,
                body_hidden: hidden,
                body_out,
                batchnorm: arch.batchnorm,
                shared: arch.shared,
                combine,
                train_projections: true,
            })
        }
    }
}

fn kernel_template(cfg: &ExperimentConfig, arch: &ArchitectureConfig) -> KernelTemplate {
    let sigma = cfg.init.sigma;
    match &cfg.task {
        TaskConfig::Sine {
            variant: SineVariant::Distance,
            ..
        } => KernelTemplate::Distance { sigma },
        TaskConfig::Sine { .. } if arch.projection_width == 1 => KernelTemplate::SineLinear { sigma },
        _ => KernelTemplate::RbfProjection {
            sigma,
            width: arch.projection_width,
        },
    }
}

/// Directions read by each module: the first projection column, or the
/// distance center.
pub fn projection_directions(net: &Network) -> Vec<Vec<f64>> {
    match net {
        Network::Mlp(_) => Vec::new(),
        Network::Modular(m) => m
            .projections
            .iter()
            .map(|p| match p {
                Projection::Linear { u } => u.col(0),
                Projection::Distance { center } => center.clone(),
            })
            .collect(),
    }
}

/// Replaces the projections of a modular network with learned ones. A
/// single learned direction fills the first column of a wider projection.
pub fn seed_projections(net: &mut Network, learned: Vec<Projection>) -> Result<()> {
    let Network::Modular(m) = net else {
        return Err(Error::Precondition("only modular networks have projections".into()));
    };
    if learned.len() != m.projections.len() {
        return Err(Error::shape(m.projections.len(), learned.len()));
    }
    for (p, l) in m.projections.iter_mut().zip(learned) {
        *p = match (l, &*p) {
            (Projection::Linear { u: lu }, Projection::Linear { u })
                if lu.cols() < u.cols() && lu.rows() == u.rows() =>
            {
                let mut u = u.clone();
                for c in 0..lu.cols() {
                    for r in 0..u.rows() {
                        u.set(r, c, lu.get(r, c));
                    }
                }
                Projection::Linear { u }
            }
            (Projection::Linear { u: lu }, Projection::Linear { u }) if lu.shape() != u.shape() => {
                return Err(Error::shape(format!("{:?}", u.shape()), format!("{:?}", lu.shape())));
            }
            (Projection::Distance { center: lc }, Projection::Distance { center }) if lc.len() != center.len() => {
                return Err(Error::shape(center.len(), lc.len()));
            }
            (Projection::Linear { .. }, Projection::Distance { .. })
            | (Projection::Distance { .. }, Projection::Linear { .. }) => {
                return Err(Error::Precondition("projection kind does not match the network".into()));
            }
            (l, _) => l,
        };
    }
    Ok(())
}

/// Points module `j` at planted direction `j mod k`.
pub fn ground_truth_projections(net: &Network, dirs: &[Vec<f64>]) -> Result<Vec<Projection>> {
    let Network::Modular(m) = net else {
        return Err(Error::Precondition("only modular networks have projections".into()));
    };
    if dirs.is_empty() {
        return Err(Error::Precondition("no planted directions".into()));
    }
    Ok((0..m.projections.len())
        .map(|j| {
            let d = dirs[j % dirs.len()].clone();
            match m.projections[j] {
                Projection::Linear { .. } => Projection::Linear { u: Matrix::column(&d) },
                Projection::Distance { .. } => Projection::Distance { center: d },
            }
        })
        .collect())
}

fn apply_init(
    net: &mut Network,
    cfg: &ExperimentConfig,
    arch: &ArchitectureConfig,
    method: InitMethod,
    split: &Split,
    rng: RngStream,
) -> Result<()> {
    let modules = match net {
        Network::Mlp(_) => return Ok(()),
        Network::Modular(m) => m.projections.len(),
    };
    let learned = match method {
        InitMethod::Random => return Ok(()),
        InitMethod::Kernel => {
            let init = &cfg.init;
            let icfg = InitConfig {
                iters: init.iters,
                batch_size: init.batch_size.min(split.x_train.rows()),
                lr: init.lr,
                jitter: init.jitter,
                one_output_per_iter: true,
                log_every: init.iters.max(1),
            };
            let runs = init_all_modules(
                &split.x_train,
                &split.y_train,
                modules,
                &kernel_template(cfg, arch),
                &icfg,
                &rng,
            )?;
            runs.iter().map(|r| to_projection(&r.vars)).collect()
        }
        InitMethod::GroundTruth => {
            let task = split
                .sine
                .as_ref()
                .ok_or_else(|| Error::Precondition("ground-truth init needs a sine task".into()))?;
            ground_truth_projections(net, &task.u)?
        }
    };
    seed_projections(net, learned)?;
    if let Network::Modular(m) = net {
        m.train_projections = cfg.init.train_projections;
    }
    Ok(())
}

fn similarity(net: &Network, split: &Split) -> Result<Option<f64>> {
    match &split.sine {
        Some(task) if matches!(net, Network::Modular(_)) => {
            similarity_score(&projection_directions(net), &task.u).map(Some)
        }
        _ => Ok(None),
    }
}

/// Trains one network from scratch on `n` samples under `seed`.
pub fn run_single(cfg: &ExperimentConfig, point: &GridPoint, seed: u64, n: u64) -> Result<RunOutcome> {
    let k = point.k;
    let kk = k as u64;
    let split = make_split(cfg, k, n, seed)?;
    let classification = matches!(cfg.task, TaskConfig::Compositional { .. });
    let outputs = if classification { NUM_CLASSES * k } else { 1 };
    let spec = network_spec(cfg, &point.architecture, k, split.x_train.cols(), outputs);
    let mut net = Network::init(&spec, &mut stream(seed, 4, &[kk]))?;
    apply_init(
        &mut net,
        cfg,
        &point.architecture,
        point.init,
        &split,
        stream(seed, 5, &[kk, n]),
    )?;
    let init_similarity = similarity(&net, &split)?;
    let loss = if classification {
        LossKind::BlockSoftmax
    } else {
        LossKind::Mse
    };
    let tcfg = TrainConfig {
        loss,
        lr: cfg.train.lr,
        iterations: cfg.train.iterations_for(k),
        batch_size: cfg.train.batch_size,
        log_every: cfg.train.log_every,
        divergence_threshold: 1e6,
    };
    let report = train(
        &mut net,
        &split.x_train,
        &split.y_train,
        &tcfg,
        &mut stream(seed, 6, &[kk, n]),
    )?;
    let (test_loss, test_accuracy) = if classification {
        let pred = net.predict(&split.x_test)?;
        let ce = loss_value_and_grad(LossKind::BlockSoftmax, &pred, &split.y_test)?.0;
        (ce, Some(evaluate(&net, &split.x_test, &split.y_test, Metric::Accuracy)?))
    } else {
        (evaluate(&net, &split.x_test, &split.y_test, Metric::Mse)?, None)
    };
    Ok(RunOutcome {
        train_loss: report.final_train_loss,
        test_loss,
        test_accuracy,
        similarity: similarity(&net, &split)?,
        init_similarity,
        diverged: matches!(report.status, TrainStatus::Diverged { .. }),
    })
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, c) = v.fold((0.0, 0usize), |(s, c), x| (s + x, c + 1));
    s / c as f64
}

fn mean_opt(v: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Option<Vec<f64>> = v.collect();
    v.filter(|v| !v.is_empty()).map(|v| mean(v.into_iter()))
}

fn run_seeds(cfg: &ExperimentConfig, point: &GridPoint, n: u64) -> Result<Vec<RunOutcome>> {
    point.seeds.iter().map(|&s| run_single(cfg, point, s, n)).collect()
}

fn run_point(cfg: &ExperimentConfig, hash: &str, point: &GridPoint) -> ExperimentRecord {
    let start = Instant::now();
    let m = match &cfg.task {
        TaskConfig::Sine { m, .. } => m.unwrap_or(point.k),
        TaskConfig::Compositional { .. } => point.k,
    };
    let mut rec = ExperimentRecord {
        config_hash: hash.to_string(),
        point: point.key(),
        task: cfg.task.name().to_string(),
        k: point.k,
        m,
        architecture: point.architecture.label(),
        init: point.init.name().to_string(),
        seeds: point.seeds.clone(),
        n_train: None,
        train_loss: None,
        test_loss: None,
        test_accuracy: None,
        similarity: None,
        sample_complexity: None,
        search_c: None,
        search_l: None,
        search_r: None,
        search_exceeded: None,
        status: "ok".into(),
        wall_time_s: 0.0,
    };
    let fill = |rec: &mut ExperimentRecord, n: u64, outs: &[RunOutcome]| {
        rec.n_train = Some(n);
        rec.train_loss = Some(mean(outs.iter().map(|o| o.train_loss)));
        rec.test_loss = Some(mean(outs.iter().map(|o| o.test_loss)));
        rec.test_accuracy = mean_opt(outs.iter().map(|o| o.test_accuracy));
        rec.similarity = mean_opt(outs.iter().map(|o| o.similarity));
        if outs.iter().any(|o| o.diverged) {
            rec.status = "diverged".into();
        }
    };
    match &cfg.search {
        None => {
            let n = cfg.task.n_train().unwrap_or(1);
            match run_seeds(cfg, point, n) {
                Ok(outs) => fill(&mut rec, n, &outs),
                Err(e) => rec.status = format!("failed: {e}"),
            }
        }
        Some(search) => {
            let mut cache: HashMap<u64, Vec<RunOutcome>> = HashMap::new();
            let res = binary_search_sample_complexity(
                |n| {
                    let outs = run_seeds(cfg, point, n)?;
                    let loss = mean(outs.iter().map(|o| o.test_loss));
                    cache.insert(n, outs);
                    Ok(loss)
                },
                search.eps,
                &search.search_config(),
            );
            match res {
                Ok(res) => {
                    rec.search_c = Some(res.c);
                    rec.search_l = Some(res.l);
                    rec.search_r = res.r;
                    rec.search_exceeded = Some(res.exceeded);
                    rec.sample_complexity = (!res.exceeded).then_some(res.n);
                    // Metrics at the smallest size that met the target.
                    if let Some(outs) = res.r.map(super::search::samples_for).and_then(|n| cache.get(&n).map(|o| (n, o))) {
                        fill(&mut rec, outs.0, outs.1);
                    }
                    if res.exceeded {
                        rec.status = "exceeded".into();
                    }
                    if let Some(f) = res.failure {
                        rec.status = format!("failed: {f}");
                    }
                }
                Err(e) => rec.status = format!("failed: {e}"),
            }
        }
    }
    rec.wall_time_s = start.elapsed().as_secs_f64();
    rec
}

/// Runs every grid point not already completed in `log` and returns the
/// records in grid order. Records are appended to `log` as points finish;
/// failed points are retried on the next run.
pub fn run_experiment(cfg: &ExperimentConfig, log: Option<&Path>) -> Result<Vec<ExperimentRecord>> {
    cfg.validate()?;
    let hash = cfg.hash();
    let points = grid(cfg);
    let mut done: HashMap<String, ExperimentRecord> = HashMap::new();
    if let Some(path) = log.filter(|p| p.exists()) {
        for r in read_jsonl::<ExperimentRecord>(path)? {
            if r.config_hash == hash && !r.status.starts_with("failed") {
                done.insert(r.point.clone(), r);
            }
        }
    }
    let keys: HashSet<String> = points.iter().map(GridPoint::key).collect();
    done.retain(|k, _| keys.contains(k));
    let writer = Mutex::new(());
    let fresh: Vec<Result<ExperimentRecord>> = points
        .par_iter()
        .filter(|p| !done.contains_key(&p.key()))
        .map(|p| {
            let rec = run_point(cfg, &hash, p);
            if let Some(path) = log {
                let _guard = writer.lock().unwrap_or_else(|e| e.into_inner());
                append_jsonl(path, &rec)?;
            }
            Ok(rec)
        })
        .collect();
    for r in fresh {
        let r = r?;
        done.insert(r.point.clone(), r);
    }
    Ok(points.iter().filter_map(|p| done.remove(&p.key())).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(dims: &str, seeds: &str) -> ExperimentConfig {
        let text = format!(
            r#"{{
            "task": {{"kind": "sine", "dims": {dims}, "n_train": 64, "n_test": 64}},
            "architecture": [{{"kind": "modular", "width": 8, "layers": 2, "modules_per_dim": 2}}],
            "init": {{"methods": ["random"], "iters": 5, "batch_size": 32}},
            "train": {{"lr": 0.01, "iterations": 20, "batch_size": 32, "log_every": 10}},
            "seeds": {seeds}
        }}"#
        );
        ExperimentConfig::from_json(&text).unwrap()
    }

    #[test]
    fn empty_grid_gives_no_records() {
        assert!(run_experiment(&config("[]", "[0]"), None).unwrap().is_empty());
    }

    #[test]
    fn one_record_per_seed_and_dim() {
        let recs = run_experiment(&config("[1, 2]", "[0, 1]"), None).unwrap();
        assert_eq!(recs.len(), 4);
        let keys: HashSet<(usize, Vec<u64>)> = recs.iter().map(|r| (r.k, r.seeds.clone())).collect();
        assert_eq!(keys.len(), 4);
        for r in &recs {
            assert_eq!(r.status, "ok");
            assert!(r.test_loss.unwrap().is_finite());
            assert!(r.similarity.is_some());
        }
    }

    #[test]
    fn rerun_resumes_from_the_log() {
        let dir = tempfile::tempdir().unwrap();
        let log = dir.path().join("log.jsonl");
        let cfg = config("[1]", "[3, 4]");
        let first = run_experiment(&cfg, Some(&log)).unwrap();
        let second = run_experiment(&cfg, Some(&log)).unwrap();
        assert_eq!(first, second);
        assert_eq!(read_jsonl::<ExperimentRecord>(&log).unwrap().len(), 2);
    }

    #[test]
    fn runs_are_reproducible() {
        let cfg = config("[2]", "[5]");
        let a = run_experiment(&cfg, None).unwrap();
        let b = run_experiment(&cfg, None).unwrap();
        assert_eq!(a[0].test_loss, b[0].test_loss);
        assert_eq!(a[0].train_loss, b[0].train_loss);
    }

    #[test]
    fn init_methods_share_network_and_data_streams() {
        let mut cfg = config("[2]", "[0]");
        cfg.init.methods = vec![InitMethod::Random, InitMethod::GroundTruth];
        cfg.train.iterations = 0;
        let pts = grid(&cfg);
        let random = run_single(&cfg, &pts[0], 0, 64).unwrap();
        let truth = run_single(&cfg, &pts[1], 0, 64).unwrap();
        assert!((truth.init_similarity.unwrap() - 1.0).abs() < 1e-12);
        assert!(random.init_similarity.unwrap() < 1.0);
    }

    #[test]
    fn search_aggregates_over_seeds() {
        let mut cfg = config("[1]", "[0, 1]");
        cfg.task = TaskConfig::Sine {
            dims: vec![1],
            m: None,
            tau: 1,
            variant: SineVariant::Linear,
            n_train: None,
            n_test: 32,
        };
        cfg.search = Some(super::super::config::SearchSection {
            eps: 1e9,
            c0: Some(5.0),
            max_iters: Some(3),
            stop_gap: None,
            c_max: None,
        });
        let recs = run_experiment(&cfg, None).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].seeds, vec![0, 1]);
        assert_eq!(recs[0].search_c, Some(0.625));
        assert_eq!(recs[0].search_exceeded, Some(false));
    }
}
