use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use modscale::container::Container;
use modscale::harness::{
    emit_results, ground_truth_projections, load_image_sources, projection_directions, run_experiment,
    seed_projections, similarity_score, simulate_curve, theory_curve, write_csv, CsvRow, CurveConfig,
    ExperimentConfig, ImageSource, OutputFormat,
};
use modscale::module_init::{
    init_all_modules, load_projections, save_projections, to_projection, InitConfig, KernelTemplate,
    PROJECTIONS_KIND,
};
use modscale::nn::{
    evaluate, load_checkpoint, loss_value_and_grad, save_checkpoint, train, LossKind, Metric, Network,
    NetworkSpec, TrainConfig, CHECKPOINT_KIND,
};
use modscale::numerics::{Matrix, RngStream};
use modscale::tasks::{gen_compositional, gen_sine_task, CompositionalOptions, SineTask, SineVariant};
use modscale::theory::{fit_theory_params, FEvaluator, FitRecord, McConfig};
use modscale::Error;

use crate::{overrides, Cli, Command, ConfigArgs, InitArg, MetricArg, OUT_DIR_ENV};

#[derive(Debug)]
pub enum CliError {
    /// Bad arguments, configs or input files; exit code 1.
    Invalid(String),
    /// The run itself failed; exit code 2.
    Runtime(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Invalid(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Invalid(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(errs) => CliError::Invalid(format!("invalid config:\n  {}", errs.join("\n  "))),
            e => CliError::Runtime(e.to_string()),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Invalid(msg.into())
}

/// Reads and deserializes a JSON config after applying overrides.
fn load_config<T: DeserializeOwned + Serialize>(args: &ConfigArgs) -> CliResult<(T, Value)> {
    let path = &args.config;
    let text = fs::read_to_string(path).map_err(|e| invalid(format!("cannot read config {}: {e}", path.display())))?;
    let mut value: Value =
        serde_json::from_str(&text).map_err(|e| invalid(format!("config {} is not valid JSON: {e}", path.display())))?;
    for o in &args.overrides {
        overrides::apply(&mut value, o).map_err(invalid)?;
    }
    let cfg: T = serde_json::from_value(value).map_err(|e| invalid(format!("config {}: {e}", path.display())))?;
    // Round trip so the manifest shows every default.
    let resolved = serde_json::to_value(&cfg).map_err(|e| CliError::Runtime(e.to_string()))?;
    Ok((cfg, resolved))
}

fn require_file(path: &Path, what: &str) -> CliResult<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(invalid(format!("{what} {} does not exist", path.display())))
    }
}

fn out_path(path: &Path) -> PathBuf {
    match std::env::var_os(OUT_DIR_ENV) {
        Some(dir) if path.is_relative() => Path::new(&dir).join(path),
        _ => path.to_path_buf(),
    }
}

fn ensure_parent(path: &Path) -> CliResult<()> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => fs::create_dir_all(p)
            .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", p.display()))),
        _ => Ok(()),
    }
}

fn write_text(output: Option<&Path>, text: &str) -> CliResult<()> {
    match output {
        Some(p) => {
            let p = out_path(p);
            ensure_parent(&p)?;
            fs::write(&p, text).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", p.display())))
        }
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|e| CliError::Runtime(e.to_string()))
        }
    }
}

fn emit_rows<T: CsvRow + Serialize>(rows: &[T], output: Option<&Path>) -> CliResult<()> {
    match output {
        Some(p) => {
            let p = out_path(p);
            Ok(emit_results(rows, &p, OutputFormat::from_path(&p))?)
        }
        None => Ok(write_csv(rows, std::io::stdout().lock())?),
    }
}

fn manifest(command: &str, body: Value) {
    let mut m = json!({ "command": command, "version": env!("CARGO_PKG_VERSION") });
    if let (Value::Object(m), Value::Object(b)) = (&mut m, body) {
        m.extend(b);
    }
    eprintln!("{}", serde_json::to_string_pretty(&m).unwrap_or_default());
}

/// Train and test data of a generated task, plus the planted sine task when
/// there is one.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskFile {
    pub kind: String,
    #[serde(default)]
    pub sine: Option<SineTask>,
    pub x_train: Matrix,
    pub y_train: Matrix,
    pub x_test: Matrix,
    pub y_test: Matrix,
}

impl TaskFile {
    fn classification(&self) -> bool {
        self.kind == "compositional"
    }
}

fn read_task_file(path: &Path) -> CliResult<TaskFile> {
    require_file(path, "task file")?;
    let text = fs::read_to_string(path).map_err(|e| invalid(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| invalid(format!("task file {}: {e}", path.display())))
}

fn three() -> usize {
    3
}

fn yes() -> bool {
    true
}

fn linear() -> SineVariant {
    SineVariant::Linear
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum GenTaskConfig {
    Sine {
        k: usize,
        #[serde(default)]
        m: Option<usize>,
        #[serde(default = "three")]
        tau: usize,
        #[serde(default = "linear")]
        variant: SineVariant,
        n_train: usize,
        n_test: usize,
    },
    Compositional {
        k: usize,
        source: ImageSource,
        n_train: usize,
        n_test: usize,
        #[serde(default)]
        ood_split: Option<f64>,
        #[serde(default)]
        noise_sigma: f64,
        #[serde(default = "yes")]
        normalize: bool,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitModulesConfig {
    pub modules: usize,
    pub template: KernelTemplate,
    pub init: InitConfig,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSection {
    pub template: KernelTemplate,
    pub init: InitConfig,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainCommandConfig {
    pub network: NetworkSpec,
    pub train: TrainConfig,
    #[serde(default)]
    pub kernel: Option<KernelSection>,
}

pub fn dispatch(cli: Cli) -> CliResult<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(invalid("--threads must be positive"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    match cli.command {
        Command::TheoryCurve { config, output } => {
            let (cfg, resolved) = load_config::<CurveConfig>(&config)?;
            cfg.validate()?;
            manifest("theory-curve", json!({ "config": resolved }));
            emit_rows(&theory_curve(&cfg)?, output.as_deref())
        }
        Command::SimulateLinear { config, output, seed } => {
            let (cfg, resolved) = load_config::<CurveConfig>(&config)?;
            cfg.validate()?;
            manifest("simulate-linear", json!({ "config": resolved, "seed": seed }));
            emit_rows(&simulate_curve(&cfg, seed)?, output.as_deref())
        }
        Command::GenTask { config, output, seed } => gen_task(&config, &output, seed),
        Command::InitModules {
            config,
            data,
            output,
            seed,
        } => init_modules(&config, &data, &output, seed),
        Command::Train {
            config,
            data,
            init,
            projections,
            output,
            seed,
        } => train_command(&config, &data, init, projections.as_deref(), &output, seed),
        Command::Eval {
            checkpoint,
            data,
            metric,
            output,
        } => eval(&checkpoint, &data, metric, output.as_deref()),
        Command::SampleComplexity {
            config,
            output,
            log,
            seed,
        } => {
            let (mut cfg, _) = load_config::<ExperimentConfig>(&config)?;
            if let Some(s) = seed {
                cfg.seeds = vec![s];
            }
            cfg.validate()?;
            manifest("sample-complexity", cfg.manifest());
            let log = log.map(|p| out_path(&p));
            let records = run_experiment(&cfg, log.as_deref())?;
            emit_rows(&records, output.as_deref())
        }
        Command::Similarity { learned, targets } => similarity(&learned, &targets),
        Command::FitTheory {
            records,
            output,
            mc_trials,
            mc_seed,
        } => fit_theory(&records, output.as_deref(), mc_trials, mc_seed),
    }
}

fn gen_task(args: &ConfigArgs, output: &Path, seed: u64) -> CliResult<()> {
    let (cfg, resolved) = load_config::<GenTaskConfig>(args)?;
    manifest("gen-task", json!({ "config": resolved, "seed": seed }));
    let mut rng = RngStream::new(seed, 1);
    let file = match cfg {
        GenTaskConfig::Sine {
            k,
            m,
            tau,
            variant,
            n_train,
            n_test,
        } => {
            let task = gen_sine_task(&mut rng, k, m.unwrap_or(k), tau)?;
            let train = task.sample(&mut rng, n_train, variant)?;
            let test = task.sample(&mut rng, n_test, variant)?;
            TaskFile {
                kind: match variant {
                    SineVariant::Linear => "sine-linear".into(),
                    SineVariant::Distance => "sine-distance".into(),
                },
                sine: Some(task),
                x_train: train.x,
                y_train: Matrix::column(&train.y),
                x_test: test.x,
                y_test: Matrix::column(&test.y),
            }
        }
        GenTaskConfig::Compositional {
            k,
            source,
            n_train,
            n_test,
            ood_split,
            noise_sigma,
            normalize,
        } => {
            if let ImageSource::Cifar { dir } = &source {
                if !dir.is_dir() {
                    return Err(invalid(format!("CIFAR-10 directory {} does not exist", dir.display())));
                }
            }
            let (train_images, test_images) = load_image_sources(&source, seed, k)?;
            let opts = CompositionalOptions {
                ood_split,
                noise_sigma,
                normalize,
                partition_seed: seed,
            };
            let split = gen_compositional(&mut rng, &train_images, &test_images, k, n_train, n_test, &opts)?;
            TaskFile {
                kind: "compositional".into(),
                sine: None,
                x_train: split.train.x,
                y_train: split.train.y,
                x_test: split.test.x,
                y_test: split.test.y,
            }
        }
    };
    let text = serde_json::to_string(&file).map_err(|e| CliError::Runtime(e.to_string()))?;
    write_text(Some(output), &text)
}

fn init_modules(args: &ConfigArgs, data: &Path, output: &Path, seed: u64) -> CliResult<()> {
    let (cfg, resolved) = load_config::<InitModulesConfig>(args)?;
    cfg.init.validate()?;
    let task = read_task_file(data)?;
    manifest(
        "init-modules",
        json!({ "config": resolved, "seed": seed, "data": data }),
    );
    let runs = init_all_modules(
        &task.x_train,
        &task.y_train,
        cfg.modules,
        &cfg.template,
        &cfg.init,
        &RngStream::new(seed, 5),
    )?;
    for (j, r) in runs.iter().enumerate() {
        if let (Some(first), Some(last)) = (r.trace.first(), r.trace.last()) {
            eprintln!("module {j}: objective {:.6} -> {:.6}, resets {}", first.1, last.1, r.resets);
        }
    }
    let vars: Vec<_> = runs.into_iter().map(|r| r.vars).collect();
    let p = out_path(output);
    save_projections(&p, &vars, json!({ "config": resolved, "seed": seed }))?;
    Ok(())
}

fn train_command(
    args: &ConfigArgs,
    data: &Path,
    init: InitArg,
    projections: Option<&Path>,
    output: &Path,
    seed: u64,
) -> CliResult<()> {
    let (cfg, resolved) = load_config::<TrainCommandConfig>(args)?;
    cfg.train.validate()?;
    let task = read_task_file(data)?;
    let modular = matches!(cfg.network, NetworkSpec::Modular(_));
    if init != InitArg::Random && !modular {
        return Err(invalid("--init kernel and ground-truth need a modular network"));
    }
    let mut net = Network::init(&cfg.network, &mut RngStream::new(seed, 4))?;
    if net.input_dim() != task.x_train.cols() || net.output_dim() != task.y_train.cols() {
        return Err(invalid(format!(
            "network maps {} -> {} but the task has {} inputs and {} outputs",
            net.input_dim(),
            net.output_dim(),
            task.x_train.cols(),
            task.y_train.cols()
        )));
    }
    match init {
        InitArg::Random => {}
        InitArg::Kernel => {
            let learned = match (projections, &cfg.kernel) {
                (Some(p), _) => {
                    require_file(p, "projections file")?;
                    load_projections(p)?
                }
                (None, Some(k)) => {
                    let modules = match &net {
                        Network::Modular(m) => m.projections.len(),
                        Network::Mlp(_) => unreachable!(),
                    };
                    init_all_modules(
                        &task.x_train,
                        &task.y_train,
                        modules,
                        &k.template,
                        &k.init,
                        &RngStream::new(seed, 5),
                    )?
                    .into_iter()
                    .map(|r| r.vars)
                    .collect()
                }
                (None, None) => {
                    return Err(invalid("--init kernel needs --projections or a kernel config section"));
                }
            };
            seed_projections(&mut net, learned.iter().map(to_projection).collect())?;
        }
        InitArg::GroundTruth => {
            let sine = task
                .sine
                .as_ref()
                .ok_or_else(|| invalid("--init ground-truth needs a sine task file"))?;
            let learned = ground_truth_projections(&net, &sine.u)?;
            seed_projections(&mut net, learned)?;
        }
    }
    let init_name = match init {
        InitArg::Random => "random",
        InitArg::Kernel => "kernel",
        InitArg::GroundTruth => "ground-truth",
    };
    manifest(
        "train",
        json!({ "config": resolved, "seed": seed, "init": init_name, "data": data }),
    );
    let report = train(
        &mut net,
        &task.x_train,
        &task.y_train,
        &cfg.train,
        &mut RngStream::new(seed, 6),
    )?;
    let p = out_path(output);
    save_checkpoint(&p, &net, seed, &json!({ "train": resolved, "init": init_name }))?;
    let text = serde_json::to_string_pretty(&report).map_err(|e| CliError::Runtime(e.to_string()))?;
    write_text(None, &(text + "\n"))
}

fn eval(checkpoint: &Path, data: &Path, metric: Option<MetricArg>, output: Option<&Path>) -> CliResult<()> {
    require_file(checkpoint, "checkpoint")?;
    let ckpt = load_checkpoint(checkpoint)?;
    let task = read_task_file(data)?;
    let net = &ckpt.network;
    if net.input_dim() != task.x_test.cols() {
        return Err(invalid(format!(
            "checkpoint expects {} inputs, task has {}",
            net.input_dim(),
            task.x_test.cols()
        )));
    }
    let metric = metric.unwrap_or(if task.classification() {
        MetricArg::Accuracy
    } else {
        MetricArg::Mse
    });
    let mut result = json!({});
    match metric {
        MetricArg::Mse => result["mse"] = json!(evaluate(net, &task.x_test, &task.y_test, Metric::Mse)?),
        MetricArg::Accuracy => {
            let pred = net.predict(&task.x_test)?;
            result["accuracy"] = json!(evaluate(net, &task.x_test, &task.y_test, Metric::Accuracy)?);
            result["cross_entropy"] = json!(loss_value_and_grad(LossKind::BlockSoftmax, &pred, &task.y_test)?.0);
        }
    }
    write_text(output, &format!("{result}\n"))
}

fn similarity(learned: &Path, targets: &Path) -> CliResult<()> {
    require_file(learned, "learned file")?;
    let task = read_task_file(targets)?;
    let sine = task
        .sine
        .ok_or_else(|| invalid(format!("{} is not a sine task file", targets.display())))?;
    let kind = Container::read(learned)?.kind;
    let dirs = match kind.as_str() {
        CHECKPOINT_KIND => {
            let net = load_checkpoint(learned)?.network;
            if !matches!(net, Network::Modular(_)) {
                return Err(invalid("checkpoint is not a modular network"));
            }
            projection_directions(&net)
        }
        PROJECTIONS_KIND => load_projections(learned)?
            .iter()
            .map(|v| match to_projection(v) {
                modscale::nn::Projection::Linear { u } => u.col(0),
                modscale::nn::Projection::Distance { center } => center,
            })
            .collect(),
        other => return Err(invalid(format!("{} holds {other:?}, not projections", learned.display()))),
    };
    let score = similarity_score(&dirs, &sine.u)?;
    println!("{score}");
    Ok(())
}

fn fit_theory(records: &Path, output: Option<&Path>, mc_trials: usize, mc_seed: u64) -> CliResult<()> {
    require_file(records, "records file")?;
    let bad = |e: String| invalid(format!("records {}: {e}", records.display()));
    let rows: Vec<FitRecord> = if records.extension().is_some_and(|e| e == "json") {
        let text = fs::read_to_string(records).map_err(|e| bad(e.to_string()))?;
        serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?
    } else {
        csv::Reader::from_path(records)
            .map_err(|e| bad(e.to_string()))?
            .deserialize()
            .collect::<Result<_, _>>()
            .map_err(|e| bad(e.to_string()))?
    };
    let mc = McConfig {
        trials: mc_trials,
        seed: mc_seed,
    };
    manifest(
        "fit-theory",
        json!({ "records": records, "rows": rows.len(), "mc": mc }),
    );
    let fit = fit_theory_params(&rows, &FEvaluator::new(mc)).map_err(|e| match e {
        Error::Fit(m) => invalid(m),
        e => e.into(),
    })?;
    let text = serde_json::to_string_pretty(&fit).map_err(|e| CliError::Runtime(e.to_string()))?;
    write_text(output, &(text + "\n"))
}
