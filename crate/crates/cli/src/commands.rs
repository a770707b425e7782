use crate::config::{
    usage, BenchArgs, BudgetArgs, CalibrateArgs, DataArgs, FileConfig, ModelArgs, OutputArgs, SyntheticArgs, TrainArgs,
};
use crate::data::{self, Fallback, Loaded};
use crate::output::{self, run_dir};
use anyhow::Context;
use clap::{Args, Subcommand};
use lcgnn_core::block::{
    block_feature_aggregation, block_normalize, calibrate_budget, dataset_hash, plan_for_problem, read_lcpf,
    write_lcpf, HostExecutor, PlanReport,
};
use lcgnn_core::formula::{build_formula, ModelSpec};
use lcgnn_core::rewrite::{lc_transform_traced, PlanSpec};
use lcgnn_core::train::{train_any, write_history_csv, TrainOutcome};
use lcgnn_core::{LcModel, PrecomputedFeatures};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

/// `println!` that tolerates a closed stdout (e.g. piped into `head`).
macro_rules! say {
    ($($t:tt)*) => {{
        use std::io::Write as _;
        let _ = writeln!(std::io::stdout(), $($t)*);
    }};
}

/// Synthetic graph size `bench` uses when no dataset is given.
const BENCH_DEFAULT_NODES: usize = 5000;
/// `bench` budget default: the unblocked footprint divided by this.
const BENCH_DEFAULT_SHRINK: f64 = 8.0;

#[derive(Subcommand)]
pub enum Command {
    /// Rewrite a model into LC form and print every step
    Transform(TransformCmd),
    /// Solve for block counts under a memory budget
    Plan(PlanCmd),
    /// Block-wise precompute S^k·X and write an LCPF file
    Precompute(PrecomputeCmd),
    /// Train an LC model on precomputed features
    Train(TrainCmd),
    /// Time naive against blocked precomputation
    Bench(BenchCmd),
    /// Write a synthetic dataset
    GenSynthetic(GenSyntheticCmd),
    /// Estimate budget coefficients from probe runs
    Calibrate(CalibrateCmd),
}

#[derive(Args)]
pub struct TransformCmd {
    #[command(flatten)]
    model: ModelArgs,
}

#[derive(Args)]
pub struct PlanCmd {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    synthetic: SyntheticArgs,
    #[command(flatten)]
    budget: BudgetArgs,
}

#[derive(Args)]
pub struct PrecomputeCmd {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    synthetic: SyntheticArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    budget: BudgetArgs,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
pub struct TrainCmd {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    synthetic: SyntheticArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    train: TrainArgs,
    #[command(flatten)]
    budget: BudgetArgs,
    #[command(flatten)]
    output: OutputArgs,
    /// Reuse an LCPF file from `precompute` instead of precomputing
    #[arg(long)]
    precomputed: Option<PathBuf>,
}

#[derive(Args)]
pub struct BenchCmd {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    synthetic: SyntheticArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    budget: BudgetArgs,
    #[command(flatten)]
    bench: BenchArgs,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
pub struct GenSyntheticCmd {
    #[command(flatten)]
    synthetic: SyntheticArgs,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
pub struct CalibrateCmd {
    #[command(flatten)]
    budget: BudgetArgs,
    #[command(flatten)]
    calibrate: CalibrateArgs,
    #[command(flatten)]
    output: OutputArgs,
}

/// Flags layered over the config file.
fn merge(flags: FileConfig, file: FileConfig) -> FileConfig {
    FileConfig {
        seed: flags.seed.or(file.seed),
        data: flags.data.overlay(file.data),
        synthetic: flags.synthetic.overlay(file.synthetic),
        model: flags.model.overlay(file.model),
        train: flags.train.overlay(file.train),
        budget: flags.budget.overlay(file.budget),
        output: flags.output.overlay(file.output),
        bench: flags.bench.overlay(file.bench),
        calibrate: flags.calibrate.overlay(file.calibrate),
    }
}

pub fn run(cmd: Command, seed: Option<u64>, file: FileConfig) -> anyhow::Result<()> {
    let flags = FileConfig {
        seed,
        ..Default::default()
    };
    match cmd {
        Command::Transform(c) => transform(&merge(
            FileConfig {
                model: c.model,
                ..flags
            },
            file,
        )),
        Command::Plan(c) => plan(&merge(
            FileConfig {
                data: c.data,
                synthetic: c.synthetic,
                budget: c.budget,
                ..flags
            },
            file,
        )),
        Command::Precompute(c) => precompute(&merge(
            FileConfig {
                data: c.data,
                synthetic: c.synthetic,
                model: c.model,
                budget: c.budget,
                output: c.output,
                ..flags
            },
            file,
        )),
        Command::Train(c) => train(
            &merge(
                FileConfig {
                    data: c.data,
                    synthetic: c.synthetic,
                    model: c.model,
                    train: c.train,
                    budget: c.budget,
                    output: c.output,
                    ..flags
                },
                file,
            ),
            c.precomputed.as_deref(),
        ),
        Command::Bench(c) => bench(&merge(
            FileConfig {
                data: c.data,
                synthetic: c.synthetic,
                model: c.model,
                budget: c.budget,
                bench: c.bench,
                output: c.output,
                ..flags
            },
            file,
        )),
        Command::GenSynthetic(c) => gen_synthetic(&merge(
            FileConfig {
                synthetic: c.synthetic,
                output: c.output,
                ..flags
            },
            file,
        )),
        Command::Calibrate(c) => calibrate(&merge(
            FileConfig {
                budget: c.budget,
                calibrate: c.calibrate,
                output: c.output,
                ..flags
            },
            file,
        )),
    }
}

fn seed(cfg: &FileConfig) -> u64 {
    cfg.seed.unwrap_or(0)
}

/// TOML float literal; `{}` would print `1` for `1.0`.
fn float(v: f64) -> String {
    toml::Value::Float(v).to_string()
}

fn quoted(s: &str) -> String {
    toml::Value::String(s.to_string()).to_string()
}

fn transform(cfg: &FileConfig) -> anyhow::Result<()> {
    let spec = cfg.model.resolve()?;
    let original = build_formula(&spec).map_err(|e| usage(format!("model: {e}")))?;
    let r = lc_transform_traced(&original)?;
    let mut out = String::new();
    writeln!(out, "model = {}", quoted(&spec.family.to_string()))?;
    writeln!(out, "original = {}", quoted(&r.original.to_string()))?;
    writeln!(out, "steps = {}", r.trace.len())?;
    writeln!(out, "trace = [")?;
    for step in &r.trace {
        writeln!(out, "  {},", quoted(&step.to_string()))?;
    }
    writeln!(out, "]")?;
    writeln!(out, "lc = {}", quoted(&r.formula.to_string()))?;
    let powers: Vec<String> = r.plan.powers().map(|k| k.to_string()).collect();
    writeln!(out, "powers = [{}]", powers.join(", "))?;
    say!("{}", out.trim_end());
    Ok(())
}

fn load(cfg: &FileConfig, fallback: Fallback) -> anyhow::Result<Loaded> {
    data::load(&cfg.data, &cfg.synthetic, seed(cfg), fallback)
}

fn plan_report(cfg: &FileConfig, d: &Loaded, default_shrink: f64) -> anyhow::Result<PlanReport> {
    let (bm, vm) = cfg.budget.resolve(d.problem(), default_shrink)?;
    Ok(plan_for_problem(&bm, &vm, d.problem())?)
}

fn plan(cfg: &FileConfig) -> anyhow::Result<()> {
    let d = load(cfg, Fallback::Refuse)?;
    say!("{}", plan_report(cfg, &d, 1.0)?);
    Ok(())
}

/// Powers the model's LC form reads, from a spec with final dimensions.
fn model_plan(spec: &ModelSpec) -> anyhow::Result<PlanSpec> {
    let model = LcModel::new(spec.clone()).map_err(|e| usage(format!("model: {e}")))?;
    Ok(model.plan().clone())
}

struct Precomputed {
    features: PrecomputedFeatures,
    report: PlanReport,
    ms: f64,
}

fn run_precompute(cfg: &FileConfig, d: &Loaded, powers: &PlanSpec) -> anyhow::Result<Precomputed> {
    let report = plan_report(cfg, d, 1.0)?;
    log::info!("decomposition plan a,b,c = {}", report.plan);
    let start = Instant::now();
    let mut exec = HostExecutor::budgeted(report.budget, cfg.budget.volumes()?);
    let s = block_normalize(&d.graph, report.plan.a, &mut exec)?;
    let k = powers.max_power().max(1);
    let all = block_feature_aggregation(&s, &d.features, k, report.plan.b, report.plan.c, &mut exec)?;
    let mut features = all.restrict_to(powers).expect("every power up to K was computed");
    features.dataset_hash = dataset_hash(&d.graph, &d.features);
    let ms = start.elapsed().as_secs_f64() * 1e3;
    log::info!("precomputed powers {:?} in {ms:.1} ms", features.powers());
    Ok(Precomputed { features, report, ms })
}

fn precompute(cfg: &FileConfig) -> anyhow::Result<()> {
    let d = load(cfg, Fallback::Refuse)?;
    let spec = cfg.model.resolve()?.with_dims(d.features.cols(), 1, 1);
    let powers = model_plan(&spec)?;
    let p = run_precompute(cfg, &d, &powers)?;
    let dir = run_dir(&cfg.output, "precompute", cfg)?;
    let path = dir.join("features.lcpf");
    write_lcpf(&path, &p.features, &p.report.plan)?;
    output::write(&dir, "plan.toml", format!("{}\n", p.report))?;
    say!("run_dir = {}", quoted(&dir.display().to_string()));
    say!("features = {}", quoted(&path.display().to_string()));
    say!("powers = {:?}", p.features.powers());
    say!("plan = {}", quoted(&p.report.plan.to_string()));
    say!("precompute_ms = {:.3}", p.ms);
    Ok(())
}

fn metrics_text(o: &TrainOutcome, precompute_ms: f64, total_ms: f64) -> String {
    let mut s = String::new();
    for e in &o.history.epochs {
        let _ = writeln!(
            s,
            "epoch={} train_loss={} val_acc={} cum_time_ms={:.3}",
            e.epoch, e.train_loss, e.val_acc, e.cum_time_ms
        );
    }
    let _ = writeln!(
        s,
        "summary test_acc={} train_acc={} best_val_acc={} best_epoch={} epochs={} precompute_ms={precompute_ms:.3} total_ms={total_ms:.3}",
        o.test_acc,
        o.train_acc,
        o.best_val_acc,
        o.history.best_epoch,
        o.history.len()
    );
    s
}

fn train(cfg: &FileConfig, precomputed: Option<&Path>) -> anyhow::Result<()> {
    let start = Instant::now();
    let d = load(cfg, Fallback::Refuse)?;
    let (labels, split) = d.labelled()?;
    let num_classes = labels.iter().max().map_or(1, |&m| m + 1);
    let base = cfg.model.resolve()?;
    let tc = cfg.train.resolve(seed(cfg), base.activation)?;
    let spec = base.with_dims(d.features.cols(), tc.hidden_dim, num_classes);
    let model = LcModel::new(spec).map_err(|e| usage(format!("model: {e}")))?;

    let dir = run_dir(&cfg.output, "train", cfg)?;
    let (features, precompute_ms) = match precomputed {
        Some(path) => {
            let t = Instant::now();
            let pf = read_lcpf(path)?;
            anyhow::ensure!(
                pf.n == d.features.rows() && pf.d == d.features.cols(),
                "{} holds {}x{} features but the dataset is {}x{}",
                path.display(),
                pf.n,
                pf.d,
                d.features.rows(),
                d.features.cols()
            );
            if !pf.dataset_hash.is_empty() && pf.dataset_hash != dataset_hash(&d.graph, &d.features) {
                anyhow::bail!("{} was precomputed from a different dataset", path.display());
            }
            (pf, t.elapsed().as_secs_f64() * 1e3)
        }
        None => {
            let p = run_precompute(cfg, &d, model.plan())?;
            output::write(&dir, "plan.toml", format!("{}\n", p.report))?;
            (p.features, p.ms)
        }
    };

    let mut outcome =
        train_any(&model, &features, labels, split, &tc).with_context(|| format!("training {}", model.formula()))?;
    outcome.history.precompute_ms = precompute_ms;
    let total_ms = start.elapsed().as_secs_f64() * 1e3;
    write_history_csv(&dir.join("history.csv"), &outcome.history)
        .with_context(|| format!("writing {}", dir.join("history.csv").display()))?;
    output::write(&dir, "metrics.txt", metrics_text(&outcome, precompute_ms, total_ms))?;

    say!("run_dir = {}", quoted(&dir.display().to_string()));
    say!("lc = {}", quoted(&model.formula().to_string()));
    say!("test_acc = {}", float(outcome.test_acc));
    say!("best_val_acc = {}", float(outcome.best_val_acc));
    say!("train_acc = {}", float(outcome.train_acc));
    say!("best_epoch = {}", outcome.history.best_epoch);
    say!("epochs = {}", outcome.history.len());
    say!("precompute_ms = {precompute_ms:.3}");
    say!("total_ms = {total_ms:.3}");
    Ok(())
}

fn bench(cfg: &FileConfig) -> anyhow::Result<()> {
    let d = load(cfg, Fallback::Synthetic { n: BENCH_DEFAULT_NODES })?;
    let k = cfg.model.resolve()?.conv_layers as u32;
    let (bm, vm) = cfg.budget.resolve(d.problem(), BENCH_DEFAULT_SHRINK)?;
    let repeats = cfg.bench.repeats.unwrap_or(5) as usize;
    log::info!(
        "benchmarking n={} nnz={} d={} K={k}",
        d.problem().n,
        d.problem().nnz,
        d.problem().d
    );
    let report = lcgnn_bench::run_bench(&d.graph, &d.features, k, &bm, &vm, repeats)?;
    let dir = run_dir(&cfg.output, "bench", cfg)?;
    output::write(&dir, "report.txt", format!("{report}\n"))?;
    output::write(&dir, "report.csv", report.to_csv())?;
    say!("run_dir = {}", quoted(&dir.display().to_string()));
    say!("{report}");
    Ok(())
}

fn gen_synthetic(cfg: &FileConfig) -> anyhow::Result<()> {
    let mut cfg = cfg.clone();
    cfg.synthetic.synthetic = true;
    let d = data::load(&DataArgs::default(), &cfg.synthetic, seed(&cfg), Fallback::Refuse)?;
    let dir = run_dir(&cfg.output, "gen-synthetic", &cfg)?;
    data::write_dataset(&dir, &d)?;
    say!("run_dir = {}", quoted(&dir.display().to_string()));
    say!("nodes = {}", d.graph.num_nodes());
    say!("edges = {}", d.graph.num_edges());
    say!("feature_dim = {}", d.features.cols());
    Ok(())
}

fn calibrate(cfg: &FileConfig) -> anyhow::Result<()> {
    let sizes = cfg
        .calibrate
        .probe_sizes
        .clone()
        .unwrap_or_else(|| vec![64, 128, 256, 512, 1024]);
    let tolerance = cfg.calibrate.tolerance.unwrap_or(0.05);
    if !(tolerance.is_finite() && tolerance >= 0.0) {
        return Err(usage(format!("calibrate.tolerance must be >= 0, got {tolerance}")));
    }
    let vm = cfg.budget.volumes()?;
    let mut exec = HostExecutor::unbounded(vm);
    let cal = calibrate_budget(&mut exec, &sizes, &vm, tolerance)?;
    let mut out = String::from("[coefficients]\n");
    for (name, fit) in cal.fits() {
        writeln!(out, "{name} = {}", float(fit.slope))?;
    }
    for (name, fit) in cal.fits() {
        writeln!(out, "\n[fit.{name}]")?;
        writeln!(out, "slope = {}", float(fit.slope))?;
        writeln!(out, "intercept = {}", float(fit.intercept))?;
        writeln!(out, "relative_residual = {}", float(fit.relative_residual))?;
    }
    if cfg.output.dir.is_some() || cfg.output.runs_root.is_some() {
        let dir = run_dir(&cfg.output, "calibrate", cfg)?;
        output::write(&dir, "calibration.toml", &out)?;
    }
    say!("{}", out.trim_end());
    Ok(())
}
