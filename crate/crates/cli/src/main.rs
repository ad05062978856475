mod config;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use quadwind::adapter::LearnedCompensation;
use quadwind::bench::{path_svg, prediction_rmse, run_matrix, BenchReport, Method, PathPair, Predictor};
use quadwind::data::{self, Dataset};
use quadwind::mpc::{track, NominalPrediction, PredictionModel};
use quadwind::net::{load_checkpoint, save_checkpoint, ModelParams};
use quadwind::train::fit_with;
use quadwind::trajectory::{Trajectory, TrajectoryKind};
use sha2::{Digest, Sha256};

use config::{RunConfig, ENV_OUTPUT_DIR, ENV_THREADS};

#[derive(Parser, Debug)]
#[command(name = "quadwind", version, about = "Wind-disturbance learning and MPC tracking for quadrotors")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// TOML run configuration.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Override one config value, e.g. `--set train.epochs=20`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Replace existing outputs.
    #[arg(long, global = true)]
    force: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fly the training trajectories under sampled winds and store the dataset.
    Collect {
        /// Also write a CSV copy of every record.
        #[arg(long)]
        csv: bool,
    },
    /// Train one method on the collected dataset.
    Train {
        #[arg(long)]
        method: Method,
        /// Defaults to the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Dataset file; defaults to the run's collected dataset.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Prediction RMSE of a checkpoint against the nominal model on every trajectory.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// One closed-loop tracking run.
    Track {
        #[arg(long)]
        method: Method,
        #[arg(long = "traj")]
        trajectory: TrajectoryKind,
        /// Horizontal wind `x,y` in m/s.
        #[arg(long, value_parser = parse_wind, default_value = "0,0")]
        wind: [f64; 2],
        #[arg(long)]
        seed: Option<u64>,
        /// Checkpoint for a learned method; defaults to the run's trained one.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Full method × trajectory × wind benchmark.
    Sweep,
    /// Rebuild figures and a summary from a finished sweep.
    Report,
}

fn parse_wind(s: &str) -> Result<[f64; 2], String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 2 {
        return Err(format!("wind must be `x,y`, got `{s}`"));
    }
    let x: f64 = parts[0].parse().map_err(|e| format!("wind x: {e}"))?;
    let y: f64 = parts[1].parse().map_err(|e| format!("wind y: {e}"))?;
    if !x.is_finite() || !y.is_finite() {
        return Err(format!("wind must be finite, got `{s}`"));
    }
    Ok([x, y])
}

/// Failures before any work starts exit 1; failures during work exit 2.
enum Failure {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

fn usage(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Usage(e.into())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn load_config(global: &Global) -> Result<RunConfig, Failure> {
    // Precedence: file, then environment, then --set.
    let mut overrides = Vec::new();
    if let Ok(v) = std::env::var(ENV_OUTPUT_DIR) {
        overrides.push(format!("output_dir=\"{}\"", v.replace('\\', "\\\\").replace('"', "\\\"")));
    }
    if let Ok(v) = std::env::var(ENV_THREADS) {
        let n: usize = v.trim().parse().map_err(|_| usage(anyhow!("{ENV_THREADS} must be a count, got `{v}`")))?;
        overrides.push(format!("threads={n}"));
    }
    overrides.extend(global.overrides.iter().cloned());
    let cfg = RunConfig::load(global.config.as_deref(), &overrides).map_err(|e| usage(anyhow!(e)))?;
    cfg.validate().map_err(|e| usage(anyhow!(e)))?;
    Ok(cfg)
}

struct Layout {
    data: PathBuf,
    checkpoints: PathBuf,
    reports: PathBuf,
}

impl Layout {
    fn new(cfg: &RunConfig) -> Self {
        let out = &cfg.output_dir;
        Self {
            data: out.join("data").join(&cfg.run_id),
            checkpoints: out.join("checkpoints").join(&cfg.run_id),
            reports: out.join("reports").join(&cfg.run_id),
        }
    }

    fn dataset(&self) -> PathBuf {
        self.data.join("dataset.bin")
    }

    fn checkpoint(&self, method: Method, seed: u64) -> PathBuf {
        self.checkpoints.join(format!("{}-s{seed}.ckpt", method.slug()))
    }
}

fn refuse_existing(path: &Path, force: bool) -> Result<(), Failure> {
    if path.exists() && !force {
        return Err(usage(anyhow!("{} exists; pass --force to replace it", path.display())));
    }
    Ok(())
}

fn prepare_dir(dir: &Path, cfg: &RunConfig) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    std::fs::write(dir.join("config-echo.toml"), cfg.to_toml()).context("writing config echo")?;
    Ok(())
}

fn sha256_file(path: &Path) -> anyhow::Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

fn run(cli: Cli) -> Result<(), Failure> {
    let cfg = load_config(&cli.global)?;
    if cfg.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build_global()
            .map_err(|e| Failure::Runtime(anyhow!("thread pool: {e}")))?;
    }
    let layout = Layout::new(&cfg);
    let force = cli.global.force;
    match cli.command {
        Command::Collect { csv } => collect(&cfg, &layout, csv, force),
        Command::Train { method, seed, data } => train(&cfg, &layout, method, seed.unwrap_or(cfg.seed), data, force),
        Command::Eval { checkpoint } => eval(&cfg, &layout, &checkpoint, force),
        Command::Track { method, trajectory, wind, seed, checkpoint } => {
            track_one(&cfg, &layout, method, trajectory, wind, seed.unwrap_or(cfg.seed), checkpoint, force)
        }
        Command::Sweep => sweep(&cfg, &layout, force),
        Command::Report => report(&layout),
    }
}

fn collect(cfg: &RunConfig, layout: &Layout, csv: bool, force: bool) -> Result<(), Failure> {
    let path = layout.dataset();
    refuse_existing(&path, force)?;
    let cells = data::training_cells(cfg.seed, cfg.data.winds_per_kind);
    eprintln!("collecting {} rollouts of {} s", cells.len(), cfg.data.duration);
    let start = Instant::now();
    let dataset = data::collect_cells(&cells, &cfg.collect_config()).context("collecting")?;
    prepare_dir(&layout.data, cfg)?;
    data::save_dataset(&dataset, cfg.data.window, &path).context("saving dataset")?;
    if csv {
        let file = std::fs::File::create(layout.data.join("dataset.csv")).context("creating dataset.csv")?;
        data::write_dataset_csv(&dataset, std::io::BufWriter::new(file)).context("writing dataset.csv")?;
    }
    println!(
        "{} records in {} rollouts -> {} ({:.1} s)",
        dataset.record_count(),
        dataset.rollouts.len(),
        path.display(),
        start.elapsed().as_secs_f64()
    );
    Ok(())
}

fn load_dataset(path: &Path) -> Result<Dataset, Failure> {
    if !path.exists() {
        return Err(usage(anyhow!("no dataset at {}; run `quadwind collect` first", path.display())));
    }
    let (dataset, _) = data::load_dataset(path).with_context(|| format!("loading {}", path.display()))?;
    Ok(dataset)
}

fn train(
    cfg: &RunConfig,
    layout: &Layout,
    method: Method,
    seed: u64,
    data_path: Option<PathBuf>,
    force: bool,
) -> Result<(), Failure> {
    let (Some(net), Some(tc)) = (method.net_config(&cfg.net, seed), method.train_config(&cfg.train, seed)) else {
        return Err(usage(anyhow!("{method} has nothing to train")));
    };
    let out = layout.checkpoint(method, seed);
    refuse_existing(&out, force)?;
    let dataset = load_dataset(&data_path.unwrap_or_else(|| layout.dataset()))?;
    let windows = data::windowize(&dataset, net.window).context("windowing dataset")?;
    eprintln!("training {method} (seed {seed}) on {} windows", windows.len());
    let (params, log) = fit_with(&windows, &net, &tc, |e| {
        eprintln!(
            "epoch {:>4}  L_SL {:.6}  L_PI {:.6}  val RMSE {:.5}{}",
            e.epoch,
            e.supervised,
            e.physics,
            e.val_rmse,
            if e.resampled { "  (resampled)" } else { "" }
        )
    })
    .context("training")?;
    prepare_dir(&layout.checkpoints, cfg)?;
    save_checkpoint(&params, &out).context("saving checkpoint")?;
    std::fs::write(out.with_extension("csv"), log.to_csv()).context("writing training log")?;
    println!("{} sha256={}", out.display(), sha256_file(&out)?);
    Ok(())
}

fn load_params(path: &Path) -> Result<ModelParams, Failure> {
    if !path.exists() {
        return Err(usage(anyhow!("no checkpoint at {}", path.display())));
    }
    Ok(load_checkpoint(path).with_context(|| format!("loading {}", path.display()))?)
}

fn eval(cfg: &RunConfig, layout: &Layout, checkpoint: &Path, force: bool) -> Result<(), Failure> {
    let params = load_params(checkpoint)?;
    let stem = checkpoint.file_stem().and_then(|s| s.to_str()).unwrap_or("model");
    let out = layout.reports.join(format!("eval-{stem}.csv"));
    refuse_existing(&out, force)?;
    let [wx, wy] = cfg.data.eval_wind;
    eprintln!("flying evaluation rollouts at wind ({wx}, {wy})");
    let dataset = data::collect(&TrajectoryKind::ALL, &[(wx, wy)], &cfg.collect_config()).context("collecting")?;
    let window = params.config().window;
    let mut csv = String::from("trajectory,seen,nominal_rmse,model_rmse\n");
    println!("{:<24} {:>10} {:>10}", "trajectory", "nominal", stem);
    for rollout in &dataset.rollouts {
        let nom = prediction_rmse(Predictor::Nominal, rollout, window).context("nominal RMSE")?;
        let learned = prediction_rmse(Predictor::Learned(&params), rollout, window).context("model RMSE")?;
        let kind = rollout.trajectory;
        let seen = TrajectoryKind::TRAINING.contains(&kind);
        println!("{:<24} {nom:>10.4} {learned:>10.4}{}", kind.to_string(), if seen { "" } else { "  (unseen)" });
        csv.push_str(&format!("{},{seen},{nom},{learned}\n", kind.slug()));
    }
    prepare_dir(&layout.reports, cfg)?;
    std::fs::write(&out, csv).context("writing eval report")?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn track_one(
    cfg: &RunConfig,
    layout: &Layout,
    method: Method,
    kind: TrajectoryKind,
    wind: [f64; 2],
    seed: u64,
    checkpoint: Option<PathBuf>,
    force: bool,
) -> Result<(), Failure> {
    let cc = cfg.collect_config();
    let wind_field = cc.wind(wind[0], wind[1]).map_err(usage)?;
    let base = format!("track-{}-{}-w{}_{}", method.slug(), kind.slug(), wind[0], wind[1]);
    let csv_path = layout.reports.join(format!("{base}.csv"));
    refuse_existing(&csv_path, force)?;
    let mut predictor: Box<dyn PredictionModel> = if method == Method::Nom {
        Box::new(NominalPrediction)
    } else {
        let path = checkpoint.unwrap_or_else(|| layout.checkpoint(method, seed));
        let params = load_params(&path)?;
        Box::new(LearnedCompensation::new(params, cfg.adapter.clone(), cfg.mpc.dt).map_err(usage)?)
    };
    let trajectory = Trajectory::new(kind, cfg.trajectories);
    let start = Instant::now();
    let log = track(&trajectory, predictor.as_mut(), &wind_field, &cfg.mpc, &cfg.weights, cfg.bench.duration)
        .context("tracking")?;
    let elapsed = start.elapsed().as_secs_f64();

    let mut csv = String::from("t,x,y,z,x_ref,y_ref,z_ref\n");
    let mut pair = PathPair::default();
    for (r, p) in log.records.iter().zip(&log.references) {
        let s = r.state.p;
        csv.push_str(&format!("{},{},{},{},{},{},{}\n", r.t, s.x, s.y, s.z, p.p.x, p.p.y, p.p.z));
        pair.actual.push([s.x, s.y]);
        pair.reference.push([p.p.x, p.p.y]);
    }
    prepare_dir(&layout.reports, cfg)?;
    std::fs::write(&csv_path, csv).context("writing track csv")?;
    std::fs::write(
        layout.reports.join(format!("{base}.svg")),
        path_svg(&format!("{method} on {kind}"), &pair),
    )
    .context("writing track svg")?;
    println!(
        "{method} {kind} wind ({}, {}): tracking RMSE {:.4} m, {} steps, {:.1} s wall",
        wind[0],
        wind[1],
        log.rmse,
        log.records.len(),
        elapsed
    );
    Ok(())
}

fn sweep(cfg: &RunConfig, layout: &Layout, force: bool) -> Result<(), Failure> {
    refuse_existing(&layout.reports.join("matrix.csv"), force)?;
    let mut models: BTreeMap<(Method, u64), ModelParams> = BTreeMap::new();
    for &m in &cfg.bench.methods {
        if m == Method::Nom {
            continue;
        }
        for &s in &cfg.bench.seeds {
            let path = layout.checkpoint(m, s);
            match load_checkpoint(&path) {
                Ok(p) => {
                    models.insert((m, s), p);
                }
                Err(e) => eprintln!("warning: {m} seed {s}: {e}; its cells will be marked failed"),
            }
        }
    }
    eprintln!("running {} tracking cells", cfg.bench.tracking_cells());
    let start = Instant::now();
    let lookup = |m: Method, s: u64| models.get(&(m, s)).cloned();
    let report = run_matrix(&cfg.bench, &lookup, &cfg.collect_config(), &cfg.adapter).context("sweep")?;
    prepare_dir(&layout.reports, cfg)?;
    report.write_all(&layout.reports).context("writing sweep outputs")?;
    let failed = report.cells.iter().filter(|c| c.error.is_some()).count();
    println!(
        "{} cells ({failed} failed) in {:.1} s -> {}",
        report.cells.len(),
        start.elapsed().as_secs_f64(),
        layout.reports.display()
    );
    print_summary(&report);
    Ok(())
}

fn report(layout: &Layout) -> Result<(), Failure> {
    let path = layout.reports.join("matrix.csv");
    if !path.exists() {
        return Err(usage(anyhow!("no sweep results at {}; run `quadwind sweep` first", path.display())));
    }
    let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let report = BenchReport::from_csv(&text).context("parsing matrix.csv")?;
    if report.cells.is_empty() {
        return Err(Failure::Runtime(anyhow!("{} has no cells", path.display())));
    }
    let mut kinds: Vec<TrajectoryKind> = report.cells.iter().map(|c| c.trajectory).collect();
    kinds.sort();
    kinds.dedup();
    for k in kinds {
        std::fs::write(layout.reports.join(format!("heatmap-{}.svg", k.slug())), report.heatmap_svg(k))
            .context("writing heatmap")?;
    }
    print_summary(&report);
    Ok(())
}

/// Mean of each metric per method over finite cells.
fn print_summary(report: &BenchReport) {
    let mut acc: BTreeMap<(Method, String), (f64, usize)> = BTreeMap::new();
    for c in report.cells.iter().filter(|c| c.value.is_finite()) {
        let e = acc.entry((c.method, format!("{:?}", c.metric))).or_default();
        e.0 += c.value;
        e.1 += 1;
    }
    println!("{:<8} {:<16} {:>10} {:>6}", "method", "metric", "mean", "cells");
    for ((m, metric), (sum, n)) in acc {
        println!("{:<8} {:<16} {:>10.4} {:>6}", m.to_string(), metric, sum / n as f64, n);
    }
}
