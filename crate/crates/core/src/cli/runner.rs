//! Multi-seed experiment runs and their on-disk outputs.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cli::checkpoint::{Checkpoint, RngState};
use crate::cli::config::{ExperimentConfig, Mode};
use crate::error::{Error, Result};
use crate::tasks::{SequenceDataset, TaskKind};
use crate::training::{
    evaluate, incremental_train, init_params, train_fixed_with_rng, MetricsRecord, StopReason, TrainConfig,
    TrainOutcome,
};

pub const METRICS_HEADER: &str = "epoch,module_count,train_loss,val_loss,metric,wall_time_ms";

/// Reals with 17 significant digits.
pub fn fmt_real(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn metrics_row(r: &MetricsRecord) -> String {
    format!(
        "{},{},{},{},{},{}",
        r.epoch,
        r.module_count,
        fmt_real(r.train_loss),
        fmt_real(r.val_loss),
        fmt_real(r.metric),
        r.wall_time_ms
    )
}

pub fn metric_name(kind: TaskKind) -> &'static str {
    match kind {
        TaskKind::Regression => "nmse",
        TaskKind::Classification => "accuracy",
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub mode: Mode,
    pub metric_name: String,
    /// Test-split metric of the final parameters.
    pub final_metric: f64,
    /// Test-split metric of the lowest-validation-loss parameters.
    pub best_metric: f64,
    pub best_epoch: usize,
    pub epochs: usize,
    pub param_count: usize,
    pub module_count: usize,
    pub stop: StopReason,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len().max(1) as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        MeanStd { mean, std: var.sqrt() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub metric_name: String,
    pub final_metric: MeanStd,
    pub best_metric: MeanStd,
    pub runs: Vec<RunSummary>,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn seed_config(config: &ExperimentConfig, seed: u64) -> TrainConfig {
    TrainConfig {
        seed,
        ..config.train.clone()
    }
}

fn train_one(
    config: &ExperimentConfig,
    data: &SequenceDataset,
    seed: u64,
    observer: &mut dyn FnMut(&MetricsRecord),
) -> Result<TrainOutcome> {
    let train = seed_config(config, seed);
    match config.mode {
        Mode::Incremental => incremental_train(data, &config.architecture, &train, Some(observer)),
        Mode::Fixed => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let params = init_params(data, &config.architecture, config.architecture.modules, &mut rng);
            train_fixed_with_rng(data, params, &train, rng, Some(observer))
        }
    }
}

/// Trains one seed into `dir`: `metrics.csv` (written as epochs complete),
/// `final.json`, `best.json` and `summary.json`.
pub fn run_seed(
    config: &ExperimentConfig,
    data: &SequenceDataset,
    seed: u64,
    dir: &Path,
    quiet: bool,
) -> Result<RunSummary> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let metrics_path = dir.join("metrics.csv");
    let file = fs::File::create(&metrics_path).map_err(|e| Error::io(&metrics_path, e))?;
    let mut csv = BufWriter::new(file);
    writeln!(csv, "{METRICS_HEADER}").map_err(|e| Error::io(&metrics_path, e))?;
    let mut write_err = None;
    let every = (config.train.max_epochs / 20).max(1);
    let mut observer = |r: &MetricsRecord| {
        if write_err.is_none() {
            if let Err(e) = writeln!(csv, "{}", metrics_row(r)).and_then(|_| csv.flush()) {
                write_err = Some(e);
            }
        }
        if !quiet && (r.epoch.is_multiple_of(every) || r.epoch == 1) {
            log::info!(
                "seed {seed} epoch {} modules {} train {:.4e} val {:.4e} metric {:.4e}",
                r.epoch,
                r.module_count,
                r.train_loss,
                r.val_loss,
                r.metric
            );
        }
    };
    let outcome = train_one(config, data, seed, &mut observer)?;
    if let Some(e) = write_err {
        return Err(Error::io(&metrics_path, e));
    }
    csv.flush().map_err(|e| Error::io(&metrics_path, e))?;

    let epochs = outcome.records.len();
    let mut final_ck = Checkpoint::new(outcome.params.clone(), data.kind, Some(config.task.clone()), epochs);
    final_ck.optimizer = Some(outcome.adam.clone());
    final_ck.rng = Some(RngState::capture(seed, &outcome.rng));
    final_ck.save(&dir.join("final.json"))?;
    Checkpoint::new(
        outcome.best_params.clone(),
        data.kind,
        Some(config.task.clone()),
        outcome.best_epoch,
    )
    .save(&dir.join("best.json"))?;

    let test = data.test();
    let summary = RunSummary {
        seed,
        mode: config.mode,
        metric_name: metric_name(data.kind).into(),
        final_metric: evaluate(&outcome.params, &test, data.kind)?.metric,
        best_metric: evaluate(&outcome.best_params, &test, data.kind)?.metric,
        best_epoch: outcome.best_epoch,
        epochs,
        param_count: outcome.params.count_params(),
        module_count: outcome.params.modules(),
        stop: outcome.stop.clone(),
    };
    write_json(&dir.join("summary.json"), &summary)?;
    Ok(summary)
}

/// Worker count from `MSLMN_THREADS`; 1 when unset or invalid.
pub fn thread_budget() -> usize {
    std::env::var("MSLMN_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or(1)
}

/// Runs every seed into `out/seed-<n>/` and writes the aggregate
/// `out/summary.json`. Seeds run on up to `threads` workers. Returns an
/// `Aborted` error after writing outputs if any run aborted.
pub fn run_experiment(config: &ExperimentConfig, out: &Path, threads: usize, quiet: bool) -> Result<ExperimentSummary> {
    config.validate()?;
    let data = config.task.build()?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let seeds = &config.seeds;
    let results: Mutex<Vec<Option<Result<RunSummary>>>> = Mutex::new((0..seeds.len()).map(|_| None).collect());
    let next = AtomicUsize::new(0);
    let workers = threads.clamp(1, seeds.len());
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= seeds.len() {
                    break;
                }
                let dir: PathBuf = out.join(format!("seed-{}", seeds[i]));
                let r = run_seed(config, &data, seeds[i], &dir, quiet);
                results.lock().expect("no worker panicked")[i] = Some(r);
            });
        }
    });
    let runs: Vec<RunSummary> = results
        .into_inner()
        .expect("no worker panicked")
        .into_iter()
        .map(|r| r.expect("every seed ran"))
        .collect::<Result<_>>()?;
    let finals: Vec<f64> = runs.iter().map(|r| r.final_metric).collect();
    let bests: Vec<f64> = runs.iter().map(|r| r.best_metric).collect();
    let summary = ExperimentSummary {
        metric_name: metric_name(data.kind).into(),
        final_metric: MeanStd::of(&finals),
        best_metric: MeanStd::of(&bests),
        runs,
    };
    write_json(&out.join("summary.json"), &summary)?;
    if let Some(r) = summary.runs.iter().find(|r| matches!(r.stop, StopReason::Aborted(_))) {
        let StopReason::Aborted(msg) = &r.stop else {
            unreachable!()
        };
        return Err(Error::Aborted(format!("seed {}: {msg}", r.seed)));
    }
    Ok(summary)
}
