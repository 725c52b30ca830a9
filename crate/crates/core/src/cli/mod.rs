//! Experiment runner: configuration, checkpoints and subcommands.

pub mod checkpoint;
pub mod config;
pub mod runner;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::laes::{fit_laes, LaesModel};
use crate::mslmn::mslmn_forward;
use crate::numerics::Matrix;
use crate::tasks::{read_feature_csv, TaskKind};
use crate::training::evaluate;

pub use checkpoint::{Checkpoint, CheckpointArch, RngState, FORMAT_VERSION};
pub use config::{ExperimentConfig, Mode, TaskSpec};
pub use runner::{
    fmt_real, metrics_row, run_experiment, run_seed, thread_budget, ExperimentSummary, MeanStd, RunSummary,
    METRICS_HEADER,
};

fn out_err(e: std::io::Error) -> Error {
    Error::io("<stdout>", e)
}

/// Output directory: explicit flag, then the config's `output_dir`, then
/// `runs/<config file stem>`.
pub fn resolve_out_dir(config_path: &Path, config: &ExperimentConfig, flag: Option<&Path>) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    if let Some(p) = &config.output_dir {
        return p.clone();
    }
    let stem = config_path
        .file_stem()
        .map_or_else(|| "experiment".into(), |s| s.to_string_lossy().into_owned());
    PathBuf::from("runs").join(stem)
}

/// `train`: runs every configured seed and writes metrics, checkpoints and summaries.
pub fn cmd_train(
    config_path: &Path,
    out: Option<&Path>,
    seed: Option<u64>,
    threads: usize,
    quiet: bool,
    w: &mut dyn Write,
) -> Result<ExperimentSummary> {
    let mut config = ExperimentConfig::load(config_path)?;
    if let Some(s) = seed {
        config.seeds = vec![s];
    }
    let dir = resolve_out_dir(config_path, &config, out);
    let result = run_experiment(&config, &dir, threads, quiet);
    if let Ok(summary) = &result {
        writeln!(
            w,
            "{} final {} (std {}), best {} (std {}) over {} run(s); outputs in {}",
            summary.metric_name,
            fmt_real(summary.final_metric.mean),
            fmt_real(summary.final_metric.std),
            fmt_real(summary.best_metric.mean),
            fmt_real(summary.best_metric.std),
            summary.runs.len(),
            dir.display()
        )
        .map_err(out_err)?;
    }
    result
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub checkpoint: PathBuf,
    pub metric_name: String,
    pub metric: f64,
    pub loss: f64,
    pub items: usize,
}

/// `eval`: scores a checkpoint on the test split of a configured dataset and
/// writes `eval.json` (next to the checkpoint unless `out` is given).
pub fn cmd_eval(checkpoint: &Path, config_path: &Path, out: Option<&Path>, w: &mut dyn Write) -> Result<EvalReport> {
    let ck = Checkpoint::load(checkpoint)?;
    let config = ExperimentConfig::load(config_path)?;
    let data = config.task.build()?;
    let dims = ck.architecture.dims;
    if dims.input != data.input_size() || dims.output != data.output_size() {
        return Err(Error::dim(format!(
            "checkpoint maps {} -> {} features, dataset has {} -> {}",
            dims.input,
            dims.output,
            data.input_size(),
            data.output_size()
        )));
    }
    if ck.task_kind != data.kind {
        return Err(Error::Mode(format!(
            "checkpoint is a {:?} model, dataset is {:?}",
            ck.task_kind, data.kind
        )));
    }
    let test = data.test();
    let e = evaluate(&ck.weights, &test, data.kind)?;
    let report = EvalReport {
        checkpoint: checkpoint.to_path_buf(),
        metric_name: runner::metric_name(data.kind).into(),
        metric: e.metric,
        loss: e.loss,
        items: test.len(),
    };
    let dir = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| checkpoint.parent().unwrap_or(Path::new(".")).to_path_buf());
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let path = dir.join("eval.json");
    fs::write(&path, serde_json::to_string_pretty(&report)? + "\n").map_err(|e| Error::io(&path, e))?;
    writeln!(w, "{} {}", report.metric_name, fmt_real(report.metric)).map_err(out_err)?;
    Ok(report)
}

/// Target rows for generation, when the checkpoint names a generation task
/// long enough to cover `n` steps.
fn generation_target(ck: &Checkpoint, n: usize) -> Option<Matrix> {
    let task @ TaskSpec::Generation { length, .. } = ck.task.as_ref()? else {
        return None;
    };
    if n > *length {
        return None;
    }
    let data = task.build().ok()?;
    data.target_signal().map(|t| t.row_range(0, n))
}

/// `generate`: runs a regression checkpoint on `n` zero inputs and writes
/// `generated.csv` with columns `t`, the target (when known) and the output.
pub fn cmd_generate(checkpoint: &Path, n: usize, out: Option<&Path>, w: &mut dyn Write) -> Result<PathBuf> {
    let ck = Checkpoint::load(checkpoint)?;
    if ck.task_kind != TaskKind::Regression {
        return Err(Error::Mode("generation needs a regression checkpoint".into()));
    }
    let dims = ck.architecture.dims;
    let output = mslmn_forward(&ck.weights, &Matrix::zeros(n, dims.input))?.output;
    let target = generation_target(&ck, n).filter(|t| t.cols() == dims.output);

    let names = |prefix: &str| -> Vec<String> {
        if dims.output == 1 {
            vec![prefix.to_string()]
        } else {
            (0..dims.output).map(|j| format!("{prefix}_{j}")).collect()
        }
    };
    let mut header = vec!["t".to_string()];
    if target.is_some() {
        header.extend(names("target"));
    }
    header.extend(names("output"));
    let mut text = header.join(",") + "\n";
    for t in 0..n {
        let mut row = vec![(t + 1).to_string()];
        if let Some(tg) = &target {
            row.extend(tg.row(t).iter().map(|&v| fmt_real(v)));
        }
        row.extend(output.row(t).iter().map(|&v| fmt_real(v)));
        text.push_str(&row.join(","));
        text.push('\n');
    }
    let dir = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| checkpoint.parent().unwrap_or(Path::new(".")).to_path_buf());
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let path = dir.join("generated.csv");
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    writeln!(w, "wrote {n} steps to {}", path.display()).map_err(out_err)?;
    Ok(path)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LaesFile {
    pub state_size: usize,
    pub input_size: usize,
    pub model: LaesModel,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LaesReport {
    pub files: Vec<PathBuf>,
    pub errors: Vec<f64>,
}

impl LaesReport {
    pub fn max_error(&self) -> f64 {
        self.errors.iter().copied().fold(0.0, f64::max)
    }
}

/// `laes-fit`: fits the autoencoder on feature-CSV sequences and writes
/// `laes.json` plus `report.csv` with the per-sequence reconstruction error.
pub fn cmd_laes_fit(files: &[PathBuf], p: usize, slices: bool, out: &Path, w: &mut dyn Write) -> Result<LaesReport> {
    if files.is_empty() {
        return Err(Error::EmptyInput("no sequence files given".into()));
    }
    let seqs = files.iter().map(|f| read_feature_csv(f)).collect::<Result<Vec<_>>>()?;
    let model = fit_laes(&seqs, p, slices)?;
    let errors = seqs
        .iter()
        .map(|s| model.reconstruction_error(s))
        .collect::<Result<Vec<_>>>()?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let file = LaesFile {
        state_size: model.state_size(),
        input_size: model.input_size(),
        model,
    };
    let mpath = out.join("laes.json");
    fs::write(&mpath, serde_json::to_string_pretty(&file)? + "\n").map_err(|e| Error::io(&mpath, e))?;
    let mut csv = String::from("file,length,max_abs_error\n");
    for ((f, s), e) in files.iter().zip(&seqs).zip(&errors) {
        csv.push_str(&format!("{},{},{}\n", f.display(), s.rows(), fmt_real(*e)));
        writeln!(w, "{}: length {} max error {:.3e}", f.display(), s.rows(), e).map_err(out_err)?;
    }
    let rpath = out.join("report.csv");
    fs::write(&rpath, csv).map_err(|e| Error::io(&rpath, e))?;
    Ok(LaesReport {
        files: files.to_vec(),
        errors,
    })
}

/// `inspect`: prints the architecture and parameter count of a checkpoint.
pub fn cmd_inspect(checkpoint: &Path, w: &mut dyn Write) -> Result<()> {
    let ck = Checkpoint::load(checkpoint)?;
    let a = &ck.architecture;
    let d = a.dims;
    let mut lines = vec![
        format!("format version  {}", ck.format_version),
        format!("task            {:?}", ck.task_kind),
        format!("epoch           {}", ck.epoch),
        format!("input           {}", d.input),
        format!("hidden          {}", d.hidden),
        format!("memory/module   {}", d.memory),
        format!("modules         {}", d.modules),
        format!("clock periods   {:?}", a.rates),
        format!("output          {}", d.output),
        format!("hidden bias     {}", a.hidden_bias),
        format!("parameters      {}", ck.weights.count_params()),
        format!("optimizer state {}", if ck.optimizer.is_some() { "yes" } else { "no" }),
    ];
    for (name, b) in ck.weights.block_names().iter().zip(ck.weights.blocks()) {
        lines.push(format!("  {name:<12} {}x{}", b.rows(), b.cols()));
    }
    writeln!(w, "{}", lines.join("\n")).map_err(out_err)
}
