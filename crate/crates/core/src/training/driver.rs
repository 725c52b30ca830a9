//! Training loops: plain SGD on a fixed architecture, and incremental
//! training that grows the memory one module at a time.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::laes::fit_laes_with;
use crate::mslmn::{mslmn_forward, Dims, MsLmnParams};
use crate::numerics::Matrix;
use crate::tasks::{Item, SequenceDataset, Target, TaskKind};
use crate::training::adam::{adam_step, AdamState};
use crate::training::bptt::{batch_loss, bptt_gradients};
use crate::training::config::{Architecture, TrainConfig};
use crate::training::loss::{argmax, nmse_slices, LossKind};
use crate::training::readout::{collect_subsampled_hidden, fit_readout};

/// One row of the per-epoch metrics log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    /// 1-based.
    pub epoch: usize,
    pub module_count: usize,
    /// Mean batch loss over the epoch, measured before each update.
    pub train_loss: f64,
    pub val_loss: f64,
    /// NMSE for regression, accuracy in `[0, 1]` for classification.
    pub metric: f64,
    pub wall_time_ms: u64,
}

/// Loss and task metric of a model on a set of items.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub loss: f64,
    pub metric: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "status", content = "reason")]
pub enum StopReason {
    Completed,
    EarlyStopped,
    Aborted(String),
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters after the last successful epoch.
    pub params: MsLmnParams,
    /// Parameters with the lowest validation loss.
    pub best_params: MsLmnParams,
    /// 0 when no epoch ran.
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub records: Vec<MetricsRecord>,
    pub stop: StopReason,
    pub adam: AdamState,
    pub rng: ChaCha8Rng,
}

/// Called after every epoch.
pub type Observer<'a> = &'a mut dyn FnMut(&MetricsRecord);

/// Loss and metric on `items`. Regression NMSE pools every step of every item.
pub fn evaluate(params: &MsLmnParams, items: &[&Item], kind: TaskKind) -> Result<Evaluation> {
    if items.is_empty() {
        return Err(Error::EmptyInput("no items to evaluate".into()));
    }
    let loss = batch_loss(params, items, LossKind::for_task(kind))?;
    let metric = match kind {
        TaskKind::Regression => {
            let mut pred = Vec::new();
            let mut target = Vec::new();
            for item in items {
                let Target::Sequence(t) = &item.target else {
                    return Err(Error::Input("classification item in regression set".into()));
                };
                pred.extend_from_slice(mslmn_forward(params, &item.input)?.output.as_slice());
                target.extend_from_slice(t.as_slice());
            }
            nmse_slices(&pred, &target)?
        }
        TaskKind::Classification => {
            let mut correct = 0usize;
            for item in items {
                let Target::Class(c) = item.target else {
                    return Err(Error::Input("regression item in classification set".into()));
                };
                let out = mslmn_forward(params, &item.input)?.output;
                if out.rows() > 0 && argmax(out.row(out.rows() - 1)) == c {
                    correct += 1;
                }
            }
            correct as f64 / items.len() as f64
        }
    };
    Ok(Evaluation { loss, metric })
}

/// Index batches for one epoch. When the batch size equals the class count,
/// each batch holds one item per class (shorter classes wrap around).
fn epoch_batches(data: &SequenceDataset, batch_size: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let train = &data.splits.train;
    if data.kind == TaskKind::Classification && batch_size == data.num_classes {
        let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); data.num_classes];
        for &i in train {
            if let Target::Class(c) = data.items[i].target {
                by_class[c].push(i);
            }
        }
        by_class.retain(|v| !v.is_empty());
        for v in by_class.iter_mut() {
            v.shuffle(rng);
        }
        let rounds = by_class.iter().map(Vec::len).max().unwrap_or(0);
        return (0..rounds)
            .map(|b| by_class.iter().map(|v| v[b % v.len()]).collect())
            .collect();
    }
    let mut order = train.clone();
    order.shuffle(rng);
    order.chunks(batch_size).map(<[usize]>::to_vec).collect()
}

fn with_noise(item: &Item, std: f64, rng: &mut ChaCha8Rng) -> Item {
    let mut input = item.input.clone();
    for v in input.as_mut_slice() {
        *v += std * rng.sample::<f64, _>(StandardNormal);
    }
    Item {
        input,
        target: item.target.clone(),
    }
}

enum Flow {
    Continue,
    EarlyStop,
    Abort(String),
}

struct Run<'a, 'o> {
    data: &'a SequenceDataset,
    config: &'a TrainConfig,
    loss: LossKind,
    params: MsLmnParams,
    adam: AdamState,
    rng: ChaCha8Rng,
    best: Option<(MsLmnParams, usize, f64)>,
    since_best: usize,
    epoch: usize,
    records: Vec<MetricsRecord>,
    start: Instant,
    observer: Option<Observer<'o>>,
}

impl<'a, 'o> Run<'a, 'o> {
    fn new(
        data: &'a SequenceDataset,
        config: &'a TrainConfig,
        params: MsLmnParams,
        rng: ChaCha8Rng,
        observer: Option<Observer<'o>>,
    ) -> Result<Self> {
        config.validate()?;
        if data.splits.train.is_empty() {
            return Err(Error::EmptyInput("dataset has no training items".into()));
        }
        if params.input_size() != data.input_size() || params.output_size() != data.output_size() {
            return Err(Error::dim(format!(
                "model maps {} -> {}, data needs {} -> {}",
                params.input_size(),
                params.output_size(),
                data.input_size(),
                data.output_size()
            )));
        }
        params.validate()?;
        Ok(Run {
            data,
            config,
            loss: LossKind::for_task(data.kind),
            adam: AdamState::new(&params),
            params,
            rng,
            best: None,
            since_best: 0,
            epoch: 0,
            records: Vec::new(),
            start: Instant::now(),
            observer,
        })
    }

    fn epoch(&mut self) -> Result<Flow> {
        let batches = epoch_batches(self.data, self.config.batch_size, &mut self.rng);
        let mut params = self.params.clone();
        let mut adam = self.adam.clone();
        let mut loss_sum = 0.0;
        let mut count = 0usize;
        for batch in &batches {
            let noisy: Vec<Item>;
            let refs: Vec<&Item> = if self.config.noise_std > 0.0 {
                noisy = batch
                    .iter()
                    .map(|&i| with_noise(&self.data.items[i], self.config.noise_std, &mut self.rng))
                    .collect();
                noisy.iter().collect()
            } else {
                batch.iter().map(|&i| &self.data.items[i]).collect()
            };
            let mut g = bptt_gradients(&params, &refs, self.loss)?;
            if !g.loss.is_finite() {
                return Ok(Flow::Abort(format!(
                    "non-finite training loss at epoch {}",
                    self.epoch + 1
                )));
            }
            if let Some(c) = self.config.clip_norm {
                g.clip(c);
            }
            loss_sum += g.loss * batch.len() as f64;
            count += batch.len();
            adam_step(
                &mut params,
                &g.grads,
                &mut adam,
                self.config.learning_rate,
                self.config.l2_decay,
            )?;
        }
        if !params.is_finite() {
            return Ok(Flow::Abort(format!("non-finite weights at epoch {}", self.epoch + 1)));
        }
        let eval = evaluate(&params, &self.data.val(), self.data.kind);
        let eval = match eval {
            Ok(e) if e.loss.is_finite() && e.metric.is_finite() => e,
            Ok(_) => {
                return Ok(Flow::Abort(format!(
                    "non-finite validation loss at epoch {}",
                    self.epoch + 1
                )))
            }
            Err(e) => return Err(e),
        };
        self.params = params;
        self.adam = adam;
        self.epoch += 1;
        let record = MetricsRecord {
            epoch: self.epoch,
            module_count: self.params.modules(),
            train_loss: loss_sum / count.max(1) as f64,
            val_loss: eval.loss,
            metric: eval.metric,
            wall_time_ms: if self.config.record_wall_time {
                self.start.elapsed().as_millis() as u64
            } else {
                0
            },
        };
        if let Some(obs) = self.observer.as_mut() {
            obs(&record);
        }
        self.records.push(record);

        let improved = self.best.as_ref().is_none_or(|(_, _, best)| eval.loss < *best);
        if improved {
            self.best = Some((self.params.clone(), self.epoch, eval.loss));
            self.since_best = 0;
        } else {
            self.since_best += 1;
        }
        if self.config.patience > 0 && self.since_best >= self.config.patience {
            return Ok(Flow::EarlyStop);
        }
        Ok(Flow::Continue)
    }

    /// Runs up to `epochs` epochs; `None` means the phase finished normally.
    fn phase(&mut self, epochs: usize) -> Result<Option<StopReason>> {
        for _ in 0..epochs {
            match self.epoch()? {
                Flow::Continue => {}
                Flow::EarlyStop => return Ok(Some(StopReason::EarlyStopped)),
                Flow::Abort(msg) => {
                    log::warn!("{msg}");
                    return Ok(Some(StopReason::Aborted(msg)));
                }
            }
        }
        Ok(None)
    }

    fn finish(self, stop: StopReason) -> TrainOutcome {
        let (best_params, best_epoch, best_val_loss) =
            self.best.unwrap_or_else(|| (self.params.clone(), 0, f64::INFINITY));
        TrainOutcome {
            params: self.params,
            best_params,
            best_epoch,
            best_val_loss,
            records: self.records,
            stop,
            adam: self.adam,
            rng: self.rng,
        }
    }
}

/// Plain Adam training of a fixed architecture for `max_epochs` epochs or
/// until early stopping. Non-finite losses abort the run and keep the last
/// good parameters.
pub fn train_fixed(
    data: &SequenceDataset,
    params: MsLmnParams,
    config: &TrainConfig,
    observer: Option<Observer<'_>>,
) -> Result<TrainOutcome> {
    let rng = ChaCha8Rng::seed_from_u64(config.seed);
    train_fixed_with_rng(data, params, config, rng, observer)
}

/// As [`train_fixed`], continuing from an existing random stream.
pub fn train_fixed_with_rng(
    data: &SequenceDataset,
    params: MsLmnParams,
    config: &TrainConfig,
    rng: ChaCha8Rng,
    observer: Option<Observer<'_>>,
) -> Result<TrainOutcome> {
    let mut run = Run::new(data, config, params, rng, observer)?;
    let stop = run.phase(config.max_epochs)?.unwrap_or(StopReason::Completed);
    Ok(run.finish(stop))
}

/// Randomly initialized model for `arch` on `data`, drawn from `rng`.
pub fn init_params(data: &SequenceDataset, arch: &Architecture, modules: usize, rng: &mut ChaCha8Rng) -> MsLmnParams {
    let dims = Dims {
        input: data.input_size(),
        hidden: arch.hidden,
        memory: arch.memory,
        output: data.output_size(),
        modules,
    };
    MsLmnParams::random(dims, arch.hidden_bias, rng)
}

fn pad(m: &Matrix, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(
        rows,
        cols,
        |r, c| {
            if r < m.rows() && c < m.cols() {
                m[(r, c)]
            } else {
                0.0
            }
        },
    )
}

/// Adds one slower module initialized from an autoencoder fit of the hidden
/// states subsampled at the new module's rate, then optionally refits every
/// readout block. Falls back to a zero-initialized module when no training
/// sequence is long enough to reach the new rate.
pub fn grow(params: &MsLmnParams, data: &SequenceDataset, config: &TrainConfig) -> Result<MsLmnParams> {
    let g = params.modules();
    let n_m = params.memory_size();
    let n_h = params.hidden_size();
    let train = data.train();
    let p_req = config.laes_state_size.unwrap_or(n_m);
    if p_req > n_m {
        return Err(Error::Config(format!(
            "laes_state_size {p_req} exceeds the module size {n_m}"
        )));
    }
    let collected: Vec<Matrix> = collect_subsampled_hidden(params, &train, g)?
        .into_iter()
        .filter(|h| h.rows() > 0)
        .collect();
    let (a, b) = if collected.is_empty() {
        log::info!(
            "no training sequence reaches step {}; module {} starts at zero",
            1usize << g,
            g + 1
        );
        (Matrix::zeros(n_m, n_h), Matrix::zeros(n_m, n_m))
    } else {
        let rows: usize = collected.iter().map(Matrix::rows).sum();
        let longest = collected.iter().map(Matrix::rows).max().unwrap_or(0);
        let p = p_req.min(rows).min(longest * n_h);
        let laes = fit_laes_with(&collected, p, config.svd_method())?;
        (pad(&laes.encoder_input, n_m, n_h), pad(&laes.encoder_state, n_m, n_m))
    };
    let mut next = params.add_module(&a, &b, None)?;
    if config.refit_readout {
        let readout = fit_readout(&next, &train, data.kind, config.readout_ridge)?;
        next.set_readout(readout)?;
    }
    Ok(next)
}

/// Incremental training: start from one randomly initialized module and add
/// a module every `module_add_period` epochs, up to `arch.modules`, fine-tuning
/// the whole model in between. Optimizer moments restart after each addition;
/// early stopping patience carries over.
pub fn incremental_train(
    data: &SequenceDataset,
    arch: &Architecture,
    config: &TrainConfig,
    observer: Option<Observer<'_>>,
) -> Result<TrainOutcome> {
    arch.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let params = init_params(data, arch, 1, &mut rng);
    let mut run = Run::new(data, config, params, rng, observer)?;
    for i in 0..arch.modules {
        let remaining = config.max_epochs - run.epoch;
        if i > 0 {
            if remaining == 0 {
                break;
            }
            run.params = grow(&run.params, data, config)?;
            run.adam = AdamState::new(&run.params);
        }
        let epochs = if i + 1 == arch.modules {
            remaining
        } else {
            config.module_add_period.min(remaining)
        };
        if let Some(stop) = run.phase(epochs)? {
            return Ok(run.finish(stop));
        }
    }
    Ok(run.finish(StopReason::Completed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tasks::{make_common_suffix_task, CommonSuffixSpec, Splits};

    fn regression_data(l: usize) -> SequenceDataset {
        let input = Matrix::from_fn(l, 1, |t, _| (t as f64 * 0.3).sin());
        let target = Matrix::from_fn(l, 1, |t, _| (t as f64 * 0.3 + 0.5).cos() * 0.5);
        SequenceDataset::new(
            vec![Item {
                input,
                target: Target::Sequence(target),
            }],
            TaskKind::Regression,
            Splits {
                train: vec![0],
                val: vec![0],
                test: vec![0],
            },
            0,
        )
        .unwrap()
    }

    fn arch(modules: usize) -> Architecture {
        Architecture {
            hidden: 3,
            memory: 2,
            modules,
            hidden_bias: false,
        }
    }

    fn quiet(config: TrainConfig) -> TrainConfig {
        TrainConfig {
            record_wall_time: false,
            ..config
        }
    }

    #[test]
    fn zero_learning_rate_keeps_params() {
        let data = regression_data(20);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = init_params(&data, &arch(1), 1, &mut rng);
        let cfg = quiet(TrainConfig {
            learning_rate: 0.0,
            max_epochs: 5,
            ..Default::default()
        });
        let out = train_fixed(&data, p.clone(), &cfg, None).unwrap();
        assert_eq!(out.params, p);
        assert_eq!(out.records.len(), 5);
    }

    #[test]
    fn training_reduces_loss() {
        let data = regression_data(20);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = init_params(&data, &arch(1), 1, &mut rng);
        let before = evaluate(&p, &data.train(), data.kind).unwrap().loss;
        let cfg = quiet(TrainConfig {
            learning_rate: 0.01,
            max_epochs: 50,
            ..Default::default()
        });
        let out = train_fixed(&data, p, &cfg, None).unwrap();
        let after = evaluate(&out.params, &data.train(), data.kind).unwrap().loss;
        assert!(after < before, "{after} !< {before}");
    }

    #[test]
    fn reproducible_traces() {
        let data = make_common_suffix_task(&CommonSuffixSpec::new(3, 7, 3, 4, 5)).unwrap();
        let cfg = quiet(TrainConfig {
            learning_rate: 0.01,
            max_epochs: 4,
            batch_size: 3,
            noise_std: 0.6,
            seed: 9,
            ..Default::default()
        });
        let run = || {
            incremental_train(
                &data,
                &arch(2),
                &TrainConfig {
                    module_add_period: 2,
                    ..cfg.clone()
                },
                None,
            )
            .unwrap()
            .records
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn module_schedule() {
        let data = regression_data(16);
        let cfg = quiet(TrainConfig {
            learning_rate: 0.01,
            max_epochs: 16,
            module_add_period: 5,
            ..Default::default()
        });
        let mut seen = Vec::new();
        let mut obs = |r: &MetricsRecord| seen.push(r.module_count);
        let out = incremental_train(&data, &arch(3), &cfg, Some(&mut obs)).unwrap();
        assert_eq!(out.stop, StopReason::Completed);
        let counts: Vec<usize> = out.records.iter().map(|r| r.module_count).collect();
        assert_eq!(counts, seen);
        assert_eq!(counts[..5], [1; 5]);
        assert_eq!(counts[5..10], [2; 5]);
        assert_eq!(counts[10..], [3; 6]);
    }

    #[test]
    fn early_stopping_halts_growth() {
        let data = regression_data(16);
        let cfg = quiet(TrainConfig {
            learning_rate: 0.0,
            max_epochs: 50,
            module_add_period: 5,
            patience: 3,
            ..Default::default()
        });
        let out = incremental_train(&data, &arch(4), &cfg, None).unwrap();
        assert_eq!(out.stop, StopReason::EarlyStopped);
        assert!(out.records.len() < 50);
    }

    #[test]
    fn balanced_batches_hold_one_item_per_class() {
        let data = make_common_suffix_task(&CommonSuffixSpec::new(5, 7, 2, 2, 0)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let batches = epoch_batches(&data, 5, &mut rng);
        assert_eq!(batches.len(), 5);
        for b in &batches {
            let mut classes: Vec<usize> = b
                .iter()
                .map(|&i| match data.items[i].target {
                    Target::Class(c) => c,
                    _ => unreachable!(),
                })
                .collect();
            classes.sort();
            assert_eq!(classes, vec![0, 1, 2, 3, 4]);
        }
    }

    #[test]
    fn grow_with_short_sequences_adds_zero_module() {
        let data = regression_data(3);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = init_params(&data, &arch(3), 2, &mut rng);
        let cfg = TrainConfig {
            refit_readout: false,
            ..Default::default()
        };
        let q = grow(&p, &data, &cfg).unwrap();
        assert_eq!(q.modules(), 3);
        assert_eq!(q.whm[2].max_abs(), 0.0);
        assert_eq!(q.wmm[2][0].max_abs(), 0.0);
    }
}
