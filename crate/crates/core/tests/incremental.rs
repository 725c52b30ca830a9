use mslmn::laes::LaesModel;
use mslmn::mslmn::{mslmn_forward, Dims, MsLmnParams};
use mslmn::numerics::Matrix;
use mslmn::tasks::{Item, SequenceDataset, Splits, Target, TaskKind};
use mslmn::training::{
    batch_loss, collect_subsampled_hidden, grow, incremental_train, init_params, train_fixed_with_rng, Architecture,
    LossKind, TrainConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn regression_data(lengths: &[usize], seed: u64) -> SequenceDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let items = lengths
        .iter()
        .map(|&l| Item {
            input: Matrix::from_fn(l, 2, |_, _| rng.random_range(-1.0..1.0)),
            target: Target::Sequence(Matrix::from_fn(l, 1, |_, _| rng.random_range(-1.0..1.0))),
        })
        .collect();
    let all: Vec<usize> = (0..lengths.len()).collect();
    SequenceDataset::new(
        items,
        TaskKind::Regression,
        Splits {
            train: all.clone(),
            val: all.clone(),
            test: all,
        },
        0,
    )
    .unwrap()
}

fn model(hidden: usize, memory: usize, modules: usize, seed: u64) -> MsLmnParams {
    let dims = Dims {
        input: 2,
        hidden,
        memory,
        output: 1,
        modules,
    };
    MsLmnParams::random(dims, false, &mut ChaCha8Rng::seed_from_u64(seed))
}

fn quiet() -> TrainConfig {
    TrainConfig {
        record_wall_time: false,
        ..Default::default()
    }
}

#[test]
fn growth_without_refit_leaves_the_loss_unchanged() {
    let data = regression_data(&[9, 14, 20], 1);
    let train = data.train();
    let p = model(3, 2, 2, 2);
    let cfg = TrainConfig {
        refit_readout: false,
        ..quiet()
    };
    let q = grow(&p, &data, &cfg).unwrap();
    assert_eq!(q.modules(), 3);
    let before = batch_loss(&p, &train, LossKind::StepMse).unwrap();
    let after = batch_loss(&q, &train, LossKind::StepMse).unwrap();
    assert_eq!(before, after);
    for item in &train {
        let a = mslmn_forward(&p, &item.input).unwrap();
        let b = mslmn_forward(&q, &item.input).unwrap();
        assert_eq!(a.hidden, b.hidden);
        assert_eq!(a.memory, b.memory.col_range(0, 4));
    }
}

#[test]
fn refit_never_increases_training_loss() {
    for seed in 0..8 {
        let data = regression_data(&[7, 12, 16, 21], 10 + seed);
        let train = data.train();
        let p = model(3, 2, 1 + seed as usize % 3, seed);
        let kept = grow(
            &p,
            &data,
            &TrainConfig {
                refit_readout: false,
                ..quiet()
            },
        )
        .unwrap();
        let refit = grow(&p, &data, &quiet()).unwrap();
        let a = batch_loss(&kept, &train, LossKind::StepMse).unwrap();
        let b = batch_loss(&refit, &train, LossKind::StepMse).unwrap();
        assert!(b <= a * (1.0 + 1e-12), "seed {seed}: refit {b} > kept {a}");
    }
}

/// Decodes the final state of the newest module and compares it with the
/// hidden states it was fitted on.
fn check_new_module_decodes(p: &MsLmnParams, data: &SequenceDataset, cfg: &TrainConfig) -> MsLmnParams {
    let g = p.modules();
    let n_m = p.memory_size();
    let train = data.train();
    let collected = collect_subsampled_hidden(p, &train, g).unwrap();
    let q = grow(p, data, cfg).unwrap();
    let a = q.whm[g].clone();
    let b = q.wmm[g][0].clone();
    let laes = LaesModel::new(a.clone(), b.clone(), a.transpose().vstack(&b.transpose()).unwrap()).unwrap();
    let rate = 1 << g;
    for (item, h) in train.iter().zip(&collected) {
        let count = item.len() / rate;
        if count == 0 {
            continue;
        }
        let memory = mslmn_forward(&q, &item.input).unwrap().memory;
        let m = &memory.row(count * rate - 1)[g * n_m..(g + 1) * n_m];
        let decoded = laes.reconstruct(m, count).unwrap();
        let err = decoded.max_abs_diff(h);
        assert!(err <= 1e-6, "module {} decode error {err:.2e}", g + 1);
    }
    q
}

#[test]
fn new_module_memory_decodes_subsampled_hidden_states() {
    // One hidden unit and short sequences keep the stacked data rank within
    // the module size, so the autoencoder fit is lossless.
    let data = regression_data(&[8, 6, 9], 3);
    let p = model(1, 4, 1, 4);
    let cfg = quiet();
    let q = check_new_module_decodes(&p, &data, &cfg);
    check_new_module_decodes(&q, &data, &cfg);

    let sliced = TrainConfig {
        laes_slices: true,
        ..quiet()
    };
    check_new_module_decodes(&p, &data, &sliced);
}

#[test]
fn short_sequences_give_a_zero_module() {
    let data = regression_data(&[3, 2], 5);
    let p = model(2, 2, 2, 6);
    let q = grow(&p, &data, &quiet()).unwrap();
    assert_eq!(q.whm[2].max_abs(), 0.0);
    assert_eq!(q.wmm[2][0].max_abs(), 0.0);
}

#[test]
fn single_module_run_matches_fixed_training() {
    let data = regression_data(&[10, 13], 7);
    let arch = Architecture {
        hidden: 3,
        memory: 2,
        modules: 1,
        hidden_bias: false,
    };
    let cfg = TrainConfig {
        max_epochs: 12,
        learning_rate: 0.01,
        seed: 11,
        ..quiet()
    };
    let inc = incremental_train(&data, &arch, &cfg, None).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let p = init_params(&data, &arch, 1, &mut rng);
    let fixed = train_fixed_with_rng(&data, p, &cfg, rng, None).unwrap();
    assert_eq!(inc.records, fixed.records);
    assert_eq!(inc.params, fixed.params);
    assert!(inc.records.iter().all(|r| r.module_count == 1));
}

#[test]
fn growth_stops_at_max_epochs() {
    let data = regression_data(&[10, 13], 8);
    let arch = Architecture {
        hidden: 3,
        memory: 2,
        modules: 5,
        hidden_bias: false,
    };
    let cfg = TrainConfig {
        max_epochs: 7,
        module_add_period: 3,
        learning_rate: 0.01,
        ..quiet()
    };
    let out = incremental_train(&data, &arch, &cfg, None).unwrap();
    let counts: Vec<usize> = out.records.iter().map(|r| r.module_count).collect();
    assert_eq!(counts, vec![1, 1, 1, 2, 2, 2, 3]);
    assert_eq!(out.params.modules(), 3);
}
