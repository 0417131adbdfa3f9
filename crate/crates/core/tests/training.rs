use wlatt::data::{generate_synthetic, Dataset, SynthConfig};
use wlatt::model::load_weights_file;
use wlatt::nn::Parameterized;
use wlatt::train::{evaluate_model, fit, save_checkpoint, EpochRecord, TrainConfig};
use wlatt::Error;

fn small_split(seed: u64) -> (Dataset, Dataset) {
    let cfg = SynthConfig {
        n_samples: 160,
        seed,
        ..SynthConfig::default()
    };
    let mut samples = generate_synthetic(&cfg).unwrap().samples;
    let valid = samples.split_off(120);
    (
        Dataset::new(cfg.frames, cfg.feature_dim, cfg.n_classes, samples),
        Dataset::new(cfg.frames, cfg.feature_dim, cfg.n_classes, valid),
    )
}

fn small_cfg() -> TrainConfig {
    TrainConfig {
        arch: "2-A-1-A".into(),
        hidden_units: 16,
        batch_size: 32,
        epochs: 6,
        seed: 11,
        ..TrainConfig::default()
    }
}

fn train_logged(cfg: &TrainConfig) -> (wlatt::train::TrainOutcome, String) {
    let (train, valid) = small_split(1);
    let model = cfg.build_model(32, 8).unwrap();
    let mut log = Vec::new();
    let out = fit(model, &train, Some(&valid), cfg, &mut log).unwrap();
    (out, String::from_utf8(log).unwrap())
}

#[test]
fn identical_runs_write_identical_logs() {
    let (a, log_a) = train_logged(&small_cfg());
    let (b, log_b) = train_logged(&small_cfg());
    assert_eq!(log_a, log_b);
    assert_eq!(a.final_model.flat_params(), b.final_model.flat_params());
    let other = TrainConfig {
        seed: 12,
        ..small_cfg()
    };
    assert_ne!(train_logged(&other).1, log_a);
}

#[test]
fn log_lines_have_fixed_field_order() {
    let (out, log) = train_logged(&small_cfg());
    let lines: Vec<&str> = log.lines().collect();
    assert_eq!(lines.len(), out.records.len());
    let keys = [
        "\"epoch\"",
        "\"step\"",
        "\"train_loss\"",
        "\"valid_mAP\"",
        "\"valid_AUC\"",
        "\"valid_dprime\"",
    ];
    for (line, record) in lines.iter().zip(&out.records) {
        let positions: Vec<usize> = keys.iter().map(|k| line.find(k).unwrap()).collect();
        assert!(positions.windows(2).all(|w| w[0] < w[1]), "{line}");
        let parsed: EpochRecord = serde_json::from_str(line).unwrap();
        assert_eq!(&parsed, record);
    }
    // 120 clips in batches of 32: 4 steps per epoch
    assert_eq!(out.records[2].step, 12);
}

#[test]
fn zero_learning_rate_changes_nothing() {
    let cfg = TrainConfig {
        lr: 0.0,
        ..small_cfg()
    };
    let initial = cfg.build_model(32, 8).unwrap();
    let (out, _) = train_logged(&cfg);
    assert_eq!(out.final_model.flat_params(), initial.flat_params());
    assert_eq!(out.final_model.blocks, initial.blocks);
    let first = &out.records[0];
    for r in &out.records {
        assert_eq!(r.valid_map, first.valid_map);
        assert_eq!(r.valid_auc, first.valid_auc);
        assert_eq!(r.valid_dprime, first.valid_dprime);
    }
}

#[test]
fn training_reduces_the_loss() {
    let cfg = TrainConfig {
        epochs: 15,
        ..small_cfg()
    };
    let (out, _) = train_logged(&cfg);
    let first = out.records.first().unwrap().train_loss;
    let last = out.records.last().unwrap().train_loss;
    assert!(last < first, "{first} -> {last}");
}

#[test]
fn evaluation_cadence_and_best_checkpoint() {
    let cfg = TrainConfig {
        eval_every: 2,
        epochs: 5,
        ..small_cfg()
    };
    let (out, _) = train_logged(&cfg);
    let evaluated: Vec<usize> = out
        .records
        .iter()
        .filter(|r| r.valid_map.is_some())
        .map(|r| r.epoch)
        .collect();
    assert_eq!(evaluated, vec![2, 4, 5]);
    let best = out
        .records
        .iter()
        .filter_map(|r| r.valid_map)
        .fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(out.best_report.as_ref().unwrap().map, best);
    let (_, valid) = small_split(1);
    assert_eq!(evaluate_model(&out.best, &valid).unwrap().map, best);
}

#[test]
fn early_stopping_counts_evaluations() {
    // with lr = 0 the first evaluation is never beaten
    let cfg = TrainConfig {
        lr: 0.0,
        early_stop_patience: 2,
        epochs: 20,
        ..small_cfg()
    };
    let (out, _) = train_logged(&cfg);
    assert!(out.stopped_early);
    assert_eq!(out.records.len(), 3);
    assert_eq!(out.best_epoch, 1);
}

#[test]
fn invalid_configurations_are_rejected() {
    let (train, valid) = small_split(1);
    let model = small_cfg().build_model(32, 8).unwrap();
    for cfg in [
        TrainConfig {
            batch_size: 1,
            ..small_cfg()
        },
        TrainConfig {
            lr: -0.1,
            ..small_cfg()
        },
        TrainConfig {
            lr: f64::NAN,
            ..small_cfg()
        },
        TrainConfig {
            eval_every: 0,
            ..small_cfg()
        },
    ] {
        let err = fit(
            model.clone(),
            &train,
            Some(&valid),
            &cfg,
            &mut std::io::sink(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::InvalidConfig(_)), "{err}");
    }
    let other_arch = TrainConfig {
        arch: "3-A".into(),
        ..small_cfg()
    };
    assert!(matches!(
        fit(
            model.clone(),
            &train,
            Some(&valid),
            &other_arch,
            &mut std::io::sink()
        ),
        Err(Error::SpecMismatch { .. })
    ));
    let narrow = Dataset::new(10, 16, 8, Vec::new());
    assert!(matches!(
        fit(
            model.clone(),
            &narrow,
            None,
            &small_cfg(),
            &mut std::io::sink()
        ),
        Err(Error::Shape { .. })
    ));
    let fewer_classes = Dataset::new(10, 32, 4, valid.samples.clone());
    assert!(fit(
        model,
        &train,
        Some(&fewer_classes),
        &small_cfg(),
        &mut std::io::sink()
    )
    .is_err());
}

#[test]
fn checkpoint_holds_weights_and_metrics() {
    let (out, _) = train_logged(&small_cfg());
    let dir = std::env::temp_dir().join(format!("wlatt-ckpt-{}", std::process::id()));
    save_checkpoint(&dir, &out).unwrap();
    let loaded = load_weights_file(dir.join("model.wlam"), "2-A-1-A", None, 8, 32).unwrap();
    assert_eq!(loaded.flat_params(), out.best.flat_params());
    let metrics: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics["epoch"], out.best_epoch);
    assert_eq!(
        metrics["report"]["map"],
        out.best_report.as_ref().unwrap().map
    );
    std::fs::remove_dir_all(dir).unwrap();
}
