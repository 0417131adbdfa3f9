//! End-to-end training on synthetic bags with a stronger event signal.

use wlatt::data::{generate_synthetic, Dataset, SynthConfig};
use wlatt::train::{fit, TrainConfig};

const MAP_TARGET: f64 = 0.90;

#[test]
fn two_level_model_learns_strong_events() {
    let cfg = SynthConfig {
        n_samples: 2500,
        signal_scale: 4.0,
        ..SynthConfig::default()
    };
    let mut train = generate_synthetic(&cfg).unwrap().samples;
    let valid = train.split_off(2000);
    let dims = (cfg.frames, cfg.feature_dim, cfg.n_classes);
    let train = Dataset::new(dims.0, dims.1, dims.2, train);
    let valid = Dataset::new(dims.0, dims.1, dims.2, valid);

    let train_cfg = TrainConfig {
        arch: "2-A-1-A".into(),
        hidden_units: 64,
        batch_size: 50,
        epochs: 50,
        ..TrainConfig::default()
    };
    let model = train_cfg.build_model(dims.1, dims.2).unwrap();
    let out = fit(
        model,
        &train,
        Some(&valid),
        &train_cfg,
        &mut std::io::sink(),
    )
    .unwrap();
    let map = out.best_report.unwrap().map;
    println!(
        "alpha=4: best valid mAP {map:.4} at epoch {}",
        out.best_epoch
    );
    assert!(map >= MAP_TARGET, "{map}");
}
