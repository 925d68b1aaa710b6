use padfree_core::train::{ScMode, TrainConfig, Trainer};

fn small(mode: ScMode, p: f64) -> TrainConfig {
    TrainConfig { batch: 2, sc_mode: mode, sc_probability: p, seed: 3, ..TrainConfig::default() }
}

#[test]
fn identical_configs_train_identically() {
    let mut a = Trainer::new(small(ScMode::Augment, 0.5)).unwrap();
    let mut b = Trainer::new(small(ScMode::Augment, 0.5)).unwrap();
    for _ in 0..4 {
        assert_eq!(a.train_step().unwrap(), b.train_step().unwrap());
    }
    assert_eq!(a.generator, b.generator);
}

#[test]
fn l1_steps_report_the_consistency_term() {
    let mut t = Trainer::new(small(ScMode::L1 { lambda: 0.5 }, 1.0)).unwrap();
    let rec = t.train_step().unwrap();
    assert!(rec.scale_pair);
    assert!(rec.l1.is_some_and(|v| v.is_finite() && v >= 0.0));
}

#[test]
fn first_step_runs_r1() {
    let mut t = Trainer::new(small(ScMode::None, 0.0)).unwrap();
    let rec = t.train_step().unwrap();
    assert!(rec.r1.is_some_and(f64::is_finite));
    assert!(t.train_step().unwrap().r1.is_none());
}

#[test]
fn probability_and_mode_must_agree() {
    assert!(small(ScMode::None, 0.3).validate().is_err());
    assert!(small(ScMode::Augment, 0.0).validate().is_err());
    assert!(TrainConfig { r_small: 15, ..TrainConfig::default() }.validate().is_err());
}

#[test]
fn config_json_round_trips_with_defaults() {
    let cfg: TrainConfig =
        serde_json::from_str(r#"{"steps": 7, "sc_mode": {"kind": "l1", "lambda": 0.1}, "sc_probability": 0.2}"#).unwrap();
    assert_eq!(cfg.steps, 7);
    assert_eq!(cfg.sc_mode, ScMode::L1 { lambda: 0.1 });
    let back: TrainConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
    assert_eq!(back, cfg);
}
