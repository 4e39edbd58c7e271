use spincim::attack::{
    attack_success_rate, AttackScenario, AttackVariant, AuthDb, CredentialPolicy,
};
use spincim::config::ExperimentConfig;
use spincim::device::{CurrentLevelModel, PairLevel};
use spincim::experiments;

fn pooled<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .unwrap()
        .install(f)
}

#[test]
fn attack_rate_is_independent_of_thread_count() {
    let db = AuthDb::demo(16);
    let levels = CurrentLevelModel::default();
    let scenario = AttackScenario::heat(AttackVariant::XnorLevel, 100.0);
    let go = || {
        attack_success_rate(&db, &CredentialPolicy::CORRECT, &scenario, &levels, 3000, 5).unwrap()
    };
    let one = pooled(1, go);
    let three = pooled(3, go);
    assert_eq!(one, three);
    assert_eq!(
        serde_json::to_string(&one).unwrap(),
        serde_json::to_string(&three).unwrap()
    );
}

#[test]
fn failure_report_bytes_repeat() {
    let mut cfg = ExperimentConfig::default();
    cfg.trials = 5000;
    let go = || {
        experiments::mc_failure(&cfg, &PairLevel::ALL, &[20.0, 60.0, 100.0])
            .unwrap()
            .to_json()
    };
    let a = pooled(2, go);
    let b = pooled(8, go);
    assert_eq!(a, b);
}

#[test]
fn seed_changes_the_report() {
    let mut cfg = ExperimentConfig::default();
    cfg.trials = 5000;
    let a = experiments::mc_failure(&cfg, &[PairLevel::ApP], &[100.0]).unwrap();
    cfg.seed += 1;
    let b = experiments::mc_failure(&cfg, &[PairLevel::ApP], &[100.0]).unwrap();
    assert_ne!(a.to_json(), b.to_json());
    assert_ne!(a.config_hash, b.config_hash);
}

#[test]
fn output_directory_does_not_enter_the_hash() {
    let mut cfg = ExperimentConfig::default();
    let h = cfg.hash();
    cfg.out_dir = "elsewhere".into();
    assert_eq!(cfg.hash(), h);
    cfg.trials += 1;
    assert_ne!(cfg.hash(), h);
}

#[test]
fn config_round_trips_and_rejects_unknown_keys() {
    let cfg = ExperimentConfig::default();
    let back = ExperimentConfig::from_json(&cfg.to_json()).unwrap();
    assert_eq!(back.hash(), cfg.hash());
    assert!(ExperimentConfig::from_json(r#"{"seed": 1, "bogus": 2}"#).is_err());
    let partial = ExperimentConfig::from_json(r#"{"seed": 9}"#).unwrap();
    assert_eq!(partial.seed, 9);
    assert_eq!(partial.trials, cfg.trials);
}
