use std::path::Path;
use std::process::{Command as Proc, Output};

use nilm_cli::{parse_args, resolve_plan, Command, ModeArg};
use nilm_core::train::SplitMode;

fn nilm(args: &[&str]) -> Output {
    Proc::new(env!("CARGO_BIN_EXE_nilm"))
        .args(args)
        .env_remove("NILM_DATA_DIR")
        .output()
        .expect("spawn nilm")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn no_arguments_is_a_usage_error() {
    assert_eq!(nilm(&[]).status.code(), Some(2));
}

#[test]
fn help_exits_zero() {
    let out = nilm(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("disaggregate"));
}

#[test]
fn unknown_flag_and_missing_appliance_are_usage_errors() {
    assert_eq!(nilm(&["train", "--bogus"]).status.code(), Some(2));
    assert_eq!(nilm(&["train", "--out", "x"]).status.code(), Some(2));
    assert_eq!(nilm(&["train", "--appliance", "microwave", "--out", "x"]).status.code(), Some(2));
    assert_eq!(nilm(&["disaggregate", "--house", "1", "--out", "x"]).status.code(), Some(2));
}

#[test]
fn stats_takes_a_house() {
    let Command::Stats(args) = parse_args(["nilm", "stats", "--data", "redd/", "--house", "1"]).unwrap() else {
        panic!("expected stats")
    };
    assert_eq!(args.houses, vec![1]);
    assert_eq!(args.data.data.as_deref(), Some(Path::new("redd/")));
}

#[test]
fn shipped_redd_config_parses() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/redd.toml");
    let config = nilm_core::config::parse_config(&std::fs::read_to_string(path).unwrap()).unwrap();
    for name in nilm_cli::KNOWN_APPLIANCES {
        let p = config.appliance_params(name).unwrap();
        assert_eq!(p, nilm_core::signature::ApplianceParams::defaults(name).unwrap());
    }
}

#[test]
fn missing_data_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = nilm(&["stats", "--data", p(&dir.path().join("absent"))]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn cross_house_plan_is_selected() {
    let cmd = parse_args(["nilm", "train", "--appliance", "refrigerator", "--mode", "cross-house"]).unwrap();
    let Command::Train(args) = cmd else { panic!("expected train") };
    assert_eq!(args.which.mode, ModeArg::CrossHouse);
    let plan = resolve_plan("refrigerator", &args.which).unwrap();
    assert_eq!(plan.mode, SplitMode::CrossHouse);
    assert_eq!((plan.train_houses, plan.test_houses), (vec![2, 3, 5, 6], vec![1]));
    let plan = resolve_plan("microwave", &args.which).unwrap();
    assert_eq!((plan.train_houses, plan.test_houses), (vec![1, 2], vec![3]));

    let cmd = parse_args(["nilm", "eval", "--all-appliances", "--mode", "cross-house", "--houses", "1", "--models", "m"]);
    let Command::Eval(args) = cmd.unwrap() else { panic!("expected eval") };
    assert!(resolve_plan("refrigerator", &args.which).is_err());
}

#[test]
fn same_house_plan_takes_houses() {
    let cmd = parse_args(["nilm", "train", "--all-appliances", "--houses", "2,3", "--out", "m"]).unwrap();
    let Command::Train(args) = cmd else { panic!("expected train") };
    let plan = resolve_plan("dishwasher", &args.which).unwrap();
    assert_eq!(plan.mode, SplitMode::SameHouse);
    assert_eq!(plan.train_houses, vec![2, 3]);
}

fn pipeline_run(root: &Path) -> (Vec<u8>, String, String) {
    let data = root.join("data");
    let models = root.join("models");
    let trace = root.join("trace.csv");
    let metrics = root.join("metrics.csv");
    let ok = |args: &[&str]| {
        let out = nilm(args);
        assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    };
    ok(&["simulate", "--out", p(&data), "--houses", "1", "--days", "3", "--seed", "11"]);
    ok(&[
        "train", "--data", p(&data), "--appliance", "refrigerator", "--houses", "1", "--epochs", "2", "--seed", "3",
        "--out", p(&models),
    ]);
    ok(&[
        "eval", "--data", p(&data), "--appliance", "refrigerator", "--houses", "1", "--models", p(&models), "--out",
        p(&metrics),
    ]);
    let bundle = models.join("refrigerator.nilm");
    ok(&["disaggregate", "--data", p(&data), "--house", "1", "--models", p(&bundle), "--truth", "--out", p(&trace)]);
    assert!(models.join("refrigerator_classifier_log.csv").is_file());
    (
        std::fs::read(&bundle).unwrap(),
        std::fs::read_to_string(&trace).unwrap(),
        std::fs::read_to_string(&metrics).unwrap(),
    )
}

#[test]
fn simulate_train_disaggregate_is_deterministic() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let first = pipeline_run(a.path());
    let second = pipeline_run(b.path());
    assert_eq!(first, second);

    let (_, trace, metrics) = first;
    let mut lines = trace.lines();
    assert_eq!(lines.next(), Some("timestamp,mains,refrigerator_pred,refrigerator_true"));
    assert_eq!(lines.count(), 3 * 1440);
    assert!(metrics.starts_with("appliance,split,precision,recall,f1,accuracy,mae,mse\nrefrigerator,same-house,"));

    let json = nilm(&["export-bundle", p(&a.path().join("models/refrigerator.nilm"))]);
    assert!(json.status.success());
    let v: serde_json::Value = serde_json::from_slice(&json.stdout).unwrap();
    assert_eq!(v["param_count"], 38_621);
    assert_eq!(v["regressor"]["param_count"], 30_651);
}

#[test]
fn corrupt_bundle_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.nilm");
    std::fs::write(&path, b"NILM\x01\x00garbage").unwrap();
    assert_eq!(nilm(&["export-bundle", p(&path)]).status.code(), Some(3));
}
