//! Acceptance gate: one PASS/FAIL/SKIP line per criterion, non-zero exit on
//! any failure. The REDD criterion runs only when `NILM_REDD_DIR` points at
//! a `low_freq` directory.

mod common;

use std::collections::BTreeMap;
use std::path::Path;
use std::time::{Duration, Instant};

use nilm_core::config::{parse_config, Config};
use nilm_core::dataset::{load_houses, segments, split_chronological, split_segments, HouseData};
use nilm_core::eval::{classification_metrics, regression_metrics};
use nilm_core::features::{lookback_row, make_regressor_samples, make_windows, run_length_index, Scaler};
use nilm_core::ingest::{good_sections, resample_mean, DEFAULT_MAX_GAP, DEFAULT_PERIOD};
use nilm_core::models::{build_classifier, build_regressor, PARAM_BUDGET};
use nilm_core::nn::{gradient_check, LossKind, DEFAULT_STEP};
use nilm_core::pipeline::{decode, disaggregate, encode, export_csv, load_bundle, save_bundle, BundleError, MAX_BUNDLE_BYTES};
use nilm_core::signature::{continuous_sequences, extract_activations, on_state_labels, ApplianceParams};
use nilm_core::synthgen::{simulate_house, SimHouse, SAMPLES_PER_DAY};
use nilm_core::train::{evaluate_appliance, make_split, train_appliance, Evaluation, SplitMode, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const GRAD_TOL: f64 = 1e-6;
const GRAD_NOISE_UNITS: f64 = 16.0;
const GRAD_MIN_COORDS: usize = 200;
const GRAD_SEEDS: u64 = 5;
const GRAD_BUDGET: Duration = Duration::from_secs(60);

const ORACLE_INSTANCES: usize = 1000;
const ORACLE_MAX_SIZE: usize = 500;
const ORACLE_BUDGET: Duration = Duration::from_secs(60);

const REGRESSOR_PARAMS: usize = 30_651;

const SYNTH_DAYS: usize = 16;
const SYNTH_TRAIN_DAYS: usize = 14;
const SYNTH_SEED: u64 = 2024;
const SYNTH_F1: [(&str, f64); 3] = [("refrigerator", 0.85), ("microwave", 0.90), ("dishwasher", 0.85)];
const SYNTH_MAE_FRACTION: f64 = 0.15;
const SYNTH_BUDGET: Duration = Duration::from_secs(600);

const REDD_FRIDGE_F1: f64 = 0.85;
const REDD_FRIDGE_ACCURACY: f64 = 0.92;
const REDD_SAME_HOUSE_MAE: [(&str, f64); 3] = [("refrigerator", 31.5), ("microwave", 18.2), ("dishwasher", 14.7)];
const REDD_CROSS_MAE: [(&str, f64); 2] = [("microwave", 25.0), ("dishwasher", 28.0)];
const REDD_CROSS_FRIDGE_F1: f64 = 0.75;
const REDD_FRIDGE_ACTIVATIONS: f64 = 6_561.0;
const REDD_ACTIVATION_TOL: f64 = 0.10;
const REDD_BUDGET: Duration = Duration::from_secs(30 * 60);

const SERIAL_INSTANCES: usize = 1000;

type Criterion<'a> = (&'a str, Box<dyn Fn() -> Outcome>);

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

fn gradients() -> Outcome {
    let started = Instant::now();
    let mut worst = (0.0f64, 0.0f64, usize::MAX);
    for seed in 0..GRAD_SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..20).map(|_| rng.random_range(0.0..1.0)).collect();
        let cls = build_classifier::<f64>(20, seed).unwrap();
        let target = if seed % 2 == 0 { [1.0, 0.0] } else { [0.0, 1.0] };
        let a = gradient_check(&cls, &x, &target, LossKind::CategoricalCrossEntropy, GRAD_MIN_COORDS, DEFAULT_STEP, seed)
            .unwrap();
        let reg = build_regressor::<f64>(seed).unwrap();
        let y = [rng.random_range(0.0..1.0)];
        let b = gradient_check(&reg, &x[..5], &y, LossKind::MeanSquaredError, GRAD_MIN_COORDS, DEFAULT_STEP, seed).unwrap();
        for r in [a, b] {
            worst.0 = worst.0.max(r.max_rel_error);
            worst.1 = worst.1.max(r.max_unresolved_noise_ratio);
            worst.2 = worst.2.min(r.checked);
        }
    }
    let elapsed = started.elapsed();
    check(
        worst.0 < GRAD_TOL && worst.1 <= GRAD_NOISE_UNITS && worst.2 >= GRAD_MIN_COORDS && elapsed < GRAD_BUDGET,
        format!(
            "max rel error {:.2e} (< {GRAD_TOL:e}), min coords {} (>= {GRAD_MIN_COORDS}), unresolved noise ratio {:.2}, {:.1}s",
            worst.0,
            worst.2,
            worst.1,
            elapsed.as_secs_f64()
        ),
    )
}

fn oracles() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x0_7ac1e);
    let mut failures: BTreeMap<&str, usize> = BTreeMap::new();
    let mut fail = |name: &'static str, ok: bool| {
        if !ok {
            *failures.entry(name).or_default() += 1;
        }
    };
    for _ in 0..ORACLE_INSTANCES {
        let n = rng.random_range(1..=ORACLE_MAX_SIZE);
        let seq = common::random_values(&mut rng, n, 1.0);
        let states = common::random_states(&mut rng, n);
        let w = rng.random_range(1..=40);
        let ws = make_windows(&seq, &states, w).unwrap();
        let rows = common::windows_oracle(&seq, w);
        fail("make_windows", ws.labels == states && (0..n).all(|i| ws.window(i) == rows[i].as_slice()));

        fail("run_length_index", run_length_index(&states).indices == common::run_length_oracle(&states));

        let segs: Vec<Vec<f32>> = (0..rng.random_range(1..5))
            .map(|_| {
                let len = rng.random_range(0..=ORACLE_MAX_SIZE / 4);
                common::random_values(&mut rng, len, 100.0)
            })
            .collect();
        let got = continuous_sequences(segs.iter().map(Vec::as_slice), w);
        let want: Vec<Vec<f32>> = segs.iter().filter_map(|s| common::continuous_oracle(s, w)).collect();
        fail("continuous_sequences", got == want);

        let pred = common::random_states(&mut rng, n);
        let (c, r) = classification_metrics(&pred, &states).unwrap();
        let o = common::classification_oracle(&pred, &states);
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-12;
        fail(
            "classification_metrics",
            c == common::confusion_oracle(&pred, &states)
                && close(r.precision, o.precision)
                && close(r.recall, o.recall)
                && close(r.f1, o.f1)
                && close(r.accuracy, o.accuracy),
        );

        let p = common::random_values(&mut rng, n, 2000.0);
        let t = common::random_values(&mut rng, n, 2000.0);
        let r = regression_metrics(&p, &t).unwrap();
        let o = common::regression_oracle(&p, &t);
        fail(
            "regression_metrics",
            (r.mae - o.mae).abs() <= 1e-9 * o.mae.max(1.0) && (r.mse - o.mse).abs() <= 1e-9 * o.mse.max(1.0),
        );

        let readings = common::random_readings(&mut rng, n);
        let period = [1u32, 3, 10, 60, 300][rng.random_range(0..5)];
        let s = resample_mean(&readings, period).unwrap();
        let (start, want) = common::resample_oracle(&readings.pairs, period as i64);
        fail(
            "resample_mean",
            s.start_time == start
                && s.len() == want.len()
                && s.values.iter().zip(&want).all(|(g, w)| match w {
                    None => g.is_nan(),
                    Some(v) => (f64::from(*g) - v).abs() <= 1e-6 * v.abs().max(1.0),
                }),
        );

        let series = common::masked_series(&mut rng, n, 60);
        let present: Vec<bool> = series.values.iter().map(|v| !v.is_nan()).collect();
        let max_gap = 60 * rng.random_range(1..=6);
        fail(
            "good_sections",
            common::sections_as_pairs(&good_sections(&series, max_gap)) == common::sections_oracle(&present, 60, max_gap),
        );
    }
    let elapsed = started.elapsed();
    let detail = format!(
        "7 functions x {ORACLE_INSTANCES} instances (sizes <= {ORACLE_MAX_SIZE}), mismatches {:?}, {:.1}s",
        failures,
        elapsed.as_secs_f64()
    );
    check(failures.is_empty() && elapsed < ORACLE_BUDGET, detail)
}

fn worked_example() -> Outcome {
    let powers = [148.0f32, 135.0, 129.0, 127.0, 127.0, 125.0];
    let expected: [([u32; 5], f32); 6] = [
        ([0, 0, 0, 0, 0], 148.0),
        ([0, 0, 0, 0, 1], 135.0),
        ([0, 0, 0, 1, 2], 129.0),
        ([0, 0, 1, 2, 3], 127.0),
        ([0, 1, 2, 3, 4], 127.0),
        ([1, 2, 3, 4, 5], 125.0),
    ];
    let params = ApplianceParams::defaults("refrigerator").unwrap();
    let states = on_state_labels(&powers, DEFAULT_PERIOD, &params);
    let idx = run_length_index(&states);
    let scaler = Scaler::new(0.0, 1000.0).unwrap();
    let samples = make_regressor_samples(&idx, &powers, &scaler, 1.0).unwrap();
    let mut ok = idx.indices == [1, 2, 3, 4, 5, 6] && samples.len() == 6;
    for (t, (row, watts)) in expected.iter().enumerate() {
        ok &= lookback_row(&idx.indices, t) == *row;
        ok &= samples.input(t).iter().zip(row).all(|(&a, &b)| a == b as f32);
        ok &= (scaler.inverse(samples.targets[t]) - watts).abs() < 1e-3;
    }
    check(ok, format!("indices {:?}, 6 lookback rows and targets", idx.indices))
}

fn budget() -> Outcome {
    let mut b = common::random_bundle(&mut ChaCha8Rng::seed_from_u64(4));
    b.classifier = build_classifier(20, 4).unwrap();
    b.regressor = build_regressor(4).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let bytes = save_bundle(&b, &dir.path().join("b.nilm")).unwrap();
    let (c, r) = (b.classifier.param_count(), b.regressor.param_count());
    check(
        c + r <= PARAM_BUDGET && r == REGRESSOR_PARAMS && bytes <= MAX_BUNDLE_BYTES,
        format!("classifier {c} + regressor {r} = {} (<= {PARAM_BUDGET}), bundle {bytes} bytes (<= {MAX_BUNDLE_BYTES})", c + r),
    )
}

fn describe(name: &str, e: &Evaluation) -> String {
    format!(
        "{name}: F1 {:.3} acc {:.3} MAE {:.2} W (mean on {:.0} W)",
        e.classification.f1, e.classification.accuracy, e.regression.mae, e.mean_on_power
    )
}

fn synthetic() -> Outcome {
    let started = Instant::now();
    let sim = simulate_house(&SimHouse::standard(SYNTH_DAYS, SYNTH_SEED));
    let house = HouseData::from_simulation(1, &sim);
    let config = TrainConfig { seed: SYNTH_SEED, ..TrainConfig::default() };
    let mut ok = true;
    let mut parts = Vec::new();
    for (app, min_f1) in SYNTH_F1 {
        let segs = segments(&house, app, DEFAULT_MAX_GAP);
        let (train, test) = split_chronological(&segs, SYNTH_TRAIN_DAYS as f64 / SYNTH_DAYS as f64);
        debug_assert_eq!(test.iter().map(|s| s.len()).sum::<usize>(), 2 * SAMPLES_PER_DAY);
        let params = ApplianceParams::defaults(app).unwrap();
        match train_appliance(&train, &params, &config).and_then(|t| evaluate_appliance(&t.bundle, &test)) {
            Ok(e) => {
                ok &= e.classification.f1 >= min_f1 && e.regression.mae <= SYNTH_MAE_FRACTION * e.mean_on_power;
                parts.push(describe(app, &e));
            }
            Err(err) => {
                ok = false;
                parts.push(format!("{app}: {err}"));
            }
        }
    }
    let elapsed = started.elapsed();
    parts.push(format!("{:.0}s", elapsed.as_secs_f64()));
    check(ok && elapsed <= SYNTH_BUDGET, parts.join("; "))
}

/// Calibration and training settings for the REDD runs.
fn redd_config() -> Config {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/redd.toml");
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    parse_config(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn redd(root: &Path) -> Outcome {
    let started = Instant::now();
    let full = redd_config();
    let config = full.train;
    let params_for = |app: &str| full.appliance_params(app).unwrap();
    let apps = ["refrigerator", "microwave", "dishwasher"];
    let houses = match load_houses(root, &[1, 2, 3, 4, 5, 6], &apps, full.data.period, false) {
        Ok(h) => h,
        Err(e) => return Outcome::Fail(format!("loading {}: {e}", root.display())),
    };
    let mut ok = true;
    let mut parts = Vec::new();
    let run = |mode: SplitMode, app: &str| -> Result<(nilm_core::models::ModelBundle, Evaluation), String> {
        let plan = make_split(app, mode).map_err(|e| e.to_string())?;
        let (train, test) = split_segments(&houses, app, &plan, full.data.max_gap);
        let t = train_appliance(&train, &params_for(app), &config).map_err(|e| e.to_string())?;
        let e = evaluate_appliance(&t.bundle, &test).map_err(|e| e.to_string())?;
        Ok((t.bundle, e))
    };

    for (app, max_mae) in REDD_SAME_HOUSE_MAE {
        match run(SplitMode::SameHouse, app) {
            Ok((bundle, e)) => {
                ok &= e.regression.mae <= max_mae;
                parts.push(format!("same-house {}", describe(app, &e)));
                if app == "refrigerator" {
                    let plan = make_split(app, SplitMode::SameHouse).unwrap();
                    let house1: Vec<HouseData> = houses.iter().filter(|h| h.house_id == 1).cloned().collect();
                    let (_, test) = split_segments(&house1, app, &plan, full.data.max_gap);
                    match evaluate_appliance(&bundle, &test) {
                        Ok(h1) => {
                            ok &= h1.classification.f1 >= REDD_FRIDGE_F1 && h1.classification.accuracy >= REDD_FRIDGE_ACCURACY;
                            parts.push(format!("house-1 {}", describe(app, &h1)));
                        }
                        Err(err) => {
                            ok = false;
                            parts.push(format!("house-1 {app}: {err}"));
                        }
                    }
                }
            }
            Err(err) => {
                ok = false;
                parts.push(format!("same-house {app}: {err}"));
            }
        }
    }
    for (app, max_mae) in REDD_CROSS_MAE {
        match run(SplitMode::CrossHouse, app) {
            Ok((_, e)) => {
                ok &= e.regression.mae <= max_mae;
                parts.push(format!("cross-house {}", describe(app, &e)));
            }
            Err(err) => {
                ok = false;
                parts.push(format!("cross-house {app}: {err}"));
            }
        }
    }
    match run(SplitMode::CrossHouse, "refrigerator") {
        Ok((_, e)) => {
            ok &= e.classification.f1 >= REDD_CROSS_FRIDGE_F1;
            parts.push(format!("cross-house {}", describe("refrigerator", &e)));
        }
        Err(err) => {
            ok = false;
            parts.push(format!("cross-house refrigerator: {err}"));
        }
    }

    let fridge = params_for("refrigerator");
    let count: usize = houses
        .iter()
        .filter(|h| h.house_id == 1)
        .flat_map(|h| segments(h, "refrigerator", full.data.max_gap))
        .map(|s| extract_activations(&s.power, s.period, &fridge).len())
        .sum();
    let rel = (count as f64 - REDD_FRIDGE_ACTIVATIONS).abs() / REDD_FRIDGE_ACTIVATIONS;
    ok &= rel <= REDD_ACTIVATION_TOL;
    parts.push(format!("house-1 fridge activations {count} (target {REDD_FRIDGE_ACTIVATIONS} ±10%)"));

    let elapsed = started.elapsed();
    // three appliances, each trained for both protocols
    ok &= elapsed <= 3 * REDD_BUDGET;
    parts.push(format!("{:.0}s", elapsed.as_secs_f64()));
    check(ok, parts.join("; "))
}

fn run_once(sim: &SimHouse, config: &TrainConfig) -> (Vec<Vec<u8>>, String) {
    let out = simulate_house(sim);
    let house = HouseData::from_simulation(1, &out);
    let mut bundles = Vec::new();
    let mut trained = Vec::new();
    for app in ["refrigerator", "microwave", "dishwasher"] {
        let segs = segments(&house, app, DEFAULT_MAX_GAP);
        let t = train_appliance(&segs, &ApplianceParams::defaults(app).unwrap(), config).unwrap();
        bundles.push(encode(&t.bundle).unwrap());
        trained.push(t.bundle);
    }
    let result = nilm_core::pipeline::disaggregate_all(&out.mains, &trained).unwrap();
    let truth: BTreeMap<_, _> = out.appliances.into_iter().collect();
    (bundles, export_csv(&result, &truth).unwrap())
}

fn determinism() -> Outcome {
    let sim = SimHouse::standard(4, 77);
    let config = TrainConfig { max_epochs: 3, seed: 77, ..TrainConfig::default() };
    let a = run_once(&sim, &config);
    let b = run_once(&sim, &config);
    let single = {
        let out = simulate_house(&sim);
        let house = HouseData::from_simulation(1, &out);
        let segs = segments(&house, "refrigerator", DEFAULT_MAX_GAP);
        let t = train_appliance(&segs, &ApplianceParams::defaults("refrigerator").unwrap(), &config).unwrap();
        disaggregate(&out.mains, &t.bundle).unwrap() == disaggregate(&out.mains, &t.bundle).unwrap()
    };
    check(
        a == b && single,
        format!(
            "3 bundles ({} bytes) and trace CSV ({} bytes) identical across runs",
            a.0.iter().map(Vec::len).sum::<usize>(),
            a.1.len()
        ),
    )
}

fn serialization() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5e71a1);
    let mut mismatches = 0;
    for i in 0..SERIAL_INSTANCES {
        let b = common::random_bundle(&mut rng);
        let first = dir.path().join(format!("{i}.nilm"));
        let second = dir.path().join(format!("{i}.again.nilm"));
        save_bundle(&b, &first).unwrap();
        let loaded = load_bundle(&first).unwrap();
        save_bundle(&loaded, &second).unwrap();
        if std::fs::read(&first).unwrap() != std::fs::read(&second).unwrap() {
            mismatches += 1;
        }
    }
    let good = encode(&common::random_bundle(&mut rng)).unwrap();
    let mut bad_magic = good.clone();
    bad_magic[..4].copy_from_slice(b"MLIN");
    let mut bad_version = good.clone();
    bad_version[4..6].copy_from_slice(&7u16.to_le_bytes());
    let mut trailing = good.clone();
    trailing.extend_from_slice(&[0, 0]);
    let kinds = [
        matches!(decode(&bad_magic), Err(BundleError::BadMagic)),
        matches!(decode(&bad_version), Err(BundleError::UnsupportedVersion(7))),
        matches!(decode(&good[..good.len() / 2]), Err(BundleError::UnexpectedEnd(_))),
        matches!(decode(&trailing), Err(BundleError::TrailingBytes(2))),
        matches!(decode(&vec![0u8; MAX_BUNDLE_BYTES + 1]), Err(BundleError::TooLarge(_))),
    ];
    check(
        mismatches == 0 && kinds.iter().all(|&k| k),
        format!("{SERIAL_INSTANCES} save/load/save cycles, {mismatches} mismatches; corruption kinds {kinds:?}"),
    )
}

fn main() {
    let redd_dir = std::env::var_os("NILM_REDD_DIR").map(std::path::PathBuf::from);
    let criteria: Vec<Criterion> = vec![
        ("1 gradient correctness", Box::new(gradients)),
        ("2 oracle equivalence", Box::new(oracles)),
        ("3 lookback worked example", Box::new(worked_example)),
        ("4 parameter and size budget", Box::new(budget)),
        ("5 synthetic end-to-end", Box::new(synthetic)),
        (
            "6 REDD reproduction",
            Box::new(move || match &redd_dir {
                Some(dir) if dir.is_dir() => redd(dir),
                Some(dir) => Outcome::Skip(format!("NILM_REDD_DIR={} is not a directory", dir.display())),
                None => Outcome::Skip("NILM_REDD_DIR not set; dataset unavailable".into()),
            }),
        ),
        ("7 determinism", Box::new(determinism)),
        ("8 serialization", Box::new(serialization)),
    ];
    let only: Option<String> = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let mut failed = 0;
    for (name, run) in criteria {
        if only.as_deref().is_some_and(|o| !name.contains(o)) {
            continue;
        }
        match run() {
            Outcome::Pass(d) => println!("PASS  {name}: {d}"),
            Outcome::Fail(d) => {
                failed += 1;
                println!("FAIL  {name}: {d}");
            }
            Outcome::Skip(d) => println!("SKIP  {name}: warning: {d}"),
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
