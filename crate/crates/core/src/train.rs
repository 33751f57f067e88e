//! Supervised training of the classifier and the regressor, evaluation
//! protocols, and class-balanced batching.

use std::fmt::Write as _;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Segment;
use crate::eval::{classification_metrics, regression_metrics, ClassificationReport, ConfusionCounts, RegressionReport};
use crate::features::{
    fit_scaler, make_regressor_samples, make_windows, run_length_index, FeatureError, RegressorSamples, WindowSet,
    DEFAULT_WINDOW, LOOKBACK,
};
use crate::models::{build_classifier, build_regressor, ModelBundle, ModelError};
use crate::nn::{adam_step, AdamConfig, LossKind, Network, NnError, OptimizerState};
use crate::pipeline::{disaggregate_values, PipelineError};
use crate::signature::{continuous_sequence, off_power_mean, on_state_labels, ApplianceParams, SignatureError};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training data is empty")]
    Empty,
    #[error("training data contains only one class ({0})")]
    SingleClass(u8),
    #[error("unknown appliance {0:?} for the cross-house protocol")]
    UnknownAppliance(String),
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Signature(#[from] SignatureError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

pub type Result<T> = std::result::Result<T, TrainError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitMode {
    SameHouse,
    CrossHouse,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitPlan {
    pub mode: SplitMode,
    pub train_houses: Vec<u32>,
    pub test_houses: Vec<u32>,
    /// Fraction of each house used for training (same-house only).
    pub train_fraction: f64,
}

/// Houses holding each appliance in the reference dataset.
fn houses_with(appliance: &str) -> Option<Vec<u32>> {
    Some(match appliance {
        "refrigerator" => vec![1, 2, 3, 5, 6],
        "dishwasher" => vec![1, 2, 3, 4, 5],
        "microwave" => vec![1, 2, 3],
        "washing_machine" => vec![1, 3],
        _ => return None,
    })
}

/// Default protocol for an appliance. Cross-house uses the fixed
/// train/test houses; same-house trains and tests on every house that has
/// the appliance, split 70:30 in time.
pub fn make_split(appliance: &str, mode: SplitMode) -> Result<SplitPlan> {
    match mode {
        SplitMode::CrossHouse => {
            let (train, test) = match appliance {
                "refrigerator" => (vec![2, 3, 5, 6], vec![1]),
                "microwave" => (vec![1, 2], vec![3]),
                "dishwasher" => (vec![1, 2], vec![4]),
                _ => return Err(TrainError::UnknownAppliance(appliance.to_string())),
            };
            Ok(SplitPlan {
                mode,
                train_houses: train,
                test_houses: test,
                train_fraction: 1.0,
            })
        }
        SplitMode::SameHouse => {
            let houses = houses_with(appliance).unwrap_or_else(|| vec![1]);
            Ok(SplitPlan {
                mode,
                train_houses: houses.clone(),
                test_houses: houses,
                train_fraction: 0.7,
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    /// Equal on/off counts per classifier batch.
    pub balance: bool,
    /// Trailing share of the training data held out for early stopping.
    pub validation_fraction: f64,
    pub window: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 64,
            max_epochs: 50,
            patience: 5,
            seed: 0,
            balance: true,
            validation_fraction: 0.1,
            window: DEFAULT_WINDOW,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if self.batch_size < 2 {
            return bad("batch_size must be at least 2");
        }
        if self.max_epochs == 0 || self.patience == 0 {
            return bad("max_epochs and patience must be positive");
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return bad("validation_fraction must be in [0, 1)");
        }
        Ok(())
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            ..AdamConfig::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    /// Validation F1 for the classifier, validation MSE for the regressor.
    pub val_metric: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub wall_clock_secs: f64,
}

impl TrainReport {
    pub fn best(&self) -> Option<&EpochRecord> {
        self.epochs.iter().find(|e| e.epoch == self.best_epoch)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_loss,val_metric\n");
        for e in &self.epochs {
            let _ = writeln!(out, "{},{:.6},{:.6},{:.6}", e.epoch, e.train_loss, e.val_loss, e.val_metric);
        }
        out
    }
}

/// One epoch of classifier batches with equal on and off counts. The
/// minority class is cycled through (reshuffled each pass) so each of its
/// windows appears at least once; the majority class is sampled without
/// replacement. The epoch has as many batches as plain batching would, or
/// more if needed to cover the minority class.
pub fn balanced_batches(labels: &[u8], batch_size: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let half = (batch_size / 2).max(1);
    let on: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] != 0).collect();
    let off: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == 0).collect();
    if on.is_empty() || off.is_empty() {
        return shuffled_batches(labels.len(), batch_size, rng);
    }
    let (minority, majority) = if on.len() <= off.len() { (on, off) } else { (off, on) };
    let n_batches = minority.len().div_ceil(half).max(labels.len().div_ceil(2 * half));
    let need = n_batches * half;
    let draw = |pool: &[usize], rng: &mut ChaCha8Rng| {
        let mut out = Vec::with_capacity(need);
        while out.len() < need {
            let mut pass = pool.to_vec();
            pass.shuffle(rng);
            out.extend(pass.into_iter().take(need - out.len()));
        }
        out
    };
    let minor = draw(&minority, rng);
    let major = draw(&majority, rng);
    (0..n_batches)
        .map(|b| {
            let mut batch: Vec<usize> = minor[b * half..(b + 1) * half]
                .iter()
                .chain(&major[b * half..(b + 1) * half])
                .copied()
                .collect();
            batch.shuffle(rng);
            batch
        })
        .collect()
}

pub fn shuffled_batches(n: usize, batch_size: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    idx.chunks(batch_size.max(1)).map(<[usize]>::to_vec).collect()
}

fn one_hot(label: u8) -> [f32; 2] {
    if label == 0 {
        [1.0, 0.0]
    } else {
        [0.0, 1.0]
    }
}

fn argmax2(p: &[f32]) -> u8 {
    u8::from(p[1] > p[0])
}

/// Minibatch pass; returns the mean sample loss.
fn run_epoch(
    net: &mut Network<f32>,
    opt: &mut OptimizerState<f32>,
    batches: &[Vec<usize>],
    kind: LossKind,
    sample: impl Fn(usize) -> (Vec<f32>, Vec<f32>),
) -> Result<f64> {
    let mut grads = net.zero_grads();
    let (mut total, mut count) = (0.0f64, 0usize);
    for batch in batches {
        grads.iter_mut().for_each(|g| g.fill(0.0));
        let scale = 1.0 / batch.len() as f32;
        for &i in batch {
            let (x, y) = sample(i);
            total += net.accumulate_gradients(&x, &y, kind, scale, &mut grads)? as f64;
            count += 1;
        }
        adam_step(net.params_mut(), &grads, opt)?;
    }
    Ok(total / count.max(1) as f64)
}

fn split_validation(n: usize, fraction: f64) -> usize {
    let n_val = (n as f64 * fraction).floor() as usize;
    if n_val == 0 || n_val >= n {
        0
    } else {
        n_val
    }
}

/// Predicted states for every window.
pub fn classify_windows(net: &Network<f32>, windows: &WindowSet) -> Result<Vec<u8>> {
    (0..windows.len())
        .map(|i| Ok(argmax2(&net.forward_slice(windows.window(i))?)))
        .collect()
}

fn classifier_validation(net: &Network<f32>, val: &WindowSet) -> Result<(f64, f64)> {
    let mut loss = 0.0f64;
    let mut pred = Vec::with_capacity(val.len());
    for i in 0..val.len() {
        loss += net.sample_loss(val.window(i), &one_hot(val.labels[i]), LossKind::CategoricalCrossEntropy)? as f64;
        pred.push(argmax2(&net.forward_slice(val.window(i))?));
    }
    let (_, report) = classification_metrics(&pred, &val.labels).map_err(|_| TrainError::Empty)?;
    Ok((loss / val.len() as f64, report.f1))
}

/// Train the on/off classifier with categorical cross-entropy, keeping the
/// snapshot with the best validation F1 (ties broken by validation loss).
pub fn train_classifier(windows: &WindowSet, config: &TrainConfig) -> Result<(Network<f32>, TrainReport)> {
    config.validate()?;
    if windows.is_empty() {
        return Err(TrainError::Empty);
    }
    let started = Instant::now();
    let n_val = split_validation(windows.len(), config.validation_fraction);
    let n_train = windows.len() - n_val;
    let train = windows.subset(0..n_train);
    let val = if n_val > 0 { windows.subset(n_train..windows.len()) } else { train.clone() };
    let positives = train.labels.iter().filter(|&&l| l != 0).count();
    if positives == 0 || positives == train.len() {
        return Err(TrainError::SingleClass(train.labels[0]));
    }

    let mut net = build_classifier::<f32>(windows.window_len, config.seed)?;
    let mut opt = OptimizerState::new(config.adam(), net.params());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    let mut best = (net.clone(), f64::NEG_INFINITY, f64::INFINITY, 0usize);
    let mut epochs = Vec::new();
    let mut stale = 0;
    for epoch in 1..=config.max_epochs {
        let batches = if config.balance {
            balanced_batches(&train.labels, config.batch_size, &mut rng)
        } else {
            shuffled_batches(train.len(), config.batch_size, &mut rng)
        };
        let train_loss = run_epoch(&mut net, &mut opt, &batches, LossKind::CategoricalCrossEntropy, |i| {
            (train.window(i).to_vec(), one_hot(train.labels[i]).to_vec())
        })?;
        let (val_loss, f1) = classifier_validation(&net, &val)?;
        epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            val_metric: f1,
        });
        log::debug!("classifier epoch {epoch}: train {train_loss:.4} val {val_loss:.4} f1 {f1:.4}");
        if f1 > best.1 || (f1 == best.1 && val_loss < best.2) {
            best = (net.clone(), f1, val_loss, epoch);
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                break;
            }
        }
    }
    Ok((
        best.0,
        TrainReport {
            epochs,
            best_epoch: best.3,
            wall_clock_secs: started.elapsed().as_secs_f64(),
        },
    ))
}

fn regressor_loss(net: &Network<f32>, samples: &RegressorSamples) -> Result<f64> {
    let mut total = 0.0f64;
    for i in 0..samples.len() {
        total += net.sample_loss(samples.input(i), &samples.targets[i..=i], LossKind::MeanSquaredError)? as f64;
    }
    Ok(total / samples.len().max(1) as f64)
}

/// Train the power regressor with MSE on normalized targets, keeping the
/// snapshot with the lowest validation MSE.
pub fn train_regressor(samples: &RegressorSamples, config: &TrainConfig) -> Result<(Network<f32>, TrainReport)> {
    config.validate()?;
    if samples.is_empty() {
        return Err(TrainError::Empty);
    }
    let started = Instant::now();
    let n_val = split_validation(samples.len(), config.validation_fraction);
    let n_train = samples.len() - n_val;
    let train = samples.subset(0..n_train);
    let val = if n_val > 0 { samples.subset(n_train..samples.len()) } else { train.clone() };

    let mut net = build_regressor::<f32>(config.seed.wrapping_add(2))?;
    let mut opt = OptimizerState::new(config.adam(), net.params());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(3));
    let mut best = (net.clone(), f64::INFINITY, 0usize);
    let mut epochs = Vec::new();
    let mut stale = 0;
    for epoch in 1..=config.max_epochs {
        let batches = shuffled_batches(train.len(), config.batch_size, &mut rng);
        let train_loss = run_epoch(&mut net, &mut opt, &batches, LossKind::MeanSquaredError, |i| {
            (train.input(i).to_vec(), vec![train.targets[i]])
        })?;
        let val_loss = regressor_loss(&net, &val)?;
        epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            val_metric: val_loss,
        });
        log::debug!("regressor epoch {epoch}: train {train_loss:.6} val {val_loss:.6}");
        if val_loss < best.1 {
            best = (net.clone(), val_loss, epoch);
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                break;
            }
        }
    }
    Ok((
        best.0,
        TrainReport {
            epochs,
            best_epoch: best.2,
            wall_clock_secs: started.elapsed().as_secs_f64(),
        },
    ))
}

/// Model-ready training material extracted from segments.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    pub windows: WindowSet,
    pub regressor: RegressorSamples,
    pub bundle_stub: ModelBundle,
}

/// Build windows and regressor samples from training segments and fit the
/// scalers and standby statistics. Each segment is first brought to a
/// multiple of the window length.
pub fn prepare_training(segments: &[Segment], params: &ApplianceParams, config: &TrainConfig) -> Result<TrainingSet> {
    config.validate()?;
    let window = config.window;
    let period = segments.first().map(|s| s.period).ok_or(TrainError::Empty)?;
    let mut mains_seqs = Vec::new();
    let mut power_seqs = Vec::new();
    for seg in segments {
        if let (Some(m), Some(p)) = (continuous_sequence(&seg.mains, window), continuous_sequence(&seg.power, window)) {
            mains_seqs.push(m);
            power_seqs.push(p);
        }
    }
    if mains_seqs.is_empty() {
        return Err(TrainError::Empty);
    }
    let states: Vec<Vec<u8>> = power_seqs.iter().map(|p| on_state_labels(p, period, params)).collect();
    let mains_scaler = fit_scaler(mains_seqs.iter().flatten())?;
    let power_scaler = fit_scaler(power_seqs.iter().flatten())?;

    let mut windows = WindowSet::empty(window);
    for (m, s) in mains_seqs.iter().zip(&states) {
        let scaled: Vec<f32> = m.iter().map(|&v| mains_scaler.forward(v)).collect();
        windows.extend(&make_windows(&scaled, s, window)?);
    }

    let indices: Vec<_> = states.iter().map(|s| run_length_index(s)).collect();
    let index_scale = indices
        .iter()
        .flat_map(|i| i.indices.iter())
        .copied()
        .max()
        .unwrap_or(0)
        .max(1) as f32;
    let mut regressor = RegressorSamples::default();
    for (idx, p) in indices.iter().zip(&power_seqs) {
        regressor.extend(&make_regressor_samples(idx, p, &power_scaler, index_scale)?);
    }

    let all_power: Vec<f32> = power_seqs.concat();
    let all_states: Vec<u8> = states.concat();
    let off = off_power_mean(&all_power, &all_states, &params.name)?;

    let bundle_stub = ModelBundle {
        appliance: params.name.clone(),
        period,
        classifier: Network::empty(&[window, 1]),
        regressor: Network::empty(&[LOOKBACK, 1]),
        mains_scaler,
        power_scaler,
        index_scale,
        params: params.clone(),
        off,
    };
    Ok(TrainingSet {
        windows,
        regressor,
        bundle_stub,
    })
}

#[derive(Debug, Clone)]
pub struct TrainedAppliance {
    pub bundle: ModelBundle,
    pub classifier_report: TrainReport,
    pub regressor_report: TrainReport,
}

/// Full per-appliance training: classifier, then regressor.
pub fn train_appliance(segments: &[Segment], params: &ApplianceParams, config: &TrainConfig) -> Result<TrainedAppliance> {
    let set = prepare_training(segments, params, config)?;
    let (classifier, classifier_report) = train_classifier(&set.windows, config)?;
    let (regressor, regressor_report) = train_regressor(&set.regressor, config)?;
    let bundle = ModelBundle {
        classifier,
        regressor,
        ..set.bundle_stub
    };
    bundle.check_budget()?;
    Ok(TrainedAppliance {
        bundle,
        classifier_report,
        regressor_report,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub counts: ConfusionCounts,
    pub classification: ClassificationReport,
    pub regression: RegressionReport,
    /// Mean ground-truth power over on-labelled samples.
    pub mean_on_power: f64,
    pub samples: usize,
}

/// Disaggregate each test segment and score states and power against the
/// ground truth.
pub fn evaluate_appliance(bundle: &ModelBundle, segments: &[Segment]) -> Result<Evaluation> {
    let (mut pred_s, mut true_s, mut pred_p, mut true_p) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for seg in segments.iter().filter(|s| !s.is_empty()) {
        let trace = disaggregate_values(&seg.mains, seg.period, bundle)?;
        pred_s.extend(trace.states);
        pred_p.extend(trace.power);
        true_s.extend(on_state_labels(&seg.power, seg.period, &bundle.params));
        true_p.extend_from_slice(&seg.power);
    }
    let (counts, classification) = classification_metrics(&pred_s, &true_s).map_err(|_| TrainError::Empty)?;
    let regression = regression_metrics(&pred_p, &true_p).map_err(|_| TrainError::Empty)?;
    let on: Vec<f64> = true_p
        .iter()
        .zip(&true_s)
        .filter(|(_, &s)| s == 1)
        .map(|(&p, _)| p as f64)
        .collect();
    Ok(Evaluation {
        counts,
        classification,
        regression,
        mean_on_power: if on.is_empty() { 0.0 } else { on.iter().sum::<f64>() / on.len() as f64 },
        samples: pred_s.len(),
    })
}
