//! End-to-end inference, bundle persistence, and trace export.

mod bundle;

pub use bundle::{decode, encode, load_bundle, save_bundle, BundleError, FORMAT_VERSION, MAGIC, MAX_BUNDLE_BYTES};

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use thiserror::Error;

use crate::features::{lookback_row, make_windows, run_length_index, FeatureError, LOOKBACK};
use crate::ingest::PowerSeries;
use crate::models::ModelBundle;
use crate::nn::NnError;

#[derive(Debug, Error, PartialEq)]
pub enum PipelineError {
    #[error("mains period {got} s does not match the bundle's {expected} s")]
    PeriodMismatch { expected: u32, got: u32 },
    #[error("mains value at index {0} is not finite")]
    NonFinite(usize),
    #[error("mains series is empty")]
    Empty,
    #[error("bundle networks do not fit the pipeline: {0}")]
    BadBundle(String),
    #[error("ground truth for {0:?} is not aligned with the result timeline")]
    Misaligned(String),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Nn(#[from] NnError),
}

pub type Result<T> = std::result::Result<T, PipelineError>;

/// Predicted states and power of one appliance.
#[derive(Debug, Clone, PartialEq)]
pub struct ApplianceTrace {
    pub appliance: String,
    pub states: Vec<u8>,
    /// Watts; `off_mean` wherever the state is 0.
    pub power: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DisaggregationResult {
    pub start_time: i64,
    pub period: u32,
    pub mains: Vec<f32>,
    pub traces: Vec<ApplianceTrace>,
}

impl DisaggregationResult {
    pub fn len(&self) -> usize {
        self.mains.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mains.is_empty()
    }

    pub fn trace(&self, appliance: &str) -> Option<&ApplianceTrace> {
        self.traces.iter().find(|t| t.appliance == appliance)
    }
}

/// Classify every sample of `mains`, then map run-length indices of the
/// predicted on-runs to power.
pub fn disaggregate_values(mains: &[f32], period: u32, bundle: &ModelBundle) -> Result<ApplianceTrace> {
    if period != bundle.period {
        return Err(PipelineError::PeriodMismatch {
            expected: bundle.period,
            got: period,
        });
    }
    if mains.is_empty() {
        return Err(PipelineError::Empty);
    }
    if bundle.classifier.output_shape() != [2] || bundle.regressor.output_shape() != [1] {
        return Err(PipelineError::BadBundle(format!(
            "classifier emits {:?}, regressor emits {:?}",
            bundle.classifier.output_shape(),
            bundle.regressor.output_shape()
        )));
    }
    if bundle.regressor.input_shape != [LOOKBACK, 1] {
        return Err(PipelineError::BadBundle(format!("regressor input {:?}", bundle.regressor.input_shape)));
    }
    if let Some(i) = mains.iter().position(|v| !v.is_finite()) {
        return Err(PipelineError::NonFinite(i));
    }
    let scaled: Vec<f32> = mains.iter().map(|&v| bundle.mains_scaler.forward(v)).collect();
    let windows = make_windows(&scaled, &vec![0; scaled.len()], bundle.window_len())?;
    let states = (0..windows.len())
        .map(|i| {
            let p = bundle.classifier.forward_slice(windows.window(i))?;
            Ok(u8::from(p[1] > p[0]))
        })
        .collect::<Result<Vec<u8>>>()?;

    let indices = run_length_index(&states).indices;
    // Predictions depend only on the lookback row, which repeats heavily.
    let mut memo: HashMap<[u32; LOOKBACK], f32> = HashMap::new();
    let mut power = Vec::with_capacity(states.len());
    for (t, &state) in states.iter().enumerate() {
        if state == 0 {
            power.push(bundle.off.off_mean);
            continue;
        }
        let row = lookback_row(&indices, t);
        let watts = match memo.get(&row) {
            Some(&w) => w,
            None => {
                let input: Vec<f32> = row.iter().map(|&k| k as f32 / bundle.index_scale).collect();
                let y = bundle.regressor.forward_slice(&input)?[0];
                let w = bundle.power_scaler.inverse(y).max(0.0);
                memo.insert(row, w);
                w
            }
        };
        power.push(watts);
    }
    Ok(ApplianceTrace {
        appliance: bundle.appliance.clone(),
        states,
        power,
    })
}

pub fn disaggregate(mains: &PowerSeries, bundle: &ModelBundle) -> Result<DisaggregationResult> {
    disaggregate_all(mains, std::slice::from_ref(bundle))
}

pub fn disaggregate_all(mains: &PowerSeries, bundles: &[ModelBundle]) -> Result<DisaggregationResult> {
    let traces = bundles
        .iter()
        .map(|b| disaggregate_values(&mains.values, mains.period, b))
        .collect::<Result<Vec<_>>>()?;
    Ok(DisaggregationResult {
        start_time: mains.start_time,
        period: mains.period,
        mains: mains.values.clone(),
        traces,
    })
}

fn push_value(out: &mut String, v: f32) {
    out.push(',');
    if v.is_finite() {
        let _ = write!(out, "{v:.1}");
    }
}

/// Plot-ready CSV: `timestamp,mains,<app>_pred[,<app>_true]…`, one row per
/// sample, watts with one decimal. A `_true` column follows each appliance
/// that has ground truth; missing truth values are left empty.
pub fn export_csv(result: &DisaggregationResult, truth: &BTreeMap<String, PowerSeries>) -> Result<String> {
    let n = result.len();
    let mut columns: Vec<(&[f32], Option<&[f32]>)> = Vec::new();
    let mut out = String::from("timestamp,mains");
    for t in &result.traces {
        let _ = write!(out, ",{}_pred", t.appliance);
        let gt = match truth.get(&t.appliance) {
            Some(s) => {
                if s.start_time != result.start_time || s.period != result.period || s.len() != n {
                    return Err(PipelineError::Misaligned(t.appliance.clone()));
                }
                let _ = write!(out, ",{}_true", t.appliance);
                Some(s.values.as_slice())
            }
            None => None,
        };
        columns.push((&t.power, gt));
    }
    if let Some(name) = truth.keys().find(|k| result.trace(k).is_none()) {
        return Err(PipelineError::Misaligned(name.clone()));
    }
    out.push('\n');
    for i in 0..n {
        let _ = write!(out, "{}", result.start_time + i as i64 * result.period as i64);
        push_value(&mut out, result.mains[i]);
        for (pred, gt) in &columns {
            push_value(&mut out, pred[i]);
            if let Some(gt) = gt {
                push_value(&mut out, gt[i]);
            }
        }
        out.push('\n');
    }
    Ok(out)
}
