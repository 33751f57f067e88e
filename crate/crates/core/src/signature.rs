//! Appliance consumption signatures: on/off labels, activations, padded
//! continuous sequences and standby power.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SignatureError {
    #[error("appliance {0:?} has no off-labelled samples")]
    NoOffSamples(String),
    #[error("invalid appliance parameters: {0}")]
    InvalidParams(String),
}

/// Thresholds used to decide when an appliance is running. Durations are in
/// seconds and converted to whole samples at the series period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApplianceParams {
    pub name: String,
    pub on_threshold: f32,
    pub min_on: u32,
    pub min_off: u32,
}

impl ApplianceParams {
    pub fn new(name: &str, on_threshold: f32, min_on: u32, min_off: u32) -> Result<Self, SignatureError> {
        let p = Self {
            name: name.to_string(),
            on_threshold,
            min_on,
            min_off,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), SignatureError> {
        if !(self.on_threshold > 0.0 && self.on_threshold.is_finite()) {
            return Err(SignatureError::InvalidParams(format!(
                "on_threshold must be positive, got {}",
                self.on_threshold
            )));
        }
        if self.name.is_empty() {
            return Err(SignatureError::InvalidParams("empty appliance name".into()));
        }
        Ok(())
    }

    /// Built-in calibration for the four supported appliance classes.
    pub fn defaults(name: &str) -> Option<Self> {
        let (thr, on, off) = match name {
            "refrigerator" => (50.0, 60, 12),
            "microwave" => (200.0, 12, 30),
            "dishwasher" => (10.0, 1800, 1800),
            "washing_machine" => (20.0, 1800, 160),
            _ => return None,
        };
        Some(Self {
            name: name.to_string(),
            on_threshold: thr,
            min_on: on,
            min_off: off,
        })
    }
}

/// A maximal on-run of an appliance.
#[derive(Debug, Clone, PartialEq)]
pub struct Activation {
    pub start_index: usize,
    pub powers: Vec<f32>,
}

impl Activation {
    pub fn end_index(&self) -> usize {
        self.start_index + self.powers.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OffStats {
    pub off_mean: f32,
}

/// Runs of equal values as `(value, start, len)`.
fn runs(labels: &[u8]) -> Vec<(u8, usize, usize)> {
    let mut out: Vec<(u8, usize, usize)> = Vec::new();
    for (i, &l) in labels.iter().enumerate() {
        match out.last_mut() {
            Some((v, _, len)) if *v == l => *len += 1,
            _ => out.push((l, i, 1)),
        }
    }
    out
}

fn samples_for(seconds: u32, period: u32) -> usize {
    (seconds as usize).div_ceil(period.max(1) as usize)
}

/// Binary on/off state per sample. A sample is on when its power exceeds the
/// threshold (missing samples count as off); on-runs shorter than `min_on`
/// are then cleared, and interior off-runs shorter than `min_off` are
/// bridged.
pub fn on_state_labels(values: &[f32], period: u32, params: &ApplianceParams) -> Vec<u8> {
    let mut labels: Vec<u8> = values
        .iter()
        .map(|&v| u8::from(v > params.on_threshold))
        .collect();
    let min_on = samples_for(params.min_on, period);
    for (v, start, len) in runs(&labels) {
        if v == 1 && len < min_on {
            labels[start..start + len].fill(0);
        }
    }
    let min_off = samples_for(params.min_off, period);
    let r = runs(&labels);
    for (k, &(v, start, len)) in r.iter().enumerate() {
        let interior = k > 0 && k + 1 < r.len();
        if v == 0 && interior && len < min_off {
            labels[start..start + len].fill(1);
        }
    }
    labels
}

pub fn extract_activations(values: &[f32], period: u32, params: &ApplianceParams) -> Vec<Activation> {
    let labels = on_state_labels(values, period, params);
    runs(&labels)
        .into_iter()
        .filter(|r| r.0 == 1)
        .map(|(_, start, len)| Activation {
            start_index: start,
            powers: values[start..start + len].to_vec(),
        })
        .collect()
}

/// Bring a segment to a multiple of `window`: remainders of at least half a
/// window are zero-padded up, shorter remainders are cut. Returns `None`
/// when nothing is left.
pub fn continuous_sequence(segment: &[f32], window: usize) -> Option<Vec<f32>> {
    assert!(window >= 1, "window must be positive");
    let rem = segment.len() % window;
    let mut out = segment.to_vec();
    if rem == 0 {
        // already aligned
    } else if 2 * rem >= window {
        out.resize(segment.len() + window - rem, 0.0);
    } else {
        out.truncate(segment.len() - rem);
    }
    (!out.is_empty()).then_some(out)
}

pub fn continuous_sequences<'a, I>(segments: I, window: usize) -> Vec<Vec<f32>>
where
    I: IntoIterator<Item = &'a [f32]>,
{
    segments
        .into_iter()
        .filter_map(|s| continuous_sequence(s, window))
        .collect()
}

/// Mean power over off-labelled samples.
pub fn off_power_mean(values: &[f32], labels: &[u8], name: &str) -> Result<OffStats, SignatureError> {
    let (sum, n) = values
        .iter()
        .zip(labels)
        .filter(|(v, &l)| l == 0 && !v.is_nan())
        .fold((0.0f64, 0usize), |(s, n), (&v, _)| (s + v as f64, n + 1));
    if n == 0 {
        return Err(SignatureError::NoOffSamples(name.to_string()));
    }
    Ok(OffStats {
        off_mean: (sum / n as f64) as f32,
    })
}

pub fn off_power_mean_for(values: &[f32], period: u32, params: &ApplianceParams) -> Result<OffStats, SignatureError> {
    let labels = on_state_labels(values, period, params);
    off_power_mean(values, &labels, &params.name)
}
