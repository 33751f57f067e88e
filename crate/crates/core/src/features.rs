//! Model-ready samples: MinMax scaling, seq2point windows with midpoint
//! labels, run-length state indices and lookback samples for the regressor.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of past state indices fed to the power regressor.
pub const LOOKBACK: usize = 5;

/// Default classifier window length.
pub const DEFAULT_WINDOW: usize = 20;

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error("cannot fit a scaler on fewer than two distinct values")]
    DegenerateScaler,
    #[error("length mismatch: {0} values vs {1} labels")]
    LengthMismatch(usize, usize),
    #[error("window length must be positive")]
    ZeroWindow,
    #[error("index scale must be positive")]
    BadIndexScale,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Inverse,
}

/// Affine map of `[x_min, x_max]` onto `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub x_min: f32,
    pub x_max: f32,
}

impl Scaler {
    pub fn new(x_min: f32, x_max: f32) -> Result<Self, FeatureError> {
        if !x_min.is_finite() || !x_max.is_finite() || x_max <= x_min {
            return Err(FeatureError::DegenerateScaler);
        }
        Ok(Self { x_min, x_max })
    }

    pub fn forward(&self, x: f32) -> f32 {
        let clamped = x.clamp(self.x_min, self.x_max);
        if clamped != x {
            log::trace!("value {x} outside scaler range [{}, {}]", self.x_min, self.x_max);
        }
        (clamped - self.x_min) / (self.x_max - self.x_min)
    }

    pub fn inverse(&self, y: f32) -> f32 {
        y * (self.x_max - self.x_min) + self.x_min
    }

    pub fn apply(&self, x: f32, direction: Direction) -> f32 {
        match direction {
            Direction::Forward => self.forward(x),
            Direction::Inverse => self.inverse(x),
        }
    }
}

/// Fit on the min and max of the finite values.
pub fn fit_scaler<'a, I: IntoIterator<Item = &'a f32>>(values: I) -> Result<Scaler, FeatureError> {
    let (lo, hi) = values
        .into_iter()
        .filter(|v| v.is_finite())
        .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    Scaler::new(lo, hi)
}

pub fn scale(x: f32, s: &Scaler, direction: Direction) -> f32 {
    s.apply(x, direction)
}

/// Sliding windows over a zero-padded sequence, one per input sample.
///
/// The sequence is padded with `⌊W/2⌋` zeros in front and `⌈W/2⌉` behind, and
/// window `i` is `padded[i .. i + W]`. Sample `i` therefore sits at in-window
/// offset `⌊W/2⌋` and carries label `states[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSet {
    /// Row-major `n × window_len`.
    pub windows: Vec<f32>,
    pub labels: Vec<u8>,
    pub window_len: usize,
}

impl WindowSet {
    pub fn empty(window_len: usize) -> Self {
        Self {
            windows: Vec::new(),
            labels: Vec::new(),
            window_len,
        }
    }

    pub fn label_offset(&self) -> usize {
        self.window_len / 2
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn window(&self, i: usize) -> &[f32] {
        &self.windows[i * self.window_len..(i + 1) * self.window_len]
    }

    pub fn extend(&mut self, other: &WindowSet) {
        assert_eq!(self.window_len, other.window_len);
        self.windows.extend_from_slice(&other.windows);
        self.labels.extend_from_slice(&other.labels);
    }

    /// Rows `range` as a new set.
    pub fn subset(&self, range: std::ops::Range<usize>) -> WindowSet {
        WindowSet {
            windows: self.windows[range.start * self.window_len..range.end * self.window_len].to_vec(),
            labels: self.labels[range].to_vec(),
            window_len: self.window_len,
        }
    }
}

pub fn make_windows(sequence: &[f32], states: &[u8], window: usize) -> Result<WindowSet, FeatureError> {
    if sequence.len() != states.len() {
        return Err(FeatureError::LengthMismatch(sequence.len(), states.len()));
    }
    if window == 0 {
        return Err(FeatureError::ZeroWindow);
    }
    let front = window / 2;
    let back = window - front;
    let mut padded = vec![0.0f32; front + sequence.len() + back];
    padded[front..front + sequence.len()].copy_from_slice(sequence);
    let mut windows = Vec::with_capacity(sequence.len() * window);
    for i in 0..sequence.len() {
        windows.extend_from_slice(&padded[i..i + window]);
    }
    Ok(WindowSet {
        windows,
        labels: states.to_vec(),
        window_len: window,
    })
}

/// Run-length activity index: 0 when off, `k` on the k-th consecutive
/// active step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateIndexSeq {
    pub indices: Vec<u32>,
}

pub fn run_length_index(states: &[u8]) -> StateIndexSeq {
    let mut run = 0u32;
    let indices = states
        .iter()
        .map(|&s| {
            run = if s == 0 { 0 } else { run + 1 };
            run
        })
        .collect();
    StateIndexSeq { indices }
}

/// Lookback rows of past state indices with the (normalized) power at the
/// current step as target. Only active steps produce a sample.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RegressorSamples {
    /// Row-major `n × LOOKBACK`.
    pub inputs: Vec<f32>,
    pub targets: Vec<f32>,
}

impl RegressorSamples {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn input(&self, i: usize) -> &[f32] {
        &self.inputs[i * LOOKBACK..(i + 1) * LOOKBACK]
    }

    pub fn extend(&mut self, other: &RegressorSamples) {
        self.inputs.extend_from_slice(&other.inputs);
        self.targets.extend_from_slice(&other.targets);
    }

    pub fn subset(&self, range: std::ops::Range<usize>) -> RegressorSamples {
        RegressorSamples {
            inputs: self.inputs[range.start * LOOKBACK..range.end * LOOKBACK].to_vec(),
            targets: self.targets[range].to_vec(),
        }
    }
}

/// The `LOOKBACK` indices before step `t`, zero-padded on the left.
pub fn lookback_row(indices: &[u32], t: usize) -> [u32; LOOKBACK] {
    let mut row = [0u32; LOOKBACK];
    for (k, slot) in row.iter_mut().enumerate() {
        // slot k holds index t - LOOKBACK + k
        if let Some(j) = (t + k).checked_sub(LOOKBACK) {
            *slot = indices[j];
        }
    }
    row
}

pub fn make_regressor_samples(
    indices: &StateIndexSeq,
    powers: &[f32],
    power_scaler: &Scaler,
    index_scale: f32,
) -> Result<RegressorSamples, FeatureError> {
    let idx = &indices.indices;
    if idx.len() != powers.len() {
        return Err(FeatureError::LengthMismatch(powers.len(), idx.len()));
    }
    if !index_scale.is_finite() || index_scale <= 0.0 {
        return Err(FeatureError::BadIndexScale);
    }
    let mut out = RegressorSamples::default();
    for t in (0..idx.len()).filter(|&t| idx[t] > 0) {
        out.inputs
            .extend(lookback_row(idx, t).iter().map(|&k| k as f32 / index_scale));
        out.targets.push(power_scaler.forward(powers[t]));
    }
    Ok(out)
}
