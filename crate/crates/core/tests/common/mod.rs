//! Brute-force reference implementations and random instance generators
//! shared by the oracle suites and the acceptance gate.
#![allow(dead_code)]

use nilm_core::eval::{ClassificationReport, ConfusionCounts, RegressionReport};
use nilm_core::ingest::{GoodSection, PowerSeries, Readings};
use rand::Rng;

/// Window `i`, element `j` is source sample `i + j − ⌊W/2⌋`, or zero when
/// that index falls outside the sequence.
pub fn windows_oracle(seq: &[f32], w: usize) -> Vec<Vec<f32>> {
    let half = (w / 2) as isize;
    (0..seq.len())
        .map(|i| {
            (0..w)
                .map(|j| {
                    let src = i as isize + j as isize - half;
                    if src >= 0 && (src as usize) < seq.len() {
                        seq[src as usize]
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect()
}

/// Count consecutive active steps ending at each position by walking back.
pub fn run_length_oracle(states: &[u8]) -> Vec<u32> {
    (0..states.len())
        .map(|t| {
            let mut k = 0;
            while k <= t && states[t - k] == 1 {
                k += 1;
            }
            k as u32
        })
        .collect()
}

/// Length a segment is brought to: the nearest multiple of the window,
/// ties going up.
pub fn continuous_length_oracle(len: usize, w: usize) -> usize {
    let down = len / w * w;
    let up = down + w;
    if len == down {
        len
    } else if up - len <= len - down {
        up
    } else {
        down
    }
}

pub fn continuous_oracle(seg: &[f32], w: usize) -> Option<Vec<f32>> {
    let n = continuous_length_oracle(seg.len(), w);
    if n == 0 {
        return None;
    }
    Some((0..n).map(|i| seg.get(i).copied().unwrap_or(0.0)).collect())
}

pub fn confusion_oracle(pred: &[u8], truth: &[u8]) -> ConfusionCounts {
    let count = |p: u8, t: u8| pred.iter().zip(truth).filter(|&(&a, &b)| a == p && b == t).count() as u64;
    ConfusionCounts {
        tp: count(1, 1),
        fp: count(1, 0),
        fn_: count(0, 1),
        tn: count(0, 0),
    }
}

/// F1 as the harmonic mean written via counts: `2tp / (2tp + fp + fn)`.
pub fn classification_oracle(pred: &[u8], truth: &[u8]) -> ClassificationReport {
    let c = confusion_oracle(pred, truth);
    let div = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    ClassificationReport {
        precision: div(c.tp, c.tp + c.fp),
        recall: div(c.tp, c.tp + c.fn_),
        f1: div(2 * c.tp, 2 * c.tp + c.fp + c.fn_),
        accuracy: div(c.tp + c.tn, pred.len() as u64),
    }
}

pub fn regression_oracle(pred: &[f32], truth: &[f32]) -> RegressionReport {
    let mut abs = Vec::new();
    let mut sq = Vec::new();
    for i in 0..pred.len() {
        let d = f64::from(pred[i]) - f64::from(truth[i]);
        abs.push(d.abs());
        sq.push(d * d);
    }
    let n = pred.len() as f64;
    RegressionReport {
        mae: abs.iter().sum::<f64>() / n,
        mse: sq.iter().sum::<f64>() / n,
    }
}

/// Mean of the readings in every bucket between the first and last
/// occupied one, found by scanning all readings per bucket.
pub fn resample_oracle(pairs: &[(i64, f32)], period: i64) -> (i64, Vec<Option<f64>>) {
    let bucket = |t: i64| t.div_euclid(period);
    let lo = pairs.iter().map(|p| bucket(p.0)).min().unwrap();
    let hi = pairs.iter().map(|p| bucket(p.0)).max().unwrap();
    let values = (lo..=hi)
        .map(|b| {
            let hits: Vec<f64> = pairs.iter().filter(|p| bucket(p.0) == b).map(|p| f64::from(p.1)).collect();
            (!hits.is_empty()).then(|| hits.iter().sum::<f64>() / hits.len() as f64)
        })
        .collect();
    (lo * period, values)
}

/// Sections from a present-mask: split wherever the time between two
/// consecutive present samples exceeds `max_gap`.
pub fn sections_oracle(present: &[bool], period: u32, max_gap: u32) -> Vec<(usize, usize)> {
    let idx: Vec<usize> = (0..present.len()).filter(|&i| present[i]).collect();
    let mut out = Vec::new();
    let mut start = 0;
    for k in 0..idx.len() {
        let last = k + 1 == idx.len();
        if last || (idx[k + 1] - idx[k]) as u64 * period as u64 > max_gap as u64 {
            out.push((idx[start], idx[k] - idx[start] + 1));
            start = k + 1;
        }
    }
    out
}

pub fn sections_as_pairs(s: &[GoodSection]) -> Vec<(usize, usize)> {
    s.iter().map(|g| (g.start_index, g.length)).collect()
}

/// Threshold, drop short on-runs, then bridge short interior off-runs,
/// written as explicit run scans over a fresh copy at each stage.
pub fn on_state_oracle(values: &[f32], period: u32, threshold: f32, min_on: u32, min_off: u32) -> Vec<u8> {
    let to_samples = |s: u32| (s as usize).div_ceil(period as usize);
    let (min_on, min_off) = (to_samples(min_on), to_samples(min_off));
    let mut l: Vec<u8> = values.iter().map(|&v| (v > threshold) as u8).collect();
    let runs = |l: &[u8]| {
        let mut r = Vec::new();
        let mut i = 0;
        while i < l.len() {
            let mut j = i;
            while j < l.len() && l[j] == l[i] {
                j += 1;
            }
            r.push((l[i], i, j));
            i = j;
        }
        r
    };
    for (v, i, j) in runs(&l) {
        if v == 1 && j - i < min_on {
            l[i..j].iter_mut().for_each(|x| *x = 0);
        }
    }
    let n = l.len();
    for (v, i, j) in runs(&l) {
        if v == 0 && i > 0 && j < n && j - i < min_off {
            l[i..j].iter_mut().for_each(|x| *x = 1);
        }
    }
    l
}

pub fn random_states<R: Rng>(rng: &mut R, n: usize) -> Vec<u8> {
    let p_on = rng.random_range(0.0..1.0);
    let stickiness = rng.random_range(0.0..0.95);
    let mut s = Vec::with_capacity(n);
    let mut cur = u8::from(rng.random_bool(p_on));
    for _ in 0..n {
        if !rng.random_bool(stickiness) {
            cur = u8::from(rng.random_bool(p_on));
        }
        s.push(cur);
    }
    s
}

pub fn random_values<R: Rng>(rng: &mut R, n: usize, hi: f32) -> Vec<f32> {
    (0..n).map(|_| rng.random_range(0.0..hi)).collect()
}

/// Irregular readings with strictly increasing timestamps.
pub fn random_readings<R: Rng>(rng: &mut R, n: usize) -> Readings {
    let mut t = rng.random_range(-1_000..2_000_000_000i64);
    let mut pairs = Vec::with_capacity(n);
    for _ in 0..n {
        let max_step = if rng.random_bool(0.1) { 400 } else { 6 };
        t += rng.random_range(1..=max_step);
        pairs.push((t, (rng.random_range(0..40_000) as f32) / 8.0));
    }
    Readings { pairs }
}

pub fn masked_series<R: Rng>(rng: &mut R, n: usize, period: u32) -> PowerSeries {
    let p_missing = rng.random_range(0.0..0.5);
    let values = (0..n)
        .map(|_| if rng.random_bool(p_missing) { f32::NAN } else { rng.random_range(0.0..500.0) })
        .collect();
    PowerSeries::new(0, period, values)
}

/// Bundle with random weights (including signed zeros, subnormals and
/// NaN payloads), random metadata, and either the shipped networks or a
/// random small stack.
pub fn random_bundle<R: Rng>(rng: &mut R) -> nilm_core::models::ModelBundle {
    use nilm_core::features::Scaler;
    use nilm_core::models::{build_classifier, build_regressor, ModelBundle};
    use nilm_core::nn::{Activation, Init, LayerSpec, Network};
    use nilm_core::signature::{ApplianceParams, OffStats};

    let names = ["refrigerator", "microwave", "dishwasher", "washing_machine", "kettle", "ünïcode"];
    let name = names[rng.random_range(0..names.len())].to_string();
    let (mut classifier, mut regressor): (Network<f32>, Network<f32>) = if rng.random_bool(0.2) {
        let w = [10, 15, 20, 25, 30][rng.random_range(0..5)];
        (build_classifier(w, rng.random()).unwrap(), build_regressor(rng.random()).unwrap())
    } else {
        let mut specs = Vec::new();
        for _ in 0..rng.random_range(0..5) {
            specs.push(match rng.random_range(0..4) {
                0 => LayerSpec::Conv1d { filters: rng.random_range(1..4), kernel: rng.random_range(1..3) },
                1 => LayerSpec::Relu,
                2 => LayerSpec::MaxPool1d { width: 1 },
                _ => LayerSpec::Lstm {
                    units: rng.random_range(1..4),
                    activation: if rng.random_bool(0.5) { Activation::Relu } else { Activation::Tanh },
                    return_sequences: true,
                },
            });
        }
        if rng.random_bool(0.7) {
            specs.push(LayerSpec::Dense { units: rng.random_range(1..5) });
            if rng.random_bool(0.5) {
                specs.push(LayerSpec::Softmax);
            }
        }
        let len = rng.random_range(4..12);
        let c = Network::build(&[len, rng.random_range(1..3)], &specs, Init::Seeded, rng).unwrap();
        let r = Network::build(&[5, 1], &specs, Init::Seeded, rng).unwrap();
        (c, r)
    };
    for net in [&mut classifier, &mut regressor] {
        for t in net.params_mut() {
            for v in t.data_mut() {
                *v = match rng.random_range(0..20) {
                    0 => -0.0,
                    1 => f32::from_bits(rng.random_range(1..0x0080_0000)),
                    2 => f32::from_bits(0x7fc0_0000 | rng.random_range(0..0x0040_0000)),
                    3 => f32::INFINITY,
                    _ => rng.random_range(-3.0..3.0),
                };
            }
        }
    }
    let lo: f32 = rng.random_range(-100.0..100.0);
    let plo: f32 = rng.random_range(0.0..10.0);
    ModelBundle {
        params: ApplianceParams::new(&name, rng.random_range(1.0..500.0), rng.random(), rng.random()).unwrap(),
        appliance: name,
        period: rng.random_range(1..3600),
        classifier,
        regressor,
        mains_scaler: Scaler::new(lo, lo + rng.random_range(1.0..5000.0)).unwrap(),
        power_scaler: Scaler::new(plo, plo + rng.random_range(1.0..3000.0)).unwrap(),
        index_scale: rng.random_range(1.0..500.0),
        off: OffStats { off_mean: rng.random_range(0.0..20.0) },
    }
}
