//! Central finite-difference verification of analytic gradients.
//!
//! A central difference of a loss `L` computed in f64 carries rounding
//! noise of about `ε·|L| / h`. Coordinates whose gradient is too small for
//! that noise to be below one part in [`RESOLUTION_FACTOR`] cannot be
//! compared in relative terms; they are counted separately and checked
//! against the noise level instead.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::loss::LossKind;
use super::network::Network;
use super::NnError;

pub const DEFAULT_STEP: f64 = 1e-5;

/// Minimum ratio of gradient magnitude to finite-difference noise for a
/// coordinate to enter the relative-error statistic.
pub const RESOLUTION_FACTOR: f64 = 1e7;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// Max of `|a − n| / max(|a|, |n|)` over resolved coordinates.
    pub max_rel_error: f64,
    /// Coordinates entering `max_rel_error`.
    pub checked: usize,
    /// Coordinates skipped because `±h` crossed a ReLU or pooling kink.
    pub skipped_kinks: usize,
    /// Coordinates whose gradient lies below the resolution threshold.
    pub below_resolution: usize,
    /// Max of `|a − n| / noise` over those coordinates.
    pub max_unresolved_noise_ratio: f64,
}

/// Compare analytic gradients against central differences on randomly
/// ordered parameter coordinates until `samples` of them have been
/// resolved (or the parameters run out).
pub fn gradient_check(
    network: &Network<f64>,
    input: &[f64],
    target: &[f64],
    kind: LossKind,
    samples: usize,
    step: f64,
    seed: u64,
) -> Result<GradCheckReport, NnError> {
    let mut grads = network.zero_grads();
    network.accumulate_gradients(input, target, kind, 1.0, &mut grads)?;
    let analytic: Vec<f64> = grads.iter().flat_map(|g| g.data().iter().copied()).collect();

    // (tensor, element) for each flat coordinate
    let coords: Vec<(usize, usize)> = network
        .params()
        .enumerate()
        .flat_map(|(t, p)| (0..p.len()).map(move |e| (t, e)))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let order = sample(&mut rng, coords.len(), coords.len());
    let mut probe = network.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        checked: 0,
        skipped_kinks: 0,
        below_resolution: 0,
        max_unresolved_noise_ratio: 0.0,
    };
    let base_pattern = network.kink_pattern(input);

    for flat in order.iter() {
        if report.checked >= samples {
            break;
        }
        let (t, e) = coords[flat];
        let original = probe.params().nth(t).map(|p| p.data()[e]).unwrap_or_default();
        let eval = |v: f64, probe: &mut Network<f64>| -> Result<(f64, Vec<u64>), NnError> {
            probe.params_mut().nth(t).expect("tensor index").data_mut()[e] = v;
            let l = probe.sample_loss(input, target, kind)?;
            Ok((l, probe.kink_pattern(input)))
        };
        let (plus, pat_plus) = eval(original + step, &mut probe)?;
        let (minus, pat_minus) = eval(original - step, &mut probe)?;
        probe.params_mut().nth(t).expect("tensor index").data_mut()[e] = original;
        if pat_plus != base_pattern || pat_minus != base_pattern {
            report.skipped_kinks += 1;
            continue;
        }
        let numeric = (plus - minus) / (2.0 * step);
        let a = analytic[flat];
        let noise = f64::EPSILON * plus.abs().max(minus.abs()).max(f64::MIN_POSITIVE) / step;
        let magnitude = a.abs().max(numeric.abs());
        if magnitude < RESOLUTION_FACTOR * noise {
            report.below_resolution += 1;
            report.max_unresolved_noise_ratio = report.max_unresolved_noise_ratio.max((a - numeric).abs() / noise);
            continue;
        }
        let rel = (a - numeric).abs() / magnitude;
        report.max_rel_error = report.max_rel_error.max(rel);
        report.checked += 1;
    }
    Ok(report)
}
