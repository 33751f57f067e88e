//! Deterministic synthetic households with known per-appliance ground truth.
//!
//! Randomness comes from a single `ChaCha8Rng` stream seeded from
//! [`SimHouse::seed`], consumed in a fixed order (appliances in declaration
//! order, then mains noise), so traces are identical on every platform.
//! Appliance traces take integer watt values, so noise-free mains equal
//! base load plus the appliance sum exactly.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};

use crate::ingest::{format_channel, format_labels, ChannelMeta, PowerSeries, Readings, DEFAULT_PERIOD};

/// 2011-04-18 00:00:00 UTC.
pub const DEFAULT_START: i64 = 1_303_084_800;

pub const SAMPLES_PER_DAY: usize = 1440;

#[derive(Debug, Clone, PartialEq)]
pub enum DutyPattern {
    /// Alternating on/off runs, each jittered uniformly by ±20 %.
    Periodic,
    /// Short uniform-length bursts separated by exponential idle times.
    Bursty,
    /// A fixed program of `(watts, samples)` plateaus, separated by
    /// exponential idle times.
    MultiState { plateaus: Vec<(f32, usize)> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApplianceProfile {
    pub name: String,
    /// Power at the first on-sample.
    pub on_power: f32,
    /// Watts lost per on-sample (periodic/bursty).
    pub decay_per_step: f32,
    /// Mean on and off durations in samples.
    pub mean_on: f64,
    pub mean_off: f64,
    pub pattern: DutyPattern,
}

impl ApplianceProfile {
    /// Compressor-style cycling: 150 W falling 2 W per minute, roughly
    /// 15 minutes on and 30 off.
    pub fn fridge() -> Self {
        Self {
            name: "refrigerator".into(),
            on_power: 150.0,
            decay_per_step: 2.0,
            mean_on: 15.0,
            mean_off: 30.0,
            pattern: DutyPattern::Periodic,
        }
    }

    /// 1500 W bursts of one or two minutes, a handful per day.
    pub fn microwave() -> Self {
        Self {
            name: "microwave".into(),
            on_power: 1500.0,
            decay_per_step: 0.0,
            mean_on: 1.5,
            mean_off: 240.0,
            pattern: DutyPattern::Bursty,
        }
    }

    /// Wash/heat/dry program of 200, 700 and 250 W, about once a day.
    pub fn dishwasher() -> Self {
        let plateaus = vec![(200.0, 30), (700.0, 60), (250.0, 30)];
        Self {
            name: "dishwasher".into(),
            on_power: 200.0,
            decay_per_step: 0.0,
            mean_on: 120.0,
            mean_off: 1320.0,
            pattern: DutyPattern::MultiState { plateaus },
        }
    }

    fn on_run<R: Rng>(&self, rng: &mut R, out: &mut Vec<f32>, limit: usize) {
        let decaying = |len: usize, out: &mut Vec<f32>| {
            for k in 0..len {
                if out.len() == limit {
                    return;
                }
                out.push((self.on_power - self.decay_per_step * k as f32).max(1.0));
            }
        };
        match &self.pattern {
            DutyPattern::Periodic => {
                let len = (self.mean_on * rng.random_range(0.8..1.2)).round().max(1.0) as usize;
                decaying(len, out);
            }
            DutyPattern::Bursty => {
                let hi = (2.0 * self.mean_on - 1.0).round().max(1.0) as usize;
                decaying(rng.random_range(1..=hi), out);
            }
            DutyPattern::MultiState { plateaus } => {
                for &(watts, len) in plateaus {
                    for _ in 0..len {
                        if out.len() == limit {
                            return;
                        }
                        out.push(watts);
                    }
                }
            }
        }
    }

    fn off_len<R: Rng>(&self, rng: &mut R) -> usize {
        match self.pattern {
            DutyPattern::Periodic => (self.mean_off * rng.random_range(0.8..1.2)).round().max(1.0) as usize,
            _ => {
                let exp = Exp::new(1.0 / self.mean_off.max(1.0)).expect("positive rate");
                (exp.sample(rng).round() as usize).max(1)
            }
        }
    }

    /// Trace of `duration` samples, starting at a random point of an off run.
    pub fn simulate<R: Rng>(&self, duration: usize, rng: &mut R) -> Vec<f32> {
        let mut out = Vec::with_capacity(duration);
        let first_off = rng.random_range(0..=self.mean_off.max(1.0) as usize);
        out.resize(first_off.min(duration), 0.0);
        while out.len() < duration {
            self.on_run(rng, &mut out, duration);
            let off = self.off_len(rng);
            let end = (out.len() + off).min(duration);
            out.resize(end, 0.0);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimHouse {
    pub base_load: f32,
    pub noise_std: f32,
    pub profiles: Vec<ApplianceProfile>,
    /// Number of samples.
    pub duration: usize,
    pub seed: u64,
    pub start_time: i64,
    pub period: u32,
}

impl SimHouse {
    /// The shipped three-appliance house.
    pub fn standard(days: usize, seed: u64) -> Self {
        Self {
            base_load: 120.0,
            noise_std: 8.0,
            profiles: vec![
                ApplianceProfile::fridge(),
                ApplianceProfile::microwave(),
                ApplianceProfile::dishwasher(),
            ],
            duration: days * SAMPLES_PER_DAY,
            seed,
            start_time: DEFAULT_START,
            period: DEFAULT_PERIOD,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOutput {
    pub mains: PowerSeries,
    pub appliances: Vec<(String, PowerSeries)>,
}

pub fn simulate_house(config: &SimHouse) -> SimOutput {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n = config.duration.max(1);
    let traces: Vec<Vec<f32>> = config.profiles.iter().map(|p| p.simulate(n, &mut rng)).collect();
    let noise = Normal::new(0.0f64, config.noise_std.max(0.0) as f64).expect("finite std");
    let mains: Vec<f32> = (0..n)
        .map(|i| {
            let clean = traces.iter().fold(config.base_load, |acc, t| acc + t[i]);
            if config.noise_std > 0.0 {
                (clean + noise.sample(&mut rng) as f32).max(0.0)
            } else {
                clean
            }
        })
        .collect();
    let series = |values| PowerSeries::new(config.start_time, config.period, values);
    SimOutput {
        mains: series(mains),
        appliances: config
            .profiles
            .iter()
            .zip(traces)
            .map(|(p, t)| (p.name.clone(), series(t)))
            .collect(),
    }
}

fn readings(series: &PowerSeries) -> Readings {
    Readings {
        pairs: series
            .values
            .iter()
            .enumerate()
            .map(|(i, &v)| (series.timestamp(i), v))
            .collect(),
    }
}

/// Write `house_<id>/` in the on-disk dataset layout: mains split evenly
/// over channels 1 and 2, appliances on channels 3 onwards.
pub fn write_house(root: &Path, house_id: u32, sim: &SimOutput) -> std::io::Result<()> {
    let dir = root.join(format!("house_{house_id}"));
    std::fs::create_dir_all(&dir)?;
    let half = PowerSeries {
        values: sim.mains.values.iter().map(|v| v * 0.5).collect(),
        ..sim.mains.clone()
    };
    let mut metas = vec![
        ChannelMeta { house_id, channel_id: 1, label: "mains".into() },
        ChannelMeta { house_id, channel_id: 2, label: "mains".into() },
    ];
    std::fs::write(dir.join("channel_1.dat"), format_channel(&readings(&half)))?;
    std::fs::write(dir.join("channel_2.dat"), format_channel(&readings(&half)))?;
    for (k, (name, series)) in sim.appliances.iter().enumerate() {
        let id = 3 + k as u32;
        metas.push(ChannelMeta { house_id, channel_id: id, label: name.clone() });
        std::fs::write(dir.join(format!("channel_{id}.dat")), format_channel(&readings(series)))?;
    }
    std::fs::write(dir.join("labels.dat"), format_labels(&metas))
}
