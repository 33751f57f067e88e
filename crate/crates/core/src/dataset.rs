//! House-level data assembly: aligned mains/appliance series and the
//! gap-free segments the trainer and evaluator consume.

use std::collections::BTreeMap;
use std::path::Path;

use crate::ingest::{self, align_to, good_sections, IngestError, PowerSeries};
use crate::synthgen::SimOutput;
use crate::train::{SplitMode, SplitPlan};

/// Channel labels that identify an appliance in a label index.
pub fn appliance_labels(appliance: &str) -> Vec<&str> {
    match appliance {
        "refrigerator" => vec!["refrigerator", "fridge"],
        "dishwasher" => vec!["dishwasher", "dishwaser"],
        "microwave" => vec!["microwave"],
        "washing_machine" => vec!["washer_dryer", "washing_machine"],
        other => vec![other],
    }
}

/// Mains and appliance series of one house on a common grid.
#[derive(Debug, Clone, PartialEq)]
pub struct HouseData {
    pub house_id: u32,
    pub mains: PowerSeries,
    pub appliances: BTreeMap<String, PowerSeries>,
}

impl HouseData {
    pub fn from_simulation(house_id: u32, sim: &SimOutput) -> Self {
        Self {
            house_id,
            mains: sim.mains.clone(),
            appliances: sim.appliances.iter().cloned().collect(),
        }
    }

    pub fn appliance(&self, name: &str) -> Option<&PowerSeries> {
        self.appliances.get(name)
    }
}

/// Load mains plus whichever of `appliances` the house has. Appliance
/// series are re-gridded onto the mains range.
pub fn load_house(root: &Path, house_id: u32, appliances: &[&str], period: u32) -> Result<HouseData, IngestError> {
    let metas = ingest::read_labels(root, house_id)?;
    let mains = ingest::read_mains(root, house_id, &metas, period)?;
    let mut out = BTreeMap::new();
    for &name in appliances {
        let labels = appliance_labels(name);
        if !metas.iter().any(|m| labels.contains(&m.label.as_str())) {
            continue;
        }
        let series = ingest::read_labelled(root, house_id, &metas, &labels, period)?;
        out.insert(name.to_string(), align_to(&series, mains.start_time, mains.len())?);
    }
    Ok(HouseData {
        house_id,
        mains,
        appliances: out,
    })
}

/// A gap-free stretch of aligned mains and appliance power.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub house_id: u32,
    pub start_time: i64,
    pub period: u32,
    pub mains: Vec<f32>,
    pub power: Vec<f32>,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.mains.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mains.is_empty()
    }

    pub fn mains_series(&self) -> PowerSeries {
        PowerSeries::new(self.start_time, self.period, self.mains.clone())
    }

    fn split_at(&self, k: usize) -> (Segment, Segment) {
        let head = Segment {
            mains: self.mains[..k].to_vec(),
            power: self.power[..k].to_vec(),
            ..self.clone()
        };
        let tail = Segment {
            start_time: self.start_time + k as i64 * self.period as i64,
            mains: self.mains[k..].to_vec(),
            power: self.power[k..].to_vec(),
            ..self.clone()
        };
        (head, tail)
    }
}

/// Good sections where both mains and the appliance are present, with short
/// gaps forward-filled. Returns an empty list if the house lacks the
/// appliance.
pub fn segments(house: &HouseData, appliance: &str, max_gap: u32) -> Vec<Segment> {
    let Some(power) = house.appliance(appliance) else {
        return Vec::new();
    };
    let joint = PowerSeries {
        values: house
            .mains
            .values
            .iter()
            .zip(&power.values)
            .map(|(&m, &p)| if m.is_nan() || p.is_nan() { f32::NAN } else { m })
            .collect(),
        ..house.mains.clone()
    };
    let power_joint = PowerSeries {
        values: joint
            .values
            .iter()
            .zip(&power.values)
            .map(|(&m, &p)| if m.is_nan() { f32::NAN } else { p })
            .collect(),
        ..power.clone()
    };
    good_sections(&joint, max_gap)
        .into_iter()
        .map(|s| Segment {
            house_id: house.house_id,
            start_time: joint.timestamp(s.start_index),
            period: joint.period,
            mains: joint.fill_section(s),
            power: power_joint.fill_section(s),
        })
        .collect()
}

/// Chronological split of a house's segments: the first `fraction` of all
/// samples train, the rest test. A segment straddling the cut is divided.
pub fn split_chronological(segments: &[Segment], fraction: f64) -> (Vec<Segment>, Vec<Segment>) {
    let total: usize = segments.iter().map(Segment::len).sum();
    let mut remaining = (total as f64 * fraction).round() as usize;
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for seg in segments {
        if remaining >= seg.len() {
            remaining -= seg.len();
            train.push(seg.clone());
        } else if remaining > 0 {
            let (a, b) = seg.split_at(remaining);
            remaining = 0;
            train.push(a);
            test.push(b);
        } else {
            test.push(seg.clone());
        }
    }
    (train, test)
}

/// Load every house in `ids` that exists under `root`. Missing house
/// directories are skipped with a warning unless `strict`.
pub fn load_houses(
    root: &Path,
    ids: &[u32],
    appliances: &[&str],
    period: u32,
    strict: bool,
) -> Result<Vec<HouseData>, IngestError> {
    let mut out = Vec::new();
    for &id in ids {
        if !strict && !ingest::house_dir(root, id).is_dir() {
            log::warn!("house {id} not found under {}, skipped", root.display());
            continue;
        }
        out.push(load_house(root, id, appliances, period)?);
    }
    Ok(out)
}

/// Training and test segments for `appliance` under `plan`. Same-house
/// plans split each house in time; cross-house plans use whole houses.
pub fn split_segments(
    houses: &[HouseData],
    appliance: &str,
    plan: &SplitPlan,
    max_gap: u32,
) -> (Vec<Segment>, Vec<Segment>) {
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for h in houses {
        let segs = segments(h, appliance, max_gap);
        match plan.mode {
            SplitMode::SameHouse if plan.train_houses.contains(&h.house_id) => {
                let (a, b) = split_chronological(&segs, plan.train_fraction);
                train.extend(a);
                test.extend(b);
            }
            SplitMode::SameHouse => {}
            SplitMode::CrossHouse => {
                if plan.train_houses.contains(&h.house_id) {
                    train.extend(segs.iter().cloned());
                }
                if plan.test_houses.contains(&h.house_id) {
                    test.extend(segs);
                }
            }
        }
    }
    (train, test)
}
