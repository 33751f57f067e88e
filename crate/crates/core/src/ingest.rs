//! Reading the low-frequency on-disk layout and turning raw channel readings
//! into regularly sampled, gap-segmented power series.
//!
//! A house directory holds `labels.dat` (one `channel label` pair per line)
//! and one `channel_<n>.dat` per meter (`unix_seconds watts` per line).
//! Readings are bucket-averaged onto a fixed grid; empty buckets become the
//! missing marker (`NaN`).

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

/// Default working period: one sample per minute.
pub const DEFAULT_PERIOD: u32 = 60;

/// Default gap tolerance inside a section (3 minutes).
pub const DEFAULT_MAX_GAP: u32 = 180;

/// Longest series `resample_mean` will allocate, in samples (about a year
/// at one-second resolution).
pub const MAX_SERIES_LEN: usize = 1 << 25;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("no readings to resample")]
    Empty,
    #[error("series are incompatible: {0}")]
    Incompatible(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: Box<IngestError>,
    },
    #[error("readings span {0} samples, more than {MAX_SERIES_LEN}")]
    TooLong(u128),
    #[error("house {house}: no channel labelled {label:?}")]
    MissingLabel { house: u32, label: String },
}

pub type Result<T> = std::result::Result<T, IngestError>;

/// One entry of a house's label index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChannelMeta {
    pub house_id: u32,
    pub channel_id: u32,
    pub label: String,
}

/// Raw `(unix_seconds, watts)` pairs as read from a channel file.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Readings {
    pub pairs: Vec<(i64, f32)>,
}

/// Regularly sampled power. Missing samples are `NaN`.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerSeries {
    pub start_time: i64,
    pub period: u32,
    pub values: Vec<f32>,
}

/// A run of usable samples inside a [`PowerSeries`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GoodSection {
    pub start_index: usize,
    pub length: usize,
}

impl GoodSection {
    pub fn end_index(&self) -> usize {
        self.start_index + self.length
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.start_index..self.end_index()
    }
}

impl PowerSeries {
    pub fn new(start_time: i64, period: u32, values: Vec<f32>) -> Self {
        assert!(period > 0, "period must be positive");
        Self {
            start_time,
            period,
            values,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn end_time(&self) -> i64 {
        self.start_time + self.values.len() as i64 * self.period as i64
    }

    pub fn timestamp(&self, index: usize) -> i64 {
        self.start_time + index as i64 * self.period as i64
    }

    pub fn is_missing(&self, index: usize) -> bool {
        self.values[index].is_nan()
    }

    /// Copy of the samples in `range`, re-anchored at the range start.
    pub fn slice(&self, range: std::ops::Range<usize>) -> PowerSeries {
        PowerSeries {
            start_time: self.timestamp(range.start),
            period: self.period,
            values: self.values[range].to_vec(),
        }
    }

    /// Forward-fill every missing sample inside `section` from the last
    /// present value. Sections begin on a present sample, so every gap has a
    /// predecessor.
    pub fn fill_section(&self, section: GoodSection) -> Vec<f32> {
        let mut out = self.values[section.range()].to_vec();
        let mut last = 0.0f32;
        for v in out.iter_mut() {
            if v.is_nan() {
                *v = last;
            } else {
                last = *v;
            }
        }
        out
    }
}

fn parse_err(line: usize, msg: impl Into<String>) -> IngestError {
    IngestError::Parse {
        line,
        msg: msg.into(),
    }
}

/// Parse a label index (`labels.dat`). Blank lines are skipped; line numbers
/// in errors are 1-based.
pub fn parse_labels(house_id: u32, text: &str) -> Result<Vec<ChannelMeta>> {
    let mut metas: Vec<ChannelMeta> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split_whitespace();
        let (Some(id), Some(label), None) = (fields.next(), fields.next(), fields.next()) else {
            return Err(parse_err(i + 1, "expected `<channel> <label>`"));
        };
        let channel_id: u32 = id
            .parse()
            .map_err(|_| parse_err(i + 1, format!("bad channel id {id:?}")))?;
        if metas.iter().any(|m| m.channel_id == channel_id) {
            return Err(parse_err(i + 1, format!("duplicate channel {channel_id}")));
        }
        metas.push(ChannelMeta {
            house_id,
            channel_id,
            label: label.to_string(),
        });
    }
    Ok(metas)
}

pub fn format_labels(metas: &[ChannelMeta]) -> String {
    let mut out = String::new();
    for m in metas {
        let _ = writeln!(out, "{} {}", m.channel_id, m.label);
    }
    out
}

/// Parse a channel file. Timestamps must be strictly increasing.
pub fn parse_channel(text: &str) -> Result<Readings> {
    let mut pairs: Vec<(i64, f32)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split_whitespace();
        let (Some(ts), Some(w), None) = (fields.next(), fields.next(), fields.next()) else {
            return Err(parse_err(i + 1, "expected `<unix_seconds> <watts>`"));
        };
        let ts: i64 = ts
            .parse()
            .map_err(|_| parse_err(i + 1, format!("bad timestamp {ts:?}")))?;
        let watts: f32 = w
            .parse()
            .map_err(|_| parse_err(i + 1, format!("bad reading {w:?}")))?;
        if !watts.is_finite() {
            return Err(parse_err(i + 1, format!("non-finite reading {w:?}")));
        }
        if let Some(&(prev, _)) = pairs.last() {
            if ts <= prev {
                return Err(parse_err(
                    i + 1,
                    format!("timestamp {ts} not after {prev}"),
                ));
            }
        }
        pairs.push((ts, watts));
    }
    Ok(Readings { pairs })
}

/// Inverse of [`parse_channel`]; f32 `Display` is shortest-round-trip.
pub fn format_channel(readings: &Readings) -> String {
    let mut out = String::with_capacity(readings.pairs.len() * 20);
    for &(t, w) in &readings.pairs {
        let _ = writeln!(out, "{t} {w}");
    }
    out
}

/// Average readings into `[k·period, (k+1)·period)` buckets. The output
/// starts at the first occupied bucket and ends at the last; empty buckets
/// in between are `NaN`.
pub fn resample_mean(readings: &Readings, period: u32) -> Result<PowerSeries> {
    if period == 0 {
        return Err(IngestError::Incompatible("period must be positive".into()));
    }
    let (first, last) = match (readings.pairs.first(), readings.pairs.last()) {
        (Some(f), Some(l)) => (f.0, l.0),
        _ => return Err(IngestError::Empty),
    };
    let p = period as i64;
    let first_bucket = first.div_euclid(p);
    let last_bucket = last.div_euclid(p);
    let span = (last_bucket as i128 - first_bucket as i128 + 1) as u128;
    if span > MAX_SERIES_LEN as u128 {
        return Err(IngestError::TooLong(span));
    }
    let n = span as usize;
    let mut sums = vec![0.0f64; n];
    let mut counts = vec![0u32; n];
    for &(t, w) in &readings.pairs {
        let b = (t.div_euclid(p) - first_bucket) as usize;
        sums[b] += w as f64;
        counts[b] += 1;
    }
    let values = sums
        .iter()
        .zip(&counts)
        .map(|(&s, &c)| if c == 0 { f32::NAN } else { (s / c as f64) as f32 })
        .collect();
    Ok(PowerSeries::new(first_bucket * p, period, values))
}

/// Maximal runs of present samples. A run of `k` missing samples spans a
/// gap of `(k + 1) · period` seconds between its neighbours; gaps up to
/// `max_gap` are bridged (the section includes the missing samples, to be
/// forward-filled by [`PowerSeries::fill_section`]), longer gaps split.
/// Sections always start and end on a present sample.
pub fn good_sections(series: &PowerSeries, max_gap: u32) -> Vec<GoodSection> {
    let period = series.period as u64;
    let mut sections = Vec::new();
    let mut current: Option<(usize, usize)> = None; // (start, last present)
    for (i, v) in series.values.iter().enumerate() {
        if v.is_nan() {
            continue;
        }
        current = match current {
            None => Some((i, i)),
            Some((start, last)) => {
                let gap = (i - last) as u64 * period;
                if gap > max_gap as u64 {
                    sections.push(GoodSection {
                        start_index: start,
                        length: last - start + 1,
                    });
                    Some((i, i))
                } else {
                    Some((start, i))
                }
            }
        };
    }
    if let Some((start, last)) = current {
        sections.push(GoodSection {
            start_index: start,
            length: last - start + 1,
        });
    }
    sections
}

/// Element-wise sum of two series over their common time range. Missing on
/// either side gives missing.
pub fn build_aggregate(a: &PowerSeries, b: &PowerSeries) -> Result<PowerSeries> {
    if a.period != b.period {
        return Err(IngestError::Incompatible(format!(
            "periods differ ({} vs {})",
            a.period, b.period
        )));
    }
    let p = a.period as i64;
    if (a.start_time - b.start_time).rem_euclid(p) != 0 {
        return Err(IngestError::Incompatible("grids are not aligned".into()));
    }
    let start = a.start_time.max(b.start_time);
    let end = a.end_time().min(b.end_time());
    if end <= start {
        return Err(IngestError::Incompatible("no overlapping samples".into()));
    }
    let n = ((end - start) / p) as usize;
    let oa = ((start - a.start_time) / p) as usize;
    let ob = ((start - b.start_time) / p) as usize;
    let values = (0..n).map(|i| a.values[oa + i] + b.values[ob + i]).collect();
    Ok(PowerSeries::new(start, a.period, values))
}

/// Re-grid `series` onto `[start, start + len·period)`, padding with `NaN`
/// outside its range. Grids must be aligned.
pub fn align_to(series: &PowerSeries, start: i64, len: usize) -> Result<PowerSeries> {
    let p = series.period as i64;
    if (series.start_time - start).rem_euclid(p) != 0 {
        return Err(IngestError::Incompatible("grids are not aligned".into()));
    }
    let values = (0..len)
        .map(|i| {
            let t = start + i as i64 * p;
            let j = (t - series.start_time).div_euclid(p);
            if j >= 0 && (j as usize) < series.len() {
                series.values[j as usize]
            } else {
                f32::NAN
            }
        })
        .collect();
    Ok(PowerSeries::new(start, series.period, values))
}

fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn in_file<T>(path: &Path, r: Result<T>) -> Result<T> {
    r.map_err(|e| IngestError::File {
        path: path.to_path_buf(),
        source: Box::new(e),
    })
}

pub fn house_dir(root: &Path, house_id: u32) -> PathBuf {
    root.join(format!("house_{house_id}"))
}

pub fn read_labels(root: &Path, house_id: u32) -> Result<Vec<ChannelMeta>> {
    let path = house_dir(root, house_id).join("labels.dat");
    let text = read_file(&path)?;
    in_file(&path, parse_labels(house_id, &text))
}

pub fn read_channel(root: &Path, house_id: u32, channel_id: u32) -> Result<Readings> {
    let path = house_dir(root, house_id).join(format!("channel_{channel_id}.dat"));
    let text = read_file(&path)?;
    in_file(&path, parse_channel(&text))
}

/// Read and resample every channel whose label is in `labels`, summing them
/// on the common grid (split-phase appliances occupy several channels).
pub fn read_labelled(
    root: &Path,
    house_id: u32,
    metas: &[ChannelMeta],
    labels: &[&str],
    period: u32,
) -> Result<PowerSeries> {
    let mut total: Option<PowerSeries> = None;
    for meta in metas.iter().filter(|m| labels.contains(&m.label.as_str())) {
        let series = resample_mean(&read_channel(root, house_id, meta.channel_id)?, period)?;
        total = Some(match total {
            None => series,
            Some(acc) => build_aggregate(&acc, &series)?,
        });
    }
    total.ok_or_else(|| IngestError::MissingLabel {
        house: house_id,
        label: labels.join("|"),
    })
}

/// Aggregate mains of a house: the sum of its `mains` channels.
pub fn read_mains(root: &Path, house_id: u32, metas: &[ChannelMeta], period: u32) -> Result<PowerSeries> {
    read_labelled(root, house_id, metas, &["mains"], period)
}
