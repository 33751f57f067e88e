//! Binary model bundle, format version 1. All integers and floats are
//! little-endian; strings are a `u16` byte length followed by UTF-8.
//!
//! ```text
//! "NILM" u16:version
//! str:appliance u32:period
//! f32:mains_min f32:mains_max f32:power_min f32:power_max f32:index_scale
//! f32:on_threshold u32:min_on u32:min_off f32:off_mean
//! network × 2 (classifier, regressor):
//!   str:name u8:rank u32×rank:input_dims u16:layer_count
//!   layer × layer_count:
//!     str:name u8:kind hyperparameters u8:tensor_count
//!     tensor × tensor_count: str:name u8:rank u32×rank:dims f32×∏dims
//! ```
//!
//! Layer kinds and their hyperparameters: 0 conv1d (`u32 filters, u32
//! kernel`), 1 maxpool1d (`u32 width`), 2 dense (`u32 units`), 3 lstm (`u32
//! units, u8 activation {0 tanh, 1 relu}, u8 return_sequences`), 4 relu,
//! 5 softmax. Layer `i` is named `{kind}_{i}`; tensors carry their
//! parameter names. Decoding accepts exactly the byte strings `encode`
//! produces, so any file that loads re-saves byte-identically.

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::features::Scaler;
use crate::models::ModelBundle;
use crate::nn::{Activation, LayerSpec, Network, Tensor};
use crate::signature::{ApplianceParams, OffStats};

pub const MAGIC: &[u8; 4] = b"NILM";
pub const FORMAT_VERSION: u16 = 1;
/// Size cap for one appliance's bundle file.
pub const MAX_BUNDLE_BYTES: usize = 300 * 1024;

const MAX_RANK: usize = 4;
const MAX_DIM: u32 = 1 << 16;
const MAX_INPUT_ELEMS: usize = 1 << 24;
const NETWORK_NAMES: [&str; 2] = ["classifier", "regressor"];

#[derive(Debug, Error)]
pub enum BundleError {
    #[error("bad magic: not a bundle file")]
    BadMagic,
    #[error("unsupported bundle version {0}")]
    UnsupportedVersion(u16),
    #[error("unexpected end of bundle data at byte {0}")]
    UnexpectedEnd(usize),
    #[error("invalid bundle content at byte {offset}: {msg}")]
    Invalid { offset: usize, msg: String },
    #[error("{0} trailing bytes after bundle")]
    TrailingBytes(usize),
    #[error("bundle is {0} bytes, limit is {MAX_BUNDLE_BYTES}")]
    TooLarge(usize),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

type Result<T> = std::result::Result<T, BundleError>;

fn invalid<T>(offset: usize, msg: impl Into<String>) -> Result<T> {
    Err(BundleError::Invalid {
        offset,
        msg: msg.into(),
    })
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u16(&mut self, v: u16) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f32(&mut self, v: f32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn str(&mut self, s: &str) -> Result<()> {
        let len = u16::try_from(s.len()).or_else(|_| invalid(self.0.len(), "string longer than 65535 bytes"))?;
        self.u16(len);
        self.0.extend_from_slice(s.as_bytes());
        Ok(())
    }
    fn count(&mut self, v: usize) -> Result<()> {
        let v = u32::try_from(v).or_else(|_| invalid(self.0.len(), "value exceeds 32 bits"))?;
        self.u32(v);
        Ok(())
    }
    fn dims(&mut self, dims: &[usize]) -> Result<()> {
        self.u8(dims.len() as u8);
        dims.iter().try_for_each(|&d| self.count(d))
    }
}

fn kind_code(spec: &LayerSpec) -> u8 {
    match spec {
        LayerSpec::Conv1d { .. } => 0,
        LayerSpec::MaxPool1d { .. } => 1,
        LayerSpec::Dense { .. } => 2,
        LayerSpec::Lstm { .. } => 3,
        LayerSpec::Relu => 4,
        LayerSpec::Softmax => 5,
    }
}

fn encode_network(w: &mut Writer, name: &str, net: &Network<f32>) -> Result<()> {
    w.str(name)?;
    if net.input_shape.len() > MAX_RANK {
        return invalid(w.0.len(), "input rank above 4");
    }
    w.dims(&net.input_shape)?;
    let n = u16::try_from(net.layers.len()).or_else(|_| invalid(w.0.len(), "too many layers"))?;
    w.u16(n);
    for (i, layer) in net.layers.iter().enumerate() {
        w.str(&format!("{}_{i}", layer.spec.kind_name()))?;
        w.u8(kind_code(&layer.spec));
        match layer.spec {
            LayerSpec::Conv1d { filters, kernel } => {
                w.count(filters)?;
                w.count(kernel)?;
            }
            LayerSpec::MaxPool1d { width } => w.count(width)?,
            LayerSpec::Dense { units } => w.count(units)?,
            LayerSpec::Lstm {
                units,
                activation,
                return_sequences,
            } => {
                w.count(units)?;
                w.u8(match activation {
                    Activation::Tanh => 0,
                    Activation::Relu => 1,
                });
                w.u8(u8::from(return_sequences));
            }
            LayerSpec::Relu | LayerSpec::Softmax => {}
        }
        w.u8(layer.params.len() as u8);
        for (t, pname) in layer.params.iter().zip(layer.spec.param_names()) {
            w.str(pname)?;
            w.dims(t.shape())?;
            t.data().iter().for_each(|&v| w.f32(v));
        }
    }
    Ok(())
}

fn validate(bundle: &ModelBundle) -> Result<()> {
    let fail = |msg: String| invalid(0, msg);
    if bundle.params.name != bundle.appliance {
        return fail(format!(
            "parameter set {:?} does not belong to appliance {:?}",
            bundle.params.name, bundle.appliance
        ));
    }
    if let Err(e) = bundle.params.validate() {
        return fail(e.to_string());
    }
    if bundle.period == 0 {
        return fail("period must be positive".into());
    }
    for s in [&bundle.mains_scaler, &bundle.power_scaler] {
        if Scaler::new(s.x_min, s.x_max).is_err() {
            return fail(format!("degenerate scaler [{}, {}]", s.x_min, s.x_max));
        }
    }
    if !(bundle.index_scale > 0.0 && bundle.index_scale.is_finite()) {
        return fail(format!("index scale {} must be positive", bundle.index_scale));
    }
    if !(bundle.off.off_mean >= 0.0 && bundle.off.off_mean.is_finite()) {
        return fail(format!("off mean {} must be non-negative", bundle.off.off_mean));
    }
    if let Err(e) = bundle.check_budget() {
        return fail(e.to_string());
    }
    Ok(())
}

/// Serialize a bundle. Fails if the bundle breaks its invariants or the
/// result would exceed [`MAX_BUNDLE_BYTES`].
pub fn encode(bundle: &ModelBundle) -> Result<Vec<u8>> {
    validate(bundle)?;
    let mut w = Writer(Vec::with_capacity(4 * bundle.param_count() + 1024));
    w.0.extend_from_slice(MAGIC);
    w.u16(FORMAT_VERSION);
    w.str(&bundle.appliance)?;
    w.u32(bundle.period);
    for v in [
        bundle.mains_scaler.x_min,
        bundle.mains_scaler.x_max,
        bundle.power_scaler.x_min,
        bundle.power_scaler.x_max,
        bundle.index_scale,
        bundle.params.on_threshold,
    ] {
        w.f32(v);
    }
    w.u32(bundle.params.min_on);
    w.u32(bundle.params.min_off);
    w.f32(bundle.off.off_mean);
    encode_network(&mut w, NETWORK_NAMES[0], &bundle.classifier)?;
    encode_network(&mut w, NETWORK_NAMES[1], &bundle.regressor)?;
    if w.0.len() > MAX_BUNDLE_BYTES {
        return Err(BundleError::TooLarge(w.0.len()));
    }
    Ok(w.0)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(BundleError::UnexpectedEnd(self.buf.len()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.array::<1>()?[0])
    }
    fn u16(&mut self) -> Result<u16> {
        self.array().map(u16::from_le_bytes)
    }
    fn u32(&mut self) -> Result<u32> {
        self.array().map(u32::from_le_bytes)
    }
    fn f32(&mut self) -> Result<f32> {
        self.array().map(f32::from_le_bytes)
    }
    fn str(&mut self) -> Result<String> {
        let at = self.pos;
        let len = self.u16()? as usize;
        match std::str::from_utf8(self.take(len)?) {
            Ok(s) => Ok(s.to_string()),
            Err(_) => invalid(at, "string is not UTF-8"),
        }
    }
    fn expect_str(&mut self, want: &str) -> Result<()> {
        let at = self.pos;
        let got = self.str()?;
        if got != want {
            return invalid(at, format!("expected name {want:?}, found {got:?}"));
        }
        Ok(())
    }
    fn dim(&mut self) -> Result<usize> {
        let at = self.pos;
        let v = self.u32()?;
        if v == 0 || v > MAX_DIM {
            return invalid(at, format!("size {v} outside 1..={MAX_DIM}"));
        }
        Ok(v as usize)
    }
    fn dims(&mut self) -> Result<Vec<usize>> {
        let at = self.pos;
        let rank = self.u8()? as usize;
        if rank == 0 || rank > MAX_RANK {
            return invalid(at, format!("rank {rank} outside 1..={MAX_RANK}"));
        }
        (0..rank).map(|_| self.dim()).collect()
    }
    fn flag(&mut self) -> Result<bool> {
        let at = self.pos;
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            v => invalid(at, format!("flag byte {v}")),
        }
    }
}

fn decode_layer(r: &mut Reader, index: usize) -> Result<(LayerSpec, Vec<Tensor<f32>>)> {
    let name_at = r.pos;
    let name = r.str()?;
    let kind_at = r.pos;
    let spec = match r.u8()? {
        0 => LayerSpec::Conv1d {
            filters: r.dim()?,
            kernel: r.dim()?,
        },
        1 => LayerSpec::MaxPool1d { width: r.dim()? },
        2 => LayerSpec::Dense { units: r.dim()? },
        3 => LayerSpec::Lstm {
            units: r.dim()?,
            activation: if r.flag()? { Activation::Relu } else { Activation::Tanh },
            return_sequences: r.flag()?,
        },
        4 => LayerSpec::Relu,
        5 => LayerSpec::Softmax,
        k => return invalid(kind_at, format!("unknown layer kind {k}")),
    };
    if name != format!("{}_{index}", spec.kind_name()) {
        return invalid(name_at, format!("layer {index} is named {name:?}"));
    }
    let count_at = r.pos;
    let names = spec.param_names();
    let count = r.u8()? as usize;
    if count != names.len() {
        return invalid(count_at, format!("{} expects {} tensors, found {count}", spec.kind_name(), names.len()));
    }
    let mut tensors = Vec::with_capacity(count);
    for pname in names {
        r.expect_str(pname)?;
        let dims = r.dims()?;
        let n = dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d));
        let bytes = n.and_then(|n| n.checked_mul(4)).ok_or(BundleError::UnexpectedEnd(r.buf.len()))?;
        let raw = r.take(bytes)?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("chunk of 4")))
            .collect();
        tensors.push(Tensor::new(dims, data).expect("dims positive and length matched"));
    }
    Ok((spec, tensors))
}

fn decode_network(r: &mut Reader, name: &str) -> Result<Network<f32>> {
    r.expect_str(name)?;
    let shape_at = r.pos;
    let input = r.dims()?;
    if input.iter().try_fold(1usize, |a, &d| a.checked_mul(d)).is_none_or(|n| n > MAX_INPUT_ELEMS) {
        return invalid(shape_at, "input shape too large");
    }
    let n = r.u16()? as usize;
    let mut parts = Vec::with_capacity(n.min(64));
    for i in 0..n {
        parts.push(decode_layer(r, i)?);
    }
    Network::from_parts(&input, parts).or_else(|e| invalid(shape_at, format!("{name}: {e}")))
}

/// Parse a bundle from bytes.
pub fn decode(bytes: &[u8]) -> Result<ModelBundle> {
    if bytes.len() > MAX_BUNDLE_BYTES {
        return Err(BundleError::TooLarge(bytes.len()));
    }
    let mut r = Reader { buf: bytes, pos: 0 };
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(BundleError::BadMagic);
    }
    r.pos = MAGIC.len();
    let version = r.u16()?;
    if version != FORMAT_VERSION {
        return Err(BundleError::UnsupportedVersion(version));
    }
    let appliance = r.str()?;
    let period = r.u32()?;
    let mut f = [0f32; 6];
    for v in &mut f {
        *v = r.f32()?;
    }
    let [mains_min, mains_max, power_min, power_max, index_scale, on_threshold] = f;
    let min_on = r.u32()?;
    let min_off = r.u32()?;
    let off_mean = r.f32()?;
    let classifier = decode_network(&mut r, NETWORK_NAMES[0])?;
    let regressor = decode_network(&mut r, NETWORK_NAMES[1])?;
    if r.pos != bytes.len() {
        return Err(BundleError::TrailingBytes(bytes.len() - r.pos));
    }
    let bundle = ModelBundle {
        params: ApplianceParams {
            name: appliance.clone(),
            on_threshold,
            min_on,
            min_off,
        },
        appliance,
        period,
        classifier,
        regressor,
        mains_scaler: Scaler {
            x_min: mains_min,
            x_max: mains_max,
        },
        power_scaler: Scaler {
            x_min: power_min,
            x_max: power_max,
        },
        index_scale,
        off: OffStats { off_mean },
    };
    validate(&bundle)?;
    Ok(bundle)
}

/// Write a bundle to `path`; returns the number of bytes written.
pub fn save_bundle(bundle: &ModelBundle, path: &Path) -> Result<usize> {
    let bytes = encode(bundle)?;
    std::fs::write(path, &bytes).map_err(|source| BundleError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(bytes.len())
}

pub fn load_bundle(path: &Path) -> Result<ModelBundle> {
    let bytes = std::fs::read(path).map_err(|source| BundleError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    decode(&bytes)
}
