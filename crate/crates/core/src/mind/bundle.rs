//! `.bkw` weight bundles.
//!
//! Layout:
//!
//! | bytes          | content                                         |
//! |----------------|-------------------------------------------------|
//! | 0..4           | magic `BKW1`                                    |
//! | 4..12          | header length `N`, little-endian u64            |
//! | 12..12+N       | UTF-8 JSON header                               |
//! | 12+N..         | tensor payload, little-endian IEEE-754 binary32 |
//!
//! The header is
//! `{"format_version": 1, "spec": NetworkSpec, "tensors": [{"name", "shape", "offset", "length"}]}`
//! with `offset` and `length` in bytes relative to the payload start.
//! Tensors are row-major.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::spec::NetworkSpec;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"BKW1";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::Bundle(format!("shape {shape:?} holds {expected} values, got {}", data.len())));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self { shape, data: vec![0.0; n] }
    }

    pub fn filled(shape: Vec<usize>, value: f32) -> Self {
        let n = shape.iter().product();
        Self { shape, data: vec![value; n] }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightBundle {
    pub spec: NetworkSpec,
    pub tensors: BTreeMap<String, Tensor>,
    pub format_version: u32,
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    offset: u64,
    length: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format_version: u32,
    spec: NetworkSpec,
    tensors: Vec<TensorEntry>,
}

impl WeightBundle {
    /// Every tensor zero except batch-norm variances, which are one.
    pub fn zeros(spec: NetworkSpec) -> Self {
        let tensors = spec
            .parameter_layout()
            .into_iter()
            .map(|(name, shape)| {
                let t = if name.ends_with("running_var") { Tensor::filled(shape, 1.0) } else { Tensor::zeros(shape) };
                (name, t)
            })
            .collect();
        Self { spec, tensors, format_version: FORMAT_VERSION }
    }

    /// Checks the spec and that the tensor set matches it exactly.
    pub fn validate(&self) -> Result<()> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::UnsupportedVersion(self.format_version));
        }
        self.spec.validate()?;
        let layout = self.spec.parameter_layout();
        for (name, shape) in &layout {
            let t = self.tensors.get(name).ok_or_else(|| Error::tensor(name, "missing from bundle"))?;
            if &t.shape != shape {
                return Err(Error::tensor(name, format!("shape {:?} does not match spec {shape:?}", t.shape)));
            }
            if t.data.len() != shape.iter().product::<usize>() {
                return Err(Error::tensor(name, "data length does not match shape"));
            }
        }
        if self.tensors.len() != layout.len() {
            let known: std::collections::BTreeSet<&str> = layout.iter().map(|(n, _)| n.as_str()).collect();
            let extra = self.tensors.keys().find(|k| !known.contains(k.as_str())).expect("extra tensor");
            return Err(Error::tensor(extra, "not part of the network spec"));
        }
        Ok(())
    }

    pub fn tensor(&self, name: &str) -> Result<&Tensor> {
        self.tensors.get(name).ok_or_else(|| Error::tensor(name, "missing from bundle"))
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors.values().map(|t| t.data.len()).sum()
    }

    /// Serializes in canonical spec order after validating.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        self.validate()?;
        let mut entries = Vec::new();
        let mut payload = Vec::with_capacity(self.parameter_count() * 4);
        for (name, _) in self.spec.parameter_layout() {
            let t = &self.tensors[&name];
            entries.push(TensorEntry {
                name,
                shape: t.shape.clone(),
                offset: payload.len() as u64,
                length: (t.data.len() * 4) as u64,
            });
            for v in &t.data {
                payload.extend_from_slice(&v.to_le_bytes());
            }
        }
        let header = serde_json::to_vec(&Header {
            format_version: self.format_version,
            spec: self.spec.clone(),
            tensors: entries,
        })?;
        let mut out = Vec::with_capacity(12 + header.len() + payload.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        out.extend_from_slice(&payload);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 12 || &bytes[..4] != MAGIC {
            return Err(Error::Bundle("missing BKW1 magic".into()));
        }
        let header_len = u64::from_le_bytes(bytes[4..12].try_into().expect("8 bytes")) as usize;
        let header_end = 12usize
            .checked_add(header_len)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| Error::Bundle("header length exceeds file size".into()))?;
        let header: Header = serde_json::from_slice(&bytes[12..header_end])?;
        if header.format_version != FORMAT_VERSION {
            return Err(Error::UnsupportedVersion(header.format_version));
        }
        let payload = &bytes[header_end..];
        let mut tensors = BTreeMap::new();
        for e in header.tensors {
            let n: usize = e.shape.iter().product();
            if e.length as usize != n * 4 {
                return Err(Error::tensor(
                    &e.name,
                    format!("byte length {} does not match shape {:?}", e.length, e.shape),
                ));
            }
            let start = e.offset as usize;
            let end = start
                .checked_add(e.length as usize)
                .filter(|&end| end <= payload.len())
                .ok_or_else(|| Error::tensor(&e.name, "payload range out of bounds"))?;
            let data = payload[start..end]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                .collect();
            if tensors.insert(e.name.clone(), Tensor { shape: e.shape, data }).is_some() {
                return Err(Error::tensor(&e.name, "appears more than once"));
            }
        }
        let bundle = Self { spec: header.spec, tensors, format_version: header.format_version };
        bundle.validate()?;
        Ok(bundle)
    }
}

pub fn read_weights(path: impl AsRef<Path>) -> Result<WeightBundle> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    WeightBundle::from_bytes(&bytes)
}

pub fn write_weights(bundle: &WeightBundle, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = bundle.to_bytes()?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec() -> NetworkSpec {
        NetworkSpec::with_widths([8, 8, 16, 16], 240)
    }

    fn patterned(spec: NetworkSpec) -> WeightBundle {
        let mut b = WeightBundle::zeros(spec);
        for (k, t) in b.tensors.values_mut().enumerate() {
            for (i, v) in t.data.iter_mut().enumerate() {
                *v = f32::from_bits(0x3c00_0000u32.wrapping_add((k * 7919 + i * 31) as u32));
            }
        }
        b
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let b = patterned(small_spec());
        let back = WeightBundle::from_bytes(&b.to_bytes().unwrap()).unwrap();
        assert_eq!(back, b);
        for (name, t) in &b.tensors {
            let u = &back.tensors[name];
            assert!(t.data.iter().zip(&u.data).all(|(a, b)| a.to_bits() == b.to_bits()));
        }
    }

    #[test]
    fn conv_kernel_round_trips() {
        let spec = NetworkSpec::with_widths([8, 8, 16, 16], 240);
        let mut b = WeightBundle::zeros(spec);
        // stem kernel is 8 × 3 × 7; check a 3 × 8 × 7-sized payload survives too
        let data: Vec<f32> = (0..168).map(|i| (i as f32).sin() * 1e-3).collect();
        b.tensors.get_mut("stem.conv.weight").unwrap().data = data.clone();
        let back = WeightBundle::from_bytes(&b.to_bytes().unwrap()).unwrap();
        assert_eq!(back.tensors["stem.conv.weight"].data, data);
    }

    #[test]
    fn missing_update_gate_is_named() {
        let mut b = WeightBundle::zeros(small_spec());
        b.tensors.remove("gru.update.w_hh");
        match b.validate() {
            Err(Error::Tensor { name, .. }) => assert_eq!(name, "gru.update.w_hh"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn shape_mismatch_and_extras_are_rejected() {
        let mut b = WeightBundle::zeros(small_spec());
        b.tensors.insert("head.weight".into(), Tensor::zeros(vec![2, 128]));
        assert!(matches!(b.validate(), Err(Error::Tensor { name, .. }) if name == "head.weight"));

        let mut b = WeightBundle::zeros(small_spec());
        b.tensors.insert("stray".into(), Tensor::zeros(vec![1]));
        assert!(matches!(b.validate(), Err(Error::Tensor { name, .. }) if name == "stray"));
    }

    #[test]
    fn unknown_version_and_corruption() {
        let mut b = WeightBundle::zeros(small_spec());
        b.format_version = 7;
        assert!(matches!(b.validate(), Err(Error::UnsupportedVersion(7))));

        let good = WeightBundle::zeros(small_spec()).to_bytes().unwrap();
        let header_len = u64::from_le_bytes(good[4..12].try_into().unwrap()) as usize;
        let text = String::from_utf8(good[12..12 + header_len].to_vec()).unwrap();
        let patched = text.replacen("\"format_version\":1", "\"format_version\":2", 1);
        let mut bytes = good[..4].to_vec();
        bytes.extend_from_slice(&(patched.len() as u64).to_le_bytes());
        bytes.extend_from_slice(patched.as_bytes());
        bytes.extend_from_slice(&good[12 + header_len..]);
        assert!(matches!(WeightBundle::from_bytes(&bytes), Err(Error::UnsupportedVersion(2))));

        assert!(WeightBundle::from_bytes(b"nope").is_err());
        assert!(WeightBundle::from_bytes(&good[..good.len() - 4]).is_err());
    }

    #[test]
    fn parameter_count_matches_spec() {
        let b = WeightBundle::zeros(NetworkSpec::default());
        assert_eq!(b.parameter_count(), b.spec.parameter_count());
    }
}
