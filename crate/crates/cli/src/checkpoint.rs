//! Generator checkpoints.
//!
//! Layout: `b"SPCK"`, format version (u32 LE), header length (u32 LE), a
//! JSON header describing the architecture and every array, then the arrays
//! as little-endian `f32` in header order.

use std::path::Path;

use padfree_core::net::params::ParamTensor;
use padfree_core::net::{GeneratorConfig, GeneratorParams};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const MAGIC: [u8; 4] = *b"SPCK";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("checkpoint format error in `{field}`: {message}")]
pub struct CheckpointError {
    pub field: String,
    pub message: String,
}

fn fail(field: impl Into<String>, message: impl Into<String>) -> CheckpointError {
    CheckpointError { field: field.into(), message: message.into() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Architecture {
    pub widths: Vec<usize>,
    pub latent_dim: usize,
    pub mapping_layers: usize,
    pub levels: usize,
    pub n_pad: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Header {
    pub architecture: Architecture,
    pub layers: Vec<LayerEntry>,
}

impl Header {
    pub fn of(params: &GeneratorParams) -> Self {
        let c = &params.config;
        Header {
            architecture: Architecture {
                widths: c.widths.clone(),
                latent_dim: c.latent_dim,
                mapping_layers: c.mapping_layers,
                levels: c.levels(),
                n_pad: c.n_pad,
            },
            layers: params.tensors().iter().map(|t| LayerEntry { name: t.name.clone(), shape: t.shape.clone() }).collect(),
        }
    }
}

pub fn encode(params: &GeneratorParams) -> Vec<u8> {
    let header = serde_json::to_vec(&Header::of(params)).expect("header serializes");
    let mut out = Vec::with_capacity(12 + header.len() + 4 * params.param_count());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    for t in params.tensors() {
        for &v in &t.data {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

fn read_u32(bytes: &[u8], at: usize, field: &str) -> Result<u32, CheckpointError> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| fail(field, format!("file ends after {} bytes", bytes.len())))
}

pub fn decode(bytes: &[u8]) -> Result<GeneratorParams, CheckpointError> {
    match bytes.get(..4) {
        Some(m) if m == MAGIC => {}
        Some(m) => return Err(fail("magic", format!("expected \"SPCK\", found {m:?}"))),
        None => return Err(fail("magic", format!("file ends after {} bytes", bytes.len()))),
    }
    let version = read_u32(bytes, 4, "version")?;
    if version != VERSION {
        return Err(fail("version", format!("unsupported version {version}, expected {VERSION}")));
    }
    let header_len = read_u32(bytes, 8, "header_length")? as usize;
    let header_bytes = bytes
        .get(12..12 + header_len)
        .ok_or_else(|| fail("header_length", format!("header of {header_len} bytes exceeds file size {}", bytes.len())))?;
    let de = &mut serde_json::Deserializer::from_slice(header_bytes);
    let header: Header = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        fail(format!("header.{path}"), e.into_inner().to_string())
    })?;

    let a = &header.architecture;
    if a.widths.len() != a.levels + 1 {
        return Err(fail(
            "header.architecture.levels",
            format!("{} levels need {} widths, found {}", a.levels, a.levels + 1, a.widths.len()),
        ));
    }
    let config =
        GeneratorConfig { latent_dim: a.latent_dim, mapping_layers: a.mapping_layers, widths: a.widths.clone(), n_pad: a.n_pad };
    let expected = GeneratorParams::init(&config, 0).map_err(|e| fail("header.architecture", e.to_string()))?;
    let expected = expected.tensors();
    if expected.len() != header.layers.len() {
        return Err(fail(
            "header.layers",
            format!("architecture has {} arrays, header lists {}", expected.len(), header.layers.len()),
        ));
    }
    for (i, (want, got)) in expected.iter().zip(&header.layers).enumerate() {
        if want.name != got.name || want.shape != got.shape {
            return Err(fail(
                format!("header.layers[{i}]"),
                format!("expected {} {:?}, found {} {:?}", want.name, want.shape, got.name, got.shape),
            ));
        }
    }

    let payload = &bytes[12 + header_len..];
    let total: usize = header.layers.iter().map(|l| l.shape.iter().product::<usize>()).sum();
    if payload.len() != 4 * total {
        let what = if payload.len() < 4 * total { "truncated" } else { "trailing bytes after" };
        return Err(fail("payload", format!("{what} payload: {} bytes, header declares {}", payload.len(), 4 * total)));
    }
    let mut floats = payload.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64);
    let tensors = header
        .layers
        .into_iter()
        .map(|l| {
            let n = l.shape.iter().product();
            ParamTensor { name: l.name, shape: l.shape, data: floats.by_ref().take(n).collect() }
        })
        .collect();
    GeneratorParams::from_tensors(&config, tensors).map_err(|e| fail("header.layers", e.to_string()))
}

pub fn save(params: &GeneratorParams, path: &Path) -> CliResult<()> {
    std::fs::write(path, encode(params)).map_err(|e| CliError::io(path, e))
}

pub fn load(path: &Path) -> CliResult<GeneratorParams> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(decode(&bytes)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> GeneratorParams {
        GeneratorParams::init(&GeneratorConfig::toy(), 3).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let p = params();
        let bytes = encode(&p);
        let q = decode(&bytes).unwrap();
        assert_eq!(p, q);
        assert_eq!(encode(&q), bytes);
    }

    #[test]
    fn corrupt_magic_names_the_field() {
        let mut bytes = encode(&params());
        bytes[0] = b'X';
        assert_eq!(decode(&bytes).unwrap_err().field, "magic");
    }

    #[test]
    fn truncation_is_detected() {
        let bytes = encode(&params());
        assert_eq!(decode(&bytes[..bytes.len() - 3]).unwrap_err().field, "payload");
        assert_eq!(decode(&bytes[..6]).unwrap_err().field, "version");
        assert_eq!(decode(&bytes[..40]).unwrap_err().field, "header_length");
    }

    #[test]
    fn header_shape_disagreement() {
        let p = params();
        let mut header = Header::of(&p);
        header.layers[3].shape[0] += 1;
        let h = serde_json::to_vec(&header).unwrap();
        let mut bytes = MAGIC.to_vec();
        bytes.extend_from_slice(&VERSION.to_le_bytes());
        bytes.extend_from_slice(&(h.len() as u32).to_le_bytes());
        bytes.extend_from_slice(&h);
        assert_eq!(decode(&bytes).unwrap_err().field, "header.layers[3]");
    }

    #[test]
    fn bad_header_value_reports_path() {
        let h = br#"{"architecture":{"widths":[4,"x"],"latent_dim":4,"mapping_layers":1,"levels":1,"n_pad":3},"layers":[]}"#;
        let mut bytes = MAGIC.to_vec();
        bytes.extend_from_slice(&VERSION.to_le_bytes());
        bytes.extend_from_slice(&(h.len() as u32).to_le_bytes());
        bytes.extend_from_slice(h);
        let err = decode(&bytes).unwrap_err();
        assert_eq!(err.field, "header.architecture.widths[1]");
    }
}
