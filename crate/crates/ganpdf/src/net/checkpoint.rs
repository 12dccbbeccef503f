//! Versioned binary container for network checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic    8 bytes  b"GPNETCK1"
//! version  u32      currently 1
//! role     u32 len + UTF-8 bytes   e.g. "generator"
//! aux      u32      role-specific tag (e.g. feature-layer index)
//! spec     input_dim u32, num_layers u32,
//!          then per layer: out_dim u32, activation u8 (+ slope f64 for leaky)
//! layers   per layer: weights then bias, f64 LE, lengths implied by spec
//! ```
//!
//! Values are stored as raw f64 bits, so save -> load round-trips
//! bit-exactly. Trailing bytes after the last array are an error: a file
//! that decodes must be exactly one checkpoint.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::net::{Activation, LayerSpec, NetworkSpec, ParameterSet};

pub const MAGIC: &[u8; 8] = b"GPNETCK1";
pub const VERSION: u32 = 1;

const ACT_IDENTITY: u8 = 0;
const ACT_RELU: u8 = 1;
const ACT_LEAKY: u8 = 2;
const ACT_TANH: u8 = 3;
const ACT_SIGMOID: u8 = 4;

/// A decoded checkpoint: architecture, parameters, and identity tags.
#[derive(Debug, Clone)]
pub struct NetworkFile {
    pub spec: NetworkSpec,
    pub params: ParameterSet<f64>,
    pub role: String,
    pub aux: u32,
}

pub fn encode_network(
    spec: &NetworkSpec,
    params: &ParameterSet<f64>,
    role: &str,
    aux: u32,
) -> Result<Vec<u8>> {
    params.congruent_with(spec)?;
    let mut out = Vec::with_capacity(64 + params.num_values() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(role.len() as u32).to_le_bytes());
    out.extend_from_slice(role.as_bytes());
    out.extend_from_slice(&aux.to_le_bytes());
    out.extend_from_slice(&(spec.input_dim() as u32).to_le_bytes());
    out.extend_from_slice(&(spec.num_layers() as u32).to_le_bytes());
    for layer in spec.layers() {
        out.extend_from_slice(&(layer.out_dim as u32).to_le_bytes());
        match layer.activation {
            Activation::Identity => out.push(ACT_IDENTITY),
            Activation::Relu => out.push(ACT_RELU),
            Activation::LeakyRelu(slope) => {
                out.push(ACT_LEAKY);
                out.extend_from_slice(&slope.to_le_bytes());
            }
            Activation::Tanh => out.push(ACT_TANH),
            Activation::Sigmoid => out.push(ACT_SIGMOID),
        }
    }
    for layer in &params.layers {
        for v in layer.weights.iter().chain(layer.bias.iter()) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

/// Byte cursor that reports the offset of whatever failed to parse.
struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Cursor { bytes, pos: 0 }
    }

    fn fail(&self, what: impl Into<String>) -> Error {
        Error::Parse {
            offset: self.pos,
            what: what.into(),
        }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(self.fail(format!(
                "unexpected end of data while reading {what} ({n} bytes needed)"
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        let b = self.take(8, what)?;
        Ok(f64::from_le_bytes(b.try_into().expect("8 bytes")))
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }
}

pub fn decode_network(bytes: &[u8]) -> Result<NetworkFile> {
    let mut c = Cursor::new(bytes);
    let magic = c.take(8, "magic")?;
    if magic != MAGIC {
        return Err(Error::Parse {
            offset: 0,
            what: "bad magic, not a network checkpoint".into(),
        });
    }
    let version = c.u32("version")?;
    if version != VERSION {
        return Err(c.fail(format!("unsupported checkpoint version {version}")));
    }
    let role_len = c.u32("role length")? as usize;
    let role_bytes = c.take(role_len, "role string")?;
    let role = std::str::from_utf8(role_bytes)
        .map_err(|_| c.fail("role string is not UTF-8"))?
        .to_string();
    let aux = c.u32("aux tag")?;

    let input_dim = c.u32("input_dim")? as usize;
    let num_layers = c.u32("layer count")? as usize;
    let mut layers = Vec::with_capacity(num_layers);
    for k in 0..num_layers {
        let out_dim = c.u32("layer out_dim")? as usize;
        let code = c.u8("activation code")?;
        let activation = match code {
            ACT_IDENTITY => Activation::Identity,
            ACT_RELU => Activation::Relu,
            ACT_LEAKY => Activation::LeakyRelu(c.f64("leaky slope")?),
            ACT_TANH => Activation::Tanh,
            ACT_SIGMOID => Activation::Sigmoid,
            other => return Err(c.fail(format!("unknown activation code {other} in layer {k}"))),
        };
        layers.push(LayerSpec::new(out_dim, activation));
    }
    let spec = NetworkSpec::new(input_dim, layers)?;

    let mut params = ParameterSet::zeros_like(&spec);
    for layer in &mut params.layers {
        for v in layer.weights.iter_mut().chain(layer.bias.iter_mut()) {
            *v = c.f64("parameter value")?;
        }
    }
    if c.remaining() != 0 {
        return Err(c.fail(format!(
            "{} trailing bytes after checkpoint payload",
            c.remaining()
        )));
    }
    Ok(NetworkFile {
        spec,
        params,
        role,
        aux,
    })
}

pub fn save_network(
    path: &Path,
    spec: &NetworkSpec,
    params: &ParameterSet<f64>,
    role: &str,
    aux: u32,
) -> Result<()> {
    let bytes = encode_network(spec, params, role, aux)?;
    fs::write(path, bytes)?;
    Ok(())
}

pub fn load_network(path: &Path) -> Result<NetworkFile> {
    let bytes = fs::read(path)?;
    decode_network(&bytes)
}
