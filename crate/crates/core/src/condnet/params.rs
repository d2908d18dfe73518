//! Binary parameter files.
//!
//! Layout, little-endian throughout: magic `TPRM`, version byte, `u32` tensor
//! count, then per tensor a `u32` name length, the UTF-8 name, a `u32` rank,
//! `rank` × `u32` dims and the `f32` data in row-major order.

use std::path::Path;

use super::net::{ToyNetConfig, ToyParams};
use crate::error::{Error, Result};

pub const PARAMS_MAGIC: &[u8; 4] = b"TPRM";
pub const PARAMS_VERSION: u8 = 1;

fn bad(reason: impl Into<String>) -> Error {
    Error::format("TPRM", reason)
}

pub fn encode_params(params: &ToyParams) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(PARAMS_MAGIC);
    out.push(PARAMS_VERSION);
    let layers = params.named_layers();
    out.extend_from_slice(&((layers.len() * 2) as u32).to_le_bytes());
    for (name, l) in layers {
        let wdims = [l.out_channels, l.in_channels, l.kernel, l.kernel];
        write_tensor(&mut out, &format!("{name}.weight"), &wdims, &l.weight);
        write_tensor(
            &mut out,
            &format!("{name}.bias"),
            &[l.out_channels],
            &l.bias,
        );
    }
    out
}

fn write_tensor(out: &mut Vec<u8>, name: &str, dims: &[usize], data: &[f64]) {
    out.extend_from_slice(&(name.len() as u32).to_le_bytes());
    out.extend_from_slice(name.as_bytes());
    out.extend_from_slice(&(dims.len() as u32).to_le_bytes());
    for &d in dims {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for &v in data {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| bad(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }
}

/// Decodes a parameter file into the layout implied by `cfg`; tensor names,
/// order and dims must all match.
pub fn decode_params(bytes: &[u8], cfg: &ToyNetConfig) -> Result<ToyParams> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != PARAMS_MAGIC {
        return Err(bad("bad magic"));
    }
    let version = r.take(1)?[0];
    if version != PARAMS_VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let mut params = ToyParams::init(cfg)?;
    let count = r.u32()?;
    let expected = params.named_layers().len() * 2;
    if count != expected {
        return Err(Error::shape("parameter tensors", expected, count));
    }
    for (name, layer) in params.named_layers_mut() {
        let wdims = [
            layer.out_channels,
            layer.in_channels,
            layer.kernel,
            layer.kernel,
        ];
        read_tensor(&mut r, &format!("{name}.weight"), &wdims, &mut layer.weight)?;
        let bdims = [layer.out_channels];
        read_tensor(&mut r, &format!("{name}.bias"), &bdims, &mut layer.bias)?;
    }
    if r.pos != bytes.len() {
        return Err(bad(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(params)
}

fn read_tensor(r: &mut Reader, name: &str, dims: &[usize], dst: &mut [f64]) -> Result<()> {
    let len = r.u32()?;
    let got = std::str::from_utf8(r.take(len)?).map_err(|_| bad("tensor name is not UTF-8"))?;
    if got != name {
        return Err(bad(format!("expected tensor {name}, found {got}")));
    }
    let rank = r.u32()?;
    let got_dims = (0..rank).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
    if got_dims != dims {
        return Err(Error::ShapeMismatch {
            what: "parameter tensor",
            expected: format!("{name} {dims:?}"),
            actual: format!("{got_dims:?}"),
        });
    }
    let raw = r.take(dst.len() * 4)?;
    for (d, c) in dst.iter_mut().zip(raw.chunks_exact(4)) {
        *d = f32::from_le_bytes(c.try_into().unwrap()) as f64;
    }
    Ok(())
}

pub fn save_params(params: &ToyParams, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, encode_params(params))?;
    Ok(())
}

pub fn load_params(path: impl AsRef<Path>, cfg: &ToyNetConfig) -> Result<ToyParams> {
    decode_params(&std::fs::read(path)?, cfg)
}
