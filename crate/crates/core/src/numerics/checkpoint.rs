//! Binary parameter checkpoints.
//!
//! Layout (all little-endian):
//!
//! ```text
//! magic      4 bytes  b"AKNN"
//! version    u32      currently 1
//! n_sizes    u32
//! sizes      n_sizes × u32
//! acts       (n_sizes − 2) × u8   0 = elu, 1 = tanh, 2 = identity
//! n_params   u64
//! params     n_params × f64
//! ```

use std::io::{Read, Write};
use std::path::Path;

use super::mlp::{Activation, Mlp};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"AKNN";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn encode(net: &Mlp) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + net.num_params() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(net.layer_sizes().len() as u32).to_le_bytes());
    for &s in net.layer_sizes() {
        out.extend_from_slice(&(s as u32).to_le_bytes());
    }
    out.extend(net.activations().iter().map(|a| a.code()));
    out.extend_from_slice(&(net.num_params() as u64).to_le_bytes());
    for p in net.params() {
        out.extend_from_slice(&p.to_le_bytes());
    }
    out
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::invalid("truncated checkpoint"));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn decode(bytes: &[u8]) -> Result<Mlp> {
    let mut c = Cursor { buf: bytes, pos: 0 };
    if c.take(4)? != MAGIC {
        return Err(Error::invalid("not a network checkpoint (bad magic)"));
    }
    let version = c.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::invalid(format!("unsupported checkpoint version {version}")));
    }
    let n = c.u32()? as usize;
    if !(2..=64).contains(&n) {
        return Err(Error::invalid(format!("implausible layer count {n}")));
    }
    let sizes = (0..n).map(|_| c.u32().map(|s| s as usize)).collect::<Result<Vec<_>>>()?;
    let acts = c
        .take(n - 2)?
        .iter()
        .map(|&b| Activation::from_code(b).ok_or_else(|| Error::invalid(format!("bad activation code {b}"))))
        .collect::<Result<Vec<_>>>()?;
    let count = c.u64()? as usize;
    let raw = c.take(count.checked_mul(8).ok_or_else(|| Error::invalid("param count overflow"))?)?;
    let params = raw
        .chunks_exact(8)
        .map(|ch| f64::from_le_bytes(ch.try_into().expect("8 bytes")))
        .collect();
    if c.pos != bytes.len() {
        return Err(Error::invalid("trailing bytes after checkpoint"));
    }
    Mlp::from_params(&sizes, &acts, params)
}

pub fn save(net: &Mlp, path: &Path) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(&encode(net))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Mlp> {
    let mut buf = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut buf)?;
    decode(&buf)
}
