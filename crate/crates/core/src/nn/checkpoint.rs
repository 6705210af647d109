//! Binary checkpoint container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic        8 bytes  "CBCIMODL"
//! version      u32      1
//! config_len   u32
//! config       config_len bytes of UTF-8 `key = value` lines
//! tensor_count u32
//! per tensor:
//!   name_len   u16, name bytes (UTF-8)
//!   rank       u8
//!   dims       rank × u32
//!   data       product(dims) × f64
//! ```

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::nn::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"CBCIMODL";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: String,
    pub tensors: Vec<(String, Tensor)>,
}

pub fn write_checkpoint<W: Write>(out: &mut W, config: &str, tensors: &[(&str, &Tensor)]) -> Result<()> {
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    let config_len = u32::try_from(config.len())
        .map_err(|_| Error::Checkpoint("config block too large".into()))?;
    out.write_all(&config_len.to_le_bytes())?;
    out.write_all(config.as_bytes())?;
    out.write_all(&(tensors.len() as u32).to_le_bytes())?;
    for (name, t) in tensors {
        let name_len = u16::try_from(name.len())
            .map_err(|_| Error::Checkpoint(format!("tensor name {name:?} too long")))?;
        out.write_all(&name_len.to_le_bytes())?;
        out.write_all(name.as_bytes())?;
        out.write_all(&[t.shape().len() as u8])?;
        for d in t.shape() {
            let d = u32::try_from(*d)
                .map_err(|_| Error::Checkpoint(format!("dimension {d} too large")))?;
            out.write_all(&d.to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(t.len() * 8);
        for v in t.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        out.write_all(&buf)?;
    }
    Ok(())
}

struct Reader<R> {
    inner: R,
}

impl<R: Read> Reader<R> {
    fn bytes(&mut self, n: usize, what: &str) -> Result<Vec<u8>> {
        let mut buf = vec![0u8; n];
        self.inner.read_exact(&mut buf).map_err(|e| match e.kind() {
            std::io::ErrorKind::UnexpectedEof => {
                Error::Checkpoint(format!("truncated checkpoint while reading {what}"))
            }
            _ => Error::Io(e),
        })?;
        Ok(buf)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.bytes(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

pub fn read_checkpoint<R: Read>(input: R) -> Result<Checkpoint> {
    let mut r = Reader { inner: input };
    if r.bytes(8, "magic")? != MAGIC {
        return Err(Error::Checkpoint("bad magic bytes".into()));
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported format version {version}")));
    }
    let config_len = r.u32("config length")? as usize;
    let config = String::from_utf8(r.bytes(config_len, "config")?)
        .map_err(|_| Error::Checkpoint("config block is not UTF-8".into()))?;
    let count = r.u32("tensor count")? as usize;
    let mut tensors = Vec::with_capacity(count.min(64));
    for _ in 0..count {
        let nl = r.bytes(2, "name length")?;
        let name_len = u16::from_le_bytes([nl[0], nl[1]]) as usize;
        let name = String::from_utf8(r.bytes(name_len, "tensor name")?)
            .map_err(|_| Error::Checkpoint("tensor name is not UTF-8".into()))?;
        let rank = r.bytes(1, "rank")?[0] as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u32("dimension")? as usize);
        }
        let n: usize = shape.iter().product();
        let raw = r.bytes(n * 8, &name)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        let tensor = Tensor::from_vec(&shape, data)
            .map_err(|e| Error::Checkpoint(format!("tensor {name}: {e}")))?;
        tensors.push((name, tensor));
    }
    Ok(Checkpoint { config, tensors })
}
