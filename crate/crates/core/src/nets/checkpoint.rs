//! Binary checkpoint format (all integers little-endian):
//!
//! ```text
//! "SADPT1" | version u16 | count u32
//! count × ( name_len u16 | name | rank u8 | rank × extent u32 | payload f32 … )
//! iteration u64 | digest_len u16 | digest
//! ```

use std::path::Path;

use super::ParamSet;
use crate::diffcore::Tensor;
use crate::error::{Error, Result};
use crate::fsutil;
use crate::scalar::Scalar;

pub const CHECKPOINT_MAGIC: &[u8; 6] = b"SADPT1";
pub const CHECKPOINT_VERSION: u16 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub params: ParamSet<f32>,
    pub iteration: u64,
    pub config_digest: String,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.params.len() as u32).to_le_bytes());
        for (name, t) in self.params.iter() {
            let len = u16::try_from(name.len())
                .map_err(|_| Error::Checkpoint(format!("parameter name too long: {name}")))?;
            out.extend_from_slice(&len.to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(t.shape().len() as u8);
            for &e in t.shape() {
                out.extend_from_slice(&(e as u32).to_le_bytes());
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out.extend_from_slice(&self.iteration.to_le_bytes());
        let digest = self.config_digest.as_bytes();
        out.extend_from_slice(&(digest.len() as u16).to_le_bytes());
        out.extend_from_slice(digest);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(6, "magic")? != CHECKPOINT_MAGIC {
            return Err(Error::Checkpoint("bad magic bytes".into()));
        }
        let version = r.u16("version")?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let count = r.u32("parameter count")?;
        let mut params = ParamSet::new();
        for i in 0..count {
            let name_len = r.u16(&format!("name length of parameter #{i}"))? as usize;
            let name = std::str::from_utf8(r.take(name_len, &format!("name of parameter #{i}"))?)
                .map_err(|_| Error::Checkpoint(format!("parameter #{i} name is not UTF-8")))?
                .to_string();
            let rank = r.take(1, &name)?[0] as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(r.u32(&name)? as usize);
            }
            let n: usize = shape.iter().product();
            let payload = r.take(n * 4, &name)?;
            let data = payload
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            params.insert(name, Tensor::new(&shape, data)?);
        }
        let iteration = r.u64("iteration counter")?;
        let digest_len = r.u16("digest length")? as usize;
        let digest = std::str::from_utf8(r.take(digest_len, "config digest")?)
            .map_err(|_| Error::Checkpoint("config digest is not UTF-8".into()))?
            .to_string();
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint(format!(
                "{} trailing bytes after checkpoint",
                bytes.len() - r.pos
            )));
        }
        Ok(Self {
            params,
            iteration,
            config_digest: digest,
        })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Checkpoint(format!("truncated file while reading {what}")));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        let b = self.take(2, what)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        let b = self.take(8, what)?;
        Ok(u64::from_le_bytes(b.try_into().unwrap()))
    }
}

/// Saves parameters (converted to `f32`) atomically.
pub fn save_checkpoint<T: Scalar>(
    path: &Path,
    params: &ParamSet<T>,
    iteration: u64,
    config_digest: &str,
) -> Result<()> {
    let ck = Checkpoint {
        params: params.cast(),
        iteration,
        config_digest: config_digest.to_string(),
    };
    fsutil::write_atomic(path, &ck.to_bytes()?)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    Checkpoint::from_bytes(&fsutil::read(path)?)
}
