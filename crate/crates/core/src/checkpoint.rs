//! Binary checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic     8 bytes   "AMOSCKPT"
//! version   u32       FORMAT_VERSION
//! endian    u32       0x01020304
//! step      u64
//! hyper     u64 length + UTF-8 bytes (free-form hyper-parameter snapshot)
//! count     u64       number of tensors
//! manifest  count x { u32 name length, name bytes, u32 rank, rank x u64 dims }
//! payload   count x row-major f64 values, in manifest order
//! ```
//!
//! Tensor names are namespaced: `param/<name>`, `slot/<param>/<slot>` and
//! `aux/<name>`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::optim::{OptimizerState, ParamSet, SlotSet};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"AMOSCKPT";
pub const FORMAT_VERSION: u32 = 1;
const ENDIAN_MARKER: u32 = 0x0102_0304;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub step: u64,
    pub hyper: String,
    pub params: ParamSet,
    pub slots: BTreeMap<String, SlotSet>,
    /// Extra state owned by the caller (e.g. metric trackers).
    pub aux: BTreeMap<String, Tensor>,
}

impl Checkpoint {
    pub fn new(state: &OptimizerState, params: &ParamSet, hyper: impl Into<String>) -> Self {
        Self {
            step: state.step,
            hyper: hyper.into(),
            params: params.clone(),
            slots: state.slots.clone(),
            aux: BTreeMap::new(),
        }
    }

    pub fn state(&self) -> OptimizerState {
        OptimizerState {
            step: self.step,
            slots: self.slots.clone(),
        }
    }

    fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for (name, t) in &self.params {
            out.push((format!("param/{name}"), t));
        }
        for (param, slots) in &self.slots {
            for (slot, t) in slots {
                out.push((format!("slot/{param}/{slot}"), t));
            }
        }
        for (name, t) in &self.aux {
            out.push((format!("aux/{name}"), t));
        }
        out
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let tensors = self.named_tensors();
        let mut buf = Vec::new();
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        buf.extend_from_slice(&ENDIAN_MARKER.to_le_bytes());
        buf.extend_from_slice(&self.step.to_le_bytes());
        buf.extend_from_slice(&(self.hyper.len() as u64).to_le_bytes());
        buf.extend_from_slice(self.hyper.as_bytes());
        buf.extend_from_slice(&(tensors.len() as u64).to_le_bytes());
        for (name, t) in &tensors {
            buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
            buf.extend_from_slice(name.as_bytes());
            buf.extend_from_slice(&(t.rank() as u32).to_le_bytes());
            for &d in t.shape() {
                buf.extend_from_slice(&(d as u64).to_le_bytes());
            }
        }
        for (_, t) in &tensors {
            for &x in t.data() {
                buf.extend_from_slice(&x.to_le_bytes());
            }
        }
        buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::CorruptCheckpoint("bad magic".into()));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::UnsupportedVersion(version));
        }
        if r.u32()? != ENDIAN_MARKER {
            return Err(Error::CorruptCheckpoint("bad endianness marker".into()));
        }
        let step = r.u64()?;
        let hyper_len = r.len_u64()?;
        let hyper = String::from_utf8(r.take(hyper_len)?.to_vec())
            .map_err(|_| Error::CorruptCheckpoint("hyper-parameter snapshot is not UTF-8".into()))?;
        let count = r.len_u64()?;
        let mut manifest = Vec::new();
        for _ in 0..count {
            let name_len = r.u32()? as usize;
            let name = String::from_utf8(r.take(name_len)?.to_vec())
                .map_err(|_| Error::CorruptCheckpoint("tensor name is not UTF-8".into()))?;
            let rank = r.u32()? as usize;
            let mut shape = Vec::with_capacity(rank.min(16));
            for _ in 0..rank {
                shape.push(r.len_u64()?);
            }
            manifest.push((name, shape));
        }

        let mut ckpt = Checkpoint {
            step,
            hyper,
            params: BTreeMap::new(),
            slots: BTreeMap::new(),
            aux: BTreeMap::new(),
        };
        for (name, shape) in manifest {
            let n = shape
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .ok_or_else(|| Error::CorruptCheckpoint(format!("`{name}`: shape overflow")))?;
            let raw = r.take(n.checked_mul(8).ok_or_else(|| {
                Error::CorruptCheckpoint(format!("`{name}`: payload size overflow"))
            })?)?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect();
            let tensor = Tensor::new(shape, data)
                .map_err(|e| Error::CorruptCheckpoint(format!("`{name}`: {e}")))?;
            ckpt.insert(&name, tensor)?;
        }
        // Slot-less optimizers still carry an (empty) slot set per parameter.
        for name in ckpt.params.keys() {
            ckpt.slots.entry(name.clone()).or_default();
        }
        if r.pos != bytes.len() {
            return Err(Error::CorruptCheckpoint(format!(
                "{} trailing bytes",
                bytes.len() - r.pos
            )));
        }
        Ok(ckpt)
    }

    fn insert(&mut self, name: &str, tensor: Tensor) -> Result<()> {
        let dup = || Error::CorruptCheckpoint(format!("duplicate tensor `{name}`"));
        if let Some(p) = name.strip_prefix("param/") {
            if self.params.insert(p.to_string(), tensor).is_some() {
                return Err(dup());
            }
        } else if let Some(rest) = name.strip_prefix("slot/") {
            let (param, slot) = rest
                .rsplit_once('/')
                .ok_or_else(|| Error::CorruptCheckpoint(format!("malformed slot name `{name}`")))?;
            let slots = self.slots.entry(param.to_string()).or_default();
            if slots.insert(slot.to_string(), tensor).is_some() {
                return Err(dup());
            }
        } else if let Some(a) = name.strip_prefix("aux/") {
            if self.aux.insert(a.to_string(), tensor).is_some() {
                return Err(dup());
            }
        } else {
            return Err(Error::CorruptCheckpoint(format!("unknown tensor namespace `{name}`")));
        }
        Ok(())
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::CorruptCheckpoint("unexpected end of file".into()))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn len_u64(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| Error::CorruptCheckpoint("length overflow".into()))
    }
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    // Write-then-rename so a crash never leaves a half-written checkpoint.
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, ckpt.to_bytes())?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    Checkpoint::from_bytes(&fs::read(path)?)
}
