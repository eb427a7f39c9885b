//! `UNOQAMD1` checkpoint container.
//!
//! Layout: magic, u32 version, length-prefixed config hash, u32 section
//! count, then per section a 4-byte tag, a u64 payload length and the
//! payload. `FLW1` holds a [`FlowModel`], `FDR1` a [`ReductionModel`].

use std::path::Path;

use crate::binio::{len_u32, Reader, Writer};
use crate::error::{Error, Result};
use crate::fdr::ReductionModel;
use crate::flow::FlowModel;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"UNOQAMD1";
pub const CHECKPOINT_VERSION: u32 = 1;
const FLOW_TAG: &[u8; 4] = b"FLW1";
const FDR_TAG: &[u8; 4] = b"FDR1";

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Checkpoint {
    pub config_hash: String,
    pub flow: Option<FlowModel>,
    pub reduction: Option<ReductionModel>,
}

pub fn encode_checkpoint(ckpt: &Checkpoint) -> Result<Vec<u8>> {
    let mut sections: Vec<(&[u8; 4], Vec<u8>)> = Vec::new();
    if let Some(f) = &ckpt.flow {
        sections.push((FLOW_TAG, f.encode()?));
    }
    if let Some(r) = &ckpt.reduction {
        sections.push((FDR_TAG, r.encode()?));
    }
    let mut w = Writer::new();
    w.bytes(CHECKPOINT_MAGIC);
    w.u32(CHECKPOINT_VERSION);
    w.string(&ckpt.config_hash);
    w.u32(len_u32(sections.len(), "section count")?);
    for (tag, payload) in sections {
        w.bytes(tag);
        w.u64(payload.len() as u64);
        w.bytes(&payload);
    }
    Ok(w.buf)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = Reader::new(bytes);
    r.magic(CHECKPOINT_MAGIC)?;
    let at = r.offset();
    let version = r.u32("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::format(at, format!("unsupported checkpoint version {version}, expected {CHECKPOINT_VERSION}")));
    }
    let mut ckpt = Checkpoint { config_hash: r.string("config hash")?, ..Checkpoint::default() };
    let count = r.u32("section count")?;
    for _ in 0..count {
        let at = r.offset();
        let tag = r.bytes(4, "section tag")?;
        let len = r.u64("section length")?;
        let len = usize::try_from(len).map_err(|_| Error::format(at, "section length overflows"))?;
        let payload = r.bytes(len, "section payload")?;
        let mut sub = Reader::new(payload);
        let dup = || Error::format(at, format!("duplicate section {:?}", String::from_utf8_lossy(tag)));
        // Offsets inside a section are reported relative to the whole file.
        let shift = |e: Error| match e {
            Error::Format { offset, message } => Error::Format { offset: offset + at + 12, message },
            other => other,
        };
        if tag == FLOW_TAG {
            if ckpt.flow.is_some() {
                return Err(dup());
            }
            ckpt.flow = Some(FlowModel::decode(&mut sub).map_err(shift)?);
        } else if tag == FDR_TAG {
            if ckpt.reduction.is_some() {
                return Err(dup());
            }
            ckpt.reduction = Some(ReductionModel::decode(&mut sub).map_err(shift)?);
        } else {
            return Err(Error::format(at, format!("unknown section tag {:?}", String::from_utf8_lossy(tag))));
        }
        sub.expect_end().map_err(shift)?;
    }
    r.expect_end()?;
    Ok(ckpt)
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    std::fs::write(path, encode_checkpoint(ckpt)?).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}
