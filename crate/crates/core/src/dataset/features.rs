//! Feature file container (`UNOQAFT1`).
//!
//! ```text
//! magic "UNOQAFT1"
//! u32 version = 1, u32 n_samples, u32 K
//! K x (u32 H_k, u32 W_k, u32 D_k)
//! n_samples x (u32 id index, K x f32[H_k * W_k * D_k])
//! u32 id count, id count x (u32 byte length, UTF-8 bytes)
//! ```
//! All integers and floats are little-endian.

use std::path::Path;

use crate::binio::{len_u32, Reader, Writer};
use crate::encoder::{FeatureMap, FeaturePyramid};
use crate::error::{Error, Result};

pub const FEATURE_MAGIC: &[u8; 8] = b"UNOQAFT1";
pub const FEATURE_VERSION: u32 = 1;

/// Serialises pyramids with their ids. All pyramids must share the same shapes.
pub fn encode_features(pyramids: &[FeaturePyramid], ids: &[String]) -> Result<Vec<u8>> {
    if pyramids.len() != ids.len() {
        return Err(Error::Argument(format!("{} pyramids but {} ids", pyramids.len(), ids.len())));
    }
    let shapes = pyramids.first().map(FeaturePyramid::shapes).unwrap_or_default();
    if let Some(i) = pyramids.iter().position(|p| p.shapes() != shapes) {
        return Err(Error::Argument(format!("pyramid {i} shapes {:?} differ from {:?}", pyramids[i].shapes(), shapes)));
    }
    let mut w = Writer::new();
    w.bytes(FEATURE_MAGIC);
    w.u32(FEATURE_VERSION);
    w.u32(len_u32(pyramids.len(), "sample count")?);
    w.u32(len_u32(shapes.len(), "scale count")?);
    for &(h, wd, d) in &shapes {
        w.u32(len_u32(h, "height")?);
        w.u32(len_u32(wd, "width")?);
        w.u32(len_u32(d, "depth")?);
    }
    for (i, p) in pyramids.iter().enumerate() {
        w.u32(i as u32);
        for m in &p.scales {
            for &v in &m.data {
                w.f32(v);
            }
        }
    }
    w.u32(len_u32(ids.len(), "id count")?);
    for id in ids {
        w.string(id);
    }
    Ok(w.buf)
}

pub fn decode_features(bytes: &[u8]) -> Result<(Vec<FeaturePyramid>, Vec<String>)> {
    let mut r = Reader::new(bytes);
    r.magic(FEATURE_MAGIC)?;
    let at = r.offset();
    let version = r.u32("version")?;
    if version != FEATURE_VERSION {
        return Err(Error::format(at, format!("unsupported feature file version {version}, expected {FEATURE_VERSION}")));
    }
    let n = r.u32("sample count")? as usize;
    let k = r.u32("scale count")? as usize;
    if k.saturating_mul(12) > r.remaining() {
        return Err(Error::format(r.offset(), format!("truncated payload: {k} scale headers declared")));
    }
    let mut shapes = Vec::with_capacity(k);
    for _ in 0..k {
        let h = r.u32("height")? as usize;
        let w = r.u32("width")? as usize;
        let d = r.u32("depth")? as usize;
        shapes.push((h, w, d));
    }
    let per_sample: usize = shapes
        .iter()
        .try_fold(0usize, |acc, &(h, w, d)| h.checked_mul(w)?.checked_mul(d)?.checked_add(acc))
        .ok_or_else(|| Error::format(r.offset(), "declared shapes overflow"))?;
    let sample_bytes = per_sample.checked_mul(4).and_then(|b| b.checked_add(4));
    match sample_bytes.and_then(|b| b.checked_mul(n)) {
        Some(total) if total <= r.remaining() => {}
        _ => return Err(Error::format(r.offset(), format!("truncated payload: {n} samples of {per_sample} floats declared"))),
    }

    let mut indexed = Vec::with_capacity(n);
    for _ in 0..n {
        let at = r.offset();
        let idx = r.u32("id index")? as usize;
        let mut scales = Vec::with_capacity(k);
        for &(h, w, d) in &shapes {
            let data = r.f32_vec(h * w * d, "feature tensor")?;
            scales.push(FeatureMap { height: h, width: w, depth: d, data });
        }
        indexed.push((at, idx, FeaturePyramid { scales }));
    }

    let count = r.u32("id table count")? as usize;
    if count.saturating_mul(4) > r.remaining() {
        return Err(Error::format(r.offset(), format!("truncated payload: {count} ids declared")));
    }
    let mut table = Vec::with_capacity(count);
    for _ in 0..count {
        table.push(r.string("sample id")?);
    }
    r.expect_end()?;

    let mut pyramids = Vec::with_capacity(n);
    let mut ids = Vec::with_capacity(n);
    for (at, idx, p) in indexed {
        let id = table
            .get(idx)
            .ok_or_else(|| Error::format(at, format!("id index {idx} outside table of {count}")))?;
        pyramids.push(p);
        ids.push(id.clone());
    }
    Ok((pyramids, ids))
}

pub fn write_features(path: &Path, pyramids: &[FeaturePyramid], ids: &[String]) -> Result<()> {
    let bytes = encode_features(pyramids, ids)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_features(path: &Path) -> Result<(Vec<FeaturePyramid>, Vec<String>)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_features(&bytes)
}
