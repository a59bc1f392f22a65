use std::fs;
use std::path::Path;

use adnet_core::ClipFeatureSequence;

use super::{video_id_of, write_atomic};
use crate::error::{Error, Result};

pub const FEATURE_MAGIC: &[u8; 4] = b"ADNF";
pub const FEATURE_VERSION: u32 = 1;
const HEADER_LEN: u64 = 16;

/// Reads a feature file; the video id is the file stem. When `expected_dim`
/// is given the stored dimension must match it.
pub fn read_features(path: &Path, expected_dim: Option<usize>) -> Result<ClipFeatureSequence> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < HEADER_LEN as usize {
        return Err(Error::format(path, bytes.len() as u64, format!("file has {} bytes, header needs {HEADER_LEN}", bytes.len())));
    }
    if &bytes[..4] != FEATURE_MAGIC {
        return Err(Error::format(path, 0, format!("bad magic {:?}, expected \"ADNF\"", &bytes[..4])));
    }
    let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes"));
    let version = word(4);
    if version != FEATURE_VERSION {
        return Err(Error::format(path, 4, format!("unsupported version {version}, expected {FEATURE_VERSION}")));
    }
    let (clips, dim) = (word(8) as usize, word(12) as usize);
    if clips == 0 {
        return Err(Error::format(path, 8, "num_clips is 0; empty sequences are not allowed"));
    }
    if dim == 0 {
        return Err(Error::format(path, 12, "dim is 0"));
    }
    if let Some(want) = expected_dim {
        if want != dim {
            return Err(Error::format(path, 12, format!("dim is {dim}, expected {want}")));
        }
    }
    let expected = HEADER_LEN as usize + 4 * clips * dim;
    if bytes.len() != expected {
        return Err(Error::format(
            path,
            bytes.len().min(expected) as u64,
            format!("expected {expected} bytes for {clips} clips x {dim} dims, found {}", bytes.len()),
        ));
    }
    let data: Vec<f64> = bytes[HEADER_LEN as usize..]
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes(c.try_into().expect("4 bytes"))))
        .collect();
    if let Some(i) = data.iter().position(|v| !v.is_finite()) {
        return Err(Error::format(path, HEADER_LEN + 4 * i as u64, "non-finite feature value"));
    }
    Ok(ClipFeatureSequence::from_clip_major(video_id_of(path), clips, dim, &data)?)
}

/// Writes `seq` with values narrowed to `f32`.
pub fn write_features(seq: &ClipFeatureSequence, path: &Path) -> Result<()> {
    let (clips, dim) = (seq.num_clips(), seq.dim());
    let too_big = |what: &str| Error::Usage(format!("{}: {what} does not fit in u32", path.display()));
    let mut bytes = Vec::with_capacity(HEADER_LEN as usize + 4 * clips * dim);
    bytes.extend_from_slice(FEATURE_MAGIC);
    bytes.extend_from_slice(&FEATURE_VERSION.to_le_bytes());
    bytes.extend_from_slice(&u32::try_from(clips).map_err(|_| too_big("num_clips"))?.to_le_bytes());
    bytes.extend_from_slice(&u32::try_from(dim).map_err(|_| too_big("dim"))?.to_le_bytes());
    for v in seq.to_clip_major() {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    write_atomic(path, &bytes)
}
