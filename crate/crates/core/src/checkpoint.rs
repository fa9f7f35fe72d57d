//! Binary checkpoints of the full training state.
//!
//! Layout: `b"SWCK"`, `u32` format version, `u32` CRC32 of the payload (all
//! little-endian), then the bincode-encoded [`TrainerState`].

use std::path::Path;

use crate::error::{Error, Result};
use crate::policy::PolicyParams;
use crate::trainer::TrainerState;

pub const MAGIC: &[u8; 4] = b"SWCK";
pub const VERSION: u32 = 1;
const HEADER: usize = 12;

pub fn encode_checkpoint(state: &TrainerState) -> Vec<u8> {
    let payload = bincode::serialize(state).expect("trainer state serializes");
    let mut out = Vec::with_capacity(HEADER + payload.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&crc32fast::hash(&payload).to_le_bytes());
    out.extend_from_slice(&payload);
    out
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<TrainerState> {
    if bytes.len() < HEADER || &bytes[..4] != MAGIC {
        return Err(Error::Decode("not a checkpoint (bad magic)".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(Error::Version {
            found: version,
            expected: VERSION,
        });
    }
    let stored = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    let payload = &bytes[HEADER..];
    let computed = crc32fast::hash(payload);
    if stored != computed {
        return Err(Error::Checksum { stored, computed });
    }
    Ok(bincode::deserialize(payload)?)
}

/// Write atomically: to a sibling temporary file, then rename over `path`.
pub fn save_checkpoint(path: impl AsRef<Path>, state: &TrainerState) -> Result<()> {
    let path = path.as_ref();
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, encode_checkpoint(state)).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<TrainerState> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}

/// Policy stored in a checkpoint.
pub fn checkpoint_policy(state: &TrainerState) -> Result<PolicyParams> {
    PolicyParams::from_vec(&state.config.policy, state.params.clone())
}
