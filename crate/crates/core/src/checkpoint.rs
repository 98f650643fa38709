//! Versioned binary checkpoint: every actor/critic online and target
//! parameter block with its shape header, the config hash, and the training
//! seed, integrity-protected by length checks and a trailing SHA-256.
//!
//! Layout (little-endian): magic `MRATCKPT`, version u16, config hash (32),
//! seed u64, team count u32, then per team the agent count and per agent the
//! actor and critic net blocks, then the checksum of all preceding bytes.

use std::fs;
use std::io::Write;
use std::path::Path;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::marl::Teams;
use crate::nn::{Head, HeadActivation, HiddenActivation, MlpSpec};
use crate::{MlpNet, Scalar};

const MAGIC: &[u8; 8] = b"MRATCKPT";
const VERSION: u16 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint io: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("checkpoint version {0} is newer than supported version {VERSION}")]
    FutureVersion(u16),
    #[error("checkpoint integrity error: {0}")]
    Integrity(&'static str),
    #[error("checkpoint was written for a different config (hash mismatch)")]
    HashMismatch,
    #[error("checkpoint is inconsistent: {0}")]
    Malformed(&'static str),
}

/// Deserialized checkpoint contents. Each team is a list of
/// `(actor, critic)` networks with fresh optimizer state.
#[derive(Debug, Clone)]
pub struct CheckpointData {
    pub version: u16,
    pub config_hash: [u8; 32],
    pub seed: u64,
    pub teams: Vec<Vec<(MlpNet, MlpNet)>>,
}

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }
    fn u16(&mut self, v: u16) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        if self.pos + n > self.buf.len() {
            return Err(CheckpointError::Integrity("truncated file"));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8, CheckpointError> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16, CheckpointError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64, CheckpointError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

fn write_net(w: &mut Writer, net: &MlpNet) {
    let spec = net.spec();
    w.u32(spec.layer_sizes.len() as u32);
    for &s in &spec.layer_sizes {
        w.u32(s as u32);
    }
    w.u8(match spec.hidden_activation {
        HiddenActivation::Relu => 0,
        HiddenActivation::Tanh => 1,
    });
    w.u32(spec.heads.len() as u32);
    for head in &spec.heads {
        w.u32(head.width as u32);
        match head.activation {
            HeadActivation::Linear => {
                w.u8(0);
                w.f64(0.0);
            }
            HeadActivation::Simplex => {
                w.u8(1);
                w.f64(0.0);
            }
            HeadActivation::UnitInterval { hi } => {
                w.u8(2);
                w.f64(hi);
            }
        }
    }
    w.u64(net.params().len() as u64);
    for &p in net.params() {
        w.f64(p);
    }
    for &p in net.target_params() {
        w.f64(p);
    }
}

fn read_net(r: &mut Reader<'_>) -> Result<MlpNet, CheckpointError> {
    let layers = r.u32()? as usize;
    if !(2..=64).contains(&layers) {
        return Err(CheckpointError::Malformed("implausible layer count"));
    }
    let mut sizes = Vec::with_capacity(layers);
    for _ in 0..layers {
        sizes.push(r.u32()? as usize);
    }
    let hidden = match r.u8()? {
        0 => HiddenActivation::Relu,
        1 => HiddenActivation::Tanh,
        _ => return Err(CheckpointError::Malformed("unknown hidden activation")),
    };
    let head_count = r.u32()? as usize;
    let mut heads = Vec::with_capacity(head_count);
    for _ in 0..head_count {
        let width = r.u32()? as usize;
        let kind = r.u8()?;
        let hi = r.f64()?;
        let activation = match kind {
            0 => HeadActivation::Linear,
            1 => HeadActivation::Simplex,
            2 => HeadActivation::UnitInterval { hi },
            _ => return Err(CheckpointError::Malformed("unknown head activation")),
        };
        heads.push(Head { width, activation });
    }
    let spec = MlpSpec::new(sizes, hidden, heads).map_err(|_| CheckpointError::Malformed("invalid net spec"))?;
    let count = r.u64()? as usize;
    if count != spec.param_count() {
        return Err(CheckpointError::Malformed("parameter count does not match spec"));
    }
    let mut params = Vec::with_capacity(count);
    for _ in 0..count {
        params.push(r.f64()? as Scalar);
    }
    let mut target = Vec::with_capacity(count);
    for _ in 0..count {
        target.push(r.f64()? as Scalar);
    }
    MlpNet::from_parts(spec, params, target).map_err(|_| CheckpointError::Malformed("invalid parameter block"))
}

/// Serializes both teams and writes the file atomically (temp + rename).
pub fn save_checkpoint(path: &Path, teams: &Teams, config_hash: [u8; 32], seed: u64) -> Result<(), CheckpointError> {
    let mut w = Writer { buf: Vec::new() };
    w.buf.extend_from_slice(MAGIC);
    w.u16(VERSION);
    w.buf.extend_from_slice(&config_hash);
    w.u64(seed);
    w.u32(2);
    for team in [&teams.pens, &teams.rans] {
        w.u32(team.agents.len() as u32);
        for agent in &team.agents {
            write_net(&mut w, &agent.actor);
            write_net(&mut w, &agent.critic);
        }
    }
    let checksum = Sha256::digest(&w.buf);
    w.buf.extend_from_slice(&checksum);

    let tmp = path.with_extension("tmp");
    {
        let mut file = fs::File::create(&tmp)?;
        file.write_all(&w.buf)?;
        file.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Loads and verifies a checkpoint. `expected_hash` enforces that it was
/// trained under the same config; pass `allow_hash_mismatch` to override.
pub fn load_checkpoint(
    path: &Path,
    expected_hash: Option<[u8; 32]>,
    allow_hash_mismatch: bool,
) -> Result<CheckpointData, CheckpointError> {
    let bytes = fs::read(path)?;
    if bytes.len() < MAGIC.len() + 2 + 32 + 8 + 4 + 32 {
        return Err(CheckpointError::Integrity("file shorter than any valid checkpoint"));
    }
    let (payload, checksum) = bytes.split_at(bytes.len() - 32);
    let computed = Sha256::digest(payload);
    if computed.as_slice() != checksum {
        return Err(CheckpointError::Integrity("checksum mismatch"));
    }

    let mut r = Reader { buf: payload, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = r.u16()?;
    if version > VERSION {
        return Err(CheckpointError::FutureVersion(version));
    }
    let mut config_hash = [0u8; 32];
    config_hash.copy_from_slice(r.take(32)?);
    if let Some(expected) = expected_hash {
        if expected != config_hash && !allow_hash_mismatch {
            return Err(CheckpointError::HashMismatch);
        }
    }
    let seed = r.u64()?;
    let team_count = r.u32()? as usize;
    if team_count != 2 {
        return Err(CheckpointError::Malformed("expected exactly two teams"));
    }
    let mut teams = Vec::with_capacity(team_count);
    for _ in 0..team_count {
        let agent_count = r.u32()? as usize;
        if agent_count == 0 || agent_count > 4096 {
            return Err(CheckpointError::Malformed("implausible agent count"));
        }
        let mut agents = Vec::with_capacity(agent_count);
        for _ in 0..agent_count {
            let actor = read_net(&mut r)?;
            let critic = read_net(&mut r)?;
            agents.push((actor, critic));
        }
        teams.push(agents);
    }
    if r.pos != payload.len() {
        return Err(CheckpointError::Integrity("trailing bytes after payload"));
    }
    Ok(CheckpointData { version, config_hash, seed, teams })
}
