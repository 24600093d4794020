//! Binary checkpoint layout, little-endian:
//!
//! ```text
//! magic    8 bytes  "ASZCKPT\0"
//! version  u32
//! hlen     u32      header length
//! header   hlen     JSON: fingerprint, architecture, training config
//! count    u64      parameter count
//! params   count × f64
//! ```

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{NetArch, PolicyNet, TrainConfig};
use crate::env::Fingerprint;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"ASZCKPT\0";
pub const CHECKPOINT_VERSION: u32 = 1;
const MAX_HEADER: usize = 1 << 20;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("not a checkpoint (bad magic)")]
    Magic,
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("checkpoint truncated")]
    Truncated,
    #[error("checkpoint header: {0}")]
    Header(String),
    #[error("checkpoint holds {got} parameters, architecture needs {expected}")]
    ParamCount { expected: u64, got: u64 },
    #[error("{0} trailing bytes after parameters")]
    Trailing(usize),
    #[error("non-finite parameter at index {0}")]
    NonFinite(usize),
    #[error("fingerprint mismatch: checkpoint {found:?}, environment {expected:?}")]
    Fingerprint { expected: Fingerprint, found: Fingerprint },
    #[error("circuit mismatch: checkpoint trained on {found}, environment is {expected}")]
    Circuit { expected: String, found: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    fingerprint: Fingerprint,
    arch: NetArch,
    train: TrainConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub fingerprint: Fingerprint,
    pub train: TrainConfig,
    pub net: PolicyNet,
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        if self.buf.len() < n {
            return Err(CheckpointError::Truncated);
        }
        let (head, rest) = self.buf.split_at(n);
        self.buf = rest;
        Ok(head)
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

impl Checkpoint {
    pub fn encode(&self) -> Vec<u8> {
        let header =
            Header { fingerprint: self.fingerprint.clone(), arch: self.net.arch().clone(), train: self.train.clone() };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::with_capacity(24 + json.len() + 8 * self.net.params.len());
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        out.extend_from_slice(&(self.net.params.len() as u64).to_le_bytes());
        for p in &self.net.params {
            out.extend_from_slice(&p.to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, CheckpointError> {
        let mut r = Reader { buf: bytes };
        if r.take(8).map_err(|_| CheckpointError::Magic)? != CHECKPOINT_MAGIC {
            return Err(CheckpointError::Magic);
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(CheckpointError::Version(version));
        }
        let hlen = r.u32()? as usize;
        if hlen > MAX_HEADER {
            return Err(CheckpointError::Header(format!("header length {hlen} exceeds {MAX_HEADER}")));
        }
        let header: Header =
            serde_json::from_slice(r.take(hlen)?).map_err(|e| CheckpointError::Header(e.to_string()))?;
        header.arch.validate().map_err(|e| CheckpointError::Header(e.to_string()))?;
        let expected = header.arch.param_count() as u64;
        let count = r.u64()?;
        if count != expected {
            return Err(CheckpointError::ParamCount { expected, got: count });
        }
        let need = count.checked_mul(8).ok_or(CheckpointError::Truncated)?;
        if (r.buf.len() as u64) < need {
            return Err(CheckpointError::Truncated);
        }
        if r.buf.len() as u64 > need {
            return Err(CheckpointError::Trailing((r.buf.len() as u64 - need) as usize));
        }
        let params: Vec<f64> = r.buf.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        if let Some(i) = params.iter().position(|p| !p.is_finite()) {
            return Err(CheckpointError::NonFinite(i));
        }
        let net = PolicyNet::from_params(header.arch, params).map_err(|e| CheckpointError::Header(e.to_string()))?;
        Ok(Self { fingerprint: header.fingerprint, train: header.train, net })
    }

    pub fn save(&self, path: &std::path::Path) -> Result<(), CheckpointError> {
        std::fs::write(path, self.encode())?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self, CheckpointError> {
        Self::decode(&std::fs::read(path)?)
    }

    /// Exact environment match, required for same-environment deployment.
    pub fn check_fingerprint(&self, env: &Fingerprint) -> Result<(), CheckpointError> {
        if &self.fingerprint != env {
            return Err(CheckpointError::Fingerprint { expected: env.clone(), found: self.fingerprint.clone() });
        }
        Ok(())
    }

    /// Circuit-id match only, as used when deploying onto a perturbed variant.
    pub fn check_circuit(&self, circuit_id: &str) -> Result<(), CheckpointError> {
        if self.fingerprint.circuit_id != circuit_id {
            return Err(CheckpointError::Circuit {
                expected: circuit_id.to_owned(),
                found: self.fingerprint.circuit_id.clone(),
            });
        }
        Ok(())
    }
}
