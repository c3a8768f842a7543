//! Binary checkpoints shared by every learned object.
//!
//! Layout, all little-endian:
//!
//! ```text
//! magic [4]u8 | version u32 | n u32 | m u32
//! shape_len u64 | shape [u64]
//! params_len u64 | params [f64]
//! stats_len u64 | stats [f64]
//! ```

use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

use crate::actor::{LinearFeedback, MlpPolicy, Policy};
use crate::critic::{QuadraticValue, ValueFn};
use crate::dynamics::{DynModel, Normalizer};
use crate::num::{Mat, Mlp};

pub const VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kind {
    Dynamics,
    Critic,
    Policy,
    Buffer,
    Trainer,
}

impl Kind {
    pub fn magic(self) -> [u8; 4] {
        match self {
            Kind::Dynamics => *b"APGD",
            Kind::Critic => *b"APGV",
            Kind::Policy => *b"APGP",
            Kind::Buffer => *b"APGB",
            Kind::Trainer => *b"APGT",
        }
    }
}

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint i/o: {0}")]
    Io(#[from] io::Error),
    #[error("wrong checkpoint magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("checkpoint is truncated")]
    Truncated,
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub kind: Kind,
    pub n: u32,
    pub m: u32,
    pub shape: Vec<u64>,
    pub params: Vec<f64>,
    pub stats: Vec<f64>,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(40 + 8 * (self.shape.len() + self.params.len() + self.stats.len()));
        out.extend_from_slice(&self.kind.magic());
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&self.n.to_le_bytes());
        out.extend_from_slice(&self.m.to_le_bytes());
        out.extend_from_slice(&(self.shape.len() as u64).to_le_bytes());
        for s in &self.shape {
            out.extend_from_slice(&s.to_le_bytes());
        }
        for block in [&self.params, &self.stats] {
            out.extend_from_slice(&(block.len() as u64).to_le_bytes());
            for v in block.iter() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(kind: Kind, bytes: &[u8]) -> Result<Self, CheckpointError> {
        let mut r = Reader { bytes, pos: 0 };
        let mut found = [0u8; 4];
        found.copy_from_slice(r.take(4)?);
        if found != kind.magic() {
            return Err(CheckpointError::BadMagic {
                expected: kind.magic(),
                found,
            });
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(CheckpointError::Version(version));
        }
        let n = r.u32()?;
        let m = r.u32()?;
        let len = r.len()?;
        let shape = (0..len).map(|_| r.u64()).collect::<Result<_, _>>()?;
        let len = r.len()?;
        let params = (0..len).map(|_| r.f64()).collect::<Result<_, _>>()?;
        let len = r.len()?;
        let stats = (0..len).map(|_| r.f64()).collect::<Result<_, _>>()?;
        if r.pos != bytes.len() {
            return Err(CheckpointError::Malformed(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(Checkpoint {
            kind,
            n,
            m,
            shape,
            params,
            stats,
        })
    }

    /// Writes through a temporary file and renames it into place.
    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, self.to_bytes())?;
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(kind: Kind, path: &Path) -> Result<Self, CheckpointError> {
        Self::from_bytes(kind, &fs::read(path)?)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, k: usize) -> Result<&[u8], CheckpointError> {
        let end = self.pos.checked_add(k).ok_or(CheckpointError::Truncated)?;
        let s = self.bytes.get(self.pos..end).ok_or(CheckpointError::Truncated)?;
        self.pos = end;
        Ok(s)
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

    /// Element count, bounded by what the remaining bytes could hold.
    fn len(&mut self) -> Result<usize, CheckpointError> {
        let len = self.u64()?;
        if len > ((self.bytes.len() - self.pos) / 8) as u64 {
            return Err(CheckpointError::Truncated);
        }
        Ok(len as usize)
    }
}

fn malformed(msg: impl Into<String>) -> CheckpointError {
    CheckpointError::Malformed(msg.into())
}

fn sizes_of(shape: &[u64]) -> Vec<usize> {
    shape.iter().map(|s| *s as usize).collect()
}

fn mlp_from(sizes: &[usize], params: &[f64]) -> Result<Mlp, CheckpointError> {
    Mlp::zeros(sizes)
        .and_then(|net| net.with_params(params))
        .map_err(|e| malformed(e.to_string()))
}

pub fn critic_checkpoint(vf: &ValueFn) -> Checkpoint {
    let n = vf.state_dim() as u32;
    match vf {
        ValueFn::Mlp(net) => Checkpoint {
            kind: Kind::Critic,
            n,
            m: 0,
            shape: std::iter::once(0).chain(net.sizes().iter().map(|s| *s as u64)).collect(),
            params: vf.params(),
            stats: vec![],
        },
        ValueFn::Quadratic(q) => Checkpoint {
            kind: Kind::Critic,
            n,
            m: 0,
            shape: vec![1, n as u64],
            params: vf.params(),
            stats: q.scale().to_vec(),
        },
    }
}

pub fn critic_from(ck: &Checkpoint) -> Result<ValueFn, CheckpointError> {
    match ck.shape.split_first() {
        Some((0, sizes)) => Ok(ValueFn::Mlp(mlp_from(&sizes_of(sizes), &ck.params)?)),
        Some((1, _)) => ValueFn::Quadratic(QuadraticValue::with_scale(ck.stats.clone()))
            .with_params(&ck.params)
            .map_err(|e| malformed(e.to_string())),
        _ => Err(malformed("unknown critic form")),
    }
}

pub fn policy_checkpoint(policy: &Policy) -> Checkpoint {
    let n = policy.state_dim() as u32;
    let m = policy.control_dim() as u32;
    match policy {
        Policy::Linear(p) => Checkpoint {
            kind: Kind::Policy,
            n,
            m,
            shape: vec![0, m as u64, n as u64, p.offset().is_some() as u64, p.reference().is_some() as u64],
            params: policy.params(),
            stats: p.reference().map(|(x, u)| x.iter().chain(u).copied().collect()).unwrap_or_default(),
        },
        Policy::Mlp(p) => {
            let (lo, hi) = p.bounds();
            Checkpoint {
                kind: Kind::Policy,
                n,
                m,
                shape: std::iter::once(1).chain(p.net().sizes().iter().map(|s| *s as u64)).collect(),
                params: policy.params(),
                stats: lo.iter().chain(hi).copied().collect(),
            }
        }
    }
}

pub fn policy_from(ck: &Checkpoint) -> Result<Policy, CheckpointError> {
    let (m, n) = (ck.m as usize, ck.n as usize);
    let template = match ck.shape.as_slice() {
        [0, _, _, with_offset, with_reference] => {
            let offset = (*with_offset == 1).then(|| vec![0.0; m]);
            let reference = if *with_reference == 1 {
                if ck.stats.len() != n + m {
                    return Err(malformed("policy reference length"));
                }
                Some((ck.stats[..n].to_vec(), ck.stats[n..].to_vec()))
            } else {
                None
            };
            let lf = LinearFeedback::from_parts(Mat::zeros(m, n), offset, reference).map_err(|e| malformed(e.to_string()))?;
            Policy::Linear(lf)
        }
        [1, sizes @ ..] => {
            if ck.stats.len() != 2 * m {
                return Err(malformed("policy bounds length"));
            }
            let bounds: Vec<(f64, f64)> = (0..m).map(|i| (ck.stats[i], ck.stats[m + i])).collect();
            let net = mlp_from(&sizes_of(sizes), &ck.params)?;
            Policy::Mlp(MlpPolicy::new(net, &bounds).map_err(|e| malformed(e.to_string()))?)
        }
        _ => return Err(malformed("unknown policy form")),
    };
    template.with_params(&ck.params).map_err(|e| malformed(e.to_string()))
}

pub fn dynamics_checkpoint(model: &DynModel) -> Checkpoint {
    let stats = [model.input_norm(), model.output_norm()]
        .iter()
        .flat_map(|nm| nm.mean.iter().chain(&nm.scale).copied().collect::<Vec<_>>())
        .collect();
    Checkpoint {
        kind: Kind::Dynamics,
        n: model.state_dim() as u32,
        m: model.control_dim() as u32,
        shape: model.net().sizes().iter().map(|s| *s as u64).collect(),
        params: model.net().flatten(),
        stats,
    }
}

pub fn dynamics_from(ck: &Checkpoint) -> Result<DynModel, CheckpointError> {
    let (n, m) = (ck.n as usize, ck.m as usize);
    if ck.stats.len() != 2 * (n + m) + 2 * n {
        return Err(malformed("dynamics normalization length"));
    }
    let s = &ck.stats;
    let k = n + m;
    let input = Normalizer {
        mean: s[..k].to_vec(),
        scale: s[k..2 * k].to_vec(),
    };
    let output = Normalizer {
        mean: s[2 * k..2 * k + n].to_vec(),
        scale: s[2 * k + n..].to_vec(),
    };
    let net = mlp_from(&sizes_of(&ck.shape), &ck.params)?;
    DynModel::from_parts(net, input, output).map_err(|e| malformed(e.to_string()))
}
