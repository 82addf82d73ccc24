//! Self-describing binary checkpoint format.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic "LWNC" | version u32 | meta count u32 | meta (key, value) strings
//! | section count u32 | per section: name, block table, f64 LE data
//! ```
//!
//! Strings are a u32 byte length followed by UTF-8 bytes. Export/import
//! round-trips are bit-exact.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use thiserror::Error;

use super::params::{NetworkParams, ParamBuilder};

const MAGIC: &[u8; 4] = b"LWNC";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad magic bytes; not a checkpoint file")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    BadVersion(u32),
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
    #[error("checkpoint incompatible: {0}")]
    Incompatible(String),
}

/// Named parameter sections plus free-form metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub meta: BTreeMap<String, String>,
    pub sections: Vec<(String, NetworkParams)>,
}

impl Checkpoint {
    pub fn new() -> Self {
        Self {
            meta: BTreeMap::new(),
            sections: Vec::new(),
        }
    }

    pub fn section(&self, name: &str) -> Option<&NetworkParams> {
        self.sections
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, p)| p)
    }

    pub fn require_section(&self, name: &str) -> Result<&NetworkParams, CheckpointError> {
        self.section(name).ok_or_else(|| {
            CheckpointError::Incompatible(format!("missing parameter section '{name}'"))
        })
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), CheckpointError> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(self.meta.len() as u32).to_le_bytes())?;
        for (k, v) in &self.meta {
            write_string(&mut w, k)?;
            write_string(&mut w, v)?;
        }
        w.write_all(&(self.sections.len() as u32).to_le_bytes())?;
        for (name, params) in &self.sections {
            write_string(&mut w, name)?;
            w.write_all(&(params.blocks().len() as u32).to_le_bytes())?;
            for b in params.blocks() {
                write_string(&mut w, &b.name)?;
                w.write_all(&(b.shape.len() as u32).to_le_bytes())?;
                for d in &b.shape {
                    w.write_all(&(*d as u64).to_le_bytes())?;
                }
            }
            w.write_all(&(params.len() as u64).to_le_bytes())?;
            for v in params.data() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, CheckpointError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let version = read_u32(&mut r)?;
        if version != VERSION {
            return Err(CheckpointError::BadVersion(version));
        }
        let mut meta = BTreeMap::new();
        for _ in 0..read_u32(&mut r)? {
            let k = read_string(&mut r)?;
            let v = read_string(&mut r)?;
            meta.insert(k, v);
        }
        let n_sections = read_u32(&mut r)?;
        let mut sections = Vec::with_capacity(n_sections as usize);
        for _ in 0..n_sections {
            let name = read_string(&mut r)?;
            let n_blocks = read_u32(&mut r)?;
            let mut blocks = Vec::with_capacity(n_blocks as usize);
            for _ in 0..n_blocks {
                let bname = read_string(&mut r)?;
                let ndims = read_u32(&mut r)?;
                let mut shape = Vec::with_capacity(ndims as usize);
                for _ in 0..ndims {
                    shape.push(read_u64(&mut r)? as usize);
                }
                blocks.push((bname, shape));
            }
            let total = read_u64(&mut r)? as usize;
            let mut data = vec![0.0f64; total];
            let mut buf = [0u8; 8];
            for v in &mut data {
                r.read_exact(&mut buf)?;
                *v = f64::from_le_bytes(buf);
            }
            sections.push((name, rebuild_params(blocks, data)?));
        }
        Ok(Self { meta, sections })
    }

    pub fn save(&self, path: &std::path::Path) -> Result<(), CheckpointError> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        std::fs::write(path, buf)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self, CheckpointError> {
        let bytes = std::fs::read(path)?;
        Self::read_from(&bytes[..])
    }
}

impl Default for Checkpoint {
    fn default() -> Self {
        Self::new()
    }
}

fn rebuild_params(
    blocks: Vec<(String, Vec<usize>)>,
    data: Vec<f64>,
) -> Result<NetworkParams, CheckpointError> {
    // Rebuild through the builder to recompute offsets, then overwrite the
    // values wholesale.
    let mut rng = crate::seeding::rng_from_seed(0);
    let mut builder = ParamBuilder::new(&mut rng);
    for (name, shape) in &blocks {
        builder.register(name, shape, super::params::Init::Zero);
    }
    let mut params = builder.finish();
    if params.len() != data.len() {
        return Err(CheckpointError::Malformed(format!(
            "block table wants {} values, payload has {}",
            params.len(),
            data.len()
        )));
    }
    params.data_mut().copy_from_slice(&data);
    Ok(params)
}

fn write_string<W: Write>(w: &mut W, s: &str) -> std::io::Result<()> {
    w.write_all(&(s.len() as u32).to_le_bytes())?;
    w.write_all(s.as_bytes())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, CheckpointError> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64, CheckpointError> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

fn read_string<R: Read>(r: &mut R) -> Result<String, CheckpointError> {
    let len = read_u32(r)? as usize;
    if len > 1 << 20 {
        return Err(CheckpointError::Malformed(format!(
            "string length {len} implausible"
        )));
    }
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|e| CheckpointError::Malformed(e.to_string()))
}
