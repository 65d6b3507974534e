//! Checkpoint files: a flat list of named parameter blocks.
//!
//! Layout (all integers little-endian):
//!   magic `b"SWNN"` | u32 version | u32 block count | blocks...
//! Each block:
//!   u16 name length | name bytes (UTF-8) | u8 ndims | u32 dims... | f64 data (LE)

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::NnError;

const MAGIC: &[u8; 4] = b"SWNN";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct ParamBlock {
    pub name: String,
    pub dims: Vec<u32>,
    pub data: Vec<f64>,
}

impl ParamBlock {
    pub fn new(name: impl Into<String>, dims: Vec<u32>, data: Vec<f64>) -> Self {
        let block = Self { name: name.into(), dims, data };
        debug_assert_eq!(
            block.dims.iter().map(|d| *d as usize).product::<usize>(),
            block.data.len()
        );
        block
    }
}

pub fn save_blocks(path: &Path, blocks: &[ParamBlock]) -> Result<(), NnError> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(blocks.len() as u32).to_le_bytes())?;
    for b in blocks {
        let name = b.name.as_bytes();
        w.write_all(&(name.len() as u16).to_le_bytes())?;
        w.write_all(name)?;
        w.write_all(&[b.dims.len() as u8])?;
        for d in &b.dims {
            w.write_all(&d.to_le_bytes())?;
        }
        for v in &b.data {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load_blocks(path: &Path) -> Result<Vec<ParamBlock>, NnError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(NnError::BadCheckpoint("bad magic bytes".into()));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(NnError::BadCheckpoint(format!("unsupported version {version}")));
    }
    let count = read_u32(&mut r)? as usize;
    let mut blocks = Vec::with_capacity(count);
    for _ in 0..count {
        let mut len = [0u8; 2];
        r.read_exact(&mut len)?;
        let mut name = vec![0u8; u16::from_le_bytes(len) as usize];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name)
            .map_err(|_| NnError::BadCheckpoint("non-UTF8 block name".into()))?;
        let mut ndims = [0u8; 1];
        r.read_exact(&mut ndims)?;
        let mut dims = Vec::with_capacity(ndims[0] as usize);
        for _ in 0..ndims[0] {
            dims.push(read_u32(&mut r)?);
        }
        let n: usize = dims.iter().map(|d| *d as usize).product();
        let mut data = Vec::with_capacity(n);
        let mut buf = [0u8; 8];
        for _ in 0..n {
            r.read_exact(&mut buf)?;
            data.push(f64::from_le_bytes(buf));
        }
        blocks.push(ParamBlock { name, dims, data });
    }
    Ok(blocks)
}

fn read_u32(r: &mut impl Read) -> Result<u32, NnError> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}
