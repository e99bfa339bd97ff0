//! Versioned binary checkpoints plus a human-readable manifest.
//!
//! Layout: magic `HAMCKPT1`, version u32, block count u32, then per block a
//! length-prefixed name, rank, dims (u64), and little-endian f64 data.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::params::{Layout, ParamStore};
use crate::{Error, Result};

const MAGIC: &[u8; 8] = b"HAMCKPT1";
const VERSION: u32 = 1;

pub fn save(path: &Path, store: &ParamStore) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(store.layout().blocks().len() as u32).to_le_bytes())?;
    for info in store.layout().blocks() {
        let name = info.name.as_bytes();
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name)?;
        w.write_all(&(info.shape.len() as u32).to_le_bytes())?;
        for &d in &info.shape {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        let data = &store.values()[info.offset..info.offset + info.len()];
        for v in data {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load(path: &Path) -> Result<ParamStore> {
    let mut r = BufReader::new(File::open(path)?);

    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::format("checkpoint", "bad magic"));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(Error::format(
            "checkpoint",
            format!("unsupported version {version}"),
        ));
    }
    let n_blocks = read_u32(&mut r)? as usize;

    let mut layout = Layout::new();
    let mut all_data: Vec<Vec<f64>> = Vec::with_capacity(n_blocks);
    for _ in 0..n_blocks {
        let name_len = read_u32(&mut r)? as usize;
        if name_len > 4096 {
            return Err(Error::format("checkpoint", "block name too long"));
        }
        let mut name = vec![0u8; name_len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name)
            .map_err(|_| Error::format("checkpoint", "block name not utf-8"))?;
        let rank = read_u32(&mut r)? as usize;
        if rank == 0 || rank > 4 {
            return Err(Error::format("checkpoint", format!("bad rank {rank}")));
        }
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(read_u64(&mut r)? as usize);
        }
        let len: usize = shape.iter().product();
        let mut data = Vec::with_capacity(len);
        let mut buf = [0u8; 8];
        for _ in 0..len {
            r.read_exact(&mut buf)?;
            data.push(f64::from_le_bytes(buf));
        }
        layout.add(&name, &shape);
        all_data.push(data);
    }

    let mut store = ParamStore::zeros(layout);
    let mut offset = 0;
    for data in all_data {
        store.values_mut()[offset..offset + data.len()].copy_from_slice(&data);
        offset += data.len();
    }
    Ok(store)
}

/// Checks that a loaded store matches the layout a model expects.
pub fn verify_layout(expected: &Layout, loaded: &Layout) -> Result<()> {
    if expected.blocks().len() != loaded.blocks().len() {
        return Err(Error::format(
            "checkpoint",
            format!(
                "expected {} blocks, found {}",
                expected.blocks().len(),
                loaded.blocks().len()
            ),
        ));
    }
    for (e, l) in expected.blocks().iter().zip(loaded.blocks()) {
        if e.name != l.name || e.shape != l.shape {
            return Err(Error::format(
                "checkpoint",
                format!(
                    "block mismatch: expected `{}` {:?}, found `{}` {:?}",
                    e.name, e.shape, l.name, l.shape
                ),
            ));
        }
    }
    Ok(())
}

/// Plain-text manifest: header lines, block table, total parameter count.
pub fn write_manifest(path: &Path, header: &[(&str, String)], store: &ParamStore) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for (k, v) in header {
        writeln!(w, "{k} = {v}")?;
    }
    writeln!(w, "blocks:")?;
    for info in store.layout().blocks() {
        let dims: Vec<String> = info.shape.iter().map(|d| d.to_string()).collect();
        writeln!(w, "  {} [{}] = {}", info.name, dims.join(" x "), info.len())?;
    }
    writeln!(w, "total_parameters = {}", store.layout().total_len())?;
    w.flush()?;
    Ok(())
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}
