//! Binary checkpoint: `IGCLCKPT` magic, `u32` version, a header of `u64`
//! words (input_dim, encoder layer count, encoder widths…, head_hidden,
//! embed_dim, n_classes, seed, value count), then little-endian `f64`
//! values in [`ModelParams::all_slices`] order.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use super::{ModelConfig, ModelParams};
use crate::scalar::Real;
use crate::{Error, Result};

const MAGIC: &[u8; 8] = b"IGCLCKPT";
const VERSION: u32 = 1;

pub fn write_checkpoint<T: Real, W: Write>(p: &ModelParams<T>, mut w: W) -> Result<()> {
    let c = &p.config;
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    let mut header = vec![c.input_dim as u64, c.encoder_widths.len() as u64];
    header.extend(c.encoder_widths.iter().map(|&x| x as u64));
    let n_values: usize = p.all_slices().iter().map(|s| s.len()).sum();
    header.extend([
        c.head_hidden as u64,
        c.embed_dim as u64,
        c.n_classes as u64,
        c.seed,
        n_values as u64,
    ]);
    for h in header {
        w.write_all(&h.to_le_bytes())?;
    }
    for s in p.all_slices() {
        for v in s {
            w.write_all(&v.as_f64().to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)
        .map_err(|e| Error::Format(format!("truncated checkpoint header: {e}")))?;
    Ok(u64::from_le_bytes(b))
}

pub fn read_checkpoint<T: Real, R: Read>(mut r: R) -> Result<ModelParams<T>> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)
        .map_err(|_| Error::Format("not a checkpoint".into()))?;
    if &magic != MAGIC {
        return Err(Error::Format("bad checkpoint magic".into()));
    }
    let mut vb = [0u8; 4];
    r.read_exact(&mut vb)?;
    let version = u32::from_le_bytes(vb);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let input_dim = read_u64(&mut r)? as usize;
    let n_layers = read_u64(&mut r)? as usize;
    if n_layers > 1024 {
        return Err(Error::Format(format!("implausible encoder depth {n_layers}")));
    }
    let encoder_widths = (0..n_layers)
        .map(|_| read_u64(&mut r).map(|x| x as usize))
        .collect::<Result<Vec<_>>>()?;
    let config = ModelConfig {
        input_dim,
        encoder_widths,
        head_hidden: read_u64(&mut r)? as usize,
        embed_dim: read_u64(&mut r)? as usize,
        n_classes: read_u64(&mut r)? as usize,
        seed: read_u64(&mut r)?,
    };
    config
        .validate()
        .map_err(|e| Error::Format(format!("checkpoint header: {e}")))?;
    let n_values = read_u64(&mut r)? as usize;
    let mut p = ModelParams::<T>::zeros(&config);
    let expected: usize = p.all_slices().iter().map(|s| s.len()).sum();
    if n_values != expected {
        return Err(Error::Format(format!(
            "checkpoint holds {n_values} values, shapes need {expected}"
        )));
    }
    let mut buf = [0u8; 8];
    for s in p.all_slices_mut() {
        for v in s.iter_mut() {
            r.read_exact(&mut buf)
                .map_err(|_| Error::Format("truncated checkpoint body".into()))?;
            *v = T::lit(f64::from_le_bytes(buf));
        }
    }
    let mut rest = Vec::new();
    r.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(Error::Format(format!("{} trailing bytes after checkpoint", rest.len())));
    }
    Ok(p)
}

pub fn save_checkpoint<T: Real>(p: &ModelParams<T>, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_checkpoint(p, &mut buf)?;
    fs::write(path, buf)?;
    Ok(())
}

/// Load and check the stored shapes against `expected`.
pub fn load_checkpoint<T: Real>(path: &Path, expected: Option<&ModelConfig>) -> Result<ModelParams<T>> {
    let p: ModelParams<T> = read_checkpoint(fs::read(path)?.as_slice())?;
    if let Some(cfg) = expected {
        let mut a = p.config.clone();
        let mut b = cfg.clone();
        a.seed = 0;
        b.seed = 0;
        if a != b {
            return Err(Error::Format(format!(
                "checkpoint shapes {:?} do not match expected {:?}",
                p.config, cfg
            )));
        }
    }
    Ok(p)
}
