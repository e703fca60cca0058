//! `KGEC` checkpoint files: a fixed header followed by little-endian f32
//! tables in the order entity, tail (CP only), relation, timestamp.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::Array2;

use crate::data::Dataset;
use crate::error::{KgeError, Result};
use crate::models::{ModelKind, ModelParams, Shape};

pub const MAGIC: &[u8; 4] = b"KGEC";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 1 + 4 * 4;

pub fn to_bytes(params: &ModelParams) -> Vec<u8> {
    let shape = params.shape();
    let n: usize = params.tables().iter().map(|(_, t)| t.len()).sum();
    let mut buf = Vec::with_capacity(HEADER_LEN + 4 * n);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.push(params.kind.tag());
    for x in [params.dim, shape.entities, shape.relations, shape.timestamps] {
        buf.extend_from_slice(&(x as u32).to_le_bytes());
    }
    for (_, t) in params.tables() {
        for &x in t.iter() {
            buf.extend_from_slice(&(x as f32).to_le_bytes());
        }
    }
    buf
}

pub fn from_bytes(bytes: &[u8]) -> Result<ModelParams> {
    if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
        return Err(KgeError::Format("not a KGEC checkpoint".into()));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let version = u32_at(4);
    if version != VERSION {
        return Err(KgeError::Format(format!("unsupported checkpoint version {version}")));
    }
    let kind = ModelKind::from_tag(bytes[8])?;
    let dim = u32_at(9) as usize;
    let shape = Shape {
        entities: u32_at(13) as usize,
        relations: u32_at(17) as usize,
        timestamps: u32_at(21) as usize,
    };
    let mut params = ModelParams::zeros(kind, dim, shape)?;
    let expected: usize = params.tables().iter().map(|(_, t)| t.len()).sum::<usize>() * 4 + HEADER_LEN;
    if bytes.len() != expected {
        return Err(KgeError::Format(format!(
            "checkpoint has {} bytes, header implies {expected}",
            bytes.len()
        )));
    }
    let mut floats = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64);
    for (_, t) in params.tables_mut() {
        fill(t, &mut floats);
    }
    Ok(params)
}

fn fill(t: &mut Array2<f64>, src: &mut impl Iterator<Item = f64>) {
    t.iter_mut().zip(src).for_each(|(a, b)| *a = b);
}

pub fn save(params: &ModelParams, path: &Path) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| KgeError::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(&to_bytes(params))
        .and_then(|_| w.flush())
        .map_err(|e| KgeError::io(path, e))
}

pub fn load(path: &Path) -> Result<ModelParams> {
    let bytes = fs::read(path).map_err(|e| KgeError::io(path, e))?;
    from_bytes(&bytes)
}

/// Sidecar path holding the vocabulary hashes of a checkpoint.
pub fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut p = path.as_os_str().to_owned();
    p.push(".vocab");
    p.into()
}

/// Checks that a checkpoint's sidecar matches the dataset it is used with.
pub fn check_sidecar(path: &Path, dataset: &Dataset) -> Result<()> {
    let side = sidecar_path(path);
    let text = match fs::read_to_string(&side) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            log::warn!("no vocabulary sidecar next to {}; skipping check", path.display());
            return Ok(());
        }
        Err(e) => return Err(KgeError::io(&side, e)),
    };
    for (name, hash) in dataset.vocab_hashes() {
        let found = text
            .lines()
            .filter_map(|l| l.split_once('\t'))
            .find(|(k, _)| k.trim() == name)
            .map(|(_, v)| v.trim());
        if found != Some(hash.as_str()) {
            return Err(KgeError::Data(format!(
                "{} vocabulary of {} does not match the dataset",
                name,
                path.display()
            )));
        }
    }
    Ok(())
}
