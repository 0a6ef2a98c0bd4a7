//! `BVF1` feature store: magic, u32 count, u32 dim, u32 modality tag, then
//! `count` records of (u32 species index, u32 split tag, dim x f32), all
//! little-endian.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{FeatureVector, Modality, Split};
use crate::error::{Error, Result};

pub const FEATURE_MAGIC: &[u8; 4] = b"BVF1";

pub fn write_feature_store(
    path: impl AsRef<Path>,
    modality: Modality,
    samples: &[FeatureVector],
) -> Result<()> {
    let path = path.as_ref();
    let dim = samples.first().map_or(0, |s| s.values.len());
    for s in samples {
        if s.values.len() != dim {
            return Err(Error::DimMismatch {
                expected: dim,
                got: s.values.len(),
                context: "feature store record",
            });
        }
        if s.modality != modality {
            return Err(Error::Format(format!(
                "{:?} sample in a {modality:?} store",
                s.modality
            )));
        }
    }
    let io = |e| Error::io(path, e);
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    w.write_all(FEATURE_MAGIC).map_err(io)?;
    for v in [samples.len() as u32, dim as u32, modality.tag()] {
        w.write_all(&v.to_le_bytes()).map_err(io)?;
    }
    for s in samples {
        w.write_all(&s.species.to_le_bytes()).map_err(io)?;
        w.write_all(&s.split.tag().to_le_bytes()).map_err(io)?;
        for v in &s.values {
            w.write_all(&v.to_le_bytes()).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

fn read_u32<R: Read>(r: &mut R) -> std::io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub fn read_feature_store(path: impl AsRef<Path>) -> Result<(Modality, Vec<FeatureVector>)> {
    let path = path.as_ref();
    let io = |e| Error::io(path, e);
    let mut r = BufReader::new(File::open(path).map_err(io)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(io)?;
    if &magic != FEATURE_MAGIC {
        return Err(Error::Format(format!(
            "{}: bad magic {magic:?}",
            path.display()
        )));
    }
    let count = read_u32(&mut r).map_err(io)? as usize;
    let dim = read_u32(&mut r).map_err(io)? as usize;
    let modality = Modality::from_tag(read_u32(&mut r).map_err(io)?)?;
    let mut out = Vec::with_capacity(count);
    let mut buf = vec![0u8; dim * 4];
    for _ in 0..count {
        let species = read_u32(&mut r).map_err(io)?;
        let split = Split::from_tag(read_u32(&mut r).map_err(io)?)?;
        r.read_exact(&mut buf).map_err(io)?;
        let values = buf
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        out.push(FeatureVector {
            values,
            modality,
            species,
            split,
        });
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest).map_err(io)? != 0 {
        return Err(Error::Format(format!("{}: trailing bytes", path.display())));
    }
    Ok((modality, out))
}
