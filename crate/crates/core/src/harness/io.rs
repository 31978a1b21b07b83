//! Binary field files with a text metadata sidecar.
//!
//! Layout: the 8 bytes `SPDE2D01`, three little-endian `u32` dimensions
//! `(times, y-nodes, z-nodes)`, then the values as little-endian `f64` in
//! time-major, then y, then z order. Grid and provenance live in
//! `<file>.meta` as TOML.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use ndarray::Array3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{NodeSet, TimeAxis};
use crate::sim::{FieldRecord, Provenance};

pub const MAGIC: &[u8; 8] = b"SPDE2D01";
const HEADER: usize = 8 + 12;

/// Contents of the metadata sidecar.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldMeta {
    pub time: TimeAxis,
    pub y: NodeSet,
    pub z: NodeSet,
    pub provenance: Option<Provenance>,
}

pub fn meta_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta");
    PathBuf::from(s)
}

/// Writes the raw values only.
pub fn write_values(w: &mut impl Write, values: &Array3<f64>) -> Result<()> {
    let (a, b, c) = values.dim();
    w.write_all(MAGIC)?;
    for d in [a, b, c] {
        let d = u32::try_from(d).map_err(|_| Error::DimMismatch(format!("dimension {d} exceeds u32")))?;
        w.write_all(&d.to_le_bytes())?;
    }
    for v in values.iter() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

/// Reads raw values written by [`write_values`].
pub fn read_values(r: &mut impl Read) -> Result<Array3<f64>> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() < MAGIC.len() || &bytes[..8] != MAGIC {
        return Err(Error::BadMagic);
    }
    if bytes.len() < HEADER {
        return Err(Error::TruncatedFile {
            expected: HEADER as u64,
            found: bytes.len() as u64,
        });
    }
    let dim = |i: usize| u32::from_le_bytes(bytes[8 + 4 * i..12 + 4 * i].try_into().expect("4 bytes")) as usize;
    let (a, b, c) = (dim(0), dim(1), dim(2));
    let expected = (a as u64) * (b as u64) * (c as u64) * 8;
    let found = (bytes.len() - HEADER) as u64;
    if found < expected {
        return Err(Error::TruncatedFile { expected, found });
    }
    if found > expected {
        return Err(Error::DimMismatch(format!(
            "header ({a}, {b}, {c}) implies {expected} payload bytes, found {found}"
        )));
    }
    let data = bytes[HEADER..]
        .chunks_exact(8)
        .map(|ch| f64::from_le_bytes(ch.try_into().expect("8 bytes")))
        .collect();
    Array3::from_shape_vec((a, b, c), data).map_err(|e| Error::DimMismatch(e.to_string()))
}

/// Writes the field file and its sidecar.
pub fn write_field(path: &Path, record: &FieldRecord) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_values(&mut w, &record.values)?;
    w.flush()?;
    let meta = FieldMeta {
        time: record.time,
        y: record.y.clone(),
        z: record.z.clone(),
        provenance: record.provenance.clone(),
    };
    let text = toml::to_string(&meta).map_err(|e| Error::Config(e.to_string()))?;
    std::fs::write(meta_path(path), text)?;
    Ok(())
}

/// Reads a field file and its sidecar, checking they agree.
pub fn read_field(path: &Path) -> Result<FieldRecord> {
    let values = read_values(&mut BufReader::new(File::open(path)?))?;
    let text = std::fs::read_to_string(meta_path(path))?;
    let meta: FieldMeta = toml::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
    let mut rec = FieldRecord::new(meta.time, meta.y, meta.z, values)?;
    rec.provenance = meta.provenance;
    Ok(rec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SamplingGrid;

    fn sample() -> FieldRecord {
        FieldRecord::from_fn(&SamplingGrid::new(3, 4, 5).unwrap(), |t, y, z| (t + 2.0 * y).sin() * z - 1e-300 * t)
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.bin");
        let rec = sample();
        write_field(&p, &rec).unwrap();
        let back = read_field(&p).unwrap();
        assert_eq!(back.time, rec.time);
        assert_eq!(back.y, rec.y);
        assert!(back.values.iter().zip(rec.values.iter()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn corrupt_inputs() {
        let mut buf = Vec::new();
        write_values(&mut buf, &sample().values).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(read_values(&mut bad.as_slice()), Err(Error::BadMagic)));
        let short = &buf[..buf.len() - 3];
        assert!(matches!(read_values(&mut &short[..]), Err(Error::TruncatedFile { .. })));
        assert!(matches!(read_values(&mut &buf[..14]), Err(Error::TruncatedFile { .. })));
        let mut long = buf.clone();
        long.extend_from_slice(&[0; 8]);
        assert!(matches!(read_values(&mut long.as_slice()), Err(Error::DimMismatch(_))));
    }
}
