//! Binary ensemble cache.
//!
//! Layout, all little-endian: the 5-byte magic, H (f64), t_max (f64),
//! n_points (u64), grading exponent (f64), master seed (u64), method tag
//! (u8), n_paths (u64), normalization (f64), then the path values row by
//! row as f64.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Method, PathEnsemble};
use crate::error::{Error, Result};
use crate::numerics::GridSpec;
use crate::special::HurstParameter;

pub const CACHE_MAGIC: &[u8; 5] = b"RSBL1";

pub fn write_cache(ens: &PathEnsemble, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_to(ens, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn read_cache(path: impl AsRef<Path>) -> Result<PathEnsemble> {
    read_from(&mut BufReader::new(File::open(path)?))
}

pub(crate) fn write_to(ens: &PathEnsemble, w: &mut impl Write) -> Result<()> {
    w.write_all(CACHE_MAGIC)?;
    w.write_all(&ens.h.value().to_le_bytes())?;
    w.write_all(&ens.grid.t_max.to_le_bytes())?;
    w.write_all(&(ens.grid.n_points as u64).to_le_bytes())?;
    w.write_all(&ens.grid.grading_exponent.to_le_bytes())?;
    w.write_all(&ens.master_seed.to_le_bytes())?;
    w.write_all(&[ens.method.tag()])?;
    w.write_all(&(ens.n_paths() as u64).to_le_bytes())?;
    w.write_all(&ens.normalization.to_le_bytes())?;
    for v in ens.values() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_exact<const N: usize>(r: &mut impl Read) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Format("ensemble cache is truncated".into()),
        _ => Error::Io(e),
    })?;
    Ok(buf)
}

fn read_f64(r: &mut impl Read) -> Result<f64> {
    Ok(f64::from_le_bytes(read_exact(r)?))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    Ok(u64::from_le_bytes(read_exact(r)?))
}

pub(crate) fn read_from(r: &mut impl Read) -> Result<PathEnsemble> {
    let magic: [u8; 5] = read_exact(r)?;
    if &magic != CACHE_MAGIC {
        return Err(Error::Format("not an ensemble cache (bad magic)".into()));
    }
    let h = HurstParameter::new(read_f64(r)?).map_err(|e| Error::Format(e.to_string()))?;
    let t_max = read_f64(r)?;
    let n_points = read_u64(r)? as usize;
    let grading = read_f64(r)?;
    let grid = GridSpec::new(t_max, n_points, grading).map_err(|e| Error::Format(e.to_string()))?;
    let seed = read_u64(r)?;
    let [tag] = read_exact::<1>(r)?;
    let method =
        Method::from_tag(tag).ok_or_else(|| Error::Format(format!("unknown method tag {tag}")))?;
    let n_paths = read_u64(r)? as usize;
    let normalization = read_f64(r)?;
    let count = n_paths
        .checked_mul(n_points)
        .filter(|&c| c > 0 && c < (1 << 34))
        .ok_or_else(|| Error::Format(format!("implausible size {n_paths} x {n_points}")))?;
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() != count * 8 {
        return Err(Error::Format(format!(
            "expected {} bytes of path data, found {}",
            count * 8,
            bytes.len()
        )));
    }
    let values =
        bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    PathEnsemble::from_rows(grid, h, method, seed, normalization, values)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> PathEnsemble {
        let grid = GridSpec::new(2.0, 3, 1.5).unwrap();
        let h = HurstParameter::new(0.7).unwrap();
        PathEnsemble::from_rows(
            grid,
            h,
            Method::HermiteRank2,
            42,
            0.5,
            vec![0.0, 1.0, -2.5, 0.0, 3.25, 1e-300],
        )
        .unwrap()
    }

    #[test]
    fn round_trip_and_header() {
        let e = sample();
        let mut bytes = Vec::new();
        write_to(&e, &mut bytes).unwrap();
        assert_eq!(&bytes[..5], b"RSBL1");
        assert_eq!(f64::from_le_bytes(bytes[5..13].try_into().unwrap()), 0.7);
        assert_eq!(bytes.len(), 5 + 8 * 7 + 1 + 6 * 8);
        assert_eq!(read_from(&mut bytes.as_slice()).unwrap(), e);
    }

    #[test]
    fn corrupt_files_are_format_errors() {
        let mut bytes = Vec::new();
        write_to(&sample(), &mut bytes).unwrap();
        let truncated = &bytes[..bytes.len() - 3];
        assert!(matches!(read_from(&mut &truncated[..]), Err(Error::Format(_))));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(read_from(&mut bad.as_slice()), Err(Error::Format(_))));
        assert!(matches!(read_from(&mut &bytes[..20]), Err(Error::Format(_))));
    }
}
