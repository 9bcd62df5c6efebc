//! Binary ensemble files.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! "QTPE" 0x01
//! u32 dim
//! u32 count
//! u8  involution flag (0 or 1)
//! [u32; count] involution targets      (only when flag = 1)
//! [f64; count * dim * dim * 2]          row-major per member, (re, im) per entry
//! ```
//!
//! A JSON sidecar with the same stem and a `.json` extension carries the
//! label, seed and provenance. The binary file alone is authoritative for
//! numerics; a missing sidecar is not an error.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::UnitaryEnsemble;
use crate::error::{QtpeError, Result};
use crate::linalg::{ComplexMatrix, C64};

pub const MAGIC: &[u8; 4] = b"QTPE";
pub const VERSION: u8 = 0x01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub label: String,
    pub seed: Option<u64>,
    pub provenance: String,
    pub dim: usize,
    pub count: usize,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

pub fn to_bytes(e: &UnitaryEnsemble) -> Vec<u8> {
    let n = e.dim();
    let mut out = Vec::with_capacity(14 + e.size() * (4 + n * n * 16));
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.extend_from_slice(&(n as u32).to_le_bytes());
    out.extend_from_slice(&(e.size() as u32).to_le_bytes());
    match e.involution() {
        Some(map) => {
            out.push(1);
            for &j in map {
                out.extend_from_slice(&(j as u32).to_le_bytes());
            }
        }
        None => out.push(0),
    }
    for u in e.unitaries() {
        for z in u.as_slice() {
            out.extend_from_slice(&z.re.to_le_bytes());
            out.extend_from_slice(&z.im.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, field: &'static str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        match end {
            Some(end) => {
                let s = &self.buf[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(QtpeError::Parse {
                field,
                reason: format!(
                    "truncated: need {n} bytes at offset {}, file has {}",
                    self.pos,
                    self.buf.len()
                ),
            }),
        }
    }

    fn u32(&mut self, field: &'static str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, field)?.try_into().unwrap()))
    }

    fn f64(&mut self, field: &'static str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, field)?.try_into().unwrap()))
    }
}

pub fn from_bytes(buf: &[u8]) -> Result<UnitaryEnsemble> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(QtpeError::Parse {
            field: "magic",
            reason: "expected bytes \"QTPE\"".into(),
        });
    }
    let version = r.take(1, "version")?[0];
    if version != VERSION {
        return Err(QtpeError::Parse {
            field: "version",
            reason: format!("unsupported version {version:#04x}"),
        });
    }
    let dim = r.u32("dim")? as usize;
    let count = r.u32("count")? as usize;
    if dim == 0 {
        return Err(QtpeError::Parse {
            field: "dim",
            reason: "must be positive".into(),
        });
    }
    if count == 0 {
        return Err(QtpeError::Parse {
            field: "count",
            reason: "must be positive".into(),
        });
    }
    let involution = match r.take(1, "involution_flag")?[0] {
        0 => None,
        1 => {
            let mut map = Vec::with_capacity(count.min(buf.len() / 4));
            for _ in 0..count {
                let j = r.u32("involution")? as usize;
                if j >= count {
                    return Err(QtpeError::Parse {
                        field: "involution",
                        reason: format!("target {j} out of range for {count} members"),
                    });
                }
                map.push(j);
            }
            Some(map)
        }
        f => {
            return Err(QtpeError::Parse {
                field: "involution_flag",
                reason: format!("expected 0 or 1, got {f}"),
            })
        }
    };
    let expected = (count as u128) * (dim as u128) * (dim as u128) * 16;
    let remaining = (buf.len() - r.pos) as u128;
    if remaining != expected {
        return Err(QtpeError::Parse {
            field: "entries",
            reason: format!("expected {expected} bytes of matrix data, found {remaining}"),
        });
    }
    let mut unitaries = Vec::with_capacity(count);
    for _ in 0..count {
        let mut data = Vec::with_capacity(dim * dim);
        for _ in 0..dim * dim {
            let re = r.f64("entries")?;
            let im = r.f64("entries")?;
            data.push(C64::new(re, im));
        }
        unitaries.push(ComplexMatrix::from_vec(dim, dim, data)?);
    }
    UnitaryEnsemble::new(dim, unitaries, involution)
}

/// Writes the binary file and its JSON sidecar.
pub fn save(e: &UnitaryEnsemble, path: &Path) -> Result<()> {
    fs::write(path, to_bytes(e))?;
    let side = Sidecar {
        label: e.label.clone(),
        seed: e.seed,
        provenance: e.provenance.clone(),
        dim: e.dim(),
        count: e.size(),
    };
    fs::write(sidecar_path(path), serde_json::to_string_pretty(&side)?)?;
    Ok(())
}

/// Reads the binary file, attaching sidecar metadata when present.
pub fn load(path: &Path) -> Result<UnitaryEnsemble> {
    let mut e = from_bytes(&fs::read(path)?)?;
    let side = sidecar_path(path);
    if side.exists() {
        let meta: Sidecar = serde_json::from_str(&fs::read_to_string(side)?)?;
        e.label = meta.label;
        e.seed = meta.seed;
        e.provenance = meta.provenance;
    }
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::sample_random_qtpe;
    use crate::linalg::SeededRng;

    #[test]
    fn identity_round_trip() {
        let e = UnitaryEnsemble::new(2, vec![ComplexMatrix::identity(2)], None).unwrap();
        assert_eq!(from_bytes(&to_bytes(&e)).unwrap().unitaries(), e.unitaries());
    }

    #[test]
    fn sampled_round_trip_is_bit_exact() {
        let e = sample_random_qtpe(4, 4, &mut SeededRng::new(5, 0)).unwrap();
        let bytes = to_bytes(&e);
        assert_eq!(bytes.len(), 4 + 1 + 4 + 4 + 1 + 4 * 4 + 128 * 8);
        let back = from_bytes(&bytes).unwrap();
        for (a, b) in e.unitaries().iter().zip(back.unitaries()) {
            for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
                assert_eq!(x.re.to_bits(), y.re.to_bits());
                assert_eq!(x.im.to_bits(), y.im.to_bits());
            }
        }
        assert_eq!(back.involution(), e.involution());
    }

    #[test]
    fn file_round_trip_with_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.qtpe");
        let e = sample_random_qtpe(3, 4, &mut SeededRng::new(9, 0)).unwrap();
        save(&e, &path).unwrap();
        assert!(sidecar_path(&path).exists());
        assert_eq!(load(&path).unwrap(), e);
    }

    #[test]
    fn header_layout() {
        let e = UnitaryEnsemble::new(1, vec![ComplexMatrix::identity(1)], Some(vec![0])).unwrap();
        let b = to_bytes(&e);
        assert_eq!(&b[..5], b"QTPE\x01");
        assert_eq!(&b[5..9], &1u32.to_le_bytes());
        assert_eq!(&b[9..13], &1u32.to_le_bytes());
        assert_eq!(b[13], 1);
        assert_eq!(&b[14..18], &0u32.to_le_bytes());
        assert_eq!(&b[18..26], &1.0f64.to_le_bytes());
        assert_eq!(&b[26..34], &0.0f64.to_le_bytes());
    }

    fn field_of(err: QtpeError) -> &'static str {
        match err {
            QtpeError::Parse { field, .. } => field,
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn malformed_inputs_name_the_field() {
        let e = sample_random_qtpe(2, 4, &mut SeededRng::new(1, 0)).unwrap();
        let good = to_bytes(&e);
        assert_eq!(field_of(from_bytes(b"QTPF\x01").unwrap_err()), "magic");
        assert_eq!(field_of(from_bytes(b"QTP").unwrap_err()), "magic");
        let mut v = good.clone();
        v[4] = 2;
        assert_eq!(field_of(from_bytes(&v).unwrap_err()), "version");
        assert_eq!(field_of(from_bytes(&good[..7]).unwrap_err()), "dim");
        assert_eq!(field_of(from_bytes(&good[..11]).unwrap_err()), "count");
        assert_eq!(field_of(from_bytes(&good[..13]).unwrap_err()), "involution_flag");
        assert_eq!(field_of(from_bytes(&good[..16]).unwrap_err()), "involution");
        assert_eq!(field_of(from_bytes(&good[..good.len() - 3]).unwrap_err()), "entries");
        let mut v = good.clone();
        v.push(0);
        assert_eq!(field_of(from_bytes(&v).unwrap_err()), "entries");
        let mut v = good.clone();
        v[13] = 7;
        assert_eq!(field_of(from_bytes(&v).unwrap_err()), "involution_flag");
    }

    #[test]
    fn non_involutive_map_is_a_validation_error() {
        let e = sample_random_qtpe(2, 4, &mut SeededRng::new(1, 0)).unwrap();
        let mut v = to_bytes(&e);
        // targets start at byte 14: [2,3,0,1] -> [1,3,0,1]
        v[14..18].copy_from_slice(&1u32.to_le_bytes());
        assert!(matches!(from_bytes(&v), Err(QtpeError::Validation(_))));
    }
}
