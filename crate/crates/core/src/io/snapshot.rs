//! Binary snapshots (nodal values) and checkpoints (spectral state plus
//! multistep history).
//!
//! Snapshot layout, all little-endian:
//!
//! ```text
//! magic    8 bytes  "NSSFSNAP"
//! version  u32      1
//! scheme   u32      0 = etd1, 1 = etdms2, 2 = setdms2
//! M        u64
//! L, t, eps2, A, kappa   f64 x 5
//! seed     u64
//! payload  M*M f64, row-major (x index major)
//! crc32    u32      over the payload bytes
//! ```
//!
//! Checkpoints start with `"NSSFCKPT"`, repeat the parameter block, then
//! store `step_index`, `segment`, `steps_in_segment` (u64 each), a `u8`
//! history flag, the `M*M` complex coefficients of `u` as `(re, im)` pairs,
//! the previous explicit term when the flag is set, and a crc32 over
//! everything after the magic.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use num_complex::Complex64;

use crate::integrators::{RunState, Scheme, SchemeParams, StepperState};
use crate::spectral::{Field, GridSpec, SpectralField};

pub const SNAPSHOT_MAGIC: &[u8; 8] = b"NSSFSNAP";
pub const CHECKPOINT_MAGIC: &[u8; 8] = b"NSSFCKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum SnapshotFormatError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("bad magic bytes")]
    BadMagic,
    #[error("unsupported format version {0}")]
    Version(u32),
    #[error("unknown scheme code {0}")]
    Scheme(u32),
    #[error("invalid header: {0}")]
    Header(String),
    #[error("file is truncated")]
    Truncated,
    #[error("{0} trailing bytes after the checksum")]
    Trailing(usize),
    #[error("checksum mismatch: stored {stored:08x}, computed {computed:08x}")]
    Checksum { stored: u32, computed: u32 },
}

/// Parameters recorded alongside every snapshot and checkpoint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Header {
    pub scheme: Scheme,
    pub points: u64,
    pub length: f64,
    pub t: f64,
    pub eps2: f64,
    pub a: f64,
    pub kappa: f64,
    pub seed: u64,
}

impl Header {
    pub fn new(p: &SchemeParams, grid: &GridSpec, t: f64, seed: u64) -> Self {
        Self {
            scheme: p.scheme,
            points: grid.points() as u64,
            length: grid.length(),
            t,
            eps2: p.model.eps2,
            a: p.a,
            kappa: p.kappa,
            seed,
        }
    }

    pub fn grid(&self) -> Result<GridSpec, SnapshotFormatError> {
        let m = usize::try_from(self.points).map_err(|_| SnapshotFormatError::Header("M too large".into()))?;
        GridSpec::new(self.length, m).map_err(|e| SnapshotFormatError::Header(e.to_string()))
    }

    fn write_to(&self, buf: &mut Vec<u8>) {
        buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        buf.extend_from_slice(&self.scheme.code().to_le_bytes());
        buf.extend_from_slice(&self.points.to_le_bytes());
        for v in [self.length, self.t, self.eps2, self.a, self.kappa] {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        buf.extend_from_slice(&self.seed.to_le_bytes());
    }

    fn read_from(r: &mut Cursor<'_>) -> Result<Self, SnapshotFormatError> {
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(SnapshotFormatError::Version(version));
        }
        let code = r.u32()?;
        let scheme = Scheme::from_code(code).ok_or(SnapshotFormatError::Scheme(code))?;
        let points = r.u64()?;
        let h = Self {
            scheme,
            points,
            length: r.f64()?,
            t: r.f64()?,
            eps2: r.f64()?,
            a: r.f64()?,
            kappa: r.f64()?,
            seed: r.u64()?,
        };
        if h.points == 0 || !h.points.is_multiple_of(2) || h.points > 1 << 16 {
            return Err(SnapshotFormatError::Header(format!("M = {} is not a supported even size", h.points)));
        }
        Ok(h)
    }
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], SnapshotFormatError> {
        let end = self.pos.checked_add(n).ok_or(SnapshotFormatError::Truncated)?;
        let s = self.data.get(self.pos..end).ok_or(SnapshotFormatError::Truncated)?;
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, SnapshotFormatError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, SnapshotFormatError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, SnapshotFormatError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64, SnapshotFormatError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>, SnapshotFormatError> {
        let bytes = self.take(n.checked_mul(8).ok_or(SnapshotFormatError::Truncated)?)?;
        Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
    }

    fn finish(&self) -> Result<(), SnapshotFormatError> {
        match self.data.len() - self.pos {
            0 => Ok(()),
            n => Err(SnapshotFormatError::Trailing(n)),
        }
    }
}

fn check_magic<'a>(data: &'a [u8], magic: &[u8; 8]) -> Result<Cursor<'a>, SnapshotFormatError> {
    if data.len() < 8 || &data[..8] != magic {
        return Err(SnapshotFormatError::BadMagic);
    }
    Ok(Cursor { data, pos: 8 })
}

fn verify_crc(cur: &mut Cursor<'_>, covered: &[u8]) -> Result<(), SnapshotFormatError> {
    let stored = cur.u32()?;
    let computed = crc32fast::hash(covered);
    if stored != computed {
        return Err(SnapshotFormatError::Checksum { stored, computed });
    }
    cur.finish()
}

/// A field with the parameters it was produced under.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub header: Header,
    pub field: Field,
}

impl Snapshot {
    pub fn to_bytes(&self) -> Vec<u8> {
        let n = self.field.values().len();
        let mut buf = Vec::with_capacity(8 + 64 + 8 * n + 4);
        buf.extend_from_slice(SNAPSHOT_MAGIC);
        self.header.write_to(&mut buf);
        let start = buf.len();
        for v in self.field.values() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        let crc = crc32fast::hash(&buf[start..]);
        buf.extend_from_slice(&crc.to_le_bytes());
        buf
    }

    pub fn from_bytes(data: &[u8]) -> Result<Self, SnapshotFormatError> {
        let mut cur = check_magic(data, SNAPSHOT_MAGIC)?;
        let header = Header::read_from(&mut cur)?;
        let grid = header.grid()?;
        let start = cur.pos;
        let values = cur.f64s(grid.len())?;
        let covered = &data[start..cur.pos];
        verify_crc(&mut cur, covered)?;
        let field = Field::from_values(grid, values).map_err(|e| SnapshotFormatError::Header(e.to_string()))?;
        Ok(Self { header, field })
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>, SnapshotFormatError> {
    let io = |source| SnapshotFormatError::Io { path: path.to_path_buf(), source };
    let mut data = Vec::new();
    BufReader::new(File::open(path).map_err(io)?).read_to_end(&mut data).map_err(io)?;
    Ok(data)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), SnapshotFormatError> {
    let io = |source| SnapshotFormatError::Io { path: path.to_path_buf(), source };
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    w.write_all(bytes).map_err(io)?;
    w.flush().map_err(io)
}

pub fn write_snapshot(path: &Path, snap: &Snapshot) -> Result<(), SnapshotFormatError> {
    write_file(path, &snap.to_bytes())
}

pub fn read_snapshot(path: &Path) -> Result<Snapshot, SnapshotFormatError> {
    Snapshot::from_bytes(&read_file(path)?)
}

/// Everything needed to continue a run exactly where it stopped.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub header: Header,
    pub state: RunState,
}

fn push_coeffs(buf: &mut Vec<u8>, c: &SpectralField) {
    for z in c.coeffs() {
        buf.extend_from_slice(&z.re.to_le_bytes());
        buf.extend_from_slice(&z.im.to_le_bytes());
    }
}

fn read_coeffs(cur: &mut Cursor<'_>, grid: GridSpec) -> Result<SpectralField, SnapshotFormatError> {
    let raw = cur.f64s(2 * grid.len())?;
    let coeffs = raw.chunks_exact(2).map(|p| Complex64::new(p[0], p[1])).collect();
    SpectralField::from_coeffs(grid, coeffs).map_err(|e| SnapshotFormatError::Header(e.to_string()))
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let s = &self.state.stepper;
        let mut buf = Vec::new();
        buf.extend_from_slice(CHECKPOINT_MAGIC);
        let mut header = self.header;
        header.t = s.t;
        header.write_to(&mut buf);
        buf.extend_from_slice(&s.step_index.to_le_bytes());
        buf.extend_from_slice(&(self.state.segment as u64).to_le_bytes());
        buf.extend_from_slice(&self.state.steps_in_segment.to_le_bytes());
        buf.push(u8::from(s.f_prev.is_some()));
        push_coeffs(&mut buf, &s.u_hat);
        if let Some(f) = &s.f_prev {
            push_coeffs(&mut buf, f);
        }
        let crc = crc32fast::hash(&buf[8..]);
        buf.extend_from_slice(&crc.to_le_bytes());
        buf
    }

    pub fn from_bytes(data: &[u8]) -> Result<Self, SnapshotFormatError> {
        let mut cur = check_magic(data, CHECKPOINT_MAGIC)?;
        let header = Header::read_from(&mut cur)?;
        let grid = header.grid()?;
        let step_index = cur.u64()?;
        let segment = usize::try_from(cur.u64()?).map_err(|_| SnapshotFormatError::Header("segment".into()))?;
        let steps_in_segment = cur.u64()?;
        let has_prev = match cur.u8()? {
            0 => false,
            1 => true,
            other => return Err(SnapshotFormatError::Header(format!("history flag {other}"))),
        };
        let u_hat = read_coeffs(&mut cur, grid)?;
        let f_prev = if has_prev { Some(read_coeffs(&mut cur, grid)?) } else { None };
        let covered = &data[8..cur.pos];
        verify_crc(&mut cur, covered)?;
        let stepper = StepperState { t: header.t, step_index, u_hat, f_prev };
        Ok(Self { header, state: RunState { stepper, segment, steps_in_segment } })
    }
}

pub fn write_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<(), SnapshotFormatError> {
    write_file(path, &ckpt.to_bytes())
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint, SnapshotFormatError> {
    Checkpoint::from_bytes(&read_file(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelParams;

    fn header() -> Header {
        let g = GridSpec::new(12.8, 4).unwrap();
        let p = SchemeParams::setdms2(ModelParams::new(0.005).unwrap(), 0.125);
        Header::new(&p, &g, 1.5, 42)
    }

    #[test]
    fn snapshot_byte_layout() {
        let h = header();
        let field = Field::from_fn(h.grid().unwrap(), |x, y| x - y);
        let bytes = Snapshot { header: h, field }.to_bytes();
        assert_eq!(bytes.len(), 8 + 4 + 4 + 8 + 5 * 8 + 8 + 16 * 8 + 4);
        assert_eq!(&bytes[..8], b"NSSFSNAP");
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(bytes[12..16].try_into().unwrap()), 2);
        assert_eq!(u64::from_le_bytes(bytes[16..24].try_into().unwrap()), 4);
        assert_eq!(f64::from_le_bytes(bytes[24..32].try_into().unwrap()), 12.8);
        assert_eq!(f64::from_le_bytes(bytes[32..40].try_into().unwrap()), 1.5);
        assert_eq!(u64::from_le_bytes(bytes[64..72].try_into().unwrap()), 42);
        // value at node (1, 0) is x_1 - y_0 = 3.2
        assert_eq!(f64::from_le_bytes(bytes[72 + 4 * 8..72 + 5 * 8].try_into().unwrap()), 3.2);
    }

    #[test]
    fn corruption_is_detected() {
        let h = header();
        let field = Field::from_fn(h.grid().unwrap(), |x, y| (x * y).sin());
        let mut bytes = Snapshot { header: h, field }.to_bytes();
        let n = bytes.len();
        bytes[n - 20] ^= 1;
        assert!(matches!(Snapshot::from_bytes(&bytes), Err(SnapshotFormatError::Checksum { .. })));
        assert!(matches!(Snapshot::from_bytes(&bytes[..n - 3]), Err(SnapshotFormatError::Truncated)));
        bytes[0] = b'X';
        assert!(matches!(Snapshot::from_bytes(&bytes), Err(SnapshotFormatError::BadMagic)));
    }
}
