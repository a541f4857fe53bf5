//! The FLOF volume container.
//!
//! ```text
//! magic       8 bytes  "FLOF\0\0\0\0"
//! version     u16 LE   1
//! kind        u8       0 = scalar, 1 = deformation
//! axes        u8       1..=4
//! extents     u32 LE   one per axis, axis 0 first
//! components  u8       1 for scalars, `axes` for deformations
//! payload     f32 LE   axis 0 fastest, components interleaved per cell
//! ```

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{Dims, ScalarField, VectorField, MAX_AXES};

pub const MAGIC: [u8; 8] = *b"FLOF\0\0\0\0";
pub const VERSION: u16 = 1;

#[derive(Clone, Debug, PartialEq)]
pub enum Volume {
    Scalar(ScalarField),
    Deformation(VectorField),
}

impl Volume {
    pub fn dims(&self) -> &Dims {
        match self {
            Volume::Scalar(f) => f.dims(),
            Volume::Deformation(f) => f.dims(),
        }
    }

    pub fn into_scalar(self) -> Result<ScalarField> {
        match self {
            Volume::Scalar(f) => Ok(f),
            Volume::Deformation(_) => Err(Error::Format("expected a scalar volume, found a deformation".into())),
        }
    }

    pub fn into_deformation(self) -> Result<VectorField> {
        match self {
            Volume::Deformation(f) => Ok(f),
            Volume::Scalar(_) => Err(Error::Format("expected a deformation, found a scalar volume".into())),
        }
    }

    fn parts(&self) -> (u8, &Dims, usize, &[f64]) {
        match self {
            Volume::Scalar(f) => (0, f.dims(), 1, f.data()),
            Volume::Deformation(f) => (1, f.dims(), f.components(), f.data()),
        }
    }
}

pub fn header_len(axes: usize) -> usize {
    8 + 2 + 1 + 1 + 4 * axes + 1
}

pub fn encode(volume: &Volume) -> Result<Vec<u8>> {
    let (kind, dims, components, data) = volume.parts();
    let mut out = Vec::with_capacity(header_len(dims.ndim()) + 4 * data.len());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(kind);
    out.push(dims.ndim() as u8);
    for &e in dims.extents() {
        let e = u32::try_from(e).map_err(|_| Error::Format(format!("extent {e} exceeds u32")))?;
        out.extend_from_slice(&e.to_le_bytes());
    }
    out.push(components as u8);
    for &v in data {
        let f = v as f32;
        if !f.is_finite() {
            return Err(Error::NonFinite(format!("{v} does not fit in f32")));
        }
        out.extend_from_slice(&f.to_le_bytes());
    }
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        let s = self
            .bytes
            .get(self.pos..end)
            .ok_or_else(|| Error::Format(format!("truncated at byte {}", self.pos)))?;
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
}

pub fn decode(bytes: &[u8]) -> Result<Volume> {
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(8)? != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let version = u16::from_le_bytes(c.take(2)?.try_into().expect("two bytes"));
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let kind = c.u8()?;
    let axes = c.u8()? as usize;
    if axes == 0 || axes > MAX_AXES {
        return Err(Error::Format(format!("axis count {axes}")));
    }
    let mut extents = Vec::with_capacity(axes);
    for _ in 0..axes {
        extents.push(u32::from_le_bytes(c.take(4)?.try_into().expect("four bytes")) as usize);
    }
    let dims = Dims::new(&extents).map_err(|e| Error::Format(e.to_string()))?;
    let components = c.u8()? as usize;
    let expected = match kind {
        0 => 1,
        1 => axes,
        k => return Err(Error::Format(format!("unknown kind {k}"))),
    };
    if components != expected {
        return Err(Error::Format(format!(
            "kind {kind} with {axes} axes needs {expected} components, header says {components}"
        )));
    }
    let count = dims
        .cell_count()
        .checked_mul(components)
        .ok_or_else(|| Error::Format("payload size overflows".into()))?;
    let remaining = bytes.len() - c.pos;
    if remaining != count * 4 {
        return Err(Error::Format(format!(
            "payload has {remaining} bytes, expected {}",
            count * 4
        )));
    }
    let data: Vec<f64> = c
        .take(count * 4)?
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().expect("four bytes")) as f64)
        .collect();
    let checked = |r: Result<Volume>| r.map_err(|e| Error::Format(e.to_string()));
    if kind == 0 {
        checked(ScalarField::new(dims, data).map(Volume::Scalar))
    } else {
        checked(VectorField::new(dims, data).map(Volume::Deformation))
    }
}

pub fn write(path: impl AsRef<Path>, volume: &Volume) -> Result<()> {
    let bytes = encode(volume)?;
    let mut f = fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

pub fn read(path: impl AsRef<Path>) -> Result<Volume> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode(&bytes)
}

pub fn read_scalar(path: impl AsRef<Path>) -> Result<ScalarField> {
    read(path)?.into_scalar()
}

pub fn read_deformation(path: impl AsRef<Path>) -> Result<VectorField> {
    read(path)?.into_deformation()
}
