//! Binary containers for coefficient and occupancy grids.
//!
//! ```text
//! magic     4 bytes   "FOF1" | "CSE1" | "OCC1"
//! width     u32 LE
//! height    u32 LE
//! channels  u32 LE    (depth samples R for "OCC1")
//! layout    u32 LE    0 = [a0, a1, b1, a2, b2, ...]
//! data      W*H*C f32 LE, row-major (j, i, c), c fastest
//! ```
//!
//! "CSE1" files carry a trailer after the data: `u32` joint count, `u32`
//! channels per joint, `f64` sphere radius and the 32-byte joint order hash.

use std::io::{self, Read, Write};

use thiserror::Error;

use super::{FofError, FofGrid, OccupancyGrid};
use crate::ErrorClass;

pub const LAYOUT_COS_SIN: u32 = 0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Magic {
    Fof,
    Csej,
    Occupancy,
}

impl Magic {
    pub fn bytes(self) -> [u8; 4] {
        match self {
            Magic::Fof => *b"FOF1",
            Magic::Csej => *b"CSE1",
            Magic::Occupancy => *b"OCC1",
        }
    }

    pub fn from_bytes(bytes: [u8; 4]) -> Option<Magic> {
        match &bytes {
            b"FOF1" => Some(Magic::Fof),
            b"CSE1" => Some(Magic::Csej),
            b"OCC1" => Some(Magic::Occupancy),
            _ => None,
        }
    }
}

#[derive(Debug, Error)]
pub enum ContainerError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("bad magic {found:?}, expected {expected:?}")]
    BadMagic { expected: String, found: String },
    #[error("unsupported channel layout tag {0}")]
    UnsupportedLayout(u32),
    #[error("file is truncated")]
    Truncated,
    #[error("unexpected bytes after the payload")]
    TrailingData,
    #[error("header describes an invalid grid: {0}")]
    Shape(#[from] FofError),
    #[error("bad metadata trailer: {0}")]
    Metadata(String),
}

impl ContainerError {
    pub fn class(&self) -> ErrorClass {
        match self {
            ContainerError::Io(_) => ErrorClass::Io,
            _ => ErrorClass::Format,
        }
    }
}

/// Metadata trailer of a "CSE1" file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CsejHeader {
    pub joints: u32,
    pub channels_per_joint: u32,
    pub radius: f64,
    pub order_hash: [u8; 32],
}

fn write_payload<W: Write>(
    w: &mut W,
    magic: Magic,
    shape: (usize, usize, usize),
    data: &[f32],
) -> io::Result<()> {
    w.write_all(&magic.bytes())?;
    for v in [shape.0, shape.1, shape.2] {
        let v = u32::try_from(v).map_err(|_| io::Error::other("dimension exceeds u32"))?;
        w.write_all(&v.to_le_bytes())?;
    }
    w.write_all(&LAYOUT_COS_SIN.to_le_bytes())?;
    let mut buf = Vec::with_capacity(data.len().min(1 << 20) * 4);
    for chunk in data.chunks(1 << 20) {
        buf.clear();
        for v in chunk {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    Ok(())
}

fn read_exact_or_truncated<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<(), ContainerError> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => ContainerError::Truncated,
        _ => ContainerError::Io(e),
    })
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, ContainerError> {
    let mut b = [0u8; 4];
    read_exact_or_truncated(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

/// Reads the header and payload, returning `(width, height, channels, data)`.
fn read_payload<R: Read>(
    r: &mut R,
    expected: Magic,
) -> Result<(usize, usize, usize, Vec<f32>), ContainerError> {
    let mut magic = [0u8; 4];
    read_exact_or_truncated(r, &mut magic)?;
    if Magic::from_bytes(magic) != Some(expected) {
        return Err(ContainerError::BadMagic {
            expected: String::from_utf8_lossy(&expected.bytes()).into_owned(),
            found: String::from_utf8_lossy(&magic).into_owned(),
        });
    }
    let width = read_u32(r)? as usize;
    let height = read_u32(r)? as usize;
    let channels = read_u32(r)? as usize;
    let layout = read_u32(r)?;
    if layout != LAYOUT_COS_SIN {
        return Err(ContainerError::UnsupportedLayout(layout));
    }
    super::check_shape(width, height, channels)?;
    let count = width * height * channels;
    let bytes = count
        .checked_mul(4)
        .ok_or(ContainerError::Shape(FofError::BadShape {
            width,
            height,
            channels,
        }))?;
    // Grow with the data actually present rather than trusting the header.
    let mut raw = Vec::new();
    r.take(bytes as u64).read_to_end(&mut raw)?;
    if raw.len() != bytes {
        return Err(ContainerError::Truncated);
    }
    let data = raw
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    Ok((width, height, channels, data))
}

fn expect_eof<R: Read>(r: &mut R) -> Result<(), ContainerError> {
    let mut probe = [0u8; 1];
    match r.read(&mut probe)? {
        0 => Ok(()),
        _ => Err(ContainerError::TrailingData),
    }
}

pub fn write_fof<W: Write>(w: &mut W, fof: &FofGrid) -> io::Result<()> {
    write_payload(w, Magic::Fof, fof.shape(), fof.data())
}

pub fn read_fof<R: Read>(r: &mut R) -> Result<FofGrid, ContainerError> {
    let (w, h, c, data) = read_payload(r, Magic::Fof)?;
    expect_eof(r)?;
    Ok(FofGrid::from_data(w, h, c, data)?)
}

pub fn write_occupancy<W: Write>(w: &mut W, grid: &OccupancyGrid) -> io::Result<()> {
    write_payload(w, Magic::Occupancy, grid.shape(), grid.data())
}

pub fn read_occupancy<R: Read>(r: &mut R) -> Result<OccupancyGrid, ContainerError> {
    let (w, h, d, data) = read_payload(r, Magic::Occupancy)?;
    expect_eof(r)?;
    Ok(OccupancyGrid::from_data(w, h, d, data)?)
}

pub fn write_csej<W: Write>(w: &mut W, grid: &FofGrid, header: &CsejHeader) -> io::Result<()> {
    write_payload(w, Magic::Csej, grid.shape(), grid.data())?;
    w.write_all(&header.joints.to_le_bytes())?;
    w.write_all(&header.channels_per_joint.to_le_bytes())?;
    w.write_all(&header.radius.to_le_bytes())?;
    w.write_all(&header.order_hash)
}

pub fn read_csej<R: Read>(r: &mut R) -> Result<(FofGrid, CsejHeader), ContainerError> {
    let (w, h, c, data) = read_payload(r, Magic::Csej)?;
    let joints = read_u32(r)?;
    let channels_per_joint = read_u32(r)?;
    let mut radius = [0u8; 8];
    read_exact_or_truncated(r, &mut radius)?;
    let mut order_hash = [0u8; 32];
    read_exact_or_truncated(r, &mut order_hash)?;
    expect_eof(r)?;
    let header = CsejHeader {
        joints,
        channels_per_joint,
        radius: f64::from_le_bytes(radius),
        order_hash,
    };
    if joints as usize * channels_per_joint as usize != c {
        return Err(ContainerError::Metadata(format!(
            "{joints} joints x {channels_per_joint} channels != {c} channels"
        )));
    }
    if !(header.radius > 0.0 && header.radius.is_finite()) {
        return Err(ContainerError::Metadata(format!(
            "radius {}",
            header.radius
        )));
    }
    Ok((FofGrid::from_data(w, h, c, data)?, header))
}
