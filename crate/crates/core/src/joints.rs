//! Compact spherical embedding of 3D joints (CSEJ) and pose conditions.
//!
//! Each joint becomes an independent solid sphere encoded with
//! [`sphere_fof`]; the per-joint blocks are concatenated channel-wise in the
//! fixed SMPL joint order. Overlapping spheres are not merged.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::error::ErrorClass;
use crate::fof::{sphere_fof, CsejHeader, FofError, FofGrid};
use crate::geometry::{NormalizedFrame, Vec3};

/// The 24 SMPL joints in canonical order.
pub const SMPL_JOINT_NAMES: [&str; 24] = [
    "pelvis",
    "left_hip",
    "right_hip",
    "spine1",
    "left_knee",
    "right_knee",
    "spine2",
    "left_ankle",
    "right_ankle",
    "spine3",
    "left_foot",
    "right_foot",
    "neck",
    "left_collar",
    "right_collar",
    "head",
    "left_shoulder",
    "right_shoulder",
    "left_elbow",
    "right_elbow",
    "left_wrist",
    "right_wrist",
    "left_hand",
    "right_hand",
];

/// Paper default: 10 cm spheres.
pub const DEFAULT_RADIUS_CM: f64 = 10.0;
/// Channels per joint block.
pub const DEFAULT_JOINT_CHANNELS: usize = 8;

#[derive(Debug, thiserror::Error)]
pub enum JointError {
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed joints file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("joints must be given in the normalized frame, got {0:?}")]
    Frame(String),
    #[error("unknown joint {0}")]
    UnknownJoint(String),
    #[error("duplicate joint {0}")]
    DuplicateJoint(String),
    #[error("missing joint {0}")]
    MissingJoint(String),
    #[error("expected {expected} joints, got {got}")]
    Count { expected: usize, got: usize },
    #[error("joint {0} has a non-finite coordinate")]
    NonFinite(String),
    #[error("joint radius must be positive and finite, got {0}")]
    BadRadius(f64),
    #[error("joint order hash does not match the SMPL order")]
    OrderMismatch,
    #[error("auxiliary image is {got:?}, condition grid is {expected:?}")]
    AuxSize {
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("decoding {path}: {message}")]
    AuxImage { path: PathBuf, message: String },
    #[error(transparent)]
    Fof(#[from] FofError),
}

impl JointError {
    pub fn class(&self) -> ErrorClass {
        match self {
            JointError::Io { .. } => ErrorClass::Io,
            _ => ErrorClass::Format,
        }
    }
}

/// SHA-256 of the newline-joined joint names.
pub fn joint_order_hash(names: &[&str]) -> [u8; 32] {
    Sha256::digest(names.join("\n").as_bytes()).into()
}

/// Joint positions in canonical SMPL order, in the normalized frame.
#[derive(Debug, Clone, PartialEq)]
pub struct JointSet {
    positions: Vec<Vec3>,
}

impl JointSet {
    pub fn new(positions: Vec<Vec3>) -> Result<Self, JointError> {
        if positions.len() != SMPL_JOINT_NAMES.len() {
            return Err(JointError::Count {
                expected: SMPL_JOINT_NAMES.len(),
                got: positions.len(),
            });
        }
        for (p, name) in positions.iter().zip(SMPL_JOINT_NAMES) {
            if !p.iter().all(|v| v.is_finite()) {
                return Err(JointError::NonFinite(name.to_string()));
            }
        }
        Ok(JointSet { positions })
    }

    /// Builds a set from named entries in any order.
    pub fn from_named(entries: &[(String, Vec3)]) -> Result<Self, JointError> {
        let mut slots: Vec<Option<Vec3>> = vec![None; SMPL_JOINT_NAMES.len()];
        for (name, p) in entries {
            let at = SMPL_JOINT_NAMES
                .iter()
                .position(|n| n == name)
                .ok_or_else(|| JointError::UnknownJoint(name.clone()))?;
            if slots[at].replace(*p).is_some() {
                return Err(JointError::DuplicateJoint(name.clone()));
            }
        }
        let positions = slots
            .into_iter()
            .zip(SMPL_JOINT_NAMES)
            .map(|(p, name)| p.ok_or_else(|| JointError::MissingJoint(name.to_string())))
            .collect::<Result<Vec<_>, _>>()?;
        JointSet::new(positions)
    }

    pub fn positions(&self) -> &[Vec3] {
        &self.positions
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct JointsFile {
    frame: String,
    joints: Vec<JointEntry>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct JointEntry {
    name: String,
    p: [f64; 3],
}

/// Parses `{"frame": "normalized", "joints": [{"name": .., "p": [x, y, z]}]}`.
pub fn parse_joints(text: &str) -> Result<JointSet, JointError> {
    let file: JointsFile = serde_json::from_str(text)?;
    if file.frame != "normalized" {
        return Err(JointError::Frame(file.frame));
    }
    let entries: Vec<(String, Vec3)> = file.joints.into_iter().map(|e| (e.name, e.p)).collect();
    JointSet::from_named(&entries)
}

pub fn load_joints(path: &Path) -> Result<JointSet, JointError> {
    let text = fs::read_to_string(path).map_err(|source| JointError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_joints(&text)
}

/// Converts a metric radius to normalized units, assuming the raw mesh is in
/// metres.
pub fn radius_from_cm(cm: f64, frame: &NormalizedFrame) -> f64 {
    frame.length_to_normalized(cm * 0.01)
}

/// Per-joint sphere blocks plus the metadata stored in the CSE1 trailer.
#[derive(Debug, Clone, PartialEq)]
pub struct CsejGrid {
    pub grid: FofGrid,
    pub joints: usize,
    pub channels_per_joint: usize,
    pub radius: f64,
    pub order_hash: [u8; 32],
}

impl CsejGrid {
    pub fn header(&self) -> CsejHeader {
        CsejHeader {
            joints: self.joints as u32,
            channels_per_joint: self.channels_per_joint as u32,
            radius: self.radius,
            order_hash: self.order_hash,
        }
    }

    /// Reassembles a grid read from a container, rejecting foreign joint
    /// orders.
    pub fn from_parts(grid: FofGrid, header: &CsejHeader) -> Result<Self, JointError> {
        if header.order_hash != joint_order_hash(&SMPL_JOINT_NAMES) {
            return Err(JointError::OrderMismatch);
        }
        Ok(CsejGrid {
            grid,
            joints: header.joints as usize,
            channels_per_joint: header.channels_per_joint as usize,
            radius: header.radius,
            order_hash: header.order_hash,
        })
    }

    /// Channel block of joint `index`.
    pub fn block(&self, index: usize) -> Result<FofGrid, JointError> {
        let c = self.channels_per_joint;
        Ok(self.grid.select_channels(index * c..(index + 1) * c)?)
    }
}

/// Embeds every joint as a sphere of radius `radius` (normalized units).
/// Depth intervals are clipped to `[-1, 1]`.
pub fn embed_joints(
    joints: &JointSet,
    radius: f64,
    width: usize,
    height: usize,
    channels_per_joint: usize,
) -> Result<CsejGrid, JointError> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(JointError::BadRadius(radius));
    }
    let blocks = joints
        .positions()
        .par_iter()
        .map(|&p| sphere_fof(p, radius, width, height, channels_per_joint))
        .collect::<Result<Vec<_>, _>>()?;
    let refs: Vec<&FofGrid> = blocks.iter().collect();
    Ok(CsejGrid {
        grid: FofGrid::concat_channels(&refs)?,
        joints: joints.len(),
        channels_per_joint,
        radius,
        order_hash: joint_order_hash(&SMPL_JOINT_NAMES),
    })
}

/// An extra per-pixel condition image, such as an IUV map. Sample values
/// are kept as stored (no rescaling).
#[derive(Debug, Clone, PartialEq)]
pub struct AuxImage {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    /// Row-major `(j, i, c)`.
    pub data: Vec<f32>,
}

/// Reads an 8- or 16-bit PNG. Palette and sub-byte images are expanded to
/// 8 bits.
pub fn load_aux_png(path: &Path) -> Result<AuxImage, JointError> {
    let fail = |message: String| JointError::AuxImage {
        path: path.to_path_buf(),
        message,
    };
    let file = fs::File::open(path).map_err(|source| JointError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut decoder = png::Decoder::new(std::io::BufReader::new(file));
    decoder.set_transformations(png::Transformations::EXPAND);
    let mut reader = decoder.read_info().map_err(|e| fail(e.to_string()))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| fail("image too large".into()))?;
    let mut buf = vec![0; size];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| fail(e.to_string()))?;
    let channels = info.color_type.samples();
    let bytes = &buf[..info.buffer_size()];
    let data: Vec<f32> = match info.bit_depth {
        png::BitDepth::Sixteen => bytes
            .chunks_exact(2)
            .map(|b| u16::from_be_bytes([b[0], b[1]]) as f32)
            .collect(),
        _ => bytes.iter().map(|&b| b as f32).collect(),
    };
    Ok(AuxImage {
        width: info.width as usize,
        height: info.height as usize,
        channels,
        data,
    })
}

/// A labelled channel range of a [`ConditionGrid`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConditionBlock {
    pub label: String,
    pub start: usize,
    pub len: usize,
}

/// Joint blocks followed by the optional auxiliary channels.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionGrid {
    pub grid: FofGrid,
    pub blocks: Vec<ConditionBlock>,
}

pub fn concat_condition(
    csej: &CsejGrid,
    aux: Option<&AuxImage>,
) -> Result<ConditionGrid, JointError> {
    let c = csej.channels_per_joint;
    let mut blocks: Vec<ConditionBlock> = SMPL_JOINT_NAMES
        .iter()
        .take(csej.joints)
        .enumerate()
        .map(|(k, name)| ConditionBlock {
            label: format!("joint:{name}"),
            start: k * c,
            len: c,
        })
        .collect();
    let Some(aux) = aux else {
        return Ok(ConditionGrid {
            grid: csej.grid.clone(),
            blocks,
        });
    };
    let (w, h, joint_channels) = csej.grid.shape();
    if (aux.width, aux.height) != (w, h) {
        return Err(JointError::AuxSize {
            expected: (w, h),
            got: (aux.width, aux.height),
        });
    }
    let aux_grid = FofGrid::from_data(w, h, aux.channels, aux.data.clone())?;
    blocks.push(ConditionBlock {
        label: "aux".into(),
        start: joint_channels,
        len: aux.channels,
    });
    Ok(ConditionGrid {
        grid: FofGrid::concat_channels(&[&csej.grid, &aux_grid])?,
        blocks,
    })
}
