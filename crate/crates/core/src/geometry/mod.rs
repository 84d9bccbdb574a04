//! Triangle meshes in the normalized frame, and the orthographic ray caster
//! that turns them into per-pixel occupancy intervals.

mod bvh;
mod io;
mod raycast;
pub mod shapes;

use std::collections::HashMap;
use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ErrorClass;

pub use io::{load_mesh, read_obj, read_ply, save_mesh, write_obj, write_ply, MeshWarning};
pub use raycast::{
    raycast_brute_force, raycast_intervals, raycast_with_report, Interval, IntervalImage,
    ParityReport, PARITY_TOLERANCE,
};

pub type Vec3 = [f64; 3];

/// Triangles with an area at or below this are treated as degenerate.
pub const DEGENERATE_AREA: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}: unsupported mesh content: {message}")]
    Unsupported { path: PathBuf, message: String },
    #[error("no geometry")]
    NoGeometry,
    #[error("mesh has zero extent (all vertices coincide)")]
    ZeroExtent,
    #[error("triangle {triangle} references vertex {index}, mesh has {vertex_count}")]
    IndexOutOfRange {
        triangle: usize,
        index: u32,
        vertex_count: usize,
    },
    #[error("vertex {0} is not finite or lies outside the ray-casting range")]
    BadVertex(usize),
    #[error("image size {width}x{height} is invalid")]
    BadImageSize { width: usize, height: usize },
    #[error(
        "mesh not watertight under probe: {violations} of {hit_pixels} hit pixels have odd crossing parity"
    )]
    NotWatertight {
        violations: usize,
        hit_pixels: usize,
    },
    #[error("invalid intervals at pixel ({i}, {j}): {message}")]
    BadIntervals { i: usize, j: usize, message: String },
}

impl GeometryError {
    pub fn class(&self) -> ErrorClass {
        match self {
            GeometryError::Io { .. } => ErrorClass::Io,
            GeometryError::Parse { .. }
            | GeometryError::Unsupported { .. }
            | GeometryError::BadImageSize { .. }
            | GeometryError::BadIntervals { .. } => ErrorClass::Format,
            _ => ErrorClass::Geometry,
        }
    }
}

/// Indexed triangle mesh.
///
/// `watertight` is a claim made by the caller: ray casting a mesh that carries
/// it fails when too many probe rays see an odd number of crossings. Freshly
/// loaded meshes are assumed closed.
#[derive(Clone, Debug, PartialEq)]
pub struct Mesh {
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[u32; 3]>,
    pub watertight: bool,
}

impl Default for Mesh {
    fn default() -> Self {
        Mesh::new(Vec::new(), Vec::new())
    }
}

impl Mesh {
    pub fn new(vertices: Vec<Vec3>, triangles: Vec<[u32; 3]>) -> Self {
        Mesh {
            vertices,
            triangles,
            watertight: true,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    /// Checks that every index is in range and every vertex is finite.
    pub fn validate(&self) -> Result<(), GeometryError> {
        if let Some(v) = self
            .vertices
            .iter()
            .position(|p| !p.iter().all(|c| c.is_finite()))
        {
            return Err(GeometryError::BadVertex(v));
        }
        let n = self.vertices.len();
        for (t, tri) in self.triangles.iter().enumerate() {
            if let Some(&index) = tri.iter().find(|&&v| v as usize >= n) {
                return Err(GeometryError::IndexOutOfRange {
                    triangle: t,
                    index,
                    vertex_count: n,
                });
            }
        }
        Ok(())
    }

    pub fn triangle(&self, t: usize) -> [Vec3; 3] {
        let [a, b, c] = self.triangles[t];
        [
            self.vertices[a as usize],
            self.vertices[b as usize],
            self.vertices[c as usize],
        ]
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangle(t);
        0.5 * norm(cross(sub(b, a), sub(c, a)))
    }

    /// Drops triangles with repeated indices or area `<= tolerance`. Returns
    /// the number removed.
    pub fn remove_degenerate(&mut self, tolerance: f64) -> usize {
        let before = self.triangles.len();
        let vertices = &self.vertices;
        self.triangles.retain(|&[a, b, c]| {
            if a == b || b == c || a == c {
                return false;
            }
            let (pa, pb, pc) = (
                vertices[a as usize],
                vertices[b as usize],
                vertices[c as usize],
            );
            0.5 * norm(cross(sub(pb, pa), sub(pc, pa))) > tolerance
        });
        before - self.triangles.len()
    }

    /// Axis-aligned bounds `(min, max)`, or `None` for a mesh without vertices.
    pub fn bounds(&self) -> Option<(Vec3, Vec3)> {
        let first = *self.vertices.first()?;
        Some(self.vertices.iter().fold((first, first), |(lo, hi), p| {
            (
                [lo[0].min(p[0]), lo[1].min(p[1]), lo[2].min(p[2])],
                [hi[0].max(p[0]), hi[1].max(p[1]), hi[2].max(p[2])],
            )
        }))
    }

    /// Signed enclosed volume (divergence theorem). Positive for a closed
    /// mesh with outward-facing counter-clockwise triangles.
    pub fn signed_volume(&self) -> f64 {
        self.triangles
            .iter()
            .map(|&[a, b, c]| {
                let (pa, pb, pc) = (
                    self.vertices[a as usize],
                    self.vertices[b as usize],
                    self.vertices[c as usize],
                );
                dot(pa, cross(pb, pc))
            })
            .sum::<f64>()
            / 6.0
    }

    pub fn surface_area(&self) -> f64 {
        (0..self.triangles.len())
            .map(|t| self.triangle_area(t))
            .sum()
    }

    /// Number of triangles using each undirected edge.
    pub fn edge_use_counts(&self) -> HashMap<(u32, u32), usize> {
        let mut counts = HashMap::new();
        for &[a, b, c] in &self.triangles {
            for (u, v) in [(a, b), (b, c), (c, a)] {
                *counts.entry((u.min(v), u.max(v))).or_insert(0) += 1;
            }
        }
        counts
    }

    /// True when every edge is shared by exactly two triangles.
    pub fn is_edge_manifold(&self) -> bool {
        !self.is_empty() && self.edge_use_counts().values().all(|&n| n == 2)
    }

    /// `V - E + F` counted over referenced vertices.
    pub fn euler_characteristic(&self) -> i64 {
        let mut used = vec![false; self.vertices.len()];
        for tri in &self.triangles {
            for &v in tri {
                used[v as usize] = true;
            }
        }
        let v = used.iter().filter(|&&u| u).count() as i64;
        let e = self.edge_use_counts().len() as i64;
        v - e + self.triangles.len() as i64
    }
}

/// Affine map between a raw mesh frame and the normalized frame:
/// `normalized = (raw - offset) * scale`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizedFrame {
    pub scale: f64,
    pub offset: Vec3,
}

impl NormalizedFrame {
    pub const IDENTITY: NormalizedFrame = NormalizedFrame {
        scale: 1.0,
        offset: [0.0; 3],
    };

    pub fn to_normalized(&self, p: Vec3) -> Vec3 {
        [
            (p[0] - self.offset[0]) * self.scale,
            (p[1] - self.offset[1]) * self.scale,
            (p[2] - self.offset[2]) * self.scale,
        ]
    }

    pub fn to_raw(&self, p: Vec3) -> Vec3 {
        [
            p[0] / self.scale + self.offset[0],
            p[1] / self.scale + self.offset[1],
            p[2] / self.scale + self.offset[2],
        ]
    }

    /// Converts a length in raw units to normalized units.
    pub fn length_to_normalized(&self, length: f64) -> f64 {
        length * self.scale
    }
}

impl fmt::Display for NormalizedFrame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "scale {} offset ({}, {}, {})",
            self.scale, self.offset[0], self.offset[1], self.offset[2]
        )
    }
}

/// Centers the mesh and scales it uniformly so its bounding box fits in
/// `[-(1 - margin), 1 - margin]^3` with the longest axis touching the bound.
pub fn normalize_mesh(mesh: &Mesh, margin: f64) -> Result<(Mesh, NormalizedFrame), GeometryError> {
    mesh.validate()?;
    if mesh.is_empty() {
        return Err(GeometryError::NoGeometry);
    }
    let (lo, hi) = mesh.bounds().ok_or(GeometryError::NoGeometry)?;
    let half = (0..3).map(|a| 0.5 * (hi[a] - lo[a])).fold(0.0, f64::max);
    if half <= 0.0 {
        return Err(GeometryError::ZeroExtent);
    }
    let frame = NormalizedFrame {
        scale: (1.0 - margin) / half,
        offset: [
            0.5 * (lo[0] + hi[0]),
            0.5 * (lo[1] + hi[1]),
            0.5 * (lo[2] + hi[2]),
        ],
    };
    Ok((apply_frame(mesh, &frame), frame))
}

/// Maps a mesh in the raw frame into the normalized frame.
pub fn apply_frame(mesh: &Mesh, frame: &NormalizedFrame) -> Mesh {
    Mesh {
        vertices: mesh
            .vertices
            .iter()
            .map(|&p| frame.to_normalized(p))
            .collect(),
        triangles: mesh.triangles.clone(),
        watertight: mesh.watertight,
    }
}

/// Maps a normalized mesh back to the raw frame.
pub fn denormalize_mesh(mesh: &Mesh, frame: &NormalizedFrame) -> Mesh {
    Mesh {
        vertices: mesh.vertices.iter().map(|&p| frame.to_raw(p)).collect(),
        triangles: mesh.triangles.clone(),
        watertight: mesh.watertight,
    }
}

/// Rotates a point about the `+y` axis through the origin.
#[inline]
pub fn yaw_point(p: Vec3, theta: f64) -> Vec3 {
    let (s, c) = theta.sin_cos();
    [c * p[0] + s * p[2], p[1], -s * p[0] + c * p[2]]
}

/// Rotates every vertex about the vertical axis; connectivity is untouched.
pub fn rotate_yaw(mesh: &Mesh, theta: f64) -> Mesh {
    Mesh {
        vertices: mesh.vertices.iter().map(|&p| yaw_point(p, theta)).collect(),
        triangles: mesh.triangles.clone(),
        watertight: mesh.watertight,
    }
}

#[inline]
pub(crate) fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub(crate) fn add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub(crate) fn scale(a: Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

#[inline]
pub(crate) fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub(crate) fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[inline]
pub(crate) fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn cube_0_2() -> Mesh {
        shapes::box_mesh([1.0; 3], [1.0; 3])
    }

    #[test]
    fn normalize_cube_corners() {
        let m = cube_0_2();
        let (n, frame) = normalize_mesh(&m, 0.05).unwrap();
        assert_eq!(frame.scale, 0.95);
        assert_eq!(frame.offset, [1.0, 1.0, 1.0]);
        let (lo, hi) = n.bounds().unwrap();
        for a in 0..3 {
            assert!((lo[a] + 0.95).abs() < 1e-15);
            assert!((hi[a] - 0.95).abs() < 1e-15);
        }
        let back = denormalize_mesh(&n, &frame);
        for (p, q) in back.vertices.iter().zip(&m.vertices) {
            for a in 0..3 {
                assert!((p[a] - q[a]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn normalize_already_normalized_is_margin_rescale() {
        let m = shapes::box_mesh([0.0; 3], [1.0; 3]);
        let (n, frame) = normalize_mesh(&m, 0.05).unwrap();
        assert_eq!(frame.offset, [0.0; 3]);
        assert!((frame.scale - 0.95).abs() < 1e-15);
        for (p, q) in n.vertices.iter().zip(&m.vertices) {
            for a in 0..3 {
                assert!((p[a] - 0.95 * q[a]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn normalize_single_point_fails() {
        let m = Mesh::new(vec![[0.3, 0.3, 0.3]; 3], vec![[0, 1, 2]]);
        assert!(matches!(
            normalize_mesh(&m, 0.05),
            Err(GeometryError::ZeroExtent)
        ));
    }

    #[test]
    fn yaw_zero_is_identity() {
        let m = shapes::icosphere([0.1, 0.2, 0.3], 0.4, 2);
        assert_eq!(rotate_yaw(&m, 0.0), m);
    }

    #[test]
    fn yaw_composes() {
        let m = shapes::icosphere([0.1, -0.2, 0.3], 0.4, 2);
        let twice = rotate_yaw(&rotate_yaw(&m, FRAC_PI_2), FRAC_PI_2);
        let once = rotate_yaw(&m, PI);
        for (p, q) in twice.vertices.iter().zip(&once.vertices) {
            for a in 0..3 {
                assert!((p[a] - q[a]).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn yaw_matches_rotation_matrix() {
        // Right-handed rotation about +y: [[c, 0, s], [0, 1, 0], [-s, 0, c]].
        let matrix = |t: f64| {
            let (s, c) = (t.sin(), t.cos());
            [[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]]
        };
        let apply = |m: [[f64; 3]; 3], p: Vec3| {
            [
                m[0][0] * p[0] + m[0][1] * p[1] + m[0][2] * p[2],
                m[1][0] * p[0] + m[1][1] * p[1] + m[1][2] * p[2],
                m[2][0] * p[0] + m[2][1] * p[1] + m[2][2] * p[2],
            ]
        };
        let q = yaw_point([1.0, 0.0, 0.0], FRAC_PI_2);
        let expected = apply(matrix(FRAC_PI_2), [1.0, 0.0, 0.0]);
        for a in 0..3 {
            assert!((q[a] - expected[a]).abs() < 1e-15);
        }
        assert!((q[0]).abs() < 1e-15 && (q[2] + 1.0).abs() < 1e-15);
        for t in [0.3, 1.7, -2.2] {
            let p = [0.3, -0.7, 0.2];
            let (q, e) = (yaw_point(p, t), apply(matrix(t), p));
            for a in 0..3 {
                assert!((q[a] - e[a]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn volume_and_topology_of_box() {
        let m = shapes::box_mesh([0.0; 3], [0.5; 3]);
        assert!((m.signed_volume() - 1.0).abs() < 1e-12);
        assert!(m.is_edge_manifold());
        assert_eq!(m.euler_characteristic(), 2);
    }

    #[test]
    fn degenerate_faces_are_removed() {
        let mut m = shapes::box_mesh([0.0; 3], [0.5; 3]);
        m.triangles.push([0, 0, 1]);
        m.vertices.push([2.0, 2.0, 2.0]);
        m.vertices.push([3.0, 3.0, 3.0]);
        m.vertices.push([4.0, 4.0, 4.0]);
        m.triangles.push([8, 9, 10]);
        assert_eq!(m.remove_degenerate(DEGENERATE_AREA), 2);
        assert_eq!(m.triangles.len(), 12);
    }

    #[test]
    fn validate_catches_bad_index() {
        let m = Mesh::new(vec![[0.0; 3]; 3], vec![[0, 1, 3]]);
        assert!(matches!(
            m.validate(),
            Err(GeometryError::IndexOutOfRange { .. })
        ));
    }
}
