//! Orthographic ray casting along `+z`, one ray per pixel center.
//!
//! The xy coordinates of vertices and ray origins are snapped to a common
//! fixed-point lattice (2^-32 units), and the edge functions are evaluated
//! exactly in integer arithmetic. An edge function that is exactly zero is
//! resolved as if the ray had been nudged by an infinitesimal `(d, d^2)`
//! offset, so every ray behaves like a ray in general position: a shared
//! edge or vertex is crossed exactly once when the surface passes through
//! it and zero or two times along a silhouette. Closed meshes therefore
//! always produce an even number of crossings.

use rayon::prelude::*;

use super::bvh::{Bounds2, Bvh2};
use super::{cross, norm, sub, GeometryError, Mesh};
use crate::lattice::{pixel_x, pixel_y};

/// Largest tolerated fraction of hit pixels with odd crossing parity for a
/// mesh flagged watertight.
pub const PARITY_TOLERANCE: f64 = 1e-3;

const FIXED_SCALE: f64 = 4294967296.0; // 2^32
const FIXED_LIMIT: f64 = 536870912.0; // 2^29

/// Occupied depth range `[start, end]` along one ray.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub start: f64,
    pub end: f64,
}

impl Interval {
    pub fn new(start: f64, end: f64) -> Self {
        Interval { start, end }
    }

    pub fn len(&self) -> f64 {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }
}

/// Per-pixel sorted, disjoint occupancy intervals inside `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalImage {
    width: usize,
    height: usize,
    offsets: Vec<usize>,
    spans: Vec<Interval>,
}

impl IntervalImage {
    pub fn empty(width: usize, height: usize) -> Self {
        IntervalImage {
            width,
            height,
            offsets: vec![0; width * height + 1],
            spans: Vec::new(),
        }
    }

    /// Builds an image from row-major per-pixel lists, checking that each
    /// list is sorted, disjoint and inside `[-1, 1]`.
    pub fn from_pixels(
        width: usize,
        height: usize,
        pixels: Vec<Vec<Interval>>,
    ) -> Result<Self, GeometryError> {
        if pixels.len() != width * height {
            return Err(GeometryError::BadImageSize { width, height });
        }
        let mut offsets = Vec::with_capacity(pixels.len() + 1);
        let mut spans = Vec::new();
        offsets.push(0);
        for (p, list) in pixels.into_iter().enumerate() {
            let bad = |message: &str| GeometryError::BadIntervals {
                i: p % width,
                j: p / width,
                message: message.to_string(),
            };
            let mut previous_end = f64::NEG_INFINITY;
            for iv in &list {
                if !(iv.start.is_finite() && iv.end.is_finite()) {
                    return Err(bad("non-finite endpoint"));
                }
                if iv.start < -1.0 || iv.end > 1.0 {
                    return Err(bad("endpoint outside [-1, 1]"));
                }
                if iv.start >= iv.end {
                    return Err(bad("empty or reversed interval"));
                }
                if iv.start < previous_end {
                    return Err(bad("intervals overlap or are unsorted"));
                }
                previous_end = iv.end;
            }
            spans.extend(list);
            offsets.push(spans.len());
        }
        Ok(IntervalImage {
            width,
            height,
            offsets,
            spans,
        })
    }

    fn from_rows(width: usize, height: usize, rows: Vec<RowIntervals>) -> Self {
        let mut offsets = Vec::with_capacity(width * height + 1);
        let mut spans = Vec::with_capacity(rows.iter().map(|r| r.spans.len()).sum());
        offsets.push(0);
        for row in rows {
            let base = spans.len();
            offsets.extend(row.ends.iter().map(|&e| base + e));
            spans.extend(row.spans);
        }
        IntervalImage {
            width,
            height,
            offsets,
            spans,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Intervals of pixel column `i`, row `j`.
    pub fn pixel(&self, i: usize, j: usize) -> &[Interval] {
        let p = j * self.width + i;
        &self.spans[self.offsets[p]..self.offsets[p + 1]]
    }

    /// Intervals of the pixel with row-major index `p`.
    pub fn pixel_at(&self, p: usize) -> &[Interval] {
        &self.spans[self.offsets[p]..self.offsets[p + 1]]
    }

    pub fn occupied_length(&self, i: usize, j: usize) -> f64 {
        self.pixel(i, j).iter().map(Interval::len).sum()
    }

    /// Sum of occupied lengths over all pixels.
    pub fn total_length(&self) -> f64 {
        self.spans.iter().map(Interval::len).sum()
    }

    pub fn hit_pixels(&self) -> usize {
        self.offsets.windows(2).filter(|w| w[1] > w[0]).count()
    }

    pub fn interval_count(&self) -> usize {
        self.spans.len()
    }
}

/// Parity audit collected during a cast.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ParityReport {
    /// Pixels whose ray crossed the surface at least once.
    pub hit_pixels: usize,
    /// Pixels with an odd crossing count (each repaired by dropping one
    /// crossing).
    pub violations: usize,
}

impl ParityReport {
    pub fn violation_fraction(&self) -> f64 {
        if self.hit_pixels == 0 {
            0.0
        } else {
            self.violations as f64 / self.hit_pixels as f64
        }
    }
}

/// Casts one ray per pixel and returns the occupancy intervals.
pub fn raycast_intervals(
    mesh: &Mesh,
    width: usize,
    height: usize,
) -> Result<IntervalImage, GeometryError> {
    raycast_with_report(mesh, width, height).map(|(image, _)| image)
}

/// [`raycast_intervals`] plus the parity audit.
pub fn raycast_with_report(
    mesh: &Mesh,
    width: usize,
    height: usize,
) -> Result<(IntervalImage, ParityReport), GeometryError> {
    let prepared = Prepared::new(mesh, width, height)?;
    let bounds: Vec<Bounds2> = prepared.triangles.iter().map(|t| t.bounds).collect();
    let bvh = Bvh2::build(&bounds);
    prepared.cast(mesh, |p, hits| {
        bvh.for_each_containing(p, |t| {
            if let Some(z) = prepared.triangles[t as usize].hit(p) {
                hits.push(Crossing { z, triangle: t });
            }
        })
    })
}

/// Reference caster that tests every triangle against every ray.
pub fn raycast_brute_force(
    mesh: &Mesh,
    width: usize,
    height: usize,
) -> Result<(IntervalImage, ParityReport), GeometryError> {
    let prepared = Prepared::new(mesh, width, height)?;
    prepared.cast(mesh, |p, hits| {
        for (t, tri) in prepared.triangles.iter().enumerate() {
            if let Some(z) = tri.hit(p) {
                hits.push(Crossing {
                    z,
                    triangle: t as u32,
                });
            }
        }
    })
}

#[derive(Debug, Clone, Copy)]
struct Crossing {
    z: f64,
    triangle: u32,
}

#[derive(Debug, Clone)]
struct PreparedTriangle {
    /// Index in the source mesh.
    source: u32,
    xy: [[i64; 2]; 3],
    z: [f64; 3],
    /// True when the projected triangle is counter-clockwise.
    ccw: bool,
    /// Inclusion rule for a ray lying exactly on the edge opposite each
    /// vertex.
    tie: [bool; 3],
    bounds: Bounds2,
}

impl PreparedTriangle {
    #[inline]
    fn hit(&self, p: [i64; 2]) -> Option<f64> {
        let a = [self.xy[0][0] - p[0], self.xy[0][1] - p[1]];
        let b = [self.xy[1][0] - p[0], self.xy[1][1] - p[1]];
        let c = [self.xy[2][0] - p[0], self.xy[2][1] - p[1]];
        let mut w = [det(b, c), det(c, a), det(a, b)];
        if !self.ccw {
            w = [-w[0], -w[1], -w[2]];
        }
        for k in 0..3 {
            if w[k] < 0 || (w[k] == 0 && !self.tie[k]) {
                return None;
            }
        }
        let total = (w[0] + w[1] + w[2]) as f64;
        let z =
            (w[0] as f64 * self.z[0] + w[1] as f64 * self.z[1] + w[2] as f64 * self.z[2]) / total;
        let lo = self.z[0].min(self.z[1]).min(self.z[2]);
        let hi = self.z[0].max(self.z[1]).max(self.z[2]);
        Some(z.clamp(lo, hi))
    }
}

#[inline]
fn det(a: [i64; 2], b: [i64; 2]) -> i128 {
    a[0] as i128 * b[1] as i128 - a[1] as i128 * b[0] as i128
}

fn to_fixed(v: f64) -> Option<i64> {
    (v.is_finite() && v.abs() < FIXED_LIMIT).then(|| (v * FIXED_SCALE).round() as i64)
}

struct RowIntervals {
    /// Exclusive end offset into `spans` for every pixel of the row.
    ends: Vec<usize>,
    spans: Vec<Interval>,
    report: ParityReport,
}

struct Prepared {
    width: usize,
    height: usize,
    triangles: Vec<PreparedTriangle>,
    /// Plane alignment `|n_z| / |n|` per source triangle.
    alignment: Vec<f64>,
}

impl Prepared {
    fn new(mesh: &Mesh, width: usize, height: usize) -> Result<Self, GeometryError> {
        if width == 0 || height == 0 {
            return Err(GeometryError::BadImageSize { width, height });
        }
        mesh.validate()?;
        let mut fixed = Vec::with_capacity(mesh.vertices.len());
        for (v, p) in mesh.vertices.iter().enumerate() {
            match (to_fixed(p[0]), to_fixed(p[1])) {
                (Some(x), Some(y)) => fixed.push([x, y]),
                _ => return Err(GeometryError::BadVertex(v)),
            }
        }
        let mut alignment = Vec::with_capacity(mesh.triangles.len());
        let mut triangles = Vec::with_capacity(mesh.triangles.len());
        for (t, &[ia, ib, ic]) in mesh.triangles.iter().enumerate() {
            let (pa, pb, pc) = (
                mesh.vertices[ia as usize],
                mesh.vertices[ib as usize],
                mesh.vertices[ic as usize],
            );
            let n = cross(sub(pb, pa), sub(pc, pa));
            let len = norm(n);
            alignment.push(if len > 0.0 { n[2].abs() / len } else { 0.0 });

            let xy = [fixed[ia as usize], fixed[ib as usize], fixed[ic as usize]];
            let area2 = det(xy[0], xy[1]) + det(xy[1], xy[2]) + det(xy[2], xy[0]);
            if area2 == 0 {
                // Edge-on in projection: a ray in general position misses it.
                continue;
            }
            let ccw = area2 > 0;
            let mut tie = [false; 3];
            for (k, slot) in tie.iter_mut().enumerate() {
                // Edge opposite vertex k, traversed counter-clockwise.
                let (from, to) = (xy[(k + 1) % 3], xy[(k + 2) % 3]);
                let (from, to) = if ccw { (from, to) } else { (to, from) };
                let d = [to[0] - from[0], to[1] - from[1]];
                *slot = d[1] < 0 || (d[1] == 0 && d[0] > 0);
            }
            let bounds = Bounds2 {
                min: [
                    xy[0][0].min(xy[1][0]).min(xy[2][0]),
                    xy[0][1].min(xy[1][1]).min(xy[2][1]),
                ],
                max: [
                    xy[0][0].max(xy[1][0]).max(xy[2][0]),
                    xy[0][1].max(xy[1][1]).max(xy[2][1]),
                ],
            };
            triangles.push(PreparedTriangle {
                source: t as u32,
                xy,
                z: [pa[2], pb[2], pc[2]],
                ccw,
                tie,
                bounds,
            });
        }
        Ok(Prepared {
            width,
            height,
            triangles,
            alignment,
        })
    }

    fn cast<F>(
        &self,
        mesh: &Mesh,
        collect: F,
    ) -> Result<(IntervalImage, ParityReport), GeometryError>
    where
        F: Fn([i64; 2], &mut Vec<Crossing>) + Sync,
    {
        let xs: Vec<i64> = (0..self.width)
            .map(|i| to_fixed(pixel_x(i, self.width)).unwrap())
            .collect();
        let rows: Vec<RowIntervals> = (0..self.height)
            .into_par_iter()
            .map(|j| {
                let y = to_fixed(pixel_y(j, self.height)).unwrap();
                let mut row = RowIntervals {
                    ends: Vec::with_capacity(self.width),
                    spans: Vec::new(),
                    report: ParityReport::default(),
                };
                let mut hits = Vec::new();
                for &x in &xs {
                    hits.clear();
                    collect([x, y], &mut hits);
                    self.resolve(&mut hits, &mut row);
                    row.ends.push(row.spans.len());
                }
                row
            })
            .collect();
        let mut report = ParityReport::default();
        for row in &rows {
            report.hit_pixels += row.report.hit_pixels;
            report.violations += row.report.violations;
        }
        if mesh.watertight && report.violations as f64 > PARITY_TOLERANCE * report.hit_pixels as f64
        {
            return Err(GeometryError::NotWatertight {
                violations: report.violations,
                hit_pixels: report.hit_pixels,
            });
        }
        Ok((
            IntervalImage::from_rows(self.width, self.height, rows),
            report,
        ))
    }

    /// Turns one ray's crossings into intervals, repairing odd parity.
    fn resolve(&self, hits: &mut Vec<Crossing>, row: &mut RowIntervals) {
        if hits.is_empty() {
            return;
        }
        row.report.hit_pixels += 1;
        hits.sort_unstable_by(|a, b| a.z.total_cmp(&b.z).then(a.triangle.cmp(&b.triangle)));
        if hits.len() % 2 == 1 {
            row.report.violations += 1;
            let alignment =
                |c: &Crossing| self.alignment[self.triangles[c.triangle as usize].source as usize];
            let mut drop = 0;
            for k in 1..hits.len() {
                if alignment(&hits[k]) < alignment(&hits[drop]) {
                    drop = k;
                }
            }
            hits.remove(drop);
        }
        let first = row.spans.len();
        for pair in hits.chunks_exact(2) {
            let start = pair[0].z.max(-1.0);
            let end = pair[1].z.min(1.0);
            if start >= end {
                continue;
            }
            match row.spans[first..].last_mut() {
                Some(last) if start <= last.end => last.end = last.end.max(end),
                _ => row.spans.push(Interval { start, end }),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::shapes;

    #[test]
    fn unit_cube_center_ray() {
        let cube = shapes::box_mesh([0.0; 3], [0.5; 3]);
        // 2x2 image: pixel centers at (+-0.5, +-0.5) sit exactly on cube
        // edges, so use an odd size to get a ray through the origin.
        let (image, report) = raycast_with_report(&cube, 3, 3).unwrap();
        assert_eq!(image.pixel(1, 1), &[Interval::new(-0.5, 0.5)]);
        assert_eq!(report.violations, 0);
    }

    #[test]
    fn miss_is_empty() {
        let cube = shapes::box_mesh([0.0; 3], [0.2; 3]);
        let image = raycast_intervals(&cube, 8, 8).unwrap();
        assert!(image.pixel(0, 0).is_empty());
        assert!(image.pixel(7, 3).is_empty());
    }

    #[test]
    fn rays_on_shared_edges_count_once() {
        // Pixel centers of a 4x4 image land on x, y in {-0.75, -0.25, 0.25,
        // 0.75}; this box has faces and the diagonal of every face split
        // passing through those lines.
        let cube = shapes::box_mesh([0.0; 3], [0.75; 3]);
        let (image, report) = raycast_with_report(&cube, 4, 4).unwrap();
        assert_eq!(report.violations, 0);
        for j in 0..4 {
            for i in 0..4 {
                for iv in image.pixel(i, j) {
                    assert_eq!(iv.len(), 1.5);
                }
            }
        }
        // Interior and diagonal pixels are covered exactly once.
        assert_eq!(image.pixel(1, 1), &[Interval::new(-0.75, 0.75)]);
        assert_eq!(image.pixel(2, 1), &[Interval::new(-0.75, 0.75)]);
    }

    #[test]
    fn sphere_chord_converges() {
        let exact = 0.08f64.sqrt();
        let mut previous = f64::INFINITY;
        for level in [2, 3, 4, 5] {
            let err = chord_error(&shapes::icosphere([0.0; 3], 0.3, level), exact);
            assert!(err < previous, "level {level}: {err} >= {previous}");
            previous = err;
        }
        assert!(previous < 1e-3);
    }

    fn chord_error(sphere: &Mesh, exact: f64) -> f64 {
        // 10 columns: pixel 5 is centered at x = 0.1; 11 rows: row 5 at y = 0.
        let image = raycast_intervals(sphere, 10, 11).unwrap();
        let spans = image.pixel(5, 5);
        assert_eq!(spans.len(), 1);
        (spans[0].start + exact)
            .abs()
            .max((spans[0].end - exact).abs())
    }

    #[test]
    fn bvh_matches_brute_force_bitwise() {
        let mut mesh = shapes::icosphere([0.05, -0.1, 0.02], 0.6, 3);
        let other = shapes::box_mesh([-0.3, 0.2, 0.1], [0.25, 0.5, 0.3]);
        let base = mesh.vertices.len() as u32;
        mesh.vertices.extend(other.vertices);
        mesh.triangles.extend(
            other
                .triangles
                .iter()
                .map(|t| [t[0] + base, t[1] + base, t[2] + base]),
        );
        let fast = raycast_with_report(&mesh, 64, 48).unwrap();
        let slow = raycast_brute_force(&mesh, 64, 48).unwrap();
        assert_eq!(fast, slow);
    }

    #[test]
    fn open_mesh_flagged_watertight_fails() {
        let mut cube = shapes::box_mesh([0.0; 3], [0.5; 3]);
        cube.triangles.truncate(10);
        assert!(matches!(
            raycast_intervals(&cube, 16, 16),
            Err(GeometryError::NotWatertight { .. })
        ));
        cube.watertight = false;
        let (_, report) = raycast_with_report(&cube, 16, 16).unwrap();
        assert!(report.violations > 0);
    }

    #[test]
    fn parity_repair_drops_most_tangent_crossing() {
        // A lone tilted triangle plus a closed box: the ray through both
        // sees three crossings; the tilted one is dropped.
        let mut mesh = shapes::box_mesh([0.0; 3], [0.5; 3]);
        let base = mesh.vertices.len() as u32;
        mesh.vertices
            .extend([[-0.9, -0.9, 0.7], [0.9, -0.9, 0.9], [0.0, 0.9, 0.95]]);
        mesh.triangles.push([base, base + 1, base + 2]);
        mesh.watertight = false;
        let (image, report) = raycast_with_report(&mesh, 3, 3).unwrap();
        assert!(report.violations > 0);
        assert_eq!(image.pixel(1, 1), &[Interval::new(-0.5, 0.5)]);
    }

    #[test]
    fn intervals_are_clipped_to_domain() {
        let cube = shapes::box_mesh([0.0; 3], [0.5, 0.5, 1.5]);
        let image = raycast_intervals(&cube, 3, 3).unwrap();
        assert_eq!(image.pixel(1, 1), &[Interval::new(-1.0, 1.0)]);
    }

    #[test]
    fn from_pixels_validates() {
        let ok = IntervalImage::from_pixels(
            2,
            1,
            vec![
                vec![Interval::new(-1.0, 0.0), Interval::new(0.5, 1.0)],
                vec![],
            ],
        )
        .unwrap();
        assert_eq!(ok.hit_pixels(), 1);
        assert!((ok.total_length() - 1.5).abs() < 1e-15);
        for bad in [
            vec![Interval::new(0.0, 0.5), Interval::new(0.25, 0.75)],
            vec![Interval::new(0.5, 0.25)],
            vec![Interval::new(-1.5, 0.0)],
        ] {
            assert!(IntervalImage::from_pixels(1, 1, vec![bad]).is_err());
        }
    }
}
