//! Plain marching cubes over an occupancy lattice.
//!
//! Lattice point `(i, j, k)` sits at the sample position of the grid (see
//! [`crate::lattice`]). The lattice is padded with one virtual layer of
//! zeros on every side so surfaces touching the domain boundary still close.
//!
//! Every output vertex lies on a lattice edge and is keyed by that edge.
//! Slabs of cells are triangulated in parallel into edge keys; the keys are
//! then sorted, so vertex numbering is independent of scheduling.

use rayon::prelude::*;

use super::tables::{EDGE_CORNERS, TRI_TABLE};
use super::{check_iso, MeshingError};
use crate::fof::OccupancyGrid;
use crate::geometry::{Mesh, Vec3};

const CORNER_OFFSETS: [[i64; 3]; 8] = [
    [0, 0, 0],
    [1, 0, 0],
    [1, 1, 0],
    [0, 1, 0],
    [0, 0, 1],
    [1, 0, 1],
    [1, 1, 1],
    [0, 1, 1],
];

/// Padded lattice view: indices run from -1 to n inclusive.
struct Padded<'a> {
    grid: &'a OccupancyGrid,
    dims: [i64; 3],
}

impl Padded<'_> {
    #[inline]
    fn value(&self, p: [i64; 3]) -> f32 {
        let [w, h, r] = self.dims;
        if p[0] < 0 || p[1] < 0 || p[2] < 0 || p[0] >= w || p[1] >= h || p[2] >= r {
            0.0
        } else {
            self.grid.get(p[0] as usize, p[1] as usize, p[2] as usize)
        }
    }

    /// Packs the edge starting at lattice point `p` along `axis`.
    #[inline]
    fn edge_key(&self, p: [i64; 3], axis: usize) -> u64 {
        let [w, h, _] = self.dims;
        let (i, j, k) = ((p[0] + 1) as u64, (p[1] + 1) as u64, (p[2] + 1) as u64);
        let (w, h) = ((w + 2) as u64, (h + 2) as u64);
        (((k * h + j) * w + i) << 2) | axis as u64
    }

    fn edge_from_key(&self, key: u64) -> ([i64; 3], usize) {
        let [w, h, _] = self.dims;
        let (w, h) = ((w + 2) as u64, (h + 2) as u64);
        let axis = (key & 3) as usize;
        let rest = key >> 2;
        let i = rest % w;
        let j = (rest / w) % h;
        let k = rest / (w * h);
        ([i as i64 - 1, j as i64 - 1, k as i64 - 1], axis)
    }

    fn position(&self, p: [i64; 3]) -> Vec3 {
        let [w, h, r] = self.dims;
        let coord = |idx: i64, n: i64| -1.0 + (2 * idx + 1) as f64 / n as f64;
        [coord(p[0], w), -coord(p[1], h), coord(p[2], r)]
    }

    fn vertex(&self, key: u64, iso: f64) -> Vec3 {
        let (p, axis) = self.edge_from_key(key);
        let mut q = p;
        q[axis] += 1;
        let (v0, v1) = (self.value(p) as f64, self.value(q) as f64);
        let t = ((iso - v0) / (v1 - v0)).clamp(0.0, 1.0);
        let (a, b) = (self.position(p), self.position(q));
        [
            a[0] + t * (b[0] - a[0]),
            a[1] + t * (b[1] - a[1]),
            a[2] + t * (b[2] - a[2]),
        ]
    }
}

/// Extracts the `iso` level set. Samples `>= iso` are inside. Triangles are
/// wound so their normals point towards decreasing occupancy.
pub fn marching_cubes(grid: &OccupancyGrid, iso: f64) -> Result<Mesh, MeshingError> {
    check_iso(iso)?;
    let (w, h, r) = grid.shape();
    let lattice = Padded {
        grid,
        dims: [w as i64, h as i64, r as i64],
    };
    let iso32 = iso as f32;

    // Cell (ci, cj, ck) spans lattice points ci..=ci+1 etc., ci in -1..w.
    let slabs: Vec<Vec<[u64; 3]>> = (-1..h as i64)
        .into_par_iter()
        .map(|cj| {
            let mut out = Vec::new();
            let mut keys = [0u64; 12];
            for ci in -1..w as i64 {
                for ck in -1..r as i64 {
                    let mut case = 0usize;
                    for (c, off) in CORNER_OFFSETS.iter().enumerate() {
                        let v = lattice.value([ci + off[0], cj + off[1], ck + off[2]]);
                        if v < iso32 {
                            case |= 1 << c;
                        }
                    }
                    if case == 0 || case == 255 {
                        continue;
                    }
                    let row = &TRI_TABLE[case];
                    for (e, key) in keys.iter_mut().enumerate() {
                        let (a, b) = EDGE_CORNERS[e];
                        let (oa, ob) = (CORNER_OFFSETS[a], CORNER_OFFSETS[b]);
                        let axis = (0..3).find(|&d| oa[d] != ob[d]).unwrap();
                        let low = if oa[axis] < ob[axis] { oa } else { ob };
                        *key = lattice.edge_key([ci + low[0], cj + low[1], ck + low[2]], axis);
                    }
                    for tri in row.chunks_exact(3).take_while(|t| t[0] >= 0) {
                        out.push([
                            keys[tri[0] as usize],
                            keys[tri[2] as usize],
                            keys[tri[1] as usize],
                        ]);
                    }
                }
            }
            out
        })
        .collect();

    let mut edges: Vec<u64> = slabs.iter().flatten().flatten().copied().collect();
    edges.par_sort_unstable();
    edges.dedup();
    let vertices: Vec<Vec3> = edges.par_iter().map(|&k| lattice.vertex(k, iso)).collect();
    let index = |key: u64| edges.binary_search(&key).unwrap() as u32;
    let triangles: Vec<[u32; 3]> = slabs
        .par_iter()
        .flat_map_iter(|slab| slab.iter().map(|t| [index(t[0]), index(t[1]), index(t[2])]))
        .collect();
    Ok(Mesh::new(vertices, triangles))
}

#[cfg(test)]
mod tests {
    use std::collections::HashMap;

    use super::*;
    use crate::fof::sphere_fof;

    fn sphere_grid(n: usize, radius: f64) -> OccupancyGrid {
        OccupancyGrid::from_fn(n, n, n, |x, y, z| {
            // Signed distance mapped to a ramp one cell wide.
            let d = radius - (x * x + y * y + z * z).sqrt();
            (0.5 + d * n as f64 / 2.0).clamp(0.0, 1.0) as f32
        })
        .unwrap()
    }

    #[test]
    fn table_cases_close_up_inside_the_cell() {
        // Every edge used by a case must be a sign-change edge, and every
        // cut edge inside the cube is shared by exactly two triangles.
        let face_of_edge = |e: usize| {
            let (a, b) = EDGE_CORNERS[e];
            let (oa, ob) = (CORNER_OFFSETS[a], CORNER_OFFSETS[b]);
            (oa, ob)
        };
        for case in 1..255usize {
            let row = &TRI_TABLE[case];
            let mut used = HashMap::new();
            for tri in row.chunks_exact(3).take_while(|t| t[0] >= 0) {
                for v in 0..3 {
                    let (a, b) = (tri[v] as usize, tri[(v + 1) % 3] as usize);
                    *used.entry((a.min(b), a.max(b))).or_insert(0) += 1;
                    let (ca, cb) = EDGE_CORNERS[a];
                    assert_ne!(
                        case >> ca & 1,
                        case >> cb & 1,
                        "case {case} uses uncut edge {a}"
                    );
                }
            }
            for ((a, b), count) in used {
                // Segments on a cube face lie on the boundary; interior ones
                // need two triangles.
                let (pa, qa) = face_of_edge(a);
                let (pb, qb) = face_of_edge(b);
                let on_face = (0..3).any(|d| {
                    let pts = [pa[d], qa[d], pb[d], qb[d]];
                    pts.iter().all(|&x| x == pts[0])
                });
                if on_face {
                    assert_eq!(count, 1, "case {case} face segment ({a}, {b})");
                } else {
                    assert_eq!(count, 2, "case {case} inner segment ({a}, {b})");
                }
            }
        }
    }

    #[test]
    fn empty_field_gives_empty_mesh() {
        let grid = OccupancyGrid::zeros(8, 8, 8).unwrap();
        let mesh = marching_cubes(&grid, 0.5).unwrap();
        assert!(mesh.is_empty());
        assert!(matches!(
            marching_cubes(&grid, 1.0),
            Err(MeshingError::BadIso(_))
        ));
    }

    #[test]
    fn single_voxel_is_a_closed_octahedron() {
        let mut grid = OccupancyGrid::zeros(5, 5, 5).unwrap();
        grid.data_mut()[(2 * 5 + 2) * 5 + 2] = 1.0;
        let mesh = marching_cubes(&grid, 0.5).unwrap();
        assert_eq!(mesh.vertices.len(), 6);
        assert_eq!(mesh.triangles.len(), 8);
        assert_eq!(mesh.euler_characteristic(), 2);
        assert!(mesh.is_edge_manifold());
        assert!(mesh.signed_volume() > 0.0);
    }

    #[test]
    fn boundary_voxels_still_close() {
        let grid = OccupancyGrid::from_fn(6, 6, 6, |_, _, _| 1.0).unwrap();
        let mesh = marching_cubes(&grid, 0.5).unwrap();
        assert!(mesh.is_edge_manifold());
        assert_eq!(mesh.euler_characteristic(), 2);
        // The padded surface sits half a cell outside the outermost samples.
        let (lo, hi) = mesh.bounds().unwrap();
        for d in 0..3 {
            assert!((lo[d] + 1.0).abs() < 1e-12 && (hi[d] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn sphere_volume_and_manifoldness() {
        let radius = 0.3;
        let mesh = marching_cubes(&sphere_grid(96, radius), 0.5).unwrap();
        let exact = 4.0 / 3.0 * std::f64::consts::PI * radius.powi(3);
        assert!(((mesh.signed_volume() - exact) / exact).abs() < 0.01);
        assert!(mesh.is_edge_manifold());
        assert_eq!(mesh.euler_characteristic(), 2);
    }

    #[test]
    fn normals_point_down_the_gradient() {
        let mesh = marching_cubes(&sphere_grid(32, 0.5), 0.5).unwrap();
        for t in 0..mesh.triangles.len() {
            let [a, b, c] = mesh.triangle(t);
            let n = crate::geometry::cross(crate::geometry::sub(b, a), crate::geometry::sub(c, a));
            let centroid = [
                (a[0] + b[0] + c[0]) / 3.0,
                (a[1] + b[1] + c[1]) / 3.0,
                (a[2] + b[2] + c[2]) / 3.0,
            ];
            assert!(crate::geometry::dot(n, centroid) > 0.0);
        }
    }

    #[test]
    fn output_does_not_depend_on_thread_count() {
        let fof = sphere_fof([0.05, -0.1, 0.0], 0.4, 48, 48, 16).unwrap();
        let grid = crate::fof::fof_to_occupancy(&fof, 48).unwrap();
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| marching_cubes(&grid, 0.5).unwrap())
        };
        let (one, four) = (run(1), run(4));
        assert_eq!(one.vertices, four.vertices);
        assert_eq!(one.triangles, four.triangles);
    }
}
