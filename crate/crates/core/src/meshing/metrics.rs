//! Surface and volume comparison metrics.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{check_iso, MeshingError};
use crate::fof::OccupancyGrid;
use crate::geometry::{add, cross, dot, scale, sub, Mesh, Vec3};

/// Seed used by [`chamfer`].
pub const CHAMFER_SEED: u64 = 0x0f0f_5eed_c4a3_f3e1;

const LEAF_SIZE: usize = 4;

/// Draws `count` points from the surface with density proportional to area.
/// Triangle selection is stratified: sample `k` uses the `k`-th of `count`
/// equal slices of cumulative area.
pub fn sample_surface(mesh: &Mesh, count: usize, seed: u64) -> Result<Vec<Vec3>, MeshingError> {
    if count == 0 {
        return Err(MeshingError::NoSamples);
    }
    let mut cumulative = Vec::with_capacity(mesh.triangles.len());
    let mut total = 0.0;
    for t in 0..mesh.triangles.len() {
        total += mesh.triangle_area(t);
        cumulative.push(total);
    }
    if !(total > 0.0) {
        return Err(MeshingError::EmptyMesh);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = (0..count)
        .map(|k| {
            let u = (k as f64 + rng.gen::<f64>()) / count as f64 * total;
            let t = cumulative
                .partition_point(|&c| c <= u)
                .min(cumulative.len() - 1);
            let [a, b, c] = mesh.triangle(t);
            let (r1, r2): (f64, f64) = (rng.gen(), rng.gen());
            let s = r1.sqrt();
            let (wa, wb, wc) = (1.0 - s, s * (1.0 - r2), s * r2);
            [
                wa * a[0] + wb * b[0] + wc * c[0],
                wa * a[1] + wb * b[1] + wc * c[1],
                wa * a[2] + wb * b[2] + wc * c[2],
            ]
        })
        .collect();
    Ok(points)
}

/// Symmetric chamfer distance with the default seed: the mean distance from
/// `samples` points on `a` to the surface of `b`, plus the same from `b` to
/// `a`.
pub fn chamfer(a: &Mesh, b: &Mesh, samples: usize) -> Result<f64, MeshingError> {
    chamfer_with_seed(a, b, samples, CHAMFER_SEED)
}

pub fn chamfer_with_seed(
    a: &Mesh,
    b: &Mesh,
    samples: usize,
    seed: u64,
) -> Result<f64, MeshingError> {
    let (pa, pb) = (
        sample_surface(a, samples, seed)?,
        sample_surface(b, samples, seed)?,
    );
    let (ta, tb) = (ClosestPoint::new(a), ClosestPoint::new(b));
    Ok(mean_distance(&pa, &tb) + mean_distance(&pb, &ta))
}

fn mean_distance(points: &[Vec3], target: &ClosestPoint) -> f64 {
    let distances: Vec<f64> = points.par_iter().map(|&p| target.distance(p)).collect();
    distances.iter().sum::<f64>() / points.len() as f64
}

#[derive(Debug, Clone, Copy)]
struct Aabb {
    min: Vec3,
    max: Vec3,
}

impl Aabb {
    fn of(points: &[Vec3]) -> Aabb {
        let mut b = Aabb {
            min: [f64::INFINITY; 3],
            max: [f64::NEG_INFINITY; 3],
        };
        for p in points {
            for d in 0..3 {
                b.min[d] = b.min[d].min(p[d]);
                b.max[d] = b.max[d].max(p[d]);
            }
        }
        b
    }

    fn union(self, o: Aabb) -> Aabb {
        let mut b = self;
        for d in 0..3 {
            b.min[d] = b.min[d].min(o.min[d]);
            b.max[d] = b.max[d].max(o.max[d]);
        }
        b
    }

    fn distance_squared(&self, p: Vec3) -> f64 {
        (0..3)
            .map(|d| {
                let e = (self.min[d] - p[d]).max(p[d] - self.max[d]).max(0.0);
                e * e
            })
            .sum()
    }
}

#[derive(Debug, Clone, Copy)]
struct Node {
    bounds: Aabb,
    /// Leaf: first item; interior: right child (left child follows).
    index: u32,
    count: u32,
}

/// Closest-point queries against a triangle mesh.
#[derive(Debug, Clone)]
pub struct ClosestPoint {
    triangles: Vec<[Vec3; 3]>,
    nodes: Vec<Node>,
}

impl ClosestPoint {
    pub fn new(mesh: &Mesh) -> ClosestPoint {
        let all: Vec<[Vec3; 3]> = (0..mesh.triangles.len())
            .map(|t| mesh.triangle(t))
            .collect();
        let boxes: Vec<Aabb> = all.iter().map(|t| Aabb::of(t)).collect();
        let mut order: Vec<u32> = (0..all.len() as u32).collect();
        let mut nodes = Vec::new();
        if !all.is_empty() {
            build(&boxes, &mut order, 0, &mut nodes);
        }
        let triangles = order.iter().map(|&t| all[t as usize]).collect();
        ClosestPoint { triangles, nodes }
    }

    /// Euclidean distance from `p` to the nearest triangle.
    pub fn distance(&self, p: Vec3) -> f64 {
        if self.nodes.is_empty() {
            return f64::INFINITY;
        }
        let mut best = f64::INFINITY;
        let mut stack = vec![0u32];
        while let Some(at) = stack.pop() {
            let node = &self.nodes[at as usize];
            if node.bounds.distance_squared(p) >= best {
                continue;
            }
            if node.count > 0 {
                let first = node.index as usize;
                for tri in &self.triangles[first..first + node.count as usize] {
                    best = best.min(point_triangle_distance_squared(p, tri));
                }
            } else {
                let (left, right) = (at + 1, node.index);
                let dl = self.nodes[left as usize].bounds.distance_squared(p);
                let dr = self.nodes[right as usize].bounds.distance_squared(p);
                if dl <= dr {
                    stack.push(right);
                    stack.push(left);
                } else {
                    stack.push(left);
                    stack.push(right);
                }
            }
        }
        best.sqrt()
    }
}

fn build(boxes: &[Aabb], order: &mut [u32], first: usize, nodes: &mut Vec<Node>) -> u32 {
    let bounds = order
        .iter()
        .map(|&i| boxes[i as usize])
        .reduce(Aabb::union)
        .unwrap();
    let me = nodes.len() as u32;
    nodes.push(Node {
        bounds,
        index: first as u32,
        count: order.len() as u32,
    });
    if order.len() <= LEAF_SIZE {
        return me;
    }
    let centroid = |i: u32, d: usize| boxes[i as usize].min[d] + boxes[i as usize].max[d];
    let extent = |d: usize| bounds.max[d] - bounds.min[d];
    let axis = (0..3).fold(0, |a, d| if extent(d) > extent(a) { d } else { a });
    order.sort_unstable_by(|&a, &b| {
        centroid(a, axis)
            .total_cmp(&centroid(b, axis))
            .then(a.cmp(&b))
    });
    let mid = order.len() / 2;
    let (left, right) = order.split_at_mut(mid);
    nodes[me as usize].count = 0;
    build(boxes, left, first, nodes);
    let right_index = build(boxes, right, first + mid, nodes);
    nodes[me as usize].index = right_index;
    me
}

/// Squared distance from `p` to a triangle, by Voronoi region of the
/// closest feature.
pub(crate) fn point_triangle_distance_squared(p: Vec3, [a, b, c]: &[Vec3; 3]) -> f64 {
    let (ab, ac, ap) = (sub(*b, *a), sub(*c, *a), sub(p, *a));
    let n = cross(ab, ac);
    if dot(n, n) <= f64::MIN_POSITIVE {
        // Degenerate triangle: nearest point on its edges.
        return [(a, b), (b, c), (c, a)]
            .iter()
            .map(|(u, v)| segment_distance_squared(p, **u, **v))
            .fold(f64::INFINITY, f64::min);
    }
    let (d1, d2) = (dot(ab, ap), dot(ac, ap));
    let closest = if d1 <= 0.0 && d2 <= 0.0 {
        *a
    } else {
        let bp = sub(p, *b);
        let (d3, d4) = (dot(ab, bp), dot(ac, bp));
        let cp = sub(p, *c);
        let (d5, d6) = (dot(ab, cp), dot(ac, cp));
        let vc = d1 * d4 - d3 * d2;
        let vb = d5 * d2 - d1 * d6;
        let va = d3 * d6 - d5 * d4;
        if d3 >= 0.0 && d4 <= d3 {
            *b
        } else if d6 >= 0.0 && d5 <= d6 {
            *c
        } else if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
            add(*a, scale(ab, d1 / (d1 - d3)))
        } else if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
            add(*a, scale(ac, d2 / (d2 - d6)))
        } else if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
            add(*b, scale(sub(*c, *b), (d4 - d3) / ((d4 - d3) + (d5 - d6))))
        } else {
            let denom = va + vb + vc;
            let (v, w) = (vb / denom, vc / denom);
            add(*a, add(scale(ab, v), scale(ac, w)))
        }
    };
    let d = sub(p, closest);
    dot(d, d)
}

fn segment_distance_squared(p: Vec3, a: Vec3, b: Vec3) -> f64 {
    let ab = sub(b, a);
    let len2 = dot(ab, ab);
    let t = if len2 > 0.0 {
        (dot(sub(p, a), ab) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let d = sub(p, add(a, scale(ab, t)));
    dot(d, d)
}

/// Intersection over union of the `>= iso` voxel sets. Two empty sets give 1.
pub fn grid_iou(a: &OccupancyGrid, b: &OccupancyGrid, iso: f64) -> Result<f64, MeshingError> {
    check_iso(iso)?;
    if a.shape() != b.shape() {
        return Err(MeshingError::ShapeMismatch {
            left: a.shape(),
            right: b.shape(),
        });
    }
    let iso = iso as f32;
    let (inter, union) = a
        .data()
        .par_chunks(1 << 16)
        .zip(b.data().par_chunks(1 << 16))
        .map(|(x, y)| {
            x.iter().zip(y).fold((0u64, 0u64), |(i, u), (&p, &q)| {
                let (p, q) = (p >= iso, q >= iso);
                (i + (p && q) as u64, u + (p || q) as u64)
            })
        })
        .reduce(|| (0, 0), |l, r| (l.0 + r.0, l.1 + r.1));
    Ok(if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::shapes::{box_mesh, icosphere};

    /// Distance from `p` to the surface of an axis-aligned box.
    fn box_surface_distance(p: Vec3, center: Vec3, half: f64) -> f64 {
        let q: Vec<f64> = (0..3).map(|d| (p[d] - center[d]).abs() - half).collect();
        let outside: f64 = q.iter().map(|v| v.max(0.0).powi(2)).sum::<f64>().sqrt();
        let inside = q.iter().cloned().fold(f64::NEG_INFINITY, f64::max).min(0.0);
        outside + inside.abs()
    }

    #[test]
    fn triangle_distance_matches_dense_sampling() {
        let tri = [[0.0, 0.0, 0.0], [1.0, 0.2, 0.0], [0.3, 0.9, 0.1]];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 400;
        for _ in 0..50 {
            let p = [
                rng.gen_range(-1.0..2.0),
                rng.gen_range(-1.0..2.0),
                rng.gen_range(-1.0..1.0),
            ];
            let mut brute = f64::INFINITY;
            for u in 0..=n {
                for v in 0..=(n - u) {
                    let (s, t) = (u as f64 / n as f64, v as f64 / n as f64);
                    let q = add(
                        tri[0],
                        add(scale(sub(tri[1], tri[0]), s), scale(sub(tri[2], tri[0]), t)),
                    );
                    let d = sub(p, q);
                    brute = brute.min(dot(d, d));
                }
            }
            let exact = point_triangle_distance_squared(p, &tri).sqrt();
            assert!(exact <= brute.sqrt() + 1e-12);
            assert!(brute.sqrt() - exact < 3e-3, "{exact} vs {}", brute.sqrt());
        }
    }

    #[test]
    fn bvh_matches_linear_scan() {
        let mesh = icosphere([0.1, 0.0, -0.2], 0.4, 3);
        let query = ClosestPoint::new(&mesh);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let p = [
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            ];
            let linear = (0..mesh.triangles.len())
                .map(|t| point_triangle_distance_squared(p, &mesh.triangle(t)))
                .fold(f64::INFINITY, f64::min)
                .sqrt();
            assert_eq!(query.distance(p), linear);
        }
    }

    #[test]
    fn samples_lie_on_the_surface_and_are_deterministic() {
        let mesh = box_mesh([0.0; 3], [0.5; 3]);
        let pts = sample_surface(&mesh, 1000, 9).unwrap();
        assert_eq!(pts, sample_surface(&mesh, 1000, 9).unwrap());
        for p in &pts {
            assert!(box_surface_distance(*p, [0.0; 3], 0.5) < 1e-12);
        }
        // Stratification spreads samples evenly over the six equal faces.
        for d in 0..3 {
            for side in [-0.5, 0.5] {
                let on_face = pts.iter().filter(|p| (p[d] - side).abs() < 1e-12).count();
                assert!((on_face as i64 - 167).abs() <= 2, "{on_face}");
            }
        }
    }

    #[test]
    fn chamfer_of_identical_meshes_is_zero() {
        let mesh = icosphere([0.0; 3], 0.5, 3);
        assert!(chamfer(&mesh, &mesh, 20_000).unwrap() <= 1e-4);
        let empty = Mesh::default();
        assert!(matches!(
            chamfer(&mesh, &empty, 10),
            Err(MeshingError::EmptyMesh)
        ));
    }

    #[test]
    fn chamfer_of_shifted_cube() {
        let a = box_mesh([0.0; 3], [0.5; 3]);
        let b = box_mesh([0.1, 0.0, 0.0], [0.5; 3]);
        // Oracle: analytic point-to-box distances on the same sample sets.
        let samples = 20_000;
        let pa = sample_surface(&a, samples, CHAMFER_SEED).unwrap();
        let pb = sample_surface(&b, samples, CHAMFER_SEED).unwrap();
        let oracle = pa
            .iter()
            .map(|&p| box_surface_distance(p, [0.1, 0.0, 0.0], 0.5))
            .sum::<f64>()
            / samples as f64
            + pb.iter()
                .map(|&p| box_surface_distance(p, [0.0; 3], 0.5))
                .sum::<f64>()
                / samples as f64;
        let got = chamfer(&a, &b, samples).unwrap();
        assert!((got - oracle).abs() < 1e-12);
        // Frozen from the analytic expectation of the oracle.
        assert!((got - 0.0671).abs() < 0.0671 * 0.02, "{got}");
        assert_eq!(got, chamfer(&b, &a, samples).unwrap());
    }

    #[test]
    fn iou_cases() {
        let n = 8;
        let octant = |sx: f64, sy: f64| {
            OccupancyGrid::from_fn(n, n, n, move |x, y, _| {
                (x * sx > 0.0 && y * sy > 0.0) as u8 as f32
            })
            .unwrap()
        };
        let (a, b) = (octant(1.0, 1.0), octant(-1.0, 1.0));
        assert_eq!(grid_iou(&a, &a, 0.5).unwrap(), 1.0);
        assert_eq!(grid_iou(&a, &b, 0.5).unwrap(), 0.0);
        assert_eq!(
            grid_iou(&a, &b, 0.5).unwrap(),
            grid_iou(&b, &a, 0.5).unwrap()
        );
        let empty = OccupancyGrid::zeros(n, n, n).unwrap();
        assert_eq!(grid_iou(&empty, &empty, 0.5).unwrap(), 1.0);
        let small = OccupancyGrid::zeros(4, n, n).unwrap();
        assert!(matches!(
            grid_iou(&a, &small, 0.5),
            Err(MeshingError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn iou_against_dilated_sphere() {
        let n = 256;
        let r = 0.3;
        let idx = |v: f64| ((v + 1.0) * n as f64 / 2.0 - 0.5).round() as i64;
        let inside = |i: i64, j: i64, k: i64| {
            let c = |t: i64| -1.0 + (2 * t + 1) as f64 / n as f64;
            c(i).powi(2) + c(j).powi(2) + c(k).powi(2) <= r * r
        };
        let sphere = OccupancyGrid::from_fn(n, n, n, |x, y, z| {
            (x * x + y * y + z * z <= r * r) as u8 as f32
        })
        .unwrap();
        // Dilation by the 6-neighbourhood.
        let dilated = OccupancyGrid::from_fn(n, n, n, |x, y, z| {
            let (i, j, k) = (idx(x), idx(-y), idx(z));
            let hit = inside(i, j, k)
                || [
                    (1, 0, 0),
                    (-1, 0, 0),
                    (0, 1, 0),
                    (0, -1, 0),
                    (0, 0, 1),
                    (0, 0, -1),
                ]
                .iter()
                .any(|&(a, b, c)| inside(i + a, j + b, k + c));
            hit as u8 as f32
        })
        .unwrap();
        let (s, d) = (sphere.count_inside(0.5), dilated.count_inside(0.5));
        let shell = d - s;
        let expected = 1.0 - shell as f64 / d as f64;
        assert_eq!(grid_iou(&sphere, &dilated, 0.5).unwrap(), expected);
        // A 6-neighbour shell is max(|nx|, |ny|, |nz|) voxels thick along
        // the normal n; that averages 0.831 over the sphere.
        let area = 4.0 * std::f64::consts::PI * (r * n as f64 / 2.0).powi(2);
        assert!(
            (shell as f64 / area - 0.831).abs() < 0.05,
            "{shell} vs {area}"
        );
    }
}
