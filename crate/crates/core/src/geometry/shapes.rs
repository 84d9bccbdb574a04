//! Procedural test shapes. All are closed, consistently oriented with
//! outward counter-clockwise triangles.

use std::collections::HashMap;

use super::{Mesh, Vec3};

/// Axis-aligned box given by its center and half extents (8 vertices,
/// 12 triangles).
pub fn box_mesh(center: Vec3, half: Vec3) -> Mesh {
    let mut vertices = Vec::with_capacity(8);
    for corner in 0..8 {
        let sx = if corner & 1 == 0 { -1.0 } else { 1.0 };
        let sy = if corner & 2 == 0 { -1.0 } else { 1.0 };
        let sz = if corner & 4 == 0 { -1.0 } else { 1.0 };
        vertices.push([
            center[0] + sx * half[0],
            center[1] + sy * half[1],
            center[2] + sz * half[2],
        ]);
    }
    let triangles = vec![
        // -x
        [0, 4, 6],
        [0, 6, 2],
        // +x
        [1, 3, 7],
        [1, 7, 5],
        // -y
        [0, 1, 5],
        [0, 5, 4],
        // +y
        [2, 6, 7],
        [2, 7, 3],
        // -z
        [0, 2, 3],
        [0, 3, 1],
        // +z
        [4, 5, 7],
        [4, 7, 6],
    ];
    Mesh::new(vertices, triangles)
}

/// Geodesic sphere: an icosahedron subdivided `level` times with every
/// vertex projected onto the sphere. Level `n` has `20 * 4^n` triangles.
pub fn icosphere(center: Vec3, radius: f64, level: u32) -> Mesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut unit: Vec<Vec3> = vec![
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ]
    .into_iter()
    .map(normalized)
    .collect();
    let mut faces: Vec<[u32; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..level {
        let mut midpoints: HashMap<(u32, u32), u32> = HashMap::new();
        let mut next = Vec::with_capacity(faces.len() * 4);
        let mut midpoint = |a: u32, b: u32, unit: &mut Vec<Vec3>| -> u32 {
            let key = (a.min(b), a.max(b));
            *midpoints.entry(key).or_insert_with(|| {
                let (p, q) = (unit[a as usize], unit[b as usize]);
                unit.push(normalized([p[0] + q[0], p[1] + q[1], p[2] + q[2]]));
                (unit.len() - 1) as u32
            })
        };
        for &[a, b, c] in &faces {
            let ab = midpoint(a, b, &mut unit);
            let bc = midpoint(b, c, &mut unit);
            let ca = midpoint(c, a, &mut unit);
            next.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    let vertices = unit
        .into_iter()
        .map(|p| {
            [
                center[0] + radius * p[0],
                center[1] + radius * p[1],
                center[2] + radius * p[2],
            ]
        })
        .collect();
    Mesh::new(vertices, faces)
}

/// Latitude/longitude sphere with `slices` meridian segments and `stacks`
/// latitude bands; `2 * slices * (stacks - 1)` triangles.
pub fn uv_sphere(center: Vec3, radius: f64, slices: u32, stacks: u32) -> Mesh {
    assert!(slices >= 3 && stacks >= 2);
    let mut vertices = vec![[center[0], center[1] + radius, center[2]]];
    for s in 1..stacks {
        let phi = std::f64::consts::PI * s as f64 / stacks as f64;
        for l in 0..slices {
            let theta = std::f64::consts::TAU * l as f64 / slices as f64;
            vertices.push([
                center[0] + radius * phi.sin() * theta.cos(),
                center[1] + radius * phi.cos(),
                center[2] - radius * phi.sin() * theta.sin(),
            ]);
        }
    }
    vertices.push([center[0], center[1] - radius, center[2]]);
    let south = (vertices.len() - 1) as u32;
    let ring = |s: u32, l: u32| 1 + (s - 1) * slices + l % slices;
    let mut triangles = Vec::new();
    for l in 0..slices {
        triangles.push([0, ring(1, l), ring(1, l + 1)]);
    }
    for s in 1..stacks - 1 {
        for l in 0..slices {
            let (a, b) = (ring(s, l), ring(s, l + 1));
            let (c, d) = (ring(s + 1, l), ring(s + 1, l + 1));
            triangles.push([a, c, d]);
            triangles.push([a, d, b]);
        }
    }
    for l in 0..slices {
        triangles.push([south, ring(stacks - 1, l + 1), ring(stacks - 1, l)]);
    }
    Mesh::new(vertices, triangles)
}

fn normalized(p: Vec3) -> Vec3 {
    let n = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
    [p[0] / n, p[1] / n, p[2] / n]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes_are_closed_and_outward() {
        let sphere = icosphere([0.0; 3], 0.5, 3);
        assert_eq!(sphere.triangles.len(), 20 * 64);
        assert!(sphere.is_edge_manifold());
        assert_eq!(sphere.euler_characteristic(), 2);
        assert!(sphere.signed_volume() > 0.0);

        let uv = uv_sphere([0.0; 3], 0.5, 16, 9);
        assert_eq!(uv.triangles.len(), 2 * 16 * 8);
        assert!(uv.is_edge_manifold());
        assert_eq!(uv.euler_characteristic(), 2);
        let exact = 4.0 / 3.0 * std::f64::consts::PI * 0.125;
        let v = uv.signed_volume();
        assert!(v > 0.0 && v < exact);

        let b = box_mesh([0.1, 0.2, 0.3], [0.5, 0.25, 0.125]);
        assert!((b.signed_volume() - 0.125).abs() < 1e-12);
    }
}
