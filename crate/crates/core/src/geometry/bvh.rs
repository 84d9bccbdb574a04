//! Bounding volume hierarchy over triangle footprints in the xy plane.
//!
//! Rays run parallel to z, so only the projected bounds matter. Bounds are
//! kept in the same fixed-point units as the intersection test, which makes
//! the point-in-box rejection exact.

const LEAF_SIZE: usize = 4;

#[derive(Debug, Clone, Copy)]
pub(crate) struct Bounds2 {
    pub min: [i64; 2],
    pub max: [i64; 2],
}

impl Bounds2 {
    const EMPTY: Bounds2 = Bounds2 {
        min: [i64::MAX; 2],
        max: [i64::MIN; 2],
    };

    fn union(self, other: Bounds2) -> Bounds2 {
        Bounds2 {
            min: [self.min[0].min(other.min[0]), self.min[1].min(other.min[1])],
            max: [self.max[0].max(other.max[0]), self.max[1].max(other.max[1])],
        }
    }

    #[inline]
    pub fn contains(&self, p: [i64; 2]) -> bool {
        p[0] >= self.min[0] && p[0] <= self.max[0] && p[1] >= self.min[1] && p[1] <= self.max[1]
    }
}

#[derive(Debug, Clone, Copy)]
struct Node {
    bounds: Bounds2,
    /// Leaf: first item in `order`. Interior: index of the right child (the
    /// left child immediately follows the node).
    index: u32,
    /// Number of items for a leaf, 0 for an interior node.
    count: u32,
}

#[derive(Debug, Clone)]
pub(crate) struct Bvh2 {
    nodes: Vec<Node>,
    order: Vec<u32>,
}

impl Bvh2 {
    /// Builds the hierarchy with median splits along the longer centroid
    /// axis. Ties are broken by item index, so the result depends only on
    /// the input order.
    pub fn build(bounds: &[Bounds2]) -> Bvh2 {
        let mut order: Vec<u32> = (0..bounds.len() as u32).collect();
        let mut nodes = Vec::with_capacity(2 * bounds.len() / LEAF_SIZE + 1);
        if !bounds.is_empty() {
            build_node(bounds, &mut order, 0, &mut nodes);
        }
        Bvh2 { nodes, order }
    }

    /// Calls `visit` with every item whose bounds contain `p`, plus possibly
    /// some leaf neighbours that don't.
    #[inline]
    pub fn for_each_containing(&self, p: [i64; 2], mut visit: impl FnMut(u32)) {
        if self.nodes.is_empty() {
            return;
        }
        let mut stack = [0u32; 64];
        let mut top = 1;
        while top > 0 {
            top -= 1;
            let at = stack[top];
            let node = &self.nodes[at as usize];
            if !node.bounds.contains(p) {
                continue;
            }
            if node.count > 0 {
                let first = node.index as usize;
                for &item in &self.order[first..first + node.count as usize] {
                    visit(item);
                }
            } else {
                stack[top] = node.index;
                stack[top + 1] = at + 1;
                top += 2;
            }
        }
    }
}

fn build_node(bounds: &[Bounds2], order: &mut [u32], first: usize, nodes: &mut Vec<Node>) -> u32 {
    let total = order
        .iter()
        .fold(Bounds2::EMPTY, |acc, &i| acc.union(bounds[i as usize]));
    let me = nodes.len() as u32;
    nodes.push(Node {
        bounds: total,
        index: first as u32,
        count: order.len() as u32,
    });
    if order.len() <= LEAF_SIZE {
        return me;
    }
    // Doubled centroids stay in integers.
    let centroid = |i: u32, axis: usize| {
        let b = &bounds[i as usize];
        b.min[axis] as i128 + b.max[axis] as i128
    };
    let (mut lo, mut hi) = ([i128::MAX; 2], [i128::MIN; 2]);
    for &i in order.iter() {
        for axis in 0..2 {
            lo[axis] = lo[axis].min(centroid(i, axis));
            hi[axis] = hi[axis].max(centroid(i, axis));
        }
    }
    let axis = if hi[0] - lo[0] >= hi[1] - lo[1] { 0 } else { 1 };
    order.sort_unstable_by(|&a, &b| centroid(a, axis).cmp(&centroid(b, axis)).then(a.cmp(&b)));
    let mid = order.len() / 2;
    let (left, right) = order.split_at_mut(mid);
    nodes[me as usize].count = 0;
    build_node(bounds, left, first, nodes);
    let right_index = build_node(bounds, right, first + mid, nodes);
    nodes[me as usize].index = right_index;
    me
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_every_containing_box() {
        let mut boxes = Vec::new();
        for i in 0..37i64 {
            for j in 0..11i64 {
                boxes.push(Bounds2 {
                    min: [i * 10, j * 7],
                    max: [i * 10 + 15, j * 7 + 3 + (i % 4)],
                });
            }
        }
        let bvh = Bvh2::build(&boxes);
        for p in [[0, 0], [12, 5], [150, 40], [369, 75], [-1, 0], [1000, 1000]] {
            let mut found = Vec::new();
            bvh.for_each_containing(p, |i| {
                if boxes[i as usize].contains(p) {
                    found.push(i)
                }
            });
            found.sort_unstable();
            let expected: Vec<u32> = (0..boxes.len() as u32)
                .filter(|&i| boxes[i as usize].contains(p))
                .collect();
            assert_eq!(found, expected, "point {p:?}");
        }
    }

    #[test]
    fn empty_hierarchy_visits_nothing() {
        let bvh = Bvh2::build(&[]);
        bvh.for_each_containing([0, 0], |_| panic!("visited"));
    }
}
