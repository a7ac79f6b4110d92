//! Bounding-volume hierarchy over mesh triangles.
//!
//! Boxes are padded so pruning never discards a triangle the brute-force
//! scans would have counted; query answers match them exactly.

use alloc::vec::Vec;

use crate::geom::Vec3;
use crate::mesh::{point_triangle_distance_squared, ray_triangle, Aabb, RayHit, TriangleMesh};

const LEAF_SIZE: usize = 4;
const BOX_PAD: f64 = 1e-7;

#[derive(Debug, Clone)]
struct Node {
    bounds: Aabb,
    /// Leaf: first triangle slot. Inner: index of the left child (right = left + 1).
    first: u32,
    /// Zero for inner nodes.
    count: u32,
}

#[derive(Debug, Clone)]
pub(crate) struct TriangleBvh {
    nodes: Vec<Node>,
    order: Vec<u32>,
}

impl TriangleBvh {
    pub(crate) fn build(mesh: &TriangleMesh) -> Self {
        let n = mesh.triangles.len();
        let mut boxes = Vec::with_capacity(n);
        let mut centroids = Vec::with_capacity(n);
        for t in 0..n {
            let tri = mesh.triangle(t);
            let b = Aabb::from_points(&tri);
            let pad = BOX_PAD * (1.0 + b.longest_edge());
            boxes.push(b.padded(pad));
            centroids.push((tri[0] + tri[1] + tri[2]) / 3.0);
        }
        let mut order: Vec<u32> = (0..n as u32).collect();
        let mut nodes = Vec::with_capacity(2 * n / LEAF_SIZE + 1);
        if n > 0 {
            nodes.push(Node { bounds: Aabb::empty(), first: 0, count: 0 });
            let mut stack = Vec::new();
            stack.push((0usize, 0usize, n));
            while let Some((node, lo, hi)) = stack.pop() {
                let slice = &mut order[lo..hi];
                let bounds = slice.iter().fold(Aabb::empty(), |b, &t| b.union(boxes[t as usize]));
                if hi - lo <= LEAF_SIZE {
                    nodes[node] = Node { bounds, first: lo as u32, count: (hi - lo) as u32 };
                    continue;
                }
                let cb = slice.iter().fold(Aabb::empty(), |b, &t| b.including(centroids[t as usize]));
                let e = cb.extent();
                let axis = if e.x >= e.y && e.x >= e.z { 0 } else if e.y >= e.z { 1 } else { 2 };
                let mid = slice.len() / 2;
                slice.select_nth_unstable_by(mid, |&a, &b| {
                    centroids[a as usize][axis]
                        .partial_cmp(&centroids[b as usize][axis])
                        .unwrap_or(core::cmp::Ordering::Equal)
                        .then(a.cmp(&b))
                });
                let left = nodes.len();
                nodes.push(Node { bounds: Aabb::empty(), first: 0, count: 0 });
                nodes.push(Node { bounds: Aabb::empty(), first: 0, count: 0 });
                nodes[node] = Node { bounds, first: left as u32, count: 0 };
                stack.push((left, lo, lo + mid));
                stack.push((left + 1, lo + mid, hi));
            }
        }
        Self { nodes, order }
    }

    pub(crate) fn nearest_distance_squared(&self, mesh: &TriangleMesh, p: Vec3) -> f64 {
        let mut best = f64::INFINITY;
        if self.nodes.is_empty() {
            return best;
        }
        let mut stack: Vec<(u32, f64)> = Vec::with_capacity(64);
        stack.push((0, self.nodes[0].bounds.distance_squared(p)));
        while let Some((ni, lb)) = stack.pop() {
            if lb > best {
                continue;
            }
            let node = &self.nodes[ni as usize];
            if node.count > 0 {
                let s = node.first as usize;
                for &t in &self.order[s..s + node.count as usize] {
                    let d = point_triangle_distance_squared(p, &mesh.triangle(t as usize));
                    if d < best {
                        best = d;
                    }
                }
            } else {
                let l = node.first;
                let dl = self.nodes[l as usize].bounds.distance_squared(p);
                let dr = self.nodes[l as usize + 1].bounds.distance_squared(p);
                // nearer child popped first
                if dl <= dr {
                    stack.push((l + 1, dr));
                    stack.push((l, dl));
                } else {
                    stack.push((l, dl));
                    stack.push((l + 1, dr));
                }
            }
        }
        best
    }

    /// Crossing count along the ray and whether any hit was near-degenerate.
    pub(crate) fn count_crossings(&self, mesh: &TriangleMesh, origin: Vec3, dir: Vec3) -> (usize, bool) {
        let (mut count, mut degenerate) = (0, false);
        if self.nodes.is_empty() {
            return (0, false);
        }
        let inv = Vec3::new(1.0 / dir.x, 1.0 / dir.y, 1.0 / dir.z);
        let mut stack: Vec<u32> = Vec::with_capacity(64);
        stack.push(0);
        while let Some(ni) = stack.pop() {
            let node = &self.nodes[ni as usize];
            if !ray_hits_box(&node.bounds, origin, inv) {
                continue;
            }
            if node.count > 0 {
                let s = node.first as usize;
                for &t in &self.order[s..s + node.count as usize] {
                    match ray_triangle(origin, dir, &mesh.triangle(t as usize)) {
                        RayHit::Hit => count += 1,
                        RayHit::Degenerate => degenerate = true,
                        RayHit::Miss => {}
                    }
                }
            } else {
                stack.push(node.first);
                stack.push(node.first + 1);
            }
        }
        (count, degenerate)
    }
}

fn ray_hits_box(b: &Aabb, origin: Vec3, inv: Vec3) -> bool {
    let mut t0 = f64::NEG_INFINITY;
    let mut t1 = f64::INFINITY;
    for i in 0..3 {
        if inv[i].is_infinite() {
            if origin[i] < b.min[i] || origin[i] > b.max[i] {
                return false;
            }
            continue;
        }
        let a = (b.min[i] - origin[i]) * inv[i];
        let c = (b.max[i] - origin[i]) * inv[i];
        t0 = t0.max(a.min(c));
        t1 = t1.min(a.max(c));
    }
    t1 >= t0 && t1 >= -1e-6
}
