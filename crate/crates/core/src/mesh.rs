//! Indexed triangle meshes: cleaning, alignment and the geometric queries
//! consumed by the distance-field transform and the flight kernel.
//!
//! Frame convention after [`align_mesh`]: +x forward (longest principal
//! axis), +z spanwise, +y up.

#[allow(unused_imports)] // float methods come from libm under no_std
use num_traits::Float;
use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bvh::TriangleBvh;
use crate::geom::{symmetric_eigen, Mat3, Vec3};

/// Triangles with area at or below this are treated as degenerate (m²).
pub const DEGENERATE_AREA: f64 = 1e-12;

/// Ray hits closer than this to a triangle edge or vertex trigger a retry.
pub const RAY_DEGENERACY_TOLERANCE: f64 = 1e-9;

/// Retries with a fresh random direction after a near-degenerate hit.
pub const MAX_RAY_RETRIES: u32 = 16;

/// Default silhouette rasterization resolution per side.
pub const DEFAULT_RASTER_RESOLUTION: usize = 256;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MeshError {
    #[error("mesh has no triangles")]
    Empty,
    #[error("triangle {triangle} references vertex {index} but mesh has {vertex_count} vertices")]
    IndexOutOfRange { triangle: usize, index: u32, vertex_count: usize },
    #[error("every triangle is degenerate")]
    AllDegenerate,
    #[error("mesh has non-finite vertex {0}")]
    NonFinite(usize),
}

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    /// Box spanning `a` and `b` in any corner order.
    pub fn new(a: Vec3, b: Vec3) -> Self {
        Self { min: a.min(b), max: a.max(b) }
    }

    pub fn empty() -> Self {
        Self { min: Vec3::splat(f64::INFINITY), max: Vec3::splat(f64::NEG_INFINITY) }
    }

    pub fn from_points<'a>(pts: impl IntoIterator<Item = &'a Vec3>) -> Self {
        pts.into_iter().fold(Self::empty(), |b, p| b.including(*p))
    }

    pub fn including(self, p: Vec3) -> Self {
        Self { min: self.min.min(p), max: self.max.max(p) }
    }

    pub fn union(self, o: Aabb) -> Self {
        Self { min: self.min.min(o.min), max: self.max.max(o.max) }
    }

    pub fn is_empty(&self) -> bool {
        self.min.x > self.max.x || self.min.y > self.max.y || self.min.z > self.max.z
    }

    pub fn center(&self) -> Vec3 {
        (self.min + self.max) * 0.5
    }

    pub fn extent(&self) -> Vec3 {
        self.max - self.min
    }

    pub fn longest_edge(&self) -> f64 {
        self.extent().max_element()
    }

    pub fn padded(&self, pad: f64) -> Self {
        Self { min: self.min - Vec3::splat(pad), max: self.max + Vec3::splat(pad) }
    }

    pub fn contains(&self, p: Vec3) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    /// True when `other` lies strictly inside this box.
    pub fn strictly_contains(&self, other: &Aabb) -> bool {
        (0..3).all(|i| other.min[i] > self.min[i] && other.max[i] < self.max[i])
    }

    pub fn distance_squared(&self, p: Vec3) -> f64 {
        let mut d = 0.0;
        for i in 0..3 {
            let v = if p[i] < self.min[i] {
                self.min[i] - p[i]
            } else if p[i] > self.max[i] {
                p[i] - self.max[i]
            } else {
                0.0
            };
            d += v * v;
        }
        d
    }
}

/// Indexed triangle surface in meters.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TriangleMesh {
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[u32; 3]>,
}

impl TriangleMesh {
    /// Builds a mesh, checking every index against the vertex count.
    pub fn new(vertices: Vec<Vec3>, triangles: Vec<[u32; 3]>) -> Result<Self, MeshError> {
        for (t, tri) in triangles.iter().enumerate() {
            for &i in tri {
                if i as usize >= vertices.len() {
                    return Err(MeshError::IndexOutOfRange {
                        triangle: t,
                        index: i,
                        vertex_count: vertices.len(),
                    });
                }
            }
        }
        if let Some(i) = vertices.iter().position(|v| !v.is_finite()) {
            return Err(MeshError::NonFinite(i));
        }
        Ok(Self { vertices, triangles })
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn triangle(&self, t: usize) -> [Vec3; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a as usize], self.vertices[b as usize], self.vertices[c as usize]]
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangle(t);
        0.5 * (b - a).cross(c - a).norm()
    }

    pub fn surface_area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.triangle_area(t)).sum()
    }

    pub fn bounds(&self) -> Aabb {
        Aabb::from_points(&self.vertices)
    }

    /// Applies `f` to every vertex.
    pub fn map_vertices(&self, f: impl Fn(Vec3) -> Vec3) -> TriangleMesh {
        TriangleMesh {
            vertices: self.vertices.iter().map(|&v| f(v)).collect(),
            triangles: self.triangles.clone(),
        }
    }

    /// Reverses the winding of every triangle.
    pub fn flipped(&self) -> TriangleMesh {
        TriangleMesh {
            vertices: self.vertices.clone(),
            triangles: self.triangles.iter().map(|&[a, b, c]| [a, c, b]).collect(),
        }
    }

    /// Undirected edge usage statistics.
    pub fn edge_report(&self) -> EdgeReport {
        let mut edges: Vec<(u32, u32)> = Vec::with_capacity(self.triangles.len() * 3);
        for &[a, b, c] in &self.triangles {
            for (u, v) in [(a, b), (b, c), (c, a)] {
                edges.push((u.min(v), u.max(v)));
            }
        }
        edges.sort_unstable();
        let mut report = EdgeReport::default();
        let mut i = 0;
        while i < edges.len() {
            let mut j = i + 1;
            while j < edges.len() && edges[j] == edges[i] {
                j += 1;
            }
            report.edges += 1;
            match j - i {
                1 => report.boundary += 1,
                2 => {}
                _ => report.non_manifold += 1,
            }
            i = j;
        }
        report
    }

    pub fn boundary_edge_count(&self) -> usize {
        self.edge_report().boundary
    }

    /// Directed edges that appear twice in the same direction indicate
    /// inconsistent winding between neighbours.
    pub fn inconsistent_winding_count(&self) -> usize {
        let mut edges: Vec<(u32, u32)> = Vec::with_capacity(self.triangles.len() * 3);
        for &[a, b, c] in &self.triangles {
            edges.extend([(a, b), (b, c), (c, a)]);
        }
        edges.sort_unstable();
        edges.windows(2).filter(|w| w[0] == w[1]).count()
    }

    /// Concatenates two meshes without welding.
    pub fn merged(&self, other: &TriangleMesh) -> TriangleMesh {
        let off = self.vertices.len() as u32;
        let mut out = self.clone();
        out.vertices.extend_from_slice(&other.vertices);
        out.triangles.extend(other.triangles.iter().map(|&[a, b, c]| [a + off, b + off, c + off]));
        out
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EdgeReport {
    pub edges: usize,
    /// Edges used by exactly one triangle.
    pub boundary: usize,
    /// Edges used by more than two triangles.
    pub non_manifold: usize,
}

impl EdgeReport {
    pub fn is_closed(&self) -> bool {
        self.boundary == 0 && self.non_manifold == 0
    }
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self { parent: (0..n).collect() }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // smaller root wins so labels are order-stable
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

fn position_key(v: Vec3) -> [u64; 3] {
    // +0.0 and -0.0 weld together
    let k = |x: f64| if x == 0.0 { 0u64 } else { x.to_bits() };
    [k(v.x), k(v.y), k(v.z)]
}

/// Removes degenerate triangles, welds coincident vertices and keeps only
/// the connected component with the largest total surface area.
///
/// Vertex order of survivors is preserved (first occurrence wins on weld).
pub fn clean_mesh(mesh: &TriangleMesh) -> Result<TriangleMesh, MeshError> {
    if mesh.is_empty() {
        return Err(MeshError::Empty);
    }
    // weld bitwise-identical positions
    let mut canon: Vec<u32> = Vec::with_capacity(mesh.vertices.len());
    let mut seen: BTreeMap<[u64; 3], u32> = BTreeMap::new();
    for (i, &v) in mesh.vertices.iter().enumerate() {
        let id = *seen.entry(position_key(v)).or_insert(i as u32);
        canon.push(id);
    }
    let mut tris: Vec<([u32; 3], f64)> = Vec::with_capacity(mesh.triangles.len());
    for t in 0..mesh.triangles.len() {
        let [a, b, c] = mesh.triangles[t];
        let w = [canon[a as usize], canon[b as usize], canon[c as usize]];
        if w[0] == w[1] || w[1] == w[2] || w[0] == w[2] {
            continue;
        }
        let area = mesh.triangle_area(t);
        if area > DEGENERATE_AREA {
            tris.push((w, area));
        }
    }
    if tris.is_empty() {
        return Err(MeshError::AllDegenerate);
    }

    let mut uf = UnionFind::new(mesh.vertices.len());
    for (w, _) in &tris {
        uf.union(w[0] as usize, w[1] as usize);
        uf.union(w[1] as usize, w[2] as usize);
    }
    let mut area_by_root: BTreeMap<usize, f64> = BTreeMap::new();
    let mut first_seen: Vec<usize> = Vec::new();
    for (w, a) in &tris {
        let r = uf.find(w[0] as usize);
        let e = area_by_root.entry(r).or_insert_with(|| {
            first_seen.push(r);
            0.0
        });
        *e += *a;
    }
    let mut keep_root = first_seen[0];
    for &r in &first_seen[1..] {
        if area_by_root[&r] > area_by_root[&keep_root] {
            keep_root = r;
        }
    }

    let mut remap = vec![u32::MAX; mesh.vertices.len()];
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    for (w, _) in &tris {
        if uf.find(w[0] as usize) != keep_root {
            continue;
        }
        triangles.push(*w);
    }
    // survivors keep their relative order
    let mut used = vec![false; mesh.vertices.len()];
    for w in &triangles {
        for &i in w {
            used[i as usize] = true;
        }
    }
    for (i, &u) in used.iter().enumerate() {
        if u {
            remap[i] = vertices.len() as u32;
            vertices.push(mesh.vertices[i]);
        }
    }
    for w in &mut triangles {
        for i in w.iter_mut() {
            *i = remap[*i as usize];
        }
    }
    Ok(TriangleMesh { vertices, triangles })
}

/// How [`align_mesh`] transformed its input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Alignment {
    /// Rows are the old-frame directions mapped onto new x, y, z.
    pub rotation: Mat3,
    /// Vertex centroid used as the rotation pivot.
    pub pivot: Vec3,
    pub translation: Vec3,
    pub scale: f64,
    /// Set when the covariance was degenerate and no rotation was applied.
    pub rotation_skipped: bool,
}

impl Alignment {
    pub fn apply(&self, p: Vec3) -> Vec3 {
        (self.rotation.mul_vec(p - self.pivot) + self.translation) * self.scale
    }
}

/// Rotates the mesh onto its principal axes, centers its bounding box on the
/// origin and scales the longest box edge to 1 m.
///
/// Largest-variance axis goes to +x and the second to +z (span), leaving the
/// smallest on +y (up). Eigenvector signs are chosen so the largest-magnitude
/// component is positive, then y is rebuilt as z × x to keep handedness.
pub fn align_mesh(mesh: &TriangleMesh) -> Result<(TriangleMesh, Alignment), MeshError> {
    if mesh.is_empty() {
        return Err(MeshError::Empty);
    }
    let n = mesh.vertices.len() as f64;
    let centroid = mesh.vertices.iter().fold(Vec3::ZERO, |a, &v| a + v) / n;
    let mut cov = [[0.0f64; 3]; 3];
    for &v in &mesh.vertices {
        let d = v - centroid;
        for i in 0..3 {
            for j in 0..3 {
                cov[i][j] += d[i] * d[j];
            }
        }
    }
    for row in cov.iter_mut() {
        for c in row.iter_mut() {
            *c /= n;
        }
    }
    let (vals, vecs) = symmetric_eigen(Mat3(cov));
    let tol = 1e-9 * vals[0].abs().max(f64::MIN_POSITIVE);
    let degenerate = vals[2] <= tol || (vals[0] - vals[2]) <= tol;

    let rotation = if degenerate {
        Mat3::IDENTITY
    } else {
        let orient = |v: Vec3| {
            let a = v.abs();
            let i = if a.x >= a.y && a.x >= a.z { 0 } else if a.y >= a.z { 1 } else { 2 };
            if v[i] < 0.0 { -v } else { v }
        };
        let ex = orient(vecs[0]).normalized();
        let ez = orient(vecs[1]).normalized();
        let ey = ez.cross(ex).normalized();
        Mat3::from_rows(ex, ey, ez)
    };
    let rotated: Vec<Vec3> = mesh.vertices.iter().map(|&v| rotation.mul_vec(v - centroid)).collect();
    let b = Aabb::from_points(&rotated);
    let longest = b.longest_edge();
    if longest <= 0.0 {
        return Err(MeshError::AllDegenerate);
    }
    let alignment = Alignment {
        rotation,
        pivot: centroid,
        translation: -b.center(),
        scale: 1.0 / longest,
        rotation_skipped: degenerate,
    };
    let vertices = rotated.iter().map(|&v| (v + alignment.translation) * alignment.scale).collect();
    Ok((TriangleMesh { vertices, triangles: mesh.triangles.clone() }, alignment))
}

/// Closest point on triangle `abc` to `p`.
pub fn closest_point_on_triangle(p: Vec3, a: Vec3, b: Vec3, c: Vec3) -> Vec3 {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(ap);
    let d2 = ac.dot(ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return a;
    }
    let bp = p - b;
    let d3 = ab.dot(bp);
    let d4 = ac.dot(bp);
    if d3 >= 0.0 && d4 <= d3 {
        return b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return a + ab * v;
    }
    let cp = p - c;
    let d5 = ab.dot(cp);
    let d6 = ac.dot(cp);
    if d6 >= 0.0 && d5 <= d6 {
        return c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return a + ac * w;
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return b + (c - b) * w;
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    a + ab * v + ac * w
}

pub(crate) fn point_triangle_distance_squared(p: Vec3, tri: &[Vec3; 3]) -> f64 {
    (p - closest_point_on_triangle(p, tri[0], tri[1], tri[2])).norm_squared()
}

/// Exact unsigned distance from `p` to the mesh surface, scanning every
/// triangle. See [`MeshIndex`] for the accelerated equivalent.
pub fn nearest_surface_distance(mesh: &TriangleMesh, p: Vec3) -> f64 {
    let mut best = f64::INFINITY;
    for t in 0..mesh.triangles.len() {
        let d = point_triangle_distance_squared(p, &mesh.triangle(t));
        if d < best {
            best = d;
        }
    }
    best.sqrt()
}

/// Outcome of a ray/triangle intersection test.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum RayHit {
    Miss,
    Hit,
    /// Too close to an edge, a vertex, or the ray origin to count reliably.
    Degenerate,
}

pub(crate) fn ray_triangle(origin: Vec3, dir: Vec3, tri: &[Vec3; 3]) -> RayHit {
    let e1 = tri[1] - tri[0];
    let e2 = tri[2] - tri[0];
    let normal = e1.cross(e2);
    let twice_area = normal.norm();
    let pvec = dir.cross(e2);
    let det = e1.dot(pvec);
    if det.abs() <= 1e-14 * e1.norm() * e2.norm() {
        // parallel; only an in-plane origin is ambiguous
        if twice_area > 0.0
            && ((origin - tri[0]).dot(normal) / twice_area).abs() <= RAY_DEGENERACY_TOLERANCE
            && Aabb::from_points(tri).padded(RAY_DEGENERACY_TOLERANCE).contains(origin)
        {
            return RayHit::Degenerate;
        }
        return RayHit::Miss;
    }
    let inv = 1.0 / det;
    let tvec = origin - tri[0];
    let u = tvec.dot(pvec) * inv;
    let qvec = tvec.cross(e1);
    let v = dir.dot(qvec) * inv;
    let t = e2.dot(qvec) * inv;
    let w = 1.0 - u - v;
    if t < -RAY_DEGENERACY_TOLERANCE {
        return RayHit::Miss;
    }
    // signed distance of the hit point to each edge, opposite each vertex
    let edge_dist = [
        w * twice_area / (tri[2] - tri[1]).norm(),
        u * twice_area / e2.norm(),
        v * twice_area / e1.norm(),
    ];
    if edge_dist.iter().any(|&d| d < -RAY_DEGENERACY_TOLERANCE) {
        return RayHit::Miss;
    }
    if t <= RAY_DEGENERACY_TOLERANCE || edge_dist.iter().any(|&d| d <= RAY_DEGENERACY_TOLERANCE) {
        return RayHit::Degenerate;
    }
    RayHit::Hit
}

/// Deterministic sequence of ray directions for parity tests.
pub(crate) struct RayDirections {
    rng: ChaCha8Rng,
}

impl RayDirections {
    const SEED: u64 = 0x5eed_0f_2a7_u64;

    pub(crate) fn new() -> Self {
        Self { rng: ChaCha8Rng::seed_from_u64(Self::SEED) }
    }

    pub(crate) fn next_dir(&mut self) -> Vec3 {
        loop {
            let v = Vec3::new(
                self.rng.random::<f64>() * 2.0 - 1.0,
                self.rng.random::<f64>() * 2.0 - 1.0,
                self.rng.random::<f64>() * 2.0 - 1.0,
            );
            let n = v.norm();
            if n > 0.1 && n <= 1.0 {
                return v / n;
            }
        }
    }
}

/// Result of a point-containment query.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Containment {
    pub inside: bool,
    /// Directions discarded because of near-degenerate hits.
    pub retries: u32,
    /// Every attempted direction was degenerate; `inside` is the last parity.
    pub unresolved: bool,
    /// False when the mesh has boundary edges, so parity may be ill-defined.
    pub watertight: bool,
}

pub(crate) fn parity_query(
    mut cast: impl FnMut(Vec3) -> (usize, bool),
    watertight: bool,
) -> Containment {
    let mut dirs = RayDirections::new();
    let mut last = false;
    for attempt in 0..=MAX_RAY_RETRIES {
        let (crossings, degenerate) = cast(dirs.next_dir());
        last = crossings % 2 == 1;
        if !degenerate {
            return Containment { inside: last, retries: attempt, unresolved: false, watertight };
        }
    }
    Containment { inside: last, retries: MAX_RAY_RETRIES, unresolved: true, watertight }
}

/// Ray-parity containment test over every triangle.
pub fn point_inside(mesh: &TriangleMesh, p: Vec3) -> Containment {
    let watertight = mesh.boundary_edge_count() == 0;
    parity_query(
        |dir| {
            let (mut count, mut degenerate) = (0, false);
            for t in 0..mesh.triangles.len() {
                match ray_triangle(p, dir, &mesh.triangle(t)) {
                    RayHit::Hit => count += 1,
                    RayHit::Degenerate => degenerate = true,
                    RayHit::Miss => {}
                }
            }
            (count, degenerate)
        },
        watertight,
    )
}

/// Silhouette areas of an aligned mesh.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionAreas {
    /// Silhouette on the y–z plane, seen along x.
    pub forward: f64,
    /// Silhouette on the x–z plane, seen along y.
    pub top: f64,
}

impl ProjectionAreas {
    pub fn ratio(&self) -> f64 {
        self.forward / self.top
    }
}

/// Rasterized coverage area of the mesh projected along `drop_axis`.
pub fn silhouette_area(mesh: &TriangleMesh, drop_axis: usize, resolution: usize) -> f64 {
    let (ua, va) = match drop_axis {
        0 => (1, 2),
        1 => (0, 2),
        _ => (0, 1),
    };
    let b = mesh.bounds();
    let (u0, v0) = (b.min[ua], b.min[va]);
    let (du, dv) = (b.max[ua] - u0, b.max[va] - v0);
    if !(du > 0.0 && dv > 0.0) || resolution == 0 {
        return 0.0;
    }
    let (cu, cv) = (du / resolution as f64, dv / resolution as f64);
    let mut covered = vec![false; resolution * resolution];
    for t in 0..mesh.triangles.len() {
        let tri = mesh.triangle(t);
        let p: [(f64, f64); 3] = [
            (tri[0][ua], tri[0][va]),
            (tri[1][ua], tri[1][va]),
            (tri[2][ua], tri[2][va]),
        ];
        let area2 = (p[1].0 - p[0].0) * (p[2].1 - p[0].1) - (p[2].0 - p[0].0) * (p[1].1 - p[0].1);
        if area2 == 0.0 {
            continue;
        }
        let s = area2.signum();
        let min_u = p[0].0.min(p[1].0).min(p[2].0);
        let max_u = p[0].0.max(p[1].0).max(p[2].0);
        let min_v = p[0].1.min(p[1].1).min(p[2].1);
        let max_v = p[0].1.max(p[1].1).max(p[2].1);
        let cell = |x: f64, o: f64, c: f64| ((x - o) / c - 0.5).floor();
        let i0 = (cell(min_u, u0, cu) as i64 + 1).max(0) as usize;
        let i1 = (cell(max_u, u0, cu) as i64).min(resolution as i64 - 1);
        let j0 = (cell(min_v, v0, cv) as i64 + 1).max(0) as usize;
        let j1 = (cell(max_v, v0, cv) as i64).min(resolution as i64 - 1);
        if i1 < 0 || j1 < 0 {
            continue;
        }
        for j in j0..=j1 as usize {
            let y = v0 + (j as f64 + 0.5) * cv;
            for i in i0..=i1 as usize {
                let idx = j * resolution + i;
                if covered[idx] {
                    continue;
                }
                let x = u0 + (i as f64 + 0.5) * cu;
                let e = |a: (f64, f64), b: (f64, f64)| s * ((b.0 - a.0) * (y - a.1) - (x - a.0) * (b.1 - a.1));
                if e(p[0], p[1]) >= 0.0 && e(p[1], p[2]) >= 0.0 && e(p[2], p[0]) >= 0.0 {
                    covered[idx] = true;
                }
            }
        }
    }
    covered.iter().filter(|&&c| c).count() as f64 * cu * cv
}

/// Forward and top silhouette areas at the given raster resolution.
pub fn projection_areas(mesh: &TriangleMesh, resolution: usize) -> Result<ProjectionAreas, MeshError> {
    if mesh.is_empty() {
        return Err(MeshError::Empty);
    }
    Ok(ProjectionAreas {
        forward: silhouette_area(mesh, 0, resolution),
        top: silhouette_area(mesh, 1, resolution),
    })
}

/// Enclosed volume with its watertightness status.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Volume {
    pub volume: f64,
    pub watertight: bool,
}

/// Absolute signed-tetrahedra volume.
pub fn enclosed_volume(mesh: &TriangleMesh) -> Volume {
    let mut six_v = 0.0;
    for t in 0..mesh.triangles.len() {
        let [a, b, c] = mesh.triangle(t);
        six_v += a.dot(b.cross(c));
    }
    Volume { volume: (six_v / 6.0).abs(), watertight: mesh.boundary_edge_count() == 0 }
}

/// Signed volume; positive when triangle normals point outward.
pub fn signed_volume(mesh: &TriangleMesh) -> f64 {
    (0..mesh.triangles.len())
        .map(|t| {
            let [a, b, c] = mesh.triangle(t);
            a.dot(b.cross(c))
        })
        .sum::<f64>()
        / 6.0
}

/// A mesh paired with a triangle hierarchy for repeated queries.
///
/// Answers are bit-identical to the brute-force [`nearest_surface_distance`]
/// and [`point_inside`].
pub struct MeshIndex<'a> {
    mesh: &'a TriangleMesh,
    bvh: TriangleBvh,
    watertight: bool,
}

impl<'a> MeshIndex<'a> {
    pub fn new(mesh: &'a TriangleMesh) -> Self {
        Self { bvh: TriangleBvh::build(mesh), watertight: mesh.boundary_edge_count() == 0, mesh }
    }

    pub fn mesh(&self) -> &TriangleMesh {
        self.mesh
    }

    pub fn is_watertight(&self) -> bool {
        self.watertight
    }

    pub fn distance(&self, p: Vec3) -> f64 {
        self.bvh.nearest_distance_squared(self.mesh, p).sqrt()
    }

    pub fn contains(&self, p: Vec3) -> Containment {
        parity_query(|dir| self.bvh.count_crossings(self.mesh, p, dir), self.watertight)
    }
}

/// Axis-aligned box mesh with outward winding (12 triangles).
pub fn box_mesh(min: Vec3, max: Vec3) -> TriangleMesh {
    let v = |i: usize| {
        Vec3::new(
            if i & 1 == 0 { min.x } else { max.x },
            if i & 2 == 0 { min.y } else { max.y },
            if i & 4 == 0 { min.z } else { max.z },
        )
    };
    let vertices = (0..8).map(v).collect();
    let triangles = vec![
        [0, 2, 3], [0, 3, 1], // -z
        [4, 5, 7], [4, 7, 6], // +z
        [0, 1, 5], [0, 5, 4], // -y
        [2, 6, 7], [2, 7, 3], // +y
        [0, 4, 6], [0, 6, 2], // -x
        [1, 3, 7], [1, 7, 5], // +x
    ];
    TriangleMesh { vertices, triangles }
}

/// Icosphere: a subdivided icosahedron with vertices on the sphere.
pub fn icosphere(center: Vec3, radius: f64, subdivisions: u32) -> TriangleMesh {
    let phi = (1.0 + 5.0f64.sqrt()) / 2.0;
    let mut verts: Vec<Vec3> = [
        (-1.0, phi, 0.0), (1.0, phi, 0.0), (-1.0, -phi, 0.0), (1.0, -phi, 0.0),
        (0.0, -1.0, phi), (0.0, 1.0, phi), (0.0, -1.0, -phi), (0.0, 1.0, -phi),
        (phi, 0.0, -1.0), (phi, 0.0, 1.0), (-phi, 0.0, -1.0), (-phi, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Vec3::new(x, y, z).normalized())
    .collect();
    let mut tris: Vec<[u32; 3]> = vec![
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut mid: BTreeMap<(u32, u32), u32> = BTreeMap::new();
        let mut next = Vec::with_capacity(tris.len() * 4);
        let mut midpoint = |a: u32, b: u32, verts: &mut Vec<Vec3>| -> u32 {
            let key = (a.min(b), a.max(b));
            *mid.entry(key).or_insert_with(|| {
                verts.push(((verts[a as usize] + verts[b as usize]) * 0.5).normalized());
                verts.len() as u32 - 1
            })
        };
        for &[a, b, c] in &tris {
            let ab = midpoint(a, b, &mut verts);
            let bc = midpoint(b, c, &mut verts);
            let ca = midpoint(c, a, &mut verts);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        tris = next;
    }
    TriangleMesh { vertices: verts.into_iter().map(|v| center + v * radius).collect(), triangles: tris }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_cube() -> TriangleMesh {
        box_mesh(Vec3::splat(-0.5), Vec3::splat(0.5))
    }

    #[test]
    fn cube_distance_and_containment() {
        let m = unit_cube();
        assert_eq!(nearest_surface_distance(&m, Vec3::ZERO), 0.5);
        assert_eq!(nearest_surface_distance(&m, Vec3::splat(0.5)), 0.0);
        assert!(point_inside(&m, Vec3::ZERO).inside);
        assert!(!point_inside(&m, Vec3::new(2.0, 0.0, 0.0)).inside);
        assert!(point_inside(&m, Vec3::ZERO).watertight);
    }

    #[test]
    fn cube_volume_and_winding() {
        let m = unit_cube();
        assert!((enclosed_volume(&m).volume - 1.0).abs() < 1e-15);
        assert!(signed_volume(&m) > 0.0);
        assert!((enclosed_volume(&m.flipped()).volume - 1.0).abs() < 1e-15);
        assert!(m.edge_report().is_closed());
        assert_eq!(m.inconsistent_winding_count(), 0);
    }

    #[test]
    fn clean_drops_floating_patch() {
        let cube = unit_cube();
        let patch = TriangleMesh {
            vertices: vec![Vec3::new(10.0, 0.0, 0.0), Vec3::new(11.0, 0.0, 0.0), Vec3::new(10.0, 1.0, 0.0)],
            triangles: vec![[0, 1, 2]],
        };
        let cleaned = clean_mesh(&cube.merged(&patch)).unwrap();
        assert_eq!(cleaned, cube);
    }

    #[test]
    fn clean_keeps_larger_area_component() {
        // areas 6 m² and 24 m²
        let small = box_mesh(Vec3::ZERO, Vec3::splat(1.0));
        let big = box_mesh(Vec3::splat(5.0), Vec3::splat(7.0));
        assert!((small.surface_area() - 6.0).abs() < 1e-12);
        assert!((big.surface_area() - 24.0).abs() < 1e-12);
        let cleaned = clean_mesh(&small.merged(&big)).unwrap();
        assert_eq!(cleaned, big);
        let cleaned = clean_mesh(&big.merged(&small)).unwrap();
        assert_eq!(cleaned, big);
    }

    #[test]
    fn clean_rejects_all_degenerate() {
        let m = TriangleMesh {
            vertices: vec![Vec3::ZERO, Vec3::new(1.0, 0.0, 0.0), Vec3::new(2.0, 0.0, 0.0)],
            triangles: vec![[0, 1, 2]],
        };
        assert_eq!(clean_mesh(&m), Err(MeshError::AllDegenerate));
        assert_eq!(clean_mesh(&TriangleMesh::default()), Err(MeshError::Empty));
    }

    #[test]
    fn clean_welds_triangle_soup() {
        // STL-style soup: every triangle has private vertices
        let cube = unit_cube();
        let mut soup = TriangleMesh::default();
        for t in 0..cube.triangles.len() {
            let base = soup.vertices.len() as u32;
            soup.vertices.extend(cube.triangle(t));
            soup.triangles.push([base, base + 1, base + 2]);
        }
        let cleaned = clean_mesh(&soup).unwrap();
        assert_eq!(cleaned.vertices.len(), 8);
        assert_eq!(cleaned.triangles.len(), 12);
        assert!(cleaned.edge_report().is_closed());
    }

    #[test]
    fn index_validation() {
        let err = TriangleMesh::new(vec![Vec3::ZERO], vec![[0, 0, 1]]).unwrap_err();
        assert!(matches!(err, MeshError::IndexOutOfRange { index: 1, .. }));
    }

    #[test]
    fn align_fixed_point_on_unit_box() {
        let m = unit_cube();
        let (a, info) = align_mesh(&m).unwrap();
        assert!(info.rotation_skipped);
        for (p, q) in a.vertices.iter().zip(&m.vertices) {
            assert!((*p - *q).norm() < 1e-9);
        }
    }

    #[test]
    fn align_translates_offset_mesh() {
        let m = box_mesh(Vec3::splat(4.5), Vec3::splat(5.5));
        let (a, _) = align_mesh(&m).unwrap();
        assert!(a.bounds().center().norm() < 1e-9);
        assert!((a.bounds().longest_edge() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn align_keeps_handedness() {
        let m = box_mesh(Vec3::new(0.0, 0.0, 0.0), Vec3::new(0.3, 0.1, 2.0));
        let (a, info) = align_mesh(&m).unwrap();
        assert!((info.rotation.determinant() - 1.0).abs() < 1e-12);
        assert!(signed_volume(&a) > 0.0);
        let e = a.bounds().extent();
        assert!((e.x - 1.0).abs() < 1e-9);
        assert!(e.z > e.y);
    }

    #[test]
    fn plate_silhouettes() {
        let plate = box_mesh(Vec3::new(-0.5, -0.005, -0.5), Vec3::new(0.5, 0.005, 0.5));
        let a = projection_areas(&plate, 256).unwrap();
        assert!((a.top - 1.0).abs() < 1e-9);
        assert!((a.forward - 0.01).abs() < 1e-9);
    }

    #[test]
    fn cube_silhouettes() {
        let a = projection_areas(&unit_cube(), 256).unwrap();
        let cell = 1.0 / 256.0;
        assert!((a.forward - 1.0).abs() <= cell);
        assert!((a.top - 1.0).abs() <= cell);
    }

    #[test]
    fn sphere_silhouette_and_volume() {
        let s = icosphere(Vec3::ZERO, 0.5, 4);
        let a = projection_areas(&s, 256).unwrap();
        let disk = core::f64::consts::PI * 0.25;
        assert!((a.forward - disk).abs() / disk < 0.01, "{}", a.forward);
        assert!((a.top - disk).abs() / disk < 0.01, "{}", a.top);
        let ball = 4.0 / 3.0 * core::f64::consts::PI * 0.125;
        assert!((enclosed_volume(&s).volume - ball).abs() / ball < 0.01);
    }

    #[test]
    fn empty_mesh_errors() {
        assert_eq!(projection_areas(&TriangleMesh::default(), 8), Err(MeshError::Empty));
        assert!(align_mesh(&TriangleMesh::default()).is_err());
    }

    #[test]
    fn open_mesh_flags_watertightness() {
        let mut m = unit_cube();
        m.triangles.pop();
        assert!(!point_inside(&m, Vec3::ZERO).watertight);
        assert!(!enclosed_volume(&m).watertight);
    }
}
