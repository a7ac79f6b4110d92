//! Signed distance lattices (positive inside, negative outside) and
//! isosurface extraction by per-face arc construction.
//!
//! A vertex is placed on every lattice edge whose end values differ in sign.
//! Each mixed-sign cell face contributes one or two arcs between those
//! vertices, the arcs of a cell are chained into closed loops, and every loop
//! is fan-triangulated.

#[allow(unused_imports)] // float methods come from libm under no_std
use num_traits::Float;
use alloc::vec;
use alloc::vec::Vec;

use crate::geom::Vec3;
use crate::mesh::{Aabb, MeshIndex, TriangleMesh};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SdfError {
    #[error("lattice needs at least 2 nodes per axis, got {0:?}")]
    DimsTooSmall([usize; 3]),
    #[error("expected {expected} values, got {actual}")]
    ValueCount { expected: usize, actual: usize },
    #[error("grid bounds do not enclose the mesh")]
    BoundsDoNotEnclose,
    #[error("node {0} has value exactly zero; run perturb_zero_nodes first")]
    ZeroNode(usize),
    #[error("edge endpoints {0} and {1} do not straddle zero")]
    SameSign(f64, f64),
    #[error("non-positive lattice spacing {0}")]
    BadSpacing(f64),
    #[error("non-finite value at node {0}")]
    NonFinite(usize),
}

/// Lattice geometry: node counts, first node position and uniform spacing.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GridSpec {
    pub dims: [usize; 3],
    pub origin: Vec3,
    pub spacing: f64,
}

impl GridSpec {
    /// Smallest uniform lattice with `dims` nodes covering `bounds`, centred
    /// on it.
    pub fn covering(bounds: &Aabb, dims: [usize; 3]) -> Result<Self, SdfError> {
        if dims.iter().any(|&d| d < 2) {
            return Err(SdfError::DimsTooSmall(dims));
        }
        let e = bounds.extent();
        let spacing = (0..3).map(|i| e[i] / (dims[i] - 1) as f64).fold(0.0, f64::max);
        if !(spacing > 0.0) || !spacing.is_finite() {
            return Err(SdfError::BadSpacing(spacing));
        }
        let half = Vec3::new(
            spacing * (dims[0] - 1) as f64 * 0.5,
            spacing * (dims[1] - 1) as f64 * 0.5,
            spacing * (dims[2] - 1) as f64 * 0.5,
        );
        Ok(Self { dims, origin: bounds.center() - half, spacing })
    }

    /// Lattice around `shape` with `pad_cells` empty cells on every side of
    /// its longest axis.
    pub fn padded_around(shape: &Aabb, dims: [usize; 3], pad_cells: usize) -> Result<Self, SdfError> {
        if dims.iter().any(|&d| d < 2 + 2 * pad_cells) {
            return Err(SdfError::DimsTooSmall(dims));
        }
        let e = shape.extent();
        let spacing = (0..3)
            .map(|i| e[i] / (dims[i] - 1 - 2 * pad_cells) as f64)
            .fold(0.0, f64::max);
        if !(spacing > 0.0) || !spacing.is_finite() {
            return Err(SdfError::BadSpacing(spacing));
        }
        let half = Vec3::new(
            spacing * (dims[0] - 1) as f64 * 0.5,
            spacing * (dims[1] - 1) as f64 * 0.5,
            spacing * (dims[2] - 1) as f64 * 0.5,
        );
        Ok(Self { dims, origin: shape.center() - half, spacing })
    }

    /// The unit-box lattice used for aligned designs: a 1 m cube centred on
    /// the origin with two padding cells per side.
    pub fn design_box(resolution: usize) -> Result<Self, SdfError> {
        Self::padded_around(&Aabb::new(Vec3::splat(-0.5), Vec3::splat(0.5)), [resolution; 3], 2)
    }

    pub fn node_count(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn cell_diagonal(&self) -> f64 {
        self.spacing * 3.0f64.sqrt()
    }

    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let n = self.dims[0];
        let m = self.dims[1];
        [idx % n, (idx / n) % m, idx / (n * m)]
    }

    pub fn node_position(&self, idx: usize) -> Vec3 {
        let [i, j, k] = self.coords(idx);
        self.origin + Vec3::new(i as f64, j as f64, k as f64) * self.spacing
    }

    pub fn bounds(&self) -> Aabb {
        let far = Vec3::new(
            (self.dims[0] - 1) as f64,
            (self.dims[1] - 1) as f64,
            (self.dims[2] - 1) as f64,
        );
        Aabb::new(self.origin, self.origin + far * self.spacing)
    }
}

/// Signed distances on a lattice, x-fastest then y then z.
#[derive(Debug, Clone, PartialEq)]
pub struct SdfGrid {
    pub spec: GridSpec,
    pub values: Vec<f64>,
}

impl SdfGrid {
    pub fn new(spec: GridSpec, values: Vec<f64>) -> Result<Self, SdfError> {
        if spec.dims.iter().any(|&d| d < 2) {
            return Err(SdfError::DimsTooSmall(spec.dims));
        }
        if !(spec.spacing > 0.0) {
            return Err(SdfError::BadSpacing(spec.spacing));
        }
        if values.len() != spec.node_count() {
            return Err(SdfError::ValueCount { expected: spec.node_count(), actual: values.len() });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(SdfError::NonFinite(i));
        }
        Ok(Self { spec, values })
    }

    /// Samples `f` at every node.
    pub fn from_fn(spec: GridSpec, f: impl Fn(Vec3) -> f64) -> Self {
        let values = (0..spec.node_count()).map(|i| f(spec.node_position(i))).collect();
        Self { spec, values }
    }

    pub fn dims(&self) -> [usize; 3] {
        self.spec.dims
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[self.spec.index(i, j, k)]
    }

    /// Trilinear interpolation; positions outside the lattice are clamped.
    pub fn sample(&self, p: Vec3) -> f64 {
        let s = &self.spec;
        let mut base = [0usize; 3];
        let mut frac = [0.0f64; 3];
        for a in 0..3 {
            let u = ((p[a] - s.origin[a]) / s.spacing).clamp(0.0, (s.dims[a] - 1) as f64);
            let i = (u.floor() as usize).min(s.dims[a] - 2);
            base[a] = i;
            frac[a] = u - i as f64;
        }
        let mut acc = 0.0;
        for c in 0..8 {
            let (dx, dy, dz) = (c & 1, (c >> 1) & 1, (c >> 2) & 1);
            let w = (if dx == 1 { frac[0] } else { 1.0 - frac[0] })
                * (if dy == 1 { frac[1] } else { 1.0 - frac[1] })
                * (if dz == 1 { frac[2] } else { 1.0 - frac[2] });
            acc += w * self.get(base[0] + dx, base[1] + dy, base[2] + dz);
        }
        acc
    }
}

/// Signed distance of one lattice point: `+d` inside, `-d` outside.
pub fn signed_distance(index: &MeshIndex<'_>, p: Vec3) -> f64 {
    let d = index.distance(p);
    if index.contains(p).inside { d } else { -d }
}

/// Checks that a lattice encloses the mesh before sampling it.
pub fn check_encloses(mesh: &TriangleMesh, spec: &GridSpec) -> Result<(), SdfError> {
    if mesh.is_empty() || !spec.bounds().strictly_contains(&mesh.bounds()) {
        return Err(SdfError::BoundsDoNotEnclose);
    }
    Ok(())
}

/// Samples the mesh's signed distance at every node of the lattice that
/// covers `bounds` with `dims` nodes.
pub fn mesh_to_sdf(mesh: &TriangleMesh, dims: [usize; 3], bounds: &Aabb) -> Result<SdfGrid, SdfError> {
    let spec = GridSpec::covering(bounds, dims)?;
    mesh_to_sdf_on(mesh, spec)
}

/// [`mesh_to_sdf`] on an explicit lattice.
pub fn mesh_to_sdf_on(mesh: &TriangleMesh, spec: GridSpec) -> Result<SdfGrid, SdfError> {
    check_encloses(mesh, &spec)?;
    let index = MeshIndex::new(mesh);
    let values = (0..spec.node_count()).map(|i| signed_distance(&index, spec.node_position(i))).collect();
    Ok(SdfGrid { spec, values })
}

/// Default zero-push for [`perturb_zero_nodes`]: a millionth of a cell.
pub fn default_epsilon(spec: &GridSpec) -> f64 {
    1e-6 * spec.spacing
}

/// Pushes every node with `|value| < epsilon` to `±epsilon`, keeping its
/// sign (zero counts as positive). `epsilon` must be positive.
pub fn perturb_zero_nodes(grid: &SdfGrid, epsilon: f64) -> SdfGrid {
    debug_assert!(epsilon > 0.0);
    let values = grid
        .values
        .iter()
        .map(|&v| if v.abs() < epsilon { if v >= 0.0 { epsilon } else { -epsilon } } else { v })
        .collect();
    SdfGrid { spec: grid.spec, values }
}

/// Zero crossing of the linear interpolant between two straddling values,
/// as a fraction of the way from the first node to the second.
pub fn edge_vertex(d1: f64, d2: f64) -> Result<f64, SdfError> {
    if d1 == 0.0 || d2 == 0.0 || (d1 > 0.0) == (d2 > 0.0) {
        return Err(SdfError::SameSign(d1, d2));
    }
    Ok(d1 / (d1 - d2))
}

/// Sign configuration of one rectangular cell face.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaceCase {
    Uniform,
    OneNegative,
    TwoAdjacent,
    TwoDiagonal,
    ThreeNegative,
}

impl FaceCase {
    /// Classifies four corner signs given in cyclic order (`true` = inside).
    pub fn classify(positive: [bool; 4]) -> Self {
        let negatives = positive.iter().filter(|&&p| !p).count();
        match negatives {
            0 | 4 => FaceCase::Uniform,
            1 => FaceCase::OneNegative,
            3 => FaceCase::ThreeNegative,
            _ if positive[0] == positive[2] => FaceCase::TwoDiagonal,
            _ => FaceCase::TwoAdjacent,
        }
    }

    pub fn arc_count(self) -> usize {
        match self {
            FaceCase::Uniform => 0,
            FaceCase::TwoDiagonal => 2,
            _ => 1,
        }
    }
}

/// Directed arc between the crossings on two face edges. Face edge `e` joins
/// corner `e` to corner `(e + 1) % 4`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Arc {
    pub from_edge: u8,
    pub to_edge: u8,
}

/// Arcs of a face whose corners are listed counter-clockwise about its normal.
///
/// Arcs run from a crossing where the boundary leaves the inside region to
/// one where it re-enters, so the inside lies on their left. In the diagonal
/// case each arc cuts off one inside corner; the outside corners stay joined.
pub fn face_arcs(positive: [bool; 4]) -> Vec<Arc> {
    let mut arcs = Vec::new();
    for e in 0..4u8 {
        let leaves = positive[e as usize] && !positive[(e as usize + 1) % 4];
        if !leaves {
            continue;
        }
        for back in 1..4u8 {
            let j = (e + 4 - back) % 4;
            let enters = !positive[j as usize] && positive[(j as usize + 1) % 4];
            if enters {
                arcs.push(Arc { from_edge: e, to_edge: j });
                break;
            }
        }
    }
    arcs
}

/// An arc with its endpoints resolved to positions on the face.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlacedArc {
    pub from: Vec3,
    pub to: Vec3,
}

/// Face arcs with endpoints placed by [`edge_vertex`] from corner values and
/// positions (counter-clockwise order).
pub fn place_face_arcs(values: [f64; 4], corners: [Vec3; 4]) -> Result<Vec<PlacedArc>, SdfError> {
    let positive = values.map(|v| v > 0.0);
    if let Some(i) = values.iter().position(|&v| v == 0.0) {
        return Err(SdfError::ZeroNode(i));
    }
    let point = |e: u8| -> Result<Vec3, SdfError> {
        let (a, b) = (e as usize, (e as usize + 1) % 4);
        let t = edge_vertex(values[a], values[b])?;
        Ok(corners[a].lerp(corners[b], t))
    };
    face_arcs(positive)
        .into_iter()
        .map(|arc| Ok(PlacedArc { from: point(arc.from_edge)?, to: point(arc.to_edge)? }))
        .collect()
}

// Cell corner c has offset (c & 1, (c >> 1) & 1, (c >> 2) & 1). Faces are
// listed counter-clockwise seen from outside the cell.
const CELL_FACES: [[usize; 4]; 6] = [
    [0, 4, 6, 2], // -x
    [1, 3, 7, 5], // +x
    [0, 1, 5, 4], // -y
    [2, 6, 7, 3], // +y
    [0, 2, 3, 1], // -z
    [4, 5, 7, 6], // +z
];

/// Extracted isosurface plus a closedness report.
#[derive(Debug, Clone, PartialEq)]
pub struct Surface {
    pub mesh: TriangleMesh,
    /// Edges used by a single triangle; non-zero when the level set reaches
    /// the lattice boundary.
    pub boundary_edges: usize,
}

/// Extracts the zero level set as a triangle mesh with normals pointing
/// from positive (inside) to negative (outside).
pub fn extract_surface(grid: &SdfGrid) -> Result<Surface, SdfError> {
    let spec = grid.spec;
    let [n, m, k] = spec.dims;
    if let Some(i) = grid.values.iter().position(|&v| v == 0.0) {
        return Err(SdfError::ZeroNode(i));
    }
    let inside = |idx: usize| grid.values[idx] > 0.0;
    let stride = [1, n, n * m];

    // one vertex per sign-changing lattice edge, numbered axis-major
    let total = spec.node_count();
    let mut edge_vertex_id = vec![u32::MAX; 3 * total];
    let mut vertices = Vec::new();
    for axis in 0..3 {
        for idx in 0..total {
            let c = spec.coords(idx);
            if c[axis] + 1 >= spec.dims[axis] {
                continue;
            }
            let nb = idx + stride[axis];
            if inside(idx) != inside(nb) {
                let t = edge_vertex(grid.values[idx], grid.values[nb])?;
                let p = spec.node_position(idx).lerp(spec.node_position(nb), t);
                edge_vertex_id[axis * total + idx] = vertices.len() as u32;
                vertices.push(p);
            }
        }
    }

    let corner_offset = |c: usize| (c & 1) * stride[0] + ((c >> 1) & 1) * stride[1] + ((c >> 2) & 1) * stride[2];
    let lattice_edge = |base: usize, a: usize, b: usize| -> u32 {
        // corners differ in exactly one bit
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let axis = (hi ^ lo).trailing_zeros() as usize;
        edge_vertex_id[axis * total + base + corner_offset(lo)]
    };

    let mut triangles = Vec::new();
    let mut from_list: Vec<u32> = Vec::with_capacity(12);
    let mut succ: Vec<(u32, u32)> = Vec::with_capacity(12);
    for kk in 0..k - 1 {
        for jj in 0..m - 1 {
            for ii in 0..n - 1 {
                let base = spec.index(ii, jj, kk);
                let signs: [bool; 8] = core::array::from_fn(|c| inside(base + corner_offset(c)));
                if signs.iter().all(|&s| s) || signs.iter().all(|&s| !s) {
                    continue;
                }
                succ.clear();
                for face in CELL_FACES {
                    let pos = face.map(|c| signs[c]);
                    for arc in face_arcs(pos) {
                        let ea = arc.from_edge as usize;
                        let eb = arc.to_edge as usize;
                        let from = lattice_edge(base, face[ea], face[(ea + 1) % 4]);
                        let to = lattice_edge(base, face[eb], face[(eb + 1) % 4]);
                        succ.push((from, to));
                    }
                }
                // chain arcs into loops
                from_list.clear();
                for &(from, _) in &succ {
                    from_list.push(from);
                }
                let mut used = [false; 12];
                for start in 0..succ.len() {
                    if used[start] {
                        continue;
                    }
                    let mut lp: [u32; 12] = [0; 12];
                    let mut len = 0;
                    let mut cur = start;
                    loop {
                        used[cur] = true;
                        lp[len] = succ[cur].0;
                        len += 1;
                        let to = succ[cur].1;
                        match from_list.iter().position(|&f| f == to) {
                            Some(nx) if !used[nx] => cur = nx,
                            _ => break,
                        }
                    }
                    // reversed fan puts normals on the outside
                    for t in 1..len.saturating_sub(1) {
                        triangles.push([lp[0], lp[t + 1], lp[t]]);
                    }
                }
            }
        }
    }
    let mesh = TriangleMesh { vertices, triangles };
    let boundary_edges = mesh.boundary_edge_count();
    Ok(Surface { mesh, boundary_edges })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{box_mesh, signed_volume};

    fn sphere_grid(res: usize, r: f64) -> SdfGrid {
        let spec = GridSpec::design_box(res).unwrap();
        SdfGrid::from_fn(spec, |p| r - p.norm())
    }

    #[test]
    fn edge_vertex_examples() {
        assert_eq!(edge_vertex(1.0, -1.0).unwrap(), 0.5);
        assert!((edge_vertex(0.3, -0.1).unwrap() - 0.75).abs() < 1e-15);
        assert!((edge_vertex(1e-6, -1.0).unwrap() - 1e-6).abs() < 1e-11);
        assert!(matches!(edge_vertex(1.0, 2.0), Err(SdfError::SameSign(..))));
        assert!(edge_vertex(0.0, -1.0).is_err());
    }

    #[test]
    fn perturb_rules() {
        let spec = GridSpec::design_box(7).unwrap();
        let mut values = vec![-1.0; spec.node_count()];
        values[3] = 0.0;
        values[4] = -1e-9;
        values[5] = -0.0;
        let g = SdfGrid::new(spec, values).unwrap();
        let eps = default_epsilon(&spec);
        let p = perturb_zero_nodes(&g, eps);
        assert_eq!(p.values[3], eps);
        assert_eq!(p.values[5], eps);
        let q = perturb_zero_nodes(&g, 1e-6);
        assert_eq!(q.values[4], -1e-6);
        assert_eq!(p.values[0], -1.0);
        let clean = SdfGrid::new(spec, vec![-1.0; spec.node_count()]).unwrap();
        assert_eq!(perturb_zero_nodes(&clean, eps), clean);
    }

    #[test]
    fn face_case_examples() {
        assert_eq!(face_arcs([true, true, true, false]).len(), 1);
        assert_eq!(face_arcs([true, true, false, false]).len(), 1);
        assert_eq!(face_arcs([true, false, true, false]).len(), 2);
        assert_eq!(face_arcs([false; 4]).len(), 0);
        assert_eq!(FaceCase::classify([true, false, true, false]), FaceCase::TwoDiagonal);
        assert_eq!(FaceCase::classify([true, true, true, false]), FaceCase::OneNegative);
        assert_eq!(FaceCase::classify([false, false, true, false]), FaceCase::ThreeNegative);
    }

    #[test]
    fn diagonal_arcs_cut_off_inside_corners() {
        // inside corners 0 and 2: arcs 0->3 (around corner 0) and 2->1 (around corner 2)
        let arcs = face_arcs([true, false, true, false]);
        assert_eq!(arcs, vec![Arc { from_edge: 0, to_edge: 3 }, Arc { from_edge: 2, to_edge: 1 }]);
    }

    #[test]
    fn classification_is_rotation_invariant() {
        for bits in 0..16u8 {
            let s: [bool; 4] = core::array::from_fn(|i| bits >> i & 1 == 1);
            let c = FaceCase::classify(s);
            for r in 1..4 {
                let rot: [bool; 4] = core::array::from_fn(|i| s[(i + r) % 4]);
                assert_eq!(FaceCase::classify(rot), c);
                assert_eq!(face_arcs(rot).len(), c.arc_count());
            }
        }
    }

    #[test]
    fn negative_grid_is_empty() {
        let spec = GridSpec::design_box(6).unwrap();
        let g = SdfGrid::new(spec, vec![-0.5; spec.node_count()]).unwrap();
        let s = extract_surface(&g).unwrap();
        assert!(s.mesh.is_empty());
    }

    #[test]
    fn zero_node_is_rejected() {
        let spec = GridSpec::design_box(6).unwrap();
        let mut v = vec![-0.5; spec.node_count()];
        v[40] = 0.0;
        let g = SdfGrid::new(spec, v).unwrap();
        assert_eq!(extract_surface(&g), Err(SdfError::ZeroNode(40)));
    }

    #[test]
    fn single_positive_node_gives_octahedron() {
        let spec = GridSpec::design_box(7).unwrap();
        let mut v = vec![-1.0; spec.node_count()];
        v[spec.index(3, 3, 3)] = 1.0;
        let s = extract_surface(&SdfGrid::new(spec, v).unwrap()).unwrap();
        assert_eq!(s.mesh.vertices.len(), 6);
        assert_eq!(s.mesh.triangles.len(), 8);
        assert_eq!(s.boundary_edges, 0);
        assert!(s.mesh.edge_report().is_closed());
        assert_eq!(s.mesh.inconsistent_winding_count(), 0);
        assert!(signed_volume(&s.mesh) > 0.0);
    }

    #[test]
    fn sphere_level_set_is_closed_and_outward() {
        let g = sphere_grid(21, 0.4);
        let s = extract_surface(&g).unwrap();
        assert!(s.mesh.edge_report().is_closed());
        assert_eq!(s.mesh.inconsistent_winding_count(), 0);
        assert!(signed_volume(&s.mesh) > 0.0);
        let tol = 1.5 * g.spec.cell_diagonal();
        for v in &s.mesh.vertices {
            assert!((v.norm() - 0.4).abs() <= tol);
        }
    }

    #[test]
    fn open_level_set_reports_boundary() {
        let spec = GridSpec::design_box(9).unwrap();
        let g = SdfGrid::from_fn(spec, |p| 0.1 - p.y + 1e-3);
        let s = extract_surface(&g).unwrap();
        assert!(s.boundary_edges > 0);
    }

    #[test]
    fn box_sdf_encloses_check() {
        let cube = box_mesh(Vec3::splat(-0.5), Vec3::splat(0.5));
        let tight = Aabb::new(Vec3::splat(-0.5), Vec3::splat(0.5));
        assert_eq!(mesh_to_sdf(&cube, [5; 3], &tight), Err(SdfError::BoundsDoNotEnclose));
        let g = mesh_to_sdf(&cube, [5; 3], &tight.padded(0.25)).unwrap();
        // centre node: 0.5 inside
        assert_eq!(g.get(2, 2, 2), 0.5);
        // corner node (-0.75,..) is outside
        assert!(g.get(0, 0, 0) < 0.0);
    }

    #[test]
    fn trilinear_sample_reproduces_linear_field() {
        let spec = GridSpec::design_box(6).unwrap();
        let g = SdfGrid::from_fn(spec, |p| 2.0 * p.x - p.y + 0.5 * p.z);
        let p = Vec3::new(0.123, -0.2, 0.31);
        assert!((g.sample(p) - (2.0 * p.x - p.y + 0.5 * p.z)).abs() < 1e-12);
    }
}
