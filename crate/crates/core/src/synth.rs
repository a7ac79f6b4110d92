//! Parametric glider shapes: an ellipsoidal fuselage along +x with a swept
//! main wing and a horizontal tail along ±z, built as an implicit union and
//! surfaced on a fine lattice.

#[allow(unused_imports)] // float methods come from libm under no_std
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geom::Vec3;
use crate::mesh::{clean_mesh, Aabb, TriangleMesh};
use crate::sdf::{default_epsilon, extract_surface, perturb_zero_nodes, GridSpec, SdfError, SdfGrid};

/// Dimensions in meters; the nose points to +x, the wing spans z, y is up.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GliderParams {
    pub fuselage_length: f64,
    pub fuselage_radius: f64,
    pub wing_span: f64,
    pub wing_chord: f64,
    pub wing_thickness: f64,
    /// Leading-edge sweep (rad), positive toward the tail.
    pub wing_sweep: f64,
    /// Wing root leading edge, as a fraction of length behind the nose.
    pub wing_position: f64,
    pub tail_span: f64,
    pub tail_chord: f64,
}

impl GliderParams {
    /// Draws a glider whose fuselage stays the longest principal direction.
    pub fn sample<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let length = rng.random_range(0.8..1.0);
        Self {
            fuselage_length: length,
            fuselage_radius: rng.random_range(0.09..0.15),
            wing_span: length * rng.random_range(0.35..0.72),
            wing_chord: rng.random_range(0.18..0.32),
            wing_thickness: rng.random_range(0.16..0.24),
            wing_sweep: rng.random_range(0.0..0.5),
            wing_position: rng.random_range(0.25..0.45),
            tail_span: length * rng.random_range(0.15..0.3),
            tail_chord: rng.random_range(0.08..0.14),
        }
    }

    fn wing_root_leading_edge(&self) -> f64 {
        0.5 * self.fuselage_length - self.wing_position * self.fuselage_length
    }

    pub fn bounds(&self) -> Aabb {
        let half_len = 0.5 * self.fuselage_length;
        let half_span = 0.5 * self.wing_span.max(self.tail_span);
        let half_h = self.fuselage_radius.max(0.5 * self.wing_thickness);
        let tip_trailing_edge =
            self.wing_root_leading_edge() - self.wing_chord - self.wing_sweep.tan() * 0.5 * self.wing_span;
        Aabb::new(
            Vec3::new((-half_len).min(tip_trailing_edge), -half_h, -half_span),
            Vec3::new(half_len, half_h, half_span),
        )
    }
}

/// Positive-inside distance to an axis-aligned box of half extents `h`.
fn box_distance(p: Vec3, h: Vec3) -> f64 {
    let q = p.abs() - h;
    let outside = q.max(Vec3::ZERO).norm();
    let inside = q.max_element().min(0.0);
    -(outside + inside)
}

/// Positive inside, approximately the signed distance near the surface.
pub fn glider_field(g: &GliderParams, p: Vec3) -> f64 {
    let half_len = 0.5 * g.fuselage_length;
    let r = g.fuselage_radius;
    let scaled = Vec3::new(p.x / half_len, p.y / r, p.z / r);
    let fuselage = (1.0 - scaled.norm()) * r;

    let root_le = g.wing_root_leading_edge();
    // Sweep shifts each spanwise station toward the tail.
    let shift = g.wing_sweep.tan() * p.z.abs();
    let wing_center = Vec3::new(root_le - 0.5 * g.wing_chord - shift, 0.0, 0.0);
    let wing = box_distance(
        p - wing_center,
        Vec3::new(0.5 * g.wing_chord, 0.5 * g.wing_thickness, 0.5 * g.wing_span),
    );

    let tail_center = Vec3::new(-half_len + 0.5 * g.tail_chord + 0.02, 0.0, 0.0);
    let tail = box_distance(
        p - tail_center,
        Vec3::new(0.5 * g.tail_chord, 0.5 * g.wing_thickness.min(0.16), 0.5 * g.tail_span),
    );
    fuselage.max(wing).max(tail)
}

/// Samples the field on a lattice with `cells` cells along the longest
/// bounding edge plus a margin of two and a half cells, so that the
/// extreme points of the shape fall between lattice nodes.
pub fn glider_grid(g: &GliderParams, cells: usize) -> Result<SdfGrid, SdfError> {
    let b = g.bounds();
    let spacing = b.longest_edge() / cells as f64;
    let e = b.extent();
    let dims = [e.x, e.y, e.z].map(|v| (v / spacing).ceil() as usize + 6);
    let spec = GridSpec::covering(&b.padded(2.5 * spacing), dims)?;
    Ok(SdfGrid::from_fn(spec, |p| glider_field(g, p)))
}

pub fn glider_mesh(g: &GliderParams, cells: usize) -> Result<TriangleMesh, SdfError> {
    let grid = glider_grid(g, cells)?;
    let grid = perturb_zero_nodes(&grid, default_epsilon(&grid.spec));
    let surface = extract_surface(&grid)?;
    Ok(clean_mesh(&surface.mesh).unwrap_or(surface.mesh))
}

/// `count` gliders drawn from one seeded stream.
pub fn sample_corpus(count: usize, seed: u64) -> alloc::vec::Vec<GliderParams> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| GliderParams::sample(&mut rng)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{align_mesh, signed_volume};

    #[test]
    fn synthetic_glider_is_closed_and_keeps_its_axes() {
        for g in sample_corpus(6, 4) {
            let mesh = glider_mesh(&g, 40).unwrap();
            assert_eq!(mesh.boundary_edge_count(), 0);
            assert!(signed_volume(&mesh) > 0.0);
            let (_, a) = align_mesh(&mesh).unwrap();
            let r = a.rotation.0;
            assert!(r[0][0].abs() > 0.95, "fuselage axis moved: {r:?}");
            assert!(r[2][2].abs() > 0.95, "span axis moved: {r:?}");
        }
    }
}
