use latent_glider_core::geom::{symmetric_eigen, Mat3};
use latent_glider_core::mesh::*;
use latent_glider_core::sdf::*;
use latent_glider_core::Vec3;
use nalgebra::{Matrix3, Rotation3, Vector3};
use proptest::prelude::*;

/// Connected runs of inside corners around the square, treating the four
/// corners as a cycle.
fn inside_components(positive: [bool; 4]) -> usize {
    let mut label = [usize::MAX; 4];
    let mut count = 0;
    for start in 0..4 {
        if !positive[start] || label[start] != usize::MAX {
            continue;
        }
        let mut stack = vec![start];
        label[start] = count;
        while let Some(c) = stack.pop() {
            for n in [(c + 1) % 4, (c + 3) % 4] {
                if positive[n] && label[n] == usize::MAX {
                    label[n] = count;
                    stack.push(n);
                }
            }
        }
        count += 1;
    }
    count
}

#[test]
fn all_sixteen_face_patterns_agree_with_component_oracle() {
    for bits in 0u8..16 {
        let positive: [bool; 4] = core::array::from_fn(|i| bits >> i & 1 == 1);
        let arcs = face_arcs(positive);
        let uniform = positive.iter().all(|&p| p) || positive.iter().all(|&p| !p);
        let expected = if uniform { 0 } else { inside_components(positive) };
        assert_eq!(arcs.len(), expected, "pattern {bits:04b}");
        assert_eq!(FaceCase::classify(positive).arc_count(), expected, "pattern {bits:04b}");
        let mut covered = [false; 4];
        for a in &arcs {
            let (f, t) = (a.from_edge as usize, a.to_edge as usize);
            assert!(positive[f] && !positive[(f + 1) % 4], "pattern {bits:04b}: arc must leave the inside");
            assert!(!positive[t] && positive[(t + 1) % 4], "pattern {bits:04b}: arc must re-enter the inside");
            // corners cut off on the arc's left: from t+1 around to f
            let mut c = (t + 1) % 4;
            loop {
                assert!(positive[c] && !covered[c], "pattern {bits:04b}");
                covered[c] = true;
                if c == f {
                    break;
                }
                c = (c + 1) % 4;
            }
        }
        if !uniform {
            assert_eq!(covered, positive, "pattern {bits:04b}: every inside corner bounded once");
        }
    }
}

/// Generalized winding number from summed triangle solid angles.
fn winding_number(mesh: &TriangleMesh, p: Vec3) -> f64 {
    let mut total = 0.0;
    for t in 0..mesh.triangles.len() {
        let [a, b, c] = mesh.triangle(t).map(|v| v - p);
        let (la, lb, lc) = (a.norm(), b.norm(), c.norm());
        let num = a.dot(b.cross(c));
        let den = la * lb * lc + a.dot(b) * lc + b.dot(c) * la + c.dot(a) * lb;
        total += 2.0 * num.atan2(den);
    }
    total / (4.0 * core::f64::consts::PI)
}

fn two_bodies() -> TriangleMesh {
    let sphere = icosphere(Vec3::new(0.3, 0.1, -0.2), 0.45, 2);
    let block = box_mesh(Vec3::new(1.0, -0.4, -0.3), Vec3::new(1.6, 0.2, 0.5));
    sphere.merged(&block)
}

fn rotation(ax: f64, ay: f64, az: f64) -> impl Fn(Vec3) -> Vec3 {
    let r = Rotation3::from_euler_angles(ax, ay, az);
    move |v: Vec3| {
        let w = r * Vector3::new(v.x, v.y, v.z);
        Vec3::new(w.x, w.y, w.z)
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn ray_parity_agrees_with_winding_number(x in -0.6f64..2.0, y in -0.8f64..0.8, z in -0.9f64..0.9) {
        let mesh = two_bodies();
        let p = Vec3::new(x, y, z);
        prop_assume!(nearest_surface_distance(&mesh, p) > 1e-6);
        let w = winding_number(&mesh, p);
        prop_assert!((w - w.round()).abs() < 1e-6, "winding {}", w);
        let c = point_inside(&mesh, p);
        prop_assert!(c.watertight && !c.unresolved);
        prop_assert_eq!(c.inside, w.round() as i64 % 2 != 0);
        prop_assert_eq!(MeshIndex::new(&mesh).contains(p).inside, c.inside);
    }

    #[test]
    fn volume_is_rotation_invariant(ax in -3.1f64..3.1, ay in -1.5f64..1.5, az in -3.1f64..3.1) {
        let mesh = two_bodies();
        let v0 = enclosed_volume(&mesh).volume;
        let v1 = enclosed_volume(&mesh.map_vertices(rotation(ax, ay, az))).volume;
        prop_assert!((v0 - v1).abs() <= 1e-12 * v0, "{} vs {}", v0, v1);
    }

    #[test]
    fn cleaning_is_idempotent(shift in 0.0f64..3.0, keep in 0usize..20, sub in 0u32..3) {
        let sphere = icosphere(Vec3::ZERO, 1.0, sub);
        let block = box_mesh(Vec3::new(shift + 1.5, 0.0, 0.0), Vec3::new(shift + 2.0, 0.5, 0.5));
        let mut soup = sphere.merged(&block);
        // a stray sliver and a duplicate triangle
        soup.triangles.push([0, 0, 1]);
        let dup = soup.triangles[keep % soup.triangles.len()];
        soup.triangles.push(dup);
        let once = clean_mesh(&soup).unwrap();
        let twice = clean_mesh(&once).unwrap();
        prop_assert_eq!(&once, &twice);
        prop_assert_eq!(once.boundary_edge_count(), 0);
    }

    #[test]
    fn lattice_distances_are_one_lipschitz(
        hx in 0.1f64..0.45, hy in 0.1f64..0.45, hz in 0.1f64..0.45, n in 6usize..12,
    ) {
        let mesh = box_mesh(Vec3::new(-hx, -hy, -hz), Vec3::new(hx, hy, hz));
        let spec = GridSpec::padded_around(&mesh.bounds(), [n; 3], 2).unwrap();
        let grid = mesh_to_sdf_on(&mesh, spec).unwrap();
        let [nx, ny, nz] = spec.dims;
        for k in 0..nz {
            for j in 0..ny {
                for i in 0..nx {
                    let v = grid.get(i, j, k);
                    for (di, dj, dk) in [(1, 0, 0), (0, 1, 0), (0, 0, 1)] {
                        let (a, b, c) = (i + di, j + dj, k + dk);
                        if a < nx && b < ny && c < nz {
                            prop_assert!((v - grid.get(a, b, c)).abs() <= spec.spacing * (1.0 + 1e-12));
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn symmetric_eigen_matches_nalgebra(
        d in prop::array::uniform3(-2.0f64..2.0),
        o in prop::array::uniform3(-1.0f64..1.0),
    ) {
        let rows = [[d[0], o[0], o[1]], [o[0], d[1], o[2]], [o[1], o[2], d[2]]];
        let (mut ours, vecs) = symmetric_eigen(Mat3(rows));
        let m = Matrix3::from_fn(|r, c| rows[r][c]);
        let mut reference: Vec<f64> = m.symmetric_eigen().eigenvalues.iter().copied().collect();
        ours.sort_by(f64::total_cmp);
        reference.sort_by(f64::total_cmp);
        for (a, b) in ours.iter().zip(&reference) {
            prop_assert!((a - b).abs() < 1e-9, "{:?} vs {:?}", ours, reference);
        }
        for v in vecs {
            prop_assert!((v.norm() - 1.0).abs() < 1e-9);
        }
    }
}
