use latent_glider_core::flightsim::*;
use proptest::prelude::*;

fn no_aero() -> AeroProfile {
    AeroProfile {
        name: "none".into(),
        cl_breakpoints: vec![(-1.0, 0.0), (1.0, 0.0)],
        cd0: 0.0,
        k: 0.0,
        alpha_min: 0.0,
        alpha_trim: 0.0,
        stability: 5.0,
        maneuverability: 1.0,
        area_ratio: 1.0,
    }
}

fn geometry(mass: f64) -> GliderGeometry {
    GliderGeometry { wing_area: 0.4, forward_area: 0.05, top_area: 0.4, mass, chord: 0.4 }
}

fn drag_only(cd0: f64, k: f64, alpha_min: f64) -> AeroProfile {
    AeroProfile { cd0, k, alpha_min, ..no_aero() }
}

#[test]
fn ten_degree_launch_falls_short_of_the_gap() {
    let task = DesignTask::default();
    let l = simulate_launch(&task, &geometry(10.0), &no_aero()).unwrap();
    assert_eq!(l.height, 0.0);
    assert_eq!(l.outcome, FlightOutcome::Grounded);
    let range = 45.7f64.powi(2) * (20f64.to_radians()).sin() / GRAVITY;
    assert!((range - 72.9).abs() < 0.05);
    assert!((l.last.x - range).abs() < 0.1, "landed at {} vs {range}", l.last.x);
}

#[test]
fn rotation_only_pitch_follows_the_damped_oscillator() {
    let p = AeroProfile { stability: 16.0, maneuverability: 0.8, ..no_aero() };
    let g = geometry(5.0);
    let pitch0 = 0.05;
    let mut s = GliderState { vx: 20.0, pitch: pitch0, ..Default::default() };
    let dt = 1e-3;
    let (w0, c) = (4.0f64, 0.4f64);
    let wd = (w0 * w0 - c * c).sqrt();
    for _ in 0..3000 {
        s = step_with(&s, &g, &p, 1.29, dt, Dynamics::RotationOnly).unwrap();
        let exact = pitch0 * (-c * s.t).exp() * ((wd * s.t).cos() + c / wd * (wd * s.t).sin());
        assert!((s.pitch - exact).abs() < 1e-9, "t = {}: {} vs {exact}", s.t, s.pitch);
    }
    assert_eq!((s.x, s.y, s.vx, s.vy), (0.0, 0.0, 20.0, 0.0));
}

#[test]
fn height_converges_with_the_step_size() {
    let task = DesignTask::default();
    let table = builtin_profiles();
    let g = geometry(4.0);
    let p = &table[1];
    let h = |dt: f64| {
        let o = SimOptions { dt, ..SimOptions::default() };
        simulate_launch_with(&task, &g, p, &o).unwrap().height
    };
    let (a, b, c) = (h(4e-3), h(2e-3), h(1e-3));
    assert!(c > 0.0);
    assert!((b - c).abs() <= (a - b).abs() + 1e-12);
    assert!((b - c).abs() < 1e-6 * c.abs().max(1.0), "{a} {b} {c}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn zero_aero_matches_the_parabola(
        speed in 30.0f64..80.0,
        pitch_deg in 20.0f64..60.0,
        mass in 0.5f64..50.0,
    ) {
        let pitch = pitch_deg.to_radians();
        let task = DesignTask { launch_speed: speed, launch_pitch: pitch, ..DesignTask::default() };
        let d = task.gap_distance;
        let exact = d * pitch.tan() - GRAVITY * d * d / (2.0 * (speed * pitch.cos()).powi(2));
        prop_assume!(exact > 1.0);
        let l = simulate_launch(&task, &geometry(mass), &no_aero()).unwrap();
        prop_assert_eq!(l.outcome, FlightOutcome::Reached);
        prop_assert!((l.height - exact).abs() <= 5e-3 * exact, "{} vs {}", l.height, exact);
    }

    #[test]
    fn drag_only_energy_never_increases(
        cd0 in 0.0f64..0.5,
        k in 0.0f64..5.0,
        alpha_min in -0.3f64..0.3,
        mass in 0.2f64..50.0,
        speed in 1.0f64..80.0,
        heading in -1.5f64..1.5,
        pitch in -1.0f64..1.0,
        pitch_rate in -2.0f64..2.0,
        y in 0.0f64..50.0,
    ) {
        let p = drag_only(cd0, k, alpha_min);
        let g = geometry(mass);
        let mut s = GliderState {
            vx: speed * heading.cos(),
            vy: speed * heading.sin(),
            y,
            pitch,
            pitch_rate,
            ..Default::default()
        };
        for _ in 0..20 {
            let next = step(&s, &g, &p, 1.29, 1e-3).unwrap();
            let (e0, e1) = (s.mechanical_energy(mass), next.mechanical_energy(mass));
            prop_assert!(e1 <= e0 + 1e-9 * e0.abs().max(1.0), "energy rose {} -> {}", e0, e1);
            s = next;
        }
    }
}

#[test]
fn drag_only_energy_over_ten_thousand_random_cases() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
    for _ in 0..10_000 {
        let p = drag_only(rng.random_range(0.0..0.5), rng.random_range(0.0..5.0), rng.random_range(-0.3..0.3));
        let mass = rng.random_range(0.2..50.0);
        let (speed, heading): (f64, f64) = (rng.random_range(1.0..80.0), rng.random_range(-1.5..1.5));
        let s = GliderState {
            vx: speed * heading.cos(),
            vy: speed * heading.sin(),
            y: rng.random_range(0.0..50.0),
            pitch: rng.random_range(-1.0..1.0),
            pitch_rate: rng.random_range(-2.0..2.0),
            ..Default::default()
        };
        let next = step(&s, &geometry(mass), &p, 1.29, 1e-3).unwrap();
        let (e0, e1) = (s.mechanical_energy(mass), next.mechanical_energy(mass));
        assert!(e1 <= e0 + 1e-9 * e0.abs().max(1.0), "energy rose {e0} -> {e1}");
    }
}
