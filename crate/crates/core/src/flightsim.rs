//! Planar glider flight kernel: piecewise-linear lift, parabolic drag,
//! gravity, no thrust, and a second-order pitch response, integrated with
//! fixed-step classical Runge–Kutta.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
#[allow(unused_imports)] // float methods come from libm under no_std
use num_traits::Float;

use crate::mesh::{clean_mesh, enclosed_volume, projection_areas, MeshError, TriangleMesh, DEFAULT_RASTER_RESOLUTION};
use crate::sdf::{default_epsilon, extract_surface, perturb_zero_nodes, SdfError, SdfGrid};

pub const GRAVITY: f64 = 9.8;
pub const DEFAULT_DT: f64 = 1e-3;
pub const MAX_FLIGHT_TIME: f64 = 120.0;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FlightError {
    #[error("invalid aero profile: {0}")]
    InvalidProfile(&'static str),
    #[error("invalid design task: {0}")]
    InvalidTask(&'static str),
    #[error("invalid glider geometry: {0}")]
    InvalidGeometry(&'static str),
    #[error("angle of attack undefined at zero airspeed (t = {0} s)")]
    ZeroVelocity(f64),
    #[error("simulation diverged at t = {t} s (x = {x}, y = {y})")]
    Divergence { t: f64, x: f64, y: f64 },
    #[error("reference table is empty")]
    EmptyTable,
    #[error(transparent)]
    Surface(#[from] SdfError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

/// Aerodynamic model of one reference aircraft.
#[derive(Debug, Clone, PartialEq)]
pub struct AeroProfile {
    pub name: String,
    /// `(α rad, C_L)` with strictly increasing α.
    pub cl_breakpoints: Vec<(f64, f64)>,
    pub cd0: f64,
    /// Drag curvature per rad².
    pub k: f64,
    /// Angle of minimum drag (rad).
    pub alpha_min: f64,
    /// Angle the pitch dynamics settle to (rad).
    pub alpha_trim: f64,
    /// Pitch restoring constant (1/s²).
    pub stability: f64,
    /// Pitch-rate damping constant (1/s).
    pub maneuverability: f64,
    /// Forward/top projection-area ratio used for matching.
    pub area_ratio: f64,
}

impl AeroProfile {
    pub fn validate(&self) -> Result<(), FlightError> {
        let bp = &self.cl_breakpoints;
        if bp.len() < 2 {
            return Err(FlightError::InvalidProfile("need at least two lift breakpoints"));
        }
        if bp.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(FlightError::InvalidProfile("lift breakpoints must have strictly increasing alpha"));
        }
        if bp.iter().any(|(a, c)| !a.is_finite() || !c.is_finite()) {
            return Err(FlightError::InvalidProfile("non-finite lift breakpoint"));
        }
        if !(self.cd0 >= 0.0) || !(self.k >= 0.0) {
            return Err(FlightError::InvalidProfile("drag coefficients must be non-negative"));
        }
        if !(self.stability > 0.0) || !(self.maneuverability >= 0.0) {
            return Err(FlightError::InvalidProfile("stability must be positive and damping non-negative"));
        }
        if !(self.area_ratio > 0.0) || !self.alpha_min.is_finite() || !self.alpha_trim.is_finite() {
            return Err(FlightError::InvalidProfile("area ratio must be positive and angles finite"));
        }
        Ok(())
    }
}

/// Linear interpolation between bracketing breakpoints, clamped outside.
pub fn lift_coefficient(alpha: f64, profile: &AeroProfile) -> f64 {
    let bp = &profile.cl_breakpoints;
    let first = bp[0];
    let last = bp[bp.len() - 1];
    if alpha <= first.0 {
        return first.1;
    }
    if alpha >= last.0 {
        return last.1;
    }
    let i = bp.partition_point(|&(a, _)| a <= alpha);
    let (a0, c0) = bp[i - 1];
    let (a1, c1) = bp[i];
    if alpha == a0 {
        return c0;
    }
    c0 + (c1 - c0) * (alpha - a0) / (a1 - a0)
}

pub fn drag_coefficient(alpha: f64, profile: &AeroProfile) -> f64 {
    let d = alpha - profile.alpha_min;
    profile.cd0 + profile.k * d * d
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DesignTask {
    /// Launch speed (m/s).
    pub launch_speed: f64,
    /// Launch pitch (rad).
    pub launch_pitch: f64,
    /// kg/m³
    pub material_density: f64,
    /// kg/m³
    pub air_density: f64,
    /// Downrange distance of the gap (m).
    pub gap_distance: f64,
    /// Required height at the gap (m).
    pub target_height: f64,
    /// Edge of the cube every design must fit in (m).
    pub box_size: f64,
}

impl Default for DesignTask {
    fn default() -> Self {
        Self {
            launch_speed: 45.7,
            launch_pitch: 10f64.to_radians(),
            material_density: 1000.0,
            air_density: 1.29,
            gap_distance: 100.0,
            target_height: 6.0,
            box_size: 1.0,
        }
    }
}

impl DesignTask {
    pub fn validate(&self) -> Result<(), FlightError> {
        if !(self.launch_speed > 0.0) || !self.launch_speed.is_finite() {
            return Err(FlightError::InvalidTask("launch speed must be positive"));
        }
        if !(self.air_density > 0.0) || !(self.material_density > 0.0) {
            return Err(FlightError::InvalidTask("densities must be positive"));
        }
        if !(self.gap_distance > 0.0) || !self.gap_distance.is_finite() {
            return Err(FlightError::InvalidTask("gap distance must be positive"));
        }
        if !self.launch_pitch.is_finite() || !self.target_height.is_finite() {
            return Err(FlightError::InvalidTask("non-finite pitch or target"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GliderGeometry {
    /// m²
    pub wing_area: f64,
    pub forward_area: f64,
    pub top_area: f64,
    /// kg
    pub mass: f64,
    /// Mean chord (m): top area over span.
    pub chord: f64,
}

impl GliderGeometry {
    pub fn validate(&self) -> Result<(), FlightError> {
        let all = [self.wing_area, self.forward_area, self.top_area, self.mass, self.chord];
        if all.iter().all(|v| *v > 0.0 && v.is_finite()) {
            Ok(())
        } else {
            Err(FlightError::InvalidGeometry("areas, mass and chord must be positive"))
        }
    }

    pub fn area_ratio(&self) -> f64 {
        self.forward_area / self.top_area
    }
}

/// Planar state: downrange `x`, altitude `y`, pitch attitude and rate.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GliderState {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    pub vy: f64,
    pub pitch: f64,
    pub pitch_rate: f64,
}

impl GliderState {
    pub fn launch(task: &DesignTask) -> Self {
        let (s, c) = task.launch_pitch.sin_cos();
        Self {
            t: 0.0,
            x: 0.0,
            y: 0.0,
            vx: task.launch_speed * c,
            vy: task.launch_speed * s,
            pitch: task.launch_pitch,
            pitch_rate: 0.0,
        }
    }

    pub fn speed(&self) -> f64 {
        (self.vx * self.vx + self.vy * self.vy).sqrt()
    }

    /// Pitch attitude minus flight-path angle, wrapped to (−π, π].
    pub fn alpha(&self) -> f64 {
        wrap_angle(self.pitch - self.vy.atan2(self.vx))
    }

    pub fn mechanical_energy(&self, mass: f64) -> f64 {
        0.5 * mass * (self.vx * self.vx + self.vy * self.vy) + mass * GRAVITY * self.y
    }

    fn is_finite(&self) -> bool {
        [self.t, self.x, self.y, self.vx, self.vy, self.pitch, self.pitch_rate].iter().all(|v| v.is_finite())
    }

    fn as_array(&self) -> [f64; 6] {
        [self.x, self.y, self.vx, self.vy, self.pitch, self.pitch_rate]
    }

    fn from_array(t: f64, a: [f64; 6]) -> Self {
        Self { t, x: a[0], y: a[1], vx: a[2], vy: a[3], pitch: a[4], pitch_rate: a[5] }
    }
}

fn wrap_angle(a: f64) -> f64 {
    let mut w = a % (2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    } else if w <= -PI {
        w += 2.0 * PI;
    }
    w
}

/// Force vectors (N) acting on the glider, with the angle of attack used.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Forces {
    pub alpha: f64,
    pub lift: [f64; 2],
    pub drag: [f64; 2],
    pub gravity: [f64; 2],
}

impl Forces {
    pub fn lift_magnitude(&self) -> f64 {
        self.lift[0].hypot(self.lift[1])
    }

    pub fn drag_magnitude(&self) -> f64 {
        self.drag[0].hypot(self.drag[1])
    }
}

/// Lift `½·C_L·ρ·|v|²·S` along the velocity rotated +90°, drag opposite
/// the velocity, gravity down.
pub fn forces(
    state: &GliderState,
    geometry: &GliderGeometry,
    profile: &AeroProfile,
    air_density: f64,
) -> Result<Forces, FlightError> {
    let v = state.speed();
    if !(v > 0.0) {
        return Err(FlightError::ZeroVelocity(state.t));
    }
    let alpha = state.alpha();
    let q = 0.5 * air_density * v * v * geometry.wing_area;
    let lift = q * lift_coefficient(alpha, profile);
    let drag = q * drag_coefficient(alpha, profile);
    let (ux, uy) = (state.vx / v, state.vy / v);
    Ok(Forces {
        alpha,
        lift: [-uy * lift, ux * lift],
        drag: [-ux * drag, -uy * drag],
        gravity: [0.0, -geometry.mass * GRAVITY],
    })
}

/// Which degrees of freedom are integrated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Dynamics {
    #[default]
    Full,
    /// Position and velocity frozen; only the pitch responds.
    RotationOnly,
}

fn derivative(
    s: &[f64; 6],
    geometry: &GliderGeometry,
    profile: &AeroProfile,
    air_density: f64,
    dynamics: Dynamics,
) -> Result<[f64; 6], FlightError> {
    let state = GliderState::from_array(0.0, *s);
    let f = forces(&state, geometry, profile, air_density)?;
    let alpha_dd = -profile.stability * (f.alpha - profile.alpha_trim) - profile.maneuverability * s[5];
    Ok(match dynamics {
        Dynamics::Full => {
            let m = geometry.mass;
            [
                s[2],
                s[3],
                (f.lift[0] + f.drag[0] + f.gravity[0]) / m,
                (f.lift[1] + f.drag[1] + f.gravity[1]) / m,
                s[5],
                alpha_dd,
            ]
        }
        Dynamics::RotationOnly => [0.0, 0.0, 0.0, 0.0, s[5], alpha_dd],
    })
}

fn axpy(a: &[f64; 6], h: f64, k: &[f64; 6]) -> [f64; 6] {
    core::array::from_fn(|i| a[i] + h * k[i])
}

/// One classical fourth-order Runge–Kutta step of length `dt`.
pub fn step_with(
    state: &GliderState,
    geometry: &GliderGeometry,
    profile: &AeroProfile,
    air_density: f64,
    dt: f64,
    dynamics: Dynamics,
) -> Result<GliderState, FlightError> {
    if !(dt > 0.0) {
        return Err(FlightError::InvalidTask("time step must be positive"));
    }
    let s0 = state.as_array();
    let d = |s: &[f64; 6]| derivative(s, geometry, profile, air_density, dynamics);
    let k1 = d(&s0)?;
    let k2 = d(&axpy(&s0, 0.5 * dt, &k1))?;
    let k3 = d(&axpy(&s0, 0.5 * dt, &k2))?;
    let k4 = d(&axpy(&s0, dt, &k3))?;
    let next: [f64; 6] = core::array::from_fn(|i| s0[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]));
    let out = GliderState::from_array(state.t + dt, next);
    if !out.is_finite() {
        return Err(FlightError::Divergence { t: state.t, x: state.x, y: state.y });
    }
    Ok(out)
}

pub fn step(
    state: &GliderState,
    geometry: &GliderGeometry,
    profile: &AeroProfile,
    air_density: f64,
    dt: f64,
) -> Result<GliderState, FlightError> {
    step_with(state, geometry, profile, air_density, dt, Dynamics::Full)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimOptions {
    pub dt: f64,
    pub max_time: f64,
    pub record_trace: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self { dt: DEFAULT_DT, max_time: MAX_FLIGHT_TIME, record_trace: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlightOutcome {
    /// Reached the gap distance in the air.
    Reached,
    /// Touched the ground first.
    Grounded,
    /// Exceeded the flight-time cap.
    Timeout,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Landing {
    /// Altitude at the gap distance, 0 unless `outcome` is `Reached`.
    pub height: f64,
    pub outcome: FlightOutcome,
    /// Last state (at the gap crossing when reached).
    pub last: GliderState,
    pub trace: Vec<GliderState>,
}

pub fn simulate_launch(
    task: &DesignTask,
    geometry: &GliderGeometry,
    profile: &AeroProfile,
) -> Result<Landing, FlightError> {
    simulate_launch_with(task, geometry, profile, &SimOptions::default())
}

/// Integrates from launch until the glider reaches `x = D`, touches the
/// ground or runs out of time. The gap crossing is located inside the final
/// step by secant iteration on partial Runge–Kutta steps, so the returned
/// height carries the integrator's order.
pub fn simulate_launch_with(
    task: &DesignTask,
    geometry: &GliderGeometry,
    profile: &AeroProfile,
    options: &SimOptions,
) -> Result<Landing, FlightError> {
    task.validate()?;
    geometry.validate()?;
    profile.validate()?;
    let rho = task.air_density;
    let mut state = GliderState::launch(task);
    let mut trace = Vec::new();
    if options.record_trace {
        trace.push(state);
    }
    loop {
        let next = step(&state, geometry, profile, rho, options.dt)?;
        if next.x >= task.gap_distance {
            let crossing = locate_crossing(&state, &next, task.gap_distance, geometry, profile, rho)?;
            if options.record_trace {
                trace.push(crossing);
            }
            let (height, outcome) = if crossing.y > 0.0 {
                (crossing.y, FlightOutcome::Reached)
            } else {
                (0.0, FlightOutcome::Grounded)
            };
            return Ok(Landing { height, outcome, last: crossing, trace });
        }
        if options.record_trace {
            trace.push(next);
        }
        if next.y <= 0.0 {
            return Ok(Landing { height: 0.0, outcome: FlightOutcome::Grounded, last: next, trace });
        }
        if next.t > options.max_time {
            return Ok(Landing { height: 0.0, outcome: FlightOutcome::Timeout, last: next, trace });
        }
        state = next;
    }
}

fn locate_crossing(
    before: &GliderState,
    after: &GliderState,
    gap: f64,
    geometry: &GliderGeometry,
    profile: &AeroProfile,
    rho: f64,
) -> Result<GliderState, FlightError> {
    let dt = after.t - before.t;
    let (mut t0, mut f0) = (0.0, before.x - gap);
    let (mut t1, mut f1) = (dt, after.x - gap);
    let mut best = *after;
    if f1 == 0.0 {
        return Ok(best);
    }
    for _ in 0..30 {
        if f1 == f0 {
            break;
        }
        let tau = (t1 - f1 * (t1 - t0) / (f1 - f0)).clamp(0.0, dt);
        if tau == 0.0 {
            return Ok(*before);
        }
        let s = step(before, geometry, profile, rho, tau)?;
        let f = s.x - gap;
        best = s;
        if f.abs() <= 1e-12 * gap.max(1.0) {
            break;
        }
        (t0, f0, t1, f1) = (t1, f1, tau, f);
    }
    Ok(best)
}

/// Profile whose area ratio is nearest in log space; ties go to the earlier
/// entry.
pub fn match_reference_aircraft<'a>(
    geometry: &GliderGeometry,
    table: &'a [AeroProfile],
) -> Result<&'a AeroProfile, FlightError> {
    geometry.validate()?;
    let target = geometry.area_ratio().ln();
    let mut best: Option<(f64, &AeroProfile)> = None;
    for p in table {
        let d = (target - p.area_ratio.ln()).abs();
        if best.is_none_or(|(bd, _)| d < bd) {
            best = Some((d, p));
        }
    }
    best.map(|(_, p)| p).ok_or(FlightError::EmptyTable)
}

fn deg(a: f64) -> f64 {
    a.to_radians()
}

/// Eight synthetic reference aircraft spanning flying wings (ratio 0.02)
/// to blunt bodies (ratio 1.0). Lift slopes approach the thin-airfoil 2π
/// per radian for slender planforms; every curve plateaus beyond ±15°.
pub fn builtin_profiles() -> Vec<AeroProfile> {
    // name, area ratio, slope fraction of 2π, C_L at zero alpha, C_D0, k,
    // stability, maneuverability
    let rows: [(&str, f64, f64, f64, f64, f64, f64, f64); 8] = [
        ("flying-wing", 0.02, 0.95, 0.70, 0.010, 1.0, 30.0, 6.0),
        ("sailplane", 0.035, 0.92, 0.68, 0.012, 1.0, 28.0, 5.5),
        ("trainer", 0.06, 0.85, 0.62, 0.020, 1.2, 25.0, 5.0),
        ("transport", 0.10, 0.78, 0.58, 0.030, 1.5, 22.0, 4.5),
        ("fighter", 0.18, 0.65, 0.52, 0.040, 1.8, 18.0, 4.0),
        ("lifting-body", 0.30, 0.50, 0.45, 0.060, 2.2, 15.0, 3.5),
        ("capsule", 0.55, 0.35, 0.35, 0.100, 2.8, 12.0, 3.0),
        ("blunt-body", 1.0, 0.20, 0.15, 0.250, 3.5, 10.0, 2.5),
    ];
    let stall = deg(15.0);
    rows.iter()
        .map(|&(name, ratio, frac, cl0, cd0, k, stability, maneuverability)| {
            let slope = 2.0 * PI * frac;
            AeroProfile {
                name: name.into(),
                cl_breakpoints: vec![
                    (-stall, cl0 - slope * stall),
                    (stall, cl0 + slope * stall),
                    (deg(25.0), 0.6 * (cl0 + slope * stall)),
                ],
                cd0,
                k,
                alpha_min: 0.0,
                alpha_trim: 0.0,
                stability,
                maneuverability,
                area_ratio: ratio,
            }
        })
        .collect()
}

/// Planform and mass measurements of an aligned design mesh.
pub fn measure_geometry(mesh: &TriangleMesh, task: &DesignTask) -> Result<GliderGeometry, FlightError> {
    let areas = projection_areas(mesh, DEFAULT_RASTER_RESOLUTION)?;
    let volume = enclosed_volume(mesh).volume;
    let span = mesh.bounds().extent().z;
    let g = GliderGeometry {
        wing_area: areas.top,
        forward_area: areas.forward,
        top_area: areas.top,
        mass: task.material_density * volume,
        chord: if span > 0.0 { areas.top / span } else { 0.0 },
    };
    g.validate()?;
    Ok(g)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub height: f64,
    /// False when the lattice holds no solid.
    pub feasible: bool,
    pub geometry: Option<GliderGeometry>,
    /// Index into the reference table.
    pub profile: Option<usize>,
    pub landing: Option<Landing>,
}

impl Evaluation {
    fn infeasible() -> Self {
        Self { height: 0.0, feasible: false, geometry: None, profile: None, landing: None }
    }
}

/// Closes the level set at the lattice boundary, removes exact zeros and
/// surfaces the result; keeps the largest connected piece.
pub fn design_mesh(grid: &SdfGrid) -> Result<Option<TriangleMesh>, FlightError> {
    let mut closed = perturb_zero_nodes(grid, default_epsilon(&grid.spec));
    let [n, m, k] = grid.spec.dims;
    let eps = default_epsilon(&grid.spec);
    for z in 0..k {
        for y in 0..m {
            for x in 0..n {
                if x == 0 || y == 0 || z == 0 || x == n - 1 || y == m - 1 || z == k - 1 {
                    let i = grid.spec.index(x, y, z);
                    closed.values[i] = closed.values[i].min(-eps);
                }
            }
        }
    }
    let surface = extract_surface(&closed)?;
    if surface.mesh.is_empty() {
        return Ok(None);
    }
    match clean_mesh(&surface.mesh) {
        Ok(m) => Ok(Some(m)),
        Err(MeshError::AllDegenerate | MeshError::Empty) => Ok(None),
        Err(e) => Err(e.into()),
    }
}

/// Surfaces a design lattice, measures it, picks the closest reference
/// aircraft and flies the task. An empty design lands at height 0 and is
/// flagged infeasible.
pub fn evaluate_design(grid: &SdfGrid, task: &DesignTask, table: &[AeroProfile]) -> Result<Evaluation, FlightError> {
    evaluate_design_with(grid, task, table, &SimOptions::default())
}

pub fn evaluate_design_with(
    grid: &SdfGrid,
    task: &DesignTask,
    table: &[AeroProfile],
    options: &SimOptions,
) -> Result<Evaluation, FlightError> {
    if table.is_empty() {
        return Err(FlightError::EmptyTable);
    }
    let Some(mesh) = design_mesh(grid)? else {
        return Ok(Evaluation::infeasible());
    };
    let geometry = match measure_geometry(&mesh, task) {
        Ok(g) => g,
        Err(FlightError::InvalidGeometry(_)) => return Ok(Evaluation::infeasible()),
        Err(e) => return Err(e),
    };
    let profile = match_reference_aircraft(&geometry, table)?;
    let index = table.iter().position(|p| core::ptr::eq(p, profile));
    let landing = simulate_launch_with(task, &geometry, profile, options)?;
    Ok(Evaluation { height: landing.height, feasible: true, geometry: Some(geometry), profile: index, landing: Some(landing) })
}
