//! Spring-damper cloth on a square grid of point masses.
//!
//! Grid point `(col, row)` lives at index `row * grid_n + col` and starts at
//! `origin + (col, row, 0) * spacing`. The grasped corner is `(grid_n - 1, 0)`:
//! the corner with maximal x on the row nearest the origin. The fold moves it
//! across the line `x = origin.x + side_length / 2`.

use serde::{Deserialize, Serialize};

use crate::{Error, Result, Vec3};

/// Physical description of one fabric.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClothParams {
    /// Points per side.
    pub grid_n: usize,
    /// Edge length of the flat square, meters.
    pub side_length: f64,
    /// Mass of every grid point, kg.
    pub mass_per_point: f64,
    pub k_struct: f64,
    pub k_shear: f64,
    pub k_bend: f64,
    /// Spring damping along the spring axis, N·s/m.
    pub damping: f64,
    /// Per-point linear velocity drag, N·s/m.
    pub air_drag: f64,
    /// Coulomb coefficient against the table plane.
    pub friction: f64,
}

impl Default for ClothParams {
    fn default() -> Self {
        Self {
            grid_n: 9,
            side_length: 0.3,
            mass_per_point: 0.003,
            k_struct: 100.0,
            k_shear: 20.0,
            k_bend: 2.0,
            damping: 0.05,
            air_drag: 0.005,
            friction: 0.5,
        }
    }
}

impl ClothParams {
    pub fn validate(&self) -> Result<()> {
        if self.grid_n < 3 {
            return Err(Error::Params(format!("grid_n must be >= 3, got {}", self.grid_n)));
        }
        if !(self.side_length > 0.05 && self.side_length < 1.0) {
            return Err(Error::Params(format!(
                "side_length must lie in (0.05, 1.0) m, got {}",
                self.side_length
            )));
        }
        let physical = [
            ("mass_per_point", self.mass_per_point),
            ("k_struct", self.k_struct),
            ("k_shear", self.k_shear),
            ("k_bend", self.k_bend),
            ("damping", self.damping),
            ("air_drag", self.air_drag),
            ("friction", self.friction),
        ];
        for (name, value) in physical {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::Params(format!("{name} must be finite and > 0, got {value}")));
            }
        }
        Ok(())
    }

    /// Rest distance between 4-neighbours.
    pub fn spacing(&self) -> f64 {
        self.side_length / (self.grid_n - 1) as f64
    }

    pub fn num_points(&self) -> usize {
        self.grid_n * self.grid_n
    }

    pub fn stiffness(&self, kind: SpringKind) -> f64 {
        match kind {
            SpringKind::Struct => self.k_struct,
            SpringKind::Shear => self.k_shear,
            SpringKind::Bend => self.k_bend,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClothState {
    pub positions: Vec<Vec3>,
    pub velocities: Vec<Vec3>,
}

impl ClothState {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.positions
            .iter()
            .chain(&self.velocities)
            .all(|v| v.iter().all(|c| c.is_finite()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SpringKind {
    Struct,
    Shear,
    Bend,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Spring {
    pub a: usize,
    pub b: usize,
    pub rest_length: f64,
    pub kind: SpringKind,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    pub springs: Vec<Spring>,
}

impl Topology {
    pub fn count(&self, kind: SpringKind) -> usize {
        self.springs.iter().filter(|s| s.kind == kind).count()
    }
}

/// Flat grid at `origin` with structural, shear and bend springs.
pub fn build_cloth(params: &ClothParams, origin: Vec3) -> Result<(ClothState, Topology)> {
    params.validate()?;
    let n = params.grid_n;
    let s = params.spacing();
    let idx = |col: usize, row: usize| row * n + col;

    let mut positions = Vec::with_capacity(n * n);
    for row in 0..n {
        for col in 0..n {
            positions.push(origin + Vec3::new(col as f64 * s, row as f64 * s, 0.0));
        }
    }
    let velocities = vec![Vec3::zeros(); n * n];

    let mut springs = Vec::new();
    let mut push = |a: usize, b: usize, kind: SpringKind| {
        let rest_length = (positions[b] - positions[a]).norm();
        springs.push(Spring { a, b, rest_length, kind });
    };
    for row in 0..n {
        for col in 0..n {
            if col + 1 < n {
                push(idx(col, row), idx(col + 1, row), SpringKind::Struct);
            }
            if row + 1 < n {
                push(idx(col, row), idx(col, row + 1), SpringKind::Struct);
            }
            if col + 1 < n && row + 1 < n {
                push(idx(col, row), idx(col + 1, row + 1), SpringKind::Shear);
                push(idx(col + 1, row), idx(col, row + 1), SpringKind::Shear);
            }
            if col + 2 < n {
                push(idx(col, row), idx(col + 2, row), SpringKind::Bend);
            }
            if row + 2 < n {
                push(idx(col, row), idx(col, row + 2), SpringKind::Bend);
            }
        }
    }

    Ok((ClothState { positions, velocities }, Topology { springs }))
}

/// Internal spring-damper forces only (no gravity, no drag).
pub fn spring_forces_into(state: &ClothState, topology: &Topology, params: &ClothParams, out: &mut [Vec3]) {
    for spring in &topology.springs {
        let d = state.positions[spring.b] - state.positions[spring.a];
        let len = d.norm();
        if len == 0.0 {
            // coincident points: direction undefined, spring contributes nothing
            continue;
        }
        let dir = d / len;
        let stretch = len - spring.rest_length;
        let rel_vel = (state.velocities[spring.b] - state.velocities[spring.a]).dot(&dir);
        let f = dir * (params.stiffness(spring.kind) * stretch + params.damping * rel_vel);
        out[spring.a] += f;
        out[spring.b] -= f;
    }
}

/// Total force on every point: springs, dampers, gravity and air drag.
pub fn accumulate_forces(state: &ClothState, topology: &Topology, params: &ClothParams, gravity: Vec3) -> Vec<Vec3> {
    let mut out = vec![Vec3::zeros(); state.len()];
    accumulate_forces_into(state, topology, params, gravity, &mut out);
    out
}

pub fn accumulate_forces_into(
    state: &ClothState,
    topology: &Topology,
    params: &ClothParams,
    gravity: Vec3,
    out: &mut [Vec3],
) {
    let weight = gravity * params.mass_per_point;
    for (f, v) in out.iter_mut().zip(&state.velocities) {
        *f = weight - v * params.air_drag;
    }
    spring_forces_into(state, topology, params, out);
}

/// A point driven kinematically (the grasped corner follows the effector).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pin {
    pub index: usize,
    pub position: Vec3,
    pub velocity: Vec3,
}

/// Horizontal support plane at `height` with Coulomb friction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub height: f64,
    pub friction: f64,
}

/// Semi-implicit Euler step: `v += F/m dt`, then `x += v dt`.
///
/// The table (if any) is applied as a velocity-level contact after
/// integration; the pin is applied last so the grasped corner matches the
/// effector exactly.
pub fn step_cloth(
    state: &mut ClothState,
    forces: &[Vec3],
    mass: f64,
    dt: f64,
    pin: Option<Pin>,
    table: Option<Table>,
) -> Result<()> {
    if !(dt > 0.0) {
        return Err(Error::Params(format!("dt must be > 0, got {dt}")));
    }
    if let Some(index) = forces.iter().position(|f| !f.iter().all(|c| c.is_finite())) {
        return Err(Error::Numeric { index, what: "force".into() });
    }
    let inv_m = 1.0 / mass;
    for ((x, v), f) in state.positions.iter_mut().zip(state.velocities.iter_mut()).zip(forces) {
        *v += f * (inv_m * dt);
        *x += *v * dt;
    }
    if let Some(table) = table {
        for (x, v) in state.positions.iter_mut().zip(state.velocities.iter_mut()) {
            if x.z >= table.height {
                continue;
            }
            x.z = table.height;
            if v.z < 0.0 {
                let normal_dv = -v.z;
                v.z = 0.0;
                let tangential = (v.x * v.x + v.y * v.y).sqrt();
                if tangential > 0.0 {
                    let scale = (1.0 - table.friction * normal_dv / tangential).max(0.0);
                    v.x *= scale;
                    v.y *= scale;
                }
            }
        }
    }
    if let Some(pin) = pin {
        state.positions[pin.index] = pin.position;
        state.velocities[pin.index] = pin.velocity;
    }
    if let Some(index) = state
        .positions
        .iter()
        .chain(&state.velocities)
        .position(|v| !v.iter().all(|c| c.is_finite()))
    {
        return Err(Error::Numeric { index: index % state.len(), what: "state".into() });
    }
    Ok(())
}

/// Kinetic + elastic + gravitational potential energy (potential zero at z = 0).
pub fn mechanical_energy(state: &ClothState, topology: &Topology, params: &ClothParams, gravity: Vec3) -> f64 {
    let m = params.mass_per_point;
    let kinetic: f64 = state.velocities.iter().map(|v| 0.5 * m * v.norm_squared()).sum();
    let elastic: f64 = topology
        .springs
        .iter()
        .map(|s| {
            let stretch = (state.positions[s.b] - state.positions[s.a]).norm() - s.rest_length;
            0.5 * params.stiffness(s.kind) * stretch * stretch
        })
        .sum();
    let potential: f64 = state.positions.iter().map(|x| -m * gravity.dot(x)).sum();
    kinetic + elastic + potential
}

/// Grid indices of the landmark points, in tracked order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Landmarks {
    pub indices: [usize; TRACKED_POINTS],
}

pub const TRACKED_POINTS: usize = 8;

impl Landmarks {
    /// Order: p0 (non-grasped corner on the grasped x-edge), p1 (grasped corner),
    /// the two remaining corners, then the bottom, right, top and left edge midpoints.
    pub fn for_grid(grid_n: usize) -> Self {
        let n = grid_n;
        let m = (n - 1) / 2;
        let idx = |col: usize, row: usize| row * n + col;
        Self {
            indices: [
                idx(n - 1, n - 1),
                idx(n - 1, 0),
                idx(0, 0),
                idx(0, n - 1),
                idx(m, 0),
                idx(n - 1, m),
                idx(m, n - 1),
                idx(0, m),
            ],
        }
    }

    pub fn grasped(&self) -> usize {
        self.indices[1]
    }

    /// Corner across the fold line from p1.
    pub fn p1_partner(&self) -> usize {
        self.indices[2]
    }

    /// Corner across the fold line from p0.
    pub fn p0_partner(&self) -> usize {
        self.indices[3]
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrackedPoint {
    pub position: Vec3,
    pub velocity: Vec3,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrackedPoints(pub [TrackedPoint; TRACKED_POINTS]);

impl TrackedPoints {
    pub fn p0(&self) -> Vec3 {
        self.0[0].position
    }

    pub fn p1(&self) -> Vec3 {
        self.0[1].position
    }

    pub fn positions(&self) -> [Vec3; TRACKED_POINTS] {
        self.0.map(|p| p.position)
    }
}

pub fn tracked_points(state: &ClothState, landmarks: &Landmarks) -> TrackedPoints {
    TrackedPoints(landmarks.indices.map(|i| TrackedPoint {
        position: state.positions[i],
        velocity: state.velocities[i],
    }))
}

/// A cloth instance: parameters, topology, state and attachment bookkeeping.
#[derive(Clone, Debug)]
pub struct Cloth {
    pub params: ClothParams,
    pub topology: Topology,
    pub state: ClothState,
    pub landmarks: Landmarks,
    pub origin: Vec3,
    forces: Vec<Vec3>,
}

impl Cloth {
    pub fn new(params: ClothParams, origin: Vec3) -> Result<Self> {
        let (state, topology) = build_cloth(&params, origin)?;
        let landmarks = Landmarks::for_grid(params.grid_n);
        let forces = vec![Vec3::zeros(); state.len()];
        Ok(Self { params, topology, state, landmarks, origin, forces })
    }

    pub fn grasped_position(&self) -> Vec3 {
        self.state.positions[self.landmarks.grasped()]
    }

    pub fn tracked(&self) -> TrackedPoints {
        tracked_points(&self.state, &self.landmarks)
    }

    /// x coordinate of the fold line.
    pub fn fold_line_x(&self) -> f64 {
        self.origin.x + 0.5 * self.params.side_length
    }

    /// Advance by `dt` with the grasped corner pinned to the effector.
    pub fn step(&mut self, grasp_position: Vec3, grasp_velocity: Vec3, gravity: Vec3, dt: f64, table: Option<f64>) -> Result<()> {
        accumulate_forces_into(&self.state, &self.topology, &self.params, gravity, &mut self.forces);
        let pin = Pin { index: self.landmarks.grasped(), position: grasp_position, velocity: grasp_velocity };
        let table = table.map(|height| Table { height, friction: self.params.friction });
        step_cloth(&mut self.state, &self.forces, self.params.mass_per_point, dt, Some(pin), table)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(grid_n: usize, side: f64) -> ClothParams {
        ClothParams { grid_n, side_length: side, ..ClothParams::default() }
    }

    #[test]
    fn three_by_three_spring_counts() {
        let (state, topo) = build_cloth(&small(3, 0.2), Vec3::zeros()).unwrap();
        assert_eq!(state.len(), 9);
        assert_eq!(topo.count(SpringKind::Struct), 12);
        assert_eq!(topo.count(SpringKind::Shear), 8);
        assert_eq!(topo.count(SpringKind::Bend), 6);
    }

    #[test]
    fn structural_rest_length_is_spacing() {
        let (_, topo) = build_cloth(&small(3, 0.2), Vec3::zeros()).unwrap();
        for s in topo.springs.iter().filter(|s| s.kind == SpringKind::Struct) {
            assert!((s.rest_length - 0.1).abs() < 1e-15);
        }
    }

    #[test]
    fn no_duplicate_pairs() {
        let (_, topo) = build_cloth(&small(6, 0.3), Vec3::zeros()).unwrap();
        let mut pairs: Vec<_> = topo.springs.iter().map(|s| (s.a.min(s.b), s.a.max(s.b))).collect();
        let before = pairs.len();
        pairs.sort_unstable();
        pairs.dedup();
        assert_eq!(before, pairs.len());
    }

    #[test]
    fn fresh_cloth_is_at_rest() {
        let (state, _) = build_cloth(&ClothParams::default(), Vec3::new(0.1, -0.2, 0.3)).unwrap();
        assert!(state.velocities.iter().all(|v| *v == Vec3::zeros()));
        assert!(state.positions.iter().all(|p| p.z == 0.3));
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(build_cloth(&small(2, 0.2), Vec3::zeros()).is_err());
        assert!(build_cloth(&small(5, 1.5), Vec3::zeros()).is_err());
        let p = ClothParams { k_bend: 0.0, ..ClothParams::default() };
        assert!(matches!(build_cloth(&p, Vec3::zeros()), Err(Error::Params(_))));
    }

    fn pair(stretch: f64, k: f64) -> (ClothState, Topology, ClothParams) {
        let state = ClothState {
            positions: vec![Vec3::zeros(), Vec3::new(0.1 + stretch, 0.0, 0.0)],
            velocities: vec![Vec3::zeros(); 2],
        };
        let topo = Topology {
            springs: vec![Spring { a: 0, b: 1, rest_length: 0.1, kind: SpringKind::Struct }],
        };
        let params = ClothParams { k_struct: k, ..ClothParams::default() };
        (state, topo, params)
    }

    #[test]
    fn hooke_force_on_stretched_pair() {
        let (state, topo, params) = pair(0.01, 100.0);
        let mut f = vec![Vec3::zeros(); 2];
        spring_forces_into(&state, &topo, &params, &mut f);
        assert!((f[0] - Vec3::new(1.0, 0.0, 0.0)).norm() < 1e-12);
        assert!((f[1] - Vec3::new(-1.0, 0.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn rest_state_has_zero_force_without_gravity() {
        let (state, topo) = build_cloth(&small(4, 0.3), Vec3::zeros()).unwrap();
        let f = accumulate_forces(&state, &topo, &small(4, 0.3), Vec3::zeros());
        assert!(f.iter().all(|f| f.norm() < 1e-12));
    }

    #[test]
    fn coincident_points_give_zero_force() {
        let (mut state, topo, params) = pair(0.0, 100.0);
        state.positions[1] = state.positions[0];
        state.velocities[1] = Vec3::new(1.0, 0.0, 0.0);
        let mut f = vec![Vec3::zeros(); 2];
        spring_forces_into(&state, &topo, &params, &mut f);
        assert_eq!(f, vec![Vec3::zeros(); 2]);
    }

    #[test]
    fn free_flight_advances_position() {
        let mut state = ClothState {
            positions: vec![Vec3::zeros()],
            velocities: vec![Vec3::new(1.0, 0.0, 0.0)],
        };
        step_cloth(&mut state, &[Vec3::zeros()], 1.0, 0.01, None, None).unwrap();
        assert!((state.positions[0].x - 0.01).abs() < 1e-15);
    }

    #[test]
    fn gravity_drop_matches_semi_implicit_sum() {
        // after N steps: z = -g dt^2 * sum_{i=1..N} i = -g dt^2 N(N+1)/2
        let g = 9.81;
        let mut state = ClothState { positions: vec![Vec3::zeros()], velocities: vec![Vec3::zeros()] };
        for _ in 0..100 {
            step_cloth(&mut state, &[Vec3::new(0.0, 0.0, -g)], 1.0, 0.01, None, None).unwrap();
        }
        let expected = 0.505 * g;
        assert!((state.positions[0].z + expected).abs() < 1e-12);
        // semi-implicit bias relative to the continuous 0.5 g t^2
        assert!((-state.positions[0].z - 0.5 * g - 0.005 * g).abs() < 1e-12);
    }

    #[test]
    fn non_finite_force_reports_index() {
        let mut state = ClothState { positions: vec![Vec3::zeros(); 3], velocities: vec![Vec3::zeros(); 3] };
        let forces = [Vec3::zeros(), Vec3::zeros(), Vec3::new(f64::NAN, 0.0, 0.0)];
        match step_cloth(&mut state, &forces, 1.0, 0.01, None, None) {
            Err(Error::Numeric { index, .. }) => assert_eq!(index, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn pin_overrides_integration() {
        let mut cloth = Cloth::new(small(3, 0.2), Vec3::zeros()).unwrap();
        let target = Vec3::new(0.3, 0.1, 0.05);
        cloth.step(target, Vec3::new(0.0, 0.0, 1.0), crate::gravity(), 0.01, None).unwrap();
        assert_eq!(cloth.grasped_position(), target);
        assert_eq!(cloth.tracked().p1(), target);
    }

    #[test]
    fn table_stops_falling_points() {
        let mut cloth = Cloth::new(small(3, 0.2), Vec3::zeros()).unwrap();
        let grasp = cloth.grasped_position();
        for _ in 0..200 {
            cloth.step(grasp, Vec3::zeros(), crate::gravity(), 0.002, Some(0.0)).unwrap();
        }
        assert!(cloth.state.positions.iter().all(|p| p.z >= 0.0));
    }

    #[test]
    fn tracked_layout() {
        let cloth = Cloth::new(small(3, 0.2), Vec3::zeros()).unwrap();
        let t = cloth.tracked();
        assert!(((t.p0() - t.p1()).norm() - 0.2).abs() < 1e-12);
        assert!(t.0.iter().all(|p| p.velocity == Vec3::zeros()));
        assert_eq!(t.p1(), Vec3::new(0.2, 0.0, 0.0));
        assert_eq!(t.p0(), Vec3::new(0.2, 0.2, 0.0));
        // mid-edge points sit halfway along each edge
        assert_eq!(t.0[4].position, Vec3::new(0.1, 0.0, 0.0));
        assert_eq!(t.0[7].position, Vec3::new(0.0, 0.1, 0.0));
    }
}
