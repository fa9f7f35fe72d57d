//! Procedural rooms, episode state, collision bookkeeping and goal placement.
//!
//! The room spans `x, y ∈ [-5, 5]` and `z ∈ [0, 10]`. The central 8 m × 8 m
//! area is divided into 64 unit cells; obstacles are vertical cylinders that
//! stand on cell centers and span the full room height.

use nalgebra::{Unit, UnitQuaternion, Vector3};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dynamics::{self, QuadParams, RobotState};
use crate::error::{Error, Result};

pub const GRID_CELLS_PER_SIDE: usize = 8;
pub const GRID_CELLS: usize = GRID_CELLS_PER_SIDE * GRID_CELLS_PER_SIDE;
pub const CELL_SIZE: f64 = 1.0;
pub const ROOM_EXTENT: [f64; 3] = [10.0, 10.0, 10.0];

/// Lattice spacing used when searching for the point farthest from all obstacles.
pub const GOAL_SEARCH_RESOLUTION: f64 = 0.05;
/// Goals keep this distance from the walls.
pub const GOAL_WALL_MARGIN: f64 = 0.5;
/// Altitude of the shared goal.
pub const SHARED_GOAL_HEIGHT: f64 = 2.0;

const SPAWN_HEIGHT: (f64, f64) = (1.0, 3.0);
const SPAWN_MAX_TILT: f64 = 0.3;
const SPAWN_MAX_SPEED: f64 = 0.5;
const TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    pub center: [f64; 2],
    pub radius: f64,
}

impl Obstacle {
    /// Horizontal distance from `(x, y)` to the cylinder surface; negative inside.
    #[inline]
    pub fn surface_distance(&self, x: f64, y: f64) -> f64 {
        let dx = x - self.center[0];
        let dy = y - self.center[1];
        (dx * dx + dy * dy).sqrt() - self.radius
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObstacleLayout {
    pub obstacles: Vec<Obstacle>,
    pub room_extent: [f64; 3],
    /// Lower-left corner of the obstacle grid.
    pub grid_origin: [f64; 2],
    pub cell_size: f64,
}

impl Default for ObstacleLayout {
    fn default() -> Self {
        ObstacleLayout::empty()
    }
}

impl ObstacleLayout {
    pub fn empty() -> Self {
        let half = GRID_CELLS_PER_SIDE as f64 * CELL_SIZE / 2.0;
        ObstacleLayout {
            obstacles: Vec::new(),
            room_extent: ROOM_EXTENT,
            grid_origin: [-half, -half],
            cell_size: CELL_SIZE,
        }
    }

    /// Center of grid cell `index` (row-major, x fastest).
    pub fn cell_center(&self, index: usize) -> [f64; 2] {
        let col = index % GRID_CELLS_PER_SIDE;
        let row = index / GRID_CELLS_PER_SIDE;
        [
            self.grid_origin[0] + (col as f64 + 0.5) * self.cell_size,
            self.grid_origin[1] + (row as f64 + 0.5) * self.cell_size,
        ]
    }

    /// Centers of the unit cells in the ring between the grid and the walls.
    pub fn border_cell_centers(&self) -> Vec<[f64; 2]> {
        let half_x = self.room_extent[0] / 2.0;
        let half_y = self.room_extent[1] / 2.0;
        let nx = (self.room_extent[0] / self.cell_size).round() as usize;
        let ny = (self.room_extent[1] / self.cell_size).round() as usize;
        let mut out = Vec::new();
        for row in 0..ny {
            for col in 0..nx {
                let c = [
                    -half_x + (col as f64 + 0.5) * self.cell_size,
                    -half_y + (row as f64 + 0.5) * self.cell_size,
                ];
                let inside_grid = (0..2).all(|k| {
                    c[k] > self.grid_origin[k]
                        && c[k] < self.grid_origin[k] + GRID_CELLS_PER_SIDE as f64 * self.cell_size
                });
                if !inside_grid {
                    out.push(c);
                }
            }
        }
        out
    }

    pub fn half_extent(&self) -> [f64; 2] {
        [self.room_extent[0] / 2.0, self.room_extent[1] / 2.0]
    }

    pub fn height(&self) -> f64 {
        self.room_extent[2]
    }

    /// Distance from `(x, y)` to the nearest obstacle surface (infinite when empty).
    pub fn clearance(&self, x: f64, y: f64) -> f64 {
        self.obstacles
            .iter()
            .map(|o| o.surface_distance(x, y))
            .fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GoalMode {
    #[default]
    SameGoal,
    RandomGoals,
    /// All robots chase one goal moving along a curve (driven by the evaluation harness).
    Pursuit,
    /// Random goals that get permuted once mid-episode (driven by the evaluation harness).
    Swap,
}

/// Single-robot episode with a fixed start and goal and no obstacles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointToPoint {
    pub start: [f64; 3],
    pub goal: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpisodeConfig {
    pub n_robots: usize,
    /// Fraction of the 64 grid cells holding an obstacle.
    pub obstacle_density: f64,
    /// Obstacle diameter, m.
    pub obstacle_size: f64,
    pub goal_mode: GoalMode,
    /// Steps per episode.
    pub episode_length: u32,
    pub seed: u64,
    /// Overrides procedural generation when present.
    pub point_to_point: Option<PointToPoint>,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        EpisodeConfig {
            n_robots: 8,
            obstacle_density: 0.2,
            obstacle_size: 0.6,
            goal_mode: GoalMode::SameGoal,
            episode_length: 1500,
            seed: 0,
            point_to_point: None,
        }
    }
}

impl EpisodeConfig {
    pub fn obstacle_count(&self) -> usize {
        (self.obstacle_density * GRID_CELLS as f64).floor() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.obstacle_density) {
            return Err(Error::config(
                "world.obstacle_density",
                format!("must lie in [0, 1], got {}", self.obstacle_density),
            ));
        }
        if !(self.obstacle_size > 0.0 && self.obstacle_size <= CELL_SIZE) {
            return Err(Error::config(
                "world.obstacle_size",
                format!("must lie in (0, {CELL_SIZE}], got {}", self.obstacle_size),
            ));
        }
        if self.n_robots == 0 {
            return Err(Error::config("world.n_robots", "must be at least 1"));
        }
        if self.episode_length == 0 {
            return Err(Error::config("world.episode_length", "must be at least 1"));
        }
        if self.point_to_point.is_some() && self.n_robots != 1 {
            return Err(Error::config(
                "world.n_robots",
                "point_to_point episodes hold exactly one robot",
            ));
        }
        let spawn_cells = GRID_CELLS - self.obstacle_count() + ObstacleLayout::empty().border_cell_centers().len();
        if self.n_robots > spawn_cells {
            return Err(Error::Infeasible(format!(
                "{} robots do not fit in {spawn_cells} obstacle-free cells",
                self.n_robots
            )));
        }
        Ok(())
    }
}

/// New-contact events for one robot during one step.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CollisionEvents {
    pub obstacle_hit: bool,
    pub robot_hit: bool,
    pub floor_hit: bool,
}

impl CollisionEvents {
    pub fn any(&self) -> bool {
        self.obstacle_hit || self.robot_hit || self.floor_hit
    }

    /// Obstacle or robot contact; these feed the replay buffer.
    pub fn is_crash(&self) -> bool {
        self.obstacle_hit || self.robot_hit
    }
}

/// Persistent-contact latches. An event fires only when a latch goes from open to closed.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ContactLatches {
    /// `robot[i * n + j]`, symmetric.
    pub robot: Vec<bool>,
    /// `obstacle[i * m + k]`.
    pub obstacle: Vec<bool>,
    pub floor: Vec<bool>,
}

impl ContactLatches {
    fn new(n_robots: usize, n_obstacles: usize) -> Self {
        ContactLatches {
            robot: vec![false; n_robots * n_robots],
            obstacle: vec![false; n_robots * n_obstacles],
            floor: vec![false; n_robots],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub robots: Vec<RobotState>,
    pub goals: Vec<Vector3<f64>>,
    pub layout: ObstacleLayout,
    pub tick: u32,
    pub latches: ContactLatches,
}

const SNAPSHOT_MAGIC: &[u8; 4] = b"SWWS";
const SNAPSHOT_VERSION: u32 = 1;

impl WorldState {
    pub fn new(robots: Vec<RobotState>, goals: Vec<Vector3<f64>>, layout: ObstacleLayout) -> Self {
        let latches = ContactLatches::new(robots.len(), layout.obstacles.len());
        WorldState {
            robots,
            goals,
            layout,
            tick: 0,
            latches,
        }
    }

    pub fn n_robots(&self) -> usize {
        self.robots.len()
    }

    pub fn snapshot(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(256);
        out.extend_from_slice(SNAPSHOT_MAGIC);
        out.extend_from_slice(&SNAPSHOT_VERSION.to_le_bytes());
        bincode::serialize_into(&mut out, self).expect("in-memory serialization");
        out
    }

    pub fn restore(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 8 || &bytes[..4] != SNAPSHOT_MAGIC {
            return Err(Error::Decode("not a world snapshot".into()));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != SNAPSHOT_VERSION {
            return Err(Error::Version {
                found: version,
                expected: SNAPSHOT_VERSION,
            });
        }
        let world: WorldState = bincode::deserialize(&bytes[8..])?;
        let n = world.robots.len();
        let m = world.layout.obstacles.len();
        if world.goals.len() != n
            || world.latches.robot.len() != n * n
            || world.latches.obstacle.len() != n * m
            || world.latches.floor.len() != n
        {
            return Err(Error::Decode("inconsistent world dimensions".into()));
        }
        Ok(world)
    }

    /// Advance every robot simultaneously, clamp to the room and report new contacts.
    pub fn step(&mut self, actions: &[[f64; 4]], params: &QuadParams) -> Result<Vec<CollisionEvents>> {
        if actions.len() != self.robots.len() {
            return Err(Error::Dimension(format!(
                "{} actions for {} robots",
                actions.len(),
                self.robots.len()
            )));
        }
        let [hx, hy] = self.layout.half_extent();
        let top = self.layout.height();
        for (robot, action) in self.robots.iter_mut().zip(actions) {
            let thrusts = dynamics::action_to_thrusts(action, params)?;
            let mut next = dynamics::step(robot, &thrusts, params);
            clamp_axis(&mut next, 0, -hx + params.radius, hx - params.radius);
            clamp_axis(&mut next, 1, -hy + params.radius, hy - params.radius);
            clamp_axis(&mut next, 2, 0.0, top - params.radius);
            if !next.is_finite() {
                return Err(Error::NonFinite("robot state"));
            }
            *robot = next;
        }
        self.tick += 1;
        Ok(detect_collisions(self, params.radius))
    }
}

fn clamp_axis(state: &mut RobotState, axis: usize, lo: f64, hi: f64) {
    let p = state.position[axis];
    if p < lo {
        state.position[axis] = lo;
        state.velocity[axis] = state.velocity[axis].max(0.0);
    } else if p > hi {
        state.position[axis] = hi;
        state.velocity[axis] = state.velocity[axis].min(0.0);
    }
}

/// Current (unlatched) contacts for robot `i`.
fn robot_obstacle_contact(robot: &RobotState, obstacle: &Obstacle, layout: &ObstacleLayout, radius: f64) -> bool {
    let p = robot.position;
    let dx = p.x - obstacle.center[0];
    let dy = p.y - obstacle.center[1];
    let reach = obstacle.radius + radius;
    dx * dx + dy * dy < reach * reach && p.z >= 0.0 && p.z <= layout.height()
}

/// Update contact latches on the current state and return the new-contact events.
///
/// Each (robot, obstacle), (robot, robot) and (robot, floor) pair fires once when
/// contact begins and stays silent until the pair separates.
pub fn detect_collisions(world: &mut WorldState, robot_radius: f64) -> Vec<CollisionEvents> {
    let n = world.robots.len();
    let m = world.layout.obstacles.len();
    let mut events = vec![CollisionEvents::default(); n];
    let latches = &mut world.latches;

    for i in 0..n {
        let robot = &world.robots[i];
        for (k, obstacle) in world.layout.obstacles.iter().enumerate() {
            let contact = robot_obstacle_contact(robot, obstacle, &world.layout, robot_radius);
            let latch = &mut latches.obstacle[i * m + k];
            if contact && !*latch {
                events[i].obstacle_hit = true;
            }
            *latch = contact;
        }

        let on_floor = robot.position.z < robot_radius;
        if on_floor && !latches.floor[i] {
            events[i].floor_hit = true;
        }
        latches.floor[i] = on_floor;
    }

    let min_sep = 2.0 * robot_radius;
    for i in 0..n {
        for j in (i + 1)..n {
            let contact = (world.robots[i].position - world.robots[j].position).norm() < min_sep;
            let latched = latches.robot[i * n + j];
            if contact && !latched {
                events[i].robot_hit = true;
                events[j].robot_hit = true;
            }
            latches.robot[i * n + j] = contact;
            latches.robot[j * n + i] = contact;
        }
    }
    events
}

fn random_spawn_state<R: Rng + ?Sized>(xy: [f64; 2], rng: &mut R) -> RobotState {
    let z = rng.gen_range(SPAWN_HEIGHT.0..SPAWN_HEIGHT.1);
    let mut state = RobotState::at_rest(Vector3::new(xy[0], xy[1], z));
    state.rotation = random_tilt(rng).to_rotation_matrix().into_inner();
    state.velocity = Vector3::from_fn(|_, _| rng.gen_range(-SPAWN_MAX_SPEED..SPAWN_MAX_SPEED));
    state
}

fn random_tilt<R: Rng + ?Sized>(rng: &mut R) -> UnitQuaternion<f64> {
    let axis = loop {
        let v = Vector3::<f64>::from_fn(|_, _| StandardNormal.sample(rng));
        if v.norm() > 1e-9 {
            break Unit::new_normalize(v);
        }
    };
    let angle = rng.gen_range(0.0..SPAWN_MAX_TILT);
    UnitQuaternion::from_axis_angle(&axis, angle)
}

/// Build a fresh episode: obstacles, robot spawns and goals.
///
/// Robots take distinct obstacle-free grid cells first. When the grid runs out of
/// free cells the remaining robots spawn in the ring of unit cells outside the grid.
pub fn generate_world<R: Rng + ?Sized>(config: &EpisodeConfig, params: &QuadParams, rng: &mut R) -> Result<WorldState> {
    config.validate()?;
    let mut layout = ObstacleLayout::empty();

    if let Some(p2p) = &config.point_to_point {
        let start = random_spawn_state([p2p.start[0], p2p.start[1]], rng);
        let start = RobotState {
            position: Vector3::from(p2p.start),
            ..start
        };
        return Ok(WorldState::new(vec![start], vec![Vector3::from(p2p.goal)], layout));
    }

    let n_obstacles = config.obstacle_count();
    let occupied = rand::seq::index::sample(rng, GRID_CELLS, n_obstacles).into_vec();
    let mut is_occupied = [false; GRID_CELLS];
    for &cell in &occupied {
        is_occupied[cell] = true;
    }
    let radius = config.obstacle_size / 2.0;
    layout.obstacles = occupied
        .iter()
        .map(|&cell| Obstacle {
            center: layout.cell_center(cell),
            radius,
        })
        .collect();

    let mut free: Vec<[f64; 2]> = (0..GRID_CELLS)
        .filter(|c| !is_occupied[*c])
        .map(|c| layout.cell_center(c))
        .collect();
    free.shuffle(rng);
    if free.len() < config.n_robots {
        let mut border = layout.border_cell_centers();
        border.shuffle(rng);
        free.extend(border);
    }
    if free.len() < config.n_robots {
        return Err(Error::Infeasible(format!(
            "{} robots do not fit in {} free cells",
            config.n_robots,
            free.len()
        )));
    }
    let robots: Vec<RobotState> = free[..config.n_robots]
        .iter()
        .map(|&xy| random_spawn_state(xy, rng))
        .collect();

    let goals = vec![Vector3::zeros(); robots.len()];
    let mut world = WorldState::new(robots, goals, layout);
    assign_goals(&mut world, config.goal_mode, params.radius, rng);
    Ok(world)
}

/// Lattice point (at the shared goal height) maximizing clearance to every obstacle.
///
/// Ties go to the point nearest the room center, then to the lexicographically
/// smallest `(x, y)`.
pub fn farthest_free_point(layout: &ObstacleLayout) -> Vector3<f64> {
    let [hx, hy] = layout.half_extent();
    let kx = ((hx - GOAL_WALL_MARGIN) / GOAL_SEARCH_RESOLUTION).round() as i64;
    let ky = ((hy - GOAL_WALL_MARGIN) / GOAL_SEARCH_RESOLUTION).round() as i64;

    let mut best = (f64::NEG_INFINITY, f64::INFINITY, 0.0, 0.0);
    for iy in -ky..=ky {
        let y = iy as f64 * GOAL_SEARCH_RESOLUTION;
        for ix in -kx..=kx {
            let x = ix as f64 * GOAL_SEARCH_RESOLUTION;
            let clearance = layout.clearance(x, y);
            let center_dist = x * x + y * y;
            let same = clearance == best.0 || (clearance - best.0).abs() <= TIE_TOLERANCE;
            let better = if same {
                tie_break(center_dist, x, y, &best)
            } else {
                clearance > best.0
            };
            if better {
                best = (clearance, center_dist, x, y);
            }
        }
    }
    Vector3::new(best.2, best.3, SHARED_GOAL_HEIGHT)
}

fn tie_break(center_dist: f64, x: f64, y: f64, best: &(f64, f64, f64, f64)) -> bool {
    if center_dist < best.1 - TIE_TOLERANCE {
        return true;
    }
    if (center_dist - best.1).abs() <= TIE_TOLERANCE {
        return (x, y) < (best.2, best.3);
    }
    false
}

/// Uniform point over obstacle-free floor space, at a random flight height.
pub fn random_free_point<R: Rng + ?Sized>(layout: &ObstacleLayout, robot_radius: f64, rng: &mut R) -> Vector3<f64> {
    let [hx, hy] = layout.half_extent();
    let (xr, yr) = (hx - GOAL_WALL_MARGIN, hy - GOAL_WALL_MARGIN);
    for _ in 0..10_000 {
        let x = rng.gen_range(-xr..=xr);
        let y = rng.gen_range(-yr..=yr);
        if layout.clearance(x, y) > robot_radius {
            let z = rng.gen_range(SPAWN_HEIGHT.0..SPAWN_HEIGHT.1);
            return Vector3::new(x, y, z);
        }
    }
    farthest_free_point(layout)
}

pub fn assign_goals<R: Rng + ?Sized>(world: &mut WorldState, mode: GoalMode, robot_radius: f64, rng: &mut R) {
    match mode {
        GoalMode::SameGoal | GoalMode::Pursuit => {
            let goal = farthest_free_point(&world.layout);
            world.goals.iter_mut().for_each(|g| *g = goal);
        }
        GoalMode::RandomGoals | GoalMode::Swap => {
            for i in 0..world.goals.len() {
                world.goals[i] = random_free_point(&world.layout, robot_radius, rng);
            }
        }
    }
}
