//! Arena model: terrain, obstacles, target and the robot's kinematics.

mod robot;
mod terrain;

use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use robot::{
    proximity_from_distance, ray_distances, reached_target, sense, step, RobotBody, RobotState,
    SensorReading, StepConfig, DEFAULT_BEARINGS_DEG, SENSOR_COUNT,
};
pub use terrain::{Junction, Terrain, TerrainKind};

use crate::rng;

pub const STANDARD_GRAVITY: f64 = 9.81;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl Bounds {
    pub fn width(&self) -> f64 {
        self.max[0] - self.min[0]
    }

    pub fn height(&self) -> f64 {
        self.max[1] - self.min[1]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    pub center: [f64; 2],
    pub radius: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Target {
    pub center: [f64; 2],
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct World {
    pub terrain: Terrain,
    pub obstacles: Vec<Obstacle>,
    pub target: Target,
    pub bounds: Bounds,
    /// Scales uphill attenuation: `slope_gain = slope_sensitivity * gravity / g`.
    pub gravity: f64,
    pub slope_sensitivity: f64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlacementError {
    #[error("could not place obstacle {index} of {requested} without overlap in {attempts} attempts")]
    Exhausted {
        index: usize,
        requested: usize,
        attempts: usize,
    },
    #[error("invalid world config: {0}")]
    Invalid(String),
}

pub const PLACEMENT_ATTEMPTS: usize = 1000;

/// Key-value description of a world, stored as TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WorldConfig {
    pub terrain: TerrainKind,
    pub seed: u64,
    pub amplitude: f64,
    pub cell_size: f64,
    pub obstacles: usize,
    pub obstacle_radius_min: f64,
    pub obstacle_radius_max: f64,
    /// Obstacle centres are drawn within `spread` half-extents of the
    /// target; 1 covers the whole arena when the target is central.
    pub obstacle_spread: f64,
    pub target_x: f64,
    pub target_y: f64,
    pub target_radius: f64,
    pub width: f64,
    pub height: f64,
    pub gravity: f64,
    pub slope_sensitivity: f64,
    /// Plateau height of the bumpy half of a combined arena.
    pub junction_rise: f64,
    /// Ramp run leading up to the plateau.
    pub junction_ramp: f64,
    /// Robot radius used for clearance around the start corners and target.
    pub robot_radius: f64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            terrain: TerrainKind::Flat,
            seed: 0,
            amplitude: 0.3,
            cell_size: 0.25,
            obstacles: 0,
            obstacle_radius_min: 0.3,
            obstacle_radius_max: 0.6,
            obstacle_spread: 0.7,
            target_x: 10.0,
            target_y: 10.0,
            target_radius: 1.0,
            width: 20.0,
            height: 20.0,
            gravity: STANDARD_GRAVITY,
            slope_sensitivity: 7.0,
            junction_rise: 0.6,
            junction_ramp: 2.0,
            robot_radius: RobotBody::default().body_radius,
        }
    }
}

impl WorldConfig {
    pub fn new(terrain: TerrainKind, obstacles: usize, seed: u64) -> Self {
        WorldConfig {
            terrain,
            obstacles,
            seed,
            ..WorldConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), PlacementError> {
        let bad = |m: &str| Err(PlacementError::Invalid(m.to_string()));
        if !(self.width > 0.0 && self.height > 0.0) {
            return bad("width and height must be positive");
        }
        if !(self.cell_size > 0.0) {
            return bad("cell_size must be positive");
        }
        if self.amplitude < 0.0 || self.target_radius <= 0.0 || self.robot_radius <= 0.0 {
            return bad("amplitude must be >= 0; target and robot radius > 0");
        }
        if !(0.0 < self.obstacle_radius_min && self.obstacle_radius_min <= self.obstacle_radius_max)
        {
            return bad("obstacle radii need 0 < min <= max");
        }
        if !(self.obstacle_spread > 0.0) {
            return bad("obstacle_spread must be positive");
        }
        if !(0.0..=self.width).contains(&self.target_x) || !(0.0..=self.height).contains(&self.target_y)
        {
            return bad("target must lie inside the bounds");
        }
        Ok(())
    }

    pub fn build(&self) -> Result<World, PlacementError> {
        self.validate()?;
        let bounds = Bounds {
            min: [0.0, 0.0],
            max: [self.width, self.height],
        };
        let junction = Junction {
            rise: self.junction_rise,
            ramp: self.junction_ramp,
        };
        let terrain = Terrain::generate(
            self.terrain,
            &bounds,
            self.cell_size,
            self.amplitude,
            junction,
            self.seed,
        );
        let target = Target {
            center: [self.target_x, self.target_y],
            radius: self.target_radius,
        };
        let mut world = World {
            terrain,
            obstacles: Vec::new(),
            target,
            bounds,
            gravity: self.gravity,
            slope_sensitivity: self.slope_sensitivity,
        };
        world.obstacles = self.place_obstacles(&world)?;
        Ok(world)
    }

    fn place_obstacles(&self, world: &World) -> Result<Vec<Obstacle>, PlacementError> {
        let mut rng = rng::stream(self.seed, 0x0b57);
        let r_body = self.robot_radius;
        let mut placed: Vec<Obstacle> = Vec::with_capacity(self.obstacles);
        for index in 0..self.obstacles {
            let mut ok = None;
            for _ in 0..PLACEMENT_ATTEMPTS {
                let radius = if self.obstacle_radius_max > self.obstacle_radius_min {
                    rng.random_range(self.obstacle_radius_min..self.obstacle_radius_max)
                } else {
                    self.obstacle_radius_min
                };
                if 2.0 * radius >= self.width || 2.0 * radius >= self.height {
                    continue;
                }
                let span = |t: f64, extent: f64| {
                    let half = self.obstacle_spread * extent / 2.0;
                    (t - half).max(radius)..(t + half).min(extent - radius)
                };
                let (sx, sy) = (span(self.target_x, self.width), span(self.target_y, self.height));
                if sx.is_empty() || sy.is_empty() {
                    continue;
                }
                let c = [rng.random_range(sx), rng.random_range(sy)];
                let candidate = Obstacle { center: c, radius };
                if world.admits(&candidate, &placed, r_body) {
                    ok = Some(candidate);
                    break;
                }
            }
            match ok {
                Some(o) => placed.push(o),
                None => {
                    return Err(PlacementError::Exhausted {
                        index,
                        requested: self.obstacles,
                        attempts: PLACEMENT_ATTEMPTS,
                    })
                }
            }
        }
        Ok(placed)
    }
}

/// World with default geometry for a terrain kind, obstacle count and seed.
pub fn make_world(kind: TerrainKind, obstacles: usize, seed: u64) -> Result<World, PlacementError> {
    WorldConfig::new(kind, obstacles, seed).build()
}

impl World {
    pub fn slope_gain(&self) -> f64 {
        self.slope_sensitivity * self.gravity / STANDARD_GRAVITY
    }

    /// Forward-speed multiplier for motion along `heading` (backwards when
    /// `velocity < 0`). Downhill and level motion are unattenuated.
    pub fn slope_factor(&self, x: f64, y: f64, heading: f64, velocity: f64) -> f64 {
        if velocity == 0.0 || self.terrain.kind == TerrainKind::Flat {
            return 1.0;
        }
        let g = self.terrain.gradient(x, y);
        let grade = (g[0] * heading.cos() + g[1] * heading.sin()) * velocity.signum();
        (1.0 - self.slope_gain() * grade.max(0.0)).max(0.0)
    }

    /// Does a disc at `(x, y)` overlap an obstacle or leave the bounds?
    pub fn collides(&self, x: f64, y: f64, radius: f64) -> bool {
        if x - radius < self.bounds.min[0]
            || x + radius > self.bounds.max[0]
            || y - radius < self.bounds.min[1]
            || y + radius > self.bounds.max[1]
        {
            return true;
        }
        self.obstacles.iter().any(|o| {
            let dx = x - o.center[0];
            let dy = y - o.center[1];
            dx * dx + dy * dy < (o.radius + radius).powi(2)
        })
    }

    /// Distance from `origin` along unit `dir` to the first obstacle or wall.
    pub fn cast_ray(&self, origin: [f64; 2], dir: [f64; 2]) -> f64 {
        let mut best = f64::INFINITY;
        for axis in 0..2 {
            let wall = if dir[axis] > 0.0 {
                self.bounds.max[axis]
            } else if dir[axis] < 0.0 {
                self.bounds.min[axis]
            } else {
                continue;
            };
            best = best.min(((wall - origin[axis]) / dir[axis]).max(0.0));
        }
        for o in &self.obstacles {
            let ox = origin[0] - o.center[0];
            let oy = origin[1] - o.center[1];
            let c = ox * ox + oy * oy - o.radius * o.radius;
            if c <= 0.0 {
                return 0.0;
            }
            let b = ox * dir[0] + oy * dir[1];
            let disc = b * b - c;
            if disc < 0.0 || b > 0.0 {
                continue;
            }
            let t = -b - disc.sqrt();
            if t >= 0.0 {
                best = best.min(t);
            }
        }
        best
    }

    /// Placement rule for obstacles: inside the bounds, at least two robot
    /// radii from every corner start and from the reach circle, and not
    /// overlapping anything already placed.
    pub fn admits(&self, o: &Obstacle, placed: &[Obstacle], robot_radius: f64) -> bool {
        let c = o.center;
        let inside = c[0] - o.radius >= self.bounds.min[0]
            && c[0] + o.radius <= self.bounds.max[0]
            && c[1] - o.radius >= self.bounds.min[1]
            && c[1] + o.radius <= self.bounds.max[1];
        let dist = |p: [f64; 2]| ((c[0] - p[0]).powi(2) + (c[1] - p[1]).powi(2)).sqrt();
        let clear_of_starts =
            (0..4).all(|k| dist(self.corner(k, robot_radius)) >= o.radius + 2.0 * robot_radius);
        let clear_of_target =
            dist(self.target.center) >= o.radius + self.target.radius + 2.0 * robot_radius;
        let clear_of_others = placed.iter().all(|p| dist(p.center) >= o.radius + p.radius);
        inside && clear_of_starts && clear_of_target && clear_of_others
    }

    /// Start position `k` (mod 4): the bounds corners inset by twice the
    /// robot radius, counter-clockwise from the minimum corner.
    pub fn corner(&self, k: usize, robot_radius: f64) -> [f64; 2] {
        let inset = 2.0 * robot_radius;
        let (lo, hi) = (self.bounds.min, self.bounds.max);
        match k % 4 {
            0 => [lo[0] + inset, lo[1] + inset],
            1 => [hi[0] - inset, lo[1] + inset],
            2 => [hi[0] - inset, hi[1] - inset],
            _ => [lo[0] + inset, hi[1] - inset],
        }
    }

    /// Robot at corner `k`, facing the target.
    pub fn corner_start(&self, k: usize, body: &RobotBody) -> RobotState {
        let [x, y] = self.corner(k, body.body_radius);
        let heading = (self.target.center[1] - y).atan2(self.target.center[0] - x);
        RobotState::at(x, y, heading, body)
    }

    /// Distance from a point to the edge of the reach circle (0 inside it).
    pub fn distance_to_goal(&self, body: &RobotBody, x: f64, y: f64) -> f64 {
        let d = ((x - self.target.center[0]).powi(2) + (y - self.target.center[1]).powi(2)).sqrt();
        (d - self.target.radius - body.body_radius).max(0.0)
    }
}
