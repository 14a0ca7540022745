//! Deterministic differential-drive simulator with 2D lidar raycasting.

use std::f64::consts::PI;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{LaserScan, Pose2D, TwistCommand};

#[derive(Debug, Error)]
pub enum WorldError {
    #[error("world file: {0}")]
    Io(#[from] std::io::Error),
    #[error("world JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid world: {0}")]
    Invalid(String),
}

/// Axis-aligned rectangle, serialized as `[min_x, min_y, max_x, max_y]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct Rect {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl From<[f64; 4]> for Rect {
    fn from(a: [f64; 4]) -> Self {
        Rect::new(a[0], a[1], a[2], a[3])
    }
}

impl From<Rect> for [f64; 4] {
    fn from(r: Rect) -> Self {
        [r.min_x, r.min_y, r.max_x, r.max_y]
    }
}

impl Rect {
    pub fn new(min_x: f64, min_y: f64, max_x: f64, max_y: f64) -> Self {
        Self {
            min_x,
            min_y,
            max_x,
            max_y,
        }
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.min_x && x <= self.max_x && y >= self.min_y && y <= self.max_y
    }

    /// Parametric `[t_enter, t_exit]` of the line `origin + t·dir` inside the rectangle.
    fn slab(&self, ox: f64, oy: f64, dx: f64, dy: f64) -> Option<(f64, f64)> {
        let mut t0 = f64::NEG_INFINITY;
        let mut t1 = f64::INFINITY;
        for (o, d, lo, hi) in [(ox, dx, self.min_x, self.max_x), (oy, dy, self.min_y, self.max_y)] {
            if d.abs() < 1e-15 {
                if o < lo || o > hi {
                    return None;
                }
            } else {
                let a = (lo - o) / d;
                let b = (hi - o) / d;
                t0 = t0.max(a.min(b));
                t1 = t1.min(a.max(b));
            }
        }
        (t0 <= t1).then_some((t0, t1))
    }

    /// True when the closed segment `a→b` touches the rectangle.
    pub fn intersects_segment(&self, ax: f64, ay: f64, bx: f64, by: f64) -> bool {
        match self.slab(ax, ay, bx - ax, by - ay) {
            Some((t0, t1)) => t1 >= 0.0 && t0 <= 1.0,
            None => false,
        }
    }
}

fn default_spawn() -> Pose2D {
    Pose2D::default()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct World {
    pub width: f64,
    pub height: f64,
    #[serde(default)]
    pub obstacles: Vec<Rect>,
    #[serde(default = "default_spawn")]
    pub spawn: Pose2D,
}

impl World {
    /// Empty rectangular room with the robot spawned at its center, facing +x.
    pub fn empty_room(width: f64, height: f64) -> Self {
        Self {
            width,
            height,
            obstacles: Vec::new(),
            spawn: Pose2D::new(width / 2.0, height / 2.0, 0.0),
        }
    }

    pub fn load(path: &Path) -> Result<Self, WorldError> {
        let world: World = serde_json::from_slice(&std::fs::read(path)?)?;
        world.validate()?;
        Ok(world)
    }

    pub fn validate(&self) -> Result<(), WorldError> {
        if !(self.width > 0.0 && self.height > 0.0) {
            return Err(WorldError::Invalid("width and height must be positive".into()));
        }
        let bounds = Rect::new(0.0, 0.0, self.width, self.height);
        for (i, o) in self.obstacles.iter().enumerate() {
            if !(o.min_x < o.max_x && o.min_y < o.max_y) {
                return Err(WorldError::Invalid(format!("obstacle {i} is degenerate")));
            }
            if !(bounds.contains(o.min_x, o.min_y) && bounds.contains(o.max_x, o.max_y)) {
                return Err(WorldError::Invalid(format!("obstacle {i} leaves the world")));
            }
        }
        if !self.is_free(self.spawn.x, self.spawn.y) {
            return Err(WorldError::Invalid("spawn point is not free".into()));
        }
        Ok(())
    }

    /// Free means strictly inside the walls and outside every obstacle.
    pub fn is_free(&self, x: f64, y: f64) -> bool {
        x > 0.0
            && x < self.width
            && y > 0.0
            && y < self.height
            && !self.obstacles.iter().any(|o| o.contains(x, y))
    }

    fn segment_blocked(&self, ax: f64, ay: f64, bx: f64, by: f64) -> bool {
        !self.is_free(bx, by) || self.obstacles.iter().any(|o| o.intersects_segment(ax, ay, bx, by))
    }

    /// Distance from `(x, y)` along world heading `angle` to the first wall or obstacle.
    pub fn ray_distance(&self, x: f64, y: f64, angle: f64) -> f64 {
        let (dx, dy) = (angle.cos(), angle.sin());
        let bounds = Rect::new(0.0, 0.0, self.width, self.height);
        let mut best = match bounds.slab(x, y, dx, dy) {
            Some((_, t1)) if t1 >= 0.0 => t1,
            _ => 0.0,
        };
        for o in &self.obstacles {
            if let Some((t0, t1)) = o.slab(x, y, dx, dy) {
                if t1 >= 0.0 {
                    best = best.min(t0.max(0.0));
                }
            }
        }
        best
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanParams {
    pub angle_min: f64,
    pub num_beams: usize,
    pub range_max: f64,
    /// Standard deviation of additive range noise in meters.
    pub noise_std: f64,
}

impl Default for ScanParams {
    fn default() -> Self {
        Self {
            angle_min: -PI,
            num_beams: 360,
            range_max: 8.0,
            noise_std: 0.0,
        }
    }
}

impl ScanParams {
    pub fn angle_increment(&self) -> f64 {
        2.0 * PI / self.num_beams as f64
    }

    pub fn angle_max(&self) -> f64 {
        self.angle_min + (self.num_beams - 1) as f64 * self.angle_increment()
    }
}

/// Noise-free scan from `pose`. Beams beyond `range_max` read `f64::INFINITY`.
pub fn raycast_scan(pose: &Pose2D, world: &World, params: &ScanParams) -> LaserScan {
    let inc = params.angle_increment();
    let ranges = (0..params.num_beams)
        .map(|i| {
            let d = world.ray_distance(pose.x, pose.y, pose.theta + params.angle_min + i as f64 * inc);
            if d > params.range_max {
                f64::INFINITY
            } else {
                d
            }
        })
        .collect();
    LaserScan {
        angle_min: params.angle_min,
        angle_max: params.angle_max(),
        angle_increment: inc,
        range_max: params.range_max,
        ranges,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimState {
    pub pose: Pose2D,
    pub commanded: TwistCommand,
    /// Virtual time in seconds.
    pub clock: f64,
    pub rng_seed: u64,
    /// Virtual time at which `commanded` was last set.
    pub commanded_at: f64,
}

impl SimState {
    pub fn new(pose: Pose2D, rng_seed: u64) -> Self {
        Self {
            pose,
            commanded: TwistCommand::ZERO,
            clock: 0.0,
            rng_seed,
            commanded_at: 0.0,
        }
    }
}

/// Advances the state by `dt`. Motion whose path would touch an obstacle or
/// leave the world is cancelled: the pose stays put and the command is zeroed.
pub fn step(state: &SimState, world: &World, dt: f64, command_timeout: f64) -> SimState {
    assert!(dt > 0.0, "step requires dt > 0");
    let mut next = state.clone();
    // slack absorbs the rounding of the summed virtual clock
    if state.clock - state.commanded_at >= command_timeout - 1e-9 {
        next.commanded = TwistCommand::ZERO;
    }
    let twist = next.commanded;
    let target = state.pose.integrate(twist, dt);

    // Arcs are checked as a chain of short chords.
    let pieces = ((twist.angular * dt).abs() / (PI / 32.0)).ceil().max(1.0) as usize;
    let mut prev = state.pose;
    let mut blocked = false;
    for k in 1..=pieces {
        let p = if k == pieces {
            target
        } else {
            state.pose.integrate(twist, dt * k as f64 / pieces as f64)
        };
        if world.segment_blocked(prev.x, prev.y, p.x, p.y) {
            blocked = true;
            break;
        }
        prev = p;
    }
    if blocked {
        next.commanded = TwistCommand::ZERO;
    } else {
        next.pose = target;
    }
    next.clock = state.clock + dt;
    next
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub dt: f64,
    pub command_timeout: f64,
    pub scan: ScanParams,
    pub scan_rate: f64,
    pub odom_rate: f64,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 0.05,
            command_timeout: 0.5,
            scan: ScanParams::default(),
            scan_rate: 10.0,
            odom_rate: 20.0,
            seed: 0,
        }
    }
}

/// Sensor output produced by one fixed-step tick.
#[derive(Debug, Clone, PartialEq)]
pub struct TickOutput {
    pub clock: f64,
    pub scan: Option<LaserScan>,
    pub odom: Option<(Pose2D, TwistCommand)>,
}

/// Fixed-step simulation driven by a virtual clock.
#[derive(Debug, Clone)]
pub struct Simulator {
    world: World,
    config: SimConfig,
    state: SimState,
    rng: ChaCha8Rng,
    ticks: u64,
}

impl Simulator {
    pub fn new(world: World, config: SimConfig) -> Self {
        let state = SimState::new(world.spawn, config.seed);
        Self {
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            world,
            config,
            state,
            ticks: 0,
        }
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn state(&self) -> &SimState {
        &self.state
    }

    pub fn set_command(&mut self, twist: TwistCommand) {
        self.state.commanded = if twist.is_finite() { twist } else { TwistCommand::ZERO };
        self.state.commanded_at = self.state.clock;
    }

    fn every(&self, rate: f64) -> u64 {
        ((1.0 / (rate * self.config.dt)).round() as u64).max(1)
    }

    pub fn scan(&mut self) -> LaserScan {
        let mut scan = raycast_scan(&self.state.pose, &self.world, &self.config.scan);
        if self.config.scan.noise_std > 0.0 {
            let noise = Normal::new(0.0, self.config.scan.noise_std).expect("finite noise std");
            for r in scan.ranges.iter_mut().filter(|r| r.is_finite()) {
                *r = (*r + noise.sample(&mut self.rng)).max(0.0);
            }
        }
        scan
    }

    /// Advances one fixed step and emits whichever sensors are due.
    pub fn tick(&mut self) -> TickOutput {
        self.state = step(&self.state, &self.world, self.config.dt, self.config.command_timeout);
        self.ticks += 1;
        let scan = self.ticks.is_multiple_of(self.every(self.config.scan_rate)).then(|| self.scan());
        let odom = self.ticks.is_multiple_of(self.every(self.config.odom_rate))
            .then_some((self.state.pose, self.state.commanded));
        TickOutput {
            clock: self.state.clock,
            scan,
            odom,
        }
    }
}
