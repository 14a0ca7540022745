//! Pose integration and log-odds occupancy mapping with known poses.

use std::io::Cursor;
use std::path::Path;

use image::{GrayImage, ImageFormat, Luma};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{LaserScan, Pose2D, TwistCommand};

#[derive(Debug, Error)]
pub enum MappingError {
    #[error("robot pose ({x:.3}, {y:.3}) lies outside the grid")]
    PoseOutOfBounds { x: f64, y: f64 },
    #[error("map I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("map header: {0}")]
    Header(#[from] serde_json::Error),
    #[error("map data has {found} cells, header declares {expected}")]
    SizeMismatch { expected: usize, found: usize },
    #[error("PNG encoding: {0}")]
    Image(#[from] image::ImageError),
}

/// Unicycle dead reckoning; identical to the simulator's motion model without collisions.
pub fn integrate_odometry(pose: Pose2D, twist: TwistCommand, dt: f64) -> Pose2D {
    assert!(dt > 0.0, "integrate_odometry requires dt > 0");
    pose.integrate(twist, dt)
}

/// Robot pose source: odometry when it is flowing, commanded twists otherwise.
#[derive(Debug, Clone, Default)]
pub struct PoseEstimator {
    pose: Pose2D,
    commanded: TwistCommand,
    odom_seen: bool,
}

impl PoseEstimator {
    pub fn new(initial: Pose2D) -> Self {
        Self {
            pose: initial,
            ..Self::default()
        }
    }

    pub fn pose(&self) -> Pose2D {
        self.pose
    }

    pub fn has_odometry(&self) -> bool {
        self.odom_seen
    }

    pub fn on_odometry(&mut self, pose: Pose2D) {
        self.pose = pose;
        self.odom_seen = true;
    }

    pub fn on_command(&mut self, twist: TwistCommand) {
        self.commanded = twist;
    }

    /// Dead-reckons over `dt` unless odometry is available.
    pub fn advance(&mut self, dt: f64) {
        if !self.odom_seen && dt > 0.0 {
            self.pose = integrate_odometry(self.pose, self.commanded, dt);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridParams {
    pub l_occ: f64,
    pub l_free: f64,
    pub l_min: f64,
    pub l_max: f64,
    pub t_free: f64,
    pub t_occ: f64,
}

impl Default for GridParams {
    fn default() -> Self {
        Self {
            l_occ: 0.85,
            l_free: -0.4,
            l_min: -10.0,
            l_max: 10.0,
            t_free: 2.0,
            t_occ: 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellClass {
    Free,
    Occupied,
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct GridHeader {
    resolution: f64,
    origin: Pose2D,
    width: usize,
    height: usize,
    params: GridParams,
}

/// Log-odds occupancy grid. Cell `(ix, iy)` covers the square whose lower
/// corner sits at `origin + (ix, iy)·resolution` in the origin's frame.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid {
    resolution: f64,
    origin: Pose2D,
    width: usize,
    height: usize,
    params: GridParams,
    logodds: Vec<f64>,
}

impl OccupancyGrid {
    pub fn new(resolution: f64, origin: Pose2D, width: usize, height: usize, params: GridParams) -> Self {
        assert!(resolution > 0.0 && width > 0 && height > 0);
        Self {
            resolution,
            origin,
            width,
            height,
            params,
            logodds: vec![0.0; width * height],
        }
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn origin(&self) -> Pose2D {
        self.origin
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn params(&self) -> &GridParams {
        &self.params
    }

    pub fn cells(&self) -> &[f64] {
        &self.logodds
    }

    pub fn in_bounds(&self, ix: i64, iy: i64) -> bool {
        ix >= 0 && iy >= 0 && (ix as usize) < self.width && (iy as usize) < self.height
    }

    pub fn logodds(&self, ix: usize, iy: usize) -> f64 {
        self.logodds[iy * self.width + ix]
    }

    pub fn classify(&self, ix: usize, iy: usize) -> CellClass {
        let l = self.logodds(ix, iy);
        if l <= -self.params.t_free {
            CellClass::Free
        } else if l >= self.params.t_occ {
            CellClass::Occupied
        } else {
            CellClass::Unknown
        }
    }

    /// Cell containing a world point (may lie outside the grid).
    pub fn world_to_cell(&self, x: f64, y: f64) -> (i64, i64) {
        let (s, c) = self.origin.theta.sin_cos();
        let dx = x - self.origin.x;
        let dy = y - self.origin.y;
        let gx = c * dx + s * dy;
        let gy = -s * dx + c * dy;
        (
            (gx / self.resolution).floor() as i64,
            (gy / self.resolution).floor() as i64,
        )
    }

    /// World coordinates of a cell center.
    pub fn cell_center(&self, ix: usize, iy: usize) -> (f64, f64) {
        let gx = (ix as f64 + 0.5) * self.resolution;
        let gy = (iy as f64 + 0.5) * self.resolution;
        let (s, c) = self.origin.theta.sin_cos();
        (self.origin.x + c * gx - s * gy, self.origin.y + s * gx + c * gy)
    }

    fn add(&mut self, ix: i64, iy: i64, delta: f64) {
        let i = iy as usize * self.width + ix as usize;
        self.logodds[i] = (self.logodds[i] + delta).clamp(self.params.l_min, self.params.l_max);
    }

    /// Applies one beam: free along the traced line, occupied at the endpoint
    /// when `hit` is set. Cells beyond the grid edge are skipped.
    pub fn apply_beam(&mut self, from: (i64, i64), to: (i64, i64), hit: bool) {
        let line = bresenham(from, to);
        let last = line.len() - 1;
        for (k, &(ix, iy)) in line.iter().enumerate() {
            if !self.in_bounds(ix, iy) {
                // the grid is convex, so the rest of the line is outside too
                if k > 0 {
                    break;
                }
                continue;
            }
            let delta = if hit && k == last {
                self.params.l_occ
            } else {
                self.params.l_free
            };
            self.add(ix, iy, delta);
        }
    }

    /// Inverse-sensor-model update from one scan taken at `pose`.
    pub fn update(&mut self, pose: &Pose2D, scan: &LaserScan) -> Result<(), MappingError> {
        let robot = self.world_to_cell(pose.x, pose.y);
        if !self.in_bounds(robot.0, robot.1) {
            return Err(MappingError::PoseOutOfBounds { x: pose.x, y: pose.y });
        }
        for (i, &r) in scan.ranges.iter().enumerate() {
            let hit = scan.is_return(r);
            let dist = if hit { r } else { scan.range_max };
            let a = pose.theta + scan.beam_angle(i);
            let end = self.world_to_cell(pose.x + dist * a.cos(), pose.y + dist * a.sin());
            self.apply_beam(robot, end, hit);
        }
        Ok(())
    }

    /// Grayscale rendering, one pixel per cell: free white, occupied black,
    /// unknown mid-gray. Pixel `(ix, iy)` shows cell `(ix, iy)`.
    pub fn render(&self) -> GrayImage {
        GrayImage::from_fn(self.width as u32, self.height as u32, |x, y| {
            Luma([match self.classify(x as usize, y as usize) {
                CellClass::Free => 255,
                CellClass::Occupied => 0,
                CellClass::Unknown => 128,
            }])
        })
    }

    pub fn render_png(&self) -> Result<Vec<u8>, MappingError> {
        let mut out = Cursor::new(Vec::new());
        self.render().write_to(&mut out, ImageFormat::Png)?;
        Ok(out.into_inner())
    }

    /// Writes `<stem>.json` (header) and `<stem>.bin` (little-endian f64, row-major).
    pub fn save(&self, dir: &Path, stem: &str) -> Result<(), MappingError> {
        let header = GridHeader {
            resolution: self.resolution,
            origin: self.origin,
            width: self.width,
            height: self.height,
            params: self.params,
        };
        std::fs::write(dir.join(format!("{stem}.json")), serde_json::to_vec_pretty(&header)?)?;
        let mut bytes = Vec::with_capacity(self.logodds.len() * 8);
        for v in &self.logodds {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        std::fs::write(dir.join(format!("{stem}.bin")), bytes)?;
        Ok(())
    }

    pub fn load(dir: &Path, stem: &str) -> Result<Self, MappingError> {
        let header: GridHeader =
            serde_json::from_slice(&std::fs::read(dir.join(format!("{stem}.json")))?)?;
        let bytes = std::fs::read(dir.join(format!("{stem}.bin")))?;
        let expected = header.width * header.height;
        if bytes.len() != expected * 8 {
            return Err(MappingError::SizeMismatch {
                expected,
                found: bytes.len() / 8,
            });
        }
        let logodds = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        Ok(Self {
            resolution: header.resolution,
            origin: header.origin,
            width: header.width,
            height: header.height,
            params: header.params,
            logodds,
        })
    }
}

/// Functional form of [`OccupancyGrid::update`].
pub fn update_grid(mut grid: OccupancyGrid, pose: &Pose2D, scan: &LaserScan) -> Result<OccupancyGrid, MappingError> {
    grid.update(pose, scan)?;
    Ok(grid)
}

pub fn render_map(grid: &OccupancyGrid) -> Result<Vec<u8>, MappingError> {
    grid.render_png()
}

/// Integer Bresenham line from `a` to `b`, both endpoints included. Exactly one
/// cell per step along the major axis; exact half-cell ties stay on the
/// current minor coordinate.
pub fn bresenham(a: (i64, i64), b: (i64, i64)) -> Vec<(i64, i64)> {
    let (dx, dy) = ((b.0 - a.0).abs(), (b.1 - a.1).abs());
    let (sx, sy) = ((b.0 - a.0).signum(), (b.1 - a.1).signum());
    let x_major = dx >= dy;
    let (major, minor) = if x_major { (dx, dy) } else { (dy, dx) };
    let mut cells = Vec::with_capacity(major as usize + 1);
    let (mut x, mut y) = a;
    let mut err = 2 * minor - major;
    for _ in 0..=major {
        cells.push((x, y));
        if err > 0 {
            if x_major {
                y += sy;
            } else {
                x += sx;
            }
            err -= 2 * major;
        }
        err += 2 * minor;
        if x_major {
            x += sx;
        } else {
            y += sy;
        }
    }
    cells
}
