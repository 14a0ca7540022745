//! Drives the simulator around the 4×4 m room and scores the resulting grid
//! against a rasterization of the true walls.

use std::time::{Duration, Instant};

use caris_core::mapping::{CellClass, GridParams, OccupancyGrid};
use caris_core::sim::{SimConfig, Simulator, World};
use caris_core::{Pose2D, TwistCommand};

pub const RES: f64 = 0.05;
/// Margin (in cells) around the room; the grid is shifted half a cell so the
/// wall lines run through cell centers.
const PAD: usize = 5;

pub struct Fidelity {
    pub scans: usize,
    pub wall_cells: usize,
    pub interior_cells: usize,
    pub wall_occupied: f64,
    pub interior_free: f64,
    pub elapsed: Duration,
}

pub fn traverse_room(scans: usize) -> Fidelity {
    let started = Instant::now();
    let world = World::empty_room(4.0, 4.0);
    let n = (4.0 / RES).round() as usize;
    let size = n + 1 + 2 * PAD;
    let off = (PAD as f64 + 0.5) * RES;
    let mut grid = OccupancyGrid::new(RES, Pose2D::new(-off, -off, 0.0), size, size, GridParams::default());
    let mut sim = Simulator::new(world, SimConfig::default());

    let mut taken = 0;
    let mut pose = sim.state().pose;
    while taken < scans {
        // slow loop around the center, held like a pressed key
        sim.set_command(TwistCommand::new(0.2, 0.4));
        let out = sim.tick();
        if let Some((p, _)) = out.odom {
            pose = p;
        }
        if let Some(scan) = out.scan {
            grid.update(&pose, &scan).expect("robot stays inside the grid");
            taken += 1;
        }
    }

    // wall lines x = 0, x = 4, y = 0, y = 4 pass through cells PAD and PAD + n
    let on_wall = |i: usize| i == PAD || i == PAD + n;
    let in_span = |i: usize| (PAD..=PAD + n).contains(&i);
    let (mut walls, mut walls_occ, mut inner, mut inner_free) = (0, 0, 0, 0);
    for iy in 0..size {
        for ix in 0..size {
            let class = grid.classify(ix, iy);
            if in_span(ix) && in_span(iy) && (on_wall(ix) || on_wall(iy)) {
                walls += 1;
                walls_occ += (class == CellClass::Occupied) as usize;
            } else if ix > PAD && ix < PAD + n && iy > PAD && iy < PAD + n {
                inner += 1;
                inner_free += (class == CellClass::Free) as usize;
            }
        }
    }
    Fidelity {
        scans: taken,
        wall_cells: walls,
        interior_cells: inner,
        wall_occupied: walls_occ as f64 / walls as f64,
        interior_free: inner_free as f64 / inner as f64,
        elapsed: started.elapsed(),
    }
}
