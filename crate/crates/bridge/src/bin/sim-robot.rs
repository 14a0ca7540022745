use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::path::PathBuf;
use std::process::ExitCode;

use caris_bridge::{serve, Pacing};
use caris_core::sim::{SimConfig, World};
use clap::Parser;

/// Simulated differential-drive robot with a 2D lidar, served over rosbridge.
#[derive(Parser)]
#[command(name = "sim-robot", version)]
struct Args {
    /// World JSON file (width, height, obstacles, spawn).
    #[arg(long)]
    world: PathBuf,
    #[arg(long, default_value_t = 9090)]
    port: u16,
    /// Address to listen on.
    #[arg(long, default_value_t = IpAddr::V4(Ipv4Addr::LOCALHOST))]
    host: IpAddr,
    /// Step with the wall clock instead of waiting for step requests.
    #[arg(long)]
    realtime: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Lidar range noise standard deviation in meters.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
}

#[tokio::main]
async fn main() -> ExitCode {
    let args = Args::parse();
    let world = match World::load(&args.world) {
        Ok(w) => w,
        Err(e) => {
            eprintln!("sim-robot: {}: {e}", args.world.display());
            return ExitCode::FAILURE;
        }
    };
    let mut config = SimConfig {
        seed: args.seed,
        ..SimConfig::default()
    };
    config.scan.noise_std = args.noise;
    let pacing = if args.realtime { Pacing::Realtime } else { Pacing::Lockstep };
    let server = match serve(world, config, SocketAddr::new(args.host, args.port), pacing).await {
        Ok(s) => s,
        Err(e) => {
            eprintln!("sim-robot: {e}");
            return ExitCode::FAILURE;
        }
    };
    eprintln!("sim-robot listening on {} ({pacing:?})", server.url());
    tokio::select! {
        _ = server.join() => {}
        _ = tokio::signal::ctrl_c() => {}
    }
    ExitCode::SUCCESS
}
