use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use caris_core::scenario::ScenarioConfig;
use caris_gateway::{start, ClockMode, GatewayConfig};
use clap::Parser;

/// Wizard-of-Oz command center: HTTP/WebSocket gateway to a rosbridge robot.
#[derive(Parser)]
#[command(name = "caris-server", version)]
struct Args {
    /// rosbridge endpoint, e.g. ws://127.0.0.1:9090
    #[arg(long)]
    robot: String,
    /// Scenario JSON file.
    #[arg(long)]
    scenario: PathBuf,
    /// Directory that receives sessions/.
    #[arg(long)]
    storage: PathBuf,
    #[arg(long, default_value = "127.0.0.1:8080")]
    listen: SocketAddr,
    /// Answer every provider with the offline mock model.
    #[arg(long)]
    mock_providers: bool,
    /// Stamp events with wall time instead of robot time.
    #[arg(long)]
    wall_clock: bool,
    /// Side of the square map in meters.
    #[arg(long, default_value_t = 20.0)]
    map_size: f64,
}

#[tokio::main]
async fn main() -> ExitCode {
    let args = Args::parse();
    let scenario = match ScenarioConfig::load(&args.scenario) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("caris-server: {}: {e}", args.scenario.display());
            return ExitCode::FAILURE;
        }
    };
    let mut config = GatewayConfig::new(&args.robot, scenario, args.storage, args.listen);
    config.mock_providers = args.mock_providers;
    config.map.size = args.map_size;
    if args.wall_clock {
        config.clock = ClockMode::Wall;
    }
    let running = match start(config).await {
        Ok(r) => r,
        Err(e) => {
            eprintln!("caris-server: {e}");
            return ExitCode::FAILURE;
        }
    };
    eprintln!(
        "caris-server on {} (session {})",
        running.url(),
        running.gateway.session.dir().display()
    );
    tokio::signal::ctrl_c().await.ok();
    running.shutdown();
    ExitCode::SUCCESS
}
