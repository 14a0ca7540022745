use std::path::PathBuf;
use std::process::ExitCode;

use caris_core::recorder::{filter_events, replay, EventKind};
use clap::Parser;

/// Print the events of a recorded session, optionally filtered.
#[derive(Parser)]
#[command(name = "caris-replay", version)]
struct Args {
    /// Session directory (contains events.jsonl).
    dir: PathBuf,
    /// Only events of this kind (teleop, tts, stt, snapshot, llm, track, registry, scenario).
    #[arg(long, value_parser = parse_kind)]
    kind: Option<EventKind>,
    /// Only events attributed to this person id.
    #[arg(long)]
    person: Option<u64>,
}

fn parse_kind(s: &str) -> Result<EventKind, String> {
    EventKind::parse(s).ok_or_else(|| format!("unknown event kind {s:?}"))
}

fn main() -> ExitCode {
    let args = Args::parse();
    match replay(&args.dir) {
        Ok(events) => {
            for e in filter_events(&events, args.kind, args.person) {
                println!("{}", serde_json::to_string(e).expect("events serialize"));
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("caris-replay: {e}");
            ExitCode::FAILURE
        }
    }
}
