//! Stand-in external worker for tests and demos.
//!
//! Speaks the newline-delimited JSON worker protocol. The value of an
//! evaluation depends only on the assignment and the seed: a per-assignment
//! base level in the lower 80% of the bounds plus seed-driven noise in the
//! top 20%.

use std::io::{self, BufRead, Write};
use std::time::Duration;

use clap::Parser;
use serde_json::{json, Value};
use simopt::objective::mix64;

#[derive(Parser, Debug)]
#[command(name = "simopt-mock-worker", about = "Deterministic mock worker for the simopt protocol")]
struct Args {
    #[arg(long, default_value = "mock")]
    name: String,
    /// Performance bounds as `lo,hi`.
    #[arg(long, default_value = "0,1", value_parser = parse_bounds)]
    bounds: (f64, f64),
    /// Answer every Nth evaluation with an error message.
    #[arg(long)]
    error_every: Option<u64>,
    /// Report values above the upper bound.
    #[arg(long)]
    out_of_range: bool,
    /// Exit without answering the evaluation after N successful ones.
    #[arg(long)]
    die_after: Option<u64>,
    /// Sleep before each answer.
    #[arg(long, default_value_t = 0)]
    sleep_ms: u64,
    /// Print a line that is not JSON instead of the first answer.
    #[arg(long)]
    garbage: bool,
    /// Send no handshake.
    #[arg(long)]
    silent: bool,
    /// Append every received line to this file.
    #[arg(long)]
    log: Option<std::path::PathBuf>,
}

fn parse_bounds(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or("expected lo,hi")?;
    let lo = a.trim().parse::<f64>().map_err(|e| e.to_string())?;
    let hi = b.trim().parse::<f64>().map_err(|e| e.to_string())?;
    Ok((lo, hi))
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| (h ^ b as u64).wrapping_mul(0x100_0000_01b3))
}

fn unit(h: u64) -> f64 {
    (h >> 11) as f64 / (1u64 << 53) as f64
}

fn value(assignment: &Value, seed: u64, (lo, hi): (f64, f64)) -> f64 {
    let key = fnv1a(assignment.to_string().as_bytes());
    let base = unit(mix64(key));
    let noise = unit(mix64(key ^ mix64(seed)));
    lo + (hi - lo) * (0.8 * base + 0.2 * noise)
}

fn main() {
    let args = Args::parse();
    let stdout = io::stdout();
    let mut out = stdout.lock();
    let mut emit = |v: Value| {
        let _ = writeln!(out, "{v}");
        let _ = out.flush();
    };
    if !args.silent {
        emit(json!({"type": "ready", "name": args.name, "bounds": [args.bounds.0, args.bounds.1]}));
    }
    let mut log = args
        .log
        .as_ref()
        .map(|p| std::fs::OpenOptions::new().create(true).append(true).open(p).expect("cannot open log"));
    let mut served = 0u64;
    for line in io::stdin().lock().lines() {
        let Ok(line) = line else { break };
        if let Some(f) = log.as_mut() {
            let _ = writeln!(f, "{line}");
        }
        if line.trim().is_empty() {
            continue;
        }
        let req: Value = match serde_json::from_str(&line) {
            Ok(v) => v,
            Err(_) => break,
        };
        match req["type"].as_str() {
            Some("shutdown") => break,
            Some("eval") => {}
            _ => break,
        }
        if args.die_after.is_some_and(|n| served >= n) {
            std::process::exit(1);
        }
        if args.sleep_ms > 0 {
            std::thread::sleep(Duration::from_millis(args.sleep_ms));
        }
        let id = req["id"].clone();
        served += 1;
        if args.garbage {
            emit(Value::String("not a reply".into()));
            continue;
        }
        if args.error_every.is_some_and(|n| n > 0 && served.is_multiple_of(n)) {
            emit(json!({"type": "error", "id": id, "message": format!("injected failure on evaluation {served}")}));
            continue;
        }
        let seed = req["seed"].as_u64().unwrap_or(0);
        let v = if args.out_of_range { args.bounds.1 + 1.0 } else { value(&req["assignment"], seed, args.bounds) };
        emit(json!({"type": "result", "id": id, "value": v}));
    }
}
