//! Client side of the external worker protocol.
//!
//! Newline-delimited JSON over the worker's stdin/stdout:
//!
//! ```text
//! worker: {"type":"ready","name":"...","bounds":[a,b]}
//! client: {"type":"eval","id":7,"assignment":{"C":1.0,"kernel":"rbf"},"seed":123}
//! worker: {"type":"result","id":7,"value":0.93}   or   {"type":"error","id":7,"message":"..."}
//! client: {"type":"shutdown"}
//! ```

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{Bounds, ObjectiveError, Simulator};
use crate::space::{SearchSpace, Solution};

pub const WORKER_TIMEOUT_ENV: &str = "SIMOPT_WORKER_TIMEOUT_MS";
pub const DEFAULT_WORKER_TIMEOUT_MS: u64 = 60_000;

#[derive(Debug, Serialize)]
#[serde(tag = "type", rename_all = "lowercase")]
enum Request<'a> {
    Eval { id: u64, assignment: &'a serde_json::Map<String, serde_json::Value>, seed: u64 },
    Shutdown,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
enum Reply {
    Ready { name: String, bounds: [f64; 2] },
    Result { id: u64, value: f64 },
    Error { id: u64, message: String },
}

fn timeout_from_env() -> Duration {
    let ms = std::env::var(WORKER_TIMEOUT_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<u64>().ok())
        .unwrap_or(DEFAULT_WORKER_TIMEOUT_MS);
    Duration::from_millis(ms)
}

/// One worker process. Requests are strictly one at a time.
pub struct WorkerClient {
    child: Child,
    stdin: Option<ChildStdin>,
    lines: Receiver<std::io::Result<String>>,
    name: String,
    bounds: Bounds,
    next_id: u64,
    timeout: Duration,
    dead: bool,
}

impl std::fmt::Debug for WorkerClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("WorkerClient").field("name", &self.name).field("bounds", &self.bounds).finish()
    }
}

impl WorkerClient {
    /// Spawns `command[0]` with the remaining arguments and waits for the handshake.
    pub fn spawn(command: &[String], timeout: Duration) -> Result<Self, ObjectiveError> {
        let (program, args) =
            command.split_first().ok_or_else(|| ObjectiveError::Config("empty worker command".into()))?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| ObjectiveError::Io(format!("cannot spawn `{program}`: {e}")))?;
        let stdout = child.stdout.take().expect("piped stdout");
        let stdin = child.stdin.take();
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                let stop = line.is_err();
                if tx.send(line).is_err() || stop {
                    break;
                }
            }
        });
        let mut client = WorkerClient {
            child,
            stdin,
            lines: rx,
            name: String::new(),
            bounds: Bounds::UNIT,
            next_id: 0,
            timeout,
            dead: false,
        };
        match client.read_reply()? {
            Reply::Ready { name, bounds } => {
                client.name = name;
                client.bounds = Bounds::new(bounds[0], bounds[1])
                    .map_err(|_| ObjectiveError::Protocol(format!("handshake bounds {bounds:?} are invalid")))?;
                Ok(client)
            }
            other => Err(client.fail(ObjectiveError::Protocol(format!("expected ready handshake, got {other:?}")))),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn bounds(&self) -> Bounds {
        self.bounds
    }

    fn fail(&mut self, err: ObjectiveError) -> ObjectiveError {
        self.dead = true;
        let _ = self.child.kill();
        let _ = self.child.wait();
        err
    }

    fn read_reply(&mut self) -> Result<Reply, ObjectiveError> {
        let line = match self.lines.recv_timeout(self.timeout) {
            Ok(Ok(line)) => line,
            Ok(Err(e)) => return Err(self.fail(ObjectiveError::Io(e.to_string()))),
            Err(RecvTimeoutError::Timeout) => {
                return Err(self.fail(ObjectiveError::Timeout(self.timeout.as_millis() as u64)))
            }
            Err(RecvTimeoutError::Disconnected) => {
                return Err(self.fail(ObjectiveError::Io("worker closed its output".into())))
            }
        };
        serde_json::from_str(&line).map_err(|e| self.fail(ObjectiveError::Protocol(format!("bad reply `{line}`: {e}"))))
    }

    fn send(&mut self, req: &Request<'_>) -> Result<(), ObjectiveError> {
        let mut line = serde_json::to_string(req).expect("request serializes");
        line.push('\n');
        let stdin = self.stdin.as_mut().ok_or_else(|| ObjectiveError::Io("worker stdin closed".into()))?;
        if let Err(e) = stdin.write_all(line.as_bytes()).and_then(|_| stdin.flush()) {
            return Err(self.fail(ObjectiveError::Io(e.to_string())));
        }
        Ok(())
    }

    pub fn eval(
        &mut self,
        assignment: &serde_json::Map<String, serde_json::Value>,
        seed: u64,
    ) -> Result<f64, ObjectiveError> {
        if self.dead {
            return Err(ObjectiveError::Io("worker is no longer running".into()));
        }
        let id = self.next_id;
        self.next_id += 1;
        self.send(&Request::Eval { id, assignment, seed })?;
        match self.read_reply()? {
            Reply::Result { id: rid, value } if rid == id => Ok(value),
            Reply::Error { id: rid, message } if rid == id => Err(ObjectiveError::Worker(message)),
            other => Err(self.fail(ObjectiveError::Protocol(format!("expected reply to request {id}, got {other:?}")))),
        }
    }

    pub fn shutdown(mut self) -> Result<std::process::ExitStatus, ObjectiveError> {
        self.close()
    }

    fn close(&mut self) -> Result<std::process::ExitStatus, ObjectiveError> {
        if !self.dead {
            let _ = self.send(&Request::Shutdown);
        }
        self.stdin.take();
        self.dead = true;
        self.child.wait().map_err(|e| ObjectiveError::Io(e.to_string()))
    }
}

impl Drop for WorkerClient {
    fn drop(&mut self) {
        if self.stdin.is_some() {
            let _ = self.close();
        }
    }
}

/// A fixed set of worker processes sharing the same command line.
/// Each request goes to the next worker round-robin.
pub struct WorkerPool {
    space: SearchSpace,
    workers: Vec<Mutex<WorkerClient>>,
    next: AtomicUsize,
    name: String,
    bounds: Bounds,
}

impl std::fmt::Debug for WorkerPool {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("WorkerPool").field("name", &self.name).field("size", &self.workers.len()).finish()
    }
}

impl WorkerPool {
    /// Spawns `size` workers; the per-request timeout comes from `SIMOPT_WORKER_TIMEOUT_MS`.
    pub fn spawn(command: &[String], size: usize, space: SearchSpace) -> Result<Self, ObjectiveError> {
        Self::spawn_with_timeout(command, size, space, timeout_from_env())
    }

    pub fn spawn_with_timeout(
        command: &[String],
        size: usize,
        space: SearchSpace,
        timeout: Duration,
    ) -> Result<Self, ObjectiveError> {
        let workers = (0..size.max(1)).map(|_| WorkerClient::spawn(command, timeout)).collect::<Result<Vec<_>, _>>()?;
        let name = workers[0].name().to_owned();
        let bounds = workers[0].bounds();
        if workers.iter().any(|w| w.bounds() != bounds) {
            return Err(ObjectiveError::Protocol("workers disagree on bounds".into()));
        }
        Ok(Self {
            space,
            workers: workers.into_iter().map(Mutex::new).collect(),
            next: AtomicUsize::new(0),
            name,
            bounds,
        })
    }

    pub fn size(&self) -> usize {
        self.workers.len()
    }
}

impl Simulator for WorkerPool {
    fn name(&self) -> &str {
        &self.name
    }

    fn bounds(&self) -> Bounds {
        self.bounds
    }

    fn simulate(&self, x: &Solution, seed: u64) -> Result<f64, ObjectiveError> {
        let assignment = self.space.assignment(x)?;
        let i = self.next.fetch_add(1, Ordering::Relaxed) % self.workers.len();
        let mut worker = self.workers[i].lock().map_err(|_| ObjectiveError::Io("worker lock poisoned".into()))?;
        worker.eval(&assignment, seed)
    }
}
