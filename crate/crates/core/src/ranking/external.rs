//! Client side of the scorer wire protocol (version 1).
//!
//! Frames are single-line JSON objects. Each request carries a fresh `id`;
//! responses may arrive in any order and are routed back by that id, so a
//! connection can have up to `max_in_flight` requests outstanding.

use std::collections::{HashMap, VecDeque};
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::process::{Child, Command, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::sync::{Arc, Condvar, Mutex};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{Score, ScoreRequest, Scorer, ScorerError, Task};

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "transport", content = "address", rename_all = "lowercase")]
pub enum Endpoint {
    /// A shell command whose stdin/stdout carry the frames.
    Exec(String),
    /// `host:port` of a TCP server.
    Tcp(String),
}

impl Endpoint {
    /// Parses `tcp://host:port` or `exec:<shell command>`.
    pub fn parse(s: &str) -> Result<Endpoint, String> {
        if let Some(addr) = s.strip_prefix("tcp://") {
            if addr.is_empty() {
                return Err("empty tcp address".into());
            }
            Ok(Endpoint::Tcp(addr.to_string()))
        } else if let Some(cmd) = s.strip_prefix("exec:") {
            if cmd.trim().is_empty() {
                return Err("empty scorer command".into());
            }
            Ok(Endpoint::Exec(cmd.to_string()))
        } else {
            Err(format!("unknown scorer endpoint `{s}` (expected tcp://host:port or exec:<command>)"))
        }
    }
}

#[derive(Serialize)]
pub struct RequestFrame<'a> {
    pub id: u64,
    pub v: u32,
    pub task: Task,
    pub prefix: String,
    pub signature: String,
    pub docstring: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub candidate: Option<String>,
}

impl<'a> RequestFrame<'a> {
    pub fn new(id: u64, req: &ScoreRequest<'a>) -> Self {
        RequestFrame {
            id,
            v: PROTOCOL_VERSION,
            task: req.task,
            prefix: req.prefix.text(),
            signature: req.context.signature_text(),
            docstring: &req.context.docstring,
            candidate: match req.task {
                Task::Assertion => req.candidate.map(|c| c.form.render()),
                Task::Exception => None,
            },
        }
    }
}

/// Decodes one response line into its id and outcome. Lines without a
/// numeric id cannot be routed and yield `None`.
pub fn decode_response(line: &str) -> Option<(u64, Result<Score, ScorerError>)> {
    let v: Value = serde_json::from_str(line).ok()?;
    let id = v.get("id")?.as_u64()?;
    let outcome = if let Some(err) = v.get("error") {
        let msg = err.as_str().map_or_else(|| err.to_string(), str::to_string);
        Err(ScorerError::Remote(msg))
    } else {
        match v.get("score").and_then(Value::as_f64) {
            Some(s) => Score::new(s).map_err(|_| ScorerError::Protocol(format!("score {s} outside [0,1] for id {id}"))),
            None => Err(ScorerError::Protocol(format!("response for id {id} has neither score nor error"))),
        }
    };
    Some((id, outcome))
}

type Pending = Arc<Mutex<HashMap<u64, Sender<Result<Score, ScorerError>>>>>;

struct Connection {
    writer: Mutex<Box<dyn Write + Send>>,
    pending: Pending,
    alive: Arc<Mutex<bool>>,
    child: Option<Child>,
}

impl Drop for Connection {
    fn drop(&mut self) {
        if let Some(child) = &mut self.child {
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

fn spawn_reader(reader: impl Read + Send + 'static, pending: Pending, alive: Arc<Mutex<bool>>) {
    thread::spawn(move || {
        let reader = BufReader::new(reader);
        for line in reader.lines() {
            let Ok(line) = line else { break };
            if line.trim().is_empty() {
                continue;
            }
            match decode_response(&line) {
                Some((id, outcome)) => {
                    let tx = pending.lock().expect("pending lock").remove(&id);
                    match tx {
                        Some(tx) => {
                            let _ = tx.send(outcome);
                        }
                        None => log::warn!("scorer answered unknown id {id}"),
                    }
                }
                None => log::warn!("scorer sent an unroutable frame: {line}"),
            }
        }
        *alive.lock().expect("alive lock") = false;
        for (_, tx) in pending.lock().expect("pending lock").drain() {
            let _ = tx.send(Err(ScorerError::Unavailable("scorer closed the connection".into())));
        }
    });
}

impl Connection {
    fn open(endpoint: &Endpoint) -> Result<Connection, ScorerError> {
        let pending: Pending = Arc::default();
        let alive = Arc::new(Mutex::new(true));
        match endpoint {
            Endpoint::Tcp(addr) => {
                let stream = TcpStream::connect(addr)
                    .map_err(|e| ScorerError::Unavailable(format!("cannot connect to {addr}: {e}")))?;
                let _ = stream.set_nodelay(true);
                let read_half = stream.try_clone().map_err(|e| ScorerError::Unavailable(e.to_string()))?;
                spawn_reader(read_half, pending.clone(), alive.clone());
                Ok(Connection { writer: Mutex::new(Box::new(stream)), pending, alive, child: None })
            }
            Endpoint::Exec(cmd) => {
                let mut child = Command::new("sh")
                    .arg("-c")
                    .arg(cmd)
                    .stdin(Stdio::piped())
                    .stdout(Stdio::piped())
                    .stderr(Stdio::inherit())
                    .spawn()
                    .map_err(|e| ScorerError::Unavailable(format!("cannot start `{cmd}`: {e}")))?;
                let stdin = child.stdin.take().expect("piped stdin");
                let stdout = child.stdout.take().expect("piped stdout");
                spawn_reader(stdout, pending.clone(), alive.clone());
                Ok(Connection { writer: Mutex::new(Box::new(stdin)), pending, alive, child: Some(child) })
            }
        }
    }

    fn is_alive(&self) -> bool {
        *self.alive.lock().expect("alive lock")
    }

    fn send(&self, id: u64, frame: &RequestFrame<'_>) -> Result<Receiver<Result<Score, ScorerError>>, ScorerError> {
        let (tx, rx) = mpsc::channel();
        self.pending.lock().expect("pending lock").insert(id, tx);
        let mut line = serde_json::to_string(frame).expect("frames serialize");
        line.push('\n');
        let mut w = self.writer.lock().expect("writer lock");
        if let Err(e) = w.write_all(line.as_bytes()).and_then(|_| w.flush()) {
            self.pending.lock().expect("pending lock").remove(&id);
            return Err(ScorerError::Unavailable(format!("write to scorer failed: {e}")));
        }
        Ok(rx)
    }

    fn forget(&self, id: u64) {
        self.pending.lock().expect("pending lock").remove(&id);
    }
}

/// Counting semaphore bounding outstanding requests across threads.
struct Permits {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Permits {
    fn try_acquire(&self) -> bool {
        let mut f = self.free.lock().expect("permit lock");
        if *f > 0 {
            *f -= 1;
            true
        } else {
            false
        }
    }

    fn acquire(&self) {
        let mut f = self.free.lock().expect("permit lock");
        while *f == 0 {
            f = self.cv.wait(f).expect("permit lock");
        }
        *f -= 1;
    }

    fn release(&self) {
        *self.free.lock().expect("permit lock") += 1;
        self.cv.notify_one();
    }
}

/// A scorer reached over the wire protocol. The connection is opened on
/// first use and reopened if the peer goes away.
pub struct ExternalScorer {
    endpoint: Endpoint,
    timeout: Duration,
    conn: Mutex<Option<Arc<Connection>>>,
    next_id: AtomicU64,
    permits: Permits,
}

impl ExternalScorer {
    pub fn new(endpoint: Endpoint, timeout: Duration, max_in_flight: usize) -> Self {
        ExternalScorer {
            endpoint,
            timeout,
            conn: Mutex::new(None),
            next_id: AtomicU64::new(1),
            permits: Permits { free: Mutex::new(max_in_flight.max(1)), cv: Condvar::new() },
        }
    }

    fn connection(&self) -> Result<Arc<Connection>, ScorerError> {
        let mut slot = self.conn.lock().expect("connection lock");
        if let Some(c) = slot.as_ref().filter(|c| c.is_alive()) {
            return Ok(c.clone());
        }
        let c = Arc::new(Connection::open(&self.endpoint)?);
        *slot = Some(c.clone());
        Ok(c)
    }

    fn await_one(
        &self,
        conn: &Connection,
        (idx, id, rx): (usize, u64, Receiver<Result<Score, ScorerError>>),
        out: &mut [Option<Score>],
    ) -> Result<(), ScorerError> {
        let r = rx.recv_timeout(self.timeout);
        self.permits.release();
        match r {
            Ok(Ok(s)) => {
                out[idx] = Some(s);
                Ok(())
            }
            Ok(Err(e)) => Err(e),
            Err(RecvTimeoutError::Timeout) => {
                conn.forget(id);
                Err(ScorerError::Unavailable(format!("no response for id {id} within {:?}", self.timeout)))
            }
            Err(RecvTimeoutError::Disconnected) => Err(ScorerError::Unavailable("scorer connection lost".into())),
        }
    }
}

impl Scorer for ExternalScorer {
    fn score_batch(&self, reqs: &[ScoreRequest<'_>]) -> Result<Vec<Score>, ScorerError> {
        let conn = self.connection()?;
        let mut out = vec![None; reqs.len()];
        let mut outstanding = VecDeque::new();
        let mut result = Ok(());
        for (idx, req) in reqs.iter().enumerate() {
            while !self.permits.try_acquire() {
                match outstanding.pop_front() {
                    Some(o) => {
                        result = result.and(self.await_one(&conn, o, &mut out));
                    }
                    None => {
                        self.permits.acquire();
                        break;
                    }
                }
            }
            let id = self.next_id.fetch_add(1, Ordering::Relaxed);
            match conn.send(id, &RequestFrame::new(id, req)) {
                Ok(rx) => outstanding.push_back((idx, id, rx)),
                Err(e) => {
                    self.permits.release();
                    result = result.and(Err(e));
                    break;
                }
            }
        }
        for o in outstanding {
            let r = self.await_one(&conn, o, &mut out);
            result = result.and(r);
        }
        result?;
        Ok(out.into_iter().map(|s| s.expect("every request answered")).collect())
    }
}
