//! Adapter for forecasters running in another process.
//!
//! Frames are single-line JSON objects on the child's stdin/stdout:
//!
//! ```text
//! → {"type":"hello","protocol":1,"n":96,"horizon":6,"channels":12,"targets":[0]}
//! ← {"type":"ready"}
//! → {"type":"predict","id":7,"x":[[...], ...]}        n rows × m columns
//! ← {"type":"prediction","id":7,"y":[[...], ...]}     n' rows × m_tgt columns
//! → {"type":"shutdown"}
//! ```
//!
//! A batch is written in full before responses are collected; responses may
//! arrive in any order and are matched by id.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use ndarray::{Array2, ArrayView2};
use serde::ser::{SerializeSeq, Serializer};
use serde::{Deserialize, Serialize};

use super::Forecaster;
use crate::error::{AdapterError, Error, Result};

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone)]
pub struct ExternalConfig {
    pub program: String,
    pub args: Vec<String>,
    /// Per-batch response deadline.
    pub timeout: Duration,
    /// Number of model processes to run side by side.
    pub workers: usize,
}

impl ExternalConfig {
    pub fn new(program: impl Into<String>, args: Vec<String>) -> Self {
        Self {
            program: program.into(),
            args,
            timeout: Duration::from_secs(60),
            workers: 1,
        }
    }
}

struct Rows<'a>(ArrayView2<'a, f64>);

impl Serialize for Rows<'_> {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(self.0.nrows()))?;
        for row in self.0.rows() {
            seq.serialize_element(&row.to_vec())?;
        }
        seq.end()
    }
}

#[derive(Serialize)]
#[serde(tag = "type", rename_all = "lowercase")]
enum Outgoing<'a> {
    Hello {
        protocol: u32,
        n: usize,
        horizon: usize,
        channels: usize,
        targets: &'a [usize],
    },
    Predict {
        id: u64,
        x: Rows<'a>,
    },
    Shutdown,
}

#[derive(Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
enum Incoming {
    Ready,
    Prediction {
        id: u64,
        y: Vec<Vec<f64>>,
    },
    Error {
        #[serde(alias = "message")]
        msg: String,
    },
}

fn write_frame(w: &mut impl Write, frame: &Outgoing<'_>) -> std::io::Result<()> {
    serde_json::to_writer(&mut *w, frame)?;
    w.write_all(b"\n")
}

fn parse(line: &str) -> std::result::Result<Incoming, AdapterError> {
    serde_json::from_str(line)
        .map_err(|e| AdapterError::MalformedFrame(format!("{e}: {}", truncate(line))))
}

fn truncate(line: &str) -> String {
    let mut s: String = line.chars().take(120).collect();
    if s.len() < line.len() {
        s.push('…');
    }
    s
}

struct Process {
    child: Child,
    stdin: BufWriter<ChildStdin>,
    lines: Receiver<std::io::Result<String>>,
    broken: bool,
}

impl Process {
    fn spawn(cfg: &ExternalConfig) -> std::result::Result<Self, AdapterError> {
        let mut child = Command::new(&cfg.program)
            .args(&cfg.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| AdapterError::Spawn(format!("{}: {e}", cfg.program)))?;
        let stdin = BufWriter::new(child.stdin.take().expect("piped stdin"));
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, lines) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        Ok(Self {
            child,
            stdin,
            lines,
            broken: false,
        })
    }

    fn next_frame(
        &mut self,
        deadline: Instant,
        timeout: Duration,
    ) -> std::result::Result<Incoming, AdapterError> {
        loop {
            let wait = deadline.saturating_duration_since(Instant::now());
            match self.lines.recv_timeout(wait) {
                Ok(Ok(line)) if line.trim().is_empty() => continue,
                Ok(Ok(line)) => return parse(&line),
                Ok(Err(e)) => return Err(AdapterError::Io(e)),
                Err(RecvTimeoutError::Timeout) => return Err(AdapterError::Timeout(timeout)),
                Err(RecvTimeoutError::Disconnected) => return Err(self.exited()),
            }
        }
    }

    fn exited(&mut self) -> AdapterError {
        // give the child a moment to be reaped so the status is reported
        let deadline = Instant::now() + Duration::from_millis(500);
        let status = loop {
            match self.child.try_wait() {
                Ok(Some(status)) => break Some(status.to_string()),
                Ok(None) if Instant::now() < deadline => thread::sleep(Duration::from_millis(5)),
                _ => break None,
            }
        };
        AdapterError::ProcessExited { status }
    }

    fn handshake(
        &mut self,
        hello: &Outgoing<'_>,
        timeout: Duration,
    ) -> std::result::Result<(), AdapterError> {
        if let Err(e) = write_frame(&mut self.stdin, hello).and_then(|_| self.stdin.flush()) {
            return Err(match e.kind() {
                std::io::ErrorKind::BrokenPipe => self.exited(),
                _ => AdapterError::Io(e),
            });
        }
        match self.next_frame(Instant::now() + timeout, timeout)? {
            Incoming::Ready => Ok(()),
            Incoming::Error { msg } => Err(AdapterError::Remote(msg)),
            Incoming::Prediction { .. } => Err(AdapterError::MalformedFrame(
                "expected ready, got prediction".into(),
            )),
        }
    }

    fn kill(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// A forecaster served by one or more child processes speaking the
/// line-delimited JSON protocol.
pub struct ExternalModel {
    id: String,
    timeout: Duration,
    horizon: usize,
    targets: usize,
    input: (usize, usize),
    procs: Vec<Mutex<Process>>,
    next_id: AtomicU64,
    cursor: AtomicUsize,
}

impl ExternalModel {
    /// Launch `cfg.workers` processes and complete the handshake with each.
    pub fn spawn(
        cfg: &ExternalConfig,
        n: usize,
        horizon: usize,
        channels: usize,
        targets: &[usize],
    ) -> Result<Self> {
        if cfg.workers == 0 {
            return Err(Error::InvalidArgument(
                "adapter needs at least one worker".into(),
            ));
        }
        let hello = Outgoing::Hello {
            protocol: PROTOCOL_VERSION,
            n,
            horizon,
            channels,
            targets,
        };
        let mut procs = Vec::with_capacity(cfg.workers);
        for _ in 0..cfg.workers {
            let mut p = Process::spawn(cfg)?;
            if let Err(e) = p.handshake(&hello, cfg.timeout) {
                p.kill();
                return Err(e.into());
            }
            procs.push(Mutex::new(p));
        }
        Ok(Self {
            id: format!(
                "external({})",
                std::iter::once(cfg.program.as_str())
                    .chain(cfg.args.iter().map(String::as_str))
                    .collect::<Vec<_>>()
                    .join(" ")
            ),
            timeout: cfg.timeout,
            horizon,
            targets: targets.len(),
            input: (n, channels),
            procs: procs.into_iter().collect(),
            next_id: AtomicU64::new(0),
            cursor: AtomicUsize::new(0),
        })
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    fn acquire(&self) -> std::sync::MutexGuard<'_, Process> {
        for p in &self.procs {
            if let Ok(guard) = p.try_lock() {
                return guard;
            }
        }
        let i = self.cursor.fetch_add(1, Ordering::Relaxed) % self.procs.len();
        self.procs[i].lock().unwrap_or_else(|e| e.into_inner())
    }

    fn exchange(
        &self,
        proc: &mut Process,
        xs: &[Array2<f64>],
    ) -> std::result::Result<Vec<Array2<f64>>, AdapterError> {
        if proc.broken {
            return Err(AdapterError::ProcessExited { status: None });
        }
        let base = self.next_id.fetch_add(xs.len() as u64, Ordering::Relaxed);
        let expected = (self.horizon, self.targets);
        let deadline = Instant::now() + self.timeout;
        let Process { stdin, lines, .. } = &mut *proc;
        let mut slots: Vec<Option<Array2<f64>>> = vec![None; xs.len()];

        let outcome = thread::scope(|scope| {
            let writer = scope.spawn(move || -> std::io::Result<()> {
                for (i, x) in xs.iter().enumerate() {
                    write_frame(
                        stdin,
                        &Outgoing::Predict {
                            id: base + i as u64,
                            x: Rows(x.view()),
                        },
                    )?;
                }
                stdin.flush()
            });
            let mut pending = xs.len();
            let read = loop {
                if pending == 0 {
                    break Ok(());
                }
                let wait = deadline.saturating_duration_since(Instant::now());
                let frame = match proc_lines_recv(lines, wait) {
                    Ok(Some(line)) => parse(&line),
                    Ok(None) => continue,
                    Err(LineError::Io(e)) => Err(AdapterError::Io(e)),
                    Err(LineError::Timeout) => Err(AdapterError::Timeout(self.timeout)),
                    Err(LineError::Closed) => Err(AdapterError::ProcessExited { status: None }),
                };
                match frame {
                    Ok(Incoming::Prediction { id, y }) => {
                        let slot = id
                            .checked_sub(base)
                            .map(|i| i as usize)
                            .filter(|&i| i < xs.len());
                        let Some(slot) = slot.filter(|&i| slots[i].is_none()) else {
                            break Err(AdapterError::IdMismatch { got: id });
                        };
                        match to_array(y, expected) {
                            Ok(a) => slots[slot] = Some(a),
                            Err(got) => {
                                break Err(AdapterError::ShapeMismatch { id, expected, got })
                            }
                        }
                        pending -= 1;
                    }
                    Ok(Incoming::Error { msg }) => break Err(AdapterError::Remote(msg)),
                    Ok(Incoming::Ready) => {
                        break Err(AdapterError::MalformedFrame(
                            "unexpected ready frame".into(),
                        ))
                    }
                    Err(e) => break Err(e),
                }
            };
            let wrote = writer.join().expect("writer thread panicked");
            match (read, wrote) {
                (Ok(()), Ok(())) => Ok(()),
                (Err(e), _) => Err(e),
                (Ok(()), Err(e)) => Err(AdapterError::Io(e)),
            }
        });

        match outcome {
            Ok(()) => Ok(slots
                .into_iter()
                .map(|s| s.expect("all slots filled"))
                .collect()),
            Err(AdapterError::ProcessExited { .. }) => {
                proc.broken = true;
                Err(proc.exited())
            }
            Err(e) => {
                proc.broken = true;
                proc.kill();
                Err(e)
            }
        }
    }
}

enum LineError {
    Io(std::io::Error),
    Timeout,
    Closed,
}

fn proc_lines_recv(
    rx: &Receiver<std::io::Result<String>>,
    wait: Duration,
) -> std::result::Result<Option<String>, LineError> {
    match rx.recv_timeout(wait) {
        Ok(Ok(line)) if line.trim().is_empty() => Ok(None),
        Ok(Ok(line)) => Ok(Some(line)),
        Ok(Err(e)) => Err(LineError::Io(e)),
        Err(RecvTimeoutError::Timeout) => Err(LineError::Timeout),
        Err(RecvTimeoutError::Disconnected) => Err(LineError::Closed),
    }
}

fn to_array(
    rows: Vec<Vec<f64>>,
    expected: (usize, usize),
) -> std::result::Result<Array2<f64>, (usize, usize)> {
    let r = rows.len();
    if let Some(bad) = rows.iter().find(|row| row.len() != expected.1) {
        return Err((r, bad.len()));
    }
    if r != expected.0 {
        return Err((r, rows.first().map_or(0, Vec::len)));
    }
    Ok(
        Array2::from_shape_vec(expected, rows.into_iter().flatten().collect())
            .expect("validated shape"),
    )
}

impl Forecaster for ExternalModel {
    fn id(&self) -> &str {
        &self.id
    }

    fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        Ok(self
            .predict_batch(&[x.to_owned()])?
            .pop()
            .expect("one prediction"))
    }

    fn predict_batch(&self, xs: &[Array2<f64>]) -> Result<Vec<Array2<f64>>> {
        if let Some(x) = xs.iter().find(|x| x.dim() != self.input) {
            return Err(Error::ShapeMismatch {
                expected: self.input,
                got: x.dim(),
            });
        }
        if xs.is_empty() {
            return Ok(Vec::new());
        }
        let mut proc = self.acquire();
        Ok(self.exchange(&mut proc, xs)?)
    }
}

impl Drop for ExternalModel {
    fn drop(&mut self) {
        for p in &self.procs {
            let mut p = p.lock().unwrap_or_else(|e| e.into_inner());
            if p.broken {
                p.kill();
                continue;
            }
            let _ = write_frame(&mut p.stdin, &Outgoing::Shutdown).and_then(|_| p.stdin.flush());
            let deadline = Instant::now() + Duration::from_secs(2);
            loop {
                match p.child.try_wait() {
                    Ok(Some(_)) => break,
                    Ok(None) if Instant::now() < deadline => {
                        thread::sleep(Duration::from_millis(2))
                    }
                    _ => {
                        p.kill();
                        break;
                    }
                }
            }
        }
    }
}
