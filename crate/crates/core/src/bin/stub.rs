//! Last-value forecaster speaking the line-delimited JSON model protocol.
//!
//! Usage: `sensorfault-stub [--reverse] [--fault <kind>]`
//!
//! `--reverse` answers each burst of pending requests in reverse order.
//! `--fault` misbehaves on the first predict frame: `bad-horizon`,
//! `garbage`, `exit`, `hang`, `wrong-id` or `remote-error`.

use std::io::{self, BufRead, Write};
use std::sync::mpsc;
use std::thread;
use std::time::Duration;

use serde_json::{json, Value};

#[derive(Clone, Copy)]
struct Hello {
    horizon: usize,
    channels: usize,
}

fn send(out: &mut impl Write, v: &Value) {
    let mut line = serde_json::to_string(v).expect("json value");
    line.push('\n');
    if out
        .write_all(line.as_bytes())
        .and_then(|_| out.flush())
        .is_err()
    {
        std::process::exit(1);
    }
}

fn error(out: &mut impl Write, msg: &str) -> ! {
    send(out, &json!({"type": "error", "msg": msg}));
    std::process::exit(1);
}

fn predict(hello: Hello, targets: &[usize], x: &Value) -> Result<Value, String> {
    let rows = x.as_array().ok_or("x must be an array of rows")?;
    let last = rows
        .last()
        .and_then(Value::as_array)
        .ok_or("x has no rows")?;
    if last.len() != hello.channels {
        return Err(format!(
            "row has {} columns, expected {}",
            last.len(),
            hello.channels
        ));
    }
    let row: Vec<f64> = targets
        .iter()
        .map(|&t| {
            last[t]
                .as_f64()
                .ok_or_else(|| format!("non-numeric cell in column {t}"))
        })
        .collect::<Result<_, _>>()?;
    Ok(json!(vec![row; hello.horizon]))
}

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let reverse = args.iter().any(|a| a == "--reverse");
    let fault = args
        .iter()
        .position(|a| a == "--fault")
        .and_then(|i| args.get(i + 1))
        .cloned();

    let (tx, rx) = mpsc::channel::<String>();
    thread::spawn(move || {
        for line in io::stdin().lock().lines() {
            let Ok(line) = line else { break };
            if tx.send(line).is_err() {
                break;
            }
        }
    });

    let stdout = io::stdout();
    let mut out = stdout.lock();
    let mut state: Option<(Hello, Vec<usize>)> = None;
    let mut pending: Vec<Value> = Vec::new();
    let mut faulted = false;

    loop {
        let line = if reverse && !pending.is_empty() {
            match rx.recv_timeout(Duration::from_millis(20)) {
                Ok(l) => Some(l),
                Err(mpsc::RecvTimeoutError::Timeout) => None,
                Err(mpsc::RecvTimeoutError::Disconnected) => break,
            }
        } else {
            match rx.recv() {
                Ok(l) => Some(l),
                Err(_) => break,
            }
        };
        let Some(line) = line else {
            for frame in pending.drain(..).rev() {
                send(&mut out, &frame);
            }
            continue;
        };
        if line.trim().is_empty() {
            continue;
        }
        let msg: Value = match serde_json::from_str(&line) {
            Ok(v) => v,
            Err(e) => error(&mut out, &format!("malformed frame: {e}")),
        };
        match msg.get("type").and_then(Value::as_str) {
            Some("hello") => {
                let field = |k: &str| msg.get(k).and_then(Value::as_u64).map(|v| v as usize);
                let targets: Option<Vec<usize>> =
                    msg.get("targets").and_then(Value::as_array).map(|t| {
                        t.iter()
                            .filter_map(Value::as_u64)
                            .map(|v| v as usize)
                            .collect()
                    });
                match (field("horizon"), field("channels"), targets) {
                    (Some(horizon), Some(channels), Some(targets))
                        if targets.iter().all(|&t| t < channels) =>
                    {
                        state = Some((Hello { horizon, channels }, targets));
                        send(&mut out, &json!({"type": "ready"}));
                    }
                    _ => error(&mut out, "hello frame missing or invalid fields"),
                }
            }
            Some("predict") => {
                let Some((hello, targets)) = &state else {
                    error(&mut out, "predict before hello");
                };
                let id = msg
                    .get("id")
                    .and_then(Value::as_u64)
                    .unwrap_or_else(|| error(&mut out, "predict without id"));
                let mut y = match predict(*hello, targets, msg.get("x").unwrap_or(&Value::Null)) {
                    Ok(y) => y,
                    Err(e) => error(&mut out, &e),
                };
                let mut id = json!(id);
                if !faulted {
                    if let Some(kind) = fault.as_deref() {
                        faulted = true;
                        match kind {
                            "bad-horizon" => {
                                let row = y[0].clone();
                                y.as_array_mut().expect("rows").push(row);
                            }
                            "garbage" => {
                                let _ = writeln!(out, "this is not json");
                                let _ = out.flush();
                                continue;
                            }
                            "exit" => std::process::exit(3),
                            "hang" => loop {
                                thread::sleep(Duration::from_secs(3600));
                            },
                            "wrong-id" => id = json!(u64::MAX),
                            "remote-error" => {
                                send(&mut out, &json!({"type": "error", "msg": "model exploded"}));
                                continue;
                            }
                            _ => {}
                        }
                    }
                }
                let frame = json!({"type": "prediction", "id": id, "y": y});
                if reverse {
                    pending.push(frame);
                } else {
                    send(&mut out, &frame);
                }
            }
            Some("shutdown") => {
                for frame in pending.drain(..).rev() {
                    send(&mut out, &frame);
                }
                std::process::exit(0);
            }
            other => error(&mut out, &format!("unknown frame type {other:?}")),
        }
    }
}
