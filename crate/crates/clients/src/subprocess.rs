//! Subprocess transport.
//!
//! The client writes one envelope `{"kind": ..., "request": {...}}` to the
//! child's stdin and closes it. The child writes either a response object or
//! an error body (`{"error": {...}}`) to stdout and exits.

use std::io::{Read, Write};
use std::process::{Command, Stdio};
use std::sync::mpsc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::protocol::handle;
use crate::{BackendKind, Backends, ClientEndpoint, ClientError, ClientResult, ErrorBody};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Envelope {
    pub kind: BackendKind,
    pub request: Value,
}

pub fn call(command: &[String], ep: &ClientEndpoint, request: Value) -> ClientResult<Value> {
    let kind = ep.kind;
    let unavailable = |reason: String| ClientError::Unavailable { kind, reason };
    let (program, args) = command.split_first().ok_or_else(|| ClientError::Config(format!("{kind}: empty command")))?;
    let mut child = Command::new(program)
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .map_err(|e| unavailable(format!("cannot start {program:?}: {e}")))?;

    let envelope =
        serde_json::to_vec(&Envelope { kind, request }).map_err(|e| ClientError::InvalidRequest(e.to_string()))?;
    let mut stdin = child.stdin.take().ok_or_else(|| unavailable("no stdin pipe".into()))?;
    let mut stdout = child.stdout.take().ok_or_else(|| unavailable("no stdout pipe".into()))?;
    let (tx, rx) = mpsc::channel();
    std::thread::spawn(move || {
        // a child that exits early closes its stdin; the read below reports it
        let _ = stdin.write_all(&envelope);
        drop(stdin);
        let mut out = Vec::new();
        let r = stdout.read_to_end(&mut out).map(|_| out);
        let _ = tx.send(r);
    });

    let output = match rx.recv_timeout(Duration::from_secs_f64(ep.timeout_secs)) {
        Ok(r) => r.map_err(|e| unavailable(e.to_string()))?,
        Err(_) => {
            let _ = child.kill();
            let _ = child.wait();
            return Err(ClientError::Timeout { kind, secs: ep.timeout_secs });
        }
    };
    let status = child.wait().map_err(|e| unavailable(e.to_string()))?;
    let value: Value = match serde_json::from_slice(&output) {
        Ok(v) => v,
        Err(_) if !status.success() => return Err(unavailable(format!("backend exited with {status}"))),
        Err(e) => return Err(ClientError::MalformedResponse { kind, reason: e.to_string() }),
    };
    if value.get("error").is_some() {
        let body: ErrorBody = serde_json::from_value(value)
            .map_err(|e| ClientError::MalformedResponse { kind, reason: e.to_string() })?;
        return Err(ClientError::from_body(kind, body));
    }
    Ok(value)
}

/// Server side: answers one envelope from `input` on `output`.
///
/// Returns whether the request succeeded; the error body is written either way.
pub fn serve_one(backends: &Backends, mut input: impl Read, mut output: impl Write) -> std::io::Result<bool> {
    let mut buf = Vec::new();
    input.read_to_end(&mut buf)?;
    let result = serde_json::from_slice::<Envelope>(&buf)
        .map_err(|e| ClientError::InvalidRequest(e.to_string()))
        .and_then(|env| handle(backends, env.kind, env.request));
    let (ok, body) = match result {
        Ok(v) => (true, v),
        Err(e) => (false, serde_json::to_value(e.to_body()).unwrap_or(Value::Null)),
    };
    serde_json::to_writer(&mut output, &body)?;
    output.flush()?;
    Ok(ok)
}
