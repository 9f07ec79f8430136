//! Line protocol adapter for out-of-process scorers.
//!
//! The scorer announces itself with `QAD-SCORER 1 <name> <ref|noref>`, then
//! answers every request line `src<TAB>hyp[<TAB>ref]` with one decimal
//! number. Tabs, newlines and backslashes inside fields are escaped as
//! `\t`, `\n` and `\\`. Requests are written a batch at a time and flushed.

use std::io::{BufRead, BufReader, Read, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{MetricError, MetricKind, ScoreRow};

pub const HANDSHAKE_MAGIC: &str = "QAD-SCORER";
pub const PROTOCOL_VERSION: &str = "1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalScorerConfig {
    pub command: Vec<String>,
    pub batch_size: usize,
    pub timeout: Duration,
}

impl ExternalScorerConfig {
    pub fn new(command: Vec<String>) -> Self {
        ExternalScorerConfig {
            command,
            batch_size: 256,
            timeout: Duration::from_secs(60),
        }
    }

    /// Split a shell-like command string on whitespace.
    pub fn from_command_line(command: &str) -> Self {
        Self::new(command.split_whitespace().map(str::to_string).collect())
    }
}

pub fn escape_field(field: &str) -> String {
    let mut out = String::with_capacity(field.len());
    for c in field.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            c => out.push(c),
        }
    }
    out
}

pub fn unescape_field(field: &str) -> String {
    let mut out = String::with_capacity(field.len());
    let mut chars = field.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('t') => out.push('\t'),
            Some('n') => out.push('\n'),
            Some('\\') => out.push('\\'),
            Some(other) => {
                out.push('\\');
                out.push(other);
            }
            None => out.push('\\'),
        }
    }
    out
}

/// Encode one request line (without the trailing newline).
pub fn encode_request(row: &ScoreRow<'_>) -> String {
    let mut line = format!("{}\t{}", escape_field(row.src), escape_field(row.hyp));
    if let Some(r) = row.reference {
        line.push('\t');
        line.push_str(&escape_field(r));
    }
    line
}

/// Parse the scorer's announcement line into (name, kind).
pub fn parse_handshake(line: &str) -> Result<(String, MetricKind), MetricError> {
    let parts: Vec<&str> = line.split_whitespace().collect();
    match parts.as_slice() {
        [HANDSHAKE_MAGIC, PROTOCOL_VERSION, name, kind] => {
            let kind = match *kind {
                "ref" => MetricKind::ReferenceBased,
                "noref" => MetricKind::ReferenceFree,
                other => {
                    return Err(MetricError::Handshake(format!(
                        "unknown scorer kind {other:?}"
                    )))
                }
            };
            Ok((name.to_string(), kind))
        }
        _ => Err(MetricError::Handshake(format!(
            "unexpected handshake {line:?}"
        ))),
    }
}

struct Process {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<String>,
    stderr: Arc<Mutex<String>>,
    broken: bool,
}

impl Process {
    fn diagnostics(&mut self) -> String {
        // Give the stderr reader a moment to drain after the process exits.
        for _ in 0..50 {
            if matches!(self.child.try_wait(), Ok(Some(_))) {
                break;
            }
            thread::sleep(Duration::from_millis(10));
        }
        thread::sleep(Duration::from_millis(20));
        let status = match self.child.try_wait() {
            Ok(Some(status)) => status.to_string(),
            _ => "still running".to_string(),
        };
        let stderr = self.stderr.lock().map(|s| s.clone()).unwrap_or_default();
        format!("{status}; stderr: {}", stderr.trim_end())
    }

    fn read_line(&mut self, timeout: Duration) -> Result<String, MetricError> {
        match self.lines.recv_timeout(timeout) {
            Ok(line) => Ok(line),
            Err(RecvTimeoutError::Timeout) => {
                self.broken = true;
                Err(MetricError::Timeout(timeout))
            }
            Err(RecvTimeoutError::Disconnected) => {
                self.broken = true;
                Err(MetricError::Crash(self.diagnostics()))
            }
        }
    }
}

impl Drop for Process {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// A running scorer process. Requests from concurrent callers are
/// serialized; each call receives its scores in request order.
pub struct ExternalScorer {
    name: String,
    kind: MetricKind,
    config: ExternalScorerConfig,
    process: Mutex<Process>,
}

impl std::fmt::Debug for ExternalScorer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ExternalScorer")
            .field("name", &self.name)
            .field("kind", &self.kind)
            .field("command", &self.config.command)
            .finish()
    }
}

impl ExternalScorer {
    /// Launch the scorer and read its handshake.
    pub fn spawn(config: &ExternalScorerConfig) -> Result<Self, MetricError> {
        let (program, args) = config
            .command
            .split_first()
            .ok_or_else(|| MetricError::Config("external scorer command is empty".into()))?;
        if config.batch_size == 0 {
            return Err(MetricError::Config("batch_size must be positive".into()));
        }
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| MetricError::Launch(format!("{program}: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let mut stderr_pipe = child.stderr.take().expect("piped stderr");

        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                match line {
                    Ok(l) => {
                        if tx.send(l).is_err() {
                            break;
                        }
                    }
                    Err(_) => break,
                }
            }
        });
        let stderr = Arc::new(Mutex::new(String::new()));
        let sink = Arc::clone(&stderr);
        thread::spawn(move || {
            let mut buf = [0u8; 4096];
            while let Ok(n) = stderr_pipe.read(&mut buf) {
                if n == 0 {
                    break;
                }
                if let Ok(mut s) = sink.lock() {
                    s.push_str(&String::from_utf8_lossy(&buf[..n]));
                }
            }
        });

        let mut process = Process {
            child,
            stdin,
            lines: rx,
            stderr,
            broken: false,
        };
        let hello = process.read_line(config.timeout)?;
        let (name, kind) = parse_handshake(&hello)?;
        Ok(ExternalScorer {
            name,
            kind,
            config: config.clone(),
            process: Mutex::new(process),
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> MetricKind {
        self.kind
    }

    /// Score rows in order, `batch_size` requests per round trip.
    /// Protocol errors name the 1-based response line within this call.
    pub fn score(&self, rows: &[ScoreRow<'_>]) -> Result<Vec<f64>, MetricError> {
        for (i, row) in rows.iter().enumerate() {
            super::check_row(self.kind, row, i)?;
        }
        if rows.is_empty() {
            return Ok(Vec::new());
        }
        let mut process = self
            .process
            .lock()
            .map_err(|_| MetricError::Crash("dispatcher poisoned".into()))?;
        if process.broken {
            return Err(MetricError::Crash(
                "scorer is unusable after an earlier failure".into(),
            ));
        }
        let mut scores = Vec::with_capacity(rows.len());
        for chunk in rows.chunks(self.config.batch_size) {
            let mut payload = String::new();
            for row in chunk {
                payload.push_str(&encode_request(row));
                payload.push('\n');
            }
            let written = process
                .stdin
                .write_all(payload.as_bytes())
                .and_then(|_| process.stdin.flush());
            if written.is_err() {
                process.broken = true;
                return Err(MetricError::Crash(process.diagnostics()));
            }
            for _ in chunk {
                let line = process.read_line(self.config.timeout)?;
                let lineno = scores.len() + 1;
                match line.trim().parse::<f64>() {
                    Ok(v) if v.is_finite() => scores.push(v),
                    _ => {
                        process.broken = true;
                        return Err(MetricError::Protocol {
                            line: lineno,
                            message: format!("expected a finite number, got {line:?}"),
                        });
                    }
                }
            }
        }
        Ok(scores)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn escaping_round_trips() {
        for s in [
            "plain",
            "tab\there",
            "new\nline",
            "back\\slash",
            "\\t literal",
            "",
        ] {
            assert_eq!(unescape_field(&escape_field(s)), s);
            assert!(!escape_field(s).contains(['\t', '\n']));
        }
    }

    #[test]
    fn request_encoding() {
        let row = ScoreRow {
            src: "a\tb",
            hyp: "c",
            reference: Some("d\ne"),
        };
        assert_eq!(encode_request(&row), "a\\tb\tc\td\\ne");
        let row = ScoreRow {
            src: "s",
            hyp: "h",
            reference: None,
        };
        assert_eq!(encode_request(&row), "s\th");
    }

    #[test]
    fn handshake_parsing() {
        let (name, kind) = parse_handshake("QAD-SCORER 1 comet ref").unwrap();
        assert_eq!(name, "comet");
        assert_eq!(kind, MetricKind::ReferenceBased);
        assert!(parse_handshake("QAD-SCORER 2 comet ref").is_err());
        assert!(parse_handshake("hello").is_err());
        assert!(parse_handshake("QAD-SCORER 1 x maybe").is_err());
    }

    #[test]
    fn empty_command_rejected() {
        let cfg = ExternalScorerConfig::new(Vec::new());
        assert!(matches!(
            ExternalScorer::spawn(&cfg),
            Err(MetricError::Config(_))
        ));
    }
}
