use std::io::{BufRead, BufReader, Read, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::Duration;

use super::wire::Transport;
use super::GatewayError;

enum ReaderEvent {
    Line(String),
    Oversized(usize),
    Eof,
    Failed(std::io::Error),
}

/// Child process speaking the wire protocol over stdin/stdout.
pub struct ProcessTransport {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<ReaderEvent>,
    timeout: Duration,
    limit: usize,
    broken: bool,
}

impl ProcessTransport {
    pub fn spawn(
        command: &str,
        args: &[String],
        timeout: Duration,
        max_response_bytes: usize,
    ) -> Result<Self, GatewayError> {
        let mut child = Command::new(command)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| GatewayError::Unreachable(format!("{command}: {e}")))?;
        let stdin = child.stdin.take().expect("stdin piped");
        let stdout = child.stdout.take().expect("stdout piped");
        let (tx, rx) = mpsc::channel();
        let limit = max_response_bytes;
        thread::spawn(move || {
            let mut reader = BufReader::new(stdout);
            loop {
                let mut buf = Vec::new();
                let read = (&mut reader).take(limit as u64 + 1).read_until(b'\n', &mut buf);
                let event = match read {
                    Ok(0) => ReaderEvent::Eof,
                    Ok(n) if n > limit && buf.last() != Some(&b'\n') => ReaderEvent::Oversized(n),
                    Ok(_) => ReaderEvent::Line(String::from_utf8_lossy(&buf).into_owned()),
                    Err(e) => ReaderEvent::Failed(e),
                };
                let stop = !matches!(event, ReaderEvent::Line(_));
                if tx.send(event).is_err() || stop {
                    break;
                }
            }
        });
        Ok(Self {
            child,
            stdin,
            lines: rx,
            timeout,
            limit,
            broken: false,
        })
    }
}

impl Transport for ProcessTransport {
    fn roundtrip(&mut self, line: &str) -> Result<String, GatewayError> {
        if self.broken {
            return Err(GatewayError::Closed);
        }
        let write = self
            .stdin
            .write_all(line.as_bytes())
            .and_then(|_| self.stdin.write_all(b"\n"))
            .and_then(|_| self.stdin.flush());
        if write.is_err() {
            self.broken = true;
            return Err(GatewayError::Closed);
        }
        match self.lines.recv_timeout(self.timeout) {
            Ok(ReaderEvent::Line(l)) => Ok(l),
            Ok(ReaderEvent::Oversized(got)) => {
                self.broken = true;
                Err(GatewayError::Oversized {
                    limit: self.limit,
                    got,
                })
            }
            Ok(ReaderEvent::Eof) | Err(RecvTimeoutError::Disconnected) => {
                self.broken = true;
                Err(GatewayError::Closed)
            }
            Ok(ReaderEvent::Failed(e)) => {
                self.broken = true;
                Err(GatewayError::Io(e))
            }
            Err(RecvTimeoutError::Timeout) => {
                self.broken = true;
                Err(GatewayError::Timeout(self.timeout))
            }
        }
    }
}

impl Drop for ProcessTransport {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Single HTTP endpoint: each record is POSTed and the body of the reply is
/// the agent's record.
pub struct HttpTransport {
    url: String,
    agent: ureq::Agent,
    timeout: Duration,
    limit: usize,
}

impl HttpTransport {
    pub fn new(url: &str, timeout: Duration, max_response_bytes: usize) -> Self {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build();
        Self {
            url: url.to_string(),
            agent: config.into(),
            timeout,
            limit: max_response_bytes,
        }
    }
}

impl Transport for HttpTransport {
    fn roundtrip(&mut self, line: &str) -> Result<String, GatewayError> {
        let mut response = self
            .agent
            .post(&self.url)
            .header("content-type", "application/x-ndjson")
            .send(line)
            .map_err(|e| self.map_error(e))?;
        let status = response.status();
        if !status.is_success() {
            return Err(GatewayError::Agent(format!("HTTP {status}")));
        }
        response
            .body_mut()
            .with_config()
            .limit(self.limit as u64)
            .read_to_string()
            .map_err(|e| self.map_error(e))
    }
}

impl HttpTransport {
    fn map_error(&self, e: ureq::Error) -> GatewayError {
        match e {
            ureq::Error::Timeout(_) => GatewayError::Timeout(self.timeout),
            ureq::Error::BodyExceedsLimit(_) => GatewayError::Oversized {
                limit: self.limit,
                got: self.limit + 1,
            },
            ureq::Error::Io(io) if io.kind() == std::io::ErrorKind::ConnectionRefused => {
                GatewayError::Unreachable(format!("{}: {io}", self.url))
            }
            ureq::Error::ConnectionFailed | ureq::Error::HostNotFound => {
                GatewayError::Unreachable(self.url.clone())
            }
            ureq::Error::Io(io) => GatewayError::Io(io),
            other => GatewayError::Unreachable(format!("{}: {other}", self.url)),
        }
    }
}
