use std::fmt;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::primitives::Timestamp;
use crate::scheme::{LoginMessage, ServerResponse};

pub const TRACE_SCHEMA: &str = "cardauth-trace";
pub const TRACE_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    UserToServer,
    ServerToUser,
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::UserToServer => "user->server",
            Direction::ServerToUser => "server->user",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Payload {
    Login(LoginMessage),
    Response(ServerResponse),
}

impl Payload {
    pub fn direction(&self) -> Direction {
        match self {
            Payload::Login(_) => Direction::UserToServer,
            Payload::Response(_) => Direction::ServerToUser,
        }
    }

    pub fn as_login(&self) -> Option<&LoginMessage> {
        match self {
            Payload::Login(m) => Some(m),
            Payload::Response(_) => None,
        }
    }

    pub fn as_response(&self) -> Option<&ServerResponse> {
        match self {
            Payload::Response(m) => Some(m),
            Payload::Login(_) => None,
        }
    }
}

/// What happened to a message at its receiver.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum Outcome {
    Accepted,
    Rejected { reason: String },
    InFlight,
    Dropped,
    Rerouted { to: String },
}

impl Outcome {
    pub fn is_accepted(&self) -> bool {
        matches!(self, Outcome::Accepted)
    }

    pub fn rejection_reason(&self) -> Option<&str> {
        match self {
            Outcome::Rejected { reason } => Some(reason),
            _ => None,
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Outcome::Accepted => f.write_str("accepted"),
            Outcome::Rejected { reason } => write!(f, "rejected({reason})"),
            Outcome::InFlight => f.write_str("in-flight"),
            Outcome::Dropped => f.write_str("dropped"),
            Outcome::Rerouted { to } => write!(f, "rerouted({to})"),
        }
    }
}

/// One message on the public channel. `payload` is what the receiver got,
/// i.e. after any tampering; `tick` is when the sender emitted it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub tick: Timestamp,
    pub session_id: u64,
    pub direction: Direction,
    pub payload: Payload,
    pub outcome: Outcome,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delivered_at: Option<Timestamp>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tamper: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct TraceHeader {
    schema: String,
    version: u32,
}

#[derive(Debug, thiserror::Error)]
pub enum TraceError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Ordered record of everything sent over the public channel.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ChannelTrace {
    pub events: Vec<TraceEvent>,
}

impl ChannelTrace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn push(&mut self, event: TraceEvent) {
        debug_assert!(self.events.last().is_none_or(|last| last.tick <= event.tick));
        self.events.push(event);
    }

    pub fn logins(&self) -> impl Iterator<Item = (&TraceEvent, &LoginMessage)> {
        self.events.iter().filter_map(|e| e.payload.as_login().map(|m| (e, m)))
    }

    pub fn session_events(&self, session_id: u64) -> impl Iterator<Item = &TraceEvent> {
        self.events.iter().filter(move |e| e.session_id == session_id)
    }

    /// JSON lines: a schema header, then one event per line.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let header = TraceHeader {
            schema: TRACE_SCHEMA.into(),
            version: TRACE_VERSION,
        };
        serde_json::to_writer(&mut w, &header)?;
        w.write_all(b"\n")?;
        for event in &self.events {
            serde_json::to_writer(&mut w, event)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("write to Vec");
        String::from_utf8(buf).expect("JSON is UTF-8")
    }

    /// Parses a trace. An empty input is an empty trace; otherwise the
    /// first line must be the schema header. Line numbers are 1-based.
    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Self, TraceError> {
        let mut trace = ChannelTrace::new();
        let mut saw_header = false;
        for (idx, line) in r.lines().enumerate() {
            let line_no = idx + 1;
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parse_err = |message: String| TraceError::Parse { line: line_no, message };
            if !saw_header {
                let header: TraceHeader =
                    serde_json::from_str(&line).map_err(|e| parse_err(format!("bad header: {e}")))?;
                if header.schema != TRACE_SCHEMA || header.version != TRACE_VERSION {
                    return Err(parse_err(format!(
                        "unsupported schema {} v{}",
                        header.schema, header.version
                    )));
                }
                saw_header = true;
                continue;
            }
            let event: TraceEvent = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
            if event.payload.direction() != event.direction {
                return Err(parse_err("payload does not match direction".into()));
            }
            if let Some(last) = trace.events.last() {
                if event.tick < last.tick {
                    return Err(parse_err("ticks go backwards".into()));
                }
            }
            trace.events.push(event);
        }
        Ok(trace)
    }

    pub fn from_jsonl_str(s: &str) -> Result<Self, TraceError> {
        Self::read_jsonl(s.as_bytes())
    }
}
