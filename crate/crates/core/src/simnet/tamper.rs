use std::fmt;
use std::str::FromStr;

use crate::primitives::{Block, Ciphertext, BLOCK_LEN};
use crate::scheme::{LoginMessage, ServerResponse};

use super::{Direction, Payload};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum WireField {
    B1,
    C1,
    B2,
    C2,
}

impl WireField {
    pub fn direction(&self) -> Direction {
        match self {
            WireField::B1 | WireField::C1 => Direction::UserToServer,
            WireField::B2 | WireField::C2 => Direction::ServerToUser,
        }
    }

    pub fn bit_len(&self) -> usize {
        match self {
            WireField::B1 | WireField::B2 => BLOCK_LEN * 8,
            WireField::C1 => LoginMessage::C1_LEN * 8,
            WireField::C2 => ServerResponse::C2_LEN * 8,
        }
    }

    fn name(&self) -> &'static str {
        match self {
            WireField::B1 => "b1",
            WireField::C1 => "c1",
            WireField::B2 => "b2",
            WireField::C2 => "c2",
        }
    }
}

/// One active intervention on a message in flight.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Tamper {
    Drop,
    Delay(u64),
    FlipBit { field: WireField, bit: usize },
    Replace(Payload),
    Reroute { to: String },
}

impl Tamper {
    pub fn label(&self) -> String {
        match self {
            Tamper::Drop => "drop".into(),
            Tamper::Delay(n) => format!("delay:{n}"),
            Tamper::FlipBit { field, bit } => format!("flip-bit:{}:{bit}", field.name()),
            Tamper::Replace(_) => "replace".into(),
            Tamper::Reroute { to } => format!("reroute:{to}"),
        }
    }

    /// Rewrites the payload in place for `FlipBit` and `Replace`; the
    /// scheduling variants leave it untouched.
    pub(crate) fn rewrite(&self, payload: &mut Payload) {
        match (self, payload) {
            (Tamper::FlipBit { field, bit }, Payload::Login(m)) => match field {
                WireField::B1 => m.b1.flip_bit(*bit),
                WireField::C1 => m.c1_mut().flip_bit(*bit),
                _ => unreachable!("field checked against direction"),
            },
            (Tamper::FlipBit { field, bit }, Payload::Response(m)) => match field {
                WireField::B2 => m.b2.flip_bit(*bit),
                WireField::C2 => m.c2_mut().flip_bit(*bit),
                _ => unreachable!("field checked against direction"),
            },
            (Tamper::Replace(new), p) => *p = new.clone(),
            _ => {}
        }
    }
}

/// Per-direction tampering applied by the simulator.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TamperPolicy {
    pub login: Option<Tamper>,
    pub response: Option<Tamper>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("bad tamper rule `{rule}`: {reason}")]
pub struct TamperParseError {
    pub rule: String,
    pub reason: String,
}

impl TamperPolicy {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn for_direction(&self, d: Direction) -> Option<&Tamper> {
        match d {
            Direction::UserToServer => self.login.as_ref(),
            Direction::ServerToUser => self.response.as_ref(),
        }
    }

    pub fn is_none(&self) -> bool {
        self.login.is_none() && self.response.is_none()
    }

    fn set(&mut self, d: Direction, t: Tamper, rule: &str) -> Result<(), TamperParseError> {
        let slot = match d {
            Direction::UserToServer => &mut self.login,
            Direction::ServerToUser => &mut self.response,
        };
        if slot.is_some() {
            return Err(TamperParseError {
                rule: rule.into(),
                reason: format!("second rule for {d}"),
            });
        }
        *slot = Some(t);
        Ok(())
    }
}

fn parse_direction(s: &str) -> Option<Direction> {
    match s {
        "login" | "user" | "c2s" => Some(Direction::UserToServer),
        "response" | "server" | "s2c" => Some(Direction::ServerToUser),
        _ => None,
    }
}

fn parse_field(s: &str) -> Option<WireField> {
    match s {
        "b1" => Some(WireField::B1),
        "c1" => Some(WireField::C1),
        "b2" => Some(WireField::B2),
        "c2" => Some(WireField::C2),
        _ => None,
    }
}

fn parse_replacement(d: Direction, hex_str: &str) -> Result<Payload, String> {
    let bytes = hex::decode(hex_str).map_err(|e| e.to_string())?;
    let block = |b: &[u8]| Block::from_slice(b).map_err(|e| e.to_string());
    let ct = |b: &[u8]| Ciphertext::from_bytes(b.to_vec()).map_err(|e| e.to_string());
    match d {
        Direction::UserToServer => {
            if bytes.len() != BLOCK_LEN + LoginMessage::C1_LEN {
                return Err(format!(
                    "login payload must be {} bytes",
                    BLOCK_LEN + LoginMessage::C1_LEN
                ));
            }
            let (b1, c1) = bytes.split_at(BLOCK_LEN);
            let msg = LoginMessage::new(block(b1)?, ct(c1)?).map_err(|e| e.to_string())?;
            Ok(Payload::Login(msg))
        }
        Direction::ServerToUser => {
            if bytes.len() != BLOCK_LEN + ServerResponse::C2_LEN {
                return Err(format!(
                    "response payload must be {} bytes",
                    BLOCK_LEN + ServerResponse::C2_LEN
                ));
            }
            let (b2, c2) = bytes.split_at(BLOCK_LEN);
            let msg = ServerResponse::new(block(b2)?, ct(c2)?).map_err(|e| e.to_string())?;
            Ok(Payload::Response(msg))
        }
    }
}

/// Comma-separated rules:
///
/// ```text
/// drop:<login|response>
/// delay:<login|response>:<ticks>
/// flip-bit:<b1|c1|b2|c2>:<bit>
/// replace:<login|response>:<hex of B||C>
/// reroute:<login|response>:<principal>
/// ```
impl FromStr for TamperPolicy {
    type Err = TamperParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut policy = TamperPolicy::default();
        for rule in s.split(',').map(str::trim).filter(|r| !r.is_empty()) {
            let err = |reason: &str| TamperParseError {
                rule: rule.into(),
                reason: reason.into(),
            };
            let parts: Vec<&str> = rule.split(':').collect();
            let dir = |i: usize| {
                parts
                    .get(i)
                    .and_then(|s| parse_direction(s))
                    .ok_or_else(|| err("expected `login` or `response`"))
            };
            match parts.as_slice() {
                ["drop", _] => policy.set(dir(1)?, Tamper::Drop, rule)?,
                ["delay", _, n] => {
                    let n = n.parse().map_err(|_| err("delay must be a tick count"))?;
                    policy.set(dir(1)?, Tamper::Delay(n), rule)?
                }
                ["flip-bit", f, bit] => {
                    let field = parse_field(f).ok_or_else(|| err("field must be b1, c1, b2 or c2"))?;
                    let bit: usize = bit.parse().map_err(|_| err("bit must be a non-negative integer"))?;
                    if bit >= field.bit_len() {
                        return Err(err(&format!("bit must be below {}", field.bit_len())));
                    }
                    policy.set(field.direction(), Tamper::FlipBit { field, bit }, rule)?
                }
                ["replace", _, hex_str] => {
                    let d = dir(1)?;
                    let payload = parse_replacement(d, hex_str).map_err(|e| err(&e))?;
                    policy.set(d, Tamper::Replace(payload), rule)?
                }
                ["reroute", _, to] if !to.is_empty() => {
                    policy.set(dir(1)?, Tamper::Reroute { to: (*to).to_owned() }, rule)?
                }
                _ => return Err(err("unrecognized rule")),
            }
        }
        Ok(policy)
    }
}

impl fmt::Display for TamperPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        if let Some(t) = &self.login {
            parts.push(format!("login={}", t.label()));
        }
        if let Some(t) = &self.response {
            parts.push(format!("response={}", t.label()));
        }
        if parts.is_empty() {
            f.write_str("none")
        } else {
            f.write_str(&parts.join(","))
        }
    }
}
