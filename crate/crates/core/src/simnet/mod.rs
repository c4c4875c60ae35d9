//! Deterministic public channel between cards and the server, with an
//! adversary that can read, alter, delay, drop and reroute every message,
//! read card memory, and register as an ordinary user.

mod tamper;
mod trace;

pub use tamper::{Tamper, TamperParseError, TamperPolicy, WireField};
pub use trace::{ChannelTrace, Direction, Outcome, Payload, TraceError, TraceEvent, TRACE_SCHEMA, TRACE_VERSION};

use std::collections::BTreeMap;

use rand::RngCore;

use crate::primitives::{Block, Timestamp};
use crate::scheme::{
    register_user, CardRejection, Credentials, LoginMessage, SchemeError, ServerRejection, ServerResponse, ServerState,
    SessionRecord, SmartCard, WorkMeter,
};

/// Logical clock. Each `advance` moves forward by the next entry of a
/// cyclic schedule of increments.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimClock {
    tick: u64,
    schedule: Vec<u64>,
    cursor: usize,
}

impl SimClock {
    pub fn new(start: u64) -> Self {
        Self::with_schedule(start, vec![1])
    }

    /// An empty schedule behaves like `[1]`.
    pub fn with_schedule(start: u64, schedule: Vec<u64>) -> Self {
        let schedule = if schedule.is_empty() { vec![1] } else { schedule };
        SimClock {
            tick: start,
            schedule,
            cursor: 0,
        }
    }

    pub fn now(&self) -> Timestamp {
        Timestamp(self.tick)
    }

    pub fn advance(&mut self) -> Timestamp {
        let step = self.schedule[self.cursor % self.schedule.len()];
        self.cursor += 1;
        self.advance_by(step)
    }

    pub fn advance_by(&mut self, ticks: u64) -> Timestamp {
        self.tick = self.tick.saturating_add(ticks);
        self.now()
    }
}

impl Default for SimClock {
    fn default() -> Self {
        SimClock::new(1)
    }
}

/// A registered user: credentials plus the issued card.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct User {
    pub creds: Credentials,
    pub card: SmartCard,
}

impl User {
    pub fn register<R: RngCore + ?Sized>(
        server: &mut ServerState,
        id: &str,
        pw: &str,
        rng: &mut R,
    ) -> Result<Self, SchemeError> {
        let (creds, card) = register_user(server, id, pw, rng)?;
        Ok(User { creds, card })
    }

    pub fn id(&self) -> &str {
        &self.creds.id
    }

    pub fn honest_input(&self) -> LoginInput {
        LoginInput {
            id: self.creds.id.clone(),
            pw: self.creds.pw.clone(),
        }
    }
}

/// What the user types at the card reader.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoginInput {
    pub id: String,
    pub pw: String,
}

/// Per-session results. `None` means that side never received a message.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionOutcome {
    pub session_id: u64,
    pub login: LoginMessage,
    pub server: Option<Result<SessionRecord, ServerRejection>>,
    pub card: Option<Result<SessionRecord, CardRejection>>,
    pub server_work: WorkMeter,
}

impl SessionOutcome {
    pub fn server_accepted(&self) -> bool {
        matches!(self.server, Some(Ok(_)))
    }

    pub fn server_rejection(&self) -> Option<ServerRejection> {
        match self.server {
            Some(Err(r)) => Some(r),
            _ => None,
        }
    }

    /// Both sides finished and hold the same session key.
    pub fn keys_agree(&self) -> bool {
        match (&self.server, &self.card) {
            (Some(Ok(s)), Some(Ok(c))) => s.sk == c.sk,
            _ => false,
        }
    }
}

/// Single-threaded event-ordered simulator. Owns the server, the clock and
/// the channel trace; cards are passed in per session.
#[derive(Debug, Clone)]
pub struct Simulator {
    pub server: ServerState,
    pub clock: SimClock,
    trace: ChannelTrace,
    next_session: u64,
    mailboxes: BTreeMap<String, Vec<Payload>>,
}

impl Simulator {
    pub fn new(server: ServerState, clock: SimClock) -> Self {
        Simulator {
            server,
            clock,
            trace: ChannelTrace::new(),
            next_session: 0,
            mailboxes: BTreeMap::new(),
        }
    }

    pub fn trace(&self) -> &ChannelTrace {
        &self.trace
    }

    pub fn into_trace(self) -> ChannelTrace {
        self.trace
    }

    /// Messages rerouted to a principal other than their addressee.
    pub fn mailbox(&self, principal: &str) -> &[Payload] {
        self.mailboxes.get(principal).map_or(&[], Vec::as_slice)
    }

    pub fn run_session(&mut self, user: &User, policy: &TamperPolicy) -> SessionOutcome {
        self.run_session_with_input(user, &user.honest_input(), policy)
            .expect("registered identity always encodes")
    }

    /// Login → deliver → authenticate → deliver → verify, applying `policy`
    /// to each delivery. Rejections are outcomes; the only error is an
    /// identity too long to encode.
    pub fn run_session_with_input(
        &mut self,
        user: &User,
        input: &LoginInput,
        policy: &TamperPolicy,
    ) -> Result<SessionOutcome, SchemeError> {
        let session_id = self.next_session;
        self.next_session += 1;
        let freshness = self.server.freshness_window();

        let t_login = self.clock.now();
        let (msg, pending) = user.card.login(&input.id, &input.pw, t_login)?;
        let mut outcome = SessionOutcome {
            session_id,
            login: msg.clone(),
            server: None,
            card: None,
            server_work: WorkMeter::default(),
        };

        let mut payload = Payload::Login(msg);
        let tamper = policy.login.as_ref();
        let Some(t_recv) = self.deliver(session_id, t_login, &mut payload, tamper) else {
            self.clock.advance();
            return Ok(outcome);
        };
        let delivered = payload.as_login().expect("login slot keeps a login payload");
        let result = self
            .server
            .authenticate_metered(delivered, t_recv, &mut outcome.server_work);
        self.trace.push(TraceEvent {
            tick: t_login,
            session_id,
            direction: Direction::UserToServer,
            payload,
            outcome: match &result {
                Ok(_) => Outcome::Accepted,
                Err(r) => Outcome::Rejected { reason: r.to_string() },
            },
            delivered_at: Some(t_recv),
            tamper: tamper.map(Tamper::label),
        });
        let (response, record) = match result {
            Ok(ok) => ok,
            Err(r) => {
                outcome.server = Some(Err(r));
                self.clock.advance();
                return Ok(outcome);
            }
        };
        outcome.server = Some(Ok(record));

        let mut payload = Payload::Response(response);
        let tamper = policy.response.as_ref();
        let Some(t_card) = self.deliver(session_id, t_recv, &mut payload, tamper) else {
            self.clock.advance();
            return Ok(outcome);
        };
        let delivered = payload.as_response().expect("response slot keeps a response payload");
        let card_result = user.card.verify_server(pending, delivered, t_card, freshness);
        self.trace.push(TraceEvent {
            tick: t_recv,
            session_id,
            direction: Direction::ServerToUser,
            payload,
            outcome: match &card_result {
                Ok(_) => Outcome::Accepted,
                Err(r) => Outcome::Rejected { reason: r.to_string() },
            },
            delivered_at: Some(t_card),
            tamper: tamper.map(Tamper::label),
        });
        outcome.card = Some(card_result);
        self.clock.advance();
        Ok(outcome)
    }

    /// Applies a tamper rule and advances the clock to the delivery tick.
    /// Returns `None` (after recording the event) when the message never
    /// reaches its addressee.
    fn deliver(
        &mut self,
        session_id: u64,
        sent: Timestamp,
        payload: &mut Payload,
        tamper: Option<&Tamper>,
    ) -> Option<Timestamp> {
        let direction = payload.direction();
        let undelivered = match tamper {
            Some(Tamper::Drop) => Some(Outcome::Dropped),
            Some(Tamper::Reroute { to }) => {
                self.mailboxes.entry(to.clone()).or_default().push(payload.clone());
                Some(Outcome::Rerouted { to: to.clone() })
            }
            Some(Tamper::Delay(n)) => {
                self.clock.advance_by(*n);
                None
            }
            Some(Tamper::Replace(new)) if new.direction() != direction => None,
            Some(t) => {
                t.rewrite(payload);
                None
            }
            None => None,
        };
        if let Some(outcome) = undelivered {
            self.trace.push(TraceEvent {
                tick: sent,
                session_id,
                direction,
                payload: payload.clone(),
                outcome,
                delivered_at: None,
                tamper: tamper.map(Tamper::label),
            });
            return None;
        }
        Some(self.clock.advance())
    }

    /// Active adversary: sends `msg` to the server at the current tick, as a
    /// new session. The server's response goes back to the adversary and
    /// is recorded as in flight.
    pub fn inject_login(
        &mut self,
        msg: &LoginMessage,
        label: &str,
    ) -> Result<(ServerResponse, SessionRecord), ServerRejection> {
        let session_id = self.next_session;
        self.next_session += 1;
        let now = self.clock.now();
        let result = self.server.authenticate(msg, now);
        self.trace.push(TraceEvent {
            tick: now,
            session_id,
            direction: Direction::UserToServer,
            payload: Payload::Login(msg.clone()),
            outcome: match &result {
                Ok(_) => Outcome::Accepted,
                Err(r) => Outcome::Rejected { reason: r.to_string() },
            },
            delivered_at: Some(now),
            tamper: Some(label.to_owned()),
        });
        if let Ok((resp, _)) = &result {
            self.trace.push(TraceEvent {
                tick: now,
                session_id,
                direction: Direction::ServerToUser,
                payload: Payload::Response(resp.clone()),
                outcome: Outcome::InFlight,
                delivered_at: None,
                tamper: None,
            });
        }
        self.clock.advance();
        result
    }
}

/// Everything the adversary has gathered.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AdversaryKnowledge {
    pub extracted_cards: BTreeMap<String, SmartCard>,
    pub intercepted: Vec<TraceEvent>,
    pub own_creds: Option<Credentials>,
    pub own_card: Option<SmartCard>,
    pub derived_hx: Option<Block>,
    observed: usize,
}

impl AdversaryKnowledge {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn intercepted_logins(&self) -> impl Iterator<Item = (u64, &LoginMessage)> {
        self.intercepted
            .iter()
            .filter_map(|e| e.payload.as_login().map(|m| (e.session_id, m)))
    }

    pub fn intercepted_responses(&self) -> impl Iterator<Item = (u64, &ServerResponse)> {
        self.intercepted
            .iter()
            .filter_map(|e| e.payload.as_response().map(|m| (e.session_id, m)))
    }
}

/// Copies every trace event the adversary has not yet seen. The cursor is
/// per knowledge value, so one knowledge value should follow one trace.
pub fn eavesdrop(trace: &ChannelTrace, know: &mut AdversaryKnowledge) -> usize {
    let fresh = trace.events.get(know.observed..).unwrap_or(&[]);
    know.intercepted.extend_from_slice(fresh);
    know.observed = trace.len();
    fresh.len()
}

/// Reads card memory verbatim. The card is untouched.
pub fn extract_card(know: &mut AdversaryKnowledge, label: &str, card: &SmartCard) -> SmartCard {
    know.extracted_cards.insert(label.to_owned(), *card);
    *card
}

/// Registers the adversary as a legitimate user and keeps the result.
pub fn adversary_register<R: RngCore + ?Sized>(
    server: &mut ServerState,
    know: &mut AdversaryKnowledge,
    id: &str,
    pw: &str,
    rng: &mut R,
) -> Result<User, SchemeError> {
    let user = User::register(server, id, pw, rng)?;
    know.own_creds = Some(user.creds.clone());
    know.own_card = Some(user.card);
    Ok(user)
}
