use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use anyhow::Result;
use cardauth_core::attacks::{deanonymize, Linkability};
use cardauth_core::simnet::{AdversaryKnowledge, ChannelTrace, Direction, Outcome};
use cardauth_core::LoginMessage;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionRow {
    pub session_id: u64,
    pub tick: u64,
    pub login: String,
    pub response: Option<String>,
    /// De-anonymized identity, when the report had an adversary to work with.
    pub user: Option<String>,
    pub tamper: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Totals {
    pub sessions: u64,
    pub accepted: u64,
    pub rejected: BTreeMap<String, u64>,
    pub card_rejected: BTreeMap<String, u64>,
    pub undelivered: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayRow {
    pub session_id: u64,
    pub original_session: u64,
    pub age_ticks: u64,
    pub outcome: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayStats {
    pub freshness_window: Option<u64>,
    pub max_delivery_delay: u64,
    pub replays: Vec<ReplayRow>,
    pub replays_accepted: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Report {
    pub sessions: Vec<SessionRow>,
    pub totals: Totals,
    pub linkability: Option<Linkability>,
    pub replay: ReplayStats,
}

pub fn build(trace: &ChannelTrace, know: Option<&AdversaryKnowledge>, window: Option<u64>) -> Result<Report> {
    let mut rows: BTreeMap<u64, SessionRow> = BTreeMap::new();
    let mut totals = Totals::default();
    let mut replay = ReplayStats {
        freshness_window: window,
        ..Default::default()
    };
    let mut linkability = know.map(|_| Linkability::default());
    let mut first_seen: HashMap<&LoginMessage, (u64, u64)> = HashMap::new();

    for event in &trace.events {
        if let Some(at) = event.delivered_at {
            replay.max_delivery_delay = replay.max_delivery_delay.max(at.0 - event.tick.0);
        }
        match event.direction {
            Direction::UserToServer => {
                let msg = event.payload.as_login().expect("direction checked on parse");
                let user = match know {
                    Some(k) => deanonymize(k, msg)?.recovered,
                    None => None,
                };
                if let Some(links) = linkability.as_mut() {
                    match &user {
                        Some(id) => links.groups.entry(id.clone()).or_default().push(event.session_id),
                        None => links.unlinked.push(event.session_id),
                    }
                }
                match first_seen.get(msg) {
                    Some(&(orig, tick)) => {
                        replay.replays.push(ReplayRow {
                            session_id: event.session_id,
                            original_session: orig,
                            age_ticks: event.delivered_at.unwrap_or(event.tick).0 - tick,
                            outcome: event.outcome.to_string(),
                        });
                        if event.outcome.is_accepted() {
                            replay.replays_accepted += 1;
                        }
                    }
                    None => {
                        first_seen.insert(msg, (event.session_id, event.tick.0));
                    }
                }
                totals.sessions += 1;
                match &event.outcome {
                    Outcome::Rejected { reason } => *totals.rejected.entry(reason.clone()).or_default() += 1,
                    Outcome::Dropped | Outcome::Rerouted { .. } => totals.undelivered += 1,
                    _ => {}
                }
                rows.insert(
                    event.session_id,
                    SessionRow {
                        session_id: event.session_id,
                        tick: event.tick.0,
                        login: event.outcome.to_string(),
                        response: None,
                        user,
                        tamper: event.tamper.clone(),
                    },
                );
            }
            Direction::ServerToUser => {
                match &event.outcome {
                    Outcome::Accepted => totals.accepted += 1,
                    Outcome::Rejected { reason } => *totals.card_rejected.entry(reason.clone()).or_default() += 1,
                    Outcome::Dropped | Outcome::Rerouted { .. } => totals.undelivered += 1,
                    Outcome::InFlight => {}
                }
                if let Some(row) = rows.get_mut(&event.session_id) {
                    row.response = Some(event.outcome.to_string());
                    if row.tamper.is_none() {
                        row.tamper = event.tamper.clone();
                    }
                }
            }
        }
    }

    Ok(Report {
        sessions: rows.into_values().collect(),
        totals,
        linkability,
        replay,
    })
}

/// Plain-text rendering of a report.
pub fn render(report: &Report) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:>8}  {:>10}  {:<28}  {:<28}  {:<16}  tamper",
        "session", "tick", "login", "response", "user"
    );
    for row in &report.sessions {
        let _ = writeln!(
            out,
            "{:>8}  {:>10}  {:<28}  {:<28}  {:<16}  {}",
            row.session_id,
            row.tick,
            row.login,
            row.response.as_deref().unwrap_or("-"),
            row.user.as_deref().unwrap_or("-"),
            row.tamper.as_deref().unwrap_or("-"),
        );
    }
    let t = &report.totals;
    let _ = writeln!(
        out,
        "\nsessions: {}  accepted: {}  undelivered: {}",
        t.sessions, t.accepted, t.undelivered
    );
    for (reason, n) in &t.rejected {
        let _ = writeln!(out, "  server rejected ({reason}): {n}");
    }
    for (reason, n) in &t.card_rejected {
        let _ = writeln!(out, "  card rejected ({reason}): {n}");
    }
    if let Some(links) = &report.linkability {
        let _ = writeln!(out, "\nlinkability groups: {}", links.groups.len());
        for (id, sessions) in &links.groups {
            let list: Vec<String> = sessions.iter().map(u64::to_string).collect();
            let _ = writeln!(out, "  {id}: {}", list.join(" "));
        }
        if !links.unlinked.is_empty() {
            let _ = writeln!(out, "  unlinked: {}", links.unlinked.len());
        }
    }
    let r = &report.replay;
    let window = r.freshness_window.map_or("-".to_owned(), |w| w.to_string());
    let _ = writeln!(
        out,
        "\nfreshness window: {window}  max delivery delay: {}  replays: {} ({} accepted)",
        r.max_delivery_delay,
        r.replays.len(),
        r.replays_accepted
    );
    out
}
