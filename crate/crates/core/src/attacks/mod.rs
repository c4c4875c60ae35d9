//! Attacks on the scheme, driven only by [`AdversaryKnowledge`].
//!
//! All of them start from the same observation: every registered user can
//! compute `hx = e ⊕ h(RPW || ID)` from their own card, and `hx` is the same
//! for everyone. With `hx` in hand, `B1 ⊕ hx` reveals `T`, `h(T)` opens `C1`,
//! and `C1` contains both an identity masked only by `hx ⊕ h(T)` and a
//! verifier `V = h(T || L ⊕ h(r || PW))` that can be tested offline.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::primitives::{decode_id, sym_decrypt, Block, HashAlgorithm, Timestamp, BLOCK_LEN};
use crate::scheme::{derive, LoginMessage, SmartCard};
use crate::simnet::{AdversaryKnowledge, LoginInput, Simulator, TamperPolicy, User};

#[derive(Debug, thiserror::Error)]
pub enum AttackError {
    #[error("adversary has no registered credentials and card of its own")]
    MissingOwnCredentials,
    #[error("master digest has not been derived")]
    MissingMasterDigest,
    #[error("B1 ⊕ h(x) is not a timestamp (wrong digest or altered message)")]
    TimestampDecode,
    #[error("dictionary line {line}: {reason}")]
    Dictionary { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Candidate passwords in file order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dictionary {
    entries: Vec<String>,
}

impl Dictionary {
    pub fn new(entries: Vec<String>) -> Result<Self, AttackError> {
        if entries.is_empty() {
            return Err(AttackError::Dictionary {
                line: 0,
                reason: "dictionary is empty".into(),
            });
        }
        let mut seen = HashSet::with_capacity(entries.len());
        for (i, e) in entries.iter().enumerate() {
            let reason = if e.is_empty() {
                "blank entry"
            } else if e.contains('\n') {
                "entry contains a line feed"
            } else if !seen.insert(e.as_str()) {
                "duplicate entry"
            } else {
                continue;
            };
            return Err(AttackError::Dictionary {
                line: i + 1,
                reason: reason.into(),
            });
        }
        Ok(Dictionary { entries })
    }

    /// One password per LF-terminated line. A missing final LF is tolerated.
    pub fn parse(text: &str) -> Result<Self, AttackError> {
        if text.is_empty() {
            return Self::new(Vec::new());
        }
        let body = text.strip_suffix('\n').unwrap_or(text);
        Self::new(body.split('\n').map(str::to_owned).collect())
    }

    pub fn load(path: &Path) -> Result<Self, AttackError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(e);
            out.push('\n');
        }
        out
    }

    pub fn entries(&self) -> &[String] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// 1-based position of `pw`.
    pub fn position(&self, pw: &str) -> Option<usize> {
        self.entries.iter().position(|e| e == pw).map(|i| i + 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttackKind {
    PwGuess,
    Deanonymize,
    WrongInput,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttackVerdict {
    pub kind: AttackKind,
    pub success: bool,
    pub recovered: Option<String>,
    /// Candidates tested (password guessing) or messages processed.
    pub work: u64,
    /// Session ids in the channel trace this verdict is based on.
    pub transcript: Vec<u64>,
    /// Dictionary entries that satisfy the verifier, from a full scan.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verifier_hits: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl AttackVerdict {
    fn new(kind: AttackKind, success: bool, recovered: Option<String>, work: u64) -> Self {
        debug_assert!(!success || recovered.is_some());
        AttackVerdict {
            kind,
            success,
            recovered,
            work,
            transcript: Vec::new(),
            verifier_hits: None,
            detail: None,
        }
    }

    pub fn with_transcript(mut self, sessions: Vec<u64>) -> Self {
        self.transcript = sessions;
        self
    }
}

/// `hx = e_E ⊕ h(h(r_E || PW_E) || ID_E)` from the adversary's own card.
pub fn extract_master_digest(know: &mut AdversaryKnowledge) -> Result<Block, AttackError> {
    let (creds, card) = match (&know.own_creds, &know.own_card) {
        (Some(c), Some(k)) => (c, k),
        _ => return Err(AttackError::MissingOwnCredentials),
    };
    let rpw = derive::rpw(card.hash, &card.r, &creds.pw);
    let hx = card.e ^ derive::id_mask(card.hash, &rpw, &creds.id);
    know.derived_hx = Some(hx);
    Ok(hx)
}

/// A login message opened with `hx`: `T` from `B1`, then `C1` under `h(T)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OpenedLogin {
    pub t: Timestamp,
    pub h_t: Block,
    pub aid: Block,
    pub t_inner: Block,
    pub v: Block,
}

pub fn open_login(alg: HashAlgorithm, hx: &Block, msg: &LoginMessage) -> Result<OpenedLogin, AttackError> {
    let t = Timestamp::decode(&(msg.b1 ^ *hx)).map_err(|_| AttackError::TimestampDecode)?;
    let h_t = derive::timestamp_key(alg, t);
    let plain = sym_decrypt(alg, &h_t, msg.c1());
    let block = |i: usize| Block::from_slice(&plain[i * BLOCK_LEN..(i + 1) * BLOCK_LEN]).expect("block slice");
    Ok(OpenedLogin {
        t,
        h_t,
        aid: block(0),
        t_inner: block(1),
        v: block(2),
    })
}

/// The offline test `V == h(T || L ⊕ h(r || PW*))`, with `T` and `V`
/// recovered once up front since neither depends on the guess.
#[derive(Debug, Clone)]
pub struct PasswordVerifier {
    alg: HashAlgorithm,
    r: Block,
    l: Block,
    t: Timestamp,
    v: Block,
}

impl PasswordVerifier {
    pub fn prepare(know: &AdversaryKnowledge, victim: &SmartCard, msg: &LoginMessage) -> Result<Self, AttackError> {
        let hx = know.derived_hx.ok_or(AttackError::MissingMasterDigest)?;
        let opened = open_login(victim.hash, &hx, msg)?;
        Ok(PasswordVerifier {
            alg: victim.hash,
            r: victim.r,
            l: victim.l,
            t: opened.t,
            v: opened.v,
        })
    }

    pub fn check(&self, candidate: &str) -> bool {
        let j = self.l ^ derive::rpw(self.alg, &self.r, candidate);
        derive::verifier(self.alg, self.t, &j) == self.v
    }

    /// 0-based index of the first matching entry. Scans in parallel; the
    /// result is still the lowest index.
    pub fn first_hit(&self, dict: &Dictionary) -> Option<usize> {
        dict.entries.par_iter().position_first(|pw| self.check(pw))
    }

    /// 0-based indices of every matching entry.
    pub fn hits(&self, dict: &Dictionary) -> Vec<usize> {
        let mut hits: Vec<usize> = dict
            .entries
            .par_iter()
            .enumerate()
            .filter(|(_, pw)| self.check(pw))
            .map(|(i, _)| i)
            .collect();
        hits.sort_unstable();
        hits
    }
}

/// Offline dictionary attack. `work` is the 1-based position of the hit, or
/// the dictionary size when nothing matches.
pub fn guess_password(
    know: &AdversaryKnowledge,
    victim: &SmartCard,
    msg: &LoginMessage,
    dict: &Dictionary,
) -> Result<AttackVerdict, AttackError> {
    let verifier = PasswordVerifier::prepare(know, victim, msg)?;
    Ok(match verifier.first_hit(dict) {
        Some(i) => AttackVerdict::new(AttackKind::PwGuess, true, Some(dict.entries[i].clone()), i as u64 + 1),
        None => AttackVerdict::new(AttackKind::PwGuess, false, None, dict.len() as u64),
    })
}

/// Recovers `ID = AID ⊕ hx ⊕ h(T)` from an intercepted login.
pub fn deanonymize(know: &AdversaryKnowledge, msg: &LoginMessage) -> Result<AttackVerdict, AttackError> {
    let hx = know.derived_hx.ok_or(AttackError::MissingMasterDigest)?;
    let alg = know.own_card.map(|c| c.hash).unwrap_or_default();
    let failed = |detail: &str| {
        let mut v = AttackVerdict::new(AttackKind::Deanonymize, false, None, 1);
        v.detail = Some(detail.to_owned());
        v
    };
    let opened = match open_login(alg, &hx, msg) {
        Ok(o) => o,
        Err(_) => return Ok(failed("timestamp decode failed")),
    };
    Ok(match decode_id(&(opened.aid ^ hx ^ opened.h_t)) {
        Ok(id) => AttackVerdict::new(AttackKind::Deanonymize, true, Some(id), 1),
        Err(_) => failed("identity decode failed"),
    })
}

/// Sessions grouped by de-anonymized identity.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Linkability {
    pub groups: BTreeMap<String, Vec<u64>>,
    pub unlinked: Vec<u64>,
}

pub fn linkability_groups<'a, I>(know: &AdversaryKnowledge, logins: I) -> Result<Linkability, AttackError>
where
    I: IntoIterator<Item = (u64, &'a LoginMessage)>,
{
    let mut out = Linkability::default();
    for (session, msg) in logins {
        let verdict = deanonymize(know, msg)?;
        match verdict.recovered {
            Some(id) => out.groups.entry(id).or_default().push(session),
            None => out.unlinked.push(session),
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InputMode {
    WrongPassword,
    WrongIdentity,
    Control,
}

impl fmt::Display for InputMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InputMode::WrongPassword => "wrong-password",
            InputMode::WrongIdentity => "wrong-identity",
            InputMode::Control => "control",
        })
    }
}

impl FromStr for InputMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "wrong-password" => Ok(InputMode::WrongPassword),
            "wrong-identity" => Ok(InputMode::WrongIdentity),
            "control" => Ok(InputMode::Control),
            _ => Err(format!("unknown mode `{s}` (wrong-password, wrong-identity, control)")),
        }
    }
}

/// The typo a user makes in `mode`. Always differs from the real input and
/// always fits in a block.
pub fn mistyped_input(user: &User, mode: InputMode) -> LoginInput {
    let mut input = user.honest_input();
    match mode {
        InputMode::Control => {}
        InputMode::WrongPassword => input.pw.push('#'),
        InputMode::WrongIdentity => {
            if input.id.len() < BLOCK_LEN {
                input.id.push('#');
            } else {
                let last = input.id.pop().expect("non-empty id");
                input.id.push(if last == '#' { '$' } else { '#' });
            }
        }
    }
    input
}

/// Feeds a mistyped (or, for `Control`, correct) input to the card and
/// checks that the card still sends `<B1, C1>` and that the server's
/// verdict is the one the mode predicts.
pub fn wrong_input_scenario(sim: &mut Simulator, user: &User, mode: InputMode) -> AttackVerdict {
    let input = mistyped_input(user, mode);
    let out = sim
        .run_session_with_input(user, &input, &TamperPolicy::none())
        .expect("mistyped identity still fits a block");
    let emitted = sim
        .trace()
        .session_events(out.session_id)
        .any(|e| e.payload.as_login().is_some());
    let (server_ok, server_label) = match &out.server {
        Some(Ok(_)) => (true, "accepted".to_owned()),
        Some(Err(r)) => (false, r.to_string()),
        None => (false, "no-delivery".to_owned()),
    };
    let expected_accept = mode == InputMode::Control;
    let success = emitted && out.server.is_some() && server_ok == expected_accept;
    let mut verdict = AttackVerdict::new(AttackKind::WrongInput, success, Some(server_label), 1)
        .with_transcript(vec![out.session_id]);
    verdict.detail = Some(format!("mode={mode} card-emitted={emitted}"));
    verdict
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FloodReport {
    pub messages_sent: u64,
    pub server_rejections: u64,
    pub server_work_units: u64,
}

/// Runs `n` sessions with `mode`'s input and tallies what the server spent.
pub fn flood_cost_report(sim: &mut Simulator, user: &User, n: u64, mode: InputMode) -> FloodReport {
    let input = mistyped_input(user, mode);
    let mut report = FloodReport::default();
    for _ in 0..n {
        let out = sim
            .run_session_with_input(user, &input, &TamperPolicy::none())
            .expect("mistyped identity still fits a block");
        report.messages_sent += 1;
        if out.server_rejection().is_some() {
            report.server_rejections += 1;
        }
        report.server_work_units += out.server_work.units();
    }
    report
}
