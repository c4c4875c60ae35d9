use std::fmt;

use serde::{Deserialize, Serialize};

use super::{derive, LoginMessage, SchemeError, ServerResponse, SessionRecord};
use crate::primitives::{encode_id, sym_decrypt, sym_encrypt, Block, HashAlgorithm, Timestamp, BLOCK_LEN};

/// What the user knows and keeps: `ID`, `PW` and the random `r`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Credentials {
    pub id: String,
    pub pw: String,
    pub r: Block,
}

/// `<ID, RPW>`; never carries `PW` or `r`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegistrationRequest {
    pub id: String,
    pub rpw: Block,
}

/// What the server embeds in the card before `r` is added.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CardContents {
    pub l: Block,
    pub e: Block,
    pub hash: HashAlgorithm,
}

/// Card memory: `L = J ⊕ RPW`, `e = hx ⊕ h(RPW || ID)`, `r`, plus the hash
/// selection standing in for the embedded `h(·)`, `E`, `D`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SmartCard {
    #[serde(rename = "l_hex")]
    pub l: Block,
    #[serde(rename = "e_hex")]
    pub e: Block,
    #[serde(rename = "r_hex")]
    pub r: Block,
    #[serde(rename = "hash_algorithm", default)]
    pub hash: HashAlgorithm,
}

/// Values the card holds between sending `<B1, C1>` and checking `<B2, C2>`.
/// Consumed by [`SmartCard::verify_server`].
#[derive(Clone, PartialEq, Eq)]
pub struct PendingLogin {
    id: String,
    t_user: Timestamp,
    j: Block,
    v: Block,
    /// `e ⊕ h(RPW || ID)`: the card's view of `hx`.
    mask: Block,
}

impl PendingLogin {
    pub fn t_user(&self) -> Timestamp {
        self.t_user
    }

    pub fn verifier(&self) -> Block {
        self.v
    }
}

impl fmt::Debug for PendingLogin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PendingLogin")
            .field("id", &self.id)
            .field("t_user", &self.t_user)
            .finish_non_exhaustive()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CardRejection {
    StaleServerTimestamp,
    VerifierMismatch,
    TimestampMismatch,
}

impl CardRejection {
    pub fn code(&self) -> &'static str {
        match self {
            CardRejection::StaleServerTimestamp => "stale-server-timestamp",
            CardRejection::VerifierMismatch => "verifier-mismatch",
            CardRejection::TimestampMismatch => "timestamp-mismatch",
        }
    }
}

impl fmt::Display for CardRejection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl SmartCard {
    /// Builds `<B1, C1>` from whatever identity and password were typed in.
    ///
    /// The card has no way to check `ID` or `PW` and does not try: a typo
    /// still produces a message that only the server will reject. The only
    /// error is an identity that cannot be encoded into a block.
    pub fn login(&self, id: &str, pw: &str, now: Timestamp) -> Result<(LoginMessage, PendingLogin), SchemeError> {
        let alg = self.hash;
        let id_block = encode_id(id).map_err(SchemeError::InvalidIdentity)?;
        let rpw = derive::rpw(alg, &self.r, pw);
        let j = self.l ^ rpw;
        let mask = self.e ^ derive::id_mask(alg, &rpw, id);
        let h_t = derive::timestamp_key(alg, now);
        let t_block = now.encode();

        let aid = mask ^ h_t ^ id_block;
        let b1 = mask ^ t_block;
        let v = derive::verifier(alg, now, &j);

        let mut plain = Vec::with_capacity(3 * BLOCK_LEN);
        plain.extend_from_slice(aid.as_bytes());
        plain.extend_from_slice(t_block.as_bytes());
        plain.extend_from_slice(v.as_bytes());
        let c1 = sym_encrypt(alg, &h_t, &plain).expect("aligned plaintext");

        let msg = LoginMessage::new(b1, c1).expect("three-block ciphertext");
        let pending = PendingLogin {
            id: id.to_owned(),
            t_user: now,
            j,
            v,
            mask,
        };
        Ok((msg, pending))
    }

    /// Checks `<B2, C2>` against a pending login and derives the session key.
    pub fn verify_server(
        &self,
        pending: PendingLogin,
        resp: &ServerResponse,
        now: Timestamp,
        freshness_window: u64,
    ) -> Result<SessionRecord, CardRejection> {
        let alg = self.hash;
        let t_server = Timestamp::decode(&(resp.b2 ^ pending.mask)).map_err(|_| CardRejection::StaleServerTimestamp)?;
        if now.abs_diff(t_server) > freshness_window {
            return Err(CardRejection::StaleServerTimestamp);
        }
        let plain = sym_decrypt(alg, &derive::timestamp_key(alg, t_server), resp.c2());
        let (v, t_inner) = plain.split_at(BLOCK_LEN);
        if v != pending.v.as_bytes() {
            return Err(CardRejection::VerifierMismatch);
        }
        if t_inner != t_server.encode().as_bytes() {
            return Err(CardRejection::TimestampMismatch);
        }
        Ok(SessionRecord {
            sk: derive::session_key(alg, &pending.j, pending.t_user, t_server, &pending.id),
            user_id: pending.id,
            t_user: pending.t_user,
            t_server,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("card serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }
}
