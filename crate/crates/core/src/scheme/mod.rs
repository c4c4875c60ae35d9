//! Registration, login and authentication phases of the smart-card scheme.
//!
//! Notation used in the docs below: `h` is the configured hash, `x` the
//! server master key, `hx = h(x)`, `RPW = h(r || PW)`, `J = h(x || ID || N)`.
//! Identities enter hash inputs as raw UTF-8 bytes and XOR expressions as
//! zero-padded blocks.

mod card;
mod server;
mod wire;

pub use card::{CardContents, CardRejection, Credentials, PendingLogin, RegistrationRequest, SmartCard};
pub use server::{RegistryEntry, ServerDocument, ServerRejection, ServerState, WorkMeter};
pub use wire::{LoginMessage, ServerResponse, SessionRecord};

use rand::RngCore;

use crate::primitives::{encode_id, Block, HashAlgorithm, PrimitiveError, Timestamp};

/// Default freshness window, in ticks.
pub const DEFAULT_FRESHNESS_WINDOW: u64 = 60;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SchemeError {
    #[error("invalid identity: {0}")]
    InvalidIdentity(PrimitiveError),
    #[error("password is empty")]
    EmptyPassword,
    #[error("identity `{0}` is already registered")]
    AlreadyRegistered(String),
    #[error("invalid server document: {0}")]
    Document(String),
}

/// The hash derivations shared by the card, the server and the adversary.
pub mod derive {
    use super::*;

    /// `RPW = h(r || PW)`
    pub fn rpw(alg: HashAlgorithm, r: &Block, pw: &str) -> Block {
        alg.hash_fields(&[r.as_bytes(), pw.as_bytes()])
    }

    /// `h(RPW || ID)`, the mask separating `e` from `hx`.
    pub fn id_mask(alg: HashAlgorithm, rpw: &Block, id: &str) -> Block {
        alg.hash_fields(&[rpw.as_bytes(), id.as_bytes()])
    }

    /// `J = h(x || ID || N)` with `N` as 8 bytes big-endian.
    pub fn j(alg: HashAlgorithm, master_key: &[u8], id: &str, n: u64) -> Block {
        alg.hash_fields(&[master_key, id.as_bytes(), &n.to_be_bytes()])
    }

    /// `V = h(T || J)`
    pub fn verifier(alg: HashAlgorithm, t: Timestamp, j: &Block) -> Block {
        alg.hash_fields(&[t.encode().as_bytes(), j.as_bytes()])
    }

    /// `h(T)`: the plain digest of the encoded timestamp. Used both as the
    /// cipher key and as a mask inside `AID`.
    pub fn timestamp_key(alg: HashAlgorithm, t: Timestamp) -> Block {
        alg.hash(t.encode().as_bytes())
    }

    /// `sk = h(J || T_i || T_s || ID)`
    pub fn session_key(alg: HashAlgorithm, j: &Block, t_user: Timestamp, t_server: Timestamp, id: &str) -> Block {
        alg.hash_fields(&[
            j.as_bytes(),
            t_user.encode().as_bytes(),
            t_server.encode().as_bytes(),
            id.as_bytes(),
        ])
    }
}

/// User side of registration: draws `r`, computes `RPW` and builds the
/// `<ID, RPW>` message sent over the secure channel.
pub fn register_request<R: RngCore + ?Sized>(
    alg: HashAlgorithm,
    id: &str,
    pw: &str,
    rng: &mut R,
) -> Result<(Credentials, RegistrationRequest), SchemeError> {
    encode_id(id).map_err(SchemeError::InvalidIdentity)?;
    if pw.is_empty() {
        return Err(SchemeError::EmptyPassword);
    }
    let r = Block::random(rng);
    let rpw = derive::rpw(alg, &r, pw);
    let creds = Credentials {
        id: id.to_owned(),
        pw: pw.to_owned(),
        r,
    };
    let req = RegistrationRequest { id: id.to_owned(), rpw };
    Ok((creds, req))
}

/// Stores `r` on the issued card.
pub fn finalize_card(contents: CardContents, r: Block) -> SmartCard {
    SmartCard {
        l: contents.l,
        e: contents.e,
        r,
        hash: contents.hash,
    }
}

/// Runs the full registration exchange for one user.
pub fn register_user<R: RngCore + ?Sized>(
    server: &mut ServerState,
    id: &str,
    pw: &str,
    rng: &mut R,
) -> Result<(Credentials, SmartCard), SchemeError> {
    let (creds, req) = register_request(server.hash_algorithm(), id, pw, rng)?;
    let contents = server.register(&req)?;
    let card = finalize_card(contents, creds.r);
    Ok((creds, card))
}

#[cfg(test)]
mod tests;
