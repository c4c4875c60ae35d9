use std::collections::BTreeMap;
use std::fmt;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::{derive, CardContents, LoginMessage, RegistrationRequest, SchemeError, ServerResponse, SessionRecord};
use crate::primitives::{decode_id, encode_id, sym_decrypt, sym_encrypt, Block, HashAlgorithm, Timestamp, BLOCK_LEN};

/// Why the server terminated an authentication attempt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ServerRejection {
    /// `B1 ⊕ hx` is not a timestamp, or it lies outside the freshness window.
    Stale,
    /// The timestamp inside `C1` differs from the one recovered from `B1`.
    TimestampMismatch,
    /// The recovered identity is malformed or not in the registry.
    UnknownId,
    /// `V` does not match `h(T || J)`.
    BadVerifier,
}

impl ServerRejection {
    pub fn code(&self) -> &'static str {
        match self {
            ServerRejection::Stale => "stale",
            ServerRejection::TimestampMismatch => "timestamp-mismatch",
            ServerRejection::UnknownId => "unknown-id",
            ServerRejection::BadVerifier => "bad-verifier",
        }
    }
}

impl fmt::Display for ServerRejection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

/// Counts server-side effort spent on one or more authentication attempts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkMeter {
    pub decode_attempts: u64,
    pub hashes: u64,
    pub decryptions: u64,
}

impl WorkMeter {
    pub fn units(&self) -> u64 {
        self.decode_attempts + self.hashes + self.decryptions
    }

    pub fn absorb(&mut self, other: &WorkMeter) {
        self.decode_attempts += other.decode_attempts;
        self.hashes += other.hashes;
        self.decryptions += other.decryptions;
    }
}

/// Medical server state: master key, its cached digest and the `(ID, N)`
/// registry.
#[derive(Clone, PartialEq, Eq)]
pub struct ServerState {
    master_key: Vec<u8>,
    hx: Block,
    registry: BTreeMap<String, u64>,
    freshness_window: u64,
    hash: HashAlgorithm,
}

impl fmt::Debug for ServerState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ServerState")
            .field("registry", &self.registry)
            .field("freshness_window", &self.freshness_window)
            .field("hash", &self.hash)
            .finish_non_exhaustive()
    }
}

impl ServerState {
    pub fn new(master_key: Vec<u8>, freshness_window: u64, hash: HashAlgorithm) -> Self {
        let hx = hash.hash(&master_key);
        ServerState {
            master_key,
            hx,
            registry: BTreeMap::new(),
            freshness_window,
            hash,
        }
    }

    /// Fresh server with a random 32-byte master key.
    pub fn generate<R: RngCore + ?Sized>(rng: &mut R, freshness_window: u64, hash: HashAlgorithm) -> Self {
        let mut key = vec![0u8; BLOCK_LEN];
        rng.fill_bytes(&mut key);
        Self::new(key, freshness_window, hash)
    }

    pub fn hash_algorithm(&self) -> HashAlgorithm {
        self.hash
    }

    pub fn freshness_window(&self) -> u64 {
        self.freshness_window
    }

    pub fn set_freshness_window(&mut self, window: u64) {
        self.freshness_window = window;
    }

    /// `h(x)`. Exposed for test oracles; the protocol never sends it.
    pub fn master_digest(&self) -> Block {
        self.hx
    }

    pub fn master_key(&self) -> &[u8] {
        &self.master_key
    }

    pub fn registration_count(&self, id: &str) -> Option<u64> {
        self.registry.get(id).copied()
    }

    pub fn registry(&self) -> &BTreeMap<String, u64> {
        &self.registry
    }

    /// Issues card contents `{L, e}` for `<ID, RPW>`. A repeat registration
    /// bumps `N`, which changes `J` and makes earlier cards for the same
    /// identity fail verification.
    pub fn register(&mut self, req: &RegistrationRequest) -> Result<CardContents, SchemeError> {
        encode_id(&req.id).map_err(SchemeError::InvalidIdentity)?;
        let n = match self.registry.get(&req.id) {
            None => 0,
            Some(n) => n + 1,
        };
        let j = derive::j(self.hash, &self.master_key, &req.id, n);
        let l = j ^ req.rpw;
        let e = self.hx ^ derive::id_mask(self.hash, &req.rpw, &req.id);
        self.registry.insert(req.id.clone(), n);
        Ok(CardContents { l, e, hash: self.hash })
    }

    pub fn authenticate(
        &self,
        msg: &LoginMessage,
        now: Timestamp,
    ) -> Result<(ServerResponse, SessionRecord), ServerRejection> {
        self.authenticate_metered(msg, now, &mut WorkMeter::default())
    }

    /// [`authenticate`](Self::authenticate), recording the work performed
    /// before acceptance or rejection.
    pub fn authenticate_metered(
        &self,
        msg: &LoginMessage,
        now: Timestamp,
        meter: &mut WorkMeter,
    ) -> Result<(ServerResponse, SessionRecord), ServerRejection> {
        let alg = self.hash;

        meter.decode_attempts += 1;
        let t_user = Timestamp::decode(&(msg.b1 ^ self.hx)).map_err(|_| ServerRejection::Stale)?;
        if now.abs_diff(t_user) > self.freshness_window {
            return Err(ServerRejection::Stale);
        }

        meter.hashes += 1;
        let h_t = derive::timestamp_key(alg, t_user);
        meter.decryptions += 1;
        let plain = sym_decrypt(alg, &h_t, msg.c1());
        let (aid, rest) = plain.split_at(BLOCK_LEN);
        let (t_inner, v) = rest.split_at(BLOCK_LEN);
        if t_inner != t_user.encode().as_bytes() {
            return Err(ServerRejection::TimestampMismatch);
        }

        let aid = Block::from_slice(aid).expect("block-sized slice");
        meter.decode_attempts += 1;
        let id = decode_id(&(aid ^ self.hx ^ h_t)).map_err(|_| ServerRejection::UnknownId)?;
        let n = *self.registry.get(&id).ok_or(ServerRejection::UnknownId)?;

        meter.hashes += 2;
        let j = derive::j(alg, &self.master_key, &id, n);
        if v != derive::verifier(alg, t_user, &j).as_bytes() {
            return Err(ServerRejection::BadVerifier);
        }

        let t_server = now;
        let b2 = self.hx ^ t_server.encode();
        let mut plain2 = Vec::with_capacity(2 * BLOCK_LEN);
        plain2.extend_from_slice(v);
        plain2.extend_from_slice(t_server.encode().as_bytes());
        let c2 = sym_encrypt(alg, &derive::timestamp_key(alg, t_server), &plain2).expect("aligned plaintext");
        let sk = derive::session_key(alg, &j, t_user, t_server, &id);

        let response = ServerResponse::new(b2, c2).expect("two-block ciphertext");
        let session = SessionRecord {
            sk,
            user_id: id,
            t_user,
            t_server,
        };
        Ok((response, session))
    }

    pub fn to_document(&self) -> ServerDocument {
        ServerDocument {
            master_key_hex: hex::encode(&self.master_key),
            registry: self
                .registry
                .iter()
                .map(|(id, &n)| RegistryEntry { id: id.clone(), n })
                .collect(),
            freshness_window: self.freshness_window,
            hash_algorithm: self.hash,
        }
    }

    pub fn from_document(doc: &ServerDocument) -> Result<Self, SchemeError> {
        let key = hex::decode(&doc.master_key_hex).map_err(|e| SchemeError::Document(e.to_string()))?;
        if key.is_empty() {
            return Err(SchemeError::Document("empty master key".into()));
        }
        let mut state = ServerState::new(key, doc.freshness_window, doc.hash_algorithm);
        for entry in &doc.registry {
            encode_id(&entry.id).map_err(SchemeError::InvalidIdentity)?;
            if state.registry.insert(entry.id.clone(), entry.n).is_some() {
                return Err(SchemeError::Document(format!("duplicate registry id `{}`", entry.id)));
            }
        }
        Ok(state)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("server document serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, SchemeError> {
        let doc: ServerDocument = serde_json::from_str(s).map_err(|e| SchemeError::Document(e.to_string()))?;
        Self::from_document(&doc)
    }
}

/// On-disk form of [`ServerState`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServerDocument {
    pub master_key_hex: String,
    pub registry: Vec<RegistryEntry>,
    pub freshness_window: u64,
    #[serde(default)]
    pub hash_algorithm: HashAlgorithm,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegistryEntry {
    pub id: String,
    #[serde(rename = "N")]
    pub n: u64,
}
