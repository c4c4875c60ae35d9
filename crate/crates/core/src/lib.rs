//! Executable model of a password + smart-card remote authentication scheme
//! for telecare medical servers, with a deterministic adversarial channel
//! and working attacks against it.
//!
//! * [`primitives`]: hash, `||` encoding, XOR blocks, keystream cipher.
//! * [`scheme`]: registration, login and mutual authentication.
//! * [`simnet`]: simulated public channel, tampering and adversary knowledge.
//! * [`attacks`]: offline password guessing, de-anonymization and the
//!   wrong-input login scenarios.

pub mod attacks;
pub mod primitives;
pub mod scheme;
pub mod simnet;

pub use primitives::{Block, Ciphertext, HashAlgorithm, Timestamp, BLOCK_LEN};
pub use scheme::{LoginMessage, ServerResponse, ServerState, SessionRecord, SmartCard};
