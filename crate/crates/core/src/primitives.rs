//! Hash, field concatenation, XOR blocks, fixed-width encodings and the
//! hash-counter keystream cipher.
//!
//! Everything in this module is a pure function over immutable values. The
//! byte layout is fixed so that an independent implementation in another
//! language reproduces every output exactly:
//!
//! * `concat_fields` writes each field as a 4-byte big-endian length followed
//!   by the field bytes.
//! * Identities are UTF-8, at most [`BLOCK_LEN`] bytes, right-padded with zero
//!   bytes.
//! * Timestamps are `u64` ticks, big-endian, in the last eight bytes of a
//!   block whose leading bytes are zero.
//! * Keystream block `j` is `hash(concat_fields([key, j as u32 BE]))`.

use std::fmt;
use std::ops::{BitXor, BitXorAssign};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};
use sha3::Sha3_256;

/// Width in bytes of every block (the hash output width).
pub const BLOCK_LEN: usize = 32;

const TIMESTAMP_OFFSET: usize = BLOCK_LEN - 8;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PrimitiveError {
    #[error("field list is empty")]
    EmptyFieldList,
    #[error("field encoding truncated at byte {0}")]
    TruncatedFields(usize),
    #[error("identity is empty")]
    EmptyIdentity,
    #[error("identity is {0} bytes, limit is {BLOCK_LEN}")]
    IdentityTooLong(usize),
    #[error("identity contains a NUL byte")]
    IdentityContainsNul,
    #[error("block does not encode an identity")]
    InvalidIdentityBlock,
    #[error("block does not encode a timestamp")]
    InvalidTimestampBlock,
    #[error("length {0} is not a multiple of {BLOCK_LEN}")]
    UnalignedLength(usize),
    #[error("expected {expected} bytes, got {actual}")]
    BadLength { expected: usize, actual: usize },
    #[error("invalid hex: {0}")]
    Hex(#[from] hex::FromHexError),
    #[error("unknown hash algorithm `{0}`")]
    UnknownHashAlgorithm(String),
}

/// A fixed-width byte string; the operand of all XOR algebra in the scheme.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Block([u8; BLOCK_LEN]);

impl Block {
    pub const ZERO: Block = Block([0; BLOCK_LEN]);

    pub const fn new(bytes: [u8; BLOCK_LEN]) -> Self {
        Block(bytes)
    }

    pub fn from_slice(bytes: &[u8]) -> Result<Self, PrimitiveError> {
        let arr: [u8; BLOCK_LEN] = bytes.try_into().map_err(|_| PrimitiveError::BadLength {
            expected: BLOCK_LEN,
            actual: bytes.len(),
        })?;
        Ok(Block(arr))
    }

    pub fn from_hex(s: &str) -> Result<Self, PrimitiveError> {
        Block::from_slice(&hex::decode(s)?)
    }

    /// Draws a uniformly random block.
    pub fn random<R: rand::RngCore + ?Sized>(rng: &mut R) -> Self {
        let mut bytes = [0u8; BLOCK_LEN];
        rng.fill_bytes(&mut bytes);
        Block(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; BLOCK_LEN] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn xor(&self, other: &Block) -> Block {
        let mut out = self.0;
        for (o, b) in out.iter_mut().zip(other.0.iter()) {
            *o ^= b;
        }
        Block(out)
    }

    /// Flips one bit, counting from the most significant bit of byte 0.
    pub fn flip_bit(&mut self, bit: usize) {
        self.0[bit / 8] ^= 0x80 >> (bit % 8);
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&b| b == 0)
    }
}

impl AsRef<[u8]> for Block {
    fn as_ref(&self) -> &[u8] {
        &self.0
    }
}

impl BitXor for Block {
    type Output = Block;

    fn bitxor(self, rhs: Block) -> Block {
        self.xor(&rhs)
    }
}

impl BitXor<&Block> for &Block {
    type Output = Block;

    fn bitxor(self, rhs: &Block) -> Block {
        self.xor(rhs)
    }
}

impl BitXorAssign for Block {
    fn bitxor_assign(&mut self, rhs: Block) {
        *self = self.xor(&rhs);
    }
}

impl fmt::Debug for Block {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Block({})", self.to_hex())
    }
}

impl fmt::Display for Block {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl Serialize for Block {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Block {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Block::from_hex(&s).map_err(serde::de::Error::custom)
    }
}

/// The one-way hash `h(·)`. Both supported algorithms produce [`BLOCK_LEN`]
/// bytes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum HashAlgorithm {
    #[default]
    #[serde(rename = "sha256")]
    Sha256,
    #[serde(rename = "sha3-256")]
    Sha3_256,
}

impl HashAlgorithm {
    pub fn name(&self) -> &'static str {
        match self {
            HashAlgorithm::Sha256 => "sha256",
            HashAlgorithm::Sha3_256 => "sha3-256",
        }
    }

    pub fn hash(&self, data: &[u8]) -> Block {
        let mut out = [0u8; BLOCK_LEN];
        match self {
            HashAlgorithm::Sha256 => out.copy_from_slice(&Sha256::digest(data)),
            HashAlgorithm::Sha3_256 => out.copy_from_slice(&Sha3_256::digest(data)),
        }
        Block(out)
    }

    /// `hash(concat_fields(fields))` without allocating an intermediate
    /// buffer. `fields` must be non-empty.
    pub fn hash_fields(&self, fields: &[&[u8]]) -> Block {
        debug_assert!(!fields.is_empty());
        fn feed<D: Digest>(mut d: D, fields: &[&[u8]]) -> D {
            for field in fields {
                d.update((field.len() as u32).to_be_bytes());
                d.update(field);
            }
            d
        }
        let mut out = [0u8; BLOCK_LEN];
        match self {
            HashAlgorithm::Sha256 => out.copy_from_slice(&feed(Sha256::new(), fields).finalize()),
            HashAlgorithm::Sha3_256 => out.copy_from_slice(&feed(Sha3_256::new(), fields).finalize()),
        }
        Block(out)
    }
}

impl fmt::Display for HashAlgorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for HashAlgorithm {
    type Err = PrimitiveError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "sha256" | "sha-256" => Ok(HashAlgorithm::Sha256),
            "sha3-256" | "sha3_256" => Ok(HashAlgorithm::Sha3_256),
            _ => Err(PrimitiveError::UnknownHashAlgorithm(s.to_owned())),
        }
    }
}

/// Injective `||`: each field is prefixed with its 4-byte big-endian length.
pub fn concat_fields<F: AsRef<[u8]>>(fields: &[F]) -> Result<Vec<u8>, PrimitiveError> {
    if fields.is_empty() {
        return Err(PrimitiveError::EmptyFieldList);
    }
    let total = fields.iter().map(|f| 4 + f.as_ref().len()).sum();
    let mut out = Vec::with_capacity(total);
    for field in fields {
        let field = field.as_ref();
        out.extend_from_slice(&(field.len() as u32).to_be_bytes());
        out.extend_from_slice(field);
    }
    Ok(out)
}

/// Inverse of [`concat_fields`].
pub fn split_fields(encoded: &[u8]) -> Result<Vec<Vec<u8>>, PrimitiveError> {
    let mut fields = Vec::new();
    let mut pos = 0;
    while pos < encoded.len() {
        let header = encoded.get(pos..pos + 4).ok_or(PrimitiveError::TruncatedFields(pos))?;
        let len = u32::from_be_bytes(header.try_into().expect("4-byte slice")) as usize;
        pos += 4;
        let field = encoded
            .get(pos..pos + len)
            .ok_or(PrimitiveError::TruncatedFields(pos))?;
        fields.push(field.to_vec());
        pos += len;
    }
    if fields.is_empty() {
        return Err(PrimitiveError::EmptyFieldList);
    }
    Ok(fields)
}

fn validate_id(id: &str) -> Result<(), PrimitiveError> {
    if id.is_empty() {
        return Err(PrimitiveError::EmptyIdentity);
    }
    if id.len() > BLOCK_LEN {
        return Err(PrimitiveError::IdentityTooLong(id.len()));
    }
    // Zero padding is stripped on decode, so NUL would break injectivity.
    if id.as_bytes().contains(&0) {
        return Err(PrimitiveError::IdentityContainsNul);
    }
    Ok(())
}

pub fn encode_id(id: &str) -> Result<Block, PrimitiveError> {
    validate_id(id)?;
    let mut bytes = [0u8; BLOCK_LEN];
    bytes[..id.len()].copy_from_slice(id.as_bytes());
    Ok(Block(bytes))
}

pub fn decode_id(block: &Block) -> Result<String, PrimitiveError> {
    let end = block.0.iter().rposition(|&b| b != 0).map_or(0, |i| i + 1);
    let raw = &block.0[..end];
    if raw.is_empty() || raw.contains(&0) {
        return Err(PrimitiveError::InvalidIdentityBlock);
    }
    std::str::from_utf8(raw)
        .map(str::to_owned)
        .map_err(|_| PrimitiveError::InvalidIdentityBlock)
}

/// Logical time from the simulated clock.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Timestamp(pub u64);

impl Timestamp {
    pub fn ticks(&self) -> u64 {
        self.0
    }

    pub fn encode(&self) -> Block {
        let mut bytes = [0u8; BLOCK_LEN];
        bytes[TIMESTAMP_OFFSET..].copy_from_slice(&self.0.to_be_bytes());
        Block(bytes)
    }

    /// Fails when any byte outside the trailing 8-byte field is nonzero,
    /// which is what a garbled XOR recovery almost always produces.
    pub fn decode(block: &Block) -> Result<Self, PrimitiveError> {
        if block.0[..TIMESTAMP_OFFSET].iter().any(|&b| b != 0) {
            return Err(PrimitiveError::InvalidTimestampBlock);
        }
        let tail: [u8; 8] = block.0[TIMESTAMP_OFFSET..].try_into().expect("8-byte tail");
        Ok(Timestamp(u64::from_be_bytes(tail)))
    }

    pub fn abs_diff(&self, other: Timestamp) -> u64 {
        self.0.abs_diff(other.0)
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Output of [`sym_encrypt`]; always a whole number of blocks.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Ciphertext(Vec<u8>);

impl Ciphertext {
    pub fn from_bytes(bytes: Vec<u8>) -> Result<Self, PrimitiveError> {
        if !bytes.len().is_multiple_of(BLOCK_LEN) {
            return Err(PrimitiveError::UnalignedLength(bytes.len()));
        }
        Ok(Ciphertext(bytes))
    }

    pub fn from_hex(s: &str) -> Result<Self, PrimitiveError> {
        Ciphertext::from_bytes(hex::decode(s)?)
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn to_hex(&self) -> String {
        hex::encode(&self.0)
    }

    pub fn flip_bit(&mut self, bit: usize) {
        self.0[bit / 8] ^= 0x80 >> (bit % 8);
    }

    /// Splits into consecutive blocks.
    pub fn blocks(&self) -> impl Iterator<Item = Block> + '_ {
        self.0
            .chunks_exact(BLOCK_LEN)
            .map(|c| Block::from_slice(c).expect("aligned chunk"))
    }
}

impl fmt::Debug for Ciphertext {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Ciphertext({})", self.to_hex())
    }
}

fn apply_keystream(alg: HashAlgorithm, key: &Block, data: &mut [u8]) {
    for (j, chunk) in data.chunks_mut(BLOCK_LEN).enumerate() {
        let counter = (j as u32).to_be_bytes();
        let ks = alg.hash_fields(&[key.as_bytes(), &counter]);
        for (d, k) in chunk.iter_mut().zip(ks.0.iter()) {
            *d ^= k;
        }
    }
}

/// Counter-mode keystream encryption. Unauthenticated: decrypting under the
/// wrong key silently yields garbage.
pub fn sym_encrypt(alg: HashAlgorithm, key: &Block, plaintext: &[u8]) -> Result<Ciphertext, PrimitiveError> {
    if !plaintext.len().is_multiple_of(BLOCK_LEN) {
        return Err(PrimitiveError::UnalignedLength(plaintext.len()));
    }
    let mut data = plaintext.to_vec();
    apply_keystream(alg, key, &mut data);
    Ok(Ciphertext(data))
}

pub fn sym_decrypt(alg: HashAlgorithm, key: &Block, ct: &Ciphertext) -> Vec<u8> {
    let mut data = ct.0.clone();
    apply_keystream(alg, key, &mut data);
    data
}
