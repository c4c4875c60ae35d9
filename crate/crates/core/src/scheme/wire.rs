use serde::{Deserialize, Serialize};

use crate::primitives::{Block, Ciphertext, PrimitiveError, Timestamp, BLOCK_LEN};

/// `<B1, C1>`
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "LoginWire", into = "LoginWire")]
pub struct LoginMessage {
    pub b1: Block,
    c1: Ciphertext,
}

impl LoginMessage {
    pub const C1_LEN: usize = 3 * BLOCK_LEN;

    pub fn new(b1: Block, c1: Ciphertext) -> Result<Self, PrimitiveError> {
        if c1.len() != Self::C1_LEN {
            return Err(PrimitiveError::BadLength {
                expected: Self::C1_LEN,
                actual: c1.len(),
            });
        }
        Ok(LoginMessage { b1, c1 })
    }

    pub fn c1(&self) -> &Ciphertext {
        &self.c1
    }

    pub fn c1_mut(&mut self) -> &mut Ciphertext {
        &mut self.c1
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LoginWire {
    b1_hex: String,
    c1_hex: String,
}

impl TryFrom<LoginWire> for LoginMessage {
    type Error = PrimitiveError;

    fn try_from(w: LoginWire) -> Result<Self, Self::Error> {
        LoginMessage::new(Block::from_hex(&w.b1_hex)?, Ciphertext::from_hex(&w.c1_hex)?)
    }
}

impl From<LoginMessage> for LoginWire {
    fn from(m: LoginMessage) -> Self {
        LoginWire {
            b1_hex: m.b1.to_hex(),
            c1_hex: m.c1.to_hex(),
        }
    }
}

/// `<B2, C2>`
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "ResponseWire", into = "ResponseWire")]
pub struct ServerResponse {
    pub b2: Block,
    c2: Ciphertext,
}

impl ServerResponse {
    pub const C2_LEN: usize = 2 * BLOCK_LEN;

    pub fn new(b2: Block, c2: Ciphertext) -> Result<Self, PrimitiveError> {
        if c2.len() != Self::C2_LEN {
            return Err(PrimitiveError::BadLength {
                expected: Self::C2_LEN,
                actual: c2.len(),
            });
        }
        Ok(ServerResponse { b2, c2 })
    }

    pub fn c2(&self) -> &Ciphertext {
        &self.c2
    }

    pub fn c2_mut(&mut self) -> &mut Ciphertext {
        &mut self.c2
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ResponseWire {
    b2_hex: String,
    c2_hex: String,
}

impl TryFrom<ResponseWire> for ServerResponse {
    type Error = PrimitiveError;

    fn try_from(w: ResponseWire) -> Result<Self, Self::Error> {
        ServerResponse::new(Block::from_hex(&w.b2_hex)?, Ciphertext::from_hex(&w.c2_hex)?)
    }
}

impl From<ServerResponse> for ResponseWire {
    fn from(m: ServerResponse) -> Self {
        ResponseWire {
            b2_hex: m.b2.to_hex(),
            c2_hex: m.c2.to_hex(),
        }
    }
}

/// An established session as seen by one side.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub sk: Block,
    pub user_id: String,
    pub t_user: Timestamp,
    pub t_server: Timestamp,
}
