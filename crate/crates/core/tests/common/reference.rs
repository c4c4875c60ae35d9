//! Checks cardauth-core against the vectors written by `data/reference.py`.
//! Shared by the core integration tests and the acceptance suite.

use std::path::{Path, PathBuf};
use std::process::Command;

use cardauth_core::primitives::{concat_fields, encode_id, sym_encrypt, Block, HashAlgorithm, Timestamp};
use cardauth_core::scheme::derive;
use cardauth_core::SmartCard;
use serde_json::Value;

pub fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/data")
}

pub fn frozen_vectors() -> String {
    std::fs::read_to_string(data_dir().join("reference_vectors.json")).expect("frozen reference vectors")
}

/// Runs the Python reference live. `None` when no interpreter is available.
pub fn live_vectors() -> Option<String> {
    let out = Command::new("python3")
        .arg(data_dir().join("reference.py"))
        .output()
        .ok()?;
    assert!(
        out.status.success(),
        "reference.py failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    Some(String::from_utf8(out.stdout).expect("utf-8 output"))
}

fn hex_of(v: &Value, key: &str) -> Vec<u8> {
    hex::decode(v[key].as_str().unwrap_or_else(|| panic!("missing {key}"))).expect("hex")
}

fn block_of(v: &Value, key: &str) -> Block {
    Block::from_slice(&hex_of(v, key)).expect("block")
}

/// Compares every vector byte-for-byte. Returns the number checked, or a
/// description of the first mismatch.
pub fn check_vectors(json: &str) -> Result<usize, String> {
    let doc: Value = serde_json::from_str(json).map_err(|e| e.to_string())?;
    let vectors = doc["vectors"].as_array().ok_or("no vectors")?;
    for (i, v) in vectors.iter().enumerate() {
        let fail = |what: &str| Err(format!("vector {i}: {what} differs"));
        let alg: HashAlgorithm = v["alg"].as_str().unwrap().parse().map_err(|e| format!("{e}"))?;

        if alg.hash(&hex_of(v, "data_hex")).as_bytes()[..] != hex_of(v, "hash_hex")[..] {
            return fail("hash");
        }
        let fields: Vec<Vec<u8>> = v["fields_hex"]
            .as_array()
            .unwrap()
            .iter()
            .map(|f| hex::decode(f.as_str().unwrap()).unwrap())
            .collect();
        if concat_fields(&fields).unwrap() != hex_of(v, "concat_hex") {
            return fail("concat_fields");
        }
        let refs: Vec<&[u8]> = fields.iter().map(Vec::as_slice).collect();
        if alg.hash_fields(&refs) != block_of(v, "hash_fields_hex") {
            return fail("hash_fields");
        }
        let key = block_of(v, "key_hex");
        let ct = sym_encrypt(alg, &key, &hex_of(v, "plaintext_hex")).unwrap();
        if ct.as_bytes() != &hex_of(v, "ciphertext_hex")[..] {
            return fail("sym_encrypt");
        }
        let id = v["id"].as_str().unwrap();
        if encode_id(id).unwrap() != block_of(v, "id_block_hex") {
            return fail("encode_id");
        }
        let t = Timestamp(v["ticks"].as_u64().unwrap());
        if t.encode() != block_of(v, "ts_block_hex") {
            return fail("encode_timestamp");
        }
        let n = v["n"].as_u64().unwrap();
        if derive::j(alg, &hex_of(v, "master_key_hex"), id, n) != block_of(v, "j_hex") {
            return fail("J");
        }

        let card = SmartCard {
            l: block_of(&v["card"], "l_hex"),
            e: block_of(&v["card"], "e_hex"),
            r: block_of(&v["card"], "r_hex"),
            hash: alg,
        };
        let (msg, pending) = card.login(id, v["pw"].as_str().unwrap(), t).unwrap();
        if msg.b1 != block_of(v, "b1_hex") {
            return fail("B1");
        }
        if msg.c1().as_bytes() != &hex_of(v, "c1_hex")[..] {
            return fail("C1");
        }
        if pending.verifier() != block_of(v, "v_hex") {
            return fail("V");
        }
        let j = card.l ^ derive::rpw(alg, &card.r, v["pw"].as_str().unwrap());
        let t_s = Timestamp(v["t_server"].as_u64().unwrap());
        if derive::session_key(alg, &j, t, t_s, id) != block_of(v, "session_key_hex") {
            return fail("session key");
        }
    }
    Ok(vectors.len())
}
