use std::collections::HashSet;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use super::*;
use crate::primitives::{decode_id, sym_decrypt, BLOCK_LEN};

const ALG: HashAlgorithm = HashAlgorithm::Sha256;

fn server(seed: u64) -> (ServerState, ChaCha20Rng) {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let s = ServerState::generate(&mut rng, DEFAULT_FRESHNESS_WINDOW, ALG);
    (s, rng)
}

/// Decrypts `C1` under the true `h(T)` and splits it into `(AID, T, V)`.
fn open_c1(msg: &LoginMessage, t: Timestamp) -> (Block, Block, Block) {
    let plain = sym_decrypt(ALG, &derive::timestamp_key(ALG, t), msg.c1());
    let b = |i: usize| Block::from_slice(&plain[i * BLOCK_LEN..(i + 1) * BLOCK_LEN]).unwrap();
    (b(0), b(1), b(2))
}

#[test]
fn register_request_is_deterministic_under_seed() {
    let a = register_request(ALG, "alice", "pw1", &mut ChaCha20Rng::seed_from_u64(3)).unwrap();
    let b = register_request(ALG, "alice", "pw1", &mut ChaCha20Rng::seed_from_u64(3)).unwrap();
    assert_eq!(a, b);
    assert_eq!(
        a.1.rpw,
        ALG.hash(&crate::primitives::concat_fields(&[&a.0.r.as_bytes()[..], b"pw1"]).unwrap())
    );
}

#[test]
fn register_request_rejects_bad_inputs() {
    let mut rng = ChaCha20Rng::seed_from_u64(0);
    assert!(matches!(
        register_request(ALG, "", "pw", &mut rng),
        Err(SchemeError::InvalidIdentity(_))
    ));
    assert!(matches!(
        register_request(ALG, &"x".repeat(33), "pw", &mut rng),
        Err(SchemeError::InvalidIdentity(_))
    ));
    assert_eq!(
        register_request(ALG, "bob", "", &mut rng),
        Err(SchemeError::EmptyPassword)
    );
}

#[test]
fn rpw_separates_passwords() {
    let mut rng = ChaCha20Rng::seed_from_u64(11);
    let (creds, req) = register_request(ALG, "alice", "correct horse", &mut rng).unwrap();
    let mut seen = HashSet::new();
    seen.insert(req.rpw);
    for i in 0..1_000 {
        let other = derive::rpw(ALG, &creds.r, &format!("guess{i}"));
        assert!(seen.insert(other), "collision at {i}");
    }
}

#[test]
fn registration_message_hides_password_and_r() {
    let mut rng = ChaCha20Rng::seed_from_u64(1);
    let (creds, req) = register_request(ALG, "alice", "s3cret-pass", &mut rng).unwrap();
    let json = serde_json::to_string(&req).unwrap();
    assert!(!json.contains("s3cret-pass"));
    assert!(!json.contains(&creds.r.to_hex()));
    let v: serde_json::Value = serde_json::from_str(&json).unwrap();
    let keys: Vec<_> = v.as_object().unwrap().keys().cloned().collect();
    assert_eq!(keys, ["id", "rpw"]);
}

#[test]
fn server_register_counts_registrations() {
    let (mut s, mut rng) = server(5);
    let (_, req1) = register_request(ALG, "alice", "pw", &mut rng).unwrap();
    let first = s.register(&req1).unwrap();
    assert_eq!(s.registration_count("alice"), Some(0));
    assert_eq!(first.l ^ req1.rpw, derive::j(ALG, s.master_key(), "alice", 0));

    let (_, req2) = register_request(ALG, "alice", "pw", &mut rng).unwrap();
    let second = s.register(&req2).unwrap();
    assert_eq!(s.registration_count("alice"), Some(1));
    assert_ne!(first.l, second.l);
    assert_eq!(second.l ^ req2.rpw, derive::j(ALG, s.master_key(), "alice", 1));
    assert_eq!(s.registry().len(), 1);
}

#[test]
fn server_register_rejects_malformed_id() {
    let (mut s, _) = server(5);
    let req = RegistrationRequest {
        id: "a\0b".into(),
        rpw: Block::ZERO,
    };
    assert!(matches!(s.register(&req), Err(SchemeError::InvalidIdentity(_))));
    assert!(s.registry().is_empty());
}

#[test]
fn card_holds_only_l_e_r() {
    let (mut s, mut rng) = server(9);
    let (creds, card) = register_user(&mut s, "alice", "pw", &mut rng).unwrap();
    assert_eq!(card.r, creds.r);
    assert_eq!(
        card.e,
        s.master_digest() ^ derive::id_mask(ALG, &derive::rpw(ALG, &creds.r, "pw"), "alice")
    );
    let v: serde_json::Value = serde_json::from_str(&card.to_json()).unwrap();
    let mut keys: Vec<_> = v.as_object().unwrap().keys().cloned().collect();
    keys.sort();
    assert_eq!(keys, ["e_hex", "hash_algorithm", "l_hex", "r_hex"]);
    assert!(!card.to_json().contains("alice"));
    assert_eq!(SmartCard::from_json(&card.to_json()).unwrap(), card);
}

#[test]
fn cards_of_distinct_users_share_no_fields() {
    let (mut s, mut rng) = server(21);
    let mut ls = HashSet::new();
    let mut es = HashSet::new();
    let mut rs = HashSet::new();
    for i in 0..1_000 {
        let (_, card) = register_user(&mut s, &format!("user{i}"), "pw", &mut rng).unwrap();
        assert!(ls.insert(card.l) && es.insert(card.e) && rs.insert(card.r));
    }
}

#[test]
fn honest_login_algebra() {
    let (mut s, mut rng) = server(2);
    let (creds, card) = register_user(&mut s, "alice", "pw", &mut rng).unwrap();
    let now = Timestamp(1_000);
    let (msg, _) = card.login("alice", "pw", now).unwrap();
    let hx = s.master_digest();

    assert_eq!(msg.b1 ^ hx, now.encode());
    assert_eq!(Timestamp::decode(&(msg.b1 ^ hx)).unwrap(), now);

    let (aid, t, v) = open_c1(&msg, now);
    assert_eq!(t, now.encode());
    assert_eq!(aid ^ hx ^ derive::timestamp_key(ALG, now), encode_id("alice").unwrap());
    let j = card.l ^ derive::rpw(ALG, &creds.r, "pw");
    assert_eq!(j, derive::j(ALG, s.master_key(), "alice", 0));
    assert_eq!(v, derive::verifier(ALG, now, &j));
}

#[test]
fn wrong_inputs_garble_b1() {
    let (mut s, mut rng) = server(2);
    let (_, card) = register_user(&mut s, "alice", "pw", &mut rng).unwrap();
    let now = Timestamp(77);
    let expected = s.master_digest() ^ now.encode();
    let (wrong_pw, _) = card.login("alice", "pw?", now).unwrap();
    assert_ne!(wrong_pw.b1, expected);
    let (wrong_id, _) = card.login("alicf", "pw", now).unwrap();
    assert_ne!(wrong_id.b1, expected);
}

#[test]
fn full_run_agrees_on_session_key() {
    let (mut s, mut rng) = server(4);
    let (_, card) = register_user(&mut s, "alice", "pw", &mut rng).unwrap();
    let (msg, pending) = card.login("alice", "pw", Timestamp(100)).unwrap();
    let (resp, server_session) = s.authenticate(&msg, Timestamp(101)).unwrap();
    assert_eq!(server_session.user_id, "alice");
    assert_eq!(server_session.t_user, Timestamp(100));
    assert_eq!(server_session.t_server, Timestamp(101));
    let card_session = card
        .verify_server(pending, &resp, Timestamp(102), DEFAULT_FRESHNESS_WINDOW)
        .unwrap();
    assert_eq!(card_session, server_session);
}

#[test]
fn key_agreement_over_many_runs() {
    let (mut s, mut rng) = server(1234);
    let users: Vec<_> = (0..10)
        .map(|i| {
            let id = format!("patient-{i}");
            let pw = format!("pw-{i}-{}", i * 7);
            let (_, card) = register_user(&mut s, &id, &pw, &mut rng).unwrap();
            (id, pw, card)
        })
        .collect();
    let mut tick = 10u64;
    for k in 0..1_000 {
        let (id, pw, card) = &users[k % users.len()];
        let (msg, pending) = card.login(id, pw, Timestamp(tick)).unwrap();
        let (resp, srv) = s.authenticate(&msg, Timestamp(tick + 1)).unwrap();
        let crd = card.verify_server(pending, &resp, Timestamp(tick + 2), 60).unwrap();
        assert_eq!(srv.sk, crd.sk);
        assert_eq!(&srv.user_id, id);
        tick += 3;
    }
}

#[test]
fn stale_and_replayed_logins() {
    let (mut s, mut rng) = server(8);
    let (_, card) = register_user(&mut s, "alice", "pw", &mut rng).unwrap();
    let (msg, _) = card.login("alice", "pw", Timestamp(500)).unwrap();
    assert!(s.authenticate(&msg, Timestamp(560)).is_ok());
    assert_eq!(
        s.authenticate(&msg, Timestamp(561)).unwrap_err(),
        ServerRejection::Stale
    );
    // a message from the future is equally outside the window
    assert_eq!(
        s.authenticate(&msg, Timestamp(439)).unwrap_err(),
        ServerRejection::Stale
    );
}

#[test]
fn wrong_password_login_is_rejected() {
    let (mut s, mut rng) = server(8);
    let (_, card) = register_user(&mut s, "alice", "pw", &mut rng).unwrap();
    let (msg, _) = card.login("alice", "not-pw", Timestamp(500)).unwrap();
    let err = s.authenticate(&msg, Timestamp(501)).unwrap_err();
    assert!(matches!(
        err,
        ServerRejection::Stale | ServerRejection::TimestampMismatch
    ));
}

#[test]
fn each_rejection_reason_is_reachable() {
    let (mut s, mut rng) = server(13);
    let (_, card) = register_user(&mut s, "alice", "pw", &mut rng).unwrap();
    let now = Timestamp(1_000);
    let (msg, _) = card.login("alice", "pw", now).unwrap();

    let mut t_flip = msg.clone();
    t_flip.c1_mut().flip_bit(BLOCK_LEN * 8 + 255);
    assert_eq!(
        s.authenticate(&t_flip, now).unwrap_err(),
        ServerRejection::TimestampMismatch
    );

    let mut v_flip = msg.clone();
    v_flip.c1_mut().flip_bit(2 * BLOCK_LEN * 8);
    assert_eq!(s.authenticate(&v_flip, now).unwrap_err(), ServerRejection::BadVerifier);

    let mut id_flip = msg.clone();
    id_flip.c1_mut().flip_bit(31 * 8);
    assert_eq!(s.authenticate(&id_flip, now).unwrap_err(), ServerRejection::UnknownId);

    let empty = ServerState::new(s.master_key().to_vec(), 60, ALG);
    assert_eq!(empty.authenticate(&msg, now).unwrap_err(), ServerRejection::UnknownId);

    // re-registration invalidates the old card
    register_user(&mut s, "alice", "pw", &mut rng).unwrap();
    assert_eq!(s.authenticate(&msg, now).unwrap_err(), ServerRejection::BadVerifier);
}

#[test]
fn metered_work_is_counted_on_early_rejection() {
    let (mut s, mut rng) = server(13);
    let (_, card) = register_user(&mut s, "alice", "pw", &mut rng).unwrap();
    let (bad, _) = card.login("alice", "nope", Timestamp(9)).unwrap();
    let mut meter = WorkMeter::default();
    let _ = s.authenticate_metered(&bad, Timestamp(9), &mut meter);
    assert!(meter.units() >= 1);
    let (good, _) = card.login("alice", "pw", Timestamp(9)).unwrap();
    let mut full = WorkMeter::default();
    s.authenticate_metered(&good, Timestamp(9), &mut full).unwrap();
    assert_eq!(
        full,
        WorkMeter {
            decode_attempts: 2,
            hashes: 3,
            decryptions: 1
        }
    );
}

#[test]
fn card_rejects_tampered_or_replayed_responses() {
    let (mut s, mut rng) = server(6);
    let (_, card) = register_user(&mut s, "alice", "pw", &mut rng).unwrap();

    let (msg, pending) = card.login("alice", "pw", Timestamp(10)).unwrap();
    let (resp, _) = s.authenticate(&msg, Timestamp(11)).unwrap();
    let mut flipped = resp.clone();
    flipped.c2_mut().flip_bit(5);
    assert_eq!(
        card.verify_server(pending.clone(), &flipped, Timestamp(12), 60)
            .unwrap_err(),
        CardRejection::VerifierMismatch
    );
    let mut ts_flip = resp.clone();
    ts_flip.c2_mut().flip_bit(BLOCK_LEN * 8 + 3);
    assert_eq!(
        card.verify_server(pending.clone(), &ts_flip, Timestamp(12), 60)
            .unwrap_err(),
        CardRejection::TimestampMismatch
    );
    let mut b2_flip = resp.clone();
    b2_flip.b2.flip_bit(0);
    assert_eq!(
        card.verify_server(pending.clone(), &b2_flip, Timestamp(12), 60)
            .unwrap_err(),
        CardRejection::StaleServerTimestamp
    );
    assert_eq!(
        card.verify_server(pending, &resp, Timestamp(200), 60).unwrap_err(),
        CardRejection::StaleServerTimestamp
    );

    // the old response is offered to a later login
    let (_, second) = card.login("alice", "pw", Timestamp(13)).unwrap();
    assert_eq!(
        card.verify_server(second, &resp, Timestamp(14), 60).unwrap_err(),
        CardRejection::VerifierMismatch
    );
}

#[test]
fn wire_messages_do_not_contain_raw_credentials() {
    let (mut s, mut rng) = server(31);
    let id = "alice-the-patient";
    let pw = "hunter2-hunter2";
    let (_, card) = register_user(&mut s, id, pw, &mut rng).unwrap();
    for t in 0..200u64 {
        let (msg, _) = card.login(id, pw, Timestamp(t)).unwrap();
        let (resp, _) = s.authenticate(&msg, Timestamp(t)).unwrap();
        let mut wire = msg.b1.as_bytes().to_vec();
        wire.extend_from_slice(msg.c1().as_bytes());
        wire.extend_from_slice(resp.b2.as_bytes());
        wire.extend_from_slice(resp.c2().as_bytes());
        for needle in [id.as_bytes(), pw.as_bytes()] {
            assert!(!wire.windows(needle.len()).any(|w| w == needle));
        }
    }
}

#[test]
fn wire_json_shapes() {
    let (mut s, mut rng) = server(31);
    let (_, card) = register_user(&mut s, "alice", "pw", &mut rng).unwrap();
    let (msg, _) = card.login("alice", "pw", Timestamp(3)).unwrap();
    let (resp, _) = s.authenticate(&msg, Timestamp(3)).unwrap();

    let j: serde_json::Value = serde_json::to_value(&msg).unwrap();
    assert_eq!(j["b1_hex"].as_str().unwrap().len(), 64);
    assert_eq!(j["c1_hex"].as_str().unwrap().len(), 192);
    assert_eq!(serde_json::from_value::<LoginMessage>(j).unwrap(), msg);

    let j: serde_json::Value = serde_json::to_value(&resp).unwrap();
    assert_eq!(j["c2_hex"].as_str().unwrap().len(), 128);
    assert_eq!(serde_json::from_value::<ServerResponse>(j).unwrap(), resp);

    let short = serde_json::json!({"b1_hex": "00".repeat(32), "c1_hex": "00".repeat(64)});
    assert!(serde_json::from_value::<LoginMessage>(short).is_err());
}

#[test]
fn server_document_round_trip() {
    let (mut s, mut rng) = server(17);
    register_user(&mut s, "alice", "pw", &mut rng).unwrap();
    register_user(&mut s, "bob", "pw", &mut rng).unwrap();
    register_user(&mut s, "bob", "pw", &mut rng).unwrap();
    let json = s.to_json();
    let v: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert_eq!(v["registry"][1], serde_json::json!({"id": "bob", "N": 1}));
    assert_eq!(v["freshness_window"], 60);
    let back = ServerState::from_json(&json).unwrap();
    assert_eq!(back, s);

    let dup = r#"{"master_key_hex":"00","registry":[{"id":"a","N":0},{"id":"a","N":1}],"freshness_window":5}"#;
    assert!(matches!(ServerState::from_json(dup), Err(SchemeError::Document(_))));
}

#[test]
fn seeded_runs_are_byte_identical() {
    let run = || {
        let (mut s, mut rng) = server(99);
        let (_, card) = register_user(&mut s, "alice", "pw", &mut rng).unwrap();
        let (msg, _) = card.login("alice", "pw", Timestamp(42)).unwrap();
        let (resp, sess) = s.authenticate(&msg, Timestamp(43)).unwrap();
        serde_json::to_string(&(msg, resp, sess)).unwrap()
    };
    assert_eq!(run(), run());
}

#[test]
fn recovered_identity_matches_for_odd_ids() {
    let (mut s, mut rng) = server(3);
    for id in ["a", "Ω-user", &"z".repeat(BLOCK_LEN)] {
        let (_, card) = register_user(&mut s, id, "pw", &mut rng).unwrap();
        let now = Timestamp(5);
        let (msg, _) = card.login(id, "pw", now).unwrap();
        let (aid, _, _) = open_c1(&msg, now);
        let rec = aid ^ s.master_digest() ^ derive::timestamp_key(ALG, now);
        assert_eq!(decode_id(&rec).unwrap(), id);
        assert_eq!(s.authenticate(&msg, now).unwrap().1.user_id, id);
    }
}
