use std::sync::Arc;

use axum::body::Body;
use axum::http::{header, Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use corpusforge_api::{router, AppState, MAX_AUDIO_BYTES};
use corpusforge_core::clock::{ManualClock, Timestamp};
use corpusforge_core::domain::{
    AudioAttachment, Decision, Role, Sentence, Translation, TranslationReview, User,
    UserId,
};
use corpusforge_core::store::Store;
use corpusforge_core::workflow::{actions, AudioUpload, ImportItem, NewUser, Platform, PlatformConfig};

const START: Timestamp = Timestamp::from_millis(1_767_225_600_000);

struct Harness {
    app: Router,
    platform: Arc<Platform>,
    clock: Arc<ManualClock>,
}

fn provision(platform: &Platform, id: &str, role: Role) {
    platform
        .provision_user(
            &UserId::new("cli"),
            NewUser {
                id: UserId::new(id),
                display_name: id.to_uppercase(),
                role,
                secret: format!("{id}-pw"),
            },
        )
        .unwrap();
}

fn setup() -> Harness {
    let clock = Arc::new(ManualClock::new(START));
    let platform = Arc::new(Platform::new(
        Arc::new(Store::in_memory()),
        clock.clone(),
        PlatformConfig::default(),
    ));
    provision(&platform, "admin", Role::Admin);
    provision(&platform, "tr0", Role::Translator);
    provision(&platform, "tr1", Role::Translator);
    provision(&platform, "rv0", Role::Reviewer);
    Harness {
        app: router(AppState::new(platform.clone())),
        platform,
        clock,
    }
}

struct Reply {
    status: StatusCode,
    content_type: Option<String>,
    bytes: Vec<u8>,
}

impl Reply {
    fn json(&self) -> Value {
        serde_json::from_slice(&self.bytes).unwrap_or_else(|e| {
            panic!("{e}: {}", String::from_utf8_lossy(&self.bytes))
        })
    }

    fn error_code(&self) -> String {
        self.json()["error"].as_str().unwrap().to_owned()
    }
}

impl Harness {
    async fn send(&self, request: Request<Body>) -> Reply {
        let response = self.app.clone().oneshot(request).await.unwrap();
        let status = response.status();
        let content_type = response
            .headers()
            .get(header::CONTENT_TYPE)
            .map(|v| v.to_str().unwrap().to_owned());
        let bytes = response.into_body().collect().await.unwrap().to_bytes().to_vec();
        Reply {
            status,
            content_type,
            bytes,
        }
    }

    async fn call(&self, method: Method, uri: &str, token: Option<&str>, body: Option<Value>) -> Reply {
        let mut builder = Request::builder().method(method).uri(uri);
        if let Some(token) = token {
            builder = builder.header(header::AUTHORIZATION, format!("Bearer {token}"));
        }
        let request = match body {
            Some(body) => builder
                .header(header::CONTENT_TYPE, "application/json")
                .body(Body::from(body.to_string())),
            None => builder.body(Body::empty()),
        };
        self.send(request.unwrap()).await
    }

    async fn login(&self, id: &str) -> String {
        let reply = self
            .call(
                Method::POST,
                "/auth/login",
                None,
                Some(json!({"user_id": id, "secret": format!("{id}-pw")})),
            )
            .await;
        assert_eq!(reply.status, StatusCode::OK);
        reply.json()["token"].as_str().unwrap().to_owned()
    }
}

fn multipart(text: &str, audio: Option<(&str, &[u8])>) -> (String, Vec<u8>) {
    let boundary = "corpusforge-test-boundary";
    let mut body = Vec::new();
    body.extend_from_slice(
        format!(
            "--{boundary}\r\nContent-Disposition: form-data; name=\"hula_text\"\r\n\r\n{text}\r\n"
        )
        .as_bytes(),
    );
    if let Some((content_type, bytes)) = audio {
        body.extend_from_slice(
            format!(
                "--{boundary}\r\nContent-Disposition: form-data; name=\"audio\"; filename=\"a.webm\"\r\nContent-Type: {content_type}\r\n\r\n"
            )
            .as_bytes(),
        );
        body.extend_from_slice(bytes);
        body.extend_from_slice(b"\r\n");
    }
    body.extend_from_slice(format!("--{boundary}--\r\n").as_bytes());
    (format!("multipart/form-data; boundary={boundary}"), body)
}

#[tokio::test]
async fn login_issues_distinct_tokens() {
    let h = setup();
    let a = h.login("rv0").await;
    let b = h.login("rv0").await;
    assert_ne!(a, b);
    assert_eq!(a.len(), 64);
    for token in [&a, &b] {
        let reply = h.call(Method::GET, "/tasks", Some(token), None).await;
        assert_eq!(reply.status, StatusCode::OK);
        assert_eq!(reply.json()["role"], "reviewer");
    }
    let logins = h
        .platform
        .store()
        .audit_log()
        .iter()
        .filter(|e| e.action == actions::LOGIN)
        .count();
    assert_eq!(logins, 2);
}

#[tokio::test]
async fn wrong_secret_is_rejected_without_session() {
    let h = setup();
    let before = h.platform.store().audit_len();
    let reply = h
        .call(Method::POST, "/auth/login", None, Some(json!({"user_id": "tr0", "secret": "nope"})))
        .await;
    assert_eq!(reply.status, StatusCode::UNAUTHORIZED);
    assert_eq!(reply.error_code(), "invalid_credential");
    assert!(reply.json()["message"].is_string());
    let reply = h
        .call(Method::POST, "/auth/login", None, Some(json!({"user_id": "ghost", "secret": "x"})))
        .await;
    assert_eq!(reply.status, StatusCode::UNAUTHORIZED);
    assert_eq!(h.platform.store().audit_len(), before);
}

#[tokio::test]
async fn every_endpoint_requires_a_token() {
    let h = setup();
    let cases = [
        (Method::POST, "/batches/b/import"),
        (Method::POST, "/tasks/claim"),
        (Method::GET, "/tasks"),
        (Method::POST, "/sentences/s/translations"),
        (Method::POST, "/translations/t/review"),
        (Method::GET, "/export"),
        (Method::GET, "/stats"),
        (Method::GET, "/leaderboard"),
        (Method::POST, "/ledger/contributions"),
        (Method::POST, "/ledger/disbursements"),
        (Method::GET, "/ledger/balances"),
        (Method::POST, "/sus"),
        (Method::GET, "/audio/a"),
    ];
    for (method, uri) in cases {
        let reply = h.call(method.clone(), uri, None, Some(json!({}))).await;
        assert_eq!(reply.status, StatusCode::UNAUTHORIZED, "{method} {uri}");
        assert_eq!(reply.error_code(), "unauthenticated");
        let reply = h.call(method.clone(), uri, Some("deadbeef"), Some(json!({}))).await;
        assert_eq!(reply.status, StatusCode::UNAUTHORIZED, "{method} {uri}");
    }
}

#[tokio::test]
async fn roles_are_enforced() {
    let h = setup();
    let tr = h.login("tr0").await;
    let rv = h.login("rv0").await;
    let reply = h
        .call(Method::POST, "/batches/b/import", Some(&tr), Some(json!([{"en": "x"}])))
        .await;
    assert_eq!(reply.status, StatusCode::FORBIDDEN);
    assert_eq!(reply.error_code(), "forbidden");
    assert_eq!(h.call(Method::POST, "/tasks/claim", Some(&rv), None).await.status, StatusCode::FORBIDDEN);
    assert_eq!(h.call(Method::GET, "/export", Some(&tr), None).await.status, StatusCode::FORBIDDEN);
    assert_eq!(h.call(Method::GET, "/ledger/balances", Some(&rv), None).await.status, StatusCode::FORBIDDEN);
    assert_eq!(h.call(Method::GET, "/tasks", Some(&rv), None).await.status, StatusCode::OK);
}

#[tokio::test]
async fn expired_session_is_rejected() {
    let h = setup();
    let token = h.login("tr0").await;
    h.clock.advance_seconds(24 * 3600 - 1);
    assert_eq!(h.call(Method::GET, "/tasks", Some(&token), None).await.status, StatusCode::OK);
    h.clock.advance_seconds(1);
    let reply = h.call(Method::GET, "/tasks", Some(&token), None).await;
    assert_eq!(reply.status, StatusCode::UNAUTHORIZED);
    assert_eq!(reply.error_code(), "expired");
}

#[tokio::test]
async fn malformed_bodies_get_error_documents() {
    let h = setup();
    let admin = h.login("admin").await;
    let reply = h
        .send(
            Request::post("/batches/b/import")
                .header(header::AUTHORIZATION, format!("Bearer {admin}"))
                .body(Body::from("{not json"))
                .unwrap(),
        )
        .await;
    assert_eq!(reply.status, StatusCode::BAD_REQUEST);
    assert_eq!(reply.error_code(), "bad_request");
    let reply = h.call(Method::POST, "/batches/b/import", Some(&admin), Some(json!([]))).await;
    assert_eq!(reply.status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(reply.error_code(), "empty_batch");
}

#[tokio::test]
async fn full_pipeline_over_http() {
    let h = setup();
    let admin = h.login("admin").await;
    let tr0 = h.login("tr0").await;
    let tr1 = h.login("tr1").await;
    let rv = h.login("rv0").await;

    let reply = h
        .call(
            Method::POST,
            "/batches/b1/import",
            Some(&admin),
            Some(json!({"items": [{"en": "Where is the canoe?"}, {"en": "Where is the canoe?"}]})),
        )
        .await;
    assert_eq!(reply.status, StatusCode::OK);
    assert_eq!(reply.json()["imported"], 1);
    assert_eq!(reply.json()["skipped_duplicates"], 1);

    let reply = h.call(Method::POST, "/tasks/claim", Some(&tr0), None).await;
    let sentence_id = reply.json()["sentence"]["id"].as_str().unwrap().to_owned();
    assert_eq!(
        h.call(Method::POST, "/tasks/claim", Some(&tr1), Some(json!({"lease_seconds": 60})))
            .await
            .json()["sentence"],
        Value::Null
    );

    let uri = format!("/sentences/{sentence_id}/translations");
    let reply = h.call(Method::POST, &uri, Some(&tr1), Some(json!({"hula_text": "x"}))).await;
    assert_eq!((reply.status, reply.error_code().as_str()), (StatusCode::CONFLICT, "not_claimant"));

    let (content_type, body) = multipart("Vaka ai?", Some(("audio/webm", &[1, 2, 3])));
    let reply = h
        .send(
            Request::post(&uri)
                .header(header::AUTHORIZATION, format!("Bearer {tr0}"))
                .header(header::CONTENT_TYPE, content_type)
                .body(Body::from(body))
                .unwrap(),
        )
        .await;
    assert_eq!(reply.status, StatusCode::CREATED, "{}", String::from_utf8_lossy(&reply.bytes));
    let first = reply.json();
    assert_eq!(first["attempt_index"], 1);
    let audio_id = first["audio_ref"].as_str().unwrap().to_owned();

    let reply = h.call(Method::GET, &format!("/audio/{audio_id}"), Some(&rv), None).await;
    assert_eq!(reply.status, StatusCode::OK);
    assert_eq!(reply.content_type.as_deref(), Some("audio/webm"));
    assert_eq!(reply.bytes, [1, 2, 3]);

    let review_uri = format!("/translations/{}/review", first["id"].as_str().unwrap());
    let reply = h.call(Method::POST, &review_uri, Some(&rv), Some(json!({"decision": "flag"}))).await;
    assert_eq!(reply.error_code(), "empty_flag_comment");
    let reply = h
        .call(
            Method::POST,
            &review_uri,
            Some(&rv),
            Some(json!({"decision": "flag", "comment": "add the question marker"})),
        )
        .await;
    assert_eq!(reply.status, StatusCode::CREATED);

    let reply = h.call(Method::POST, "/tasks/claim", Some(&tr1), None).await;
    assert_eq!(reply.json()["sentence"]["id"], sentence_id.as_str());
    let reply = h
        .call(Method::POST, &uri, Some(&tr1), Some(json!({"hula_text": "Vaka ai na?"})))
        .await;
    let second = reply.json();
    assert_eq!(second["attempt_index"], 2);

    let tasks = h.call(Method::GET, "/tasks", Some(&rv), None).await.json();
    assert_eq!(tasks["items"][0]["prior_comments"], json!(["add the question marker"]));

    let review_uri = format!("/translations/{}/review", second["id"].as_str().unwrap());
    let reply = h.call(Method::POST, &review_uri, Some(&rv), Some(json!({"decision": "approve"}))).await;
    assert_eq!(reply.status, StatusCode::CREATED);

    let stats = h.call(Method::GET, "/stats", Some(&tr0), None).await.json();
    assert_eq!(stats["corpus"]["pair_count"], 1);
    assert_eq!(stats["corpus"]["approval_distribution"]["2"], 1.0);
    let board = h.call(Method::GET, "/leaderboard?limit=5", Some(&tr0), None).await.json();
    assert_eq!(board[0]["translator_id"], "tr1");
    assert_eq!(board[0]["approved_count"], 1);

    let export_a = h.call(Method::GET, "/export?mark=false", Some(&admin), None).await;
    let export_b = h.call(Method::GET, "/export", Some(&admin), None).await;
    assert_eq!(export_a.bytes, export_b.bytes);
    assert!(export_a.content_type.unwrap().starts_with("application/x-ndjson"));
    let line: Value = serde_json::from_slice(export_a.bytes.strip_suffix(b"\n").unwrap()).unwrap();
    assert_eq!(line["english_text"], "Where is the canoe?");
    assert_eq!(line["attempts"], 2);

    let reply = h
        .call(Method::POST, "/ledger/contributions", Some(&admin), Some(json!({"member": "m1", "amount_minor": 500})))
        .await;
    assert_eq!(reply.status, StatusCode::CREATED);
    let reply = h
        .call(Method::POST, "/ledger/disbursements", Some(&admin), Some(json!({"translator": "tr1", "amount_minor": 11})))
        .await;
    assert_eq!(reply.error_code(), "exceeds_owed");
    let reply = h
        .call(Method::POST, "/ledger/disbursements", Some(&admin), Some(json!({"translator": "tr1", "amount_minor": 10})))
        .await;
    assert_eq!(reply.status, StatusCode::CREATED);
    let balances = h.call(Method::GET, "/ledger/balances", Some(&admin), None).await.json();
    assert_eq!(balances["pool_minor"], 490);

    let reply = h
        .call(Method::POST, "/sus", Some(&tr0), Some(json!({"responses": [5, 1, 5, 1, 5, 1, 5, 1, 5, 1]})))
        .await;
    assert_eq!(reply.json()["score"], 100.0);
    let reply = h.call(Method::POST, "/sus", Some(&tr0), Some(json!({"responses": [6, 1, 5, 1, 5, 1, 5, 1, 5, 1]}))).await;
    assert_eq!(reply.error_code(), "invalid_sus");

    let marked = h.call(Method::GET, "/export?mark=true", Some(&admin), None).await;
    assert_eq!(marked.bytes, export_a.bytes);
    assert!(h.call(Method::GET, "/export", Some(&admin), None).await.bytes.is_empty());

    let violations = corpusforge_core::invariants::check(&h.platform.store().snapshot());
    assert!(violations.is_empty(), "{violations:?}");
}

#[tokio::test]
async fn oversized_audio_is_refused() {
    let h = setup();
    h.platform
        .import_batch(&h.platform.user(&"admin".into()).unwrap(), "b", &[ImportItem::text("Sing.")])
        .unwrap();
    let tr = h.login("tr0").await;
    let id = h.call(Method::POST, "/tasks/claim", Some(&tr), None).await.json()["sentence"]["id"]
        .as_str()
        .unwrap()
        .to_owned();
    let big = vec![0u8; MAX_AUDIO_BYTES + 1];
    let (content_type, body) = multipart("text", Some(("audio/ogg", &big)));
    let reply = h
        .send(
            Request::post(format!("/sentences/{id}/translations"))
                .header(header::AUTHORIZATION, format!("Bearer {tr}"))
                .header(header::CONTENT_TYPE, content_type)
                .body(Body::from(body))
                .unwrap(),
        )
        .await;
    assert_eq!(reply.status, StatusCode::PAYLOAD_TOO_LARGE);
    assert_eq!(reply.error_code(), "audio_too_large");
    assert_eq!(h.platform.store().snapshot().count::<AudioAttachment>(), 0);

    let exact = vec![7u8; MAX_AUDIO_BYTES];
    let (content_type, body) = multipart("text", Some(("audio/ogg", &exact)));
    let reply = h
        .send(
            Request::post(format!("/sentences/{id}/translations"))
                .header(header::AUTHORIZATION, format!("Bearer {tr}"))
                .header(header::CONTENT_TYPE, content_type)
                .body(Body::from(body))
                .unwrap(),
        )
        .await;
    assert_eq!(reply.status, StatusCode::CREATED);
}

/// Every 2xx response to a mutating request adds exactly one audit event;
/// every error adds none.
#[tokio::test]
async fn successful_mutations_map_to_audit_events() {
    let h = setup();
    let admin = h.login("admin").await;
    let tr = h.login("tr0").await;
    let rv = h.login("rv0").await;
    let steps: Vec<(Method, String, &str, Option<Value>)> = vec![
        (Method::POST, "/batches/b/import".into(), &admin, Some(json!([{"en": "a"}, {"en": "b"}]))),
        (Method::POST, "/batches/b/import".into(), &tr, Some(json!([{"en": "c"}]))),
        (Method::POST, "/tasks/claim".into(), &tr, None),
        (Method::POST, "/tasks/claim".into(), &rv, None),
        (Method::POST, "/ledger/contributions".into(), &admin, Some(json!({"member": "m", "amount_minor": 0}))),
        (Method::POST, "/ledger/contributions".into(), &admin, Some(json!({"member": "m", "amount_minor": 50}))),
        (Method::POST, "/sus".into(), &rv, Some(json!({"responses": [3, 3, 3, 3, 3, 3, 3, 3, 3, 3]}))),
        (Method::POST, "/sus".into(), &rv, Some(json!({"responses": [3]}))),
        (Method::POST, "/ledger/disbursements".into(), &admin, Some(json!({"translator": "tr0", "amount_minor": 5}))),
    ];
    for (method, uri, token, body) in steps {
        let before = h.platform.store().audit_len();
        let reply = h.call(method.clone(), &uri, Some(token), body).await;
        let added = h.platform.store().audit_len() - before;
        let expected = usize::from(reply.status.is_success());
        assert_eq!(added, expected, "{method} {uri} -> {}", reply.status);
    }
    let log = h.platform.store().audit_log();
    assert!(log.iter().enumerate().all(|(i, e)| e.seq == i as u64 + 1));
}

/// Drives one scenario through HTTP and directly through the platform and
/// compares the resulting stores.
#[tokio::test]
async fn http_and_direct_calls_leave_identical_state() {
    let h = setup();
    let admin = h.login("admin").await;
    let tr0 = h.login("tr0").await;
    let rv = h.login("rv0").await;
    h.call(
        Method::POST,
        "/batches/b/import",
        Some(&admin),
        Some(json!([{"en": "one"}, {"en": "two"}, {"en": "one"}])),
    )
    .await;
    let s = h.call(Method::POST, "/tasks/claim", Some(&tr0), None).await.json()["sentence"]["id"]
        .as_str()
        .unwrap()
        .to_owned();
    let (content_type, body) = multipart("tahi", Some(("audio/ogg", b"OggS")));
    let t = h
        .send(
            Request::post(format!("/sentences/{s}/translations"))
                .header(header::AUTHORIZATION, format!("Bearer {tr0}"))
                .header(header::CONTENT_TYPE, content_type)
                .body(Body::from(body))
                .unwrap(),
        )
        .await
        .json()["id"]
        .as_str()
        .unwrap()
        .to_owned();
    h.call(
        Method::POST,
        &format!("/translations/{t}/review"),
        Some(&rv),
        Some(json!({"decision": "approve"})),
    )
    .await;
    h.call(
        Method::POST,
        "/ledger/contributions",
        Some(&admin),
        Some(json!({"member": "m", "amount_minor": 40})),
    )
    .await;
    h.call(Method::GET, "/export?mark=true", Some(&admin), None).await;

    let direct = setup();
    let p = &direct.platform;
    let user = |id: &str| p.user(&UserId::new(id)).unwrap();
    for id in ["admin", "tr0", "rv0"] {
        p.login(&UserId::new(id), &format!("{id}-pw")).unwrap();
    }
    p.import_batch(
        &user("admin"),
        "b",
        &[ImportItem::text("one"), ImportItem::text("two"), ImportItem::text("one")],
    )
    .unwrap();
    let sentence = p.claim_next(&user("tr0"), p.config().lease_seconds).unwrap().unwrap();
    let translation = p
        .submit_translation(
            &user("tr0"),
            &sentence.id,
            "tahi",
            Some(AudioUpload {
                content_type: "audio/ogg".into(),
                bytes: b"OggS".to_vec(),
            }),
        )
        .unwrap();
    p.review_translation(&user("rv0"), &translation.id, Decision::Approve, "").unwrap();
    p.contribute(&user("admin"), &UserId::new("m"), 40).unwrap();
    p.export_approved(&user("admin"), true).unwrap();

    assert_eq!(dump(&h.platform), dump(&direct.platform));
    assert_eq!(s, sentence.id.as_str());
}

fn dump(platform: &Platform) -> Value {
    fn rows<T: corpusforge_core::store::Record + serde::Serialize>(
        snap: &corpusforge_core::store::Snapshot<'_>,
    ) -> Value {
        snap.iter::<T>()
            .map(|r| json!({"version": r.version, "record": r.payload}))
            .collect()
    }
    let snap = platform.store().snapshot();
    let mut users: Value = rows::<User>(&snap);
    for u in users.as_array_mut().unwrap() {
        // Salted hashes differ between the two stores by design.
        u["record"]["credential_hash"] = Value::Null;
    }
    json!({
        "sentences": rows::<Sentence>(&snap),
        "translations": rows::<Translation>(&snap),
        "reviews": rows::<TranslationReview>(&snap),
        "attachments": rows::<AudioAttachment>(&snap),
        "users": users,
        "ledger": snap.ledger().entries(),
        "audit": snap.audit(),
    })
}
