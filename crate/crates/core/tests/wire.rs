//! Request and response bodies exchanged with a model server. The JSON
//! cases under `tests/golden/wire` are the shared contract.

mod common;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

use bioaug::attribution::{ScoreRequest, ScoreResponse, Scorer, ScorerKind};
use bioaug::backend::http::{
    HttpAgent, HttpConfig, HttpExtractor, HttpGenerator, HttpScorer, SidecarClient,
};
use bioaug::generation::{
    ExtractRequest, ExtractResponse, Extractor, Generator, InfillRequest, InfillResponse,
};
use bioaug::reflection::{Agent, ChatRequest, ChatResponse};

use common::{serve, wire_case};

fn round_trip<T: Serialize + DeserializeOwned>(v: &Value) -> T {
    let parsed: T = serde_json::from_value(v.clone()).unwrap();
    assert_eq!(&serde_json::to_value(&parsed).unwrap(), v);
    parsed
}

fn client(url: String) -> SidecarClient {
    let mut cfg = HttpConfig::new(url);
    cfg.api_key = Some("k3y".into());
    cfg.timeout_secs = 5.0;
    cfg.backoff_ms = 1;
    SidecarClient::new(cfg)
}

/// Serves the case's response once and returns the client plus the log.
fn serve_case(
    case: &Value,
) -> (
    SidecarClient,
    std::sync::Arc<std::sync::Mutex<Vec<common::Seen>>>,
) {
    let (url, seen) = serve(vec![(200, case["response"].to_string())]);
    (client(url), seen)
}

fn check_sent(seen: &std::sync::Mutex<Vec<common::Seen>>, case: &Value) {
    let seen = seen.lock().unwrap();
    assert_eq!(seen.len(), 1);
    assert_eq!(seen[0].method, "POST");
    assert_eq!(seen[0].path, case["route"].as_str().unwrap());
    assert!(seen[0]
        .headers
        .iter()
        .any(|(k, v)| k == "authorization" && v == "Bearer k3y"));
    let body: Value = serde_json::from_str(&seen[0].body).unwrap();
    assert_eq!(body, case["request"]);
}

#[test]
fn score_contract() {
    let case = wire_case("score");
    let req: ScoreRequest = round_trip(&case["request"]);
    let resp: ScoreResponse = round_trip(&case["response"]);
    assert_eq!(req.kind, ScorerKind::InferenceRelativity);

    let (client, seen) = serve_case(&case);
    let got = HttpScorer::new(client, ScorerKind::InferenceRelativity)
        .score(&req)
        .unwrap();
    assert_eq!(got, resp.score);
    check_sent(&seen, &case);
}

#[test]
fn score_without_restriction_omits_the_field() {
    let req = ScoreRequest {
        sequence: vec![],
        restriction_text: None,
        kind: ScorerKind::TaskLogit,
    };
    assert_eq!(
        serde_json::to_value(&req).unwrap(),
        serde_json::json!({"sequence": [], "kind": "task-logit"})
    );
}

#[test]
fn infill_contract() {
    let case = wire_case("infill");
    let req: InfillRequest = round_trip(&case["request"]);
    let resp: InfillResponse = round_trip(&case["response"]);
    let (client, seen) = serve_case(&case);
    assert_eq!(
        HttpGenerator::new(client).infill(&req).unwrap(),
        resp.tokens
    );
    check_sent(&seen, &case);
}

#[test]
fn extract_contract() {
    let case = wire_case("extract");
    let req: ExtractRequest = round_trip(&case["request"]);
    let resp: ExtractResponse = round_trip(&case["response"]);
    let (client, seen) = serve_case(&case);
    assert_eq!(
        HttpExtractor::new(client).extract(&req).unwrap(),
        resp.structure_text
    );
    check_sent(&seen, &case);
}

#[test]
fn chat_contract() {
    let case = wire_case("chat");
    let req: ChatRequest = round_trip(&case["request"]);
    let resp: ChatResponse = round_trip(&case["response"]);
    assert_eq!((req.temperature, req.top_p), (0.1, 0.1));
    let (client, seen) = serve_case(&case);
    assert_eq!(
        HttpAgent::new(client, "agent-1", None).chat(&req).unwrap(),
        resp.text
    );
    check_sent(&seen, &case);
}

#[test]
fn health_contract() {
    let case = wire_case("health");
    let (url, seen) = serve(vec![(200, case["response"].to_string())]);
    let health = client(url).health().unwrap();
    assert_eq!(health.status, "ok");
    assert_eq!(health.models.len(), 2);
    let seen = seen.lock().unwrap();
    assert_eq!(
        (seen[0].method.as_str(), seen[0].path.as_str()),
        ("GET", "/health")
    );
}

#[test]
fn malformed_response_is_permanent() {
    let (url, _) = serve(vec![(200, r#"{"scor": 1}"#.into())]);
    let err = HttpScorer::new(client(url), ScorerKind::TaskLogit)
        .score(&ScoreRequest {
            sequence: vec!["a".into()],
            restriction_text: None,
            kind: ScorerKind::TaskLogit,
        })
        .unwrap_err();
    assert!(!err.is_retriable());
}

#[test]
fn non_finite_score_is_rejected() {
    // JSON has no NaN; a huge exponent overflows to infinity on parse
    let (url, _) = serve(vec![(200, r#"{"score": 1e999}"#.into())]);
    let got = HttpScorer::new(client(url), ScorerKind::TaskLogit).score(&ScoreRequest {
        sequence: vec![],
        restriction_text: None,
        kind: ScorerKind::TaskLogit,
    });
    assert!(got.is_err());
}
