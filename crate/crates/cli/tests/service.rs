use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use preopnet::model::{ArchitectureConfig, ModelWeights, PreOpNet, TrainingMeta};
use preopnet::waveform::{encode_binary, generate_synthetic_cohort, write_csv, EcgRecord, SynthConfig};
use preopnet_cli::payload::{ClinicalInput, EcgPayload};
use preopnet_cli::service::{router, AppState, ErrorBody, ExplainResponse, PredictRequest, PredictionResponse};
use serde_json::{json, Value};
use tower::ServiceExt;

fn tiny_arch() -> ArchitectureConfig {
    let text = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/tiny-arch.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

fn app(clinical: bool) -> axum::Router {
    let arch = tiny_arch().with_clinical(clinical);
    let weights = ModelWeights::new(PreOpNet::new(&arch, 3).unwrap(), TrainingMeta::untrained(3));
    router(Arc::new(AppState::new(&weights, 1).unwrap()), Some(preopnet_cli::service::default_ui_dir()))
}

fn sample_ecg() -> (EcgRecord, ClinicalInput) {
    let c = generate_synthetic_cohort(&SynthConfig { n_patients: 2, ..Default::default() }, 4).unwrap();
    let e = &c.manifest.ecgs[0];
    let profile = c.manifest.profiles.iter().find(|p| p.patient_id == e.patient_id).unwrap();
    (c.waveforms.get(&e.ecg_id).unwrap().clone(), profile.into())
}

async fn call(app: &axum::Router, method: &str, path: &str, body: Option<Value>) -> (StatusCode, Vec<u8>) {
    let req = Request::builder().method(method).uri(path).header("content-type", "application/json");
    let req = req.body(body.map_or(Body::empty(), |b| Body::from(b.to_string()))).unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    (status, resp.into_body().collect().await.unwrap().to_bytes().to_vec())
}

fn predict_body(ecg: &EcgRecord, clinical: Option<&ClinicalInput>) -> Value {
    serde_json::to_value(PredictRequest { ecg: EcgPayload::binary(&encode_binary(ecg)), clinical: clinical.cloned() }).unwrap()
}

#[tokio::test]
async fn predict_happy_path_with_rcri() {
    let app = app(false);
    let (ecg, clinical) = sample_ecg();
    let (status, body) = call(&app, "POST", "/v1/predict", Some(predict_body(&ecg, Some(&clinical)))).await;
    assert_eq!(status, StatusCode::OK, "{}", String::from_utf8_lossy(&body));
    let r: PredictionResponse = serde_json::from_slice(&body).unwrap();
    assert!(r.probability > 0.0 && r.probability < 1.0);
    assert_eq!(r.high_risk, r.probability >= r.threshold);
    let rcri = r.rcri.expect("rcri populated");
    assert_eq!(rcri.high_risk, rcri.score >= 2);
    assert_eq!(r.model_checksum.len(), 64);
}

#[tokio::test]
async fn csv_and_binary_payloads_agree() {
    let app = app(false);
    let (ecg, _) = sample_ecg();
    let mut csv = Vec::new();
    write_csv(&ecg, &mut csv).unwrap();
    let csv_body = serde_json::to_value(PredictRequest { ecg: EcgPayload::csv(String::from_utf8(csv).unwrap()), clinical: None }).unwrap();
    let (s1, b1) = call(&app, "POST", "/v1/predict", Some(csv_body)).await;
    let (s2, b2) = call(&app, "POST", "/v1/predict", Some(predict_body(&ecg, None))).await;
    assert_eq!((s1, s2), (StatusCode::OK, StatusCode::OK));
    let p1: PredictionResponse = serde_json::from_slice(&b1).unwrap();
    let p2: PredictionResponse = serde_json::from_slice(&b2).unwrap();
    assert_eq!(p1.probability, p2.probability);
}

#[tokio::test]
async fn eleven_leads_is_rejected_with_reason() {
    let app = app(false);
    let (ecg, _) = sample_ecg();
    let mut csv = Vec::new();
    write_csv(&ecg, &mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    let eleven: String = text.lines().map(|l| l.rsplit_once(',').unwrap().0.to_string() + "\n").collect();
    let (status, body) = call(&app, "POST", "/v1/predict", Some(json!({ "ecg_csv": eleven }))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let e: ErrorBody = serde_json::from_slice(&body).unwrap();
    assert_eq!(e.error, "MissingLead");
}

#[tokio::test]
async fn malformed_bodies_are_bad_requests() {
    let app = app(false);
    let (status, body) = call(&app, "POST", "/v1/predict", Some(json!({ "nothing": 1 }))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(serde_json::from_slice::<ErrorBody>(&body).unwrap().error, "MalformedRequest");
    let (status, _) = call(&app, "POST", "/v1/predict", Some(json!({ "ecg_base64": "!!!" }))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn clinical_model_without_clinical_is_unprocessable() {
    let app = app(true);
    let (ecg, clinical) = sample_ecg();
    let (status, body) = call(&app, "POST", "/v1/predict", Some(predict_body(&ecg, None))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(serde_json::from_slice::<ErrorBody>(&body).unwrap().error, "FeatureMismatch");
    let (status, _) = call(&app, "POST", "/v1/predict", Some(predict_body(&ecg, Some(&clinical)))).await;
    assert_eq!(status, StatusCode::OK);
}

#[tokio::test]
async fn identical_requests_give_identical_probabilities() {
    let app = app(false);
    let (ecg, clinical) = sample_ecg();
    let body = predict_body(&ecg, Some(&clinical));
    let (_, first) = call(&app, "POST", "/v1/predict", Some(body.clone())).await;
    let baseline: PredictionResponse = serde_json::from_slice(&first).unwrap();
    let handles: Vec<_> = (0..16)
        .map(|_| {
            let (app, body) = (app.clone(), body.clone());
            tokio::spawn(async move { call(&app, "POST", "/v1/predict", Some(body)).await })
        })
        .collect();
    for h in handles {
        let (status, bytes) = h.await.unwrap();
        assert_eq!(status, StatusCode::OK);
        let r: PredictionResponse = serde_json::from_slice(&bytes).unwrap();
        assert_eq!(r.probability, baseline.probability);
        assert_eq!(r.rcri, baseline.rcri);
    }
}

#[tokio::test]
async fn explain_grid_shape_and_determinism() {
    let app = app(false);
    let (ecg, _) = sample_ecg();
    let mut body = predict_body(&ecg, None);
    body["n_samples"] = json!(64);
    body["seed"] = json!(9);
    let (s1, b1) = call(&app, "POST", "/v1/explain", Some(body.clone())).await;
    let (s2, b2) = call(&app, "POST", "/v1/explain", Some(body.clone())).await;
    assert_eq!((s1, s2), (StatusCode::OK, StatusCode::OK));
    let r1: ExplainResponse = serde_json::from_slice(&b1).unwrap();
    let r2: ExplainResponse = serde_json::from_slice(&b2).unwrap();
    assert_eq!((r1.heatmap.leads, r1.heatmap.segments), (12, 200));
    assert_eq!(r1.heatmap.values.len(), 2400);
    assert_eq!(r1.heatmap, r2.heatmap);
    body["n_samples"] = json!(0);
    let (status, _) = call(&app, "POST", "/v1/explain", Some(body)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn health_model_and_ui() {
    let app = app(false);
    let (status, body) = call(&app, "GET", "/v1/health", None).await;
    assert_eq!(status, StatusCode::OK);
    let v: Value = serde_json::from_slice(&body).unwrap();
    assert_eq!(v["status"], "ok");
    assert_eq!(v["weights_checksum"].as_str().unwrap().len(), 64);
    let (status, body) = call(&app, "GET", "/v1/model", None).await;
    assert_eq!(status, StatusCode::OK);
    let v: Value = serde_json::from_slice(&body).unwrap();
    assert_eq!(v["threshold"], 0.5);
    assert!(v["flops"].as_u64().unwrap() > 0);
    let (status, body) = call(&app, "GET", "/ui/", None).await;
    assert_eq!(status, StatusCode::OK);
    assert!(String::from_utf8_lossy(&body).contains("PreOpNet"));
}
