// SPDX-License-Identifier: Apache-2.0

//! The HTTP contract, driven through the transport-independent dispatcher.

mod common;

use base64::Engine as _;
use serde_json::{json, Value};

use olympus::api::{handle, ApiRequest, ApiResponse};
use olympus::model::Role;
use olympus::{Config, Olympus};

struct Client {
    svc: Olympus,
}

impl Client {
    fn new(svc: Olympus) -> Self {
        Client { svc }
    }

    fn token(&self, name: &str, roles: &[Role]) -> String {
        self.svc.issue_token(name, roles).unwrap().1
    }

    fn send(&self, req: ApiRequest) -> ApiResponse {
        handle(&self.svc, &req)
    }

    fn get(&self, token: &str, target: &str) -> ApiResponse {
        self.send(ApiRequest::new("GET", target).bearer(token))
    }

    fn post(&self, token: &str, target: &str, body: Value) -> ApiResponse {
        self.send(ApiRequest::new("POST", target).bearer(token).json(&body))
    }
}

#[track_caller]
fn expect(res: &ApiResponse, status: u16) -> Value {
    assert_eq!(res.status, status, "body: {}", String::from_utf8_lossy(&res.body));
    res.json_body()
}

#[track_caller]
fn expect_error(res: &ApiResponse, status: u16, code: &str) -> Value {
    let body = expect(res, status);
    assert_eq!(body["code"], code, "{body}");
    assert!(body["message"].as_str().is_some_and(|m| !m.is_empty()));
    assert!(body["details"].is_object());
    body
}

fn page_evidence() -> Value {
    json!({"source_kind": "packaging", "locator": {"variant": "document_page", "page": 2}})
}

#[test]
fn three_stage_flow_over_the_api() {
    let api = Client::new(Olympus::in_memory(Config::deterministic()));
    let admin = api.token("A1", &[Role::Admin]);
    let w1 = api.token("W1", &[Role::CrowdWorker]);
    let w2 = api.token("W2", &[Role::CrowdWorker]);
    let student = api.token("S1", &[Role::Student]);

    let features = expect(&api.get(&student, "/features"), 200);
    assert_eq!(features.as_array().unwrap().len(), 12);

    let mut templates = Vec::new();
    for name in ["Fitbit", "Beddit"] {
        let t = expect(&api.post(&admin, "/templates", json!({"name": name, "brand": name})), 201);
        templates.push(t["id"].as_str().unwrap().to_owned());
    }

    for template in &templates {
        for (worker, value) in [(&w1, "Bluetooth"), (&w2, "Wi-Fi")] {
            let draft = expect(&api.post(worker, "/drafts", json!({"template_id": template})), 201);
            let draft_id = draft["id"].as_str().unwrap();
            assert_eq!(draft["status"], "in_progress");
            let claim = expect(
                &api.post(worker, &format!("/drafts/{draft_id}/claims"), json!({"feature_key": "connectivity", "value": value, "expected_version": 0})),
                201,
            );
            let evidence = expect(
                &api.post(worker, &format!("/claims/{}/evidence", claim["id"].as_str().unwrap()), page_evidence()),
                201,
            );
            assert_eq!(evidence["locator"]["page"], 2);
            let submitted = expect(&api.post(worker, &format!("/drafts/{draft_id}/submit"), json!({"expected_version": 2})), 200);
            assert_eq!(submitted["status"], "submitted");
        }
        let session = expect(&api.post(&admin, "/merge-sessions", json!({"template_id": template})), 201);
        let session_id = session["id"].as_str().unwrap();
        assert_eq!(session["groups"].as_array().unwrap().len(), 2);
        assert!(session["groups"].as_array().unwrap().iter().all(|g| g["classification"] == "premerged"));
        let fetched = expect(&api.get(&admin, &format!("/merge-sessions/{session_id}")), 200);
        assert_eq!(fetched, session);
        let master = expect(&api.post(&admin, &format!("/merge-sessions/{session_id}/finalize"), json!({})), 200);
        assert_eq!(master["entries"].as_array().unwrap().len(), 2);
    }

    let products = templates.join(",");
    let matrix = expect(&api.get(&student, &format!("/compare?products={products}")), 200);
    assert_eq!(matrix["products"].as_array().unwrap().len(), 2);
    assert_eq!(matrix["feature_keys"], json!(["connectivity"]));

    let csv = api.get(&student, &format!("/compare?products={products}&format=csv"));
    assert_eq!(csv.status, 200);
    assert_eq!(csv.content_type, "text/csv");
    let text = String::from_utf8(csv.body).unwrap();
    assert_eq!(text.lines().next().unwrap(), "feature,Fitbit,Beddit");
    assert_eq!(text.lines().nth(1).unwrap(), "connectivity,Bluetooth; Wi-Fi,Bluetooth; Wi-Fi");

    let diff = expect(&api.get(&student, &format!("/compare/diff?a={}&b={}", templates[0], templates[1])), 200);
    assert!(diff["differing"].as_array().unwrap().is_empty());
    let prompts = expect(&api.get(&student, &format!("/compare/prompts?products={products}")), 200);
    assert!(prompts.as_array().unwrap().is_empty());

    let ranking = json!({"ordered_products": [templates[1], templates[0]], "criterion": "perceived privacy risk"});
    expect(&api.post(&student, "/polls/pol_risk/rankings", ranking), 201);
    let consensus = expect(&api.get(&student, "/polls/pol_risk/consensus"), 200);
    assert_eq!(consensus["ordering"], json!([templates[1], templates[0]]));
    assert_eq!(consensus["voter_count"], 1);
    assert_eq!(consensus["criterion"], "perceived privacy risk");
}

#[test]
fn export_endpoint_is_the_document_and_import_replaces() {
    let svc = common::seeded();
    let api = Client::new(svc);
    let admin = api.token("A1", &[Role::Admin]);
    let exported = api.get(&admin, "/export");
    assert_eq!(exported.status, 200);
    assert_eq!(exported.body, api.svc.export_catalogue().to_json_bytes());

    let target = Client::new(Olympus::in_memory(Config::default()));
    let target_admin = target.token("A1", &[Role::Admin]);
    let document: Value = serde_json::from_slice(&exported.body).unwrap();
    let hash = document["asset_manifest"][0]["content_hash"].as_str().unwrap().to_owned();
    let bytes = api.get(&admin, &format!("/assets/{hash}")).body;

    // Without the asset bytes the import is refused and nothing changes.
    let res = target.post(&target_admin, "/import", json!({"mode": "replace", "document": document}));
    expect_error(&res, 400, "validation");
    assert!(target.svc.list_templates().is_empty());

    let assets = json!({ hash.clone(): base64::engine::general_purpose::STANDARD.encode(&bytes) });
    let summary = expect(&target.post(&target_admin, "/import", json!({"mode": "replace", "document": document, "assets": assets})), 200);
    assert_eq!(summary["templates"], 6);
    assert_eq!(summary["masters"], 6);
    assert_eq!(target.get(&target_admin, "/export").body, exported.body);
    assert_eq!(target.get(&target_admin, &format!("/assets/{hash}")).body, bytes);

    let res = target.post(&target_admin, "/import", json!({"mode": "fail_on_conflict", "document": document}));
    let body = expect_error(&res, 409, "import_conflict");
    assert_eq!(body["details"]["entity"], "template");

    let mut future = document.clone();
    future["format_version"] = json!(2);
    expect_error(&target.post(&target_admin, "/import", json!({"mode": "replace", "document": future})), 400, "version_mismatch");

    let mut dangling = document.clone();
    dangling["drafts"][0]["claims"][0]["draft_id"] = json!("drf_missing");
    let body = expect_error(&target.post(&target_admin, "/import", json!({"mode": "replace", "document": dangling})), 400, "validation");
    assert!(body["message"].as_str().unwrap().contains("drf_missing"));
    assert_eq!(target.get(&target_admin, "/export").body, exported.body);
}

#[test]
fn asset_upload_paths() {
    let api = Client::new(Olympus::in_memory(Config {
        assets: olympus::assets::AssetPolicy { max_bytes: 64 },
        ..Config::deterministic()
    }));
    let worker = api.token("W1", &[Role::CrowdWorker]);
    let pdf = b"%PDF-1.4 tiny leaflet".to_vec();
    let store = |body: Vec<u8>, media: &str| api.send(ApiRequest::new("POST", "/assets").bearer(&worker).raw(body, media));

    let first = expect(&store(pdf.clone(), "application/pdf"), 201);
    let second = expect(&store(pdf.clone(), "application/pdf; charset=binary"), 201);
    assert_eq!(first, second);
    let fetched = api.get(&worker, &format!("/assets/{}", first["content_hash"].as_str().unwrap()));
    assert_eq!(fetched.status, 200);
    assert_eq!(fetched.content_type, "application/pdf");
    assert_eq!(fetched.body, pdf);

    expect_error(&store(b"MZ".to_vec(), "application/x-msdownload"), 415, "unsupported_media");
    expect_error(&store(vec![0; 65], "image/png"), 413, "oversize_asset");
    expect_error(&api.get(&worker, &format!("/assets/{}", "0".repeat(64))), 404, "not_found");
}

#[test]
fn evidence_with_inline_upload_and_stored_hash() {
    let api = Client::new(Olympus::in_memory(Config::deterministic()));
    let admin = api.token("A1", &[Role::Admin]);
    let worker = api.token("W1", &[Role::CrowdWorker]);
    let t = expect(&api.post(&admin, "/templates", json!({"name": "Fitbit"})), 201);
    let draft = expect(&api.post(&worker, "/drafts", json!({"template_id": t["id"]})), 201);
    let draft_id = draft["id"].as_str().unwrap();
    let claim = expect(&api.post(&worker, &format!("/drafts/{draft_id}/claims"), json!({"feature_key": "water-resistance", "value": " TRUE "})), 201);
    assert_eq!(claim["value"], "true");
    let claim_path = format!("/claims/{}/evidence", claim["id"].as_str().unwrap());

    // A timestamped promo video needs bytes or an external link.
    let video = json!({"source_kind": "promo_video", "locator": {"variant": "video_timestamp", "seconds": 42}});
    expect_error(&api.post(&worker, &claim_path, video.clone()), 400, "validation");

    let mut upload = video.clone();
    upload["asset"] = json!({"media_type": "video/mp4", "data_base64": base64::engine::general_purpose::STANDARD.encode(b"\x00\x00\x00\x18ftypmp42")});
    let evidence = expect(&api.post(&worker, &claim_path, upload), 201);
    let hash = evidence["asset"]["content_hash"].as_str().unwrap();
    assert_eq!(evidence["locator"]["seconds"], 42.0);

    let mut reuse = video.clone();
    reuse["asset_hash"] = json!(hash);
    let again = expect(&api.post(&worker, &claim_path, reuse), 201);
    assert_eq!(again["asset"], evidence["asset"]);

    let mut linked = video;
    linked["link"] = json!("https://video.example.com/fitbit#t=42");
    expect(&api.post(&worker, &claim_path, linked), 201);

    let mut unknown = page_evidence();
    unknown["asset_hash"] = json!("f".repeat(64));
    expect_error(&api.post(&worker, &claim_path, unknown), 404, "not_found");

    let draft = expect(&api.get(&worker, &format!("/drafts/{draft_id}")), 200);
    assert_eq!(draft["claims"][0]["evidence"].as_array().unwrap().len(), 3);
}

#[test]
fn investigation_errors_map_to_codes() {
    let api = Client::new(Olympus::in_memory(Config::deterministic()));
    let admin = api.token("A1", &[Role::Admin]);
    let worker = api.token("W1", &[Role::CrowdWorker]);
    let other = api.token("W2", &[Role::CrowdWorker]);
    let t = expect(&api.post(&admin, "/templates", json!({"name": "Fitbit"})), 201);
    expect_error(&api.post(&admin, "/templates", json!({"name": " fitbit "})), 409, "duplicate_name");
    expect_error(&api.post(&admin, "/templates", json!({"name": "  "})), 400, "validation");
    expect_error(&api.post(&worker, "/drafts", json!({"template_id": "tpl_nope"})), 404, "not_found");

    let draft = expect(&api.post(&worker, "/drafts", json!({"template_id": t["id"]})), 201);
    let draft_id = draft["id"].as_str().unwrap();
    let claims = format!("/drafts/{draft_id}/claims");
    expect_error(&api.post(&worker, "/drafts", json!({"template_id": t["id"]})), 409, "conflict");
    expect_error(&api.post(&worker, &claims, json!({"feature_key": "teleportation", "value": "yes"})), 400, "unknown_feature");
    expect_error(&api.post(&worker, &claims, json!({"feature_key": "battery-life", "value": "long"})), 400, "invalid_value");
    expect_error(&api.post(&worker, &format!("/drafts/{draft_id}/submit"), json!({})), 422, "empty_draft");

    expect(&api.post(&worker, &claims, json!({"feature_key": "connectivity", "value": "bluetooth"})), 201);
    expect_error(&api.post(&worker, &claims, json!({"feature_key": "connectivity", "value": " BLUETOOTH "})), 409, "duplicate_claim");
    let stale = api.post(&worker, &claims, json!({"feature_key": "connectivity", "value": "NFC", "expected_version": 0}));
    let body = expect_error(&stale, 409, "version_conflict");
    assert_eq!(body["details"]["retryable"], true);
    assert_eq!(body["details"]["actual"], 1);
    expect_error(&api.post(&other, &claims, json!({"feature_key": "connectivity", "value": "NFC"})), 403, "not_owner");
    expect_error(&api.get(&other, &format!("/drafts/{draft_id}")), 403, "not_owner");

    let body = expect_error(&api.post(&worker, &format!("/drafts/{draft_id}/submit"), json!({})), 422, "missing_evidence");
    assert_eq!(body["details"]["claims"].as_array().unwrap().len(), 1);

    let custom = json!({"display_name": "Water Resistance", "value_kind": "boolean", "multiplicity": "single"});
    let body = expect_error(&api.post(&worker, "/features", custom), 409, "duplicate_key");
    assert_eq!(body["details"]["origin"], "builtin");
    expect_error(&api.post(&worker, "/features", json!({"display_name": "Hub"})), 400, "validation");
    expect_error(&api.send(ApiRequest::new("POST", "/templates").bearer(&admin).raw(b"{not json".to_vec(), "application/json")), 400, "validation");
}

#[test]
fn merge_and_comparison_errors_map_to_codes() {
    let api = Client::new(Olympus::in_memory(Config::deterministic()));
    let admin = api.token("A1", &[Role::Admin]);
    let outsider = api.token("A2", &[Role::Admin]);
    let student = api.token("S1", &[Role::Student]);
    let workers = [api.token("W1", &[Role::CrowdWorker]), api.token("W2", &[Role::CrowdWorker])];
    let t = expect(&api.post(&admin, "/templates", json!({"name": "Fitbit"})), 201);
    let tid = t["id"].as_str().unwrap().to_owned();
    expect_error(&api.post(&admin, "/merge-sessions", json!({"template_id": tid})), 422, "too_few_drafts");

    for (worker, display) in workers.iter().zip(["OLED", "LCD"]) {
        let draft = expect(&api.post(worker, "/drafts", json!({"template_id": tid})), 201);
        let draft_id = draft["id"].as_str().unwrap();
        for (key, value) in [("connectivity", "Bluetooth"), ("display", display)] {
            let claim = expect(&api.post(worker, &format!("/drafts/{draft_id}/claims"), json!({"feature_key": key, "value": value})), 201);
            expect(&api.post(worker, &format!("/claims/{}/evidence", claim["id"].as_str().unwrap()), page_evidence()), 201);
        }
        expect(&api.post(worker, &format!("/drafts/{draft_id}/submit"), json!({})), 200);
    }

    let session = expect(&api.post(&admin, "/merge-sessions", json!({"template_id": tid})), 201);
    let sid = session["id"].as_str().unwrap();
    expect_error(&api.post(&admin, "/merge-sessions", json!({"template_id": tid})), 409, "conflict");
    let groups = session["groups"].as_array().unwrap();
    let find = |value: &str| groups.iter().find(|g| g["value"] == value).unwrap().clone();
    let bluetooth = find("Bluetooth");
    assert_eq!(bluetooth["classification"], "competing");
    let decisions = format!("/merge-sessions/{sid}/decisions");
    let finalize = format!("/merge-sessions/{sid}/finalize");

    expect_error(&api.post(&admin, &finalize, json!({})), 422, "undecided_groups");
    expect_error(&api.post(&admin, &decisions, json!({"group_id": bluetooth["group_id"], "action": {"type": "keep"}})), 422, "illegal_action");
    expect_error(
        &api.post(&admin, &decisions, json!({"group_id": bluetooth["group_id"], "action": {"type": "select_evidence", "chosen": ["evd_nope"]}})),
        422,
        "unknown_evidence",
    );
    expect_error(&api.post(&outsider, &decisions, json!({"group_id": bluetooth["group_id"], "action": {"type": "remove"}})), 403, "not_participant");
    let chosen = bluetooth["claims"][0]["evidence"][0]["id"].clone();
    let decided = expect(
        &api.post(&admin, &decisions, json!({"group_id": bluetooth["group_id"], "action": {"type": "select_evidence", "chosen": [chosen]}, "expected_version": 0})),
        200,
    );
    assert_eq!(decided["version"], 1);
    expect_error(&api.post(&admin, &decisions, json!({"group_id": bluetooth["group_id"], "action": {"type": "remove"}, "expected_version": 0})), 409, "version_conflict");

    // Two display values survive: single-valued conflict until one goes.
    let body = expect_error(&api.post(&admin, &finalize, json!({})), 422, "single_value_conflict");
    assert_eq!(body["details"]["conflicts"][0]["feature_key"], "display");
    expect(&api.post(&admin, &decisions, json!({"group_id": find("LCD")["group_id"], "action": {"type": "remove"}})), 200);
    let master = expect(&api.post(&admin, &finalize, json!({})), 200);
    assert_eq!(master["entries"].as_array().unwrap().len(), 2);
    expect_error(&api.post(&admin, &finalize, json!({})), 409, "session_closed");
    expect_error(&api.post(&workers[0], "/drafts", json!({"template_id": tid})), 409, "template_merged");

    let other = expect(&api.post(&admin, "/templates", json!({"name": "Beddit"})), 201);
    let oid = other["id"].as_str().unwrap();
    expect_error(&api.get(&student, &format!("/compare?products={tid}")), 422, "too_few_products");
    expect_error(&api.get(&student, &format!("/compare?products={tid},{oid}")), 422, "unmerged_product");
    expect_error(&api.get(&student, &format!("/compare?products={tid},tpl_ghost")), 422, "unknown_product");
    expect_error(&api.get(&student, &format!("/compare?products={tid},{tid}")), 400, "validation");
    expect_error(&api.get(&student, &format!("/compare/diff?a={tid}")), 400, "validation");
    expect_error(&api.get(&student, &format!("/compare?products={tid},{oid}&format=xml")), 422, "unmerged_product");

    expect_error(&api.get(&student, "/polls/pol_empty/consensus"), 422, "no_rankings");
    expect(&api.post(&student, "/polls/pol_a/rankings", json!({"ordered_products": [tid, oid]})), 201);
    expect_error(&api.post(&student, "/polls/pol_a/rankings", json!({"ordered_products": [tid]})), 422, "incomplete_permutation");
    expect_error(&api.post(&student, "/polls/pol_a/rankings", json!({"ordered_products": [tid, tid]})), 422, "incomplete_permutation");
}

#[test]
fn unknown_routes_and_methods() {
    let api = Client::new(Olympus::in_memory(Config::default()));
    let admin = api.token("A1", &[Role::Admin]);
    let res = api.send(ApiRequest::new("DELETE", "/templates").bearer(&admin));
    expect_error(&res, 405, "method_not_allowed");
    let res = api.get(&admin, "/nothing/here");
    expect_error(&res, 404, "not_found");
    let res = api.send(ApiRequest::new("GET", "/templates"));
    expect_error(&res, 401, "unauthenticated");
}

#[test]
fn feature_listing_filters_by_origin() {
    let api = Client::new(Olympus::in_memory(Config::default()));
    let worker = api.token("W1", &[Role::CrowdWorker]);
    let def = json!({"display_name": "Hub Required", "value_kind": "boolean", "multiplicity": "single"});
    expect(&api.post(&worker, "/features", def), 201);
    let custom = expect(&api.get(&worker, "/features?origin=custom"), 200);
    assert_eq!(custom, json!([api.svc.list_features(Some(olympus::model::Origin::Custom))[0]]));
    assert_eq!(expect(&api.get(&worker, "/features?origin=builtin"), 200).as_array().unwrap().len(), 12);
    let all = expect(&api.get(&worker, "/features"), 200);
    let keys: Vec<&str> = all.as_array().unwrap().iter().map(|d| d["key"].as_str().unwrap()).collect();
    let mut sorted = keys.clone();
    sorted.sort();
    assert_eq!(keys, sorted);
    expect_error(&api.get(&worker, "/features?origin=alien"), 400, "validation");
}
