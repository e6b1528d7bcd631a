// SPDX-License-Identifier: Apache-2.0

//! Transport-independent request dispatcher.
//!
//! [`handle`] turns an [`ApiRequest`] into an [`ApiResponse`]. The axum
//! server and the C ABI are thin adapters over it, which is also what makes
//! the role matrix testable without sockets.

use std::collections::BTreeMap;

use base64::Engine as _;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::ids::{ClaimId, DraftId, GroupId, PollId, SessionId, TemplateId, UserId};
use crate::investigation::{AssetInput, EvidenceInput};
use crate::merge::MergeAction;
use crate::model::{Multiplicity, Origin, Role, UserRef, ValueKind};
use crate::persistence::{CatalogueDocument, ImportMode};
use crate::service::Olympus;

const JSON: &str = "application/json";

#[derive(Clone, Debug, Default)]
pub struct ApiRequest {
    pub method: String,
    pub path: String,
    /// Raw query string without the leading `?`.
    pub query: String,
    pub bearer: Option<String>,
    pub content_type: Option<String>,
    pub body: Vec<u8>,
}

impl ApiRequest {
    /// `target` may carry a query string, as in `/compare?products=a,b`.
    pub fn new(method: &str, target: &str) -> Self {
        let (path, query) = target.split_once('?').unwrap_or((target, ""));
        ApiRequest {
            method: method.to_ascii_uppercase(),
            path: path.to_owned(),
            query: query.to_owned(),
            ..ApiRequest::default()
        }
    }

    pub fn bearer(mut self, token: &str) -> Self {
        self.bearer = Some(token.to_owned());
        self
    }

    pub fn json(mut self, body: &Value) -> Self {
        self.body = serde_json::to_vec(body).expect("json value serializes");
        self.content_type = Some(JSON.to_owned());
        self
    }

    pub fn raw(mut self, body: impl Into<Vec<u8>>, content_type: &str) -> Self {
        self.body = body.into();
        self.content_type = Some(content_type.to_owned());
        self
    }

    fn query_values(&self, name: &str) -> Vec<String> {
        url::form_urlencoded::parse(self.query.as_bytes())
            .filter(|(k, _)| k == name)
            .map(|(_, v)| v.into_owned())
            .collect()
    }

    fn query_one(&self, name: &str) -> Option<String> {
        self.query_values(name).into_iter().next()
    }

    /// Comma-separated and repeated parameters both accumulate.
    fn query_list(&self, name: &str) -> Vec<String> {
        self.query_values(name)
            .iter()
            .flat_map(|v| v.split(','))
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(str::to_owned)
            .collect()
    }

    fn parse<T: DeserializeOwned>(&self) -> Result<T> {
        let body: &[u8] = if self.body.iter().all(u8::is_ascii_whitespace) {
            b"{}"
        } else {
            &self.body
        };
        serde_json::from_slice(body).map_err(|e| Error::validation("body", e.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ApiResponse {
    pub status: u16,
    pub content_type: String,
    pub body: Vec<u8>,
}

impl ApiResponse {
    fn json<T: Serialize>(status: u16, value: &T) -> Self {
        ApiResponse {
            status,
            content_type: JSON.to_owned(),
            body: serde_json::to_vec(value).expect("response serializes"),
        }
    }

    fn bytes(status: u16, content_type: &str, body: Vec<u8>) -> Self {
        ApiResponse {
            status,
            content_type: content_type.to_owned(),
            body,
        }
    }

    pub fn error(err: &Error) -> Self {
        ApiResponse::json(err.http_status(), &err.to_body())
    }

    /// Parses the body as JSON. Panics on non-JSON bodies; meant for tests.
    pub fn json_body(&self) -> Value {
        serde_json::from_slice(&self.body).expect("response body is JSON")
    }

    /// The `code` field of an error body, if this is one.
    pub fn error_code(&self) -> Option<String> {
        if self.status < 400 {
            return None;
        }
        serde_json::from_slice::<Value>(&self.body)
            .ok()
            .and_then(|v| v.get("code").and_then(Value::as_str).map(str::to_owned))
    }
}

/// Every route the API serves, used for 405 detection and by the role
/// matrix tests.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Route {
    CreateTemplate,
    ListTemplates,
    UpdateTemplate,
    GetMaster,
    DefineFeature,
    ListFeatures,
    OpenDraft,
    GetDraft,
    AddClaim,
    AttachEvidence,
    SubmitDraft,
    OpenMergeSession,
    GetMergeSession,
    DecideGroup,
    Finalize,
    Compare,
    CompareDiff,
    ComparePrompts,
    SubmitRanking,
    Consensus,
    Export,
    Import,
    StoreAsset,
    FetchAsset,
}

impl Route {
    /// Role required to call the route, or `None` for any signed-in user.
    /// POST /features depends on the requested origin and is resolved in
    /// the handler.
    pub fn required_role(self) -> Option<Role> {
        use Route::*;
        match self {
            CreateTemplate | UpdateTemplate | OpenMergeSession | GetMergeSession | DecideGroup
            | Finalize | Export | Import => Some(Role::Admin),
            OpenDraft | AddClaim | AttachEvidence | SubmitDraft | StoreAsset => Some(Role::CrowdWorker),
            Compare | CompareDiff | ComparePrompts | SubmitRanking | Consensus => Some(Role::Student),
            ListTemplates | GetMaster | ListFeatures | FetchAsset | GetDraft | DefineFeature => None,
        }
    }
}

/// Resolves method and path to a route plus its path parameter.
fn route(method: &str, path: &str) -> std::result::Result<(Route, Option<String>), bool> {
    let segments: Vec<&str> = path.trim_matches('/').split('/').collect();
    let (found, param): (Vec<(&str, Route)>, Option<String>) = match segments.as_slice() {
        ["templates"] => (vec![("POST", Route::CreateTemplate), ("GET", Route::ListTemplates)], None),
        ["templates", id] => (vec![("PATCH", Route::UpdateTemplate)], Some(id.to_string())),
        ["templates", id, "master"] => (vec![("GET", Route::GetMaster)], Some(id.to_string())),
        ["features"] => (vec![("POST", Route::DefineFeature), ("GET", Route::ListFeatures)], None),
        ["drafts"] => (vec![("POST", Route::OpenDraft)], None),
        ["drafts", id] => (vec![("GET", Route::GetDraft)], Some(id.to_string())),
        ["drafts", id, "claims"] => (vec![("POST", Route::AddClaim)], Some(id.to_string())),
        ["drafts", id, "submit"] => (vec![("POST", Route::SubmitDraft)], Some(id.to_string())),
        ["claims", id, "evidence"] => (vec![("POST", Route::AttachEvidence)], Some(id.to_string())),
        ["merge-sessions"] => (vec![("POST", Route::OpenMergeSession)], None),
        ["merge-sessions", id] => (vec![("GET", Route::GetMergeSession)], Some(id.to_string())),
        ["merge-sessions", id, "decisions"] => (vec![("POST", Route::DecideGroup)], Some(id.to_string())),
        ["merge-sessions", id, "finalize"] => (vec![("POST", Route::Finalize)], Some(id.to_string())),
        ["compare"] => (vec![("GET", Route::Compare)], None),
        ["compare", "diff"] => (vec![("GET", Route::CompareDiff)], None),
        ["compare", "prompts"] => (vec![("GET", Route::ComparePrompts)], None),
        ["polls", id, "rankings"] => (vec![("POST", Route::SubmitRanking)], Some(id.to_string())),
        ["polls", id, "consensus"] => (vec![("GET", Route::Consensus)], Some(id.to_string())),
        ["export"] => (vec![("GET", Route::Export)], None),
        ["import"] => (vec![("POST", Route::Import)], None),
        ["assets"] => (vec![("POST", Route::StoreAsset)], None),
        ["assets", hash] => (vec![("GET", Route::FetchAsset)], Some(hash.to_string())),
        _ => return Err(false),
    };
    if param.as_deref() == Some("") {
        return Err(false);
    }
    found
        .into_iter()
        .find(|(m, _)| *m == method)
        .map(|(_, r)| (r, param))
        .ok_or(true)
}

/// Dispatches one request.
pub fn handle(svc: &Olympus, req: &ApiRequest) -> ApiResponse {
    let (route, param) = match route(&req.method, &req.path) {
        Ok(found) => found,
        Err(known_path) => {
            let (status, code) = if known_path {
                (405, "method_not_allowed")
            } else {
                (404, "not_found")
            };
            return ApiResponse::json(
                status,
                &serde_json::json!({
                    "code": code,
                    "message": format!("no route for {} {}", req.method, req.path),
                    "details": { "method": req.method, "path": req.path },
                }),
            );
        }
    };
    let outcome = authenticate(svc, req).and_then(|user| {
        if let Some(role) = route.required_role() {
            user.require(role)?;
        }
        dispatch(svc, req, route, param.unwrap_or_default(), &user)
    });
    outcome.unwrap_or_else(|err| ApiResponse::error(&err))
}

fn authenticate(svc: &Olympus, req: &ApiRequest) -> Result<UserRef> {
    match req.bearer.as_deref().map(str::trim) {
        Some(token) if !token.is_empty() => svc.authenticate(token),
        _ => Err(Error::Unauthenticated),
    }
}

#[derive(Deserialize)]
struct NewTemplate {
    name: String,
    #[serde(default)]
    description: String,
    #[serde(default)]
    brand: String,
}

#[derive(Deserialize)]
struct TemplatePatch {
    name: Option<String>,
    description: Option<String>,
    brand: Option<String>,
}

#[derive(Deserialize)]
struct NewFeature {
    display_name: String,
    value_kind: ValueKind,
    #[serde(default)]
    choices: Option<Vec<String>>,
    multiplicity: Multiplicity,
    #[serde(default = "custom_origin")]
    origin: Origin,
}

fn custom_origin() -> Origin {
    Origin::Custom
}

#[derive(Deserialize)]
struct NewDraft {
    template_id: TemplateId,
}

#[derive(Deserialize)]
struct NewClaim {
    feature_key: String,
    value: String,
    expected_version: Option<u64>,
}

#[derive(Deserialize)]
struct InlineAsset {
    media_type: String,
    data_base64: String,
}

#[derive(Deserialize)]
struct NewEvidence {
    #[serde(flatten)]
    input: EvidenceInput,
    asset: Option<InlineAsset>,
    asset_hash: Option<String>,
    expected_version: Option<u64>,
}

#[derive(Deserialize, Default)]
struct Versioned {
    expected_version: Option<u64>,
}

#[derive(Deserialize)]
struct NewSession {
    template_id: TemplateId,
    #[serde(default)]
    participants: Vec<UserId>,
}

#[derive(Deserialize)]
struct NewDecision {
    group_id: GroupId,
    action: MergeAction,
    expected_version: Option<u64>,
}

#[derive(Deserialize)]
struct NewRanking {
    ordered_products: Vec<TemplateId>,
    criterion: Option<String>,
}

#[derive(Deserialize)]
struct ImportRequest {
    mode: ImportMode,
    document: Value,
    #[serde(default)]
    assets: BTreeMap<String, String>,
}

fn decode_base64(field: &str, data: &str) -> Result<Vec<u8>> {
    base64::engine::general_purpose::STANDARD
        .decode(data.trim())
        .map_err(|e| Error::validation(field, e.to_string()))
}

fn products(req: &ApiRequest) -> Vec<TemplateId> {
    req.query_list("products").into_iter().map(TemplateId::from).collect()
}

fn required_query(req: &ApiRequest, name: &str) -> Result<String> {
    req.query_one(name)
        .filter(|v| !v.trim().is_empty())
        .ok_or_else(|| Error::validation(name, "query parameter is required"))
}

fn ok<T: Serialize>(value: &T) -> Result<ApiResponse> {
    Ok(ApiResponse::json(200, value))
}

fn created<T: Serialize>(value: &T) -> Result<ApiResponse> {
    Ok(ApiResponse::json(201, value))
}

fn dispatch(svc: &Olympus, req: &ApiRequest, route: Route, param: String, user: &UserRef) -> Result<ApiResponse> {
    use Route::*;
    match route {
        CreateTemplate => {
            let body: NewTemplate = req.parse()?;
            created(&svc.create_product_template(&body.name, &body.description, &body.brand, user)?)
        }
        ListTemplates => ok(&svc.list_templates()),
        UpdateTemplate => {
            let body: TemplatePatch = req.parse()?;
            ok(&svc.update_template(
                &TemplateId::from(param),
                body.name.as_deref(),
                body.description.as_deref(),
                body.brand.as_deref(),
                user,
            )?)
        }
        GetMaster => ok(&svc.get_master(&TemplateId::from(param))?),
        DefineFeature => {
            // The role depends on the origin asked for, so check it before
            // the rest of the body is validated.
            let origin = serde_json::from_slice::<Value>(&req.body)
                .ok()
                .and_then(|v| v.get("origin").and_then(Value::as_str).map(str::to_owned));
            match origin.as_deref() {
                Some("builtin") => user.require(Role::Admin)?,
                _ => user.require(Role::CrowdWorker)?,
            }
            let body: NewFeature = req.parse()?;
            let def = match body.origin {
                Origin::Builtin => {
                    svc.define_builtin_feature(&body.display_name, body.value_kind, body.choices, body.multiplicity, user)?
                }
                Origin::Custom => {
                    svc.create_custom_feature(&body.display_name, body.value_kind, body.choices, body.multiplicity, user)?
                }
            };
            created(&def)
        }
        ListFeatures => {
            let filter = match req.query_one("origin").as_deref() {
                None | Some("") => None,
                Some("builtin") => Some(Origin::Builtin),
                Some("custom") => Some(Origin::Custom),
                Some(other) => return Err(Error::validation("origin", format!("unknown origin {other:?}"))),
            };
            ok(&svc.list_features(filter))
        }
        OpenDraft => {
            let body: NewDraft = req.parse()?;
            created(&svc.open_draft(&body.template_id, user)?)
        }
        GetDraft => ok(&svc.get_draft(&DraftId::from(param), user)?),
        AddClaim => {
            let body: NewClaim = req.parse()?;
            created(&svc.add_claim(&DraftId::from(param), &body.feature_key, &body.value, user, body.expected_version)?)
        }
        AttachEvidence => {
            let body: NewEvidence = req.parse()?;
            let mut input = body.input;
            input.asset = match (body.asset, body.asset_hash) {
                (Some(_), Some(_)) => {
                    return Err(Error::validation("asset", "give either asset or asset_hash, not both"))
                }
                (Some(inline), None) => Some(AssetInput::Upload {
                    bytes: decode_base64("asset.data_base64", &inline.data_base64)?,
                    media_type: inline.media_type,
                }),
                (None, Some(content_hash)) => Some(AssetInput::Stored { content_hash }),
                (None, None) => None,
            };
            created(&svc.attach_evidence(&ClaimId::from(param), input, user, body.expected_version)?)
        }
        SubmitDraft => {
            let body: Versioned = req.parse()?;
            ok(&svc.submit_draft(&DraftId::from(param), user, body.expected_version)?)
        }
        OpenMergeSession => {
            let body: NewSession = req.parse()?;
            let participants = if body.participants.is_empty() {
                vec![user.id.clone()]
            } else {
                body.participants
            };
            created(&svc.open_merge_session(&body.template_id, &participants, user)?)
        }
        GetMergeSession => ok(&svc.get_merge_session(&SessionId::from(param), user)?),
        DecideGroup => {
            let body: NewDecision = req.parse()?;
            ok(&svc.decide_group(&SessionId::from(param), &body.group_id, body.action, user, body.expected_version)?)
        }
        Finalize => ok(&svc.finalize_master(&SessionId::from(param), user)?),
        Compare => {
            let matrix = svc.build_matrix(&products(req), user)?;
            match req.query_one("format").as_deref() {
                None | Some("") | Some("json") => ok(&matrix),
                Some("csv") => Ok(ApiResponse::bytes(200, "text/csv", matrix.to_delimited(b',')?.into_bytes())),
                Some("tsv") => Ok(ApiResponse::bytes(
                    200,
                    "text/tab-separated-values",
                    matrix.to_delimited(b'\t')?.into_bytes(),
                )),
                Some(other) => Err(Error::validation("format", format!("unknown format {other:?}"))),
            }
        }
        CompareDiff => {
            let a = TemplateId::from(required_query(req, "a")?);
            let b = TemplateId::from(required_query(req, "b")?);
            ok(&svc.diff_products(&a, &b, user)?)
        }
        ComparePrompts => ok(&svc.discussion_prompts(&products(req), user)?),
        SubmitRanking => {
            let body: NewRanking = req.parse()?;
            created(&svc.submit_ranking(&PollId::from(param), &body.ordered_products, body.criterion.as_deref(), user)?)
        }
        Consensus => ok(&svc.aggregate_rankings(&PollId::from(param), user)?),
        Export => Ok(ApiResponse::bytes(200, JSON, svc.export_catalogue().to_json_bytes())),
        Import => {
            let body: ImportRequest = req.parse()?;
            let document = serde_json::to_vec(&body.document).expect("value serializes");
            let document = CatalogueDocument::from_json(&document)?;
            let mut assets = BTreeMap::new();
            for (hash, data) in &body.assets {
                assets.insert(hash.clone(), decode_base64("assets", data)?);
            }
            ok(&svc.import_catalogue(document, body.mode, &assets)?)
        }
        StoreAsset => {
            let media_type = req
                .content_type
                .as_deref()
                .ok_or_else(|| Error::UnsupportedMedia { media_type: String::new() })?;
            created(&svc.store_asset(&req.body, media_type)?)
        }
        FetchAsset => {
            let (bytes, asset) = svc.fetch_asset(&param)?;
            Ok(ApiResponse::bytes(200, &asset.media_type, bytes))
        }
    }
}
