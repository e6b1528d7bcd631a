// SPDX-License-Identifier: Apache-2.0

//! Error type shared by every operation.
//!
//! Each variant maps to a stable machine-readable code (see [`Error::code`])
//! which is what the HTTP layer and the C ABI expose to clients.

use serde_json::{json, Value};

use crate::model::Role;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid {field}: {message}")]
    Validation { field: String, message: String },

    #[error("missing or unknown bearer token")]
    Unauthenticated,

    #[error("caller lacks the {required} role")]
    Forbidden { required: Role },

    #[error("{entity} {id} not found")]
    NotFound { entity: &'static str, id: String },

    #[error("a template named {existing_name:?} already exists ({existing_id})")]
    DuplicateName {
        existing_id: String,
        existing_name: String,
    },

    #[error("feature key {key:?} already defined by {existing_display_name:?} ({origin})")]
    DuplicateKey {
        key: String,
        existing_display_name: String,
        origin: String,
    },

    #[error("{message}")]
    Conflict { message: String, id: String },

    #[error("stale write on {entity} {id}: expected version {expected}, found {actual}")]
    VersionConflict {
        entity: &'static str,
        id: String,
        expected: u64,
        actual: u64,
    },

    #[error("{message}")]
    InvalidState { message: String },

    #[error("{entity} {id} is not owned by the caller")]
    NotOwner { entity: &'static str, id: String },

    #[error("unknown feature {key:?}")]
    UnknownFeature { key: String },

    #[error("value {value:?} is not valid for feature {key:?}: {reason}")]
    InvalidValue {
        key: String,
        value: String,
        reason: String,
    },

    #[error("draft already has a claim {key} = {value:?}")]
    DuplicateClaim { key: String, value: String },

    #[error("unsupported media type {media_type:?}")]
    UnsupportedMedia { media_type: String },

    #[error("asset of {size} bytes exceeds the {limit} byte limit")]
    OversizeAsset { size: u64, limit: u64 },

    #[error("draft {draft_id} has no claims")]
    EmptyDraft { draft_id: String },

    #[error("claims without evidence: {}", claims.join(", "))]
    MissingEvidence { claims: Vec<String> },

    #[error("merging needs at least {required} submitted drafts, found {found}")]
    TooFewDrafts { required: usize, found: usize },

    #[error("template {template_id} is already merged")]
    TemplateMerged { template_id: String },

    #[error("drafts belong to different templates: {}", templates.join(", "))]
    MixedTemplate { templates: Vec<String> },

    #[error("action {action} is not allowed on a {classification} group")]
    IllegalAction {
        action: String,
        classification: String,
    },

    #[error("evidence not present in group {group_id}: {}", evidence.join(", "))]
    UnknownEvidence {
        group_id: String,
        evidence: Vec<String>,
    },

    #[error("merge session {session_id} is finalized")]
    SessionClosed { session_id: String },

    #[error("user {user_id} is not a participant of merge session {session_id}")]
    NotParticipant { session_id: String, user_id: String },

    #[error("competing groups still undecided: {}", groups.join(", "))]
    UndecidedGroups { groups: Vec<String> },

    #[error("single-valued feature {feature_key:?} has {} surviving values", values.len())]
    SingleValueConflict {
        feature_key: String,
        values: Vec<String>,
        /// Every conflicting feature, including the first one named above.
        all: Vec<(String, Vec<String>)>,
    },

    #[error("comparison needs at least 2 products, got {found}")]
    TooFewProducts { found: usize },

    #[error("products without a finalized master profile: {}", products.join(", "))]
    UnmergedProduct { products: Vec<String> },

    #[error("ranking is not a complete permutation of the poll's products: {reason}")]
    IncompletePermutation { reason: String },

    #[error("unknown product {product}")]
    UnknownProduct { product: String },

    #[error("poll {poll_id} has no rankings")]
    NoRankings { poll_id: String },

    #[error("unsupported document format_version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("import collides with existing {entity} {id}")]
    ImportConflict { entity: &'static str, id: String },

    #[error("at least one role is required")]
    EmptyRoles,

    #[error("storage failure: {0}")]
    Storage(String),
}

impl Error {
    pub(crate) fn validation(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn state(message: impl Into<String>) -> Self {
        Error::InvalidState {
            message: message.into(),
        }
    }

    pub(crate) fn not_found(entity: &'static str, id: impl ToString) -> Self {
        Error::NotFound {
            entity,
            id: id.to_string(),
        }
    }

    /// Stable error name.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Validation { .. } => "validation",
            Error::Unauthenticated => "unauthenticated",
            Error::Forbidden { .. } => "forbidden",
            Error::NotFound { .. } => "not_found",
            Error::DuplicateName { .. } => "duplicate_name",
            Error::DuplicateKey { .. } => "duplicate_key",
            Error::Conflict { .. } => "conflict",
            Error::VersionConflict { .. } => "version_conflict",
            Error::InvalidState { .. } => "invalid_state",
            Error::NotOwner { .. } => "not_owner",
            Error::UnknownFeature { .. } => "unknown_feature",
            Error::InvalidValue { .. } => "invalid_value",
            Error::DuplicateClaim { .. } => "duplicate_claim",
            Error::UnsupportedMedia { .. } => "unsupported_media",
            Error::OversizeAsset { .. } => "oversize_asset",
            Error::EmptyDraft { .. } => "empty_draft",
            Error::MissingEvidence { .. } => "missing_evidence",
            Error::TooFewDrafts { .. } => "too_few_drafts",
            Error::TemplateMerged { .. } => "template_merged",
            Error::MixedTemplate { .. } => "mixed_template",
            Error::IllegalAction { .. } => "illegal_action",
            Error::UnknownEvidence { .. } => "unknown_evidence",
            Error::SessionClosed { .. } => "session_closed",
            Error::NotParticipant { .. } => "not_participant",
            Error::UndecidedGroups { .. } => "undecided_groups",
            Error::SingleValueConflict { .. } => "single_value_conflict",
            Error::TooFewProducts { .. } => "too_few_products",
            Error::UnmergedProduct { .. } => "unmerged_product",
            Error::IncompletePermutation { .. } => "incomplete_permutation",
            Error::UnknownProduct { .. } => "unknown_product",
            Error::NoRankings { .. } => "no_rankings",
            Error::VersionMismatch { .. } => "version_mismatch",
            Error::ImportConflict { .. } => "import_conflict",
            Error::EmptyRoles => "empty_roles",
            Error::Storage(_) => "storage",
        }
    }

    /// HTTP status the API answers with.
    pub fn http_status(&self) -> u16 {
        match self {
            Error::Validation { .. }
            | Error::InvalidValue { .. }
            | Error::UnknownFeature { .. }
            | Error::EmptyRoles
            | Error::VersionMismatch { .. } => 400,
            Error::Unauthenticated => 401,
            Error::Forbidden { .. } | Error::NotOwner { .. } | Error::NotParticipant { .. } => 403,
            Error::NotFound { .. } => 404,
            Error::DuplicateName { .. }
            | Error::DuplicateKey { .. }
            | Error::Conflict { .. }
            | Error::VersionConflict { .. }
            | Error::InvalidState { .. }
            | Error::DuplicateClaim { .. }
            | Error::TemplateMerged { .. }
            | Error::SessionClosed { .. }
            | Error::ImportConflict { .. } => 409,
            Error::OversizeAsset { .. } => 413,
            Error::UnsupportedMedia { .. } => 415,
            Error::EmptyDraft { .. }
            | Error::MissingEvidence { .. }
            | Error::TooFewDrafts { .. }
            | Error::MixedTemplate { .. }
            | Error::IllegalAction { .. }
            | Error::UnknownEvidence { .. }
            | Error::UndecidedGroups { .. }
            | Error::SingleValueConflict { .. }
            | Error::TooFewProducts { .. }
            | Error::UnmergedProduct { .. }
            | Error::IncompletePermutation { .. }
            | Error::UnknownProduct { .. }
            | Error::NoRankings { .. } => 422,
            Error::Storage(_) => 500,
        }
    }

    /// Whether the caller may simply retry after refreshing.
    pub fn is_retryable(&self) -> bool {
        matches!(self, Error::VersionConflict { .. })
    }

    /// Structured payload for the `details` field of error bodies.
    pub fn details(&self) -> Value {
        match self {
            Error::Validation { field, .. } => json!({ "field": field }),
            Error::Forbidden { required } => json!({ "required_role": required }),
            Error::NotFound { entity, id } => json!({ "entity": entity, "id": id }),
            Error::DuplicateName { existing_id, .. } => json!({ "existing_id": existing_id }),
            Error::DuplicateKey {
                key,
                existing_display_name,
                origin,
            } => json!({ "key": key, "existing_display_name": existing_display_name, "origin": origin }),
            Error::Conflict { id, .. } => json!({ "id": id }),
            Error::VersionConflict {
                entity,
                id,
                expected,
                actual,
            } => json!({ "entity": entity, "id": id, "expected": expected, "actual": actual, "retryable": true }),
            Error::NotOwner { entity, id } => json!({ "entity": entity, "id": id }),
            Error::UnknownFeature { key } => json!({ "feature_key": key }),
            Error::InvalidValue { key, value, .. } => json!({ "feature_key": key, "value": value }),
            Error::DuplicateClaim { key, value } => json!({ "feature_key": key, "value": value }),
            Error::UnsupportedMedia { media_type } => json!({ "media_type": media_type }),
            Error::OversizeAsset { size, limit } => json!({ "size": size, "limit": limit }),
            Error::EmptyDraft { draft_id } => json!({ "draft_id": draft_id }),
            Error::MissingEvidence { claims } => json!({ "claims": claims }),
            Error::TooFewDrafts { required, found } => json!({ "required": required, "found": found }),
            Error::TemplateMerged { template_id } => json!({ "template_id": template_id }),
            Error::MixedTemplate { templates } => json!({ "templates": templates }),
            Error::IllegalAction {
                action,
                classification,
            } => json!({ "action": action, "classification": classification }),
            Error::UnknownEvidence { group_id, evidence } => {
                json!({ "group_id": group_id, "evidence": evidence })
            }
            Error::SessionClosed { session_id } => json!({ "session_id": session_id }),
            Error::NotParticipant {
                session_id,
                user_id,
            } => json!({ "session_id": session_id, "user_id": user_id }),
            Error::UndecidedGroups { groups } => json!({ "groups": groups }),
            Error::SingleValueConflict { all, .. } => json!({
                "conflicts": all
                    .iter()
                    .map(|(key, values)| json!({ "feature_key": key, "values": values }))
                    .collect::<Vec<_>>()
            }),
            Error::TooFewProducts { found } => json!({ "found": found }),
            Error::UnmergedProduct { products } => json!({ "products": products }),
            Error::UnknownProduct { product } => json!({ "product": product }),
            Error::NoRankings { poll_id } => json!({ "poll_id": poll_id }),
            Error::VersionMismatch { found, expected } => json!({ "found": found, "expected": expected }),
            Error::ImportConflict { entity, id } => json!({ "entity": entity, "id": id }),
            Error::Unauthenticated
            | Error::InvalidState { .. }
            | Error::IncompletePermutation { .. }
            | Error::EmptyRoles
            | Error::Storage(_) => json!({}),
        }
    }

    /// The `{code, message, details}` body.
    pub fn to_body(&self) -> Value {
        json!({
            "code": self.code(),
            "message": self.to_string(),
            "details": self.details(),
        })
    }
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Storage(err.to_string())
    }
}
