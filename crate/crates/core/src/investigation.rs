// SPDX-License-Identifier: Apache-2.0

//! Independent investigation: each crowd worker builds a private draft
//! profile of a product, one evidence-backed claim at a time.

use serde::{Deserialize, Serialize};

use crate::catalog::add_feature;
use crate::error::{Error, Result};
use crate::ids::{ClaimId, DraftId, EvidenceId, TemplateId, UserId};
use crate::model::{
    normalize_value, DraftProfile, DraftStatus, Evidence, EvidenceLocator, FeatureClaim,
    FeatureDefinition, Multiplicity, Origin, Role, SourceKind, TemplateStatus, UserRef, ValueKind,
};
use crate::service::{Olympus, State};

/// Asset accompanying a piece of evidence.
#[derive(Clone, Debug)]
pub enum AssetInput {
    /// Raw upload, stored content-addressed.
    Upload { bytes: Vec<u8>, media_type: String },
    /// Bytes already stored under this hash.
    Stored { content_hash: String },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EvidenceInput {
    pub source_kind: SourceKind,
    pub locator: EvidenceLocator,
    #[serde(skip)]
    pub asset: Option<AssetInput>,
    #[serde(default)]
    pub link: Option<String>,
    #[serde(default)]
    pub note: String,
}

impl EvidenceInput {
    pub fn new(source_kind: SourceKind, locator: EvidenceLocator) -> Self {
        EvidenceInput {
            source_kind,
            locator,
            asset: None,
            link: None,
            note: String::new(),
        }
    }

    pub fn with_upload(mut self, bytes: impl Into<Vec<u8>>, media_type: &str) -> Self {
        self.asset = Some(AssetInput::Upload {
            bytes: bytes.into(),
            media_type: media_type.to_owned(),
        });
        self
    }

    pub fn with_link(mut self, link: &str) -> Self {
        self.link = Some(link.to_owned());
        self
    }

    pub fn with_note(mut self, note: &str) -> Self {
        self.note = note.to_owned();
        self
    }
}

/// Resolves a draft the worker may write to.
fn writable_draft<'a>(
    state: &'a mut State,
    draft_id: &DraftId,
    worker: &UserId,
    expected_version: Option<u64>,
) -> Result<&'a mut DraftProfile> {
    let draft = state
        .drafts
        .get_mut(draft_id)
        .ok_or_else(|| Error::not_found("draft", draft_id))?;
    if &draft.worker != worker {
        return Err(Error::NotOwner {
            entity: "draft",
            id: draft_id.to_string(),
        });
    }
    if draft.is_submitted() {
        return Err(Error::state(format!("draft {draft_id} is already submitted")));
    }
    if let Some(expected) = expected_version {
        if expected != draft.version {
            return Err(Error::VersionConflict {
                entity: "draft",
                id: draft_id.to_string(),
                expected,
                actual: draft.version,
            });
        }
    }
    Ok(draft)
}

fn draft_of_claim(state: &State, claim_id: &ClaimId) -> Result<DraftId> {
    state
        .drafts
        .values()
        .find(|d| d.claim(claim_id).is_some())
        .map(|d| d.id.clone())
        .ok_or_else(|| Error::not_found("claim", claim_id))
}

impl Olympus {
    pub fn open_draft(&self, template_id: &TemplateId, worker: &UserRef) -> Result<DraftProfile> {
        worker.require(Role::CrowdWorker)?;
        self.write(|tx| {
            let template = tx.state.template(template_id)?;
            if template.status == TemplateStatus::Merged {
                return Err(Error::TemplateMerged {
                    template_id: template_id.to_string(),
                });
            }
            if let Some(existing) = tx
                .state
                .drafts
                .values()
                .find(|d| &d.template_id == template_id && d.worker == worker.id)
            {
                return Err(Error::Conflict {
                    message: format!(
                        "worker {} already has draft {} for template {template_id}",
                        worker.id, existing.id
                    ),
                    id: existing.id.to_string(),
                });
            }
            let draft = DraftProfile::new(
                tx.mint(DraftId::PREFIX),
                template_id.clone(),
                worker.id.clone(),
            );
            tx.state.drafts.insert(draft.id.clone(), draft.clone());
            Ok(draft)
        })
    }

    /// A draft as seen by `viewer`: owners always, admins once submitted.
    pub fn get_draft(&self, draft_id: &DraftId, viewer: &UserRef) -> Result<DraftProfile> {
        let state = self.snapshot();
        let draft = state.draft(draft_id)?;
        let visible = draft.worker == viewer.id || (draft.is_submitted() && viewer.has_role(Role::Admin));
        if !visible {
            return Err(Error::NotOwner {
                entity: "draft",
                id: draft_id.to_string(),
            });
        }
        Ok(draft.clone())
    }

    pub fn add_claim(
        &self,
        draft_id: &DraftId,
        feature_key: &str,
        value: &str,
        worker: &UserRef,
        expected_version: Option<u64>,
    ) -> Result<FeatureClaim> {
        worker.require(Role::CrowdWorker)?;
        self.write(|tx| {
            let definition = tx
                .state
                .features
                .get(feature_key)
                .cloned()
                .ok_or_else(|| Error::UnknownFeature {
                    key: feature_key.to_owned(),
                })?;
            let claim_id: ClaimId = tx.mint(ClaimId::PREFIX);
            let draft = writable_draft(tx.state, draft_id, &worker.id, expected_version)?;
            let claim =
                FeatureClaim::new(claim_id, &definition, value, worker.id.clone(), draft_id.clone())?;
            let key = claim.group_key();
            if draft.claims.iter().any(|c| c.group_key() == key) {
                return Err(Error::DuplicateClaim {
                    key: claim.feature_key,
                    value: claim.value,
                });
            }
            draft.claims.push(claim.clone());
            draft.version += 1;
            Ok(claim)
        })
    }

    pub fn create_custom_feature(
        &self,
        display_name: &str,
        value_kind: ValueKind,
        choices: Option<Vec<String>>,
        multiplicity: Multiplicity,
        worker: &UserRef,
    ) -> Result<FeatureDefinition> {
        worker.require(Role::CrowdWorker)?;
        let def = FeatureDefinition::new(
            display_name,
            value_kind,
            choices,
            multiplicity,
            Origin::Custom,
            Some(worker.id.clone()),
        )?;
        self.write(|tx| add_feature(tx.state, def))
    }

    pub fn attach_evidence(
        &self,
        claim_id: &ClaimId,
        input: EvidenceInput,
        worker: &UserRef,
        expected_version: Option<u64>,
    ) -> Result<Evidence> {
        worker.require(Role::CrowdWorker)?;
        self.write(|tx| {
            let draft_id = draft_of_claim(tx.state, claim_id)?;
            // Ownership and state before touching the asset store.
            writable_draft(tx.state, &draft_id, &worker.id, expected_version)?;
            input.locator.validate()?;
            let asset = match input.asset {
                None => None,
                Some(AssetInput::Upload { bytes, media_type }) => {
                    Some(tx.store_asset(&bytes, &media_type)?)
                }
                Some(AssetInput::Stored { content_hash }) => Some(
                    tx.state
                        .assets
                        .get(&content_hash)
                        .cloned()
                        .ok_or_else(|| Error::not_found("asset", &content_hash))?,
                ),
            };
            let evidence = Evidence::new(
                tx.mint(EvidenceId::PREFIX),
                input.source_kind,
                input.locator,
                asset,
                input.link,
                &input.note,
            )?;
            let draft = writable_draft(tx.state, &draft_id, &worker.id, None)?;
            let claim = draft
                .claims
                .iter_mut()
                .find(|c| &c.id == claim_id)
                .expect("claim located above");
            claim.evidence.push(evidence.clone());
            draft.version += 1;
            Ok(evidence)
        })
    }

    pub fn submit_draft(
        &self,
        draft_id: &DraftId,
        worker: &UserRef,
        expected_version: Option<u64>,
    ) -> Result<DraftProfile> {
        worker.require(Role::CrowdWorker)?;
        self.write(|tx| {
            let draft = writable_draft(tx.state, draft_id, &worker.id, expected_version)?;
            if draft.claims.is_empty() {
                return Err(Error::EmptyDraft {
                    draft_id: draft_id.to_string(),
                });
            }
            let missing = draft.unevidenced_claims();
            if !missing.is_empty() {
                return Err(Error::MissingEvidence {
                    claims: missing.iter().map(ToString::to_string).collect(),
                });
            }
            draft.status = DraftStatus::Submitted;
            draft.version += 1;
            Ok(draft.clone())
        })
    }
}

/// Checks a draft's claims against the catalog: kind-valid values, no
/// duplicate (key, normalized value) pairs, consistent back-references.
pub(crate) fn validate_draft(state: &State, draft: &DraftProfile) -> Result<()> {
    let mut seen = std::collections::BTreeSet::new();
    for claim in &draft.claims {
        if claim.draft_id != draft.id {
            return Err(Error::validation(
                "claims.draft_id",
                format!("claim {} references unknown draft {}", claim.id, claim.draft_id),
            ));
        }
        if claim.author != draft.worker {
            return Err(Error::validation(
                "claims.author",
                format!("claim {} is not authored by the draft's worker", claim.id),
            ));
        }
        let def = state
            .features
            .get(&claim.feature_key)
            .ok_or_else(|| Error::UnknownFeature {
                key: claim.feature_key.clone(),
            })?;
        if def.validate_value(&claim.value)? != claim.value {
            return Err(Error::validation(
                "claims.value",
                format!("claim {} value {:?} is not in stored form", claim.id, claim.value),
            ));
        }
        if !seen.insert((claim.feature_key.clone(), normalize_value(&claim.value))) {
            return Err(Error::DuplicateClaim {
                key: claim.feature_key.clone(),
                value: claim.value.clone(),
            });
        }
        for evidence in &claim.evidence {
            evidence.validate()?;
        }
    }
    if draft.is_submitted() {
        if draft.claims.is_empty() {
            return Err(Error::EmptyDraft {
                draft_id: draft.id.to_string(),
            });
        }
        let missing = draft.unevidenced_claims();
        if !missing.is_empty() {
            return Err(Error::MissingEvidence {
                claims: missing.iter().map(ToString::to_string).collect(),
            });
        }
    }
    Ok(())
}
