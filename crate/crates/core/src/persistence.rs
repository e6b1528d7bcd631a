// SPDX-License-Identifier: Apache-2.0

//! The interchange document and import/export.
//!
//! A [`CatalogueDocument`] is a complete, referentially consistent snapshot
//! of the platform. Every list is sorted by id, so exporting unchanged
//! state twice produces identical bytes. Asset bytes travel next to the
//! document, keyed by content hash.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::comparison::{check_permutation, Poll, Ranking};
use crate::error::{Error, Result};
use crate::ids::{ClaimId, EvidenceId, PollId, TemplateId, UserId};
use crate::investigation::validate_draft;
use crate::merge::{build_master, partition_claims, MasterProfile, MergeSession, SessionStatus};
use crate::model::{content_hash, AssetRef, DraftProfile, FeatureDefinition, ProductTemplate, TemplateStatus};
use crate::service::{Olympus, State};
use crate::storage::write_atomic;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CatalogueDocument {
    pub format_version: u32,
    pub features: Vec<FeatureDefinition>,
    pub templates: Vec<ProductTemplate>,
    pub drafts: Vec<DraftProfile>,
    #[serde(default)]
    pub merge_sessions: Vec<MergeSession>,
    pub masters: Vec<MasterProfile>,
    pub rankings: Vec<Ranking>,
    pub asset_manifest: Vec<AssetRef>,
}

impl CatalogueDocument {
    /// Pretty JSON with a trailing newline.
    pub fn to_json_bytes(&self) -> Vec<u8> {
        let mut bytes = serde_json::to_vec_pretty(self).expect("document serializes");
        bytes.push(b'\n');
        bytes
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        // Read the version first so an unknown format is reported as such
        // rather than as a shape error.
        #[derive(Deserialize)]
        struct Probe {
            format_version: u32,
        }
        let probe: Probe = serde_json::from_slice(bytes)
            .map_err(|e| Error::validation("document", e.to_string()))?;
        if probe.format_version != FORMAT_VERSION {
            return Err(Error::VersionMismatch {
                found: probe.format_version,
                expected: FORMAT_VERSION,
            });
        }
        serde_json::from_slice(bytes).map_err(|e| Error::validation("document", e.to_string()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImportMode {
    Replace,
    FailOnConflict,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImportSummary {
    pub features: usize,
    pub templates: usize,
    pub drafts: usize,
    pub claims: usize,
    pub merge_sessions: usize,
    pub masters: usize,
    pub rankings: usize,
    pub assets: usize,
}

impl std::fmt::Display for ImportSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "features: {}, templates: {}, drafts: {}, claims: {}, merge_sessions: {}, masters: {}, rankings: {}, assets: {}",
            self.features,
            self.templates,
            self.drafts,
            self.claims,
            self.merge_sessions,
            self.masters,
            self.rankings,
            self.assets
        )
    }
}

impl ImportSummary {
    fn of(doc: &CatalogueDocument) -> Self {
        ImportSummary {
            features: doc.features.len(),
            templates: doc.templates.len(),
            drafts: doc.drafts.len(),
            claims: doc.drafts.iter().map(|d| d.claims.len()).sum(),
            merge_sessions: doc.merge_sessions.len(),
            masters: doc.masters.len(),
            rankings: doc.rankings.len(),
            assets: doc.asset_manifest.len(),
        }
    }
}

fn invalid(field: &str, message: String) -> Error {
    Error::validation(field, message)
}

impl State {
    pub fn to_document(&self) -> CatalogueDocument {
        let mut rankings: Vec<Ranking> = self
            .polls
            .values()
            .flat_map(|p| p.rankings.values().cloned())
            .collect();
        rankings.sort_by(|a, b| (&a.poll_id, &a.student).cmp(&(&b.poll_id, &b.student)));
        CatalogueDocument {
            format_version: FORMAT_VERSION,
            features: self.features.values().cloned().collect(),
            templates: self.templates.values().cloned().collect(),
            drafts: self.drafts.values().cloned().collect(),
            merge_sessions: self.sessions.values().cloned().collect(),
            masters: self.masters.values().cloned().collect(),
            rankings,
            asset_manifest: self.assets.values().cloned().collect(),
        }
    }

    /// Rebuilds state from a document, checking every embedded invariant
    /// and cross-reference. Fails on the first violation.
    pub fn from_document(doc: CatalogueDocument) -> Result<Self> {
        if doc.format_version != FORMAT_VERSION {
            return Err(Error::VersionMismatch {
                found: doc.format_version,
                expected: FORMAT_VERSION,
            });
        }
        let mut state = State::default();

        for def in doc.features {
            def.validate()?;
            if state.features.contains_key(&def.key) {
                return Err(invalid("features", format!("duplicate feature key {}", def.key)));
            }
            state.features.insert(def.key.clone(), def);
        }

        for asset in doc.asset_manifest {
            asset.validate()?;
            if state.assets.contains_key(&asset.content_hash) {
                return Err(invalid("asset_manifest", format!("duplicate asset {}", asset.content_hash)));
            }
            state.assets.insert(asset.content_hash.clone(), asset);
        }

        let mut names = BTreeSet::new();
        for template in doc.templates {
            template.validate()?;
            if !names.insert(template.canonical_name()) {
                return Err(invalid("templates", format!("duplicate template name {:?}", template.name)));
            }
            if state.templates.contains_key(&template.id) {
                return Err(invalid("templates", format!("duplicate template id {}", template.id)));
            }
            state.templates.insert(template.id.clone(), template);
        }

        let mut claim_ids: BTreeSet<ClaimId> = BTreeSet::new();
        let mut evidence_ids: BTreeSet<EvidenceId> = BTreeSet::new();
        let mut authorship: BTreeSet<(TemplateId, UserId)> = BTreeSet::new();
        for draft in doc.drafts {
            if state.drafts.contains_key(&draft.id) {
                return Err(invalid("drafts", format!("duplicate draft id {}", draft.id)));
            }
            if !state.templates.contains_key(&draft.template_id) {
                return Err(invalid(
                    "drafts.template_id",
                    format!("draft {} references unknown template {}", draft.id, draft.template_id),
                ));
            }
            if !authorship.insert((draft.template_id.clone(), draft.worker.clone())) {
                return Err(invalid(
                    "drafts.worker",
                    format!("worker {} has two drafts for template {}", draft.worker, draft.template_id),
                ));
            }
            validate_draft(&state, &draft)?;
            for claim in &draft.claims {
                if !claim_ids.insert(claim.id.clone()) {
                    return Err(invalid("claims.id", format!("duplicate claim id {}", claim.id)));
                }
                for evidence in &claim.evidence {
                    if !evidence_ids.insert(evidence.id.clone()) {
                        return Err(invalid("evidence.id", format!("duplicate evidence id {}", evidence.id)));
                    }
                    if let Some(asset) = &evidence.asset {
                        if state.assets.get(&asset.content_hash) != Some(asset) {
                            return Err(invalid(
                                "evidence.asset",
                                format!("evidence {} references unknown asset {}", evidence.id, asset.content_hash),
                            ));
                        }
                    }
                }
            }
            state.drafts.insert(draft.id.clone(), draft);
        }

        let mut open_sessions = BTreeSet::new();
        for session in doc.merge_sessions {
            validate_session(&state, &session)?;
            if state.sessions.contains_key(&session.id) {
                return Err(invalid("merge_sessions", format!("duplicate session id {}", session.id)));
            }
            if session.status == SessionStatus::Open && !open_sessions.insert(session.template_id.clone()) {
                return Err(invalid(
                    "merge_sessions",
                    format!("template {} has two open merge sessions", session.template_id),
                ));
            }
            state.sessions.insert(session.id.clone(), session);
        }

        for master in doc.masters {
            let template = state.templates.get(&master.template_id).ok_or_else(|| {
                invalid("masters.template_id", format!("master references unknown template {}", master.template_id))
            })?;
            if template.status != TemplateStatus::Merged {
                return Err(invalid(
                    "masters.template_id",
                    format!("template {} has a master but is not merged", template.id),
                ));
            }
            let session = state.sessions.get(&master.provenance.session_id).ok_or_else(|| {
                invalid(
                    "masters.provenance",
                    format!("master references unknown merge session {}", master.provenance.session_id),
                )
            })?;
            if session.template_id != master.template_id || session.status != SessionStatus::Finalized {
                return Err(invalid(
                    "masters.provenance",
                    format!("session {} did not finalize template {}", session.id, master.template_id),
                ));
            }
            if build_master(session, &state.features)? != master {
                return Err(invalid(
                    "masters.entries",
                    format!("master of {} does not follow from session {}", master.template_id, session.id),
                ));
            }
            if state.masters.insert(master.template_id.clone(), master).is_some() {
                return Err(invalid("masters", "duplicate master".into()));
            }
        }
        for template in state.templates.values() {
            if template.status == TemplateStatus::Merged && !state.masters.contains_key(&template.id) {
                return Err(invalid(
                    "templates.status",
                    format!("template {} is merged but has no master", template.id),
                ));
            }
        }
        for session in state.sessions.values() {
            let finalized_here = state
                .masters
                .get(&session.template_id)
                .is_some_and(|m| m.provenance.session_id == session.id);
            if (session.status == SessionStatus::Finalized) != finalized_here {
                return Err(invalid(
                    "merge_sessions.status",
                    format!("session {} status disagrees with the masters", session.id),
                ));
            }
        }

        for ranking in doc.rankings {
            if let Some(stranger) = ranking.ordered_products.iter().find(|p| !state.templates.contains_key(*p)) {
                return Err(invalid(
                    "rankings.ordered_products",
                    format!("ranking references unknown template {stranger}"),
                ));
            }
            let poll = state.polls.entry(ranking.poll_id.clone()).or_insert_with(|| Poll {
                id: ranking.poll_id.clone(),
                criterion: ranking.criterion.clone(),
                products: ranking.ordered_products.iter().cloned().collect(),
                rankings: BTreeMap::new(),
            });
            check_permutation(&ranking.ordered_products, &poll.products)?;
            if ranking.criterion != poll.criterion {
                return Err(invalid(
                    "rankings.criterion",
                    format!("poll {} mixes criteria", ranking.poll_id),
                ));
            }
            if poll.rankings.insert(ranking.student.clone(), ranking.clone()).is_some() {
                return Err(invalid(
                    "rankings",
                    format!("student {} ranked poll {} twice", ranking.student, ranking.poll_id),
                ));
            }
        }

        Ok(state)
    }
}

fn validate_session(state: &State, session: &MergeSession) -> Result<()> {
    let field = "merge_sessions";
    if !state.templates.contains_key(&session.template_id) {
        return Err(invalid(
            field,
            format!("session {} references unknown template {}", session.id, session.template_id),
        ));
    }
    if session.participants.is_empty() {
        return Err(invalid(field, format!("session {} has no participants", session.id)));
    }
    let mut drafts = Vec::new();
    for id in &session.source_drafts {
        let draft = state
            .drafts
            .get(id)
            .ok_or_else(|| invalid(field, format!("session {} references unknown draft {id}", session.id)))?;
        if draft.template_id != session.template_id {
            return Err(invalid(field, format!("draft {id} belongs to another template")));
        }
        drafts.push(draft);
    }
    if partition_claims(drafts)? != session.groups {
        return Err(invalid(
            field,
            format!("session {} groups do not match its source drafts", session.id),
        ));
    }
    let mut latest = BTreeMap::new();
    for decision in &session.log {
        let group = session.group(&decision.group_id).ok_or_else(|| {
            invalid(field, format!("decision for unknown group {}", decision.group_id))
        })?;
        if decision.action.validated_for(group)? != decision.action {
            return Err(invalid(field, format!("decision for {} is not normalized", decision.group_id)));
        }
        latest.insert(decision.group_id.clone(), decision.clone());
    }
    if latest != session.decisions {
        return Err(invalid(
            field,
            format!("session {} decisions disagree with its log", session.id),
        ));
    }
    Ok(())
}

fn conflict_check(current: &State, doc: &CatalogueDocument) -> Result<()> {
    let collide = |entity: &'static str, id: &dyn std::fmt::Display| Error::ImportConflict {
        entity,
        id: id.to_string(),
    };
    for def in &doc.features {
        if current.features.get(&def.key).is_some_and(|d| d != def) {
            return Err(collide("feature", &def.key));
        }
    }
    for asset in &doc.asset_manifest {
        if current.assets.get(&asset.content_hash).is_some_and(|a| a != asset) {
            return Err(collide("asset", &asset.content_hash));
        }
    }
    for t in &doc.templates {
        if current.templates.contains_key(&t.id) {
            return Err(collide("template", &t.id));
        }
    }
    let claim_ids: BTreeSet<&ClaimId> = current
        .drafts
        .values()
        .flat_map(|d| d.claims.iter().map(|c| &c.id))
        .collect();
    for d in &doc.drafts {
        if current.drafts.contains_key(&d.id) {
            return Err(collide("draft", &d.id));
        }
        if let Some(c) = d.claims.iter().find(|c| claim_ids.contains(&c.id)) {
            return Err(collide("claim", &c.id));
        }
    }
    for s in &doc.merge_sessions {
        if current.sessions.contains_key(&s.id) {
            return Err(collide("merge session", &s.id));
        }
    }
    let polls: BTreeSet<&PollId> = doc.rankings.iter().map(|r| &r.poll_id).collect();
    if let Some(p) = polls.into_iter().find(|p| current.polls.contains_key(*p)) {
        return Err(collide("poll", p));
    }
    Ok(())
}

fn union(current: &State, doc: CatalogueDocument) -> CatalogueDocument {
    let mut merged = current.to_document();
    let dedup = |defs: &mut Vec<FeatureDefinition>| {
        let mut seen = BTreeSet::new();
        defs.retain(|d| seen.insert(d.key.clone()));
    };
    merged.features.extend(doc.features);
    dedup(&mut merged.features);
    merged.templates.extend(doc.templates);
    merged.drafts.extend(doc.drafts);
    merged.merge_sessions.extend(doc.merge_sessions);
    merged.masters.extend(doc.masters);
    merged.rankings.extend(doc.rankings);
    let mut seen = BTreeSet::new();
    merged.asset_manifest.extend(doc.asset_manifest);
    merged.asset_manifest.retain(|a| seen.insert(a.content_hash.clone()));
    merged
}

impl Olympus {
    /// Complete snapshot of committed state.
    pub fn export_catalogue(&self) -> CatalogueDocument {
        self.snapshot().to_document()
    }

    /// The document plus the bytes of every asset it references.
    pub fn export_bundle(&self) -> Result<(CatalogueDocument, BTreeMap<String, Vec<u8>>)> {
        let doc = self.export_catalogue();
        let mut assets = BTreeMap::new();
        for asset in &doc.asset_manifest {
            let (bytes, _) = self.fetch_asset(&asset.content_hash)?;
            assets.insert(asset.content_hash.clone(), bytes);
        }
        Ok((doc, assets))
    }

    /// Loads a document. `assets` supplies bytes for manifest entries not
    /// already in the store; every supplied blob must match its hash.
    pub fn import_catalogue(
        &self,
        doc: CatalogueDocument,
        mode: ImportMode,
        assets: &BTreeMap<String, Vec<u8>>,
    ) -> Result<ImportSummary> {
        let summary = ImportSummary::of(&doc);
        for (hash, bytes) in assets {
            if &content_hash(bytes) != hash {
                return Err(invalid("assets", format!("bytes supplied for {hash} do not match the hash")));
            }
        }
        for asset in &doc.asset_manifest {
            let present = assets.contains_key(&asset.content_hash)
                || self.storage().get_asset(&asset.content_hash)?.is_some();
            if !present {
                return Err(invalid(
                    "asset_manifest",
                    format!("no bytes for asset {}", asset.content_hash),
                ));
            }
            if let Some(bytes) = assets.get(&asset.content_hash) {
                if bytes.len() as u64 != asset.size_bytes {
                    return Err(invalid("asset_manifest", format!("size mismatch for {}", asset.content_hash)));
                }
            }
        }
        self.write(|tx| {
            let next = match mode {
                ImportMode::Replace => State::from_document(doc)?,
                ImportMode::FailOnConflict => {
                    // Validate the document alone first so its own errors
                    // are not reported as collisions.
                    State::from_document(doc.clone())?;
                    conflict_check(tx.state, &doc)?;
                    State::from_document(union(tx.state, doc))?
                }
            };
            for asset in next.assets.keys() {
                if let Some(bytes) = assets.get(asset) {
                    tx.storage.put_asset(asset, bytes)?;
                }
            }
            *tx.state = next;
            tx.observe_state_ids();
            Ok(summary)
        })
    }
}

/// File name of the document inside a bundle directory.
pub const DOCUMENT_FILE: &str = "catalogue.json";

/// Reads a bundle. `path` is either a bundle directory holding
/// `catalogue.json` and `assets/`, or the document file itself, in which
/// case assets are looked up in an `assets/` directory next to it.
pub fn read_bundle(path: &Path) -> Result<(CatalogueDocument, BTreeMap<String, Vec<u8>>)> {
    let file = if path.is_dir() { path.join(DOCUMENT_FILE) } else { path.to_path_buf() };
    let bytes = std::fs::read(&file).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::not_found("file", file.display()),
        _ => Error::from(e),
    })?;
    let doc = CatalogueDocument::from_json(&bytes)?;
    let asset_dir = file.parent().unwrap_or(Path::new(".")).join("assets");
    let mut assets = BTreeMap::new();
    for asset in &doc.asset_manifest {
        match std::fs::read(asset_dir.join(&asset.content_hash)) {
            Ok(bytes) => {
                assets.insert(asset.content_hash.clone(), bytes);
            }
            // Missing bytes may already be in the target store; import
            // decides.
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
            Err(e) => return Err(e.into()),
        }
    }
    Ok((doc, assets))
}

/// Writes `catalogue.json` and `assets/<hash>` under `dir`.
pub fn write_bundle(dir: &Path, doc: &CatalogueDocument, assets: &BTreeMap<String, Vec<u8>>) -> Result<()> {
    std::fs::create_dir_all(dir.join("assets"))?;
    write_atomic(&dir.join(DOCUMENT_FILE), &doc.to_json_bytes())?;
    for (hash, bytes) in assets {
        write_atomic(&dir.join("assets").join(hash), bytes)?;
    }
    Ok(())
}
