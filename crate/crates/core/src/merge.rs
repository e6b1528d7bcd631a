// SPDX-License-Identifier: Apache-2.0

//! Group merging of submitted drafts into a master profile.
//!
//! Claims from every submitted draft are bucketed by (feature key,
//! normalized value). A bucket with a single author is *premerged*: it is
//! kept unless the team removes it. A bucket shared by two or more authors
//! is *competing*: the team must pick which of the offered evidence backs
//! the master entry. Once every competing group is decided the session can
//! be finalized into a [`MasterProfile`].

use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::ids::{DraftId, EvidenceId, GroupId, SessionId, TemplateId, UserId};
use crate::model::{
    normalize_value, DraftProfile, Evidence, FeatureClaim, FeatureDefinition, Multiplicity, Role,
    TemplateStatus, UserRef,
};
use crate::service::Olympus;

/// Minimum number of submitted drafts before a merge can open.
pub const MIN_DRAFTS_TO_MERGE: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    Premerged,
    Competing,
}

impl Classification {
    pub fn as_str(self) -> &'static str {
        match self {
            Classification::Premerged => "premerged",
            Classification::Competing => "competing",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClaimGroup {
    pub group_id: GroupId,
    pub feature_key: String,
    /// Display form: the spelling used by the lowest author id.
    pub value: String,
    pub claims: Vec<FeatureClaim>,
    pub classification: Classification,
}

impl ClaimGroup {
    pub fn authors(&self) -> Vec<UserId> {
        self.claims.iter().map(|c| c.author.clone()).collect()
    }

    pub fn evidence(&self) -> impl Iterator<Item = &Evidence> {
        self.claims.iter().flat_map(|c| c.evidence.iter())
    }

    pub fn has_evidence(&self, id: &EvidenceId) -> bool {
        self.evidence().any(|e| &e.id == id)
    }
}

/// Deterministic id of the group holding (`feature_key`, `value`).
pub fn group_id_for(feature_key: &str, value: &str) -> GroupId {
    let mut hasher = Sha256::new();
    hasher.update(feature_key.as_bytes());
    hasher.update([0x1f]);
    hasher.update(normalize_value(value).as_bytes());
    let digest = hex::encode(hasher.finalize());
    GroupId::new(format!("{}_{}", GroupId::PREFIX, &digest[..16]))
}

/// Buckets the claims of `drafts` into premerged and competing groups.
///
/// Pure: the result depends only on the set of drafts, not their order.
/// Groups come out sorted by feature key then normalized value.
pub fn partition_claims<'a>(
    drafts: impl IntoIterator<Item = &'a DraftProfile>,
) -> Result<Vec<ClaimGroup>> {
    let mut by_id: BTreeMap<&DraftId, &DraftProfile> = BTreeMap::new();
    for draft in drafts {
        by_id.insert(&draft.id, draft);
    }
    if by_id.is_empty() {
        return Err(Error::validation("drafts", "at least one draft is required"));
    }
    let templates: BTreeSet<&TemplateId> = by_id.values().map(|d| &d.template_id).collect();
    if templates.len() > 1 {
        return Err(Error::MixedTemplate {
            templates: templates.iter().map(ToString::to_string).collect(),
        });
    }
    let mut workers = BTreeSet::new();
    for draft in by_id.values() {
        if !draft.is_submitted() {
            return Err(Error::state(format!("draft {} is not submitted", draft.id)));
        }
        if !workers.insert(&draft.worker) {
            return Err(Error::validation(
                "drafts",
                format!("worker {} has more than one draft", draft.worker),
            ));
        }
    }

    let mut buckets: BTreeMap<(String, String), Vec<FeatureClaim>> = BTreeMap::new();
    for draft in by_id.values() {
        for claim in &draft.claims {
            buckets.entry(claim.group_key()).or_default().push(claim.clone());
        }
    }

    Ok(buckets
        .into_iter()
        .map(|((feature_key, normalized), mut claims)| {
            claims.sort_by(|a, b| (&a.author, &a.id).cmp(&(&b.author, &b.id)));
            let classification = if claims.len() == 1 {
                Classification::Premerged
            } else {
                Classification::Competing
            };
            ClaimGroup {
                group_id: group_id_for(&feature_key, &normalized),
                value: claims[0].value.clone(),
                feature_key,
                claims,
                classification,
            }
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum MergeAction {
    Keep,
    Remove,
    SelectEvidence { chosen: Vec<EvidenceId> },
}

impl MergeAction {
    pub fn name(&self) -> &'static str {
        match self {
            MergeAction::Keep => "keep",
            MergeAction::Remove => "remove",
            MergeAction::SelectEvidence { .. } => "select_evidence",
        }
    }

    /// Checks the action against the group and returns it with the chosen
    /// evidence deduplicated into the group's evidence order.
    pub fn validated_for(&self, group: &ClaimGroup) -> Result<MergeAction> {
        let illegal = || Error::IllegalAction {
            action: self.name().to_owned(),
            classification: group.classification.as_str().to_owned(),
        };
        match (self, group.classification) {
            (MergeAction::Remove, _) => Ok(MergeAction::Remove),
            (MergeAction::Keep, Classification::Premerged) => Ok(MergeAction::Keep),
            (MergeAction::Keep, Classification::Competing) => Err(illegal()),
            (MergeAction::SelectEvidence { .. }, Classification::Premerged) => Err(illegal()),
            (MergeAction::SelectEvidence { chosen }, Classification::Competing) => {
                if chosen.is_empty() {
                    return Err(Error::validation(
                        "chosen",
                        "select at least one piece of evidence",
                    ));
                }
                let unknown: Vec<String> = chosen
                    .iter()
                    .filter(|id| !group.has_evidence(id))
                    .map(ToString::to_string)
                    .collect();
                if !unknown.is_empty() {
                    return Err(Error::UnknownEvidence {
                        group_id: group.group_id.to_string(),
                        evidence: unknown,
                    });
                }
                let wanted: BTreeSet<&EvidenceId> = chosen.iter().collect();
                Ok(MergeAction::SelectEvidence {
                    chosen: group
                        .evidence()
                        .filter(|e| wanted.contains(&e.id))
                        .map(|e| e.id.clone())
                        .collect(),
                })
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MergeDecision {
    pub group_id: GroupId,
    pub action: MergeAction,
    pub decided_by: UserId,
    pub decided_at: DateTime<Utc>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    Open,
    Finalized,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MergeSession {
    pub id: SessionId,
    pub template_id: TemplateId,
    pub participants: BTreeSet<UserId>,
    pub source_drafts: BTreeSet<DraftId>,
    pub groups: Vec<ClaimGroup>,
    /// Current decision per group; premerged groups without one are kept.
    pub decisions: BTreeMap<GroupId, MergeDecision>,
    /// Every decision ever applied, in order. Append-only.
    pub log: Vec<MergeDecision>,
    pub status: SessionStatus,
    #[serde(default)]
    pub version: u64,
}

impl MergeSession {
    pub fn group(&self, id: &GroupId) -> Option<&ClaimGroup> {
        self.groups.iter().find(|g| &g.group_id == id)
    }

    /// The action that applies to `group` right now, if any.
    pub fn effective_action(&self, group: &ClaimGroup) -> Option<&MergeAction> {
        match self.decisions.get(&group.group_id) {
            Some(decision) => Some(&decision.action),
            None if group.classification == Classification::Premerged => Some(&MergeAction::Keep),
            None => None,
        }
    }

    pub fn undecided_groups(&self) -> Vec<GroupId> {
        self.groups
            .iter()
            .filter(|g| self.effective_action(g).is_none())
            .map(|g| g.group_id.clone())
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MasterEntry {
    pub feature_key: String,
    pub value: String,
    pub evidence: Vec<Evidence>,
    pub authors: Vec<UserId>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub session_id: SessionId,
    pub decisions: Vec<MergeDecision>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MasterProfile {
    pub template_id: TemplateId,
    pub entries: Vec<MasterEntry>,
    pub provenance: Provenance,
}

impl MasterProfile {
    /// Values recorded for `feature_key`, in entry order.
    pub fn values_of(&self, feature_key: &str) -> Vec<&str> {
        self.entries
            .iter()
            .filter(|e| e.feature_key == feature_key)
            .map(|e| e.value.as_str())
            .collect()
    }
}

/// Builds the master profile a session would finalize into.
pub fn build_master(
    session: &MergeSession,
    features: &BTreeMap<String, FeatureDefinition>,
) -> Result<MasterProfile> {
    let undecided = session.undecided_groups();
    if !undecided.is_empty() {
        return Err(Error::UndecidedGroups {
            groups: undecided.iter().map(ToString::to_string).collect(),
        });
    }

    let mut entries = Vec::new();
    for group in &session.groups {
        let evidence: Vec<Evidence> = match session.effective_action(group) {
            Some(MergeAction::Remove) | None => continue,
            Some(MergeAction::Keep) => group.evidence().cloned().collect(),
            Some(MergeAction::SelectEvidence { chosen }) => group
                .evidence()
                .filter(|e| chosen.contains(&e.id))
                .cloned()
                .collect(),
        };
        entries.push(MasterEntry {
            feature_key: group.feature_key.clone(),
            value: group.value.clone(),
            evidence,
            authors: group.authors(),
        });
    }

    let mut surviving: BTreeMap<&str, Vec<String>> = BTreeMap::new();
    for entry in &entries {
        surviving
            .entry(&entry.feature_key)
            .or_default()
            .push(entry.value.clone());
    }
    let mut conflicts = Vec::new();
    for (key, values) in surviving {
        let def = features.get(key).ok_or_else(|| Error::UnknownFeature {
            key: key.to_owned(),
        })?;
        if def.multiplicity == Multiplicity::Single && values.len() > 1 {
            conflicts.push((key.to_owned(), values));
        }
    }
    if let Some((feature_key, values)) = conflicts.first().cloned() {
        return Err(Error::SingleValueConflict {
            feature_key,
            values,
            all: conflicts,
        });
    }

    Ok(MasterProfile {
        template_id: session.template_id.clone(),
        entries,
        provenance: Provenance {
            session_id: session.id.clone(),
            decisions: session.log.clone(),
        },
    })
}

impl Olympus {
    pub fn open_merge_session(
        &self,
        template_id: &TemplateId,
        participants: &[UserId],
        admin: &UserRef,
    ) -> Result<MergeSession> {
        admin.require(Role::Admin)?;
        if participants.is_empty() {
            return Err(Error::validation("participants", "at least one participant"));
        }
        self.write(|tx| {
            let template = tx.state.template(template_id)?;
            if template.status == TemplateStatus::Merged {
                return Err(Error::TemplateMerged {
                    template_id: template_id.to_string(),
                });
            }
            if let Some(active) = tx
                .state
                .sessions
                .values()
                .find(|s| &s.template_id == template_id && s.status == SessionStatus::Open)
            {
                return Err(Error::Conflict {
                    message: format!(
                        "template {template_id} already has an open merge session {}",
                        active.id
                    ),
                    id: active.id.to_string(),
                });
            }
            let drafts: Vec<&DraftProfile> = tx
                .state
                .drafts
                .values()
                .filter(|d| &d.template_id == template_id && d.is_submitted())
                .collect();
            if drafts.len() < MIN_DRAFTS_TO_MERGE {
                return Err(Error::TooFewDrafts {
                    required: MIN_DRAFTS_TO_MERGE,
                    found: drafts.len(),
                });
            }
            let groups = partition_claims(drafts.iter().copied())?;
            let source_drafts = drafts.iter().map(|d| d.id.clone()).collect();
            let session = MergeSession {
                id: tx.mint(SessionId::PREFIX),
                template_id: template_id.clone(),
                participants: participants.iter().cloned().collect(),
                source_drafts,
                groups,
                decisions: BTreeMap::new(),
                log: Vec::new(),
                status: SessionStatus::Open,
                version: 0,
            };
            tx.state.sessions.insert(session.id.clone(), session.clone());
            Ok(session)
        })
    }

    pub fn get_merge_session(&self, session_id: &SessionId, viewer: &UserRef) -> Result<MergeSession> {
        viewer.require(Role::Admin)?;
        self.snapshot().session(session_id).cloned()
    }

    /// Records (or overwrites) the decision for one group.
    pub fn decide_group(
        &self,
        session_id: &SessionId,
        group_id: &GroupId,
        action: MergeAction,
        participant: &UserRef,
        expected_version: Option<u64>,
    ) -> Result<MergeSession> {
        participant.require(Role::Admin)?;
        self.write(|tx| {
            let decided_at = tx.now();
            let session = tx
                .state
                .sessions
                .get_mut(session_id)
                .ok_or_else(|| Error::not_found("merge session", session_id))?;
            if session.status == SessionStatus::Finalized {
                return Err(Error::SessionClosed {
                    session_id: session_id.to_string(),
                });
            }
            if !session.participants.contains(&participant.id) {
                return Err(Error::NotParticipant {
                    session_id: session_id.to_string(),
                    user_id: participant.id.to_string(),
                });
            }
            if let Some(expected) = expected_version {
                if expected != session.version {
                    return Err(Error::VersionConflict {
                        entity: "merge session",
                        id: session_id.to_string(),
                        expected,
                        actual: session.version,
                    });
                }
            }
            let group = session
                .group(group_id)
                .ok_or_else(|| Error::not_found("group", group_id))?;
            let action = action.validated_for(group)?;
            let decision = MergeDecision {
                group_id: group_id.clone(),
                action,
                decided_by: participant.id.clone(),
                decided_at,
            };
            session.decisions.insert(group_id.clone(), decision.clone());
            session.log.push(decision);
            session.version += 1;
            Ok(session.clone())
        })
    }

    pub fn finalize_master(&self, session_id: &SessionId, admin: &UserRef) -> Result<MasterProfile> {
        admin.require(Role::Admin)?;
        self.write(|tx| {
            let session = tx.state.session(session_id)?;
            if session.status == SessionStatus::Finalized {
                return Err(Error::SessionClosed {
                    session_id: session_id.to_string(),
                });
            }
            let master = build_master(session, &tx.state.features)?;
            let template_id = session.template_id.clone();
            let session = tx.state.sessions.get_mut(session_id).expect("looked up above");
            session.status = SessionStatus::Finalized;
            session.version += 1;
            tx.state
                .templates
                .get_mut(&template_id)
                .ok_or_else(|| Error::not_found("template", &template_id))?
                .status = TemplateStatus::Merged;
            tx.state.masters.insert(template_id, master.clone());
            Ok(master)
        })
    }

    pub fn get_master(&self, template_id: &TemplateId) -> Result<MasterProfile> {
        self.snapshot()
            .masters
            .get(template_id)
            .cloned()
            .ok_or_else(|| Error::UnmergedProduct {
                products: vec![template_id.to_string()],
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ids::ClaimId;
    use crate::model::{DraftStatus, EvidenceLocator, SourceKind};
    use proptest::prelude::*;

    fn evidence(id: &str) -> Evidence {
        Evidence::new(
            EvidenceId::from(id),
            SourceKind::AppUi,
            EvidenceLocator::TextQuote { quote: "screenshot".into() },
            None,
            None,
            "",
        )
        .unwrap()
    }

    fn draft(worker: &str, template: &str, claims: &[(&str, &str)]) -> DraftProfile {
        let id = DraftId::from(format!("drf_{worker}"));
        DraftProfile {
            id: id.clone(),
            template_id: TemplateId::from(template),
            worker: UserId::from(worker),
            claims: claims
                .iter()
                .enumerate()
                .map(|(i, (key, value))| FeatureClaim {
                    id: ClaimId::from(format!("clm_{worker}_{i}")),
                    feature_key: (*key).to_owned(),
                    value: (*value).to_owned(),
                    evidence: vec![evidence(&format!("evd_{worker}_{i}"))],
                    author: UserId::from(worker),
                    draft_id: id.clone(),
                })
                .collect(),
            status: DraftStatus::Submitted,
            version: 0,
        }
    }

    #[test]
    fn fitbit_partition() {
        let drafts = [
            draft("W1", "tpl_fitbit", &[("connectivity", "Bluetooth")]),
            draft("W2", "tpl_fitbit", &[("connectivity", "Bluetooth")]),
            draft("W3", "tpl_fitbit", &[("connectivity", "Wi-Fi")]),
        ];
        let groups = partition_claims(&drafts).unwrap();
        assert_eq!(groups.len(), 2);
        assert_eq!(groups[0].value, "Bluetooth");
        assert_eq!(groups[0].classification, Classification::Competing);
        assert_eq!(groups[0].authors(), vec![UserId::from("W1"), UserId::from("W2")]);
        assert_eq!(groups[1].value, "Wi-Fi");
        assert_eq!(groups[1].classification, Classification::Premerged);
        assert_eq!(groups[1].authors(), vec![UserId::from("W3")]);
        assert_eq!(groups[0].group_id, group_id_for("connectivity", "bluetooth"));
    }

    #[test]
    fn single_draft_is_all_premerged() {
        let d = draft("W1", "t", &[("connectivity", "Bluetooth"), ("sensors", "GPS"), ("display", "OLED")]);
        let groups = partition_claims([&d]).unwrap();
        assert_eq!(groups.len(), 3);
        assert!(groups.iter().all(|g| g.classification == Classification::Premerged));
    }

    #[test]
    fn heart_rate_and_accelerometer_both_premerged() {
        let drafts = [
            draft("W1", "t", &[("sensors", "heart-rate")]),
            draft("W2", "t", &[("sensors", "accelerometer")]),
        ];
        let groups = partition_claims(&drafts).unwrap();
        assert_eq!(groups.len(), 2);
        assert!(groups.iter().all(|g| g.classification == Classification::Premerged));
    }

    #[test]
    fn spelling_variants_share_a_group() {
        let drafts = [
            draft("W2", "t", &[("companion-app", "fitbit app ")]),
            draft("W1", "t", &[("companion-app", "Fitbit App")]),
        ];
        let groups = partition_claims(&drafts).unwrap();
        assert_eq!(groups.len(), 1);
        assert_eq!(groups[0].value, "Fitbit App", "lowest author id spelling wins");
    }

    #[test]
    fn partition_rejections() {
        assert_eq!(partition_claims(Vec::<&DraftProfile>::new()).unwrap_err().code(), "validation");
        let mixed = [draft("W1", "a", &[("x", "1")]), draft("W2", "b", &[("x", "1")])];
        assert_eq!(partition_claims(&mixed).unwrap_err().code(), "mixed_template");
        let mut open = draft("W1", "a", &[("x", "1")]);
        open.status = DraftStatus::InProgress;
        assert_eq!(partition_claims([&open]).unwrap_err().code(), "invalid_state");
    }

    #[test]
    fn actions_are_checked_against_classification() {
        let drafts = [
            draft("W1", "t", &[("connectivity", "Bluetooth")]),
            draft("W2", "t", &[("connectivity", "Bluetooth"), ("connectivity", "Wi-Fi")]),
        ];
        let groups = partition_claims(&drafts).unwrap();
        let (competing, premerged) = (&groups[0], &groups[1]);
        let pick = |ids: &[&str]| MergeAction::SelectEvidence {
            chosen: ids.iter().map(|i| EvidenceId::from(*i)).collect(),
        };
        assert_eq!(pick(&["evd_W2_1"]).validated_for(premerged).unwrap_err().code(), "illegal_action");
        assert_eq!(MergeAction::Keep.validated_for(competing).unwrap_err().code(), "illegal_action");
        assert!(MergeAction::Remove.validated_for(premerged).is_ok());
        assert!(MergeAction::Remove.validated_for(competing).is_ok());
        assert_eq!(pick(&[]).validated_for(competing).unwrap_err().code(), "validation");
        assert_eq!(pick(&["evd_W2_1"]).validated_for(competing).unwrap_err().code(), "unknown_evidence");
        assert_eq!(
            pick(&["evd_W2_0", "evd_W1_0", "evd_W2_0"]).validated_for(competing).unwrap(),
            pick(&["evd_W1_0", "evd_W2_0"])
        );
    }

    /// Independent grouping: linear scan over every claim, classification
    /// by counting distinct authors.
    fn brute_force_groups(drafts: &[DraftProfile]) -> Vec<(String, String, Vec<String>, Classification)> {
        let mut buckets: Vec<(String, String, Vec<&FeatureClaim>)> = Vec::new();
        for d in drafts {
            for c in &d.claims {
                let norm = c.value.trim().to_lowercase();
                match buckets.iter_mut().find(|(k, v, _)| *k == c.feature_key && *v == norm) {
                    Some((_, _, members)) => members.push(c),
                    None => buckets.push((c.feature_key.clone(), norm, vec![c])),
                }
            }
        }
        let mut out: Vec<_> = buckets
            .into_iter()
            .map(|(key, norm, members)| {
                let mut ids: Vec<String> = members.iter().map(|c| c.id.to_string()).collect();
                ids.sort();
                let authors: BTreeSet<&UserId> = members.iter().map(|c| &c.author).collect();
                let class = if authors.len() >= 2 {
                    Classification::Competing
                } else {
                    Classification::Premerged
                };
                (key, norm, ids, class)
            })
            .collect();
        out.sort_by(|a, b| (&a.0, &a.1).cmp(&(&b.0, &b.1)));
        out
    }

    fn arb_drafts(workers: usize, features: usize, values: usize) -> impl Strategy<Value = Vec<DraftProfile>> {
        let claim = (0..features, 0..values, any::<bool>());
        proptest::collection::vec(proptest::collection::vec(claim, 0..12), 1..=workers).prop_map(|per_worker| {
            per_worker
                .into_iter()
                .enumerate()
                .map(|(w, claims)| {
                    let worker = format!("W{w}");
                    let mut seen = BTreeSet::new();
                    let pairs: Vec<(String, String)> = claims
                        .into_iter()
                        .filter(|(f, v, _)| seen.insert((*f, *v)))
                        .map(|(f, v, upper)| {
                            let value = if upper { format!("Value{v}") } else { format!(" value{v}") };
                            (format!("feature-{f}"), value)
                        })
                        .collect();
                    let refs: Vec<(&str, &str)> = pairs.iter().map(|(k, v)| (k.as_str(), v.as_str())).collect();
                    draft(&worker, "tpl_x", &refs)
                })
                .collect()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(300))]

        #[test]
        fn partition_matches_brute_force(drafts in arb_drafts(3, 4, 3)) {
            let groups = partition_claims(&drafts).unwrap();
            let got: Vec<_> = groups
                .iter()
                .map(|g| {
                    let mut ids: Vec<String> = g.claims.iter().map(|c| c.id.to_string()).collect();
                    ids.sort();
                    (g.feature_key.clone(), normalize_value(&g.value), ids, g.classification)
                })
                .collect();
            prop_assert_eq!(got, brute_force_groups(&drafts));
        }

        #[test]
        fn partition_ignores_input_order(drafts in arb_drafts(4, 4, 3), seed in any::<u64>()) {
            let mut shuffled = drafts.clone();
            let n = shuffled.len();
            if n > 1 {
                shuffled.rotate_left((seed as usize) % n);
                shuffled.reverse();
            }
            prop_assert_eq!(partition_claims(&drafts).unwrap(), partition_claims(&shuffled).unwrap());
        }
    }
}
